use serde::{Deserialize, Serialize};

use super::{format_timestamp, SensorSeries};
use crate::error::{Error, Result};

/// Upper end of the normalized range; the lower end is 0.
pub const NORMALIZED_MAX: f64 = 4.0;

/// `4·(x − lo)/(hi − lo)`. Values outside `[lo, hi]` are not clipped.
pub fn normalize(x: f64, lo: f64, hi: f64) -> Result<f64> {
    check_range(lo, hi)?;
    Ok(NORMALIZED_MAX * (x - lo) / (hi - lo))
}

/// Inverse of [`normalize`].
pub fn denormalize(y: f64, lo: f64, hi: f64) -> Result<f64> {
    check_range(lo, hi)?;
    Ok(lo + y * (hi - lo) / NORMALIZED_MAX)
}

fn check_range(lo: f64, hi: f64) -> Result<()> {
    if hi > lo && lo.is_finite() && hi.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "normalization range requires hi > lo, got lo={lo}, hi={hi}"
        )))
    }
}

/// Min/max of outlet streamflow and outlet-watershed precipitation over the
/// training window. Both pairs satisfy `max > min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationConstants {
    pub q_min: f64,
    pub q_max: f64,
    pub p_min: f64,
    pub p_max: f64,
}

impl NormalizationConstants {
    pub fn new(q_min: f64, q_max: f64, p_min: f64, p_max: f64) -> Result<Self> {
        check_range(q_min, q_max)?;
        check_range(p_min, p_max)?;
        Ok(NormalizationConstants {
            q_min,
            q_max,
            p_min,
            p_max,
        })
    }

    pub fn flow(&self, q: f64) -> f64 {
        NORMALIZED_MAX * (q - self.q_min) / (self.q_max - self.q_min)
    }

    pub fn flow_inverse(&self, y: f64) -> f64 {
        self.q_min + y * (self.q_max - self.q_min) / NORMALIZED_MAX
    }

    pub fn precip(&self, p: f64) -> f64 {
        NORMALIZED_MAX * (p - self.p_min) / (self.p_max - self.p_min)
    }

    pub fn precip_inverse(&self, y: f64) -> f64 {
        self.p_min + y * (self.p_max - self.p_min) / NORMALIZED_MAX
    }
}

/// Computes constants from the outlet's observations with timestamps in
/// `[train_start, train_end)`.
pub fn compute_normalization(
    outlet: &SensorSeries,
    train_start: i64,
    train_end: i64,
) -> Result<NormalizationConstants> {
    let window = outlet
        .points()
        .iter()
        .filter(|p| p.timestamp >= train_start && p.timestamp < train_end);
    let (mut q, mut p) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
    for pt in window {
        if let Some(v) = pt.streamflow {
            q = (q.0.min(v), q.1.max(v));
        }
        if let Some(v) = pt.precip {
            p = (p.0.min(v), p.1.max(v));
        }
    }
    let describe = || {
        format!(
            "sensor {} in [{}, {})",
            outlet.sensor_id(),
            format_timestamp(train_start),
            format_timestamp(train_end)
        )
    };
    if !(q.1 > q.0) {
        return Err(Error::Dataset(format!(
            "streamflow has fewer than two distinct values for {}",
            describe()
        )));
    }
    if !(p.1 > p.0) {
        return Err(Error::Dataset(format!(
            "precipitation has fewer than two distinct values for {}",
            describe()
        )));
    }
    NormalizationConstants::new(q.0, q.1, p.0, p.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::HourlyPoint;
    use proptest::prelude::*;

    #[test]
    fn maps_training_range_to_zero_four() {
        assert_eq!(normalize(10.0, 10.0, 510.0).unwrap(), 0.0);
        assert_eq!(normalize(510.0, 10.0, 510.0).unwrap(), 4.0);
        assert_eq!(normalize(260.0, 10.0, 510.0).unwrap(), 2.0);
        // hi + (hi - lo)/4 lands one unit above the top of the range
        assert_eq!(normalize(635.0, 10.0, 510.0).unwrap(), 5.0);
        assert!(normalize(1.0, 2.0, 2.0).is_err());
        assert!(denormalize(1.0, 3.0, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn denormalize_inverts_normalize(x in -1e3f64..1e3, lo in -100f64..100.0, span in 1f64..1e3) {
            let hi = lo + span;
            let back = denormalize(normalize(x, lo, hi).unwrap(), lo, hi).unwrap();
            let scale = x.abs().max(lo.abs()).max(hi.abs()).max(1.0);
            prop_assert!((back - x).abs() <= 1e-12 * scale);
        }
    }

    fn series(values: &[(Option<f64>, Option<f64>)]) -> SensorSeries {
        let points = values
            .iter()
            .enumerate()
            .map(|(i, &(q, p))| HourlyPoint {
                timestamp: i as i64 * 3600,
                streamflow: q,
                precip: p,
            })
            .collect();
        SensorSeries::new("out", points).unwrap()
    }

    #[test]
    fn constants_from_training_window_only() {
        let s = series(&[
            (Some(10.0), Some(0.0)),
            (Some(510.0), Some(3.0)),
            (None, Some(1.0)),
            (Some(9999.0), Some(50.0)),
        ]);
        let c = compute_normalization(&s, 0, 3 * 3600).unwrap();
        assert_eq!((c.q_min, c.q_max, c.p_min, c.p_max), (10.0, 510.0, 0.0, 3.0));
    }

    #[test]
    fn constant_series_is_rejected() {
        let s = series(&[(Some(5.0), Some(0.0)), (Some(5.0), Some(1.0))]);
        assert!(compute_normalization(&s, 0, 7200).is_err());
    }
}
