use crate::error::{Error, Result};

/// Repeats the last value of `history` for every lead up to `horizon`.
pub fn persistence_forecast(history: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let Some(&last) = history.last() else {
        return Err(Error::InvalidArgument("persistence needs a non-empty history".into()));
    };
    if horizon == 0 {
        return Err(Error::InvalidArgument("persistence horizon must be positive".into()));
    }
    Ok(vec![last; horizon])
}
