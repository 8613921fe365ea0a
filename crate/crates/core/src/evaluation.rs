//! Nash-Sutcliffe efficiency, per-lead evaluation over a split, and CSV/SVG
//! reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetSplit, NormalizationConstants, SplitName};
use crate::error::{Error, Result};
use crate::models::Forecaster;

pub const REPORT_HEADER: &str = "lead_hour,nse,samples";

/// NSE, or a marker when the observations have zero variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NseScore {
    Value(f64),
    Degenerate,
}

impl NseScore {
    pub fn value(&self) -> Option<f64> {
        match *self {
            NseScore::Value(v) => Some(v),
            NseScore::Degenerate => None,
        }
    }
}

/// `1 − Σ(m − o)² / Σ(o − ō)²`.
pub fn nse(modeled: &[f64], observed: &[f64]) -> Result<NseScore> {
    if modeled.len() != observed.len() || observed.is_empty() {
        return Err(Error::shape("nse", &[modeled.len()], &[observed.len()]));
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (m, o) in modeled.iter().zip(observed) {
        num += (m - o) * (m - o);
        den += (o - mean) * (o - mean);
    }
    if den == 0.0 {
        return Ok(NseScore::Degenerate);
    }
    Ok(NseScore::Value(1.0 - num / den))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadScore {
    /// 1-based lead hour.
    pub lead: usize,
    pub nse: NseScore,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NseReport {
    pub model: String,
    pub split: String,
    pub leads: Vec<LeadScore>,
}

impl NseReport {
    /// Mean NSE over leads `from..=to`, skipping degenerate leads.
    pub fn mean_nse(&self, from: usize, to: usize) -> Option<f64> {
        let vals: Vec<f64> = self
            .leads
            .iter()
            .filter(|l| l.lead >= from && l.lead <= to)
            .filter_map(|l| l.nse.value())
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn lead(&self, lead: usize) -> Option<&LeadScore> {
        self.leads.get(lead.checked_sub(1)?)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        for l in &self.leads {
            let v = l.nse.value().map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{}", l.lead, v, l.samples);
        }
        s
    }
}

/// Pools outlet predictions and observations across the split per lead hour
/// and scores each lead in physical units.
pub fn per_lead_evaluation(
    forecaster: &dyn Forecaster,
    split: &DatasetSplit,
    normalization: &NormalizationConstants,
    outlet: usize,
) -> Result<NseReport> {
    let first = split
        .snapshots
        .first()
        .ok_or_else(|| Error::Dataset(format!("{} split is empty", split.name.as_str())))?;
    let t_out = first.t_out();
    let mut modeled = vec![Vec::with_capacity(split.len()); t_out];
    let mut observed = vec![Vec::with_capacity(split.len()); t_out];
    for snap in &split.snapshots {
        let pred = forecaster.forecast(snap, outlet)?;
        if pred.len() != t_out {
            return Err(Error::shape("forecast", &[pred.len()], &[t_out]));
        }
        for (k, (&p, &o)) in pred.iter().zip(snap.target_row(outlet)).enumerate() {
            modeled[k].push(normalization.flow_inverse(p));
            observed[k].push(normalization.flow_inverse(o));
        }
    }
    let leads = (0..t_out)
        .map(|k| {
            Ok(LeadScore {
                lead: k + 1,
                nse: nse(&modeled[k], &observed[k])?,
                samples: observed[k].len(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(NseReport {
        model: forecaster.name(),
        split: split.name.as_str().to_string(),
        leads,
    })
}

pub fn write_report_csv(path: impl AsRef<Path>, report: &NseReport) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, report.to_csv()).map_err(|e| Error::io(path, e))
}

/// Reads a report CSV; model name and split are supplied by the caller.
pub fn read_report_csv(path: impl AsRef<Path>, model: &str, split: SplitName) -> Result<NseReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line: line as u64,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == REPORT_HEADER => {}
        _ => return Err(parse_err(1, format!("expected header `{REPORT_HEADER}`"))),
    }
    let mut leads = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(parse_err(i + 1, format!("expected 3 columns, found {}", cols.len())));
        }
        let lead = cols[0]
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad lead hour `{}`", cols[0])))?;
        let nse = if cols[1].is_empty() {
            NseScore::Degenerate
        } else {
            NseScore::Value(
                cols[1]
                    .parse()
                    .map_err(|_| parse_err(i + 1, format!("bad NSE `{}`", cols[1])))?,
            )
        };
        let samples = cols[2]
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad sample count `{}`", cols[2])))?;
        leads.push(LeadScore { lead, nse, samples });
    }
    Ok(NseReport {
        model: model.to_string(),
        split: split.as_str().to_string(),
        leads,
    })
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Line chart of NSE against lead hour, one polyline per contiguous run of
/// non-degenerate leads, plus a legend.
pub fn render_svg(reports: &[NseReport]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 420.0;
    const LEFT: f64 = 60.0;
    const RIGHT: f64 = 170.0;
    const TOP: f64 = 20.0;
    const BOTTOM: f64 = 50.0;

    let max_lead = reports
        .iter()
        .flat_map(|r| r.leads.iter().map(|l| l.lead))
        .max()
        .unwrap_or(1)
        .max(2);
    let values = reports.iter().flat_map(|r| r.leads.iter().filter_map(|l| l.nse.value()));
    let y_min = values.fold(0.0_f64, f64::min).floor().max(-10.0);
    let y_max = 1.0;
    let x = |lead: usize| LEFT + (lead - 1) as f64 / (max_lead - 1) as f64 * (W - LEFT - RIGHT);
    let y = |v: f64| TOP + (y_max - v.max(y_min)) / (y_max - y_min) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (x0, x1, yb) = (LEFT, W - RIGHT, H - BOTTOM);
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black"><line x1="{x0}" y1="{yb}" x2="{x1}" y2="{yb}"/><line x1="{x0}" y1="{TOP}" x2="{x0}" y2="{yb}"/></g>"#
    );
    let steps = 4;
    for i in 0..=steps {
        let v = y_min + (y_max - y_min) * i as f64 / steps as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
            LEFT - 6.0,
            y(v) + 4.0
        );
    }
    for lead in (1..=max_lead).filter(|l| *l == 1 || l % 6 == 0) {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{lead}</text>"#,
            x(lead),
            yb + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{}" text-anchor="middle">lead hour</text>"#,
        (x0 + x1) / 2.0,
        H - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">NSE</text>"#,
        (TOP + yb) / 2.0,
        (TOP + yb) / 2.0
    );

    for (i, report) in reports.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut segments: Vec<Vec<(usize, f64)>> = vec![Vec::new()];
        for l in &report.leads {
            match l.nse.value() {
                Some(v) => segments.last_mut().expect("non-empty").push((l.lead, v)),
                None => segments.push(Vec::new()),
            }
        }
        let _ = writeln!(s, r#"<g class="series" data-model="{}">"#, xml_escape(&report.model));
        for seg in segments.iter().filter(|seg| !seg.is_empty()) {
            let points: Vec<String> = seg
                .iter()
                .map(|&(lead, v)| format!("{:.2},{:.2}", x(lead), y(v)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                points.join(" ")
            );
        }
        let _ = writeln!(s, "</g>");
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = W - RIGHT + 15.0;
        let _ = writeln!(
            s,
            r#"<g class="legend"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text></g>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            xml_escape(&report.model)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
