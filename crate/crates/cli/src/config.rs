use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use streamgconv::dataset::SplitName;
use streamgconv::models::{ConvBiGruConfig, StreamConfig};
use streamgconv::synthetic::SyntheticConfig;
use streamgconv::training::TrainConfig;

/// Explicit split boundaries as ISO-8601 timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitTimes {
    pub train_start: String,
    pub validation_start: String,
    pub test_start: String,
    pub test_end: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub series: Option<PathBuf>,
    /// Series file holds sub-hourly readings to aggregate.
    pub raw: bool,
    pub graph: Option<PathBuf>,
    pub inverse_distance: bool,
    pub cache: Option<PathBuf>,
    pub model: Option<String>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub reports: Vec<PathBuf>,
    pub svg: Option<PathBuf>,
    pub anchor: Option<String>,
    pub out: Option<PathBuf>,
    pub split: SplitName,
    pub seed: u64,
    pub t_in: usize,
    pub t_out: usize,
    /// Used when `splits` is absent: fractions of the outlet record by time.
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub splits: Option<SplitTimes>,
    pub train: TrainConfig,
    pub stream: StreamConfig,
    pub conv_bigru: ConvBiGruConfig,
    pub synthetic: SyntheticConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            series: None,
            raw: false,
            graph: None,
            inverse_distance: true,
            cache: None,
            model: None,
            checkpoint: None,
            report: None,
            reports: Vec::new(),
            svg: None,
            anchor: None,
            out: None,
            split: SplitName::Test,
            seed: 0,
            t_in: 36,
            t_out: 36,
            train_fraction: 0.75,
            validation_fraction: 0.125,
            splits: None,
            train: TrainConfig::default(),
            stream: StreamConfig::default(),
            conv_bigru: ConvBiGruConfig::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Command-line flags; each one that is present replaces the config value.
#[derive(Args, Debug, Default)]
pub struct Overrides {
    /// JSON file with RunConfig fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub series: Option<PathBuf>,
    /// Treat --series as sub-hourly readings and aggregate them to hours.
    #[arg(long, global = true)]
    pub raw: bool,
    #[arg(long, global = true)]
    pub graph: Option<PathBuf>,
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// stream_gconvgru, conv_bigru or persistence.
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Report CSVs to merge, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub reports: Vec<PathBuf>,
    #[arg(long, global = true)]
    pub svg: Option<PathBuf>,
    /// Forecast issue time, ISO-8601.
    #[arg(long, global = true)]
    pub anchor: Option<String>,
    /// Output directory (generate-synthetic) or file (predict).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// train, validation or test.
    #[arg(long, global = true)]
    pub split: Option<SplitName>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    #[arg(long, global = true)]
    pub hidden_size: Option<usize>,
    #[arg(long, global = true)]
    pub cheb_k: Option<usize>,
    /// Synthetic series length.
    #[arg(long, global = true)]
    pub hours: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, c: &mut RunConfig) -> Result<()> {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        let wrap = |v: &Option<PathBuf>| v.clone().map(Some);
        set(&mut c.series, &wrap(&self.series));
        set(&mut c.graph, &wrap(&self.graph));
        set(&mut c.cache, &wrap(&self.cache));
        set(&mut c.checkpoint, &wrap(&self.checkpoint));
        set(&mut c.report, &wrap(&self.report));
        set(&mut c.svg, &wrap(&self.svg));
        set(&mut c.out, &wrap(&self.out));
        set(&mut c.model, &self.model.clone().map(Some));
        set(&mut c.anchor, &self.anchor.clone().map(Some));
        c.raw |= self.raw;
        if !self.reports.is_empty() {
            c.reports = self.reports.clone();
        }
        set(&mut c.split, &self.split);
        set(&mut c.seed, &self.seed);
        set(&mut c.train.max_epochs, &self.epochs);
        set(&mut c.train.batch_size, &self.batch_size);
        set(&mut c.train.learning_rate, &self.learning_rate);
        set(&mut c.stream.hidden_size, &self.hidden_size);
        set(&mut c.stream.cheb_k, &self.cheb_k);
        set(&mut c.synthetic.hours, &self.hours);
        c.train.seed = c.seed;
        c.train.validate()?;
        Ok(())
    }
}
