//! `streamgconv`: synthetic data generation, dataset building, training,
//! evaluation, prediction and plotting.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use streamgconv::dataset::{
    aggregate_hourly, build_cache, format_timestamp, load_graph, load_raw_series, load_series, parse_timestamp,
    read_cache, write_cache, GraphOptions, SeriesSet, SnapshotCache, SplitBoundaries, SECONDS_PER_HOUR,
};
use streamgconv::evaluation::{per_lead_evaluation, read_report_csv, render_svg, write_report_csv, NseReport};
use streamgconv::graph::{scaled_laplacian, ScaledLaplacian, SensorGraph};
use streamgconv::models::{
    load_checkpoint, ConvBiGru, Forecaster, Model, ModelCheckpoint, ModelForecaster, ModelKind, Persistence,
    StreamGConvGru,
};
use streamgconv::synthetic::generate;
use streamgconv::training::{train, TrainingData};

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "streamgconv", version, about = "Graph convolutional GRU streamflow forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Write a synthetic river network (series.csv, graph.csv) into --out.
    GenerateSynthetic,
    /// Normalize, window and split the series into a snapshot cache.
    BuildDataset,
    /// Train a model and write the best-on-validation checkpoint.
    Train,
    /// Per-lead NSE report for one model on one split.
    Evaluate,
    /// Denormalized outlet hydrograph for one anchor hour.
    Predict,
    /// Merge report CSVs into one SVG chart.
    Plot,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.overrides.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut config)?;
    eprintln!("resolved config: {}", serde_json::to_string(&config)?);
    match cli.command {
        Command::GenerateSynthetic => cmd_generate(&config),
        Command::BuildDataset => cmd_build_dataset(&config),
        Command::Train => cmd_train(&config),
        Command::Evaluate => cmd_evaluate(&config),
        Command::Predict => cmd_predict(&config),
        Command::Plot => cmd_plot(&config),
    }
}

trait PathContext<T> {
    fn path_context(self, what: &str, path: &Path) -> Result<T>;
}

impl<T> PathContext<T> for streamgconv::Result<T> {
    fn path_context(self, what: &str, path: &Path) -> Result<T> {
        self.map_err(|e| {
            let shown = path.display().to_string();
            if e.to_string().contains(&shown) {
                anyhow::Error::new(e).context(what.to_string())
            } else {
                anyhow::Error::new(e).context(format!("{what} {shown}"))
            }
        })
    }
}

fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| anyhow!("missing required --{flag} (or `{}` in the config file)", flag.replace('-', "_")))
}

fn cmd_generate(config: &RunConfig) -> Result<()> {
    let out = require(&config.out, "out")?;
    let data = generate(&config.synthetic, config.seed)?;
    let (series, graph) = data.write(out)?;
    println!("series,{}", series.display());
    println!("graph,{}", graph.display());
    Ok(())
}

fn graph_options(config: &RunConfig) -> GraphOptions {
    GraphOptions {
        inverse_distance: config.inverse_distance,
    }
}

fn load_graph_arg(config: &RunConfig) -> Result<SensorGraph> {
    let path = require(&config.graph, "graph")?;
    load_graph(path, graph_options(config)).path_context("loading graph", path)
}

fn load_series_arg(config: &RunConfig) -> Result<SeriesSet> {
    let path = require(&config.series, "series")?;
    if !config.raw {
        return load_series(path).path_context("loading series", path);
    }
    let raw = load_raw_series(path).path_context("loading raw series", path)?;
    raw.iter()
        .map(|(id, readings)| Ok((id.clone(), aggregate_hourly(id, readings)?)))
        .collect()
}

fn boundaries(config: &RunConfig, series: &SeriesSet, graph: &SensorGraph) -> Result<SplitBoundaries> {
    if let Some(s) = &config.splits {
        let ts = |name: &str, v: &str| {
            parse_timestamp(v).ok_or_else(|| anyhow!("split boundary {name} `{v}` is not a valid timestamp"))
        };
        return Ok(SplitBoundaries::new(
            ts("train_start", &s.train_start)?,
            ts("validation_start", &s.validation_start)?,
            ts("test_start", &s.test_start)?,
            ts("test_end", &s.test_end)?,
        )?);
    }
    let outlet_id = graph.sensor_id(graph.outlet());
    let outlet = series
        .get(outlet_id)
        .ok_or_else(|| anyhow!("outlet sensor {outlet_id} has no series"))?;
    let (first, last) = outlet
        .first_timestamp()
        .zip(outlet.last_timestamp())
        .ok_or_else(|| anyhow!("outlet sensor {outlet_id} has an empty series"))?;
    let hours = ((last - first) / SECONDS_PER_HOUR + 1) as usize;
    Ok(SplitBoundaries::by_fraction(
        first,
        hours,
        config.train_fraction,
        config.validation_fraction,
    )?)
}

fn cmd_build_dataset(config: &RunConfig) -> Result<()> {
    let cache_path = require(&config.cache, "cache")?;
    let graph = load_graph_arg(config)?;
    let series = load_series_arg(config)?;
    let b = boundaries(config, &series, &graph)?;
    let cache = build_cache(&series, &graph, config.t_in, config.t_out, b)?;
    write_cache(cache_path, &cache)?;
    for split in cache.splits.iter() {
        println!("{},{}", split.name.as_str(), split.len());
    }
    if cache.splits.dropped > 0 {
        println!("dropped,{}", cache.splits.dropped);
    }
    Ok(())
}

fn load_cache_arg(config: &RunConfig) -> Result<SnapshotCache> {
    let cache_path = require(&config.cache, "cache")?;
    read_cache(cache_path).path_context("reading cache", cache_path)
}

/// Cache plus the Laplacian of a graph that matches it.
fn load_inputs(config: &RunConfig) -> Result<(SnapshotCache, ScaledLaplacian)> {
    let cache = load_cache_arg(config)?;
    let graph = load_graph_arg(config)?;
    let lap = scaled_laplacian(&graph)?;
    if lap.graph_fingerprint() != cache.graph_fingerprint {
        bail!(
            "graph {} does not match the graph the cache was built from (fingerprint {} vs {})",
            config.graph.as_deref().unwrap_or(Path::new("?")).display(),
            lap.graph_fingerprint(),
            cache.graph_fingerprint
        );
    }
    Ok((cache, lap))
}

fn model_kind(config: &RunConfig) -> Result<ModelKind> {
    config
        .model
        .as_deref()
        .ok_or_else(|| anyhow!("missing required --model (stream_gconvgru, conv_bigru or persistence)"))?
        .parse()
        .map_err(Into::into)
}

fn cmd_train(config: &RunConfig) -> Result<()> {
    let checkpoint = require(&config.checkpoint, "checkpoint")?;
    let (cache, lap) = load_inputs(config)?;
    let seed = config.train.seed;
    let model = match model_kind(config)? {
        ModelKind::StreamGconvgru => {
            let mut c = config.stream;
            c.t_in = cache.t_in;
            c.t_out = cache.t_out;
            Model::StreamGConvGru(StreamGConvGru::init(c, &lap, seed)?)
        }
        ModelKind::ConvBigru => {
            let mut c = config.conv_bigru;
            c.in_channels = 3 * cache.num_nodes;
            c.t_in = cache.t_in;
            c.t_out = cache.t_out;
            Model::ConvBiGru(ConvBiGru::init(c, seed)?)
        }
        ModelKind::Persistence => bail!("persistence has no parameters to train"),
    };
    let mut train_config = config.train.clone();
    train_config.checkpoint_path = Some(checkpoint.to_path_buf());
    let data = TrainingData {
        train: &cache.splits.train.snapshots,
        validation: &cache.splits.validation.snapshots,
        laplacian: &lap,
        outlet: cache.outlet,
        normalization: cache.normalization,
    };
    let outcome = train(model, data, &train_config, |r| eprintln!("{}", r.log_line()))?;
    println!(
        "best_epoch,{},val_loss,{},checkpoint,{}",
        outcome.best.training.epoch,
        outcome.best.training.validation_loss,
        checkpoint.display()
    );
    Ok(())
}

fn load_checked_checkpoint(config: &RunConfig, cache: &SnapshotCache, lap: &ScaledLaplacian) -> Result<ModelCheckpoint> {
    let path = require(&config.checkpoint, "checkpoint")?;
    let ckpt = load_checkpoint(path).path_context("loading checkpoint", path)?;
    ckpt.verify_graph(lap)?;
    if ckpt.normalization != cache.normalization {
        bail!(
            "checkpoint normalization {:?} differs from the dataset's {:?}",
            ckpt.normalization,
            cache.normalization
        );
    }
    Ok(ckpt)
}

fn cmd_evaluate(config: &RunConfig) -> Result<()> {
    let report_path = require(&config.report, "report")?;
    let kind = model_kind(config)?;
    let (cache, lap) = if kind == ModelKind::Persistence {
        (load_cache_arg(config)?, None)
    } else {
        let (cache, lap) = load_inputs(config)?;
        (cache, Some(lap))
    };
    let split = cache.split(config.split);
    let report: NseReport = if let Some(lap) = &lap {
        let ckpt = load_checked_checkpoint(config, &cache, lap)?;
        if ckpt.model.kind() != kind {
            bail!("checkpoint holds a {} model, not {kind}", ckpt.model.kind());
        }
        let f = ModelForecaster {
            model: &ckpt.model,
            laplacian: lap,
        };
        per_lead_evaluation(&f, split, &cache.normalization, cache.outlet)?
    } else {
        let f = Persistence { horizon: cache.t_out };
        per_lead_evaluation(&f, split, &cache.normalization, cache.outlet)?
    };
    write_report_csv(report_path, &report)?;
    let summary = |from, to| {
        report
            .mean_nse(from, to)
            .map_or_else(|| "degenerate".to_string(), |v| v.to_string())
    };
    println!(
        "model,{},split,{},samples,{},mean_nse_1_{},{}",
        report.model,
        report.split,
        split.len(),
        cache.t_out,
        summary(1, cache.t_out)
    );
    Ok(())
}

fn cmd_predict(config: &RunConfig) -> Result<()> {
    let anchor_text = config
        .anchor
        .as_deref()
        .ok_or_else(|| anyhow!("missing required --anchor <iso8601>"))?;
    let anchor = parse_timestamp(anchor_text).ok_or_else(|| anyhow!("invalid anchor timestamp `{anchor_text}`"))?;
    let (cache, lap) = load_inputs(config)?;
    let snapshot = cache
        .find(anchor)
        .ok_or_else(|| anyhow!("no valid snapshot at anchor {}", format_timestamp(anchor)))?;
    let kind = model_kind(config).unwrap_or(ModelKind::StreamGconvgru);
    let forecast = if kind == ModelKind::Persistence {
        Persistence { horizon: cache.t_out }.forecast(snapshot, cache.outlet)?
    } else {
        let ckpt = load_checked_checkpoint(config, &cache, &lap)?;
        ModelForecaster {
            model: &ckpt.model,
            laplacian: &lap,
        }
        .forecast(snapshot, cache.outlet)?
    };
    let mut csv = String::from("timestamp,streamflow_cfs\n");
    for (k, v) in forecast.iter().enumerate() {
        let ts = anchor + (k as i64 + 1) * SECONDS_PER_HOUR;
        csv.push_str(&format!(
            "{},{}\n",
            format_timestamp(ts),
            cache.normalization.flow_inverse(*v)
        ));
    }
    match &config.out {
        Some(path) => fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(())
}

fn cmd_plot(config: &RunConfig) -> Result<()> {
    let svg_path = require(&config.svg, "svg")?;
    if config.reports.is_empty() {
        bail!("missing --reports <csv>[,<csv>...]");
    }
    let reports = config
        .reports
        .iter()
        .map(|path| {
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            read_report_csv(path, &name, config.split).path_context("reading report", path)
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = svg_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(svg_path, render_svg(&reports)).with_context(|| format!("writing {}", svg_path.display()))?;
    println!("svg,{}", svg_path.display());
    Ok(())
}
