//! `mtsg`: dataset validation, feature export, single runs, benchmark grids,
//! result tables and edge heatmaps.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mtsg_core::bench::{self, BenchConfig, TableScope};
use mtsg_core::edges::EdgeKind;
use mtsg_core::features::NodeKind;
use mtsg_core::models::{load_checkpoint, save_checkpoint, Architecture};
use mtsg_core::training::train_run_with_model;
use mtsg_core::ts_io::{archive_info, Dataset};
use mtsg_core::Error;
use tracing_subscriber::EnvFilter;

#[derive(Parser, Debug)]
#[command(
    name = "mtsg",
    version,
    about = "Graph-based multivariate time series classification benchmark"
)]
struct Cli {
    /// JSON configuration file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding `<Name>/<Name>_TRAIN.ts` and `<Name>_TEST.ts`.
    #[arg(long, global = true)]
    data_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate a dataset, printing its shape as JSON.
    Parse(ParseArgs),
    /// Node feature export.
    #[command(subcommand)]
    Features(FeaturesCommand),
    /// Train and evaluate a single configuration.
    Train(TrainArgs),
    /// Run a benchmark grid, writing one JSON record per run.
    Grid(GridArgs),
    /// Aggregate run records into a result table.
    Table(TableArgs),
    /// Edge weight export for plotting.
    #[command(subcommand)]
    Viz(VizCommand),
}

#[derive(Subcommand, Debug)]
enum FeaturesCommand {
    /// Write node features of one split as long-format CSV.
    Extract(ExtractArgs),
}

#[derive(Subcommand, Debug)]
enum VizCommand {
    /// Write the edge weights of one test sample as CSV and PGM.
    Edges(VizEdgesArgs),
}

#[derive(Args, Debug)]
struct ParseArgs {
    dataset: String,
    /// Sampling frequency in Hz.
    #[arg(long)]
    fs: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Split {
    Train,
    Test,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    dataset: String,
    #[arg(long, default_value = "Raw")]
    node_kind: NodeKind,
    #[arg(long, value_enum, default_value = "train")]
    split: Split,
    #[arg(long)]
    fs: Option<f64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Training settings shared by `train` and `grid`.
#[derive(Args, Debug)]
struct TrainingFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    dataset: String,
    #[arg(long, default_value = "Raw")]
    node_kind: NodeKind,
    #[arg(long, default_value = "CG")]
    edge_kind: EdgeKind,
    #[arg(long, default_value = "GCN")]
    arch: Architecture,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    fs: Option<f64>,
    #[command(flatten)]
    training: TrainingFlags,
    /// Write the run result JSON here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Save the selected model parameters here.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long, value_delimiter = ',')]
    datasets: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    node_kinds: Vec<NodeKind>,
    #[arg(long, value_delimiter = ',')]
    edge_kinds: Vec<EdgeKind>,
    #[arg(long, value_delimiter = ',')]
    archs: Vec<Architecture>,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Reuse finished runs found in the run directory.
    #[arg(long)]
    resume: bool,
    #[command(flatten)]
    training: TrainingFlags,
}

#[derive(Args, Debug)]
struct TableArgs {
    #[arg(long)]
    run_dir: Option<PathBuf>,
    /// Average only over datasets of this problem type, e.g. HAR or EEG.
    #[arg(long, conflicts_with = "dataset")]
    r#type: Option<String>,
    /// Restrict to a single dataset.
    #[arg(long)]
    dataset: Option<String>,
    /// Write markdown here instead of stdout.
    #[arg(long)]
    markdown: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VizEdgesArgs {
    dataset: String,
    #[arg(long, default_value_t = 0)]
    sample: usize,
    #[arg(long, default_value = "CG")]
    edge_kind: EdgeKind,
    /// Node features fed to the learned edge projection (AEL only).
    #[arg(long, default_value = "Raw")]
    node_kind: NodeKind,
    /// Set self-loop weights to zero before export.
    #[arg(long)]
    zero_diagonal: bool,
    /// Trained model, required for AEL.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    fs: Option<f64>,
    /// Output prefix; `.csv` and `.pgm` are appended.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::CheckpointRequired) => 1,
        Some(err) if err.is_data_error() => 2,
        _ => 3,
    }
}

fn base_config(cli: &Cli) -> Result<BenchConfig> {
    let mut cfg = match &cli.config {
        Some(path) => BenchConfig::from_file(path)?,
        None => BenchConfig::default(),
    };
    cfg.data_root_override = cli.data_root.clone();
    Ok(cfg)
}

fn load(cfg: &mut BenchConfig, name: &str, fs: Option<f64>) -> Result<Dataset> {
    if let Some(fs) = fs {
        cfg.fs.insert(name.to_string(), fs);
    }
    Ok(cfg.load(name)?)
}

fn apply_training(cfg: &mut BenchConfig, flags: &TrainingFlags) {
    let t = &mut cfg.training;
    if let Some(v) = flags.epochs {
        t.epochs = v;
    }
    if let Some(v) = flags.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = flags.lr {
        t.lr0 = v;
    }
    if let Some(v) = flags.layers {
        t.layers = v;
    }
    if let Some(v) = flags.hidden {
        t.hidden = v;
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = base_config(&cli)?;
    match cli.command {
        Command::Parse(a) => {
            let ds = load(&mut cfg, &a.dataset, a.fs)?;
            let m = &ds.meta;
            let expected = archive_info(&m.name);
            let summary = serde_json::json!({
                "name": m.name,
                "train": ds.train.len(),
                "test": ds.test.len(),
                "dimensions": m.dimensions,
                "length": m.length,
                "classes": m.num_classes,
                "labels": m.labels,
                "sampling_frequency": m.sampling_frequency,
                "matches_archive": expected.map(|e| {
                    e.train == ds.train.len()
                        && e.test == ds.test.len()
                        && e.dimensions == m.dimensions
                        && e.length == m.length
                        && e.classes == m.num_classes
                }),
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Features(FeaturesCommand::Extract(a)) => {
            let ds = load(&mut cfg, &a.dataset, a.fs)?;
            let split = match a.split {
                Split::Train => &ds.train,
                Split::Test => &ds.test,
            };
            let csv = bench::features_csv(&ds, split, a.node_kind, &cfg.training.features)?;
            write_or_print(a.out.as_deref(), &csv)?;
        }
        Command::Train(a) => {
            apply_training(&mut cfg, &a.training);
            let ds = load(&mut cfg, &a.dataset, a.fs)?;
            let mut run = cfg.training.clone();
            run.dataset = ds.meta.name.clone();
            run.node_kind = a.node_kind;
            run.edge_kind = a.edge_kind;
            run.architecture = a.arch;
            run.seed = a.seed;
            let (result, model) = train_run_with_model(&run, &ds)?;
            if let Some(path) = &a.checkpoint {
                save_checkpoint(&model, path)?;
            }
            let json = serde_json::to_string_pretty(&result)?;
            if let Some(path) = &a.out {
                bench::write_atomic(path, json.as_bytes())?;
            }
            println!("{json}");
        }
        Command::Grid(a) => {
            apply_training(&mut cfg, &a.training);
            let g = &mut cfg.grid;
            if !a.datasets.is_empty() {
                g.datasets = a.datasets;
            }
            if !a.node_kinds.is_empty() {
                g.node_kinds = a.node_kinds;
            }
            if !a.edge_kinds.is_empty() {
                g.edge_kinds = a.edge_kinds;
            }
            if !a.archs.is_empty() {
                g.architectures = a.archs;
            }
            if !a.seeds.is_empty() {
                g.seeds = a.seeds;
            }
            if g.datasets.is_empty() {
                return Err(Error::Config("no datasets given".into()).into());
            }
            if let Some(d) = a.run_dir {
                cfg.run_dir = d;
            }
            if a.workers.is_some() {
                cfg.workers = a.workers;
            }
            let out = bench::run_grid(&cfg, a.resume)?;
            let failed = out.records.iter().filter(|r| !r.succeeded()).count();
            println!(
                "{} runs ({} reused, {} failed), {} cells, {} skipped for lack of a sampling frequency",
                out.records.len(),
                out.reused,
                failed,
                out.summaries.len(),
                out.skipped.len()
            );
        }
        Command::Table(a) => {
            let run_dir = a.run_dir.unwrap_or(cfg.run_dir);
            let records = bench::load_records(&run_dir)?;
            let scope = match (a.r#type, a.dataset) {
                (Some(t), _) => TableScope::Type(t),
                (None, Some(d)) => TableScope::Dataset(d),
                (None, None) => TableScope::All,
            };
            let table = bench::build_table(&bench::summarize(&records), &scope)?;
            write_or_print(a.markdown.as_deref(), &table.markdown())?;
            if let Some(path) = &a.csv {
                write_or_print(Some(path), &table.csv())?;
            }
        }
        Command::Viz(VizCommand::Edges(a)) => {
            let ds = load(&mut cfg, &a.dataset, a.fs)?;
            let model = a.checkpoint.as_deref().map(load_checkpoint).transpose()?;
            let w = bench::export_edge_viz(
                &ds,
                a.sample,
                a.edge_kind,
                a.node_kind,
                a.zero_diagonal,
                model.as_ref(),
                &cfg.training.features,
                &a.out,
            )?;
            eprintln!(
                "wrote {0}.csv and {0}.pgm ({1}x{1})",
                a.out.display(),
                w.rows()
            );
        }
    }
    Ok(())
}
