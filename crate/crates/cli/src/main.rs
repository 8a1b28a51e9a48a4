use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use trajdp::config::{GlOrder, MetricParams, RunConfig};
use trajdp::dp::Mode;
use trajdp::modifier::run_pipeline;
use trajdp::synth::{self, SynthConfig};
use trajdp::{io, Error, Result, Strategy};

#[derive(Parser)]
#[command(name = "trajdp", version, about = "Differentially private trajectory anonymization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Anonymize a trajectory CSV file.
    Anonymize(AnonymizeArgs),
    /// Compare an anonymized file against its original.
    Evaluate(EvaluateArgs),
    /// Time the modification workload under several search strategies.
    Bench(BenchArgs),
    /// Write a synthetic corpus.
    Gen(GenArgs),
}

#[derive(clap::Args)]
struct AnonymizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// JSON run configuration; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// pureG, pureL or GL.
    #[arg(long)]
    mode: Option<Mode>,
    /// Total budget, split evenly in GL mode.
    #[arg(long, conflicts_with_all = ["eps_global", "eps_local"])]
    eps: Option<f64>,
    #[arg(long)]
    eps_global: Option<f64>,
    #[arg(long)]
    eps_local: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    /// Finest grid granularity (cells per side).
    #[arg(long)]
    grid: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// global_first or local_first.
    #[arg(long)]
    gl_order: Option<GlOrder>,
    /// linear, UG, HG_t, HG_b or HG_+.
    #[arg(long)]
    strategy: Option<Strategy>,
    /// Include wall-clock phase timings in the report.
    #[arg(long)]
    report_timings: bool,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EvaluateArgs {
    #[arg(long)]
    original: PathBuf,
    #[arg(long)]
    anonymized: PathBuf,
    /// Grid granularity the anonymized file was produced with.
    #[arg(long, default_value_t = 512)]
    grid: u32,
    #[arg(long, default_value_t = 10)]
    m: usize,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[arg(long, default_value_t = 8)]
    te_grid: u32,
    #[arg(long, default_value_t = 50)]
    ffp_k: usize,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "100,200")]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "linear,UG,HG_t,HG_b,HG_+")]
    strategies: Vec<Strategy>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    avg_len: usize,
    /// Also write the rows as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long)]
    objects: usize,
    #[arg(long, default_value_t = 300)]
    avg_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn run_config(args: &AnonymizeArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => {
            let mode = args
                .mode
                .ok_or_else(|| Error::Config("--mode is required without --config".into()))?;
            let mut c = RunConfig::new(mode, 1.0, 0);
            c.eps = None;
            c
        }
    };
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    if args.eps.is_some() {
        cfg.eps = args.eps;
        cfg.eps_global = None;
        cfg.eps_local = None;
    }
    if args.eps_global.is_some() || args.eps_local.is_some() {
        cfg.eps = None;
        cfg.eps_global = args.eps_global.or(cfg.eps_global);
        cfg.eps_local = args.eps_local.or(cfg.eps_local);
    }
    if let Some(m) = args.m {
        cfg.m = m;
    }
    if let Some(g) = args.grid {
        cfg.granularity = g;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = args.gl_order {
        cfg.gl_order = o;
    }
    if let Some(s) = args.strategy {
        cfg.strategy = s;
    }
    cfg.report_timings |= args.report_timings;
    cfg.validate()?;
    Ok(cfg)
}

fn anonymize(args: AnonymizeArgs) -> Result<()> {
    let cfg = run_config(&args)?;
    let input = io::ingest(&args.input, None, cfg.granularity)?;
    if input.stats.malformed > 0 || input.stats.unsorted_objects > 0 {
        eprintln!(
            "warning: {} malformed lines skipped, {} objects re-sorted by time",
            input.stats.malformed, input.stats.unsorted_objects
        );
    }
    let out = run_pipeline(&input.dataset, &cfg)?;
    io::write_dataset_file(&args.output, &out.dataset, &input.bbox)?;
    let report = json!({ "ingest": input.stats, "run": out.report });
    match &args.report {
        Some(path) => write_json(path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let params = MetricParams {
        m: args.m,
        bins: args.bins,
        te_grid: args.te_grid,
        ffp_k: args.ffp_k,
    };
    params.validate()?;
    let original = io::ingest(&args.original, None, args.grid)?;
    // Same frame as the original so that cells line up.
    let anonymized = io::ingest(&args.anonymized, Some(original.bbox), args.grid)?;
    let report = trajdp::metrics::evaluate(&original.dataset, &anonymized.dataset, &params);
    if !report.excluded.is_empty() {
        eprintln!("warning: {} unpaired objects excluded", report.excluded.len());
    }
    let value = serde_json::to_value(&report)?;
    match &args.report {
        Some(path) => write_json(path, &value)?,
        None => println!("{}", serde_json::to_string_pretty(&value)?),
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let rows = trajdp::bench::run(&args.sizes, args.avg_len, &args.strategies, args.seed)?;
    print!("{}", trajdp::bench::format_table(&rows));
    if let Some(path) = &args.report {
        write_json(path, &serde_json::to_value(&rows)?)?;
    }
    Ok(())
}

fn gen(args: GenArgs) -> Result<()> {
    if args.objects == 0 || args.avg_len == 0 {
        return Err(Error::Config("--objects and --avg-len must be positive".into()));
    }
    let corpus = synth::generate(&SynthConfig::new(args.objects, args.avg_len, args.seed));
    let file = std::fs::File::create(&args.output).map_err(|e| Error::Io {
        path: args.output.display().to_string(),
        source: e,
    })?;
    io::write_samples(std::io::BufWriter::new(file), &corpus.samples)
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Anonymize(a) => anonymize(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Bench(a) => bench(a),
        Command::Gen(a) => gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
