use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use loocv_core::data::{load_csv, CsvOptions};
use loocv_core::diagnostics::{assumption_report, second_deriv_certificate};
use loocv_core::experiments::{self, ExperimentConfig, ExperimentKind, Scale};
use loocv_core::loocv::{problem_hash, GridSpec, LoocvCurve};
use loocv_core::model::{pcr_truncate, standardize, StandardizedDataset};
use loocv_core::qvx::{classify, ClassifyConfig};
use loocv_core::util::sha256_hex;
use serde::Serialize;
use serde_json::json;

/// Version of the CSV/JSON output layout.
const FORMAT_VERSION: u32 = 1;
const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (loocv-core ",
    env!("CARGO_PKG_VERSION"),
    ", output format 1)"
);

#[derive(Debug, Parser, Serialize)]
#[command(name = "loocv", version = LONG_VERSION, about = "Leave-one-out CV curves of ridge regression")]
struct Cli {
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
enum Command {
    /// Write the loss curve and its derivatives as CSV
    Curve(DataArgs),
    /// Classify the curve as quasiconvex or not (JSON)
    Classify(DataArgs),
    /// Report assumption diagnostics (JSON)
    Diagnose(DataArgs),
    /// Run a simulation study or the real-data search (CSV)
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args, Serialize)]
struct DataArgs {
    /// Input CSV with a header row
    #[arg(long)]
    input: PathBuf,
    /// Name of the response column
    #[arg(long)]
    target: String,
    /// Field delimiter; sniffed from the header when omitted
    #[arg(long)]
    delimiter: Option<char>,
    /// Keep only the top R principal components
    #[arg(long)]
    pcr: Option<usize>,
    #[arg(long)]
    lambda_min: Option<f64>,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long, default_value_t = 400)]
    points: usize,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ExperimentArgs {
    #[arg(long)]
    kind: Option<String>,
    /// JSON file overriding default parameters; must name the kind unless --kind is given
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "LOOCV_SEED")]
    seed: Option<u64>,
    /// Use the full trial counts instead of the reduced defaults
    #[arg(long)]
    paper_scale: bool,
    /// Repeat with derived seeds and report mean and two standard deviations
    #[arg(long)]
    reps: Option<usize>,
    /// Dataset for the realdata kind
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    /// Directory for curves of flagged instances (realdata)
    #[arg(long)]
    curves_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()?;
    }
    let start = Instant::now();
    let (out, resolved) = match &cli.command {
        Command::Curve(a) => (a.out.clone(), cmd_curve(a)?),
        Command::Classify(a) => (a.out.clone(), cmd_classify(a)?),
        Command::Diagnose(a) => (a.out.clone(), cmd_diagnose(a)?),
        Command::Experiment(a) => (a.out.clone(), cmd_experiment(a)?),
    };
    write_manifest(cli, out.as_deref(), resolved, start.elapsed().as_secs_f64())
}

fn write_manifest(
    cli: &Cli,
    out: Option<&Path>,
    resolved: serde_json::Value,
    wall: f64,
) -> CliResult<()> {
    let hashed = json!({ "args": cli, "resolved": resolved });
    let manifest = json!({
        "config_hash": sha256_hex(&serde_json::to_vec(&hashed)?),
        "version": env!("CARGO_PKG_VERSION"),
        "format_version": FORMAT_VERSION,
        "args": cli,
        "resolved": resolved,
        "wall_time_secs": wall,
    });
    let text = serde_json::to_string_pretty(&manifest)?;
    match out {
        Some(p) => fs::write(manifest_path(p), text + "\n")?,
        None => eprintln!("{text}"),
    }
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn sink(out: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn load(a: &DataArgs) -> CliResult<StandardizedDataset> {
    let mut opts = CsvOptions::new(a.target.clone());
    if let Some(c) = a.delimiter {
        opts.delimiter = Some(u8::try_from(c).map_err(|_| "delimiter must be ASCII")?);
    }
    let ds = standardize(&load_csv(&a.input, &opts)?)?;
    Ok(match a.pcr {
        Some(r) => pcr_truncate(&ds, r)?,
        None => ds,
    })
}

fn grid(a: &DataArgs) -> GridSpec {
    GridSpec {
        lambda_min: a.lambda_min,
        lambda_max: a.lambda_max,
        points: a.points,
    }
}

fn cmd_curve(a: &DataArgs) -> CliResult<serde_json::Value> {
    let ds = load(a)?;
    let curve = LoocvCurve::compute(&ds.svd, &ds.y, &grid(a))?;
    let hash = problem_hash(&ds.svd, &ds.y);
    let mut w = sink(&a.out)?;
    curve.write_csv(&mut w, &hash)?;
    w.flush()?;
    Ok(json!({ "problem_hash": hash, "n": ds.n(), "d": ds.d(), "grid": grid(a) }))
}

fn cmd_classify(a: &DataArgs) -> CliResult<serde_json::Value> {
    let ds = load(a)?;
    let cfg = ClassifyConfig::with_grid(grid(a));
    let verdict = classify(&ds.svd, &ds.y, &cfg)?;
    let mut w = sink(&a.out)?;
    serde_json::to_writer_pretty(&mut w, &verdict)?;
    writeln!(w)?;
    w.flush()?;
    Ok(json!({ "problem_hash": problem_hash(&ds.svd, &ds.y), "classify": cfg }))
}

fn cmd_diagnose(a: &DataArgs) -> CliResult<serde_json::Value> {
    let ds = load(a)?;
    let report = assumption_report(&ds.svd, &ds.y);
    let certificate = if report.flat_spectrum {
        Some(second_deriv_certificate(&ds.svd, &ds.y, None, 1000)?)
    } else {
        None
    };
    let mut w = sink(&a.out)?;
    serde_json::to_writer_pretty(
        &mut w,
        &json!({ "report": report, "certificate": certificate }),
    )?;
    writeln!(w)?;
    w.flush()?;
    Ok(json!({ "problem_hash": problem_hash(&ds.svd, &ds.y) }))
}

fn experiment_config(a: &ExperimentArgs) -> CliResult<ExperimentConfig> {
    let scale = if a.paper_scale {
        Scale::Paper
    } else {
        Scale::Desk
    };
    let mut cfg = match (&a.config, &a.kind) {
        (Some(path), kind) => {
            let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
            if let (Some(k), Some(obj)) = (kind, v.as_object_mut()) {
                let k: ExperimentKind = k.parse()?;
                obj.insert("kind".into(), json!(k));
            }
            ExperimentConfig::from_json(&v.to_string(), scale)?
        }
        (None, Some(kind)) => ExperimentConfig::defaults(kind.parse()?, scale),
        (None, None) => return Err("experiment needs --kind or --config".into()),
    };
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    if let Some(p) = &a.data {
        cfg.data_path = Some(p.clone());
    }
    if let Some(t) = &a.target {
        cfg.target = Some(t.clone());
    }
    if let Some(r) = a.reps {
        cfg.replications = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_experiment(a: &ExperimentArgs) -> CliResult<serde_json::Value> {
    let cfg = experiment_config(a)?;
    let result = match a.reps {
        Some(r) => experiments::replicate_with_errorbars(&cfg, r)?,
        None => experiments::run(&cfg)?,
    };
    let mut w = sink(&a.out)?;
    result.write_csv(&mut w)?;
    w.flush()?;
    if let Some(dir) = &a.curves_dir {
        fs::create_dir_all(dir)?;
        for c in &result.curves {
            let f = BufWriter::new(File::create(dir.join(format!("{}.csv", c.label)))?);
            c.curve.write_csv(f, &c.problem_hash)?;
        }
    }
    Ok(json!({
        "experiment": cfg,
        "config_hash": cfg.config_hash(),
        "rows": result.rows.len(),
        "flagged_curves": result.curves.iter().map(|c| &c.label).collect::<Vec<_>>(),
    }))
}
