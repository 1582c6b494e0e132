use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gtajob_core::dominance::{dominance_curve, CheckpointMode, CurveOptions};
use gtajob_core::encoding::encode;
use gtajob_core::gta::{GtaParams, ThetaSchedule};
use gtajob_core::harness::{
    read_jsonl, run_many, series_from_records, write_jsonl, Algorithm, Problem, RunJob,
    RunLogRecord, SearchSpec,
};
use gtajob_core::instance::{format_reference, parse_reference, parse_standard, parse_taillard};
use gtajob_core::learning::{
    accuracy, backbone_upper_bound, build_training_table, fit_theta, predict, BoundsSnapshot,
    TrainingTable,
};
use gtajob_core::tabu::{RunParams, TenureRange};
use gtajob_core::Instance;

mod config;

use config::ConfigFile;

const OUT_ENV: &str = "GTAJOB_OUT";

#[derive(Parser)]
#[command(name = "gtajob", version, about = "Tabu and guided tabu search for the job shop")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run tabu or guided tabu search and write per-run logs.
    Solve(SolveArgs),
    /// Fit theta per epoch from recorded bounds and a reference solution.
    Fit(FitArgs),
    /// Probability dominance of log set A over log set B.
    Compare(CompareArgs),
    /// Upper bound on the normalized backbone size.
    Bound {
        /// Accuracy of the model.
        a: f64,
        /// Accuracy on backbone variables.
        p_b: f64,
        /// Accuracy on the other variables.
        p_o: f64,
    },
    /// Probability that a component is 1 in an optimal solution.
    Predict {
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long)]
        d1: u32,
        #[arg(long)]
        d0: u32,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Std,
    Taillard,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Format as ValueEnum>::from_str(s, true)
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    algo: Option<Algorithm>,
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Instance id used in logs and file names (default: file stem).
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    runs: Option<u32>,
    /// Run i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    nepochs: Option<u32>,
    #[arg(long)]
    niters: Option<u64>,
    #[arg(long)]
    tmin: Option<u32>,
    #[arg(long)]
    tmax: Option<u32>,
    #[arg(long)]
    theta_min: Option<f64>,
    #[arg(long)]
    theta_max: Option<f64>,
    /// Bounds refresh period in iterations.
    #[arg(long)]
    d: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Wall-clock limit per run, in seconds. Gta then grows theta with time.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Also write per-epoch bounds snapshots.
    #[arg(long)]
    emit_bounds: bool,
    /// Output directory (default: $GTAJOB_OUT, else `runs`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// key=value file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Bounds snapshot files written by `solve --emit-bounds`.
    #[arg(long, num_args = 1.., conflicts_with = "table")]
    bounds: Vec<PathBuf>,
    #[arg(long, required_unless_present = "table")]
    reference: Option<PathBuf>,
    #[arg(long, required_unless_present = "table")]
    instance: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "std")]
    format: Format,
    /// Fit a `d1,d0,opt` table directly.
    #[arg(long)]
    table: Option<PathBuf>,
    /// CSV destination (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Epoch,
    Time,
}

#[derive(Args)]
struct CompareArgs {
    /// Run logs (files or directories) of algorithm A.
    #[arg(long, num_args = 1.., required = true)]
    a: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    b: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "epoch")]
    mode: Mode,
    /// Explicit checkpoints (epochs, or milliseconds in time mode).
    #[arg(long, value_delimiter = ',')]
    checkpoints: Vec<u64>,
    /// Bucket width in milliseconds for time mode.
    #[arg(long)]
    bucket_ms: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => solve(args).map(|_| ExitCode::SUCCESS),
        Command::Fit(args) => fit(args).map(|_| ExitCode::SUCCESS),
        Command::Compare(args) => compare(args),
        Command::Bound { a, p_b, p_o } => backbone_upper_bound(a, p_b, p_o)
            .map(|rho| {
                println!("{rho}");
                ExitCode::SUCCESS
            })
            .map_err(Into::into),
        Command::Predict { theta, d1, d0 } => {
            println!("{}", predict(theta, d1, d0));
            Ok(ExitCode::SUCCESS)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_instance(path: &Path, format: Format) -> Result<Instance> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = match format {
        Format::Std => parse_standard(&text),
        Format::Taillard => parse_taillard(&text),
    };
    parsed.with_context(|| format!("parsing {}", path.display()))
}

struct SolvePlan {
    problem: Problem,
    jobs: Vec<RunJob>,
    out: PathBuf,
    workers: usize,
}

fn plan_solve(args: SolveArgs) -> Result<SolvePlan> {
    let cfg = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    macro_rules! pick {
        ($field:ident, $key:literal) => {
            match args.$field.clone() {
                Some(v) => Some(v),
                None => cfg.get($key)?,
            }
        };
    }
    let algo: Algorithm = pick!(algo, "algo").context("--algo is required")?;
    let instance: PathBuf = pick!(instance, "instance").context("--instance is required")?;
    let format: Format = pick!(format, "format").unwrap_or(Format::Std);
    let runs: u32 = pick!(runs, "runs").unwrap_or(1);
    let seed: u64 = pick!(seed, "seed").unwrap_or(0);
    let time_limit: Option<f64> = pick!(time_limit, "time-limit");
    let nepochs: u32 = pick!(nepochs, "nepochs").unwrap_or(if time_limit.is_some() {
        u32::MAX
    } else {
        200
    });
    let niters: u64 = pick!(niters, "niters").unwrap_or(300_000);
    let tmin: u32 = pick!(tmin, "tmin").unwrap_or(5);
    let tmax: u32 = pick!(tmax, "tmax").unwrap_or(11);
    let theta_min: f64 = pick!(theta_min, "theta-min").unwrap_or(0.001);
    let theta_max: f64 = pick!(theta_max, "theta-max").unwrap_or(1.0);
    let period: u64 = pick!(d, "d").unwrap_or(100);
    let epsilon: f64 = pick!(epsilon, "epsilon").unwrap_or(1e-4);
    let emit_bounds = args.emit_bounds || cfg.flag("emit-bounds")?;
    let out: PathBuf = match pick!(out, "out") {
        Some(p) => p,
        None => std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs")),
    };
    let workers: usize = pick!(workers, "workers").unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    let name: String = match pick!(name, "name") {
        Some(n) => n,
        None => instance
            .file_stem()
            .and_then(|s| s.to_str())
            .context("cannot derive an instance name; pass --name")?
            .to_string(),
    };

    ensure!(runs >= 1, "--runs must be at least 1");
    ensure!(nepochs >= 1, "--nepochs must be at least 1");
    ensure!(tmin <= tmax, "need tmin <= tmax, got {tmin}..{tmax}");
    ensure!(period >= 1, "--d must be at least 1");
    let time_limit = match time_limit {
        Some(s) if !(s > 0.0 && s.is_finite()) => bail!("--time-limit must be positive"),
        Some(s) => Some(Duration::from_secs_f64(s)),
        None => None,
    };
    let tenure = TenureRange::new(tmin, tmax);
    let schedule = match (algo, time_limit) {
        (Algorithm::Tabu, _) => None,
        (Algorithm::Gta, Some(h)) => Some(ThetaSchedule::by_time(theta_min, theta_max, h)?),
        (Algorithm::Gta, None) => Some(ThetaSchedule::by_epoch(theta_min, theta_max, nepochs)?),
    };

    let instance = load_instance(&instance, format)?;
    let mut jobs = Vec::new();
    for i in 0..runs {
        let mut run = RunParams::new(nepochs, niters, seed + i as u64);
        run.time_limit = time_limit;
        let spec = match schedule {
            None => SearchSpec::Tabu { tenure, run },
            Some(schedule) => {
                let params = GtaParams {
                    tenure,
                    run,
                    schedule,
                    period,
                    epsilon,
                };
                params.validate()?;
                SearchSpec::Gta(params)
            }
        };
        jobs.push(RunJob {
            problem: 0,
            spec,
            bounds_period: emit_bounds.then_some(period),
        });
    }
    Ok(SolvePlan {
        problem: Problem::new(name, instance),
        jobs,
        out,
        workers,
    })
}

fn solve(args: SolveArgs) -> Result<()> {
    let plan = plan_solve(args)?;
    fs::create_dir_all(&plan.out)
        .with_context(|| format!("creating {}", plan.out.display()))?;
    let problems = [plan.problem];
    let results = run_many(&problems, &plan.jobs, plan.workers, |i, r| {
        if let Ok(r) = r {
            eprintln!("run {i}: best {}", r.best_makespan);
        }
    });
    let problem = &problems[0];
    for (job, result) in plan.jobs.iter().zip(results) {
        let result = result?;
        let stem = format!(
            "{}.{}.seed{}",
            problem.name,
            job.spec.algorithm(),
            job.spec.seed()
        );
        let path = plan.out.join(format!("{stem}.jsonl"));
        write_jsonl(BufWriter::new(create(&path)?), &result.records)
            .with_context(|| format!("writing {}", path.display()))?;
        let path = plan.out.join(format!("{stem}.sol"));
        fs::write(&path, format_reference(&problem.instance, &result.best))
            .with_context(|| format!("writing {}", path.display()))?;
        if job.bounds_period.is_some() {
            let path = plan.out.join(format!("{stem}.bounds.jsonl"));
            write_jsonl(BufWriter::new(create(&path)?), &result.snapshots)
                .with_context(|| format!("writing {}", path.display()))?;
        }
        println!(
            "{}\t{}\t{}\t{}",
            problem.name,
            job.spec.algorithm(),
            job.spec.seed(),
            result.best_makespan
        );
    }
    Ok(())
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

const FIT_HEADER: &str = "source,epoch,rows,theta,log_likelihood,accuracy,separated,status";

fn fit_row(source: &str, epoch: Option<u32>, table: &TrainingTable) -> String {
    let epoch = epoch.map(|e| e.to_string()).unwrap_or_default();
    match fit_theta(table) {
        Ok(fit) => format!(
            "{source},{epoch},{},{},{},{},{},{}",
            table.len(),
            fit.model.theta,
            fit.log_likelihood,
            accuracy(&fit.model, table),
            fit.separated,
            if fit.separated { "separated" } else { "ok" }
        ),
        Err(_) => format!("{source},{epoch},0,,,,,empty"),
    }
}

fn fit(args: FitArgs) -> Result<()> {
    let mut lines = vec![FIT_HEADER.to_string()];
    if let Some(path) = &args.table {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let table = TrainingTable::from_csv(&text)
            .with_context(|| format!("parsing {}", path.display()))?;
        lines.push(fit_row(&path.display().to_string(), None, &table));
    } else {
        ensure!(!args.bounds.is_empty(), "no bounds snapshots given (--bounds)");
        let inst_path = args.instance.as_deref().context("--instance is required")?;
        let ref_path = args.reference.as_deref().context("--reference is required")?;
        let instance = load_instance(inst_path, args.format)?;
        let text = fs::read_to_string(ref_path)
            .with_context(|| format!("reading {}", ref_path.display()))?;
        let reference = parse_reference(&text, &instance)
            .with_context(|| format!("reference {}", ref_path.display()))?;
        let problem = Problem::new("", instance);
        let labels = encode(&reference.solution, &problem.index);
        for path in &args.bounds {
            let snapshots: Vec<BoundsSnapshot> = read_jsonl(open(path)?)
                .with_context(|| format!("reading {}", path.display()))?;
            ensure!(
                !snapshots.is_empty(),
                "{} holds no bounds snapshots",
                path.display()
            );
            for s in &snapshots {
                ensure!(
                    s.bounds.len() == labels.len(),
                    "{}: bounds cover {} components, the instance has {}",
                    path.display(),
                    s.bounds.len(),
                    labels.len()
                );
                let table = build_training_table(&s.bounds, &labels);
                lines.push(fit_row(&path.display().to_string(), Some(s.epoch), &table));
            }
        }
    }
    let mut text = lines.join("\n");
    text.push('\n');
    match &args.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn log_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    let name = f.file_name().and_then(|n| n.to_str()).unwrap_or("");
                    name.ends_with(".jsonl") && !name.ends_with(".bounds.jsonl")
                })
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn load_logs(paths: &[PathBuf]) -> Result<Vec<RunLogRecord>> {
    let mut records = Vec::new();
    for f in log_files(paths)? {
        let mut r: Vec<RunLogRecord> =
            read_jsonl(open(&f)?).with_context(|| format!("reading {}", f.display()))?;
        records.append(&mut r);
    }
    ensure!(!records.is_empty(), "no run log records found");
    Ok(records)
}

fn compare(args: CompareArgs) -> Result<ExitCode> {
    let mode = match args.mode {
        Mode::Epoch => CheckpointMode::Epoch,
        Mode::Time => CheckpointMode::Time,
    };
    let a = series_from_records(&load_logs(&args.a)?, mode);
    let b = series_from_records(&load_logs(&args.b)?, mode);
    let all = || a.iter().chain(&b);
    let checkpoints = if !args.checkpoints.is_empty() {
        args.checkpoints.clone()
    } else {
        match mode {
            CheckpointMode::Epoch => {
                let last = all()
                    .map(|s| s.points.last().map_or(0, |p| p.0))
                    .min()
                    .unwrap_or(0);
                (1..=last).collect()
            }
            CheckpointMode::Time => {
                let bucket = args
                    .bucket_ms
                    .context("time mode needs --bucket-ms or --checkpoints")?;
                ensure!(bucket > 0, "--bucket-ms must be positive");
                let first = all().map(|s| s.points[0].0).max().unwrap_or(0);
                let last = all().map(|s| s.points.last().unwrap().0).max().unwrap_or(0);
                let k0 = first.div_ceil(bucket).max(1);
                (k0..=last.div_ceil(bucket).max(k0)).map(|k| k * bucket).collect()
            }
        }
    };
    ensure!(!checkpoints.is_empty(), "no checkpoints to compare");
    let opts = CurveOptions {
        mode,
        replicates: args.replicates,
        level: args.level,
        seed: args.seed,
    };
    let curve = dominance_curve(&a, &b, &checkpoints, &opts)?;
    let csv = curve.to_csv();
    match &args.out {
        Some(p) => fs::write(p, &csv).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    let last = curve.points.last().expect("at least one checkpoint");
    Ok(if last.p_a_lt_b > last.p_b_lt_a {
        ExitCode::SUCCESS
    } else if last.p_a_lt_b < last.p_b_lt_a {
        ExitCode::from(3)
    } else {
        ExitCode::from(4)
    })
}
