use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use doe::bench::{run_methods, SolverSetup};
use doe::config::{IntervalRange, RunConfig};
use doe::report::{render_markdown, series_csv, BenchmarkReport, Environment};
use doe::training::{train_surrogates, HeadReport};
use doe::{dataset, feeder_file, model_file, results, scenario};
use doe_core::doe::{retrench, DoeRequest, Method, SurrogateSet};
use doe_core::grid::Feeder;
use doe_core::icnn::Architecture;
use doe_core::snapshot::SamplingSpec;

#[derive(Parser)]
#[command(
    name = "doe",
    version,
    about = "Dynamic operating envelopes with convex neural surrogates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample loads and DER outputs and label them with power flow.
    GenerateData(Common),
    /// Train the loss, voltage, current and reverse-flow surrogates.
    Train(Common),
    /// Solve the stress day with one method.
    Solve(Common),
    /// Solve the stress day with several methods and write report.md.
    Benchmark(Common),
    /// Rebuild report.md and the series file from saved benchmark rows.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Feeder JSON (default: bundled 33-bus feeder).
    #[arg(long)]
    feeder: Option<PathBuf>,
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Method, or comma-separated methods for benchmark.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stress-day intervals: `N` or `start..end`.
    #[arg(long)]
    intervals: Option<String>,
    /// Weight override such as `w_v=1000`; repeatable.
    #[arg(long = "weights")]
    weights: Vec<String>,
    /// Snapshot rows to generate.
    #[arg(long)]
    samples: Option<usize>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Solve on the retrenched output selection.
    #[arg(long)]
    retrench: bool,
    /// Solve intervals in parallel.
    #[arg(long)]
    parallel: bool,
}

enum Failure {
    Usage(anyhow::Error),
    Solver(anyhow::Error),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenerateData(c) => config(&c, false).and_then(|(cfg, f)| Ok(generate(&cfg, &f)?)),
        Command::Train(c) => config(&c, false).and_then(|(cfg, f)| Ok(train(&cfg, &f)?)),
        Command::Solve(c) => config(&c, true).and_then(|(cfg, f)| solve(&cfg, &f)),
        Command::Benchmark(c) => config(&c, false).and_then(|(cfg, f)| benchmark(&cfg, &f)),
        Command::Report(c) => config(&c, false).and_then(|(cfg, _)| Ok(report(&cfg)?)),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(e) | Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn config(c: &Common, single_method: bool) -> Result<(RunConfig, Feeder), Failure> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p).map_err(usage)?,
        None => RunConfig::default(),
    };
    if let Some(f) = &c.feeder {
        cfg.feeder = Some(f.clone());
    }
    if let Some(m) = &c.method {
        cfg.set_methods(m).map_err(usage)?;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
        cfg.train.config.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if let Some(r) = &c.intervals {
        cfg.intervals = Some(IntervalRange::parse(r).map_err(usage)?);
    }
    for w in &c.weights {
        cfg.set_weight(w).map_err(usage)?;
    }
    if let Some(n) = c.samples {
        cfg.samples = n;
    }
    if let Some(e) = c.epochs {
        cfg.train.config.epochs = e;
    }
    cfg.retrench |= c.retrench;
    cfg.parallel |= c.parallel;
    cfg.check().map_err(usage)?;
    if single_method && cfg.methods.len() != 1 {
        return Err(usage(anyhow::anyhow!("solve takes exactly one --method")));
    }
    let feeder = match &cfg.feeder {
        Some(p) => feeder_file::load_feeder(p).map_err(usage)?,
        None => feeder_file::bundled_feeder(),
    };
    Ok((cfg, feeder))
}

fn generate(cfg: &RunConfig, feeder: &Feeder) -> Result<()> {
    let spec = SamplingSpec::uniform(feeder, cfg.load_range.0, cfg.load_range.1, cfg.seed);
    let set = dataset::generate_parallel(feeder, &spec, cfg.samples)?;
    let dir = cfg.dataset_dir();
    dataset::save(&set, feeder, &dir)?;
    println!(
        "{} rows ({} rejected draws) written to {}",
        set.len(),
        set.rejections,
        dir.display()
    );
    Ok(())
}

fn train(cfg: &RunConfig, feeder: &Feeder) -> Result<()> {
    let data = dataset::load(&cfg.dataset_dir(), feeder)?;
    let dir = cfg.models_dir();
    let mut archs = vec![Architecture::Icnn];
    if cfg.train_mlp {
        archs.push(Architecture::Mlp);
    }
    let mut all: Vec<HeadReport> = Vec::new();
    for arch in archs {
        let (set, reports) = train_surrogates(feeder, &data, arch, &cfg.train)?;
        model_file::save_set(&set, &dir)?;
        all.extend(reports);
    }
    let text = serde_json::to_string_pretty(&all)?;
    std::fs::write(dir.join("nmae.json"), text).context("writing nmae.json")?;
    println!("{:<6} {:<5} {:>10} {:>6}", "arch", "head", "NMAE", "epoch");
    for r in &all {
        println!(
            "{:<6} {:<5} {:>10.6} {:>6}",
            model_file::arch_name(r.arch),
            r.head.name(),
            r.nmae,
            r.best_epoch
        );
    }
    Ok(())
}

struct Loaded {
    icnn: Option<SurrogateSet>,
    mlp: Option<SurrogateSet>,
}

fn load_models(cfg: &RunConfig, feeder: &Feeder) -> Result<Loaded, Failure> {
    let dir = cfg.models_dir();
    let needs = |ms: &[Method]| cfg.methods.iter().any(|m| ms.contains(m));
    let load = |arch| -> Result<SurrogateSet, Failure> {
        if !model_file::set_exists(&dir, arch) {
            return Err(usage(anyhow::anyhow!(
                "no {} models in {}; run `doe train` first",
                model_file::arch_name(arch),
                dir.display()
            )));
        }
        let set = model_file::load_set(&dir, arch).map_err(anyhow::Error::from)?;
        Ok(set.folded().map_err(anyhow::Error::from)?)
    };
    let mut icnn = None;
    if needs(&[Method::B1, Method::B2]) {
        let mut set = load(Architecture::Icnn)?;
        if cfg.retrench {
            let plan = retrench(feeder).map_err(anyhow::Error::from)?;
            set = set.restrict(&plan).map_err(anyhow::Error::from)?;
        }
        icnn = Some(set);
    }
    let mlp = if needs(&[Method::B4]) {
        Some(load(Architecture::Mlp)?)
    } else {
        None
    };
    Ok(Loaded { icnn, mlp })
}

fn setup<'a>(cfg: &RunConfig, feeder: &'a Feeder, models: &'a Loaded) -> SolverSetup<'a> {
    let mut s = SolverSetup::new(feeder);
    s.icnn = models.icnn.as_ref();
    s.mlp = models.mlp.as_ref();
    s.bnb.node_limit = cfg.node_limit;
    s.bnb.time_limit = cfg.time_limit;
    s.pwl_segments = cfg.pwl_segments;
    s.verify = cfg.verify;
    s
}

fn request(cfg: &RunConfig, feeder: &Feeder) -> DoeRequest {
    let mut req = scenario::stress_day(feeder, cfg.direction, cfg.steps);
    let r = cfg.interval_range();
    req.intervals = req.intervals[r.start..r.end].to_vec();
    req.weights = cfg.weights;
    req
}

fn solve(cfg: &RunConfig, feeder: &Feeder) -> Result<(), Failure> {
    let models = load_models(cfg, feeder)?;
    let req = request(cfg, feeder);
    let (rows, statuses) = run_methods(&setup(cfg, feeder, &models), &req, &cfg.methods, cfg.parallel);
    let method = cfg.methods[0];
    let dir = cfg.results_dir();
    let name = method.name().to_lowercase();
    results::save_csv(&dir.join(format!("{name}.csv")), &rows).map_err(anyhow::Error::from)?;
    results::save_json(&dir.join(format!("{name}.json")), &rows).map_err(anyhow::Error::from)?;
    println!(
        "{} intervals solved with {method}, rows in {}",
        rows.len(),
        dir.display()
    );
    failures(&statuses)
}

fn failures(statuses: &[doe::bench::MethodStatus]) -> Result<(), Failure> {
    let failed: Vec<String> = statuses
        .iter()
        .flat_map(|s| {
            s.failures
                .iter()
                .map(move |(t, e)| format!("{} interval {t}: {e}", s.method))
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Solver(anyhow::anyhow!("{}", failed.join("\n"))))
    }
}

fn benchmark(cfg: &RunConfig, feeder: &Feeder) -> Result<(), Failure> {
    let models = load_models(cfg, feeder)?;
    let req = request(cfg, feeder);
    let (rows, statuses) = run_methods(&setup(cfg, feeder, &models), &req, &cfg.methods, cfg.parallel);
    let rep = BenchmarkReport {
        environment: Environment::current(feeder, cfg.seed, cfg.parallel),
        statuses: statuses.clone(),
        rows,
    };
    let dir = cfg.results_dir();
    results::save_csv(&dir.join("benchmark.csv"), &rep.rows).map_err(anyhow::Error::from)?;
    std::fs::write(
        dir.join("benchmark.json"),
        serde_json::to_string_pretty(&rep).map_err(anyhow::Error::from)?,
    )
    .context("writing benchmark.json")?;
    write_report(&rep, &cfg.out)?;
    println!("{}", render_markdown(&rep));
    failures(&statuses)
}

fn write_report(rep: &BenchmarkReport, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out.join("results"))?;
    std::fs::write(out.join("report.md"), render_markdown(rep)).context("writing report.md")?;
    std::fs::write(out.join("results").join("series.csv"), series_csv(&rep.rows)).context("writing series.csv")?;
    Ok(())
}

fn report(cfg: &RunConfig) -> Result<()> {
    let path = cfg.results_dir().join("benchmark.json");
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let rep: BenchmarkReport = serde_json::from_str(&text)?;
    write_report(&rep, &cfg.out)?;
    println!("report written to {}", cfg.out.join("report.md").display());
    Ok(())
}
