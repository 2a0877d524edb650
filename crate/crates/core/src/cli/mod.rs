//! The `mgct` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime or check failure, 2 usage or
//! configuration error.

pub mod config;

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

pub use config::RunConfigFile;

use crate::dataio::manifest::csv_error;
use crate::dataio::{load_dataset, monte_carlo_splits, synthesize, write_dataset, write_splits, Dataset, SynthConfig};
use crate::error::Error;
use crate::model::checkpoint::{load_checkpoint, save_checkpoint};
use crate::model::AblationSpec;
use crate::numkit::Fault;
use crate::survival::{kaplan_meier, logrank_test, stratify, KmPoint, SurvivalLabel};
use crate::train::{cross_validate_splits, evaluate, run_ablation_matrix_splits, write_ablation_csv, write_history_csv};
use crate::verify::{run_checks, VerifyConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mgct", version, about = "Mutual-guided cross-modality transformer for survival prediction")]
pub struct Cli {
    /// Global seed; overrides the seed in any config file.
    #[arg(long, global = true, env = "MGCT_SEED")]
    pub seed: Option<u64>,
    /// Worker threads for folds and per-sample gradients.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Only print warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort.
    Synth(SynthArgs),
    /// Train one fold and write a checkpoint.
    Train(RunArgs),
    /// Monte Carlo cross-validation.
    Cv(RunArgs),
    /// Cross-validate Models A–E on shared splits.
    Ablate(AblateArgs),
    /// Score a checkpoint; write Kaplan-Meier curves and a log-rank report.
    Eval(EvalArgs),
    /// Run the numerical self-check suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d_in: Option<usize>,
    #[arg(long)]
    pub censor_rate: Option<f64>,
    /// JSON file with further generator settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Allow writing into a non-empty directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Ablation preset A–E; overrides `ablation` in the config.
    #[arg(long, value_parser = parse_preset)]
    pub model: Option<AblationSpec>,
    /// Run directory; must not exist. Defaults to `<run_root>/<timestamp>-seed<seed>-<command>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Category map; defaults to `categories.json` beside the manifest.
    #[arg(long)]
    pub categories: Option<PathBuf>,
    /// Output stem: writes `<stem>_low.csv`, `<stem>_high.csv`,
    /// `<stem>_logrank.json` and `<stem>_risk.csv`.
    #[arg(long)]
    pub km_out: PathBuf,
    /// Restrict scoring to the validation ids of `--fold` in this splits file.
    #[arg(long, requires = "fold")]
    pub split: Option<PathBuf>,
    #[arg(long, requires = "split")]
    pub fold: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InjectedFault {
    TanhGradSign,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, hide = true, value_enum)]
    pub inject_fault: Option<InjectedFault>,
}

fn parse_preset(s: &str) -> Result<AblationSpec, String> {
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => AblationSpec::preset(c).ok_or_else(|| format!("unknown model '{s}', expected A-E")),
        _ => Err(format!("unknown model '{s}', expected A-E")),
    }
}

/// Error carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

fn usage(e: impl Display) -> CliError {
    CliError { code: EXIT_USAGE, message: e.to_string() }
}

fn failure(e: impl Display) -> CliError {
    CliError { code: EXIT_FAILURE, message: e.to_string() }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => usage(e),
            _ => failure(e),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parses `args`, runs the command and returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn main() -> i32 {
    run_from(std::env::args_os())
}

fn execute(cli: &Cli) -> CliResult {
    if cli.jobs == 0 {
        return Err(usage("--jobs must be >= 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build().map_err(failure)?;
    pool.install(|| match &cli.command {
        Command::Synth(a) => cmd_synth(a, cli.seed),
        Command::Train(a) => cmd_run(a, cli.seed, RunKind::Train),
        Command::Cv(a) => cmd_run(a, cli.seed, RunKind::Cv),
        Command::Ablate(a) => {
            let run = RunArgs { config: a.config.clone(), model: None, out: a.out.clone() };
            cmd_run(&run, cli.seed, RunKind::Ablate)
        }
        Command::Eval(a) => cmd_eval(a),
        Command::Verify(a) => cmd_verify(a, cli.seed),
    })
}

fn is_nonempty_dir(path: &Path) -> bool {
    fs::read_dir(path).map(|mut d| d.next().is_some()).unwrap_or(false)
}

fn cmd_synth(a: &SynthArgs, seed: Option<u64>) -> CliResult {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str::<SynthConfig>(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(d) = a.d_in {
        cfg.d_in = d;
    }
    if let Some(c) = a.censor_rate {
        cfg.censor_rate = c;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if is_nonempty_dir(&a.out) && !a.force {
        return Err(usage(format!("{} is not empty (use --force to write into it)", a.out.display())));
    }
    let (ds, summary) = synthesize(&cfg).map_err(usage)?;
    let manifest = write_dataset(&a.out, &ds).map_err(usage)?;
    let text = serde_json::to_string_pretty(&cfg).expect("config serialises");
    let path = a.out.join("synth.json");
    fs::write(&path, text + "\n").map_err(|e| usage(Error::io(&path, e)))?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serialises"));
    println!("manifest: {}", manifest.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RunKind {
    Train,
    Cv,
    Ablate,
}

impl RunKind {
    fn name(self) -> &'static str {
        match self {
            RunKind::Train => "train",
            RunKind::Cv => "cv",
            RunKind::Ablate => "ablate",
        }
    }
}

/// Creates a fresh run directory; never reuses an existing one.
fn create_run_dir(explicit: Option<&Path>, root: &Path, seed: u64, kind: RunKind) -> CliResult<PathBuf> {
    let dir = match explicit {
        Some(p) => {
            if p.exists() {
                return Err(usage(format!("run directory {} already exists", p.display())));
            }
            p.to_path_buf()
        }
        None => {
            let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
            let base = format!("{stamp}-seed{seed}-{}", kind.name());
            let mut dir = root.join(&base);
            let mut k = 1;
            while dir.exists() {
                dir = root.join(format!("{base}-{k}"));
                k += 1;
            }
            dir
        }
    };
    fs::create_dir_all(&dir).map_err(|e| usage(Error::io(&dir, e)))?;
    Ok(dir)
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult {
    let text = serde_json::to_string_pretty(value).expect("json value serialises");
    fs::write(path, text + "\n").map_err(|e| failure(Error::io(path, e)))
}

fn opt_json(v: Option<f64>) -> serde_json::Value {
    v.map_or(serde_json::Value::Null, |x| json!(x))
}

fn cmd_run(a: &RunArgs, seed: Option<u64>, kind: RunKind) -> CliResult {
    let mut cfg = RunConfigFile::load(&a.config)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(m) = a.model {
        cfg.ablation = m;
    }
    let ds = load_dataset(&cfg.manifest, cfg.category_path())?;
    let dir = create_run_dir(a.out.as_deref(), &cfg.run_root, cfg.train.seed, kind)?;
    write_json(&dir.join("config.json"), &serde_json::to_value(&cfg).expect("config serialises"))?;
    log::info!("run directory {}", dir.display());

    let folds = if kind == RunKind::Train { 1 } else { cfg.folds };
    let splits = monte_carlo_splits(&ds.ids(), folds, cfg.validation_ratio, cfg.train.seed).map_err(usage)?;
    write_splits(dir.join("splits.json"), &splits)?;

    match kind {
        RunKind::Train | RunKind::Cv => {
            let report = cross_validate_splits(&ds, &splits, &cfg.train, cfg.ablation)?;
            write_history_csv(dir.join("metrics.csv"), &report.history())?;
            let mut fold_rows = Vec::new();
            for f in &report.folds {
                let name = if kind == RunKind::Train { "model.mgck".to_string() } else { format!("fold{}.mgck", f.fold) };
                save_checkpoint(&dir.join(&name), &f.model, &f.bins, f.horizon)?;
                fold_rows.push(json!({
                    "fold": f.fold,
                    "checkpoint": name,
                    "c_index": opt_json(f.validation.c_index),
                    "auc": opt_json(f.validation.auc),
                    "best_epoch": f.best_epoch,
                }));
                println!(
                    "fold {}: c-index {} auc {}",
                    f.fold,
                    fmt_metric(f.validation.c_index),
                    fmt_metric(f.validation.auc)
                );
            }
            let summary = json!({
                "model": cfg.ablation.to_string(),
                "parameters": report.folds[0].model.parameter_count(),
                "folds": fold_rows,
                "c_index_mean": opt_json(report.c_index.map(|m| m.mean)),
                "c_index_std": opt_json(report.c_index.map(|m| m.std)),
                "auc_mean": opt_json(report.auc.map(|m| m.mean)),
                "auc_std": opt_json(report.auc.map(|m| m.std)),
            });
            write_json(&dir.join("summary.json"), &summary)?;
            if kind == RunKind::Cv {
                println!(
                    "mean c-index {} ± {}",
                    fmt_metric(report.c_index.map(|m| m.mean)),
                    fmt_metric(report.c_index.map(|m| m.std))
                );
            }
        }
        RunKind::Ablate => {
            let results = run_ablation_matrix_splits(&ds, &splits, &cfg.train)?;
            let rows: Vec<_> = results.iter().map(|(r, _)| r.clone()).collect();
            write_ablation_csv(dir.join("ablation.csv"), &rows)?;
            for (row, report) in &results {
                write_history_csv(dir.join(format!("metrics_{}.csv", row.name)), &report.history())?;
                println!(
                    "Model {}: c-index {} ± {}, auc {} ± {}",
                    row.name,
                    fmt_metric(row.c_index.map(|m| m.mean)),
                    fmt_metric(row.c_index.map(|m| m.std)),
                    fmt_metric(row.auc.map(|m| m.mean)),
                    fmt_metric(row.auc.map(|m| m.std))
                );
            }
        }
    }
    println!("artifacts: {}", dir.display());
    Ok(())
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.4}"))
}

/// `time,at_risk,events,censored,survival`.
pub fn write_km_csv(path: &Path, points: &[KmPoint]) -> crate::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for p in points {
        w.serialize(p).map_err(|e| csv_error(path, e))?;
    }
    if points.is_empty() {
        w.write_record(["time", "at_risk", "events", "censored", "survival"]).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_km_csv(path: &Path) -> crate::Result<Vec<KmPoint>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

/// Checks that a checkpoint can score `ds`.
fn check_compatible(ds: &Dataset, d_in: usize, sizes: &[usize]) -> CliResult {
    if ds.d_in() != d_in {
        return Err(usage(format!("patch embedding width: checkpoint expects {d_in}, manifest has {}", ds.d_in())));
    }
    let have: Vec<usize> = ds.samples[0].genomic.iter().map(Vec::len).collect();
    if have != sizes {
        return Err(usage(format!("genomic category sizes: checkpoint expects {sizes:?}, manifest has {have:?}")));
    }
    Ok(())
}

fn stem_path(stem: &Path, suffix: &str) -> PathBuf {
    let name = stem.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.with_file_name(format!("{name}{suffix}"))
}

fn cmd_eval(a: &EvalArgs) -> CliResult {
    let ck = load_checkpoint(&a.checkpoint).map_err(usage)?;
    let categories = a.categories.clone().unwrap_or_else(|| crate::dataio::default_category_path(&a.manifest));
    let ds = load_dataset(&a.manifest, &categories)?;
    check_compatible(&ds, ck.meta.model.d_in, &ck.meta.model.genomic_sizes)?;
    let ids = match (&a.split, a.fold) {
        (Some(path), Some(fold)) => {
            let splits = crate::dataio::read_splits(path).map_err(usage)?;
            splits
                .into_iter()
                .find(|s| s.fold == fold)
                .ok_or_else(|| usage(format!("{} has no fold {fold}", path.display())))?
                .validation
        }
        _ => ds.ids(),
    };
    let samples = ds.select(&ids).map_err(usage)?;
    let (risks, metrics) = evaluate(&ck.model, &samples, ck.meta.horizon)?;
    let labels: Vec<SurvivalLabel> = samples.iter().map(|s| SurvivalLabel::new(s.t, s.event, 0)).collect();
    let groups = stratify(&risks);
    let (low, high) = groups.pick(&labels);
    let lr = logrank_test(&low, &high);

    if let Some(parent) = a.km_out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| usage(Error::io(parent, e)))?;
    }
    write_km_csv(&stem_path(&a.km_out, "_low.csv"), &kaplan_meier(&low).points)?;
    write_km_csv(&stem_path(&a.km_out, "_high.csv"), &kaplan_meier(&high).points)?;
    let risk_path = stem_path(&a.km_out, "_risk.csv");
    let mut w = csv::Writer::from_path(&risk_path).map_err(|e| csv_error(&risk_path, e))?;
    w.write_record(["sample_id", "risk", "group"]).map_err(|e| csv_error(&risk_path, e))?;
    for (i, (id, r)) in ids.iter().zip(&risks).enumerate() {
        let group = if groups.high.contains(&i) { "high" } else { "low" };
        w.write_record([id.as_str(), &r.to_string(), group]).map_err(|e| csv_error(&risk_path, e))?;
    }
    w.flush().map_err(|e| failure(Error::io(&risk_path, e)))?;
    write_json(
        &stem_path(&a.km_out, "_logrank.json"),
        &json!({
            "n_low": low.len(),
            "n_high": high.len(),
            "threshold": groups.threshold,
            "statistic": opt_json(lr.map(|l| l.statistic)),
            "p_value": opt_json(lr.map(|l| l.p_value)),
            "c_index": opt_json(metrics.c_index),
            "auc": opt_json(metrics.auc),
            "auc_horizon": opt_json(ck.meta.horizon),
        }),
    )?;
    println!("samples: {}", samples.len());
    println!("c-index: {}", fmt_metric(metrics.c_index));
    println!("auc: {}", fmt_metric(metrics.auc));
    match lr {
        Some(l) => println!("log-rank: chi2 {:.4}, p {:.4e}", l.statistic, l.p_value),
        None => println!("log-rank: undefined (no events)"),
    }
    Ok(())
}

fn cmd_verify(a: &VerifyArgs, seed: Option<u64>) -> CliResult {
    let fault = a.inject_fault.map(|f| match f {
        InjectedFault::TanhGradSign => Fault::TanhGradSign,
    });
    let results = run_checks(VerifyConfig { seed: seed.unwrap_or(0), fault });
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    for r in &results {
        println!("{} {} ({:.2}s) {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.seconds, r.detail);
    }
    println!("{}/{} checks passed", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(failure(format!("failed checks: {}", failed.join(", "))))
    }
}
