//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::stepper::RunStatus;

use super::config::{load_config, resolve_ineq, resolve_run, resolve_sweep, Loaded, RunKind, SCHEMA};
use super::output::{read_manifest, verify_manifest, VerdictEntry};
use super::runner::{run_ineq, run_single, run_sweep, Invocation};
use super::HarnessError;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Error = 1,
    BlowUp = 2,
    Usage = 64,
}

impl ExitCode {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// Environment variable naming the output root.
pub const OUT_ENV: &str = "KSNBC_OUT";

#[derive(Debug, Parser)]
#[command(name = "ksnbc", version, about = "Chemotaxis simulator with nonlinear boundary flux")]
struct Args {
    /// Output directory (overrides KSNBC_OUT and the config `output` key)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Reject unknown configuration keys
    #[arg(long, global = true)]
    strict: bool,
    /// Overrides the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the chemotaxis system
    Run { config: PathBuf },
    /// Integrate the scalar boundary-flux problem
    Nbc { config: PathBuf },
    /// Run a (p, mu[, chi]) parameter sweep
    Sweep { config: PathBuf },
    /// Fit inequality constants on a random field ensemble
    Ineq { config: PathBuf },
    /// Summarize an output directory and verify its checksums
    Report { dir: PathBuf },
}

fn output_root(flag: Option<&Path>, loaded: &Loaded, command: &str) -> PathBuf {
    if let Some(out) = flag {
        return out.to_path_buf();
    }
    if let Some(env) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(env);
    }
    if let Some(out) = &loaded.file.output {
        return out.clone();
    }
    let stem = loaded.path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    PathBuf::from("ksnbc-out").join(format!("{command}-{stem}"))
}

fn load(args: &Args, path: &Path) -> Result<Loaded, HarnessError> {
    let mut loaded = load_config(path, args.strict)?;
    for key in &loaded.unknown {
        eprintln!("warning: unknown key `{key}` in {} (ignored; --strict rejects it)", path.display());
    }
    if let Some(seed) = args.seed {
        loaded.file.seed = seed;
    }
    Ok(loaded)
}

fn invocation(command: &str, loaded: &Loaded) -> Invocation {
    Invocation {
        command: command.to_string(),
        config_path: Some(loaded.path.clone()),
        unknown_keys: loaded.unknown.clone(),
    }
}

fn run_command(args: &Args, kind: RunKind, path: &Path) -> Result<ExitCode, HarnessError> {
    let name = match kind {
        RunKind::Chemotaxis => "run",
        RunKind::Nbc => "nbc",
    };
    let loaded = load(args, path)?;
    let cfg = resolve_run(&loaded, kind)?;
    let out = output_root(args.out.as_deref(), &loaded, name);
    let report = run_single(&cfg, &out, &invocation(name, &loaded))?;
    let outcome = &report.result.outcome;
    println!("{}: {} after {} steps ({:.2} s)", name, outcome.status.name(), outcome.steps, outcome.wall_time);
    if let Some(VerdictEntry::Verdict(v)) = report.manifest.verdicts.get("sup_u") {
        println!("sup_u: {} (sup {:.6e}, tail slope {:.3e})", v.status, v.sup, v.slope);
    }
    println!("output: {}", out.display());
    Ok(match &outcome.status {
        RunStatus::Completed => ExitCode::Ok,
        RunStatus::BlowUp { t, max_u } => {
            eprintln!("blow-up at t = {t:.6e}, max u = {max_u:.6e}");
            ExitCode::BlowUp
        }
        RunStatus::NegativityFailure { t, min_u } => {
            eprintln!("error: u undershoots to {min_u:.3e} at t = {t:.6e}");
            ExitCode::Error
        }
        RunStatus::SolverFailure { t, detail } => {
            eprintln!("error: solver failure at t = {t:.6e}: {detail}");
            ExitCode::Error
        }
    })
}

fn sweep_command(args: &Args, path: &Path) -> Result<ExitCode, HarnessError> {
    let loaded = load(args, path)?;
    let cfg = resolve_sweep(&loaded)?;
    let out = output_root(args.out.as_deref(), &loaded, "sweep");
    let report = run_sweep(&cfg, &out, &invocation("sweep", &loaded), args.workers)?;
    for row in &report.rows {
        println!(
            "p = {:<6} mu = {:<6} chi = {:<6} {:<18} sup_u {}",
            row.p, row.mu, row.chi, row.outcome, row.verdict_sup_u
        );
    }
    println!("output: {}", out.display());
    Ok(ExitCode::Ok)
}

fn ineq_command(args: &Args, path: &Path) -> Result<ExitCode, HarnessError> {
    let loaded = load(args, path)?;
    let cfg = resolve_ineq(&loaded)?;
    let out = output_root(args.out.as_deref(), &loaded, "ineq");
    let report = run_ineq(&cfg, &out, &invocation("ineq", &loaded))?;
    for fit in &report.fits {
        let constants: Vec<String> = fit.constants.iter().map(|c| format!("{c:.4e}")).collect();
        println!(
            "{:<16} {:<24} C = [{}] spread {:.3} violations {}",
            fit.lemma,
            fit.parameters,
            constants.join(", "),
            fit.spread,
            fit.violations
        );
    }
    for c in &report.convexity {
        println!(
            "convexity {}x{}: max {:.3e} (bound {:.3e}), constant field {}",
            c.cells[0], c.cells[1], c.max_cosine, c.bound, c.constant_field
        );
    }
    println!("output: {}", out.display());
    Ok(ExitCode::Ok)
}

fn report_command(dir: &Path) -> Result<ExitCode, HarnessError> {
    let manifest = read_manifest(dir)?;
    println!("command:  {}", manifest.command);
    println!("version:  {}", manifest.code_version);
    println!("started:  {}", manifest.started);
    println!("finished: {}", manifest.finished);
    if let Some(outcome) = &manifest.outcome {
        println!("outcome:  {} ({} steps, {:.2} s)", outcome.status.name(), outcome.steps, outcome.wall_time);
    }
    if let Some(class) = &manifest.classification {
        let citation = class.citation.map(|c| c.label()).unwrap_or("none");
        println!("regime:   {} ({citation})", class.verdict);
    }
    if let Some(r) = manifest.compatibility_residual {
        println!("compatibility residual: {r:.6e}");
    }
    for (name, entry) in &manifest.verdicts {
        match entry {
            VerdictEntry::Verdict(v) => println!("  {name:<16} {:<8} sup {:.6e} slope {:.3e}", v.status, v.sup, v.slope),
            VerdictEntry::Unavailable { error } => println!("  {name:<16} unavailable: {error}"),
        }
    }
    if !manifest.summary.is_null() {
        println!("summary:  {}", manifest.summary);
    }
    let bad = verify_manifest(dir, &manifest);
    println!("files:    {} listed, {} failing verification", manifest.files.len(), bad.len());
    for b in &bad {
        eprintln!("  {b}");
    }
    Ok(if bad.is_empty() { ExitCode::Ok } else { ExitCode::Error })
}

/// Parses `argv` (program name first), runs the command and returns the exit status.
pub fn cli<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(args) => args,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::Ok;
            }
            eprint!("{e}");
            eprintln!("\nconfiguration schema:\n{SCHEMA}");
            return ExitCode::Usage;
        }
    };
    if args.workers == Some(0) {
        eprintln!("error: --workers must be at least 1\n\nconfiguration schema:\n{SCHEMA}");
        return ExitCode::Usage;
    }
    let result = match &args.command {
        Command::Run { config } => run_command(&args, RunKind::Chemotaxis, config),
        Command::Nbc { config } => run_command(&args, RunKind::Nbc, config),
        Command::Sweep { config } => sweep_command(&args, config),
        Command::Ineq { config } => ineq_command(&args, config),
        Command::Report { dir } => report_command(dir),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::Error
        }
    }
}
