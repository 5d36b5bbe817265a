//! `tolc` subcommands: `margin`, `synthesize`, `simulate`, `verify`.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input error, 3 unstable
//! loop, 4 infeasible synthesis, 5 runtime fault.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{contract_block, ConfigError, WorkspaceConfig};
use crate::contract::{ContractError, TimingTrace};
use crate::jitter::composite_stats;
use crate::margin::{
    effective_period_bound, margin_per_state, synthesize_contract, MarginError, Synthesis, SynthesisRequest,
};
use crate::sim::{monte_carlo, run, SimError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_UNSTABLE: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;
pub const EXIT_RUNTIME: i32 = 5;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "TOLC_OUTPUT_DIR";
const FALLBACK_OUTPUT_DIR: &str = "tolc-out";

#[derive(Debug, Parser)]
#[command(
    name = "tolc",
    version,
    about = "Timing-tolerance contracts for networked control loops"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-state jitter margins of the closed loops and their profiles.
    Margin {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Derive contract parameters from the jitter margins.
    Synthesize {
        config: PathBuf,
        /// Fraction of the usable margin given to the sampling jitter.
        #[arg(long)]
        rho: Option<f64>,
        /// Fraction of the margin that is usable.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the loop; more than one run aggregates a Monte Carlo report.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a `k,t_s,t_a,t_u` trace against the contract in a config file.
    Verify {
        contract: PathBuf,
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure carrying its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_INPUT,
            message: e.to_string(),
        }
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: e.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::input(e)
    }
}

impl From<MarginError> for Failure {
    fn from(e: MarginError) -> Self {
        match e {
            MarginError::UnstableClosedLoop { .. } => Self {
                code: EXIT_UNSTABLE,
                message: e.to_string(),
            },
            other => Self::input(other),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::runtime(e)
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return EXIT_INPUT;
            }
            let _ = write!(stdout, "{e}");
            return EXIT_OK;
        }
    };
    match execute(&cli.command, stdout) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn execute(cmd: &Command, stdout: &mut dyn Write) -> Result<i32, Failure> {
    match cmd {
        Command::Margin { config, out } => cmd_margin(config, out.as_deref(), stdout),
        Command::Synthesize {
            config,
            rho,
            gamma,
            h,
            tau,
            out,
        } => cmd_synthesize(config, [*h, *tau, *rho, *gamma], out.as_deref(), stdout),
        Command::Simulate {
            config,
            runs,
            seed,
            out,
        } => cmd_simulate(config, *runs, *seed, out.as_deref(), stdout),
        Command::Verify { contract, trace, out } => cmd_verify(contract, trace, out.as_deref(), stdout),
    }
}

/// Flag, then config, then environment, then `tolc-out`.
fn output_dir(flag: Option<&Path>, cfg: Option<&WorkspaceConfig>) -> Result<PathBuf, Failure> {
    let dir = flag
        .map(Path::to_path_buf)
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUTPUT_DIR));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    fs::write(dir.join(name), text)?;
    Ok(())
}

/// Seconds, shown in milliseconds below one second.
pub fn format_time(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else if v != 0.0 && v.abs() < 1.0 {
        format!("{:.6} ms", v * 1e3)
    } else {
        format!("{v:.6} s")
    }
}

fn format_omega(w: f64) -> String {
    if w.is_infinite() {
        "inf (limit)".to_string()
    } else {
        format!("{w:.6} rad/s")
    }
}

fn file_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cmd_margin(config: &Path, out: Option<&Path>, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let cfg = WorkspaceConfig::load(config)?;
    let plant = cfg.plant()?;
    let bank = cfg.bank()?;
    let margins = margin_per_state(&plant, &bank, &cfg.sweep())?;
    let dir = output_dir(out, Some(&cfg))?;
    let period = cfg
        .contract
        .as_ref()
        .map(|c| c.h)
        .or_else(|| cfg.synthesis.as_ref().and_then(|s| s.h));

    let mut report = format!("plant: {plant}\n");
    for (label, m) in &margins {
        report.push_str(&format!(
            "state {label}: j_max = {}, omega* = {}\n",
            format_time(m.j_max),
            format_omega(m.omega_star)
        ));
        if let Some(h) = period {
            report.push_str(&format!(
                "state {label}: effective period bound = {}\n",
                format_time(effective_period_bound(m.j_max, h))
            ));
        }
        let mut w = create(&dir, &format!("margin_profile_{}.csv", file_safe(label)))?;
        m.write_profile_csv(&mut w).map_err(Failure::runtime)?;
        w.flush()?;
    }
    write_text(&dir, "margin_report.txt", &report)?;
    stdout.write_all(report.as_bytes())?;
    Ok(EXIT_OK)
}

fn cmd_synthesize(
    config: &Path,
    [h, tau, rho, gamma]: [Option<f64>; 4],
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<i32, Failure> {
    let cfg = WorkspaceConfig::load(config)?;
    if cfg.contract.is_some() {
        return Err(Failure::input("config already contains a [contract] block"));
    }
    let (h, tau, policy) = cfg.synthesis_inputs(h, tau, rho, gamma)?;
    let plant = cfg.plant()?;
    let bank = cfg.bank()?;
    let stats = composite_stats(&cfg.hardware()?, &cfg.software()?, &cfg.network()?).map_err(Failure::input)?;
    let machine_id = cfg.machine_id();
    let synthesis = synthesize_contract(&SynthesisRequest {
        machine_id: &machine_id,
        plant: &plant,
        bank: &bank,
        stats,
        h,
        tau,
        policy,
        sweep: cfg.sweep(),
    })?;
    let dir = output_dir(out, Some(&cfg))?;

    let mut report = format!(
        "policy: rho = {}, gamma = {}\nsigma_T = {}\nmu_T = {}\n",
        policy.allocation,
        policy.safety_factor,
        format_time(stats.sigma_t),
        format_time(stats.mu_t)
    );
    let margins = match &synthesis {
        Synthesis::Feasible { margins, .. } | Synthesis::Infeasible { margins, .. } => margins,
    };
    for (label, m) in margins {
        report.push_str(&format!("state {label}: j_max = {}\n", format_time(m.j_max)));
    }
    match synthesis {
        Synthesis::Feasible { contract, .. } => {
            let block = contract_block(&contract);
            write_text(&dir, "contract.toml", &block)?;
            report.push_str("synthesis feasible\n");
            write_text(&dir, "synthesis_report.txt", &report)?;
            stdout.write_all(report.as_bytes())?;
            stdout.write_all(block.as_bytes())?;
            Ok(EXIT_OK)
        }
        Synthesis::Infeasible { report: infeasible, .. } => {
            report.push_str(&infeasible.describe());
            write_text(&dir, "synthesis_report.txt", &report)?;
            stdout.write_all(report.as_bytes())?;
            Ok(EXIT_INFEASIBLE)
        }
    }
}

fn cmd_simulate(
    config: &Path,
    runs: usize,
    seed: Option<u64>,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<i32, Failure> {
    let cfg = WorkspaceConfig::load(config)?;
    let scenario = cfg.scenario(seed)?;
    scenario.validate().map_err(Failure::input)?;
    if runs == 0 {
        return Err(Failure::input("--runs must be at least 1"));
    }
    let dir = output_dir(out, Some(&cfg))?;
    let result = run(&scenario).map_err(Failure::runtime)?;

    let mut w = create(&dir, "trace.csv")?;
    result.trace.write_csv(&mut w).map_err(Failure::runtime)?;
    w.flush()?;
    let mut w = create(&dir, "signals.csv")?;
    result.write_signals_csv(&mut w).map_err(Failure::runtime)?;
    w.flush()?;
    let summary = result.summary(&scenario);
    write_text(&dir, "summary.txt", &summary)?;
    stdout.write_all(summary.as_bytes())?;

    if runs > 1 {
        let report = monte_carlo(&scenario, runs).map_err(|e: SimError| Failure::runtime(e))?;
        let mut w = create(&dir, "runs.csv")?;
        report.write_runs_csv(&mut w).map_err(Failure::runtime)?;
        w.flush()?;
        let text = report.summary();
        write_text(&dir, "monte_carlo.txt", &text)?;
        stdout.write_all(text.as_bytes())?;
    }
    Ok(EXIT_OK)
}

fn cmd_verify(contract: &Path, trace: &Path, out: Option<&Path>, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let cfg = WorkspaceConfig::load(contract)?;
    let c = cfg.contract()?;
    let file = File::open(trace).map_err(|e| Failure::input(format!("cannot read {}: {e}", trace.display())))?;
    let trace = TimingTrace::read_csv(file).map_err(Failure::input)?;
    let verdict = c.check_trace(&trace).map_err(|e| match e {
        ContractError::Csv(_) => Failure::runtime(e),
        other => Failure::input(other),
    })?;
    let dir = output_dir(out, Some(&cfg))?;
    let report = verdict.report(&c, trace.len());
    write_text(&dir, "verdict.txt", &report)?;
    stdout.write_all(report.as_bytes())?;
    if verdict.satisfied() {
        return Ok(EXIT_OK);
    }
    let mut w = create(&dir, "violations.csv")?;
    verdict.write_violations_csv(&mut w).map_err(Failure::runtime)?;
    w.flush()?;
    Ok(EXIT_VIOLATED)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_formatting() {
        assert_eq!(format_time(1.0), "1.000000 s");
        assert_eq!(format_time(0.0004), "0.400000 ms");
        assert_eq!(format_time(0.0), "0.000000 s");
        assert_eq!(format_time(f64::INFINITY), "inf");
    }

    #[test]
    fn bad_arguments_exit_2() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(main_with(["tolc", "frobnicate"], &mut o, &mut e), EXIT_INPUT);
        assert_eq!(main_with(["tolc", "--help"], &mut o, &mut e), EXIT_OK);
    }

    #[test]
    fn missing_file_exit_2() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = main_with(["tolc", "margin", "/nonexistent/tolc.toml"], &mut o, &mut e);
        assert_eq!(code, EXIT_INPUT);
        assert!(String::from_utf8(e).unwrap().contains("cannot read"));
    }
}
