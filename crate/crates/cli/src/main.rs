use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use demailly::continuation::PathOutcome;
use demailly::scenario::{self, ScenarioConfig, ScenarioError};

#[derive(Parser)]
#[command(name = "demailly", version, about = "Continuity-path solver and estimate harness for Hermitian metrics on the square torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the continuity path and write records, outcome and snapshots.
    Run(Common),
    /// Check invariants and identities on the scenario data without running the path.
    Verify(Common),
    /// Compare the matrix solver with the decoupled solver on diagonal data.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (key = value).
    #[arg(value_name = "CONFIG")]
    config_pos: Option<PathBuf>,
    #[arg(long, value_name = "PATH", conflicts_with = "config_pos")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Preset name; overrides the file.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    #[arg(long, value_name = "INT")]
    n: Option<usize>,
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Write binary field snapshots.
    #[arg(long)]
    snapshots: bool,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig, ScenarioError> {
        let mut cfg = match self.config.as_ref().or(self.config_pos.as_ref()) {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(p) = &self.preset {
            cfg.preset = Some(p.clone());
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = Some(o.clone());
        }
        cfg.snapshots |= self.snapshots;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn configure_threads() {
    if let Some(k) = std::env::var("DEMAILLY_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if k > 0 {
            // a second initialization only fails if a pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
    }
}

fn run(cmd: Command) -> Result<i32, ScenarioError> {
    match cmd {
        Command::Run(c) => {
            let cfg = c.load()?;
            let summary = scenario::run_scenario(&cfg)?;
            println!("outcome: {}", summary.outcome.name());
            println!("accepted steps: {}", summary.records.len() - 1);
            if let Some(m) = summary.final_min_curvature {
                println!("final min curvature eigenvalue: {m:.6e}");
            }
            if let PathOutcome::Destabilized(rep) = &summary.outcome {
                println!("rank_pi: {}  degQ_estimate: {:.6}", rep.rank_pi, rep.degq_estimate);
            }
            for chk in summary.checks.checks.iter().filter(|c| c.applicable) {
                println!("check {}: {}", chk.name, if chk.passed { "pass" } else { "FAIL" });
            }
            Ok(summary.exit_code())
        }
        Command::Verify(c) => {
            let rep = scenario::verify_scenario(&c.load()?)?;
            print!("{}", rep.to_text());
            Ok(if rep.passed() { 0 } else { 1 })
        }
        Command::Oracle(c) => {
            let (rows, ok) = scenario::oracle_compare(&c.load()?, &[0.0, 0.5, 1.0])?;
            for r in &rows {
                println!("t = {:.3}  |f - f_ds| = {:.3e}  |eig H - u| = {:.3e}", r.t, r.f_error, r.eigenvalue_error);
            }
            println!("{}", if ok { "PASS" } else { "FAIL" });
            Ok(if ok { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
