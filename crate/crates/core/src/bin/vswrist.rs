use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vswrist::error::{Result, WristError};
use vswrist::harness::{
    paper_experiment, rms_metrics, run_scenario, stiffness_sweep, ExperimentConfig, ScenarioConfig,
};

#[derive(Parser)]
#[command(name = "vswrist", version, about = "Variable-stiffness parallel wrist simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the physics step (s).
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Args)]
struct ConfigArg {
    /// Scenario JSON file.
    path: Option<PathBuf>,
    #[arg(long = "config")]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn resolve(&self) -> Result<&Path> {
        self.config
            .as_deref()
            .or(self.path.as_deref())
            .ok_or_else(|| WristError::config("config", "no configuration file given"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write `<name>.csv`.
    Run(ConfigArg),
    /// Static compliance sweep at the central posture.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        /// Comma-separated preloads (N·mm).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        lambda: Vec<f64>,
    },
    /// Loaded low/high-stiffness trials plus the sweep.
    PaperExperiment {
        /// Experiment JSON file; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check a scenario file without running it.
    Validate(ConfigArg),
}

fn load_scenario(arg: &ConfigArg, common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(arg.resolve()?)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(dt) = common.dt {
        cfg.dynamics.dt = dt;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<()> {
    let common = &cli.common;
    let say = |msg: String| {
        if !common.quiet {
            eprintln!("{msg}");
        }
    };
    match &cli.command {
        Command::Validate(arg) => {
            let cfg = load_scenario(arg, common)?;
            say(format!("{}: ok", cfg.name));
        }
        Command::Run(arg) => {
            let cfg = load_scenario(arg, common)?;
            let log = run_scenario(&cfg)?;
            let path = common.out.join(format!("{}.csv", cfg.name));
            log.save_csv(&path)?;
            say(format!("wrote {} ({} samples)", path.display(), log.samples.len()));
            if let Ok(rms) = rms_metrics(&log, 0.0) {
                say(format!(
                    "rms error {:.6e} rad, rms torque {:.6e} N·m",
                    rms.rms_error, rms.rms_torque
                ));
            }
            if let Some(reason) = log.halt {
                let t = log.samples.last().map_or(0.0, |s| s.t);
                return Err(WristError::SimulationHalt { time: t, reason });
            }
        }
        Command::Sweep { config, lambda } => {
            let cfg = load_scenario(config, common)?;
            let table = stiffness_sweep(&cfg, lambda)?;
            let path = common.out.join("sweep.csv");
            table.save_csv(&path)?;
            say(format!("wrote {}", path.display()));
        }
        Command::PaperExperiment { config } => {
            let mut cfg = match config {
                Some(p) => ExperimentConfig::from_json(&std::fs::read_to_string(p)?)?,
                None => ExperimentConfig::default(),
            };
            cfg.override_run(common.seed, common.dt);
            let result = paper_experiment(&cfg)?;
            result.write(&common.out)?;
            let s = &result.summary;
            say(format!(
                "LS: rms error {:.4} rad, rms torque {:.4} N·m\nHS: rms error {:.4} rad, rms torque {:.4} N·m\nerror ratio {:.2}, torque ratio {:.2}",
                s.ls.rms.rms_error, s.ls.rms.rms_torque, s.hs.rms.rms_error, s.hs.rms.rms_torque,
                s.error_ratio, s.torque_ratio
            ));
            say(format!("wrote ls.csv, hs.csv, sweep.csv, summary.json to {}", common.out.display()));
            for log in [&result.ls, &result.hs] {
                if let Some(reason) = &log.halt {
                    let time = log.samples.last().map_or(0.0, |s| s.t);
                    return Err(WristError::SimulationHalt { time, reason: format!("{}: {reason}", log.name) });
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(match e.category() {
                "config" => 2,
                "simulation-halt" => 3,
                "io" => 4,
                _ => 1,
            })
        }
    }
}
