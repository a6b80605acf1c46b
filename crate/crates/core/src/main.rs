use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use endoguide::cli::{
    exit_code, run_batch, run_mission, run_prepared_compare, write_outputs, MissionConfig, MissionOutcome,
    OutputFormat, Scenario,
};
use endoguide::error::GuidanceError;

#[derive(Parser)]
#[command(name = "endoguide", version, about = "Optimal interception trajectories by indirect shooting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one mission.
    Solve {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Solve N missions towards random targets (zero weight, free time).
    Batch {
        config: PathBuf,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Solve a fixed-time comparison scenario.
    Compare {
        config: PathBuf,
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Integration steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Shooting tolerance on the scaled residual.
    #[arg(long)]
    tol: Option<f64>,
    /// Chart switching angle [deg].
    #[arg(long = "switch-deg")]
    switch_deg: Option<f64>,
    /// Output directory for the trajectory, history and reports.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Sc1,
    Sc2,
    Sc3,
}

impl Common {
    fn apply(&self, cfg: &mut MissionConfig) -> Result<(), GuidanceError> {
        if let Some(steps) = self.steps {
            cfg.solver.steps = steps;
        }
        if let Some(tol) = self.tol {
            cfg.solver.tol = tol;
        }
        if let Some(deg) = self.switch_deg {
            cfg.solver.switch_deg = deg;
        }
        cfg.validate()
    }

    fn format(&self) -> OutputFormat {
        match self.format {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }

    fn emit(&self, outcome: &MissionOutcome, cfg: &MissionConfig) -> Result<(), GuidanceError> {
        if let Some(dir) = &self.out {
            write_outputs(dir, outcome, &cfg.vehicle, self.format()).map_err(io_error(dir))?;
        }
        Ok(())
    }
}

fn io_error(dir: &Path) -> impl Fn(std::io::Error) -> GuidanceError + '_ {
    move |e| GuidanceError::InvalidInput(format!("{}: {e}", dir.display()))
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<(), GuidanceError> {
    std::fs::create_dir_all(dir).map_err(io_error(dir))?;
    let text = serde_json::to_string_pretty(value).map_err(|e| GuidanceError::InvalidInput(e.to_string()))?;
    std::fs::write(dir.join(name), text).map_err(io_error(dir))
}

fn run(cli: Cli) -> Result<(), GuidanceError> {
    match cli.command {
        Command::Solve { config, common } => {
            let mut cfg = MissionConfig::load(&config)?;
            common.apply(&mut cfg)?;
            let outcome = run_mission(&cfg)?;
            println!("{}", outcome.summary_line());
            common.emit(&outcome, &cfg)
        }
        Command::Batch { config, n, seed, common } => {
            let mut cfg = MissionConfig::load(&config)?;
            common.apply(&mut cfg)?;
            let report = run_batch(&cfg, n, seed)?;
            println!("{}", report.summary_line());
            if let Some(dir) = &common.out {
                write_json(dir, "batch.json", &report)?;
            }
            Ok(())
        }
        Command::Compare { config, scenario, common } => {
            let scenario = match scenario {
                ScenarioArg::Sc1 => Scenario::Sc1,
                ScenarioArg::Sc2 => Scenario::Sc2,
                ScenarioArg::Sc3 => Scenario::Sc3,
            };
            let mut cfg = scenario.configure(&MissionConfig::load(&config)?);
            common.apply(&mut cfg)?;
            let (report, outcome) = run_prepared_compare(&cfg, scenario)?;
            println!("{}", report.summary_line());
            common.emit(&outcome, &cfg)?;
            if let Some(dir) = &common.out {
                write_json(dir, "compare.json", &report)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
