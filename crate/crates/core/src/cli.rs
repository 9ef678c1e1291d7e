//! Command-line front end. Every subcommand writes its manifest first, then
//! its outputs, into the `--out` directory.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! failures while running.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::experiment::{
    init_twin, run_ablation, run_reference, run_sweep, run_twin, spin_up, ExperimentConfig, SweepAxis,
};
use crate::grid::Grid;
use crate::io::{
    read_config_unchecked, read_snapshot_for, validate_config, write_ablation_csv, write_error_csv, write_snapshot, write_sweep,
    RunManifest,
};
use crate::physics::LayeredState;
use crate::validation::validation_suite;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "aot-ocean", version, about = "Nudging twin experiments on a layered ocean model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Configuration file (flat `section.key = value` lines); defaults if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Run even when the time-step stability checks fail.
    #[arg(long)]
    override_stability: bool,
}

#[derive(Args, Debug, Clone)]
struct FromState {
    /// Start from this snapshot instead of spinning up.
    #[arg(long)]
    init: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spin the model up to statistical equilibrium and save the state.
    Spinup {
        #[command(flatten)]
        common: Common,
    },
    /// Run the reference (truth) simulation and save its end points.
    Reference {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        from: FromState,
    },
    /// Run one assimilating twin and write its error series.
    Assimilate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        from: FromState,
    },
    /// Term-by-term ablation under both time-stepping schemes.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        from: FromState,
    },
    /// Vary one assimilation parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        from: FromState,
        /// mu, dt_obs, delta, tracers or dt.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Check the nudged steppers against closed-form solutions.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        override_stability: bool,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>, override_stability: bool) -> Result<(ExperimentConfig, Grid), Failure> {
    let mut cfg = match path {
        Some(p) => read_config_unchecked(p).map_err(|e| Failure::Config(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if override_stability {
        cfg.assim.override_stability = true;
    }
    validate_config(&cfg).map_err(|e| Failure::Config(e.to_string()))?;
    let grid = cfg.build_grid().map_err(|e| Failure::Config(e.to_string()))?;
    Ok((cfg, grid))
}

fn prepare(out: &Path, command: &str, cfg: &ExperimentConfig, grid: &Grid, files: &[String]) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(Failure::runtime)?;
    RunManifest::new(command, cfg, grid, files.to_vec()).write(out).map_err(Failure::runtime)
}

fn start_state(cfg: &ExperimentConfig, grid: &Grid, from: &FromState) -> Result<LayeredState, Failure> {
    match &from.init {
        Some(p) => read_snapshot_for(p, grid).map_err(Failure::runtime),
        None => spin_up(cfg, grid).map_err(Failure::runtime),
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), Failure> {
    match cli.command {
        Command::Spinup { common } => {
            let (cfg, grid) = load_config(common.config.as_deref(), common.seed, common.override_stability)?;
            let files = vec!["spinup.nocn".to_string()];
            prepare(&common.out, "spinup", &cfg, &grid, &files)?;
            let s = spin_up(&cfg, &grid).map_err(Failure::runtime)?;
            write_snapshot(&common.out.join(&files[0]), &grid, &s).map_err(Failure::runtime)?;
            let _ = writeln!(stdout, "spun up after {} s", s.t);
        }
        Command::Reference { common, from } => {
            let (cfg, grid) = load_config(common.config.as_deref(), common.seed, common.override_stability)?;
            let files = vec!["reference_start.nocn".to_string(), "reference_end.nocn".to_string()];
            prepare(&common.out, "reference", &cfg, &grid, &files)?;
            let s0 = start_state(&cfg, &grid, &from)?;
            let (fin, store) = run_reference(&cfg, &grid, &s0).map_err(Failure::runtime)?;
            let mut start = s0.clone();
            start.t = 0.0;
            write_snapshot(&common.out.join(&files[0]), &grid, &start).map_err(Failure::runtime)?;
            write_snapshot(&common.out.join(&files[1]), &grid, &fin).map_err(Failure::runtime)?;
            let _ = writeln!(stdout, "recorded {} observation snapshots", store.len());
        }
        Command::Assimilate { common, from } => {
            let (cfg, grid) = load_config(common.config.as_deref(), common.seed, common.override_stability)?;
            let files = vec!["errors.csv".to_string(), "errors_snapshots.csv".to_string()];
            prepare(&common.out, "assimilate", &cfg, &grid, &files)?;
            let s0 = start_state(&cfg, &grid, &from)?;
            let (fin, store) = run_reference(&cfg, &grid, &s0).map_err(Failure::runtime)?;
            let series = run_twin(&cfg, &grid, &store, &init_twin(&store, &fin)).map_err(Failure::runtime)?;
            write_error_csv(&common.out.join(&files[0]), &series).map_err(Failure::runtime)?;
            write_error_csv(&common.out.join(&files[1]), &series.at_snapshot_times(cfg.assim.dt_obs))
                .map_err(Failure::runtime)?;
            let _ = writeln!(stdout, "min rms_ke {:.6e}", series.min_rms_ke());
        }
        Command::Ablate { common, from } => {
            let (cfg, grid) = load_config(common.config.as_deref(), common.seed, common.override_stability)?;
            let files = vec!["ablation.csv".to_string()];
            prepare(&common.out, "ablate", &cfg, &grid, &files)?;
            let s0 = start_state(&cfg, &grid, &from)?;
            let (fin, _) = run_reference(&cfg, &grid, &s0).map_err(Failure::runtime)?;
            let table = run_ablation(&cfg, &grid, &s0, &fin).map_err(Failure::runtime)?;
            write_ablation_csv(&common.out.join(&files[0]), &table).map_err(Failure::runtime)?;
            for e in &table.entries {
                let (ex, im) = e.plateaus();
                let _ = writeln!(stdout, "{:<28} {ex:.4e} {im:.4e}", e.row.label());
            }
        }
        Command::Sweep { common, from, axis, values } => {
            let (cfg, grid) = load_config(common.config.as_deref(), common.seed, common.override_stability)?;
            for &v in &values {
                crate::experiment::sweep_config(&cfg.assim, axis, v).map_err(|e| Failure::Config(e.to_string()))?;
            }
            let mut files: Vec<String> = (0..values.len()).map(|i| format!("sweep_{}_{i}.csv", axis.name())).collect();
            files.push(format!("sweep_{}_summary.csv", axis.name()));
            prepare(&common.out, "sweep", &cfg, &grid, &files)?;
            let s0 = start_state(&cfg, &grid, &from)?;
            let table = run_sweep(&cfg, &grid, &s0, axis, &values).map_err(Failure::runtime)?;
            let written = write_sweep(&common.out, &table).map_err(Failure::runtime)?;
            debug_assert_eq!(written, files);
            for r in &table.runs {
                let _ = writeln!(stdout, "{} = {}: min rms_ke {:.6e}", axis.name(), r.value, r.series.min_rms_ke());
            }
        }
        Command::Validate { config, out, seed, override_stability } => {
            let (cfg, grid) = load_config(config.as_deref(), seed, override_stability)?;
            let files = vec!["validation.txt".to_string()];
            if let Some(dir) = &out {
                prepare(dir, "validate", &cfg, &grid, &files)?;
            }
            let checks = validation_suite(&grid, cfg.assim.dt);
            let report: String = checks.iter().map(|c| format!("{c}\n")).collect();
            let _ = stdout.write_all(report.as_bytes());
            if let Some(dir) = &out {
                std::fs::write(dir.join(&files[0]), &report).map_err(Failure::runtime)?;
            }
            if let Some(bad) = checks.iter().find(|c| !c.pass) {
                return Err(Failure::Runtime(format!("validation check '{}' failed", bad.name)));
            }
        }
    }
    Ok(())
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    EXIT_CONFIG
                }
            };
        }
    };
    match execute(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(Failure::Config(m)) => {
            let _ = writeln!(stderr, "config error: {m}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(m)) => {
            let _ = writeln!(stderr, "runtime error: {m}");
            EXIT_RUNTIME
        }
    }
}
