//! `spinwalk` command-line front end.
//!
//! Every subcommand reads an optional JSON experiment config, applies flag
//! overrides on top, writes CSV/JSON artifacts into the output directory and
//! records the resolved config in `manifest.json`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 engine limit, 4 malformed
//! records file.

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spinwalk::{Engine, ProtocolConfig, SpectralDensity};

use config::{parse_pooling, AnalysisConfig, BaselineConfig, BathSource, CalibrationMode, ExperimentConfig, TimeGrid};
use error::CliError;

#[derive(Parser)]
#[command(name = "spinwalk", version, about = "Repeated readout of a central spin in a finite spin bath")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Experiment config (JSON); a manifest from an earlier run also works.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Trajectory seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Bath spec JSON file, replacing the config's bath source.
    #[arg(long, global = true)]
    bath: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Free-induction decay C(t) on a time grid.
    Fid {
        #[arg(long)]
        t_start: Option<f64>,
        #[arg(long)]
        t_stop: Option<f64>,
        #[arg(long)]
        n_points: Option<usize>,
    },
    /// Simulate repeated readout runs and tabulate string statistics.
    Strings(ProtocolArgs),
    /// Exact string distribution with conditional bath purities.
    Enumerate(ProtocolArgs),
    /// Statistics of an existing records file.
    Analyze {
        records: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Classical baseline records and their statistics.
    Baseline {
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long, value_enum)]
        kind: Option<BaselineKind>,
        /// Probability of reading 0 (iid).
        #[arg(long)]
        p0: Option<f64>,
        /// Gaussian field spectrum of this width (static-field).
        #[arg(long, conflicts_with_all = ["uniform_bound", "matched"])]
        gamma: Option<f64>,
        /// Uniform field spectrum on [-b, b] (static-field).
        #[arg(long, conflicts_with = "matched")]
        uniform_bound: Option<f64>,
        /// Use the discrete spectrum matched to the bath (static-field).
        #[arg(long)]
        matched: bool,
        #[arg(long)]
        t_start: Option<f64>,
        #[arg(long)]
        t_stop: Option<f64>,
        #[arg(long)]
        n_points: Option<usize>,
    },
    /// Draw a bath and fix its coupling scale from a target T2*.
    Calibrate {
        #[arg(long)]
        n_spins: Option<usize>,
        #[arg(long)]
        zeeman: Option<f64>,
        #[arg(long)]
        target_t2star: Option<f64>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Seed of the bath draw.
        #[arg(long)]
        bath_seed: Option<u64>,
    },
}

#[derive(Args)]
struct ProtocolArgs {
    /// Contact time τ.
    #[arg(long)]
    tau: Option<f64>,
    /// Readouts per run.
    #[arg(short = 'n', long)]
    measurements: Option<usize>,
    /// Number of runs.
    #[arg(short = 'r', long)]
    repetitions: Option<usize>,
    #[arg(long)]
    readout_error: Option<f64>,
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
}

#[derive(Args)]
struct AnalysisArgs {
    /// Longest conditioning run in the repeat curve.
    #[arg(long)]
    n_max: Option<usize>,
    /// `pooled`, `0` or `1`.
    #[arg(long)]
    pooling: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    MonteCarlo,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Iid,
    StaticField,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Ensemble,
    Spec,
    Depolarized,
}

fn missing(what: &str) -> CliError {
    CliError::Config(format!("{what} is not set in the config or on the command line"))
}

impl ProtocolArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        let mut p = match cfg.protocol.take() {
            Some(p) => p,
            None => {
                let tau = self.tau.ok_or_else(|| missing("protocol contact time (--tau)"))?;
                let n = self.measurements.ok_or_else(|| missing("readouts per run (-n)"))?;
                ProtocolConfig::new(tau, n, self.repetitions.unwrap_or(1))
            }
        };
        if let Some(t) = self.tau {
            p.contact_time = t;
        }
        if let Some(n) = self.measurements {
            p.n_measurements = n;
        }
        if let Some(r) = self.repetitions {
            p.n_repetitions = r;
        }
        if let Some(e) = self.readout_error {
            p.readout_error = e;
        }
        if let Some(e) = self.engine {
            p.engine = match e {
                EngineArg::MonteCarlo => Engine::MonteCarlo,
                EngineArg::Exact => Engine::ExactEnumeration,
            };
        }
        cfg.protocol = Some(p);
        Ok(())
    }
}

impl AnalysisArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        let a = cfg.analysis.get_or_insert_with(AnalysisConfig::default);
        if let Some(n) = self.n_max {
            a.n_max = Some(n);
        }
        if let Some(p) = &self.pooling {
            parse_pooling(p)?;
            a.pooling = Some(p.clone());
        }
        Ok(())
    }
}

fn apply_grid(
    cfg: &mut ExperimentConfig,
    t_start: Option<f64>,
    t_stop: Option<f64>,
    n_points: Option<usize>,
) -> Result<(), CliError> {
    if t_start.is_none() && t_stop.is_none() && n_points.is_none() {
        return Ok(());
    }
    let mut g = match cfg.time_grid {
        Some(g) => g,
        None => TimeGrid {
            t_start: t_start.unwrap_or(0.0),
            t_stop: t_stop.ok_or_else(|| missing("time grid end (--t-stop)"))?,
            n_points: n_points.ok_or_else(|| missing("time grid size (--n-points)"))?,
        },
    };
    if let Some(t) = t_start {
        g.t_start = t;
    }
    if let Some(t) = t_stop {
        g.t_stop = t;
    }
    if let Some(n) = n_points {
        g.n_points = n;
    }
    cfg.time_grid = Some(g);
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.global.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let g = &cli.global;
    if g.seed.is_some() {
        cfg.seed = g.seed;
    }
    if let Some(w) = g.workers {
        if w == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        cfg.workers = Some(w);
    }
    if g.out.is_some() {
        cfg.outputs = g.out.clone();
    }
    if let Some(b) = &g.bath {
        cfg.bath = Some(BathSource::File(b.clone()));
    }

    match cli.command {
        Command::Fid { t_start, t_stop, n_points } => {
            apply_grid(&mut cfg, t_start, t_stop, n_points)?;
            commands::fid_cmd(cfg)
        }
        Command::Strings(p) => {
            p.apply(&mut cfg)?;
            commands::strings_cmd(cfg)
        }
        Command::Enumerate(p) => {
            p.apply(&mut cfg)?;
            commands::enumerate_cmd(cfg)
        }
        Command::Analyze { records, analysis } => {
            analysis.apply(&mut cfg)?;
            commands::analyze_cmd(cfg, &records)
        }
        Command::Baseline { protocol, analysis, kind, p0, gamma, uniform_bound, matched, t_start, t_stop, n_points } => {
            protocol.apply(&mut cfg)?;
            analysis.apply(&mut cfg)?;
            apply_grid(&mut cfg, t_start, t_stop, n_points)?;
            let density = match (gamma, uniform_bound) {
                (Some(gamma), _) => Some(SpectralDensity::Gaussian { gamma }),
                (_, Some(bound)) => Some(SpectralDensity::Uniform { bound }),
                _ => None,
            };
            let given_static = density.is_some() || matched;
            let kind = kind.or(if given_static { Some(BaselineKind::StaticField) } else { None });
            cfg.baseline = match (kind, cfg.baseline.take()) {
                (Some(BaselineKind::Iid), prev) => {
                    let old = match prev {
                        Some(BaselineConfig::Iid { p0 }) => p0,
                        _ => 0.5,
                    };
                    Some(BaselineConfig::Iid { p0: p0.unwrap_or(old) })
                }
                (Some(BaselineKind::StaticField), prev) => {
                    let old = match prev {
                        Some(BaselineConfig::StaticField { density }) if !matched => density,
                        _ => None,
                    };
                    Some(BaselineConfig::StaticField { density: density.or(old) })
                }
                (None, Some(BaselineConfig::Iid { p0: old })) => Some(BaselineConfig::Iid { p0: p0.unwrap_or(old) }),
                (None, prev) => prev,
            };
            commands::baseline_cmd(cfg)
        }
        Command::Calibrate { n_spins, zeeman, target_t2star, mode, bath_seed } => {
            let mut d = match cfg.bath.take() {
                Some(BathSource::Sample(d)) => d,
                _ => config::SampleDirective {
                    n_spins: n_spins.ok_or_else(|| missing("bath size (--n-spins)"))?,
                    coupling_scale: None,
                    target_t2star: None,
                    zeeman: 0.0,
                    seed: bath_seed.ok_or_else(|| missing("bath seed (--bath-seed)"))?,
                    calibration: CalibrationMode::default(),
                },
            };
            if let Some(n) = n_spins {
                d.n_spins = n;
            }
            if let Some(z) = zeeman {
                d.zeeman = z;
            }
            if let Some(t) = target_t2star {
                d.target_t2star = Some(t);
                d.coupling_scale = None;
            }
            if let Some(s) = bath_seed {
                d.seed = s;
            }
            if let Some(m) = mode {
                d.calibration = match m {
                    Mode::Ensemble => CalibrationMode::Ensemble,
                    Mode::Spec => CalibrationMode::Spec,
                    Mode::Depolarized => CalibrationMode::Depolarized,
                };
            }
            cfg.bath = Some(BathSource::Sample(d));
            commands::calibrate_cmd(cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spinwalk: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
