//! `whisker`: simulate flights, identify parameters, train the network,
//! run the estimator and score it.
//!
//! Outputs default to the directory named by `WHISKER_OUT_DIR`, or the
//! working directory when it is unset.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use whisker_core::lstm::{train, TrainConfig};
use whisker_io::acceptance::{self, params_from_log};
use whisker_io::identify::{identify_coefficients, identify_drag, DragData};
use whisker_io::scenario_file::load_scenario;
use whisker_io::{estimate, read_estimates, read_log, read_weights_file, replay, write_estimates, write_log, write_weights_file, Airflow, EstimatorConfig, Params};
use whisker_sim::{run_scenario, FlightLog, SimError};

const OUT_DIR_VAR: &str = "WHISKER_OUT_DIR";

#[derive(Parser)]
#[command(name = "whisker", version, about = "Wind, drag and interaction-force estimation for a whisker-equipped hexarotor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AirflowSource {
    /// Whisker angles through the physical sensor model.
    Model,
    /// Relative airflow predicted by the trained network.
    Lstm,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DragSource {
    /// Odometry only; works on any log.
    Odometry,
    /// Simulator truth; needs truth.csv.
    Truth,
}

#[derive(Subcommand)]
enum Command {
    /// Fly a scenario in the simulator and write the log directory.
    Sim {
        /// Preset name or path to a scenario TOML file.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Log directory [default: <out dir>/<scenario>_<seed>].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Identify the drag coefficients and whisker coefficients from still-air logs.
    Sysid {
        /// Log directories; the drag fit uses all, the whisker fit the first.
        #[arg(long = "log", required = true)]
        logs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = DragSource::Odometry)]
        source: DragSource,
        /// Parameters to update [default: taken from the first log].
        #[arg(long)]
        params: Option<PathBuf>,
        /// [default: <out dir>/params.cfg]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the airflow network on logs that carry truth.
    Train {
        #[arg(long = "log", required = true)]
        logs: Vec<PathBuf>,
        /// [default: taken from the first log]
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// [default: <out dir>/weights.csv]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the estimator over a log and write the estimate stream.
    Estimate {
        #[arg(long)]
        log: PathBuf,
        /// [default: taken from the log]
        #[arg(long)]
        params: Option<PathBuf>,
        /// Network weights; required with `--airflow-source lstm`.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = AirflowSource::Model)]
        airflow_source: AirflowSource,
        /// [default: <out dir>/estimate.csv]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score an estimate stream against the log's truth.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Estimate stream; the model-based estimator is run when omitted.
        #[arg(long)]
        estimate: Option<PathBuf>,
    },
    /// Run the acceptance suite; exits nonzero when any criterion fails.
    Eval {
        /// Criterion numbers to run [default: all].
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

fn out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_VAR).map_or_else(|| PathBuf::from("."), PathBuf::from)
}

fn out_path(explicit: Option<PathBuf>, default_name: &str) -> Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p);
    }
    let dir = out_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.join(default_name))
}

fn load_log(dir: &Path) -> Result<FlightLog> {
    Ok(read_log(dir)?)
}

fn load_params(path: Option<&Path>, log: &FlightLog) -> Result<Params> {
    Ok(match path {
        Some(p) => Params::read(p)?,
        None => params_from_log(log),
    })
}

fn sim(scenario: &str, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let s = load_scenario(scenario, seed)?;
    let dir = out_path(out, &format!("{}_{}", s.name, s.seed))?;
    let log = match run_scenario(&s) {
        Ok(log) => log,
        Err(SimError::Diverged { t, log }) => {
            write_log(&dir, &log)?;
            bail!("controller diverged at t = {t:.3} s; partial log written to {}", dir.display());
        }
        Err(e) => return Err(e.into()),
    };
    write_log(&dir, &log)?;
    println!("wrote {} ({:.1} s, {} sensor samples)", dir.display(), log.duration(), log.sensors.len());
    Ok(())
}

fn sysid(logs: &[PathBuf], source: DragSource, params: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let logs: Vec<FlightLog> = logs.iter().map(|d| load_log(d)).collect::<Result<_>>()?;
    let mut p = load_params(params.as_deref(), &logs[0])?;
    let source = match source {
        DragSource::Odometry => DragData::Odometry,
        DragSource::Truth => DragData::Truth,
    };
    let fit = identify_drag(logs.iter(), source)?;
    p.vehicle.mu1 = fit.mu1;
    p.vehicle.mu2 = fit.mu2;
    let coefficients = identify_coefficients(&logs[0], &p)?;
    for (m, c) in p.rig.mounts.iter_mut().zip(&coefficients) {
        m.coefficient = *c;
    }
    let path = out_path(out, "params.cfg")?;
    p.write(&path)?;
    println!("mu1 = {:.6}, mu2 = {:.6} (residual RMS {:.4} N)", fit.mu1, fit.mu2, fit.residual_rms);
    println!("whisker coefficients: {coefficients:.5?}");
    println!("wrote {}", path.display());
    Ok(())
}

fn train_cmd(logs: &[PathBuf], params: Option<PathBuf>, epochs: Option<usize>, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let logs: Vec<FlightLog> = logs.iter().map(|d| load_log(d)).collect::<Result<_>>()?;
    if let Some((i, _)) = logs.iter().enumerate().find(|(_, l)| l.truth.is_empty()) {
        bail!("log {} has no truth channel to learn from", i + 1);
    }
    let p = load_params(params.as_deref(), &logs[0])?;
    let data = whisker_io::dataset::dataset(logs.iter(), &p)?;
    let mut config = TrainConfig::default();
    if let Some(e) = epochs {
        config.epochs = e;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    let outcome = train(&data, &config)?;
    if let Some(last) = outcome.loss_curve.last() {
        println!("{} rows, final training loss {:.4}, validation {:?}", data.len(), last.train, last.validation);
    }
    let path = out_path(out, "weights.csv")?;
    write_weights_file(&path, &outcome.model)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn estimate_cmd(log: &Path, params: Option<PathBuf>, weights: Option<PathBuf>, source: AirflowSource, out: Option<PathBuf>) -> Result<()> {
    let log = load_log(log)?;
    let p = load_params(params.as_deref(), &log)?;
    let model = match (source, weights) {
        (AirflowSource::Lstm, Some(w)) => Some(read_weights_file(&w)?),
        (AirflowSource::Lstm, None) => bail!("--airflow-source lstm needs --weights"),
        (AirflowSource::Model, _) => None,
    };
    let airflow = model.as_ref().map_or(Airflow::Model, Airflow::Lstm);
    let rows = estimate(&log, &p, &EstimatorConfig::default(), airflow)?;
    let path = out_path(out, "estimate.csv")?;
    write_estimates(&path, &rows)?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

fn replay_cmd(log: &Path, estimate_path: Option<PathBuf>) -> Result<()> {
    let log = load_log(log)?;
    let rows = match estimate_path {
        Some(p) => read_estimates(&p)?,
        None => estimate(&log, &params_from_log(&log), &EstimatorConfig::default(), Airflow::Model)?,
    };
    print!("{}", replay(&log, &rows)?);
    Ok(())
}

fn eval(only: &[u8]) -> Result<bool> {
    let ids: Vec<u8> = if only.is_empty() { (1..=acceptance::NAMES.len() as u8).collect() } else { only.to_vec() };
    let mut all = true;
    for id in ids {
        let c = acceptance::run(id);
        println!("{c}");
        all &= c.passed;
    }
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sim { scenario, seed, out } => sim(&scenario, seed, out).map(|_| true),
        Command::Sysid { logs, source, params, out } => sysid(&logs, source, params, out).map(|_| true),
        Command::Train { logs, params, epochs, seed, out } => train_cmd(&logs, params, epochs, seed, out).map(|_| true),
        Command::Estimate { log, params, weights, airflow_source, out } => estimate_cmd(&log, params, weights, airflow_source, out).map(|_| true),
        Command::Replay { log, estimate } => replay_cmd(&log, estimate).map(|_| true),
        Command::Eval { only } => eval(&only),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
