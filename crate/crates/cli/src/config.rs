//! Run configuration: TOML document, per-subcommand defaults and CLI
//! overrides, resolved into a core `Experiment`.

use std::path::{Path, PathBuf};

use beamtrack::array::{reference_beta, reference_pilot, ArrayConfig, SnrConfig, DEFAULT_SPACING_RATIO};
use beamtrack::baselines::KfParams;
use beamtrack::dynamics::TrajectoryModel;
use beamtrack::harness::{Algorithm, Experiment, InitMode, SimulationSpec};
use beamtrack::trackers::{alpha_star, StepSizeSchedule};
use serde::{Deserialize, Serialize};

use crate::Command;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub array: ArraySection,
    pub snr: SnrSection,
    pub run: RunSection,
    pub tracker: TrackerSection,
    pub algorithms: Option<Vec<Algorithm>>,
    pub trajectory: Option<TrajectoryModel>,
    pub kalman: KalmanSection,
    pub wlan: WlanSection,
    pub sweep: SweepSection,
    pub table1: Table1Section,
    pub init_rate: InitRateSection,
    pub theory: TheorySection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArraySection {
    /// Tracking antennas.
    pub antennas: Option<usize>,
    pub spacing_ratio: Option<f64>,
    /// Data antennas (defaults to the tracking count).
    pub data_antennas: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnrSection {
    pub db: Option<f64>,
    /// Initial-sweep SNR (defaults to `db`).
    pub sweep_db: Option<f64>,
    pub noise_free: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub trials: Option<usize>,
    pub slots: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub record_trace: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Diminishing,
    Fixed,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerSection {
    pub schedule: Option<ScheduleKind>,
    /// Step-size scale (defaults to α*).
    pub alpha: Option<f64>,
    pub n0: Option<f64>,
    pub init: Option<InitMode>,
    /// Initial-search dictionary size as a multiple of M.
    pub oversampling: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KalmanSection {
    pub process_noise: Option<f64>,
    pub probe_offset_deg: Option<f64>,
    /// Candidate process-noise values; non-empty enables tuning.
    pub q_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WlanSection {
    pub period: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Angular speeds in rad/slot.
    pub omegas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Table1Section {
    pub omega_lo: Option<f64>,
    pub omega_hi: Option<f64>,
    pub iterations: Option<usize>,
    pub pilots_per_sec: Option<f64>,
    pub capacity_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitRateSection {
    pub antennas: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheorySection {
    pub x: Option<f64>,
    pub x0_hat: Option<f64>,
    pub delta: Option<f64>,
    pub n0: Option<f64>,
    /// Slot counts at which `crlb` prints the bound.
    pub slots: Option<Vec<u64>>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub m: Option<usize>,
    pub snr_db: Option<f64>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// Failure to turn the inputs into a valid experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<beamtrack::Error> for ConfigError {
    fn from(e: beamtrack::Error) -> Self {
        ConfigError(e.to_string())
    }
}

fn bad(field: &str, reason: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("invalid parameter `{field}`: {reason}"))
}

pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read config `{}`: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError(format!("invalid config: {e}")))
}

fn default_omegas() -> Vec<f64> {
    vec![0.0, 0.02, 0.04, 0.064, 0.08, 0.1, 0.13]
}

/// Fills every unset field with the subcommand's default and applies the
/// overrides. The random seed, when absent, is drawn here.
pub fn resolve(command: Command, mut cfg: RunConfig, o: &Overrides) -> RunConfig {
    let subset = matches!(command, Command::Sweep | Command::Table1);
    let (m_default, slots_default, trials_default) = match command {
        Command::Static => (16, 1000, 100),
        Command::Dynamic => (16, 10_000, 100),
        Command::Sweep | Command::Table1 => (8, 10_000, 20),
        Command::InitRate => (16, 0, 10_000),
        Command::Theory | Command::Crlb => (8, 0, 0),
    };

    let a = &mut cfg.array;
    if let Some(m) = o.m {
        a.antennas = Some(m);
    }
    let m = *a.antennas.get_or_insert(m_default);
    a.spacing_ratio.get_or_insert(DEFAULT_SPACING_RATIO);
    let data = a.data_antennas.unwrap_or(if subset { 16.max(m) } else { m });
    a.data_antennas = Some(data);

    let s = &mut cfg.snr;
    if let Some(db) = o.snr_db {
        s.db = Some(db);
    }
    let db = *s.db.get_or_insert(if command == Command::InitRate { 0.0 } else { 10.0 });
    s.sweep_db.get_or_insert(db);
    s.noise_free.get_or_insert(false);

    let r = &mut cfg.run;
    if o.trials.is_some() {
        r.trials = o.trials;
    }
    if o.seed.is_some() {
        r.seed = o.seed;
    }
    if o.out.is_some() {
        r.out = o.out.clone();
    }
    if o.workers.is_some() {
        r.workers = o.workers;
    }
    r.trials.get_or_insert(trials_default);
    r.slots.get_or_insert(slots_default);
    r.seed.get_or_insert_with(rand::random::<u64>);
    r.record_trace.get_or_insert(command == Command::Dynamic);
    if r.out.is_none() && !matches!(command, Command::Theory | Command::Crlb) {
        r.out = Some(PathBuf::from("beamtrack-output").join(command.name()));
    }

    let spacing = cfg.array.spacing_ratio;
    let t = &mut cfg.tracker;
    let static_run = matches!(command, Command::Static);
    t.schedule.get_or_insert(if static_run {
        ScheduleKind::Diminishing
    } else {
        ScheduleKind::Fixed
    });
    t.n0.get_or_insert(0.0);
    if t.alpha.is_none() {
        if let Ok(track) = ArrayConfig::new(m, spacing.expect("resolved")) {
            t.alpha = Some(alpha_star(&track));
        }
    }
    t.init.get_or_insert(InitMode::Sweep);
    t.oversampling.get_or_insert(2);

    cfg.algorithms.get_or_insert_with(|| match command {
        Command::Static => vec![
            Algorithm::Recursive,
            Algorithm::LeastSquares,
            Algorithm::CompressedSensing,
            Algorithm::Wlan,
            Algorithm::Kalman,
        ],
        Command::Dynamic if data == m => vec![
            Algorithm::Recursive,
            Algorithm::LeastSquares,
            Algorithm::CompressedSensing,
            Algorithm::Wlan,
            Algorithm::Kalman,
        ],
        _ => vec![
            Algorithm::Recursive,
            Algorithm::CompressedSensing,
            Algorithm::Wlan,
            Algorithm::Kalman,
        ],
    });
    cfg.trajectory.get_or_insert(match command {
        Command::Static => TrajectoryModel::Static { x: 0.3 },
        Command::Sweep | Command::Table1 => TrajectoryModel::reference_velocity(0.0),
        _ => TrajectoryModel::reference_sinusoid(),
    });

    let k = &mut cfg.kalman;
    k.process_noise.get_or_insert(0.0);
    k.probe_offset_deg.get_or_insert(beamtrack::baselines::KF_PROBE_OFFSET_DEG);
    k.q_grid.get_or_insert_with(|| {
        if static_run {
            Vec::new()
        } else {
            vec![0.0, 1e-6, 1e-5, 1e-4, 1e-3]
        }
    });
    cfg.wlan.period.get_or_insert(beamtrack::baselines::WLAN_DEFAULT_PERIOD);
    cfg.sweep.omegas.get_or_insert_with(default_omegas);

    let tb = &mut cfg.table1;
    tb.omega_lo.get_or_insert(0.0);
    tb.omega_hi.get_or_insert(0.13);
    tb.iterations.get_or_insert(10);
    tb.pilots_per_sec.get_or_insert(5.0);
    tb.capacity_fraction.get_or_insert(0.95);

    cfg.init_rate.antennas.get_or_insert_with(|| match o.m {
        Some(m) => vec![m],
        None => vec![8, 16],
    });

    let th = &mut cfg.theory;
    th.x.get_or_insert(0.2);
    th.x0_hat.get_or_insert(0.3);
    th.delta.get_or_insert(0.05);
    th.n0.get_or_insert(50.0);
    th.slots.get_or_insert_with(|| vec![1, 10, 100, 1000, 2000]);
    cfg
}

fn array(cfg: &RunConfig) -> Result<ArrayConfig, ConfigError> {
    let m = cfg.array.antennas.expect("resolved");
    ArrayConfig::new(m, cfg.array.spacing_ratio.expect("resolved")).map_err(|e| match e.field() {
        Some("num_antennas") => bad("array.antennas", e),
        Some("spacing_ratio") => bad("array.spacing_ratio", e),
        _ => e.into(),
    })
}

fn snr_config(noise_free: bool, db: f64, field: &str) -> Result<SnrConfig, ConfigError> {
    let snr = if noise_free {
        SnrConfig::noise_free(reference_pilot())
    } else {
        SnrConfig::from_db(reference_pilot(), db)
    };
    snr.map_err(|e| bad(field, e))
}

/// Pilot SNR as a linear ratio.
pub fn rho(cfg: &RunConfig) -> Result<f64, ConfigError> {
    let db = cfg.snr.db.expect("resolved");
    let snr = snr_config(false, db, "snr.db")?;
    Ok(snr.rho().expect("finite SNR"))
}

fn simulation(cfg: &RunConfig) -> Result<SimulationSpec, ConfigError> {
    let track = array(cfg)?;
    let noise_free = cfg.snr.noise_free.expect("resolved");
    let snr = snr_config(noise_free, cfg.snr.db.expect("resolved"), "snr.db")?;
    let sweep_snr = snr_config(noise_free, cfg.snr.sweep_db.expect("resolved"), "snr.sweep_db")?;
    let t = &cfg.tracker;
    let alpha = t.alpha.unwrap_or_else(|| alpha_star(&track));
    let schedule = match t.schedule.expect("resolved") {
        ScheduleKind::Diminishing => StepSizeSchedule::Diminishing {
            alpha,
            n0: t.n0.expect("resolved"),
        },
        ScheduleKind::Fixed => StepSizeSchedule::Fixed { alpha },
    };
    schedule.validate().map_err(|e| match e.field() {
        Some("alpha") => bad("tracker.alpha", e),
        Some("n0") => bad("tracker.n0", e),
        _ => e.into(),
    })?;
    let trials = cfg.run.trials.expect("resolved");
    if trials == 0 {
        return Err(bad("run.trials", "must be at least 1"));
    }
    let offset = cfg.kalman.probe_offset_deg.expect("resolved");
    let kf = KfParams {
        process_noise: cfg.kalman.process_noise.expect("resolved"),
        probe_offset: offset.to_radians(),
    };
    kf.validate().map_err(|e| match e.field() {
        Some("process_noise") => bad("kalman.process_noise", e),
        _ => bad("kalman.probe_offset_deg", e),
    })?;
    let trajectory = cfg.trajectory.expect("resolved");
    trajectory.validate().map_err(|e| match e.field() {
        Some(f) => bad(&format!("trajectory.{f}"), e),
        None => e.into(),
    })?;
    let spec = SimulationSpec {
        track,
        data_antennas: cfg.array.data_antennas.expect("resolved"),
        snr,
        sweep_snr,
        beta: reference_beta(),
        trajectory,
        algorithm: Algorithm::Recursive,
        schedule,
        init: t.init.expect("resolved"),
        kf,
        wlan_period: cfg.wlan.period.expect("resolved"),
        oversampling: t.oversampling.expect("resolved"),
        n_slots: cfg.run.slots.expect("resolved"),
        n_trials: trials,
        seed: cfg.run.seed.expect("resolved"),
        record_trace: cfg.run.record_trace.expect("resolved"),
    };
    let algorithms = cfg.algorithms.as_deref().expect("resolved");
    if algorithms.is_empty() {
        return Err(bad("algorithms", "at least one algorithm is required"));
    }
    for &alg in algorithms {
        SimulationSpec {
            algorithm: alg,
            ..spec.clone()
        }
        .validate()
        .map_err(|e| match e.field() {
            Some("data_antennas") => bad("array.data_antennas", format!("{e} (algorithm {})", alg.name())),
            Some("wlan_period") => bad("wlan.period", e),
            Some("oversampling") => bad("tracker.oversampling", e),
            Some("offset") => bad("tracker.init.offset", e),
            Some("trials") => bad("run.trials", e),
            _ => e.into(),
        })?;
    }
    Ok(spec)
}

fn q_grid(cfg: &RunConfig) -> Result<Vec<f64>, ConfigError> {
    let grid = cfg.kalman.q_grid.clone().expect("resolved");
    if grid.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
        return Err(bad("kalman.q_grid", "entries must be finite and non-negative"));
    }
    Ok(grid)
}

/// Builds the experiment for a resolved configuration. Returns `None` for
/// `crlb`, which has no Monte-Carlo part.
pub fn experiment(command: Command, cfg: &RunConfig) -> Result<Option<Experiment>, ConfigError> {
    if let Some(0) = cfg.run.workers {
        return Err(bad("run.workers", "must be at least 1"));
    }
    let algorithms = || cfg.algorithms.clone().expect("resolved");
    Ok(Some(match command {
        Command::Static => {
            let base = simulation(cfg)?;
            if !matches!(base.trajectory, TrajectoryModel::Static { .. }) {
                return Err(bad("trajectory", "the static experiment needs a static trajectory"));
            }
            Experiment::StaticConvergence {
                base,
                algorithms: algorithms(),
            }
        }
        Command::Dynamic => Experiment::DynamicTrajectory {
            base: simulation(cfg)?,
            algorithms: algorithms(),
            kf_q_grid: q_grid(cfg)?,
        },
        Command::Sweep => {
            let omegas = cfg.sweep.omegas.clone().expect("resolved");
            if omegas.is_empty() || omegas.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(bad("sweep.omegas", "need at least one finite, non-negative speed"));
            }
            Experiment::VelocitySweep {
                base: simulation(cfg)?,
                algorithms: algorithms(),
                omegas,
                kf_q_grid: q_grid(cfg)?,
            }
        }
        Command::Table1 => {
            let t = &cfg.table1;
            let (lo, hi) = (t.omega_lo.expect("resolved"), t.omega_hi.expect("resolved"));
            if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
                return Err(bad("table1.omega_hi", "need 0 <= omega_lo < omega_hi"));
            }
            let fraction = t.capacity_fraction.expect("resolved");
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(bad("table1.capacity_fraction", "must lie in (0, 1]"));
            }
            let pps = t.pilots_per_sec.expect("resolved");
            if !(pps > 0.0 && pps.is_finite()) {
                return Err(bad("table1.pilots_per_sec", "must be positive"));
            }
            let base = simulation(cfg)?;
            if base.snr.rho().is_none() {
                return Err(bad("snr.noise_free", "the capacity criterion needs a finite SNR"));
            }
            Experiment::MaxVelocityTable {
                base,
                algorithms: algorithms(),
                omega_lo: lo,
                omega_hi: hi,
                iterations: t.iterations.expect("resolved"),
                pilots_per_sec: pps,
                capacity_fraction: fraction,
                kf_q_grid: q_grid(cfg)?,
            }
        }
        Command::InitRate => {
            let antennas = cfg.init_rate.antennas.clone().expect("resolved");
            if antennas.is_empty() || antennas.iter().any(|&m| m < 2) {
                return Err(bad("init_rate.antennas", "need array sizes of at least 2"));
            }
            let trials = cfg.run.trials.expect("resolved");
            if trials == 0 {
                return Err(bad("run.trials", "must be at least 1"));
            }
            let oversampling = cfg.tracker.oversampling.expect("resolved");
            if oversampling == 0 {
                return Err(bad("tracker.oversampling", "must be at least 1"));
            }
            let spacing = cfg.array.spacing_ratio.expect("resolved");
            ArrayConfig::new(2, spacing).map_err(|e| bad("array.spacing_ratio", e))?;
            Experiment::InitSuccessRate {
                antennas,
                spacing_ratio: spacing,
                snr: snr_config(
                    cfg.snr.noise_free.expect("resolved"),
                    cfg.snr.sweep_db.expect("resolved"),
                    "snr.sweep_db",
                )?,
                oversampling,
                n_trials: trials,
                seed: cfg.run.seed.expect("resolved"),
            }
        }
        Command::Theory => {
            let th = &cfg.theory;
            let x = th.x.expect("resolved");
            if !(-1.0..=1.0).contains(&x) {
                return Err(bad("theory.x", "must lie in [-1, 1]"));
            }
            let n0 = th.n0.expect("resolved");
            if !(n0 >= 0.0 && n0.is_finite()) {
                return Err(bad("theory.n0", "must be finite and non-negative"));
            }
            Experiment::TheoryDiagnostics {
                cfg: array(cfg)?,
                rho: rho(cfg)?,
                x,
                x0_hat: th.x0_hat.expect("resolved"),
                delta: th.delta.expect("resolved"),
                n0,
            }
        }
        Command::Crlb => {
            array(cfg)?;
            rho(cfg)?;
            let slots = cfg.theory.slots.as_deref().expect("resolved");
            if slots.is_empty() || slots.contains(&0) {
                return Err(bad("theory.slots", "slot counts must be at least 1"));
            }
            return Ok(None);
        }
    }))
}

/// Tracking array of a resolved configuration.
pub fn tracking_array(cfg: &RunConfig) -> Result<ArrayConfig, ConfigError> {
    array(cfg)
}
