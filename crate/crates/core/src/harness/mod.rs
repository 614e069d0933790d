//! Monte-Carlo trial runner and metric aggregation.
//!
//! Trials are grouped into fixed-size chunks; each chunk is simulated on one
//! worker and chunk accumulators are merged in order, so results do not
//! depend on the number of workers.

mod csv;
mod experiments;

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{mainlobe, mainlobe_half_width};
use crate::array::{
    add_noise, array_response, matched_response, steering_vector, ArrayConfig, ChannelState,
    SnrConfig, SpatialFrequency,
};
use crate::baselines::{
    cs_update, kf_update, ls_update, wlan_update, CsDictionary, CsState, KfParams, KfState, LsState,
    WlanState, Window, CS_DICTIONARY_SIZE, WLAN_DEFAULT_PERIOD,
};
use crate::dynamics::{Trajectory, TrajectoryModel};
use crate::error::{Error, Result};
use crate::stats::CompensatedSum;
use crate::trackers::{
    angular_rbt_step, initial_estimate, rbt_step, sweep_observations, AngularTrackerState,
    StepSizeSchedule, TrackerState,
};

pub use csv::{format_float, write_metric_csv, write_summary_csv};
pub use experiments::{
    capacity, init_success_rate, max_velocity, run_experiment, theory_report, velocity_rate,
    Experiment, ExperimentOutput, MaxVelocityResult, SummaryTable, TheoryReport,
};

const CHUNK_TRIALS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Recursive tracking of the spatial frequency.
    Recursive,
    /// Recursive tracking of the angle.
    Angular,
    LeastSquares,
    CompressedSensing,
    Wlan,
    Kalman,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Recursive => "recursive",
            Algorithm::Angular => "angular",
            Algorithm::LeastSquares => "least_squares",
            Algorithm::CompressedSensing => "compressed_sensing",
            Algorithm::Wlan => "wlan",
            Algorithm::Kalman => "kalman",
        }
    }

    fn estimates_direction(self) -> bool {
        self != Algorithm::LeastSquares
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `‖ĥ - h‖²`
    MseH,
    /// `(x̂ - x)²`
    MseX,
    /// `|θ̂ - θ|` in degrees.
    AoaErrorDeg,
    /// `log2(1 + ρ|wᴴa(x)|²)` with the data beamformer.
    Rate,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::MseH, Metric::MseX, Metric::AoaErrorDeg, Metric::Rate];

    pub fn name(self) -> &'static str {
        match self {
            Metric::MseH => "mse_h",
            Metric::MseX => "mse_x",
            Metric::AoaErrorDeg => "aoa_error_deg",
            Metric::Rate => "rate",
        }
    }
}

/// Where the tracker starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitMode {
    /// Coarse sweep followed by the dictionary search.
    Sweep,
    /// Uniform draw over the mainlobe of the initial direction.
    Mainlobe,
    /// Fixed offset from the initial direction (clamped to `[-1, 1]`).
    Offset { offset: f64 },
}

/// One Monte-Carlo configuration: an algorithm, a channel and a horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    /// Antennas used for pilots.
    pub track: ArrayConfig,
    /// Antennas used for data; `>= track.num_antennas()`.
    pub data_antennas: usize,
    pub snr: SnrConfig,
    /// Pilot SNR of the initial sweep.
    pub sweep_snr: SnrConfig,
    pub beta: Complex64,
    pub trajectory: TrajectoryModel,
    pub algorithm: Algorithm,
    pub schedule: StepSizeSchedule,
    pub init: InitMode,
    pub kf: KfParams,
    pub wlan_period: usize,
    /// Dictionary size of the initial search is `oversampling·M`.
    pub oversampling: usize,
    pub n_slots: usize,
    pub n_trials: usize,
    pub seed: u64,
    /// Keep the per-slot trace of the first trial.
    pub record_trace: bool,
}

impl SimulationSpec {
    /// Static scenario with the recursive tracker at `α*`, `N0 = 0`.
    pub fn reference(track: ArrayConfig, snr: SnrConfig, x: f64) -> Self {
        Self {
            data_antennas: track.num_antennas(),
            track,
            snr,
            sweep_snr: snr,
            beta: Complex64::new(1.0, 0.0),
            trajectory: TrajectoryModel::Static { x },
            algorithm: Algorithm::Recursive,
            schedule: StepSizeSchedule::Diminishing {
                alpha: crate::trackers::alpha_star(&track),
                n0: 0.0,
            },
            init: InitMode::Sweep,
            kf: KfParams::default(),
            wlan_period: WLAN_DEFAULT_PERIOD,
            oversampling: 2,
            n_slots: 1000,
            n_trials: 100,
            seed: 0,
            record_trace: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::invalid("trials", "must be at least 1"));
        }
        if self.data_antennas < self.track.num_antennas() {
            return Err(Error::invalid(
                "data_antennas",
                format!(
                    "{} data antennas is fewer than the {} tracking antennas",
                    self.data_antennas,
                    self.track.num_antennas()
                ),
            ));
        }
        if self.algorithm == Algorithm::LeastSquares && self.data_antennas != self.track.num_antennas() {
            return Err(Error::invalid(
                "data_antennas",
                "least squares estimates the full response; tracking and data arrays must match",
            ));
        }
        if self.beta.norm_sqr() == 0.0 || !self.beta.norm_sqr().is_finite() {
            return Err(Error::invalid("beta", "must be finite and non-zero"));
        }
        if self.wlan_period == 0 {
            return Err(Error::invalid("wlan_period", "must be at least 1"));
        }
        if self.oversampling == 0 {
            return Err(Error::invalid("oversampling", "must be at least 1"));
        }
        if let InitMode::Offset { offset } = self.init {
            if !offset.is_finite() {
                return Err(Error::invalid("offset", "must be finite"));
            }
        }
        self.schedule.validate()?;
        self.trajectory.validate()?;
        self.kf.validate()?;
        Ok(())
    }

    pub fn data_config(&self) -> ArrayConfig {
        self.track
            .with_antennas(self.data_antennas)
            .expect("data antenna count validated against tracking array")
    }

    fn static_windows(&self) -> bool {
        matches!(self.trajectory, TrajectoryModel::Static { .. })
    }

    /// Metrics this algorithm produces.
    pub fn metrics(&self) -> Vec<Metric> {
        Metric::ALL
            .into_iter()
            .filter(|m| match m {
                Metric::MseX | Metric::AoaErrorDeg => self.algorithm.estimates_direction(),
                Metric::Rate => self.snr.rho().is_some(),
                Metric::MseH => true,
            })
            .collect()
    }
}

/// Per-slot mean and standard error of one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub metric: Metric,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_trials: usize,
}

/// Scalar outcome of one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSummary {
    /// `x̂_N` (direction-estimating algorithms only).
    pub final_estimate: Option<f64>,
    /// `x_N`.
    pub final_truth: f64,
    /// `|x̂_N - x_N| < λ/(2Md)`.
    pub converged: bool,
    /// `|x̂_n - x_n| > λ/(Md)` for some `n >= 1`.
    pub excursion: bool,
    /// Largest `|θ̂_n - θ_n|` in radians over the slots from the first one with
    /// `|θ̂_n - θ_n| <= asin(λ/(Md))/2` on; NaN if that never happens.
    pub locked_aoa_error: f64,
    pub initial_in_mainlobe: bool,
    /// Mean rate over slots `1..=N`.
    pub mean_rate: Option<f64>,
    /// Slots in which the update was refused and the state held.
    pub held_slots: usize,
}

/// Per-slot record of one trial.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub truth_theta: Vec<f64>,
    pub estimate_theta: Vec<f64>,
    pub rate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub algorithm: Algorithm,
    pub series: Vec<MetricSeries>,
    pub trials: Vec<TrialSummary>,
    pub trace: Option<Trace>,
}

impl SimulationResult {
    pub fn series(&self, metric: Metric) -> Option<&MetricSeries> {
        self.series.iter().find(|s| s.metric == metric)
    }

    /// Mean over trials of the per-trial horizon-average rate.
    pub fn mean_rate(&self) -> Option<f64> {
        let rates: Vec<f64> = self.trials.iter().filter_map(|t| t.mean_rate).collect();
        (!rates.is_empty()).then(|| crate::stats::mean(&rates))
    }
}

/// `|β|² ‖a(x̂) - a(x)‖²` via the matched response.
pub fn mse_h(cfg: &ArrayConfig, beta: Complex64, estimate: SpatialFrequency, x: SpatialFrequency) -> f64 {
    let m = cfg.num_antennas() as f64;
    let cross = matched_response(cfg, estimate, x).re * m.sqrt();
    (beta.norm_sqr() * 2.0 * (m - cross)).max(0.0)
}

/// `log2(1 + ρ|g|²)` for the beamforming gain `g = wᴴa(x)`.
pub fn rate(gain: Complex64, rho: f64) -> f64 {
    (1.0 + rho * gain.norm_sqr()).log2()
}

/// Per-trial stream: the base seed selects the key, the trial index the
/// stream, so trials are independent of how they are scheduled.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

enum Engine {
    Recursive(TrackerState),
    Angular(AngularTrackerState),
    Ls(LsState),
    Cs(CsState),
    Wlan(WlanState),
    Kf(KfState),
}

impl Engine {
    fn direction(&self) -> Option<SpatialFrequency> {
        match self {
            Engine::Recursive(s) => Some(s.estimate),
            Engine::Angular(s) => Some(s.spatial_frequency()),
            Engine::Ls(_) => None,
            Engine::Cs(s) => Some(s.estimate()),
            Engine::Wlan(s) => Some(s.estimate()),
            Engine::Kf(s) => Some(s.estimate()),
        }
    }

    fn angle(&self) -> Option<f64> {
        match self {
            Engine::Angular(s) => Some(s.theta),
            Engine::Kf(s) => Some(s.theta),
            other => other.direction().map(SpatialFrequency::angle),
        }
    }

    /// Advances one slot; the flag is set if the update was refused.
    fn step<R: Rng + ?Sized>(self, spec: &SimulationSpec, x: SpatialFrequency, rng: &mut R) -> (Self, bool) {
        let cfg = &spec.track;
        let snr = &spec.snr;
        let mut held = false;
        let next = match self {
            Engine::Recursive(s) => {
                let y = add_noise(matched_response(cfg, s.estimate, x), snr, rng);
                Engine::Recursive(rbt_step(&s, y))
            }
            Engine::Angular(s) => {
                let y = add_noise(matched_response(cfg, s.spatial_frequency(), x), snr, rng);
                match angular_rbt_step(&s, y) {
                    Ok(next) => Engine::Angular(next),
                    Err(_) => {
                        held = true;
                        Engine::Angular(AngularTrackerState { slot: s.slot + 1, ..s })
                    }
                }
            }
            Engine::Ls(s) => Engine::Ls(ls_update(cfg, snr, s, x, rng).0),
            Engine::Cs(s) => Engine::Cs(cs_update(cfg, snr, s, x, rng).0),
            Engine::Wlan(s) => Engine::Wlan(wlan_update(cfg, snr, s, x, rng).0),
            Engine::Kf(s) => match kf_update(cfg, snr, s, x, rng) {
                Ok((next, _, _)) => Engine::Kf(next),
                Err(_) => {
                    held = true;
                    Engine::Kf(KfState { upper: !s.upper, ..s })
                }
            },
        };
        (next, held)
    }
}

struct SlotMetrics {
    values: [f64; 4],
    estimate: Option<f64>,
    theta_hat: f64,
}

struct TrialContext<'a> {
    spec: &'a SimulationSpec,
    data: ArrayConfig,
    dictionary: Option<Arc<CsDictionary>>,
}

impl TrialContext<'_> {
    fn measure(&self, engine: &Engine, x: SpatialFrequency, theta: f64) -> SlotMetrics {
        let spec = self.spec;
        let (mse_h_v, gain, estimate) = match engine {
            Engine::Ls(s) => {
                let h = s.channel_estimate();
                let a = steering_vector(&spec.track, x);
                let err: f64 = h.iter().zip(&a).map(|(u, v)| (u - v).norm_sqr()).sum();
                let gain = array_response(&s.beamformer(), &spec.track, x);
                (spec.beta.norm_sqr() * err, gain, None)
            }
            other => {
                let est = other.direction().expect("direction estimator");
                (
                    mse_h(&spec.track, spec.beta, est, x),
                    matched_response(&self.data, est, x),
                    Some(est.value()),
                )
            }
        };
        let theta_hat = engine.angle().unwrap_or(f64::NAN);
        let angle_error = (theta_hat - theta).abs().to_degrees();
        let mse_x = estimate.map_or(f64::NAN, |e| (e - x.value()).powi(2));
        let r = spec.snr.rho().map_or(f64::NAN, |rho| rate(gain, rho));
        SlotMetrics {
            values: [mse_h_v, mse_x, angle_error, r],
            estimate,
            theta_hat,
        }
    }

    fn run_trial(&self, trial: u64, acc: &mut ChunkAccumulator) -> (TrialSummary, Option<Trace>) {
        let spec = self.spec;
        let cfg = &spec.track;
        let mut rng = trial_rng(spec.seed, trial);
        let mut trajectory = Trajectory::new(spec.trajectory);
        let x0 = trajectory.current();
        let channel0 = ChannelState::new(x0, spec.beta).expect("beta validated");
        let sweep = sweep_observations(cfg, &channel0, &spec.sweep_snr, &mut rng);
        let swept = initial_estimate(cfg, &sweep, spec.oversampling * cfg.num_antennas())
            .expect("sweep matches the tracking array");
        let lobe = mainlobe(cfg, x0.value());
        let start = match spec.init {
            InitMode::Sweep => swept,
            InitMode::Mainlobe => {
                let mut v;
                loop {
                    v = lobe.lo + (lobe.hi - lobe.lo) * rng.random::<f64>();
                    if lobe.contains(v) {
                        break;
                    }
                }
                SpatialFrequency::clamped(v)
            }
            InitMode::Offset { offset } => SpatialFrequency::clamped(x0.value() + offset),
        };
        let static_windows = spec.static_windows();
        let m = cfg.num_antennas();
        let mut engine = match spec.algorithm {
            Algorithm::Recursive => Engine::Recursive(TrackerState::new(start, spec.schedule)),
            Algorithm::Angular => Engine::Angular(AngularTrackerState::new(start.angle(), spec.schedule)),
            Algorithm::LeastSquares => {
                let window = if static_windows { Window::All } else { Window::Last(m) };
                Engine::Ls(LsState::new(cfg, window, &sweep).expect("valid LS window"))
            }
            Algorithm::CompressedSensing => {
                let window = if static_windows {
                    Window::All
                } else {
                    Window::Last((m / 2).max(1))
                };
                let dict = self.dictionary.clone().expect("dictionary built for CS");
                let mut st = CsState::new(dict, window, start).expect("valid CS window");
                if static_windows {
                    for (w, y) in crate::trackers::coarse_sweep_codebook(cfg).iter().zip(&sweep) {
                        st.absorb(w, *y);
                    }
                }
                Engine::Cs(st)
            }
            Algorithm::Wlan => Engine::Wlan(WlanState::new(cfg, &sweep, spec.wlan_period).expect("valid sweep")),
            Algorithm::Kalman => {
                let theta = start.angle().clamp(-PI / 2.0 + 1e-3, PI / 2.0 - 1e-3);
                let p0 = KfState::mainlobe_prior(cfg, theta);
                Engine::Kf(KfState::new(theta, p0, spec.kf).expect("validated KF parameters"))
            }
        };

        let hw = mainlobe_half_width(cfg);
        let angular_hw = hw.min(1.0).asin();
        let mut trace = (spec.record_trace && trial == 0).then(Trace::default);
        let mut rate_sum = CompensatedSum::new();
        let mut excursion = false;
        let mut locked_aoa_error = f64::NAN;
        let mut held = 0;
        let mut record = |n: usize, metrics: &SlotMetrics, theta: f64, trace: &mut Option<Trace>| {
            acc.add(n, &metrics.values);
            if let Some(t) = trace.as_mut() {
                t.truth_theta.push(theta);
                t.estimate_theta.push(metrics.theta_hat);
                t.rate.push(metrics.values[3]);
            }
        };

        let theta0 = trajectory.current_theta();
        let first = self.measure(&engine, x0, theta0);
        record(0, &first, theta0, &mut trace);
        let mut last = (first.estimate, x0.value());
        for n in 1..=spec.n_slots {
            let (theta, x) = trajectory.advance(n as u64, &mut rng);
            let (next, refused) = engine.step(spec, x, &mut rng);
            engine = next;
            held += usize::from(refused);
            let metrics = self.measure(&engine, x, theta);
            record(n, &metrics, theta, &mut trace);
            rate_sum.add(metrics.values[3]);
            if let Some(e) = metrics.estimate {
                let err = (e - x.value()).abs();
                if err > hw {
                    excursion = true;
                }
            }
            let aoa_error = (metrics.theta_hat - theta).abs();
            if aoa_error <= angular_hw / 2.0 || !locked_aoa_error.is_nan() {
                locked_aoa_error = locked_aoa_error.max(aoa_error);
            }
            last = (metrics.estimate, x.value());
        }
        let converged = last.0.is_some_and(|e| (e - last.1).abs() < hw / 2.0);
        let summary = TrialSummary {
            final_estimate: last.0,
            final_truth: last.1,
            converged,
            excursion,
            locked_aoa_error,
            initial_in_mainlobe: lobe.contains(start.value()),
            mean_rate: (spec.snr.rho().is_some() && spec.n_slots > 0)
                .then(|| rate_sum.value() / spec.n_slots as f64),
            held_slots: held,
        };
        (summary, trace)
    }
}

/// Running per-slot sums for every metric.
#[derive(Debug, Clone)]
struct ChunkAccumulator {
    sums: Vec<[CompensatedSum; 4]>,
    squares: Vec<[CompensatedSum; 4]>,
    trials: usize,
}

impl ChunkAccumulator {
    fn new(slots: usize) -> Self {
        Self {
            sums: vec![Default::default(); slots + 1],
            squares: vec![Default::default(); slots + 1],
            trials: 0,
        }
    }

    fn add(&mut self, slot: usize, values: &[f64; 4]) {
        for (k, v) in values.iter().enumerate() {
            self.sums[slot][k].add(*v);
            self.squares[slot][k].add(v * v);
        }
    }

    fn merge(&mut self, other: &ChunkAccumulator) {
        for (mine, theirs) in self.sums.iter_mut().zip(&other.sums) {
            for k in 0..4 {
                mine[k].add(theirs[k].value());
            }
        }
        for (mine, theirs) in self.squares.iter_mut().zip(&other.squares) {
            for k in 0..4 {
                mine[k].add(theirs[k].value());
            }
        }
        self.trials += other.trials;
    }

    fn series(&self, metric: Metric) -> MetricSeries {
        let k = Metric::ALL.iter().position(|m| *m == metric).expect("known metric");
        let n = self.trials as f64;
        let mut mean = Vec::with_capacity(self.sums.len());
        let mut stderr = Vec::with_capacity(self.sums.len());
        for (s, q) in self.sums.iter().zip(&self.squares) {
            let mu = s[k].value() / n;
            mean.push(mu);
            let se = if self.trials > 1 {
                let var = ((q[k].value() - n * mu * mu) / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            stderr.push(se);
        }
        MetricSeries {
            metric,
            mean,
            stderr,
            n_trials: self.trials,
        }
    }
}

/// Runs `spec.n_trials` independent trials on the current rayon pool.
pub fn run_simulation(spec: &SimulationSpec) -> Result<SimulationResult> {
    spec.validate()?;
    let dictionary = (spec.algorithm == Algorithm::CompressedSensing)
        .then(|| CsDictionary::new(&spec.track, CS_DICTIONARY_SIZE).map(Arc::new))
        .transpose()?;
    let ctx = TrialContext {
        spec,
        data: spec.data_config(),
        dictionary,
    };
    let chunks: Vec<(usize, usize)> = (0..spec.n_trials)
        .step_by(CHUNK_TRIALS)
        .map(|lo| (lo, (lo + CHUNK_TRIALS).min(spec.n_trials)))
        .collect();
    let results: Vec<(ChunkAccumulator, Vec<TrialSummary>, Option<Trace>)> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut acc = ChunkAccumulator::new(spec.n_slots);
            let mut summaries = Vec::with_capacity(hi - lo);
            let mut trace = None;
            for trial in lo..hi {
                let (summary, t) = ctx.run_trial(trial as u64, &mut acc);
                acc.trials += 1;
                summaries.push(summary);
                if t.is_some() {
                    trace = t;
                }
            }
            (acc, summaries, trace)
        })
        .collect();
    let mut total = ChunkAccumulator::new(spec.n_slots);
    let mut trials = Vec::with_capacity(spec.n_trials);
    let mut trace = None;
    for (acc, summaries, t) in &results {
        total.merge(acc);
        trials.extend_from_slice(summaries);
        if t.is_some() {
            trace = t.clone();
        }
    }
    let series = spec.metrics().into_iter().map(|m| total.series(m)).collect();
    Ok(SimulationResult {
        algorithm: spec.algorithm,
        series,
        trials,
        trace,
    })
}

/// Runs `f` on a dedicated pool of `workers` threads (`None`: rayon default).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::invalid("workers", "must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid("workers", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}
