use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use super::csv::{write_metric_csv, write_summary_csv, write_trace_csv};
use super::{run_simulation, trial_rng, Algorithm, Metric, MetricSeries, SimulationResult, SimulationSpec, Trace};
use crate::analysis::{
    asymptotic_variance, convergence_bound, lipschitz_constant, mainlobe, stability_threshold,
    stable_points, BoundInputs, BoundOutcome, Mainlobe, StablePointSet,
};
use crate::array::{ArrayConfig, ChannelState, SnrConfig, SpatialFrequency};
use crate::baselines::{tune_process_noise, KfParams};
use crate::crlb::{asymptotic_channel_crlb, channel_derivative_norm_sqr, max_fisher_information, min_crlb_x};
use crate::dynamics::{rad_per_slot_to_deg_per_sec, TrajectoryModel};
use crate::error::{Error, Result};
use crate::trackers::{alpha_star, initial_estimate, sweep_observations};

/// `log2(1 + ρM)`.
pub fn capacity(rho: f64, m: usize) -> f64 {
    (1.0 + rho * m as f64).log2()
}

/// A named `param,algorithm,value` table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SummaryTable {
    pub name: String,
    pub rows: Vec<(String, String, f64)>,
}

impl SummaryTable {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, param: impl Into<String>, algorithm: &str, value: f64) {
        self.rows.push((param.into(), algorithm.to_string(), value));
    }

    pub fn get(&self, param: &str, algorithm: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|(p, a, _)| p == param && a == algorithm)
            .map(|r| r.2)
    }
}

/// Everything an experiment produces.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentOutput {
    /// `(series label, series)`; the label is an algorithm name or `crlb`.
    pub series: Vec<(String, MetricSeries)>,
    pub summaries: Vec<SummaryTable>,
    pub traces: Vec<(String, Trace)>,
    /// Human-readable report (theory diagnostics).
    pub report: Option<String>,
}

impl ExperimentOutput {
    pub fn summary(&self, name: &str) -> Option<&SummaryTable> {
        self.summaries.iter().find(|s| s.name == name)
    }

    /// Writes one CSV per series, summary table and trace into `dir`.
    pub fn write(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (label, series) in &self.series {
            let path = dir.join(format!("{label}_{}.csv", series.metric.name()));
            write_metric_csv(&path, series)?;
            written.push(path);
        }
        for table in &self.summaries {
            let path = dir.join(format!("{}.csv", table.name));
            write_summary_csv(&path, &table.rows)?;
            written.push(path);
        }
        for (label, trace) in &self.traces {
            let path = dir.join(format!("{label}_trace.csv"));
            write_trace_csv(&path, trace)?;
            written.push(path);
        }
        if let Some(report) = &self.report {
            let path = dir.join("report.txt");
            std::fs::write(&path, report)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// A runnable experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    /// Static direction, MSE curves against the CRLB.
    StaticConvergence {
        base: SimulationSpec,
        algorithms: Vec<Algorithm>,
    },
    /// Moving direction, AoA and rate traces.
    DynamicTrajectory {
        base: SimulationSpec,
        algorithms: Vec<Algorithm>,
        kf_q_grid: Vec<f64>,
    },
    /// Horizon-average rate and MSE against angular speed.
    VelocitySweep {
        base: SimulationSpec,
        algorithms: Vec<Algorithm>,
        omegas: Vec<f64>,
        kf_q_grid: Vec<f64>,
    },
    /// Largest speed sustaining `capacity_fraction` of the capacity.
    MaxVelocityTable {
        base: SimulationSpec,
        algorithms: Vec<Algorithm>,
        omega_lo: f64,
        omega_hi: f64,
        iterations: usize,
        pilots_per_sec: f64,
        capacity_fraction: f64,
        kf_q_grid: Vec<f64>,
    },
    /// `P(x̂_0 ∈ B(x))` for uniformly drawn `x`.
    InitSuccessRate {
        antennas: Vec<usize>,
        spacing_ratio: f64,
        snr: SnrConfig,
        oversampling: usize,
        n_trials: usize,
        seed: u64,
    },
    /// Closed-form quantities of the convergence theory.
    TheoryDiagnostics {
        cfg: ArrayConfig,
        rho: f64,
        x: f64,
        x0_hat: f64,
        delta: f64,
        n0: f64,
    },
}

fn check_algorithms(algorithms: &[Algorithm]) -> Result<()> {
    if algorithms.is_empty() {
        return Err(Error::invalid("algorithms", "at least one algorithm is required"));
    }
    Ok(())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
        return Err(Error::invalid("kf_q_grid", "entries must be finite and non-negative"));
    }
    Ok(())
}

fn with_velocity(base: &SimulationSpec, omega: f64) -> SimulationSpec {
    let trajectory = match base.trajectory {
        TrajectoryModel::FixedVelocity { bound, theta0, .. } => TrajectoryModel::FixedVelocity {
            omega,
            bound,
            theta0,
        },
        _ => TrajectoryModel::reference_velocity(omega),
    };
    SimulationSpec {
        trajectory,
        ..base.clone()
    }
}

/// Picks the process noise from `grid` that maximizes the horizon-average
/// rate on a short pilot run with its own seed.
fn tune_kf(spec: &SimulationSpec, grid: &[f64]) -> Result<f64> {
    let mut pilot = spec.clone();
    pilot.n_trials = spec.n_trials.min(8);
    pilot.n_slots = spec.n_slots.min(2000);
    pilot.seed = spec.seed ^ 0x6b66_7475_6e65;
    pilot.record_trace = false;
    let mut failure = None;
    let q = tune_process_noise(grid, |q| {
        pilot.kf = KfParams {
            process_noise: q,
            ..spec.kf
        };
        match run_simulation(&pilot) {
            Ok(r) => r.mean_rate().unwrap_or(f64::NEG_INFINITY),
            Err(e) => {
                failure = Some(e);
                f64::NEG_INFINITY
            }
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(q),
    }
}

/// Runs `spec` for `algorithm`, tuning the Kalman process noise first when a
/// grid is given. Returns the result and the tuned value.
fn run_algorithm(spec: &SimulationSpec, algorithm: Algorithm, grid: &[f64]) -> Result<(SimulationResult, Option<f64>)> {
    let mut spec = SimulationSpec {
        algorithm,
        ..spec.clone()
    };
    let mut tuned = None;
    if algorithm == Algorithm::Kalman && !grid.is_empty() {
        let q = tune_kf(&spec, grid)?;
        spec.kf.process_noise = q;
        tuned = Some(q);
    }
    Ok((run_simulation(&spec)?, tuned))
}

/// Mean over trials of the horizon-average rate at angular speed `omega`.
pub fn velocity_rate(base: &SimulationSpec, omega: f64) -> Result<f64> {
    let res = run_simulation(&with_velocity(base, omega))?;
    res.mean_rate()
        .ok_or_else(|| Error::invalid("snr", "rate needs a finite SNR"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxVelocityResult {
    /// Largest tested speed meeting the criterion (rad/slot).
    pub omega: f64,
    pub deg_per_sec: f64,
    /// Criterion held at the lower end of the bracket.
    pub lower_holds: bool,
    /// Criterion failed at the upper end of the bracket.
    pub upper_fails: bool,
    /// `(omega, mean rate)` of every evaluation, in order.
    pub evaluations: Vec<(f64, f64)>,
}

/// Bisection for the largest `omega` with mean rate `>= fraction·capacity`.
/// Common random numbers across speeds keep the rate curve monotone in
/// practice.
pub fn max_velocity(
    base: &SimulationSpec,
    omega_lo: f64,
    omega_hi: f64,
    iterations: usize,
    fraction: f64,
    pilots_per_sec: f64,
) -> Result<MaxVelocityResult> {
    if !(0.0 <= omega_lo && omega_lo < omega_hi && omega_hi.is_finite()) {
        return Err(Error::invalid("omega_lo", "need 0 <= omega_lo < omega_hi"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid("capacity_fraction", "must lie in (0, 1]"));
    }
    if !(pilots_per_sec > 0.0) {
        return Err(Error::invalid("pilots_per_sec", "must be positive"));
    }
    let rho = base
        .snr
        .rho()
        .ok_or_else(|| Error::invalid("snr", "rate needs a finite SNR"))?;
    let target = fraction * capacity(rho, base.data_antennas);
    let mut evaluations = Vec::new();
    let mut eval = |omega: f64| -> Result<bool> {
        let r = velocity_rate(base, omega)?;
        evaluations.push((omega, r));
        Ok(r >= target)
    };
    let lower_holds = eval(omega_lo)?;
    let upper_fails = !eval(omega_hi)?;
    let omega = if !lower_holds {
        0.0
    } else if !upper_fails {
        omega_hi
    } else {
        let (mut lo, mut hi) = (omega_lo, omega_hi);
        for _ in 0..iterations {
            let mid = 0.5 * (lo + hi);
            if eval(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    Ok(MaxVelocityResult {
        omega,
        deg_per_sec: rad_per_slot_to_deg_per_sec(omega, pilots_per_sec),
        lower_holds,
        upper_fails,
        evaluations,
    })
}

/// Fraction of trials whose initial estimate lands in the mainlobe, with
/// `x` uniform on `[-1, 1]` in each trial.
pub fn init_success_rate(cfg: &ArrayConfig, snr: &SnrConfig, oversampling: usize, n_trials: usize, seed: u64) -> Result<f64> {
    if n_trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    if oversampling == 0 {
        return Err(Error::invalid("oversampling", "must be at least 1"));
    }
    let m0 = oversampling * cfg.num_antennas();
    let hits: usize = (0..n_trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial as u64);
            let x = SpatialFrequency::clamped(2.0 * rng.random::<f64>() - 1.0);
            let channel = ChannelState::new(x, num_complex::Complex64::new(1.0, 0.0)).expect("unit gain");
            let obs = sweep_observations(cfg, &channel, snr, &mut rng);
            let est = initial_estimate(cfg, &obs, m0).expect("matching sweep");
            usize::from(mainlobe(cfg, x.value()).contains(est.value()))
        })
        .sum();
    Ok(hits as f64 / n_trials as f64)
}

/// Closed-form diagnostics for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    pub cfg: ArrayConfig,
    pub rho: f64,
    pub x: f64,
    pub stable_points: StablePointSet,
    pub mainlobe: Mainlobe,
    pub lipschitz: f64,
    pub alpha_star: f64,
    pub stability_threshold: f64,
    pub asymptotic_variance: f64,
    pub max_fisher: f64,
    pub min_crlb_one_slot: f64,
    pub channel_crlb_limit: f64,
    pub bound: BoundOutcome,
}

pub fn theory_report(cfg: &ArrayConfig, rho: f64, x: f64, x0_hat: f64, delta: f64, n0: f64) -> Result<TheoryReport> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::invalid("snr_db", "theory needs a finite SNR"));
    }
    SpatialFrequency::new(x)?;
    let a = alpha_star(cfg);
    let bound = convergence_bound(
        cfg,
        &BoundInputs {
            rho,
            alpha: a,
            n0,
            x,
            x0_hat,
            delta,
        },
    );
    Ok(TheoryReport {
        cfg: *cfg,
        rho,
        x,
        stable_points: stable_points(cfg, x),
        mainlobe: mainlobe(cfg, x),
        lipschitz: lipschitz_constant(cfg),
        alpha_star: a,
        stability_threshold: stability_threshold(cfg),
        asymptotic_variance: asymptotic_variance(cfg, rho, a)?,
        max_fisher: max_fisher_information(cfg, rho).value(),
        min_crlb_one_slot: min_crlb_x(cfg, rho, 1),
        // unit |β| and |p|: σ² = 1/ρ
        channel_crlb_limit: asymptotic_channel_crlb(cfg, 1.0 / rho, 1.0),
        bound,
    })
}

impl fmt::Display for TheoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "array: M = {}, d/lambda = {}, rho = {} ({:.2} dB), x = {}",
            self.cfg.num_antennas(),
            self.cfg.spacing_ratio(),
            self.rho,
            10.0 * self.rho.log10(),
            self.x
        )?;
        let pts: Vec<String> = self.stable_points.points.iter().map(|p| format!("{p:.6}")).collect();
        writeln!(
            f,
            "stable points ({}, spacing {:.6}): {}",
            pts.len(),
            self.stable_points.spacing,
            pts.join(", ")
        )?;
        writeln!(
            f,
            "boundary stable: -1 {}, +1 {}",
            self.stable_points.lower_boundary_stable, self.stable_points.upper_boundary_stable
        )?;
        writeln!(
            f,
            "mainlobe: {}{:.6}, {:.6}{}",
            if self.mainlobe.lo_closed { '[' } else { '(' },
            self.mainlobe.lo,
            self.mainlobe.hi,
            if self.mainlobe.hi_closed { ']' } else { ')' }
        )?;
        writeln!(f, "lipschitz L: {:.6}", self.lipschitz)?;
        writeln!(f, "alpha*: {:.6e}", self.alpha_star)?;
        writeln!(f, "stability threshold: {:.6e}", self.stability_threshold)?;
        writeln!(f, "asymptotic variance at alpha*: {:.6e}", self.asymptotic_variance)?;
        writeln!(f, "I_max: {:.6e}", self.max_fisher)?;
        writeln!(f, "min CRLB (n = 1): {:.6e}", self.min_crlb_one_slot)?;
        writeln!(f, "n*mse_h limit (unit gain): {:.6e}", self.channel_crlb_limit)?;
        match &self.bound {
            BoundOutcome::Applicable(b) => {
                writeln!(f, "convergence bound: {:.6} (direct {:.6})", b.bound, b.direct_bound)?;
                writeln!(
                    f,
                    "  T = {:.6e}, C0 = {:.6e}, alpha_max = {:.6e}, b(0) = {:.6e}",
                    b.escape_time, b.c0, b.alpha_max, b.step_energy
                )
            }
            BoundOutcome::NotApplicable { reason } => writeln!(f, "convergence bound: not applicable ({reason})"),
        }
    }
}

fn crlb_series(base: &SimulationSpec) -> Option<Vec<MetricSeries>> {
    let rho = base.snr.rho()?;
    let cfg = &base.track;
    let imax = max_fisher_information(cfg, rho).value();
    let dnorm = channel_derivative_norm_sqr(cfg, base.beta);
    let curve = |scale: f64| -> Vec<f64> {
        (0..=base.n_slots)
            .map(|n| if n == 0 { f64::INFINITY } else { scale / (n as f64 * imax) })
            .collect()
    };
    let zeros = vec![0.0; base.n_slots + 1];
    Some(vec![
        MetricSeries {
            metric: Metric::MseX,
            mean: curve(1.0),
            stderr: zeros.clone(),
            n_trials: 0,
        },
        MetricSeries {
            metric: Metric::MseH,
            mean: curve(dnorm),
            stderr: zeros,
            n_trials: 0,
        },
    ])
}

fn push_result(out: &mut ExperimentOutput, res: SimulationResult) {
    let label = res.algorithm.name().to_string();
    if let Some(trace) = res.trace {
        out.traces.push((label.clone(), trace));
    }
    for s in res.series {
        out.series.push((label.clone(), s));
    }
}

/// Runs an experiment on the current rayon pool.
pub fn run_experiment(experiment: &Experiment) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::default();
    match experiment {
        Experiment::StaticConvergence { base, algorithms } => {
            check_algorithms(algorithms)?;
            base.validate()?;
            let n = base.n_slots as f64;
            let mut table = SummaryTable::new("summary");
            for &alg in algorithms {
                let (res, _) = run_algorithm(base, alg, &[])?;
                for metric in [Metric::MseH, Metric::MseX] {
                    if let Some(s) = res.series(metric) {
                        let last = *s.mean.last().expect("non-empty series");
                        table.push(format!("final_{}", metric.name()), alg.name(), last);
                        table.push(format!("n_times_final_{}", metric.name()), alg.name(), n * last);
                    }
                }
                let conv = res.trials.iter().filter(|t| t.converged).count() as f64 / res.trials.len() as f64;
                if alg != Algorithm::LeastSquares {
                    table.push("converged_fraction", alg.name(), conv);
                }
                push_result(&mut out, res);
            }
            if let Some(crlb) = crlb_series(base) {
                for s in crlb {
                    out.series.push(("crlb".into(), s));
                }
                let rho = base.snr.rho().expect("finite SNR");
                table.push(
                    "n_times_mse_h_limit",
                    "crlb",
                    asymptotic_channel_crlb(&base.track, base.beta.norm_sqr() / rho, base.beta.norm_sqr()),
                );
            }
            out.summaries.push(table);
        }
        Experiment::DynamicTrajectory {
            base,
            algorithms,
            kf_q_grid,
        } => {
            check_algorithms(algorithms)?;
            check_grid(kf_q_grid)?;
            base.validate()?;
            let mut table = SummaryTable::new("summary");
            if let Some(rho) = base.snr.rho() {
                table.push("capacity", "theory", capacity(rho, base.data_antennas));
            }
            for &alg in algorithms {
                let (res, q) = run_algorithm(base, alg, kf_q_grid)?;
                if let Some(r) = res.mean_rate() {
                    table.push("mean_rate", alg.name(), r);
                }
                if let Some(q) = q {
                    table.push("kf_process_noise", alg.name(), q);
                }
                push_result(&mut out, res);
            }
            out.summaries.push(table);
        }
        Experiment::VelocitySweep {
            base,
            algorithms,
            omegas,
            kf_q_grid,
        } => {
            check_algorithms(algorithms)?;
            check_grid(kf_q_grid)?;
            if omegas.is_empty() {
                return Err(Error::invalid("omegas", "at least one speed is required"));
            }
            let mut rates = SummaryTable::new("rate_vs_omega");
            let mut mse = SummaryTable::new("mse_x_vs_omega");
            let mut mse_h = SummaryTable::new("mse_h_vs_omega");
            let mut tuned = SummaryTable::new("kf_process_noise_vs_omega");
            for &omega in omegas {
                let spec = with_velocity(base, omega);
                spec.validate()?;
                for &alg in algorithms {
                    let (res, q) = run_algorithm(&spec, alg, kf_q_grid)?;
                    let param = super::format_float(omega);
                    if let Some(r) = res.mean_rate() {
                        rates.push(param.clone(), alg.name(), r);
                    }
                    for (table, metric) in [(&mut mse, Metric::MseX), (&mut mse_h, Metric::MseH)] {
                        if let Some(s) = res.series(metric) {
                            let tail = &s.mean[1..];
                            table.push(param.clone(), alg.name(), crate::stats::mean(tail));
                        }
                    }
                    if let Some(q) = q {
                        tuned.push(param, alg.name(), q);
                    }
                }
            }
            out.summaries.extend([rates, mse, mse_h]);
            if !tuned.rows.is_empty() {
                out.summaries.push(tuned);
            }
        }
        Experiment::MaxVelocityTable {
            base,
            algorithms,
            omega_lo,
            omega_hi,
            iterations,
            pilots_per_sec,
            capacity_fraction,
            kf_q_grid,
        } => {
            check_algorithms(algorithms)?;
            check_grid(kf_q_grid)?;
            base.validate()?;
            let mut table = SummaryTable::new("max_velocity");
            let mut evals = SummaryTable::new("max_velocity_evaluations");
            for &alg in algorithms {
                let mut spec = SimulationSpec {
                    algorithm: alg,
                    ..base.clone()
                };
                if alg == Algorithm::Kalman && !kf_q_grid.is_empty() {
                    // tuned once, at the middle of the bracket
                    spec.kf.process_noise = tune_kf(&with_velocity(&spec, 0.5 * (omega_lo + omega_hi)), kf_q_grid)?;
                    table.push("kf_process_noise", alg.name(), spec.kf.process_noise);
                }
                let r = max_velocity(&spec, *omega_lo, *omega_hi, *iterations, *capacity_fraction, *pilots_per_sec)?;
                table.push("omega_rad_per_slot", alg.name(), r.omega);
                table.push("deg_per_sec", alg.name(), r.deg_per_sec);
                table.push("lower_bracket_holds", alg.name(), f64::from(u8::from(r.lower_holds)));
                table.push("upper_bracket_fails", alg.name(), f64::from(u8::from(r.upper_fails)));
                for (omega, rate) in r.evaluations {
                    evals.push(super::format_float(omega), alg.name(), rate);
                }
            }
            out.summaries.extend([table, evals]);
        }
        Experiment::InitSuccessRate {
            antennas,
            spacing_ratio,
            snr,
            oversampling,
            n_trials,
            seed,
        } => {
            if antennas.is_empty() {
                return Err(Error::invalid("antennas", "at least one array size is required"));
            }
            let mut table = SummaryTable::new("init_success");
            for &m in antennas {
                let cfg = ArrayConfig::new(m, *spacing_ratio)?;
                let p = init_success_rate(&cfg, snr, *oversampling, *n_trials, *seed)?;
                table.push(format!("M={m}"), "sweep", p);
            }
            out.summaries.push(table);
        }
        Experiment::TheoryDiagnostics {
            cfg,
            rho,
            x,
            x0_hat,
            delta,
            n0,
        } => {
            let report = theory_report(cfg, *rho, *x, *x0_hat, *delta, *n0)?;
            let mut table = SummaryTable::new("theory");
            table.push("lipschitz", "theory", report.lipschitz);
            table.push("alpha_star", "theory", report.alpha_star);
            table.push("stability_threshold", "theory", report.stability_threshold);
            table.push("asymptotic_variance", "theory", report.asymptotic_variance);
            table.push("max_fisher", "theory", report.max_fisher);
            table.push("n_times_mse_h_limit", "theory", report.channel_crlb_limit);
            table.push("stable_point_count", "theory", report.stable_points.points.len() as f64);
            if let BoundOutcome::Applicable(b) = &report.bound {
                table.push("convergence_bound", "theory", b.bound);
                table.push("convergence_bound_direct", "theory", b.direct_bound);
            }
            let mut points = SummaryTable::new("stable_points");
            for (i, p) in report.stable_points.points.iter().enumerate() {
                points.push(format!("{i}"), "theory", *p);
            }
            out.report = Some(report.to_string());
            out.summaries.extend([table, points]);
        }
    }
    Ok(out)
}
