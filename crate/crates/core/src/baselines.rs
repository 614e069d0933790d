//! Reference algorithms: least squares over the sweep codebook, single-atom
//! compressed sensing, 802.11ad-style sweep and refine, and an extended
//! Kalman filter on the angle.
//!
//! Every `*_update` consumes exactly one pilot. All observations are
//! normalized by the known `pβ`.

use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::array::{
    add_noise, array_response, array_response_derivative, conjugate_beamformer, steering_vector,
    ArrayConfig, BeamformingVector, Observation, SnrConfig, SpatialFrequency,
};
use crate::error::{Error, Result};
use crate::trackers::{coarse_sweep_codebook, sweep_directions};

/// Pilots a windowed estimator may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Every pilot received so far.
    All,
    /// The most recent `n` pilots.
    Last(usize),
}

impl Window {
    fn limit(self) -> Option<usize> {
        match self {
            Window::All => None,
            Window::Last(n) => Some(n),
        }
    }
}

fn noisy<R: Rng + ?Sized>(
    w: &BeamformingVector,
    cfg: &ArrayConfig,
    snr: &SnrConfig,
    x: SpatialFrequency,
    rng: &mut R,
) -> Observation {
    add_noise(array_response(w, cfg, x), snr, rng)
}

// ---------------------------------------------------------------- LS

/// Least squares over pilots sent through the unitary sweep codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct LsState {
    codebook: Vec<BeamformingVector>,
    sums: Vec<Complex64>,
    counts: Vec<u64>,
    buffer: VecDeque<(usize, Complex64)>,
    window: Window,
    next: usize,
}

impl LsState {
    /// Starts from one observation per codeword (the initial sweep).
    pub fn new(cfg: &ArrayConfig, window: Window, sweep_obs: &[Observation]) -> Result<Self> {
        let m = cfg.num_antennas();
        if sweep_obs.len() != m {
            return Err(Error::invalid("sweep_obs", format!("expected {m} observations")));
        }
        if let Window::Last(n) = window {
            if n < m {
                return Err(Error::invalid("window", format!("LS needs at least {m} pilots")));
            }
        }
        let mut state = Self {
            codebook: coarse_sweep_codebook(cfg),
            sums: vec![Complex64::new(0.0, 0.0); m],
            counts: vec![0; m],
            buffer: VecDeque::new(),
            window,
            next: 0,
        };
        for y in sweep_obs {
            state.push(*y);
        }
        Ok(state)
    }

    fn push(&mut self, y: Observation) {
        let idx = self.next;
        self.sums[idx] += y.0;
        self.counts[idx] += 1;
        if let Some(limit) = self.window.limit() {
            self.buffer.push_back((idx, y.0));
            while self.buffer.len() > limit {
                let (old, v) = self.buffer.pop_front().expect("non-empty");
                self.sums[old] -= v;
                self.counts[old] -= 1;
            }
        }
        self.next = (idx + 1) % self.codebook.len();
    }

    /// Next probe in the codebook cycle.
    pub fn probe(&self) -> &BeamformingVector {
        &self.codebook[self.next]
    }

    /// `W̃ ȳ` with `ȳ_m` the mean observation through codeword `m`.
    pub fn channel_estimate(&self) -> Vec<Complex64> {
        let m = self.codebook.len();
        let mut h = vec![Complex64::new(0.0, 0.0); m];
        for ((w, s), &c) in self.codebook.iter().zip(&self.sums).zip(&self.counts) {
            if c == 0 {
                continue;
            }
            let mean = s / c as f64;
            for (hi, wi) in h.iter_mut().zip(w.weights()) {
                *hi += wi * mean;
            }
        }
        h
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    /// Data beamformer with phases `∠ĥ_m`.
    pub fn beamformer(&self) -> BeamformingVector {
        BeamformingVector::from_phase_of(&self.channel_estimate())
    }
}

pub fn ls_update<R: Rng + ?Sized>(
    cfg: &ArrayConfig,
    snr: &SnrConfig,
    mut state: LsState,
    x: SpatialFrequency,
    rng: &mut R,
) -> (LsState, BeamformingVector) {
    let y = noisy(state.probe(), cfg, snr, x, rng);
    state.push(y);
    let w = state.beamformer();
    (state, w)
}

// ---------------------------------------------------------------- CS

pub const CS_DICTIONARY_SIZE: usize = 1024;

/// Steering vectors on the grid `(2k - 1 - N)/N`, shared between trials.
#[derive(Debug, Clone, PartialEq)]
pub struct CsDictionary {
    atoms: Vec<f64>,
    steering: Vec<Complex64>,
    m: usize,
}

impl CsDictionary {
    pub fn new(cfg: &ArrayConfig, size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::invalid("dictionary_size", "need at least two atoms"));
        }
        let atoms = crate::trackers::direction_dictionary(size);
        let steering = atoms
            .iter()
            .flat_map(|&v| steering_vector(cfg, SpatialFrequency::clamped(v)))
            .collect();
        Ok(Self {
            atoms,
            steering,
            m: cfg.num_antennas(),
        })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    /// `wᴴ a(v_k)` for every atom.
    fn responses(&self, w: &BeamformingVector) -> Vec<Complex64> {
        let wc: Vec<Complex64> = w.weights().iter().map(|c| c.conj()).collect();
        self.steering
            .chunks_exact(self.m)
            .map(|a| a.iter().zip(&wc).map(|(ai, wi)| wi * ai).sum())
            .collect()
    }
}

/// Random `{±1, ±j}/sqrt(M)` probe.
pub fn random_qpsk_probe<R: Rng + ?Sized>(m: usize, rng: &mut R) -> BeamformingVector {
    let phases: Vec<f64> = (0..m)
        .map(|_| rng.random_range(0..4u8) as f64 * FRAC_PI_2)
        .collect();
    BeamformingVector::from_phases(&phases)
}

/// Single-atom orthogonal matching pursuit on random probes.
#[derive(Debug, Clone, PartialEq)]
pub struct CsState {
    dictionary: Arc<CsDictionary>,
    /// `Σ_i conj(g_ik) y_i`
    correlation: Vec<Complex64>,
    /// `Σ_i |g_ik|²`
    energy: Vec<f64>,
    buffer: VecDeque<(Vec<Complex64>, Complex64)>,
    window: Window,
    estimate: SpatialFrequency,
}

impl CsState {
    pub fn new(dictionary: Arc<CsDictionary>, window: Window, initial: SpatialFrequency) -> Result<Self> {
        if window == Window::Last(0) {
            return Err(Error::invalid("window", "must hold at least one pilot"));
        }
        let n = dictionary.atoms.len();
        Ok(Self {
            dictionary,
            correlation: vec![Complex64::new(0.0, 0.0); n],
            energy: vec![0.0; n],
            buffer: VecDeque::new(),
            window,
            estimate: initial,
        })
    }

    /// Adds a pilot observed through `w` and re-selects the best atom.
    pub fn absorb(&mut self, w: &BeamformingVector, y: Observation) {
        let g = self.dictionary.responses(w);
        for ((c, e), gk) in self.correlation.iter_mut().zip(&mut self.energy).zip(&g) {
            *c += gk.conj() * y.0;
            *e += gk.norm_sqr();
        }
        if let Some(limit) = self.window.limit() {
            self.buffer.push_back((g, y.0));
            while self.buffer.len() > limit {
                let (old, yo) = self.buffer.pop_front().expect("non-empty");
                for ((c, e), gk) in self.correlation.iter_mut().zip(&mut self.energy).zip(&old) {
                    *c -= gk.conj() * yo;
                    *e -= gk.norm_sqr();
                }
            }
        }
        let mut best = (f64::NEG_INFINITY, self.estimate.value());
        for ((c, e), &v) in self.correlation.iter().zip(&self.energy).zip(&self.dictionary.atoms) {
            if *e <= 0.0 {
                continue;
            }
            let score = c.norm_sqr() / e;
            if score > best.0 {
                best = (score, v);
            }
        }
        self.estimate = SpatialFrequency::clamped(best.1);
    }

    pub fn estimate(&self) -> SpatialFrequency {
        self.estimate
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }
}

pub fn cs_update<R: Rng + ?Sized>(
    cfg: &ArrayConfig,
    snr: &SnrConfig,
    mut state: CsState,
    x: SpatialFrequency,
    rng: &mut R,
) -> (CsState, SpatialFrequency, BeamformingVector) {
    let w = random_qpsk_probe(cfg.num_antennas(), rng);
    let y = noisy(&w, cfg, snr, x, rng);
    state.absorb(&w, y);
    let est = state.estimate;
    (state, est, conjugate_beamformer(cfg, est))
}

// ---------------------------------------------------------------- 802.11ad

pub const WLAN_DEFAULT_PERIOD: usize = 3;

/// Sweep-and-refine over the sweep codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct WlanState {
    directions: Vec<SpatialFrequency>,
    best: usize,
    period: usize,
    phase: usize,
    candidates: Vec<usize>,
    powers: Vec<f64>,
}

impl WlanState {
    /// Picks the strongest codeword of the initial sweep.
    pub fn new(cfg: &ArrayConfig, sweep_obs: &[Observation], period: usize) -> Result<Self> {
        let m = cfg.num_antennas();
        if sweep_obs.len() != m {
            return Err(Error::invalid("sweep_obs", format!("expected {m} observations")));
        }
        if period == 0 {
            return Err(Error::invalid("period", "must be at least 1"));
        }
        let best = argmax(sweep_obs.iter().map(|y| y.0.norm_sqr()));
        let mut state = Self {
            directions: sweep_directions(cfg),
            best,
            period,
            phase: 0,
            candidates: Vec::new(),
            powers: Vec::new(),
        };
        state.start_period();
        Ok(state)
    }

    fn start_period(&mut self) {
        let last = self.directions.len() - 1;
        let lo = self.best.saturating_sub(1);
        let hi = (self.best + 1).min(last);
        self.candidates = (lo..=hi).collect();
        // spare slots re-probe the current best
        while self.candidates.len() < self.period {
            self.candidates.push(self.best);
        }
        self.candidates.truncate(self.period);
        self.powers.clear();
        self.phase = 0;
    }

    /// Codebook index (0-based) of the current best beam.
    pub fn best_index(&self) -> usize {
        self.best
    }

    pub fn estimate(&self) -> SpatialFrequency {
        self.directions[self.best]
    }

    /// Codebook index probed in the next slot.
    pub fn next_probe(&self) -> usize {
        self.candidates[self.phase]
    }

    pub fn absorb(&mut self, y: Observation) {
        self.powers.push(y.0.norm_sqr());
        self.phase += 1;
        if self.phase == self.candidates.len() {
            // repeated entries of `best` keep the strongest reading
            let mut best = (f64::NEG_INFINITY, self.best);
            for (&idx, &p) in self.candidates.iter().zip(&self.powers) {
                if p > best.0 {
                    best = (p, idx);
                }
            }
            self.best = best.1;
            self.start_period();
        }
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, v) in values.enumerate() {
        if v > best.0 {
            best = (v, i);
        }
    }
    best.1
}

pub fn wlan_update<R: Rng + ?Sized>(
    cfg: &ArrayConfig,
    snr: &SnrConfig,
    mut state: WlanState,
    x: SpatialFrequency,
    rng: &mut R,
) -> (WlanState, BeamformingVector) {
    let w = conjugate_beamformer(cfg, state.directions[state.next_probe()]);
    let y = noisy(&w, cfg, snr, x, rng);
    state.absorb(y);
    let data = conjugate_beamformer(cfg, state.estimate());
    (state, data)
}

// ---------------------------------------------------------------- KF

pub const KF_PROBE_OFFSET_DEG: f64 = 3.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KfParams {
    /// Random-walk variance added to `P` each slot (rad²).
    pub process_noise: f64,
    /// Probe offset from `θ̂` in radians.
    pub probe_offset: f64,
}

impl Default for KfParams {
    fn default() -> Self {
        Self {
            process_noise: 0.0,
            probe_offset: KF_PROBE_OFFSET_DEG.to_radians(),
        }
    }
}

impl KfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.process_noise.is_finite() && self.process_noise >= 0.0) {
            return Err(Error::invalid("process_noise", "must be finite and non-negative"));
        }
        if !(self.probe_offset.is_finite() && self.probe_offset > 0.0 && self.probe_offset < FRAC_PI_2) {
            return Err(Error::invalid("probe_offset", "must lie in (0, π/2)"));
        }
        Ok(())
    }
}

/// Extended Kalman filter on `θ` with probes alternating at `θ̂ ± offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KfState {
    pub theta: f64,
    pub variance: f64,
    pub params: KfParams,
    /// `false` probes below `θ̂`, `true` above.
    pub upper: bool,
}

impl KfState {
    pub fn new(theta: f64, variance: f64, params: KfParams) -> Result<Self> {
        params.validate()?;
        if !(theta.abs() < FRAC_PI_2) {
            return Err(Error::invalid("theta", "must lie in (-π/2, π/2)"));
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::invalid("variance", "must be finite and positive"));
        }
        Ok(Self {
            theta,
            variance,
            params,
            upper: false,
        })
    }

    /// Prior for an estimate uniformly distributed over the mainlobe around
    /// the initial direction: `(λ/(Md))²/(3 cos²θ̂)`.
    pub fn mainlobe_prior(cfg: &ArrayConfig, theta: f64) -> f64 {
        let hw = crate::analysis::mainlobe_half_width(cfg);
        let c = theta.cos().max(1e-3);
        hw * hw / (3.0 * c * c)
    }

    pub fn estimate(&self) -> SpatialFrequency {
        SpatialFrequency::from_angle(self.theta)
    }

    pub fn probe_angle(&self) -> f64 {
        let sign = if self.upper { 1.0 } else { -1.0 };
        (self.theta + sign * self.params.probe_offset).clamp(-FRAC_PI_2, FRAC_PI_2)
    }

    /// Measurement update for `y` observed through `w`.
    pub fn correct(self, cfg: &ArrayConfig, snr: &SnrConfig, w: &BeamformingVector, y: Observation) -> Result<Self> {
        let x = SpatialFrequency::from_angle(self.theta);
        let prior = self.variance + self.params.process_noise;
        let predicted = array_response(w, cfg, x);
        let jac = array_response_derivative(w, cfg, x) * self.theta.cos();
        let r = snr.rho().map_or(0.0, |rho| 0.5 / rho);
        let denom = r + prior * jac.norm_sqr();
        let (theta, variance) = if denom > 0.0 {
            let innovation = y.0 - predicted;
            (
                self.theta + prior * (jac.conj() * innovation).re / denom,
                prior * r / denom,
            )
        } else {
            (self.theta, prior)
        };
        if !(theta.abs() < FRAC_PI_2) {
            return Err(Error::Divergence(format!("angle estimate {theta} left (-π/2, π/2)")));
        }
        if !variance.is_finite() {
            return Err(Error::Divergence("error variance overflowed".into()));
        }
        Ok(Self {
            theta,
            variance,
            upper: !self.upper,
            ..self
        })
    }
}

/// One EKF slot. On divergence the returned error carries the reason and the
/// caller keeps the previous state.
pub fn kf_update<R: Rng + ?Sized>(
    cfg: &ArrayConfig,
    snr: &SnrConfig,
    state: KfState,
    x: SpatialFrequency,
    rng: &mut R,
) -> Result<(KfState, f64, BeamformingVector)> {
    let w = conjugate_beamformer(cfg, SpatialFrequency::from_angle(state.probe_angle()));
    let y = noisy(&w, cfg, snr, x, rng);
    let next = state.correct(cfg, snr, &w, y)?;
    Ok((next, next.theta, conjugate_beamformer(cfg, next.estimate())))
}

/// Grid point of `grid` with the highest `score`; ties go to the first.
pub fn tune_process_noise(grid: &[f64], mut score: impl FnMut(f64) -> f64) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "must not be empty"));
    }
    let mut best = (f64::NEG_INFINITY, grid[0]);
    for &q in grid {
        let s = score(q);
        if s > best.0 {
            best = (s, q);
        }
    }
    Ok(best.1)
}
