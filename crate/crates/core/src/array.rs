//! Uniform linear array signal model.
//!
//! A plane wave arriving from spatial frequency `x = sin(theta)` has the
//! steering vector `a(x)` with entries `exp(-j 2π (d/λ) (m-1) x)`, `m = 1..M`.
//! An analog beamformer is a vector of `M` unit-modulus phase-shifter weights
//! scaled by `1/sqrt(M)`, and the receiver observes the combined scalar
//! `y = wᴴ a(x) + z / sqrt(ρ)` after normalizing out the pilot and the
//! (known) channel gain.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-wavelength element spacing.
pub const DEFAULT_SPACING_RATIO: f64 = 0.5;

/// Below this `|v - x|` the closed-form update field switches to the sum form.
const CLOSED_FORM_SINGULARITY: f64 = 1e-8;

/// Antenna count and normalized element spacing `d/λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    num_antennas: usize,
    spacing_ratio: f64,
}

impl ArrayConfig {
    pub fn new(num_antennas: usize, spacing_ratio: f64) -> Result<Self> {
        if num_antennas < 2 {
            return Err(Error::invalid(
                "num_antennas",
                format!("need at least 2 antennas, got {num_antennas}"),
            ));
        }
        if !(spacing_ratio.is_finite() && spacing_ratio > 0.0) {
            return Err(Error::invalid(
                "spacing_ratio",
                format!("d/λ must be positive and finite, got {spacing_ratio}"),
            ));
        }
        Ok(Self {
            num_antennas,
            spacing_ratio,
        })
    }

    pub fn half_wavelength(num_antennas: usize) -> Result<Self> {
        Self::new(num_antennas, DEFAULT_SPACING_RATIO)
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn spacing_ratio(&self) -> f64 {
        self.spacing_ratio
    }

    /// Same spacing, different element count (used for antenna subsets).
    pub fn with_antennas(&self, num_antennas: usize) -> Result<Self> {
        Self::new(num_antennas, self.spacing_ratio)
    }

    /// Inter-element phase increment per unit of spatial frequency, `2π d/λ`.
    pub fn phase_step(&self) -> f64 {
        2.0 * PI * self.spacing_ratio
    }

    pub(crate) fn m(&self) -> f64 {
        self.num_antennas as f64
    }
}

/// Normalized spatial frequency `x = sin(theta)`, always inside `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SpatialFrequency(f64);

impl SpatialFrequency {
    pub fn new(x: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&x) {
            return Err(Error::invalid(
                "spatial_frequency",
                format!("x must lie in [-1, 1], got {x}"),
            ));
        }
        Ok(Self(x))
    }

    /// Projection onto `[-1, 1]`. NaN maps to 0.
    pub fn clamped(x: f64) -> Self {
        if x.is_nan() {
            return Self(0.0);
        }
        Self(x.clamp(-1.0, 1.0))
    }

    /// `sin(theta)` for an angle of arrival in radians.
    pub fn from_angle(theta: f64) -> Self {
        Self::clamped(theta.sin())
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Angle of arrival in radians, `asin(x)`.
    pub fn angle(self) -> f64 {
        self.0.asin()
    }
}

impl TryFrom<f64> for SpatialFrequency {
    type Error = Error;

    fn try_from(x: f64) -> Result<Self> {
        Self::new(x)
    }
}

impl From<SpatialFrequency> for f64 {
    fn from(x: SpatialFrequency) -> f64 {
        x.0
    }
}

/// Single-path channel `h = β a(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    pub x: SpatialFrequency,
    pub beta: Complex64,
}

impl ChannelState {
    pub fn new(x: SpatialFrequency, beta: Complex64) -> Result<Self> {
        if beta.norm_sqr() == 0.0 || !beta.is_finite() {
            return Err(Error::invalid("beta", "channel gain must be nonzero"));
        }
        Ok(Self { x, beta })
    }

    /// Channel vector `β a(x)`.
    pub fn response(&self, cfg: &ArrayConfig) -> Vec<Complex64> {
        steering_vector(cfg, self.x)
            .into_iter()
            .map(|a| self.beta * a)
            .collect()
    }
}

/// Per-antenna SNR, either finite or the noise-free limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevel {
    Snr(f64),
    NoiseFree,
}

/// Pilot symbol plus per-antenna SNR `ρ = |pβ|²/σ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrConfig {
    pilot: Complex64,
    noise: NoiseLevel,
}

impl SnrConfig {
    pub fn new(pilot: Complex64, rho: f64) -> Result<Self> {
        check_pilot(pilot)?;
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::invalid(
                "rho",
                format!("linear SNR must be positive and finite, got {rho}"),
            ));
        }
        Ok(Self {
            pilot,
            noise: NoiseLevel::Snr(rho),
        })
    }

    pub fn from_db(pilot: Complex64, snr_db: f64) -> Result<Self> {
        Self::new(pilot, db_to_linear(snr_db))
    }

    pub fn noise_free(pilot: Complex64) -> Result<Self> {
        check_pilot(pilot)?;
        Ok(Self {
            pilot,
            noise: NoiseLevel::NoiseFree,
        })
    }

    pub fn pilot(&self) -> Complex64 {
        self.pilot
    }

    pub fn noise(&self) -> NoiseLevel {
        self.noise
    }

    /// Linear SNR, `None` in the noise-free limit.
    pub fn rho(&self) -> Option<f64> {
        match self.noise {
            NoiseLevel::Snr(rho) => Some(rho),
            NoiseLevel::NoiseFree => None,
        }
    }

    /// Per-antenna noise power `σ² = |pβ|²/ρ`.
    pub fn noise_variance(&self, beta: Complex64) -> f64 {
        match self.noise {
            NoiseLevel::Snr(rho) => (self.pilot * beta).norm_sqr() / rho,
            NoiseLevel::NoiseFree => 0.0,
        }
    }

    /// Standard deviation of the normalized observation noise, `1/sqrt(ρ)`.
    pub fn normalized_noise_std(&self) -> f64 {
        match self.noise {
            NoiseLevel::Snr(rho) => rho.sqrt().recip(),
            NoiseLevel::NoiseFree => 0.0,
        }
    }
}

fn check_pilot(pilot: Complex64) -> Result<()> {
    if pilot.norm_sqr() == 0.0 || !pilot.is_finite() {
        return Err(Error::invalid("pilot", "pilot symbol must be nonzero"));
    }
    Ok(())
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Pilot and gain used throughout the reference simulations; `pβ = 1`.
pub fn reference_pilot() -> Complex64 {
    Complex64::new(1.0, -1.0) / 2f64.sqrt()
}

pub fn reference_beta() -> Complex64 {
    Complex64::new(1.0, 1.0) / 2f64.sqrt()
}

/// Analog beamformer: `M` weights `exp(j w_m)/sqrt(M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingVector {
    weights: Vec<Complex64>,
}

impl BeamformingVector {
    pub fn from_phases(phases: &[f64]) -> Self {
        let scale = (phases.len() as f64).sqrt().recip();
        Self {
            weights: phases
                .iter()
                .map(|&p| Complex64::from_polar(scale, p))
                .collect(),
        }
    }

    /// Keeps only the phase of each entry (unit-modulus projection).
    /// Zero entries get phase 0.
    pub fn from_phase_of(values: &[Complex64]) -> Self {
        let phases: Vec<f64> = values.iter().map(|v| v.arg()).collect();
        Self::from_phases(&phases)
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Phase-shifter settings in `[-π, π]`.
    pub fn phases(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.arg()).collect()
    }

    /// Every entry has modulus `1/sqrt(M)` to within `tol`.
    pub fn is_unit_modulus(&self, tol: f64) -> bool {
        let target = (self.len() as f64).sqrt().recip();
        self.weights.iter().all(|w| (w.norm() - target).abs() <= tol)
    }
}

/// Received scalar after normalization by `pβ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub Complex64);

impl Observation {
    pub fn value(self) -> Complex64 {
        self.0
    }
}

/// Steering vector `a(x)`.
pub fn steering_vector(cfg: &ArrayConfig, x: SpatialFrequency) -> Vec<Complex64> {
    let step = cfg.phase_step() * x.value();
    (0..cfg.num_antennas())
        .map(|m| Complex64::cis(-step * m as f64))
        .collect()
}

/// `da/dx`.
pub fn steering_derivative(cfg: &ArrayConfig, x: SpatialFrequency) -> Vec<Complex64> {
    let k = cfg.phase_step();
    steering_vector(cfg, x)
        .into_iter()
        .enumerate()
        .map(|(m, a)| Complex64::new(0.0, -k * m as f64) * a)
        .collect()
}

/// Beamformer matched to direction `v`, `a(v)/sqrt(M)`.
pub fn conjugate_beamformer(cfg: &ArrayConfig, v: SpatialFrequency) -> BeamformingVector {
    let scale = cfg.m().sqrt().recip();
    BeamformingVector {
        weights: steering_vector(cfg, v)
            .into_iter()
            .map(|a| a * scale)
            .collect(),
    }
}

/// `wᴴ a(x)`.
pub fn array_response(w: &BeamformingVector, cfg: &ArrayConfig, x: SpatialFrequency) -> Complex64 {
    debug_assert_eq!(w.len(), cfg.num_antennas());
    let step = cfg.phase_step() * x.value();
    w.weights
        .iter()
        .enumerate()
        .map(|(m, wm)| wm.conj() * Complex64::cis(-step * m as f64))
        .sum()
}

/// `wᴴ a'(x)`.
pub fn array_response_derivative(
    w: &BeamformingVector,
    cfg: &ArrayConfig,
    x: SpatialFrequency,
) -> Complex64 {
    steering_derivative(cfg, x)
        .into_iter()
        .zip(&w.weights)
        .map(|(da, wm)| wm.conj() * da)
        .sum()
}

/// Response of the beamformer matched to `v` toward `x`,
/// `a(v)ᴴ a(x)/sqrt(M)`. Equal to
/// `array_response(&conjugate_beamformer(cfg, v), cfg, x)` without
/// materializing the weights.
pub fn matched_response(cfg: &ArrayConfig, v: SpatialFrequency, x: SpatialFrequency) -> Complex64 {
    let step = Complex64::cis(cfg.phase_step() * (v.value() - x.value()));
    let mut phasor = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for _ in 0..cfg.num_antennas() {
        acc += phasor;
        phasor *= step;
    }
    acc / cfg.m().sqrt()
}

/// Circularly-symmetric complex Gaussian with unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Adds normalized noise `z/sqrt(ρ)` to a noise-free response. Draws nothing
/// in the noise-free limit.
pub fn add_noise<R: Rng + ?Sized>(clean: Complex64, snr: &SnrConfig, rng: &mut R) -> Observation {
    match snr.noise() {
        NoiseLevel::NoiseFree => Observation(clean),
        NoiseLevel::Snr(rho) => Observation(clean + complex_gaussian(rng) / rho.sqrt()),
    }
}

/// Normalized observation `y = wᴴ a(x) + z/sqrt(ρ)`.
pub fn observe<R: Rng + ?Sized>(
    w: &BeamformingVector,
    cfg: &ArrayConfig,
    channel: &ChannelState,
    snr: &SnrConfig,
    rng: &mut R,
) -> Observation {
    add_noise(array_response(w, cfg, channel.x), snr, rng)
}

/// Raw combiner output `r = pβ wᴴ a(x) + σ z`.
pub fn received_signal<R: Rng + ?Sized>(
    w: &BeamformingVector,
    cfg: &ArrayConfig,
    channel: &ChannelState,
    snr: &SnrConfig,
    rng: &mut R,
) -> Complex64 {
    let gain = snr.pilot() * channel.beta;
    let clean = gain * array_response(w, cfg, channel.x);
    match snr.noise() {
        NoiseLevel::NoiseFree => clean,
        NoiseLevel::Snr(_) => clean + complex_gaussian(rng) * snr.noise_variance(channel.beta).sqrt(),
    }
}

/// `r / (pβ)`.
pub fn normalize(r: Complex64, pilot: Complex64, beta: Complex64) -> Result<Observation> {
    let gain = pilot * beta;
    if gain.norm_sqr() == 0.0 {
        return Err(Error::invalid("pilot*beta", "cannot normalize by zero gain"));
    }
    Ok(Observation(r / gain))
}

/// `log p(y | x, w) = log(ρ/π) - ρ |y - wᴴ a(x)|²`.
pub fn log_likelihood(
    y: Observation,
    cfg: &ArrayConfig,
    x: SpatialFrequency,
    w: &BeamformingVector,
    rho: f64,
) -> f64 {
    (rho / PI).ln() - rho * (y.0 - array_response(w, cfg, x)).norm_sqr()
}

/// Score `∂/∂x log p(y | x, w) = 2ρ Re{ (y - wᴴa(x))* wᴴa'(x) }`.
///
/// `x` enters through `a(x)` only; it may be evaluated slightly outside
/// `[-1, 1]` by callers doing finite differences, hence the raw `f64`.
pub fn score(y: Observation, cfg: &ArrayConfig, x: f64, w: &BeamformingVector, rho: f64) -> f64 {
    let k = cfg.phase_step();
    let (mut mu, mut dmu) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for (m, wm) in w.weights.iter().enumerate() {
        let a = Complex64::cis(-k * x * m as f64);
        mu += wm.conj() * a;
        dmu += wm.conj() * a * Complex64::new(0.0, -k * m as f64);
    }
    2.0 * rho * ((y.0 - mu).conj() * dmu).re
}

/// Log-likelihood evaluated at an unconstrained `x` (for derivative checks).
pub fn log_likelihood_at(y: Observation, cfg: &ArrayConfig, x: f64, w: &BeamformingVector, rho: f64) -> f64 {
    let k = cfg.phase_step();
    let mu: Complex64 = w
        .weights
        .iter()
        .enumerate()
        .map(|(m, wm)| wm.conj() * Complex64::cis(-k * x * m as f64))
        .sum();
    (rho / PI).ln() - rho * (y.0 - mu).norm_sqr()
}

/// Noise-free update field `f(v, x) = -Im{a(v)ᴴ a(x)}/sqrt(M)`.
pub fn f_gain(cfg: &ArrayConfig, v: f64, x: f64) -> f64 {
    let k = cfg.phase_step() * (v - x);
    let sum: f64 = (0..cfg.num_antennas()).map(|m| (k * m as f64).sin()).sum();
    -sum / cfg.m().sqrt()
}

/// Dirichlet-kernel form of [`f_gain`]:
/// `-sin[(M-1)π(d/λ)Δ] sin[Mπ(d/λ)Δ] / (sqrt(M) sin[π(d/λ)Δ])`, `Δ = v - x`.
pub fn f_gain_closed_form(cfg: &ArrayConfig, v: f64, x: f64) -> f64 {
    let m = cfg.m();
    let u = PI * cfg.spacing_ratio() * (v - x);
    let den = u.sin();
    // |v - x| < 1e-8 near zero, and the same width around grating-lobe aliases
    if den.abs() < PI * cfg.spacing_ratio() * CLOSED_FORM_SINGULARITY {
        return f_gain(cfg, v, x);
    }
    -((m - 1.0) * u).sin() * (m * u).sin() / (m.sqrt() * den)
}

/// `∂f/∂v` by the analytic derivative of the sum form.
pub fn f_gain_slope(cfg: &ArrayConfig, v: f64, x: f64) -> f64 {
    let k = cfg.phase_step();
    let delta = v - x;
    let sum: f64 = (0..cfg.num_antennas())
        .map(|m| k * m as f64 * (k * delta * m as f64).cos())
        .sum();
    -sum / cfg.m().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sf(x: f64) -> SpatialFrequency {
        SpatialFrequency::new(x).unwrap()
    }

    #[test]
    fn config_rejects_bad_values() {
        assert!(ArrayConfig::new(1, 0.5).is_err());
        assert!(ArrayConfig::new(4, 0.0).is_err());
        assert!(ArrayConfig::new(4, f64::NAN).is_err());
        assert_eq!(
            ArrayConfig::new(1, 0.5).unwrap_err().field(),
            Some("num_antennas")
        );
        assert!(SpatialFrequency::new(1.01).is_err());
        assert!(SnrConfig::new(Complex64::new(0.0, 0.0), 1.0).is_err());
        assert!(SnrConfig::new(Complex64::new(1.0, 0.0), 0.0).is_err());
        assert!(ChannelState::new(sf(0.0), Complex64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn steering_vector_broadside_is_all_ones() {
        let cfg = ArrayConfig::half_wavelength(4).unwrap();
        for a in steering_vector(&cfg, sf(0.0)) {
            assert_abs_diff_eq!(a.re, 1.0);
            assert_abs_diff_eq!(a.im, 0.0);
        }
    }

    #[test]
    fn steering_vector_two_elements() {
        let cfg = ArrayConfig::half_wavelength(2).unwrap();
        let a = steering_vector(&cfg, sf(0.5));
        assert_abs_diff_eq!(a[0].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a[1].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a[1].im, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn conjugate_beamformer_at_broadside() {
        let cfg = ArrayConfig::half_wavelength(4).unwrap();
        let w = conjugate_beamformer(&cfg, sf(0.0));
        for wm in w.weights() {
            assert_abs_diff_eq!(wm.re, 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(wm.im, 0.0, epsilon = 1e-15);
        }
        assert!(w.is_unit_modulus(1e-15));
    }

    #[test]
    fn matched_response_is_sqrt_m() {
        let cfg = ArrayConfig::half_wavelength(16).unwrap();
        for x in [-1.0, -0.3, 0.0, 0.77, 1.0] {
            let w = conjugate_beamformer(&cfg, sf(x));
            let r = array_response(&w, &cfg, sf(x));
            assert_abs_diff_eq!(r.re, 4.0, epsilon = 1e-12);
            assert_abs_diff_eq!(r.im, 0.0, epsilon = 1e-12);
            let r2 = matched_response(&cfg, sf(x), sf(x));
            assert_abs_diff_eq!(r2.re, 4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn response_at_sidelobe_stable_point_is_real() {
        let cfg = ArrayConfig::half_wavelength(8).unwrap();
        let v = 0.5 + 2.0 / 7.0;
        let w = conjugate_beamformer(&cfg, sf(v));
        let r = array_response(&w, &cfg, sf(0.5));
        assert_abs_diff_eq!(r.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn matched_response_agrees_with_weights() {
        let cfg = ArrayConfig::new(9, 0.4).unwrap();
        let (v, x) = (sf(0.31), sf(-0.2));
        let a = array_response(&conjugate_beamformer(&cfg, v), &cfg, x);
        let b = matched_response(&cfg, v, x);
        assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn phases_roundtrip() {
        let phases = [0.1, -2.0, 3.0, -0.5];
        let w = BeamformingVector::from_phases(&phases);
        for (a, b) in w.phases().iter().zip(phases) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
        assert!(w.is_unit_modulus(1e-15));
    }

    #[test]
    fn observe_noise_free_and_deterministic() {
        let cfg = ArrayConfig::half_wavelength(8).unwrap();
        let ch = ChannelState::new(sf(0.2), reference_beta()).unwrap();
        let w = conjugate_beamformer(&cfg, ch.x);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clean = SnrConfig::noise_free(reference_pilot()).unwrap();
        let y = observe(&w, &cfg, &ch, &clean, &mut rng);
        assert_abs_diff_eq!(y.0.re, 8f64.sqrt(), epsilon = 1e-12);

        let snr = SnrConfig::from_db(reference_pilot(), 10.0).unwrap();
        let a = observe(&w, &cfg, &ch, &snr, &mut ChaCha8Rng::seed_from_u64(9));
        let b = observe(&w, &cfg, &ch, &snr, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn observation_statistics() {
        let cfg = ArrayConfig::half_wavelength(4).unwrap();
        let ch = ChannelState::new(sf(0.1), reference_beta()).unwrap();
        let w = conjugate_beamformer(&cfg, sf(0.3));
        let rho = 2.0;
        let snr = SnrConfig::new(reference_pilot(), rho).unwrap();
        let mu = array_response(&w, &cfg, ch.x);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let ys: Vec<Complex64> = (0..n).map(|_| observe(&w, &cfg, &ch, &snr, &mut rng).0).collect();
        let mean = ys.iter().sum::<Complex64>() / n as f64;
        let var = ys.iter().map(|y| (y - mean).norm_sqr()).sum::<f64>() / (n - 1) as f64;
        // mean: each component has std sqrt(1/(2ρ n))
        let se = (1.0 / (2.0 * rho * n as f64)).sqrt();
        assert!((mean.re - mu.re).abs() < 3.0 * se);
        assert!((mean.im - mu.im).abs() < 3.0 * se);
        // |z|²/ρ is exponential with mean 1/ρ, std 1/ρ
        let var_se = (1.0 / rho) / (n as f64).sqrt();
        assert!((var - 1.0 / rho).abs() < 3.0 * var_se, "var {var}");
    }

    #[test]
    fn received_signal_noise_free_and_normalize() {
        let cfg = ArrayConfig::half_wavelength(4).unwrap();
        let beta = Complex64::new(0.3, -1.2);
        let pilot = Complex64::new(2.0, 0.5);
        let ch = ChannelState::new(sf(-0.4), beta).unwrap();
        let w = conjugate_beamformer(&cfg, sf(0.0));
        let snr = SnrConfig::noise_free(pilot).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = received_signal(&w, &cfg, &ch, &snr, &mut rng);
        let expected = pilot * beta * array_response(&w, &cfg, ch.x);
        assert_abs_diff_eq!((r - expected).norm(), 0.0, epsilon = 1e-12);
        let y = normalize(r, pilot, beta).unwrap();
        assert_abs_diff_eq!((y.0 - array_response(&w, &cfg, ch.x)).norm(), 0.0, epsilon = 1e-12);
        assert!(normalize(r, Complex64::new(0.0, 0.0), beta).is_err());
    }

    #[test]
    fn reference_gain_product_is_one() {
        let g = reference_pilot() * reference_beta();
        assert_abs_diff_eq!(g.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn unit_gain_normalization_matches_observe_exactly() {
        let cfg = ArrayConfig::half_wavelength(8).unwrap();
        let ch = ChannelState::new(sf(0.6), reference_beta()).unwrap();
        let snr = SnrConfig::from_db(reference_pilot(), 3.0).unwrap();
        let w = conjugate_beamformer(&cfg, sf(0.5));
        let r = received_signal(&w, &cfg, &ch, &snr, &mut ChaCha8Rng::seed_from_u64(3));
        let y1 = normalize(r, snr.pilot(), ch.beta).unwrap();
        let y2 = observe(&w, &cfg, &ch, &snr, &mut ChaCha8Rng::seed_from_u64(3));
        assert_abs_diff_eq!((y1.0 - y2.0).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn log_likelihood_peak() {
        let cfg = ArrayConfig::half_wavelength(8).unwrap();
        let x = sf(0.25);
        let w = conjugate_beamformer(&cfg, x);
        let y = Observation(array_response(&w, &cfg, x));
        let rho = 10.0;
        assert_abs_diff_eq!(log_likelihood(y, &cfg, x, &w, rho), (rho / PI).ln(), epsilon = 1e-12);
        // argmax over a fine grid recovers x
        let best = (0..=2000)
            .map(|i| -1.0 + i as f64 / 1000.0)
            .max_by(|a, b| {
                log_likelihood(y, &cfg, sf(*a), &w, rho)
                    .partial_cmp(&log_likelihood(y, &cfg, sf(*b), &w, rho))
                    .unwrap()
            })
            .unwrap();
        assert_abs_diff_eq!(best, 0.25, epsilon = 1e-9);
    }

    #[test]
    fn score_matches_simplified_form_at_matched_beam() {
        let cfg = ArrayConfig::half_wavelength(8).unwrap();
        let x = 0.3;
        let w = conjugate_beamformer(&cfg, sf(x));
        let rho = 10.0;
        let y = Observation(Complex64::new(2.5, -0.37));
        let m = 8f64;
        let simplified = -2.0 * m.sqrt() * (m - 1.0) * PI * 0.5 * rho * y.0.im;
        let analytic = score(y, &cfg, x, &w, rho);
        assert!(((analytic - simplified) / simplified).abs() < 1e-12);
    }

    #[test]
    fn f_gain_zero_on_match() {
        let cfg = ArrayConfig::half_wavelength(8).unwrap();
        for x in [-1.0, -0.2, 0.0, 0.9] {
            assert_abs_diff_eq!(f_gain(&cfg, x, x), 0.0);
            assert_abs_diff_eq!(f_gain_closed_form(&cfg, x, x), 0.0);
        }
    }

    #[test]
    fn f_gain_slope_at_match() {
        let cfg = ArrayConfig::new(12, 0.45).unwrap();
        let m = 12f64;
        let expected = -m.sqrt() * (m - 1.0) * PI * 0.45;
        assert!(((f_gain_slope(&cfg, 0.1, 0.1) - expected) / expected).abs() < 1e-12);
    }
}
