//! Fisher information and Cramér-Rao bounds for single-pilot direction
//! estimation.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::array::{array_response_derivative, ArrayConfig, BeamformingVector, SpatialFrequency};

/// Information about `x` carried by one pilot.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FisherInfo(pub f64);

impl FisherInfo {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Per-pilot Fisher information of `x` under beamformer `w`:
/// `(2ρ/M) |Σ_m (2πd/λ)(m-1) exp(j[ψ_m - (2πd/λ)(m-1)x])|²`
/// where `ψ_m = -arg(w_m)` are the phase-shifter settings in the
/// Hermitian convention of the signal model.
pub fn fisher_information(
    cfg: &ArrayConfig,
    rho: f64,
    x: SpatialFrequency,
    w: &BeamformingVector,
) -> FisherInfo {
    let k = cfg.phase_step();
    let sum: Complex64 = w
        .weights()
        .iter()
        .enumerate()
        .map(|(m, wm)| {
            let psi = -wm.arg();
            k * m as f64 * Complex64::cis(psi - k * m as f64 * x.value())
        })
        .sum();
    FisherInfo(2.0 * rho / cfg.m() * sum.norm_sqr())
}

/// Same quantity from the complex-Gaussian identity `I = 2ρ |wᴴ a'(x)|²`.
pub fn fisher_information_from_derivative(
    cfg: &ArrayConfig,
    rho: f64,
    x: SpatialFrequency,
    w: &BeamformingVector,
) -> FisherInfo {
    FisherInfo(2.0 * rho * array_response_derivative(w, cfg, x).norm_sqr())
}

/// `I_max = 2M(M-1)²π²(d/λ)²ρ`, attained by the matched beamformer.
pub fn max_fisher_information(cfg: &ArrayConfig, rho: f64) -> FisherInfo {
    let m = cfg.m();
    let d = cfg.spacing_ratio();
    FisherInfo(2.0 * m * (m - 1.0).powi(2) * PI * PI * d * d * rho)
}

/// Minimum CRLB on the MSE of `x` after `n` pilots, `1/(n I_max)`.
pub fn min_crlb_x(cfg: &ArrayConfig, rho: f64, n: u64) -> f64 {
    assert!(n >= 1, "slot count must be at least 1");
    1.0 / (n as f64 * max_fisher_information(cfg, rho).value())
}

/// Limit of `n E‖ĥ_n - h‖²` for `ĥ = β a(x̂)`:
/// `(2M-1)σ² / (3(M-1)|p|²)`.
pub fn asymptotic_channel_crlb(cfg: &ArrayConfig, sigma2: f64, pilot_power: f64) -> f64 {
    assert!(pilot_power > 0.0, "pilot power must be positive");
    let m = cfg.m();
    (2.0 * m - 1.0) * sigma2 / (3.0 * (m - 1.0) * pilot_power)
}

/// `‖d(βa(x))/dx‖² = |β|² (2πd/λ)² M(M-1)(2M-1)/6`, independent of `x`.
pub fn channel_derivative_norm_sqr(cfg: &ArrayConfig, beta: Complex64) -> f64 {
    let m = cfg.m();
    beta.norm_sqr() * cfg.phase_step().powi(2) * m * (m - 1.0) * (2.0 * m - 1.0) / 6.0
}
