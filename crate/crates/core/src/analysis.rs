//! Convergence theory of the recursive tracker, evaluated numerically.
//!
//! The noise-free recursion is a discretization of `dx̂/dt = f(x̂, x)`
//! (projected onto `[-1, 1]`). Its stable points, the mainlobe basin around
//! the true direction, the Lipschitz constant of `f`, the asymptotic
//! variance of the recursion and the exponential lock-in bound are all
//! computed here.

use std::f64::consts::PI;

use crate::array::{f_gain, f_gain_slope, ArrayConfig};
use crate::error::{Error, Result};

/// Terms summed explicitly before switching to the integral tail.
const SERIES_TERMS: u64 = 1_000_000;

/// Local optimal stable points of the update field.
#[derive(Debug, Clone, PartialEq)]
pub struct StablePointSet {
    /// Sorted ascending, all in `(-1, 1]`.
    pub points: Vec<f64>,
    pub spacing: f64,
    /// `f(1, x) >= 0`: the projection holds the estimate at +1.
    pub upper_boundary_stable: bool,
    /// `f(-1, x) <= 0`: the projection holds the estimate at -1.
    pub lower_boundary_stable: bool,
}

/// `{x + kλ/((M-1)d)} ∩ (-1, 1]`.
pub fn stable_points(cfg: &ArrayConfig, x: f64) -> StablePointSet {
    let m = cfg.num_antennas() as f64;
    let spacing = 1.0 / ((m - 1.0) * cfg.spacing_ratio());
    let k_min = ((-1.0 - x) / spacing).floor() as i64 - 1;
    let k_max = ((1.0 - x) / spacing).ceil() as i64 + 1;
    let points = (k_min..=k_max)
        .map(|k| x + k as f64 * spacing)
        .filter(|&v| v > -1.0 && v <= 1.0 + 1e-12)
        .map(|v| v.min(1.0))
        .collect();
    StablePointSet {
        points,
        spacing,
        upper_boundary_stable: f_gain(cfg, 1.0, x) >= 0.0,
        lower_boundary_stable: f_gain(cfg, -1.0, x) <= 0.0,
    }
}

/// Root of `f(·, x)` with negative slope, to the given tolerance.
pub fn is_stable_root(cfg: &ArrayConfig, x: f64, v: f64, tol: f64) -> bool {
    f_gain(cfg, v, x).abs() < tol && f_gain_slope(cfg, v, x) < 0.0
}

/// Open interval `(x - λ/(Md), x + λ/(Md))` clipped to `[-1, 1]`; a clipped
/// end is closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mainlobe {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Mainlobe {
    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lo_closed { v >= self.lo } else { v > self.lo };
        let below = if self.hi_closed { v <= self.hi } else { v < self.hi };
        above && below
    }

    /// Distance from `v` to the nearest end of the interval.
    pub fn boundary_distance(&self, v: f64) -> f64 {
        (v - self.lo).abs().min((self.hi - v).abs())
    }
}

/// Half-width `λ/(Md)` of the mainlobe in spatial frequency.
pub fn mainlobe_half_width(cfg: &ArrayConfig) -> f64 {
    1.0 / (cfg.num_antennas() as f64 * cfg.spacing_ratio())
}

pub fn mainlobe(cfg: &ArrayConfig, x: f64) -> Mainlobe {
    let hw = mainlobe_half_width(cfg);
    let (lo, hi) = (x - hw, x + hw);
    Mainlobe {
        lo: lo.max(-1.0),
        hi: hi.min(1.0),
        lo_closed: lo < -1.0,
        hi_closed: hi > 1.0,
    }
}

/// `L = sqrt(M)(M-1)π d/λ`, the Lipschitz constant of `f(·, x)`.
pub fn lipschitz_constant(cfg: &ArrayConfig) -> f64 {
    let m = cfg.num_antennas() as f64;
    m.sqrt() * (m - 1.0) * PI * cfg.spacing_ratio()
}

/// Sampled solution of the projected limiting ODE.
#[derive(Debug, Clone, PartialEq)]
pub struct OdePath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

fn projected_field(cfg: &ArrayConfig, v: f64, x: f64) -> f64 {
    if v <= -1.0 {
        f_gain(cfg, -1.0, x).max(0.0)
    } else if v >= 1.0 {
        f_gain(cfg, 1.0, x).min(0.0)
    } else {
        f_gain(cfg, v, x)
    }
}

/// Integrates `dx̂/dt = f(x̂, x)` with the boundary rule at ±1 using
/// fixed-step classical Runge-Kutta. Requires `dt·L < 0.1`.
pub fn ode_trajectory(cfg: &ArrayConfig, x: f64, x0_hat: f64, t_end: f64, dt: f64) -> Result<OdePath> {
    let l = lipschitz_constant(cfg);
    if !(dt > 0.0 && dt * l < 0.1) {
        return Err(Error::invalid(
            "dt",
            format!("need 0 < dt < {:.3e} (0.1/L), got {dt}", 0.1 / l),
        ));
    }
    if !(-1.0..=1.0).contains(&x0_hat) {
        return Err(Error::invalid("x0_hat", "initial estimate must lie in [-1, 1]"));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::invalid("t_end", "must be finite and non-negative"));
    }
    let steps = (t_end / dt).ceil() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut v = x0_hat;
    times.push(0.0);
    values.push(v);
    for i in 1..=steps {
        let h = (t_end - (i - 1) as f64 * dt).min(dt);
        let k1 = projected_field(cfg, v, x);
        let k2 = projected_field(cfg, v + 0.5 * h * k1, x);
        let k3 = projected_field(cfg, v + 0.5 * h * k2, x);
        let k4 = projected_field(cfg, v + h * k3, x);
        v = (v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).clamp(-1.0, 1.0);
        times.push(times[i - 1] + h);
        values.push(v);
    }
    Ok(OdePath { times, values })
}

fn check_delta(cfg: &ArrayConfig, x: f64, x0_hat: f64, delta: f64) -> Result<Mainlobe> {
    let lobe = mainlobe(cfg, x);
    if !lobe.contains(x0_hat) {
        return Err(Error::invalid("x0_hat", "initial estimate is outside the mainlobe"));
    }
    let room = lobe.boundary_distance(x0_hat);
    if !(delta > 0.0 && delta < room) {
        return Err(Error::invalid(
            "delta",
            format!("need 0 < delta < {room:.6} (distance to the mainlobe boundary), got {delta}"),
        ));
    }
    Ok(lobe)
}

/// ODE time after which the solution started at `x0_hat` has moved at
/// least `delta`: `delta / min{|f(x̂0, x)|, |f(|x̂0 - x| - delta + x, x)|}`.
/// Infinite when the denominator vanishes (e.g. `x̂0 = x`).
pub fn escape_time(cfg: &ArrayConfig, x: f64, x0_hat: f64, delta: f64) -> Result<f64> {
    check_delta(cfg, x, x0_hat, delta)?;
    let near = (x0_hat - x).abs() - delta + x;
    let rate = f_gain(cfg, x0_hat, x).abs().min(f_gain(cfg, near, x).abs());
    if rate == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(delta / rate)
}

/// Smallest `alpha` for which the linearized recursion is stable,
/// `λ/(2 sqrt(M)(M-1)π d)`.
pub fn stability_threshold(cfg: &ArrayConfig) -> f64 {
    0.5 / lipschitz_constant(cfg)
}

/// Asymptotic variance of `sqrt(n)(x̂_n - x)` for `a_n = alpha/(n + N0)`:
/// `alpha² / (2ρ(2 sqrt(M)(M-1)π(d/λ) alpha - 1))`.
pub fn asymptotic_variance(cfg: &ArrayConfig, rho: f64, alpha: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::invalid("rho", "must be positive"));
    }
    let threshold = stability_threshold(cfg);
    if !(alpha > threshold) {
        return Err(Error::invalid(
            "alpha",
            format!("alpha = {alpha} is not above the stability threshold {threshold}"),
        ));
    }
    let l = lipschitz_constant(cfg);
    Ok(alpha * alpha / (2.0 * rho * (2.0 * l * alpha - 1.0)))
}

/// `Σ_{i>=1} 1/(i + n0)²`, explicit to 10⁶ terms plus the integral tail.
pub fn inverse_square_tail(n0: f64) -> f64 {
    let mut s = crate::stats::CompensatedSum::new();
    // smallest terms first
    for i in (1..=SERIES_TERMS).rev() {
        s.add(1.0 / (i as f64 + n0).powi(2));
    }
    // Σ_{i>K} 1/(i+n0)² = 1/(K+n0+1/2) + O((K+n0)^-3)
    s.add(1.0 / (SERIES_TERMS as f64 + n0 + 0.5));
    s.value()
}

/// Inputs of the lock-in probability bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub rho: f64,
    pub alpha: f64,
    pub n0: f64,
    pub x: f64,
    pub x0_hat: f64,
    pub delta: f64,
}

/// Intermediate constants and the resulting probability bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceBound {
    /// `max(0, 1 - 2 exp(-C0 ρ/α²))`.
    pub bound: f64,
    /// `max(0, 1 - 2 exp(-ρδ²/(4 C_e² b(0))))` with the actual `alpha`;
    /// never smaller than `bound`.
    pub direct_bound: f64,
    pub c0: f64,
    pub alpha_max: f64,
    pub escape_time: f64,
    pub lipschitz: f64,
    /// `exp(L(T + a_1))`.
    pub gronwall_factor: f64,
    /// `Σ a_i²`.
    pub step_energy: f64,
}

/// Result of [`convergence_bound`]: the lock-in theorem's constraints either
/// hold and the bound is computed, or they fail and the reason is reported.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundOutcome {
    Applicable(ConvergenceBound),
    NotApplicable { reason: String },
}

impl BoundOutcome {
    pub fn bound(&self) -> Option<f64> {
        match self {
            BoundOutcome::Applicable(b) => Some(b.bound),
            BoundOutcome::NotApplicable { .. } => None,
        }
    }
}

/// Lower bound on `P(x̂_n → x | x̂_0 ∈ B(x))` for `a_n = alpha/(n + n0)`.
pub fn convergence_bound(cfg: &ArrayConfig, inputs: &BoundInputs) -> BoundOutcome {
    let BoundInputs {
        rho,
        alpha,
        n0,
        x,
        x0_hat,
        delta,
    } = *inputs;
    let na = |reason: String| BoundOutcome::NotApplicable { reason };
    if !(rho > 0.0 && alpha > 0.0 && n0 >= 0.0) {
        return na("rho and alpha must be positive and n0 non-negative".into());
    }
    if let Err(e) = check_delta(cfg, x, x0_hat, delta) {
        return na(e.to_string());
    }
    let t = match escape_time(cfg, x, x0_hat, delta) {
        Ok(t) if t.is_finite() => t,
        Ok(_) => return na("escape time is infinite (zero drift at the initial estimate)".into()),
        Err(e) => return na(e.to_string()),
    };
    let l = lipschitz_constant(cfg);
    let sqrt_m = (cfg.num_antennas() as f64).sqrt();
    let drift0 = f_gain(cfg, x0_hat, x).abs();
    let alpha_max = (n0 + 1.0) * ((x - x0_hat).abs() + mainlobe_half_width(cfg)) / drift0;
    if alpha > alpha_max {
        return na(format!(
            "alpha = {alpha} exceeds alpha_max = {alpha_max}: the first step may leave the mainlobe"
        ));
    }
    let a = |i: u64| alpha / (i as f64 + n0);
    let a1 = a(1);
    let ce = (l * (t + a1)).exp();
    let series = inverse_square_tail(n0);
    let b0 = alpha * alpha * series;

    if b0 > rho * delta * delta / (4.0 * ce * ce) {
        return na(format!(
            "step energy b(0) = {b0:.3e} exceeds ρδ²/(4C_e²) = {:.3e}; increase n0",
            rho * delta * delta / (4.0 * ce * ce)
        ));
    }

    // Per-window constraint C_e (sqrt(M) L/2) Σ_window a_i² + sqrt(M) a_start/2 < δ/2.
    // Windows span ODE time T; once the monotone envelope
    // a_start (C_e sqrt(M) L (T + a_1)/2 + sqrt(M)/2) drops below δ/2 all later
    // windows satisfy it as well.
    let envelope = |a_start: f64| a_start * (ce * sqrt_m * l * (t + a1) / 2.0 + sqrt_m / 2.0);
    let mut start = 0u64;
    loop {
        let a_start = a(start + 1);
        if envelope(a_start) < delta / 2.0 {
            break;
        }
        let (mut elapsed, mut energy, mut i) = (0.0, 0.0, start);
        while elapsed < t {
            i += 1;
            elapsed += a(i);
            energy += a(i) * a(i);
        }
        let lhs = ce * sqrt_m * l / 2.0 * energy + sqrt_m * a_start / 2.0;
        if lhs >= delta / 2.0 {
            return na(format!(
                "window starting at slot {start} violates the tracking-error constraint ({lhs:.3e} >= δ/2 = {:.3e}); increase n0",
                delta / 2.0
            ));
        }
        start = i;
    }

    let c0 = delta * delta / (4.0 * (2.0 * l * (t + alpha_max / (n0 + 1.0))).exp() * series);
    let bound = (1.0 - 2.0 * (-c0 * rho / (alpha * alpha)).exp()).max(0.0);
    let direct_bound = (1.0 - 2.0 * (-rho * delta * delta / (4.0 * ce * ce * b0)).exp()).max(0.0);
    BoundOutcome::Applicable(ConvergenceBound {
        bound,
        direct_bound,
        c0,
        alpha_max,
        escape_time: t,
        lipschitz: l,
        gronwall_factor: ce,
        step_energy: b0,
    })
}

/// Where a finite-horizon estimate ended up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LimitClass {
    /// Within tolerance of the true direction.
    TrueDirection,
    /// Within tolerance of another stable point.
    SpuriousStablePoint(f64),
    /// Within tolerance of ±1.
    Boundary(f64),
    Unresolved,
}

/// Nearest point of `S(x) ∪ {-1, 1}` within `tol`.
pub fn classify_limit(cfg: &ArrayConfig, x: f64, estimate: f64, tol: f64) -> LimitClass {
    if (estimate - x).abs() < tol {
        return LimitClass::TrueDirection;
    }
    let set = stable_points(cfg, x);
    let nearest = set
        .points
        .iter()
        .copied()
        .chain([-1.0, 1.0])
        .min_by(|a, b| (a - estimate).abs().total_cmp(&(b - estimate).abs()))
        .unwrap_or(x);
    if (nearest - estimate).abs() >= tol {
        LimitClass::Unresolved
    } else if nearest.abs() == 1.0 && !set.points.contains(&nearest) {
        LimitClass::Boundary(nearest)
    } else {
        LimitClass::SpuriousStablePoint(nearest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crlb::max_fisher_information;
    use crate::trackers::alpha_star;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn cfg8() -> ArrayConfig {
        ArrayConfig::half_wavelength(8).unwrap()
    }

    /// Independent oracle: scan f on a fine grid for sign changes from + to -
    /// and bisect each bracket.
    fn roots_by_scan(cfg: &ArrayConfig, x: f64) -> Vec<f64> {
        let n = 200_000;
        let mut roots = Vec::new();
        let grid: Vec<f64> = (0..=n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect();
        for w in grid.windows(2) {
            let (fa, fb) = (f_gain(cfg, w[0], x), f_gain(cfg, w[1], x));
            if fa > 0.0 && fb <= 0.0 {
                let (mut lo, mut hi) = (w[0], w[1]);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if f_gain(cfg, mid, x) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
        }
        roots
    }

    #[test]
    fn seven_stable_points_for_reference_case() {
        let set = stable_points(&cfg8(), 0.5);
        assert_eq!(set.points.len(), 7);
        assert_relative_eq!(set.spacing, 2.0 / 7.0, max_relative = 1e-15);
        for (i, p) in set.points.iter().enumerate() {
            let k = i as f64 - 5.0;
            assert_abs_diff_eq!(*p, 0.5 + 2.0 * k / 7.0, epsilon = 1e-12);
            assert!(is_stable_root(&cfg8(), 0.5, *p, 1e-9));
        }
        for w in set.points.windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], 2.0 / 7.0, epsilon = 1e-9);
        }
        let scanned = roots_by_scan(&cfg8(), 0.5);
        assert_eq!(scanned.len(), 7);
        for (a, b) in scanned.iter().zip(&set.points) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn truth_is_always_a_stable_point() {
        for x in [-0.99, -0.5, 0.0, 0.123, 0.99] {
            let set = stable_points(&cfg8(), x);
            assert!(set.points.iter().any(|p| (p - x).abs() < 1e-12));
        }
    }

    #[test]
    fn mainlobe_cases() {
        let lobe = mainlobe(&cfg8(), 0.0);
        assert_abs_diff_eq!(lobe.lo, -0.25);
        assert_abs_diff_eq!(lobe.hi, 0.25);
        assert!(!lobe.contains(0.25) && lobe.contains(0.0));
        let edge = mainlobe(&cfg8(), 1.0);
        assert_abs_diff_eq!(edge.lo, 0.75);
        assert_eq!(edge.hi, 1.0);
        assert!(edge.contains(1.0));
    }

    #[test]
    fn lipschitz_value_and_grid_bound() {
        let cfg = cfg8();
        let l = lipschitz_constant(&cfg);
        assert_relative_eq!(l, 2.0 * 2f64.sqrt() * 7.0 * PI * 0.5, max_relative = 1e-14);
        assert_relative_eq!(l, 31.10, max_relative = 1e-3);
        assert_relative_eq!(l * alpha_star(&cfg), 1.0, max_relative = 1e-14);
        // grid oracle
        let x = 0.3;
        let n = 20_000;
        let vals: Vec<(f64, f64)> = (0..=n)
            .map(|i| {
                let v = -1.0 + 2.0 * i as f64 / n as f64;
                (v, f_gain(&cfg, v, x))
            })
            .collect();
        let sup = vals
            .windows(2)
            .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
            .fold(0.0, f64::max);
        assert!(sup <= l * (1.0 + 1e-9));
        assert!(sup > 0.999 * l);
    }

    #[test]
    fn ode_stays_put_at_truth() {
        let path = ode_trajectory(&cfg8(), 0.2, 0.2, 1.0, 1e-3).unwrap();
        assert!(path.values.iter().all(|v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn ode_monotone_inside_mainlobe() {
        let cfg = cfg8();
        for x0 in [0.2 - 0.24, 0.2 - 0.1, 0.2 + 0.05, 0.2 + 0.249] {
            let path = ode_trajectory(&cfg, 0.2, x0, 2.0, 1e-3).unwrap();
            let sign = (0.2 - x0).signum();
            for w in path.values.windows(2) {
                assert!((w[1] - w[0]) * sign >= -1e-15);
                assert!((0.2 - w[1]) * sign >= -1e-12, "crossed x");
            }
            assert!((path.values.last().unwrap() - 0.2).abs() < 1e-6);
        }
    }

    #[test]
    fn ode_rejects_coarse_step() {
        assert!(ode_trajectory(&cfg8(), 0.0, 0.1, 1.0, 0.01).is_err());
    }

    #[test]
    fn ode_boundary_rule() {
        // x near +1: f(1, x) <= 0 so the path leaves / never crosses the boundary
        let path = ode_trajectory(&cfg8(), 0.95, 1.0, 1.0, 1e-3).unwrap();
        assert!(path.values.iter().all(|v| *v <= 1.0));
        assert!(*path.values.last().unwrap() < 1.0);
    }

    #[test]
    fn escape_time_properties() {
        let cfg = cfg8();
        let (x, x0) = (0.0, 0.15);
        let t1 = escape_time(&cfg, x, x0, 0.02).unwrap();
        let t2 = escape_time(&cfg, x, x0, 0.05).unwrap();
        assert!(t1 < t2);
        // moving x0 toward x drives the drift to zero
        let near = escape_time(&cfg, x, 1e-9, 0.02).unwrap();
        assert!(near > 1e6 * t1);
        assert!(escape_time(&cfg, x, 0.0, 0.02).unwrap().is_infinite());
        // delta beyond the mainlobe boundary distance is rejected
        assert!(escape_time(&cfg, x, x0, 0.2).is_err());
        // cross-check against the ODE
        let path = ode_trajectory(&cfg, x, x0, t2, 1e-4).unwrap();
        assert!((x0 - path.values.last().unwrap()).abs() >= 0.05 - 1e-9);
    }

    #[test]
    fn variance_at_alpha_star_is_inverse_imax() {
        for m in [4, 8, 16, 64] {
            let cfg = ArrayConfig::half_wavelength(m).unwrap();
            let rho = 10.0;
            let sigma = asymptotic_variance(&cfg, rho, alpha_star(&cfg)).unwrap();
            assert_relative_eq!(sigma * max_fisher_information(&cfg, rho).0, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn variance_minimized_at_alpha_star() {
        let cfg = cfg8();
        let a = alpha_star(&cfg);
        let h = 1e-6 * a;
        let d = (asymptotic_variance(&cfg, 10.0, a + h).unwrap()
            - asymptotic_variance(&cfg, 10.0, a - h).unwrap())
            / (2.0 * h);
        let scale = asymptotic_variance(&cfg, 10.0, a).unwrap() / a;
        assert!(d.abs() < 1e-6 * scale);
        for f in [0.6, 0.8, 1.3, 3.0] {
            assert!(asymptotic_variance(&cfg, 10.0, f * a).unwrap() > asymptotic_variance(&cfg, 10.0, a).unwrap());
        }
    }

    #[test]
    fn variance_blows_up_near_threshold() {
        let cfg = cfg8();
        let th = stability_threshold(&cfg);
        assert_relative_eq!(2.0 * th, alpha_star(&cfg), max_relative = 1e-14);
        assert!(asymptotic_variance(&cfg, 10.0, th).is_err());
        assert!(asymptotic_variance(&cfg, 10.0, th * (1.0 + 1e-9)).unwrap() > 1e3);
    }

    #[test]
    fn inverse_square_series() {
        assert_relative_eq!(inverse_square_tail(0.0), PI * PI / 6.0, max_relative = 1e-13);
        // Σ_{i>=1} 1/(i+1)² = π²/6 - 1
        assert_relative_eq!(inverse_square_tail(1.0), PI * PI / 6.0 - 1.0, max_relative = 1e-12);
    }

    fn inputs(rho_db: f64, n0: f64) -> BoundInputs {
        let cfg = cfg8();
        BoundInputs {
            rho: 10f64.powf(rho_db / 10.0),
            alpha: alpha_star(&cfg),
            n0,
            x: 0.2,
            x0_hat: 0.3,
            delta: 0.05,
        }
    }

    #[test]
    fn bound_not_applicable_with_large_first_steps() {
        let out = convergence_bound(&cfg8(), &inputs(10.0, 0.0));
        assert!(matches!(out, BoundOutcome::NotApplicable { .. }), "{out:?}");
    }

    #[test]
    fn bound_applicable_with_offset() {
        let out = convergence_bound(&cfg8(), &inputs(10.0, 50.0));
        let BoundOutcome::Applicable(b) = out else {
            panic!("expected applicable bound, got {out:?}");
        };
        assert!(b.bound <= b.direct_bound);
        assert!((0.0..=1.0).contains(&b.bound));
        assert!(b.direct_bound > 0.99);
    }

    #[test]
    fn bound_monotone_in_rho_and_n0() {
        let cfg = cfg8();
        let get = |db, n0| match convergence_bound(&cfg, &inputs(db, n0)) {
            BoundOutcome::Applicable(b) => b,
            other => panic!("{other:?}"),
        };
        let (lo, hi) = (get(10.0, 50.0), get(20.0, 50.0));
        assert!(hi.bound >= lo.bound && hi.direct_bound >= lo.direct_bound);
        // C0 grows with n0 (b(0) shrinks faster than alpha_max grows the exponent)
        let a = get(20.0, 30.0);
        let b = get(20.0, 50.0);
        assert!(b.direct_bound >= a.direct_bound);
        assert!(b.step_energy < a.step_energy);
    }

    #[test]
    fn bound_rejects_start_outside_mainlobe() {
        let mut i = inputs(10.0, 50.0);
        i.x0_hat = 0.6;
        assert!(convergence_bound(&cfg8(), &i).bound().is_none());
    }

    #[test]
    fn classification() {
        let cfg = cfg8();
        assert_eq!(classify_limit(&cfg, 0.5, 0.5005, 1e-3), LimitClass::TrueDirection);
        match classify_limit(&cfg, 0.5, 0.5 - 2.0 / 7.0 + 1e-4, 1e-3) {
            LimitClass::SpuriousStablePoint(p) => assert_abs_diff_eq!(p, 0.5 - 2.0 / 7.0, epsilon = 1e-12),
            other => panic!("{other:?}"),
        }
        assert_eq!(classify_limit(&cfg, 0.5, 0.0, 1e-3), LimitClass::Unresolved);
    }
}
