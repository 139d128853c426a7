//! Kerr and Schwarzschild geometry in Boyer-Lindquist coordinates.
//!
//! Everything here is a pure function of [`BlackHoleParams`] and a point.
//! Units are geometric (G = c = 1); `a` is the specific angular momentum, so
//! `|a| <= M` with the extremal case allowed. A zero mass is accepted as the
//! flat limit, where the tortoise coordinate reduces to `r* = r`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// Poles are rejected below this value of `sin(theta)`.
pub const POLE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlackHoleParams {
    pub mass: f64,
    pub spin: f64,
}

impl BlackHoleParams {
    pub fn new(mass: f64, spin: f64) -> Result<Self> {
        if !(mass.is_finite() && spin.is_finite()) {
            return Err(Error::Domain("mass and spin must be finite".into()));
        }
        if mass < 0.0 {
            return Err(Error::Domain(format!("mass must be positive, got {mass}")));
        }
        if spin.abs() > mass {
            return Err(Error::Domain(format!("|a| = {} exceeds M = {mass}", spin.abs())));
        }
        Ok(Self { mass, spin })
    }

    pub fn schwarzschild(mass: f64) -> Result<Self> {
        Self::new(mass, 0.0)
    }

    pub fn is_flat(&self) -> bool {
        self.mass == 0.0
    }

    /// `Δ(r) = r² − 2Mr + a²`.
    pub fn delta(&self, r: f64) -> f64 {
        r * r - 2.0 * self.mass * r + self.spin * self.spin
    }

    /// `ρ²(r, θ) = r² + a² cos²θ`.
    pub fn rho2(&self, r: f64, theta: f64) -> f64 {
        let c = theta.cos();
        r * r + self.spin * self.spin * c * c
    }

    fn is_extremal(&self) -> bool {
        self.mass > 0.0 && self.spin.abs() == self.mass
    }
}

/// Roots `r± = M ± √(M² − a²)` of `Δ`.
pub fn horizon_radii(params: &BlackHoleParams) -> Result<(f64, f64)> {
    let (m, a) = (params.mass, params.spin);
    if a.abs() > m {
        return Err(Error::Domain(format!("|a| = {} exceeds M = {m}", a.abs())));
    }
    let disc = ((m - a) * (m + a)).max(0.0).sqrt();
    let r_plus = m + disc;
    // r₋ through the product of the roots, r₊ r₋ = a², avoids cancellation.
    let r_minus = if r_plus > 0.0 { a * a / r_plus } else { 0.0 };
    Ok((r_plus, r_minus))
}

/// Index into the 4×4 component arrays, ordered (t, r, θ, φ).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coord {
    T = 0,
    R = 1,
    Theta = 2,
    Phi = 3,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricComponents {
    pub covariant: [[f64; 4]; 4],
    pub contravariant: [[f64; 4]; 4],
    pub r: f64,
    pub theta: f64,
}

impl MetricComponents {
    pub fn lower(&self, mu: Coord, nu: Coord) -> f64 {
        self.covariant[mu as usize][nu as usize]
    }

    pub fn upper(&self, mu: Coord, nu: Coord) -> f64 {
        self.contravariant[mu as usize][nu as usize]
    }

    /// `max |g_{μα} g^{αν} − δ_μ^ν|`.
    pub fn inverse_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let s: f64 = (0..4).map(|k| self.covariant[i][k] * self.contravariant[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }
}

/// Kerr metric and its closed-form inverse in Boyer-Lindquist coordinates.
///
/// The off-diagonal entry is the tensor component `g_tφ = −2aMr sin²θ/ρ²`, i.e.
/// half the coefficient of `dt dφ` in the line element.
pub fn metric_bl(params: &BlackHoleParams, r: f64, theta: f64) -> Result<MetricComponents> {
    let (r_plus, _) = horizon_radii(params)?;
    let sin = theta.sin();
    if !(theta > 0.0 && theta < std::f64::consts::PI) || sin < POLE_EPS {
        return Err(Error::DegeneratePoint(format!("sin(theta) = {sin:e} at theta = {theta}")));
    }
    let delta = params.delta(r);
    if r <= r_plus || delta <= 0.0 {
        return Err(Error::DegeneratePoint(format!(
            "r = {r} is not outside the horizon r+ = {r_plus} (Delta = {delta:e})"
        )));
    }
    let (m, a) = (params.mass, params.spin);
    let rho2 = params.rho2(r, theta);
    let sin2 = sin * sin;
    let sum2 = r * r + a * a;
    let big_a = sum2 * sum2 - a * a * delta * sin2;

    let mut lower = [[0.0; 4]; 4];
    lower[0][0] = -(delta - a * a * sin2) / rho2;
    lower[0][3] = -2.0 * a * m * r * sin2 / rho2;
    lower[3][0] = lower[0][3];
    lower[1][1] = rho2 / delta;
    lower[2][2] = rho2;
    lower[3][3] = big_a / rho2 * sin2;

    let mut upper = [[0.0; 4]; 4];
    upper[0][0] = -big_a / (rho2 * delta);
    upper[0][3] = -2.0 * a * m * r / (rho2 * delta);
    upper[3][0] = upper[0][3];
    upper[1][1] = delta / rho2;
    upper[2][2] = 1.0 / rho2;
    upper[3][3] = (delta - a * a * sin2) / (rho2 * delta * sin2);

    Ok(MetricComponents { covariant: lower, contravariant: upper, r, theta })
}

/// `dr*/dr = (r² + a²)/Δ`.
pub fn tortoise_derivative(params: &BlackHoleParams, r: f64) -> Result<f64> {
    let (r_plus, _) = horizon_radii(params)?;
    if params.is_flat() {
        return Ok(1.0);
    }
    if r <= r_plus {
        return Err(Error::Domain(format!("r = {r} <= r+ = {r_plus}")));
    }
    let a2 = params.spin * params.spin;
    Ok((r * r + a2) / params.delta(r))
}

/// Tortoise coordinate `r*(r)`.
///
/// Integration constant: the partial-fraction antiderivative with logarithms
/// normalised by `2M`, which reduces to `r + 2M ln(r/2M − 1)` at `a = 0` and is
/// continuous in `a` up to and including the extremal limit.
pub fn tortoise(params: &BlackHoleParams, r: f64) -> Result<f64> {
    let (r_plus, _) = horizon_radii(params)?;
    if params.is_flat() {
        return Ok(r);
    }
    if !(r > r_plus) {
        return Err(Error::Domain(format!("r = {r} <= r+ = {r_plus}")));
    }
    Ok(tortoise_from_offset(params, r - r_plus, r_plus))
}

/// `r*` as a function of the horizon offset `x = r − r₊`, accurate for tiny `x`.
pub(crate) fn tortoise_from_offset(params: &BlackHoleParams, x: f64, r_plus: f64) -> f64 {
    let m = params.mass;
    if m == 0.0 {
        return x;
    }
    let r = r_plus + x;
    let two_m = 2.0 * m;
    if params.is_extremal() {
        return r + two_m * (x / two_m).ln() - two_m * m / x;
    }
    let r_minus = params.spin * params.spin / r_plus;
    let gap = r_plus - r_minus;
    let c_plus = two_m * r_plus / gap;
    let c_minus = -two_m * r_minus / gap;
    let mut out = r + c_plus * (x / two_m).ln();
    if r_minus > 0.0 {
        out += c_minus * ((x + gap) / two_m).ln();
    }
    out
}

/// Inverse of [`tortoise`], returning `r`.
pub fn inverse_tortoise(params: &BlackHoleParams, r_star: f64) -> Result<f64> {
    let (r_plus, _) = horizon_radii(params)?;
    Ok(r_plus + inverse_tortoise_offset(params, r_star)?)
}

/// Inverse tortoise map returning the horizon offset `r − r₊`.
///
/// Solved by safeguarded Newton iteration in `y = ln(r − r₊)`, which keeps the
/// map smooth all the way down to the horizon.
pub fn inverse_tortoise_offset(params: &BlackHoleParams, r_star: f64) -> Result<f64> {
    if !r_star.is_finite() {
        return Err(Error::Domain(format!("r* = {r_star} is not finite")));
    }
    let (r_plus, r_minus) = horizon_radii(params)?;
    if params.is_flat() {
        if r_star <= 0.0 {
            return Err(Error::Domain("flat tortoise coordinate must be positive".into()));
        }
        return Ok(r_star);
    }
    let gap = r_plus - r_minus;
    let a2 = params.spin * params.spin;
    let g = |y: f64| tortoise_from_offset(params, y.exp(), r_plus) - r_star;
    // dr*/dy = (r² + a²)/(x + r₊ − r₋) with x = e^y.
    let dg = |y: f64| {
        let x = y.exp();
        let r = r_plus + x;
        (r * r + a2) / (x + gap)
    };

    let mut hi = (r_star.abs() + params.mass).ln();
    let mut steps = 0;
    while g(hi) < 0.0 {
        hi += 1.0;
        steps += 1;
        if steps > 4000 {
            return Err(Error::Domain(format!("cannot bracket r* = {r_star}")));
        }
    }
    let mut lo = hi - 1.0;
    while g(lo) > 0.0 {
        lo -= 1.0;
        steps += 1;
        if steps > 4000 || lo < -700.0 {
            return Err(Error::Domain(format!("r* = {r_star} is too deep in the horizon region")));
        }
    }

    let mut y = 0.5 * (lo + hi);
    for _ in 0..200 {
        let gy = g(y);
        if gy == 0.0 {
            break;
        }
        if gy < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let mut next = y - gy / dg(y);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - y).abs();
        y = next;
        if step <= 1e-15 * y.abs().max(1.0) || hi - lo <= 1e-15 * y.abs().max(1.0) {
            break;
        }
    }
    Ok(y.exp())
}

/// Advanced time `v₊ = t + r*`.
pub fn advanced_time(params: &BlackHoleParams, t: f64, r: f64) -> Result<f64> {
    Ok(t + tortoise(params, r)?)
}

/// `φ₊ = φ + a ∫ Δ⁻¹ dr`.
pub fn phi_plus(params: &BlackHoleParams, phi: f64, r: f64) -> Result<f64> {
    let (r_plus, r_minus) = horizon_radii(params)?;
    let a = params.spin;
    if a == 0.0 {
        return Ok(phi);
    }
    if r <= r_plus {
        return Err(Error::Domain(format!("r = {r} <= r+ = {r_plus}")));
    }
    let shift = if params.is_extremal() {
        -1.0 / (r - r_plus)
    } else {
        ((r - r_plus) / (r - r_minus)).ln() / (r_plus - r_minus)
    };
    Ok(phi + a * shift)
}

pub type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Slicing function `μ(r)` for `t̃ = v₊ − μ(r)`, the `φ̃` blending cutoff `ζ(r)`
/// and the inner excision radius.
#[derive(Clone)]
pub struct SlicingSpec {
    pub mu: RadialFn,
    /// Exact derivative of `mu`; a centred difference is used when absent.
    pub mu_prime: Option<RadialFn>,
    pub zeta: RadialFn,
    pub r_e: f64,
}

const BLEND_LO: f64 = 2.2;
const BLEND_HI: f64 = 2.5;

fn smoothstep5(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
}

impl SlicingSpec {
    /// Canonical slicing: `μ' = 2` near the horizon, `μ = r*` for `r ≥ 5M/2`, with
    /// `μ'` blended by a quintic step on `[2.2M, 2.5M]`.
    ///
    /// The blend is taken on `μ'` rather than on `μ`: blending the values of `2r`
    /// and `r*` directly drives `μ'` negative inside the transition.
    pub fn reference(params: &BlackHoleParams) -> Result<Self> {
        if params.is_flat() {
            return Err(Error::Domain("reference slicing needs M > 0".into()));
        }
        let p = *params;
        let m = p.mass;
        let (r_lo, r_hi) = (BLEND_LO * m, BLEND_HI * m);
        let rs_hi = tortoise(&p, r_hi)?;

        let mu_prime = move |r: f64| -> f64 {
            let s = smoothstep5((r - r_lo) / (r_hi - r_lo));
            if s == 0.0 {
                2.0
            } else {
                let a2 = p.spin * p.spin;
                (1.0 - s) * 2.0 + s * (r * r + a2) / p.delta(r)
            }
        };
        let nodes = gauss_legendre(24);
        let integral = move |from: f64, to: f64| -> f64 {
            let half = 0.5 * (to - from);
            let mid = 0.5 * (to + from);
            nodes.iter().map(|&(x, w)| w * mu_prime(mid + half * x)).sum::<f64>() * half
        };
        let mu_lo = rs_hi - integral(r_lo, r_hi);
        let mu = move |r: f64| -> f64 {
            if r >= r_hi {
                tortoise(&p, r).unwrap_or(f64::NAN)
            } else if r >= r_lo {
                rs_hi - integral(r, r_hi)
            } else {
                mu_lo - 2.0 * (r_lo - r)
            }
        };
        let zeta = move |r: f64| 1.0 - smoothstep5((r - r_lo) / (r_hi - r_lo));
        Ok(Self { mu: Arc::new(mu), mu_prime: Some(Arc::new(mu_prime)), zeta: Arc::new(zeta), r_e: m })
    }

    fn derivative(&self, r: f64) -> f64 {
        match &self.mu_prime {
            Some(d) => d(r),
            None => {
                let h = 1e-6 * r.abs().max(1.0);
                ((self.mu)(r + h) - (self.mu)(r - h)) / (2.0 * h)
            }
        }
    }
}

/// Slicing time `t̃ = v₊ − μ(r)`.
pub fn slicing_time(spec: &SlicingSpec, params: &BlackHoleParams, t: f64, r: f64) -> Result<f64> {
    Ok(advanced_time(params, t, r)? - (spec.mu)(r))
}

/// `φ̃ = ζ φ₊ + (1 − ζ) φ`.
pub fn phi_tilde(spec: &SlicingSpec, params: &BlackHoleParams, phi: f64, r: f64) -> Result<f64> {
    let z = (spec.zeta)(r);
    Ok(z * phi_plus(params, phi, r)? + (1.0 - z) * phi)
}

#[derive(Debug, Clone, Serialize)]
pub struct SlicingSample {
    pub r: f64,
    pub mu_prime: f64,
    /// `2 − (1 − 2Mr/ρ²) μ'` at the worst polar angle.
    pub spacelike_margin: f64,
    /// `μ − r*` where `r*` exists.
    pub mu_minus_rstar: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlicingReport {
    pub samples: Vec<SlicingSample>,
    pub mu_prime_positive: bool,
    pub spacelike: bool,
    pub dominates_tortoise: bool,
    pub matches_tortoise_far: bool,
    pub zeta_in_unit_interval: bool,
    pub excision_inside_horizon: bool,
    pub passed: bool,
}

/// Check the slicing conditions on sampled radii.
///
/// Non-finite values of `μ` or `μ'` count as failures.
pub fn validate_slicing(spec: &SlicingSpec, params: &BlackHoleParams, grid: &[f64]) -> SlicingReport {
    let (r_plus, r_minus) = horizon_radii(params).unwrap_or((f64::NAN, f64::NAN));
    let m = params.mass;
    let a2 = params.spin * params.spin;
    let mut report = SlicingReport {
        samples: Vec::with_capacity(grid.len()),
        mu_prime_positive: true,
        spacelike: true,
        dominates_tortoise: true,
        matches_tortoise_far: true,
        zeta_in_unit_interval: true,
        excision_inside_horizon: spec.r_e > r_minus && spec.r_e < r_plus,
        passed: false,
    };
    for &r in grid {
        let d = spec.derivative(r);
        // ρ² is largest at the poles, which minimises the margin for μ' > 0.
        let rho2 = r * r + a2;
        let margin = 2.0 - (1.0 - 2.0 * m * r / rho2) * d;
        if !(d.is_finite() && d > 0.0) {
            report.mu_prime_positive = false;
        }
        if !(margin.is_finite() && margin > 0.0) {
            report.spacelike = false;
        }
        let z = (spec.zeta)(r);
        if !(0.0..=1.0).contains(&z) {
            report.zeta_in_unit_interval = false;
        }
        let diff = if r > r_plus {
            let rs = tortoise(params, r).ok();
            rs.map(|rs| {
                let mu = (spec.mu)(r);
                let diff = mu - rs;
                let tol = 1e-9 * rs.abs().max(1.0);
                if !(diff.is_finite() && diff >= -tol) {
                    report.dominates_tortoise = false;
                }
                if r > 2.5 * m && !(diff.abs() <= tol) {
                    report.matches_tortoise_far = false;
                }
                diff
            })
        } else {
            None
        };
        report.samples.push(SlicingSample { r, mu_prime: d, spacelike_margin: margin, mu_minus_rstar: diff });
    }
    report.passed = report.mu_prime_positive
        && report.spacelike
        && report.dominates_tortoise
        && report.matches_tortoise_far
        && report.zeta_in_unit_interval;
    report
}

#[derive(Debug, Clone, Copy)]
pub struct TrappedSetQuery {
    pub tau: f64,
    pub phi_freq: f64,
    pub params: BlackHoleParams,
}

/// `R_a(r, τ, Φ)`, whose zero set contains every trapped null geodesic in `r > r₊`.
pub fn trapped_polynomial(params: &BlackHoleParams, r: f64, tau: f64, phi_freq: f64) -> f64 {
    let (m, a) = (params.mass, params.spin);
    let a2 = a * a;
    (r * r + a2) * (r * r * r - 3.0 * m * r * r + a2 * r + a2 * m) * tau * tau
        - 2.0 * a * m * (r * r - a2) * tau * phi_freq
        - a2 * (r - m) * phi_freq * phi_freq
}

/// Magnitude scale of `R_a` at `r`: the same terms with absolute values.
pub fn trapped_polynomial_scale(params: &BlackHoleParams, r: f64, tau: f64, phi_freq: f64) -> f64 {
    let (m, a) = (params.mass, params.spin.abs());
    let a2 = a * a;
    (r * r + a2) * (r * r * r + 3.0 * m * r * r + a2 * r + a2 * m) * tau * tau
        + 2.0 * a * m * (r * r + a2) * (tau * phi_freq).abs()
        + a2 * (r + m) * phi_freq * phi_freq
}

/// Search window for [`trapped_root`], in units of `M`.
pub const TRAPPED_WINDOW: (f64, f64) = (2.5, 3.5);

/// Root `r_a(τ, Φ)` of `R_a` near the photon sphere, by bisection to the last ulp.
pub fn trapped_root(query: &TrappedSetQuery) -> Result<f64> {
    let p = &query.params;
    if query.tau == 0.0 || !query.tau.is_finite() {
        return Err(Error::Domain("tau must be finite and nonzero".into()));
    }
    if p.is_flat() {
        return Err(Error::Domain("trapped set needs M > 0".into()));
    }
    let f = |r: f64| trapped_polynomial(p, r, query.tau, query.phi_freq);
    let mut lo = TRAPPED_WINDOW.0 * p.mass;
    let mut hi = TRAPPED_WINDOW.1 * p.mass;
    let (f_lo, f_hi) = (f(lo), f(hi));
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NoBracket { lo, hi });
    }
    let lo_negative = f_lo < 0.0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if f(lo).abs() <= f(hi).abs() { lo } else { hi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn p(m: f64, a: f64) -> BlackHoleParams {
        BlackHoleParams::new(m, a).unwrap()
    }

    #[test]
    fn schwarzschild_horizon_limit() {
        assert!(metric_bl(&p(1.0, 0.0), 2.0, PI / 2.0).is_err());
        assert!(metric_bl(&p(1.0, 0.0), 1.999, PI / 2.0).is_err());
        let g = metric_bl(&p(1.0, 0.0), 2.0 + 1e-9, PI / 2.0).unwrap();
        assert!(g.lower(Coord::T, Coord::T).abs() < 1e-8);
    }

    #[test]
    fn cross_term_vanishes_without_spin() {
        for &r in &[2.5, 3.0, 10.0, 1e3] {
            let g = metric_bl(&p(1.0, 0.0), r, 1.1).unwrap();
            assert_eq!(g.lower(Coord::T, Coord::Phi), 0.0);
            assert_eq!(g.upper(Coord::T, Coord::Phi), 0.0);
        }
    }

    #[test]
    fn rejects_poles_and_interior() {
        let q = p(1.0, 0.5);
        assert!(matches!(metric_bl(&q, 4.0, 0.0), Err(Error::DegeneratePoint(_))));
        assert!(matches!(metric_bl(&q, 4.0, 1e-9), Err(Error::DegeneratePoint(_))));
        assert!(matches!(metric_bl(&q, 1.0, 1.0), Err(Error::DegeneratePoint(_))));
    }

    #[test]
    fn horizon_examples() {
        assert_eq!(horizon_radii(&p(1.0, 0.0)).unwrap(), (2.0, 0.0));
        assert_eq!(horizon_radii(&p(1.0, 1.0)).unwrap(), (1.0, 1.0));
        let (rp, rm) = horizon_radii(&p(1.0, 0.5)).unwrap();
        // 1 ± √0.75
        assert!((rp - 1.866_025_403_784_438_6).abs() < 1e-15);
        assert!((rm - 0.133_974_596_215_561_35).abs() < 1e-15);
        let q = p(1.0, 0.5);
        assert!(q.delta(rp).abs() < 1e-14);
        assert!(q.delta(rm).abs() < 1e-14);
        assert!(BlackHoleParams::new(1.0, 1.2).is_err());
    }

    #[test]
    fn tortoise_basic_values() {
        let s = p(1.0, 0.0);
        assert_eq!(tortoise(&s, 4.0).unwrap(), 4.0);
        assert!(tortoise(&s, 2.0).is_err());
        assert!(tortoise(&s, 1.0).is_err());
        for &r in &[3.0, 10.0, 100.0] {
            let back = inverse_tortoise(&s, tortoise(&s, r).unwrap()).unwrap();
            assert!((back - r).abs() <= 1e-10 * r, "{r} -> {back}");
        }
    }

    #[test]
    fn extremal_tortoise_is_continuous() {
        let r = 5.0;
        let ext = tortoise(&p(1.0, 1.0), r).unwrap();
        let near = tortoise(&p(1.0, 1.0 - 1e-7), r).unwrap();
        assert!((ext - near).abs() < 1e-4, "{ext} vs {near}");
    }

    #[test]
    fn inverse_deep_in_horizon_region() {
        let s = p(1.0, 0.0);
        let x = inverse_tortoise_offset(&s, -80.0).unwrap();
        assert!(x > 0.0 && x < 1e-15);
        let back = tortoise_from_offset(&s, x, 2.0);
        assert!((back + 80.0).abs() < 1e-10);
    }

    #[test]
    fn trapped_root_schwarzschild_is_photon_sphere() {
        for &(tau, phi) in &[(1.0, 0.0), (0.3, 5.0), (-2.0, 1.0)] {
            let q = TrappedSetQuery { tau, phi_freq: phi, params: p(1.0, 0.0) };
            assert_eq!(trapped_root(&q).unwrap(), 3.0);
        }
        let q = TrappedSetQuery { tau: 1.0, phi_freq: 0.0, params: p(2.0, 0.0) };
        assert!((trapped_root(&q).unwrap() - 6.0).abs() <= 1e-12);
    }

    #[test]
    fn trapped_root_requires_nonzero_tau() {
        let q = TrappedSetQuery { tau: 0.0, phi_freq: 1.0, params: p(1.0, 0.1) };
        assert!(trapped_root(&q).is_err());
    }

    #[test]
    fn trapped_root_no_bracket() {
        // Φ ≫ τ pushes the a²(r − M)Φ² term to dominate across the window.
        let q = TrappedSetQuery { tau: 1e-3, phi_freq: 1.0, params: p(1.0, 0.5) };
        assert!(matches!(trapped_root(&q), Err(Error::NoBracket { .. })));
    }

    #[test]
    fn reference_slicing_passes() {
        for &a in &[0.0, 0.3] {
            let q = p(1.0, a);
            let spec = SlicingSpec::reference(&q).unwrap();
            let grid: Vec<f64> = (0..800).map(|i| spec.r_e + i as f64 * 0.01).collect();
            let rep = validate_slicing(&spec, &q, &grid);
            assert!(
                rep.passed,
                "a = {a}: {:?}",
                (rep.mu_prime_positive, rep.spacelike, rep.dominates_tortoise, rep.matches_tortoise_far)
            );
            assert!(rep.excision_inside_horizon);
        }
    }

    #[test]
    fn tortoise_slicing_fails_at_horizon() {
        let q = p(1.0, 0.0);
        let spec = SlicingSpec {
            mu: Arc::new(move |r| tortoise(&q, r).unwrap_or(f64::NAN)),
            mu_prime: None,
            zeta: Arc::new(|_| 0.0),
            r_e: 1.0,
        };
        let grid: Vec<f64> = (0..400).map(|i| 1.0 + i as f64 * 0.01).collect();
        let rep = validate_slicing(&spec, &q, &grid);
        assert!(!rep.mu_prime_positive);
        assert!(!rep.passed);
    }

    #[test]
    fn flat_slicing_violates_positivity() {
        let q = p(1.0, 0.0);
        let spec = SlicingSpec { mu: Arc::new(|_| 7.0), mu_prime: None, zeta: Arc::new(|_| 0.0), r_e: 1.0 };
        let rep = validate_slicing(&spec, &q, &[1.5, 2.5, 3.0]);
        assert!(!rep.mu_prime_positive);
        assert!(!rep.passed);
    }

    #[test]
    fn phi_plus_and_advanced_time() {
        let q = p(1.0, 0.0);
        assert_eq!(phi_plus(&q, 0.7, 5.0).unwrap(), 0.7);
        assert_eq!(advanced_time(&q, 1.0, 4.0).unwrap(), 5.0);
        let k = p(1.0, 0.5);
        let spec = SlicingSpec::reference(&k).unwrap();
        // Far from the horizon ζ = 0 and μ = r*, so t̃ = t and φ̃ = φ.
        assert!((slicing_time(&spec, &k, 3.0, 10.0).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(phi_tilde(&spec, &k, 0.4, 10.0).unwrap(), 0.4);
    }
}
