//! Per-mode radial equations and the one-dimensional reduction of the radial
//! flat wave equation.
//!
//! For `u = ψ(t, r) Y_ℓm / r` on Schwarzschild, `□u = 0` becomes
//! `(∂_t² − ∂_{r*}² + V_ℓ) ψ = 0` with the potential of [`rw_potential`].
//! Kerr (`a ≠ 0`) modes couple and are not separated here.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{self, BlackHoleParams};
use crate::quadrature::{self, AdaptiveOptions, Rect};

/// `V_ℓ(r) = (1 − 2M/r)(ℓ(ℓ+1)/r² + 2M/r³)`.
pub fn rw_potential(ell: u32, params: &BlackHoleParams, r: f64) -> Result<f64> {
    check_static(params)?;
    let m = params.mass;
    if !(r > 2.0 * m) {
        return Err(Error::Domain(format!("r = {r} <= 2M = {}", 2.0 * m)));
    }
    Ok(potential_from_offset(ell, m, r - 2.0 * m))
}

/// Same potential written in terms of `x = r − 2M`, so the horizon factor
/// `x/r` keeps full relative precision deep in the `r* → −∞` region.
pub(crate) fn potential_from_offset(ell: u32, m: f64, x: f64) -> f64 {
    let r = 2.0 * m + x;
    let l = ell as f64;
    (x / r) * (l * (l + 1.0) / (r * r) + 2.0 * m / (r * r * r))
}

fn check_static(params: &BlackHoleParams) -> Result<()> {
    if params.spin != 0.0 {
        return Err(Error::Domain("mode separation needs a = 0 (Kerr modes couple)".into()));
    }
    Ok(())
}

/// Effective potential of one spherical-harmonic mode on Schwarzschild.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialPotential {
    pub ell: u32,
    pub params: BlackHoleParams,
}

impl RadialPotential {
    pub fn new(ell: u32, params: BlackHoleParams) -> Result<Self> {
        check_static(&params)?;
        Ok(Self { ell, params })
    }

    pub fn at_r(&self, r: f64) -> Result<f64> {
        rw_potential(self.ell, &self.params, r)
    }

    /// Potential, areal radius and `r − 2M` at a tortoise coordinate.
    pub fn at_rstar(&self, r_star: f64) -> Result<RadialSample> {
        let m = self.params.mass;
        let x = geometry::inverse_tortoise_offset(&self.params, r_star)?;
        let r = 2.0 * m + x;
        Ok(RadialSample {
            r,
            offset: x,
            value: if m == 0.0 {
                let l = self.ell as f64;
                l * (l + 1.0) / (r * r)
            } else {
                potential_from_offset(self.ell, m, x)
            },
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RadialSample {
    pub r: f64,
    pub offset: f64,
    pub value: f64,
}

pub type SourceFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A nonnegative source `H(s, ρ)` supported in the forward cone `ρ ≤ s`.
#[derive(Clone)]
pub struct ReductionSource {
    pub h: SourceFn,
    pub description: String,
}

impl ReductionSource {
    pub fn new(description: impl Into<String>, h: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { h: Arc::new(h), description: description.into() }
    }

    /// Source assembled from mode data: at a single mode the sum of spherical
    /// norms collapses to the magnitude of the mode coefficient.
    pub fn from_mode(description: impl Into<String>, g: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(description, move |s, rho| g(s, rho).abs())
    }

    /// Sampled check of `H ≥ 0` and `supp H ⊂ {ρ ≤ s}` on `[0, s_max]²`.
    pub fn check(&self, s_max: f64, n: usize) -> SourceCheck {
        let mut report = SourceCheck { nonnegative: true, in_cone: true };
        for i in 0..=n {
            for j in 0..=n {
                let s = s_max * i as f64 / n as f64;
                let rho = s_max * j as f64 / n as f64;
                let v = (self.h)(s, rho);
                if v < 0.0 || !v.is_finite() {
                    report.nonnegative = false;
                }
                if rho > s && v != 0.0 {
                    report.in_cone = false;
                }
            }
        }
        report
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceCheck {
    pub nonnegative: bool,
    pub in_cone: bool,
}

/// Characteristic rectangle `D_tr` in coordinates `(α, β) = (s − ρ, s + ρ)`.
pub fn characteristic_rectangle(t: f64, r: f64) -> Rect {
    let u = (t - r).max(0.0);
    Rect { x0: 0.0, x1: u, y0: u, y1: (t + r).max(u) }
}

fn rectangle_integrand(h: &SourceFn) -> impl Fn(f64, f64) -> f64 + '_ {
    // ds dρ = ½ dα dβ
    move |alpha: f64, beta: f64| {
        let s = 0.5 * (alpha + beta);
        let rho = 0.5 * (beta - alpha);
        0.5 * rho * h(s, rho)
    }
}

/// Radial solution of `□v = H` with zero data,
/// `v(t, r) = (2r)⁻¹ ∬_{D_tr} ρ H(s, ρ) ds dρ`, integrated adaptively.
pub fn oned_reduction(source: &ReductionSource, t: f64, r: f64) -> Result<f64> {
    oned_reduction_with(source, t, r, &AdaptiveOptions::default())
}

pub fn oned_reduction_with(source: &ReductionSource, t: f64, r: f64, opts: &AdaptiveOptions) -> Result<f64> {
    if !(t > 0.0 && r > 0.0) {
        return Err(Error::Domain(format!("need t > 0 and r > 0, got ({t}, {r})")));
    }
    if t <= r {
        return Ok(0.0);
    }
    let f = rectangle_integrand(&source.h);
    let res = quadrature::integrate_adaptive(&f, characteristic_rectangle(t, r), opts)?;
    Ok(res.value / (2.0 * r))
}

/// Fixed composite rule on `panels × panels` cells; `points = 1` is the
/// second-order midpoint rule.
pub fn oned_reduction_fixed(source: &ReductionSource, t: f64, r: f64, panels: usize, points: usize) -> f64 {
    if t <= r {
        return 0.0;
    }
    let f = rectangle_integrand(&source.h);
    quadrature::composite_rule(&f, &characteristic_rectangle(t, r), panels, points) / (2.0 * r)
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalFormSample {
    pub r: f64,
    pub r_star: f64,
    /// Coefficient of `∂_{r*}²` relative to `∂_t²` in the per-mode operator.
    pub principal_coefficient: f64,
    pub potential: f64,
    /// `|V_ℓ − ℓ(ℓ+1)/r²|`.
    pub remainder: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalFormReport {
    pub ell: u32,
    pub samples: Vec<NormalFormSample>,
    pub max_principal_defect: f64,
    /// `sup r³ |V_ℓ − ℓ(ℓ+1)/r²|` over the grid.
    pub remainder_constant: f64,
    /// Least-squares slope of `log remainder` against `log r`.
    pub remainder_slope: Option<f64>,
}

/// Verify that in `(t, r*)` the mode operator has flat principal part and that
/// the potential differs from the flat angular term by `O(r⁻³)`.
pub fn normal_form_check(params: &BlackHoleParams, ell: u32, grid: &[f64]) -> Result<NormalFormReport> {
    check_static(params)?;
    let m = params.mass;
    let l = ell as f64;
    let mut samples = Vec::with_capacity(grid.len());
    for &r in grid {
        if !(r > 2.0 * m) {
            return Err(Error::Domain(format!("sample r = {r} <= 2M")));
        }
        let principal = if m == 0.0 {
            1.0
        } else {
            let g = geometry::metric_bl(params, r, std::f64::consts::FRAC_PI_2)?;
            let grr = g.upper(geometry::Coord::R, geometry::Coord::R);
            let gtt = g.upper(geometry::Coord::T, geometry::Coord::T);
            let dr = 1.0 / geometry::tortoise_derivative(params, r)?;
            // −g^{rr} (dr*/dr)² / g^{tt}
            -grr / gtt / (dr * dr)
        };
        let v = if m == 0.0 { l * (l + 1.0) / (r * r) } else { rw_potential(ell, params, r)? };
        samples.push(NormalFormSample {
            r,
            r_star: geometry::tortoise(params, r)?,
            principal_coefficient: principal,
            potential: v,
            remainder: (v - l * (l + 1.0) / (r * r)).abs(),
        });
    }
    let max_principal_defect = samples.iter().map(|s| (s.principal_coefficient - 1.0).abs()).fold(0.0, f64::max);
    let remainder_constant = samples.iter().map(|s| s.remainder * s.r.powi(3)).fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> =
        samples.iter().filter(|s| s.remainder > 0.0).map(|s| (s.r.ln(), s.remainder.ln())).collect();
    let remainder_slope = if pts.len() >= 2 { Some(ls_slope(&pts)) } else { None };
    Ok(NormalFormReport { ell, samples, max_principal_defect, remainder_constant, remainder_slope })
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schw() -> BlackHoleParams {
        BlackHoleParams::schwarzschild(1.0).unwrap()
    }

    #[test]
    fn potential_examples() {
        assert_eq!(potential_from_offset(0, 1.0, 0.0), 0.0);
        assert!(rw_potential(0, &schw(), 2.0).is_err());
        let v = rw_potential(1, &schw(), 3.0).unwrap();
        assert!((v - 8.0 / 81.0).abs() < 1e-15);
        let v = rw_potential(0, &schw(), 1e4).unwrap();
        assert!((v / 2e-12 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn potential_rejects_spin() {
        let k = BlackHoleParams::new(1.0, 0.1).unwrap();
        assert!(rw_potential(0, &k, 5.0).is_err());
        assert!(RadialPotential::new(0, k).is_err());
    }

    #[test]
    fn potential_is_nonnegative_and_decays() {
        for ell in 0..4 {
            for i in 1..500 {
                let r = 2.0 + 0.05 * i as f64;
                assert!(rw_potential(ell, &schw(), r).unwrap() >= 0.0);
            }
        }
        // O(r⁻³) for ℓ = 0, O(r⁻²) for ℓ ≥ 1
        let r1 = 1e3;
        let r2 = 2e3;
        let s0 = (rw_potential(0, &schw(), r2).unwrap() / rw_potential(0, &schw(), r1).unwrap()).log2();
        let s1 = (rw_potential(1, &schw(), r2).unwrap() / rw_potential(1, &schw(), r1).unwrap()).log2();
        assert!((s0 + 3.0).abs() < 0.01);
        assert!((s1 + 2.0).abs() < 0.01);
    }

    #[test]
    fn potential_vanishes_exponentially_toward_horizon() {
        let pot = RadialPotential::new(2, schw()).unwrap();
        let a = pot.at_rstar(-40.0).unwrap().value;
        let b = pot.at_rstar(-60.0).unwrap().value;
        // V ~ e^{r*/2M}
        assert!(((a / b).ln() - 10.0).abs() < 1e-3);
        assert!(pot.at_rstar(-60.0).unwrap().value < 1e-13);
    }

    #[test]
    fn reduction_zero_and_outside_cone() {
        let zero = ReductionSource::new("zero", |_, _| 0.0);
        assert_eq!(oned_reduction(&zero, 3.0, 1.0).unwrap(), 0.0);
        let one = ReductionSource::new("one", |s, rho| if rho <= s { 1.0 } else { 0.0 });
        assert_eq!(oned_reduction(&one, 1.0, 2.0).unwrap(), 0.0);
        assert!(oned_reduction(&one, 0.0, 1.0).is_err());
    }

    #[test]
    fn source_check_flags_violations() {
        let good = ReductionSource::new("cone", |s: f64, rho: f64| if rho <= s { s } else { 0.0 });
        assert_eq!(good.check(5.0, 50), SourceCheck { nonnegative: true, in_cone: true });
        let bad = ReductionSource::new("outside", |_s, _rho| -1.0);
        let c = bad.check(5.0, 10);
        assert!(!c.nonnegative && !c.in_cone);
    }

    #[test]
    fn flat_limit_normal_form() {
        let flat = BlackHoleParams::new(0.0, 0.0).unwrap();
        let rep = normal_form_check(&flat, 3, &[1.0, 10.0, 100.0]).unwrap();
        assert_eq!(rep.remainder_constant, 0.0);
        assert_eq!(rep.max_principal_defect, 0.0);
    }
}
