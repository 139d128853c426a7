//! Local energy norms, vector fields, commutator residuals, symbol classes and
//! the cone decomposition with its Sobolev-type `L² → L∞` bounds.
//!
//! All norms act on single spherical-harmonic modes `u(t, r)` sampled on a
//! tensor grid; spatial integrals use the three-dimensional radial measure
//! `r² dr`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolver::{Background, ModeField};

/// `⟨r⟩ = (4 + r²)^{1/2}`.
pub fn bracket(r: f64) -> f64 {
    (4.0 + r * r).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct WeightScheme {
    pub r_bracket: fn(f64) -> f64,
}

impl Default for WeightScheme {
    fn default() -> Self {
        Self { r_bracket: bracket }
    }
}

/// The annulus `A_R = {R ≤ ⟨r⟩ < 2R}`, with `A_1 = {⟨r⟩ < 2}` (empty for the
/// default bracket).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct DyadicRegion {
    /// `R = 2^k`.
    pub k: u32,
}

impl DyadicRegion {
    pub fn scale(&self) -> f64 {
        2f64.powi(self.k as i32)
    }

    pub fn of(bracket_value: f64) -> Self {
        if !(bracket_value >= 2.0) {
            return Self { k: 0 };
        }
        let mut k = bracket_value.log2().floor() as i64;
        // Guard the floor against rounding at exact powers of two.
        while 2f64.powi(k as i32) > bracket_value {
            k -= 1;
        }
        while 2f64.powi(k as i32 + 1) <= bracket_value {
            k += 1;
        }
        Self { k: k.max(0) as u32 }
    }

    pub fn contains(&self, bracket_value: f64) -> bool {
        Self::of(bracket_value) == *self
    }
}

/// A single mode `u(t, r)` on a tensor grid, row-major in time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpacetimeField {
    pub ell: u32,
    pub times: Vec<f64>,
    /// Areal radius, strictly increasing.
    pub radii: Vec<f64>,
    /// Coordinate used for `∂_{r*}`; equal to `radii` in flat space.
    pub rstar: Vec<f64>,
    pub values: Vec<f64>,
}

impl SpacetimeField {
    pub fn new(ell: u32, times: Vec<f64>, radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let rstar = radii.clone();
        Self::with_rstar(ell, times, radii, rstar, values)
    }

    pub fn with_rstar(ell: u32, times: Vec<f64>, radii: Vec<f64>, rstar: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != times.len() * radii.len() || rstar.len() != radii.len() {
            return Err(Error::InvalidSetup("field shape does not match its grid".into()));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&times) || !increasing(&radii) || !increasing(&rstar) {
            return Err(Error::InvalidSetup("grid coordinates must be strictly increasing".into()));
        }
        Ok(Self { ell, times, radii, rstar, values })
    }

    pub fn sample<F: Fn(f64, f64) -> f64>(ell: u32, times: Vec<f64>, radii: Vec<f64>, f: F) -> Result<Self> {
        let values = times.iter().flat_map(|&t| radii.iter().map(move |&r| (t, r))).map(|(t, r)| f(t, r)).collect();
        Self::new(ell, times, radii, values)
    }

    /// `u = ψ/r` from evolver snapshots, keeping every `stride`-th grid point
    /// with `r_min ≤ r ≤ r_max`.
    pub fn from_snapshots(
        snapshots: &[ModeField],
        background: &Background,
        stride: usize,
        r_min: f64,
        r_max: f64,
    ) -> Result<Self> {
        let first = snapshots.first().ok_or_else(|| Error::EmptyRegion("no snapshots".into()))?;
        let mut idx = Vec::new();
        let mut radii = Vec::new();
        let mut rstar = Vec::new();
        for i in (0..first.psi.len()).step_by(stride.max(1)) {
            let x = first.coordinate(i);
            let (_, r) = background.sample(x)?;
            if r >= r_min && r <= r_max && r > 0.0 && radii.last().is_none_or(|&last| r > last) {
                idx.push(i);
                radii.push(r);
                rstar.push(x);
            }
        }
        let times = snapshots.iter().map(|s| s.t).collect();
        let values = snapshots.iter().flat_map(|s| idx.iter().zip(&radii).map(move |(&i, &r)| s.psi[i] / r)).collect();
        Self::with_rstar(first.ell, times, radii, rstar, values)
    }

    pub fn at(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.radii.len() + i]
    }

    fn map_values(&self, values: Vec<f64>) -> Self {
        Self { values, ..self.clone() }
    }

    fn nt(&self) -> usize {
        self.times.len()
    }

    fn nr(&self) -> usize {
        self.radii.len()
    }

    /// `∂_t u` by three-point (possibly nonuniform) differences.
    pub fn dt(&self) -> Self {
        let (nt, nr) = (self.nt(), self.nr());
        let mut out = vec![0.0; nt * nr];
        for i in 0..nr {
            let col: Vec<f64> = (0..nt).map(|j| self.at(j, i)).collect();
            let d = derivative(&self.times, &col);
            for j in 0..nt {
                out[j * nr + i] = d[j];
            }
        }
        self.map_values(out)
    }

    fn radial_derivative(&self, coords: &[f64]) -> Self {
        let nr = self.nr();
        let out = self.values.chunks(nr).flat_map(|row| derivative(coords, row)).collect();
        self.map_values(out)
    }

    /// `∂_r u` in areal radius.
    pub fn dr(&self) -> Self {
        self.radial_derivative(&self.radii)
    }

    pub fn drstar(&self) -> Self {
        let rs = self.rstar.clone();
        self.radial_derivative(&rs)
    }

    /// `|∇u| = (u_t² + u_{r*}² + ℓ(ℓ+1) u²/r²)^{1/2}`.
    pub fn gradient_magnitude(&self) -> Self {
        let ut = self.dt();
        let ur = self.drstar();
        let l2 = angular_eigenvalue(self.ell);
        let nr = self.nr();
        let out = (0..self.values.len())
            .map(|k| {
                let r = self.radii[k % nr];
                (ut.values[k].powi(2) + ur.values[k].powi(2) + l2 * (self.values[k] / r).powi(2)).sqrt()
            })
            .collect();
        self.map_values(out)
    }
}

/// `ℓ(ℓ+1)`, the magnitude of `Ω²` on a mode.
pub fn angular_eigenvalue(ell: u32) -> f64 {
    let l = ell as f64;
    l * (l + 1.0)
}

/// Three-point derivative on a nonuniform grid, one-sided at the ends.
fn derivative(x: &[f64], f: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 3 {
        return vec![if n == 2 { (f[1] - f[0]) / (x[1] - x[0]) } else { 0.0 }; n];
    }
    let three = |x0: f64, x1: f64, x2: f64, f0: f64, f1: f64, f2: f64, at: f64| {
        // derivative of the interpolating quadratic at `at`
        let l0 = ((at - x1) + (at - x2)) / ((x0 - x1) * (x0 - x2));
        let l1 = ((at - x0) + (at - x2)) / ((x1 - x0) * (x1 - x2));
        let l2 = ((at - x0) + (at - x1)) / ((x2 - x0) * (x2 - x1));
        l0 * f0 + l1 * f1 + l2 * f2
    };
    (0..n)
        .map(|i| {
            let c = i.clamp(1, n - 2);
            three(x[c - 1], x[c], x[c + 1], f[c - 1], f[c], f[c + 1], x[i])
        })
        .collect()
}

/// Trapezoid weights on a (possibly nonuniform) grid.
fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { x[i] - x[i - 1] } else { 0.0 };
            let right = if i + 1 < n { x[i + 1] - x[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormVariant {
    #[serde(rename = "LE")]
    Le,
    #[serde(rename = "LE_star")]
    LeStar,
    #[serde(rename = "LE1")]
    Le1,
    #[serde(rename = "LE1_weak")]
    Le1Weak,
}

impl NormVariant {
    pub fn name(self) -> &'static str {
        match self {
            NormVariant::Le => "LE",
            NormVariant::LeStar => "LE_star",
            NormVariant::Le1 => "LE1",
            NormVariant::Le1Weak => "LE1_weak",
        }
    }
}

/// Smooth radial cutoff: one for `|r − center| ≤ plateau`, zero beyond
/// `plateau + transition`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialCutoff {
    pub center: f64,
    pub plateau: f64,
    pub transition: f64,
}

impl RadialCutoff {
    /// Cutoff equal to one on `[2.5M, 3.5M]`.
    pub fn photon_sphere(mass: f64) -> Self {
        Self { center: 3.0 * mass, plateau: 0.5 * mass, transition: 0.5 * mass }
    }

    pub fn at(&self, r: f64) -> f64 {
        let d = (r - self.center).abs() - self.plateau;
        if d <= 0.0 {
            return 1.0;
        }
        let s = d / self.transition;
        if s >= 1.0 {
            return 0.0;
        }
        let g = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
        g(1.0 - s) / (g(1.0 - s) + g(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub variant: NormVariant,
    pub interval: (f64, f64),
    pub weak_cutoff: Option<RadialCutoff>,
}

impl NormSpec {
    pub fn new(variant: NormVariant, t0: f64, t1: f64) -> Self {
        Self { variant, interval: (t0, t1), weak_cutoff: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockValue {
    #[serde(rename = "R")]
    pub scale: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormReport {
    pub variant: NormVariant,
    pub interval: (f64, f64),
    pub value: f64,
    pub per_block_values: Vec<BlockValue>,
}

/// Squared weighted `L²([t₀,t₁] × A_R)` norms of `g`, keyed by `k` with `R = 2^k`.
///
/// Grid nodes are binned by annulus and carry trapezoid weights, so blocks sum
/// exactly to the full-grid integral.
pub fn block_squares<G: Fn(usize, usize) -> f64>(
    field: &SpacetimeField,
    interval: (f64, f64),
    weight_power: f64,
    g: G,
) -> Result<BTreeMap<u32, f64>> {
    let (t0, t1) = interval;
    let tol = 1e-9 * (1.0 + t1.abs());
    let rows: Vec<usize> =
        (0..field.nt()).filter(|&j| field.times[j] >= t0 - tol && field.times[j] <= t1 + tol).collect();
    if !(t1 > t0) || rows.len() < 2 {
        return Err(Error::EmptyRegion(format!("time interval [{t0}, {t1}] holds {} samples", rows.len())));
    }
    let tw = trapezoid_weights(&rows.iter().map(|&j| field.times[j]).collect::<Vec<_>>());
    let rw = trapezoid_weights(&field.radii);
    let mut blocks = BTreeMap::new();
    for (i, &r) in field.radii.iter().enumerate() {
        let br = bracket(r);
        let spatial = rw[i] * r * r * br.powf(weight_power);
        let mut acc = 0.0;
        for (&j, &w) in rows.iter().zip(&tw) {
            acc += w * g(j, i).powi(2);
        }
        *blocks.entry(DyadicRegion::of(br).k).or_insert(0.0) += spatial * acc;
    }
    Ok(blocks)
}

fn sup_norm(blocks: &BTreeMap<u32, f64>) -> (f64, Vec<BlockValue>) {
    let per: Vec<BlockValue> =
        blocks.iter().map(|(&k, &v)| BlockValue { scale: 2f64.powi(k as i32), value: v.sqrt() }).collect();
    (per.iter().map(|b| b.value).fold(0.0, f64::max), per)
}

fn sum_norm(blocks: &BTreeMap<u32, f64>) -> (f64, Vec<BlockValue>) {
    let per: Vec<BlockValue> =
        blocks.iter().map(|(&k, &v)| BlockValue { scale: 2f64.powi(k as i32), value: v.sqrt() }).collect();
    (per.iter().map(|b| b.value).sum(), per)
}

/// `LE`, `LE*`, `LE¹` or weak `LE¹` norm of `field` over `spec.interval`.
///
/// `per_block_values` lists the `LE` blocks of the gradient part for the `LE¹`
/// variants.
pub fn le_norm(field: &SpacetimeField, spec: &NormSpec) -> Result<NormReport> {
    let nr = field.nr();
    let (value, per) = match spec.variant {
        NormVariant::Le => sup_norm(&block_squares(field, spec.interval, -1.0, |j, i| field.at(j, i))?),
        NormVariant::LeStar => sum_norm(&block_squares(field, spec.interval, 1.0, |j, i| field.at(j, i))?),
        NormVariant::Le1 | NormVariant::Le1Weak => {
            let grad = field.gradient_magnitude();
            let cutoff = match (spec.variant, spec.weak_cutoff) {
                (NormVariant::Le1Weak, Some(c)) => Some(c),
                (NormVariant::Le1Weak, None) => {
                    return Err(Error::InvalidSetup("weak LE1 norm needs a cutoff".into()));
                }
                _ => None,
            };
            let g = |j: usize, i: usize| {
                let damp = cutoff.map_or(1.0, |c| 1.0 - c.at(field.radii[i]));
                damp * grad.values[j * nr + i]
            };
            let (gv, per) = sup_norm(&block_squares(field, spec.interval, -1.0, g)?);
            let (uv, _) =
                sup_norm(&block_squares(field, spec.interval, -1.0, |j, i| field.at(j, i) / bracket(field.radii[i]))?);
            (gv + uv, per)
        }
    };
    Ok(NormReport { variant: spec.variant, interval: spec.interval, value, per_block_values: per })
}

/// `∬ u f r² dr dt` with the same discrete weights as the norms.
pub fn pairing(u: &SpacetimeField, f: &SpacetimeField, interval: (f64, f64)) -> Result<f64> {
    if u.times != f.times || u.radii != f.radii {
        return Err(Error::InvalidSetup("pairing needs fields on the same grid".into()));
    }
    let (t0, t1) = interval;
    let rows: Vec<usize> = (0..u.nt()).filter(|&j| u.times[j] >= t0 && u.times[j] <= t1).collect();
    if rows.len() < 2 {
        return Err(Error::EmptyRegion("pairing interval".into()));
    }
    let tw = trapezoid_weights(&rows.iter().map(|&j| u.times[j]).collect::<Vec<_>>());
    let rw = trapezoid_weights(&u.radii);
    let mut acc = 0.0;
    for (&j, &w) in rows.iter().zip(&tw) {
        for (i, &r) in u.radii.iter().enumerate() {
            acc += w * rw[i] * r * r * u.at(j, i) * f.at(j, i);
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VectorField {
    /// `∂_t`.
    T,
    /// `t∂_t + r∂_r`.
    S,
    /// Acts on a mode as multiplication by `−ℓ(ℓ+1)`.
    Omega2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppliedField {
    pub field: SpacetimeField,
    /// Edge rows or columns used one-sided stencils.
    pub boundary_truncated: bool,
}

pub fn apply_vector_field(field: &SpacetimeField, which: VectorField) -> AppliedField {
    match which {
        VectorField::T => AppliedField { field: field.dt(), boundary_truncated: true },
        VectorField::S => {
            let ut = field.dt();
            let ur = field.dr();
            let nr = field.nr();
            let values = (0..field.values.len())
                .map(|k| field.times[k / nr] * ut.values[k] + field.radii[k % nr] * ur.values[k])
                .collect();
            AppliedField { field: field.map_values(values), boundary_truncated: true }
        }
        VectorField::Omega2 => {
            let l2 = angular_eigenvalue(field.ell);
            let values = field.values.iter().map(|v| -l2 * v).collect();
            AppliedField { field: field.map_values(values), boundary_truncated: false }
        }
    }
}

/// Central difference weights for the first and second derivative.
fn stencil(order: u32) -> Result<(&'static [f64], &'static [f64])> {
    const D1_2: [f64; 3] = [-0.5, 0.0, 0.5];
    const D2_2: [f64; 3] = [1.0, -2.0, 1.0];
    const D1_4: [f64; 5] = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
    const D2_4: [f64; 5] = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
    const D1_6: [f64; 7] = [-1.0 / 60.0, 3.0 / 20.0, -3.0 / 4.0, 0.0, 3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
    const D2_6: [f64; 7] = [1.0 / 90.0, -3.0 / 20.0, 3.0 / 2.0, -49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0];
    match order {
        2 => Ok((&D1_2, &D2_2)),
        4 => Ok((&D1_4, &D2_4)),
        6 => Ok((&D1_6, &D2_6)),
        o => Err(Error::InvalidSetup(format!("stencil order {o} not in {{2, 4, 6}}"))),
    }
}

type Func<'a> = Box<dyn Fn(f64, f64) -> f64 + 'a>;

struct Differ {
    d1: &'static [f64],
    d2: &'static [f64],
    h: f64,
}

impl Differ {
    fn apply<'a>(&self, f: &'a dyn Fn(f64, f64) -> f64, w: &'static [f64], power: i32, in_t: bool) -> Func<'a> {
        let h = self.h;
        let half = (w.len() / 2) as f64;
        Box::new(move |t, r| {
            let mut acc = 0.0;
            for (k, &c) in w.iter().enumerate() {
                if c != 0.0 {
                    let s = (k as f64 - half) * h;
                    acc += c * if in_t { f(t + s, r) } else { f(t, r + s) };
                }
            }
            acc / h.powi(power)
        })
    }

    /// Mode-level flat d'Alembertian `−u_tt + u_rr + 2u_r/r − ℓ(ℓ+1)u/r²`.
    fn wave<'a>(&self, f: &'a dyn Fn(f64, f64) -> f64, ell: u32) -> Func<'a> {
        let utt = self.apply(f, self.d2, 2, true);
        let urr = self.apply(f, self.d2, 2, false);
        let ur = self.apply(f, self.d1, 1, false);
        let l2 = angular_eigenvalue(ell);
        Box::new(move |t, r| -utt(t, r) + urr(t, r) + 2.0 * ur(t, r) / r - l2 * f(t, r) / (r * r))
    }

    fn scaling<'a>(&self, f: &'a dyn Fn(f64, f64) -> f64) -> Func<'a> {
        let ut = self.apply(f, self.d1, 1, true);
        let ur = self.apply(f, self.d1, 1, false);
        Box::new(move |t, r| t * ut(t, r) + r * ur(t, r))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommutatorLevel {
    pub h: f64,
    pub residual_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommutatorReport {
    pub order: u32,
    pub levels: Vec<CommutatorLevel>,
    /// `log₂` of successive residual ratios (for halved steps).
    pub observed_orders: Vec<f64>,
}

/// Sup over `points` of the discrete `□(Su) − (S+2)□u` for a mode of angular
/// number `ell` in flat space, at each step size in `hs`.
pub fn commutator_residual_flat<F: Fn(f64, f64) -> f64>(
    u: &F,
    ell: u32,
    points: &[(f64, f64)],
    hs: &[f64],
    order: u32,
) -> Result<CommutatorReport> {
    let (d1, d2) = stencil(order)?;
    let mut levels = Vec::new();
    for &h in hs {
        let d = Differ { d1, d2, h };
        let uf: &dyn Fn(f64, f64) -> f64 = u;
        let su = d.scaling(uf);
        let box_su = d.wave(&*su, ell);
        let box_u = d.wave(uf, ell);
        let s_box_u = d.scaling(&*box_u);
        let residual =
            points.iter().map(|&(t, r)| (box_su(t, r) - s_box_u(t, r) - 2.0 * box_u(t, r)).abs()).fold(0.0, f64::max);
        levels.push(CommutatorLevel { h, residual_sup: residual });
    }
    Ok(CommutatorReport { order, observed_orders: observed_orders(&levels), levels })
}

fn observed_orders(levels: &[CommutatorLevel]) -> Vec<f64> {
    levels.windows(2).map(|w| (w[0].residual_sup / w[1].residual_sup).ln() / (w[0].h / w[1].h).ln()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeCommutatorSample {
    pub t: f64,
    pub rstar: f64,
    pub r: f64,
    pub residual: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeCommutatorReport {
    pub samples: Vec<ModeCommutatorSample>,
    /// `max |residual| / bound`.
    pub bound_ratio: f64,
    /// `max |residual − (−(r* V' + 2V) ψ)|`, the finite-difference error.
    pub closed_form_defect: f64,
}

/// Residual of `P(Sψ) − (S+2)(Pψ)` for `P = ∂_t² − ∂_{r*}² + V_ℓ` and
/// `S = t∂_t + r*∂_{r*}`, compared with the shape
/// `r⁻³(ℓ(ℓ+1)|ψ| + |ψ|) + r⁻²(|∇²ψ| + |∇ψ|)`.
pub fn commutator_residual_mode<F: Fn(f64, f64) -> f64>(
    psi: &F,
    potential: &crate::reduction::RadialPotential,
    points: &[(f64, f64)],
    h: f64,
) -> Result<ModeCommutatorReport> {
    let (d1, d2) = stencil(4)?;
    let d = Differ { d1, d2, h };
    let vr = |x: f64| potential.at_rstar(x).map(|s| (s.value, s.r));
    // Potential values are precomputed at the stencil offsets used below.
    let pf: &dyn Fn(f64, f64) -> f64 = psi;
    let op = |f: &dyn Fn(f64, f64) -> f64, t: f64, x: f64| -> f64 {
        let ftt = d.apply(f, d2, 2, true)(t, x);
        let fxx = d.apply(f, d2, 2, false)(t, x);
        let v = vr(x).map(|p| p.0).unwrap_or(f64::NAN);
        ftt - fxx + v * f(t, x)
    };
    let s_psi = d.scaling(pf);
    let p_psi = |t: f64, x: f64| op(pf, t, x);
    let s_p_psi = d.scaling(&p_psi);
    let l2 = angular_eigenvalue(potential.ell);
    let mut samples = Vec::new();
    let mut ratio: f64 = 0.0;
    let mut defect: f64 = 0.0;
    for &(t, x) in points {
        let (v, r) = vr(x)?;
        let residual = op(&*s_psi, t, x) - s_p_psi(t, x) - 2.0 * p_psi(t, x);
        let e = 1e-4;
        let dv = (vr(x + e)?.0 - vr(x - e)?.0) / (2.0 * e);
        let exact = -(x * dv + 2.0 * v) * psi(t, x);
        defect = defect.max((residual - exact).abs());
        let pt = d.apply(pf, d1, 1, true)(t, x);
        let px = d.apply(pf, d1, 1, false)(t, x);
        let ptt = d.apply(pf, d2, 2, true)(t, x);
        let pxx = d.apply(pf, d2, 2, false)(t, x);
        let u = psi(t, x).abs();
        let bound = ((l2 + 1.0) * u) / r.powi(3) + (ptt.abs() + pxx.abs() + pt.abs() + px.abs()) / (r * r);
        if bound > 0.0 {
            ratio = ratio.max(residual.abs() / bound);
        }
        samples.push(ModeCommutatorSample { t, rstar: x, r, residual, bound });
    }
    Ok(ModeCommutatorReport { samples, bound_ratio: ratio, closed_form_defect: defect })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolClassSpec {
    /// Decay order `k` in `S^Z(r^k)`.
    pub k: i32,
    /// Highest number of vector-field applications tested.
    pub depth: usize,
    /// Allowed constant `c_j` for `j = 0..=depth`.
    pub bounds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolClassReport {
    pub k: i32,
    /// `sup |Z^j a| ⟨r⟩^{−k}` for each `j`, maximised over words in `{T, S}`.
    pub constants: Vec<f64>,
    pub passed: bool,
    /// `∫ sup_r |a(t, ·)| dt` over the sampled times.
    pub time_integral: f64,
    /// Late-time log-log slope of `sup_r |a(t, ·)|`; below `−1` means integrable.
    pub late_time_slope: f64,
}

/// `S^Z(r^k)` membership test on the grid `times × radii`. `Ω` annihilates
/// radial symbols, so only words in `T` and `S` are checked.
pub fn symbol_class_check<A: Fn(f64, f64) -> f64>(
    a: &A,
    spec: &SymbolClassSpec,
    times: &[f64],
    radii: &[f64],
) -> Result<SymbolClassReport> {
    if spec.bounds.len() != spec.depth + 1 {
        return Err(Error::InvalidSetup("need one bound per depth level".into()));
    }
    if times.is_empty() || radii.is_empty() {
        return Err(Error::EmptyRegion("symbol grid".into()));
    }
    let mut constants = Vec::with_capacity(spec.depth + 1);
    let mut words: Vec<Vec<VectorField>> = vec![Vec::new()];
    for _ in 0..=spec.depth {
        let mut m: f64 = 0.0;
        for word in &words {
            for &t in times {
                for &r in radii {
                    let v = apply_word(a, word, t, r).abs() * bracket(r).powi(-spec.k);
                    m = if v.is_finite() { m.max(v) } else { f64::INFINITY };
                }
            }
        }
        constants.push(m);
        words = words
            .iter()
            .flat_map(|w| [VectorField::T, VectorField::S].map(|z| [vec![z], w.clone()].concat()))
            .collect();
    }
    let passed = constants.iter().zip(&spec.bounds).all(|(c, b)| c.is_finite() && c <= b);

    let sups: Vec<f64> = times.iter().map(|&t| radii.iter().map(|&r| a(t, r).abs()).fold(0.0, f64::max)).collect();
    let time_integral = trapezoid_weights(times).iter().zip(&sups).map(|(w, s)| w * s).sum();
    let n = times.len();
    let late_time_slope = if n >= 2 && sups[n - 1] > 0.0 && sups[n / 2] > 0.0 && times[n / 2] > 0.0 {
        (sups[n - 1] / sups[n / 2]).ln() / (times[n - 1] / times[n / 2]).ln()
    } else {
        f64::NEG_INFINITY
    };
    Ok(SymbolClassReport { k: spec.k, constants, passed, time_integral, late_time_slope })
}

/// `Z₁ Z₂ … a` at `(t, r)` by nested fourth-order central differences. `T`
/// steps scale with `⟨t⟩`; `S` is `d/dλ a(e^λ t, e^λ r)` at `λ = 0`.
fn apply_word<A: Fn(f64, f64) -> f64>(a: &A, word: &[VectorField], t: f64, r: f64) -> f64 {
    const ETA: f64 = 2e-2;
    const W: [f64; 5] = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
    let Some((first, rest)) = word.split_first() else {
        return a(t, r);
    };
    match first {
        VectorField::T => {
            let h = ETA * bracket(t);
            (0..5).map(|k| W[k] * apply_word(a, rest, t + (k as f64 - 2.0) * h, r)).sum::<f64>() / h
        }
        _ => {
            (0..5)
                .map(|k| {
                    let s = ((k as f64 - 2.0) * ETA).exp();
                    W[k] * apply_word(a, rest, t * s, r * s)
                })
                .sum::<f64>()
                / ETA
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeKind {
    /// Binned by `r`, away from the light cone.
    R,
    /// Binned by `t − r`, near the light cone.
    U,
}

/// One piece of the decomposition of `C_T = {T ≤ t ≤ 2T, r ≤ t}`.
///
/// Bins are half-open, `[lo, hi)` in `r` (R-type) or in `t − r` (U-type);
/// `hi = ∞` marks an unbounded top bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeRegion {
    #[serde(rename = "T")]
    pub t_scale: f64,
    pub kind: ConeKind,
    pub scale: f64,
    pub lo: f64,
    pub hi: f64,
    /// R-type regions only contain `r < r_cap`; U-type only `r ≥ r_cap`.
    pub r_cap: f64,
}

impl ConeRegion {
    fn in_slab(&self, t: f64, r: f64) -> bool {
        t >= self.t_scale && t <= 2.0 * self.t_scale && r >= 0.0 && r <= t
    }

    pub fn contains(&self, t: f64, r: f64) -> bool {
        if !self.in_slab(t, r) {
            return false;
        }
        match self.kind {
            ConeKind::R => r < self.r_cap && r >= self.lo && r < self.hi,
            ConeKind::U => r >= self.r_cap && (t - r) >= self.lo && (t - r) < self.hi,
        }
    }

    /// Factor-two dilation in time and in the region's own scale.
    pub fn enlarged_contains(&self, t: f64, r: f64) -> bool {
        let ts = self.t_scale;
        if !(t >= 0.5 * ts && t <= 4.0 * ts && r >= 0.0 && r <= t) {
            return false;
        }
        let x = match self.kind {
            ConeKind::R => r,
            ConeKind::U => t - r,
        };
        x >= 0.5 * self.lo && x < 2.0 * self.hi
    }
}

/// Dyadic decomposition of `C_T` into R-type regions `1 ≤ R ≤ T/4` and U-type
/// regions `1 ≤ U < T/4`.
///
/// R-type regions cover `r < T/2`, the last one stretching up to `T/2`;
/// U-type regions cover `r ≥ T/2`, the last one unbounded in `t − r`. Without
/// U scales the top R region takes the whole slab.
pub fn cone_partition(t_scale: f64) -> Result<Vec<ConeRegion>> {
    if !(t_scale >= 1.0) || !t_scale.is_finite() {
        return Err(Error::Domain(format!("slab scale T = {t_scale} must be at least 1")));
    }
    let quarter = t_scale / 4.0;
    let dyadic_upto = |limit: f64, strict: bool| {
        let mut v = Vec::new();
        let mut s = 1.0;
        while if strict { s < limit } else { s <= limit } {
            v.push(s);
            s *= 2.0;
        }
        v
    };
    let rs = dyadic_upto(quarter, false);
    let us = dyadic_upto(quarter, true);
    let rs = if rs.is_empty() { vec![1.0] } else { rs };
    let r_cap = if us.is_empty() { f64::INFINITY } else { t_scale / 2.0 };
    let mut out = Vec::new();
    for (n, &s) in rs.iter().enumerate() {
        let lo = if s == 1.0 { 0.0 } else { s };
        let hi = if n + 1 == rs.len() { f64::INFINITY } else { 2.0 * s };
        out.push(ConeRegion { t_scale, kind: ConeKind::R, scale: s, lo, hi, r_cap });
    }
    for (n, &s) in us.iter().enumerate() {
        let lo = if s == 1.0 { 0.0 } else { s };
        let hi = if n + 1 == us.len() { f64::INFINITY } else { 2.0 * s };
        out.push(ConeRegion { t_scale, kind: ConeKind::U, scale: s, lo, hi, r_cap });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SobolevReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, or zero when both vanish.
    pub ratio: f64,
}

/// Sup of `|w|` on `region` against the weighted sums of
/// `‖S^i Ω^j w‖` and `‖S^i Ω^j ∇w‖` (`i + j ≤ 2`) over its enlargement.
pub fn sobolev_check(w: &SpacetimeField, region: &ConeRegion) -> Result<SobolevReport> {
    let nr = w.nr();
    let mut lhs: f64 = 0.0;
    let mut inside = 0usize;
    for (j, &t) in w.times.iter().enumerate() {
        for (i, &r) in w.radii.iter().enumerate() {
            if region.contains(t, r) {
                inside += 1;
                lhs = lhs.max(w.at(j, i).abs());
            }
        }
    }
    if inside == 0 {
        return Err(Error::EmptyRegion(format!("no samples in {region:?}")));
    }
    let tw = trapezoid_weights(&w.times);
    let rw = trapezoid_weights(&w.radii);
    let l2 = |values: &[&[f64]]| -> f64 {
        let mut acc = 0.0;
        for (j, &t) in w.times.iter().enumerate() {
            for (i, &r) in w.radii.iter().enumerate() {
                if region.enlarged_contains(t, r) {
                    let k = j * nr + i;
                    let sq: f64 = values.iter().map(|v| v[k] * v[k]).sum();
                    acc += tw[j] * rw[i] * r * r * sq;
                }
            }
        }
        acc.sqrt()
    };
    let lambda = angular_eigenvalue(w.ell);
    let angular = |f: &SpacetimeField| -> SpacetimeField {
        let values = f.values.iter().enumerate().map(|(k, v)| lambda.sqrt() * v / w.radii[k % nr]).collect();
        f.map_values(values)
    };
    let mut s_powers = vec![w.clone()];
    for _ in 0..2 {
        let next = apply_vector_field(s_powers.last().expect("non-empty"), VectorField::S).field;
        s_powers.push(next);
    }
    let mut plain = 0.0;
    let mut grad = 0.0;
    for i in 0..=2usize {
        for j in 0..=(2 - i) {
            let omega = lambda.powf(j as f64 / 2.0);
            if omega == 0.0 && j > 0 {
                continue;
            }
            let f = &s_powers[i];
            plain += omega * l2(&[&f.values]);
            let (ft, fr, fa) = (f.dt(), f.dr(), angular(f));
            grad += omega * l2(&[&ft.values, &fr.values, &fa.values]);
        }
    }
    let (ts, s) = (region.t_scale, region.scale);
    let (a, b) = match region.kind {
        ConeKind::R => (ts.powf(-0.5) * s.powf(-1.5), ts.powf(-0.5) * s.powf(-0.5)),
        ConeKind::U => (ts.powf(-1.5) * s.powf(-0.5), s.powf(0.5) * ts.powf(-1.5)),
    };
    let rhs = a * plain + b * grad;
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(SobolevReport { lhs, rhs, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn dyadic_annuli_partition() {
        for k in 0..4000 {
            let br = 2.0 * (2f64.powi(19)).powf(k as f64 / 3999.0);
            let hits = (0..=20).filter(|&j| DyadicRegion { k: j }.contains(br)).count();
            assert_eq!(hits, 1, "<r> = {br}");
        }
        assert_eq!(DyadicRegion::of(4.0).k, 2);
        assert_eq!(DyadicRegion::of(3.999_999).k, 1);
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let f = SpacetimeField::sample(0, linspace(0.0, 1.0, 5), linspace(0.1, 10.0, 50), |_, _| 0.0).unwrap();
        for v in [NormVariant::Le, NormVariant::LeStar, NormVariant::Le1] {
            assert_eq!(le_norm(&f, &NormSpec::new(v, 0.0, 1.0)).unwrap().value, 0.0);
        }
    }

    #[test]
    fn degenerate_interval_is_an_error() {
        let f = SpacetimeField::sample(0, linspace(0.0, 1.0, 5), linspace(0.1, 10.0, 50), |_, _| 1.0).unwrap();
        assert!(matches!(le_norm(&f, &NormSpec::new(NormVariant::Le, 0.5, 0.5)), Err(Error::EmptyRegion(_))));
    }

    #[test]
    fn le_of_block_indicator_matches_radial_quadrature() {
        // u = 1 on A_4 = {4 ≤ <r> < 8}, i.e. r ∈ [√12, √60).
        let (lo, hi) = (12f64.sqrt(), 60f64.sqrt());
        let radii = linspace(0.0, 10.0, 20_001);
        let f =
            SpacetimeField::sample(0, linspace(0.0, 2.0, 3), radii, |_, r| if r >= lo && r < hi { 1.0 } else { 0.0 })
                .unwrap();
        let le = le_norm(&f, &NormSpec::new(NormVariant::Le, 0.0, 2.0)).unwrap().value;
        // ∫ r²/√(4+r²) dr = r√(4+r²)/2 − 2 asinh(r/2)
        let prim = |r: f64| 0.5 * r * (4.0 + r * r).sqrt() - 2.0 * (r / 2.0).asinh();
        let exact = (2.0 * (prim(hi) - prim(lo))).sqrt();
        assert!((le - exact).abs() / exact < 2e-3, "{le} vs {exact}");
    }

    #[test]
    fn vector_field_examples() {
        let times = linspace(1.0, 3.0, 41);
        let radii = linspace(1.0, 4.0, 61);
        let u = SpacetimeField::sample(2, times.clone(), radii.clone(), |t, _| t).unwrap();
        let tu = apply_vector_field(&u, VectorField::T);
        assert!(tu.boundary_truncated);
        assert!(tu.field.values.iter().all(|v| (v - 1.0).abs() < 1e-12));

        let u = SpacetimeField::sample(2, times, radii, |t, r| t * t / r).unwrap();
        let su = apply_vector_field(&u, VectorField::S).field;
        let err = su.values.iter().zip(&u.values).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);
        assert!(err < 1e-2, "{err}");
        let interior = (1..40).flat_map(|j| (1..60).map(move |i| j * 61 + i));
        let err = interior.map(|k| (su.values[k] - u.values[k]).abs() / u.values[k]).fold(0.0, f64::max);
        assert!(err < 5e-3, "{err}");

        let o = apply_vector_field(&u, VectorField::Omega2);
        assert!(!o.boundary_truncated);
        assert!(o.field.values.iter().zip(&u.values).all(|(a, b)| *a == -6.0 * b));
    }

    #[test]
    fn flat_commutator_converges_at_second_order() {
        let u = |t: f64, r: f64| (-(t - r - 5.0).powi(2)).exp();
        let pts: Vec<(f64, f64)> = (0..20).map(|k| (10.0 + 0.1 * k as f64, 4.0 + 0.15 * k as f64)).collect();
        let rep = commutator_residual_flat(&u, 0, &pts, &[0.1, 0.05, 0.025], 2).unwrap();
        assert!(rep.observed_orders.iter().all(|&p| p >= 1.9), "{:?}", rep.observed_orders);
    }

    #[test]
    fn flat_commutator_vanishes_on_polynomials() {
        let u = |t: f64, r: f64| t.powi(3) * r * r;
        let pts = [(2.0, 1.0), (3.0, 2.5), (5.0, 4.0)];
        let rep = commutator_residual_flat(&u, 1, &pts, &[0.1], 6).unwrap();
        // compare with the size of □u itself
        assert!(rep.levels[0].residual_sup < 1e-8, "{:?}", rep.levels);
    }

    #[test]
    fn symbol_classes() {
        let times = linspace(0.0, 50.0, 11);
        let radii = linspace(0.0, 200.0, 81);
        let spec = SymbolClassSpec { k: -2, depth: 2, bounds: vec![10.0, 100.0, 1000.0] };
        let rep = symbol_class_check(&|_: f64, r: f64| bracket(r).powi(-2), &spec, &times, &radii).unwrap();
        assert!(rep.passed, "{rep:?}");

        let spec = SymbolClassSpec { k: -1, depth: 1, bounds: vec![10.0, 100.0] };
        let rep = symbol_class_check(&|_: f64, r: f64| r.sin(), &spec, &times, &radii).unwrap();
        assert!(!rep.passed);

        let times: Vec<f64> = linspace(0.0, 2001f64.ln(), 4001).iter().map(|s| s.exp() - 1.0).collect();
        let bump =
            |r: f64| if (r - 3.0).abs() < 0.5 { (1.0 - 1.0 / (1.0 - 4.0 * (r - 3.0).powi(2))).exp() } else { 0.0 };
        let spec = SymbolClassSpec { k: 0, depth: 2, bounds: vec![10.0, 100.0, 1000.0] };
        let a = |t: f64, r: f64| (1.0 + t).powf(-1.5) * bump(r);
        let rep = symbol_class_check(&a, &spec, &linspace(0.0, 200.0, 101), &linspace(2.0, 4.0, 41)).unwrap();
        assert!(rep.passed, "{rep:?}");
        let rep = symbol_class_check(&a, &spec, &times, &[3.0]).unwrap();
        // ∫₀^2000 (1+t)^{-3/2} dt = 2(1 − 2001^{-1/2})
        assert!((rep.time_integral - 2.0 * (1.0 - 2001f64.powf(-0.5))).abs() < 1e-3);
        assert!(rep.late_time_slope < -1.0);
    }

    #[test]
    fn cone_partition_t16() {
        let parts = cone_partition(16.0).unwrap();
        let scales = |k: ConeKind| parts.iter().filter(|p| p.kind == k).map(|p| p.scale).collect::<Vec<_>>();
        assert_eq!(scales(ConeKind::R), vec![1.0, 2.0, 4.0]);
        assert_eq!(scales(ConeKind::U), vec![1.0, 2.0]);
        for a in 0..200 {
            for b in 0..200 {
                let t = 16.0 + 16.0 * a as f64 / 199.0;
                let r = (t * b as f64 / 199.0).min(t);
                let hits = parts.iter().filter(|p| p.contains(t, r)).count();
                assert_eq!(hits, 1, "(t, r) = ({t}, {r})");
            }
        }
    }

    #[test]
    fn cone_partition_small_slabs() {
        let parts = cone_partition(4.0).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!((parts[0].kind, parts[0].scale), (ConeKind::R, 1.0));
        assert!(parts[0].contains(8.0, 8.0) && parts[0].contains(4.0, 0.0));
        assert_eq!(cone_partition(2.0).unwrap().len(), 1);
        assert!(cone_partition(0.5).is_err());
    }

    #[test]
    fn sobolev_zero_and_homogeneity() {
        let region = cone_partition(32.0).unwrap()[2];
        let times = linspace(16.0, 128.0, 113);
        let radii = linspace(0.5, 40.0, 160);
        let zero = SpacetimeField::sample(0, times.clone(), radii.clone(), |_, _| 0.0).unwrap();
        assert_eq!(sobolev_check(&zero, &region).unwrap().ratio, 0.0);
        let w = SpacetimeField::sample(1, times, radii, |t, r| {
            (-(t - 48.0).powi(2) / 200.0 - (r - 6.0).powi(2) / 4.0).exp()
        })
        .unwrap();
        let a = sobolev_check(&w, &region).unwrap();
        let scaled = w.map_values(w.values.iter().map(|v| 7.0 * v).collect());
        let b = sobolev_check(&scaled, &region).unwrap();
        assert!((a.ratio - b.ratio).abs() < 1e-12 * a.ratio);
        assert!(a.ratio > 0.0 && a.ratio.is_finite());
    }
}
