//! Finite-difference evolution of the per-mode radial wave equation
//!
//! ```text
//! ∂_t² ψ = c(t, r*) ∂_{r*}² ψ − V(t, r*) ψ + f(t, r*)
//! ```
//!
//! on a uniform `r*` grid. Static problems with the second-order stencil are
//! advanced by leapfrog; fourth-order stencils and time-dependent coefficients
//! use the classical RK4 method of lines.
//!
//! The nonstationary perturbation ([`PerturbationSpec`]) is a mode-level
//! analog of a time-decaying metric perturbation localised at the photon
//! sphere: it enters either the potential or the principal coefficient with a
//! profile `ε (1 + t)^(−1−δ) χ(r*)`.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry;
use crate::reduction::RadialPotential;

/// Blow-up threshold relative to the initial amplitude.
pub const INSTABILITY_FACTOR: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StencilOrder {
    #[serde(rename = "2")]
    Second,
    #[serde(rename = "4")]
    Fourth,
}

impl StencilOrder {
    pub fn from_int(order: u32) -> Result<Self> {
        match order {
            2 => Ok(Self::Second),
            4 => Ok(Self::Fourth),
            o => Err(Error::InvalidSetup(format!("stencil order must be 2 or 4, got {o}"))),
        }
    }

    pub fn as_int(self) -> u32 {
        match self {
            Self::Second => 2,
            Self::Fourth => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterBoundary {
    /// Domain sized so the outer boundary cannot influence the run.
    Causal,
    /// Upwind outgoing condition; tails are boundary-sensitive, so results
    /// after the first boundary round trip are exploratory only.
    Sommerfeld,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rstar_min: f64,
    pub rstar_max: f64,
    pub h: f64,
    pub cfl: f64,
    pub t_max: f64,
    pub order: StencilOrder,
    pub outer: OuterBoundary,
}

impl GridSpec {
    pub fn dt(&self) -> f64 {
        self.cfl * self.h
    }

    pub fn points(&self) -> usize {
        ((self.rstar_max - self.rstar_min) / self.h).round() as usize + 1
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt()).round() as usize
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        self.rstar_min + i as f64 * self.h
    }

    fn validate(&self) -> Result<()> {
        let ok = self.h > 0.0
            && self.h.is_finite()
            && self.rstar_max > self.rstar_min
            && self.t_max > 0.0
            && self.t_max.is_finite();
        if !ok {
            return Err(Error::InvalidSetup(format!("malformed grid {self:?}")));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Cfl(format!("Courant factor {} outside (0, 1]", self.cfl)));
        }
        if self.points() < 8 {
            return Err(Error::InvalidSetup("grid needs at least 8 points".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Background {
    /// `V = 0` on the whole line.
    FlatLine,
    /// Flat space on `r ≥ 0` with `ψ(0) = 0` (odd reflection) and the
    /// centrifugal term `ℓ(ℓ+1)/r²`; here `r* = r`.
    FlatHalfLine {
        ell: u32,
    },
    Schwarzschild(RadialPotential),
}

impl Background {
    pub fn ell(&self) -> u32 {
        match self {
            Background::FlatLine => 0,
            Background::FlatHalfLine { ell } => *ell,
            Background::Schwarzschild(p) => p.ell,
        }
    }

    fn is_half_line(&self) -> bool {
        matches!(self, Background::FlatHalfLine { .. })
    }

    /// Potential and areal radius at `r*`.
    pub fn sample(&self, r_star: f64) -> Result<(f64, f64)> {
        match self {
            Background::FlatLine => Ok((0.0, r_star)),
            Background::FlatHalfLine { ell } => {
                let l = *ell as f64;
                let v = if r_star > 0.0 { l * (l + 1.0) / (r_star * r_star) } else { 0.0 };
                Ok((v, r_star))
            }
            Background::Schwarzschild(p) => {
                let s = p.at_rstar(r_star)?;
                Ok((s.value, s.r))
            }
        }
    }

    /// `r* ↦ r` for observers given in areal radius.
    pub fn rstar_of(&self, r: f64) -> Result<f64> {
        match self {
            Background::Schwarzschild(p) => geometry::tortoise(&p.params, r),
            _ => Ok(r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    /// Multiplies `ψ`.
    Potential,
    /// Multiplies `∂_{r*}² ψ`.
    Principal,
}

/// Smooth bump in areal radius, equal to one at `center` and vanishing
/// outside `center ± half_width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonSphereWindow {
    pub center: f64,
    pub half_width: f64,
}

impl PhotonSphereWindow {
    /// Window centred on the photon sphere `r = 3M`, reaching to `3M ± M/2`.
    pub fn photon_sphere(mass: f64) -> Self {
        Self { center: 3.0 * mass, half_width: 0.5 * mass }
    }

    pub fn at_r(&self, r: f64) -> f64 {
        let x = (r - self.center) / self.half_width;
        if x.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - x * x)).exp()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub epsilon: f64,
    /// `δ` in `c(t) = (1 + t)^(−1−δ)`; time-integrable iff `δ > 0`.
    pub decay_exponent: f64,
    pub window: PhotonSphereWindow,
    pub kind: PerturbationKind,
}

impl PerturbationSpec {
    pub fn profile(&self, t: f64) -> f64 {
        (1.0 + t).powf(-1.0 - self.decay_exponent)
    }

    pub fn is_integrable(&self) -> bool {
        self.decay_exponent > 0.0
    }

    /// `∫₀^∞ ε c(t) dt = ε/δ` when finite.
    pub fn total_strength(&self) -> Option<f64> {
        self.is_integrable().then(|| self.epsilon.abs() / self.decay_exponent)
    }

    fn validate(&self, mass: f64) -> Result<()> {
        if !(self.decay_exponent > -1.0) {
            return Err(Error::InvalidSetup(format!(
                "decay exponent {} does not give a decaying profile",
                self.decay_exponent
            )));
        }
        let w = &self.window;
        let lo = w.center - w.half_width;
        let hi = w.center + w.half_width;
        if !(w.half_width > 0.0) || lo < 2.5 * mass - 1e-12 || hi > 3.5 * mass + 1e-12 {
            return Err(Error::WindowSupport(format!("window [{lo}, {hi}] not inside [2.5M, 3.5M] for M = {mass}")));
        }
        if self.kind == PerturbationKind::Principal && !(self.epsilon.abs() < 0.1) {
            return Err(Error::InvalidSetup(format!(
                "principal perturbation needs |epsilon| < 0.1, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// `V(t, r*) = V_ℓ(r) + ε c(t) χ(r*)`.
#[derive(Debug, Clone, Copy)]
pub struct PerturbedPotential {
    pub base: RadialPotential,
    pub perturbation: PerturbationSpec,
}

impl PerturbedPotential {
    pub fn value(&self, t: f64, r_star: f64) -> Result<f64> {
        let s = self.base.at_rstar(r_star)?;
        Ok(s.value + self.deviation(t, s.r))
    }

    fn deviation(&self, t: f64, r: f64) -> f64 {
        let p = &self.perturbation;
        p.epsilon * p.profile(t) * p.window.at_r(r)
    }

    /// Sup-norm bound `|V(t, ·) − V_ℓ| ≤ ε c(t)`.
    pub fn deviation_bound(&self, t: f64) -> f64 {
        self.perturbation.epsilon.abs() * self.perturbation.profile(t)
    }
}

pub fn build_time_dependent_potential(base: &RadialPotential, pert: &PerturbationSpec) -> Result<PerturbedPotential> {
    pert.validate(base.params.mass)?;
    Ok(PerturbedPotential { base: *base, perturbation: *pert })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `exp(−(x − c)²/w²)`, truncated to zero beyond `8w`.
    Gaussian,
    /// `exp(1 − 1/(1 − ((x − c)/w)²))` on `|x − c| < w`.
    Bump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Velocity {
    /// `∂_t ψ(0) = 0`.
    Static,
    /// Moving toward smaller `r*`.
    Ingoing,
    /// Moving toward larger `r*`.
    Outgoing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub profile: Profile,
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
    pub velocity: Velocity,
}

impl InitialData {
    pub fn gaussian(center: f64, width: f64, amplitude: f64) -> Self {
        Self { profile: Profile::Gaussian, center, width, amplitude, velocity: Velocity::Static }
    }

    pub fn with_velocity(mut self, velocity: Velocity) -> Self {
        self.velocity = velocity;
        self
    }

    /// Half-width of the (effective) support.
    pub fn support_radius(&self) -> f64 {
        match self.profile {
            Profile::Gaussian => 8.0 * self.width,
            Profile::Bump => self.width,
        }
    }

    /// `(ψ, ∂_{r*} ψ)` at `x`.
    pub fn value(&self, x: f64) -> (f64, f64) {
        let z = (x - self.center) / self.width;
        match self.profile {
            Profile::Gaussian => {
                if z.abs() > 8.0 {
                    return (0.0, 0.0);
                }
                let g = self.amplitude * (-z * z).exp();
                (g, -2.0 * z / self.width * g)
            }
            Profile::Bump => {
                if z.abs() >= 1.0 {
                    return (0.0, 0.0);
                }
                let q = 1.0 - z * z;
                let g = self.amplitude * (1.0 - 1.0 / q).exp();
                (g, g * (-2.0 * z / (q * q)) / self.width)
            }
        }
    }

    /// `(ψ, ∂_t ψ)` at `x`.
    pub fn state(&self, x: f64) -> (f64, f64) {
        let (psi, dpsi) = self.value(x);
        let pi = match self.velocity {
            Velocity::Static => 0.0,
            Velocity::Ingoing => dpsi,
            Velocity::Outgoing => -dpsi,
        };
        (psi, pi)
    }
}

/// Observer world line in `r*`: `r*(t) = r*₀ + speed·t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observer {
    pub rstar0: f64,
    pub speed: f64,
}

impl Observer {
    pub fn fixed(r_star: f64) -> Self {
        Self { rstar0: r_star, speed: 0.0 }
    }

    /// `r* = t − offset`, i.e. fixed `t − r*`.
    pub fn null(offset: f64) -> Self {
        Self { rstar0: -offset, speed: 1.0 }
    }

    /// `r* = speed · t`.
    pub fn ray(speed: f64) -> Self {
        Self { rstar0: 0.0, speed }
    }

    pub fn position(&self, t: f64) -> f64 {
        self.rstar0 + self.speed * t
    }
}

pub type SourceTerm = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Evolution {
    pub grid: GridSpec,
    pub background: Background,
    pub perturbation: Option<PerturbationSpec>,
    /// Superposed pulses.
    pub data: Vec<InitialData>,
    pub observers: Vec<Observer>,
    pub source: Option<SourceTerm>,
    /// Observer samples every `output_stride` time steps.
    pub output_stride: usize,
    pub snapshot_stride: Option<usize>,
    /// Snapshots keep only `r*` in this range, every `snapshot_spacing`-th point.
    pub snapshot_range: Option<(f64, f64)>,
    pub snapshot_spacing: usize,
}

impl Evolution {
    pub fn new(grid: GridSpec, background: Background) -> Self {
        Self {
            grid,
            background,
            perturbation: None,
            data: Vec::new(),
            observers: Vec::new(),
            source: None,
            output_stride: 1,
            snapshot_stride: None,
            snapshot_range: None,
            snapshot_spacing: 1,
        }
    }

    fn time_dependent(&self) -> bool {
        self.perturbation.is_some()
    }

    pub fn uses_leapfrog(&self) -> bool {
        self.grid.order == StencilOrder::Second && !self.time_dependent()
    }
}

/// One mode on the `r*` grid at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeField {
    pub ell: u32,
    pub t: f64,
    pub rstar_min: f64,
    pub h: f64,
    pub psi: Vec<f64>,
    pub pi: Vec<f64>,
}

impl ModeField {
    pub fn coordinate(&self, i: usize) -> f64 {
        self.rstar_min + i as f64 * self.h
    }

    /// Centred `∂_{r*} ψ` (one-sided at the ends).
    pub fn gradient(&self) -> Vec<f64> {
        let n = self.psi.len();
        let h = self.h;
        (0..n)
            .map(|i| {
                if i == 0 {
                    (self.psi[1] - self.psi[0]) / h
                } else if i + 1 == n {
                    (self.psi[n - 1] - self.psi[n - 2]) / h
                } else {
                    (self.psi[i + 1] - self.psi[i - 1]) / (2.0 * h)
                }
            })
            .collect()
    }

    /// `½ Σ h (π² + (∂_{r*}ψ)² + V ψ²)` with `V` sampled on the field's grid.
    pub fn energy_with(&self, potential: &[f64]) -> f64 {
        let grad = self.gradient();
        0.5 * self.h
            * self
                .psi
                .iter()
                .zip(&self.pi)
                .zip(&grad)
                .zip(potential)
                .map(|(((p, q), g), v)| q * q + g * g + v * p * p)
                .sum::<f64>()
    }

    /// `(Σ h (π² + (∂_{r*}ψ)²))^{1/2}`.
    pub fn gradient_norm(&self) -> f64 {
        let grad = self.gradient();
        (self.h * self.pi.iter().zip(&grad).map(|(q, g)| q * q + g * g).sum::<f64>()).sqrt()
    }
}

/// Discrete energy of `field` in the static potential of `background`.
pub fn energy(field: &ModeField, background: &Background) -> Result<f64> {
    let v: Vec<f64> =
        (0..field.psi.len()).map(|i| background.sample(field.coordinate(i)).map(|s| s.0)).collect::<Result<_>>()?;
    Ok(field.energy_with(&v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObserverSample {
    pub t: f64,
    pub observer: usize,
    pub r_star: f64,
    /// Areal radius.
    pub r: f64,
    pub psi: f64,
    pub dpsi_dt: f64,
    pub dpsi_drstar: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: GridSpec,
    pub dt: f64,
    pub samples: Vec<ObserverSample>,
    pub snapshots: Vec<ModeField>,
    pub final_field: ModeField,
}

pub const TRAJECTORY_HEADER: &str = "t,r_obs,psi,dpsi_dt,dpsi_drstar";

impl Trajectory {
    pub fn observer_series(&self, observer: usize) -> Vec<ObserverSample> {
        self.samples.iter().filter(|s| s.observer == observer).copied().collect()
    }

    /// CSV with `r_obs` the areal radius of the observer at time `t`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{TRAJECTORY_HEADER}")?;
        for s in &self.samples {
            writeln!(w, "{:.12e},{:.12e},{:.17e},{:.17e},{:.17e}", s.t, s.r, s.psi, s.dpsi_dt, s.dpsi_drstar)?;
        }
        Ok(())
    }

    pub fn write_snapshots_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,rstar,psi,pi")?;
        for f in &self.snapshots {
            for (i, (p, q)) in f.psi.iter().zip(&f.pi).enumerate() {
                writeln!(w, "{:.12e},{:.12e},{:.17e},{:.17e}", f.t, f.coordinate(i), p, q)?;
            }
        }
        Ok(())
    }
}

/// Spatially frozen coefficients on the grid.
struct Coefficients {
    x: Vec<f64>,
    r: Vec<f64>,
    v: Vec<f64>,
    window: Vec<f64>,
}

struct Stepper<'a> {
    setup: &'a Evolution,
    n: usize,
    h: f64,
    dt: f64,
    half_line: bool,
    coef: Coefficients,
}

impl<'a> Stepper<'a> {
    #[inline]
    fn at(&self, u: &[f64], i: isize) -> f64 {
        if i < 0 {
            -u[(-i) as usize]
        } else {
            u[i as usize]
        }
    }

    /// Second difference at interior point `i`.
    #[inline]
    fn d2(&self, u: &[f64], i: usize, order: StencilOrder) -> f64 {
        let h2 = self.h * self.h;
        let ii = i as isize;
        let near_edge = i < 2 && !self.half_line || i + 2 >= self.n;
        if order == StencilOrder::Second || near_edge {
            (self.at(u, ii - 1) - 2.0 * u[i] + self.at(u, ii + 1)) / h2
        } else {
            (-self.at(u, ii - 2) + 16.0 * self.at(u, ii - 1) - 30.0 * u[i] + 16.0 * u[i + 1] - u[i + 2]) / (12.0 * h2)
        }
    }

    #[inline]
    fn d1(&self, u: &[f64], i: usize) -> f64 {
        let n = self.n;
        if i == 0 {
            if self.half_line {
                return (u[1] - self.at(u, -1)) / (2.0 * self.h);
            }
            return (u[1] - u[0]) / self.h;
        }
        if i + 1 == n {
            return (u[n - 1] - u[n - 2]) / self.h;
        }
        let ii = i as isize;
        if self.setup.grid.order == StencilOrder::Fourth && (i >= 2 || self.half_line) && i + 2 < n {
            (self.at(u, ii - 2) - 8.0 * self.at(u, ii - 1) + 8.0 * u[i + 1] - u[i + 2]) / (12.0 * self.h)
        } else {
            (u[i + 1] - self.at(u, ii - 1)) / (2.0 * self.h)
        }
    }

    fn perturbation_profile(&self, t: f64) -> f64 {
        self.setup.perturbation.map_or(0.0, |p| p.epsilon * p.profile(t))
    }

    /// `c ∂²ψ − Vψ + f` at interior points; boundary entries are left untouched.
    fn acceleration(&self, psi: &[f64], t: f64, out: &mut [f64]) {
        let order = self.setup.grid.order;
        let amp = self.perturbation_profile(t);
        let kind = self.setup.perturbation.map(|p| p.kind);
        for i in 1..self.n - 1 {
            let lap = self.d2(psi, i, order);
            let (c, v) = match kind {
                Some(PerturbationKind::Principal) => (1.0 + amp * self.coef.window[i], self.coef.v[i]),
                Some(PerturbationKind::Potential) => (1.0, self.coef.v[i] + amp * self.coef.window[i]),
                None => (1.0, self.coef.v[i]),
            };
            out[i] = c * lap - v * psi[i];
        }
        if let Some(src) = &self.setup.source {
            for i in 1..self.n - 1 {
                out[i] += src(t, self.coef.x[i]);
            }
        }
    }

    /// Outgoing upwind time derivative at the open boundaries.
    fn boundary_rates(&self, psi: &[f64]) -> (f64, f64) {
        let n = self.n;
        let left = if self.half_line { 0.0 } else { (psi[1] - psi[0]) / self.h };
        let right = -(psi[n - 1] - psi[n - 2]) / self.h;
        (left, right)
    }

    fn sample(&self, psi: &[f64], pi: &[f64], t: f64, observers: &[Observer], out: &mut Vec<ObserverSample>) {
        for (k, obs) in observers.iter().enumerate() {
            let xs = obs.position(t);
            let s = (xs - self.coef.x[0]) / self.h;
            if !(s >= 1.0 && s <= (self.n - 3) as f64) {
                continue;
            }
            let j = (s.floor() as usize).min(self.n - 3);
            let frac = s - j as f64;
            let w = lagrange4(frac);
            let idx = [j - 1, j, j + 1, j + 2];
            let mut v = [0.0; 4];
            for (slot, &i) in idx.iter().enumerate() {
                v[slot] = self.d1(psi, i);
            }
            let interp = |u: &dyn Fn(usize) -> f64| idx.iter().zip(w.iter()).map(|(&i, &wt)| wt * u(i)).sum::<f64>();
            let r = interp(&|i| self.coef.r[i]);
            let r = match self.setup.background {
                Background::Schwarzschild(p) => geometry::inverse_tortoise(&p.params, xs).unwrap_or(r),
                _ => xs,
            };
            out.push(ObserverSample {
                t,
                observer: k,
                r_star: xs,
                r,
                psi: interp(&|i| psi[i]),
                dpsi_dt: interp(&|i| pi[i]),
                dpsi_drstar: v.iter().zip(w.iter()).map(|(a, b)| a * b).sum(),
            });
        }
    }

    fn field(&self, psi: &[f64], pi: &[f64], t: f64) -> ModeField {
        ModeField {
            ell: self.setup.background.ell(),
            t,
            rstar_min: self.coef.x[0],
            h: self.h,
            psi: psi.to_vec(),
            pi: pi.to_vec(),
        }
    }

    fn snapshot(&self, psi: &[f64], pi: &[f64], t: f64) -> ModeField {
        let (lo, hi) = self.setup.snapshot_range.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
        let step = self.setup.snapshot_spacing.max(1);
        let idx: Vec<usize> =
            (0..self.n).filter(|&i| self.coef.x[i] >= lo && self.coef.x[i] <= hi).step_by(step).collect();
        ModeField {
            ell: self.setup.background.ell(),
            t,
            rstar_min: idx.first().map_or(self.coef.x[0], |&i| self.coef.x[i]),
            h: self.h * step as f64,
            psi: idx.iter().map(|&i| psi[i]).collect(),
            pi: idx.iter().map(|&i| pi[i]).collect(),
        }
    }
}

/// Cubic Lagrange weights on nodes −1, 0, 1, 2 at offset `s ∈ [0, 1)`.
fn lagrange4(s: f64) -> [f64; 4] {
    [
        -s * (s - 1.0) * (s - 2.0) / 6.0,
        (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
        -(s + 1.0) * s * (s - 2.0) / 2.0,
        (s + 1.0) * s * (s - 1.0) / 6.0,
    ]
}

fn validate(setup: &Evolution) -> Result<()> {
    let g = &setup.grid;
    g.validate()?;
    if setup.output_stride == 0 {
        return Err(Error::InvalidSetup("output stride must be positive".into()));
    }
    if setup.background.is_half_line() && g.rstar_min != 0.0 {
        return Err(Error::InvalidSetup("half-line grids must start at r = 0".into()));
    }
    if let Background::Schwarzschild(p) = setup.background {
        if p.params.is_flat() {
            return Err(Error::InvalidSetup("Schwarzschild background needs M > 0".into()));
        }
    }
    if let Some(pert) = &setup.perturbation {
        match setup.background {
            Background::Schwarzschild(p) => pert.validate(p.params.mass)?,
            _ => return Err(Error::InvalidSetup("perturbations need a Schwarzschild background".into())),
        }
    }
    if g.outer == OuterBoundary::Causal {
        let support = setup.data.iter().map(|d| 2.0 * d.support_radius()).fold(0.0, f64::max);
        let width = g.rstar_max - g.rstar_min;
        let needed = 2.0 * g.t_max + support;
        let needed = if setup.background.is_half_line() { g.t_max + support } else { needed };
        if width <= needed {
            return Err(Error::InvalidSetup(format!(
                "causal boundary needs a domain wider than {needed}, got {width}"
            )));
        }
    }
    for obs in &setup.observers {
        if obs.speed == 0.0 && !(obs.rstar0 > g.rstar_min + 2.0 * g.h && obs.rstar0 < g.rstar_max - 2.0 * g.h) {
            return Err(Error::InvalidSetup(format!("observer at r* = {} lies outside the grid", obs.rstar0)));
        }
    }
    Ok(())
}

fn check_stability_bound(stepper: &Stepper<'_>, leapfrog: bool) -> Result<()> {
    let h = stepper.h;
    let dt = stepper.dt;
    let vmax = stepper.coef.v.iter().fold(0.0_f64, |a, &b| a.max(b));
    let mut cmax = 1.0;
    let mut vpert = 0.0;
    if let Some(p) = stepper.setup.perturbation {
        match p.kind {
            PerturbationKind::Principal => cmax += p.epsilon.abs(),
            PerturbationKind::Potential => vpert = p.epsilon.abs(),
        }
    }
    let lap = match stepper.setup.grid.order {
        StencilOrder::Second => 4.0 / (h * h),
        StencilOrder::Fourth => 16.0 / (3.0 * h * h),
    };
    let lambda = cmax * lap + vmax + vpert;
    let ok = if leapfrog { dt * dt * lambda <= 4.0 } else { dt * lambda.sqrt() <= 2.6 };
    if ok {
        Ok(())
    } else {
        Err(Error::Cfl(format!(
            "dt = {dt} too large for spectral radius {lambda:e} ({} scheme)",
            if leapfrog { "leapfrog" } else { "RK4" }
        )))
    }
}

pub fn evolve(setup: &Evolution) -> Result<Trajectory> {
    validate(setup)?;
    let g = setup.grid;
    let n = g.points();
    let dt = g.dt();
    let half_line = setup.background.is_half_line();

    let mut x = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut window = vec![0.0; n];
    for i in 0..n {
        let xi = g.coordinate(i);
        let (vi, ri) = if half_line && i == 0 { (0.0, 0.0) } else { setup.background.sample(xi)? };
        x.push(xi);
        r.push(ri);
        v.push(vi);
        if let Some(p) = &setup.perturbation {
            window[i] = p.window.at_r(ri);
        }
    }
    let stepper = Stepper { setup, n, h: g.h, dt, half_line, coef: Coefficients { x, r, v, window } };
    let leapfrog = setup.uses_leapfrog();
    check_stability_bound(&stepper, leapfrog)?;

    let mut psi = vec![0.0; n];
    let mut pi = vec![0.0; n];
    for (i, xi) in stepper.coef.x.iter().enumerate() {
        for d in &setup.data {
            let (p, q) = d.state(*xi);
            psi[i] += p;
            pi[i] += q;
        }
    }
    if half_line {
        psi[0] = 0.0;
        pi[0] = 0.0;
    }
    let initial = psi.iter().chain(pi.iter()).fold(0.0_f64, |a, &b| a.max(b.abs()));
    let limit = INSTABILITY_FACTOR * initial.max(1.0);

    if leapfrog {
        run_leapfrog(&stepper, psi, pi, limit)
    } else {
        run_rk4(&stepper, psi, pi, limit)
    }
}

fn check_blowup(psi: &[f64], t: f64, limit: f64) -> Result<()> {
    let m = psi.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    if !(m <= limit) {
        return Err(Error::Instability { t, max_abs: m });
    }
    Ok(())
}

fn run_leapfrog(st: &Stepper<'_>, psi0: Vec<f64>, pi0: Vec<f64>, limit: f64) -> Result<Trajectory> {
    let setup = st.setup;
    let n = st.n;
    let dt = st.dt;
    let steps = setup.grid.steps();
    let mut samples = Vec::new();
    let mut snapshots = Vec::new();

    // Increment form δⁿ = ψⁿ − ψⁿ⁻¹, δⁿ⁺¹ = δⁿ + dt² A(ψⁿ): same scheme as
    // 2ψⁿ − ψⁿ⁻¹ + dt² A, with far less round-off in long runs.
    let mut acc = vec![0.0; n];
    let mut cur = psi0;
    let mut inc = vec![0.0; n];
    // Taylor start: ψ¹ = ψ⁰ + dt π⁰ + dt²/2 A(ψ⁰).
    st.acceleration(&cur, 0.0, &mut acc);
    for i in 1..n - 1 {
        inc[i] = dt * pi0[i] + 0.5 * dt * dt * acc[i];
    }
    let (bl, br) = st.boundary_rates(&cur);
    if !st.half_line {
        inc[0] = dt * bl;
    }
    inc[n - 1] = dt * br;

    let record = |k: usize| k.is_multiple_of(setup.output_stride) || k == steps;
    let snap = |k: usize| setup.snapshot_stride.is_some_and(|s| k.is_multiple_of(s) || k == steps);

    if record(0) {
        st.sample(&cur, &pi0, 0.0, &setup.observers, &mut samples);
    }
    if snap(0) {
        snapshots.push(st.snapshot(&cur, &pi0, 0.0));
    }
    for i in 0..n {
        cur[i] += inc[i];
    }

    let mut pi = vec![0.0; n];
    let mut final_field = None;
    for k in 1..=steps {
        let t = k as f64 * dt;
        st.acceleration(&cur, t, &mut acc);
        let (bl, br) = st.boundary_rates(&cur);
        let want = record(k) || snap(k) || k == steps;
        if want {
            for i in 1..n - 1 {
                pi[i] = (2.0 * inc[i] + dt * dt * acc[i]) / (2.0 * dt);
            }
            pi[0] = if st.half_line { 0.0 } else { bl };
            pi[n - 1] = br;
            if record(k) {
                st.sample(&cur, &pi, t, &setup.observers, &mut samples);
            }
            if snap(k) {
                snapshots.push(st.snapshot(&cur, &pi, t));
            }
            if k == steps {
                final_field = Some(st.field(&cur, &pi, t));
            }
        }
        if k % 64 == 0 || k == steps {
            check_blowup(&cur, t, limit)?;
        }
        if k == steps {
            break;
        }
        for i in 1..n - 1 {
            inc[i] += dt * dt * acc[i];
        }
        inc[0] = if st.half_line { 0.0 } else { dt * bl };
        inc[n - 1] = dt * br;
        for i in 0..n {
            cur[i] += inc[i];
        }
    }
    let final_field = final_field.expect("at least one step");
    Ok(Trajectory { grid: setup.grid, dt, samples, snapshots, final_field })
}

fn run_rk4(st: &Stepper<'_>, psi0: Vec<f64>, pi0: Vec<f64>, limit: f64) -> Result<Trajectory> {
    let setup = st.setup;
    let n = st.n;
    let dt = st.dt;
    let steps = setup.grid.steps();
    let mut samples = Vec::new();
    let mut snapshots = Vec::new();

    let mut psi = psi0;
    let mut pi = pi0;
    let mut kp = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut kq = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut tmp_psi = vec![0.0; n];
    let mut tmp_pi = vec![0.0; n];

    // Boundary points carry ψ_t from the upwind condition; their π mirrors it.
    let rhs = |psi: &[f64], pi: &[f64], t: f64, dpsi: &mut [f64], dpi: &mut [f64]| {
        st.acceleration(psi, t, dpi);
        dpsi.copy_from_slice(pi);
        let (bl, br) = st.boundary_rates(psi);
        if st.half_line {
            dpsi[0] = 0.0;
            dpi[0] = 0.0;
        } else {
            dpsi[0] = bl;
            dpi[0] = 0.0;
        }
        dpsi[n - 1] = br;
        dpi[n - 1] = 0.0;
    };
    let sync_boundary_pi = |psi: &[f64], pi: &mut [f64]| {
        let (bl, br) = st.boundary_rates(psi);
        pi[0] = if st.half_line { 0.0 } else { bl };
        pi[n - 1] = br;
    };
    sync_boundary_pi(&psi, &mut pi);

    let record = |k: usize| k.is_multiple_of(setup.output_stride) || k == steps;
    let snap = |k: usize| setup.snapshot_stride.is_some_and(|s| k.is_multiple_of(s) || k == steps);
    if record(0) {
        st.sample(&psi, &pi, 0.0, &setup.observers, &mut samples);
    }
    if snap(0) {
        snapshots.push(st.snapshot(&psi, &pi, 0.0));
    }

    for k in 1..=steps {
        let t0 = (k - 1) as f64 * dt;
        let stages = [(0.0, 0usize), (0.5, 0), (0.5, 1), (1.0, 2)];
        for (s, &(c, from)) in stages.iter().enumerate() {
            if s == 0 {
                let (a, b) = (&mut kp[0], &mut kq[0]);
                rhs(&psi, &pi, t0, a, b);
            } else {
                for i in 0..n {
                    tmp_psi[i] = psi[i] + c * dt * kp[from][i];
                    tmp_pi[i] = pi[i] + c * dt * kq[from][i];
                }
                let (a, b) = (&mut kp[s], &mut kq[s]);
                rhs(&tmp_psi, &tmp_pi, t0 + c * dt, a, b);
            }
        }
        for i in 0..n {
            psi[i] += dt / 6.0 * (kp[0][i] + 2.0 * kp[1][i] + 2.0 * kp[2][i] + kp[3][i]);
            pi[i] += dt / 6.0 * (kq[0][i] + 2.0 * kq[1][i] + 2.0 * kq[2][i] + kq[3][i]);
        }
        sync_boundary_pi(&psi, &mut pi);
        let t = k as f64 * dt;
        if record(k) {
            st.sample(&psi, &pi, t, &setup.observers, &mut samples);
        }
        if snap(k) {
            snapshots.push(st.snapshot(&psi, &pi, t));
        }
        if k % 64 == 0 || k == steps {
            check_blowup(&psi, t, limit)?;
        }
    }
    let final_field = st.field(&psi, &pi, steps as f64 * dt);
    Ok(Trajectory { grid: setup.grid, dt, samples, snapshots, final_field })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BlackHoleParams;

    fn flat_grid(min: f64, max: f64, h: f64, t_max: f64, order: StencilOrder) -> GridSpec {
        GridSpec { rstar_min: min, rstar_max: max, h, cfl: 0.5, t_max, order, outer: OuterBoundary::Causal }
    }

    #[test]
    fn zero_data_stays_zero() {
        let mut ev = Evolution::new(flat_grid(-10.0, 10.0, 0.1, 2.0, StencilOrder::Second), Background::FlatLine);
        ev.observers = vec![Observer::fixed(0.0)];
        let tr = evolve(&ev).unwrap();
        assert!(tr.samples.iter().all(|s| s.psi == 0.0));
        assert_eq!(energy(&tr.final_field, &Background::FlatLine).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_cfl_and_observers() {
        let mut g = flat_grid(-10.0, 10.0, 0.1, 2.0, StencilOrder::Second);
        g.cfl = 1.5;
        assert!(matches!(evolve(&Evolution::new(g, Background::FlatLine)), Err(Error::Cfl(_))));
        let mut ev = Evolution::new(flat_grid(-10.0, 10.0, 0.1, 2.0, StencilOrder::Second), Background::FlatLine);
        ev.observers = vec![Observer::fixed(50.0)];
        assert!(evolve(&ev).is_err());
    }

    #[test]
    fn causal_domain_is_enforced() {
        let ev = Evolution::new(flat_grid(-10.0, 10.0, 0.1, 20.0, StencilOrder::Second), Background::FlatLine);
        assert!(matches!(evolve(&ev), Err(Error::InvalidSetup(_))));
    }

    #[test]
    fn centrifugal_barrier_trips_leapfrog_bound() {
        let mut g = flat_grid(0.0, 30.0, 0.1, 5.0, StencilOrder::Second);
        g.cfl = 1.0;
        let ev = Evolution::new(g, Background::FlatHalfLine { ell: 2 });
        assert!(matches!(evolve(&ev), Err(Error::Cfl(_))));
    }

    #[test]
    fn window_support_is_checked() {
        let base = RadialPotential::new(0, BlackHoleParams::schwarzschild(1.0).unwrap()).unwrap();
        let pert = PerturbationSpec {
            epsilon: 0.01,
            decay_exponent: 0.5,
            window: PhotonSphereWindow { center: 3.0, half_width: 1.0 },
            kind: PerturbationKind::Potential,
        };
        assert!(matches!(build_time_dependent_potential(&base, &pert), Err(Error::WindowSupport(_))));
        let principal = PerturbationSpec {
            epsilon: 0.2,
            window: PhotonSphereWindow::photon_sphere(1.0),
            kind: PerturbationKind::Principal,
            ..pert
        };
        assert!(build_time_dependent_potential(&base, &principal).is_err());
    }

    #[test]
    fn perturbation_vanishes_with_epsilon() {
        let base = RadialPotential::new(1, BlackHoleParams::schwarzschild(1.0).unwrap()).unwrap();
        let pert = PerturbationSpec {
            epsilon: 0.0,
            decay_exponent: 0.5,
            window: PhotonSphereWindow::photon_sphere(1.0),
            kind: PerturbationKind::Potential,
        };
        let v = build_time_dependent_potential(&base, &pert).unwrap();
        for &rs in &[-5.0, 0.0, 1.0, 10.0] {
            assert_eq!(v.value(3.0, rs).unwrap(), base.at_rstar(rs).unwrap().value);
        }
    }

    #[test]
    fn initial_profiles_are_compact() {
        let d = InitialData::gaussian(5.0, 1.0, 2.0);
        assert_eq!(d.value(5.0).0, 2.0);
        assert!(d.value(5.0 + 8.0).0 < 1e-15);
        assert_eq!(d.value(5.0 + 8.01).0, 0.0);
        let b = InitialData { profile: Profile::Bump, ..d };
        assert_eq!(b.value(5.0).0, 2.0);
        assert_eq!(b.value(6.0).0, 0.0);
        // derivative against a centred difference
        let (x, e) = (5.3, 1e-6);
        for p in [d, b] {
            let fd = (p.value(x + e).0 - p.value(x - e).0) / (2.0 * e);
            assert!((fd - p.value(x).1).abs() < 1e-7);
        }
    }

    #[test]
    fn lagrange_weights_reproduce_cubics() {
        for &s in &[0.0, 0.25, 0.5, 0.9] {
            let w = lagrange4(s);
            let f = |x: f64| 1.0 + 2.0 * x - x * x + 0.5 * x * x * x;
            let v: f64 = [-1.0, 0.0, 1.0, 2.0].iter().zip(w).map(|(&x, w)| w * f(x)).sum();
            assert!((v - f(s)).abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_norm_of_static_field() {
        let f = ModeField { ell: 0, t: 0.0, rstar_min: 0.0, h: 0.5, psi: vec![0.0, 1.0, 2.0, 3.0], pi: vec![0.0; 4] };
        assert!((f.gradient_norm() - (0.5f64 * 4.0 * 4.0).sqrt()).abs() < 1e-14);
        assert!((f.energy_with(&[0.0; 4]) - 0.5 * 0.5 * 4.0 * 4.0).abs() < 1e-14);
    }
}
