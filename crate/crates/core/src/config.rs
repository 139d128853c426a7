//! Declarative experiment configuration (TOML, or JSON by file extension).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::NormVariant;
use crate::error::{Error, Result};
use crate::evolver::{
    Background, Evolution, GridSpec, InitialData, Observer, OuterBoundary, PerturbationKind, PerturbationSpec,
    PhotonSphereWindow, Profile, StencilOrder, Velocity,
};
use crate::geometry::BlackHoleParams;
use crate::reduction::RadialPotential;
use crate::tailfit::{PowerIndexMethod, TimeWeight};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundKind {
    Schwarzschild,
    FlatLine,
    FlatHalfLine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub epsilon: f64,
    pub decay_exponent: f64,
    #[serde(default = "default_kind")]
    pub kind: PerturbationKind,
    /// Half-width of the bump around `r = 3M`, in units of `M`.
    #[serde(default = "default_half_width")]
    pub window_half_width: f64,
}

fn default_kind() -> PerturbationKind {
    PerturbationKind::Potential
}

fn default_half_width() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundConfig {
    #[serde(default = "default_background")]
    pub kind: BackgroundKind,
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default)]
    pub spin: f64,
    #[serde(default)]
    pub ell: u32,
    pub perturbation: Option<PerturbationConfig>,
}

fn default_background() -> BackgroundKind {
    BackgroundKind::Schwarzschild
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub rstar_min: f64,
    pub rstar_max: f64,
    pub h: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub t_max: f64,
    #[serde(default = "default_order")]
    pub order: u32,
    #[serde(default = "default_outer")]
    pub outer: OuterBoundary,
}

fn default_cfl() -> f64 {
    0.5
}

fn default_order() -> u32 {
    2
}

fn default_outer() -> OuterBoundary {
    OuterBoundary::Causal
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "default_profile")]
    pub profile: Profile,
    /// Centre in `r*`.
    pub center: f64,
    pub width: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "default_velocity")]
    pub velocity: Velocity,
}

fn default_profile() -> Profile {
    Profile::Gaussian
}

fn default_velocity() -> Velocity {
    Velocity::Static
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverConfig {
    /// Fixed observers by areal radius.
    #[serde(default)]
    pub radii: Vec<f64>,
    /// Observers on `r* = speed · t`.
    #[serde(default)]
    pub rays: Vec<f64>,
    /// Observers on `r* = t − offset`.
    #[serde(default)]
    pub null_offsets: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Geometry,
    Tail,
    Envelope,
    Norms,
    Commutators,
    Sobolev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailConfig {
    #[serde(default = "default_method")]
    pub method: PowerIndexMethod,
    pub window: Option<(f64, f64)>,
    /// Margin after the last sign change, in units of `M`.
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_plateau")]
    pub plateau_tolerance: f64,
    /// Expected exponent; a miss beyond `tolerance` is an acceptance failure.
    pub expected: Option<f64>,
    #[serde(default = "default_plateau")]
    pub tolerance: f64,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            method: default_method(),
            window: None,
            margin: default_margin(),
            plateau_tolerance: default_plateau(),
            expected: None,
            tolerance: default_plateau(),
        }
    }
}

fn default_method() -> PowerIndexMethod {
    PowerIndexMethod::LogDerivative
}

fn default_margin() -> f64 {
    50.0
}

fn default_plateau() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    #[serde(default = "default_time_weight")]
    pub time_weight: TimeWeight,
    #[serde(default = "default_min_slab")]
    pub min_slab: f64,
    /// Expected `(p_t, p_u)` for the field and `p_u` for the gradient.
    pub expected: Option<(f64, f64, f64)>,
    #[serde(default = "default_envelope_tol")]
    pub tolerance: (f64, f64),
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self {
            time_weight: default_time_weight(),
            min_slab: default_min_slab(),
            expected: None,
            tolerance: default_envelope_tol(),
        }
    }
}

fn default_time_weight() -> TimeWeight {
    TimeWeight::Advanced
}

fn default_min_slab() -> f64 {
    32.0
}

fn default_envelope_tol() -> (f64, f64) {
    (0.25, 0.3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormsConfig {
    #[serde(default = "default_variants")]
    pub variants: Vec<NormVariant>,
    /// Upper ends `T` of the intervals `[0, T]`.
    #[serde(default = "default_norm_times")]
    pub times: Vec<f64>,
    /// Snapshot spacing in time steps.
    #[serde(default = "default_snapshot_stride")]
    pub snapshot_stride: usize,
    #[serde(default = "default_radial_stride")]
    pub radial_stride: usize,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
}

impl Default for NormsConfig {
    fn default() -> Self {
        Self {
            variants: default_variants(),
            times: default_norm_times(),
            snapshot_stride: default_snapshot_stride(),
            radial_stride: default_radial_stride(),
            r_max: default_r_max(),
        }
    }
}

fn default_variants() -> Vec<NormVariant> {
    vec![NormVariant::Le, NormVariant::Le1]
}

fn default_norm_times() -> Vec<f64> {
    vec![50.0, 100.0, 200.0, 400.0]
}

fn default_snapshot_stride() -> usize {
    20
}

fn default_radial_stride() -> usize {
    5
}

fn default_r_max() -> f64 {
    200.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SobolevConfig {
    /// Slab scales `T`; each is checked on every region of its cone partition.
    #[serde(default = "default_sobolev_scales")]
    pub scales: Vec<f64>,
}

impl Default for SobolevConfig {
    fn default() -> Self {
        Self { scales: default_sobolev_scales() }
    }
}

fn default_sobolev_scales() -> Vec<f64> {
    vec![32.0, 64.0, 128.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: String,
    /// Observer samples every `stride` time steps.
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub snapshots: bool,
    #[serde(default = "yes")]
    pub plots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: default_directory(), stride: default_stride(), snapshots: false, plots: true }
    }
}

fn default_directory() -> String {
    "runs".into()
}

fn default_stride() -> usize {
    20
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub ell: Vec<u32>,
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub delta: Vec<f64>,
    #[serde(default)]
    pub h: Vec<f64>,
    /// Allowed distance from `−3 − 2ℓ` for each entry of `ell`; unchecked when empty.
    #[serde(default)]
    pub tolerance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub background: BackgroundConfig,
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub data: Vec<DataConfig>,
    #[serde(default)]
    pub observers: ObserverConfig,
    #[serde(default)]
    pub analyses: Vec<Analysis>,
    #[serde(default)]
    pub tail: TailConfig,
    #[serde(default)]
    pub envelope: EnvelopeConfig,
    #[serde(default)]
    pub norms: NormsConfig,
    #[serde(default)]
    pub sobolev: SobolevConfig,
    #[serde(default)]
    pub output: OutputConfig,
    pub sweep: Option<SweepConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            _ => Self::from_toml(&text),
        };
        let cfg = parsed.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON form, independent of file formatting.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(canonical))
    }

    pub fn params(&self) -> Result<BlackHoleParams> {
        BlackHoleParams::new(self.background.mass, self.background.spin)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let b = &self.background;
        let geometry_only = self.analyses.iter().all(|a| *a == Analysis::Geometry);
        if b.spin != 0.0 && !geometry_only {
            return bad(format!("spin = {} is only allowed for geometry-only analyses", b.spin));
        }
        if b.kind != BackgroundKind::Schwarzschild && b.perturbation.is_some() {
            return bad("perturbations need the schwarzschild background".into());
        }
        if b.kind == BackgroundKind::FlatLine && b.ell != 0 {
            return bad("the flat full-line background carries no angular term; use flat_half_line".into());
        }
        if !geometry_only && self.grid.is_none() {
            return bad("a [grid] section is required unless all analyses are geometry".into());
        }
        if self.data.is_empty() && !geometry_only {
            return bad("at least one [[data]] pulse is required".into());
        }
        if self.output.stride == 0 {
            return bad("output.stride must be positive".into());
        }
        if let Some(s) = &self.sweep {
            if s.ell.is_empty() && s.epsilon.is_empty() && s.delta.is_empty() && s.h.is_empty() {
                return bad("sweep needs at least one parameter range".into());
            }
        }
        self.params().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn background(&self) -> Result<Background> {
        let b = &self.background;
        Ok(match b.kind {
            BackgroundKind::Schwarzschild => Background::Schwarzschild(RadialPotential::new(b.ell, self.params()?)?),
            BackgroundKind::FlatLine => Background::FlatLine,
            BackgroundKind::FlatHalfLine => Background::FlatHalfLine { ell: b.ell },
        })
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let g = self.grid.as_ref().ok_or_else(|| Error::Config("missing [grid] section".into()))?;
        Ok(GridSpec {
            rstar_min: g.rstar_min,
            rstar_max: g.rstar_max,
            h: g.h,
            cfl: g.cfl,
            t_max: g.t_max,
            order: StencilOrder::from_int(g.order)?,
            outer: g.outer,
        })
    }

    pub fn perturbation(&self) -> Option<PerturbationSpec> {
        self.background.perturbation.as_ref().map(|p| PerturbationSpec {
            epsilon: p.epsilon,
            decay_exponent: p.decay_exponent,
            window: PhotonSphereWindow {
                center: 3.0 * self.background.mass,
                half_width: p.window_half_width * self.background.mass,
            },
            kind: p.kind,
        })
    }

    /// Observers in `r*`, fixed ones first.
    pub fn observers(&self, background: &Background) -> Result<Vec<Observer>> {
        let o = &self.observers;
        let mut out = Vec::new();
        for &r in &o.radii {
            out.push(Observer::fixed(background.rstar_of(r)?));
        }
        out.extend(o.rays.iter().map(|&s| Observer::ray(s)));
        out.extend(o.null_offsets.iter().map(|&u| Observer::null(u)));
        Ok(out)
    }

    pub fn evolution(&self) -> Result<Evolution> {
        let background = self.background()?;
        let mut ev = Evolution::new(self.grid()?, background);
        ev.perturbation = self.perturbation();
        ev.data = self
            .data
            .iter()
            .map(|d| InitialData {
                profile: d.profile,
                center: d.center,
                width: d.width,
                amplitude: d.amplitude,
                velocity: d.velocity,
            })
            .collect();
        ev.observers = self.observers(&background)?;
        ev.output_stride = self.output.stride;
        Ok(ev)
    }
}
