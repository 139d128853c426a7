//! Config-driven pipeline with persistent, checksummed run directories.
//!
//! A run evolves the configured mode, runs the requested analyses and writes
//! `trajectory.csv`, one JSON report per analysis, SVG plots and a
//! `manifest.json` listing every file with its SHA-256.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    self, bracket, cone_partition, le_norm, sobolev_check, CommutatorReport, ConeRegion, ModeCommutatorReport,
    NormReport, NormSpec, NormVariant, RadialCutoff, SobolevReport, SpacetimeField,
};
use crate::config::{Analysis, ExperimentConfig, PerturbationConfig};
use crate::error::{Error, Result, StageExt};
use crate::evolver::{evolve, Background, Evolution, InitialData, Observer, Trajectory, Velocity};
use crate::geometry::{self, BlackHoleParams, SlicingReport, SlicingSpec, TrappedSetQuery};
use crate::plot::{Plot, Series};
use crate::reduction::{self, NormalFormReport, RadialPotential, ReductionSource};
use crate::tailfit::{
    envelope_fit, fit_decay, power_law_slope, DecayFit, EnvelopeFit, EnvelopeModel, EnvelopeOptions, EnvelopeSample,
    FitOptions, FitReport,
};

/// Environment variable bounding the sweep worker pool.
pub const WORKERS_ENV: &str = "PRICELAW_WORKERS";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Comparison of an observed value with a configured expectation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub expected: f64,
    pub observed: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn within(name: impl Into<String>, expected: f64, observed: Option<f64>, tolerance: f64) -> Self {
        let passed = observed.is_some_and(|o| (o - expected).abs() <= tolerance);
        Self { name: name.into(), expected, observed, tolerance, passed }
    }

    fn at_least(name: impl Into<String>, expected: f64, observed: Option<f64>, tolerance: f64) -> Self {
        let passed = observed.is_some_and(|o| o >= expected - tolerance);
        Self { name: name.into(), expected, observed, tolerance, passed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub h: f64,
    pub dt: f64,
    pub points: usize,
    pub steps: usize,
    pub order: u32,
    pub integrator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub started: String,
    pub finished: String,
    pub grid: Option<GridSummary>,
    pub summaries: BTreeMap<String, serde_json::Value>,
    pub checks: Vec<CheckOutcome>,
    /// Every other file in the run directory.
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// A JSON report stamped with the hash of the config that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct Stamped<T> {
    pub config_hash: String,
    #[serde(flatten)]
    pub report: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrappedSample {
    pub phi_freq: f64,
    pub r: f64,
    /// `|R_a(r)|` relative to the magnitude of its terms.
    pub relative_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeometryReport {
    pub params: BlackHoleParams,
    pub horizons: (f64, f64),
    pub trapped: Vec<TrappedSample>,
    pub slicing: Option<SlicingReport>,
    pub normal_form: Option<NormalFormReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailReport {
    pub fits: Vec<FitReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub field: EnvelopeFit,
    pub gradient: EnvelopeFit,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormSeries {
    pub variant: NormVariant,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `N(T_k) − N(T_{k−1})`, aligned with `times[1..]`.
    pub increments: Vec<f64>,
    /// Increments starting at `T ≥ 100` are non-increasing (at least two of them).
    pub saturating: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormsReport {
    pub reports: Vec<NormReport>,
    pub series: Vec<NormSeries>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CommutatorsReport {
    pub flat: Vec<CommutatorReport>,
    pub mode: Option<ModeCommutatorReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SobolevEntry {
    pub region: ConeRegion,
    pub report: SobolevReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SobolevRun {
    pub entries: Vec<SobolevEntry>,
    /// Largest ratio for each slab scale.
    pub max_ratio: BTreeMap<String, f64>,
}

/// In-memory results of one pipeline execution.
#[derive(Debug, Clone, Default)]
pub struct PipelineResults {
    pub trajectory: Option<Trajectory>,
    pub geometry: Option<GeometryReport>,
    pub fits: Vec<(f64, DecayFit)>,
    pub envelope: Option<EnvelopeReport>,
    pub norms: Option<NormsReport>,
    pub commutators: Option<CommutatorsReport>,
    pub sobolev: Option<SobolevRun>,
    pub checks: Vec<CheckOutcome>,
}

impl PipelineResults {
    /// `p_final` of the first fixed observer.
    pub fn p_final(&self) -> Option<f64> {
        self.fits.first().and_then(|(_, f)| f.p_final)
    }
}

fn wants(cfg: &ExperimentConfig, a: Analysis) -> bool {
    cfg.analyses.contains(&a)
}

fn mass_of(bg: &Background) -> f64 {
    match bg {
        Background::Schwarzschild(p) => p.params.mass,
        _ => 0.0,
    }
}

/// Run every configured stage without touching the file system.
pub fn execute(cfg: &ExperimentConfig) -> Result<PipelineResults> {
    cfg.validate()?;
    let mut out = PipelineResults::default();
    if wants(cfg, Analysis::Geometry) {
        out.geometry = Some(geometry_stage(cfg).stage("geometry")?);
    }
    if wants(cfg, Analysis::Commutators) {
        out.commutators = Some(commutator_stage(cfg, &mut out.checks).stage("commutators")?);
    }
    if cfg.analyses.iter().all(|a| *a == Analysis::Geometry) && cfg.grid.is_none() {
        return Ok(out);
    }
    let ev = setup_evolution(cfg)?;
    let background = ev.background;
    let traj = evolve(&ev).stage("evolve")?;
    if wants(cfg, Analysis::Tail) {
        out.fits = tail_stage(cfg, &traj, &mut out.checks).stage("tail")?;
    }
    if wants(cfg, Analysis::Envelope) {
        out.envelope = Some(envelope_stage(cfg, &traj, &background, &mut out.checks).stage("envelope")?);
    }
    if wants(cfg, Analysis::Norms) || wants(cfg, Analysis::Sobolev) {
        let field =
            SpacetimeField::from_snapshots(&traj.snapshots, &background, 1, 0.0, cfg.norms.r_max).stage("snapshots")?;
        if wants(cfg, Analysis::Norms) {
            out.norms = Some(norms_stage(cfg, &field, &background).stage("norms")?);
        }
        if wants(cfg, Analysis::Sobolev) {
            out.sobolev = Some(sobolev_stage(cfg, &field).stage("sobolev")?);
        }
    }
    out.trajectory = Some(traj);
    Ok(out)
}

fn setup_evolution(cfg: &ExperimentConfig) -> Result<Evolution> {
    let mut ev = cfg.evolution().stage("setup")?;
    if wants(cfg, Analysis::Norms) || wants(cfg, Analysis::Sobolev) || cfg.output.snapshots {
        ev.snapshot_stride = Some(cfg.norms.snapshot_stride.max(1));
    }
    if wants(cfg, Analysis::Norms) || wants(cfg, Analysis::Sobolev) {
        let hi = ev.background.rstar_of(cfg.norms.r_max).stage("setup")? + ev.grid.h;
        ev.snapshot_range = Some((ev.grid.rstar_min, hi));
        ev.snapshot_spacing = cfg.norms.radial_stride.max(1);
    }
    Ok(ev)
}

fn geometry_stage(cfg: &ExperimentConfig) -> Result<GeometryReport> {
    let params = cfg.params()?;
    let horizons = geometry::horizon_radii(&params)?;
    let mut trapped = Vec::new();
    if params.mass > 0.0 {
        for phi_freq in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            let r = geometry::trapped_root(&TrappedSetQuery { tau: 1.0, phi_freq, params })?;
            let relative_residual = geometry::trapped_polynomial(&params, r, 1.0, phi_freq).abs()
                / geometry::trapped_polynomial_scale(&params, r, 1.0, phi_freq);
            trapped.push(TrappedSample { phi_freq, r, relative_residual });
        }
    }
    let slicing = if params.mass > 0.0 {
        let spec = SlicingSpec::reference(&params)?;
        let lo = horizons.0 * 1.01;
        let grid: Vec<f64> = (0..200).map(|i| lo * (50.0 * params.mass / lo).powf(i as f64 / 199.0)).collect();
        Some(geometry::validate_slicing(&spec, &params, &grid))
    } else {
        None
    };
    let normal_form = if params.spin == 0.0 && params.mass > 0.0 {
        let grid: Vec<f64> = (0..=40).map(|i| 100.0 * params.mass * 10f64.powf(i as f64 / 20.0)).collect();
        Some(reduction::normal_form_check(&params, cfg.background.ell, &grid)?)
    } else {
        None
    };
    Ok(GeometryReport { params, horizons, trapped, slicing, normal_form })
}

fn fixed_count(cfg: &ExperimentConfig) -> usize {
    cfg.observers.radii.len()
}

fn tail_stage(
    cfg: &ExperimentConfig,
    traj: &Trajectory,
    checks: &mut Vec<CheckOutcome>,
) -> Result<Vec<(f64, DecayFit)>> {
    let n = fixed_count(cfg);
    if n == 0 {
        return Err(Error::InvalidSetup("tail analysis needs at least one fixed observer radius".into()));
    }
    let opts = FitOptions {
        method: cfg.tail.method,
        window: cfg.tail.window,
        margin: cfg.tail.margin,
        plateau_tolerance: cfg.tail.plateau_tolerance,
    };
    let mut fits = Vec::new();
    for (k, &radius) in cfg.observers.radii.iter().enumerate() {
        let (t, psi) = observer_series(traj, k);
        let fit = fit_decay(&t, &psi, &opts)?;
        if let Some(expected) = cfg.tail.expected {
            checks.push(CheckOutcome::within(format!("tail r={radius}"), expected, fit.p_final, cfg.tail.tolerance));
        }
        fits.push((radius, fit));
    }
    Ok(fits)
}

fn observer_series(traj: &Trajectory, k: usize) -> (Vec<f64>, Vec<f64>) {
    traj.observer_series(k).iter().filter(|s| s.t > 0.0).map(|s| (s.t, s.psi)).unzip()
}

/// Envelope samples of `|u|` and `|∇u|` for `u = ψ/r` along each observer.
pub fn envelope_samples(traj: &Trajectory, background: &Background, observers: usize) -> [Vec<Vec<EnvelopeSample>>; 2] {
    let m = mass_of(background);
    let lambda = analysis::angular_eigenvalue(background.ell());
    let mut field = Vec::new();
    let mut grad = Vec::new();
    for k in 0..observers {
        let series = traj.observer_series(k);
        let mut f = Vec::with_capacity(series.len());
        let mut g = Vec::with_capacity(series.len());
        for s in series.iter().filter(|s| s.t > 0.0 && s.r > 0.0) {
            let r = s.r;
            let u = s.psi / r;
            let ut = s.dpsi_dt / r;
            let ur = s.dpsi_drstar / r - (1.0 - 2.0 * m / r) * s.psi / (r * r);
            let value = (ut * ut + ur * ur + lambda * u * u / (r * r)).sqrt();
            f.push(EnvelopeSample { t: s.t, r_star: s.r_star, r, value: u.abs() });
            g.push(EnvelopeSample { t: s.t, r_star: s.r_star, r, value });
        }
        field.push(f);
        grad.push(g);
    }
    [field, grad]
}

fn envelope_stage(
    cfg: &ExperimentConfig,
    traj: &Trajectory,
    background: &Background,
    checks: &mut Vec<CheckOutcome>,
) -> Result<EnvelopeReport> {
    let o = &cfg.observers;
    let count = o.radii.len() + o.rays.len() + o.null_offsets.len();
    let [field_samples, grad_samples] = envelope_samples(traj, background, count);
    let opts = EnvelopeOptions {
        model: EnvelopeModel::Field,
        time_weight: cfg.envelope.time_weight,
        min_slab: cfg.envelope.min_slab,
        outer_cone_only: true,
    };
    let field = envelope_fit(&field_samples, &opts)?;
    let gradient = envelope_fit(&grad_samples, &EnvelopeOptions { model: EnvelopeModel::Gradient, ..opts })?;
    if let Some((pt, pu, pg)) = cfg.envelope.expected {
        let (tf, tg) = cfg.envelope.tolerance;
        checks.push(CheckOutcome::within("envelope p_t", pt, field.p_t, tf));
        checks.push(CheckOutcome::within("envelope p_u", pu, Some(field.p_u), tf));
        checks.push(CheckOutcome::within("gradient envelope p_u", pg, Some(gradient.p_u), tg));
    }
    Ok(EnvelopeReport { field, gradient })
}

fn norms_stage(cfg: &ExperimentConfig, field: &SpacetimeField, background: &Background) -> Result<NormsReport> {
    let t_end = field.times.last().copied().unwrap_or(0.0);
    let times: Vec<f64> = cfg.norms.times.iter().copied().filter(|&t| t <= t_end * (1.0 + 1e-12)).collect();
    let mut reports = Vec::new();
    let mut series = Vec::new();
    for &variant in &cfg.norms.variants {
        let mut values = Vec::new();
        for &t in &times {
            let mut spec = NormSpec::new(variant, 0.0, t);
            if variant == NormVariant::Le1Weak {
                spec.weak_cutoff = Some(RadialCutoff::photon_sphere(mass_of(background).max(1e-300)));
            }
            let rep = le_norm(field, &spec)?;
            values.push(rep.value);
            reports.push(rep);
        }
        let increments: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
        let late: Vec<f64> =
            increments.iter().zip(&times).filter(|(_, &start)| start >= 100.0).map(|(d, _)| *d).collect();
        let saturating = late.len() >= 2 && late.windows(2).all(|w| w[1] <= w[0]);
        series.push(NormSeries { variant, times: times.clone(), values, increments, saturating });
    }
    Ok(NormsReport { reports, series })
}

fn sobolev_stage(cfg: &ExperimentConfig, field: &SpacetimeField) -> Result<SobolevRun> {
    let mut entries = Vec::new();
    let mut max_ratio = BTreeMap::new();
    for &ts in &cfg.sobolev.scales {
        let mut best: f64 = 0.0;
        for region in cone_partition(ts)? {
            match sobolev_check(field, &region) {
                Ok(report) => {
                    best = best.max(report.ratio);
                    entries.push(SobolevEntry { region, report });
                }
                Err(Error::EmptyRegion(_)) => {}
                Err(e) => return Err(e),
            }
        }
        max_ratio.insert(format!("{ts}"), best);
    }
    Ok(SobolevRun { entries, max_ratio })
}

fn commutator_stage(cfg: &ExperimentConfig, checks: &mut Vec<CheckOutcome>) -> Result<CommutatorsReport> {
    let ell = cfg.background.ell;
    let u = |t: f64, r: f64| (0.7 * t).sin() * (-(r - 6.0) * (r - 6.0) / 8.0).exp();
    let points: Vec<(f64, f64)> = [5.0, 7.0].iter().flat_map(|&t| [4.0, 6.0, 8.0].map(|r| (t, r))).collect();
    let hs = [0.2, 0.1, 0.05];
    let flat = [2, 4]
        .iter()
        .map(|&order| analysis::commutator_residual_flat(&u, ell, &points, &hs, order))
        .collect::<Result<Vec<_>>>()?;
    let worst = flat[0].observed_orders.iter().copied().fold(f64::INFINITY, f64::min);
    checks.push(CheckOutcome::at_least("commutator order", 2.0, worst.is_finite().then_some(worst), 0.1));
    let mode = if cfg.background.mass > 0.0 && cfg.background.spin == 0.0 {
        let pot = RadialPotential::new(ell, cfg.params()?)?;
        let psi = |t: f64, x: f64| (-(x - t + 20.0) * (x - t + 20.0) / 8.0).exp();
        let pts = [(30.0, 10.0), (40.0, 20.0), (60.0, 40.0)];
        Some(analysis::commutator_residual_mode(&psi, &pot, &pts, 0.05)?)
    } else {
        None
    };
    Ok(CommutatorsReport { flat, mode })
}

/// Options for [`run`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Reuse `<output>/<hash8>` instead of a new timestamped directory.
    pub in_place: bool,
    /// Overrides `output.directory`.
    pub output_root: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub results: PipelineResults,
}

fn stamped<T>(hash: &str, report: T) -> Stamped<T> {
    Stamped { config_hash: hash.to_string(), report }
}

fn short_hash(hash: &str) -> &str {
    &hash[..8]
}

fn timestamp() -> String {
    chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string()
}

fn fresh_dir(root: &Path, stem: &str, in_place: bool) -> Result<PathBuf> {
    fs::create_dir_all(root)?;
    if in_place {
        let dir = root.join(stem);
        fs::create_dir_all(&dir)?;
        return Ok(dir);
    }
    let base = format!("{}-{stem}", timestamp());
    let mut dir = root.join(&base);
    let mut n = 1;
    // `create_dir` fails on an existing directory, which keeps runs append-only.
    while let Err(e) = fs::create_dir(&dir) {
        if e.kind() != std::io::ErrorKind::AlreadyExists {
            return Err(e.into());
        }
        n += 1;
        dir = root.join(format!("{base}-{n}"));
    }
    Ok(dir)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, files: &mut Vec<String>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    files.push(name.to_string());
    Ok(())
}

fn write_text(dir: &Path, name: &str, text: &str, files: &mut Vec<String>) -> Result<()> {
    fs::write(dir.join(name), text)?;
    files.push(name.to_string());
    Ok(())
}

fn file_entry(dir: &Path, name: &str) -> Result<FileEntry> {
    let bytes = fs::read(dir.join(name))?;
    Ok(FileEntry { path: name.to_string(), sha256: hex::encode(Sha256::digest(&bytes)), bytes: bytes.len() as u64 })
}

/// Execute `cfg` and persist its artifacts.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let started = chrono::Utc::now().to_rfc3339();
    let hash = cfg.hash();
    let results = execute(cfg)?;
    let root = opts.output_root.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    let dir = fresh_dir(&root, short_hash(&hash), opts.in_place).stage("output")?;
    let mut files = Vec::new();
    write_json(&dir, "config.json", cfg, &mut files)?;
    let mut summaries = BTreeMap::new();
    let mut grid = None;
    if let Some(traj) = &results.trajectory {
        let mut w = BufWriter::new(fs::File::create(dir.join("trajectory.csv"))?);
        traj.write_csv(&mut w)?;
        w.flush()?;
        files.push("trajectory.csv".into());
        if cfg.output.snapshots {
            let mut w = BufWriter::new(fs::File::create(dir.join("snapshots.csv"))?);
            traj.write_snapshots_csv(&mut w)?;
            w.flush()?;
            files.push("snapshots.csv".into());
        }
        let g = &traj.grid;
        grid = Some(GridSummary {
            h: g.h,
            dt: traj.dt,
            points: g.points(),
            steps: g.steps(),
            order: g.order.as_int(),
            integrator: if cfg.evolution()?.uses_leapfrog() { "leapfrog" } else { "rk4" }.into(),
        });
    }
    if let Some(g) = &results.geometry {
        write_json(&dir, "geometry.json", &stamped(&hash, g.clone()), &mut files)?;
        let worst = g.trapped.iter().map(|s| s.relative_residual).fold(0.0, f64::max);
        summaries.insert("geometry".into(), serde_json::json!({ "trapped_residual": worst }));
    }
    if !results.fits.is_empty() {
        let run_id = short_hash(&hash);
        let fits: Vec<FitReport> = results.fits.iter().map(|(r, f)| FitReport::new(run_id, *r, f)).collect();
        summaries
            .insert("tail".into(), serde_json::json!(fits.iter().map(|f| (f.observer, f.p_final)).collect::<Vec<_>>()));
        write_json(&dir, "tail.json", &stamped(&hash, TailReport { fits }), &mut files)?;
        if cfg.output.plots {
            if let Some(traj) = &results.trajectory {
                write_text(&dir, "tail.svg", &tail_plot(cfg, traj, &results.fits, &hash).to_svg(), &mut files)?;
            }
        }
    }
    if let Some(e) = &results.envelope {
        write_json(&dir, "envelope.json", &stamped(&hash, e.clone()), &mut files)?;
        summaries.insert(
            "envelope".into(),
            serde_json::json!({ "p_t": e.field.p_t, "p_u": e.field.p_u, "gradient_p_u": e.gradient.p_u }),
        );
        if cfg.output.plots {
            write_text(&dir, "envelope.svg", &envelope_plot(e, &hash).to_svg(), &mut files)?;
        }
    }
    if let Some(n) = &results.norms {
        write_json(&dir, "norms.json", &stamped(&hash, n.clone()), &mut files)?;
        let sat: BTreeMap<String, bool> =
            n.series.iter().map(|s| (s.variant.name().to_string(), s.saturating)).collect();
        summaries.insert("norms".into(), serde_json::json!({ "saturating": sat }));
    }
    if let Some(c) = &results.commutators {
        write_json(&dir, "commutators.json", &stamped(&hash, c.clone()), &mut files)?;
        summaries.insert("commutators".into(), serde_json::json!({ "observed_orders": c.flat[0].observed_orders }));
    }
    if let Some(s) = &results.sobolev {
        write_json(&dir, "sobolev.json", &stamped(&hash, s.clone()), &mut files)?;
        summaries.insert("sobolev".into(), serde_json::json!({ "max_ratio": s.max_ratio }));
    }
    let files = files.iter().map(|f| file_entry(&dir, f)).collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        config_hash: hash,
        tool_version: TOOL_VERSION.into(),
        started,
        finished: chrono::Utc::now().to_rfc3339(),
        grid,
        summaries,
        checks: results.checks.clone(),
        files,
    };
    write_json(&dir, MANIFEST, &manifest, &mut Vec::new())?;
    Ok(RunOutcome { dir, manifest, results })
}

fn tail_plot(cfg: &ExperimentConfig, traj: &Trajectory, fits: &[(f64, DecayFit)], hash: &str) -> Plot {
    let mut series = Vec::new();
    for (k, (radius, fit)) in fits.iter().enumerate() {
        let (t, psi) = observer_series(traj, k);
        let pts: Vec<(f64, f64)> = t.iter().zip(&psi).map(|(a, b)| (*a, b.abs())).collect();
        series.push(Series::line(format!("|psi| at r = {radius}"), pts));
        if let Ok(p) = power_law_slope(&t, &psi, fit.window) {
            let (t0, t1) = fit.window;
            let anchor = t.iter().zip(&psi).rev().find(|(x, _)| **x <= t1).map(|(_, v)| v.abs());
            if let Some(a) = anchor {
                let line: Vec<(f64, f64)> =
                    (0..=20).map(|i| t0 + (t1 - t0) * i as f64 / 20.0).map(|x| (x, a * (x / t1).powf(p))).collect();
                series.push(Series::line(format!("slope {p:.3}"), line).dashed());
            }
        }
    }
    Plot {
        title: format!("Late-time tail, l = {}", cfg.background.ell),
        x_label: "t".into(),
        y_label: "|psi|".into(),
        log_x: true,
        log_y: true,
        series,
        comment: Some(format!("config {hash}")),
    }
}

fn envelope_plot(e: &EnvelopeReport, hash: &str) -> Plot {
    let ratio = |fit: &EnvelopeFit| -> Vec<(f64, f64)> {
        fit.points
            .iter()
            .map(|p| {
                let u = bracket(p.t - p.r_star).powf(-fit.p_u);
                let model = match fit.p_t {
                    Some(pt) => fit.c * bracket(p.t + p.r_star).powf(-pt) * u,
                    None => fit.c * u / bracket(p.r),
                };
                (p.t, p.value / model)
            })
            .collect()
    };
    Plot {
        title: "Envelope residuals (sup / model)".into(),
        x_label: "t".into(),
        y_label: "ratio".into(),
        log_x: true,
        log_y: true,
        series: vec![
            Series::line("field", ratio(&e.field)).markers(),
            Series::line("gradient", ratio(&e.gradient)).markers(),
        ],
        comment: Some(format!("config {hash}")),
    }
}

/// Result of re-verifying a run directory against its manifest.
#[derive(Debug, Clone)]
pub struct VerifiedRun {
    pub manifest: RunManifest,
    /// Files whose size or checksum no longer match.
    pub mismatches: Vec<String>,
}

impl VerifiedRun {
    pub fn intact(&self) -> bool {
        self.mismatches.is_empty()
    }
}

pub fn report(dir: &Path) -> Result<VerifiedRun> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    let mut mismatches = Vec::new();
    for f in &manifest.files {
        match file_entry(dir, &f.path) {
            Ok(now) if now == *f => {}
            Ok(_) => mismatches.push(f.path.clone()),
            Err(_) => mismatches.push(format!("{} (missing)", f.path)),
        }
    }
    Ok(VerifiedRun { manifest, mismatches })
}

/// Worker count from [`WORKERS_ENV`], defaulting to the available cores.
pub fn worker_count() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub key: String,
    pub ell: u32,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    CheckFailed,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    #[serde(flatten)]
    pub cell: SweepCell,
    pub status: CellStatus,
    pub error: Option<String>,
    pub p_final: Option<f64>,
    pub uncertainty: Option<f64>,
    pub expected: Option<f64>,
    pub tolerance: Option<f64>,
    pub run_dir: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub config_hash: String,
    pub workers: usize,
    pub cells: Vec<CellResult>,
}

impl SweepReport {
    /// 0 when every cell passed, 3 if any cell failed numerically, else 4.
    pub fn exit_code(&self) -> i32 {
        if self.cells.iter().any(|c| c.status == CellStatus::Failed) {
            3
        } else if self.cells.iter().any(|c| c.status == CellStatus::CheckFailed) {
            4
        } else {
            0
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub dir: PathBuf,
    pub report: SweepReport,
}

/// Cross product of the sweep ranges; an empty range keeps the base value.
pub fn sweep_cells(cfg: &ExperimentConfig) -> Result<Vec<SweepCell>> {
    let s = cfg.sweep.as_ref().ok_or_else(|| Error::Config("config has no [sweep] section".into()))?;
    let base_pert = cfg.background.perturbation.as_ref();
    let ells = if s.ell.is_empty() { vec![cfg.background.ell] } else { s.ell.clone() };
    let eps: Vec<Option<f64>> = if s.epsilon.is_empty() {
        vec![base_pert.map(|p| p.epsilon)]
    } else {
        s.epsilon.iter().map(|&e| Some(e)).collect()
    };
    let deltas: Vec<Option<f64>> = if s.delta.is_empty() {
        vec![base_pert.map(|p| p.decay_exponent)]
    } else {
        s.delta.iter().map(|&d| Some(d)).collect()
    };
    let hs = if s.h.is_empty() { vec![cfg.grid()?.h] } else { s.h.clone() };
    let mut cells = Vec::new();
    for &ell in &ells {
        for &epsilon in &eps {
            for &delta in &deltas {
                for &h in &hs {
                    let fmt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x}"));
                    let key = format!("ell={ell}_eps={}_delta={}_h={h}", fmt(epsilon), fmt(delta));
                    cells.push(SweepCell { key, ell, epsilon, delta, h });
                }
            }
        }
    }
    let num = |v: Option<f64>| v.unwrap_or(f64::NEG_INFINITY);
    cells.sort_by(|a, b| {
        a.ell
            .cmp(&b.ell)
            .then(num(a.epsilon).total_cmp(&num(b.epsilon)))
            .then(num(a.delta).total_cmp(&num(b.delta)))
            .then(b.h.total_cmp(&a.h))
    });
    Ok(cells)
}

/// Config of one sweep cell; `ε = 0` removes the perturbation.
pub fn cell_config(cfg: &ExperimentConfig, cell: &SweepCell) -> Result<ExperimentConfig> {
    let s = cfg.sweep.as_ref().ok_or_else(|| Error::Config("config has no [sweep] section".into()))?;
    let mut c = cfg.clone();
    c.sweep = None;
    c.background.ell = cell.ell;
    c.background.perturbation = match (cell.epsilon, cell.delta) {
        (Some(0.0), _) => None,
        (Some(epsilon), delta) => Some(PerturbationConfig {
            epsilon,
            decay_exponent: delta.unwrap_or(0.5),
            ..cfg.background.perturbation.clone().unwrap_or(PerturbationConfig {
                epsilon,
                decay_exponent: 0.5,
                kind: crate::evolver::PerturbationKind::Potential,
                window_half_width: 0.5,
            })
        }),
        (None, _) => None,
    };
    if let Some(g) = c.grid.as_mut() {
        // Keep the output interval fixed in time so fits see the same sample times.
        let ratio = g.h / cell.h;
        c.output.stride = ((cfg.output.stride as f64 * ratio).round() as usize).max(1);
        g.h = cell.h;
    }
    if !s.tolerance.is_empty() {
        let idx = s.ell.iter().position(|&l| l == cell.ell).unwrap_or(0);
        c.tail.expected = Some(-3.0 - 2.0 * cell.ell as f64);
        c.tail.tolerance = s.tolerance[idx.min(s.tolerance.len() - 1)];
    }
    c.validate()?;
    Ok(c)
}

fn run_cell(cfg: &ExperimentConfig, cell: &SweepCell, cells_dir: &Path) -> CellResult {
    let mut result = CellResult {
        cell: cell.clone(),
        status: CellStatus::Failed,
        error: None,
        p_final: None,
        uncertainty: None,
        expected: None,
        tolerance: None,
        run_dir: None,
    };
    let outcome = cell_config(cfg, cell).and_then(|c| {
        result.expected = c.tail.expected;
        result.tolerance = c.tail.expected.map(|_| c.tail.tolerance);
        let opts = RunOptions { in_place: true, output_root: Some(cells_dir.to_path_buf()) };
        let mut c = c;
        c.output.directory = cells_dir.display().to_string();
        run(&c, &opts)
    });
    match outcome {
        Ok(o) => {
            result.p_final = o.results.p_final();
            result.uncertainty = o.results.fits.first().map(|(_, f)| f.uncertainty);
            result.status = if o.manifest.passed() { CellStatus::Ok } else { CellStatus::CheckFailed };
            result.run_dir = o.dir.file_name().map(|n| format!("cells/{}", n.to_string_lossy()));
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    result
}

/// Run every sweep cell on a bounded pool and write `sweep.json` and
/// `convergence.csv`.
pub fn sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SweepOutcome> {
    cfg.validate()?;
    let cells = sweep_cells(cfg)?;
    let workers = worker_count()?;
    let hash = cfg.hash();
    let root = opts.output_root.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    let dir = fresh_dir(&root, &format!("sweep-{}", short_hash(&hash)), opts.in_place).stage("output")?;
    let cells_dir = dir.join("cells");
    fs::create_dir_all(&cells_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<CellResult> = pool.install(|| cells.par_iter().map(|c| run_cell(cfg, c, &cells_dir)).collect());
    let report = SweepReport { config_hash: hash, workers, cells: results };
    write_json(&dir, "sweep.json", &report, &mut Vec::new())?;
    fs::write(dir.join("convergence.csv"), convergence_csv(&report.cells))?;
    Ok(SweepOutcome { dir, report })
}

/// `ell,epsilon,delta,h,p_final,difference,ratio`: successive differences of
/// `p_final` under refinement and the ratio of consecutive differences.
pub fn convergence_csv(cells: &[CellResult]) -> String {
    let mut out = String::from("ell,epsilon,delta,h,p_final,difference,ratio\n");
    let mut groups: BTreeMap<String, Vec<&CellResult>> = BTreeMap::new();
    for c in cells {
        let key = format!("{}|{:?}|{:?}", c.cell.ell, c.cell.epsilon, c.cell.delta);
        groups.entry(key).or_default().push(c);
    }
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
    for group in groups.values() {
        let mut g = group.clone();
        g.sort_by(|a, b| b.cell.h.total_cmp(&a.cell.h));
        let mut prev_p: Option<f64> = None;
        let mut prev_d: Option<f64> = None;
        for c in g {
            let d = match (prev_p, c.p_final) {
                (Some(a), Some(b)) => Some((b - a).abs()),
                _ => None,
            };
            let ratio = match (prev_d, d) {
                (Some(a), Some(b)) if b > 0.0 => Some(a / b),
                _ => None,
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.cell.ell,
                opt(c.cell.epsilon),
                opt(c.cell.delta),
                c.cell.h,
                opt(c.p_final),
                opt(d),
                opt(ratio)
            ));
            prev_p = c.p_final;
            prev_d = d;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn self_check(name: &str, outcome: Result<(bool, String)>) -> SelfCheck {
    match outcome {
        Ok((passed, detail)) => SelfCheck { name: name.into(), passed, detail },
        Err(e) => SelfCheck { name: name.into(), passed: false, detail: e.to_string() },
    }
}

/// Fast internal consistency checks, one entry per check.
pub fn selftest() -> Vec<SelfCheck> {
    let mut out = Vec::new();
    out.push(self_check(
        "trapped root at 3M",
        (|| {
            let params = BlackHoleParams::schwarzschild(1.0)?;
            let r = geometry::trapped_root(&TrappedSetQuery { tau: 1.0, phi_freq: 0.5, params })?;
            Ok(((r - 3.0).abs() <= 1e-12, format!("r = {r:.15}")))
        })(),
    ));
    out.push(self_check(
        "reduction oracle",
        (|| {
            let src = ReductionSource::new("H = 1", |_, _| 1.0);
            let (t, r) = (3.0, 1.0);
            let v = reduction::oned_reduction(&src, t, r)?;
            let exact = (t * t - r * r) / 8.0;
            Ok(((v - exact).abs() <= 1e-10, format!("v = {v:.12}, exact {exact:.12}")))
        })(),
    ));
    out.push(self_check(
        "flat half-line Huygens",
        (|| {
            let traj = evolve(&huygens_setup(0.05))?;
            let late = traj.samples.iter().filter(|s| s.t > 40.0).map(|s| s.psi.abs()).fold(0.0, f64::max);
            Ok((late <= 1e-8, format!("post-passage max |psi| = {late:.3e}")))
        })(),
    ));
    out.push(self_check(
        "commutator order",
        (|| {
            let u = |t: f64, r: f64| (0.7 * t).sin() * (-(r - 6.0) * (r - 6.0) / 8.0).exp();
            let rep = analysis::commutator_residual_flat(&u, 1, &[(5.0, 6.0), (7.0, 4.0)], &[0.2, 0.1, 0.05], 2)?;
            let worst = rep.observed_orders.iter().copied().fold(f64::INFINITY, f64::min);
            Ok((worst >= 1.9, format!("observed orders {:?}", rep.observed_orders)))
        })(),
    ));
    out.push(self_check(
        "deterministic evolution",
        (|| {
            let setup = huygens_setup(0.1);
            let csv = |t: &Trajectory| -> Result<String> {
                let mut buf = Vec::new();
                t.write_csv(&mut buf)?;
                Ok(hex::encode(Sha256::digest(&buf)))
            };
            let (a, b) = (csv(&evolve(&setup)?)?, csv(&evolve(&setup)?)?);
            Ok((a == b, format!("sha256 {}", &a[..16])))
        })(),
    ));
    out
}

/// Flat `ℓ = 0` pulse that reflects through the origin and leaves `r = 5`.
pub fn huygens_setup(h: f64) -> Evolution {
    use crate::evolver::{GridSpec, OuterBoundary, StencilOrder};
    let grid = GridSpec {
        rstar_min: 0.0,
        rstar_max: 120.0,
        h,
        cfl: 0.5,
        t_max: 60.0,
        order: StencilOrder::Second,
        outer: OuterBoundary::Causal,
    };
    let mut ev = Evolution::new(grid, Background::FlatHalfLine { ell: 0 });
    ev.data = vec![InitialData::gaussian(20.0, 1.0, 1.0).with_velocity(Velocity::Static)];
    ev.observers = vec![Observer::fixed(5.0)];
    ev
}
