//! Decay-exponent extraction: local power indices at fixed observers and
//! two-exponent envelope fits `|u| ≈ C ⟨t⟩^{−p_t} ⟨t−r⟩^{−p_u}` over the cone
//! decomposition.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::{bracket, cone_partition};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PowerIndexMethod {
    /// `p = d log|u| / d log t` by centred differences.
    LogDerivative,
    /// Least-squares slope of `log|u|` against `log t` over samples within
    /// `half_width` of each point in `log t`.
    WindowedSlope { half_width: f64 },
}

impl PowerIndexMethod {
    fn name(&self) -> &'static str {
        match self {
            Self::LogDerivative => "log_derivative",
            Self::WindowedSlope { .. } => "windowed_slope",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerIndexPoint {
    pub t: f64,
    pub p: f64,
}

fn check_series(t: &[f64], u: &[f64], needed: usize) -> Result<()> {
    if t.len() != u.len() {
        return Err(Error::InvalidSetup("time and value series differ in length".into()));
    }
    if t.len() < needed {
        return Err(Error::InsufficientSamples { needed, have: t.len() });
    }
    if !t.windows(2).all(|w| w[1] > w[0]) || t[0] <= 0.0 {
        return Err(Error::InvalidSetup("times must be positive and increasing".into()));
    }
    if let Some(k) = (1..u.len()).find(|&k| u[k] * u[k - 1] <= 0.0) {
        return Err(Error::SignChange(t[k]));
    }
    Ok(())
}

/// Signed local power index `p(t) = t u̇ / u` (so `u = t⁻³` gives `−3`).
pub fn local_power_index(t: &[f64], u: &[f64], method: PowerIndexMethod) -> Result<Vec<PowerIndexPoint>> {
    check_series(t, u, 3)?;
    let lt: Vec<f64> = t.iter().map(|x| x.ln()).collect();
    let lu: Vec<f64> = u.iter().map(|x| x.abs().ln()).collect();
    match method {
        PowerIndexMethod::LogDerivative => Ok((1..t.len() - 1)
            .map(|i| PowerIndexPoint { t: t[i], p: (lu[i + 1] - lu[i - 1]) / (lt[i + 1] - lt[i - 1]) })
            .collect()),
        PowerIndexMethod::WindowedSlope { half_width } => {
            let mut out = Vec::new();
            let mut lo = 0;
            let mut hi = 0;
            for i in 0..t.len() {
                while lt[i] - lt[lo] > half_width {
                    lo += 1;
                }
                while hi + 1 < t.len() && lt[hi + 1] - lt[i] <= half_width {
                    hi += 1;
                }
                // Only full windows, so edge points do not see a one-sided fit.
                if lo == 0 && lt[i] - lt[0] < half_width || hi + 1 == t.len() && lt[t.len() - 1] - lt[i] < half_width {
                    continue;
                }
                if hi - lo + 1 >= 3 {
                    out.push(PowerIndexPoint { t: t[i], p: slope(&lt[lo..=hi], &lu[lo..=hi]) });
                }
            }
            if out.is_empty() {
                return Err(Error::InsufficientSamples { needed: 3, have: t.len() });
            }
            Ok(out)
        }
    }
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Least-squares slope of `log|u|` against `log t` over `t ∈ [t0, t1]`.
pub fn power_law_slope(t: &[f64], u: &[f64], window: (f64, f64)) -> Result<f64> {
    let (ts, us): (Vec<f64>, Vec<f64>) =
        t.iter().zip(u).filter(|(x, _)| **x >= window.0 && **x <= window.1).map(|(a, b)| (*a, *b)).unzip();
    check_series(&ts, &us, 3)?;
    let lt: Vec<f64> = ts.iter().map(|x| x.ln()).collect();
    let lu: Vec<f64> = us.iter().map(|x| x.abs().ln()).collect();
    Ok(slope(&lt, &lu))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub method: PowerIndexMethod,
    /// Explicit window; by default it starts `margin` after the last sign change.
    pub window: Option<(f64, f64)>,
    pub margin: f64,
    /// Largest allowed spread `max p − min p` over the window.
    pub plateau_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { method: PowerIndexMethod::LogDerivative, window: None, margin: 50.0, plateau_tolerance: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub method: PowerIndexMethod,
    pub p_series: Vec<PowerIndexPoint>,
    pub window: (f64, f64),
    /// Mean index over the window, present only when it plateaus.
    pub p_final: Option<f64>,
    /// Half of the index range over the window.
    pub uncertainty: f64,
    pub envelope: Option<EnvelopeFit>,
}

/// Time of the last sign change of `u`, if any.
pub fn last_sign_change(t: &[f64], u: &[f64]) -> Option<f64> {
    (1..u.len()).rev().find(|&k| u[k] * u[k - 1] <= 0.0).map(|k| t[k])
}

pub fn fit_decay(t: &[f64], u: &[f64], opts: &FitOptions) -> Result<DecayFit> {
    let t_end = *t.last().ok_or(Error::InsufficientSamples { needed: 3, have: 0 })?;
    let window = opts.window.unwrap_or_else(|| {
        let start = last_sign_change(t, u).map_or(t[0], |ts| ts + opts.margin);
        (start, t_end)
    });
    let (ts, us): (Vec<f64>, Vec<f64>) =
        t.iter().zip(u).filter(|(x, _)| **x >= window.0 && **x <= window.1).map(|(a, b)| (*a, *b)).unzip();
    let p_series = local_power_index(&ts, &us, opts.method)?;
    let (lo, hi) = p_series.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), q| (a.min(q.p), b.max(q.p)));
    let mean = p_series.iter().map(|q| q.p).sum::<f64>() / p_series.len() as f64;
    let uncertainty = 0.5 * (hi - lo);
    let p_final = (hi - lo < opts.plateau_tolerance).then_some(mean);
    Ok(DecayFit { method: opts.method, p_series, window, p_final, uncertainty, envelope: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeSample {
    pub t: f64,
    /// Normalised radial coordinate used for `t − r`.
    pub r_star: f64,
    /// Areal radius used for `⟨r⟩`.
    pub r: f64,
    /// `|u|` or `|∇u|`.
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeModel {
    /// `C ⟨τ⟩^{−p_t} ⟨t−r⟩^{−p_u}`.
    Field,
    /// `C ⟨r⟩^{−1} ⟨t−r⟩^{−p_u}`.
    Gradient,
}

/// Time variable `τ` of the field model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeWeight {
    /// `τ = t`.
    Time,
    /// `τ = t + r`, comparable to `t` inside the cone (`t ≤ t + r ≤ 2t`).
    Advanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeOptions {
    pub model: EnvelopeModel,
    pub time_weight: TimeWeight,
    /// Smallest slab scale `T`; slabs are `[T, 2T]` for `T = T₀ 2^k`.
    pub min_slab: f64,
    /// Keep only samples with `r ≥ t/2`, away from the interior.
    pub outer_cone_only: bool,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        Self { model: EnvelopeModel::Field, time_weight: TimeWeight::Advanced, min_slab: 32.0, outer_cone_only: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlabSupremum {
    pub observer: usize,
    #[serde(rename = "T")]
    pub t_scale: f64,
    pub t: f64,
    pub r_star: f64,
    pub r: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeFit {
    pub model: EnvelopeModel,
    pub p_t: Option<f64>,
    pub p_u: f64,
    #[serde(rename = "C")]
    pub c: f64,
    /// Largest absolute residual in `log` space.
    pub residual: f64,
    pub points: Vec<SlabSupremum>,
}

/// Suprema of each observer's samples over each cone region of each slab.
pub fn slab_suprema(observers: &[Vec<EnvelopeSample>], opts: &EnvelopeOptions) -> Result<Vec<SlabSupremum>> {
    let t_end = observers.iter().flat_map(|o| o.iter().map(|s| s.t)).fold(0.0, f64::max);
    let mut out = Vec::new();
    let mut ts = opts.min_slab;
    while 2.0 * ts <= t_end * (1.0 + 1e-12) {
        let regions = cone_partition(ts)?;
        for (k, obs) in observers.iter().enumerate() {
            let mut best: Vec<Option<SlabSupremum>> = vec![None; regions.len()];
            for s in obs {
                if opts.outer_cone_only && s.r_star < 0.5 * s.t - 1e-9 {
                    continue;
                }
                let Some(idx) = regions.iter().position(|g| g.contains(s.t, s.r_star)) else { continue };
                if s.value.is_finite() && best[idx].is_none_or(|b| s.value > b.value) {
                    best[idx] = Some(SlabSupremum {
                        observer: k,
                        t_scale: ts,
                        t: s.t,
                        r_star: s.r_star,
                        r: s.r,
                        value: s.value,
                    });
                }
            }
            out.extend(best.into_iter().flatten().filter(|b| b.value > 0.0));
        }
        ts *= 2.0;
    }
    Ok(out)
}

/// Log-linear least squares of the envelope model over per-slab suprema.
pub fn envelope_fit(observers: &[Vec<EnvelopeSample>], opts: &EnvelopeOptions) -> Result<EnvelopeFit> {
    let points = slab_suprema(observers, opts)?;
    let distinct = {
        let mut o: Vec<usize> = points.iter().map(|p| p.observer).collect();
        o.dedup();
        o.sort_unstable();
        o.dedup();
        o.len()
    };
    let cols = match opts.model {
        EnvelopeModel::Field => 3,
        EnvelopeModel::Gradient => 2,
    };
    if points.len() < cols + 1 {
        return Err(Error::InsufficientSamples { needed: cols + 1, have: points.len() });
    }
    if opts.model == EnvelopeModel::Field && distinct < 2 {
        return Err(Error::RankDeficient("one observer cannot separate t from t − r".into()));
    }
    let mut a = DMatrix::zeros(points.len(), cols);
    let mut b = DVector::zeros(points.len());
    for (row, p) in points.iter().enumerate() {
        let lu = bracket(p.t - p.r_star).ln();
        a[(row, 0)] = 1.0;
        match opts.model {
            EnvelopeModel::Field => {
                let tau = match opts.time_weight {
                    TimeWeight::Time => p.t,
                    TimeWeight::Advanced => p.t + p.r_star,
                };
                a[(row, 1)] = -bracket(tau).ln();
                a[(row, 2)] = -lu;
                b[row] = p.value.ln();
            }
            EnvelopeModel::Gradient => {
                a[(row, 1)] = -lu;
                b[row] = (p.value * bracket(p.r)).ln();
            }
        }
    }
    // Column scaling keeps the conditioning test meaningful.
    let scales: Vec<f64> = (0..cols).map(|j| a.column(j).norm().max(f64::MIN_POSITIVE)).collect();
    for (j, s) in scales.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-9 * smax) {
        return Err(Error::RankDeficient(format!("singular values {smin:e} / {smax:e}")));
    }
    let x = svd.solve(&b, 1e-12 * smax).map_err(|e| Error::RankDeficient(e.to_string()))?;
    let residual = (&a * &x - &b).amax();
    let coef: Vec<f64> = x.iter().zip(&scales).map(|(v, s)| v / s).collect();
    let (p_t, p_u) = match opts.model {
        EnvelopeModel::Field => (Some(coef[1]), coef[2]),
        EnvelopeModel::Gradient => (None, coef[1]),
    };
    Ok(EnvelopeFit { model: opts.model, p_t, p_u, c: coef[0].exp(), residual, points })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeSummary {
    pub p_t: Option<f64>,
    pub p_u: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub residual: f64,
}

/// JSON fit record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub run_id: String,
    pub observer: f64,
    pub method: String,
    pub window: (f64, f64),
    pub p_final: Option<f64>,
    pub uncertainty: f64,
    pub envelope: Option<EnvelopeSummary>,
}

impl FitReport {
    pub fn new(run_id: &str, observer: f64, fit: &DecayFit) -> Self {
        Self {
            run_id: run_id.to_string(),
            observer,
            method: fit.method.name().to_string(),
            window: fit.window,
            p_final: fit.p_final,
            uncertainty: fit.uncertainty,
            envelope: fit.envelope.as_ref().map(|e| EnvelopeSummary {
                p_t: e.p_t,
                p_u: e.p_u,
                c: e.c,
                residual: e.residual,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn exact_power_law() {
        let t = grid(10.0, 600.0, 600);
        let u: Vec<f64> = t.iter().map(|x| x.powi(-3)).collect();
        for q in local_power_index(&t, &u, PowerIndexMethod::LogDerivative).unwrap() {
            assert!((q.p + 3.0).abs() < 1e-10);
        }
        for q in local_power_index(&t, &u, PowerIndexMethod::WindowedSlope { half_width: 0.1 }).unwrap() {
            assert!((q.p + 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn corrected_power_law_matches_closed_form() {
        let t = grid(50.0, 200.0, 15_001);
        let u: Vec<f64> = t.iter().map(|x| x.powi(-3) * (1.0 + 10.0 / x)).collect();
        let ps = local_power_index(&t, &u, PowerIndexMethod::LogDerivative).unwrap();
        let at100 = ps.iter().find(|q| (q.t - 100.0).abs() < 1e-9).unwrap();
        let exact = -3.0 - (10.0 / 100.0) / (1.0 + 10.0 / 100.0);
        assert!((at100.p - exact).abs() < 1e-6);
        assert!((exact + 3.0909).abs() < 1e-4);
    }

    #[test]
    fn sign_change_and_short_series() {
        let t = [1.0, 2.0, 3.0, 4.0];
        assert!(matches!(
            local_power_index(&t, &[1.0, 0.5, -0.1, -0.05], PowerIndexMethod::LogDerivative),
            Err(Error::SignChange(_))
        ));
        assert!(matches!(
            local_power_index(&t[..2], &[1.0, 0.5], PowerIndexMethod::LogDerivative),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn automatic_window_skips_ringing() {
        let t = grid(1.0, 600.0, 6000);
        let u: Vec<f64> = t.iter().map(|&x| if x < 100.0 { (x / 5.0).sin() } else { x.powi(-3) }).collect();
        let fit = fit_decay(&t, &u, &FitOptions::default()).unwrap();
        let change = last_sign_change(&t, &u).unwrap();
        assert!((fit.window.0 - (change + 50.0)).abs() < 1e-12);
        assert!((fit.p_final.unwrap() + 3.0).abs() < 1e-8);
    }

    #[test]
    fn plateau_not_reported_while_drifting() {
        let t = grid(2.0, 40.0, 400);
        let u: Vec<f64> = t.iter().map(|x| x.powi(-3) + x.powi(-5)).collect();
        let opts = FitOptions { plateau_tolerance: 0.05, ..Default::default() };
        assert!(fit_decay(&t, &u, &opts).unwrap().p_final.is_none());
        let ps = local_power_index(&t, &u, PowerIndexMethod::LogDerivative).unwrap();
        assert!(ps.windows(2).all(|w| w[1].p > w[0].p && w[1].p < -3.0));
    }

    fn cone_samples<F: Fn(f64, f64) -> f64>(f: F) -> Vec<Vec<EnvelopeSample>> {
        let rays: [&dyn Fn(f64) -> f64; 3] = [&|t| t / 2.0, &|t| t - 20.0, &|t| t - 100.0];
        rays.iter()
            .map(|ray| {
                grid(1.0, 1024.0, 4000)
                    .into_iter()
                    .map(|t| EnvelopeSample { t, r_star: ray(t), r: ray(t), value: f(t, ray(t)) })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn envelope_recovers_field_model() {
        let obs = cone_samples(|t, r| 1.0 / (t * bracket(t - r).powi(2)));
        let opts = EnvelopeOptions { time_weight: TimeWeight::Time, ..Default::default() };
        let fit = envelope_fit(&obs, &opts).unwrap();
        assert!((fit.p_t.unwrap() - 1.0).abs() < 0.01, "{fit:?}");
        assert!((fit.p_u - 2.0).abs() < 0.01);
    }

    #[test]
    fn envelope_recovers_gradient_model() {
        let obs = cone_samples(|t, r| 1.0 / (bracket(r) * bracket(t - r).powi(3)));
        let opts = EnvelopeOptions { model: EnvelopeModel::Gradient, ..Default::default() };
        let fit = envelope_fit(&obs, &opts).unwrap();
        assert!((fit.p_u - 3.0).abs() < 0.01);
        assert!(fit.p_t.is_none());
    }

    #[test]
    fn single_observer_is_rank_deficient() {
        let obs = cone_samples(|t, r| 1.0 / (t * bracket(t - r).powi(2)));
        assert!(matches!(envelope_fit(&obs[1..2], &EnvelopeOptions::default()), Err(Error::RankDeficient(_))));
    }
}
