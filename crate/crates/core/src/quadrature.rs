//! Gauss-Legendre rules and adaptive tensor-product integration on rectangles.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    fn split(&self) -> [Rect; 4] {
        let xm = 0.5 * (self.x0 + self.x1);
        let ym = 0.5 * (self.y0 + self.y1);
        [
            Rect { x0: self.x0, x1: xm, y0: self.y0, y1: ym },
            Rect { x0: xm, x1: self.x1, y0: self.y0, y1: ym },
            Rect { x0: self.x0, x1: xm, y0: ym, y1: self.y1 },
            Rect { x0: xm, x1: self.x1, y0: ym, y1: self.y1 },
        ]
    }

    fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Tensor-product rule applied to one rectangle.
pub fn tensor_rule<F: Fn(f64, f64) -> f64>(f: &F, rect: &Rect, rule: &[(f64, f64)]) -> f64 {
    let hx = 0.5 * (rect.x1 - rect.x0);
    let hy = 0.5 * (rect.y1 - rect.y0);
    let mx = 0.5 * (rect.x1 + rect.x0);
    let my = 0.5 * (rect.y1 + rect.y0);
    let mut acc = 0.0;
    for &(xi, wi) in rule {
        let x = mx + hx * xi;
        let mut row = 0.0;
        for &(yj, wj) in rule {
            row += wj * f(x, my + hy * yj);
        }
        acc += wi * row;
    }
    acc * hx * hy
}

/// Composite rule on a uniform `panels × panels` subdivision.
pub fn composite_rule<F: Fn(f64, f64) -> f64>(f: &F, rect: &Rect, panels: usize, points: usize) -> f64 {
    let rule = gauss_legendre(points);
    let dx = (rect.x1 - rect.x0) / panels as f64;
    let dy = (rect.y1 - rect.y0) / panels as f64;
    let mut acc = 0.0;
    for i in 0..panels {
        for j in 0..panels {
            let cell = Rect {
                x0: rect.x0 + i as f64 * dx,
                x1: rect.x0 + (i + 1) as f64 * dx,
                y0: rect.y0 + j as f64 * dy,
                y1: rect.y0 + (j + 1) as f64 * dy,
            };
            acc += tensor_rule(f, &cell, &rule);
        }
    }
    acc
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub points: usize,
    pub max_panels: usize,
    /// Uniform pre-subdivision per side before adaptive refinement starts.
    pub initial_panels: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-8, abs_tol: 1e-300, points: 8, max_panels: 400_000, initial_panels: 4 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureResult {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

struct Panel {
    rect: Rect,
    value: f64,
    error: f64,
    id: u64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error).then_with(|| other.id.cmp(&self.id))
    }
}

fn refine<F: Fn(f64, f64) -> f64>(f: &F, rect: Rect, rule: &[(f64, f64)], id: &mut u64) -> Panel {
    let coarse = tensor_rule(f, &rect, rule);
    let fine: f64 = rect.split().iter().map(|c| tensor_rule(f, c, rule)).sum();
    *id += 1;
    Panel { rect, value: fine, error: (fine - coarse).abs(), id: *id }
}

/// Globally adaptive integration: the panel with the largest error estimate is
/// bisected in both directions until the summed estimate meets the tolerance.
///
/// Summation is over panels sorted by creation id, so results are bit-reproducible.
pub fn integrate_adaptive<F: Fn(f64, f64) -> f64>(
    f: &F,
    rect: Rect,
    opts: &AdaptiveOptions,
) -> Result<QuadratureResult> {
    if rect.area() == 0.0 {
        return Ok(QuadratureResult { value: 0.0, error: 0.0, panels: 0 });
    }
    let rule = gauss_legendre(opts.points);
    let mut id = 0u64;
    let mut heap = BinaryHeap::new();
    let n0 = opts.initial_panels.max(1);
    let dx = (rect.x1 - rect.x0) / n0 as f64;
    let dy = (rect.y1 - rect.y0) / n0 as f64;
    for i in 0..n0 {
        for j in 0..n0 {
            let cell = Rect {
                x0: rect.x0 + i as f64 * dx,
                x1: if i + 1 == n0 { rect.x1 } else { rect.x0 + (i + 1) as f64 * dx },
                y0: rect.y0 + j as f64 * dy,
                y1: if j + 1 == n0 { rect.y1 } else { rect.y0 + (j + 1) as f64 * dy },
            };
            heap.push(refine(f, cell, &rule, &mut id));
        }
    }
    let (mut value, mut error) = summed(&heap);
    loop {
        let target = (opts.rel_tol * value.abs()).max(opts.abs_tol);
        if error <= target {
            let (value, error) = summed(&heap);
            return Ok(QuadratureResult { value, error, panels: heap.len() });
        }
        if heap.len() + 3 > opts.max_panels {
            return Err(Error::ToleranceNotMet { panels: heap.len(), estimate: value, error });
        }
        let worst = heap.pop().expect("non-empty heap");
        value -= worst.value;
        error -= worst.error;
        for child in worst.rect.split() {
            let panel = refine(f, child, &rule, &mut id);
            value += panel.value;
            error += panel.error;
            heap.push(panel);
        }
        if heap.len() % 1024 == 0 {
            (value, error) = summed(&heap);
        }
    }
}

fn summed(heap: &BinaryHeap<Panel>) -> (f64, f64) {
    let mut panels: Vec<&Panel> = heap.iter().collect();
    panels.sort_by_key(|p| p.id);
    panels.iter().fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in 1..=12 {
            let rule = gauss_legendre(n);
            let wsum: f64 = rule.iter().map(|r| r.1).sum();
            assert!((wsum - 2.0).abs() < 1e-13);
            // ∫ x^(2n-2) over [-1,1] = 2/(2n-1)
            let k = 2 * n - 2;
            let v: f64 = rule.iter().map(|&(x, w)| w * x.powi(k as i32)).sum();
            assert!((v - 2.0 / (k as f64 + 1.0)).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        let f = |x: f64, y: f64| (-((x - 0.3).powi(2) + (y - 0.7).powi(2)) * 400.0).exp();
        let rect = Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
        let res = integrate_adaptive(&f, rect, &AdaptiveOptions::default()).unwrap();
        let exact = std::f64::consts::PI / 400.0;
        assert!(((res.value - exact) / exact).abs() < 1e-8);
    }

    #[test]
    fn adaptive_budget_exceeded() {
        let f = |x: f64, y: f64| if x + y < 0.712_345 { 1.0 } else { 0.0 };
        let rect = Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
        let opts = AdaptiveOptions { rel_tol: 1e-14, max_panels: 200, ..Default::default() };
        assert!(matches!(integrate_adaptive(&f, rect, &opts), Err(Error::ToleranceNotMet { .. })));
    }
}
