//! Gauss–Legendre rules and a composite integrator that sizes its panels
//! from the phase of an oscillating factor.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::error::Result;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Shared instance for `n` points.
    pub fn cached(n: usize) -> std::sync::Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, std::sync::Arc<GaussLegendre>>>> =
            OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        guard
            .entry(n)
            .or_insert_with(|| std::sync::Arc::new(GaussLegendre::new(n)))
            .clone()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }
}

// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
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

/// Panel layout for [`integrate_resolved`].
#[derive(Debug, Clone, Copy)]
pub struct PanelRule {
    /// Number of coarse intervals on which the phase is probed.
    pub coarse: usize,
    /// Largest phase advance allowed inside one Gauss panel.
    pub max_phase: f64,
    /// Gauss–Legendre order per panel.
    pub order: usize,
    /// Upper bound on panels per coarse interval.
    pub max_split: usize,
}

impl Default for PanelRule {
    fn default() -> Self {
        Self {
            coarse: 32,
            max_phase: std::f64::consts::FRAC_PI_2,
            order: 6,
            max_split: 4096,
        }
    }
}

impl PanelRule {
    pub fn scaled(mut self, scale: f64) -> Self {
        self.coarse = ((self.coarse as f64) * scale).ceil() as usize;
        self.max_phase /= scale;
        self
    }
}

/// Integrate over `[a, b]` a function whose evaluation also reports the phase
/// of its fastest oscillating factor. `eval(t)` returns `(phase, value)`. The
/// interval is cut into `coarse` pieces and each piece into enough Gauss
/// panels that the phase advances at most `max_phase` per panel.
pub fn integrate_resolved<F>(a: f64, b: f64, rule: PanelRule, mut eval: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    if b <= a {
        return Ok(0.0);
    }
    let gl = GaussLegendre::cached(rule.order);
    let n = rule.coarse.max(1);
    let step = (b - a) / n as f64;
    let mut phases = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = if i == n { b } else { a + i as f64 * step };
        phases.push(eval(t)?.0);
    }
    let mut total = 0.0;
    for i in 0..n {
        let lo = a + i as f64 * step;
        let hi = if i + 1 == n { b } else { lo + step };
        let dphi = (phases[i + 1] - phases[i]).abs();
        let split = ((dphi / rule.max_phase).ceil() as usize).clamp(1, rule.max_split);
        let w = (hi - lo) / split as f64;
        for j in 0..split {
            let pa = lo + j as f64 * w;
            let pb = if j + 1 == split { hi } else { pa + w };
            for (t, wt) in gl.mapped(pa, pb) {
                total += wt * eval(t)?.1;
            }
        }
    }
    Ok(total)
}

/// Composite Simpson weights for `n` uniformly spaced samples with spacing
/// `h`; falls back to the trapezoid rule on the last interval when `n` is
/// even.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(n >= 2);
    let mut w = vec![0.0; n];
    let simpson_len = if n % 2 == 1 { n } else { n - 1 };
    if simpson_len >= 3 {
        for (i, wi) in w.iter_mut().enumerate().take(simpson_len) {
            *wi = if i == 0 || i == simpson_len - 1 {
                h / 3.0
            } else if i % 2 == 1 {
                4.0 * h / 3.0
            } else {
                2.0 * h / 3.0
            };
        }
    }
    if simpson_len < n {
        w[n - 2] += 0.5 * h;
        w[n - 1] += 0.5 * h;
    }
    if simpson_len < 3 && n == 2 {
        w[0] = 0.5 * h;
        w[1] = 0.5 * h;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(6);
        let s: f64 = gl.mapped(0.0, 2.0).map(|(x, w)| w * x.powi(11)).sum();
        assert!((s - 2f64.powi(12) / 12.0).abs() < 1e-10);
        let wsum: f64 = gl.weights.iter().sum();
        assert!((wsum - 2.0).abs() < 1e-14);
    }

    #[test]
    fn resolved_integral_of_sinc_squared() {
        // int_0^X sinc^2(t) dt -> pi/2 - 1/(2X) approximately; compare with a
        // brute-force fine midpoint sum.
        let x_max = 200.0;
        let rule = PanelRule::default();
        let v = integrate_resolved(0.0, x_max, rule, |t: f64| {
            let s = if t == 0.0 { 1.0 } else { t.sin() / t };
            Ok((t, s * s))
        })
        .unwrap();
        let n = 2_000_000;
        let h = x_max / n as f64;
        let brute: f64 = (0..n)
            .map(|i| {
                let t = (i as f64 + 0.5) * h;
                let s = t.sin() / t;
                s * s * h
            })
            .sum();
        assert!((v - brute).abs() < 1e-7, "{v} vs {brute}");
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        for n in [5usize, 6, 9] {
            let h = 1.0 / (n - 1) as f64;
            let w = simpson_weights(n, h);
            let s: f64 = (0..n).map(|i| w[i] * (i as f64 * h).powi(2)).sum();
            let tol = if n % 2 == 1 { 1e-14 } else { 2e-3 };
            assert!((s - 1.0 / 3.0).abs() < tol, "n={n}: {s}");
        }
    }
}
