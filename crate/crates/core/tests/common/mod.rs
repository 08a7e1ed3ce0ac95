//! Independent arithmetic shared by the oracle and acceptance targets.
#![allow(dead_code)]

use tospdc::fiber_modes::{propagation_constant, FiberSpec, GridSpec, ModeId, ModeProfile};

/// `K_ν(w) = ∫₀^∞ exp(−w cosh t) cosh(νt) dt` by the trapezoid rule; the
/// error falls like `exp(−π²/h)` for this entire, rapidly decaying integrand.
pub fn bessel_k(nu: f64, w: f64) -> f64 {
    let h = 0.1;
    let t_max = (1.0 + 800.0 / w).acosh();
    let n = (t_max / h).ceil() as usize;
    let mut sum = 0.5 * (-w).exp();
    for j in 1..=n {
        let t = j as f64 * h;
        sum += (-w * t.cosh()).exp() * (nu * t).cosh();
    }
    sum * h
}

/// Classical hybrid-mode eigenvalue equation for azimuthal order 1 on the HE
/// branch, written in `u` with `w = √(V² − u²)`. Diverges where `J₁(u) = 0`.
pub fn he_equation(u: f64, v: f64, n1: f64, n2: f64) -> f64 {
    let w = (v * v - u * u).sqrt();
    let (j0, j1) = (libm::j0(u), libm::j1(u));
    let (k0, k1) = (bessel_k(0.0, w), bessel_k(1.0, w));
    let eta1 = (j0 - j1 / u) / (u * j1);
    let eta2 = (-k0 - k1 / w) / (w * k1);
    let d = (n2 / n1).powi(2);
    let r = (1.0 / (u * u) + 1.0 / (w * w)) * (1.0 / (u * u) + d / (w * w));
    eta1 + 0.5 * (1.0 + d) * eta2 + (0.25 * (1.0 - d).powi(2) * eta2 * eta2 + r).sqrt()
}

/// Effective indices of the HE₁ₘ modes, lowest order first, from a dense
/// sign-change scan of [`he_equation`] followed by bisection. Poles are
/// rejected by the size of the residual at the refined crossing.
pub fn scan_he_modes(radius: f64, lambda: f64, n1: f64, n2: f64, samples: usize) -> Vec<f64> {
    let k0 = 2.0 * std::f64::consts::PI / lambda;
    let v = k0 * radius * (n1 * n1 - n2 * n2).sqrt();
    let u_at = |j: usize| v * (j as f64 + 0.5) / samples as f64;
    let mut roots = Vec::new();
    let mut prev = he_equation(u_at(0), v, n1, n2);
    for j in 1..samples {
        let cur = he_equation(u_at(j), v, n1, n2);
        if prev.signum() != cur.signum() {
            let (mut a, mut b) = (u_at(j - 1), u_at(j));
            let fa = he_equation(a, v, n1, n2);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m == a || m == b {
                    break;
                }
                if he_equation(m, v, n1, n2).signum() == fa.signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
            let u = 0.5 * (a + b);
            if he_equation(u, v, n1, n2).abs() < 1e-3 {
                roots.push((n1 * n1 - (u / (k0 * radius)).powi(2)).sqrt());
            }
        }
        prev = cur;
    }
    roots
}

/// Five-point central difference of the exact propagation constant.
pub fn five_point(fiber: &FiberSpec, mode: ModeId, omega: f64, h: f64) -> f64 {
    let k = |d: f64| propagation_constant(fiber, mode, omega + d).unwrap();
    (k(-2.0 * h) - 8.0 * k(-h) + 8.0 * k(h) - k(2.0 * h)) / (12.0 * h)
}

/// Normalized Gaussian `exp(−ρ²/w²)` sampled on `grid`.
pub fn gaussian_profile(w: f64, grid: GridSpec) -> ModeProfile {
    let n = grid.points;
    let mut values = vec![0.0; n * n];
    for iy in 0..n {
        for ix in 0..n {
            let (x, y) = (grid.coord(ix), grid.coord(iy));
            values[iy * n + ix] = (-(x * x + y * y) / (w * w)).exp();
        }
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>() * grid.spacing().powi(2);
    for v in &mut values {
        *v /= norm.sqrt();
    }
    ModeProfile {
        mode: ModeId::HE11,
        grid,
        values,
    }
}
