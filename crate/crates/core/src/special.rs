//! Bessel functions needed by the step-index mode solver.
//!
//! `J_n` come from `libm` (fdlibm/musl ports). `K_0` and `K_1` use the
//! integral representation `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt`
//! evaluated with the trapezoidal rule, which converges geometrically for
//! this integrand (analytic and bounded in the strip |Im t| < pi/2).

pub fn bessel_j0(x: f64) -> f64 {
    libm::j0(x)
}

pub fn bessel_j1(x: f64) -> f64 {
    libm::j1(x)
}

pub fn bessel_j2(x: f64) -> f64 {
    libm::jn(2, x)
}

/// `exp(x) K_0(x)` and `exp(x) K_1(x)` for x > 0.
pub fn bessel_k01_scaled(x: f64) -> (f64, f64) {
    debug_assert!(x > 0.0);
    let h = 0.2 / x.sqrt().max(1.0);
    let t_max = (1.0 + 60.0 / x).acosh() + 1.0;
    let n = (t_max / h).ceil() as usize;
    let mut s0 = 0.5;
    let mut s1 = 0.5;
    for j in 1..=n {
        let t = j as f64 * h;
        let g = (-x * (t.cosh() - 1.0)).exp();
        s0 += g;
        s1 += g * t.cosh();
    }
    (s0 * h, s1 * h)
}

pub fn bessel_k0(x: f64) -> f64 {
    bessel_k01_scaled(x).0 * (-x).exp()
}

pub fn bessel_k1(x: f64) -> f64 {
    bessel_k01_scaled(x).1 * (-x).exp()
}

pub fn bessel_k2(x: f64) -> f64 {
    let (k0, k1) = bessel_k01_scaled(x);
    (k0 + 2.0 * k1 / x) * (-x).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from an independent arbitrary-precision evaluation.
    const K_REF: &[(f64, f64, f64)] = &[
        (1e-3, 7.0236888005623825, 999.9962381560855),
        (0.1, 2.4270690247020164, 9.853844780870606),
        (0.5, 0.9244190712276656, 1.6564411200033007),
        (1.0, 0.42102443824070823, 0.6019072301972346),
        (2.0, 0.1138938727495334, 0.13986588181652246),
        (5.0, 0.0036910983340425942, 0.004044613445452163),
        (10.0, 1.778006231616765e-05, 1.8648773453825585e-05),
        (30.0, 2.1324774964630563e-14, 2.1677320018915495e-14),
    ];

    #[test]
    fn modified_bessel_matches_reference() {
        for &(x, k0, k1) in K_REF {
            let e0 = (bessel_k0(x) - k0).abs() / k0;
            let e1 = (bessel_k1(x) - k1).abs() / k1;
            assert!(e0 < 1e-13, "K0({x}) rel err {e0:e}");
            assert!(e1 < 1e-13, "K1({x}) rel err {e1:e}");
        }
    }

    #[test]
    fn bessel_j_matches_reference() {
        let refs = [
            (0.5, 0.938469807240813, 0.24226845767487387),
            (3.0, -0.2600519549019335, 0.33905895852593654),
            (10.0, -0.24593576445134832, 0.04347274616886141),
        ];
        for (x, j0, j1) in refs {
            assert!((bessel_j0(x) - j0).abs() < 1e-15);
            assert!((bessel_j1(x) - j1).abs() < 1e-15);
            let j2 = 2.0 * j1 / x - j0;
            assert!((bessel_j2(x) - j2).abs() < 1e-14);
        }
    }

    #[test]
    fn k2_recurrence() {
        // K_2(1) = 1.6248388986351774
        assert!((bessel_k2(1.0) - 1.6248388986351774).abs() < 1e-13);
    }
}
