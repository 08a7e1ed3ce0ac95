//! Brute-force cross-checks of the mode solver, the overlap integrals and the
//! dispersion tables against independent arithmetic written out here.

mod common;

use common::{five_point, gaussian_profile, scan_he_modes};
use tospdc::constants::omega_from_wavelength;
use tospdc::dispersion::SellmeierModel;
use tospdc::fiber_modes::{
    group_slowness, group_slowness_with_step, propagation_constant, solve_neff, FiberSpec, GridSpec, ModeDispersion,
    ModeId,
};
use tospdc::flux::h_factor;
use tospdc::nonlinearity::{effective_area_cross, effective_area_self, effective_area_tospdc};
use tospdc::phasematching::ProcessFrequencies;
use tospdc::triplet_state::SourceModel;

#[test]
fn silica_index_matches_written_out_malitson_formula() {
    let silica = SellmeierModel::fused_silica();
    for lam_um in [0.4, 0.532, 1.0, 1.55, 1.8, 3.0] {
        let l2 = lam_um * lam_um;
        let n2 = 1.0
            + 0.696_166_3 * l2 / (l2 - 0.068_404_3f64.powi(2))
            + 0.407_942_6 * l2 / (l2 - 0.116_241_4f64.powi(2))
            + 0.897_479_4 * l2 / (l2 - 9.896_161f64.powi(2));
        let n = silica.refractive_index(lam_um * 1e-6).unwrap();
        assert!((n - n2.sqrt()).abs() < 1e-12, "λ = {lam_um}: {n}");
    }
    let n = silica.refractive_index(1.55e-6).unwrap();
    assert!((n - 1.444).abs() < 1e-3);
}

#[test]
fn effective_index_matches_dense_characteristic_scan() {
    let cases = [
        (0.395_184_8e-6, 1.596e-6, ModeId::HE11, 0),
        (0.395_184_8e-6, 0.532e-6, ModeId::HE12, 1),
        (0.331e-6, 1.35e-6, ModeId::HE11, 0),
        (0.448e-6, 0.6e-6, ModeId::HE12, 1),
    ];
    for (radius, lambda, mode, index) in cases {
        let fiber = FiberSpec::silica_in_air(radius).unwrap();
        let omega = omega_from_wavelength(lambda);
        let n1 = fiber.core_index(omega).unwrap();
        let roots = scan_he_modes(radius, lambda, n1, 1.0, 1_000_000);
        let oracle = roots[index];
        let neff = solve_neff(&fiber, mode, omega).unwrap();
        assert!(
            (neff - oracle).abs() < 1e-8,
            "r = {radius}, λ = {lambda}, {mode}: solver {neff}, scan {oracle}"
        );
    }
}

#[test]
fn gaussian_areas_match_closed_form() {
    let w = 0.5e-6;
    let grid = GridSpec {
        points: 256,
        half_width: 5.0 * w,
    };
    let g = gaussian_profile(w, grid);
    let expected = std::f64::consts::PI * w * w;
    let a = effective_area_self(&g).unwrap();
    assert!((a / expected - 1.0).abs() < 5e-3, "{a} vs {expected}");
    let a = effective_area_tospdc(&g, &g, &g, &g).unwrap();
    assert!((a / expected - 1.0).abs() < 5e-3);
    // Unequal widths: 1 / ∫A²B² = π (w_a² + w_b²) / 2.
    let wide = gaussian_profile(2.0 * w, grid);
    let a = effective_area_cross(&g, &wide).unwrap();
    let expected = std::f64::consts::PI * (w * w + 4.0 * w * w) / 2.0;
    assert!((a / expected - 1.0).abs() < 5e-3, "{a} vs {expected}");
}

#[test]
fn group_slowness_agrees_with_finite_differences() {
    let fiber = FiberSpec::silica_in_air(0.395_184_8e-6).unwrap();
    for (mode, lambda) in [(ModeId::HE11, 1.596e-6), (ModeId::HE11, 1.3e-6), (ModeId::HE12, 0.532e-6)] {
        let omega = omega_from_wavelength(lambda);
        let oracle = five_point(&fiber, mode, omega, 1e-4 * omega);
        let k1 = group_slowness(&fiber, mode, omega).unwrap();
        assert!((k1 / oracle - 1.0).abs() < 1e-7, "{mode} at {lambda}: {k1} vs {oracle}");
        let table = ModeDispersion::build(&fiber, mode, 0.97 * omega, 1.03 * omega).unwrap();
        assert!((table.k_prime(omega) / oracle - 1.0).abs() < 1e-6);
        assert!((table.k(omega) / propagation_constant(&fiber, mode, omega).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn group_slowness_is_stable_under_step_halving() {
    let fiber = FiberSpec::silica_in_air(0.395_184_8e-6).unwrap();
    for (mode, lambda) in [(ModeId::HE11, 1.596e-6), (ModeId::HE12, 0.532e-6)] {
        let omega = omega_from_wavelength(lambda);
        let mut prev = group_slowness_with_step(&fiber, mode, omega, 4e-4).unwrap();
        for step in [2e-4, 1e-4, 5e-5, 2.5e-5] {
            let cur = group_slowness_with_step(&fiber, mode, omega, step).unwrap();
            assert!((cur / prev - 1.0).abs() < 1e-6, "{mode}, step {step}");
            prev = cur;
        }
    }
}

#[test]
fn h_factor_matches_direct_product() {
    let fiber = FiberSpec::silica_in_air(0.395_184_8e-6).unwrap();
    let w = [1.529_51e-6, 1.658_74e-6, 1.596e-6].map(omega_from_wavelength);
    let freqs = ProcessFrequencies::from_emission(w[0], w[1], w[2]).unwrap();
    let mut direct = 1.0;
    for &wm in &w {
        let n = fiber.core_index(wm).unwrap();
        direct *= five_point(&fiber, ModeId::HE11, wm, 1e-4 * wm) * wm / (n * n);
    }
    let h = h_factor(&fiber, &freqs).unwrap();
    assert!((h / direct - 1.0).abs() < 1e-6);
    let model = SourceModel::new(&fiber, 0.1, 23.5e9, freqs, 0.0, 1e13).unwrap();
    assert!((model.h([0.0; 3]) / direct - 1.0).abs() < 1e-6);
}
