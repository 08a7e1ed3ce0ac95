//! Effective interaction areas and nonlinear coefficients.

use crate::constants::Constants;
use crate::error::{Error, Result};
use crate::fiber_modes::{radial_rule, FiberSpec, ModeField, ModeId, ModeProfile};

/// Third-order susceptibility χ⁽³⁾ in m²/V².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi3(f64);

impl Chi3 {
    /// Silica value matching a Kerr index n₂ ≈ 2.6 × 10⁻²⁰ m²/W.
    pub const SILICA: Chi3 = Chi3(2.5e-22);

    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(Self(value))
        } else {
            Err(Error::InvalidInput(format!("chi3 = {value} must be positive")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Chi3 {
    fn default() -> Self {
        Self::SILICA
    }
}

// Below this fraction of the Cauchy–Schwarz bound an overlap is treated as
// zero; the inverse would be dominated by discretization noise.
const OVERLAP_FLOOR: f64 = 1e-3;

fn check_grids(profiles: &[&ModeProfile]) -> Result<()> {
    let g = profiles[0].grid;
    if profiles
        .iter()
        .any(|p| p.grid != g || p.values.len() != g.points * g.points)
    {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

// 1 / |Σ Π A_k ΔxΔy|, guarded against near-orthogonal overlaps.
fn inverse_overlap(profiles: &[&ModeProfile]) -> Result<f64> {
    check_grids(profiles)?;
    let da = profiles[0].cell_area();
    let n = profiles[0].values.len();
    let mut overlap = 0.0;
    for idx in 0..n {
        overlap += profiles.iter().map(|p| p.values[idx]).product::<f64>();
    }
    overlap *= da;
    let bound: f64 = profiles
        .iter()
        .map(|p| (p.values.iter().map(|v| v.powi(4)).sum::<f64>() * da).powf(0.25))
        .product();
    if !(overlap.abs() >= OVERLAP_FLOOR * bound) {
        return Err(Error::DegenerateOverlap { overlap });
    }
    Ok(1.0 / overlap.abs())
}

/// Four-field area `1 / |∫∫ A_p A_r A_s A_i dA|` from sampled profiles.
pub fn effective_area_tospdc(
    p: &ModeProfile,
    r: &ModeProfile,
    s: &ModeProfile,
    i: &ModeProfile,
) -> Result<f64> {
    inverse_overlap(&[p, r, s, i])
}

/// `1 / ∫∫ A_p⁴ dA`.
pub fn effective_area_self(p: &ModeProfile) -> Result<f64> {
    inverse_overlap(&[p, p, p, p])
}

/// `1 / ∫∫ A_p² A_μ² dA`.
pub fn effective_area_cross(p: &ModeProfile, mu: &ModeProfile) -> Result<f64> {
    inverse_overlap(&[p, p, mu, mu])
}

// ⟨cos^k 2φ⟩ over a period, k = 0..4.
const COS_MOMENTS: [f64; 5] = [1.0, 0.0, 0.5, 0.0, 0.375];

/// Four-field overlap `∫∫ Π E_x dA` evaluated with the radial quadrature
/// and exact azimuthal averages of the `cos 2φ` terms.
pub fn overlap_radial(fields: [&ModeField; 4]) -> f64 {
    let radius = fields[0].radius();
    let w_min = fields
        .iter()
        .map(|f| f.uw().1)
        .fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    for (rho, wt) in radial_rule(radius, w_min) {
        // Coefficients of the product polynomial in c = cos 2φ.
        let mut poly = [1.0, 0.0, 0.0, 0.0, 0.0];
        for (deg, f) in fields.iter().enumerate() {
            let (f0, f2) = f.radial(rho);
            for k in (0..=deg + 1).rev() {
                let lower = if k > 0 { poly[k - 1] } else { 0.0 };
                poly[k] = poly[k] * f0 + lower * f2;
            }
        }
        let avg: f64 = poly.iter().zip(COS_MOMENTS).map(|(c, m)| c * m).sum();
        total += wt * avg;
    }
    2.0 * std::f64::consts::PI * total
}

fn inverse_radial(fields: [&ModeField; 4]) -> Result<f64> {
    let overlap = overlap_radial(fields);
    let bound: f64 = fields
        .iter()
        .map(|f| overlap_radial([f, f, f, f]).powf(0.25))
        .product();
    if !(overlap.abs() >= OVERLAP_FLOOR * bound) {
        return Err(Error::DegenerateOverlap { overlap });
    }
    Ok(1.0 / overlap.abs())
}

pub fn effective_area_tospdc_radial(
    p: &ModeField,
    r: &ModeField,
    s: &ModeField,
    i: &ModeField,
) -> Result<f64> {
    inverse_radial([p, r, s, i])
}

pub fn effective_area_self_radial(p: &ModeField) -> Result<f64> {
    inverse_radial([p, p, p, p])
}

pub fn effective_area_cross_radial(p: &ModeField, mu: &ModeField) -> Result<f64> {
    inverse_radial([p, p, mu, mu])
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} = {v} must be positive and finite")))
    }
}

/// `3χ⁽³⁾ω / (4ε₀c² n_a n_b A)` with explicit constants.
pub fn kerr_coefficient(k: &Constants, chi3: Chi3, omega: f64, n_a: f64, n_b: f64, area: f64) -> Result<f64> {
    check_positive("frequency", omega)?;
    check_positive("refractive index", n_a)?;
    check_positive("refractive index", n_b)?;
    check_positive("effective area", area)?;
    Ok(3.0 * chi3.value() * omega / (4.0 * k.eps0 * k.c * k.c * n_a * n_b * area))
}

/// TOSPDC coupling γ (1/(W·m)).
pub fn gamma_tospdc(chi3: Chi3, omega_p0: f64, n_p: f64, a_eff: f64) -> Result<f64> {
    kerr_coefficient(&Constants::SI, chi3, omega_p0, n_p, n_p, a_eff)
}

/// Pump self-phase coefficient γ_p.
pub fn gamma_self(chi3: Chi3, omega_p0: f64, n_p: f64, a_eff_p: f64) -> Result<f64> {
    kerr_coefficient(&Constants::SI, chi3, omega_p0, n_p, n_p, a_eff_p)
}

/// Pump-induced cross-phase coefficient γ_pμ for emission mode μ.
pub fn gamma_cross(chi3: Chi3, omega_mu0: f64, n_p: f64, n_mu0: f64, a_eff_pmu: f64) -> Result<f64> {
    kerr_coefficient(&Constants::SI, chi3, omega_mu0, n_p, n_mu0, a_eff_pmu)
}

/// All coefficients of one design point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearCoefficients {
    pub gamma: f64,
    pub gamma_p: f64,
    /// γ_pr, γ_ps, γ_pi.
    pub gamma_pmu: [f64; 3],
    pub a_eff: f64,
    pub a_eff_p: f64,
    pub a_eff_pmu: [f64; 3],
}

impl NonlinearCoefficients {
    /// Coefficients for a pump in HE₁₂ at `omega_p0` and emission in HE₁₁ at
    /// `omega_mu0`, each profile taken at its own center. Indices are those
    /// of the core material.
    pub fn compute(fiber: &FiberSpec, chi3: Chi3, omega_p0: f64, omega_mu0: [f64; 3]) -> Result<Self> {
        let pump = ModeField::new(fiber, ModeId::HE12, omega_p0)?;
        let mut emitted = Vec::with_capacity(3);
        for &w in &omega_mu0 {
            emitted.push(ModeField::new(fiber, ModeId::HE11, w)?);
        }
        let a_eff = effective_area_tospdc_radial(&pump, &emitted[0], &emitted[1], &emitted[2])?;
        let a_eff_p = effective_area_self_radial(&pump)?;
        let mut a_eff_pmu = [0.0; 3];
        for (a, f) in a_eff_pmu.iter_mut().zip(&emitted) {
            *a = effective_area_cross_radial(&pump, f)?;
        }
        Self::from_areas(fiber, chi3, omega_p0, omega_mu0, a_eff, a_eff_p, a_eff_pmu)
    }

    pub fn from_areas(
        fiber: &FiberSpec,
        chi3: Chi3,
        omega_p0: f64,
        omega_mu0: [f64; 3],
        a_eff: f64,
        a_eff_p: f64,
        a_eff_pmu: [f64; 3],
    ) -> Result<Self> {
        let n_p = fiber.core_index(omega_p0)?;
        let mut gamma_pmu = [0.0; 3];
        for k in 0..3 {
            let n_mu = fiber.core_index(omega_mu0[k])?;
            gamma_pmu[k] = gamma_cross(chi3, omega_mu0[k], n_p, n_mu, a_eff_pmu[k])?;
        }
        Ok(Self {
            gamma: gamma_tospdc(chi3, omega_p0, n_p, a_eff)?,
            gamma_p: gamma_self(chi3, omega_p0, n_p, a_eff_p)?,
            gamma_pmu,
            a_eff,
            a_eff_p,
            a_eff_pmu,
        })
    }

    /// Same design point with every coupling multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            gamma: self.gamma * factor,
            gamma_p: self.gamma_p * factor,
            gamma_pmu: self.gamma_pmu.map(|g| g * factor),
            ..*self
        }
    }
}

/// `Φ_NL = [γ_p − 2(γ_pr + γ_ps + γ_pi)] P` (rad/m) at peak power `peak_power`.
pub fn nonlinear_phase(c: &NonlinearCoefficients, peak_power: f64) -> f64 {
    (c.gamma_p - 2.0 * c.gamma_pmu.iter().sum::<f64>()) * peak_power
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::omega_from_wavelength;
    use crate::fiber_modes::{profile_from_field, GridSpec};

    #[test]
    fn radial_areas_at_design_radius() {
        let f = FiberSpec::silica_in_air(0.395_184_793e-6).unwrap();
        let wp = omega_from_wavelength(0.532e-6);
        let wi = wp / 3.0;
        let p = ModeField::new(&f, ModeId::HE12, wp).unwrap();
        let e = ModeField::new(&f, ModeId::HE11, wi).unwrap();
        let a = effective_area_tospdc_radial(&p, &e, &e, &e).unwrap();
        assert!((a * 1e12 - 5.34).abs() < 0.02, "{}", a * 1e12);
        let ap = effective_area_self_radial(&p).unwrap();
        assert!((ap * 1e12 - 0.5646).abs() < 0.003, "{}", ap * 1e12);
        let apr = effective_area_cross_radial(&p, &e).unwrap();
        assert!((apr * 1e12 - 1.362).abs() < 0.005, "{}", apr * 1e12);
        let self_norm = overlap_radial([&e, &e, &e, &e]).recip();
        let grid = GridSpec::for_fiber(&f);
        let pe = profile_from_field(&e, &grid).unwrap();
        let grid_area = effective_area_self(&pe).unwrap();
        assert!((grid_area / self_norm - 1.0).abs() < 1e-2, "{grid_area} {self_norm}");
    }

    #[test]
    fn coupling_is_inverse_in_area() {
        let g1 = gamma_tospdc(Chi3::SILICA, 3.5e15, 1.46, 1e-12).unwrap();
        let g2 = gamma_tospdc(Chi3::SILICA, 3.5e15, 1.46, 2e-12).unwrap();
        assert!((g1 / g2 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_positive_chi3() {
        assert!(Chi3::new(0.0).is_err());
        assert!(Chi3::new(-1.0).is_err());
    }
}
