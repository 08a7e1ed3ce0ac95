//! Physical constants (CODATA 2018, SI).

/// Speed of light in vacuum, m/s.
pub const C: f64 = 299_792_458.0;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Vacuum permittivity, F/m.
pub const EPS0: f64 = 8.854_187_812_8e-12;

/// Angular frequency (rad/s) of light with vacuum wavelength `lambda` (m).
#[inline]
pub fn omega_from_wavelength(lambda: f64) -> f64 {
    2.0 * std::f64::consts::PI * C / lambda
}

/// Vacuum wavelength (m) for angular frequency `omega` (rad/s).
#[inline]
pub fn wavelength_from_omega(omega: f64) -> f64 {
    2.0 * std::f64::consts::PI * C / omega
}

/// The three constants that enter the rate and coupling formulas, bundled so
/// the closed-form expressions can be evaluated in any consistent unit system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub c: f64,
    pub hbar: f64,
    pub eps0: f64,
}

impl Constants {
    pub const SI: Constants = Constants {
        c: C,
        hbar: HBAR,
        eps0: EPS0,
    };
}

impl Default for Constants {
    fn default() -> Self {
        Self::SI
    }
}
