//! Hybrid HE₁ₘ modes of a step-index cylindrical fiber with a dispersive core.

use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::chebyshev::ChebyshevTable;
use crate::constants::{wavelength_from_omega, C};
use crate::dispersion::SellmeierModel;
use crate::error::{Error, Result};
use crate::output::write_row;
use crate::quadrature::GaussLegendre;
use crate::roots::brent;
use crate::special::{bessel_j0, bessel_j1, bessel_j2, bessel_k01_scaled};

/// Points of the uniform scan used to bracket eigenvalues.
const SCAN_POINTS: usize = 2000;
/// Margin kept from the cladding and core indices when scanning.
const SCAN_MARGIN: f64 = 1e-9;

/// Cylindrical core of radius `radius` (m) in a homogeneous cladding.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberSpec {
    pub radius: f64,
    pub core: SellmeierModel,
    pub cladding_index: f64,
}

impl FiberSpec {
    pub fn new(radius: f64, core: SellmeierModel, cladding_index: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidInput(format!("fiber radius {radius} m must be positive")));
        }
        if !(cladding_index >= 1.0 && cladding_index.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "cladding index {cladding_index} must be at least 1"
            )));
        }
        Ok(Self {
            radius,
            core,
            cladding_index,
        })
    }

    /// Fused-silica core in air.
    pub fn silica_in_air(radius: f64) -> Result<Self> {
        Self::new(radius, SellmeierModel::fused_silica(), 1.0)
    }

    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Self::new(radius, self.core.clone(), self.cladding_index)
    }

    pub fn core_index(&self, omega: f64) -> Result<f64> {
        self.core.refractive_index_at_omega(omega)
    }
}

/// HE₁ₘ mode label; only m = 1 and m = 2 are used by the process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeId {
    radial: u8,
}

impl ModeId {
    pub const HE11: ModeId = ModeId { radial: 1 };
    pub const HE12: ModeId = ModeId { radial: 2 };

    pub fn he1(radial: u8) -> Result<Self> {
        match radial {
            1 | 2 => Ok(Self { radial }),
            _ => Err(Error::InvalidInput(format!("unsupported mode HE1{radial}"))),
        }
    }

    pub fn radial(self) -> u8 {
        self.radial
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HE1{}", self.radial)
    }
}

/// Normalized modal parameters at one effective index.
#[derive(Debug, Clone, Copy)]
struct Modal {
    u: f64,
    w: f64,
    delta: f64,
}

impl Modal {
    fn new(fiber: &FiberSpec, n_core: f64, omega: f64, neff: f64) -> Self {
        let k0r = omega / C * fiber.radius;
        let n2 = fiber.cladding_index;
        Self {
            u: k0r * (n_core * n_core - neff * neff).sqrt(),
            w: k0r * (neff * neff - n2 * n2).sqrt(),
            delta: (n2 * n2) / (n_core * n_core),
        }
    }

    // K₁′(W) / (W K₁(W)).
    fn k_ratio(&self) -> f64 {
        let (k0, k1) = bessel_k01_scaled(self.w);
        -(k0 + k1 / self.w) / (self.w * k1)
    }

    // J₁′(U) / (U J₁(U)), singular where J₁ vanishes.
    fn j_ratio(&self) -> f64 {
        let j1 = bessel_j1(self.u);
        (bessel_j0(self.u) - j1 / self.u) / (self.u * j1)
    }

    /// The azimuthal-order-1 eigenvalue equation restricted to its HE branch
    /// and multiplied through by J₁(U), so it has no poles in (n₂, n₁).
    fn he_function(&self) -> f64 {
        let (u, w, d) = (self.u, self.w, self.delta);
        let b = self.k_ratio();
        let r = (1.0 / (u * u) + 1.0 / (w * w)) * (1.0 / (u * u) + d / (w * w));
        let root = (0.25 * b * b * (1.0 - d) * (1.0 - d) + r).sqrt();
        bessel_j0(u) / u + bessel_j1(u) * (-1.0 / (u * u) + 0.5 * b * (1.0 + d) + root)
    }
}

/// HE-branch characteristic function at trial index `neff`; zero at the
/// eigenvalues.
pub fn characteristic_function(fiber: &FiberSpec, omega: f64, neff: f64) -> Result<f64> {
    let n_core = fiber.core_index(omega)?;
    if !(neff > fiber.cladding_index && neff < n_core) {
        return Err(Error::InvalidInput(format!(
            "trial index {neff} outside the guidance window ({}, {n_core})",
            fiber.cladding_index
        )));
    }
    Ok(Modal::new(fiber, n_core, omega, neff).he_function())
}

/// Effective index of `mode` at angular frequency `omega`.
pub fn solve_neff(fiber: &FiberSpec, mode: ModeId, omega: f64) -> Result<f64> {
    let n_core = fiber.core_index(omega)?;
    let not_guided = || Error::ModeNotGuided {
        radial: mode.radial,
        radius_um: fiber.radius * 1e6,
        wavelength_um: wavelength_from_omega(omega) * 1e6,
    };
    let lo = fiber.cladding_index + SCAN_MARGIN;
    let hi = n_core - SCAN_MARGIN;
    if hi <= lo {
        return Err(not_guided());
    }
    let g = |n: f64| Modal::new(fiber, n_core, omega, n).he_function();
    let step = (hi - lo) / (SCAN_POINTS - 1) as f64;
    let mut found = 0u8;
    let mut prev_n = hi;
    let mut prev_g = g(hi);
    for i in 1..SCAN_POINTS {
        let n = if i == SCAN_POINTS - 1 { lo } else { hi - i as f64 * step };
        let gn = g(n);
        if prev_g == 0.0 || prev_g.signum() != gn.signum() {
            found += 1;
            if found == mode.radial {
                return brent(|x| Ok(g(x)), n, prev_n, 1e-15);
            }
        }
        prev_n = n;
        prev_g = gn;
    }
    Err(not_guided())
}

/// `k = n_eff ω / c` (rad/m).
pub fn propagation_constant(fiber: &FiberSpec, mode: ModeId, omega: f64) -> Result<f64> {
    Ok(solve_neff(fiber, mode, omega)? * omega / C)
}

/// dk/dω (s/m) by a central difference with relative step `rel_step`,
/// improved by one Richardson extrapolation.
pub fn group_slowness_with_step(
    fiber: &FiberSpec,
    mode: ModeId,
    omega: f64,
    rel_step: f64,
) -> Result<f64> {
    let h = rel_step * omega;
    let d = |h: f64| -> Result<f64> {
        let kp = propagation_constant(fiber, mode, omega + h)?;
        let km = propagation_constant(fiber, mode, omega - h)?;
        Ok((kp - km) / (2.0 * h))
    };
    let d1 = d(h)?;
    let d2 = d(0.5 * h)?;
    Ok((4.0 * d2 - d1) / 3.0)
}

pub fn group_slowness(fiber: &FiberSpec, mode: ModeId, omega: f64) -> Result<f64> {
    group_slowness_with_step(fiber, mode, omega, 1e-5)
}

/// Dominant transverse field `E_x = f₀(ρ) + f₂(ρ) cos 2φ` of an x-polarized
/// HE₁ₘ mode, scaled so that `∫∫ E_x² dA = 1`.
#[derive(Debug, Clone)]
pub struct ModeField {
    pub mode: ModeId,
    pub omega: f64,
    pub n_eff: f64,
    radius: f64,
    u: f64,
    w: f64,
    a1: f64,
    a2: f64,
    j1u: f64,
    k1w_scaled: f64,
    scale: f64,
}

impl ModeField {
    pub fn new(fiber: &FiberSpec, mode: ModeId, omega: f64) -> Result<Self> {
        let n_eff = solve_neff(fiber, mode, omega)?;
        let n_core = fiber.core_index(omega)?;
        let modal = Modal::new(fiber, n_core, omega, n_eff);
        let (u, w) = (modal.u, modal.w);
        let f2 = (1.0 / (u * u) + 1.0 / (w * w)) / (modal.j_ratio() + modal.k_ratio());
        let mut field = Self {
            mode,
            omega,
            n_eff,
            radius: fiber.radius,
            u,
            w,
            a1: 0.5 * (f2 - 1.0),
            a2: 0.5 * (f2 + 1.0),
            j1u: bessel_j1(u),
            k1w_scaled: bessel_k01_scaled(w).1,
            scale: 1.0,
        };
        let power: f64 = radial_rule(fiber.radius, w)
            .iter()
            .map(|&(rho, wt)| {
                let (f0, f2) = field.radial(rho);
                wt * (f0 * f0 + 0.5 * f2 * f2)
            })
            .sum::<f64>()
            * 2.0
            * std::f64::consts::PI;
        field.scale = power.sqrt().recip();
        Ok(field)
    }

    /// Normalized transverse wavenumbers U and W.
    pub fn uw(&self) -> (f64, f64) {
        (self.u, self.w)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Radial coefficients `(f₀, f₂)` at distance `rho` (m) from the axis.
    pub fn radial(&self, rho: f64) -> (f64, f64) {
        let s = rho / self.radius;
        if s <= 1.0 {
            let x = self.u * s;
            let c = -self.scale / self.j1u;
            (c * self.a1 * bessel_j0(x), c * self.a2 * bessel_j2(x))
        } else {
            let x = self.w * s;
            let (k0, k1) = bessel_k01_scaled(x);
            let k2 = k0 + 2.0 * k1 / x;
            let c = -self.scale * (self.u / self.w) * (-(x - self.w)).exp() / self.k1w_scaled;
            (c * self.a1 * k0, -c * self.a2 * k2)
        }
    }

    /// `E_x` at transverse position `(x, y)` (m).
    pub fn ex(&self, x: f64, y: f64) -> f64 {
        let rho2 = x * x + y * y;
        let (f0, f2) = self.radial(rho2.sqrt());
        if rho2 == 0.0 {
            f0
        } else {
            f0 + f2 * (x * x - y * y) / rho2
        }
    }
}

/// Gauss nodes `(ρ, weight)` for `∫₀^∞ g(ρ) ρ dρ` over a core of radius
/// `radius` and an evanescent tail decaying like `exp(-w ρ / radius)`.
pub fn radial_rule(radius: f64, w: f64) -> Vec<(f64, f64)> {
    let gl = GaussLegendre::cached(16);
    let mut out = Vec::new();
    let core_panels = 8;
    for p in 0..core_panels {
        let a = radius * p as f64 / core_panels as f64;
        let b = radius * (p + 1) as f64 / core_panels as f64;
        out.extend(gl.mapped(a, b).map(|(x, wt)| (x, wt * x)));
    }
    // exp(-2 w (s - 1)) falls below 1e-20 by s - 1 = 23 / w.
    let panel = 0.5 / w;
    let panels = 48;
    for p in 0..panels {
        let a = radius * (1.0 + panel * p as f64);
        let b = radius * (1.0 + panel * (p + 1) as f64);
        out.extend(gl.mapped(a, b).map(|(x, wt)| (x, wt * x)));
    }
    out
}

/// Square Cartesian sampling window centered on the fiber axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub points: usize,
    pub half_width: f64,
}

impl GridSpec {
    /// 512 × 512 over ±10 r; the wide window keeps the slowly decaying
    /// HE₁₁ tail at long wavelengths inside the grid.
    pub fn for_fiber(fiber: &FiberSpec) -> Self {
        Self {
            points: 512,
            half_width: 10.0 * fiber.radius,
        }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    /// Cell-center coordinate of index `i`.
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            points: ((self.points as f64 * factor).round() as usize).max(8),
            half_width: self.half_width,
        }
    }
}

/// Sampled, discretely normalized `E_x` on a [`GridSpec`] (row-major in y).
#[derive(Debug, Clone)]
pub struct ModeProfile {
    pub mode: ModeId,
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ModeProfile {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.grid.points + ix]
    }

    pub fn cell_area(&self) -> f64 {
        self.grid.spacing().powi(2)
    }

    /// `Σ A² ΔxΔy`.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.cell_area()
    }
}

/// Sample `field` on `grid`. Cells straddling the core boundary, where `E_x`
/// jumps, take the RMS over an 8 × 8 sub-grid (signed like the mean), which
/// keeps the discrete norm second-order accurate.
pub fn sample_field(field: &ModeField, grid: &GridSpec) -> Vec<f64> {
    let n = grid.points;
    let dx = grid.spacing();
    let r = field.radius();
    (0..n)
        .into_par_iter()
        .flat_map_iter(|iy| {
            let y = grid.coord(iy);
            (0..n).map(move |ix| {
                let x = grid.coord(ix);
                let rho = (x * x + y * y).sqrt();
                if (rho - r).abs() < 0.75 * dx {
                    let sub = 8;
                    let mut s = 0.0;
                    let mut s2 = 0.0;
                    for j in 0..sub {
                        for i in 0..sub {
                            let xs = x + dx * ((i as f64 + 0.5) / sub as f64 - 0.5);
                            let ys = y + dx * ((j as f64 + 0.5) / sub as f64 - 0.5);
                            let v = field.ex(xs, ys);
                            s += v;
                            s2 += v * v;
                        }
                    }
                    let m = (sub * sub) as f64;
                    (s2 / m).sqrt().copysign(s)
                } else {
                    field.ex(x, y)
                }
            })
        })
        .collect()
}

/// Normalized profile of `mode`; fails with `GridTooCoarse` when the
/// discrete norm at half the resolution differs by more than 10⁻³.
pub fn mode_profile(fiber: &FiberSpec, mode: ModeId, omega: f64, grid: &GridSpec) -> Result<ModeProfile> {
    if grid.points < 8 || !(grid.half_width > 0.0) {
        return Err(Error::InvalidInput("profile grid needs at least 8 points and positive width".into()));
    }
    let field = ModeField::new(fiber, mode, omega)?;
    profile_from_field(&field, grid)
}

pub fn profile_from_field(field: &ModeField, grid: &GridSpec) -> Result<ModeProfile> {
    let mut values = sample_field(field, grid);
    let n = grid.points;
    let da = grid.spacing().powi(2);
    let fine: f64 = values.iter().map(|v| v * v).sum::<f64>() * da;
    let coarse: f64 = (0..n)
        .step_by(2)
        .flat_map(|iy| (0..n).step_by(2).map(move |ix| (ix, iy)))
        .map(|(ix, iy)| values[iy * n + ix].powi(2))
        .sum::<f64>()
        * 4.0
        * da;
    let drift = (fine - coarse).abs() / fine;
    if drift > 1e-3 || !fine.is_finite() {
        return Err(Error::GridTooCoarse { drift });
    }
    let s = fine.sqrt().recip();
    values.iter_mut().for_each(|v| *v *= s);
    Ok(ModeProfile {
        mode: field.mode,
        grid: *grid,
        values,
    })
}

/// One row of a dispersion table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionSample {
    pub omega: f64,
    pub n_eff: f64,
    pub k: f64,
    pub k_prime: f64,
}

/// Interpolated `k(ω)` of one mode over a frequency window, for integrands
/// that need millions of evaluations.
#[derive(Debug, Clone)]
pub struct ModeDispersion {
    pub mode: ModeId,
    table: ChebyshevTable,
}

impl ModeDispersion {
    /// Tabulate `mode` on `[omega_lo, omega_hi]`; the mode must be guided on
    /// the whole window.
    pub fn build(fiber: &FiberSpec, mode: ModeId, omega_lo: f64, omega_hi: f64) -> Result<Self> {
        let table = ChebyshevTable::build(omega_lo, omega_hi, 24, 1e-6, |w| {
            propagation_constant(fiber, mode, w)
        })?;
        Ok(Self { mode, table })
    }

    pub fn domain(&self) -> (f64, f64) {
        self.table.domain()
    }

    pub fn contains(&self, omega: f64) -> bool {
        self.table.contains(omega)
    }

    /// `k(ω)`; callers keep `omega` inside [`Self::domain`].
    #[inline]
    pub fn k(&self, omega: f64) -> f64 {
        self.table.value(omega)
    }

    #[inline]
    pub fn k_prime(&self, omega: f64) -> f64 {
        self.table.derivative(omega)
    }

    pub fn n_eff(&self, omega: f64) -> f64 {
        self.k(omega) * C / omega
    }

    pub fn samples(&self, n: usize) -> Vec<DispersionSample> {
        let (lo, hi) = self.domain();
        (0..n)
            .map(|i| {
                let omega = if n == 1 {
                    0.5 * (lo + hi)
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                };
                DispersionSample {
                    omega,
                    n_eff: self.n_eff(omega),
                    k: self.k(omega),
                    k_prime: self.k_prime(omega),
                }
            })
            .collect()
    }

    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W, n: usize) -> io::Result<()> {
        writeln!(out, "omega_rad_s,lambda_um,n_eff,k_rad_m,kprime_s_m")?;
        for s in self.samples(n) {
            write_row(
                out,
                &[s.omega, wavelength_from_omega(s.omega) * 1e6, s.n_eff, s.k, s.k_prime],
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::omega_from_wavelength;

    fn fiber() -> FiberSpec {
        FiberSpec::silica_in_air(0.395e-6).unwrap()
    }

    #[test]
    fn fundamental_index_reference() {
        let n = solve_neff(&fiber(), ModeId::HE11, omega_from_wavelength(1.596e-6)).unwrap();
        assert!((n - 1.080_514_036_3).abs() < 1e-9, "{n}");
    }

    #[test]
    fn second_mode_below_cutoff() {
        let f = FiberSpec::silica_in_air(0.10e-6).unwrap();
        let err = solve_neff(&f, ModeId::HE12, omega_from_wavelength(1.596e-6)).unwrap_err();
        assert!(matches!(err, Error::ModeNotGuided { radial: 2, .. }));
    }

    #[test]
    fn root_satisfies_equation() {
        let f = fiber();
        let w = omega_from_wavelength(0.532e-6);
        for m in [ModeId::HE11, ModeId::HE12] {
            let n = solve_neff(&f, m, w).unwrap();
            assert!(characteristic_function(&f, w, n).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn fields_have_expected_shape() {
        let f = fiber();
        let hf = ModeField::new(&f, ModeId::HE11, omega_from_wavelength(1.596e-6)).unwrap();
        let (u, w) = hf.uw();
        assert!((u - 1.488).abs() < 2e-3 && (w - 0.636).abs() < 2e-3);
        let (f0center, _) = hf.radial(0.0);
        assert!(f0center > 0.0);
        let p = ModeField::new(&f, ModeId::HE12, omega_from_wavelength(0.532e-6)).unwrap();
        let signs: Vec<bool> = (0..200).map(|i| p.radial(i as f64 * 0.02e-6).0 > 0.0).collect();
        let changes = signs.windows(2).filter(|s| s[0] != s[1]).count();
        assert_eq!(changes, 1);
    }

    #[test]
    fn table_matches_solver() {
        let f = fiber();
        let w0 = omega_from_wavelength(1.596e-6);
        let d = ModeDispersion::build(&f, ModeId::HE11, 0.95 * w0, 1.05 * w0).unwrap();
        for w in [0.96 * w0, w0, 1.03 * w0] {
            let k = propagation_constant(&f, ModeId::HE11, w).unwrap();
            assert!((d.k(w) - k).abs() < 1e-5);
            let kp = group_slowness(&f, ModeId::HE11, w).unwrap();
            assert!((d.k_prime(w) - kp).abs() / kp < 1e-8);
        }
    }
}
