//! Phasemismatch of the HE₁₂ → 3·HE₁₁ process and its design maps.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::constants::{omega_from_wavelength, wavelength_from_omega};
use crate::error::{Error, Result};
use crate::fiber_modes::{propagation_constant, FiberSpec, ModeDispersion, ModeId};
use crate::nonlinearity::{Chi3, NonlinearCoefficients};
use crate::output::{fmt_num, write_row};
use crate::roots::{bisect, brent};

/// Pump mode of the process.
pub const PUMP_MODE: ModeId = ModeId::HE12;
/// Mode shared by the three emitted photons.
pub const EMISSION_MODE: ModeId = ModeId::HE11;

/// Reported phasematching points satisfy `|Δk|` below this (rad/m).
pub const RESIDUAL_TOL: f64 = 10.0;

/// Pump and emission frequencies (rad/s) with `ω_p = ω_r + ω_s + ω_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessFrequencies {
    pub omega_p: f64,
    pub omega_r: f64,
    pub omega_s: f64,
    pub omega_i: f64,
}

impl ProcessFrequencies {
    /// Pump frequency follows from energy conservation.
    pub fn from_emission(omega_r: f64, omega_s: f64, omega_i: f64) -> Result<Self> {
        for w in [omega_r, omega_s, omega_i] {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidInput(format!("emission frequency {w} must be positive")));
            }
        }
        Ok(Self {
            omega_p: omega_r + omega_s + omega_i,
            omega_r,
            omega_s,
            omega_i,
        })
    }

    /// Degenerate triplet at `ω_p / 3`.
    pub fn degenerate(omega_p: f64) -> Result<Self> {
        let w = omega_p / 3.0;
        Self::from_emission(w, w, w)
    }

    /// Signal pair placed symmetrically about `(ω_p − ω_i)/2` with offset `delta`.
    pub fn from_detuning(omega_p: f64, omega_i: f64, delta: f64) -> Result<Self> {
        let mid = 0.5 * (omega_p - omega_i);
        let f = Self::from_emission(mid + delta, mid - delta, omega_i)?;
        Ok(Self { omega_p, ..f })
    }

    /// `Δ = ω_r − (ω_p − ω_i)/2`.
    pub fn delta(&self) -> f64 {
        self.omega_r - 0.5 * (self.omega_p - self.omega_i)
    }

    pub fn emission(&self) -> [f64; 3] {
        [self.omega_r, self.omega_s, self.omega_i]
    }
}

/// `Δk = k_p(ω_r+ω_s+ω_i) − k_r − k_s − k_i + Φ_NL` from the exact solver.
pub fn delta_k(fiber: &FiberSpec, f: &ProcessFrequencies, phi_nl: f64) -> Result<f64> {
    let kp = propagation_constant(fiber, PUMP_MODE, f.omega_p)?;
    let mut ke = 0.0;
    for w in f.emission() {
        ke += propagation_constant(fiber, EMISSION_MODE, w)?;
    }
    Ok(kp - ke + phi_nl)
}

/// `k_p(3ω) − 3 k(ω)` for the degenerate process at emission wavelength
/// `lambda` (m).
pub fn degenerate_mismatch(fiber: &FiberSpec, lambda: f64) -> Result<f64> {
    let w = omega_from_wavelength(lambda);
    delta_k(fiber, &ProcessFrequencies::degenerate(3.0 * w)?, 0.0)
}

// Smallest radius in [lo, hi] at which the pump mode is guided at `omega_p`,
// assuming guidance persists as the radius grows.
fn pump_cutoff_radius(base: &FiberSpec, omega_p: f64, lo: f64, hi: f64) -> Result<f64> {
    let guided = |r: f64| -> Result<bool> {
        match propagation_constant(&base.with_radius(r)?, PUMP_MODE, omega_p) {
            Ok(_) => Ok(true),
            Err(Error::ModeNotGuided { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    };
    if !guided(hi)? {
        return Err(Error::ModeNotGuided {
            radial: PUMP_MODE.radial(),
            radius_um: hi * 1e6,
            wavelength_um: wavelength_from_omega(omega_p) * 1e6,
        });
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > 1e-13 {
        let m = 0.5 * (a + b);
        if guided(m)? {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(b)
}

/// Core radius at which frequency-degenerate emission at `lambda` (m) is
/// phasematched, searched inside `bracket` (m) using the material and
/// cladding of `base`.
pub fn find_phasematching_radius(base: &FiberSpec, lambda: f64, bracket: (f64, f64)) -> Result<f64> {
    let (mut lo, hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidInput(format!("radius bracket [{lo:e}, {hi:e}] m is empty")));
    }
    let omega_p = 3.0 * omega_from_wavelength(lambda);
    let g = |r: f64| degenerate_mismatch(&base.with_radius(r)?, lambda);
    match g(lo) {
        Ok(_) => {}
        Err(Error::ModeNotGuided { .. }) => {
            lo = pump_cutoff_radius(base, omega_p, lo, hi).map_err(|_| Error::NoSignChange {
                lo: bracket.0,
                hi: bracket.1,
            })?;
            lo += 1e-12;
        }
        Err(e) => return Err(e),
    }
    let (glo, ghi) = (g(lo)?, g(hi)?);
    if glo.signum() == ghi.signum() {
        return Err(Error::NoSignChange {
            lo: bracket.0,
            hi: bracket.1,
        });
    }
    let r = brent(g, lo, hi, 1e-15)?;
    let residual = g(r)?.abs();
    if residual > RESIDUAL_TOL {
        // Brent can stall on the last ulps; bisection always honours the bracket.
        let r2 = bisect(g, lo, hi, 1e-16)?;
        if g(r2)?.abs() > RESIDUAL_TOL {
            return Err(Error::NonConvergent {
                change: residual,
                refinements: 0,
            });
        }
        return Ok(r2);
    }
    Ok(r)
}

/// One point of the degenerate design curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegeneratePoint {
    pub radius: f64,
    pub lambda: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Default)]
pub struct DegenerateCurve {
    pub points: Vec<DegeneratePoint>,
    /// Radii at which no degenerate phasematching was found.
    pub missing: Vec<f64>,
}

/// Emission wavelengths scanned for the degenerate curve (m).
const DEGENERATE_SCAN: (f64, f64, usize) = (0.70e-6, 3.30e-6, 53);

/// Degenerate emission wavelength phasematched at `radius`, if any.
pub fn degenerate_wavelength(base: &FiberSpec, radius: f64) -> Result<Option<f64>> {
    let fiber = base.with_radius(radius)?;
    let (a, b, n) = DEGENERATE_SCAN;
    let mut prev: Option<(f64, f64)> = None;
    for j in 0..n {
        let lam = a + (b - a) * j as f64 / (n - 1) as f64;
        let v = match degenerate_mismatch(&fiber, lam) {
            Ok(v) => v,
            Err(Error::ModeNotGuided { .. }) | Err(Error::OutOfValidityRange { .. }) => {
                prev = None;
                continue;
            }
            Err(e) => return Err(e),
        };
        if let Some((lp, vp)) = prev {
            if vp.signum() != v.signum() {
                let root = brent(|l| degenerate_mismatch(&fiber, l), lp, lam, 1e-16)?;
                return Ok(Some(root));
            }
        }
        prev = Some((lam, v));
    }
    Ok(None)
}

/// `(r, λ_deg, γ)` over `radii` (m), evaluated in parallel.
pub fn degenerate_wavelength_curve(base: &FiberSpec, radii: &[f64], chi3: Chi3) -> Result<DegenerateCurve> {
    let results: Vec<Result<Option<DegeneratePoint>>> = radii
        .par_iter()
        .map(|&r| {
            let Some(lambda) = degenerate_wavelength(base, r)? else {
                return Ok(None);
            };
            let fiber = base.with_radius(r)?;
            let w = omega_from_wavelength(lambda);
            let c = NonlinearCoefficients::compute(&fiber, chi3, 3.0 * w, [w, w, w])?;
            Ok(Some(DegeneratePoint {
                radius: r,
                lambda,
                gamma: c.gamma,
            }))
        })
        .collect();
    let mut curve = DegenerateCurve::default();
    for (r, res) in radii.iter().zip(results) {
        match res? {
            Some(p) => curve.points.push(p),
            None => curve.missing.push(*r),
        }
    }
    Ok(curve)
}

impl DegenerateCurve {
    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "r_um,lambda_deg_um,gamma_W_km")?;
        for p in &self.points {
            write_row(out, &[p.radius * 1e6, p.lambda * 1e6, p.gamma * 1e3])?;
        }
        Ok(())
    }
}

/// A phasematched process: radius, pump, signal offset and idler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasematchPoint {
    pub radius: f64,
    pub omega_p: f64,
    pub delta: f64,
    pub omega_i: f64,
    pub residual: f64,
}

impl PhasematchPoint {
    pub fn frequencies(&self) -> Result<ProcessFrequencies> {
        ProcessFrequencies::from_detuning(self.omega_p, self.omega_i, self.delta)
    }
}

/// Sampling of the signal offset Δ when tracing contours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourOptions {
    /// Grid points over Δ ∈ [−Δ_max, Δ_max].
    pub delta_points: usize,
    /// Largest |Δ| scanned (rad/s); `None` scans as far as the material
    /// window allows.
    pub delta_max: Option<f64>,
}

impl Default for ContourOptions {
    fn default() -> Self {
        Self {
            delta_points: 400,
            delta_max: None,
        }
    }
}

/// Signal offsets `Δ` with `Δk(ω_p, Δ, ω_i) = 0` at fixed radius. Roots are
/// bracketed on a symmetric grid; a pair that merges inside the central grid
/// cell while `|Δk(0)|` is within tolerance is reported once as `Δ = 0`.
pub fn phasematched_offsets(
    fiber: &FiberSpec,
    omega_p: f64,
    omega_i: f64,
    opts: &ContourOptions,
) -> Result<Vec<(f64, f64)>> {
    let mid = 0.5 * (omega_p - omega_i);
    if !(mid > 0.0) {
        return Ok(Vec::new());
    }
    let (lam_lo, lam_hi) = fiber.core.validity();
    let omega_min = omega_from_wavelength(lam_hi);
    let omega_max = omega_from_wavelength(lam_lo);
    let window = (mid - omega_min).min(omega_max - mid) * (1.0 - 1e-9);
    if !(window > 0.0) {
        return Ok(Vec::new());
    }
    let mut dmax = opts.delta_max.map_or(window, |d| d.min(window));
    let kp = match propagation_constant(fiber, PUMP_MODE, omega_p) {
        Ok(k) => k,
        Err(Error::ModeNotGuided { .. }) => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let ki = propagation_constant(fiber, EMISSION_MODE, omega_i)?;
    // Thin cores lose the long-wavelength partner first; keep the scan to
    // the guided band.
    let table = loop {
        match ModeDispersion::build(fiber, EMISSION_MODE, mid - dmax, mid + dmax) {
            Ok(t) => break t,
            Err(Error::ModeNotGuided { .. }) if dmax > 1e-3 * mid => dmax *= 0.9,
            Err(e) => return Err(e),
        }
    };
    let dk = |d: f64| kp - ki - table.k(mid + d) - table.k(mid - d);
    // Δk is even in Δ: scan Δ ≥ 0 and mirror.
    let half = (opts.delta_points / 2).max(2);
    let step = dmax / half as f64;
    let mut roots = Vec::new();
    let mut prev = (0.0, dk(0.0));
    let mut central = false;
    for j in 1..=half {
        let d = if j == half { dmax } else { j as f64 * step };
        let v = dk(d);
        if prev.1 == 0.0 || prev.1.signum() != v.signum() {
            if j == 1 {
                central = true;
            }
            let root = brent(|x| Ok(dk(x)), prev.0, d, 1e-6)?;
            roots.push(root);
        }
        prev = (d, v);
    }
    let dk0 = dk(0.0);
    let mut out = Vec::new();
    if dk0.abs() <= RESIDUAL_TOL {
        out.push((0.0, dk0.abs()));
        if central {
            roots.remove(0);
        }
    }
    for r in roots {
        let res = dk(r).abs();
        if res <= RESIDUAL_TOL {
            out.push((r, res));
            out.push((-r, res));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// Phasematched offsets at fixed idler for each pump frequency.
pub fn emission_contour_vs_pump(
    fiber: &FiberSpec,
    omega_i: f64,
    omega_p: &[f64],
    opts: &ContourOptions,
) -> Result<Vec<PhasematchPoint>> {
    let per: Vec<Result<Vec<PhasematchPoint>>> = omega_p
        .par_iter()
        .map(|&wp| {
            Ok(phasematched_offsets(fiber, wp, omega_i, opts)?
                .into_iter()
                .map(|(delta, residual)| PhasematchPoint {
                    radius: fiber.radius,
                    omega_p: wp,
                    delta,
                    omega_i,
                    residual,
                })
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for p in per {
        out.extend(p?);
    }
    Ok(out)
}

/// Phasematched offsets at fixed pump and idler for each core radius.
pub fn emission_contour_vs_radius(
    base: &FiberSpec,
    omega_p: f64,
    omega_i: f64,
    radii: &[f64],
    opts: &ContourOptions,
) -> Result<Vec<PhasematchPoint>> {
    let per: Vec<Result<Vec<PhasematchPoint>>> = radii
        .par_iter()
        .map(|&r| {
            let fiber = base.with_radius(r)?;
            Ok(phasematched_offsets(&fiber, omega_p, omega_i, opts)?
                .into_iter()
                .map(|(delta, residual)| PhasematchPoint {
                    radius: r,
                    omega_p,
                    delta,
                    omega_i,
                    residual,
                })
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for p in per {
        out.extend(p?);
    }
    Ok(out)
}

pub fn write_contour_csv<W: Write + ?Sized>(out: &mut W, points: &[PhasematchPoint]) -> io::Result<()> {
    writeln!(out, "omega_p_rad_s,delta_rad_s,radius_um,omega_i_rad_s,residual_rad_m")?;
    for p in points {
        write_row(out, &[p.omega_p, p.delta, p.radius * 1e6, p.omega_i, p.residual])?;
    }
    Ok(())
}

/// One cell of the γ map; `gamma` and `delta_k` are `None` where a frequency
/// leaves the material window or a mode is not guided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaCell {
    pub omega_p: f64,
    pub delta: f64,
    pub gamma: Option<f64>,
    pub delta_k: Option<f64>,
    pub phasematched: bool,
}

#[derive(Debug, Clone)]
pub struct GammaMap {
    pub omega_p: Vec<f64>,
    pub delta: Vec<f64>,
    /// Row-major in `omega_p`.
    pub cells: Vec<GammaCell>,
    pub contour: Vec<PhasematchPoint>,
}

fn masked<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::OutOfValidityRange { .. }) | Err(Error::ModeNotGuided { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// γ over an `(ω_p, Δ)` grid at fixed idler, irrespective of phasematching,
/// plus the `Δk = 0` contour. A cell is flagged phasematched when `Δk`
/// changes sign towards one of its grid neighbours.
pub fn gamma_map(
    fiber: &FiberSpec,
    omega_i: f64,
    omega_p: &[f64],
    delta: &[f64],
    chi3: Chi3,
    opts: &ContourOptions,
) -> Result<GammaMap> {
    let nd = delta.len();
    let mut cells: Vec<GammaCell> = omega_p
        .par_iter()
        .flat_map_iter(|&wp| delta.iter().map(move |&d| (wp, d)))
        .map(|(wp, d)| -> Result<GammaCell> {
            let f = ProcessFrequencies::from_detuning(wp, omega_i, d);
            let (gamma, dk) = match f {
                Ok(f) => (
                    masked(
                        NonlinearCoefficients::compute(fiber, chi3, wp, f.emission()).map(|c| c.gamma),
                    )?,
                    masked(delta_k(fiber, &f, 0.0))?,
                ),
                Err(_) => (None, None),
            };
            Ok(GammaCell {
                omega_p: wp,
                delta: d,
                gamma,
                delta_k: dk,
                phasematched: false,
            })
        })
        .collect::<Result<_>>()?;
    let sign = |c: &GammaCell| c.delta_k.map(f64::signum);
    for i in 0..omega_p.len() {
        for j in 0..nd {
            let here = sign(&cells[i * nd + j]);
            let Some(s) = here else { continue };
            let mut flag = cells[i * nd + j].delta_k == Some(0.0);
            let mut check = |ii: usize, jj: usize| {
                if let Some(t) = sign(&cells[ii * nd + jj]) {
                    if t != s {
                        flag = true;
                    }
                }
            };
            if i > 0 {
                check(i - 1, j);
            }
            if i + 1 < omega_p.len() {
                check(i + 1, j);
            }
            if j > 0 {
                check(i, j - 1);
            }
            if j + 1 < nd {
                check(i, j + 1);
            }
            cells[i * nd + j].phasematched = flag;
        }
    }
    let contour = emission_contour_vs_pump(fiber, omega_i, omega_p, opts)?;
    Ok(GammaMap {
        omega_p: omega_p.to_vec(),
        delta: delta.to_vec(),
        cells,
        contour,
    })
}

impl GammaMap {
    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "omega_p_rad_s,delta_rad_s,gamma_W_km,phasematched")?;
        for c in &self.cells {
            let g = c.gamma.map_or_else(|| "NA".to_string(), |g| fmt_num(g * 1e3));
            let flag = match c.delta_k {
                None => "NA",
                Some(_) if c.phasematched => "1",
                Some(_) => "0",
            };
            writeln!(out, "{},{},{},{}", fmt_num(c.omega_p), fmt_num(c.delta), g, flag)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_conservation_is_structural() {
        let f = ProcessFrequencies::from_detuning(3.5e15, 1.1e15, 2e13).unwrap();
        assert_eq!(f.omega_r + f.omega_s + f.omega_i, f.omega_p);
        assert!((f.delta() - 2e13).abs() < 1e-2);
    }

    #[test]
    fn design_radius_for_1596() {
        let base = FiberSpec::silica_in_air(0.4e-6).unwrap();
        let r = find_phasematching_radius(&base, 1.596e-6, (0.3e-6, 0.5e-6)).unwrap();
        assert!((r - 0.395_184_8e-6).abs() < 2e-12, "{r}");
        let res = degenerate_mismatch(&base.with_radius(r).unwrap(), 1.596e-6).unwrap();
        assert!(res.abs() < RESIDUAL_TOL);
    }

    #[test]
    fn bracket_without_root() {
        let base = FiberSpec::silica_in_air(0.4e-6).unwrap();
        let e = find_phasematching_radius(&base, 1.596e-6, (0.42e-6, 0.5e-6)).unwrap_err();
        assert!(matches!(e, Error::NoSignChange { .. }));
    }
}
