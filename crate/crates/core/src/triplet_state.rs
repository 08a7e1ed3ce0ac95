//! Joint spectral amplitude of the emitted triplets, its rotated-frame
//! views, spectral filtering and marginals.

use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::constants::omega_from_wavelength;
use crate::dispersion::SellmeierModel;
use crate::error::{Error, Result};
use crate::fiber_modes::{FiberSpec, ModeDispersion};
use crate::output::{fmt_num, write_row};
use crate::phasematching::{ProcessFrequencies, EMISSION_MODE, PUMP_MODE};
use crate::quadrature::{integrate_resolved, simpson_weights};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Gaussian pump spectrum `α(ω) = 2^{1/4} π^{-1/4} σ^{-1/2} exp(−(ω−ω_p0)²/σ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpEnvelope {
    pub omega_p0: f64,
    pub sigma: f64,
}

impl PumpEnvelope {
    pub fn new(omega_p0: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && omega_p0 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "pump bandwidth {sigma} and center {omega_p0} must be positive"
            )));
        }
        Ok(Self { omega_p0, sigma })
    }

    pub fn peak(&self) -> f64 {
        std::f64::consts::SQRT_2.sqrt() / (std::f64::consts::PI.powf(0.25) * self.sigma.sqrt())
    }

    pub fn amplitude(&self, omega: f64) -> f64 {
        let x = (omega - self.omega_p0) / self.sigma;
        self.peak() * (-x * x).exp()
    }
}

/// Gaussian amplitude filter `exp(−(ω−ω_0)²/σ_f²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralFilter {
    pub center: f64,
    pub sigma_f: f64,
}

impl SpectralFilter {
    pub fn new(center: f64, sigma_f: f64) -> Result<Self> {
        if !(sigma_f > 0.0 && center > 0.0) {
            return Err(Error::InvalidInput(format!("filter bandwidth {sigma_f} must be positive")));
        }
        Ok(Self { center, sigma_f })
    }

    pub fn amplitude(&self, omega: f64) -> f64 {
        detuning_filter(omega - self.center, self.sigma_f)
    }
}

#[inline]
fn detuning_filter(nu: f64, sigma_f: f64) -> f64 {
    let x = nu / sigma_f;
    (-x * x).exp()
}

/// Detunings in the frame aligned with the phasematching membrane: `plus`
/// along (1,1,1), `a` and `b` tangent to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedCoords {
    pub plus: f64,
    pub a: f64,
    pub b: f64,
}

// Rows of the orthogonal map (ν_r, ν_s, ν_i) → (ν₊, ν_A, ν_B).
const ROTATION: [[f64; 3]; 3] = [
    [1.0 / SQRT3, 1.0 / SQRT3, 1.0 / SQRT3],
    [0.5 * (1.0 - 1.0 / SQRT3), 0.5 * (-1.0 - 1.0 / SQRT3), 1.0 / SQRT3],
    [0.5 * (1.0 + 1.0 / SQRT3), 0.5 * (-1.0 + 1.0 / SQRT3), -1.0 / SQRT3],
];

pub fn to_rotated(nu: [f64; 3]) -> RotatedCoords {
    let dot = |row: &[f64; 3]| row[0] * nu[0] + row[1] * nu[1] + row[2] * nu[2];
    RotatedCoords {
        plus: dot(&ROTATION[0]),
        a: dot(&ROTATION[1]),
        b: dot(&ROTATION[2]),
    }
}

pub fn from_rotated(c: RotatedCoords) -> [f64; 3] {
    let v = [c.plus, c.a, c.b];
    let mut out = [0.0; 3];
    for (j, o) in out.iter_mut().enumerate() {
        *o = ROTATION[0][j] * v[0] + ROTATION[1][j] * v[1] + ROTATION[2][j] * v[2];
    }
    out
}

#[inline]
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `sinc(LΔk/2) exp(iLΔk/2)`.
#[inline]
pub fn phasematching_factor(length: f64, delta_k: f64) -> Complex64 {
    let x = 0.5 * length * delta_k;
    Complex64::from_polar(sinc(x), x)
}

/// Phasematching function from the exact solver.
pub fn phasematching_function(
    fiber: &FiberSpec,
    length: f64,
    freqs: &ProcessFrequencies,
    phi_nl: f64,
) -> Result<Complex64> {
    let dk = crate::phasematching::delta_k(fiber, freqs, phi_nl)?;
    Ok(phasematching_factor(length, dk))
}

/// Beyond this many pump widths the envelope (< e⁻¹⁰⁰) is taken as zero.
const ENVELOPE_CUTOFF: f64 = 10.0;

/// A design point with tabulated dispersion, ready for dense evaluation of
/// `f(ν) = exp(−(Σν)²/σ²) sinc(LΔk/2) exp(iLΔk/2)` at detunings ν from the
/// emission centers.
#[derive(Debug, Clone)]
pub struct SourceModel {
    pub length: f64,
    pub pump: PumpEnvelope,
    pub centers: ProcessFrequencies,
    pub phi_nl: f64,
    core: SellmeierModel,
    // Widest pump bandwidth the pump table covers.
    table_sigma: f64,
    pump_table: ModeDispersion,
    emission_table: ModeDispersion,
}

impl SourceModel {
    /// Tabulate dispersion for emission detunings up to `emission_span`
    /// (rad/s) on every mode, clipped to the material window.
    pub fn new(
        fiber: &FiberSpec,
        length: f64,
        sigma: f64,
        centers: ProcessFrequencies,
        phi_nl: f64,
        emission_span: f64,
    ) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::InvalidInput(format!("fiber length {length} must be positive")));
        }
        let pump = PumpEnvelope::new(centers.omega_p, sigma)?;
        let (lam_lo, lam_hi) = fiber.core.validity();
        let w_min = omega_from_wavelength(lam_hi) * (1.0 + 1e-12);
        let w_max = omega_from_wavelength(lam_lo) * (1.0 - 1e-12);
        let e = centers.emission();
        let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = e.iter().cloned().fold(0.0, f64::max);
        let e_lo = (lo - emission_span).max(w_min);
        let e_hi = (hi + emission_span).min(w_max);
        let p_span = (ENVELOPE_CUTOFF * 1.05 * sigma).max(1e-9 * centers.omega_p);
        let pump_table = ModeDispersion::build(
            fiber,
            PUMP_MODE,
            centers.omega_p - p_span,
            (centers.omega_p + p_span).min(w_max),
        )?;
        let emission_table = ModeDispersion::build(fiber, EMISSION_MODE, e_lo, e_hi)?;
        Ok(Self {
            length,
            pump,
            centers,
            phi_nl,
            core: fiber.core.clone(),
            table_sigma: sigma,
            pump_table,
            emission_table,
        })
    }

    /// Same tables, different length, bandwidth or nonlinear phase. The pump
    /// table only covers the original bandwidth, so `sigma` may not grow.
    pub fn with_parameters(&self, length: f64, sigma: f64, phi_nl: f64) -> Result<Self> {
        if sigma > self.table_sigma * (1.0 + 1e-12) {
            return Err(Error::InvalidInput(
                "pump bandwidth exceeds the tabulated pump window".into(),
            ));
        }
        Ok(Self {
            length,
            pump: PumpEnvelope::new(self.pump.omega_p0, sigma)?,
            phi_nl,
            ..self.clone()
        })
    }

    /// Largest symmetric emission detuning covered for every mode.
    pub fn emission_reach(&self) -> f64 {
        let (lo, hi) = self.emission_table.domain();
        self.centers
            .emission()
            .iter()
            .map(|&w| (w - lo).min(hi - w))
            .fold(f64::INFINITY, f64::min)
    }

    #[inline]
    pub fn covers(&self, nu: [f64; 3]) -> bool {
        let (lo, hi) = self.emission_table.domain();
        let e = self.centers.emission();
        (0..3).all(|k| {
            let w = e[k] + nu[k];
            w >= lo && w <= hi
        })
    }

    /// `Δk` at detunings `nu`; the pump sits at `ω_p0 + Σν`.
    #[inline]
    pub fn delta_k(&self, nu: [f64; 3]) -> f64 {
        let e = self.centers.emission();
        let sum = nu[0] + nu[1] + nu[2];
        self.pump_table.k(self.centers.omega_p + sum)
            - self.emission_table.k(e[0] + nu[0])
            - self.emission_table.k(e[1] + nu[1])
            - self.emission_table.k(e[2] + nu[2])
            + self.phi_nl
    }

    /// `exp(−(Σν)²/σ²)`.
    #[inline]
    pub fn envelope(&self, nu: [f64; 3]) -> f64 {
        let x = (nu[0] + nu[1] + nu[2]) / self.pump.sigma;
        (-x * x).exp()
    }

    fn envelope_negligible(&self, nu: [f64; 3]) -> bool {
        (nu[0] + nu[1] + nu[2]).abs() > ENVELOPE_CUTOFF * self.pump.sigma
    }

    /// Half the accumulated phasemismatch, `LΔk/2`.
    #[inline]
    pub fn half_phase(&self, nu: [f64; 3]) -> f64 {
        0.5 * self.length * self.delta_k(nu)
    }

    /// Stripped amplitude `f(ν)`.
    pub fn f(&self, nu: [f64; 3]) -> Complex64 {
        if self.envelope_negligible(nu) {
            return Complex64::new(0.0, 0.0);
        }
        self.envelope(nu) * phasematching_factor(self.length, self.delta_k(nu))
    }

    /// `|f(ν)|²`.
    #[inline]
    pub fn intensity(&self, nu: [f64; 3]) -> f64 {
        if self.envelope_negligible(nu) {
            return 0.0;
        }
        let g = self.envelope(nu);
        let s = sinc(self.half_phase(nu));
        g * g * s * s
    }

    /// `|sinc(LΔk/2)|²`.
    pub fn phasematching_intensity(&self, nu: [f64; 3]) -> f64 {
        if self.envelope_negligible(nu) {
            // The pump table does not reach here; Δk is evaluated directly
            // only inside the envelope window.
            return f64::NAN;
        }
        sinc(self.half_phase(nu)).powi(2)
    }

    /// `Π_μ k′_μ ω_μ / n_μ²` at detunings `nu`, with material indices.
    #[inline]
    pub fn h(&self, nu: [f64; 3]) -> f64 {
        let e = self.centers.emission();
        let mut h = 1.0;
        for k in 0..3 {
            let w = e[k] + nu[k];
            let n = self.core.index_at_omega_unchecked(w);
            h *= self.emission_table.k_prime(w) * w / (n * n);
        }
        h
    }

    /// Group slowness of the pump mode at its center.
    pub fn pump_slowness(&self) -> f64 {
        self.pump_table.k_prime(self.centers.omega_p)
    }

    pub fn emission_slowness(&self, omega: f64) -> f64 {
        self.emission_table.k_prime(omega)
    }

    /// Pump-spectrum prefactor that turns `f` into the normalized `F`.
    pub fn normalization(&self) -> f64 {
        self.pump.peak()
    }
}

/// Sampling of a cubic detuning grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JsaGridSpec {
    pub points: usize,
    pub half_width: [f64; 3],
}

impl JsaGridSpec {
    /// 128³ voxels over ±4 max(σ, 2π/|τ_max|) per axis.
    pub fn default_for(model: &SourceModel) -> Self {
        let kp = model.pump_slowness();
        let tau_max = model
            .centers
            .emission()
            .iter()
            .map(|&w| (model.length * (kp - model.emission_slowness(w))).abs())
            .fold(0.0, f64::max);
        let scale = model.pump.sigma.max(2.0 * std::f64::consts::PI / tau_max);
        Self {
            points: 128,
            half_width: [4.0 * scale; 3],
        }
    }

    pub fn cube(points: usize, half_width: f64) -> Self {
        Self {
            points,
            half_width: [half_width; 3],
        }
    }

    pub fn axis(&self, k: usize) -> Vec<f64> {
        let n = self.points;
        let w = self.half_width[k];
        (0..n)
            .map(|j| -w + 2.0 * w * j as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Complex amplitude on a (ν_r, ν_s, ν_i) grid, index `(ir·n_s + is)·n_i + ii`.
#[derive(Debug, Clone)]
pub struct JsaGrid {
    pub axes: [Vec<f64>; 3],
    pub values: Vec<Complex64>,
    pub centers: ProcessFrequencies,
    pub length: f64,
    pub sigma: f64,
}

/// Sample the stripped amplitude `f` on `spec`.
pub fn jsa(model: &SourceModel, spec: &JsaGridSpec) -> Result<JsaGrid> {
    if spec.points < 3 {
        return Err(Error::InvalidInput("JSA grid needs at least 3 points per axis".into()));
    }
    let axes = [spec.axis(0), spec.axis(1), spec.axis(2)];
    let corner = spec.half_width;
    if !model.covers(corner) || !model.covers(corner.map(|v| -v)) {
        return Err(Error::InvalidInput(
            "JSA grid extends beyond the tabulated dispersion window".into(),
        ));
    }
    let (nr, ns, ni) = (axes[0].len(), axes[1].len(), axes[2].len());
    let values: Vec<Complex64> = (0..nr * ns)
        .into_par_iter()
        .flat_map_iter(|rs| {
            let (ir, is) = (rs / ns, rs % ns);
            let axes = &axes;
            (0..ni).map(move |ii| model.f([axes[0][ir], axes[1][is], axes[2][ii]]))
        })
        .collect();
    Ok(JsaGrid {
        axes,
        values,
        centers: model.centers,
        length: model.length,
        sigma: model.pump.sigma,
    })
}

impl JsaGrid {
    pub fn dims(&self) -> [usize; 3] {
        [self.axes[0].len(), self.axes[1].len(), self.axes[2].len()]
    }

    #[inline]
    pub fn index(&self, ir: usize, is: usize, ii: usize) -> usize {
        let [_, ns, ni] = self.dims();
        (ir * ns + is) * ni + ii
    }

    pub fn intensity_at(&self, ir: usize, is: usize, ii: usize) -> f64 {
        self.values[self.index(ir, is, ii)].norm_sqr()
    }

    /// Multiply by `factor`, e.g. [`SourceModel::normalization`] to obtain `F`.
    pub fn scaled(&self, factor: f64) -> JsaGrid {
        JsaGrid {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    fn spacing(&self, k: usize) -> f64 {
        let a = &self.axes[k];
        (a[a.len() - 1] - a[0]) / (a.len() - 1) as f64
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing(0) * self.spacing(1) * self.spacing(2)
    }

    /// `Σ |value|² ΔV`.
    pub fn total_intensity(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.voxel_volume()
    }

    /// Grid indices of the largest |value|.
    pub fn argmax(&self) -> [usize; 3] {
        let mut best = (0, -1.0);
        for (k, v) in self.values.iter().enumerate() {
            let m = v.norm_sqr();
            if m > best.1 {
                best = (k, m);
            }
        }
        let [_, ns, ni] = self.dims();
        [best.0 / (ns * ni), (best.0 / ni) % ns, best.0 % ni]
    }

    /// Largest boundary-face intensity relative to the peak.
    pub fn boundary_ratio(&self) -> f64 {
        let [nr, ns, ni] = self.dims();
        let peak = self.values.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        let mut edge: f64 = 0.0;
        for ir in 0..nr {
            for is in 0..ns {
                for ii in 0..ni {
                    let on_face = ir == 0 || ir == nr - 1 || is == 0 || is == ns - 1 || ii == 0 || ii == ni - 1;
                    if on_face {
                        edge = edge.max(self.intensity_at(ir, is, ii));
                    }
                }
            }
        }
        edge / peak
    }

    /// Apply per-mode Gaussian filters about the emission centers; `None`
    /// leaves a mode unfiltered.
    pub fn filtered(&self, sigma_f: [Option<f64>; 3]) -> Result<JsaGrid> {
        for s in sigma_f.iter().flatten() {
            if !(*s > 0.0) {
                return Err(Error::InvalidInput(format!("filter bandwidth {s} must be positive")));
            }
        }
        let t = |k: usize| -> Vec<f64> {
            self.axes[k]
                .iter()
                .map(|&nu| sigma_f[k].map_or(1.0, |s| detuning_filter(nu, s)))
                .collect()
        };
        let (tr, ts, ti) = (t(0), t(1), t(2));
        let mut out = self.clone();
        let [nr, ns, ni] = self.dims();
        for ir in 0..nr {
            for is in 0..ns {
                for ii in 0..ni {
                    let k = self.index(ir, is, ii);
                    out.values[k] = self.values[k] * (tr[ir] * ts[is] * ti[ii]);
                }
            }
        }
        Ok(out)
    }

    /// Flat CSV with one voxel per row.
    pub fn write_flat_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "nu_r,nu_s,nu_i,re,im,intensity")?;
        let [nr, ns, ni] = self.dims();
        for ir in 0..nr {
            for is in 0..ns {
                for ii in 0..ni {
                    let v = self.values[self.index(ir, is, ii)];
                    write_row(
                        out,
                        &[self.axes[0][ir], self.axes[1][is], self.axes[2][ii], v.re, v.im, v.norm_sqr()],
                    )?;
                }
            }
        }
        Ok(())
    }

    /// Header describing the three uniform axes, then `re im` per voxel in
    /// storage order.
    pub fn write_compact<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "# jsa-grid v1")?;
        writeln!(out, "# length_m {}", fmt_num(self.length))?;
        writeln!(out, "# sigma_rad_s {}", fmt_num(self.sigma))?;
        let c = self.centers.emission();
        for (k, name) in ["nu_r", "nu_s", "nu_i"].iter().enumerate() {
            let a = &self.axes[k];
            writeln!(
                out,
                "# axis {name} {} {} {} center {}",
                a.len(),
                fmt_num(a[0]),
                fmt_num(a[a.len() - 1]),
                fmt_num(c[k])
            )?;
        }
        for v in &self.values {
            writeln!(out, "{} {}", fmt_num(v.re), fmt_num(v.im))?;
        }
        Ok(())
    }
}

/// Scalar field on a 2-D grid, row-major in `y`.
#[derive(Debug, Clone)]
pub struct Slice2D {
    pub x_label: String,
    pub y_label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub values: Vec<f64>,
}

impl Slice2D {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.x.len() + ix]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Axis labels and values in the first row, then one row per `y`.
    pub fn write_matrix_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        let head: Vec<String> = self.x.iter().map(|&v| fmt_num(v)).collect();
        writeln!(out, "{}\\{},{}", self.y_label, self.x_label, head.join(","))?;
        for (iy, &y) in self.y.iter().enumerate() {
            let row: Vec<String> = (0..self.x.len()).map(|ix| fmt_num(self.at(ix, iy))).collect();
            writeln!(out, "{},{}", fmt_num(y), row.join(","))?;
        }
        Ok(())
    }
}

/// One-dimensional spectrum.
#[derive(Debug, Clone)]
pub struct Spectrum1D {
    pub label: String,
    pub x: Vec<f64>,
    pub values: Vec<f64>,
}

impl Spectrum1D {
    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "{},intensity", self.label)?;
        for (x, v) in self.x.iter().zip(&self.values) {
            write_row(out, &[*x, *v])?;
        }
        Ok(())
    }

    /// Numerical integral with the trapezoid rule.
    pub fn integral(&self) -> f64 {
        self.x
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1]))
            .sum()
    }
}

fn check_rotated_reach(model: &SourceModel, reach: f64) -> Result<()> {
    if reach > model.emission_reach() {
        return Err(Error::InvalidInput(
            "rotated window extends beyond the tabulated dispersion window".into(),
        ));
    }
    Ok(())
}

/// `|f|²` over `(ν_A, ν_B)` at fixed `ν₊`.
pub fn jsa_slice_rotated(model: &SourceModel, nu_plus: f64, a: &[f64], b: &[f64]) -> Result<Slice2D> {
    let amax = a.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let bmax = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    check_rotated_reach(model, nu_plus.abs() / SQRT3 + amax + bmax)?;
    let values: Vec<f64> = b
        .par_iter()
        .flat_map_iter(|&vb| {
            a.iter().map(move |&va| {
                model.intensity(from_rotated(RotatedCoords {
                    plus: nu_plus,
                    a: va,
                    b: vb,
                }))
            })
        })
        .collect();
    Ok(Slice2D {
        x_label: "nu_A".into(),
        y_label: "nu_B".into(),
        x: a.to_vec(),
        y: b.to_vec(),
        values,
    })
}

/// `|f|²` along the ν₊ axis at `ν_A = ν_B = 0`.
pub fn jsa_axis_rotated(model: &SourceModel, nu_plus: &[f64]) -> Result<Spectrum1D> {
    let reach = nu_plus.iter().map(|v| v.abs()).fold(0.0, f64::max) / SQRT3;
    check_rotated_reach(model, reach)?;
    Ok(Spectrum1D {
        label: "nu_plus".into(),
        x: nu_plus.to_vec(),
        values: nu_plus
            .iter()
            .map(|&p| model.intensity(from_rotated(RotatedCoords { plus: p, a: 0.0, b: 0.0 })))
            .collect(),
    })
}

/// Which factor of the amplitude to map on a coordinate plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaneQuantity {
    /// `exp(−2(Σν)²/σ²)`, the pump envelope intensity shape.
    Pump,
    /// `sinc²(LΔk/2)`.
    Phasematching,
    /// `|f|²`.
    Joint,
}

/// Intensity on the coordinate plane where detuning `fixed` (0 = r, 1 = s,
/// 2 = i) vanishes, over the remaining two detunings in order.
pub fn coordinate_plane(
    model: &SourceModel,
    fixed: usize,
    x: &[f64],
    y: &[f64],
    quantity: PlaneQuantity,
) -> Result<Slice2D> {
    if fixed > 2 {
        return Err(Error::InvalidInput(format!("mode index {fixed} out of range")));
    }
    let names = ["nu_r", "nu_s", "nu_i"];
    let free: Vec<usize> = (0..3).filter(|&k| k != fixed).collect();
    let xmax = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let ymax = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
    check_rotated_reach(model, xmax.max(ymax))?;
    let values: Vec<f64> = y
        .par_iter()
        .flat_map_iter(|&vy| {
            let free = free.clone();
            x.iter().map(move |&vx| {
                let mut nu = [0.0; 3];
                nu[free[0]] = vx;
                nu[free[1]] = vy;
                match quantity {
                    PlaneQuantity::Pump => model.envelope(nu).powi(2),
                    PlaneQuantity::Phasematching => model.phasematching_intensity(nu),
                    PlaneQuantity::Joint => model.intensity(nu),
                }
            })
        })
        .collect();
    Ok(Slice2D {
        x_label: names[free[0]].into(),
        y_label: names[free[1]].into(),
        x: x.to_vec(),
        y: y.to_vec(),
        values,
    })
}

const TRUNCATION_LIMIT: f64 = 1e-4;

fn check_truncation(grid: &JsaGrid, allow_truncation: bool) -> Result<()> {
    let ratio = grid.boundary_ratio();
    if ratio >= TRUNCATION_LIMIT && !allow_truncation {
        return Err(Error::GridTruncation { ratio });
    }
    Ok(())
}

fn axis_weights(axis: &[f64]) -> Vec<f64> {
    let h = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
    simpson_weights(axis.len(), h)
}

/// Two-photon spectrum: `|values|²` integrated over mode `traced`. The
/// result is indexed by the remaining modes in (r, s, i) order.
pub fn marginal_two_photon(grid: &JsaGrid, traced: usize, allow_truncation: bool) -> Result<Slice2D> {
    if traced > 2 {
        return Err(Error::InvalidInput(format!("mode index {traced} out of range")));
    }
    check_truncation(grid, allow_truncation)?;
    let names = ["nu_r", "nu_s", "nu_i"];
    let free: Vec<usize> = (0..3).filter(|&k| k != traced).collect();
    let w = axis_weights(&grid.axes[traced]);
    let (nx, ny) = (grid.axes[free[0]].len(), grid.axes[free[1]].len());
    let mut values = vec![0.0; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let mut s = 0.0;
            for (it, wt) in w.iter().enumerate() {
                let mut idx = [0usize; 3];
                idx[free[0]] = ix;
                idx[free[1]] = iy;
                idx[traced] = it;
                s += wt * grid.intensity_at(idx[0], idx[1], idx[2]);
            }
            values[iy * nx + ix] = s;
        }
    }
    Ok(Slice2D {
        x_label: names[free[0]].into(),
        y_label: names[free[1]].into(),
        x: grid.axes[free[0]].clone(),
        y: grid.axes[free[1]].clone(),
        values,
    })
}

/// Single-photon spectrum of mode `kept`: `|values|²` integrated over the
/// other two modes.
pub fn marginal_single(grid: &JsaGrid, kept: usize, allow_truncation: bool) -> Result<Spectrum1D> {
    if kept > 2 {
        return Err(Error::InvalidInput(format!("mode index {kept} out of range")));
    }
    check_truncation(grid, allow_truncation)?;
    let names = ["nu_r", "nu_s", "nu_i"];
    let others: Vec<usize> = (0..3).filter(|&k| k != kept).collect();
    let w0 = axis_weights(&grid.axes[others[0]]);
    let w1 = axis_weights(&grid.axes[others[1]]);
    let values = (0..grid.axes[kept].len())
        .map(|ik| {
            let mut s = 0.0;
            for (i0, a) in w0.iter().enumerate() {
                for (i1, b) in w1.iter().enumerate() {
                    let mut idx = [0usize; 3];
                    idx[kept] = ik;
                    idx[others[0]] = i0;
                    idx[others[1]] = i1;
                    s += a * b * grid.intensity_at(idx[0], idx[1], idx[2]);
                }
            }
            s
        })
        .collect();
    Ok(Spectrum1D {
        label: names[kept].into(),
        x: grid.axes[kept].clone(),
        values,
    })
}

/// Integrate a two-photon spectrum over one of its axes (0 = x, 1 = y).
pub fn marginalize_slice(slice: &Slice2D, over: usize) -> Spectrum1D {
    let (nx, ny) = (slice.x.len(), slice.y.len());
    if over == 1 {
        let w = axis_weights(&slice.y);
        Spectrum1D {
            label: slice.x_label.clone(),
            x: slice.x.clone(),
            values: (0..nx)
                .map(|ix| (0..ny).map(|iy| w[iy] * slice.at(ix, iy)).sum())
                .collect(),
        }
    } else {
        let w = axis_weights(&slice.x);
        Spectrum1D {
            label: slice.y_label.clone(),
            x: slice.y.clone(),
            values: (0..ny)
                .map(|iy| (0..nx).map(|ix| w[ix] * slice.at(ix, iy)).sum())
                .collect(),
        }
    }
}

/// Envelope half-width, in pump widths, integrated across by
/// [`marginal_two_photon_resolved`]; `|f|²` there is below `e^{−24}`.
const ENVELOPE_WINDOW: f64 = 3.5;

/// Two-photon spectrum `I₂` over the two free modes (in (r, s, i) order) on
/// the axes `x`, `y`, with the traced mode integrated across the pump
/// envelope by phase-resolved Gauss panels. Unlike
/// [`marginal_two_photon`] this resolves membranes much thinner than any
/// affordable voxel grid. Optional per-mode filters multiply `|f|²` by
/// `exp(−2ν²/σ_f²)`.
pub fn marginal_two_photon_resolved(
    model: &SourceModel,
    filters: [Option<f64>; 3],
    traced: usize,
    x: &[f64],
    y: &[f64],
    allow_truncation: bool,
) -> Result<Slice2D> {
    if traced > 2 {
        return Err(Error::InvalidInput(format!("mode index {traced} out of range")));
    }
    let names = ["nu_r", "nu_s", "nu_i"];
    let free: Vec<usize> = (0..3).filter(|&k| k != traced).collect();
    let sigma = model.pump.sigma;
    let xmax = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let ymax = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
    check_rotated_reach(model, xmax + ymax + ENVELOPE_WINDOW * sigma)?;
    let inv = filters.map(|f| f.map_or(0.0, |s| 1.0 / (s * s)));
    let rule = crate::quadrature::PanelRule {
        coarse: 8,
        max_phase: 0.25 * std::f64::consts::PI,
        order: 6,
        max_split: 1 << 12,
    };
    let values: Vec<f64> = y
        .par_iter()
        .flat_map_iter(|&vy| {
            let free = free.clone();
            x.iter().map(move |&vx| {
                let mut nu = [0.0; 3];
                nu[free[0]] = vx;
                nu[free[1]] = vy;
                let center = -(vx + vy);
                let w = ENVELOPE_WINDOW * sigma;
                integrate_resolved(center - w, center + w, rule, |t| {
                    let mut n = nu;
                    n[traced] = t;
                    let fil = -2.0 * (n[0] * n[0] * inv[0] + n[1] * n[1] * inv[1] + n[2] * n[2] * inv[2]);
                    Ok((model.half_phase(n), model.intensity(n) * fil.exp()))
                })
                .expect("infallible integrand")
            })
        })
        .collect();
    let slice = Slice2D {
        x_label: names[free[0]].into(),
        y_label: names[free[1]].into(),
        x: x.to_vec(),
        y: y.to_vec(),
        values,
    };
    let ratio = slice_boundary_ratio(&slice);
    if ratio >= TRUNCATION_LIMIT && !allow_truncation {
        return Err(Error::GridTruncation { ratio });
    }
    Ok(slice)
}

/// One-photon marginal `I₁(ν_kept)` by nested phase-resolved quadrature:
/// the second free mode runs over `[-half, half]`, the third is traced
/// across the pump envelope. Independent of any sampled `I₂` map, so the
/// Simpson marginal of [`marginal_two_photon_resolved`] over the same
/// window must reproduce it.
pub fn marginal_single_resolved(
    model: &SourceModel,
    filters: [Option<f64>; 3],
    kept: usize,
    x: &[f64],
    half: f64,
) -> Result<Spectrum1D> {
    if kept > 2 {
        return Err(Error::InvalidInput(format!("mode index {kept} out of range")));
    }
    let names = ["nu_r", "nu_s", "nu_i"];
    let (other, traced) = ((kept + 1) % 3, (kept + 2) % 3);
    let sigma = model.pump.sigma;
    let xmax = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    check_rotated_reach(model, xmax + half + ENVELOPE_WINDOW * sigma)?;
    let inv = filters.map(|f| f.map_or(0.0, |s| 1.0 / (s * s)));
    let rule = crate::quadrature::PanelRule {
        coarse: 8,
        max_phase: 0.25 * std::f64::consts::PI,
        order: 6,
        max_split: 1 << 14,
    };
    let weight = |n: [f64; 3]| {
        let fil = -2.0 * (n[0] * n[0] * inv[0] + n[1] * n[1] * inv[1] + n[2] * n[2] * inv[2]);
        model.intensity(n) * fil.exp()
    };
    let values: Vec<f64> = x
        .par_iter()
        .map(|&vx| {
            integrate_resolved(-half, half, rule, |vo| {
                let mut nu = [0.0; 3];
                nu[kept] = vx;
                nu[other] = vo;
                let center = -(vx + vo);
                let mut line = nu;
                line[traced] = center;
                let w = ENVELOPE_WINDOW * sigma;
                let inner = integrate_resolved(center - w, center + w, rule, |t| {
                    let mut n = nu;
                    n[traced] = t;
                    Ok((model.half_phase(n), weight(n)))
                })?;
                Ok((model.half_phase(line), inner))
            })
            .expect("infallible integrand")
        })
        .collect();
    Ok(Spectrum1D {
        label: names[kept].into(),
        x: x.to_vec(),
        values,
    })
}

/// Largest edge value of a 2-D map relative to its peak.
pub fn slice_boundary_ratio(slice: &Slice2D) -> f64 {
    let (nx, ny) = (slice.x.len(), slice.y.len());
    let peak = slice.max();
    if !(peak > 0.0) {
        return 0.0;
    }
    let mut edge: f64 = 0.0;
    for ix in 0..nx {
        edge = edge.max(slice.at(ix, 0)).max(slice.at(ix, ny - 1));
    }
    for iy in 0..ny {
        edge = edge.max(slice.at(0, iy)).max(slice.at(nx - 1, iy));
    }
    edge / peak
}

/// Smallest detuning radius, over directions in the plane `ν₊ = 0`, at
/// which `|LΔk/2|` first reaches π: the size of the central phasematching
/// lobe. `None` if no direction reaches π inside the tables.
pub fn central_lobe_radius(model: &SourceModel) -> Option<f64> {
    let reach = model.emission_reach() / 0.82;
    let mut best: Option<f64> = None;
    for j in 0..24 {
        let th = std::f64::consts::PI * j as f64 / 12.0;
        let d = from_rotated(RotatedCoords { plus: 0.0, a: th.cos(), b: th.sin() });
        let mut rho = reach * 1e-5;
        while rho < reach {
            let x = model.half_phase([rho * d[0], rho * d[1], rho * d[2]]).abs();
            if x >= std::f64::consts::PI {
                best = Some(best.map_or(rho, |b: f64| b.min(rho)));
                break;
            }
            rho *= 1.05;
        }
    }
    best
}
