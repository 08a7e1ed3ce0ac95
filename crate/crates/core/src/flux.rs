//! Absolute triplet emission rates: the pulsed-pump triple integral, its
//! monochromatic limit, the closed form for filtered non-degenerate
//! emission, its two length asymptotes, and parameter sweeps.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::constants::Constants;
use crate::error::{Error, Result};
use crate::fiber_modes::{group_slowness, FiberSpec};
use crate::nonlinearity::{nonlinear_phase, Chi3, NonlinearCoefficients};
use crate::phasematching::{ProcessFrequencies, EMISSION_MODE, PUMP_MODE};
use crate::quadrature::{integrate_resolved, GaussLegendre, PanelRule};
use crate::triplet_state::{from_rotated, sinc, PumpEnvelope, RotatedCoords, SourceModel, SpectralFilter};

/// Everything that fixes an emission rate.
#[derive(Debug, Clone)]
pub struct ProcessConfig {
    pub fiber: FiberSpec,
    /// Fiber length (m).
    pub length: f64,
    pub pump: PumpEnvelope,
    /// Average pump power (W).
    pub avg_power: f64,
    /// Pulse repetition rate (Hz); only enters through the peak power.
    pub rep_rate: f64,
    pub centers: ProcessFrequencies,
    /// Optional filter per emission mode (r, s, i).
    pub filters: [Option<SpectralFilter>; 3],
    pub chi3: Chi3,
    /// Add the self- and cross-phase term to `Δk` at the peak power.
    pub include_nonlinear_phase: bool,
}

/// Repetition rate assumed when a design does not state one.
pub const DEFAULT_REP_RATE: f64 = 1e6;

impl ProcessConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{name} = {v} must be positive")))
            }
        };
        positive("fiber length", self.length)?;
        positive("average power", self.avg_power)?;
        positive("repetition rate", self.rep_rate)?;
        let sum = self.centers.omega_r + self.centers.omega_s + self.centers.omega_i;
        if (sum - self.centers.omega_p).abs() > 1e-12 * self.centers.omega_p
            || (self.pump.omega_p0 - self.centers.omega_p).abs() > 1e-12 * self.centers.omega_p
        {
            return Err(Error::InvalidInput(
                "pump center must equal the sum of the emission centers".into(),
            ));
        }
        let e = self.centers.emission();
        for (f, c) in self.filters.iter().zip(e) {
            if let Some(f) = f {
                if (f.center - c).abs() > 1e-12 * c {
                    return Err(Error::InvalidInput(
                        "spectral filters must be centered on the emission centers".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// `P = pσ / (√(2π) R)`.
    pub fn peak_power(&self) -> f64 {
        self.avg_power * self.pump.sigma / ((2.0 * PI).sqrt() * self.rep_rate)
    }

    pub fn with_length(&self, length: f64) -> Self {
        Self { length, ..self.clone() }
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Ok(Self {
            pump: PumpEnvelope::new(self.pump.omega_p0, sigma)?,
            ..self.clone()
        })
    }

    pub fn with_power(&self, avg_power: f64) -> Self {
        Self { avg_power, ..self.clone() }
    }

    fn filter_widths(&self) -> [Option<f64>; 3] {
        self.filters.map(|f| f.map(|f| f.sigma_f))
    }

    /// Common filter bandwidth, if all three modes share one.
    pub fn common_filter(&self) -> Option<f64> {
        let w = self.filter_widths();
        match w {
            [Some(a), Some(b), Some(c)] if a == b && b == c => Some(a),
            _ => None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        let e = self.centers.emission();
        let tol = 1e-9 * e[2];
        (e[0] - e[1]).abs() < tol && (e[1] - e[2]).abs() < tol
    }

    pub fn coefficients(&self) -> Result<NonlinearCoefficients> {
        NonlinearCoefficients::compute(&self.fiber, self.chi3, self.centers.omega_p, self.centers.emission())
    }

    fn phi_nl(&self, coeffs: &NonlinearCoefficients, peak_power: f64) -> f64 {
        if self.include_nonlinear_phase {
            nonlinear_phase(coeffs, peak_power)
        } else {
            0.0
        }
    }
}

/// Walk-off `τ_μ = L(k′_p0 − k′_μ0)` (s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauCoefficients {
    pub tau_r: f64,
    pub tau_s: f64,
    pub tau_i: f64,
}

impl TauCoefficients {
    pub fn as_array(&self) -> [f64; 3] {
        [self.tau_r, self.tau_s, self.tau_i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxMethod {
    Numeric,
    Cw,
    Analytic,
    AsymptoticLong,
    AsymptoticShort,
}

impl fmt::Display for FluxMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FluxMethod::Numeric => "numeric",
            FluxMethod::Cw => "cw",
            FluxMethod::Analytic => "analytic",
            FluxMethod::AsymptoticLong => "asymptotic-long",
            FluxMethod::AsymptoticShort => "asymptotic-short",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    Long,
    Short,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FluxWarning {
    /// The fiber length sits near or on the wrong side of the regime
    /// boundary, so the asymptote is unreliable.
    RegimeMismatch { length: f64, boundary: f64 },
}

impl fmt::Display for FluxWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FluxWarning::RegimeMismatch { length, boundary } => write!(
                f,
                "fiber length {:.4} cm is not clearly inside the requested regime (boundary {:.4} cm)",
                length * 100.0,
                boundary * 100.0
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Refinement level at which the quadrature was accepted.
    pub refinements: usize,
    /// Relative change against the previous level.
    pub relative_change: f64,
    pub plus_nodes: usize,
    pub theta_points: usize,
    /// Integrand evaluations at the accepted level.
    pub evaluations: usize,
    pub phi: Option<f64>,
    pub l0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluxResult {
    /// Triplets per second.
    pub n: f64,
    /// Triplets per pump photon.
    pub eta: f64,
    pub method: FluxMethod,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<FluxWarning>,
}

/// `η = N ħω_p0 / p`.
pub fn eta(k: &Constants, n: f64, omega_p0: f64, avg_power: f64) -> f64 {
    n * k.hbar * omega_p0 / avg_power
}

/// Pump photons per second, `p / (ħω_p0)`.
pub fn pump_photon_rate(k: &Constants, omega_p0: f64, avg_power: f64) -> f64 {
    avg_power / (k.hbar * omega_p0)
}

fn result(config: &ProcessConfig, n: f64, method: FluxMethod, diagnostics: Diagnostics) -> FluxResult {
    FluxResult {
        n,
        eta: eta(&Constants::SI, n, config.centers.omega_p, config.avg_power),
        method,
        diagnostics,
        warnings: Vec::new(),
    }
}

/// `Π_μ k′_μ ω_μ / n_μ²` from the exact solver and the core index.
pub fn h_factor(fiber: &FiberSpec, freqs: &ProcessFrequencies) -> Result<f64> {
    let mut h = 1.0;
    for w in freqs.emission() {
        let n = fiber.core_index(w)?;
        h *= group_slowness(fiber, EMISSION_MODE, w)? * w / (n * n);
    }
    Ok(h)
}

/// Prefactor of the pulsed triple integral:
/// `2^{5/2} 9 ħ c³ n_p³ L² γ² p / (π^{5/2} ω_p0² σ)`.
pub fn pulsed_prefactor(k: &Constants, n_p: f64, omega_p0: f64, length: f64, gamma: f64, avg_power: f64, sigma: f64) -> f64 {
    2f64.powf(2.5) * 9.0 * k.hbar * k.c.powi(3) * n_p.powi(3) * length * length * gamma * gamma * avg_power
        / (PI.powf(2.5) * omega_p0 * omega_p0 * sigma)
}

/// Prefactor of the monochromatic double integral over `(ω_r, ω_s)`:
/// `36 ħ c³ n_p³ L² γ² p / (π² ω_p0²)`.
pub fn cw_prefactor(k: &Constants, n_p: f64, omega_p0: f64, length: f64, gamma: f64, avg_power: f64) -> f64 {
    36.0 * k.hbar * k.c.powi(3) * n_p.powi(3) * length * length * gamma * gamma * avg_power
        / (PI * PI * omega_p0 * omega_p0)
}

/// `{2√(πΦ) erf(2√Φ) + e^{−4Φ} − 1} / Φ`, tending to 4 as Φ → 0 and to
/// `2√(π/Φ)` for large Φ.
pub fn braced_factor(phi: f64) -> f64 {
    if phi < 1e-4 {
        4.0 - 8.0 / 3.0 * phi + 32.0 / 15.0 * phi * phi
    } else {
        (2.0 * (PI * phi).sqrt() * libm::erf(2.0 * phi.sqrt()) + (-4.0 * phi).exp() - 1.0) / phi
    }
}

/// `Φ = σ_f²/(32(σ²+3σ_f²)) [(σ²+2σ_f²) Στ² − 2σ_f² Σ_{μ<ν} τ_μτ_ν]`.
pub fn phi_parameter(tau: &TauCoefficients, sigma: f64, sigma_f: f64) -> f64 {
    let [a, b, c] = tau.as_array();
    let sq = a * a + b * b + c * c;
    let cross = a * b + a * c + b * c;
    let s2 = sigma * sigma;
    let f2 = sigma_f * sigma_f;
    f2 / (32.0 * (s2 + 3.0 * f2)) * ((s2 + 2.0 * f2) * sq - 2.0 * f2 * cross)
}

/// `Σk′² − Σ_{μ<ν} k′_μk′_ν`; zero iff the three slownesses coincide.
pub fn slowness_bracket(kp: [f64; 3]) -> f64 {
    let [a, b, c] = kp;
    a * a + b * b + c * c - a * b - a * c - b * c
}

/// Closed-form filtered rate.
#[allow(clippy::too_many_arguments)]
pub fn analytic_formula(
    k: &Constants,
    n_p: f64,
    omega_p0: f64,
    length: f64,
    gamma: f64,
    avg_power: f64,
    sigma: f64,
    sigma_f: f64,
    h0: f64,
    phi: f64,
) -> f64 {
    9.0 * k.hbar * k.c.powi(3) * n_p.powi(3) / (2.0 * PI * omega_p0 * omega_p0)
        * length
        * length
        * gamma
        * gamma
        * avg_power
        * sigma_f.powi(3)
        / (sigma * sigma + 3.0 * sigma_f * sigma_f).sqrt()
        * h0
        * braced_factor(phi)
}

/// Long-fiber asymptote, linear in `L`.
#[allow(clippy::too_many_arguments)]
pub fn long_regime_formula(
    k: &Constants,
    n_p: f64,
    omega_p0: f64,
    length: f64,
    gamma: f64,
    avg_power: f64,
    sigma_f: f64,
    h0: f64,
    bracket: f64,
) -> f64 {
    36.0 * k.hbar * k.c.powi(3) * n_p.powi(3) / (PI.sqrt() * omega_p0 * omega_p0 * bracket.sqrt())
        * h0
        * gamma
        * gamma
        * length
        * avg_power
        * sigma_f
}

/// Short-fiber asymptote, quadratic in `L`.
#[allow(clippy::too_many_arguments)]
pub fn short_regime_formula(
    k: &Constants,
    n_p: f64,
    omega_p0: f64,
    length: f64,
    gamma: f64,
    avg_power: f64,
    sigma_f: f64,
    h0: f64,
) -> f64 {
    18.0 * k.hbar * k.c.powi(3) * n_p.powi(3) / (3f64.sqrt() * PI * omega_p0 * omega_p0)
        * h0
        * gamma
        * gamma
        * length
        * length
        * avg_power
        * sigma_f
        * sigma_f
}

/// Group slownesses (s/m) at the pump and the three emission centers.
pub fn center_slownesses(config: &ProcessConfig) -> Result<(f64, [f64; 3])> {
    let kp = group_slowness(&config.fiber, PUMP_MODE, config.centers.omega_p)?;
    let mut ke = [0.0; 3];
    for (k, w) in ke.iter_mut().zip(config.centers.emission()) {
        *k = group_slowness(&config.fiber, EMISSION_MODE, w)?;
    }
    Ok((kp, ke))
}

pub fn tau_coefficients(config: &ProcessConfig) -> Result<TauCoefficients> {
    let (kp, ke) = center_slownesses(config)?;
    let l = config.length;
    Ok(TauCoefficients {
        tau_r: l * (kp - ke[0]),
        tau_s: l * (kp - ke[1]),
        tau_i: l * (kp - ke[2]),
    })
}

fn length_from_bracket(bracket: f64, kp: [f64; 3], sigma_f: f64) -> Result<f64> {
    let scale: f64 = kp.iter().map(|k| k * k).sum();
    if !(bracket > 1e-14 * scale) {
        return Err(Error::DegenerateDivergence);
    }
    Ok(48f64.sqrt() / (sigma_f * bracket.sqrt()))
}

/// `L₀ = √48/σ_f · [Σk′² − Σ k′_μk′_ν]^{−1/2}` (m).
pub fn characteristic_length(config: &ProcessConfig, sigma_f: f64) -> Result<f64> {
    if !(sigma_f > 0.0) {
        return Err(Error::InvalidInput(format!("filter bandwidth {sigma_f} must be positive")));
    }
    let (_, ke) = center_slownesses(config)?;
    length_from_bracket(slowness_bracket(ke), ke, sigma_f)
}

fn analytic_inputs(config: &ProcessConfig) -> Result<(f64, NonlinearCoefficients, f64)> {
    config.validate()?;
    if config.is_degenerate() {
        return Err(Error::DegenerateDesign);
    }
    let sigma_f = config.common_filter().ok_or_else(|| {
        Error::InvalidInput("the closed-form rate needs one common filter bandwidth on all three modes".into())
    })?;
    let coeffs = config.coefficients()?;
    Ok((sigma_f, coeffs, config.fiber.core_index(config.centers.omega_p)?))
}

/// Closed-form filtered rate with `h` frozen at the centers.
pub fn flux_analytic(config: &ProcessConfig) -> Result<FluxResult> {
    let (sigma_f, coeffs, n_p) = analytic_inputs(config)?;
    let tau = tau_coefficients(config)?;
    let phi = phi_parameter(&tau, config.pump.sigma, sigma_f);
    let h0 = h_factor(&config.fiber, &config.centers)?;
    let n = analytic_formula(
        &Constants::SI,
        n_p,
        config.centers.omega_p,
        config.length,
        coeffs.gamma,
        config.avg_power,
        config.pump.sigma,
        sigma_f,
        h0,
        phi,
    );
    let l0 = characteristic_length(config, sigma_f).ok();
    Ok(result(
        config,
        n,
        FluxMethod::Analytic,
        Diagnostics {
            phi: Some(phi),
            l0,
            ..Default::default()
        },
    ))
}

/// The two regimes meet where `Φ = 100`, i.e. at `L = 10 L₀`.
pub const REGIME_BOUNDARY_FACTOR: f64 = 10.0;

pub fn flux_asymptotic(config: &ProcessConfig, regime: Regime) -> Result<FluxResult> {
    let (sigma_f, coeffs, n_p) = analytic_inputs(config)?;
    let (_, ke) = center_slownesses(config)?;
    let bracket = slowness_bracket(ke);
    let l0 = length_from_bracket(bracket, ke, sigma_f)?;
    let h0 = h_factor(&config.fiber, &config.centers)?;
    let k = Constants::SI;
    let (w, l, g, p) = (config.centers.omega_p, config.length, coeffs.gamma, config.avg_power);
    let (n, method) = match regime {
        Regime::Long => (
            long_regime_formula(&k, n_p, w, l, g, p, sigma_f, h0, bracket),
            FluxMethod::AsymptoticLong,
        ),
        Regime::Short => (
            short_regime_formula(&k, n_p, w, l, g, p, sigma_f, h0),
            FluxMethod::AsymptoticShort,
        ),
    };
    let boundary = REGIME_BOUNDARY_FACTOR * l0;
    let ratio = l / boundary;
    let mismatch = (0.8..=1.2).contains(&ratio)
        || (regime == Regime::Long && ratio < 1.0)
        || (regime == Regime::Short && ratio > 1.0);
    let mut res = result(
        config,
        n,
        method,
        Diagnostics {
            l0: Some(l0),
            ..Default::default()
        },
    );
    if mismatch {
        res.warnings.push(FluxWarning::RegimeMismatch { length: l, boundary });
    }
    Ok(res)
}

/// Quadrature layout for the numerical rates. Each refinement level doubles
/// every resolution parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxNumerics {
    /// Minimum number of Gauss panels across the `ν₊` window.
    pub plus_panels: usize,
    pub plus_order: usize,
    /// Half-width of the `ν₊` window in units of σ; the envelope there is
    /// `exp(−6 w²)`.
    pub plus_extent: f64,
    pub theta_points: usize,
    /// Gauss panels across the filter window for aligned line sweeps.
    pub line_panels: usize,
    /// Coarse phase probes per radial segment.
    pub segment_coarse: usize,
    /// Largest phase advance of `LΔk/2` per radial Gauss panel.
    pub max_phase: f64,
    pub order: usize,
    /// Beyond this `|LΔk/2|` the lobes of sinc² are replaced by their mean
    /// `1/(2x²)`; chosen where `sin² x = 1/2` so the switch is continuous.
    pub lobe_phase: f64,
    /// Unfiltered rays stop where `|LΔk/2|` reaches this value and the
    /// remainder is added from the local power law.
    pub end_phase: f64,
    /// Filtered rays stop at this many filter widths.
    pub filter_extent: f64,
    pub tolerance: f64,
    pub max_refinements: usize,
}

impl Default for FluxNumerics {
    fn default() -> Self {
        Self {
            plus_panels: 4,
            plus_order: 8,
            plus_extent: 2.6,
            theta_points: 32,
            line_panels: 8,
            segment_coarse: 2,
            max_phase: std::f64::consts::FRAC_PI_2,
            order: 6,
            lobe_phase: 40.25 * PI,
            end_phase: 2000.0,
            filter_extent: 4.5,
            tolerance: 2e-3,
            max_refinements: 3,
        }
    }
}

impl FluxNumerics {
    /// Multiply the base resolution by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidInput(format!("grid scale {factor} must be positive")));
        }
        let up = |n: usize| ((n as f64 * factor).ceil() as usize).max(1);
        Ok(Self {
            plus_panels: up(self.plus_panels),
            theta_points: up(self.theta_points).max(4),
            line_panels: up(self.line_panels),
            segment_coarse: up(self.segment_coarse),
            max_phase: self.max_phase / factor,
            ..*self
        })
    }

    fn level(&self, k: usize) -> Self {
        let m = 1usize << k;
        Self {
            plus_panels: self.plus_panels * m,
            theta_points: self.theta_points * m,
            line_panels: self.line_panels * m,
            segment_coarse: self.segment_coarse * m,
            max_phase: self.max_phase / m as f64,
            ..*self
        }
    }
}

/// Emission span needed around the centers for the numerical rates.
fn emission_span(config: &ProcessConfig, numerics: &FluxNumerics, sigma_max: f64) -> f64 {
    let e = config.centers.emission();
    let plus = numerics.plus_extent * sigma_max;
    match config.filter_widths() {
        [Some(a), Some(b), Some(c)] => {
            let s = a.max(b).max(c);
            (numerics.filter_extent * s * 1.05 + plus).min(0.6 * e.iter().cloned().fold(f64::INFINITY, f64::min))
        }
        _ => 0.6 * e.iter().cloned().fold(f64::INFINITY, f64::min),
    }
}

/// Dispersion tables for `config`, wide enough for bandwidths up to
/// `sigma_max`.
pub fn source_model(config: &ProcessConfig, numerics: &FluxNumerics, sigma_max: f64, phi_nl: f64) -> Result<SourceModel> {
    config.validate()?;
    let sigma_max = sigma_max.max(config.pump.sigma);
    let model = SourceModel::new(
        &config.fiber,
        config.length,
        sigma_max,
        config.centers,
        phi_nl,
        emission_span(config, numerics, sigma_max),
    )?;
    model.with_parameters(config.length, config.pump.sigma, phi_nl)
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// How the plane `ν₊ = const` is swept.
#[derive(Debug, Clone, Copy)]
enum Layout {
    /// Rays from the center; suited to membranes that are rings or points
    /// about the center.
    Polar,
    /// Parallel lines along the in-plane phase gradient `u`, stacked along
    /// `v`; suited to filtered emission where the membrane crosses the
    /// filter window as a nearly straight sheet.
    Aligned { u: [f64; 3], v: [f64; 3] },
}

struct PlaneContext<'a> {
    model: &'a SourceModel,
    inv_filter: [f64; 3],
    filter_cap: Option<f64>,
    numerics: FluxNumerics,
    layout: Layout,
}

fn add(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + t * b[0], a[1] + t * b[1], a[2] + t * b[2]]
}

impl PlaneContext<'_> {
    fn direction(theta: f64) -> [f64; 3] {
        from_rotated(RotatedCoords {
            plus: 0.0,
            a: theta.cos(),
            b: theta.sin(),
        })
    }

    // Largest t keeping every emission frequency of `offset + t dir` inside
    // the tables.
    fn table_reach(&self, offset: [f64; 3], dir: [f64; 3]) -> f64 {
        let reach = self.model.emission_reach();
        let mut t = f64::INFINITY;
        for k in 0..3 {
            if dir[k].abs() > 1e-12 {
                let room = reach - offset[k] * dir[k].signum();
                t = t.min(room / dir[k].abs());
            }
        }
        t * (1.0 - 1e-9)
    }

    // (phase used for panel splitting, h·sinc²·filter² at `nu`).
    fn eval(&self, nu: [f64; 3]) -> (f64, f64) {
        let x = self.model.half_phase(nu);
        let lobe = self.numerics.lobe_phase;
        let s2 = if x.abs() > lobe { 0.5 / (x * x) } else { sinc(x).powi(2) };
        let fexp = -2.0
            * (nu[0] * nu[0] * self.inv_filter[0]
                + nu[1] * nu[1] * self.inv_filter[1]
                + nu[2] * nu[2] * self.inv_filter[2]);
        (x.clamp(-lobe, lobe), self.model.h(nu) * s2 * fexp.exp())
    }

    fn rule(&self, coarse: usize) -> PanelRule {
        PanelRule {
            coarse,
            max_phase: self.numerics.max_phase,
            order: self.numerics.order,
            max_split: 1 << 16,
        }
    }

    /// Sweep parameters and weights of the lines covering the plane.
    fn lines(&self) -> Vec<(f64, f64)> {
        match self.layout {
            Layout::Polar => {
                let n = self.numerics.theta_points;
                let w = 2.0 * PI / n as f64;
                (0..n).map(|j| (w * j as f64, w)).collect()
            }
            Layout::Aligned { .. } => {
                let cap = self.filter_cap.expect("aligned layout needs filters");
                composite_gauss(-cap, cap, self.numerics.line_panels, self.numerics.plus_order)
            }
        }
    }

    fn line(&self, nu_plus: f64, param: f64) -> Result<(f64, usize)> {
        let offset = [nu_plus / SQRT3; 3];
        match self.layout {
            Layout::Polar => self.ray(offset, param),
            Layout::Aligned { u, v } => {
                let cap = self.filter_cap.expect("aligned layout needs filters");
                let base = add(offset, v, param);
                let half = (cap * cap - param * param).max(0.0).sqrt();
                let neg = [-u[0], -u[1], -u[2]];
                let lo = -half.min(self.table_reach(base, neg));
                let hi = half.min(self.table_reach(base, u));
                let mut evals = 0usize;
                let total = integrate_resolved(lo, hi, self.rule(16 * self.numerics.segment_coarse), |t| {
                    evals += 1;
                    Ok(self.eval(add(base, u, t)))
                })?;
                Ok((total, evals))
            }
        }
    }

    /// `∫ ρ h sinc² dρ` along the ray at angle `theta`.
    fn ray(&self, offset: [f64; 3], theta: f64) -> Result<(f64, usize)> {
        let dir = Self::direction(theta);
        let reach = self.table_reach(offset, dir);
        let cap = self.filter_cap.map_or(reach, |c| c.min(reach));
        let rule = self.rule(self.numerics.segment_coarse);
        let half_phase = |rho: f64| self.model.half_phase(add(offset, dir, rho)).abs();
        let radial = |rho: f64| {
            let (x, v) = self.eval(add(offset, dir, rho));
            (x, rho * v)
        };

        // Geometric segments keep the small-ρ structure resolved when the
        // ray is long.
        let mut edges = vec![0.0, cap * 1e-4];
        let mut x_prev = half_phase(edges[1]);
        let mut tail_from = None;
        loop {
            let last = *edges.last().unwrap();
            if last >= cap {
                break;
            }
            let next = (last * 1.25).min(cap);
            let x = half_phase(next);
            edges.push(next);
            let growing = x > x_prev;
            x_prev = x;
            if self.filter_cap.is_none() && x >= self.numerics.end_phase && growing {
                tail_from = Some(next);
                break;
            }
        }
        let mut evals = 0usize;
        let mut total = 0.0;
        for seg in edges.windows(2) {
            total += integrate_resolved(seg[0], seg[1], rule, |rho| {
                evals += 1;
                Ok(radial(rho))
            })?;
        }
        let end = *edges.last().unwrap();
        let truncated = self.filter_cap.is_none() || end < self.filter_cap.unwrap_or(f64::INFINITY);
        if truncated {
            // Averaged lobes, x ∝ ρ^q beyond the end: ∫ ρ g/(2x²) dρ.
            let rho = tail_from.unwrap_or(end);
            let x1 = half_phase(rho);
            let x0 = half_phase(0.9 * rho);
            let q = (x1 / x0).ln() / (1.0 / 0.9f64).ln();
            if !(x1 > self.numerics.lobe_phase && q > 1.25) {
                return Err(Error::NonConvergent {
                    change: f64::INFINITY,
                    refinements: 0,
                });
            }
            let g = radial(rho).1 * 2.0 * x1 * x1 / rho;
            total += g * rho * rho / (2.0 * x1 * x1 * (2.0 * q - 2.0));
        }
        Ok((total, evals))
    }
}

/// Filtered windows in which the linear phase at the filter edge exceeds
/// this are swept with aligned lines.
const ALIGNED_PHASE: f64 = 20.0;

fn plane_context<'a>(model: &'a SourceModel, filters: [Option<f64>; 3], numerics: FluxNumerics) -> PlaneContext<'a> {
    let inv_filter = filters.map(|f| f.map_or(0.0, |s| 1.0 / (s * s)));
    let filter_cap = match filters {
        [Some(a), Some(b), Some(c)] => Some(numerics.filter_extent * a.max(b).max(c)),
        _ => None,
    };
    let mut layout = Layout::Polar;
    if let Some(cap) = filter_cap {
        // ∂(LΔk/2)/∂ν_μ at the centers, projected on the plane.
        let kp = model.pump_slowness();
        let c: Vec<f64> = model
            .centers
            .emission()
            .iter()
            .map(|&w| 0.5 * model.length * (kp - model.emission_slowness(w)))
            .collect();
        let ea = PlaneContext::direction(0.0);
        let eb = PlaneContext::direction(0.5 * PI);
        let ga: f64 = (0..3).map(|k| c[k] * ea[k]).sum();
        let gb: f64 = (0..3).map(|k| c[k] * eb[k]).sum();
        let g = ga.hypot(gb);
        if g * cap > ALIGNED_PHASE {
            let (ua, ub) = (ga / g, gb / g);
            let u = [0, 1, 2].map(|k| ua * ea[k] + ub * eb[k]);
            let v = [0, 1, 2].map(|k| -ub * ea[k] + ua * eb[k]);
            layout = Layout::Aligned { u, v };
        }
    }
    PlaneContext {
        model,
        inv_filter,
        filter_cap,
        numerics,
        layout,
    }
}

fn composite_gauss(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let gl = GaussLegendre::cached(order);
    let width = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * width;
        out.extend(gl.mapped(lo, lo + width));
    }
    out
}

fn plus_nodes(model: &SourceModel, numerics: &FluxNumerics, layout: Layout) -> Vec<(f64, f64)> {
    let sigma = model.pump.sigma;
    let half = numerics.plus_extent * sigma;
    if let Layout::Aligned { .. } = layout {
        // The sheet only shifts inside a much wider filter window.
        return composite_gauss(-half, half, numerics.plus_panels, numerics.plus_order);
    }
    // Rings about the center change with the walk-off phase Στ ν₊ / (2√3).
    let kp = model.pump_slowness();
    let walk: f64 = model
        .centers
        .emission()
        .iter()
        .map(|&w| model.length * (kp - model.emission_slowness(w)))
        .sum();
    let phase_span = walk.abs() / (2.0 * SQRT3) * 2.0 * half;
    let base = (phase_span / numerics.max_phase).ceil() as usize;
    let panels = numerics.plus_panels.max(base.min(256 * numerics.plus_panels));
    composite_gauss(-half, half, panels, numerics.plus_order)
}

/// `(∫dν₊ e^{−6ν₊²/σ²} ∫∫ h sinc² dν_A dν_B, evaluations, ν₊ nodes)` at one
/// level.
fn pulsed_level(model: &SourceModel, filters: [Option<f64>; 3], numerics: FluxNumerics) -> Result<(f64, usize, usize)> {
    let ctx = plane_context(model, filters, numerics);
    let plus = plus_nodes(model, &numerics, ctx.layout);
    let lines = ctx.lines();
    let sigma = model.pump.sigma;
    let tasks: Vec<(usize, usize)> = (0..plus.len())
        .flat_map(|i| (0..lines.len()).map(move |j| (i, j)))
        .collect();
    let values: Vec<(f64, usize)> = tasks
        .par_iter()
        .map(|&(i, j)| ctx.line(plus[i].0, lines[j].0))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut evals = 0;
    for (&(i, j), (v, e)) in tasks.iter().zip(&values) {
        let (nu, w) = plus[i];
        let env = (-6.0 * nu * nu / (sigma * sigma)).exp();
        total += w * env * lines[j].1 * v;
        evals += e;
    }
    Ok((total, evals, plus.len()))
}

fn cw_level(model: &SourceModel, filters: [Option<f64>; 3], numerics: FluxNumerics) -> Result<(f64, usize, usize)> {
    let ctx = plane_context(model, filters, numerics);
    let lines = ctx.lines();
    let values: Vec<(f64, usize)> = lines.par_iter().map(|&(p, _)| ctx.line(0.0, p)).collect::<Result<_>>()?;
    let total = values.iter().zip(&lines).map(|(v, l)| v.0 * l.1).sum();
    Ok((total, values.iter().map(|r| r.1).sum(), 1))
}

fn converge<F>(numerics: &FluxNumerics, mut level: F) -> Result<(f64, Diagnostics)>
where
    F: FnMut(FluxNumerics) -> Result<(f64, usize, usize)>,
{
    let mut prev = level(numerics.level(0))?.0;
    let mut change = f64::INFINITY;
    for k in 1..=numerics.max_refinements.max(1) {
        let lv = numerics.level(k);
        let (value, evaluations, plus_nodes) = level(lv)?;
        change = ((value - prev) / value).abs();
        if change < numerics.tolerance {
            return Ok((
                value,
                Diagnostics {
                    refinements: k,
                    relative_change: change,
                    plus_nodes,
                    theta_points: lv.theta_points,
                    evaluations,
                    ..Default::default()
                },
            ));
        }
        prev = value;
    }
    Err(Error::NonConvergent {
        change,
        refinements: numerics.max_refinements,
    })
}

/// Converged `∫∫∫ h |f|²` over detunings (rad³/s³ times the units of `h`).
pub fn pulsed_integral(model: &SourceModel, filters: [Option<f64>; 3], numerics: &FluxNumerics) -> Result<(f64, Diagnostics)> {
    converge(numerics, |lv| pulsed_level(model, filters, lv))
}

/// Converged `∫∫ h sinc² dν_A dν_B` on the plane `ν₊ = 0`.
pub fn cw_integral(model: &SourceModel, filters: [Option<f64>; 3], numerics: &FluxNumerics) -> Result<(f64, Diagnostics)> {
    converge(numerics, |lv| cw_level(model, filters, lv))
}

/// Pulsed-pump rate from the triple integral with per-voxel dispersion.
pub fn flux_pulsed_numeric(config: &ProcessConfig, numerics: &FluxNumerics) -> Result<FluxResult> {
    config.validate()?;
    let coeffs = config.coefficients()?;
    let phi_nl = config.phi_nl(&coeffs, config.peak_power());
    let model = source_model(config, numerics, config.pump.sigma, phi_nl)?;
    pulsed_from_model(config, &coeffs, &model, numerics)
}

fn pulsed_from_model(
    config: &ProcessConfig,
    coeffs: &NonlinearCoefficients,
    model: &SourceModel,
    numerics: &FluxNumerics,
) -> Result<FluxResult> {
    let (integral, diag) = pulsed_integral(model, config.filter_widths(), numerics)?;
    let n_p = config.fiber.core_index(config.centers.omega_p)?;
    let pref = pulsed_prefactor(
        &Constants::SI,
        n_p,
        config.centers.omega_p,
        config.length,
        coeffs.gamma,
        config.avg_power,
        config.pump.sigma,
    );
    Ok(result(config, pref * integral, FluxMethod::Numeric, diag))
}

/// Monochromatic-pump rate at `ω_p0`.
pub fn flux_cw(config: &ProcessConfig, numerics: &FluxNumerics) -> Result<FluxResult> {
    config.validate()?;
    let coeffs = config.coefficients()?;
    // A continuous pump has peak power equal to its average power.
    let phi_nl = config.phi_nl(&coeffs, config.avg_power);
    let model = source_model(config, numerics, config.pump.sigma, phi_nl)?;
    let (integral, diag) = cw_integral(&model, config.filter_widths(), numerics)?;
    let n_p = config.fiber.core_index(config.centers.omega_p)?;
    let pref = cw_prefactor(&Constants::SI, n_p, config.centers.omega_p, config.length, coeffs.gamma, config.avg_power);
    // dν_r dν_s = dν_A dν_B / √3 on the plane.
    Ok(result(config, pref * integral / SQRT3, FluxMethod::Cw, diag))
}

/// Monochromatic conversion efficiency.
pub fn eta_cw(config: &ProcessConfig, numerics: &FluxNumerics) -> Result<f64> {
    Ok(flux_cw(config, numerics)?.eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    /// Pump bandwidth (rad/s) at fixed average power and repetition rate,
    /// hence fixed energy per pulse.
    Sigma,
    /// Fiber length (m).
    Length,
    /// Average pump power (W).
    Power,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub results: Vec<FluxResult>,
}

/// Rates along one parameter. `methods` must not contain the asymptotic
/// tags twice; analytic columns are skipped for degenerate designs.
pub fn sweep(
    config: &ProcessConfig,
    parameter: SweepParameter,
    values: &[f64],
    methods: &[FluxMethod],
    numerics: &FluxNumerics,
) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let coeffs = config.coefficients()?;
    let configs: Vec<ProcessConfig> = values
        .iter()
        .map(|&v| match parameter {
            SweepParameter::Sigma => config.with_sigma(v),
            SweepParameter::Length => Ok(config.with_length(v)),
            SweepParameter::Power => Ok(config.with_power(v)),
        })
        .collect::<Result<_>>()?;
    let sigma_max = configs.iter().map(|c| c.pump.sigma).fold(0.0, f64::max);
    let needs_model = methods.iter().any(|m| matches!(m, FluxMethod::Numeric | FluxMethod::Cw));
    let base = if needs_model {
        Some(source_model(config, numerics, sigma_max, 0.0)?)
    } else {
        None
    };
    // With Φ_NL off the numeric integral does not depend on p.
    let mut power_cache: Option<(f64, Diagnostics)> = None;
    let mut rows = Vec::with_capacity(values.len());
    for (c, &v) in configs.iter().zip(values) {
        let mut results = Vec::with_capacity(methods.len());
        for &m in methods {
            let r = match m {
                FluxMethod::Numeric => {
                    let base = base.as_ref().expect("model built for numeric methods");
                    let phi_nl = c.phi_nl(&coeffs, c.peak_power());
                    let model = base.with_parameters(c.length, c.pump.sigma, phi_nl)?;
                    if parameter == SweepParameter::Power && !c.include_nonlinear_phase {
                        if power_cache.is_none() {
                            power_cache = Some(pulsed_integral(&model, c.filter_widths(), numerics)?);
                        }
                        let (integral, diag) = power_cache.clone().unwrap();
                        let n_p = c.fiber.core_index(c.centers.omega_p)?;
                        let pref = pulsed_prefactor(&Constants::SI, n_p, c.centers.omega_p, c.length, coeffs.gamma, c.avg_power, c.pump.sigma);
                        result(c, pref * integral, FluxMethod::Numeric, diag)
                    } else {
                        pulsed_from_model(c, &coeffs, &model, numerics)?
                    }
                }
                FluxMethod::Cw => flux_cw(c, numerics)?,
                FluxMethod::Analytic if c.is_degenerate() => continue,
                FluxMethod::Analytic => flux_analytic(c)?,
                FluxMethod::AsymptoticLong => flux_asymptotic(c, Regime::Long)?,
                FluxMethod::AsymptoticShort => flux_asymptotic(c, Regime::Short)?,
            };
            results.push(r);
        }
        rows.push(SweepRow { value: v, results });
    }
    Ok(rows)
}

/// One CSV row per (value, method), with `param_value` in the SI unit of
/// the swept parameter.
pub fn write_sweep_csv<W: Write + ?Sized>(out: &mut W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(out, "param_value,N_triplets_per_s,eta,method")?;
    for row in rows {
        for r in &row.results {
            write!(out, "{},", crate::output::fmt_num(row.value))?;
            write!(out, "{},", crate::output::fmt_num(r.n))?;
            write!(out, "{},", crate::output::fmt_num(r.eta))?;
            writeln!(out, "{}", r.method)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn braced_factor_limits() {
        assert!((braced_factor(0.0) - 4.0).abs() < 1e-15);
        // The closed form just above the series cutoff agrees with the series.
        let phi = 1.001e-4;
        let series = 4.0 - 8.0 / 3.0 * phi + 32.0 / 15.0 * phi * phi;
        assert!((braced_factor(phi) - series).abs() < 1e-9);
        let phi = 100.0;
        let lim = 2.0 * (PI / phi).sqrt();
        assert!((braced_factor(phi) / lim - 1.0).abs() < 0.03);
    }

    #[test]
    fn phi_vanishes_for_trivial_walkoff() {
        let zero = TauCoefficients { tau_r: 0.0, tau_s: 0.0, tau_i: 0.0 };
        assert_eq!(phi_parameter(&zero, 1e10, 1e13), 0.0);
        let eq = TauCoefficients { tau_r: 7e-11, tau_s: 7e-11, tau_i: 7e-11 };
        assert!(phi_parameter(&eq, 0.0, 1e13).abs() < 1e-30);
    }

    #[test]
    fn asymptotes_follow_from_closed_form() {
        let k = Constants::SI;
        let (n_p, w, g, p, sf, h0): (f64, f64, f64, f64, f64, f64) = (1.46, 3.5e15, 0.3, 0.2, 1.5e13, 1e20);
        let bracket: f64 = 4e-22;
        let l0 = 48f64.sqrt() / (sf * bracket.sqrt());
        // σ → 0 makes Φ = (L/L₀)² exactly.
        let long_l = 1e4 * l0;
        let phi = (long_l / l0).powi(2);
        let exact = analytic_formula(&k, n_p, w, long_l, g, p, 0.0, sf, h0, phi);
        let long = long_regime_formula(&k, n_p, w, long_l, g, p, sf, h0, bracket);
        assert!((exact / long - 1.0).abs() < 1e-3);
        let short_l = 1e-4 * l0;
        let phi = (short_l / l0).powi(2);
        let exact = analytic_formula(&k, n_p, w, short_l, g, p, 0.0, sf, h0, phi);
        let short = short_regime_formula(&k, n_p, w, short_l, g, p, sf, h0);
        assert!((exact / short - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cw_prefactor_is_the_narrowband_limit() {
        // σ → 0: pref/σ ∫ e^{−6ν²/σ²} dν = pref √(π/6) equals the plane
        // prefactor with dν_r dν_s = dν_A dν_B / √3.
        let k = Constants::SI;
        let pulsed = pulsed_prefactor(&k, 1.46, 3.5e15, 0.1, 0.3, 0.2, 1.0) * (PI / 6.0).sqrt();
        let cw = cw_prefactor(&k, 1.46, 3.5e15, 0.1, 0.3, 0.2) / SQRT3;
        assert!((pulsed / cw - 1.0).abs() < 1e-14);
    }
}
