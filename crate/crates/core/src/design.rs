//! Design files: human-scale units (µm, GHz, THz, mW, MHz, cm) converted to
//! SI in one place.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constants::{omega_from_wavelength, wavelength_from_omega};
use crate::dispersion::SellmeierModel;
use crate::error::{Error, Result};
use crate::fiber_modes::FiberSpec;
use crate::flux::{FluxNumerics, ProcessConfig, DEFAULT_REP_RATE};
use crate::nonlinearity::Chi3;
use crate::phasematching::{find_phasematching_radius, phasematched_offsets, ContourOptions, ProcessFrequencies};
use crate::triplet_state::{PumpEnvelope, SpectralFilter};

/// Bundled frequency-degenerate design.
pub const DEGENERATE_PRESET: &str = include_str!("../designs/degenerate.toml");
/// Bundled non-degenerate design with 15 THz filters.
pub const NONDEGENERATE_PRESET: &str = include_str!("../designs/nondegenerate.toml");

/// Radius bracket searched when a design fixes the phasematching
/// wavelength rather than the radius.
pub const DEFAULT_RADIUS_BRACKET_UM: [f64; 2] = [0.25, 0.6];

/// Given and energy-conserving signal-2 frequencies may differ by this much
/// when a design lists all three emission wavelengths.
pub const ENERGY_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    #[serde(default)]
    pub name: Option<String>,
    pub fiber: FiberSection,
    pub pump: PumpSection,
    #[serde(default)]
    pub emission: EmissionSection,
    pub fiber_length_cm: f64,
    #[serde(default, rename = "chi3_m2_V2")]
    pub chi3_m2_v2: Option<f64>,
    #[serde(default)]
    pub numerics: NumericsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSection {
    /// Core radius; exclusive with `phasematch_lambda_um`.
    #[serde(default)]
    pub radius_um: Option<f64>,
    /// Choose the radius that phasematches degenerate emission here.
    #[serde(default)]
    pub phasematch_lambda_um: Option<f64>,
    #[serde(default)]
    pub radius_bracket_um: Option<[f64; 2]>,
    /// `"fused_silica"` or a path to a Sellmeier file, relative to the
    /// design file.
    #[serde(default = "default_material")]
    pub material: String,
    #[serde(default = "default_cladding")]
    pub cladding_index: f64,
}

fn default_material() -> String {
    "fused_silica".into()
}

fn default_cladding() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSection {
    pub lambda_um: f64,
    /// Bandwidth σ in 10⁹ rad/s.
    #[serde(rename = "sigma_GHz")]
    pub sigma_ghz: f64,
    #[serde(rename = "avg_power_mW")]
    pub avg_power_mw: f64,
    #[serde(default, rename = "rep_rate_MHz")]
    pub rep_rate_mhz: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmissionSection {
    #[serde(default)]
    pub lambda_r_um: Option<f64>,
    #[serde(default)]
    pub lambda_s_um: Option<f64>,
    #[serde(default)]
    pub lambda_i_um: Option<f64>,
    /// Common filter bandwidth σ_f in 10¹² rad/s.
    #[serde(default, rename = "filter_THz")]
    pub filter_thz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    #[serde(default = "one")]
    pub grid_scale: f64,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub max_refinements: Option<usize>,
    #[serde(default = "default_jsa_points")]
    pub jsa_points: usize,
    #[serde(default = "default_map_points")]
    pub map_points: usize,
    #[serde(default)]
    pub nonlinear_phase: bool,
}

fn one() -> f64 {
    1.0
}

fn default_jsa_points() -> usize {
    128
}

fn default_map_points() -> usize {
    50
}

impl Default for NumericsSection {
    fn default() -> Self {
        Self {
            grid_scale: 1.0,
            tolerance: None,
            max_refinements: None,
            jsa_points: default_jsa_points(),
            map_points: default_map_points(),
            nonlinear_phase: false,
        }
    }
}

/// A resolved design ready for computation.
#[derive(Debug, Clone)]
pub struct Design {
    pub name: String,
    pub config: ProcessConfig,
    pub numerics: FluxNumerics,
    pub jsa_points: usize,
    pub map_points: usize,
    /// Degenerate phasematching wavelength the radius was solved for.
    pub phasematch_lambda: Option<f64>,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidInput(format!("{name} = {v} must be positive")))
    }
}

impl DesignFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("design file: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("design serializes")
    }

    /// Resolve into SI quantities. `base_dir` anchors relative material
    /// paths.
    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<Design> {
        let core = match self.fiber.material.as_str() {
            "fused_silica" | "silica" => SellmeierModel::fused_silica(),
            path => {
                let p: PathBuf = match base_dir {
                    Some(d) => d.join(path),
                    None => PathBuf::from(path),
                };
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| Error::InvalidInput(format!("material file {}: {e}", p.display())))?;
                SellmeierModel::from_toml(&text)?
            }
        };
        let placeholder = FiberSpec::new(0.4e-6, core, self.fiber.cladding_index)?;
        let (fiber, phasematch_lambda) = match (self.fiber.radius_um, self.fiber.phasematch_lambda_um) {
            (Some(r), None) => (placeholder.with_radius(positive("radius_um", r)? * 1e-6)?, None),
            (None, Some(l)) => {
                let lambda = positive("phasematch_lambda_um", l)? * 1e-6;
                let b = self.fiber.radius_bracket_um.unwrap_or(DEFAULT_RADIUS_BRACKET_UM);
                let r = find_phasematching_radius(&placeholder, lambda, (b[0] * 1e-6, b[1] * 1e-6))?;
                (placeholder.with_radius(r)?, Some(lambda))
            }
            _ => {
                return Err(Error::InvalidInput(
                    "fiber needs exactly one of radius_um and phasematch_lambda_um".into(),
                ))
            }
        };
        let omega_p = omega_from_wavelength(positive("pump lambda_um", self.pump.lambda_um)? * 1e-6);
        let sigma = positive("sigma_GHz", self.pump.sigma_ghz)? * 1e9;
        let centers = resolve_emission(&fiber, omega_p, &self.emission)?;
        let filters = match self.emission.filter_thz {
            Some(f) => {
                let s = positive("filter_THz", f)? * 1e12;
                let e = centers.emission();
                [
                    Some(SpectralFilter::new(e[0], s)?),
                    Some(SpectralFilter::new(e[1], s)?),
                    Some(SpectralFilter::new(e[2], s)?),
                ]
            }
            None => [None; 3],
        };
        let chi3 = match self.chi3_m2_v2 {
            Some(v) => Chi3::new(v)?,
            None => Chi3::default(),
        };
        let config = ProcessConfig {
            fiber,
            length: positive("fiber_length_cm", self.fiber_length_cm)? * 1e-2,
            pump: PumpEnvelope::new(centers.omega_p, sigma)?,
            avg_power: positive("avg_power_mW", self.pump.avg_power_mw)? * 1e-3,
            rep_rate: match self.pump.rep_rate_mhz {
                Some(r) => positive("rep_rate_MHz", r)? * 1e6,
                None => DEFAULT_REP_RATE,
            },
            centers,
            filters,
            chi3,
            include_nonlinear_phase: self.numerics.nonlinear_phase,
        };
        config.validate()?;
        let mut numerics = FluxNumerics::default().scaled(self.numerics.grid_scale)?;
        if let Some(t) = self.numerics.tolerance {
            numerics.tolerance = positive("tolerance", t)?;
        }
        if let Some(m) = self.numerics.max_refinements {
            numerics.max_refinements = m.max(1);
        }
        if self.numerics.jsa_points < 3 || self.numerics.map_points < 2 {
            return Err(Error::InvalidInput("numerics: jsa_points ≥ 3 and map_points ≥ 2 required".into()));
        }
        Ok(Design {
            name: self.name.clone().unwrap_or_else(|| "design".into()),
            config,
            numerics,
            jsa_points: self.numerics.jsa_points,
            map_points: self.numerics.map_points,
            phasematch_lambda,
        })
    }
}

/// Emission centers from whichever wavelengths the design lists:
/// none gives degenerate emission at ω_p/3; the idler alone fixes the
/// phasematched signal pair (ω_r > ω_s); two or three follow energy
/// conservation.
pub fn resolve_emission(fiber: &FiberSpec, omega_p: f64, e: &EmissionSection) -> Result<ProcessFrequencies> {
    let w = |v: Option<f64>, name: &str| -> Result<Option<f64>> {
        v.map(|l| Ok(omega_from_wavelength(positive(name, l)? * 1e-6))).transpose()
    };
    let (wr, ws, wi) = (
        w(e.lambda_r_um, "lambda_r_um")?,
        w(e.lambda_s_um, "lambda_s_um")?,
        w(e.lambda_i_um, "lambda_i_um")?,
    );
    let remainder = |a: f64, b: f64| {
        let c = omega_p - a - b;
        if c > 0.0 {
            Ok(c)
        } else {
            Err(Error::InvalidInput("emission frequencies exceed the pump frequency".into()))
        }
    };
    match (wr, ws, wi) {
        (None, None, None) => ProcessFrequencies::degenerate(omega_p),
        (None, None, Some(wi)) => {
            let offsets = phasematched_offsets(fiber, omega_p, wi, &ContourOptions::default())?;
            let delta = offsets
                .iter()
                .map(|p| p.0)
                .filter(|&d| d > 0.0)
                .fold(None, |best: Option<f64>, d| Some(best.map_or(d, |b| b.min(d))))
                .or_else(|| offsets.iter().any(|p| p.0 == 0.0).then_some(0.0))
                .ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "no phasematched signal pair for idler {:.4} um at this pump",
                        wavelength_from_omega(wi) * 1e6
                    ))
                })?;
            let f = ProcessFrequencies::from_detuning(omega_p, wi, delta)?;
            ProcessFrequencies::from_emission(f.omega_r, omega_p - f.omega_r - wi, wi)
        }
        (Some(wr), Some(ws), Some(wi)) => {
            let s = remainder(wr, wi)?;
            if ((s - ws) / ws).abs() > ENERGY_TOLERANCE {
                return Err(Error::InvalidInput(format!(
                    "emission wavelengths violate energy conservation: signal-2 should be {:.4} um",
                    wavelength_from_omega(s) * 1e6
                )));
            }
            ProcessFrequencies::from_emission(wr, s, wi)
        }
        (Some(wr), Some(ws), None) => ProcessFrequencies::from_emission(wr, ws, remainder(wr, ws)?),
        (Some(wr), None, Some(wi)) => ProcessFrequencies::from_emission(wr, remainder(wr, wi)?, wi),
        (None, Some(ws), Some(wi)) => ProcessFrequencies::from_emission(remainder(ws, wi)?, ws, wi),
        _ => Err(Error::InvalidInput(
            "give no emission wavelength, the idler alone, or at least two".into(),
        )),
    }
}

impl Design {
    pub fn from_toml(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        DesignFile::from_toml(text)?.resolve(base_dir)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("design file {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent())
    }

    /// Bundled designs: `degenerate` and `nondegenerate`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "degenerate" => Self::from_toml(DEGENERATE_PRESET, None),
            "nondegenerate" => Self::from_toml(NONDEGENERATE_PRESET, None),
            other => Err(Error::InvalidInput(format!("unknown preset {other}"))),
        }
    }

    /// Visualization variant with a 100× shorter fiber and a 200× wider pump,
    /// which widens every feature of the joint spectrum.
    pub fn broadened(&self) -> Result<Self> {
        let c = self.config.with_length(self.config.length / 100.0).with_sigma(self.config.pump.sigma * 200.0)?;
        Ok(Self {
            name: format!("{}-broadened", self.name),
            config: c,
            ..self.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_both_radius_and_wavelength() {
        let text = DEGENERATE_PRESET.replace("[fiber]", "[fiber]\nradius_um = 0.4");
        assert!(matches!(Design::from_toml(&text, None), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn unit_conversion_at_the_boundary() {
        let d = Design::preset("degenerate").unwrap();
        let c = &d.config;
        assert!((c.length - 0.1).abs() < 1e-15);
        assert!((c.avg_power - 0.2).abs() < 1e-15);
        assert!((c.pump.sigma - 23.5e9).abs() < 1e-3);
        assert!((c.fiber.radius - 0.395_184_8e-6).abs() < 2e-12);
        assert!(c.is_degenerate());
    }

    #[test]
    fn unbalanced_triplet_is_rejected() {
        let mut f = DesignFile::from_toml(NONDEGENERATE_PRESET).unwrap();
        f.emission.lambda_r_um = Some(1.40);
        f.emission.lambda_s_um = Some(1.70);
        assert!(f.resolve(None).is_err());
    }
}
