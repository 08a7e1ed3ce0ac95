//! Sellmeier refractive-index models.

use serde::{Deserialize, Serialize};

use crate::constants::wavelength_from_omega;
use crate::error::{Error, Result};

/// One Sellmeier resonance: strength `b` and resonance wavelength squared
/// `c_um2` (µm²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SellmeierTerm {
    pub b: f64,
    pub c_um2: f64,
}

/// `n² = 1 + Σ B_j λ² / (λ² − C_j)`, valid on `[validity.0, validity.1]` (m).
#[derive(Debug, Clone, PartialEq)]
pub struct SellmeierModel {
    pub name: String,
    terms: Vec<SellmeierTerm>,
    validity: (f64, f64),
}

/// On-disk material description; wavelengths in micrometers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaterialFile {
    pub name: String,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(rename = "C_um2")]
    pub c_um2: Vec<f64>,
    pub validity_um: [f64; 2],
}

impl SellmeierModel {
    /// Build a model. Strengths must be non-negative (zero gives a vacuum
    /// term), resonances must lie outside the validity window, and the index
    /// must exceed 1 throughout it.
    pub fn new(name: impl Into<String>, terms: Vec<SellmeierTerm>, validity: (f64, f64)) -> Result<Self> {
        let (lo, hi) = validity;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "validity range [{lo:e}, {hi:e}] m is empty or non-positive"
            )));
        }
        for t in &terms {
            if !(t.b >= 0.0 && t.c_um2 >= 0.0 && t.b.is_finite() && t.c_um2.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "Sellmeier term B={}, C={} um^2 must be finite and non-negative",
                    t.b, t.c_um2
                )));
            }
            let res = t.c_um2.sqrt() * 1e-6;
            if t.b > 0.0 && res >= lo && res <= hi {
                return Err(Error::InvalidInput(format!(
                    "Sellmeier resonance at {:.4} um lies inside the validity range",
                    res * 1e6
                )));
            }
        }
        let model = Self {
            name: name.into(),
            terms,
            validity,
        };
        // Resonances are outside the window, so n² is monotone between them
        // and checking a dense sample catches any dip below 1.
        for i in 0..=256 {
            let lam = lo * (hi / lo).powf(i as f64 / 256.0);
            let n = model.index_unchecked(lam);
            if !(n > 1.0 || (n == 1.0 && model.is_vacuum())) {
                return Err(Error::InvalidInput(format!(
                    "model {} gives n = {n} <= 1 at {:.4} um",
                    model.name,
                    lam * 1e6
                )));
            }
        }
        Ok(model)
    }

    /// Three-term Malitson fit for fused silica, 0.21–3.71 µm.
    pub fn fused_silica() -> Self {
        let terms = [
            (0.696_166_3, 0.068_404_3f64.powi(2)),
            (0.407_942_6, 0.116_241_4f64.powi(2)),
            (0.897_479_4, 9.896_161f64.powi(2)),
        ]
        .into_iter()
        .map(|(b, c_um2)| SellmeierTerm { b, c_um2 })
        .collect();
        Self::new("fused silica", terms, (0.21e-6, 3.71e-6)).expect("built-in silica model")
    }

    /// Unit index over a wide window.
    pub fn air() -> Self {
        Self::new("air", vec![SellmeierTerm { b: 0.0, c_um2: 0.0 }], (1e-8, 1e-2))
            .expect("built-in air model")
    }

    pub fn from_file(file: &MaterialFile) -> Result<Self> {
        if file.b.len() != file.c_um2.len() {
            return Err(Error::InvalidInput(format!(
                "material {}: {} B coefficients but {} C coefficients",
                file.name,
                file.b.len(),
                file.c_um2.len()
            )));
        }
        let terms = file
            .b
            .iter()
            .zip(&file.c_um2)
            .map(|(&b, &c_um2)| SellmeierTerm { b, c_um2 })
            .collect();
        Self::new(
            file.name.clone(),
            terms,
            (file.validity_um[0] * 1e-6, file.validity_um[1] * 1e-6),
        )
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: MaterialFile = toml::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("material file: {e}")))?;
        Self::from_file(&file)
    }

    pub fn to_file(&self) -> MaterialFile {
        MaterialFile {
            name: self.name.clone(),
            b: self.terms.iter().map(|t| t.b).collect(),
            c_um2: self.terms.iter().map(|t| t.c_um2).collect(),
            validity_um: [self.validity.0 * 1e6, self.validity.1 * 1e6],
        }
    }

    pub fn terms(&self) -> &[SellmeierTerm] {
        &self.terms
    }

    /// Validity window in meters.
    pub fn validity(&self) -> (f64, f64) {
        self.validity
    }

    pub fn is_vacuum(&self) -> bool {
        self.terms.iter().all(|t| t.b == 0.0)
    }

    pub fn contains_wavelength(&self, wavelength: f64) -> bool {
        wavelength >= self.validity.0 && wavelength <= self.validity.1
    }

    pub fn check_wavelength(&self, wavelength: f64) -> Result<()> {
        if self.contains_wavelength(wavelength) {
            Ok(())
        } else {
            Err(Error::OutOfValidityRange {
                wavelength_um: wavelength * 1e6,
                min_um: self.validity.0 * 1e6,
                max_um: self.validity.1 * 1e6,
            })
        }
    }

    /// Index at `omega` without the validity check, for hot loops whose
    /// frequency window was validated up front.
    #[inline]
    pub fn index_at_omega_unchecked(&self, omega: f64) -> f64 {
        self.index_unchecked(wavelength_from_omega(omega))
    }

    #[inline]
    fn index_unchecked(&self, wavelength: f64) -> f64 {
        let l2 = (wavelength * 1e6).powi(2);
        let s: f64 = self.terms.iter().map(|t| t.b * l2 / (l2 - t.c_um2)).sum();
        (1.0 + s).sqrt()
    }

    /// Refractive index at vacuum wavelength `wavelength` (m).
    pub fn refractive_index(&self, wavelength: f64) -> Result<f64> {
        self.check_wavelength(wavelength)?;
        Ok(self.index_unchecked(wavelength))
    }

    /// Refractive index at angular frequency `omega` (rad/s).
    pub fn refractive_index_at_omega(&self, omega: f64) -> Result<f64> {
        if !(omega > 0.0) {
            return Err(Error::InvalidInput(format!("angular frequency {omega} must be positive")));
        }
        self.refractive_index(wavelength_from_omega(omega))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::omega_from_wavelength;

    #[test]
    fn silica_reference_points() {
        let m = SellmeierModel::fused_silica();
        assert!((m.refractive_index(0.532e-6).unwrap() - 1.460_706_344_9).abs() < 1e-9);
        assert!((m.refractive_index(1.596e-6).unwrap() - 1.443_467_789_0).abs() < 1e-9);
    }

    #[test]
    fn air_is_unity() {
        let m = SellmeierModel::air();
        for lam in [0.3e-6, 1e-6, 5e-6] {
            assert_eq!(m.refractive_index(lam).unwrap(), 1.0);
        }
    }

    #[test]
    fn outside_window_is_an_error() {
        let m = SellmeierModel::fused_silica();
        let err = m.refractive_index_at_omega(omega_from_wavelength(10e-6)).unwrap_err();
        assert!(matches!(err, Error::OutOfValidityRange { .. }));
        assert!(m.refractive_index(0.2e-6).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let m = SellmeierModel::fused_silica();
        let text = toml::to_string(&m.to_file()).unwrap();
        let back = SellmeierModel::from_toml(&text).unwrap();
        assert_eq!(back.refractive_index(1e-6).unwrap(), m.refractive_index(1e-6).unwrap());
    }

    #[test]
    fn rejects_resonance_inside_window() {
        let t = vec![SellmeierTerm { b: 0.5, c_um2: 1.0 }];
        assert!(SellmeierModel::new("bad", t, (0.5e-6, 2e-6)).is_err());
    }

    #[test]
    fn rejects_mismatched_coefficient_lists() {
        let text = "name = \"x\"\nB = [0.5, 0.1]\nC_um2 = [0.01]\nvalidity_um = [0.3, 2.0]\n";
        assert!(SellmeierModel::from_toml(text).is_err());
    }
}
