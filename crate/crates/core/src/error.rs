use thiserror::Error;

/// Errors produced by the dispersion, mode, phasematching, state and flux
/// computations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("wavelength {wavelength_um:.4} um lies outside the dispersion model validity range [{min_um:.3}, {max_um:.3}] um")]
    OutOfValidityRange {
        wavelength_um: f64,
        min_um: f64,
        max_um: f64,
    },
    #[error("mode HE1{radial} is not guided at radius {radius_um:.4} um, wavelength {wavelength_um:.4} um")]
    ModeNotGuided {
        radial: u8,
        radius_um: f64,
        wavelength_um: f64,
    },
    #[error("profile grid too coarse: normalization drifts by {drift:.3e} under refinement")]
    GridTooCoarse { drift: f64 },
    #[error("profiles are sampled on different grids")]
    GridMismatch,
    #[error("overlap integral {overlap:.3e} is negligible; the modes are nearly orthogonal")]
    DegenerateOverlap { overlap: f64 },
    #[error("no sign change of the phasemismatch inside the bracket [{lo:.4}, {hi:.4}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("quadrature did not converge: relative change {change:.3e} after {refinements} refinements")]
    NonConvergent { change: f64, refinements: usize },
    #[error("grid truncates the spectrum: boundary intensity is {ratio:.3e} of the peak; widen the grid or add spectral filters")]
    GridTruncation { ratio: f64 },
    #[error("characteristic length diverges: group slownesses of the three emission modes coincide")]
    DegenerateDivergence,
    #[error("the closed-form flux expression does not apply to frequency-degenerate emission")]
    DegenerateDesign,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of a numerical procedure as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::GridTooCoarse { .. }
                | Error::NonConvergent { .. }
                | Error::GridTruncation { .. }
                | Error::DegenerateOverlap { .. }
                | Error::DegenerateDivergence
                | Error::NoSignChange { .. }
                | Error::ModeNotGuided { .. }
        )
    }
}
