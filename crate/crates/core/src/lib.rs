pub mod chebyshev;
pub mod constants;
pub mod design;
pub mod dispersion;
pub mod error;
pub mod fiber_modes;
pub mod flux;
pub mod nonlinearity;
pub mod output;
pub mod phasematching;
pub mod quadrature;
pub mod roots;
pub mod special;
pub mod triplet_state;

pub use error::{Error, Result};
