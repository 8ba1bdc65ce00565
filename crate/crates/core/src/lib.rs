//! Retarded collective emission of a single-photon Dicke state in a 1-D
//! emitter array, the photonic density of states of the array, its reduction
//! to a lossy two-level cavity model, and Leggett-Garg tests on that model.
//!
//! Times are measured in a configurable unit (10 ps by default) and rates in
//! radians per unit unless a name says otherwise.

pub mod dynamics;
pub mod error;
pub mod leggett_garg;
pub mod model;
pub mod open_system;
pub mod spectral;

pub use error::{Error, Result};
pub use model::ArrayParams;
pub use spectral::EffectiveModel;
