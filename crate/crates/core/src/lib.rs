//! Structured-grid simulator for a two-population haptotaxis model of
//! cancer invasion: differentiated cells, stem-like cells, extracellular
//! matrix and a matrix-degrading enzyme on a rectangle with zero-flux
//! boundaries.

pub mod config;
pub mod error;
pub mod grid;
pub mod integrate;
pub mod mms;
pub mod model;
pub mod monitor;
pub mod output;
pub mod picard;
pub mod preset;
pub mod sim;
pub mod state;
pub mod stencil;
pub mod transform;

pub use error::{Error, Result};
pub use grid::{Field, Grid2D};
pub use model::{EmtRateSpec, ModelParameters};
pub use state::{Formulation, State};
