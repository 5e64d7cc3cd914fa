//! Joint privacy enhancement and lattice quantization of federated-learning
//! model updates.
//!
//! The pipeline scales an update, splits it into `L`-dimensional sub-vectors,
//! adds encoder-private noise plus a shared dither and quantizes with a
//! lattice. The server subtracts the dither and rescales. The private noise is
//! built so that, together with the uniform quantization error, the total
//! distortion follows a Laplace or multivariate-t privacy mechanism.

pub mod codec;
pub mod config;
pub mod dither;
pub mod error;
pub mod flsim;
pub mod lattice;
pub mod privacy;
mod quad;
pub mod special;
pub mod stattests;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
