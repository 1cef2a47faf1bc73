//! Neural cortical maps: continuous, hash-encoded MLP representations of
//! scalar fields on the unit sphere trained from triangle meshes, plus
//! NC-Reg, a global rigid registration algorithm on the sphere with
//! simulated-annealing restarts, the barycentric-interpolation baseline, and
//! a brute-force oracle.

pub mod error;
pub mod features;
pub mod field;
pub mod geometry;
pub mod harmonics;
pub mod io;
pub mod locate;
pub mod metrics;
pub mod registration;
pub mod rotation;

pub use error::{Error, Result};
