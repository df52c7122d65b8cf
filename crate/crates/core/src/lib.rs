//! floorvec: raster-to-vector floorplan reconstruction.
//!
//! A floorplan is modeled as a sequence of labeled polygons. An
//! encoder–decoder with anchor-guided queries reads a raster image and emits
//! the sequence one corner token at a time; decoding the token stream back
//! through the polygon codec yields the vector floorplan. The crate covers
//! the whole loop: synthetic data generation, rasterization, training,
//! autoregressive inference, and geometric/semantic evaluation.
//!
//! The numeric core is generic over the scalar type: `f32` for training and
//! inference, `f64` for gradient checking and the geometry oracles.

pub mod codec;
pub mod data;
pub mod geometry;
pub mod infer;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use scalar::Scalar;
pub use tensor::{DenseArray, Graph};

/// Dense array in the default training precision.
pub type Array32 = tensor::DenseArray<f32>;
/// Dense array in checking precision.
pub type Array64 = tensor::DenseArray<f64>;
