//! Dense arrays, the autodiff tape, parameters, optimizer, and gradient checks.

pub mod array;
pub mod check;
pub mod graph;
pub mod optim;
pub mod params;

pub use array::{matmul, matmul_nt, matmul_tn, DenseArray};
pub use graph::{conv_out_dims, Gradients, Graph, NodeId, TensorError};
pub use optim::{AdamW, AdamWConfig, GradBuffer, OptimError};
pub use params::{normal_init, xavier_uniform, ParamId, ParamStore};
