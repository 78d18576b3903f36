//! Layered sparse ReLU networks and their combinators.

mod builder;
pub mod json;
mod net;
mod solution;
mod sparse;

pub use builder::{LayerPlan, Lin, NetBuilder};
pub(crate) use net::relu;
pub use net::{Layer, NetMetrics, ReluNet};
pub use solution::{as_solution_function, PiecewiseConstantFn};
pub use sparse::SparseMatrix;
