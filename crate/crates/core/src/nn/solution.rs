use serde::{Deserialize, Serialize};

use super::net::ReluNet;
use crate::error::{invalid, Error, Result};

/// Piecewise-constant function on `J` uniform cells of `[a, b]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstantFn {
    pub a: f64,
    pub b: f64,
    pub values: Vec<f64>,
}

impl PiecewiseConstantFn {
    pub fn new(a: f64, b: f64, values: Vec<f64>) -> Result<Self> {
        if !(a < b) {
            return Err(invalid(format!("empty domain [{a}, {b}]")));
        }
        if values.is_empty() {
            return Err(invalid("piecewise-constant function needs at least one cell"));
        }
        Ok(PiecewiseConstantFn { a, b, values })
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn dx(&self) -> f64 {
        (self.b - self.a) / self.values.len() as f64
    }

    pub fn center(&self, j: usize) -> f64 {
        self.a + (j as f64 + 0.5) * self.dx()
    }

    /// Cell index containing `x`; cells are half-open `[x_{j-1/2}, x_{j+1/2})`
    /// and `b` belongs to the last cell.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        if !(x >= self.a && x <= self.b) {
            return None;
        }
        let j = ((x - self.a) / self.dx()).floor() as usize;
        Some(j.min(self.values.len() - 1))
    }

    pub fn value_at(&self, x: f64) -> Option<f64> {
        self.cell_of(x).map(|j| self.values[j])
    }

    pub fn l1_norm(&self) -> f64 {
        self.dx() * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }
}

/// Evaluates `net` at `y` and wraps the outputs as cell values on `[a, b]`.
pub fn as_solution_function(net: &ReluNet, y: &[f64], a: f64, b: f64) -> Result<PiecewiseConstantFn> {
    if net.output_dim() == 0 {
        return Err(Error::Dimension {
            expected: 1,
            got: 0,
            context: "solution network output",
        });
    }
    PiecewiseConstantFn::new(a, b, net.eval(y)?)
}
