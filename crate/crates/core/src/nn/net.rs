use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sparse::SparseMatrix;
use crate::error::{invalid, Error, Result};

/// One affine map `x -> W x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: SparseMatrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(weights: SparseMatrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::Dimension {
                expected: weights.rows(),
                got: bias.len(),
                context: "bias length",
            });
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(invalid("non-finite bias"));
        }
        Ok(Layer { weights, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub(crate) fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.weights.mul_vec_into(x, out);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
    }

    pub fn nnz(&self) -> usize {
        self.weights.nnz() + self.bias.iter().filter(|b| **b != 0.0).count()
    }

    pub fn max_abs(&self) -> f64 {
        self.bias
            .iter()
            .fold(self.weights.max_abs(), |m, b| m.max(b.abs()))
    }
}

/// Size metrics of a network: connectivity, depth, maximum width and
/// weight magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetMetrics {
    pub connectivity: usize,
    pub depth: usize,
    pub max_width: usize,
    pub weight_magnitude: f64,
}

/// A layered ReLU network. The rectifier is applied after every layer except
/// the last, so a single-layer network is affine.
#[derive(Clone, Debug, PartialEq)]
pub struct ReluNet {
    input_dim: usize,
    output_dim: usize,
    layers: Vec<Layer>,
}

#[inline]
pub(crate) fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

impl ReluNet {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| invalid("a network needs at least one layer"))?;
        let input_dim = first.in_dim();
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[1].in_dim() != pair[0].out_dim() {
                return Err(invalid(format!(
                    "layer {} has {} columns but layer {} outputs {}",
                    k + 1,
                    pair[1].in_dim(),
                    k,
                    pair[0].out_dim()
                )));
            }
        }
        let output_dim = layers.last().map(Layer::out_dim).unwrap_or(0);
        Ok(ReluNet {
            input_dim,
            output_dim,
            layers,
        })
    }

    /// Single affine layer from dense rows.
    pub fn affine(weights: &[Vec<f64>], bias: &[f64]) -> Result<Self> {
        let rows = weights.len();
        let cols = weights.first().map_or(0, Vec::len);
        if weights.iter().any(|r| r.len() != cols) {
            return Err(invalid("ragged weight matrix"));
        }
        let trip = weights
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, &v)| (i, j, v)));
        let w = SparseMatrix::from_triplets(rows, cols, trip)?;
        ReluNet::new(vec![Layer::new(w, bias.to_vec())?])
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                got: x.len(),
                context: "network input",
            });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            next.resize(layer.out_dim(), 0.0);
            layer.apply_into(&cur, &mut next);
            if k < last {
                next.iter_mut().for_each(|v| *v = relu(*v));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Evaluates many inputs in parallel; results are in input order.
    pub fn eval_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.par_iter().map(|x| self.eval(x)).collect()
    }

    pub fn metrics(&self) -> NetMetrics {
        let connectivity = self.layers.iter().map(Layer::nnz).sum();
        let max_width = self
            .layers
            .iter()
            .map(Layer::out_dim)
            .fold(self.input_dim, usize::max);
        let weight_magnitude = self.layers.iter().fold(0.0f64, |m, l| m.max(l.max_abs()));
        NetMetrics {
            connectivity,
            depth: self.layers.len(),
            max_width,
            weight_magnitude,
        }
    }

    /// Flat parameter vector: per layer, the dense row-major weights followed by
    /// the bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            let mut dense = vec![0.0; l.out_dim() * l.in_dim()];
            for &(i, j, v) in l.weights.entries() {
                dense[i * l.in_dim() + j] = v;
            }
            out.extend(dense);
            out.extend(&l.bias);
        }
        out
    }

    /// Realizes `outer ∘ inner` exactly by multiplying the adjoining affine
    /// maps, so the result has `depth(outer) + depth(inner) - 1` layers.
    pub fn compose(outer: &ReluNet, inner: &ReluNet) -> Result<ReluNet> {
        if inner.output_dim != outer.input_dim {
            return Err(Error::Dimension {
                expected: outer.input_dim,
                got: inner.output_dim,
                context: "compose: inner output vs outer input",
            });
        }
        let mut layers: Vec<Layer> = inner.layers[..inner.layers.len() - 1].to_vec();
        let a = &inner.layers[inner.layers.len() - 1];
        let b = &outer.layers[0];
        let weights = b.weights.matmul(&a.weights);
        let mut bias = vec![0.0; b.out_dim()];
        b.apply_into(&a.bias, &mut bias);
        layers.push(Layer::new(weights, bias)?);
        layers.extend(outer.layers[1..].iter().cloned());
        ReluNet::new(layers)
    }

    /// Stacks networks of equal depth side by side. With `shared_input` every
    /// member reads the same input vector, otherwise the inputs are
    /// concatenated. The output is the concatenation of the member outputs.
    pub fn parallel(nets: &[ReluNet], shared_input: bool) -> Result<ReluNet> {
        let first = nets.first().ok_or_else(|| invalid("parallel of zero networks"))?;
        let depths: Vec<usize> = nets.iter().map(ReluNet::depth).collect();
        if depths.iter().any(|&d| d != depths[0]) {
            return Err(Error::DepthMismatch(depths));
        }
        if shared_input && nets.iter().any(|n| n.input_dim != first.input_dim) {
            return Err(invalid("parallel with shared input needs equal input dims"));
        }
        let mut layers = Vec::with_capacity(depths[0]);
        for k in 0..depths[0] {
            let rows: usize = nets.iter().map(|n| n.layers[k].out_dim()).sum();
            let cols: usize = if k == 0 && shared_input {
                first.input_dim
            } else {
                nets.iter().map(|n| n.layers[k].in_dim()).sum()
            };
            let mut trip = Vec::new();
            let mut bias = Vec::with_capacity(rows);
            let (mut r0, mut c0) = (0, 0);
            for n in nets {
                let l = &n.layers[k];
                let col_off = if k == 0 && shared_input { 0 } else { c0 };
                trip.extend(l.weights.shifted(r0, col_off));
                bias.extend(&l.bias);
                r0 += l.out_dim();
                c0 += l.in_dim();
            }
            layers.push(Layer::new(SparseMatrix::from_unchecked(rows, cols, trip), bias)?);
        }
        ReluNet::new(layers)
    }

    /// Identity on `R^dim` with `depth` layers, built from `σ(x) − σ(−x)`.
    pub fn identity_chain(dim: usize, depth: usize) -> Result<ReluNet> {
        if depth == 0 {
            return Err(invalid("identity chain depth must be at least 1"));
        }
        if depth == 1 {
            return ReluNet::new(vec![Layer::new(SparseMatrix::identity(dim), vec![0.0; dim])?]);
        }
        let split = (0..dim).flat_map(|i| [(2 * i, i, 1.0), (2 * i + 1, i, -1.0)]);
        let first = SparseMatrix::from_unchecked(2 * dim, dim, split.collect());
        let hop = (0..dim).flat_map(|i| {
            [
                (2 * i, 2 * i, 1.0),
                (2 * i, 2 * i + 1, -1.0),
                (2 * i + 1, 2 * i, -1.0),
                (2 * i + 1, 2 * i + 1, 1.0),
            ]
        });
        let middle = SparseMatrix::from_unchecked(2 * dim, 2 * dim, hop.collect());
        let join = (0..dim).flat_map(|i| [(i, 2 * i, 1.0), (i, 2 * i + 1, -1.0)]);
        let last = SparseMatrix::from_unchecked(dim, 2 * dim, join.collect());

        let mut layers = vec![Layer::new(first, vec![0.0; 2 * dim])?];
        for _ in 0..depth - 2 {
            layers.push(Layer::new(middle.clone(), vec![0.0; 2 * dim])?);
        }
        layers.push(Layer::new(last, vec![0.0; dim])?);
        ReluNet::new(layers)
    }

    /// `x ↦ α + σ(x−α) − σ(x−β) = max{α, min{β, x}}`.
    pub fn clip_net(alpha: f64, beta: f64) -> Result<ReluNet> {
        if !(alpha < beta) {
            return Err(invalid(format!("clip needs alpha < beta, got ({alpha}, {beta})")));
        }
        let hidden = Layer::new(
            SparseMatrix::from_unchecked(2, 1, vec![(0, 0, 1.0), (1, 0, 1.0)]),
            vec![-alpha, -beta],
        )?;
        let out = Layer::new(
            SparseMatrix::from_unchecked(1, 2, vec![(0, 0, 1.0), (0, 1, -1.0)]),
            vec![alpha],
        )?;
        ReluNet::new(vec![hidden, out])
    }

    /// Componentwise clip of a vector-valued network.
    pub fn clipped(&self, alpha: f64, beta: f64) -> Result<ReluNet> {
        let clips: Vec<ReluNet> = (0..self.output_dim)
            .map(|_| ReluNet::clip_net(alpha, beta))
            .collect::<Result<_>>()?;
        ReluNet::compose(&ReluNet::parallel(&clips, false)?, self)
    }

    /// Scales every output by `s` (folded into the last layer).
    pub fn scaled_output(&self, s: f64) -> ReluNet {
        let mut layers = self.layers.clone();
        let last = layers.last_mut().expect("non-empty");
        last.weights = last.weights.map_values(|v| v * s);
        last.bias.iter_mut().for_each(|b| *b *= s);
        ReluNet {
            input_dim: self.input_dim,
            output_dim: self.output_dim,
            layers,
        }
    }
}
