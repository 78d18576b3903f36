use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nn::{Layer, ReluNet, SparseMatrix};

/// Dense ReLU perceptron. `widths = [input, hidden…, output]`; `theta` holds,
/// layer by layer, the row-major weight matrix followed by the bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub widths: Vec<usize>,
    pub theta: Vec<f64>,
    pub seed: u64,
}

pub fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases.
    pub fn glorot(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(invalid("an MLP needs input and output widths"));
        }
        if widths[1..].contains(&0) {
            return Err(invalid("layer widths must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = Vec::with_capacity(param_count(widths));
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
            theta.extend((0..fan_in * fan_out).map(|_| rng.random_range(-r..=r)));
            theta.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(MlpParams {
            widths: widths.to_vec(),
            theta,
            seed,
        })
    }

    pub fn from_theta(widths: &[usize], theta: Vec<f64>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(invalid("an MLP needs input and output widths"));
        }
        if theta.len() != param_count(widths) {
            return Err(Error::Dimension {
                expected: param_count(widths),
                got: theta.len(),
                context: "parameter vector",
            });
        }
        Ok(MlpParams {
            widths: widths.to_vec(),
            theta,
            seed: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated")
    }

    pub fn hidden_layers(&self) -> usize {
        self.widths.len() - 2
    }

    /// `‖θ‖∞`.
    pub fn max_abs(&self) -> f64 {
        self.theta.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn layers(&self) -> Vec<(DMatrix<f64>, DVector<f64>)> {
        let mut off = 0;
        self.widths
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                let m = DMatrix::from_row_slice(o, i, &self.theta[off..off + o * i]);
                off += o * i;
                let b = DVector::from_column_slice(&self.theta[off..off + o]);
                off += o;
                (m, b)
            })
            .collect()
    }

    pub fn to_relu_net(&self) -> Result<ReluNet> {
        let mut off = 0;
        let mut layers = Vec::with_capacity(self.widths.len() - 1);
        for w in self.widths.windows(2) {
            let (i, o) = (w[0], w[1]);
            let ws = &self.theta[off..off + o * i];
            let trip = (0..o).flat_map(|r| (0..i).map(move |c| (r, c, ws[r * i + c])));
            let m = SparseMatrix::from_triplets(o, i, trip)?;
            off += o * i;
            layers.push(Layer::new(m, self.theta[off..off + o].to_vec())?);
            off += o;
        }
        ReluNet::new(layers)
    }
}

/// Pre-activations of every layer for a batch stored column-wise.
pub(crate) struct Tape {
    pub inputs: DMatrix<f64>,
    pub pre: Vec<DMatrix<f64>>,
}

impl Tape {
    pub fn output(&self) -> &DMatrix<f64> {
        self.pre.last().expect("at least one layer")
    }

    /// Input to layer `l`.
    pub fn activation(&self, l: usize) -> DMatrix<f64> {
        if l == 0 {
            self.inputs.clone()
        } else {
            self.pre[l - 1].map(crate::nn::relu)
        }
    }
}

pub(crate) fn forward_tape(layers: &[(DMatrix<f64>, DVector<f64>)], inputs: DMatrix<f64>) -> Tape {
    let mut pre: Vec<DMatrix<f64>> = Vec::with_capacity(layers.len());
    for (l, (w, b)) in layers.iter().enumerate() {
        let mut z = if l == 0 {
            w * &inputs
        } else {
            w * pre[l - 1].map(crate::nn::relu)
        };
        for mut col in z.column_iter_mut() {
            col += b;
        }
        pre.push(z);
    }
    Tape { inputs, pre }
}

pub(crate) fn batch_matrix(dim: usize, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if let Some(r) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: r.len(),
            context: "network input",
        });
    }
    Ok(DMatrix::from_fn(dim, rows.len(), |i, k| rows[k][i]))
}

pub fn mlp_forward(params: &MlpParams, input: &[f64]) -> Result<Vec<f64>> {
    let x = batch_matrix(params.input_dim(), std::slice::from_ref(&input.to_vec()))?;
    let tape = forward_tape(&params.layers(), x);
    Ok(tape.output().column(0).iter().copied().collect())
}

pub fn mlp_forward_batch(params: &MlpParams, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let x = batch_matrix(params.input_dim(), inputs)?;
    let tape = forward_tape(&params.layers(), x);
    Ok(tape.output().column_iter().map(|c| c.iter().copied().collect()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_last_bias() {
        let mut p = MlpParams::glorot(&[3, 4, 2], 1).unwrap();
        p.theta.iter_mut().for_each(|v| *v = 0.0);
        let n = p.theta.len();
        p.theta[n - 2] = 0.5;
        p.theta[n - 1] = -2.0;
        assert_eq!(mlp_forward(&p, &[1.0, 2.0, 3.0]).unwrap(), vec![0.5, -2.0]);
    }

    #[test]
    fn single_layer_is_affine() {
        let p = MlpParams::from_theta(&[2, 1], vec![2.0, -3.0, 0.25]).unwrap();
        assert_eq!(mlp_forward(&p, &[-1.0, -1.0]).unwrap(), vec![1.25]);
    }

    #[test]
    fn matches_relu_net() {
        let p = MlpParams::glorot(&[3, 7, 5, 4], 9).unwrap();
        let net = p.to_relu_net().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a = mlp_forward(&p, &x).unwrap();
            let b = net.eval(&x).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn glorot_range_and_count() {
        let p = MlpParams::glorot(&[4, 20, 20, 100], 3).unwrap();
        assert_eq!(p.theta.len(), 20 * 5 + 20 * 21 + 100 * 21);
        let r = (6.0f64 / 24.0).sqrt();
        assert!(p.theta[..80].iter().all(|v| v.abs() <= r));
        assert_eq!(p, MlpParams::glorot(&[4, 20, 20, 100], 3).unwrap());
        assert!(mlp_forward(&p, &[0.0; 3]).is_err());
    }
}
