//! Dense MLP training on solution snapshots, with training and
//! generalization error estimates.

mod data;
mod experiment;
mod mlp;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{gen_gap_bound, GapForm};
use crate::error::{invalid, Error, Result};

pub use data::{cached_dataset, dataset_cache_path, make_dataset, Dataset, Problem, SolverSettings};
pub use experiment::{
    arch_search, experiment_dimension_sweep, experiment_m_sweep, mean_and_se, run_seed, train_run, train_run_full, write_report_csv, ArchRow, ArchSearch,
    DimensionRow, ExperimentOptions, MRow, ReportRow, RunResult, SweepReport,
};
pub use mlp::{mlp_forward, mlp_forward_batch, param_count, MlpParams};

use mlp::{batch_matrix, forward_tape};

/// Per-sample discrepancy `Σ_j w·|t_j − p_j|`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discrepancy {
    /// `w = 1`.
    #[default]
    GridSum,
    /// `w` is the sample grid spacing, a Riemann sum for the `L¹` norm.
    Weighted,
}

impl std::str::FromStr for Discrepancy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "grid_sum" => Ok(Discrepancy::GridSum),
            "weighted" => Ok(Discrepancy::Weighted),
            o => Err(format!("unknown discrepancy '{o}' (grid_sum | weighted)")),
        }
    }
}

impl Discrepancy {
    pub fn weight(self, data: &Dataset) -> f64 {
        match self {
            Discrepancy::GridSum => 1.0,
            Discrepancy::Weighted => data.cell_width(),
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn targets_matrix(data: &Dataset) -> DMatrix<f64> {
    let j = data.outputs();
    DMatrix::from_fn(j, data.len(), |r, k| data.targets[k][r])
}

/// `(1/M) Σ_i w Σ_j |t_ij − p_ij|`, optionally clipping the predictions.
fn mean_discrepancy(pred: &DMatrix<f64>, targets: &DMatrix<f64>, w: f64, clip: Option<(f64, f64)>) -> f64 {
    if pred.ncols() == 0 {
        return 0.0;
    }
    let total: f64 = pred
        .column_iter()
        .zip(targets.column_iter())
        .map(|(p, t)| {
            p.iter()
                .zip(t.iter())
                .map(|(&p, &t)| {
                    let p = clip.map_or(p, |(lo, hi)| p.clamp(lo, hi));
                    (t - p).abs()
                })
                .sum::<f64>()
        })
        .sum();
    w * total / pred.ncols() as f64
}

fn check_shapes(params: &MlpParams, data: &Dataset) -> Result<()> {
    if params.output_dim() != data.outputs() {
        return Err(Error::Dimension {
            expected: data.outputs(),
            got: params.output_dim(),
            context: "network outputs vs sample grid",
        });
    }
    if !data.is_empty() && params.input_dim() != data.dim() {
        return Err(Error::Dimension {
            expected: data.dim(),
            got: params.input_dim(),
            context: "network inputs vs parameter dimension",
        });
    }
    Ok(())
}

/// Mean discrepancy of the network on `data`; the training error on the
/// training set and the generalization estimate on a fresh sample.
pub fn evaluate(params: &MlpParams, data: &Dataset, mode: Discrepancy, clip: Option<(f64, f64)>) -> Result<f64> {
    check_shapes(params, data)?;
    let x = batch_matrix(params.input_dim(), &data.params)?;
    let tape = forward_tape(&params.layers(), x);
    Ok(mean_discrepancy(tape.output(), &targets_matrix(data), mode.weight(data), clip))
}

/// Mean discrepancy plus `λ‖θ‖²` and its gradient, by backpropagation with
/// `sign(0) = 0` and `σ′(0) = 0`.
pub fn loss_and_grad(params: &MlpParams, batch: &Dataset, reg_lambda: f64, mode: Discrepancy) -> Result<(f64, Vec<f64>)> {
    if !(reg_lambda >= 0.0) {
        return Err(invalid(format!("regularization weight must be nonnegative, got {reg_lambda}")));
    }
    check_shapes(params, batch)?;
    let layers = params.layers();
    let x = batch_matrix(params.input_dim(), &batch.params)?;
    let tape = forward_tape(&layers, x);
    let targets = targets_matrix(batch);
    let w = mode.weight(batch);
    let data_term = mean_discrepancy(tape.output(), &targets, w, None);
    if !data_term.is_finite() {
        return Err(invalid("non-finite network output"));
    }
    let reg: f64 = reg_lambda * params.theta.iter().map(|v| v * v).sum::<f64>();
    let mut grad: Vec<f64> = params.theta.iter().map(|v| 2.0 * reg_lambda * v).collect();
    if batch.is_empty() {
        return Ok((data_term + reg, grad));
    }

    let scale = w / batch.len() as f64;
    let mut delta = tape.output().zip_map(&targets, |p, t| scale * sign(p - t));
    let offsets: Vec<usize> = params
        .widths
        .windows(2)
        .scan(0, |off, w| {
            let o = *off;
            *off += w[1] * (w[0] + 1);
            Some(o)
        })
        .collect();
    for l in (0..layers.len()).rev() {
        let a = tape.activation(l);
        let gw = &delta * a.transpose();
        let gb = delta.column_sum();
        let (rows, cols) = (gw.nrows(), gw.ncols());
        let off = offsets[l];
        for r in 0..rows {
            for c in 0..cols {
                grad[off + r * cols + c] += gw[(r, c)];
            }
        }
        for r in 0..rows {
            grad[off + rows * cols + r] += gb[r];
        }
        if l > 0 {
            let back = layers[l].0.transpose() * &delta;
            delta = back.zip_map(&tape.pre[l - 1], |g, z| if z > 0.0 { g } else { 0.0 });
        }
    }
    Ok((data_term + reg, grad))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub reg_lambda: f64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub discrepancy: Discrepancy,
    /// Seeds the mini-batch shuffle.
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 2000,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            reg_lambda: 0.0,
            batch_size: None,
            discrepancy: Discrepancy::GridSum,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss over each completed epoch.
    pub history: Vec<f64>,
    pub train_error: f64,
    pub test_error: Option<f64>,
    /// `|ε_T − ε_G|`.
    pub gap: Option<f64>,
    /// Errors with predictions clipped to the training target range.
    pub clipped_train_error: f64,
    pub clipped_test_error: Option<f64>,
    pub clipped_gap: Option<f64>,
    pub clip_range: (f64, f64),
    /// `‖θ*‖∞`.
    pub theta_max_abs: f64,
    pub init_seed: u64,
    pub widths: Vec<usize>,
    pub options: TrainOptions,
    pub train_samples: usize,
    pub test_samples: usize,
}

impl TrainReport {
    /// Simplified gap bound for this run: `L` hidden layers, `W` the widest
    /// of input and hidden layers, `R = ⌈‖θ*‖∞⌉ ≥ 1` and the target range
    /// widened to at least 1.
    pub fn gap_bound(&self, b_minus_a: f64) -> Result<f64> {
        let l = (self.widths.len() - 2).max(1) as u32;
        let w = self.widths[..self.widths.len() - 1].iter().copied().max().unwrap_or(1) as u32;
        let r = self.theta_max_abs.ceil().max(1.0);
        let range = (self.clip_range.1 - self.clip_range.0).max(1.0);
        gen_gap_bound(range, b_minus_a, l, w, self.train_samples, r, GapForm::Simplified)
    }
}

/// Adam with bias correction. Fails with the loss history when the loss
/// becomes non-finite.
pub fn adam_train(params: MlpParams, train: &Dataset, test: Option<&Dataset>, opts: &TrainOptions) -> Result<(MlpParams, TrainReport)> {
    if opts.epochs == 0 {
        return Err(invalid("training needs at least one epoch"));
    }
    if train.is_empty() {
        return Err(invalid("training set is empty"));
    }
    check_shapes(&params, train)?;
    if let Some(t) = test {
        check_shapes(&params, t)?;
    }
    let mut p = params;
    let n = p.theta.len();
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut history = Vec::with_capacity(opts.epochs);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0i32;
    for epoch in 0..opts.epochs {
        let batches: Vec<Dataset> = match opts.batch_size {
            Some(bs) if bs < train.len() => {
                order.shuffle(&mut rng);
                order.chunks(bs.max(1)).map(|c| train.subset(c.iter().copied())).collect()
            }
            _ => Vec::new(),
        };
        let mut epoch_loss = 0.0;
        let parts: Vec<&Dataset> = if batches.is_empty() { vec![train] } else { batches.iter().collect() };
        let mut count = 0;
        for batch in parts {
            let (loss, g) = match loss_and_grad(&p, batch, opts.reg_lambda, opts.discrepancy) {
                Ok(r) => r,
                Err(_) => return Err(Error::Diverged { epoch, history }),
            };
            if !loss.is_finite() || g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Diverged { epoch, history });
            }
            epoch_loss += loss;
            count += 1;
            step += 1;
            let c1 = 1.0 - opts.beta1.powi(step);
            let c2 = 1.0 - opts.beta2.powi(step);
            for k in 0..n {
                m[k] = opts.beta1 * m[k] + (1.0 - opts.beta1) * g[k];
                v[k] = opts.beta2 * v[k] + (1.0 - opts.beta2) * g[k] * g[k];
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                p.theta[k] -= opts.lr * mh / (vh.sqrt() + opts.eps);
            }
        }
        history.push(epoch_loss / count as f64);
    }
    let clip = train.target_range();
    let mode = opts.discrepancy;
    let train_error = evaluate(&p, train, mode, None)?;
    let clipped_train_error = evaluate(&p, train, mode, Some(clip))?;
    let (test_error, clipped_test_error) = match test {
        Some(t) => (Some(evaluate(&p, t, mode, None)?), Some(evaluate(&p, t, mode, Some(clip))?)),
        None => (None, None),
    };
    let report = TrainReport {
        history,
        train_error,
        test_error,
        gap: test_error.map(|e| (e - train_error).abs()),
        clipped_train_error,
        clipped_test_error,
        clipped_gap: clipped_test_error.map(|e| (e - clipped_train_error).abs()),
        clip_range: clip,
        theta_max_abs: p.max_abs(),
        init_seed: p.seed,
        widths: p.widths.clone(),
        options: opts.clone(),
        train_samples: train.len(),
        test_samples: test.map_or(0, Dataset::len),
    };
    Ok((p, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy(m: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params: Vec<Vec<f64>> = (0..m).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let grid: Vec<f64> = (0..5).map(|k| k as f64 / 4.0).collect();
        let targets = params
            .iter()
            .map(|p| grid.iter().map(|x| p[0] * x + p[1] * p[2] - 0.3).collect())
            .collect();
        Dataset::new(params, targets, grid, "toy".into()).unwrap()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let data = toy(6, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        for trial in 0..1000u64 {
            let p = MlpParams::glorot(&[3, 6, 5, 5], trial).unwrap();
            let lam = 0.01;
            let (_, g) = loss_and_grad(&p, &data, lam, Discrepancy::GridSum).unwrap();
            let dir: Vec<f64> = (0..p.theta.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h = 1e-6;
            // skip directions that cross a kink of |·| or of a ReLU within ±h
            let shifted = |s: f64| {
                let mut q = p.clone();
                q.theta.iter_mut().zip(&dir).for_each(|(t, d)| *t += s * d);
                q
            };
            let near_kink = |q: &MlpParams| {
                let x = batch_matrix(3, &data.params).unwrap();
                let tape = forward_tape(&q.layers(), x);
                let t = targets_matrix(&data);
                tape.pre[..tape.pre.len() - 1].iter().any(|z| z.iter().any(|v| v.abs() < 1e-3))
                    || tape.output().iter().zip(t.iter()).any(|(a, b)| (a - b).abs() < 1e-3)
            };
            if near_kink(&p) {
                continue;
            }
            let fd = (loss_and_grad(&shifted(h), &data, lam, Discrepancy::GridSum).unwrap().0
                - loss_and_grad(&shifted(-h), &data, lam, Discrepancy::GridSum).unwrap().0)
                / (2.0 * h);
            let an: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "{trial}: {fd} vs {an}");
            checked += 1;
        }
        assert!(checked > 100, "{checked}");
    }

    #[test]
    fn regularizer_gradient_on_empty_batch() {
        let p = MlpParams::glorot(&[3, 4, 5], 2).unwrap();
        let empty = toy(0, 0);
        let (l, g) = loss_and_grad(&p, &empty, 0.5, Discrepancy::GridSum).unwrap();
        let sq: f64 = p.theta.iter().map(|v| v * v).sum();
        assert!((l - 0.5 * sq).abs() < 1e-15);
        for (a, t) in g.iter().zip(&p.theta) {
            assert_eq!(*a, 2.0 * 0.5 * t);
        }
    }

    #[test]
    fn perfect_fit_has_zero_loss() {
        let p = MlpParams::glorot(&[3, 4, 5], 3).unwrap();
        let mut d = toy(4, 3);
        d.targets = mlp_forward_batch(&p, &d.params).unwrap();
        let (l, g) = loss_and_grad(&p, &d, 0.0, Discrepancy::GridSum).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn weighted_mode_scales_by_spacing() {
        let p = MlpParams::glorot(&[3, 4, 5], 3).unwrap();
        let d = toy(4, 3);
        let a = evaluate(&p, &d, Discrepancy::GridSum, None).unwrap();
        let b = evaluate(&p, &d, Discrepancy::Weighted, None).unwrap();
        assert!((b - 0.25 * a).abs() < 1e-14);
    }

    #[test]
    fn memorizes_one_sample() {
        let d = toy(1, 4);
        let p = MlpParams::glorot(&[3, 32, 32, 5], 4).unwrap();
        let opts = TrainOptions {
            epochs: 6000,
            lr: 1e-4,
            ..TrainOptions::default()
        };
        let (_, r) = adam_train(p, &d, None, &opts).unwrap();
        assert!(r.train_error < 1e-3, "{}", r.train_error);
    }

    #[test]
    fn zero_rate_changes_nothing() {
        let d = toy(5, 5);
        let p = MlpParams::glorot(&[3, 8, 5], 5).unwrap();
        let opts = TrainOptions {
            epochs: 10,
            lr: 0.0,
            ..TrainOptions::default()
        };
        let (q, r) = adam_train(p.clone(), &d, None, &opts).unwrap();
        assert_eq!(q, p);
        assert!(r.history.iter().all(|l| *l == r.history[0]));
    }

    #[test]
    fn deterministic_and_consistent() {
        let d = toy(20, 6);
        let (tr, te) = d.split(0.8).unwrap();
        let opts = TrainOptions {
            epochs: 50,
            batch_size: Some(4),
            seed: 9,
            ..TrainOptions::default()
        };
        let run = || adam_train(MlpParams::glorot(&[3, 8, 5], 1).unwrap(), &tr, Some(&te), &opts).unwrap();
        let (p1, r1) = run();
        let (p2, r2) = run();
        assert_eq!(p1, p2);
        assert_eq!(r1, r2);
        let (l, _) = loss_and_grad(&p1, &tr, 0.0, Discrepancy::GridSum).unwrap();
        assert_eq!(l, r1.train_error);
        assert!(r1.clipped_train_error <= r1.train_error);
    }

    #[test]
    fn divergence_keeps_history() {
        let d = toy(3, 7);
        let p = MlpParams::glorot(&[3, 4, 5], 1).unwrap();
        let opts = TrainOptions {
            epochs: 5,
            lr: f64::INFINITY,
            ..TrainOptions::default()
        };
        match adam_train(p, &d, None, &opts) {
            Err(Error::Diverged { epoch, history }) => {
                assert!(epoch >= 1);
                assert_eq!(history.len(), epoch);
            }
            other => panic!("{other:?}"),
        }
    }
}
