//! Parametric initial data `u₀(x, y) = ū(x) + Σ √λ_i y_i φ_i(x)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fv::{tv, Boundary};
use crate::nn::ReluNet;

/// A scalar profile in `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Const { value: f64 },
    /// `sin(freq · x)`.
    Sin { freq: f64 },
    /// `cos(freq · x)`.
    Cos { freq: f64 },
    /// Linear interpolation of `values` on a uniform grid of `[lo, hi]`,
    /// constant beyond the ends.
    Table { lo: f64, hi: f64, values: Vec<f64> },
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Const { value } => *value,
            Profile::Sin { freq } => (freq * x).sin(),
            Profile::Cos { freq } => (freq * x).cos(),
            Profile::Table { lo, hi, values } => {
                let n = values.len();
                if n == 1 {
                    return values[0];
                }
                let s = ((x - lo) / (hi - lo) * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
                let k = (s.floor() as usize).min(n - 2);
                let w = s - k as f64;
                (1.0 - w) * values[k] + w * values[k + 1]
            }
        }
    }

    /// An upper bound on `sup |profile|` over the real line.
    pub fn sup_bound(&self) -> f64 {
        match self {
            Profile::Const { value } => value.abs(),
            Profile::Sin { .. } | Profile::Cos { .. } => 1.0,
            Profile::Table { values, .. } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

/// Truncated Karhunen-Loève initial data with coefficients `y ∈ [0, 1]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlInit {
    pub mean: Profile,
    /// `(λ_i, φ_i)`.
    pub modes: Vec<(f64, Profile)>,
}

const EXACT_VERTEX_LIMIT: usize = 16;

impl KlInit {
    /// `1 + Σ_{k=1}^d y_k 2^{1−k} sin(k x)`.
    pub fn sine(d: usize) -> KlInit {
        KlInit {
            mean: Profile::Const { value: 1.0 },
            modes: (1..=d)
                .map(|k| (4f64.powi(1 - k as i32), Profile::Sin { freq: k as f64 }))
                .collect(),
        }
    }

    pub fn constant(c: f64) -> KlInit {
        KlInit {
            mean: Profile::Const { value: c },
            modes: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    /// `(c, a)` with `u₀(x, y) = c + Σ a_i y_i`.
    pub fn knot_form(&self, x: f64) -> (f64, Vec<f64>) {
        (
            self.mean.eval(x),
            self.modes.iter().map(|(l, p)| l.sqrt() * p.eval(x)).collect(),
        )
    }

    pub fn value(&self, x: f64, y: &[f64]) -> Result<f64> {
        if y.len() != self.dim() {
            return Err(crate::Error::Dimension {
                expected: self.dim(),
                got: y.len(),
                context: "initial-data coefficients",
            });
        }
        let (c, a) = self.knot_form(x);
        Ok(c + a.iter().zip(y).map(|(a, y)| a * y).sum::<f64>())
    }

    /// `|ū|∞ + Σ √λ_i |φ_i|∞`, an a-priori bound for the solution.
    pub fn c0_bound(&self) -> f64 {
        self.mean.sup_bound() + self.modes.iter().map(|(l, p)| l.sqrt() * p.sup_bound()).sum::<f64>()
    }

    /// Exact `sup |u₀(x_j, y)|` over the points `xs` and `y ∈ [0,1]^d`.
    pub fn sup_on(&self, xs: &[f64]) -> f64 {
        xs.iter()
            .map(|&x| {
                let (c, a) = self.knot_form(x);
                let pos: f64 = a.iter().filter(|v| **v > 0.0).sum();
                let neg: f64 = a.iter().filter(|v| **v < 0.0).sum();
                (c + pos).abs().max((c + neg).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Exact `(min, max)` of `u₀(x_j, y)` over the points `xs` and the cube.
    pub fn range_on(&self, xs: &[f64]) -> (f64, f64) {
        xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            let (c, a) = self.knot_form(x);
            let pos: f64 = a.iter().filter(|v| **v > 0.0).sum();
            let neg: f64 = a.iter().filter(|v| **v < 0.0).sum();
            (lo.min(c + neg), hi.max(c + pos))
        })
    }

    /// `sup_y TV(u₀(·, y))` on the points `xs`. Total variation is convex in
    /// `y`, so the supremum sits at a vertex of the cube; with more than 16
    /// modes the triangle-inequality bound is returned instead.
    pub fn c_tv(&self, xs: &[f64], boundary: Boundary) -> f64 {
        let forms: Vec<(f64, Vec<f64>)> = xs.iter().map(|&x| self.knot_form(x)).collect();
        let d = self.dim();
        let values_at = |y: &[f64]| -> Vec<f64> {
            forms
                .iter()
                .map(|(c, a)| c + a.iter().zip(y).map(|(a, y)| a * y).sum::<f64>())
                .collect()
        };
        if d > EXACT_VERTEX_LIMIT {
            let mut total = tv(&values_at(&vec![0.0; d]), boundary);
            for i in 0..d {
                let col: Vec<f64> = forms.iter().map(|(_, a)| a[i]).collect();
                total += tv(&col, boundary);
            }
            return total;
        }
        (0u32..1 << d)
            .map(|mask| {
                let y: Vec<f64> = (0..d).map(|i| ((mask >> i) & 1) as f64).collect();
                tv(&values_at(&y), boundary)
            })
            .fold(0.0, f64::max)
    }

    /// Largest weight or bias of the affine knot maps at `xs`.
    pub fn magnitude_on(&self, xs: &[f64]) -> f64 {
        xs.iter()
            .map(|&x| {
                let (c, a) = self.knot_form(x);
                a.iter().fold(c.abs(), |m, v| m.max(v.abs()))
            })
            .fold(0.0, f64::max)
    }
}

/// Initial data as a truncated expansion or as a user network mapping
/// `y` to the `J` cell values.
#[derive(Clone, Debug)]
pub enum InitSpec {
    Kl(KlInit),
    External {
        net: ReluNet,
        /// Weight-magnitude constant of the supplied network.
        c_b: f64,
        c_tv: f64,
        sup: f64,
    },
}

impl InitSpec {
    pub fn dim(&self) -> usize {
        match self {
            InitSpec::Kl(k) => k.dim(),
            InitSpec::External { net, .. } => net.input_dim(),
        }
    }

    pub fn external(net: ReluNet, c_b: f64, c_tv: f64, sup: f64) -> Result<InitSpec> {
        if c_b < 0.0 || c_tv < 0.0 || sup < 0.0 {
            return Err(invalid("initial-data constants must be nonnegative"));
        }
        Ok(InitSpec::External { net, c_b, c_tv, sup })
    }
}
