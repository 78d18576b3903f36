use super::net::{Layer, ReluNet};
use super::sparse::SparseMatrix;
use crate::error::{invalid, Result};

/// Affine form `Σ c_i h_i + bias` over the units of one layer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lin {
    pub terms: Vec<(usize, f64)>,
    pub bias: f64,
}

impl Lin {
    pub fn constant(c: f64) -> Self {
        Lin {
            terms: Vec::new(),
            bias: c,
        }
    }

    pub fn var(i: usize) -> Self {
        Lin {
            terms: vec![(i, 1.0)],
            bias: 0.0,
        }
    }

    pub fn scaled(&self, s: f64) -> Lin {
        Lin {
            terms: self.terms.iter().map(|&(i, c)| (i, c * s)).collect(),
            bias: self.bias * s,
        }
    }

    pub fn plus(mut self, c: f64) -> Lin {
        self.bias += c;
        self
    }

    pub fn add(&self, other: &Lin) -> Lin {
        self.add_scaled(other, 1.0)
    }

    pub fn sub(&self, other: &Lin) -> Lin {
        self.add_scaled(other, -1.0)
    }

    pub fn add_scaled(&self, other: &Lin, s: f64) -> Lin {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().map(|&(i, c)| (i, c * s)));
        Lin {
            terms,
            bias: self.bias + s * other.bias,
        }
    }

    pub fn sum<'a>(items: impl IntoIterator<Item = (&'a Lin, f64)>) -> Lin {
        let mut out = Lin::default();
        for (l, s) in items {
            out.terms.extend(l.terms.iter().map(|&(i, c)| (i, c * s)));
            out.bias += s * l.bias;
        }
        out
    }

    /// Value given the unit values of the layer.
    pub fn eval(&self, h: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * h[i]).sum::<f64>() + self.bias
    }
}

/// Neurons of one hidden layer under construction. Each neuron computes
/// `σ(lin)` of the previous layer; the returned [`Lin`] refers to the new unit.
#[derive(Default)]
pub struct LayerPlan {
    neurons: Vec<Lin>,
}

impl LayerPlan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    pub fn neuron(&mut self, lin: Lin) -> Lin {
        self.neurons.push(lin);
        Lin::var(self.neurons.len() - 1)
    }

    /// Carries a signed value as `σ(v) − σ(−v)`.
    pub fn carry(&mut self, v: &Lin) -> Lin {
        let p = self.neuron(v.clone());
        let n = self.neuron(v.scaled(-1.0));
        p.sub(&n)
    }

    /// Carries a value known to be nonnegative with a single unit.
    pub fn carry_nonneg(&mut self, v: &Lin) -> Lin {
        self.neuron(v.clone())
    }
}

/// Assembles a [`ReluNet`] layer by layer from symbolic affine forms.
pub struct NetBuilder {
    input_dim: usize,
    width: usize,
    layers: Vec<Layer>,
}

fn layer_from(lins: &[Lin], cols: usize) -> Result<Layer> {
    let mut trip = Vec::new();
    for (r, l) in lins.iter().enumerate() {
        for &(c, v) in &l.terms {
            if c >= cols {
                return Err(invalid(format!("unit {c} referenced in a layer of width {cols}")));
            }
            trip.push((r, c, v));
        }
    }
    let w = SparseMatrix::from_triplets(lins.len(), cols, trip)?;
    Layer::new(w, lins.iter().map(|l| l.bias).collect())
}

impl NetBuilder {
    pub fn new(input_dim: usize) -> Self {
        NetBuilder {
            input_dim,
            width: input_dim,
            layers: Vec::new(),
        }
    }

    pub fn input(&self, i: usize) -> Lin {
        debug_assert!(self.layers.is_empty() && i < self.input_dim);
        Lin::var(i)
    }

    pub fn hidden_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn push(&mut self, plan: LayerPlan) -> Result<()> {
        let layer = layer_from(&plan.neurons, self.width)?;
        self.width = plan.neurons.len();
        self.layers.push(layer);
        Ok(())
    }

    pub fn finish(mut self, outputs: &[Lin]) -> Result<ReluNet> {
        self.layers.push(layer_from(outputs, self.width)?);
        ReluNet::new(self.layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abs_via_plan() {
        let mut b = NetBuilder::new(1);
        let x = b.input(0);
        let mut p = LayerPlan::new();
        let pos = p.neuron(x.clone());
        let neg = p.neuron(x.scaled(-1.0));
        b.push(p).unwrap();
        let net = b.finish(&[pos.add(&neg)]).unwrap();
        assert_eq!(net.eval(&[-3.0]).unwrap(), vec![3.0]);
        assert_eq!(net.eval(&[2.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn carry_preserves_sign() {
        let mut b = NetBuilder::new(1);
        let x = b.input(0);
        let mut p = LayerPlan::new();
        let c = p.carry(&x.clone().plus(1.0));
        b.push(p).unwrap();
        let net = b.finish(&[c]).unwrap();
        assert_eq!(net.eval(&[-5.0]).unwrap(), vec![-4.0]);
    }
}
