//! Building-block networks: piecewise-linear flux interpolants, the dyadic
//! square and multiplication networks, the star operator and ramps.

use crate::error::{invalid, Result};
use crate::nn::{LayerPlan, Lin, NetBuilder, ReluNet};

#[inline]
pub(crate) fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// One-hidden-layer representation `Σ_k c_k σ(u − x_k)` of a continuous
/// piecewise-linear function that vanishes left of its first knot.
#[derive(Clone, Debug, PartialEq)]
pub struct FluxInterp {
    pub knots: Vec<f64>,
    pub coeffs: Vec<f64>,
}

impl FluxInterp {
    pub fn eval(&self, u: f64) -> f64 {
        self.knots
            .iter()
            .zip(&self.coeffs)
            .map(|(&x, &c)| c * relu(u - x))
            .sum()
    }

    pub fn width(&self) -> usize {
        self.knots.len()
    }

    pub fn to_net(&self) -> Result<ReluNet> {
        let mut b = NetBuilder::new(1);
        let u = b.input(0);
        let mut plan = LayerPlan::new();
        let mut out = Lin::default();
        for (&x, &c) in self.knots.iter().zip(&self.coeffs) {
            let h = plan.neuron(u.clone().plus(-x));
            out = out.add_scaled(&h, c);
        }
        b.push(plan)?;
        b.finish(&[out])
    }

    /// Restriction to `[lo, hi]`: units that never activate there are dropped
    /// and units that are always active are folded into a linear term.
    /// Returns `(slope, offset, kinks)` with
    /// `f̂(u) = slope·u + offset + Σ c σ(u − x)` over the kinks in `(lo, hi)`.
    pub fn restricted(&self, lo: f64, hi: f64) -> (f64, f64, Vec<(f64, f64)>) {
        let mut slope = 0.0;
        let mut offset = 0.0;
        let mut kinks = Vec::new();
        for (&x, &c) in self.knots.iter().zip(&self.coeffs) {
            if x <= lo {
                slope += c;
                offset -= c * x;
            } else if x < hi {
                kinks.push((x, c));
            }
        }
        (slope, offset, kinks)
    }

    /// Largest slope magnitude on `[lo, hi]`.
    pub fn max_slope_on(&self, lo: f64, hi: f64) -> f64 {
        let (mut s, _, kinks) = self.restricted(lo, hi);
        let mut m = s.abs();
        for (_, c) in kinks {
            s += c;
            m = m.max(s.abs());
        }
        m
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

/// Interpolant of `f` at `J+1` uniform knots on `[a, b]`, extended linearly to
/// zero at `a − |f(a)|` and `b + |f(b)|`.
pub fn flux_interp(f: &dyn Fn(f64) -> f64, a: f64, b: f64, j: usize) -> Result<FluxInterp> {
    if j == 0 {
        return Err(invalid("flux interpolant needs J >= 1"));
    }
    if !(a < b) {
        return Err(invalid(format!("flux interpolant needs a < b, got [{a}, {b}]")));
    }
    let h = (b - a) / j as f64;
    let xs: Vec<f64> = (0..=j).map(|k| if k == j { b } else { a + k as f64 * h }).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    if fs.iter().any(|v| !v.is_finite()) {
        return Err(invalid("flux is not finite on the interpolation interval"));
    }
    let (fa, fb) = (fs[0], fs[j]);
    // slopes[k] is the slope on the segment left of knot k; slopes[0] is the
    // outer left segment and slopes[j+1] the outer right one
    let mut slopes = Vec::with_capacity(j + 2);
    slopes.push(sign(fa));
    for k in 0..j {
        slopes.push((fs[k + 1] - fs[k]) / (xs[k + 1] - xs[k]));
    }
    slopes.push(-sign(fb));

    let mut knots = Vec::with_capacity(j + 3);
    let mut coeffs = Vec::with_capacity(j + 3);
    if fa != 0.0 {
        knots.push(a - fa.abs());
        coeffs.push(sign(fa));
    }
    for k in 0..=j {
        knots.push(xs[k]);
        coeffs.push(slopes[k + 1] - slopes[k]);
    }
    if fb != 0.0 {
        knots.push(b + fb.abs());
        coeffs.push(sign(fb));
    }
    Ok(FluxInterp { knots, coeffs })
}

pub fn flux_interp_net(f: &dyn Fn(f64) -> f64, a: f64, b: f64, j: usize) -> Result<ReluNet> {
    flux_interp(f, a, b, j)?.to_net()
}

/// State of one dyadic-square chain: the current sawtooth `g_k` and the running
/// approximation `s − Σ g_i/4^i`, both as forms over the latest layer.
#[derive(Clone, Debug)]
pub(crate) struct SquareChain {
    g: Lin,
    acc: Lin,
    k: u32,
}

impl SquareChain {
    fn next(&self, plan: &mut LayerPlan) -> SquareChain {
        let h0 = plan.neuron(self.g.clone());
        let h1 = plan.neuron(self.g.clone().plus(-0.5));
        let h2 = plan.neuron(self.g.clone().plus(-1.0));
        let h3 = plan.neuron(self.acc.clone());
        let k = self.k + 1;
        let g = Lin::sum([(&h0, 2.0), (&h1, -4.0), (&h2, 2.0)]);
        let acc = h3.add_scaled(&g, -(0.25f64).powi(k as i32));
        SquareChain { g, acc, k }
    }
}

/// Multiplication network state, advanced one hidden layer at a time so that
/// callers can place other units alongside it.
#[derive(Clone, Debug)]
pub(crate) struct MultChain {
    plus: SquareChain,
    minus: SquareChain,
    scale: f64,
}

impl MultChain {
    /// First hidden layer for inputs `x ∈ [−M, M]`, `y ∈ [−N, N]`, `scale = M+N`.
    pub(crate) fn start(plan: &mut LayerPlan, x: &Lin, y: &Lin, scale: f64) -> MultChain {
        let branch = |plan: &mut LayerPlan, t: Lin| {
            let p = plan.neuron(t.clone());
            let n = plan.neuron(t.scaled(-1.0));
            let ph = plan.neuron(t.clone().plus(-0.5));
            let nh = plan.neuron(t.scaled(-1.0).plus(-0.5));
            let s = p.add(&n);
            let g = s.scaled(2.0).add_scaled(&ph.add(&nh), -4.0);
            let acc = s.add_scaled(&g, -0.25);
            SquareChain { g, acc, k: 1 }
        };
        let inv = 1.0 / scale;
        let plus = branch(plan, x.add(y).scaled(inv));
        let minus = branch(plan, x.sub(y).scaled(inv));
        MultChain { plus, minus, scale }
    }

    pub(crate) fn layers(&self) -> u32 {
        self.plus.k
    }

    pub(crate) fn next(&self, plan: &mut LayerPlan) -> MultChain {
        MultChain {
            plus: self.plus.next(plan),
            minus: self.minus.next(plan),
            scale: self.scale,
        }
    }

    pub(crate) fn output(&self) -> Lin {
        let q = self.scale * self.scale / 4.0;
        self.plus.acc.sub(&self.minus.acc).scaled(q)
    }
}

/// Dyadic piecewise-linear interpolant `f_m` of `x²` on `[0, 1]`.
pub fn yarotsky_square(m: u32) -> Result<ReluNet> {
    if m == 0 {
        return Err(invalid("square network needs m >= 1"));
    }
    let mut b = NetBuilder::new(1);
    let x = b.input(0);
    let mut plan = LayerPlan::new();
    let h0 = plan.neuron(x.clone());
    let h1 = plan.neuron(x.clone().plus(-0.5));
    let h2 = plan.neuron(x.clone().plus(-1.0));
    let g = Lin::sum([(&h0, 2.0), (&h1, -4.0), (&h2, 2.0)]);
    let acc = h0.add_scaled(&g, -0.25);
    let mut chain = SquareChain { g, acc, k: 1 };
    b.push(plan)?;
    while chain.k < m {
        let mut plan = LayerPlan::new();
        chain = chain.next(&mut plan);
        b.push(plan)?;
    }
    b.finish(&[chain.acc])
}

/// Closed form of the dyadic interpolant of `x²` with breakpoints `k/2^m`.
pub fn dyadic_square(x: f64, m: u32) -> f64 {
    let n = (1u64 << m) as f64;
    let k = (x * n).floor().clamp(0.0, n - 1.0);
    let left = k / n;
    left * left + (x - left) * (2.0 * k + 1.0) / n
}

/// Approximate product on `[−M, M] × [−N, N]`:
/// `(M+N)²/4 · (f_m(|x+y|/(M+N)) − f_m(|x−y|/(M+N)))`.
pub fn mult_net(m: u32, big_m: f64, big_n: f64) -> Result<ReluNet> {
    if m == 0 {
        return Err(invalid("multiplication network needs m >= 1"));
    }
    if !(big_m > 0.0 && big_n > 0.0) {
        return Err(invalid("multiplication network needs M, N > 0"));
    }
    let mut b = NetBuilder::new(2);
    let (x, y) = (b.input(0), b.input(1));
    let mut plan = LayerPlan::new();
    let mut chain = MultChain::start(&mut plan, &x, &y, big_m + big_n);
    b.push(plan)?;
    while chain.layers() < m {
        let mut plan = LayerPlan::new();
        chain = chain.next(&mut plan);
        b.push(plan)?;
    }
    b.finish(&[chain.output()])
}

/// Reference value of the multiplication network computed from the closed form.
pub fn mult_closed_form(x: f64, y: f64, m: u32, big_m: f64, big_n: f64) -> f64 {
    let s = big_m + big_n;
    s * s / 4.0 * (dyadic_square((x + y).abs() / s, m) - dyadic_square((x - y).abs() / s, m))
}

/// `x ⋆ y = σ(y + λx − λ) − σ(−y + λx − λ)`, inputs ordered `(x, y)`.
pub fn star_net(lambda: f64) -> Result<ReluNet> {
    if !(lambda > 0.0) {
        return Err(invalid(format!("star operator needs lambda > 0, got {lambda}")));
    }
    let mut b = NetBuilder::new(2);
    let (x, y) = (b.input(0), b.input(1));
    let mut plan = LayerPlan::new();
    let out = star_neurons(&mut plan, &x, &y, lambda);
    b.push(plan)?;
    b.finish(&[out])
}

pub(crate) fn star_neurons(plan: &mut LayerPlan, x: &Lin, y: &Lin, lambda: f64) -> Lin {
    let base = x.scaled(lambda).plus(-lambda);
    let p = plan.neuron(base.add(y));
    let n = plan.neuron(base.sub(y));
    p.sub(&n)
}

pub fn star(x: f64, y: f64, lambda: f64) -> f64 {
    relu(y + lambda * x - lambda) - relu(-y + lambda * x - lambda)
}

/// `t ↦ σ(1 − σ(1 − (center − t)/step))`, i.e. `(center − t)/step` clamped to `[0, 1]`.
pub fn hat_ramp_net(center: f64, step: f64) -> Result<ReluNet> {
    if !(step > 0.0) {
        return Err(invalid(format!("ramp needs step > 0, got {step}")));
    }
    let mut b = NetBuilder::new(1);
    let t = b.input(0);
    let v = t.scaled(-1.0 / step).plus(center / step);
    let mut p1 = LayerPlan::new();
    let inner = p1.neuron(v.scaled(-1.0).plus(1.0));
    b.push(p1)?;
    let mut p2 = LayerPlan::new();
    let outer = p2.neuron(inner.scaled(-1.0).plus(1.0));
    b.push(p2)?;
    b.finish(&[outer])
}

/// Largest absolute difference quotient over `n` consecutive pairs of a
/// uniform grid on `[lo, hi]`.
pub fn lip_seminorm(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut prev = f(lo);
    let mut best: f64 = 0.0;
    for k in 1..=n {
        let x = if k == n { hi } else { lo + k as f64 * h };
        let v = f(x);
        best = best.max(((v - prev) / h).abs());
        prev = v;
    }
    best
}
