//! Lax-Friedrichs emulator networks: parameters to cell values at the final
//! time, built by wiring flux interpolants into the scheme's update.

mod multid;
mod parametric;
mod spacetime;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocks::{flux_interp, FluxInterp};
use crate::error::{invalid, Error, Result};
use crate::flux::{Flux, FluxFn, Provenance};
use crate::fv::Boundary;
use crate::init::{InitSpec, KlInit};
use crate::nn::{json, relu, Layer, LayerPlan, Lin, NetBuilder, NetMetrics, PiecewiseConstantFn, ReluNet};

pub use multid::{build_multid_emulator, KlInitNd, MultidConfig};
pub use parametric::{build_emulator_parametric_flux, parametric_plan, ParametricFluxConfig, ParametricPlan};
pub use spacetime::build_spacetime_net;

/// Relative slack applied when rounding `(b−a)/(F·Δt)` down to a cell count.
const ROUNDING_SLACK: f64 = 1e-12;
pub const DEFAULT_MAX_ENTRIES: usize = 200_000_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreMode {
    #[default]
    Unrolled,
    /// One step stored and replayed `N` times.
    SharedBlock,
}

impl fmt::Display for StoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StoreMode::Unrolled => "unrolled",
            StoreMode::SharedBlock => "shared_block",
        })
    }
}

impl FromStr for StoreMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "unrolled" => Ok(StoreMode::Unrolled),
            "shared_block" => Ok(StoreMode::SharedBlock),
            o => Err(format!("unknown store mode '{o}' (unrolled | shared_block)")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EmulatorConfig {
    pub a: f64,
    pub b: f64,
    pub t_final: f64,
    pub n_steps: usize,
    pub flux: Flux,
    pub init: InitSpec,
    pub c0: f64,
    pub boundary: Boundary,
    /// Flux-interpolant segments; `⌈√N⌉` when unset.
    pub k_segments: Option<usize>,
    pub store_mode: StoreMode,
    /// State interval on which the flux is interpolated; `[−C0, C0]` when unset.
    pub flux_interval: Option<(f64, f64)>,
    /// Replaces the CFL speed `F`.
    pub speed: Option<f64>,
    /// Replaces the cell count `J`.
    pub cells: Option<usize>,
    /// Largest number of stored non-zeros accepted for an unrolled network.
    pub max_entries: usize,
}

impl EmulatorConfig {
    /// Defaults: periodic boundary, unrolled storage, `C0` from the initial data.
    pub fn new(a: f64, b: f64, t_final: f64, n_steps: usize, flux: Flux, init: InitSpec) -> Self {
        let c0 = match &init {
            InitSpec::Kl(k) => k.c0_bound(),
            InitSpec::External { sup, .. } => *sup,
        };
        EmulatorConfig {
            a,
            b,
            t_final,
            n_steps,
            flux,
            init,
            c0,
            boundary: Boundary::Periodic,
            k_segments: None,
            store_mode: StoreMode::Unrolled,
            flux_interval: None,
            speed: None,
            cells: None,
            max_entries: DEFAULT_MAX_ENTRIES,
        }
    }

    pub fn kl(a: f64, b: f64, t_final: f64, n_steps: usize, flux: Flux, init: KlInit) -> Self {
        Self::new(a, b, t_final, n_steps, flux, InitSpec::Kl(init))
    }

    pub fn interval(&self) -> (f64, f64) {
        self.flux_interval.unwrap_or((-self.c0, self.c0))
    }

    pub fn discretization(&self) -> Result<Discretization> {
        check_basics(self.a, self.b, self.t_final, self.n_steps, self.c0)?;
        let (lo, hi) = self.interval();
        if !(lo < hi) {
            return Err(invalid(format!("empty flux interval [{lo}, {hi}]")));
        }
        let (speed, speed_provenance) = match self.speed {
            Some(s) => (s, Provenance::User),
            None => self.flux.sup_df(lo, hi),
        };
        let k = self.k_segments.unwrap_or_else(|| default_segments(self.n_steps));
        Discretization::new(self.b - self.a, self.t_final, self.n_steps, speed, speed_provenance, 1, self.cells, k, (lo, hi))
    }
}

pub(crate) fn check_basics(a: f64, b: f64, t_final: f64, n: usize, c0: f64) -> Result<()> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(invalid(format!("invalid domain [{a}, {b}]")));
    }
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(invalid(format!("final time must be positive, got {t_final}")));
    }
    if n == 0 {
        return Err(invalid("N must be at least 1"));
    }
    if !(c0 > 0.0) || !c0.is_finite() {
        return Err(invalid(format!("C0 must be positive, got {c0}")));
    }
    Ok(())
}

pub(crate) fn default_segments(n: usize) -> usize {
    ((n as f64).sqrt().ceil() as usize).max(1)
}

/// Step sizes and cell count fixed by the CFL coupling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub dt: f64,
    pub dx: f64,
    /// Cells per axis.
    pub cells: usize,
    pub speed: f64,
    pub speed_provenance: Provenance,
    pub k_segments: usize,
    pub flux_lo: f64,
    pub flux_hi: f64,
    /// `dims · F · Δt / Δx`.
    pub cfl: f64,
}

impl Discretization {
    /// `J = ⌊(b−a)/(dims·F·Δt)⌋` unless overridden; `F = 0` falls back to
    /// `Δx = (b−a)/N`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        width: f64,
        t_final: f64,
        n: usize,
        speed: f64,
        speed_provenance: Provenance,
        dims: usize,
        cells: Option<usize>,
        k: usize,
        (lo, hi): (f64, f64),
    ) -> Result<Discretization> {
        if !(speed >= 0.0) || !speed.is_finite() {
            return Err(invalid(format!("CFL speed must be finite and nonnegative, got {speed}")));
        }
        if k == 0 {
            return Err(invalid("flux interpolant needs K >= 1"));
        }
        let dt = t_final / n as f64;
        let cells = match cells {
            Some(j) => j,
            None if speed > 0.0 => {
                let j = (width / (dims as f64 * speed * dt) * (1.0 + ROUNDING_SLACK)).floor();
                if j > u32::MAX as f64 {
                    return Err(Error::TooLarge(format!("{j} cells per axis")));
                }
                j as usize
            }
            None => n,
        };
        if cells < 3 {
            return Err(invalid(format!(
                "the CFL coupling gives J = {cells} cells; at least 3 are needed (increase N or shrink T)"
            )));
        }
        let dx = width / cells as f64;
        let cfl = dims as f64 * speed * dt / dx;
        if cfl > 1.0 + 1e-9 {
            return Err(invalid(format!("CFL number {cfl} exceeds 1 (J = {cells}, dt = {dt})")));
        }
        Ok(Discretization {
            dt,
            dx,
            cells,
            speed,
            speed_provenance,
            k_segments: k,
            flux_lo: lo,
            flux_hi: hi,
            cfl,
        })
    }

    pub fn centers(&self, a: f64) -> Vec<f64> {
        (0..self.cells).map(|j| a + (j as f64 + 0.5) * self.dx).collect()
    }

    /// `Δt/Δx`.
    pub fn ratio(&self) -> f64 {
        self.dt / self.dx
    }
}

/// A flux interpolant restricted to the state interval: always-active units
/// are folded into `slope·u + offset` and inactive ones are dropped.
#[derive(Clone, Debug)]
pub(crate) struct Reduced {
    pub slope: f64,
    pub offset: f64,
    pub kinks: Vec<(f64, f64)>,
}

impl Reduced {
    pub fn new(fi: &FluxInterp, lo: f64, hi: f64) -> Reduced {
        let (slope, offset, kinks) = fi.restricted(lo, hi);
        Reduced {
            slope,
            offset,
            kinks: kinks.into_iter().filter(|&(_, c)| c != 0.0).collect(),
        }
    }
}

/// Hidden units for one cell: `σ(U)`, `σ(−U)` and `σ(U − x_k)` per kink.
pub(crate) struct Cell {
    p: Lin,
    n: Lin,
    kinks: Vec<Lin>,
}

impl Cell {
    pub fn place(plan: &mut LayerPlan, u: &Lin, red: &Reduced) -> Cell {
        let p = plan.neuron(u.clone());
        let n = plan.neuron(u.scaled(-1.0));
        let kinks = red.kinks.iter().map(|&(x, _)| plan.neuron(u.clone().plus(-x))).collect();
        Cell { p, n, kinks }
    }

    pub fn value(&self) -> Lin {
        self.p.sub(&self.n)
    }

    /// Flux up to the constant offset, which cancels in differences.
    pub fn flux(&self, red: &Reduced) -> Lin {
        let mut out = self.value().scaled(red.slope);
        for (h, &(_, c)) in self.kinks.iter().zip(&red.kinks) {
            out = out.add_scaled(h, c);
        }
        out
    }
}

/// `½(U_r + U_l) − c (F_r − F_l)` with `c = Δt/(2Δx)`.
pub(crate) fn lxf_form(left: (&Lin, &Lin), right: (&Lin, &Lin), c: f64) -> Lin {
    Lin::sum([(right.0, 0.5), (left.0, 0.5), (right.1, -c), (left.1, c)])
}

pub(crate) fn neighbors(j: usize, n: usize, boundary: Boundary) -> (usize, usize) {
    match boundary {
        Boundary::Periodic => ((j + n - 1) % n, (j + 1) % n),
        Boundary::Outflow => (j.saturating_sub(1), (j + 1).min(n - 1)),
    }
}

/// Places one Lax-Friedrichs step on `plan` and returns the updated states
/// as forms over the new layer. `nb(j)` gives the left and right neighbours.
pub(crate) fn lxf_layer(plan: &mut LayerPlan, u: &[Lin], red: &Reduced, c: f64, nb: &dyn Fn(usize) -> (usize, usize)) -> Vec<Lin> {
    let cells: Vec<Cell> = u.iter().map(|u| Cell::place(plan, u, red)).collect();
    let vals: Vec<Lin> = cells.iter().map(Cell::value).collect();
    let fls: Vec<Lin> = cells.iter().map(|c| c.flux(red)).collect();
    (0..u.len())
        .map(|j| {
            let (l, r) = nb(j);
            lxf_form((&vals[l], &fls[l]), (&vals[r], &fls[r]), c)
        })
        .collect()
}

/// A network whose middle section repeats: `prefix`, then `block` replayed
/// `repeats` times, then the affine `output` layer.
#[derive(Clone, Debug, PartialEq)]
pub struct SharedBlockNet {
    prefix: Vec<Layer>,
    block: Vec<Layer>,
    repeats: usize,
    output: Layer,
}

impl SharedBlockNet {
    /// Splits a network built with `built ∈ {1, 2}` steps of `period` layers
    /// into the shared form of a `steps`-step network.
    pub(crate) fn from_short(net: &ReluNet, period: usize, built: usize, steps: usize) -> SharedBlockNet {
        let layers = net.layers();
        let last = layers.len() - 1;
        if built < 2 || steps < 2 {
            return SharedBlockNet {
                prefix: layers[..last].to_vec(),
                block: Vec::new(),
                repeats: 0,
                output: layers[last].clone(),
            };
        }
        let q = last - period;
        SharedBlockNet {
            prefix: layers[..q].to_vec(),
            block: layers[q..last].to_vec(),
            repeats: steps - 1,
            output: layers[last].clone(),
        }
    }

    fn all_layers(&self) -> impl Iterator<Item = &Layer> {
        self.prefix
            .iter()
            .chain((0..self.repeats).flat_map(move |_| self.block.iter()))
            .chain(std::iter::once(&self.output))
    }

    pub fn input_dim(&self) -> usize {
        self.prefix.first().unwrap_or(&self.output).in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.output.out_dim()
    }

    pub fn depth(&self) -> usize {
        self.prefix.len() + self.repeats * self.block.len() + 1
    }

    /// Number of stored (not replayed) non-zeros.
    pub fn stored_entries(&self) -> usize {
        self.prefix.iter().chain(&self.block).chain(std::iter::once(&self.output)).map(Layer::nnz).sum()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.len(),
                context: "network input",
            });
        }
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let depth = self.depth();
        for (k, layer) in self.all_layers().enumerate() {
            next.resize(layer.out_dim(), 0.0);
            layer.apply_into(&cur, &mut next);
            if k + 1 < depth {
                next.iter_mut().for_each(|v| *v = relu(*v));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Metrics of the unrolled network, computed without materializing it.
    pub fn metrics(&self) -> NetMetrics {
        let nnz = |ls: &[Layer]| ls.iter().map(Layer::nnz).sum::<usize>();
        let connectivity = nnz(&self.prefix) + self.repeats * nnz(&self.block) + self.output.nnz();
        let stored = || self.prefix.iter().chain(&self.block).chain(std::iter::once(&self.output));
        let max_width = stored().map(Layer::out_dim).fold(self.input_dim(), usize::max);
        let weight_magnitude = stored().fold(0.0f64, |m, l| m.max(l.max_abs()));
        NetMetrics {
            connectivity,
            depth: self.depth(),
            max_width,
            weight_magnitude,
        }
    }

    pub fn unroll(&self) -> Result<ReluNet> {
        ReluNet::new(self.all_layers().cloned().collect())
    }
}

/// Header written alongside a serialized emulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmulatorHeader {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub domain: [f64; 2],
    pub boundary: Boundary,
    pub flux_kind: String,
    pub d: usize,
    pub s: usize,
    /// Spatial dimension.
    pub dims: usize,
    pub dt: f64,
    pub dx: f64,
    pub speed: f64,
    pub c0: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub store_mode: StoreMode,
}

#[derive(Clone, Debug)]
enum Storage {
    Unrolled(ReluNet),
    Shared(SharedBlockNet),
}

/// A built emulator with its discretization header.
#[derive(Clone, Debug)]
pub struct Emulator {
    header: EmulatorHeader,
    storage: Storage,
}

impl Emulator {
    pub(crate) fn from_shared(header: EmulatorHeader, shared: SharedBlockNet, max_entries: usize) -> Result<Emulator> {
        let storage = match header.store_mode {
            StoreMode::SharedBlock => Storage::Shared(shared),
            StoreMode::Unrolled => {
                let m = shared.metrics().connectivity;
                if m > max_entries {
                    return Err(Error::TooLarge(format!(
                        "unrolled network would store {m} non-zeros (limit {max_entries}); use store_mode=shared_block"
                    )));
                }
                Storage::Unrolled(shared.unroll()?)
            }
        };
        Ok(Emulator { header, storage })
    }

    pub fn header(&self) -> &EmulatorHeader {
        &self.header
    }

    pub fn input_dim(&self) -> usize {
        match &self.storage {
            Storage::Unrolled(n) => n.input_dim(),
            Storage::Shared(s) => s.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match &self.storage {
            Storage::Unrolled(n) => n.output_dim(),
            Storage::Shared(s) => s.output_dim(),
        }
    }

    pub fn eval(&self, y: &[f64]) -> Result<Vec<f64>> {
        match &self.storage {
            Storage::Unrolled(n) => n.eval(y),
            Storage::Shared(s) => s.eval(y),
        }
    }

    pub fn eval_batch(&self, ys: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        ys.par_iter().map(|y| self.eval(y)).collect()
    }

    /// Metrics of the unrolled network in either storage mode.
    pub fn metrics(&self) -> NetMetrics {
        match &self.storage {
            Storage::Unrolled(n) => n.metrics(),
            Storage::Shared(s) => s.metrics(),
        }
    }

    pub fn as_unrolled(&self) -> Option<&ReluNet> {
        match &self.storage {
            Storage::Unrolled(n) => Some(n),
            Storage::Shared(_) => None,
        }
    }

    pub fn to_net(&self) -> Result<ReluNet> {
        match &self.storage {
            Storage::Unrolled(n) => Ok(n.clone()),
            Storage::Shared(s) => s.unroll(),
        }
    }

    /// Network JSON (always unrolled) with the header attached.
    pub fn to_json(&self) -> Result<String> {
        let header = serde_json::to_value(&self.header)?;
        Ok(match &self.storage {
            Storage::Unrolled(n) => json::to_json(n, Some(&header)),
            Storage::Shared(s) => json::to_json(&s.unroll()?, Some(&header)),
        })
    }

    /// Output at `y` as a piecewise-constant function (one-dimensional emulators).
    pub fn solution(&self, y: &[f64]) -> Result<PiecewiseConstantFn> {
        if self.header.dims != 1 {
            return Err(invalid("solution functions are one-dimensional"));
        }
        PiecewiseConstantFn::new(self.header.domain[0], self.header.domain[1], self.eval(y)?)
    }
}

/// Cell-value forms `Û^0_j` over the input layer, checked against `C0`.
fn initial_forms(cfg: &EmulatorConfig, disc: &Discretization) -> Result<(usize, Vec<Lin>)> {
    let (lo, hi) = cfg.interval();
    match &cfg.init {
        InitSpec::Kl(k) => {
            let xs = disc.centers(cfg.a);
            check_init_range(k.range_on(&xs), cfg.c0, (lo, hi))?;
            Ok((k.dim(), knot_forms(k, &xs, 0)))
        }
        InitSpec::External { net, sup, .. } => {
            if net.output_dim() != disc.cells {
                return Err(Error::Dimension {
                    expected: disc.cells,
                    got: net.output_dim(),
                    context: "initial-data network output vs cell count",
                });
            }
            check_init_range((-sup, *sup), cfg.c0, (lo, hi))?;
            Ok((disc.cells, (0..disc.cells).map(Lin::var).collect()))
        }
    }
}

/// `Û^0_j` as affine forms in the inputs `offset..offset+d`.
pub(crate) fn knot_forms(init: &KlInit, xs: &[f64], offset: usize) -> Vec<Lin> {
    xs.iter()
        .map(|&x| {
            let (c, a) = init.knot_form(x);
            let mut l = Lin::constant(c);
            l.terms = a.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, &v)| (offset + i, v)).collect();
            l
        })
        .collect()
}

pub(crate) fn check_init_range((min, max): (f64, f64), c0: f64, (lo, hi): (f64, f64)) -> Result<()> {
    let sup = min.abs().max(max.abs());
    let tol = 1e-12 * (1.0 + c0);
    if sup > c0 + tol {
        return Err(Error::BoundViolated { sup, c0 });
    }
    if min < lo - tol || max > hi + tol {
        return Err(invalid(format!(
            "initial data range [{min}, {max}] leaves the flux interval [{lo}, {hi}]"
        )));
    }
    Ok(())
}

/// The affine map `y ↦ (Û^0_j(y))_j`, or the supplied initial-data network.
pub fn build_initial_layer(cfg: &EmulatorConfig) -> Result<ReluNet> {
    let disc = cfg.discretization()?;
    match &cfg.init {
        InitSpec::External { net, .. } => {
            initial_forms(cfg, &disc)?;
            Ok(net.clone())
        }
        InitSpec::Kl(_) => {
            let (d, forms) = initial_forms(cfg, &disc)?;
            NetBuilder::new(d).finish(&forms)
        }
    }
}

/// One Lax-Friedrichs step `(Û^n_j)_j ↦ (Û^{n+1}_j)_j` with the flux
/// interpolant `fi`, valid for states in `interval`.
pub fn lxf_block(fi: &FluxInterp, interval: (f64, f64), ratio: f64, cells: usize, boundary: Boundary) -> Result<ReluNet> {
    if cells < 3 {
        return Err(invalid(format!("a Lax-Friedrichs block needs J >= 3, got {cells}")));
    }
    let red = Reduced::new(fi, interval.0, interval.1);
    let mut b = NetBuilder::new(cells);
    let u: Vec<Lin> = (0..cells).map(Lin::var).collect();
    let mut plan = LayerPlan::new();
    let out = lxf_layer(&mut plan, &u, &red, 0.5 * ratio, &|j| neighbors(j, cells, boundary));
    b.push(plan)?;
    b.finish(&out)
}

/// The configured flux interpolant `f̂`.
pub fn flux_hat(cfg: &EmulatorConfig) -> Result<FluxInterp> {
    let disc = cfg.discretization()?;
    let f = cfg.flux;
    flux_interp(&|u| f.f(u), disc.flux_lo, disc.flux_hi, disc.k_segments)
}

pub fn build_lxf_block(cfg: &EmulatorConfig) -> Result<ReluNet> {
    let disc = cfg.discretization()?;
    lxf_block(&flux_hat(cfg)?, (disc.flux_lo, disc.flux_hi), disc.ratio(), disc.cells, cfg.boundary)
}

/// Initial layer followed by `N` Lax-Friedrichs blocks, with the initial
/// affine map merged into the first block.
pub fn build_emulator(cfg: &EmulatorConfig) -> Result<Emulator> {
    let disc = cfg.discretization()?;
    let (input_dim, mut u) = initial_forms(cfg, &disc)?;
    let red = Reduced::new(&flux_hat(cfg)?, disc.flux_lo, disc.flux_hi);
    let c = 0.5 * disc.ratio();
    let cells = disc.cells;
    let nb = move |j| neighbors(j, cells, cfg.boundary);
    let built = cfg.n_steps.min(2);
    let mut b = NetBuilder::new(input_dim);
    for _ in 0..built {
        let mut plan = LayerPlan::new();
        u = lxf_layer(&mut plan, &u, &red, c, &nb);
        b.push(plan)?;
    }
    let mut short = b.finish(&u)?;
    if let InitSpec::External { net, .. } = &cfg.init {
        short = ReluNet::compose(&short, net)?;
    }
    let shared = SharedBlockNet::from_short(&short, 1, built, cfg.n_steps);
    let header = EmulatorHeader {
        t: cfg.t_final,
        n: cfg.n_steps,
        j: cells,
        domain: [cfg.a, cfg.b],
        boundary: cfg.boundary,
        flux_kind: format!("closed_form:{}", cfg.flux.name()),
        d: cfg.init.dim(),
        s: 0,
        dims: 1,
        dt: disc.dt,
        dx: disc.dx,
        speed: disc.speed,
        c0: cfg.c0,
        k: disc.k_segments,
        store_mode: cfg.store_mode,
    };
    Emulator::from_shared(header, shared, cfg.max_entries)
}

/// Midpoint quadrature `Σ_j Δx φ(x_j) g(u_j)` of `∫ φ(x) g(u(x)) dx`.
pub fn eval_observable(u: &PiecewiseConstantFn, phi: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> f64 {
    let dx = u.dx();
    u.values.iter().enumerate().map(|(j, &v)| dx * phi(u.center(j)) * g(v)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::KlInit;

    fn loop_lxf(fi: &FluxInterp, u0: &[f64], ratio: f64, steps: usize, boundary: Boundary) -> Vec<f64> {
        let n = u0.len();
        let mut u = u0.to_vec();
        for _ in 0..steps {
            u = (0..n)
                .map(|j| {
                    let (l, r) = neighbors(j, n, boundary);
                    0.5 * (u[l] + u[r]) - 0.5 * ratio * (fi.eval(u[r]) - fi.eval(u[l]))
                })
                .collect();
        }
        u
    }

    #[test]
    fn zero_flux_block_averages() {
        let fi = flux_interp(&|_| 0.0, -1.0, 1.0, 2).unwrap();
        let net = lxf_block(&fi, (-1.0, 1.0), 1.0, 3, Boundary::Outflow).unwrap();
        assert_eq!(net.eval(&[0.0, 1.0, 0.0]).unwrap()[1], 0.0);
        assert_eq!(net.eval(&[0.0, 1.0, 0.0]).unwrap()[0], 0.5);
        let net = lxf_block(&fi, (-1.0, 1.0), 1.0, 3, Boundary::Periodic).unwrap();
        assert_eq!(net.eval(&[1.0, 0.0, 1.0]).unwrap()[1], 1.0);
    }

    #[test]
    fn burgers_block_by_hand() {
        let fi = flux_interp(&|u| 0.5 * u * u, -1.0, 1.0, 2).unwrap();
        let net = lxf_block(&fi, (-1.0, 1.0), 1.0, 3, Boundary::Periodic).unwrap();
        let out = net.eval(&[0.0, 0.7, 1.0]).unwrap();
        assert!((out[1] - 0.25).abs() < 1e-15);
        let c = net.eval(&[0.3, 0.3, 0.3]).unwrap();
        assert!(c.iter().all(|v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn constant_data_zero_flux() {
        let mut cfg = EmulatorConfig::kl(0.0, 1.0, 1.0, 1, Flux::Zero, KlInit::constant(0.4));
        cfg.cells = Some(3);
        let em = build_emulator(&cfg).unwrap();
        assert_eq!(em.eval(&[]).unwrap(), vec![0.4; 3]);
    }

    #[test]
    fn matches_loop_and_shared_is_identical() {
        let mut cfg = EmulatorConfig::kl(0.0, 1.0, 0.1, 9, Flux::Burgers, KlInit::sine(2));
        let em = build_emulator(&cfg).unwrap();
        assert_eq!(em.metrics().depth, 10);
        cfg.store_mode = StoreMode::SharedBlock;
        let sh = build_emulator(&cfg).unwrap();
        assert_eq!(sh.metrics(), em.metrics());
        let disc = cfg.discretization().unwrap();
        let fi = flux_hat(&cfg).unwrap();
        let k = KlInit::sine(2);
        for y in [[0.0, 0.0], [1.0, 1.0], [0.3, 0.8]] {
            let u0: Vec<f64> = disc.centers(0.0).iter().map(|&x| k.value(x, &y).unwrap()).collect();
            let expect = loop_lxf(&fi, &u0, disc.ratio(), 9, Boundary::Periodic);
            let got = em.eval(&y).unwrap();
            let err = got.iter().zip(&expect).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "{err}");
            let shared = sh.eval(&y).unwrap();
            assert!(got.iter().zip(&shared).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn external_init_composes() {
        let mut cfg = EmulatorConfig::kl(0.0, 1.0, 0.1, 4, Flux::Burgers, KlInit::sine(1));
        let init_net = build_initial_layer(&cfg).unwrap();
        let direct = build_emulator(&cfg).unwrap();
        cfg.init = InitSpec::external(init_net, 1.0, 2.0, 2.0).unwrap();
        cfg.c0 = 2.0;
        let ext = build_emulator(&cfg).unwrap();
        for y in [0.0, 0.5, 1.0] {
            let a = direct.eval(&[y]).unwrap();
            let b = ext.eval(&[y]).unwrap();
            assert!(a.iter().zip(&b).all(|(a, b)| (a - b).abs() < 1e-13));
        }
    }

    #[test]
    fn rejects_c0_violation_and_coarse_grid() {
        let mut cfg = EmulatorConfig::kl(0.0, 1.0, 0.1, 4, Flux::Burgers, KlInit::sine(1));
        cfg.c0 = 1.5;
        assert!(matches!(build_emulator(&cfg), Err(Error::BoundViolated { .. })));
        let cfg = EmulatorConfig::kl(0.0, 1.0, 10.0, 2, Flux::Burgers, KlInit::sine(1));
        assert!(build_emulator(&cfg).is_err());
    }

    #[test]
    fn zero_speed_falls_back() {
        let cfg = EmulatorConfig::kl(0.0, 1.0, 1.0, 5, Flux::Zero, KlInit::sine(1));
        assert_eq!(cfg.discretization().unwrap().cells, 5);
    }

    #[test]
    fn observables() {
        let u = PiecewiseConstantFn::new(0.0, 1.0, vec![2.0; 4]).unwrap();
        assert_eq!(eval_observable(&u, |_| 1.0, |v| v), 2.0);
        assert!((eval_observable(&u, |x| x, |v| v * v) - 2.0).abs() < 1e-15);
        let u = PiecewiseConstantFn::new(0.0, 1.0, vec![0.0, 1.0]).unwrap();
        assert_eq!(eval_observable(&u, |_| 1.0, |v| v), 0.5);
    }

    #[test]
    fn json_round_trip_keeps_header() {
        let cfg = EmulatorConfig::kl(0.0, 1.0, 0.1, 2, Flux::Burgers, KlInit::sine(1));
        let em = build_emulator(&cfg).unwrap();
        let (net, header) = json::from_json(&em.to_json().unwrap()).unwrap();
        assert_eq!(&net, em.as_unrolled().unwrap());
        let h: EmulatorHeader = serde_json::from_value(header.unwrap()).unwrap();
        assert_eq!(&h, em.header());
    }
}
