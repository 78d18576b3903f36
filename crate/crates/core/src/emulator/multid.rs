use serde::{Deserialize, Serialize};

use super::{check_basics, check_init_range, default_segments, lxf_layer, Discretization, Emulator, EmulatorHeader, Reduced, SharedBlockNet, StoreMode, DEFAULT_MAX_ENTRIES};
use crate::blocks::flux_interp;
use crate::error::{invalid, Error, Result};
use crate::flux::{Flux, FluxFn, Provenance};
use crate::fv::Boundary;
use crate::init::Profile;
use crate::nn::{LayerPlan, Lin, NetBuilder};

/// Expansion initial data on a box with separable modes
/// `u₀(x, y) = ū + Σ_i √λ_i y_i Π_k φ_{i,k}(x_k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlInitNd {
    pub mean: f64,
    pub modes: Vec<(f64, Vec<Profile>)>,
}

impl KlInitNd {
    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn knot_form(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let a = self
            .modes
            .iter()
            .map(|(l, ps)| l.sqrt() * ps.iter().zip(x).map(|(p, &xk)| p.eval(xk)).product::<f64>())
            .collect();
        (self.mean, a)
    }

    pub fn value(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if y.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: y.len(),
                context: "initial-data coefficients",
            });
        }
        let (c, a) = self.knot_form(x);
        Ok(c + a.iter().zip(y).map(|(a, y)| a * y).sum::<f64>())
    }

    pub fn c0_bound(&self) -> f64 {
        self.mean.abs()
            + self
                .modes
                .iter()
                .map(|(l, ps)| l.sqrt() * ps.iter().map(Profile::sup_bound).product::<f64>())
                .sum::<f64>()
    }
}

#[derive(Clone, Debug)]
pub struct MultidConfig {
    pub a: f64,
    pub b: f64,
    pub t_final: f64,
    pub n_steps: usize,
    /// One flux per axis.
    pub fluxes: Vec<Flux>,
    pub init: KlInitNd,
    pub c0: f64,
    pub boundary: Boundary,
    pub k_segments: Option<usize>,
    pub store_mode: StoreMode,
    pub speed: Option<f64>,
    /// Cells per axis.
    pub cells: Option<usize>,
    pub max_entries: usize,
}

impl MultidConfig {
    pub fn new(a: f64, b: f64, t_final: f64, n_steps: usize, fluxes: Vec<Flux>, init: KlInitNd) -> Self {
        let c0 = init.c0_bound();
        MultidConfig {
            a,
            b,
            t_final,
            n_steps,
            fluxes,
            init,
            c0,
            boundary: Boundary::Periodic,
            k_segments: None,
            store_mode: StoreMode::Unrolled,
            speed: None,
            cells: None,
            max_entries: DEFAULT_MAX_ENTRIES,
        }
    }

    /// `J = ⌊(b−a)/(m·F·Δt)⌋` per axis with `F = max_i sup|f_i′|`.
    pub fn discretization(&self) -> Result<Discretization> {
        check_basics(self.a, self.b, self.t_final, self.n_steps, self.c0)?;
        let m = self.fluxes.len();
        if m < 2 {
            return Err(invalid("the split emulator needs at least two axes"));
        }
        let (lo, hi) = (-self.c0, self.c0);
        let (speed, prov) = match self.speed {
            Some(s) => (s, Provenance::User),
            None => self.fluxes.iter().fold((0.0, Provenance::ClosedForm), |(s, _), f| {
                let (v, p) = f.sup_df(lo, hi);
                (f64::max(s, v), p)
            }),
        };
        let k = self.k_segments.unwrap_or_else(|| default_segments(self.n_steps));
        Discretization::new(self.b - self.a, self.t_final, self.n_steps, speed, prov, m, self.cells, k, (lo, hi))
    }
}

/// Dimensionally split Lax-Friedrichs: every step sweeps axis 0, then axis 1,
/// and so on, one hidden layer per sweep. Cells are ordered row-major with
/// axis 0 outermost. Depth is `m·N + 1`.
pub fn build_multid_emulator(cfg: &MultidConfig) -> Result<Emulator> {
    let disc = cfg.discretization()?;
    let m = cfg.fluxes.len();
    let j = disc.cells;
    let total = (j as u64)
        .checked_pow(m as u32)
        .filter(|t| *t <= u32::MAX as u64)
        .ok_or_else(|| Error::TooLarge(format!("{j}^{m} cells")))? as usize;
    let k = disc.k_segments;
    let estimate = (total as f64) * (k as f64 + 1.0) * 2.0 * (k as f64 + 2.0);
    if estimate * 2.0 > cfg.max_entries as f64 {
        return Err(Error::TooLarge(format!(
            "{total} cells need about {estimate:.0} non-zeros per sweep (limit {})",
            cfg.max_entries
        )));
    }
    let centers = disc.centers(cfg.a);
    let strides: Vec<usize> = (0..m).map(|ax| j.pow((m - 1 - ax) as u32)).collect();
    let coords = |idx: usize| -> Vec<usize> { strides.iter().map(|s| (idx / s) % j).collect() };

    let points: Vec<Vec<f64>> = (0..total).map(|idx| coords(idx).iter().map(|&c| centers[c]).collect()).collect();
    let range = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        let (c, a) = cfg.init.knot_form(x);
        let pos: f64 = a.iter().filter(|v| **v > 0.0).sum();
        let neg: f64 = a.iter().filter(|v| **v < 0.0).sum();
        (lo.min(c + neg), hi.max(c + pos))
    });
    check_init_range(range, cfg.c0, (disc.flux_lo, disc.flux_hi))?;

    let reds = cfg
        .fluxes
        .iter()
        .map(|f| Ok(Reduced::new(&flux_interp(&|u| f.f(u), disc.flux_lo, disc.flux_hi, k)?, disc.flux_lo, disc.flux_hi)))
        .collect::<Result<Vec<_>>>()?;
    let c = 0.5 * disc.ratio();
    let d = cfg.init.dim();
    let mut u: Vec<Lin> = points
        .iter()
        .map(|x| {
            let (c0, a) = cfg.init.knot_form(x);
            let mut l = Lin::constant(c0);
            l.terms = a.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, &v)| (i, v)).collect();
            l
        })
        .collect();
    let boundary = cfg.boundary;
    let built = cfg.n_steps.min(2);
    let mut b = NetBuilder::new(d);
    for _ in 0..built {
        for ax in 0..m {
            let stride = strides[ax];
            let nb = |idx: usize| {
                let pos = (idx / stride) % j;
                let base = idx - pos * stride;
                let (l, r) = super::neighbors(pos, j, boundary);
                (base + l * stride, base + r * stride)
            };
            let mut plan = LayerPlan::new();
            u = lxf_layer(&mut plan, &u, &reds[ax], c, &nb);
            b.push(plan)?;
        }
    }
    let short = b.finish(&u)?;
    let shared = SharedBlockNet::from_short(&short, m, built, cfg.n_steps);
    let header = EmulatorHeader {
        t: cfg.t_final,
        n: cfg.n_steps,
        j,
        domain: [cfg.a, cfg.b],
        boundary,
        flux_kind: format!(
            "closed_form:{}",
            cfg.fluxes.iter().map(|f| f.name()).collect::<Vec<_>>().join(",")
        ),
        d,
        s: 0,
        dims: m,
        dt: disc.dt,
        dx: disc.dx,
        speed: disc.speed,
        c0: cfg.c0,
        k,
        store_mode: cfg.store_mode,
    };
    Emulator::from_shared(header, shared, cfg.max_entries)
}
