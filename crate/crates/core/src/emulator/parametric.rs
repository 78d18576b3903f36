use serde::Serialize;

use super::{check_init_range, default_segments, knot_forms, lxf_form, neighbors, Discretization, Emulator, EmulatorConfig, EmulatorHeader, Reduced, SharedBlockNet};
use crate::blocks::{flux_interp, FluxInterp, MultChain};
use crate::error::{invalid, Error, Result};
use crate::flux::{FluxFn, Provenance};
use crate::init::InitSpec;
use crate::kl::{check_b4, B4Report, KlModes};
use crate::nn::{LayerPlan, Lin, NetBuilder};

/// Emulator with flux `f̄(u) + Σ z_i √λ_i φ_i(u)`. `base.flux` is the mean
/// flux; `base.flux_interval` defaults to the support of the modes.
#[derive(Clone, Debug)]
pub struct ParametricFluxConfig {
    pub base: EmulatorConfig,
    pub modes: KlModes,
    pub c_f: f64,
    pub sigma_f: f64,
}

/// Sizes derived from the configuration before any network is built.
#[derive(Clone, Debug, Serialize)]
pub struct ParametricPlan {
    /// Number of time steps actually taken.
    pub n_star: usize,
    pub k1: usize,
    pub k2: usize,
    /// Multiplication-network depth parameter.
    pub m: u32,
    pub disc: Discretization,
    pub b4: B4Report,
    #[serde(skip)]
    pub mean_hat: FluxInterp,
    #[serde(skip)]
    pub mode_hats: Vec<FluxInterp>,
    /// `1 + ‖φ̂_i‖`, the input scale of each multiplication network.
    pub scales: Vec<f64>,
    pub sqrt_lambdas: Vec<f64>,
}

impl ParametricPlan {
    /// `f̂(u, z)` evaluated with the closed-form multiplication surrogate.
    pub fn flux_hat(&self, u: f64, z: &[f64]) -> f64 {
        let mut v = self.mean_hat.eval(u);
        for (i, fi) in self.mode_hats.iter().enumerate() {
            v += self.sqrt_lambdas[i] * crate::blocks::mult_closed_form(z[i], fi.eval(u), self.m, 1.0, self.scales[i] - 1.0);
        }
        v
    }
}

pub fn parametric_plan(cfg: &ParametricFluxConfig) -> Result<ParametricPlan> {
    let base = &cfg.base;
    super::check_basics(base.a, base.b, base.t_final, base.n_steps, base.c0)?;
    let b4 = check_b4(&cfg.modes, &base.flux, base.c0, cfg.c_f, cfg.sigma_f);
    if !b4.pass {
        return Err(Error::B4Failed(format!(
            "C_f = {}, sigma_f = {}: sup|f_u| = {:.6}, mode term = {:.6}, minimal C_f for sigma_f = 0, 1/4, 1/2: {:.6}, {:.6}, {:.6}",
            cfg.c_f, cfg.sigma_f, b4.speed_sup, b4.mode_term, b4.minimal_c_f[0].1, b4.minimal_c_f[1].1, b4.minimal_c_f[2].1
        )));
    }
    let s = cfg.modes.dim();
    let n = base.n_steps;
    let n_star = if cfg.sigma_f > 0.0 {
        ((s.max(1) as f64).powf(4.0 * cfg.sigma_f) * n as f64).ceil() as usize
    } else {
        n
    };
    let k1 = base.k_segments.unwrap_or_else(|| default_segments(n_star));
    let k2 = s.max(1) * k1;
    let m = ((s.max(1) as f64 * (n_star as f64).sqrt()).log2().ceil() as u32).max(1);
    let (lo, hi) = base.flux_interval.unwrap_or((cfg.modes.lo, cfg.modes.hi));
    if !(lo < hi) || !cfg.modes.contains(lo) || !cfg.modes.contains(hi) {
        return Err(invalid(format!(
            "state interval [{lo}, {hi}] must lie inside the mode support [{}, {}]",
            cfg.modes.lo, cfg.modes.hi
        )));
    }
    let mean = base.flux;
    let mean_hat = flux_interp(&|u| mean.f(u), lo, hi, k1)?;
    let mut mode_hats = Vec::with_capacity(s);
    let mut scales = Vec::with_capacity(s);
    for i in 0..s {
        let fi = flux_interp(&|u| cfg.modes.phi(i, u), lo, hi, k2)?;
        let norm = (0..=k2)
            .map(|k| cfg.modes.phi(i, lo + (hi - lo) * k as f64 / k2 as f64).abs())
            .fold(0.0, f64::max);
        scales.push(1.0 + norm);
        mode_hats.push(fi);
    }
    let sqrt_lambdas: Vec<f64> = cfg.modes.lambdas.iter().map(|l| l.sqrt()).collect();
    let (speed, prov) = match base.speed {
        Some(v) => (v, Provenance::User),
        None => {
            let mult_lip = |i: usize| 1.0 + scales[i] / 2f64.powi(m as i32 + 1);
            let v = mean_hat.max_slope_on(lo, hi)
                + (0..s)
                    .map(|i| sqrt_lambdas[i] * mult_lip(i) * mode_hats[i].max_slope_on(lo, hi))
                    .sum::<f64>();
            (v, Provenance::Swept)
        }
    };
    let disc = Discretization::new(base.b - base.a, base.t_final, n_star, speed, prov, 1, base.cells, k1, (lo, hi))?;
    Ok(ParametricPlan {
        n_star,
        k1,
        k2,
        m,
        disc,
        b4,
        mean_hat,
        mode_hats,
        scales,
        sqrt_lambdas,
    })
}

/// Per step: one layer of flux-interpolant units, then `m` layers of
/// multiplication networks with the state, mean flux and `z` carried along.
/// Inputs are `(y, z)`.
pub fn build_emulator_parametric_flux(cfg: &ParametricFluxConfig) -> Result<Emulator> {
    let plan = parametric_plan(cfg)?;
    let base = &cfg.base;
    let init = match &base.init {
        InitSpec::Kl(k) => k,
        InitSpec::External { .. } => {
            return Err(invalid("the parametric-flux emulator takes expansion initial data"));
        }
    };
    let disc = &plan.disc;
    let xs = disc.centers(base.a);
    check_init_range(init.range_on(&xs), base.c0, (disc.flux_lo, disc.flux_hi))?;
    let (d, s, cells) = (init.dim(), cfg.modes.dim(), disc.cells);
    let (lo, hi) = (disc.flux_lo, disc.flux_hi);
    let mean_red = Reduced::new(&plan.mean_hat, lo, hi);
    let mode_reds: Vec<Reduced> = plan.mode_hats.iter().map(|f| Reduced::new(f, lo, hi)).collect();
    let c = 0.5 * disc.ratio();

    let mut b = NetBuilder::new(d + s);
    let mut u = knot_forms(init, &xs, 0);
    let mut z: Vec<Lin> = (0..s).map(|i| b.input(d + i)).collect();
    let built = plan.n_star.min(2);
    for _ in 0..built {
        // flux-interpolant units
        let mut layer = LayerPlan::new();
        let zc: Vec<Lin> = z.iter().map(|z| layer.carry_nonneg(z)).collect();
        let mut vals = Vec::with_capacity(cells);
        let mut means = Vec::with_capacity(cells);
        let mut phis = Vec::with_capacity(cells);
        for uj in &u {
            let cell = super::Cell::place(&mut layer, uj, &mean_red);
            vals.push(cell.value());
            means.push(cell.flux(&mean_red));
            let row: Vec<Lin> = mode_reds
                .iter()
                .map(|r| {
                    let kinks: Vec<Lin> = r.kinks.iter().map(|&(x, _)| layer.neuron(uj.clone().plus(-x))).collect();
                    let mut v = cell.value().scaled(r.slope).plus(r.offset);
                    for (h, &(_, ck)) in kinks.iter().zip(&r.kinks) {
                        v = v.add_scaled(h, ck);
                    }
                    v
                })
                .collect();
            phis.push(row);
        }
        b.push(layer)?;

        // multiplication networks
        let mut layer = LayerPlan::new();
        let mut zc2: Vec<Lin> = zc.iter().map(|z| layer.carry_nonneg(z)).collect();
        let mut vals2: Vec<Lin> = vals.iter().map(|v| layer.carry(v)).collect();
        let mut means2: Vec<Lin> = means.iter().map(|v| layer.carry(v)).collect();
        let mut chains: Vec<Vec<MultChain>> = phis
            .iter()
            .map(|row| row.iter().enumerate().map(|(i, p)| MultChain::start(&mut layer, &zc[i], p, plan.scales[i])).collect())
            .collect();
        b.push(layer)?;
        for _ in 1..plan.m {
            let mut layer = LayerPlan::new();
            zc2 = zc2.iter().map(|z| layer.carry_nonneg(z)).collect();
            vals2 = vals2.iter().map(|v| layer.carry(v)).collect();
            means2 = means2.iter().map(|v| layer.carry(v)).collect();
            chains = chains.iter().map(|row| row.iter().map(|ch| ch.next(&mut layer)).collect()).collect();
            b.push(layer)?;
        }
        let fluxes: Vec<Lin> = (0..cells)
            .map(|j| {
                let mut f = means2[j].clone();
                for (i, ch) in chains[j].iter().enumerate() {
                    f = f.add_scaled(&ch.output(), plan.sqrt_lambdas[i]);
                }
                f
            })
            .collect();
        u = (0..cells)
            .map(|j| {
                let (l, r) = neighbors(j, cells, base.boundary);
                lxf_form((&vals2[l], &fluxes[l]), (&vals2[r], &fluxes[r]), c)
            })
            .collect();
        z = zc2;
    }
    let short = b.finish(&u)?;
    let shared = SharedBlockNet::from_short(&short, plan.m as usize + 1, built, plan.n_star);
    let header = EmulatorHeader {
        t: base.t_final,
        n: plan.n_star,
        j: cells,
        domain: [base.a, base.b],
        boundary: base.boundary,
        flux_kind: format!("kl_flux:{}", base.flux.name()),
        d,
        s,
        dims: 1,
        dt: disc.dt,
        dx: disc.dx,
        speed: disc.speed,
        c0: base.c0,
        k: plan.k1,
        store_mode: base.store_mode,
    };
    Emulator::from_shared(header, shared, base.max_entries)
}
