use super::{check_init_range, flux_hat, knot_forms, lxf_layer, neighbors, EmulatorConfig, Reduced};
use crate::blocks::star_neurons;
use crate::error::{invalid, Result};
use crate::init::InitSpec;
use crate::nn::{LayerPlan, Lin, NetBuilder, ReluNet};

/// `σ(v) − σ(v − 1) = clamp(v, 0, 1)`.
fn ramp(plan: &mut LayerPlan, v: &Lin) -> Lin {
    let a = plan.neuron(v.clone());
    let b = plan.neuron(v.clone().plus(-1.0));
    a.sub(&b)
}

/// Network `(t, x, y) ↦ Û(t, x, y)`. In time,
/// `Û_j(t) = Û^0_j + Σ_n r^n(t) ⋆ (Û^n_j − Û^{n−1}_j)` with
/// `r^n(t) = clamp((t − t^{n−1})/Δt, 0, 1)`; in space,
/// `Û(x) = Û_1 + Σ_{j≥2} β_j(x) ⋆ (Û_j − Û_{j−1})` with
/// `β_j(x) = clamp((x − x_{j−1})/Δx, 0, 1)` over the cell centres. The star
/// scale is `λ = 2·C0`. Depth is `N + 3`.
pub fn build_spacetime_net(cfg: &EmulatorConfig) -> Result<ReluNet> {
    let disc = cfg.discretization()?;
    let init = match &cfg.init {
        InitSpec::Kl(k) => k,
        InitSpec::External { .. } => return Err(invalid("the space-time network takes expansion initial data")),
    };
    let xs = disc.centers(cfg.a);
    check_init_range(init.range_on(&xs), cfg.c0, (disc.flux_lo, disc.flux_hi))?;
    let red = Reduced::new(&flux_hat(cfg)?, disc.flux_lo, disc.flux_hi);
    let c = 0.5 * disc.ratio();
    let cells = disc.cells;
    let n_steps = cfg.n_steps;
    let lambda = 2.0 * cfg.c0;
    let inv_dt = 1.0 / disc.dt;
    let nb = |j| neighbors(j, cells, cfg.boundary);

    let mut b = NetBuilder::new(2 + init.dim());
    let mut t = b.input(0);
    let mut x = b.input(1);
    let mut u = knot_forms(init, &xs, 2);
    let mut sum = u.clone();
    // D^{n-1} and r^{n-1}, waiting for their star units
    let mut pending: Option<(Vec<Lin>, Lin)> = None;
    for n in 1..=n_steps {
        let mut plan = LayerPlan::new();
        let prev: Vec<Lin> = u.iter().map(|v| plan.carry(v)).collect();
        let mut new_sum: Vec<Lin> = sum.iter().map(|s| plan.carry(s)).collect();
        if let Some((diff, r)) = pending.take() {
            for (s, dj) in new_sum.iter_mut().zip(&diff) {
                *s = s.add(&star_neurons(&mut plan, &r, dj, lambda));
            }
        }
        let r = ramp(&mut plan, &t.scaled(inv_dt).plus(-((n - 1) as f64)));
        x = plan.carry(&x);
        if n < n_steps {
            t = plan.carry(&t);
        }
        u = lxf_layer(&mut plan, &u, &red, c, &nb);
        b.push(plan)?;
        pending = Some((u.iter().zip(&prev).map(|(a, p)| a.sub(p)).collect(), r));
        sum = new_sum;
    }

    // last time star, and the space ramps
    let mut plan = LayerPlan::new();
    let (diff, r) = pending.take().expect("at least one step");
    let at_t: Vec<Lin> = sum
        .iter()
        .zip(&diff)
        .map(|(s, dj)| {
            let s = plan.carry(s);
            s.add(&star_neurons(&mut plan, &r, dj, lambda))
        })
        .collect();
    let betas: Vec<Lin> = (1..cells)
        .map(|j| ramp(&mut plan, &x.scaled(1.0 / disc.dx).plus(-xs[j - 1] / disc.dx)))
        .collect();
    b.push(plan)?;

    let mut plan = LayerPlan::new();
    let mut out = plan.carry(&at_t[0]);
    for j in 1..cells {
        let dj = at_t[j].sub(&at_t[j - 1]);
        out = out.add(&star_neurons(&mut plan, &betas[j - 1], &dj, lambda));
    }
    b.push(plan)?;
    b.finish(&[out])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emulator::build_emulator;
    use crate::flux::Flux;
    use crate::init::KlInit;

    #[test]
    fn reproduces_grid_values() {
        let cfg = EmulatorConfig::kl(0.0, 1.0, 0.1, 4, Flux::Burgers, KlInit::sine(1));
        let net = build_spacetime_net(&cfg).unwrap();
        assert_eq!(net.depth(), 4 + 3);
        let em = build_emulator(&cfg).unwrap();
        let disc = cfg.discretization().unwrap();
        let y = 0.6;
        let un = em.eval(&[y]).unwrap();
        for (j, &xj) in disc.centers(0.0).iter().enumerate() {
            let v = net.eval(&[0.1, xj, y]).unwrap()[0];
            assert!((v - un[j]).abs() < 1e-12, "{j}: {v} vs {}", un[j]);
            let v0 = net.eval(&[0.0, xj, y]).unwrap()[0];
            let u0 = KlInit::sine(1).value(xj, &[y]).unwrap();
            assert!((v0 - u0).abs() < 1e-12);
        }
    }
}
