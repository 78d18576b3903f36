//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relu_scl::blocks::{flux_interp, lip_seminorm, mult_net, star};
use relu_scl::bounds::{
    complexity_report, expressivity_bound, flux_interp_bound, gen_gap_bound, mult_bound, A3Constants,
    ExpressivityConstants, GapForm, SizeInputs, Variant,
};
use relu_scl::emulator::{
    build_emulator, build_emulator_parametric_flux, build_multid_emulator, build_spacetime_net, flux_hat,
    parametric_plan, EmulatorConfig, KlInitNd, MultidConfig, ParametricFluxConfig, StoreMode,
};
use relu_scl::flux::{Flux, FluxFn};
use relu_scl::fv::{
    fit_rate, kuznetsov_study, l1_distance, lxf_steps, muscl_solve, splitting_steps_2d, Boundary, Grid2, GridState,
    NumericalFlux,
};
use relu_scl::init::{KlInit, Profile};
use relu_scl::kl::{check_b4, exp_cov_modes};
use relu_scl::train::{experiment_dimension_sweep, experiment_m_sweep, ExperimentOptions, Problem};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn sci(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", items.join(", "))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn loop_lxf(cfg: &EmulatorConfig, init: &KlInit, y: &[f64], steps: usize) -> Vec<f64> {
    let disc = cfg.discretization().unwrap();
    let fi = flux_hat(cfg).unwrap();
    let u0: Vec<f64> = disc.centers(cfg.a).iter().map(|&x| init.value(x, y).unwrap()).collect();
    lxf_steps(&|u| fi.eval(u), &u0, disc.ratio(), steps, cfg.boundary).unwrap()
}

fn c1_emulator_equivalence() -> Outcome {
    let start = Instant::now();
    let init = KlInit::sine(3);
    let cfg = EmulatorConfig::kl(0.0, 1.0, 0.1, 16, Flux::Burgers, init.clone());
    let em = build_emulator(&cfg).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let y: Vec<f64> = (0..3).map(|_| rng.random()).collect();
        let got = em.eval(&y).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(&got, &loop_lxf(&cfg, &init, &y, 16)));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-9, format!("max diff {worst:.3e}"))?;
    ensure(secs < 10.0, format!("took {secs:.1} s"))?;
    Ok(format!("J={}, max diff {worst:.2e} over 100 draws, {secs:.2} s", em.header().j))
}

fn c2_flux_interpolation() -> Outcome {
    let f = |u: f64| 0.5 * u * u;
    let js = [4usize, 8, 16, 32];
    let mut errs = Vec::new();
    for &j in &js {
        let fi = flux_interp(&f, -2.0, 2.0, j).map_err(|e| e.to_string())?;
        for k in 0..=j {
            let x = -2.0 + 4.0 * k as f64 / j as f64;
            ensure((fi.eval(x) - f(x)).abs() <= 1e-12, format!("knot {x} of J={j} not interpolated"))?;
        }
        let err = lip_seminorm(|u| f(u) - fi.eval(u), -2.0, 2.0, 64 * 1024);
        let bound = flux_interp_bound(-2.0, 2.0, j, 1.0).map_err(|e| e.to_string())?;
        ensure((bound - 4.0 / j as f64).abs() < 1e-15, "bound formula")?;
        ensure(err <= bound, format!("J={j}: {err} > {bound}"))?;
        errs.push(err);
    }
    let ns: Vec<f64> = js.iter().map(|&j| j as f64).collect();
    let rate = fit_rate(&ns, &errs);
    ensure(rate >= 0.9, format!("rate {rate}"))?;
    Ok(format!("errors {errs:.4?}, rate {rate:.3}"))
}

fn c3_multiplication() -> Outcome {
    let mut worst = Vec::new();
    for m in 2..=8u32 {
        let net = mult_net(m, 1.0, 1.0).map_err(|e| e.to_string())?;
        let met = net.metrics();
        ensure(met.depth == m as usize + 1 && met.max_width == 8, format!("m={m}: metrics {met:?}"))?;
        let mut w: f64 = 0.0;
        for k in 0..=20 {
            let y = -1.0 + 0.1 * k as f64;
            let e = lip_seminorm(|x| net.eval(&[x, y]).unwrap()[0] - x * y, -1.0, 1.0, 4096);
            w = w.max(e);
        }
        let bound = mult_bound(m, 1.0, 1.0);
        ensure((bound - 0.5f64.powi(m as i32)).abs() < 1e-15, "bound formula")?;
        ensure(w <= bound, format!("m={m}: {w} > {bound}"))?;
        worst.push(w);
    }
    Ok(format!("Lipschitz errors {}", sci(&worst)))
}

fn c4_star_operator() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tol = 1e-12;
    for &lambda in &[1.0, 2.5] {
        for _ in 0..10_000 {
            let x: f64 = rng.random();
            let y = rng.random_range(-lambda..=lambda);
            let y2 = rng.random_range(-lambda..=lambda);
            for xb in [0.0, 1.0] {
                ensure((star(xb, y, lambda) - xb * y).abs() <= tol, "property 1")?;
            }
            let s = star(x, y, lambda);
            if y >= 0.0 {
                ensure(-tol <= s && s <= x * y + tol, format!("property 2 at ({x}, {y})"))?;
            } else {
                ensure(x * y - tol <= s && s <= tol, format!("property 3 at ({x}, {y})"))?;
            }
            let v = y + star(x, y2 - y, lambda);
            ensure(y.min(y2) - tol <= v && v <= y.max(y2) + tol, format!("property 5 at ({x}, {y}, {y2})"))?;
        }
    }
    let mut witness = None;
    for _ in 0..100_000 {
        let lambda = 1.0;
        let x: f64 = rng.random();
        let y1 = rng.random_range(-lambda..=lambda);
        let y2 = rng.random_range(-lambda..=lambda);
        let v = star(1.0 - x, y1, lambda) + star(x, y2, lambda);
        if v < y1.min(y2) - 1e-9 || v > y1.max(y2) + 1e-9 {
            witness = Some((x, y1, y2, v));
            break;
        }
    }
    let (x, y1, y2, v) = witness.ok_or("no counterexample to property 4 found")?;
    Ok(format!("properties 1,2,3,5 hold on 2x10^4 draws; property 4 witness x={x:.4}, y1={y1:.4}, y2={y2:.4} gives {v:.4}"))
}

fn c5_expressivity() -> Outcome {
    let start = Instant::now();
    let init = KlInit::sine(2);
    let (t, c0) = (0.1, 2.5);
    let fine = 4096;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ys: Vec<Vec<f64>> = (0..20).map(|_| (0..2).map(|_| rng.random()).collect()).collect();
    let refs: Vec<GridState> = ys
        .iter()
        .map(|y| {
            let g0 = GridState::from_centers(0.0, 1.0, fine, |x| init.value(x, y).unwrap()).unwrap();
            muscl_solve(&Flux::Burgers, NumericalFlux::Rusanov, &g0, t, 0.4, Boundary::Periodic).unwrap()
        })
        .collect();
    let ns = [16usize, 64, 256];
    let mut sups = Vec::new();
    let mut bounds = Vec::new();
    for &n in &ns {
        let mut cfg = EmulatorConfig::kl(0.0, 1.0, t, n, Flux::Burgers, init.clone());
        if n >= 256 {
            cfg.store_mode = StoreMode::SharedBlock;
        }
        let em = build_emulator(&cfg).map_err(|e| e.to_string())?;
        let disc = cfg.discretization().unwrap();
        let mut sup: f64 = 0.0;
        for (y, r) in ys.iter().zip(&refs) {
            let g = GridState {
                a: 0.0,
                b: 1.0,
                values: em.eval(y).unwrap(),
                t,
            };
            sup = sup.max(l1_distance(&g, r).map_err(|e| e.to_string())?);
        }
        let k = ExpressivityConstants {
            c_tv: Some(init.c_tv(&disc.centers(0.0), Boundary::Periodic)),
            t: Some(t),
            c0: Some(c0),
            f2sup: Some(1.0),
            f1sup: Some(c0),
            ..Default::default()
        };
        let bound = expressivity_bound(Variant::Kle, &k, n).map_err(|e| e.to_string())?;
        ensure(sup <= bound, format!("N={n}: error {sup} > bound {bound}"))?;
        sups.push(sup);
        bounds.push(bound);
    }
    let rate = fit_rate(&ns.map(|n| n as f64), &sups);
    let secs = start.elapsed().as_secs_f64();
    ensure(rate >= 0.5, format!("rate {rate}"))?;
    ensure(secs < 300.0, format!("took {secs:.0} s"))?;
    Ok(format!("sup L1 errors {} (bounds {}), rate {rate:.3}, {secs:.1} s", sci(&sups), sci(&bounds)))
}

fn c6_size_bounds() -> Outcome {
    let t = 0.1;
    let mut rows = Vec::new();
    for &d in &[1usize, 4, 8] {
        for &n in &[4usize, 8, 16] {
            let init = KlInit::sine(d);
            let cfg = EmulatorConfig::kl(0.0, 1.0, t, n, Flux::Burgers, init.clone());
            let em = build_emulator(&cfg).map_err(|e| e.to_string())?;
            let met = em.metrics();
            let c0 = cfg.c0;
            let xs = cfg.discretization().unwrap().centers(0.0);
            let size = SizeInputs {
                b_minus_a: 1.0,
                t,
                f1sup: Flux::Burgers.sup_df(-c0, c0).0,
                c0,
                f_at_minus_c0: Flux::Burgers.f(-c0),
                f_at_c0: Flux::Burgers.f(c0),
            };
            let a3 = A3Constants {
                c_b: init.magnitude_on(&xs),
                c_l: 0.0,
                sigma_l: 0.0,
                eta_l: 0.0,
                c_w: 0.0,
                sigma_w: 0.0,
                eta_w: 0.0,
                sigma_m: 0.0,
                eta_m: 0.0,
            };
            let rep = complexity_report(Variant::Kle, d, n, &size, Some(&a3)).map_err(|e| e.to_string())?;
            let depth_b = rep.depth.value.unwrap();
            let width_b = rep.width.value.unwrap();
            let mag_b = rep.magnitude.value.unwrap();
            ensure(depth_b == (n + 1) as f64, "depth bound formula")?;
            let width_formula = (1.0 + d as f64).max(2.0 * (n as f64).powf(1.5) / (t * size.f1sup));
            ensure((width_b - width_formula).abs() <= 1e-12 * width_formula, "width bound formula")?;
            ensure(met.depth as f64 <= depth_b, format!("d={d} N={n}: depth {} > {depth_b}", met.depth))?;
            ensure(met.max_width as f64 <= width_b, format!("d={d} N={n}: width {} > {width_b}", met.max_width))?;
            ensure(
                met.weight_magnitude <= mag_b,
                format!("d={d} N={n}: magnitude {} > {mag_b}", met.weight_magnitude),
            )?;
            rows.push(format!("(d={d},N={n}: L={} W={}/{width_b:.0} B={:.2}/{mag_b:.2})", met.depth, met.max_width, met.weight_magnitude));
        }
    }
    Ok(rows.join(" "))
}

fn c7_kuznetsov() -> Outcome {
    let u0 = GridState::from_centers(0.0, 1.0, 8192, |x| 1.0 + (2.0 * PI * x).sin()).unwrap();
    let ns = [32usize, 64, 128, 256, 512];
    let rep = kuznetsov_study(&Flux::Burgers, &u0, 0.25, &ns, Boundary::Periodic).map_err(|e| e.to_string())?;
    for r in &rep.rows {
        ensure(r.within, format!("N={}: {} > {}", r.n, r.error, r.bound))?;
    }
    ensure((0.5..=1.05).contains(&rep.rate), format!("rate {}", rep.rate))?;
    let errs: Vec<f64> = rep.rows.iter().map(|r| r.error).collect();
    Ok(format!("errors {}, rate {:.3}", sci(&errs), rep.rate))
}

struct TrainingOutcome {
    c8: Outcome,
    c9: Outcome,
}

fn c8_c9_training() -> TrainingOutcome {
    let start = Instant::now();
    let hand = 12.0 * 2.0 * 1.0 * 4.0 / 500f64.sqrt() * 21.0 * 21.0 * (2.0f64 * 500.0 * 10.0).ln().sqrt();
    let value = gen_gap_bound(2.0, 1.0, 4, 20, 500, 10.0, GapForm::Simplified).unwrap();
    let bound_ok = ((value - hand) / hand).abs() <= 1e-12 && (value - 5745.960820160763).abs() < 1e-6;

    let opts = ExperimentOptions::desk(Problem::FixedFlux);
    let dims = [1usize, 2, 4, 8];
    let sweep = experiment_dimension_sweep(&opts, &dims, 200, 5);
    let msweep = experiment_m_sweep(&opts, 8, &[25, 50, 100, 200], 5);
    let secs = start.elapsed().as_secs_f64();
    let (sweep, msweep) = match (sweep, msweep) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            return TrainingOutcome {
                c8: Err(format!("training failed: {e}")),
                c9: Err(format!("training failed: {e}")),
            }
        }
    };

    let runs: Vec<_> = sweep.runs.iter().chain(&msweep.runs).collect();
    let undominated = runs.iter().filter(|r| !r.dominated).count();
    let max_ratio = runs.iter().map(|r| r.gap.max(r.clipped_gap) / r.gap_bound).fold(0.0, f64::max);
    let c8 = if !bound_ok {
        Err(format!("bound value {value} vs hand computation {hand}"))
    } else if undominated > 0 {
        Err(format!("{undominated} runs exceed their gap bound"))
    } else {
        Ok(format!(
            "bound(2,1,4,20,500,10) = {value:.6}; all {} runs dominated (largest gap/bound {max_ratio:.2e})",
            runs.len()
        ))
    };

    let tests: Vec<f64> = sweep.rows.iter().map(|r| r.test_mean).collect();
    let slope = -fit_rate(&dims.map(|d| d as f64), &tests);
    let gap25 = msweep.rows[0].gap_mean;
    let gap200 = msweep.rows[3].gap_mean;
    let c9 = if tests.iter().any(|v| !v.is_finite()) {
        Err(format!("non-finite test error {tests:?}"))
    } else if !(slope < 4.0) {
        Err(format!("log-log slope {slope}"))
    } else if !(gap200 < gap25) {
        Err(format!("gap at M=200 ({gap200}) not below M=25 ({gap25})"))
    } else if secs > 1800.0 {
        Err(format!("took {secs:.0} s"))
    } else {
        Ok(format!(
            "test means {tests:.3?}, slope {slope:.3}; gap M=25 {gap25:.3} -> M=200 {gap200:.3}; {secs:.0} s"
        ))
    };
    TrainingOutcome { c8, c9 }
}

fn c10_kl_flux() -> Outcome {
    let modes = exp_cov_modes(1.0, 3.0, (0.0, 2.0), 10, 512).map_err(|e| e.to_string())?;
    let idx: Vec<f64> = (1..=10).map(|i| i as f64).collect();
    let exponent = -fit_rate(&idx, &modes.lambdas);
    ensure((-3.0..=-2.0).contains(&exponent), format!("eigenvalue exponent {exponent}"))?;
    for s in 1..=8 {
        let r = check_b4(&modes.truncated(s), &Flux::Burgers, 2.0, 20.0, 0.0);
        ensure(r.pass, format!("(B4) fails for s={s}: minimal C_f {:?}", r.minimal_c_f))?;
    }
    let mut base = EmulatorConfig::kl(0.0, 1.0, 0.1, 9, Flux::Burgers, KlInit::sine(1));
    base.c0 = 2.0;
    let cfg = ParametricFluxConfig {
        base,
        modes: exp_cov_modes(1.0, 3.0, (0.0, 2.0), 2, 256).map_err(|e| e.to_string())?,
        c_f: 20.0,
        sigma_f: 0.0,
    };
    let plan = parametric_plan(&cfg).map_err(|e| e.to_string())?;
    let em = build_emulator_parametric_flux(&cfg).map_err(|e| e.to_string())?;
    let mut fixed = cfg.base.clone();
    fixed.flux_interval = Some((0.0, 2.0));
    fixed.k_segments = Some(plan.k1);
    fixed.speed = Some(plan.disc.speed);
    fixed.cells = Some(plan.disc.cells);
    let fe = build_emulator(&fixed).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for k in 0..=10 {
        let y = k as f64 / 10.0;
        worst = worst.max(max_abs_diff(&em.eval(&[y, 0.0, 0.0]).unwrap(), &fe.eval(&[y]).unwrap()));
    }
    ensure(worst <= 1e-9, format!("z=0 differs by {worst}"))?;
    Ok(format!("eigenvalue exponent {exponent:.3}; (B4) passes for s<=8 with C_f=20; z=0 diff {worst:.1e}"))
}

fn c11_splitting() -> Outcome {
    let s = Profile::Sin { freq: 2.0 * PI };
    let one = Profile::Const { value: 1.0 };
    let init = KlInitNd {
        mean: 1.0,
        modes: vec![(0.25, vec![s.clone(), one.clone()]), (0.25, vec![one.clone(), s.clone()])],
    };
    let cfg = MultidConfig::new(0.0, 1.0, 0.0625, 8, vec![Flux::Burgers, Flux::Burgers], init.clone());
    let disc = cfg.discretization().map_err(|e| e.to_string())?;
    ensure(disc.cells == 32, format!("grid {}", disc.cells))?;
    let em = build_multid_emulator(&cfg).map_err(|e| e.to_string())?;
    let fi = flux_interp(&|u| 0.5 * u * u, -cfg.c0, cfg.c0, disc.k_segments).unwrap();
    let f = |u: f64| fi.eval(u);
    let r = disc.ratio();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let y = [rng.random::<f64>(), rng.random::<f64>()];
        let g0 = Grid2::from_centers(0.0, 1.0, 32, 32, |a, b| init.value(&[a, b], &y).unwrap());
        let expect = splitting_steps_2d([&f, &f], &g0, [r, r], 8, [0, 1], Boundary::Periodic).unwrap();
        worst = worst.max(max_abs_diff(&em.eval(&y).unwrap(), &expect.values));
    }
    ensure(worst <= 1e-9, format!("2-d diff {worst}"))?;

    // f₂ ≡ 0 with data constant along the second axis
    let init1 = KlInitNd {
        mean: 1.0,
        modes: vec![(0.25, vec![s.clone(), one])],
    };
    let cfg2 = MultidConfig::new(0.0, 1.0, 0.0625, 8, vec![Flux::Burgers, Flux::Zero], init1);
    let d2 = cfg2.discretization().unwrap();
    let em2 = build_multid_emulator(&cfg2).map_err(|e| e.to_string())?;
    let mut one_d = EmulatorConfig::kl(
        0.0,
        1.0,
        0.0625,
        8,
        Flux::Burgers,
        KlInit {
            mean: Profile::Const { value: 1.0 },
            modes: vec![(0.25, s)],
        },
    );
    one_d.cells = Some(d2.cells);
    one_d.speed = Some(d2.speed);
    one_d.k_segments = Some(d2.k_segments);
    let em1 = build_emulator(&one_d).map_err(|e| e.to_string())?;
    let j = d2.cells;
    let mut worst_row: f64 = 0.0;
    for y in [0.0, 0.35, 1.0] {
        let u2 = em2.eval(&[y]).unwrap();
        let u1 = em1.eval(&[y]).unwrap();
        for i0 in 0..j {
            for i1 in 0..j {
                worst_row = worst_row.max((u2[i0 * j + i1] - u1[i0]).abs());
            }
        }
    }
    ensure(worst_row <= 1e-9, format!("degenerate case differs by {worst_row}"))?;
    Ok(format!("32x32, N=8: diff {worst:.1e}; f2=0 rows vs 1-d emulator {worst_row:.1e}"))
}

fn c12_spacetime() -> Outcome {
    let init = KlInit::sine(2);
    let (t_final, n) = (0.1, 8);
    let cfg = EmulatorConfig::kl(0.0, 1.0, t_final, n, Flux::Burgers, init.clone());
    let net = build_spacetime_net(&cfg).map_err(|e| e.to_string())?;
    let em = build_emulator(&cfg).map_err(|e| e.to_string())?;
    let disc = cfg.discretization().unwrap();
    let xs = disc.centers(0.0);
    let j = disc.cells;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut grid_err: f64 = 0.0;
    let mut samples = 0;
    for _ in 0..10 {
        let y = [rng.random::<f64>(), rng.random::<f64>()];
        let un = em.eval(&y).unwrap();
        for (k, &x) in xs.iter().enumerate() {
            grid_err = grid_err.max((net.eval(&[t_final, x, y[0], y[1]]).unwrap()[0] - un[k]).abs());
        }
        let levels: Vec<Vec<f64>> = (0..=n).map(|s| loop_lxf(&cfg, &init, &y, s)).collect();
        for _ in 0..200 {
            let t = rng.random_range(0.0..=t_final);
            let x = rng.random_range(0.0..=1.0);
            let v = net.eval(&[t, x, y[0], y[1]]).unwrap()[0];
            let step = ((t / disc.dt).ceil() as usize).clamp(1, n);
            let right = xs.iter().position(|&c| c >= x).unwrap_or(j - 1);
            let left = right.saturating_sub(1);
            let corners = [
                levels[step - 1][left],
                levels[step - 1][right],
                levels[step][left],
                levels[step][right],
            ];
            let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            ensure(
                v >= lo - 1e-9 && v <= hi + 1e-9,
                format!("(t={t}, x={x}): {v} outside [{lo}, {hi}]"),
            )?;
            samples += 1;
        }
    }
    ensure(grid_err <= 1e-12, format!("grid mismatch {grid_err}"))?;
    Ok(format!("depth {}, grid diff {grid_err:.1e}, {samples} interior samples bracketed", net.depth()))
}

fn report(failed: &mut usize, k: usize, name: &str, r: Outcome) {
    match r {
        Ok(msg) => println!("criterion {k:>2} PASS  {name}: {msg}"),
        Err(msg) => {
            *failed += 1;
            println!("criterion {k:>2} FAIL  {name}: {msg}");
        }
    }
}

fn main() {
    let mut failed = 0;
    let f = &mut failed;
    report(f, 1, "emulator vs loop Lax-Friedrichs", c1_emulator_equivalence());
    report(f, 2, "flux interpolant Lipschitz error", c2_flux_interpolation());
    report(f, 3, "multiplication network", c3_multiplication());
    report(f, 4, "star operator", c4_star_operator());
    report(f, 5, "expressivity convergence", c5_expressivity());
    report(f, 6, "network size bounds", c6_size_bounds());
    report(f, 7, "Kuznetsov rate", c7_kuznetsov());
    let training = c8_c9_training();
    report(f, 8, "generalization gap bound", training.c8);
    report(f, 9, "training experiments", training.c9);
    report(f, 10, "random flux expansion", c10_kl_flux());
    report(f, 11, "two-dimensional splitting", c11_splitting());
    report(f, 12, "space-time network", c12_spacetime());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
