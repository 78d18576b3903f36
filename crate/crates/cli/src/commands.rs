use std::collections::BTreeMap;

use relu_scl::bounds::{
    complexity_report, expressivity_bound, expressivity_report, flux_interp_bound, gen_gap_report, kuznetsov_bound, mult_bound,
    recompute, A3Constants, BoundReport, ExpressivityConstants, GapForm, Provenance, SizeInputs, Variant,
};
use relu_scl::emulator::{build_emulator, build_emulator_parametric_flux, flux_hat, parametric_plan, EmulatorConfig, ParametricFluxConfig, StoreMode};
use relu_scl::flux::{Flux, FluxFn};
use relu_scl::fv::{fit_rate, l1_distance, lxf_solve, lxf_step, muscl_solve, tv, Boundary, GridState, NumericalFlux};
use relu_scl::init::KlInit;
use relu_scl::kl::{check_b4, exp_cov_modes, sample_params, KlModes};
use relu_scl::nn::{json, NetMetrics, ReluNet};
use relu_scl::train::{
    arch_search, experiment_dimension_sweep, experiment_m_sweep, make_dataset, run_seed, train_run_full, write_report_csv,
    ExperimentOptions, ReportRow, RunResult, SolverSettings,
};

use crate::run::{first_failure, num, write_checks, CheckRow, CliError, CliResult, Run};

type EvalFn = Box<dyn Fn(&[f64]) -> relu_scl::Result<Vec<f64>>>;

fn init(run: &Run) -> CliResult<KlInit> {
    let raw = run.cfg.raw("init");
    if raw == "sine" {
        return Ok(KlInit::sine(run.cfg.get("d")?));
    }
    raw.strip_prefix("constant:")
        .and_then(|v| v.trim().parse().ok())
        .map(KlInit::constant)
        .ok_or_else(|| CliError::Usage(format!("init = '{raw}': expected sine or constant:<value>")))
}

fn emulator_config(run: &Run) -> CliResult<EmulatorConfig> {
    let c = &run.cfg;
    let mut e = EmulatorConfig::kl(c.get("a")?, c.get("b")?, c.get("T")?, c.get("N")?, c.get("flux")?, init(run)?);
    if let Some(c0) = c.opt("c0")? {
        e.c0 = c0;
    }
    e.boundary = c.get("boundary")?;
    e.k_segments = c.opt("K")?;
    e.store_mode = c.get("store_mode")?;
    Ok(e)
}

fn flux_modes(run: &Run) -> CliResult<KlModes> {
    let c = &run.cfg;
    Ok(exp_cov_modes(
        c.get("pflux.sigma")?,
        c.get("pflux.eta")?,
        c.pair("pflux.support")?,
        c.get("pflux.s")?,
        c.get("pflux.quadrature")?,
    )?)
}

fn parametric_config(run: &Run) -> CliResult<ParametricFluxConfig> {
    Ok(ParametricFluxConfig {
        base: emulator_config(run)?,
        modes: flux_modes(run)?,
        c_f: run.cfg.get("pflux.c_f")?,
        sigma_f: run.cfg.get("pflux.sigma_f")?,
    })
}

fn is_parametric(run: &Run) -> CliResult<bool> {
    match run.cfg.raw("emulator") {
        "lxf" => Ok(false),
        "parametric_flux" => Ok(true),
        o => Err(CliError::Usage(format!("emulator = '{o}': expected lxf or parametric_flux"))),
    }
}

fn size_bounds(cfg: &EmulatorConfig, init: &KlInit) -> CliResult<[(&'static str, String, Option<f64>); 4]> {
    let disc = cfg.discretization()?;
    let c0 = cfg.c0;
    let size = SizeInputs {
        b_minus_a: cfg.b - cfg.a,
        t: cfg.t_final,
        f1sup: cfg.flux.sup_df(-c0, c0).0,
        c0,
        f_at_minus_c0: cfg.flux.f(-c0),
        f_at_c0: cfg.flux.f(c0),
    };
    let a3 = A3Constants {
        c_b: init.magnitude_on(&disc.centers(cfg.a)),
        ..Default::default()
    };
    let r = complexity_report(Variant::Kle, init.dim(), cfg.n_steps, &size, Some(&a3))?;
    Ok([
        ("connectivity", r.connectivity.formula, r.connectivity.value),
        ("depth", r.depth.formula, r.depth.value),
        ("width", r.width.formula, r.width.value),
        ("magnitude", r.magnitude.formula, r.magnitude.value),
    ])
}

fn metric_values(m: &NetMetrics) -> [f64; 4] {
    [m.connectivity as f64, m.depth as f64, m.max_width as f64, m.weight_magnitude]
}

pub fn build(run: &mut Run) -> CliResult<()> {
    if run.dry_run {
        println!("would build emulator = {}", run.cfg.raw("emulator"));
        return Ok(());
    }
    let (em, bounds) = if is_parametric(run)? {
        let pcfg = parametric_config(run)?;
        let plan = parametric_plan(&pcfg)?;
        run.write("plan.json", &(serde_json::to_string_pretty(&plan)? + "\n"))?;
        let em = build_emulator_parametric_flux(&pcfg)?;
        let none = |q| (q, "measured only".to_string(), None);
        (em, [none("connectivity"), none("depth"), none("width"), none("magnitude")])
    } else {
        let cfg = emulator_config(run)?;
        let init = init(run)?;
        (build_emulator(&cfg)?, size_bounds(&cfg, &init)?)
    };
    run.write("emulator.json", &em.to_json()?)?;
    let h = em.header();
    println!("emulator: N = {}, J = {}, K = {}, dt = {:.6e}, dx = {:.6e}, inputs = {}", h.n, h.j, h.k, h.dt, h.dx, em.input_dim());
    let measured = metric_values(&em.metrics());
    let mut w = csv::Writer::from_path(run.artifact("metrics.csv")).map_err(|e| CliError::Failed(e.to_string()))?;
    let csv_err = |e: csv::Error| CliError::Failed(e.to_string());
    w.write_record(["quantity", "measured", "bound", "within", "formula"]).map_err(csv_err)?;
    let mut rows = Vec::new();
    for ((q, formula, bound), m) in bounds.into_iter().zip(measured) {
        let within = bound.map(|b| m <= b);
        let shown = within.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into());
        println!("{q:<14} {:>18} {:>18}  {shown:<5}  {formula}", num(m), bound.map(num).unwrap_or_default());
        w.write_record([q.to_string(), num(m), bound.map(num).unwrap_or_default(), shown, formula])
            .map_err(csv_err)?;
        if let (Some(b), Some(false)) = (bound, within) {
            rows.push(CheckRow::at_most(q, m, b));
        }
    }
    w.flush()?;
    first_failure(&rows)
}

/// `steps` Lax-Friedrichs steps recording the per-step sup norm, total
/// variation and sum.
struct Trajectory {
    last: Vec<f64>,
    sup: Vec<f64>,
    tv: Vec<f64>,
    sum: Vec<f64>,
}

fn trajectory(f: &dyn Fn(f64) -> f64, u0: Vec<f64>, ratio: f64, steps: usize, boundary: Boundary) -> Trajectory {
    let stats = |u: &[f64]| (u.iter().fold(0.0, |m: f64, v| m.max(v.abs())), tv(u, boundary), u.iter().sum::<f64>());
    let (s, t, m) = stats(&u0);
    let mut tr = Trajectory {
        last: u0,
        sup: vec![s],
        tv: vec![t],
        sum: vec![m],
    };
    let mut next = vec![0.0; tr.last.len()];
    for _ in 0..steps {
        lxf_step(f, &tr.last, ratio, boundary, &mut next);
        std::mem::swap(&mut tr.last, &mut next);
        let (s, t, m) = stats(&tr.last);
        tr.sup.push(s);
        tr.tv.push(t);
        tr.sum.push(m);
    }
    tr
}

fn load_network(path: &str) -> Result<ReluNet, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}"))?;
    json::from_json(&text).map(|(net, _)| net).map_err(|e| e.to_string())
}

fn expressivity_constants(cfg: &EmulatorConfig, init: &KlInit) -> CliResult<ExpressivityConstants> {
    let disc = cfg.discretization()?;
    let (lo, hi) = cfg.interval();
    Ok(ExpressivityConstants {
        c_tv: Some(init.c_tv(&disc.centers(cfg.a), cfg.boundary)),
        t: Some(cfg.t_final),
        c0: Some(cfg.c0),
        f2sup: Some(cfg.flux.sup_d2f(lo, hi).0),
        f1sup: Some(cfg.flux.sup_df(lo, hi).0),
        ..Default::default()
    })
}

pub fn verify(run: &mut Run) -> CliResult<()> {
    if is_parametric(run)? {
        return Err(CliError::Usage("verify supports emulator = lxf".into()));
    }
    let cfg = emulator_config(run)?;
    let init = init(run)?;
    let c = &run.cfg;
    let samples: usize = c.get("verify.samples")?;
    let tol: f64 = c.get("verify.tol")?;
    let n_list: Vec<usize> = c.list("verify.n_list")?;
    let ref_cells: usize = c.get("verify.ref_cells")?;
    let ref_samples: usize = c.get("verify.ref_samples")?;
    let network: Option<String> = c.opt("network")?;
    let seed = run.seed()?;
    if run.dry_run {
        println!("would verify N = {} with {samples} samples and the sweep {n_list:?}", cfg.n_steps);
        return Ok(());
    }
    run.record_seed("verify.equivalence", seed);

    let disc = cfg.discretization()?;
    let fh = flux_hat(&cfg)?;
    let f = |u: f64| fh.eval(u);
    let xs = disc.centers(cfg.a);
    let net: Result<EvalFn, String> = match &network {
        Some(p) => load_network(p).map(|n| Box::new(move |y: &[f64]| n.eval(y)) as Box<dyn Fn(&[f64]) -> _>),
        None => build_emulator(&cfg)
            .map(|e| Box::new(move |y: &[f64]| e.eval(y)) as Box<dyn Fn(&[f64]) -> _>)
            .map_err(|e| e.to_string()),
    };
    if let Err(e) = &net {
        log::error!("network unavailable: {e}");
    }
    let (mut equiv, mut max_excess, mut tv_increase, mut drift) = (0.0f64, f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0f64);
    for y in sample_params(init.dim(), samples, seed) {
        let u0 = xs.iter().map(|&x| init.value(x, &y)).collect::<relu_scl::Result<Vec<f64>>>()?;
        let tr = trajectory(&f, u0, disc.ratio(), cfg.n_steps, cfg.boundary);
        let out = net.as_ref().ok().and_then(|n| n(&y).ok());
        equiv = match out {
            Some(v) if v.len() == tr.last.len() => v.iter().zip(&tr.last).fold(equiv, |m, (a, b)| m.max((a - b).abs())),
            _ => f64::INFINITY,
        };
        max_excess = tr.sup.iter().fold(max_excess, |m, s| m.max(s - tr.sup[0]));
        tv_increase = tr.tv.windows(2).fold(tv_increase, |m, w| m.max(w[1] - w[0]));
        let scale = tr.last.len() as f64 * tr.sup[0].max(f64::MIN_POSITIVE);
        drift = tr.sum.iter().fold(drift, |m, s| m.max((s - tr.sum[0]).abs() / scale));
    }
    let mut rows = vec![
        CheckRow::at_most("equivalence", equiv, tol),
        CheckRow::at_most("max_principle", max_excess, 1e-12 * (1.0 + cfg.c0)),
        CheckRow::at_most("tvd", tv_increase, 1e-12 * (1.0 + cfg.c0)),
    ];
    if cfg.boundary == Boundary::Periodic {
        rows.push(CheckRow::at_most("conservation", drift, 1e-10));
    }

    if !n_list.is_empty() {
        let sweep_seed = seed.wrapping_add(1);
        run.record_seed("verify.convergence", sweep_seed);
        let ys = sample_params(init.dim(), ref_samples, sweep_seed);
        let refs = ys
            .iter()
            .map(|y| {
                let g0 = GridState::from_centers(cfg.a, cfg.b, ref_cells, |x| init.value(x, y).unwrap_or(f64::NAN))?;
                muscl_solve(&cfg.flux, NumericalFlux::Rusanov, &g0, cfg.t_final, 0.4, cfg.boundary)
            })
            .collect::<relu_scl::Result<Vec<_>>>()?;
        let mut errs = Vec::new();
        for &n in &n_list {
            let mut cn = cfg.clone();
            cn.n_steps = n;
            cn.store_mode = StoreMode::SharedBlock;
            let em = build_emulator(&cn)?;
            let mut sup: f64 = 0.0;
            for (y, r) in ys.iter().zip(&refs) {
                let g = GridState::new(cfg.a, cfg.b, em.eval(y)?)?;
                sup = sup.max(l1_distance(&g, r)?);
            }
            let bound = expressivity_bound(Variant::Kle, &expressivity_constants(&cn, &init)?, n)?;
            rows.push(CheckRow::at_most(format!("convergence_N{n}"), sup, bound));
            errs.push(sup);
        }
        if errs.len() >= 2 {
            let worst_ratio = errs.windows(2).map(|w| w[1] / w[0]).fold(f64::NEG_INFINITY, f64::max);
            rows.push(CheckRow::at_most("error_decreasing", worst_ratio, 1.0));
            let ns: Vec<f64> = n_list.iter().map(|&n| n as f64).collect();
            rows.push(CheckRow::at_least("convergence_rate", fit_rate(&ns, &errs), 0.5));
        }
    }
    write_checks(run, "verify.csv", &rows)?;
    if let (Err(e), Some(_)) = (&net, &network) {
        return Err(CliError::Check(format!("equivalence: {e}")));
    }
    first_failure(&rows)
}

fn bound_reports(run: &Run) -> CliResult<Vec<BoundReport>> {
    let c = &run.cfg;
    let cfg = emulator_config(run)?;
    let init = init(run)?;
    let disc = cfg.discretization()?;
    let (lo, hi) = cfg.interval();
    let (f2, f2p) = cfg.flux.sup_d2f(lo, hi);
    let j: usize = c.get("bounds.J")?;
    let mut out = vec![BoundReport::new("flux_interp", flux_interp_bound(lo, hi, j, f2)?, "(b-a) |f''| / J")
        .with("a", lo, Provenance::User)
        .with("b", hi, Provenance::User)
        .with("J", j as f64, Provenance::User)
        .with("|f''|", f2, f2p)];

    let (m, big_m, big_n): (u32, f64, f64) = (c.get("bounds.m")?, c.get("bounds.mult_M")?, c.get("bounds.mult_N")?);
    out.push(
        BoundReport::new("mult", mult_bound(m, big_m, big_n), "(M+N) / 2^{m+1}")
            .with("m", m as f64, Provenance::User)
            .with("M", big_m, Provenance::User)
            .with("N", big_n, Provenance::User),
    );

    let c_tv = init.c_tv(&disc.centers(cfg.a), cfg.boundary);
    out.push(
        BoundReport::new("kuznetsov", kuznetsov_bound(c_tv, cfg.t_final, disc.speed, cfg.n_steps)?, "31 TV T (1+F)^2 / sqrt(N)")
            .with("TV", c_tv, Provenance::Swept)
            .with("T", cfg.t_final, Provenance::User)
            .with("F", disc.speed, disc.speed_provenance)
            .with("N", cfg.n_steps as f64, Provenance::User),
    );

    let mut prov = BTreeMap::new();
    prov.insert("C_TV".to_string(), Provenance::Swept);
    prov.insert("C0".to_string(), Provenance::ClosedForm);
    prov.insert("|f''|".to_string(), f2p);
    prov.insert("|f'|".to_string(), cfg.flux.sup_df(lo, hi).1);
    if is_parametric(run)? {
        let pcfg = parametric_config(run)?;
        let plan = parametric_plan(&pcfg)?;
        let mut k = expressivity_constants(&cfg, &init)?;
        k.c_f = Some(pcfg.c_f);
        k.sigma_f = Some(pcfg.sigma_f);
        k.s = Some(pcfg.modes.dim());
        k.f2sup = Some(cfg.flux.sup_d2f(plan.disc.flux_lo, plan.disc.flux_hi).0);
        out.push(expressivity_report(Variant::ParametricFlux, &k, cfg.n_steps, &prov)?);
    } else {
        out.push(expressivity_report(Variant::Kle, &expressivity_constants(&cfg, &init)?, cfg.n_steps, &prov)?);
    }

    let dim: usize = c.get("train.dim")?;
    let width: usize = c.get("train.width")?;
    let depth: u32 = c.get("train.depth")?;
    let samples: usize = c.get("train.M")?;
    let (r, range): (f64, f64) = (c.get("bounds.R")?, c.get("bounds.range")?);
    let solver = SolverSettings::default();
    for form in [GapForm::Simplified, GapForm::Sharp] {
        out.push(gen_gap_report(range, solver.b - solver.a, depth, dim.max(width) as u32, samples, r, form)?);
    }
    Ok(out)
}

pub fn bounds(run: &mut Run) -> CliResult<()> {
    if run.dry_run {
        println!("would evaluate flux_interp, mult, kuznetsov, expressivity and gen_gap bounds");
        return Ok(());
    }
    let reports = bound_reports(run)?;
    let text = serde_json::to_string_pretty(&reports)? + "\n";
    run.write("bounds.json", &text)?;
    let table: String = reports.iter().map(|r| format!("{r}\n")).collect();
    print!("{table}");
    run.write("bounds.txt", &table)?;
    let back: Vec<BoundReport> = serde_json::from_str(&text)?;
    let mut rows = Vec::new();
    for (r, b) in reports.iter().zip(&back) {
        let again = recompute(b)?;
        rows.push(CheckRow::at_most(format!("roundtrip_{}", r.name), (again - r.value).abs(), 0.0));
    }
    first_failure(&rows)
}

pub fn fv_solve(run: &mut Run) -> CliResult<()> {
    let cfg = emulator_config(run)?;
    let init = init(run)?;
    let c = &run.cfg;
    let y: Vec<f64> = match c.opt::<String>("fv.y")? {
        None => vec![0.5; init.dim()],
        Some(_) => c.list("fv.y")?,
    };
    if y.len() != init.dim() {
        return Err(CliError::Usage(format!("fv.y has {} values, the initial data takes {}", y.len(), init.dim())));
    }
    let cells: usize = c.get("fv.cells")?;
    let cfl: f64 = c.get("fv.cfl")?;
    let scheme = c.raw("fv.scheme").to_string();
    let nf: NumericalFlux = c.get("fv.numerical_flux")?;
    if run.dry_run {
        println!("would solve with {scheme} on {cells} cells to T = {}", cfg.t_final);
        return Ok(());
    }
    let g0 = GridState::from_centers(cfg.a, cfg.b, cells, |x| init.value(x, &y).unwrap_or(f64::NAN))?;
    let sol = match scheme.as_str() {
        "lxf" => lxf_solve(&cfg.flux, &g0, cfg.t_final, cfl, cfg.boundary)?,
        "muscl" => muscl_solve(&cfg.flux, nf, &g0, cfg.t_final, cfl, cfg.boundary)?,
        o => return Err(CliError::Usage(format!("fv.scheme = '{o}': expected lxf or muscl"))),
    };
    g0.write_csv(&run.artifact("initial.csv"))?;
    sol.write_csv(&run.artifact("solution.csv"))?;
    let (lo, hi) = sol.min_max();
    println!("{scheme}: {cells} cells, T = {}, range [{lo:.6}, {hi:.6}], TV {:.6}", cfg.t_final, tv(&sol.values, cfg.boundary));
    Ok(())
}

pub fn kl_modes(run: &mut Run) -> CliResult<()> {
    let c = &run.cfg;
    let flux: Flux = c.get("flux")?;
    let (lo, hi) = c.pair("pflux.support")?;
    let c0 = c.opt("c0")?.unwrap_or(lo.abs().max(hi.abs()));
    let (c_f, sigma_f): (f64, f64) = (c.get("pflux.c_f")?, c.get("pflux.sigma_f")?);
    if run.dry_run {
        println!("would compute {} modes on [{lo}, {hi}]", c.raw("pflux.s"));
        return Ok(());
    }
    let modes = flux_modes(run)?;
    modes.write_csv(&run.artifact("modes.csv"))?;
    let b4 = check_b4(&modes, &flux, c0, c_f, sigma_f);
    run.write("b4.json", &(serde_json::to_string_pretty(&b4)? + "\n"))?;
    for (i, l) in modes.lambdas.iter().enumerate() {
        println!("lambda_{:<3} {l:.10e}", i + 1);
    }
    println!("speed sup {:.6}, mode term {:.6}, proposed C_f {c_f} sigma_f {sigma_f}: {}", b4.speed_sup, b4.mode_term, if b4.pass { "pass" } else { "FAIL" });
    if b4.pass {
        Ok(())
    } else {
        Err(CliError::Check(format!("decay condition fails for C_f = {c_f}, sigma_f = {sigma_f}; minimal C_f {:?}", b4.minimal_c_f)))
    }
}

fn experiment_options(run: &Run) -> CliResult<ExperimentOptions> {
    let c = &run.cfg;
    let mut o = ExperimentOptions::desk(c.get("train.problem")?);
    o.depth = c.get("train.depth")?;
    o.width = c.get("train.width")?;
    o.seed = run.seed()?;
    o.test_m = c.opt("train.test_M")?;
    o.cache_dir = c.opt::<String>("data.cache")?.map(Into::into);
    o.solver.t_final = c.get("data.T")?;
    o.solver.cells = c.get("data.cells")?;
    o.solver.cfl = c.get("data.cfl")?;
    o.solver.grid_points = c.get("data.grid_points")?;
    o.train.epochs = c.get("train.epochs")?;
    o.train.lr = c.get("train.lr")?;
    o.train.reg_lambda = c.get("train.reg_lambda")?;
    o.train.batch_size = c.opt("train.batch_size")?;
    o.train.discrepancy = c.get("train.discrepancy")?;
    if o.train.epochs == 0 {
        return Err(CliError::Usage("train.epochs must be at least 1".into()));
    }
    Ok(o)
}

fn record_run_seeds(run: &mut Run, base: u64, dim: usize, m: usize, repeat: usize) {
    let tag = format!("d{dim}_M{m}_r{repeat}");
    run.record_seed(format!("{tag}.data"), run_seed(base, dim, m, repeat, 0));
    run.record_seed(format!("{tag}.test"), run_seed(base, dim, m, repeat, 1));
    run.record_seed(format!("{tag}.init"), run_seed(base, dim, m, repeat, 2));
}

pub fn train(run: &mut Run) -> CliResult<()> {
    let opts = experiment_options(run)?;
    let dim: usize = run.cfg.get("train.dim")?;
    let m: usize = run.cfg.get("train.M")?;
    let repeat: usize = run.cfg.get("train.repeat")?;
    run.record_seed("seed", opts.seed);
    record_run_seeds(run, opts.seed, dim, m, repeat);
    if run.dry_run {
        println!("would train a {}x{} network on {m} samples of dimension {dim} for {} epochs", opts.depth, opts.width, opts.train.epochs);
        return Ok(());
    }
    let (result, params, report) = match train_run_full(&opts, dim, m, repeat) {
        Ok(v) => v,
        Err(relu_scl::Error::Diverged { epoch, history }) => {
            write_history(run, &history)?;
            return Err(CliError::Check(format!("training diverged at epoch {epoch}")));
        }
        Err(e) => return Err(e.into()),
    };
    write_history(run, &report.history)?;
    run.write("params.json", &(serde_json::to_string(&params)? + "\n"))?;
    let doc = serde_json::json!({ "run": result, "report": report });
    run.write("report.json", &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    println!(
        "train error {:.6e}, test error {:.6e}, gap {:.6e}, gap bound {:.6e}",
        result.train_error, result.test_error, result.gap, result.gap_bound
    );
    if result.dominated {
        Ok(())
    } else {
        Err(CliError::Check(format!("gap {} exceeds the bound {}", result.gap.max(result.clipped_gap), result.gap_bound)))
    }
}

fn write_history(run: &mut Run, history: &[f64]) -> CliResult<()> {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, num(*l)));
    }
    run.write("history.csv", &s)
}

fn write_runs(run: &mut Run, config: &[(String, String)], runs: &[RunResult]) -> CliResult<()> {
    let header = [
        "d", "M", "repeat", "data_seed", "test_seed", "init_seed", "train_error", "test_error", "gap", "clipped_gap", "theta_max_abs", "gap_bound", "dominated",
    ];
    let rows = runs.iter().map(|r| {
        vec![
            r.dim.to_string(),
            r.m.to_string(),
            r.repeat.to_string(),
            r.data_seed.to_string(),
            r.test_seed.to_string(),
            r.init_seed.to_string(),
            num(r.train_error),
            num(r.test_error),
            num(r.gap),
            num(r.clipped_gap),
            num(r.theta_max_abs),
            num(r.gap_bound),
            r.dominated.to_string(),
        ]
    });
    write_report_csv(&run.artifact("runs.csv"), config, &header, rows)?;
    Ok(())
}

fn print_rows<R: ReportRow>(rows: &[R]) {
    println!("{}", R::header().join(","));
    for r in rows {
        println!("{}", r.fields().join(","));
    }
}

pub fn experiment(run: &mut Run) -> CliResult<()> {
    let opts = experiment_options(run)?;
    let c = run.cfg.clone();
    let kind = c.raw("experiment.kind").to_string();
    let repeats: usize = c.get("experiment.repeats")?;
    let jobs: Vec<(usize, usize, usize)> = match kind.as_str() {
        "dimension_sweep" => {
            let m: usize = c.get("experiment.M")?;
            c.list::<usize>("experiment.dims")?.into_iter().flat_map(|d| (0..repeats).map(move |r| (d, m, r))).collect()
        }
        "m_sweep" => {
            let d: usize = c.get("experiment.d")?;
            c.list::<usize>("experiment.M_list")?.into_iter().flat_map(|m| (0..repeats).map(move |r| (d, m, r))).collect()
        }
        "arch_search" => Vec::new(),
        o => return Err(CliError::Usage(format!("experiment.kind = '{o}': expected dimension_sweep, m_sweep or arch_search"))),
    };
    run.record_seed("seed", opts.seed);
    for &(d, m, r) in &jobs {
        record_run_seeds(run, opts.seed, d, m, r);
    }
    if run.dry_run {
        let mut plan = String::from("d,M,repeat,data_seed,test_seed,init_seed\n");
        for &(d, m, r) in &jobs {
            let s = |role| run_seed(opts.seed, d, m, r, role);
            plan.push_str(&format!("{d},{m},{r},{},{},{}\n", s(0), s(1), s(2)));
        }
        if kind == "arch_search" {
            plan = format!(
                "depths {}; widths {}; runs {repeats}; dim {}; M {}\n",
                c.raw("experiment.depths"),
                c.raw("experiment.widths"),
                c.raw("train.dim"),
                c.raw("experiment.M")
            );
        }
        print!("plan for {kind} ({} epochs per run):\n{plan}", opts.train.epochs);
        run.write("plan.csv", &plan)?;
        return Ok(());
    }
    match kind.as_str() {
        "dimension_sweep" => {
            let rep = experiment_dimension_sweep(&opts, &c.list::<usize>("experiment.dims")?, c.get("experiment.M")?, repeats)?;
            rep.write_csv(&run.artifact("dimension_sweep.csv"))?;
            write_runs(run, &rep.config, &rep.runs)?;
            print_rows(&rep.rows);
            dominated(&rep.runs)
        }
        "m_sweep" => {
            let rep = experiment_m_sweep(&opts, c.get("experiment.d")?, &c.list::<usize>("experiment.M_list")?, repeats)?;
            rep.write_csv(&run.artifact("m_sweep.csv"))?;
            write_runs(run, &rep.config, &rep.runs)?;
            print_rows(&rep.rows);
            dominated(&rep.runs)
        }
        _ => {
            let dim: usize = c.get("train.dim")?;
            let m: usize = c.get("experiment.M")?;
            let data_seed = run_seed(opts.seed, dim, m, 0, 0);
            run.record_seed("arch.data", data_seed);
            let data = make_dataset(opts.problem, dim, m, data_seed, &opts.solver)?;
            let res = arch_search(
                &data,
                &c.list::<usize>("experiment.depths")?,
                &c.list::<usize>("experiment.widths")?,
                repeats,
                &opts.train,
                c.get("experiment.train_fraction")?,
                opts.seed,
            )?;
            let rows = res.rows.iter().map(|r| {
                let mut v = vec![r.depth.to_string(), r.width.to_string(), num(r.median)];
                v.push(r.val_errors.iter().map(|e| num(*e)).collect::<Vec<_>>().join(" "));
                v
            });
            write_report_csv(&run.artifact("arch_search.csv"), &opts.config_lines(), &["depth", "width", "median_val_error", "val_errors"], rows)?;
            println!("best architecture: {} hidden layers of width {}", res.best.0, res.best.1);
            Ok(())
        }
    }
}

fn dominated(runs: &[RunResult]) -> CliResult<()> {
    match runs.iter().find(|r| !r.dominated) {
        Some(r) => Err(CliError::Check(format!(
            "run d={} M={} repeat={}: gap {} exceeds the bound {}",
            r.dim,
            r.m,
            r.repeat,
            r.gap.max(r.clipped_gap),
            r.gap_bound
        ))),
        None => Ok(()),
    }
}
