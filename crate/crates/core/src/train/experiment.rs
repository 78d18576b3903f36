use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{adam_train, cached_dataset, make_dataset, Dataset, MlpParams, Problem, SolverSettings, TrainOptions, TrainReport};
use crate::bounds::cumulative_gen_bound;
use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub problem: Problem,
    pub depth: usize,
    pub width: usize,
    pub train: TrainOptions,
    pub solver: SolverSettings,
    pub seed: u64,
    /// Test-set size; `None` uses the training-set size.
    pub test_m: Option<usize>,
    pub cache_dir: Option<PathBuf>,
}

impl ExperimentOptions {
    /// 4×20 network, 2000 full-batch Adam epochs.
    pub fn desk(problem: Problem) -> Self {
        ExperimentOptions {
            problem,
            depth: 4,
            width: 20,
            train: TrainOptions::default(),
            solver: SolverSettings::default(),
            seed: 0,
            test_m: None,
            cache_dir: None,
        }
    }

    pub fn full_scale(problem: Problem) -> Self {
        let mut o = Self::desk(problem);
        o.train.epochs = 10_000;
        o
    }

    /// Flattened `key = value` pairs in sorted key order.
    pub fn config_lines(&self) -> Vec<(String, String)> {
        let v = serde_json::to_value(self).expect("options serialize");
        let mut out = Vec::new();
        flatten("", &v, &mut out);
        out
    }

    fn widths(&self, dim: usize) -> Vec<usize> {
        let mut w = vec![dim];
        w.extend(std::iter::repeat_n(self.width, self.depth));
        w.push(self.solver.grid_points);
        w
    }

    fn dataset(&self, dim: usize, m: usize, seed: u64) -> Result<Dataset> {
        match &self.cache_dir {
            Some(dir) => cached_dataset(dir, self.problem, dim, m, seed, &self.solver),
            None => make_dataset(self.problem, dim, m, seed, &self.solver),
        }
    }
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, String)>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        serde_json::Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Seed of one run, distinct per `(dim, M, repeat, role)`; `role` is 0 for training data, 1 for test data, 2 for
/// initialization and 3 for architecture-search runs.
pub fn run_seed(base: u64, dim: usize, m: usize, repeat: usize, role: u64) -> u64 {
    let mut h = base ^ 0x9e37_79b9_7f4a_7c15;
    for v in [dim as u64, m as u64, repeat as u64, role] {
        h = (h ^ v).wrapping_mul(0x1000_0000_01b3).rotate_left(29);
    }
    h
}

/// Outcome of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub dim: usize,
    pub m: usize,
    pub repeat: usize,
    pub data_seed: u64,
    pub test_seed: u64,
    pub init_seed: u64,
    pub train_error: f64,
    pub test_error: f64,
    pub gap: f64,
    pub clipped_gap: f64,
    pub theta_max_abs: f64,
    pub gap_bound: f64,
    /// The bound is at least both measured gaps.
    pub dominated: bool,
}

pub fn train_run(opts: &ExperimentOptions, dim: usize, m: usize, repeat: usize) -> Result<RunResult> {
    train_run_full(opts, dim, m, repeat).map(|(r, _, _)| r)
}

/// [`train_run`] that also returns the trained parameters and the full report.
pub fn train_run_full(opts: &ExperimentOptions, dim: usize, m: usize, repeat: usize) -> Result<(RunResult, MlpParams, TrainReport)> {
    let data_seed = run_seed(opts.seed, dim, m, repeat, 0);
    let test_seed = run_seed(opts.seed, dim, m, repeat, 1);
    let init_seed = run_seed(opts.seed, dim, m, repeat, 2);
    let train = opts.dataset(dim, m, data_seed)?;
    let test = opts.dataset(dim, opts.test_m.unwrap_or(m), test_seed)?;
    let params = MlpParams::glorot(&opts.widths(dim), init_seed)?;
    let mut topts = opts.train.clone();
    topts.seed = init_seed;
    let (trained, report) = adam_train(params, &train, Some(&test), &topts)?;
    let gap_bound = report.gap_bound(opts.solver.b - opts.solver.a)?;
    let gap = report.gap.unwrap_or(0.0);
    let clipped_gap = report.clipped_gap.unwrap_or(0.0);
    let run = RunResult {
        dim,
        m,
        repeat,
        data_seed,
        test_seed,
        init_seed,
        train_error: report.train_error,
        test_error: report.test_error.unwrap_or(f64::NAN),
        gap,
        clipped_gap,
        theta_max_abs: report.theta_max_abs,
        gap_bound,
        dominated: gap_bound >= gap && gap_bound >= clipped_gap,
    };
    Ok((run, trained, report))
}

/// Sample mean and standard error `s/√n` (zero for fewer than two values).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub trait ReportRow {
    fn header() -> Vec<&'static str>;
    fn fields(&self) -> Vec<String>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionRow {
    pub d: usize,
    pub m: usize,
    pub train_mean: f64,
    pub test_mean: f64,
    pub gap_mean: f64,
    pub clipped_gap_mean: f64,
    pub gap_bound_mean: f64,
    /// `train_mean + gap_bound_mean`.
    pub bound: f64,
    pub all_dominated: bool,
}

impl ReportRow for DimensionRow {
    fn header() -> Vec<&'static str> {
        vec![
            "d",
            "M",
            "train_mean",
            "test_mean",
            "gap_mean",
            "clipped_gap_mean",
            "gap_bound_mean",
            "bound",
            "all_dominated",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.d.to_string(),
            self.m.to_string(),
            fmt(self.train_mean),
            fmt(self.test_mean),
            fmt(self.gap_mean),
            fmt(self.clipped_gap_mean),
            fmt(self.gap_bound_mean),
            fmt(self.bound),
            self.all_dominated.to_string(),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MRow {
    pub m: usize,
    pub d: usize,
    pub train_mean: f64,
    pub train_se: f64,
    pub test_mean: f64,
    pub test_se: f64,
    pub gap_mean: f64,
    pub gap_se: f64,
    pub clipped_gap_mean: f64,
    pub all_dominated: bool,
}

impl ReportRow for MRow {
    fn header() -> Vec<&'static str> {
        vec![
            "M",
            "d",
            "train_mean",
            "train_se",
            "test_mean",
            "test_se",
            "gap_mean",
            "gap_se",
            "clipped_gap_mean",
            "all_dominated",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.m.to_string(),
            self.d.to_string(),
            fmt(self.train_mean),
            fmt(self.train_se),
            fmt(self.test_mean),
            fmt(self.test_se),
            fmt(self.gap_mean),
            fmt(self.gap_se),
            fmt(self.clipped_gap_mean),
            self.all_dominated.to_string(),
        ]
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.10e}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport<R> {
    pub rows: Vec<R>,
    pub runs: Vec<RunResult>,
    pub config: Vec<(String, String)>,
}

impl<R: ReportRow> SweepReport<R> {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_report_csv(path, &self.config, &R::header(), self.rows.iter().map(ReportRow::fields))
    }
}

/// CSV with a `# key = value` comment block in front of the header.
pub fn write_report_csv(
    path: &Path,
    config: &[(String, String)],
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (k, v) in config {
        writeln!(f, "# {k} = {v}")?;
    }
    let mut w = csv::Writer::from_writer(f);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn run_grid(opts: &ExperimentOptions, jobs: &[(usize, usize, usize)]) -> Result<Vec<RunResult>> {
    jobs.par_iter()
        .map(|&(d, m, r)| train_run(opts, d, m, r))
        .collect()
}

/// Train and test error against the parameter dimension, averaged over
/// `seeds` runs of the fixed architecture.
pub fn experiment_dimension_sweep(opts: &ExperimentOptions, dims: &[usize], m: usize, seeds: usize) -> Result<SweepReport<DimensionRow>> {
    if dims.is_empty() || seeds == 0 || m == 0 {
        return Err(invalid("the sweep needs dimensions, seeds and samples"));
    }
    let jobs: Vec<_> = dims.iter().flat_map(|&d| (0..seeds).map(move |r| (d, m, r))).collect();
    let runs = run_grid(opts, &jobs)?;
    let rows = dims
        .iter()
        .map(|&d| {
            let rs: Vec<&RunResult> = runs.iter().filter(|r| r.dim == d).collect();
            let avg = |f: fn(&RunResult) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / rs.len() as f64;
            let train_mean = avg(|r| r.train_error);
            let gap_bound_mean = avg(|r| r.gap_bound);
            Ok(DimensionRow {
                d,
                m,
                train_mean,
                test_mean: avg(|r| r.test_error),
                gap_mean: avg(|r| r.gap),
                clipped_gap_mean: avg(|r| r.clipped_gap),
                gap_bound_mean,
                bound: cumulative_gen_bound(train_mean, gap_bound_mean)?,
                all_dominated: rs.iter().all(|r| r.dominated),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut config = opts.config_lines();
    config.push(("sweep.dims".into(), format!("{dims:?}")));
    config.push(("sweep.M".into(), m.to_string()));
    config.push(("sweep.seeds".into(), seeds.to_string()));
    Ok(SweepReport { rows, runs, config })
}

/// Mean and standard error of the errors and the gap against the number of
/// training samples.
pub fn experiment_m_sweep(opts: &ExperimentOptions, d: usize, ms: &[usize], repeats: usize) -> Result<SweepReport<MRow>> {
    if ms.is_empty() || repeats == 0 {
        return Err(invalid("the sweep needs sample sizes and repeats"));
    }
    let jobs: Vec<_> = ms.iter().flat_map(|&m| (0..repeats).map(move |r| (d, m, r))).collect();
    let runs = run_grid(opts, &jobs)?;
    let rows = ms
        .iter()
        .map(|&m| {
            let rs: Vec<&RunResult> = runs.iter().filter(|r| r.m == m).collect();
            let col = |f: fn(&RunResult) -> f64| mean_and_se(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (train_mean, train_se) = col(|r| r.train_error);
            let (test_mean, test_se) = col(|r| r.test_error);
            let (gap_mean, gap_se) = col(|r| r.gap);
            MRow {
                m,
                d,
                train_mean,
                train_se,
                test_mean,
                test_se,
                gap_mean,
                gap_se,
                clipped_gap_mean: col(|r| r.clipped_gap).0,
                all_dominated: rs.iter().all(|r| r.dominated),
            }
        })
        .collect();
    let mut config = opts.config_lines();
    config.push(("sweep.d".into(), d.to_string()));
    config.push(("sweep.M_list".into(), format!("{ms:?}")));
    config.push(("sweep.repeats".into(), repeats.to_string()));
    Ok(SweepReport { rows, runs, config })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchRow {
    pub depth: usize,
    pub width: usize,
    pub val_errors: Vec<f64>,
    pub median: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSearch {
    /// `(depth, width)` with the smallest median validation error.
    pub best: (usize, usize),
    pub rows: Vec<ArchRow>,
}

/// Trains every `(depth, width)` pair `runs` times on the first
/// `train_fraction` of the data and ranks by median validation error on the
/// rest. Ties go to the earlier candidate.
pub fn arch_search(
    data: &Dataset,
    depths: &[usize],
    widths: &[usize],
    runs: usize,
    opts: &TrainOptions,
    train_fraction: f64,
    seed: u64,
) -> Result<ArchSearch> {
    if depths.is_empty() || widths.is_empty() || runs == 0 {
        return Err(invalid("the search needs candidates and runs"));
    }
    let (train, val) = data.split(train_fraction)?;
    let pairs: Vec<(usize, usize)> = depths.iter().flat_map(|&d| widths.iter().map(move |&w| (d, w))).collect();
    let jobs: Vec<(usize, usize)> = (0..pairs.len()).flat_map(|p| (0..runs).map(move |r| (p, r))).collect();
    let errs: Vec<f64> = jobs
        .par_iter()
        .map(|&(p, r)| {
            let (depth, width) = pairs[p];
            let mut ws = vec![data.dim()];
            ws.extend(std::iter::repeat_n(width, depth));
            ws.push(data.outputs());
            let init = run_seed(seed, depth, width, r, 3);
            let params = MlpParams::glorot(&ws, init)?;
            let mut o = opts.clone();
            o.seed = init;
            let (_, rep) = adam_train(params, &train, Some(&val), &o)?;
            Ok(rep.test_error.unwrap_or(f64::NAN))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<ArchRow> = pairs
        .iter()
        .enumerate()
        .map(|(p, &(depth, width))| {
            let val_errors = errs[p * runs..(p + 1) * runs].to_vec();
            ArchRow {
                depth,
                width,
                median: median(&val_errors),
                val_errors,
            }
        })
        .collect();
    let best = rows
        .iter()
        .fold(None::<&ArchRow>, |b, r| match b {
            Some(b) if !(r.median < b.median) => Some(b),
            _ => Some(r),
        })
        .map(|r| (r.depth, r.width))
        .expect("non-empty");
    Ok(ArchSearch { best, rows })
}
