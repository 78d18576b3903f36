use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::flux::{Flux, FluxFn};
use crate::fv::{muscl_solve, Boundary, GridState, NumericalFlux};
use crate::kl::{exp_cov_modes, sample_params, KlFlux};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    /// Burgers flux, `u₀(x, y) = 1 + Σ_k y_k 2^{1−k} sin(kx)`.
    FixedFlux,
    /// `u₀(x) = 1 + sin(x)`, flux `u²/2 + Σ_k z_k √λ_k φ_k(u)`.
    ParametricFlux,
}

impl std::str::FromStr for Problem {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "fixed_flux" => Ok(Problem::FixedFlux),
            "parametric_flux" => Ok(Problem::ParametricFlux),
            o => Err(format!("unknown problem '{o}' (fixed_flux | parametric_flux)")),
        }
    }
}

impl std::fmt::Display for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Problem::FixedFlux => "fixed_flux",
            Problem::ParametricFlux => "parametric_flux",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub a: f64,
    pub b: f64,
    pub t_final: f64,
    pub cells: usize,
    pub cfl: f64,
    pub boundary: Boundary,
    /// Sample points `x_j`, equispaced on `[a, b]` including both ends.
    pub grid_points: usize,
    /// `None` picks Rusanov for the fixed flux and Godunov for the random one.
    pub numerical_flux: Option<NumericalFlux>,
    pub kl_sigma: f64,
    pub kl_eta: f64,
    pub kl_quadrature: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            a: 0.0,
            b: 1.0,
            t_final: 0.1,
            cells: 1024,
            cfl: 0.4,
            boundary: Boundary::Outflow,
            grid_points: 100,
            numerical_flux: None,
            kl_sigma: 1.0,
            kl_eta: 3.0,
            kl_quadrature: 256,
        }
    }
}

impl SolverSettings {
    pub fn grid(&self) -> Vec<f64> {
        let j = self.grid_points;
        if j == 1 {
            return vec![0.5 * (self.a + self.b)];
        }
        (0..j)
            .map(|k| self.a + (self.b - self.a) * k as f64 / (j - 1) as f64)
            .collect()
    }

    pub fn numerical_flux_for(&self, problem: Problem) -> NumericalFlux {
        self.numerical_flux.unwrap_or(match problem {
            Problem::FixedFlux => NumericalFlux::Rusanov,
            Problem::ParametricFlux => NumericalFlux::Godunov,
        })
    }

    pub fn describe(&self, problem: Problem) -> String {
        format!(
            "muscl-minmod-ssp2,flux={:?},cells={},cfl={},T={},domain=[{},{}],boundary={},J={},kl=({},{},{})",
            self.numerical_flux_for(problem),
            self.cells,
            self.cfl,
            self.t_final,
            self.a,
            self.b,
            self.boundary,
            self.grid_points,
            self.kl_sigma,
            self.kl_eta,
            self.kl_quadrature
        )
    }
}

/// Parameter samples and the solution at `T` on the sample grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub params: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub grid: Vec<f64>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(params: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, grid: Vec<f64>, provenance: String) -> Result<Self> {
        if params.len() != targets.len() {
            return Err(Error::Dimension {
                expected: params.len(),
                got: targets.len(),
                context: "target rows",
            });
        }
        if let Some(t) = targets.iter().find(|t| t.len() != grid.len()) {
            return Err(Error::Dimension {
                expected: grid.len(),
                got: t.len(),
                context: "target columns",
            });
        }
        if let Some(p) = params.iter().find(|p| p.len() != params[0].len()) {
            return Err(Error::Dimension {
                expected: params[0].len(),
                got: p.len(),
                context: "parameter columns",
            });
        }
        if targets.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("targets must be finite"));
        }
        Ok(Dataset {
            params,
            targets,
            grid,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.params.first().map_or(0, Vec::len)
    }

    pub fn outputs(&self) -> usize {
        self.grid.len()
    }

    /// Spacing of the sample grid; the `L¹` weight of a grid sum.
    pub fn cell_width(&self) -> f64 {
        match self.grid.len() {
            0 | 1 => 1.0,
            n => (self.grid[n - 1] - self.grid[0]) / (n - 1) as f64,
        }
    }

    pub fn target_range(&self) -> (f64, f64) {
        self.targets
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn subset(&self, idx: impl IntoIterator<Item = usize>) -> Dataset {
        let (params, targets) = idx
            .into_iter()
            .map(|i| (self.params[i].clone(), self.targets[i].clone()))
            .unzip();
        Dataset {
            params,
            targets,
            grid: self.grid.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// The first `⌈fraction·M⌉` samples and the rest.
    pub fn split(&self, fraction: f64) -> Result<(Dataset, Dataset)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(invalid(format!("split fraction must lie in (0, 1), got {fraction}")));
        }
        let k = ((fraction * self.len() as f64).ceil() as usize).min(self.len());
        Ok((self.subset(0..k), self.subset(k..self.len())))
    }

    /// Header lines `# provenance`, `# grid,…`, then one row per sample with
    /// the parameters followed by the targets.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "# {}", self.provenance)?;
        writeln!(f, "# dim={}", self.dim())?;
        let grid: Vec<String> = self.grid.iter().map(|x| format!("{x:.17e}")).collect();
        writeln!(f, "# grid,{}", grid.join(","))?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(f);
        for (p, t) in self.params.iter().zip(&self.targets) {
            w.write_record(p.iter().chain(t).map(|v| format!("{v:.17e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let file = BufReader::new(std::fs::File::open(path)?);
        let mut provenance = String::new();
        let mut dim = None;
        let mut grid = Vec::new();
        let mut body = String::new();
        for line in file.lines() {
            let line = line?;
            if let Some(rest) = line.strip_prefix("# grid,") {
                grid = parse_floats(rest.split(','))?;
            } else if let Some(rest) = line.strip_prefix("# dim=") {
                dim = Some(rest.trim().parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?);
            } else if let Some(rest) = line.strip_prefix("# ") {
                provenance = rest.to_string();
            } else {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let dim = dim.ok_or_else(|| Error::Parse("dataset file lacks a dim line".into()))?;
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(body.as_bytes());
        let mut params = Vec::new();
        let mut targets = Vec::new();
        for rec in r.records() {
            let row = parse_floats(rec?.iter())?;
            if row.len() != dim + grid.len() {
                return Err(Error::Parse(format!("row has {} fields, expected {}", row.len(), dim + grid.len())));
            }
            params.push(row[..dim].to_vec());
            targets.push(row[dim..].to_vec());
        }
        Dataset::new(params, targets, grid, provenance)
    }
}

fn parse_floats<'a>(it: impl Iterator<Item = &'a str>) -> Result<Vec<f64>> {
    it.map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}"))))
        .collect()
}

fn fixed_flux_initial(y: &[f64]) -> impl Fn(f64) -> f64 + '_ {
    move |x| {
        1.0 + y
            .iter()
            .enumerate()
            .map(|(k, yk)| yk * 2f64.powi(-(k as i32)) * ((k + 1) as f64 * x).sin())
            .sum::<f64>()
    }
}

fn solve_at_grid(flux: &dyn FluxFn, nf: NumericalFlux, u0: &dyn Fn(f64) -> f64, s: &SolverSettings, grid: &[f64]) -> Result<Vec<f64>> {
    let g0 = GridState::from_centers(s.a, s.b, s.cells, u0)?;
    let sol = muscl_solve(flux, nf, &g0, s.t_final, s.cfl, s.boundary)?;
    Ok(grid.iter().map(|&x| sol.interpolate(x)).collect())
}

/// Solves every sample with the MUSCL scheme and samples `u(T, ·)` on the
/// `J` grid points by linear interpolation between cell centres.
pub fn make_dataset(problem: Problem, dim: usize, m: usize, seed: u64, s: &SolverSettings) -> Result<Dataset> {
    if s.cells < 2 || s.grid_points == 0 {
        return Err(invalid("solver needs at least two cells and one sample point"));
    }
    let params = sample_params(dim, m, seed);
    let grid = s.grid();
    let mut nf = s.numerical_flux_for(problem);
    let targets: Vec<Vec<f64>> = match problem {
        Problem::FixedFlux => params
            .par_iter()
            .map(|y| solve_at_grid(&Flux::Burgers, nf, &fixed_flux_initial(y), s, &grid))
            .collect::<Result<_>>()?,
        Problem::ParametricFlux => {
            let u0 = |x: f64| 1.0 + x.sin();
            if dim == 0 {
                params
                    .par_iter()
                    .map(|_| solve_at_grid(&Flux::Burgers, nf, &u0, s, &grid))
                    .collect::<Result<_>>()?
            } else {
                let modes = exp_cov_modes(s.kl_sigma, s.kl_eta, (0.0, 2.0), dim, s.kl_quadrature)?;
                if nf == NumericalFlux::Godunov {
                    log::info!("random fluxes are not known to be convex; using the Rusanov flux");
                    nf = NumericalFlux::Rusanov;
                }
                params
                    .par_iter()
                    .map(|z| {
                        let flux = KlFlux::new(Flux::Burgers, modes.clone(), z.clone())?;
                        solve_at_grid(&flux, nf, &u0, s, &grid)
                    })
                    .collect::<Result<_>>()?
            }
        }
    };
    let provenance = format!("problem={problem},dim={dim},M={m},seed={seed},{}", s.describe(problem));
    Dataset::new(params, targets, grid, provenance)
}

/// Cache file name for a dataset key.
pub fn dataset_cache_path(dir: &Path, problem: Problem, dim: usize, m: usize, seed: u64, s: &SolverSettings) -> PathBuf {
    let digest = Sha256::digest(s.describe(problem).as_bytes());
    let tag: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    dir.join(format!("{problem}_d{dim}_m{m}_s{seed}_{tag}.csv"))
}

/// Loads the dataset from `dir` when cached, otherwise generates and stores it.
pub fn cached_dataset(dir: &Path, problem: Problem, dim: usize, m: usize, seed: u64, s: &SolverSettings) -> Result<Dataset> {
    let path = dataset_cache_path(dir, problem, dim, m, seed, s);
    if path.exists() {
        return Dataset::read_csv(&path);
    }
    let d = make_dataset(problem, dim, m, seed, s)?;
    std::fs::create_dir_all(dir)?;
    d.write_csv(&path)?;
    Ok(d)
}
