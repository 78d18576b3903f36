//! Karhunen-Loève expansions: Nyström eigenpairs of the exponential
//! covariance, tabulated modes, parametric fluxes and the decay check.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::flux::{sweep_sup, Flux, FluxFn, Provenance};

/// Eigenpairs tabulated on a uniform grid of `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlModes {
    pub lo: f64,
    pub hi: f64,
    pub lambdas: Vec<f64>,
    /// `phis[i][k]` is mode `i` at grid point `k`.
    pub phis: Vec<Vec<f64>>,
    pub settings: String,
}

const SUPPORT_SLACK: f64 = 1e-12;

impl KlModes {
    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    pub fn points(&self) -> usize {
        self.phis.first().map_or(0, Vec::len)
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.points();
        (0..n).map(|k| self.node(k)).collect()
    }

    fn node(&self, k: usize) -> f64 {
        let n = self.points();
        if k + 1 == n {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * k as f64 / (n - 1) as f64
        }
    }

    fn h(&self) -> f64 {
        (self.hi - self.lo) / (self.points() - 1) as f64
    }

    pub fn contains(&self, u: f64) -> bool {
        u >= self.lo - SUPPORT_SLACK && u <= self.hi + SUPPORT_SLACK
    }

    /// Linear interpolation of mode `i`; `u` must lie in the support.
    pub fn phi(&self, i: usize, u: f64) -> f64 {
        let n = self.points();
        let s = ((u - self.lo) / self.h()).clamp(0.0, (n - 1) as f64);
        let k = (s.floor() as usize).min(n - 2);
        let w = s - k as f64;
        let p = &self.phis[i];
        (1.0 - w) * p[k] + w * p[k + 1]
    }

    /// Centred first differences on the grid (one-sided at the ends).
    pub fn dphi_table(&self, i: usize) -> Vec<f64> {
        let p = &self.phis[i];
        let n = p.len();
        let h = self.h();
        (0..n)
            .map(|k| match k {
                0 => (p[1] - p[0]) / h,
                k if k + 1 == n => (p[n - 1] - p[n - 2]) / h,
                k => (p[k + 1] - p[k - 1]) / (2.0 * h),
            })
            .collect()
    }

    /// Second differences on the grid, copied to the end points.
    pub fn d2phi_table(&self, i: usize) -> Vec<f64> {
        let p = &self.phis[i];
        let n = p.len();
        let h2 = self.h() * self.h();
        let mut out: Vec<f64> = (0..n)
            .map(|k| {
                if k == 0 || k + 1 == n {
                    0.0
                } else {
                    (p[k + 1] - 2.0 * p[k] + p[k - 1]) / h2
                }
            })
            .collect();
        if n >= 3 {
            out[0] = out[1];
            out[n - 1] = out[n - 2];
        }
        out
    }

    /// Maximum of `|table|` over grid points inside `[lo, hi]`.
    fn sup_on(&self, table: &[f64], lo: f64, hi: f64) -> f64 {
        table
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let u = self.node(*k);
                u >= lo - SUPPORT_SLACK && u <= hi + SUPPORT_SLACK
            })
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max)
    }

    /// `‖φ_i‖`, `‖φ_i′‖`, `‖φ_i″‖` over `[lo, hi] ∩ support`.
    pub fn norms(&self, i: usize, lo: f64, hi: f64) -> (f64, f64, f64) {
        (
            self.sup_on(&self.phis[i], lo, hi),
            self.sup_on(&self.dphi_table(i), lo, hi),
            self.sup_on(&self.d2phi_table(i), lo, hi),
        )
    }

    /// Gram matrix `∫ φ_i φ_k` by the trapezoid rule.
    pub fn gram(&self) -> DMatrix<f64> {
        let w = trapezoid_weights(self.points(), self.h());
        let s = self.dim();
        DMatrix::from_fn(s, s, |i, k| {
            self.phis[i]
                .iter()
                .zip(&self.phis[k])
                .zip(&w)
                .map(|((a, b), w)| a * b * w)
                .sum()
        })
    }

    /// Keeps the leading `s` modes.
    pub fn truncated(&self, s: usize) -> KlModes {
        KlModes {
            lambdas: self.lambdas[..s.min(self.dim())].to_vec(),
            phis: self.phis[..s.min(self.dim())].to_vec(),
            ..self.clone()
        }
    }

    /// Scales every eigenvalue by `factor`.
    pub fn scaled(&self, factor: f64) -> KlModes {
        KlModes {
            lambdas: self.lambdas.iter().map(|l| l * factor).collect(),
            ..self.clone()
        }
    }

    /// `mean(x) + Σ √λ_i y_i φ_i(x)`.
    pub fn value(&self, mean: &dyn Fn(f64) -> f64, x: f64, y: &[f64]) -> Result<f64> {
        if y.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: y.len(),
                context: "KL coefficients",
            });
        }
        if !self.contains(x) {
            return Err(invalid(format!("{x} outside the support [{}, {}]", self.lo, self.hi)));
        }
        Ok(mean(x)
            + (0..self.dim())
                .map(|i| self.lambdas[i].sqrt() * y[i] * self.phi(i, x))
                .sum::<f64>())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "# {}", self.settings)?;
        let lam: Vec<String> = self.lambdas.iter().map(|l| format!("{l:.17e}")).collect();
        writeln!(f, "# eigenvalues,{}", lam.join(","))?;
        let mut head = vec!["u".to_string()];
        head.extend((1..=self.dim()).map(|i| format!("phi_{i}")));
        writeln!(f, "{}", head.join(","))?;
        for k in 0..self.points() {
            let mut row = vec![format!("{:.17e}", self.node(k))];
            row.extend(self.phis.iter().map(|p| format!("{:.17e}", p[k])));
            writeln!(f, "{}", row.join(","))?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<KlModes> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut settings = String::new();
        let mut lambdas = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}")));
        for (n, line) in file.lines().enumerate() {
            let line = line?;
            if let Some(rest) = line.strip_prefix("# eigenvalues,") {
                lambdas = rest.split(',').map(parse).collect::<Result<_>>()?;
            } else if let Some(rest) = line.strip_prefix("# ") {
                settings = rest.to_string();
            } else if n > 0 && !line.starts_with('u') && !line.trim().is_empty() {
                rows.push(line.split(',').map(parse).collect::<Result<_>>()?);
            }
        }
        if rows.len() < 2 || lambdas.is_empty() {
            return Err(Error::Parse("mode table needs eigenvalues and at least two rows".into()));
        }
        let s = lambdas.len();
        if rows.iter().any(|r| r.len() != s + 1) {
            return Err(Error::Parse("mode table rows have the wrong length".into()));
        }
        let phis = (0..s).map(|i| rows.iter().map(|r| r[i + 1]).collect()).collect();
        Ok(KlModes {
            lo: rows[0][0],
            hi: rows[rows.len() - 1][0],
            lambdas,
            phis,
            settings,
        })
    }
}

fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|k| if k == 0 || k + 1 == n { h / 2.0 } else { h })
        .collect()
}

/// Leading eigenpairs of `∫ σ² exp(−|u₁−u₂|/η) φ(u₁) du₁ = λ φ(u₂)` on
/// `support` by Nyström discretization with trapezoid weights.
pub fn exp_cov_modes(sigma: f64, eta: f64, support: (f64, f64), n_modes: usize, n_quad: usize) -> Result<KlModes> {
    if !(sigma > 0.0 && eta > 0.0) {
        return Err(invalid("sigma and eta must be positive"));
    }
    if n_modes == 0 || n_quad < 8 * n_modes {
        return Err(invalid(format!("need n_quad >= 8 n_modes, got {n_quad} for {n_modes} modes")));
    }
    let (lo, hi) = support;
    if !(lo < hi) {
        return Err(invalid("empty support"));
    }
    let h = (hi - lo) / (n_quad - 1) as f64;
    let nodes: Vec<f64> = (0..n_quad).map(|k| lo + k as f64 * h).collect();
    let w = trapezoid_weights(n_quad, h);
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let s2 = sigma * sigma;
    let b = DMatrix::from_fn(n_quad, n_quad, |i, k| {
        sw[i] * s2 * (-(nodes[i] - nodes[k]).abs() / eta).exp() * sw[k]
    });
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n_quad).collect();
    order.sort_by(|&i, &k| eig.eigenvalues[k].total_cmp(&eig.eigenvalues[i]));
    if let Some(&min) = order.last() {
        if eig.eigenvalues[min] < -1e-10 {
            return Err(invalid(format!("negative eigenvalue {}", eig.eigenvalues[min])));
        }
    }
    let mut lambdas = Vec::with_capacity(n_modes);
    let mut phis = Vec::with_capacity(n_modes);
    for &idx in order.iter().take(n_modes) {
        let v = eig.eigenvectors.column(idx);
        let mut phi: Vec<f64> = (0..n_quad).map(|k| v[k] / sw[k]).collect();
        let norm = phi.iter().zip(&w).map(|(p, w)| p * p * w).sum::<f64>().sqrt();
        phi.iter_mut().for_each(|p| *p /= norm);
        let integral: f64 = phi.iter().zip(&w).map(|(p, w)| p * w).sum();
        let flip = if integral.abs() > 1e-12 { integral < 0.0 } else { phi[0] < 0.0 };
        if flip {
            phi.iter_mut().for_each(|p| *p = -*p);
        }
        lambdas.push(eig.eigenvalues[idx].max(0.0));
        phis.push(phi);
    }
    Ok(KlModes {
        lo,
        hi,
        lambdas,
        phis,
        settings: format!("kernel=exponential,sigma={sigma},eta={eta},support=[{lo},{hi}],n_quad={n_quad},quadrature=trapezoid"),
    })
}

/// `f̄(u) + Σ z_k √λ_k φ_k(u)` for a fixed coefficient vector `z`.
#[derive(Clone, Debug)]
pub struct KlFlux {
    pub mean: Flux,
    pub modes: KlModes,
    pub z: Vec<f64>,
}

impl KlFlux {
    pub fn new(mean: Flux, modes: KlModes, z: Vec<f64>) -> Result<Self> {
        if z.len() != modes.dim() {
            return Err(Error::Dimension {
                expected: modes.dim(),
                got: z.len(),
                context: "flux coefficients",
            });
        }
        Ok(KlFlux { mean, modes, z })
    }

    pub fn value(&self, u: f64) -> Result<f64> {
        if !self.modes.contains(u) {
            return Err(invalid(format!("{u} outside the flux support [{}, {}]", self.modes.lo, self.modes.hi)));
        }
        Ok(self.f(u))
    }
}

impl FluxFn for KlFlux {
    fn f(&self, u: f64) -> f64 {
        self.mean.f(u)
            + self
                .z
                .iter()
                .enumerate()
                .map(|(i, z)| z * self.modes.lambdas[i].sqrt() * self.modes.phi(i, u))
                .sum::<f64>()
    }

    fn df(&self, u: f64) -> f64 {
        let h = 1e-6;
        let (lo, hi) = (self.modes.lo, self.modes.hi);
        let (a, b) = ((u - h).max(lo), (u + h).min(hi));
        if b > a {
            (self.f(b) - self.f(a)) / (b - a)
        } else {
            self.mean.df(u)
        }
    }

    fn name(&self) -> String {
        format!("kl({}, s={})", self.mean.name(), self.modes.dim())
    }
}

/// `f̄(u) + Σ z_k √λ_k φ_k(u)` with `z` given per call.
pub fn kl_flux_value(modes: &KlModes, mean: &dyn FluxFn, u: f64, z: &[f64]) -> Result<f64> {
    if z.len() != modes.dim() {
        return Err(Error::Dimension {
            expected: modes.dim(),
            got: z.len(),
            context: "flux coefficients",
        });
    }
    if !modes.contains(u) {
        return Err(invalid(format!("{u} outside the flux support")));
    }
    Ok(mean.f(u) + z.iter().enumerate().map(|(i, z)| z * modes.lambdas[i].sqrt() * modes.phi(i, u)).sum::<f64>())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct B4Report {
    /// `sup_{u,z} |∂_u f(u, z)|`.
    pub speed_sup: f64,
    /// `max_i √λ_i (C0‖φ_i″‖ + (‖φ_i‖+1)/4 ‖φ_i′‖)`.
    pub mode_term: f64,
    /// Smallest admissible `C_f` for `σ_f = 0, 1/4, 1/2`.
    pub minimal_c_f: [(f64, f64); 3],
    pub proposed_c_f: f64,
    pub proposed_sigma_f: f64,
    pub pass: bool,
    pub provenance: Provenance,
}

/// Evaluates both decay conditions on `[−C0, C0] ∩ support` and tests the
/// proposed pair `(C_f, σ_f)`.
pub fn check_b4(modes: &KlModes, mean: &dyn FluxFn, c0: f64, c_f: f64, sigma_f: f64) -> B4Report {
    let lo = (-c0).max(modes.lo);
    let hi = c0.min(modes.hi);
    let s = modes.dim();
    let grid = modes.grid();
    let dtabs: Vec<Vec<f64>> = (0..s).map(|i| modes.dphi_table(i)).collect();
    // |f̄′(u) + Σ z_i b_i(u)| over z ∈ [0,1]^s is largest with z_i = 1 on the
    // b_i of one sign and 0 elsewhere
    let mut speed_sup: f64 = 0.0;
    for (k, &u) in grid.iter().enumerate() {
        if u < lo - SUPPORT_SLACK || u > hi + SUPPORT_SLACK {
            continue;
        }
        let a = mean.df(u);
        let (mut pos, mut neg) = (0.0, 0.0);
        for i in 0..s {
            let b = modes.lambdas[i].sqrt() * dtabs[i][k];
            if b > 0.0 {
                pos += b;
            } else {
                neg += b;
            }
        }
        speed_sup = speed_sup.max((a + pos).abs()).max((a + neg).abs());
    }
    if s == 0 {
        speed_sup = sweep_sup(|u| mean.df(u), lo, hi);
    }
    let mode_term = (0..s)
        .map(|i| {
            let (n0, n1, n2) = modes.norms(i, lo, hi);
            modes.lambdas[i].sqrt() * (c0 * n2 + (n0 + 1.0) / 4.0 * n1)
        })
        .fold(0.0, f64::max);
    let sf = (s.max(1)) as f64;
    let minimal = |sig: f64| (speed_sup / sf.powf(sig)).max(mode_term / sf.powf(2.0 * sig));
    let minimal_c_f = [(0.0, minimal(0.0)), (0.25, minimal(0.25)), (0.5, minimal(0.5))];
    B4Report {
        speed_sup,
        mode_term,
        minimal_c_f,
        proposed_c_f: c_f,
        proposed_sigma_f: sigma_f,
        pass: c_f > 1.0 && c_f >= minimal(sigma_f),
        provenance: Provenance::Swept,
    }
}

/// `m × dim` uniform samples in `[0, 1]^dim`.
pub fn sample_params(dim: usize, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn modes() -> KlModes {
        exp_cov_modes(1.0, 3.0, (0.0, 2.0), 10, 256).unwrap()
    }

    #[test]
    fn sigma_scaling() {
        let a = modes();
        let b = exp_cov_modes(2.0, 3.0, (0.0, 2.0), 10, 256).unwrap();
        for (x, y) in a.lambdas.iter().zip(&b.lambdas) {
            assert!((y / x - 4.0).abs() < 1e-8);
        }
    }

    #[test]
    fn orthonormal_and_sorted() {
        let m = modes();
        let g = m.gram();
        for i in 0..10 {
            for k in 0..10 {
                let want = if i == k { 1.0 } else { 0.0 };
                assert!((g[(i, k)] - want).abs() < 1e-4, "gram[{i},{k}] = {}", g[(i, k)]);
            }
        }
        assert!(m.lambdas.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn trace_identity() {
        let m = exp_cov_modes(1.0, 3.0, (0.0, 2.0), 50, 400).unwrap();
        let sum: f64 = m.lambdas.iter().sum();
        assert!((sum - 2.0).abs() / 2.0 < 0.05, "trace {sum}");
    }

    #[test]
    fn grid_convergence() {
        let a = exp_cov_modes(1.0, 3.0, (0.0, 2.0), 10, 256).unwrap();
        let b = exp_cov_modes(1.0, 3.0, (0.0, 2.0), 10, 512).unwrap();
        for (x, y) in a.lambdas.iter().zip(&b.lambdas) {
            assert!(((x - y) / y).abs() < 1e-3);
        }
    }

    #[test]
    fn flux_value_identities() {
        let m = modes().truncated(3);
        let burgers = Flux::Burgers;
        assert_eq!(kl_flux_value(&m, &burgers, 1.2, &[0.0; 3]).unwrap(), 0.72);
        let v = kl_flux_value(&m, &burgers, 1.2, &[1.0, 0.0, 0.0]).unwrap();
        assert!((v - 0.72 - m.lambdas[0].sqrt() * m.phi(0, 1.2)).abs() < 1e-15);
        assert!(kl_flux_value(&m, &burgers, 2.5, &[0.0; 3]).is_err());
        // affine in z
        let z1 = [0.2, 0.4, 0.1];
        let z2 = [0.3, 0.1, 0.5];
        let sum: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| a + b).collect();
        let f = |z: &[f64]| kl_flux_value(&m, &burgers, 0.7, z).unwrap();
        assert!((f(&sum) - f(&z1) - f(&z2) + f(&[0.0; 3])).abs() < 1e-14);
    }

    #[test]
    fn b4_without_modes() {
        let m = modes().truncated(0);
        let r = check_b4(&m, &Flux::Burgers, 2.0, 2.0, 0.0);
        assert!((r.speed_sup - 2.0).abs() < 1e-9);
        assert_eq!(r.mode_term, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn b4_mode_term_homogeneity() {
        let m = modes().truncated(4);
        let a = check_b4(&m, &Flux::Burgers, 2.0, 4.0, 0.0);
        let b = check_b4(&m.scaled(9.0), &Flux::Burgers, 2.0, 4.0, 0.0);
        assert!((b.mode_term / a.mode_term - 3.0).abs() < 1e-12);
    }

    #[test]
    fn samples() {
        let a = sample_params(3, 50, 7);
        assert_eq!(a, sample_params(3, 50, 7));
        assert!(a.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        let big = sample_params(2, 10_000, 1);
        for c in 0..2 {
            let mean = big.iter().map(|r| r[c]).sum::<f64>() / 1e4;
            assert!((mean - 0.5).abs() < 3.0 / (12.0f64 * 1e4).sqrt());
        }
    }

    #[test]
    fn csv_round_trip() {
        let m = modes().truncated(3);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("modes.csv");
        m.write_csv(&p).unwrap();
        let back = KlModes::read_csv(&p).unwrap();
        assert_eq!(back.lambdas, m.lambdas);
        assert_eq!(back.phis, m.phis);
        assert_eq!(back.settings, m.settings);
    }
}
