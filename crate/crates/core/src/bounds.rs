//! Closed-form error, size and generalization bounds, with the constants that
//! enter them kept alongside for auditing.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
pub use crate::flux::Provenance;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub value: f64,
    pub provenance: Provenance,
}

impl Constant {
    pub fn new(value: f64, provenance: Provenance) -> Self {
        Constant { value, provenance }
    }
}

/// A bound value together with every constant it was computed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub value: f64,
    pub formula: String,
    pub constants: BTreeMap<String, Constant>,
}

impl BoundReport {
    pub fn new(name: &str, value: f64, formula: &str) -> Self {
        BoundReport {
            name: name.into(),
            value,
            formula: formula.into(),
            constants: BTreeMap::new(),
        }
    }

    pub fn with(mut self, symbol: &str, value: f64, provenance: Provenance) -> Self {
        self.constants.insert(symbol.into(), Constant::new(value, provenance));
        self
    }

    fn get(&self, symbol: &str) -> Result<f64> {
        self.constants
            .get(symbol)
            .map(|c| c.value)
            .ok_or_else(|| Error::Config(format!("report {} lacks constant {symbol}", self.name)))
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<28} {:>14.6e}  {}", self.name, self.value, self.formula)?;
        for (k, c) in &self.constants {
            write!(f, "\n    {k:<10} = {:<14.8} ({})", c.value, c.provenance)?;
        }
        Ok(())
    }
}

pub fn flux_interp_bound(a: f64, b: f64, j: usize, f2sup: f64) -> Result<f64> {
    if j == 0 {
        return Err(invalid("J must be at least 1"));
    }
    Ok((b - a) * f2sup / j as f64)
}

pub fn mult_bound(m: u32, big_m: f64, big_n: f64) -> f64 {
    (big_m + big_n) / 2f64.powi(m as i32 + 1)
}

pub fn kuznetsov_bound(tv: f64, t: f64, speed: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("N must be at least 1"));
    }
    Ok(31.0 * tv * t * (1.0 + speed).powi(2) / (n as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    General,
    Kle,
    ParametricFlux,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::General => "general",
            Variant::Kle => "kle",
            Variant::ParametricFlux => "parametric_flux",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "general" => Ok(Variant::General),
            "kle" => Ok(Variant::Kle),
            "parametric_flux" => Ok(Variant::ParametricFlux),
            o => Err(format!("unknown variant '{o}' (general | kle | parametric_flux)")),
        }
    }
}

/// Inputs of the expressivity bounds. `f2sup` is `‖f″‖` (or `‖f̄″‖` for the
/// parametric flux), `f1sup` is `‖f′‖`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ExpressivityConstants {
    pub c_tv: Option<f64>,
    pub t: Option<f64>,
    pub c0: Option<f64>,
    pub f2sup: Option<f64>,
    pub f1sup: Option<f64>,
    pub c_f: Option<f64>,
    pub sigma_f: Option<f64>,
    pub s: Option<usize>,
}

fn need<T: Copy>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing constant {name}")))
}

pub fn expressivity_bound(variant: Variant, k: &ExpressivityConstants, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("N must be at least 1"));
    }
    let c_tv = need(k.c_tv, "C_TV")?;
    let t = need(k.t, "T")?;
    let c0 = need(k.c0, "C0")?;
    let f2 = need(k.f2sup, "|f''|")?;
    let sq = (n as f64).sqrt();
    Ok(match variant {
        Variant::General | Variant::Kle => {
            let f1 = need(k.f1sup, "|f'|")?;
            let core = 2.0 * c_tv * t * (c0 * f2 + 18.0 * (1.0 + f1).powi(2));
            if variant == Variant::General {
                (core + 1.0) / sq
            } else {
                core / sq
            }
        }
        Variant::ParametricFlux => {
            let c_f = need(k.c_f, "C_f")?;
            let sigma_f = need(k.sigma_f, "sigma_f")?;
            let s = need(k.s, "s")? as f64;
            let speed = c_f * s.powf(sigma_f);
            (2.0 * c_tv * t * (c0 * f2 + 19.0 * (1.0 + speed).powi(2)) + 1.0) / sq
        }
    })
}

pub fn expressivity_report(variant: Variant, k: &ExpressivityConstants, n: usize, provenance: &BTreeMap<String, Provenance>) -> Result<BoundReport> {
    let value = expressivity_bound(variant, k, n)?;
    let formula = match variant {
        Variant::General => "[2 C_TV T (C0 |f''| + 18 (1+|f'|)^2) + 1] / sqrt(N)",
        Variant::Kle => "2 C_TV T (C0 |f''| + 18 (1+|f'|)^2) / sqrt(N)",
        Variant::ParametricFlux => "[2 C_TV T (C0 |f''| + 19 (1+C_f s^sigma_f)^2) + 1] / sqrt(N)",
    };
    let p = |name: &str| provenance.get(name).copied().unwrap_or(Provenance::User);
    let name = format!("expressivity_{}", variant.name());
    let mut r = BoundReport::new(&name, value, formula).with("N", n as f64, Provenance::User);
    for (name, v) in [
        ("C_TV", k.c_tv),
        ("T", k.t),
        ("C0", k.c0),
        ("|f''|", k.f2sup),
        ("|f'|", k.f1sup),
        ("C_f", k.c_f),
        ("sigma_f", k.sigma_f),
        ("s", k.s.map(|s| s as f64)),
    ] {
        if let Some(v) = v {
            r = r.with(name, v, p(name));
        }
    }
    Ok(r)
}

/// Size constants of the initial-data networks, needed for the general variant.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct A3Constants {
    pub c_b: f64,
    pub c_l: f64,
    pub sigma_l: f64,
    pub eta_l: f64,
    pub c_w: f64,
    pub sigma_w: f64,
    pub eta_w: f64,
    pub sigma_m: f64,
    pub eta_m: f64,
}

/// One right-hand side of a size bound. Asymptotic entries carry no value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeEntry {
    pub formula: String,
    pub value: Option<f64>,
    pub assertable: bool,
}

impl SizeEntry {
    fn exact(formula: &str, value: f64) -> Self {
        SizeEntry {
            formula: formula.into(),
            value: Some(value),
            assertable: true,
        }
    }

    fn asymptotic(formula: &str) -> Self {
        SizeEntry {
            formula: formula.into(),
            value: None,
            assertable: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub connectivity: SizeEntry,
    pub depth: SizeEntry,
    pub width: SizeEntry,
    pub magnitude: SizeEntry,
}

/// Problem data entering the size bounds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SizeInputs {
    pub b_minus_a: f64,
    pub t: f64,
    pub f1sup: f64,
    pub c0: f64,
    pub f_at_minus_c0: f64,
    pub f_at_c0: f64,
}

pub fn complexity_report(variant: Variant, d: usize, n: usize, size: &SizeInputs, a3: Option<&A3Constants>) -> Result<ComplexityReport> {
    let nf = n as f64;
    let df = d as f64;
    let magnitude = |c_b: f64| {
        [
            c_b,
            size.c0 + size.f_at_minus_c0.abs(),
            size.c0 + size.f_at_c0.abs(),
            2.0 * size.f1sup,
            1.0 / (2.0 * size.f1sup),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    };
    let mag_formula = "max{C_B, C0+|f(-C0)|, C0+|f(C0)|, 2|f'|, 1/(2|f'|)}";
    let scale = 2.0 * size.b_minus_a / (size.t * size.f1sup);
    match variant {
        Variant::Kle => {
            let c_b = a3.map(|a| a.c_b).unwrap_or(0.0);
            Ok(ComplexityReport {
                connectivity: SizeEntry::asymptotic("O(d N + N^{5/2})"),
                depth: SizeEntry::exact("N + 1", nf + 1.0),
                width: SizeEntry::exact("max{1+d, 2(b-a) N^{3/2} / (T |f'|)}", (1.0 + df).max(scale * nf.powf(1.5))),
                magnitude: SizeEntry::exact(mag_formula, magnitude(c_b)),
            })
        }
        Variant::General => {
            let a = a3.ok_or_else(|| Error::Config("general variant needs initial-data size constants".into()))?;
            Ok(ComplexityReport {
                connectivity: SizeEntry::asymptotic("O(d^sigma_M N^{1+eta_M/2} + N^{5/2})"),
                depth: SizeEntry::exact("C_L d^sigma_L N^{eta_L/2} + N", a.c_l * df.powf(a.sigma_l) * nf.powf(a.eta_l / 2.0) + nf),
                width: SizeEntry::exact(
                    "2(b-a)/(T |f'|) max{1 + C_W d^sigma_W N^{1+eta_W/2}, N^{3/2}}",
                    scale * (1.0 + a.c_w * df.powf(a.sigma_w) * nf.powf(1.0 + a.eta_w / 2.0)).max(nf.powf(1.5)),
                ),
                magnitude: SizeEntry::exact(mag_formula, magnitude(a.c_b)),
            })
        }
        Variant::ParametricFlux => Ok(ComplexityReport {
            connectivity: SizeEntry::asymptotic("O(gamma-dependent); measured only"),
            depth: SizeEntry::asymptotic("O(gamma-dependent); measured only"),
            width: SizeEntry::asymptotic("O(gamma-dependent); measured only"),
            magnitude: SizeEntry::asymptotic("O(gamma-dependent); measured only"),
        }),
    }
}

/// `⌈width/r⌉^k`.
pub fn covering_bound(width: f64, r: f64, k: u32) -> Result<u128> {
    if !(r > 0.0) {
        return Err(invalid(format!("covering radius must be positive, got {r}")));
    }
    let base = (width / r).ceil().max(1.0);
    if base > u64::MAX as f64 {
        return Err(Error::TooLarge(format!("covering base {base}")));
    }
    (base as u128)
        .checked_pow(k)
        .ok_or_else(|| Error::TooLarge(format!("covering number {base}^{k}")))
}

/// `L·R^{L−1}·(W+1)^L`.
pub fn param_lipschitz_bound(l: u32, r: f64, w: u32) -> f64 {
    l as f64 * r.powi(l as i32 - 1) * (w as f64 + 1.0).powi(l as i32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapForm {
    Sharp,
    Simplified,
}

fn check_gap_args(beta_minus_alpha: f64, r: f64, m: usize) -> Result<()> {
    if r < 1.0 {
        return Err(invalid(format!("the gap bound needs R >= 1, got {r}")));
    }
    if beta_minus_alpha < 1.0 {
        return Err(invalid(format!("the gap bound needs beta - alpha >= 1, got {beta_minus_alpha}")));
    }
    if m == 0 {
        return Err(invalid("the gap bound needs M >= 1"));
    }
    Ok(())
}

pub fn gen_gap_bound(beta_minus_alpha: f64, b_minus_a: f64, l: u32, w: u32, m: usize, r: f64, form: GapForm) -> Result<f64> {
    check_gap_args(beta_minus_alpha, r, m)?;
    let (lf, wf, mf) = (l as f64, w as f64 + 1.0, m as f64);
    let pre = 12.0 * beta_minus_alpha * b_minus_a * lf / mf.sqrt();
    Ok(match form {
        GapForm::Sharp => pre * wf * (2.0 * mf.powf(1.0 / (3.0 * lf)) * r * wf).ln().sqrt(),
        GapForm::Simplified => pre * wf * wf * (2.0 * mf * r).ln().sqrt(),
    })
}

/// Intermediate stages of the gap derivation, each dominating the previous:
/// the covering-number form with `k = L(W+1)²` parameters, the form after
/// bounding the logarithm, and the sharp bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapChain {
    pub covering_form: f64,
    pub log_form: f64,
    pub sharp: f64,
}

pub fn gen_gap_chain(beta_minus_alpha: f64, b_minus_a: f64, l: u32, w: u32, m: usize, r: f64) -> Result<GapChain> {
    check_gap_args(beta_minus_alpha, r, m)?;
    let (lf, wf, mf) = (l as f64, w as f64 + 1.0, m as f64);
    let e = std::f64::consts::E;
    let lstar = param_lipschitz_bound(l, r, w);
    let k = lf * wf * wf;
    let pre = 4.0 * beta_minus_alpha * b_minus_a / mf.sqrt();
    let covering_form = pre * (e * (k * (4.0 * r * r * mf * lstar * lstar).ln()).max(1.0)).sqrt();
    let log_term = (2.0 * mf.powf(1.0 / (3.0 * lf)) * r * wf).ln();
    let log_form = pre * (e * 3.0 * lf * lf * wf * wf * log_term).sqrt();
    let sharp = 12.0 * beta_minus_alpha * b_minus_a * lf * wf * log_term.sqrt() / mf.sqrt();
    Ok(GapChain {
        covering_form,
        log_form,
        sharp,
    })
}

pub fn gen_gap_report(beta_minus_alpha: f64, b_minus_a: f64, l: u32, w: u32, m: usize, r: f64, form: GapForm) -> Result<BoundReport> {
    let value = gen_gap_bound(beta_minus_alpha, b_minus_a, l, w, m, r, form)?;
    let (name, formula) = match form {
        GapForm::Sharp => ("gen_gap_sharp", "12 (beta-alpha)(b-a) L (W+1) sqrt(ln(2 M^{1/(3L)} R (W+1))) / sqrt(M)"),
        GapForm::Simplified => ("gen_gap_simplified", "12 (beta-alpha)(b-a) L (W+1)^2 sqrt(ln(2 M R)) / sqrt(M)"),
    };
    Ok(BoundReport::new(name, value, formula)
        .with("beta-alpha", beta_minus_alpha, Provenance::User)
        .with("b-a", b_minus_a, Provenance::User)
        .with("L", l as f64, Provenance::User)
        .with("W", w as f64, Provenance::User)
        .with("M", m as f64, Provenance::User)
        .with("R", r, Provenance::User))
}

pub fn cumulative_gen_bound(train_err_estimate: f64, gap: f64) -> Result<f64> {
    if train_err_estimate < 0.0 || gap < 0.0 {
        return Err(invalid("training error and gap must be nonnegative"));
    }
    Ok(train_err_estimate + gap)
}

/// Recomputes a report's value from its listed constants.
pub fn recompute(report: &BoundReport) -> Result<f64> {
    match report.name.as_str() {
        "kuznetsov" => kuznetsov_bound(report.get("TV")?, report.get("T")?, report.get("F")?, report.get("N")? as usize),
        "flux_interp" => flux_interp_bound(report.get("a")?, report.get("b")?, report.get("J")? as usize, report.get("|f''|")?),
        "mult" => Ok(mult_bound(report.get("m")? as u32, report.get("M")?, report.get("N")?)),
        "gen_gap_sharp" | "gen_gap_simplified" => {
            let form = if report.name == "gen_gap_sharp" { GapForm::Sharp } else { GapForm::Simplified };
            gen_gap_bound(
                report.get("beta-alpha")?,
                report.get("b-a")?,
                report.get("L")? as u32,
                report.get("W")? as u32,
                report.get("M")? as usize,
                report.get("R")?,
                form,
            )
        }
        name if name.starts_with("expressivity_") => {
            let variant: Variant = name["expressivity_".len()..].parse().map_err(Error::Config)?;
            let opt = |k: &str| report.constants.get(k).map(|c| c.value);
            let k = ExpressivityConstants {
                c_tv: opt("C_TV"),
                t: opt("T"),
                c0: opt("C0"),
                f2sup: opt("|f''|"),
                f1sup: opt("|f'|"),
                c_f: opt("C_f"),
                sigma_f: opt("sigma_f"),
                s: opt("s").map(|s| s as usize),
            };
            expressivity_bound(variant, &k, report.get("N")? as usize)
        }
        other => Err(Error::Config(format!("no recomputation rule for {other}"))),
    }
}
