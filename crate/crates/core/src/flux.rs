//! Scalar flux functions with derivative information.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Where a constant came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    Swept,
    User,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::ClosedForm => "closed_form",
            Provenance::Swept => "swept",
            Provenance::User => "user",
        })
    }
}

pub const SWEEP_POINTS: usize = 10_000;

/// Maximum of `|g|` over a uniform grid of `SWEEP_POINTS + 1` points.
pub fn sweep_sup(g: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let n = SWEEP_POINTS;
    (0..=n)
        .map(|k| g(lo + (hi - lo) * k as f64 / n as f64).abs())
        .fold(0.0, f64::max)
}

pub trait FluxFn: Send + Sync {
    fn f(&self, u: f64) -> f64;

    fn df(&self, u: f64) -> f64 {
        let h = 1e-6 * (1.0 + u.abs());
        (self.f(u + h) - self.f(u - h)) / (2.0 * h)
    }

    fn d2f(&self, u: f64) -> f64 {
        let h = 1e-4 * (1.0 + u.abs());
        (self.f(u + h) - 2.0 * self.f(u) + self.f(u - h)) / (h * h)
    }

    /// Minimizer of a convex flux; `None` when the flux is not known to be convex.
    fn convex_minimizer(&self) -> Option<f64> {
        None
    }

    fn sup_df(&self, lo: f64, hi: f64) -> (f64, Provenance) {
        (sweep_sup(|u| self.df(u), lo, hi), Provenance::Swept)
    }

    fn sup_d2f(&self, lo: f64, hi: f64) -> (f64, Provenance) {
        (sweep_sup(|u| self.d2f(u), lo, hi), Provenance::Swept)
    }

    fn name(&self) -> String;
}

/// Closed-form fluxes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flux {
    Zero,
    Linear { speed: f64 },
    /// `f(u) = u²/2`.
    Burgers,
}

impl FluxFn for Flux {
    fn f(&self, u: f64) -> f64 {
        match *self {
            Flux::Zero => 0.0,
            Flux::Linear { speed } => speed * u,
            Flux::Burgers => 0.5 * u * u,
        }
    }

    fn df(&self, u: f64) -> f64 {
        match *self {
            Flux::Zero => 0.0,
            Flux::Linear { speed } => speed,
            Flux::Burgers => u,
        }
    }

    fn d2f(&self, _u: f64) -> f64 {
        match *self {
            Flux::Burgers => 1.0,
            _ => 0.0,
        }
    }

    fn convex_minimizer(&self) -> Option<f64> {
        match *self {
            Flux::Burgers => Some(0.0),
            // linear fluxes are convex; the Godunov formula needs no minimizer
            // in that case but any point works
            Flux::Linear { .. } | Flux::Zero => Some(0.0),
        }
    }

    fn sup_df(&self, lo: f64, hi: f64) -> (f64, Provenance) {
        let v = match *self {
            Flux::Zero => 0.0,
            Flux::Linear { speed } => speed.abs(),
            Flux::Burgers => lo.abs().max(hi.abs()),
        };
        (v, Provenance::ClosedForm)
    }

    fn sup_d2f(&self, _lo: f64, _hi: f64) -> (f64, Provenance) {
        (self.d2f(0.0), Provenance::ClosedForm)
    }

    fn name(&self) -> String {
        match *self {
            Flux::Zero => "zero".into(),
            Flux::Linear { speed } => format!("linear({speed})"),
            Flux::Burgers => "burgers".into(),
        }
    }
}

impl std::str::FromStr for Flux {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "zero" => Ok(Flux::Zero),
            "burgers" => Ok(Flux::Burgers),
            other => other
                .strip_prefix("linear:")
                .and_then(|v| v.parse().ok())
                .map(|speed| Flux::Linear { speed })
                .ok_or_else(|| format!("unknown flux '{other}' (zero | burgers | linear:<speed>)")),
        }
    }
}

/// Flux given by an arbitrary closure; derivatives by finite differences.
#[derive(Clone)]
pub struct ClosureFlux {
    pub label: String,
    pub func: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl ClosureFlux {
    pub fn new(label: impl Into<String>, func: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ClosureFlux {
            label: label.into(),
            func: Arc::new(func),
        }
    }
}

impl FluxFn for ClosureFlux {
    fn f(&self, u: f64) -> f64 {
        (self.func)(u)
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}
