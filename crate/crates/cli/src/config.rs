//! `key = value` run configuration with a fixed schema.
//!
//! Values are resolved in order: schema default, full-scale default (with
//! `--full-scale`), config file, `--set` overrides, `--seed`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub full_scale: Option<&'static str>,
    pub doc: &'static str,
}

const fn key(name: &'static str, default: &'static str, doc: &'static str) -> Key {
    Key {
        name,
        default,
        full_scale: None,
        doc,
    }
}

const fn key_fs(name: &'static str, default: &'static str, full_scale: &'static str, doc: &'static str) -> Key {
    Key {
        name,
        default,
        full_scale: Some(full_scale),
        doc,
    }
}

pub const SCHEMA: &[Key] = &[
    key("seed", "0", "base seed for every random draw"),
    // emulator
    key("emulator", "lxf", "lxf | parametric_flux"),
    key("a", "0", "left end of the spatial domain"),
    key("b", "1", "right end of the spatial domain"),
    key("T", "0.1", "final time"),
    key("N", "16", "number of time steps"),
    key("flux", "burgers", "zero | burgers | linear:<speed> (mean flux for parametric_flux)"),
    key("init", "sine", "sine | constant:<value>"),
    key("d", "3", "number of initial-data coefficients for init=sine"),
    key("boundary", "periodic", "periodic | outflow"),
    key("K", "auto", "flux-interpolant segments; auto = ceil(sqrt(N))"),
    key("c0", "auto", "state bound C0; auto = bound of the initial data"),
    key("store_mode", "unrolled", "unrolled | shared_block"),
    key("network", "none", "verify: emulator JSON to check instead of a freshly built one"),
    // parametric flux and kl-modes
    key("pflux.s", "3", "number of flux modes"),
    key("pflux.sigma", "1", "covariance amplitude"),
    key("pflux.eta", "3", "covariance length scale"),
    key("pflux.support", "0,2", "state interval carrying the modes"),
    key("pflux.quadrature", "256", "quadrature points of the eigenproblem"),
    key("pflux.c_f", "20", "proposed decay constant C_f"),
    key("pflux.sigma_f", "0", "proposed decay exponent sigma_f"),
    // verify
    key("verify.samples", "100", "random parameters for the equivalence check"),
    key("verify.tol", "1e-9", "max-abs tolerance of the equivalence check"),
    key("verify.n_list", "8,16,32", "N values of the convergence sweep (empty disables it)"),
    key("verify.ref_cells", "4096", "cells of the reference solution"),
    key("verify.ref_samples", "20", "random parameters of the convergence sweep"),
    // fv-solve
    key("fv.scheme", "muscl", "lxf | muscl"),
    key("fv.numerical_flux", "rusanov", "rusanov | godunov (muscl only)"),
    key("fv.cells", "1024", "number of cells"),
    key("fv.cfl", "0.4", "CFL number"),
    key("fv.y", "auto", "comma-separated initial-data coefficients; auto = 0.5 each"),
    // bounds
    key("bounds.J", "16", "flux_interp: interpolation knots"),
    key("bounds.m", "4", "mult: depth parameter"),
    key("bounds.mult_M", "1", "mult: first factor bound"),
    key("bounds.mult_N", "1", "mult: second factor bound"),
    key("bounds.R", "10", "gen_gap: parameter bound R"),
    key("bounds.range", "2", "gen_gap: target range beta - alpha"),
    // training data
    key("train.problem", "fixed_flux", "fixed_flux | parametric_flux"),
    key("train.dim", "4", "parameter dimension"),
    key("train.M", "200", "training samples"),
    key("train.test_M", "auto", "test samples; auto = train.M"),
    key("train.repeat", "0", "repeat index mixed into the run seeds"),
    key("data.T", "0.1", "final time of the training data"),
    key("data.cells", "1024", "solver cells of the training data"),
    key("data.cfl", "0.4", "solver CFL number of the training data"),
    key("data.grid_points", "100", "output grid points"),
    key("data.cache", "none", "dataset cache directory"),
    // optimizer
    key("train.depth", "4", "hidden layers"),
    key("train.width", "20", "hidden width"),
    key_fs("train.epochs", "2000", "10000", "Adam epochs"),
    key("train.lr", "1e-3", "Adam step size"),
    key("train.reg_lambda", "0", "weight of |theta|^2"),
    key("train.batch_size", "full", "mini-batch size or full"),
    key("train.discrepancy", "grid_sum", "grid_sum | weighted"),
    // experiments
    key("experiment.kind", "m_sweep", "dimension_sweep | m_sweep | arch_search"),
    key("experiment.dims", "1,2,4,8", "dimension_sweep: parameter dimensions"),
    key("experiment.M", "200", "dimension_sweep and arch_search: samples"),
    key_fs("experiment.M_list", "25,50,100,200", "25,50,100,200,400,800", "m_sweep: sample counts"),
    key("experiment.d", "8", "m_sweep: parameter dimension (arch_search uses train.dim)"),
    key_fs("experiment.repeats", "5", "25", "runs per setting"),
    key("experiment.depths", "2,4,6,8", "arch_search: hidden layers"),
    key("experiment.widths", "5,10,15,20", "arch_search: hidden widths"),
    key("experiment.train_fraction", "0.8", "arch_search: training share of the data"),
];

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// The resolved configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn lookup(name: &str) -> Option<&'static Key> {
    SCHEMA.iter().find(|k| k.name == name)
}

fn split_pair(line: &str) -> Result<(&str, &str), ConfigError> {
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("expected key=value, got '{line}'")))?;
    Ok((k.trim(), v.trim()))
}

impl Config {
    pub fn defaults(full_scale: bool) -> Self {
        let values = SCHEMA
            .iter()
            .map(|k| {
                let v = if full_scale { k.full_scale.unwrap_or(k.default) } else { k.default };
                (k.name.to_string(), v.to_string())
            })
            .collect();
        Config { values }
    }

    pub fn set(&mut self, name: &str, value: &str) -> Result<(), ConfigError> {
        if lookup(name).is_none() {
            return err(format!("unknown config key '{name}'"));
        }
        self.values.insert(name.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a config file: one `key = value` per line, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_pair(line).map_err(|e| ConfigError(format!("{origin}:{}: {e}", i + 1)))?;
            self.set(k, v).map_err(|e| ConfigError(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn apply_override(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = split_pair(pair)?;
        self.set(k, v)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn raw(&self, name: &str) -> &str {
        self.values.get(name).map(String::as_str).unwrap_or_else(|| panic!("{name} is not in the schema"))
    }

    pub fn get<T: FromStr>(&self, name: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let raw = self.raw(name);
        raw.parse().map_err(|e| ConfigError(format!("{name} = '{raw}': {e}")))
    }

    /// `None` when the value is `auto`, `none`, `full` or empty.
    pub fn opt<T: FromStr>(&self, name: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.raw(name) {
            "auto" | "none" | "full" | "" => Ok(None),
            _ => self.get(name).map(Some),
        }
    }

    pub fn list<T: FromStr>(&self, name: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let raw = self.raw(name);
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| ConfigError(format!("{name} = '{raw}': {e}"))))
            .collect()
    }

    pub fn pair(&self, name: &str) -> Result<(f64, f64), ConfigError> {
        match self.list::<f64>(name)?.as_slice() {
            &[lo, hi] if lo < hi => Ok((lo, hi)),
            _ => err(format!("{name} must be 'lo,hi' with lo < hi")),
        }
    }
}

/// The schema as a `key = default  # doc` listing.
pub fn schema_text() -> String {
    let mut s = String::new();
    for k in SCHEMA {
        let fs = k.full_scale.map(|v| format!(" (full scale: {v})")).unwrap_or_default();
        s.push_str(&format!("{} = {}  # {}{}\n", k.name, k.default, k.doc, fs));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let mut c = Config::defaults(true);
        assert_eq!(c.raw("train.epochs"), "10000");
        c.apply_text("# comment\nN = 8   # trailing\n\ntrain.epochs=5\n", "t").unwrap();
        c.apply_override("N=4").unwrap();
        assert_eq!(c.get::<usize>("N").unwrap(), 4);
        assert_eq!(c.get::<usize>("train.epochs").unwrap(), 5);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut c = Config::defaults(false);
        assert!(c.apply_override("nope=1").is_err());
        assert!(c.apply_text("N 4", "t").is_err());
        c.set("N", "x").unwrap();
        assert!(c.get::<usize>("N").is_err());
    }

    #[test]
    fn lists_and_options() {
        let c = Config::defaults(false);
        assert_eq!(c.list::<usize>("experiment.dims").unwrap(), vec![1, 2, 4, 8]);
        assert_eq!(c.opt::<usize>("K").unwrap(), None);
        assert_eq!(c.pair("pflux.support").unwrap(), (0.0, 2.0));
    }

    #[test]
    fn schema_names_unique() {
        let mut names: Vec<_> = SCHEMA.iter().map(|k| k.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), SCHEMA.len());
    }
}
