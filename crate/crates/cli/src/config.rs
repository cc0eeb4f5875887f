//! Flat key=value run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ballmag::ballsolver::{BasisSize, SolverConfig};
use ballmag::degennes::GridStudy;
use ballmag::grusin::TensorStudy;

/// Keys with their default values. Every key is echoed into the outputs.
const DEFAULTS: &[(&str, &str)] = &[
    ("out_dir", "ballmag-out"),
    ("dg_length", "12"),
    ("dg_points", "2401"),
    ("dg_levels", "3"),
    ("mont_half_width", "8"),
    ("mont_points", "1601"),
    ("mont_levels", "3"),
    ("tensor_tau_length", "12"),
    ("tensor_rho_half_width", "9"),
    ("tensor_h", "0.06"),
    ("tensor_levels", "3"),
    ("spacing", "0.05"),
    ("levels", "3"),
    ("basis_shifts", "5"),
    ("basis_modes", "2"),
    ("basis_tangential", "24"),
    ("enlarged_shifts", "7"),
    ("enlarged_modes", "3"),
    ("enlarged_tangential", "30"),
    ("b_list", "300,1000,3000,10000,30000"),
    ("window", "12"),
    ("kappa_list", "15,20,30"),
    ("hc3_tol", "1e-9"),
    ("mono_starts", "1000,3000,10000,30000"),
    ("mono_span", "2"),
    ("mono_step", "0.25"),
    ("band_from", "10000"),
    ("band_slack", "0.05"),
    ("threads", "1"),
];

/// Resolved key=value pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    pub quick: bool,
}

/// Typed view of a [`RunConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub quick: bool,
    pub out_dir: PathBuf,
    pub degennes: GridStudy,
    pub montgomery: GridStudy,
    pub tensor: TensorStudy,
    pub solver: SolverConfig,
    pub b_list: Vec<f64>,
    pub window: i64,
    pub kappa_list: Vec<f64>,
    pub hc3_tol: f64,
    pub mono_starts: Vec<f64>,
    pub mono_span: f64,
    pub mono_step: f64,
    pub band_from: f64,
    pub band_slack: f64,
    pub threads: usize,
}

impl RunConfig {
    pub fn defaults() -> Self {
        Self {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            quick: false,
        }
    }

    /// Apply one `key=value` assignment.
    pub fn set(&mut self, assignment: &str) -> Result<(), String> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{assignment}`"))?;
        let (k, v) = (k.trim(), v.trim());
        if !self.values.contains_key(k) {
            return Err(format!("unknown configuration key `{k}`"));
        }
        self.values.insert(k.to_string(), v.to_string());
        Ok(())
    }

    /// Read a file of `key = value` lines; `#` starts a comment.
    pub fn load_file(&mut self, path: &Path) -> Result<(), String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.set(line).map_err(|e| format!("{}:{}: {e}", path.display(), n + 1))?;
        }
        Ok(())
    }

    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = self.values.clone();
        m.insert("quick".into(), self.quick.to_string());
        m
    }

    fn raw(&self, k: &str) -> &str {
        &self.values[k]
    }

    fn real(&self, k: &str) -> Result<f64, String> {
        let v: f64 = self.raw(k).parse().map_err(|_| format!("`{k}` must be a number"))?;
        if !(v > 0.0) || !v.is_finite() {
            return Err(format!("`{k}` must be positive, got {v}"));
        }
        Ok(v)
    }

    fn count(&self, k: &str) -> Result<usize, String> {
        let v: usize = self
            .raw(k)
            .parse()
            .map_err(|_| format!("`{k}` must be a positive integer"))?;
        if v == 0 {
            return Err(format!("`{k}` must be positive"));
        }
        Ok(v)
    }

    fn list(&self, k: &str) -> Result<Vec<f64>, String> {
        let v = self
            .raw(k)
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| *x > 0.0 && x.is_finite())
                    .ok_or_else(|| format!("`{k}` must be a comma-separated list of positive numbers"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if v.is_empty() {
            return Err(format!("`{k}` is empty"));
        }
        Ok(v)
    }

    pub fn settings(&self) -> Result<Settings, String> {
        let mut degennes = GridStudy {
            length: self.real("dg_length")?,
            points: self.count("dg_points")?,
            levels: self.count("dg_levels")?,
        };
        let mut montgomery = GridStudy {
            length: self.real("mont_half_width")?,
            points: self.count("mont_points")?,
            levels: self.count("mont_levels")?,
        };
        let mut tensor = TensorStudy {
            tau_length: self.real("tensor_tau_length")?,
            rho_half_width: self.real("tensor_rho_half_width")?,
            h: self.real("tensor_h")?,
            levels: self.count("tensor_levels")?,
        };
        let mut solver = SolverConfig {
            spacing: self.real("spacing")?,
            levels: self.count("levels")?,
            basis: BasisSize {
                shifts: self.count("basis_shifts")?,
                modes: self.count("basis_modes")?,
                tangential: self.count("basis_tangential")?,
            },
            enlarged: BasisSize {
                shifts: self.count("enlarged_shifts")?,
                modes: self.count("enlarged_modes")?,
                tangential: self.count("enlarged_tangential")?,
            },
        };
        if self.quick {
            degennes = degennes.quick();
            montgomery = montgomery.quick();
            tensor = tensor.quick();
            solver = SolverConfig::quick();
        }
        let mut b_list = self.list("b_list")?;
        b_list.sort_by(|a, b| a.total_cmp(b));
        Ok(Settings {
            quick: self.quick,
            out_dir: PathBuf::from(self.raw("out_dir")),
            degennes,
            montgomery,
            tensor,
            solver,
            b_list,
            window: self.count("window")? as i64,
            kappa_list: self.list("kappa_list")?,
            hc3_tol: self.real("hc3_tol")?,
            mono_starts: self.list("mono_starts")?,
            mono_span: self.real("mono_span")?,
            mono_step: self.real("mono_step")?,
            band_from: self.real("band_from")?,
            band_slack: self.real("band_slack")?,
            threads: self.count("threads")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let s = RunConfig::defaults().settings().unwrap();
        assert_eq!(s.b_list.len(), 5);
        assert_eq!(s.window, 12);
    }

    #[test]
    fn overrides_and_errors() {
        let mut c = RunConfig::defaults();
        c.set("window = 5").unwrap();
        assert_eq!(c.settings().unwrap().window, 5);
        assert!(c.set("nonsense=1").is_err());
        assert!(c.set("window").is_err());
        c.set("spacing=-1").unwrap();
        assert!(c.settings().is_err());
    }
}
