//! Output files: JSON envelopes, CSV and two-column plot data, all stamped
//! with the configuration echo, the constants fingerprint and versions.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

/// Metadata stamped into every output.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub cli_version: &'static str,
    pub core_version: &'static str,
    pub constants_sha256: String,
    pub config: BTreeMap<String, String>,
}

impl Meta {
    pub fn new(config: BTreeMap<String, String>, constants_sha256: String) -> Self {
        Self {
            cli_version: env!("CARGO_PKG_VERSION"),
            core_version: ballmag::VERSION,
            constants_sha256,
            config,
        }
    }

    fn header(&self) -> String {
        let mut s = format!(
            "# ballmag-cli {} / ballmag {}\n# constants_sha256 {}\n",
            self.cli_version, self.core_version, self.constants_sha256
        );
        for (k, v) in &self.config {
            let _ = writeln!(s, "# config {k}={v}");
        }
        s
    }
}

/// Writes into one output directory.
pub struct Writer {
    pub dir: PathBuf,
    pub meta: Meta,
}

impl Writer {
    pub fn new(dir: &Path, meta: Meta) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            meta,
        })
    }

    fn put(&self, name: &str, body: &str) -> Result<PathBuf> {
        let p = self.dir.join(name);
        std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    /// `{meta, partial, error, data}`.
    pub fn json<T: Serialize>(&self, name: &str, data: &T, partial: bool, error: Option<&str>) -> Result<PathBuf> {
        let v = json!({
            "meta": self.meta,
            "partial": partial,
            "error": error,
            "data": data,
        });
        self.put(name, &(serde_json::to_string_pretty(&v)? + "\n"))
    }

    /// CSV body (header row first) behind `#` metadata lines.
    pub fn csv(&self, name: &str, body: &str, partial: bool) -> Result<PathBuf> {
        let mut s = self.meta.header();
        let _ = writeln!(s, "# partial {partial}");
        s.push_str(body);
        self.put(name, &s)
    }

    /// Two whitespace-separated columns.
    pub fn dat(&self, name: &str, columns: (&str, &str), points: &[(f64, f64)], partial: bool) -> Result<PathBuf> {
        let mut s = self.meta.header();
        let _ = writeln!(s, "# partial {partial}");
        let _ = writeln!(s, "# {} {}", columns.0, columns.1);
        for (x, y) in points {
            let _ = writeln!(s, "{x:.12e} {y:.12e}");
        }
        self.put(name, &s)
    }

    pub fn text(&self, name: &str, body: &str) -> Result<PathBuf> {
        let mut s = self.meta.header();
        s.push_str(body);
        self.put(name, &s)
    }
}

/// One numeric check; `gated` checks decide the exit code.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub gated: bool,
    pub pass: bool,
}

impl Check {
    pub fn close(name: &str, value: f64, reference: f64, tolerance: f64, gated: bool) -> Self {
        Self {
            name: name.into(),
            value,
            reference,
            tolerance,
            gated,
            pass: (value - reference).abs() <= tolerance,
        }
    }

    /// value ≤ bound
    pub fn at_most(name: &str, value: f64, bound: f64, gated: bool) -> Self {
        Self {
            name: name.into(),
            value,
            reference: bound,
            tolerance: 0.0,
            gated,
            pass: value <= bound,
        }
    }

    pub fn flag(name: &str, ok: bool, gated: bool) -> Self {
        Self {
            name: name.into(),
            value: f64::from(u8::from(ok)),
            reference: 1.0,
            tolerance: 0.0,
            gated,
            pass: ok,
        }
    }
}

pub fn checks_table(checks: &[Check]) -> String {
    let mut s = String::new();
    for c in checks {
        let status = match (c.pass, c.gated) {
            (true, _) => "ok",
            (false, true) => "FAIL",
            (false, false) => "off (informational)",
        };
        let _ = writeln!(
            s,
            "{:<34} {:>20.12} {:>20.12} {:>9.1e}  {status}",
            c.name, c.value, c.reference, c.tolerance
        );
    }
    s
}

pub fn gates_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass || !c.gated)
}
