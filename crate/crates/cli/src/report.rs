//! Report written by `analyze` and `verify`, plus the flat Ω sample table.

use std::path::Path;

use anyhow::{Context, Result};
use liftlab_core::conformal::ConformalReport;
use liftlab_core::suites::SuiteReport;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub engine_version: String,
    pub command: String,
    pub perturb_closed_form: bool,
    pub config: RunConfig,
    /// One entry per (manifold, field, coefficient set); base-only fields carry no coefficients.
    pub analyses: Vec<ConformalReport>,
    pub suites: Vec<SuiteReport>,
    /// Fields whose closed form and flow oracle disagreed beyond `cross_check_tol`.
    pub cross_check_failures: Vec<String>,
    pub passed: bool,
    pub exit_code: i32,
    pub wall_time_s: f64,
}

impl Report {
    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("cannot write report {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read report {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Serialize)]
struct Row<'a> {
    manifold: &'a str,
    field: &'a str,
    kind: &'a str,
    a: Option<f64>,
    b: Option<f64>,
    c: Option<f64>,
    point: usize,
    x: String,
    y: String,
    omega: f64,
    residual: f64,
    oracle_omega: Option<f64>,
    oracle_residual: Option<f64>,
    defect: Option<f64>,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

/// One row per sample; coordinates are space separated inside their column.
pub fn write_csv(path: &Path, analyses: &[ConformalReport]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    for r in analyses {
        let kind = r.kind.map_or("base".to_string(), |k| serde_json::to_value(k).unwrap().as_str().unwrap().to_string());
        for (i, s) in r.samples.iter().enumerate() {
            w.serialize(Row {
                manifold: &r.manifold,
                field: &r.field,
                kind: &kind,
                a: r.coeffs.map(|c| c.a),
                b: r.coeffs.map(|c| c.b),
                c: r.coeffs.map(|c| c.c),
                point: i,
                x: join(&s.x),
                y: join(&s.y),
                omega: s.omega,
                residual: s.residual,
                oracle_omega: s.oracle_omega,
                oracle_residual: s.oracle_residual,
                defect: s.defect,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}
