//! Verification suites: universally quantified identities checked over a
//! finite catalog and grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{AnalysisGrid, Classification};
use crate::error::Result;
use crate::flow_oracle::{self, FlowOptions};
use crate::lie_calculus::{self, FrameSlot, LieOptions, TensorField};
use crate::lift_fields::{BaseField, LiftField};
use crate::manifold::ManifoldSpec;
use crate::tangent_bundle::{self, LiftMetricCoeffs, TMPoint};

pub const SUITE_NAMES: &[&str] = &["lemma1", "lemma3-duality", "lemma4-oracle", "eq1", "theorem1", "theorem2"];

/// `lemma4` is accepted as shorthand for `lemma4-oracle`, `lemma3` for
/// `lemma3-duality`.
pub fn canonical_suite_name(name: &str) -> Option<&'static str> {
    match name {
        "lemma3" => Some("lemma3-duality"),
        "lemma4" => Some("lemma4-oracle"),
        _ => SUITE_NAMES.iter().copied().find(|s| *s == name),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteInstance {
    pub manifold: String,
    pub field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<LiftMetricCoeffs>,
    pub classification: Classification,
    pub omega_mean: f64,
    pub omega_std: f64,
    pub omega_max_abs: f64,
    #[serde(rename = "dOmega_dy_norm")]
    pub d_omega_dy_norm: f64,
    pub vacuous: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub manifold: String,
    pub passed: bool,
    pub checks: usize,
    pub worst_defect: f64,
    pub tolerance: f64,
    pub violations: Vec<String>,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub instances: Vec<SuiteInstance>,
}

pub const AUDIT_NOTE: &str = "numeric audit over a finite catalog and grid, not a proof";

impl SuiteReport {
    pub fn new(suite: &str, manifold: &str, tolerance: f64) -> Self {
        Self {
            suite: suite.to_string(),
            manifold: manifold.to_string(),
            passed: false,
            checks: 0,
            worst_defect: 0.0,
            tolerance,
            violations: Vec::new(),
            notes: Vec::new(),
            instances: Vec::new(),
        }
    }

    pub fn finish(mut self) -> Self {
        self.passed = self.violations.is_empty();
        self.notes.insert(0, AUDIT_NOTE.to_string());
        self
    }

    fn record(&mut self, defect: f64, what: impl FnOnce() -> String) {
        self.checks += 1;
        self.worst_defect = self.worst_defect.max(defect);
        if defect > self.tolerance || defect.is_nan() {
            self.violations.push(format!("{}: defect {defect:.3e}", what()));
        }
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

/// Closed-form frame brackets against central-difference commutators.
pub fn lemma1(spec: &ManifoldSpec, grid: &AnalysisGrid, tol: f64) -> Result<SuiteReport> {
    let n = spec.dim;
    let slots: Vec<FrameSlot> = (0..n).map(FrameSlot::horizontal).chain((0..n).map(FrameSlot::vertical)).collect();
    let rows: Vec<Vec<(FrameSlot, FrameSlot, f64, bool)>> = grid
        .points
        .par_iter()
        .map(|p| {
            let mut out = Vec::new();
            for &a in &slots {
                for &b in &slots {
                    let closed = lie_calculus::adapted_bracket(spec, p, a, b)?;
                    let numeric = lie_calculus::numeric_commutator(spec, p, a, b, 1e-5)?;
                    let exact_zero = !(a.bar && b.bar) || closed.iter().all(|v| *v == 0.0);
                    out.push((a, b, max_diff(&closed, &numeric), exact_zero));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut suite = SuiteReport::new("lemma1", &spec.name, tol);
    for (p, row) in grid.points.iter().zip(rows) {
        for (a, b, d, zero) in row {
            suite.record(d, || format!("[{a}, {b}] at {:?}", p.z()));
            if !zero {
                suite.violations.push(format!("[{a}, {b}] at {:?}: vertical bracket not identically zero", p.z()));
            }
        }
    }
    Ok(suite.finish())
}

/// Duality of the frame and coframe Lie derivatives.
pub fn lemma3_duality(spec: &ManifoldSpec, fields: &[LiftField], grid: &AnalysisGrid, tol: f64) -> Result<SuiteReport> {
    let mut suite = SuiteReport::new("lemma3-duality", &spec.name, tol);
    for f in fields {
        let defects: Vec<f64> = grid
            .points
            .par_iter()
            .map(|p| Ok(lie_calculus::lie_frame(f, spec, p)?.duality_defect()))
            .collect::<Result<_>>()?;
        for (p, d) in grid.points.iter().zip(defects) {
            suite.record(d, || format!("{} at {:?}", f.name, p.z()));
        }
    }
    Ok(suite.finish())
}

/// Relative defect between the closed form and the flow oracle, coordinate basis.
pub fn oracle_defects(
    field: &LiftField,
    spec: &ManifoldSpec,
    coeffs: &[LiftMetricCoeffs],
    p: &TMPoint,
    flow: FlowOptions,
    lie: LieOptions,
) -> Result<Vec<f64>> {
    let numeric = flow_oracle::numeric_lie_derivative_multi(field, spec, coeffs, p, flow)?;
    coeffs
        .iter()
        .zip(numeric)
        .map(|(c, o)| {
            let closed = lie_calculus::lie_gtilde(field, spec, c, p, lie)?.to_coordinate(spec)?;
            let g = tangent_bundle::lift_metric(spec, c, p)?.coordinate_matrix;
            Ok((&closed.matrix - &o.matrix).norm() / closed.matrix.norm().max(g.norm()))
        })
        .collect()
}

/// Closed-form `𝓛_X g̃` against the flow-pullback oracle.
pub fn lemma4_oracle(
    spec: &ManifoldSpec,
    fields: &[LiftField],
    coeffs: &[LiftMetricCoeffs],
    grid: &AnalysisGrid,
    flow: FlowOptions,
    lie: LieOptions,
    tol: f64,
) -> Result<SuiteReport> {
    let mut suite = SuiteReport::new("lemma4-oracle", &spec.name, tol);
    for f in fields {
        let defects: Vec<Vec<f64>> = grid
            .points
            .par_iter()
            .map(|p| oracle_defects(f, spec, coeffs, p, flow, lie))
            .collect::<Result<_>>()?;
        for (p, row) in grid.points.iter().zip(defects) {
            for (c, d) in coeffs.iter().zip(row) {
                suite.record(d, || format!("{} {c} at {:?}", f.name, p.z()));
            }
        }
    }
    Ok(suite.finish())
}

/// `e^{0.6·x1}·g`, a second metric on the same chart whose Levi-Civita
/// connection differs from that of `spec`.
pub fn rescaled_partner(spec: &ManifoldSpec) -> Result<ManifoldSpec> {
    let rows: Vec<Vec<String>> = spec
        .metric
        .iter()
        .map(|r| r.iter().map(|e| format!("exp(0.6*x1)*({})", e.source)).collect())
        .collect();
    ManifoldSpec::new(format!("{}_rescaled", spec.name), &rows, spec.domain_hint.clone())
}

/// Component and covariant forms of the base Lie derivative, for the
/// metric and for the connection difference against [`rescaled_partner`].
pub fn eq1(spec: &ManifoldSpec, base_fields: &[BaseField], grid: &AnalysisGrid, tol: f64) -> Result<SuiteReport> {
    let partner = rescaled_partner(spec)?;
    let tensors = [("metric", TensorField::Metric), ("connection_difference", TensorField::ConnectionDifference(partner))];
    let mut suite = SuiteReport::new("eq1", &spec.name, tol);
    for v in base_fields {
        for (label, t) in &tensors {
            let defects: Vec<f64> = grid
                .points
                .par_iter()
                .map(|p| Ok(lie_calculus::base_lie_derivative(v, t, spec, &p.x)?.defect()))
                .collect::<Result<_>>()?;
            for (p, d) in grid.points.iter().zip(defects) {
                suite.record(d, || format!("{} on {label} at {:?}", v.name, p.x));
            }
        }
    }
    Ok(suite.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::GridSpec;
    use crate::lift_fields::catalog as fcat;
    use crate::manifold::catalog as mcat;

    fn grid(spec: &ManifoldSpec) -> AnalysisGrid {
        AnalysisGrid::build(spec, &GridSpec { count: 8, seed: 1, ..GridSpec::default() }).unwrap()
    }

    #[test]
    fn names() {
        assert_eq!(canonical_suite_name("lemma4"), Some("lemma4-oracle"));
        assert_eq!(canonical_suite_name("theorem2"), Some("theorem2"));
        assert_eq!(canonical_suite_name("lemma9"), None);
    }

    #[test]
    fn lemma_suites_pass_on_curved_catalog() {
        for spec in [mcat::sphere2(1.0), mcat::halfplane2()] {
            let g = grid(&spec);
            let r = lemma1(&spec, &g, 1e-6).unwrap();
            assert!(r.passed, "{:?}", r.violations);
            assert_eq!(r.checks, 8 * 16);
            let fields = fcat::lifted_fields(&spec);
            let r = lemma3_duality(&spec, &fields, &g, 1e-9).unwrap();
            assert!(r.passed, "{:?}", r.violations);
            let r = eq1(&spec, &fcat::base_fields(&spec.name), &g, 1e-9).unwrap();
            assert!(r.passed, "{} {:?}", r.worst_defect, r.violations);
            assert_eq!(r.notes[0], AUDIT_NOTE);
        }
    }

    #[test]
    fn suite_records_violations() {
        let mut s = SuiteReport::new("x", "m", 1e-6);
        s.record(1e-7, || "ok".into());
        s.record(1e-3, || "bad".into());
        let s = s.finish();
        assert!(!s.passed);
        assert_eq!(s.checks, 2);
        assert_eq!(s.worst_defect, 1e-3);
    }
}
