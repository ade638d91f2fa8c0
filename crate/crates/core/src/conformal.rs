//! Conformal factor extraction and classification of lifted fields.
//!
//! `Ω = tr(g̃⁻¹ L) / (2·dim)` and `residual = ‖L − 2Ω g̃‖_F / ‖g̃‖_F`, for
//! `L = 𝓛_X g̃` on `TM` (dim `2n`) or `L = 𝓛_V g` on `M` (dim `n`).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow_oracle::{self, FlowOptions};
use crate::lie_calculus::{self, Basis, BilinearFormValue, LieOptions};
use crate::lift_fields::{self, AffineFiberField, BaseField, LiftField, LiftKind};
use crate::linalg::{self, Mat};
use crate::manifold::{self, ManifoldSpec};
use crate::scalar::{Dual, Scalar};
use crate::suites::{SuiteInstance, SuiteReport};
use crate::tangent_bundle::{self, LiftMetricCoeffs, LiftMetricValue, TMPoint};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub killing_tol: f64,
    pub residual_tol: f64,
    pub constancy_tol: f64,
    pub cross_check_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            killing_tol: 1e-6,
            residual_tol: 1e-4,
            constancy_tol: 1e-5,
            cross_check_tol: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    Lattice,
    #[default]
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub mode: GridMode,
    pub count: usize,
    pub seed: u64,
    pub fiber_box: (f64, f64),
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            mode: GridMode::Random,
            count: 16,
            seed: 0,
            fiber_box: (-1.0, 1.0),
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count < 8 {
            return Err(Error::Invalid(format!("grid count must be at least 8, got {}", self.count)));
        }
        if !(self.fiber_box.0 < self.fiber_box.1) {
            return Err(Error::Invalid("fiber_box needs lo < hi".into()));
        }
        Ok(())
    }

    /// `count` points in `bounds`, each interval inset by 2% on both sides.
    pub fn sample(&self, bounds: &[(f64, f64)]) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let inset: Vec<(f64, f64)> = bounds.iter().map(|&(l, h)| (l + 0.02 * (h - l), h - 0.02 * (h - l))).collect();
        Ok(match self.mode {
            GridMode::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (0..self.count)
                    .map(|_| inset.iter().map(|&(l, h)| rng.gen_range(l..h)).collect())
                    .collect()
            }
            GridMode::Lattice => {
                let d = inset.len() as u32;
                let mut k = 1usize;
                while k.pow(d) < self.count {
                    k += 1;
                }
                let all = manifold::lattice(&inset, k);
                let total = all.len();
                // Stride coprime with the lattice size so the picks cover every axis.
                let mut stride = total / self.count + 1;
                while gcd(stride, total) != 1 {
                    stride += 1;
                }
                (0..self.count).map(|i| all[(i * stride) % total].clone()).collect()
            }
        })
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisGrid {
    pub mode: GridMode,
    pub seed: u64,
    pub points: Vec<TMPoint>,
}

impl AnalysisGrid {
    /// Points over `domain × fiber_box`.
    pub fn build(spec: &ManifoldSpec, grid: &GridSpec) -> Result<Self> {
        let n = spec.dim;
        let mut bounds = spec.sampling_box();
        bounds.extend(std::iter::repeat(grid.fiber_box).take(n));
        let points = grid.sample(&bounds)?.iter().map(|z| TMPoint::from_z(z)).collect();
        Ok(Self {
            mode: grid.mode,
            seed: grid.seed,
            points,
        })
    }

    pub fn count(&self) -> usize {
        self.points.len()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    FlowOracle,
    #[default]
    Both,
}

impl Method {
    fn closed(self) -> bool {
        self != Method::FlowOracle
    }

    fn oracle(self) -> bool {
        self != Method::ClosedForm
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AnalysisOptions {
    pub method: Method,
    pub tolerances: Tolerances,
    pub flow: FlowOptions,
    pub lie: LieOptions,
}

/// `(Ω, residual)` from matrices in one basis.
pub fn extract_from_matrices(l: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<(f64, f64)> {
    if l.shape() != g.shape() || !l.is_square() {
        return Err(Error::Shape(format!("form is {:?}, metric is {:?}", l.shape(), g.shape())));
    }
    let ginv = g.clone().try_inverse().ok_or_else(|| Error::SingularMetric { point: vec![] })?;
    // tr(g⁻¹L) split as projection + trace of the remainder, so the inverse's
    // conditioning only touches the non-proportional part of L.
    let proj = l.dot(g) / (2.0 * g.dot(g));
    let omega = proj + (&ginv * (l - 2.0 * proj * g)).trace() / (2.0 * g.nrows() as f64);
    let residual = (l - 2.0 * omega * g).norm() / g.norm();
    Ok((omega, residual))
}

pub fn extract_conformal_factor(l: &BilinearFormValue, gt: &LiftMetricValue) -> Result<(f64, f64)> {
    if l.point != gt.point {
        return Err(Error::Invalid("form and metric are evaluated at different points".into()));
    }
    let g = match l.basis {
        Basis::Adapted => &gt.adapted_blocks,
        Basis::Coordinate => &gt.coordinate_matrix,
    };
    extract_from_matrices(&l.matrix, g)
}

/// `Ω(x, y)` of the closed form, generic so it can be differentiated.
pub fn omega_generic<T: Scalar>(
    field: &LiftField,
    spec: &ManifoldSpec,
    coeffs: &LiftMetricCoeffs,
    x: &[T],
    y: &[T],
    lie: LieOptions,
) -> Result<T> {
    let l = lie_calculus::lie_gtilde_generic(field, spec, coeffs, x, y, lie)?;
    let g = tangent_bundle::lift_blocks(&spec.metric_generic(x)?, coeffs);
    omega_of(&l, &g, x)
}

fn omega_of<T: Scalar>(l: &Mat<T>, g: &Mat<T>, x: &[T]) -> Result<T> {
    let ginv = linalg::invert(g).ok_or_else(|| Error::SingularMetric {
        point: x.iter().map(Scalar::value).collect(),
    })?;
    Ok(linalg::trace(&linalg::matmul(&ginv, l)).scale(1.0 / (2.0 * g.len() as f64)))
}

fn grad_norms<F>(n: usize, z: &[f64], f: F) -> Result<(f64, f64)>
where
    F: Fn(&[Dual<f64>]) -> Result<Dual<f64>>,
{
    let mut g = Vec::with_capacity(z.len());
    for k in 0..z.len() {
        g.push(f(&Dual::seed(z, k))?.eps);
    }
    let norm = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok((norm(&g[..n]), norm(&g[n..])))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub y: Vec<f64>,
    pub omega: f64,
    pub residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_residual: Option<f64>,
    /// Relative closed-form vs oracle defect in the coordinate basis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defect: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OmegaStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl OmegaStats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.min.abs().max(self.max.abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "class")]
pub enum Classification {
    Killing,
    Homothetic { omega: f64 },
    ConformalInessential,
    ConformalEssential,
    /// Conformal with Ω depending on both position and fiber, or a base
    /// field with non-constant ρ.
    Conformal,
    NonConformal,
}

impl Classification {
    pub fn is_conformal(&self) -> bool {
        !matches!(self, Classification::NonConformal)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Classification::Killing => "killing",
            Classification::Homothetic { .. } => "homothetic",
            Classification::ConformalInessential => "conformal_inessential",
            Classification::ConformalEssential => "conformal_essential",
            Classification::Conformal => "conformal",
            Classification::NonConformal => "non_conformal",
        }
    }

    pub fn same_class(&self, other: &Classification) -> bool {
        self.label() == other.label()
    }
}

/// Verdict from sampled Ω, residuals and derivative magnitudes.
pub fn decide(omegas: &[f64], residuals: &[f64], dx_norm: f64, dy_norm: f64, tol: &Tolerances) -> Classification {
    let stats = OmegaStats::of(omegas);
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    if worst >= tol.residual_tol {
        return Classification::NonConformal;
    }
    if stats.max_abs() < tol.killing_tol && worst < tol.killing_tol {
        return Classification::Killing;
    }
    if stats.std < tol.constancy_tol && stats.mean.abs() >= tol.killing_tol {
        return Classification::Homothetic { omega: stats.mean };
    }
    match (dx_norm < tol.constancy_tol, dy_norm < tol.constancy_tol) {
        (false, true) => Classification::ConformalInessential,
        (true, false) => Classification::ConformalEssential,
        _ => Classification::Conformal,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub max_defect: f64,
    pub max_omega_diff: f64,
    pub oracle_classification: Classification,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConformalReport {
    pub field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<LiftKind>,
    pub manifold: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<LiftMetricCoeffs>,
    pub method: Method,
    pub tolerances: Tolerances,
    pub samples: Vec<Sample>,
    pub omega_stats: OmegaStats,
    pub max_residual: f64,
    #[serde(rename = "dOmega_dx_norm")]
    pub d_omega_dx_norm: f64,
    #[serde(rename = "dOmega_dy_norm")]
    pub d_omega_dy_norm: f64,
    pub classification: Classification,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_check: Option<CrossCheck>,
    /// ρ statistics of the induced base field on `M`, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_rho: Option<OmegaStats>,
}

impl ConformalReport {
    pub fn cross_check_failed(&self) -> bool {
        self.cross_check.as_ref().is_some_and(|c| !c.passed)
    }
}

struct PointResult {
    closed: Vec<(f64, f64, f64, f64)>, // per coeffs: Ω, residual, |∂_xΩ|, |∂_yΩ|
    oracle: Vec<(f64, f64, f64)>,      // per coeffs: Ω, residual, defect
}

fn analyze_point(
    field: &LiftField,
    spec: &ManifoldSpec,
    coeffs: &[LiftMetricCoeffs],
    p: &TMPoint,
    opts: &AnalysisOptions,
) -> Result<PointResult> {
    let n = spec.dim;
    let mut out = PointResult {
        closed: Vec::new(),
        oracle: Vec::new(),
    };
    let metrics: Vec<LiftMetricValue> = coeffs.iter().map(|c| tangent_bundle::lift_metric(spec, c, p)).collect::<Result<_>>()?;
    let mut closed_coord = Vec::new();
    if opts.method.closed() {
        for (c, g) in coeffs.iter().zip(&metrics) {
            let l = lie_calculus::lie_gtilde(field, spec, c, p, opts.lie)?;
            let (omega, residual) = extract_conformal_factor(&l, g)?;
            let (dx, dy) = grad_norms(n, &p.z(), |z| omega_generic(field, spec, c, &z[..n], &z[n..], opts.lie))?;
            out.closed.push((omega, residual, dx, dy));
            closed_coord.push(g.coframe.transpose() * &l.matrix * &g.coframe);
        }
    }
    if opts.method.oracle() {
        let frame = tangent_bundle::adapted_frame(spec, p)?;
        let numeric = flow_oracle::numeric_lie_derivative_multi(field, spec, coeffs, p, opts.flow)?;
        for (k, (l, g)) in numeric.iter().zip(&metrics).enumerate() {
            let adapted = frame.frame.transpose() * &l.matrix * &frame.frame;
            let (omega, residual) = extract_from_matrices(&adapted, &g.adapted_blocks)?;
            let defect = closed_coord
                .get(k)
                .map(|c| (c - &l.matrix).norm() / c.norm().max(g.coordinate_matrix.norm()))
                .unwrap_or(0.0);
            out.oracle.push((omega, residual, defect));
        }
    }
    Ok(out)
}

/// Oracle-only `|∂Ω|` by central differences (step 1e-3) in `x` and `y`.
fn oracle_grad_norms(
    field: &LiftField,
    spec: &ManifoldSpec,
    coeffs: &[LiftMetricCoeffs],
    p: &TMPoint,
    flow: FlowOptions,
) -> Result<Vec<(f64, f64)>> {
    let n = spec.dim;
    let h = 1e-3;
    let omega_at = |z: &[f64]| -> Result<Vec<f64>> {
        let q = TMPoint::from_z(z);
        let frame = tangent_bundle::adapted_frame(spec, &q)?;
        let numeric = flow_oracle::numeric_lie_derivative_multi(field, spec, coeffs, &q, flow)?;
        numeric
            .iter()
            .zip(coeffs)
            .map(|(l, c)| {
                let adapted = frame.frame.transpose() * &l.matrix * &frame.frame;
                let g = tangent_bundle::lift_metric(spec, c, &q)?;
                Ok(extract_from_matrices(&adapted, &g.adapted_blocks)?.0)
            })
            .collect()
    };
    let z = p.z();
    let mut grads = vec![vec![0.0; 2 * n]; coeffs.len()];
    for k in 0..2 * n {
        let (mut zp, mut zm) = (z.clone(), z.clone());
        zp[k] += h;
        zm[k] -= h;
        let (op, om) = (omega_at(&zp)?, omega_at(&zm)?);
        for c in 0..coeffs.len() {
            grads[c][k] = (op[c] - om[c]) / (2.0 * h);
        }
    }
    let norm = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(grads.iter().map(|g| (norm(&g[..n]), norm(&g[n..]))).collect())
}

/// Classify one field for several coefficient sets, reusing the flows.
/// Cross-check failures are recorded in the reports, not raised.
pub fn classify_multi(
    field: &LiftField,
    spec: &ManifoldSpec,
    coeffs: &[LiftMetricCoeffs],
    grid: &AnalysisGrid,
    opts: &AnalysisOptions,
) -> Result<Vec<ConformalReport>> {
    field.require_fiber_preserving()?;
    if field.dim != spec.dim {
        return Err(Error::Shape(format!("field `{}` does not match manifold `{}`", field.name, spec.name)));
    }
    opts.flow.validate()?;
    for c in coeffs {
        c.validate()?;
    }
    if grid.count() < 8 {
        return Err(Error::Invalid(format!("grid count must be at least 8, got {}", grid.count())));
    }
    if let Some(p) = grid.points.iter().find(|p| !spec.contains(&p.x)) {
        return Err(Error::Invalid(format!("grid point {:?} lies outside the domain of `{}`", p.x, spec.name)));
    }
    let results: Vec<PointResult> = grid
        .points
        .par_iter()
        .map(|p| analyze_point(field, spec, coeffs, p, opts))
        .collect::<Result<_>>()?;
    let oracle_grads: Option<Vec<Vec<(f64, f64)>>> = if opts.method == Method::FlowOracle {
        Some(
            grid.points
                .par_iter()
                .map(|p| oracle_grad_norms(field, spec, coeffs, p, opts.flow))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    let tol = &opts.tolerances;
    let mut reports = Vec::with_capacity(coeffs.len());
    for (k, c) in coeffs.iter().enumerate() {
        let samples: Vec<Sample> = grid
            .points
            .iter()
            .zip(&results)
            .map(|(p, r)| {
                let closed = r.closed.get(k);
                let oracle = r.oracle.get(k);
                let (omega, residual) = match (closed, oracle) {
                    (Some(c), _) => (c.0, c.1),
                    (None, Some(o)) => (o.0, o.1),
                    (None, None) => unreachable!(),
                };
                Sample {
                    x: p.x.clone(),
                    y: p.y.clone(),
                    omega,
                    residual,
                    oracle_omega: (opts.method == Method::Both).then(|| oracle.unwrap().0),
                    oracle_residual: (opts.method == Method::Both).then(|| oracle.unwrap().1),
                    defect: (opts.method == Method::Both).then(|| oracle.unwrap().2),
                }
            })
            .collect();
        let (dx, dy) = match &oracle_grads {
            Some(g) => g.iter().fold((0.0_f64, 0.0_f64), |(a, b), v| (a.max(v[k].0), b.max(v[k].1))),
            None => results.iter().fold((0.0_f64, 0.0_f64), |(a, b), r| (a.max(r.closed[k].2), b.max(r.closed[k].3))),
        };
        let omegas: Vec<f64> = samples.iter().map(|s| s.omega).collect();
        let residuals: Vec<f64> = samples.iter().map(|s| s.residual).collect();
        let classification = decide(&omegas, &residuals, dx, dy, tol);
        let cross_check = (opts.method == Method::Both).then(|| {
            let oo: Vec<f64> = samples.iter().map(|s| s.oracle_omega.unwrap()).collect();
            let or: Vec<f64> = samples.iter().map(|s| s.oracle_residual.unwrap()).collect();
            // Derivative magnitudes come from the closed form here; they only
            // split the essential/inessential cases.
            let oracle_classification = decide(&oo, &or, dx, dy, tol);
            let max_defect = samples.iter().filter_map(|s| s.defect).fold(0.0, f64::max);
            let max_omega_diff = omegas.iter().zip(&oo).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            CrossCheck {
                passed: max_defect <= tol.cross_check_tol
                    && max_omega_diff <= tol.cross_check_tol
                    && oracle_classification.same_class(&classification),
                max_defect,
                max_omega_diff,
                oracle_classification,
            }
        });
        reports.push(ConformalReport {
            field: field.name.clone(),
            kind: Some(field.kind),
            manifold: spec.name.clone(),
            coeffs: Some(*c),
            method: opts.method,
            tolerances: *tol,
            omega_stats: OmegaStats::of(&omegas),
            max_residual: residuals.iter().copied().fold(0.0, f64::max),
            d_omega_dx_norm: dx,
            d_omega_dy_norm: dy,
            classification,
            cross_check,
            base_rho: None,
            samples,
        });
    }
    Ok(reports)
}

/// Cross-check failures become [`Error::CrossCheck`].
pub fn classify(
    field: &LiftField,
    spec: &ManifoldSpec,
    coeffs: &LiftMetricCoeffs,
    grid: &AnalysisGrid,
    opts: &AnalysisOptions,
) -> Result<ConformalReport> {
    let report = classify_multi(field, spec, std::slice::from_ref(coeffs), grid, opts)?.remove(0);
    check_cross(&report)?;
    Ok(report)
}

pub fn check_cross(report: &ConformalReport) -> Result<()> {
    match &report.cross_check {
        Some(c) if !c.passed => Err(Error::CrossCheck {
            field: report.field.clone(),
            defect: c.max_defect.max(c.max_omega_diff),
            tol: report.tolerances.cross_check_tol,
        }),
        _ => Ok(()),
    }
}

/// `𝓛_V g` on `M`, generic in the scalar type.
pub fn base_lie_metric_generic<T: Scalar>(v: &BaseField, spec: &ManifoldSpec, x: &[T]) -> Result<Mat<T>> {
    let n = spec.dim;
    let (g, dg) = spec.metric_with_derivs(x)?;
    let (vx, dv) = v.eval_with_jacobian(x)?;
    let mut l = linalg::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = T::zero();
            for h in 0..n {
                s += vx[h] * dg[h][i][j] + dv[i][h] * g[h][j] + dv[j][h] * g[i][h];
            }
            l[i][j] = s;
        }
    }
    Ok(l)
}

/// Conformal analysis of `V` on `(M, g)`; `Ω` in the report is `ρ`.
pub fn analyze_base(v: &BaseField, spec: &ManifoldSpec, grid: &GridSpec, tol: &Tolerances) -> Result<ConformalReport> {
    if v.dim() != spec.dim {
        return Err(Error::Shape(format!("field `{}` does not match manifold `{}`", v.name, spec.name)));
    }
    let points = grid.sample(&spec.sampling_box())?;
    let per_point: Vec<(f64, f64, f64)> = points
        .par_iter()
        .map(|x| {
            let l = linalg::to_dmatrix(&base_lie_metric_generic(v, spec, x)?);
            let g = linalg::to_dmatrix(&spec.metric_generic(x)?);
            let (rho, residual) = extract_from_matrices(&l, &g)?;
            let (dx, _) = grad_norms(spec.dim, x, |xd| {
                let l = base_lie_metric_generic(v, spec, xd)?;
                omega_of(&l, &spec.metric_generic(xd)?, xd)
            })?;
            Ok((rho, residual, dx))
        })
        .collect::<Result<_>>()?;
    let samples: Vec<Sample> = points
        .iter()
        .zip(&per_point)
        .map(|(x, r)| Sample {
            x: x.clone(),
            y: Vec::new(),
            omega: r.0,
            residual: r.1,
            oracle_omega: None,
            oracle_residual: None,
            defect: None,
        })
        .collect();
    let rhos: Vec<f64> = per_point.iter().map(|r| r.0).collect();
    let residuals: Vec<f64> = per_point.iter().map(|r| r.1).collect();
    let dx = per_point.iter().map(|r| r.2).fold(0.0, f64::max);
    let classification = match decide(&rhos, &residuals, dx, 0.0, tol) {
        Classification::ConformalInessential | Classification::ConformalEssential => Classification::Conformal,
        c => c,
    };
    Ok(ConformalReport {
        field: v.name.clone(),
        kind: None,
        manifold: spec.name.clone(),
        coeffs: None,
        method: Method::ClosedForm,
        tolerances: *tol,
        omega_stats: OmegaStats::of(&rhos),
        max_residual: residuals.iter().copied().fold(0.0, f64::max),
        d_omega_dx_norm: dx,
        d_omega_dy_norm: 0.0,
        classification,
        cross_check: None,
        base_rho: None,
        samples,
    })
}

fn instance(r: &ConformalReport, vacuous: bool) -> SuiteInstance {
    SuiteInstance {
        manifold: r.manifold.clone(),
        field: r.field.clone(),
        coeffs: r.coeffs,
        classification: r.classification,
        omega_mean: r.omega_stats.mean,
        omega_std: r.omega_stats.std,
        omega_max_abs: r.omega_stats.max_abs(),
        d_omega_dy_norm: r.d_omega_dy_norm,
        vacuous,
    }
}

/// Complete lifts that are conformal have constant, fiber-independent Ω;
/// conformal horizontal and vertical lifts are Killing.
pub fn verify_theorem1(
    spec: &ManifoldSpec,
    coeffs: &[LiftMetricCoeffs],
    base_fields: &[BaseField],
    grid: &AnalysisGrid,
    opts: &AnalysisOptions,
) -> Result<SuiteReport> {
    for c in coeffs {
        if !(c.a > 0.0 && c.discriminant() > 0.0) {
            return Err(Error::Invalid(format!("theorem 1 needs a > 0 and ac − b² > 0, got {c}")));
        }
    }
    let tol = &opts.tolerances;
    let mut suite = SuiteReport::new("theorem1", &spec.name, tol.constancy_tol);
    for v in base_fields {
        let lifts = [
            lift_fields::complete_lift(v, spec)?,
            lift_fields::horizontal_lift(v, spec)?,
            lift_fields::vertical_lift(v, spec)?,
        ];
        for x in &lifts {
            for r in classify_multi(x, spec, coeffs, grid, opts)? {
                check_cross(&r)?;
                let c = r.classification;
                suite.checks += 1;
                if !c.is_conformal() {
                    suite.notes.push(format!("{} {}: non_conformal, vacuous instance", r.field, r.coeffs.unwrap()));
                    suite.instances.push(instance(&r, true));
                    continue;
                }
                if x.kind == LiftKind::Complete {
                    let worst = r.omega_stats.std.max(r.d_omega_dy_norm);
                    suite.worst_defect = suite.worst_defect.max(worst);
                    if r.omega_stats.std >= tol.constancy_tol || r.d_omega_dy_norm >= tol.constancy_tol {
                        suite.violations.push(format!(
                            "{} {}: {} with std(Ω) = {:.3e}, |∂_yΩ| = {:.3e}",
                            r.field,
                            r.coeffs.unwrap(),
                            c.label(),
                            r.omega_stats.std,
                            r.d_omega_dy_norm
                        ));
                    }
                } else {
                    let worst = r.omega_stats.max_abs();
                    suite.worst_defect = suite.worst_defect.max(worst);
                    if worst >= tol.killing_tol {
                        suite.violations.push(format!(
                            "{} {}: {} with max |Ω| = {:.3e}",
                            r.field,
                            r.coeffs.unwrap(),
                            c.label(),
                            worst
                        ));
                    }
                }
                suite.instances.push(instance(&r, false));
            }
        }
    }
    Ok(suite.finish())
}

/// No fiber-preserving affine field is conformal and inessential with
/// non-constant Ω.
pub fn verify_theorem2(
    spec: &ManifoldSpec,
    coeffs: &[LiftMetricCoeffs],
    fields: &[(String, AffineFiberField)],
    grid: &AnalysisGrid,
    opts: &AnalysisOptions,
) -> Result<SuiteReport> {
    let tol = &opts.tolerances;
    let mut suite = SuiteReport::new("theorem2", &spec.name, tol.constancy_tol);
    for (name, f) in fields {
        let x = lift_fields::affine_fiber_field(spec, name.clone(), f)?;
        for r in classify_multi(&x, spec, coeffs, grid, opts)? {
            check_cross(&r)?;
            suite.checks += 1;
            let c = r.classification;
            if !c.is_conformal() {
                suite.notes.push(format!("{} {}: non_conformal, vacuous instance", r.field, r.coeffs.unwrap()));
                suite.instances.push(instance(&r, true));
                continue;
            }
            if c == Classification::ConformalInessential {
                suite.worst_defect = suite.worst_defect.max(r.omega_stats.std);
                suite.violations.push(format!(
                    "{} {}: conformal_inessential with std(Ω) = {:.3e}",
                    r.field,
                    r.coeffs.unwrap(),
                    r.omega_stats.std
                ));
            }
            suite.instances.push(instance(&r, false));
        }
    }
    Ok(suite.finish())
}
