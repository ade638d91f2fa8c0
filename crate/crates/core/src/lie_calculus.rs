//! Closed-form Lie derivatives.
//!
//! Base manifold: the partial-derivative component formula and the
//! covariant form for tensors of type (0,2), (1,1) and (1,2).
//!
//! Tangent bundle, for a fiber-preserving `X = X^h X_h + X^h̄ X_h̄`:
//! adapted-frame brackets, `𝓛_X` of the adapted frame and coframe, and
//! `𝓛_X g₁`, `𝓛_X g₂`, `𝓛_X g₃`, `𝓛_X g̃`, each assembled from named
//! summands kept in [`LieTerms`].
//!
//! Symmetric products follow `dx^i dx^j = ½(dx^i⊗dx^j + dx^j⊗dx^i)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ScalarExpr;
use crate::lift_fields::{BaseField, LiftField};
use crate::linalg::{self, Mat};
use crate::manifold::{Gamma, ManifoldSpec, Riemann};
use crate::scalar::{Dual, Scalar};
use crate::tangent_bundle::{self, LiftMetricCoeffs, TMPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Adapted,
    Coordinate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BilinearFormValue {
    pub point: TMPoint,
    pub matrix: DMatrix<f64>,
    pub basis: Basis,
    pub symmetric: bool,
}

impl BilinearFormValue {
    fn adapted(point: &TMPoint, m: &Mat<f64>) -> Self {
        let matrix = linalg::to_dmatrix(m);
        let symmetric = asymmetry(&matrix) <= 1e-10 * linalg::frobenius(&matrix).max(f64::MIN_POSITIVE);
        Self {
            point: point.clone(),
            matrix,
            basis: Basis::Adapted,
            symmetric,
        }
    }

    /// Re-express in `{dx, dy}`; a coordinate-basis value is returned as is.
    pub fn to_coordinate(&self, spec: &ManifoldSpec) -> Result<Self> {
        if self.basis == Basis::Coordinate {
            return Ok(self.clone());
        }
        let frame = tangent_bundle::adapted_frame(spec, &self.point)?;
        Ok(Self {
            point: self.point.clone(),
            matrix: frame.coframe.transpose() * &self.matrix * &frame.coframe,
            basis: Basis::Coordinate,
            symmetric: self.symmetric,
        })
    }
}

pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).norm()
}

/// Fault-injection switch for the closed form, used to prove the oracle
/// cross-check catches a wrong term.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LieOptions {
    pub perturb: bool,
}

/// Values and first derivatives of the adapted components of `X`.
#[derive(Clone, Debug)]
pub struct FieldJet<T> {
    pub horiz: Vec<T>,
    pub vert: Vec<T>,
    /// `dh[j][h] = ∂_j X^h`
    pub dh: Mat<T>,
    /// `dvx[i][m] = ∂X^m̄/∂x^i`
    pub dvx: Mat<T>,
    /// `dvy[i][m] = ∂X^m̄/∂y^i`
    pub dvy: Mat<T>,
}

pub fn field_jet<T: Scalar>(field: &LiftField, spec: &ManifoldSpec, x: &[T], y: &[T]) -> Result<FieldJet<T>> {
    let n = spec.dim;
    let mut jet = FieldJet {
        horiz: Vec::new(),
        vert: Vec::new(),
        dh: Vec::with_capacity(n),
        dvx: Vec::with_capacity(n),
        dvy: Vec::with_capacity(n),
    };
    let yl = Dual::lift(y);
    for j in 0..n {
        let (h, v) = field.components(spec, &Dual::seed(x, j), &yl)?;
        if j == 0 {
            jet.horiz = h.iter().map(|d| d.re).collect();
            jet.vert = v.iter().map(|d| d.re).collect();
        }
        jet.dh.push(h.iter().map(|d| d.eps).collect());
        jet.dvx.push(v.iter().map(|d| d.eps).collect());
    }
    let xl = Dual::lift(x);
    for i in 0..n {
        let (_, v) = field.components(spec, &xl, &Dual::seed(y, i))?;
        jet.dvy.push(v.iter().map(|d| d.eps).collect());
    }
    Ok(jet)
}

/// Summands shared by the frame and metric formulas, all indexed `[i][m]`
/// with `i` the form slot and `m` the component index.
#[derive(Clone, Debug)]
pub struct LieTerms<T> {
    pub g: Mat<T>,
    pub gamma: Gamma<T>,
    pub jet: FieldJet<T>,
    /// `𝓛_V g_{ij}`
    pub lie_v_g: Mat<T>,
    /// `y^b X^c K_{icb}^m`
    pub curv: Mat<T>,
    /// `X^b̄ Γ_{bi}^m`
    pub gamma_term: Mat<T>,
    /// `X_i(X^m̄)`
    pub horiz_deriv: Mat<T>,
    /// `∇_i X^m`
    pub nabla_x: Mat<T>,
    /// `X_ī(X^m̄)`
    pub vert_deriv: Mat<T>,
    /// `X^b Γ_{bi}^m`
    pub conn_x: Mat<T>,
}

impl<T: Scalar> LieTerms<T> {
    /// `Q_i^m = y^b X^c K_{icb}^m − X^b̄ Γ_{bi}^m − X_i(X^m̄)`
    pub fn q(&self, i: usize, m: usize) -> T {
        self.curv[i][m] - self.gamma_term[i][m] - self.horiz_deriv[i][m]
    }
}

pub fn lie_terms<T: Scalar>(field: &LiftField, spec: &ManifoldSpec, x: &[T], y: &[T]) -> Result<LieTerms<T>> {
    field.require_fiber_preserving()?;
    let n = spec.dim;
    let (g, dg) = spec.metric_with_derivs(x)?;
    let (gamma, dgamma) = spec.christoffel_with_derivs(x)?;
    let k: Riemann<T> = crate::manifold::curvature_from(&gamma, &dgamma);
    let nc = tangent_bundle::connection_coeffs(&gamma, y);
    let jet = field_jet(field, spec, x, y)?;
    let (xh, xv) = (&jet.horiz, &jet.vert);

    let mut t = LieTerms {
        lie_v_g: linalg::zeros(n, n),
        curv: linalg::zeros(n, n),
        gamma_term: linalg::zeros(n, n),
        horiz_deriv: linalg::zeros(n, n),
        nabla_x: linalg::zeros(n, n),
        vert_deriv: linalg::zeros(n, n),
        conn_x: linalg::zeros(n, n),
        g: g.clone(),
        gamma: gamma.clone(),
        jet: jet.clone(),
    };
    for i in 0..n {
        for j in 0..n {
            let mut s = T::zero();
            for h in 0..n {
                s += xh[h] * dg[h][i][j] + jet.dh[i][h] * g[h][j] + jet.dh[j][h] * g[i][h];
            }
            t.lie_v_g[i][j] = s;
        }
        for m in 0..n {
            let (mut curv, mut gt, mut cx, mut nab) = (T::zero(), T::zero(), T::zero(), jet.dh[i][m]);
            for b in 0..n {
                for c in 0..n {
                    curv += y[b] * xh[c] * k[i][c][b][m];
                }
                gt += xv[b] * gamma[m][b][i];
                cx += xh[b] * gamma[m][b][i];
                nab += gamma[m][i][b] * xh[b];
            }
            let mut hd = jet.dvx[i][m];
            for kk in 0..n {
                hd -= nc[i][kk] * jet.dvy[kk][m];
            }
            t.curv[i][m] = curv;
            t.gamma_term[i][m] = gt;
            t.conn_x[i][m] = cx;
            t.nabla_x[i][m] = nab;
            t.horiz_deriv[i][m] = hd;
            t.vert_deriv[i][m] = jet.dvy[i][m];
        }
    }
    Ok(t)
}

fn symmetrize<T: Scalar>(c: &Mat<T>) -> Mat<T> {
    let n = c.len();
    let mut out = linalg::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[i][j] = (c[i][j] + c[j][i]).scale(0.5);
        }
    }
    out
}

fn place<T: Scalar>(hh: Option<&Mat<T>>, mixed: Option<&Mat<T>>, vv: Option<&Mat<T>>, n: usize) -> Mat<T> {
    let mut m = linalg::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            if let Some(b) = hh {
                m[i][j] = b[i][j];
            }
            if let Some(b) = mixed {
                m[i][n + j] = b[i][j];
                m[n + j][i] = b[i][j];
            }
            if let Some(b) = vv {
                m[n + i][n + j] = b[i][j];
            }
        }
    }
    m
}

/// `𝓛_X g₁ = (𝓛_V g_{ij}) dx^i dx^j`.
pub fn lie_g1_generic<T: Scalar>(t: &LieTerms<T>) -> Mat<T> {
    let n = t.g.len();
    place(Some(&symmetrize(&t.lie_v_g)), None, None, n)
}

/// `𝓛_X g₂ = 2[−g_{jm} Q_i^m dx^i dx^j + {𝓛_V g_{ij} − g_{jm} ∇_i X^m + g_{jm} X_ī(X^m̄)} dx^j δy^i]`.
pub fn lie_g2_generic<T: Scalar>(t: &LieTerms<T>, opts: LieOptions) -> Mat<T> {
    let n = t.g.len();
    let vd = if opts.perturb { 1.1 } else { 1.0 };
    let mut hh = linalg::zeros(n, n);
    // mixed[j][i] is the (X_j, X_ī) component.
    let mut mixed = linalg::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = T::zero();
            let mut d = t.lie_v_g[i][j];
            for m in 0..n {
                s -= t.g[j][m] * t.q(i, m);
                d += t.g[j][m] * (t.vert_deriv[i][m].scale(vd) - t.nabla_x[i][m]);
            }
            hh[i][j] = s.scale(2.0);
            mixed[j][i] = d;
        }
    }
    place(Some(&symmetrize(&hh)), Some(&mixed), None, n)
}

/// `𝓛_X g₃ = −2 g_{mi} Q_j^m dx^j δy^i + {𝓛_V g_{ij} − 2 g_{mj} ∇_i X^m + 2 g_{mj} X_ī(X^m̄)} δy^i δy^j`.
pub fn lie_g3_generic<T: Scalar>(t: &LieTerms<T>) -> Mat<T> {
    let n = t.g.len();
    let mut mixed = linalg::zeros(n, n);
    let mut vv = linalg::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = T::zero();
            let mut v = t.lie_v_g[i][j];
            for m in 0..n {
                s -= t.g[m][i] * t.q(j, m);
                v += t.g[m][j] * (t.vert_deriv[i][m] - t.nabla_x[i][m]).scale(2.0);
            }
            mixed[j][i] = s;
            vv[i][j] = v;
        }
    }
    place(None, Some(&mixed), Some(&symmetrize(&vv)), n)
}

/// `a·𝓛g₁ + b·𝓛g₂ + c·𝓛g₃` in the adapted basis.
pub fn lie_gtilde_generic<T: Scalar>(
    field: &LiftField,
    spec: &ManifoldSpec,
    coeffs: &LiftMetricCoeffs,
    x: &[T],
    y: &[T],
    opts: LieOptions,
) -> Result<Mat<T>> {
    let t = lie_terms(field, spec, x, y)?;
    let (g1, g2, g3) = (lie_g1_generic(&t), lie_g2_generic(&t, opts), lie_g3_generic(&t));
    let n2 = 2 * spec.dim;
    let mut out = linalg::zeros(n2, n2);
    for r in 0..n2 {
        for s in 0..n2 {
            out[r][s] = g1[r][s].scale(coeffs.a) + g2[r][s].scale(coeffs.b) + g3[r][s].scale(coeffs.c);
        }
    }
    Ok(out)
}

fn checked(field: &LiftField, spec: &ManifoldSpec, p: &TMPoint) -> Result<()> {
    if p.x.len() != spec.dim || p.y.len() != spec.dim {
        return Err(Error::Shape(format!("TM point does not match dimension {}", spec.dim)));
    }
    if field.dim != spec.dim {
        return Err(Error::Shape(format!("field `{}` is {}-dimensional, manifold is {}", field.name, field.dim, spec.dim)));
    }
    field.require_fiber_preserving()
}

pub fn lie_g1(field: &LiftField, spec: &ManifoldSpec, p: &TMPoint) -> Result<BilinearFormValue> {
    checked(field, spec, p)?;
    let t = lie_terms(field, spec, &p.x, &p.y)?;
    Ok(BilinearFormValue::adapted(p, &lie_g1_generic(&t)))
}

pub fn lie_g2(field: &LiftField, spec: &ManifoldSpec, p: &TMPoint) -> Result<BilinearFormValue> {
    checked(field, spec, p)?;
    let t = lie_terms(field, spec, &p.x, &p.y)?;
    Ok(BilinearFormValue::adapted(p, &lie_g2_generic(&t, LieOptions::default())))
}

pub fn lie_g3(field: &LiftField, spec: &ManifoldSpec, p: &TMPoint) -> Result<BilinearFormValue> {
    checked(field, spec, p)?;
    let t = lie_terms(field, spec, &p.x, &p.y)?;
    Ok(BilinearFormValue::adapted(p, &lie_g3_generic(&t)))
}

pub fn lie_gtilde(
    field: &LiftField,
    spec: &ManifoldSpec,
    coeffs: &LiftMetricCoeffs,
    p: &TMPoint,
    opts: LieOptions,
) -> Result<BilinearFormValue> {
    checked(field, spec, p)?;
    coeffs.validate()?;
    let m = lie_gtilde_generic(field, spec, coeffs, &p.x, &p.y, opts)?;
    Ok(BilinearFormValue::adapted(p, &m))
}

/// Index into the adapted frame: `X_index` or, with `bar`, `X_index̄`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSlot {
    pub index: usize,
    pub bar: bool,
}

impl FrameSlot {
    pub fn horizontal(index: usize) -> Self {
        Self { index, bar: false }
    }

    pub fn vertical(index: usize) -> Self {
        Self { index, bar: true }
    }

    fn flat(self, n: usize) -> usize {
        self.index + if self.bar { n } else { 0 }
    }
}

/// One-based, as `X_1` or `X_1̄`.
impl std::fmt::Display for FrameSlot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "X_{}{}", self.index + 1, if self.bar { "\u{304}" } else { "" })
    }
}

/// Closed-form bracket of two adapted frame fields, in adapted components.
///
/// `[X_i, X_j] = y^r K_{jir}^m X_m̄`, `[X_i, X_j̄] = Γ_{ji}^m X_m̄`, `[X_ī, X_j̄] = 0`.
pub fn adapted_bracket(spec: &ManifoldSpec, p: &TMPoint, s1: FrameSlot, s2: FrameSlot) -> Result<Vec<f64>> {
    p.check(spec)?;
    let n = spec.dim;
    if s1.index >= n || s2.index >= n {
        return Err(Error::Shape(format!("frame index out of range for dimension {n}")));
    }
    let mut out = vec![0.0; 2 * n];
    let (i, j) = (s1.index, s2.index);
    match (s1.bar, s2.bar) {
        (false, false) => {
            let k = spec.curvature_generic(&p.x)?;
            for m in 0..n {
                out[n + m] = (0..n).map(|r| p.y[r] * k[j][i][r][m]).sum();
            }
        }
        (false, true) | (true, false) => {
            let gamma = spec.christoffel_generic(&p.x)?;
            let sign = if s1.bar { -1.0 } else { 1.0 };
            for m in 0..n {
                out[n + m] = sign * gamma[m][i][j];
            }
        }
        (true, true) => {}
    }
    Ok(out)
}

fn frame_column(spec: &ManifoldSpec, z: &[f64], col: usize) -> Result<Vec<f64>> {
    let n = spec.dim;
    let gamma = spec.christoffel_generic(&z[..n])?;
    let f = tangent_bundle::frame_matrix(&tangent_bundle::connection_coeffs(&gamma, &z[n..]));
    Ok(f.iter().map(|r| r[col]).collect())
}

/// Bracket of two frame fields from central differences of their
/// coordinate components, converted to adapted components.
pub fn numeric_commutator(spec: &ManifoldSpec, p: &TMPoint, s1: FrameSlot, s2: FrameSlot, h: f64) -> Result<Vec<f64>> {
    p.check(spec)?;
    let n = spec.dim;
    let z = p.z();
    let (a, b) = (s1.flat(n), s2.flat(n));
    let fa = frame_column(spec, &z, a)?;
    let fb = frame_column(spec, &z, b)?;
    let directional = |along: &[f64], col: usize| -> Result<Vec<f64>> {
        let plus: Vec<f64> = z.iter().zip(along).map(|(z, v)| z + h * v).collect();
        let minus: Vec<f64> = z.iter().zip(along).map(|(z, v)| z - h * v).collect();
        let (fp, fm) = (frame_column(spec, &plus, col)?, frame_column(spec, &minus, col)?);
        Ok(fp.iter().zip(&fm).map(|(p, m)| (p - m) / (2.0 * h)).collect())
    };
    let dab = directional(&fa, b)?;
    let dba = directional(&fb, a)?;
    let coord: Vec<f64> = dab.iter().zip(&dba).map(|(u, v)| u - v).collect();
    let frame = tangent_bundle::adapted_frame(spec, p)?;
    Ok((&frame.coframe * nalgebra::DVector::from_vec(coord)).iter().copied().collect())
}

/// `𝓛_X` of the adapted frame and coframe.
#[derive(Clone, Debug, PartialEq)]
pub struct LieFrameValue {
    pub point: TMPoint,
    /// Column `B` holds the adapted components of `𝓛_X E_B`,
    /// `E = (X_1..X_n, X_1̄..X_n̄)`.
    pub frame: DMatrix<f64>,
    /// Row `A` holds `𝓛_X θ^A` in the adapted coframe,
    /// `θ = (dx^1..dx^n, δy^1..δy^n)`.
    pub coframe: DMatrix<f64>,
}

impl LieFrameValue {
    /// `max |(𝓛θ^A)(E_B) + θ^A(𝓛E_B)|`; zero because `θ^A(E_B)` is constant.
    pub fn duality_defect(&self) -> f64 {
        (&self.coframe + &self.frame).abs().max()
    }
}

pub fn lie_frame(field: &LiftField, spec: &ManifoldSpec, p: &TMPoint) -> Result<LieFrameValue> {
    checked(field, spec, p)?;
    let n = spec.dim;
    let t = lie_terms(field, spec, &p.x, &p.y)?;
    let mut frame = DMatrix::zeros(2 * n, 2 * n);
    let mut coframe = DMatrix::zeros(2 * n, 2 * n);
    for h in 0..n {
        for a in 0..n {
            // 𝓛X_h = −∂_h X^a X_a + Q_h^a X_ā
            frame[(a, h)] = -t.jet.dh[h][a];
            frame[(n + a, h)] = t.q(h, a);
            // 𝓛X_h̄ = {X^b Γ_{bh}^a − X_h̄(X^ā)} X_ā
            frame[(n + a, n + h)] = t.conn_x[h][a] - t.vert_deriv[h][a];
        }
        for m in 0..n {
            // 𝓛dx^h = ∂_m X^h dx^m
            coframe[(h, m)] = t.jet.dh[m][h];
            // 𝓛δy^h = −Q_m^h dx^m − {X^b Γ_{bm}^h − X_m̄(X^h̄)} δy^m
            coframe[(n + h, m)] = -t.q(m, h);
            coframe[(n + h, n + m)] = -(t.conn_x[m][h] - t.vert_deriv[m][h]);
        }
    }
    Ok(LieFrameValue {
        point: p.clone(),
        frame,
        coframe,
    })
}

/// Tensor field on the base manifold for [`base_lie_derivative`].
///
/// Components are stored flat with upper indices first, then lower
/// indices, each in index order; a (1,2) tensor `S_j^h_i` is laid out
/// `[h][j][i]`.
#[derive(Clone, Debug)]
pub enum TensorField {
    Metric,
    /// `Γ_other − Γ_self`, a (1,2) tensor.
    ConnectionDifference(ManifoldSpec),
    Expr {
        upper: usize,
        lower: usize,
        components: Vec<ScalarExpr>,
    },
}

impl TensorField {
    pub fn rank(&self) -> (usize, usize) {
        match self {
            TensorField::Metric => (0, 2),
            TensorField::ConnectionDifference(_) => (1, 2),
            TensorField::Expr { upper, lower, .. } => (*upper, *lower),
        }
    }

    fn eval<T: Scalar>(&self, spec: &ManifoldSpec, x: &[T]) -> Result<Vec<T>> {
        let n = spec.dim;
        match self {
            TensorField::Metric => Ok(spec.metric_generic(x)?.into_iter().flatten().collect()),
            TensorField::ConnectionDifference(other) => {
                let (ga, gb) = (other.christoffel_generic(x)?, spec.christoffel_generic(x)?);
                let mut out = Vec::with_capacity(n * n * n);
                for h in 0..n {
                    for j in 0..n {
                        for i in 0..n {
                            out.push(ga[h][j][i] - gb[h][j][i]);
                        }
                    }
                }
                Ok(out)
            }
            TensorField::Expr { components, .. } => components.iter().map(|c| Ok(c.ast.eval(x)?)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaseLieValue {
    pub point: Vec<f64>,
    pub upper: usize,
    pub lower: usize,
    /// From `V^a ∂_a S + Σ ∂_{i_k} V^a S_{..a..} − Σ ∂_a V^{j_k} S^{..a..}`.
    pub partial: Vec<f64>,
    /// The same with every `∂` replaced by `∇`.
    pub covariant: Vec<f64>,
}

impl BaseLieValue {
    pub fn defect(&self) -> f64 {
        self.partial.iter().zip(&self.covariant).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.partial.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// For a (0,2) result, the `n×n` matrix.
    pub fn matrix(&self) -> Option<DMatrix<f64>> {
        (self.upper == 0 && self.lower == 2).then(|| {
            let n = self.point.len();
            DMatrix::from_row_slice(n, n, &self.partial)
        })
    }
}

fn index_digits(mut flat: usize, n: usize, rank: usize) -> Vec<usize> {
    let mut d = vec![0; rank];
    for k in (0..rank).rev() {
        d[k] = flat % n;
        flat /= n;
    }
    d
}

fn flat_index(d: &[usize], n: usize) -> usize {
    d.iter().fold(0, |acc, &i| acc * n + i)
}

/// Lie derivative of `S` along a base field, in component and covariant form.
pub fn base_lie_derivative(v: &BaseField, s: &TensorField, spec: &ManifoldSpec, x: &[f64]) -> Result<BaseLieValue> {
    let n = spec.dim;
    let (up, low) = s.rank();
    if !matches!((up, low), (0, 2) | (1, 1) | (1, 2)) {
        return Err(Error::UnsupportedTensor(format!("({up},{low})")));
    }
    if x.len() != n || v.dim() != n {
        return Err(Error::Shape(format!("point and field must have dimension {n}")));
    }
    let rank = up + low;
    let size = n.pow(rank as u32);
    match s {
        TensorField::Expr { components, .. } if components.len() != size => {
            return Err(Error::Shape(format!("({up},{low}) tensor needs {size} components, got {}", components.len())));
        }
        TensorField::ConnectionDifference(other) if other.dim != n => {
            return Err(Error::Shape("connection difference needs equal dimensions".into()));
        }
        _ => {}
    }

    let mut sv = Vec::new();
    let mut ds = Vec::with_capacity(n); // ds[a][I] = ∂_a S_I
    for a in 0..n {
        let d = s.eval(spec, &Dual::seed(x, a))?;
        if a == 0 {
            sv = d.iter().map(|c| c.re).collect();
        }
        ds.push(d.iter().map(|c| c.eps).collect::<Vec<f64>>());
    }
    let (vv, dv) = v.eval_with_jacobian(x)?; // dv[a][h] = ∂_a V^h
    let gamma = spec.christoffel_generic(x)?;

    // ∇_a V^h
    let mut nv = vec![vec![0.0; n]; n];
    for a in 0..n {
        for h in 0..n {
            nv[a][h] = dv[a][h] + (0..n).map(|b| gamma[h][a][b] * vv[b]).sum::<f64>();
        }
    }
    // ∇_a S_I
    let mut ns = ds.clone();
    for (a, row) in ns.iter_mut().enumerate() {
        for (flat, val) in row.iter_mut().enumerate() {
            let d = index_digits(flat, n, rank);
            for slot in 0..rank {
                for b in 0..n {
                    let mut e = d.clone();
                    e[slot] = b;
                    let sb = sv[flat_index(&e, n)];
                    if slot < up {
                        *val += gamma[d[slot]][a][b] * sb;
                    } else {
                        *val -= gamma[b][a][d[slot]] * sb;
                    }
                }
            }
        }
    }

    let assemble = |dsv: &[Vec<f64>], dvv: &[Vec<f64>]| -> Vec<f64> {
        (0..size)
            .map(|flat| {
                let d = index_digits(flat, n, rank);
                let mut r: f64 = (0..n).map(|a| vv[a] * dsv[a][flat]).sum();
                for slot in 0..rank {
                    for a in 0..n {
                        let mut e = d.clone();
                        e[slot] = a;
                        let sa = sv[flat_index(&e, n)];
                        if slot < up {
                            r -= dvv[a][d[slot]] * sa;
                        } else {
                            r += dvv[d[slot]][a] * sa;
                        }
                    }
                }
                r
            })
            .collect()
    };
    Ok(BaseLieValue {
        point: x.to_vec(),
        upper: up,
        lower: low,
        partial: assemble(&ds, &dv),
        covariant: assemble(&ns, &nv),
    })
}
