//! Structures on `TM`: the non-linear connection induced by the Levi-Civita
//! connection, the adapted frame and coframe, and the lift metric
//! `g̃ = a·g₁ + b·g₂ + c·g₃`.
//!
//! Conventions:
//!
//! * `n_coeffs[i][j] = N_i^j = y^a Γ_{ai}^j`
//! * adapted frame `X_h = ∂/∂x^h − N_h^m ∂/∂y^m`, `X_h̄ = ∂/∂y^h`
//! * adapted coframe `dx^h`, `δy^h = dy^h + N_i^h dx^i`
//! * `frame` stores frame vectors as **columns** in `{∂/∂x, ∂/∂y}`;
//!   `coframe` stores coframe forms as **rows** in `{dx, dy}`, so
//!   `coframe · frame = I`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::{self, Mat};
use crate::manifold::{Gamma, ManifoldSpec};
use crate::scalar::{Dual, Scalar};

/// Point `(x, y)` of the tangent bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TMPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl TMPoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert_eq!(x.len(), y.len(), "position and direction must have equal length");
        Self { x, y }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Concatenated coordinates `(x¹..xⁿ, y¹..yⁿ)`.
    pub fn z(&self) -> Vec<f64> {
        self.x.iter().chain(&self.y).copied().collect()
    }

    pub fn from_z(z: &[f64]) -> Self {
        let n = z.len() / 2;
        Self::new(z[..n].to_vec(), z[n..].to_vec())
    }

    pub(crate) fn check(&self, spec: &ManifoldSpec) -> Result<()> {
        if self.x.len() != spec.dim || self.y.len() != spec.dim {
            return Err(Error::Shape(format!(
                "TM point has ({}, {}) coordinates, manifold dimension is {}",
                self.x.len(),
                self.y.len(),
                spec.dim
            )));
        }
        Ok(())
    }
}

/// `N_i^j = y^a Γ_{ai}^j`.
pub fn connection_coeffs<T: Scalar>(gamma: &Gamma<T>, y: &[T]) -> Mat<T> {
    let n = y.len();
    let mut out = linalg::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = T::zero();
            for a in 0..n {
                s += y[a] * gamma[j][a][i];
            }
            out[i][j] = s;
        }
    }
    out
}

/// Coframe rows `{dx^h, δy^h}` in `{dx, dy}`.
pub fn coframe_matrix<T: Scalar>(n_coeffs: &Mat<T>) -> Mat<T> {
    let n = n_coeffs.len();
    let mut c = linalg::identity::<T>(2 * n);
    for h in 0..n {
        for i in 0..n {
            c[n + h][i] = n_coeffs[i][h];
        }
    }
    c
}

/// Frame columns `{X_h, X_h̄}` in `{∂/∂x, ∂/∂y}`.
pub fn frame_matrix<T: Scalar>(n_coeffs: &Mat<T>) -> Mat<T> {
    let n = n_coeffs.len();
    let mut f = linalg::identity::<T>(2 * n);
    for h in 0..n {
        for m in 0..n {
            f[n + m][h] = -n_coeffs[h][m];
        }
    }
    f
}

pub fn nonlinear_connection(spec: &ManifoldSpec, p: &TMPoint) -> Result<DMatrix<f64>> {
    p.check(spec)?;
    let gamma = spec.christoffel_generic(&p.x)?;
    Ok(linalg::to_dmatrix(&connection_coeffs(&gamma, &p.y)))
}

/// Transform the connection coefficients of `spec_from` into the chart of
/// `spec_to`.
///
/// `chart_map[h]` expresses the old coordinate `x^h` as a function of the new
/// coordinates `x^{i'}`; `p` is given in the new chart. Implements
/// `N_{i'}^{h'} = (∂x^{h'}/∂x^h)(∂x^i/∂x^{i'} N_i^h + ∂²x^h/∂x^{i'}∂x^{a'} y^{a'})`
/// with the Jacobian and Hessian of the chart map taken by dual numbers.
pub fn chart_transform_n(
    spec_from: &ManifoldSpec,
    spec_to: &ManifoldSpec,
    chart_map: &[Expr],
    p: &TMPoint,
) -> Result<DMatrix<f64>> {
    p.check(spec_to)?;
    let n = spec_to.dim;
    if chart_map.len() != spec_from.dim || spec_from.dim != n {
        return Err(Error::Shape("chart map must have one component per coordinate".into()));
    }
    // jac[h][i'] = ∂x^h/∂x^{i'}, hess[h][i'][a'] = ∂²x^h/∂x^{i'}∂x^{a'}
    let mut jac = vec![vec![0.0; n]; n];
    let mut hess = vec![vec![vec![0.0; n]; n]; n];
    let mut old_x = vec![0.0; n];
    for (h, comp) in chart_map.iter().enumerate() {
        old_x[h] = comp.eval(&p.x)?;
        for i in 0..n {
            let outer = Dual::seed(&p.x, i);
            for a in 0..n {
                let z: Vec<Dual<Dual<f64>>> = outer
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| Dual::new(v, Dual::from_f64(if k == a { 1.0 } else { 0.0 })))
                    .collect();
                let v = comp.eval(&z)?;
                jac[h][i] = v.re.eps;
                hess[h][i][a] = v.eps.eps;
            }
        }
    }
    let inv_jac = linalg::invert(&jac).ok_or_else(|| Error::SingularJacobian { point: p.x.clone() })?;
    let old_y = linalg::matvec(&jac, &p.y);
    let n_old = nonlinear_connection(spec_from, &TMPoint::new(old_x, old_y))?;
    let mut out = DMatrix::zeros(n, n);
    for ip in 0..n {
        for hp in 0..n {
            let mut s = 0.0;
            for h in 0..n {
                let mut inner = 0.0;
                for i in 0..n {
                    inner += jac[i][ip] * n_old[(i, h)];
                }
                for a in 0..n {
                    inner += hess[h][ip][a] * p.y[a];
                }
                s += inv_jac[hp][h] * inner;
            }
            out[(ip, hp)] = s;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedFrame {
    pub point: TMPoint,
    /// Columns are `X_1..X_n, X_1̄..X_n̄` in the coordinate frame.
    pub frame: DMatrix<f64>,
    /// Rows are `dx^1..dx^n, δy^1..δy^n` in the coordinate coframe.
    pub coframe: DMatrix<f64>,
    pub n_coeffs: DMatrix<f64>,
}

impl AdaptedFrame {
    pub fn duality_defect(&self) -> f64 {
        let n2 = self.frame.nrows();
        (&self.coframe * &self.frame - DMatrix::<f64>::identity(n2, n2)).abs().max()
    }
}

pub fn adapted_frame(spec: &ManifoldSpec, p: &TMPoint) -> Result<AdaptedFrame> {
    p.check(spec)?;
    let gamma = spec.christoffel_generic(&p.x)?;
    let nc = connection_coeffs(&gamma, &p.y);
    let f = AdaptedFrame {
        point: p.clone(),
        frame: linalg::to_dmatrix(&frame_matrix(&nc)),
        coframe: linalg::to_dmatrix(&coframe_matrix(&nc)),
        n_coeffs: linalg::to_dmatrix(&nc),
    };
    debug_assert!(f.duality_defect() < 1e-12);
    Ok(f)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftMetricCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl LiftMetricCoeffs {
    pub const SASAKI: Self = Self { a: 1.0, b: 0.0, c: 1.0 };
    pub const COMPLETE: Self = Self { a: 0.0, b: 1.0, c: 0.0 };

    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    /// `ac − b²`
    pub fn discriminant(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    pub fn validate(&self) -> Result<()> {
        if self.discriminant() == 0.0 {
            return Err(Error::SingularCoefficients {
                a: self.a,
                b: self.b,
                c: self.c,
            });
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(k * self.a, k * self.b, k * self.c)
    }
}

impl std::fmt::Display for LiftMetricCoeffs {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(a, b, c) = ({}, {}, {})", self.a, self.b, self.c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signature {
    Riemannian,
    Pseudo,
    Singular,
}

pub fn signature_classify(coeffs: &LiftMetricCoeffs) -> Signature {
    let d = coeffs.discriminant();
    if d == 0.0 {
        Signature::Singular
    } else if coeffs.a > 0.0 && d > 0.0 {
        Signature::Riemannian
    } else {
        Signature::Pseudo
    }
}

/// `[[a·g, b·g], [b·g, c·g]]` in the adapted coframe.
pub fn lift_blocks<T: Scalar>(g: &Mat<T>, coeffs: &LiftMetricCoeffs) -> Mat<T> {
    let n = g.len();
    let mut m = linalg::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            m[i][j] = g[i][j].scale(coeffs.a);
            m[i][n + j] = g[i][j].scale(coeffs.b);
            m[n + i][j] = g[i][j].scale(coeffs.b);
            m[n + i][n + j] = g[i][j].scale(coeffs.c);
        }
    }
    m
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiftMetricValue {
    pub point: TMPoint,
    pub coeffs: LiftMetricCoeffs,
    pub adapted_blocks: DMatrix<f64>,
    /// Same bilinear form in `{dx, dy}`: `coframeᵀ · adapted_blocks · coframe`.
    pub coordinate_matrix: DMatrix<f64>,
    pub coframe: DMatrix<f64>,
}

impl LiftMetricValue {
    pub fn signature(&self) -> (usize, usize, usize) {
        linalg::inertia(&self.adapted_blocks, 1e-12)
    }
}

pub fn lift_metric(spec: &ManifoldSpec, coeffs: &LiftMetricCoeffs, p: &TMPoint) -> Result<LiftMetricValue> {
    coeffs.validate()?;
    p.check(spec)?;
    let g = spec.metric_generic(&p.x)?;
    let gamma = spec.christoffel_generic(&p.x)?;
    let coframe = linalg::to_dmatrix(&coframe_matrix(&connection_coeffs(&gamma, &p.y)));
    let adapted = linalg::to_dmatrix(&lift_blocks(&g, coeffs));
    let coordinate = coframe.transpose() * &adapted * &coframe;
    Ok(LiftMetricValue {
        point: p.clone(),
        coeffs: *coeffs,
        adapted_blocks: adapted,
        coordinate_matrix: coordinate,
        coframe,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::manifold::catalog;

    fn worked_point() -> TMPoint {
        TMPoint::new(vec![2.0, 0.0], vec![1.0, 3.0])
    }

    #[test]
    fn euclidean_connection_vanishes() {
        let n = nonlinear_connection(&catalog::euclidean(2), &TMPoint::new(vec![0.3, 0.1], vec![2.0, -1.0])).unwrap();
        assert_eq!(n, DMatrix::zeros(2, 2));
    }

    #[test]
    fn polar_connection_at_worked_point() {
        let n = nonlinear_connection(&catalog::polar2(), &worked_point()).unwrap();
        // rows i (r, θ), columns j (r, θ)
        assert!((n[(1, 0)] + 6.0).abs() < 1e-13);
        assert!((n[(0, 1)] - 1.5).abs() < 1e-13);
        assert!((n[(1, 1)] - 0.5).abs() < 1e-13);
        assert_eq!(n[(0, 0)], 0.0);
    }

    #[test]
    fn connection_is_homogeneous_in_y() {
        let spec = catalog::sphere2(1.0);
        let p = TMPoint::new(vec![0.9, 0.3], vec![0.4, -1.1]);
        let p2 = TMPoint::new(p.x.clone(), p.y.iter().map(|v| 2.0 * v).collect());
        let (a, b) = (nonlinear_connection(&spec, &p).unwrap(), nonlinear_connection(&spec, &p2).unwrap());
        assert!((b - a * 2.0).abs().max() < 1e-14);
    }

    #[test]
    fn polar_frame_at_worked_point() {
        let f = adapted_frame(&catalog::polar2(), &worked_point()).unwrap();
        let x_theta: Vec<f64> = f.frame.column(1).iter().copied().collect();
        assert_eq!(x_theta.len(), 4);
        assert!((x_theta[0]).abs() < 1e-14);
        assert!((x_theta[1] - 1.0).abs() < 1e-14);
        assert!((x_theta[2] - 6.0).abs() < 1e-13);
        assert!((x_theta[3] + 0.5).abs() < 1e-13);
        assert!(f.duality_defect() < 1e-12);
        let e = adapted_frame(&catalog::euclidean(3), &TMPoint::new(vec![0.0; 3], vec![1.0; 3])).unwrap();
        assert_eq!(e.frame, DMatrix::identity(6, 6));
    }

    #[test]
    fn coframe_rows_are_delta_y() {
        let spec = catalog::halfplane2();
        let p = TMPoint::new(vec![0.2, 1.4], vec![0.7, -0.3]);
        let f = adapted_frame(&spec, &p).unwrap();
        for h in 0..2 {
            for i in 0..2 {
                assert_eq!(f.coframe[(2 + h, i)], f.n_coeffs[(i, h)]);
            }
            assert_eq!(f.coframe[(2 + h, 2 + h)], 1.0);
        }
    }

    #[test]
    fn identity_and_linear_chart_maps() {
        let spec = catalog::sphere2(1.0);
        let p = TMPoint::new(vec![1.0, 0.5], vec![0.3, 0.8]);
        let id = [parse("x1", 2).unwrap(), parse("x2", 2).unwrap()];
        let n = chart_transform_n(&spec, &spec, &id, &p).unwrap();
        assert!((n - nonlinear_connection(&spec, &p).unwrap()).abs().max() < 1e-14);

        // Linear map x = A x' on the flat plane with a constant metric:
        // N' = A⁻¹ N A vanishes because N does; use the polar chart as source
        // to get a non-zero N and compare with explicit conjugation.
        let polar = catalog::polar2();
        let lin = [parse("2*x1 + x2", 2).unwrap(), parse("x1 + x2", 2).unwrap()];
        // target spec: polar metric pulled back by the linear map
        let rows = vec![
            vec!["4 + (2*x1 + x2)^2".to_string(), "2 + (2*x1 + x2)^2".to_string()],
            vec!["2 + (2*x1 + x2)^2".to_string(), "1 + (2*x1 + x2)^2".to_string()],
        ];
        // (pullback of diag(1, r²) by r = 2x1+x2, θ = x1+x2 is
        // [[4 + r², 2 + r²], [2 + r², 1 + r²]])
        let target = ManifoldSpec::new("lin", &rows, Some(vec![(0.4, 1.0), (0.0, 0.5)])).unwrap();
        let q = TMPoint::new(vec![0.7, 0.2], vec![0.5, -0.4]);
        let transformed = chart_transform_n(&polar, &target, &lin, &q).unwrap();
        let native = nonlinear_connection(&target, &q).unwrap();
        assert!((&transformed - &native).abs().max() < 1e-12);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let old = TMPoint::new(
            (&a * nalgebra::DVector::from_vec(q.x.clone())).iter().copied().collect(),
            (&a * nalgebra::DVector::from_vec(q.y.clone())).iter().copied().collect(),
        );
        let n_old = nonlinear_connection(&polar, &old).unwrap();
        // N'_{i'}^{h'} = (A⁻¹)^{h'}_h A^i_{i'} N_i^h  ->  Aᵀ N A⁻ᵀ in row=i', col=h'
        let conj = a.transpose() * n_old * a.clone().try_inverse().unwrap().transpose();
        assert!((transformed - conj).abs().max() < 1e-12);
    }

    #[test]
    fn cartesian_to_polar_matches_native() {
        let cart = catalog::euclidean(2);
        let polar = catalog::polar2();
        let map = [parse("x1*cos(x2)", 2).unwrap(), parse("x1*sin(x2)", 2).unwrap()];
        let p = TMPoint::new(vec![1.7, 0.6], vec![-0.4, 1.3]);
        let t = chart_transform_n(&cart, &polar, &map, &p).unwrap();
        let native = nonlinear_connection(&polar, &p).unwrap();
        assert!((t - native).abs().max() < 1e-8);
    }

    #[test]
    fn sasaki_on_euclidean_is_identity() {
        let v = lift_metric(&catalog::euclidean(2), &LiftMetricCoeffs::SASAKI, &TMPoint::new(vec![0.1, 0.2], vec![1.0, 2.0])).unwrap();
        assert_eq!(v.adapted_blocks, DMatrix::identity(4, 4));
        assert_eq!(v.coordinate_matrix, DMatrix::identity(4, 4));
    }

    #[test]
    fn determinant_identity_at_worked_point() {
        let v = lift_metric(&catalog::polar2(), &LiftMetricCoeffs::new(2.0, 1.0, 1.0), &worked_point()).unwrap();
        // (ac − b²)^n (det g)² = 1 · 4² = 16
        assert!((v.adapted_blocks.determinant() - 16.0).abs() < 1e-12);
        // The coframe is unimodular so the coordinate form has the same determinant.
        assert!((v.coordinate_matrix.determinant() - 16.0).abs() < 1e-9);
    }

    #[test]
    fn signatures() {
        assert_eq!(signature_classify(&LiftMetricCoeffs::new(1.0, 0.0, 1.0)), Signature::Riemannian);
        assert_eq!(signature_classify(&LiftMetricCoeffs::new(0.0, 1.0, 0.0)), Signature::Pseudo);
        assert_eq!(signature_classify(&LiftMetricCoeffs::new(1.0, 1.0, 1.0)), Signature::Singular);
        assert_eq!(signature_classify(&LiftMetricCoeffs::new(-1.0, 0.0, -1.0)), Signature::Pseudo);
        let v = lift_metric(&catalog::sphere2(1.0), &LiftMetricCoeffs::COMPLETE, &TMPoint::new(vec![1.0, 0.0], vec![0.5, 0.5])).unwrap();
        assert_eq!(v.signature(), (2, 2, 0));
        assert!(matches!(
            lift_metric(&catalog::euclidean(1), &LiftMetricCoeffs::new(1.0, 1.0, 1.0), &TMPoint::new(vec![0.0], vec![0.0])),
            Err(Error::SingularCoefficients { .. })
        ));
    }
}
