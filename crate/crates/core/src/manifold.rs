//! Base-manifold geometry in a single chart.
//!
//! Index layouts used throughout the crate:
//!
//! * metric `g[i][j] = g_{ij}`
//! * metric derivative `dg[k][i][j] = ∂_k g_{ij}`
//! * Christoffel `gamma[k][i][j] = Γ_{ij}^k` (upper index first)
//! * Christoffel derivative `dgamma[l][k][i][j] = ∂_l Γ_{ij}^k`
//! * curvature `k[i][j][k][m] = K_{ijk}^m` with
//!   `K_{ijk}^m = ∂_i Γ_{jk}^m − ∂_j Γ_{ik}^m + Γ_{ia}^m Γ_{jk}^a − Γ_{ja}^m Γ_{ik}^a`.
//!
//! With this curvature, `K(∂_i, ∂_j)∂_k = K_{ijk}^m ∂_m` is `∇_i∇_j∂_k − ∇_j∇_i∂_k`,
//! so the round sphere has sectional curvature `+1`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ScalarExpr;
use crate::linalg::{self, Mat};
use crate::scalar::{Dual, Scalar};

pub type Gamma<T> = Vec<Vec<Vec<T>>>;
pub type Riemann<T> = Vec<Vec<Vec<Vec<T>>>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub name: String,
    pub dim: usize,
    /// `metric[i][j]` is the text and tree of `g_{ij}`.
    pub metric: Vec<Vec<ScalarExpr>>,
    /// Coordinate box `[lo, hi]` per axis used for sampling and domain checks.
    pub domain_hint: Option<Vec<(f64, f64)>>,
}

impl ManifoldSpec {
    /// Parse metric component text and validate the result.
    pub fn new(
        name: impl Into<String>,
        metric: &[Vec<String>],
        domain_hint: Option<Vec<(f64, f64)>>,
    ) -> Result<Self> {
        let dim = metric.len();
        if dim == 0 {
            return Err(Error::Shape("metric must have at least one row".into()));
        }
        let mut rows = Vec::with_capacity(dim);
        for row in metric {
            if row.len() != dim {
                return Err(Error::Shape(format!("metric row has {} entries, expected {dim}", row.len())));
            }
            rows.push(
                row.iter()
                    .map(|s| ScalarExpr::parse(s, dim))
                    .collect::<std::result::Result<Vec<_>, _>>()?,
            );
        }
        if let Some(hint) = &domain_hint {
            if hint.len() != dim || hint.iter().any(|(lo, hi)| !(lo < hi)) {
                return Err(Error::Shape(format!("domain_hint must hold {dim} intervals with lo < hi")));
            }
        }
        let spec = Self {
            name: name.into(),
            dim,
            metric: rows,
            domain_hint,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Coordinate box used for sampling; `[-1, 1]^n` when no hint is given.
    pub fn sampling_box(&self) -> Vec<(f64, f64)> {
        self.domain_hint.clone().unwrap_or_else(|| vec![(-1.0, 1.0); self.dim])
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.domain_hint {
            None => true,
            Some(b) => b.iter().zip(x).all(|(&(lo, hi), &v)| v >= lo && v <= hi),
        }
    }

    /// Symmetry and positive definiteness over a lattice of the domain hint.
    pub fn validate(&self) -> Result<()> {
        let per_axis = match self.dim {
            1 => 9,
            2 => 5,
            3 => 4,
            _ => 3,
        };
        for x in lattice(&self.sampling_box(), per_axis) {
            for i in 0..self.dim {
                for j in (i + 1)..self.dim {
                    let a = self.metric[i][j].ast.eval(&x)?;
                    let b = self.metric[j][i].ast.eval(&x)?;
                    if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                        return Err(Error::AsymmetricMetric { i, j, point: x });
                    }
                }
            }
            let g = linalg::to_dmatrix(&self.metric_generic(&x)?);
            if g.cholesky().is_none() {
                return Err(Error::NotPositiveDefinite { point: x });
            }
        }
        Ok(())
    }

    /// `g_{ij}(x)`, built from the upper triangle.
    pub fn metric_generic<T: Scalar>(&self, x: &[T]) -> Result<Mat<T>> {
        let n = self.dim;
        let mut g = linalg::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.metric[i][j].ast.eval(x)?;
                g[i][j] = v;
                g[j][i] = v;
            }
        }
        Ok(g)
    }

    /// `(g, dg)` with `dg[k][i][j] = ∂_k g_{ij}`.
    pub fn metric_with_derivs<T: Scalar>(&self, x: &[T]) -> Result<(Mat<T>, Vec<Mat<T>>)> {
        let n = self.dim;
        let mut g = linalg::zeros(n, n);
        let mut dg = Vec::with_capacity(n);
        for k in 0..n {
            let gd = self.metric_generic(&Dual::seed(x, k))?;
            if k == 0 {
                g = gd.iter().map(|r| r.iter().map(|v| v.re).collect()).collect();
            }
            dg.push(gd.iter().map(|r| r.iter().map(|v| v.eps).collect()).collect());
        }
        Ok((g, dg))
    }

    pub fn metric_inverse_generic<T: Scalar>(&self, g: &Mat<T>, x: &[T]) -> Result<Mat<T>> {
        linalg::invert(g).ok_or_else(|| Error::SingularMetric {
            point: x.iter().map(Scalar::value).collect(),
        })
    }

    /// Levi-Civita `Γ_{ij}^k = ½ g^{km}(∂_i g_{mj} + ∂_j g_{mi} − ∂_m g_{ij})`.
    pub fn christoffel_generic<T: Scalar>(&self, x: &[T]) -> Result<Gamma<T>> {
        let n = self.dim;
        let (g, dg) = self.metric_with_derivs(x)?;
        let ginv = self.metric_inverse_generic(&g, x)?;
        let mut lowered = vec![vec![vec![T::zero(); n]; n]; n]; // [m][i][j]
        for m in 0..n {
            for i in 0..n {
                for j in i..n {
                    let v = (dg[i][m][j] + dg[j][m][i] - dg[m][i][j]).scale(0.5);
                    lowered[m][i][j] = v;
                    lowered[m][j][i] = v;
                }
            }
        }
        let mut gamma = vec![vec![vec![T::zero(); n]; n]; n];
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let mut s = T::zero();
                    for m in 0..n {
                        s += ginv[k][m] * lowered[m][i][j];
                    }
                    gamma[k][i][j] = s;
                    gamma[k][j][i] = s;
                }
            }
        }
        Ok(gamma)
    }

    /// `(Γ, dΓ)` with `dgamma[l][k][i][j] = ∂_l Γ_{ij}^k`.
    pub fn christoffel_with_derivs<T: Scalar>(&self, x: &[T]) -> Result<(Gamma<T>, Vec<Gamma<T>>)> {
        let n = self.dim;
        let mut gamma = Vec::new();
        let mut dgamma = Vec::with_capacity(n);
        for l in 0..n {
            let gd = self.christoffel_generic(&Dual::seed(x, l))?;
            if l == 0 {
                gamma = map3(&gd, |v| v.re);
            }
            dgamma.push(map3(&gd, |v| v.eps));
        }
        Ok((gamma, dgamma))
    }

    pub fn curvature_generic<T: Scalar>(&self, x: &[T]) -> Result<Riemann<T>> {
        let (gamma, dgamma) = self.christoffel_with_derivs(x)?;
        Ok(curvature_from(&gamma, &dgamma))
    }
}

/// `K_{ijk}^m` from Christoffels and their derivatives.
pub fn curvature_from<T: Scalar>(gamma: &Gamma<T>, dgamma: &[Gamma<T>]) -> Riemann<T> {
    let n = gamma.len();
    let mut k = vec![vec![vec![vec![T::zero(); n]; n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            for kk in 0..n {
                for m in 0..n {
                    let mut s = dgamma[i][m][j][kk] - dgamma[j][m][i][kk];
                    for a in 0..n {
                        s += gamma[m][i][a] * gamma[a][j][kk] - gamma[m][j][a] * gamma[a][i][kk];
                    }
                    k[i][j][kk][m] = s;
                }
            }
        }
    }
    k
}

fn map3<A: Copy, B>(v: &[Vec<Vec<A>>], f: impl Fn(A) -> B + Copy) -> Vec<Vec<Vec<B>>> {
    v.iter()
        .map(|a| a.iter().map(|b| b.iter().map(|&c| f(c)).collect()).collect())
        .collect()
}

/// Cell-centred lattice with `per_axis` points per axis.
pub fn lattice(bounds: &[(f64, f64)], per_axis: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for &(lo, hi) in bounds {
        let step = (hi - lo) / per_axis as f64;
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..per_axis).map(move |k| {
                    let mut p = prefix.clone();
                    p.push(lo + step * (k as f64 + 0.5));
                    p
                })
            })
            .collect();
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricValue {
    pub point: Vec<f64>,
    pub g: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
}

pub fn metric_at(spec: &ManifoldSpec, p: &[f64]) -> Result<MetricValue> {
    check_point(spec, p)?;
    let g = spec.metric_generic(p)?;
    let inverse = spec.metric_inverse_generic(&g, p)?;
    Ok(MetricValue {
        point: p.to_vec(),
        g: linalg::to_dmatrix(&g),
        inverse: linalg::to_dmatrix(&inverse),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChristoffelValue {
    pub point: Vec<f64>,
    /// `gamma[k][i][j] = Γ_{ij}^k`
    pub gamma: Gamma<f64>,
}

pub fn christoffel(spec: &ManifoldSpec, p: &[f64]) -> Result<ChristoffelValue> {
    check_point(spec, p)?;
    Ok(ChristoffelValue {
        point: p.to_vec(),
        gamma: spec.christoffel_generic(p)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureValue {
    pub point: Vec<f64>,
    /// `k[i][j][k][m] = K_{ijk}^m`
    pub k: Riemann<f64>,
    /// `g(K(∂₁,∂₂)∂₂, ∂₁) / det g`, two-dimensional charts only.
    pub sectional: Option<f64>,
}

impl CurvatureValue {
    /// `K_{ijkl} = g_{lm} K_{ijk}^m`.
    pub fn lowered(&self, g: &DMatrix<f64>) -> Riemann<f64> {
        let n = self.k.len();
        let mut out = vec![vec![vec![vec![0.0; n]; n]; n]; n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        out[i][j][k][l] = (0..n).map(|m| g[(l, m)] * self.k[i][j][k][m]).sum();
                    }
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.k.iter().flatten().flatten().flatten().fold(0.0, |a, v| a.max(v.abs()))
    }
}

pub fn curvature(spec: &ManifoldSpec, p: &[f64]) -> Result<CurvatureValue> {
    check_point(spec, p)?;
    let k = spec.curvature_generic(p)?;
    let sectional = if spec.dim == 2 {
        let g = spec.metric_generic(p)?;
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        let num: f64 = (0..2).map(|m| g[0][m] * k[0][1][1][m]).sum();
        Some(num / det)
    } else {
        None
    };
    Ok(CurvatureValue {
        point: p.to_vec(),
        k,
        sectional,
    })
}

fn check_point(spec: &ManifoldSpec, p: &[f64]) -> Result<()> {
    if p.len() != spec.dim {
        return Err(Error::Shape(format!("point has {} coordinates, manifold dimension is {}", p.len(), spec.dim)));
    }
    Ok(())
}

/// Built-in manifolds, all defined through expression text.
pub mod catalog {
    use std::f64::consts::PI;

    use super::ManifoldSpec;

    pub const NAMES: &[&str] = &[
        "euclidean1",
        "euclidean2",
        "euclidean3",
        "polar2",
        "sphere2",
        "halfplane2",
        "torus_flat2",
    ];

    fn build(name: &str, rows: &[&[&str]], hint: Vec<(f64, f64)>) -> ManifoldSpec {
        let rows: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect();
        ManifoldSpec::new(name, &rows, Some(hint)).expect("catalog manifold is valid")
    }

    pub fn euclidean(n: usize) -> ManifoldSpec {
        let rows: Vec<Vec<String>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { "1" } else { "0" }.to_string()).collect())
            .collect();
        ManifoldSpec::new(format!("euclidean{n}"), &rows, Some(vec![(-1.5, 1.5); n])).expect("valid")
    }

    /// Flat plane in polar coordinates `(r, θ)`.
    pub fn polar2() -> ManifoldSpec {
        build("polar2", &[&["1", "0"], &["0", "x1^2"]], vec![(0.5, 2.5), (-3.0, 3.0)])
    }

    /// Round sphere of radius `r` in `(θ, φ)`; the hint keeps 0.1 away from the poles.
    pub fn sphere2(r: f64) -> ManifoldSpec {
        let r2 = format!("{:?}", r * r);
        let rows: Vec<Vec<String>> = vec![
            vec![r2.clone(), "0".into()],
            vec!["0".into(), format!("{r2}*sin(x1)^2")],
        ];
        let name = if r == 1.0 { "sphere2".to_string() } else { format!("sphere2(r={r})") };
        ManifoldSpec::new(name, &rows, Some(vec![(0.1, PI - 0.1), (-PI, PI)])).expect("valid")
    }

    /// Poincaré upper half-plane.
    pub fn halfplane2() -> ManifoldSpec {
        build("halfplane2", &[&["1/x2^2", "0"], &["0", "1/x2^2"]], vec![(-2.0, 2.0), (0.5, 2.5)])
    }

    /// Flat torus with radii 2 and 1 in angle coordinates.
    pub fn torus_flat2() -> ManifoldSpec {
        build("torus_flat2", &[&["4", "0"], &["0", "1"]], vec![(0.0, 2.0 * PI), (0.0, 2.0 * PI)])
    }

    pub fn by_name(name: &str) -> Option<ManifoldSpec> {
        Some(match name {
            "euclidean1" => euclidean(1),
            "euclidean2" => euclidean(2),
            "euclidean3" => euclidean(3),
            "polar2" => polar2(),
            "sphere2" => sphere2(1.0),
            "halfplane2" => halfplane2(),
            "torus_flat2" => torus_flat2(),
            _ => return None,
        })
    }

    pub fn all() -> Vec<ManifoldSpec> {
        NAMES.iter().map(|n| by_name(n).unwrap()).collect()
    }
}
