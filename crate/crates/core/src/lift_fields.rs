//! Vector fields on `TM` in adapted components `(X^h, X^h̄)`.
//!
//! Lifts of a base field `V`:
//!
//! * complete `X^C = V^h X_h + y^m (Γ_{ma}^h V^a + ∂_m V^h) X_h̄`
//! * horizontal `X^H = V^h X_h`
//! * vertical `X^V = V^h X_h̄`
//!
//! plus the affine-in-fiber family `X^m̄ = α^m_a(x) y^a + β^m(x)` and raw
//! fields given by expressions in `x` and `y`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ScalarExpr;
use crate::linalg::{self, Mat};
use crate::manifold::ManifoldSpec;
use crate::scalar::{Dual, Scalar};
use crate::tangent_bundle::{self, TMPoint};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "class")]
pub enum KnownClass {
    Killing,
    Homothetic { rho: f64 },
    Conformal,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseField {
    pub name: String,
    pub components: Vec<ScalarExpr>,
    pub known_class: Option<KnownClass>,
}

impl BaseField {
    pub fn new(name: impl Into<String>, components: &[&str], dim: usize) -> Result<Self> {
        if components.len() != dim {
            return Err(Error::Shape(format!("base field needs {dim} components, got {}", components.len())));
        }
        Ok(Self {
            name: name.into(),
            components: components
                .iter()
                .map(|s| ScalarExpr::parse(s, dim))
                .collect::<std::result::Result<_, _>>()?,
            known_class: None,
        })
    }

    pub fn with_class(mut self, class: KnownClass) -> Self {
        self.known_class = Some(class);
        self
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn eval<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        self.components.iter().map(|c| Ok(c.ast.eval(x)?)).collect()
    }

    /// `(V, dv)` with `dv[m][h] = ∂_m V^h`.
    pub fn eval_with_jacobian<T: Scalar>(&self, x: &[T]) -> Result<(Vec<T>, Mat<T>)> {
        let n = self.dim();
        let mut v = Vec::new();
        let mut dv = Vec::with_capacity(n);
        for m in 0..n {
            let vd = self.eval(&Dual::seed(x, m))?;
            if m == 0 {
                v = vd.iter().map(|d| d.re).collect();
            }
            dv.push(vd.iter().map(|d| d.eps).collect());
        }
        Ok((v, dv))
    }

    fn check(&self, spec: &ManifoldSpec) -> Result<()> {
        if self.dim() != spec.dim {
            return Err(Error::Shape(format!(
                "field `{}` has {} components on a {}-dimensional manifold",
                self.name,
                self.dim(),
                spec.dim
            )));
        }
        if let Some(c) = self.components.iter().find(|c| c.ast.arity().0 > spec.dim || c.ast.depends_on_fiber()) {
            return Err(Error::Shape(format!("component `{c}` uses variables outside x1..x{}", spec.dim)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineFiberField {
    /// `alpha[m][a] = α^m_a(x)`
    pub alpha: Vec<Vec<ScalarExpr>>,
    pub beta: Vec<ScalarExpr>,
    pub horiz: Vec<ScalarExpr>,
}

impl AffineFiberField {
    pub fn parse(alpha: &[Vec<&str>], beta: &[&str], horiz: &[&str], dim: usize) -> Result<Self> {
        let p = |s: &&str| ScalarExpr::parse(s, dim);
        if alpha.len() != dim || alpha.iter().any(|r| r.len() != dim) || beta.len() != dim || horiz.len() != dim {
            return Err(Error::Shape(format!("affine field parts must be {dim}×{dim}, {dim}, {dim}")));
        }
        Ok(Self {
            alpha: alpha
                .iter()
                .map(|r| r.iter().map(p).collect::<std::result::Result<_, _>>())
                .collect::<std::result::Result<_, _>>()?,
            beta: beta.iter().map(p).collect::<std::result::Result<_, _>>()?,
            horiz: horiz.iter().map(p).collect::<std::result::Result<_, _>>()?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftKind {
    Complete,
    Horizontal,
    Vertical,
    FiberPreserving,
    General,
}

impl LiftKind {
    pub fn is_fiber_preserving(self) -> bool {
        self != LiftKind::General
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Provenance {
    Base(BaseField),
    Affine(AffineFiberField),
    /// `horiz` and `vert` are expressions in `x` and `y`.
    Raw { horiz: Vec<ScalarExpr>, vert: Vec<ScalarExpr> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftField {
    pub name: String,
    pub kind: LiftKind,
    pub dim: usize,
    pub provenance: Provenance,
}

impl LiftField {
    /// Adapted components `(X^h, X^h̄)` at `(x, y)`.
    pub fn components<T: Scalar>(&self, spec: &ManifoldSpec, x: &[T], y: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let n = self.dim;
        match (&self.provenance, self.kind) {
            (Provenance::Base(v), LiftKind::Horizontal) => Ok((v.eval(x)?, vec![T::zero(); n])),
            (Provenance::Base(v), LiftKind::Vertical) => Ok((vec![T::zero(); n], v.eval(x)?)),
            (Provenance::Base(v), _) => {
                let alpha = complete_lift_alpha(v, spec, x)?;
                Ok((v.eval(x)?, linalg::matvec(&alpha, y)))
            }
            (Provenance::Affine(f), _) => {
                let mut vert = Vec::with_capacity(n);
                for m in 0..n {
                    let mut s = f.beta[m].ast.eval(x)?;
                    for a in 0..n {
                        s += f.alpha[m][a].ast.eval(x)? * y[a];
                    }
                    vert.push(s);
                }
                let horiz = f.horiz.iter().map(|e| e.ast.eval(x)).collect::<std::result::Result<_, _>>()?;
                Ok((horiz, vert))
            }
            (Provenance::Raw { horiz, vert }, _) => Ok((
                horiz.iter().map(|e| e.ast.eval_tm(x, y)).collect::<std::result::Result<_, _>>()?,
                vert.iter().map(|e| e.ast.eval_tm(x, y)).collect::<std::result::Result<_, _>>()?,
            )),
        }
    }

    /// Induced base field `V = X^h ∂/∂x^h` of a fiber-preserving field.
    pub fn base_field(&self) -> Option<&BaseField> {
        match &self.provenance {
            Provenance::Base(v) if self.kind != LiftKind::Vertical => Some(v),
            _ => None,
        }
    }

    pub fn require_fiber_preserving(&self) -> Result<()> {
        if self.kind.is_fiber_preserving() {
            Ok(())
        } else {
            Err(Error::NotFiberPreserving(self.name.clone()))
        }
    }

    /// Largest `|∂X^h/∂y^k|` at `p`; zero for fiber-preserving fields.
    pub fn fiber_dependence(&self, spec: &ManifoldSpec, p: &TMPoint) -> Result<f64> {
        let n = self.dim;
        let mut worst = 0.0_f64;
        for k in 0..n {
            let x = Dual::lift(&p.x);
            let y = Dual::seed(&p.y, k);
            let (h, _) = self.components(spec, &x, &y)?;
            worst = h.iter().fold(worst, |w, d| w.max(d.eps.abs()));
        }
        Ok(worst)
    }
}

/// `α^m_a = Γ_{ah}^m V^h + ∂_a V^m`, the fiber-linear part of `X^C`.
pub fn complete_lift_alpha<T: Scalar>(v: &BaseField, spec: &ManifoldSpec, x: &[T]) -> Result<Mat<T>> {
    let n = v.dim();
    let gamma = spec.christoffel_generic(x)?;
    let (vx, dv) = v.eval_with_jacobian(x)?;
    let mut alpha = linalg::zeros(n, n);
    for m in 0..n {
        for a in 0..n {
            let mut s = dv[a][m];
            for h in 0..n {
                s += gamma[m][a][h] * vx[h];
            }
            alpha[m][a] = s;
        }
    }
    Ok(alpha)
}

fn lift(v: &BaseField, spec: &ManifoldSpec, kind: LiftKind) -> Result<LiftField> {
    v.check(spec)?;
    let prefix = match kind {
        LiftKind::Complete => "C",
        LiftKind::Horizontal => "H",
        LiftKind::Vertical => "V",
        _ => unreachable!(),
    };
    Ok(LiftField {
        name: format!("{}^{prefix}", v.name),
        kind,
        dim: spec.dim,
        provenance: Provenance::Base(v.clone()),
    })
}

pub fn complete_lift(v: &BaseField, spec: &ManifoldSpec) -> Result<LiftField> {
    lift(v, spec, LiftKind::Complete)
}

pub fn horizontal_lift(v: &BaseField, spec: &ManifoldSpec) -> Result<LiftField> {
    lift(v, spec, LiftKind::Horizontal)
}

pub fn vertical_lift(v: &BaseField, spec: &ManifoldSpec) -> Result<LiftField> {
    lift(v, spec, LiftKind::Vertical)
}

pub fn affine_fiber_field(spec: &ManifoldSpec, name: impl Into<String>, field: &AffineFiberField) -> Result<LiftField> {
    let n = spec.dim;
    if field.alpha.len() != n || field.alpha.iter().any(|r| r.len() != n) || field.beta.len() != n || field.horiz.len() != n {
        return Err(Error::Shape(format!("affine field parts must be {n}×{n}, {n}, {n}")));
    }
    let all = field.alpha.iter().flatten().chain(&field.beta).chain(&field.horiz);
    for e in all {
        if e.ast.depends_on_fiber() || e.ast.arity().0 > n {
            return Err(Error::Shape(format!("affine coefficient `{e}` must be a function of x1..x{n}")));
        }
    }
    Ok(LiftField {
        name: name.into(),
        kind: LiftKind::FiberPreserving,
        dim: n,
        provenance: Provenance::Affine(field.clone()),
    })
}

/// Field from raw adapted-component expressions in `x` and `y`.
///
/// The kind is `fiber_preserving` when no horizontal component mentions a
/// fiber variable, `general` otherwise.
pub fn raw_field(spec: &ManifoldSpec, name: impl Into<String>, horiz: &[&str], vert: &[&str]) -> Result<LiftField> {
    let n = spec.dim;
    if horiz.len() != n || vert.len() != n {
        return Err(Error::Shape(format!("raw field needs {n} horizontal and {n} vertical components")));
    }
    let parse = |s: &&str| ScalarExpr::parse_tm(s, n);
    let horiz: Vec<ScalarExpr> = horiz.iter().map(parse).collect::<std::result::Result<_, _>>()?;
    let vert: Vec<ScalarExpr> = vert.iter().map(parse).collect::<std::result::Result<_, _>>()?;
    let kind = if horiz.iter().any(|e| e.ast.depends_on_fiber()) {
        LiftKind::General
    } else {
        LiftKind::FiberPreserving
    };
    Ok(LiftField {
        name: name.into(),
        kind,
        dim: n,
        provenance: Provenance::Raw { horiz, vert },
    })
}

/// Coordinate components `(ẋ, ẏ) = (X^h, X^h̄ − N_k^h X^k)` at `z = (x, y)`.
pub fn coordinate_field<T: Scalar>(field: &LiftField, spec: &ManifoldSpec, z: &[T]) -> Result<Vec<T>> {
    let n = spec.dim;
    let (x, y) = z.split_at(n);
    let (h, v) = field.components(spec, x, y)?;
    let gamma = spec.christoffel_generic(x)?;
    let nc = tangent_bundle::connection_coeffs(&gamma, y);
    let mut out = h.clone();
    for m in 0..n {
        let mut s = v[m];
        for k in 0..n {
            s -= nc[k][m] * h[k];
        }
        out.push(s);
    }
    Ok(out)
}

pub fn coordinate_components(field: &LiftField, spec: &ManifoldSpec, p: &TMPoint) -> Result<Vec<f64>> {
    p.check(spec)?;
    coordinate_field(field, spec, &p.z())
}

/// Adapted components at a point as one `2n` vector.
pub fn adapted_components(field: &LiftField, spec: &ManifoldSpec, p: &TMPoint) -> Result<Vec<f64>> {
    p.check(spec)?;
    let (mut h, v) = field.components(spec, &p.x, &p.y)?;
    h.extend(v);
    Ok(h)
}

/// Built-in base and affine fields, keyed by the manifold they live on.
pub mod catalog {
    use super::*;
    use crate::manifold;

    pub struct CatalogField {
        pub name: &'static str,
        pub manifold: &'static str,
        pub components: &'static [&'static str],
        pub known_class: KnownClass,
    }

    pub struct CatalogAffine {
        pub name: &'static str,
        pub manifold: &'static str,
        pub alpha: &'static [&'static [&'static str]],
        pub beta: &'static [&'static str],
        pub horiz: &'static [&'static str],
    }

    use KnownClass::*;

    pub const FIELDS: &[CatalogField] = &[
        CatalogField { name: "translation", manifold: "euclidean1", components: &["1"], known_class: Killing },
        CatalogField { name: "dilation", manifold: "euclidean1", components: &["x1"], known_class: Homothetic { rho: 1.0 } },
        CatalogField { name: "quadratic", manifold: "euclidean1", components: &["x1^2"], known_class: Conformal },
        CatalogField { name: "translation", manifold: "euclidean2", components: &["1", "0"], known_class: Killing },
        CatalogField { name: "rotation", manifold: "euclidean2", components: &["-x2", "x1"], known_class: Killing },
        CatalogField { name: "dilation", manifold: "euclidean2", components: &["x1", "x2"], known_class: Homothetic { rho: 1.0 } },
        CatalogField { name: "conformal_z2", manifold: "euclidean2", components: &["x1^2 - x2^2", "2*x1*x2"], known_class: Conformal },
        CatalogField { name: "shear", manifold: "euclidean2", components: &["x2", "0"], known_class: None },
        CatalogField { name: "wave", manifold: "euclidean2", components: &["sin(x2)", "cos(x1)"], known_class: None },
        CatalogField { name: "rotation", manifold: "euclidean3", components: &["-x2", "x1", "0"], known_class: Killing },
        CatalogField { name: "dilation", manifold: "euclidean3", components: &["x1", "x2", "x3"], known_class: Homothetic { rho: 1.0 } },
        CatalogField { name: "twist", manifold: "euclidean3", components: &["x3", "0", "x1*x2"], known_class: None },
        CatalogField { name: "rotation", manifold: "polar2", components: &["0", "1"], known_class: Killing },
        CatalogField { name: "dilation", manifold: "polar2", components: &["x1", "0"], known_class: Homothetic { rho: 1.0 } },
        CatalogField { name: "radial", manifold: "polar2", components: &["1", "0"], known_class: None },
        CatalogField { name: "rotation", manifold: "sphere2", components: &["0", "1"], known_class: Killing },
        CatalogField { name: "tilt", manifold: "sphere2", components: &["-sin(x2)", "-cos(x1)/sin(x1)*cos(x2)"], known_class: Killing },
        CatalogField { name: "conformal_polar", manifold: "sphere2", components: &["sin(x1)", "0"], known_class: Conformal },
        CatalogField { name: "meridian", manifold: "sphere2", components: &["1", "0"], known_class: None },
        CatalogField { name: "translation", manifold: "halfplane2", components: &["1", "0"], known_class: Killing },
        CatalogField { name: "dilation", manifold: "halfplane2", components: &["x1", "x2"], known_class: Killing },
        CatalogField { name: "special", manifold: "halfplane2", components: &["x1^2 - x2^2", "2*x1*x2"], known_class: Killing },
        CatalogField { name: "vertical_push", manifold: "halfplane2", components: &["0", "1"], known_class: None },
        CatalogField { name: "constant", manifold: "torus_flat2", components: &["1", "0"], known_class: Killing },
        CatalogField { name: "constant2", manifold: "torus_flat2", components: &["0", "1"], known_class: Killing },
        CatalogField { name: "wave", manifold: "torus_flat2", components: &["sin(x2)", "0"], known_class: None },
    ];

    pub const AFFINE: &[CatalogAffine] = &[
        CatalogAffine { name: "fiber_dilation", manifold: "euclidean2", alpha: &[&["1", "0"], &["0", "1"]], beta: &["0", "0"], horiz: &["0", "0"] },
        CatalogAffine { name: "complete_dilation", manifold: "euclidean2", alpha: &[&["1", "0"], &["0", "1"]], beta: &["0", "0"], horiz: &["x1", "x2"] },
        CatalogAffine { name: "complete_rotation", manifold: "euclidean2", alpha: &[&["0", "-1"], &["1", "0"]], beta: &["0", "0"], horiz: &["-x2", "x1"] },
        CatalogAffine { name: "fiber_shift", manifold: "euclidean2", alpha: &[&["0", "0"], &["0", "0"]], beta: &["1", "0"], horiz: &["0", "0"] },
        CatalogAffine { name: "skewed", manifold: "euclidean2", alpha: &[&["x1", "0"], &["0", "1"]], beta: &["x2", "0"], horiz: &["1", "0"] },
        CatalogAffine { name: "vertical_constant", manifold: "torus_flat2", alpha: &[&["0", "0"], &["0", "0"]], beta: &["1", "0"], horiz: &["0", "0"] },
        CatalogAffine { name: "fiber_dilation", manifold: "torus_flat2", alpha: &[&["1", "0"], &["0", "1"]], beta: &["0", "0"], horiz: &["0", "0"] },
        CatalogAffine {
            name: "complete_rotation",
            manifold: "sphere2",
            alpha: &[&["0", "-sin(x1)*cos(x1)"], &["cos(x1)/sin(x1)", "0"]],
            beta: &["0", "0"],
            horiz: &["0", "1"],
        },
        CatalogAffine { name: "fiber_dilation", manifold: "sphere2", alpha: &[&["1", "0"], &["0", "1"]], beta: &["0", "0"], horiz: &["0", "0"] },
        CatalogAffine { name: "complete_dilation", manifold: "halfplane2", alpha: &[&["1", "0"], &["0", "1"]], beta: &["0", "0"], horiz: &["x1", "x2"] },
    ];

    pub fn base_fields(manifold: &str) -> Vec<BaseField> {
        let dim = manifold::catalog::by_name(manifold).map_or(0, |m| m.dim);
        FIELDS
            .iter()
            .filter(|f| f.manifold == manifold)
            .map(|f| BaseField::new(f.name, f.components, dim).expect("catalog field parses").with_class(f.known_class))
            .collect()
    }

    pub fn base_field(manifold: &str, name: &str) -> Option<BaseField> {
        base_fields(manifold).into_iter().find(|f| f.name == name)
    }

    pub fn affine_fields(manifold: &str) -> Vec<(String, AffineFiberField)> {
        let dim = manifold::catalog::by_name(manifold).map_or(0, |m| m.dim);
        AFFINE
            .iter()
            .filter(|f| f.manifold == manifold)
            .map(|f| {
                let alpha: Vec<Vec<&str>> = f.alpha.iter().map(|r| r.to_vec()).collect();
                (f.name.to_string(), AffineFiberField::parse(&alpha, f.beta, f.horiz, dim).expect("catalog affine field parses"))
            })
            .collect()
    }

    /// Every lift (C, H, V) of every catalog base field plus the affine fields.
    pub fn lifted_fields(spec: &ManifoldSpec) -> Vec<LiftField> {
        let mut out = Vec::new();
        for v in base_fields(&spec.name) {
            out.push(complete_lift(&v, spec).unwrap());
            out.push(horizontal_lift(&v, spec).unwrap());
            out.push(vertical_lift(&v, spec).unwrap());
        }
        for (name, f) in affine_fields(&spec.name) {
            out.push(affine_fiber_field(spec, name, &f).unwrap());
        }
        out
    }
}
