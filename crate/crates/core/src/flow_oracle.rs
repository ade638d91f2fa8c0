//! Numerical Lie derivative from the flow: integrate `X` on `TM` together
//! with its variational equation, pull `g̃` back through the flow Jacobian
//! and central-difference in time. Everything here lives in the coordinate
//! frame `{∂/∂x, ∂/∂y}`; the adapted frame is used only to express `X` and
//! `g̃` in coordinates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie_calculus::{Basis, BilinearFormValue};
use crate::lift_fields::{self, LiftField};
use crate::manifold::ManifoldSpec;
use crate::scalar::Dual;
use crate::tangent_bundle::{self, LiftMetricCoeffs, TMPoint};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowOptions {
    pub t_step: f64,
    pub steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { t_step: 1e-3, steps: 64 }
    }
}

impl FlowOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_step > 0.0 && self.t_step.is_finite()) || self.steps == 0 {
            return Err(Error::Invalid(format!(
                "oracle needs t_step > 0 and steps ≥ 1 (got {}, {})",
                self.t_step, self.steps
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub point: TMPoint,
    /// `∂φ_t/∂z` at the initial point.
    pub jacobian: DMatrix<f64>,
    pub t: f64,
}

/// `(Z(z), DZ(z))` for the coordinate field `Z` of `X`.
fn field_and_jacobian(field: &LiftField, spec: &ManifoldSpec, z: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n2 = z.len();
    let mut value = DVector::zeros(n2);
    let mut jac = DMatrix::zeros(n2, n2);
    for k in 0..n2 {
        let d = lift_fields::coordinate_field(field, spec, &Dual::seed(z, k))?;
        for r in 0..n2 {
            if k == 0 {
                value[r] = d[r].re;
            }
            jac[(r, k)] = d[r].eps;
        }
    }
    Ok((value, jac))
}

/// Flow of `X` for time `t` from `p0` in `steps` RK4 steps, with `J̇ = DZ·J`.
pub fn flow(field: &LiftField, spec: &ManifoldSpec, p0: &TMPoint, t: f64, steps: usize) -> Result<FlowState> {
    if steps == 0 {
        return Err(Error::Invalid("flow needs at least one step".into()));
    }
    let n = spec.dim;
    if p0.x.len() != n || p0.y.len() != n || field.dim != n {
        return Err(Error::Shape(format!("flow inputs must have dimension {n}")));
    }
    let n2 = 2 * n;
    let h = t / steps as f64;
    let mut z = DVector::from_vec(p0.z());
    let mut j = DMatrix::<f64>::identity(n2, n2);
    let rhs = |z: &DVector<f64>, j: &DMatrix<f64>, time: f64| -> Result<(DVector<f64>, DMatrix<f64>)> {
        let x = &z.as_slice()[..n];
        if !spec.contains(x) {
            return Err(Error::FlowLeftDomain { t: time, x: x.to_vec() });
        }
        let (v, dz) = field_and_jacobian(field, spec, z.as_slice())?;
        Ok((v, dz * j))
    };
    for step in 0..steps {
        let t0 = step as f64 * h;
        let (k1, m1) = rhs(&z, &j, t0)?;
        let (k2, m2) = rhs(&(&z + &k1 * (h / 2.0)), &(&j + &m1 * (h / 2.0)), t0 + h / 2.0)?;
        let (k3, m3) = rhs(&(&z + &k2 * (h / 2.0)), &(&j + &m2 * (h / 2.0)), t0 + h / 2.0)?;
        let (k4, m4) = rhs(&(&z + &k3 * h), &(&j + &m3 * h), t0 + h)?;
        z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        j += (m1 + m2 * 2.0 + m3 * 2.0 + m4) * (h / 6.0);
        if z.iter().chain(j.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFlow { t: t0 + h });
        }
    }
    if !spec.contains(&z.as_slice()[..n]) {
        return Err(Error::FlowLeftDomain { t, x: z.as_slice()[..n].to_vec() });
    }
    Ok(FlowState {
        point: TMPoint::from_z(z.as_slice()),
        jacobian: j,
        t,
    })
}

/// `φ_t*(g̃)(p0) = Jᵀ · g̃(φ_t(p0)) · J` in coordinates.
pub fn pullback(spec: &ManifoldSpec, coeffs: &LiftMetricCoeffs, state: &FlowState) -> Result<DMatrix<f64>> {
    let g = tangent_bundle::lift_metric(spec, coeffs, &state.point)?;
    Ok(state.jacobian.transpose() * g.coordinate_matrix * &state.jacobian)
}

/// `𝓛_X g̃` at `p0` for several coefficient sets from one pair of flows.
pub fn numeric_lie_derivative_multi(
    field: &LiftField,
    spec: &ManifoldSpec,
    coeffs: &[LiftMetricCoeffs],
    p0: &TMPoint,
    opts: FlowOptions,
) -> Result<Vec<BilinearFormValue>> {
    opts.validate()?;
    for c in coeffs {
        c.validate()?;
    }
    let fwd = flow(field, spec, p0, opts.t_step, opts.steps)?;
    let bwd = flow(field, spec, p0, -opts.t_step, opts.steps)?;
    coeffs
        .iter()
        .map(|c| {
            let m = (pullback(spec, c, &fwd)? - pullback(spec, c, &bwd)?) / (2.0 * opts.t_step);
            let m = (&m + m.transpose()) * 0.5;
            Ok(BilinearFormValue {
                point: p0.clone(),
                matrix: m,
                basis: Basis::Coordinate,
                symmetric: true,
            })
        })
        .collect()
}

pub fn numeric_lie_derivative(
    field: &LiftField,
    spec: &ManifoldSpec,
    coeffs: &LiftMetricCoeffs,
    p0: &TMPoint,
    opts: FlowOptions,
) -> Result<BilinearFormValue> {
    Ok(numeric_lie_derivative_multi(field, spec, std::slice::from_ref(coeffs), p0, opts)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift_fields::{catalog as fcat, complete_lift, BaseField};
    use crate::manifold::catalog as mcat;

    fn dilation(spec: &ManifoldSpec) -> LiftField {
        complete_lift(&BaseField::new("d", &["x1", "x2"], 2).unwrap(), spec).unwrap()
    }

    #[test]
    fn zero_field_is_stationary() {
        let e2 = mcat::euclidean(2);
        let zero = complete_lift(&BaseField::new("z", &["0", "0"], 2).unwrap(), &e2).unwrap();
        let p = TMPoint::new(vec![0.1, 0.2], vec![0.3, 0.4]);
        let s = flow(&zero, &e2, &p, 0.7, 10).unwrap();
        assert_eq!(s.point, p);
        assert_eq!(s.jacobian, DMatrix::identity(4, 4));
        let l = numeric_lie_derivative(&zero, &e2, &LiftMetricCoeffs::SASAKI, &p, FlowOptions::default()).unwrap();
        assert_eq!(l.matrix.abs().max(), 0.0);
    }

    #[test]
    fn dilation_flow_is_exponential() {
        let e2 = mcat::euclidean(2);
        let p = TMPoint::new(vec![0.3, -0.2], vec![0.5, 0.1]);
        let s = flow(&dilation(&e2), &e2, &p, 0.1, 100).unwrap();
        let e = 0.1f64.exp();
        for (got, start) in s.point.z().iter().zip(p.z()) {
            assert!((got - e * start).abs() < 1e-8);
        }
        assert!((&s.jacobian - DMatrix::identity(4, 4) * e).abs().max() < 1e-8);
    }

    #[test]
    fn dilation_lie_derivative_is_twice_metric() {
        let e2 = mcat::euclidean(2);
        let p = TMPoint::new(vec![0.3, -0.2], vec![0.5, 0.1]);
        let c = LiftMetricCoeffs::new(2.0, 1.0, 3.0);
        let l = numeric_lie_derivative(&dilation(&e2), &e2, &c, &p, FlowOptions::default()).unwrap();
        let g = tangent_bundle::lift_metric(&e2, &c, &p).unwrap().coordinate_matrix;
        // Truncation of the central difference is 2g̃·(2h)²/6, so compare relatively.
        let expect = 2.0 * &g;
        assert!((&l.matrix - &expect).norm() / expect.norm() < 1e-6);
        let h: f64 = 1e-3;
        let exact = ((2.0 * h).exp() - (-2.0 * h).exp()) / (2.0 * h);
        assert!((&l.matrix - exact * &g).abs().max() < 1e-9);
    }

    #[test]
    fn sphere_rotation_is_killing() {
        let s = mcat::sphere2(1.0);
        let rot = complete_lift(&fcat::base_field("sphere2", "rotation").unwrap(), &s).unwrap();
        let p = TMPoint::new(vec![1.0, 0.5], vec![0.3, -0.7]);
        let l = numeric_lie_derivative(&rot, &s, &LiftMetricCoeffs::new(1.0, 0.5, 1.0), &p, FlowOptions::default()).unwrap();
        assert!(l.matrix.abs().max() < 1e-6);
    }

    #[test]
    fn group_property() {
        for spec in [mcat::sphere2(1.0), mcat::halfplane2(), mcat::euclidean(2)] {
            let p = TMPoint::new(spec.sampling_box().iter().map(|(l, h)| 0.5 * (l + h)).collect(), vec![0.3, 0.2]);
            for f in fcat::lifted_fields(&spec) {
                let a = flow(&f, &spec, &p, 0.05, 32).unwrap();
                let b = flow(&f, &spec, &a.point, 0.07, 32).unwrap();
                let c = flow(&f, &spec, &p, 0.12, 64).unwrap();
                let d: f64 = b.point.z().iter().zip(c.point.z()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                assert!(d < 1e-7, "{} {}: {d}", spec.name, f.name);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let s = mcat::sphere2(1.0);
        let tilt = complete_lift(&fcat::base_field("sphere2", "tilt").unwrap(), &s).unwrap();
        let p = TMPoint::new(vec![1.1, 0.4], vec![0.5, -0.3]);
        let base = flow(&tilt, &s, &p, 0.2, 64).unwrap();
        let h = 1e-6;
        for k in 0..4 {
            let mut zp = p.z();
            let mut zm = p.z();
            zp[k] += h;
            zm[k] -= h;
            let fp = flow(&tilt, &s, &TMPoint::from_z(&zp), 0.2, 64).unwrap().point.z();
            let fm = flow(&tilt, &s, &TMPoint::from_z(&zm), 0.2, 64).unwrap().point.z();
            for r in 0..4 {
                assert!(((fp[r] - fm[r]) / (2.0 * h) - base.jacobian[(r, k)]).abs() < 1e-5);
            }
        }
        assert!(base.jacobian.determinant() > 0.0);
    }

    #[test]
    fn leaving_the_domain_is_an_error() {
        let h = mcat::halfplane2();
        let push = complete_lift(&BaseField::new("down", &["0", "-1"], 2).unwrap(), &h).unwrap();
        let p = TMPoint::new(vec![0.0, 0.6], vec![0.0, 0.0]);
        assert!(matches!(flow(&push, &h, &p, 1.0, 16), Err(Error::FlowLeftDomain { .. })));
    }
}
