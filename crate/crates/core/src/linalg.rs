//! Dense helpers generic over [`Scalar`] for the small (n ≤ 6) matrices that
//! appear in chart computations. Plain `Vec<Vec<T>>`, row-major.

use nalgebra::DMatrix;

use crate::scalar::Scalar;

pub type Mat<T> = Vec<Vec<T>>;

pub fn zeros<T: Scalar>(rows: usize, cols: usize) -> Mat<T> {
    vec![vec![T::zero(); cols]; rows]
}

pub fn identity<T: Scalar>(n: usize) -> Mat<T> {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = T::one();
    }
    m
}

pub fn transpose<T: Scalar>(m: &Mat<T>) -> Mat<T> {
    let (r, c) = (m.len(), m.first().map_or(0, Vec::len));
    (0..c).map(|j| (0..r).map(|i| m[i][j]).collect()).collect()
}

pub fn matmul<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let (r, k, c) = (a.len(), b.len(), b.first().map_or(0, Vec::len));
    let mut out = zeros(r, c);
    for i in 0..r {
        for l in 0..k {
            let ail = a[i][l];
            for j in 0..c {
                out[i][j] += ail * b[l][j];
            }
        }
    }
    out
}

pub fn matvec<T: Scalar>(a: &Mat<T>, v: &[T]) -> Vec<T> {
    a.iter()
        .map(|row| row.iter().zip(v).fold(T::zero(), |acc, (&x, &y)| acc + x * y))
        .collect()
}

pub fn trace<T: Scalar>(m: &Mat<T>) -> T {
    m.iter().enumerate().fold(T::zero(), |acc, (i, row)| acc + row[i])
}

/// Gauss–Jordan inverse with partial pivoting on the real part.
///
/// Returns `None` when a pivot falls below `1e-14` times the largest entry.
pub fn invert<T: Scalar>(m: &Mat<T>) -> Option<Mat<T>> {
    let n = m.len();
    let scale = m
        .iter()
        .flatten()
        .map(|v| v.value().abs())
        .fold(0.0_f64, f64::max);
    if n == 0 || scale == 0.0 {
        return None;
    }
    let mut a = m.clone();
    let mut inv = identity::<T>(n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].value().abs().total_cmp(&a[j][col].value().abs()))
            .unwrap();
        if a[pivot][col].value().abs() <= 1e-14 * scale {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for j in 0..n {
            a[col][j] = a[col][j] / p;
            inv[col][j] = inv[col][j] / p;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = a[i][col];
            for j in 0..n {
                let (acj, icj) = (a[col][j], inv[col][j]);
                a[i][j] -= f * acj;
                inv[i][j] -= f * icj;
            }
        }
    }
    Some(inv)
}

pub fn to_dmatrix(m: &Mat<f64>) -> DMatrix<f64> {
    let r = m.len();
    let c = m.first().map_or(0, Vec::len);
    DMatrix::from_fn(r, c, |i, j| m[i][j])
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Mat<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Counts of (positive, negative, zero) eigenvalues of a symmetric matrix.
pub fn inertia(m: &DMatrix<f64>, zero_tol: f64) -> (usize, usize, usize) {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
    eig.eigenvalues.iter().fold((0, 0, 0), |(p, n, z), &v| {
        if v.abs() <= zero_tol * scale {
            (p, n, z + 1)
        } else if v > 0.0 {
            (p + 1, n, z)
        } else {
            (p, n + 1, z)
        }
    })
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Dual;

    #[test]
    fn inverse_of_dual_matrix_differentiates() {
        // d/dt [[t, 1], [0, 2]]^-1 at t = 1: inverse is [[1/t, -1/(2t)], [0, 1/2]]
        let t = Dual::variable(1.0);
        let m = vec![vec![t, Dual::from_f64(1.0)], vec![Dual::from_f64(0.0), Dual::from_f64(2.0)]];
        let inv = invert(&m).unwrap();
        assert!((inv[0][0].eps + 1.0).abs() < 1e-15);
        assert!((inv[0][1].eps - 0.5).abs() < 1e-15);
        assert_eq!(inv[1][1].re, 0.5);
    }

    #[test]
    fn singular_is_none() {
        let m = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(invert(&m).is_none());
    }

    #[test]
    fn inertia_counts() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(inertia(&m, 1e-12), (1, 1, 1));
    }
}
