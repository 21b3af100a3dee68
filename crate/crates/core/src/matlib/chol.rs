use super::{Matrix, DEFAULT_TOL};
use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors a symmetric matrix, reading only its lower triangle.
    /// Returns `None` as soon as a pivot is not strictly positive.
    pub fn factor(a: &Matrix) -> Option<Cholesky> {
        assert!(a.is_square(), "cholesky of a non-square matrix");
        Self::factor_slice(a.rows(), a.as_slice())
    }

    pub(crate) fn factor_slice(n: usize, a: &[f64]) -> Option<Cholesky> {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let s = a[i * n + j] - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Cholesky { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>() * 2.0
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for i in 0..n {
            let s = b[i] - dot(&self.l[i * n..i * n + i], &b[..i]);
            b[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Inverse of the factored matrix (symmetric by construction).
    pub fn inverse(&self) -> Matrix {
        let n = self.n;
        // inv(L) column by column, then inv(A) = inv(L)ᵀ inv(L)
        let mut linv = vec![0.0; n * n];
        for j in 0..n {
            linv[j * n + j] = 1.0 / self.l[j * n + j];
            for i in j + 1..n {
                let mut s = 0.0;
                for k in j..i {
                    s -= self.l[i * n + k] * linv[k * n + j];
                }
                linv[i * n + j] = s / self.l[i * n + i];
            }
        }
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in i..n {
                    s += linv[k * n + i] * linv[k * n + j];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }
}

/// Four-way unrolled dot product; the independent accumulators let the
/// compiler keep the loop vectorised.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let chunks = n / 4;
    for c in 0..chunks {
        let k = 4 * c;
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for k in 4 * chunks..n {
        s += a[k] * b[k];
    }
    s
}

/// True iff `m - margin·I` admits a Cholesky factorisation.
///
/// The input must be symmetric to within `DEFAULT_TOL` relative to its
/// largest entry; anything worse is reported as an error rather than silently
/// symmetrised.
pub fn is_positive_definite(m: &Matrix, margin: f64) -> Result<bool> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "definiteness test on a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let asym = m.asymmetry();
    if asym > DEFAULT_TOL * (1.0 + m.max_abs()) {
        return Err(Error::NotSymmetric(asym));
    }
    let mut shifted = m.clone();
    for i in 0..m.rows() {
        shifted[(i, i)] -= margin;
    }
    Ok(Cholesky::factor(&shifted).is_some())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_with_half_margin() {
        assert!(is_positive_definite(&Matrix::identity(2), 0.5).unwrap());
    }

    #[test]
    fn indefinite_diagonal() {
        assert!(!is_positive_definite(&Matrix::diag(&[1.0, -0.1]), 0.0).unwrap());
    }

    #[test]
    fn margin_below_smallest_eigenvalue() {
        // eigenvalues 1 and 3
        let m = Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        assert!(is_positive_definite(&m, 0.9).unwrap());
        assert!(!is_positive_definite(&m, 1.1).unwrap());
    }

    #[test]
    fn asymmetric_input_is_an_error() {
        let m = Matrix::from_rows(&[&[2.0, 1.0], &[0.0, 2.0]]);
        assert!(matches!(
            is_positive_definite(&m, 0.0),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn solve_and_inverse() {
        let a = Matrix::from_rows(&[&[4.0, 2.0, 0.6], &[2.0, 5.0, 1.0], &[0.6, 1.0, 3.0]]);
        let ch = Cholesky::factor(&a).unwrap();
        let x = ch.solve(&[1.0, 2.0, 3.0]);
        let back = a.mul_vec(&x).unwrap();
        for (b, e) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((b - e).abs() < 1e-12);
        }
        let prod = &a * &ch.inverse();
        assert!(prod.approx_eq(&Matrix::identity(3), 1e-12));
        let det: f64 = 4.0 * (5.0 * 3.0 - 1.0) - 2.0 * (2.0 * 3.0 - 0.6) + 0.6 * (2.0 - 5.0 * 0.6);
        assert!((ch.log_det() - det.ln()).abs() < 1e-12);
    }
}
