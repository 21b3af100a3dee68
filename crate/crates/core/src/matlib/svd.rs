use super::chol::dot;
use super::Matrix;

const MAX_SWEEPS: usize = 60;

/// Singular values in descending order, by one-sided (Hestenes) Jacobi
/// rotations on the columns of the taller orientation.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    let a = if m.rows() >= m.cols() { m.clone() } else { m.transpose() };
    let (rows, cols) = a.shape();
    if cols == 0 {
        return Vec::new();
    }
    // column-major copy so rotations touch contiguous memory
    let mut colv: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..rows).map(|i| a[(i, j)]).collect())
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = dot(&colv[p], &colv[p]);
                let beta = dot(&colv[q], &colv[q]);
                let gamma = dot(&colv[p], &colv[q]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = colv.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (xv, yv) = (*x, *y);
                    *x = c * xv - s * yv;
                    *y = s * xv + c * yv;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = colv.iter().map(|c| dot(c, c).sqrt()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// Number of singular values above `tol · σ_max`; zero for the zero matrix.
pub fn rank_svd(m: &Matrix, tol: f64) -> usize {
    let sv = singular_values(m);
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matlib::DEFAULT_TOL;

    #[test]
    fn zero_matrix_has_rank_zero() {
        assert_eq!(rank_svd(&Matrix::zeros(3, 3), DEFAULT_TOL), 0);
    }

    #[test]
    fn identity_rank() {
        assert_eq!(rank_svd(&Matrix::identity(4), DEFAULT_TOL), 4);
    }

    #[test]
    fn outer_product_is_rank_one() {
        let v = Matrix::column(&[1.0, 2.0, 3.0]);
        let outer = &v * &v.transpose();
        assert_eq!(rank_svd(&outer, DEFAULT_TOL), 1);
    }

    #[test]
    fn known_singular_values() {
        // [[3, 0], [4, 5]] has singular values sqrt(45) and sqrt(5)
        let m = Matrix::from_rows(&[&[3.0, 0.0], &[4.0, 5.0]]);
        let sv = singular_values(&m);
        assert!((sv[0] - 45f64.sqrt()).abs() < 1e-12);
        assert!((sv[1] - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn wide_matrix() {
        let m = Matrix::from_rows(&[&[1.0, 0.0, 1.0, 0.0], &[0.0, 1.0, 0.0, 1.0]]);
        assert_eq!(rank_svd(&m, DEFAULT_TOL), 2);
    }

    #[test]
    fn rank_invariant_under_permutation() {
        let m = Matrix::from_rows(&[
            &[1.0, 2.0, 3.0],
            &[2.0, 4.0, 6.0],
            &[0.0, 1.0, 1.0],
            &[1.0, 3.0, 4.0],
        ]);
        let base = rank_svd(&m, DEFAULT_TOL);
        assert_eq!(base, 2);
        let rows = [3usize, 0, 2, 1];
        let cols = [2usize, 0, 1];
        let mut p = Matrix::zeros(4, 3);
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                p[(i, j)] = m[(r, c)];
            }
        }
        assert_eq!(rank_svd(&p, DEFAULT_TOL), base);
    }
}
