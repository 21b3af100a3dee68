//! Single-time-scale distributed observer.
//!
//! Every vehicle keeps an estimate of the whole platoon state. One step is a
//! consensus average of the neighbours' propagated estimates followed by an
//! innovation on the position measurements shared within the neighbourhood:
//!
//! ```text
//! x̂ⁱ(k|k-1) = Σ_{j∈N(i)} w_ij · A · x̂ʲ(k-1|k-1)
//! x̂ⁱ(k|k)   = x̂ⁱ(k|k-1) + Kⁱ · Σ_{j∈N(i)} C_jᵀ (yʲ − C_j x̂ⁱ(k|k-1))
//! ```
//!
//! Stacking the per-vehicle errors gives `e(k) = Â e(k-1)` with
//! `Â = W⊗A − K·D_C·(W⊗A)`, `K = blockdiag(K¹…Kⁿ)` and `D_C` the block
//! diagonal of neighbourhood measurement Gramians.

use crate::error::{Error, Result};
use crate::matlib::{eigenvalues, rank_svd, spectral_radius, Complex, Matrix};
use crate::network::CommNetwork;
use crate::platoon::MeasurementModel;

/// Tolerance used for the spectral radius of closed-loop matrices.
pub const RHO_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct ObserverBank {
    estimates: Vec<Vec<f64>>,
    gain_blocks: Vec<Matrix>,
}

impl ObserverBank {
    /// Zero initial estimates for every vehicle.
    pub fn new(gain_blocks: Vec<Matrix>) -> Result<Self> {
        let n = gain_blocks.len();
        let dim = gain_blocks.first().map_or(0, Matrix::rows);
        Self::with_estimates(vec![vec![0.0; dim]; n], gain_blocks)
    }

    pub fn with_estimates(estimates: Vec<Vec<f64>>, gain_blocks: Vec<Matrix>) -> Result<Self> {
        if estimates.len() != gain_blocks.len() {
            return Err(Error::Dimension(format!(
                "{} estimates but {} gain blocks",
                estimates.len(),
                gain_blocks.len()
            )));
        }
        let dim = estimates.first().map_or(0, Vec::len);
        for (i, (e, k)) in estimates.iter().zip(&gain_blocks).enumerate() {
            if e.len() != dim || k.shape() != (dim, dim) {
                return Err(Error::Dimension(format!(
                    "vehicle {i}: estimate length {} and gain {}x{} for state dimension {dim}",
                    e.len(),
                    k.rows(),
                    k.cols()
                )));
            }
        }
        Ok(ObserverBank {
            estimates,
            gain_blocks,
        })
    }

    pub fn n(&self) -> usize {
        self.estimates.len()
    }

    pub fn state_dim(&self) -> usize {
        self.estimates.first().map_or(0, Vec::len)
    }

    pub fn estimates(&self) -> &[Vec<f64>] {
        &self.estimates
    }

    pub fn gain_blocks(&self) -> &[Matrix] {
        &self.gain_blocks
    }

    pub fn set_estimates(&mut self, estimates: Vec<Vec<f64>>) -> Result<()> {
        let fresh = Self::with_estimates(estimates, std::mem::take(&mut self.gain_blocks))?;
        *self = fresh;
        Ok(())
    }

    pub fn set_gains(&mut self, gain_blocks: Vec<Matrix>) -> Result<()> {
        let fresh = Self::with_estimates(std::mem::take(&mut self.estimates), gain_blocks)?;
        *self = fresh;
        Ok(())
    }

    /// `blockdiag(K¹, …, Kⁿ)`; off-diagonal blocks are exactly zero.
    pub fn global_gain(&self) -> Matrix {
        Matrix::block_diag(&self.gain_blocks)
    }

    /// One synchronous observer round: every vehicle reads the previous
    /// snapshot of its neighbours.
    pub fn step(&mut self, net: &CommNetwork, a_glob: &Matrix, y: &[f64], mm: &MeasurementModel) -> Result<()> {
        let pred = predict(self, net, a_glob)?;
        self.estimates = innovate(&pred, y, self, mm, net)?;
        Ok(())
    }
}

fn check_network(bank: &ObserverBank, net: &CommNetwork) -> Result<()> {
    if net.n_active() != bank.n() {
        return Err(Error::Dimension(format!(
            "network has {} active vehicles, observer bank {}",
            net.n_active(),
            bank.n()
        )));
    }
    Ok(())
}

/// Consensus on predictions.
pub fn predict(bank: &ObserverBank, net: &CommNetwork, a_glob: &Matrix) -> Result<Vec<Vec<f64>>> {
    check_network(bank, net)?;
    let dim = bank.state_dim();
    if a_glob.shape() != (dim, dim) {
        return Err(Error::Dimension(format!(
            "system matrix {}x{} for state dimension {dim}",
            a_glob.rows(),
            a_glob.cols()
        )));
    }
    let propagated: Vec<Vec<f64>> = bank
        .estimates
        .iter()
        .map(|x| a_glob.mul_vec(x))
        .collect::<Result<_>>()?;
    let w = net.weights();
    Ok((0..bank.n())
        .map(|i| {
            let mut acc = vec![0.0; dim];
            for &j in net.neighborhood(i) {
                let wij = w[(i, j)];
                for (a, p) in acc.iter_mut().zip(&propagated[j]) {
                    *a += wij * p;
                }
            }
            acc
        })
        .collect())
}

/// Innovation on the neighbourhood's measurements.
pub fn innovate(
    predictions: &[Vec<f64>],
    y: &[f64],
    bank: &ObserverBank,
    mm: &MeasurementModel,
    net: &CommNetwork,
) -> Result<Vec<Vec<f64>>> {
    check_network(bank, net)?;
    if predictions.len() != bank.n() || y.len() != bank.n() || mm.n != bank.n() {
        return Err(Error::Dimension(format!(
            "{} predictions, {} measurements and {} sensors for {} vehicles",
            predictions.len(),
            y.len(),
            mm.n,
            bank.n()
        )));
    }
    let dim = bank.state_dim();
    predictions
        .iter()
        .enumerate()
        .map(|(i, pred)| {
            let gain = bank
                .gain_blocks
                .get(i)
                .ok_or_else(|| Error::Dimension(format!("no gain block for vehicle {i}")))?;
            let mut residual = vec![0.0; dim];
            for &j in net.neighborhood(i) {
                let pos = mm.position_index(j);
                residual[pos] += y[j] - pred[pos];
            }
            let correction = gain.mul_vec(&residual)?;
            Ok(pred.iter().zip(correction).map(|(p, c)| p + c).collect())
        })
        .collect()
}

/// Block `i` is `Σ_{j∈N(i)} C_jᵀ C_j`.
pub fn build_dc(mm: &MeasurementModel, net: &CommNetwork) -> Matrix {
    let dim = mm.state_dim();
    let n = net.n_active();
    let mut dc = Matrix::zeros(n * dim, n * dim);
    for i in 0..n {
        for &j in net.neighborhood(i) {
            let p = i * dim + mm.position_index(j);
            dc[(p, p)] += 1.0;
        }
    }
    dc
}

/// `W ⊗ A_glob`, the open-loop part of the error dynamics.
pub fn open_loop(net: &CommNetwork, a_glob: &Matrix) -> Matrix {
    net.weights().kron(a_glob)
}

#[derive(Clone, Debug)]
pub struct ErrorSystem {
    pub a_hat: Matrix,
    pub d_c: Matrix,
    pub rho: f64,
}

/// `Â = M − K·D_C·M` with `M = W⊗A_glob`, for block-diagonal `K`.
pub fn closed_loop(m: &Matrix, d_c: &Matrix, gain_blocks: &[Matrix]) -> Result<Matrix> {
    let total: usize = gain_blocks.iter().map(Matrix::rows).sum();
    if m.shape() != (total, total) || d_c.shape() != (total, total) {
        return Err(Error::Dimension(format!(
            "gain blocks cover {total} states, open loop is {}x{}, D_C {}x{}",
            m.rows(),
            m.cols(),
            d_c.rows(),
            d_c.cols()
        )));
    }
    let g = d_c.matmul(m)?;
    let mut a_hat = m.clone();
    let mut r0 = 0;
    for k in gain_blocks {
        let b = k.rows();
        if !k.is_square() {
            return Err(Error::Dimension("gain blocks must be square".into()));
        }
        let kg = k.matmul(&g.block(r0, 0, b, total))?;
        for r in 0..b {
            for (dst, v) in a_hat.row_mut(r0 + r).iter_mut().zip(kg.row(r)) {
                *dst -= v;
            }
        }
        r0 += b;
    }
    Ok(a_hat)
}

pub fn build_error_matrix(
    net: &CommNetwork,
    a_glob: &Matrix,
    bank: &ObserverBank,
    mm: &MeasurementModel,
) -> Result<ErrorSystem> {
    check_network(bank, net)?;
    let m = open_loop(net, a_glob);
    let d_c = build_dc(mm, net);
    let a_hat = closed_loop(&m, &d_c, bank.gain_blocks())?;
    let rho = spectral_radius(&a_hat, RHO_TOL)?;
    Ok(ErrorSystem { a_hat, d_c, rho })
}

/// Eigenvalues merged when closer than this (relative); repeated and
/// defective eigenvalues come out of QR split by roughly √ε.
const EIGEN_CLUSTER_TOL: f64 = 1e-5;

/// Popov–Belevitch–Hautus test of the pair `(W⊗A_glob, D_C)`: for every
/// distinct nonzero eigenvalue `λ`, `[λI − M; D_C]` must have full column rank.
///
/// Modes at the origin are skipped, so this is discrete-time
/// reconstructibility. Metropolis weights are singular whenever two vehicles
/// share a closed neighbourhood, and the kernel of `W` then carries velocity
/// and acceleration directions no position sensor sees; those components are
/// wiped out by the first prediction and never reach the estimate.
pub fn check_distributed_observability(
    net: &CommNetwork,
    a_glob: &Matrix,
    d_c: &Matrix,
    tol: f64,
) -> Result<bool> {
    let m = open_loop(net, a_glob);
    pbh_reconstructible(&m, d_c, tol)
}

/// Strict PBH observability: every eigenvalue, including zero.
pub fn pbh_observable(m: &Matrix, d_c: &Matrix, tol: f64) -> Result<bool> {
    pbh(m, d_c, tol, false)
}

/// PBH over the nonzero eigenvalues only.
pub fn pbh_reconstructible(m: &Matrix, d_c: &Matrix, tol: f64) -> Result<bool> {
    pbh(m, d_c, tol, true)
}

fn pbh(m: &Matrix, d_c: &Matrix, tol: f64, skip_zero: bool) -> Result<bool> {
    let n = m.rows();
    if !m.is_square() || d_c.cols() != n {
        return Err(Error::Dimension(format!(
            "PBH test on {}x{} system with {}x{} output",
            m.rows(),
            m.cols(),
            d_c.rows(),
            d_c.cols()
        )));
    }
    let zero = EIGEN_CLUSTER_TOL * (1.0 + m.max_abs());
    for lambda in distinct_eigenvalues(m)? {
        if skip_zero && lambda.abs() <= zero {
            continue;
        }
        if !pbh_full_rank(m, d_c, lambda, tol) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn distinct_eigenvalues(m: &Matrix) -> Result<Vec<Complex>> {
    let mut clusters: Vec<(Complex, usize)> = Vec::new();
    for z in eigenvalues(m)? {
        // one representative per conjugate pair
        let z = Complex::new(z.re, z.im.abs());
        let hit = clusters.iter_mut().find(|(c, k)| {
            let mean = Complex::new(c.re / *k as f64, c.im / *k as f64);
            let d = Complex::new(mean.re - z.re, mean.im - z.im).abs();
            d <= EIGEN_CLUSTER_TOL * (1.0 + z.abs())
        });
        match hit {
            Some((c, k)) => {
                c.re += z.re;
                c.im += z.im;
                *k += 1;
            }
            None => clusters.push((z, 1)),
        }
    }
    Ok(clusters
        .into_iter()
        .map(|(c, k)| {
            let im = c.im / k as f64;
            // a cluster of nearly-real eigenvalues is real
            let im = if im.abs() <= EIGEN_CLUSTER_TOL { 0.0 } else { im };
            Complex::new(c.re / k as f64, im)
        })
        .collect())
}

fn pbh_full_rank(m: &Matrix, d_c: &Matrix, lambda: Complex, tol: f64) -> bool {
    let n = m.rows();
    let p = d_c.rows();
    if lambda.im == 0.0 {
        let mut stacked = Matrix::zeros(n + p, n);
        for i in 0..n {
            for j in 0..n {
                stacked[(i, j)] = if i == j { lambda.re } else { 0.0 } - m[(i, j)];
            }
        }
        stacked.set_block(n, 0, d_c);
        rank_svd(&stacked, tol) == n
    } else {
        // complex rank via the real embedding [[P, −Q], [Q, P]]
        let mut emb = Matrix::zeros(2 * (n + p), 2 * n);
        for i in 0..n {
            for j in 0..n {
                let re = if i == j { lambda.re } else { 0.0 } - m[(i, j)];
                emb[(i, j)] = re;
                emb[(n + p + i, n + j)] = re;
            }
            emb[(i, n + i)] = -lambda.im;
            emb[(n + p + i, i)] = lambda.im;
        }
        emb.set_block(n, 0, d_c);
        emb.set_block(2 * n + p, n, d_c);
        rank_svd(&emb, tol) == 2 * n
    }
}
