//! Log-determinant barrier method for small problems of the form
//!
//! ```text
//! minimize cᵀz   subject to   F_l(z) = F_l0 + Σ_e z_e F_le ≻ 0,   l = 1…L
//! ```
//!
//! with sparse symmetric coefficient matrices. Newton systems are assembled
//! entry by entry from `Z_l = F_l(z)⁻¹`:
//!
//! ```text
//! ∂/∂z_e  log det F   = tr(Z F_e)
//! ∂²/∂z_e∂z_f         = −tr(Z F_e Z F_f)
//! ```

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::matlib::{Cholesky, Matrix};

/// `val` placed at `(row, col)` and mirrored to `(col, row)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymEntry {
    pub row: usize,
    pub col: usize,
    pub val: f64,
}

#[derive(Clone, Debug)]
pub struct Lmi {
    constant: Matrix,
    terms: BTreeMap<usize, Vec<SymEntry>>,
}

impl Lmi {
    pub fn new(constant: Matrix) -> Result<Self> {
        if !constant.is_square() {
            return Err(Error::Dimension("LMI constant term must be square".into()));
        }
        Ok(Lmi {
            constant,
            terms: BTreeMap::new(),
        })
    }

    pub fn size(&self) -> usize {
        self.constant.rows()
    }

    pub fn add(&mut self, var: usize, row: usize, col: usize, val: f64) {
        assert!(row < self.size() && col < self.size(), "LMI entry out of range");
        self.terms.entry(var).or_default().push(SymEntry { row, col, val });
    }

    pub fn eval(&self, z: &[f64]) -> Matrix {
        let mut f = self.constant.clone();
        for (&var, entries) in &self.terms {
            let x = z[var];
            if x == 0.0 {
                continue;
            }
            for e in entries {
                f[(e.row, e.col)] += x * e.val;
                if e.row != e.col {
                    f[(e.col, e.row)] += x * e.val;
                }
            }
        }
        f
    }
}

#[derive(Clone, Debug)]
pub struct Sdp {
    n_vars: usize,
    lmis: Vec<Lmi>,
    objective: Vec<f64>,
}

impl Sdp {
    pub fn new(n_vars: usize) -> Self {
        Sdp {
            n_vars,
            lmis: Vec::new(),
            objective: vec![0.0; n_vars],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn add_lmi(&mut self, lmi: Lmi) {
        assert!(
            lmi.terms.keys().all(|&v| v < self.n_vars),
            "LMI references an unknown variable"
        );
        self.lmis.push(lmi);
    }

    pub fn lmis(&self) -> &[Lmi] {
        &self.lmis
    }

    pub fn set_objective(&mut self, c: Vec<f64>) {
        assert_eq!(c.len(), self.n_vars);
        self.objective = c;
    }

    pub fn objective_value(&self, z: &[f64]) -> f64 {
        self.objective.iter().zip(z).map(|(c, x)| c * x).sum()
    }

    /// Total order of the barrier, `Σ_l size(F_l)`.
    pub fn barrier_degree(&self) -> usize {
        self.lmis.iter().map(Lmi::size).sum()
    }

    pub fn is_strictly_feasible(&self, z: &[f64]) -> bool {
        self.lmis.iter().all(|l| Cholesky::factor(&l.eval(z)).is_some())
    }

    fn barrier_value(&self, z: &[f64], t: f64) -> Option<f64> {
        let mut f = t * self.objective_value(z);
        for l in &self.lmis {
            f -= Cholesky::factor(&l.eval(z))?.log_det();
        }
        Some(f)
    }

    /// Value, gradient and Hessian of `t·cᵀz − Σ log det F_l(z)`.
    fn newton_system(&self, z: &[f64], t: f64) -> Option<(f64, Vec<f64>, Matrix)> {
        let n = self.n_vars;
        let mut value = t * self.objective_value(z);
        let mut grad: Vec<f64> = self.objective.iter().map(|c| t * c).collect();
        let mut hess = Matrix::zeros(n, n);
        for l in &self.lmis {
            let chol = Cholesky::factor(&l.eval(z))?;
            value -= chol.log_det();
            let zi = chol.inverse();
            let vars: Vec<(&usize, &Vec<SymEntry>)> = l.terms.iter().collect();
            for (a, &(&e, ee)) in vars.iter().enumerate() {
                let mut g = 0.0;
                for s in ee {
                    g += if s.row == s.col {
                        s.val * zi[(s.row, s.row)]
                    } else {
                        2.0 * s.val * zi[(s.row, s.col)]
                    };
                }
                grad[e] -= g;
                for &(&f, ff) in &vars[a..] {
                    let mut h = 0.0;
                    for s in ee {
                        let (p, q) = (s.row, s.col);
                        let wp = if p == q { 0.5 } else { 1.0 } * s.val;
                        for r in ff {
                            let (u, v) = (r.row, r.col);
                            let wr = if u == v { 0.5 } else { 1.0 } * r.val;
                            h += wp * wr * (zi[(q, u)] * zi[(v, p)] + zi[(q, v)] * zi[(u, p)]);
                        }
                    }
                    hess[(e, f)] += 2.0 * h;
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                hess[(i, j)] = hess[(j, i)];
            }
        }
        Some((value, grad, hess))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BarrierOptions {
    /// Growth factor of `t` between centerings.
    pub mu: f64,
    /// Stop once the duality-gap bound `degree / t` falls below this.
    pub gap_tol: f64,
    /// Centering stops when `λ²/2` (Newton decrement) is below this.
    pub newton_tol: f64,
    /// Newton steps allowed in one centering before `t` moves on anyway.
    pub max_center: usize,
    pub max_newton: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions {
            mu: 8.0,
            gap_tol: 1e-6,
            newton_tol: 1e-8,
            max_center: 50,
            max_newton: 2000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BarrierOutcome {
    pub z: Vec<f64>,
    pub objective: f64,
    pub newton_steps: usize,
    /// Duality-gap bound at the returned point.
    pub gap: f64,
}

/// Barrier path-following from a strictly feasible `z0`. `stop` is consulted
/// after every Newton step and ends the run early when it returns true.
pub fn minimize(
    sdp: &Sdp,
    z0: &[f64],
    opts: &BarrierOptions,
    mut stop: impl FnMut(&[f64]) -> bool,
) -> Result<BarrierOutcome> {
    if z0.len() != sdp.n_vars {
        return Err(Error::Dimension(format!(
            "start point has {} entries, problem {} variables",
            z0.len(),
            sdp.n_vars
        )));
    }
    if !sdp.is_strictly_feasible(z0) {
        return Err(Error::Infeasible("barrier start point is not strictly feasible".into()));
    }
    let degree = sdp.barrier_degree() as f64;
    let mut z = z0.to_vec();
    let mut t = (degree / (sdp.objective_value(&z).abs() + 1.0)).max(1e-3);
    let mut steps = 0usize;
    loop {
        let done = center(sdp, &mut z, t, opts, &mut steps, &mut stop)?;
        if done || degree / t < opts.gap_tol || steps >= opts.max_newton {
            break;
        }
        t *= opts.mu;
    }
    Ok(BarrierOutcome {
        objective: sdp.objective_value(&z),
        gap: degree / t,
        z,
        newton_steps: steps,
    })
}

/// Newton iterations on the barrier at fixed `t`. Returns true when `stop`
/// fired.
fn center(
    sdp: &Sdp,
    z: &mut Vec<f64>,
    t: f64,
    opts: &BarrierOptions,
    steps: &mut usize,
    stop: &mut impl FnMut(&[f64]) -> bool,
) -> Result<bool> {
    for _ in 0..opts.max_center {
        if *steps >= opts.max_newton {
            return Ok(false);
        }
        let (value, grad, hess) = sdp
            .newton_system(z, t)
            .ok_or_else(|| Error::NoConvergence("iterate left the feasible cone".into()))?;
        let dir = solve_newton(&hess, &grad)?;
        let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        if -slope / 2.0 <= opts.newton_tol {
            return Ok(false);
        }
        *steps += 1;
        let mut s = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial: Vec<f64> = z.iter().zip(&dir).map(|(x, d)| x + s * d).collect();
            if let Some(v) = sdp.barrier_value(&trial, t) {
                if v <= value + 0.01 * s * slope {
                    *z = trial;
                    moved = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !moved {
            // numerically centred as far as the line search can tell
            return Ok(false);
        }
        if stop(z) {
            return Ok(true);
        }
    }
    Ok(false)
}

fn solve_newton(hess: &Matrix, grad: &[f64]) -> Result<Vec<f64>> {
    let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
    if let Some(ch) = Cholesky::factor(hess) {
        return Ok(ch.solve(&neg));
    }
    // variables the constraints barely see; regularise
    let scale = (0..hess.rows()).map(|i| hess[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut reg = 1e-12;
    while reg < 1.0 {
        let mut h = hess.clone();
        for i in 0..h.rows() {
            h[(i, i)] += reg * scale;
        }
        if let Some(ch) = Cholesky::factor(&h) {
            return Ok(ch.solve(&neg));
        }
        reg *= 100.0;
    }
    Err(Error::NoConvergence("Newton system is not positive definite".into()))
}

/// Phase 1: find a strictly feasible point starting from an arbitrary `z0`
/// by minimising a uniform slack `s` with `F_l(z) + s·I ≻ 0` until `s < 0`.
pub fn find_strictly_feasible(sdp: &Sdp, z0: &[f64], opts: &BarrierOptions) -> Result<Vec<f64>> {
    if z0.len() != sdp.n_vars {
        return Err(Error::Dimension(format!(
            "start point has {} entries, problem {} variables",
            z0.len(),
            sdp.n_vars
        )));
    }
    if sdp.is_strictly_feasible(z0) {
        return Ok(z0.to_vec());
    }
    let s_var = sdp.n_vars;
    let mut aux = Sdp::new(sdp.n_vars + 1);
    for l in &sdp.lmis {
        let mut lifted = l.clone();
        for p in 0..l.size() {
            lifted.add(s_var, p, p, 1.0);
        }
        aux.add_lmi(lifted);
    }
    // keeps the auxiliary objective bounded below
    let mut floor = Lmi::new(Matrix::identity(1))?;
    floor.add(s_var, 0, 0, 1.0);
    aux.add_lmi(floor);
    let mut c = vec![0.0; sdp.n_vars + 1];
    c[s_var] = 1.0;
    aux.set_objective(c);

    let mut s0 = 1.0;
    let mut start = z0.to_vec();
    start.push(s0);
    while !aux.is_strictly_feasible(&start) {
        s0 *= 2.0;
        if !s0.is_finite() {
            return Err(Error::NonFinite("phase-1 slack overflowed".into()));
        }
        start[s_var] = s0;
    }
    let out = minimize(&aux, &start, opts, |z| z[s_var] < 0.0)?;
    let z = out.z[..sdp.n_vars].to_vec();
    if out.z[s_var] < 0.0 && sdp.is_strictly_feasible(&z) {
        Ok(z)
    } else {
        Err(Error::Infeasible(format!(
            "no strictly feasible point (best uniform slack {:.3e})",
            out.z[s_var]
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// minimise x subject to [x, 1; 1, 1] ≻ 0, i.e. x > 1
    fn schur_2x2() -> Sdp {
        let mut sdp = Sdp::new(1);
        let mut l = Lmi::new(Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 1.0]])).unwrap();
        l.add(0, 0, 0, 1.0);
        sdp.add_lmi(l);
        sdp.set_objective(vec![1.0]);
        sdp
    }

    #[test]
    fn feasibility_of_schur_complement() {
        let sdp = schur_2x2();
        assert!(!sdp.is_strictly_feasible(&[0.5]));
        assert!(sdp.is_strictly_feasible(&[2.0]));
    }

    #[test]
    fn minimises_to_boundary() {
        let sdp = schur_2x2();
        let out = minimize(&sdp, &[3.0], &BarrierOptions::default(), |_| false).unwrap();
        assert!(out.z[0] > 1.0 && out.z[0] < 1.0 + 1e-5, "{:?}", out.z);
    }

    #[test]
    fn phase_one_recovers() {
        let sdp = schur_2x2();
        let z = find_strictly_feasible(&sdp, &[-4.0], &BarrierOptions::default()).unwrap();
        assert!(z[0] > 1.0);
    }

    #[test]
    fn phase_one_reports_infeasible() {
        // x > 1 and x < 0 together
        let mut sdp = schur_2x2();
        let mut l = Lmi::new(Matrix::zeros(1, 1)).unwrap();
        l.add(0, 0, 0, -1.0);
        sdp.add_lmi(l);
        let err = find_strictly_feasible(&sdp, &[0.0], &BarrierOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn hessian_matches_finite_differences() {
        // 3x3 LMI in three variables touching diagonal and off-diagonal entries
        let mut sdp = Sdp::new(3);
        let mut l = Lmi::new(Matrix::from_rows(&[&[3.0, 0.2, 0.0], &[0.2, 2.0, 0.1], &[0.0, 0.1, 4.0]])).unwrap();
        l.add(0, 0, 0, 1.0);
        l.add(0, 1, 2, 0.7);
        l.add(1, 0, 2, -0.4);
        l.add(2, 1, 1, 0.3);
        l.add(2, 2, 0, 0.5);
        sdp.add_lmi(l);
        sdp.set_objective(vec![0.3, -0.2, 1.0]);
        let z = [0.1, -0.2, 0.3];
        let (_, g, h) = sdp.newton_system(&z, 2.0).unwrap();
        let step = 1e-6;
        for i in 0..3 {
            let mut zp = z;
            let mut zm = z;
            zp[i] += step;
            zm[i] -= step;
            let fd = (sdp.barrier_value(&zp, 2.0).unwrap() - sdp.barrier_value(&zm, 2.0).unwrap()) / (2.0 * step);
            assert!((fd - g[i]).abs() < 1e-6, "grad {i}: {fd} vs {}", g[i]);
            let (_, gp, _) = sdp.newton_system(&zp, 2.0).unwrap();
            let (_, gm, _) = sdp.newton_system(&zm, 2.0).unwrap();
            for j in 0..3 {
                let fd = (gp[j] - gm[j]) / (2.0 * step);
                assert!((fd - h[(i, j)]).abs() < 1e-5, "hess {i},{j}: {fd} vs {}", h[(i, j)]);
            }
        }
    }
}
