//! Cone-complementarity linearisation over
//!
//! ```text
//! X ≻ δI,  Y ≻ δI,  [X, Âᵀ/α; Â/α, Y] ≻ δI,  [X, I; I, Y] ≻ δI
//! ```
//!
//! with `Â = M − K·G` affine in the free gain entries. Every outer step
//! minimises `tr(Y_prev X + X_prev Y)`; the loop ends once that value drops
//! below `2N + ε`.

use super::sdp::{find_strictly_feasible, minimize, BarrierOptions, Lmi, Sdp};
use super::{certify, GainProblem, GainResult, Method};
use crate::error::{Error, Result};
use crate::matlib::{is_positive_definite, Matrix};

/// Relative slack allowed when checking that the objective does not grow.
pub const TRACE_SLACK: f64 = 1e-8;

/// Outer iterations over which less than `STALL_REL` relative progress
/// counts as a stall.
const STALL_WINDOW: usize = 5;
const STALL_REL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct CclState {
    pub x: Matrix,
    pub y: Matrix,
    pub k_blocks: Vec<Matrix>,
    /// `tr(Y_prev X + X_prev Y)` of the step that produced this state; for
    /// the starting point, `2·tr(XY)`.
    pub trace_val: f64,
    pub outer_iter: usize,
}

impl CclState {
    pub fn trace_xy(&self) -> f64 {
        self.x.matmul(&self.y).expect("square").trace()
    }
}

/// One independent group of states and its subproblem layout.
struct Part {
    idx: Vec<usize>,
    pattern: Vec<(usize, usize)>,
    m: Matrix,
    g: Matrix,
    /// `(p, q)` with `p ≤ q` for each svec slot
    slots: Vec<(usize, usize)>,
}

impl Part {
    fn n(&self) -> usize {
        self.idx.len()
    }

    fn n_sym(&self) -> usize {
        self.slots.len()
    }

    fn n_vars(&self) -> usize {
        2 * self.n_sym() + self.pattern.len()
    }

    fn encode(&self, x: &Matrix, y: &Matrix, k: &[f64]) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.n_vars());
        z.extend(self.slots.iter().map(|&(p, q)| x[(p, q)]));
        z.extend(self.slots.iter().map(|&(p, q)| y[(p, q)]));
        z.extend_from_slice(k);
        z
    }

    fn decode(&self, z: &[f64]) -> (Matrix, Matrix, Vec<f64>) {
        let n = self.n();
        let ns = self.n_sym();
        let mut x = Matrix::zeros(n, n);
        let mut y = Matrix::zeros(n, n);
        for (s, &(p, q)) in self.slots.iter().enumerate() {
            x[(p, q)] = z[s];
            x[(q, p)] = z[s];
            y[(p, q)] = z[ns + s];
            y[(q, p)] = z[ns + s];
        }
        (x, y, z[2 * ns..].to_vec())
    }

    fn sdp(&self, problem: &GainProblem, x_prev: &Matrix, y_prev: &Matrix) -> Result<Sdp> {
        let n = self.n();
        let ns = self.n_sym();
        let delta = problem.pd_margin;
        let alpha = problem.decay;
        let local: std::collections::HashMap<usize, usize> =
            self.idx.iter().enumerate().map(|(l, &g)| (g, l)).collect();
        let mut sdp = Sdp::new(self.n_vars());

        let shifted = |size: usize| Matrix::identity(size).scale(-delta);
        let mut lx = Lmi::new(shifted(n))?;
        let mut ly = Lmi::new(shifted(n))?;
        let mut c3 = shifted(2 * n);
        let mut c4 = shifted(2 * n);
        for r in 0..n {
            for c in 0..n {
                c3[(n + r, c)] = self.m[(r, c)] / alpha;
                c3[(c, n + r)] = self.m[(r, c)] / alpha;
            }
            c4[(n + r, r)] = 1.0;
            c4[(r, n + r)] = 1.0;
        }
        let mut l3 = Lmi::new(c3)?;
        let mut l4 = Lmi::new(c4)?;
        let mut objective = vec![0.0; self.n_vars()];
        for (s, &(p, q)) in self.slots.iter().enumerate() {
            lx.add(s, p, q, 1.0);
            l3.add(s, p, q, 1.0);
            l4.add(s, p, q, 1.0);
            ly.add(ns + s, p, q, 1.0);
            l3.add(ns + s, n + p, n + q, 1.0);
            l4.add(ns + s, n + p, n + q, 1.0);
            let w = if p == q { 1.0 } else { 2.0 };
            objective[s] = w * y_prev[(p, q)];
            objective[ns + s] = w * x_prev[(p, q)];
        }
        for (e, &(r, c)) in self.pattern.iter().enumerate() {
            let (rl, cl) = (local[&r], local[&c]);
            for j in 0..n {
                let gv = self.g[(cl, j)];
                if gv != 0.0 {
                    l3.add(2 * ns + e, n + rl, j, -gv / alpha);
                }
            }
        }
        sdp.add_lmi(lx);
        sdp.add_lmi(ly);
        sdp.add_lmi(l3);
        sdp.add_lmi(l4);
        sdp.set_objective(objective);
        Ok(sdp)
    }
}

fn parts(problem: &GainProblem) -> Result<Vec<Part>> {
    let comps = problem.components();
    let pats = problem.gain_pattern(&comps);
    let g = problem.g();
    comps
        .into_iter()
        .zip(pats)
        .map(|(idx, pattern)| {
            let n = idx.len();
            // entries leaving the group must vanish for the split to be exact
            let inside: std::collections::HashSet<usize> = idx.iter().copied().collect();
            for &r in &idx {
                for j in 0..problem.dim() {
                    if !inside.contains(&j) && (problem.m[(r, j)] != 0.0 || g[(r, j)] != 0.0) {
                        return Err(Error::Synthesis(format!("state group of {r} is not closed")));
                    }
                }
            }
            let slots = (0..n).flat_map(|p| (p..n).map(move |q| (p, q))).collect();
            Ok(Part {
                m: problem.m.select(&idx),
                g: g.select(&idx),
                idx,
                pattern,
                slots,
            })
        })
        .collect()
}

fn start_scale(problem: &GainProblem) -> f64 {
    2.0 * problem.m.frobenius_norm() / problem.decay + 2.0
}

fn barrier_options(problem: &GainProblem, n_parts: usize) -> BarrierOptions {
    BarrierOptions {
        gap_tol: 0.05 * problem.epsilon / n_parts as f64,
        ..BarrierOptions::default()
    }
}

/// `X = Y = c·I`, `K = 0`, with `c` large enough that every constraint holds
/// strictly.
pub fn initial_state(problem: &GainProblem) -> Result<CclState> {
    problem.validate()?;
    let n = problem.dim();
    let c = start_scale(problem);
    let mut state = CclState {
        x: Matrix::identity(n).scale(c),
        y: Matrix::identity(n).scale(c),
        k_blocks: problem.zero_gain(),
        trace_val: 2.0 * c * c * n as f64,
        outer_iter: 0,
    };
    if !constraints_hold(problem, &state)? {
        // not reachable for finite data, kept as the general entry point
        let ps = parts(problem)?;
        let opts = barrier_options(problem, ps.len());
        for part in &ps {
            let sdp = part.sdp(problem, &state.x.select(&part.idx), &state.y.select(&part.idx))?;
            let z0 = part.encode(
                &state.x.select(&part.idx),
                &state.y.select(&part.idx),
                &vec![0.0; part.pattern.len()],
            );
            let z = find_strictly_feasible(&sdp, &z0, &opts)?;
            store(problem, part, &z, &mut state);
        }
        state.trace_val = 2.0 * state.trace_xy();
    }
    Ok(state)
}

fn store(problem: &GainProblem, part: &Part, z: &[f64], state: &mut CclState) {
    let (x, y, k) = part.decode(z);
    for (a, &i) in part.idx.iter().enumerate() {
        for (b, &j) in part.idx.iter().enumerate() {
            state.x[(i, j)] = x[(a, b)];
            state.y[(i, j)] = y[(a, b)];
        }
    }
    for (&(r, c), v) in part.pattern.iter().zip(k) {
        problem.write_gain_entry(&mut state.k_blocks, r, c, v);
    }
}

/// One linearised subproblem around `prev`. The barrier starts halfway
/// between `prev` and the central point `c·I`, which is strictly feasible
/// and better centred than `prev` itself.
pub fn solve_sdp_step(problem: &GainProblem, prev: &CclState) -> Result<CclState> {
    problem.validate()?;
    let ps = parts(problem)?;
    let opts = barrier_options(problem, ps.len());
    let c = start_scale(problem);
    let n = problem.dim();
    let mut next = CclState {
        x: Matrix::zeros(n, n),
        y: Matrix::zeros(n, n),
        k_blocks: problem.zero_gain(),
        trace_val: 0.0,
        outer_iter: prev.outer_iter + 1,
    };
    for part in &ps {
        let xp = prev.x.select(&part.idx);
        let yp = prev.y.select(&part.idx);
        let kp: Vec<f64> = part
            .pattern
            .iter()
            .map(|&(r, cc)| problem.read_gain(&prev.k_blocks, r, cc))
            .collect();
        let sdp = part.sdp(problem, &xp, &yp)?;
        let from_prev = part.encode(&xp, &yp, &kp);
        let central = part.encode(
            &Matrix::identity(part.n()).scale(c),
            &Matrix::identity(part.n()).scale(c),
            &vec![0.0; part.pattern.len()],
        );
        let mid: Vec<f64> = from_prev.iter().zip(&central).map(|(a, b)| 0.5 * (a + b)).collect();
        let z0 = if sdp.is_strictly_feasible(&mid) {
            mid
        } else if sdp.is_strictly_feasible(&central) {
            central
        } else {
            find_strictly_feasible(&sdp, &from_prev, &opts)?
        };
        let out = minimize(&sdp, &z0, &opts, |_| false)?;
        next.trace_val += out.objective;
        store(problem, part, &out.z, &mut next);
    }
    Ok(next)
}

/// The four constraint groups with margin `pd_margin`.
pub fn constraints_hold(problem: &GainProblem, state: &CclState) -> Result<bool> {
    let n = problem.dim();
    let delta = problem.pd_margin;
    if !is_positive_definite(&state.x, delta)? || !is_positive_definite(&state.y, delta)? {
        return Ok(false);
    }
    let a_hat = crate::observer::closed_loop(&problem.m, &problem.d_c, &state.k_blocks)?.scale(1.0 / problem.decay);
    let mut big = Matrix::zeros(2 * n, 2 * n);
    big.set_block(0, 0, &state.x);
    big.set_block(n, n, &state.y);
    big.set_block(n, 0, &a_hat);
    big.set_block(0, n, &a_hat.transpose());
    if !is_positive_definite(&big, delta)? {
        return Ok(false);
    }
    big.set_block(n, 0, &Matrix::identity(n));
    big.set_block(0, n, &Matrix::identity(n));
    is_positive_definite(&big, delta)
}

pub fn design_gain_ccl(problem: &GainProblem) -> Result<GainResult> {
    design_gain_ccl_with(problem, |_| {})
}

/// CCL loop; `on_iterate` sees every accepted iterate.
pub fn design_gain_ccl_with(problem: &GainProblem, mut on_iterate: impl FnMut(&CclState)) -> Result<GainResult> {
    let mut state = initial_state(problem)?;
    let threshold = 2.0 * problem.dim() as f64 + problem.epsilon;
    let (rho0, _) = certify(problem, &state.k_blocks)?;
    let mut best = (rho0, state.k_blocks.clone());
    let mut traces = Vec::new();
    let mut converged = false;
    let mut note = String::new();

    for it in 1..=problem.max_outer {
        let next = match solve_sdp_step(problem, &state) {
            Ok(s) => s,
            Err(e) if it == 1 => return Err(e),
            Err(e) => {
                note = format!("outer step {it} failed: {e}");
                break;
            }
        };
        if next.trace_val > state.trace_val + TRACE_SLACK * (1.0 + state.trace_val.abs()) {
            note = format!("objective rose at step {it}; stopped");
            break;
        }
        if !constraints_hold(problem, &next)? {
            note = format!("constraint margin lost at step {it}; stopped");
            break;
        }
        on_iterate(&next);
        let (rho, _) = certify(problem, &next.k_blocks)?;
        state = next;
        traces.push(state.trace_val);
        if state.trace_val < threshold {
            converged = true;
            if rho < 1.0 || rho <= best.0 {
                best = (rho, state.k_blocks.clone());
            }
            break;
        }
        if rho < best.0 {
            best = (rho, state.k_blocks.clone());
        }
        if traces.len() > STALL_WINDOW {
            let old = traces[traces.len() - 1 - STALL_WINDOW];
            if old - state.trace_val < STALL_REL * state.trace_val {
                note = format!("stalled at objective {:.6}", state.trace_val);
                break;
            }
        }
    }
    if converged {
        note = format!("converged, tr(XY) = {:.6}", state.trace_xy());
    } else if note.is_empty() {
        note = format!("outer iteration cap reached at objective {:.6}", state.trace_val);
    }
    let (rho, certified) = certify(problem, &best.1)?;
    Ok(GainResult {
        k_blocks: best.1,
        rho,
        certified,
        method: Method::Ccl,
        iterations: traces.len(),
        traces,
        converged,
        note,
    })
}
