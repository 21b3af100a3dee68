//! Derivative-free search on `ρ(M − K·G)`: coordinate pattern search with
//! a shrinking step, plus a few seeded random directions whenever a full
//! coordinate sweep fails. Only the free entries of the gain pattern move,
//! so the block structure holds by construction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{certify, GainProblem, GainResult, Method};
use crate::error::{Error, Result};
use crate::matlib::{spectral_radius, Matrix};
use crate::observer::RHO_TOL;

const INITIAL_STEP: f64 = 0.5;
const MIN_STEP: f64 = 1e-9;
const RANDOM_TRIES: usize = 4;

struct Group {
    m: Matrix,
    g: Matrix,
    /// `(global row, global col, local row, local col)`
    entries: Vec<(usize, usize, usize, usize)>,
}

impl Group {
    fn rho(&self, k: &[f64]) -> Result<f64> {
        let mut a = self.m.clone();
        let n = a.cols();
        for (&(_, _, r, c), &v) in self.entries.iter().zip(k) {
            if v == 0.0 {
                continue;
            }
            for j in 0..n {
                a[(r, j)] -= v * self.g[(c, j)];
            }
        }
        spectral_radius(&a, RHO_TOL)
    }
}

/// `start` seeds the search (zero gain if absent). `budget` counts
/// closed-loop spectral-radius evaluations over all state groups.
pub fn design_gain_fallback(
    problem: &GainProblem,
    budget: usize,
    seed: u64,
    start: Option<&[Matrix]>,
) -> Result<GainResult> {
    if budget == 0 {
        return Err(Error::InvalidArgument("fallback budget must be at least 1".into()));
    }
    let comps = problem.components();
    let pats = problem.gain_pattern(&comps);
    let g = problem.g();
    let mut k_blocks = match start {
        Some(k) => {
            certify(problem, k)?;
            k.to_vec()
        }
        None => problem.zero_gain(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let share = (budget / comps.len()).max(1);
    let mut used = 0;

    for (comp, pat) in comps.iter().zip(&pats) {
        let local: std::collections::HashMap<usize, usize> =
            comp.iter().enumerate().map(|(l, &gi)| (gi, l)).collect();
        let group = Group {
            m: problem.m.select(comp),
            g: g.select(comp),
            entries: pat.iter().map(|&(r, c)| (r, c, local[&r], local[&c])).collect(),
        };
        let mut k: Vec<f64> = pat.iter().map(|&(r, c)| problem.read_gain(&k_blocks, r, c)).collect();
        used += pattern_search(&group, &mut k, share, &mut rng)?;
        for (&(r, c), &v) in pat.iter().zip(k.iter()) {
            problem.write_gain_entry(&mut k_blocks, r, c, v);
        }
    }

    let (rho, certified) = certify(problem, &k_blocks)?;
    let note = if certified {
        format!("pattern search certified after {used} evaluations")
    } else {
        format!("budget of {budget} evaluations exhausted without certification")
    };
    Ok(GainResult {
        k_blocks,
        rho,
        certified,
        method: Method::Fallback,
        iterations: used,
        traces: Vec::new(),
        converged: certified,
        note,
    })
}

/// Improves `k` in place; returns the number of evaluations spent.
fn pattern_search(group: &Group, k: &mut Vec<f64>, budget: usize, rng: &mut ChaCha8Rng) -> Result<usize> {
    let mut best = group.rho(k)?;
    let mut evals = 1;
    let dim = k.len();
    let mut step = INITIAL_STEP;
    if dim == 0 {
        return Ok(evals);
    }
    while step > MIN_STEP && evals < budget && best > 0.0 {
        let mut improved = false;
        for i in 0..dim {
            for sign in [1.0, -1.0] {
                if evals >= budget {
                    break;
                }
                let old = k[i];
                k[i] = old + sign * step;
                let r = group.rho(k)?;
                evals += 1;
                if r < best {
                    best = r;
                    improved = true;
                    break;
                }
                k[i] = old;
            }
        }
        if !improved {
            for _ in 0..RANDOM_TRIES {
                if evals >= budget {
                    break;
                }
                let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
                let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(1e-300);
                let trial: Vec<f64> = k.iter().zip(&dir).map(|(x, d)| x + step * d / norm).collect();
                let r = group.rho(&trial)?;
                evals += 1;
                if r < best {
                    best = r;
                    *k = trial;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(evals)
}

#[cfg(test)]
mod tests {
    use super::super::tests::{platoon, scalar};
    use super::*;

    #[test]
    fn scalar_schur_interval() {
        let r = design_gain_fallback(&scalar(2.0, 1.0), 200, 7, None).unwrap();
        let k = r.k_blocks[0][(0, 0)];
        assert!(k > 0.5 && k < 1.5, "k = {k}");
        assert!(r.certified);
    }

    #[test]
    fn zero_open_loop_keeps_zero_gain() {
        let p = scalar(0.0, 1.0);
        let r = design_gain_fallback(&p, 50, 0, None).unwrap();
        assert_eq!(r.k_blocks[0][(0, 0)], 0.0);
        assert_eq!(r.rho, 0.0);
    }

    #[test]
    fn two_vehicle_platoon() {
        let p = platoon(2);
        let r = design_gain_fallback(&p, 4000, 1, None).unwrap();
        assert!(r.certified, "rho {}", r.rho);
        let again = design_gain_fallback(&p, 4000, 1, None).unwrap();
        assert_eq!(r.k_blocks, again.k_blocks);
    }

    #[test]
    fn zero_budget_rejected() {
        assert!(design_gain_fallback(&scalar(2.0, 1.0), 0, 0, None).is_err());
    }
}
