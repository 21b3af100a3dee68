//! Block-diagonal observer gain synthesis.
//!
//! The closed loop `Â = M − K·G` with `G = D_C·M` is Schur stable iff there
//! are `X, Y ≻ 0` with
//!
//! ```text
//! [X  Âᵀ]         [X  I]
//! [Â  Y ] ≻ 0,    [I  Y] ≻ 0,    XY = I.
//! ```
//!
//! The non-convex coupling `XY = I` is handled by cone-complementarity
//! linearisation ([`ccl`]): repeatedly minimise `tr(Y_k X + X_k Y)` over the
//! convex constraints until it reaches `2N`. Each subproblem is a small
//! semidefinite program solved by the barrier method in [`sdp`]. A
//! derivative-free search on `ρ(Â)` ([`fallback`]) covers stalls.
//!
//! When `M` and `D_C` split into independent groups of states (for the
//! platoon: one group per target vehicle), the gain can be restricted so
//! that `Â` keeps that split. Each group is then synthesised on its own,
//! which is what makes the default problem size tractable.

pub mod ccl;
pub mod fallback;
pub mod sdp;

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matlib::text::{content_lines, parse_matrix_lines, write_matrix_into};
use crate::matlib::{singular_values, spectral_radius, Matrix};
use crate::network::CommNetwork;
use crate::observer::{build_dc, closed_loop, open_loop, RHO_TOL};
use crate::platoon::MeasurementModel;

pub use ccl::{design_gain_ccl, design_gain_ccl_with, initial_state, solve_sdp_step, CclState};
pub use fallback::design_gain_fallback;

/// Which gain entries the synthesis may use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Structure {
    /// Keep `Â` block-diagonal on the independent state groups of `(M, D_C)`.
    #[default]
    Decoupled,
    /// Every entry of every diagonal block that reaches the closed loop.
    Full,
}

impl FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "decoupled" => Ok(Structure::Decoupled),
            "full" => Ok(Structure::Full),
            other => Err(Error::Parse(format!("unknown gain structure {other:?}"))),
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Structure::Decoupled => "decoupled",
            Structure::Full => "full",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Method {
    #[default]
    Auto,
    Ccl,
    Fallback,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(Method::Auto),
            "ccl" => Ok(Method::Ccl),
            "fallback" => Ok(Method::Fallback),
            other => Err(Error::Parse(format!("unknown synthesis method {other:?}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Auto => "auto",
            Method::Ccl => "ccl",
            Method::Fallback => "fallback",
        })
    }
}

#[derive(Clone, Debug)]
pub struct GainProblem {
    pub m: Matrix,
    pub d_c: Matrix,
    pub block_sizes: Vec<usize>,
    pub epsilon: f64,
    pub max_outer: usize,
    pub pd_margin: f64,
    /// Target decay rate `α ∈ (0, 1]`; the LMIs use `Â/α`, so a feasible
    /// point certifies `ρ(Â) < α`.
    pub decay: f64,
    pub structure: Structure,
}

impl GainProblem {
    pub fn new(m: Matrix, d_c: Matrix, block_sizes: Vec<usize>) -> Result<Self> {
        let n: usize = block_sizes.iter().sum();
        if !m.is_square() || m.rows() != n || d_c.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "blocks cover {n} states, M is {}x{}, D_C {}x{}",
                m.rows(),
                m.cols(),
                d_c.rows(),
                d_c.cols()
            )));
        }
        if block_sizes.contains(&0) {
            return Err(Error::InvalidArgument("empty gain block".into()));
        }
        if !m.is_finite() || !d_c.is_finite() {
            return Err(Error::NonFinite("gain problem data".into()));
        }
        let pd_margin = 1e-6 * (1.0 + singular_values(&m).first().copied().unwrap_or(0.0));
        Ok(GainProblem {
            m,
            d_c,
            block_sizes,
            epsilon: 1e-3,
            max_outer: 50,
            pd_margin,
            decay: 1.0,
            structure: Structure::Decoupled,
        })
    }

    /// `M = W⊗A_glob`, `D_C` from the neighbourhoods, one block per active
    /// vehicle.
    pub fn from_network(net: &CommNetwork, a_glob: &Matrix, mm: &MeasurementModel) -> Result<Self> {
        let m = open_loop(net, a_glob);
        let d_c = build_dc(mm, net);
        Self::new(m, d_c, vec![a_glob.rows(); net.n_active()])
    }

    pub fn dim(&self) -> usize {
        self.m.rows()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidArgument(format!("decay must lie in (0, 1], got {}", self.decay)));
        }
        if !(self.pd_margin >= 0.0) {
            return Err(Error::InvalidArgument(format!("pd_margin must be non-negative, got {}", self.pd_margin)));
        }
        Ok(())
    }

    /// `G = D_C·M`.
    pub fn g(&self) -> Matrix {
        self.d_c.matmul(&self.m).expect("dimensions checked at construction")
    }

    fn block_of(&self) -> Vec<usize> {
        self.block_sizes
            .iter()
            .enumerate()
            .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
            .collect()
    }

    fn block_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.block_sizes.len());
        let mut acc = 0;
        for &s in &self.block_sizes {
            off.push(acc);
            acc += s;
        }
        off
    }

    /// Groups of state indices that synthesis treats independently, each
    /// sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.dim();
        if self.structure == Structure::Full {
            return vec![(0..n).collect()];
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut a: usize) -> usize {
            while p[a] != a {
                p[a] = p[p[a]];
                a = p[a];
            }
            a
        }
        for a in 0..n {
            for b in 0..n {
                if a != b && (self.m[(a, b)] != 0.0 || self.d_c[(a, b)] != 0.0) {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; n];
        for a in 0..n {
            let r = find(&mut parent, a);
            if slot[r] == usize::MAX {
                slot[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[r]].push(a);
        }
        groups
    }

    /// Free gain entries `(row, col)` in global coordinates for each
    /// component: same block, same component, and `G` row `col` nonzero.
    pub fn gain_pattern(&self, components: &[Vec<usize>]) -> Vec<Vec<(usize, usize)>> {
        let g = self.g();
        let block = self.block_of();
        let live: Vec<bool> = (0..self.dim()).map(|c| g.row(c).iter().any(|&v| v != 0.0)).collect();
        components
            .iter()
            .map(|comp| {
                let mut pat = Vec::new();
                for &r in comp {
                    for &c in comp {
                        if block[r] == block[c] && live[c] {
                            pat.push((r, c));
                        }
                    }
                }
                pat
            })
            .collect()
    }

    pub fn zero_gain(&self) -> Vec<Matrix> {
        self.block_sizes.iter().map(|&s| Matrix::zeros(s, s)).collect()
    }

    pub(crate) fn read_gain(&self, k_blocks: &[Matrix], r: usize, c: usize) -> f64 {
        let block = self.block_of();
        let off = self.block_offsets();
        let b = block[r];
        k_blocks[b][(r - off[b], c - off[b])]
    }

    pub(crate) fn write_gain_entry(&self, k_blocks: &mut [Matrix], r: usize, c: usize, v: f64) {
        let block = self.block_of();
        let off = self.block_offsets();
        let b = block[r];
        k_blocks[b][(r - off[b], c - off[b])] = v;
    }

    fn check_blocks(&self, k_blocks: &[Matrix]) -> Result<()> {
        let ok = k_blocks.len() == self.block_sizes.len()
            && k_blocks.iter().zip(&self.block_sizes).all(|(k, &s)| k.shape() == (s, s));
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "gain has {} blocks, layout expects sizes {:?}",
                k_blocks.len(),
                self.block_sizes
            )))
        }
    }
}

#[derive(Clone, Debug)]
pub struct GainResult {
    pub k_blocks: Vec<Matrix>,
    pub rho: f64,
    pub certified: bool,
    pub method: Method,
    pub iterations: usize,
    /// Linearised objective of every accepted outer iteration (CCL only).
    pub traces: Vec<f64>,
    /// The stopping criterion `tr(Y_prev X + X_prev Y) < 2N + ε` was met.
    pub converged: bool,
    pub note: String,
}

/// Spectral radius of `M − K·D_C·M` and whether it is below one.
pub fn certify(problem: &GainProblem, k_blocks: &[Matrix]) -> Result<(f64, bool)> {
    problem.check_blocks(k_blocks)?;
    let a_hat = closed_loop(&problem.m, &problem.d_c, k_blocks)?;
    let rho = spectral_radius(&a_hat, RHO_TOL)?;
    Ok((rho, rho < 1.0))
}

/// CCL first; if that fails or does not certify, pattern search seeded from
/// the best CCL gain.
pub fn design_gain(problem: &GainProblem, method: Method, fallback_budget: usize, seed: u64) -> Result<GainResult> {
    match method {
        Method::Ccl => design_gain_ccl(problem),
        Method::Fallback => design_gain_fallback(problem, fallback_budget, seed, None),
        Method::Auto => {
            let ccl = design_gain_ccl(problem);
            match ccl {
                Ok(r) if r.certified => Ok(r),
                Ok(r) => {
                    let mut fb = design_gain_fallback(problem, fallback_budget, seed, Some(&r.k_blocks))?;
                    fb.note = format!("ccl did not certify (rho {:.6}); {}", r.rho, fb.note);
                    Ok(fb)
                }
                Err(e) => {
                    let mut fb = design_gain_fallback(problem, fallback_budget, seed, None)?;
                    fb.note = format!("ccl failed ({e}); {}", fb.note);
                    Ok(fb)
                }
            }
        }
    }
}

/// Header line `blocks <n> blocksize <s>` followed by each block in the
/// matrix text format.
pub fn write_gain(k_blocks: &[Matrix]) -> Result<String> {
    let size = k_blocks.first().map_or(0, Matrix::rows);
    if k_blocks.iter().any(|k| k.shape() != (size, size)) {
        return Err(Error::Dimension("gain blocks must be square and equally sized".into()));
    }
    let mut out = String::new();
    let _ = writeln!(out, "blocks {} blocksize {}", k_blocks.len(), size);
    for k in k_blocks {
        write_matrix_into(k, &mut out);
    }
    Ok(out)
}

pub fn parse_gain(text: &str) -> Result<Vec<Matrix>> {
    let mut lines = content_lines(text);
    let (no, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty gain file".into()))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    let (count, size) = match toks.as_slice() {
        ["blocks", n, "blocksize", s] => (
            n.parse::<usize>()
                .map_err(|_| Error::Parse(format!("line {no}: bad block count {n:?}")))?,
            s.parse::<usize>()
                .map_err(|_| Error::Parse(format!("line {no}: bad block size {s:?}")))?,
        ),
        _ => {
            return Err(Error::Parse(format!(
                "line {no}: expected \"blocks <n> blocksize <s>\", got {header:?}"
            )))
        }
    };
    let mut blocks = Vec::with_capacity(count);
    for b in 0..count {
        let k = parse_matrix_lines(&mut lines)?;
        if k.shape() != (size, size) {
            return Err(Error::Parse(format!(
                "block {} is {}x{}, header says {size}x{size}",
                b + 1,
                k.rows(),
                k.cols()
            )));
        }
        blocks.push(k);
    }
    if let Some((no, extra)) = lines.next() {
        return Err(Error::Parse(format!("line {no}: unexpected trailing content {extra:?}")));
    }
    Ok(blocks)
}
