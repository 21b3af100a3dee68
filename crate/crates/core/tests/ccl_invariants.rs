use cavobs::gainsynth::ccl::{constraints_hold, TRACE_SLACK};
use cavobs::gainsynth::{certify, design_gain_ccl, design_gain_ccl_with, CclState, GainProblem, Structure};
use cavobs::matlib::spectral_radius;
use cavobs::network::{default_topology, CommNetwork};
use cavobs::observer::RHO_TOL;
use cavobs::platoon::{discretize, global_system, ContinuousModel, Discretization, MeasurementModel};
use cavobs::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn platoon(n: usize, structure: Structure) -> GainProblem {
    let dm = discretize(&ContinuousModel::new(0.5).unwrap(), 0.1, Discretization::Literal).unwrap();
    let net = CommNetwork::new(n, &default_topology(n)).unwrap();
    let mm = MeasurementModel::new(n, 0.0).unwrap();
    let mut p = GainProblem::from_network(&net, &global_system(&dm, n), &mm).unwrap();
    p.structure = structure;
    p
}

fn check_run(p: &GainProblem) -> Vec<CclState> {
    let n = p.dim() as f64;
    let mut seen = Vec::new();
    let res = design_gain_ccl_with(p, |s| seen.push(s.clone())).unwrap();
    assert!(!seen.is_empty());
    let mut prev = f64::INFINITY;
    for s in &seen {
        assert!(constraints_hold(p, s).unwrap(), "iterate {}", s.outer_iter);
        // tr(XY) ≥ N follows from [X, I; I, Y] ⪰ 0
        assert!(s.trace_xy() >= n * (1.0 - 1e-9), "tr(XY) = {}", s.trace_xy());
        assert!(s.trace_val <= prev + TRACE_SLACK * (1.0 + prev.abs()));
        prev = s.trace_val;
    }
    if res.converged {
        let last = seen.last().unwrap();
        assert!(last.trace_xy() < n + 2.0 * p.epsilon, "tr(XY) = {}", last.trace_xy());
    }
    assert_eq!(res.certified, res.rho < 1.0);
    seen
}

/// Rebuilds the global gain and checks every entry outside the diagonal
/// blocks is exactly zero.
fn assert_block_diagonal(blocks: &[Matrix]) {
    let b = blocks[0].rows();
    let k = Matrix::block_diag(blocks);
    for i in 0..k.rows() {
        for j in 0..k.cols() {
            if i / b != j / b {
                assert_eq!(k[(i, j)], 0.0);
            }
        }
    }
}

#[test]
fn decoupled_two_vehicle_iterates() {
    let p = platoon(2, Structure::Decoupled);
    let seen = check_run(&p);
    let comps = p.components();
    let pats = p.gain_pattern(&comps);
    for s in &seen {
        assert_block_diagonal(&s.k_blocks);
        // and nothing outside the decoupled pattern is touched
        let allowed: std::collections::HashSet<(usize, usize)> = pats.iter().flatten().copied().collect();
        let dim = p.dim();
        let global = Matrix::block_diag(&s.k_blocks);
        for r in 0..dim {
            for c in 0..dim {
                if !allowed.contains(&(r, c)) {
                    assert_eq!(global[(r, c)], 0.0, "({r}, {c})");
                }
            }
        }
    }
}

#[test]
fn full_structure_two_vehicle_iterates() {
    let p = platoon(2, Structure::Full);
    let seen = check_run(&p);
    for s in &seen {
        assert_block_diagonal(&s.k_blocks);
    }
}

#[test]
fn certified_gain_is_continuous() {
    let p = platoon(2, Structure::Decoupled);
    let res = design_gain_ccl(&p).unwrap();
    assert!(res.certified && res.converged, "rho {}, {}", res.rho, res.note);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let bumped: Vec<Matrix> = res
            .k_blocks
            .iter()
            .map(|k| {
                let mut k = k.clone();
                for v in k.as_mut_slice() {
                    *v += rng.random_range(-1e-9..1e-9);
                }
                k
            })
            .collect();
        let (rho, _) = certify(&p, &bumped).unwrap();
        assert!((rho - res.rho).abs() < 1e-6, "{rho} vs {}", res.rho);
    }
}

#[test]
fn already_schur_open_loop_is_not_made_worse() {
    let mut p = platoon(2, Structure::Decoupled);
    p.m = p.m.scale(0.5);
    let open = spectral_radius(&p.m, RHO_TOL).unwrap();
    let res = check_run(&p);
    let last = res.last().unwrap();
    let (rho, ok) = certify(&p, &last.k_blocks).unwrap();
    let best = design_gain_ccl(&p).unwrap();
    assert!(ok && best.certified);
    assert!(best.rho <= open + 1e-12, "{} > {open}", best.rho);
    assert!(rho < 1.0);
}
