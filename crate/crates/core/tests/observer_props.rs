use cavobs::matlib::rank_svd;
use cavobs::network::{is_strongly_connected, CommNetwork, Edge};
use cavobs::observer::{
    build_dc, build_error_matrix, check_distributed_observability, closed_loop, open_loop, pbh_reconstructible,
    ObserverBank,
};
use cavobs::platoon::{discretize, global_system, measure, ContinuousModel, Discretization, MeasurementModel};
use cavobs::Matrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn a_glob(n: usize, mode: Discretization) -> Matrix {
    let dm = discretize(&ContinuousModel::new(0.5).unwrap(), 0.1, mode).unwrap();
    global_system(&dm, n)
}

fn strongly_connected_digraph(rng: &mut ChaCha8Rng, n: usize) -> Vec<Edge> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges: Vec<Edge> = (0..n).map(|k| (order[k], order[(k + 1) % n])).collect();
    for a in 0..n {
        for b in 0..n {
            if a != b && !edges.contains(&(a, b)) && rng.random_bool(0.25) {
                edges.push((a, b));
            }
        }
    }
    edges
}

fn random_digraph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<Edge> {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.random_bool(p) {
                edges.push((a, b));
            }
        }
    }
    edges
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

#[test]
fn one_observer_step_propagates_error_through_closed_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..100 {
        let n = [2, 3, 4][case % 3];
        let dim = 3 * n;
        let net = CommNetwork::new(n, &strongly_connected_digraph(&mut rng, n)).unwrap();
        let a = a_glob(n, Discretization::Literal);
        let mm = MeasurementModel::new(n, 0.0).unwrap();
        let gains: Vec<Matrix> = (0..n).map(|_| random_matrix(&mut rng, dim, dim, 0.5)).collect();
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
        let est: Vec<Vec<f64>> = (0..n).map(|_| x.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect()).collect();
        let e0: Vec<f64> = est.iter().flat_map(|xi| xi.iter().zip(&x).map(|(h, t)| h - t)).collect();

        let mut bank = ObserverBank::with_estimates(est, gains).unwrap();
        let x_next = a.mul_vec(&x).unwrap();
        let y = measure(&x_next, &mm, &vec![0.0; n]).unwrap();
        let sys = build_error_matrix(&net, &a, &bank, &mm).unwrap();
        bank.step(&net, &a, &y, &mm).unwrap();

        let predicted = sys.a_hat.mul_vec(&e0).unwrap();
        let actual: Vec<f64> =
            bank.estimates().iter().flat_map(|xi| xi.iter().zip(&x_next).map(|(h, t)| h - t)).collect();
        for (p, q) in predicted.iter().zip(&actual) {
            assert!((p - q).abs() < 1e-12 * (1.0 + p.abs()), "case {case}: {p} vs {q}");
        }
    }
}

#[test]
fn zero_gain_closed_loop_is_open_loop() {
    let n = 3;
    let net = CommNetwork::new(n, &[(0, 1), (1, 2), (2, 0)]).unwrap();
    let m = open_loop(&net, &a_glob(n, Discretization::Literal));
    let dc = build_dc(&MeasurementModel::new(n, 0.0).unwrap(), &net);
    let zero = vec![Matrix::zeros(9, 9); 3];
    assert_eq!(closed_loop(&m, &dc, &zero).unwrap(), m);
}

fn observable(net: &CommNetwork, mode: Discretization) -> bool {
    let n = net.n_active();
    let mm = MeasurementModel::new(n, 0.0).unwrap();
    check_distributed_observability(net, &a_glob(n, mode), &build_dc(&mm, net), 1e-6).unwrap()
}

#[test]
fn strongly_connected_supports_are_observable_for_generic_weights() {
    // the graph-theoretic claim is structural: it holds for almost every
    // stochastic W on an irreducible support
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..50 {
        let n = 3 + case % 3;
        let edges = strongly_connected_digraph(&mut rng, n);
        let net = CommNetwork::new(n, &edges).unwrap();
        let mut w = Matrix::zeros(n, n);
        for i in 0..n {
            let nb = net.neighborhood(i);
            let raw: Vec<f64> = nb.iter().map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            for (&j, v) in nb.iter().zip(&raw) {
                w[(i, j)] = v / total;
            }
        }
        let dc = build_dc(&MeasurementModel::new(n, 0.0).unwrap(), &net);
        for mode in [Discretization::Literal, Discretization::ForwardEuler] {
            let m = w.kron(&a_glob(n, mode));
            assert!(pbh_reconstructible(&m, &dc, 1e-6).unwrap(), "{edges:?} {mode:?}");
        }
    }
}

#[test]
fn regular_metropolis_families_are_observable() {
    for n in 2..=6 {
        let ring: Vec<Edge> = (0..n).flat_map(|i| [(i, (i + 1) % n), ((i + 1) % n, i)]).filter(|e| e.0 != e.1).collect();
        let cycle: Vec<Edge> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        let complete: Vec<Edge> = (0..n).flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b))).collect();
        for edges in [ring, cycle, complete, cavobs::network::default_topology(n)] {
            let net = CommNetwork::new(n, &edges).unwrap();
            assert!(observable(&net, Discretization::Literal), "n = {n}, {edges:?}");
        }
    }
}

#[test]
fn metropolis_weights_can_cancel_on_strongly_connected_graphs() {
    // W has eigenvalue 1/4 with eigenvector e₁ − e₅, and neither vehicle 1 nor
    // vehicle 5 hears vehicles 2 or 3
    let edges = [(1, 2), (2, 3), (3, 0), (0, 4), (4, 1), (0, 1), (2, 1), (3, 2), (3, 4), (4, 0)];
    let net = CommNetwork::new(5, &edges).unwrap();
    assert!(is_strongly_connected(&net));
    assert!(!observable(&net, Discretization::Literal));
}

#[test]
fn disconnected_networks_are_not_observable() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..40 {
        let n = rng.random_range(2..=5);
        let cut = rng.random_range(1..n);
        let edges: Vec<Edge> = random_digraph(&mut rng, n, 0.6)
            .into_iter()
            .filter(|&(a, b)| (a < cut) == (b < cut))
            .collect();
        let net = CommNetwork::new(n, &edges).unwrap();
        assert!(!observable(&net, Discretization::Literal), "{edges:?}");
    }
    // two disconnected bidirectional pairs
    let net = CommNetwork::new(4, &[(0, 1), (1, 0), (2, 3), (3, 2)]).unwrap();
    assert!(!observable(&net, Discretization::ForwardEuler));
}

/// Basis of the null space of `a`, by Gauss–Jordan with
/// a relative pivot threshold. Columns of the result span `ker a`.
fn null_space(a: &Matrix, tol: f64) -> Matrix {
    let (rows, cols) = a.shape();
    let mut r = a.clone();
    let scale = a.max_abs().max(1.0);
    let mut pivots = Vec::new();
    let mut row = 0;
    for c in 0..cols {
        if row == rows {
            break;
        }
        let p = (row..rows).max_by(|&i, &j| r[(i, c)].abs().partial_cmp(&r[(j, c)].abs()).unwrap()).unwrap();
        if r[(p, c)].abs() <= tol * scale {
            continue;
        }
        for j in 0..cols {
            let t = r[(p, j)];
            r[(p, j)] = r[(row, j)];
            r[(row, j)] = t;
        }
        let piv = r[(row, c)];
        for j in 0..cols {
            r[(row, j)] /= piv;
        }
        for i in 0..rows {
            if i != row && r[(i, c)] != 0.0 {
                let f = r[(i, c)];
                for j in 0..cols {
                    r[(i, j)] -= f * r[(row, j)];
                }
            }
        }
        pivots.push(c);
        row += 1;
    }
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    let mut basis = Matrix::zeros(cols, free.len());
    for (k, &f) in free.iter().enumerate() {
        basis[(f, k)] = 1.0;
        for (i, &p) in pivots.iter().enumerate() {
            basis[(p, k)] = -r[(i, f)];
        }
    }
    basis
}

/// Kalman decomposition: the unobservable subspace `U = ker O` is
/// `M`-invariant, and the pair is reconstructible iff `M|U` is nilpotent.
/// Nilpotency is read off the rank chain of powers of `M|U`, which settles
/// long before small nonzero modes decay below round-off.
fn kalman_reconstructible(m: &Matrix, dc: &Matrix) -> bool {
    let dim = m.rows();
    let mut o = Matrix::zeros(dim * dim, dim);
    let mut p = Matrix::identity(dim);
    for k in 0..dim {
        o.set_block(k * dim, 0, &(dc * &p));
        p = &p * m;
    }
    let u = null_space(&o, 1e-9);
    let r = u.cols();
    if r == 0 {
        return true;
    }
    // coordinates of M·U in the basis U: least squares via the normal equations
    let utu = &u.transpose() * &u;
    let inv = cavobs::matlib::Cholesky::factor(&utu).unwrap().inverse();
    let l = &(&inv * &u.transpose()) * &(m * &u);
    let mut power = Matrix::identity(r);
    let mut last = r;
    loop {
        power = &power * &l;
        if power.max_abs() < 1e-9 {
            return true;
        }
        let rank = rank_svd(&power, 1e-9);
        if rank == 0 {
            return true;
        }
        if rank == last {
            return false;
        }
        last = rank;
    }
}

#[test]
fn pbh_agrees_with_kalman_rank_on_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let (mut yes, mut no) = (0, 0);
    for _ in 0..60 {
        let n = rng.random_range(2..=3);
        let net = CommNetwork::new(n, &random_digraph(&mut rng, n, 0.6)).unwrap();
        let m = open_loop(&net, &a_glob(n, Discretization::Literal));
        let dc = build_dc(&MeasurementModel::new(n, 0.0).unwrap(), &net);
        let pbh = pbh_reconstructible(&m, &dc, 1e-6).unwrap();
        assert_eq!(pbh, kalman_reconstructible(&m, &dc));
        if pbh {
            yes += 1;
        } else {
            no += 1;
        }
    }
    assert!(yes > 5 && no > 5, "{yes} observable, {no} not");
}

#[test]
fn pbh_agrees_with_kalman_rank_on_small_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..300 {
        let dim = rng.random_range(2..=5);
        // integer entries with a random zero pattern give exact repeated and zero modes
        let m = Matrix::from_vec(
            dim,
            dim,
            (0..dim * dim).map(|_| if rng.random_bool(0.5) { 0.0 } else { rng.random_range(-2..=2) as f64 }).collect(),
        )
        .unwrap();
        let picks: Vec<f64> = (0..dim).map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 }).collect();
        let dc = Matrix::diag(&picks);
        let kalman = kalman_reconstructible(&m, &dc);
        let pbh = pbh_reconstructible(&m, &dc, 1e-6).unwrap();
        assert_eq!(pbh, kalman, "M = {m:?}, D = {picks:?}");
    }
}

#[test]
fn default_platoon_observable_by_both_tests() {
    let net = CommNetwork::new(4, &cavobs::network::default_topology(4)).unwrap();
    let m = open_loop(&net, &a_glob(4, Discretization::Literal));
    let dc = build_dc(&MeasurementModel::new(4, 0.0).unwrap(), &net);
    assert!(pbh_reconstructible(&m, &dc, 1e-6).unwrap());
    assert!(kalman_reconstructible(&m, &dc));
    let broken = CommNetwork::new(5, &[(1, 2), (2, 3), (3, 0), (0, 4), (4, 1), (0, 1), (2, 1), (3, 2), (3, 4), (4, 0)]).unwrap();
    let m = open_loop(&broken, &a_glob(5, Discretization::Literal));
    let dc = build_dc(&MeasurementModel::new(5, 0.0).unwrap(), &broken);
    assert!(!kalman_reconstructible(&m, &dc));
}
