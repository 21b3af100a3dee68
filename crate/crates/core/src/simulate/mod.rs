//! Seeded scenario engine: platoon truth under random inputs, noisy
//! position sensors, the observer bank, and scheduled faults with gain
//! re-synthesis.

pub mod rng;
pub mod sweep;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gainsynth::{certify, design_gain, GainProblem, GainResult, Method, Structure};
use crate::matlib::Matrix;
use crate::network::{apply_fault, build_weights, default_topology, is_strongly_connected, CommNetwork, Edge, Fault, FaultKind};
use crate::observer::{build_dc, build_error_matrix, check_distributed_observability, ErrorSystem, ObserverBank};
use crate::platoon::{
    discretize, global_system, init_platoon, measure, ContinuousModel, DiscreteModel, Discretization, MeasurementModel,
    SpacingPolicy, STATES_PER_VEHICLE,
};
use rng::{gaussian, stream, Purpose};

/// Rank tolerance of the observability check run before every synthesis.
pub const OBSERVABILITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub n: usize,
    pub dt: f64,
    pub tau: f64,
    pub gap: f64,
    pub headway: f64,
    pub v0: f64,
    pub lead_position: f64,
    pub discretization: Discretization,
    pub noise_var: f64,
    pub input_sigma: f64,
    pub steps: usize,
    pub seed: u64,
    pub topology: Vec<Edge>,
    pub faults: Vec<Fault>,
    pub gain_method: Method,
    pub structure: Structure,
    pub epsilon: f64,
    pub max_outer: usize,
    pub decay: f64,
    pub fallback_budget: usize,
    /// Gain for the network in force at step 1; synthesised when absent.
    pub initial_gain: Option<Vec<Matrix>>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 4,
            dt: 0.1,
            tau: 0.5,
            gap: 5.0,
            headway: 1.0,
            v0: 20.0,
            lead_position: 0.0,
            discretization: Discretization::Literal,
            noise_var: 0.04,
            input_sigma: 0.1,
            steps: 500,
            seed: 1,
            topology: default_topology(4),
            faults: Vec::new(),
            gain_method: Method::Auto,
            structure: Structure::Decoupled,
            epsilon: 1e-3,
            max_outer: 50,
            decay: 0.85,
            fallback_budget: 20_000,
            initial_gain: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n == 0 {
            return bad("scenario needs at least one vehicle".into());
        }
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if !(self.input_sigma >= 0.0) || !self.input_sigma.is_finite() {
            return bad(format!("input_sigma must be >= 0, got {}", self.input_sigma));
        }
        if !(self.noise_var >= 0.0) || !self.noise_var.is_finite() {
            return bad(format!("noise variance must be >= 0, got {}", self.noise_var));
        }
        if !self.v0.is_finite() || !self.lead_position.is_finite() {
            return bad("v0 and lead_position must be finite".into());
        }
        if self.fallback_budget == 0 {
            return bad("fallback_budget must be at least 1".into());
        }
        if let Some(&(f, t)) = self.topology.iter().find(|&&(f, t)| f >= self.n || t >= self.n) {
            return bad(format!("edge {}->{} outside 1..={}", f + 1, t + 1, self.n));
        }
        Ok(())
    }

    pub fn discrete_model(&self) -> Result<DiscreteModel> {
        discretize(&ContinuousModel::new(self.tau)?, self.dt, self.discretization)
    }

    pub fn spacing_policy(&self) -> Result<SpacingPolicy> {
        SpacingPolicy::new(self.gap, self.headway)
    }

    /// Communication network in force at step 1 (after faults scheduled at
    /// time 0).
    pub fn initial_network(&self) -> Result<CommNetwork> {
        let mut net = build_weights(&self.topology, self.n)?;
        for f in self.sorted_faults().iter().filter(|f| f.time == 0) {
            net = apply_fault(&net, f)?;
        }
        Ok(net)
    }

    fn sorted_faults(&self) -> Vec<Fault> {
        let mut f = self.faults.clone();
        f.sort_by_key(|f| f.time);
        f
    }

    pub fn gain_problem(&self, net: &CommNetwork) -> Result<GainProblem> {
        let dm = self.discrete_model()?;
        let m = net.n_active();
        let mm = MeasurementModel::new(m, self.noise_var)?;
        let mut p = GainProblem::from_network(net, &global_system(&dm, m), &mm)?;
        p.epsilon = self.epsilon;
        p.max_outer = self.max_outer;
        p.decay = self.decay;
        p.structure = self.structure;
        p.validate()?;
        Ok(p)
    }

    pub fn synthesize(&self, net: &CommNetwork) -> Result<GainResult> {
        let p = self.gain_problem(net)?;
        design_gain(&p, self.gain_method, self.fallback_budget, self.seed)
    }
}

/// Strong connectivity and distributed observability of a network under the
/// scenario's model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetworkCheck {
    pub strongly_connected: bool,
    pub observable: bool,
}

impl NetworkCheck {
    pub fn ok(&self) -> bool {
        self.strongly_connected && self.observable
    }

    pub fn diagnostic(&self) -> String {
        let mut parts = Vec::new();
        if !self.strongly_connected {
            parts.push("network is not strongly connected");
        }
        if !self.observable {
            parts.push("distributed observability fails for (W⊗A, D_C)");
        }
        if parts.is_empty() {
            "network checks passed".into()
        } else {
            parts.join("; ")
        }
    }
}

pub fn check_network(cfg: &ScenarioConfig, net: &CommNetwork) -> Result<NetworkCheck> {
    let dm = cfg.discrete_model()?;
    let m = net.n_active();
    let mm = MeasurementModel::new(m, cfg.noise_var)?;
    let a_glob = global_system(&dm, m);
    let dc = build_dc(&mm, net);
    Ok(NetworkCheck {
        strongly_connected: is_strongly_connected(net),
        observable: check_distributed_observability(net, &a_glob, &dc, OBSERVABILITY_TOL)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisEvent {
    /// Step before which the gain took effect (1 for the initial gain).
    pub k: usize,
    pub rho: f64,
    pub certified: bool,
    pub method: Method,
    pub iterations: usize,
    /// False when the gain was supplied rather than synthesised.
    pub synthesized: bool,
}

#[derive(Clone, Debug)]
pub struct SimResult {
    /// One entry per step `k = 1…steps`: `(vehicle, MSE)` for each active
    /// vehicle, vehicles in original 0-based numbering.
    pub mse: Vec<Vec<(usize, f64)>>,
    pub rho_history: Vec<SynthesisEvent>,
    pub events: Vec<String>,
    pub estimates_final: Vec<(usize, Vec<f64>)>,
    pub truth_final: Vec<f64>,
}

impl SimResult {
    /// Mean MSE over the last `window` steps and all vehicles active then.
    pub fn steady_mse(&self, window: usize) -> f64 {
        let tail = &self.mse[self.mse.len().saturating_sub(window.max(1))..];
        let (sum, count) = tail
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, c), &(_, v)| (s + v, c + 1));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// Largest per-vehicle MSE at step `k` (1-based).
    pub fn max_mse_at(&self, k: usize) -> Option<f64> {
        self.mse
            .get(k.checked_sub(1)?)
            .map(|row| row.iter().map(|&(_, v)| v).fold(0.0, f64::max))
    }

    /// MSE series of one vehicle as `(k, mse)` pairs.
    pub fn series(&self, vehicle: usize) -> Vec<(usize, f64)> {
        self.mse
            .iter()
            .enumerate()
            .filter_map(|(i, row)| row.iter().find(|&&(v, _)| v == vehicle).map(|&(_, m)| (i + 1, m)))
            .collect()
    }
}

/// `‖x − x̂‖² / dim`.
pub fn mse(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() || truth.is_empty() {
        return Err(Error::Dimension(format!(
            "truth of length {} against estimate of length {}",
            truth.len(),
            estimate.len()
        )));
    }
    let s: f64 = truth.iter().zip(estimate).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / truth.len() as f64)
}

/// Per-step, per-vehicle MSE for a recorded run: `truth[k]` against
/// `estimates[k][i]`.
pub fn mse_series(truth: &[Vec<f64>], estimates: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<f64>>> {
    if truth.len() != estimates.len() {
        return Err(Error::Dimension(format!(
            "{} truth samples against {} estimate samples",
            truth.len(),
            estimates.len()
        )));
    }
    truth
        .iter()
        .zip(estimates)
        .map(|(x, row)| row.iter().map(|e| mse(x, e)).collect())
        .collect()
}

pub struct Engine {
    cfg: ScenarioConfig,
    dm: DiscreteModel,
    net: CommNetwork,
    mm: MeasurementModel,
    a_glob: Matrix,
    truth: Vec<f64>,
    bank: ObserverBank,
    input_streams: Vec<ChaCha8Rng>,
    noise_streams: Vec<ChaCha8Rng>,
    faults: Vec<Fault>,
    next_fault: usize,
    k: usize,
    rho_history: Vec<SynthesisEvent>,
    events: Vec<String>,
}

impl Engine {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let dm = cfg.discrete_model()?;
        let truth = init_platoon(cfg.n, cfg.lead_position, cfg.v0, &cfg.spacing_policy()?)?;
        let dim = STATES_PER_VEHICLE * cfg.n;
        let mut engine = Engine {
            dm,
            net: build_weights(&cfg.topology, cfg.n)?,
            mm: MeasurementModel::new(cfg.n, cfg.noise_var)?,
            a_glob: Matrix::zeros(0, 0),
            truth,
            bank: ObserverBank::with_estimates(vec![vec![0.0; dim]; cfg.n], vec![Matrix::zeros(dim, dim); cfg.n])?,
            input_streams: (0..cfg.n).map(|v| stream(cfg.seed, v, Purpose::Input)).collect(),
            noise_streams: (0..cfg.n).map(|v| stream(cfg.seed, v, Purpose::Measurement)).collect(),
            faults: cfg.sorted_faults(),
            next_fault: 0,
            k: 0,
            rho_history: Vec::new(),
            events: Vec::new(),
            cfg: cfg.clone(),
        };
        engine.apply_due_faults(0)?;
        engine.reconfigure(cfg.initial_gain.clone())?;
        Ok(engine)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn network(&self) -> &CommNetwork {
        &self.net
    }

    /// Original ids of the vehicles still in the platoon.
    pub fn active_vehicles(&self) -> Vec<usize> {
        self.net.active_nodes()
    }

    pub fn truth(&self) -> &[f64] {
        &self.truth
    }

    pub fn estimates(&self) -> &[Vec<f64>] {
        self.bank.estimates()
    }

    pub fn gain_blocks(&self) -> &[Matrix] {
        self.bank.gain_blocks()
    }

    pub fn rho_history(&self) -> &[SynthesisEvent] {
        &self.rho_history
    }

    pub fn events(&self) -> &[String] {
        &self.events
    }

    /// Overwrites the estimates, e.g. to start from chosen errors.
    pub fn set_estimates(&mut self, estimates: Vec<Vec<f64>>) -> Result<()> {
        self.bank.set_estimates(estimates)
    }

    /// `[x − x̂¹; …; x − x̂ᵐ]`.
    pub fn stacked_error(&self) -> Vec<f64> {
        self.bank
            .estimates()
            .iter()
            .flat_map(|e| self.truth.iter().zip(e).map(|(x, xh)| x - xh))
            .collect()
    }

    pub fn error_system(&self) -> Result<ErrorSystem> {
        build_error_matrix(&self.net, &self.a_glob, &self.bank, &self.mm)
    }

    pub fn current_mse(&self) -> Result<Vec<(usize, f64)>> {
        self.active_vehicles()
            .into_iter()
            .zip(self.bank.estimates())
            .map(|(v, e)| Ok((v, mse(&self.truth, e)?)))
            .collect()
    }

    fn apply_due_faults(&mut self, k: usize) -> Result<bool> {
        let mut any = false;
        while let Some(f) = self.faults.get(self.next_fault).copied() {
            if f.time > k {
                break;
            }
            self.next_fault += 1;
            if f.time < k {
                continue;
            }
            if let FaultKind::Node(id) = f.kind {
                let pos = self
                    .net
                    .active_nodes()
                    .iter()
                    .position(|&v| v == id)
                    .ok_or_else(|| Error::Network(format!("cannot remove vehicle {}: not active", id + 1)))?;
                self.drop_vehicle(pos)?;
            }
            self.net = apply_fault(&self.net, &f)?;
            self.events.push(format!("{f}"));
            any = true;
        }
        Ok(any)
    }

    /// Removes the vehicle at compact position `pos` from truth and from
    /// every estimate; the gain is rebuilt by the caller.
    fn drop_vehicle(&mut self, pos: usize) -> Result<()> {
        let s = STATES_PER_VEHICLE;
        let keep = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .enumerate()
                .filter(|(i, _)| i / s != pos)
                .map(|(_, x)| *x)
                .collect()
        };
        self.truth = keep(&self.truth);
        let est: Vec<Vec<f64>> = self
            .bank
            .estimates()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != pos)
            .map(|(_, e)| keep(e))
            .collect();
        let dim = self.truth.len();
        self.bank = ObserverBank::with_estimates(est.clone(), vec![Matrix::zeros(dim, dim); est.len()])?;
        Ok(())
    }

    fn reconfigure(&mut self, supplied: Option<Vec<Matrix>>) -> Result<()> {
        let check = check_network(&self.cfg, &self.net)?;
        if !check.ok() {
            return Err(Error::Network(format!("at step {}: {}", self.k.max(1), check.diagnostic())));
        }
        let m = self.net.n_active();
        self.mm = MeasurementModel::new(m, self.cfg.noise_var)?;
        self.a_glob = global_system(&self.dm, m);
        let event_k = self.k + 1;
        let (k_blocks, event) = match supplied {
            Some(k_blocks) => {
                let p = self.cfg.gain_problem(&self.net)?;
                let (rho, certified) = certify(&p, &k_blocks)?;
                let ev = SynthesisEvent {
                    k: event_k,
                    rho,
                    certified,
                    method: self.cfg.gain_method,
                    iterations: 0,
                    synthesized: false,
                };
                (k_blocks, ev)
            }
            None => {
                let r = self.cfg.synthesize(&self.net)?;
                let ev = SynthesisEvent {
                    k: event_k,
                    rho: r.rho,
                    certified: r.certified,
                    method: r.method,
                    iterations: r.iterations,
                    synthesized: true,
                };
                (r.k_blocks, ev)
            }
        };
        let certified = event.certified;
        let rho = event.rho;
        self.rho_history.push(event);
        if !certified {
            return Err(Error::Synthesis(format!(
                "gain for step {event_k} is not Schur stable (rho = {rho:.6})"
            )));
        }
        self.bank.set_gains(k_blocks)?;
        Ok(())
    }

    /// Advances one sample: pending faults, truth, measurements, observer.
    pub fn step(&mut self) -> Result<()> {
        let k = self.k + 1;
        if self.apply_due_faults(k)? {
            self.reconfigure(None)?;
        }
        self.k = k;
        let active = self.net.active_nodes();
        let sigma_r = self.cfg.noise_var.sqrt();
        let u: Vec<f64> = active
            .iter()
            .map(|&v| gaussian(&mut self.input_streams[v], self.cfg.input_sigma))
            .collect();
        let mut next = vec![0.0; self.truth.len()];
        self.dm.propagate_stacked(&self.truth, &mut next);
        let b = self.dm.b_d.as_slice();
        for (blk, &ui) in next.chunks_exact_mut(STATES_PER_VEHICLE).zip(&u) {
            for (x, bs) in blk.iter_mut().zip(b) {
                *x += bs * ui;
            }
        }
        self.truth = next;
        let noise: Vec<f64> = active
            .iter()
            .map(|&v| gaussian(&mut self.noise_streams[v], sigma_r))
            .collect();
        let y = measure(&self.truth, &self.mm, &noise)?;
        self.bank.step(&self.net, &self.a_glob, &y, &self.mm)
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimResult> {
    let mut engine = Engine::new(cfg)?;
    let mut series = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        engine.step()?;
        series.push(engine.current_mse()?);
    }
    Ok(SimResult {
        mse: series,
        rho_history: engine.rho_history.clone(),
        events: engine.events.clone(),
        estimates_final: engine.active_vehicles().into_iter().zip(engine.estimates().iter().cloned()).collect(),
        truth_final: engine.truth.clone(),
    })
}
