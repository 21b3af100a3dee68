//! Fixtures shared by the benchmarks.

use cavobs::gainsynth::GainProblem;
use cavobs::network::{default_topology, CommNetwork};
use cavobs::simulate::ScenarioConfig;
use cavobs::Matrix;

/// Nominal scenario shrunk to `n` vehicles on the default topology.
pub fn scenario(n: usize) -> ScenarioConfig {
    ScenarioConfig { n, topology: default_topology(n), ..ScenarioConfig::default() }
}

pub fn network(n: usize) -> CommNetwork {
    CommNetwork::new(n, &default_topology(n)).expect("default topology is valid")
}

pub fn problem(n: usize) -> GainProblem {
    let cfg = scenario(n);
    cfg.gain_problem(&network(n)).expect("nominal problem")
}

/// Open-loop error matrix `W⊗A` of the default network.
pub fn open_loop(n: usize) -> Matrix {
    problem(n).m
}
