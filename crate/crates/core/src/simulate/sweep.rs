//! Single-fault survivability sweep: the nominal network plus every
//! single-link and single-node removal, each applied from the start.

use super::{check_network, run_scenario, ScenarioConfig};
use crate::error::Result;
use crate::network::Fault;

/// Steps averaged for the steady-state MSE column.
pub const STEADY_WINDOW: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    /// `nominal`, `link i->j` or `node i`.
    pub fault: String,
    pub connected: bool,
    pub observable: bool,
    pub rho: Option<f64>,
    pub steady_mse: Option<f64>,
    pub error: Option<String>,
}

/// `None` stands for the nominal case. Faults already scheduled in the
/// config are ignored; the sweep studies the configured topology.
pub fn sweep_cases(cfg: &ScenarioConfig) -> Result<Vec<Option<Fault>>> {
    let base = ScenarioConfig { faults: Vec::new(), ..cfg.clone() };
    let net = base.initial_network()?;
    let mut cases = vec![None];
    cases.extend(net.edges().iter().map(|&(f, t)| Some(Fault::link(f, t, 0))));
    cases.extend(net.active_nodes().into_iter().map(|v| Some(Fault::node(v, 0))));
    Ok(cases)
}

/// Checks and, when they pass, simulates one case. Failures are recorded
/// in the row rather than returned.
pub fn evaluate_case(cfg: &ScenarioConfig, case: Option<Fault>) -> SweepRow {
    let label = case.map_or_else(|| "nominal".to_string(), |f| f.label());
    let scenario = ScenarioConfig {
        faults: case.into_iter().collect(),
        initial_gain: None,
        ..cfg.clone()
    };
    let mut row = SweepRow {
        fault: label,
        connected: false,
        observable: false,
        rho: None,
        steady_mse: None,
        error: None,
    };
    let check = scenario
        .initial_network()
        .and_then(|net| check_network(&scenario, &net));
    match check {
        Ok(c) => {
            row.connected = c.strongly_connected;
            row.observable = c.observable;
            if !c.ok() {
                row.error = Some(c.diagnostic());
                return row;
            }
        }
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    }
    match run_scenario(&scenario) {
        Ok(r) => {
            row.rho = r.rho_history.last().map(|e| e.rho);
            row.steady_mse = Some(r.steady_mse(STEADY_WINDOW));
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}
