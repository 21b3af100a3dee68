//! Scenario files.
//!
//! ```text
//! # top level
//! seed = 1
//! steps = 500
//!
//! [model]        n, dt, tau, gap, headway, v0, lead_position, discretization
//! [network]      edge lines "i j [bidir|dir]"; default topology when absent
//! [noise]        noise_var, input_sigma
//! [faults]       "link i->j @k" / "node i @k" lines
//! [synthesis]    method, structure, epsilon, max_outer, decay, fallback_budget
//! ```
//!
//! Keys are addressed as `key` at the top level and `section.key` inside a
//! section, which is also the syntax of `--set` overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use cavobs::network::{default_topology, parse_edge_list, Fault};
use cavobs::simulate::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Res<T> = Result<T, ConfigError>;

const KEYS: &[&str] = &[
    "seed",
    "steps",
    "model.n",
    "model.dt",
    "model.tau",
    "model.gap",
    "model.headway",
    "model.v0",
    "model.lead_position",
    "model.discretization",
    "noise.noise_var",
    "noise.input_sigma",
    "synthesis.method",
    "synthesis.structure",
    "synthesis.epsilon",
    "synthesis.max_outer",
    "synthesis.decay",
    "synthesis.fallback_budget",
];

/// A parsed file before it is turned into a [`ScenarioConfig`].
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
    edges: Option<String>,
    faults: Vec<String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Res<Self> {
        let mut raw = RawConfig::default();
        let mut section: Option<String> = None;
        for (no, line) in text.lines().enumerate() {
            let no = no + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError(format!("line {no}: unterminated section header")))?
                    .trim();
                if !["model", "network", "noise", "faults", "synthesis"].contains(&name) {
                    return Err(ConfigError(format!("line {no}: unknown section [{name}]")));
                }
                if name == "network" {
                    raw.edges.get_or_insert_with(String::new);
                }
                section = Some(name.to_string());
                continue;
            }
            match section.as_deref() {
                Some("network") => {
                    let edges = raw.edges.get_or_insert_with(String::new);
                    edges.push_str(line);
                    edges.push('\n');
                }
                Some("faults") => raw.faults.push(line.to_string()),
                other => {
                    let (k, v) = line
                        .split_once('=')
                        .ok_or_else(|| ConfigError(format!("line {no}: expected key = value, got {line:?}")))?;
                    let key = match other {
                        Some(s) => format!("{s}.{}", k.trim()),
                        None => k.trim().to_string(),
                    };
                    if !KEYS.contains(&key.as_str()) {
                        return Err(ConfigError(format!("line {no}: unknown key {key:?}")));
                    }
                    if raw.values.insert(key.clone(), v.trim().to_string()).is_some() {
                        return Err(ConfigError(format!("line {no}: {key:?} set twice")));
                    }
                }
            }
        }
        Ok(raw)
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Res<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("override {assignment:?} is not key=value")))?;
        let key = k.trim();
        if !KEYS.contains(&key) {
            return Err(ConfigError(format!("unknown key {key:?} in override")));
        }
        self.values.insert(key.to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn to_scenario(&self) -> Res<ScenarioConfig> {
        let mut cfg = ScenarioConfig::default();
        let n: usize = self.get("model.n")?.unwrap_or(cfg.n);
        cfg.n = n;
        macro_rules! take {
            ($($key:literal => $field:ident),* $(,)?) => {
                $( if let Some(v) = self.get($key)? { cfg.$field = v; } )*
            };
        }
        take! {
            "seed" => seed,
            "steps" => steps,
            "model.dt" => dt,
            "model.tau" => tau,
            "model.gap" => gap,
            "model.headway" => headway,
            "model.v0" => v0,
            "model.lead_position" => lead_position,
            "model.discretization" => discretization,
            "noise.noise_var" => noise_var,
            "noise.input_sigma" => input_sigma,
            "synthesis.method" => gain_method,
            "synthesis.structure" => structure,
            "synthesis.epsilon" => epsilon,
            "synthesis.max_outer" => max_outer,
            "synthesis.decay" => decay,
            "synthesis.fallback_budget" => fallback_budget,
        }
        cfg.topology = match &self.edges {
            Some(text) => parse_edge_list(text).map_err(|e| ConfigError(format!("[network]: {e}")))?,
            None => default_topology(n),
        };
        cfg.faults = self
            .faults
            .iter()
            .map(|f| f.parse::<Fault>().map_err(|e| ConfigError(format!("[faults]: {e}"))))
            .collect::<Res<_>>()?;
        cfg.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(cfg)
    }

    fn get<T: FromStr>(&self, key: &str) -> Res<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| ConfigError(format!("{key} = {v:?}: {e}"))),
        }
    }
}

/// Reads, overrides and validates in one go.
pub fn load(text: &str, overrides: &[String]) -> Res<ScenarioConfig> {
    let mut raw = RawConfig::parse(text)?;
    for o in overrides {
        raw.set(o)?;
    }
    raw.to_scenario()
}
