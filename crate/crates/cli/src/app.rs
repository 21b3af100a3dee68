use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use cavobs::gainsynth::{parse_gain, write_gain};
use cavobs::network::connectivity;
use cavobs::simulate::sweep::{evaluate_case, sweep_cases, SweepRow, STEADY_WINDOW};
use cavobs::simulate::{check_network, run_scenario, ScenarioConfig, SimResult};

use crate::config;
use crate::svg::{self, Series};

#[derive(Parser, Debug)]
#[command(name = "cavobs", version, about = "Distributed observers for vehicle platoons")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Connectivity, κ and observability of the configured network.
    CheckNetwork(Common),
    /// Synthesise the block-diagonal observer gain and write it to a file.
    DesignGain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the scenario and write the per-vehicle MSE series.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Gain file from design-gain; synthesised when absent.
        #[arg(long)]
        gain: Option<PathBuf>,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Nominal network plus every single link and node removal.
    SweepFailures {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        csv: PathBuf,
        /// Worker threads; 0 lets the pool decide.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
}

#[derive(Args, Debug)]
pub struct Common {
    /// Scenario file.
    pub config: PathBuf,
    /// `key=value` override, e.g. `model.n=3` or `steps=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Exit status contract: 0 success, 1 domain failure, 2 usage, config or I/O.
#[derive(Debug)]
pub enum Failure {
    Domain(String),
    Usage(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

impl From<cavobs::Error> for Failure {
    fn from(e: cavobs::Error) -> Self {
        use cavobs::Error as E;
        match e {
            E::Network(_) | E::Infeasible(_) | E::Synthesis(_) | E::NoConvergence(_) => Failure::Domain(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

/// Parses arguments and runs; output goes to stdout, diagnostics to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut out = String::new();
    let res = execute(&cli.command, &mut out);
    print!("{out}");
    match res {
        Ok(()) => 0,
        Err(f) => {
            match &f {
                Failure::Domain(m) | Failure::Usage(m) => eprintln!("error: {m}"),
            }
            f.code()
        }
    }
}

pub fn execute(cmd: &Command, out: &mut String) -> Result<(), Failure> {
    match cmd {
        Command::CheckNetwork(c) => check(&load(c)?, out),
        Command::DesignGain { common, out: path } => design(&load(common)?, path, out),
        Command::Simulate { common, gain, csv, svg } => {
            simulate(&load(common)?, gain.as_deref(), csv, svg.as_deref(), out)
        }
        Command::SweepFailures { common, csv, threads } => sweep(&load(common)?, csv, *threads, out),
    }
}

fn load(c: &Common) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(&c.config)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", c.config.display())))?;
    config::load(&text, &c.overrides).map_err(|e| Failure::Usage(format!("{}: {e}", c.config.display())))
}

fn write_file(path: &Path, body: &str) -> Result<(), Failure> {
    fs::write(path, body).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn check(cfg: &ScenarioConfig, out: &mut String) -> Result<(), Failure> {
    let net = cfg.initial_network()?;
    let verdict = check_network(cfg, &net)?;
    let _ = writeln!(out, "vehicles: {} (active {})", net.n(), net.n_active());
    let _ = writeln!(out, "strongly_connected: {}", verdict.strongly_connected);
    if net.n_active() >= 2 {
        let rep = connectivity(&net)?;
        let _ = writeln!(out, "kappa_node: {}", rep.kappa_node);
        let _ = writeln!(out, "kappa_link: {}", rep.kappa_link);
    }
    let w = net.weights();
    let sums: Vec<String> = (0..w.rows()).map(|i| format!("{:.12}", w.row(i).iter().sum::<f64>())).collect();
    let _ = writeln!(out, "w_row_sums: {}", sums.join(" "));
    for i in 0..w.rows() {
        let row: Vec<String> = w.row(i).iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(out, "w[{}]: {}", i + 1, row.join(" "));
    }
    let _ = writeln!(out, "observable: {}", verdict.observable);
    if verdict.ok() {
        Ok(())
    } else {
        Err(Failure::Domain(verdict.diagnostic()))
    }
}

fn require_checks(cfg: &ScenarioConfig) -> Result<cavobs::network::CommNetwork, Failure> {
    let net = cfg.initial_network()?;
    let verdict = check_network(cfg, &net)?;
    if !verdict.ok() {
        return Err(Failure::Domain(verdict.diagnostic()));
    }
    Ok(net)
}

fn design(cfg: &ScenarioConfig, path: &Path, out: &mut String) -> Result<(), Failure> {
    let net = require_checks(cfg)?;
    let r = cfg.synthesize(&net)?;
    write_file(path, &write_gain(&r.k_blocks)?)?;
    let _ = writeln!(out, "method: {}", r.method);
    let _ = writeln!(out, "iterations: {}", r.iterations);
    let _ = writeln!(out, "rho: {}", r.rho);
    let _ = writeln!(out, "certified: {}", r.certified);
    let _ = writeln!(out, "note: {}", r.note);
    let _ = writeln!(out, "gain: {}", path.display());
    if r.certified {
        Ok(())
    } else {
        Err(Failure::Domain(format!("gain is not Schur stable (rho = {})", r.rho)))
    }
}

pub fn mse_csv(r: &SimResult) -> String {
    let mut s = String::from("k,vehicle,mse\n");
    for (step, row) in r.mse.iter().enumerate() {
        for &(v, m) in row {
            let _ = writeln!(s, "{},{},{:e}", step + 1, v + 1, m);
        }
    }
    s
}

fn simulate(
    cfg: &ScenarioConfig,
    gain: Option<&Path>,
    csv: &Path,
    svg_path: Option<&Path>,
    out: &mut String,
) -> Result<(), Failure> {
    let mut cfg = cfg.clone();
    if let Some(p) = gain {
        let text = fs::read_to_string(p).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", p.display())))?;
        cfg.initial_gain = Some(parse_gain(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?);
    }
    require_checks(&cfg)?;
    let r = run_scenario(&cfg)?;
    for e in &r.rho_history {
        let source = if e.synthesized { e.method.to_string() } else { "file".into() };
        let _ = writeln!(out, "gain at k={}: {source}, rho {}, certified {}", e.k, e.rho, e.certified);
    }
    for e in &r.events {
        let _ = writeln!(out, "fault: {e}");
    }
    let vehicles: Vec<usize> = r.mse.last().map(|row| row.iter().map(|p| p.0).collect()).unwrap_or_default();
    for &v in &vehicles {
        let tail: Vec<f64> = r.series(v).iter().rev().take(STEADY_WINDOW).map(|p| p.1).collect();
        let mean = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
        let _ = writeln!(out, "vehicle {}: final mse {:e}, mean of last {} {:e}", v + 1, tail[0], tail.len(), mean);
    }
    let body = mse_csv(&r);
    write_file(csv, &body)?;
    let _ = writeln!(out, "csv: {} ({} rows)", csv.display(), body.lines().count() - 1);
    if let Some(p) = svg_path {
        let series: Vec<Series> = vehicles
            .iter()
            .map(|&v| Series { label: format!("vehicle {}", v + 1), points: r.series(v) })
            .collect();
        write_file(p, &svg::render("Estimation MSE per vehicle", &series))?;
        let _ = writeln!(out, "svg: {}", p.display());
    }
    Ok(())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("fault,connected,observable,rho,steady_mse\n");
    for r in rows {
        let rho = r.rho.map(|v| v.to_string()).unwrap_or_default();
        let mse = r.steady_mse.map(|v| format!("{v:e}")).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{}", r.fault, r.connected, r.observable, rho, mse);
    }
    s
}

/// Rows come back in case order whatever the thread count.
pub fn sweep_rows(cfg: &ScenarioConfig, threads: usize) -> Result<Vec<SweepRow>, Failure> {
    let cases = sweep_cases(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
    Ok(pool.install(|| cases.par_iter().map(|&c| evaluate_case(cfg, c)).collect()))
}

fn sweep(cfg: &ScenarioConfig, csv: &Path, threads: usize, out: &mut String) -> Result<(), Failure> {
    let rows = sweep_rows(cfg, threads)?;
    for r in &rows {
        let rho = r.rho.map_or("-".to_string(), |v| format!("{v:.4}"));
        let mse = r.steady_mse.map_or("-".to_string(), |v| format!("{v:.4e}"));
        let _ = write!(
            out,
            "{:<12} connected={:<5} observable={:<5} rho={rho:<7} steady_mse={mse}",
            r.fault, r.connected, r.observable
        );
        if let Some(e) = &r.error {
            let _ = write!(out, "  ({e})");
        }
        out.push('\n');
    }
    write_file(csv, &sweep_csv(&rows))?;
    let _ = writeln!(out, "csv: {}", csv.display());
    Ok(())
}
