//! Homogeneous platoon model: third-order vehicle kinematics with a first-order
//! driveline lag, its sampled form, the constant-time-headway spacing policy,
//! and position measurements.
//!
//! The global state stacks vehicles one after another:
//! `(p¹, v¹, a¹, p², v², a², …)`.

use crate::error::{Error, Result};
use crate::matlib::Matrix;

pub const STATES_PER_VEHICLE: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleState {
    /// Position (m).
    pub p: f64,
    /// Velocity (m/s).
    pub v: f64,
    /// Acceleration (m/s²).
    pub a: f64,
}

impl VehicleState {
    pub fn new(p: f64, v: f64, a: f64) -> Self {
        VehicleState { p, v, a }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.p, self.v, self.a]
    }
}

#[derive(Clone, Debug)]
pub struct ContinuousModel {
    pub tau: f64,
    pub a_c: Matrix,
    pub b: Matrix,
}

impl ContinuousModel {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "driveline time constant must be positive, got {tau}"
            )));
        }
        Ok(ContinuousModel {
            tau,
            a_c: Matrix::from_rows(&[
                &[0.0, 1.0, 0.0],
                &[0.0, 0.0, 1.0],
                &[0.0, 0.0, -1.0 / tau],
            ]),
            b: Matrix::column(&[0.0, 0.0, 1.0 / tau]),
        })
    }
}

/// How the input matrix is sampled. The state matrix is the same either way.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Discretization {
    /// Input column `(0, 0, 1/τ)`, i.e. the continuous `B` carried over unchanged.
    #[default]
    Literal,
    /// Input column `T·B = (0, 0, T/τ)`.
    ForwardEuler,
}

impl std::str::FromStr for Discretization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-literal" | "literal" => Ok(Discretization::Literal),
            "forward-euler" | "euler" => Ok(Discretization::ForwardEuler),
            other => Err(Error::Parse(format!("unknown discretization {other:?}"))),
        }
    }
}

impl std::fmt::Display for Discretization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Discretization::Literal => "literal",
            Discretization::ForwardEuler => "forward-euler",
        })
    }
}

#[derive(Clone, Debug)]
pub struct DiscreteModel {
    pub dt: f64,
    pub tau: f64,
    pub a: Matrix,
    pub b_d: Matrix,
    pub mode: Discretization,
}

/// Samples the vehicle model with period `dt`; requires `0 < dt < τ`.
pub fn discretize(cm: &ContinuousModel, dt: f64, mode: Discretization) -> Result<DiscreteModel> {
    if !(dt > 0.0 && dt < cm.tau) {
        return Err(Error::InvalidArgument(format!(
            "sampling interval {dt} outside (0, tau = {})",
            cm.tau
        )));
    }
    let a = Matrix::from_rows(&[
        &[1.0, dt, 0.0],
        &[0.0, 1.0, dt],
        &[0.0, 0.0, 1.0 - dt / cm.tau],
    ]);
    let b_d = match mode {
        Discretization::Literal => cm.b.clone(),
        Discretization::ForwardEuler => cm.b.scale(dt),
    };
    Ok(DiscreteModel {
        dt,
        tau: cm.tau,
        a,
        b_d,
        mode,
    })
}

impl DiscreteModel {
    pub fn step(&self, x: VehicleState, u: f64) -> VehicleState {
        let s = x.to_array();
        let next: Vec<f64> = (0..3)
            .map(|i| {
                (0..3).map(|j| self.a[(i, j)] * s[j]).sum::<f64>() + self.b_d[(i, 0)] * u
            })
            .collect();
        VehicleState::new(next[0], next[1], next[2])
    }

    /// `x ← A x` for every vehicle block of a stacked state.
    pub(crate) fn propagate_stacked(&self, x: &[f64], out: &mut [f64]) {
        let a = self.a.as_slice();
        for (src, dst) in x.chunks_exact(3).zip(out.chunks_exact_mut(3)) {
            dst[0] = a[0] * src[0] + a[1] * src[1] + a[2] * src[2];
            dst[1] = a[3] * src[0] + a[4] * src[1] + a[5] * src[2];
            dst[2] = a[6] * src[0] + a[7] * src[1] + a[8] * src[2];
        }
    }
}

pub fn step_vehicle(x: VehicleState, u: f64, dm: &DiscreteModel) -> VehicleState {
    dm.step(x, u)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpacingPolicy {
    /// Static gap between consecutive vehicles (m).
    pub gap: f64,
    /// Time headway shared by every vehicle (s).
    pub headway: f64,
}

impl SpacingPolicy {
    pub fn new(gap: f64, headway: f64) -> Result<Self> {
        if !(gap >= 0.0) || !(headway >= 0.0) || !gap.is_finite() || !headway.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "spacing needs gap >= 0 and headway >= 0, got D = {gap}, h = {headway}"
            )));
        }
        Ok(SpacingPolicy { gap, headway })
    }
}

/// Desired distance between vehicle `i` and vehicle `i - j` (1-based).
///
/// Sums `h·v^{l-1}` for `l` from `i-j+1` to `i`, then adds `j·D`; with `j = 1`
/// this is the headway on the predecessor's speed plus one static gap.
pub fn spacing(i: usize, j: usize, velocities: &[f64], sp: &SpacingPolicy) -> Result<f64> {
    if j == 0 || i <= j || i > velocities.len() {
        return Err(Error::InvalidArgument(format!(
            "spacing needs 1 <= i - j and j >= 1 with i <= {}, got i = {i}, j = {j}",
            velocities.len()
        )));
    }
    let headway_part: f64 = (i - j + 1..=i).map(|l| sp.headway * velocities[l - 2]).sum();
    Ok(headway_part + j as f64 * sp.gap)
}

/// Initial formation: all vehicles at `v0` with zero acceleration, each one
/// placed its desired spacing behind its predecessor.
pub fn init_platoon(n: usize, lead_position: f64, v0: f64, sp: &SpacingPolicy) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("platoon needs at least one vehicle".into()));
    }
    let velocities = vec![v0; n];
    let mut x = Vec::with_capacity(3 * n);
    let mut p = lead_position;
    for i in 1..=n {
        if i > 1 {
            p -= spacing(i, 1, &velocities, sp)?;
        }
        x.extend_from_slice(&[p, v0, 0.0]);
    }
    Ok(x)
}

/// `I_n ⊗ A`.
pub fn global_system(dm: &DiscreteModel, n: usize) -> Matrix {
    Matrix::identity(n).kron(&dm.a)
}

/// Position sensors: vehicle `i` reads the first coordinate of its own block.
#[derive(Clone, Debug)]
pub struct MeasurementModel {
    pub n: usize,
    pub states_per_vehicle: usize,
    pub noise_var: f64,
}

impl MeasurementModel {
    pub fn new(n: usize, noise_var: f64) -> Result<Self> {
        Self::with_states(n, STATES_PER_VEHICLE, noise_var)
    }

    /// Variant with a different per-vehicle state size; the scalar form is
    /// handy for hand-checkable observer cases.
    pub fn with_states(n: usize, states_per_vehicle: usize, noise_var: f64) -> Result<Self> {
        if !(noise_var >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be >= 0, got {noise_var}"
            )));
        }
        if states_per_vehicle == 0 {
            return Err(Error::InvalidArgument("vehicles need at least one state".into()));
        }
        Ok(MeasurementModel {
            n,
            states_per_vehicle,
            noise_var,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.states_per_vehicle * self.n
    }

    /// Column of the stacked state read by sensor `i` (0-based).
    pub fn position_index(&self, i: usize) -> usize {
        self.states_per_vehicle * i
    }

    /// The 1×3n row `C_i` (0-based `i`).
    pub fn row(&self, i: usize) -> Matrix {
        let mut c = Matrix::zeros(1, self.state_dim());
        c[(0, self.position_index(i))] = 1.0;
        c
    }

    /// Stacked `C` with one row per vehicle.
    pub fn matrix(&self) -> Matrix {
        let mut c = Matrix::zeros(self.n, self.state_dim());
        for i in 0..self.n {
            c[(i, self.position_index(i))] = 1.0;
        }
        c
    }
}

/// `yⁱ = C_i x + rⁱ` for every vehicle.
pub fn measure(x: &[f64], mm: &MeasurementModel, noise: &[f64]) -> Result<Vec<f64>> {
    if x.len() != mm.state_dim() || noise.len() != mm.n {
        return Err(Error::Dimension(format!(
            "state of length {} and {} noise samples for {} vehicles",
            x.len(),
            noise.len(),
            mm.n
        )));
    }
    Ok((0..mm.n)
        .map(|i| x[mm.position_index(i)] + noise[i])
        .collect())
}
