//! Seeded random streams. Every (vehicle, purpose) pair draws from its own
//! ChaCha8 stream, so removing a vehicle or adding a fault never shifts the
//! numbers another vehicle sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    Input = 0,
    Measurement = 1,
}

const PURPOSES: u64 = 2;

/// Stream for `vehicle` (0-based, original numbering) and `purpose`.
pub fn stream(seed: u64, vehicle: usize, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(vehicle as u64 * PURPOSES + purpose as u64);
    rng
}

/// Zero-mean Gaussian draw with standard deviation `sigma`.
pub fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}

/// Nearly-constant-acceleration inputs: one i.i.d. `N(0, σ²)` draw per
/// vehicle, each from that vehicle's own stream.
pub fn nca_input(streams: &mut [ChaCha8Rng], input_sigma: f64) -> Vec<f64> {
    streams.iter_mut().map(|r| gaussian(r, input_sigma)).collect()
}
