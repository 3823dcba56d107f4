//! Deterministic random streams.
//!
//! Every consumer of randomness derives its own substream from the global
//! seed and a list of integer tags (iteration, view, pixel, ...). Results
//! are therefore independent of evaluation order and thread count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Derive a substream from a seed and a tag path.
pub fn substream(seed: u64, tags: &[u64]) -> Stream {
    let mut h = splitmix64(seed);
    for &t in tags {
        h = splitmix64(h ^ t.wrapping_mul(0xff51afd7ed558ccd));
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Standard normal draw via Box-Muller.
pub fn standard_normal(rng: &mut Stream) -> f64 {
    // u1 in (0,1] so the log is finite
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
