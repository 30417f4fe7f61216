//! Counter-based random streams keyed by (seed, environment, reset count).
//!
//! Every environment draws from its own ChaCha stream, so resetting or
//! re-randomizing one environment never shifts the numbers another sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent sub-streams used within one environment reset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    AssetPicks = 0,
    AssetPoses = 1,
    RobotSpawn = 2,
    Goal = 3,
    CameraMount = 4,
}

// 2^40 words per (reset, purpose) slot, 2^24 resets per environment.
const PURPOSE_SHIFT: u32 = 40;
const RESET_SHIFT: u32 = 44;

pub fn env_stream(seed: u64, env_index: usize, reset_counter: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(env_index as u64);
    let word = ((reset_counter as u128 & 0xFF_FFFF) << RESET_SHIFT) | ((purpose as u128) << PURPOSE_SHIFT);
    rng.set_word_pos(word);
    rng
}

/// Uniform sample in `[lo, hi]`; returns `lo` exactly when the interval is
/// degenerate.
pub fn uniform<R: rand::Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.gen();
    lo + (hi - lo) * u
}
