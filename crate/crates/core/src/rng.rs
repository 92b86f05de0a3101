//! Seed derivation for reproducible, order-independent random streams.
//!
//! Every agent draws from its own ChaCha8 stream seeded with
//! `run_seed ^ agent_id`, so serial and parallel schedules consume identical
//! sequences. One-off draws that must not depend on stream position (weather,
//! stub oracle answers) hash their inputs with [`mix`] instead.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type AgentRng = ChaCha8Rng;

pub fn agent_rng(run_seed: u64, agent_id: u64) -> AgentRng {
    ChaCha8Rng::seed_from_u64(run_seed ^ agent_id)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a word sequence.
pub fn mix(words: &[u64]) -> u64 {
    words.iter().fold(0x243F_6A88_85A3_08D3, |acc, &w| {
        splitmix64(acc ^ splitmix64(w))
    })
}

/// FNV-1a, stable across platforms and runs.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Maps a hash to a uniform value in [0, 1).
pub fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}
