//! Deterministic per-task random streams.
//!
//! Every source of randomness in an experiment is a pure function of
//! `(master seed, replication, stream)`, expanded through a SplitMix64 chain
//! into a ChaCha key. Parallel scheduling therefore never changes any draw,
//! and replications can run in any order on any number of threads.

use rand_chacha::ChaCha12Rng;
use rand_chacha::rand_core::SeedableRng;

/// Stream tags within one replication.
pub const STREAM_DATA: u64 = 0;
pub const STREAM_FIT_FOLDS: u64 = 1;
pub const STREAM_NODEWISE_FOLDS: u64 = 2;

#[inline]
fn splitmix_next(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mixed_state(master: u64, replication: u64, stream: u64) -> u64 {
    let mut s = master;
    let a = splitmix_next(&mut s);
    s = a ^ replication;
    let b = splitmix_next(&mut s);
    s = b ^ stream;
    splitmix_next(&mut s);
    s
}

/// Counter-style RNG for one (replication, stream) cell.
pub fn stream_rng(master: u64, replication: u64, stream: u64) -> ChaCha12Rng {
    let mut s = mixed_state(master, replication, stream);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix_next(&mut s).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// 64-bit seed for APIs that take one (fold shuffles).
pub fn stream_seed(master: u64, replication: u64, stream: u64) -> u64 {
    let mut s = mixed_state(master, replication, stream);
    splitmix_next(&mut s)
}
