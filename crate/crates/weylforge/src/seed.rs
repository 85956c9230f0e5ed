//! Seeding scheme: every task draws from ChaCha8 keyed by the root seed, with
//! the stream number set to the task counter. Tasks never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn task_rng(root: u64, task: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(task);
    rng
}

/// Task counters for distinct experiment families, so that trial `t` of one
/// family never collides with trial `t` of another.
pub fn task_id(family: u32, index: u64) -> u64 {
    ((family as u64) << 40) | (index & ((1 << 40) - 1))
}
