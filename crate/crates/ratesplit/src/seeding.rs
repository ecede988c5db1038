//! Deterministic RNG streams for parallel Monte Carlo.
//!
//! Every trial owns independent ChaCha streams derived from
//! (master seed, trial index, lane). Workers never share RNG state, so
//! results are identical for any worker count and any scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags that keep draws for different quantities in disjoint streams.
/// Separating lanes means e.g. enlarging a quantization codebook never
/// perturbs the channel draw of the same trial.
pub const LANE_CHANNEL: u64 = 0;
pub const LANE_CSIT: u64 = 1;
pub const LANE_SCHEME: u64 = 2;
/// Codebook lane for user k is `LANE_CODEBOOK_BASE + k`.
pub const LANE_CODEBOOK_BASE: u64 = 8;

const LANES_PER_TRIAL: u64 = 1 << 9;

/// RNG for one (trial, lane) cell of the experiment grid.
pub fn trial_rng(master_seed: u64, trial: u64, lane: u64) -> ChaCha8Rng {
    assert!(lane < LANES_PER_TRIAL, "lane index too large");
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial * LANES_PER_TRIAL + lane);
    rng
}
