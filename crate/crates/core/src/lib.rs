//! Post-processing re-ranking of recommendation lists for aggregate diversity.
//!
//! A base recommender produces a long top-`t` list per user; the FairMatch
//! re-ranker builds a bipartite item/user flow network from those lists and
//! iteratively solves a maximum-flow problem to find relevant items with low
//! visibility, which then replace over-exposed items in the final top-`n`
//! lists. The crate also ships the simple `none`/`random`/`reverse` baselines,
//! an evaluation suite (precision, coverage, Gini, entropy, long-tail
//! coverage), and the file formats tying everything together.

pub mod error;
pub mod fairmatch;
pub mod flow_network;
pub mod ingest;
pub mod maxflow;
pub mod metrics;
pub mod rerankers;

pub use error::{Error, Result};

/// Derives an independent sub-seed for a keyed stream (per-user sampling,
/// sweep cells, ...) so that streams do not overlap when `seed` is shared.
///
/// SplitMix64 finalizer; stable across platforms.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
