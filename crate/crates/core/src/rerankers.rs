//! Baseline re-rankers sharing one contract: take a user's top-`t` list,
//! emit a top-`n` list drawn from it.
//!
//! `none` keeps the head of the list, `reverse` takes the tail, `random`
//! samples uniformly without replacement. Sampled and tail selections are
//! emitted in ascending original-rank order; the metrics downstream are
//! order-insensitive at fixed `n`, a fixed rule just keeps runs
//! reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::fairmatch::{rerank_fairmatch, FairMatchConfig};
use crate::ingest::{RecEntry, RecommendationTable};

/// A re-ranking method with its parameters.
#[derive(Debug, Clone)]
pub enum Reranker {
    /// Top-`n` prefix of the base list.
    None,
    /// Uniform sample without replacement from the base list.
    Random { seed: u64 },
    /// Bottom `n` entries of the base list.
    Reverse,
    /// Max-flow candidate extraction and list reconstruction.
    FairMatch(FairMatchConfig),
}

/// Output lists per user, in the input table's user order.
#[derive(Debug, Clone)]
pub struct RerankedLists {
    pub lists: Vec<(String, Vec<String>)>,
    /// True when the iterative method stopped at its iteration cap.
    pub truncated: bool,
}

impl Reranker {
    pub fn name(&self) -> &'static str {
        match self {
            Reranker::None => "none",
            Reranker::Random { .. } => "random",
            Reranker::Reverse => "reverse",
            Reranker::FairMatch(_) => "fairmatch",
        }
    }

    /// Re-ranks every list of the table down to `n` items.
    pub fn rerank(&self, recs: &RecommendationTable, n: usize) -> Result<RerankedLists> {
        match self {
            Reranker::None => per_user(recs, |list, _| rerank_none(list, n)),
            Reranker::Reverse => per_user(recs, |list, _| rerank_reverse(list, n)),
            Reranker::Random { seed } => per_user(recs, |list, user_idx| {
                rerank_random(list, n, derive_seed(*seed, user_idx as u64))
            }),
            Reranker::FairMatch(cfg) => {
                if cfg.n != n {
                    return Err(Error::InvalidInput(format!(
                        "fairmatch config n={} does not match requested n={n}",
                        cfg.n
                    )));
                }
                let reranked = rerank_fairmatch(recs, cfg)?;
                Ok(RerankedLists {
                    lists: reranked.lists,
                    truncated: reranked.run.hit_iteration_cap,
                })
            }
        }
    }
}

fn per_user(
    recs: &RecommendationTable,
    mut op: impl FnMut(&[RecEntry], usize) -> Result<Vec<String>>,
) -> Result<RerankedLists> {
    let lists = recs
        .users()
        .iter()
        .enumerate()
        .map(|(idx, user)| Ok((user.user.clone(), op(&user.entries, idx)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RerankedLists {
        lists,
        truncated: false,
    })
}

fn check_length(list: &[RecEntry], n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    if list.len() < n {
        return Err(Error::InvalidInput(format!(
            "list of {} items is shorter than n={n}",
            list.len()
        )));
    }
    Ok(())
}

/// First `n` items in original order.
pub fn rerank_none(list: &[RecEntry], n: usize) -> Result<Vec<String>> {
    check_length(list, n)?;
    Ok(list[..n].iter().map(|e| e.item.clone()).collect())
}

/// Uniform sample of `n` items without replacement, emitted in ascending
/// original-rank order; deterministic for a fixed seed.
pub fn rerank_random(list: &[RecEntry], n: usize, seed: u64) -> Result<Vec<String>> {
    check_length(list, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, list.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| list[i].item.clone()).collect())
}

/// Last `n` items (original ranks `t-n+1..=t`), emitted in ascending
/// original-rank order.
pub fn rerank_reverse(list: &[RecEntry], n: usize) -> Result<Vec<String>> {
    check_length(list, n)?;
    Ok(list[list.len() - n..]
        .iter()
        .map(|e| e.item.clone())
        .collect())
}
