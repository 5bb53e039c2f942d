//! End-to-end library flow: synthesize data, re-rank with every method, and
//! evaluate the metrics, checking the pieces compose the way the CLI uses
//! them.

use std::collections::{HashMap, HashSet};

use fairmatch_core::fairmatch::FairMatchConfig;
use fairmatch_core::ingest::{
    generate_synthetic, generate_synthetic_ratings, parse_recs, write_recs,
};
use fairmatch_core::metrics::{
    coverage_at_n, entropy, evaluate_batch, long_tail_split, RecommendationBatch,
};
use fairmatch_core::rerankers::Reranker;

const USERS: usize = 80;
const ITEMS: usize = 50;
const T: usize = 15;
const N: usize = 6;

fn test_profiles(
    ratings: &fairmatch_core::ingest::RatingsTable,
) -> HashMap<String, HashSet<String>> {
    let mut profiles: HashMap<String, HashSet<String>> = HashMap::new();
    for rec in ratings.records() {
        profiles
            .entry(rec.user.clone())
            .or_default()
            .insert(rec.item.clone());
    }
    profiles
}

#[test]
fn every_method_produces_a_valid_evaluated_batch() {
    let recs = generate_synthetic(USERS, ITEMS, T, 1.2, 17).unwrap();
    let ratings = generate_synthetic_ratings(USERS, ITEMS, 12, 1.2, 18).unwrap();
    let (train, test) = ratings.split_holdout(0.2, 19);
    let profiles = test_profiles(&test);
    let (_, long_tail) = long_tail_split(&train, 20.0);

    let methods = [
        Reranker::None,
        Reranker::Random { seed: 17 },
        Reranker::Reverse,
        Reranker::FairMatch(FairMatchConfig::new(0.5, T, N)),
    ];
    for method in methods {
        let out = method.rerank(&recs, N).unwrap();
        assert_eq!(out.lists.len(), USERS, "{}", method.name());
        let batch = RecommendationBatch::new(out.lists, ITEMS, N).unwrap();
        let report = evaluate_batch(&batch, &profiles, &long_tail, 20.0).unwrap();
        assert!((0.0..=1.0).contains(&report.precision), "{}", method.name());
        assert!((0.0..=1.0).contains(&report.coverage), "{}", method.name());
        assert!((0.0..=1.0).contains(&report.gini), "{}", method.name());
        assert!(report.entropy >= 0.0, "{}", method.name());
        assert!(
            (0.0..=1.0).contains(&report.longtail_coverage),
            "{}",
            method.name()
        );
    }
}

#[test]
fn fairmatch_broadens_coverage_on_skewed_synthetic_data() {
    let recs = generate_synthetic(USERS, ITEMS, T, 1.2, 17).unwrap();
    let baseline = Reranker::None.rerank(&recs, N).unwrap();
    let fairmatch = Reranker::FairMatch(FairMatchConfig::new(0.5, T, N))
        .rerank(&recs, N)
        .unwrap();
    let base_batch = RecommendationBatch::new(baseline.lists, ITEMS, N).unwrap();
    let fair_batch = RecommendationBatch::new(fairmatch.lists, ITEMS, N).unwrap();
    assert!(coverage_at_n(&fair_batch) >= coverage_at_n(&base_batch));
    assert!(entropy(&fair_batch) > 0.0);
}

#[test]
fn rerank_then_write_then_parse_round_trips_the_final_lists() {
    let recs = generate_synthetic(20, 30, 8, 1.0, 4).unwrap();
    let out = Reranker::Reverse.rerank(&recs, 4).unwrap();

    // rebuild a table with positional ranks and the base scores
    let users = out
        .lists
        .iter()
        .map(|(user, items)| {
            let base = recs.get(user).unwrap();
            let entries = items
                .iter()
                .enumerate()
                .map(|(pos, item)| {
                    let score = base
                        .entries
                        .iter()
                        .find(|e| &e.item == item)
                        .unwrap()
                        .score;
                    fairmatch_core::ingest::RecEntry {
                        item: item.clone(),
                        rank: (pos + 1) as u32,
                        score,
                    }
                })
                .collect();
            fairmatch_core::ingest::UserRecs {
                user: user.clone(),
                entries,
            }
        })
        .collect();
    let table = fairmatch_core::ingest::RecommendationTable::new(users, 4).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reranked.tsv");
    write_recs(&table, &path).unwrap();
    let parsed = parse_recs(&path, 4).unwrap();
    assert_eq!(parsed, table);
}
