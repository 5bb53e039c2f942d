//! Evaluation metrics over final top-`n` lists: precision, catalog coverage,
//! Gini index, entropy, and long-tail coverage.
//!
//! Gini and entropy work on the frequency distribution of recommended items.
//! Gini sums over the whole catalog (zero-probability items included) and is
//! 0 for a uniform distribution, 1 when a single item takes every slot.
//! Entropy is reported in nats.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::ingest::RatingsTable;

/// A batch of final lists, all of length `n`, against a catalog of
/// `catalog_size` items.
#[derive(Debug, Clone)]
pub struct RecommendationBatch {
    lists: Vec<(String, Vec<String>)>,
    catalog_size: usize,
    n: usize,
}

impl RecommendationBatch {
    pub fn new(
        lists: Vec<(String, Vec<String>)>,
        catalog_size: usize,
        n: usize,
    ) -> Result<Self> {
        if lists.is_empty() {
            return Err(Error::InvalidInput("batch has no lists".into()));
        }
        if catalog_size == 0 {
            return Err(Error::InvalidInput("catalog size must be positive".into()));
        }
        for (user, items) in &lists {
            if items.len() != n {
                return Err(Error::InvalidInput(format!(
                    "list of {user:?} has {} items, expected n={n}",
                    items.len()
                )));
            }
            let unique: HashSet<&String> = items.iter().collect();
            if unique.len() != items.len() {
                return Err(Error::InvalidInput(format!(
                    "list of {user:?} contains duplicates"
                )));
            }
        }
        Ok(RecommendationBatch {
            lists,
            catalog_size,
            n,
        })
    }

    pub fn lists(&self) -> &[(String, Vec<String>)] {
        &self.lists
    }

    pub fn catalog_size(&self) -> usize {
        self.catalog_size
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn distinct_items(&self) -> BTreeSet<&str> {
        self.lists
            .iter()
            .flat_map(|(_, items)| items.iter().map(String::as_str))
            .collect()
    }
}

/// All five metrics of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub precision: f64,
    pub coverage: f64,
    pub gini: f64,
    pub entropy: f64,
    pub longtail_coverage: f64,
    pub n: usize,
    pub k_percent: f64,
}

/// Mean over users of the fraction of the `n` recommended items found in the
/// user's test profile. Users without a profile count as empty profiles.
pub fn precision_at_n(
    batch: &RecommendationBatch,
    test_profiles: &HashMap<String, HashSet<String>>,
) -> f64 {
    let empty = HashSet::new();
    let total: f64 = batch
        .lists()
        .iter()
        .map(|(user, items)| {
            let profile = test_profiles.get(user).unwrap_or(&empty);
            let hits = items.iter().filter(|i| profile.contains(*i)).count();
            hits as f64 / batch.n() as f64
        })
        .sum();
    total / batch.lists().len() as f64
}

/// Fraction of the catalog recommended to at least one user.
pub fn coverage_at_n(batch: &RecommendationBatch) -> f64 {
    batch.distinct_items().len() as f64 / batch.catalog_size() as f64
}

/// Empirical probability of each recommended item: appearances divided by
/// the total number of recommendation slots. Unrecommended items are absent
/// (probability zero).
pub fn item_probability(batch: &RecommendationBatch) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut slots = 0usize;
    for (_, items) in batch.lists() {
        for item in items {
            *counts.entry(item.clone()).or_insert(0) += 1;
            slots += 1;
        }
    }
    counts
        .into_iter()
        .map(|(item, c)| (item, c as f64 / slots as f64))
        .collect()
}

/// Gini index of the recommended-item distribution over the full catalog
/// (zero-probability items included): 0 for uniform, 1 for a single item.
pub fn gini_index(batch: &RecommendationBatch) -> Result<f64> {
    let catalog = batch.catalog_size();
    if catalog < 2 {
        return Err(Error::InvalidInput(
            "gini index needs a catalog of at least 2 items".into(),
        ));
    }
    let probabilities = item_probability(batch);
    if probabilities.len() > catalog {
        return Err(Error::InvalidInput(format!(
            "{} recommended items exceed catalog size {catalog}",
            probabilities.len()
        )));
    }
    // ascending probability, ties by item id; unrecommended items occupy
    // positions 1..=zeros with probability 0 and contribute nothing
    let mut sorted: Vec<(&f64, &String)> =
        probabilities.iter().map(|(item, p)| (p, item)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(b.0).then(a.1.cmp(b.1)));
    let zeros = catalog - sorted.len();
    let mut sum = 0.0;
    for (offset, (p, _)) in sorted.iter().enumerate() {
        let k = (zeros + offset + 1) as f64;
        sum += (2.0 * k - catalog as f64 - 1.0) * **p;
    }
    Ok(sum / (catalog as f64 - 1.0))
}

/// Entropy of the recommended-item distribution, in nats.
pub fn entropy(batch: &RecommendationBatch) -> f64 {
    item_probability(batch)
        .values()
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

/// Entropy in an arbitrary logarithm base (2 for bits, e for nats).
pub fn entropy_in_base(batch: &RecommendationBatch, base: f64) -> f64 {
    entropy(batch) / base.ln()
}

/// Splits the catalog of rated items into the short head (most-rated items
/// cumulatively holding at least `k_percent` of all ratings, ties by item
/// id) and the long tail (everything else).
pub fn long_tail_split(
    train: &RatingsTable,
    k_percent: f64,
) -> (BTreeSet<String>, BTreeSet<String>) {
    let counts = train.item_counts();
    let mut ranking: Vec<(&String, usize)> = counts.iter().map(|(i, &c)| (i, c)).collect();
    ranking.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let total: usize = ranking.iter().map(|(_, c)| c).sum();

    let mut short_head = BTreeSet::new();
    let mut long_tail = BTreeSet::new();
    let mut cumulative = 0usize;
    let mut in_tail = false;
    for (item, count) in ranking {
        if in_tail {
            long_tail.insert(item.clone());
            continue;
        }
        short_head.insert(item.clone());
        cumulative += count;
        if (cumulative as f64) / (total as f64) >= k_percent / 100.0 {
            in_tail = true;
        }
    }
    (short_head, long_tail)
}

/// Fraction of long-tail items recommended at least once. Returns 0 when the
/// long tail is empty; callers should warn in that case.
pub fn long_tail_coverage(batch: &RecommendationBatch, long_tail: &BTreeSet<String>) -> f64 {
    if long_tail.is_empty() {
        return 0.0;
    }
    let recommended = batch.distinct_items();
    let hit = long_tail
        .iter()
        .filter(|item| recommended.contains(item.as_str()))
        .count();
    hit as f64 / long_tail.len() as f64
}

/// Computes all five metrics for one batch.
pub fn evaluate_batch(
    batch: &RecommendationBatch,
    test_profiles: &HashMap<String, HashSet<String>>,
    long_tail: &BTreeSet<String>,
    k_percent: f64,
) -> Result<MetricsReport> {
    Ok(MetricsReport {
        precision: precision_at_n(batch, test_profiles),
        coverage: coverage_at_n(batch),
        gini: gini_index(batch)?,
        entropy: entropy(batch),
        longtail_coverage: long_tail_coverage(batch, long_tail),
        n: batch.n(),
        k_percent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::RatingRecord;
    use approx::assert_abs_diff_eq;

    fn batch(lists: &[(&str, &[&str])], catalog: usize) -> RecommendationBatch {
        let n = lists[0].1.len();
        RecommendationBatch::new(
            lists
                .iter()
                .map(|(user, items)| {
                    (
                        user.to_string(),
                        items.iter().map(|s| s.to_string()).collect(),
                    )
                })
                .collect(),
            catalog,
            n,
        )
        .unwrap()
    }

    fn profiles(entries: &[(&str, &[&str])]) -> HashMap<String, HashSet<String>> {
        entries
            .iter()
            .map(|(user, items)| {
                (
                    user.to_string(),
                    items.iter().map(|s| s.to_string()).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn precision_all_hits() {
        let b = batch(&[("u1", &["a", "b"]), ("u2", &["c", "d"])], 10);
        let p = profiles(&[("u1", &["a", "b", "x"]), ("u2", &["c", "d"])]);
        assert_eq!(precision_at_n(&b, &p), 1.0);
    }

    #[test]
    fn precision_no_hits() {
        let b = batch(&[("u1", &["a", "b"])], 10);
        let p = profiles(&[("u1", &["x", "y"])]);
        assert_eq!(precision_at_n(&b, &p), 0.0);
    }

    #[test]
    fn precision_hand_counted() {
        // 2 users with 10-item lists: 3 hits and 1 hit -> (0.3 + 0.1) / 2
        let list1: Vec<&str> = vec!["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"];
        let list2: Vec<&str> = vec!["k", "l", "m", "n", "o", "p", "q", "r", "s", "t"];
        let b = batch(&[("u1", &list1), ("u2", &list2)], 30);
        let p = profiles(&[("u1", &["a", "b", "c"]), ("u2", &["k"])]);
        assert_abs_diff_eq!(precision_at_n(&b, &p), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn precision_missing_profile_counts_as_empty() {
        let b = batch(&[("u1", &["a"]), ("u2", &["a"])], 5);
        let p = profiles(&[("u1", &["a"])]);
        assert_eq!(precision_at_n(&b, &p), 0.5);
    }

    #[test]
    fn coverage_same_items_for_everyone() {
        let items: Vec<&str> = vec!["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"];
        let b = batch(&[("u1", &items), ("u2", &items), ("u3", &items)], 100);
        assert_abs_diff_eq!(coverage_at_n(&b), 0.10, epsilon = 1e-15);
    }

    #[test]
    fn coverage_full_catalog() {
        let b = batch(&[("u1", &["a", "b"]), ("u2", &["c", "d"])], 4);
        assert_eq!(coverage_at_n(&b), 1.0);
    }

    #[test]
    fn item_probability_single_user() {
        let b = batch(&[("u1", &["a", "b"])], 5);
        let p = item_probability(&b);
        assert_eq!(p["a"], 0.5);
        assert_eq!(p["b"], 0.5);
    }

    #[test]
    fn item_probability_everywhere_is_one_over_n() {
        // item in every one of 4 lists of length 2 -> 4 / 8
        let b = batch(
            &[("u1", &["a", "b"]), ("u2", &["a", "c"]), ("u3", &["a", "d"]), ("u4", &["a", "e"])],
            10,
        );
        let p = item_probability(&b);
        assert_eq!(p["a"], 0.5);
    }

    #[test]
    fn item_probability_sums_to_one() {
        let b = batch(&[("u1", &["a", "b", "c"]), ("u2", &["b", "c", "d"])], 9);
        let total: f64 = item_probability(&b).values().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gini_uniform_is_zero() {
        // every catalog item recommended exactly once
        let b = batch(
            &[
                ("u1", &["a", "b"]),
                ("u2", &["c", "d"]),
                ("u3", &["e", "f"]),
                ("u4", &["g", "h"]),
                ("u5", &["i", "j"]),
            ],
            10,
        );
        assert_abs_diff_eq!(gini_index(&b).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gini_single_item_is_one() {
        let b = batch(&[("u1", &["a"]), ("u2", &["a"]), ("u3", &["a"])], 4);
        assert_abs_diff_eq!(gini_index(&b).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gini_two_of_four_items() {
        // catalog 4, sorted p = (0, 0, 0.5, 0.5):
        // (1/3) * [(2*3-5) * 0.5 + (2*4-5) * 0.5] = 2/3
        let b = batch(&[("u1", &["a", "b"])], 4);
        assert_abs_diff_eq!(gini_index(&b).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn gini_needs_catalog_of_two() {
        let b = batch(&[("u1", &["a"])], 1);
        assert!(gini_index(&b).is_err());
    }

    #[test]
    fn entropy_uniform_is_log_m() {
        let b = batch(&[("u1", &["a", "b"]), ("u2", &["c", "d"])], 10);
        assert_abs_diff_eq!(entropy(&b), 4.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn entropy_single_item_is_zero() {
        let b = batch(&[("u1", &["a"]), ("u2", &["a"])], 10);
        assert_eq!(entropy(&b), 0.0);
    }

    #[test]
    fn entropy_two_equal_items() {
        let b = batch(&[("u1", &["a", "b"])], 10);
        assert_abs_diff_eq!(entropy(&b), 2.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn entropy_in_bits() {
        let b = batch(&[("u1", &["a", "b"])], 10);
        assert_abs_diff_eq!(entropy_in_base(&b, 2.0), 1.0, epsilon = 1e-12);
    }

    fn ratings(counts: &[(&str, usize)]) -> RatingsTable {
        let mut records = Vec::new();
        for (item, count) in counts {
            for u in 0..*count {
                records.push(RatingRecord {
                    user: format!("u{item}{u}"),
                    item: item.to_string(),
                    rating: 1.0,
                });
            }
        }
        RatingsTable::from_records(records)
    }

    #[test]
    fn long_tail_split_basic() {
        let train = ratings(&[("a", 50), ("b", 30), ("c", 10), ("d", 5), ("e", 5)]);
        let (head, tail) = long_tail_split(&train, 50.0);
        assert_eq!(head, ["a".to_string()].into());
        assert_eq!(
            tail,
            ["b", "c", "d", "e"].map(String::from).into()
        );
    }

    #[test]
    fn long_tail_split_k_near_hundred_empties_the_tail() {
        let train = ratings(&[("a", 3), ("b", 2)]);
        let (head, tail) = long_tail_split(&train, 100.0);
        assert_eq!(head.len(), 2);
        assert!(tail.is_empty());
    }

    #[test]
    fn long_tail_split_equal_counts_breaks_ties_by_item_id() {
        let train = ratings(&[("c", 2), ("a", 2), ("d", 2), ("b", 2)]);
        let (head, tail) = long_tail_split(&train, 50.0);
        assert_eq!(head, ["a", "b"].map(String::from).into());
        assert_eq!(tail, ["c", "d"].map(String::from).into());
    }

    #[test]
    fn long_tail_coverage_examples() {
        let tail: BTreeSet<String> = ["x", "y", "z", "p", "q", "r"].map(String::from).into();
        let none = batch(&[("u1", &["a", "b"])], 20);
        assert_eq!(long_tail_coverage(&none, &tail), 0.0);

        let half = batch(&[("u1", &["x", "y"]), ("u2", &["z", "a"])], 20);
        assert_eq!(long_tail_coverage(&half, &tail), 0.5);

        let all = batch(
            &[("u1", &["x", "y", "z"]), ("u2", &["p", "q", "r"])],
            20,
        );
        assert_eq!(long_tail_coverage(&all, &tail), 1.0);
    }

    #[test]
    fn long_tail_coverage_empty_tail_is_zero() {
        let b = batch(&[("u1", &["a"])], 5);
        assert_eq!(long_tail_coverage(&b, &BTreeSet::new()), 0.0);
    }

    #[test]
    fn metrics_are_permutation_invariant() {
        let b1 = batch(&[("u1", &["a", "b"]), ("u2", &["c", "a"])], 6);
        let b2 = batch(&[("u2", &["a", "c"]), ("u1", &["b", "a"])], 6);
        assert_eq!(gini_index(&b1).unwrap(), gini_index(&b2).unwrap());
        assert_eq!(entropy(&b1), entropy(&b2));
        assert_eq!(coverage_at_n(&b1), coverage_at_n(&b2));
    }

    #[test]
    fn duplicating_every_user_changes_nothing() {
        let lists: &[(&str, &[&str])] = &[("u1", &["a", "b"]), ("u2", &["c", "a"])];
        let doubled: &[(&str, &[&str])] = &[
            ("u1", &["a", "b"]),
            ("u2", &["c", "a"]),
            ("u1x", &["a", "b"]),
            ("u2x", &["c", "a"]),
        ];
        let b1 = batch(lists, 6);
        let b2 = batch(doubled, 6);
        let p = profiles(&[
            ("u1", &["a"]),
            ("u2", &["c"]),
            ("u1x", &["a"]),
            ("u2x", &["c"]),
        ]);
        let tail: BTreeSet<String> = ["b", "c"].map(String::from).into();
        assert_abs_diff_eq!(
            precision_at_n(&b1, &p),
            precision_at_n(&b2, &p),
            epsilon = 1e-15
        );
        assert_eq!(coverage_at_n(&b1), coverage_at_n(&b2));
        assert_abs_diff_eq!(
            gini_index(&b1).unwrap(),
            gini_index(&b2).unwrap(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(entropy(&b1), entropy(&b2), epsilon = 1e-15);
        assert_eq!(
            long_tail_coverage(&b1, &tail),
            long_tail_coverage(&b2, &tail)
        );
    }

    #[test]
    fn coverage_dominates_single_list_share() {
        let b = batch(&[("u1", &["a", "b", "c"]), ("u2", &["a", "b", "d"])], 12);
        let single = 3.0 / 12.0;
        assert!(coverage_at_n(&b) >= single);
    }

    #[test]
    fn entropy_bounded_by_log_catalog_with_equality_iff_uniform() {
        let uniform = batch(&[("u1", &["a", "b"]), ("u2", &["c", "d"])], 4);
        assert_abs_diff_eq!(entropy(&uniform), 4.0f64.ln(), epsilon = 1e-12);

        let skewed = batch(&[("u1", &["a", "b"]), ("u2", &["a", "c"])], 4);
        assert!(entropy(&skewed) < 4.0f64.ln() - 1e-9);
    }

    #[test]
    fn entropy_maximized_by_uniform_at_fixed_coverage() {
        // both batches cover {a, b, c, d}; the uniform one has higher entropy
        let uniform = batch(&[("u1", &["a", "b"]), ("u2", &["c", "d"])], 10);
        let perturbed = batch(
            &[("u1", &["a", "b"]), ("u2", &["c", "d"]), ("u3", &["a", "b"])],
            10,
        );
        assert_abs_diff_eq!(entropy(&uniform), 4.0f64.ln(), epsilon = 1e-12);
        assert!(entropy(&perturbed) < entropy(&uniform));
    }

    #[test]
    fn batch_validation_rejects_bad_lists() {
        assert!(RecommendationBatch::new(vec![], 5, 2).is_err());
        assert!(RecommendationBatch::new(
            vec![("u1".to_string(), vec!["a".to_string()])],
            0,
            1
        )
        .is_err());
        assert!(RecommendationBatch::new(
            vec![("u1".to_string(), vec!["a".to_string(), "a".to_string()])],
            5,
            2
        )
        .is_err());
        assert!(RecommendationBatch::new(
            vec![("u1".to_string(), vec!["a".to_string()])],
            5,
            2
        )
        .is_err());
    }
}
