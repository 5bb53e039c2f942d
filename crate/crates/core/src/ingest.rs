//! File formats, a synthetic data generator, and a popularity recommender.
//!
//! Two tab-separated UTF-8 formats, with `#`-prefixed comment lines skipped:
//!
//! * ratings: `user<TAB>item<TAB>rating`
//! * recommendation lists: `user<TAB>item<TAB>rank<TAB>score`
//!
//! Metrics are emitted as CSV with a fixed header. Both row formats
//! round-trip bit-exactly (floats are written with their shortest
//! re-parseable representation).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::derive_seed;
use crate::error::{Error, Result};

/// One `(user, item, rating)` record.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingRecord {
    pub user: String,
    pub item: String,
    pub rating: f64,
}

/// Rating records with duplicate `(user, item)` pairs collapsed.
///
/// The last occurrence of a duplicate pair wins; the number of collapsed
/// records is kept so callers can surface a warning. Iteration order is the
/// input order of each pair's first occurrence.
#[derive(Debug, Clone, Default)]
pub struct RatingsTable {
    records: Vec<RatingRecord>,
    duplicates_collapsed: usize,
}

impl PartialEq for RatingsTable {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

impl RatingsTable {
    /// Builds a table from raw records, collapsing duplicate `(user, item)`
    /// pairs (last rating wins, position of the first occurrence kept).
    pub fn from_records(raw: Vec<RatingRecord>) -> Self {
        let mut records: Vec<RatingRecord> = Vec::with_capacity(raw.len());
        let mut seen: HashMap<(String, String), usize> = HashMap::new();
        let mut duplicates_collapsed = 0;
        for rec in raw {
            let key = (rec.user.clone(), rec.item.clone());
            match seen.get(&key) {
                Some(&idx) => {
                    records[idx].rating = rec.rating;
                    duplicates_collapsed += 1;
                }
                None => {
                    seen.insert(key, records.len());
                    records.push(rec);
                }
            }
        }
        RatingsTable {
            records,
            duplicates_collapsed,
        }
    }

    pub fn records(&self) -> &[RatingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of duplicate pairs collapsed while building the table.
    pub fn duplicates_collapsed(&self) -> usize {
        self.duplicates_collapsed
    }

    /// Per-item rating counts, keyed by item id.
    pub fn item_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for rec in &self.records {
            *counts.entry(rec.item.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// Distinct item ids.
    pub fn items(&self) -> BTreeSet<String> {
        self.records.iter().map(|r| r.item.clone()).collect()
    }

    /// Users in order of first appearance.
    pub fn users_in_order(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut users = Vec::new();
        for rec in &self.records {
            if seen.insert(rec.user.as_str()) {
                users.push(rec.user.clone());
            }
        }
        users
    }

    /// Items rated by `user`.
    pub fn items_of(&self, user: &str) -> HashSet<&str> {
        self.records
            .iter()
            .filter(|r| r.user == user)
            .map(|r| r.item.as_str())
            .collect()
    }

    /// Deterministic per-user holdout split: roughly `fraction` of each
    /// user's records go to the second (test) table, at least one record per
    /// user stays in the first (train) table. Record order is preserved.
    pub fn split_holdout(&self, fraction: f64, seed: u64) -> (RatingsTable, RatingsTable) {
        let mut per_user: Vec<(String, Vec<usize>)> = Vec::new();
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, rec) in self.records.iter().enumerate() {
            match index.get(rec.user.as_str()) {
                Some(&slot) => per_user[slot].1.push(i),
                None => {
                    index.insert(rec.user.as_str(), per_user.len());
                    per_user.push((rec.user.clone(), vec![i]));
                }
            }
        }

        let mut held = vec![false; self.records.len()];
        for (user_idx, (_, indices)) in per_user.iter().enumerate() {
            let len = indices.len();
            let k = ((len as f64 * fraction).round() as usize).min(len.saturating_sub(1));
            if k == 0 {
                continue;
            }
            let mut shuffled = indices.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, user_idx as u64));
            shuffled.shuffle(&mut rng);
            for &i in shuffled.iter().take(k) {
                held[i] = true;
            }
        }

        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, rec) in self.records.iter().enumerate() {
            if held[i] {
                test.push(rec.clone());
            } else {
                train.push(rec.clone());
            }
        }
        (
            RatingsTable::from_records(train),
            RatingsTable::from_records(test),
        )
    }
}

/// One entry of a user's recommendation list.
#[derive(Debug, Clone, PartialEq)]
pub struct RecEntry {
    pub item: String,
    /// 1-based position in the list.
    pub rank: u32,
    pub score: f64,
}

/// A single user's ordered list, ranks `1..=t`.
#[derive(Debug, Clone, PartialEq)]
pub struct UserRecs {
    pub user: String,
    pub entries: Vec<RecEntry>,
}

impl UserRecs {
    pub fn items(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.item.as_str())
    }
}

/// Per-user ranked recommendation lists, all of length `t`.
///
/// Ranks within a user are exactly `1..=t`. Scores are expected to be
/// non-increasing with rank; violations are tolerated (rank wins) but
/// counted so callers can warn.
#[derive(Debug, Clone)]
pub struct RecommendationTable {
    users: Vec<UserRecs>,
    by_user: HashMap<String, usize>,
    t: usize,
    score_order_violations: usize,
}

impl PartialEq for RecommendationTable {
    fn eq(&self, other: &Self) -> bool {
        self.t == other.t && self.users == other.users
    }
}

impl RecommendationTable {
    /// Validates and normalizes per-user lists: each must hold exactly `t`
    /// entries with ranks `1..=t` (no gaps, no duplicates). Entries are
    /// sorted by rank; scores must be finite.
    pub fn new(users: Vec<UserRecs>, t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidInput("list length t must be positive".into()));
        }
        if users.is_empty() {
            return Err(Error::InvalidInput("recommendation table is empty".into()));
        }
        let mut by_user = HashMap::new();
        let mut score_order_violations = 0;
        let mut normalized = Vec::with_capacity(users.len());
        for (idx, mut user) in users.into_iter().enumerate() {
            if by_user.insert(user.user.clone(), idx).is_some() {
                return Err(Error::Structure(format!(
                    "user {:?} appears more than once",
                    user.user
                )));
            }
            if user.entries.len() != t {
                return Err(Error::Structure(format!(
                    "user {:?} has {} entries, expected t={}",
                    user.user,
                    user.entries.len(),
                    t
                )));
            }
            user.entries.sort_by_key(|e| e.rank);
            for (i, entry) in user.entries.iter().enumerate() {
                if !entry.score.is_finite() {
                    return Err(Error::Structure(format!(
                        "user {:?} rank {} has non-finite score",
                        user.user, entry.rank
                    )));
                }
                let expected = (i + 1) as u32;
                if entry.rank != expected {
                    if i > 0 && user.entries[i - 1].rank == entry.rank {
                        return Err(Error::Structure(format!(
                            "user {:?} has duplicate rank {}",
                            user.user, entry.rank
                        )));
                    }
                    return Err(Error::Structure(format!(
                        "user {:?} has a rank gap: expected rank {}, found {}",
                        user.user, expected, entry.rank
                    )));
                }
                if i > 0 && user.entries[i - 1].score < entry.score {
                    score_order_violations += 1;
                }
            }
            normalized.push(user);
        }
        Ok(RecommendationTable {
            users: normalized,
            by_user,
            t,
            score_order_violations,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn users(&self) -> &[UserRecs] {
        &self.users
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn get(&self, user: &str) -> Option<&UserRecs> {
        self.by_user.get(user).map(|&i| &self.users[i])
    }

    /// Number of entries whose score increased with rank (rank wins).
    pub fn score_order_violations(&self) -> usize {
        self.score_order_violations
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Lines with 1-based numbers, comments and blank lines skipped.
fn data_lines(content: &str) -> impl Iterator<Item = (usize, &str)> {
    content
        .lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line.trim_end_matches('\r')))
        .filter(|(_, line)| !line.is_empty() && !line.starts_with('#'))
}

/// Parses a ratings file (`user<TAB>item<TAB>rating`).
pub fn parse_ratings(path: &Path) -> Result<RatingsTable> {
    let content = read_to_string(path)?;
    let mut raw = Vec::new();
    for (line_no, line) in data_lines(&content) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let rating: f64 = fields[2].parse().map_err(|_| {
            Error::parse(path, line_no, format!("invalid rating {:?}", fields[2]))
        })?;
        if !rating.is_finite() {
            return Err(Error::parse(path, line_no, "rating must be finite"));
        }
        raw.push(RatingRecord {
            user: fields[0].to_string(),
            item: fields[1].to_string(),
            rating,
        });
    }
    if raw.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: no rating records",
            path.display()
        )));
    }
    Ok(RatingsTable::from_records(raw))
}

/// Writes ratings in the exact `parse_ratings` format.
pub fn write_ratings(table: &RatingsTable, path: &Path) -> Result<()> {
    let mut out = String::new();
    for rec in table.records() {
        writeln!(out, "{}\t{}\t{}", rec.user, rec.item, rec.rating).expect("string write");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parses a recommendation-list file (`user<TAB>item<TAB>rank<TAB>score`)
/// and validates every user's list to length `t`.
pub fn parse_recs(path: &Path, t: usize) -> Result<RecommendationTable> {
    let content = read_to_string(path)?;
    let mut users: Vec<UserRecs> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (line_no, line) in data_lines(&content) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let rank: u32 = fields[2]
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("invalid rank {:?}", fields[2])))?;
        let score: f64 = fields[3]
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("invalid score {:?}", fields[3])))?;
        let entry = RecEntry {
            item: fields[1].to_string(),
            rank,
            score,
        };
        match index.get(fields[0]) {
            Some(&slot) => users[slot].entries.push(entry),
            None => {
                index.insert(fields[0].to_string(), users.len());
                users.push(UserRecs {
                    user: fields[0].to_string(),
                    entries: vec![entry],
                });
            }
        }
    }
    if users.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: no recommendation records",
            path.display()
        )));
    }
    RecommendationTable::new(users, t)
}

/// Writes recommendation lists in the exact `parse_recs` format.
pub fn write_recs(table: &RecommendationTable, path: &Path) -> Result<()> {
    let mut out = String::new();
    for user in table.users() {
        for entry in &user.entries {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                user.user, entry.item, entry.rank, entry.score
            )
            .expect("string write");
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn id_width(count: usize) -> usize {
    count.saturating_sub(1).to_string().len()
}

/// Canonical synthetic item name (`i07`, zero-padded to the catalog width).
pub fn synthetic_item_name(index: usize, num_items: usize) -> String {
    format!("i{:0width$}", index, width = id_width(num_items))
}

/// Canonical synthetic user name.
pub fn synthetic_user_name(index: usize, num_users: usize) -> String {
    format!("u{:0width$}", index, width = id_width(num_users))
}

/// Per-item sampling weights proportional to `(index + 1)^-zipf_exponent`.
fn zipf_weights(num_items: usize, zipf_exponent: f64) -> Vec<f64> {
    (1..=num_items)
        .map(|j| (j as f64).powf(-zipf_exponent))
        .collect()
}

/// Draws `count` distinct item indices, weighted by `weights`, returned in
/// descending order of their sampled keys together with those keys.
///
/// Weighted sampling without replacement via exponential keys
/// (`ln(u) / w`, Efraimidis–Spirakis in log space): popular items both
/// appear more often and land nearer the top.
fn weighted_sample_ranked(weights: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, f64)> {
    let mut keyed: Vec<(usize, f64)> = weights
        .iter()
        .enumerate()
        .map(|(idx, &w)| {
            // 1 - random() lies in (0, 1], so the log is finite.
            let u = 1.0 - rng.random::<f64>();
            (idx, u.ln() / w)
        })
        .collect();
    keyed.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    keyed.truncate(count);
    keyed
}

/// Generates a deterministic synthetic recommendation table: each user's
/// top-`t` list is a weighted sample without replacement with item
/// probabilities proportional to `(item index)^-zipf_exponent`, ranked by
/// descending sampled score.
pub fn generate_synthetic(
    num_users: usize,
    num_items: usize,
    t: usize,
    zipf_exponent: f64,
    seed: u64,
) -> Result<RecommendationTable> {
    if num_users == 0 || num_items == 0 {
        return Err(Error::InvalidInput(
            "num_users and num_items must be positive".into(),
        ));
    }
    if t == 0 || t > num_items {
        return Err(Error::InvalidInput(format!(
            "t={} must be in 1..={}",
            t, num_items
        )));
    }
    let weights = zipf_weights(num_items, zipf_exponent);
    let mut users = Vec::with_capacity(num_users);
    for u in 0..num_users {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u as u64));
        let sampled = weighted_sample_ranked(&weights, t, &mut rng);
        let entries = sampled
            .into_iter()
            .enumerate()
            .map(|(pos, (item_idx, key))| RecEntry {
                item: synthetic_item_name(item_idx, num_items),
                rank: (pos + 1) as u32,
                score: key,
            })
            .collect();
        users.push(UserRecs {
            user: synthetic_user_name(u, num_users),
            entries,
        });
    }
    RecommendationTable::new(users, t)
}

/// Generates a deterministic synthetic ratings table with the same user/item
/// naming and popularity skew as [`generate_synthetic`]: each user rates
/// `ratings_per_user` distinct items drawn from the Zipf-weighted catalog.
pub fn generate_synthetic_ratings(
    num_users: usize,
    num_items: usize,
    ratings_per_user: usize,
    zipf_exponent: f64,
    seed: u64,
) -> Result<RatingsTable> {
    if num_users == 0 || num_items == 0 {
        return Err(Error::InvalidInput(
            "num_users and num_items must be positive".into(),
        ));
    }
    if ratings_per_user == 0 || ratings_per_user > num_items {
        return Err(Error::InvalidInput(format!(
            "ratings_per_user={} must be in 1..={}",
            ratings_per_user, num_items
        )));
    }
    let weights = zipf_weights(num_items, zipf_exponent);
    let mut raw = Vec::with_capacity(num_users * ratings_per_user);
    for u in 0..num_users {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u as u64));
        let sampled = weighted_sample_ranked(&weights, ratings_per_user, &mut rng);
        let user = synthetic_user_name(u, num_users);
        for (item_idx, _) in sampled {
            let rating = rng.random_range(1..=5) as f64;
            raw.push(RatingRecord {
                user: user.clone(),
                item: synthetic_item_name(item_idx, num_items),
                rating,
            });
        }
    }
    Ok(RatingsTable::from_records(raw))
}

/// Recommends to each listed user the `t` most-rated items the user has not
/// rated (ties by item id); scores are the rating counts.
pub fn mostpop_recommend(
    train: &RatingsTable,
    users: &[String],
    t: usize,
) -> Result<RecommendationTable> {
    if train.is_empty() {
        return Err(Error::InvalidInput("training ratings are empty".into()));
    }
    if users.is_empty() {
        return Err(Error::InvalidInput("no users to recommend for".into()));
    }
    let counts = train.item_counts();
    let mut ranking: Vec<(&String, usize)> = counts.iter().map(|(i, &c)| (i, c)).collect();
    ranking.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

    let mut out = Vec::with_capacity(users.len());
    for user in users {
        let seen = train.items_of(user);
        let picked: Vec<(&String, usize)> = ranking
            .iter()
            .filter(|(item, _)| !seen.contains(item.as_str()))
            .take(t)
            .cloned()
            .collect();
        if picked.len() < t {
            return Err(Error::InvalidInput(format!(
                "user {:?}: only {} unseen items in catalog, need t={}",
                user,
                picked.len(),
                t
            )));
        }
        let entries = picked
            .into_iter()
            .enumerate()
            .map(|(pos, (item, count))| RecEntry {
                item: item.clone(),
                rank: (pos + 1) as u32,
                score: count as f64,
            })
            .collect();
        out.push(UserRecs {
            user: user.clone(),
            entries,
        });
    }
    RecommendationTable::new(out, t)
}

/// CSV header for metric rows.
pub const METRICS_HEADER: &str =
    "method,alpha,t,n,precision,coverage,gini,entropy,longtail_coverage";

/// One evaluated configuration, serialized as a single CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    /// `None` for methods without a trade-off coefficient.
    pub alpha: Option<f64>,
    pub t: usize,
    pub n: usize,
    pub precision: f64,
    pub coverage: f64,
    pub gini: f64,
    pub entropy: f64,
    pub longtail_coverage: f64,
}

impl MetricsRow {
    fn to_csv(&self) -> String {
        let alpha = match self.alpha {
            Some(a) => a.to_string(),
            None => String::new(),
        };
        format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.method,
            alpha,
            self.t,
            self.n,
            self.precision,
            self.coverage,
            self.gini,
            self.entropy,
            self.longtail_coverage
        )
    }
}

/// Writes a fresh metrics CSV (header plus one row per entry).
pub fn write_metrics(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Appends rows to a metrics CSV, writing the header only when the file does
/// not yet exist (or is empty).
pub fn append_metrics(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let existing = match fs::read_to_string(path) {
        Ok(content) => content,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = existing;
    if out.is_empty() {
        out.push_str(METRICS_HEADER);
        out.push('\n');
    }
    for row in rows {
        out.push_str(&row.to_csv());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
