//! Command-line harness around the re-ranking library: `rerank` rewrites
//! top-`t` lists as top-`n` lists with one method, `evaluate` scores a
//! method (optionally across an alpha grid) into a metrics CSV, and `demo`
//! generates synthetic data and compares every method end to end.
//!
//! Exit codes: 0 success, 1 usage error, 2 input/output error, 3 internal
//! invariant violation.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use fairmatch_core::derive_seed;
use fairmatch_core::fairmatch::FairMatchConfig;
use fairmatch_core::ingest::{
    append_metrics, generate_synthetic, generate_synthetic_ratings, parse_ratings, parse_recs,
    write_metrics, write_ratings, write_recs, MetricsRow, RatingsTable, RecEntry,
    RecommendationTable, UserRecs,
};
use fairmatch_core::metrics::{evaluate_batch, long_tail_split, RecommendationBatch};
use fairmatch_core::rerankers::{Reranker, RerankedLists};

/// Seed streams for the demo's independent random inputs.
const RATINGS_STREAM: u64 = 0x5241_5453;
const SPLIT_STREAM: u64 = 0x5350_4c54;

#[derive(Debug, Parser)]
#[command(
    name = "fairmatch",
    version,
    about = "Diversity re-ranking of recommendation lists via iterative maximum flow"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Re-rank top-t lists down to top-n with one method
    Rerank(RerankArgs),
    /// Re-rank in memory and append one metrics row per (method, alpha)
    Evaluate(EvaluateArgs),
    /// Generate synthetic data and compare all methods
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    None,
    Random,
    Reverse,
    Fairmatch,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Random => "random",
            Method::Reverse => "reverse",
            Method::Fairmatch => "fairmatch",
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct RerankArgs {
    /// Input lists: user<TAB>item<TAB>rank<TAB>score
    #[arg(long)]
    pub recs: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Input list length
    #[arg(long)]
    pub t: usize,
    /// Output list length (must be below t)
    #[arg(long)]
    pub n: usize,
    /// Trade-off coefficient; required by fairmatch, single value only
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Fixed-point scale for fractional edge weights
    #[arg(long, default_value_t = 100)]
    pub weight_scale: u64,
    #[arg(long)]
    pub out_recs: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    /// Input lists: user<TAB>item<TAB>rank<TAB>score
    #[arg(long)]
    pub recs: PathBuf,
    /// Training ratings, used for the short-head/long-tail split and catalog
    #[arg(long)]
    pub ratings_train: PathBuf,
    /// Held-out ratings, used for precision
    #[arg(long)]
    pub ratings_test: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub t: usize,
    #[arg(long)]
    pub n: usize,
    /// Single value or comma list (fairmatch only), e.g. 0,0.25,0.5,0.75,1
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Short-head cutoff: top items cumulatively holding this many percent
    /// of the training ratings
    #[arg(long, default_value_t = 20.0)]
    pub k_longtail: f64,
    #[arg(long, default_value_t = 100)]
    pub weight_scale: u64,
    /// Metrics CSV to append to (header is written once)
    #[arg(long)]
    pub out_metrics: PathBuf,
    /// Parallel sweep cells (1 = sequential)
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, clap::Args)]
pub struct DemoArgs {
    /// Directory for generated inputs, re-ranked lists, and metrics
    #[arg(long, default_value = "demo_out")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub users: usize,
    #[arg(long, default_value_t = 100)]
    pub items: usize,
    #[arg(long, default_value_t = 1.2)]
    pub zipf_exponent: f64,
    #[arg(long, default_value_t = 20)]
    pub t: usize,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Alpha grid for the fairmatch rows
    #[arg(long, default_value = "0,0.25,0.5,0.75,1")]
    pub alpha: String,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 20.0)]
    pub k_longtail: f64,
    #[arg(long, default_value_t = 100)]
    pub weight_scale: u64,
    /// Parallel sweep cells (1 = sequential)
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(fairmatch_core::Error),
    Internal(fairmatch_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Data(e) | CliError::Internal(e) => write!(f, "{e}"),
        }
    }
}

impl From<fairmatch_core::Error> for CliError {
    fn from(e: fairmatch_core::Error) -> Self {
        match e {
            fairmatch_core::Error::Internal(_) => CliError::Internal(e),
            _ => CliError::Data(e),
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Rerank(args) => cmd_rerank(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Demo(args) => cmd_demo(&args),
    }
}

fn parse_alpha_list(raw: &str) -> Result<Vec<f64>, CliError> {
    let mut alphas = Vec::new();
    for part in raw.split(',') {
        let trimmed = part.trim();
        let value: f64 = trimmed
            .parse()
            .map_err(|_| CliError::Usage(format!("invalid alpha value {trimmed:?}")))?;
        if !(0.0..=1.0).contains(&value) {
            return Err(CliError::Usage(format!("alpha {value} outside [0, 1]")));
        }
        alphas.push(value);
    }
    if alphas.is_empty() {
        return Err(CliError::Usage("empty alpha list".into()));
    }
    Ok(alphas)
}

fn check_sizes(t: usize, n: usize) -> Result<(), CliError> {
    if n == 0 || n >= t {
        return Err(CliError::Usage(format!("need 0 < n < t, got n={n} t={t}")));
    }
    Ok(())
}

fn check_k_longtail(k: f64) -> Result<(), CliError> {
    if !(k > 0.0 && k <= 100.0) {
        return Err(CliError::Usage(format!(
            "k-longtail {k} outside (0, 100]"
        )));
    }
    Ok(())
}

fn warn_recs_table(path: &Path, table: &RecommendationTable) {
    if table.score_order_violations() > 0 {
        eprintln!(
            "warning: {}: {} entries have scores increasing with rank (rank wins)",
            path.display(),
            table.score_order_violations()
        );
    }
}

fn warn_ratings_table(path: &Path, table: &RatingsTable) {
    if table.duplicates_collapsed() > 0 {
        eprintln!(
            "warning: {}: {} duplicate (user, item) pairs collapsed (last wins)",
            path.display(),
            table.duplicates_collapsed()
        );
    }
}

fn build_reranker(
    method: Method,
    alpha: Option<f64>,
    seed: u64,
    t: usize,
    n: usize,
    weight_scale: u64,
) -> Result<Reranker, CliError> {
    match method {
        Method::None => Ok(Reranker::None),
        Method::Random => Ok(Reranker::Random { seed }),
        Method::Reverse => Ok(Reranker::Reverse),
        Method::Fairmatch => {
            let alpha =
                alpha.ok_or_else(|| CliError::Usage("fairmatch requires --alpha".into()))?;
            let mut cfg = FairMatchConfig::new(alpha, t, n);
            cfg.weight_scale = weight_scale;
            Ok(Reranker::FairMatch(cfg))
        }
    }
}

/// Turns re-ranked item lists back into a table: positional ranks, scores
/// carried over from the base table.
fn lists_to_table(
    base: &RecommendationTable,
    lists: &[(String, Vec<String>)],
    n: usize,
) -> Result<RecommendationTable, CliError> {
    let users = lists
        .iter()
        .map(|(user, items)| {
            let base_user = base.get(user).ok_or_else(|| {
                fairmatch_core::Error::Internal(format!("re-ranked unknown user {user:?}"))
            })?;
            let entries = items
                .iter()
                .enumerate()
                .map(|(pos, item)| {
                    let score = base_user
                        .entries
                        .iter()
                        .find(|e| &e.item == item)
                        .map(|e| e.score)
                        .ok_or_else(|| {
                            fairmatch_core::Error::Internal(format!(
                                "re-ranked item {item:?} missing from the base list of {user:?}"
                            ))
                        })?;
                    Ok(RecEntry {
                        item: item.clone(),
                        rank: (pos + 1) as u32,
                        score,
                    })
                })
                .collect::<Result<Vec<_>, fairmatch_core::Error>>()?;
            Ok(UserRecs {
                user: user.clone(),
                entries,
            })
        })
        .collect::<Result<Vec<_>, fairmatch_core::Error>>()?;
    Ok(RecommendationTable::new(users, n)?)
}

pub fn cmd_rerank(args: &RerankArgs) -> Result<(), CliError> {
    check_sizes(args.t, args.n)?;
    let alpha = match (&args.alpha, args.method) {
        (Some(raw), Method::Fairmatch) => {
            let alphas = parse_alpha_list(raw)?;
            if alphas.len() != 1 {
                return Err(CliError::Usage(
                    "rerank takes a single alpha; use evaluate for sweeps".into(),
                ));
            }
            Some(alphas[0])
        }
        (Some(_), _) => None, // ignored by the baselines
        (None, _) => None,
    };
    let reranker = build_reranker(args.method, alpha, args.seed, args.t, args.n, args.weight_scale)?;

    let recs = parse_recs(&args.recs, args.t)?;
    warn_recs_table(&args.recs, &recs);
    let out = reranker.rerank(&recs, args.n)?;
    if out.truncated {
        eprintln!("warning: fairmatch stopped at its iteration cap; results are partial");
    }
    let table = lists_to_table(&recs, &out.lists, args.n)?;
    write_recs(&table, &args.out_recs)?;
    Ok(())
}

/// One sweep cell: a method plus (for fairmatch) a specific alpha.
#[derive(Debug, Clone, Copy)]
struct Cell {
    method: Method,
    alpha: Option<f64>,
}

struct CellContext<'a> {
    recs: &'a RecommendationTable,
    t: usize,
    n: usize,
    seed: u64,
    weight_scale: u64,
    catalog_size: usize,
    profiles: &'a HashMap<String, HashSet<String>>,
    long_tail: &'a BTreeSet<String>,
    k_percent: f64,
}

fn run_cell(cell: Cell, ctx: &CellContext<'_>) -> Result<(MetricsRow, RerankedLists), CliError> {
    let reranker = build_reranker(
        cell.method,
        cell.alpha,
        ctx.seed,
        ctx.t,
        ctx.n,
        ctx.weight_scale,
    )?;
    let out = reranker.rerank(ctx.recs, ctx.n)?;
    let batch = RecommendationBatch::new(out.lists.clone(), ctx.catalog_size, ctx.n)?;
    let report = evaluate_batch(&batch, ctx.profiles, ctx.long_tail, ctx.k_percent)?;
    let row = MetricsRow {
        method: cell.method.name().to_string(),
        alpha: cell.alpha,
        t: ctx.t,
        n: ctx.n,
        precision: report.precision,
        coverage: report.coverage,
        gini: report.gini,
        entropy: report.entropy,
        longtail_coverage: report.longtail_coverage,
    };
    Ok((row, out))
}

fn run_cells(
    cells: &[Cell],
    ctx: &CellContext<'_>,
    jobs: usize,
) -> Result<Vec<(MetricsRow, RerankedLists)>, CliError> {
    if jobs <= 1 {
        cells.iter().map(|&cell| run_cell(cell, ctx)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot build a {jobs}-thread pool: {e}")))?;
        pool.install(|| {
            cells
                .par_iter()
                .map(|&cell| run_cell(cell, ctx))
                .collect::<Result<Vec<_>, CliError>>()
        })
    }
}

fn cells_for(method: Method, alphas: &Option<Vec<f64>>) -> Result<Vec<Cell>, CliError> {
    match method {
        Method::Fairmatch => {
            let alphas = alphas
                .as_ref()
                .ok_or_else(|| CliError::Usage("fairmatch requires --alpha".into()))?;
            Ok(alphas
                .iter()
                .map(|&alpha| Cell {
                    method,
                    alpha: Some(alpha),
                })
                .collect())
        }
        _ => Ok(vec![Cell {
            method,
            alpha: None,
        }]),
    }
}

fn test_profiles(table: &RatingsTable) -> HashMap<String, HashSet<String>> {
    let mut profiles: HashMap<String, HashSet<String>> = HashMap::new();
    for rec in table.records() {
        profiles
            .entry(rec.user.clone())
            .or_default()
            .insert(rec.item.clone());
    }
    profiles
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    check_sizes(args.t, args.n)?;
    check_k_longtail(args.k_longtail)?;
    let alphas = args.alpha.as_deref().map(parse_alpha_list).transpose()?;
    let cells = cells_for(args.method, &alphas)?;

    let recs = parse_recs(&args.recs, args.t)?;
    warn_recs_table(&args.recs, &recs);
    let train = parse_ratings(&args.ratings_train)?;
    warn_ratings_table(&args.ratings_train, &train);
    let test = parse_ratings(&args.ratings_test)?;
    warn_ratings_table(&args.ratings_test, &test);

    let profiles = test_profiles(&test);
    let (_, long_tail) = long_tail_split(&train, args.k_longtail);
    if long_tail.is_empty() {
        eprintln!("warning: the long tail is empty at k-longtail {}", args.k_longtail);
    }

    // catalog: everything the training data or the input lists know about
    let mut catalog = train.items();
    for user in recs.users() {
        for entry in &user.entries {
            catalog.insert(entry.item.clone());
        }
    }

    let ctx = CellContext {
        recs: &recs,
        t: args.t,
        n: args.n,
        seed: args.seed,
        weight_scale: args.weight_scale,
        catalog_size: catalog.len(),
        profiles: &profiles,
        long_tail: &long_tail,
        k_percent: args.k_longtail,
    };
    let results = run_cells(&cells, &ctx, args.jobs)?;
    for (_, out) in &results {
        if out.truncated {
            eprintln!("warning: fairmatch stopped at its iteration cap; results are partial");
        }
    }
    let rows: Vec<MetricsRow> = results.into_iter().map(|(row, _)| row).collect();
    append_metrics(&rows, &args.out_metrics)?;
    Ok(())
}

fn alpha_file_tag(alpha: f64) -> String {
    // 0.25 -> "0.25" in file names; keep it short and unambiguous
    format!("{alpha}")
}

pub fn cmd_demo(args: &DemoArgs) -> Result<(), CliError> {
    check_sizes(args.t, args.n)?;
    check_k_longtail(args.k_longtail)?;
    let alphas = parse_alpha_list(&args.alpha)?;

    fs::create_dir_all(&args.out_dir)
        .map_err(|e| fairmatch_core::Error::Io {
            path: args.out_dir.display().to_string(),
            source: e,
        })?;

    let recs = generate_synthetic(args.users, args.items, args.t, args.zipf_exponent, args.seed)?;
    let ratings_per_user = 30.min(args.items);
    let ratings = generate_synthetic_ratings(
        args.users,
        args.items,
        ratings_per_user,
        args.zipf_exponent,
        derive_seed(args.seed, RATINGS_STREAM),
    )?;
    let (train, test) = ratings.split_holdout(0.2, derive_seed(args.seed, SPLIT_STREAM));

    write_recs(&recs, &args.out_dir.join("base_recs.tsv"))?;
    write_ratings(&train, &args.out_dir.join("train_ratings.tsv"))?;
    write_ratings(&test, &args.out_dir.join("test_ratings.tsv"))?;

    let profiles = test_profiles(&test);
    let (_, long_tail) = long_tail_split(&train, args.k_longtail);
    if long_tail.is_empty() {
        eprintln!("warning: the long tail is empty at k-longtail {}", args.k_longtail);
    }

    let mut cells = vec![
        Cell { method: Method::None, alpha: None },
        Cell { method: Method::Random, alpha: None },
        Cell { method: Method::Reverse, alpha: None },
    ];
    for &alpha in &alphas {
        cells.push(Cell {
            method: Method::Fairmatch,
            alpha: Some(alpha),
        });
    }

    let ctx = CellContext {
        recs: &recs,
        t: args.t,
        n: args.n,
        seed: args.seed,
        weight_scale: args.weight_scale,
        catalog_size: args.items,
        profiles: &profiles,
        long_tail: &long_tail,
        k_percent: args.k_longtail,
    };
    let results = run_cells(&cells, &ctx, args.jobs)?;

    let mut rows = Vec::with_capacity(results.len());
    for (cell, (row, out)) in cells.iter().zip(&results) {
        if out.truncated {
            eprintln!("warning: fairmatch stopped at its iteration cap; results are partial");
        }
        let file = match cell.alpha {
            Some(alpha) => format!("recs_{}_a{}.tsv", cell.method.name(), alpha_file_tag(alpha)),
            None => format!("recs_{}.tsv", cell.method.name()),
        };
        let table = lists_to_table(&recs, &out.lists, args.n)?;
        write_recs(&table, &args.out_dir.join(file))?;
        rows.push(row.clone());
    }
    write_metrics(&rows, &args.out_dir.join("metrics.csv"))?;
    print_comparison(&rows, args.n);
    Ok(())
}

fn print_comparison(rows: &[MetricsRow], n: usize) {
    println!(
        "{:<10} {:>6} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "method",
        "alpha",
        format!("P@{n}"),
        format!("C@{n}"),
        format!("G@{n}"),
        format!("E@{n}"),
        format!("LT@{n}")
    );
    for row in rows {
        let alpha = row
            .alpha
            .map(|a| a.to_string())
            .unwrap_or_else(|| "-".to_string());
        println!(
            "{:<10} {:>6} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            row.method, alpha, row.precision, row.coverage, row.gini, row.entropy,
            row.longtail_coverage
        );
    }
}
