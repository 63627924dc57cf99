//! The operations behind the `covrl` subcommands.

use std::fs::File;
use std::net::TcpListener;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::config::Config;
use crate::coverage::read_state;
use crate::error::{CovrlError, Result};
use crate::fuzzer::{read_corpus, replay, Campaign, CorpusDir, ReplayReport, StatsSnapshot};
use crate::mutation::{serve, tokenize, TokenStream};
use crate::reward::{normalize_sum, tfidf_sum, Outcome, RewardContext, RewardSource};

/// Exit status for a clean stop.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
/// Bad configuration or an unreadable campaign state.
pub const EXIT_CONFIG: i32 = 2;
/// The target could not be run.
pub const EXIT_TARGET: i32 = 3;

pub fn exit_code(err: &CovrlError) -> i32 {
    match err {
        CovrlError::Config(_)
        | CovrlError::SizeMismatch { .. }
        | CovrlError::CorruptState(_)
        | CovrlError::NotInitialized => EXIT_CONFIG,
        CovrlError::Target(_) => EXIT_TARGET,
        _ => EXIT_FAILURE,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FuzzSummary {
    #[serde(flatten)]
    pub last: StatsSnapshot,
    pub crash_buckets: usize,
    pub resumed: bool,
}

/// Runs (or resumes) a campaign until the exec budget, the duration, or
/// `interrupt` stops it. The check happens between cycles.
pub fn cmd_fuzz(cfg: &Config, interrupt: &AtomicBool) -> Result<FuzzSummary> {
    let corpus = cfg.initial_corpus()?;
    let streams: Vec<TokenStream> = corpus.iter().map(|(_, b)| tokenize(b)).collect();
    let mut mutator = cfg.build_mutator(&streams);
    let mut executor = cfg.build_executor()?;
    let out = CorpusDir::create(&cfg.output)?;
    let has_state = out.resume_path().exists();
    let mut campaign = if cfg.resume && has_state {
        let c = Campaign::resume(cfg.fuzz_config(), out, mutator.as_mut())?;
        if c.weights().exponent() != cfg.map_exponent {
            return Err(CovrlError::config(format!(
                "checkpoint uses map exponent {}, config says {}",
                c.weights().exponent(),
                cfg.map_exponent
            )));
        }
        c
    } else {
        if has_state {
            return Err(CovrlError::config(format!(
                "{} already holds a campaign; pass --resume or pick another output",
                cfg.output.display()
            )));
        }
        let mut c = Campaign::new(cfg.fuzz_config(), cfg.map_exponent, Some(out))?;
        c.warm_up(&corpus, executor.as_mut())?;
        c
    };
    let started = Instant::now();
    let limit = (cfg.duration_s > 0).then(|| Duration::from_secs(cfg.duration_s));
    let budget = if cfg.execs == 0 {
        u64::MAX - campaign.stats().execs
    } else {
        cfg.execs
    };
    let snaps = campaign.run(mutator.as_mut(), executor.as_mut(), budget, |_| {
        interrupt.load(Ordering::Relaxed) || limit.is_some_and(|l| started.elapsed() >= l)
    })?;
    let last = snaps.last().cloned().unwrap_or_else(|| campaign.snapshot(0.0));
    Ok(FuzzSummary {
        last,
        crash_buckets: campaign.crash_buckets().len(),
        resumed: cfg.resume && has_state,
    })
}

/// One row of the reward table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardRow {
    pub case: String,
    pub outcome: Outcome,
    /// Sum of idf over the case's unique edges.
    pub s: f64,
    pub r_tfidf: f64,
    pub reward: f64,
    pub source: RewardSource,
}

/// Scores every case of `corpus_dir` against a saved weight map.
pub fn cmd_reward_eval(cfg: &Config, corpus_dir: &Path, state: &Path) -> Result<Vec<RewardRow>> {
    let mut f = File::open(state)
        .map_err(|e| CovrlError::CorruptState(format!("{}: {e}", state.display())))?;
    let (weights, virgin) = read_state(&mut f)?;
    let mut cfg = cfg.clone();
    cfg.map_exponent = weights.exponent();
    let mut executor = cfg.build_executor()?;
    let ctx = RewardContext {
        weights: &weights,
        virgin: &virgin,
        base: cfg.log_base,
    };
    read_corpus(corpus_dir)?
        .into_iter()
        .map(|(case, bytes)| {
            let res = executor.execute(&bytes)?;
            let edges = res.coverage.unique_coverage();
            let b = normalize_sum(tfidf_sum(&edges, &weights), cfg.log_base);
            let new_cov = virgin.would_add(&edges);
            let r = cfg.reward.score(res.outcome, &edges, new_cov, ctx);
            Ok(RewardRow {
                case,
                outcome: res.outcome,
                s: b.sum,
                r_tfidf: b.r_tfidf,
                reward: r.value,
                source: r.source,
            })
        })
        .collect()
}

pub fn format_reward_table(rows: &[RewardRow]) -> String {
    let mut s = String::from("case\toutcome\tS\tR_tfidf\treward\tsource\n");
    for r in rows {
        let source = serde_json::to_value(r.source)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        s += &format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.case, r.outcome, r.s, r.r_tfidf, r.reward, source
        );
    }
    s
}

pub fn cmd_replay(cfg: &Config, corpus_dir: &Path) -> Result<ReplayReport> {
    let corpus = read_corpus(corpus_dir)?;
    let mut executor = cfg.build_executor()?;
    replay(&corpus, executor.as_mut())
}

/// Serves the mock mutator on `listen`, one connection at a time.
pub fn cmd_serve_mock(cfg: &Config, listen: &str, max_connections: Option<usize>) -> Result<()> {
    let corpus = cfg.initial_corpus()?;
    let streams: Vec<TokenStream> = corpus.iter().map(|(_, b)| tokenize(b)).collect();
    let mut mock = crate::mutation::MockMutator::from_corpus(&streams, cfg.seed, cfg.feedback)
        .with_learning_rate(cfg.learning_rate);
    let listener = TcpListener::bind(listen)
        .map_err(|e| CovrlError::config(format!("cannot listen on {listen}: {e}")))?;
    log::info!("mock mutator listening on {}", listener.local_addr()?);
    serve(listener, &mut mock, max_connections)
}

