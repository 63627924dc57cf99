//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Positional arguments filter criteria by substring.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use covrl::commands::{cmd_replay, cmd_reward_eval};
use covrl::config::Config;
use covrl::coverage::{idf_weight, momentum_blend, LogBase, WeightMap};
use covrl::executor::toy::PlantedBug;
use covrl::executor::{fingerprint, fingerprint_crash, Executor, InProcessToy, ProcessExecutor};
use covrl::fuzzer::{read_corpus, Campaign, CorpusDir, FuzzConfig};
use covrl::mutation::{tokenize, TokenStream};
use covrl::reward::{Outcome, RewardSource};

use common::*;

type Check = std::result::Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn within(start: Instant, limit: Duration) -> Check {
    let t = start.elapsed();
    ensure!(t < limit, "took {:.1}s, limit {:.0}s", t.as_secs_f64(), limit.as_secs_f64());
    Ok(format!("{:.1}s", t.as_secs_f64()))
}

/// Syntax -1.0, semantic -0.5, pass without new coverage +0.5, exactly.
fn reward_exactness() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(e2s)?;
    let state = dir.path().join("state.bin");
    let warm = write_warm_state(&state, 16);
    let rows = cmd_reward_eval(&toy_config(), &fixture("reward"), &state).map_err(e2s)?;
    ensure!(rows.len() == 50, "expected 50 cases, got {}", rows.len());
    let corpus: HashMap<String, Vec<u8>> = read_corpus(&fixture("reward")).map_err(e2s)?.into_iter().collect();
    let mut inproc = InProcessToy::new(16).map_err(e2s)?;
    let (mut syn, mut sem, mut floor_pass, mut other_pass) = (0, 0, 0, 0);
    for r in &rows {
        let expected_class = r.case.split('_').next().unwrap_or("");
        match r.outcome {
            Outcome::SyntaxError => {
                ensure!(expected_class == "syntax", "{} classified as syntax error", r.case);
                ensure!(r.reward == -1.0 && r.source == RewardSource::SyntaxPenalty, "{}: {r:?}", r.case);
                syn += 1;
            }
            Outcome::SemanticError(_) => {
                ensure!(expected_class == "semantic", "{} classified as {}", r.case, r.outcome);
                ensure!(r.reward == -0.5 && r.source == RewardSource::SemanticPenalty, "{}: {r:?}", r.case);
                sem += 1;
            }
            Outcome::Pass => {
                ensure!(expected_class == "pass", "{} passed", r.case);
                let edges = inproc.execute(&corpus[&r.case]).map_err(e2s)?.coverage.unique_coverage();
                if warm.virgin().would_add(&edges) {
                    other_pass += 1;
                } else {
                    ensure!(r.reward == 0.5 && r.source == RewardSource::Floor, "{}: {r:?}", r.case);
                    floor_pass += 1;
                }
            }
            o => return Err(format!("{} ended with {o}", r.case)),
        }
    }
    ensure!(floor_pass > 0, "no pass case without new coverage");
    let t = within(start, Duration::from_secs(5))?;
    Ok(format!(
        "{syn} syntax = -1.0, {sem} semantic = -0.5, {floor_pass} no-new-coverage passes = +0.5 \
         ({other_pass} passes with new coverage) in {t}"
    ))
}

/// Incremental df / N / idf candidates against a recount over saved seeds.
fn idf_oracle() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(e2s)?;
    let out = CorpusDir::create(dir.path()).map_err(e2s)?;
    let exp = 16;
    let cfg = FuzzConfig {
        iter_cycle: 500,
        seed: 7,
        wall_clock: false,
        ..Default::default()
    };
    let mut c = Campaign::new(cfg.clone(), exp, Some(out.clone())).map_err(e2s)?;
    let corpus = read_corpus(&fixture("seeds")).map_err(e2s)?;
    let mut ex = InProcessToy::new(exp).map_err(e2s)?;
    c.warm_up(&corpus, &mut ex).map_err(e2s)?;
    let streams: Vec<TokenStream> = corpus.iter().map(|(_, b)| tokenize(b)).collect();
    let mut m = Config::default().build_mutator(&streams);
    while c.queue().len() < 200 {
        c.run_cycle(m.as_mut(), &mut ex, cfg.iter_cycle).map_err(e2s)?;
    }

    // Recount from the files on disk only.
    let saved = read_corpus(&out.queue_dir()).map_err(e2s)?;
    ensure!(saved.len() == c.queue().len(), "{} saved seeds, queue has {}", saved.len(), c.queue().len());
    let mut oracle_ex = InProcessToy::new(exp).map_err(e2s)?;
    let mut df: BTreeMap<u32, u64> = BTreeMap::new();
    for (_, bytes) in &saved {
        let cov = oracle_ex.execute(bytes).map_err(e2s)?.coverage;
        for (i, &hits) in cov.counters().iter().enumerate() {
            if hits > 0 {
                *df.entry(i as u32).or_default() += 1;
            }
        }
    }
    let n = df.len() as u64;
    let m_len = 1usize << exp;
    ensure!(c.virgin().unique_count() == n, "N = {}, oracle {n}", c.virgin().unique_count());
    let fresh = c.weights().compute_idf(c.virgin(), LogBase::Natural).map_err(e2s)?;
    let mut worst = 0.0f64;
    for i in 0..m_len {
        let d = df.get(&(i as u32)).copied().unwrap_or(0);
        ensure!(u64::from(c.weights().df()[i]) == d, "df[{i}] = {}, oracle {d}", c.weights().df()[i]);
        let want = if d == 0 { 0.0 } else { oracle_idf(m_len, n, d) };
        let got = if d == 0 { 0.0 } else { fresh[i] };
        worst = worst.max((got - want).abs());
    }
    ensure!(worst <= 1e-12, "max idf deviation {worst:e}");
    let t = within(start, Duration::from_secs(10))?;
    Ok(format!("{} seeds, N = {n}, max |idf - oracle| = {worst:e} in {t}", saved.len()))
}

/// df[i] < df[j] implies idf[i] > idf[j]; rare edge outranks common edge.
fn rarity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for _ in 0..1000 {
        let exp = rng.gen_range(8..=24u32);
        let m = 1usize << exp;
        let n = rng.gen_range(1..=m as u64);
        let a = rng.gen_range(0..=n as u32);
        let b = rng.gen_range(0..=n as u32);
        if a == b {
            continue;
        }
        let (lo, hi) = (a.min(b), a.max(b));
        let (wi, wj) = (
            idf_weight(m, n, lo, LogBase::Natural),
            idf_weight(m, n, hi, LogBase::Natural),
        );
        ensure!(wi > wj, "M={m} N={n} df {lo} -> {wi}, df {hi} -> {wj}");
    }

    // The rarity fixtures differ only in which builtin they call.
    let dir = tempfile::tempdir().map_err(e2s)?;
    let state = dir.path().join("state.bin");
    let warm = write_warm_state(&state, 16);
    let mut ex = InProcessToy::new(16).map_err(e2s)?;
    let mut edges = BTreeMap::new();
    for name in ["common.js", "rare.js"] {
        let bytes = fs::read(fixture("rarity").join(name)).map_err(e2s)?;
        let set: BTreeSet<u32> = ex.execute(&bytes).map_err(e2s)?.coverage.unique_coverage().into_iter().collect();
        edges.insert(name, set);
    }
    let df = warm.weights().df();
    let only = |a: &str, b: &str| -> Vec<u32> { edges[a].difference(&edges[b]).map(|&e| df[e as usize]).collect() };
    let (dc, dr) = (only("common.js", "rare.js"), only("rare.js", "common.js"));
    ensure!(!dc.is_empty() && !dr.is_empty(), "fixtures cover the same edges");
    ensure!(
        dr.iter().max() < dc.iter().min(),
        "rare-only edges df {dr:?} not all below common-only df {dc:?}"
    );
    let n = warm.virgin().unique_count();
    let s_oracle = |name: &str| -> f64 { edges[name].iter().map(|&e| oracle_idf(1 << 16, n, df[e as usize].into())).sum() };

    let out = Command::new(COVRL)
        .args(["reward-eval", "--target", &toy_target(), "--state"])
        .arg(&state)
        .arg(fixture("rarity"))
        .output()
        .map_err(e2s)?;
    ensure!(out.status.success(), "reward-eval failed: {}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8_lossy(&out.stdout).into_owned();
    let s_of = |case: &str| -> Option<(f64, f64)> {
        table.lines().find(|l| l.starts_with(case)).and_then(|l| {
            let cols: Vec<&str> = l.split('\t').collect();
            Some((cols.get(2)?.parse().ok()?, cols.get(4)?.parse().ok()?))
        })
    };
    let (sc, rc) = s_of("common.js").ok_or("no common.js row")?;
    let (sr, rr) = s_of("rare.js").ok_or("no rare.js row")?;
    for (name, got) in [("common.js", sc), ("rare.js", sr)] {
        let want = s_oracle(name);
        ensure!((got - want).abs() <= 1e-12, "{name}: S = {got}, oracle {want}");
    }
    ensure!(sr > sc, "S(rare) = {sr} not above S(common) = {sc}");
    ensure!(rr >= rc, "reward(rare) = {rr} below reward(common) = {rc}");
    Ok(format!(
        "1000 triples ordered; rare-only df {dr:?} vs common-only df {dc:?}: \
         S(rare) = {sr:.6} > S(common) = {sc:.6} via reward-eval, matching the oracle"
    ))
}

/// Blends stay in [min, max]; alpha 0 and 1 return one side verbatim.
fn momentum() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut count = 0;
    for _ in 0..10_000 {
        let old: f64 = rng.gen_range(-1.0..1.0) * 10f64.powi(rng.gen_range(-6..3));
        let fresh: f64 = rng.gen_range(-1.0..1.0) * 10f64.powi(rng.gen_range(-6..3));
        let alpha: f64 = rng.gen();
        let b = momentum_blend(old, fresh, alpha);
        ensure!(
            old.min(fresh) <= b && b <= old.max(fresh),
            "blend({old}, {fresh}, {alpha}) = {b} outside bounds"
        );
        ensure!(momentum_blend(old, fresh, 0.0) == fresh, "alpha 0 changed {fresh}");
        ensure!(momentum_blend(old, fresh, 1.0) == old, "alpha 1 changed {old}");
        ensure!(momentum_blend(old, old, alpha) == old, "blend of equal values moved");
        count += 1;
    }

    // Whole-map updates on a real weight map.
    let warm = warmed_campaign(10);
    let mut w: WeightMap = warm.weights().clone();
    let fresh = w.compute_idf(warm.virgin(), LogBase::Natural).map_err(e2s)?;
    let before = w.idf().to_vec();
    let shifted: Vec<f64> = fresh.iter().map(|x| x * 0.5 - 0.01).collect();
    let mut keep = w.clone();
    keep.update_with_momentum(&shifted, 1.0).map_err(e2s)?;
    ensure!(keep.idf() == before.as_slice(), "alpha 1 changed the map");
    w.update_with_momentum(&shifted, 0.0).map_err(e2s)?;
    ensure!(w.idf() == shifted.as_slice(), "alpha 0 did not adopt the fresh map");
    Ok(format!("{count} random triples and both degenerate rates exact"))
}

fn fuzz_once(out: &Path) -> std::result::Result<(), String> {
    let res = Command::new(COVRL)
        .args([
            "fuzz", "--target", "toy", "--mutator", "mock", "--execs", "20000", "--seed", "42",
            "--no-wall-clock", "--output",
        ])
        .arg(out)
        .output()
        .map_err(e2s)?;
    ensure!(res.status.success(), "fuzz failed: {}", String::from_utf8_lossy(&res.stderr));
    Ok(())
}

/// Two identical CLI campaigns leave identical stats and checkpoints.
fn determinism() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(e2s)?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    fuzz_once(&a)?;
    fuzz_once(&b)?;
    let mut compared = Vec::new();
    for f in ["stats.jsonl", "state.bin", "resume.json", "dataset.jsonl"] {
        let (x, y) = (fs::read(a.join(f)).map_err(e2s)?, fs::read(b.join(f)).map_err(e2s)?);
        ensure!(!x.is_empty(), "{f} is empty");
        ensure!(x == y, "{f} differs between runs");
        compared.push(format!("{f} ({} B)", x.len()));
    }
    let t = within(start, Duration::from_secs(120))?;
    Ok(format!("bit-identical {} in {t}", compared.join(", ")))
}

struct ArmResult {
    edges: u64,
    bugs: BTreeSet<usize>,
}

fn differential_arm(seed: u64, feedback: bool) -> std::result::Result<ArmResult, String> {
    let mut cfg = Config::default();
    cfg.target = "toy-inproc".into();
    cfg.iter_cycle = 1000;
    cfg.seed = seed;
    cfg.feedback = feedback;
    cfg.wall_clock = false;
    cfg.corpus = Some(fixture("seeds"));
    let corpus = cfg.initial_corpus().map_err(e2s)?;
    let streams: Vec<TokenStream> = corpus.iter().map(|(_, b)| tokenize(b)).collect();
    let mut m = cfg.build_mutator(&streams);
    let mut ex = cfg.build_executor().map_err(e2s)?;
    let mut c = Campaign::new(cfg.fuzz_config(), cfg.map_exponent, None).map_err(e2s)?;
    c.warm_up(&corpus, ex.as_mut()).map_err(e2s)?;
    c.run(m.as_mut(), ex.as_mut(), 50_000, |_| false).map_err(e2s)?;
    let bugs = PlantedBug::ALL
        .iter()
        .enumerate()
        .filter(|(_, b)| c.crash_buckets().contains_key(&fingerprint(b.signal(), b.report(1, 0x10).as_bytes())))
        .map(|(i, _)| i)
        .collect();
    Ok(ArmResult {
        edges: c.virgin().unique_count(),
        bugs,
    })
}

fn median(v: &mut [u64]) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

/// Adaptive mock vs uniform mock, 9 paired runs of 50,000 execs.
fn differential() -> Check {
    let start = Instant::now();
    let (mut with, mut without) = (Vec::new(), Vec::new());
    let mut bugs = BTreeSet::new();
    for r in 0..9 {
        let a = differential_arm(1000 + r, true)?;
        let u = differential_arm(1000 + r, false)?;
        with.push(a.edges);
        without.push(u.edges);
        bugs.extend(a.bugs);
    }
    let runs = format!("feedback {with:?}, uniform {without:?}");
    let (ma, mu) = (median(&mut with), median(&mut without));
    ensure!(ma > mu, "median edges {ma} not above {mu}; {runs}");
    ensure!(bugs.len() >= 2, "feedback found bugs {bugs:?}; {runs}");
    let t = within(start, Duration::from_secs(600))?;
    Ok(format!(
        "median edges {ma} > {mu}, feedback found {}/3 planted bugs; {runs}; {t}",
        bugs.len()
    ))
}

/// 3/2/5 corpus reports 30/20/50; valid edges within total edges everywhere.
fn error_rate() -> Check {
    let cfg = toy_config();
    let r = cmd_replay(&cfg, &fixture("error_rate")).map_err(e2s)?;
    ensure!(
        (r.syntax_pct, r.semantic_pct, r.pass_pct) == (30.0, 20.0, 50.0),
        "got {}% / {}% / {}%",
        r.syntax_pct,
        r.semantic_pct,
        r.pass_pct
    );
    let mut checked = Vec::new();
    for dir in ["error_rate", "reward", "seeds", "bugs", "rarity"] {
        let r = cmd_replay(&cfg, &fixture(dir)).map_err(e2s)?;
        let total: BTreeSet<u32> = r.total_set.iter().copied().collect();
        ensure!(r.valid_set.iter().all(|e| total.contains(e)), "{dir}: valid edge outside total");
        ensure!(r.valid_edges <= r.total_edges, "{dir}: counts");
        checked.push(format!("{dir} {}/{}", r.valid_edges, r.total_edges));
    }
    Ok(format!("30%/20%/50% exact; valid <= total on {}", checked.join(", ")))
}

/// 100 spawned triggers with real pid/address noise, plus 100 synthetic
/// reports with random noise, give exactly three buckets.
fn crash_triage() -> Check {
    let files = ["slice_overflow.js", "repeat_assert.js", "pop_after_free.js"];
    let cases: Vec<Vec<u8>> = files
        .iter()
        .map(|f| fs::read(fixture("bugs").join(f)))
        .collect::<std::result::Result<_, _>>()
        .map_err(e2s)?;
    let tc = toy_config().target_config().map_err(e2s)?.ok_or("toy target expected")?;
    let mut ex = ProcessExecutor::new(tc, None).map_err(e2s)?;
    let mut buckets: BTreeMap<u64, BTreeSet<usize>> = BTreeMap::new();
    let mut stderrs: Vec<BTreeSet<Vec<u8>>> = vec![BTreeSet::new(); 3];
    for i in 0..100 {
        let k = i % 3;
        let res = ex.execute(&cases[k]).map_err(e2s)?;
        ensure!(matches!(res.outcome, Outcome::Crash { .. }), "{} ended with {}", files[k], res.outcome);
        let fp = fingerprint_crash(&res).ok_or("crash without fingerprint")?;
        buckets.entry(fp).or_default().insert(k);
        stderrs[k].insert(res.stderr_head.clone());
    }
    ensure!(buckets.len() == 3, "{} buckets from spawned triggers", buckets.len());
    ensure!(buckets.values().all(|s| s.len() == 1), "a bucket mixes bugs");
    let noisy = stderrs.iter().filter(|s| s.len() > 1).count();
    ensure!(noisy == 3, "stderr did not vary across triggers for every bug");

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut synthetic: BTreeMap<u64, BTreeSet<usize>> = BTreeMap::new();
    for i in 0..100 {
        let bug = PlantedBug::ALL[i % 3];
        let report = bug.report(rng.gen_range(1..4_000_000), rng.gen::<u64>() as usize & 0x7fff_ffff_fff0);
        synthetic.entry(fingerprint(bug.signal(), report.as_bytes())).or_default().insert(i % 3);
    }
    ensure!(synthetic.len() == 3 && synthetic.values().all(|s| s.len() == 1), "synthetic reports: {synthetic:?}");
    Ok("3 buckets from 100 spawned triggers and from 100 randomized reports".into())
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Check); 8] = [
        ("reward dispatch exactness", reward_exactness),
        ("idf oracle equivalence", idf_oracle),
        ("rarity monotonicity", rarity),
        ("momentum correctness", momentum),
        ("determinism replay", determinism),
        ("feedback vs uniform differential", differential),
        ("error-rate metric", error_rate),
        ("crash triage", crash_triage),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
