//! The campaign driver: seed queue, interestingness gate, cycle loop with
//! reward bookkeeping and finetune scheduling, and corpus persistence.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coverage::{self, LogBase, VirginMap, WeightMap};
use crate::error::{CovrlError, Result};
use crate::executor::{fingerprint_crash, Executor};
use crate::mutation::mock::{hex, restore_rng};
use crate::mutation::{
    apply_fills, mask_mutation, request_fill, tokenize, MaskBudget, Mutator, SeedId, StrategyMix,
    TokenStream,
};
use crate::protocol::{DecodeOptions, FinetuneRecord, FinetuneRequest};
use crate::reward::{Outcome, RewardContext, RewardScheme, RewardSource};

pub const DEFAULT_ITER_CYCLE: u64 = 10_000;
pub const DEFAULT_ALPHA: f64 = 0.6;
pub const DEFAULT_ERROR_SAMPLE_RATE: f64 = 0.25;
pub const ENERGY_FLOOR: f64 = 1e-3;
/// Multiplier for seeds found in the current or previous cycle.
pub const RECENCY_BONUS: f64 = 2.0;

const RESUME_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyMode {
    Weighted,
    Uniform,
}

impl std::str::FromStr for EnergyMode {
    type Err = CovrlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(EnergyMode::Weighted),
            "uniform" => Ok(EnergyMode::Uniform),
            _ => Err(CovrlError::config(format!("unknown schedule {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzConfig {
    pub scheme: RewardScheme,
    pub alpha: f64,
    pub iter_cycle: u64,
    pub budget: MaskBudget,
    pub mix: StrategyMix,
    pub error_sample_rate: f64,
    pub seed: u64,
    pub log_base: LogBase,
    pub schedule: EnergyMode,
    pub decode: DecodeOptions,
    /// When false, `wall_ms` in stats snapshots is always 0.
    pub wall_clock: bool,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            scheme: RewardScheme::Cwr,
            alpha: DEFAULT_ALPHA,
            iter_cycle: DEFAULT_ITER_CYCLE,
            budget: MaskBudget::default(),
            mix: StrategyMix::default(),
            error_sample_rate: DEFAULT_ERROR_SAMPLE_RATE,
            seed: 0,
            log_base: LogBase::Natural,
            schedule: EnergyMode::Weighted,
            decode: DecodeOptions::default(),
            wall_clock: true,
        }
    }
}

impl FuzzConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(CovrlError::config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.iter_cycle == 0 {
            return Err(CovrlError::config("iter_cycle must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.error_sample_rate) {
            return Err(CovrlError::config(format!(
                "error sample rate {} outside [0, 1]",
                self.error_sample_rate
            )));
        }
        if !(self.budget.fraction > 0.0 && self.budget.fraction <= 1.0) || self.budget.max_slots == 0 {
            return Err(CovrlError::config("mask budget needs a fraction in (0, 1] and at least one slot"));
        }
        self.mix.validate()
    }
}

#[derive(Debug, Clone)]
pub struct Seed {
    pub id: SeedId,
    pub bytes: Vec<u8>,
    pub tokens: TokenStream,
    pub unique_edges: Vec<u32>,
    pub discovered_cycle: u64,
    pub parent: Option<SeedId>,
    pub energy: f64,
}

impl Seed {
    pub fn file_name(&self) -> String {
        let parent = self.parent.map_or_else(|| "orig".to_string(), |p| format!("{p:06}"));
        format!("{:06}_{parent}_{}.js", self.id, self.discovered_cycle)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub execs: u64,
    pub passes: u64,
    pub syntax_errors: u64,
    pub semantic_errors: u64,
    pub crashes: u64,
    pub timeouts: u64,
    pub cycles: u64,
    /// Mutations dropped because the mutator broke the protocol.
    pub discarded: u64,
}

impl Stats {
    fn count(&mut self, outcome: Outcome) {
        self.execs += 1;
        match outcome {
            Outcome::Pass => self.passes += 1,
            Outcome::SyntaxError => self.syntax_errors += 1,
            Outcome::SemanticError(_) => self.semantic_errors += 1,
            Outcome::Crash { .. } => self.crashes += 1,
            Outcome::Timeout => self.timeouts += 1,
        }
    }
}

/// One line of stats.jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSnapshot {
    pub cycle: u64,
    pub execs: u64,
    pub n_edges: u64,
    pub valid_edges: u64,
    pub err_syntax: u64,
    pub err_semantic: u64,
    pub crashes: u64,
    pub queue_len: u64,
    pub reward_mean: f64,
    pub wall_ms: u64,
}

/// One line of dataset.jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub cycle: u64,
    pub seed_id: SeedId,
    pub strategy: String,
    pub outcome: Outcome,
    pub reward: f64,
    pub source: RewardSource,
    pub new_coverage: bool,
    pub masked_tokens: Vec<String>,
    pub fill_tokens: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashBucket {
    pub signal: i32,
    pub hits: u64,
    pub first_exec: u64,
    pub file: String,
}

/// What one `fuzz_one` call did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub outcome: Outcome,
    pub new_edges: usize,
    pub retained: Option<SeedId>,
    pub recorded: bool,
    pub new_bucket: Option<u64>,
}

/// On-disk layout of a campaign directory.
#[derive(Debug, Clone)]
pub struct CorpusDir {
    root: PathBuf,
}

impl CorpusDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("queue"))?;
        fs::create_dir_all(root.join("crashes"))?;
        Ok(CorpusDir { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn queue_dir(&self) -> PathBuf {
        self.root.join("queue")
    }

    pub fn crashes_dir(&self) -> PathBuf {
        self.root.join("crashes")
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.root.join("dataset.jsonl")
    }

    pub fn stats_path(&self) -> PathBuf {
        self.root.join("stats.jsonl")
    }

    pub fn state_path(&self) -> PathBuf {
        self.root.join("state.bin")
    }

    pub fn resume_path(&self) -> PathBuf {
        self.root.join("resume.json")
    }

    fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        let mut line = serde_json::to_vec(value)?;
        line.push(b'\n');
        f.write_all(&line)?;
        Ok(())
    }

    /// Writes `bytes` to `path` through a temporary file and a rename.
    fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes)?;
        fs::rename(tmp, path)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct SeedMeta {
    id: SeedId,
    parent: Option<SeedId>,
    discovered_cycle: u64,
    unique_edges: Vec<u32>,
    file: String,
}

#[derive(Serialize, Deserialize)]
struct ResumeState {
    version: u32,
    rng_seed: String,
    rng_word_pos: String,
    stats: Stats,
    next_id: SeedId,
    request_id: u64,
    dataset_len: u64,
    valid_edges: Vec<u32>,
    queue: Vec<SeedMeta>,
    crash_buckets: BTreeMap<String, CrashBucket>,
    mutator: Option<serde_json::Value>,
}

/// A running campaign.
pub struct Campaign {
    cfg: FuzzConfig,
    virgin: VirginMap,
    valid: VirginMap,
    weights: WeightMap,
    queue: Vec<Seed>,
    total_energy: f64,
    stats: Stats,
    rng: ChaCha8Rng,
    next_id: SeedId,
    request_id: u64,
    cycle_records: Vec<FinetuneRecord>,
    cycle_reward_sum: f64,
    dataset_len: u64,
    crash_buckets: BTreeMap<u64, CrashBucket>,
    out: Option<CorpusDir>,
    started: Instant,
}

impl Campaign {
    pub fn new(cfg: FuzzConfig, map_exponent: u32, out: Option<CorpusDir>) -> Result<Self> {
        cfg.validate()?;
        Ok(Campaign {
            virgin: VirginMap::new(map_exponent)?,
            valid: VirginMap::new(map_exponent)?,
            weights: WeightMap::new(map_exponent)?,
            queue: Vec::new(),
            total_energy: 0.0,
            stats: Stats::default(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            next_id: 0,
            request_id: 0,
            cycle_records: Vec::new(),
            cycle_reward_sum: 0.0,
            dataset_len: 0,
            crash_buckets: BTreeMap::new(),
            out,
            started: Instant::now(),
            cfg,
        })
    }

    pub fn config(&self) -> &FuzzConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    pub fn queue(&self) -> &[Seed] {
        &self.queue
    }

    pub fn virgin(&self) -> &VirginMap {
        &self.virgin
    }

    pub fn valid_coverage(&self) -> &VirginMap {
        &self.valid
    }

    pub fn weights(&self) -> &WeightMap {
        &self.weights
    }

    pub fn crash_buckets(&self) -> &BTreeMap<u64, CrashBucket> {
        &self.crash_buckets
    }

    /// Records in D_t so far, across all cycles.
    pub fn dataset_len(&self) -> u64 {
        self.dataset_len
    }

    pub fn pending_records(&self) -> &[FinetuneRecord] {
        &self.cycle_records
    }

    /// Replays the initial corpus: every case that neither crashes nor times
    /// out becomes a seed and counts towards DF, then the weight map is set
    /// from scratch. Warm-up executions are not counted in the stats.
    pub fn warm_up(&mut self, corpus: &[(String, Vec<u8>)], executor: &mut dyn Executor) -> Result<()> {
        for (name, bytes) in corpus {
            let res = executor.execute(bytes)?;
            match res.outcome {
                Outcome::Crash { .. } | Outcome::Timeout => {
                    log::warn!("initial seed {name} ended with {}; skipped", res.outcome);
                    continue;
                }
                Outcome::SyntaxError | Outcome::SemanticError(_) => {
                    log::warn!("initial seed {name} is not valid ({})", res.outcome);
                }
                Outcome::Pass => {
                    self.valid.accumulate(&res.coverage)?;
                }
            }
            self.virgin.accumulate(&res.coverage)?;
            let edges = res.coverage.unique_coverage();
            self.retain(bytes.clone(), edges, None)?;
        }
        if self.queue.is_empty() {
            return Err(CovrlError::config("initial corpus produced no usable seeds"));
        }
        let fresh = self.weights.compute_idf(&self.virgin, self.cfg.log_base)?;
        self.weights.update_with_momentum(&fresh, 0.0)?;
        self.refresh_energies();
        Ok(())
    }

    fn retain(&mut self, bytes: Vec<u8>, edges: Vec<u32>, parent: Option<SeedId>) -> Result<SeedId> {
        self.weights.register_seed_coverage(&edges)?;
        let id = self.next_id;
        self.next_id += 1;
        let mut seed = Seed {
            id,
            tokens: tokenize(&bytes),
            bytes,
            unique_edges: edges,
            discovered_cycle: self.stats.cycles,
            parent,
            energy: 0.0,
        };
        seed.energy = self.energy_of(&seed);
        self.total_energy += seed.energy;
        if let Some(out) = &self.out {
            fs::write(out.queue_dir().join(seed.file_name()), &seed.bytes)?;
        }
        self.queue.push(seed);
        Ok(id)
    }

    /// Selection weight: the seed's current idf mass (floored), boosted for
    /// recent discoveries.
    pub fn energy_of(&self, seed: &Seed) -> f64 {
        match self.cfg.schedule {
            EnergyMode::Uniform => 1.0,
            EnergyMode::Weighted => {
                let idf = self.weights.idf();
                let mass: f64 = seed.unique_edges.iter().map(|&e| idf[e as usize]).sum();
                let recent = seed.discovered_cycle + 1 >= self.stats.cycles;
                mass.max(ENERGY_FLOOR) * if recent { RECENCY_BONUS } else { 1.0 }
            }
        }
    }

    fn refresh_energies(&mut self) {
        let energies: Vec<f64> = self.queue.iter().map(|s| self.energy_of(s)).collect();
        for (s, e) in self.queue.iter_mut().zip(energies) {
            s.energy = e;
        }
        self.total_energy = self.queue.iter().map(|s| s.energy).sum();
    }

    /// Weighted-random queue index.
    pub fn select_seed(&mut self) -> Result<usize> {
        select_weighted(&self.queue, self.total_energy, &mut self.rng)
    }

    /// One mutation-execution-feedback step.
    /// Returns `None` when the mutation was discarded before execution.
    pub fn fuzz_one(&mut self, mutator: &mut dyn Mutator, executor: &mut dyn Executor) -> Result<Option<StepReport>> {
        let si = self.select_seed()?;
        let di = self.rng.gen_range(0..self.queue.len());
        let mc = {
            let seed = &self.queue[si];
            let donor = &self.queue[di];
            mask_mutation(
                (&seed.tokens, seed.id),
                (&donor.tokens, donor.id),
                &self.cfg.mix,
                self.cfg.budget,
                &mut self.rng,
            )
        };
        let parent = mc.seed_id;
        self.request_id += 1;
        let fills = match request_fill(&mc, mutator, self.cfg.decode, self.request_id) {
            Ok(f) => f.fills,
            Err(CovrlError::Protocol(msg)) => {
                log::warn!("infill request {} discarded: {msg}", self.request_id);
                self.stats.discarded += 1;
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        let case = apply_fills(&mc, &fills)?.detokenize();
        let res = executor.execute(case.as_bytes())?;
        self.stats.count(res.outcome);

        let mut report = StepReport {
            outcome: res.outcome,
            new_edges: 0,
            retained: None,
            recorded: false,
            new_bucket: None,
        };
        match res.outcome {
            Outcome::Crash { signal } => {
                let bucket = fingerprint_crash(&res).expect("crash outcome");
                match self.crash_buckets.get_mut(&bucket) {
                    Some(b) => b.hits += 1,
                    None => {
                        let file = format!("{bucket:016x}.js");
                        if let Some(out) = &self.out {
                            let dir = out.crashes_dir();
                            fs::write(dir.join(&file), case.as_bytes())?;
                            fs::write(dir.join(format!("{bucket:016x}.stderr")), &res.stderr_head)?;
                        }
                        log::info!("new crash bucket {bucket:016x} (signal {signal})");
                        self.crash_buckets.insert(
                            bucket,
                            CrashBucket {
                                signal,
                                hits: 1,
                                first_exec: self.stats.execs,
                                file,
                            },
                        );
                        report.new_bucket = Some(bucket);
                    }
                }
                return Ok(Some(report));
            }
            Outcome::Timeout => return Ok(Some(report)),
            _ => {}
        }

        let edges = res.coverage.unique_coverage();
        let newly = self.virgin.accumulate(&res.coverage)?;
        if res.outcome == Outcome::Pass {
            self.valid.accumulate(&res.coverage)?;
        }
        let new_coverage = !newly.is_empty();
        report.new_edges = newly.len();

        let sampled = !new_coverage
            && res.outcome.is_error()
            && self.cfg.error_sample_rate > 0.0
            && self.rng.gen::<f64>() < self.cfg.error_sample_rate;
        if !(new_coverage || sampled) {
            return Ok(Some(report));
        }
        let reward = self.cfg.scheme.score(
            res.outcome,
            &edges,
            new_coverage,
            RewardContext {
                weights: &self.weights,
                virgin: &self.virgin,
                base: self.cfg.log_base,
            },
        );
        if new_coverage {
            report.retained = Some(self.retain(case.into_bytes(), edges, Some(parent))?);
        }
        let rec = RewardRecord {
            cycle: self.stats.cycles,
            seed_id: parent,
            strategy: mc.strategy.to_string(),
            outcome: res.outcome,
            reward: reward.value,
            source: reward.source,
            new_coverage,
            masked_tokens: mc.masked.texts(),
            fill_tokens: fills
                .iter()
                .map(|f| f.iter().map(|t| t.text.clone()).collect())
                .collect(),
        };
        if let Some(out) = &self.out {
            CorpusDir::append_line(&out.dataset_path(), &rec)?;
        }
        self.cycle_reward_sum += rec.reward;
        self.cycle_records.push(FinetuneRecord {
            masked_tokens: rec.masked_tokens,
            fill_tokens: rec.fill_tokens,
            reward: rec.reward,
        });
        self.dataset_len += 1;
        report.recorded = true;
        Ok(Some(report))
    }

    /// `iterations` fuzz steps followed by the cycle-end bookkeeping.
    pub fn run_cycle(
        &mut self,
        mutator: &mut dyn Mutator,
        executor: &mut dyn Executor,
        iterations: u64,
    ) -> Result<StatsSnapshot> {
        if iterations == 0 {
            return Err(CovrlError::config("a cycle needs at least one iteration"));
        }
        mutator.begin_cycle();
        for _ in 0..iterations {
            self.fuzz_one(mutator, executor)?;
        }
        self.end_cycle(mutator)
    }

    /// Runs whole cycles (the last one possibly short) until `execs` more
    /// executions are done, or `stop` returns true between cycles.
    pub fn run(
        &mut self,
        mutator: &mut dyn Mutator,
        executor: &mut dyn Executor,
        execs: u64,
        mut stop: impl FnMut(&Campaign) -> bool,
    ) -> Result<Vec<StatsSnapshot>> {
        let target = self.stats.execs + execs;
        let mut snaps = Vec::new();
        while self.stats.execs < target && !stop(self) {
            let n = self.cfg.iter_cycle.min(target - self.stats.execs);
            snaps.push(self.run_cycle(mutator, executor, n)?);
        }
        Ok(snaps)
    }

    fn end_cycle(&mut self, mutator: &mut dyn Mutator) -> Result<StatsSnapshot> {
        match self.weights.compute_idf(&self.virgin, self.cfg.log_base) {
            Ok(fresh) => self.weights.update_with_momentum(&fresh, self.cfg.alpha)?,
            Err(CovrlError::NotInitialized) => log::warn!("no coverage yet; weight map unchanged"),
            Err(e) => return Err(e),
        }
        let records = std::mem::take(&mut self.cycle_records);
        let n_records = records.len();
        let req = FinetuneRequest {
            cycle: self.stats.cycles,
            records,
            epochs: 1,
        };
        match mutator.finetune(&req) {
            Ok(r) => log::debug!(
                "cycle {} finetune on {n_records} records: loss {:.4} -> {:.4}",
                r.cycle,
                r.loss_before,
                r.loss_after
            ),
            Err(e) => log::warn!("finetune for cycle {} skipped: {e}", self.stats.cycles),
        }
        let reward_mean = if n_records == 0 {
            0.0
        } else {
            self.cycle_reward_sum / n_records as f64
        };
        self.cycle_reward_sum = 0.0;
        self.stats.cycles += 1;
        self.refresh_energies();

        let snap = self.snapshot(reward_mean);
        if let Some(out) = self.out.clone() {
            CorpusDir::append_line(&out.stats_path(), &snap)?;
            self.checkpoint(&out, mutator)?;
        }
        Ok(snap)
    }

    pub fn snapshot(&self, reward_mean: f64) -> StatsSnapshot {
        StatsSnapshot {
            cycle: self.stats.cycles,
            execs: self.stats.execs,
            n_edges: self.virgin.unique_count(),
            valid_edges: self.valid.unique_count(),
            err_syntax: self.stats.syntax_errors,
            err_semantic: self.stats.semantic_errors,
            crashes: self.stats.crashes,
            queue_len: self.queue.len() as u64,
            reward_mean,
            wall_ms: if self.cfg.wall_clock {
                self.started.elapsed().as_millis() as u64
            } else {
                0
            },
        }
    }

    fn checkpoint(&self, out: &CorpusDir, mutator: &dyn Mutator) -> Result<()> {
        let mut state = Vec::new();
        coverage::write_state(&mut state, &self.weights, &self.virgin)?;
        CorpusDir::write_atomic(&out.state_path(), &state)?;
        let resume = ResumeState {
            version: RESUME_VERSION,
            rng_seed: hex(&self.rng.get_seed()),
            rng_word_pos: self.rng.get_word_pos().to_string(),
            stats: self.stats,
            next_id: self.next_id,
            request_id: self.request_id,
            dataset_len: self.dataset_len,
            valid_edges: self.valid.seen_edges(),
            queue: self
                .queue
                .iter()
                .map(|s| SeedMeta {
                    id: s.id,
                    parent: s.parent,
                    discovered_cycle: s.discovered_cycle,
                    unique_edges: s.unique_edges.clone(),
                    file: s.file_name(),
                })
                .collect(),
            crash_buckets: self
                .crash_buckets
                .iter()
                .map(|(k, v)| (format!("{k:016x}"), v.clone()))
                .collect(),
            mutator: mutator.save_state(),
        };
        let mut json = serde_json::to_vec_pretty(&resume)?;
        json.push(b'\n');
        CorpusDir::write_atomic(&out.resume_path(), &json)
    }

    /// Reopens a checkpointed campaign directory. The mutator's own state is
    /// restored too when the checkpoint carries one.
    pub fn resume(cfg: FuzzConfig, out: CorpusDir, mutator: &mut dyn Mutator) -> Result<Self> {
        let corrupt = |what: &str| CovrlError::CorruptState(what.to_string());
        let (weights, virgin) = coverage::read_state(&mut File::open(out.state_path())?)?;
        let resume: ResumeState = serde_json::from_slice(&fs::read(out.resume_path())?)
            .map_err(|e| CovrlError::CorruptState(format!("resume.json: {e}")))?;
        if resume.version != RESUME_VERSION {
            return Err(corrupt("unsupported resume.json version"));
        }
        let mut c = Campaign::new(cfg, weights.exponent(), Some(out.clone()))?;
        for e in &resume.valid_edges {
            if *e as usize >= c.valid.len() {
                return Err(corrupt("valid edge out of range"));
            }
        }
        let mut valid_cov = crate::coverage::CoverageMap::new(weights.exponent())?;
        for &e in &resume.valid_edges {
            valid_cov.hit(e);
        }
        c.valid.accumulate(&valid_cov)?;
        c.weights = weights;
        c.virgin = virgin;
        c.rng = restore_rng(&resume.rng_seed, &resume.rng_word_pos)?;
        c.stats = resume.stats;
        c.next_id = resume.next_id;
        c.request_id = resume.request_id;
        c.dataset_len = resume.dataset_len;
        for meta in resume.queue {
            let bytes = fs::read(out.queue_dir().join(&meta.file))?;
            c.queue.push(Seed {
                id: meta.id,
                tokens: tokenize(&bytes),
                bytes,
                unique_edges: meta.unique_edges,
                discovered_cycle: meta.discovered_cycle,
                parent: meta.parent,
                energy: 0.0,
            });
        }
        for (k, v) in resume.crash_buckets {
            let id = u64::from_str_radix(&k, 16).map_err(|_| corrupt("bad crash bucket id"))?;
            c.crash_buckets.insert(id, v);
        }
        if let Some(state) = &resume.mutator {
            mutator.restore_state(state)?;
        }
        c.refresh_energies();
        Ok(c)
    }
}

/// Weighted-random index into `queue` by energy.
pub fn select_weighted<R: Rng + ?Sized>(queue: &[Seed], total: f64, rng: &mut R) -> Result<usize> {
    if queue.is_empty() {
        return Err(CovrlError::config("seed queue is empty"));
    }
    if queue.len() == 1 {
        return Ok(0);
    }
    let mut x = rng.gen::<f64>() * total;
    for (i, s) in queue.iter().enumerate() {
        if x < s.energy {
            return Ok(i);
        }
        x -= s.energy;
    }
    Ok(queue.len() - 1)
}

/// Coverage and error-rate summary of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub cases: u64,
    pub total_edges: u64,
    pub valid_edges: u64,
    pub syntax_errors: u64,
    pub semantic_errors: u64,
    pub passes: u64,
    pub crashes: u64,
    pub timeouts: u64,
    pub syntax_pct: f64,
    pub semantic_pct: f64,
    pub pass_pct: f64,
    /// Edges seen by passing cases, for subset checks.
    #[serde(skip)]
    pub valid_set: Vec<u32>,
    #[serde(skip)]
    pub total_set: Vec<u32>,
}

/// Sorted regular files of a corpus directory. Unreadable entries are
/// skipped with a warning.
pub fn read_corpus(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CovrlError::config(format!("corpus {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match fs::read(&p) {
            Ok(bytes) => out.push((name, bytes)),
            Err(e) => log::warn!("skipping unreadable {}: {e}", p.display()),
        }
    }
    Ok(out)
}

pub fn replay(corpus: &[(String, Vec<u8>)], executor: &mut dyn Executor) -> Result<ReplayReport> {
    let exp = executor.map_exponent();
    let mut total = VirginMap::new(exp)?;
    let mut valid = VirginMap::new(exp)?;
    let mut stats = Stats::default();
    for (_, bytes) in corpus {
        let res = executor.execute(bytes)?;
        stats.count(res.outcome);
        total.accumulate(&res.coverage)?;
        if res.outcome == Outcome::Pass {
            valid.accumulate(&res.coverage)?;
        }
    }
    let pct = |n: u64| {
        if stats.execs == 0 {
            0.0
        } else {
            100.0 * n as f64 / stats.execs as f64
        }
    };
    Ok(ReplayReport {
        cases: stats.execs,
        total_edges: total.unique_count(),
        valid_edges: valid.unique_count(),
        syntax_errors: stats.syntax_errors,
        semantic_errors: stats.semantic_errors,
        passes: stats.passes,
        crashes: stats.crashes,
        timeouts: stats.timeouts,
        syntax_pct: pct(stats.syntax_errors),
        semantic_pct: pct(stats.semantic_errors),
        pass_pct: pct(stats.passes),
        valid_set: valid.seen_edges(),
        total_set: total.seen_edges(),
    })
}
