//! Campaign configuration: defaults, a flat `key = value` file, and
//! command-line overrides, applied in that order.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::coverage::{check_exponent, LogBase, DEFAULT_MAP_EXPONENT};
use crate::error::{CovrlError, Result};
use crate::executor::{
    CoverageChannel, Executor, InProcessToy, ProcessExecutor, TargetConfig, INPUT_PLACEHOLDER,
};
use crate::fuzzer::{
    EnergyMode, FuzzConfig, DEFAULT_ALPHA, DEFAULT_ERROR_SAMPLE_RATE, DEFAULT_ITER_CYCLE,
};
use crate::mutation::mock::DEFAULT_LEARNING_RATE;
use crate::mutation::{MaskBudget, MockMutator, Mutator, ResilientMutator, StrategyMix, TokenStream};
use crate::protocol::{DecodeOptions, DEFAULT_CONTRASTIVE_ALPHA, DEFAULT_TOP_K};
use crate::reward::RewardScheme;

/// Target name that spawns the bundled `covrl-toy` binary.
pub const TOY_TARGET: &str = "toy";
/// Target name that runs the toy interpreter inside this process.
pub const TOY_INPROC_TARGET: &str = "toy-inproc";
pub const TOY_BINARY: &str = "covrl-toy";
pub const MOCK_MUTATOR: &str = "mock";

pub const DEFAULT_TIMEOUT_MS: u64 = 1000;
pub const DEFAULT_OUTPUT: &str = "covrl-out";

/// Seeds used when no corpus directory is configured.
pub const BUILTIN_SEEDS: [&str; 20] = [
    include_str!("../fixtures/seeds/seed_000.js"),
    include_str!("../fixtures/seeds/seed_001.js"),
    include_str!("../fixtures/seeds/seed_002.js"),
    include_str!("../fixtures/seeds/seed_003.js"),
    include_str!("../fixtures/seeds/seed_004.js"),
    include_str!("../fixtures/seeds/seed_005.js"),
    include_str!("../fixtures/seeds/seed_006.js"),
    include_str!("../fixtures/seeds/seed_007.js"),
    include_str!("../fixtures/seeds/seed_008.js"),
    include_str!("../fixtures/seeds/seed_009.js"),
    include_str!("../fixtures/seeds/seed_010.js"),
    include_str!("../fixtures/seeds/seed_011.js"),
    include_str!("../fixtures/seeds/seed_012.js"),
    include_str!("../fixtures/seeds/seed_013.js"),
    include_str!("../fixtures/seeds/seed_014.js"),
    include_str!("../fixtures/seeds/seed_015.js"),
    include_str!("../fixtures/seeds/seed_016.js"),
    include_str!("../fixtures/seeds/seed_017.js"),
    include_str!("../fixtures/seeds/seed_018.js"),
    include_str!("../fixtures/seeds/seed_019.js"),
];

/// Every recognised key, in the order `--help` and `dump` list them.
pub const KEYS: [&str; 26] = [
    "target",
    "channel",
    "timeout_ms",
    "memory_limit_mb",
    "map_exponent",
    "reward",
    "alpha",
    "iter_cycle",
    "mask_fraction",
    "mask_slots",
    "mix",
    "mutator",
    "error_sample_rate",
    "seed",
    "output",
    "corpus",
    "execs",
    "duration_s",
    "log_base",
    "schedule",
    "top_k",
    "contrastive_alpha",
    "learning_rate",
    "feedback",
    "wall_clock",
    "resume",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// `toy`, `toy-inproc`, or a command line containing `@@`.
    pub target: String,
    pub channel: CoverageChannel,
    pub timeout_ms: u64,
    /// 0 leaves the address space unlimited.
    pub memory_limit_mb: u64,
    pub map_exponent: u32,
    pub reward: RewardScheme,
    pub alpha: f64,
    pub iter_cycle: u64,
    pub mask_fraction: f64,
    pub mask_slots: usize,
    pub mix: StrategyMix,
    /// `mock` or a `host:port` mutator endpoint.
    pub mutator: String,
    pub error_sample_rate: f64,
    pub seed: u64,
    pub output: PathBuf,
    /// Initial seeds; `None` uses the built-in toy seeds.
    pub corpus: Option<PathBuf>,
    /// Execution budget; 0 runs until interrupted or `duration_s` elapses.
    pub execs: u64,
    pub duration_s: u64,
    pub log_base: LogBase,
    pub schedule: EnergyMode,
    pub top_k: u32,
    pub contrastive_alpha: f64,
    /// Mock mutator step size.
    pub learning_rate: f64,
    /// Whether the mock mutator adapts to rewards.
    pub feedback: bool,
    pub wall_clock: bool,
    pub resume: bool,
}

impl Default for Config {
    fn default() -> Self {
        let budget = MaskBudget::default();
        Config {
            target: TOY_TARGET.into(),
            channel: CoverageChannel::EnvFile,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            memory_limit_mb: 0,
            map_exponent: DEFAULT_MAP_EXPONENT,
            reward: RewardScheme::Cwr,
            alpha: DEFAULT_ALPHA,
            iter_cycle: DEFAULT_ITER_CYCLE,
            mask_fraction: budget.fraction,
            mask_slots: budget.max_slots,
            mix: StrategyMix::default(),
            mutator: MOCK_MUTATOR.into(),
            error_sample_rate: DEFAULT_ERROR_SAMPLE_RATE,
            seed: 0,
            output: PathBuf::from(DEFAULT_OUTPUT),
            corpus: None,
            execs: 0,
            duration_s: 0,
            log_base: LogBase::Natural,
            schedule: EnergyMode::Weighted,
            top_k: DEFAULT_TOP_K,
            contrastive_alpha: DEFAULT_CONTRASTIVE_ALPHA,
            learning_rate: DEFAULT_LEARNING_RATE,
            feedback: true,
            wall_clock: true,
            resume: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| CovrlError::config(format!("{key} = {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(CovrlError::config(format!("{key} = {value:?}: expected a boolean"))),
    }
}

impl Config {
    /// Sets one field from its textual form. Keys may use `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        let k = key.as_str();
        match k {
            "target" => self.target = v.to_string(),
            "channel" => self.channel = v.parse()?,
            "timeout_ms" => self.timeout_ms = parse(k, v)?,
            "memory_limit_mb" => self.memory_limit_mb = parse(k, v)?,
            "map_exponent" => self.map_exponent = parse(k, v)?,
            "reward" => self.reward = v.parse()?,
            "alpha" => self.alpha = parse(k, v)?,
            "iter_cycle" => self.iter_cycle = parse(k, v)?,
            "mask_fraction" => self.mask_fraction = parse(k, v)?,
            "mask_slots" => self.mask_slots = parse(k, v)?,
            "mix" => self.mix = v.parse()?,
            "mutator" => self.mutator = v.to_string(),
            "error_sample_rate" => self.error_sample_rate = parse(k, v)?,
            "seed" => self.seed = parse(k, v)?,
            "output" => self.output = PathBuf::from(v),
            "corpus" => self.corpus = (!v.is_empty()).then(|| PathBuf::from(v)),
            "execs" => self.execs = parse(k, v)?,
            "duration_s" => self.duration_s = parse(k, v)?,
            "log_base" => self.log_base = v.parse()?,
            "schedule" => self.schedule = v.parse()?,
            "top_k" => self.top_k = parse(k, v)?,
            "contrastive_alpha" => self.contrastive_alpha = parse(k, v)?,
            "learning_rate" => self.learning_rate = parse(k, v)?,
            "feedback" => self.feedback = parse_bool(k, v)?,
            "wall_clock" => self.wall_clock = parse_bool(k, v)?,
            "resume" => self.resume = parse_bool(k, v)?,
            _ => return Err(CovrlError::config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Textual form of one field, as accepted by [`Config::set`].
    pub fn get(&self, key: &str) -> Option<String> {
        let s = match key.replace('-', "_").as_str() {
            "target" => self.target.clone(),
            "channel" => match self.channel {
                CoverageChannel::EnvFile => "env-file".into(),
                CoverageChannel::SharedRegion => "shared-region".into(),
            },
            "timeout_ms" => self.timeout_ms.to_string(),
            "memory_limit_mb" => self.memory_limit_mb.to_string(),
            "map_exponent" => self.map_exponent.to_string(),
            "reward" => self.reward.to_string(),
            "alpha" => self.alpha.to_string(),
            "iter_cycle" => self.iter_cycle.to_string(),
            "mask_fraction" => self.mask_fraction.to_string(),
            "mask_slots" => self.mask_slots.to_string(),
            "mix" => {
                let [a, b, c] = self.mix.0;
                format!("{a},{b},{c}")
            }
            "mutator" => self.mutator.clone(),
            "error_sample_rate" => self.error_sample_rate.to_string(),
            "seed" => self.seed.to_string(),
            "output" => self.output.display().to_string(),
            "corpus" => self
                .corpus
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "execs" => self.execs.to_string(),
            "duration_s" => self.duration_s.to_string(),
            "log_base" => self.log_base.to_string(),
            "schedule" => match self.schedule {
                EnergyMode::Weighted => "weighted".into(),
                EnergyMode::Uniform => "uniform".into(),
            },
            "top_k" => self.top_k.to_string(),
            "contrastive_alpha" => self.contrastive_alpha.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "feedback" => self.feedback.to_string(),
            "wall_clock" => self.wall_clock.to_string(),
            "resume" => self.resume.to_string(),
            _ => return None,
        };
        Some(s)
    }

    /// All fields as `key = value` lines, readable back by [`Config::apply_text`].
    pub fn dump(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).unwrap_or_default()))
            .collect()
    }

    /// Applies `key = value` lines. Blank lines and lines starting with `#`
    /// are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CovrlError::config(format!("config line {}: expected key = value", n + 1)))?;
            self.set(k, v)
                .map_err(|e| CovrlError::config(format!("config line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Defaults, then the file (if any), then the overrides in order.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Config> {
        let mut cfg = Config::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .map_err(|e| CovrlError::config(format!("config file {}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_exponent(self.map_exponent)?;
        if self.timeout_ms == 0 {
            return Err(CovrlError::config("timeout_ms must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(CovrlError::config("learning_rate must be a nonnegative number"));
        }
        if self.target.trim().is_empty() {
            return Err(CovrlError::config("target is empty"));
        }
        self.fuzz_config().validate()
    }

    pub fn fuzz_config(&self) -> FuzzConfig {
        FuzzConfig {
            scheme: self.reward,
            alpha: self.alpha,
            iter_cycle: self.iter_cycle,
            budget: MaskBudget {
                fraction: self.mask_fraction,
                max_slots: self.mask_slots,
            },
            mix: self.mix,
            error_sample_rate: self.error_sample_rate,
            seed: self.seed,
            log_base: self.log_base,
            schedule: self.schedule,
            decode: DecodeOptions {
                top_k: self.top_k,
                contrastive_alpha: self.contrastive_alpha,
            },
            wall_clock: self.wall_clock,
        }
    }

    /// The spawned-process description of the target; `None` for the
    /// in-process toy.
    pub fn target_config(&self) -> Result<Option<TargetConfig>> {
        let argv = match self.target.trim() {
            TOY_INPROC_TARGET => return Ok(None),
            TOY_TARGET => vec![toy_binary()?.display().to_string(), INPUT_PLACEHOLDER.to_string()],
            cmd => shlex::split(cmd)
                .ok_or_else(|| CovrlError::config(format!("cannot split target command {cmd:?}")))?,
        };
        let tc = TargetConfig {
            argv,
            channel: self.channel,
            timeout_ms: self.timeout_ms,
            map_exponent: self.map_exponent,
            memory_limit_mb: (self.memory_limit_mb > 0).then_some(self.memory_limit_mb),
        };
        tc.validate()?;
        Ok(Some(tc))
    }

    pub fn build_executor(&self) -> Result<Box<dyn Executor>> {
        Ok(match self.target_config()? {
            None => Box::new(InProcessToy::new(self.map_exponent)?),
            Some(tc) => Box::new(ProcessExecutor::new(tc, None)?),
        })
    }

    /// Reads the configured corpus, or the built-in seeds.
    pub fn initial_corpus(&self) -> Result<Vec<(String, Vec<u8>)>> {
        match &self.corpus {
            Some(dir) => crate::fuzzer::read_corpus(dir),
            None => Ok(BUILTIN_SEEDS
                .iter()
                .enumerate()
                .map(|(i, s)| (format!("builtin_{i:03}.js"), s.as_bytes().to_vec()))
                .collect()),
        }
    }

    /// The mock mutator over `corpus`, or a remote endpoint that falls back
    /// to that mock.
    pub fn build_mutator<'a>(&self, corpus: impl IntoIterator<Item = &'a TokenStream>) -> Box<dyn Mutator> {
        let mock = MockMutator::from_corpus(corpus, self.seed, self.feedback)
            .with_learning_rate(self.learning_rate);
        if self.mutator == MOCK_MUTATOR {
            Box::new(mock)
        } else {
            Box::new(ResilientMutator::new(self.mutator.clone(), mock))
        }
    }
}

/// `covrl-toy` next to the running executable.
pub fn toy_binary() -> Result<PathBuf> {
    let exe = std::env::current_exe()?;
    let dir = exe
        .parent()
        .ok_or_else(|| CovrlError::config("cannot locate the executable directory"))?;
    let mut path = dir.join(TOY_BINARY);
    if !path.exists() {
        // Test harnesses run from target/<profile>/deps.
        if let Some(up) = dir.parent() {
            path = up.join(TOY_BINARY);
        }
    }
    if !path.exists() {
        return Err(CovrlError::config(format!("{TOY_BINARY} not found next to {}", exe.display())));
    }
    Ok(path)
}
