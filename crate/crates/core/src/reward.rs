//! Execution outcomes and the reward functions fed back to the mutator.
//!
//! Syntax and semantic errors receive fixed penalties. A passing case is
//! scored from its coverage, either by coverage-weighted rewarding (CWR:
//! sigmoid of the log of the inverse-frequency-weighted edge sum, with a
//! +0.5 floor) or by one of the baselines (coverage rate, binary new-coverage).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coverage::{CoverageMap, LogBase, VirginMap, WeightMap};
use crate::error::CovrlError;

pub const SYNTAX_PENALTY: f64 = -1.0;
pub const SEMANTIC_PENALTY: f64 = -0.5;
pub const FLOOR_REWARD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SemanticKind {
    Type,
    Reference,
    Range,
    Uri,
    Internal,
}

impl SemanticKind {
    pub fn name(self) -> &'static str {
        match self {
            SemanticKind::Type => "type",
            SemanticKind::Reference => "reference",
            SemanticKind::Range => "range",
            SemanticKind::Uri => "uri",
            SemanticKind::Internal => "internal",
        }
    }
}

/// Classification of one execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    SyntaxError,
    SemanticError(SemanticKind),
    Pass,
    Crash { signal: i32 },
    Timeout,
}

impl Outcome {
    pub fn is_error(self) -> bool {
        matches!(self, Outcome::SyntaxError | Outcome::SemanticError(_))
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::SyntaxError => f.write_str("syntax_error"),
            Outcome::SemanticError(kind) => write!(f, "semantic_error:{}", kind.name()),
            Outcome::Pass => f.write_str("pass"),
            Outcome::Crash { signal } => write!(f, "crash:{signal}"),
            Outcome::Timeout => f.write_str("timeout"),
        }
    }
}

impl FromStr for Outcome {
    type Err = CovrlError;

    fn from_str(s: &str) -> Result<Self, CovrlError> {
        let bad = || CovrlError::config(format!("unknown outcome {s:?}"));
        Ok(match s {
            "syntax_error" => Outcome::SyntaxError,
            "pass" => Outcome::Pass,
            "timeout" => Outcome::Timeout,
            _ => {
                if let Some(kind) = s.strip_prefix("semantic_error:") {
                    let kind = match kind {
                        "type" => SemanticKind::Type,
                        "reference" => SemanticKind::Reference,
                        "range" => SemanticKind::Range,
                        "uri" => SemanticKind::Uri,
                        "internal" => SemanticKind::Internal,
                        _ => return Err(bad()),
                    };
                    Outcome::SemanticError(kind)
                } else if let Some(sig) = s.strip_prefix("crash:") {
                    Outcome::Crash {
                        signal: sig.parse().map_err(|_| bad())?,
                    }
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

impl Serialize for Outcome {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Outcome {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSource {
    SyntaxPenalty,
    SemanticPenalty,
    Floor,
    Weighted,
    CrrRatio,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reward {
    pub value: f64,
    pub source: RewardSource,
}

impl Reward {
    fn new(value: f64, source: RewardSource) -> Self {
        Reward { value, source }
    }
}

/// Which coverage reward scores passing cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RewardScheme {
    /// Coverage-weighted rewarding.
    #[default]
    Cwr,
    /// Coverage-rate rewarding: covered / total accumulated.
    Crr,
    /// 1 for new coverage, 0 otherwise.
    CrBinary,
}

impl FromStr for RewardScheme {
    type Err = CovrlError;

    fn from_str(s: &str) -> Result<Self, CovrlError> {
        match s.to_ascii_lowercase().as_str() {
            "cwr" => Ok(RewardScheme::Cwr),
            "crr" => Ok(RewardScheme::Crr),
            "cr-binary" | "cr" | "binary" => Ok(RewardScheme::CrBinary),
            other => Err(CovrlError::config(format!("unknown reward scheme {other:?}"))),
        }
    }
}

impl fmt::Display for RewardScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardScheme::Cwr => "cwr",
            RewardScheme::Crr => "crr",
            RewardScheme::CrBinary => "cr-binary",
        })
    }
}

/// Intermediate values of a CWR evaluation, exposed for debugging tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwrBreakdown {
    /// Weighted sum of idf over the case's unique edges.
    pub sum: f64,
    /// `log(sum)`, or negative infinity when the sum is not positive.
    pub r_tfidf: f64,
    pub reward: Reward,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Sum of `idf[i]` over the given unique edges (tf is the 0/1 indicator).
pub fn tfidf_sum(edges: &[u32], weights: &WeightMap) -> f64 {
    let idf = weights.idf();
    edges.iter().map(|&e| idf[e as usize]).sum()
}

/// Scores a sum of weights: sigmoid of its log when the log is positive,
/// otherwise the floor.
pub fn normalize_sum(sum: f64, base: LogBase) -> CwrBreakdown {
    let r_tfidf = if sum > 0.0 {
        base.log(sum)
    } else {
        f64::NEG_INFINITY
    };
    let reward = if r_tfidf > 0.0 {
        Reward::new(sigmoid(r_tfidf), RewardSource::Weighted)
    } else {
        Reward::new(FLOOR_REWARD, RewardSource::Floor)
    };
    CwrBreakdown {
        sum,
        r_tfidf,
        reward,
    }
}

/// Coverage-weighted reward of one passing execution against the previous
/// cycle's weights.
pub fn cwr_breakdown(cov: &CoverageMap, weights: &WeightMap, base: LogBase) -> CwrBreakdown {
    normalize_sum(tfidf_sum(&cov.unique_coverage(), weights), base)
}

pub fn cwr_reward(cov: &CoverageMap, weights: &WeightMap) -> Reward {
    cwr_breakdown(cov, weights, LogBase::Natural).reward
}

/// Coverage-rate reward: `|unique(cov)| / N`. The virgin map must already
/// include `cov`.
pub fn crr_reward(cov: &CoverageMap, virgin: &VirginMap) -> Reward {
    crr_from_count(cov.unique_coverage().len(), virgin)
}

fn crr_from_count(covered: usize, virgin: &VirginMap) -> Reward {
    let n = virgin.unique_count();
    if n == 0 {
        log::warn!("coverage-rate reward requested before any coverage was accumulated");
        return Reward::new(0.0, RewardSource::CrrRatio);
    }
    Reward::new(covered as f64 / n as f64, RewardSource::CrrRatio)
}

fn penalty(outcome: Outcome) -> Option<Reward> {
    match outcome {
        Outcome::SyntaxError => Some(Reward::new(SYNTAX_PENALTY, RewardSource::SyntaxPenalty)),
        Outcome::SemanticError(_) => {
            Some(Reward::new(SEMANTIC_PENALTY, RewardSource::SemanticPenalty))
        }
        _ => None,
    }
}

/// Reward for one execution under CWR. Crashes and timeouts are scored as
/// passes; the caller decides whether they enter the training set.
pub fn dispatch_reward(
    outcome: Outcome,
    cov: &CoverageMap,
    weights: &WeightMap,
    _virgin: &VirginMap,
) -> Reward {
    penalty(outcome).unwrap_or_else(|| cwr_reward(cov, weights))
}

/// Everything needed to score one execution under any scheme.
#[derive(Debug, Clone, Copy)]
pub struct RewardContext<'a> {
    pub weights: &'a WeightMap,
    pub virgin: &'a VirginMap,
    pub base: LogBase,
}

impl RewardScheme {
    /// `edges` is the case's unique coverage; `new_coverage` says whether it
    /// set any virgin bit (only the binary scheme looks at it).
    pub fn score(
        self,
        outcome: Outcome,
        edges: &[u32],
        new_coverage: bool,
        ctx: RewardContext<'_>,
    ) -> Reward {
        if let Some(p) = penalty(outcome) {
            return p;
        }
        match self {
            RewardScheme::Cwr => normalize_sum(tfidf_sum(edges, ctx.weights), ctx.base).reward,
            RewardScheme::Crr => crr_from_count(edges.len(), ctx.virgin),
            RewardScheme::CrBinary => Reward::new(
                if new_coverage { 1.0 } else { 0.0 },
                RewardSource::Binary,
            ),
        }
    }
}

/// How a child process ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitDescriptor {
    Code(i32),
    Signal(i32),
}

/// Error-name patterns searched for in stderr, with the outcome each maps to.
#[derive(Debug, Clone)]
pub struct ErrorPatterns {
    patterns: Vec<(String, Outcome)>,
}

impl Default for ErrorPatterns {
    fn default() -> Self {
        let table = [
            ("SyntaxError", Outcome::SyntaxError),
            ("TypeError", Outcome::SemanticError(SemanticKind::Type)),
            ("ReferenceError", Outcome::SemanticError(SemanticKind::Reference)),
            ("RangeError", Outcome::SemanticError(SemanticKind::Range)),
            ("URIError", Outcome::SemanticError(SemanticKind::Uri)),
            ("InternalError", Outcome::SemanticError(SemanticKind::Internal)),
        ];
        ErrorPatterns {
            patterns: table
                .into_iter()
                .map(|(p, o)| (p.to_string(), o))
                .collect(),
        }
    }
}

impl ErrorPatterns {
    pub fn new(patterns: Vec<(String, Outcome)>) -> Self {
        ErrorPatterns { patterns }
    }

    /// The pattern that occurs earliest in `text`; ties go to list order.
    fn first_match(&self, text: &str) -> Option<Outcome> {
        self.patterns
            .iter()
            .filter_map(|(p, o)| text.find(p.as_str()).map(|pos| (pos, *o)))
            .min_by_key(|(pos, _)| *pos)
            .map(|(_, o)| o)
    }

    pub fn classify(&self, stderr: &[u8], exit: ExitDescriptor) -> Outcome {
        if let ExitDescriptor::Signal(signal) = exit {
            return Outcome::Crash { signal };
        }
        let text = String::from_utf8_lossy(stderr);
        match (self.first_match(&text), exit) {
            (Some(outcome), _) => outcome,
            (None, ExitDescriptor::Code(0)) => Outcome::Pass,
            (None, _) => Outcome::SemanticError(SemanticKind::Internal),
        }
    }
}

pub fn classify_stderr(stderr: &[u8], exit: ExitDescriptor) -> Outcome {
    ErrorPatterns::default().classify(stderr, exit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maps(exponent: u32) -> (CoverageMap, WeightMap, VirginMap) {
        (
            CoverageMap::new(exponent).unwrap(),
            WeightMap::new(exponent).unwrap(),
            VirginMap::new(exponent).unwrap(),
        )
    }

    #[test]
    fn penalties() {
        let (cov, w, v) = maps(8);
        assert_eq!(dispatch_reward(Outcome::SyntaxError, &cov, &w, &v).value, -1.0);
        let sem = dispatch_reward(
            Outcome::SemanticError(SemanticKind::Type),
            &cov,
            &w,
            &v,
        );
        assert_eq!(sem.value, -0.5);
        assert_eq!(sem.source, RewardSource::SemanticPenalty);
    }

    #[test]
    fn zero_weights_fall_to_floor() {
        let (mut cov, w, v) = maps(8);
        cov.hit(3);
        let r = dispatch_reward(Outcome::Pass, &cov, &w, &v);
        assert_eq!(r, Reward::new(0.5, RewardSource::Floor));
    }

    #[test]
    fn boundary_sum_of_one_is_floor() {
        let b = normalize_sum(1.0, LogBase::Natural);
        assert_eq!(b.r_tfidf, 0.0);
        assert_eq!(b.reward.source, RewardSource::Floor);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn small_positive_sum_is_floor() {
        let b = normalize_sum(0.0866 * 2.0, LogBase::Natural);
        assert!(b.r_tfidf < 0.0);
        assert_eq!(b.reward.value, 0.5);
        let neg = normalize_sum(-3.0, LogBase::Natural);
        assert_eq!(neg.r_tfidf, f64::NEG_INFINITY);
        assert_eq!(neg.reward.source, RewardSource::Floor);
    }

    #[test]
    fn weighted_reward_above_floor() {
        let b = normalize_sum(std::f64::consts::E, LogBase::Natural);
        assert_eq!(b.reward.source, RewardSource::Weighted);
        assert!((b.reward.value - sigmoid(1.0)).abs() < 1e-15);
        assert!(b.reward.value > 0.5 && b.reward.value < 1.0);
    }

    #[test]
    fn crr_ratio_and_uninitialized() {
        let (mut cov, _, mut v) = maps(8);
        assert_eq!(crr_reward(&cov, &v).value, 0.0);
        for e in 0..5 {
            cov.hit(e);
        }
        let mut all = CoverageMap::new(8).unwrap();
        for e in 0..100 {
            all.hit(e);
        }
        v.accumulate(&all).unwrap();
        assert_eq!(crr_reward(&cov, &v).value, 0.05);
        assert_eq!(crr_reward(&all, &v).value, 1.0);
    }

    #[test]
    fn scheme_penalties_agree() {
        let (_, w, v) = maps(8);
        let ctx = RewardContext {
            weights: &w,
            virgin: &v,
            base: LogBase::Natural,
        };
        for scheme in [RewardScheme::Cwr, RewardScheme::Crr, RewardScheme::CrBinary] {
            assert_eq!(scheme.score(Outcome::SyntaxError, &[1], true, ctx).value, -1.0);
            assert_eq!(
                scheme
                    .score(Outcome::SemanticError(SemanticKind::Uri), &[1], true, ctx)
                    .value,
                -0.5
            );
        }
        assert_eq!(
            RewardScheme::CrBinary.score(Outcome::Pass, &[1], true, ctx).value,
            1.0
        );
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            classify_stderr(b"SyntaxError: Unexpected token", ExitDescriptor::Code(1)),
            Outcome::SyntaxError
        );
        assert_eq!(classify_stderr(b"", ExitDescriptor::Code(0)), Outcome::Pass);
        assert_eq!(
            classify_stderr(b"", ExitDescriptor::Signal(libc::SIGSEGV)),
            Outcome::Crash {
                signal: libc::SIGSEGV
            }
        );
        assert_eq!(
            classify_stderr(b"boom", ExitDescriptor::Code(3)),
            Outcome::SemanticError(SemanticKind::Internal)
        );
        assert_eq!(
            classify_stderr(
                b"URIError: malformed (not a TypeError)",
                ExitDescriptor::Code(1)
            ),
            Outcome::SemanticError(SemanticKind::Uri)
        );
    }

    #[test]
    fn outcome_text_round_trip() {
        let all = [
            Outcome::SyntaxError,
            Outcome::SemanticError(SemanticKind::Reference),
            Outcome::Pass,
            Outcome::Crash { signal: 6 },
            Outcome::Timeout,
        ];
        for o in all {
            assert_eq!(o.to_string().parse::<Outcome>().unwrap(), o);
        }
        assert!("crash:x".parse::<Outcome>().is_err());
    }
}
