//! Hermetic stand-in for the LLM mutator.
//!
//! Fills are 1-4 tokens drawn from a weighted token pool: tokens harvested
//! from the corpus plus a built-in list of JS keywords, punctuators and
//! small literals. Each token is drawn from a mixture of the weighted pool
//! and the corpus bigram successors of the token to its left (scaled by the
//! same weights), so fills loosely follow the corpus' local shape.
//! With adaptation enabled, each finetune call nudges the
//! log-weights along the gradient of the reward-weighted log-likelihood of
//! the recorded fills, so tokens from rewarded fills become more likely and
//! tokens from penalized fills less likely.

use std::collections::{BTreeMap, HashMap};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lexer::{Token, TokenStream};
use super::Mutator;
use crate::error::{CovrlError, Result};
use crate::protocol::{FinetuneReport, FinetuneRequest, InfillRequest};

pub const MOCK_MODEL_ID: &str = "covrl-mock-unigram";

const BUILTIN_TOKENS: &[&str] = &[
    "let", "var", "const", "if", "else", "while", "for", "function", "return", "new", "typeof",
    "await", "async", "class", "this", "true", "false", "null", "undefined", "in", "of", "(", ")",
    "{", "}", "[", "]", ";", ",", ".", "=", "==", "===", "!=", "<", ">", "<=", ">=", "+", "-",
    "*", "/", "%", "!", "&&", "||", "?", ":", "+=", "-=", "++", "--", "0", "1", "2", "3", "10",
    "-1", "\"\"", "\"a\"", "\"%\"", "x", "i", "s", "a",
];

const MAX_LOG_WEIGHT: f64 = 8.0;
/// Probability of drawing from the context-free pool instead of the bigram
/// successors.
pub const POOL_MIX: f64 = 0.2;
/// Candidate fills sampled per slot; the one that best bridges the left and
/// right context under the bigram mixture is kept.
pub const CANDIDATES_PER_SLOT: usize = 8;
/// Score penalty per unbalanced bracket in a candidate fill.
const UNBALANCED_PENALTY: f64 = 2.0;
const MAX_FILL_LEN: usize = 4;
pub const DEFAULT_LEARNING_RATE: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct MockMutator {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    log_weights: Vec<f64>,
    /// Corpus successor counts per pool entry.
    follow: Vec<Vec<(usize, f64)>>,
    dist: Option<WeightedIndex<f64>>,
    rng: ChaCha8Rng,
    adaptive: bool,
    learning_rate: f64,
}

#[derive(Serialize, Deserialize)]
struct MockState {
    log_weights: Vec<f64>,
    rng_seed: String,
    rng_word_pos: String,
}

impl MockMutator {
    /// Builds the pool from corpus tokens (first-seen order) followed by the
    /// built-in tokens not already present. The tokens are read as one
    /// stream for successor counts.
    pub fn new<I, S>(corpus_tokens: I, seed: u64, adaptive: bool) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let stream: Vec<String> = corpus_tokens.into_iter().map(Into::into).collect();
        MockMutator::build(&[stream], seed, adaptive)
    }

    /// Pool and successor counts harvested from token streams (e.g. the
    /// initial corpus).
    pub fn from_corpus<'a>(corpus: impl IntoIterator<Item = &'a TokenStream>, seed: u64, adaptive: bool) -> Self {
        let streams: Vec<Vec<String>> = corpus.into_iter().map(|ts| ts.texts()).collect();
        MockMutator::build(&streams, seed, adaptive)
    }

    fn build(streams: &[Vec<String>], seed: u64, adaptive: bool) -> Self {
        let usable = |t: &str| !t.is_empty() && super::lexer::sentinel_index(t).is_none();
        let mut vocab = Vec::new();
        let mut index = HashMap::new();
        let builtin = BUILTIN_TOKENS.iter().map(|s| s.to_string());
        for tok in streams.iter().flatten().cloned().chain(builtin) {
            if usable(&tok) && !index.contains_key(&tok) {
                index.insert(tok.clone(), vocab.len());
                vocab.push(tok);
            }
        }
        let mut counts: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); vocab.len()];
        for stream in streams {
            for pair in stream.windows(2) {
                if let (Some(&a), Some(&b)) = (index.get(&pair[0]), index.get(&pair[1])) {
                    *counts[a].entry(b).or_insert(0.0) += 1.0;
                }
            }
        }
        let follow = counts.into_iter().map(|m| m.into_iter().collect()).collect();
        let log_weights = vec![0.0; vocab.len()];
        MockMutator {
            vocab,
            index,
            log_weights,
            follow,
            dist: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            adaptive,
            learning_rate: DEFAULT_LEARNING_RATE,
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn is_adaptive(&self) -> bool {
        self.adaptive
    }

    /// Sampling probability of each pool entry.
    pub fn probabilities(&self) -> Vec<f64> {
        let max = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    pub fn probability_of(&self, token: &str) -> Option<f64> {
        self.index.get(token).map(|&i| self.probabilities()[i])
    }

    /// Multiplies one token's sampling weight by `factor`.
    pub fn scale_weight(&mut self, token: &str, factor: f64) -> Result<()> {
        let &i = self
            .index
            .get(token)
            .ok_or_else(|| CovrlError::config(format!("token {token:?} not in mock pool")))?;
        if !(factor.is_finite() && factor > 0.0) {
            return Err(CovrlError::config(format!("weight factor {factor} must be positive")));
        }
        self.log_weights[i] += factor.ln();
        self.dist = None;
        Ok(())
    }

    fn distribution(&mut self) -> &WeightedIndex<f64> {
        if self.dist.is_none() {
            let probs = self.probabilities();
            self.dist = Some(WeightedIndex::new(probs).expect("nonempty pool with positive weights"));
        }
        self.dist.as_ref().unwrap()
    }

    /// Distribution of the next token after `prev` (`None` for no usable
    /// left context).
    pub fn next_token_distribution(&self, prev: Option<&str>) -> Vec<f64> {
        let pool = self.probabilities();
        let followers = prev
            .and_then(|p| self.index.get(p))
            .map(|&i| &self.follow[i][..])
            .unwrap_or(&[]);
        if followers.is_empty() {
            return pool;
        }
        let mut out: Vec<f64> = pool.iter().map(|p| POOL_MIX * p).collect();
        let w: Vec<f64> = followers.iter().map(|&(j, c)| c * pool[j]).collect();
        let total: f64 = w.iter().sum();
        for (&(j, _), wj) in followers.iter().zip(w) {
            out[j] += (1.0 - POOL_MIX) * wj / total;
        }
        out
    }

    fn sample_after(&mut self, prev: Option<usize>) -> usize {
        let followers = prev.map(|p| &self.follow[p][..]).unwrap_or(&[]);
        if followers.is_empty() || self.rng.gen::<f64>() < POOL_MIX {
            let dist = self.distribution().clone();
            return dist.sample(&mut self.rng);
        }
        let max = followers
            .iter()
            .map(|&(j, _)| self.log_weights[j])
            .fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = followers
            .iter()
            .map(|&(j, c)| c * (self.log_weights[j] - max).exp())
            .collect();
        let pick = WeightedIndex::new(&w).expect("positive successor weights");
        followers[pick.sample(&mut self.rng)].0
    }

    /// One fill per slot, each 1-4 tokens, without context.
    pub fn mock_fill(&mut self, slots: usize) -> Vec<Vec<Token>> {
        let ctx = vec![(None, None); slots];
        ctx.iter().map(|&c| self.fill_one(c, 1)).collect()
    }

    /// Fills every sentinel of `masked`, in slot order, using the tokens on
    /// either side of each sentinel as context.
    pub fn fill_masked(&mut self, masked: &[String], slots: usize) -> Vec<Vec<Token>> {
        let mut ctx = vec![(None, None); slots];
        for (pos, t) in masked.iter().enumerate() {
            if let Some(k) = super::lexer::sentinel_index(t).filter(|&k| k < slots) {
                let at = |p: Option<usize>| p.and_then(|p| masked.get(p)).and_then(|t| self.index.get(t)).copied();
                ctx[k] = (at(pos.checked_sub(1)), at(Some(pos + 1)));
            }
        }
        ctx.iter()
            .map(|&c| self.fill_one(c, CANDIDATES_PER_SLOT))
            .collect()
    }

    fn fill_one(&mut self, (left, right): (Option<usize>, Option<usize>), candidates: usize) -> Vec<Token> {
        let norm = self.log_norm();
        let mut best: Option<(f64, Vec<usize>)> = None;
        for _ in 0..candidates {
            let len = self.rng.gen_range(1..=MAX_FILL_LEN);
            let mut prev = left;
            let mut fill = Vec::with_capacity(len);
            for _ in 0..len {
                let i = self.sample_after(prev);
                fill.push(i);
                prev = Some(i);
            }
            if candidates == 1 {
                best = Some((0.0, fill));
                break;
            }
            let score = self.bridge_score(left, &fill, right, norm) - UNBALANCED_PENALTY * self.unbalanced(&fill) as f64;
            if best.as_ref().map_or(true, |(b, _)| score > *b) {
                best = Some((score, fill));
            }
        }
        best.expect("at least one candidate")
            .1
            .into_iter()
            .map(|i| super::lexer::classify_text(&self.vocab[i]))
            .collect()
    }

    fn unbalanced(&self, fill: &[usize]) -> usize {
        let mut stack = Vec::new();
        let mut bad = 0;
        for &i in fill {
            match self.vocab[i].as_str() {
                "(" => stack.push(')'),
                "[" => stack.push(']'),
                "{" => stack.push('}'),
                c @ (")" | "]" | "}") => {
                    if stack.pop() != c.chars().next() {
                        bad += 1;
                    }
                }
                _ => {}
            }
        }
        bad + stack.len()
    }

    /// Mean log-probability of the transitions left -> fill -> right.
    fn bridge_score(&self, left: Option<usize>, fill: &[usize], right: Option<usize>, norm: f64) -> f64 {
        let mut total = 0.0;
        let mut n = 0;
        let mut prev = left;
        for &t in fill.iter().chain(right.iter()) {
            if let Some(p) = prev {
                total += self.transition_log_prob(p, t, norm);
                n += 1;
            }
            prev = Some(t);
        }
        if n == 0 {
            0.0
        } else {
            total / n as f64
        }
    }

    fn transition_log_prob(&self, prev: usize, next: usize, norm: f64) -> f64 {
        let pool = (self.log_weights[next] - norm).exp();
        let followers = &self.follow[prev];
        if followers.is_empty() {
            return pool.ln();
        }
        let mass: f64 = followers.iter().map(|&(j, c)| c * self.log_weights[j].exp()).sum();
        let count = followers
            .binary_search_by_key(&next, |&(j, _)| j)
            .map_or(0.0, |k| followers[k].1);
        (POOL_MIX * pool + (1.0 - POOL_MIX) * count * self.log_weights[next].exp() / mass).ln()
    }

    fn log_prob(&self, token: &str, log_norm: f64) -> Option<f64> {
        self.index.get(token).map(|&i| self.log_weights[i] - log_norm)
    }

    fn log_norm(&self) -> f64 {
        let max = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max + self.log_weights.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
    }

    /// Reward-weighted negative mean log-probability of the fills.
    fn objective(&self, req: &FinetuneRequest) -> f64 {
        if req.records.is_empty() {
            return 0.0;
        }
        let norm = self.log_norm();
        let mut total = 0.0;
        for rec in &req.records {
            let lps: Vec<f64> = rec
                .fill_tokens
                .iter()
                .flatten()
                .filter_map(|t| self.log_prob(t, norm))
                .collect();
            if !lps.is_empty() {
                total -= rec.reward * lps.iter().sum::<f64>() / lps.len() as f64;
            }
        }
        total / req.records.len() as f64
    }

    /// One gradient step on the reward-weighted log-likelihood of the fill
    /// tokens under the context-free pool: for every record, each pool
    /// entry j moves by `reward * (share of j in the fill - p_j)`, averaged
    /// over the batch.
    fn update(&mut self, req: &FinetuneRequest) {
        if req.records.is_empty() {
            return;
        }
        let probs = self.probabilities();
        let mut delta = vec![0.0; self.vocab.len()];
        let mut used = 0usize;
        for rec in &req.records {
            let toks: Vec<usize> = rec
                .fill_tokens
                .iter()
                .flatten()
                .filter_map(|t| self.index.get(t).copied())
                .collect();
            if toks.is_empty() {
                continue;
            }
            used += 1;
            let share = rec.reward / toks.len() as f64;
            for i in toks {
                delta[i] += share;
            }
            for (d, p) in delta.iter_mut().zip(&probs) {
                *d -= rec.reward * p;
            }
        }
        if used == 0 {
            return;
        }
        let step = self.learning_rate / used as f64;
        for (lw, d) in self.log_weights.iter_mut().zip(delta) {
            *lw = (*lw + step * d).clamp(-MAX_LOG_WEIGHT, MAX_LOG_WEIGHT);
        }
        self.dist = None;
    }
}

impl Mutator for MockMutator {
    fn infill(&mut self, req: &InfillRequest) -> Result<Vec<Vec<String>>> {
        Ok(self
            .fill_masked(&req.masked_tokens, req.slots)
            .into_iter()
            .map(|f| f.into_iter().map(|t| t.text).collect())
            .collect())
    }

    fn finetune(&mut self, req: &FinetuneRequest) -> Result<FinetuneReport> {
        let loss_before = self.objective(req);
        if self.adaptive {
            for _ in 0..req.epochs.max(1) {
                self.update(req);
            }
        }
        Ok(FinetuneReport {
            cycle: req.cycle,
            loss_before,
            loss_after: self.objective(req),
        })
    }

    fn ping(&mut self) -> Result<String> {
        Ok(MOCK_MODEL_ID.to_string())
    }

    fn save_state(&self) -> Option<serde_json::Value> {
        let state = MockState {
            log_weights: self.log_weights.clone(),
            rng_seed: hex(&self.rng.get_seed()),
            rng_word_pos: self.rng.get_word_pos().to_string(),
        };
        serde_json::to_value(state).ok()
    }

    fn restore_state(&mut self, state: &serde_json::Value) -> Result<()> {
        let state: MockState = serde_json::from_value(state.clone())?;
        if state.log_weights.len() != self.vocab.len() {
            return Err(CovrlError::CorruptState(format!(
                "mock pool has {} tokens, checkpoint has {}",
                self.vocab.len(),
                state.log_weights.len()
            )));
        }
        self.log_weights = state.log_weights;
        self.rng = restore_rng(&state.rng_seed, &state.rng_word_pos)?;
        self.dist = None;
        Ok(())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Rebuilds a ChaCha stream from its seed and word position.
pub(crate) fn restore_rng(seed_hex: &str, word_pos: &str) -> Result<ChaCha8Rng> {
    let bad = || CovrlError::CorruptState("bad rng state".into());
    if seed_hex.len() != 64 {
        return Err(bad());
    }
    let mut seed = [0u8; 32];
    for (i, b) in seed.iter_mut().enumerate() {
        *b = u8::from_str_radix(&seed_hex[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_word_pos(word_pos.parse::<u128>().map_err(|_| bad())?);
    Ok(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{DecodeOptions, FinetuneRecord};

    fn req(slots: usize) -> InfillRequest {
        InfillRequest {
            id: 1,
            masked_tokens: vec!["a".into(), "=".into(), "<extra_id_0>".into()],
            slots,
            decode: DecodeOptions::default(),
        }
    }

    #[test]
    fn empty_corpus_uses_builtin_pool() {
        let m = MockMutator::new(Vec::<String>::new(), 1, true);
        assert_eq!(m.vocab().len(), BUILTIN_TOKENS.len());
    }

    #[test]
    fn seeded_fills_are_deterministic() {
        let mut a = MockMutator::new(["foo", "bar"], 42, false);
        let mut b = MockMutator::new(["foo", "bar"], 42, false);
        for _ in 0..20 {
            let fa = a.infill(&req(3)).unwrap();
            assert_eq!(fa, b.infill(&req(3)).unwrap());
            assert_eq!(fa.len(), 3);
            assert!(fa.iter().all(|f| (1..=4).contains(&f.len())));
        }
    }

    #[test]
    fn finetune_moves_weights_by_reward_sign() {
        let mut m = MockMutator::new(Vec::<String>::new(), 3, true);
        let p_await = m.probability_of("await").unwrap();
        let p_class = m.probability_of("class").unwrap();
        let ft = FinetuneRequest {
            cycle: 1,
            records: vec![
                FinetuneRecord {
                    masked_tokens: vec![],
                    fill_tokens: vec![vec!["await".into()]],
                    reward: 0.9,
                },
                FinetuneRecord {
                    masked_tokens: vec![],
                    fill_tokens: vec![vec!["class".into()]],
                    reward: -1.0,
                },
            ],
            epochs: 1,
        };
        let report = m.finetune(&ft).unwrap();
        assert!(m.probability_of("await").unwrap() > p_await);
        assert!(m.probability_of("class").unwrap() < p_class);
        assert!(report.loss_after <= report.loss_before);
    }

    #[test]
    fn non_adaptive_finetune_is_inert() {
        let mut m = MockMutator::new(Vec::<String>::new(), 3, false);
        let before = m.probabilities();
        let ft = FinetuneRequest {
            cycle: 1,
            records: vec![FinetuneRecord {
                masked_tokens: vec![],
                fill_tokens: vec![vec!["await".into()]],
                reward: 1.0,
            }],
            epochs: 1,
        };
        let r = m.finetune(&ft).unwrap();
        assert_eq!(r.loss_before, r.loss_after);
        assert_eq!(before, m.probabilities());
    }

    #[test]
    fn state_restores_stream() {
        let mut a = MockMutator::new(["x"], 5, true);
        a.scale_weight("x", 3.0).unwrap();
        a.infill(&req(2)).unwrap();
        let saved = a.save_state().unwrap();
        let mut b = MockMutator::new(["x"], 99, true);
        b.restore_state(&saved).unwrap();
        assert_eq!(a.infill(&req(4)).unwrap(), b.infill(&req(4)).unwrap());
    }
}
