//! Masking strategies: insert sentinels, overwrite spans, or splice a donor
//! statement between two sentinels.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use super::lexer::{Token, TokenStream};
use crate::error::{CovrlError, Result};

pub type SeedId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Insert,
    Overwrite,
    Splice,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Insert, Strategy::Overwrite, Strategy::Splice];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Insert => "insert",
            Strategy::Overwrite => "overwrite",
            Strategy::Splice => "splice",
        })
    }
}

/// A token stream with numbered mask slots, plus where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedCase {
    pub masked: TokenStream,
    pub slots: usize,
    pub strategy: Strategy,
    pub seed_id: SeedId,
    pub donor_id: Option<SeedId>,
}

/// How much of a case to mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskBudget {
    /// Expected fraction of positions selected.
    pub fraction: f64,
    pub max_slots: usize,
}

impl Default for MaskBudget {
    fn default() -> Self {
        MaskBudget {
            fraction: 0.15,
            max_slots: 8,
        }
    }
}

/// Relative weights of Insert / Overwrite / Splice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyMix(pub [f64; 3]);

impl Default for StrategyMix {
    fn default() -> Self {
        StrategyMix([1.0, 1.0, 1.0])
    }
}

impl StrategyMix {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|w| !w.is_finite() || *w < 0.0) || self.0.iter().sum::<f64>() <= 0.0 {
            return Err(CovrlError::config(format!(
                "strategy mix {:?} must be nonnegative with a positive sum",
                self.0
            )));
        }
        Ok(())
    }

    pub fn choose<R: Rng + ?Sized>(&self, rng: &mut R) -> Strategy {
        let dist = WeightedIndex::new(self.0).expect("validated strategy mix");
        Strategy::ALL[dist.sample(rng)]
    }
}

impl FromStr for StrategyMix {
    type Err = CovrlError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| CovrlError::config(format!("strategy mix {s:?}: {e}")))?;
        let weights: [f64; 3] = parts
            .try_into()
            .map_err(|_| CovrlError::config(format!("strategy mix {s:?} needs 3 weights")))?;
        let mix = StrategyMix(weights);
        mix.validate()?;
        Ok(mix)
    }
}

impl fmt::Display for StrategyMix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.0[0], self.0[1], self.0[2])
    }
}

/// Puts a sentinel before each selected position (`len` means "at the end").
pub fn mask_insert(ts: &TokenStream, positions: &BTreeSet<usize>, seed_id: SeedId) -> MaskedCase {
    let mut out = Vec::with_capacity(ts.len() + positions.len());
    let mut slot = 0;
    for (i, tok) in ts.tokens().iter().enumerate() {
        if positions.contains(&i) {
            out.push(Token::sentinel(slot));
            slot += 1;
        }
        out.push(tok.clone());
    }
    if positions.contains(&ts.len()) {
        out.push(Token::sentinel(slot));
        slot += 1;
    }
    MaskedCase {
        masked: TokenStream::new(out),
        slots: slot,
        strategy: Strategy::Insert,
        seed_id,
        donor_id: None,
    }
}

/// Replaces each maximal run of selected positions with one sentinel.
pub fn mask_overwrite(
    ts: &TokenStream,
    positions: &BTreeSet<usize>,
    seed_id: SeedId,
) -> MaskedCase {
    let mut out = Vec::with_capacity(ts.len());
    let mut slot = 0;
    let mut in_run = false;
    for (i, tok) in ts.tokens().iter().enumerate() {
        if positions.contains(&i) {
            if !in_run {
                out.push(Token::sentinel(slot));
                slot += 1;
                in_run = true;
            }
        } else {
            in_run = false;
            out.push(tok.clone());
        }
    }
    MaskedCase {
        masked: TokenStream::new(out),
        slots: slot,
        strategy: Strategy::Overwrite,
        seed_id,
        donor_id: None,
    }
}

/// Token offsets where top-level statements start, always including 0 and
/// `len`. A statement ends after `;` or `}` outside any brace, paren, or
/// bracket nesting.
pub fn statement_boundaries(ts: &TokenStream) -> Vec<usize> {
    let mut bounds = vec![0];
    let mut depth: i64 = 0;
    for (i, tok) in ts.tokens().iter().enumerate() {
        match tok.text.as_str() {
            "{" | "(" | "[" => depth += 1,
            "}" | ")" | "]" => depth = (depth - 1).max(0),
            _ => {}
        }
        let ends = matches!(tok.text.as_str(), ";" | "}") && depth == 0;
        if ends && i + 1 < ts.len() {
            bounds.push(i + 1);
        }
    }
    if ts.len() > 0 {
        bounds.push(ts.len());
    }
    bounds.dedup();
    bounds
}

/// Replaces one top-level statement of `target` with
/// `<m0> donor-statements <m1>`. Targets with a single statement fall back
/// to overwriting a random run.
pub fn mask_splice<R: Rng + ?Sized>(
    target: &TokenStream,
    donor: &TokenStream,
    rng: &mut R,
    seed_id: SeedId,
    donor_id: SeedId,
) -> MaskedCase {
    let tb = statement_boundaries(target);
    if tb.len() < 3 {
        return overwrite_random_run(target, rng, seed_id);
    }
    let seg = rng.gen_range(0..tb.len() - 1);
    let (cut_start, cut_end) = (tb[seg], tb[seg + 1]);

    let db = statement_boundaries(donor);
    let donor_segments = db.len().saturating_sub(1).max(1);
    let d_first = rng.gen_range(0..donor_segments);
    let d_run = rng.gen_range(1..=2usize.min(donor_segments - d_first));
    let (d_start, d_end) = if db.len() >= 2 {
        (db[d_first], db[d_first + d_run])
    } else {
        (0, donor.len())
    };

    let t = target.tokens();
    let mut out = Vec::with_capacity(t.len() + donor.len() + 2);
    out.extend_from_slice(&t[..cut_start]);
    out.push(Token::sentinel(0));
    out.extend_from_slice(&donor.tokens()[d_start..d_end]);
    out.push(Token::sentinel(1));
    out.extend_from_slice(&t[cut_end..]);
    MaskedCase {
        masked: TokenStream::new(out),
        slots: 2,
        strategy: Strategy::Splice,
        seed_id,
        donor_id: Some(donor_id),
    }
}

fn overwrite_random_run<R: Rng + ?Sized>(ts: &TokenStream, rng: &mut R, seed_id: SeedId) -> MaskedCase {
    if ts.is_empty() {
        return mask_insert(ts, &BTreeSet::from([0]), seed_id);
    }
    let start = rng.gen_range(0..ts.len());
    let len = rng.gen_range(1..=3usize.min(ts.len() - start));
    let positions: BTreeSet<usize> = (start..start + len).collect();
    mask_overwrite(ts, &positions, seed_id)
}

/// Mean length of an overwritten span.
pub const MEAN_SPAN: f64 = 3.0;

/// Draws mask positions as spans, so that the expected number of masked
/// tokens is `budget.fraction * domain` with spans of mean length
/// [`MEAN_SPAN`]. Insertion points (`collapse_runs == false`) are single
/// positions, one per span. At least one and at most `budget.max_slots`
/// slots.
pub fn choose_positions<R: Rng + ?Sized>(
    domain: usize,
    budget: MaskBudget,
    collapse_runs: bool,
    rng: &mut R,
) -> BTreeSet<usize> {
    if domain == 0 {
        return BTreeSet::new();
    }
    let expected = budget.fraction * domain as f64 / MEAN_SPAN;
    let mut spans = expected.floor() as usize;
    if rng.gen_bool(expected.fract()) {
        spans += 1;
    }
    let spans = spans.clamp(1, budget.max_slots.max(1));
    let mut picked = BTreeSet::new();
    if !collapse_runs {
        while picked.len() < spans.min(domain) {
            picked.insert(rng.gen_range(0..domain));
        }
        return picked;
    }
    let max_len = (2.0 * MEAN_SPAN) as usize - 1;
    for _ in 0..spans {
        let start = rng.gen_range(0..domain);
        let len = rng.gen_range(1..=max_len).min(domain - start);
        picked.extend(start..start + len);
    }
    picked
}

/// Chooses a strategy and builds the masked case. The donor is only used
/// for Splice.
pub fn mask_mutation<R: Rng + ?Sized>(
    seed: (&TokenStream, SeedId),
    donor: (&TokenStream, SeedId),
    mix: &StrategyMix,
    budget: MaskBudget,
    rng: &mut R,
) -> MaskedCase {
    let (ts, seed_id) = seed;
    match mix.choose(rng) {
        Strategy::Insert => {
            let pos = choose_positions(ts.len() + 1, budget, false, rng);
            mask_insert(ts, &pos, seed_id)
        }
        Strategy::Overwrite if ts.is_empty() => mask_insert(ts, &BTreeSet::from([0]), seed_id),
        Strategy::Overwrite => {
            let pos = choose_positions(ts.len(), budget, true, rng);
            mask_overwrite(ts, &pos, seed_id)
        }
        Strategy::Splice if donor.0.is_empty() => overwrite_random_run(ts, rng, seed_id),
        Strategy::Splice => mask_splice(ts, donor.0, rng, seed_id, donor.1),
    }
}

/// Substitutes each sentinel with its fill, producing the mutated case.
pub fn apply_fills(mc: &MaskedCase, fills: &[Vec<Token>]) -> Result<TokenStream> {
    if fills.len() != mc.slots {
        return Err(CovrlError::Protocol(format!(
            "expected {} fills, got {}",
            mc.slots,
            fills.len()
        )));
    }
    let mut out = Vec::with_capacity(mc.masked.len() + fills.iter().map(Vec::len).sum::<usize>());
    let mut next = 0;
    for tok in mc.masked.tokens() {
        if tok.is_sentinel() {
            let fill = fills.get(next).ok_or_else(|| {
                CovrlError::Protocol("more sentinels than declared slots".into())
            })?;
            out.extend(fill.iter().filter(|t| !t.is_sentinel()).cloned());
            next += 1;
        } else {
            out.push(tok.clone());
        }
    }
    Ok(TokenStream::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mutation::lexer::tokenize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ts(src: &str) -> TokenStream {
        tokenize(src.as_bytes())
    }

    fn set(items: &[usize]) -> BTreeSet<usize> {
        items.iter().copied().collect()
    }

    #[test]
    fn insert_examples() {
        let mc = mask_insert(&ts("a=1"), &set(&[1]), 0);
        assert_eq!(mc.masked.texts(), ["a", "<extra_id_0>", "=", "1"]);
        let mc = mask_insert(&ts("a=1"), &set(&[0, 3]), 0);
        assert_eq!(mc.masked.texts(), ["<extra_id_0>", "a", "=", "1", "<extra_id_1>"]);
        assert_eq!(mc.slots, 2);
        let none = mask_insert(&ts("a=1"), &set(&[]), 0);
        assert_eq!(none.slots, 0);
        assert_eq!(none.masked, ts("a=1"));
    }

    #[test]
    fn overwrite_examples() {
        let mc = mask_overwrite(&ts("a=1;"), &set(&[2]), 0);
        assert_eq!(mc.masked.texts(), ["a", "=", "<extra_id_0>", ";"]);
        let mc = mask_overwrite(&ts("a=1;"), &set(&[1, 2]), 0);
        assert_eq!(mc.masked.texts(), ["a", "<extra_id_0>", ";"]);
        let mc = mask_overwrite(&ts("a=1;"), &set(&[0, 1, 2, 3]), 0);
        assert_eq!(mc.masked.texts(), ["<extra_id_0>"]);
        let mc = mask_overwrite(&ts("a=1;"), &set(&[0, 2]), 0);
        assert_eq!(mc.slots, 2);
    }

    #[test]
    fn boundaries_respect_nesting() {
        let b = statement_boundaries(&ts("a=1;if(x){b=2;}c=3;"));
        // a = 1 ; | if ( x ) { b = 2 ; } | c = 3 ;
        assert_eq!(b, vec![0, 4, 14, 18]);
        let b = statement_boundaries(&ts("for(i=0;i<3;i++){}x;"));
        assert_eq!(b.len(), 3);
    }

    #[test]
    fn splice_single_statement_falls_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mc = mask_splice(&ts("a=1;"), &ts("f();"), &mut rng, 3, 4);
        assert_eq!(mc.strategy, Strategy::Overwrite);
        assert_eq!(mc.donor_id, None);
        assert_eq!(mc.slots, 1);
    }

    #[test]
    fn splice_with_self_donor() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = ts("a=1;b=2;c=3;");
        let mc = mask_splice(&t, &t, &mut rng, 1, 1);
        assert_eq!(mc.slots, 2);
        assert_eq!(mc.masked.sentinel_count(), 2);
        assert_eq!(mc.donor_id, Some(1));
    }

    #[test]
    fn fills_substitute_in_order() {
        let mc = mask_insert(&ts("a=1"), &set(&[0, 3]), 0);
        let fills = vec![vec![Token::new("let", super::super::lexer::TokenKind::Keyword)], ts(";").into_tokens()];
        let out = apply_fills(&mc, &fills).unwrap();
        assert_eq!(out.detokenize(), "let a = 1 ;");
        assert_eq!(out.sentinel_count(), 0);
        assert!(matches!(apply_fills(&mc, &fills[..1]), Err(CovrlError::Protocol(_))));
    }

    #[test]
    fn position_budget_caps_slots() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let budget = MaskBudget {
            fraction: 0.9,
            max_slots: 3,
        };
        for _ in 0..50 {
            let pos = choose_positions(40, budget, false, &mut rng);
            assert!(!pos.is_empty() && pos.len() <= 3);
            let pos = choose_positions(40, budget, true, &mut rng);
            let mc = mask_overwrite(&TokenStream::from_texts(&vec!["x"; 40]), &pos, 0);
            assert!(mc.slots >= 1 && mc.slots <= 3);
        }
    }

    #[test]
    fn strategy_mix_parsing() {
        assert_eq!("1,2,3".parse::<StrategyMix>().unwrap().0, [1.0, 2.0, 3.0]);
        assert!("1,2".parse::<StrategyMix>().is_err());
        assert!("0,0,0".parse::<StrategyMix>().is_err());
        assert!("1,-1,1".parse::<StrategyMix>().is_err());
    }
}
