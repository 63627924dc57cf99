use statrs::distribution::{ChiSquared, ContinuousCDF};

use covrl::mutation::{MockMutator, Mutator};
use covrl::protocol::{FinetuneRecord, FinetuneRequest};

const DRAWS: usize = 10_000;

fn pool() -> MockMutator {
    MockMutator::new(["let", "x", "=", "1", ";", "print", "(", ")"], 11, true)
}

/// Counts of the first token of `DRAWS` context-free fills, per pool entry.
fn first_token_counts(m: &mut MockMutator) -> Vec<u64> {
    let mut counts = vec![0u64; m.vocab().len()];
    for _ in 0..DRAWS {
        let fill = m.mock_fill(1);
        let first = &fill[0][0].text;
        let i = m.vocab().iter().position(|t| t == first).expect("token from the pool");
        counts[i] += 1;
    }
    counts
}

/// Pearson statistic against `probs`, merging categories with fewer than 5
/// expected draws; returns the p-value.
fn chi_squared_p(counts: &[u64], probs: &[f64]) -> f64 {
    let n = counts.iter().sum::<u64>() as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut pending = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        pending.0 += c as f64;
        pending.1 += p * n;
        if pending.1 >= 5.0 {
            bins.push(pending);
            pending = (0.0, 0.0);
        }
    }
    if pending.1 > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += pending.0;
                last.1 += pending.1;
            }
            None => bins.push(pending),
        }
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = (bins.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

#[test]
fn sampling_matches_configured_distribution() {
    let mut m = pool();
    let probs = m.next_token_distribution(None);
    let counts = first_token_counts(&mut m);
    let p = chi_squared_p(&counts, &probs);
    assert!(p > 0.001, "p = {p}");
}

#[test]
fn tenfold_await_weight_shows_up_in_fills() {
    let mut m = pool();
    let before = m.probability_of("await").unwrap();
    let base_counts = first_token_counts(&mut m);
    m.scale_weight("await", 10.0).unwrap();
    let after = m.probability_of("await").unwrap();
    let probs = m.next_token_distribution(None);
    let i = m.vocab().iter().position(|t| t == "await").unwrap();
    assert_eq!(probs[i], after);
    // Odds of await against everything else go up exactly tenfold.
    let odds = |p: f64| p / (1.0 - p);
    assert!((odds(after) / odds(before) - 10.0).abs() < 1e-9);

    let counts = first_token_counts(&mut m);
    let p = chi_squared_p(&counts, &probs);
    assert!(p > 0.001, "p = {p}");
    assert!(counts[i] > 5 * base_counts[i].max(1), "{} vs {}", counts[i], base_counts[i]);
}

#[test]
fn rewarded_finetune_raises_fill_frequency() {
    let mut m = pool();
    let i = m.vocab().iter().position(|t| t == "await").unwrap();
    let before = m.probability_of("await").unwrap();
    let req = FinetuneRequest {
        cycle: 0,
        records: vec![FinetuneRecord {
            masked_tokens: vec!["<extra_id_0>".into()],
            fill_tokens: vec![vec!["await".into()]],
            reward: 1.0,
        }],
        epochs: 1,
    };
    let report = m.finetune(&req).unwrap();
    assert!(report.loss_after < report.loss_before);
    let after = m.probability_of("await").unwrap();
    assert!(after > before);
    let counts = first_token_counts(&mut m);
    let p = chi_squared_p(&counts, &m.next_token_distribution(None));
    assert!(p > 0.001, "p = {p}");
    assert!(counts[i] as f64 / DRAWS as f64 > before);
}

#[test]
fn penalized_finetune_lowers_probability() {
    let mut m = pool();
    let before = m.probability_of("print").unwrap();
    let req = FinetuneRequest {
        cycle: 0,
        records: vec![FinetuneRecord {
            masked_tokens: vec!["<extra_id_0>".into()],
            fill_tokens: vec![vec!["print".into()]],
            reward: -1.0,
        }],
        epochs: 1,
    };
    m.finetune(&req).unwrap();
    assert!(m.probability_of("print").unwrap() < before);
}

#[test]
fn uniform_mock_ignores_finetune() {
    let mut m = MockMutator::new(["a", "b"], 3, false);
    let before = m.probabilities();
    let req = FinetuneRequest {
        cycle: 0,
        records: vec![FinetuneRecord {
            masked_tokens: vec![],
            fill_tokens: vec![vec!["a".into()]],
            reward: 1.0,
        }],
        epochs: 3,
    };
    m.finetune(&req).unwrap();
    assert_eq!(m.probabilities(), before);
}
