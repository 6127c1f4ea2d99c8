use std::collections::HashMap;

use npsg::corpus::{keep_probability, PairStream, Window};
use npsg::{NoiseTable, Vocabulary};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pair_counts(stream: PairStream) -> HashMap<(u32, u32), usize> {
    let mut out = HashMap::new();
    for p in stream {
        *out.entry((p.target, p.context)).or_insert(0) += 1;
    }
    out
}

proptest! {
    #[test]
    fn keep_probability_is_a_nonincreasing_probability(f1 in 1e-9f64..1.0, f2 in 1e-9f64..1.0, t in 1e-7f64..1e-2) {
        let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        let (p_lo, p_hi) = (keep_probability(lo, t).unwrap(), keep_probability(hi, t).unwrap());
        prop_assert!(p_hi <= p_lo);
        prop_assert!(p_hi > 0.0 && p_lo <= 1.0);
    }

    #[test]
    fn fixed_window_pairs_match_enumeration(tokens in prop::collection::vec(0u32..6, 1..40), w in 1usize..5) {
        let got = pair_counts(PairStream::new(&tokens, None, Window::Fixed(w), 0).unwrap());
        let mut want = HashMap::new();
        for i in 0..tokens.len() {
            for j in 0..tokens.len() {
                if i != j && i.abs_diff(j) <= w {
                    *want.entry((tokens[i], tokens[j])).or_insert(0) += 1;
                }
            }
        }
        prop_assert_eq!(&got, &want);
        for (&(a, b), &n) in &got {
            prop_assert_eq!(got.get(&(b, a)), Some(&n));
        }
    }

    #[test]
    fn random_window_pairs_stay_in_range(tokens in prop::collection::vec(0u32..50, 1..60), max in 1usize..6, seed in any::<u64>()) {
        let stream = PairStream::new(&tokens, None, Window::Random(max), seed).unwrap();
        let mut per_target = vec![0usize; tokens.len()];
        for p in stream {
            prop_assert_eq!(tokens[p.position], p.target);
            let lo = p.position.saturating_sub(max);
            let hi = (p.position + max).min(tokens.len() - 1);
            prop_assert!((lo..=hi).any(|j| j != p.position && tokens[j] == p.context));
            per_target[p.position] += 1;
        }
        prop_assert!(per_target.iter().all(|&n| n <= 2 * max));
    }

    #[test]
    fn pair_stream_is_deterministic(tokens in prop::collection::vec(0u32..8, 1..50), seed in any::<u64>()) {
        let keep = [0.5; 8];
        let a: Vec<_> = PairStream::new(&tokens, Some(&keep), Window::Random(3), seed).unwrap().collect();
        let b: Vec<_> = PairStream::new(&tokens, Some(&keep), Window::Random(3), seed).unwrap().collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn noise_probabilities_follow_smoothed_counts(counts in prop::collection::vec(1u64..1000, 1..20)) {
        let p = NoiseTable::from_counts(&counts).unwrap().probabilities();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..counts.len() {
            for j in 0..counts.len() {
                if counts[i] > counts[j] {
                    prop_assert!(p[i] > p[j]);
                }
            }
        }
    }
}

#[test]
fn subsampling_keeps_the_expected_fraction() {
    let tokens = vec![0u32; 100_000];
    let kept = PairStream::new(&tokens, Some(&[0.3]), Window::Fixed(1), 17).unwrap().tokens().len();
    assert!((kept as f64 / 1e5 - 0.3).abs() < 0.01, "{kept}");
    let all = PairStream::new(&tokens, Some(&[1.0]), Window::Fixed(1), 17).unwrap().tokens().len();
    assert_eq!(all, tokens.len());
}

/// About 1 MB of Zipf-distributed text over a 5000-word lexicon.
fn zipf_text() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lexicon: Vec<String> = (0..5000).map(|i| format!("w{i}x")).collect();
    let weights: Vec<f64> = (1..=lexicon.len()).map(|r| 1.0 / r as f64).collect();
    let total: f64 = weights.iter().sum();
    let mut text = String::new();
    while text.len() < 1_000_000 {
        let mut u = rng.random::<f64>() * total;
        let mut k = 0;
        while u > weights[k] && k + 1 < weights.len() {
            u -= weights[k];
            k += 1;
        }
        text.push_str(&lexicon[k]);
        text.push(if rng.random_bool(0.1) { '\n' } else { ' ' });
    }
    text
}

#[test]
fn vocabulary_counts_match_an_independent_count() {
    let text = zipf_text();
    let vocab = Vocabulary::from_reader(text.as_bytes(), 1000).unwrap();
    let mut oracle: HashMap<&str, u64> = HashMap::new();
    for w in text.split_whitespace() {
        *oracle.entry(w).or_insert(0) += 1;
    }
    let mut ranked: Vec<(&str, u64)> = oracle.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    assert_eq!(vocab.word(0), "w0x");
    assert_eq!(vocab.len(), 1000);
    assert_eq!(vocab.total_tokens(), text.split_whitespace().count() as u64);
    for (i, (w, c)) in ranked.iter().take(1000).enumerate() {
        assert_eq!(vocab.word(i as u32), *w);
        assert_eq!(vocab.counts()[i], *c);
    }
}
