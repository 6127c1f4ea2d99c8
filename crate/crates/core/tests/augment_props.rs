use npsg::augment::{duplicate, insert, maybe_perturb_with_kind, swap, CharVocab, PerturbKind};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn remove_at(w: &str, i: usize) -> String {
    w.chars().enumerate().filter(|&(j, _)| j != i).map(|(_, c)| c).collect()
}

proptest! {
    #[test]
    fn duplicate_is_undone_by_dropping_one_copy(word in "[a-z]{1,12}", seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = duplicate(&word, 1, &mut rng).unwrap();
        let c: Vec<char> = d.chars().collect();
        prop_assert!((0..c.len() - 1).any(|i| c[i] == c[i + 1] && remove_at(&d, i) == word));
    }

    #[test]
    fn insert_is_undone_by_dropping_an_interior_char(word in "[a-z]{2,12}", seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = insert(&word, 1, &CharVocab::default(), &mut rng);
        let len = w.chars().count();
        prop_assert!((1..len - 1).any(|i| remove_at(&w, i) == word));
    }

    #[test]
    fn swap_changes_at_most_two_positions(word in "[a-z]{4,12}", seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = swap(&word, 1, &mut rng);
        let diffs = word.chars().zip(s.chars()).filter(|(a, b)| a != b).count();
        prop_assert!(diffs == 0 || diffs == 2);
    }

    #[test]
    fn inserted_chars_come_from_the_vocabulary(word in "[a-z]{2,8}", n in 0usize..5, seed in any::<u64>()) {
        let chars = CharVocab::new(['#', '@']).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = insert(&word, n, &chars, &mut rng);
        prop_assert_eq!(w.chars().filter(|c| *c == '#' || *c == '@').count(), n);
    }
}

#[test]
fn perturbation_rate_and_operation_mix() {
    let chars = CharVocab::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let trials = 100_000;
    let mut per_kind = [0usize; 3];
    for _ in 0..trials {
        if let (_, Some(kind)) = maybe_perturb_with_kind("sample", 0.4, &chars, &mut rng) {
            per_kind[PerturbKind::ALL.iter().position(|k| *k == kind).unwrap()] += 1;
        }
    }
    let perturbed: usize = per_kind.iter().sum();
    assert!((perturbed as f64 / trials as f64 - 0.4).abs() < 0.01, "{perturbed}");
    for n in per_kind {
        assert!((n as f64 / perturbed as f64 - 1.0 / 3.0).abs() < 0.02, "{per_kind:?}");
    }
}

#[test]
fn certain_perturbation_always_edits_long_words() {
    let chars = CharVocab::default();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let (w, kind) = maybe_perturb_with_kind("abcdef", 1.0, &chars, &mut rng);
        assert!(kind.is_some());
        assert_ne!(w, "abcdef");
    }
}
