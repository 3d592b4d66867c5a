use delayed_yule::generator::{apply_generator, Gauge, HeightTruncation, StateFn};
use delayed_yule::{EvolutionarySequence, EvolutionarySet, Vertex};
use proptest::prelude::*;

/// Applies branchings given as member indices taken modulo the current size.
fn build(choices: &[usize]) -> Vec<(EvolutionarySet, Vertex)> {
    let mut s = EvolutionarySet::root();
    let mut out = Vec::with_capacity(choices.len());
    for &c in choices {
        let v = s.members()[c % s.len()];
        out.push((s.clone(), v));
        s = s.branch(v).unwrap();
    }
    out.push((s, Vertex::ROOT));
    out
}

/// Vertex as a string of `1`/`2` steps.
fn word(v: Vertex) -> String {
    v.steps().map(|s| char::from(b'0' + s)).collect()
}

fn prefix_free(s: &EvolutionarySet) -> bool {
    let words: Vec<String> = s.iter().map(word).collect();
    words.iter().enumerate().all(|(i, a)| {
        words
            .iter()
            .enumerate()
            .all(|(j, b)| i == j || !b.starts_with(a.as_str()))
    })
}

/// `sum 2^{-|v|} == 1`, computed in units of `2^-64`.
fn dyadic_mass_is_one(s: &EvolutionarySet) -> bool {
    let total: u128 = s.iter().map(|v| 1u128 << (64 - word(v).len())).sum();
    total == 1u128 << 64
}

/// `|a - b| <= ulps * eps * scale`.
fn close(a: f64, b: f64, scale: f64, ulps: f64) -> bool {
    (a - b).abs() <= ulps * f64::EPSILON * scale.max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn branching_preserves_evolutionary_sets(choices in prop::collection::vec(any::<usize>(), 0..=60)) {
        for (s, _) in build(&choices) {
            prop_assert!(prefix_free(&s));
            prop_assert!(dyadic_mass_is_one(&s));
            prop_assert_eq!(s.gauge(1.0).unwrap(), s.len() as f64);
            prop_assert_eq!(s.max_height() as usize, s.iter().map(|v| word(v).len()).max().unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn branch_increment_identity(
        choices in prop::collection::vec(any::<usize>(), 1..=40),
        beta in 0.01f64..=1.0,
    ) {
        let steps = build(&choices);
        for (s, v) in &steps[..steps.len() - 1] {
            let next = s.branch(*v).unwrap();
            let h = word(*v).len() as i32;
            let (after, before) = (next.gauge(beta).unwrap(), s.gauge(beta).unwrap());
            let rhs = beta.powi(h) * (2.0 * beta - 1.0);
            prop_assert!(close(after - before, rhs, after.max(before), 4.0), "{} vs {rhs}", after - before);
        }
    }

    #[test]
    fn quotient_commutes_with_branching(choices in prop::collection::vec(any::<usize>(), 1..=40)) {
        let steps = build(&choices);
        for (s, v) in &steps[..steps.len() - 1] {
            let h = word(*v).len();
            let via_tree = s.branch(*v).unwrap().generation_profile();
            let via_counts = s.generation_profile().apply_move(h).unwrap();
            prop_assert_eq!(via_tree, via_counts);
        }
    }

    #[test]
    fn profile_counts_heights(choices in prop::collection::vec(any::<usize>(), 0..=40)) {
        let s = build(&choices).pop().unwrap().0;
        let mut counts = vec![0u64; s.max_height() as usize + 1];
        for v in s.iter() {
            counts[word(v).len()] += 1;
        }
        prop_assert_eq!(s.generation_profile(), EvolutionarySequence::new(counts).unwrap());
    }

    #[test]
    fn gauge_generator_eigen_identity(
        choices in prop::collection::vec(any::<usize>(), 0..=30),
        alpha in 0.01f64..=1.0,
        beta in 0.01f64..=1.0,
    ) {
        let s = build(&choices).pop().unwrap().0;
        let lhs = apply_generator(&Gauge::new(beta).unwrap(), &s, alpha).unwrap();
        // Direct sum over members of the jump size times the rate.
        let rhs: f64 = s
            .iter()
            .map(|v| {
                let h = word(v).len() as i32;
                alpha.powi(h) * beta.powi(h) * (2.0 * beta - 1.0)
            })
            .sum();
        prop_assert!(close(lhs, rhs, s.gauge(alpha * beta).unwrap(), 8.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn height_truncation_increment_matches_values(
        choices in prop::collection::vec(any::<usize>(), 1..=30),
        n in 0u32..8,
    ) {
        let f = HeightTruncation { n };
        let steps = build(&choices);
        for (s, v) in &steps[..steps.len() - 1] {
            let next = s.branch(*v).unwrap();
            prop_assert_eq!(f.increment(s, *v, f.value(s)).unwrap(), f.value(&next) - f.value(s));
        }
    }

    #[test]
    fn json_round_trip(choices in prop::collection::vec(any::<usize>(), 0..=30)) {
        let s = build(&choices).pop().unwrap().0;
        prop_assert_eq!(EvolutionarySet::from_json(&s.to_json()).unwrap(), s);
    }
}
