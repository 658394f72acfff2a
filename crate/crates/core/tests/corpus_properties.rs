use std::collections::BTreeSet;

use cuneilid::corpus::{describe, format_corpus, parse_corpus, stratified_split, LabelledCorpus};
use cuneilid::{LabelCode, NUM_LABELS};
use proptest::prelude::*;

fn corpus_strategy() -> impl Strategy<Value = LabelledCorpus> {
    let doc = (0..NUM_LABELS, "[a-e𒀭𒁀]{1,4}( [a-e𒀭𒁀]{1,4}){0,3}");
    prop::collection::vec(doc, 0..60)
        .prop_map(|docs| LabelledCorpus::from_pairs(docs.into_iter().map(|(l, t)| (LabelCode::ALL[l], t))).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn format_then_parse_is_identity(corpus in corpus_strategy()) {
        let again = parse_corpus(&format_corpus(&corpus), true).unwrap();
        prop_assert_eq!(again, corpus);
    }

    #[test]
    fn split_is_a_proportional_partition(
        corpus in corpus_strategy(),
        weights in prop::collection::vec(1u32..10, 1..4),
        seed in any::<u64>(),
    ) {
        let total: u32 = weights.iter().sum();
        let fractions: Vec<f64> = weights.iter().map(|&w| w as f64 / total as f64).collect();
        let parts = match stratified_split(&corpus, &fractions, seed) {
            Ok(p) => p,
            Err(_) => {
                prop_assert!(LabelCode::ALL.iter().any(|&l| (1..fractions.len()).contains(&corpus.count(l))));
                return Ok(());
            }
        };
        prop_assert_eq!(parts.len(), fractions.len());

        let key = |c: &LabelledCorpus| -> Vec<(usize, String)> {
            c.documents().iter().map(|d| (d.id, d.text.clone())).collect()
        };
        let mut seen = BTreeSet::new();
        for p in &parts {
            for k in key(p) {
                prop_assert!(seen.insert(k));
            }
        }
        let all: BTreeSet<_> = key(&corpus).into_iter().collect();
        prop_assert_eq!(seen, all);

        for l in LabelCode::ALL {
            let n = corpus.count(l) as f64;
            for (p, f) in parts.iter().zip(&fractions) {
                prop_assert!((p.count(l) as f64 - n * f).abs() < 1.0 + 1e-9);
            }
        }
        prop_assert_eq!(stratified_split(&corpus, &fractions, seed).unwrap(), parts);
    }

    #[test]
    fn summary_counts_add_up(corpus in corpus_strategy()) {
        let s = describe(&corpus);
        prop_assert_eq!(s.documents, corpus.len());
        prop_assert_eq!(s.class_counts.iter().map(|c| c.1).sum::<usize>(), corpus.len());
        let cps: usize = corpus.documents().iter().map(|d| d.text.chars().count()).sum();
        prop_assert_eq!(s.total_codepoints, cps);
    }
}

#[test]
fn parse_errors_name_the_line() {
    let err = parse_corpus("SUX\tab\nXYZ\tcd\n", true).unwrap_err();
    assert!(err.to_string().contains("line 2"), "{err}");
    let err = parse_corpus("SUX\tab\tc\n", true).unwrap_err();
    assert!(err.to_string().contains("line 1"), "{err}");
}
