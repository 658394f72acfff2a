use std::time::Instant;

use cuneilid::eval::score;
use cuneilid::meta::{predict_meta, train_meta, MetaParams};
use cuneilid::neural::{self, predict_neural, NeuralParams};
use cuneilid::synthetic::disjoint_corpus;

#[test]
fn meta_separates_disjoint_alphabets() {
    let train = disjoint_corpus(100, 1);
    let test = disjoint_corpus(20, 2);
    let started = Instant::now();
    let model = train_meta(&train, &MetaParams::default(), 7).unwrap();
    let pred: Vec<_> = test.documents().iter().map(|d| predict_meta(&model, d).0).collect();
    let report = score("meta", &test.labels().unwrap(), &pred).unwrap();
    eprintln!("meta macro F1 {} in {:?}", report.macro_f1, started.elapsed());
    assert_eq!(report.macro_f1, 1.0);
}

#[test]
fn neural_separates_disjoint_alphabets() {
    let train = disjoint_corpus(100, 1);
    let dev = disjoint_corpus(20, 3);
    let test = disjoint_corpus(20, 2);
    let started = Instant::now();
    let params = NeuralParams {
        init_scale: 0.3,
        ..NeuralParams::default()
    };
    assert_eq!(params.epochs, 20);
    let outcome = neural::train(&train, &dev, &params, 7, |_, _, _| Ok(())).unwrap();
    let pred: Vec<_> = test
        .documents()
        .iter()
        .map(|d| predict_neural(&outcome.best, d).unwrap())
        .collect();
    let report = score("neural", &test.labels().unwrap(), &pred).unwrap();
    eprintln!("neural macro F1 {} in {:?}", report.macro_f1, started.elapsed());
    assert!(report.macro_f1 >= 0.95, "macro F1 {}", report.macro_f1);
}
