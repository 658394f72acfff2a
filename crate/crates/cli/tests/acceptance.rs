use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use cuneilid::corpus::{format_corpus, load_corpus, Document};
use cuneilid::eval::{confusion_csv, score};
use cuneilid::features::{enumerate_grams, FeatureClassSpec, GramKind};
use cuneilid::meta::{meta_column, predict_meta, stack_training_features, train_base, train_meta, MetaParams};
use cuneilid::neural::{
    self, backward, encode, forward_encoded, loss, predict_neural, predict_proba, Architecture, CharMap, GruClassifier,
    Mode, NeuralParams,
};
use cuneilid::persist::{load_model, save_model, Model};
use cuneilid::seeds;
use cuneilid::svm::{train_binary, train_binary_with, Bias, SignedVector, SvmParams};
use cuneilid::synthetic::{class_alphabet, disjoint_corpus, random_text};
use cuneilid::{LabelCode, NUM_LABELS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Verdict;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn verdict(r: Result<String, String>) -> Verdict {
    match r {
        Ok(s) => Verdict::Pass(s),
        Err(s) => Verdict::Fail(s),
    }
}

fn main() {
    let criteria: [(u32, &str, Option<Duration>, Check); 9] = [
        (
            1,
            "official data reproduction",
            Some(Duration::from_secs(2 * 3600)),
            official_reproduction,
        ),
        (
            2,
            "skip-gram oracle equivalence",
            Some(Duration::from_secs(5)),
            skipgram_oracle,
        ),
        (
            3,
            "SVM analytic and oracle objective",
            Some(Duration::from_secs(30)),
            svm_oracle,
        ),
        (4, "GRU gradient check", Some(Duration::from_secs(60)), gradient_check),
        (
            5,
            "synthetic separability",
            Some(Duration::from_secs(300)),
            synthetic_separability,
        ),
        (6, "no-leakage audit", None, no_leakage),
        (7, "CLI determinism", None, determinism),
        (8, "metric consistency", None, metric_consistency),
        (9, "persistence", None, persistence),
    ];
    let mut failed = 0;
    for (n, name, limit, check) in criteria {
        let started = Instant::now();
        let v = catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::Fail(format!("panicked: {msg}"))
        });
        let elapsed = started.elapsed();
        let v = match (v, limit) {
            (Verdict::Pass(d), Some(l)) if elapsed > l => Verdict::Fail(format!(
                "{d}; took {:.1}s, limit {}s",
                elapsed.as_secs_f64(),
                l.as_secs()
            )),
            (v, _) => v,
        };
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("criterion {n} {tag} {name} ({:.1}s): {detail}", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn official_reproduction() -> Verdict {
    let dir = workspace_root().join("data/official");
    let files = ["train.txt", "dev.txt", "test.txt"].map(|f| dir.join(f));
    if !files.iter().all(|f| f.exists()) {
        return Verdict::Skip(format!(
            "{} with train.txt, dev.txt, test.txt not present",
            dir.display()
        ));
    }
    verdict((|| {
        let load = |p: &Path| load_corpus(p, true).map_err(|e| e.to_string());
        let (train, dev, test) = (load(&files[0])?, load(&files[1])?, load(&files[2])?);
        let gold = test.labels().map_err(|e| e.to_string())?;
        let meta = train_meta(&train, &MetaParams::default(), 0).map_err(|e| e.to_string())?;
        let meta_pred: Vec<_> = test.documents().iter().map(|d| predict_meta(&meta, d).0).collect();
        let meta_f1 = score("meta", &gold, &meta_pred).map_err(|e| e.to_string())?.macro_f1;
        let outcome =
            neural::train(&train, &dev, &NeuralParams::default(), 0, |_, _, _| Ok(())).map_err(|e| e.to_string())?;
        let neural_pred = test
            .documents()
            .iter()
            .map(|d| predict_neural(&outcome.best, d))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let neural_f1 = score("neural", &gold, &neural_pred)
            .map_err(|e| e.to_string())?
            .macro_f1;
        let detail = format!(
            "meta {meta_f1:.3}, neural {neural_f1:.3}, delta {:.3}",
            meta_f1 - neural_f1
        );
        ensure(meta_f1 >= 0.70, || format!("{detail}; meta below 0.70"))?;
        ensure((0.48..=0.62).contains(&neural_f1), || {
            format!("{detail}; neural outside [0.48, 0.62]")
        })?;
        ensure(meta_f1 - neural_f1 >= 0.12, || format!("{detail}; delta below 0.12"))?;
        Ok(detail)
    })())
}

fn brute_force(text: &[char], n: usize, k: usize) -> Vec<Vec<char>> {
    fn rec(len: usize, n: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for i in start..len {
            cur.push(i);
            rec(len, n, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut tuples = Vec::new();
    rec(text.len(), n, 0, &mut Vec::new(), &mut tuples);
    tuples
        .into_iter()
        .filter(|t| t.windows(2).all(|w| w[1] - w[0] == k + 1))
        .map(|t| t.iter().map(|&i| text[i]).collect())
        .collect()
}

fn skipgram_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let alphabet = ['a', 'b', 'c', 'd'];
    let mut compared = 0;
    for _ in 0..1000 {
        let text: Vec<char> = (0..rng.gen_range(0..=12))
            .map(|_| alphabet[rng.gen_range(0..4)])
            .collect();
        for spec in FeatureClassSpec::ALL {
            let k = match spec.kind() {
                GramKind::Contiguous => 0,
                GramKind::Skip => spec.skip_distance(),
            };
            if enumerate_grams(&text, spec) != brute_force(&text, spec.order(), k) {
                return Verdict::Fail(format!("{spec} differs on {:?}", text.iter().collect::<String>()));
            }
            compared += 1;
        }
    }
    Verdict::Pass(format!("{compared} string/spec pairs identical"))
}

fn separable_problem(rng: &mut impl Rng, n: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b = rng.gen_range(-0.3..0.3);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    while xs.len() < n {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
        if m.abs() < 0.2 {
            continue;
        }
        let y = if m > 0.0 { 1.0 } else { -1.0 };
        if xs.len() == n - 1 && ys.iter().all(|&t| t == y) {
            continue;
        }
        xs.push(x);
        ys.push(y);
    }
    (xs, ys)
}

fn primal(w: &[f64], xs: &[Vec<f64>], ys: &[f64], c: f64) -> f64 {
    let dim = xs[0].len();
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (1.0 - y * (x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[dim])).max(0.0))
        .sum();
    0.5 * w.iter().map(|v| v * v).sum::<f64>() + c * hinge
}

fn subgradient_oracle(xs: &[Vec<f64>], ys: &[f64], c: f64, iters: usize) -> f64 {
    let dim = xs[0].len();
    let mut w = vec![0.0; dim + 1];
    let mut avg = vec![0.0; dim + 1];
    let mut avg_n = 0.0;
    let mut best = primal(&w, xs, ys, c);
    for t in 1..=iters {
        let mut g = w.clone();
        for (x, &y) in xs.iter().zip(ys) {
            let m: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[dim];
            if y * m < 1.0 {
                for j in 0..dim {
                    g[j] -= c * y * x[j];
                }
                g[dim] -= c * y;
            }
        }
        let step = 1.0 / t as f64;
        w.iter_mut().zip(&g).for_each(|(wj, gj)| *wj -= step * gj);
        if t > iters / 2 {
            avg_n += 1.0;
            avg.iter_mut().zip(&w).for_each(|(a, wj)| *a += (wj - *a) / avg_n);
        }
        if t % 64 == 0 {
            best = best.min(primal(&w, xs, ys, c));
        }
    }
    best.min(primal(&avg, xs, ys, c))
}

fn svm_oracle() -> Verdict {
    verdict((|| {
        let x = [SignedVector::from_dense(&[-1.0]), SignedVector::from_dense(&[1.0])];
        let sol = train_binary_with(&x, &[-1.0, 1.0], &SvmParams::default(), 0, Bias::None, |_| {})
            .map_err(|e| e.to_string())?;
        let w1 = sol.weights[0];
        ensure((w1 - 1.0).abs() <= 1e-3, || format!("two-point w = {w1}"))?;

        let mut rng = ChaCha8Rng::seed_from_u64(31337);
        let tight = SvmParams {
            c: 1.0,
            eps: 1e-10,
            max_outer: 100_000,
        };
        let mut worst = 0.0f64;
        for p in 0..50 {
            let dim = rng.gen_range(2..=5);
            let (xs, ys) = separable_problem(&mut rng, 20, dim);
            let rows: Vec<SignedVector> = xs.iter().map(|x| SignedVector::from_dense(x)).collect();
            let w = train_binary(&rows, &ys, &tight, p).map_err(|e| e.to_string())?;
            let ours = primal(&w, &xs, &ys, 1.0);
            let oracle = subgradient_oracle(&xs, &ys, 1.0, 200_000);
            let rel = (ours - oracle).abs() / oracle;
            worst = worst.max(rel);
            ensure(rel < 1e-3, || format!("problem {p}: solver {ours}, oracle {oracle}"))?;
        }
        Ok(format!(
            "two-point w = {w1:.6}; worst relative gap over 50 problems {worst:.1e}"
        ))
    })())
}

fn gradient_check() -> Verdict {
    const H: f64 = 1e-5;
    let chars = CharMap::from_chars("abcdefg".chars().collect()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let model = GruClassifier::init(chars, Architecture::default(), 0.3, &mut rng);
    let encoded = encode(&model, &Document::new(0, "abc da xe", None), Mode::Train, 0.0, &mut rng).unwrap();
    let gold = LabelCode::NEB;
    let grad = backward(&model, &forward_encoded(&model, encoded.clone()), gold);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut worst = 0.0f64;
    let tensors = model.params.tensors().len();
    for t in 0..tensors {
        let mut probe = model.clone();
        let len = probe.params.tensors()[t].data().len();
        let mut numeric = vec![0.0; len];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = probe.params.tensors()[t].data()[i];
            probe.params.tensors_mut()[t].data_mut()[i] = orig + H;
            let up = loss(&forward_encoded(&probe, encoded.clone()), gold);
            probe.params.tensors_mut()[t].data_mut()[i] = orig - H;
            let down = loss(&forward_encoded(&probe, encoded.clone()), gold);
            probe.params.tensors_mut()[t].data_mut()[i] = orig;
            *slot = (up - down) / (2.0 * H);
        }
        let analytic = grad.tensors()[t].data();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
        let scale = norm(analytic).max(norm(&numeric));
        let err = if scale < 1e-12 { 0.0 } else { norm(&diff) / scale };
        worst = worst.max(err);
        if err >= 1e-4 {
            return Verdict::Fail(format!("tensor {t}: relative error {err:e}"));
        }
    }
    Verdict::Pass(format!("{tensors} tensors, worst relative error {worst:.1e}"))
}

fn neural_f1(init_scale: f64) -> Result<f64, String> {
    let (train, dev, test) = (disjoint_corpus(100, 1), disjoint_corpus(20, 3), disjoint_corpus(20, 2));
    let params = NeuralParams {
        init_scale,
        ..NeuralParams::default()
    };
    let outcome = neural::train(&train, &dev, &params, 7, |_, _, _| Ok(())).map_err(|e| e.to_string())?;
    let pred = test
        .documents()
        .iter()
        .map(|d| predict_neural(&outcome.best, d))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    Ok(score("neural", &test.labels().unwrap(), &pred).unwrap().macro_f1)
}

fn synthetic_separability() -> Verdict {
    verdict((|| {
        let (train, test) = (disjoint_corpus(100, 1), disjoint_corpus(20, 2));
        ensure(train.len() == 700 && test.len() == 140, || "fixture sizes".into())?;
        let meta = train_meta(&train, &MetaParams::default(), 7).map_err(|e| e.to_string())?;
        let pred: Vec<_> = test.documents().iter().map(|d| predict_meta(&meta, d).0).collect();
        let meta_f1 = score("meta", &test.labels().unwrap(), &pred).unwrap().macro_f1;
        let neural = neural_f1(0.3)?;
        let at_default = neural_f1(NeuralParams::default().init_scale)?;
        let detail = format!(
            "meta {meta_f1:.3}; neural {neural:.3} in 20 epochs with init_scale 0.3 \
             (default init_scale {} gives {at_default:.3})",
            NeuralParams::default().init_scale
        );
        ensure(meta_f1 == 1.0, || format!("{detail}; meta below 1.0"))?;
        ensure(neural >= 0.95, || format!("{detail}; neural below 0.95"))?;
        Ok(detail)
    })())
}

fn no_leakage() -> Verdict {
    verdict((|| {
        let corpus = disjoint_corpus(10, 21);
        let params = MetaParams::default();
        let seed = 5;
        let stacking = stack_training_features(&corpus, &params, seed).map_err(|e| e.to_string())?;
        let folds = &stacking.folds;
        let mut rows_checked = 0;
        for f in 0..params.folds {
            let held_out: Vec<usize> = (0..corpus.len()).filter(|&i| folds.fold_of[i] == f).collect();
            let positions = &folds.training_positions[f];
            for &i in &held_out {
                ensure(!positions.contains(&i), || {
                    format!("document {i} in training positions of its own fold")
                })?;
            }
            let train = corpus.subset(positions);
            let bases: Vec<_> = FeatureClassSpec::ALL
                .into_iter()
                .enumerate()
                .map(|(s, spec)| {
                    train_base(
                        &train,
                        spec,
                        &params.svm,
                        params.min_count,
                        seeds::derive(seed, &format!("svm/{s}/fold{f}")),
                    )
                    .map(|b| (spec, b))
                })
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            for &i in &held_out {
                let chars = corpus.documents()[i].chars();
                let row = &stacking.features.rows()[i];
                for (spec, base) in &bases {
                    let values = base.decision_values(&chars);
                    for l in LabelCode::ALL {
                        ensure(row[meta_column(*spec, l)] == values[l.index()], || {
                            format!("row {i} column {spec}/{l} not reproduced by fold {f} bases")
                        })?;
                    }
                }
                rows_checked += 1;
            }
        }
        ensure(rows_checked == 70, || format!("{rows_checked} rows checked"))?;
        Ok(format!(
            "all 70 rows reproduced from bases trained without them ({} folds)",
            params.folds
        ))
    })())
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_cuneilid"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn determinism() -> Verdict {
    verdict((|| {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
        fs::write(p("train.tsv"), format_corpus(&disjoint_corpus(20, 1))).unwrap();
        fs::write(p("dev.tsv"), format_corpus(&disjoint_corpus(4, 2))).unwrap();
        fs::write(p("test.tsv"), format_corpus(&disjoint_corpus(6, 3))).unwrap();
        fs::write(p("neural.json"), r#"{"epochs": 3}"#).unwrap();
        let mut models = Vec::new();
        for (system, workers) in [
            ("meta", "1"),
            ("meta", "1"),
            ("meta", "4"),
            ("neural", "1"),
            ("neural", "1"),
            ("neural", "4"),
        ] {
            let tag = format!("{system}-{}", models.len());
            let (model, pred) = (p(&format!("{tag}.model")), p(&format!("{tag}.txt")));
            let mut args = vec!["train", "--system", system, "--train", &p("train.tsv")]
                .into_iter()
                .map(String::from)
                .collect::<Vec<_>>();
            if system == "neural" {
                args.extend(["--dev", &p("dev.tsv"), "--config", &p("neural.json")].map(String::from));
            }
            args.extend(["--model", &model, "--seed", "11", "--workers", workers].map(String::from));
            cli(&args.iter().map(String::as_str).collect::<Vec<_>>())?;
            cli(&[
                "predict",
                "--model",
                &model,
                "--input",
                &p("test.tsv"),
                "--output",
                &pred,
            ])?;
            models.push((system, workers, fs::read(&model).unwrap(), fs::read(&pred).unwrap()));
        }
        for pair in [(0, 1), (0, 2), (3, 4), (3, 5)] {
            let (a, b) = (&models[pair.0], &models[pair.1]);
            ensure(a.2 == b.2, || {
                format!("{} model differs between workers {} and {}", a.0, a.1, b.1)
            })?;
            ensure(a.3 == b.3, || {
                format!("{} predictions differ between workers {} and {}", a.0, a.1, b.1)
            })?;
        }
        Ok("meta and neural: repeated runs and workers 1 vs 4 give byte-identical models and predictions".into())
    })())
}

fn metrics_from_csv(csv: &str) -> (f64, f64) {
    let rows: Vec<Vec<u64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|c| c.parse().unwrap()).collect())
        .collect();
    let total: u64 = rows.iter().flatten().sum();
    let diag: u64 = (0..NUM_LABELS).map(|i| rows[i][i]).sum();
    let f1s = (0..NUM_LABELS).map(|c| {
        let tp = rows[c][c] as f64;
        let col: u64 = rows.iter().map(|r| r[c]).sum();
        let row: u64 = rows[c].iter().sum();
        let p = if col == 0 { 0.0 } else { tp / col as f64 };
        let r = if row == 0 { 0.0 } else { tp / row as f64 };
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    });
    (diag as f64 / total as f64, f1s.sum::<f64>() / NUM_LABELS as f64)
}

fn metric_consistency() -> Verdict {
    verdict((|| {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for i in 0..100 {
            let n = rng.gen_range(1..200);
            let gold: Vec<LabelCode> = (0..n).map(|_| LabelCode::ALL[rng.gen_range(0..NUM_LABELS)]).collect();
            let pred: Vec<LabelCode> = gold
                .iter()
                .map(|&g| {
                    if rng.gen_bool(0.6) {
                        g
                    } else {
                        LabelCode::ALL[rng.gen_range(0..NUM_LABELS)]
                    }
                })
                .collect();
            let r = score("x", &gold, &pred).map_err(|e| e.to_string())?;
            let (acc, f1) = metrics_from_csv(&confusion_csv(&r.matrix));
            ensure(
                (acc - r.accuracy).abs() <= 1e-12 && (f1 - r.macro_f1).abs() <= 1e-12,
                || format!("pair {i}: csv gives {acc}/{f1}, report {}/{}", r.accuracy, r.macro_f1),
            )?;
        }
        let gold: Vec<LabelCode> = LabelCode::ALL.iter().flat_map(|&l| [l; 10]).collect();
        let perfect = score("x", &gold, &gold).unwrap().macro_f1;
        ensure(perfect == 1.0, || format!("score(gold, gold) = {perfect}"))?;
        let all_sux = score("x", &gold, &vec![LabelCode::SUX; gold.len()]).unwrap().macro_f1;
        let hand = (2.0 * (1.0 / 7.0) / (1.0 / 7.0 + 1.0)) / 7.0;
        ensure((all_sux - hand).abs() < 1e-15, || format!("all-SUX macro F1 {all_sux}"))?;
        Ok(format!(
            "100 pairs within 1e-12; score(gold, gold) = 1.0; all-SUX {all_sux:.4}"
        ))
    })())
}

fn random_documents(n: usize) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut alphabet: Vec<char> = LabelCode::ALL.iter().flat_map(|&l| class_alphabet(l, 20)).collect();
    alphabet.extend(['a', '𒐀']);
    (0..n)
        .map(|i| {
            let pick: Vec<char> = (0..rng.gen_range(3..12))
                .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                .collect();
            Document::new(i, random_text(&pick, &mut rng), None)
        })
        .collect()
}

fn damaged_copies(bytes: &[u8], rng: &mut ChaCha8Rng) -> Vec<Vec<u8>> {
    let body = &bytes[..bytes.len() - 32];
    let reseal = |mut b: Vec<u8>| {
        let digest = Sha256::digest(&b);
        b.extend_from_slice(&digest);
        b
    };
    let mut out = Vec::new();
    let cuts: Vec<usize> = (0..64).chain((0..300).map(|_| rng.gen_range(0..bytes.len()))).collect();
    for cut in cuts {
        out.push(bytes[..cut].to_vec());
        out.push(reseal(body[..cut.min(body.len())].to_vec()));
    }
    for _ in 0..300 {
        let pos = rng.gen_range(0..bytes.len());
        let mut b = bytes.to_vec();
        b[pos] ^= 1 << rng.gen_range(0..8);
        out.push(b);
    }
    out
}

fn persistence() -> Verdict {
    verdict((|| {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let meta =
            Model::Meta(train_meta(&disjoint_corpus(10, 1), &MetaParams::default(), 3).map_err(|e| e.to_string())?);
        let params = NeuralParams {
            epochs: 2,
            ..NeuralParams::default()
        };
        let outcome = neural::train(&disjoint_corpus(5, 1), &disjoint_corpus(2, 2), &params, 3, |_, _, _| {
            Ok(())
        })
        .map_err(|e| e.to_string())?;
        let nn = Model::Neural(outcome.best);
        let docs = random_documents(100);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut rejected = 0;
        for model in [&meta, &nn] {
            let path = dir.path().join(model.system_name());
            save_model(model, &path).map_err(|e| e.to_string())?;
            let loaded = load_model(&path).map_err(|e| e.to_string())?;
            for d in &docs {
                let same = match (model, &loaded) {
                    (Model::Meta(a), Model::Meta(b)) => predict_meta(a, d) == predict_meta(b, d),
                    (Model::Neural(a), Model::Neural(b)) => predict_proba(a, d).ok() == predict_proba(b, d).ok(),
                    _ => false,
                };
                ensure(same, || {
                    format!(
                        "{} prediction changed after reload on {:?}",
                        model.system_name(),
                        d.text
                    )
                })?;
            }
            let bytes = fs::read(&path).unwrap();
            for damaged in damaged_copies(&bytes, &mut rng).into_iter().filter(|d| *d != bytes) {
                match catch_unwind(AssertUnwindSafe(|| Model::decode(&damaged))) {
                    Err(_) => return Err(format!("{} decoder panicked on damaged input", model.system_name())),
                    Ok(Ok(_)) => return Err(format!("{} accepted a damaged file", model.system_name())),
                    Ok(Err(_)) => rejected += 1,
                }
            }
        }
        Ok(format!(
            "meta and neural identical on 100 documents after reload; {rejected} damaged files handled without panics"
        ))
    })())
}
