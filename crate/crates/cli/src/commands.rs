use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use cuneilid::corpus::{describe, format_corpus, load_corpus, load_texts, stratified_split, LabelledCorpus};
use cuneilid::eval::{compare, confusion_csv, confusion_svg, format_predictions, score, EvalReport};
use cuneilid::features::{enumerate_grams, FeatureClassSpec, GramKind};
use cuneilid::meta::train_meta;
use cuneilid::neural::{self, format_dev_curve};
use cuneilid::persist::{encode_neural, load_model, Model};
use cuneilid::{Error, LabelCode};

use crate::config::{RunConfig, System};
use crate::output::{ensure_distinct, Outputs};
use crate::{
    Command, CompareArgs, DescribeArgs, EvaluateArgs, FeaturizeArgs, KindArg, PredictArgs, SplitArgs, TrainArgs,
};

#[derive(Debug)]
pub enum Failure {
    /// Bad flags; reported with the subcommand's usage and exit code 2.
    Usage {
        command: &'static str,
        kind: ErrorKind,
        message: String,
    },
    /// Exit code 1.
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn usage(command: &'static str, kind: ErrorKind, message: impl Into<String>) -> Failure {
    Failure::Usage {
        command,
        kind,
        message: message.into(),
    }
}

pub fn run(command: Command) -> CmdResult {
    match command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => compare_models(a),
        Command::Featurize(a) => featurize(a),
        Command::Describe(a) => describe_corpus(a),
        Command::Split(a) => split(a),
    }
}

/// Applies command-line flags on top of the (file or default) config.
fn merge(mut cfg: RunConfig, a: &TrainArgs) -> RunConfig {
    fn set<T: Clone>(slot: &mut T, flag: &Option<T>) {
        if let Some(v) = flag {
            *slot = v.clone();
        }
    }
    cfg.system = a.system.or(cfg.system);
    set(&mut cfg.seed, &a.seed);
    set(&mut cfg.workers, &a.workers);
    cfg.train = a.train.clone().or(cfg.train);
    cfg.dev = a.dev.clone().or(cfg.dev);
    cfg.model = a.model.clone().or(cfg.model);
    cfg.checkpoint_dir = a.checkpoint_dir.clone().or(cfg.checkpoint_dir);
    cfg.dev_curve = a.dev_curve.clone().or(cfg.dev_curve);
    cfg
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

fn train(a: TrainArgs) -> CmdResult {
    let file_cfg = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cfg = merge(file_cfg, &a);
    let missing = |what: &str| {
        usage(
            "train",
            ErrorKind::MissingRequiredArgument,
            format!("{what} is required (as a flag or config key)"),
        )
    };
    let system = cfg.system.ok_or_else(|| missing("--system"))?;
    let train_path = cfg.train.clone().ok_or_else(|| missing("--train"))?;
    let model_path = cfg.model.clone().ok_or_else(|| missing("--model"))?;
    if system == System::Neural && cfg.dev.is_none() {
        return Err(missing(
            "--dev (neural training selects its checkpoint on a development set)",
        ));
    }
    cfg.validate()?;

    let mut inputs: Vec<&Path> = vec![&train_path];
    inputs.extend(cfg.dev.as_deref());
    inputs.extend(a.config.as_deref());
    let mut outs: Vec<&Path> = vec![&model_path];
    outs.extend(cfg.dev_curve.as_deref());
    ensure_distinct(&outs, &inputs)?;

    let pool = thread_pool(cfg.workers)?;
    let started = Instant::now();
    let train_corpus = load_corpus(&train_path, true)?;
    let mut outputs = Outputs::new();
    let summary = pool.install(|| -> Result<String, Error> {
        match system {
            System::Meta => {
                let model = train_meta(&train_corpus, &cfg.meta(), cfg.seed)?;
                outputs.write(&model_path, &Model::Meta(model).encode())?;
                Ok(String::new())
            }
            System::Neural => {
                let dev_path = cfg.dev.as_ref().expect("checked above");
                let dev_corpus = load_corpus(dev_path, true)?;
                if let Some(dir) = &cfg.checkpoint_dir {
                    outputs.create_dir(dir)?;
                }
                let mut checkpoints: Vec<(PathBuf, Vec<u8>)> = Vec::new();
                let outcome = neural::train(&train_corpus, &dev_corpus, &cfg.neural(), cfg.seed, |epoch, m, _| {
                    if let Some(dir) = &cfg.checkpoint_dir {
                        checkpoints.push((dir.join(format!("epoch-{epoch:03}.model")), encode_neural(m)));
                    }
                    Ok(())
                })?;
                for (path, bytes) in &checkpoints {
                    outputs.write(path, bytes)?;
                }
                if let Some(path) = &cfg.dev_curve {
                    outputs.write(path, format_dev_curve(&outcome.dev_errors).as_bytes())?;
                }
                outputs.write(&model_path, &Model::Neural(outcome.best.clone()).encode())?;
                Ok(format!(
                    " best_epoch={} best_dev_error={:.4}",
                    outcome.best_epoch,
                    outcome.best_dev_error()
                ))
            }
        }
    })?;
    outputs.commit();
    println!(
        "system={} train_docs={} elapsed_s={:.2}{summary}",
        match system {
            System::Meta => "meta",
            System::Neural => "neural",
        },
        train_corpus.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn predict(a: PredictArgs) -> CmdResult {
    ensure_distinct(&[&a.output], &[&a.model, &a.input])?;
    let model = load_model(&a.model)?;
    let texts = load_texts(&a.input)?;
    let predictions = model.predict_all(&texts)?;
    let mut outputs = Outputs::new();
    outputs.write(&a.output, format_predictions(&predictions).as_bytes())?;
    outputs.commit();
    Ok(())
}

fn evaluate_on(model: &Model, test: &LabelledCorpus) -> Result<(EvalReport, Vec<LabelCode>), Error> {
    let gold = test.labels()?;
    let predictions = model.predict_all(test)?;
    Ok((score(model.system_name(), &gold, &predictions)?, predictions))
}

fn load_test(path: &Path) -> Result<LabelledCorpus, Error> {
    let test = load_corpus(path, true)?;
    if test.is_empty() {
        return Err(Error::InvalidInput(format!("{}: test corpus is empty", path.display())));
    }
    Ok(test)
}

fn evaluate(a: EvaluateArgs) -> CmdResult {
    let mut outs: Vec<&Path> = vec![&a.report];
    outs.extend(a.confusion_csv.as_deref());
    outs.extend(a.confusion_svg.as_deref());
    ensure_distinct(&outs, &[&a.model, &a.test])?;
    let model = load_model(&a.model)?;
    let test = load_test(&a.test)?;
    let (report, _) = evaluate_on(&model, &test)?;

    let mut outputs = Outputs::new();
    outputs.write(&a.report, (report.to_json() + "\n").as_bytes())?;
    if let Some(path) = &a.confusion_csv {
        outputs.write(path, confusion_csv(&report.matrix).as_bytes())?;
    }
    if let Some(path) = &a.confusion_svg {
        let title = format!("Confusion matrix: {}", report.system);
        outputs.write(path, confusion_svg(&report.matrix, &title).as_bytes())?;
    }
    outputs.commit();
    println!("macro_f1 {:.3}", report.macro_f1);
    println!("accuracy {:.3}", report.accuracy);
    Ok(())
}

fn compare_models(a: CompareArgs) -> CmdResult {
    ensure_distinct(&[&a.report], &[&a.model_a, &a.model_b, &a.test])?;
    let model_a = load_model(&a.model_a)?;
    let model_b = load_model(&a.model_b)?;
    let test = load_test(&a.test)?;
    let gold = test.labels()?;
    let (report_a, pred_a) = evaluate_on(&model_a, &test)?;
    let (report_b, pred_b) = evaluate_on(&model_b, &test)?;
    let cmp = compare(&report_a, &report_b, &pred_a, &pred_b, &gold)?;

    let json = serde_json::to_string_pretty(&cmp).map_err(|e| Error::InvalidInput(e.to_string()))? + "\n";
    let mut outputs = Outputs::new();
    outputs.write(&a.report, json.as_bytes())?;
    outputs.commit();
    println!("macro_f1_a {:.3}", cmp.macro_f1_a);
    println!("macro_f1_b {:.3}", cmp.macro_f1_b);
    println!("macro_f1_delta {:+.3}", cmp.macro_f1_delta);
    println!(
        "mcnemar b={} c={} p={:.4}",
        cmp.mcnemar.b, cmp.mcnemar.c, cmp.mcnemar.p_value
    );
    Ok(())
}

fn format_gram(gram: &[char]) -> String {
    let parts: Vec<String> = gram.iter().map(char::to_string).collect();
    format!("({})", parts.join(","))
}

fn featurize(a: FeaturizeArgs) -> CmdResult {
    let (kind, k) = match (a.kind, a.k) {
        (KindArg::Contiguous, k) => (GramKind::Contiguous, k.unwrap_or(0)),
        (KindArg::Skip, Some(k)) => (GramKind::Skip, k),
        (KindArg::Skip, None) => {
            return Err(usage(
                "featurize",
                ErrorKind::MissingRequiredArgument,
                "--k is required for skip grams",
            ))
        }
    };
    let spec = FeatureClassSpec::new(kind, a.n, k)
        .map_err(|e| usage("featurize", ErrorKind::ValueValidation, e.to_string()))?;
    ensure_distinct(&[&a.output], &[&a.input])?;
    let texts = load_texts(&a.input)?;
    let mut out = String::new();
    for doc in texts.documents() {
        let grams: Vec<String> = enumerate_grams(&doc.chars(), spec)
            .iter()
            .map(|g| format_gram(g))
            .collect();
        out.push_str(&grams.join(" "));
        out.push('\n');
    }
    let mut outputs = Outputs::new();
    outputs.write(&a.output, out.as_bytes())?;
    outputs.commit();
    Ok(())
}

fn describe_corpus(a: DescribeArgs) -> CmdResult {
    let corpus = load_corpus(&a.input, !a.unlabelled)?;
    print!("{}", describe(&corpus));
    Ok(())
}

fn split(a: SplitArgs) -> CmdResult {
    if a.fractions.len() != a.outputs.len() {
        return Err(usage(
            "split",
            ErrorKind::WrongNumberOfValues,
            format!("{} fractions but {} --output paths", a.fractions.len(), a.outputs.len()),
        ));
    }
    let outs: Vec<&Path> = a.outputs.iter().map(PathBuf::as_path).collect();
    ensure_distinct(&outs, &[&a.input])?;
    let corpus = load_corpus(&a.input, true)?;
    let parts = stratified_split(&corpus, &a.fractions, a.seed)?;
    let mut outputs = Outputs::new();
    for (part, path) in parts.iter().zip(&a.outputs) {
        outputs.write(path, format_corpus(part).as_bytes())?;
    }
    outputs.commit();
    Ok(())
}
