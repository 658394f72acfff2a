//! Compositional character -> word -> sentence GRU classifier.
//!
//! Each word's characters are embedded and run through a two-layer GRU; the
//! final hidden state of the top layer is the word vector. The word vectors
//! go through a second two-layer GRU whose final hidden state is the
//! sentence vector, which feeds a dense softmax layer over the seven labels.
//! In training mode inverted dropout is applied to the sentence vector only.

mod gru;

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Document, LabelledCorpus};
use crate::error::{Error, Result};
use crate::label::{argmax, LabelCode, NUM_LABELS};
use crate::seeds;

pub use gru::{GruLayer, LayerCache, Tensor};

/// Index reserved for unknown characters.
pub const UNK: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Architecture {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            embed_dim: 25,
            hidden_dim: 30,
            dropout: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuralParams {
    pub arch: Architecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub init_scale: f64,
    /// Probability of replacing a training character by UNK.
    pub unk_rate: f64,
}

impl Default for NeuralParams {
    fn default() -> Self {
        NeuralParams {
            arch: Architecture::default(),
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            init_scale: 0.08,
            unk_rate: 0.01,
        }
    }
}

impl NeuralParams {
    pub fn validate(&self) -> Result<()> {
        let a = &self.arch;
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(what.to_string()))
            }
        };
        check(
            a.embed_dim > 0 && a.hidden_dim > 0,
            "embedding and hidden sizes must be positive",
        )?;
        check((0.0..1.0).contains(&a.dropout), "dropout must be in [0, 1)")?;
        check(self.epochs > 0, "epochs must be positive")?;
        check(self.batch_size > 0, "batch size must be positive")?;
        check(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            "learning rate must be positive",
        )?;
        check(
            (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2),
            "Adam betas must be in [0, 1)",
        )?;
        check(self.adam_eps > 0.0, "Adam epsilon must be positive")?;
        check(
            self.init_scale >= 0.0 && self.init_scale.is_finite(),
            "init scale must be non-negative",
        )?;
        check((0.0..=1.0).contains(&self.unk_rate), "unk rate must be in [0, 1]")
    }
}

/// All trainable tensors. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `chars x embed_dim`, row 0 is UNK.
    pub embedding: Tensor,
    /// Word encoder layers 0 and 1, sentence encoder layers 2 and 3.
    pub layers: [GruLayer; 4],
    /// `labels x hidden`.
    pub out_w: Tensor,
    pub out_b: Tensor,
}

pub type Gradients = Params;

const LAYER_TENSOR_NAMES: [&str; 9] = ["W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h"];
const LAYER_NAMES: [&str; 4] = ["word0", "word1", "sentence0", "sentence1"];

impl Params {
    pub fn zeros(vocab: usize, arch: &Architecture) -> Self {
        let (e, h) = (arch.embed_dim, arch.hidden_dim);
        Params {
            embedding: Tensor::zeros(vocab, e),
            layers: [
                GruLayer::zeros(e, h),
                GruLayer::zeros(h, h),
                GruLayer::zeros(h, h),
                GruLayer::zeros(h, h),
            ],
            out_w: Tensor::zeros(NUM_LABELS, h),
            out_b: Tensor::zeros(NUM_LABELS, 1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    /// Tensors in a fixed order: embedding, four layers (each W_z, U_z, b_z,
    /// W_r, U_r, b_r, W_h, U_h, b_h), output weights, output bias.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.embedding];
        for layer in &self.layers {
            v.extend(layer.tensors());
        }
        v.push(&self.out_w);
        v.push(&self.out_b);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.embedding];
        for layer in &mut self.layers {
            v.extend(layer.tensors_mut());
        }
        v.push(&mut self.out_w);
        v.push(&mut self.out_b);
        v
    }

    /// Names matching [`Params::tensors`].
    pub fn tensor_names() -> Vec<String> {
        let mut v = vec!["embedding".to_string()];
        for l in LAYER_NAMES {
            v.extend(LAYER_TENSOR_NAMES.iter().map(|t| format!("{l}.{t}")));
        }
        v.push("out.W".into());
        v.push("out.b".into());
        v
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data().iter().all(|v| v.is_finite()))
    }
}

/// Maps characters to embedding rows; index 0 is UNK.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CharMap {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl CharMap {
    /// Characters in first-occurrence order, excluding word separators.
    pub fn build(corpus: &LabelledCorpus) -> Self {
        let mut chars = Vec::new();
        for doc in corpus.documents() {
            for c in doc.text.chars().filter(|&c| c != ' ') {
                if !chars.contains(&c) {
                    chars.push(c);
                }
            }
        }
        Self::from_chars(chars).expect("no duplicates by construction")
    }

    pub fn from_chars(chars: Vec<char>) -> Result<Self> {
        let mut index = HashMap::with_capacity(chars.len());
        for (i, &c) in chars.iter().enumerate() {
            if index.insert(c, i + 1).is_some() {
                return Err(Error::invalid(format!("duplicate character {c:?} in character map")));
            }
        }
        Ok(CharMap { chars, index })
    }

    /// Known characters in index order (index = position + 1).
    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Embedding rows including UNK.
    pub fn size(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn get(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(UNK)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruClassifier {
    pub arch: Architecture,
    pub chars: CharMap,
    pub params: Params,
}

impl GruClassifier {
    pub fn zeros(chars: CharMap, arch: Architecture) -> Self {
        let params = Params::zeros(chars.size(), &arch);
        GruClassifier { arch, chars, params }
    }

    /// Every parameter drawn from `uniform(-scale, scale)`.
    pub fn init(chars: CharMap, arch: Architecture, scale: f64, rng: &mut impl Rng) -> Self {
        let mut model = Self::zeros(chars, arch);
        for t in model.params.tensors_mut() {
            *t = Tensor::uniform(t.rows(), t.cols(), scale, rng);
        }
        model
    }
}

/// Words are maximal runs of non-space characters (U+0020 separates).
pub fn tokenize(doc: &Document) -> Vec<Vec<char>> {
    doc.text
        .split(' ')
        .filter(|w| !w.is_empty())
        .map(|w| w.chars().collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A document mapped to embedding rows, plus the dropout mask drawn for it
/// (train mode only). Keeping these fixed makes forward passes repeatable.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDoc {
    pub words: Vec<Vec<usize>>,
    pub dropout_mask: Option<Vec<f64>>,
}

pub fn encode(
    model: &GruClassifier,
    doc: &Document,
    mode: Mode,
    unk_rate: f64,
    rng: &mut impl Rng,
) -> Result<EncodedDoc> {
    let words = tokenize(doc);
    if words.is_empty() {
        return Err(Error::invalid(format!("document {} has no words", doc.id)));
    }
    let mut ids: Vec<Vec<usize>> = words
        .iter()
        .map(|w| w.iter().map(|&c| model.chars.get(c)).collect())
        .collect();
    let dropout_mask = match mode {
        Mode::Eval => None,
        Mode::Train => {
            if unk_rate > 0.0 {
                for id in ids.iter_mut().flatten() {
                    if rng.gen_bool(unk_rate) {
                        *id = UNK;
                    }
                }
            }
            let p = model.arch.dropout;
            let keep = 1.0 - p;
            Some(
                (0..model.arch.hidden_dim)
                    .map(|_| if p > 0.0 && rng.gen_bool(p) { 0.0 } else { 1.0 / keep })
                    .collect(),
            )
        }
    };
    Ok(EncodedDoc {
        words: ids,
        dropout_mask,
    })
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub encoded: EncodedDoc,
    word_layers: Vec<(LayerCache, LayerCache)>,
    sentence_layers: (LayerCache, LayerCache),
    /// Sentence vector after dropout.
    pub features: Vec<f64>,
    pub probs: [f64; NUM_LABELS],
}

fn softmax(logits: &[f64]) -> [f64; NUM_LABELS] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_LABELS];
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
    out
}

pub fn forward_encoded(model: &GruClassifier, encoded: EncodedDoc) -> ForwardCache {
    let p = &model.params;
    let word_layers: Vec<(LayerCache, LayerCache)> = encoded
        .words
        .iter()
        .map(|ids| {
            let xs = ids.iter().map(|&i| p.embedding.row(i).to_vec()).collect();
            let first = p.layers[0].forward(xs);
            let second = p.layers[1].forward(first.outputs().to_vec());
            (first, second)
        })
        .collect();
    let word_vectors: Vec<Vec<f64>> = word_layers.iter().map(|(_, top)| top.last().to_vec()).collect();
    let s0 = p.layers[2].forward(word_vectors);
    let s1 = p.layers[3].forward(s0.outputs().to_vec());
    let mut features = s1.last().to_vec();
    if let Some(mask) = &encoded.dropout_mask {
        features.iter_mut().zip(mask).for_each(|(f, m)| *f *= m);
    }
    let mut logits = p.out_b.data().to_vec();
    p.out_w.matvec_add(&features, &mut logits);
    let probs = softmax(&logits);
    ForwardCache {
        encoded,
        word_layers,
        sentence_layers: (s0, s1),
        features,
        probs,
    }
}

/// Label distribution of `doc`. Train mode draws UNK corruption and a
/// dropout mask from `rng`; eval mode is deterministic.
pub fn forward(
    model: &GruClassifier,
    doc: &Document,
    mode: Mode,
    unk_rate: f64,
    rng: &mut impl Rng,
) -> Result<([f64; NUM_LABELS], ForwardCache)> {
    let encoded = encode(model, doc, mode, unk_rate, rng)?;
    let cache = forward_encoded(model, encoded);
    Ok((cache.probs, cache))
}

/// Cross-entropy `-ln p(gold)`.
pub fn loss(cache: &ForwardCache, gold: LabelCode) -> f64 {
    -cache.probs[gold.index()].ln()
}

/// Gradients of the cross-entropy loss of one forward pass.
pub fn backward(model: &GruClassifier, cache: &ForwardCache, gold: LabelCode) -> Gradients {
    let mut grad = model.params.zeros_like();
    backward_into(model, cache, gold, &mut grad);
    grad
}

pub(crate) fn backward_into(model: &GruClassifier, cache: &ForwardCache, gold: LabelCode, grad: &mut Gradients) {
    let p = &model.params;
    let hidden = model.arch.hidden_dim;
    let mut d_logits = cache.probs.to_vec();
    d_logits[gold.index()] -= 1.0;
    grad.out_w.outer_add(&d_logits, &cache.features);
    grad.out_b.add_vec(&d_logits);
    let mut d_sentence = vec![0.0; hidden];
    p.out_w.matvec_t_add(&d_logits, &mut d_sentence);
    if let Some(mask) = &cache.encoded.dropout_mask {
        d_sentence.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
    }

    let (s0, s1) = &cache.sentence_layers;
    let [g0, g1, g2, g3] = &mut grad.layers;
    let d_top = last_only(s1.outputs().len(), d_sentence);
    let d_s0 = p.layers[3].backward(s1, &d_top, g3);
    let d_words = p.layers[2].backward(s0, &d_s0, g2);

    for ((first, second), (ids, d_word)) in cache.word_layers.iter().zip(cache.encoded.words.iter().zip(d_words)) {
        let d_top = last_only(second.outputs().len(), d_word);
        let d_first = p.layers[1].backward(second, &d_top, g1);
        let d_embed = p.layers[0].backward(first, &d_first, g0);
        for (&id, d) in ids.iter().zip(d_embed) {
            grad.embedding.row_mut(id).iter_mut().zip(d).for_each(|(g, v)| *g += v);
        }
    }
}

fn last_only(steps: usize, last: Vec<f64>) -> Vec<Vec<f64>> {
    let mut d = vec![vec![0.0; last.len()]; steps];
    if let Some(slot) = d.last_mut() {
        *slot = last;
    }
    d
}

/// Arg-max of the eval-mode distribution; ties go to the lowest index.
pub fn predict_neural(model: &GruClassifier, doc: &Document) -> Result<LabelCode> {
    Ok(LabelCode::ALL[argmax(&predict_proba(model, doc)?)])
}

pub fn predict_proba(model: &GruClassifier, doc: &Document) -> Result<[f64; NUM_LABELS]> {
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    Ok(forward(model, doc, Mode::Eval, 0.0, &mut unused)?.0)
}

/// Fraction of misclassified documents.
pub fn error_rate(model: &GruClassifier, corpus: &LabelledCorpus) -> Result<f64> {
    let labels = corpus.labels()?;
    let mut wrong = 0;
    for (doc, gold) in corpus.documents().iter().zip(labels) {
        if predict_neural(model, doc)? != gold {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / corpus.len() as f64)
}

/// Adam optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Params,
    v: Params,
    step: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(params: &Params, cfg: &NeuralParams) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
        }
    }

    pub fn update(&mut self, params: &mut Params, grad: &Gradients) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for i in 0..p.data().len() {
                let gi = g.data()[i];
                let mi = &mut m.data_mut()[i];
                *mi = b1 * *mi + (1.0 - b1) * gi;
                let mhat = *mi / bc1;
                let vi = &mut v.data_mut()[i];
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let vhat = *vi / bc2;
                p.data_mut()[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Result of [`train`]: the selected checkpoint and the per-epoch history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: GruClassifier,
    /// 1-based epoch of `best`.
    pub best_epoch: usize,
    pub dev_errors: Vec<f64>,
    pub train_losses: Vec<f64>,
    /// One snapshot per completed epoch.
    pub checkpoints: Vec<GruClassifier>,
}

impl TrainOutcome {
    pub fn best_dev_error(&self) -> f64 {
        self.dev_errors[self.best_epoch - 1]
    }
}

/// Minibatch Adam training with per-epoch dev evaluation; keeps the
/// checkpoint with the lowest dev error (earliest epoch on ties).
///
/// `on_epoch` is called with each finished epoch's checkpoint, e.g. to
/// persist it.
pub fn train(
    train_corpus: &LabelledCorpus,
    dev_corpus: &LabelledCorpus,
    params: &NeuralParams,
    seed: u64,
    mut on_epoch: impl FnMut(usize, &GruClassifier, f64) -> Result<()>,
) -> Result<TrainOutcome> {
    params.validate()?;
    if train_corpus.is_empty() || dev_corpus.is_empty() {
        return Err(Error::invalid("training and development corpora must be non-empty"));
    }
    let labels = train_corpus.labels()?;
    dev_corpus.labels()?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, "neural/init"));
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, "neural/shuffle"));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, "neural/noise"));

    let chars = CharMap::build(train_corpus);
    let mut model = GruClassifier::init(chars, params.arch, params.init_scale, &mut init_rng);
    let mut adam = Adam::new(&model.params, params);
    let mut grad = model.params.zeros_like();

    let mut order: Vec<usize> = (0..train_corpus.len()).collect();
    let mut outcome = TrainOutcome {
        best: model.clone(),
        best_epoch: 0,
        dev_errors: Vec::with_capacity(params.epochs),
        train_losses: Vec::with_capacity(params.epochs),
        checkpoints: Vec::with_capacity(params.epochs),
    };
    for epoch in 1..=params.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(params.batch_size).enumerate() {
            grad.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
            let mut batch_loss = 0.0;
            for &i in batch {
                let doc = &train_corpus.documents()[i];
                let encoded = encode(&model, doc, Mode::Train, params.unk_rate, &mut noise_rng)?;
                let cache = forward_encoded(&model, encoded);
                batch_loss += loss(&cache, labels[i]);
                backward_into(&model, &cache, labels[i], &mut grad);
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged(format!("non-finite loss in epoch {epoch}, batch {b}")));
            }
            let scale = 1.0 / batch.len() as f64;
            for t in grad.tensors_mut() {
                t.data_mut().iter_mut().for_each(|g| *g *= scale);
            }
            adam.update(&mut model.params, &grad);
            if !model.params.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite parameters after epoch {epoch}, batch {b}"
                )));
            }
            epoch_loss += batch_loss;
        }
        let dev_error = error_rate(&model, dev_corpus)?;
        outcome.train_losses.push(epoch_loss / train_corpus.len() as f64);
        outcome.dev_errors.push(dev_error);
        outcome.checkpoints.push(model.clone());
        on_epoch(epoch, &model, dev_error)?;
        if outcome.best_epoch == 0 || dev_error < outcome.dev_errors[outcome.best_epoch - 1] {
            outcome.best = model.clone();
            outcome.best_epoch = epoch;
        }
    }
    Ok(outcome)
}

/// `epoch<TAB>dev_error` lines.
pub fn format_dev_curve(dev_errors: &[f64]) -> String {
    dev_errors
        .iter()
        .enumerate()
        .map(|(i, e)| format!("{}\t{e}\n", i + 1))
        .collect()
}

pub fn write_dev_curve(dev_errors: &[f64], path: &Path) -> Result<()> {
    std::fs::write(path, format_dev_curve(dev_errors)).map_err(|e| Error::io(path, e))
}
