//! Stacked meta-classifier.
//!
//! Eleven one-vs-rest linear SVMs, one per feature class, each emit seven
//! decision values. Concatenated in canonical feature-class order (and label
//! order within a class) they form a 77-column meta-feature row, which a
//! random forest classifies.
//!
//! Training rows are produced out of fold by default: the corpus is
//! stratified into folds and the row of a document in fold `j` comes from
//! base models (vocabulary included) trained on the other folds only. The
//! base models kept for prediction are then retrained on the whole corpus.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, LabelledCorpus};
use crate::error::{Error, Result};
use crate::features::{build_vocabulary, vectorize, FeatureClassSpec, Vocabulary};
use crate::forest::{predict_forest, train_forest, DecisionTree, ForestParams};
use crate::label::{LabelCode, NUM_LABELS};
use crate::seeds;
use crate::svm::{decision_values, train_ovr, LinearModel, SvmParams};

pub const NUM_FEATURE_CLASSES: usize = FeatureClassSpec::ALL.len();
pub const META_WIDTH: usize = NUM_FEATURE_CLASSES * NUM_LABELS;

/// Column of the decision value of `label` from the classifier of `spec`.
pub fn meta_column(spec: FeatureClassSpec, label: LabelCode) -> usize {
    spec.canonical_index() * NUM_LABELS + label.index()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackingMode {
    /// Rows come from base models that never saw the document.
    OutOfFold,
    /// Rows come from base models trained on the full corpus.
    InSample,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaParams {
    pub svm: SvmParams,
    pub min_count: usize,
    pub folds: usize,
    pub stacking: StackingMode,
    pub forest: ForestParams,
}

impl Default for MetaParams {
    fn default() -> Self {
        MetaParams {
            svm: SvmParams::default(),
            min_count: 1,
            folds: 10,
            stacking: StackingMode::OutOfFold,
            forest: ForestParams::default(),
        }
    }
}

/// One feature class: its vocabulary and the SVM trained on it. A class
/// whose grams never occur in the training corpus (all texts shorter than
/// its span) gets an empty vocabulary and a bias-only SVM.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseModel {
    pub vocabulary: Vocabulary,
    pub svm: LinearModel,
}

impl BaseModel {
    pub fn decision_values(&self, chars: &[char]) -> [f64; NUM_LABELS] {
        let x = vectorize(chars, &self.vocabulary);
        decision_values(&self.svm, &x).expect("vocabulary and model dimensions agree")
    }
}

pub fn train_base(
    corpus: &LabelledCorpus,
    spec: FeatureClassSpec,
    svm: &SvmParams,
    min_count: usize,
    seed: u64,
) -> Result<BaseModel> {
    let vocabulary = match build_vocabulary(corpus, spec, min_count) {
        Err(Error::EmptyVocabulary) => Vocabulary::empty(spec),
        other => other?,
    };
    let labels = corpus.labels()?;
    let x: Vec<_> = corpus
        .documents()
        .iter()
        .map(|d| vectorize(&d.chars(), &vocabulary))
        .collect();
    let svm = train_ovr(&x, &labels, spec, svm, seed)?;
    Ok(BaseModel { vocabulary, svm })
}

/// n x 77 meta-feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaFeatures {
    rows: Vec<Vec<f64>>,
}

impl MetaFeatures {
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), META_WIDTH)
    }
}

/// Which fold each document was held out in, and the corpus positions each
/// fold's base models were trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldAssignment {
    pub fold_of: Vec<usize>,
    pub training_positions: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct Stacking {
    pub features: MetaFeatures,
    pub labels: Vec<LabelCode>,
    pub folds: FoldAssignment,
    /// Base models retrained on the whole corpus, in canonical order.
    pub final_bases: Vec<BaseModel>,
}

fn svm_seed(seed: u64, spec_index: usize, fold: Option<usize>) -> u64 {
    match fold {
        Some(f) => seeds::derive(seed, &format!("svm/{spec_index}/fold{f}")),
        None => seeds::derive(seed, &format!("svm/{spec_index}/full")),
    }
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub fn assign_folds(labels: &[LabelCode], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid("folds must be at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; labels.len()];
    for class in LabelCode::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < folds {
            return Err(Error::invalid(format!(
                "class {class} has {} documents, fewer than {folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (rank, &pos) in members.iter().enumerate() {
            fold_of[pos] = rank % folds;
        }
    }
    Ok(fold_of)
}

pub fn stack_training_features(corpus: &LabelledCorpus, params: &MetaParams, seed: u64) -> Result<Stacking> {
    params.svm.validate()?;
    let labels = corpus.labels()?;
    let distinct = LabelCode::ALL.iter().filter(|l| corpus.count(**l) > 0).count();
    if distinct < 2 {
        return Err(Error::invalid("meta training needs at least 2 distinct labels"));
    }
    let n = corpus.len();
    let chars: Vec<Vec<char>> = corpus.documents().iter().map(Document::chars).collect();

    let final_bases: Vec<BaseModel> = FeatureClassSpec::ALL
        .par_iter()
        .enumerate()
        .map(|(s, &spec)| train_base(corpus, spec, &params.svm, params.min_count, svm_seed(seed, s, None)))
        .collect::<Result<_>>()?;

    let (fold_of, training_positions) = match params.stacking {
        StackingMode::InSample => (vec![0; n], vec![(0..n).collect::<Vec<_>>()]),
        StackingMode::OutOfFold => {
            let fold_of = assign_folds(&labels, params.folds, seeds::derive(seed, "folds"))?;
            let training = (0..params.folds)
                .map(|f| (0..n).filter(|&i| fold_of[i] != f).collect())
                .collect();
            (fold_of, training)
        }
    };

    let mut rows = vec![vec![0.0; META_WIDTH]; n];
    match params.stacking {
        StackingMode::InSample => {
            for (row, c) in rows.iter_mut().zip(&chars) {
                for (s, base) in final_bases.iter().enumerate() {
                    row[s * NUM_LABELS..(s + 1) * NUM_LABELS].copy_from_slice(&base.decision_values(c));
                }
            }
        }
        StackingMode::OutOfFold => {
            let jobs: Vec<(usize, usize)> = (0..params.folds)
                .flat_map(|f| (0..NUM_FEATURE_CLASSES).map(move |s| (f, s)))
                .collect();
            let blocks: Vec<Vec<(usize, [f64; NUM_LABELS])>> = jobs
                .par_iter()
                .map(|&(f, s)| {
                    let train = corpus.subset(&training_positions[f]);
                    let spec = FeatureClassSpec::ALL[s];
                    let base = train_base(&train, spec, &params.svm, params.min_count, svm_seed(seed, s, Some(f)))?;
                    Ok((0..n)
                        .filter(|&i| fold_of[i] == f)
                        .map(|i| (i, base.decision_values(&chars[i])))
                        .collect())
                })
                .collect::<Result<_>>()?;
            for (&(_, s), block) in jobs.iter().zip(blocks) {
                for (i, values) in block {
                    rows[i][s * NUM_LABELS..(s + 1) * NUM_LABELS].copy_from_slice(&values);
                }
            }
        }
    }

    Ok(Stacking {
        features: MetaFeatures { rows },
        labels,
        folds: FoldAssignment {
            fold_of,
            training_positions,
        },
        final_bases,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaModel {
    bases: Vec<BaseModel>,
    forest: Vec<DecisionTree>,
    params: MetaParams,
    seed: u64,
}

impl MetaModel {
    pub fn from_parts(bases: Vec<BaseModel>, forest: Vec<DecisionTree>, params: MetaParams, seed: u64) -> Result<Self> {
        if bases.len() != NUM_FEATURE_CLASSES {
            return Err(Error::invalid(format!(
                "expected {NUM_FEATURE_CLASSES} base models, got {}",
                bases.len()
            )));
        }
        for (base, spec) in bases.iter().zip(FeatureClassSpec::ALL) {
            if base.vocabulary.spec() != spec || base.svm.spec() != spec {
                return Err(Error::invalid(format!("base model out of canonical order at {spec}")));
            }
            if base.vocabulary.len() != base.svm.dim() {
                return Err(Error::DimensionMismatch {
                    expected: base.vocabulary.len(),
                    actual: base.svm.dim(),
                });
            }
        }
        if forest.is_empty() {
            return Err(Error::invalid("forest is empty"));
        }
        Ok(MetaModel {
            bases,
            forest,
            params,
            seed,
        })
    }

    pub fn bases(&self) -> &[BaseModel] {
        &self.bases
    }

    pub fn forest(&self) -> &[DecisionTree] {
        &self.forest
    }

    pub fn params(&self) -> &MetaParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The 77 meta-features of a document.
    pub fn meta_row(&self, doc: &Document) -> Vec<f64> {
        let chars = doc.chars();
        let mut row = Vec::with_capacity(META_WIDTH);
        for base in &self.bases {
            row.extend_from_slice(&base.decision_values(&chars));
        }
        row
    }
}

pub fn train_meta(corpus: &LabelledCorpus, params: &MetaParams, seed: u64) -> Result<MetaModel> {
    params.forest.validate(META_WIDTH)?;
    let stacking = stack_training_features(corpus, params, seed)?;
    let forest = train_forest(
        stacking.features.rows(),
        &stacking.labels,
        &params.forest,
        seeds::derive(seed, "forest"),
    )?;
    MetaModel::from_parts(stacking.final_bases, forest, *params, seed)
}

/// Predicted label and per-class vote fractions (multiples of 1/trees,
/// summing to 1). Fractions are vote shares, not calibrated probabilities.
pub fn predict_meta(model: &MetaModel, doc: &Document) -> (LabelCode, [f64; NUM_LABELS]) {
    predict_forest(&model.forest, &model.meta_row(doc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_layout() {
        assert_eq!(META_WIDTH, 77);
        assert_eq!(meta_column(FeatureClassSpec::ALL[0], LabelCode::LTB), 0);
        assert_eq!(meta_column(FeatureClassSpec::ALL[10], LabelCode::SUX), 76);
        assert_eq!(meta_column(FeatureClassSpec::skip(2, 1).unwrap(), LabelCode::NE), 37);
    }

    #[test]
    fn fold_assignment_is_stratified() {
        let labels: Vec<LabelCode> = (0..30).map(|i| LabelCode::ALL[i % 3]).collect();
        let folds = assign_folds(&labels, 5, 1).unwrap();
        for class in &LabelCode::ALL[..3] {
            let mut per_fold = [0; 5];
            for (l, f) in labels.iter().zip(&folds) {
                if l == class {
                    per_fold[*f] += 1;
                }
            }
            assert_eq!(per_fold, [2; 5]);
        }
        assert!(assign_folds(&labels, 11, 1).is_err());
        assert!(assign_folds(&labels, 1, 1).is_err());
    }
}
