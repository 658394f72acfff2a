//! Character n-gram and skip-gram feature classes.
//!
//! There are eleven feature classes: contiguous n-grams of order 1 to 5,
//! and bigrams and trigrams with exactly k skipped codepoints between
//! consecutive elements, for k in 1..=3. Each class gets its own vocabulary
//! and its own classifier.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::LabelledCorpus;
use crate::error::{Error, Result};

/// Longest gram arity of any valid feature class.
pub const MAX_ORDER: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramKind {
    Contiguous,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureClassSpec {
    kind: GramKind,
    n: usize,
    k: usize,
}

impl FeatureClassSpec {
    /// The eleven feature classes in canonical order: contiguous orders 1..=5,
    /// then skip classes ordered by skip distance and, within it, by arity.
    /// Meta-feature columns follow this order.
    pub const ALL: [FeatureClassSpec; 11] = [
        Self::c(1),
        Self::c(2),
        Self::c(3),
        Self::c(4),
        Self::c(5),
        Self::s(2, 1),
        Self::s(3, 1),
        Self::s(2, 2),
        Self::s(3, 2),
        Self::s(2, 3),
        Self::s(3, 3),
    ];

    const fn c(n: usize) -> Self {
        FeatureClassSpec {
            kind: GramKind::Contiguous,
            n,
            k: 0,
        }
    }

    const fn s(n: usize, k: usize) -> Self {
        FeatureClassSpec {
            kind: GramKind::Skip,
            n,
            k,
        }
    }

    pub fn new(kind: GramKind, n: usize, k: usize) -> Result<Self> {
        let valid = match kind {
            GramKind::Contiguous => (1..=5).contains(&n) && k == 0,
            GramKind::Skip => (2..=3).contains(&n) && (1..=3).contains(&k),
        };
        if valid {
            Ok(FeatureClassSpec { kind, n, k })
        } else {
            Err(Error::InvalidSpec(format!(
                "{kind:?} n={n} k={k} (contiguous: n in 1..=5, k=0; skip: n in 2..=3, k in 1..=3)"
            )))
        }
    }

    pub fn contiguous(n: usize) -> Result<Self> {
        Self::new(GramKind::Contiguous, n, 0)
    }

    pub fn skip(n: usize, k: usize) -> Result<Self> {
        Self::new(GramKind::Skip, n, k)
    }

    pub fn kind(&self) -> GramKind {
        self.kind
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn skip_distance(&self) -> usize {
        self.k
    }

    /// Number of codepoints covered by one gram.
    pub fn span(&self) -> usize {
        (self.n - 1) * (self.k + 1) + 1
    }

    /// Position of this spec in [`FeatureClassSpec::ALL`].
    pub fn canonical_index(&self) -> usize {
        Self::ALL.iter().position(|s| s == self).expect("validated spec")
    }
}

impl fmt::Display for FeatureClassSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            GramKind::Contiguous => write!(f, "contiguous(n={})", self.n),
            GramKind::Skip => write!(f, "skip(n={},k={})", self.n, self.k),
        }
    }
}

/// Calls `visit` once per gram occurrence, in order of starting position.
pub(crate) fn for_each_gram(text: &[char], spec: FeatureClassSpec, mut visit: impl FnMut(&[char])) {
    let span = spec.span();
    if text.len() < span {
        return;
    }
    let step = spec.k + 1;
    let n = spec.n;
    let mut buf = ['\0'; MAX_ORDER];
    for start in 0..=text.len() - span {
        if step == 1 {
            visit(&text[start..start + n]);
        } else {
            for (j, slot) in buf.iter_mut().take(n).enumerate() {
                *slot = text[start + j * step];
            }
            visit(&buf[..n]);
        }
    }
}

/// All gram occurrences of `text` under `spec`, in order of starting
/// position. Texts shorter than the gram span yield nothing.
pub fn enumerate_grams(text: &[char], spec: FeatureClassSpec) -> Vec<Vec<char>> {
    let mut out = Vec::with_capacity(text.len().saturating_sub(spec.span() - 1));
    for_each_gram(text, spec, |g| out.push(g.to_vec()));
    out
}

/// Dense indices for the grams of one feature class.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    spec: FeatureClassSpec,
    grams: Vec<Vec<char>>,
    index: HashMap<Vec<char>, u32>,
}

impl Vocabulary {
    /// A vocabulary with no grams; vectors over it are always empty.
    pub fn empty(spec: FeatureClassSpec) -> Self {
        Vocabulary {
            spec,
            grams: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Rebuilds a vocabulary from its gram list in index order.
    pub fn from_grams(spec: FeatureClassSpec, grams: Vec<Vec<char>>) -> Result<Self> {
        let mut index = HashMap::with_capacity(grams.len());
        for (i, g) in grams.iter().enumerate() {
            if g.len() != spec.n {
                return Err(Error::invalid(format!(
                    "gram of arity {} in a vocabulary for {spec}",
                    g.len()
                )));
            }
            if index.insert(g.clone(), i as u32).is_some() {
                return Err(Error::invalid(format!("duplicate gram at index {i}")));
            }
        }
        Ok(Vocabulary { spec, grams, index })
    }

    pub fn spec(&self) -> FeatureClassSpec {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    /// Grams in index order.
    pub fn grams(&self) -> &[Vec<char>] {
        &self.grams
    }

    pub fn get(&self, gram: &[char]) -> Option<usize> {
        self.index.get(gram).map(|&i| i as usize)
    }
}

/// Collects the grams of `spec` whose corpus frequency reaches `min_count`,
/// indexed by first occurrence in document order.
pub fn build_vocabulary(corpus: &LabelledCorpus, spec: FeatureClassSpec, min_count: usize) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::invalid("min_count must be at least 1"));
    }
    let mut first_seen: HashMap<Vec<char>, (usize, usize)> = HashMap::new();
    let mut order: Vec<Vec<char>> = Vec::new();
    for doc in corpus.documents() {
        let chars = doc.chars();
        for_each_gram(&chars, spec, |g| match first_seen.get_mut(g) {
            Some(entry) => entry.1 += 1,
            None => {
                first_seen.insert(g.to_vec(), (order.len(), 1));
                order.push(g.to_vec());
            }
        });
    }
    let grams: Vec<Vec<char>> = order.into_iter().filter(|g| first_seen[g].1 >= min_count).collect();
    if grams.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    Vocabulary::from_grams(spec, grams)
}

/// Sparse vector with strictly increasing indices and positive finite values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn new(dim: usize, entries: Vec<(u32, f64)>) -> Result<Self> {
        for (pos, &(i, v)) in entries.iter().enumerate() {
            if i as usize >= dim {
                return Err(Error::invalid(format!("index {i} out of range for dimension {dim}")));
            }
            if pos > 0 && entries[pos - 1].0 >= i {
                return Err(Error::invalid("indices must be strictly increasing"));
            }
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid(format!(
                    "value {v} at index {i} must be finite and positive"
                )));
            }
        }
        Ok(SparseVector { dim, entries })
    }

    pub fn empty(dim: usize) -> Self {
        SparseVector {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm_squared(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Dot product with the first `dim` entries of a dense vector.
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| dense[i as usize] * v).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            d[i as usize] = v;
        }
        d
    }
}

/// L2-normalized counts of the in-vocabulary grams of `text`.
/// Out-of-vocabulary grams are dropped; an all-OOV text gives the empty
/// vector.
pub fn vectorize(text: &[char], vocab: &Vocabulary) -> SparseVector {
    let mut hits: Vec<u32> = Vec::new();
    for_each_gram(text, vocab.spec, |g| {
        if let Some(&i) = vocab.index.get(g) {
            hits.push(i);
        }
    });
    hits.sort_unstable();
    let mut entries: Vec<(u32, f64)> = Vec::new();
    for i in hits {
        match entries.last_mut() {
            Some((last, count)) if *last == i => *count += 1.0,
            _ => entries.push((i, 1.0)),
        }
    }
    let norm = entries.iter().map(|(_, c)| c * c).sum::<f64>().sqrt();
    for (_, v) in &mut entries {
        *v /= norm;
    }
    SparseVector {
        dim: vocab.len(),
        entries,
    }
}
