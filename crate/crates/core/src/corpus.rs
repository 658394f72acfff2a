//! Line-oriented corpus files.
//!
//! A labelled file holds one instance per line as `LABEL<TAB>TEXT`; an
//! unlabelled file holds only `TEXT`. Empty lines are skipped and trailing
//! whitespace is stripped. No Unicode normalization is applied.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::label::{LabelCode, NUM_LABELS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    /// 0-based ordinal of the instance in its source file (empty lines are
    /// not counted).
    pub id: usize,
    pub text: String,
    pub label: Option<LabelCode>,
}

impl Document {
    pub fn new(id: usize, text: impl Into<String>, label: Option<LabelCode>) -> Self {
        Document {
            id,
            text: text.into(),
            label,
        }
    }

    pub fn chars(&self) -> Vec<char> {
        self.text.chars().collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelledCorpus {
    documents: Vec<Document>,
    class_counts: [usize; NUM_LABELS],
}

impl LabelledCorpus {
    /// Builds a corpus from documents whose ids must be unique.
    ///
    /// Corpora read from a file have contiguous ids; parts produced by
    /// [`stratified_split`] keep the ids of the source corpus.
    pub fn from_documents(documents: Vec<Document>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(documents.len());
        let mut class_counts = [0; NUM_LABELS];
        for doc in &documents {
            if !seen.insert(doc.id) {
                return Err(Error::invalid(format!("duplicate document id {}", doc.id)));
            }
            validate_text(&doc.text).map_err(Error::InvalidInput)?;
            if let Some(l) = doc.label {
                class_counts[l.index()] += 1;
            }
        }
        Ok(LabelledCorpus {
            documents,
            class_counts,
        })
    }

    /// Convenience constructor numbering documents 0..n.
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (LabelCode, S)>) -> Result<Self> {
        let docs = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (l, t))| Document::new(i, t, Some(l)))
            .collect();
        Self::from_documents(docs)
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn class_counts(&self) -> &[usize; NUM_LABELS] {
        &self.class_counts
    }

    pub fn count(&self, label: LabelCode) -> usize {
        self.class_counts[label.index()]
    }

    pub fn is_fully_labelled(&self) -> bool {
        self.documents.iter().all(|d| d.label.is_some())
    }

    /// Gold labels in document order; errors if any document is unlabelled.
    pub fn labels(&self) -> Result<Vec<LabelCode>> {
        self.documents
            .iter()
            .map(|d| {
                d.label
                    .ok_or_else(|| Error::invalid(format!("document {} has no label", d.id)))
            })
            .collect()
    }

    /// Sub-corpus of the documents at the given positions, in that order.
    pub fn subset(&self, positions: &[usize]) -> LabelledCorpus {
        let documents: Vec<Document> = positions.iter().map(|&p| self.documents[p].clone()).collect();
        let mut class_counts = [0; NUM_LABELS];
        for l in documents.iter().filter_map(|d| d.label) {
            class_counts[l.index()] += 1;
        }
        LabelledCorpus {
            documents,
            class_counts,
        }
    }
}

fn validate_text(text: &str) -> std::result::Result<(), String> {
    if text.trim_end().is_empty() {
        return Err("empty text".into());
    }
    if text.contains(['\t', '\n', '\r']) {
        return Err("text contains a TAB or line terminator".into());
    }
    Ok(())
}

fn decode_utf8(bytes: &[u8]) -> Result<&str> {
    std::str::from_utf8(bytes).map_err(|e| Error::InvalidUtf8 {
        offset: e.valid_up_to(),
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: impl AsRef<Path>, expect_labels: bool) -> Result<LabelledCorpus> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    parse_corpus(decode_utf8(&bytes)?, expect_labels)
}

pub fn parse_corpus(content: &str, expect_labels: bool) -> Result<LabelledCorpus> {
    let mut documents = Vec::new();
    for (lineno, raw) in content.split('\n').enumerate() {
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        let line_no = lineno + 1;
        let parse_err = |message: String| Error::Parse { line: line_no, message };
        let (label, text) = if expect_labels {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(parse_err(format!(
                    "expected 2 TAB-separated fields, found {}",
                    fields.len()
                )));
            }
            let label = fields[0]
                .parse::<LabelCode>()
                .map_err(|_| parse_err(format!("unknown label {}", fields[0])))?;
            (Some(label), fields[1])
        } else {
            (None, line)
        };
        validate_text(text).map_err(parse_err)?;
        documents.push(Document::new(documents.len(), text, label));
    }
    LabelledCorpus::from_documents(documents)
}

/// Loads instance texts for prediction. A leading `FIELD<TAB>` is treated as
/// a label column and discarded without validation.
pub fn load_texts(path: impl AsRef<Path>) -> Result<LabelledCorpus> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let content = decode_utf8(&bytes)?;
    let mut documents = Vec::new();
    for (lineno, raw) in content.split('\n').enumerate() {
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        let text = match line.split_once('\t') {
            Some((_, text)) => text,
            None => line,
        };
        validate_text(text).map_err(|message| Error::Parse {
            line: lineno + 1,
            message,
        })?;
        documents.push(Document::new(documents.len(), text, None));
    }
    LabelledCorpus::from_documents(documents)
}

/// Serializes a corpus in the file shape read by [`parse_corpus`].
pub fn format_corpus(corpus: &LabelledCorpus) -> String {
    let mut out = String::new();
    for doc in corpus.documents() {
        if let Some(l) = doc.label {
            out.push_str(l.as_str());
            out.push('\t');
        }
        out.push_str(&doc.text);
        out.push('\n');
    }
    out
}

pub fn write_corpus(corpus: &LabelledCorpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(format_corpus(corpus).as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Splits a fully labelled corpus into disjoint parts with per-class sizes
/// proportional to `fractions`.
///
/// Per class, the part sizes are `floor(n * f)` plus one extra document for
/// the parts with the largest remainders, so every part is within one
/// document of exact proportionality. Documents keep their source order
/// inside each part.
pub fn stratified_split(corpus: &LabelledCorpus, fractions: &[f64], seed: u64) -> Result<Vec<LabelledCorpus>> {
    if fractions.is_empty() || fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(Error::invalid("fractions must be non-negative and finite"));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("fractions must sum to 1"));
    }
    let labels = corpus.labels()?;
    let parts = fractions.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); parts];
    for label in LabelCode::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < parts {
            return Err(Error::invalid(format!(
                "class {label} has {} documents, fewer than {parts} parts",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let sizes = apportion(members.len(), fractions);
        let mut start = 0;
        for (part, size) in sizes.into_iter().enumerate() {
            assigned[part].extend_from_slice(&members[start..start + size]);
            start += size;
        }
    }
    Ok(assigned
        .into_iter()
        .map(|mut positions| {
            positions.sort_unstable();
            corpus.subset(&positions)
        })
        .collect())
}

/// Largest-remainder apportionment of `n` items.
pub(crate) fn apportion(n: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut remaining = n.saturating_sub(sizes.iter().sum());
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        sizes[i] += 1;
        remaining -= 1;
    }
    sizes
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub documents: usize,
    pub class_counts: Vec<(LabelCode, usize)>,
    pub unlabelled: usize,
    pub total_codepoints: usize,
    pub mean_length: f64,
}

pub fn describe(corpus: &LabelledCorpus) -> CorpusSummary {
    let total_codepoints: usize = corpus.documents().iter().map(|d| d.text.chars().count()).sum();
    let n = corpus.len();
    CorpusSummary {
        documents: n,
        class_counts: LabelCode::ALL.iter().map(|&l| (l, corpus.count(l))).collect(),
        unlabelled: corpus.documents().iter().filter(|d| d.label.is_none()).count(),
        total_codepoints,
        mean_length: if n == 0 {
            0.0
        } else {
            total_codepoints as f64 / n as f64
        },
    }
}

impl fmt::Display for CorpusSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "label\tdocuments")?;
        for (label, count) in &self.class_counts {
            writeln!(f, "{label}\t{count}")?;
        }
        if self.unlabelled > 0 {
            writeln!(f, "-\t{}", self.unlabelled)?;
        }
        writeln!(f, "total\t{}", self.documents)?;
        writeln!(f, "codepoints\t{}", self.total_codepoints)?;
        write!(f, "mean_length\t{:.3}", self.mean_length)
    }
}
