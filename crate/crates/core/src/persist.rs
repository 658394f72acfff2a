//! Versioned binary model files.
//!
//! Layout (all integers little-endian, floats as raw IEEE-754 binary64 bits):
//!
//! ```text
//! magic      8 bytes   "CLIDMETA" or "CLIDGRU\0"
//! version    u32       FORMAT_VERSION
//! payload    ...       see docs/model-format.md
//! checksum   32 bytes  SHA-256 of every preceding byte
//! ```
//!
//! Every length prefix is checked against the bytes that remain before
//! anything is allocated, so truncated or corrupted files fail with an
//! error instead of panicking or exhausting memory.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::corpus::{Document, LabelledCorpus};

use crate::error::{Error, Result};
use crate::features::{FeatureClassSpec, GramKind, Vocabulary};
use crate::forest::{DecisionTree, ForestParams, Node};
use crate::label::{LabelCode, NUM_LABELS};
use crate::meta::{predict_meta, BaseModel, MetaModel, MetaParams, StackingMode};
use crate::neural::{predict_neural, Architecture, CharMap, GruClassifier, Params, Tensor};
use crate::svm::{LinearModel, SvmParams};

pub const FORMAT_VERSION: u32 = 1;
pub const META_MAGIC: &[u8; 8] = b"CLIDMETA";
pub const NEURAL_MAGIC: &[u8; 8] = b"CLIDGRU\0";
const CHECKSUM_LEN: usize = 32;

#[derive(Default)]
struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn len(&mut self, n: usize) {
        self.u64(n as u64);
    }
    fn f64s(&mut self, vs: &[f64]) {
        self.len(vs.len());
        vs.iter().for_each(|&v| self.f64(v));
    }
    fn chars(&mut self, cs: &[char]) {
        self.len(cs.len());
        cs.iter().for_each(|&c| self.u32(c as u32));
    }
}

struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

impl<'a> Decoder<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(corrupt("unexpected end of data"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    /// Reads a length prefix for elements of `elem_size` bytes each.
    fn len(&mut self, elem_size: usize) -> Result<usize> {
        let n = self.u64()?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if n.saturating_mul(elem_size.max(1) as u64) > remaining {
            return Err(corrupt(format!("length {n} exceeds remaining data")));
        }
        Ok(n as usize)
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn chars(&mut self) -> Result<Vec<char>> {
        let n = self.len(4)?;
        (0..n)
            .map(|_| {
                let v = self.u32()?;
                char::from_u32(v).ok_or_else(|| corrupt(format!("invalid codepoint {v:#x}")))
            })
            .collect()
    }
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
    fn finished(&self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(corrupt("trailing bytes after payload"))
        }
    }
}

fn seal(magic: &[u8; 8], payload: Encoder) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.buf.len() + 12 + CHECKSUM_LEN);
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&payload.buf);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

/// Checks magic, version and checksum; returns the payload.
fn open<'a>(bytes: &'a [u8], magic: &[u8; 8]) -> Result<Decoder<'a>> {
    if bytes.len() < 12 + CHECKSUM_LEN {
        return Err(corrupt("file too short"));
    }
    if &bytes[..8] != magic {
        return Err(corrupt("unrecognized file type"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != checksum {
        return Err(corrupt("checksum mismatch (file truncated or corrupted)"));
    }
    Ok(Decoder {
        buf: &body[12..],
        pos: 0,
    })
}

fn encode_labels(e: &mut Encoder) {
    e.u32(NUM_LABELS as u32);
    for l in LabelCode::ALL {
        let s = l.as_str().as_bytes();
        e.u8(s.len() as u8);
        e.buf.extend_from_slice(s);
    }
}

fn decode_labels(d: &mut Decoder<'_>) -> Result<()> {
    let n = d.u32()? as usize;
    if n != NUM_LABELS {
        return Err(corrupt(format!("model has {n} labels, expected {NUM_LABELS}")));
    }
    for l in LabelCode::ALL {
        let len = d.u8()? as usize;
        let s = d.take(len)?;
        if s != l.as_str().as_bytes() {
            return Err(corrupt("label order differs from this build"));
        }
    }
    Ok(())
}

fn encode_spec(e: &mut Encoder, spec: FeatureClassSpec) {
    e.u8(match spec.kind() {
        GramKind::Contiguous => 0,
        GramKind::Skip => 1,
    });
    e.u8(spec.order() as u8);
    e.u8(spec.skip_distance() as u8);
}

fn decode_spec(d: &mut Decoder<'_>) -> Result<FeatureClassSpec> {
    let kind = match d.u8()? {
        0 => GramKind::Contiguous,
        1 => GramKind::Skip,
        k => return Err(corrupt(format!("unknown gram kind {k}"))),
    };
    let n = d.u8()? as usize;
    let k = d.u8()? as usize;
    FeatureClassSpec::new(kind, n, k).map_err(|e| corrupt(e.to_string()))
}

pub fn encode_meta(model: &MetaModel) -> Vec<u8> {
    let mut e = Encoder::default();
    encode_labels(&mut e);
    let p = model.params();
    e.f64(p.svm.c);
    e.f64(p.svm.eps);
    e.u64(p.svm.max_outer as u64);
    e.u64(p.min_count as u64);
    e.u64(p.folds as u64);
    e.u8(match p.stacking {
        StackingMode::OutOfFold => 0,
        StackingMode::InSample => 1,
    });
    e.u64(model.seed());

    e.len(model.bases().len());
    for base in model.bases() {
        encode_spec(&mut e, base.vocabulary.spec());
        e.len(base.vocabulary.len());
        for gram in base.vocabulary.grams() {
            for &c in gram {
                e.u32(c as u32);
            }
        }
        e.f64(base.svm.c());
        for row in base.svm.rows() {
            for &w in row {
                e.f64(w);
            }
        }
    }

    let f = &p.forest;
    e.u64(f.trees as u64);
    e.u64(f.max_depth.map_or(u64::MAX, |d| d as u64));
    e.u64(f.mtry as u64);
    e.u64(f.min_leaf as u64);
    e.len(model.forest().len());
    for tree in model.forest() {
        e.len(tree.nodes().len());
        for node in tree.nodes() {
            match *node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    e.u8(0);
                    e.u32(feature);
                    e.f64(threshold);
                    e.u32(left);
                    e.u32(right);
                }
                Node::Leaf { counts } => {
                    e.u8(1);
                    counts.iter().for_each(|&c| e.u32(c));
                }
            }
        }
    }
    seal(META_MAGIC, e)
}

fn as_usize(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| corrupt(format!("{what} out of range")))
}

pub fn decode_meta(bytes: &[u8]) -> Result<MetaModel> {
    let mut d = open(bytes, META_MAGIC)?;
    decode_labels(&mut d)?;
    let svm = SvmParams {
        c: d.f64()?,
        eps: d.f64()?,
        max_outer: as_usize(d.u64()?, "max_outer")?,
    };
    let min_count = as_usize(d.u64()?, "min_count")?;
    let folds = as_usize(d.u64()?, "folds")?;
    let stacking = match d.u8()? {
        0 => StackingMode::OutOfFold,
        1 => StackingMode::InSample,
        s => return Err(corrupt(format!("unknown stacking mode {s}"))),
    };
    let seed = d.u64()?;

    let n_bases = d.len(3)?;
    let mut bases = Vec::with_capacity(n_bases);
    for _ in 0..n_bases {
        let spec = decode_spec(&mut d)?;
        let v = d.len(4 * spec.order())?;
        let mut grams = Vec::with_capacity(v);
        for _ in 0..v {
            let gram = (0..spec.order())
                .map(|_| {
                    let c = d.u32()?;
                    char::from_u32(c).ok_or_else(|| corrupt(format!("invalid codepoint {c:#x}")))
                })
                .collect::<Result<Vec<char>>>()?;
            grams.push(gram);
        }
        let vocabulary = Vocabulary::from_grams(spec, grams).map_err(|e| corrupt(e.to_string()))?;
        let c = d.f64()?;
        if (v + 1).saturating_mul(NUM_LABELS * 8) > d.buf.len() - d.pos {
            return Err(corrupt("weights truncated"));
        }
        let mut rows = Vec::with_capacity(NUM_LABELS);
        for _ in 0..NUM_LABELS {
            rows.push((0..=v).map(|_| d.f64()).collect::<Result<Vec<f64>>>()?);
        }
        let svm = LinearModel::from_parts(spec, v, c, rows).map_err(|e| corrupt(e.to_string()))?;
        bases.push(BaseModel { vocabulary, svm });
    }

    let trees = as_usize(d.u64()?, "trees")?;
    let max_depth = match d.u64()? {
        u64::MAX => None,
        v => Some(as_usize(v, "max_depth")?),
    };
    let forest_params = ForestParams {
        trees,
        max_depth,
        mtry: as_usize(d.u64()?, "mtry")?,
        min_leaf: as_usize(d.u64()?, "min_leaf")?,
    };
    let n_trees = d.len(1)?;
    let mut forest = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let n_nodes = d.len(1)?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            nodes.push(match d.u8()? {
                0 => Node::Split {
                    feature: d.u32()?,
                    threshold: d.f64()?,
                    left: d.u32()?,
                    right: d.u32()?,
                },
                1 => {
                    let mut counts = [0u32; NUM_LABELS];
                    for c in &mut counts {
                        *c = d.u32()?;
                    }
                    Node::Leaf { counts }
                }
                t => return Err(corrupt(format!("unknown node tag {t}"))),
            });
        }
        forest.push(DecisionTree::from_nodes(nodes, crate::meta::META_WIDTH).map_err(|e| corrupt(e.to_string()))?);
    }
    d.finished()?;
    let params = MetaParams {
        svm,
        min_count,
        folds,
        stacking,
        forest: forest_params,
    };
    MetaModel::from_parts(bases, forest, params, seed).map_err(|e| corrupt(e.to_string()))
}

pub fn encode_neural(model: &GruClassifier) -> Vec<u8> {
    let mut e = Encoder::default();
    encode_labels(&mut e);
    e.u64(model.arch.embed_dim as u64);
    e.u64(model.arch.hidden_dim as u64);
    e.f64(model.arch.dropout);
    e.chars(model.chars.chars());
    let tensors = model.params.tensors();
    e.len(tensors.len());
    for t in tensors {
        e.u64(t.rows() as u64);
        e.u64(t.cols() as u64);
        e.f64s(t.data());
    }
    seal(NEURAL_MAGIC, e)
}

pub fn decode_neural(bytes: &[u8]) -> Result<GruClassifier> {
    let mut d = open(bytes, NEURAL_MAGIC)?;
    decode_labels(&mut d)?;
    let embed_dim = as_usize(d.u64()?, "embedding size")?;
    let hidden_dim = as_usize(d.u64()?, "hidden size")?;
    let dropout = d.f64()?;
    if embed_dim == 0 || hidden_dim == 0 || embed_dim > 1 << 16 || hidden_dim > 1 << 16 {
        return Err(corrupt("implausible architecture sizes"));
    }
    if !(0.0..1.0).contains(&dropout) {
        return Err(corrupt("dropout out of range"));
    }
    let arch = Architecture {
        embed_dim,
        hidden_dim,
        dropout,
    };
    let chars = CharMap::from_chars(d.chars()?).map_err(|e| corrupt(e.to_string()))?;
    let (e, h) = (embed_dim as u64, hidden_dim as u64);
    let min_values = (chars.chars().len() as u64 + 1) * e + 3 * (e * h + 4 * h * h);
    if min_values.saturating_mul(8) > d.remaining() as u64 {
        return Err(corrupt("architecture larger than the stored tensors"));
    }
    let expected = Params::zeros(0, &arch);
    let n = d.len(16)?;
    if n != expected.tensors().len() {
        return Err(corrupt(format!(
            "expected {} tensors, found {n}",
            expected.tensors().len()
        )));
    }
    let mut model = GruClassifier::zeros(chars, arch);
    for (i, slot) in model.params.tensors_mut().into_iter().enumerate() {
        let rows = as_usize(d.u64()?, "rows")?;
        let cols = as_usize(d.u64()?, "cols")?;
        if rows != slot.rows() || cols != slot.cols() {
            return Err(corrupt(format!(
                "tensor {i} has shape {rows}x{cols}, expected {}x{}",
                slot.rows(),
                slot.cols()
            )));
        }
        let data = d.f64s()?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(corrupt(format!("tensor {i} holds a non-finite value")));
        }
        *slot = Tensor::from_vec(rows, cols, data).ok_or_else(|| corrupt(format!("tensor {i} size mismatch")))?;
    }
    d.finished()?;
    Ok(model)
}

/// Either kind of trained system.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Model {
    Meta(MetaModel),
    Neural(GruClassifier),
}

impl Model {
    pub fn system_name(&self) -> &'static str {
        match self {
            Model::Meta(_) => "meta",
            Model::Neural(_) => "neural",
        }
    }

    pub fn predict(&self, doc: &Document) -> Result<LabelCode> {
        match self {
            Model::Meta(m) => Ok(predict_meta(m, doc).0),
            Model::Neural(m) => predict_neural(m, doc),
        }
    }

    /// Predictions in corpus order; documents are scored in parallel.
    pub fn predict_all(&self, corpus: &LabelledCorpus) -> Result<Vec<LabelCode>> {
        corpus.documents().par_iter().map(|d| self.predict(d)).collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            Model::Meta(m) => encode_meta(m),
            Model::Neural(m) => encode_neural(m),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Model> {
        if bytes.starts_with(META_MAGIC) {
            decode_meta(bytes).map(Model::Meta)
        } else if bytes.starts_with(NEURAL_MAGIC) {
            decode_neural(bytes).map(Model::Neural)
        } else {
            Err(corrupt("not a model file"))
        }
    }
}

/// Writes via a temporary file in the destination directory and renames it
/// into place, so a failed write never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &model.encode())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Model::decode(&bytes)
}
