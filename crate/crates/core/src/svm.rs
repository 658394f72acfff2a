//! L2-regularized hinge-loss linear SVM trained by dual coordinate descent.
//!
//! The primal problem is
//!
//! ```text
//! min_w  1/2 |w|^2 + C * sum_i max(0, 1 - y_i w.x~_i)
//! ```
//!
//! where `x~` is `x` with a constant 1.0 appended when a bias is used (the
//! bias weight is therefore regularized like any other weight). The solver
//! works on the dual, updating one `alpha_i` in `[0, C]` at a time in closed
//! form and keeping `w = sum_i alpha_i y_i x~_i` up to date. No shrinking.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{FeatureClassSpec, SparseVector};
use crate::label::{argmax, LabelCode, NUM_LABELS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub eps: f64,
    pub max_outer: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            eps: 0.1,
            max_outer: 1000,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::invalid(format!("C must be positive, got {}", self.c)));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if self.max_outer == 0 {
            return Err(Error::invalid("max_outer must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bias {
    /// Append a constant 1.0 feature; the last weight is the bias.
    Augmented,
    /// No bias term. Exposed for testing against closed-form solutions.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySolution {
    /// Length `dim + 1` with [`Bias::Augmented`], `dim` otherwise.
    pub weights: Vec<f64>,
    pub alpha: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Snapshot handed to a sweep observer after each full pass.
pub struct SweepState<'a> {
    pub sweep: usize,
    pub alpha: &'a [f64],
    pub weights: &'a [f64],
    pub max_violation: f64,
}

/// Read access to a sparse training row.
pub trait FeatureRow: Sync {
    fn dim(&self) -> usize;
    /// `(index, value)` pairs with strictly increasing indices.
    fn entries(&self) -> &[(u32, f64)];

    fn dot(&self, dense: &[f64]) -> f64 {
        self.entries().iter().map(|&(i, v)| dense[i as usize] * v).sum()
    }

    fn norm_squared(&self) -> f64 {
        self.entries().iter().map(|(_, v)| v * v).sum()
    }
}

impl FeatureRow for SparseVector {
    fn dim(&self) -> usize {
        SparseVector::dim(self)
    }

    fn entries(&self) -> &[(u32, f64)] {
        SparseVector::entries(self)
    }
}

/// Sparse row whose values may be negative, for training on data that is
/// not a count vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedVector {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl SignedVector {
    /// Keeps every non-zero component, NaN included.
    pub fn from_dense(values: &[f64]) -> Self {
        SignedVector {
            dim: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, &v)| (i as u32, v))
                .collect(),
        }
    }
}

impl FeatureRow for SignedVector {
    fn dim(&self) -> usize {
        self.dim
    }

    fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }
}

fn check_inputs<R: FeatureRow>(x: &[R], y: &[f64]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::invalid("no training vectors"));
    }
    if x.len() != y.len() {
        return Err(Error::invalid(format!("{} vectors but {} targets", x.len(), y.len())));
    }
    if let Some(t) = y.iter().find(|&&t| t != 1.0 && t != -1.0) {
        return Err(Error::invalid(format!("targets must be +1 or -1, got {t}")));
    }
    let dim = x[0].dim();
    for v in x {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.dim(),
            });
        }
        if v.entries().iter().any(|(_, val)| !val.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
    }
    Ok(dim)
}

/// Trains one binary SVM with an augmented bias. Returns `dim + 1` weights.
pub fn train_binary<R: FeatureRow>(x: &[R], y: &[f64], params: &SvmParams, seed: u64) -> Result<Vec<f64>> {
    Ok(train_binary_with(x, y, params, seed, Bias::Augmented, |_| {})?.weights)
}

/// Full-control variant of [`train_binary`]: choose the bias handling and
/// observe the solver state after every sweep.
pub fn train_binary_with<R: FeatureRow>(
    x: &[R],
    y: &[f64],
    params: &SvmParams,
    seed: u64,
    bias: Bias,
    observer: impl FnMut(&SweepState<'_>),
) -> Result<BinarySolution> {
    params.validate()?;
    let dim = check_inputs(x, y)?;
    let has_pos = y.iter().any(|&t| t > 0.0);
    let has_neg = y.iter().any(|&t| t < 0.0);
    if !(has_pos && has_neg) {
        return Err(Error::invalid("training data contains a single class"));
    }
    Ok(solve(x, y, dim, params, seed, bias, observer))
}

fn solve<R: FeatureRow>(
    x: &[R],
    y: &[f64],
    dim: usize,
    params: &SvmParams,
    seed: u64,
    bias: Bias,
    mut observer: impl FnMut(&SweepState<'_>),
) -> BinarySolution {
    let c = params.c;
    let bias_term = match bias {
        Bias::Augmented => 1.0,
        Bias::None => 0.0,
    };
    let width = if bias == Bias::Augmented { dim + 1 } else { dim };
    let l = x.len();
    let qd: Vec<f64> = x.iter().map(|v| v.norm_squared() + bias_term * bias_term).collect();
    let mut alpha = vec![0.0; l];
    let mut w = vec![0.0; width];
    let mut order: Vec<usize> = (0..l).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < params.max_outer {
        order.shuffle(&mut rng);
        let mut max_violation: f64 = 0.0;
        for &i in &order {
            let xi = &x[i];
            let yi = y[i];
            let mut margin = xi.dot(&w);
            if bias == Bias::Augmented {
                margin += w[dim] * bias_term;
            }
            let g = yi * margin - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == c {
                g.max(0.0)
            } else {
                g
            };
            max_violation = max_violation.max(pg.abs());
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = if qd[i] > 0.0 {
                    (old - g / qd[i]).clamp(0.0, c)
                } else if g < 0.0 {
                    c
                } else {
                    0.0
                };
                let d = (alpha[i] - old) * yi;
                if d != 0.0 {
                    for &(j, v) in xi.entries() {
                        w[j as usize] += d * v;
                    }
                    if bias == Bias::Augmented {
                        w[dim] += d * bias_term;
                    }
                }
            }
        }
        sweeps += 1;
        observer(&SweepState {
            sweep: sweeps,
            alpha: &alpha,
            weights: &w,
            max_violation,
        });
        if max_violation < params.eps {
            converged = true;
            break;
        }
    }
    BinarySolution {
        weights: w,
        alpha,
        sweeps,
        converged,
    }
}

fn margin_of<R: FeatureRow>(w: &[f64], x: &R, bias: Bias) -> f64 {
    let m = x.dot(w);
    match bias {
        Bias::Augmented => m + w[x.dim()],
        Bias::None => m,
    }
}

/// `1/2 |w|^2 + C * sum hinge`.
pub fn primal_objective<R: FeatureRow>(w: &[f64], x: &[R], y: &[f64], c: f64, bias: Bias) -> f64 {
    let reg: f64 = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let loss: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| (1.0 - yi * margin_of(w, xi, bias)).max(0.0))
        .sum();
    reg + c * loss
}

/// Dual objective (to be minimized) `1/2 |w(alpha)|^2 - sum alpha`.
pub fn dual_objective(alpha: &[f64], w: &[f64]) -> f64 {
    0.5 * w.iter().map(|v| v * v).sum::<f64>() - alpha.iter().sum::<f64>()
}

/// One-vs-rest linear SVM over the seven label codes for one feature class.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    spec: FeatureClassSpec,
    dim: usize,
    c: f64,
    /// One row per label code in [`LabelCode::ALL`] order, each `dim + 1`
    /// long with the bias last.
    weights: Vec<Vec<f64>>,
}

impl LinearModel {
    pub fn from_parts(spec: FeatureClassSpec, dim: usize, c: f64, weights: Vec<Vec<f64>>) -> Result<Self> {
        if weights.len() != NUM_LABELS {
            return Err(Error::invalid(format!(
                "expected {NUM_LABELS} weight rows, got {}",
                weights.len()
            )));
        }
        for row in &weights {
            if row.len() != dim + 1 {
                return Err(Error::DimensionMismatch {
                    expected: dim + 1,
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite weight"));
            }
        }
        Ok(LinearModel { spec, dim, c, weights })
    }

    pub fn spec(&self) -> FeatureClassSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn weights(&self, label: LabelCode) -> &[f64] {
        &self.weights[label.index()]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.weights
    }
}

/// Trains one binary problem per label code (that code against the rest).
///
/// Class `c` uses seed `seed + c`. A label code absent from `labels` is
/// still trained, with every target at -1, so the model always has seven
/// rows and that class scores below the rest.
pub fn train_ovr<R: FeatureRow>(
    x: &[R],
    labels: &[LabelCode],
    spec: FeatureClassSpec,
    params: &SvmParams,
    seed: u64,
) -> Result<LinearModel> {
    params.validate()?;
    if x.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} vectors but {} labels",
            x.len(),
            labels.len()
        )));
    }
    let mut present = [false; NUM_LABELS];
    for l in labels {
        present[l.index()] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::invalid("one-vs-rest training needs at least 2 distinct labels"));
    }
    let dummy: Vec<f64> = vec![1.0; x.len()];
    let dim = check_inputs(x, &dummy)?;

    let weights: Vec<Vec<f64>> = LabelCode::ALL
        .par_iter()
        .map(|&class| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
            let class_seed = seed.wrapping_add(class.index() as u64);
            solve(x, &y, dim, params, class_seed, Bias::Augmented, |_| {}).weights
        })
        .collect();
    LinearModel::from_parts(spec, dim, params.c, weights)
}

/// `w_c . x~` for each label code, in label order.
pub fn decision_values(model: &LinearModel, x: &SparseVector) -> Result<[f64; NUM_LABELS]> {
    if x.dim() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            actual: x.dim(),
        });
    }
    let mut out = [0.0; NUM_LABELS];
    for (o, w) in out.iter_mut().zip(&model.weights) {
        *o = x.dot(w) + w[model.dim];
    }
    Ok(out)
}

/// Arg-max of [`decision_values`]; ties go to the lowest class index.
pub fn predict(model: &LinearModel, x: &SparseVector) -> Result<LabelCode> {
    let values = decision_values(model, x)?;
    Ok(LabelCode::ALL[argmax(&values)])
}
