//! Run configuration: a flat JSON object. Flags override the file, the file
//! overrides the defaults.

use std::path::{Path, PathBuf};

use cuneilid::forest::ForestParams;
use cuneilid::meta::{MetaParams, StackingMode, META_WIDTH};
use cuneilid::neural::{Architecture, NeuralParams};
use cuneilid::svm::SvmParams;
use cuneilid::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Meta,
    Neural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: Option<System>,
    pub seed: u64,
    /// Worker threads; 0 uses one per core.
    pub workers: usize,

    pub svm_c: f64,
    pub svm_eps: f64,
    pub svm_max_outer: usize,

    pub min_count: usize,
    pub folds: usize,
    pub stacking: StackingMode,
    pub forest_trees: usize,
    pub forest_mtry: usize,
    pub forest_max_depth: Option<usize>,
    pub forest_min_leaf: usize,

    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub init_scale: f64,
    pub unk_rate: f64,

    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    pub dev_curve: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let svm = SvmParams::default();
        let meta = MetaParams::default();
        let nn = NeuralParams::default();
        RunConfig {
            system: None,
            seed: 0,
            workers: 0,
            svm_c: svm.c,
            svm_eps: svm.eps,
            svm_max_outer: svm.max_outer,
            min_count: meta.min_count,
            folds: meta.folds,
            stacking: meta.stacking,
            forest_trees: meta.forest.trees,
            forest_mtry: meta.forest.mtry,
            forest_max_depth: meta.forest.max_depth,
            forest_min_leaf: meta.forest.min_leaf,
            embed_dim: nn.arch.embed_dim,
            hidden_dim: nn.arch.hidden_dim,
            dropout: nn.arch.dropout,
            epochs: nn.epochs,
            batch_size: nn.batch_size,
            learning_rate: nn.learning_rate,
            adam_beta1: nn.beta1,
            adam_beta2: nn.beta2,
            adam_eps: nn.adam_eps,
            init_scale: nn.init_scale,
            unk_rate: nn.unk_rate,
            train: None,
            dev: None,
            model: None,
            checkpoint_dir: None,
            dev_curve: None,
        }
    }
}

impl RunConfig {
    pub fn parse(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn svm(&self) -> SvmParams {
        SvmParams {
            c: self.svm_c,
            eps: self.svm_eps,
            max_outer: self.svm_max_outer,
        }
    }

    pub fn meta(&self) -> MetaParams {
        MetaParams {
            svm: self.svm(),
            min_count: self.min_count,
            folds: self.folds,
            stacking: self.stacking,
            forest: ForestParams {
                trees: self.forest_trees,
                max_depth: self.forest_max_depth,
                mtry: self.forest_mtry,
                min_leaf: self.forest_min_leaf,
            },
        }
    }

    pub fn neural(&self) -> NeuralParams {
        NeuralParams {
            arch: Architecture {
                embed_dim: self.embed_dim,
                hidden_dim: self.hidden_dim,
                dropout: self.dropout,
            },
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            init_scale: self.init_scale,
            unk_rate: self.unk_rate,
        }
    }

    /// Checks every hyperparameter, whichever system is selected.
    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.svm().validate().map_err(wrap)?;
        self.meta().forest.validate(META_WIDTH).map_err(wrap)?;
        if self.min_count == 0 {
            return Err(Error::Config("min_count must be at least 1".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if self.forest_max_depth == Some(0) {
            return Err(Error::Config("forest_max_depth must be at least 1".into()));
        }
        self.neural().validate().map_err(wrap)
    }
}
