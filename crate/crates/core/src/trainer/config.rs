use crate::attention::{AttentionConfig, ScoreType};
use crate::kv::{KvReader, KvWriter};
use crate::{Error, Result};

/// Which branches the model carries and how the composite update treats
/// them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Class head only; no domain classifier.
    Baseline,
    /// Adversarial domain classifier fed raw deep features.
    Adit,
    /// Adversarial domain classifier fed attention-weighted contexts.
    Aadit,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Adit => "adit",
            Mode::Aadit => "aadit",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "adit" => Ok(Mode::Adit),
            "aadit" => Ok(Mode::Aadit),
            other => Err(Error::Config(format!(
                "unknown mode {other:?} (expected baseline, adit or aadit)"
            ))),
        }
    }
}

/// Everything a training run depends on besides the dataset. A run is fully
/// determined by `(TrainConfig, dataset file)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Reversal weight lambda >= 0.
    pub lambda: f64,
    /// Learning rate mu > 0.
    pub mu: f64,
    /// Depth P of the feature extractor.
    pub split_depth: usize,
    pub epochs: usize,
    /// Minibatch size in whole sequences.
    pub batch_size: usize,
    pub seed: u64,
    /// Frame dimension r_x.
    pub input_dim: usize,
    /// Deep feature dimension r_f.
    pub feature_dim: usize,
    /// Width of the hidden layers in all three stacks.
    pub hidden_dim: usize,
    /// Hidden layers in the class head.
    pub class_hidden_layers: usize,
    /// Hidden layers in the domain head.
    pub domain_hidden_layers: usize,
    /// Class count |S|.
    pub class_count: usize,
    /// Domain count |U|.
    pub domain_count: usize,
    /// Attention block configuration; used in aadit mode only.
    pub attention: AttentionConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Baseline,
            lambda: 0.5,
            mu: 0.08,
            split_depth: 4,
            epochs: 6,
            batch_size: 8,
            seed: 1,
            input_dim: 20,
            feature_dim: 16,
            hidden_dim: 32,
            class_hidden_layers: 1,
            domain_hidden_layers: 1,
            class_count: 10,
            domain_count: 4,
            attention: AttentionConfig {
                left: 5,
                right: 5,
                key_dim: 16,
                score: ScoreType::DotProduct,
                heads: 1,
                positional_encoding: false,
            },
        }
    }
}

pub const TRAIN_KEYS: &[&str] = &[
    "mode",
    "lambda",
    "mu",
    "split_depth",
    "epochs",
    "batch_size",
    "seed",
    "input_dim",
    "feature_dim",
    "hidden_dim",
    "class_hidden_layers",
    "domain_hidden_layers",
    "class_count",
    "domain_count",
    "window_left",
    "window_right",
    "ra",
    "heads",
    "score",
    "pos_enc",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        if !(self.mu > 0.0) {
            return Err(Error::Config("mu must be > 0".into()));
        }
        if self.split_depth == 0 {
            return Err(Error::Config("split_depth must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        for (name, v) in [
            ("input_dim", self.input_dim),
            ("feature_dim", self.feature_dim),
            ("hidden_dim", self.hidden_dim),
            ("class_count", self.class_count),
            ("domain_count", self.domain_count),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.mode == Mode::Aadit {
            self.attention.validate()?;
        }
        Ok(())
    }

    /// Layer sizes of the feature extractor: `split_depth` layers from
    /// input_dim through hidden_dim to feature_dim.
    pub fn feature_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        for _ in 0..self.split_depth.saturating_sub(1) {
            dims.push(self.hidden_dim);
        }
        dims.push(self.feature_dim);
        dims
    }

    pub fn class_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.feature_dim];
        for _ in 0..self.class_hidden_layers {
            dims.push(self.hidden_dim);
        }
        dims.push(self.class_count);
        dims
    }

    /// The domain head consumes raw features in adit mode and attention
    /// contexts in aadit mode.
    pub fn domain_input_dim(&self) -> usize {
        match self.mode {
            Mode::Aadit => self.attention.context_dim(self.feature_dim),
            _ => self.feature_dim,
        }
    }

    pub fn domain_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.domain_input_dim()];
        for _ in 0..self.domain_hidden_layers {
            dims.push(self.hidden_dim);
        }
        dims.push(self.domain_count);
        dims
    }

    /// Canonical serialization; embedded verbatim in checkpoints.
    pub fn to_kv_string(&self) -> String {
        let mut w = KvWriter::new();
        w.line("mode", self.mode)
            .line("lambda", self.lambda)
            .line("mu", self.mu)
            .line("split_depth", self.split_depth)
            .line("epochs", self.epochs)
            .line("batch_size", self.batch_size)
            .line("seed", self.seed)
            .line("input_dim", self.input_dim)
            .line("feature_dim", self.feature_dim)
            .line("hidden_dim", self.hidden_dim)
            .line("class_hidden_layers", self.class_hidden_layers)
            .line("domain_hidden_layers", self.domain_hidden_layers)
            .line("class_count", self.class_count)
            .line("domain_count", self.domain_count)
            .line("window_left", self.attention.left)
            .line("window_right", self.attention.right)
            .line("ra", self.attention.key_dim)
            .line("heads", self.attention.heads)
            .line("score", self.attention.score)
            .flag("pos_enc", self.attention.positional_encoding);
        w.finish()
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        let r = KvReader::from_str(text)?;
        r.check_keys(TRAIN_KEYS)?;
        let d = Self::default();
        Ok(Self {
            mode: r.get("mode", d.mode.to_string())?.parse()?,
            lambda: r.get("lambda", d.lambda)?,
            mu: r.get("mu", d.mu)?,
            split_depth: r.get("split_depth", d.split_depth)?,
            epochs: r.get("epochs", d.epochs)?,
            batch_size: r.get("batch_size", d.batch_size)?,
            seed: r.get("seed", d.seed)?,
            input_dim: r.get("input_dim", d.input_dim)?,
            feature_dim: r.get("feature_dim", d.feature_dim)?,
            hidden_dim: r.get("hidden_dim", d.hidden_dim)?,
            class_hidden_layers: r.get("class_hidden_layers", d.class_hidden_layers)?,
            domain_hidden_layers: r.get("domain_hidden_layers", d.domain_hidden_layers)?,
            class_count: r.get("class_count", d.class_count)?,
            domain_count: r.get("domain_count", d.domain_count)?,
            attention: AttentionConfig {
                left: r.get("window_left", d.attention.left)?,
                right: r.get("window_right", d.attention.right)?,
                key_dim: r.get("ra", d.attention.key_dim)?,
                score: r.get("score", d.attention.score.to_string())?.parse()?,
                heads: r.get("heads", d.attention.heads)?,
                positional_encoding: r.get_flag("pos_enc", d.attention.positional_encoding)?,
            },
        })
    }
}
