//! The resolved run configuration: one flat `key=value` namespace covering
//! data generation, training, probing, and paths.
//!
//! Precedence is defaults < config file < command-line flags. Every command
//! echoes the fully resolved block to stdout before doing anything; the echo
//! parses back into an equal `RunConfig`.

use std::path::{Path, PathBuf};

use aadit_core::data::{susceptibility_ramp, DatasetConfig};
use aadit_core::kv::{KvReader, KvWriter};
use aadit_core::probe::ProbeConfig;
use aadit_core::trainer::TrainConfig;
use aadit_core::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    /// Dataset file written by gen-data and read by train/eval/export.
    pub dataset: PathBuf,
    /// Output directory for checkpoints, metrics and heatmaps.
    pub out: PathBuf,
    /// Checkpoint path for eval/export-attention; empty means
    /// `<out>/final.ckpt`.
    pub checkpoint: PathBuf,
    pub data: DatasetConfig,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            jobs: 1,
            dataset: PathBuf::from("dataset.aadd"),
            out: PathBuf::from("out"),
            checkpoint: PathBuf::new(),
            data: DatasetConfig::default(),
            train: TrainConfig::default(),
            probe: ProbeConfig::default(),
        }
    }
}

const RUN_KEYS: &[&str] = &[
    "seed",
    "jobs",
    "dataset",
    "out",
    "checkpoint",
    "input_dim",
    "class_count",
    "domain_count",
    "train_sequences_per_domain",
    "test_sequences_per_domain",
    "frames_per_sequence",
    "segment_mean_len",
    "noise_sigma",
    "domain_shift",
    "susceptibility",
    "mode",
    "lambda",
    "mu",
    "split_depth",
    "epochs",
    "batch_size",
    "feature_dim",
    "hidden_dim",
    "class_hidden_layers",
    "domain_hidden_layers",
    "window",
    "ra",
    "heads",
    "score",
    "pos_enc",
    "probe_hidden",
    "probe_epochs",
    "probe_mu",
    "probe_batch",
];

impl RunConfig {
    /// The canonical echo block. Shared dimensions (`input_dim`,
    /// `class_count`, `domain_count`, `seed`) appear once and feed both the
    /// data and train configs; `window` is the symmetric context length L
    /// (R = L).
    pub fn to_kv_string(&self) -> String {
        let mut w = KvWriter::new();
        w.line("seed", self.seed)
            .line("jobs", self.jobs)
            .line("dataset", self.dataset.display())
            .line("out", self.out.display())
            .line("checkpoint", self.checkpoint.display())
            .line("input_dim", self.data.input_dim)
            .line("class_count", self.data.class_count)
            .line("domain_count", self.data.domain_count)
            .line("train_sequences_per_domain", self.data.train_sequences_per_domain)
            .line("test_sequences_per_domain", self.data.test_sequences_per_domain)
            .line("frames_per_sequence", self.data.frames_per_sequence)
            .line("segment_mean_len", self.data.segment_mean_len)
            .line("noise_sigma", self.data.noise_sigma)
            .line("domain_shift", self.data.domain_shift)
            .list("susceptibility", &self.data.susceptibility)
            .line("mode", self.train.mode)
            .line("lambda", self.train.lambda)
            .line("mu", self.train.mu)
            .line("split_depth", self.train.split_depth)
            .line("epochs", self.train.epochs)
            .line("batch_size", self.train.batch_size)
            .line("feature_dim", self.train.feature_dim)
            .line("hidden_dim", self.train.hidden_dim)
            .line("class_hidden_layers", self.train.class_hidden_layers)
            .line("domain_hidden_layers", self.train.domain_hidden_layers)
            .line("window", self.train.attention.left)
            .line("ra", self.train.attention.key_dim)
            .line("heads", self.train.attention.heads)
            .line("score", self.train.attention.score)
            .flag("pos_enc", self.train.attention.positional_encoding)
            .list("probe_hidden", &self.probe.hidden_dims)
            .line("probe_epochs", self.probe.epochs)
            .line("probe_mu", self.probe.mu)
            .line("probe_batch", self.probe.batch_size);
        w.finish()
    }

    #[cfg(test)]
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let r = KvReader::from_str(text)?;
        r.check_keys(RUN_KEYS)?;
        let mut cfg = Self::default();
        cfg.apply_reader(&r)?;
        Ok(cfg)
    }

    fn apply_reader(&mut self, r: &KvReader) -> Result<()> {
        self.seed = r.get("seed", self.seed)?;
        self.jobs = r.get("jobs", self.jobs)?;
        if let Some(v) = r.raw("dataset") {
            self.dataset = PathBuf::from(v);
        }
        if let Some(v) = r.raw("out") {
            self.out = PathBuf::from(v);
        }
        if let Some(v) = r.raw("checkpoint") {
            self.checkpoint = PathBuf::from(v);
        }

        let d = &mut self.data;
        d.input_dim = r.get("input_dim", d.input_dim)?;
        d.class_count = r.get("class_count", d.class_count)?;
        d.domain_count = r.get("domain_count", d.domain_count)?;
        d.train_sequences_per_domain =
            r.get("train_sequences_per_domain", d.train_sequences_per_domain)?;
        d.test_sequences_per_domain =
            r.get("test_sequences_per_domain", d.test_sequences_per_domain)?;
        d.frames_per_sequence = r.get("frames_per_sequence", d.frames_per_sequence)?;
        d.segment_mean_len = r.get("segment_mean_len", d.segment_mean_len)?;
        d.noise_sigma = r.get("noise_sigma", d.noise_sigma)?;
        d.domain_shift = r.get("domain_shift", d.domain_shift)?;
        if r.raw("susceptibility").is_some() {
            d.susceptibility = r.get_f64_list("susceptibility", &[])?;
        } else if r.raw("class_count").is_some() {
            d.susceptibility = susceptibility_ramp(d.class_count);
        }

        let t = &mut self.train;
        t.mode = r.get("mode", t.mode.to_string())?.parse()?;
        t.lambda = r.get("lambda", t.lambda)?;
        t.mu = r.get("mu", t.mu)?;
        t.split_depth = r.get("split_depth", t.split_depth)?;
        t.epochs = r.get("epochs", t.epochs)?;
        t.batch_size = r.get("batch_size", t.batch_size)?;
        t.feature_dim = r.get("feature_dim", t.feature_dim)?;
        t.hidden_dim = r.get("hidden_dim", t.hidden_dim)?;
        t.class_hidden_layers = r.get("class_hidden_layers", t.class_hidden_layers)?;
        t.domain_hidden_layers = r.get("domain_hidden_layers", t.domain_hidden_layers)?;
        let window = r.get("window", t.attention.left)?;
        t.attention.left = window;
        t.attention.right = window;
        t.attention.key_dim = r.get("ra", t.attention.key_dim)?;
        t.attention.heads = r.get("heads", t.attention.heads)?;
        t.attention.score = r.get("score", t.attention.score.to_string())?.parse()?;
        t.attention.positional_encoding =
            r.get_flag("pos_enc", t.attention.positional_encoding)?;

        let p = &mut self.probe;
        if r.raw("probe_hidden").is_some() {
            p.hidden_dims = r.get_usize_list("probe_hidden", &[])?;
        }
        p.epochs = r.get("probe_epochs", p.epochs)?;
        p.mu = r.get("probe_mu", p.mu)?;
        p.batch_size = r.get("probe_batch", p.batch_size)?;
        Ok(())
    }

    /// Loads overrides from a config file.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let r = KvReader::from_str(&text)?;
        r.check_keys(RUN_KEYS)?;
        self.apply_reader(&r)
    }

    /// Propagates the shared keys into the sub-configs. Called once after
    /// all overrides are applied.
    pub fn finalize(&mut self) {
        self.data.seed = self.seed;
        self.train.seed = self.seed;
        self.probe.seed = self.seed;
        self.train.input_dim = self.data.input_dim;
        self.train.class_count = self.data.class_count;
        self.train.domain_count = self.data.domain_count;
    }

    /// Checkpoint path with the `<out>/final.ckpt` fallback.
    pub fn checkpoint_path(&self) -> PathBuf {
        if self.checkpoint.as_os_str().is_empty() {
            self.out.join("final.ckpt")
        } else {
            self.checkpoint.clone()
        }
    }
}
