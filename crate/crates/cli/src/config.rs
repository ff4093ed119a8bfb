//! Flat, commented key-value experiment configuration.
//!
//! Every key has a shipped default; a config file only needs the keys it
//! overrides. `parse(render(cfg)) == cfg` holds exactly: floats are rendered
//! in shortest round-trip form.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sparsedp::trainer::TrainMode;
use sparsedp::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    // paths
    pub corpus: PathBuf,
    pub artifacts_dir: PathBuf,
    /// `builtin`, `none`, or a path to a one-word-per-line file.
    pub stop_words: String,
    // preprocessing
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    // canaries
    pub canary_count: usize,
    pub canary_copies: usize,
    pub rank_sample_size: usize,
    pub histogram_bins: usize,
    // training
    pub mode: TrainMode,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub noise_multiplier: f64,
    pub sparsity: f64,
    pub clip_s0: f64,
    pub clip_s1: f64,
    pub clip_s2: f64,
    pub adam: bool,
    /// Scan threshold for sparse-vector selection.
    pub sv_alpha: f64,
    /// Mask cap for sparse-vector selection; 0 means ⌊sparsity·p⌋.
    pub sv_c1: usize,
    pub seed: u64,
    // experiment-level budget split
    pub noise_epsilon: f64,
    pub noise_delta: f64,
    pub selection_epsilon: f64,
    pub selection_delta: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::from("data/corpus.txt"),
            artifacts_dir: PathBuf::from("out"),
            stop_words: "builtin".to_string(),
            vocab_size: 1000,
            embed_dim: 100,
            window: 4,
            negatives: 8,
            train_size: 200_000,
            val_size: 100_000,
            test_size: 200_000,
            canary_count: 1000,
            canary_copies: 3,
            rank_sample_size: 10_000,
            histogram_bins: 10,
            mode: TrainMode::SparseExp,
            batch_size: 20,
            learning_rate: 0.001,
            epochs: 20,
            noise_multiplier: 0.5,
            sparsity: 0.001,
            clip_s0: 0.1,
            clip_s1: 15.0,
            clip_s2: 1.0,
            adam: false,
            sv_alpha: 0.05,
            sv_c1: 0,
            seed: 12345,
            noise_epsilon: 20.0,
            noise_delta: 5e-6,
            selection_epsilon: 10.0,
            selection_delta: 5e-6,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Input(format!("config key {key}: bad value {value:?}: {e}")))
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "corpus" => self.corpus = PathBuf::from(value),
            "artifacts_dir" => self.artifacts_dir = PathBuf::from(value),
            "stop_words" => self.stop_words = value.to_string(),
            "vocab_size" => self.vocab_size = parse_value(key, value)?,
            "embed_dim" => self.embed_dim = parse_value(key, value)?,
            "window" => self.window = parse_value(key, value)?,
            "negatives" => self.negatives = parse_value(key, value)?,
            "train_size" => self.train_size = parse_value(key, value)?,
            "val_size" => self.val_size = parse_value(key, value)?,
            "test_size" => self.test_size = parse_value(key, value)?,
            "canary_count" => self.canary_count = parse_value(key, value)?,
            "canary_copies" => self.canary_copies = parse_value(key, value)?,
            "rank_sample_size" => self.rank_sample_size = parse_value(key, value)?,
            "histogram_bins" => self.histogram_bins = parse_value(key, value)?,
            "mode" => self.mode = value.parse()?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "noise_multiplier" => self.noise_multiplier = parse_value(key, value)?,
            "sparsity" => self.sparsity = parse_value(key, value)?,
            "clip_s0" => self.clip_s0 = parse_value(key, value)?,
            "clip_s1" => self.clip_s1 = parse_value(key, value)?,
            "clip_s2" => self.clip_s2 = parse_value(key, value)?,
            "adam" => self.adam = parse_value(key, value)?,
            "sv_alpha" => self.sv_alpha = parse_value(key, value)?,
            "sv_c1" => self.sv_c1 = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "noise_epsilon" => self.noise_epsilon = parse_value(key, value)?,
            "noise_delta" => self.noise_delta = parse_value(key, value)?,
            "selection_epsilon" => self.selection_epsilon = parse_value(key, value)?,
            "selection_delta" => self.selection_delta = parse_value(key, value)?,
            other => return Err(Error::Input(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// skipped. Unset keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Input(format!("config line {}: expected key = value, got {raw:?}", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical serialization; parses back to an identical config.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# paths");
        let _ = writeln!(s, "corpus = {}", self.corpus.display());
        let _ = writeln!(s, "artifacts_dir = {}", self.artifacts_dir.display());
        let _ = writeln!(s, "stop_words = {}", self.stop_words);
        let _ = writeln!(s, "\n# preprocessing");
        let _ = writeln!(s, "vocab_size = {}", self.vocab_size);
        let _ = writeln!(s, "embed_dim = {}", self.embed_dim);
        let _ = writeln!(s, "window = {}", self.window);
        let _ = writeln!(s, "negatives = {}", self.negatives);
        let _ = writeln!(s, "train_size = {}", self.train_size);
        let _ = writeln!(s, "val_size = {}", self.val_size);
        let _ = writeln!(s, "test_size = {}", self.test_size);
        let _ = writeln!(s, "\n# canaries");
        let _ = writeln!(s, "canary_count = {}", self.canary_count);
        let _ = writeln!(s, "canary_copies = {}", self.canary_copies);
        let _ = writeln!(s, "rank_sample_size = {}", self.rank_sample_size);
        let _ = writeln!(s, "histogram_bins = {}", self.histogram_bins);
        let _ = writeln!(s, "\n# training");
        let _ = writeln!(s, "mode = {}", self.mode.as_str());
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "learning_rate = {:?}", self.learning_rate);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "noise_multiplier = {:?}", self.noise_multiplier);
        let _ = writeln!(s, "sparsity = {:?}", self.sparsity);
        let _ = writeln!(s, "clip_s0 = {:?}", self.clip_s0);
        let _ = writeln!(s, "clip_s1 = {:?}", self.clip_s1);
        let _ = writeln!(s, "clip_s2 = {:?}", self.clip_s2);
        let _ = writeln!(s, "adam = {}", self.adam);
        let _ = writeln!(s, "sv_alpha = {:?}", self.sv_alpha);
        let _ = writeln!(s, "sv_c1 = {}", self.sv_c1);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "\n# experiment-level privacy budget split");
        let _ = writeln!(s, "noise_epsilon = {:?}", self.noise_epsilon);
        let _ = writeln!(s, "noise_delta = {:?}", self.noise_delta);
        let _ = writeln!(s, "selection_epsilon = {:?}", self.selection_epsilon);
        let _ = writeln!(s, "selection_delta = {:?}", self.selection_delta);
        s
    }

    /// Total delta of the experiment split.
    pub fn delta_total(&self) -> f64 {
        self.noise_delta + self.selection_delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_losslessly() {
        let mut cfg = ExperimentConfig::default();
        cfg.learning_rate = 0.1 + 0.2; // not exactly 0.3
        cfg.noise_delta = 1.0 / 3.0e7;
        cfg.mode = TrainMode::DpSgd;
        cfg.seed = u64::MAX;
        let back = ExperimentConfig::parse(&cfg.render()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn comments_and_overrides() {
        let cfg = ExperimentConfig::parse("# comment\nbatch_size = 7 # trailing\n\nseed=9\n").unwrap();
        assert_eq!(cfg.batch_size, 7);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.vocab_size, ExperimentConfig::default().vocab_size);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::parse("no_such_key = 1\n").is_err());
        assert!(ExperimentConfig::parse("batch_size = many\n").is_err());
        assert!(ExperimentConfig::parse("just a line\n").is_err());
    }
}
