//! Run configuration: a flat `section.key = value` text format that any
//! language can parse, with every hyperparameter defaulted. A run's
//! effective config is echoed into its output directory.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::corruptor::CorruptionSpec;
use crate::model::ModelConfig;
use crate::objectives::{MlmSpec, NoiseSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub tweets_path: String,
    pub news_path: String,
    pub clauses_path: String,
    pub model: ModelConfig,
    pub disc_hidden_size: usize,
    pub noise: NoiseSpec,
    pub mlm: MlmSpec,
    pub corrupt: CorruptionSpec,
    pub hashtag_pool_size: usize,
    pub batch_size: usize,
    pub mlm_batch_size: usize,
    pub mlm_cycles: usize,
    pub style_cycles: usize,
    pub merge_cycles: usize,
    pub checkpoint_every: usize,
    pub learning_rate: f64,
    pub bpe_vocab_size: usize,
    pub stream_len: usize,
    pub similarity_threshold: f64,
    pub kmeans_k: usize,
    pub kmeans_max_iter: usize,
    pub templated_records: usize,
    pub eval_lowercase: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            tweets_path: "data/tweets.txt".to_string(),
            news_path: "data/news.txt".to_string(),
            clauses_path: "data/merge_clauses.tsv".to_string(),
            // max_len 256 so default 256-token MLM streams fit.
            model: ModelConfig {
                max_len: 256,
                ..ModelConfig::default()
            },
            disc_hidden_size: crate::model::DEFAULT_DISC_HIDDEN,
            noise: NoiseSpec::default(),
            mlm: MlmSpec::default(),
            corrupt: CorruptionSpec::default(),
            hashtag_pool_size: 100,
            batch_size: 4,
            mlm_batch_size: 8,
            mlm_cycles: 100,
            style_cycles: 300,
            merge_cycles: 400,
            checkpoint_every: 0,
            learning_rate: crate::numerics::DEFAULT_LEARNING_RATE,
            bpe_vocab_size: crate::tokenizer::DEFAULT_VOCAB_SIZE,
            stream_len: crate::datakit::DEFAULT_STREAM_LEN,
            similarity_threshold: 0.2,
            kmeans_k: 4,
            kmeans_max_iter: 100,
            templated_records: 300,
            eval_lowercase: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate().map_err(ConfigError::Invalid)?;
        self.noise.validate().map_err(ConfigError::Invalid)?;
        self.mlm.validate().map_err(ConfigError::Invalid)?;
        self.corrupt.validate().map_err(ConfigError::Invalid)?;
        if self.stream_len > self.model.max_len {
            return Err(ConfigError::Invalid(format!(
                "stream_len {} exceeds model.max_len {}",
                self.stream_len, self.model.max_len
            )));
        }
        if self.batch_size == 0 || self.mlm_batch_size == 0 {
            return Err(ConfigError::Invalid(
                "batch sizes must be positive".to_string(),
            ));
        }
        Ok(())
    }

    /// Canonical text form; `parse` of the output reproduces the config.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("paths.tweets", self.tweets_path.clone());
        kv("paths.news", self.news_path.clone());
        kv("paths.clauses", self.clauses_path.clone());
        kv("model.n_layers", self.model.n_layers.to_string());
        kv("model.n_heads", self.model.n_heads.to_string());
        kv("model.d_model", self.model.d_model.to_string());
        kv("model.d_ff", self.model.d_ff.to_string());
        kv("model.max_len", self.model.max_len.to_string());
        kv("model.vocab_size", self.model.vocab_size.to_string());
        kv("model.n_styles", self.model.n_styles.to_string());
        kv("model.dropout_p", fmt_f64(self.model.dropout_p));
        kv("disc.hidden_size", self.disc_hidden_size.to_string());
        kv("noise.mask_p", fmt_f64(self.noise.mask_p));
        kv("noise.drop_p", fmt_f64(self.noise.drop_p));
        kv(
            "noise.shuffle_window",
            self.noise.shuffle_window.to_string(),
        );
        kv("mlm.select_p", fmt_f64(self.mlm.select_p));
        kv("mlm.mask_frac", fmt_f64(self.mlm.mask_frac));
        kv("mlm.random_frac", fmt_f64(self.mlm.random_frac));
        kv("mlm.keep_frac", fmt_f64(self.mlm.keep_frac));
        kv("corrupt.spell_p", fmt_f64(self.corrupt.spell_p));
        kv("corrupt.ne_hashtag_p", fmt_f64(self.corrupt.ne_hashtag_p));
        kv(
            "corrupt.random_hashtag_p",
            fmt_f64(self.corrupt.random_hashtag_p),
        );
        kv("corrupt.hashtag_pool", self.corrupt.hashtag_pool.join(","));
        kv("corrupt.pool_size", self.hashtag_pool_size.to_string());
        kv("schedule.batch_size", self.batch_size.to_string());
        kv("schedule.mlm_batch_size", self.mlm_batch_size.to_string());
        kv("schedule.mlm_cycles", self.mlm_cycles.to_string());
        kv("schedule.style_cycles", self.style_cycles.to_string());
        kv("schedule.merge_cycles", self.merge_cycles.to_string());
        kv(
            "schedule.checkpoint_every",
            self.checkpoint_every.to_string(),
        );
        kv("train.learning_rate", fmt_f64(self.learning_rate));
        kv("data.bpe_vocab_size", self.bpe_vocab_size.to_string());
        kv("data.stream_len", self.stream_len.to_string());
        kv(
            "data.similarity_threshold",
            fmt_f64(self.similarity_threshold),
        );
        kv("data.kmeans_k", self.kmeans_k.to_string());
        kv("data.kmeans_max_iter", self.kmeans_max_iter.to_string());
        kv("data.templated_records", self.templated_records.to_string());
        kv("eval.lowercase", self.eval_lowercase.to_string());
        s
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment;
    /// unknown keys and malformed values are errors with line numbers.
    pub fn parse(text: &str) -> Result<PipelineConfig, ConfigError> {
        let mut cfg = PipelineConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: lineno,
                message: format!("expected `key = value`, got {raw:?}"),
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.set(key, value).map_err(|message| ConfigError::Parse {
                line: lineno,
                message,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("bad value {value:?} for {key}"))
        }
        match key {
            "seed" => self.seed = num(key, value)?,
            "paths.tweets" => self.tweets_path = value.to_string(),
            "paths.news" => self.news_path = value.to_string(),
            "paths.clauses" => self.clauses_path = value.to_string(),
            "model.n_layers" => self.model.n_layers = num(key, value)?,
            "model.n_heads" => self.model.n_heads = num(key, value)?,
            "model.d_model" => self.model.d_model = num(key, value)?,
            "model.d_ff" => self.model.d_ff = num(key, value)?,
            "model.max_len" => self.model.max_len = num(key, value)?,
            "model.vocab_size" => self.model.vocab_size = num(key, value)?,
            "model.n_styles" => self.model.n_styles = num(key, value)?,
            "model.dropout_p" => self.model.dropout_p = num(key, value)?,
            "disc.hidden_size" => self.disc_hidden_size = num(key, value)?,
            "noise.mask_p" => self.noise.mask_p = num(key, value)?,
            "noise.drop_p" => self.noise.drop_p = num(key, value)?,
            "noise.shuffle_window" => self.noise.shuffle_window = num(key, value)?,
            "mlm.select_p" => self.mlm.select_p = num(key, value)?,
            "mlm.mask_frac" => self.mlm.mask_frac = num(key, value)?,
            "mlm.random_frac" => self.mlm.random_frac = num(key, value)?,
            "mlm.keep_frac" => self.mlm.keep_frac = num(key, value)?,
            "corrupt.spell_p" => self.corrupt.spell_p = num(key, value)?,
            "corrupt.ne_hashtag_p" => self.corrupt.ne_hashtag_p = num(key, value)?,
            "corrupt.random_hashtag_p" => self.corrupt.random_hashtag_p = num(key, value)?,
            "corrupt.hashtag_pool" => {
                self.corrupt.hashtag_pool = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            }
            "corrupt.pool_size" => self.hashtag_pool_size = num(key, value)?,
            "schedule.batch_size" => self.batch_size = num(key, value)?,
            "schedule.mlm_batch_size" => self.mlm_batch_size = num(key, value)?,
            "schedule.mlm_cycles" => self.mlm_cycles = num(key, value)?,
            "schedule.style_cycles" => self.style_cycles = num(key, value)?,
            "schedule.merge_cycles" => self.merge_cycles = num(key, value)?,
            "schedule.checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "train.learning_rate" => self.learning_rate = num(key, value)?,
            "data.bpe_vocab_size" => self.bpe_vocab_size = num(key, value)?,
            "data.stream_len" => self.stream_len = num(key, value)?,
            "data.similarity_threshold" => self.similarity_threshold = num(key, value)?,
            "data.kmeans_k" => self.kmeans_k = num(key, value)?,
            "data.kmeans_max_iter" => self.kmeans_max_iter = num(key, value)?,
            "data.templated_records" => self.templated_records = num(key, value)?,
            "eval.lowercase" => self.eval_lowercase = num(key, value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<PipelineConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        PipelineConfig::parse(&text)
    }
}

fn fmt_f64(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_config_string();
        let back = PipelineConfig::parse(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(back.to_config_string(), text);
    }

    #[test]
    fn overrides_and_comments() {
        let text = "# a comment\nmodel.n_layers = 6\nmodel.n_heads = 8\nmodel.d_model = 1024\n\
                    model.d_ff = 4096\ntrain.learning_rate = 0.00001\nseed = 42\n";
        let cfg = PipelineConfig::parse(text).unwrap();
        assert_eq!(cfg.model.n_layers, 6);
        assert_eq!(cfg.model.n_heads, 8);
        assert_eq!(cfg.model.d_model, 1024);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.learning_rate, 1e-5);
    }

    #[test]
    fn unknown_key_and_bad_value_report_line() {
        match PipelineConfig::parse("model.n_layers = 2\nbogus.key = 3\n") {
            Err(ConfigError::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match PipelineConfig::parse("model.n_layers = two") {
            Err(ConfigError::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_catches_stream_overflow() {
        let text = "model.max_len = 128\ndata.stream_len = 256\n";
        assert!(matches!(
            PipelineConfig::parse(text),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn full_scale_expressible() {
        let text =
            "model.n_layers = 6\nmodel.n_heads = 8\nmodel.d_model = 1024\nmodel.d_ff = 4096\n\
                    model.max_len = 512\ndata.stream_len = 256\ntrain.learning_rate = 0.00001\n\
                    schedule.batch_size = 4\nschedule.mlm_batch_size = 8\n";
        let cfg = PipelineConfig::parse(text).unwrap();
        assert!(cfg.validate().is_ok());
    }
}
