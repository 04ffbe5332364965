//! Run directories: every training run leaves behind its effective config,
//! a JSON-lines metrics log, checkpoints, and a versions stamp.

use std::io::Write;
use std::path::{Path, PathBuf};

use stylefuse::config::PipelineConfig;
use stylefuse::model::{save_checkpoint, ModelConfig};
use stylefuse::numerics::Tensor;
use stylefuse::objectives::StepRecord;

use crate::CliError;

pub struct RunDir {
    pub dir: PathBuf,
    metrics: std::fs::File,
}

impl RunDir {
    pub fn create(dir: &Path, cfg: &PipelineConfig) -> Result<RunDir, CliError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.cfg"), cfg.to_config_string())?;
        std::fs::write(
            dir.join("VERSIONS"),
            format!(
                "stylefuse-cli {}\nstylefuse {}\ncheckpoint-format sfck v1\nvocab-format bpe-vocab v1\n",
                env!("CARGO_PKG_VERSION"),
                env!("CARGO_PKG_VERSION"),
            ),
        )?;
        let metrics = std::fs::File::create(dir.join("metrics.jsonl"))?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
            metrics,
        })
    }

    pub fn append_records(&mut self, records: &[StepRecord]) -> Result<(), CliError> {
        for r in records {
            let line = serde_json::to_string(r)
                .map_err(|e| CliError::Data(format!("metrics serialization: {e}")))?;
            writeln!(self.metrics, "{line}")?;
        }
        self.metrics.flush()?;
        Ok(())
    }

    pub fn save_blocks(
        &self,
        name: &str,
        cfg: &ModelConfig,
        blocks: &[(String, Tensor)],
    ) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        save_checkpoint(&path, cfg, blocks)?;
        Ok(path)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}
