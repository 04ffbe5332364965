//! Pipeline orchestration behind the `stylefuse` binary: corpus loading,
//! run directories, and one function per subcommand.

mod commands;
mod rundir;

pub use commands::*;
pub use rundir::RunDir;

use stylefuse::config::ConfigError;
use stylefuse::eval::EvalError;
use stylefuse::model::ModelError;
use stylefuse::objectives::TrainError;
use stylefuse::propositions::PropositionError;
use stylefuse::tokenizer::TokenizerError;

/// Process exit taxonomy: 1 usage, 2 data, 3 numeric failure.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message())
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(format!("io error: {e}"))
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Data(format!("config: {e}"))
    }
}

impl From<TokenizerError> for CliError {
    fn from(e: TokenizerError) -> Self {
        CliError::Data(format!("tokenizer: {e}"))
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Data(format!("model: {e}"))
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { objective } => {
                CliError::Numeric(format!("non-finite loss in {objective}"))
            }
            other => CliError::Data(format!("training: {other}")),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(format!("eval: {e}"))
    }
}

impl From<PropositionError> for CliError {
    fn from(e: PropositionError) -> Self {
        CliError::Data(format!("propositions: {e}"))
    }
}

/// Non-empty trimmed-of-newline lines of a text file.
pub(crate) fn read_lines(path: &std::path::Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.to_string())
        .collect())
}

/// All lines, empties included, for line-aligned corpora.
pub(crate) fn read_lines_exact(path: &std::path::Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(text.lines().map(|l| l.to_string()).collect())
}

/// Blank-line-separated groups of lines.
pub(crate) fn read_groups(path: &std::path::Path) -> Result<Vec<Vec<String>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut groups = Vec::new();
    let mut current = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                groups.push(std::mem::take(&mut current));
            }
        } else {
            current.push(line.to_string());
        }
    }
    if !current.is_empty() {
        groups.push(current);
    }
    Ok(groups)
}
