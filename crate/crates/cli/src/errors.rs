//! Stage-tagged errors. The stage at which a failure happens determines the
//! process exit code, so scripts can distinguish a bad invocation from bad
//! input data from a numerical breakdown.

use std::fmt;

/// Pipeline stage in which a failure occurred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Bad invocation: flags, config file contents, incompatible options.
    Config,
    /// Bad input: CSV files, draws files, dimension mismatches, output I/O.
    Data,
    /// The computation itself failed: sampler abort, numerical breakdown.
    Run,
}

impl Stage {
    pub fn exit_code(self) -> u8 {
        match self {
            Stage::Config => 2,
            Stage::Data => 3,
            Stage::Run => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Data => "data",
            Stage::Run => "run",
        }
    }
}

/// An error carrying the stage it belongs to and a human-readable message.
#[derive(Debug)]
pub struct CliError {
    pub stage: Stage,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { stage: Stage::Config, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { stage: Stage::Data, message: message.into() }
    }

    pub fn run(message: impl Into<String>) -> Self {
        CliError { stage: Stage::Run, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.stage.name(), self.message)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Tag a library or I/O failure with the pipeline stage it belongs to.
pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> CliResult<T>;
}

impl<T> StageExt<T> for changeplane::Result<T> {
    fn stage(self, stage: Stage) -> CliResult<T> {
        self.map_err(|e| CliError { stage, message: e.to_string() })
    }
}

impl<T> StageExt<T> for std::io::Result<T> {
    fn stage(self, stage: Stage) -> CliResult<T> {
        self.map_err(|e| CliError { stage, message: e.to_string() })
    }
}
