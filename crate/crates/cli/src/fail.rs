use std::fmt;

use prunekit_core::Error;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Code {
    Runtime = 1,
    Config = 2,
    Data = 3,
    Version = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub code: Code,
    pub message: String,
}

impl CliError {
    pub fn new(code: Code, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// What was being done when a core error surfaced; decides the exit code.
#[derive(Debug, Clone, Copy)]
pub enum Stage {
    /// Reading or generating the dataset.
    Dataset,
    /// Reading a checkpoint, score table, mask or report.
    Artifact,
    /// Anything else: training, attribution, writing outputs.
    Run,
}

pub fn classify(stage: Stage, err: Error) -> CliError {
    let code = match (&err, stage) {
        (Error::InvalidConfig(_) | Error::InvalidRate(_) | Error::InvalidProbability(_), _) => Code::Config,
        (_, Stage::Dataset) => Code::Data,
        (Error::UnsupportedVersion { .. }, _) => Code::Version,
        (Error::Io { .. }, Stage::Artifact) => Code::Data,
        (_, Stage::Artifact) => Code::Version,
        (
            Error::EmptyClass(_) | Error::EmptySplit(_) | Error::LabelOutOfRange { .. } | Error::ShapeMismatch { .. },
            Stage::Run,
        ) => Code::Data,
        (Error::UnknownUnits(_) | Error::MissingUnits(_), Stage::Run) => Code::Data,
        _ => Code::Runtime,
    };
    CliError::new(code, err.to_string())
}

pub trait OrExit<T> {
    fn at(self, stage: Stage) -> Result<T, CliError>;
}

impl<T> OrExit<T> for prunekit_core::Result<T> {
    fn at(self, stage: Stage) -> Result<T, CliError> {
        self.map_err(|e| classify(stage, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_depend_on_stage() {
        let version = || Error::UnsupportedVersion { found: 2, expected: 1 };
        assert_eq!(classify(Stage::Artifact, version()).code, Code::Version);
        assert_eq!(classify(Stage::Dataset, version()).code, Code::Data);
        let malformed = || Error::Format {
            what: "header",
            reason: "x".into(),
        };
        assert_eq!(classify(Stage::Artifact, malformed()).code, Code::Version);
        assert_eq!(classify(Stage::Dataset, malformed()).code, Code::Data);
        assert_eq!(classify(Stage::Run, Error::InvalidRate(2.0)).code, Code::Config);
        assert_eq!(classify(Stage::Run, Error::NonFiniteLoss { epoch: 0, batch: 0 }).code, Code::Runtime);
    }
}
