use dlm_core::cues::CueError;
use dlm_core::embeddings::EmbeddingError;
use dlm_core::evaluation::EvaluationError;
use dlm_core::lexicon::LexiconError;
use dlm_core::mappings::MappingError;
use dlm_core::probe::ProbeError;
use dlm_core::production::ProductionError;
use dlm_core::productivity::ProductivityError;
use thiserror::Error;

/// Failures grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<LexiconError> for CliError {
    fn from(e: LexiconError) -> Self {
        match e {
            LexiconError::BadFraction(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CueError> for CliError {
    fn from(e: CueError) -> Self {
        match e {
            CueError::GramSize(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MappingError> for CliError {
    fn from(e: MappingError) -> Self {
        match e {
            MappingError::Singular | MappingError::NonFinite | MappingError::NonFiniteLoss { .. } => {
                CliError::Numerical(e.to_string())
            }
            MappingError::BadRidge(_) | MappingError::BadConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvaluationError> for CliError {
    fn from(e: EvaluationError) -> Self {
        match e {
            EvaluationError::KTooLarge { .. } | EvaluationError::KZero => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ProductionError> for CliError {
    fn from(e: ProductionError) -> Self {
        match e {
            ProductionError::Mapping(m) => m.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ProductivityError> for CliError {
    fn from(e: ProductivityError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ProbeError> for CliError {
    fn from(e: ProbeError) -> Self {
        match e {
            ProbeError::Singular(_) => CliError::Numerical(e.to_string()),
            ProbeError::BadShrinkage(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
