use std::path::PathBuf;

use groundkit_core::aligner::AlignerError;
use groundkit_core::forge::{ForgeError, KnowledgeError, ProviderError, SplitError};
use serde_json::{json, Value};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const INPUT: i32 = 2;
    pub const PROVIDER: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Forge(ForgeError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Aligner(#[from] AlignerError),
    #[error("provider: {0}")]
    Provider(ProviderError),
    #[error("{message}")]
    Validation {
        message: String,
        details: Vec<String>,
    },
    #[error(
        "prediction ids do not match gold ids ({} without prediction, {} without gold)",
        missing.len(),
        unexpected.len()
    )]
    IdMismatch {
        /// Gold ids with no prediction.
        missing: Vec<String>,
        /// Prediction ids with no gold record.
        unexpected: Vec<String>,
    },
}

impl From<ForgeError> for Error {
    fn from(e: ForgeError) -> Self {
        match e {
            ForgeError::Provider(p) => Error::Provider(p),
            other => Error::Forge(other),
        }
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, line: usize, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            line,
            message: message.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "Io",
            Error::Format { .. } => "ParseError",
            Error::Config(_) => "Config",
            Error::Input(_) => "InvalidInput",
            Error::Forge(f) => match f {
                ForgeError::EmptyLabels => "EmptyLabels",
                ForgeError::TemplateIndex(_) => "TemplateIndex",
                ForgeError::Mask(_) => "EmptyMask",
                ForgeError::Label(_) => "InvalidLabel",
                ForgeError::UnknownLabel(_) => "UnknownLabel",
                ForgeError::NotGenerated(_) => "NotGenerated",
                ForgeError::Provider(_) => "ProviderError",
                ForgeError::MalformedCompletion => "MalformedCompletion",
                ForgeError::UngroundableAnswer => "UngroundableAnswer",
            },
            Error::Knowledge(k) => match k {
                KnowledgeError::DuplicateLabel(_) => "DuplicateLabel",
                KnowledgeError::EmptyLabel => "EmptyLabel",
                KnowledgeError::NotFound(_) => "UnknownLabel",
            },
            Error::Split(s) => match s {
                SplitError::BadRatios(_) => "BadRatios",
                SplitError::EmptySource(_) => "EmptySource",
                _ => "SplitError",
            },
            Error::Aligner(_) => "AlignerError",
            Error::Provider(_) => "ProviderError",
            Error::Validation { .. } => "ValidationError",
            Error::IdMismatch { .. } => "IdMismatch",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation { .. } => exit::VALIDATION,
            Error::Provider(_) => exit::PROVIDER,
            _ => exit::INPUT,
        }
    }

    /// Single-object error record written to stderr by the CLI.
    pub fn to_json(&self) -> Value {
        let mut err = json!({
            "kind": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        let extra = match self {
            Error::Forge(ForgeError::UnknownLabel(l)) => json!({ "label": l }),
            Error::Knowledge(KnowledgeError::DuplicateLabel(l) | KnowledgeError::NotFound(l)) => {
                json!({ "label": l })
            }
            Error::Validation { details, .. } => json!({ "details": details }),
            Error::IdMismatch {
                missing,
                unexpected,
            } => json!({ "missing_predictions": missing, "unexpected_predictions": unexpected }),
            Error::Provider(p) => json!({ "provider_kind": format!("{:?}", p.kind) }),
            Error::Format { path, line, .. } => {
                json!({ "path": path.display().to_string(), "line": line })
            }
            Error::Io { path, .. } => json!({ "path": path.display().to_string() }),
            _ => Value::Null,
        };
        if let Value::Object(extra) = extra {
            for (k, v) in extra {
                err[k] = v;
            }
        }
        json!({ "error": err })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
