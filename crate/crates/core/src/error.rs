use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// The variants follow the failure classes the CLI maps to exit codes:
/// data/format/config/shape problems exit with 2, numeric blow-ups with 3.
#[derive(Debug, Error)]
pub enum MilError {
    #[error("data error: {0}")]
    Data(String),

    #[error("format error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Format { line: Option<usize>, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = MilError> = std::result::Result<T, E>;

impl MilError {
    pub(crate) fn data(msg: impl Into<String>) -> Self {
        MilError::Data(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        MilError::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        MilError::Shape(msg.into())
    }

    pub(crate) fn format(line: Option<usize>, msg: impl Into<String>) -> Self {
        MilError::Format { line, msg: msg.into() }
    }

    /// Prefixes the message with `ctx`, keeping the error class.
    pub fn context(self, ctx: &str) -> Self {
        match self {
            MilError::Data(m) => MilError::Data(format!("{ctx}: {m}")),
            MilError::Format { line, msg } => MilError::Format {
                line,
                msg: format!("{ctx}: {msg}"),
            },
            MilError::Config(m) => MilError::Config(format!("{ctx}: {m}")),
            MilError::Shape(m) => MilError::Shape(format!("{ctx}: {m}")),
            MilError::Numeric(m) => MilError::Numeric(format!("{ctx}: {m}")),
            MilError::Io(e) => MilError::Io(std::io::Error::new(e.kind(), format!("{ctx}: {e}"))),
            MilError::Json(e) => MilError::Format {
                line: Some(e.line()),
                msg: format!("{ctx}: {e}"),
            },
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            MilError::Numeric(_) => 3,
            _ => 2,
        }
    }
}
