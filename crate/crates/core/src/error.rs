use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A field violates its domain invariant. `field` is the dotted path
    /// (`workload.b`, `costs.r_m_mem`, ...) so callers can report it verbatim.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("batch size {b} exceeds the {per_worker} datapoints held by the smallest worker shard")]
    BatchExceedsShard { b: u64, per_worker: u64 },

    #[error("cannot fit {what}: {reason}")]
    Fit { what: &'static str, reason: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Prefixes the field path of an [`Error::Invalid`], leaving other variants untouched.
    pub fn in_section(self, section: &str) -> Self {
        match self {
            Error::Invalid { field, reason } => Error::Invalid {
                field: format!("{section}.{field}"),
                reason,
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
