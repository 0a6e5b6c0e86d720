use retouch_core::Error as CoreError;
use serde::Serialize;

use crate::SCHEMA;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    /// Bad command line or configuration, or a malformed request.
    #[error("{0}")]
    Usage(String),

    /// An input file or payload could not be read or understood.
    #[error("{0}")]
    Input(CoreError),

    #[error("{0}")]
    Core(CoreError),

    #[error("unknown session {0}")]
    UnknownSession(String),

    #[error("image is {width}x{height}, larger than the {max} pixel limit")]
    TooLarge { width: u32, height: u32, max: u32 },

    #[error("{0}")]
    Conflict(String),
}

impl From<CoreError> for ServiceError {
    fn from(e: CoreError) -> Self {
        ServiceError::Core(e)
    }
}

fn innermost(e: &CoreError) -> &CoreError {
    match e {
        CoreError::Sample { source, .. } => innermost(source),
        other => other,
    }
}

fn core_is_input(e: &CoreError) -> bool {
    matches!(
        innermost(e),
        CoreError::InvalidArgument(_)
            | CoreError::Format(_)
            | CoreError::NotFound { .. }
            | CoreError::Parse { .. }
            | CoreError::Range { .. }
            | CoreError::Image(_)
            | CoreError::Json(_)
    )
}

impl ServiceError {
    /// Process exit status: 2 usage, 3 input format, 4 processing.
    pub fn exit_code(&self) -> u8 {
        match self {
            ServiceError::Usage(_) => 2,
            ServiceError::Input(_) | ServiceError::TooLarge { .. } => 3,
            ServiceError::Core(e) if core_is_input(e) => 3,
            ServiceError::UnknownSession(_) | ServiceError::Conflict(_) => 3,
            ServiceError::Core(_) => 4,
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            ServiceError::Usage(_) | ServiceError::Input(_) | ServiceError::Conflict(_) => 400,
            ServiceError::UnknownSession(_) => 404,
            ServiceError::TooLarge { .. } => 413,
            ServiceError::Core(e) => match innermost(e) {
                CoreError::NotFound { .. } => 404,
                CoreError::Parse { .. } | CoreError::Range { .. } => 422,
                CoreError::InvalidArgument(_) | CoreError::Format(_) | CoreError::Image(_) | CoreError::Json(_) => 400,
                _ => 500,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::Usage(_) => "usage",
            ServiceError::Input(_) => "input",
            ServiceError::UnknownSession(_) => "not_found",
            ServiceError::TooLarge { .. } => "too_large",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Core(e) => match innermost(e) {
                CoreError::InvalidArgument(_) => "invalid_argument",
                CoreError::Format(_) | CoreError::Image(_) | CoreError::Json(_) => "format",
                CoreError::NotFound { .. } => "not_found",
                CoreError::Parse { .. } => "parse",
                CoreError::Range { .. } => "range",
                CoreError::Storage { .. } => "storage",
                CoreError::Backend(_) => "backend",
                CoreError::Io(_) => "io",
                CoreError::Sample { .. } => "sample",
            },
        }
    }

    pub fn body(&self) -> ErrorBody {
        let core = match self {
            ServiceError::Core(e) | ServiceError::Input(e) => Some(e),
            _ => None,
        };
        let (offset, available, sample) = match core {
            Some(e) => {
                let sample = match e {
                    CoreError::Sample { index, .. } => Some(*index),
                    _ => None,
                };
                match innermost(e) {
                    CoreError::Parse { offset, .. } | CoreError::Range { offset, .. } => (Some(*offset), None, sample),
                    CoreError::NotFound { available, .. } => (None, Some(available.clone()), sample),
                    _ => (None, None, sample),
                }
            }
            None => (None, None, None),
        };
        ErrorBody {
            schema: SCHEMA,
            error: ErrorDetail {
                kind: self.kind(),
                message: self.to_string(),
                offset,
                available,
                sample,
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub schema: &'static str,
    pub error: ErrorDetail,
}

#[derive(Debug, Serialize)]
pub struct ErrorDetail {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub available: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
}
