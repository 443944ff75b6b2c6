use std::fmt;

use tvfl_core::Error;

/// A one-line, machine-parsable failure: `error code=<CODE> <detail>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: &'static str,
    pub detail: String,
}

impl Failure {
    pub fn new(code: &'static str, detail: impl Into<String>) -> Self {
        Self {
            code,
            detail: detail.into(),
        }
    }

    pub fn config(code: &'static str, key: &str, line: usize, msg: &str) -> Self {
        let mut detail = String::new();
        if !key.is_empty() {
            detail.push_str(&format!("key={key} "));
        }
        if line > 0 {
            detail.push_str(&format!("line={line} "));
        }
        detail.push_str(&format!("msg={msg:?}"));
        Self { code, detail }
    }

    pub fn exit_code(&self) -> i32 {
        if self.code == "E_USAGE" {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one_line = self.detail.replace('\n', " ");
        write!(f, "error code={} {}", self.code, one_line)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidConfig(_) => "E_CONFIG_INVALID",
            Error::DimensionMismatch { .. } => "E_DIMENSION",
            Error::Domain(_) => "E_DOMAIN",
            Error::CoincidentPositions => "E_COINCIDENT",
            Error::Precondition(_) => "E_PRECONDITION",
            Error::EmptyBatch => "E_EMPTY",
            Error::ColdCache { .. } => "E_COLD_CACHE",
            Error::Diverged { .. } => "E_DIVERGED",
            Error::UnreachableTarget { .. } => "E_UNREACHABLE",
            Error::MalformedHeader(_) => "E_MALFORMED",
            Error::TruncatedPayload(_) => "E_TRUNCATED",
            Error::Io(_) => "E_IO",
        };
        Self::new(code, format!("msg={:?}", e.to_string()))
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::new("E_IO", format!("msg={:?}", e.to_string()))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::new("E_IO", format!("msg={:?}", e.to_string()))
    }
}
