use std::fmt;

/// Process exit codes.
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_ASSUMPTION: i32 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { code: EXIT_CONFIG, message: message.into() }
    }

    pub fn assumption(message: impl Into<String>) -> Self {
        Failure { code: EXIT_ASSUMPTION, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<lpvgen::Error> for Failure {
    fn from(e: lpvgen::Error) -> Self {
        use lpvgen::Error::*;
        let code = match e {
            Dimension(_) | InvalidArgument(_) => EXIT_CONFIG,
            NonFinite(_) | BlowUp { .. } => EXIT_NUMERIC,
            SingularOperator { .. } | NotPositiveDefinite { .. } | Assumption(_) => EXIT_ASSUMPTION,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::config(format!("i/o error: {e}"))
    }
}

pub type CliResult<T> = Result<T, Failure>;
