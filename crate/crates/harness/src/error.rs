use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("run failed: {0}")]
    Run(String),

    #[error("checks failed: {0}")]
    Check(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code: 1 config, 2 run failure, 3 failed checks.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Run(_) | HarnessError::Io(_) => 2,
            HarnessError::Check(_) => 3,
        }
    }
}

impl From<rarl_core::Error> for HarnessError {
    fn from(e: rarl_core::Error) -> Self {
        HarnessError::Run(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Run(format!("csv: {e}"))
    }
}
