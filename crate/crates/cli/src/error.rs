use thiserror::Error;

/// Exit codes: 0 success, 1 an enabled check failed, 2 configuration or
/// usage error, 3 the model fails a hypothesis an enabled analysis needs,
/// 4 the integration failed, 5 input/output error.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    Hypothesis(viscoflow::Error),

    #[error("integration failed: {0}")]
    Integration(viscoflow::Error),

    #[error("{failed} of {total} checks failed")]
    Checks { failed: usize, total: usize },

    #[error(transparent)]
    Core(viscoflow::Error),

    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Checks { .. } | CliError::Core(_) => 1,
            CliError::Config(_) => 2,
            CliError::Hypothesis(_) => 3,
            CliError::Integration(_) => 4,
            CliError::Io(_) => 5,
        }
    }

    /// Sorts a library error: hypothesis and certification failures are
    /// model problems, step failures are integration problems.
    pub fn classify(e: viscoflow::Error) -> Self {
        use viscoflow::Error as E;
        match e {
            E::Hypothesis { .. } | E::Certification(_) => CliError::Hypothesis(e),
            E::Stiffness { .. } => CliError::Integration(e),
            E::UnknownModel(_) | E::ModelInconsistency(_) | E::Monotonicity { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Core(e),
        }
    }
}

impl From<viscoflow::Error> for CliError {
    fn from(e: viscoflow::Error) -> Self {
        CliError::classify(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
