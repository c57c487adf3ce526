use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("numerical: {0}")]
    Numerical(String),

    #[error("output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<m2m_access::Error> for CliError {
    fn from(e: m2m_access::Error) -> Self {
        match e {
            m2m_access::Error::NoConvergence { .. } => CliError::Numerical(e.to_string()),
            // A payload bound rising with load means the estimates are too noisy to invert.
            m2m_access::Error::InvalidParameter { name: "payload_curve", .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}
