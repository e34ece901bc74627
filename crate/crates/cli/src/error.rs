use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<glassrisk::Error> for CliError {
    fn from(e: glassrisk::Error) -> Self {
        use glassrisk::Error as E;
        let msg = e.to_string();
        match e {
            E::DegenerateCovariance { .. } | E::IllConditioned { .. } | E::Fit(_) | E::UndefinedRelativeRisk { .. } => {
                CliError::Numerical(msg)
            }
            E::Io { .. } | E::Format(_) | E::TooFewRows { .. } | E::DatesNotIncreasing { .. } | E::DuplicateDate(_) => {
                CliError::Data(msg)
            }
            E::InvalidParameter(_) | E::Dimension(_) | E::UniverseTooSmall { .. } | E::OracleCapExceeded { .. } => {
                CliError::Usage(msg)
            }
        }
    }
}
