use std::fmt;
use std::process::ExitCode;

use sgcontrol::Error;

/// Failure of a subcommand, classified by the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration, arguments or unreadable input (exit 2).
    Validation(String),
    /// A computation broke down (exit 3).
    Numerical(String),
    /// Everything was computed but the certificate is invalid or gives no decay (exit 4).
    NoGuarantee(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::NoGuarantee(_) => 4,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "validation error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::NoGuarantee(m) => write!(f, "no stability guarantee: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::EigenFailure { .. }
            | Error::NonFiniteProjection { .. }
            | Error::NotHyperbolic(_)
            | Error::WeightPositivity { .. }
            | Error::NonFiniteState { .. } => Failure::Numerical(msg),
            Error::InvalidParameter { .. }
            | Error::IndexSetTooLarge { .. }
            | Error::SingularMeasurements
            | Error::InsufficientRank { .. }
            | Error::BasisMismatch(_)
            | Error::Material(_)
            | Error::Config(_) => Failure::Validation(msg),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes() {
        assert_eq!(Failure::from(Error::Config("x".into())).code(), 2);
        assert_eq!(Failure::from(Error::InsufficientRank { requested: 5, achievable: 3 }).code(), 2);
        assert_eq!(Failure::from(Error::NonFiniteState { step: 3 }).code(), 3);
        assert_eq!(Failure::NoGuarantee(String::new()).code(), 4);
    }
}
