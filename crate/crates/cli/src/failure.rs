use std::fmt;

use skillcast_core::Error;

/// A pipeline failure with its process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Configuration problems, all of them.
    Validation(Vec<String>),
    /// Missing or malformed input data.
    Input(String),
    /// A remote backend could not be reached or answered badly.
    Remote(String),
}

impl Failure {
    pub fn validation(problems: Vec<String>) -> Self {
        Failure::Validation(problems)
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Failure::Input(msg.into())
    }

    pub fn code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Input(_) => 2,
            Failure::Remote(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(p) => {
                write!(f, "configuration has {} problem(s):", p.len())?;
                for line in p {
                    write!(f, "\n  - {line}")?;
                }
                Ok(())
            }
            Failure::Input(m) => write!(f, "input error: {m}"),
            Failure::Remote(m) => write!(f, "remote backend failure: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Validation(vec![m]),
            Error::Remote { .. } | Error::Protocol(_) => Failure::Remote(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

pub type Outcome<T = ()> = std::result::Result<T, Failure>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Failure::from(Error::Config("x".into())).code(), 1);
        assert_eq!(Failure::from(Error::InvalidInput("x".into())).code(), 2);
        assert_eq!(Failure::from(Error::MissingTotal("2024-01".into())).code(), 2);
        let remote = Error::Remote {
            attempts: 3,
            message: "timeout".into(),
        };
        assert_eq!(Failure::from(remote).code(), 3);
        assert_eq!(Failure::from(Error::Protocol("bad".into())).code(), 3);
    }

    #[test]
    fn validation_lists_every_problem() {
        let f = Failure::validation(vec!["a".into(), "b".into()]);
        let s = f.to_string();
        assert!(s.contains("2 problem(s)") && s.contains("- a") && s.contains("- b"));
    }
}
