use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} = {value} is outside its domain ({constraint})")]
    Domain {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("patient {0} has not been assigned")]
    UnknownPatient(usize),
    #[error("patient {0} already has a recorded outcome")]
    DuplicateOutcome(usize),
    #[error("outcome or parameter variant does not match the trial's {expected} responses")]
    VariantMismatch { expected: &'static str },
    #[error("{what} is not supported: {reason}")]
    Unsupported { what: String, reason: &'static str },
    #[error("invalid design configuration: {0}")]
    Config(String),
    #[error("cannot parse {what} from {input:?}: {reason}")]
    Parse {
        what: &'static str,
        input: String,
        reason: String,
    },
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, constraint: &'static str) -> Self {
        Error::Domain {
            name,
            value,
            constraint,
        }
    }

    pub(crate) fn parse(what: &'static str, input: &str, reason: impl ToString) -> Self {
        Error::Parse {
            what,
            input: input.to_string(),
            reason: reason.to_string(),
        }
    }
}
