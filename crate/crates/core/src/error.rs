use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("invalid observable: {0}")]
    InvalidObservable(String),

    #[error("parameter `{name}` = {value} out of range: {expected}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("measurement distribution is corrupt: {0}")]
    Measurement(String),

    #[error("pair source exhausted after {supplied} pairs, {requested} requested")]
    SourceExhausted { supplied: u64, requested: u64 },

    #[error("memory capacity of {capacity} pairs exceeded")]
    MemoryCapacity { capacity: usize },

    #[error("no pair delivered after {0} generation attempts; check loss configuration")]
    AttemptCap(u64),

    #[error("time regression: {target} s requested but clock is at {now} s")]
    TimeRegression { now: f64, target: f64 },

    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown sweep parameter `{0}`")]
    UnknownParameter(String),

    #[error("{0}")]
    EmptyInput(&'static str),

    #[error("sample split leaves no pairs: {0}")]
    DegenerateSplit(String),
}

pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    ok: bool,
    expected: &'static str,
) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            expected,
        })
    }
}
