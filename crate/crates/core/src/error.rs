use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate photon label {0}")]
    DuplicateLabel(u32),
    #[error("photon label sets overlap")]
    OverlappingLabels,
    #[error("expected a {expected}-photon state, got {actual} photons")]
    WrongPhotonCount { expected: usize, actual: usize },
    #[error("expected photon labels {expected:?}, got {actual:?}")]
    WrongLabels { expected: Vec<u32>, actual: Vec<u32> },
    #[error("amplitude vector of length {len} does not match {photons} photons")]
    DimensionMismatch { len: usize, photons: usize },
    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("invalid density operator: {0}")]
    InvalidDensity(String),
    #[error("projection branch has zero probability")]
    ZeroProbability,
    #[error("parameter `{name}` out of range: {detail}")]
    OutOfRange { name: &'static str, detail: String },
    #[error("tag stream is not sorted at index {0}")]
    Unsorted(usize),
    #[error("negative time {0} ns cannot be tagged")]
    NegativeTime(f64),
    #[error("zero total counts")]
    ZeroCounts,
    #[error("missing setting pair {0}")]
    MissingSetting(String),
    #[error("too few events: {got} < {need}")]
    TooFewEvents { got: usize, need: usize },
    #[error("bad tag file: {0}")]
    TagFormat(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn range(name: &'static str, detail: impl Into<String>) -> Self {
        Error::OutOfRange { name, detail: detail.into() }
    }
}
