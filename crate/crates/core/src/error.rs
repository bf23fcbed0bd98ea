use thiserror::Error;

pub type Result<T> = std::result::Result<T, OvrError>;

#[derive(Error, Debug)]
pub enum OvrError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("sample rate mismatch: expected {expected} Hz, found {found} Hz")]
    SampleRate { expected: u32, found: u32 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("zero signal power in {0}")]
    ZeroPower(&'static str),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("missing impulse response for direction {0}")]
    MissingDirection(usize),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
