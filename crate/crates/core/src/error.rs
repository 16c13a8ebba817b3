use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error("unknown utterance `{0}`")]
    UnknownUtterance(String),
    #[error("utterance sets differ: `{0}` is missing on one side")]
    UtteranceMismatch(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("clip of {samples} samples is shorter than one {window}-sample window")]
    ClipTooShort { samples: usize, window: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },
    #[error("probability {value} out of [0,1] at frame {frame}")]
    ProbabilityRange { frame: usize, value: f64 },
}
