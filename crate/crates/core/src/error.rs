use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("impression {index}: {reason}")]
    InvalidImpression { index: usize, reason: String },

    #[error("impression {index}: slate size {found} differs from dataset slate size {expected}")]
    SlateSizeMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("recorded propensity {value} at position {position} is not positive")]
    InvalidPropensity { position: usize, value: f64 },

    #[error("slate size {slate_size} exceeds the {candidates} available candidates")]
    SlateTooLarge {
        slate_size: usize,
        candidates: usize,
    },

    #[error("slate size must be at least 1")]
    EmptySlate,

    #[error("unknown candidate {0}")]
    UnknownCandidate(String),

    #[error("no scores for context {0}")]
    MissingScores(String),

    #[error("degenerate weights: all weights are zero")]
    DegenerateWeights,

    #[error("invalid weight {0}: weights must be finite and nonnegative")]
    InvalidWeight(f64),

    #[error("no overlap: the target policy never matches any logged slate")]
    NoOverlap,

    #[error("zero normalizer at position {position} with lookback {lookback}")]
    ZeroNormalizer { position: usize, lookback: usize },

    #[error("threshold must lie in [0, 1], got {0}")]
    InvalidThreshold(f64),

    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),

    #[error("pseudoinverse estimator needs uniformly logged full permutations: {0}")]
    PiPreconditions(String),

    #[error("world must contain at least one context and one candidate")]
    EmptyWorld,

    #[error("invalid reward probability {0}")]
    InvalidProbability(f64),

    #[error("stochastic target over {candidates} candidates cannot be enumerated; provide Monte-Carlo samples")]
    NotEnumerable { candidates: usize },

    #[error("{0}")]
    InvalidConfig(String),
}

impl Error {
    /// True for failures caused by the target policy having no (or too little)
    /// support on the logged data, as opposed to malformed input.
    pub fn is_overlap_failure(&self) -> bool {
        matches!(
            self,
            Error::DegenerateWeights | Error::NoOverlap | Error::ZeroNormalizer { .. }
        )
    }
}
