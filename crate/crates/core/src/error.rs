use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("vocabulary is empty; no noise distribution can be built")]
    EmptyVocabulary,
    #[error("cannot exclude word {exclude} from a vocabulary of size {size}")]
    ExclusionImpossible { exclude: u32, size: usize },
    #[error("every sense is masked out")]
    AllSensesMasked,
    #[error("context list is empty")]
    EmptyContext,
    #[error("non-finite value in {matrix} row {word} sense {sense:?}")]
    NonFinite {
        matrix: &'static str,
        word: u32,
        sense: Option<u32>,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid sense mask: {0}")]
    InvalidMask(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("spearman correlation needs at least two paired scores, got {0}")]
    TooFewScores(usize),
    #[error("score lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("scores have zero variance")]
    ZeroVariance,
    #[error("no pair in the dataset could be scored")]
    NothingScored,
    #[error("metric {0} needs contextual pairs")]
    MetricNeedsContext(&'static str),
    #[error("no true-neighbor distances were collected")]
    NoNeighborDistances,
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
}
