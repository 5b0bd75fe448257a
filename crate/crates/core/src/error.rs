use thiserror::Error;

/// Rejected constructor or CLI configuration.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("range {0} is not a power of two")]
    RangeNotPowerOfTwo(u64),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// A with-high-probability bound was breached. Tables answer these by
/// rebuilding with fresh hash functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum Failure {
    #[error("bin {bin} overflowed")]
    BinOverflow { bin: usize },
    #[error("bin {bin} underflowed")]
    BinUnderflow { bin: usize },
    #[error("index slot of word {word} is empty")]
    EmptyIndexSlot { word: usize },
    #[error("partner bin {bin} has too few self-loops")]
    SelfLoopShortage { bin: usize },
    #[error("sample budget exhausted")]
    SampleBudget,
    #[error("retrieval structure could not place a key")]
    RetrievalFull,
    #[error("two live keys reduce to the same value")]
    ReductionCollision,
    #[error("overflow list of bin {bin} is empty")]
    OverflowListEmpty { bin: usize },
    #[error("buffer queue exceeded its bound")]
    QueueOverflow,
    #[error("segment invariant breached: {0}")]
    Structure(&'static str),
}

impl Failure {
    /// Stable short name, used as a report key.
    pub fn kind(&self) -> &'static str {
        match self {
            Failure::BinOverflow { .. } => "bin_overflow",
            Failure::BinUnderflow { .. } => "bin_underflow",
            Failure::EmptyIndexSlot { .. } => "empty_index_slot",
            Failure::SelfLoopShortage { .. } => "selfloop_shortage",
            Failure::SampleBudget => "sample_budget",
            Failure::RetrievalFull => "retrieval_full",
            Failure::ReductionCollision => "reduction_collision",
            Failure::OverflowListEmpty { .. } => "overflow_list_empty",
            Failure::QueueOverflow => "queue_overflow",
            Failure::Structure(_) => "structure",
        }
    }
}

/// Errors surfaced by table operations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("key {0} is already present")]
    AlreadyPresent(u64),
    #[error("key {0} is not present")]
    NotPresent(u64),
    #[error("operation would leave the supported occupancy band")]
    OutOfBand,
    #[error("rebuild cap of {cap} exceeded (last failure: {last})")]
    RebuildCapExceeded { cap: u32, last: Failure },
    #[error(transparent)]
    Config(#[from] ConfigError),
}
