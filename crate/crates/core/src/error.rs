use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("subset mask {mask:#x} out of range for {n_agents} agents")]
    SubsetOutOfRange { mask: u32, n_agents: usize },

    #[error("ground set of {0} agents is not supported (explicit tables allow 1..=20)")]
    GroundSetSize(usize),

    #[error("rank table has {got} entries, expected {expected}")]
    TableSize { got: usize, expected: usize },

    #[error("minimum distance needs at least two agents")]
    NoAgentPairs,

    #[error("vector has dimension {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },

    #[error("point lies outside the polymatroid")]
    OutsidePolymatroid,

    #[error("invalid rank function: {0}")]
    InvalidRankFunction(String),

    #[error("rank function is degenerate: f(N) = 0")]
    ZeroTotal,

    #[error("rank function must satisfy f(N) = 1 before quantization, got {0}")]
    NotNormalized(f64),

    #[error("minimum distance is {0}; perturb the rank function before quantizing")]
    ZeroMinDistance(f64),

    #[error("{partitions} partitions do not yield an integral polymatroid (threshold is {threshold})")]
    InadmissiblePartitions { partitions: u64, threshold: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid utility: {0}")]
    InvalidUtility(String),

    #[error("agent {agent}: marginal {value} outside [{low}, {high}]")]
    BidOutOfBand {
        agent: usize,
        value: f64,
        low: f64,
        high: f64,
    },

    #[error("agent {agent}: {len} bids exceed the single-agent capacity {cap}")]
    BidTooLong { agent: usize, len: usize, cap: u64 },

    #[error("agent {agent}: bids must be non-increasing (position {position})")]
    NonMonotoneBids { agent: usize, position: usize },

    #[error("agent {agent}: bid {bid} exceeds the maximum representable bid {max}")]
    BidTooLarge { agent: usize, bid: u64, max: u64 },

    #[error("allocation is inconsistent with the bids: {0}")]
    InconsistentAllocation(String),

    #[error("CEILOOR requires an even number of partitions, got {0}")]
    OddPartitionsForCeiloor(u64),

    #[error("strategy {0:?} cannot be expressed as integer bids")]
    NotAnIntegerStrategy(crate::rounded::StrategyKind),

    #[error("instance too large for enumeration: {0}")]
    InstanceTooLarge(String),

    #[error("target efficiency {target} is unreachable (limit {limit})")]
    UnreachableTarget { target: f64, limit: f64 },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
