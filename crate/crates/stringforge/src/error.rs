use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("width {n} is not supported here (expected {min} <= n <= {max})")]
    WidthOutOfRange { n: u32, min: u32, max: u32 },

    #[error("width {n} is not divisible by {divisor}")]
    NotDivisible { n: u32, divisor: u32 },

    #[error("width {n} is not a {dim}-dimensional grid of side divisible by 3")]
    BadGrid { n: u32, dim: u8 },

    #[error("width {n} must be even")]
    OddWidth { n: u32 },

    #[error("operand widths differ: {left} vs {right}")]
    WidthMismatch { left: u32, right: u32 },

    #[error("line index {line} out of range for width {n}")]
    LineOutOfRange { line: u32, n: u32 },

    #[error("gate lines {0:?} are not distinct")]
    RepeatedLines([u16; 3]),

    #[error("table of length {len} is not a permutation of 0..{len}")]
    NotAPermutation { len: usize },

    #[error("gate set is empty")]
    EmptyGateSet,

    #[error("bit {bit} is not on the {register} register for width {n}")]
    RegisterMismatch { bit: u32, register: &'static str, n: u32 },

    #[error("layer budget {layers} does not match stage split {inflationary}+{proliferation}")]
    StageSplit { layers: u32, inflationary: u32, proliferation: u32 },

    #[error("empty histogram")]
    EmptyHistogram,

    #[error("{got} usable points before saturation, need at least {need}")]
    InsufficientData { got: usize, need: usize },

    #[error("sampled plan requires at least one sample")]
    EmptyPlan,

    #[error("initial string must be a z-string (x mask zero), got x mask {x_mask:#x}")]
    NotAZString { x_mask: u64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("transition average violates the expected block structure: {0}")]
    StructureViolation(String),

    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
