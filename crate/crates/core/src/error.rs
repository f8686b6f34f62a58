use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Shapes of two operands disagree.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    InvalidArchitecture(String),
    InvalidConfig(String),
    EmptyDataset,
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    /// A non-finite value showed up while evaluating example `index`.
    NonFinite {
        index: usize,
    },
    /// The minimizer hit a non-finite loss; carries the last finite iterate.
    NonFiniteLoss {
        last_finite: Vec<f64>,
    },
    HessianTooLarge {
        params: usize,
        cap: usize,
    },
    SingleClass,
    FingerprintMismatch {
        expected: u64,
        found: u64,
    },
    UnknownMinimum(u64),
    UnknownGroup {
        level: usize,
        index: usize,
    },
    IdenticalEndpoints,
    EmptyDatabase,
    /// Shuffle ablation needs at least two coordinates.
    ShuffleTooSmall,
    EmptyTargetSet,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { what, expected, found } => {
                write!(f, "{what}: expected dimension {expected}, found {found}")
            }
            Error::InvalidArchitecture(msg) => write!(f, "invalid architecture: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::EmptyDataset => f.write_str("dataset is empty"),
            Error::LabelOutOfRange { index, label, classes } => {
                write!(f, "label {label} at row {index} is outside 0..{classes}")
            }
            Error::NonFinite { index } => write!(f, "non-finite value while evaluating example {index}"),
            Error::NonFiniteLoss { .. } => f.write_str("minimizer encountered a non-finite loss"),
            Error::HessianTooLarge { params, cap } => write!(
                f,
                "dense Hessian requested for {params} parameters (cap {cap}); iterative eigensolvers are not supported"
            ),
            Error::SingleClass => f.write_str("AUC needs both positive and negative labels"),
            Error::FingerprintMismatch { expected, found } => write!(
                f,
                "landscape fingerprint mismatch: database has {expected:016x}, inputs give {found:016x}"
            ),
            Error::UnknownMinimum(id) => write!(f, "no minimum with id {id}"),
            Error::UnknownGroup { level, index } => write!(f, "no group {level}_{index} in the graph"),
            Error::IdenticalEndpoints => f.write_str("band endpoints are identical"),
            Error::EmptyDatabase => f.write_str("landscape database holds no minima"),
            Error::ShuffleTooSmall => f.write_str("shuffle ablation needs at least two target coordinates"),
            Error::EmptyTargetSet => f.write_str("ablation target set is empty"),
        }
    }
}

impl core::error::Error for Error {}
