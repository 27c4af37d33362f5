use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Spatial dimension outside the supported range.
    Dimension(usize),
    /// Estimated memory/unknown count exceeds the configured cap.
    Capacity { requested: usize, cap: usize },
    /// Diagonal element vanished at a vertex that carries an unknown.
    SingularDiagonal { level: u8, index: [u32; crate::MAX_DIM] },
    /// Pivot below threshold in the dense direct solver.
    SingularMatrix { column: usize },
    /// A caller broke an operation's precondition.
    Contract(&'static str),
    /// Combination of options the requested algorithm cannot handle.
    Unsupported(&'static str),
    /// Problem or run configuration is inconsistent.
    Config(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(p) => write!(f, "dimension {p} outside supported range 1..=4"),
            Error::Capacity { requested, cap } => {
                write!(f, "capacity exceeded: {requested} requested, cap {cap}")
            }
            Error::SingularDiagonal { level, index } => {
                write!(f, "singular diagonal at level {level} vertex {index:?}")
            }
            Error::SingularMatrix { column } => write!(f, "singular matrix at column {column}"),
            Error::Contract(what) => write!(f, "contract violation: {what}"),
            Error::Unsupported(what) => write!(f, "unsupported configuration: {what}"),
            Error::Config(what) => write!(f, "configuration error: {what}"),
        }
    }
}

impl core::error::Error for Error {}
