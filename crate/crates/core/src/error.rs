use std::path::PathBuf;

/// Errors raised by the descriptor engines, samplers and file formats.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// `|λt|` is past the point where `cosh`/`sinh` overflow a double.
    #[error("hyperbolic overflow: |lambda * t| = {0} exceeds 700")]
    Overflow(f64),

    #[error("integration diverged at node {node}")]
    Divergence { node: usize },

    #[error("state has dimension {state} but the vector field has dimension {field}")]
    DimensionMismatch { state: usize, field: usize },

    #[error("time horizon mismatch: parameters use T = {params}, quadrature grid uses T = {grid}")]
    HorizonMismatch { params: f64, grid: f64 },

    #[error("manifold gradient norm must be positive, got {0}")]
    DegenerateManifold(f64),

    #[error("grid point ({iq}, {ip}) failed: {source}")]
    AtNode {
        iq: usize,
        ip: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("fields are not comparable: {0}")]
    FieldMismatch(String),

    #[error("{path}: bad magic {found:?}, expected \"LDG1\"")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("{path}: unsupported format version {found}")]
    VersionMismatch { path: PathBuf, found: u16 },

    #[error("{path}: truncated file, expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("{path}: {extra} bytes of trailing data after the payload")]
    TrailingData { path: PathBuf, extra: u64 },

    #[error("{path}: unknown field kind tag {tag}")]
    UnknownKind { path: PathBuf, tag: u8 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_node(iq: usize, ip: usize, source: Error) -> Self {
        Error::AtNode {
            iq,
            ip,
            source: Box::new(source),
        }
    }
}
