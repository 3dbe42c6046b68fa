use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violated a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A node/edge set does not form a valid connected topology.
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    /// An action referenced an edge that is masked out. Unreachable when
    /// masking works; surfacing it loudly is the point.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Masked distribution over a mask with no active edge.
    #[error("no valid action: {0}")]
    NoValidAction(String),

    /// The exact oracle was asked for more nodes than it can enumerate.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A training iteration produced a non-finite loss.
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    /// Malformed text format (topology, permutation, circuit, records).
    #[error("parse error: {0}")]
    Parse(String),

    /// Model container problems, each distinct so callers can tell them apart.
    #[error("model container: bad magic bytes")]
    ModelBadMagic,
    #[error("model container: unsupported format version {0}")]
    ModelBadVersion(u32),
    #[error("model container: file truncated ({0})")]
    ModelTruncated(String),
    #[error("model container: checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    ModelChecksum { stored: u32, computed: u32 },
    #[error("model container: header parameter count {header} does not match layer dims ({expected})")]
    ModelParamCount { header: u64, expected: u64 },

    /// Benchmark configuration problems (missing nets, unknown methods).
    #[error("bench config: {0}")]
    BenchConfig(String),

    /// A verified-circuit postcondition failed; indicates an implementation bug.
    #[error("internal invariant breach: {0}")]
    Internal(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
