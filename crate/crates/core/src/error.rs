use std::fmt;

pub type Result<T> = std::result::Result<T, GpairError>;

/// Error type shared by every stage of the pipeline.
#[derive(Debug)]
pub enum GpairError {
    /// A parameter was outside its documented domain.
    InvalidArgument(String),
    /// Geometry that cannot be imaged, e.g. a detector coincident with a
    /// voxel center (the propagation distance would be zero).
    GeometryConflict(String),
    /// Arrays that do not belong to the same grid or acquisition.
    ShapeMismatch(String),
    /// A requested allocation exceeds a documented cap.
    ResourceLimit(String),
    /// NaN or Inf encountered where a finite value is required.
    Numerical(String),
    /// Malformed or foreign file contents.
    Format(String),
    Io(std::io::Error),
}

impl fmt::Display for GpairError {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            GpairError::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            GpairError::GeometryConflict(msg) => write!(f, "geometry conflict: {msg}"),
            GpairError::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            GpairError::ResourceLimit(msg) => write!(f, "resource limit: {msg}"),
            GpairError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            GpairError::Format(msg) => write!(f, "format error: {msg}"),
            GpairError::Io(err) => write!(f, "i/o error: {err}"),
        }
    }
}

impl std::error::Error for GpairError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            GpairError::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for GpairError {
    fn from(err: std::io::Error) -> Self {
        GpairError::Io(err)
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> GpairError {
    GpairError::InvalidArgument(msg.into())
}

pub(crate) fn mismatch(msg: impl Into<String>) -> GpairError {
    GpairError::ShapeMismatch(msg.into())
}
