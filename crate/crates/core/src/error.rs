use thiserror::Error;

/// Errors produced by the simulation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("lattice: {0}")]
    Lattice(String),

    #[error("kernel: {0}")]
    Kernel(String),

    #[error("model: {0}")]
    Model(String),

    #[error("enumeration over {size} {unit} exceeds the cap of {cap}")]
    TooLarge {
        size: usize,
        cap: usize,
        unit: &'static str,
    },

    #[error("domain: {0}")]
    Domain(String),

    #[error("sampler: {0}")]
    Sampler(String),

    #[error("energy cache inconsistent: cached {cached}, recomputed {recomputed}")]
    CacheMismatch { cached: f64, recomputed: f64 },

    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
