use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("cannot connect to lab at {addr}: {source}")]
    Connect { addr: String, source: std::io::Error },

    #[error("transport failure after retry: {0}")]
    Transport(#[source] std::io::Error),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("protocol version {found} does not match {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    /// The server answered with an error status.
    #[error("lab rejected request: {0}")]
    Rejected(String),

    #[error(transparent)]
    Model(#[from] nvdesign_core::Error),
}
