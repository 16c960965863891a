//! Error type shared by all modules.

use thiserror::Error;

/// Failure modes of the toolkit.
///
/// The split matters to callers: `InvalidArgument` means the request itself is
/// malformed, `Budget` means a configured site or step budget stopped the
/// computation, and `WindowExhausted` means a scan ran off the sampled window
/// and the caller may retry with a larger one.
#[derive(Debug, Error)]
pub enum Error {
    /// A site law failed structural validation (support, weights).
    #[error("invalid site law: {0}")]
    InvalidLaw(String),

    /// A request was malformed (bad range, bad parameter combination).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A site or step budget was exceeded before the computation finished.
    #[error("budget exceeded: {0}")]
    Budget(String),

    /// A scan needed sites outside the sampled window.
    #[error("window exhausted: {0}")]
    WindowExhausted(String),

    /// A documented precondition does not hold for the supplied data.
    #[error("precondition failed: {0}")]
    Precondition(String),
}
