pub mod asymptotics;
pub mod cartan;
pub mod cocycle;
pub mod error;
pub mod flags;
pub mod hilbert;
pub mod matgroup;
pub mod patterson;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
