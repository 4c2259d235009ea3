//! Scenario-driven experiment runner for the `mbsde-core` crate: TOML
//! scenarios, drift expressions, the command implementations behind the
//! `mbsde` binary and their artifacts.

pub mod artifacts;
pub mod commands;
pub mod expr;
pub mod scenario;
pub mod selftest;
pub mod setup;

use thiserror::Error;

/// Problems with a scenario file; always exit code 2.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read scenario: {0}")]
    Io(String),
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Math(#[from] mbsde_core::Error),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl RunError {
    /// 1 for failures of the mathematics at run time, 2 for everything
    /// that a corrected configuration or environment would fix.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Math(
                mbsde_core::Error::Precondition(_) | mbsde_core::Error::Dimension(_),
            ) => 2,
            RunError::Math(_) => 1,
            RunError::Config(_) | RunError::Other(_) => 2,
        }
    }
}
