//! Sweeps, figures and reports on top of `switchlab`.

pub mod config;
pub mod contour;
pub mod output;
pub mod selftest;
pub mod simulate_cmd;
pub mod svg;
pub mod sweep;
pub mod tail_cmd;

use std::fmt;

use serde::Deserialize;
use switchlab::system::SystemParams;

use crate::config::ConfigError;
use crate::output::{Artifacts, Format};

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Usage(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<switchlab::Error> for CliError {
    fn from(e: switchlab::Error) -> Self {
        match e {
            switchlab::Error::InvalidParam { .. } | switchlab::Error::DimensionMismatch { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

/// Settings shared by every command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunContext {
    pub seed: u64,
    pub format: Format,
    pub svg: bool,
}

/// What a command produced.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub artifacts: Artifacts,
    /// Sweep points that failed but did not abort the run.
    pub failed_points: usize,
    /// Self-checks that missed their tolerance.
    pub failed_checks: usize,
    pub summary: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.failed_checks > 0 {
            2
        } else if self.failed_points > 0 {
            3
        } else {
            0
        }
    }
}

/// The planar pair `(a, b, u)`; `beta` is optional for sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarSection {
    pub a: f64,
    pub b: f64,
    pub u: f64,
    #[serde(default)]
    pub beta: Option<f64>,
}

impl PlanarSection {
    /// Parameters at `beta`; `b <= 1` selects the degenerate family.
    pub fn at(&self, beta: f64) -> Result<SystemParams, CliError> {
        self.at_u(beta, self.u)
    }

    pub fn at_u(&self, beta: f64, u: f64) -> Result<SystemParams, CliError> {
        let p = if self.b <= 1.0 {
            SystemParams::degenerate(self.a, self.b, beta, u)
        } else {
            SystemParams::new(self.a, self.b, beta, u)
        };
        Ok(p?)
    }
}

pub fn status_of<T>(r: &Result<T, switchlab::Error>) -> String {
    match r {
        Ok(_) => "ok".into(),
        Err(e) => format!("failed: {e}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let mut o = Outcome::default();
        assert_eq!(o.exit_code(), 0);
        o.failed_points = 2;
        assert_eq!(o.exit_code(), 3);
        o.failed_checks = 1;
        assert_eq!(o.exit_code(), 2);
        let usage: CliError = switchlab::Error::InvalidParam {
            name: "beta",
            reason: "negative".into(),
        }
        .into();
        assert_eq!(usage.exit_code(), 1);
        let numeric: CliError = switchlab::Error::NonFinite("chi").into();
        assert_eq!(numeric.exit_code(), 2);
    }
}
