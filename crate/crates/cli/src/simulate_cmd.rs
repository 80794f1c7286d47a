//! Single trajectory export.

use std::path::Path;

use serde::{Deserialize, Serialize};
use switchlab::simulate::{simulate_sampled, SwitchingLaw, TrajectoryRecord};
use switchlab::system::Mode;

use crate::config::{self, invalid, ConfigError};
use crate::output::{pretty, Format, SCHEMA_VERSION};
use crate::svg::{self, Meta};
use crate::{CliError, Outcome, PlanarSection, RunContext};

pub const SIMULATE_DEFAULTS: &str = r#"
[system]
a = 0.15
b = 3.0
u = 0.5
beta = 1.0

[simulate]
law = "exponential"
n = 10
horizon = 20.0
x0 = [1.0, 0.0]
mode = 0
sample_dt = 0.0
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawName {
    Exponential,
    Erlang,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub law: LawName,
    /// Stage count for the Erlang law.
    pub n: usize,
    pub horizon: f64,
    pub x0: [f64; 2],
    pub mode: usize,
    /// Sampling step; `0` selects `horizon / 1000`.
    pub sample_dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub system: PlanarSection,
    pub simulate: SimulateSection,
}

impl SimulateConfig {
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        config::load(SIMULATE_DEFAULTS, file, overrides)
    }
}

pub fn trajectory(cfg: &SimulateConfig, seed: u64) -> Result<TrajectoryRecord, CliError> {
    let beta = cfg
        .system
        .beta
        .ok_or_else(|| invalid("system.beta", "required for simulate"))?;
    let params = cfg.system.at(beta)?;
    let s = &cfg.simulate;
    let law = match s.law {
        LawName::Exponential => SwitchingLaw::Exponential,
        LawName::Erlang => SwitchingLaw::ErlangStaged { n: s.n },
        LawName::Periodic => SwitchingLaw::Periodic,
    };
    let mode =
        Mode::from_index(s.mode).ok_or_else(|| invalid("simulate.mode", "must be 0 or 1"))?;
    let dt = if s.sample_dt == 0.0 {
        s.horizon / 1000.0
    } else {
        s.sample_dt
    };
    Ok(simulate_sampled(
        &params, law, s.x0, mode, s.horizon, seed, dt,
    )?)
}

/// `(log‖x_T‖ - log‖x_0‖) / T`.
pub fn log_radius_slope(rec: &TrajectoryRecord) -> f64 {
    let first = &rec.samples[0];
    let last = rec.final_sample();
    (last.log_radius - first.log_radius) / (last.t - first.t)
}

pub fn cmd_simulate(cfg: &SimulateConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    let rec = trajectory(cfg, ctx.seed)?;
    let mut out = Outcome::default();
    let schema = format!("switchlab/trajectory v{SCHEMA_VERSION}");
    match ctx.format {
        Format::Csv => out.artifacts.add(
            "trajectory.csv",
            format!("# schema: {schema}\n{}", rec.to_csv()),
        ),
        Format::Json => out.artifacts.add(
            "trajectory.json",
            pretty(&serde_json::json!({"schema": schema, "config": cfg, "trajectory": rec})),
        ),
    }
    out.summary.push(format!(
        "simulate: {} jumps, {} samples, log-radius slope {:.6}",
        rec.events.len(),
        rec.samples.len(),
        log_radius_slope(&rec)
    ));
    if ctx.svg {
        let path: Vec<(f64, f64, usize)> = rec
            .samples
            .iter()
            .map(|s| (s.x[0], s.x[1], s.mode.index()))
            .collect();
        let jumps: Vec<(f64, f64)> = rec
            .samples
            .iter()
            .filter(|s| rec.events.iter().any(|e| e.t == s.t))
            .map(|s| (s.x[0], s.x[1]))
            .collect();
        let meta = Meta {
            title: format!(
                "trajectory, a={}, b={}, beta={}, u={}",
                cfg.system.a,
                cfg.system.b,
                cfg.system.beta.unwrap_or(f64::NAN),
                cfg.system.u
            ),
            command: "simulate",
            params: serde_json::to_value(cfg).expect("serializable"),
            seed: Some(ctx.seed),
        };
        out.artifacts
            .add("trajectory.svg", svg::phase_portrait(&meta, &path, &jumps));
    }
    Ok(out)
}
