//! Stationary tail of a decentered switched system.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use switchlab::control::{explosive_control_search, ExplosiveControl};
use switchlab::measure::lyapunov_chi;
use switchlab::system::{Mode, SystemParams};
use switchlab::tail::{
    bounded_support_probe, burn_in, chained_blocks_system, default_hill_k, hill_stability,
    hill_tail_index_with, hurwitz_envelope, multi_block_roots, yn_norms, Bootstrap,
    BoundedSupportReport, DecenteredSystem, TailEstimate,
};

use crate::config::{self, invalid, ConfigError};
use crate::output::{pretty, Table};
use crate::svg::{self, Axis, Meta, Scale, Series, PALETTE};
use crate::{CliError, Outcome, RunContext};

pub const TAIL_DEFAULTS: &str = r#"
[system]
kind = "planar"
a = 0.15
b = 3.0
u = 0.5
beta = 0.3
a0 = []
a1 = []
b0 = [0.0, 0.0]
b1 = [1.0, 0.0]
rates = []

[search]
k_phases = [1, 3]
grid_points = 32
grid_max = 6.283185307179586
directions = 180

[heavy]
samples = 400000
blocks = [1, 2, 4, 8]
p_max = 60.0
chain_steps = 2000000
hill_k = 0
bootstrap_resamples = 100
bootstrap_block = 1000
ratio_bound = 1.25

[bounded]
steps = 1000000
checkpoints = 12
epsilon = 1e-6
envelope_fraction = 0.5
tau_quantile = 0.1
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    /// The planar pair `(a, b)` with rates `(βu, β(1-u))`.
    Planar,
    /// Explicit matrices `a0`, `a1` (rows) and `rates`.
    Matrices,
    /// Two planar blocks acting on coordinates `(1,2)` and `(2,3)`.
    ChainedBlocks,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TailSystem {
    pub kind: SystemKind,
    pub a: f64,
    pub b: f64,
    pub u: f64,
    pub beta: f64,
    pub a0: Vec<Vec<f64>>,
    pub a1: Vec<Vec<f64>>,
    pub b0: Vec<f64>,
    pub b1: Vec<f64>,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    /// Odd phase counts tried in order until one certifies.
    pub k_phases: Vec<usize>,
    pub grid_points: usize,
    pub grid_max: f64,
    pub directions: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct HeavySection {
    pub samples: usize,
    pub blocks: Vec<usize>,
    pub p_max: f64,
    pub chain_steps: usize,
    /// `0` selects `⌈√n⌉`.
    pub hill_k: usize,
    pub bootstrap_resamples: usize,
    pub bootstrap_block: usize,
    pub ratio_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BoundedSection {
    pub steps: usize,
    pub checkpoints: usize,
    pub epsilon: f64,
    pub envelope_fraction: f64,
    pub tau_quantile: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TailConfig {
    pub system: TailSystem,
    pub search: SearchSection,
    pub heavy: HeavySection,
    pub bounded: BoundedSection,
}

impl TailConfig {
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        config::load(TAIL_DEFAULTS, file, overrides)
    }
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ConfigError> {
    let d = rows.len();
    if d < 2 || rows.iter().any(|r| r.len() != d) {
        return Err(invalid(
            name,
            "must be a square matrix of size at least 2, given as rows",
        ));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn fixed<const N: usize>(name: &str, v: &[f64]) -> Result<[f64; N], ConfigError> {
    v.try_into()
        .map_err(|_| invalid(name, format!("expected {N} entries, got {}", v.len())))
}

/// The configured system, its quadrature χ when planar, and warnings.
pub fn build_system(
    s: &TailSystem,
) -> Result<(DecenteredSystem, Option<f64>, Vec<String>), CliError> {
    match s.kind {
        SystemKind::Planar => {
            let p = SystemParams::new(s.a, s.b, s.beta, s.u)?;
            let sys = DecenteredSystem::planar(
                &p,
                fixed("system.b0", &s.b0)?,
                fixed("system.b1", &s.b1)?,
            )?;
            let chi = lyapunov_chi(&p)?.value;
            Ok((sys, Some(chi), Vec::new()))
        }
        SystemKind::Matrices => {
            let a0 = matrix("system.a0", &s.a0)?;
            let a1 = matrix("system.a1", &s.a1)?;
            let sys = DecenteredSystem::new(
                a0,
                a1,
                nalgebra::DVector::from_column_slice(&s.b0),
                nalgebra::DVector::from_column_slice(&s.b1),
                fixed("system.rates", &s.rates)?,
            )?;
            Ok((sys, None, Vec::new()))
        }
        SystemKind::ChainedBlocks => {
            let (sys, warning) = chained_blocks_system(
                s.a,
                s.b,
                fixed("system.b0", &s.b0)?,
                fixed("system.b1", &s.b1)?,
                fixed("system.rates", &s.rates)?,
            )?;
            Ok((sys, None, warning.into_iter().collect()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockRoot {
    pub blocks: usize,
    pub estimate: Option<TailEstimate>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    /// Block count of the moment root compared with Hill (the largest that
    /// succeeded).
    pub blocks: usize,
    pub ratio: f64,
    pub overlap: bool,
    pub agree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeavyReport {
    pub block_roots: Vec<BlockRoot>,
    pub hill: TailEstimate,
    pub hill_k: usize,
    pub burn_in: usize,
    pub hill_stability: Vec<(usize, Option<f64>)>,
    pub comparison: Option<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub kind: SystemKind,
    pub dim: usize,
    pub chi_quadrature: Option<f64>,
    pub searches: Vec<ExplosiveControl>,
    pub certified: bool,
    pub verdict: String,
    pub heavy: Option<HeavyReport>,
    pub bounded: Option<BoundedSupportReport>,
    pub warnings: Vec<String>,
}

fn hill_ks(n: usize) -> Vec<usize> {
    let top = n / 10;
    let mut ks = Vec::new();
    let mut base = 10;
    while base <= top {
        for m in [1, 2, 5] {
            if m * base <= top {
                ks.push(m * base);
            }
        }
        base *= 10;
    }
    ks
}

fn heavy_branch(
    sys: &DecenteredSystem,
    h: &HeavySection,
    seed: u64,
) -> Result<HeavyReport, CliError> {
    if h.blocks.is_empty() || h.blocks.contains(&0) {
        return Err(invalid("heavy.blocks", "need positive block counts").into());
    }
    let roots = multi_block_roots(
        sys.matrix(Mode::Zero),
        sys.matrix(Mode::One),
        sys.rates(),
        &h.blocks,
        h.samples,
        h.p_max,
        seed,
    );
    let block_roots: Vec<BlockRoot> = roots
        .into_iter()
        .map(|(m, r)| BlockRoot {
            blocks: m,
            status: crate::status_of(&r),
            estimate: r.ok(),
        })
        .collect();
    let y0: Vec<f64> = sys.attractor(Mode::Zero).iter().copied().collect();
    let norms = yn_norms(sys, &y0, h.chain_steps, seed)?;
    let skip = burn_in(norms.len());
    let kept = &norms[skip..];
    let k = if h.hill_k == 0 {
        default_hill_k(kept.len())
    } else {
        h.hill_k
    };
    let boot = Bootstrap {
        resamples: h.bootstrap_resamples,
        block_len: h.bootstrap_block,
        seed,
    };
    let hill = hill_tail_index_with(kept, k, &boot)?;
    let comparison = block_roots
        .iter()
        .filter_map(|b| b.estimate.map(|e| (b.blocks, e)))
        .max_by_key(|(m, _)| *m)
        .map(|(m, e)| {
            let ratio = e.x1.max(hill.x1) / e.x1.min(hill.x1);
            let overlap = e.overlaps(&hill);
            Comparison {
                blocks: m,
                ratio,
                overlap,
                agree: overlap && ratio <= h.ratio_bound,
            }
        });
    Ok(HeavyReport {
        block_roots,
        hill,
        hill_k: k,
        burn_in: skip,
        hill_stability: hill_stability(kept, &hill_ks(kept.len())),
        comparison,
    })
}

pub fn tail_report(cfg: &TailConfig, seed: u64) -> Result<TailReport, CliError> {
    let (sys, chi, mut warnings) = build_system(&cfg.system)?;
    let s = &cfg.search;
    if s.grid_points == 0 || !(s.grid_max > 0.0) || s.k_phases.is_empty() {
        return Err(invalid(
            "search",
            "need grid_points >= 1, grid_max > 0 and some k_phases",
        )
        .into());
    }
    let grid: Vec<f64> = (1..=s.grid_points)
        .map(|j| j as f64 * s.grid_max / s.grid_points as f64)
        .collect();
    let mut searches = Vec::new();
    for &k in &s.k_phases {
        let r = explosive_control_search(
            sys.matrix(Mode::Zero),
            sys.matrix(Mode::One),
            k,
            &grid,
            s.directions,
        )?;
        let done = r.certified;
        searches.push(r);
        if done {
            break;
        }
    }
    let certified = searches.last().is_some_and(|r| r.certified);
    let mut report = TailReport {
        kind: cfg.system.kind,
        dim: sys.dim(),
        chi_quadrature: chi,
        searches,
        certified,
        verdict: String::new(),
        heavy: None,
        bounded: None,
        warnings: Vec::new(),
    };
    if certified {
        if let Some(c) = chi.filter(|c| *c >= 0.0) {
            warnings.push(format!(
                "chi = {c} >= 0: the chain has no stationary law, sampling skipped"
            ));
            report.verdict = "no-stationary-law".into();
        } else {
            let heavy = heavy_branch(&sys, &cfg.heavy, seed)?;
            if heavy.hill.light_tail_suspected {
                warnings
                    .push("Hill estimates drift upward as k shrinks; the tail may be light".into());
            }
            report.verdict = "heavy-tail".into();
            report.heavy = Some(heavy);
        }
    } else {
        let b = &cfg.bounded;
        let envelope = hurwitz_envelope(&sys, b.envelope_fraction).ok();
        let probe = bounded_support_probe(
            &sys,
            b.steps,
            b.checkpoints,
            seed,
            b.epsilon,
            envelope,
            b.tau_quantile,
        )?;
        report.verdict = match probe.verdict {
            switchlab::tail::SupportVerdict::Bounded => "bounded".into(),
            switchlab::tail::SupportVerdict::UnboundedEvidence => "unbounded-evidence".into(),
        };
        report.bounded = Some(probe);
    }
    report.warnings = warnings;
    Ok(report)
}

fn opt(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

pub fn cmd_tail(cfg: &TailConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    let report = tail_report(cfg, ctx.seed)?;
    let mut out = Outcome::default();
    let body = serde_json::json!({
        "schema": format!("switchlab/tail_report v{}", crate::output::SCHEMA_VERSION),
        "config": cfg,
        "seed": ctx.seed,
        "report": report,
    });
    out.artifacts.add("tail_report.json", pretty(&body));
    let meta = Meta {
        title: String::new(),
        command: "tail",
        params: serde_json::to_value(cfg).expect("serializable"),
        seed: Some(ctx.seed),
    };
    if let Some(h) = &report.heavy {
        let mut roots = Table::new(
            "tail_block_roots",
            &["blocks", "x1", "ci_low", "ci_high", "status"],
        );
        for b in &h.block_roots {
            roots.push(vec![
                b.blocks.into(),
                opt(b.estimate.map(|e| e.x1)).into(),
                opt(b.estimate.map(|e| e.ci_low)).into(),
                opt(b.estimate.map(|e| e.ci_high)).into(),
                b.status.clone().into(),
            ]);
        }
        out.failed_points += h
            .block_roots
            .iter()
            .filter(|b| b.estimate.is_none())
            .count();
        let mut stab = Table::new("tail_hill_stability", &["k", "x1"]);
        for (k, v) in &h.hill_stability {
            stab.push(vec![(*k).into(), opt(*v).into()]);
        }
        out.artifacts.table(&roots, ctx.format);
        out.artifacts.table(&stab, ctx.format);
        let cmp = h
            .comparison
            .as_ref()
            .map_or("no moment root".to_string(), |c| {
                format!(
                    "m={} ratio {:.4} overlap {} agree {}",
                    c.blocks, c.ratio, c.overlap, c.agree
                )
            });
        out.summary.push(format!(
            "tail: verdict heavy-tail, Hill x1 {:.4} [{:.4}, {:.4}], {cmp}",
            h.hill.x1, h.hill.ci_low, h.hill.ci_high
        ));
        if ctx.svg {
            let pts: Vec<(f64, f64)> = h
                .hill_stability
                .iter()
                .filter_map(|(k, v)| v.map(|v| (*k as f64, v)))
                .collect();
            let mut series = vec![Series::line("Hill x1(k)", PALETTE[0], pts.clone())];
            let mut hl = Vec::new();
            for (n, b) in h.block_roots.iter().enumerate() {
                if let Some(e) = b.estimate {
                    let mut s = Series::line(
                        &format!("moment root, m = {}", b.blocks),
                        PALETTE[(n + 1) % PALETTE.len()],
                        vec![
                            (pts.first().map_or(1.0, |p| p.0), e.x1),
                            (pts.last().map_or(10.0, |p| p.0), e.x1),
                        ],
                    );
                    s.dashed = true;
                    series.push(s);
                    hl.push(e.x1);
                }
            }
            let meta = Meta {
                title: "tail index estimates".into(),
                ..meta.clone()
            };
            let ys = pts.iter().map(|p| p.1).chain(hl);
            let s = svg::line_plot(
                &meta,
                Axis::fit("k", Scale::Log, pts.iter().map(|p| p.0)),
                Axis::fit("x1", Scale::Linear, ys),
                &series,
                &[],
            );
            out.artifacts.add("tail.svg", s);
        }
    } else if let Some(b) = &report.bounded {
        let mut cp = Table::new("tail_checkpoints", &["step", "running_max"]);
        for (step, r) in &b.checkpoints {
            cp.push(vec![(*step).into(), (*r).into()]);
        }
        out.artifacts.table(&cp, ctx.format);
        out.summary.push(format!(
            "tail: verdict {}, running max {:.6}, second-half increase {:.3e}",
            report.verdict,
            b.checkpoints.last().map_or(f64::NAN, |c| c.1),
            b.second_half_increase
        ));
        if ctx.svg {
            let pts: Vec<(f64, f64)> = b.checkpoints.iter().map(|(s, r)| (*s as f64, *r)).collect();
            let meta = Meta {
                title: "running maximum of the chain norm".into(),
                ..meta.clone()
            };
            let s = svg::line_plot(
                &meta,
                Axis::fit("step", Scale::Log, pts.iter().map(|p| p.0)),
                Axis::fit("max norm", Scale::Linear, pts.iter().map(|p| p.1)),
                &[Series::line("running max", PALETTE[0], pts.clone())],
                &[],
            );
            out.artifacts.add("tail.svg", s);
        }
    } else {
        out.summary
            .push(format!("tail: verdict {}", report.verdict));
    }
    for w in &report.warnings {
        out.summary.push(format!("warning: {w}"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let cfg = TailConfig::load(None, &[]).unwrap();
        assert_eq!(cfg.system.kind, SystemKind::Planar);
        assert_eq!(cfg.heavy.blocks, vec![1, 2, 4, 8]);
    }

    #[test]
    fn hill_grid() {
        assert_eq!(hill_ks(2000), vec![10, 20, 50, 100, 200]);
        assert!(hill_ks(50).is_empty());
    }

    #[test]
    fn matrix_shape_checked() {
        assert!(matrix("m", &[vec![1.0, 0.0], vec![0.0]]).is_err());
        assert!(matrix("m", &[vec![1.0]]).is_err());
        let m = matrix("m", &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m[(0, 1)], 2.0);
    }

    #[test]
    fn identity_pair_is_bounded() {
        let cfg = TailConfig::load(
            None,
            &[
                "system.kind=\"matrices\"".into(),
                "system.a0=[[-1.0, 0.0], [0.0, -1.0]]".into(),
                "system.a1=[[-1.0, 0.0], [0.0, -1.0]]".into(),
                "system.b0=[0.5, 0.5]".into(),
                "system.rates=[0.5, 0.5]".into(),
                "bounded.steps=20000".into(),
            ],
        )
        .unwrap();
        let r = tail_report(&cfg, 3).unwrap();
        assert!(!r.certified);
        assert_eq!(r.verdict, "bounded");
        assert!(r.bounded.unwrap().a_priori_radius.is_some());
    }

    #[test]
    fn explosive_planar_skips_sampling() {
        let cfg = TailConfig::load(None, &["system.beta=2.0".into()]).unwrap();
        let r = tail_report(&cfg, 0).unwrap();
        assert!(r.chi_quadrature.unwrap() > 0.0);
        assert!(r.certified);
        assert_eq!(r.verdict, "no-stationary-law");
        assert!(r.heavy.is_none());
    }

    #[test]
    fn bad_vector_length_is_usage() {
        let cfg = TailConfig::load(None, &["system.b0=[0.0, 0.0, 1.0]".into()]).unwrap();
        assert!(matches!(tail_report(&cfg, 0), Err(CliError::Usage(_))));
    }
}
