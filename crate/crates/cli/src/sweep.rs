//! Grid sweeps of the Lyapunov exponent.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use switchlab::control::{chi_d_power_iteration, periodic_chi, Regime};
use switchlab::measure::{lyapunov_chi, ChiMethod, ChiResult};
use switchlab::simulate::{derive_seed, estimate_chi_erlang, estimate_chi_mc, SwitchingLaw};
use switchlab::system::SystemParams;

use crate::config::{self, invalid, ConfigError};
use crate::contour::{bracket_root, zero_contour, Edge};
use crate::output::{Cell, Table};
use crate::svg::{self, Axis, Meta, Scale, Series, PALETTE};
use crate::{status_of, CliError, Outcome, PlanarSection, RunContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridScale {
    Log,
    Linear,
}

/// `points` nodes from `lo` to `hi`, endpoints exact.
pub fn grid_nodes(lo: f64, hi: f64, points: usize, scale: GridScale) -> Vec<f64> {
    (0..points)
        .map(|k| {
            if k == 0 {
                return lo;
            }
            if k + 1 == points {
                return hi;
            }
            let s = k as f64 / (points - 1) as f64;
            match scale {
                GridScale::Log => (lo.ln() + s * (hi.ln() - lo.ln())).exp(),
                GridScale::Linear => lo + s * (hi - lo),
            }
        })
        .collect()
}

fn check_axis(
    name: &str,
    lo: f64,
    hi: f64,
    points: usize,
    scale: GridScale,
) -> Result<(), ConfigError> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(invalid(
            name,
            format!("bounds must be finite and ordered, got [{lo}, {hi}]"),
        ));
    }
    if points < 2 {
        return Err(invalid(name, "resolution must be at least 2"));
    }
    if scale == GridScale::Log && !(lo > 0.0) {
        return Err(invalid(name, "a log grid needs positive bounds"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BetaGrid {
    pub beta_min: f64,
    pub beta_max: f64,
    pub points: usize,
    pub scale: GridScale,
}

impl BetaGrid {
    pub fn nodes(&self) -> Result<Vec<f64>, ConfigError> {
        check_axis(
            "grid.beta",
            self.beta_min,
            self.beta_max,
            self.points,
            self.scale,
        )?;
        Ok(grid_nodes(
            self.beta_min,
            self.beta_max,
            self.points,
            self.scale,
        ))
    }

    fn svg_scale(&self) -> Scale {
        match self.scale {
            GridScale::Log => Scale::Log,
            GridScale::Linear => Scale::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointMethod {
    Quadrature,
    Mc,
    ErlangMc,
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub horizon: f64,
    pub replicas: usize,
    /// Stage count for `erlang-mc`.
    pub erlang_n: usize,
}

/// χ at one parameter point by the requested route.
pub fn chi_point(
    params: &SystemParams,
    method: PointMethod,
    mc: &McSection,
    seed: u64,
) -> switchlab::Result<ChiResult> {
    match method {
        PointMethod::Quadrature => lyapunov_chi(params),
        PointMethod::Mc => estimate_chi_mc(
            params,
            SwitchingLaw::Exponential,
            mc.horizon,
            mc.replicas,
            seed,
        ),
        PointMethod::ErlangMc => {
            estimate_chi_erlang(params, mc.erlang_n, mc.horizon, mc.replicas, seed)
        }
        PointMethod::Spectral => {
            let r = periodic_chi(params);
            Ok(ChiResult {
                value: r.chi_d,
                method: ChiMethod::Spectral,
                error: 0.0,
                params_echo: *params,
            })
        }
    }
}

fn method_tag(method: PointMethod) -> &'static str {
    match method {
        PointMethod::Quadrature => ChiMethod::Quadrature.tag(),
        PointMethod::Mc => ChiMethod::MonteCarlo.tag(),
        PointMethod::ErlangMc => ChiMethod::ErlangMc.tag(),
        PointMethod::Spectral => ChiMethod::Spectral.tag(),
    }
}

/// Maximal runs of consecutive indices where `pred` holds.
pub fn runs<T>(xs: &[T], pred: impl Fn(&T) -> bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (k, x) in xs.iter().enumerate() {
        match (pred(x), start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                out.push((s, k - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, xs.len() - 1));
    }
    out
}

/// Sign changes between consecutive finite values.
pub fn zero_crossings(values: &[f64]) -> usize {
    let finite: Vec<f64> = values
        .iter()
        .copied()
        .filter(|v| v.is_finite() && *v != 0.0)
        .collect();
    finite
        .windows(2)
        .filter(|w| (w[0] > 0.0) != (w[1] > 0.0))
        .count()
}

// ---------------------------------------------------------------- profile

pub const PROFILE_DEFAULTS: &str = r#"
[system]
a = 0.15
b = 3.0
u = 0.5

[grid]
beta_min = 0.05
beta_max = 200.0
points = 200
scale = "log"

[profile]
method = "quadrature"
mc_overlay = 0

[mc]
horizon = 1000.0
replicas = 32
erlang_n = 10
"#;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    pub method: PointMethod,
    /// Monte Carlo points overlaid on the curve, spread over the grid.
    pub mc_overlay: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub system: PlanarSection,
    pub grid: BetaGrid,
    pub profile: ProfileSection,
    pub mc: McSection,
}

impl ProfileConfig {
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        config::load(PROFILE_DEFAULTS, file, overrides)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub beta: f64,
    pub u: f64,
    pub chi: f64,
    pub err: f64,
    pub method: &'static str,
    pub status: String,
}

impl PointRecord {
    fn from_result(
        beta: f64,
        u: f64,
        method: PointMethod,
        r: &switchlab::Result<ChiResult>,
    ) -> Self {
        let (chi, err) = r
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |c| (c.value, c.error));
        Self {
            beta,
            u,
            chi,
            err,
            method: method_tag(method),
            status: status_of(r),
        }
    }

    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub curve: Vec<PointRecord>,
    pub overlay: Vec<PointRecord>,
}

/// Evenly spread indices `0 = k_0 < … < k_{m-1} = n - 1`.
fn spread(n: usize, m: usize) -> Vec<usize> {
    match m {
        0 => Vec::new(),
        1 => vec![n / 2],
        _ => {
            let mut v: Vec<usize> = (0..m)
                .map(|k| (k * (n - 1) + (m - 1) / 2) / (m - 1))
                .collect();
            v.dedup();
            v
        }
    }
}

pub fn profile(cfg: &ProfileConfig, seed: u64) -> Result<Profile, CliError> {
    let betas = cfg.grid.nodes()?;
    cfg.system.at(betas[0])?;
    let point = |k: usize, beta: f64, method: PointMethod| {
        let r = cfg
            .system
            .at(beta)
            .map_err(|e| switchlab::Error::Refused(e.to_string()));
        let r = r.and_then(|p| chi_point(&p, method, &cfg.mc, derive_seed(seed, k as u64)));
        PointRecord::from_result(beta, cfg.system.u, method, &r)
    };
    let curve: Vec<PointRecord> = betas
        .par_iter()
        .enumerate()
        .map(|(k, &beta)| point(k, beta, cfg.profile.method))
        .collect();
    let overlay: Vec<PointRecord> = spread(betas.len(), cfg.profile.mc_overlay)
        .into_par_iter()
        .map(|k| point(k, betas[k], PointMethod::Mc))
        .collect();
    Ok(Profile { curve, overlay })
}

fn params_json<T: Serialize>(cfg: &T) -> serde_json::Value {
    serde_json::to_value(cfg).expect("serializable config")
}

pub fn cmd_chi_profile(cfg: &ProfileConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    let prof = profile(cfg, ctx.seed)?;
    let mut table = Table::new("chi_profile", &["beta", "chi", "method", "err", "status"]);
    for r in prof.curve.iter().chain(&prof.overlay) {
        table.push(vec![
            r.beta.into(),
            r.chi.into(),
            r.method.into(),
            r.err.into(),
            r.status.clone().into(),
        ]);
    }
    let mut out = Outcome::default();
    out.artifacts.table(&table, ctx.format);
    out.failed_points = prof
        .curve
        .iter()
        .chain(&prof.overlay)
        .filter(|r| !r.ok())
        .count();
    let chis: Vec<f64> = prof.curve.iter().map(|r| r.chi).collect();
    let (kmax, max) = chis.iter().enumerate().filter(|(_, v)| v.is_finite()).fold(
        (0, f64::NEG_INFINITY),
        |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc },
    );
    out.summary.push(format!(
        "chi-profile: {} points, {} zero crossings, max chi {:.6} at beta {:.6}, {} failed",
        chis.len(),
        zero_crossings(&chis),
        max,
        prof.curve.get(kmax).map_or(f64::NAN, |r| r.beta),
        out.failed_points
    ));
    if ctx.svg {
        let meta = Meta {
            title: format!(
                "chi(beta) for a={}, b={}, u={}",
                cfg.system.a, cfg.system.b, cfg.system.u
            ),
            command: "chi-profile",
            params: params_json(cfg),
            seed: Some(ctx.seed),
        };
        let mut series = vec![Series::line(
            method_tag(cfg.profile.method),
            PALETTE[0],
            prof.curve.iter().map(|r| (r.beta, r.chi)).collect(),
        )];
        if !prof.overlay.is_empty() {
            series.push(Series::dots(
                "monte-carlo",
                PALETTE[1],
                prof.overlay.iter().map(|r| (r.beta, r.chi)).collect(),
                prof.overlay.iter().map(|r| 3.0 * r.err).collect(),
            ));
        }
        let ys = prof.curve.iter().chain(&prof.overlay).map(|r| r.chi);
        let s = svg::line_plot(
            &meta,
            Axis::new(
                "beta",
                cfg.grid.svg_scale(),
                cfg.grid.beta_min,
                cfg.grid.beta_max,
            ),
            Axis::fit("chi", Scale::Linear, ys.chain([0.0])),
            &series,
            &[0.0, -cfg.system.a],
        );
        out.artifacts.add("chi_profile.svg", s);
    }
    Ok(out)
}

// ------------------------------------------------------------ sign region

pub const SIGN_DEFAULTS: &str = r#"
[system]
a = 0.10
b = 2.5

[grid]
beta_min = 0.1
beta_max = 100.0
beta_points = 60
beta_scale = "log"
u_min = 0.05
u_max = 0.95
u_points = 60

[contour]
tolerance = 1e-4
recheck = 1e-3
mirror = true
"#;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PairSection {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RectGrid {
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_points: usize,
    pub beta_scale: GridScale,
    pub u_min: f64,
    pub u_max: f64,
    pub u_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ContourSection {
    /// Target `|χ|` of the edge refinement.
    pub tolerance: f64,
    /// Bound on `|χ|` at re-evaluated contour points.
    pub recheck: f64,
    /// Also draw the region with `u` replaced by `1 - u`.
    pub mirror: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SignConfig {
    pub system: PairSection,
    pub grid: RectGrid,
    pub contour: ContourSection,
}

impl SignConfig {
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        config::load(SIGN_DEFAULTS, file, overrides)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourPoint {
    pub beta: f64,
    pub u: f64,
    pub chi: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignRegion {
    pub betas: Vec<f64>,
    pub us: Vec<f64>,
    /// `chi[i][j]` at `(betas[i], us[j])`; NaN where the point failed.
    pub chi: Vec<Vec<f64>>,
    pub status: Vec<Vec<String>>,
    pub contours: Vec<Vec<ContourPoint>>,
}

impl SignRegion {
    pub fn positive_cells(&self) -> usize {
        self.chi.iter().flatten().filter(|v| **v > 0.0).count()
    }

    /// A positive cell on the outer ring of the grid.
    pub fn touches_boundary(&self) -> bool {
        let (nb, nu) = (self.betas.len(), self.us.len());
        (0..nb).any(|i| {
            (0..nu)
                .any(|j| (i == 0 || j == 0 || i + 1 == nb || j + 1 == nu) && self.chi[i][j] > 0.0)
        })
    }

    pub fn failed(&self) -> usize {
        self.status.iter().flatten().filter(|s| *s != "ok").count()
    }
}

fn sign_chi(a: f64, b: f64, beta: f64, u: f64) -> switchlab::Result<f64> {
    let p = if b <= 1.0 {
        SystemParams::degenerate(a, b, beta, u)?
    } else {
        SystemParams::new(a, b, beta, u)?
    };
    lyapunov_chi(&p).map(|c| c.value)
}

pub fn sign_region(cfg: &SignConfig) -> Result<SignRegion, CliError> {
    let g = &cfg.grid;
    check_axis(
        "grid.beta",
        g.beta_min,
        g.beta_max,
        g.beta_points,
        g.beta_scale,
    )?;
    check_axis("grid.u", g.u_min, g.u_max, g.u_points, GridScale::Linear)?;
    if !(g.u_min > 0.0 && g.u_max < 1.0) {
        return Err(invalid("grid.u", "u must stay inside (0, 1)").into());
    }
    if !(cfg.contour.tolerance > 0.0 && cfg.contour.recheck >= cfg.contour.tolerance) {
        return Err(invalid("contour.tolerance", "need 0 < tolerance <= recheck").into());
    }
    let (a, b) = (cfg.system.a, cfg.system.b);
    sign_chi(a, b, g.beta_min, g.u_min)
        .map(|_| ())
        .or_else(|e| match e {
            switchlab::Error::InvalidParam { .. } => Err(CliError::from(e)),
            _ => Ok(()),
        })?;
    let betas = grid_nodes(g.beta_min, g.beta_max, g.beta_points, g.beta_scale);
    let us = grid_nodes(g.u_min, g.u_max, g.u_points, GridScale::Linear);
    let nu = us.len();
    let flat: Vec<switchlab::Result<f64>> = (0..betas.len() * nu)
        .into_par_iter()
        .map(|k| sign_chi(a, b, betas[k / nu], us[k % nu]))
        .collect();
    let chi: Vec<Vec<f64>> = betas
        .iter()
        .enumerate()
        .map(|(i, _)| {
            (0..nu)
                .map(|j| flat[i * nu + j].as_ref().map_or(f64::NAN, |v| *v))
                .collect()
        })
        .collect();
    let status: Vec<Vec<String>> = (0..betas.len())
        .map(|i| (0..nu).map(|j| status_of(&flat[i * nu + j])).collect())
        .collect();
    let log_beta = g.beta_scale == GridScale::Log;
    let refine = |(i, j, horizontal): Edge| -> ContourPoint {
        let (point, v0, v1) = if horizontal {
            ((betas[i], betas[i + 1]), chi[i][j], chi[i + 1][j])
        } else {
            ((us[j], us[j + 1]), chi[i][j], chi[i][j + 1])
        };
        let eval = |s: f64| -> (f64, f64) {
            if horizontal {
                let beta = if log_beta { s.exp() } else { s };
                (beta, us[j])
            } else {
                (betas[i], s)
            }
        };
        let (lo, hi) = if horizontal && log_beta {
            (point.0.ln(), point.1.ln())
        } else {
            point
        };
        let f = |s: f64| {
            let (beta, u) = eval(s);
            sign_chi(a, b, beta, u).unwrap_or(f64::NAN)
        };
        let (s, _) = bracket_root(
            f,
            lo,
            hi,
            v0,
            v1,
            cfg.contour.tolerance,
            1e-13 * (hi - lo).abs().max(1e-300),
        );
        let (beta, u) = eval(s);
        let check = sign_chi(a, b, beta, u).unwrap_or(f64::NAN);
        ContourPoint {
            beta,
            u,
            chi: check,
            within: check.abs() <= cfg.contour.recheck,
        }
    };
    let contours = zero_contour(&chi, refine)
        .into_iter()
        .map(|line| line.into_iter().map(|c| c.point).collect())
        .collect();
    Ok(SignRegion {
        betas,
        us,
        chi,
        status,
        contours,
    })
}

pub fn cmd_sign_region(cfg: &SignConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    let reg = sign_region(cfg)?;
    let mut grid = Table::new("sign_region", &["beta", "u", "chi", "sign", "status"]);
    for (i, &beta) in reg.betas.iter().enumerate() {
        for (j, &u) in reg.us.iter().enumerate() {
            let v = reg.chi[i][j];
            let sign = if !v.is_finite() {
                "nan"
            } else if v > 0.0 {
                "+"
            } else {
                "-"
            };
            grid.push(vec![
                beta.into(),
                u.into(),
                v.into(),
                sign.into(),
                reg.status[i][j].clone().into(),
            ]);
        }
    }
    let mut lines = Table::new(
        "sign_region_contour",
        &["line", "beta", "u", "chi", "within_tolerance"],
    );
    for (k, line) in reg.contours.iter().enumerate() {
        for p in line {
            lines.push(vec![
                k.into(),
                p.beta.into(),
                p.u.into(),
                p.chi.into(),
                p.within.to_string().into(),
            ]);
        }
    }
    let mut out = Outcome::default();
    out.artifacts.table(&grid, ctx.format);
    out.artifacts.table(&lines, ctx.format);
    out.failed_points = reg.failed() + reg.contours.iter().flatten().filter(|p| !p.within).count();
    let worst = reg
        .contours
        .iter()
        .flatten()
        .map(|p| p.chi.abs())
        .fold(0.0, f64::max);
    out.summary.push(format!(
        "sign-region: {} of {} cells positive, boundary touched: {}, {} contour lines, max |chi| on contour {:.3e}, {} failed",
        reg.positive_cells(),
        reg.betas.len() * reg.us.len(),
        reg.touches_boundary(),
        reg.contours.len(),
        worst,
        out.failed_points
    ));
    if ctx.svg {
        let meta = Meta {
            title: format!("sign of chi for a={}, b={}", cfg.system.a, cfg.system.b),
            command: "sign-region",
            params: params_json(cfg),
            seed: Some(ctx.seed),
        };
        let polylines: Vec<Vec<(f64, f64)>> = reg
            .contours
            .iter()
            .map(|l| l.iter().map(|p| (p.beta, p.u)).collect())
            .collect();
        let ghosts: Vec<Vec<(f64, f64)>> = if cfg.contour.mirror {
            polylines
                .iter()
                .map(|l| l.iter().map(|&(x, y)| (x, 1.0 - y)).collect())
                .collect()
        } else {
            Vec::new()
        };
        let scale = match cfg.grid.beta_scale {
            GridScale::Log => Scale::Log,
            GridScale::Linear => Scale::Linear,
        };
        let s = svg::heatmap(
            &meta,
            Axis::new("beta", scale, cfg.grid.beta_min, cfg.grid.beta_max),
            Axis::new("u", Scale::Linear, cfg.grid.u_min, cfg.grid.u_max),
            &reg.betas,
            &reg.us,
            &reg.chi,
            &polylines,
            &ghosts,
        );
        out.artifacts.add("sign_region.svg", s);
    }
    Ok(out)
}

// ---------------------------------------------------------- deterministic

pub const DET_DEFAULTS: &str = r#"
[system]
a = 0.1
b = 2.0
u = 0.5

[grid]
beta_min = 0.05
beta_max = 20.0
points = 400
scale = "log"

[exceptional]
beta = 1.0
periods = 200
"#;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExceptionalSection {
    /// β at which the `λ2` eigenline start is compared with a generic one.
    pub beta: f64,
    pub periods: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DetConfig {
    pub system: PlanarSection,
    pub grid: BetaGrid,
    pub exceptional: ExceptionalSection,
}

impl DetConfig {
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        config::load(DET_DEFAULTS, file, overrides)
    }
}

fn regime_tag(r: Regime) -> &'static str {
    match r {
        Regime::RealSplit => "real-split",
        Regime::ComplexPair => "complex-pair",
        Regime::DegenerateRepeated => "repeated",
    }
}

/// Start-dependent exponents at one β: `(label, x0, χ)`.
pub fn exceptional_starts(
    params: &SystemParams,
    periods: usize,
) -> Result<Vec<(&'static str, [f64; 2], f64)>, CliError> {
    let report = periodic_chi(params);
    let generic = [0.6, 0.8];
    let mut rows = vec![(
        "generic",
        generic,
        chi_d_power_iteration(params, generic, periods)?,
    )];
    if let Some((v1, v2)) = report.eigenvectors() {
        rows.push((
            "lambda1-eigenline",
            v1,
            chi_d_power_iteration(params, v1, periods)?,
        ));
        rows.push((
            "lambda2-eigenline",
            v2,
            chi_d_power_iteration(params, v2, periods)?,
        ));
    }
    Ok(rows)
}

pub fn cmd_chi_det(cfg: &DetConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    let betas = cfg.grid.nodes()?;
    let mut table = Table::new(
        "chi_det",
        &["beta", "chi_d", "regime", "spectral_radius", "status"],
    );
    let reports: Vec<_> = betas
        .iter()
        .map(|&beta| cfg.system.at(beta).map(|p| periodic_chi(&p)))
        .collect::<Result<_, _>>()?;
    for (beta, r) in betas.iter().zip(&reports) {
        table.push(vec![
            (*beta).into(),
            r.chi_d.into(),
            regime_tag(r.regime).into(),
            r.spectral_radius().into(),
            "ok".into(),
        ]);
    }
    let mut out = Outcome::default();
    out.artifacts.table(&table, ctx.format);

    let ex_params = cfg.system.at(cfg.exceptional.beta)?;
    let ex_report = periodic_chi(&ex_params);
    let mut ex = Table::new(
        "chi_det_exceptional",
        &["beta", "start", "x0_1", "x0_2", "chi", "regime"],
    );
    for (label, x0, chi) in exceptional_starts(&ex_params, cfg.exceptional.periods)? {
        ex.push(vec![
            cfg.exceptional.beta.into(),
            label.into(),
            x0[0].into(),
            x0[1].into(),
            chi.into(),
            regime_tag(ex_report.regime).into(),
        ]);
    }
    out.artifacts.table(&ex, ctx.format);

    let mut resonances = Vec::new();
    if (cfg.system.u - 0.5).abs() < 1e-15 {
        let mut res = Table::new(
            "chi_det_resonances",
            &["m", "beta", "chi_d", "gap_to_minus_a"],
        );
        for m in 1.. {
            let beta = 2.0 / (m as f64 * std::f64::consts::PI);
            if beta < cfg.grid.beta_min {
                break;
            }
            if beta > cfg.grid.beta_max {
                continue;
            }
            let chi = periodic_chi(&cfg.system.at(beta)?).chi_d;
            res.push(vec![
                m.into(),
                beta.into(),
                chi.into(),
                (chi + cfg.system.a).into(),
            ]);
            resonances.push((beta, chi));
        }
        out.artifacts.table(&res, ctx.format);
    }

    let chis: Vec<f64> = reports.iter().map(|r| r.chi_d).collect();
    let positive = runs(&chis, |v| *v > 0.0);
    out.summary.push(format!(
        "chi-det: {} points, {} positive beta-intervals, max chi_d {:.6}, {} resonances inside the grid",
        chis.len(),
        positive.len(),
        chis.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        resonances.len()
    ));
    if ctx.svg {
        let meta = Meta {
            title: format!(
                "chi_d(beta) for a={}, b={}, u={}",
                cfg.system.a, cfg.system.b, cfg.system.u
            ),
            command: "chi-det",
            params: params_json(cfg),
            seed: None,
        };
        let mut series = vec![Series::line(
            "chi_d",
            PALETTE[0],
            betas.iter().copied().zip(chis.iter().copied()).collect(),
        )];
        let alt: Vec<(f64, f64)> = exceptional_starts(&ex_params, cfg.exceptional.periods)?
            .into_iter()
            .filter(|r| r.0 == "lambda2-eigenline")
            .map(|r| (cfg.exceptional.beta, r.2))
            .collect();
        let ys: Vec<f64> = chis
            .iter()
            .chain(alt.iter().map(|p| &p.1))
            .copied()
            .chain([0.0, -cfg.system.a])
            .collect();
        if !alt.is_empty() {
            series.push(Series::dots("lambda2 start", PALETTE[1], alt, Vec::new()));
        }
        if !resonances.is_empty() {
            series.push(Series::dots(
                "sin tau = 0",
                PALETTE[2],
                resonances,
                Vec::new(),
            ));
        }
        let s = svg::line_plot(
            &meta,
            Axis::new(
                "beta",
                cfg.grid.svg_scale(),
                cfg.grid.beta_min,
                cfg.grid.beta_max,
            ),
            Axis::fit("chi_d", Scale::Linear, ys),
            &series,
            &[0.0, -cfg.system.a],
        );
        out.artifacts.add("chi_det.svg", s);
    }
    Ok(out)
}

// ----------------------------------------------------------------- erlang

pub const ERLANG_DEFAULTS: &str = r#"
[system]
a = 0.15
b = 3.0
u = 0.5

[grid]
beta_min = 0.1
beta_max = 20.0
points = 60
scale = "log"

[erlang]
n = [10, 50, 200]
horizon = 5000.0
replicas = 32
"#;

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ErlangSection {
    pub n: Vec<usize>,
    pub horizon: f64,
    pub replicas: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ErlangConfig {
    pub system: PlanarSection,
    pub grid: BetaGrid,
    pub erlang: ErlangSection,
}

impl ErlangConfig {
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        config::load(ERLANG_DEFAULTS, file, overrides)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErlangCurve {
    pub n: usize,
    pub betas: Vec<f64>,
    pub chi: Vec<f64>,
    pub stderr: Vec<f64>,
    pub chi_d: Vec<f64>,
    pub status: Vec<String>,
}

impl ErlangCurve {
    /// Disjoint grid runs where `χ_n - 3·stderr > 0`.
    pub fn positive_intervals(&self) -> Vec<(f64, f64)> {
        let lower: Vec<f64> = self
            .chi
            .iter()
            .zip(&self.stderr)
            .map(|(c, s)| c - 3.0 * s)
            .collect();
        runs(&lower, |v| *v > 0.0)
            .into_iter()
            .map(|(s, e)| (self.betas[s], self.betas[e]))
            .collect()
    }

    /// `max_β |χ_n(β) - χ^d(β)|` over successful points.
    pub fn max_gap(&self) -> f64 {
        self.chi
            .iter()
            .zip(&self.chi_d)
            .filter(|(c, _)| c.is_finite())
            .map(|(c, d)| (c - d).abs())
            .fold(0.0, f64::max)
    }
}

/// Point `j` of every curve uses stream seed `derive_seed(seed, j)`.
pub fn erlang_curves(cfg: &ErlangConfig, seed: u64) -> Result<Vec<ErlangCurve>, CliError> {
    let betas = cfg.grid.nodes()?;
    if (cfg.system.u - 0.5).abs() > 1e-12 {
        return Err(invalid("system.u", "staged switching needs u = 0.5").into());
    }
    if cfg.erlang.n.is_empty() || cfg.erlang.n.contains(&0) {
        return Err(invalid("erlang.n", "need at least one stage count, all positive").into());
    }
    if cfg.erlang.replicas < 2 || !(cfg.erlang.horizon > 0.0) {
        return Err(invalid("erlang", "need replicas >= 2 and a positive horizon").into());
    }
    let params: Vec<SystemParams> = betas
        .iter()
        .map(|&b| cfg.system.at(b))
        .collect::<Result<_, _>>()?;
    let chi_d: Vec<f64> = params.iter().map(|p| periodic_chi(p).chi_d).collect();
    Ok(cfg
        .erlang
        .n
        .iter()
        .map(|&n| {
            let res: Vec<switchlab::Result<ChiResult>> = params
                .par_iter()
                .enumerate()
                .map(|(j, p)| {
                    estimate_chi_erlang(
                        p,
                        n,
                        cfg.erlang.horizon,
                        cfg.erlang.replicas,
                        derive_seed(seed, j as u64),
                    )
                })
                .collect();
            ErlangCurve {
                n,
                betas: betas.clone(),
                chi: res
                    .iter()
                    .map(|r| r.as_ref().map_or(f64::NAN, |c| c.value))
                    .collect(),
                stderr: res
                    .iter()
                    .map(|r| r.as_ref().map_or(f64::NAN, |c| c.error))
                    .collect(),
                chi_d: chi_d.clone(),
                status: res.iter().map(status_of).collect(),
            }
        })
        .collect())
}

pub fn cmd_chi_erlang(cfg: &ErlangConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    let curves = erlang_curves(cfg, ctx.seed)?;
    let mut table = Table::new(
        "chi_erlang",
        &["n", "beta", "chi", "stderr", "chi_d", "status"],
    );
    let mut out = Outcome::default();
    for c in &curves {
        for j in 0..c.betas.len() {
            table.push(vec![
                c.n.into(),
                c.betas[j].into(),
                c.chi[j].into(),
                c.stderr[j].into(),
                c.chi_d[j].into(),
                Cell::Text(c.status[j].clone()),
            ]);
        }
        out.failed_points += c.status.iter().filter(|s| *s != "ok").count();
        let iv: Vec<String> = c
            .positive_intervals()
            .iter()
            .map(|(l, h)| format!("[{l:.4}, {h:.4}]"))
            .collect();
        out.summary.push(format!(
            "chi-erlang n={}: positive intervals {}, max gap to chi_d {:.4}",
            c.n,
            if iv.is_empty() {
                "none".to_string()
            } else {
                iv.join(" ")
            },
            c.max_gap()
        ));
    }
    out.artifacts.table(&table, ctx.format);
    if ctx.svg {
        let meta = Meta {
            title: format!("staged switching, a={}, b={}", cfg.system.a, cfg.system.b),
            command: "chi-erlang",
            params: params_json(cfg),
            seed: Some(ctx.seed),
        };
        let mut series: Vec<Series> = curves
            .iter()
            .enumerate()
            .map(|(k, c)| {
                Series::dots(
                    &format!("n = {}", c.n),
                    PALETTE[k % (PALETTE.len() - 1)],
                    c.betas.iter().copied().zip(c.chi.iter().copied()).collect(),
                    c.stderr.iter().map(|s| 3.0 * s).collect(),
                )
            })
            .collect();
        if let Some(c) = curves.first() {
            let mut det = Series::line(
                "chi_d",
                PALETTE[5],
                c.betas
                    .iter()
                    .copied()
                    .zip(c.chi_d.iter().copied())
                    .collect(),
            );
            det.dashed = true;
            series.push(det);
        }
        let ys = curves
            .iter()
            .flat_map(|c| c.chi.iter().chain(&c.chi_d).copied().collect::<Vec<_>>());
        let s = svg::line_plot(
            &meta,
            Axis::new(
                "beta",
                cfg.grid.svg_scale(),
                cfg.grid.beta_min,
                cfg.grid.beta_max,
            ),
            Axis::fit("chi_n", Scale::Linear, ys.chain([0.0])),
            &series,
            &[0.0],
        );
        out.artifacts.add("chi_erlang.svg", s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::output::Format;

    fn ctx() -> RunContext {
        RunContext {
            seed: 5,
            format: Format::Csv,
            svg: true,
        }
    }

    #[test]
    fn log_grid_endpoints_exact() {
        let g = grid_nodes(0.05, 200.0, 200, GridScale::Log);
        assert_eq!(g[0], 0.05);
        assert_eq!(g[199], 200.0);
        let r = g[1] / g[0];
        assert!(g.windows(2).all(|w| (w[1] / w[0] - r).abs() < 1e-12));
    }

    #[test]
    fn runs_and_crossings() {
        let v = [-1.0, 1.0, 2.0, -1.0, f64::NAN, 3.0, -2.0];
        assert_eq!(runs(&v, |x| *x > 0.0), vec![(1, 2), (5, 5)]);
        assert_eq!(zero_crossings(&v), 4);
        assert_eq!(runs(&[1.0, 1.0], |x| *x > 0.0), vec![(0, 1)]);
    }

    #[test]
    fn spread_hits_ends() {
        assert_eq!(spread(200, 5), vec![0, 50, 100, 149, 199]);
        assert_eq!(spread(10, 0), Vec::<usize>::new());
    }

    #[test]
    fn rejects_bad_grid() {
        let mut cfg = ProfileConfig::load(None, &[]).unwrap();
        cfg.grid.points = 1;
        assert!(matches!(profile(&cfg, 0), Err(CliError::Usage(_))));
        cfg.grid.points = 3;
        cfg.grid.beta_min = 10.0;
        cfg.grid.beta_max = 1.0;
        assert!(matches!(profile(&cfg, 0), Err(CliError::Usage(_))));
    }

    #[test]
    fn degenerate_profile_is_flat() {
        let cfg = ProfileConfig::load(
            None,
            &[
                "system.b=1".into(),
                "grid.points=7".into(),
                "system.a=0.2".into(),
            ],
        )
        .unwrap();
        let p = profile(&cfg, 0).unwrap();
        for r in &p.curve {
            assert!((r.chi + 0.2).abs() < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn profile_method_routes() {
        let cfg = ProfileConfig::load(
            None,
            &[
                "grid.points=3".into(),
                "profile.method=\"spectral\"".into(),
                "profile.mc_overlay=2".into(),
                "mc.horizon=50".into(),
                "mc.replicas=4".into(),
            ],
        )
        .unwrap();
        let p = profile(&cfg, 1).unwrap();
        assert!(p.curve.iter().all(|r| r.method == "spectral" && r.ok()));
        assert_eq!(p.overlay.len(), 2);
        assert!(p
            .overlay
            .iter()
            .all(|r| r.method == "monte-carlo" && r.err > 0.0));
    }

    #[test]
    fn large_a_has_empty_region() {
        let cfg = SignConfig::load(
            None,
            &[
                "system.a=2".into(),
                "grid.beta_points=12".into(),
                "grid.u_points=12".into(),
            ],
        )
        .unwrap();
        let reg = sign_region(&cfg).unwrap();
        assert_eq!(reg.positive_cells(), 0);
        assert!(reg.contours.is_empty());
        assert!(reg.chi.iter().flatten().all(|v| *v < 0.0));
    }

    #[test]
    fn small_sign_region_contour_within_tolerance() {
        let cfg = SignConfig::load(
            None,
            &["grid.beta_points=14".into(), "grid.u_points=12".into()],
        )
        .unwrap();
        let reg = sign_region(&cfg).unwrap();
        assert!(reg.positive_cells() > 0);
        assert!(!reg.touches_boundary());
        assert!(!reg.contours.is_empty());
        for p in reg.contours.iter().flatten() {
            assert!(p.within && p.chi.abs() <= 1e-3, "{p:?}");
        }
        // every closed chain repeats its first point
        for l in &reg.contours {
            assert_eq!(l.first(), l.last());
        }
    }

    #[test]
    fn chi_det_outputs() {
        let cfg = DetConfig::load(None, &["grid.points=40".into()]).unwrap();
        let out = cmd_chi_det(&cfg, &ctx()).unwrap();
        let res = out.artifacts.get("chi_det_resonances.csv").unwrap();
        for line in res.lines().skip(2) {
            let gap: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
            assert!(gap.abs() < 1e-9, "{line}");
        }
        assert!(out.artifacts.get("chi_det.svg").is_some());
        assert_eq!(out.exit_code(), 0);
    }

    #[test]
    fn erlang_requires_half() {
        let cfg = ErlangConfig::load(None, &["system.u=0.3".into()]).unwrap();
        assert!(matches!(erlang_curves(&cfg, 0), Err(CliError::Usage(_))));
    }
}
