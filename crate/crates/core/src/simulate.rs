//! Exact-event simulation of the switched process and Monte Carlo estimators.
//!
//! Between jumps the state moves by the closed-form flow `e^{tA_i}`; only the
//! jump times are random. Radii are carried in log space, so explosive
//! parameter points run for any horizon without overflow.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::expm::general_matrix_exp;
use crate::measure::{ChiMethod, ChiResult};
use crate::system::{evolve_angle, mode_flow, norm, Matrix2, Mode, SystemParams};

/// Rule that produces the sojourn time of each phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SwitchingLaw {
    /// Exponential sojourns at rates `λ0 = βu`, `λ1 = β(1-u)`.
    Exponential,
    /// `n` exponential stages at rate `nβ/2` per phase; needs `u = 1/2`.
    ErlangStaged { n: usize },
    /// Deterministic sojourns `τ0 = 1/(uβ)`, `τ1 = 1/((1-u)β)`.
    Periodic,
}

impl SwitchingLaw {
    pub fn method(&self) -> ChiMethod {
        match self {
            SwitchingLaw::ErlangStaged { .. } => ChiMethod::ErlangMc,
            _ => ChiMethod::MonteCarlo,
        }
    }
}

/// Sojourn-time sampler shared by the planar and the decentered simulators.
#[derive(Debug, Clone)]
pub(crate) enum Sojourn {
    Exponential([f64; 2]),
    Gamma(Gamma<f64>),
    Fixed([f64; 2]),
}

impl Sojourn {
    pub(crate) fn for_law(params: &SystemParams, law: &SwitchingLaw) -> Result<Self> {
        match *law {
            SwitchingLaw::Exponential => {
                Ok(Sojourn::Exponential([params.lambda0(), params.lambda1()]))
            }
            SwitchingLaw::ErlangStaged { n } => {
                if n == 0 {
                    return Err(invalid("n", "stage count must be at least 1"));
                }
                if (params.u() - 0.5).abs() > 1e-12 {
                    return Err(invalid("u", "staged switching is defined for u = 1/2"));
                }
                let nf = n as f64;
                let g = Gamma::new(nf, 2.0 / (nf * params.beta()))
                    .map_err(|e| invalid("n", e.to_string()))?;
                Ok(Sojourn::Gamma(g))
            }
            SwitchingLaw::Periodic => Ok(Sojourn::Fixed([
                1.0 / (params.u() * params.beta()),
                1.0 / ((1.0 - params.u()) * params.beta()),
            ])),
        }
    }

    pub(crate) fn sample<R: Rng>(&self, mode: Mode, rng: &mut R) -> f64 {
        match self {
            Sojourn::Exponential(rates) => {
                let e: f64 = Exp1.sample(rng);
                e / rates[mode.index()]
            }
            Sojourn::Gamma(g) => g.sample(rng),
            Sojourn::Fixed(t) => t[mode.index()],
        }
    }
}

/// Generator of a reproducible RNG stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Decorrelated child seed for grid point `index`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub t: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: Vec<f64>,
    pub mode: Mode,
    pub log_radius: f64,
    /// Unwound polar angle; planar trajectories only.
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub events: Vec<JumpEvent>,
    pub samples: Vec<TrajectorySample>,
    pub seed: u64,
    pub horizon: f64,
}

/// Number formatting used in every CSV: scientific, 17 significant digits.
pub fn csv_number(x: f64) -> String {
    format!("{x:.16e}")
}

impl TrajectoryRecord {
    pub fn final_sample(&self) -> &TrajectorySample {
        self.samples
            .last()
            .expect("records hold at least the initial sample")
    }

    /// Columns `t, x1, …, xd, mode, log_radius, theta_lift`.
    pub fn to_csv(&self) -> String {
        let d = self.samples.first().map_or(2, |s| s.x.len());
        let mut out = String::from("t");
        for i in 1..=d {
            let _ = write!(out, ",x{i}");
        }
        out.push_str(",mode,log_radius,theta_lift\n");
        for s in &self.samples {
            out.push_str(&csv_number(s.t));
            for v in &s.x {
                out.push(',');
                out.push_str(&csv_number(*v));
            }
            let theta = s.theta.map_or_else(|| "nan".to_string(), csv_number);
            let _ = writeln!(
                out,
                ",{},{},{}",
                s.mode.index(),
                csv_number(s.log_radius),
                theta
            );
        }
        out
    }
}

fn check_run(x0: &[f64], horizon: f64) -> Result<()> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(invalid("horizon", "must be positive and finite"));
    }
    if x0.iter().any(|v| !v.is_finite()) || x0.iter().all(|v| *v == 0.0) {
        return Err(invalid("x0", "must be a finite nonzero vector"));
    }
    Ok(())
}

/// Planar state between jumps: unit direction, log-radius and angle lift.
#[derive(Debug, Clone, Copy)]
struct PolarState {
    dir: [f64; 2],
    log_r: f64,
    theta: f64,
}

impl PolarState {
    fn new(x0: [f64; 2]) -> Self {
        let r = norm(x0);
        Self {
            dir: [x0[0] / r, x0[1] / r],
            log_r: r.ln(),
            theta: x0[1].atan2(x0[0]),
        }
    }

    fn advanced(&self, t: f64, mode: Mode, params: &SystemParams) -> Self {
        let y = mode_flow(t, mode, params).apply(self.dir);
        let r = norm(y);
        Self {
            dir: [y[0] / r, y[1] / r],
            log_r: self.log_r + r.ln(),
            theta: evolve_angle(self.theta, t, mode, params.b()),
        }
    }

    fn sample(&self, t: f64, mode: Mode) -> TrajectorySample {
        let r = self.log_r.exp();
        TrajectorySample {
            t,
            x: vec![r * self.dir[0], r * self.dir[1]],
            mode,
            log_radius: self.log_r,
            theta: Some(self.theta),
        }
    }
}

/// Simulation with samples at every jump and every `horizon / 1000`.
pub fn simulate(
    params: &SystemParams,
    law: SwitchingLaw,
    x0: [f64; 2],
    i0: Mode,
    horizon: f64,
    seed: u64,
) -> Result<TrajectoryRecord> {
    simulate_sampled(params, law, x0, i0, horizon, seed, horizon / 1000.0)
}

/// Simulation with samples at every jump and on a uniform `sample_dt` grid.
pub fn simulate_sampled(
    params: &SystemParams,
    law: SwitchingLaw,
    x0: [f64; 2],
    i0: Mode,
    horizon: f64,
    seed: u64,
    sample_dt: f64,
) -> Result<TrajectoryRecord> {
    check_run(&x0, horizon)?;
    if !(sample_dt > 0.0) {
        return Err(invalid("sample_dt", "must be positive"));
    }
    let sojourn = Sojourn::for_law(params, &law)?;
    let mut rng = stream_rng(seed, 0);
    let mut state = PolarState::new(x0);
    let mut mode = i0;
    let mut t = 0.0;
    let mut events = Vec::new();
    let mut samples = vec![state.sample(0.0, mode)];
    let mut next_grid = 1usize;
    loop {
        let dur = sojourn.sample(mode, &mut rng);
        let end = (t + dur).min(horizon);
        loop {
            let tg = next_grid as f64 * sample_dt;
            if tg >= end || tg >= horizon {
                break;
            }
            samples.push(state.advanced(tg - t, mode, params).sample(tg, mode));
            next_grid += 1;
        }
        state = state.advanced(end - t, mode, params);
        t = end;
        if t >= horizon {
            samples.push(state.sample(horizon, mode));
            break;
        }
        mode = mode.flip();
        events.push(JumpEvent { t, mode });
        samples.push(state.sample(t, mode));
    }
    Ok(TrajectoryRecord {
        events,
        samples,
        seed,
        horizon,
    })
}

/// Endpoint summary of one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSummary {
    pub log_growth: f64,
    pub time_in_mode0: f64,
    pub jumps: u64,
}

/// `log ‖X_T‖ - log ‖X_0‖` along one path started from angle `theta0`.
pub fn path_log_growth<R: Rng>(
    params: &SystemParams,
    law: &SwitchingLaw,
    theta0: f64,
    i0: Mode,
    horizon: f64,
    rng: &mut R,
) -> Result<PathSummary> {
    let sojourn = Sojourn::for_law(params, law)?;
    Ok(run_growth(params, &sojourn, theta0, i0, horizon, rng))
}

fn run_growth<R: Rng>(
    params: &SystemParams,
    sojourn: &Sojourn,
    theta0: f64,
    i0: Mode,
    horizon: f64,
    rng: &mut R,
) -> PathSummary {
    let mut dir = [theta0.cos(), theta0.sin()];
    let mut log_growth = 0.0;
    let mut mode = i0;
    let mut t = 0.0;
    let mut time_in_mode0 = 0.0;
    let mut jumps = 0;
    loop {
        let dur = sojourn.sample(mode, rng).min(horizon - t);
        let y = mode_flow(dur, mode, params).apply(dir);
        let r = norm(y);
        log_growth += r.ln();
        dir = [y[0] / r, y[1] / r];
        if mode == Mode::Zero {
            time_in_mode0 += dur;
        }
        t += dur;
        if t >= horizon {
            break;
        }
        mode = mode.flip();
        jumps += 1;
    }
    PathSummary {
        log_growth,
        time_in_mode0,
        jumps,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub horizon: f64,
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn estimate(xs: &[f64], horizon: f64) -> McEstimate {
    let (mean, stderr) = mean_stderr(xs);
    McEstimate {
        mean,
        stderr,
        replicas: xs.len(),
        horizon,
    }
}

fn check_replicas(replicas: usize) -> Result<()> {
    if replicas == 0 {
        return Err(invalid("replicas", "must be at least 1"));
    }
    Ok(())
}

/// Per-replica growth rates `(1/T) log(‖X_T‖/‖X_0‖)`.
///
/// Replica `r` uses stream `r` of `seed`, starts from a uniform angle and
/// from mode 0 with probability `1 - u` (mode 1 for periodic switching).
pub fn chi_mc_samples(
    params: &SystemParams,
    law: SwitchingLaw,
    horizon: f64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_replicas(replicas)?;
    if !(horizon > 0.0) {
        return Err(invalid("horizon", "must be positive"));
    }
    let sojourn = Sojourn::for_law(params, &law)?;
    let p0 = match law {
        SwitchingLaw::Periodic => 1.0,
        _ => 1.0 - params.u(),
    };
    Ok((0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let theta0 = rng.gen_range(0.0..std::f64::consts::TAU);
            let i0 = if rng.gen::<f64>() < p0 {
                Mode::Zero
            } else {
                Mode::One
            };
            run_growth(params, &sojourn, theta0, i0, horizon, &mut rng).log_growth / horizon
        })
        .collect())
}

pub fn estimate_chi_mc(
    params: &SystemParams,
    law: SwitchingLaw,
    horizon: f64,
    replicas: usize,
    seed: u64,
) -> Result<ChiResult> {
    let xs = chi_mc_samples(params, law, horizon, replicas, seed)?;
    let e = estimate(&xs, horizon);
    Ok(ChiResult {
        value: e.mean,
        method: law.method(),
        error: e.stderr,
        params_echo: *params,
    })
}

pub fn estimate_chi_erlang(
    params: &SystemParams,
    n: usize,
    horizon: f64,
    replicas: usize,
    seed: u64,
) -> Result<ChiResult> {
    estimate_chi_mc(
        params,
        SwitchingLaw::ErlangStaged { n },
        horizon,
        replicas,
        seed,
    )
}

/// Piecewise-exact planar path stored by phase.
#[derive(Debug, Clone)]
pub struct PhasePath {
    starts: Vec<f64>,
    modes: Vec<Mode>,
    states: Vec<[f64; 2]>,
    params: SystemParams,
}

impl PhasePath {
    pub fn generate<R: Rng>(
        params: &SystemParams,
        law: &SwitchingLaw,
        x0: [f64; 2],
        i0: Mode,
        horizon: f64,
        rng: &mut R,
    ) -> Result<Self> {
        check_run(&x0, horizon)?;
        let sojourn = Sojourn::for_law(params, law)?;
        let mut starts = vec![0.0];
        let mut modes = vec![i0];
        let mut states = vec![x0];
        let mut t = 0.0;
        let mut mode = i0;
        let mut x = x0;
        loop {
            let dur = sojourn.sample(mode, rng);
            if t + dur >= horizon {
                break;
            }
            x = mode_flow(dur, mode, params).apply(x);
            t += dur;
            mode = mode.flip();
            starts.push(t);
            modes.push(mode);
            states.push(x);
        }
        Ok(Self {
            starts,
            modes,
            states,
            params: *params,
        })
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.starts[1..]
    }

    pub fn state_at(&self, t: f64) -> [f64; 2] {
        let k = self.starts.partition_point(|&s| s <= t).saturating_sub(1);
        mode_flow(t - self.starts[k], self.modes[k], &self.params).apply(self.states[k])
    }
}

/// Spacing of the uniform time grid used by [`pathwise_convergence_stat`].
pub const SUP_GRID_DT: f64 = 0.005;

/// `E[sup_{t ≤ T} ‖Xⁿ_t - x_t‖]` against the periodic path with the same
/// start `x0 = (1, 0)` in mode 0.
///
/// The supremum is taken over a uniform grid of step [`SUP_GRID_DT`] merged
/// with all switch times of both paths.
pub fn pathwise_convergence_stat(
    params: &SystemParams,
    n: usize,
    horizon: f64,
    replicas: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_replicas(replicas)?;
    let x0 = [1.0, 0.0];
    let det = PhasePath::generate(
        params,
        &SwitchingLaw::Periodic,
        x0,
        Mode::Zero,
        horizon,
        &mut stream_rng(seed, u64::MAX),
    )?;
    let law = SwitchingLaw::ErlangStaged { n };
    Sojourn::for_law(params, &law)?;
    let steps = (horizon / SUP_GRID_DT).ceil() as usize;
    let sups: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let path = PhasePath::generate(params, &law, x0, Mode::Zero, horizon, &mut rng)
                .expect("validated above");
            let gap = |t: f64| {
                let (p, q) = (path.state_at(t), det.state_at(t));
                (p[0] - q[0]).hypot(p[1] - q[1])
            };
            let grid = (0..=steps).map(|k| (k as f64 * SUP_GRID_DT).min(horizon));
            let switches = path
                .switch_times()
                .iter()
                .chain(det.switch_times())
                .cloned();
            grid.chain(switches).map(gap).fold(0.0, f64::max)
        })
        .collect();
    Ok(estimate(&sups, horizon))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiPEstimate {
    pub p: f64,
    pub horizon: f64,
    /// `(1/t) log Ψ̂_p(t)`.
    pub value: f64,
    pub stderr: f64,
    pub argmax_theta: f64,
    pub argmax_mode: Mode,
}

/// `(1/t) log sup_{θ,i} (E exp(p ∫_0^t 𝒜))^{1/p}` with the supremum over a
/// uniform angle grid of `[0, π)` times both modes.
///
/// The spread of `exp(p·G)` grows quickly with `p·t`; keep `p·t` moderate
/// (tens) or increase `replicas`.
pub fn estimate_chi_p(
    params: &SystemParams,
    p: f64,
    horizon: f64,
    theta_grid_size: usize,
    replicas: usize,
    seed: u64,
) -> Result<ChiPEstimate> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(invalid("p", "must be positive"));
    }
    check_replicas(replicas)?;
    if theta_grid_size == 0 {
        return Err(invalid("theta_grid_size", "must be at least 1"));
    }
    let sojourn = Sojourn::for_law(params, &SwitchingLaw::Exponential)?;
    let starts: Vec<(f64, Mode)> = (0..theta_grid_size)
        .flat_map(|j| {
            let th = std::f64::consts::PI * j as f64 / theta_grid_size as f64;
            Mode::BOTH.into_iter().map(move |m| (th, m))
        })
        .collect();
    let per_start: Vec<(f64, f64)> = starts
        .par_iter()
        .enumerate()
        .map(|(s, &(th, mode))| {
            let mut rng = stream_rng(seed, s as u64);
            let g: Vec<f64> = (0..replicas)
                .map(|_| p * run_growth(params, &sojourn, th, mode, horizon, &mut rng).log_growth)
                .collect();
            let top = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = g.iter().map(|x| (x - top).exp()).collect();
            let (m, se) = mean_stderr(&w);
            // log E e^{pG} and its delta-method standard error
            (top + m.ln(), se / m)
        })
        .collect();
    let (best, &(log_m, se)) =
        per_start
            .iter()
            .enumerate()
            .fold((0, &per_start[0]), |acc, (j, v)| {
                if v.0 > acc.1 .0 {
                    (j, v)
                } else {
                    acc
                }
            });
    Ok(ChiPEstimate {
        p,
        horizon,
        value: log_m / (p * horizon),
        stderr: se / (p * horizon),
        argmax_theta: starts[best].0,
        argmax_mode: starts[best].1,
    })
}

/// `E_{i0}[c^{N_t}]` for the two-state chain with leaving rates `λ0, λ1`.
///
/// `G(t) = E_{i0} c^{N_t}` solves `y'' + (λ0+λ1) y' + λ0λ1(1-c²) y = 0` with
/// `y(0) = 1`, `y'(0) = λ_{i0}(c - 1)`.
pub fn jump_count_mgf(c: f64, t: f64, lambda0: f64, lambda1: f64, i0: Mode) -> f64 {
    let s = lambda0 + lambda1;
    let q = lambda0 * lambda1 * (1.0 - c * c);
    let disc = s * s - 4.0 * q;
    let slope = [lambda0, lambda1][i0.index()] * (c - 1.0);
    let b = slope + 0.5 * s;
    if disc > 0.0 {
        let w = 0.5 * disc.sqrt();
        let hi = 0.5 * (1.0 + b / w) * ((w - 0.5 * s) * t).exp();
        let lo = 0.5 * (1.0 - b / w) * ((-w - 0.5 * s) * t).exp();
        hi + lo
    } else if disc < 0.0 {
        let w = 0.5 * (-disc).sqrt();
        (-0.5 * s * t).exp() * ((w * t).cos() + b * (w * t).sin() / w)
    } else {
        (-0.5 * s * t).exp() * (1.0 + b * t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionCheck {
    pub t: f64,
    pub p: f64,
    /// `max_{D0} E[‖D_t‖^p]^{1/p}` over unit coordinate vectors `D0`.
    pub empirical: f64,
    pub empirical_stderr: f64,
    /// `(E[C^{p(N_t+1)}])^{1/p} e^{-ηt}`.
    pub analytic: f64,
    pub holds: bool,
}

/// Monte Carlo check of `E[‖D_t‖^p]^{1/p} ≤ C (E c^{N_t})^{1/p} e^{-ηt}`,
/// `c = C^p`, for the difference `D_t` of two coupled copies.
///
/// The difference obeys the linear switched equation whatever the attractor
/// points are, so only the matrices enter.
#[allow(clippy::too_many_arguments)]
pub fn coupling_contraction_check(
    a0: &DMatrix<f64>,
    a1: &DMatrix<f64>,
    rates: [f64; 2],
    envelope_c: f64,
    eta: f64,
    p: f64,
    t: f64,
    i0: Mode,
    replicas: usize,
    seed: u64,
) -> Result<ContractionCheck> {
    check_replicas(replicas)?;
    if !(p > 0.0) || !(t >= 0.0) || rates.iter().any(|r| !(*r > 0.0)) {
        return Err(invalid(
            "p, t, rates",
            "need p > 0, t >= 0 and positive rates",
        ));
    }
    if a0.shape() != a1.shape() || !a0.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a0.nrows(),
            got: a1.nrows(),
        });
    }
    let d = a0.nrows();
    let sojourn = Sojourn::Exponential(rates);
    let mut worst = (0.0, 0.0);
    for axis in 0..d {
        let vals: Vec<f64> = (0..replicas)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream_rng(seed, r as u64);
                let mut x = DVector::<f64>::zeros(d);
                x[axis] = 1.0;
                let mut mode = i0;
                let mut clock = 0.0;
                while clock < t {
                    let dur = sojourn.sample(mode, &mut rng).min(t - clock);
                    let m = if mode == Mode::Zero { a0 } else { a1 };
                    x = general_matrix_exp(m, dur).expect("validated matrices") * x;
                    clock += dur;
                    mode = mode.flip();
                }
                x.norm().powf(p)
            })
            .collect();
        let (m, se) = mean_stderr(&vals);
        let root = m.powf(1.0 / p);
        if root > worst.0 {
            worst = (root, root * se / (p * m.max(f64::MIN_POSITIVE)));
        }
    }
    let g = jump_count_mgf(envelope_c.powf(p), t, rates[0], rates[1], i0);
    let analytic = envelope_c * g.powf(1.0 / p) * (-eta * t).exp();
    Ok(ContractionCheck {
        t,
        p,
        empirical: worst.0,
        empirical_stderr: worst.1,
        analytic,
        holds: worst.0 <= analytic * (1.0 + 1e-12),
    })
}

/// One period of the deterministic control as a matrix, `e^{τ1 A1} e^{τ0 A0}`.
pub fn periodic_period_map(params: &SystemParams) -> Matrix2 {
    let t0 = 1.0 / (params.u() * params.beta());
    let t1 = 1.0 / ((1.0 - params.u()) * params.beta());
    mode_flow(t1, Mode::One, params).mul(&mode_flow(t0, Mode::Zero, params))
}
