//! Decentered two-attractor system `dX/dt = A_{I_t}(X_t - b_{I_t})`, its
//! embedded affine chain and stationary tail indices.
//!
//! Sampling the process at every second jump gives the affine recursion
//!
//! ```text
//! Y_n = b1 + e^{τ' A1} (b0 + e^{τ A0} (Y_{n-1} - b0) - b1)
//! ```
//!
//! whose stationary law either has bounded support or a power tail with
//! index `x1`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::expm::{exp2_closed, from_dmatrix, general_matrix_exp, to_dmatrix};
use crate::simulate::{stream_rng, JumpEvent, Sojourn, TrajectoryRecord, TrajectorySample};
use crate::system::{build_matrices, Matrix2, Mode, SystemParams};

#[derive(Debug, Clone)]
enum Flows {
    Planar([Matrix2; 2]),
    General([DMatrix<f64>; 2]),
}

#[derive(Debug, Clone)]
pub struct DecenteredSystem {
    a: [DMatrix<f64>; 2],
    b: [DVector<f64>; 2],
    rates: [f64; 2],
    flows: Flows,
}

fn check_hurwitz(m: &DMatrix<f64>, name: &'static str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(name));
    }
    let top = m
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(top < 0.0) {
        return Err(invalid(
            name,
            format!("not Hurwitz, spectral abscissa {top}"),
        ));
    }
    Ok(())
}

/// Largest real part of the eigenvalues.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

impl DecenteredSystem {
    /// Validates shapes, the Hurwitz property, `b0 ≠ b1` and positive rates.
    pub fn new(
        a0: DMatrix<f64>,
        a1: DMatrix<f64>,
        b0: DVector<f64>,
        b1: DVector<f64>,
        rates: [f64; 2],
    ) -> Result<Self> {
        if b0 == b1 {
            return Err(invalid("b1", "attractor points must differ"));
        }
        Self::build(a0, a1, b0, b1, rates)
    }

    /// Both attractors at the origin: the centered linear system.
    pub fn centered(a0: DMatrix<f64>, a1: DMatrix<f64>, rates: [f64; 2]) -> Result<Self> {
        let d = a0.nrows();
        Self::build(a0, a1, DVector::zeros(d), DVector::zeros(d), rates)
    }

    /// Planar pair from `params` with its jump rates `(βu, β(1-u))`.
    pub fn planar(params: &SystemParams, b0: [f64; 2], b1: [f64; 2]) -> Result<Self> {
        let (a0, a1) = build_matrices(params);
        Self::new(
            to_dmatrix(&a0),
            to_dmatrix(&a1),
            DVector::from_column_slice(&b0),
            DVector::from_column_slice(&b1),
            [params.lambda0(), params.lambda1()],
        )
    }

    fn build(
        a0: DMatrix<f64>,
        a1: DMatrix<f64>,
        b0: DVector<f64>,
        b1: DVector<f64>,
        rates: [f64; 2],
    ) -> Result<Self> {
        let d = a0.nrows();
        if d < 2 {
            return Err(invalid("dim", "need d >= 2"));
        }
        for (m, _) in [(&a0, "A0"), (&a1, "A1")] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: m.ncols(),
                });
            }
        }
        for v in [&b0, &b1] {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("attractor"));
            }
        }
        if rates.iter().any(|r| !(*r > 0.0)) {
            return Err(invalid("rates", "must be positive"));
        }
        check_hurwitz(&a0, "A0")?;
        check_hurwitz(&a1, "A1")?;
        let flows = if d == 2 {
            Flows::Planar([
                from_dmatrix(&a0).expect("2x2"),
                from_dmatrix(&a1).expect("2x2"),
            ])
        } else {
            Flows::General([a0.clone(), a1.clone()])
        };
        Ok(Self {
            a: [a0, a1],
            b: [b0, b1],
            rates,
            flows,
        })
    }

    pub fn dim(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn matrix(&self, mode: Mode) -> &DMatrix<f64> {
        &self.a[mode.index()]
    }

    pub fn attractor(&self, mode: Mode) -> &DVector<f64> {
        &self.b[mode.index()]
    }

    pub fn rates(&self) -> [f64; 2] {
        self.rates
    }

    /// `e^{tA_i}`.
    pub fn flow_matrix(&self, mode: Mode, t: f64) -> DMatrix<f64> {
        match &self.flows {
            Flows::Planar(m) => to_dmatrix(&exp2_closed(&m[mode.index()], t)),
            Flows::General(m) => {
                general_matrix_exp(&m[mode.index()], t).expect("validated at construction")
            }
        }
    }

    /// `e^{tA_i} v` for a direction `v` (no affine shift).
    pub fn linear(&self, mode: Mode, t: f64, v: &DVector<f64>) -> DVector<f64> {
        match &self.flows {
            Flows::Planar(m) => {
                let y = exp2_closed(&m[mode.index()], t).apply([v[0], v[1]]);
                DVector::from_column_slice(&y)
            }
            Flows::General(m) => {
                general_matrix_exp(&m[mode.index()], t).expect("validated at construction") * v
            }
        }
    }

    /// `b_i + e^{tA_i}(x - b_i)`.
    pub fn affine(&self, mode: Mode, t: f64, x: &DVector<f64>) -> DVector<f64> {
        let b = &self.b[mode.index()];
        b + self.linear(mode, t, &(x - b))
    }
}

/// Overshoot/decay pair with `‖e^{tA_i}‖ ≤ C e^{-ηt}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurwitzEnvelope {
    pub c: f64,
    pub eta: f64,
}

/// Horizon and step of the certification grid.
pub const ENVELOPE_HORIZON: f64 = 20.0;
pub const ENVELOPE_STEP: f64 = 0.01;

/// `η = fraction · min_i |spectral abscissa(A_i)|`, and `C` the largest
/// `‖e^{tA_i}‖ e^{ηt}` over `t ∈ [0, 20]`.
pub fn hurwitz_envelope(sys: &DecenteredSystem, fraction: f64) -> Result<HurwitzEnvelope> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid("fraction", "must lie in (0, 1]"));
    }
    let eta = fraction
        * Mode::BOTH
            .iter()
            .map(|&m| -spectral_abscissa(sys.matrix(m)))
            .fold(f64::INFINITY, f64::min);
    let steps = (ENVELOPE_HORIZON / ENVELOPE_STEP).round() as usize;
    let mut c: f64 = 1.0;
    for mode in Mode::BOTH {
        for k in 0..=steps {
            let t = k as f64 * ENVELOPE_STEP;
            let n = sys.flow_matrix(mode, t).singular_values().max();
            c = c.max(n * (eta * t).exp());
        }
    }
    Ok(HurwitzEnvelope { c, eta })
}

/// Largest sampled `‖e^{tA_i}x‖ / (‖x‖ C e^{-ηt})` over the certification
/// grid and `n_dirs` random directions; at most one when the envelope holds.
pub fn envelope_worst_ratio(
    sys: &DecenteredSystem,
    env: &HurwitzEnvelope,
    n_dirs: usize,
    seed: u64,
) -> f64 {
    let mut rng = stream_rng(seed, 0);
    let d = sys.dim();
    let dirs: Vec<DVector<f64>> = (0..n_dirs)
        .map(|_| DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    let steps = (ENVELOPE_HORIZON / ENVELOPE_STEP).round() as usize;
    let mut worst: f64 = 0.0;
    for mode in Mode::BOTH {
        for k in 0..=steps {
            let t = k as f64 * ENVELOPE_STEP;
            let m = sys.flow_matrix(mode, t);
            let bound = env.c * (-env.eta * t).exp();
            for x in &dirs {
                worst = worst.max((&m * x).norm() / (x.norm() * bound));
            }
        }
    }
    worst
}

fn check_start(sys: &DecenteredSystem, x0: &[f64], horizon: f64) -> Result<()> {
    if x0.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: x0.len(),
        });
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(invalid("horizon", "must be positive and finite"));
    }
    Ok(())
}

fn sample_of(t: f64, x: &DVector<f64>, mode: Mode) -> TrajectorySample {
    let theta = (x.len() == 2).then(|| x[1].atan2(x[0]));
    TrajectorySample {
        t,
        x: x.iter().cloned().collect(),
        mode,
        log_radius: x.norm().ln(),
        theta,
    }
}

/// Exact simulation with samples at every jump and on a `sample_dt` grid.
///
/// Sojourn times are drawn exactly as in the centered planar simulator, so
/// equal seeds give equal jump times. The `theta` column is the principal
/// polar angle (planar case), not a lift.
pub fn simulate_decentered(
    sys: &DecenteredSystem,
    x0: &[f64],
    i0: Mode,
    horizon: f64,
    seed: u64,
    sample_dt: Option<f64>,
) -> Result<TrajectoryRecord> {
    check_start(sys, x0, horizon)?;
    if let Some(dt) = sample_dt {
        if !(dt > 0.0) {
            return Err(invalid("sample_dt", "must be positive"));
        }
    }
    let sojourn = Sojourn::Exponential(sys.rates);
    let mut rng = stream_rng(seed, 0);
    let mut x = DVector::from_column_slice(x0);
    let mut mode = i0;
    let mut t = 0.0;
    let mut events = Vec::new();
    let mut samples = vec![sample_of(0.0, &x, mode)];
    let mut next_grid = 1usize;
    loop {
        let end = (t + sojourn.sample(mode, &mut rng)).min(horizon);
        if let Some(dt) = sample_dt {
            loop {
                let tg = next_grid as f64 * dt;
                if tg >= end {
                    break;
                }
                samples.push(sample_of(tg, &sys.affine(mode, tg - t, &x), mode));
                next_grid += 1;
            }
        }
        x = sys.affine(mode, end - t, &x);
        t = end;
        if t >= horizon {
            samples.push(sample_of(horizon, &x, mode));
            break;
        }
        mode = mode.flip();
        events.push(JumpEvent { t, mode });
        samples.push(sample_of(t, &x, mode));
    }
    Ok(TrajectoryRecord {
        events,
        samples,
        seed,
        horizon,
    })
}

/// One step of the chain: a mode-0 sojourn followed by a mode-1 sojourn.
fn chain_step<R: Rng>(
    sys: &DecenteredSystem,
    sojourn: &Sojourn,
    y: &DVector<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let t0 = sojourn.sample(Mode::Zero, rng);
    let t1 = sojourn.sample(Mode::One, rng);
    sys.affine(Mode::One, t1, &sys.affine(Mode::Zero, t0, y))
}

/// `Y_1, …, Y_n`, the state at every second jump starting in mode 0.
///
/// Shares its random stream with [`simulate_decentered`] started in mode 0.
pub fn yn_chain(
    sys: &DecenteredSystem,
    y0: &[f64],
    n_steps: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    check_start(sys, y0, 1.0)?;
    if n_steps == 0 {
        return Err(invalid("n_steps", "must be at least 1"));
    }
    let sojourn = Sojourn::Exponential(sys.rates);
    let mut rng = stream_rng(seed, 0);
    let mut y = DVector::from_column_slice(y0);
    let mut out = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        y = chain_step(sys, &sojourn, &y, &mut rng);
        out.push(y.clone());
    }
    Ok(out)
}

/// `‖Y_1‖, …, ‖Y_n‖` without keeping the vectors.
pub fn yn_norms(sys: &DecenteredSystem, y0: &[f64], n_steps: usize, seed: u64) -> Result<Vec<f64>> {
    check_start(sys, y0, 1.0)?;
    let sojourn = Sojourn::Exponential(sys.rates);
    let mut rng = stream_rng(seed, 0);
    let mut y = DVector::from_column_slice(y0);
    Ok((0..n_steps)
        .map(|_| {
            y = chain_step(sys, &sojourn, &y, &mut rng);
            y.norm()
        })
        .collect())
}

/// Burn-in discarded before tail estimation: 10% of the run, at least 1000.
pub fn burn_in(n: usize) -> usize {
    (n / 10).max(1000).min(n)
}

/// Samples of `‖e^{τ_k A_{I_k}} ⋯ e^{τ_0 A_{I_0}}‖` (spectral norm) with
/// modes alternating from mode 0 and exponential `τ_j` at the mode's rate.
///
/// An infinite rate makes every sojourn zero.
pub fn sample_b(
    a0: &DMatrix<f64>,
    a1: &DMatrix<f64>,
    k: usize,
    rates: [f64; 2],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if k % 2 == 0 {
        return Err(invalid("k", "must be odd"));
    }
    if n_samples == 0 {
        return Err(invalid("n_samples", "must be at least 1"));
    }
    if rates.iter().any(|r| !(*r > 0.0)) {
        return Err(invalid("rates", "must be positive"));
    }
    if !a0.is_square() || a0.shape() != a1.shape() {
        return Err(Error::DimensionMismatch {
            expected: a0.nrows(),
            got: a1.nrows(),
        });
    }
    let planar = if a0.nrows() == 2 {
        Some([
            from_dmatrix(a0).expect("2x2"),
            from_dmatrix(a1).expect("2x2"),
        ])
    } else {
        None
    };
    let chunk = 4096;
    let chunks = n_samples.div_ceil(chunk);
    let out: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let len = chunk.min(n_samples - c * chunk);
            (0..len)
                .map(|_| {
                    let taus: Vec<f64> = (0..=k)
                        .map(|j| {
                            let e: f64 = Exp1.sample(&mut rng);
                            e / rates[j % 2]
                        })
                        .collect();
                    match &planar {
                        Some(m) => {
                            let mut p = Matrix2::IDENTITY;
                            for (j, &t) in taus.iter().enumerate() {
                                p = exp2_closed(&m[j % 2], t).mul(&p);
                            }
                            p.norm2()
                        }
                        None => {
                            let d = a0.nrows();
                            let mut p = DMatrix::<f64>::identity(d, d);
                            for (j, &t) in taus.iter().enumerate() {
                                let m = if j % 2 == 0 { a0 } else { a1 };
                                p = general_matrix_exp(m, t).expect("finite input") * p;
                            }
                            p.singular_values().max()
                        }
                    }
                })
                .collect()
        })
        .collect();
    Ok(out.concat())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailMethod {
    MomentRoot,
    Hill,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub x1: f64,
    pub method: TailMethod,
    pub ci_low: f64,
    pub ci_high: f64,
    pub sample_size: usize,
    /// Hill only: the estimate keeps drifting upward as `k` shrinks, the
    /// signature of a light tail.
    pub light_tail_suspected: bool,
}

impl TailEstimate {
    pub fn overlaps(&self, other: &TailEstimate) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bootstrap {
    pub resamples: usize,
    /// Block length of the moving-block resampling (1 for i.i.d. data).
    pub block_len: usize,
    pub seed: u64,
}

impl Default for Bootstrap {
    fn default() -> Self {
        Self {
            resamples: 200,
            block_len: 1,
            seed: 0,
        }
    }
}

/// Percentile 95% interval of `estimator` under moving-block resampling.
pub fn bootstrap_ci<F>(data: &[f64], spec: &Bootstrap, estimator: F) -> Option<(f64, f64)>
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    let n = data.len();
    let block = spec.block_len.clamp(1, n.max(1));
    if n == 0 || spec.resamples == 0 {
        return None;
    }
    let mut stats: Vec<f64> = (0..spec.resamples)
        .into_par_iter()
        .filter_map(|r| {
            let mut rng = stream_rng(spec.seed, r as u64);
            let mut buf = Vec::with_capacity(n);
            while buf.len() < n {
                let start = rng.gen_range(0..=n - block);
                let take = block.min(n - buf.len());
                buf.extend_from_slice(&data[start..start + take]);
            }
            estimator(&buf)
        })
        .collect();
    if stats.len() < spec.resamples / 2 {
        return None;
    }
    stats.sort_by(|a, b| a.total_cmp(b));
    let q = |f: f64| stats[((stats.len() - 1) as f64 * f).round() as usize];
    Some((q(0.025), q(0.975)))
}

/// `log mean(s^p)` computed stably from `log s`.
pub fn log_moment(log_s: &[f64], p: f64) -> f64 {
    if p == 0.0 {
        return 0.0;
    }
    let top = log_s
        .iter()
        .map(|l| p * l)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = log_s.iter().map(|l| (p * l - top).exp()).sum();
    top + (sum / log_s.len() as f64).ln()
}

/// `(log m(p), d/dp log m(p))` for `p > 0` given `max log s`.
fn log_moment_slope(log_s: &[f64], max_log: f64, p: f64) -> (f64, f64) {
    let top = p * max_log;
    let (mut w, mut wl) = (0.0, 0.0);
    for &l in log_s {
        let e = (p * l - top).exp();
        w += e;
        wl += e * l;
    }
    (top + (w / log_s.len() as f64).ln(), wl / w)
}

fn root_of_log_moment(log_s: &[f64], p_max: f64, tol: f64) -> Result<f64> {
    let max_log = log_s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let p_lo = (p_max * 1e-4).min(1e-3);
    let f_lo = log_moment_slope(log_s, max_log, p_lo).0;
    let f_hi = log_moment_slope(log_s, max_log, p_max).0;
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(Error::Refused(format!(
            "no sign change of log m(p) on [{p_lo}, {p_max}]: {f_lo:e}, {f_hi:e}"
        )));
    }
    // Newton on the convex function, kept inside the bracket
    let (mut lo, mut hi) = (p_lo, p_max);
    let mut p = p_max;
    for _ in 0..200 {
        let (f, df) = log_moment_slope(log_s, max_log, p);
        if f.abs() <= tol || hi - lo <= 1e-13 * hi {
            return Ok(p);
        }
        if f < 0.0 {
            lo = p;
        } else {
            hi = p;
        }
        let step = p - f / df;
        p = if df > 0.0 && step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(p)
}

/// Root `x1` of `mean(s^p) = 1` by bisection, with a bootstrap interval.
pub fn moment_root_x1(samples: &[f64], p_max: f64, tolerance: f64) -> Result<TailEstimate> {
    moment_root_x1_with(samples, p_max, tolerance, &Bootstrap::default())
}

pub fn moment_root_x1_with(
    samples: &[f64],
    p_max: f64,
    tolerance: f64,
    boot: &Bootstrap,
) -> Result<TailEstimate> {
    if samples.is_empty() {
        return Err(invalid("samples", "empty"));
    }
    if samples.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(invalid("samples", "norms must be positive and finite"));
    }
    let log_s: Vec<f64> = samples.iter().map(|s| s.ln()).collect();
    let x1 = root_of_log_moment(&log_s, p_max, tolerance)?;
    let (lo, hi) = bootstrap_ci(&log_s, boot, |b| {
        root_of_log_moment(b, p_max, tolerance).ok()
    })
    .unwrap_or((x1, x1));
    Ok(TailEstimate {
        x1,
        method: TailMethod::MomentRoot,
        ci_low: lo.min(x1),
        ci_high: hi.max(x1),
        sample_size: samples.len(),
        light_tail_suspected: false,
    })
}

/// Roots for products of `m` consecutive blocks, `m ∈ blocks`.
///
/// `m` blocks of `k = 1` are one block of `k = 2m - 1`, so each root uses
/// [`sample_b`] with that `k`.
pub fn multi_block_roots(
    a0: &DMatrix<f64>,
    a1: &DMatrix<f64>,
    rates: [f64; 2],
    blocks: &[usize],
    n_samples: usize,
    p_max: f64,
    seed: u64,
) -> Vec<(usize, Result<TailEstimate>)> {
    blocks
        .iter()
        .map(|&m| {
            let est = sample_b(a0, a1, 2 * m - 1, rates, n_samples, seed ^ m as u64)
                .and_then(|s| moment_root_x1(&s, p_max, 1e-10));
            (m, est)
        })
        .collect()
}

fn hill_sorted(desc: &[f64], k: usize) -> Option<f64> {
    let base = desc[k];
    if !(base > 0.0) {
        return None;
    }
    let s: f64 = desc[..k].iter().map(|y| (y / base).ln()).sum();
    (s > 0.0).then(|| k as f64 / s)
}

fn sorted_desc(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// `x̂(k) = k / Σ_{j≤k} log(Y_(j) / Y_(k+1))` for each `k` in `ks`.
pub fn hill_stability(samples: &[f64], ks: &[usize]) -> Vec<(usize, Option<f64>)> {
    let desc = sorted_desc(samples);
    ks.iter()
        .map(|&k| {
            (
                k,
                (k > 0 && k < desc.len())
                    .then(|| hill_sorted(&desc, k))
                    .flatten(),
            )
        })
        .collect()
}

/// Default number of order statistics, `⌈√n⌉`.
pub fn default_hill_k(n: usize) -> usize {
    (n as f64).sqrt().ceil() as usize
}

/// Hill estimator on the top `k` order statistics with a block-bootstrap
/// interval. Refuses `k` above 10% of the sample.
pub fn hill_tail_index(samples: &[f64], k: usize) -> Result<TailEstimate> {
    hill_tail_index_with(samples, k, &Bootstrap::default())
}

pub fn hill_tail_index_with(samples: &[f64], k: usize, boot: &Bootstrap) -> Result<TailEstimate> {
    let n = samples.len();
    if k == 0 || 10 * k > n {
        return Err(Error::Refused(format!(
            "k = {k} outside (0, n/10] for n = {n}"
        )));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("samples"));
    }
    let desc = sorted_desc(samples);
    let x1 = hill_sorted(&desc, k)
        .ok_or_else(|| Error::Refused("degenerate top order statistics".into()))?;
    let (lo, hi) =
        bootstrap_ci(samples, boot, |b| hill_sorted(&sorted_desc(b), k)).unwrap_or((x1, x1));
    // light tails: the estimate at k keeps exceeding the one at n/10 by
    // more than sampling noise
    let k_wide = n / 10;
    let light = k_wide > k
        && hill_sorted(&desc, k_wide)
            .is_some_and(|wide| x1 > wide * (1.0 + 3.0 / (k as f64).sqrt() + 0.15));
    Ok(TailEstimate {
        x1,
        method: TailMethod::Hill,
        ci_low: lo.min(x1),
        ci_high: hi.max(x1),
        sample_size: n,
        light_tail_suspected: light,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportVerdict {
    Bounded,
    UnboundedEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedSupportReport {
    /// `(step, running max of ‖Y_n‖)` at geometric checkpoints.
    pub checkpoints: Vec<(usize, f64)>,
    /// Growth of the running max over the second half of the run.
    pub second_half_increase: f64,
    pub epsilon: f64,
    pub verdict: SupportVerdict,
    /// `C(‖b0‖ + ‖b1‖ + ‖b0 - b1‖) / (1 - C e^{-η τ_min})`, a heuristic ball
    /// radius; absent when the denominator is not positive.
    pub a_priori_radius: Option<f64>,
}

/// Running maximum of `‖Y_n‖` over `total_steps` chain steps.
///
/// `tau_quantile` picks `τ_min` as that quantile of the slower sojourn law.
pub fn bounded_support_probe(
    sys: &DecenteredSystem,
    total_steps: usize,
    checkpoints: usize,
    seed: u64,
    epsilon: f64,
    envelope: Option<HurwitzEnvelope>,
    tau_quantile: f64,
) -> Result<BoundedSupportReport> {
    if total_steps < 2 || checkpoints == 0 {
        return Err(invalid(
            "total_steps",
            "need at least two steps and one checkpoint",
        ));
    }
    let d = sys.dim();
    let sojourn = Sojourn::Exponential(sys.rates);
    let mut rng = stream_rng(seed, 0);
    let mut y = sys.attractor(Mode::One).clone();
    let marks: Vec<usize> = (1..=checkpoints)
        .map(|j| {
            let f = (j as f64 / checkpoints as f64 * (total_steps as f64).ln()).exp();
            (f.round() as usize).clamp(1, total_steps)
        })
        .collect();
    let half = total_steps / 2;
    let mut running = 0.0f64;
    let mut at_half = 0.0;
    let mut out = Vec::with_capacity(checkpoints);
    let mut next = 0;
    for step in 1..=total_steps {
        y = chain_step(sys, &sojourn, &y, &mut rng);
        running = running.max(y.norm());
        if step == half {
            at_half = running;
        }
        while next < marks.len() && marks[next] == step {
            out.push((step, running));
            next += 1;
        }
    }
    debug_assert_eq!(y.len(), d);
    let increase = running - at_half;
    let a_priori_radius = envelope.and_then(|env| {
        let slow = sys.rates[0].max(sys.rates[1]);
        let tau_min = -(1.0 - tau_quantile).ln() / slow;
        let denom = 1.0 - env.c * (-env.eta * tau_min).exp();
        let (b0, b1) = (&sys.b[0], &sys.b[1]);
        (denom > 0.0).then(|| env.c * (b0.norm() + b1.norm() + (b0 - b1).norm()) / denom)
    });
    Ok(BoundedSupportReport {
        checkpoints: out,
        second_half_increase: increase,
        epsilon,
        verdict: if increase < epsilon {
            SupportVerdict::Bounded
        } else {
            SupportVerdict::UnboundedEvidence
        },
        a_priori_radius,
    })
}

/// The three-dimensional pair whose two planar blocks act on the
/// coordinates `(1,2)` and `(2,3)`. Returns a warning for `a >= 1`.
pub fn chained_blocks_system(
    a: f64,
    b: f64,
    b0: [f64; 3],
    b1: [f64; 3],
    rates: [f64; 2],
) -> Result<(DecenteredSystem, Option<String>)> {
    if !(a > 0.0 && b > 0.0) {
        return Err(invalid("a, b", "must be positive"));
    }
    #[rustfmt::skip]
    let a0 = DMatrix::from_row_slice(3, 3, &[
        -a, b, 0.0,
        -1.0 / b, -a, 0.0,
        0.0, 0.0, -1.0,
    ]);
    #[rustfmt::skip]
    let a1 = DMatrix::from_row_slice(3, 3, &[
        -1.0, 0.0, 0.0,
        0.0, -a, b,
        0.0, -1.0 / b, -a,
    ]);
    let warning =
        (a >= 1.0).then(|| format!("a = {a} >= 1: the planar blocks no longer dominate the decay"));
    let sys = DecenteredSystem::new(
        a0,
        a1,
        DVector::from_column_slice(&b0),
        DVector::from_column_slice(&b1),
        rates,
    )?;
    Ok((sys, warning))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{mean_stderr, simulate_sampled, SwitchingLaw};
    use rand_distr::{Normal, Pareto};

    fn minus_identity() -> DMatrix<f64> {
        DMatrix::<f64>::identity(2, 2) * -1.0
    }

    fn segment_system() -> DecenteredSystem {
        DecenteredSystem::new(
            minus_identity(),
            minus_identity(),
            DVector::from_column_slice(&[0.5, 0.5]),
            DVector::from_column_slice(&[1.0, 0.0]),
            [0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn construction_checks() {
        let unstable = DMatrix::from_row_slice(2, 2, &[0.1, 1.0, -1.0, 0.1]);
        let z = DVector::zeros(2);
        let e = DVector::from_column_slice(&[1.0, 0.0]);
        assert!(DecenteredSystem::new(
            unstable,
            minus_identity(),
            z.clone(),
            e.clone(),
            [1.0, 1.0]
        )
        .is_err());
        assert!(DecenteredSystem::new(
            minus_identity(),
            minus_identity(),
            z.clone(),
            z.clone(),
            [1.0, 1.0]
        )
        .is_err());
        assert!(
            DecenteredSystem::new(minus_identity(), minus_identity(), z, e, [0.0, 1.0]).is_err()
        );
    }

    #[test]
    fn centered_matches_planar_simulator() {
        let p = SystemParams::new(0.15, 3.0, 2.0, 0.4).unwrap();
        let (a0, a1) = build_matrices(&p);
        let sys = DecenteredSystem::centered(
            to_dmatrix(&a0),
            to_dmatrix(&a1),
            [p.lambda0(), p.lambda1()],
        )
        .unwrap();
        let dec = simulate_decentered(&sys, &[1.0, 0.5], Mode::Zero, 12.0, 3, None).unwrap();
        let cen = simulate_sampled(
            &p,
            SwitchingLaw::Exponential,
            [1.0, 0.5],
            Mode::Zero,
            12.0,
            3,
            1e9,
        )
        .unwrap();
        assert_eq!(dec.events.len(), cen.events.len());
        for (a, b) in dec.samples.iter().zip(&cen.samples) {
            assert!((a.t - b.t).abs() < 1e-12);
            assert!((a.x[0] - b.x[0]).abs() < 1e-12 && (a.x[1] - b.x[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn segment_attraction() {
        let sys = segment_system();
        let rec = simulate_decentered(&sys, &[5.0, -4.0], Mode::Zero, 200.0, 1, Some(0.5)).unwrap();
        let late = rec.samples.iter().filter(|s| s.t > 50.0);
        for s in late {
            assert!(s.x[0].hypot(s.x[1]) <= 1.0 + 1e-6);
        }
    }

    #[test]
    fn single_phase_matches_padé() {
        let (sys, _) =
            chained_blocks_system(0.15, 3.0, [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0]).unwrap();
        let x = DVector::from_column_slice(&[0.3, -2.0, 1.1]);
        let got = sys.affine(Mode::Zero, 0.7, &x);
        let b0 = sys.attractor(Mode::Zero);
        let expect = b0 + general_matrix_exp(sys.matrix(Mode::Zero), 0.7).unwrap() * (&x - b0);
        assert!((got - expect).amax() < 1e-12);
    }

    #[test]
    fn chain_matches_continuous_time() {
        let p = SystemParams::new(0.1, 2.0, 1.0, 0.5).unwrap();
        let sys = DecenteredSystem::planar(&p, [0.0, 0.0], [1.0, 1.0]).unwrap();
        for seed in 0..200 {
            let ys = yn_chain(&sys, &[0.2, 0.3], 1, seed).unwrap();
            let rec =
                simulate_decentered(&sys, &[0.2, 0.3], Mode::Zero, 200.0, seed, None).unwrap();
            assert!(rec.events.len() >= 2);
            // sample index 2 is the second jump
            let s = &rec.samples[2];
            assert!((s.x[0] - ys[0][0]).abs() < 1e-10 && (s.x[1] - ys[0][1]).abs() < 1e-10);
        }
    }

    #[test]
    fn chain_zero_durations_and_centered() {
        let sys = DecenteredSystem::new(
            minus_identity(),
            minus_identity(),
            DVector::from_column_slice(&[1.0, 0.0]),
            DVector::from_column_slice(&[0.0, 1.0]),
            [f64::INFINITY, f64::INFINITY],
        )
        .unwrap();
        let ys = yn_chain(&sys, &[3.0, -2.0], 1, 0).unwrap();
        assert!((ys[0][0] - 3.0).abs() < 1e-15 && (ys[0][1] + 2.0).abs() < 1e-15);
        let norms = sample_b(
            &minus_identity(),
            &minus_identity(),
            1,
            [f64::INFINITY; 2],
            10,
            0,
        )
        .unwrap();
        assert!(norms.iter().all(|&n| (n - 1.0).abs() < 1e-15));
    }

    #[test]
    fn scalar_b_moments_and_no_root() {
        let a = 0.3;
        let m = DMatrix::<f64>::identity(2, 2) * -a;
        let lam = 1.5;
        let s = sample_b(&m, &m, 1, [lam, lam], 200_000, 4).unwrap();
        for &p in &[0.5, 2.0] {
            let vals: Vec<f64> = s.iter().map(|x| x.powf(p)).collect();
            let (mean, se) = mean_stderr(&vals);
            let exact = (lam / (lam + a * p)).powi(2);
            assert!((mean - exact).abs() < 3.0 * se, "p={p}");
        }
        assert!(matches!(
            moment_root_x1(&s, 20.0, 1e-10),
            Err(Error::Refused(_))
        ));
        assert_eq!(log_moment(&[0.3, -1.0], 0.0), 0.0);
    }

    #[test]
    fn lognormal_moment_root() {
        for &(mu, sigma) in &[(-0.5f64, 1.0f64), (-0.2, 0.5), (-1.0, 2.0)] {
            let dist = Normal::new(mu, sigma).unwrap();
            let mut rng = stream_rng(8, 0);
            let s: Vec<f64> = (0..100_000).map(|_| dist.sample(&mut rng).exp()).collect();
            let est = moment_root_x1(&s, 30.0, 1e-12).unwrap();
            let exact = -2.0 * mu / (sigma * sigma);
            assert!(
                est.ci_low <= exact && exact <= est.ci_high,
                "{exact} not in {est:?}"
            );
        }
    }

    #[test]
    fn pareto_hill() {
        for &alpha in &[1.5, 3.0] {
            let dist = Pareto::new(1.0, alpha).unwrap();
            let mut rng = stream_rng(21, 0);
            let s: Vec<f64> = (0..100_000).map(|_| dist.sample(&mut rng)).collect();
            let est = hill_tail_index(&s, default_hill_k(s.len())).unwrap();
            assert!(
                est.ci_low <= alpha && alpha <= est.ci_high,
                "{alpha}: {est:?}"
            );
            assert!(!est.light_tail_suspected);
        }
    }

    #[test]
    fn hill_light_tail_and_refusals() {
        let mut rng = stream_rng(2, 0);
        let s: Vec<f64> = (0..100_000).map(|_| Exp1.sample(&mut rng)).collect();
        let est = hill_tail_index(&s, default_hill_k(s.len())).unwrap();
        assert!(est.light_tail_suspected);
        assert!(matches!(
            hill_tail_index(&[2.0; 1000], 10),
            Err(Error::Refused(_))
        ));
        assert!(matches!(
            hill_tail_index(&s, 20_000),
            Err(Error::Refused(_))
        ));
        let stab = hill_stability(&s, &[100, 1000, 10_000]);
        let v: Vec<f64> = stab.iter().map(|(_, x)| x.unwrap()).collect();
        assert!(v[0] > v[1] && v[1] > v[2]);
    }

    #[test]
    fn envelope_planar_is_b_and_a() {
        let p = SystemParams::new(0.15, 3.0, 1.0, 0.5).unwrap();
        let sys = DecenteredSystem::planar(&p, [0.0, 0.0], [1.0, 0.0]).unwrap();
        let env = hurwitz_envelope(&sys, 1.0).unwrap();
        assert!((env.eta - 0.15).abs() < 1e-10);
        assert!((env.c - 3.0).abs() < 1e-6);
        assert!(envelope_worst_ratio(&sys, &env, 200, 1) <= 1.0 + 1e-9);
    }

    #[test]
    fn bounded_probe_on_segment() {
        let sys = segment_system();
        let env = hurwitz_envelope(&sys, 1.0).unwrap();
        let r = bounded_support_probe(&sys, 20_000, 8, 3, 1e-6, Some(env), 0.1).unwrap();
        assert!(r.checkpoints.windows(2).all(|w| w[0].1 <= w[1].1));
        assert!(r.checkpoints.last().unwrap().1 <= 1.0 + 1e-6);
        assert!(r.a_priori_radius.is_some());
        let long = bounded_support_probe(&sys, 40_000, 8, 3, 1e-6, None, 0.1).unwrap();
        assert!(long.checkpoints.last().unwrap().1 >= r.checkpoints.last().unwrap().1);
    }

    #[test]
    fn chained_blocks_structure() {
        let (sys, warn) =
            chained_blocks_system(0.15, 3.0, [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0]).unwrap();
        assert!(warn.is_none());
        let mut ev: Vec<(f64, f64)> = sys
            .matrix(Mode::Zero)
            .complex_eigenvalues()
            .iter()
            .map(|z| (z.re, z.im))
            .collect();
        ev.sort_by(|a, b| a.1.total_cmp(&b.1));
        assert!((ev[0].0 + 0.15).abs() < 1e-12 && (ev[0].1 + 1.0).abs() < 1e-12);
        assert!((ev[1].0 + 1.0).abs() < 1e-12 && ev[1].1.abs() < 1e-12);
        // cyclic permutation e1 → e2 → e3 → e1 conjugates A0 into A1
        let perm = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let conj = &perm * sys.matrix(Mode::Zero) * perm.transpose();
        assert!((conj - sys.matrix(Mode::One)).amax() < 1e-15);
        assert!(
            chained_blocks_system(1.5, 3.0, [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0])
                .unwrap()
                .1
                .is_some()
        );
    }
}
