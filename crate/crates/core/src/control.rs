//! Periodic deterministic control and the exponent `χ^d`.
//!
//! The control spends `τ0 = 1/(uβ)` in mode 0, then `τ1 = 1/((1-u)β)` in
//! mode 1, and repeats. Over one period the state is multiplied by
//! `e^{-a(τ0+τ1)} P` with `P = B1(τ1) B0(τ0)`, a unit-determinant matrix, so
//! `χ^d = -a + log ρ(P) / (τ0 + τ1)`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::expm::general_matrix_exp;
use crate::system::{norm, rotation_part, Matrix2, Mode, SystemParams};

/// Relative width of the band around a zero discriminant treated as a
/// repeated root.
pub const REPEATED_ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicControl {
    pub tau0: f64,
    pub tau1: f64,
}

impl PeriodicControl {
    pub fn from_params(params: &SystemParams) -> Self {
        Self {
            tau0: 1.0 / (params.u() * params.beta()),
            tau1: 1.0 / ((1.0 - params.u()) * params.beta()),
        }
    }

    pub fn period(&self) -> f64 {
        self.tau0 + self.tau1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    RealSplit,
    ComplexPair,
    DegenerateRepeated,
}

/// Regime of `X² - tX + d` from the sign of `t² - 4d`.
pub fn classify(trace: f64, det: f64) -> Regime {
    let disc = trace * trace - 4.0 * det;
    let scale = (trace * trace).max(4.0 * det.abs()).max(1.0);
    if disc.abs() <= REPEATED_ROOT_TOL * scale {
        Regime::DegenerateRepeated
    } else if disc > 0.0 {
        Regime::RealSplit
    } else {
        Regime::ComplexPair
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub control: PeriodicControl,
    pub a: f64,
    /// `P = B1(τ1) B0(τ0)`.
    pub product: Matrix2,
    /// `(re, im)` pairs, largest modulus first.
    pub eigenvalues: [(f64, f64); 2],
    pub chi_d: f64,
    pub regime: Regime,
}

impl SpectralReport {
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues[0].0.hypot(self.eigenvalues[0].1)
    }

    /// Unit eigenvectors `(v1, v2)` for the two real eigenvalues.
    pub fn eigenvectors(&self) -> Option<([f64; 2], [f64; 2])> {
        if self.regime != Regime::RealSplit {
            return None;
        }
        let v1 = eigenvector(&self.product, self.eigenvalues[0].0);
        let v2 = eigenvector(&self.product, self.eigenvalues[1].0);
        Some((v1, v2))
    }
}

fn eigenvector(m: &Matrix2, lambda: f64) -> [f64; 2] {
    let [[p, q], [r, s]] = m.0;
    let c1 = [q, lambda - p];
    let c2 = [lambda - s, r];
    let v = if norm(c1) >= norm(c2) { c1 } else { c2 };
    let n = norm(v);
    [v[0] / n, v[1] / n]
}

/// Spectral report for an arbitrary pair of durations.
pub fn spectral_report(a: f64, b: f64, control: PeriodicControl) -> SpectralReport {
    let p =
        rotation_part(control.tau1, Mode::One, b).mul(&rotation_part(control.tau0, Mode::Zero, b));
    let (t, d) = (p.trace(), p.det());
    let regime = classify(t, d);
    let eigenvalues = match regime {
        Regime::RealSplit => {
            let disc = (t * t - 4.0 * d).sqrt();
            let l1 = 0.5 * (t + t.signum() * disc);
            [(l1, 0.0), (d / l1, 0.0)]
        }
        Regime::DegenerateRepeated => [(0.5 * t, 0.0), (0.5 * t, 0.0)],
        Regime::ComplexPair => {
            let im = 0.5 * (4.0 * d - t * t).sqrt();
            [(0.5 * t, im), (0.5 * t, -im)]
        }
    };
    let rho = eigenvalues[0].0.hypot(eigenvalues[0].1);
    SpectralReport {
        control,
        a,
        product: p,
        eigenvalues,
        chi_d: -a + rho.ln() / control.period(),
        regime,
    }
}

pub fn periodic_chi(params: &SystemParams) -> SpectralReport {
    spectral_report(params.a(), params.b(), PeriodicControl::from_params(params))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharPoly {
    /// `(1, 4C² sin²τ - 2, 1)` with `C = (b + 1/b)/2`.
    pub coefficients: [f64; 3],
    pub regime: Regime,
}

/// Characteristic polynomial of `B0(τ) B1(τ)` (the `u = 1/2` product).
///
/// Real eigenvalues occur exactly when `C² sin²τ > 1`.
pub fn char_poly_u_half(params: &SystemParams, tau: f64) -> CharPoly {
    let b = params.b();
    let c = 0.5 * (b + 1.0 / b);
    let s = tau.sin();
    let mid = 4.0 * c * c * s * s - 2.0;
    CharPoly {
        coefficients: [1.0, mid, 1.0],
        regime: classify(-mid, 1.0),
    }
}

/// `log ‖Pⁿ x0‖` for the report's `P`.
///
/// In the real-split regime this uses the eigen-decomposition so that an
/// initial condition lying exactly on the second eigenline stays there.
fn log_norm_power(report: &SpectralReport, x0: [f64; 2], n: usize) -> f64 {
    if let Some((v1, v2)) = report.eigenvectors() {
        let l1 = report.eigenvalues[0].0;
        let l2 = report.eigenvalues[1].0;
        let det = v1[0] * v2[1] - v1[1] * v2[0];
        let c1 = (x0[0] * v2[1] - x0[1] * v2[0]) / det;
        let c2 = (v1[0] * x0[1] - v1[1] * x0[0]) / det;
        let nf = n as f64;
        if c1 == 0.0 {
            return c2.abs().ln() + nf * l2.abs().ln();
        }
        let r = (l2 / l1).powi(n as i32) * c2 / c1;
        let w = [v1[0] + r * v2[0], v1[1] + r * v2[1]];
        return c1.abs().ln() + nf * l1.abs().ln() + norm(w).ln();
    }
    let mut x = x0;
    let mut acc = 0.0;
    for _ in 0..n {
        x = report.product.apply(x);
        let r = norm(x);
        acc += r.ln();
        x = [x[0] / r, x[1] / r];
    }
    acc
}

fn check_x0(x0: [f64; 2], periods: usize) -> Result<()> {
    if !(x0[0].is_finite() && x0[1].is_finite()) || norm(x0) == 0.0 {
        return Err(invalid("x0", "must be a finite nonzero vector"));
    }
    if periods == 0 {
        return Err(invalid("periods", "must be at least 1"));
    }
    Ok(())
}

/// `-a + log(‖Pⁿ x0‖/‖x0‖) / (n · period)`.
pub fn chi_d_from_x0(params: &SystemParams, x0: [f64; 2], periods: usize) -> Result<f64> {
    check_x0(x0, periods)?;
    let report = periodic_chi(params);
    let growth = log_norm_power(&report, x0, periods) - norm(x0).ln();
    Ok(-params.a() + growth / (periods as f64 * report.control.period()))
}

/// Power-iteration rate `-a + log(‖Pⁿ x0‖/‖Pⁿ⁻¹ x0‖) / period`.
///
/// Converges geometrically in the real-split regime, unlike the averaged
/// form of [`chi_d_from_x0`] whose error decays like `1/n`.
pub fn chi_d_power_iteration(params: &SystemParams, x0: [f64; 2], periods: usize) -> Result<f64> {
    check_x0(x0, periods)?;
    let report = periodic_chi(params);
    let step = log_norm_power(&report, x0, periods) - log_norm_power(&report, x0, periods - 1);
    Ok(-params.a() + step / report.control.period())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplosiveControl {
    pub k_phases: usize,
    /// Mode of the first phase for the per-direction optimum.
    pub start_mode: Mode,
    /// Durations `(t0, …, tk)` maximizing `σ_min` of the product.
    pub durations: Vec<f64>,
    pub sigma_min: f64,
    pub sigma_max_at_best: f64,
    /// Largest operator norm over the grid.
    pub best_norm: f64,
    /// `min_x max_{controls} ‖M x‖` over the direction sample.
    pub direction_gain: f64,
    /// Worst direction found by the sample.
    pub worst_direction: Vec<f64>,
    /// `∀x ∃ control: ‖Mx‖ > ‖x‖` holds on the direction sample.
    pub certified: bool,
    /// `σ_min > 1`, the uniform single-control version.
    pub uniform_certified: bool,
}

/// Product `e^{t_k A_{I_k}} ⋯ e^{t_0 A_{I_0}}` with modes alternating from `start`.
pub fn control_product(
    a0: &DMatrix<f64>,
    a1: &DMatrix<f64>,
    start: Mode,
    durations: &[f64],
) -> Result<DMatrix<f64>> {
    check_pair(a0, a1)?;
    let n = a0.nrows();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut mode = start;
    for &t in durations {
        let a = if mode == Mode::Zero { a0 } else { a1 };
        m = general_matrix_exp(a, t)? * m;
        mode = mode.flip();
    }
    Ok(m)
}

fn check_pair(a0: &DMatrix<f64>, a1: &DMatrix<f64>) -> Result<()> {
    if !a0.is_square() || a0.shape() != a1.shape() {
        return Err(Error::DimensionMismatch {
            expected: a0.nrows(),
            got: a1.ncols(),
        });
    }
    Ok(())
}

/// Deterministic direction sample on the unit sphere.
fn directions(d: usize, count: usize) -> Vec<DMatrix<f64>> {
    if d == 2 {
        // x and -x have the same gain, half circle suffices
        return (0..count)
            .map(|j| {
                let th = std::f64::consts::PI * j as f64 / count as f64;
                DMatrix::from_column_slice(2, 1, &[th.cos(), th.sin()])
            })
            .collect();
    }
    let mut out = Vec::with_capacity(count + 2 * d);
    for i in 0..d {
        let mut e = DMatrix::zeros(d, 1);
        e[i] = 1.0;
        out.push(e);
    }
    // low-discrepancy points from a Halton sequence pushed through the
    // Gaussian-free spherical map on each coordinate pair
    let primes = [2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for j in 1..=count {
        let mut x = DMatrix::zeros(d, 1);
        for i in 0..d {
            x[i] = 2.0 * halton(j as u32, primes[i % primes.len()]) - 1.0;
        }
        let n = x.norm();
        if n > 1e-9 {
            out.push(x / n);
        }
    }
    out
}

fn halton(mut i: u32, base: u32) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Grid search over alternating controls with `k_phases + 1` phases.
///
/// The search tries both starting modes. A per-direction certificate
/// (`∀x ∃ control`) is reported alongside the uniform one (`σ_min > 1`).
/// The uniform certificate can never hold when both matrices have negative
/// trace, because the product then has determinant below one.
pub fn explosive_control_search(
    a0: &DMatrix<f64>,
    a1: &DMatrix<f64>,
    k_phases: usize,
    grid: &[f64],
    direction_count: usize,
) -> Result<ExplosiveControl> {
    check_pair(a0, a1)?;
    if grid.is_empty() {
        return Err(invalid("grid", "duration grid is empty"));
    }
    if k_phases % 2 == 0 {
        return Err(invalid("k_phases", "must be odd"));
    }
    if grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(invalid("grid", "durations must be finite and nonnegative"));
    }
    let d = a0.nrows();
    let phases = k_phases + 1;
    let mut flows = [Vec::new(), Vec::new()];
    for &t in grid {
        flows[0].push(general_matrix_exp(a0, t)?);
        flows[1].push(general_matrix_exp(a1, t)?);
    }
    let dirs = directions(d, direction_count.max(8));
    let g = grid.len();
    let combos = g
        .checked_pow(phases as u32)
        .ok_or_else(|| invalid("grid", "search space too large"))?;

    struct Local {
        best_smin: (f64, f64, usize, Mode),
        best_norm: f64,
        dir_best: Vec<f64>,
    }
    let eval = |start: Mode, idx: usize| -> (f64, f64, Vec<f64>) {
        let mut m = DMatrix::<f64>::identity(d, d);
        let mut rest = idx;
        let mut mode = start;
        for _ in 0..phases {
            m = &flows[mode.index()][rest % g] * m;
            rest /= g;
            mode = mode.flip();
        }
        let sv = m.clone().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        let gains = dirs.iter().map(|x| (&m * x).norm()).collect();
        (smin, smax, gains)
    };
    let fold_init = || Local {
        best_smin: (f64::NEG_INFINITY, 0.0, 0, Mode::Zero),
        best_norm: 0.0,
        dir_best: vec![0.0; dirs.len()],
    };
    let merge = |mut acc: Local, other: Local| {
        if other.best_smin.0 > acc.best_smin.0
            || (other.best_smin.0 == acc.best_smin.0
                && (other.best_smin.3, other.best_smin.2) < (acc.best_smin.3, acc.best_smin.2))
        {
            acc.best_smin = other.best_smin;
        }
        acc.best_norm = acc.best_norm.max(other.best_norm);
        for (a, b) in acc.dir_best.iter_mut().zip(other.dir_best) {
            *a = a.max(b);
        }
        acc
    };
    let total = Mode::BOTH
        .par_iter()
        .flat_map(|&start| (0..combos).into_par_iter().map(move |i| (start, i)))
        .fold(fold_init, |mut acc, (start, i)| {
            let (smin, smax, gains) = eval(start, i);
            let cand = (smin, smax, i, start);
            if smin > acc.best_smin.0
                || (smin == acc.best_smin.0 && (start, i) < (acc.best_smin.3, acc.best_smin.2))
            {
                acc.best_smin = cand;
            }
            acc.best_norm = acc.best_norm.max(smax);
            for (a, b) in acc.dir_best.iter_mut().zip(gains) {
                *a = a.max(b);
            }
            acc
        })
        .reduce(fold_init, merge);

    let (sigma_min, sigma_max_at_best, idx, start_mode) = total.best_smin;
    let mut durations = Vec::with_capacity(phases);
    let mut rest = idx;
    for _ in 0..phases {
        durations.push(grid[rest % g]);
        rest /= g;
    }
    let (worst_j, direction_gain) =
        total
            .dir_best
            .iter()
            .cloned()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (j, v)| if v < acc.1 { (j, v) } else { acc },
            );
    Ok(ExplosiveControl {
        k_phases,
        start_mode,
        durations,
        sigma_min,
        sigma_max_at_best,
        best_norm: total.best_norm,
        direction_gain,
        worst_direction: dirs[worst_j].iter().cloned().collect(),
        certified: direction_gain > 1.0,
        uniform_certified: sigma_min > 1.0,
    })
}
