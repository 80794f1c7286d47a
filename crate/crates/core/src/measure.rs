//! Explicit invariant measure of the angular process `(Θ_t, I_t)` and the
//! Lyapunov exponent obtained from it.
//!
//! Everything is expressed through the *scaled tail*
//!
//! ```text
//! J(θ) = e^{β v(θ)} ∫_θ^∞ e^{-β v(α)} / d1(α) dα  = ∫_θ^∞ e^{-β (v(α) - v(θ))} / d1(α) dα
//! ```
//!
//! which is bounded, negative and π-periodic (because `v(α + π) = v(α) + π`).
//! Working with `J` rather than the two exponentials separately keeps the
//! computation finite for `β` up to `10³` and beyond. In these terms
//!
//! ```text
//! κ   = 1 / (-β (1-u) J(0))
//! 1/K = ∫_0^{2π} [ -κ β (1-u) J (1/d0 - 1/d1) + κ / d1 ] dθ,     C = κ K
//! Φ   = -C β (1-u) J,   ρ0 = Φ / d0,   ρ1 = (C - Φ) / d1
//! χ   = -a - (1-u) β κ K ((b - 1/b)/2) ∫_0^{2π} sin 2θ (1/d0 + 1/d1) J dθ
//! ```
//!
//! `J` is tabulated on a uniform grid of `[0, π]` by a single backward sweep
//! of panel integrals, and evaluated off-grid by one local integral to the
//! next node.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{gk15, integrate, Tolerance};
use crate::system::{drift_b, radial_drift, v_bu, Mode, SystemParams};

/// Number of uniform grid points on `[0, 2π)`.
pub const GRID_POINTS: usize = 4096;
const HALF_GRID: usize = GRID_POINTS / 2;

/// Negative-density slack tolerated before declaring an inconsistency.
pub const DENSITY_SLACK: f64 = 1e-12;

const PANEL_TOL: Tolerance = Tolerance {
    abs: 1e-16,
    rel: 1e-13,
    max_panels: 200,
};

const OUTER_TOL: Tolerance = Tolerance {
    abs: 1e-12,
    rel: 1e-11,
    max_panels: 4000,
};

/// Tolerance reported alongside quadrature results and used to judge the
/// agreement of the two χ routes.
pub const QUADRATURE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChiMethod {
    Quadrature,
    MonteCarlo,
    Spectral,
    ErlangMc,
}

impl ChiMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            ChiMethod::Quadrature => "quadrature",
            ChiMethod::MonteCarlo => "monte-carlo",
            ChiMethod::Spectral => "spectral",
            ChiMethod::ErlangMc => "erlang-mc",
        }
    }
}

/// A Lyapunov exponent with provenance and error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiResult {
    pub value: f64,
    pub method: ChiMethod,
    /// Quadrature tolerance or Monte Carlo standard error.
    pub error: f64,
    pub params_echo: SystemParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureConstants {
    pub kappa: f64,
    pub big_k: f64,
    pub big_c: f64,
    pub quadrature_tolerance: f64,
}

fn d0(theta: f64, b: f64) -> f64 {
    drift_b(theta, Mode::Zero, b)
}

fn d1(theta: f64, b: f64) -> f64 {
    drift_b(theta, Mode::One, b)
}

/// `F = ∫_0^π e^{-β v(α)} / d1(α) dα` by adaptive quadrature.
///
/// The full tail `∫_0^∞` equals `F / (1 - e^{-βπ})`.
pub fn half_period_integral(params: &SystemParams) -> Result<f64> {
    let (b, u, beta) = (params.b(), params.u(), params.beta());
    let tol = Tolerance {
        abs: 1e-16,
        rel: 1e-12,
        max_panels: 4000,
    };
    let r = integrate(|x| (-beta * v_bu(x, b, u)).exp() / d1(x, b), 0.0, PI, &tol)?;
    Ok(r.value)
}

/// `I∞ = ∫_0^∞ e^{-βv}/d1` from `F`.
pub fn full_tail_from_half(f_half: f64, beta: f64) -> f64 {
    f_half / -(-beta * PI).exp_m1()
}

/// Tabulated scaled tail `J` on `[0, π]`.
#[derive(Debug, Clone)]
pub struct TailTable {
    b: f64,
    u: f64,
    beta: f64,
    step: f64,
    /// `J(k·step)` for `k = 0..=HALF_GRID`; last entry equals the first.
    nodes: Vec<f64>,
    /// `v` at the nodes.
    v_nodes: Vec<f64>,
    f_half: f64,
}

impl TailTable {
    pub fn build(params: &SystemParams) -> Result<Self> {
        let (b, u, beta) = (params.b(), params.u(), params.beta());
        let step = PI / HALF_GRID as f64;
        let v_nodes: Vec<f64> = (0..=HALF_GRID)
            .map(|k| v_bu(k as f64 * step, b, u))
            .collect();
        let mut panels = Vec::with_capacity(HALF_GRID);
        for k in 0..HALF_GRID {
            let lo = k as f64 * step;
            let hi = lo + step;
            let v_lo = v_nodes[k];
            let f = |x: f64| (-beta * (v_bu(x, b, u) - v_lo)).exp() / d1(x, b);
            panels.push(panel_integral(f, lo, hi)?);
        }
        let f_half: f64 = panels
            .iter()
            .zip(&v_nodes)
            .map(|(p, v)| (-beta * v).exp() * p)
            .sum();
        let mut nodes = vec![0.0; HALF_GRID + 1];
        nodes[HALF_GRID] = full_tail_from_half(f_half, beta);
        for k in (0..HALF_GRID).rev() {
            let decay = (-beta * (v_nodes[k + 1] - v_nodes[k])).exp();
            nodes[k] = panels[k] + decay * nodes[k + 1];
        }
        Ok(Self {
            b,
            u,
            beta,
            step,
            nodes,
            v_nodes,
            f_half,
        })
    }

    pub fn f_half(&self) -> f64 {
        self.f_half
    }

    /// `I∞ = J(0)`.
    pub fn i_inf(&self) -> f64 {
        self.nodes[0]
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// `J` at grid node `k` of the `[0, π]` table (wrapping modulo the period).
    pub fn node(&self, k: usize) -> f64 {
        self.nodes[k % HALF_GRID]
    }

    /// `J(θ)` at any real angle.
    pub fn scaled(&self, theta: f64) -> Result<f64> {
        let r = theta.rem_euclid(PI);
        let r = if r >= PI { 0.0 } else { r };
        let k = ((r / self.step).floor() as usize).min(HALF_GRID - 1);
        let hi = (k + 1) as f64 * self.step;
        let (b, u, beta) = (self.b, self.u, self.beta);
        let v_r = v_bu(r, b, u);
        let local = if hi > r {
            let f = |x: f64| (-beta * (v_bu(x, b, u) - v_r)).exp() / d1(x, b);
            panel_integral(f, r, hi)?
        } else {
            0.0
        };
        let decay = (-beta * (self.v_nodes[k + 1] - v_r)).exp();
        Ok(local + decay * self.nodes[k + 1])
    }
}

fn panel_integral<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64) -> Result<f64> {
    // one Kronrod panel is almost always enough on a grid cell
    let (v, e) = gk15(&mut f, lo, hi);
    if e <= PANEL_TOL.abs.max(PANEL_TOL.rel * v.abs()) {
        return Ok(v);
    }
    Ok(integrate(f, lo, hi, &PANEL_TOL)?.value)
}

/// Unscaled tail `∫_θ^∞ e^{-βv(α)}/d1(α) dα`.
///
/// `f_half` and `i_inf` come from [`half_period_integral`] and
/// [`full_tail_from_half`]. Underflows to `-0.0` when `β θ` is very large.
pub fn tail_integral(theta: f64, params: &SystemParams, f_half: f64, i_inf: f64) -> Result<f64> {
    let (b, u, beta) = (params.b(), params.u(), params.beta());
    debug_assert!(f_half.is_finite());
    if theta <= 0.0 {
        return Ok(i_inf);
    }
    let m = (theta / PI).ceil();
    let end = m * PI;
    let tol = Tolerance {
        abs: 1e-16,
        rel: 1e-12,
        max_panels: 4000,
    };
    let head = integrate(
        |x| (-beta * v_bu(x, b, u)).exp() / d1(x, b),
        theta,
        end,
        &tol,
    )?
    .value;
    Ok(head + (-beta * end).exp() * i_inf)
}

/// Explicit invariant measure for one parameter point.
#[derive(Debug, Clone)]
pub struct InvariantMeasure {
    params: SystemParams,
    table: TailTable,
    constants: MeasureConstants,
    rescaled: bool,
}

impl InvariantMeasure {
    pub fn new(params: &SystemParams) -> Result<Self> {
        let table = TailTable::build(params)?;
        let constants = constants_from_table(params, &table)?;
        let mut m = Self {
            params: *params,
            table,
            constants,
            rescaled: false,
        };
        m.check_normalization()?;
        Ok(m)
    }

    /// Falls back to rescaling `K` when the closed-form normalization misses
    /// by more than `1e-8`; the outcome is visible through [`Self::rescaled`].
    fn check_normalization(&mut self) -> Result<()> {
        let mass = self.grid_mass();
        if (mass - 1.0).abs() > 1e-8 {
            if !(mass.is_finite() && mass > 0.0) {
                return Err(Error::Inconsistent(format!("total mass {mass}")));
            }
            self.constants.big_k /= mass;
            self.constants.big_c = self.constants.kappa * self.constants.big_k;
            self.rescaled = true;
        }
        Ok(())
    }

    fn grid_mass(&self) -> f64 {
        let dp = self.density_pair_inner();
        dp.rho0
            .iter()
            .zip(&dp.rho1)
            .map(|(r0, r1)| r0 + r1)
            .sum::<f64>()
            * TAU
            / GRID_POINTS as f64
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn constants(&self) -> MeasureConstants {
        self.constants
    }

    pub fn table(&self) -> &TailTable {
        &self.table
    }

    pub fn rescaled(&self) -> bool {
        self.rescaled
    }

    pub fn density_pair(&self) -> Result<DensityPair> {
        let dp = self.density_pair_inner();
        dp.check_positive()?;
        Ok(dp)
    }

    fn density_pair_inner(&self) -> DensityPair {
        DensityPair::from_parts(self.params, self.constants, self.table.clone())
    }

    /// χ from the closed expression (periodic trapezoid on the tail table).
    pub fn chi_formula(&self) -> f64 {
        let (b, u, beta, a) = (
            self.params.b(),
            self.params.u(),
            self.params.beta(),
            self.params.a(),
        );
        let h = self.table.step();
        let integral: f64 = (0..HALF_GRID)
            .map(|k| {
                let th = k as f64 * h;
                (2.0 * th).sin() * (1.0 / d0(th, b) + 1.0 / d1(th, b)) * self.table.node(k)
            })
            .sum::<f64>()
            * h
            * 2.0;
        let c = self.constants;
        -a - (1.0 - u) * beta * c.kappa * c.big_k * 0.5 * (b - 1.0 / b) * integral
    }

    /// χ as `∫ 𝒜 dμ` using the pointwise density evaluator.
    pub fn chi_ergodic(&self) -> Result<f64> {
        let dp = self.density_pair_inner();
        let p = self.params;
        let mut failure = None;
        let integrand = |th: f64| match dp.eval(th) {
            Ok((r0, r1)) => {
                radial_drift(th, Mode::Zero, &p) * r0 + radial_drift(th, Mode::One, &p) * r1
            }
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        };
        // the integrand is π-periodic
        let r = integrate(integrand, 0.0, PI, &OUTER_TOL)?;
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(2.0 * r.value)
    }
}

fn constants_from_table(params: &SystemParams, table: &TailTable) -> Result<MeasureConstants> {
    let (b, u, beta) = (params.b(), params.u(), params.beta());
    let i_inf = table.i_inf();
    if !(i_inf < 0.0) {
        return Err(Error::Inconsistent(format!(
            "tail integral should be negative, got {i_inf}"
        )));
    }
    let kappa = 1.0 / (-beta * (1.0 - u) * i_inf);
    let h = table.step();
    let inv_k = 2.0
        * h
        * (0..HALF_GRID)
            .map(|k| {
                let th = k as f64 * h;
                let (p, q) = (d0(th, b), d1(th, b));
                -kappa * beta * (1.0 - u) * table.node(k) * (1.0 / p - 1.0 / q) + kappa / q
            })
            .sum::<f64>();
    let big_k = 1.0 / inv_k;
    let big_c = kappa * big_k;
    if !(big_c < 0.0) {
        return Err(Error::Inconsistent(format!(
            "constant C must be negative, got {big_c}"
        )));
    }
    Ok(MeasureConstants {
        kappa,
        big_k,
        big_c,
        quadrature_tolerance: QUADRATURE_TOLERANCE,
    })
}

/// `(κ, K, C)` for `params`.
pub fn compute_constants(params: &SystemParams) -> Result<MeasureConstants> {
    Ok(InvariantMeasure::new(params)?.constants())
}

/// Densities `(ρ0, ρ1)` for `params` with the supplied constants.
pub fn density_pair(params: &SystemParams, constants: &MeasureConstants) -> Result<DensityPair> {
    let dp = DensityPair::from_parts(*params, *constants, TailTable::build(params)?);
    dp.check_positive()?;
    Ok(dp)
}

/// The two densities on a uniform grid of `[0, 2π)` plus a pointwise evaluator.
#[derive(Debug, Clone)]
pub struct DensityPair {
    params: SystemParams,
    constants: MeasureConstants,
    table: TailTable,
    pub grid: Vec<f64>,
    pub rho0: Vec<f64>,
    pub rho1: Vec<f64>,
}

impl DensityPair {
    fn from_parts(params: SystemParams, constants: MeasureConstants, table: TailTable) -> Self {
        let b = params.b();
        let scale = -constants.big_c * params.beta() * (1.0 - params.u());
        let step = TAU / GRID_POINTS as f64;
        let mut grid = Vec::with_capacity(GRID_POINTS);
        let mut rho0 = Vec::with_capacity(GRID_POINTS);
        let mut rho1 = Vec::with_capacity(GRID_POINTS);
        for k in 0..GRID_POINTS {
            let th = k as f64 * step;
            let phi = scale * table.node(k);
            grid.push(th);
            rho0.push(phi / d0(th, b));
            rho1.push((constants.big_c - phi) / d1(th, b));
        }
        Self {
            params,
            constants,
            table,
            grid,
            rho0,
            rho1,
        }
    }

    fn check_positive(&self) -> Result<()> {
        let worst = self
            .rho0
            .iter()
            .chain(&self.rho1)
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if worst < -DENSITY_SLACK {
            return Err(Error::Inconsistent(format!("negative density {worst:e}")));
        }
        Ok(())
    }

    pub fn constants(&self) -> MeasureConstants {
        self.constants
    }

    /// `Φ = d0 ρ0`.
    pub fn phi(&self, theta: f64) -> Result<f64> {
        let c = self.constants.big_c;
        Ok(-c * self.params.beta() * (1.0 - self.params.u()) * self.table.scaled(theta)?)
    }

    /// `(ρ0(θ), ρ1(θ))`.
    pub fn eval(&self, theta: f64) -> Result<(f64, f64)> {
        let b = self.params.b();
        let phi = self.phi(theta)?;
        Ok((
            phi / d0(theta, b),
            (self.constants.big_c - phi) / d1(theta, b),
        ))
    }

    /// Mass of each mode `(∫ρ0, ∫ρ1)` by the periodic trapezoid rule on the grid.
    pub fn mode_masses(&self) -> (f64, f64) {
        let w = TAU / GRID_POINTS as f64;
        (
            self.rho0.iter().sum::<f64>() * w,
            self.rho1.iter().sum::<f64>() * w,
        )
    }

    /// Total mass by adaptive quadrature of the pointwise evaluator.
    pub fn total_mass(&self) -> Result<f64> {
        let mut failure = None;
        let f = |th: f64| match self.eval(th) {
            Ok((r0, r1)) => r0 + r1,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        };
        let r = integrate(f, 0.0, TAU, &OUTER_TOL)?;
        match failure {
            Some(e) => Err(e),
            None => Ok(r.value),
        }
    }

    /// Right-hand side of `Φ' = -βΦ(u/d0 + (1-u)/d1) + βC(1-u)/d1`.
    pub fn phi_ode_rhs(&self, theta: f64) -> Result<f64> {
        let (b, u, beta) = (self.params.b(), self.params.u(), self.params.beta());
        let phi = self.phi(theta)?;
        let (p, q) = (d0(theta, b), d1(theta, b));
        Ok(-beta * phi * (u / p + (1.0 - u) / q) + beta * self.constants.big_c * (1.0 - u) / q)
    }

    /// Max of `|Φ'(θ) - rhs(θ)|` with central differences of step `h`.
    pub fn phi_ode_residual(&self, thetas: &[f64], h: f64) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for &th in thetas {
            let fd = (self.phi(th + h)? - self.phi(th - h)?) / (2.0 * h);
            worst = worst.max((fd - self.phi_ode_rhs(th)?).abs());
        }
        Ok(worst)
    }
}

/// Compute χ by the closed formula and cross-check against `∫ 𝒜 dμ`.
pub fn lyapunov_chi(params: &SystemParams) -> Result<ChiResult> {
    let m = InvariantMeasure::new(params)?;
    let formula = m.chi_formula();
    let ergodic = m.chi_ergodic()?;
    let gap = (formula - ergodic).abs();
    let allowed = 1e-6_f64.max(1e-6 * formula.abs());
    if !(gap <= allowed) {
        return Err(Error::Inconsistent(format!(
            "χ routes disagree: formula {formula}, ergodic {ergodic}"
        )));
    }
    Ok(ChiResult {
        value: formula,
        method: ChiMethod::Quadrature,
        error: gap.max(QUADRATURE_TOLERANCE),
        params_echo: *params,
    })
}

/// Max over `f ∈ {cos kθ, sin kθ}` placed on one mode (zero on the other),
/// `k <= fourier_order`, of `|∫ L f dμ|`, with generator
/// `Lf(θ,i) = d_i ∂_θ f(θ,i) + λ_i (f(θ,1-i) - f(θ,i))`.
pub fn stationarity_residual(params: &SystemParams, fourier_order: usize) -> Result<f64> {
    let m = InvariantMeasure::new(params)?;
    let dp = m.density_pair()?;
    Ok(stationarity_residual_of(&dp, fourier_order))
}

pub fn stationarity_residual_of(dp: &DensityPair, fourier_order: usize) -> f64 {
    let p = &dp.params;
    let b = p.b();
    let lam = [p.lambda0(), p.lambda1()];
    let w = TAU / GRID_POINTS as f64;
    let mut worst: f64 = 0.0;
    for k in 0..=fourier_order {
        let kf = k as f64;
        for use_sin in [false, true] {
            if use_sin && k == 0 {
                continue;
            }
            for mode in Mode::BOTH {
                let i = mode.index();
                let mut acc = 0.0;
                for (j, &th) in dp.grid.iter().enumerate() {
                    let (g, dg) = if use_sin {
                        ((kf * th).sin(), kf * (kf * th).cos())
                    } else {
                        ((kf * th).cos(), -kf * (kf * th).sin())
                    };
                    let rho = [dp.rho0[j], dp.rho1[j]];
                    let d = drift_b(th, mode, b);
                    acc += (d * dg - lam[i] * g) * rho[i] + lam[1 - i] * g * rho[1 - i];
                }
                worst = worst.max((acc * w).abs());
            }
        }
    }
    worst
}

/// `γ = sqrt(1 + 4 / (b - 1/b)²)`.
pub fn gamma_b(b: f64) -> f64 {
    let s = b - 1.0 / b;
    (1.0 + 4.0 / (s * s)).sqrt()
}

/// `f(θ) = (b - 1/b) sin 2θ (1/d0 + 1/d1)`.
pub fn f_shear(theta: f64, b: f64) -> f64 {
    (b - 1.0 / b) * (2.0 * theta).sin() * (1.0 / d0(theta, b) + 1.0 / d1(theta, b))
}

/// Closed form of `∫_0^{π/2} f`: `(2/γ)·(b + 1/b)/(b - 1/b)·log|(γ-1)/(γ+1)|`.
pub fn f_integral_closed(b: f64) -> f64 {
    let g = gamma_b(b);
    2.0 / g * (b + 1.0 / b) / (b - 1.0 / b) * ((g - 1.0) / (g + 1.0)).abs().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FgDecomposition {
    pub f_integral_numeric: f64,
    pub f_integral_closed: f64,
    pub grid: Vec<f64>,
    /// `g(θ) = J(θ)/J(0)` on `grid`.
    pub g_values: Vec<f64>,
    /// `K ∫_0^π f g`; equals `χ + a`.
    pub k_times_fg: f64,
}

/// `∫_0^{π/2} f` two ways and `g` on a grid of `[0, π]`.
pub fn fg_decomposition(params: &SystemParams) -> Result<FgDecomposition> {
    let b = params.b();
    let numeric = integrate(
        |t| f_shear(t, b),
        0.0,
        PI / 2.0,
        &Tolerance::new(1e-14, 1e-13),
    )?
    .value;
    let m = InvariantMeasure::new(params)?;
    let t = m.table();
    let j0 = t.i_inf();
    let h = t.step();
    let grid: Vec<f64> = (0..=HALF_GRID).map(|k| k as f64 * h).collect();
    let g_values: Vec<f64> = (0..=HALF_GRID).map(|k| t.node(k) / j0).collect();
    let fg = (0..HALF_GRID)
        .map(|k| f_shear(k as f64 * h, b) * g_values[k])
        .sum::<f64>()
        * h;
    Ok(FgDecomposition {
        f_integral_numeric: numeric,
        f_integral_closed: f_integral_closed(b),
        grid,
        g_values,
        k_times_fg: m.constants().big_k * fg,
    })
}
