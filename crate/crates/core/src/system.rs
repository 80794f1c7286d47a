//! Parameters, matrices and exact scalar coefficients of the planar switched
//! system `dX/dt = A_{I_t} X_t`.
//!
//! With `a > 0` and `b > 1` the two modes are
//!
//! ```text
//! A0 = [ -a    b  ]      A1 = [ -a   1/b ]
//!      [ -1/b  -a ]           [ -b   -a  ]
//! ```
//!
//! Both have eigenvalues `-a ± i`; each flow is a scaled elliptic rotation
//! turning clockwise. Writing `e_θ = (cos θ, sin θ)`, the angle obeys
//! `dθ/dt = d_i(θ)` and the log-radius obeys `d log r / dt = 𝒜(θ, i)`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// The quadruple `(a, b, β, u)`.
///
/// Jump rates of the mode chain are `λ0 = β u` (leaving mode 0) and
/// `λ1 = β (1 - u)` (leaving mode 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    a: f64,
    b: f64,
    beta: f64,
    u: f64,
    degenerate: bool,
}

impl SystemParams {
    /// Standard parameters: `a > 0`, `b > 1`, `β > 0`, `0 < u < 1`.
    pub fn new(a: f64, b: f64, beta: f64, u: f64) -> Result<Self> {
        let p = Self {
            a,
            b,
            beta,
            u,
            degenerate: false,
        };
        p.validate()?;
        Ok(p)
    }

    /// Admits `0 < b <= 1`. With `b = 1` both modes coincide and every
    /// exponent equals `-a`, which makes it a convenient exact test case.
    pub fn degenerate(a: f64, b: f64, beta: f64, u: f64) -> Result<Self> {
        let p = Self {
            a,
            b,
            beta,
            u,
            degenerate: true,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(invalid(
                "a",
                format!("must be finite and > 0, got {}", self.a),
            ));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(invalid(
                "beta",
                format!("must be finite and > 0, got {}", self.beta),
            ));
        }
        if !(self.u > 0.0 && self.u < 1.0) {
            return Err(invalid("u", format!("must lie in (0, 1), got {}", self.u)));
        }
        if !self.b.is_finite() {
            return Err(invalid("b", "must be finite"));
        }
        if self.degenerate {
            if self.b <= 0.0 {
                return Err(invalid("b", format!("must be > 0, got {}", self.b)));
            }
        } else if self.b <= 1.0 {
            return Err(invalid(
                "b",
                format!(
                    "must be > 1 (use the degenerate constructor for b <= 1), got {}",
                    self.b
                ),
            ));
        }
        Ok(())
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Rate of leaving mode 0.
    pub fn lambda0(&self) -> f64 {
        self.beta * self.u
    }

    /// Rate of leaving mode 1.
    pub fn lambda1(&self) -> f64 {
        self.beta * (1.0 - self.u)
    }

    pub fn rate(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Zero => self.lambda0(),
            Mode::One => self.lambda1(),
        }
    }

    fn rebuild(&self, a: f64, b: f64, beta: f64, u: f64) -> Result<Self> {
        if self.degenerate {
            Self::degenerate(a, b, beta, u)
        } else {
            Self::new(a, b, beta, u)
        }
    }

    pub fn with_a(&self, a: f64) -> Result<Self> {
        self.rebuild(a, self.b, self.beta, self.u)
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        self.rebuild(self.a, self.b, beta, self.u)
    }

    pub fn with_u(&self, u: f64) -> Result<Self> {
        self.rebuild(self.a, self.b, self.beta, u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    Zero,
    One,
}

impl Mode {
    pub fn flip(self) -> Self {
        match self {
            Mode::Zero => Mode::One,
            Mode::One => Mode::Zero,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Mode::Zero => 0,
            Mode::One => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Mode::Zero),
            1 => Some(Mode::One),
            _ => None,
        }
    }

    pub const BOTH: [Mode; 2] = [Mode::Zero, Mode::One];
}

/// Real 2×2 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Matrix2(pub [[f64; 2]; 2]);

impl Matrix2 {
    pub const IDENTITY: Matrix2 = Matrix2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn new(m00: f64, m01: f64, m10: f64, m11: f64) -> Self {
        Matrix2([[m00, m01], [m10, m11]])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn mul(&self, rhs: &Matrix2) -> Matrix2 {
        let a = &self.0;
        let b = &rhs.0;
        Matrix2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }

    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        [
            self.0[0][0] * x[0] + self.0[0][1] * x[1],
            self.0[1][0] * x[0] + self.0[1][1] * x[1],
        ]
    }

    pub fn scale(&self, s: f64) -> Matrix2 {
        Matrix2([
            [s * self.0[0][0], s * self.0[0][1]],
            [s * self.0[1][0], s * self.0[1][1]],
        ])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Matrix2) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    /// Singular values `(σ_max, σ_min)` in closed form.
    pub fn singular_values(&self) -> (f64, f64) {
        let [[p, q], [r, s]] = self.0;
        let fro2 = p * p + q * q + r * r + s * s;
        let det = (p * s - q * r).abs();
        // σ_max² + σ_min² = ‖M‖_F², σ_max σ_min = |det|
        let disc = ((fro2 - 2.0 * det) * (fro2 + 2.0 * det)).max(0.0).sqrt();
        let smax = ((fro2 + disc) / 2.0).sqrt();
        let smin = if smax > 0.0 { det / smax } else { 0.0 };
        (smax, smin)
    }

    /// Spectral (operator 2-) norm.
    pub fn norm2(&self) -> f64 {
        self.singular_values().0
    }
}

pub fn norm(x: [f64; 2]) -> f64 {
    x[0].hypot(x[1])
}

/// Unwound angle together with its revolution count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleLift {
    pub theta: f64,
    pub winding: i64,
}

impl AngleLift {
    pub fn new(theta: f64) -> Self {
        Self {
            theta,
            winding: (theta / TAU).floor() as i64,
        }
    }

    /// Angle reduced to `[0, 2π)`.
    pub fn reduced(&self) -> f64 {
        let r = self.theta.rem_euclid(TAU);
        // rem_euclid can round up to exactly TAU for tiny negative inputs
        if r >= TAU {
            0.0
        } else {
            r
        }
    }
}

/// `(A0, A1)`.
pub fn build_matrices(params: &SystemParams) -> (Matrix2, Matrix2) {
    let a = params.a();
    let b = params.b();
    (
        Matrix2::new(-a, b, -1.0 / b, -a),
        Matrix2::new(-a, 1.0 / b, -b, -a),
    )
}

/// `d_i(θ) = ⟨A_i e_θ, e_{θ+π/2}⟩`; always in `[-max(b, 1/b), -min(b, 1/b)]`.
pub fn angular_drift(theta: f64, mode: Mode, params: &SystemParams) -> f64 {
    drift_b(theta, mode, params.b())
}

pub(crate) fn drift_b(theta: f64, mode: Mode, b: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let (s2, c2) = (s * s, c * c);
    match mode {
        Mode::Zero => -b * s2 - c2 / b,
        Mode::One => -s2 / b - b * c2,
    }
}

/// `𝒜(θ, i) = ⟨A_i e_θ, e_θ⟩ = -a ± ((b - 1/b)/2) sin 2θ`, plus sign for mode 0.
pub fn radial_drift(theta: f64, mode: Mode, params: &SystemParams) -> f64 {
    let b = params.b();
    let shear = 0.5 * (b - 1.0 / b) * (2.0 * theta).sin();
    match mode {
        Mode::Zero => -params.a() + shear,
        Mode::One => -params.a() - shear,
    }
}

/// Continuous lift of `atan2(s·sin θ, cos θ)` with `w(θ + π) = w(θ) + π`.
///
/// For `s = b` this is the phase of the mode-0 rotation: along the mode-0
/// flow `w(θ_t) = w(θ_0) - t`. For `s = 1/b` it plays the same role for
/// mode 1, and the two lifts are inverse to each other.
pub fn scaled_angle(theta: f64, s: f64) -> f64 {
    let k = (theta / PI).floor();
    let r = theta - k * PI;
    let (sn, cs) = r.sin_cos();
    (s * sn).atan2(cs) + k * PI
}

/// Primitive vanishing at zero of `-(u/d0 + (1-u)/d1)`.
///
/// On `[0, π)` this is `u·arctan(b tan θ) + (1-u)·arctan(tan θ / b)` with
/// the branch matched by continuity past `π/2` (evaluated via `atan2`, so
/// `θ = π/2` needs no special case), then extended by
/// `v(θ + π) = v(θ) + π`. The extension is odd, so negative angles work too.
pub fn v_function(theta: f64, params: &SystemParams) -> f64 {
    v_bu(theta, params.b(), params.u())
}

pub(crate) fn v_bu(theta: f64, b: f64, u: f64) -> f64 {
    let k = (theta / PI).floor();
    let r = theta - k * PI;
    let (sn, cs) = r.sin_cos();
    u * (b * sn).atan2(cs) + (1.0 - u) * (sn / b).atan2(cs) + k * PI
}

/// Angle reached after flowing `t` in `mode` from the unwound angle `theta`.
pub fn evolve_angle(theta: f64, t: f64, mode: Mode, b: f64) -> f64 {
    let s = match mode {
        Mode::Zero => b,
        Mode::One => 1.0 / b,
    };
    scaled_angle(scaled_angle(theta, s) - t, 1.0 / s)
}

/// Rotation factor `B_i(t)` of the mode-`i` flow (`e^{tA_i} = e^{-at} B_i(t)`).
pub fn rotation_part(t: f64, mode: Mode, b: f64) -> Matrix2 {
    let (s, c) = t.sin_cos();
    match mode {
        Mode::Zero => Matrix2::new(c, b * s, -s / b, c),
        Mode::One => Matrix2::new(c, s / b, -b * s, c),
    }
}

/// `e^{tA_i}` in closed form.
pub fn mode_flow(t: f64, mode: Mode, params: &SystemParams) -> Matrix2 {
    rotation_part(t, mode, params.b()).scale((-params.a() * t).exp())
}
