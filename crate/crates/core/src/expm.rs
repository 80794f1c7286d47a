//! Matrix exponentials.
//!
//! [`general_matrix_exp`] is scaling-and-squaring with the degree-13 Padé
//! approximant (Higham 2005). [`exp2_closed`] is the exact formula for real
//! 2×2 matrices, used on hot simulation paths.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::system::Matrix2;

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371_920_351_148_152;

/// `e^{tM}` for a square `M`.
pub fn general_matrix_exp(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    if !t.is_finite() || m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix exponential input"));
    }
    let n = m.nrows();
    let a = m * t;
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * 2f64.powi(-squarings);

    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let b = &PADE13;

    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = &a * (&a6 * inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];

    let numer = &v + &u;
    let denom = &v - &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| Error::Inconsistent("singular Padé denominator".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

/// Exact `e^{tM}` for a real 2×2 matrix.
///
/// With `N = M - (tr M / 2) I` one has `N² = δ I`, `δ = (tr M/2)² - det M`,
/// so `e^{tN} = c(t) I + s(t) N` with hyperbolic or circular `c, s`.
pub fn exp2_closed(m: &Matrix2, t: f64) -> Matrix2 {
    let half_tr = 0.5 * m.trace();
    let n = Matrix2::new(
        m.0[0][0] - half_tr,
        m.0[0][1],
        m.0[1][0],
        m.0[1][1] - half_tr,
    );
    let delta = n.0[0][0] * n.0[0][0] + n.0[0][1] * n.0[1][0];
    let (c, s) = if delta > 0.0 {
        let w = delta.sqrt();
        ((w * t).cosh(), (w * t).sinh() / w)
    } else if delta < 0.0 {
        let w = (-delta).sqrt();
        ((w * t).cos(), (w * t).sin() / w)
    } else {
        (1.0, t)
    };
    let e = (half_tr * t).exp();
    Matrix2::new(
        e * (c + s * n.0[0][0]),
        e * s * n.0[0][1],
        e * s * n.0[1][0],
        e * (c + s * n.0[1][1]),
    )
}

pub fn to_dmatrix(m: &Matrix2) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[m.0[0][0], m.0[0][1], m.0[1][0], m.0[1][1]])
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Option<Matrix2> {
    if m.nrows() == 2 && m.ncols() == 2 {
        Some(Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{mode_flow, Mode, SystemParams};

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn zero_gives_identity() {
        let z = DMatrix::<f64>::zeros(4, 4);
        let e = general_matrix_exp(&z, 3.0).unwrap();
        assert_eq!(e, DMatrix::identity(4, 4));
    }

    #[test]
    fn planar_mode_matches_closed_form() {
        let p = SystemParams::new(0.15, 3.0, 1.0, 0.5).unwrap();
        let (a0, a1) = crate::system::build_matrices(&p);
        for (m, mode) in [(a0, Mode::Zero), (a1, Mode::One)] {
            for &t in &[1.0, 0.01, 17.0] {
                let e = general_matrix_exp(&to_dmatrix(&m), t).unwrap();
                let exact = to_dmatrix(&mode_flow(t, mode, &p));
                assert!(
                    rel_err(&e, &exact) < 1e-12,
                    "t={t}: {}",
                    rel_err(&e, &exact)
                );
                let c = to_dmatrix(&exp2_closed(&m, t));
                assert!(rel_err(&c, &exact) < 1e-13);
            }
        }
    }

    #[test]
    fn block_diagonal_preserved() {
        let mut m = DMatrix::<f64>::zeros(3, 3);
        m[(0, 0)] = -0.3;
        m[(0, 1)] = 2.0;
        m[(1, 0)] = -0.5;
        m[(1, 1)] = -0.3;
        m[(2, 2)] = -1.0;
        let e = general_matrix_exp(&m, 2.0).unwrap();
        assert!(e[(0, 2)].abs() < 1e-16 && e[(2, 0)].abs() < 1e-16);
        assert!(e[(1, 2)].abs() < 1e-16 && e[(2, 1)].abs() < 1e-16);
        assert!((e[(2, 2)] - (-2.0f64).exp()).abs() < 1e-15);
        let block = Matrix2::new(-0.3, 2.0, -0.5, -0.3);
        let exact = exp2_closed(&block, 2.0);
        for i in 0..2 {
            for j in 0..2 {
                assert!((e[(i, j)] - exact.0[i][j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn jordan_block_and_real_split() {
        // nilpotent part: exp(t [[λ,1],[0,λ]]) = e^{λt} [[1,t],[0,1]]
        let m = Matrix2::new(-0.5, 1.0, 0.0, -0.5);
        let e = exp2_closed(&m, 3.0);
        let s = (-1.5f64).exp();
        assert!(e.max_abs_diff(&Matrix2::new(s, 3.0 * s, 0.0, s)) < 1e-15);
        let g = general_matrix_exp(&to_dmatrix(&m), 3.0).unwrap();
        assert!(rel_err(&g, &to_dmatrix(&e)) < 1e-13);

        let d = Matrix2::new(-2.0, 0.0, 0.0, 0.5);
        let e = exp2_closed(&d, 1.3);
        assert!((e.0[0][0] - (-2.6f64).exp()).abs() < 1e-15);
        assert!((e.0[1][1] - (0.65f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        let m = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(
            general_matrix_exp(&m, 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
        let mut m = DMatrix::<f64>::zeros(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(
            general_matrix_exp(&m, 1.0),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn large_norm_scaling() {
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 40.0, -40.0, -1.0]);
        let e = general_matrix_exp(&m, 1.0).unwrap();
        let exact = to_dmatrix(&exp2_closed(&from_dmatrix(&m).unwrap(), 1.0));
        assert!((&e - &exact).abs().max() < 1e-12);
    }
}
