//! Dense linear-algebra kernels for small matrices: matrix exponential,
//! Sylvester/Lyapunov solves, and eigenvalue utilities.
//!
//! Everything here targets the model's companion matrices (dimension
//! q <= 16), so direct Kronecker-product solves and full Pade scaling and
//! squaring are the right tools.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vec64 = DVector<f64>;
pub type CMat = DMatrix<Complex64>;

/// Maximum matrix dimension accepted by [`expm`] and the solvers.
pub const DIM_CAP: usize = 16;

// Pade numerator coefficients for degrees 3, 5, 7, 9, 13 and the matching
// 1-norm thresholds (Higham 2005).
const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17_297_280.0, 8_648_640.0, 1_995_840.0, 277_200.0, 25_200.0, 1_512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17_643_225_600.0, 8_821_612_800.0, 2_075_673_600.0, 302_702_400.0, 30_270_240.0,
    2_162_160.0, 110_880.0, 3_960.0, 90.0, 1.0,
];
const B13: [f64; 14] = [
    64_764_752_532_480_000.0, 32_382_376_266_240_000.0, 7_771_770_303_897_600.0,
    1_187_353_796_428_800.0, 129_060_195_264_000.0, 10_559_470_521_600.0, 670_442_572_800.0,
    33_522_128_640.0, 1_323_241_920.0, 40_840_800.0, 960_960.0, 16_380.0, 182.0, 1.0,
];
const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.539398330063230e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068;
const THETA13: f64 = 5.371920351148152;

fn norm_1(m: &Mat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(M)` by Pade approximation with scaling and squaring.
///
/// Relative error is at unit-roundoff level for well-conditioned inputs;
/// the acceptance suite pins 1e-10 against an independent Taylor oracle.
pub fn expm(m: &Mat) -> Result<Mat> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Value("expm requires a square matrix".into()));
    }
    if n == 0 || n > DIM_CAP {
        return Err(Error::Value(format!("expm dimension {n} outside 1..={DIM_CAP}")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("expm input has non-finite entries".into()));
    }
    // scalar fast path: the q = 1 model hits this on every simulation step
    if n == 1 {
        return Ok(Mat::from_element(1, 1, m[(0, 0)].exp()));
    }
    let norm = norm_1(m);
    let (coeffs, scaled, s): (&[f64], Mat, u32) = if norm <= THETA9 {
        let c: &[f64] = if norm <= THETA3 {
            &B3
        } else if norm <= THETA5 {
            &B5
        } else if norm <= THETA7 {
            &B7
        } else {
            &B9
        };
        (c, m.clone(), 0)
    } else {
        let s = ((norm / THETA13).log2().ceil().max(0.0)) as u32;
        (&B13, m / 2f64.powi(s as i32), s)
    };

    // u = odd part (in A), v = even part; exp ~ (v - u)^{-1} (v + u)
    let a2 = &scaled * &scaled;
    let eye = Mat::identity(n, n);
    let (u, v) = if coeffs.len() < 14 {
        let mut even = eye.clone() * coeffs[0];
        let mut odd = eye.clone() * coeffs[1];
        let mut pow = a2.clone();
        let mut k = 2;
        while k < coeffs.len() {
            even += &pow * coeffs[k];
            if k + 1 < coeffs.len() {
                odd += &pow * coeffs[k + 1];
            }
            k += 2;
            if k < coeffs.len() {
                pow = &pow * &a2;
            }
        }
        (&scaled * odd, even)
    } else {
        let a4 = &a2 * &a2;
        let a6 = &a2 * &a4;
        let b = &B13;
        let u_hi = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
        let u_lo = &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &eye * b[1];
        let v_hi = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
        let v_lo = &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &eye * b[0];
        (&scaled * (u_hi + u_lo), v_hi + v_lo)
    };

    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| Error::Numerical("expm Pade denominator is singular".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("expm overflowed".into()));
    }
    Ok(r)
}

/// Solve the Sylvester equation `A X + X B = C` through the Kronecker
/// linear system `(I (x) A + B' (x) I) vec(X) = vec(C)`.
///
/// Exact to solver precision for the tiny dimensions used here, which makes
/// Bartels-Stewart unnecessary.
pub fn solve_sylvester(a: &Mat, b: &Mat, c: &Mat) -> Result<Mat> {
    let m = a.nrows();
    let n = b.nrows();
    if a.ncols() != m || b.ncols() != n || c.nrows() != m || c.ncols() != n {
        return Err(Error::Value("sylvester dimension mismatch".into()));
    }
    if m > DIM_CAP || n > DIM_CAP {
        return Err(Error::Value(format!("sylvester dimension above {DIM_CAP}")));
    }
    let mut k = Mat::zeros(m * n, m * n);
    // vec is column-stacked: block (j,i) of I (x) A is A when i == j
    for j in 0..n {
        for r in 0..m {
            for s in 0..m {
                k[(j * m + r, j * m + s)] += a[(r, s)];
            }
        }
    }
    // B' (x) I: block (i,j) is b[(j,i)] * I
    for i in 0..n {
        for j in 0..n {
            let w = b[(j, i)];
            if w != 0.0 {
                for r in 0..m {
                    k[(i * m + r, j * m + r)] += w;
                }
            }
        }
    }
    let rhs = Vec64::from_iterator(m * n, c.iter().copied());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("sylvester operator is singular".into()))?;
    Ok(Mat::from_iterator(m, n, sol.iter().copied()))
}

/// Solve the continuous Lyapunov equation `A X + X A' = C`.
pub fn solve_lyapunov(a: &Mat, c: &Mat) -> Result<Mat> {
    solve_sylvester(a, &a.transpose(), c)
}

/// Eigenvalues sorted by descending real part (ties by descending
/// imaginary part).
pub fn eigenvalues_sorted(m: &Mat) -> Result<Vec<Complex64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Value("eigenvalues require a square matrix".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigenvalue input has non-finite entries".into()));
    }
    let mut ev: Vec<Complex64> = m.clone().complex_eigenvalues().iter().copied().collect();
    if ev.iter().any(|l| !l.re.is_finite() || !l.im.is_finite()) {
        return Err(Error::Numerical("eigensolver failed to converge".into()));
    }
    ev.sort_by(|x, y| {
        y.re.partial_cmp(&x.re)
            .unwrap()
            .then(y.im.partial_cmp(&x.im).unwrap())
    });
    Ok(ev)
}

/// Largest real part among the eigenvalues of `m`.
pub fn spectral_abscissa(m: &Mat) -> Result<f64> {
    Ok(eigenvalues_sorted(m)?[0].re)
}

/// Vandermonde matrix of the eigenvalues, column j = (1, l_j, ..., l_j^{q-1})'.
pub fn vandermonde(eigenvalues: &[Complex64]) -> CMat {
    let q = eigenvalues.len();
    CMat::from_fn(q, q, |i, j| eigenvalues[j].powu(i as u32))
}

/// Inverse of a complex matrix via LU; `None` when numerically singular.
pub fn invert_complex(m: &CMat) -> Option<CMat> {
    m.clone().lu().try_inverse()
}
