//! Modified Bessel function of the second kind, `K_nu(x)`, in log space.
//!
//! Temme's series handles `x <= 2` and a Steed-type continued fraction the
//! rest; both produce `K_mu` and `K_{mu+1}` for `|mu| <= 1/2`, lifted to the
//! requested order by the upward recurrence
//! `K_{nu+1} = K_{nu-1} + (2 nu / x) K_nu`, which is stable for K.
//!
//! The variance-gamma density evaluates this at order `lambda dt - 1/2`,
//! which sweeps through zero and negative orders; `K_{-nu} = K_nu` reduces
//! everything to `nu >= 0`.

use crate::{Error, Result};

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 20_000;

// Coefficients of 1/Gamma(x) = sum c_k x^k (Abramowitz & Stegun 6.1.34);
// used to build [1/Gamma(1-mu) -+ 1/Gamma(1+mu)] without cancellation.
const INV_GAMMA_C: [f64; 15] = [
    1.0,
    0.5772156649015329,
    -0.6558780715202538,
    -0.0420026350340952,
    0.1665386113822915,
    -0.0421977345555443,
    -0.0096219715278770,
    0.0072189432466630,
    -0.0011651675918591,
    -0.0002152416741149,
    0.0001280502823882,
    -0.0000201348547807,
    -0.0000012504934821,
    0.0000011330272320,
    -0.0000002056338417,
];

/// `gam1 = [1/Gamma(1-mu) - 1/Gamma(1+mu)]/(2 mu)` and
/// `gam2 = [1/Gamma(1-mu) + 1/Gamma(1+mu)]/2`, stable for |mu| <= 1/2.
fn chebyshev_gammas(mu: f64) -> (f64, f64) {
    let m2 = mu * mu;
    let mut gam1 = 0.0;
    let mut gam2 = 0.0;
    let mut pow = 1.0;
    let mut k = 0;
    while k + 1 < INV_GAMMA_C.len() {
        gam1 -= INV_GAMMA_C[k + 1] * pow; // odd-index coefficients
        gam2 += INV_GAMMA_C[k] * pow; // even-index coefficients
        pow *= m2;
        k += 2;
    }
    (gam1, gam2)
}

/// `(K_mu(x), K_{mu+1}(x))` for `|mu| <= 1/2`, `0 < x <= 2`, by Temme's
/// series.
fn temme_pair(mu: f64, x: f64) -> Result<(f64, f64)> {
    let x1 = 0.5 * x;
    let d = -x1.ln();
    let e = mu * d;
    let pimu = std::f64::consts::PI * mu;
    let fact = if pimu.abs() < 1e-12 { 1.0 } else { pimu / pimu.sin() };
    let fact2 = if e.abs() < 1e-12 { 1.0 } else { e.sinh() / e };
    let (gam1, gam2) = chebyshev_gammas(mu);
    let gampl = gam2 - mu * gam1; // 1/Gamma(1+mu)
    let gammi = gam2 + mu * gam1; // 1/Gamma(1-mu)
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let mut p = 0.5 * e.exp() / gampl;
    let mut q = 0.5 * (-e).exp() / gammi;
    let mut c = 1.0;
    let mut sum1 = p;
    let xx = x1 * x1;
    for k in 1..=MAX_ITER {
        let kf = k as f64;
        ff = (kf * ff + p + q) / (kf * kf - mu * mu);
        c *= xx / kf;
        p /= kf - mu;
        q /= kf + mu;
        let del = c * ff;
        sum += del;
        sum1 += c * (p - kf * ff);
        if del.abs() < sum.abs() * EPS {
            return Ok((sum, sum1 * 2.0 / x));
        }
    }
    Err(Error::Numerical("bessel K series did not converge".into()))
}

/// `(ln scale, K_mu * e^{-ln scale}, K_{mu+1} * e^{-ln scale})` for
/// `|mu| <= 1/2`, `x > 2`, by the Steed continued fraction. The scale
/// carries the `e^{-x}` decay so large `x` cannot underflow.
fn steed_pair(mu: f64, x: f64) -> Result<(f64, f64, f64)> {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu * mu;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    let mut done = false;
    for i in 2..=MAX_ITER {
        a -= 2.0 * (i as f64 - 1.0);
        c = -a * c / i as f64;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            done = true;
            break;
        }
    }
    if !done {
        return Err(Error::Numerical("bessel K continued fraction did not converge".into()));
    }
    let h = a1 * h;
    let kmu_hat = (std::f64::consts::PI / (2.0 * x)).sqrt() / s;
    let k1_hat = kmu_hat * (mu + x + 0.5 - h) / x;
    Ok((-x, kmu_hat, k1_hat))
}

/// `ln K_nu(x)` for real order `nu` and `x > 0`.
pub fn ln_k(nu: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() || !nu.is_finite() {
        return Err(Error::Value(format!("ln_k requires x > 0, got nu={nu}, x={x}")));
    }
    let nu = nu.abs();
    let nl = (nu + 0.5).floor() as usize;
    let mu = nu - nl as f64;
    let (mut ln_scale, mut kmu, mut k1) = if x <= 2.0 {
        let (a, b) = temme_pair(mu, x)?;
        (0.0, a, b)
    } else {
        steed_pair(mu, x)?
    };
    for j in 0..nl {
        let knew = kmu + (2.0 * (mu + j as f64 + 1.0) / x) * k1;
        kmu = k1;
        k1 = knew;
        if k1 > 1e250 {
            kmu /= 1e250;
            k1 /= 1e250;
            ln_scale += 250.0 * std::f64::consts::LN_10;
        }
    }
    // kmu now holds K_{mu + nl} = K_nu (up to the scale)
    Ok(ln_scale + kmu.ln())
}
