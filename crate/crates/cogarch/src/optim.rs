//! Derivative-free simplex minimizer used by the GMM and Levy-MLE stages.
//!
//! Plain Nelder-Mead with the standard reflection/expansion/contraction/
//! shrink coefficients. Objectives here are cheap and low-dimensional
//! (2..8 parameters), so robustness beats sophistication.

/// Stopping controls for [`nelder_mead`].
#[derive(Debug, Clone, Copy)]
pub struct NmOptions {
    pub max_iter: usize,
    /// Absolute spread `f_worst - f_best` below which the simplex is
    /// considered converged.
    pub f_tol: f64,
    /// Maximum simplex edge length below which the search stops.
    pub x_tol: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        NmOptions { max_iter: 2000, f_tol: 1e-8, x_tol: 1e-9 }
    }
}

/// Minimizer output; `x` is the best vertex found.
#[derive(Debug, Clone)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize `f` starting from `x0`, with the initial simplex displaced by
/// `scale[i]` along each coordinate.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    scale: &[f64],
    opts: &NmOptions,
) -> NmResult {
    let n = x0.len();
    assert!(n >= 1 && scale.len() == n);
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut verts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    verts.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += if scale[i] != 0.0 { scale[i] } else { 0.1 };
        verts.push(v);
    }
    let mut fvals: Vec<f64> = verts.iter().map(|v| f(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        // order vertices by objective
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&i, &j| fvals[i].partial_cmp(&fvals[j]).unwrap_or(std::cmp::Ordering::Equal));
        let best = idx[0];
        let worst = idx[n];
        let second_worst = idx[n - 1];

        let spread = fvals[worst] - fvals[best];
        let diam = verts
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&verts[best])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= opts.f_tol || diam <= opts.x_tol {
            converged = true;
            break;
        }

        // centroid of all but the worst vertex
        let mut centroid = vec![0.0; n];
        for (k, v) in verts.iter().enumerate() {
            if k != worst {
                for i in 0..n {
                    centroid[i] += v[i] / n as f64;
                }
            }
        }

        let reflect: Vec<f64> = (0..n)
            .map(|i| centroid[i] + alpha * (centroid[i] - verts[worst][i]))
            .collect();
        let f_r = f(&reflect);

        if f_r < fvals[best] {
            let expand: Vec<f64> = (0..n)
                .map(|i| centroid[i] + gamma * (reflect[i] - centroid[i]))
                .collect();
            let f_e = f(&expand);
            if f_e < f_r {
                verts[worst] = expand;
                fvals[worst] = f_e;
            } else {
                verts[worst] = reflect;
                fvals[worst] = f_r;
            }
        } else if f_r < fvals[second_worst] {
            verts[worst] = reflect;
            fvals[worst] = f_r;
        } else {
            let contract: Vec<f64> = if f_r < fvals[worst] {
                (0..n).map(|i| centroid[i] + rho * (reflect[i] - centroid[i])).collect()
            } else {
                (0..n).map(|i| centroid[i] + rho * (verts[worst][i] - centroid[i])).collect()
            };
            let f_c = f(&contract);
            if f_c < fvals[worst].min(f_r) {
                verts[worst] = contract;
                fvals[worst] = f_c;
            } else {
                // shrink toward the best vertex
                let best_v = verts[best].clone();
                for (k, v) in verts.iter_mut().enumerate() {
                    if k != best {
                        for i in 0..n {
                            v[i] = best_v[i] + sigma * (v[i] - best_v[i]);
                        }
                        fvals[k] = f(v);
                    }
                }
            }
        }
    }

    let (mut bi, mut bf) = (0, fvals[0]);
    for (k, &v) in fvals.iter().enumerate() {
        if v < bf {
            bi = k;
            bf = v;
        }
    }
    NmResult { x: verts[bi].clone(), fx: bf, iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let res = nelder_mead(
            |x| (x[0] - 1.5).powi(2) + 3.0 * (x[1] + 0.5).powi(2),
            &[0.0, 0.0],
            &[0.5, 0.5],
            &NmOptions { max_iter: 2000, f_tol: 1e-14, x_tol: 1e-10 },
        );
        assert!(res.converged);
        assert!((res.x[0] - 1.5).abs() < 1e-5, "{:?}", res.x);
        assert!((res.x[1] + 0.5).abs() < 1e-5, "{:?}", res.x);
    }

    #[test]
    fn rosenbrock_2d() {
        let res = nelder_mead(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &[0.1, 0.1],
            &NmOptions { max_iter: 5000, f_tol: 1e-14, x_tol: 1e-12 },
        );
        assert!((res.x[0] - 1.0).abs() < 1e-4);
        assert!((res.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn one_dimensional() {
        let res = nelder_mead(
            |x| (x[0].exp() - 2.0).powi(2),
            &[0.0],
            &[0.3],
            &NmOptions { max_iter: 2000, f_tol: 1e-14, x_tol: 1e-10 },
        );
        assert!((res.x[0] - std::f64::consts::LN_2).abs() < 1e-5);
    }
}
