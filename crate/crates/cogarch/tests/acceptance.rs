//! Acceptance suite: one test per release gate, each printing a PASS line
//! with the measured quantities (run with `--nocapture` to see them all).

use cogarch::estimate::{gmm, recover_noise, GmmOptions, IncrementSeries, Objective, Recover};
use cogarch::levy::{fit_levy_mle, LevyMoments, LevySpec};
use cogarch::linalg::{expm, Mat, Vec64};
use cogarch::model::{build_spec, poly_from_roots, CogarchSpec};
use cogarch::moments::{acf_curve, lyapunov_integral, theoretical_second_moment};
use cogarch::simulate::{mixed_with_increments, simulate_euler, simulate_mixed, SamplingGrid};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn cp_unit() -> LevySpec {
    LevySpec::CompoundPoissonNormal { lambda: 1.0, eta: 0.0, sig2: 1.0 }
}

fn vg_unit() -> LevySpec {
    LevySpec::VarianceGamma { lambda: 1.0, alpha: SQRT2, beta: 0.0, mu0: 0.0 }
}

/// The compound-Poisson design of the reference experiments:
/// a1 = 0.038, b1 = 0.053, a0 = 0.04/0.053.
fn cp_design() -> CogarchSpec {
    build_spec(1, 1, &[0.038], &[0.053], 0.04 / 0.053, cp_unit()).unwrap()
}

fn vg_design() -> CogarchSpec {
    build_spec(1, 1, &[0.038], &[0.053], 0.04 / 0.053, vg_unit()).unwrap()
}

fn design_grid() -> SamplingGrid {
    SamplingGrid { terminal: 1600.0, n: 24000 }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Batch-means standard error of the mean of a serially correlated series.
fn batch_se(x: &[f64], n_batches: usize) -> f64 {
    let len = x.len() / n_batches * n_batches;
    let bs = len / n_batches;
    let means: Vec<f64> = x[..len].chunks(bs).map(mean).collect();
    sd(&means) / (n_batches as f64).sqrt()
}

/// Criterion 1: the documented Euler pathology. With a1 = 0.038, b1 = 301,
/// a0 = 0.01 and a symmetric variance-gamma driver on T = 5, n = 750
/// (|1 - b1 dt| = 1.0067 > 1), the Euler path oscillates into negative
/// variance while the mixed scheme on the same increments stays at or above
/// the floor a0.
#[test]
fn criterion_1_euler_pathology() {
    let spec = build_spec(1, 1, &[0.038], &[301.0], 0.01, vg_unit()).unwrap();
    let grid = SamplingGrid { terminal: 5.0, n: 750 };
    let seed = 3u64; // fixed; verified to exhibit the divergence
    let te = simulate_euler(&spec, &grid, None, seed).unwrap();
    assert!(te.unstable, "euler path not flagged unstable");
    assert!(te.min_v() < 0.0, "euler min V = {} not negative", te.min_v());
    let tm = mixed_with_increments(&spec, &grid, None, &te.dl).unwrap();
    assert!(!tm.unstable);
    assert!(tm.min_v() >= 0.01 - 1e-12, "mixed min V = {}", tm.min_v());
    println!(
        "criterion 1 PASS: euler unstable (min V = {:.4}), mixed min V = {:.6} >= a0 = 0.01",
        te.min_v(),
        tm.min_v()
    );
}

/// Criterion 2: the sample mean of squared one-step increments of a mixed
/// path on the CP design matches the theoretical second moment
/// (8/3 per unit time) within 3 batch-means standard errors.
#[test]
fn criterion_2_second_moment_match() {
    let spec = cp_design();
    let grid = design_grid();
    let tr = simulate_mixed(&spec, &grid, None, 2024).unwrap();
    let sq: Vec<f64> = tr.g.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).collect();
    let lm = LevyMoments { mu: 1.0, rho: 3.0 };
    let want = theoretical_second_moment(&spec, &lm, grid.dt()).unwrap();
    assert!((want - 8.0 / 3.0 * grid.dt()).abs() < 1e-12);
    let got = mean(&sq);
    let se = batch_se(&sq, 60);
    assert!(
        (got - want).abs() <= 3.0 * se,
        "second moment {got} vs {want} (3 se = {})",
        3.0 * se
    );
    println!(
        "criterion 2 PASS: mean squared increment {got:.5} vs theoretical {want:.5} (se {se:.5})"
    );
}

/// Independent scalar closed form of the (1,1) squared-return
/// autocorrelation; plain arithmetic, no matrix code.
fn closed_form_rho_11(a1: f64, b1: f64, mu: f64, rho: f64, rt: f64, ht: f64) -> f64 {
    let psi = b1 - mu * a1;
    let x = (-psi * rt).exp();
    let vbar_sq_rel = 1.0 - rho * a1 * a1 / (2.0 * psi);
    let gam0 = 2.0 * mu * mu * rt * rt * vbar_sq_rel
        + rho * (rt + 3.0 * mu * a1 * (2.0 * b1 - mu * a1) * (psi * rt - 1.0 + x) / psi.powi(3));
    let coef = rho * mu * a1 * (2.0 * b1 - mu * a1) * (1.0 - x) * (1.0 - x) / (2.0 * psi.powi(3));
    coef * (-psi * (ht - rt)).exp() / gam0
}

/// Criterion 3: the general matrix ACF pipeline equals the independently
/// coded (1,1) scalar closed form to relative error 1e-8 for h = 1..20 on
/// three parameter sets.
#[test]
fn criterion_3_acf_oracle_equivalence() {
    let sets = [(0.038, 0.053, 3.0), (0.02, 0.08, 3.0), (0.05, 0.12, 4.5)];
    let mut worst: f64 = 0.0;
    for (a1, b1, rho) in sets {
        let spec = build_spec(1, 1, &[a1], &[b1], 1.0, cp_unit()).unwrap();
        let lm = LevyMoments { mu: 1.0, rho };
        let curve = acf_curve(&spec, &lm, 1, 20, 1.0).unwrap();
        for h in 1..=20usize {
            let want = closed_form_rho_11(a1, b1, 1.0, rho, 1.0, h as f64);
            let got = curve.autocorr[h - 1];
            let rel = ((got - want) / want).abs();
            worst = worst.max(rel);
            assert!(rel <= 1e-8, "(a1={a1}, b1={b1}, rho={rho}) h={h}: {got} vs {want}");
        }
    }
    println!("criterion 3 PASS: max relative error {worst:.2e} over 3 parameter sets, h = 1..20");
}

/// Criterion 4: Lyapunov residuals below 1e-10 and matrix exponentials
/// matching a 60-term Taylor oracle to 1e-10 on 100 random stable
/// companion matrices with q <= 4.
#[test]
fn criterion_4_lyapunov_expm_oracles() {
    fn taylor_expm(m: &Mat, terms: usize) -> Mat {
        let n = m.nrows();
        let mut sum = Mat::identity(n, n);
        let mut term = Mat::identity(n, n);
        for k in 1..=terms {
            term = &term * m / k as f64;
            sum += &term;
        }
        sum
    }
    let mut rng = ChaCha12Rng::seed_from_u64(4242);
    let (mut worst_res, mut worst_exp): (f64, f64) = (0.0, 0.0);
    for trial in 0..100 {
        let q = 1 + trial % 4;
        let mut roots: Vec<f64> = (0..q).map(|_| -rng.gen_range(0.05..0.8)).collect();
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for i in 1..q {
            if (roots[i] - roots[i - 1]).abs() < 0.02 {
                roots[i] += 0.03;
            }
        }
        let poly = poly_from_roots(&roots);
        let mut a = Mat::zeros(q, q);
        for i in 0..q.saturating_sub(1) {
            a[(i, i + 1)] = 1.0;
        }
        for j in 0..q {
            a[(q - 1, j)] = -poly[q - j];
        }
        let m = lyapunov_integral(&a).unwrap();
        let mut ee = Mat::zeros(q, q);
        ee[(q - 1, q - 1)] = 1.0;
        let res = (&a * &m + &m * a.transpose() + ee).amax();
        worst_res = worst_res.max(res);
        assert!(res <= 1e-10, "trial {trial}: residual {res}");
        let diff = (expm(&a).unwrap() - taylor_expm(&a, 60)).amax();
        worst_exp = worst_exp.max(diff);
        assert!(diff <= 1e-10, "trial {trial}: expm vs series {diff}");
    }
    println!(
        "criterion 4 PASS: max Lyapunov residual {worst_res:.2e}, max expm-vs-series {worst_exp:.2e}"
    );
}

/// Criterion 5: L2-GMM recovery on the CP design over 10 seeds. Each run
/// must put the truth within 3 reported standard errors per coordinate,
/// with standard errors within a factor 3 of the reference magnitudes
/// (0.029 for a1, 0.069 for b1), in at least 8 of 10 runs. The lag window
/// is widened to 400 (the exposed `lag_max` knob); at the default sqrt(N)
/// the decay of the ACF across the window is too small to identify b1 - a1
/// reliably at this sample size.
#[test]
fn criterion_5_estimation_recovery() {
    let spec = cp_design();
    let grid = design_grid();
    let (a_true, b_true) = (0.038, 0.053);
    let (se_a_ref, se_b_ref) = (0.029, 0.069);
    let mut passed = 0;
    let mut lines = Vec::new();
    for seed in 1..=10u64 {
        let tr = simulate_mixed(&spec, &grid, None, seed).unwrap();
        let series = IncrementSeries::new(tr.g, grid.dt(), 1, Some(400)).unwrap();
        let fit = gmm(
            series,
            &spec,
            &GmmOptions { starts: 3, seed: 1000 + seed, ..Default::default() },
        )
        .unwrap();
        let (b1, a1) = (fit.b[0], fit.a[0]);
        let (se_b, se_a) = (fit.std_errors[0], fit.std_errors[1]);
        let ok = match (se_a, se_b) {
            (Some(sa), Some(sb)) => {
                (a1 - a_true).abs() <= 3.0 * sa
                    && (b1 - b_true).abs() <= 3.0 * sb
                    && sa >= se_a_ref / 3.0
                    && sa <= se_a_ref * 3.0
                    && sb >= se_b_ref / 3.0
                    && sb <= se_b_ref * 3.0
            }
            _ => false,
        };
        passed += ok as usize;
        lines.push(format!(
            "  seed {seed}: a1 = {a1:.4} (se {:?}), b1 = {b1:.4} (se {:?}) -> {}",
            se_a.map(|s| (s * 1e4).round() / 1e4),
            se_b.map(|s| (s * 1e4).round() / 1e4),
            if ok { "ok" } else { "MISS" }
        ));
    }
    for l in &lines {
        println!("{l}");
    }
    assert!(passed >= 8, "only {passed}/10 runs recovered the truth:\n{}", lines.join("\n"));
    println!("criterion 5 PASS: {passed}/10 runs within 3 se with reference-scale errors");
}

/// Criterion 6: noise recovery at the true coefficients reproduces the
/// stored driver increments (correlation >= 0.99) with the right scale
/// (sd within 5% of sqrt(mu dt)).
#[test]
fn criterion_6_noise_recovery_roundtrip() {
    let spec = cp_design();
    let grid = design_grid();
    let tr = simulate_mixed(&spec, &grid, None, 606).unwrap();
    let rec = recover_noise(&spec, &tr.g, grid.dt(), 1.0).unwrap();
    let n = rec.increments.len() as f64;
    let (mx, my) = (mean(&rec.increments), mean(&tr.dl));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in rec.increments.iter().zip(&tr.dl) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    let corr = sxy / (sxx.sqrt() * syy.sqrt());
    let sd_rec = (sxx / n).sqrt();
    let want_sd = grid.dt().sqrt();
    assert!(corr >= 0.99, "correlation {corr}");
    assert!(
        (sd_rec - want_sd).abs() <= 0.05 * want_sd,
        "sd {sd_rec} vs sqrt(dt) {want_sd}"
    );
    println!(
        "criterion 6 PASS: correlation {corr:.5}, increment sd {sd_rec:.5} vs sqrt(dt) {want_sd:.5}"
    );
}

/// Criterion 7: Levy MLE sanity on recovered increments. Compound Poisson
/// intensity lands in [0.8, 1.25]; variance-gamma alpha in [1.2, 1.7].
#[test]
fn criterion_7_levy_mle_sanity() {
    let grid = design_grid();
    // CP branch: recovered increments from the criterion-6 configuration
    let spec_cp = cp_design();
    let tr = simulate_mixed(&spec_cp, &grid, None, 606).unwrap();
    let rec = recover_noise(&spec_cp, &tr.g, grid.dt(), 1.0).unwrap();
    let fit = fit_levy_mle(spec_cp.levy(), &rec.increments, grid.dt(), None, None).unwrap();
    let lambda_hat = match fit.spec {
        LevySpec::CompoundPoissonNormal { lambda, .. } => lambda,
        _ => unreachable!(),
    };
    assert!((0.8..=1.25).contains(&lambda_hat), "lambda {lambda_hat}");

    // VG branch: same design driven by the variance gamma
    let spec_vg = vg_design();
    let tv = simulate_mixed(&spec_vg, &grid, None, 707).unwrap();
    let rec_vg = recover_noise(&spec_vg, &tv.g, grid.dt(), 1.0).unwrap();
    let fit_vg = fit_levy_mle(spec_vg.levy(), &rec_vg.increments, grid.dt(), None, None).unwrap();
    let alpha_hat = match fit_vg.spec {
        LevySpec::VarianceGamma { alpha, .. } => alpha,
        _ => unreachable!(),
    };
    assert!((1.2..=1.7).contains(&alpha_hat), "alpha {alpha_hat}");
    println!("criterion 7 PASS: lambda_hat = {lambda_hat:.4} in [0.8, 1.25], alpha_hat = {alpha_hat:.4} in [1.2, 1.7]");
}

/// Criterion 8: the higher-order design (q = 2, p = 1; b = (1.5, 0.5),
/// a1 = 0.1, a0 = 0.5) simulates stably and the L2 fit reproduces the
/// qualitative ordering b1 >> b2 with a1 of order 1e-2..1e-1.
#[test]
fn criterion_8_higher_order_model() {
    let spec = build_spec(1, 2, &[0.1], &[1.5, 0.5], 0.5, cp_unit()).unwrap();
    let grid = design_grid();
    let tr = simulate_mixed(&spec, &grid, None, 42).unwrap();
    assert!(!tr.unstable);
    assert!(tr.min_v() >= 0.5 - 1e-12, "min V {}", tr.min_v());
    let series = IncrementSeries::new(tr.g, grid.dt(), 1, None).unwrap();
    let fit = gmm(series, &spec, &GmmOptions { starts: 3, seed: 5042, ..Default::default() }).unwrap();
    let (b1, b2, a1) = (fit.b[0], fit.b[1], fit.a[0]);
    assert!(b1 > b2, "ordering violated: b1 = {b1}, b2 = {b2}");
    assert!(b1 >= 2.0 * b2, "b1 = {b1} not well above b2 = {b2}");
    assert!((0.005..=0.5).contains(&a1), "a1 = {a1} outside the plausible decade");
    println!("criterion 8 PASS: stable path; b1 = {b1:.4} >> b2 = {b2:.4}, a1 = {a1:.4}");
}

/// Criterion 9: raw returns are white. Sample autocorrelations of one-step
/// increments at lags 1..10 stay within 4 heteroskedasticity-robust
/// standard errors of zero.
#[test]
fn criterion_9_raw_return_whiteness() {
    let spec = cp_design();
    let grid = design_grid();
    let tr = simulate_mixed(&spec, &grid, None, 909).unwrap();
    let x: Vec<f64> = tr.g.windows(2).map(|w| w[1] - w[0]).collect();
    let n = x.len();
    let mx = mean(&x);
    let denom: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    for h in 1..=10usize {
        let num: f64 = (0..n - h).map(|i| (x[i + h] - mx) * (x[i] - mx)).sum();
        let rho = num / denom;
        // robust variance of rho_hat: sum x_t^2 x_{t+h}^2 / (sum x^2)^2
        let var: f64 = (0..n - h)
            .map(|i| (x[i + h] - mx).powi(2) * (x[i] - mx).powi(2))
            .sum::<f64>()
            / (denom * denom);
        let se = var.sqrt();
        assert!(rho.abs() <= 4.0 * se, "lag {h}: rho = {rho}, 4 se = {}", 4.0 * se);
    }
    println!("criterion 9 PASS: raw-return ACF at lags 1..10 within 4 robust se of zero");
}

/// Criterion 10: the full pipeline closes. Simulate, estimate with noise
/// recovery, then re-simulate with the recovered increments at the fitted
/// coefficients: the observed path is reproduced to 1e-6 in sup norm.
#[test]
fn criterion_10_end_to_end_roundtrip() {
    let spec = cp_design();
    let grid = design_grid();
    let tr = simulate_mixed(&spec, &grid, None, 1010).unwrap();
    let series = IncrementSeries::new(tr.g.clone(), grid.dt(), 1, Some(400)).unwrap();
    let fit = gmm(
        series,
        &spec,
        &GmmOptions {
            starts: 3,
            seed: 10020,
            recover: Recover::Increments,
            ..Default::default()
        },
    )
    .unwrap();
    let spec_hat = spec.with_coefficients(&fit.a, &fit.b, fit.a0).unwrap();
    let y0 = spec_hat.stationary_mean_y(1.0).unwrap();
    let incr = fit.increments.as_ref().unwrap();
    let resim = mixed_with_increments(&spec_hat, &grid, Some(&y0), incr).unwrap();
    let sup = resim
        .g
        .iter()
        .zip(&tr.g)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(sup <= 1e-6, "sup-norm gap {sup}");
    println!("criterion 10 PASS: re-simulated path reproduces observations, sup gap {sup:.2e}");
}
