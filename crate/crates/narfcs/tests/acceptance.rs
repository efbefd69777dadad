//! Acceptance suite: one test per criterion, each printing a PASS line.
//!
//! Run with `cargo test -p narfcs --test acceptance -- --nocapture` to see
//! the per-criterion lines.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use narfcs::data::{Dataset, VarKind, VarRole, VariableMeta};
use narfcs::engine::{run_fcs, run_narfcs, MiceSpec, MultiImputation};
use narfcs::kernel;
use narfcs::pool::{fit_target, pool, recommend_m, TargetFits};
use narfcs::rng::chain_stream;
use narfcs::sensitivity::{
    achieved_msp, calibrate_msp_to_csp, CalibrationOptions, CalibrationTarget,
};
use narfcs::simulate::{
    default_analysis_model, generate, replicate_study, ReplicateOptions, SimConfig, StudyMethod,
};
use narfcs::ums::parse_ums;

fn all_cells_bits(mi: &MultiImputation) -> Vec<u64> {
    let mut out = Vec::new();
    for ds in &mi.completed {
        for c in 0..ds.n_vars() {
            for r in 0..ds.n_rows() {
                out.push(ds.value(r, c).expect("completed").to_bits());
            }
        }
    }
    out
}

/// Criterion 1: on a synthetic cohort with the reference missingness rates
/// (n = 4882), a delta-adjusted run with all deltas zero is bitwise identical
/// to the plain MAR run under the same seed, pooled results match exactly,
/// and the pair of runs finishes within 60 seconds at m = 40, maxit = 10.
#[test]
fn criterion_1_zero_delta_equivalence_at_scale() {
    let started = Instant::now();
    let (ds, _) = generate(&SimConfig::cohort_default(4882, 3857814)).unwrap();

    let mut mar = MiceSpec::mar_default(&ds, 3857814).unwrap();
    mar.m = 40;
    mar.maxit = 10;
    let mut mnar = mar.clone();
    for var in ["matsmok", "matalc", "physfunc", "matmhw1", "sdqw3"] {
        mnar.set_mnar(&ds, var, "0").unwrap();
    }

    let a = run_fcs(&ds, &mar).unwrap();
    let b = run_narfcs(&ds, &mnar).unwrap();
    assert_eq!(all_cells_bits(&a), all_cells_bits(&b), "imputations must be bitwise identical");

    let model = default_analysis_model();
    let pa = pool(&fit_target(&a, &model).unwrap(), 0.05).unwrap();
    let pb = pool(&fit_target(&b, &model).unwrap(), 0.05).unwrap();
    for (ca, cb) in pa.coefs.iter().zip(&pb.coefs) {
        assert_eq!(ca.qbar.to_bits(), cb.qbar.to_bits());
        assert_eq!(ca.t.to_bits(), cb.t.to_bits());
        assert_eq!(ca.df.to_bits(), cb.df.to_bits());
        assert_eq!(ca.ci_low.to_bits(), cb.ci_low.to_bits());
        assert_eq!(ca.ci_high.to_bits(), cb.ci_high.to_bits());
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "runtime {elapsed:?} exceeds 60 s");
    println!(
        "PASS criterion 1: zero-delta NARFCS bitwise-identical to FCS at n=4882, m=40, \
         maxit=10; pooled results exact; runtime {elapsed:.2?}"
    );
}

/// Criterion 2: with a single incomplete continuous variable, a constant
/// delta shifts every imputed cell by exactly that constant (0 ulp on the
/// arithmetic identity), for c in {-1, 0.78, 2.5}.
#[test]
fn criterion_2_offset_additivity_exact() {
    let (ds, _) = generate(&SimConfig::mcar(2000, 24680, &[("sdqw3", 0.25)])).unwrap();
    let mut mar = MiceSpec::mar_default(&ds, 24680).unwrap();
    mar.m = 5;
    mar.maxit = 5;
    let base = run_fcs(&ds, &mar).unwrap();
    let ycol = ds.var_index("sdqw3").unwrap();
    let miss = ds.missing_rows(ycol);
    assert!(!miss.is_empty());

    for c in [-1.0, 0.78, 2.5] {
        let mut mnar = mar.clone();
        mnar.set_mnar(&ds, "sdqw3", &format!("{c}")).unwrap();
        let shifted = run_narfcs(&ds, &mnar).unwrap();
        for chain in 0..base.m() {
            for &r in &miss {
                let f = base.completed[chain].value(r, ycol).unwrap();
                let n = shifted.completed[chain].value(r, ycol).unwrap();
                assert_eq!(
                    n.to_bits(),
                    (f + c).to_bits(),
                    "c={c}, chain {chain}, row {r}: {n} vs {f}+{c}"
                );
            }
        }
    }
    println!(
        "PASS criterion 2: constant deltas -1, 0.78, 2.5 shift every imputed cell exactly \
         (0 ulp) across {} cells",
        3 * base.m() * miss.len()
    );
}

/// Criterion 3: Rubin's rules on q = (1,2,3), var = (1,1,1) reproduce the
/// hand-evaluated qbar, W, B, T to 1e-12 and the Barnard-Rubin df / CI.
#[test]
fn criterion_3_rubins_rules_oracle() {
    let fits = TargetFits {
        coef_names: vec!["beta".into()],
        estimates: vec![vec![1.0], vec![2.0], vec![3.0]],
        variances: vec![vec![1.0], vec![1.0], vec![1.0]],
        df_com: 10.0,
    };
    let p = pool(&fits, 0.05).unwrap();
    let c = &p.coefs[0];

    assert!((c.qbar - 2.0).abs() < 1e-12);
    assert!((c.w - 1.0).abs() < 1e-12);
    assert!((c.b - 1.0).abs() < 1e-12);
    assert!((c.t - 7.0 / 3.0).abs() < 1e-12);

    // hand evaluation of the stated formulas
    let m = 3.0;
    let lambda = (1.0 + 1.0 / m) * 1.0 / (7.0 / 3.0);
    let nu_old = (m - 1.0) / (lambda * lambda);
    let nu_com = 10.0;
    let nu_obs = (nu_com + 1.0) / (nu_com + 3.0) * nu_com * (1.0 - lambda);
    let nu = 1.0 / (1.0 / nu_old + 1.0 / nu_obs);
    assert!((c.df - nu).abs() < 1e-12, "df {} vs hand {nu}", c.df);
    assert!((nu - 16170.0 / 7099.0).abs() < 1e-12);

    // frozen from an independent evaluation: t(16170/7099, 0.975) = 3.8369388,
    // CI = 2 -/+ t * sqrt(7/3)
    assert!((c.ci_low - (-3.8610208343258217)).abs() < 1e-7, "ci_low {}", c.ci_low);
    assert!((c.ci_high - 7.861020834325822).abs() < 1e-7, "ci_high {}", c.ci_high);
    println!(
        "PASS criterion 3: pooled qbar=2, W=1, B=1, T=7/3 at 1e-12; df {:.6} and CI \
         ({:.4}, {:.4}) match the hand evaluation",
        c.df, c.ci_low, c.ci_high
    );
}

/// Plain Gauss-Jordan inverse, the independent linear-algebra route.
fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        assert!(p.abs() > 1e-300, "singular oracle matrix");
        for j in 0..2 * n {
            m[col][j] /= p;
        }
        for i in 0..n {
            if i != col {
                let f = m[i][col];
                for j in 0..2 * n {
                    m[i][j] -= f * m[col][j];
                }
            }
        }
    }
    m.iter().map(|row| row[n..].to_vec()).collect()
}

/// Criterion 4: kernel oracles. OLS matches a dense normal-equations solve on
/// 100 random instances to 1e-8; converged logistic fits have terminal
/// penalized-gradient max-norm below 1e-8; posterior-draw moments match their
/// Monte Carlo identities within 4 standard errors at 1e5 draws.
#[test]
fn criterion_4_numeric_kernel_oracles() {
    let mut rng = chain_stream(40400, 0);
    let unif = |rng: &mut narfcs::rng::Stream| rng.next_u64() as f64 / u64::MAX as f64;

    // OLS vs dense inverse on 100 random 20x4 instances
    for instance in 0..100 {
        let x = DMatrix::from_fn(20, 4, |_, j| if j == 0 { 1.0 } else { unif(&mut rng) * 4.0 - 2.0 });
        let y = DVector::from_fn(20, |_, _| unif(&mut rng) * 10.0 - 5.0);
        let fit = kernel::ols_fit(&x, &y, 0.0).unwrap();
        let xtx = x.transpose() * &x;
        let rows: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| xtx[(i, j)]).collect()).collect();
        let inv = gauss_jordan_inverse(&rows);
        let xty = x.transpose() * &y;
        for i in 0..4 {
            let oracle: f64 = (0..4).map(|j| inv[i][j] * xty[j]).sum();
            assert!(
                (fit.beta_hat[i] - oracle).abs() < 1e-8,
                "instance {instance}, coef {i}: {} vs {oracle}",
                fit.beta_hat[i]
            );
        }
    }

    // logistic terminal gradient on 20 random instances
    for instance in 0..20 {
        let n = 60;
        let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { unif(&mut rng) * 2.0 - 1.0 });
        let mut y = DVector::zeros(n);
        for i in 0..n {
            let t = 0.4 - 0.9 * x[(i, 1)] + 1.1 * x[(i, 2)];
            y[i] = f64::from(unif(&mut rng) < kernel::expit(t));
        }
        let fit = kernel::logistic_fit(&x, &y, 0.0, 1e-8, 50).unwrap();
        assert!(fit.converged, "instance {instance} did not converge");
        let p = (&x * &fit.beta_hat).map(kernel::expit);
        let grad = x.transpose() * (&y - p);
        assert!(grad.amax() < 1e-8, "instance {instance}: gradient {}", grad.amax());
    }

    // posterior-draw Monte Carlo identities at 1e5 draws
    let x = DMatrix::from_fn(40, 3, |_, j| if j == 0 { 1.0 } else { unif(&mut rng) * 4.0 - 2.0 });
    let y = DVector::from_fn(40, |_, _| unif(&mut rng) * 10.0 - 5.0);
    let fit = kernel::ols_fit(&x, &y, 0.0).unwrap();
    let n_draws = 100_000usize;
    let mut mean0 = 0.0;
    let mut sq0 = 0.0;
    let mut mean_prec = 0.0;
    for _ in 0..n_draws {
        let (b, s) = kernel::draw_ols_posterior(&fit, &mut rng);
        mean0 += b[0];
        sq0 += b[0] * b[0];
        mean_prec += 1.0 / (s * s);
    }
    let nf = n_draws as f64;
    mean0 /= nf;
    mean_prec /= nf;
    let sd0 = ((sq0 / nf - mean0 * mean0) * nf / (nf - 1.0)).sqrt();
    let se0 = sd0 / nf.sqrt();
    assert!(
        (mean0 - fit.beta_hat[0]).abs() < 4.0 * se0,
        "E[beta*] {mean0} vs {} (se {se0})",
        fit.beta_hat[0]
    );
    let expect_prec = fit.df_resid as f64 / fit.rss;
    let se_prec = (2.0 * fit.df_resid as f64 / fit.rss.powi(2) / nf).sqrt();
    assert!(
        (mean_prec - expect_prec).abs() < 4.0 * se_prec,
        "E[1/sigma*^2] {mean_prec} vs {expect_prec} (se {se_prec})"
    );

    // logistic posterior covariance matches its factor within 10% Frobenius
    let xb = DMatrix::from_fn(80, 2, |_, j| if j == 0 { 1.0 } else { unif(&mut rng) * 2.0 - 1.0 });
    let mut yb = DVector::zeros(80);
    for i in 0..80 {
        yb[i] = f64::from(unif(&mut rng) < kernel::expit(0.2 + 0.8 * xb[(i, 1)]));
    }
    let lfit = kernel::logistic_fit(&xb, &yb, 0.0, 1e-8, 50).unwrap();
    let target = &lfit.cov_factor * lfit.cov_factor.transpose();
    let mut sums = [0.0f64; 2];
    let mut cross = [[0.0f64; 2]; 2];
    for _ in 0..n_draws {
        let b = kernel::draw_logistic_posterior(&lfit, &mut rng).unwrap();
        for i in 0..2 {
            sums[i] += b[i];
            for j in 0..2 {
                cross[i][j] += b[i] * b[j];
            }
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let cov = cross[i][j] / nf - (sums[i] / nf) * (sums[j] / nf);
            num += (cov - target[(i, j)]).powi(2);
            den += target[(i, j)].powi(2);
        }
    }
    assert!((num / den).sqrt() < 0.10, "Frobenius error {}", (num / den).sqrt());

    println!(
        "PASS criterion 4: OLS matches the dense-inverse oracle on 100 instances at 1e-8; \
         logistic terminal gradients < 1e-8; posterior-draw moments within 4 MC se at 1e5 draws"
    );
}

/// Criterion 5: under outcome-dependent missingness, MAR imputation shows
/// detectable bias in the exposure effect while the delta-adjusted run with
/// the empirically implied delta does not, with nominal interval coverage.
/// 200 replicates of n = 2000, within a 10-minute budget.
#[test]
fn criterion_5_simulation_recovery() {
    let started = Instant::now();
    let cfg = SimConfig::mnar_on_outcome(2000, 202020);
    let options = ReplicateOptions { m: 5, maxit: 5, ..Default::default() };
    let methods = [StudyMethod::Fcs, StudyMethod::NarfcsTrueDelta];
    let out = replicate_study(&cfg, 200, &methods, &options).unwrap();

    let fcs = &out[0];
    let narfcs = &out[1];
    assert!(
        fcs.bias.abs() > 3.0 * fcs.mc_se,
        "FCS bias {} should be detectable (3 x mc_se {})",
        fcs.bias,
        fcs.mc_se
    );
    assert!(
        narfcs.bias.abs() < 2.0 * narfcs.mc_se,
        "NARFCS bias {} should be within 2 x mc_se {}",
        narfcs.bias,
        narfcs.mc_se
    );
    assert!(
        (0.90..=0.98).contains(&narfcs.coverage),
        "NARFCS coverage {}",
        narfcs.coverage
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 600.0, "runtime {elapsed:?} exceeds 10 minutes");
    println!(
        "PASS criterion 5: FCS bias {:+.4} ({:.1} x mc_se) vs NARFCS bias {:+.4} \
         ({:.1} x mc_se), NARFCS coverage {:.3}; 200 replicates in {elapsed:.2?}",
        fcs.bias,
        fcs.bias.abs() / fcs.mc_se,
        narfcs.bias,
        narfcs.bias.abs() / narfcs.mc_se,
        narfcs.coverage
    );
}

/// One calibration round trip: impose `delta_star`, measure the marginal
/// shift with a wide run, calibrate back. Returns (recovered, tolerance).
fn round_trip(ds: &Dataset, var: &str, delta_star: f64, seed: u64) -> (f64, f64) {
    let mut spec = MiceSpec::mar_default(ds, seed).unwrap();
    spec.m = 40;
    spec.maxit = 5;
    spec.set_mnar(ds, var, "0").unwrap();

    // measurement runs share a seed, so the delta-vs-zero contrast uses
    // common random numbers
    let mut imposed = spec.clone();
    imposed.ums_map.insert(var.into(), format!("{delta_star}"));
    let measured = achieved_msp(&run_narfcs(ds, &imposed).unwrap(), ds, var).unwrap();
    let at_zero = achieved_msp(&run_narfcs(ds, &spec).unwrap(), ds, var).unwrap();
    let slope = (measured - at_zero) / delta_star;

    let targets = vec![CalibrationTarget { variable: var.into(), msp: measured }];
    let options = CalibrationOptions {
        eval_runs: 6,
        eval_m: 8,
        eval_maxit: 5,
        tol_continuous_sd_frac: 0.005,
        tol_proportion: 0.003,
        ..CalibrationOptions::default()
    };
    let result = calibrate_msp_to_csp(ds, &spec, &targets, &options).unwrap();
    let row = &result.rows[0];
    // the criterion's tolerance, with the Monte Carlo error mapped from the
    // MSP scale to the delta scale through the measured slope
    let tolerance = (2.0 * row.mc_se / slope.abs()).max(0.05);
    (row.delta, tolerance)
}

/// Criterion 6: calibration round trips recover imposed deltas within
/// max(0.05, 2 mc_se), and calibrated deltas are nondecreasing in the target
/// MSP.
#[test]
fn criterion_6_calibration_round_trip_and_ordering() {
    // continuous: single incomplete outcome
    let (ds_cont, _) = generate(&SimConfig::mcar(2000, 606060, &[("sdqw3", 0.2)])).unwrap();
    for (i, delta_star) in [0.5, 1.5].into_iter().enumerate() {
        let (recovered, tolerance) = round_trip(&ds_cont, "sdqw3", delta_star, 9000 + i as u64);
        assert!(
            (recovered - delta_star).abs() <= tolerance,
            "continuous delta* {delta_star}: recovered {recovered} (tolerance {tolerance})"
        );
        println!(
            "  criterion 6: continuous delta* {delta_star} -> {recovered:.4} \
             (tolerance {tolerance:.4})"
        );
    }

    // binary: single incomplete exposure, deltas on the log-odds scale
    let (ds_bin, _) = generate(&SimConfig::mcar(2000, 606061, &[("matmhw1", 0.2)])).unwrap();
    for (i, delta_star) in [0.3, 0.7].into_iter().enumerate() {
        let (recovered, tolerance) = round_trip(&ds_bin, "matmhw1", delta_star, 9100 + i as u64);
        assert!(
            (recovered - delta_star).abs() <= tolerance,
            "binary delta* {delta_star}: recovered {recovered} (tolerance {tolerance})"
        );
        println!(
            "  criterion 6: binary delta* {delta_star} -> {recovered:.4} \
             (tolerance {tolerance:.4})"
        );
    }

    // ordering: increasing MSP targets give nondecreasing deltas
    let mut spec = MiceSpec::mar_default(&ds_cont, 9200).unwrap();
    spec.m = 5;
    spec.maxit = 5;
    spec.set_mnar(&ds_cont, "sdqw3", "0").unwrap();
    let options = CalibrationOptions {
        eval_runs: 4,
        eval_m: 5,
        eval_maxit: 5,
        tol_continuous_sd_frac: 0.01,
        ..CalibrationOptions::default()
    };
    let mut deltas = Vec::new();
    for msp in [0.5, 1.0, 2.0] {
        let targets = vec![CalibrationTarget { variable: "sdqw3".into(), msp }];
        let result = calibrate_msp_to_csp(&ds_cont, &spec, &targets, &options).unwrap();
        deltas.push(result.rows[0].delta);
    }
    assert!(
        deltas[0] <= deltas[1] && deltas[1] <= deltas[2],
        "calibrated deltas not nondecreasing: {deltas:?}"
    );
    println!(
        "PASS criterion 6: round trips recovered imposed deltas; ordering {:.3} <= {:.3} <= {:.3}",
        deltas[0], deltas[1], deltas[2]
    );
}

/// Criterion 7: exact ums parses and rejections.
#[test]
fn criterion_7_ums_parser() {
    let known: std::collections::HashSet<&str> =
        ["matage", "sex", "matmhw1"].into_iter().collect();

    let e = parse_ums("0.78", &known, "sdqw3").unwrap();
    assert_eq!((e.intercept, e.terms.len()), (0.78, 0));
    let e = parse_ums("0.11", &known, "sdqw3").unwrap();
    assert_eq!((e.intercept, e.terms.len()), (0.11, 0));
    let e = parse_ums("0", &known, "sdqw3").unwrap();
    assert_eq!((e.intercept, e.terms.len()), (0.0, 0));
    let e = parse_ums("0.78 + 0.2*matage", &known, "sdqw3").unwrap();
    assert_eq!(e.intercept, 0.78);
    assert_eq!(e.terms, vec![(0.2, "matage".to_string())]);

    assert!(parse_ums("0.2*matage", &known, "sdqw3").is_err(), "no intercept");
    assert!(parse_ums("0.78 + foo", &known, "sdqw3").is_err(), "malformed term");
    assert!(parse_ums("0.1 + 0.2", &known, "sdqw3").is_err(), "two intercepts");

    println!(
        "PASS criterion 7: ums parser accepts 0.78 / 0.11 / 0 / 0.78 + 0.2*matage and \
         rejects the malformed forms"
    );
}

/// A fixture reproducing the reference per-variable missingness counts on
/// n = 4882 rows with 3245 complete cases.
fn reference_fixture() -> Dataset {
    let n = 4882;
    let meta = vec![
        VariableMeta::new("sex", VarKind::Binary, VarRole::Confounder),
        VariableMeta::new("siblings", VarKind::Binary, VarRole::Confounder),
        VariableMeta::new("matedu", VarKind::Binary, VarRole::Confounder),
        VariableMeta::new("matage", VarKind::Continuous, VarRole::Confounder),
        VariableMeta::new("conspar", VarKind::Continuous, VarRole::Confounder),
        VariableMeta::new("finhard", VarKind::Binary, VarRole::Confounder),
        VariableMeta::new("basesdq", VarKind::Continuous, VarRole::Confounder),
        VariableMeta::new("matsmok", VarKind::Binary, VarRole::Confounder),
        VariableMeta::new("matalc", VarKind::Binary, VarRole::Confounder),
        VariableMeta::new("physfunc", VarKind::Continuous, VarRole::Confounder),
        VariableMeta::new("matmhw1", VarKind::Binary, VarRole::Exposure),
        VariableMeta::new("sdqw3", VarKind::Continuous, VarRole::Outcome),
    ];
    // missing-row intervals chosen so the marginal counts and the
    // complete-case count both come out exactly
    let intervals: [(usize, usize, usize); 5] = [
        (7, 300, 1071),  // matsmok: 771
        (8, 500, 1385),  // matalc: 885
        (9, 895, 1637),  // physfunc: 742
        (10, 0, 738),    // matmhw1: 738
        (11, 0, 1142),   // sdqw3: 1142
    ];
    let columns: Vec<Vec<Option<f64>>> = (0..12)
        .map(|c| {
            (0..n)
                .map(|i| {
                    if intervals.iter().any(|&(col, lo, hi)| col == c && i >= lo && i < hi) {
                        return None;
                    }
                    let v = match c {
                        0 | 1 | 2 | 5 | 7 | 8 | 10 => ((i + c) % 2) as f64,
                        3 => 20.0 + (i % 40) as f64,
                        4 => 1.0 + (i % 5) as f64 * 0.8,
                        6 | 11 => (i % 36) as f64,
                        9 => 50.0 + (i % 51) as f64,
                        _ => unreachable!(),
                    };
                    Some(v)
                })
                .collect()
        })
        .collect();
    Dataset::from_columns(meta, columns).unwrap()
}

/// Criterion 8: the fixture reproduces every reference count and (rounded)
/// percentage, and recommend_m(34) is at least 34.
#[test]
fn criterion_8_reference_missingness_summary() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fixture.csv");
    let built = reference_fixture();
    built.write_csv(&path).unwrap();
    let ds = Dataset::load_csv(&path, built.meta()).unwrap();
    assert_eq!(ds.n_rows(), 4882);

    let summary = ds.summarize_missingness();
    let expected = [
        ("sex", 0, 0.0),
        ("siblings", 0, 0.0),
        ("matedu", 0, 0.0),
        ("matage", 0, 0.0),
        ("conspar", 0, 0.0),
        ("finhard", 0, 0.0),
        ("basesdq", 0, 0.0),
        ("matsmok", 771, 16.0),
        ("matalc", 885, 18.0),
        ("physfunc", 742, 15.0),
        ("matmhw1", 738, 15.0),
        ("sdqw3", 1142, 23.0),
    ];
    for (name, count, pct) in expected {
        let v = summary.for_variable(name).unwrap();
        assert_eq!(v.n_missing, count, "{name}");
        assert_eq!(v.pct_missing.round(), pct, "{name}: {}", v.pct_missing);
    }
    assert_eq!(summary.n_complete_cases, 3245);
    assert_eq!(summary.pct_complete_cases.round(), 66.0);
    assert_eq!(summary.pct_incomplete_cases().round(), 34.0);

    let m = recommend_m(summary.pct_incomplete_cases()).unwrap();
    assert!(m >= 34, "recommend_m gave {m}");
    assert!(recommend_m(34.0).unwrap() >= 34);

    println!(
        "PASS criterion 8: fixture reproduces all reference counts (771/885/742/738/1142), \
         3245 complete cases (66%), recommend_m(34) = {}",
        recommend_m(34.0).unwrap()
    );
}

/// Criterion 9: every CLI subcommand is deterministic — reruns and different
/// thread counts produce byte-identical output files.
#[test]
fn criterion_9_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("data.csv");
    let (ds, _) = generate(&SimConfig::cohort_default(250, 424242)).unwrap();
    ds.write_csv(&data_path).unwrap();

    let config_path = dir.path().join("run.conf");
    let config = format!(
        r#"
[data]
path = {}
variables = sex:binary:confounder, siblings:binary:confounder, matedu:binary:confounder, matage:continuous:confounder, conspar:continuous:confounder, finhard:binary:confounder, basesdq:continuous:confounder, matsmok:binary:confounder, matalc:binary:confounder, physfunc:continuous:confounder, matmhw1:binary:exposure, sdqw3:continuous:outcome

[impute]
m = 4
maxit = 3
seed = 1234
methods = matsmok:logreg, matalc:logreg, physfunc:norm, matmhw1:mnar.logreg, sdqw3:mnar.norm

[ums]
matmhw1 = 0.11
sdqw3 = 0.5

[analysis]
outcome = sdqw3
terms = matmhw1, sex, siblings, matedu, matage, conspar, finhard, basesdq, matsmok, matalc, physfunc
coef = matmhw1
alpha = 0.05

[sweep]
vary = joint
sdqw3 = -0.5, 0.5
matmhw1 = 0, 0.3

[calibrate]
targets = sdqw3:0.1
eval_runs = 2
eval_m = 2
eval_maxit = 2
tol_continuous_sd_frac = 0.2

[simulate]
preset = cohort
n = 200
seed = 77
"#,
        data_path.display()
    );
    std::fs::write(&config_path, config).unwrap();

    let bin = env!("CARGO_BIN_EXE_narfcs");
    let run = |sub: &str, out: &std::path::Path, threads: &str| {
        let status = std::process::Command::new(bin)
            .args([
                "--config",
                config_path.to_str().unwrap(),
                "--threads",
                threads,
                "--out-dir",
                out.to_str().unwrap(),
                sub,
            ])
            .stdout(std::process::Stdio::null())
            .stderr(std::process::Stdio::null())
            .status()
            .expect("spawn narfcs binary");
        assert!(status.success(), "{sub} exited with {status:?}");
    };
    let snapshot = |out: &std::path::Path| -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().to_string(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };

    for sub in ["summarize", "impute", "analyze", "sweep", "calibrate", "simulate", "trace"] {
        let out1 = dir.path().join(format!("{sub}_a"));
        let out2 = dir.path().join(format!("{sub}_b"));
        let out8 = dir.path().join(format!("{sub}_c"));
        run(sub, &out1, "1");
        run(sub, &out2, "1");
        run(sub, &out8, "8");
        let (s1, s2, s8) = (snapshot(&out1), snapshot(&out2), snapshot(&out8));
        assert!(!s1.is_empty(), "{sub} produced no outputs");
        assert_eq!(s1, s2, "{sub}: rerun differs");
        assert_eq!(s1, s8, "{sub}: thread count changed the outputs");
    }
    println!(
        "PASS criterion 9: all seven subcommands byte-identical across reruns and \
         --threads 1 vs 8"
    );
}

/// The imputers only ever see the stream they are given: a full run's
/// imputations are reproducible from the chain streams alone. (Supporting
/// check for the determinism contract behind criteria 1 and 9.)
#[test]
fn chain_streams_are_the_only_randomness() {
    let (ds, _) = generate(&SimConfig::cohort_default(300, 5150)).unwrap();
    let mut spec = MiceSpec::mar_default(&ds, 5150).unwrap();
    spec.m = 2;
    spec.maxit = 2;
    let a = run_fcs(&ds, &spec).unwrap();
    // interleave unrelated RNG work, rerun, compare
    let mut noise = chain_stream(1, 7);
    let _: f64 = noise.sample(StandardNormal);
    let _ = noise.random_range(0..10usize);
    let b = run_fcs(&ds, &spec).unwrap();
    assert_eq!(all_cells_bits(&a), all_cells_bits(&b));
}
