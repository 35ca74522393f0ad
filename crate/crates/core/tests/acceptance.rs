//! Acceptance criteria. Prints one PASS/FAIL/SKIP line per criterion and
//! exits non-zero if any asserted criterion fails.
//!
//! Criterion 7 needs the hourly NO2 panel. Set `HAGP_NO2_CONFIG` to a run
//! configuration (see the README) describing that file to enable it.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use hagp_core::anova::{dense_kron, TermCollection};
use hagp_core::config::RunConfig;
use hagp_core::data::{impute, Dimension, GridDataset, ImputeConfig};
use hagp_core::gp::{
    fit_with, grid_points, logml_with, predict_points, sample_kernel_prior, sample_structured_prior, term_posterior_mean,
    term_posterior_variance, Factorization, FitConfig, FittedModel, ModelState,
};
use hagp_core::kernels::{GramMatrix, KernelSpec};
use hagp_core::kron::{assemble_model_diagonal, eigendecompose_centred, kron_matvec, kron_matvec_transposed, logdet_marginal, rotate_in};
use hagp_core::oracle::{dense_gram, dense_logml, dense_posterior, dense_weights};
use hagp_core::pipeline::{bench, compare, prepare, BenchConfig};
use hagp_core::HyperParams;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

enum Outcome {
    Pass(String),
    Fail(String),
    /// Reported but not asserted.
    Soft(bool, String),
    Skip(String),
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// `max |a - b| / max |b|`.
fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = max_abs(b);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit_levels(sizes: &[usize]) -> Vec<Vec<Vec<f64>>> {
    sizes.iter().map(|&n| (1..=n).map(|i| vec![i as f64]).collect()).collect()
}

fn random_kernel(rng: &mut ChaCha8Rng) -> KernelSpec {
    match rng.random_range(0..3) {
        0 => KernelSpec::fbm(1.0, rng.random_range(0.2..0.8)).centred().squared(),
        1 => KernelSpec::se(1.0, rng.random_range(0.5..3.0)).centred(),
        _ => KernelSpec::matern(1.0, rng.random_range(0.5..3.0), 1.5).centred(),
    }
}

// 1 ------------------------------------------------------------------------

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let tol = 1e-8;
    let models = ["model1", "model2", "model3", "model4", "model5"];
    let mut worst = [0.0f64; 6];
    let labels = ["logml", "residual", "mean", "variance", "term mean", "term variance"];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..50 {
        let sizes: Vec<usize> = (0..3).map(|_| rng.random_range(2..=6)).collect();
        let tc = TermCollection::preset(models[case % 5], 3).unwrap();
        let specs: Vec<KernelSpec> = (0..3).map(|_| random_kernel(&mut rng)).collect();
        let levels: Vec<Vec<Vec<f64>>> = sizes
            .iter()
            .map(|&n| {
                let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
                x.sort_by(f64::total_cmp);
                x.into_iter().map(|v| vec![v]).collect()
            })
            .collect();
        // Per-dimension scales are relative to each Gram's mean prior
        // variance, keeping K + s^2 I conditioned well enough for a dense
        // Cholesky reference to be accurate to the tolerance.
        let fact = Factorization::new(&levels, &specs).unwrap();
        let alpha: Vec<f64> = fact.grams().iter().map(|g| rng.random_range(0.5..1.5) / g.values.diagonal().mean().sqrt()).collect();
        let hp = HyperParams::new(rng.random_range(0.5..2.0), alpha, rng.random_range(0.1..1.0));
        let ms = ModelState::new(levels.clone(), specs, tc.clone(), hp).unwrap();
        let n = ms.n();
        let y = normals(&mut rng, n);
        let fm = FittedModel::at(ms.clone(), &y).unwrap();

        worst[0] = worst[0].max(rel(fm.logml, dense_logml(&ms, &y).unwrap()));
        let k = dense_gram(&ms).unwrap() + DMatrix::identity(n, n) * ms.hp.sigma2();
        let r = &k * nalgebra::DVector::from_column_slice(&fm.w) - nalgebra::DVector::from_column_slice(&y);
        worst[1] = worst[1].max(r.amax() / max_abs(&y));
        let dw = dense_weights(&ms, &y).unwrap();
        worst[1] = worst[1].max(rel_inf(&fm.w, &dw));

        // Two off-grid values and one training value per dimension.
        let query: Vec<Vec<Vec<f64>>> = levels
            .iter()
            .map(|lv| vec![vec![rng.random_range(-1.0..6.0)], lv[rng.random_range(0..lv.len())].clone(), vec![rng.random_range(-1.0..6.0)]])
            .collect();
        let pts = grid_points(&query);
        let dp = dense_posterior(&ms, &y, &pts).unwrap();
        let sp = predict_points(&fm, &pts, false).unwrap();
        worst[2] = worst[2].max(rel_inf(&sp.means, &dp.means));
        worst[3] = worst[3].max(rel_inf(&sp.variances, &dp.variances));
        for (t, (term, dense_mean)) in dp.term_means.iter().enumerate() {
            let tm = term_posterior_mean(&fm, term, &query).unwrap();
            // Map every query point to its entry in the term's own grid.
            let expanded: Vec<f64> = (0..pts.len())
                .map(|i| {
                    let idx = [i / 9, (i / 3) % 3, i % 3];
                    let k = term.dims().iter().fold(0, |acc, &l| acc * 3 + idx[l]);
                    tm.values[k]
                })
                .collect();
            worst[4] = worst[4].max(rel_inf(&expanded, dense_mean));
            let tv = term_posterior_variance(&fm, term, &pts).unwrap();
            worst[5] = worst[5].max(rel_inf(&tv.values, &dp.term_variances[t].1));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = labels.iter().zip(&worst).map(|(l, w)| format!("{l} {w:.1e}")).collect::<Vec<_>>().join(", ");
    let msg = format!("50 cases, worst relative error: {detail}; {secs:.2} s (limit 30 s)");
    if worst.iter().all(|w| *w <= tol) && secs < 30.0 {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

// 2 ------------------------------------------------------------------------

fn centred_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, rank, |_, _| StandardNormal.sample(&mut *rng));
    let c = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let k = &c * &a * a.transpose() * &c;
    (&k + k.transpose()) * 0.5
}

fn eigenbasis_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut orth, mut recon, mut first, mut lam0) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut multi_zero = 0;
    for case in 0..100 {
        let n: usize = rng.random_range(2..=50);
        // Every third case is rank deficient beyond the centring null space.
        let rank = if case % 3 == 0 { rng.random_range(0..=(n.saturating_sub(2))) } else { n };
        let k = centred_psd(&mut rng, n, rank);
        let b = eigendecompose_centred(&GramMatrix::from_matrix(k.clone()).unwrap()).unwrap();
        if b.zero_mult >= 2 {
            multi_zero += 1;
        }
        let q = &b.q;
        orth = orth.max((q.transpose() * q - DMatrix::identity(n, n)).amax());
        let lmax = b.lambda_max().max(f64::MIN_POSITIVE);
        let rec = q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(b.lam.clone())) * q.transpose();
        recon = recon.max((rec - &k).amax() / lmax);
        let inv = 1.0 / (n as f64).sqrt();
        first = first.max(q.column(0).iter().fold(0.0f64, |m, v| m.max((v - inv).abs())));
        lam0 = lam0.max(b.lam[0].abs());
    }
    let secs = start.elapsed().as_secs_f64();
    let msg = format!(
        "100 matrices ({multi_zero} with zero multiplicity >= 2): orthonormality {orth:.1e} (<= 1e-10), \
         reconstruction {recon:.1e} lmax (<= 1e-9), first column {first:.1e}, |lam0| {lam0:e}; {secs:.2} s (limit 10 s)"
    );
    let ok = orth <= 1e-10 && recon <= 1e-9 && first <= 1e-15 && lam0 == 0.0 && multi_zero > 0 && secs < 10.0;
    if ok {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

// 3 ------------------------------------------------------------------------

fn synthetic_grid(sizes: &[usize], tc: &TermCollection, seed: u64) -> (ModelState, Arc<Factorization>, Vec<f64>) {
    let d = sizes.len();
    let specs = vec![KernelSpec::fbm(1.0, 0.5).centred().squared(); d];
    let levels = unit_levels(sizes);
    let fact = Arc::new(Factorization::new(&levels, &specs).unwrap());
    let alpha: Vec<f64> = fact.grams().iter().map(|g| 1.0 / g.values.diagonal().mean().sqrt()).collect();
    let truth = HyperParams::new(2.0, alpha, 0.3);
    let mut y = sample_structured_prior(&fact, tc, &truth, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    for v in y.iter_mut() {
        *v += 0.3 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng) + 5.0;
    }
    let ms = ModelState::new(levels, specs, tc.clone(), HyperParams::ones(d)).unwrap();
    (ms, fact, y)
}

fn zero_sums() -> Outcome {
    let start = Instant::now();
    let sizes = [4usize, 5, 3];
    let tc = TermCollection::saturated(3);
    let (ms, fact, y) = synthetic_grid(&sizes, &tc, 11);
    let fm = fit_with(&ms, fact, &y, &FitConfig::default()).unwrap();
    let bound = 1e-8 * max_abs(&y);
    let mut worst = 0.0f64;
    for term in tc.terms().iter().filter(|t| !t.is_constant()) {
        let tm = term_posterior_mean(&fm, term, &ms.levels).unwrap();
        let shape = &tm.shape;
        // Sum over each axis of the term's grid, at every setting of the others.
        for axis in 0..shape.len() {
            let stride: usize = shape[axis + 1..].iter().product();
            let outer: usize = shape[..axis].iter().product();
            for o in 0..outer {
                for s in 0..stride {
                    let sum: f64 = (0..shape[axis]).map(|k| tm.values[(o * shape[axis] + k) * stride + s]).sum();
                    worst = worst.max(sum.abs());
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let msg = format!("saturated 4x5x3: largest margin sum {worst:.1e} (bound {bound:.1e}); {secs:.2} s (limit 5 s)");
    if worst <= bound && secs < 5.0 {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

// 4 ------------------------------------------------------------------------

fn kron_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..60 {
        let d = rng.random_range(1..=3);
        let sizes: Vec<(usize, usize)> = (0..d).map(|_| (rng.random_range(1..=6), rng.random_range(1..=6))).collect();
        let factors: Vec<DMatrix<f64>> =
            sizes.iter().map(|&(r, c)| DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng))).collect();
        let dense = factors[1..].iter().fold(factors[0].clone(), |acc, f| dense_kron(&acc, f));
        let v = normals(&mut rng, dense.ncols());
        let want: Vec<f64> = (&dense * nalgebra::DVector::from_column_slice(&v)).iter().copied().collect();
        worst = worst.max(rel_inf(&kron_matvec(&factors, &v).unwrap(), &want));
        let u = normals(&mut rng, dense.nrows());
        let want_t: Vec<f64> = (dense.transpose() * nalgebra::DVector::from_column_slice(&u)).iter().copied().collect();
        worst = worst.max(rel_inf(&kron_matvec_transposed(&factors, &u).unwrap(), &want_t));
    }
    let msg = format!("60 random products, d <= 3, n <= 216: worst relative error {worst:.1e} (<= 1e-12)");
    if worst <= 1e-12 {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

fn kron_scaling() -> Outcome {
    let cfg = BenchConfig { sizes: vec![vec![59, 147, 24]], preset: "model4".into(), seed: 1, dense: false };
    let row = &bench(&cfg)[0];
    if let Some(note) = &row.note {
        return Outcome::Soft(false, format!("bench failed: {note}"));
    }
    let msg = format!(
        "n = {}: structured logml {:.3} s, solve {:.3} s, setup {:.3} s (target < 10 s)",
        row.n, row.structured_logml_s, row.structured_solve_s, row.factorize_s
    );
    Outcome::Soft(row.structured_logml_s < 10.0 && row.structured_logml.is_finite(), msg)
}

// 5 ------------------------------------------------------------------------

fn scale_update_identity() -> Outcome {
    let sizes = [5usize, 6, 4];
    let tc = TermCollection::preset("model4", 3).unwrap();
    let (_, fact, y) = synthetic_grid(&sizes, &tc, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    let n = y.len() as f64;
    for _ in 0..20 {
        let hp = HyperParams::new(
            rng.random_range(0.2..5.0),
            (0..3).map(|_| rng.random_range(0.05..3.0)).collect(),
            rng.random_range(0.05..2.0),
        );
        let cached = logml_with(&fact, &tc, &hp, &y).unwrap().0;
        // From scratch: eigendecompose the rescaled Grams and rebuild D.
        let bases: Vec<_> = fact
            .grams()
            .iter()
            .zip(&hp.alpha)
            .map(|(g, a)| eigendecompose_centred(&GramMatrix::from_matrix(&g.values * (a * a)).unwrap()).unwrap())
            .collect();
        let unit = HyperParams::new(hp.alpha0, vec![1.0; 3], hp.sigma);
        let diag = assemble_model_diagonal(&tc, &bases, &sizes, &unit).unwrap();
        let yr = rotate_in(&bases, &y).unwrap();
        let s2 = hp.sigma2();
        let quad: f64 = yr.iter().zip(&diag.d_vec).map(|(a, d)| a * a / (d + s2)).sum();
        let scratch = -0.5 * quad - 0.5 * logdet_marginal(&diag, s2) - 0.5 * n * LN_2PI;
        worst = worst.max(rel(cached, scratch));
    }
    let msg = format!("20 rescalings of model4 on 5x6x4: worst relative difference {worst:.1e} (<= 1e-10)");
    if worst <= 1e-10 {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

// 6 ------------------------------------------------------------------------

fn hourly_panel(stations: usize, days: usize, seed: u64) -> GridDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = days * 24;
    let mut y = Vec::with_capacity(stations * len);
    for s in 0..stations {
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let level = rng.random_range(20.0..50.0);
        let mut ar = 0.0;
        for t in 0..len {
            ar = 0.8 * ar + 1.5 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
            let h = (t % 24) as f64;
            let trend = 5.0 * (t as f64 / len as f64 * 3.0 + s as f64).sin();
            y.push(level + 8.0 * (std::f64::consts::TAU * h / 24.0 + phase).sin() + trend + ar);
        }
    }
    let dims = vec![
        Dimension {
            name: "station".into(),
            labels: (0..stations).map(|s| format!("S{s}")).collect(),
            inputs: (0..stations).map(|s| vec![s as f64]).collect(),
        },
        Dimension {
            name: "day".into(),
            labels: (0..days).map(|d| format!("day{d}")).collect(),
            inputs: (1..=days).map(|d| vec![d as f64]).collect(),
        },
        Dimension {
            name: "hour".into(),
            labels: (0..24).map(|h| format!("{h:02}")).collect(),
            inputs: (1..=24).map(|h| vec![h as f64]).collect(),
        },
    ];
    let n = y.len();
    GridDataset::new(dims, "value", y, vec![false; n]).unwrap()
}

fn imputation_quality() -> Outcome {
    let truth = hourly_panel(4, 21, 17);
    let len = 21 * 24;
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let n = truth.n();
    let mut masked = truth.clone();
    let target = n / 100;
    let mut picked = 0;
    while picked < target {
        let i = rng.random_range(0..n);
        if !masked.missing[i] {
            masked.missing[i] = true;
            masked.y[i] = f64::NAN;
            picked += 1;
        }
    }
    let (out, rep) = impute(&masked, &ImputeConfig::default()).unwrap();
    let untouched = (0..n).all(|i| masked.missing[i] || out.y[i].to_bits() == truth.y[i].to_bits());
    // Linear interpolation between the nearest observed neighbours in the same unit.
    let mut se_gp = 0.0;
    let mut se_lin = 0.0;
    for i in (0..n).filter(|&i| masked.missing[i]) {
        let base = i / len * len;
        let p = i - base;
        let prev = (0..p).rev().find(|&k| !masked.missing[base + k]);
        let next = (p + 1..len).find(|&k| !masked.missing[base + k]);
        let lin = match (prev, next) {
            (Some(a), Some(b)) => {
                let (ya, yb) = (truth.y[base + a], truth.y[base + b]);
                ya + (yb - ya) * (p - a) as f64 / (b - a) as f64
            }
            (Some(a), None) => truth.y[base + a],
            (None, Some(b)) => truth.y[base + b],
            (None, None) => unreachable!(),
        };
        se_lin += (lin - truth.y[i]).powi(2);
        se_gp += (out.y[i] - truth.y[i]).powi(2);
    }
    let m = rep.imputed as f64;
    let (rmse_gp, rmse_lin) = ((se_gp / m).sqrt(), (se_lin / m).sqrt());
    let msg = format!(
        "{} of {n} masked: RMSE {rmse_gp:.3} vs linear {rmse_lin:.3} (ratio {:.2}, limit 1.5); observed untouched: {untouched}",
        rep.imputed,
        rmse_gp / rmse_lin
    );
    if rmse_gp <= 1.5 * rmse_lin && untouched && out.missing == masked.missing {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

// 7 ------------------------------------------------------------------------

/// Fitted values by log-marginal-likelihood maximisation, (alpha0, alpha1..3, sigma).
const TABLE_B2: [(&str, [Option<f64>; 5]); 5] = [
    ("model1", [Some(6.863), Some(5.024), Some(2.197), Some(0.319), Some(14.850)]),
    ("model2", [Some(14.401), Some(1.284), Some(0.672), Some(0.235), Some(12.537)]),
    ("model3", [Some(10.633), Some(1.865), Some(1.320), Some(0.306), Some(8.367)]),
    ("model4", [Some(52.024), Some(0.482), Some(0.942), Some(0.0512), Some(6.508)]),
    ("model5", [None, Some(0.000790), None, None, Some(36.429)]),
];
const MODEL1_LOGML: f64 = -857_889.0;

fn reproduction() -> Outcome {
    let Ok(path) = std::env::var("HAGP_NO2_CONFIG") else {
        return Outcome::Skip("HAGP_NO2_CONFIG not set; the NO2 panel is not part of the repository".into());
    };
    let run = || -> hagp_core::Result<Outcome> {
        let cfg = RunConfig::load(&path)?;
        let prep = prepare(&cfg)?;
        let models = cfg.resolved_models()?;
        let cmp = compare(&prep.dataset, &cfg.kernel_specs(), &models, &cfg.fit_config())?;
        let get = |name: &str| cmp.rows.iter().find(|r| r.model == name);
        let mut problems = Vec::new();
        let mut logml = Vec::new();
        for (name, want) in TABLE_B2 {
            let Some(row) = get(name) else {
                problems.push(format!("{name} missing from the configuration"));
                continue;
            };
            let Some(v) = row.logml else {
                problems.push(format!("{name} failed: {}", row.error.clone().unwrap_or_default()));
                continue;
            };
            logml.push(v);
            let alpha = row.alpha.clone().unwrap_or_default();
            let got = [row.alpha0, alpha.first().copied(), alpha.get(1).copied(), alpha.get(2).copied(), row.sigma];
            for (k, (w, g)) in want.iter().zip(got).enumerate() {
                if let (Some(w), Some(g)) = (w, g) {
                    if rel(g, *w) > 0.10 {
                        problems.push(format!("{name} parameter {k}: {g:.4} vs {w}"));
                    }
                }
            }
        }
        if logml.len() == 5 {
            if !(logml[3] > logml[2] && logml[2] > logml[1] && logml[1] > logml[0] && logml[0] > logml[4]) {
                problems.push(format!("logml ordering {logml:?}"));
            }
            if rel(logml[0], MODEL1_LOGML) > 1e-3 {
                problems.push(format!("model1 logml {:.1} vs {MODEL1_LOGML}", logml[0]));
            }
        }
        let msg = format!("n = {}, logml {:?}", prep.dataset.n(), logml.iter().map(|v| v.round()).collect::<Vec<_>>());
        Ok(if problems.is_empty() { Outcome::Pass(msg) } else { Outcome::Fail(format!("{msg}; {}", problems.join("; "))) })
    };
    run().unwrap_or_else(|e| Outcome::Fail(format!("pipeline error: {e}")))
}

// 8 ------------------------------------------------------------------------

fn sampling_anchors() -> Outcome {
    let pts1: Vec<Vec<f64>> = (0..25).map(|i| vec![i as f64 * 0.4]).collect();
    // Two-dimensional points with the origin first.
    let pts2: Vec<Vec<f64>> = (0..16).map(|i| vec![(i % 4) as f64 * 0.7, (i / 4) as f64 * 0.5]).collect();
    let mut f0 = 0.0f64;
    let mut sum_ratio = 0.0f64;
    let mut deterministic = true;
    for seed in 0..100u64 {
        let gamma = 0.15 + 0.007 * seed as f64;
        let raw = KernelSpec::fbm(1.0 + seed as f64 * 0.02, gamma);
        let a = sample_kernel_prior(&raw, &pts1, seed).unwrap();
        f0 = f0.max(a[0].abs());
        let b = sample_kernel_prior(&raw, &pts2, seed).unwrap();
        f0 = f0.max(b[0].abs());
        deterministic &= a == sample_kernel_prior(&raw, &pts1, seed).unwrap();

        let alpha = 0.5 + 0.03 * seed as f64;
        for spec in
            [KernelSpec::fbm(alpha, gamma).centred(), KernelSpec::se(alpha, 1.3).centred(), KernelSpec::fbm(alpha, 0.5).centred().squared()]
        {
            let f = sample_kernel_prior(&spec, &pts1, seed).unwrap();
            let n = pts1.len() as f64;
            let scale = if spec.squared { alpha * alpha } else { alpha };
            sum_ratio = sum_ratio.max(f.iter().sum::<f64>().abs() / (1e-6 * n.sqrt() * scale));
        }
    }
    let msg = format!(
        "100 draws: max |f(0)| {f0:.1e} (<= 1e-6); max |sum f| / (1e-6 sqrt(n) alpha) {sum_ratio:.1e} (<= 1); deterministic: {deterministic}"
    );
    if f0 <= 1e-6 && sum_ratio <= 1.0 && deterministic {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("1 oracle equivalence", oracle_equivalence),
        ("2 centred eigenbasis", eigenbasis_suite),
        ("3 zero-sum identities", zero_sums),
        ("4a kronecker matvec", kron_correctness),
        ("4b structured scaling", kron_scaling),
        ("5 scale-update identity", scale_update_identity),
        ("6 imputation", imputation_quality),
        ("7 NO2 reproduction", reproduction),
        ("8 prior-sampling anchors", sampling_anchors),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Outcome::Pass(m) => println!("PASS  {name}: {m}"),
            Outcome::Fail(m) => {
                failed += 1;
                println!("FAIL  {name}: {m}");
            }
            Outcome::Soft(ok, m) => println!("{}  {name} (reported, not asserted): {m}", if ok { "PASS" } else { "FAIL" }),
            Outcome::Skip(m) => println!("SKIP  {name}: {m}"),
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
