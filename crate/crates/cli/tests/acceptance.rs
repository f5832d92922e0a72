//! Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Criterion 8 needs real data: set `NHPG_REAL_DATA_CONFIG` to a fit config
//! over 2014-01-01..2019-08-31 to run it.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use nalgebra::DMatrix;
use nhpg_core::forward_backward::{forward_pass, sample_path, smoothed_marginals};
use nhpg_core::mcmc::{
    mean_stay_probabilities, parameter_names, run_chain, successive_conditional, summarize, McmcConfig, Priors,
};
use nhpg_core::polya_gamma::{sample_pg, sample_pg1, PgParams};
use nhpg_core::series::describe;
use nhpg_core::stats::{adf_test, df_test, jb_test, kpss_test, ks_two_sample, lbq_test, vr_test, VR_DEFAULT_PERIODS};
use nhpg_core::synthetic::{generate_seeded, homogeneous, score_recovery, well_separated};
use nhpg_core::{NhpgModel, ObservationData, StateParams, TransitionParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal, StudentT};

struct Outcome {
    pass: Option<bool>,
    detail: String,
}

fn pass(ok: bool, detail: String) -> Outcome {
    Outcome { pass: Some(ok), detail }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

// ---------------------------------------------------------------- 1

/// `PG(b, c)` as `1/(2π²) Σ g_k / ((k - 1/2)² + c²/(4π²))`, `g_k ~ Gamma(b, 1)`,
/// truncated after `terms` with the mean of the remainder added back.
struct GammaSeries {
    weights: Vec<f64>,
    tail_mean: f64,
    gamma: Gamma<f64>,
}

impl GammaSeries {
    fn new(b: f64, c: f64, terms: usize) -> Self {
        let pi2 = std::f64::consts::PI.powi(2);
        let w = |k: usize| 1.0 / (2.0 * pi2 * ((k as f64 - 0.5).powi(2) + c * c / (4.0 * pi2)));
        Self {
            weights: (1..=terms).map(w).collect(),
            tail_mean: b * (terms + 1..=terms * 1000).map(w).sum::<f64>(),
            gamma: Gamma::new(b, 1.0).unwrap(),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.weights.iter().map(|w| w * self.gamma.sample(rng)).sum::<f64>() + self.tail_mean
    }
}

fn polya_gamma() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let n = 100_000;
    let mut worst_z: f64 = 0.0;
    for c in [0.0, 0.5, 1.0, 2.0, 5.0, 10.0_f64] {
        let (mean, var) = if c == 0.0 {
            (0.25, 1.0 / 24.0)
        } else {
            ((c / 2.0).tanh() / (2.0 * c), (c.sinh() - c) / (4.0 * c.powi(3) * (c / 2.0).cosh().powi(2)))
        };
        let draws: f64 = (0..n).map(|_| sample_pg1(c, &mut rng)).sum::<f64>() / n as f64;
        worst_z = worst_z.max((draws - mean).abs() / (var / n as f64).sqrt());
    }
    let m = 20_000;
    let mut min_p: f64 = 1.0;
    for c in [0.0, 1.0, 4.0] {
        let series2 = GammaSeries::new(2.0, c, 200);
        let series1 = GammaSeries::new(1.0, c, 200);
        let pg2: Vec<f64> = (0..m).map(|_| sample_pg(PgParams::new(2, c).unwrap(), &mut rng)).collect();
        let sums: Vec<f64> = (0..m).map(|_| sample_pg1(c, &mut rng) + sample_pg1(c, &mut rng)).collect();
        let ref2: Vec<f64> = (0..m).map(|_| series2.sample(&mut rng)).collect();
        let pg1: Vec<f64> = (0..m).map(|_| sample_pg1(c, &mut rng)).collect();
        let ref1: Vec<f64> = (0..m).map(|_| series1.sample(&mut rng)).collect();
        for (a, b) in [(&pg2, &ref2), (&sums, &ref2), (&pg2, &sums), (&pg1, &ref1)] {
            min_p = min_p.min(ks_two_sample(a, b).p_value);
        }
    }
    pass(
        worst_z <= 4.0 && min_p > 0.01,
        format!("max |mean error| = {worst_z:.2} SE (limit 4), min additivity KS p = {min_p:.3} (limit 0.01)"),
    )
}

// ---------------------------------------------------------------- 2

fn toy(n: usize) -> (NhpgModel, ObservationData) {
    let ys = [0.3, -1.2, 2.5, 0.1, -0.4, 1.9, -2.2, 0.7];
    let xs = [0.5, -1.0, 0.2, 1.5, -0.3, 0.9, -1.4, 0.0];
    let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
    let dates = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().iter_days().take(n).collect();
    let data = ObservationData::new(ys[..n].to_vec(), design, dates, vec!["x".into()]).unwrap();
    let model = NhpgModel::new(
        StateParams::new(vec![0.5, 1.0], 2.0).unwrap(),
        StateParams::new(vec![-0.2, 0.3], 0.5).unwrap(),
        TransitionParams {
            beta1: vec![1.0, -0.8],
            beta2: vec![0.4, 1.3],
        },
        vec!["x".into()],
    )
    .unwrap();
    (model, data)
}

/// Joint density of every path, from the model definition: uniform initial
/// state, Gaussian emissions on the row's regression, and stay probability
/// `1 / (1 + exp(-row · β_previous))`.
fn enumerate(model: &NhpgModel, data: &ObservationData) -> Vec<(Vec<usize>, f64)> {
    let n = data.len();
    let states = [&model.state1, &model.state2];
    let betas = [&model.transitions.beta1, &model.transitions.beta2];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let density = |k: usize, s: usize| {
        let mu = dot(data.row(k), &states[s].coefficients);
        let v = states[s].sigma2;
        (-(data.y()[k] - mu).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
    };
    (0..1usize << n)
        .map(|code| {
            let z: Vec<usize> = (0..n).map(|k| (code >> k) & 1).collect();
            let mut p = 0.5 * density(0, z[0]);
            for k in 1..n {
                let stay = 1.0 / (1.0 + (-dot(data.row(k), betas[z[k - 1]])).exp());
                p *= if z[k] == z[k - 1] { stay } else { 1.0 - stay };
                p *= density(k, z[k]);
            }
            (z, p)
        })
        .collect()
}

fn forward_backward() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in 1..=8 {
        let (model, data) = toy(n);
        let paths = enumerate(&model, &data);
        let total: f64 = paths.iter().map(|(_, p)| p).sum();
        let lattice = forward_pass(&model, &data).unwrap();
        let gamma = smoothed_marginals(&lattice, &model, &data);
        worst = worst.max((lattice.log_norm - total.ln()).abs());
        for k in 0..n {
            let p1: f64 = paths.iter().filter(|(z, _)| z[k] == 0).map(|(_, p)| p).sum::<f64>() / total;
            worst = worst.max((gamma[k][0] - p1).abs());
        }
    }
    let (model, data) = toy(4);
    let paths = enumerate(&model, &data);
    let total: f64 = paths.iter().map(|(_, p)| p).sum();
    let lattice = forward_pass(&model, &data).unwrap();
    let stay = model.stay_probabilities(&data);
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let draws = 100_000;
    let mut counts = vec![0usize; 1 << 4];
    for _ in 0..draws {
        let code: usize = sample_path(&lattice, &stay, &mut rng)
            .indices()
            .enumerate()
            .map(|(k, s)| s << k)
            .sum();
        counts[code] += 1;
    }
    let tv = paths
        .iter()
        .enumerate()
        .map(|(code, (_, p))| (p / total - counts[code] as f64 / draws as f64).abs())
        .sum::<f64>()
        / 2.0;
    pass(
        worst <= 1e-10 && tv < 0.01,
        format!("max deviation from enumeration = {worst:.1e} (limit 1e-10), path TV (T = 4) = {tv:.4} (limit 0.01)"),
    )
}

// ---------------------------------------------------------------- 3

/// Independent prior draws, ordered so the first state has the larger variance.
fn prior_reference(priors: &Priors, r: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let gamma = Gamma::new(priors.ig_shape, 1.0).unwrap();
    (0..n)
        .map(|_| {
            let state = |rng: &mut ChaCha8Rng| {
                let s2 = priors.ig_scale / gamma.sample(rng);
                let mut v: Vec<f64> = (0..r).map(|_| normal(rng) * (s2 / priors.prec_b0).sqrt()).collect();
                v.push(s2);
                v
            };
            let beta = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..r).map(|_| normal(rng) / priors.prec_beta0.sqrt()).collect()
            };
            let (mut s1, mut s2) = (state(rng), state(rng));
            let (mut b1, mut b2) = (beta(rng), beta(rng));
            if s1[r] < s2[r] {
                std::mem::swap(&mut s1, &mut s2);
                std::mem::swap(&mut b1, &mut b2);
            }
            [s1, s2, b1, b2].concat()
        })
        .collect()
}

fn geweke() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n_obs = 20;
    let dates = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().iter_days().take(n_obs).collect();
    let x = DMatrix::from_fn(n_obs, 2, |_, j| if j == 0 { 1.0 } else { normal(&mut rng) });
    let data = ObservationData::new(vec![0.0; n_obs], x, dates, vec!["x".into()]).unwrap();
    let priors = Priors {
        prec_b0: 1.0,
        ig_shape: 3.0,
        ig_scale: 2.0,
        prec_beta0: 1.0,
        ..Priors::default()
    };
    let n = 5000;
    let draws = successive_conditional(&data, &priors, n, 400, &mut rng).unwrap();
    let reference = prior_reference(&priors, 2, n, &mut rng);
    let names = parameter_names(data.covariate_names());
    let (mut min_p, mut worst) = (1.0_f64, String::new());
    for (j, name) in names.iter().enumerate() {
        let a: Vec<f64> = draws.iter().map(|d| d.values()[j]).collect();
        let b: Vec<f64> = reference.iter().map(|v| v[j]).collect();
        let p = ks_two_sample(&a, &b).p_value;
        if p < min_p {
            min_p = p;
            worst = name.clone();
        }
    }
    pass(
        min_p > 0.01,
        format!("min prior-marginal KS p = {min_p:.3} ({worst}) over {} parameters (limit 0.01)", names.len()),
    )
}

// ---------------------------------------------------------------- 4

fn recovery() -> Outcome {
    let (mut accuracy, mut min_accuracy) = (0.0, 1.0_f64);
    let (mut covered, mut pairs) = (0usize, 0usize);
    let seeds = 10;
    for seed in 1..=seeds {
        let data = generate_seeded(&well_separated(2000, seed)).unwrap();
        let obs = data.observations().unwrap();
        let config = McmcConfig {
            seed,
            ..McmcConfig::default()
        };
        let chains = vec![run_chain(&obs, &Priors::default(), &config, 0).unwrap()];
        let fit = summarize(&chains, 0.05).unwrap();
        let metrics = score_recovery(&fit, &well_separated(2000, seed).model, &data.truth).unwrap();
        accuracy += metrics.accuracy;
        min_accuracy = min_accuracy.min(metrics.accuracy);
        covered += metrics.coverage.iter().filter(|c| c.covered).count();
        pairs += metrics.coverage.len();
    }
    accuracy /= seeds as f64;
    let coverage = covered as f64 / pairs as f64;
    pass(
        accuracy >= 0.90 && coverage >= 0.90,
        format!(
            "mean accuracy = {accuracy:.3} (min {min_accuracy:.3}, limit 0.90), coverage = {covered}/{pairs} = {coverage:.3} (limit 0.90)"
        ),
    )
}

// ---------------------------------------------------------------- 5

fn homogeneous_reduction() -> Outcome {
    let data = generate_seeded(&homogeneous(2000, 5)).unwrap();
    let obs = data.observations().unwrap();
    let config = McmcConfig {
        seed: 5,
        intercept_only_transitions: true,
        ..McmcConfig::default()
    };
    let chains = vec![run_chain(&obs, &Priors::default(), &config, 0).unwrap()];
    let stay = mean_stay_probabilities(&chains);
    let err = (stay[0] - 0.95).abs().max((stay[1] - 0.90).abs());
    pass(
        err <= 0.05,
        format!(
            "stay probabilities = [{:.3}, {:.3}] vs [0.95, 0.90], max error {err:.3} (limit 0.05)",
            stay[0], stay[1]
        ),
    )
}

// ---------------------------------------------------------------- 6

fn cumsum(xs: Vec<f64>) -> Vec<f64> {
    xs.into_iter()
        .scan(0.0, |s, x| {
            *s += x;
            Some(*s)
        })
        .collect()
}

fn white(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| normal(rng)).collect()
}

fn ar1(n: usize, phi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = 0.0;
    (0..n)
        .map(|_| {
            x = phi * x + normal(rng);
            x
        })
        .collect()
}

type Generator = fn(&mut ChaCha8Rng) -> Vec<f64>;
type Decision = fn(&[f64]) -> bool;

fn calibration() -> Outcome {
    const T: usize = 1000;
    const REPS: usize = 1000;
    let cases: [(&str, Generator, Generator, Decision); 6] = [
        (
            "DF",
            |r| cumsum(white(T, r)),
            |r| ar1(T, 0.5, r),
            |y| df_test(y).unwrap().reject_5pct,
        ),
        (
            "ADF",
            |r| cumsum(white(T, r)),
            |r| white(T, r),
            |y| adf_test(y, 7, true).unwrap().reject_5pct,
        ),
        (
            "LBQ",
            |r| white(T, r),
            |r| ar1(T, 0.5, r),
            |y| lbq_test(y, 10).unwrap().reject_5pct,
        ),
        (
            "KPSS",
            |r| white(T, r).into_iter().enumerate().map(|(i, e)| 0.01 * i as f64 + e).collect(),
            |r| cumsum(white(T, r)),
            |y| kpss_test(y, true).unwrap().reject_5pct,
        ),
        (
            "VR",
            |r| cumsum(white(T, r)),
            |r| cumsum(ar1(T, 0.3, r)),
            |y| vr_test(y, &VR_DEFAULT_PERIODS).unwrap().reject_5pct,
        ),
        (
            "JB",
            |r| white(T, r),
            |r| {
                let t4 = StudentT::new(4.0).unwrap();
                (0..T).map(|_| t4.sample(r)).collect()
            },
            |y| jb_test(y).unwrap().reject_5pct,
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, (name, null, alt, reject)) in cases.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + i as u64);
        let size = (0..REPS).filter(|_| reject(&null(&mut rng))).count() as f64 / REPS as f64;
        let power = (0..REPS).filter(|_| reject(&alt(&mut rng))).count() as f64 / REPS as f64;
        ok &= (0.03..=0.07).contains(&size) && power >= 0.99;
        parts.push(format!("{name} size {size:.3} power {power:.3}"));
    }
    pass(ok, format!("{} (size in [0.03, 0.07], power >= 0.99)", parts.join(", ")))
}

// ---------------------------------------------------------------- 7

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = repo().join("configs/synthetic.toml");
    let mut dirs = Vec::new();
    for run in ["first", "second"] {
        let out = tmp.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_nhpg"))
            .args(["fit", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .status()
            .unwrap();
        if !status.success() {
            return pass(false, format!("fit exited with {status}"));
        }
        dirs.push(out);
    }
    let files = ["coefficients.csv", "smoothed.csv", "plot_data.csv", "model.json", "diagnostics.json", "draws.json"];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| std::fs::read(dirs[0].join(f)).ok() != std::fs::read(dirs[1].join(f)).ok())
        .collect();
    pass(
        differing.is_empty(),
        format!("{} artifacts compared, differing: {differing:?}", files.len()),
    )
}

// ---------------------------------------------------------------- 8

fn real_data() -> Outcome {
    let Ok(config) = std::env::var("NHPG_REAL_DATA_CONFIG") else {
        return Outcome {
            pass: None,
            detail: "NHPG_REAL_DATA_CONFIG not set".into(),
        };
    };
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fit");
    let status = Command::new(env!("CARGO_BIN_EXE_nhpg"))
        .args(["fit", "--config", &config, "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    if !status.success() {
        return pass(false, format!("fit exited with {status}"));
    }
    let mut rdr = csv::Reader::from_path(out.join("plot_data.csv")).unwrap();
    let (mut r1, mut r2) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let y: f64 = rec[1].parse().unwrap();
        let p: f64 = rec[3].parse().unwrap();
        if p > 0.5 {
            r1.push(y);
        } else {
            r2.push(y);
        }
    }
    let (Ok(d1), Ok(d2)) = (describe(&r1), describe(&r2)) else {
        return pass(false, format!("degenerate split {} / {}", r1.len(), r2.len()));
    };
    let ratio = d1.variance.max(d2.variance) / d1.variance.min(d2.variance);
    let small = r1.len().min(r2.len()) as f64 / (r1.len() + r2.len()) as f64;
    let target = 667.0 / (667.0 + 1388.0);
    pass(
        ratio > 2.0 && (small - target).abs() <= 0.15,
        format!(
            "variance ratio {ratio:.2} (limit 2), smaller-state share {small:.3} vs {target:.3} +/- 0.15"
        ),
    )
}

fn main() {
    // Tests may be filtered by name like `cargo test --test acceptance -- 4`.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, &str, Duration, fn() -> Outcome); 8] = [
        ("1", "Polya-Gamma moments and additivity", Duration::from_secs(10), polya_gamma),
        ("2", "forward-backward exactness", Duration::from_secs(30), forward_backward),
        ("3", "Gibbs joint-distribution validity", Duration::from_secs(300), geweke),
        ("4", "synthetic recovery", Duration::from_secs(900), recovery),
        ("5", "homogeneous reduction", Duration::from_secs(300), homogeneous_reduction),
        ("6", "test-suite calibration", Duration::from_secs(600), calibration),
        ("7", "fit determinism", Duration::MAX, determinism),
        ("8", "real data (non-gating)", Duration::MAX, real_data),
    ];
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let on_time = elapsed <= budget;
        let status = match outcome.pass {
            None => "SKIP",
            Some(true) if on_time => "PASS",
            Some(_) => "FAIL",
        };
        let limit = if budget == Duration::MAX {
            String::new()
        } else {
            format!(", limit {}s", budget.as_secs())
        };
        println!(
            "{status} criterion {id} {name}: {} [{:.1}s{limit}]",
            outcome.detail,
            elapsed.as_secs_f64()
        );
        // The real-data criterion never gates.
        if status == "FAIL" && id != "8" {
            failed += 1;
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
