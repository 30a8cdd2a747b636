use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use bagmil::bagcore::{
    fit_scaler, read_bags_jsonl, read_bags_jsonl_as, split_train_test, transform, write_bags_jsonl, BagDataset, Task,
};
use bagmil::consensus::{build_model_pool, default_pool, run_consensus, GaConfig};
use bagmil::datagen::{
    create_bags_clf, create_bags_reg, generate_additive_bags, generate_cluster_instances, generate_ppi_bags,
    AdditiveSpec, ClfBagSpec, LabelAggregation, PpiSpec, RegBagSpec,
};
use bagmil::estimators::{
    Aggregation, BaseLearnerConfig, EstimatorConfig, ModelFile, NeuralMilConfig, PoolingKind, WrapperConfig,
};
use bagmil::hyperopt::{apply_param, default_param_grid, stepwise_search, ParamGrid, Validation};
use bagmil::metrics::{evaluate, Metric};
use bagmil::pipeline::{
    benchmark_dataset, load_digits, run_experiment, summary_row, Benchmark, DigitFiles, DIGIT_CLASSES, KEY_DIGIT,
    SURROGATE_CENTER_SCALE, SURROGATE_DIM, SURROGATE_NOISE,
};
use bagmil::{MilError, Result};

const DEFAULT_SEED: u64 = 42;

#[derive(Parser, Debug)]
#[command(name = "bagmil", version, about = "Multi-instance learning toolkit")]
struct Cli {
    /// Random seed (default 42).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file with command parameters; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (directory for `benchmark`).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a benchmark dataset as JSONL.
    Generate(GenerateArgs),
    /// Train an estimator and write the model JSON.
    Train(TrainArgs),
    /// Score a trained model on a dataset.
    Evaluate(EvaluateArgs),
    /// Stepwise hyperparameter search.
    Hopt(HoptArgs),
    /// Train a model pool and select a consensus subset.
    Consensus(ConsensusArgs),
    /// Generate, split, scale, train and evaluate one benchmark.
    Benchmark(BenchmarkArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GenKind {
    MnistClf,
    MnistReg,
    ClusterClf,
    ClusterReg,
    Additive,
    Ppi,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    kind: GenKind,
    #[arg(long)]
    num_bags: Option<usize>,
    #[arg(long)]
    bag_size: Option<usize>,
    #[arg(long)]
    key_class: Option<usize>,
    #[arg(long)]
    keys_per_positive: Option<usize>,
    /// Label aggregation for regression digit bags: mean or sum.
    #[arg(long)]
    agg: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    bag_size_min: Option<usize>,
    #[arg(long)]
    bag_size_max: Option<usize>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    center_scale: Option<f64>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
}

/// Parameters of `generate` accepted in a config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateConfig {
    num_bags: Option<usize>,
    bag_size: Option<usize>,
    key_class: Option<usize>,
    keys_per_positive: Option<usize>,
    agg: Option<LabelAggregation>,
    dim: Option<usize>,
    bag_size_min: Option<usize>,
    bag_size_max: Option<usize>,
    noise_sigma: Option<f64>,
    center_scale: Option<f64>,
    seq_len: Option<usize>,
    window: Option<usize>,
    stride: Option<usize>,
    motif1: Option<String>,
    motif2: Option<String>,
    images: Option<PathBuf>,
    labels: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Neural,
    InstanceWrapper,
    BagWrapper,
}

/// Estimator selection shared by `train` and `hopt`.
#[derive(Args, Debug)]
struct EstimatorArgs {
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// regression or classification; inferred from the data when omitted.
    #[arg(long)]
    task: Option<String>,
    /// mean, max, attention, dynamic or gated.
    #[arg(long)]
    pooling: Option<String>,
    /// Wrapper aggregation: mean, max or min.
    #[arg(long)]
    aggregation: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Hold out this fraction of bags and report metrics on it.
    #[arg(long)]
    test_fraction: Option<f64>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args, Debug)]
struct HoptArgs {
    #[arg(long)]
    data: PathBuf,
    /// JSON file with a list of {"param", "candidates"}; the default grid when omitted.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Number of folds; a single 80/20 holdout when omitted.
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Args, Debug)]
struct ConsensusArgs {
    #[arg(long)]
    data: PathBuf,
    /// Epochs of every pool member in the default pool.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
}

/// Parameters of `consensus` accepted in a config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConsensusConfig {
    models: Option<Vec<EstimatorConfig>>,
    ga: Option<GaConfig>,
    test_fraction: Option<f64>,
    val_fraction: Option<f64>,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[arg(value_parser = parse_benchmark)]
    name: Benchmark,
    #[arg(long)]
    num_bags: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    pooling: Option<String>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
}

fn parse_benchmark(s: &str) -> std::result::Result<Benchmark, String> {
    s.parse().map_err(|e: MilError| e.to_string())
}

/// Runs the CLI and returns the process exit code.
pub fn run(args: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Evaluate(a) => cmd_evaluate(cli, a),
        Command::Hopt(a) => cmd_hopt(cli, a),
        Command::Consensus(a) => cmd_consensus(cli, a),
        Command::Benchmark(a) => cmd_benchmark(cli, a),
    }
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| MilError::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn required_out(cli: &Cli) -> Result<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| MilError::Config("--out is required for this command".into()))
}

/// Prints `value` on stdout and, if `out` is set, writes it there.
fn emit(value: &impl Serialize, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    if let Some(path) = out {
        std::fs::write(path, &text)?;
    }
    print_line(&text);
    Ok(())
}

/// Writes one line to stdout; a closed pipe is not an error.
fn print_line(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn dataset_summary(ds: &BagDataset) -> Value {
    let mut s = json!({
        "num_bags": ds.len(),
        "num_instances": ds.num_instances(),
        "dim": ds.dim(),
        "task": ds.task().to_string(),
    });
    if ds.task() == Task::Classification {
        s["num_positive"] = json!(ds.num_positive());
        s["num_negative"] = json!(ds.len() - ds.num_positive());
    }
    s
}

fn cmd_generate(cli: &Cli, a: &GenerateArgs) -> Result<()> {
    let out = required_out(cli)?;
    let cfg: GenerateConfig = load_config(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let num_bags = a.num_bags.or(cfg.num_bags).unwrap_or(match a.kind {
        GenKind::Additive => 3000,
        _ => 2000,
    });
    let bag_size = a.bag_size.or(cfg.bag_size).unwrap_or(5);
    let agg = match &a.agg {
        Some(s) => match s.as_str() {
            "mean" => LabelAggregation::Mean,
            "sum" => LabelAggregation::Sum,
            other => return Err(MilError::Config(format!("unknown aggregation {other:?}"))),
        },
        None => cfg.agg.unwrap_or(LabelAggregation::Mean),
    };
    let digits = || -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
        match a.kind {
            GenKind::MnistClf | GenKind::MnistReg => {
                let images = a.images.as_ref().or(cfg.images.as_ref());
                let labels = a.labels.as_ref().or(cfg.labels.as_ref());
                match (images, labels) {
                    (Some(i), Some(l)) => load_digits(i, l),
                    _ => Err(MilError::Data(
                        "mnist datasets need --images and --labels IDX files".into(),
                    )),
                }
            }
            _ => generate_cluster_instances(
                (5 * num_bags).max(DIGIT_CLASSES),
                a.dim.or(cfg.dim).unwrap_or(SURROGATE_DIM),
                DIGIT_CLASSES,
                a.center_scale.or(cfg.center_scale).unwrap_or(SURROGATE_CENTER_SCALE),
                a.noise_sigma.or(cfg.noise_sigma).unwrap_or(SURROGATE_NOISE),
                seed,
            ),
        }
    };
    let ds = match a.kind {
        GenKind::MnistClf | GenKind::ClusterClf => {
            let (x, y) = digits()?;
            let mut spec = ClfBagSpec::new(
                a.key_class.or(cfg.key_class).unwrap_or(KEY_DIGIT),
                bag_size,
                num_bags,
                seed,
            );
            spec.keys_per_positive = a.keys_per_positive.or(cfg.keys_per_positive).unwrap_or(1);
            create_bags_clf(&x, &y, &spec)?
        }
        GenKind::MnistReg | GenKind::ClusterReg => {
            let (x, y) = digits()?;
            create_bags_reg(
                &x,
                &y,
                &RegBagSpec {
                    bag_size,
                    num_bags,
                    agg,
                    seed,
                },
            )?
        }
        GenKind::Additive => {
            generate_additive_bags(&AdditiveSpec {
                num_bags,
                bag_size_min: a.bag_size_min.or(cfg.bag_size_min).unwrap_or(3),
                bag_size_max: a.bag_size_max.or(cfg.bag_size_max).unwrap_or(8),
                dim: a.dim.or(cfg.dim).unwrap_or(32),
                seed,
            })?
            .dataset
        }
        GenKind::Ppi => {
            let mut spec = PpiSpec::new(num_bags, seed);
            if let Some(v) = a.seq_len.or(cfg.seq_len) {
                spec.seq_len = v;
            }
            if let Some(v) = a.window.or(cfg.window) {
                spec.window = v;
            }
            if let Some(v) = a.stride.or(cfg.stride) {
                spec.stride = v;
            }
            if let Some(v) = cfg.motif1 {
                spec.motif1 = v;
            }
            if let Some(v) = cfg.motif2 {
                spec.motif2 = v;
            }
            generate_ppi_bags(&spec)?
        }
    };
    write_bags_jsonl(&ds, out)?;
    emit(&dataset_summary(&ds), None)
}

fn parse_task(s: &str) -> Result<Task> {
    s.parse()
}

/// Estimator config from `--config` (if any) with flags applied on top.
fn build_estimator(cli: &Cli, a: &EstimatorArgs, data_task: Task) -> Result<EstimatorConfig> {
    let from_file: Option<EstimatorConfig> = match cli.config.as_deref() {
        None => None,
        Some(p) => Some(
            load_config::<Option<EstimatorConfig>>(Some(p))?
                .ok_or_else(|| MilError::Config(format!("{}: expected an estimator config", p.display())))?,
        ),
    };
    let task = match &a.task {
        Some(t) => parse_task(t)?,
        None => from_file.as_ref().map_or(data_task, EstimatorConfig::task),
    };
    let mut config = match (from_file, a.model) {
        (Some(c), None) => c,
        (_, kind) => {
            let aggregation: Aggregation = a.aggregation.as_deref().unwrap_or("mean").parse()?;
            match kind.unwrap_or(ModelKind::Neural) {
                ModelKind::Neural => EstimatorConfig::Neural(NeuralMilConfig::new(task)),
                ModelKind::InstanceWrapper => EstimatorConfig::InstanceWrapper(WrapperConfig::new(aggregation, task)),
                ModelKind::BagWrapper => EstimatorConfig::BagWrapper(WrapperConfig::new(aggregation, task)),
            }
        }
    };
    if config.task() != task {
        return Err(MilError::Config(format!(
            "estimator task {} differs from requested task {task}",
            config.task()
        )));
    }
    if let Some(p) = &a.pooling {
        let pooling: PoolingKind = p.parse()?;
        config = apply_param(&config, "pooling", &serde_json::to_value(pooling)?)?;
    }
    if let (Some(agg), false) = (&a.aggregation, matches!(config, EstimatorConfig::Neural(_))) {
        let agg: Aggregation = agg.parse()?;
        config = apply_param(&config, "aggregation", &serde_json::to_value(agg)?)?;
    }
    for (name, value) in [
        ("epochs", a.epochs.map(|v| json!(v))),
        ("learning_rate", a.learning_rate.map(|v| json!(v))),
        ("weight_decay", a.weight_decay.map(|v| json!(v))),
    ] {
        if let Some(v) = value {
            config = apply_param(&config, name, &v)?;
        }
    }
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    } else if cli.config.is_none() {
        config.set_seed(DEFAULT_SEED);
    }
    config.validate()?;
    Ok(config)
}

/// Reads a dataset, honouring an explicit task when one is requested.
fn read_data(path: &Path, task: Option<Task>) -> Result<BagDataset> {
    match task {
        Some(t) => read_bags_jsonl_as(path, t),
        None => read_bags_jsonl(path),
    }
}

fn requested_task(cli: &Cli, a: &EstimatorArgs) -> Result<Option<Task>> {
    if let Some(t) = &a.task {
        return parse_task(t).map(Some);
    }
    match cli.config.as_deref() {
        Some(p) => Ok(load_config::<Option<EstimatorConfig>>(Some(p))?.map(|c| c.task())),
        None => Ok(None),
    }
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let out = required_out(cli)?;
    let ds = read_data(&a.data, requested_task(cli, &a.estimator)?)?;
    let config = build_estimator(cli, &a.estimator, ds.task())?;
    let seed = config.seed();
    let (train, test) = match a.test_fraction {
        Some(f) => {
            let (tr, te) = split_train_test(&ds, f, seed)?;
            (tr, Some(te))
        }
        None => (ds, None),
    };
    let scaler = fit_scaler(&train)?;
    let train = transform(&scaler, &train)?;
    info!("training {} on {} bags", config.label(), train.len());
    let model = config.fit(&train)?;
    for (epoch, loss) in model.history().iter().enumerate() {
        info!("epoch {} loss {loss:.6}", epoch + 1);
    }
    let report = match &test {
        Some(te) => Some(evaluate(&model, &transform(&scaler, te)?)?),
        None => None,
    };
    let history = model.history().to_vec();
    let file = ModelFile {
        model,
        scaler: Some(scaler),
    };
    file.save(out)?;
    let mut summary = json!({
        "model": out.display().to_string(),
        "estimator": config.label(),
        "train_bags": train.len(),
        "epochs": history.len(),
        "initial_loss": history.first(),
        "final_loss": history.last(),
    });
    if let Some(r) = report {
        summary["test_report"] = serde_json::to_value(r)?;
    }
    emit(&summary, None)
}

fn cmd_evaluate(cli: &Cli, a: &EvaluateArgs) -> Result<()> {
    let file = ModelFile::load(&a.model)?;
    let ds = read_bags_jsonl_as(&a.data, file.model.task())?;
    let ds = match &file.scaler {
        Some(s) => transform(s, &ds)?,
        None => ds,
    };
    let report = evaluate(&file.model, &ds)?;
    emit(&report, cli.out.as_deref())
}

fn cmd_hopt(cli: &Cli, a: &HoptArgs) -> Result<()> {
    let ds = read_data(&a.data, requested_task(cli, &a.estimator)?)?;
    let config = build_estimator(cli, &a.estimator, ds.task())?;
    let grid: ParamGrid = match &a.grid {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| MilError::Config(format!("{}: {e}", p.display())))?
        }
        None => default_param_grid(&config),
    };
    let validation = match a.folds {
        Some(k) => Validation::KFold { k },
        None => Validation::default(),
    };
    let scaled = transform(&fit_scaler(&ds)?, &ds)?;
    let result = stepwise_search(
        &config,
        &grid,
        &scaled,
        validation,
        Metric::for_task(ds.task()),
        config.seed(),
    )?;
    emit(&result, cli.out.as_deref())
}

fn cmd_consensus(cli: &Cli, a: &ConsensusArgs) -> Result<()> {
    let cfg: ConsensusConfig = load_config(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let ds = read_bags_jsonl(&a.data)?;
    let task = cfg
        .models
        .as_ref()
        .and_then(|m| m.first())
        .map_or(ds.task(), EstimatorConfig::task);
    let ds = if task == ds.task() {
        ds
    } else {
        read_bags_jsonl_as(&a.data, task)?
    };
    let (rest, test) = split_train_test(&ds, cfg.test_fraction.unwrap_or(0.2), seed)?;
    let (train, val) = split_train_test(&rest, cfg.val_fraction.unwrap_or(0.2), seed.wrapping_add(1))?;
    let scaler = fit_scaler(&train)?;
    let (train, val, test) = (
        transform(&scaler, &train)?,
        transform(&scaler, &val)?,
        transform(&scaler, &test)?,
    );
    let mut models = match cfg.models {
        Some(m) => m,
        None => {
            let epochs = a.epochs.unwrap_or(50);
            let mut neural = Benchmark::Additive.desk_config(seed);
            neural.epochs = epochs;
            let base = BaseLearnerConfig {
                hidden: vec![64],
                epochs,
                seed,
                ..Default::default()
            };
            default_pool(task, &neural, &base)
        }
    };
    if cli.seed.is_some() {
        models.iter_mut().for_each(|m| m.set_seed(seed));
    }
    let mut ga = cfg.ga.unwrap_or_default();
    ga.seed = cli.seed.unwrap_or(ga.seed);
    if let Some(g) = a.generations {
        ga.generations = g;
    }
    if let Some(p) = a.population {
        ga.population = p;
    }
    let pool = build_model_pool(&train, &val, &test, &models)?;
    let report = run_consensus(&pool, val.labels(), test.labels(), Metric::for_task(task), &ga)?;
    emit(&report, cli.out.as_deref())
}

fn cmd_benchmark(cli: &Cli, a: &BenchmarkArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("benchmark-{}", a.name.name())));
    let digits = DigitFiles {
        images: a.images.clone(),
        labels: a.labels.clone(),
    };
    if matches!(a.name, Benchmark::MnistClf | Benchmark::MnistReg) && !digits.is_complete() {
        warn!(
            "benchmark {} runs on the cluster surrogate (no IDX files given)",
            a.name.name()
        );
    }
    let num_bags = a.num_bags.unwrap_or(a.name.default_num_bags());
    let ds = benchmark_dataset(a.name, num_bags, seed, &digits)?;
    let mut config = a.name.desk_config(seed);
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if let Some(p) = &a.pooling {
        config.pooling = p.parse()?;
    }
    let config = EstimatorConfig::Neural(config);
    config.validate()?;
    let outcome = run_experiment(&ds, &config, seed)?;
    std::fs::create_dir_all(&out_dir)?;
    write_bags_jsonl(&ds, out_dir.join("dataset.jsonl"))?;
    outcome.model.save(out_dir.join("model.json"))?;
    std::fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&outcome.report)?,
    )?;
    print_line(&summary_row(a.name.name(), &outcome.report));
    Ok(())
}
