//! The `pcomp` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::data::{make_gaussian_task, GenerationMode};
use crate::diagnostics::{run_suite, SuiteConfig};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorKind, EstimatorSpec};
use crate::harness::{fraction_sweep, run_experiment, ExperimentConfig, ExperimentTask};
use crate::io;
use crate::model::ModelSpec;
use crate::prior::ClassPrior;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIAGNOSTIC: i32 = 3;

// Output goes to stdout; a closed pipe is not an error worth reporting.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "PCOMP_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "pcomp",
    version,
    about = "Binary classification from pairwise comparisons"
)]
struct Cli {
    /// TOML file with default option values; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate noisy pointwise sets from pairwise comparisons and write them as CSV.
    Gen(GenArgs),
    /// Train and evaluate methods over several seeds.
    Run(RunArgs),
    /// Train on growing fractions of the generated pairs.
    Sweep(SweepArgs),
    /// Run the property suite and report PASS/FAIL per check.
    Diag(DiagArgs),
}

/// Options describing where the training pairs come from.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
struct TaskOpts {
    /// Synthetic task (only `gaussian`); ignored when --data is given.
    #[arg(long)]
    task: Option<String>,
    /// Class prior of the positive class.
    #[arg(long)]
    prior: Option<f64>,
    /// Number of training pairs.
    #[arg(long)]
    n: Option<usize>,
    /// Feature dimension of the Gaussian task.
    #[arg(long)]
    dims: Option<usize>,
    /// Distance between the Gaussian class means.
    #[arg(long)]
    separation: Option<f64>,
    /// Seed of the Gaussian task layout and the test set.
    #[arg(long)]
    task_seed: Option<u64>,
    /// rejection, pointwise or swap.
    #[arg(long)]
    mode: Option<String>,
    /// Labeled CSV pool (last column `label`) to draw pairs from.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Labeled CSV test set used with --data.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Binarization of class tokens, `even-odd` or `tok:+1,tok:-1,...`.
    #[arg(long)]
    map: Option<String>,
    /// Standardize features with training statistics.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    normalize: Option<bool>,
}

/// Options controlling training.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
struct TrainOpts {
    /// Number of seeds K; seeds 0..K are used.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// linear or mlp.
    #[arg(long)]
    model: Option<String>,
    /// Hidden widths of the MLP, comma separated.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Weight of the teacher consistency penalty.
    #[arg(long)]
    consistency_weight: Option<f64>,
    /// Moving-average coefficient of the teacher.
    #[arg(long)]
    teacher_alpha: Option<f64>,
    /// Fraction of epochs over which the consistency weight ramps up.
    #[arg(long)]
    ramp_up: Option<f64>,
    /// Penalize teacher disagreement on selected examples only.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    consistency_on_selected: Option<bool>,
    /// Evaluate the student instead of the teacher.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    evaluate_student: Option<bool>,
    /// Output directory (default: $PCOMP_OUT_DIR or `pcomp-out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    task: TaskOpts,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV file (default: pairs.csv in the output directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    task: TaskOpts,
    #[command(flatten)]
    train: TrainOpts,
    /// Comma separated methods: unbiased, relu, abs, progressive, teacher, biased, noisy-unbiased.
    #[arg(long)]
    methods: Option<String>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    task: TaskOpts,
    #[command(flatten)]
    train: TrainOpts,
    #[arg(long)]
    method: Option<String>,
    /// Ascending fractions in (0, 1], comma separated.
    #[arg(long)]
    fractions: Option<String>,
}

#[derive(Debug, Args)]
struct DiagArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Regenerated datasets per unbiasedness check (at least 100).
    #[arg(long)]
    replicates: Option<usize>,
    /// Pairs per regenerated dataset.
    #[arg(long)]
    n: Option<usize>,
}

/// Values read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
struct FileConfig {
    #[serde(flatten)]
    task: TaskOpts,
    #[serde(flatten)]
    train: TrainOpts,
    seed: Option<u64>,
    methods: Option<String>,
    method: Option<String>,
    fractions: Option<String>,
    replicates: Option<usize>,
}

macro_rules! merge_fields {
    ($flags:expr, $file:expr; $($field:ident),*) => {
        $( if $flags.$field.is_none() { $flags.$field = $file.$field.take(); } )*
    };
}

impl TaskOpts {
    fn merge(&mut self, file: &mut TaskOpts) {
        merge_fields!(self, file; task, prior, n, dims, separation, task_seed, mode, data, test, map, normalize);
    }
}

impl TrainOpts {
    fn merge(&mut self, file: &mut TrainOpts) {
        merge_fields!(self, file; seeds, epochs, model, hidden, lr, batch_size, weight_decay,
            consistency_weight, teacher_alpha, ramp_up, consistency_on_selected, evaluate_student, out);
    }
}

fn usage(message: impl Into<String>) -> Error {
    Error::InvalidArgument(message.into())
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("pcomp-out"))
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| usage(format!("invalid {what} {s:?}")))
        })
        .collect()
}

fn parse_prior(p: f64) -> Result<ClassPrior> {
    ClassPrior::new(p)
        .map_err(|_| usage(format!("--prior must lie strictly inside (0, 1), got {p}")))
}

/// The data source together with the prior it is sampled at.
fn build_task(opts: &TaskOpts) -> Result<ExperimentTask> {
    if let Some(path) = &opts.data {
        let map = match &opts.map {
            Some(m) => io::BinarizationMap::parse(m)?,
            None => io::BinarizationMap::even_odd_digits(),
        };
        let normalize = opts.normalize.unwrap_or(false);
        let (train, test) = match &opts.test {
            Some(test) => io::load_train_test(path, test, &map, normalize)?,
            None => {
                let pool = io::load_dataset(path, &map, normalize)?;
                (pool.clone(), pool)
            }
        };
        let prior = match opts.prior {
            Some(p) => parse_prior(p)?,
            None => {
                let pos = train.iter().filter(|e| e.label.is_positive()).count();
                ClassPrior::new(pos as f64 / train.len() as f64)
                    .map_err(|_| Error::Sampler("the pool contains a single class".into()))?
            }
        };
        return ExperimentTask::pool(&train, test, prior);
    }
    match opts.task.as_deref().unwrap_or("gaussian") {
        "gaussian" => {}
        other => return Err(usage(format!("unknown task {other:?}"))),
    }
    let prior = parse_prior(opts.prior.unwrap_or(0.5))?;
    let task = make_gaussian_task(
        opts.dims.unwrap_or(1),
        opts.separation.unwrap_or(3.0),
        prior,
        opts.task_seed.unwrap_or(0),
    )?;
    Ok(ExperimentTask::Gaussian(task))
}

fn generation_mode(opts: &TaskOpts) -> Result<GenerationMode> {
    opts.mode.as_deref().unwrap_or("rejection").parse()
}

fn pair_count(opts: &TaskOpts) -> Result<usize> {
    match opts.n.unwrap_or(2000) {
        0 => Err(usage("--n must be positive")),
        n => Ok(n),
    }
}

fn experiment_config(task: &TaskOpts, train: &TrainOpts) -> Result<ExperimentConfig> {
    let model = match train.model.as_deref().unwrap_or("linear") {
        "linear" => ModelSpec::Linear,
        "mlp" => ModelSpec::Mlp {
            hidden: parse_list(train.hidden.as_deref().unwrap_or("64,64"), "hidden width")?,
        },
        other => return Err(usage(format!("unknown model {other:?}"))),
    };
    let default_epochs = if model == ModelSpec::Linear { 100 } else { 200 };
    Ok(ExperimentConfig {
        model,
        epochs: train.epochs.unwrap_or(default_epochs),
        batch_size: train.batch_size.unwrap_or(256),
        learning_rate: train.lr.unwrap_or(1e-3),
        weight_decay: train.weight_decay.unwrap_or(1e-5),
        ramp_up_fraction: train.ramp_up.unwrap_or(0.1),
        evaluate_teacher: !train.evaluate_student.unwrap_or(false),
        mode: generation_mode(task)?,
        test_seed: task.task_seed.unwrap_or(0),
    })
}

fn estimator_specs(
    names: &str,
    prior: ClassPrior,
    train: &TrainOpts,
) -> Result<Vec<EstimatorSpec>> {
    let kinds: Vec<EstimatorKind> = parse_list(names, "method")?;
    if kinds.is_empty() {
        return Err(usage("no methods given"));
    }
    let specs: Vec<EstimatorSpec> = kinds
        .into_iter()
        .map(|k| {
            let mut spec = EstimatorSpec::new(k, prior);
            if let Some(w) = train.consistency_weight {
                spec.consistency_weight = w;
            }
            if let Some(a) = train.teacher_alpha {
                spec.teacher_alpha = a;
            }
            spec.consistency_on_selected = train.consistency_on_selected.unwrap_or(false);
            spec
        })
        .collect();
    for spec in &specs {
        spec.validate()?;
    }
    Ok(specs)
}

fn seed_list(train: &TrainOpts) -> Result<Vec<u64>> {
    match train.seeds.unwrap_or(5) {
        0 => Err(usage("--seeds must be positive")),
        k => Ok((0..k as u64).collect()),
    }
}

fn cmd_gen(mut args: GenArgs, mut file: FileConfig) -> Result<i32> {
    args.task.merge(&mut file.task);
    let n = pair_count(&args.task)?;
    let task = build_task(&args.task)?;
    let sets = task.training_sets(
        n,
        generation_mode(&args.task)?,
        args.seed.or(file.seed).unwrap_or(0),
    )?;
    let out = args
        .out
        .or(file.train.out)
        .unwrap_or_else(|| default_out_dir().join("pairs.csv"));
    io::write_pointwise_csv(io::create(&out)?, &sets)?;
    say!("wrote {} pairs to {}", sets.len(), out.display());
    Ok(EXIT_OK)
}

fn cmd_run(mut args: RunArgs, mut file: FileConfig) -> Result<i32> {
    args.task.merge(&mut file.task);
    args.train.merge(&mut file.train);
    let n = pair_count(&args.task)?;
    let config = experiment_config(&args.task, &args.train)?;
    let task = build_task(&args.task)?;
    let methods_text = args
        .methods
        .or(file.methods)
        .unwrap_or_else(|| "unbiased".into());
    let specs = estimator_specs(&methods_text, task.prior(), &args.train)?;
    let seeds = seed_list(&args.train)?;
    let reports = run_experiment(&task, &specs, n, &seeds, &config)?;

    let dir = args.train.out.unwrap_or_else(default_out_dir);
    io::write_results_csv(io::create(&dir.join("results.csv"))?, &reports)?;
    io::write_summary_jsonl(io::create(&dir.join("summary.jsonl"))?, &reports)?;
    io::write_histories_jsonl(io::create(&dir.join("histories.jsonl"))?, &reports)?;
    for r in &reports {
        say!(
            "{:<16} prior {:.3} n {:>6}  accuracy {:.4} +- {:.4}",
            r.method,
            r.prior,
            r.n_pairs,
            r.mean,
            r.std
        );
    }
    say!("results written to {}", dir.display());
    Ok(EXIT_OK)
}

fn cmd_sweep(mut args: SweepArgs, mut file: FileConfig) -> Result<i32> {
    args.task.merge(&mut file.task);
    args.train.merge(&mut file.train);
    let n = pair_count(&args.task)?;
    let config = experiment_config(&args.task, &args.train)?;
    let task = build_task(&args.task)?;
    let method_text = args
        .method
        .or(file.method)
        .unwrap_or_else(|| "unbiased".into());
    let specs = estimator_specs(&method_text, task.prior(), &args.train)?;
    if specs.len() != 1 {
        return Err(usage("--method takes a single method"));
    }
    let fractions: Vec<f64> = parse_list(
        args.fractions
            .or(file.fractions)
            .as_deref()
            .unwrap_or("0.1,0.5,1.0"),
        "fraction",
    )?;
    let seeds = seed_list(&args.train)?;
    let rows = fraction_sweep(&task, specs[0], n, &fractions, &seeds, &config)?;

    let dir = args.train.out.unwrap_or_else(default_out_dir);
    io::write_sweep_csv(io::create(&dir.join("sweep.csv"))?, &rows)?;
    for r in &rows {
        say!(
            "fraction {:.3} n {:>6}  accuracy {:.4} +- {:.4}",
            r.fraction,
            r.n,
            r.mean,
            r.std
        );
    }
    say!("sweep written to {}", dir.join("sweep.csv").display());
    Ok(EXIT_OK)
}

fn cmd_diag(args: DiagArgs, file: FileConfig) -> Result<i32> {
    let config = SuiteConfig {
        seed: args.seed.or(file.seed).unwrap_or(0),
        replicates: args.replicates.or(file.replicates).unwrap_or(1000),
        n: args.n.or(file.task.n).unwrap_or(500),
    };
    let results = run_suite(config)?;
    for r in &results {
        say!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    say!("{} checks, {} failed", results.len(), failed);
    Ok(if failed == 0 {
        EXIT_OK
    } else {
        EXIT_DIAGNOSTIC
    })
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = load_config(cli.config.as_deref()).and_then(|file| match cli.command {
        Command::Gen(args) => cmd_gen(args, file),
        Command::Run(args) => cmd_run(args, file),
        Command::Sweep(args) => cmd_sweep(args, file),
        Command::Diag(args) => cmd_diag(args, file),
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_data_error() {
                EXIT_DATA
            } else {
                EXIT_USAGE
            }
        }
    }
}
