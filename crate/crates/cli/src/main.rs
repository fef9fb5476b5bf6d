//! `quantify`: estimate class prevalences under prior shift, test the shift
//! assumption, choose RKHS scores, fit prevalence curves and run simulation
//! studies.
//!
//! Data go to stdout, diagnostics to stderr. Exit codes: 0 success, 1 input
//! or I/O error, 2 violated statistical contract or invalid arguments.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use quantify_core::data::{load_csv, RawDataset, Schema};
use quantify_core::estimators::{
    classify_and_count, combined_estimate, em_estimate, multiclass_ratio, ratio_ci, ratio_estimate, ratio_variance,
    GroupCounts, Interval, Regime, ThetaEstimate, DEFAULT_MAX_CONDITION, DEFAULT_MIN_DENOM, EM_MAX_ITER, EM_TOL,
};
use quantify_core::kernel::KernelSpec;
use quantify_core::logistic::fit_logistic;
use quantify_core::regression::{cc_regress, midpoint_grid, ratio_regress, Bandwidth};
use quantify_core::rkhs::{select_g, GammaGrid, RkhsSelection};
use quantify_core::score::score_dataset;
use quantify_core::shift_test::{shift_test, DEFAULT_GRID_SIZE, DEFAULT_REPLICATES};
use quantify_core::simulate::studies::{DEFAULT_LABEL_COUNTS, DEFAULT_LADDER, DEFAULT_POWER_B, DEFAULT_THETAS};
use quantify_core::simulate::{
    preset_sizes, run_combined_study, run_coverage_study, run_mse_study, run_multiclass_study, run_power_study,
    run_regression_study, ExperimentReport, Method, ScenarioSpec, Sizes,
};
use quantify_core::{Error, ScoreFunction};

const LOGISTIC_MAX_ITER: usize = 200;
const LOGISTIC_TOL: f64 = 1e-8;

#[derive(Parser)]
#[command(name = "quantify", version, about = "Ratio estimators for quantification under prior shift")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output format; scalar results default to json, curves to csv.
    #[arg(long, global = true, value_enum)]
    output: Option<Format>,

    /// Suppress informational messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the class prevalence of the unlabeled rows.
    Estimate(EstimateArgs),
    /// Monte Carlo test of the weak prior shift assumption.
    TestShift(TestShiftArgs),
    /// Choose an RKHS score by minimizing the held-out estimated MSE.
    SelectG(SelectGArgs),
    /// Prevalence as a function of a scalar covariate.
    Regress(RegressArgs),
    /// Run a simulation study.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Label column.
    #[arg(long, default_value = "y")]
    label: String,
    /// Set-indicator column: 1 labeled, 0 unlabeled.
    #[arg(long, default_value = "s")]
    set: String,
    /// Feature columns for fitted scores; defaults to every other column.
    #[arg(long, value_delimiter = ',', conflicts_with = "score_columns")]
    features: Option<Vec<String>>,
    /// Columns holding precomputed scores; defaults to every feature column.
    #[arg(long, value_delimiter = ',')]
    score_columns: Option<Vec<String>>,
    /// Fit the built-in logistic regression on the labeled rows.
    #[arg(long, conflicts_with_all = ["score_columns", "g_json"])]
    logistic: bool,
    /// Score function JSON, e.g. the output of `select-g`.
    #[arg(long, conflicts_with = "score_columns")]
    g_json: Option<PathBuf>,
}

impl DataArgs {
    fn schema(&self, covariate: Option<String>) -> Schema {
        Schema {
            label: Some(self.label.clone()),
            set: self.set.clone(),
            covariate,
            features: self.score_columns.clone().or_else(|| self.features.clone()),
        }
    }

    fn load(&self, covariate: Option<String>) -> Result<RawDataset, Error> {
        load_csv(&self.input, &self.schema(covariate))
    }

    fn score_function(&self, data: &RawDataset) -> Result<ScoreFunction, Error> {
        if let Some(path) = &self.g_json {
            return load_score_function(path);
        }
        if self.logistic {
            return fit_logistic(data, LOGISTIC_MAX_ITER, LOGISTIC_TOL);
        }
        Ok(ScoreFunction::External {
            columns: (0..data.dim()).collect(),
        })
    }
}

/// Accepts a bare score function or a saved RKHS selection.
fn load_score_function(path: &Path) -> Result<ScoreFunction, Error> {
    let text = std::fs::read_to_string(path)?;
    if let Ok(selection) = serde_json::from_str::<RkhsSelection>(&text) {
        return Ok(selection.score_function());
    }
    Ok(serde_json::from_str(&text)?)
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimateMethod {
    Ratio,
    Cc,
    Em,
    Multiclass,
    /// Ratio estimate combined with labels present on unlabeled rows.
    Combined,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "ratio")]
    method: EstimateMethod,
    /// Confidence level of the normal interval (ratio only).
    #[arg(long)]
    ci: Option<f64>,
    /// Variance regime: auto, dense or sparse.
    #[arg(long, default_value = "auto")]
    regime: String,
    #[arg(long, default_value_t = DEFAULT_MIN_DENOM)]
    min_denom: f64,
    /// Classification threshold for `cc`.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Training prevalence for `em`; defaults to the labeled class-1 share.
    #[arg(long)]
    theta_train: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MAX_CONDITION)]
    max_condition: f64,
}

#[derive(Args)]
struct TestShiftArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Monte Carlo replicates.
    #[arg(short = 'B', long = "B", default_value_t = DEFAULT_REPLICATES)]
    b: usize,
    /// Number of mixture weights in the grid over [0, 1].
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    grid: usize,
}

#[derive(Args)]
struct SelectGArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Kernel family: linear or gaussian.
    #[arg(long, default_value = "gaussian")]
    kernel: String,
    /// Gaussian bandwidth; defaults to the median pairwise distance.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Ridge values to try; defaults to a fixed grid plus the median
    /// eigenvalue of the within-class covariance.
    #[arg(long, value_delimiter = ',')]
    gamma_grid: Option<Vec<f64>>,
    /// Write the selection (kernel, weights, anchors, gamma) to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegressMethod {
    Ratio,
    Cc,
}

#[derive(Args)]
struct RegressArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Scalar covariate column.
    #[arg(long, default_value = "z")]
    covariate: String,
    #[arg(long, value_enum, default_value = "ratio")]
    method: RegressMethod,
    /// Evaluation points, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Number of midpoints over the unlabeled covariate range when no grid
    /// is given.
    #[arg(long, default_value_t = 100)]
    grid_size: usize,
    /// `rule`, `cv` or a positive number.
    #[arg(long, default_value = "rule")]
    bandwidth: String,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_DENOM)]
    min_denom: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Study {
    Mse,
    Coverage,
    Power,
    Combined,
    Multiclass,
    Regression,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "mse")]
    study: Study,
    /// Scenario kind: gaussian, exponential, gaussian_exponential, beta,
    /// multiclass_gaussian, regression_sine or resample_corpus.
    #[arg(long, default_value = "gaussian")]
    scenario: String,
    /// Scenario JSON (see --print-spec); overrides --scenario.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Benchmark sample sizes: cancer, candles, block, spam or bank.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    n_unlabeled: Option<usize>,
    #[arg(long)]
    n0: Option<usize>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Labeled corpus for resample_corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Label column of the corpus.
    #[arg(long, default_value = "y")]
    corpus_label: String,
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    #[arg(long, value_delimiter = ',', default_values_t = ["cc".to_string(), "ac".into(), "ratio".into(), "raw".into(), "em".into()])]
    methods: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    thetas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(short = 'B', long = "B", default_value_t = DEFAULT_POWER_B)]
    b: usize,
    /// Mixture-weight grid of the shift test.
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    grid: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value = "auto")]
    regime: String,
    /// Target label counts for the combined study.
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<usize>>,
    /// Sample sizes for the multiclass study.
    #[arg(long, value_delimiter = ',')]
    ladder: Option<Vec<usize>>,
    /// Signal strengths for the regression study.
    #[arg(long, value_delimiter = ',')]
    mus: Option<Vec<f64>>,
    /// Grid points of the regression study.
    #[arg(long, default_value_t = 100)]
    grid_size: usize,
    /// Print the resolved scenario JSON and exit.
    #[arg(long)]
    print_spec: bool,
    /// Directory for records.csv and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Ctx {
    seed: u64,
    output: Option<Format>,
    quiet: bool,
}

impl Ctx {
    fn note(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx {
        seed: cli.seed,
        output: cli.output,
        quiet: cli.quiet,
    };
    let result = configure_threads().and_then(|()| run(&ctx, cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input() { 1 } else { 2 })
        }
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("QUANTIFY_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("QUANTIFY_THREADS must be a count, got `{raw}`")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    Ok(())
}

fn run(ctx: &Ctx, command: Command) -> Result<(), Error> {
    match command {
        Command::Estimate(args) => estimate(ctx, &args),
        Command::TestShift(args) => test_shift(ctx, &args),
        Command::SelectG(args) => select(ctx, &args),
        Command::Regress(args) => regress(ctx, &args),
        Command::Simulate(args) => simulate(ctx, &args),
    }
}

/// Writes one value as pretty JSON, or as a one-row CSV of its flattened
/// fields.
fn emit<T: Serialize>(ctx: &Ctx, value: &T) -> Result<(), Error> {
    let mut stdout = std::io::stdout().lock();
    match ctx.output.unwrap_or(Format::Json) {
        Format::Json => writeln!(stdout, "{}", serde_json::to_string_pretty(value)?)?,
        Format::Csv => {
            let mut fields = Vec::new();
            flatten("", &serde_json::to_value(value)?, &mut fields);
            let mut w = csv::Writer::from_writer(stdout);
            w.write_record(fields.iter().map(|(k, _)| k))?;
            w.write_record(fields.iter().map(|(_, v)| v))?;
            w.flush()?;
        }
    }
    Ok(())
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_owned() } else { format!("{prefix}.{k}") };
    match value {
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Array(items) => items
            .iter()
            .enumerate()
            .for_each(|(i, v)| flatten(&key(&i.to_string()), v, out)),
        Value::Null => out.push((prefix.to_owned(), String::new())),
        Value::String(s) => out.push((prefix.to_owned(), s.clone())),
        other => out.push((prefix.to_owned(), other.to_string())),
    }
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    method: &'static str,
    #[serde(flatten)]
    estimate: &'a ThetaEstimate,
    /// The interval intersected with [0, 1].
    ci_clipped: Option<Interval>,
}

#[derive(Serialize)]
struct Tagged<'a, T> {
    method: &'static str,
    #[serde(flatten)]
    estimate: &'a T,
}

fn estimate(ctx: &Ctx, args: &EstimateArgs) -> Result<(), Error> {
    let data = args.data.load(None)?;
    let g = args.data.score_function(&data)?;
    let scores = score_dataset(&data, &g)?;
    let scalar = |method, est: &ThetaEstimate| {
        emit(
            ctx,
            &EstimateOutput {
                method,
                estimate: est,
                ci_clipped: est.ci.map(|c| c.clipped()),
            },
        )
    };
    match args.method {
        EstimateMethod::Ratio => {
            let mut est = ratio_estimate(&scores, args.min_denom)?;
            if let Some(level) = args.ci {
                let regime: Regime = args.regime.parse()?;
                est = ratio_ci(&ratio_variance(&est, GroupCounts::of(&scores), regime)?, level)?;
            }
            scalar("ratio", &est)
        }
        EstimateMethod::Cc => scalar("cc", &classify_and_count(&scores, args.threshold)?),
        EstimateMethod::Em => {
            let theta_train = args.theta_train.unwrap_or_else(|| {
                let n1 = scores.class_count(1) as f64;
                n1 / scores.n_labeled() as f64
            });
            scalar("em", &em_estimate(&scores, theta_train, EM_MAX_ITER, EM_TOL)?)
        }
        EstimateMethod::Multiclass => emit(
            ctx,
            &Tagged {
                method: "multiclass",
                estimate: &multiclass_ratio(&scores, args.max_condition)?,
            },
        ),
        EstimateMethod::Combined => {
            let regime: Regime = args.regime.parse()?;
            let ratio = ratio_variance(&ratio_estimate(&scores, args.min_denom)?, GroupCounts::of(&scores), regime)?;
            let targets: Vec<usize> = data
                .unlabeled_indices()
                .into_iter()
                .filter_map(|i| data.labels()[i])
                .collect();
            emit(
                ctx,
                &Tagged {
                    method: "combined",
                    estimate: &combined_estimate(&ratio, &targets)?,
                },
            )
        }
    }
}

fn test_shift(ctx: &Ctx, args: &TestShiftArgs) -> Result<(), Error> {
    let data = args.data.load(None)?;
    let scores = score_dataset(&data, &args.data.score_function(&data)?)?;
    emit(ctx, &shift_test(&scores, args.b, ctx.seed, args.grid)?)
}

fn select(ctx: &Ctx, args: &SelectGArgs) -> Result<(), Error> {
    let data = args.data.load(None)?;
    let kernel = match KernelSpec::parse(&args.kernel, args.bandwidth)? {
        Some(k) => k,
        None => KernelSpec::gaussian(quantify_core::rkhs::default_bandwidth(&data))?,
    };
    let grid = match &args.gamma_grid {
        Some(g) => GammaGrid::Fixed(g.clone()),
        None => GammaGrid::Default,
    };
    let pilot = fit_logistic(&data, LOGISTIC_MAX_ITER, LOGISTIC_TOL)?;
    let selection = select_g(&data, &kernel, &grid, ctx.seed, &pilot)?;
    if let Some(path) = &args.out {
        std::fs::write(path, serde_json::to_string_pretty(&selection)? + "\n")?;
        ctx.note(&format!("wrote {}", path.display()));
    }
    emit(ctx, &selection)
}

fn parse_bandwidth(text: &str) -> Result<Bandwidth, Error> {
    match text {
        "rule" => Ok(Bandwidth::Rule),
        "cv" => Ok(Bandwidth::CrossValidated),
        other => other
            .parse::<f64>()
            .ok()
            .filter(|h| *h > 0.0 && h.is_finite())
            .map(Bandwidth::Fixed)
            .ok_or_else(|| Error::InvalidArgument(format!("bandwidth must be `rule`, `cv` or positive, got `{other}`"))),
    }
}

fn regress(ctx: &Ctx, args: &RegressArgs) -> Result<(), Error> {
    let data = args.data.load(Some(args.covariate.clone()))?;
    let g = args.data.score_function(&data)?;
    let bandwidth = parse_bandwidth(&args.bandwidth)?;
    let grid = match &args.grid {
        Some(grid) => grid.clone(),
        None => {
            let z = data.covariate().expect("covariate requested");
            let values: Vec<f64> = data.unlabeled_indices().iter().filter_map(|&i| z[i]).collect();
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if values.is_empty() || args.grid_size == 0 {
                return Err(Error::Empty("regression grid"));
            }
            midpoint_grid(lo, hi, args.grid_size)
        }
    };
    let curve = match args.method {
        RegressMethod::Ratio => ratio_regress(&data, &g, &grid, bandwidth, args.min_denom)?,
        RegressMethod::Cc => cc_regress(&data, &g, args.threshold, &grid, bandwidth)?,
    };
    match ctx.output.unwrap_or(Format::Csv) {
        Format::Csv => curve.write_csv(std::io::stdout().lock()),
        Format::Json => emit(ctx, &curve),
    }
}

fn default_gammas(spec: &ScenarioSpec) -> Vec<f64> {
    let range = |lo: f64, hi: f64, step: f64| -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(|i| lo + i as f64 * step).collect()
    };
    match spec.kind() {
        "gaussian" => range(-3.0, 2.0, 0.5),
        "gaussian_exponential" => range(-2.0, 3.0, 0.5),
        "exponential" => vec![0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        _ => vec![0.25, 0.5, 1.0, 2.0, 4.0, 6.0, 8.0, 10.0],
    }
}

fn resolve_scenario(args: &SimulateArgs) -> Result<ScenarioSpec, Error> {
    let mut spec = match (&args.spec, args.scenario.as_str()) {
        (Some(path), _) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        (None, "resample_corpus") => {
            let path = args
                .corpus
                .clone()
                .ok_or_else(|| Error::InvalidArgument("resample_corpus needs --corpus".into()))?;
            ScenarioSpec::resample_corpus(path, &args.corpus_label, 0.5, preset_sizes("candles")?)
        }
        (None, kind) => ScenarioSpec::default_for(kind)?,
    };
    let base = match &args.preset {
        Some(name) => Some(preset_sizes(name)?),
        None => spec.sizes(),
    };
    if let Some(b) = base {
        let sizes = Sizes::new(
            args.n_unlabeled.unwrap_or(b.n_unlabeled),
            args.n0.unwrap_or(b.n0),
            args.n1.unwrap_or(b.n1),
        );
        if sizes != b || args.preset.is_some() {
            spec = spec.with_sizes(sizes)?;
        }
    } else if args.n_unlabeled.is_some() || args.n0.is_some() || args.n1.is_some() {
        return Err(Error::InvalidArgument(format!(
            "scenario `{}` sets sizes through --ladder or its spec file",
            spec.kind()
        )));
    }
    if let Some(t) = args.theta {
        spec = spec.with_theta(t)?;
    }
    if let Some(g) = args.gamma {
        spec = spec.with_gamma(g)?;
    }
    spec.validate()?;
    Ok(spec)
}

fn simulate(ctx: &Ctx, args: &SimulateArgs) -> Result<(), Error> {
    let spec = resolve_scenario(args)?;
    if args.print_spec {
        println!("{}", serde_json::to_string_pretty(&spec)?);
        return Ok(());
    }
    let seed = ctx.seed;
    let thetas = args.thetas.clone().unwrap_or_else(|| DEFAULT_THETAS.to_vec());
    let report = match args.study {
        Study::Mse => {
            let methods = args
                .methods
                .iter()
                .map(|m| m.parse())
                .collect::<Result<Vec<Method>, _>>()?;
            run_mse_study(&spec, &thetas, &methods, args.replicates, seed)?
        }
        Study::Coverage => {
            run_coverage_study(&spec, &thetas, args.level, args.regime.parse()?, args.replicates, seed)?
        }
        Study::Power => {
            let gammas = args.gammas.clone().unwrap_or_else(|| default_gammas(&spec));
            run_power_study(&spec, &gammas, args.alpha, args.replicates, args.b, args.grid, seed)?
        }
        Study::Combined => {
            let labels = args.labels.clone().unwrap_or_else(|| DEFAULT_LABEL_COUNTS.to_vec());
            run_combined_study(&spec, &labels, args.replicates, seed)?
        }
        Study::Multiclass => {
            let ladder = args.ladder.clone().unwrap_or_else(|| DEFAULT_LADDER.to_vec());
            run_multiclass_study(&spec, &ladder, args.replicates, seed)?
        }
        Study::Regression => {
            let mus = match (&args.mus, &spec) {
                (Some(m), _) => m.clone(),
                (None, ScenarioSpec::RegressionSine { mu, .. }) => vec![*mu],
                _ => Vec::new(),
            };
            run_regression_study(&spec, &mus, args.grid_size, Bandwidth::Rule, args.replicates, seed)?
        }
    };
    write_report(ctx, args, &report)
}

fn write_report(ctx: &Ctx, args: &SimulateArgs, report: &ExperimentReport) -> Result<(), Error> {
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        let records = dir.join("records.csv");
        report.write_csv(std::fs::File::create(&records)?)?;
        std::fs::write(dir.join("summary.json"), report.summary_json()? + "\n")?;
        ctx.note(&format!("wrote {} and summary.json", records.display()));
    }
    match ctx.output.unwrap_or(Format::Json) {
        Format::Json => println!("{}", report.summary_json()?),
        Format::Csv => report.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}
