//! `wellfm` command-line pipeline.
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 ingestion, 4 numeric,
//! 5 model/data mismatch. Every failure prints one `error[<kind>]: ...` line
//! to stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wellfm::fm::write_atomically;
use wellfm::metrics::{
    class_separation_export, classification_csv, classify_wells, histogram_csv, pr_curve,
    pr_curve_csv, rank_holdout, relevance_threshold, report_from_rankings, DEFAULT_BINS, DEFAULT_K,
};
use wellfm::ranker::{recommend_all, recommendations_csv};
use wellfm::train::train_with_callback;
use wellfm::{
    load_model, mean_well_scores, recommend_top_k, score_all_wells, split_leave_one_out, Dataset,
    Error, FmModel, LossKind, RelevanceMode, Schedule, ThresholdSpec, TrainConfig,
};

#[derive(Debug, Parser)]
#[command(
    name = "wellfm",
    version,
    about = "Factorization-machine well recommender"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write it with its loss trace.
    Train(TrainArgs),
    /// Write top-k recommendations per company.
    Recommend(RecommendArgs),
    /// Leave-one-out hit rate, reciprocal rank, precision and recall.
    Evaluate(EvaluateArgs),
    /// Label every well desirable or undesirable against a threshold.
    Classify(ClassifyArgs),
    /// Write PR-curve and class-separation histogram CSVs.
    PlotData(PlotDataArgs),
    /// Print a model's dimensions and training configuration.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Interactions CSV with `operator_id` and `api_number` columns.
    #[arg(long)]
    interactions: PathBuf,
    /// Well attribute CSV keyed by `api_number`.
    #[arg(long)]
    wells: PathBuf,
    /// Additional numeric well columns to use as features.
    #[arg(long, value_delimiter = ',')]
    extra_columns: Vec<String>,
}

#[derive(Debug, Args)]
struct HyperArgs {
    /// `key = value` file applied on top of the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    factors: Option<usize>,
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    schedule: Option<Schedule>,
    #[arg(long)]
    schedule_exponent: Option<f64>,
    /// L2 regularization weight.
    #[arg(long, visible_alias = "regularization")]
    alpha: Option<f64>,
    #[arg(long)]
    max_samples: Option<usize>,
    /// Standard deviation of the initial factors.
    #[arg(long, visible_alias = "init-sigma")]
    sigma: Option<f64>,
    /// Clip each update's data term to this L2 norm; 0 disables.
    #[arg(long)]
    max_step_norm: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Train on the leave-one-out training half drawn with this seed.
    #[arg(long)]
    holdout_seed: Option<u64>,
    #[arg(long, default_value = "model.wfm")]
    model: PathBuf,
    #[arg(long, default_value = "loss_trace.csv")]
    trace: PathBuf,
}

#[derive(Debug, Args)]
struct RecommendArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Only this company (operator id).
    #[arg(long)]
    company: Option<String>,
    /// Keep wells the company already has as candidates.
    #[arg(long)]
    include_observed: bool,
    #[arg(long, default_value = "recommendations.csv")]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Seed of the leave-one-out split.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// `median`, `fixed:<x>` or `quantile:<q>`.
    #[arg(long, default_value = "median")]
    threshold: ThresholdSpec,
    /// `score` (model-score threshold) or `holdout` (held-out well only).
    #[arg(long, default_value = "score")]
    relevance: RelevanceMode,
    #[arg(long, default_value = "per_company.csv")]
    output: PathBuf,
    /// Also write the four metrics as `metric,value` rows.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "median")]
    threshold: ThresholdSpec,
    /// Score wells for this company instead of averaging over all.
    #[arg(long)]
    company: Option<String>,
    #[arg(long, default_value = "classification.csv")]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct PlotDataArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    /// Seed of the leave-one-out split behind the PR curve.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "median")]
    threshold: ThresholdSpec,
    #[arg(long)]
    company: Option<String>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long, default_value = "pr_curve.csv")]
    pr_output: PathBuf,
    #[arg(long, default_value = "class_separation.csv")]
    histogram_output: PathBuf,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
}

/// A failure with its exit code and error-line prefix.
#[derive(Debug)]
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            kind: "usage",
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::Config(_) | Error::Index { .. } | Error::DegeneratePair(_) => (2, "config"),
            Error::Io { .. }
            | Error::Schema { .. }
            | Error::Parse { .. }
            | Error::EmptyDataset(_)
            | Error::Coverage { .. }
            | Error::Format(_)
            | Error::Saturated
            | Error::Evaluation(_)
            | Error::DegenerateLabels => (3, "ingest"),
            Error::Numeric { .. } => (4, "numeric"),
            Error::Version { .. } | Error::Mismatch(_) => (5, "mismatch"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn resolve_config(hyper: &HyperArgs) -> CliResult<TrainConfig> {
    let mut config = TrainConfig::default();
    if let Some(path) = &hyper.config {
        let text = fs::read_to_string(path).map_err(|e| Failure {
            code: 2,
            kind: "config",
            message: format!("cannot read config file {}: {e}", path.display()),
        })?;
        config.apply_kv_text(&text).map_err(|e| Failure {
            code: 2,
            kind: "config",
            message: format!("{}: {e}", path.display()),
        })?;
    }
    macro_rules! apply {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = hyper.$flag { config.$field = v; })*
        };
    }
    apply!(
        factors => factors,
        loss => loss,
        epochs => epochs,
        learning_rate => learning_rate,
        schedule => schedule,
        schedule_exponent => schedule_exponent,
        alpha => regularization,
        max_samples => max_samples,
        sigma => init_sigma,
        max_step_norm => max_step_norm,
        seed => seed
    );
    config.validate()?;
    Ok(config)
}

fn load_data(args: &DataArgs) -> CliResult<Dataset> {
    Ok(Dataset::load(
        &args.interactions,
        &args.wells,
        &args.extra_columns,
    )?)
}

fn load_checked_model(path: &Path, data: &Dataset) -> CliResult<FmModel> {
    let model = load_model(path)?;
    if model.n() != data.n_features() {
        return Err(Error::Mismatch(format!(
            "model {} has {} features, data encodes {} ({} companies, {} wells, {} attributes)",
            path.display(),
            model.n(),
            data.n_features(),
            data.n_companies(),
            data.n_wells(),
            data.n_aux()
        ))
        .into());
    }
    Ok(model)
}

fn company_index(data: &Dataset, id: &str) -> CliResult<usize> {
    data.interactions.company_index(id).ok_or_else(|| Failure {
        code: 2,
        kind: "config",
        message: format!("unknown company {id:?}"),
    })
}

fn write_output(path: &Path, contents: &str) -> CliResult<()> {
    write_atomically(path, contents.as_bytes())?;
    Ok(())
}

/// Per-well scores for one company, or the mean over all companies.
fn well_scores(model: &FmModel, data: &Dataset, company: Option<&str>) -> CliResult<Vec<f64>> {
    Ok(match company {
        Some(id) => score_all_wells(model, data, company_index(data, id)?)?,
        None => mean_well_scores(model, data)?,
    })
}

fn run_train(args: TrainArgs) -> CliResult<()> {
    let config = resolve_config(&args.hyper)?;
    let full = load_data(&args.data)?;
    let data = match args.holdout_seed {
        Some(seed) => {
            full.with_interactions(split_leave_one_out(&full.interactions, seed).train)?
        }
        None => full,
    };
    println!(
        "training on {} pairs: {} companies, {} wells, {} attributes, {} features",
        data.interactions.len(),
        data.n_companies(),
        data.n_wells(),
        data.n_aux(),
        data.n_features()
    );
    let epochs = config.epochs;
    let (model, trace) = train_with_callback(&data, &config, |s| {
        println!(
            "epoch {}/{epochs} objective {:.6} lr {:.5} violation rate {:.4}",
            s.epoch + 1,
            s.objective,
            s.learning_rate,
            s.violation_rate
        );
    })?;
    model.save(&args.model)?;
    write_output(&args.trace, &trace.to_csv())?;
    println!(
        "wrote {} and {}",
        args.model.display(),
        args.trace.display()
    );
    Ok(())
}

fn run_recommend(args: RecommendArgs) -> CliResult<()> {
    let data = load_data(&args.data)?;
    let model = load_checked_model(&args.model, &data)?;
    let exclude = !args.include_observed;
    let lists = match &args.company {
        Some(id) => vec![recommend_top_k(
            &model,
            &data,
            company_index(&data, id)?,
            args.k,
            exclude,
        )?],
        None => recommend_all(&model, &data, args.k, exclude)?,
    };
    write_output(
        &args.output,
        &recommendations_csv(&lists, &data.interactions),
    )?;
    println!("wrote {} lists to {}", lists.len(), args.output.display());
    Ok(())
}

fn run_evaluate(args: EvaluateArgs) -> CliResult<()> {
    let data = load_data(&args.data)?;
    let model = load_checked_model(&args.model, &data)?;
    let split = split_leave_one_out(&data.interactions, args.seed);
    let rankings = rank_holdout(&model, &data, &split, args.k)?;
    let report = report_from_rankings(&rankings, args.k, args.threshold, args.relevance)?;
    print!("{}", report.to_table());
    write_output(&args.output, &report.per_company_csv(&data.interactions))?;
    if let Some(path) = &args.summary {
        write_output(path, &report.summary_csv())?;
    }
    Ok(())
}

fn run_classify(args: ClassifyArgs) -> CliResult<()> {
    let data = load_data(&args.data)?;
    let model = load_checked_model(&args.model, &data)?;
    let scores = well_scores(&model, &data, args.company.as_deref())?;
    let threshold = relevance_threshold(&scores, args.threshold)?;
    let classification = classify_wells(&scores, threshold);
    write_output(
        &args.output,
        &classification_csv(&classification, &data.interactions),
    )?;
    println!(
        "threshold {threshold:.6}: {} desirable, {} undesirable; wrote {}",
        classification.desirable_count(),
        classification.undesirable_count(),
        args.output.display()
    );
    Ok(())
}

fn run_plot_data(args: PlotDataArgs) -> CliResult<()> {
    let data = load_data(&args.data)?;
    let model = load_checked_model(&args.model, &data)?;

    // PR curve: every candidate of every evaluated company, labelled by
    // whether it is that company's held-out well.
    let split = split_leave_one_out(&data.interactions, args.seed);
    let rankings = rank_holdout(&model, &data, &split, DEFAULT_K)?;
    let mut scores = Vec::new();
    let mut relevant = Vec::new();
    for r in &rankings {
        for &(w, s) in &r.candidates {
            scores.push(s);
            relevant.push(w == r.held_out);
        }
    }
    let points = pr_curve(&scores, &relevant)?;

    let well_scores = well_scores(&model, &data, args.company.as_deref())?;
    let threshold = relevance_threshold(&well_scores, args.threshold)?;
    let bins = class_separation_export(&classify_wells(&well_scores, threshold), args.bins)?;

    write_output(&args.pr_output, &pr_curve_csv(&points))?;
    write_output(&args.histogram_output, &histogram_csv(&bins))?;
    println!(
        "wrote {} PR points to {} and {} bins to {}",
        points.len(),
        args.pr_output.display(),
        bins.len(),
        args.histogram_output.display()
    );
    Ok(())
}

fn run_inspect(args: InspectArgs) -> CliResult<()> {
    let model = load_model(&args.model)?;
    println!("model {}", args.model.display());
    println!("features {}", model.n());
    println!("factors {}", model.k());
    println!("bias {:?}", model.w0);
    println!("squared norm {:?}", model.squared_norm());
    println!("# training configuration");
    print!("{}", model.config.to_kv_text());
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(a) => run_train(a),
        Command::Recommend(a) => run_recommend(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Classify(a) => run_classify(a),
        Command::PlotData(a) => run_plot_data(a),
        Command::Inspect(a) => run_inspect(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            let failure = if e.kind() == clap::error::ErrorKind::ValueValidation {
                Failure {
                    code: 2,
                    kind: "config",
                    message: line.to_string(),
                }
            } else {
                Failure::usage(line)
            };
            eprintln!("error[{}]: {} (see --help)", failure.kind, failure.message);
            return ExitCode::from(failure.code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.kind, f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}
