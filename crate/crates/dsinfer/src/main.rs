//! Command-line interface: simulation experiments, penalized fits and the
//! screen → fit → nodewise → de-sparsify → report pipeline on CSV data.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Axis;
use serde::Serialize;
use serde_json::json;

use dsinfer::artifacts::{
    read_csv_dataset, records_csv, report_csv, zvalues_csv, FitJson, SCHEMA_VERSION,
};
use dsinfer::desparsify::desparsify;
use dsinfer::error::Error;
use dsinfer::inference::build_report;
use dsinfer::loss::{Dataset, Loss};
use dsinfer::nodewise::{
    loss_scale_correction, precision_estimate, LambdaRule, NodewiseMethod, NoiseInfo,
};
use dsinfer::screen::screen;
use dsinfer::simulate::{
    export_standardized, run_ci_experiment, run_fwer_experiment, DgpConfig, ErrorDist,
    PipelineOptions,
};
use dsinfer::solver::{
    cv_select_lambda, fit_lasso, CvConfig, CvSelection, LambdaPath, SolverOptions,
};

#[derive(Parser)]
#[command(name = "dsinfer", version, about = "De-sparsified penalized M-estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo coverage/length or multiple-testing experiment.
    Simulate(SimulateArgs),
    /// Fit a penalized M-estimator on CSV data.
    Fit(FitArgs),
    /// Full inference pipeline on CSV data (optional screening first).
    Infer(InferArgs),
    /// Marginal screening only.
    Screen(ScreenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LossFlag {
    Quadratic,
    Huber,
    Quantile,
    Logistic,
}

#[derive(Clone, Copy, ValueEnum)]
enum ErrorDistFlag {
    Gaussian,
    T5,
    T3,
}

#[derive(Clone, Copy, ValueEnum)]
enum NodewiseFlag {
    /// Plain lasso rows at the light universal-rate penalty (the default
    /// simulation protocol).
    Universal,
    /// Plain lasso rows, per-column cross-validated penalty.
    Cv,
    /// Square-root lasso rows with the universal penalty.
    Sqrt,
}

impl NodewiseFlag {
    fn rule(self, folds: usize, path_len: usize, scale: Option<f64>) -> LambdaRule {
        match self {
            NodewiseFlag::Universal => LambdaRule::Universal {
                scale: scale.unwrap_or(dsinfer::simulate::STANDARD_NODEWISE_SCALE),
            },
            NodewiseFlag::Cv => LambdaRule::Cv {
                n_folds: folds,
                path_len,
                lambda_min_ratio: 0.01,
                selection: CvSelection::Min,
            },
            NodewiseFlag::Sqrt => LambdaRule::Universal { scale: scale.unwrap_or(1.0) },
        }
    }

    fn method(self) -> NodewiseMethod {
        match self {
            NodewiseFlag::Sqrt => NodewiseMethod::SqrtLasso,
            _ => NodewiseMethod::Lasso,
        }
    }

    fn name(self) -> &'static str {
        match self {
            NodewiseFlag::Universal => "universal",
            NodewiseFlag::Cv => "cv",
            NodewiseFlag::Sqrt => "sqrt",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AdjustFlag {
    Holm,
    Bh,
    None,
}

#[derive(Args, Clone)]
struct LossOpts {
    #[arg(long, value_enum)]
    loss: LossFlag,
    /// Huber radius (only with --loss huber).
    #[arg(long)]
    huber_k: Option<f64>,
    /// Quantile level (only with --loss quantile).
    #[arg(long)]
    quantile_q: Option<f64>,
}

impl LossOpts {
    fn build(&self) -> Result<Loss, Error> {
        if self.huber_k.is_some() && !matches!(self.loss, LossFlag::Huber) {
            return Err(Error::invalid("--huber-k requires --loss huber"));
        }
        if self.quantile_q.is_some() && !matches!(self.loss, LossFlag::Quantile) {
            return Err(Error::invalid("--quantile-q requires --loss quantile"));
        }
        let loss = match self.loss {
            LossFlag::Quadratic => Loss::Quadratic,
            LossFlag::Huber => Loss::Huber { k: self.huber_k.unwrap_or(0.5) },
            LossFlag::Quantile => Loss::Quantile { q: self.quantile_q.unwrap_or(0.5) },
            LossFlag::Logistic => Loss::Logistic,
        };
        loss.validate()?;
        Ok(loss)
    }
}

#[derive(Args, Clone)]
struct SolverOpts {
    /// Coordinate-update tolerance (KKT tolerance is 10x this).
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 50)]
    path_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
}

impl SolverOpts {
    fn solver(&self, intercept: bool, standardize: bool) -> SolverOptions {
        SolverOptions {
            cd_tol: self.tol,
            kkt_tol: self.tol * 10.0,
            max_iter: self.max_iter,
            primal_tol: self.tol * 10.0,
            dual_tol: self.tol * 10.0,
            intercept,
            standardize,
            ..SolverOptions::default()
        }
    }

    fn cv(&self) -> CvConfig {
        CvConfig { n_folds: self.folds, path_len: self.path_len, ..CvConfig::default() }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    loss: LossOpts,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    p: usize,
    #[arg(long, default_value_t = 3)]
    s0: usize,
    /// Error law of the linear model (ignored for --loss logistic, which is
    /// Bernoulli by construction).
    #[arg(long, value_enum)]
    error_dist: Option<ErrorDistFlag>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = NodewiseFlag::Universal)]
    nodewise: NodewiseFlag,
    /// Scale of the universal nodewise penalty (universal/sqrt modes;
    /// defaults to 0.125 for universal and 1.0 for sqrt).
    #[arg(long)]
    nodewise_scale: Option<f64>,
    /// Run the Holm FWER/TPR study instead of the coverage experiment.
    #[arg(long)]
    fwer: bool,
    #[command(flatten)]
    solver: SolverOpts,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    loss: LossOpts,
    #[arg(long)]
    csv: PathBuf,
    /// Response column: header name or zero-based index.
    #[arg(long)]
    response_col: String,
    /// Fixed penalty level; chosen by cross-validation when absent.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    intercept: bool,
    #[arg(long)]
    standardize: bool,
    #[command(flatten)]
    solver: SolverOpts,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    loss: LossOpts,
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    response_col: String,
    /// Keep only the m columns with largest |yᵀXⱼ| before fitting.
    #[arg(long)]
    screen_top: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = AdjustFlag::Holm)]
    adjust: AdjustFlag,
    #[arg(long, value_enum, default_value_t = NodewiseFlag::Sqrt)]
    nodewise: NodewiseFlag,
    /// Scale of the universal nodewise penalty (universal/sqrt modes).
    #[arg(long)]
    nodewise_scale: Option<f64>,
    /// Known noise density at zero (quantile loss correction).
    #[arg(long)]
    density0: Option<f64>,
    /// Known F(K) - F(-K) of the noise (Huber loss correction).
    #[arg(long)]
    huber_span: Option<f64>,
    #[arg(long)]
    intercept: bool,
    #[arg(long)]
    standardize: bool,
    #[command(flatten)]
    solver: SolverOpts,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScreenArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    response_col: String,
    #[arg(long)]
    screen_top: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Csv { .. }
                | Error::InvalidInput(_)
                | Error::Dimension(_)
                | Error::Io(_)
                | Error::Json(_) => 2,
                _ => 1,
            }
        }
    };
    std::process::exit(code);
}

fn init_threads(threads: Option<usize>) -> Result<(), Error> {
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn write_text(dir: &Path, name: &str, content: &str) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), content)?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Screen(args) => cmd_screen(args),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    init_threads(args.solver.threads)?;
    let loss = args.loss.build()?;

    let error_dist = match (&loss, args.error_dist) {
        (Loss::Logistic, Some(_)) => {
            return Err(Error::invalid("--error-dist does not apply to --loss logistic"));
        }
        (Loss::Logistic, None) => ErrorDist::LogisticBernoulli,
        (_, Some(ErrorDistFlag::Gaussian)) | (_, None) => ErrorDist::Gaussian,
        (_, Some(ErrorDistFlag::T5)) => ErrorDist::T5,
        (_, Some(ErrorDistFlag::T3)) => ErrorDist::T3,
    };

    let cfg = DgpConfig {
        n: args.n,
        p: args.p,
        s0: args.s0,
        error_dist,
        seed: args.solver.seed,
    };
    let nodewise_rule =
        args.nodewise.rule(args.solver.folds, args.solver.path_len, args.nodewise_scale);
    let opts = PipelineOptions {
        loss,
        alpha: args.alpha,
        solver: args.solver.solver(false, false),
        cv: args.solver.cv(),
        nodewise_method: args.nodewise.method(),
        nodewise_rule,
        noise: None,
        oracle_theta: None,
    };

    let config_echo = json!({
        "n": cfg.n, "p": cfg.p, "s0": cfg.s0,
        "error_dist": cfg.error_dist, "seed": cfg.seed,
        "loss": loss, "alpha": args.alpha, "reps": args.reps,
        "folds": args.solver.folds, "path_len": args.solver.path_len,
        "nodewise": args.nodewise.name(),
        "nodewise_scale": args.nodewise_scale,
        "tol": args.solver.tol, "max_iter": args.solver.max_iter,
        "threads": args.solver.threads,
    });

    if args.fwer {
        let outcome = run_fwer_experiment(&cfg, args.reps, &opts)?;
        let results = json!({
            "schema_version": SCHEMA_VERSION,
            "mode": "fwer",
            "config": config_echo,
            "tpr": outcome.tpr,
            "fwer": outcome.fwer,
            "empty_support": outcome.empty_support,
            "n_reps": outcome.n_reps,
            "excluded": outcome.excluded,
        });
        write_json(&args.out, "results.json", &results)?;
        println!("tpr = {:.4}  fwer = {:.4}  (reps = {})", outcome.tpr, outcome.fwer, outcome.n_reps);
        return Ok(());
    }

    let result = run_ci_experiment(&cfg, args.reps, &opts)?;
    let agg = &result.aggregates;
    // Table formatting convention: percentages for linear-model runs,
    // proportions for logistic runs.
    let display = if matches!(loss, Loss::Logistic) {
        json!({
            "coverage_s0": format!("{:.3}", agg.coverage_s0),
            "coverage_s0c": format!("{:.3}", agg.coverage_s0c),
            "length_s0": format!("{:.3}", agg.length_s0),
            "length_s0c": format!("{:.3}", agg.length_s0c),
        })
    } else {
        json!({
            "coverage_s0": format!("{:.2}", 100.0 * agg.coverage_s0),
            "coverage_s0c": format!("{:.2}", 100.0 * agg.coverage_s0c),
            "length_s0": format!("{:.2}", agg.length_s0),
            "length_s0c": format!("{:.2}", agg.length_s0c),
        })
    };
    let results = json!({
        "schema_version": SCHEMA_VERSION,
        "mode": "ci",
        "config": config_echo,
        "aggregates": agg,
        "display": display,
        "diagnostics": result.diagnostics,
        "n_reps": result.n_reps,
        "excluded": result.excluded,
    });
    write_json(&args.out, "results.json", &results)?;
    write_text(&args.out, "records.csv", &records_csv(&result))?;
    write_text(&args.out, "zvalues.csv", &zvalues_csv(&export_standardized(&result)))?;
    println!(
        "coverage S0 = {:.4}  S0c = {:.4}  length S0 = {:.4}  S0c = {:.4}  (reps = {}, excluded = {})",
        agg.coverage_s0, agg.coverage_s0c, agg.length_s0, agg.length_s0c,
        result.n_reps, result.excluded
    );
    Ok(())
}

#[derive(Serialize)]
struct FitArtifact {
    #[serde(flatten)]
    fit: FitJson,
    cv: Option<LambdaPath>,
    seed: u64,
}

fn cmd_fit(args: FitArgs) -> Result<(), Error> {
    init_threads(args.solver.threads)?;
    let loss = args.loss.build()?;
    let (data, _names) = read_csv_dataset(&args.csv, &args.response_col)?;
    let solver = args.solver.solver(args.intercept, args.standardize);

    let (lambda, cv) = match args.lambda {
        Some(l) => (l, None),
        None => {
            let path = cv_select_lambda(&loss, &data, &args.solver.cv(), &solver, args.solver.seed)?;
            (path.selected_lambda(), Some(path))
        }
    };
    let fit = fit_lasso(&loss, &data, lambda, &solver)?;
    let artifact = FitArtifact { fit: FitJson::from_fit(&loss, &fit), cv, seed: args.solver.seed };
    write_json(&args.out, "fit.json", &artifact)?;
    println!(
        "lambda = {:.6e}  active = {}  objective = {:.6e}",
        fit.lambda,
        fit.active_set.len(),
        fit.objective
    );
    Ok(())
}

fn cmd_infer(args: InferArgs) -> Result<(), Error> {
    init_threads(args.solver.threads)?;
    let loss = args.loss.build()?;
    let (full_data, names) = read_csv_dataset(&args.csv, &args.response_col)?;

    // Optional marginal screening, then the pipeline on the kept columns.
    let (data, kept, kept_names): (Dataset, Vec<usize>, Vec<String>) = match args.screen_top {
        Some(m) => {
            let sel = screen(&full_data, m)?;
            let mut kept = sel.indices.clone();
            kept.sort_unstable();
            let x = full_data.x.select(Axis(1), &kept);
            let names = kept.iter().map(|&j| names[j].clone()).collect();
            write_json(&args.out, "screen.json", &json!({
                "schema_version": SCHEMA_VERSION,
                "indices": sel.indices,
                "scores": sel.scores,
            }))?;
            (Dataset::new(x, full_data.y.clone())?, kept, names)
        }
        None => {
            let p = full_data.p();
            let names = names.clone();
            (full_data, (0..p).collect(), names)
        }
    };

    let solver = args.solver.solver(args.intercept, args.standardize);
    let path = cv_select_lambda(&loss, &data, &args.solver.cv(), &solver, args.solver.seed)?;
    let fit = fit_lasso(&loss, &data, path.selected_lambda(), &solver)?;

    let rule = args.nodewise.rule(args.solver.folds, args.solver.path_len, args.nodewise_scale);
    let method = args.nodewise.method();
    let columns: Vec<usize> = (0..data.p()).collect();
    let rows = precision_estimate(
        &loss,
        &data,
        &fit.coefficients(),
        &columns,
        &rule,
        method,
        &solver,
        args.solver.seed.wrapping_add(1),
    )?;

    let noise = resolve_noise(&loss, &data, &fit, args.density0, args.huber_span)?;
    let corrected = loss_scale_correction(&loss, &rows, &noise)?;
    let ests = desparsify(&loss, &data, &fit, &corrected)?;
    let report = build_report(&ests, args.alpha, data.p(), data.n());

    write_text(&args.out, "report.csv", &report_csv(&report, Some(&kept_names)))?;
    write_json(&args.out, "report.json", &json!({
        "schema_version": SCHEMA_VERSION,
        "config": {
            "loss": loss, "alpha": args.alpha,
            "adjust": match args.adjust { AdjustFlag::Holm => "holm", AdjustFlag::Bh => "bh", AdjustFlag::None => "none" },
            "nodewise": args.nodewise.name(),
            "screen_top": args.screen_top, "seed": args.solver.seed,
            "intercept": args.intercept, "standardize": args.standardize,
            "lambda": fit.lambda,
        },
        "columns": kept,
        "names": kept_names,
        "report": report,
    }))?;

    let rejected: Vec<usize> = report
        .rows
        .iter()
        .filter(|r| match args.adjust {
            AdjustFlag::Holm => r.reject_holm,
            AdjustFlag::Bh => r.reject_bh,
            AdjustFlag::None => r.p_value <= args.alpha,
        })
        .map(|r| r.j)
        .collect();
    println!(
        "inferred {} coordinates; {} rejected ({}), {} above threshold",
        report.rows.len(),
        rejected.len(),
        match args.adjust {
            AdjustFlag::Holm => "holm",
            AdjustFlag::Bh => "bh",
            AdjustFlag::None => "unadjusted",
        },
        report.rows.iter().filter(|r| r.reject_threshold).count()
    );
    Ok(())
}

/// Noise constants for the scalar correction: user-supplied when given,
/// otherwise estimated from the fit residuals (experimental).
fn resolve_noise(
    loss: &Loss,
    data: &Dataset,
    fit: &dsinfer::solver::PenalizedFit,
    density0: Option<f64>,
    huber_span: Option<f64>,
) -> Result<NoiseInfo, Error> {
    match loss {
        Loss::Quadratic | Loss::Logistic => Ok(NoiseInfo::default()),
        Loss::Quantile { .. } => {
            let f0 = match density0 {
                Some(v) => v,
                None => {
                    let u = fit.coefficients().linear_predictor(data)?;
                    let resid: Vec<f64> =
                        data.y.iter().zip(u.iter()).map(|(y, u)| y - u).collect();
                    let est = NoiseInfo::estimate_density_at_zero(&resid)?;
                    eprintln!(
                        "note: noise density at zero estimated from residuals ({est:.4}); \
                         pass --density0 to override"
                    );
                    est
                }
            };
            Ok(NoiseInfo::known(Some(f0), None))
        }
        Loss::Huber { k } => {
            let span = match huber_span {
                Some(v) => v,
                None => {
                    let u = fit.coefficients().linear_predictor(data)?;
                    let resid: Vec<f64> =
                        data.y.iter().zip(u.iter()).map(|(y, u)| y - u).collect();
                    let est = NoiseInfo::estimate_huber_span(&resid, *k)?;
                    eprintln!(
                        "note: Huber span estimated from residuals ({est:.4}); \
                         pass --huber-span to override"
                    );
                    est
                }
            };
            Ok(NoiseInfo::known(None, Some(span)))
        }
    }
}

fn cmd_screen(args: ScreenArgs) -> Result<(), Error> {
    let (data, names) = read_csv_dataset(&args.csv, &args.response_col)?;
    let sel = screen(&data, args.screen_top)?;
    let selected_names: Vec<&String> = sel.indices.iter().map(|&j| &names[j]).collect();
    write_json(&args.out, "screen.json", &json!({
        "schema_version": SCHEMA_VERSION,
        "indices": sel.indices,
        "names": selected_names,
        "scores": sel.scores,
    }))?;
    println!("selected {} of {} columns", sel.indices.len(), data.p());
    Ok(())
}
