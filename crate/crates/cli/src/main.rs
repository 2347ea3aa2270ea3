//! Command-line driver: fits, dual solves, diagnostics, detection,
//! local explanation and the replication experiments.

mod error;
mod output;
mod specs;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use postratio::applications::{
    extract_local_linear, sliding_scores, surrogate_baseline, DetectionConfig, LinearExplanation, ScoreConvention,
};
use postratio::dual::{dual_primal_gap, radius_schedule, solve_dual, DualOptions, DualResult};
use postratio::estimator::{fit_standardized, FeatureScaling};
use postratio::inference::{
    asymptotic_report, consistency_diagnostics, qq_points, AsymptoticReport, ConsistencyDiagnostics,
    ConsistencyOptions,
};
use postratio::simharness::{run_experiment, ExperimentReport, ExperimentSpec, Scenario};
use postratio::{fit, FitOptions, FitResult, PreProblem};

use error::CliError;
use output::{csv_table, emit, fmt_f64, json_string};
use specs::{
    build_likelihood, feature_map, parse_feature, parse_likelihood, parse_vector, read_samples, read_series,
    table_blackbox, LikelihoodSpec,
};

#[derive(Debug, Parser)]
#[command(name = "postratio", version, about = "Posterior ratio estimation from likelihoods and prior samples")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the ratio parameter and write the result as JSON.
    Fit(FitArgs),
    /// Solve the dual program and compare it with the primal fit.
    Dual(DualArgs),
    /// Asymptotic covariance and consistency diagnostics at the fit.
    Diagnose(DiagnoseArgs),
    /// Sliding-window detection scores over a series, written as CSV.
    Detect(DetectArgs),
    /// Local linear explanation of a tabulated black-box classifier.
    Explain(ExplainArgs),
    /// Run a replication experiment described by a JSON spec.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Gradient-norm tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Newton iteration cap.
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
}

impl SolverArgs {
    fn options(&self) -> Result<FitOptions, CliError> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(CliError::Usage("--tol must be positive".into()));
        }
        Ok(FitOptions {
            init: None,
            tol: self.tol,
            max_iter: self.max_iter,
        })
    }
}

#[derive(Debug, Args)]
struct ProblemArgs {
    /// CSV of p-side prior samples, one row per sample.
    #[arg(long)]
    xp: PathBuf,
    /// CSV of q-side prior samples.
    #[arg(long)]
    xq: PathBuf,
    /// identity | poly2 | autocorr:<L> | lag1
    #[arg(long, default_value = "identity")]
    feature: String,
    /// unit | gaussian:y=<path>,sigma=<v>[,replicate=<g>]
    #[arg(long, default_value = "unit")]
    lp: String,
    /// unit | gaussian:y=<path>,sigma=<v>[,replicate=<g>]
    #[arg(long, default_value = "unit")]
    lq: String,
    /// Ridge added as ridge * |delta|^2 / 2.
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ProblemArgs {
    fn build(&self) -> Result<PreProblem, CliError> {
        let kind = parse_feature(&self.feature)?;
        let lp_spec = parse_likelihood("--lp", &self.lp)?;
        let lq_spec = parse_likelihood("--lq", &self.lq)?;
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(CliError::Usage("--ridge must be nonnegative".into()));
        }
        self.solver.options()?;
        let xp = read_samples(&self.xp)?;
        let xq = read_samples(&self.xq)?;
        let feature = feature_map("--feature", kind, xp.dim())?;
        let lp = build_likelihood("--lp", &lp_spec)?;
        let lq = build_likelihood("--lq", &lq_spec)?;
        PreProblem::with_ridge(lp, lq, xp, xq, feature, self.ridge).map_err(|e| CliError::from_pre("", e))
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Fit on standardised features and map the result back.
    #[arg(long)]
    standardize: bool,
    /// Include the asymptotic covariance report.
    #[arg(long)]
    report: bool,
}

#[derive(Debug, Args)]
struct DualArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Moment-constraint radius.
    #[arg(long, conflicts_with = "r3")]
    radius: Option<f64>,
    /// Use the radius R3 / sqrt(min(n_p, n_q)).
    #[arg(long)]
    r3: Option<f64>,
    /// Augmented-Lagrangian outer iteration cap.
    #[arg(long, default_value_t = 500)]
    max_outer: usize,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Ball radius for the eigenvalue search (default 10 / sqrt(min(n_p, n_q))).
    #[arg(long)]
    radius: Option<f64>,
    /// Random interior starts besides the centre.
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated centre of the ball (default: the fitted parameter).
    #[arg(long)]
    delta_ref: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ConventionArg {
    Objective,
    Divergence,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Single-column CSV time series.
    #[arg(long)]
    series: PathBuf,
    #[arg(long)]
    window: usize,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value = "autocorr:20")]
    feature: String,
    /// CSV of p-side latent windows, one per row.
    #[arg(long)]
    prior_p: PathBuf,
    /// CSV of q-side latent windows.
    #[arg(long)]
    prior_q: PathBuf,
    /// Observation noise of the identity-design Gaussian likelihoods.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, value_enum, default_value_t = ConventionArg::Objective)]
    convention: ConventionArg,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    /// CSV of local perturbation points.
    #[arg(long)]
    x_loc: PathBuf,
    /// blackbox:<path> to a one-column table of P(y=+1 | x), row-aligned with x_loc.
    #[arg(long)]
    blackbox: String,
    #[arg(long, default_value = "identity")]
    feature: String,
    /// Also fit the prediction-matching logistic surrogate.
    #[arg(long)]
    surrogate: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// JSON experiment spec.
    #[arg(long)]
    spec: PathBuf,
    /// Directory for the summary JSON and CSV tables.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Override the spec's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the spec's replication count.
    #[arg(long)]
    replications: Option<usize>,
    /// Use full-size replication counts and prior banks.
    #[arg(long)]
    full_scale: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Dual(a) => cmd_dual(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Experiment(a) => cmd_experiment(a),
    }
}

fn not_converged(what: &str, r: &FitResult) -> CliError {
    CliError::NonConvergence(format!(
        "{what} did not converge after {} iterations (gradient norm {})",
        r.iterations,
        fmt_f64(r.grad_norm)
    ))
}

#[derive(Serialize)]
struct FitOutput<'a> {
    fit: &'a FitResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    scaling: Option<&'a FeatureScaling>,
    #[serde(skip_serializing_if = "Option::is_none")]
    asymptotic: Option<&'a AsymptoticReport>,
}

fn cmd_fit(a: FitArgs) -> Result<(), CliError> {
    let problem = a.problem.build()?;
    let options = a.problem.solver.options()?;
    let (result, scaling) = if a.standardize {
        let (r, s) = fit_standardized(&problem, &options).map_err(|e| CliError::from_pre("fit", e))?;
        (r, Some(s))
    } else {
        (fit(&problem, &options).map_err(|e| CliError::from_pre("fit", e))?, None)
    };
    let report = if a.report && result.converged {
        Some(asymptotic_report(&problem, &result).map_err(|e| CliError::from_pre("asymptotic report", e))?)
    } else {
        None
    };
    let out = FitOutput {
        fit: &result,
        scaling: scaling.as_ref(),
        asymptotic: report.as_ref(),
    };
    emit(a.problem.out.as_deref(), &json_string(&out)?)?;
    if !result.converged {
        return Err(not_converged("fit", &result));
    }
    Ok(())
}

#[derive(Serialize)]
struct DualOutput<'a> {
    dual: &'a DualResult,
    primal_delta: &'a [f64],
    primal_converged: bool,
    primal_gap: f64,
}

fn cmd_dual(a: DualArgs) -> Result<(), CliError> {
    let problem = a.problem.build()?;
    let options = a.problem.solver.options()?;
    let r_n = match (a.radius, a.r3) {
        (Some(r), _) => r,
        (None, Some(r3)) => radius_schedule(r3, problem.n_p(), problem.n_q()),
        (None, None) => 0.0,
    };
    if !(r_n >= 0.0 && r_n.is_finite()) {
        return Err(CliError::Usage("--radius / --r3 must give a nonnegative radius".into()));
    }
    let dual_options = DualOptions {
        r_n,
        tol: options.tol,
        max_outer: a.max_outer,
        ..DualOptions::default()
    };
    let dual = solve_dual(&problem, &dual_options).map_err(|e| CliError::from_pre("dual", e))?;
    let primal = fit(&problem, &options).map_err(|e| CliError::from_pre("primal fit", e))?;
    let gap = dual_primal_gap(&dual, &primal).map_err(|e| CliError::from_pre("dual", e))?;
    let out = DualOutput {
        dual: &dual,
        primal_delta: &primal.delta_hat,
        primal_converged: primal.converged,
        primal_gap: gap,
    };
    emit(a.problem.out.as_deref(), &json_string(&out)?)?;
    if !dual.converged {
        return Err(CliError::NonConvergence(format!(
            "dual solver did not converge (residual {})",
            fmt_f64(dual.residual_eqn)
        )));
    }
    if !primal.converged {
        return Err(not_converged("primal fit", &primal));
    }
    Ok(())
}

#[derive(Serialize)]
struct DiagnoseOutput<'a> {
    fit: &'a FitResult,
    asymptotic: &'a AsymptoticReport,
    delta_ref: &'a [f64],
    consistency: &'a ConsistencyDiagnostics,
}

fn cmd_diagnose(a: DiagnoseArgs) -> Result<(), CliError> {
    let delta_ref_arg = a.delta_ref.as_deref().map(|s| parse_vector("--delta-ref", s)).transpose()?;
    if let Some(r) = a.radius {
        if !(r > 0.0 && r.is_finite()) {
            return Err(CliError::Usage("--radius must be positive".into()));
        }
    }
    let problem = a.problem.build()?;
    let options = a.problem.solver.options()?;
    let result = fit(&problem, &options).map_err(|e| CliError::from_pre("fit", e))?;
    if !result.converged {
        emit(a.problem.out.as_deref(), &json_string(&result)?)?;
        return Err(not_converged("fit", &result));
    }
    let report = asymptotic_report(&problem, &result).map_err(|e| CliError::from_pre("asymptotic report", e))?;
    let delta_ref = delta_ref_arg.unwrap_or_else(|| result.delta_hat.clone());
    if delta_ref.len() != problem.dim() {
        return Err(CliError::Usage(format!(
            "--delta-ref has {} entries, the feature map has {}",
            delta_ref.len(),
            problem.dim()
        )));
    }
    let radius = a
        .radius
        .unwrap_or_else(|| 10.0 / (problem.n_p().min(problem.n_q()) as f64).sqrt());
    let consistency = consistency_diagnostics(
        &problem,
        &delta_ref,
        radius,
        &ConsistencyOptions {
            n_restarts: a.restarts,
            seed: a.seed,
            ..ConsistencyOptions::default()
        },
    )
    .map_err(|e| CliError::from_pre("consistency diagnostics", e))?;
    let out = DiagnoseOutput {
        fit: &result,
        asymptotic: &report,
        delta_ref: &delta_ref,
        consistency: &consistency,
    };
    emit(a.problem.out.as_deref(), &json_string(&out)?)
}

fn cmd_detect(a: DetectArgs) -> Result<(), CliError> {
    let kind = parse_feature(&a.feature)?;
    let options = a.solver.options()?;
    if a.window < 2 {
        return Err(CliError::Usage("--window must be at least 2".into()));
    }
    if a.stride == 0 {
        return Err(CliError::Usage("--stride must be positive".into()));
    }
    if !(a.sigma > 0.0 && a.sigma.is_finite()) {
        return Err(CliError::Usage("--sigma must be positive".into()));
    }
    let feature = feature_map("--feature", kind, a.window)?;
    let series = read_series(&a.series)?;
    let prior_p = read_samples(&a.prior_p)?;
    let prior_q = read_samples(&a.prior_q)?;
    let convention = match a.convention {
        ConventionArg::Objective => ScoreConvention::Objective,
        ConventionArg::Divergence => ScoreConvention::Divergence,
    };
    let config = DetectionConfig::new(a.window, a.stride, feature, a.sigma, Arc::new(prior_p), Arc::new(prior_q))
        .map_err(|e| CliError::from_pre("detection config", e))?
        .with_fit_options(options)
        .with_convention(convention);
    let scores = sliding_scores(&series, &config).map_err(|e| CliError::from_pre(&a.series.display().to_string(), e))?;
    let mut buf = Vec::new();
    scores
        .write_csv(&mut buf)
        .map_err(|e| CliError::Data(format!("writing scores: {e}")))?;
    emit(a.out.as_deref(), &String::from_utf8_lossy(&buf))?;
    let missing = scores.scores.iter().filter(|s| s.is_none()).count();
    if missing > 0 {
        return Err(CliError::NonConvergence(format!(
            "{missing} of {} windows failed to converge",
            scores.scores.len()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct ExplainOutput<'a> {
    pre: &'a LinearExplanation,
    #[serde(skip_serializing_if = "Option::is_none")]
    surrogate: Option<&'a LinearExplanation>,
}

fn cmd_explain(a: ExplainArgs) -> Result<(), CliError> {
    let kind = parse_feature(&a.feature)?;
    let options = a.solver.options()?;
    let table = match parse_likelihood("--blackbox", &a.blackbox)? {
        LikelihoodSpec::Blackbox(p) => p,
        _ => return Err(CliError::Usage("--blackbox expects blackbox:<path>".into())),
    };
    let x_loc = read_samples(&a.x_loc)?;
    let feature = feature_map("--feature", kind, x_loc.dim())?;
    let blackbox = table_blackbox(&table, &x_loc)?;
    let pre = extract_local_linear(&blackbox, &x_loc, feature, &options).map_err(|e| CliError::from_pre("explain", e))?;
    let surrogate = if a.surrogate {
        Some(surrogate_baseline(&blackbox, &x_loc, feature).map_err(|e| CliError::from_pre("surrogate", e))?)
    } else {
        None
    };
    for w in [pre.warning.as_ref(), surrogate.as_ref().and_then(|s| s.warning.as_ref())]
        .into_iter()
        .flatten()
    {
        eprintln!("warning: {w}");
    }
    let out = ExplainOutput {
        pre: &pre,
        surrogate: surrogate.as_ref(),
    };
    emit(a.out.as_deref(), &json_string(&out)?)?;
    if !pre.converged && pre.warning.is_none() {
        return Err(CliError::NonConvergence("explanation fit did not converge".into()));
    }
    Ok(())
}

fn load_spec(path: &Path) -> Result<ExperimentSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn cmd_experiment(a: ExperimentArgs) -> Result<(), CliError> {
    let mut spec = load_spec(&a.spec)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if a.full_scale {
        match &mut spec.scenario {
            Scenario::Normality(_) => spec.replications = 5000,
            Scenario::Detection(d) => d.n_prior = 100_000,
            Scenario::Consistency(_) => {}
        }
    }
    if let Some(r) = a.replications {
        spec.replications = r;
    }
    if spec.name.is_empty() || spec.name.contains(['/', '\\']) {
        return Err(CliError::Data(format!(
            "{}: experiment name must be non-empty and free of path separators",
            a.spec.display()
        )));
    }
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::Data(format!("{}: {e}", a.out_dir.display())))?;
    let report = run_experiment(&spec).map_err(|e| CliError::from_pre(&spec.name, e))?;
    let file = |suffix: &str| a.out_dir.join(format!("{}{suffix}", spec.name));
    emit(Some(&file(".json")), &json_string(&report)?)?;
    match &report {
        ExperimentReport::Normality(r) => {
            let k = r.scaled_deltas.first().map_or(0, Vec::len);
            let mut qq_rows = Vec::new();
            for c in 0..k {
                let column: Vec<f64> = r.standardized.iter().map(|s| s[c]).collect();
                for (theory, sample) in qq_points(&column) {
                    qq_rows.push(vec![c.to_string(), fmt_f64(theory), fmt_f64(sample)]);
                }
            }
            emit(
                Some(&file("_qq.csv")),
                &csv_table(&["component", "theoretical", "sample"], qq_rows),
            )?;
            let header: Vec<String> = (0..k).map(|c| format!("scaled_delta_{c}")).collect();
            let mut cols: Vec<&str> = vec!["replication"];
            cols.extend(header.iter().map(String::as_str));
            let rows = r.scaled_deltas.iter().enumerate().map(|(i, d)| {
                std::iter::once(i.to_string())
                    .chain(d.iter().map(|v| fmt_f64(*v)))
                    .collect()
            });
            emit(Some(&file("_deltas.csv")), &csv_table(&cols, rows))?;
            if !r.failure_budget_ok {
                return Err(CliError::NonConvergence(format!(
                    "{} of {} replications failed to converge",
                    r.failures, r.replications
                )));
            }
        }
        ExperimentReport::Consistency(r) => {
            let rows = r.rows.iter().map(|row| {
                vec![
                    row.n.to_string(),
                    fmt_f64(row.radius),
                    row.runs.to_string(),
                    fmt_f64(row.min_eig_mean),
                    fmt_f64(row.min_eig_sd),
                    fmt_f64(row.weyl_mean),
                    fmt_f64(row.weyl_sd),
                    fmt_f64(row.ratio_mean),
                    fmt_f64(row.ratio_sd),
                    row.weyl_below_min_eig.to_string(),
                ]
            });
            emit(
                Some(&file("_rows.csv")),
                &csv_table(
                    &[
                        "n",
                        "radius",
                        "runs",
                        "min_eig_mean",
                        "min_eig_sd",
                        "weyl_mean",
                        "weyl_sd",
                        "ratio_mean",
                        "ratio_sd",
                        "weyl_below_min_eig",
                    ],
                    rows,
                ),
            )?;
        }
        ExperimentReport::Detection(r) => {
            let mut roc_rows = Vec::new();
            let mut auc_rows = Vec::new();
            for (i, run) in r.runs.iter().enumerate() {
                for m in &run.methods {
                    auc_rows.push(vec![
                        i.to_string(),
                        run.seed.to_string(),
                        m.method.clone(),
                        fmt_f64(m.auc),
                        m.failures.to_string(),
                    ]);
                    for p in &m.roc {
                        roc_rows.push(vec![
                            i.to_string(),
                            m.method.clone(),
                            fmt_f64(p.threshold),
                            fmt_f64(p.fpr),
                            fmt_f64(p.tpr),
                        ]);
                    }
                }
            }
            emit(
                Some(&file("_auc.csv")),
                &csv_table(&["run", "seed", "method", "auc", "failures"], auc_rows),
            )?;
            emit(
                Some(&file("_roc.csv")),
                &csv_table(&["run", "method", "threshold", "fpr", "tpr"], roc_rows),
            )?;
        }
    }
    Ok(())
}
