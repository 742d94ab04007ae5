//! `mtp-energy`: estimate mean outcomes under modified treatment policies
//! with energy-balancing weights.
//!
//! Four subcommands cover the workflow: `estimate` (solve weights, fit the
//! outcome model, bootstrap a confidence interval), `scan-tau` (feasibility
//! thresholds across intervention scales), `compare-weights` (rank candidate
//! weight sets by balance), and `simulate` (synthetic datasets with Monte
//! Carlo ground truth).
//!
//! Every run is deterministic given its inputs and `--seed`: outputs embed
//! the resolved configuration and the crate version, and never depend on
//! `--threads` or `--out-dir`, so reruns are byte-identical. Exit codes:
//! 0 success, 2 input/validation error, 3 numeric failure (non-convergence
//! without `--allow-nonconverged`, unstable bootstrap, degenerate data).

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mtp_energy::{
    augmented_estimate, compare_weights, fit_default_model, gps_density_ratio_weights,
    influence_values, mc_truth, multiplier_bootstrap_draws, nonparametric_bootstrap,
    se_from_multiplier_draws, solve_from_cache, tau_scan, uniform_weights, wald_ci,
    weighted_estimate, BalanceCache, BootstrapConfig, Complexity, DGPSpec, Dataset,
    EnergyReport, EstimatorKind, Metric, OutcomeModel, PipelineConfig, PolicySpec,
    RankedCandidate, SolverOptions, TauScanResult, TreatmentKind, WeightMethod, WeightVector,
    ZeroModel, DEFAULT_LEVELS,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

// ---------------------------------------------------------------------------
// Error handling: map library errors onto the documented exit codes.

enum CliError {
    /// Bad inputs or configuration -> exit 2.
    Input(String),
    /// Numeric failure (non-convergence, unstable bootstrap, ...) -> exit 3.
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(msg) | CliError::Numeric(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<mtp_energy::Error> for CliError {
    fn from(e: mtp_energy::Error) -> Self {
        use mtp_energy::Error as E;
        match e {
            E::DegenerateBandwidth
            | E::DegenerateData(_)
            | E::BootstrapUnstable { .. }
            | E::InconsistentInfluence(_) => CliError::Numeric(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(format!("json: {e}"))
    }
}

type CliResult<T> = Result<T, CliError>;

// ---------------------------------------------------------------------------
// Command line definition.

#[derive(Parser)]
#[command(
    name = "mtp-energy",
    version,
    about = "Energy-balancing weights and effect estimates for modified treatment policies",
    after_help = "Exit codes: 0 success, 2 input error, 3 numeric failure."
)]
struct Cli {
    /// Worker threads for parallel sections (0 = all logical cores).
    /// Never affects results, only wall time.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Directory for output files (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve balancing weights and estimate the mean outcome under a policy.
    Estimate(EstimateArgs),
    /// Scan intervention scales for feasibility against bootstrap thresholds.
    ScanTau(ScanTauArgs),
    /// Rank candidate weight sets by their balance to the shifted target.
    CompareWeights(CompareWeightsArgs),
    /// Generate a synthetic dataset and its Monte-Carlo ground truth.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with one row per unit; all non-treatment, non-outcome
    /// columns are covariates.
    #[arg(long)]
    data: PathBuf,

    /// Treatment column name.
    #[arg(long, default_value = "a")]
    treatment: String,

    /// Outcome column name.
    #[arg(long, default_value = "y")]
    outcome: String,
}

impl DataArgs {
    fn load(&self) -> CliResult<Dataset> {
        Dataset::from_csv_path(&self.data, &self.treatment, &self.outcome)
            .map_err(CliError::from)
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Balance metric: `energy` or `mmd` (Gaussian kernel).
    #[arg(long, default_value = "energy")]
    metric: Metric,

    /// Ridge penalty on the weights (default: 1e-4 times the mean observed
    /// pairwise distance).
    #[arg(long)]
    lambda: Option<f64>,

    /// Kernel bandwidth for `--metric mmd` (default: pooled median
    /// heuristic).
    #[arg(long)]
    bandwidth: Option<f64>,

    /// Upper bound on each weight (must be at least 1).
    #[arg(long)]
    cap: Option<f64>,
}

impl SolverArgs {
    fn to_options(&self, seed: u64) -> SolverOptions {
        SolverOptions {
            metric: self.metric,
            lambda: self.lambda,
            bandwidth: self.bandwidth,
            cap: self.cap,
            seed,
            ..SolverOptions::default()
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    /// Augmented estimator with the cross-validated ridge outcome model.
    Augmented,
    /// Pure weighted (Horvitz-Thompson style) estimator.
    Weighted,
}

impl EstimatorArg {
    fn kind(self) -> EstimatorKind {
        match self {
            EstimatorArg::Augmented => EstimatorKind::Augmented,
            EstimatorArg::Weighted => EstimatorKind::Weighted,
        }
    }

    fn label(self) -> &'static str {
        match self {
            EstimatorArg::Augmented => "augmented",
            EstimatorArg::Weighted => "weighted",
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Policy JSON file; omit for the identity policy.
    #[arg(long)]
    policy: Option<PathBuf>,

    #[command(flatten)]
    solver: SolverArgs,

    /// Point estimator.
    #[arg(long, value_enum, default_value = "augmented")]
    estimator: EstimatorArg,

    /// Multiplier-bootstrap replications for the standard error (0 disables).
    #[arg(long, default_value_t = 1000)]
    mult_boot_r: usize,

    /// Nonparametric-bootstrap replications (0 disables; each replication
    /// re-solves the weights and refits the model, so this is slow).
    #[arg(long, default_value_t = 0)]
    boot_r: usize,

    /// Confidence level for the Wald intervals.
    #[arg(long, default_value_t = 0.95)]
    level: f64,

    /// RNG seed for all bootstrap streams.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Also write per-replication bootstrap draws as CSV.
    #[arg(long)]
    dump_replicates: bool,

    /// Exit 0 even if the weight solver stopped at its iteration cap.
    #[arg(long)]
    allow_nonconverged: bool,
}

#[derive(Args)]
struct ScanTauArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Policy JSON file defining the policy family to scan.
    #[arg(long)]
    policy: PathBuf,

    /// Comma-separated, strictly ascending intervention scales.
    #[arg(long, value_delimiter = ',', required = true)]
    tau_grid: Vec<f64>,

    #[command(flatten)]
    solver: SolverArgs,

    /// Bootstrap replications behind each feasibility threshold.
    #[arg(long, default_value_t = 1000)]
    boot_r: usize,

    /// Comma-separated quantile levels for the thresholds.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LEVELS)]
    levels: Vec<f64>,

    /// RNG seed for the threshold resampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CompareWeightsArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Policy JSON file; omit for the identity policy.
    #[arg(long)]
    policy: Option<PathBuf>,

    /// Built-in candidates to include.
    #[arg(long, value_delimiter = ',', value_enum, default_value = "uniform,ebw,gps")]
    builtin: Vec<BuiltinWeights>,

    /// Extra candidates as `label=weights.csv` (single `weight` column,
    /// one row per unit); repeatable.
    #[arg(long, value_parser = parse_labeled_path)]
    weights: Vec<(String, PathBuf)>,

    #[command(flatten)]
    solver: SolverArgs,

    /// RNG seed recorded in the solver options.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Rank the energy-balancing candidate even if its solve stopped early.
    #[arg(long)]
    allow_nonconverged: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BuiltinWeights {
    /// All-ones weights.
    Uniform,
    /// Energy-balancing weights solved on this data.
    Ebw,
    /// Normal-model GPS density-ratio weights.
    Gps,
}

fn parse_labeled_path(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((label, path)) if !label.is_empty() && !path.is_empty() => {
            Ok((label.to_string(), PathBuf::from(path)))
        }
        _ => Err(format!("expected label=path, got '{s}'")),
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ComplexityArg {
    Moderate,
    High,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TreatmentKindArg {
    Continuous,
    Discrete,
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of rows.
    #[arg(long)]
    n: usize,

    /// Number of covariates.
    #[arg(long)]
    p: usize,

    /// Outcome-surface complexity.
    #[arg(long, value_enum, default_value = "moderate")]
    complexity: ComplexityArg,

    /// Treatment mechanism.
    #[arg(long, value_enum, default_value = "continuous")]
    treatment_kind: TreatmentKindArg,

    /// RNG seed for the dataset and the truth draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Policy JSON file for the ground-truth value; omit for the identity
    /// policy.
    #[arg(long)]
    policy: Option<PathBuf>,

    /// Monte-Carlo draws behind the ground-truth value.
    #[arg(long, default_value_t = 100_000)]
    truth_n: usize,
}

// ---------------------------------------------------------------------------
// Output documents.

fn policy_json(policy: &PolicySpec) -> CliResult<serde_json::Value> {
    Ok(serde_json::from_str(&policy.to_json_string()?)?)
}

fn load_policy(path: &Option<PathBuf>) -> CliResult<PolicySpec> {
    match path {
        Some(p) => PolicySpec::from_json_path(p).map_err(CliError::from),
        None => Ok(PolicySpec::identity()),
    }
}

fn write_text(dir: &Path, name: &str, text: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, text)?;
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, doc: &T) -> CliResult<PathBuf> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    write_text(dir, name, &text)
}

#[derive(Serialize)]
struct EstimateConfig {
    data: String,
    treatment: String,
    outcome: String,
    policy: serde_json::Value,
    solver: SolverOptions,
    estimator: &'static str,
    mult_boot_r: usize,
    boot_r: usize,
    level: f64,
    seed: u64,
}

#[derive(Serialize)]
struct MultiplierOut {
    r: usize,
    se: f64,
    ci_lower: f64,
    ci_upper: f64,
    level: f64,
}

#[derive(Serialize)]
struct NonparamOut {
    r: usize,
    successes: usize,
    failures: usize,
    se: f64,
    ci_lower: f64,
    ci_upper: f64,
    level: f64,
}

#[derive(Serialize)]
struct EstimateOutput {
    version: &'static str,
    command: &'static str,
    config: EstimateConfig,
    n: usize,
    p: usize,
    mu_hat: f64,
    converged: bool,
    iterations: usize,
    objective: Option<f64>,
    balance: EnergyReport,
    multiplier: Option<MultiplierOut>,
    nonparametric: Option<NonparamOut>,
}

#[derive(Serialize)]
struct ScanConfig {
    data: String,
    treatment: String,
    outcome: String,
    policy: serde_json::Value,
    solver: SolverOptions,
    tau_grid: Vec<f64>,
    boot_r: usize,
    levels: Vec<f64>,
    seed: u64,
}

#[derive(Serialize)]
struct ScanOutput {
    version: &'static str,
    command: &'static str,
    config: ScanConfig,
    result: TauScanResult,
}

#[derive(Serialize)]
struct CompareConfig {
    data: String,
    treatment: String,
    outcome: String,
    policy: serde_json::Value,
    solver: SolverOptions,
    builtin: Vec<&'static str>,
    weights: Vec<(String, String)>,
    seed: u64,
}

#[derive(Serialize)]
struct CompareOutput {
    version: &'static str,
    command: &'static str,
    config: CompareConfig,
    ranking: Vec<RankedCandidate>,
}

#[derive(Serialize)]
struct SimulateConfig {
    spec: DGPSpec,
    policy: serde_json::Value,
    truth_n: usize,
}

#[derive(Serialize)]
struct SimulateOutput {
    version: &'static str,
    command: &'static str,
    config: SimulateConfig,
    truth: mtp_energy::McTruth,
}

// ---------------------------------------------------------------------------
// Commands.

fn cmd_estimate(out_dir: &Path, args: &EstimateArgs) -> CliResult<()> {
    let data = args.data.load()?;
    let policy = load_policy(&args.policy)?;
    let opts = args.solver.to_options(args.seed);
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::Input(format!(
            "invalid confidence level {}: must lie strictly between 0 and 1",
            args.level
        )));
    }

    let cache = BalanceCache::new(&data, &policy, opts.standardize)?;
    let weights = solve_from_cache(&cache, &opts)?;
    if !weights.converged && !args.allow_nonconverged {
        return Err(CliError::Numeric(format!(
            "weight solver stopped after {} iterations without meeting the \
             convergence test; rerun with --allow-nonconverged to accept the \
             best iterate",
            weights.iterations
        )));
    }
    let balance = match opts.metric {
        Metric::Energy => cache.energy_report(&weights)?,
        Metric::GaussianMmd => {
            let bandwidth = match opts.bandwidth {
                Some(b) => b,
                None => cache.pooled_median_bandwidth()?,
            };
            cache.mmd_report(&weights, bandwidth)?
        }
    };

    let model: Box<dyn OutcomeModel> = match args.estimator {
        EstimatorArg::Augmented => Box::new(fit_default_model(&data)?),
        EstimatorArg::Weighted => {
            let mut zero = ZeroModel::default();
            zero.fit(data.x(), data.a(), data.y())?;
            Box::new(zero)
        }
    };
    let mu_hat = match args.estimator {
        EstimatorArg::Augmented => augmented_estimate(&weights, &data, &policy, model.as_ref())?,
        EstimatorArg::Weighted => weighted_estimate(&weights, data.y())?,
    };

    let n = data.n();
    let multiplier = if args.mult_boot_r > 0 {
        let cfg = BootstrapConfig::new(args.mult_boot_r, args.seed).with_level(args.level);
        let phi = influence_values(&weights, &data, &policy, model.as_ref(), mu_hat)?;
        let draws = multiplier_bootstrap_draws(&phi, &cfg)?;
        let se_half = se_from_multiplier_draws(&draws);
        let (lo, hi) = wald_ci(mu_hat, se_half, n, args.level)?;
        if args.dump_replicates {
            let mut csv = String::from("replication,draw\n");
            for (i, d) in draws.iter().enumerate() {
                csv.push_str(&format!("{i},{d}\n"));
            }
            write_text(out_dir, "replicates_multiplier.csv", &csv)?;
        }
        Some(MultiplierOut {
            r: args.mult_boot_r,
            se: se_half / (n as f64).sqrt(),
            ci_lower: lo,
            ci_upper: hi,
            level: args.level,
        })
    } else {
        None
    };

    let nonparametric = if args.boot_r > 0 {
        let cfg = BootstrapConfig::new(args.boot_r, args.seed).with_level(args.level);
        let pipeline = PipelineConfig {
            weights: WeightMethod::EnergyBalancing {
                options: opts.clone(),
            },
            estimator: args.estimator.kind(),
        };
        let boot = nonparametric_bootstrap(&data, &policy, &pipeline, &cfg)?;
        let (lo, hi) = wald_ci(mu_hat, boot.se * (n as f64).sqrt(), n, args.level)?;
        if args.dump_replicates {
            let mut csv = String::from("draw,estimate\n");
            for (i, e) in boot.estimates.iter().enumerate() {
                csv.push_str(&format!("{i},{e}\n"));
            }
            write_text(out_dir, "replicates_nonparametric.csv", &csv)?;
        }
        Some(NonparamOut {
            r: boot.total,
            successes: boot.estimates.len(),
            failures: boot.failures,
            se: boot.se,
            ci_lower: lo,
            ci_upper: hi,
            level: args.level,
        })
    } else {
        None
    };

    let output = EstimateOutput {
        version: VERSION,
        command: "estimate",
        config: EstimateConfig {
            data: args.data.data.display().to_string(),
            treatment: args.data.treatment.clone(),
            outcome: args.data.outcome.clone(),
            policy: policy_json(&policy)?,
            solver: opts,
            estimator: args.estimator.label(),
            mult_boot_r: args.mult_boot_r,
            boot_r: args.boot_r,
            level: args.level,
            seed: args.seed,
        },
        n,
        p: data.p(),
        mu_hat,
        converged: weights.converged,
        iterations: weights.iterations,
        objective: weights.objective,
        balance,
        multiplier,
        nonparametric,
    };
    write_json(out_dir, "estimate.json", &output)?;

    let mut weights_csv = Vec::new();
    weights.write_csv(&mut weights_csv).map_err(CliError::from)?;
    write_text(
        out_dir,
        "weights.csv",
        &String::from_utf8(weights_csv).expect("weights csv is utf-8"),
    )?;

    println!(
        "mu_hat = {mu_hat:.6}  (n = {n}, converged = {}, balance = {:.3e})",
        weights.converged, output.balance.value
    );
    Ok(())
}

fn cmd_scan_tau(out_dir: &Path, args: &ScanTauArgs) -> CliResult<()> {
    let data = args.data.load()?;
    let policy = PolicySpec::from_json_path(&args.policy)?;
    let opts = args.solver.to_options(args.seed);
    let result = tau_scan(
        &data,
        &policy,
        &args.tau_grid,
        &opts,
        args.boot_r,
        &args.levels,
        args.seed,
    )?;

    let mut csv = Vec::new();
    result.write_csv(&mut csv)?;
    write_text(
        out_dir,
        "tau_scan.csv",
        &String::from_utf8(csv).expect("scan csv is utf-8"),
    )?;

    let output = ScanOutput {
        version: VERSION,
        command: "scan-tau",
        config: ScanConfig {
            data: args.data.data.display().to_string(),
            treatment: args.data.treatment.clone(),
            outcome: args.data.outcome.clone(),
            policy: policy_json(&policy)?,
            solver: opts,
            tau_grid: args.tau_grid.clone(),
            boot_r: args.boot_r,
            levels: args.levels.clone(),
            seed: args.seed,
        },
        result,
    };
    write_json(out_dir, "tau_scan.json", &output)?;

    let result = &output.result;
    for (l, &level) in result.levels.iter().enumerate() {
        match result.max_safe_tau[l] {
            Some(tau) => println!("level {level}: max safe tau = {tau}"),
            None => println!("level {level}: no feasible tau on the grid"),
        }
    }
    Ok(())
}

fn builtin_label(b: BuiltinWeights) -> &'static str {
    match b {
        BuiltinWeights::Uniform => "uniform",
        BuiltinWeights::Ebw => "ebw",
        BuiltinWeights::Gps => "gps",
    }
}

fn cmd_compare_weights(out_dir: &Path, args: &CompareWeightsArgs) -> CliResult<()> {
    let data = args.data.load()?;
    let policy = load_policy(&args.policy)?;
    let opts = args.solver.to_options(args.seed);

    let mut candidates: Vec<(String, WeightVector)> = Vec::new();
    for &b in &args.builtin {
        let label = builtin_label(b).to_string();
        let w = match b {
            BuiltinWeights::Uniform => uniform_weights(data.n()),
            BuiltinWeights::Ebw => {
                let w = mtp_energy::solve_ebw(&data, &policy, &opts)?;
                if !w.converged && !args.allow_nonconverged {
                    return Err(CliError::Numeric(format!(
                        "energy-balancing solve stopped after {} iterations without \
                         converging; rerun with --allow-nonconverged to rank it anyway",
                        w.iterations
                    )));
                }
                w
            }
            BuiltinWeights::Gps => gps_density_ratio_weights(&data, &policy)?,
        };
        candidates.push((label, w));
    }
    for (label, path) in &args.weights {
        let w = WeightVector::from_csv_path(path).map_err(|e| {
            CliError::Input(format!("candidate '{label}' ({}): {e}", path.display()))
        })?;
        candidates.push((label.clone(), w));
    }

    let ranking = compare_weights(&data, &policy, &candidates)?;
    let output = CompareOutput {
        version: VERSION,
        command: "compare-weights",
        config: CompareConfig {
            data: args.data.data.display().to_string(),
            treatment: args.data.treatment.clone(),
            outcome: args.data.outcome.clone(),
            policy: policy_json(&policy)?,
            solver: opts,
            builtin: args.builtin.iter().map(|&b| builtin_label(b)).collect(),
            weights: args
                .weights
                .iter()
                .map(|(l, p)| (l.clone(), p.display().to_string()))
                .collect(),
            seed: args.seed,
        },
        ranking,
    };
    write_json(out_dir, "ranking.json", &output)?;

    for (rank, c) in output.ranking.iter().enumerate() {
        println!("{}. {}  distance = {:.6e}", rank + 1, c.label, c.distance);
    }
    Ok(())
}

fn cmd_simulate(out_dir: &Path, args: &SimulateArgs) -> CliResult<()> {
    let spec = DGPSpec {
        n: args.n,
        p: args.p,
        complexity: match args.complexity {
            ComplexityArg::Moderate => Complexity::Moderate,
            ComplexityArg::High => Complexity::High,
        },
        treatment_kind: match args.treatment_kind {
            TreatmentKindArg::Continuous => TreatmentKind::Continuous,
            TreatmentKindArg::Discrete => TreatmentKind::Discrete,
        },
        seed: args.seed,
    };
    let data = spec.generate()?;
    let policy = load_policy(&args.policy)?;
    let truth = mc_truth(&spec, &policy, args.truth_n)?;

    let mut csv = Vec::new();
    data.write_csv(&mut csv).map_err(CliError::from)?;
    write_text(
        out_dir,
        "dataset.csv",
        &String::from_utf8(csv).expect("dataset csv is utf-8"),
    )?;

    let output = SimulateOutput {
        version: VERSION,
        command: "simulate",
        config: SimulateConfig {
            spec,
            policy: policy_json(&policy)?,
            truth_n: args.truth_n,
        },
        truth,
    };
    write_json(out_dir, "truth.json", &output)?;

    println!(
        "wrote {} rows; truth = {:.6} (mcse {:.2e})",
        data.n(),
        truth.value,
        truth.mcse
    );
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Estimate(args) => cmd_estimate(&cli.out_dir, args),
        Command::ScanTau(args) => cmd_scan_tau(&cli.out_dir, args),
        Command::CompareWeights(args) => cmd_compare_weights(&cli.out_dir, args),
        Command::Simulate(args) => cmd_simulate(&cli.out_dir, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: could not size the thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
