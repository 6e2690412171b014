//! Command-line front end: run the test on CSV files, run simulation
//! experiments, and aggregate p-values across auxiliary-randomization
//! replays.
//!
//! Exit codes partition failure causes: 2 for configuration errors, 3 for
//! data errors, 4 for numeric failures. A rejected null hypothesis is a
//! result, not a fault, and always exits 0.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::classifier::{ClassifierKind, FitConfig};
use crate::conformal::{median_p, run_test, ConformalRun, TestConfig, TestError};
use crate::dataset::{load_csv, DatasetError, Population};
use crate::sim::{
    run_experiment, ExperimentGrid, Hypothesis, Model, ModelSpec, SimError, WeightMode,
};

/// Conformal test of covariate shift.
#[derive(Debug, Parser)]
#[command(name = "covshift", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test two labeled CSV samples for equality of conditional
    /// distributions.
    Test(TestArgs),
    /// Run a synthetic-model experiment grid and write a report.
    Simulate(SimulateArgs),
    /// Combine p-values from reports that replayed the auxiliary
    /// randomization on the same data.
    Aggregate(AggregateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Training-population CSV (one header row).
    #[arg(long)]
    pub train: PathBuf,
    /// Testing-population CSV with the same feature columns.
    #[arg(long)]
    pub test: PathBuf,
    /// Name of the response column; all other columns are covariates.
    #[arg(long, default_value = "y")]
    pub response: String,
    /// Ranking batch size.
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    /// Number of ranking batches; defaults to min(ceil(n2/ln n2), n1/(2m)).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Density-ratio estimator: ll, ql, nn or sparse-ll.
    #[arg(long, default_value = "ll")]
    pub estimator: String,
    /// L1 penalty for the sparse-ll estimator.
    #[arg(long, default_value_t = 0.0)]
    pub l1_lambda: f64,
    /// Assume equal covariate marginals and use the exact weights 1/(m+1).
    #[arg(long)]
    pub equal_marginals: bool,
    /// Number of auxiliary-randomization replays to aggregate.
    #[arg(long, default_value_t = 9)]
    pub b: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Report file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Synthetic model: a, b, c or d.
    #[arg(long)]
    pub model: String,
    /// null or alt.
    #[arg(long)]
    pub hypothesis: String,
    /// Testing sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "200")]
    pub n2: Vec<usize>,
    /// Ranking batch sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "5")]
    pub m: Vec<usize>,
    /// Estimators, comma separated subset of ll, ql, nn, sparse-ll.
    #[arg(long, value_delimiter = ',', default_value = "ll")]
    pub estimator: Vec<String>,
    /// Weight sources, comma separated subset of oracle, estimated,
    /// miscalibrated.
    #[arg(long, value_delimiter = ',', default_value = "estimated")]
    pub weights: Vec<String>,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Covariate dimension.
    #[arg(long, default_value_t = 5)]
    pub p: usize,
    /// Number of nonzero regression coefficients (high-dimensional runs).
    #[arg(long)]
    pub s: Option<usize>,
    /// L1 penalty grid for sparse-ll, comma separated; one report row per
    /// value.
    #[arg(long, value_delimiter = ',')]
    pub l1_lambda: Vec<f64>,
    /// Hidden layer widths for the nn estimator, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    /// Include per-replication detail in JSON reports.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Test-report JSON files, or directories containing them.
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
    fn data(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
    fn numeric(message: impl Into<String>) -> Self {
        Self {
            code: 4,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

fn from_dataset_error(e: DatasetError) -> CliError {
    match e {
        DatasetError::InfeasibleSplit(_) => CliError::config(format!("configuration: {e}")),
        other => CliError::data(format!("data: {other}")),
    }
}

fn from_test_error(e: TestError) -> CliError {
    match e {
        TestError::Config(_) => CliError::config(format!("configuration: {e}")),
        TestError::Split(inner) => from_dataset_error(inner),
        TestError::MarginalFit(_) | TestError::ConditionalFit(_) => {
            CliError::numeric(format!("numeric: {e}"))
        }
        other => CliError::numeric(format!("numeric: {other}")),
    }
}

fn from_sim_error(e: SimError) -> CliError {
    match e {
        SimError::BadArg(_) | SimError::Shape(_) => CliError::config(format!("configuration: {e}")),
        SimError::Data(inner) => from_dataset_error(inner),
        SimError::Test(inner) => from_test_error(inner),
        SimError::FilterRejection { .. } => CliError::data(format!("data: {e}")),
        other => CliError::numeric(format!("numeric: {other}")),
    }
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // ignore the error when a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::config("alpha must be in (0,1)"))
    }
}

fn parse_estimator(s: &str) -> Result<ClassifierKind, CliError> {
    s.parse().map_err(CliError::config)
}

fn write_output(out: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| CliError::data(format!("data: cannot write {}: {e}", path.display()))),
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

/// What `covshift test` writes: the resolved configuration, one run per
/// auxiliary-randomization replay, and the combined p-value.
#[derive(Debug, Serialize)]
pub struct TestReport {
    pub command: String,
    pub version: String,
    pub train_path: String,
    pub test_path: String,
    pub response: String,
    pub alpha: f64,
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub estimator: ClassifierKind,
    pub l1_lambda: f64,
    pub equal_marginals: bool,
    pub b: usize,
    pub seeds: Vec<u64>,
    pub train_fingerprint: String,
    pub test_fingerprint: String,
    pub p_values: Vec<f64>,
    /// Median-p combination across the B replays (2x median, capped at 1)
    /// when B > 1; the single p-value otherwise.
    pub combined_p: f64,
    pub reject_any_alpha: f64,
    pub warnings: Vec<String>,
    pub runs: Vec<ConformalRun>,
}

/// Run the test command; B replays with consecutive seeds, median-p
/// combined.
pub fn cmd_test(args: &TestArgs) -> Result<TestReport, CliError> {
    check_alpha(args.alpha)?;
    if args.b < 1 {
        return Err(CliError::config("b must be >= 1"));
    }
    let estimator = parse_estimator(&args.estimator)?;
    init_threads(args.threads);

    let train = load_csv(&args.train, &args.response, Population::Train)
        .map_err(from_dataset_error)?;
    let test =
        load_csv(&args.test, &args.response, Population::Test).map_err(from_dataset_error)?;
    if train.p() != test.p() {
        return Err(CliError::data(format!(
            "data: train has {} feature columns, test has {}",
            train.p(),
            test.p()
        )));
    }

    let fit = FitConfig {
        l1_lambda: args.l1_lambda,
        ..FitConfig::default()
    };
    let mut runs = Vec::with_capacity(args.b);
    let mut seeds = Vec::with_capacity(args.b);
    for r in 0..args.b {
        let seed = args.seed + r as u64;
        let config = TestConfig {
            m: args.m,
            k: args.k,
            alpha: args.alpha,
            estimator,
            fit: fit.clone(),
            equal_marginals: args.equal_marginals,
            seed,
        };
        runs.push(run_test(&train, &test, &config).map_err(from_test_error)?);
        seeds.push(seed);
    }

    let p_values: Vec<f64> = runs.iter().map(|r| r.p_value).collect();
    let combined_p = if args.b > 1 {
        median_p(&p_values).map_err(from_test_error)?
    } else {
        p_values[0]
    };
    let mut warnings = Vec::new();
    for r in &runs {
        for w in &r.diagnostics.warnings {
            if !warnings.contains(w) {
                warnings.push(w.clone());
            }
        }
    }

    Ok(TestReport {
        command: "test".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        train_path: args.train.display().to_string(),
        test_path: args.test.display().to_string(),
        response: args.response.clone(),
        alpha: args.alpha,
        m: args.m,
        k: runs[0].k,
        estimator,
        l1_lambda: args.l1_lambda,
        equal_marginals: args.equal_marginals,
        b: args.b,
        seeds,
        train_fingerprint: format!("{:016x}", train.fingerprint()),
        test_fingerprint: format!("{:016x}", test.fingerprint()),
        p_values,
        combined_p,
        reject_any_alpha: args.alpha,
        warnings,
        runs,
    })
}

fn test_report_csv(report: &TestReport) -> String {
    let mut out = String::from("seed,m,K,t,p_value,reject\n");
    for r in &report.runs {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{}\n",
            r.seed, r.m, r.k, r.t_statistic, r.p_value, r.reject
        ));
    }
    out.push_str(&format!("combined,,,,{:.6},\n", report.combined_p));
    out
}

/// Entry point for the test subcommand.
pub fn run_cmd_test(args: &TestArgs) -> Result<(), CliError> {
    let report = cmd_test(args)?;
    let content = match args.format {
        OutputFormat::Json => {
            serde_json::to_string_pretty(&report).expect("report serializes")
        }
        OutputFormat::Csv => test_report_csv(&report),
    };
    write_output(&args.out, &content)?;
    if args.out.is_some() {
        println!(
            "combined_p = {:.6} over B = {} replays (reject at alpha {}: {})",
            report.combined_p,
            report.b,
            report.alpha,
            report.combined_p <= report.alpha
        );
    }
    Ok(())
}

/// Entry point for the simulate subcommand.
pub fn run_cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    check_alpha(args.alpha)?;
    init_threads(args.threads);

    let model: Model = args.model.parse().map_err(CliError::config)?;
    let hypothesis: Hypothesis = args.hypothesis.parse().map_err(CliError::config)?;
    let estimators = args
        .estimator
        .iter()
        .map(|s| parse_estimator(s))
        .collect::<Result<Vec<_>, _>>()?;
    let weight_modes = args
        .weights
        .iter()
        .map(|s| s.parse::<WeightMode>().map_err(CliError::config))
        .collect::<Result<Vec<_>, _>>()?;
    let s = args.s.unwrap_or(args.p.min(5));
    if s > args.p || s == 0 {
        return Err(CliError::config(format!(
            "s = {s} must be in 1..=p = {}",
            args.p
        )));
    }

    let spec = ModelSpec::with_dim(model, hypothesis, args.p, s, args.seed);
    let grid = ExperimentGrid {
        n2_values: args.n2.clone(),
        m_values: args.m.clone(),
        estimators,
        weight_modes,
        l1_lambdas: args.l1_lambda.clone(),
    };
    let fit = FitConfig {
        hidden_layers: args.hidden.clone(),
        ..FitConfig::default()
    };
    let report = run_experiment(&spec, &grid, args.reps, args.alpha, args.seed, &fit)
        .map_err(from_sim_error)?;

    for row in &report.rows {
        println!(
            "model={} hyp={} est={} weights={} n2={} m={} K={} reps={} reject={:.3}{}{}{} failures={}",
            row.model,
            row.hypothesis,
            row.estimator,
            row.weight_mode,
            row.n2,
            row.m,
            row.k,
            row.reps,
            row.reject_frac,
            row.err_p.map(|v| format!(" err_p={v:.3}")).unwrap_or_default(),
            row.mce.map(|v| format!(" mce={v:.3}")).unwrap_or_default(),
            row.lambda.map(|v| format!(" lambda={v}")).unwrap_or_default(),
            row.failures,
        );
    }

    let content = match args.format {
        OutputFormat::Csv => report.to_csv_string(),
        OutputFormat::Json => serde_json::to_string_pretty(&report.to_json_value(args.full))
            .expect("report serializes"),
    };
    if args.out.is_some() {
        write_output(&args.out, &content)?;
    } else if args.format == OutputFormat::Csv {
        // the per-cell summary is already on stdout; still emit the table
        println!("{content}");
    } else {
        println!("{content}");
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct AggregateReport {
    pub command: String,
    pub version: String,
    pub b: usize,
    pub train_fingerprint: String,
    pub test_fingerprint: String,
    pub p_values: Vec<f64>,
    pub combined_p: f64,
}

fn collect_report_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut in_dir: Vec<PathBuf> = std::fs::read_dir(input)
                .map_err(|e| CliError::data(format!("data: cannot read {}: {e}", input.display())))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
                .collect();
            in_dir.sort();
            files.extend(in_dir);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err(CliError::data("data: no report files found"));
    }
    Ok(files)
}

fn read_test_report(path: &Path) -> Result<(String, String, Vec<f64>), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("data: cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("data: {} is not JSON: {e}", path.display())))?;
    let fp = |key: &str| -> Result<String, CliError> {
        value
            .get(key)
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| {
                CliError::data(format!(
                    "data: {} lacks the {key} field of a test report",
                    path.display()
                ))
            })
    };
    let train_fp = fp("train_fingerprint")?;
    let test_fp = fp("test_fingerprint")?;
    let p_values: Vec<f64> = value
        .get("p_values")
        .and_then(|v| v.as_array())
        .map(|arr| arr.iter().filter_map(|p| p.as_f64()).collect())
        .unwrap_or_default();
    if p_values.is_empty() {
        return Err(CliError::data(format!(
            "data: {} carries no p-values",
            path.display()
        )));
    }
    Ok((train_fp, test_fp, p_values))
}

/// Pool p-values from reports over the same data and combine them with the
/// median rule. Reports whose data fingerprints disagree are refused.
pub fn cmd_aggregate(args: &AggregateArgs) -> Result<AggregateReport, CliError> {
    let files = collect_report_paths(&args.inputs)?;
    let mut pooled = Vec::new();
    let mut fingerprints: Option<(String, String)> = None;
    for path in &files {
        let (train_fp, test_fp, p_values) = read_test_report(path)?;
        match &fingerprints {
            None => fingerprints = Some((train_fp, test_fp)),
            Some((t0, s0)) => {
                if *t0 != train_fp || *s0 != test_fp {
                    return Err(CliError::data(format!(
                        "data: {} was computed on different data (fingerprint mismatch)",
                        path.display()
                    )));
                }
            }
        }
        pooled.extend(p_values);
    }
    let combined_p = median_p(&pooled).map_err(from_test_error)?;
    let (train_fingerprint, test_fingerprint) = fingerprints.expect("at least one report");
    Ok(AggregateReport {
        command: "aggregate".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        b: pooled.len(),
        train_fingerprint,
        test_fingerprint,
        p_values: pooled,
        combined_p,
    })
}

/// Entry point for the aggregate subcommand.
pub fn run_cmd_aggregate(args: &AggregateArgs) -> Result<(), CliError> {
    let report = cmd_aggregate(args)?;
    let content = serde_json::to_string_pretty(&report).expect("report serializes");
    write_output(&args.out, &content)?;
    if args.out.is_some() {
        println!("combined_p = {:.6} over {} p-values", report.combined_p, report.b);
    }
    Ok(())
}

/// Dispatch a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Test(args) => run_cmd_test(args),
        Command::Simulate(args) => run_cmd_simulate(args),
        Command::Aggregate(args) => run_cmd_aggregate(args),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_toy_csvs(dir: &Path) -> (PathBuf, PathBuf) {
        let mut rng_state = 88172645463325252u64;
        let mut next = move || {
            // xorshift, plenty for toy fixtures
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state as f64 / u64::MAX as f64) * 2.0 - 1.0
        };
        let mut train = String::from("x1,x2,y\n");
        let mut test = String::from("x1,x2,y\n");
        for i in 0..220 {
            let (a, b) = (next(), next());
            let y = a + b + next();
            let line = format!("{a},{b},{y}\n");
            if i < 150 {
                train.push_str(&line);
            } else {
                test.push_str(&line);
            }
        }
        let train_path = dir.join("train.csv");
        let test_path = dir.join("test.csv");
        std::fs::write(&train_path, train).unwrap();
        std::fs::write(&test_path, test).unwrap();
        (train_path, test_path)
    }

    fn toy_args(train: PathBuf, test: PathBuf) -> TestArgs {
        TestArgs {
            train,
            test,
            response: "y".into(),
            m: 2,
            k: Some(5),
            alpha: 0.05,
            estimator: "ll".into(),
            l1_lambda: 0.0,
            equal_marginals: false,
            b: 3,
            seed: 1,
            threads: None,
            out: None,
            format: OutputFormat::Json,
        }
    }

    #[test]
    fn bad_alpha_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let (train, test) = write_toy_csvs(dir.path());
        let mut args = toy_args(train, test);
        args.alpha = 1.5;
        let err = cmd_test(&args).unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("alpha must be in (0,1)"));
    }

    #[test]
    fn missing_file_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let (_, test) = write_toy_csvs(dir.path());
        let args = toy_args(dir.path().join("absent.csv"), test);
        let err = cmd_test(&args).unwrap_err();
        assert_eq!(err.code, 3);
    }

    #[test]
    fn test_report_carries_seeds_and_combined_p() {
        let dir = tempfile::tempdir().unwrap();
        let (train, test) = write_toy_csvs(dir.path());
        let report = cmd_test(&toy_args(train, test)).unwrap();
        assert_eq!(report.seeds, vec![1, 2, 3]);
        assert_eq!(report.p_values.len(), 3);
        let expected = median_p(&report.p_values).unwrap();
        assert_eq!(report.combined_p, expected);
        assert_eq!(report.runs.len(), 3);
        // identical config replays bit-identically
        let dir2 = tempfile::tempdir().unwrap();
        let (train2, test2) = write_toy_csvs(dir2.path());
        let report2 = cmd_test(&toy_args(train2, test2)).unwrap();
        assert_eq!(report.train_fingerprint, report2.train_fingerprint);
        assert_eq!(
            serde_json::to_string(&report.p_values).unwrap(),
            serde_json::to_string(&report2.p_values).unwrap()
        );
    }

    #[test]
    fn equal_marginals_flag_adds_warning() {
        let dir = tempfile::tempdir().unwrap();
        let (train, test) = write_toy_csvs(dir.path());
        let mut args = toy_args(train, test);
        args.equal_marginals = true;
        let report = cmd_test(&args).unwrap();
        assert!(report
            .warnings
            .iter()
            .any(|w| w.contains("weights forced to the exact value 1/(m+1)")));
    }

    #[test]
    fn aggregate_combines_and_guards_fingerprints() {
        let dir = tempfile::tempdir().unwrap();
        let (train, test) = write_toy_csvs(dir.path());
        let mut args = toy_args(train.clone(), test.clone());
        args.b = 3;
        args.out = Some(dir.path().join("r1.json"));
        run_cmd_test(&args).unwrap();
        let mut args2 = toy_args(train, test);
        args2.b = 3;
        args2.seed = 50;
        args2.out = Some(dir.path().join("r2.json"));
        run_cmd_test(&args2).unwrap();

        let agg = cmd_aggregate(&AggregateArgs {
            inputs: vec![dir.path().to_path_buf()],
            out: None,
        })
        .unwrap();
        assert_eq!(agg.b, 6);
        assert_eq!(agg.combined_p, median_p(&agg.p_values).unwrap());

        // now corrupt one report's fingerprint
        let path = dir.path().join("r2.json");
        let text = std::fs::read_to_string(&path).unwrap();
        let swapped = text.replace(
            &agg.train_fingerprint,
            "0000000000000000",
        );
        std::fs::write(&path, swapped).unwrap();
        let err = cmd_aggregate(&AggregateArgs {
            inputs: vec![dir.path().to_path_buf()],
            out: None,
        })
        .unwrap_err();
        assert_eq!(err.code, 3);
        assert!(err.message.contains("fingerprint mismatch"));
    }

    #[test]
    fn aggregate_single_run_doubles_the_median() {
        let dir = tempfile::tempdir().unwrap();
        let (train, test) = write_toy_csvs(dir.path());
        let mut args = toy_args(train, test);
        args.b = 1;
        args.out = Some(dir.path().join("solo.json"));
        run_cmd_test(&args).unwrap();
        let agg = cmd_aggregate(&AggregateArgs {
            inputs: vec![dir.path().join("solo.json")],
            out: None,
        })
        .unwrap();
        assert_eq!(agg.b, 1);
        assert!((agg.combined_p - (2.0 * agg.p_values[0]).min(1.0)).abs() < 1e-15);
    }

    #[test]
    fn h0_self_test_rarely_rejects() {
        // both files cut from one source: rejection should stay near alpha
        let dir = tempfile::tempdir().unwrap();
        let (train, test) = write_toy_csvs(dir.path());
        let mut rejects = 0usize;
        let seeds = 40u64;
        for seed in 0..seeds {
            let mut args = toy_args(train.clone(), test.clone());
            args.b = 1;
            args.seed = seed;
            let report = cmd_test(&args).unwrap();
            rejects += report.runs[0].reject as usize;
        }
        // 99.9% binomial bound at alpha = 0.05: more than 8/40 would be wild
        assert!(rejects <= 8, "{rejects}/{seeds} rejections under H0");
    }

    #[test]
    fn simulate_rejects_unknown_model() {
        let args = SimulateArgs {
            model: "e".into(),
            hypothesis: "null".into(),
            n2: vec![60],
            m: vec![2],
            estimator: vec!["ll".into()],
            weights: vec!["estimated".into()],
            reps: 2,
            alpha: 0.05,
            p: 5,
            s: None,
            l1_lambda: vec![],
            hidden: vec![10],
            seed: 0,
            threads: None,
            out: None,
            format: OutputFormat::Csv,
            full: false,
        };
        let err = run_cmd_simulate(&args).unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("a, b, c, d"));
    }
}
