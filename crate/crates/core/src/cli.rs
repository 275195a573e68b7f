//! Command-line front end. [`run`] returns the process exit code:
//! 0 on success, 2 on usage or parameter errors, 3 when the engine reports
//! failure, 1 on any other error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::engine::{run_engine, EngineKind, EngineParams, Release};
use crate::error::{invalid, Error, Result};
use crate::evaluation::{audit_estimates, report_to_csv, scaling_sweep, SweepConfig};
use crate::histogram::Histogram;
use crate::io::{ingest_csv, read_histogram, read_json, read_schema, read_workload, records_to_csv, to_json_string, write_workload};
use crate::workload::WorkloadSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ENGINE_FAILURE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "prem", version, about = "Differentially private synthetic histograms with relative-error guarantees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an engine on a private histogram and write its release.
    Generate(GenerateArgs),
    /// Audit a release against the private histogram.
    Evaluate(EvaluateArgs),
    /// Measure error against dataset size on synthetic data.
    Bench(BenchArgs),
    /// Write a query family file.
    Workload(WorkloadArgs),
    /// Draw records from a synthetic histogram.
    Sample(SampleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WorkloadKindArg {
    RandomBinary,
    Marginal,
    ThresholdReal,
}

/// Privacy and accuracy parameters. Flags override values from `--config`.
#[derive(Debug, Args)]
struct ParamArgs {
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long = "c-tct")]
    c_tct: Option<f64>,
    #[arg(long = "c-pure")]
    c_pure: Option<f64>,
    #[arg(long = "bisection-tol")]
    bisection_tol: Option<f64>,
    /// Exponential-mechanism support size.
    #[arg(long = "support-size")]
    support_size: Option<usize>,
    /// TOML file with any of the parameters above.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    epsilon: Option<f64>,
    delta: Option<f64>,
    beta: Option<f64>,
    zeta: Option<f64>,
    c_tct: Option<f64>,
    c_pure: Option<f64>,
    bisection_tol: Option<f64>,
    support_size: Option<usize>,
}

impl ParamArgs {
    fn resolve(&self) -> Result<EngineParams> {
        let file: ConfigFile = match &self.config {
            Some(p) => toml::from_str(&fs::read_to_string(p)?)?,
            None => ConfigFile::default(),
        };
        let mut p = EngineParams {
            epsilon: self
                .epsilon
                .or(file.epsilon)
                .ok_or_else(|| invalid("epsilon", "is required (flag --epsilon or config file)"))?,
            ..EngineParams::default()
        };
        if let Some(v) = self.delta.or(file.delta) {
            p.delta = v;
        }
        if let Some(v) = self.beta.or(file.beta) {
            p.beta = v;
        }
        if let Some(v) = self.zeta.or(file.zeta) {
            p.zeta = v;
        }
        if let Some(v) = self.c_tct.or(file.c_tct) {
            p.accounting.c_tct = v;
        }
        if let Some(v) = self.c_pure.or(file.c_pure) {
            p.c_pure = v;
        }
        if let Some(v) = self.bisection_tol.or(file.bisection_tol) {
            p.accounting.bisection_tol = v;
        }
        p.support_size = self.support_size.or(file.support_size);
        Ok(p)
    }
}

fn validate_params(kind: EngineKind, p: &EngineParams, real_queries: bool) -> Result<()> {
    if !(p.epsilon > 0.0 && p.epsilon.is_finite()) {
        return Err(invalid("epsilon", format!("must be a positive finite real, got {}", p.epsilon)));
    }
    if kind == EngineKind::Prem && !(p.delta > 0.0 && p.delta < 1.0) {
        return Err(invalid("delta", format!("must lie in (0, 1) for engine prem, got {}", p.delta)));
    }
    if !(p.beta > 0.0 && p.beta < 1.0) {
        return Err(invalid("beta", format!("must lie in (0, 1), got {}", p.beta)));
    }
    let zeta_ok = if real_queries { p.zeta > 0.0 && p.zeta <= 0.5 } else { p.zeta > 0.0 && p.zeta < 0.5 };
    if !zeta_ok {
        let range = if real_queries { "(0, 1/2]" } else { "(0, 1/2)" };
        return Err(invalid("zeta", format!("must lie in {range}, got {}", p.zeta)));
    }
    p.accounting.validate()
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Private histogram (JSON) or records (CSV, needs --schema).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Query family file.
    #[arg(long)]
    workload: PathBuf,
    #[arg(long, default_value = "prem")]
    engine: String,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    params: ParamArgs,
    /// Where to write the release; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Where to write the full run record including the privacy ledger.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Release written by `generate`.
    #[arg(long)]
    synthetic: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    workload: PathBuf,
    #[arg(long)]
    zeta: f64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    engine: String,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long = "domain-size")]
    domain_size: usize,
    /// Comma-separated dataset sizes.
    #[arg(long = "n-grid", value_delimiter = ',', required = true)]
    n_grid: Vec<u64>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long = "workload-kind", value_enum, default_value = "random-binary")]
    workload_kind: WorkloadKindArg,
    #[arg(long, default_value_t = 32)]
    count: usize,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long = "zipf-exponent", default_value_t = 1.1)]
    zipf_exponent: f64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct WorkloadArgs {
    #[arg(long, value_enum)]
    kind: WorkloadKindArg,
    #[arg(long)]
    seed: u64,
    /// Number of queries; for marginals, keeps a random subset.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long)]
    arity: Option<usize>,
    #[arg(long = "domain-size")]
    domain_size: Option<usize>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    synthetic: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    seed: u64,
    /// Emit attribute labels instead of domain indices.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Release file for engines that answer queries directly.
#[derive(Debug, Serialize, Deserialize)]
struct EstimatesFile {
    estimates: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct GenerateSummary<'a> {
    engine: EngineKind,
    failed: bool,
    certified_alpha: Option<f64>,
    epsilon_spent: f64,
    delta_spent: f64,
    within_budget: bool,
    output: Option<&'a Path>,
}

#[derive(Debug, Serialize)]
struct AuditSummary {
    zeta: f64,
    measured_alpha: f64,
    worst_query_id: Option<usize>,
    queries: usize,
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_private(input: &Path, schema: Option<&Path>) -> Result<Histogram> {
    let is_csv = input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let schema = schema.ok_or_else(|| invalid("schema", "CSV input needs --schema"))?;
        Ok(ingest_csv(input, &read_schema(schema)?)?.1)
    } else {
        read_histogram(input)
    }
}

fn generate(a: &GenerateArgs) -> Result<i32> {
    let kind: EngineKind = a.engine.parse()?;
    let params = a.params.resolve()?;
    let h_star = load_private(&a.input, a.schema.as_deref())?;
    let workload = read_workload(&a.workload)?;
    validate_params(kind, &params, matches!(workload, crate::workload::Workload::Real(_)))?;
    let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
    let run = run_engine(kind, &h_star, &workload, &params, &mut rng)?;
    let text = match &run.release {
        Release::Histogram(h) => to_json_string(h)?,
        Release::Estimates(v) => to_json_string(&EstimatesFile { estimates: v.clone() })?,
    };
    if let Some(path) = &a.output {
        fs::write(path, &text)?;
    }
    if let Some(path) = &a.trace {
        fs::write(path, to_json_string(&run)?)?;
    }
    let total = run.ledger.total()?;
    let summary = GenerateSummary {
        engine: kind,
        failed: run.failed,
        certified_alpha: run.certified_alpha,
        epsilon_spent: total.epsilon,
        delta_spent: total.delta,
        within_budget: run.ledger.fits_within(&params.budget(kind))?,
        output: a.output.as_deref(),
    };
    if a.output.is_none() {
        emit(None, &text)?;
    } else {
        emit(None, &to_json_string(&summary)?)?;
    }
    if run.failed {
        eprintln!("engine {kind} reported failure");
        return Ok(EXIT_ENGINE_FAILURE);
    }
    Ok(EXIT_OK)
}

fn read_release(path: &Path) -> Result<Release> {
    let value: serde_json::Value = read_json(path)?;
    if value.get("estimates").is_some() {
        let e: EstimatesFile = serde_json::from_value(value)?;
        Ok(Release::Estimates(e.estimates))
    } else {
        Ok(Release::Histogram(serde_json::from_value(value)?))
    }
}

fn evaluate(a: &EvaluateArgs) -> Result<i32> {
    let h_star = load_private(&a.input, a.schema.as_deref())?;
    let workload = read_workload(&a.workload)?;
    let truth = workload.evaluate_all(&h_star)?;
    let answers = match read_release(&a.synthetic)? {
        Release::Histogram(h) => workload.evaluate_all(&h)?,
        Release::Estimates(v) => v,
    };
    let audit = audit_estimates(&answers, &truth, a.zeta)?;
    let text = match a.format {
        Format::Json => to_json_string(&AuditSummary {
            zeta: audit.zeta,
            measured_alpha: audit.measured_alpha,
            worst_query_id: audit.worst_query_id,
            queries: truth.len(),
        })?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["query_id", "truth", "estimate", "upper_slack", "lower_slack"])?;
            for i in 0..truth.len() {
                w.write_record([
                    i.to_string(),
                    truth[i].to_string(),
                    answers[i].to_string(),
                    audit.upper_slacks[i].to_string(),
                    audit.lower_slacks[i].to_string(),
                ])?;
            }
            String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("utf-8")
        }
    };
    emit(a.output.as_deref(), &text)?;
    Ok(EXIT_OK)
}

fn workload_spec(kind: WorkloadKindArg, count: Option<usize>, p: f64, arity: Option<usize>) -> Result<WorkloadSpec> {
    Ok(match kind {
        WorkloadKindArg::RandomBinary => WorkloadSpec::RandomBinary {
            count: count.ok_or_else(|| invalid("count", "is required for random-binary workloads"))?,
            p,
        },
        WorkloadKindArg::Marginal => WorkloadSpec::Marginal {
            arity: arity.ok_or_else(|| invalid("arity", "is required for marginal workloads"))?,
            count,
        },
        WorkloadKindArg::ThresholdReal => WorkloadSpec::ThresholdReal {
            count: count.ok_or_else(|| invalid("count", "is required for threshold-real workloads"))?,
        },
    })
}

fn bench(a: &BenchArgs) -> Result<i32> {
    let engine: EngineKind = a.engine.parse()?;
    let params = a.params.resolve()?;
    let spec = workload_spec(a.workload_kind, Some(a.count), a.p, None)?;
    if matches!(spec, WorkloadSpec::Marginal { .. }) {
        return Err(invalid("workload-kind", "bench generates schema-free data; use random-binary or threshold-real"));
    }
    validate_params(engine, &params, matches!(spec, WorkloadSpec::ThresholdReal { .. }))?;
    let config = SweepConfig {
        engine,
        params,
        workload: spec,
        domain_size: a.domain_size,
        n_grid: a.n_grid.clone(),
        trials: a.trials,
        seed: a.seed,
        zipf_exponent: a.zipf_exponent,
    };
    let report = scaling_sweep(&config)?;
    let text = match a.format {
        Format::Json => to_json_string(&report)?,
        Format::Csv => report_to_csv(&report)?,
    };
    emit(a.output.as_deref(), &text)?;
    Ok(EXIT_OK)
}

fn workload(a: &WorkloadArgs) -> Result<i32> {
    let domain = match (&a.schema, a.domain_size) {
        (Some(s), _) => Domain::with_schema(read_schema(s)?)?,
        (None, Some(d)) => Domain::new(d)?,
        (None, None) => return Err(invalid("domain", "give --schema or --domain-size")),
    };
    let w = workload_spec(a.kind, a.count, a.p, a.arity)?.generate(&domain, a.seed)?;
    match &a.output {
        Some(p) => write_workload(p, &w)?,
        None => emit(None, &to_json_string(&crate::io::FamilyFile::from_workload(&w))?)?,
    }
    Ok(EXIT_OK)
}

fn sample(a: &SampleArgs) -> Result<i32> {
    let h = read_histogram(&a.synthetic)?;
    let domain = match &a.schema {
        Some(s) => Domain::with_schema(read_schema(s)?)?,
        None => Domain::new(h.domain_size())?,
    };
    if domain.size() != h.domain_size() {
        return Err(Error::DimensionMismatch { expected: domain.size(), found: h.domain_size() });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
    let records = h.sample_records(a.count, &mut rng)?;
    let mut buf = Vec::new();
    records_to_csv(&mut buf, &domain, &records)?;
    emit(a.output.as_deref(), std::str::from_utf8(&buf).expect("csv output is utf-8"))?;
    Ok(EXIT_OK)
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter { .. } | Error::Toml(_) | Error::EnumerationCap { .. } => EXIT_USAGE,
        _ => EXIT_ERROR,
    }
}

/// Parses `argv` (program name first) and runs the chosen subcommand.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Bench(a) => bench(a),
        Command::Workload(a) => workload(a),
        Command::Sample(a) => sample(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
