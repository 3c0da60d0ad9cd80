//! `maxway`: conditional randomization tests on CSV data, simulation plans and
//! plot-ready curves.
//!
//! Exit codes: 0 success, 2 invalid input, 3 engine failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use maxway_core::conditioners::{GLearner, VarianceSource, XFamily};
use maxway_core::data::Table;
use maxway_core::engines::{run_engine, ArtifactCache, CrtResult, EngineInputs, EngineKind, EnginePipeline, Overrides};
use maxway_core::harness::{curve_csv, run_plan, summary_table, Curve, ExperimentPlan, ExperimentReport};
use maxway_core::statistics::StatSpec;
use maxway_core::{MaxwayError, RngHandle};

#[derive(Parser, Debug)]
#[command(name = "maxway", version, about = "Conditional randomization tests with Maxway adjustment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test x ⫫ y | Z on CSV data.
    Test(TestArgs),
    /// Run a simulation plan (JSON) and write the report.
    Simulate(SimulateArgs),
    /// Turn a simulation report into curve data.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StatArg {
    D0,
    #[value(name = "dI")]
    DI,
    Rf,
    Inner,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VarianceArg {
    LabeledTest,
    Unlabeled,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LearnerArg {
    Lasso,
    Forest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CurveArg {
    #[value(name = "type1-vs-N")]
    Type1VsN,
    #[value(name = "power-vs-gamma")]
    PowerVsGamma,
}

#[derive(clap::Args, Debug)]
struct TestArgs {
    /// Labeled rows: columns `y`, `x` and covariates.
    labeled: PathBuf,
    /// Unlabeled rows: `x` and covariates.
    unlabeled: Option<PathBuf>,
    /// Labeled holdout rows for learning `g` out of sample.
    #[arg(long, conflicts_with = "in_sample")]
    holdout: Option<PathBuf>,
    /// Learn `g` on the test rows themselves.
    #[arg(long)]
    in_sample: bool,
    /// Unlabeled rows with a surrogate column `s`.
    #[arg(long)]
    surrogate: Option<PathBuf>,
    /// Comma-separated engines, reported in this order.
    #[arg(long, default_value = "maxway_in")]
    engine: String,
    #[arg(long, value_enum, default_value = "d0")]
    stat: StatArg,
    #[arg(long = "M", default_value_t = 1000)]
    m: usize,
    /// Top covariates kept in `g`; default ⌈2 ln p⌉.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum, default_value = "labeled-test")]
    variance_source: VarianceArg,
    #[arg(long, value_enum, default_value = "lasso")]
    g_learner: LearnerArg,
    /// Fit the exposure model with forests instead of (logistic) lasso.
    #[arg(long)]
    x_forest: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(clap::Args, Debug)]
struct SimulateArgs {
    plan: PathBuf,
    /// Output prefix; writes `<prefix>.json` and `<prefix>.csv`.
    #[arg(long, default_value = "report")]
    out: PathBuf,
    /// Overrides the plan's parallelism.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(clap::Args, Debug)]
struct ReportArgs {
    report: PathBuf,
    #[arg(long, value_enum)]
    curve: CurveArg,
    /// Report at γ = 0 used to recalibrate power.
    #[arg(long)]
    null: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<MaxwayError> for Failure {
    fn from(e: MaxwayError) -> Self {
        Failure { code: if e.is_validation() { 2 } else { 3 }, message: e.to_string() }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn read_table(path: &Path, what: &str) -> Result<Table, Failure> {
    Table::from_path(path).map_err(|e| invalid(format!("{what} ({}): {e}", path.display())))
}

fn in_file<T>(path: &Path, what: &str, r: maxway_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| invalid(format!("{what} ({}): {e}", path.display())))
}

fn write_out(path: Option<&Path>, content: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, content).map_err(|e| invalid(format!("cannot write {}: {e}", p.display()))),
        None => Ok(()),
    }
}

fn with_jobs<T>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure>
where
    T: Send,
{
    match jobs {
        Some(0) => Err(invalid("--jobs must be at least 1")),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(j).build().map_err(|e| invalid(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

fn results_csv(results: &[CrtResult], alpha: f64) -> String {
    let mut out = String::from("engine,p_value,numerator,denominator,m,observed_stat,reject,flags\n");
    for r in results {
        let flags: Vec<String> = r.flags.iter().map(|f| f.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},\"{}\"\n",
            r.engine,
            r.p_value,
            r.p_exact.numerator,
            r.p_exact.denominator,
            r.m,
            r.observed_stat,
            r.p_value <= alpha,
            flags.join(";")
        ));
    }
    out
}

fn cmd_test(a: TestArgs) -> Result<(), Failure> {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(invalid(format!("--alpha {} must lie in (0, 1)", a.alpha)));
    }
    if a.m == 0 {
        return Err(invalid("--M must be at least 1"));
    }
    let kinds: Vec<EngineKind> = a
        .engine
        .split(',')
        .map(|s| s.trim().parse::<EngineKind>())
        .collect::<maxway_core::Result<_>>()?;

    let labeled = in_file(&a.labeled, "labeled", read_table(&a.labeled, "labeled")?.to_labeled(None))?;
    let unlabeled = match &a.unlabeled {
        Some(p) => Some(in_file(p, "unlabeled", read_table(p, "unlabeled")?.to_unlabeled(Some(labeled.x_binary)))?),
        None => None,
    };
    let holdout = match &a.holdout {
        Some(p) => Some(in_file(p, "holdout", read_table(p, "holdout")?.to_labeled(Some(labeled.x_binary)))?),
        None if a.in_sample => Some(labeled.clone()),
        None => None,
    };
    let surrogate = match &a.surrogate {
        Some(p) => Some(in_file(p, "surrogate", read_table(p, "surrogate")?.to_surrogate(Some(labeled.x_binary)))?),
        None => None,
    };
    if let Some(k) = a.k {
        if k == 0 || k > labeled.p() {
            return Err(invalid(format!("--k {k} must lie in 1..={}", labeled.p())));
        }
    }

    let stat = match a.stat {
        StatArg::D0 => StatSpec::D0,
        StatArg::DI => StatSpec::di(),
        StatArg::Rf => StatSpec::rf(),
        StatArg::Inner => StatSpec::InnerProduct,
    };
    let x_family = match (a.x_forest, labeled.x_binary) {
        (false, false) => XFamily::GaussianLinear,
        (false, true) => XFamily::Logistic,
        (true, false) => XFamily::ForestGaussian,
        (true, true) => XFamily::ForestBinary,
    };
    let mut base = EnginePipeline {
        g_learner: match a.g_learner {
            LearnerArg::Lasso => GLearner::Lasso,
            LearnerArg::Forest => GLearner::Forest,
        },
        x_family,
        stat,
        k: a.k,
        m: a.m,
        ..Default::default()
    };
    base.maxway.variance_source = match a.variance_source {
        VarianceArg::LabeledTest => VarianceSource::LabeledTest,
        VarianceArg::Unlabeled => VarianceSource::Unlabeled,
    };

    let inputs = EngineInputs {
        test: &labeled,
        unlabeled: unlabeled.as_ref(),
        holdout: holdout.as_ref(),
        surrogate: surrogate.as_ref(),
    };
    let rng = RngHandle::new(a.seed);
    let cache = ArtifactCache::default();
    let results: Vec<CrtResult> = with_jobs(a.jobs, || {
        kinds
            .iter()
            .map(|&kind| run_engine(&EnginePipeline { kind, ..base.clone() }, &inputs, &Overrides::default(), Some(&cache), &rng))
            .collect::<maxway_core::Result<Vec<_>>>()
    })??;

    for r in &results {
        println!("{}\t{}", r.engine, r.p_value);
    }
    let body = match a.format {
        Format::Json => serde_json::to_string_pretty(&results).map_err(|e| invalid(e.to_string()))?,
        Format::Csv => results_csv(&results, a.alpha),
    };
    write_out(a.out.as_deref(), &body)
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&a.plan).map_err(|e| invalid(format!("{}: {e}", a.plan.display())))?;
    let mut plan: ExperimentPlan = serde_json::from_str(&text).map_err(|e| invalid(format!("plan {}: {e}", a.plan.display())))?;
    if let Some(j) = a.jobs {
        plan.parallelism = j;
    }
    plan.validate()?;
    let report = run_plan(&plan)?;
    let json = report.to_json()?;
    let prefix = a.out.to_string_lossy().to_string();
    write_out(Some(Path::new(&format!("{prefix}.json"))), &json)?;
    write_out(Some(Path::new(&format!("{prefix}.csv"))), &report.to_csv())?;
    print!("{}", summary_table(&report));
    if report.failure_count() > 0 {
        eprintln!("{} replications failed", report.failure_count());
    }
    Ok(())
}

fn load_report(path: &Path) -> Result<ExperimentReport, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    Ok(ExperimentReport::from_json(&text)?)
}

fn cmd_report(a: ReportArgs) -> Result<(), Failure> {
    let report = load_report(&a.report)?;
    let null = match &a.null {
        Some(p) => Some(load_report(p)?),
        None => None,
    };
    let curve = match a.curve {
        CurveArg::Type1VsN => Curve::Type1VsN,
        CurveArg::PowerVsGamma => Curve::PowerVsGamma,
    };
    let csv = curve_csv(&report, curve, null.as_ref())?;
    match &a.out {
        Some(p) => write_out(Some(p), &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Report(a) => cmd_report(a),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
