use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use cwotce_core::analysis::{run_method, Method, MethodReport, RunSettings};
use cwotce_core::capacity::{build_measure, validate_spec, MeasureSpec};
use cwotce_core::encoding::{read_patients_csv, write_patients_csv, TimeUnit};
use cwotce_core::harness::{self, SweepConfig};
use cwotce_core::simulator::{scenario, scenario_registry, simulate_trial, SimConfig};
use cwotce_core::EncodingMode;

#[derive(Parser)]
#[command(name = "cwotce", version, about = "Choquet composite endpoint analysis and trial simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trial replication to a patient CSV.
    Simulate(SimulateArgs),
    /// Analyze a patient CSV with one method and print JSON.
    Analyze(AnalyzeArgs),
    /// Run the scenario sweep and write raw, summary and plot CSVs.
    Sweep(SweepArgs),
    /// Rebuild summary tables and plot data from a raw results CSV.
    Report(ReportArgs),
    /// Check a fuzzy measure specification.
    ValidateMeasure {
        /// JSON file with `k`, `weights` and `interactions`.
        file: PathBuf,
    },
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long, required_unless_present = "list_scenarios")]
    scenario: Option<String>,
    #[arg(long, default_value_t = 0)]
    rep: u64,
    #[arg(long, default_value_t = SimConfig::default().base_seed)]
    seed: u64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n_per_arm: Option<usize>,
    /// Print the scenario registry as JSON and exit.
    #[arg(long)]
    list_scenarios: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Cwot,
    Cox,
    Wr,
    Wlw,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    Block6,
    Count5,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitArg {
    Years,
    Months,
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    csv: PathBuf,
    #[arg(long, value_enum, default_value = "cwot")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "block6")]
    encoding: EncodingArg,
    #[arg(long = "B", default_value_t = 999)]
    b: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    seed: u64,
    /// Follow-up horizon in years.
    #[arg(long, default_value_t = 3.0)]
    tau: f64,
    #[arg(long, value_enum, default_value = "years")]
    time_unit: UnitArg,
    /// Measure specification JSON; defaults to the built-in measure.
    #[arg(long)]
    measure: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SweepArgs {
    /// `all` or a comma-separated list of scenario ids.
    #[arg(long, default_value = "all")]
    scenarios: String,
    /// `all` or a comma-separated list of cwot_block6, cwot_count5, cox, wr, wlw.
    #[arg(long, default_value = "all")]
    methods: String,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long = "B", default_value_t = 199)]
    b: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = SimConfig::default().base_seed)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out: PathBuf,
    /// Override every scenario's per-arm sample size.
    #[arg(long)]
    n_per_arm: Option<usize>,
    /// Override every scenario's frailty variance.
    #[arg(long)]
    theta: Option<f64>,
    /// Write runtime_ms as 0 so raw output is byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

#[derive(clap::Args)]
struct ReportArgs {
    #[arg(long)]
    raw: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate(args) => simulate(args)?,
        Command::Analyze(args) => analyze(args)?,
        Command::Sweep(args) => sweep(args)?,
        Command::Report(args) => report(args)?,
        Command::ValidateMeasure { file } => return validate_measure(&file),
    }
    Ok(ExitCode::SUCCESS)
}

fn print_json(value: &Value) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    if args.list_scenarios {
        return print_json(&serde_json::to_value(scenario_registry())?);
    }
    let id = args.scenario.expect("required by clap");
    let mut spec = scenario(&id).with_context(|| format!("unknown scenario {id:?}"))?;
    if let Some(n) = args.n_per_arm {
        spec = spec.with_n(n);
    }
    spec.validate().map_err(anyhow::Error::msg)?;
    let cfg = SimConfig {
        base_seed: args.seed,
        ..SimConfig::default()
    };
    let records = simulate_trial(&spec, &cfg, args.rep);
    match args.out {
        Some(path) => {
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            write_patients_csv(BufWriter::new(file), &records)?;
        }
        None => write_patients_csv(io::stdout().lock(), &records)?,
    }
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let unit = match args.time_unit {
        UnitArg::Years => TimeUnit::Years,
        UnitArg::Months => TimeUnit::Months,
    };
    let file = File::open(&args.csv).with_context(|| format!("opening {}", args.csv.display()))?;
    let records = read_patients_csv(BufReader::new(file), unit)?;
    let method = match (args.method, args.encoding) {
        (MethodArg::Cwot, EncodingArg::Block6) => Method::CwotBlock6,
        (MethodArg::Cwot, EncodingArg::Count5) => Method::CwotCount5,
        (MethodArg::Cox, _) => Method::Cox,
        (MethodArg::Wr, _) => Method::Wr,
        (MethodArg::Wlw, _) => Method::Wlw,
    };
    let measure = match &args.measure {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let spec = MeasureSpec::from_json(&text).context("parsing measure specification")?;
            let k = method.encoding().map(EncodingMode::k).unwrap_or(spec.k);
            if spec.k != k {
                bail!("measure has k = {}, encoding needs {k}", spec.k);
            }
            Some(build_measure(&spec)?)
        }
        None => None,
    };
    let settings = RunSettings {
        tau: args.tau,
        b: args.b,
        alpha: args.alpha,
        seed: args.seed,
    };
    let report = run_method(method, &records, &settings, measure.as_ref())?;
    print_json(&analysis_json(&report)?)
}

/// Method-tagged report with common `estimate` and `p_value` fields.
fn analysis_json(report: &MethodReport) -> Result<Value> {
    let outcome = report.outcome();
    let mut value = serde_json::to_value(report)?;
    let obj = value.as_object_mut().expect("reports serialize to objects");
    obj.insert("estimate".into(), json!(outcome.estimate));
    obj.insert("p_value".into(), json!(outcome.p_value));
    obj.insert("converged".into(), json!(outcome.converged));
    if let MethodReport::Cwot(r) = report {
        obj.insert("ci".into(), json!([r.cbi.ci_lo, r.cbi.ci_hi]));
        obj.insert("cor_ci".into(), json!([r.cbi.cor_ci_lo, r.cbi.cor_ci_hi]));
    }
    Ok(value)
}

fn parse_list(text: &str, all: Vec<String>) -> Vec<String> {
    if text.trim() == "all" {
        all
    } else {
        text.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
    }
}

fn sweep(args: SweepArgs) -> Result<()> {
    let scenarios = parse_list(&args.scenarios, scenario_registry().into_iter().map(|s| s.id).collect());
    let methods = parse_list(&args.methods, Method::ALL.iter().map(|m| m.name().to_string()).collect())
        .iter()
        .map(|m| m.parse::<Method>().map_err(anyhow::Error::msg))
        .collect::<Result<Vec<_>>>()?;
    let config = SweepConfig {
        scenarios,
        methods,
        reps: args.reps,
        b: args.b,
        alpha: args.alpha,
        workers: args.workers,
        n_per_arm: args.n_per_arm,
        theta: args.theta,
        record_timing: !args.no_timing,
        sim: SimConfig {
            base_seed: args.seed,
            ..SimConfig::default()
        },
    };
    let output = harness::run_sweep(&config)?;
    let report = harness::write_outputs(&output, &config, &args.out)?;
    print_scorecard(&report);
    Ok(())
}

fn print_scorecard(report: &harness::Report) {
    for row in &report.scorecard {
        eprintln!(
            "cwot_block6 vs {:<4} wins {:>2}  ties {:>2}  losses {:>2}  mean {:+.1} pp",
            row.comparator.name(),
            row.wins,
            row.ties,
            row.losses,
            row.mean_diff_pp
        );
    }
}

fn report(args: ReportArgs) -> Result<()> {
    let file = File::open(&args.raw).with_context(|| format!("opening {}", args.raw.display()))?;
    let raw = harness::read_raw_csv(BufReader::new(file))?;
    let report = harness::summarize(&raw, args.alpha);
    harness::write_report(&report, &args.out, None)?;
    print_scorecard(&report);
    Ok(())
}

fn validate_measure(path: &Path) -> Result<ExitCode> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec = MeasureSpec::from_json(&text).context("parsing measure specification")?;
    let report = validate_spec(&spec);
    let mut out = io::stdout().lock();
    writeln!(out, "k = {}  ({})", report.k, report.convention)?;
    if !report.moebius_singletons.is_empty() {
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" ");
        writeln!(out, "moebius singletons: {}", fmt(&report.moebius_singletons))?;
        for p in &report.moebius_pairs {
            writeln!(out, "moebius pair ({},{}): {:.6}", p.i, p.j, p.value)?;
        }
        writeln!(out, "shapley values: {}", fmt(&report.shapley_values))?;
    }
    for check in &report.checks {
        let mark = if check.pass { "PASS" } else { "FAIL" };
        writeln!(out, "{mark} {}: {}", check.name, check.detail)?;
    }
    Ok(if report.all_pass() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
