//! Scenario sweeps: simulate, analyze every method on the same dataset,
//! aggregate rejection rates, and write flat CSV outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{run_method_outcome, MeasureSet, Method, RunSettings};
use crate::capacity::{MeasureSpec, WEIGHT_CONVENTION};
use crate::encoding::{write_patients_csv, PatientRecord};
use crate::rng;
use crate::simulator::{scenario, scenario_registry, simulate_trial, ScenarioSpec, SimConfig};

pub const BRADLEY_LOW: f64 = 0.025;
pub const BRADLEY_HIGH: f64 = 0.075;
/// Percentage-point margin for a scorecard win or loss.
pub const SCORECARD_MARGIN_PP: f64 = 2.0;

pub const RAW_HEADER: &str =
    "scenario,rep,method,estimate,p_value,rejected,converged,tie_rate,runtime_ms,dataset_hash";
pub const SUMMARY_HEADER: &str =
    "scenario,method,reps,rejection_rate,mcse,mean_estimate,convergence_rate,median_runtime_ms";

const PERMUTATION_STREAM: u64 = 0x7065_726d;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("invalid sweep configuration: {0}")]
    InvalidConfig(String),
    #[error("raw results line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepConfig {
    pub scenarios: Vec<String>,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub b: usize,
    pub alpha: f64,
    pub workers: usize,
    /// Replaces every scenario's per-arm sample size when set.
    pub n_per_arm: Option<usize>,
    /// Replaces every scenario's frailty variance when set.
    pub theta: Option<f64>,
    /// When false, `runtime_ms` is written as 0 so raw output is byte-stable.
    pub record_timing: bool,
    pub sim: SimConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            scenarios: scenario_registry().into_iter().map(|s| s.id).collect(),
            methods: Method::ALL.to_vec(),
            reps: 500,
            b: 199,
            alpha: 0.05,
            workers: 1,
            n_per_arm: None,
            theta: None,
            record_timing: true,
            sim: SimConfig::default(),
        }
    }
}

impl SweepConfig {
    fn validate(&self) -> Result<Vec<ScenarioSpec>, HarnessError> {
        if self.reps < 1 {
            return Err(HarnessError::InvalidConfig("reps must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(HarnessError::InvalidConfig(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.workers < 1 {
            return Err(HarnessError::InvalidConfig("workers must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(HarnessError::InvalidConfig("no methods selected".into()));
        }
        self.scenarios
            .iter()
            .map(|id| {
                let mut s = scenario(id).ok_or_else(|| HarnessError::UnknownScenario(id.clone()))?;
                if let Some(n) = self.n_per_arm {
                    s = s.with_n(n);
                }
                if let Some(theta) = self.theta {
                    s = s.with_theta(theta);
                }
                s.validate().map_err(HarnessError::InvalidConfig)?;
                Ok(s)
            })
            .collect()
    }
}

/// One `(scenario, rep, method)` result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawRow {
    pub scenario: String,
    pub rep: u64,
    pub method: Method,
    pub estimate: Option<f64>,
    pub p_value: Option<f64>,
    pub rejected: bool,
    pub converged: bool,
    pub tie_rate: Option<f64>,
    pub runtime_ms: f64,
    pub dataset_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: Method,
    pub reps: usize,
    pub rejection_rate: f64,
    pub mcse: f64,
    pub mean_estimate: f64,
    pub convergence_rate: f64,
    pub median_runtime_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub raw: Vec<RawRow>,
    pub summary: Vec<SummaryRow>,
}

/// SHA-256 prefix of the dataset in patient CSV form.
pub fn dataset_hash(records: &[PatientRecord]) -> String {
    let mut buf = Vec::new();
    write_patients_csv(&mut buf, records).expect("writing to memory");
    hex::encode(&Sha256::digest(&buf)[..8])
}

/// Seed of the permutation streams for one replication, shared by every
/// permutation-based method so paired comparisons use the same shuffles.
pub fn permutation_seed(base_seed: u64, scenario_id: &str, rep: u64) -> u64 {
    rng::derive_seed(base_seed, &[rng::label_hash(scenario_id), rep, PERMUTATION_STREAM])
}

fn run_replication(
    spec: &ScenarioSpec,
    rep: u64,
    config: &SweepConfig,
    measures: &MeasureSet,
) -> Vec<RawRow> {
    let records = simulate_trial(spec, &config.sim, rep);
    let hash = dataset_hash(&records);
    let settings = RunSettings {
        tau: spec.tau,
        b: config.b,
        alpha: config.alpha,
        seed: permutation_seed(config.sim.base_seed, &spec.id, rep),
    };
    config
        .methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let outcome = run_method_outcome(method, &records, &settings, measures);
            let runtime_ms = if config.record_timing {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            };
            match outcome {
                Ok(o) => RawRow {
                    scenario: spec.id.clone(),
                    rep,
                    method,
                    estimate: Some(o.estimate),
                    p_value: Some(o.p_value),
                    rejected: o.converged && o.p_value < config.alpha,
                    converged: o.converged,
                    tie_rate: o.tie_rate,
                    runtime_ms,
                    dataset_hash: hash.clone(),
                },
                Err(e) => {
                    log::warn!("{} rep {rep} {method}: {e}", spec.id);
                    RawRow {
                        scenario: spec.id.clone(),
                        rep,
                        method,
                        estimate: None,
                        p_value: None,
                        rejected: false,
                        converged: false,
                        tie_rate: None,
                        runtime_ms,
                        dataset_hash: hash.clone(),
                    }
                }
            }
        })
        .collect()
}

/// Run every `(scenario, replication)` on a pool of `workers` threads.
/// Output order is `(scenario, rep, method)` regardless of scheduling.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepOutput, HarnessError> {
    let specs = config.validate()?;
    let measures = MeasureSet::default();
    let jobs: Vec<(&ScenarioSpec, u64)> = specs
        .iter()
        .flat_map(|s| (0..config.reps as u64).map(move |r| (s, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    let raw: Vec<RawRow> = pool.install(|| {
        jobs.par_iter()
            .map(|&(spec, rep)| run_replication(spec, rep, config, &measures))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });
    let summary = summarize_rows(&raw, config.alpha);
    Ok(SweepOutput { raw, summary })
}

/// `sqrt(p (1 - p) / R)`.
pub fn mcse(rate: f64, reps: usize) -> f64 {
    (rate * (1.0 - rate) / reps as f64).sqrt()
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn rejects(row: &RawRow, alpha: f64) -> bool {
    row.converged && row.p_value.is_some_and(|p| p < alpha)
}

/// Per `(scenario, method)` aggregates, in first-appearance order.
pub fn summarize_rows(raw: &[RawRow], alpha: f64) -> Vec<SummaryRow> {
    let mut order: Vec<(String, Method)> = Vec::new();
    let mut groups: BTreeMap<(String, Method), Vec<&RawRow>> = BTreeMap::new();
    for row in raw {
        let key = (row.scenario.clone(), row.method);
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(row);
    }
    order
        .into_iter()
        .map(|key| {
            let rows = &groups[&key];
            let reps = rows.len();
            let rejected = rows.iter().filter(|r| rejects(r, alpha)).count();
            let rate = rejected as f64 / reps as f64;
            let finite: Vec<f64> = rows
                .iter()
                .filter_map(|r| r.estimate)
                .filter(|e| e.is_finite())
                .collect();
            let mean_estimate = if finite.is_empty() {
                f64::NAN
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            };
            let converged = rows.iter().filter(|r| r.converged).count();
            let mut times: Vec<f64> = rows.iter().map(|r| r.runtime_ms).collect();
            SummaryRow {
                scenario: key.0,
                method: key.1,
                reps,
                rejection_rate: rate,
                mcse: mcse(rate, reps),
                mean_estimate,
                convergence_rate: converged as f64 / reps as f64,
                median_runtime_ms: median(&mut times),
            }
        })
        .collect()
}

/// Mean WR tie rate per scenario.
pub fn mean_tie_rates(raw: &[RawRow]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for row in raw.iter().filter(|r| r.method == Method::Wr) {
        if let Some(t) = row.tie_rate {
            let e = acc.entry(row.scenario.clone()).or_default();
            e.0 += t;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScorecardRow {
    pub comparator: Method,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    pub mean_diff_pp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EncodingRow {
    pub scenario: String,
    pub count5: f64,
    pub block6: f64,
    pub wr: Option<f64>,
    pub block_minus_wr_pp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub summary: Vec<SummaryRow>,
    pub scorecard: Vec<ScorecardRow>,
    pub encoding: Vec<EncodingRow>,
    pub tie_rates: BTreeMap<String, f64>,
}

impl Report {
    pub fn rate(&self, scenario: &str, method: Method) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.scenario == scenario && r.method == method)
            .map(|r| r.rejection_rate)
    }

    fn scenarios(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.summary {
            if !out.contains(&r.scenario) {
                out.push(r.scenario.clone());
            }
        }
        out
    }

    fn methods(&self) -> Vec<Method> {
        let mut out: Vec<Method> = self.summary.iter().map(|r| r.method).collect();
        out.sort();
        out.dedup();
        out
    }
}

fn is_null_scenario(id: &str) -> bool {
    scenario(id).is_some_and(|s| s.is_null())
}

/// Summary, win/tie/loss scorecard of `cwot_block6` against each
/// comparator over non-null scenarios, and the block-vs-count table.
pub fn summarize(raw: &[RawRow], alpha: f64) -> Report {
    let summary = summarize_rows(raw, alpha);
    let mut report = Report {
        summary,
        scorecard: Vec::new(),
        encoding: Vec::new(),
        tie_rates: mean_tie_rates(raw),
    };
    let scenarios = report.scenarios();
    for comparator in [Method::Cox, Method::Wr, Method::Wlw] {
        let diffs: Vec<f64> = scenarios
            .iter()
            .filter(|s| !is_null_scenario(s))
            .filter_map(|s| {
                let cwot = report.rate(s, Method::CwotBlock6)?;
                let other = report.rate(s, comparator)?;
                Some(100.0 * (cwot - other))
            })
            .collect();
        if diffs.is_empty() {
            continue;
        }
        report.scorecard.push(ScorecardRow {
            comparator,
            wins: diffs.iter().filter(|&&d| d > SCORECARD_MARGIN_PP).count(),
            losses: diffs.iter().filter(|&&d| d < -SCORECARD_MARGIN_PP).count(),
            ties: diffs.iter().filter(|&&d| d.abs() <= SCORECARD_MARGIN_PP).count(),
            mean_diff_pp: diffs.iter().sum::<f64>() / diffs.len() as f64,
        });
    }
    for s in &scenarios {
        if let (Some(block6), Some(count5)) = (
            report.rate(s, Method::CwotBlock6),
            report.rate(s, Method::CwotCount5),
        ) {
            let wr = report.rate(s, Method::Wr);
            report.encoding.push(EncodingRow {
                scenario: s.clone(),
                count5,
                block6,
                wr,
                block_minus_wr_pp: wr.map(|w| 100.0 * (block6 - w)),
            });
        }
    }
    report
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_raw_csv<W: Write>(mut w: W, raw: &[RawRow]) -> std::io::Result<()> {
    writeln!(w, "{RAW_HEADER}")?;
    for r in raw {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{:.3},{}",
            r.scenario,
            r.rep,
            r.method,
            fmt_opt(r.estimate),
            fmt_opt(r.p_value),
            u8::from(r.rejected),
            u8::from(r.converged),
            fmt_opt(r.tie_rate),
            r.runtime_ms,
            r.dataset_hash
        )?;
    }
    Ok(())
}

fn parse_opt(field: &str, line: usize, what: &str) -> Result<Option<f64>, HarnessError> {
    if field.is_empty() {
        return Ok(None);
    }
    field.parse().map(Some).map_err(|_| HarnessError::Schema {
        line,
        reason: format!("bad {what} {field:?}"),
    })
}

fn parse_flag(field: &str, line: usize, what: &str) -> Result<bool, HarnessError> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(HarnessError::Schema {
            line,
            reason: format!("bad {what} {field:?}"),
        }),
    }
}

pub fn read_raw_csv<R: Read>(mut reader: R) -> Result<Vec<RawRow>, HarnessError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RAW_HEADER => {}
        _ => {
            return Err(HarnessError::Schema {
                line: 1,
                reason: format!("expected header {RAW_HEADER}"),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 10 {
            return Err(HarnessError::Schema {
                line: line_no,
                reason: format!("{} fields, expected 10", f.len()),
            });
        }
        let schema = |reason: String| HarnessError::Schema { line: line_no, reason };
        out.push(RawRow {
            scenario: f[0].to_string(),
            rep: f[1].parse().map_err(|_| schema(format!("bad rep {:?}", f[1])))?,
            method: f[2].parse().map_err(schema)?,
            estimate: parse_opt(f[3], line_no, "estimate")?,
            p_value: parse_opt(f[4], line_no, "p_value")?,
            rejected: parse_flag(f[5], line_no, "rejected")?,
            converged: parse_flag(f[6], line_no, "converged")?,
            tie_rate: parse_opt(f[7], line_no, "tie_rate")?,
            runtime_ms: parse_opt(f[8], line_no, "runtime_ms")?.unwrap_or(0.0),
            dataset_hash: f[9].to_string(),
        });
    }
    Ok(out)
}

pub fn write_summary_csv<W: Write>(mut w: W, summary: &[SummaryRow]) -> std::io::Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for s in summary {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{:.3}",
            s.scenario,
            s.method,
            s.reps,
            s.rejection_rate,
            s.mcse,
            s.mean_estimate,
            s.convergence_rate,
            s.median_runtime_ms
        )?;
    }
    Ok(())
}

pub fn write_scorecard_csv<W: Write>(mut w: W, rows: &[ScorecardRow]) -> std::io::Result<()> {
    writeln!(w, "comparator,wins,ties,losses,mean_diff_pp")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{:.2}", r.comparator, r.wins, r.ties, r.losses, r.mean_diff_pp)?;
    }
    Ok(())
}

pub fn write_encoding_csv<W: Write>(mut w: W, rows: &[EncodingRow]) -> std::io::Result<()> {
    writeln!(w, "scenario,count5,block6,wr,block_minus_wr_pp")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.scenario,
            r.count5,
            r.block6,
            fmt_opt(r.wr),
            fmt_opt(r.block_minus_wr_pp)
        )?;
    }
    Ok(())
}

/// Plot-ready CSVs: heatmap, advantage over WR, type I bars with the
/// Bradley band, encoding comparison and power by sample size.
pub fn emit_plot_data(report: &Report, dir: &Path, n_override: Option<usize>) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let scenarios = report.scenarios();
    let methods = report.methods();

    let mut heat = String::from("scenario");
    for m in &methods {
        heat.push(',');
        heat.push_str(m.name());
    }
    heat.push('\n');
    for s in &scenarios {
        heat.push_str(s);
        for m in &methods {
            heat.push(',');
            heat.push_str(&fmt_opt(report.rate(s, *m)));
        }
        heat.push('\n');
    }
    fs::write(dir.join("heatmap.csv"), heat)?;

    let mut adv = String::from("scenario,cwot_block6,wr,diff_pp\n");
    for s in &scenarios {
        if let (Some(c), Some(w)) = (report.rate(s, Method::CwotBlock6), report.rate(s, Method::Wr)) {
            adv.push_str(&format!("{s},{c},{w},{}\n", 100.0 * (c - w)));
        }
    }
    fs::write(dir.join("advantage_vs_wr.csv"), adv)?;

    let mut t1 = String::from("method,rejection_rate,mcse,bradley_low,bradley_high\n");
    for r in report.summary.iter().filter(|r| r.scenario == "NULL-S") {
        t1.push_str(&format!(
            "{},{},{},{BRADLEY_LOW},{BRADLEY_HIGH}\n",
            r.method, r.rejection_rate, r.mcse
        ));
    }
    fs::write(dir.join("type1.csv"), t1)?;

    let mut enc = Vec::new();
    write_encoding_csv(&mut enc, &report.encoding)?;
    fs::write(dir.join("encoding.csv"), enc)?;

    let mut power = String::from("scenario,n_per_arm,method,rejection_rate\n");
    for id in ["SS-S", "UNI-L", "SS-L"] {
        let Some(spec) = scenario(id) else { continue };
        let n = n_override.unwrap_or(spec.n_per_arm);
        for r in report.summary.iter().filter(|r| r.scenario == id) {
            power.push_str(&format!("{id},{n},{},{}\n", r.method, r.rejection_rate));
        }
    }
    fs::write(dir.join("power_by_n.csv"), power)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    generator: &'static str,
    weight_convention: &'static str,
    measure_block6: MeasureSpec,
    measure_count5: MeasureSpec,
    estimands: BTreeMap<&'static str, &'static str>,
    config: &'a SweepConfig,
}

/// Write raw, summary, scorecard, encoding, plot CSVs and the manifest.
pub fn write_outputs(output: &SweepOutput, config: &SweepConfig, dir: &Path) -> Result<Report, HarnessError> {
    fs::create_dir_all(dir)?;
    let mut raw = Vec::new();
    write_raw_csv(&mut raw, &output.raw)?;
    fs::write(dir.join("raw.csv"), raw)?;
    let report = summarize(&output.raw, config.alpha);
    write_report(&report, dir, config.n_per_arm)?;
    let manifest = Manifest {
        tool: "cwotce",
        version: env!("CARGO_PKG_VERSION"),
        generator: rng::GENERATOR_NAME,
        weight_convention: WEIGHT_CONVENTION,
        measure_block6: MeasureSpec::default_block6(),
        measure_count5: MeasureSpec::default_count5(),
        estimands: Method::ALL.iter().map(|m| (m.name(), m.estimand())).collect(),
        config,
    };
    fs::write(dir.join("run_manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(report)
}

/// Write the report tables and plot data derived from raw rows.
pub fn write_report(report: &Report, dir: &Path, n_override: Option<usize>) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &report.summary)?;
    fs::write(dir.join("summary.csv"), &buf)?;
    buf.clear();
    write_scorecard_csv(&mut buf, &report.scorecard)?;
    fs::write(dir.join("scorecard.csv"), &buf)?;
    buf.clear();
    write_encoding_csv(&mut buf, &report.encoding)?;
    fs::write(dir.join("encoding.csv"), &buf)?;
    emit_plot_data(report, &dir.join("plots"), n_override)
}
