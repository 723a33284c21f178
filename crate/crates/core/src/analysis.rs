//! One entry point per method, all taking the same patient records.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::capacity::{build_measure, CapacityError, FuzzyMeasure, MeasureSpec, WEIGHT_CONVENTION};
use crate::comparators::{cox_ttfe, win_ratio_rec, wlw, ComparatorError, CoxFit, WinRatioResult, WlwResult};
use crate::encoding::{encode_cohort, EncodingConfig, EncodingError, EncodingMode, PatientRecord};
use crate::inference::{analyze_cbi, choquet_scores, shapley_attribution, AttributionResult, CbiResult, InferenceError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Comparator(#[from] ComparatorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Method {
    #[serde(rename = "cwot_block6")]
    CwotBlock6,
    #[serde(rename = "cwot_count5")]
    CwotCount5,
    #[serde(rename = "cox")]
    Cox,
    #[serde(rename = "wr")]
    Wr,
    #[serde(rename = "wlw")]
    Wlw,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::CwotBlock6,
        Method::CwotCount5,
        Method::Cox,
        Method::Wr,
        Method::Wlw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::CwotBlock6 => "cwot_block6",
            Method::CwotCount5 => "cwot_count5",
            Method::Cox => "cox",
            Method::Wr => "wr",
            Method::Wlw => "wlw",
        }
    }

    /// What the `estimate` column holds.
    pub fn estimand(self) -> &'static str {
        match self {
            Method::CwotBlock6 | Method::CwotCount5 => "CBI",
            Method::Cox => "hazard ratio, time to first event",
            Method::Wr => "win ratio",
            Method::Wlw => "hazard ratio, equal-weight WLW contrast",
        }
    }

    pub fn encoding(self) -> Option<EncodingMode> {
        match self {
            Method::CwotBlock6 => Some(EncodingMode::Block6),
            Method::CwotCount5 => Some(EncodingMode::Count5),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// Default measure for an encoding mode.
pub fn default_measure_spec(mode: EncodingMode) -> MeasureSpec {
    match mode {
        EncodingMode::Block6 => MeasureSpec::default_block6(),
        EncodingMode::Count5 => MeasureSpec::default_count5(),
    }
}

pub fn default_measure(mode: EncodingMode) -> FuzzyMeasure {
    build_measure(&default_measure_spec(mode)).expect("default measures are valid")
}

pub fn arm_labels(records: &[PatientRecord]) -> Vec<bool> {
    records.iter().map(|r| r.arm.is_treatment()).collect()
}

/// Full Choquet analysis of one cohort.
#[derive(Debug, Clone, Serialize)]
pub struct CwotReport {
    pub encoding: EncodingMode,
    pub components: Vec<&'static str>,
    pub weight_convention: &'static str,
    #[serde(flatten)]
    pub cbi: CbiResult,
    pub attribution: Option<AttributionResult>,
    /// Set when attribution is undefined; raw drops are in the message.
    pub attribution_note: Option<String>,
}

pub fn cwot_analysis(
    records: &[PatientRecord],
    config: &EncodingConfig,
    measure: &FuzzyMeasure,
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<CwotReport, AnalysisError> {
    let profiles = encode_cohort(records, config)?;
    let scores = choquet_scores(&profiles, measure)?;
    let labels = arm_labels(records);
    let cbi = analyze_cbi(&scores, &labels, b, alpha, seed)?;
    let (attribution, attribution_note) = match shapley_attribution(&profiles, &labels, measure) {
        Ok(a) => (Some(a), None),
        Err(e @ InferenceError::ZeroAttribution { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    Ok(CwotReport {
        encoding: config.mode,
        components: config.mode.component_names().to_vec(),
        weight_convention: WEIGHT_CONVENTION,
        cbi,
        attribution,
        attribution_note,
    })
}

/// Per-method output in a common shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub estimate: f64,
    pub p_value: f64,
    pub converged: bool,
    pub tie_rate: Option<f64>,
}

/// Everything a method reports, for the `analyze` command.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "method")]
pub enum MethodReport {
    #[serde(rename = "cwot")]
    Cwot(CwotReport),
    #[serde(rename = "cox")]
    Cox(CoxFit),
    #[serde(rename = "wr")]
    Wr(WinRatioResult),
    #[serde(rename = "wlw")]
    Wlw(WlwResult),
}

impl MethodReport {
    pub fn outcome(&self) -> MethodOutcome {
        match self {
            MethodReport::Cwot(r) => MethodOutcome {
                estimate: r.cbi.cbi,
                p_value: r.cbi.p_value,
                converged: true,
                tie_rate: None,
            },
            MethodReport::Cox(f) => MethodOutcome {
                estimate: f.hazard_ratio(),
                p_value: f.p_value,
                converged: f.converged,
                tie_rate: None,
            },
            MethodReport::Wr(w) => MethodOutcome {
                estimate: w.wr,
                p_value: w.p_value,
                converged: true,
                tie_rate: Some(w.tie_rate),
            },
            MethodReport::Wlw(w) => MethodOutcome {
                estimate: w.hazard_ratio(),
                p_value: w.p_value,
                converged: w.converged,
                tie_rate: None,
            },
        }
    }
}

/// Inference settings shared by all methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSettings {
    pub tau: f64,
    pub b: usize,
    pub alpha: f64,
    pub seed: u64,
}

pub fn run_method(
    method: Method,
    records: &[PatientRecord],
    settings: &RunSettings,
    measure: Option<&FuzzyMeasure>,
) -> Result<MethodReport, AnalysisError> {
    Ok(match method {
        Method::CwotBlock6 | Method::CwotCount5 => {
            let mode = method.encoding().expect("cwot method");
            let owned;
            let measure = match measure {
                Some(m) => m,
                None => {
                    owned = default_measure(mode);
                    &owned
                }
            };
            let config = EncodingConfig::new(mode, settings.tau);
            MethodReport::Cwot(cwot_analysis(
                records,
                &config,
                measure,
                settings.b,
                settings.alpha,
                settings.seed,
            )?)
        }
        Method::Cox => MethodReport::Cox(cox_ttfe(records)?),
        Method::Wr => MethodReport::Wr(win_ratio_rec(records, settings.b, settings.seed)?),
        Method::Wlw => MethodReport::Wlw(wlw(records)?),
    })
}

/// Method outcome for sweeps; skips attribution, which sweeps do not need.
pub fn run_method_outcome(
    method: Method,
    records: &[PatientRecord],
    settings: &RunSettings,
    measures: &MeasureSet,
) -> Result<MethodOutcome, AnalysisError> {
    match method.encoding() {
        Some(mode) => {
            let profiles = encode_cohort(records, &EncodingConfig::new(mode, settings.tau))?;
            let scores = choquet_scores(&profiles, measures.get(mode))?;
            let cbi = analyze_cbi(&scores, &arm_labels(records), settings.b, settings.alpha, settings.seed)?;
            Ok(MethodOutcome {
                estimate: cbi.cbi,
                p_value: cbi.p_value,
                converged: true,
                tie_rate: None,
            })
        }
        None => Ok(run_method(method, records, settings, None)?.outcome()),
    }
}

/// Validated measures for both encodings.
#[derive(Debug, Clone)]
pub struct MeasureSet {
    pub block6: FuzzyMeasure,
    pub count5: FuzzyMeasure,
}

impl Default for MeasureSet {
    fn default() -> Self {
        Self {
            block6: default_measure(EncodingMode::Block6),
            count5: default_measure(EncodingMode::Count5),
        }
    }
}

impl MeasureSet {
    pub fn get(&self, mode: EncodingMode) -> &FuzzyMeasure {
        match mode {
            EncodingMode::Block6 => &self.block6,
            EncodingMode::Count5 => &self.count5,
        }
    }
}
