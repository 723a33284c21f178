//! Patient records to `[0, 1]^K` profiles, higher is better.
//!
//! Every pooled statistic (KM curves, burden ranks, biomarker range) is
//! computed over both arms together, so encoders never look at arm labels.
//!
//! Component order:
//!
//! | mode     | 1        | 2          | 3          | 4          | 5         | 6     |
//! |----------|----------|------------|------------|------------|-----------|-------|
//! | `Block6` | survival | event-free | AUC burden | last event | biomarker | alive |
//! | `Count5` | survival | event-free | count      | biomarker  | alive     |       |

mod km;
mod record;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capacity::ProfileVector;

pub use km::{km_fit, KmCurve};
pub use record::{read_patients_csv, write_patients_csv, Arm, PatientRecord, TimeUnit, CSV_HEADER};

#[derive(Debug, Error, PartialEq)]
pub enum EncodingError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("event time {time} exceeds horizon {tau}")]
    NegativeTime { time: f64, tau: f64 },
    #[error("patient {id}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("patient {id}: {source}")]
    Patient {
        id: String,
        #[source]
        source: Box<EncodingError>,
    },
    #[error("cohort must contain both arms")]
    SingleArm,
    #[error("invalid horizon {0}")]
    InvalidTau(f64),
    #[error("csv line {line}: {reason}")]
    Csv { line: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EncodingMode {
    #[default]
    Block6,
    Count5,
}

impl EncodingMode {
    pub fn k(self) -> usize {
        match self {
            EncodingMode::Block6 => 6,
            EncodingMode::Count5 => 5,
        }
    }

    pub fn component_names(self) -> &'static [&'static str] {
        match self {
            EncodingMode::Block6 => &[
                "survival",
                "event_free",
                "auc_burden",
                "last_event",
                "biomarker",
                "alive",
            ],
            EncodingMode::Count5 => &["survival", "event_free", "count", "biomarker", "alive"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub mode: EncodingMode,
    pub tau: f64,
    pub biomarker_higher_is_better: bool,
    pub dead_biomarker_score: f64,
}

impl EncodingConfig {
    pub fn new(mode: EncodingMode, tau: f64) -> Self {
        Self {
            mode,
            tau,
            biomarker_higher_is_better: true,
            dead_biomarker_score: 0.0,
        }
    }
}

/// `sum_j (tau - t_j)`, the area under the counting process up to `tau`.
pub fn auc_burden(event_times: &[f64], tau: f64) -> Result<f64, EncodingError> {
    event_times.iter().try_fold(0.0, |acc, &t| {
        if t > tau {
            Err(EncodingError::NegativeTime { time: t, tau })
        } else {
            Ok(acc + (tau - t))
        }
    })
}

/// Pooled midrank survival transform: `P(X > x_i) + 0.5 * P(X = x_i)` for
/// every element, in `O(n log n)`.
pub fn midrank_survival(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let score = ((n - j) as f64 + 0.5 * (j - i) as f64) / n as f64;
        for &idx in &order[i..j] {
            out[idx] = score;
        }
        i = j;
    }
    out
}

/// Midrank survival score of one burden value against the pooled sample.
pub fn encode_burden(all_burdens: &[f64], b: f64) -> f64 {
    let (greater, equal) = all_burdens.iter().fold((0usize, 0usize), |(g, e), &x| {
        (g + usize::from(x > b), e + usize::from(x == b))
    });
    (greater as f64 + 0.5 * equal as f64) / all_burdens.len() as f64
}

/// Pooled survival curve of death, censored at follow-up.
pub fn survival_curve(records: &[PatientRecord]) -> Result<KmCurve, EncodingError> {
    let times: Vec<f64> = records.iter().map(|r| r.followup_time).collect();
    let events: Vec<bool> = records.iter().map(|r| r.death_observed).collect();
    km_fit(&times, &events)
}

/// Pooled curve of time to first nonfatal event, censored at follow-up.
pub fn event_free_curve(records: &[PatientRecord]) -> Result<KmCurve, EncodingError> {
    let times: Vec<f64> = records
        .iter()
        .map(|r| r.first_event().unwrap_or(r.followup_time))
        .collect();
    let events: Vec<bool> = records.iter().map(|r| r.first_event().is_some()).collect();
    km_fit(&times, &events)
}

/// `1 - S(t)` at the observed death-or-censoring time.
pub fn encode_survival(record: &PatientRecord, km: &KmCurve) -> f64 {
    1.0 - km.eval(record.followup_time)
}

pub fn encode_event_free(record: &PatientRecord, km_ef: &KmCurve) -> f64 {
    1.0 - km_ef.eval(record.first_event().unwrap_or(record.followup_time))
}

/// Recency of the last event as a fraction of the horizon; event-free
/// patients score 1.
pub fn encode_last_event(record: &PatientRecord, tau: f64) -> f64 {
    let recency = record.last_event().map_or(tau, |t| tau - t);
    (recency / tau).clamp(0.0, 1.0)
}

/// Pooled range of non-missing biomarker values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiomarkerRange {
    pub min: f64,
    pub max: f64,
}

impl BiomarkerRange {
    pub fn from_records(records: &[PatientRecord]) -> Option<Self> {
        Self::from_values(records.iter().filter_map(|r| r.biomarker))
    }

    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        values.into_iter().fold(None, |acc, x| match acc {
            None => Some(Self { min: x, max: x }),
            Some(r) => Some(Self {
                min: r.min.min(x),
                max: r.max.max(x),
            }),
        })
    }
}

/// Min-max score; a missing value scores `dead_biomarker_score`, and a
/// degenerate range scores 0.5.
pub fn encode_biomarker(
    range: Option<BiomarkerRange>,
    record: &PatientRecord,
    config: &EncodingConfig,
) -> f64 {
    let (Some(x), Some(range)) = (record.biomarker, range) else {
        return config.dead_biomarker_score;
    };
    if range.max <= range.min {
        return 0.5;
    }
    let s = ((x - range.min) / (range.max - range.min)).clamp(0.0, 1.0);
    if config.biomarker_higher_is_better {
        s
    } else {
        1.0 - s
    }
}

/// 1 when alive at last contact. Patients censored alive before the horizon
/// count as alive.
pub fn encode_alive(record: &PatientRecord) -> f64 {
    if record.alive_at_end() {
        1.0
    } else {
        0.0
    }
}

/// Encode a whole cohort.
pub fn encode_cohort(
    records: &[PatientRecord],
    config: &EncodingConfig,
) -> Result<Vec<ProfileVector>, EncodingError> {
    if records.is_empty() {
        return Err(EncodingError::EmptyInput);
    }
    if !(config.tau > 0.0 && config.tau.is_finite()) {
        return Err(EncodingError::InvalidTau(config.tau));
    }
    let has_trt = records.iter().any(|r| r.arm.is_treatment());
    let has_ctrl = records.iter().any(|r| !r.arm.is_treatment());
    if !(has_trt && has_ctrl) {
        return Err(EncodingError::SingleArm);
    }
    for r in records {
        r.validate(config.tau).map_err(|e| EncodingError::Patient {
            id: r.id.clone(),
            source: Box::new(e),
        })?;
    }

    let km = survival_curve(records)?;
    let km_ef = event_free_curve(records)?;
    let range = BiomarkerRange::from_records(records);
    let recurrent = match config.mode {
        EncodingMode::Block6 => {
            let burdens = records
                .iter()
                .map(|r| {
                    auc_burden(&r.event_times, config.tau).map_err(|e| EncodingError::Patient {
                        id: r.id.clone(),
                        source: Box::new(e),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            midrank_survival(&burdens)
        }
        EncodingMode::Count5 => {
            let counts: Vec<f64> = records.iter().map(|r| r.event_times.len() as f64).collect();
            midrank_survival(&counts)
        }
    };

    let profiles = records
        .iter()
        .zip(recurrent)
        .map(|(r, rec_score)| {
            let survival = encode_survival(r, &km);
            let event_free = encode_event_free(r, &km_ef);
            let bio = encode_biomarker(range, r, config);
            let alive = encode_alive(r);
            let values = match config.mode {
                EncodingMode::Block6 => vec![
                    survival,
                    event_free,
                    rec_score,
                    encode_last_event(r, config.tau),
                    bio,
                    alive,
                ],
                EncodingMode::Count5 => vec![survival, event_free, rec_score, bio, alive],
            };
            ProfileVector::new_unchecked(values)
        })
        .collect();
    Ok(profiles)
}
