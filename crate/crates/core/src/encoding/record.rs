use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::EncodingError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    Control,
    Treatment,
}

impl Arm {
    pub fn from_indicator(v: u8) -> Option<Self> {
        match v {
            0 => Some(Arm::Control),
            1 => Some(Arm::Treatment),
            _ => None,
        }
    }

    pub fn indicator(self) -> u8 {
        match self {
            Arm::Control => 0,
            Arm::Treatment => 1,
        }
    }

    pub fn is_treatment(self) -> bool {
        self == Arm::Treatment
    }

    pub fn swapped(self) -> Self {
        match self {
            Arm::Control => Arm::Treatment,
            Arm::Treatment => Arm::Control,
        }
    }
}

/// One subject's observed trial data. Times are in years.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    pub arm: Arm,
    /// Time of death or censoring.
    pub followup_time: f64,
    pub death_observed: bool,
    /// Ascending nonfatal event times in `(0, followup_time]`.
    pub event_times: Vec<f64>,
    /// `None` when structurally missing (dead) or not measured.
    pub biomarker: Option<f64>,
}

impl PatientRecord {
    pub fn alive_at_end(&self) -> bool {
        !self.death_observed
    }

    pub fn first_event(&self) -> Option<f64> {
        self.event_times.first().copied()
    }

    pub fn last_event(&self) -> Option<f64> {
        self.event_times.last().copied()
    }

    /// Number of nonfatal events at or before `t`.
    pub fn events_by(&self, t: f64) -> usize {
        self.event_times.partition_point(|&e| e <= t)
    }

    pub fn validate(&self, tau: f64) -> Result<(), EncodingError> {
        let fail = |reason: String| {
            Err(EncodingError::InvalidRecord {
                id: self.id.clone(),
                reason,
            })
        };
        if !(self.followup_time > 0.0 && self.followup_time <= tau) {
            return fail(format!(
                "followup_time {} outside (0, {tau}]",
                self.followup_time
            ));
        }
        let mut prev = 0.0;
        for &t in &self.event_times {
            if !(t > 0.0 && t <= self.followup_time) {
                return fail(format!(
                    "event time {t} outside (0, {}]",
                    self.followup_time
                ));
            }
            if t < prev {
                return fail("event times not ascending".into());
            }
            prev = t;
        }
        if self.death_observed && self.biomarker.is_some() {
            return fail("biomarker present for a patient who died".into());
        }
        if let Some(b) = self.biomarker {
            if !b.is_finite() {
                return fail(format!("biomarker {b} is not finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeUnit {
    #[default]
    Years,
    Months,
}

impl TimeUnit {
    pub fn to_years(self, t: f64) -> f64 {
        match self {
            TimeUnit::Years => t,
            TimeUnit::Months => t / 12.0,
        }
    }
}

pub const CSV_HEADER: [&str; 6] = [
    "id",
    "arm",
    "followup_time",
    "death_observed",
    "event_times",
    "biomarker",
];

fn parse_f64(field: &str, what: &str, line: u64) -> Result<f64, EncodingError> {
    field.trim().parse().map_err(|_| EncodingError::Csv {
        line,
        reason: format!("cannot parse {what} {field:?}"),
    })
}

/// Parse the patient CSV format, converting times to years.
pub fn read_patients_csv<R: Read>(
    reader: R,
    unit: TimeUnit,
) -> Result<Vec<PatientRecord>, EncodingError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| EncodingError::Csv {
        line: 1,
        reason: e.to_string(),
    })?;
    let columns: Vec<&str> = headers.iter().collect();
    if columns != CSV_HEADER {
        return Err(EncodingError::Csv {
            line: 1,
            reason: format!("expected header {}", CSV_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| EncodingError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let arm = match row[1].trim() {
            "0" => Arm::Control,
            "1" => Arm::Treatment,
            other => {
                return Err(EncodingError::Csv {
                    line,
                    reason: format!("arm must be 0 or 1, got {other:?}"),
                })
            }
        };
        let death_observed = match row[3].trim() {
            "1" | "true" | "TRUE" => true,
            "0" | "false" | "FALSE" => false,
            other => {
                return Err(EncodingError::Csv {
                    line,
                    reason: format!("death_observed must be 0/1, got {other:?}"),
                })
            }
        };
        let event_times = if row[4].trim().is_empty() {
            Vec::new()
        } else {
            row[4]
                .split(';')
                .map(|t| parse_f64(t, "event time", line).map(|t| unit.to_years(t)))
                .collect::<Result<Vec<_>, _>>()?
        };
        let biomarker = match row[5].trim() {
            "" => None,
            v => Some(parse_f64(v, "biomarker", line)?),
        };
        out.push(PatientRecord {
            id: row[0].to_string(),
            arm,
            followup_time: unit.to_years(parse_f64(&row[2], "followup_time", line)?),
            death_observed,
            event_times,
            biomarker,
        });
    }
    Ok(out)
}

/// Write records in the patient CSV format (times in years). Floats use the
/// shortest round-trip representation, so output is byte-stable.
pub fn write_patients_csv<W: Write>(
    writer: W,
    records: &[PatientRecord],
) -> Result<(), EncodingError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| EncodingError::Csv {
        line: 0,
        reason: e.to_string(),
    };
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in records {
        let events = r
            .event_times
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            r.id.clone(),
            r.arm.indicator().to_string(),
            r.followup_time.to_string(),
            u8::from(r.death_observed).to_string(),
            events,
            r.biomarker.map(|b| b.to_string()).unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| EncodingError::Csv {
        line: 0,
        reason: e.to_string(),
    })
}
