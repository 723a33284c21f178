//! Last-event-assisted win ratio for death plus recurrent events.
//!
//! Each pair is judged on the common window `min(followup_i, followup_j)`:
//!
//! 1. death: a patient who dies inside the window loses to one who does not;
//!    if both die, the later death wins;
//! 2. recurrent events: fewer events inside the window wins;
//! 3. last-event assist: with equal positive counts, the earlier last event
//!    inside the window wins.
//!
//! Anything left is a tie. The adjudication is isolated in
//! [`adjudicate`] so the rule set can be swapped.

use std::cmp::Ordering;

use serde::Serialize;

use super::ComparatorError;
use crate::encoding::PatientRecord;
use crate::inference::permutation_test_rows;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Tier {
    Death,
    Count,
    LastEvent,
    Tie,
}

/// Result of comparing `a` against `b`: `Greater` means `a` wins.
pub fn adjudicate(a: &PatientRecord, b: &PatientRecord) -> (Ordering, Tier) {
    let window = a.followup_time.min(b.followup_time);
    let a_dies = a.death_observed && a.followup_time <= window;
    let b_dies = b.death_observed && b.followup_time <= window;
    match (a_dies, b_dies) {
        (true, false) => return (Ordering::Less, Tier::Death),
        (false, true) => return (Ordering::Greater, Tier::Death),
        (true, true) => {
            let ord = a.followup_time.total_cmp(&b.followup_time);
            if ord != Ordering::Equal {
                return (ord, Tier::Death);
            }
        }
        (false, false) => {}
    }
    let na = a.events_by(window);
    let nb = b.events_by(window);
    if na != nb {
        return (nb.cmp(&na), Tier::Count);
    }
    if na > 0 {
        let la = a.event_times[na - 1];
        let lb = b.event_times[nb - 1];
        let ord = lb.total_cmp(&la);
        if ord != Ordering::Equal {
            return (ord, Tier::LastEvent);
        }
    }
    (Ordering::Equal, Tier::Tie)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WinRatioResult {
    pub wins: u64,
    pub losses: u64,
    pub ties: u64,
    /// `wins / losses`; 1 when there are neither wins nor losses, `+inf`
    /// when only wins.
    pub wr: f64,
    /// Set when `losses == 0`, where the ratio is not a real estimate.
    pub undefined: bool,
    pub tie_rate: f64,
    /// `(wins - losses) / pairs`.
    pub net_benefit: f64,
    pub p_value: f64,
    pub b: usize,
}

/// Pooled row scores `sum_j outcome(i, j)` with `+1` win and `-1` loss.
pub fn pair_row_scores(records: &[PatientRecord]) -> Vec<i64> {
    let n = records.len();
    let mut rows = vec![0i64; n];
    for i in 0..n {
        for j in i + 1..n {
            match adjudicate(&records[i], &records[j]).0 {
                Ordering::Greater => {
                    rows[i] += 1;
                    rows[j] -= 1;
                }
                Ordering::Less => {
                    rows[i] -= 1;
                    rows[j] += 1;
                }
                Ordering::Equal => {}
            }
        }
    }
    rows
}

/// Pair counts over treatment x control without inference.
pub fn win_counts(records: &[PatientRecord]) -> (u64, u64, u64) {
    let (trt, ctrl): (Vec<_>, Vec<_>) = records.iter().partition(|r| r.arm.is_treatment());
    let (mut w, mut l, mut t) = (0u64, 0u64, 0u64);
    for a in &trt {
        for b in &ctrl {
            match adjudicate(a, b).0 {
                Ordering::Greater => w += 1,
                Ordering::Less => l += 1,
                Ordering::Equal => t += 1,
            }
        }
    }
    (w, l, t)
}

/// Win ratio with a two-sided permutation p-value for the net benefit.
pub fn win_ratio_rec(
    records: &[PatientRecord],
    b: usize,
    seed: u64,
) -> Result<WinRatioResult, ComparatorError> {
    super::check_arms(records).map_err(|_| ComparatorError::DegenerateArms)?;
    let (wins, losses, ties) = win_counts(records);
    let pairs = (wins + losses + ties) as f64;
    let labels: Vec<bool> = records.iter().map(|r| r.arm.is_treatment()).collect();
    let test = permutation_test_rows(&pair_row_scores(records), &labels, b, seed)?;
    debug_assert_eq!(test.net_obs, wins as i64 - losses as i64);
    let (wr, undefined) = match (wins, losses) {
        (0, 0) => (1.0, true),
        (_, 0) => (f64::INFINITY, true),
        (w, l) => (w as f64 / l as f64, false),
    };
    Ok(WinRatioResult {
        wins,
        losses,
        ties,
        wr,
        undefined,
        tie_rate: ties as f64 / pairs,
        net_benefit: (wins as f64 - losses as f64) / pairs,
        p_value: test.p_value,
        b,
    })
}
