//! Wei-Lin-Weissfeld marginal model with two strata (death, first nonfatal
//! event) and a subject-clustered sandwich covariance.

use serde::Serialize;

use super::cox::{fit_cox, normal_two_sided_p, score_residuals, CoxFit, SurvivalData};
use super::ComparatorError;
use crate::encoding::PatientRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stratum {
    Death,
    FirstEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WlwResult {
    pub beta_death: Option<f64>,
    pub beta_event: Option<f64>,
    /// Robust covariance of `(beta_death, beta_event)`; rows and columns of
    /// a dropped stratum are zero.
    pub robust_cov: [[f64; 2]; 2],
    pub beta_combined: f64,
    pub se_combined: f64,
    pub p_value: f64,
    /// Wald statistic of the joint test over the fitted strata.
    pub global_chi2: f64,
    pub global_df: usize,
    pub global_p: f64,
    pub dropped: Vec<Stratum>,
    pub converged: bool,
}

impl WlwResult {
    pub fn hazard_ratio(&self) -> f64 {
        self.beta_combined.exp()
    }
}

/// Death stratum data: follow-up time with death indicator.
pub fn death_stratum(records: &[PatientRecord]) -> (Vec<f64>, Vec<bool>) {
    records
        .iter()
        .map(|r| (r.followup_time, r.death_observed))
        .unzip()
}

/// First nonfatal event; death and end of follow-up censor.
pub fn first_event_stratum(records: &[PatientRecord]) -> (Vec<f64>, Vec<bool>) {
    records
        .iter()
        .map(|r| match r.first_event() {
            Some(t) => (t, true),
            None => (r.followup_time, false),
        })
        .unzip()
}

struct StratumFit {
    fit: CoxFit,
    /// Per-subject `U_i / I`.
    dfbeta: Vec<f64>,
}

fn fit_stratum(time: &[f64], event: &[bool], x: &[f64]) -> Result<Option<StratumFit>, ComparatorError> {
    match fit_cox(&SurvivalData::new(time, event, x)) {
        Ok(fit) => {
            let info = fit.information;
            let dfbeta = score_residuals(time, event, x, fit.beta)
                .into_iter()
                .map(|u| u / info)
                .collect();
            Ok(Some(StratumFit { fit, dfbeta }))
        }
        Err(ComparatorError::NoEvents) => Ok(None),
        Err(e) => Err(e),
    }
}

fn chi2_survival(x: f64, df: usize) -> f64 {
    match df {
        1 => normal_two_sided_p(x.sqrt()),
        2 => (-0.5 * x).exp(),
        _ => f64::NAN,
    }
}

pub fn wlw(records: &[PatientRecord]) -> Result<WlwResult, ComparatorError> {
    super::check_arms(records)?;
    let x: Vec<f64> = records.iter().map(|r| f64::from(r.arm.indicator())).collect();
    let (t_d, e_d) = death_stratum(records);
    let (t_e, e_e) = first_event_stratum(records);
    let fits = [fit_stratum(&t_d, &e_d, &x)?, fit_stratum(&t_e, &e_e, &x)?];

    let mut dropped = Vec::new();
    for (fit, stratum) in fits.iter().zip([Stratum::Death, Stratum::FirstEvent]) {
        if fit.is_none() {
            dropped.push(stratum);
        }
    }
    if dropped.len() == 2 {
        return Err(ComparatorError::NoEvents);
    }

    let mut cov = [[0.0; 2]; 2];
    for s in 0..2 {
        for t in 0..2 {
            if let (Some(a), Some(b)) = (&fits[s], &fits[t]) {
                cov[s][t] = a.dfbeta.iter().zip(&b.dfbeta).map(|(u, v)| u * v).sum();
            }
        }
    }
    let betas = [
        fits[0].as_ref().map(|f| f.fit.beta),
        fits[1].as_ref().map(|f| f.fit.beta),
    ];
    let converged = fits.iter().flatten().all(|f| f.fit.converged);

    // Equal-weight contrast over the strata that were fitted.
    let active: Vec<usize> = (0..2).filter(|&s| betas[s].is_some()).collect();
    let w = 1.0 / active.len() as f64;
    let beta_combined = active.iter().map(|&s| w * betas[s].unwrap()).sum::<f64>();
    let var_combined: f64 = active
        .iter()
        .flat_map(|&s| active.iter().map(move |&t| (s, t)))
        .map(|(s, t)| w * w * cov[s][t])
        .sum();
    let se_combined = var_combined.sqrt();
    let p_value = normal_two_sided_p(beta_combined / se_combined);

    let (global_chi2, global_df) = if active.len() == 2 {
        let (b0, b1) = (betas[0].unwrap(), betas[1].unwrap());
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        let q = (b0 * b0 * cov[1][1] - 2.0 * b0 * b1 * cov[0][1] + b1 * b1 * cov[0][0]) / det;
        (q, 2)
    } else {
        let s = active[0];
        (betas[s].unwrap().powi(2) / cov[s][s], 1)
    };

    Ok(WlwResult {
        beta_death: betas[0],
        beta_event: betas[1],
        robust_cov: cov,
        beta_combined,
        se_combined,
        p_value,
        global_chi2,
        global_df,
        global_p: chi2_survival(global_chi2, global_df),
        dropped,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::Arm;

    fn rec(arm: Arm, fu: f64, dead: bool, events: &[f64]) -> PatientRecord {
        PatientRecord {
            id: String::new(),
            arm,
            followup_time: fu,
            death_observed: dead,
            event_times: events.to_vec(),
            biomarker: None,
        }
    }

    fn mirrored() -> Vec<PatientRecord> {
        let base = [
            (1.0, true, vec![0.5]),
            (3.0, false, vec![1.2, 2.0]),
            (2.2, true, vec![]),
            (3.0, false, vec![2.5]),
            (0.8, false, vec![]),
        ];
        base.iter()
            .flat_map(|(fu, d, ev)| {
                [Arm::Treatment, Arm::Control].map(|arm| rec(arm, *fu, *d, ev))
            })
            .collect()
    }

    #[test]
    fn symmetric_data_gives_zero() {
        let r = wlw(&mirrored()).unwrap();
        assert!(r.beta_combined.abs() < 1e-10);
        assert!(r.dropped.is_empty());
    }

    #[test]
    fn combined_is_average_of_marginal_fits() {
        let recs = vec![
            rec(Arm::Treatment, 3.0, false, &[2.0]),
            rec(Arm::Treatment, 2.5, true, &[]),
            rec(Arm::Treatment, 1.0, true, &[0.6]),
            rec(Arm::Control, 0.7, true, &[0.3]),
            rec(Arm::Control, 1.5, true, &[1.1]),
            rec(Arm::Control, 3.0, false, &[2.7]),
            rec(Arm::Treatment, 3.0, false, &[]),
            rec(Arm::Control, 2.0, false, &[0.9]),
        ];
        let r = wlw(&recs).unwrap();
        let x: Vec<f64> = recs.iter().map(|r| f64::from(r.arm.indicator())).collect();
        let (td, ed) = death_stratum(&recs);
        let (te, ee) = first_event_stratum(&recs);
        let bd = fit_cox(&SurvivalData::new(&td, &ed, &x)).unwrap().beta;
        let be = fit_cox(&SurvivalData::new(&te, &ee, &x)).unwrap().beta;
        assert!((r.beta_combined - 0.5 * (bd + be)).abs() < 1e-12);
        assert!((r.robust_cov[0][1] - r.robust_cov[1][0]).abs() < 1e-15);
        let det = r.robust_cov[0][0] * r.robust_cov[1][1] - r.robust_cov[0][1].powi(2);
        assert!(det >= -1e-15 && r.robust_cov[0][0] >= 0.0);
    }

    #[test]
    fn missing_stratum_falls_back() {
        let recs = vec![
            rec(Arm::Treatment, 3.0, false, &[2.0]),
            rec(Arm::Treatment, 3.0, false, &[1.0]),
            rec(Arm::Control, 3.0, false, &[0.5]),
            rec(Arm::Control, 3.0, false, &[2.5]),
            rec(Arm::Control, 3.0, false, &[]),
        ];
        let r = wlw(&recs).unwrap();
        assert_eq!(r.dropped, vec![Stratum::Death]);
        assert_eq!(r.beta_death, None);
        assert_eq!(r.beta_combined, r.beta_event.unwrap());
        assert_eq!(r.global_df, 1);
    }
}
