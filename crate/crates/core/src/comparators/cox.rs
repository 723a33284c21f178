use serde::Serialize;
use statrs::function::erf::erfc;

use super::ComparatorError;
use crate::encoding::PatientRecord;

pub const MAX_ITERATIONS: usize = 50;
pub const STEP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoxFit {
    /// Log hazard ratio of the covariate.
    pub beta: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Observed information at `beta`.
    pub information: f64,
    pub log_likelihood: f64,
}

impl CoxFit {
    pub fn hazard_ratio(&self) -> f64 {
        self.beta.exp()
    }
}

/// Two-sided standard normal tail probability.
pub fn normal_two_sided_p(z: f64) -> f64 {
    if z.is_finite() {
        erfc(z.abs() / std::f64::consts::SQRT_2)
    } else {
        f64::NAN
    }
}

/// Right-censored data with one covariate, pre-sorted by ascending time.
#[derive(Debug, Clone)]
pub struct SurvivalData {
    time: Vec<f64>,
    event: Vec<bool>,
    x: Vec<f64>,
}

impl SurvivalData {
    pub fn new(time: &[f64], event: &[bool], x: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..time.len()).collect();
        order.sort_by(|&a, &b| time[a].total_cmp(&time[b]));
        Self {
            time: order.iter().map(|&i| time[i]).collect(),
            event: order.iter().map(|&i| event[i]).collect(),
            x: order.iter().map(|&i| x[i]).collect(),
        }
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    /// Index ranges of equal times, ascending.
    fn groups(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.time.len() {
            let mut j = i + 1;
            while j < self.time.len() && self.time[j] == self.time[i] {
                j += 1;
            }
            out.push((i, j));
            i = j;
        }
        out
    }

    /// Efron partial log-likelihood, score and information at `beta`.
    fn efron(&self, beta: f64, groups: &[(usize, usize)]) -> (f64, f64, f64) {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        let (mut ll, mut score, mut info) = (0.0, 0.0, 0.0);
        for &(lo, hi) in groups.iter().rev() {
            let (mut d0, mut d1, mut d2, mut d) = (0.0, 0.0, 0.0, 0usize);
            for i in lo..hi {
                let x = self.x[i];
                let w = (beta * x).exp();
                s0 += w;
                s1 += w * x;
                s2 += w * x * x;
                if self.event[i] {
                    d0 += w;
                    d1 += w * x;
                    d2 += w * x * x;
                    d += 1;
                    ll += beta * x;
                    score += x;
                }
            }
            for l in 0..d {
                let f = l as f64 / d as f64;
                let a0 = s0 - f * d0;
                let a1 = s1 - f * d1;
                let a2 = s2 - f * d2;
                let mean = a1 / a0;
                ll -= a0.ln();
                score -= mean;
                info += a2 / a0 - mean * mean;
            }
        }
        (ll, score, info)
    }

    /// Per-subject score residuals at `beta` with Breslow increments, in
    /// sorted order. Identical to the Efron residuals when no event times tie.
    fn score_residuals_sorted(&self, beta: f64, groups: &[(usize, usize)]) -> Vec<f64> {
        let n = self.time.len();
        // Risk-set sums at every group, computed from the tail.
        let mut s0 = vec![0.0; groups.len()];
        let mut s1 = vec![0.0; groups.len()];
        let (mut a0, mut a1) = (0.0, 0.0);
        for (g, &(lo, hi)) in groups.iter().enumerate().rev() {
            for i in lo..hi {
                let w = (beta * self.x[i]).exp();
                a0 += w;
                a1 += w * self.x[i];
            }
            s0[g] = a0;
            s1[g] = a1;
        }
        let mut out = vec![0.0; n];
        let (mut cum_haz, mut cum_mean_haz) = (0.0, 0.0);
        for (g, &(lo, hi)) in groups.iter().enumerate() {
            let d = (lo..hi).filter(|&i| self.event[i]).count() as f64;
            let mean = s1[g] / s0[g];
            if d > 0.0 {
                cum_haz += d / s0[g];
                cum_mean_haz += d * mean / s0[g];
            }
            for i in lo..hi {
                let x = self.x[i];
                let w = (beta * x).exp();
                let event_part = if self.event[i] { x - mean } else { 0.0 };
                out[i] = event_part - w * (x * cum_haz - cum_mean_haz);
            }
        }
        out
    }
}

/// Newton-Raphson maximization of the Efron partial likelihood with step
/// halving. Stops when `|step| < 1e-9` or after 50 iterations; a fit that
/// hits the limit is returned with `converged = false`.
pub fn fit_cox(data: &SurvivalData) -> Result<CoxFit, ComparatorError> {
    if data.n_events() == 0 {
        return Err(ComparatorError::NoEvents);
    }
    let groups = data.groups();
    let mut beta = 0.0;
    let (mut ll, mut score, mut info) = data.efron(beta, &groups);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if !(info > 0.0 && info.is_finite()) {
            break;
        }
        let mut step = score / info;
        let mut next = data.efron(beta + step, &groups);
        let mut halvings = 0;
        while (next.0.is_nan() || next.0 < ll - 1e-12) && halvings < 30 {
            step *= 0.5;
            next = data.efron(beta + step, &groups);
            halvings += 1;
        }
        beta += step;
        (ll, score, info) = next;
        if step.abs() < STEP_TOLERANCE {
            converged = true;
            break;
        }
    }
    let se = if info > 0.0 { info.sqrt().recip() } else { f64::NAN };
    let converged = converged && se.is_finite() && beta.is_finite();
    let z = beta / se;
    Ok(CoxFit {
        beta,
        se,
        z,
        p_value: normal_two_sided_p(z),
        converged,
        iterations,
        information: info,
        log_likelihood: ll,
    })
}

/// Score residuals in the order `time`, `event`, `x` were given.
pub fn score_residuals(time: &[f64], event: &[bool], x: &[f64], beta: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| time[a].total_cmp(&time[b]));
    let data = SurvivalData::new(time, event, x);
    let sorted = data.score_residuals_sorted(beta, &data.groups());
    let mut out = vec![0.0; time.len()];
    for (pos, &orig) in order.iter().enumerate() {
        out[orig] = sorted[pos];
    }
    out
}

/// Time to first event, composite of death and the first nonfatal event.
pub fn ttfe(record: &PatientRecord) -> (f64, bool) {
    match record.first_event() {
        Some(t) if t <= record.followup_time => (t, true),
        _ => (record.followup_time, record.death_observed),
    }
}

/// Cox model of time to first event on the arm indicator, Wald test.
pub fn cox_ttfe(records: &[PatientRecord]) -> Result<CoxFit, ComparatorError> {
    super::check_arms(records)?;
    let (time, event): (Vec<f64>, Vec<bool>) = records.iter().map(ttfe).unzip();
    let x: Vec<f64> = records.iter().map(|r| f64::from(r.arm.indicator())).collect();
    fit_cox(&SurvivalData::new(&time, &event, &x))
}
