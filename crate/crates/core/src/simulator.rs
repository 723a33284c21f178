//! Two-arm trial generator with a shared Gamma frailty.
//!
//! Each patient carries one frailty draw `Z` (mean 1, variance `theta`) that
//! multiplies the death hazard, the first-event hazard and the recurrent
//! event rate, and shifts the biomarker mean by `-kappa * (Z - 1)`.
//! Treatment acts through `hr_d`, `hr_e`, `rr` and `delta`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::encoding::{Arm, PatientRecord};
use crate::rng::{self, StreamRng};

/// Frailty variances at or below this are treated as no frailty.
pub const FRAILTY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Censoring {
    /// End of study only.
    Admin,
    /// Additional exponential dropout.
    Heavy,
    /// Dropout hazard proportional to the frailty.
    Informative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Special {
    None,
    /// The death hazard ratio applies only after a delay.
    DelayedNph,
    /// Death and first-event effects are reversed before a changepoint.
    Temporal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: String,
    pub group: String,
    pub hr_d: f64,
    pub hr_e: f64,
    pub rr: f64,
    pub delta: f64,
    pub theta: f64,
    pub n_per_arm: usize,
    pub tau: f64,
    pub control_mortality: f64,
    pub censoring: Censoring,
    pub special: Special,
}

impl ScenarioSpec {
    pub fn is_null(&self) -> bool {
        self.group == "Null"
    }

    pub fn with_n(mut self, n_per_arm: usize) -> Self {
        self.n_per_arm = n_per_arm;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.hr_d > 0.0 && self.hr_e > 0.0 && self.rr > 0.0) {
            return Err(format!("{}: ratios must be positive", self.id));
        }
        if self.theta.is_nan() || self.theta < 0.0 {
            return Err(format!("{}: theta must be non-negative", self.id));
        }
        if !(self.control_mortality > 0.0 && self.control_mortality < 1.0) {
            return Err(format!("{}: control mortality outside (0, 1)", self.id));
        }
        if self.n_per_arm < 2 {
            return Err(format!("{}: need at least 2 patients per arm", self.id));
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(format!("{}: tau must be positive", self.id));
        }
        Ok(())
    }
}

/// Parameters the scenario table leaves open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub base_seed: u64,
    /// Standalone first nonfatal event hazard per year.
    pub lambda_e0: f64,
    /// Recurrent event rate per year.
    pub lambda_r0: f64,
    pub biomarker_mean: f64,
    pub biomarker_sd: f64,
    /// Frailty-biomarker coupling in standardized units.
    pub kappa: f64,
    /// Dropout hazard per year in the heavy regime.
    pub dropout_rate: f64,
    /// Dropout hazard per year per unit frailty in the informative regime.
    pub informative_link: f64,
    pub delay_years: f64,
    pub changepoint_years: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        // 40% of control patients reach the standalone first event by year
        // 3, and heavy dropout removes 40% before year 3.
        let forty_pct_in_three_years = -(0.6f64).ln() / 3.0;
        Self {
            base_seed: 20240101,
            lambda_e0: forty_pct_in_three_years,
            lambda_r0: 0.5,
            biomarker_mean: 0.0,
            biomarker_sd: 1.0,
            kappa: 0.3,
            dropout_rate: forty_pct_in_three_years,
            informative_link: 0.15,
            delay_years: 0.5,
            changepoint_years: 1.0,
        }
    }
}

/// Exponential death hazard with `P(T <= tau) = mortality` at unit frailty.
pub fn calibrate_death_rate(control_mortality: f64, tau: f64) -> f64 {
    -(1.0 - control_mortality).ln() / tau
}

/// Death hazard whose frailty-marginal mortality by `tau` equals the
/// target: `1 - (1 + theta * lambda * tau)^(-1/theta) = mortality`.
pub fn calibrate_death_rate_frailty(control_mortality: f64, tau: f64, theta: f64) -> f64 {
    if theta <= FRAILTY_EPS {
        calibrate_death_rate(control_mortality, tau)
    } else {
        ((1.0 - control_mortality).powf(-theta) - 1.0) / (theta * tau)
    }
}

/// Gamma(1/theta, rate 1/theta) frailty; exactly 1 for `theta <= 1e-6`.
pub fn draw_frailty<R: Rng + ?Sized>(theta: f64, rng: &mut R) -> f64 {
    if theta <= FRAILTY_EPS {
        return 1.0;
    }
    Gamma::new(1.0 / theta, theta)
        .expect("positive gamma parameters")
        .sample(rng)
}

fn unit_exp<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// Time to event under hazard `early` on `[0, change)` and `late` after.
fn piecewise_exponential(e: f64, early: f64, late: f64, change: f64) -> f64 {
    let mass_early = early * change;
    if e < mass_early {
        e / early
    } else if late > 0.0 {
        change + (e - mass_early) / late
    } else {
        f64::INFINITY
    }
}

fn hazard_time(
    e: f64,
    base: f64,
    ratio: f64,
    arm: Arm,
    special: Special,
    affected: bool,
    cfg: &SimConfig,
) -> f64 {
    if base <= 0.0 {
        return f64::INFINITY;
    }
    if !arm.is_treatment() {
        return e / base;
    }
    match (special, affected) {
        (Special::DelayedNph, true) => piecewise_exponential(e, base, base * ratio, cfg.delay_years),
        (Special::Temporal, true) => {
            piecewise_exponential(e, base / ratio, base * ratio, cfg.changepoint_years)
        }
        _ => e / (base * ratio),
    }
}

/// One patient given the frailty draw.
pub fn simulate_patient<R: Rng + ?Sized>(
    scenario: &ScenarioSpec,
    cfg: &SimConfig,
    arm: Arm,
    z: f64,
    id: String,
    rng: &mut R,
) -> PatientRecord {
    let tau = scenario.tau;
    let treated = arm.is_treatment();
    let lambda_d = calibrate_death_rate_frailty(scenario.control_mortality, tau, scenario.theta);

    let death = hazard_time(
        unit_exp(rng),
        lambda_d * z,
        scenario.hr_d,
        arm,
        scenario.special,
        matches!(scenario.special, Special::DelayedNph | Special::Temporal),
        cfg,
    );
    let first = hazard_time(
        unit_exp(rng),
        cfg.lambda_e0 * z,
        scenario.hr_e,
        arm,
        scenario.special,
        scenario.special == Special::Temporal,
        cfg,
    );
    let dropout_rate = match scenario.censoring {
        Censoring::Admin => 0.0,
        Censoring::Heavy => cfg.dropout_rate,
        Censoring::Informative => cfg.informative_link * z,
    };
    let dropout = if dropout_rate > 0.0 {
        unit_exp(rng) / dropout_rate
    } else {
        f64::INFINITY
    };

    let end = death.min(dropout).min(tau);
    let death_observed = death <= dropout && death <= tau;

    let rate = cfg.lambda_r0 * z * if treated { scenario.rr } else { 1.0 };
    let mut events = Vec::new();
    if rate > 0.0 {
        let mut t = 0.0;
        loop {
            t += unit_exp(rng) / rate;
            if t > end {
                break;
            }
            events.push(t);
        }
    }
    if first <= end {
        let pos = events.partition_point(|&e| e < first);
        events.insert(pos, first);
    }

    let noise: f64 = StandardNormal.sample(rng);
    let biomarker = (!death_observed).then(|| {
        let shift = if treated { scenario.delta } else { 0.0 };
        cfg.biomarker_mean + shift - cfg.kappa * (z - 1.0) + cfg.biomarker_sd * noise
    });

    PatientRecord {
        id,
        arm,
        followup_time: end,
        death_observed,
        event_times: events,
        biomarker,
    }
}

/// Stream for one replication of one scenario.
pub fn replication_rng(cfg: &SimConfig, scenario_id: &str, replication: u64) -> StreamRng {
    rng::stream(cfg.base_seed, &[rng::label_hash(scenario_id), replication])
}

/// `n_per_arm` control patients followed by `n_per_arm` treated patients.
pub fn simulate_trial(scenario: &ScenarioSpec, cfg: &SimConfig, replication: u64) -> Vec<PatientRecord> {
    let mut rng = replication_rng(cfg, &scenario.id, replication);
    let n = scenario.n_per_arm;
    let mut out = Vec::with_capacity(2 * n);
    for (a, arm) in [Arm::Control, Arm::Treatment].into_iter().enumerate() {
        for i in 0..n {
            let z = draw_frailty(scenario.theta, &mut rng);
            let id = format!("p{:05}", a * n + i + 1);
            out.push(simulate_patient(scenario, cfg, arm, z, id, &mut rng));
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn row(
    id: &str,
    group: &str,
    hr_d: f64,
    hr_e: f64,
    rr: f64,
    delta: f64,
    theta: f64,
    n: usize,
    mortality: f64,
    censoring: Censoring,
    special: Special,
) -> ScenarioSpec {
    ScenarioSpec {
        id: id.to_string(),
        group: group.to_string(),
        hr_d,
        hr_e,
        rr,
        delta,
        theta,
        n_per_arm: n,
        tau: 3.0,
        control_mortality: mortality,
        censoring,
        special,
    }
}

/// The twenty main scenarios. ROB-N and ROB-T use the uniform-effect
/// hazard ratios with a delayed or reversed-then-beneficial pattern.
pub fn scenario_registry() -> Vec<ScenarioSpec> {
    use Censoring::*;
    use Special::None as Plain;
    vec![
        row("NULL-S", "Null", 1.00, 1.00, 1.00, 0.00, 1.0, 500, 0.15, Admin, Plain),
        row("NULL-T", "Null", 0.85, 1.18, 0.85, 0.15, 1.0, 500, 0.15, Admin, Plain),
        row("NULL-M", "Null", 1.00, 1.00, 0.80, 0.25, 1.0, 500, 0.15, Admin, Plain),
        row("CAL-B", "Calib", 0.80, 0.80, 0.80, 0.20, 1.0, 500, 0.15, Admin, Plain),
        row("CAL-D", "Calib", 0.50, 1.00, 1.00, 0.00, 1.0, 500, 0.50, Admin, Plain),
        row("UNI-M", "Uniform", 0.90, 0.85, 0.90, 0.15, 1.0, 500, 0.15, Admin, Plain),
        row("UNI-L", "Uniform", 0.75, 0.70, 0.75, 0.30, 1.0, 500, 0.15, Admin, Plain),
        row("DIS-MP", "Discord", 1.20, 0.60, 0.65, 0.35, 1.0, 500, 0.15, Admin, Plain),
        row("DIS-DO", "Discord", 0.70, 1.00, 1.00, 0.00, 1.0, 500, 0.15, Admin, Plain),
        row("DIS-SO", "Discord", 1.00, 1.00, 0.60, 0.50, 1.0, 500, 0.15, Admin, Plain),
        row("DIS-RV", "Discord", 0.75, 1.15, 1.10, -0.10, 1.0, 500, 0.15, Admin, Plain),
        row("COR-I", "Struct", 0.75, 0.70, 0.75, 0.30, 0.01, 500, 0.15, Admin, Plain),
        row("COR-H", "Struct", 0.75, 0.70, 0.75, 0.30, 4.0, 500, 0.15, Admin, Plain),
        row("EVT-D", "Struct", 0.75, 0.70, 0.75, 0.30, 1.0, 500, 0.03, Admin, Plain),
        row("ROB-C", "Robust", 0.75, 0.70, 0.75, 0.30, 1.0, 500, 0.15, Heavy, Plain),
        row("ROB-N", "Robust", 0.75, 0.70, 0.75, 0.30, 1.0, 500, 0.15, Admin, Special::DelayedNph),
        row("ROB-T", "Robust", 0.75, 0.70, 0.75, 0.30, 1.0, 500, 0.15, Admin, Special::Temporal),
        row("ROB-I", "Robust", 0.75, 0.70, 0.75, 0.30, 1.0, 500, 0.15, Informative, Plain),
        row("SS-S", "Size", 0.75, 0.70, 0.75, 0.30, 1.0, 100, 0.15, Admin, Plain),
        row("SS-L", "Size", 0.75, 0.70, 0.75, 0.30, 1.0, 1000, 0.15, Admin, Plain),
    ]
}

pub fn scenario(id: &str) -> Option<ScenarioSpec> {
    scenario_registry().into_iter().find(|s| s.id == id)
}
