//! 2-additive fuzzy measures and the discrete Choquet integral.
//!
//! A measure is stored in Möbius form: one mass per component and one mass
//! per unordered pair. The capacity of a set `A` is the sum of all masses
//! whose support lies inside `A`.
//!
//! User-facing weights are read as Shapley importances, so a specification
//! `(w, I)` becomes `m({k}) = w_k - 0.5 * sum_l I_kl` and `m({k,l}) = I_kl`.
//! `shapley_values` inverts that map.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const NORMALIZATION_TOL: f64 = 1e-9;
const MONOTONICITY_TOL: f64 = -1e-12;

/// Largest supported component count (subsets are `u64` bitmasks).
pub const MAX_COMPONENTS: usize = 32;

/// Tag written into reports so the weight convention is never ambiguous.
pub const WEIGHT_CONVENTION: &str = "weights are Shapley importances: m({k}) = w_k - 0.5*sum_l I_kl";

#[derive(Debug, Error, PartialEq)]
pub enum CapacityError {
    #[error("weights sum to {sum}, expected 1")]
    Normalization { sum: f64 },
    #[error("monotonicity violated at component {component} (1-based): slack {slack:e}")]
    Monotonicity { component: usize, slack: f64 },
    #[error("profile has {got} entries, measure has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid measure specification: {0}")]
    InvalidSpec(String),
}

/// One pairwise interaction, 1-based as in the JSON file format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// Importance weights plus sparse pairwise interactions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub k: usize,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
}

impl MeasureSpec {
    pub fn additive(weights: Vec<f64>) -> Self {
        Self {
            k: weights.len(),
            weights,
            interactions: Vec::new(),
        }
    }

    /// Six-component block configuration: survival, event-free, AUC burden,
    /// last event, biomarker, alive.
    pub fn default_block6() -> Self {
        Self {
            k: 6,
            weights: vec![0.25, 0.20, 0.18, 0.12, 0.15, 0.10],
            interactions: vec![
                Interaction { i: 1, j: 6, value: -0.05 },
                Interaction { i: 1, j: 2, value: -0.03 },
                Interaction { i: 3, j: 4, value: 0.03 },
                Interaction { i: 5, j: 6, value: 0.02 },
            ],
        }
    }

    /// Five-component count configuration: survival, event-free, event
    /// count, biomarker, alive. The count carries the whole recurrent block
    /// weight (0.18 + 0.12).
    pub fn default_count5() -> Self {
        Self {
            k: 5,
            weights: vec![0.25, 0.20, 0.30, 0.15, 0.10],
            interactions: vec![
                Interaction { i: 1, j: 5, value: -0.05 },
                Interaction { i: 1, j: 2, value: -0.03 },
                Interaction { i: 4, j: 5, value: 0.02 },
            ],
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    fn check_shape(&self) -> Result<(), CapacityError> {
        let bad = |msg: String| Err(CapacityError::InvalidSpec(msg));
        if self.k < 2 || self.k > MAX_COMPONENTS {
            return bad(format!("k = {} outside 2..={MAX_COMPONENTS}", self.k));
        }
        if self.weights.len() != self.k {
            return bad(format!("{} weights for k = {}", self.weights.len(), self.k));
        }
        if let Some(w) = self
            .weights
            .iter()
            .find(|w| !w.is_finite() || **w < 0.0 || **w > 1.0)
        {
            return bad(format!("weight {w} outside [0, 1]"));
        }
        let mut seen = vec![false; self.k * self.k];
        for int in &self.interactions {
            if int.i == 0 || int.j == 0 || int.i > self.k || int.j > self.k {
                return bad(format!("pair ({}, {}) outside 1..={}", int.i, int.j, self.k));
            }
            if int.i == int.j {
                return bad(format!("self-pair ({}, {})", int.i, int.j));
            }
            if !int.value.is_finite() || int.value.abs() > 1.0 {
                return bad(format!("interaction {} outside [-1, 1]", int.value));
            }
            let (a, b) = (int.i.min(int.j) - 1, int.i.max(int.j) - 1);
            if std::mem::replace(&mut seen[a * self.k + b], true) {
                return bad(format!("pair ({}, {}) listed twice", a + 1, b + 1));
            }
        }
        Ok(())
    }
}

/// A patient's encoded outcome profile, every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProfileVector(Vec<f64>);

impl ProfileVector {
    pub fn new(values: Vec<f64>) -> Option<Self> {
        values
            .iter()
            .all(|v| (0.0..=1.0).contains(v))
            .then_some(Self(values))
    }

    pub(crate) fn new_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)), "{values:?}");
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A validated 2-additive capacity in Möbius form.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyMeasure {
    k: usize,
    singletons: Vec<f64>,
    /// Symmetric `k x k` matrix of pair masses with zero diagonal.
    pairs: Vec<f64>,
}

/// Build and validate a measure from importance weights and interactions.
pub fn build_measure(spec: &MeasureSpec) -> Result<FuzzyMeasure, CapacityError> {
    spec.check_shape()?;
    let sum: f64 = spec.weights.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(CapacityError::Normalization { sum });
    }
    let k = spec.k;
    let mut pairs = vec![0.0; k * k];
    for int in &spec.interactions {
        let (a, b) = (int.i - 1, int.j - 1);
        pairs[a * k + b] = int.value;
        pairs[b * k + a] = int.value;
    }
    let singletons = (0..k)
        .map(|a| spec.weights[a] - 0.5 * pairs[a * k..(a + 1) * k].iter().sum::<f64>())
        .collect();
    FuzzyMeasure::from_moebius(k, singletons, pairs)
}

impl FuzzyMeasure {
    /// Validate raw Möbius masses. `pairs` is a symmetric `k x k` matrix.
    pub fn from_moebius(
        k: usize,
        singletons: Vec<f64>,
        pairs: Vec<f64>,
    ) -> Result<Self, CapacityError> {
        if !(2..=MAX_COMPONENTS).contains(&k) || singletons.len() != k || pairs.len() != k * k {
            return Err(CapacityError::InvalidSpec(format!(
                "Möbius arrays do not match k = {k}"
            )));
        }
        let measure = Self {
            k,
            singletons,
            pairs,
        };
        let total = measure.total_mass();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(CapacityError::Normalization { sum: total });
        }
        if let Some((component, slack)) = measure
            .monotonicity_slack()
            .into_iter()
            .enumerate()
            .find(|(_, s)| *s < MONOTONICITY_TOL)
        {
            return Err(CapacityError::Monotonicity {
                component: component + 1,
                slack,
            });
        }
        Ok(measure)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn singleton(&self, a: usize) -> f64 {
        self.singletons[a]
    }

    pub fn pair(&self, a: usize, b: usize) -> f64 {
        self.pairs[a * self.k + b]
    }

    pub fn singletons(&self) -> &[f64] {
        &self.singletons
    }

    fn total_mass(&self) -> f64 {
        let upper: f64 = (0..self.k)
            .flat_map(|a| (a + 1..self.k).map(move |b| (a, b)))
            .map(|(a, b)| self.pair(a, b))
            .sum();
        self.singletons.iter().sum::<f64>() + upper
    }

    /// `m({k}) + sum_l min(0, m({k,l}))` per component; a 2-additive measure
    /// is monotone iff every entry is non-negative.
    pub fn monotonicity_slack(&self) -> Vec<f64> {
        (0..self.k)
            .map(|a| {
                self.singletons[a]
                    + self.pairs[a * self.k..(a + 1) * self.k]
                        .iter()
                        .map(|m| m.min(0.0))
                        .sum::<f64>()
            })
            .collect()
    }

    /// Capacity of the subset encoded as a bitmask (bit `a` = component `a`).
    pub fn capacity_of(&self, subset: u64) -> f64 {
        let members: Vec<usize> = (0..self.k).filter(|a| subset >> a & 1 == 1).collect();
        let mut mu = 0.0;
        for (pos, &a) in members.iter().enumerate() {
            mu += self.singletons[a];
            for &b in &members[pos + 1..] {
                mu += self.pair(a, b);
            }
        }
        mu
    }

    /// Capacity of a subset given as 0-based component indices.
    pub fn capacity_of_indices(&self, subset: &[usize]) -> f64 {
        self.capacity_of(subset.iter().fold(0u64, |m, &a| m | 1 << a))
    }

    pub fn full_set(&self) -> u64 {
        if self.k == 64 {
            u64::MAX
        } else {
            (1u64 << self.k) - 1
        }
    }

    /// Discrete Choquet integral via sorted increments.
    pub fn choquet(&self, y: &[f64]) -> Result<f64, CapacityError> {
        if y.len() != self.k {
            return Err(CapacityError::Dimension {
                expected: self.k,
                got: y.len(),
            });
        }
        Ok(self.choquet_unchecked(y))
    }

    pub(crate) fn choquet_unchecked(&self, y: &[f64]) -> f64 {
        let k = self.k;
        let mut order = [0usize; MAX_COMPONENTS];
        let order = &mut order[..k];
        for (a, slot) in order.iter_mut().enumerate() {
            *slot = a;
        }
        order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));

        let mut in_set = [true; MAX_COMPONENTS];
        let mut mu = 1.0;
        let mut prev = 0.0;
        let mut acc = 0.0;
        for &a in order.iter() {
            acc += (y[a] - prev) * mu;
            prev = y[a];
            // Drop `a` from the upper set.
            in_set[a] = false;
            mu -= self.singletons[a];
            let row = &self.pairs[a * k..(a + 1) * k];
            for (b, m) in row.iter().enumerate() {
                if in_set[b] {
                    mu -= m;
                }
            }
        }
        acc
    }

    /// `phi_k = m({k}) + 0.5 * sum_l m({k,l})`.
    pub fn shapley_values(&self) -> Vec<f64> {
        (0..self.k)
            .map(|a| {
                self.singletons[a]
                    + 0.5 * self.pairs[a * self.k..(a + 1) * self.k].iter().sum::<f64>()
            })
            .collect()
    }

    /// Interaction list (1-based) for reporting.
    pub fn moebius_pairs(&self) -> Vec<Interaction> {
        let mut out = Vec::new();
        for a in 0..self.k {
            for b in a + 1..self.k {
                let value = self.pair(a, b);
                if value != 0.0 {
                    out.push(Interaction { i: a + 1, j: b + 1, value });
                }
            }
        }
        out
    }
}

pub fn capacity_of(measure: &FuzzyMeasure, subset: u64) -> f64 {
    measure.capacity_of(subset)
}

pub fn choquet(measure: &FuzzyMeasure, y: &[f64]) -> Result<f64, CapacityError> {
    measure.choquet(y)
}

pub fn shapley_values(measure: &FuzzyMeasure) -> Vec<f64> {
    measure.shapley_values()
}

/// Outcome of one named check in a measure validation report.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Everything `validate-measure` prints.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub k: usize,
    pub convention: &'static str,
    pub moebius_singletons: Vec<f64>,
    pub moebius_pairs: Vec<Interaction>,
    pub shapley_values: Vec<f64>,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Evaluate every invariant of the measure a specification produces. A spec
/// that fails to build still yields a report, with the build error recorded.
pub fn validate_spec(spec: &MeasureSpec) -> ValidationReport {
    let mut checks = Vec::new();
    let measure = match build_measure(spec) {
        Ok(m) => m,
        Err(e) => {
            checks.push(Check {
                name: "build",
                pass: false,
                detail: e.to_string(),
            });
            return ValidationReport {
                k: spec.k,
                convention: WEIGHT_CONVENTION,
                moebius_singletons: Vec::new(),
                moebius_pairs: Vec::new(),
                shapley_values: Vec::new(),
                checks,
            };
        }
    };
    let total = measure.total_mass();
    checks.push(Check {
        name: "normalization",
        pass: (total - 1.0).abs() <= NORMALIZATION_TOL,
        detail: format!("total Möbius mass {total:.12}"),
    });
    let slack = measure.monotonicity_slack();
    let worst = slack.iter().copied().fold(f64::INFINITY, f64::min);
    checks.push(Check {
        name: "monotonicity",
        pass: worst >= MONOTONICITY_TOL,
        detail: format!("minimum slack {worst:.6}"),
    });
    let empty = measure.capacity_of(0);
    checks.push(Check {
        name: "empty_set_zero",
        pass: empty == 0.0,
        detail: format!("mu(empty) = {empty}"),
    });
    let full = measure.capacity_of(measure.full_set());
    checks.push(Check {
        name: "full_set_one",
        pass: (full - 1.0).abs() <= NORMALIZATION_TOL,
        detail: format!("mu(full) = {full:.12}"),
    });
    let phi = measure.shapley_values();
    let max_err = phi
        .iter()
        .zip(&spec.weights)
        .map(|(p, w)| (p - w).abs())
        .fold(0.0, f64::max);
    checks.push(Check {
        name: "shapley_round_trip",
        pass: max_err <= NORMALIZATION_TOL,
        detail: format!("max |phi - w| = {max_err:e}"),
    });
    ValidationReport {
        k: measure.k,
        convention: WEIGHT_CONVENTION,
        moebius_singletons: measure.singletons.clone(),
        moebius_pairs: measure.moebius_pairs(),
        shapley_values: phi,
        checks,
    }
}
