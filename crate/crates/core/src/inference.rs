//! Choquet Benefit Index, permutation inference, dual confidence interval
//! and component attribution.
//!
//! Any two-sample statistic of the form "wins minus losses over all
//! treatment x control pairs" under an antisymmetric pair kernel reduces to
//! a sum of per-subject row scores over the treatment arm, because pairs
//! inside one arm cancel. The permutation engine works on those integer row
//! scores, so each relabelling costs `O(n)` and the comparison with the
//! observed statistic is exact integer arithmetic. Mann-Whitney is the
//! special case `kernel = sign(x_i - x_j)`, whose row scores are
//! `2 * midrank - (n + 1)`.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::capacity::{CapacityError, FuzzyMeasure, ProfileVector};
use crate::rng;

/// Smallest permutation count accepted by `permutation_test`.
pub const MIN_PERMUTATIONS: usize = 19;
/// Neutral value substituted for a component during attribution.
pub const NEUTRAL_SCORE: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum InferenceError {
    #[error("both groups must be nonempty")]
    EmptyGroup,
    #[error("labels must include both arms")]
    DegenerateLabels,
    #[error("{got} scores for {labels} labels")]
    LengthMismatch { got: usize, labels: usize },
    #[error("b = {b} permutations cannot reach alpha = {alpha}")]
    InsufficientPermutations { b: usize, alpha: f64 },
    #[error("need at least {MIN_PERMUTATIONS} permutations, got {0}")]
    TooFewPermutations(usize),
    #[error("alpha {0} outside (0, 1)")]
    InvalidAlpha(f64),
    #[error("exhaustive enumeration limited to 24 subjects, got {0}")]
    TooLargeForEnumeration(usize),
    #[error("no component has a positive attribution drop: {drops:?}")]
    ZeroAttribution { drops: Vec<f64> },
    #[error(transparent)]
    Capacity(#[from] CapacityError),
}

/// Twice the 1-based midrank of every value, as an integer.
pub fn twice_midranks(values: &[f64]) -> Vec<u64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j share (i + 1 + j) / 2.
        let twice = (i + 1 + j) as u64;
        for &idx in &order[i..j] {
            out[idx] = twice;
        }
        i = j;
    }
    out
}

/// Row scores `sum_j sign(x_i - x_j)` over the pooled sample.
pub fn rank_row_scores(values: &[f64]) -> Vec<i64> {
    let n1 = values.len() as i64 + 1;
    twice_midranks(values)
        .into_iter()
        .map(|r| r as i64 - n1)
        .collect()
}

fn arm_sizes(labels: &[bool]) -> (usize, usize) {
    let n_trt = labels.iter().filter(|&&l| l).count();
    (n_trt, labels.len() - n_trt)
}

fn net_of(rows: &[i64], labels: &[bool]) -> i64 {
    rows.iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum()
}

/// `P(trt > ctrl) + 0.5 * P(trt = ctrl)` via pooled midranks.
pub fn cbi(scores_trt: &[f64], scores_ctrl: &[f64]) -> Result<f64, InferenceError> {
    if scores_trt.is_empty() || scores_ctrl.is_empty() {
        return Err(InferenceError::EmptyGroup);
    }
    let (n1, n2) = (scores_trt.len(), scores_ctrl.len());
    let pooled: Vec<f64> = scores_trt.iter().chain(scores_ctrl).copied().collect();
    let twice_rank_sum: u64 = twice_midranks(&pooled)[..n1].iter().sum();
    // 2U = 2 * rank_sum - n1 (n1 + 1)
    let twice_u = twice_rank_sum - (n1 * (n1 + 1)) as u64;
    Ok(twice_u as f64 / (2 * n1 * n2) as f64)
}

/// Permutation null distribution of a pairwise net statistic.
#[derive(Debug, Clone)]
pub struct PermutationTest {
    /// Observed wins minus losses over treatment x control pairs.
    pub net_obs: i64,
    /// Null nets, one per relabelling, in replicate order.
    pub null_nets: Vec<i64>,
    pub n_trt: usize,
    pub n_ctrl: usize,
    pub p_value: f64,
}

impl PermutationTest {
    fn pair_scale(&self) -> f64 {
        (2 * self.n_trt * self.n_ctrl) as f64
    }

    /// Observed deviation from 0.5 on the probability scale.
    pub fn d_obs(&self) -> f64 {
        self.net_obs as f64 / self.pair_scale()
    }

    pub fn null_deviations(&self) -> Vec<f64> {
        let scale = self.pair_scale();
        self.null_nets.iter().map(|&v| v as f64 / scale).collect()
    }

    pub fn b(&self) -> usize {
        self.null_nets.len()
    }
}

fn p_from_count(count: usize, b: usize) -> f64 {
    (1 + count) as f64 / (b + 1) as f64
}

/// Permutation test on precomputed row scores. Replicate `r` shuffles with
/// the stream keyed by `(seed, r)`, so results do not depend on threading.
pub fn permutation_test_rows(
    rows: &[i64],
    labels: &[bool],
    b: usize,
    seed: u64,
) -> Result<PermutationTest, InferenceError> {
    if rows.len() != labels.len() {
        return Err(InferenceError::LengthMismatch {
            got: rows.len(),
            labels: labels.len(),
        });
    }
    if b < MIN_PERMUTATIONS {
        return Err(InferenceError::TooFewPermutations(b));
    }
    let (n_trt, n_ctrl) = arm_sizes(labels);
    if n_trt == 0 || n_ctrl == 0 {
        return Err(InferenceError::DegenerateLabels);
    }
    let net_obs = net_of(rows, labels);
    let null_nets: Vec<i64> = (0..b)
        .into_par_iter()
        .with_min_len(16)
        .map(|r| {
            let mut rng = rng::stream(seed, &[r as u64]);
            let mut perm: Vec<usize> = (0..labels.len()).collect();
            perm.shuffle(&mut rng);
            perm.iter()
                .zip(rows)
                .filter(|(&src, _)| labels[src])
                .map(|(_, row)| row)
                .sum()
        })
        .collect();
    let count = null_nets
        .iter()
        .filter(|v| v.abs() >= net_obs.abs())
        .count();
    Ok(PermutationTest {
        net_obs,
        p_value: p_from_count(count, b),
        null_nets,
        n_trt,
        n_ctrl,
    })
}

/// Two-sided permutation test of `CBI = 0.5` on pooled scores.
pub fn permutation_test(
    scores: &[f64],
    labels: &[bool],
    b: usize,
    seed: u64,
) -> Result<PermutationTest, InferenceError> {
    if scores.len() != labels.len() {
        return Err(InferenceError::LengthMismatch {
            got: scores.len(),
            labels: labels.len(),
        });
    }
    permutation_test_rows(&rank_row_scores(scores), labels, b, seed)
}

/// Exact p-value over every assignment of the treatment labels
/// (`#{|D| >= |D_obs|} / C(n, n_trt)`).
pub fn exact_permutation_p(scores: &[f64], labels: &[bool]) -> Result<f64, InferenceError> {
    let n = scores.len();
    if n != labels.len() {
        return Err(InferenceError::LengthMismatch {
            got: n,
            labels: labels.len(),
        });
    }
    if n > 24 {
        return Err(InferenceError::TooLargeForEnumeration(n));
    }
    let (n_trt, n_ctrl) = arm_sizes(labels);
    if n_trt == 0 || n_ctrl == 0 {
        return Err(InferenceError::DegenerateLabels);
    }
    let rows = rank_row_scores(scores);
    let obs = net_of(&rows, labels).abs();
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n_trt {
            continue;
        }
        let net: i64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| rows[i]).sum();
        total += 1;
        hits += u64::from(net.abs() >= obs);
    }
    Ok(hits as f64 / total as f64)
}

/// 1-based ascending rank `r` of the null quantile `Q` such that
/// `p < alpha  <=>  |D_obs| > Q`.
///
/// With `c = #{|D_perm| >= |D_obs|}`, the p-value is `(1 + c) / (b + 1)`.
/// If `c_max` is the largest count that still rejects, rejection is exactly
/// "fewer than `c_max + 1` null values reach `|D_obs|`", i.e. `|D_obs|`
/// exceeds the `(c_max + 1)`-th largest, which is rank `b - c_max`.
pub fn critical_rank(b: usize, alpha: f64) -> Result<usize, InferenceError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(InferenceError::InvalidAlpha(alpha));
    }
    // Same floating-point expression as the p-value itself.
    let c_max = (0..=b)
        .take_while(|&c| p_from_count(c, b) < alpha)
        .last()
        .ok_or(InferenceError::InsufficientPermutations { b, alpha })?;
    Ok(b - c_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftInterval {
    pub lo: f64,
    pub hi: f64,
    /// Null quantile `Q` of `|D|`.
    pub half_width: f64,
}

/// Shift-pivot interval `cbi -/+ Q`, clipped to `[0, 1]`.
pub fn ci_invert(
    cbi_obs: f64,
    null_deviations: &[f64],
    alpha: f64,
) -> Result<ShiftInterval, InferenceError> {
    let b = null_deviations.len();
    let r = critical_rank(b, alpha)?;
    let mut abs: Vec<f64> = null_deviations.iter().map(|d| d.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let q = abs[r - 1];
    Ok(ShiftInterval {
        lo: (cbi_obs - q).max(0.0),
        hi: (cbi_obs + q).min(1.0),
        half_width: q,
    })
}

/// `CBI / (1 - CBI)`, `+inf` at `CBI = 1`.
pub fn odds(cbi: f64) -> f64 {
    if cbi >= 1.0 {
        f64::INFINITY
    } else {
        cbi / (1.0 - cbi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CbiResult {
    pub cbi: f64,
    pub cor: f64,
    pub p_value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub cor_ci_lo: f64,
    pub cor_ci_hi: f64,
    pub b: usize,
    pub alpha: f64,
    /// `|D_obs| > Q`, the interval's exclusion of 0.5.
    pub excludes_null: bool,
}

impl CbiResult {
    pub fn rejects(&self) -> bool {
        self.p_value < self.alpha
    }
}

/// `(COR, (COR_lo, COR_hi))` from a CBI result.
pub fn cor_transform(result: &CbiResult) -> (f64, (f64, f64)) {
    (
        odds(result.cbi),
        (odds(result.ci_lo), odds(result.ci_hi)),
    )
}

/// CBI, permutation p-value and dual interval from one null distribution.
pub fn analyze_cbi(
    scores: &[f64],
    labels: &[bool],
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<CbiResult, InferenceError> {
    let test = permutation_test(scores, labels, b, seed)?;
    cbi_result_from_test(&test, alpha)
}

pub(crate) fn cbi_result_from_test(
    test: &PermutationTest,
    alpha: f64,
) -> Result<CbiResult, InferenceError> {
    // Integer nets keep the interval endpoints and the exclusion test exact.
    let r = critical_rank(test.b(), alpha)?;
    let mut abs: Vec<i64> = test.null_nets.iter().map(|v| v.abs()).collect();
    abs.sort_unstable();
    let q = abs[r - 1];
    let scale = test.pair_scale();
    let pairs = (test.n_trt * test.n_ctrl) as i64;
    let on_scale = |net: i64| (net + pairs) as f64 / scale;
    let mut result = CbiResult {
        cbi: on_scale(test.net_obs),
        cor: 0.0,
        p_value: test.p_value,
        ci_lo: on_scale(test.net_obs - q).max(0.0),
        ci_hi: on_scale(test.net_obs + q).min(1.0),
        cor_ci_lo: 0.0,
        cor_ci_hi: 0.0,
        b: test.b(),
        alpha,
        excludes_null: test.net_obs.abs() > q,
    };
    let (cor, (lo, hi)) = cor_transform(&result);
    result.cor = cor;
    result.cor_ci_lo = lo;
    result.cor_ci_hi = hi;
    Ok(result)
}

/// Choquet score of every profile.
pub fn choquet_scores(
    profiles: &[ProfileVector],
    measure: &FuzzyMeasure,
) -> Result<Vec<f64>, InferenceError> {
    profiles
        .iter()
        .map(|p| measure.choquet(p.values()).map_err(InferenceError::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentAttribution {
    pub component: usize,
    /// `delta_full - delta_without_k`, in score units; may be negative.
    pub drop: f64,
    /// Share of the positive drops, in percent.
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributionResult {
    pub total_effect: f64,
    pub components: Vec<ComponentAttribution>,
}

fn mean_difference(
    profiles: &[ProfileVector],
    labels: &[bool],
    measure: &FuzzyMeasure,
    neutralize: Option<usize>,
) -> Result<f64, InferenceError> {
    let (mut sum_t, mut sum_c) = (0.0, 0.0);
    let (n_t, n_c) = arm_sizes(labels);
    let mut buf = Vec::with_capacity(measure.k());
    for (p, &is_trt) in profiles.iter().zip(labels) {
        buf.clear();
        buf.extend_from_slice(p.values());
        if let Some(k) = neutralize {
            buf[k] = NEUTRAL_SCORE;
        }
        let c = measure.choquet(&buf)?;
        if is_trt {
            sum_t += c;
        } else {
            sum_c += c;
        }
    }
    Ok(sum_t / n_t as f64 - sum_c / n_c as f64)
}

/// Marginal drop in the mean treatment-control Choquet difference when each
/// component is set to 0.5 in every profile. Negative drops are reported but
/// floored at zero for the percentages.
pub fn shapley_attribution(
    profiles: &[ProfileVector],
    labels: &[bool],
    measure: &FuzzyMeasure,
) -> Result<AttributionResult, InferenceError> {
    if profiles.len() != labels.len() {
        return Err(InferenceError::LengthMismatch {
            got: profiles.len(),
            labels: labels.len(),
        });
    }
    let (n_t, n_c) = arm_sizes(labels);
    if n_t == 0 || n_c == 0 {
        return Err(InferenceError::DegenerateLabels);
    }
    let total = mean_difference(profiles, labels, measure, None)?;
    let drops = (0..measure.k())
        .map(|k| mean_difference(profiles, labels, measure, Some(k)).map(|d| total - d))
        .collect::<Result<Vec<_>, _>>()?;
    let positive: f64 = drops.iter().map(|d| d.max(0.0)).sum();
    if positive <= 0.0 {
        return Err(InferenceError::ZeroAttribution { drops });
    }
    Ok(AttributionResult {
        total_effect: total,
        components: drops
            .into_iter()
            .enumerate()
            .map(|(component, drop)| ComponentAttribution {
                component,
                drop,
                percentage: drop.max(0.0) / positive * 100.0,
            })
            .collect(),
    })
}
