use proptest::prelude::*;

use cwotce_core::capacity::{build_measure, shapley_values, FuzzyMeasure, Interaction, MeasureSpec};
use cwotce_core::encoding::{encode_burden, midrank_survival};
use cwotce_core::inference::{cbi, twice_midranks};
use cwotce_core::{encode_cohort, Arm, EncodingConfig, EncodingMode, PatientRecord};

fn measure_spec() -> impl Strategy<Value = MeasureSpec> {
    (2usize..=6)
        .prop_flat_map(|k| {
            let pairs: Vec<(usize, usize)> =
                (1..=k).flat_map(|i| (i + 1..=k).map(move |j| (i, j))).collect();
            let n_pairs = pairs.len();
            (
                Just(k),
                prop::collection::vec(0.05f64..1.0, k),
                prop::collection::vec(prop::option::of(-0.08f64..0.08), n_pairs),
                Just(pairs),
            )
        })
        .prop_map(|(k, raw, values, pairs)| {
            let total: f64 = raw.iter().sum();
            MeasureSpec {
                k,
                weights: raw.iter().map(|w| w / total).collect(),
                interactions: pairs
                    .into_iter()
                    .zip(values)
                    .filter_map(|((i, j), v)| v.map(|value| Interaction { i, j, value }))
                    .collect(),
            }
        })
        .prop_filter("monotone", |s| build_measure(s).is_ok())
}

fn measure_and_profile() -> impl Strategy<Value = (MeasureSpec, FuzzyMeasure, Vec<f64>)> {
    measure_spec().prop_flat_map(|spec| {
        let m = build_measure(&spec).unwrap();
        let k = spec.k;
        (Just(spec), Just(m), prop::collection::vec(0.0f64..=1.0, k))
    })
}

fn brute_cbi(t: &[f64], c: &[f64]) -> f64 {
    let twice: usize = t
        .iter()
        .flat_map(|x| c.iter().map(move |y| if x > y { 2 } else { usize::from(x == y) }))
        .sum();
    twice as f64 / (2 * t.len() * c.len()) as f64
}

fn coarse(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u8..6).prop_map(|v| f64::from(v) / 5.0), n)
}

proptest! {
    #[test]
    fn shapley_round_trip(spec in measure_spec()) {
        let m = build_measure(&spec).unwrap();
        for (s, w) in shapley_values(&m).iter().zip(&spec.weights) {
            prop_assert!((s - w).abs() < 1e-9);
        }
    }

    #[test]
    fn choquet_idempotent((_, m, y) in measure_and_profile()) {
        let t = y[0];
        prop_assert!((m.choquet(&vec![t; m.k()]).unwrap() - t).abs() < 1e-12);
    }

    #[test]
    fn choquet_bounded((_, m, y) in measure_and_profile()) {
        let c = m.choquet(&y).unwrap();
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(c >= lo - 1e-12 && c <= hi + 1e-12);
    }

    #[test]
    fn choquet_monotone((_, m, y) in measure_and_profile(), idx in 0usize..6, bump in 0.0f64..0.5) {
        let mut z = y.clone();
        let i = idx % z.len();
        z[i] = (z[i] + bump).min(1.0);
        prop_assert!(m.choquet(&z).unwrap() >= m.choquet(&y).unwrap() - 1e-12);
    }

    #[test]
    fn choquet_tie_order_irrelevant((_, m, y) in measure_and_profile(), a in 0usize..6, b in 0usize..6) {
        // Forcing a tie at nearby values must approach the same limit from either side.
        let (a, b) = (a % y.len(), b % y.len());
        let mut tied = y.clone();
        tied[b] = tied[a];
        let mut above = tied.clone();
        above[b] = (above[b] + 1e-9).min(1.0);
        let mut below = tied.clone();
        below[b] = (below[b] - 1e-9).max(0.0);
        let c = m.choquet(&tied).unwrap();
        prop_assert!((c - m.choquet(&above).unwrap()).abs() < 1e-8);
        prop_assert!((c - m.choquet(&below).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn capacity_monotone_over_subsets(spec in measure_spec()) {
        let m = build_measure(&spec).unwrap();
        let full = m.full_set();
        for s in 0..=full {
            for i in 0..m.k() {
                prop_assert!(m.capacity_of(s | 1 << i) >= m.capacity_of(s) - 1e-12);
            }
        }
        prop_assert_eq!(m.capacity_of(0), 0.0);
        prop_assert!((m.capacity_of(full) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cbi_matches_all_pairs(t in coarse(1..=40), c in coarse(1..=40)) {
        prop_assert_eq!(cbi(&t, &c).unwrap(), brute_cbi(&t, &c));
    }

    #[test]
    fn cbi_is_antisymmetric(t in coarse(1..=40), c in coarse(1..=40)) {
        let sum = cbi(&t, &c).unwrap() + cbi(&c, &t).unwrap();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn twice_midranks_sum(v in coarse(1..=50)) {
        let n = v.len() as u64;
        prop_assert_eq!(twice_midranks(&v).iter().sum::<u64>(), n * (n + 1));
    }

    #[test]
    fn midrank_survival_in_unit_interval(v in coarse(1..=50)) {
        let s = midrank_survival(&v);
        prop_assert!(s.iter().all(|x| (0.0..=1.0).contains(x)));
        // Mean of P(X > x) + P(X = x)/2 over the sample is exactly 1/2.
        prop_assert!((s.iter().sum::<f64>() / s.len() as f64 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_burden_ranks_above_any_event(mut burdens in prop::collection::vec(0.0f64..30.0, 1..30)) {
        burdens.push(0.0);
        let top = encode_burden(&burdens, 0.0);
        for &b in burdens.iter().filter(|&&b| b > 0.0) {
            prop_assert!(encode_burden(&burdens, b) < top);
        }
    }

    #[test]
    fn cohort_profiles_in_unit_cube(cohort in cohort_strategy()) {
        for mode in [EncodingMode::Block6, EncodingMode::Count5] {
            let profiles = encode_cohort(&cohort, &EncodingConfig::new(mode, 3.0)).unwrap();
            prop_assert_eq!(profiles.len(), cohort.len());
            for p in &profiles {
                prop_assert_eq!(p.len(), mode.k());
                prop_assert!(p.values().iter().all(|x| (0.0..=1.0).contains(x)));
            }
        }
    }

    #[test]
    fn count5_shares_components_with_block6(cohort in cohort_strategy()) {
        let b = encode_cohort(&cohort, &EncodingConfig::new(EncodingMode::Block6, 3.0)).unwrap();
        let c = encode_cohort(&cohort, &EncodingConfig::new(EncodingMode::Count5, 3.0)).unwrap();
        for (pb, pc) in b.iter().zip(&c) {
            let (pb, pc) = (pb.values(), pc.values());
            prop_assert_eq!(pb[0], pc[0]);
            prop_assert_eq!(pb[1], pc[1]);
            prop_assert_eq!(pb[4], pc[3]);
            prop_assert_eq!(pb[5], pc[4]);
        }
    }
}

fn patient_strategy() -> impl Strategy<Value = (bool, f64, bool, Vec<f64>, f64)> {
    (
        any::<bool>(),
        0.1f64..=3.0,
        any::<bool>(),
        prop::collection::vec(0.0f64..1.0, 0..5),
        -2.0f64..2.0,
    )
}

fn cohort_strategy() -> impl Strategy<Value = Vec<PatientRecord>> {
    prop::collection::vec(patient_strategy(), 2..25).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (trt, fu, dead, fracs, bio))| {
                let mut events: Vec<f64> = fracs.iter().map(|f| (f * fu).max(1e-3)).collect();
                events.sort_by(f64::total_cmp);
                PatientRecord {
                    id: format!("p{i}"),
                    arm: if i == 1 || (i > 1 && trt) { Arm::Treatment } else { Arm::Control },
                    followup_time: fu,
                    death_observed: dead,
                    event_times: events,
                    biomarker: (!dead).then_some(bio),
                }
            })
            .collect()
    })
}
