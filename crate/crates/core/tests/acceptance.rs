//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cwotce_core::analysis::{arm_labels, default_measure, Method};
use cwotce_core::capacity::{build_measure, Interaction, MeasureSpec};
use cwotce_core::comparators::{fit_cox, SurvivalData};
use cwotce_core::encoding::auc_burden;
use cwotce_core::harness::{self, mean_tie_rates, run_sweep, summarize, SweepConfig};
use cwotce_core::inference::{analyze_cbi, cbi, shapley_attribution};
use cwotce_core::simulator::{draw_frailty, scenario};
use cwotce_core::{encode_cohort, simulate_trial, Arm, EncodingConfig, EncodingMode, SimConfig};

const BRADLEY: (f64, f64) = (0.025, 0.075);

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn sweep(scenarios: &[&str], methods: &[Method], reps: usize, n: Option<usize>) -> harness::Report {
    let cfg = SweepConfig {
        scenarios: scenarios.iter().map(|s| s.to_string()).collect(),
        methods: methods.to_vec(),
        reps,
        b: 199,
        alpha: 0.05,
        workers: 1,
        n_per_arm: n,
        theta: None,
        record_timing: false,
        sim: SimConfig::default(),
    };
    let out = run_sweep(&cfg).expect("sweep runs");
    summarize(&out.raw, cfg.alpha)
}

fn in_band(rate: f64) -> bool {
    rate >= BRADLEY.0 && rate <= BRADLEY.1
}

fn type_one_error() -> Outcome {
    let report = sweep(&["NULL-S"], &Method::ALL, 1000, Some(250));
    let rates: Vec<String> = report
        .summary
        .iter()
        .map(|r| format!("{}={:.3}", r.method, r.rejection_rate))
        .collect();
    Outcome {
        pass: report.summary.len() == 5 && report.summary.iter().all(|r| in_band(r.rejection_rate)),
        detail: format!("NULL-S R=1000 n=250: {}", rates.join(" ")),
    }
}

fn uniform_ordering() -> Outcome {
    let report = sweep(&["UNI-L"], &[Method::CwotBlock6, Method::Cox], 200, Some(250));
    let c = report.rate("UNI-L", Method::CwotBlock6).unwrap();
    let x = report.rate("UNI-L", Method::Cox).unwrap();
    let diff = 100.0 * (c - x);
    Outcome {
        pass: diff >= 15.0,
        detail: format!("UNI-L cwot {c:.3} cox {x:.3} diff {diff:+.1} pp (need >= +15)"),
    }
}

fn correlation_advantage() -> Outcome {
    let out = run_sweep(&SweepConfig {
        scenarios: vec!["COR-H".into(), "COR-I".into()],
        methods: vec![Method::CwotBlock6, Method::Wr],
        reps: 200,
        record_timing: false,
        ..SweepConfig::default()
    })
    .expect("sweep runs");
    let report = summarize(&out.raw, 0.05);
    let ties = mean_tie_rates(&out.raw);
    let c = report.rate("COR-H", Method::CwotBlock6).unwrap();
    let w = report.rate("COR-H", Method::Wr).unwrap();
    let diff = 100.0 * (c - w);
    let (t4, t0) = (ties["COR-H"], ties["COR-I"]);
    Outcome {
        pass: diff >= 15.0 && t4 > t0,
        detail: format!(
            "COR-H cwot {c:.3} wr {w:.3} diff {diff:+.1} pp (need >= +15); WR tie rate theta=4 {t4:.3} vs theta=0.01 {t0:.3}"
        ),
    }
}

fn encoding_sensitivity() -> Outcome {
    let encodings = [Method::CwotBlock6, Method::CwotCount5];
    let dis = sweep(&["DIS-SO"], &encodings, 200, None);
    let null = sweep(&["NULL-S"], &encodings, 1000, Some(250));
    let b = dis.rate("DIS-SO", Method::CwotBlock6).unwrap();
    let c = dis.rate("DIS-SO", Method::CwotCount5).unwrap();
    let diff = 100.0 * (b - c);
    let nb = null.rate("NULL-S", Method::CwotBlock6).unwrap();
    let nc = null.rate("NULL-S", Method::CwotCount5).unwrap();
    Outcome {
        pass: diff >= 25.0 && in_band(nb) && in_band(nc),
        detail: format!(
            "DIS-SO block6 {b:.3} count5 {c:.3} diff {diff:+.1} pp (need >= +25); NULL-S block6 {nb:.3} count5 {nc:.3}"
        ),
    }
}

fn shapley_calibration() -> Outcome {
    let cfg = SimConfig::default();
    let measure = default_measure(EncodingMode::Count5);
    let mut sums_ok = true;
    let mut share = |id: &str, parts: [usize; 2]| -> f64 {
        let spec = scenario(id).unwrap();
        let enc = EncodingConfig::new(EncodingMode::Count5, spec.tau);
        let mut total = 0.0;
        for rep in 0..20 {
            let records = simulate_trial(&spec, &cfg, rep);
            let profiles = encode_cohort(&records, &enc).unwrap();
            let a = shapley_attribution(&profiles, &arm_labels(&records), &measure).unwrap();
            let sum: f64 = a.components.iter().map(|c| c.percentage).sum();
            sums_ok &= (sum - 100.0).abs() <= 1e-6;
            total += parts.iter().map(|&k| a.components[k].percentage).sum::<f64>();
        }
        total / 20.0
    };
    // count5 components: survival, event-free, count, biomarker, alive
    let mortality = share("CAL-D", [0, 4]);
    let soft = share("DIS-SO", [2, 3]);
    Outcome {
        pass: (40.0..=60.0).contains(&mortality) && soft >= 60.0 && sums_ok,
        detail: format!(
            "CAL-D survival+alive {mortality:.1}% (need 40-60); DIS-SO count+biomarker {soft:.1}% (need >= 60); sums to 100: {sums_ok}"
        ),
    }
}

fn duality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = 0;
    let mut rejections = 0;
    let datasets = 10_000;
    for d in 0..datasets {
        let n_t = rng.random_range(3..=30);
        let n_c = rng.random_range(3..=30);
        let levels = rng.random_range(2..=5);
        let shift = rng.random_range(0..=2);
        let scores: Vec<f64> = (0..n_t + n_c)
            .map(|i| {
                let bump = if i < n_t { shift } else { 0 };
                f64::from(rng.random_range(0..levels) + bump)
            })
            .collect();
        let labels: Vec<bool> = (0..n_t + n_c).map(|i| i < n_t).collect();
        let b = [199, 299, 999][d % 3];
        for alpha in [0.05, 0.10] {
            let r = analyze_cbi(&scores, &labels, b, alpha, d as u64).unwrap();
            let rejects = r.p_value < alpha;
            let excludes = r.ci_lo > 0.5 || r.ci_hi < 0.5;
            rejections += usize::from(rejects);
            if rejects != excludes || rejects != r.excludes_null {
                violations += 1;
            }
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!("{datasets} datasets x 2 alphas, {rejections} rejections, {violations} violations"),
    }
}

fn moebius(spec: &MeasureSpec) -> (Vec<f64>, Vec<(usize, usize, f64)>) {
    let mut single = spec.weights.clone();
    let mut pairs = Vec::new();
    for it in &spec.interactions {
        single[it.i - 1] -= 0.5 * it.value;
        single[it.j - 1] -= 0.5 * it.value;
        pairs.push((it.i - 1, it.j - 1, it.value));
    }
    (single, pairs)
}

/// Choquet integral as the Möbius sum over all subsets of `m(S) * min_S y`.
fn brute_choquet(single: &[f64], pairs: &[(usize, usize, f64)], y: &[f64]) -> f64 {
    let k = y.len();
    let mut total = 0.0;
    for mask in 1u32..(1 << k) {
        let members: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
        let mass = match members.as_slice() {
            [a] => single[*a],
            [a, b] => pairs
                .iter()
                .filter(|(i, j, _)| (i, j) == (a, b) || (j, i) == (a, b))
                .map(|p| p.2)
                .sum(),
            _ => 0.0,
        };
        let min = members.iter().map(|&i| y[i]).fold(f64::INFINITY, f64::min);
        total += mass * min;
    }
    total
}

fn choquet_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut measures = 0;
    let mut max_err: f64 = 0.0;
    let mut property_failures = 0;
    while measures < 1000 {
        let k = rng.random_range(2..=6);
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mut interactions = Vec::new();
        for i in 1..=k {
            for j in i + 1..=k {
                if rng.random_bool(0.4) {
                    interactions.push(Interaction { i, j, value: rng.random_range(-0.1..0.1) });
                }
            }
        }
        let spec = MeasureSpec { k, weights, interactions };
        let Ok(m) = build_measure(&spec) else { continue };
        measures += 1;
        let (single, pairs) = moebius(&spec);
        for _ in 0..20 {
            let mut y: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            if rng.random_bool(0.3) {
                y[rng.random_range(0..k)] = y[0];
            }
            let c = m.choquet(&y).unwrap();
            max_err = max_err.max((c - brute_choquet(&single, &pairs, &y)).abs());
            let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let bounded = c >= lo - 1e-12 && c <= hi + 1e-12;
            let t: f64 = rng.random();
            let idem = (m.choquet(&vec![t; k]).unwrap() - t).abs() <= 1e-12;
            let mut z = y.clone();
            let bump = rng.random_range(0..k);
            z[bump] = (z[bump] + rng.random_range(0.0..0.5)).min(1.0);
            let mono = m.choquet(&z).unwrap() >= c - 1e-12;
            if !(bounded && idem && mono) {
                property_failures += 1;
            }
        }
    }
    Outcome {
        pass: max_err <= 1e-12 && property_failures == 0,
        detail: format!(
            "{measures} measures x 20 profiles, max |sorted - brute| {max_err:.1e}, property failures {property_failures}"
        ),
    }
}

fn all_pairs(t: &[f64], c: &[f64]) -> f64 {
    let mut twice = 0u64;
    for x in t {
        for y in c {
            twice += if x > y { 2 } else if x == y { 1 } else { 0 };
        }
    }
    twice as f64 / (2 * t.len() * c.len()) as f64
}

fn cbi_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mismatches = 0;
    for d in 0..1000 {
        let n_t = rng.random_range(1..=60);
        let n_c = rng.random_range(1..=60);
        let tied = d % 2 == 0;
        let mut draw = || {
            if tied {
                f64::from(rng.random_range(0..4)) / 4.0
            } else {
                rng.random::<f64>()
            }
        };
        let t: Vec<f64> = (0..n_t).map(|_| draw()).collect();
        let c: Vec<f64> = (0..n_c).map(|_| draw()).collect();
        if cbi(&t, &c).unwrap() != all_pairs(&t, &c) {
            mismatches += 1;
        }
    }
    let t: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
    let c: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
    let start = Instant::now();
    let big = cbi(&t, &c).unwrap();
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: mismatches == 0 && secs < 1.0 && (0.0..=1.0).contains(&big),
        detail: format!("1000 datasets, {mismatches} mismatches; n=1e5 per arm in {secs:.3} s"),
    }
}

fn auc_exactness() -> Outcome {
    let a = auc_burden(&[6.0, 12.0, 18.0], 36.0).unwrap();
    let b = auc_burden(&[30.0, 33.0, 35.0], 36.0).unwrap();
    Outcome {
        pass: a == 72.0 && b == 10.0,
        detail: format!("{{6,12,18}} -> {a}, {{30,33,35}} -> {b}"),
    }
}

/// Efron partial log-likelihood evaluated directly.
fn efron_loglik(time: &[f64], event: &[bool], x: &[f64], beta: f64) -> f64 {
    let mut times: Vec<f64> = time.iter().zip(event).filter(|(_, &e)| e).map(|(&t, _)| t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut ll = 0.0;
    for &t in &times {
        let deaths: Vec<usize> = (0..time.len()).filter(|&i| event[i] && time[i] == t).collect();
        let risk: f64 = (0..time.len()).filter(|&i| time[i] >= t).map(|i| (beta * x[i]).exp()).sum();
        let tied: f64 = deaths.iter().map(|&i| (beta * x[i]).exp()).sum();
        let d = deaths.len() as f64;
        for (r, &i) in deaths.iter().enumerate() {
            ll += beta * x[i] - (risk - r as f64 / d * tied).ln();
        }
    }
    ll
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-11 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

fn cox_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut datasets = 0;
    let mut max_err: f64 = 0.0;
    while datasets < 10 {
        let n = rng.random_range(4..=8);
        let time: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(1..=5))).collect();
        let event: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        let x: Vec<f64> = (0..n).map(|i| f64::from(u8::from(i % 2 == 0))).collect();
        let Ok(fit) = fit_cox(&SurvivalData::new(&time, &event, &x)) else { continue };
        if !fit.converged || fit.beta.abs() > 5.0 {
            continue;
        }
        let direct = golden_max(|b| efron_loglik(&time, &event, &x, b), -10.0, 10.0);
        max_err = max_err.max((fit.beta - direct).abs());
        datasets += 1;
    }
    let mut max_sym: f64 = 0.0;
    for s in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + s);
        let half = rng.random_range(2..=4);
        let base: Vec<(f64, bool)> = (0..half)
            .map(|_| (f64::from(rng.random_range(1..=4)), rng.random_bool(0.7) || s == 0))
            .collect();
        let time: Vec<f64> = base.iter().chain(&base).map(|p| p.0).collect();
        let event: Vec<bool> = base.iter().chain(&base).map(|p| p.1).collect();
        let x: Vec<f64> = (0..2 * half).map(|i| f64::from(u8::from(i < half))).collect();
        if let Ok(fit) = fit_cox(&SurvivalData::new(&time, &event, &x)) {
            max_sym = max_sym.max(fit.beta.abs());
        }
    }
    Outcome {
        pass: max_err <= 1e-4 && max_sym < 1e-10,
        detail: format!("10 datasets max |beta - direct| {max_err:.1e}; symmetric max |beta| {max_sym:.1e}"),
    }
}

fn calibration() -> Outcome {
    let cfg = SimConfig::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for id in ["EVT-D", "NULL-S", "CAL-D"] {
        let spec = scenario(id).unwrap().with_n(10_000);
        let records = simulate_trial(&spec, &cfg, 0);
        let controls: Vec<_> = records.iter().filter(|r| r.arm == Arm::Control).collect();
        let n = controls.len() as f64;
        let p_hat = controls.iter().filter(|r| r.death_observed).count() as f64 / n;
        let p = spec.control_mortality;
        let half = 2.5758 * (p * (1.0 - p) / n).sqrt();
        ok &= (p_hat - p).abs() <= half;
        parts.push(format!("{:.0}%: {:.4} (+/-{half:.4})", p * 100.0, p_hat));
    }
    for theta in [0.01, 1.0, 4.0] {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws: Vec<f64> = (0..100_000).map(|_| draw_frailty(theta, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        ok &= (mean - 1.0).abs() <= 0.02 && (var / theta - 1.0).abs() <= 0.02;
        parts.push(format!("theta {theta}: mean {mean:.4} var {var:.4}"));
    }
    Outcome { pass: ok, detail: parts.join("; ") }
}

fn determinism() -> Outcome {
    let raw_with = |workers: usize| {
        let cfg = SweepConfig {
            scenarios: vec!["NULL-S".into(), "UNI-L".into(), "ROB-I".into()],
            reps: 4,
            workers,
            n_per_arm: Some(60),
            record_timing: false,
            ..SweepConfig::default()
        };
        let mut buf = Vec::new();
        harness::write_raw_csv(&mut buf, &run_sweep(&cfg).unwrap().raw).unwrap();
        buf
    };
    let one = raw_with(1);
    let four = raw_with(4);
    Outcome {
        pass: one == four,
        detail: format!("raw CSV {} bytes, 1 vs 4 workers identical: {}", one.len(), one == four),
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("type I error", type_one_error),
        ("uniform-effect ordering", uniform_ordering),
        ("correlation advantage", correlation_advantage),
        ("encoding sensitivity", encoding_sensitivity),
        ("attribution calibration", shapley_calibration),
        ("p-value / interval duality", duality),
        ("Choquet oracle", choquet_oracle),
        ("CBI exactness and speed", cbi_exactness),
        ("AUC burden", auc_exactness),
        ("Cox oracle", cox_oracle),
        ("simulator calibration", calibration),
        ("sweep determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let mark = if outcome.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!outcome.pass);
        println!(
            "{mark} {:>2} {name}: {} [{:.1}s]",
            i + 1,
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
