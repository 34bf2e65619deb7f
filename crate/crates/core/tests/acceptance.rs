//! One PASS/FAIL line per acceptance criterion. Run with `--nocapture` to
//! see the lines; the test fails if any criterion does.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use talr_core::affinity_oracle::{AffinityOracle, LabeledData};
use talr_core::dataset::{gaussian_clusters, Standardizer, SynthConfig};
use talr_core::eval::{evaluate, tiebreak_audit};
use talr_core::gradient::{
    batch_objective_and_grad, random_case, run_gradcheck, BackpropPath, FdOptions, ObjectiveSetup,
};
use talr_core::metrics::{
    ap_tie_aware, ap_tie_aware_at_k, build_tie_histogram, dcg_tie_aware, ndcg_tie_aware,
    permutation_average_oracle, RankMetric,
};
use talr_core::relaxed::{
    ap_relaxed, dcg_simplified, harmonic_log_gap, Objective, RelaxOptions, SoftHistogramSet,
};
use talr_core::train::{train, TrainConfig, TrainHistory, TrainSet, ValidationSet};
use talr_core::{
    counting_sort_rank, AffinityLevels, BinaryCodebook, HashModel, LevelSet, Matrix,
    TieGroupedRanking,
};

const EXACT_TOL: f64 = 1e-12;
const EXACT_RUNTIME: Duration = Duration::from_secs(10);
const LINEAR_SLACK: f64 = 1.3;
const FD_TOL: f64 = 1e-4;
const FD_RUNTIME: Duration = Duration::from_secs(60);
const BACKPROP_TOL: f64 = 1e-10;
const LEARN_AP_TARGET: f64 = 0.90;
const LEARN_AP_GAIN: f64 = 0.25;
const LEARN_NDCG_TARGET: f64 = 0.85;
const LEARN_RUNTIME: Duration = Duration::from_secs(300);
const SATURATION: f64 = 0.99;
const CONTINUATION_GAP: f64 = 0.03;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn random_pm1(rng: &mut ChaCha8Rng, n: usize, bits: usize) -> BinaryCodebook {
    let data = (0..n * bits)
        .map(|_| if rng.random_bool(0.5) { 1i8 } else { -1 })
        .collect();
    BinaryCodebook::from_pm1(&Matrix::from_vec(n, bits, data).unwrap()).unwrap()
}

fn tie_aware_exactness() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.random_range(1..=8);
        let nv = rng.random_range(2..=3u32);
        let bits = rng.random_range(1..=4);
        let dist: Vec<u32> = (0..n).map(|_| rng.random_range(0..=bits as u32)).collect();
        let values: Vec<u32> = (0..n).map(|_| rng.random_range(0..nv)).collect();
        if values.iter().all(|&v| v == 0) {
            continue;
        }
        let aff = AffinityLevels::new(LevelSet::range(nv - 1), values).unwrap();
        let ranking = TieGroupedRanking::from_distances(&dist, bits).unwrap();
        let h = build_tie_histogram(&ranking, &aff).unwrap();
        let oracle = |m: RankMetric, k: Option<usize>| {
            permutation_average_oracle(&ranking, &aff, m, k).unwrap()
        };
        let mut gaps = vec![
            (ap_tie_aware::<f64>(&h).unwrap() - oracle(RankMetric::Ap, None)).abs(),
            (dcg_tie_aware(&h, None) - oracle(RankMetric::Dcg, None)).abs(),
            (ndcg_tie_aware(&h, &aff, None).unwrap() - oracle(RankMetric::Ndcg, None)).abs(),
        ];
        for k in 1..=n {
            gaps.push(
                (ap_tie_aware_at_k::<f64>(&h, k).unwrap() - oracle(RankMetric::Ap, Some(k))).abs(),
            );
        }
        worst = gaps.into_iter().fold(worst, f64::max);
        checked += 1;
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= EXACT_TOL && elapsed < EXACT_RUNTIME,
        format!("1000 instances, max |tie-aware - oracle| = {worst:.2e}, {elapsed:.2?}"),
    )
}

fn median_eval_time(n: usize, bits: usize, rng: &mut ChaCha8Rng) -> f64 {
    let db = random_pm1(rng, n, bits);
    let q = random_pm1(rng, 64, bits);
    let rel: Vec<bool> = (0..n).map(|_| rng.random_bool(0.1)).collect();
    let aff = AffinityLevels::binary(&rel);
    let rows = |_| Ok(aff.clone());
    let mut times: Vec<f64> = (0..7)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(evaluate(&q, &db, &rows, Some(5000)).unwrap());
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[times.len() / 2]
}

fn counting_sort_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut mismatches = 0;
    for trial in 0..100 {
        let bits = if trial % 2 == 0 { 12 } else { 32 };
        let db = random_pm1(&mut rng, 5000, bits);
        let q = random_pm1(&mut rng, 1, bits);
        let ranking = counting_sort_rank(q.row(0), &db).unwrap();
        let dist = db.distances(q.row(0)).unwrap();
        let mut order: Vec<usize> = (0..5000).collect();
        order.sort_by_key(|&i| (dist[i], i));
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); bits + 1];
        for i in order {
            groups[dist[i] as usize].push(i);
        }
        for (d, g) in groups.iter().enumerate() {
            let mut ours = ranking.group(d).to_vec();
            ours.sort_unstable();
            if &ours != g {
                mismatches += 1;
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let times: Vec<f64> = pool.install(|| {
        [10_000, 20_000, 40_000]
            .iter()
            .map(|&n| median_eval_time(n, 32, &mut rng))
            .collect()
    });
    let ratios: Vec<f64> = times.windows(2).map(|w| w[1] / w[0] / 2.0).collect();
    let linear = ratios
        .iter()
        .all(|r| (1.0 / LINEAR_SLACK..=LINEAR_SLACK).contains(r));
    verdict(
        mismatches == 0 && linear,
        format!(
            "100 databases, {mismatches} mismatched groups; time per doubling / 2 = {:.3}, {:.3}",
            ratios[0], ratios[1]
        ),
    )
}

fn gradient_fidelity() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst = 0.0f64;
    let mut adjacent = 0;
    for obj in Objective::ALL {
        let setup = ObjectiveSetup::new(obj);
        for _ in 0..10 {
            let out = run_gradcheck(
                &mut rng,
                &setup,
                16,
                8,
                16,
                3,
                1.0,
                10,
                &FdOptions::default(),
            )
            .unwrap();
            if out.kink_adjacent {
                adjacent += 1;
                continue;
            }
            worst = worst.max(out.report.max_rel_error);
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= FD_TOL && elapsed < FD_RUNTIME,
        format!(
            "4 objectives x 10 batches, max relative error {worst:.2e}, {adjacent} kink-adjacent skipped, {elapsed:.2?}"
        ),
    )
}

fn backprop_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for m in 2..=16 {
        for nv in 2..=4 {
            for obj in Objective::ALL {
                let case = random_case(&mut rng, m, 8, 6, nv, 1.0).unwrap();
                let run = |path| {
                    let mut setup = ObjectiveSetup::new(obj);
                    setup.path = path;
                    batch_objective_and_grad(&case.model, &case.features, &case.affinities, &setup)
                        .unwrap()
                };
                let (Some(naive), Some(matrix), Some(fused)) = (
                    run(BackpropPath::Naive),
                    run(BackpropPath::Matrix),
                    run(BackpropPath::Fused),
                ) else {
                    continue;
                };
                let reference = naive.jacobian.d_phi.as_slice();
                for fast in [&matrix, &fused] {
                    for (a, b) in fast.jacobian.d_phi.as_slice().iter().zip(reference) {
                        worst = worst.max((a - b).abs());
                    }
                }
                cases += 1;
            }
        }
    }
    verdict(
        worst <= BACKPROP_TOL,
        format!("{cases} batches, M 2..16, |V| 2..4, max |matrix or fused - naive| = {worst:.2e}"),
    )
}

fn approximation_bound() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut violations = 0;
    for _ in 0..10_000 {
        let before = rng.random_range(1..5000u64);
        let n = rng.random_range(1..=100u64);
        if harmonic_log_gap(before, n) > n as f64 / (2.0 * (before * before) as f64) {
            violations += 1;
        }
    }
    let mut singleton_err = 0.0f64;
    for _ in 0..200 {
        let bits = 40;
        let n = rng.random_range(1..=30);
        let mut slots: Vec<u32> = (0..=bits as u32).collect();
        for i in 0..n {
            let j = rng.random_range(i..slots.len());
            slots.swap(i, j);
        }
        let mut rel: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        rel[0] = true;
        let aff = AffinityLevels::binary(&rel);
        let h = build_tie_histogram(
            &TieGroupedRanking::from_distances(&slots[..n], bits).unwrap(),
            &aff,
        )
        .unwrap();
        let exact: f64 = ap_tie_aware(&h).unwrap();
        let relaxed = ap_relaxed(
            &SoftHistogramSet::<f64>::from_hard(&h),
            h.total_positives() as f64,
            &RelaxOptions::default(),
        )
        .unwrap();
        singleton_err = singleton_err.max((relaxed - exact).abs());
    }
    verdict(
        violations == 0 && singleton_err <= EXACT_TOL,
        format!(
            "{violations} bound violations in 10^4 pairs; singleton-bin error {singleton_err:.2e}"
        ),
    )
}

fn jensen_bound() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let levels = LevelSet::new(vec![0, 1, 2, 5, 10]).unwrap();
    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    for _ in 0..1000 {
        let n = rng.random_range(1..80);
        let bits = rng.random_range(1..16);
        let dist: Vec<u32> = (0..n).map(|_| rng.random_range(0..=bits as u32)).collect();
        let values = (0..n)
            .map(|_| levels.value(rng.random_range(0..levels.len())))
            .collect();
        let aff = AffinityLevels::new(levels.clone(), values).unwrap();
        let h = build_tie_histogram(
            &TieGroupedRanking::from_distances(&dist, bits).unwrap(),
            &aff,
        )
        .unwrap();
        let exact = dcg_tie_aware(&h, None);
        let lower = dcg_simplified(&SoftHistogramSet::<f64>::from_hard(&h)).unwrap();
        if lower > exact + 1e-9 * exact.max(1.0) {
            violations += 1;
        }
        tightest = tightest.min(exact - lower);
    }
    verdict(
        violations == 0,
        format!("1000 instances, {violations} violations, min DCG_T - DCG_s = {tightest:.2e}"),
    )
}

struct SyntheticRun {
    initial: f64,
    history: TrainHistory,
}

fn synthetic_run(seed: u64, cfg: TrainConfig, threshold: bool) -> SyntheticRun {
    let synth = gaussian_clusters(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let std = Standardizer::fit(&synth.features, &synth.split.train).unwrap();
    let data = LabeledData {
        features: std.apply(&synth.features).unwrap(),
        labels: Some(synth.labels),
    };
    let oracle = if threshold {
        let (q, v) = AffinityOracle::default_thresholds();
        AffinityOracle::threshold(&data.features, &synth.split.train, q, v, seed).unwrap()
    } else {
        AffinityOracle::single_label()
    };
    let cfg = TrainConfig { seed, ..cfg };
    let val = ValidationSet::new(
        &data,
        &oracle,
        &synth.split.query,
        &synth.split.database,
        cfg.metric(),
    )
    .unwrap();
    let mut model = HashModel::<f64>::random(
        16,
        32,
        false,
        cfg.alpha,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap();
    let set = TrainSet {
        data: &data,
        rows: &synth.split.train,
        oracle: &oracle,
    };
    let history = train(&mut model, &set, &cfg, Some(&val), &mut |_| {}).unwrap();
    SyntheticRun {
        initial: history.initial_validation.unwrap(),
        history,
    }
}

fn end_to_end_learning() -> Verdict {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let start = Instant::now();
    let (ap_init, ap_final, ndcg_final) = pool.install(|| {
        let ap: Vec<SyntheticRun> = (0..5)
            .map(|s| synthetic_run(s, TrainConfig::default(), false))
            .collect();
        let ndcg_cfg = TrainConfig {
            objective: Objective::DcgSimplified,
            ..TrainConfig::default()
        };
        let ndcg: Vec<SyntheticRun> = (0..5)
            .map(|s| synthetic_run(s, ndcg_cfg.clone(), true))
            .collect();
        let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        (
            mean(ap.iter().map(|r| r.initial).collect()),
            mean(
                ap.iter()
                    .map(|r| r.history.final_validation().unwrap())
                    .collect(),
            ),
            mean(
                ndcg.iter()
                    .map(|r| r.history.final_validation().unwrap())
                    .collect(),
            ),
        )
    });
    let elapsed = start.elapsed();
    let pass = ap_final >= LEARN_AP_TARGET
        && ap_final - ap_init >= LEARN_AP_GAIN
        && ndcg_final >= LEARN_NDCG_TARGET
        && elapsed < LEARN_RUNTIME;
    verdict(
        pass,
        format!(
            "5 seeds: AP_T {ap_init:.4} -> {ap_final:.4} (target {LEARN_AP_TARGET}, gain {:.4}); NDCG_T {ndcg_final:.4} (target {LEARN_NDCG_TARGET}); {elapsed:.2?} single-threaded",
            ap_final - ap_init
        ),
    )
}

fn tiebreak_audit_properties() -> Verdict {
    let mut ranges = [0.0f64; 2];
    let mut within = 1.0f64;
    for seed in 0..5 {
        let synth = gaussian_clusters(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let feats = Standardizer::fit(&synth.features, &synth.split.train)
            .unwrap()
            .apply(&synth.features)
            .unwrap();
        let labels = &synth.labels;
        let rows = |q: usize| {
            let ql = &labels[synth.split.query[q]];
            Ok(AffinityLevels::binary(
                &synth
                    .split
                    .database
                    .iter()
                    .map(|&j| &labels[j] == ql)
                    .collect::<Vec<_>>(),
            ))
        };
        for (slot, bits) in [12usize, 48].into_iter().enumerate() {
            let model = HashModel::<f64>::random(
                bits,
                32,
                false,
                1.0,
                &mut ChaCha8Rng::seed_from_u64(seed * 100 + bits as u64),
            )
            .unwrap();
            let q = model
                .encode(&feats.select_rows(&synth.split.query))
                .unwrap();
            let db = model
                .encode(&feats.select_rows(&synth.split.database))
                .unwrap();
            let (_, summary) = tiebreak_audit(&q, &db, &rows, RankMetric::Ap, seed).unwrap();
            ranges[slot] += summary.mean_range / 5.0;
            within = within.min(summary.fraction_within);
        }
    }
    verdict(
        within == 1.0 && ranges[1] <= ranges[0],
        format!(
            "fraction within [pessimistic, optimistic] {within}; mean range 12 bits {:.4}, 48 bits {:.4}",
            ranges[0], ranges[1]
        ),
    )
}

fn continuation() -> Verdict {
    let cfg = TrainConfig {
        alpha: 5.0,
        alpha_growth: 1.5,
        alpha_cap: 100.0,
        ..TrainConfig::default()
    };
    let mut worst_code = f64::INFINITY;
    let mut worst_gap = 0.0f64;
    for seed in 0..5 {
        let run = synthetic_run(seed, cfg.clone(), false);
        let last = run.history.epochs.last().unwrap();
        worst_code = worst_code.min(last.mean_abs_code);
        worst_gap = worst_gap.max((last.objective - last.exact_metric).abs());
    }
    verdict(
        worst_code >= SATURATION && worst_gap <= CONTINUATION_GAP,
        format!(
            "5 seeds: min final mean |code| {worst_code:.4}, max |relaxed - exact| {worst_gap:.4}"
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("tie-aware exactness", tie_aware_exactness),
        (
            "counting-sort equivalence and linear eval",
            counting_sort_equivalence,
        ),
        ("gradient fidelity", gradient_fidelity),
        ("matrix backprop equivalence", backprop_equivalence),
        ("approximation-error bound", approximation_bound),
        ("Jensen lower bound", jensen_bound),
        ("end-to-end learning", end_to_end_learning),
        ("tie-break audit", tiebreak_audit_properties),
        ("continuation", continuation),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        println!(
            "criterion {} {}: {} ({})",
            i + 1,
            name,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        if !v.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
