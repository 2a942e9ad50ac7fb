//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test --test acceptance`.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use latticefold::campaign::{
    generate_dataset, pretrain_policy, run_calibrate_campaign, run_dpo_campaign, run_ga_campaign,
    run_sym_campaign, sampled_inventory_median, CampaignConfig,
};
use latticefold::fitness::{fitness, penalty, prefer, FitnessConfig, Verdict};
use latticefold::ga::{run_ga, GaConfig, GA_INVENTORY};
use latticefold::lattice::{free_cells, random_layout, Coord, LatticeLayout, PinKind, CELLS, D4};
use latticefold::neutronics::{
    analytic_kinf, calibrate, solve_pin_grid, BuiltinEvaluator, CountingEvaluator, Evaluator,
    FidelityTier, NeutronicsResult, XsLibrary,
};
use latticefold::policy::{
    dpo_loss, run_online_dpo, target_prompt, DpoConfig, Policy, PolicyParams, PreferencePair,
};
use latticefold::symgen::{run_sym_benchmark, sample_symmetric_layout, SymgenError};

const KINF_TOL: f64 = 1e-6;
const ORACLE_TIME: Duration = Duration::from_secs(1);
const EQUIV_K_TOL: f64 = 1e-10;
const EQUIV_POWER_TOL: f64 = 1e-8;
const EXAMPLE_TOL: f64 = 1e-12;
const GRAD_REL_TOL: f64 = 1e-6;
const NORM_TOL: f64 = 1e-10;
const CALIBRATION_TIME: Duration = Duration::from_secs(120);
const GA_TIME: Duration = Duration::from_secs(180);
const DPO_TIME: Duration = Duration::from_secs(300);
const DPO_FITNESS_CEILING: f64 = 3.0;

struct Outcome {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn high() -> BuiltinEvaluator {
    BuiltinEvaluator::default()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let fuel = XsLibrary::default().fuel;
    let kinf = analytic_kinf(&fuel).unwrap();
    let materials = vec![fuel; CELLS];
    let mask = vec![true; CELLS];
    let mut worst = 0.0f64;
    for m in [1, 2, 4] {
        let cfg = FidelityTier::High.solver_config().with_mesh(m);
        let sol = solve_pin_grid(&materials, &mask, &cfg).unwrap();
        worst = worst.max((sol.k_eff - kinf).abs());
    }
    let t = start.elapsed();
    check(
        worst < KINF_TOL && t < ORACLE_TIME,
        format!("max |k - k_inf| = {worst:.2e} over m in {{1,2,4}}, {t:.2?}"),
    )
}

fn criterion_2() -> Outcome {
    let ev = high();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut dk, mut dp) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let inv = rng.random_range(0..=40);
        let layout = random_layout(inv, &mut rng).unwrap();
        let base = ev.evaluate(&layout, FidelityTier::High, 0).unwrap();
        let grid = base.pin_power_grid();
        for g in D4::ALL {
            let res = ev
                .evaluate(&layout.transform(g), FidelityTier::High, 0)
                .unwrap();
            dk = dk.max((res.k_eff - base.k_eff).abs());
            let tgrid = res.pin_power_grid();
            for c in Coord::all() {
                let t = g.apply(c);
                dp = dp.max((grid[c.row()][c.col()] - tgrid[t.row()][t.col()]).abs());
            }
        }
    }
    check(
        dk < EQUIV_K_TOL && dp < EQUIV_POWER_TOL,
        format!("50 layouts x 8 transforms: max |dk| = {dk:.2e}, max |dP| = {dp:.2e}"),
    )
}

fn criterion_3() -> Outcome {
    let ev = high();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    let mut smallest = f64::INFINITY;
    for _ in 0..100 {
        let inv = rng.random_range(0..=40);
        let layout = random_layout(inv, &mut rng).unwrap();
        let fuel: Vec<Coord> = free_cells()
            .iter()
            .copied()
            .filter(|c| layout.get(*c) == PinKind::Fuel)
            .collect();
        let mut more = layout.clone();
        more.set(fuel[rng.random_range(0..fuel.len())], PinKind::Gd)
            .unwrap();
        let k0 = ev.evaluate(&layout, FidelityTier::High, 0).unwrap().k_eff;
        let k1 = ev.evaluate(&more, FidelityTier::High, 0).unwrap().k_eff;
        if k1 >= k0 {
            violations += 1;
        }
        smallest = smallest.min(k0 - k1);
    }
    check(
        violations == 0,
        format!("100 pairs: {violations} violations, smallest drop {smallest:.2e}"),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let report = calibrate(&XsLibrary::default(), 100, 1).unwrap();
    let t = start.elapsed();
    let failed: Vec<&str> = report
        .targets
        .iter()
        .filter(|t| !t.passed)
        .map(|t| t.name.as_str())
        .collect();
    let detail: Vec<String> = report.targets.iter().map(|t| t.detail.clone()).collect();
    check(
        failed.is_empty() && t < CALIBRATION_TIME,
        format!(
            "6 levels x 100 samples in {t:.2?}; {}; failed: {failed:?}",
            detail.join("; ")
        ),
    )
}

fn res(k_eff: f64, fq: f64, fdh: f64) -> NeutronicsResult {
    NeutronicsResult {
        k_eff,
        fq,
        fdh,
        pin_power: Vec::new(),
    }
}

fn criterion_5() -> Outcome {
    let cfg = FitnessConfig::default();
    let close = |a: f64, b: f64| (a - b).abs() < EXAMPLE_TOL;
    let examples = [
        close(penalty(1.05, &cfg).unwrap(), 0.0),
        close(penalty(1.10, &cfg).unwrap(), 2.0),
        close(penalty(1.00, &cfg).unwrap(), 2.0),
        close(fitness(&res(1.05, 1.0, 1.0), &cfg).unwrap().total, 1.0),
        close(fitness(&res(1.157, 1.7, 1.5), &cfg).unwrap().total, 9.32),
        close(fitness(&res(1.10, 1.2, 1.1), &cfg).unwrap().total, 3.16),
        prefer(&res(1.05, 1.0, 1.0), &res(1.157, 1.7, 1.5), &cfg) == Verdict::AWins,
    ];
    let examples_ok = examples.iter().filter(|&&ok| ok).count();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut asym = 0;
    for _ in 0..1000 {
        let mut draw = || {
            res(
                rng.random_range(0.9..1.2),
                rng.random_range(1.0..2.5),
                rng.random_range(1.0..2.0),
            )
        };
        let (a, b) = (draw(), draw());
        if prefer(&a, &b, &cfg) != prefer(&b, &a, &cfg).flip() {
            asym += 1;
        }
    }
    check(
        examples_ok == examples.len() && asym == 0,
        format!(
            "{examples_ok}/{} examples within 1e-12; {asym} antisymmetry violations in 1000 pairs",
            examples.len()
        ),
    )
}

struct GaSummary {
    best_fitness: f64,
    calls: usize,
}

fn criterion_6() -> (Outcome, GaSummary) {
    let start = Instant::now();
    let ev = CountingEvaluator::new(high());
    let run = run_ga(&GaConfig::default(), &ev, &FitnessConfig::default()).unwrap();
    let t = start.elapsed();
    let fixed = run
        .log
        .iter()
        .all(|e| e.gd_count == GA_INVENTORY && e.layout.gd_count() == GA_INVENTORY);
    let mut best = f64::INFINITY;
    let mut series = Vec::with_capacity(run.log.len());
    for e in &run.log {
        best = best.min(e.fitness);
        series.push(best);
    }
    let monotone = series.windows(2).all(|w| w[1] <= w[0]);
    let calls = ev.calls();
    let ok = fixed && monotone && calls == 1000 && run.log.len() == 1000 && t < GA_TIME;
    (
        check(
            ok,
            format!(
                "gd_count fixed at 16: {fixed}; best-so-far monotone: {monotone}; {calls} evaluator calls; \
                 best fitness {:.4} (k {:.4}); {t:.2?}",
                run.best.fitness.total, run.best.result.k_eff
            ),
        ),
        GaSummary {
            best_fitness: run.best.fitness.total,
            calls,
        },
    )
}

fn random_params<R: Rng>(rng: &mut R) -> PolicyParams {
    PolicyParams::from_logits((0..264).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap()
}

fn random_pair<R: Rng>(rng: &mut R) -> PreferencePair {
    loop {
        let w = random_layout(rng.random_range(0..=40), rng).unwrap();
        let l = random_layout(rng.random_range(0..=40), rng).unwrap();
        if w != l {
            return PreferencePair {
                winner: w,
                loser: l,
                prompt: target_prompt(),
                winner_fitness: 1.0,
                loser_fitness: 2.0,
            };
        }
    }
}

fn margin(p: &PolicyParams, pair: &PreferencePair) -> f64 {
    p.log_prob(&pair.winner) - p.log_prob(&pair.loser)
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-5;
    let mut worst_rel = 0.0f64;
    let mut margin_failures = 0;
    for _ in 0..100 {
        let params = random_params(&mut rng);
        let pair = random_pair(&mut rng);
        let beta = rng.random_range(0.01..1.0);
        let grad = params.dpo_gradient(&pair, beta);
        for (i, &g) in grad.iter().enumerate() {
            let mut plus = params.clone();
            plus.logits[i] += h;
            let mut minus = params.clone();
            minus.logits[i] -= h;
            let fd = (dpo_loss(&plus, &pair, beta) - dpo_loss(&minus, &pair, beta)) / (2.0 * h);
            let rel = if g == 0.0 {
                fd.abs()
            } else {
                (fd - g).abs() / g.abs()
            };
            worst_rel = worst_rel.max(rel);
        }
        let lr = rng.random_range(0.01..50.0);
        let stepped = params.dpo_step(&pair, beta, lr);
        if margin(&stepped, &pair) <= margin(&params, &pair) {
            margin_failures += 1;
        }
    }

    // 12 live positions; the rest are pinned to fuel with probability 1 in f64.
    let live: Vec<usize> = (0..12).map(|i| i * 21).collect();
    let mut logits = vec![-800.0; 264];
    for &i in &live {
        logits[i] = rng.random_range(-2.0..2.0);
    }
    let params = PolicyParams::from_logits(logits).unwrap();
    let total: f64 = (0u32..1 << live.len())
        .map(|bits| {
            let mask: Vec<bool> = (0..264)
                .map(|i| {
                    live.iter()
                        .position(|&p| p == i)
                        .is_some_and(|b| bits >> b & 1 == 1)
                })
                .collect();
            params
                .log_prob(&LatticeLayout::from_free_mask(&mask).unwrap())
                .exp()
        })
        .sum();
    let norm_err = (total - 1.0).abs();
    check(
        worst_rel < GRAD_REL_TOL && margin_failures == 0 && norm_err < NORM_TOL,
        format!(
            "max gradient rel. error {worst_rel:.2e} (100 instances); margin decreased {margin_failures} times; \
             |sum p - 1| = {norm_err:.2e} over 4096 layouts"
        ),
    )
}

fn criterion_8(ga: &GaSummary) -> Outcome {
    let start = Instant::now();
    let cfg = CampaignConfig::default();
    let ev = high();
    let (params, low, high_corpus) = pretrain_policy(&cfg, &ev).unwrap();
    let corpora_fixed = low.iter().chain(&high_corpus).all(|r| r.gd_count == 16);
    let before = sampled_inventory_median(&params, 1000, 1);
    let counting = CountingEvaluator::new(&ev);
    let dpo_cfg = DpoConfig {
        seed: 1,
        ..DpoConfig::default()
    };
    let run = run_online_dpo(params, &counting, &cfg.fitness, &dpo_cfg).unwrap();
    let t = start.elapsed();
    let after = sampled_inventory_median(&run.params, 1000, 1);
    let best = &run.best;
    let k = best.result.k_eff;
    let a = after > 16.0;
    let b = cfg.fitness.in_window(k);
    let c = best.fitness.total < ga.best_fitness && counting.calls() == ga.calls;
    let d = best.fitness.total < DPO_FITNESS_CEILING;
    check(
        corpora_fixed && a && b && c && d && t < DPO_TIME,
        format!(
            "(a) median gd_count {before} -> {after}: {a}; (b) best k {k:.4} in window: {b}; \
             (c) DPO {:.4} vs GA {:.4} at {} vs {} calls: {c}; (d) best < 3.0: {d}; best has {} Gd; {t:.2?}",
            best.fitness.total,
            ga.best_fitness,
            counting.calls(),
            ga.calls,
            best.layout.gd_count()
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut bad = 0;
    for inv in [16, 24, 32] {
        for _ in 0..1000 {
            let l = sample_symmetric_layout(inv, &mut rng).unwrap();
            if l.gd_count() != inv || !l.is_d4_invariant() {
                bad += 1;
            }
        }
    }
    let six = sample_symmetric_layout(6, &mut rng) == Err(SymgenError::InventoryUnrepresentable(6));
    let ev = high();
    let cfg = FitnessConfig::default();
    let best: Vec<(usize, f64, f64)> = [16, 24, 32]
        .iter()
        .map(|&inv| {
            let b = run_sym_benchmark(inv, 200, FidelityTier::High, 1, &ev, &cfg).unwrap();
            (inv, b.best.fitness.total, b.best.result.k_eff)
        })
        .collect();
    let beats = best[1].1 < best[0].1 && best[2].1 < best[0].1;
    check(
        bad == 0 && six && beats,
        format!(
            "{bad} bad samples of 3000; inventory 6 rejected: {six}; best-of-200 fitness (k): {}",
            best.iter()
                .map(|(i, f, k)| format!("{i}: {f:.4} ({k:.4})"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> Vec<String> {
    names
        .iter()
        .filter(|n| {
            std::fs::read(a.join(n)).ok() != std::fs::read(b.join(n)).ok() || !a.join(n).exists()
        })
        .map(|n| n.to_string())
        .collect()
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let mut cfg = CampaignConfig::default();
    cfg.ga.eval_budget = 300;
    cfg.dpo.steps = 100;
    cfg.pretrain.low_records = 500;
    cfg.pretrain.high_records = 100;
    cfg.sym.candidates = 30;
    cfg.dataset.records = 10;
    cfg.calibration_samples = 10;
    let ev = high();
    let mut differing = Vec::new();
    for rep in ["a", "b"] {
        let d = root.join(rep);
        run_ga_campaign(&cfg, &ev, &d.join("ga")).unwrap();
        run_dpo_campaign(&cfg, &ev, &d.join("dpo"), None).unwrap();
        run_sym_campaign(&cfg, &ev, &d.join("sym")).unwrap();
        run_calibrate_campaign(&cfg, &d.join("cal")).unwrap();
        let mut low = cfg.clone();
        low.fidelity = FidelityTier::Low;
        latticefold::campaign::run_dataset_campaign(&low, &ev, &d.join("ds")).unwrap();
    }
    let (a, b) = (root.join("a"), root.join("b"));
    for (sub, files) in [
        ("ga", &["events.jsonl", "config.txt"][..]),
        (
            "dpo",
            &[
                "events.jsonl",
                "pretrain_low.jsonl",
                "pretrain_high.jsonl",
                "checkpoint_final.json",
            ][..],
        ),
        ("sym", &["events.jsonl"][..]),
        ("cal", &["calibration.json"][..]),
        ("ds", &["dataset.jsonl"][..]),
    ] {
        for f in same_files(&a.join(sub), &b.join(sub), files) {
            differing.push(format!("{sub}/{f}"));
        }
    }
    let p1 = root.join("n10a.jsonl");
    let p2 = root.join("n10b.jsonl");
    let recs = generate_dataset(10, 16, FidelityTier::Low, &ev, &p1).unwrap();
    generate_dataset(10, 16, FidelityTier::Low, &ev, &p2).unwrap();
    let dataset_same = std::fs::read(&p1).unwrap() == std::fs::read(&p2).unwrap();
    let seed_rule = recs
        .iter()
        .all(|r| r.seed == r.id + 1 && r.gd_count == 16 && r.check().is_ok());
    check(
        differing.is_empty() && dataset_same && seed_rule,
        format!(
            "ga/dpo/sym/calibrate/dataset reruns byte-identical (differing: {differing:?}); \
             n=10 Low dataset identical: {dataset_same}; seed = id + 1: {seed_rule}"
        ),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        let mark = if o.passed { "PASS" } else { "FAIL" };
        if !o.passed {
            failures += 1;
        }
        println!("criterion {n:>2} [{name}]: {mark} - {}", o.detail);
    };
    report(1, "solver oracle", criterion_1());
    report(2, "solver equivariance", criterion_2());
    report(3, "Gd monotonicity", criterion_3());
    report(4, "calibration", criterion_4());
    report(5, "fitness exactness", criterion_5());
    let (o6, ga) = criterion_6();
    report(6, "GA invariants", o6);
    report(7, "DPO mechanics", criterion_7());
    report(8, "emergence", criterion_8(&ga));
    report(9, "symmetric benchmarks", criterion_9());
    report(10, "reproducibility", criterion_10());
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 10 acceptance criteria passed");
}
