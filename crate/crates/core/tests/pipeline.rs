use latticefold::campaign::{
    analyze_run, build_dataset, pearson_corr, read_jsonl, run_dpo_campaign, run_ga_campaign,
    scatter_export, trajectory, CampaignConfig, RunManifest,
};
use latticefold::fitness::FitnessConfig;
use latticefold::ga::GaEvent;
use latticefold::lattice::{format_prompt, LatticeLayout};
use latticefold::neutronics::{BuiltinEvaluator, Evaluator, FidelityTier};
use latticefold::policy::{pretrain_mle, DpoEvent, Policy};
use proptest::prelude::*;

fn small() -> CampaignConfig {
    let mut cfg = CampaignConfig::default();
    cfg.ga.population = 12;
    cfg.ga.eval_budget = 120;
    cfg.dpo.steps = 60;
    cfg.pretrain.low_records = 200;
    cfg.pretrain.high_records = 40;
    cfg
}

#[test]
fn dataset_records_round_trip_through_the_evaluator() {
    let ev = BuiltinEvaluator::default();
    let recs = build_dataset(5, 20, FidelityTier::High, &ev).unwrap();
    for r in &recs {
        let again = ev.evaluate(&r.layout, r.fidelity, r.seed).unwrap();
        assert_eq!(again.k_eff, r.k_eff);
        assert_eq!(r.prompt, format_prompt(r.k_eff, r.fq, r.fdh).unwrap());
        let text = r.layout.serialize();
        assert_eq!(LatticeLayout::deserialize(text.as_str()).unwrap(), r.layout);
    }
}

#[test]
fn pretraining_matches_smoothed_inventory() {
    let ev = BuiltinEvaluator::default();
    let recs = build_dataset(400, 16, FidelityTier::Low, &ev).unwrap();
    let layouts: Vec<LatticeLayout> = recs.into_iter().map(|r| r.layout).collect();
    let params = pretrain_mle(&[(&layouts[..], 1.0)]);
    // Add-one smoothing pulls each of the 264 positions towards 1/2.
    let want = (16.0 * 400.0 + 264.0) / 402.0;
    assert!((params.expected_inventory() - want).abs() < 1e-9);
}

#[test]
fn ga_log_analysis_flags_fixed_inventory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small();
    let ev = BuiltinEvaluator::default();
    let m = run_ga_campaign(&cfg, &ev, tmp.path()).unwrap();
    assert_eq!(m.evaluator_calls, 120);
    let log: Vec<GaEvent> = read_jsonl(tmp.path().join("events.jsonl")).unwrap();
    let records: Vec<_> = log.iter().map(GaEvent::record).collect();
    let corr = pearson_corr(&records).unwrap();
    assert_eq!(corr.zero_variance, vec!["gd_count"]);
    let t = trajectory(&records);
    assert_eq!(t.len(), 120);
    assert!(t.windows(2).all(|w| w[1].best_fitness <= w[0].best_fitness));
    let s = scatter_export(&records, "k_eff", "fitness", &FitnessConfig::default()).unwrap();
    assert_eq!(s.points.len(), m.evaluator_calls);
}

#[test]
fn dpo_run_leaves_the_fixed_inventory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small();
    let ev = BuiltinEvaluator::default();
    let m = run_dpo_campaign(&cfg, &ev, tmp.path(), None).unwrap();
    assert_eq!(m.evaluator_calls, 120);
    assert_eq!(RunManifest::load(tmp.path()).unwrap(), m);
    let events: Vec<DpoEvent> = read_jsonl(tmp.path().join("events.jsonl")).unwrap();
    assert_eq!(events.len(), 60);
    let report = analyze_run(tmp.path()).unwrap();
    assert!(report.gd_count_max > 16);
    assert!(report.correlation.unwrap().zero_variance.is_empty());
    let svg = std::fs::read_to_string(tmp.path().join("analysis/best_layout.svg")).unwrap();
    assert!(svg.contains(&format!("{} Gd pins", report.best.gd_count)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_text_round_trips(seed in any::<u64>(), pop in 2usize..200, lr in 0.001f64..100.0) {
        let mut cfg = CampaignConfig { seed, ..Default::default() };
        cfg.ga.population = pop;
        cfg.dpo.learning_rate = lr;
        prop_assert_eq!(CampaignConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn sampled_layouts_serialize_losslessly(logit in -4.0f64..2.0, seed in any::<u64>()) {
        use rand::SeedableRng;
        let params = latticefold::policy::PolicyParams::uniform(logit);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let l = params.sample(1.0, &mut rng).layout;
        let text = l.serialize();
        prop_assert_eq!(text.as_str().len(), 306);
        prop_assert_eq!(LatticeLayout::deserialize(text.as_str()).unwrap(), l);
    }
}
