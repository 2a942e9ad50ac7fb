//! Run directories and the drivers behind each campaign subcommand.
//!
//! A run directory holds `manifest.json`, `config.txt` (the full
//! configuration), `events.jsonl` (or `dataset.jsonl` / `calibration.json`)
//! and an `analysis/` subdirectory filled by [`analyze_run`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::fitness::{fitness, FitnessConfig, Scored};
use crate::ga::{run_ga, GaEvent};
use crate::neutronics::{
    calibrate, BuiltinEvaluator, CountingEvaluator, Evaluator, ExternalEvaluator, FidelityTier,
    NeutronicsError, NeutronicsResult,
};
use crate::policy::{
    pretrain_mle, run_online_dpo, DpoEvent, Policy, PolicyCheckpoint, PolicyParams,
};
use crate::record::EvalRecord;
use crate::symgen::{run_sym_benchmark, SymEvent};
use crate::Error;

use super::analysis::{
    inventory_csv, pearson_corr, scatter_export, trajectory, trajectory_csv, CorrelationMatrix,
};
use super::config::{CampaignConfig, EvaluatorSpec};
use super::dataset::{build_dataset, generate_dataset, read_dataset, DatasetRecord};
use super::jsonl::{read_json, read_jsonl, write_json, write_jsonl, write_text};
use super::render::{render_map, MapStyle};

/// Environment variable naming the default root for run directories.
pub const OUT_DIR_ENV: &str = "LATTICEFOLD_OUT_DIR";

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const DATASET_FILE: &str = "dataset.jsonl";
pub const ANALYSIS_DIR: &str = "analysis";

/// Post-training samples drawn to summarize the policy's inventory.
const POLICY_PROBE_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Ga,
    Dpo,
    Sym,
    Dataset,
    Calibrate,
}

impl fmt::Display for RunKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunKind::Ga => "ga",
            RunKind::Dpo => "dpo",
            RunKind::Sym => "sym",
            RunKind::Dataset => "dataset",
            RunKind::Calibrate => "calibrate",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: RunKind,
    pub seed: u64,
    pub fidelity: FidelityTier,
    pub evaluator: String,
    pub config_snapshot: String,
    /// Unix seconds.
    pub started_at: u64,
    pub finished_at: u64,
    pub evaluator_calls: usize,
    /// Paths relative to the run directory.
    pub outputs: Vec<String>,
    #[serde(default)]
    pub summary: Map<String, Value>,
}

impl RunManifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, Error> {
        read_json(dir.as_ref().join(MANIFEST_FILE))
    }
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// `$LATTICEFOLD_OUT_DIR/<kind>-seed<seed>`, or under `runs/` when unset.
pub fn default_run_dir(kind: RunKind, seed: u64) -> PathBuf {
    let root = std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"));
    root.join(format!("{kind}-seed{seed}"))
}

/// Builds the evaluator named by the configuration.
pub fn make_evaluator(cfg: &CampaignConfig) -> Result<Box<dyn Evaluator + Send>, Error> {
    match &cfg.evaluator {
        EvaluatorSpec::Builtin => Ok(Box::new(BuiltinEvaluator {
            library: cfg.library,
            noise: cfg.noise,
        })),
        EvaluatorSpec::External(cmd) => {
            let ev = ExternalEvaluator::spawn(cmd)
                .map_err(|e| NeutronicsError::External(format!("cannot start `{cmd}`: {e}")))?;
            Ok(Box::new(ev))
        }
    }
}

struct RunDir {
    root: PathBuf,
    started_at: u64,
    outputs: Vec<String>,
}

impl RunDir {
    fn create(root: &Path, cfg: &CampaignConfig) -> Result<Self, Error> {
        std::fs::create_dir_all(root.join(ANALYSIS_DIR)).map_err(|e| Error::io(root, e))?;
        write_text(root.join(CONFIG_FILE), &cfg.to_text())?;
        Ok(RunDir {
            root: root.to_path_buf(),
            started_at: now(),
            outputs: vec![CONFIG_FILE.to_string()],
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.root.join(name)
    }

    fn finish(
        self,
        kind: RunKind,
        cfg: &CampaignConfig,
        evaluator_calls: usize,
        summary: Map<String, Value>,
    ) -> Result<RunManifest, Error> {
        let manifest = RunManifest {
            kind,
            seed: cfg.seed,
            fidelity: cfg.fidelity,
            evaluator: cfg.evaluator.to_string(),
            config_snapshot: CONFIG_FILE.to_string(),
            started_at: self.started_at,
            finished_at: now(),
            evaluator_calls,
            outputs: self.outputs,
            summary,
        };
        write_json(self.root.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }
}

fn record_json(r: &EvalRecord) -> Value {
    serde_json::to_value(r).expect("records serialize")
}

fn scored_json(s: &Scored) -> Value {
    json!({
        "layout": s.layout,
        "k_eff": s.result.k_eff,
        "fq": s.result.fq,
        "fdh": s.result.fdh,
        "fitness": s.fitness.total,
        "gd_count": s.layout.gd_count(),
    })
}

pub fn run_ga_campaign<E: Evaluator + ?Sized>(
    cfg: &CampaignConfig,
    evaluator: &E,
    dir: &Path,
) -> Result<RunManifest, Error> {
    cfg.validate()?;
    let mut run_dir = RunDir::create(dir, cfg)?;
    let counting = CountingEvaluator::new(evaluator);
    let run = run_ga(&cfg.ga_config(), &counting, &cfg.fitness)?;
    write_jsonl(run_dir.path(EVENTS_FILE), &run.log)?;
    let mut summary = Map::new();
    summary.insert("generations".into(), json!(run.generations));
    summary.insert("best".into(), scored_json(&run.best));
    run_dir.finish(RunKind::Ga, cfg, counting.calls(), summary)
}

pub fn run_sym_campaign<E: Evaluator + ?Sized>(
    cfg: &CampaignConfig,
    evaluator: &E,
    dir: &Path,
) -> Result<RunManifest, Error> {
    cfg.validate()?;
    let mut run_dir = RunDir::create(dir, cfg)?;
    let counting = CountingEvaluator::new(evaluator);
    let mut log: Vec<SymEvent> = Vec::new();
    let mut best = Vec::new();
    for &inventory in &cfg.sym.inventories {
        let bench = run_sym_benchmark(
            inventory,
            cfg.sym.candidates,
            cfg.fidelity,
            cfg.seed,
            &counting,
            &cfg.fitness,
        )?;
        best.push(json!({
            "inventory": inventory,
            "best_index": bench.best_index,
            "record": record_json(&bench.log[bench.best_index].record()),
        }));
        log.extend(bench.log);
    }
    write_jsonl(run_dir.path(EVENTS_FILE), &log)?;
    let mut summary = Map::new();
    summary.insert("best_by_inventory".into(), Value::Array(best));
    run_dir.finish(RunKind::Sym, cfg, counting.calls(), summary)
}

/// Pretrains a policy by weighted likelihood on fixed-inventory corpora
/// drawn with the dataset seed rule. Returns the policy and both corpora.
pub fn pretrain_policy<E: Evaluator + ?Sized>(
    cfg: &CampaignConfig,
    evaluator: &E,
) -> Result<(PolicyParams, Vec<DatasetRecord>, Vec<DatasetRecord>), Error> {
    let p = &cfg.pretrain;
    let corpus = |n: usize, tier| -> Result<Vec<DatasetRecord>, Error> {
        if n == 0 {
            Ok(Vec::new())
        } else {
            build_dataset(n, p.inventory, tier, evaluator)
        }
    };
    let low = corpus(p.low_records, FidelityTier::Low)?;
    let high = corpus(p.high_records, FidelityTier::High)?;
    let low_layouts: Vec<_> = low.iter().map(|r| r.layout.clone()).collect();
    let high_layouts: Vec<_> = high.iter().map(|r| r.layout.clone()).collect();
    let params = pretrain_mle(&[
        (&low_layouts[..], p.low_weight),
        (&high_layouts[..], p.high_weight),
    ]);
    Ok((params, low, high))
}

/// Median Gd count over `n` samples of `params` at temperature 1.
pub fn sampled_inventory_median(params: &PolicyParams, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let counts: Vec<f64> = (0..n.max(1))
        .map(|_| params.sample(1.0, &mut rng).layout.gd_count() as f64)
        .collect();
    crate::neutronics::median(&counts)
}

/// Online preference run. Starts from `init` when given, otherwise from a
/// freshly pretrained policy whose corpora are saved in the run directory.
pub fn run_dpo_campaign<E: Evaluator + ?Sized>(
    cfg: &CampaignConfig,
    evaluator: &E,
    dir: &Path,
    init: Option<&Path>,
) -> Result<RunManifest, Error> {
    cfg.validate()?;
    let mut run_dir = RunDir::create(dir, cfg)?;
    let mut summary = Map::new();
    let params = match init {
        Some(path) => {
            summary.insert("init".into(), json!(path.display().to_string()));
            read_json::<PolicyCheckpoint>(path)?.params()?
        }
        None => {
            let (params, low, high) = pretrain_policy(cfg, evaluator)?;
            write_jsonl(run_dir.path("pretrain_low.jsonl"), &low)?;
            write_jsonl(run_dir.path("pretrain_high.jsonl"), &high)?;
            summary.insert("pretrain_evaluations".into(), json!(low.len() + high.len()));
            params
        }
    };
    let mut meta = Map::new();
    meta.insert("stage".into(), json!("pretrained"));
    meta.insert(
        "expected_inventory".into(),
        json!(params.expected_inventory()),
    );
    write_json(
        run_dir.path("checkpoint_init.json"),
        &PolicyCheckpoint::new(&params, meta),
    )?;

    let counting = CountingEvaluator::new(evaluator);
    let dpo_cfg = cfg.dpo_config();
    let run = run_online_dpo(params, &counting, &cfg.fitness, &dpo_cfg)?;
    write_jsonl(run_dir.path(EVENTS_FILE), &run.log)?;

    let mut meta = Map::new();
    meta.insert("stage".into(), json!("aligned"));
    meta.insert("steps".into(), json!(dpo_cfg.steps));
    meta.insert("seed".into(), json!(dpo_cfg.seed));
    meta.insert(
        "expected_inventory".into(),
        json!(run.params.expected_inventory()),
    );
    write_json(
        run_dir.path("checkpoint_final.json"),
        &PolicyCheckpoint::new(&run.params, meta),
    )?;

    summary.insert("prompt".into(), json!(run.prompt));
    summary.insert("best".into(), scored_json(&run.best));
    summary.insert(
        "final_expected_inventory".into(),
        json!(run.params.expected_inventory()),
    );
    summary.insert(
        "final_sampled_inventory_median".into(),
        json!(sampled_inventory_median(
            &run.params,
            POLICY_PROBE_SAMPLES,
            dpo_cfg.seed
        )),
    );
    run_dir.finish(RunKind::Dpo, cfg, counting.calls(), summary)
}

pub fn run_dataset_campaign<E: Evaluator + ?Sized>(
    cfg: &CampaignConfig,
    evaluator: &E,
    dir: &Path,
) -> Result<RunManifest, Error> {
    cfg.validate()?;
    let mut run_dir = RunDir::create(dir, cfg)?;
    let counting = CountingEvaluator::new(evaluator);
    let records = generate_dataset(
        cfg.dataset.records,
        cfg.dataset.inventory,
        cfg.fidelity,
        &counting,
        run_dir.path(DATASET_FILE),
    )?;
    let mut summary = Map::new();
    summary.insert("records".into(), json!(records.len()));
    summary.insert("inventory".into(), json!(cfg.dataset.inventory));
    run_dir.finish(RunKind::Dataset, cfg, counting.calls(), summary)
}

/// Calibration sweep of the configured cross-section library.
pub fn run_calibrate_campaign(cfg: &CampaignConfig, dir: &Path) -> Result<RunManifest, Error> {
    cfg.validate()?;
    let mut run_dir = RunDir::create(dir, cfg)?;
    let report = calibrate(&cfg.library, cfg.calibration_samples, cfg.seed)?;
    write_json(run_dir.path("calibration.json"), &report)?;
    let mut summary = Map::new();
    summary.insert("passed".into(), json!(report.passed()));
    summary.insert(
        "targets".into(),
        serde_json::to_value(&report.targets).expect("targets serialize"),
    );
    let calls = report.levels.iter().map(|l| l.k_values.len()).sum();
    run_dir.finish(RunKind::Calibrate, cfg, calls, summary)
}

/// Evaluation records of a run, in log order.
pub fn load_records(
    dir: &Path,
    kind: RunKind,
    fitness_cfg: &FitnessConfig,
) -> Result<Vec<EvalRecord>, Error> {
    let events = dir.join(EVENTS_FILE);
    match kind {
        RunKind::Ga => Ok(read_jsonl::<GaEvent>(events)?
            .iter()
            .map(GaEvent::record)
            .collect()),
        RunKind::Sym => Ok(read_jsonl::<SymEvent>(events)?
            .iter()
            .map(SymEvent::record)
            .collect()),
        RunKind::Dpo => Ok(read_jsonl::<DpoEvent>(events)?
            .into_iter()
            .flat_map(|e| e.candidates)
            .collect()),
        RunKind::Dataset => read_dataset(dir.join(DATASET_FILE))?
            .into_iter()
            .map(|r| {
                let res = NeutronicsResult {
                    k_eff: r.k_eff,
                    fq: r.fq,
                    fdh: r.fdh,
                    pin_power: Vec::new(),
                };
                Ok(EvalRecord {
                    eval_index: r.id as usize,
                    fitness: fitness(&res, fitness_cfg)?.total,
                    gd_count: r.gd_count,
                    layout: r.layout,
                    k_eff: r.k_eff,
                    fq: r.fq,
                    fdh: r.fdh,
                })
            })
            .collect(),
        RunKind::Calibrate => Err(Error::Config(
            "calibration runs have no evaluation log to analyze".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub kind: RunKind,
    pub evaluations: usize,
    pub best: EvalRecord,
    pub in_window: usize,
    pub gd_count_min: usize,
    pub gd_count_max: usize,
    pub correlation: Option<CorrelationMatrix>,
    pub correlation_error: Option<String>,
    /// Paths relative to the run directory.
    pub files: Vec<String>,
}

fn best_record<'a>(records: &'a [EvalRecord], cfg: &FitnessConfig) -> Option<&'a EvalRecord> {
    records.iter().min_by(|a, b| {
        a.fitness
            .total_cmp(&b.fitness)
            .then_with(|| {
                (a.k_eff - cfg.k_target)
                    .abs()
                    .total_cmp(&(b.k_eff - cfg.k_target).abs())
            })
            .then_with(|| {
                a.layout
                    .serialize()
                    .as_str()
                    .cmp(b.layout.serialize().as_str())
            })
    })
}

/// Writes correlation, trajectory, scatter and map files into
/// `<dir>/analysis/` and returns the summary also saved there.
pub fn analyze_run(dir: &Path) -> Result<AnalysisReport, Error> {
    let manifest = RunManifest::load(dir)?;
    let cfg = CampaignConfig::load(dir.join(&manifest.config_snapshot))?;
    let records = load_records(dir, manifest.kind, &cfg.fitness)?;
    let best = best_record(&records, &cfg.fitness)
        .ok_or_else(|| Error::Format {
            path: dir.display().to_string(),
            message: "run log is empty".into(),
        })?
        .clone();
    let out = dir.join(ANALYSIS_DIR);
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut files = Vec::new();
    let mut emit = |name: &str, text: &str| -> Result<(), Error> {
        write_text(out.join(name), text)?;
        files.push(format!("{ANALYSIS_DIR}/{name}"));
        Ok(())
    };

    let (correlation, correlation_error) = match pearson_corr(&records) {
        Ok(m) => {
            emit("correlation.csv", &m.to_csv())?;
            (Some(m), None)
        }
        Err(e) => (None, Some(e.to_string())),
    };
    emit("trajectory.csv", &trajectory_csv(&trajectory(&records)))?;
    for (x, y) in [("k_eff", "fitness"), ("gd_count", "k_eff"), ("fq", "fdh")] {
        let s = scatter_export(&records, x, y, &cfg.fitness)?;
        emit(&format!("scatter_{x}_{y}.csv"), &s.to_csv())?;
    }
    if manifest.kind == RunKind::Dpo {
        let events: Vec<DpoEvent> = read_jsonl(dir.join(EVENTS_FILE))?;
        emit("inventory.csv", &inventory_csv(&events))?;
    }
    emit("best_layout.svg", &render_map(&best.layout, MapStyle::Svg))?;
    emit(
        "best_layout.txt",
        &render_map(&best.layout, MapStyle::Ascii),
    )?;

    let report = AnalysisReport {
        kind: manifest.kind,
        evaluations: records.len(),
        in_window: records
            .iter()
            .filter(|r| cfg.fitness.in_window(r.k_eff))
            .count(),
        gd_count_min: records.iter().map(|r| r.gd_count).min().unwrap_or(0),
        gd_count_max: records.iter().map(|r| r.gd_count).max().unwrap_or(0),
        best,
        correlation,
        correlation_error,
        files: {
            let mut f = files;
            f.push(format!("{ANALYSIS_DIR}/summary.json"));
            f
        },
    };
    write_json(out.join("summary.json"), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CampaignConfig {
        let mut cfg = CampaignConfig::default();
        cfg.ga.population = 6;
        cfg.ga.eval_budget = 20;
        cfg.dpo.steps = 5;
        cfg.pretrain.low_records = 10;
        cfg.pretrain.high_records = 4;
        cfg.sym.candidates = 3;
        cfg.sym.inventories = vec![16, 24];
        cfg.dataset.records = 5;
        cfg.fidelity = FidelityTier::Low;
        cfg
    }

    #[test]
    fn ga_run_directory() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = small();
        let ev = make_evaluator(&cfg).unwrap();
        let m = run_ga_campaign(&cfg, &ev, tmp.path()).unwrap();
        assert_eq!(m.kind, RunKind::Ga);
        assert_eq!(m.evaluator_calls, 20);
        assert!(tmp.path().join(EVENTS_FILE).exists());
        assert_eq!(RunManifest::load(tmp.path()).unwrap(), m);
        let report = analyze_run(tmp.path()).unwrap();
        assert_eq!(report.evaluations, 20);
        let corr = report.correlation.unwrap();
        assert_eq!(corr.zero_variance, vec!["gd_count"]);
        for f in &report.files {
            assert!(tmp.path().join(f).exists(), "{f}");
        }
    }

    #[test]
    fn dpo_and_sym_and_dataset_runs() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = small();
        let ev = make_evaluator(&cfg).unwrap();
        let d = tmp.path().join("dpo");
        let m = run_dpo_campaign(&cfg, &ev, &d, None).unwrap();
        assert_eq!(m.evaluator_calls, 10);
        assert!(d.join("checkpoint_final.json").exists());
        assert!(analyze_run(&d)
            .unwrap()
            .files
            .iter()
            .any(|f| f.ends_with("inventory.csv")));

        let again = tmp.path().join("dpo2");
        run_dpo_campaign(&cfg, &ev, &again, Some(&d.join("checkpoint_init.json"))).unwrap();
        assert_eq!(
            std::fs::read(d.join(EVENTS_FILE)).unwrap(),
            std::fs::read(again.join(EVENTS_FILE)).unwrap()
        );

        let s = tmp.path().join("sym");
        let m = run_sym_campaign(&cfg, &ev, &s).unwrap();
        assert_eq!(m.evaluator_calls, 6);
        analyze_run(&s).unwrap();

        let ds = tmp.path().join("ds");
        let m = run_dataset_campaign(&cfg, &ev, &ds).unwrap();
        assert_eq!(m.evaluator_calls, 5);
        assert_eq!(analyze_run(&ds).unwrap().evaluations, 5);
    }

    #[test]
    fn default_dir_uses_kind_and_seed() {
        let d = default_run_dir(RunKind::Ga, 3);
        assert!(d.ends_with("ga-seed3"));
    }

    #[test]
    fn analyze_needs_a_run() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(analyze_run(tmp.path()), Err(Error::Io { .. })));
    }
}
