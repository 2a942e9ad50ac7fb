//! Campaign orchestration: configuration, seeded datasets, run directories
//! and the analysis suite.

mod analysis;
mod config;
mod dataset;
mod jsonl;
mod render;
mod run;

pub use analysis::{
    inventory_csv, pearson_corr, pearson_matrix, scatter_export, trajectory, trajectory_csv,
    AnalysisError, Axis, CorrelationMatrix, Scatter, TrajectoryPoint, CORR_COLUMNS,
};
pub use config::{CampaignConfig, DatasetConfig, EvaluatorSpec, PretrainConfig, SymConfig};
pub use dataset::{build_dataset, generate_dataset, read_dataset, DatasetRecord};
pub use jsonl::{read_jsonl, write_jsonl};
pub use render::{render_map, MapStyle};
pub use run::{
    analyze_run, default_run_dir, load_records, make_evaluator, pretrain_policy,
    run_calibrate_campaign, run_dataset_campaign, run_dpo_campaign, run_ga_campaign,
    run_sym_campaign, sampled_inventory_median, AnalysisReport, RunKind, RunManifest, ANALYSIS_DIR,
    CONFIG_FILE, DATASET_FILE, EVENTS_FILE, MANIFEST_FILE, OUT_DIR_ENV,
};
