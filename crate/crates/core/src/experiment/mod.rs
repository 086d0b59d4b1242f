//! Run configuration, end-to-end pipeline, run directories, ablation plans and reports.

mod config;
mod gradcheck;
mod pipeline;
mod plan;
mod report;

pub use config::{derive_seed, RunConfig};
pub use gradcheck::grad_check_run;
pub use pipeline::{
    accuracy_metric, add_accuracy_metrics, aspect_accuracy, build_item_index, evaluate_model, finetune_examples,
    finetune_model, pretrain_model, run_dir, run_pipeline, run_to_dir, sha256_hex, write_vocab, Dataset, Model,
    RunManifest, RunOutcome, RunWriter, VocabBundle, CONFIG_FILE, ITEMS_FILE, JUDGMENTS_FILE, MANIFEST_FILE,
    METRICS_FILE, QUERIES_FILE, TOKENIZER_FILE, VALUES_DIR,
};
pub use plan::{dir_name, run_plan, ExperimentPlan, PlannedRun, COMPARISON_FILE};
pub use report::{emit_report, median, ComparisonTable, ReportInput, ReportRow};
