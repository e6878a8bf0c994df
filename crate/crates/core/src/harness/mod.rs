//! Run configuration, metrics files, evaluation, dataset generation, canned
//! sweeps and the oracle self-check used by the command line.

mod config;
mod metrics;
mod oracle;
mod presets;
mod run;

pub use config::{output_root, RunConfig, OUTPUT_ROOT_VAR};
pub use metrics::{MetricsSeries, METRICS_HEADER};
pub use oracle::{run_oracle_checks, CheckResult};
pub use presets::{
    desk_learner, offline_recipe, preset_names, sweep, sweep_runs, SweepRow, PRESETS,
    SUCCESS_THRESHOLD,
};
pub use run::{
    evaluate_checkpoint, evaluate_expert, generate_dataset, make_expert, run, DatasetRecipe,
    RunSummary,
};
