//! Experiment driver: configs, seeded pipeline runs, metrics, ablation and
//! sensitivity tables, and report emission.

mod config;
mod experiment;
mod metrics;
mod report;

pub use config::{DataSource, ExperimentConfig};
pub use experiment::{
    ablation_variants, derive_seed, evaluate, final_accuracy, load_domains, pooled_entropy_accuracy_correlation,
    prepare, run, run_ablation, run_aggregator_comparison, run_epsilon_sweep, run_variants, seeded_mspl, PreparedRun,
    Variant, ROW_ENTROPY, ROW_FEDAVG, ROW_SEA, ROW_SEA_MSPL, ROW_SEA_MSPL_CE, ROW_UNIFORM,
};
pub use metrics::{accuracy, entropy_accuracy_correlation, mean_std};
pub use report::{sig6, ClientRow, RunMetrics, RunReport, Table, TableRow};
