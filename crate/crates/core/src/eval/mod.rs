//! Monte Carlo cross-validation splits, agreement metrics and result reports.

mod metrics;
mod report;
mod splits;

pub use metrics::{
    accuracy, aggregate, compare_expert, confusion, weighted_kappa, Confusion, ExpertSummary, FoldResult, MetricSummary,
    ScoredPrediction, Weighting,
};
pub use report::{
    bar_chart_svg, confusion_file_name, read_label_csv, report, results_table, truth_map, write_label_csv, CHART_FILE,
    EXPERT_ROW, RESULTS_FILE,
};
pub use splits::{make_splits, make_stratified_splits, SplitConfig, SplitPlan};
