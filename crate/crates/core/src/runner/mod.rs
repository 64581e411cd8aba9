//! Scenario orchestration: configs, anchors, metrics and reports.

pub mod anchors;
pub mod config;
pub mod report;
pub mod run;

pub use anchors::{anchor_frame, build_anchor_catalog, far_domain_shift, target_function, AnchorSet};
pub use config::{AnchorSetting, BasisKind, Method, ScenarioConfig, ScenarioKind};
pub use report::{read_csv, ExperimentReport, ModelSummary, ReportRow, CSV_COLUMNS};
pub use run::{
    function_cases, generated_cases, layout_points, ls_predictions, next_predictions, rmse,
    model_seed, run_scenario, scenario_cases, scenario_context, score, train_method, EvalContext, Metrics, TrainedModel,
    ValidationCase,
};
