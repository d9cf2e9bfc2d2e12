//! Scenario files, CSV export and the controller comparison.

mod compare;
mod export;
mod scenario;

pub use compare::{compare_runs, export_comparison, total_chatter, Comparison};
pub use export::{
    export_flow_grid, export_results, flow_grid_rows, metrics_header, summarize, timeseries_header,
    ExportBundle, RunSummary,
};
pub use scenario::{
    baseline_variant, parse_scenario, parse_scenario_str, serialize_scenario, ScenarioFile,
};
