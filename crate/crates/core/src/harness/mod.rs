//! Scenario orchestration: trials, the applicability matrix, model
//! preparation, the attack/removal/metrics pipeline and report output.

mod config;
mod models;
mod report;
mod run;
mod scenario;
mod trials;

pub use config::{AttackSection, BenchConfig, CorpusConfig, EncoderSection, MetricsSection, RemovalSection};
pub use models::{Workbench, CACHE_ENV};
pub use report::{
    bar_chart_svg, emit_report, format_table, load_report, parse_report_csv, report_csv, write_plots, CSV_COLUMNS,
};
pub use run::{run_scenario, Condition, ReportRow, RunMetadata, ScenarioReport};
pub use scenario::{rejection, AttackKind, Removal, Scenario, ScenarioSpec};
pub use trials::{build_trials, Trial, TrialSet};
