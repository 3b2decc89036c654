//! Success-rate accounting over manipulation episode logs.
//!
//! Logs are newline-delimited JSON, one episode per line. Cells are
//! `successes / episodes` per (policy, scenario); marginals are computed from
//! summed counts and only then rounded, so they are episode-weighted means of
//! their cells.

mod aggregate;
mod log;
mod render;
mod scenario;

use thiserror::Error;

pub use aggregate::{
    aggregate, expand, partial_success_summary, relative_improvement, round_rate, Cell, Marginal, Metric,
    PartialSuccess, SuccessTable,
};
pub use log::{parse_log, read_log, EpisodeRecord};
pub use render::{render_partial_table, render_success_table};
pub use scenario::{in_domain_suite, ood_suite, scenario_suite, Protocol, ScenarioKey, ScenarioSpec, Setting, SuiteDefaults};

#[derive(Debug, Error)]
pub enum OodError {
    #[error("no records")]
    NoRecords,
    #[error("line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("record {record} references unknown scenario {scenario}")]
    UnknownScenario { record: String, scenario: String },
    #[error("duplicate episode {record}")]
    DuplicateEpisode { record: String },
    #[error("lift without grasp in {}", records.join(", "))]
    LiftWithoutGrasp { records: Vec<String> },
    #[error("baseline rate must be positive, got {0} (zero baseline)")]
    ZeroBaseline(f64),
}
