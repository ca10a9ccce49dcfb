//! Listening-test (MOS) and usability (SUS) analysis.

mod csvio;
mod mos;
mod sus;

pub use csvio::{
    load_mos_csv, load_sus_csv, read_mos_csv, read_sus_csv, sus_header, write_mos_csv, write_sus_csv, Ingested,
    RowError, MOS_HEADER,
};
pub use mos::{
    compare_with_reported, mos_aggregate, overall_from_means, round2, CellStats, Condition, Measure, MeasureSummary,
    MosCell, MosReport, MosResponse, MosTable, ReportedComparison, REPORTED_CELL_MEANS, REPORTED_MOS,
};
pub use sus::{sus_score, sus_summary, SusResponse, SusSummary, REPORTED_SUS, SUS_BENCHMARK, SUS_ITEMS};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid response: {0}")]
    Validation(String),
    #[error("unexpected CSV header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
