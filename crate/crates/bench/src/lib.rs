//! Benchmark harness for a running chat service.
//!
//! A benchmark is a grid of question cases × arms, where an arm is a model
//! plus a set of enabled knowledge sources. Every cell is run once, in file
//! order, against the service's HTTP API; the client measures wall time from
//! request send to the end-of-stream event. Generated answers are reduced to
//! code lines, a reviewer records how many of those lines ran, and the
//! fraction maps onto a 0–5 score.

mod cases;
mod report;
mod review;
mod run;
mod score;

use std::path::PathBuf;

pub use cases::{
    default_arms, load_arms, load_cases, placeholder_cases, ArmConfig, ArmRag, BenchmarkCase, BenchmarkResult,
};
pub use report::{emit_report, read_results_csv, CsvRow, ModelTiming, ReportFiles, Summary};
pub use review::{load_review, review_results, ReviewEntry};
pub use run::{run_benchmark, RunOptions};
pub use score::{count_code_lines, extract_code_blocks, score_from_line_fraction, CodeExtraction};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{path}:{line}: {message}")]
    BadLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("lines_ok {lines_ok} exceeds lines_total {lines_total}")]
    LineCount { lines_ok: usize, lines_total: usize },
    #[error("review entry ({case_id}, {arm}): {message}")]
    Review {
        case_id: String,
        arm: String,
        message: String,
    },
    #[error("service at {endpoint} unreachable: {message}")]
    Unreachable { endpoint: String, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl BenchError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }
}
