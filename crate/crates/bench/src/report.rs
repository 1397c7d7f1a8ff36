use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{BenchError, BenchmarkResult};

/// One row of `results.csv`. Column order is part of the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub case_id: String,
    pub arm: String,
    pub model: String,
    pub inference_seconds: f64,
    pub prompt_tokens: usize,
    pub output_tokens: usize,
    pub lines_total: usize,
    pub lines_ok: Option<usize>,
    pub score: Option<u8>,
    pub note: Option<String>,
}

impl From<&BenchmarkResult> for CsvRow {
    fn from(r: &BenchmarkResult) -> Self {
        CsvRow {
            case_id: r.case_id.clone(),
            arm: r.arm.clone(),
            model: r.model.clone(),
            inference_seconds: r.inference_seconds,
            prompt_tokens: r.prompt_tokens,
            output_tokens: r.output_tokens,
            lines_total: r.lines_total,
            lines_ok: r.lines_ok,
            score: r.score,
            // An empty cell reads back as None.
            note: r.note.clone().filter(|n| !n.is_empty()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTiming {
    pub runs: usize,
    pub mean_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
}

/// Matrices indexed `[case][arm]`, in first-seen order, ready for grouped
/// bar charts. Cells without a run (or without a score yet) are null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cases: Vec<String>,
    pub arms: Vec<String>,
    pub arm_models: Vec<String>,
    pub score: Vec<Vec<Option<u8>>>,
    pub inference_seconds: Vec<Vec<Option<f64>>>,
    pub seconds_by_model: BTreeMap<String, ModelTiming>,
}

impl Summary {
    pub fn from_results(results: &[BenchmarkResult]) -> Summary {
        let mut cases: Vec<String> = Vec::new();
        let mut arms: Vec<String> = Vec::new();
        let mut arm_models = Vec::new();
        for r in results {
            if !cases.contains(&r.case_id) {
                cases.push(r.case_id.clone());
            }
            if !arms.contains(&r.arm) {
                arms.push(r.arm.clone());
                arm_models.push(r.model.clone());
            }
        }

        let mut score = vec![vec![None; arms.len()]; cases.len()];
        let mut seconds = vec![vec![None; arms.len()]; cases.len()];
        let mut by_model: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in results {
            let c = cases.iter().position(|x| *x == r.case_id).unwrap();
            let a = arms.iter().position(|x| *x == r.arm).unwrap();
            score[c][a] = r.score;
            seconds[c][a] = Some(r.inference_seconds);
            by_model.entry(r.model.clone()).or_default().push(r.inference_seconds);
        }
        let seconds_by_model = by_model
            .into_iter()
            .map(|(model, xs)| {
                let timing = ModelTiming {
                    runs: xs.len(),
                    mean_seconds: xs.iter().sum::<f64>() / xs.len() as f64,
                    min_seconds: xs.iter().copied().fold(f64::INFINITY, f64::min),
                    max_seconds: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                };
                (model, timing)
            })
            .collect();

        Summary {
            cases,
            arms,
            arm_models,
            score,
            inference_seconds: seconds,
            seconds_by_model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub results_csv: PathBuf,
    pub summary_json: PathBuf,
    pub outputs_jsonl: PathBuf,
}

/// Writes `results.csv`, `summary.json` and `outputs.jsonl` (every field,
/// including the verbatim model output) into `dir`, creating it if needed.
pub fn emit_report(results: &[BenchmarkResult], dir: &Path) -> Result<ReportFiles, BenchError> {
    if results.is_empty() {
        return Err(BenchError::Invalid("no results to report".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let files = ReportFiles {
        results_csv: dir.join("results.csv"),
        summary_json: dir.join("summary.json"),
        outputs_jsonl: dir.join("outputs.jsonl"),
    };

    let csv_file = std::fs::File::create(&files.results_csv).map_err(|e| BenchError::io(&files.results_csv, e))?;
    let mut writer = csv::Writer::from_writer(csv_file);
    for r in results {
        writer.serialize(CsvRow::from(r))?;
    }
    writer.flush().map_err(|e| BenchError::io(&files.results_csv, e))?;

    let summary = serde_json::to_string_pretty(&Summary::from_results(results))?;
    std::fs::write(&files.summary_json, summary + "\n").map_err(|e| BenchError::io(&files.summary_json, e))?;

    let mut outputs = Vec::new();
    for r in results {
        serde_json::to_writer(&mut outputs, r)?;
        outputs.push(b'\n');
    }
    std::fs::File::create(&files.outputs_jsonl)
        .and_then(|mut f| f.write_all(&outputs))
        .map_err(|e| BenchError::io(&files.outputs_jsonl, e))?;

    Ok(files)
}

pub fn read_results_csv(path: &Path) -> Result<Vec<CsvRow>, BenchError> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<Result<_, _>>()?)
}
