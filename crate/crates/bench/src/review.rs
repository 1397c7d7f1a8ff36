use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cases::parse_jsonl;
use crate::score::score_from_line_fraction;
use crate::{BenchError, BenchmarkResult};

/// One reviewer verdict: how many of a run's code lines executed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewEntry {
    pub case_id: String,
    pub arm: String,
    pub lines_ok: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

pub fn load_review(path: &Path) -> Result<Vec<ReviewEntry>, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    parse_jsonl(&text, path)
}

/// Applies reviewer entries and recomputes scores for the reviewed runs.
///
/// Validation happens before anything is modified, so on error `results`
/// is left as it was.
pub fn review_results(results: &mut [BenchmarkResult], entries: &[ReviewEntry]) -> Result<(), BenchError> {
    let index: HashMap<(&str, &str), usize> = results
        .iter()
        .enumerate()
        .map(|(i, r)| ((r.case_id.as_str(), r.arm.as_str()), i))
        .collect();

    let mut updates = Vec::with_capacity(entries.len());
    for entry in entries {
        let fail = |message: String| BenchError::Review {
            case_id: entry.case_id.clone(),
            arm: entry.arm.clone(),
            message,
        };
        let Some(&i) = index.get(&(entry.case_id.as_str(), entry.arm.as_str())) else {
            return Err(fail("no such result".into()));
        };
        let total = results[i].lines_total;
        let score = score_from_line_fraction(entry.lines_ok, total)
            .map_err(|_| fail(format!("lines_ok {} out of range 0..={total}", entry.lines_ok)))?;
        updates.push((i, entry, score));
    }

    for (i, entry, score) in updates {
        let r = &mut results[i];
        r.lines_ok = Some(entry.lines_ok);
        r.score = Some(score);
        if entry.comment.is_some() {
            r.comment = entry.comment.clone();
        }
    }
    Ok(())
}
