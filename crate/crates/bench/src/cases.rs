use std::collections::HashSet;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use slicerchat_server::RagToggles;

use crate::BenchError;

const DEFAULT_ARMS: &str = include_str!("../data/rq2_arms.json");
const PLACEHOLDER_CASES: &str = include_str!("../data/placeholder_cases.jsonl");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCase {
    pub id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    /// Scene document sent with the question; only used by arms with the
    /// scene source enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_xml: Option<String>,
}

/// The five knowledge-source switches an arm controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmRag {
    pub python: bool,
    pub markdown: bool,
    pub discourse: bool,
    pub scene: bool,
    pub history: bool,
}

impl From<ArmRag> for RagToggles {
    fn from(r: ArmRag) -> Self {
        RagToggles {
            python: r.python,
            markdown: r.markdown,
            discourse: r.discourse,
            scene: r.scene,
            history: r.history,
            ..RagToggles::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub label: String,
    pub model: String,
    #[serde(default)]
    pub rag: ArmRag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub case_id: String,
    pub arm: String,
    pub model: String,
    /// Client wall time from sending the request to receiving Eos.
    pub inference_seconds: f64,
    pub backend_seconds: f64,
    pub total_seconds: f64,
    pub output: String,
    pub prompt_tokens: usize,
    pub output_tokens: usize,
    pub lines_total: usize,
    pub lines_ok: Option<usize>,
    pub score: Option<u8>,
    pub note: Option<String>,
    pub comment: Option<String>,
}

impl BenchmarkResult {
    pub(crate) fn add_note(&mut self, note: impl AsRef<str>) {
        match &mut self.note {
            Some(n) => {
                n.push_str("; ");
                n.push_str(note.as_ref());
            }
            None => self.note = Some(note.as_ref().to_string()),
        }
    }
}

pub fn load_cases(path: &Path) -> Result<Vec<BenchmarkCase>, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    let cases = parse_jsonl::<BenchmarkCase>(&text, path)?;
    check_cases(&cases)?;
    Ok(cases)
}

pub fn load_arms(path: &Path) -> Result<Vec<ArmConfig>, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    let arms: Vec<ArmConfig> = serde_json::from_str(&text).map_err(|e| BenchError::BadLine {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    check_arms(&arms)?;
    Ok(arms)
}

/// The four-arm source ablation shipped with the crate.
pub fn default_arms() -> Vec<ArmConfig> {
    serde_json::from_str(DEFAULT_ARMS).expect("bundled arms file is valid")
}

/// Five stand-in questions. They are placeholders for a user's own case file.
pub fn placeholder_cases() -> Vec<BenchmarkCase> {
    parse_jsonl(PLACEHOLDER_CASES, Path::new("placeholder_cases.jsonl")).expect("bundled cases file is valid")
}

pub(crate) fn parse_jsonl<T: DeserializeOwned>(text: &str, path: &Path) -> Result<Vec<T>, BenchError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| BenchError::BadLine {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub(crate) fn check_cases(cases: &[BenchmarkCase]) -> Result<(), BenchError> {
    let mut seen = HashSet::new();
    for c in cases {
        if c.id.is_empty() {
            return Err(BenchError::Invalid("case with empty id".into()));
        }
        if !seen.insert(c.id.as_str()) {
            return Err(BenchError::Invalid(format!("duplicate case id '{}'", c.id)));
        }
    }
    Ok(())
}

pub(crate) fn check_arms(arms: &[ArmConfig]) -> Result<(), BenchError> {
    let mut seen = HashSet::new();
    for a in arms {
        if a.label.is_empty() || a.model.is_empty() {
            return Err(BenchError::Invalid("arm needs a label and a model".into()));
        }
        if !seen.insert(a.label.as_str()) {
            return Err(BenchError::Invalid(format!("duplicate arm label '{}'", a.label)));
        }
    }
    Ok(())
}
