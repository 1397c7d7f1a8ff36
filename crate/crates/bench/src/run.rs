use std::time::{Instant, SystemTime, UNIX_EPOCH};

use slicerchat_core::GenerationParams;
use slicerchat_server::{ChatClient, ChatEvent, ChatRequest, ChatStats};
use tracing::{info, warn};

use crate::cases::{check_arms, check_cases};
use crate::score::{count_code_lines, extract_code_blocks};
use crate::{ArmConfig, BenchError, BenchmarkCase, BenchmarkResult};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Sent with every request; the mock backends honour the token delay.
    pub params: GenerationParams,
}

/// Runs every (case, arm) pair once, case-major, one request at a time.
///
/// Failed runs are kept with score 0 and a note, so the result count is
/// always `cases.len() * arms.len()`. Only an unreachable service (checked
/// up front) aborts the run.
pub async fn run_benchmark(
    cases: &[BenchmarkCase],
    arms: &[ArmConfig],
    endpoint: &str,
    options: &RunOptions,
) -> Result<Vec<BenchmarkResult>, BenchError> {
    if cases.is_empty() || arms.is_empty() {
        return Err(BenchError::Invalid("need at least one case and one arm".into()));
    }
    check_cases(cases)?;
    check_arms(arms)?;
    options
        .params
        .validate()
        .map_err(|e| BenchError::Invalid(e.to_string()))?;

    let unreachable = |message: String| BenchError::Unreachable {
        endpoint: endpoint.to_string(),
        message,
    };
    let client = ChatClient::new(endpoint).map_err(|e| unreachable(e.to_string()))?;
    client.health().await.map_err(|e| unreachable(e.to_string()))?;

    let nonce = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    let mut results = Vec::with_capacity(cases.len() * arms.len());
    for case in cases {
        for arm in arms {
            let session = format!("bench-{nonce:x}-{}", results.len());
            let result = run_one(&client, &session, case, arm, &options.params).await;
            info!(
                case = %case.id,
                arm = %arm.label,
                seconds = result.inference_seconds,
                lines = result.lines_total,
                "run finished"
            );
            results.push(result);
        }
    }
    Ok(results)
}

async fn run_one(
    client: &ChatClient,
    session: &str,
    case: &BenchmarkCase,
    arm: &ArmConfig,
    params: &GenerationParams,
) -> BenchmarkResult {
    let request = ChatRequest {
        scene_xml: case.scene_xml.clone().filter(|_| arm.rag.scene),
        rag: Some(arm.rag.into()),
        model: Some(arm.model.clone()),
        params: params.clone(),
        ..ChatRequest::new(session, case.question.clone())
    };

    let mut output = String::new();
    let started = Instant::now();
    let outcome = stream_answer(client, &request, &mut output).await;
    let inference_seconds = started.elapsed().as_secs_f64();

    let mut result = BenchmarkResult {
        case_id: case.id.clone(),
        arm: arm.label.clone(),
        model: arm.model.clone(),
        inference_seconds,
        backend_seconds: 0.0,
        total_seconds: 0.0,
        output,
        prompt_tokens: 0,
        output_tokens: 0,
        lines_total: 0,
        lines_ok: None,
        score: None,
        note: None,
        comment: None,
    };
    match outcome {
        Ok(stats) => {
            result.backend_seconds = stats.backend_seconds;
            result.total_seconds = stats.total_seconds;
            result.prompt_tokens = stats.prompt_tokens;
            result.output_tokens = stats.output_tokens;
            let code = extract_code_blocks(&result.output);
            result.lines_total = count_code_lines(&code.blocks);
            for note in code.notes() {
                result.add_note(note);
            }
        }
        Err(message) => {
            warn!(case = %case.id, arm = %arm.label, %message, "run failed");
            result.lines_ok = Some(0);
            result.score = Some(0);
            result.add_note(format!("error: {message}"));
        }
    }
    result
}

async fn stream_answer(client: &ChatClient, request: &ChatRequest, output: &mut String) -> Result<ChatStats, String> {
    let mut stream = client.chat(request).await.map_err(|e| e.to_string())?;
    while let Some(event) = stream.next_event().await {
        match event.map_err(|e| e.to_string())? {
            ChatEvent::Token { text } => output.push_str(&text),
            ChatEvent::Eos { stats } => return Ok(stats),
            ChatEvent::Error { message } => return Err(message),
        }
    }
    Err("stream ended without a terminal event".into())
}
