//! Deterministic backends for tests and offline runs.

use std::time::{Duration, Instant};

use async_trait::async_trait;
use tokio_util::sync::CancellationToken;

use crate::index::fnv1a64;
use crate::ingest::count_tokens;

use super::{BackendKind, GenerationBackend, GenerationError, GenerationParams, GenerationStats, TokenSink};

/// Mock completions never exceed this many tokens.
pub const MOCK_TOKEN_CAP: u32 = 16;

/// Token `i` is the 4-digit hex of `(h * (i + 1)) mod 2^16`, where `h` hashes
/// the prompt followed by the big-endian seed.
pub fn mock_hash_tokens(prompt: &str, seed: u64, max_new_tokens: u32) -> Vec<String> {
    let h = fnv1a64(prompt.bytes().chain(seed.to_be_bytes()));
    let n = max_new_tokens.min(MOCK_TOKEN_CAP) as u64;
    (0..n)
        .map(|i| format!("{:04x} ", h.wrapping_mul(i + 1) & 0xffff))
        .collect()
}

/// Echoes the question of a rendered prompt: the words between the last
/// `### Question` header and `[/INST]`, each followed by one space.
pub fn mock_echo_tokens(prompt: &str, max_new_tokens: u32) -> Vec<String> {
    let question = match prompt.rfind("### Question") {
        Some(at) => &prompt[at + "### Question".len()..],
        None => prompt,
    };
    let question = question.find("[/INST]").map_or(question, |end| &question[..end]);
    question
        .split_whitespace()
        .take(max_new_tokens as usize)
        .map(|w| format!("{w} "))
        .collect()
}

async fn emit(
    tokens: Vec<String>,
    prompt: &str,
    params: &GenerationParams,
    sink: &mut dyn TokenSink,
    cancel: &CancellationToken,
) -> Result<GenerationStats, GenerationError> {
    let started = Instant::now();
    let delay = Duration::from_millis(params.inter_token_delay_ms);
    for token in &tokens {
        if !delay.is_zero() {
            tokio::select! {
                _ = cancel.cancelled() => return Err(GenerationError::Cancelled),
                _ = tokio::time::sleep(delay) => {}
            }
        }
        if cancel.is_cancelled() {
            return Err(GenerationError::Cancelled);
        }
        sink.token(token);
    }
    Ok(GenerationStats {
        prompt_tokens: count_tokens(prompt),
        output_tokens: tokens.len(),
        backend_seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockHashBackend;

#[async_trait]
impl GenerationBackend for MockHashBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::MockHash
    }

    async fn stream(
        &self,
        prompt: &str,
        params: &GenerationParams,
        sink: &mut dyn TokenSink,
        cancel: &CancellationToken,
    ) -> Result<GenerationStats, GenerationError> {
        let tokens = mock_hash_tokens(prompt, params.seed, params.max_new_tokens);
        emit(tokens, prompt, params, sink, cancel).await
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockEchoBackend;

#[async_trait]
impl GenerationBackend for MockEchoBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::MockEcho
    }

    async fn stream(
        &self,
        prompt: &str,
        params: &GenerationParams,
        sink: &mut dyn TokenSink,
        cancel: &CancellationToken,
    ) -> Result<GenerationStats, GenerationError> {
        let tokens = mock_echo_tokens(prompt, params.max_new_tokens);
        emit(tokens, prompt, params, sink, cancel).await
    }
}
