use std::sync::Arc;
use std::time::Instant;

use slicerchat_bench::{
    default_arms, emit_report, placeholder_cases, read_results_csv, review_results, run_benchmark, ArmConfig, ArmRag,
    BenchError, BenchmarkCase, ReviewEntry, RunOptions, Summary,
};
use slicerchat_core::index::HashEmbedder;
use slicerchat_core::ingest::ChunkingPolicy;
use slicerchat_core::{Document, GenerationParams, KnowledgeBase, QAPair, RagConfig, SourceKind};
use slicerchat_server::{BackendConfig, ChatService, ServiceConfig};
use tokio::net::TcpListener;

async fn start_service() -> String {
    let docs = vec![
        Document::new(
            "load.py",
            SourceKind::PythonCode,
            "load.py",
            "v = slicer.util.loadVolume('ct.nrrd')",
        ),
        Document::new(
            "seg.md",
            SourceKind::MarkdownDoc,
            "seg.md",
            "# Segmentation\nUse the threshold effect.",
        ),
    ];
    let qa = vec![QAPair {
        question: "How do I create a sphere?".into(),
        answer: "Use vtkSphereSource and add a model node.".into(),
        origin: "forum/1".into(),
        author: None,
    }];
    let (kb, _) =
        KnowledgeBase::build(&docs, &qa, ChunkingPolicy::default(), Arc::new(HashEmbedder::default())).unwrap();
    let config = ServiceConfig {
        backends: BackendConfig::defaults(),
        default_model: None,
        default_rag: RagConfig::default(),
    };
    let service = Arc::new(ChatService::new(Arc::new(kb), config).unwrap());
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(slicerchat_server::serve(listener, service));
    base
}

fn delayed(ms: u64) -> RunOptions {
    RunOptions {
        params: GenerationParams {
            inter_token_delay_ms: ms,
            ..GenerationParams::default()
        },
    }
}

fn case(id: &str, question: &str) -> BenchmarkCase {
    BenchmarkCase {
        id: id.into(),
        question: question.into(),
        notes: None,
        scene_xml: None,
    }
}

fn arm(label: &str, model: &str) -> ArmConfig {
    ArmConfig {
        label: label.into(),
        model: model.into(),
        rag: ArmRag::default(),
    }
}

#[tokio::test]
async fn single_run_is_timed_from_send_to_eos() {
    let base = start_service().await;
    let results = run_benchmark(&[case("c1", "hello")], &[arm("hash", "mock-hash")], &base, &delayed(10))
        .await
        .unwrap();
    assert_eq!(results.len(), 1);
    let r = &results[0];
    assert_eq!(r.output_tokens, 16);
    assert_eq!(r.output.split_whitespace().count(), 16);
    assert!((0.16..=0.60).contains(&r.inference_seconds), "{}", r.inference_seconds);
    assert!(r.inference_seconds >= r.backend_seconds);
    assert!(r.total_seconds >= r.backend_seconds);
    assert_eq!((r.lines_total, r.lines_ok, r.score), (0, None, None));
}

#[tokio::test]
async fn placeholder_grid_has_one_cell_per_pair() {
    let base = start_service().await;
    let cases = placeholder_cases();
    let arms = default_arms();
    let started = Instant::now();
    let results = run_benchmark(&cases, &arms, &base, &RunOptions::default())
        .await
        .unwrap();
    assert!(started.elapsed().as_secs() < 30);
    assert_eq!(results.len(), 20);
    // Case-major order.
    let order: Vec<_> = results.iter().map(|r| (r.case_id.as_str(), r.arm.as_str())).collect();
    let expect: Vec<_> = cases
        .iter()
        .flat_map(|c| arms.iter().map(move |a| (c.id.as_str(), a.label.as_str())))
        .collect();
    assert_eq!(order, expect);
    assert!(results.iter().all(|r| r.note.is_none()), "{results:#?}");

    let summary = Summary::from_results(&results);
    assert_eq!((summary.score.len(), summary.score[0].len()), (5, 4));
    assert_eq!(summary.arms, ["Py+Md", "Scene only", "Discourse one-shot", "All"]);
    assert_eq!(summary.seconds_by_model["mock-hash"].runs, 20);
    // Prompts differ by arm, so prompt sizes must too.
    let first: Vec<_> = results[..4].iter().map(|r| r.prompt_tokens).collect();
    assert!(first.windows(2).any(|w| w[0] != w[1]), "{first:?}");
}

#[tokio::test]
async fn failed_runs_score_zero_and_the_run_continues() {
    let base = start_service().await;
    let cases = [case("c1", "first"), case("c2", "  ")];
    let arms = [arm("good", "mock-echo"), arm("missing", "no-such-model")];
    let results = run_benchmark(&cases, &arms, &base, &RunOptions::default())
        .await
        .unwrap();
    assert_eq!(results.len(), 4);
    assert_eq!(results[0].output, "first ");
    assert_eq!(results[0].score, None);
    for r in &results[1..] {
        assert_eq!((r.lines_total, r.lines_ok, r.score), (0, Some(0), Some(0)));
        assert!(r.note.as_deref().unwrap().starts_with("error: "), "{r:?}");
    }
}

#[tokio::test]
async fn reviewed_scores_flow_into_report() {
    let base = start_service().await;
    let cases = [case("code", "x = 1 y = foo() z = 3 w = 4 v = 5")];
    let arms = [arm("echo", "mock-echo")];
    let mut results = run_benchmark(&cases, &arms, &base, &RunOptions::default())
        .await
        .unwrap();
    // Echo puts everything on one line, found by the heuristic.
    assert_eq!(results[0].lines_total, 1);
    assert!(results[0].note.as_deref().unwrap().contains("heuristic"));

    review_results(
        &mut results,
        &[ReviewEntry {
            case_id: "code".into(),
            arm: "echo".into(),
            lines_ok: 1,
            comment: None,
        }],
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&results, dir.path()).unwrap();
    let rows = read_results_csv(&files.results_csv).unwrap();
    assert_eq!(rows[0].score, Some(5));
    let summary: Summary = serde_json::from_slice(&std::fs::read(&files.summary_json).unwrap()).unwrap();
    assert_eq!(summary.score[0][0], results[0].score);
}

#[tokio::test]
async fn unreachable_endpoint_is_an_error() {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let err = run_benchmark(
        &[case("c", "q")],
        &[arm("a", "mock-hash")],
        &format!("http://{addr}"),
        &RunOptions::default(),
    )
    .await
    .unwrap_err();
    assert!(matches!(err, BenchError::Unreachable { .. }), "{err}");
    let err = run_benchmark(
        &[],
        &[arm("a", "mock-hash")],
        "http://127.0.0.1:1",
        &RunOptions::default(),
    )
    .await
    .unwrap_err();
    assert!(matches!(err, BenchError::Invalid(_)));
}
