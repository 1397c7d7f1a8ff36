//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so the report is always printed; exits nonzero if any fail.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use slicerchat_bench::{default_arms, placeholder_cases, run_benchmark, score_from_line_fraction, RunOptions, Summary};
use slicerchat_core::generation::mock_hash_tokens;
use slicerchat_core::index::{EmbedderSpec, HashEmbedder, IndexError, SearchHit, VectorStore};
use slicerchat_core::ingest::{
    chunk_document, count_tokens, load_qa_dataset, scan_repository, write_corpus, ChunkingMode,
};
use slicerchat_core::rag::{assemble_prompt, SourceHits, PROMPT_HEADER};
use slicerchat_core::{
    Chunk, ChunkingPolicy, Document, EmbeddingVector, GenerationParams, KnowledgeBase, QAPair, RagConfig,
    RetrievalBundle, SourceKind,
};
use slicerchat_server::{BackendConfig, ChatClient, ChatEvent, ChatRequest, ChatService, RagToggles, ServiceConfig};

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Check + 'a>);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let held: bool = $cond;
        if !held {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let criteria: Vec<Criterion> = vec![
        ("chunker stride and random-policy coverage", Box::new(chunker_stride)),
        ("search matches exhaustive scorer", Box::new(search_oracle)),
        (
            "store persistence byte-identical, bad magic rejected",
            Box::new(persistence),
        ),
        ("prompt budget and exemplar-last eviction", Box::new(prompt_budget)),
        ("line-fraction scoring anchors", Box::new(scoring)),
        (
            "streaming end-to-end over HTTP",
            Box::new(|| rt.block_on(streaming_end_to_end())),
        ),
        (
            "benchmark grid 5 cases x 4 arms",
            Box::new(|| rt.block_on(benchmark_grid())),
        ),
        ("ingestion determinism and 2048-pair Q&A load", Box::new(ingestion)),
    ];

    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome =
            std::panic::catch_unwind(std::panic::AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.2}s) {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2}s) {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn words(n: usize) -> String {
    (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
}

/// Window i covers [i·stride, min(i·stride + max, len)) for every i with
/// i·stride < len.
fn stride_oracle(len: usize, max: usize, overlap: usize) -> Vec<(usize, usize)> {
    let stride = max - overlap;
    (0..)
        .map(|i| i * stride)
        .take_while(|&s| s < len)
        .map(|s| (s, (s + max).min(len)))
        .collect()
}

fn chunker_stride() -> Check {
    let started = Instant::now();
    let doc = Document::new("d", SourceKind::MarkdownDoc, "d.md", words(450));
    let policy = ChunkingPolicy::new(200, 50, ChunkingMode::TokenOnly).unwrap();
    let spans: Vec<_> = chunk_document(&doc, &policy)
        .iter()
        .map(|c| (c.token_start, c.token_end))
        .collect();
    ensure!(
        spans == [(0, 200), (150, 350), (300, 450)],
        "450-token spans were {spans:?}"
    );
    // Structure-aware mode has no boundaries to use here, so it must agree.
    let structured = chunk_document(&doc, &ChunkingPolicy::default());
    ensure!(
        structured.len() == 3,
        "structure-aware produced {} chunks",
        structured.len()
    );

    let mut rng = StdRng::seed_from_u64(0x5eed);
    for trial in 0..1000 {
        let max = rng.gen_range(1..=300);
        let overlap = rng.gen_range(0..max);
        let token_only = rng.gen_bool(0.5);
        let mode = if token_only {
            ChunkingMode::TokenOnly
        } else {
            ChunkingMode::StructureAware
        };
        let policy = ChunkingPolicy::new(max, overlap, mode).unwrap();
        let mut text = String::new();
        for line in 0..rng.gen_range(0..60) {
            match rng.gen_range(0..6) {
                0 => text.push_str(&format!("# Heading {line}\n")),
                1 => text.push_str(&format!("def f{line}(x):\n    return x + {line}\n")),
                _ => {
                    let n = rng.gen_range(0..25);
                    text.push_str(&words(n));
                    text.push('\n');
                }
            }
        }
        let len = count_tokens(&text);
        let doc = Document::new(format!("t{trial}"), SourceKind::PythonCode, "t.py", text);
        let chunks = chunk_document(&doc, &policy);
        let mut covered = vec![false; len];
        for c in &chunks {
            ensure!(
                c.token_len() >= 1 && c.token_len() <= max,
                "trial {trial}: chunk of {} > {max}",
                c.token_len()
            );
            ensure!(c.token_end <= len, "trial {trial}: chunk past end");
            covered[c.token_start..c.token_end].iter_mut().for_each(|x| *x = true);
        }
        ensure!(
            covered.iter().all(|&x| x),
            "trial {trial}: tokens not covered (len {len}, {max}/{overlap})"
        );
        if token_only {
            let got: Vec<_> = chunks.iter().map(|c| (c.token_start, c.token_end)).collect();
            let want = stride_oracle(len, max, overlap);
            ensure!(got == want, "trial {trial}: {got:?} != {want:?}");
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 5.0, "took {secs:.2}s");
    Ok("1000 random policies".into())
}

fn random_unit(rng: &mut StdRng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn chunk(i: usize) -> Chunk {
    Chunk {
        doc_id: format!("doc-{i}"),
        seq: 0,
        text: format!("record {i}"),
        token_start: 0,
        token_end: 2,
        kind: SourceKind::MarkdownDoc,
    }
}

fn search_oracle() -> Check {
    let started = Instant::now();
    let dim = 384;
    let mut rng = StdRng::seed_from_u64(42);
    let spec = EmbedderSpec {
        name: "random".into(),
        dim,
    };
    let mut store = VectorStore::new(spec);
    let mut raw: Vec<Vec<f32>> = Vec::new();
    for i in 0..1000 {
        let v = EmbeddingVector::normalized(&random_unit(&mut rng, dim));
        raw.push(v.as_slice().to_vec());
        store.add(chunk(i), &v).map_err(|e| e.to_string())?;
    }
    for q in 0..50 {
        let query = EmbeddingVector::normalized(&random_unit(&mut rng, dim));
        let qv = query.as_slice();
        let mut scored: Vec<(f64, u64)> = raw
            .iter()
            .enumerate()
            .map(|(id, v)| {
                (
                    v.iter().zip(qv).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum(),
                    id as u64,
                )
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for k in [1, 5, 20] {
            let got: Vec<u64> = store
                .search(&query, k)
                .map_err(|e| e.to_string())?
                .iter()
                .map(|h| h.id)
                .collect();
            let want: Vec<u64> = scored[..k].iter().map(|s| s.1).collect();
            ensure!(got == want, "query {q} k={k}: {got:?} != {want:?}");
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.2}s");
    Ok("50 queries x k in {1,5,20}".into())
}

fn persistence() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(7);
    let mut store = VectorStore::new(EmbedderSpec {
        name: "random".into(),
        dim: 32,
    });
    for i in 0..100 {
        store
            .add(chunk(i), &EmbeddingVector::normalized(&random_unit(&mut rng, 32)))
            .map_err(|e| e.to_string())?;
    }
    let (a, b) = (dir.path().join("a.vstr"), dir.path().join("b.vstr"));
    store.save(&a).map_err(|e| e.to_string())?;
    VectorStore::load(&a)
        .map_err(|e| e.to_string())?
        .save(&b)
        .map_err(|e| e.to_string())?;
    let (first, second) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    ensure!(first == second, "re-saved file differs");

    let mut corrupt = first.clone();
    corrupt[0] = b'X';
    std::fs::write(&a, &corrupt).unwrap();
    match VectorStore::load(&a) {
        Err(IndexError::Corrupt { .. }) => {}
        other => return Err(format!("bad magic accepted: {:?}", other.map(|s| s.len()))),
    }
    Ok(format!("{} bytes", first.len()))
}

fn hit(kind: SourceKind, id: u64, score: f64, origin: String, text: String) -> SearchHit {
    let token_end = count_tokens(&text);
    SearchHit {
        id,
        score,
        chunk: Chunk {
            doc_id: origin,
            seq: 0,
            text,
            token_start: 0,
            token_end,
            kind,
        },
    }
}

fn prompt_budget() -> Check {
    let mut rng = StdRng::seed_from_u64(99);
    let mut exemplar_evictions = 0;
    for case in 0..500 {
        let mut sources = Vec::new();
        let mut n = 0;
        for kind in SourceKind::ALL {
            if rng.gen_bool(0.3) {
                continue;
            }
            let hits = (0..rng.gen_range(1..4))
                .map(|_| {
                    n += 1;
                    let text = if kind == SourceKind::DiscourseQA {
                        format!("Q: {}\nA: {}", words(rng.gen_range(1..10)), words(rng.gen_range(1..40)))
                    } else {
                        words(rng.gen_range(1..60))
                    };
                    hit(kind, n, rng.gen_range(-1.0..1.0), format!("origin-{n}"), text)
                })
                .collect();
            sources.push(SourceHits { kind, hits });
        }
        let bundle = RetrievalBundle { sources };
        let query = words(rng.gen_range(1..15));
        let mut config = RagConfig::with_sources(SourceKind::ALL);
        config.prompt_token_budget = 100_000;
        let full = assemble_prompt(&query, &bundle, &config).map_err(|e| e.to_string())?;
        let base = count_tokens(PROMPT_HEADER) + count_tokens(&format!("### Question\n{query}\n[/INST]\n"));
        config.prompt_token_budget = rng.gen_range(base..=full.token_count + 5);
        let p = assemble_prompt(&query, &bundle, &config).map_err(|e| format!("case {case}: {e}"))?;

        ensure!(
            p.token_count <= config.prompt_token_budget,
            "case {case}: {} > budget",
            p.token_count
        );
        ensure!(
            p.token_count == count_tokens(&p.text),
            "case {case}: token_count disagrees with text"
        );
        ensure!(
            p.text.starts_with(PROMPT_HEADER) && p.text.contains(&query),
            "case {case}: header/question lost"
        );
        for kept in p.provenance.iter().filter(|k| k.kind != SourceKind::DiscourseQA) {
            ensure!(
                p.text.contains(&format!("--- {}\n", kept.origin)),
                "case {case}: {} not rendered",
                kept.origin
            );
        }
        // The exemplar is the top discourse hit; anything below it is
        // dropped up front and is not a budget eviction.
        let exemplar = bundle
            .hits(SourceKind::DiscourseQA)
            .first()
            .map(|h| h.chunk.doc_id.clone());
        if let Some(ex) = exemplar {
            if let Some(pos) = p.dropped.iter().position(|d| d.origin == ex) {
                exemplar_evictions += 1;
                ensure!(
                    pos == p.dropped.len() - 1,
                    "case {case}: items evicted after the exemplar"
                );
                ensure!(
                    p.provenance.is_empty(),
                    "case {case}: exemplar evicted while other chunks remain"
                );
            }
        }
    }

    // Planted sentinel reaches the rendered prompt through real retrieval.
    let mut docs: Vec<Document> = (0..40)
        .map(|i| {
            Document::new(
                format!("m{i}"),
                SourceKind::MarkdownDoc,
                format!("doc{i}.md"),
                words(80),
            )
        })
        .collect();
    docs.push(Document::new(
        "sentinel.md",
        SourceKind::MarkdownDoc,
        "sentinel.md",
        "quokka sentinel marmalade procedure",
    ));
    let qa = vec![QAPair {
        question: "unrelated".into(),
        answer: "nothing".into(),
        origin: "t/1".into(),
        author: None,
    }];
    let (kb, _) = KnowledgeBase::build(&docs, &qa, ChunkingPolicy::default(), Arc::new(HashEmbedder::default()))
        .map_err(|e| e.to_string())?;
    let config = RagConfig::default();
    let bundle = kb
        .retrieve("quokka marmalade procedure", &config, None, None)
        .map_err(|e| e.to_string())?;
    let p = assemble_prompt("quokka marmalade procedure", &bundle, &config).map_err(|e| e.to_string())?;
    ensure!(
        p.text.contains("--- sentinel.md\nquokka sentinel marmalade procedure"),
        "sentinel missing from prompt"
    );
    Ok(format!("500 cases, {exemplar_evictions} exemplar evictions"))
}

fn scoring() -> Check {
    let cases = [
        ((10, 10), 5),
        ((1, 1), 5),
        ((2, 10), 1),
        ((20, 100), 1),
        ((0, 0), 0),
        ((0, 7), 0),
    ];
    for ((ok, total), want) in cases {
        let got = score_from_line_fraction(ok, total).map_err(|e| e.to_string())?;
        ensure!(got == want, "({ok},{total}) -> {got}, want {want}");
    }
    ensure!(
        score_from_line_fraction(3, 2).is_err(),
        "lines_ok > lines_total accepted"
    );
    Ok(String::new())
}

async fn start_service() -> Result<String, String> {
    let docs = vec![
        Document::new(
            "p",
            SourceKind::PythonCode,
            "load.py",
            "volume = slicer.util.loadVolume(path)",
        ),
        Document::new(
            "m",
            SourceKind::MarkdownDoc,
            "seg.md",
            "# Segment Editor\nThreshold the volume.",
        ),
    ];
    let qa = vec![QAPair {
        question: "How do I make a sphere?".into(),
        answer: "Use vtkSphereSource.".into(),
        origin: "t/7".into(),
        author: None,
    }];
    let (kb, _) = KnowledgeBase::build(&docs, &qa, ChunkingPolicy::default(), Arc::new(HashEmbedder::default()))
        .map_err(|e| e.to_string())?;
    let config = ServiceConfig {
        backends: BackendConfig::defaults(),
        default_model: None,
        default_rag: RagConfig::default(),
    };
    let service = Arc::new(ChatService::new(Arc::new(kb), config).map_err(|e| e.to_string())?);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
        .await
        .map_err(|e| e.to_string())?;
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(slicerchat_server::serve(listener, service));
    Ok(base)
}

async fn streaming_end_to_end() -> Check {
    let base = start_service().await?;
    let client = ChatClient::new(&base).map_err(|e| e.to_string())?;
    let question = "threshold the chest CT";
    let request = ChatRequest {
        model: Some("mock-hash".into()),
        rag: Some(RagToggles::default()),
        params: GenerationParams {
            seed: 3,
            inter_token_delay_ms: 10,
            ..GenerationParams::default()
        },
        ..ChatRequest::new("acceptance", question)
    };
    let started = Instant::now();
    let mut stream = client.chat(&request).await.map_err(|e| e.to_string())?;
    let (mut text, mut eos, mut stats, mut elapsed) = (String::new(), 0, None, Duration::ZERO);
    while let Some(event) = stream.next_event().await {
        match event.map_err(|e| e.to_string())? {
            ChatEvent::Token { text: t } => text.push_str(&t),
            ChatEvent::Eos { stats: s } => {
                elapsed = started.elapsed();
                eos += 1;
                stats = Some(s);
            }
            ChatEvent::Error { message } => return Err(format!("error event: {message}")),
        }
    }
    let prompt = format!("{PROMPT_HEADER}### Question\n{question}\n[/INST]\n");
    let expected = mock_hash_tokens(&prompt, 3, 1024).concat();
    ensure!(text == expected, "reassembled {text:?} != {expected:?}");
    ensure!(
        expected.split_whitespace().count() == 16,
        "mock produced {} tokens",
        expected.split_whitespace().count()
    );
    ensure!(eos == 1, "{eos} eos events");
    let secs = elapsed.as_secs_f64();
    ensure!((0.16..=0.60).contains(&secs), "inference_seconds {secs:.3}");
    let stats = stats.unwrap();
    ensure!(
        stats.total_seconds >= stats.backend_seconds,
        "total {} < backend {}",
        stats.total_seconds,
        stats.backend_seconds
    );
    Ok(format!("inference {secs:.3}s"))
}

async fn benchmark_grid() -> Check {
    let started = Instant::now();
    let base = start_service().await?;
    let cases = placeholder_cases();
    let arms = default_arms();
    let labels: Vec<_> = arms.iter().map(|a| a.label.as_str()).collect();
    ensure!(
        labels == ["Py+Md", "Scene only", "Discourse one-shot", "All"],
        "arms {labels:?}"
    );
    let options = RunOptions {
        params: GenerationParams {
            inter_token_delay_ms: 10,
            ..GenerationParams::default()
        },
    };
    let results = run_benchmark(&cases, &arms, &base, &options)
        .await
        .map_err(|e| e.to_string())?;
    ensure!(results.len() == 20, "{} results", results.len());
    ensure!(results.iter().all(|r| r.note.is_none()), "some runs failed");
    let summary = Summary::from_results(&results);
    ensure!(
        summary.score.len() == 5 && summary.score.iter().all(|row| row.len() == 4),
        "score matrix shape"
    );
    ensure!(
        summary.inference_seconds.len() == 5 && summary.inference_seconds.iter().all(|r| r.len() == 4),
        "time matrix shape"
    );
    for r in &results {
        let c = summary.cases.iter().position(|x| *x == r.case_id).unwrap();
        let a = summary.arms.iter().position(|x| *x == r.arm).unwrap();
        ensure!(summary.score[c][a] == r.score, "score cell ({c},{a})");
        ensure!(
            summary.inference_seconds[c][a] == Some(r.inference_seconds),
            "time cell ({c},{a})"
        );
        ensure!(
            r.inference_seconds >= r.backend_seconds,
            "inference < backend for {}/{}",
            r.case_id,
            r.arm
        );
    }
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 30.0, "took {secs:.2}s");
    Ok("5x4 matrices".into())
}

fn fixture_repo(root: &Path) -> std::io::Result<()> {
    let files = [
        ("b/zeta.py", "import slicer\nprint('z')\n"),
        ("a/alpha.md", "# Alpha\ntext\n"),
        ("a/nested/beta.PY", "x = 1\n"),
        ("c/readme.md", "# C\n\nmore\n"),
        ("c/skip.txt", "no\n"),
    ];
    for (rel, body) in files {
        let path = root.join(rel);
        std::fs::create_dir_all(path.parent().unwrap())?;
        std::fs::write(path, body)?;
    }
    std::fs::write(root.join("c/binary.md"), [0xff, 0xfe, 0x00])
}

fn ingestion() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path().join("repo");
    fixture_repo(&root).map_err(|e| e.to_string())?;
    let ext = vec![".py".to_string(), ".md".to_string()];
    let mut outputs = Vec::new();
    for i in 0..2 {
        let report = scan_repository(&root, &ext).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("corpus{i}.jsonl"));
        write_corpus(&path, &report.documents).map_err(|e| e.to_string())?;
        outputs.push((std::fs::read(&path).unwrap(), report));
    }
    ensure!(outputs[0].0 == outputs[1].0, "corpus files differ between scans");
    let report = &outputs[0].1;
    let origins: BTreeSet<_> = report.documents.iter().map(|d| d.origin.as_str()).collect();
    ensure!(
        report.documents.len() == 4 && report.skipped_non_utf8 == 1,
        "scanned {origins:?}"
    );

    let qa_path = dir.path().join("qa.jsonl");
    let lines: Vec<String> = (0..2048)
        .map(|i| {
            serde_json::json!({"question": format!("q{i}"), "answer": format!("a{i}"), "origin": format!("t/{i}")})
                .to_string()
        })
        .collect();
    std::fs::write(&qa_path, lines.join("\n") + "\n").unwrap();
    let pairs = load_qa_dataset(&qa_path).map_err(|e| e.to_string())?;
    ensure!(pairs.len() == 2048, "{} pairs", pairs.len());
    ensure!(pairs[2047].question == "q2047", "last pair {:?}", pairs[2047]);
    Ok("4 docs, 2048 pairs".into())
}
