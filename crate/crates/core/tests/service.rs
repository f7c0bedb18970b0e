use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use tourflow::dialogue::Engine;
use tourflow::llm::{ChatTransport, ScriptedTransport, StubReply};
use tourflow::service::{
    replay_log, router, FileStore, MemoryStore, QueuePolicy, Service, ServiceConfig, SessionStore,
};

/// Two question states in a row, each answered by the LLM.
const QA_FLOW: &str = "ask\tice_break\t何か質問はありますか？\tis_question()\tllm_answer()\tmore\n\
ask\tice_break\t\tdefault\t\tmore\n\
more\tsightseeing\tほかにありますか？\tis_question()\tllm_answer()\tdone\n\
more\tsightseeing\t\tdefault\t\tdone\n\
done\trecommend\tありがとうございました。\t\t\t\n";

const DELAY: Duration = Duration::from_millis(500);

fn stub(delay: Duration) -> Arc<dyn ChatTransport> {
    Arc::new(ScriptedTransport::repeating(StubReply::Answer("北区にあります。".into())).with_delay(delay))
}

fn shipped_engine() -> Engine {
    ServiceConfig::default().build_engine(stub(Duration::ZERO)).unwrap()
}

fn qa_engine(delay: Duration) -> (tempfile::TempDir, Engine) {
    let dir = tempfile::tempdir().unwrap();
    let flow = dir.path().join("flow.tsv");
    std::fs::write(&flow, QA_FLOW).unwrap();
    let config = ServiceConfig {
        flow_path: Some(flow),
        ..ServiceConfig::default()
    };
    let engine = config.build_engine(stub(delay)).unwrap();
    (dir, engine)
}

async fn spawn(service: Service) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(Arc::new(service))).await.unwrap() });
    format!("http://{addr}")
}

async fn create(client: &reqwest::Client, base: &str) -> (String, Vec<Value>) {
    let r = client.post(format!("{base}/v1/sessions")).send().await.unwrap();
    assert_eq!(r.status(), 201);
    let v: Value = r.json().await.unwrap();
    (v["session_id"].as_str().unwrap().to_string(), v["events"].as_array().unwrap().clone())
}

async fn say(client: &reqwest::Client, base: &str, id: &str, text: &str) -> (u16, Value) {
    let r = client
        .post(format!("{base}/v1/sessions/{id}/utterances"))
        .json(&json!({ "text": text }))
        .send()
        .await
        .unwrap();
    (r.status().as_u16(), r.json().await.unwrap())
}

/// Reads an SSE response, stamping each frame with its arrival time.
async fn sse_frames(mut r: reqwest::Response, limit: usize) -> Vec<(Instant, String, Value)> {
    let mut buf = String::new();
    let mut frames = Vec::new();
    while frames.len() < limit {
        let Some(chunk) = r.chunk().await.unwrap() else { break };
        let at = Instant::now();
        buf.push_str(std::str::from_utf8(&chunk).unwrap());
        while let Some(end) = buf.find("\n\n") {
            let frame: String = buf.drain(..end + 2).collect();
            let mut kind = String::new();
            let mut data = String::new();
            for line in frame.lines() {
                if let Some(v) = line.strip_prefix("event:") {
                    kind = v.trim().to_string();
                } else if let Some(v) = line.strip_prefix("data:") {
                    data.push_str(v.trim_start());
                }
            }
            if !data.is_empty() {
                frames.push((at, kind, serde_json::from_str(&data).unwrap()));
            }
        }
    }
    frames
}

fn seqs(events: &[Value]) -> Vec<u64> {
    events.iter().map(|e| e["seq"].as_u64().unwrap()).collect()
}

#[tokio::test(flavor = "multi_thread")]
async fn create_and_status_codes() {
    let base = spawn(Service::new(shipped_engine(), MemoryStore::new(), QueuePolicy::Queue)).await;
    let client = reqwest::Client::new();

    let (a, events) = create(&client, &base).await;
    let (b, _) = create(&client, &base).await;
    assert_ne!(a, b);
    assert!(events.iter().any(|e| e["type"] == "image" && e["image_id"] == "quiz_kinkakuji"));
    assert_eq!(seqs(&events), (0..events.len() as u64).collect::<Vec<_>>());

    let (status, _) = say(&client, &base, "no-such-session", "はい").await;
    assert_eq!(status, 404);
    let r = client
        .post(format!("{base}/v1/sessions/{a}/utterances"))
        .json(&json!({ "words": "はい" }))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 400);
    let r = client
        .post(format!("{base}/v1/sessions/{a}/utterances"))
        .body("not json")
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 400);
    assert_eq!(client.get(format!("{base}/v1/sessions/nope")).send().await.unwrap().status(), 404);

    let snap: Value = client.get(format!("{base}/v1/sessions/{a}")).send().await.unwrap().json().await.unwrap();
    assert_eq!(snap["turn_count"], 0);
    assert_eq!(snap["ended"], false);
    assert_eq!(snap["current_state"], "greeting");
}

#[tokio::test(flavor = "multi_thread")]
async fn full_conversation_then_conflict() {
    let base = spawn(Service::new(shipped_engine(), MemoryStore::new(), QueuePolicy::Queue)).await;
    let client = reqwest::Client::new();
    let (id, opening) = create(&client, &base).await;
    let mut all = opening;
    let mut routes = 0;
    for turn in 0..100 {
        let text = if turn == 0 { "金閣寺" } else { "はい" };
        let (status, body) = say(&client, &base, &id, text).await;
        assert_eq!(status, 200, "{body}");
        let events = body["events"].as_array().unwrap().clone();
        routes += events.iter().filter(|e| e["type"] == "routes").count();
        let ended = events.last().unwrap()["type"] == "end";
        all.extend(events);
        if ended {
            break;
        }
    }
    assert_eq!(routes, 1);
    let cards = all.iter().find(|e| e["type"] == "routes").unwrap();
    assert_eq!(cards["routes"].as_array().unwrap().len(), 2);
    let s = seqs(&all);
    assert!(s.windows(2).all(|w| w[1] == w[0] + 1), "{s:?}");

    let (status, body) = say(&client, &base, &id, "はい").await;
    assert_eq!(status, 409);
    assert_eq!(body["error"], "ended");
}

#[tokio::test(flavor = "multi_thread")]
async fn filler_is_flushed_before_the_answer() {
    let (_dir, engine) = qa_engine(DELAY);
    let base = spawn(Service::new(engine, MemoryStore::new(), QueuePolicy::Queue)).await;
    let client = reqwest::Client::new();
    let (id, _) = create(&client, &base).await;

    let r = client
        .post(format!("{base}/v1/sessions/{id}/utterances"))
        .header("accept", "text/event-stream")
        .json(&json!({ "text": "金閣寺はどこですか？" }))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 200);
    assert!(r.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
    let frames = sse_frames(r, 10).await;
    let kinds: Vec<&str> = frames.iter().map(|f| f.1.as_str()).collect();
    assert_eq!(kinds, ["filler", "utterance", "utterance"]);
    assert_eq!(frames[1].2["text"], "北区にあります。");
    let gap = frames[1].0 - frames[0].0;
    assert!(gap >= DELAY - Duration::from_millis(50), "filler arrived only {gap:?} before the answer");
}

#[tokio::test(flavor = "multi_thread")]
async fn queue_policy_serializes_turns() {
    let (_dir, engine) = qa_engine(DELAY);
    let base = spawn(Service::new(engine, MemoryStore::new(), QueuePolicy::Queue)).await;
    let client = reqwest::Client::new();
    let (id, _) = create(&client, &base).await;

    let started = Instant::now();
    let (first, second) = tokio::join!(say(&client, &base, &id, "どこですか？"), async {
        tokio::time::sleep(Duration::from_millis(100)).await;
        say(&client, &base, &id, "何時ですか？").await
    });
    assert!(started.elapsed() >= DELAY * 2);
    assert_eq!(first.0, 200);
    assert_eq!(second.0, 200);
    let a = seqs(first.1["events"].as_array().unwrap());
    let b = seqs(second.1["events"].as_array().unwrap());
    assert_eq!(b[0], a.last().unwrap() + 1);
    assert_eq!(second.1["events"].as_array().unwrap().last().unwrap()["type"], "end");
}

#[tokio::test(flavor = "multi_thread")]
async fn reject_policy_answers_busy() {
    let (_dir, engine) = qa_engine(DELAY);
    let base = spawn(Service::new(engine, MemoryStore::new(), QueuePolicy::Reject)).await;
    let client = reqwest::Client::new();
    let (id, _) = create(&client, &base).await;

    let (first, second) = tokio::join!(say(&client, &base, &id, "どこですか？"), async {
        tokio::time::sleep(Duration::from_millis(100)).await;
        say(&client, &base, &id, "何時ですか？").await
    });
    assert_eq!(first.0, 200);
    assert_eq!(second.0, 409);
    assert_eq!(second.1["error"], "busy");
}

#[tokio::test(flavor = "multi_thread")]
async fn broken_flow_answers_503() {
    let base = spawn(Service::unavailable("flow failed validation")).await;
    let r = reqwest::Client::new().post(format!("{base}/v1/sessions")).send().await.unwrap();
    assert_eq!(r.status(), 503);
}

#[tokio::test(flavor = "multi_thread")]
async fn restored_session_behaves_like_the_original() {
    let base = spawn(Service::new(shipped_engine(), MemoryStore::new(), QueuePolicy::Queue)).await;
    let client = reqwest::Client::new();
    let (a, _) = create(&client, &base).await;
    for text in ["金閣寺", "はい", "ラーメンが好きです"] {
        assert_eq!(say(&client, &base, &a, text).await.0, 200);
    }
    let mut snap: Value = client.get(format!("{base}/v1/sessions/{a}")).send().await.unwrap().json().await.unwrap();
    snap["session_id"] = "copy-1".into();
    let r = client.put(format!("{base}/v1/sessions/copy-1")).json(&snap).send().await.unwrap();
    assert_eq!(r.status(), 200);

    for text in ["春です", "はい", "電車で行きたいです", "いいえ"] {
        let (sa, ea) = say(&client, &base, &a, text).await;
        let (sb, eb) = say(&client, &base, "copy-1", text).await;
        assert_eq!((sa, sb), (200, 200));
        assert_eq!(ea["events"], eb["events"]);
    }

    let mut bad = snap.clone();
    bad["current_state"] = "nowhere".into();
    let r = client.put(format!("{base}/v1/sessions/copy-1")).json(&bad).send().await.unwrap();
    assert_eq!(r.status(), 400);
    let r = client.put(format!("{base}/v1/sessions/other")).json(&snap).send().await.unwrap();
    assert_eq!(r.status(), 400);
}

#[tokio::test(flavor = "multi_thread")]
async fn event_stream_mirrors_turns() {
    let (_dir, engine) = qa_engine(Duration::ZERO);
    let base = spawn(Service::new(engine, MemoryStore::new(), QueuePolicy::Queue)).await;
    let client = reqwest::Client::new();
    let (id, _) = create(&client, &base).await;
    let stream = client.get(format!("{base}/v1/sessions/{id}/events")).send().await.unwrap();
    assert_eq!(stream.status(), 200);
    let reader = tokio::spawn(sse_frames(stream, 3));
    tokio::time::sleep(Duration::from_millis(100)).await;
    let (_, body) = say(&client, &base, &id, "どこですか？").await;
    let frames = tokio::time::timeout(Duration::from_secs(5), reader).await.unwrap().unwrap();
    let pushed: Vec<Value> = frames.into_iter().map(|f| f.2).collect();
    assert_eq!(&pushed, body["events"].as_array().unwrap());
}

#[tokio::test(flavor = "multi_thread")]
async fn file_store_survives_restart_and_replays() {
    let data = tempfile::tempdir().unwrap();
    let store: Arc<dyn SessionStore> = FileStore::open(data.path()).unwrap();
    let base = spawn(Service::new(shipped_engine(), store.clone(), QueuePolicy::Queue)).await;
    let client = reqwest::Client::new();
    let (id, _) = create(&client, &base).await;
    let mut texts = vec!["金閣寺", "ラーメン", "秋", "はい"];
    texts.extend(std::iter::repeat("はい").take(6));
    for text in &texts {
        assert_eq!(say(&client, &base, &id, text).await.0, 200);
    }
    let before: Value = client.get(format!("{base}/v1/sessions/{id}")).send().await.unwrap().json().await.unwrap();

    // A second service over the same directory loads the session lazily.
    let reopened: Arc<dyn SessionStore> = FileStore::open(data.path()).unwrap();
    let base2 = spawn(Service::new(shipped_engine(), reopened.clone(), QueuePolicy::Queue)).await;
    let after: Value = client.get(format!("{base2}/v1/sessions/{id}")).send().await.unwrap().json().await.unwrap();
    assert_eq!(before, after);

    let log = reopened.turn_log(&id).unwrap();
    assert_eq!(log.len(), texts.len() + 1);
    let replayed = replay_log(&shipped_engine(), &id, &log).unwrap();
    let events = |l: &[tourflow::service::TurnRecord]| -> Vec<(u64, String)> {
        l.iter()
            .map(|r| (r.first_seq, serde_json::to_string(&r.events).unwrap()))
            .collect()
    };
    assert_eq!(events(&replayed), events(&log));
}
