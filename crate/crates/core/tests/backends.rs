use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use slg_core::backends::{
    generate, BackendError, GenerationBackend, GenerationRequest, LexicalRouter, MemorizationExpert, Message,
    RemoteClient, RemoteConfig,
};
use slg_core::dataset::{Dataset, DatasetKind, QAPair, Split};
use slg_core::eval::tokenize;

fn qa(id: &str, question: &str, answer: &str, expert: &str) -> QAPair {
    QAPair {
        pair_id: id.into(),
        question: question.into(),
        answer: answer.into(),
        expert_name: expert.into(),
        split: Split::Train,
    }
}

const VOCAB: &[&str] = &[
    "spar",
    "rib",
    "skin",
    "panel",
    "rivet",
    "crack",
    "dent",
    "bolt",
    "torque",
    "seal",
    "frame",
    "web",
    "flap",
    "hinge",
    "doubler",
    "corrosion",
];

fn random_text(rng: &mut ChaCha8Rng, len: std::ops::Range<usize>) -> String {
    let n = rng.gen_range(len);
    (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// Exhaustive scan: exact normalized match, else highest Jaccard, lowest pair_id on ties.
fn jaccard_oracle(train: &[QAPair], query: &str) -> String {
    let q = tokenize(query).tokens;
    let mut sorted: Vec<&QAPair> = train.iter().collect();
    sorted.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    if let Some(p) = sorted.iter().find(|p| tokenize(&p.question).tokens == q) {
        return p.pair_id.clone();
    }
    let qs: BTreeSet<String> = q.into_iter().collect();
    let mut best: Option<(f64, &str)> = None;
    for p in sorted {
        let ps: BTreeSet<String> = tokenize(&p.question).tokens.into_iter().collect();
        let union = qs.union(&ps).count();
        let score = if union == 0 { 0.0 } else { qs.intersection(&ps).count() as f64 / union as f64 };
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, &p.pair_id));
        }
    }
    best.unwrap().1.to_string()
}

#[test]
fn memorization_matches_jaccard_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for round in 0..20 {
        let train: Vec<QAPair> = (0..10)
            .map(|i| {
                qa(&format!("p{:02}", (i * 7 + round) % 10), &random_text(&mut rng, 2..6), &format!("answer {i}"), "E")
            })
            .collect();
        let expert = MemorizationExpert::new(&Dataset::new("E", DatasetKind::Expert, train.clone())).unwrap();
        for _ in 0..20 {
            let query = random_text(&mut rng, 1..7);
            assert_eq!(expert.pair_for(&query), jaccard_oracle(&train, &query), "query {query:?}");
        }
    }
}

#[test]
fn memorization_recalls_its_own_questions() {
    let train: Vec<QAPair> = (0..8)
        .map(|i| qa(&format!("p{i}"), &format!("How do I fix part {i}?"), &format!("Do step {i}."), "E"))
        .collect();
    let expert = MemorizationExpert::new(&Dataset::new("E", DatasetKind::Expert, train.clone())).unwrap();
    for p in &train {
        let a = generate(&expert, &GenerationRequest::user(&p.question)).unwrap();
        let b = generate(&expert, &GenerationRequest::user(&p.question)).unwrap();
        assert_eq!(a.content, p.answer);
        assert_eq!(a.content, b.content);
    }
    let none = generate(&expert, &GenerationRequest::user("zzz qqq")).unwrap();
    assert_eq!(none.content, "Do step 0.");
}

#[test]
fn memorization_rejects_orchestrator_and_empty_sets() {
    let orch = Dataset::new("o", DatasetKind::Orchestrator, vec![qa("p", "q", "E", "E")]);
    assert!(matches!(MemorizationExpert::new(&orch), Err(BackendError::InvalidConfig(_))));
    assert!(MemorizationExpert::new(&Dataset::new("e", DatasetKind::Expert, vec![])).is_err());
}

/// Independent TF-IDF cosine: idf = ln(N/df) over expert profiles.
fn cosine_oracle(orch: &Dataset, query: &str) -> (String, Vec<(String, f64)>) {
    let mut profiles: BTreeMap<&str, BTreeMap<String, f64>> = BTreeMap::new();
    for p in &orch.pairs {
        let prof = profiles.entry(&p.answer).or_default();
        for t in tokenize(&p.question).tokens {
            *prof.entry(t).or_default() += 1.0;
        }
    }
    let n = profiles.len() as f64;
    let mut df: BTreeMap<&str, f64> = BTreeMap::new();
    for prof in profiles.values() {
        for t in prof.keys() {
            *df.entry(t).or_default() += 1.0;
        }
    }
    let idf = |t: &str| df.get(t).map(|d| (n / d).ln());
    let mut qv: BTreeMap<String, f64> = BTreeMap::new();
    for t in tokenize(query).tokens {
        if idf(&t).is_some() {
            *qv.entry(t).or_default() += 1.0;
        }
    }
    let qv: BTreeMap<&str, f64> = qv.iter().map(|(t, c)| (t.as_str(), c * idf(t).unwrap())).collect();
    let qn = qv.values().map(|w| w * w).sum::<f64>().sqrt();
    let mut scores = Vec::new();
    for (name, prof) in &profiles {
        let pv: BTreeMap<&str, f64> = prof.iter().map(|(t, c)| (t.as_str(), c * idf(t).unwrap())).collect();
        let pn = pv.values().map(|w| w * w).sum::<f64>().sqrt();
        let dot: f64 = qv.iter().map(|(t, w)| w * pv.get(t).copied().unwrap_or(0.0)).sum();
        let s = if qn == 0.0 || pn == 0.0 { 0.0 } else { dot / (qn * pn) };
        scores.push((name.to_string(), s));
    }
    let mut best = &scores[0];
    for s in &scores[1..] {
        if s.1 > best.1 + 1e-12 {
            best = s;
        }
    }
    (best.0.clone(), scores)
}

const DISTINCT: &[&str] =
    &["aileron", "elevator", "rudder", "flap", "spar", "rib", "stringer", "bulkhead", "longeron", "firewall"];
const SHARED: &[&str] = &["what", "is", "the", "procedure", "for", "repairing", "damaged", "parts"];

fn distinct_orchestrator() -> Dataset {
    let mut pairs = Vec::new();
    for (e, word) in DISTINCT.iter().enumerate() {
        let expert = format!("{} REPAIRS", word.to_uppercase());
        for q in 0..4 {
            let question = format!("{} {} {}?", SHARED[..4 + q].join(" "), word, SHARED[4..].join(" "));
            pairs.push(qa(&format!("e{e:02}-q{q}"), &question, &expert, &expert));
        }
    }
    Dataset::new("orchestrator", DatasetKind::Orchestrator, pairs)
}

#[test]
fn router_routes_distinctive_tokens_like_the_cosine_oracle() {
    let orch = distinct_orchestrator();
    let router = LexicalRouter::new(&orch).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut correct = 0;
    for i in 0..100 {
        let e = i % DISTINCT.len();
        let k = rng.gen_range(0..SHARED.len());
        let mut words: Vec<&str> = SHARED.choose_multiple(&mut rng, k).copied().collect();
        words.push(DISTINCT[e]);
        words.push("unseen");
        words.shuffle(&mut rng);
        let query = words.join(" ");
        let expected = format!("{} REPAIRS", DISTINCT[e].to_uppercase());
        let routed = generate(&router, &GenerationRequest::user(&query)).unwrap().content;
        assert_eq!(routed, cosine_oracle(&orch, &query).0, "{query}");
        correct += usize::from(routed == expected);
    }
    assert_eq!(correct, 100);
}

#[test]
fn router_agrees_with_oracle_on_mixed_queries() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let experts = ["ALPHA", "BRAVO", "CHARLIE", "DELTA", "ECHO"];
    let pairs: Vec<QAPair> = (0..40)
        .map(|i| {
            let e = experts[i % experts.len()];
            qa(&format!("p{i:02}"), &random_text(&mut rng, 3..9), e, e)
        })
        .collect();
    let orch = Dataset::new("orchestrator", DatasetKind::Orchestrator, pairs);
    let router = LexicalRouter::new(&orch).unwrap();
    for _ in 0..300 {
        let query = random_text(&mut rng, 1..8);
        let (oracle, scores) = cosine_oracle(&orch, &query);
        let ours = router.scores(&query);
        for ((a, x), (b, y)) in ours.iter().zip(&scores) {
            assert_eq!(a, b);
            assert!((x - y).abs() < 1e-9, "{query}: {x} vs {y}");
        }
        assert_eq!(router.route(&query), oracle, "{query}");
    }
}

#[test]
fn router_ties_go_to_the_smallest_name() {
    let orch = distinct_orchestrator();
    let router = LexicalRouter::new(&orch).unwrap();
    assert_eq!(router.route("what is the procedure"), "AILERON REPAIRS");
    assert_eq!(router.route(""), "AILERON REPAIRS");
    let expert = Dataset::new("e", DatasetKind::Expert, vec![qa("p", "q", "a", "E")]);
    assert!(LexicalRouter::new(&expert).is_err());
}

proptest! {
    #[test]
    fn router_ignores_word_order(seed in any::<u64>()) {
        let orch = distinct_orchestrator();
        let router = LexicalRouter::new(&orch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut words: Vec<&str> = (0..6).map(|_| if rng.gen_bool(0.5) { *DISTINCT.choose(&mut rng).unwrap() } else { *SHARED.choose(&mut rng).unwrap() }).collect();
        let before = router.route(&words.join(" "));
        words.shuffle(&mut rng);
        prop_assert_eq!(router.route(&words.join(" ")), before);
    }
}

struct Stub {
    url: String,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<String>>>,
    headers: Arc<Mutex<Vec<String>>>,
}

/// Minimal HTTP/1.1 server answering each request with `reply(body) -> (status, body, delay)`.
fn stub<F>(reply: F) -> Stub
where
    F: Fn(&str) -> (u16, String, Duration) + Send + Sync + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let headers = Arc::new(Mutex::new(Vec::new()));
    let reply = Arc::new(reply);
    let (h, b, hd) = (hits.clone(), bodies.clone(), headers.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let (h, b, hd, reply) = (h.clone(), b.clone(), hd.clone(), reply.clone());
            thread::spawn(move || serve(stream, &h, &b, &hd, reply.as_ref()));
        }
    });
    Stub { url, hits, bodies, headers }
}

fn serve(
    stream: TcpStream,
    hits: &AtomicUsize,
    bodies: &Mutex<Vec<String>>,
    headers: &Mutex<Vec<String>>,
    reply: &(dyn Fn(&str) -> (u16, String, Duration) + Send + Sync),
) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut len = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end().to_string();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().unwrap();
            }
        }
        headers.lock().unwrap().push(line);
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    let body = String::from_utf8(body).unwrap();
    hits.fetch_add(1, Ordering::SeqCst);
    bodies.lock().unwrap().push(body.clone());
    let (status, out, delay) = reply(&body);
    thread::sleep(delay);
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{out}",
        out.len()
    );
}

fn completion(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}], "usage": {"prompt_tokens": 3, "completion_tokens": 1}})
        .to_string()
}

fn client(url: &str, timeout_ms: u64, retry_budget: u32) -> RemoteClient {
    let mut cfg = RemoteConfig::new(url, "expert-a");
    cfg.timeout = Duration::from_millis(timeout_ms);
    cfg.retry_budget = retry_budget;
    cfg.backoff_base = Duration::from_millis(5);
    cfg.api_token = Some("secret".into());
    RemoteClient::new(cfg).unwrap()
}

#[test]
fn remote_echo_round_trip() {
    let s = stub(|body| {
        let v: Value = serde_json::from_str(body).unwrap();
        let last = v["messages"].as_array().unwrap().last().unwrap()["content"].as_str().unwrap().to_string();
        (200, completion(&last), Duration::ZERO)
    });
    let c = client(&s.url, 5_000, 0);
    let req = GenerationRequest::user("How do I patch the skin?").with_system("be brief").with_seed(5);
    let resp = generate(&c, &req).unwrap();
    assert_eq!(resp.content, "How do I patch the skin?");
    assert_eq!((resp.usage.prompt_tokens, resp.usage.completion_tokens), (3, 1));

    let sent: Value = serde_json::from_str(&s.bodies.lock().unwrap()[0]).unwrap();
    assert_eq!(
        sent,
        json!({
            "model": "expert-a",
            "messages": [{"role": "system", "content": "be brief"}, {"role": "user", "content": "How do I patch the skin?"}],
            "max_tokens": 512,
            "temperature": 0.0,
            "seed": 5
        })
    );
    assert!(s.headers.lock().unwrap().iter().any(|h| h.eq_ignore_ascii_case("authorization: Bearer secret")));
}

#[test]
fn remote_retries_server_errors_within_budget() {
    let s = stub(|_| (500, "{\"error\":\"boom\"}".into(), Duration::ZERO));
    let c = client(&s.url, 5_000, 2);
    match generate(&c, &GenerationRequest::user("q")) {
        Err(BackendError::Protocol { status, body_excerpt }) => {
            assert_eq!(status, Some(500));
            assert!(body_excerpt.contains("boom"));
        }
        other => panic!("expected a protocol error, got {other:?}"),
    }
    assert_eq!(s.hits.load(Ordering::SeqCst), 3);
    let bodies = s.bodies.lock().unwrap();
    assert!(bodies.iter().all(|b| b == &bodies[0]));
}

#[test]
fn remote_does_not_retry_client_errors() {
    let s = stub(|_| (404, "missing".into(), Duration::ZERO));
    let c = client(&s.url, 5_000, 3);
    assert!(matches!(
        generate(&c, &GenerationRequest::user("q")),
        Err(BackendError::Protocol { status: Some(404), .. })
    ));
    assert_eq!(s.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn remote_recovers_after_transient_failure() {
    let n = Arc::new(AtomicUsize::new(0));
    let seen = n.clone();
    let s = stub(move |_| {
        if seen.fetch_add(1, Ordering::SeqCst) == 0 {
            (503, "busy".into(), Duration::ZERO)
        } else {
            (200, completion("ok"), Duration::ZERO)
        }
    });
    let c = client(&s.url, 5_000, 1);
    assert_eq!(generate(&c, &GenerationRequest::user("q")).unwrap().content, "ok");
    assert_eq!(s.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn remote_times_out() {
    let s = stub(|_| (200, completion("late"), Duration::from_millis(1_500)));
    let c = client(&s.url, 300, 2);
    let started = Instant::now();
    match generate(&c, &GenerationRequest::user("q")) {
        Err(BackendError::Timeout { elapsed }) => assert!(elapsed >= Duration::from_millis(300), "{elapsed:?}"),
        other => panic!("expected a timeout, got {other:?}"),
    }
    assert!(started.elapsed() < Duration::from_millis(1_400));
}

#[test]
fn remote_unreachable_host_is_a_protocol_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let c = client(&format!("http://127.0.0.1:{port}/v1/chat/completions"), 5_000, 1);
    assert!(matches!(generate(&c, &GenerationRequest::user("q")), Err(BackendError::Protocol { status: None, .. })));
}

#[test]
fn remote_malformed_reply_keeps_an_excerpt() {
    let s = stub(|_| (200, "not json at all".into(), Duration::ZERO));
    let c = client(&s.url, 5_000, 0);
    match generate(&c, &GenerationRequest::user("q")) {
        Err(BackendError::Protocol { body_excerpt, .. }) => assert_eq!(body_excerpt, "not json at all"),
        other => panic!("expected a protocol error, got {other:?}"),
    }
    let empty = stub(|_| (200, completion("  "), Duration::ZERO));
    assert!(matches!(
        generate(&client(&empty.url, 5_000, 0), &GenerationRequest::user("q")),
        Err(BackendError::EmptyGeneration)
    ));
}

#[test]
fn remote_rejects_bad_endpoints_and_requests() {
    assert!(RemoteClient::new(RemoteConfig::new("not a url", "m")).is_err());
    assert!(RemoteClient::new(RemoteConfig::new("ftp://host/x", "m")).is_err());
    let s = stub(|_| (200, completion("x"), Duration::ZERO));
    let c = client(&s.url, 5_000, 0);
    let req =
        GenerationRequest { messages: vec![Message::system("only system")], max_tokens: 4, temperature: 0.0, seed: 0 };
    assert!(matches!(generate(&c, &req), Err(BackendError::InvalidRequest(_))));
    assert_eq!(s.hits.load(Ordering::SeqCst), 0);
}

#[test]
fn remote_bounds_in_flight_requests() {
    let live = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let (l, p) = (live.clone(), peak.clone());
    let s = stub(move |_| {
        let now = l.fetch_add(1, Ordering::SeqCst) + 1;
        p.fetch_max(now, Ordering::SeqCst);
        thread::sleep(Duration::from_millis(50));
        l.fetch_sub(1, Ordering::SeqCst);
        (200, completion("ok"), Duration::ZERO)
    });
    let mut cfg = RemoteConfig::new(&s.url, "m");
    cfg.max_in_flight = 2;
    let c = Arc::new(RemoteClient::new(cfg).unwrap());
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let c = c.clone();
            thread::spawn(move || generate(c.as_ref(), &GenerationRequest::user("q")).unwrap())
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert!(peak.load(Ordering::SeqCst) <= 2);
    assert_eq!(s.hits.load(Ordering::SeqCst), 8);
    assert!(!c.capabilities().deterministic && c.capabilities().remote);
}
