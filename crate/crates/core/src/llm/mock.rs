//! An in-process chat-completion server for tests and demos.
//!
//! [`MockServer`] speaks the same wire format as [`HttpChatClient`]
//! (`POST /v1/chat/completions`) and delegates each request to a
//! [`MockResponder`]. Responders are deterministic; the server itself adds
//! nothing that varies between runs.
//!
//! [`HttpChatClient`]: super::HttpChatClient

use std::collections::VecDeque;
use std::io::{self, BufRead};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::Deserialize;
use serde_json::json;
use tiny_http::{Header, Response, Server};

use super::{format_llm_output, ChatRequest, Role, TaskKey};
use crate::corpus::{EpicrisisRecord, Language};
use crate::pipeline::RulePipeline;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockReply {
    /// 200 with this assistant message.
    Content(String),
    /// An error status with a short body.
    Status(u16),
}

pub trait MockResponder: Send + Sync {
    fn respond(&self, request: &ChatRequest) -> MockReply;
}

impl<F> MockResponder for F
where
    F: Fn(&ChatRequest) -> MockReply + Send + Sync,
{
    fn respond(&self, request: &ChatRequest) -> MockReply {
        self(request)
    }
}

fn last_user_message(request: &ChatRequest) -> &str {
    request
        .messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .map_or("", |m| m.content.as_str())
}

fn is_translation(request: &ChatRequest) -> bool {
    request
        .messages
        .iter()
        .any(|m| m.role == Role::System && m.content.to_lowercase().contains("translate"))
}

/// Replies chosen by substring of the last user message; first rule wins.
pub struct ScriptedResponder {
    rules: Vec<(String, MockReply)>,
    fallback: Box<dyn MockResponder>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptLine {
    contains: String,
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    status: Option<u16>,
}

impl ScriptedResponder {
    pub fn new(fallback: impl MockResponder + 'static) -> Self {
        Self {
            rules: Vec::new(),
            fallback: Box::new(fallback),
        }
    }

    pub fn rule(mut self, contains: impl Into<String>, reply: MockReply) -> Self {
        self.rules.push((contains.into(), reply));
        self
    }

    /// JSON Lines script: `{"contains": str, "content": str}` or
    /// `{"contains": str, "status": int}`.
    pub fn with_script(mut self, reader: impl BufRead) -> io::Result<Self> {
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |m: String| {
                io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {m}", i + 1))
            };
            let parsed: ScriptLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            let reply = match (parsed.content, parsed.status) {
                (Some(c), None) => MockReply::Content(c),
                (None, Some(s)) => MockReply::Status(s),
                _ => {
                    return Err(bad(
                        "exactly one of `content` or `status` is required".into()
                    ))
                }
            };
            self.rules.push((parsed.contains, reply));
        }
        Ok(self)
    }

    pub fn with_script_file(self, path: &Path) -> io::Result<Self> {
        self.with_script(io::BufReader::new(std::fs::File::open(path)?))
    }
}

impl MockResponder for ScriptedResponder {
    fn respond(&self, request: &ChatRequest) -> MockReply {
        let user = last_user_message(request);
        self.rules
            .iter()
            .find(|(needle, _)| user.contains(needle.as_str()))
            .map(|(_, reply)| reply.clone())
            .unwrap_or_else(|| self.fallback.respond(request))
    }
}

/// Replies from a queue, then a fixed reply once the queue is drained.
pub struct SequenceResponder {
    queue: Mutex<VecDeque<MockReply>>,
    then: MockReply,
}

impl SequenceResponder {
    pub fn new(replies: impl IntoIterator<Item = MockReply>, then: MockReply) -> Self {
        Self {
            queue: Mutex::new(replies.into_iter().collect()),
            then,
        }
    }
}

impl MockResponder for SequenceResponder {
    fn respond(&self, _: &ChatRequest) -> MockReply {
        self.queue
            .lock()
            .expect("queue lock")
            .pop_front()
            .unwrap_or_else(|| self.then.clone())
    }
}

const GLOSSARY: &[(&str, &str)] = &[
    ("pacjentka", "the patient"),
    ("pacjent", "the patient"),
    ("lat", "years"),
    ("przyjęta", "admitted"),
    ("przyjęty", "admitted"),
    ("była", "was"),
    ("był", "was"),
    ("z", "with"),
    ("i", "and"),
    ("powodu", "because of"),
    ("wysypki", "rash"),
    ("wysypka", "rash"),
    ("wysypką", "rash"),
    ("pokrzywki", "urticaria"),
    ("pokrzywka", "urticaria"),
    ("rumieniem", "erythema"),
    ("duszności", "dyspnoea"),
    ("kaszlu", "cough"),
    ("podano", "given"),
    ("zalecono", "recommended"),
    ("chłopiec", "boy"),
    ("dziewczynka", "girl"),
];

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    chars
        .next()
        .map(|c| c.to_uppercase().chain(chars).collect())
        .unwrap_or_default()
}

/// Word-by-word glossary translation; unknown words pass through and a
/// leading capital is kept.
pub fn glossary_translate(text: &str) -> String {
    text.split_whitespace()
        .map(|word| {
            let core = word.trim_matches(|c: char| !c.is_alphanumeric());
            let lowered = core.to_lowercase();
            match GLOSSARY.iter().find(|(pl, _)| *pl == lowered) {
                Some((_, en)) if !core.is_empty() => {
                    let en = if core.starts_with(char::is_uppercase) {
                        capitalize(en)
                    } else {
                        en.to_string()
                    };
                    word.replacen(core, &en, 1)
                }
                _ => word.to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Answers extraction prompts with the rule pipeline's reading of the
/// context, and translation prompts with [`glossary_translate`].
pub struct RuleEchoResponder {
    pipeline: RulePipeline,
}

impl RuleEchoResponder {
    pub fn new(pipeline: RulePipeline) -> Self {
        Self { pipeline }
    }
}

impl MockResponder for RuleEchoResponder {
    fn respond(&self, request: &ChatRequest) -> MockReply {
        let text = last_user_message(request);
        if is_translation(request) {
            return MockReply::Content(glossary_translate(text));
        }
        let record = EpicrisisRecord {
            id: "mock".into(),
            doctor: String::new(),
            icd10: None,
            language: Language::Pl,
            text: text.to_string(),
            gold: None,
        };
        let Ok(e) = self.pipeline.extract(&record) else {
            return MockReply::Status(500);
        };
        let drugs = (!e.drugs.is_empty()).then(|| e.drugs.join(", "));
        MockReply::Content(format_llm_output(&[
            (TaskKey::Age, e.age.map(|a| a.to_string())),
            (TaskKey::Sex, e.sex.map(|s| s.to_string())),
            (TaskKey::Drugs, drugs),
            (TaskKey::SkinChanges, e.lesion),
        ]))
    }
}

/// A running mock endpoint; stops when dropped.
pub struct MockServer {
    server: Arc<Server>,
    workers: Vec<JoinHandle<()>>,
    base_url: String,
    hits: Arc<AtomicUsize>,
}

impl MockServer {
    /// Listen on an ephemeral localhost port.
    pub fn start(responder: impl MockResponder + 'static) -> io::Result<Self> {
        Self::bind("127.0.0.1:0", responder, 4)
    }

    pub fn bind(
        addr: &str,
        responder: impl MockResponder + 'static,
        workers: usize,
    ) -> io::Result<Self> {
        let server = Arc::new(Server::http(addr).map_err(io::Error::other)?);
        let local = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| io::Error::other("mock server is not on a TCP socket"))?;
        let responder: Arc<dyn MockResponder> = Arc::new(responder);
        let hits = Arc::new(AtomicUsize::new(0));
        let workers = (0..workers.max(1))
            .map(|_| {
                let server = Arc::clone(&server);
                let responder = Arc::clone(&responder);
                let hits = Arc::clone(&hits);
                std::thread::spawn(move || {
                    for request in server.incoming_requests() {
                        hits.fetch_add(1, Ordering::SeqCst);
                        handle(request, responder.as_ref());
                    }
                })
            })
            .collect();
        Ok(Self {
            server,
            workers,
            base_url: format!("http://{local}"),
            hits,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// Number of HTTP requests received so far.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    /// Block until the server is shut down from elsewhere.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

fn json_header() -> Header {
    Header::from_bytes("Content-Type", "application/json").expect("static header")
}

fn handle(mut request: tiny_http::Request, responder: &dyn MockResponder) {
    let path = request.url().split('?').next().unwrap_or("").to_string();
    if request.method() != &tiny_http::Method::Post || path != "/v1/chat/completions" {
        let _ = request.respond(Response::from_string("not found").with_status_code(404));
        return;
    }
    let mut body = String::new();
    if request.as_reader().read_to_string(&mut body).is_err() {
        let _ = request.respond(Response::from_string("unreadable body").with_status_code(400));
        return;
    }
    let chat: ChatRequest = match serde_json::from_str(&body) {
        Ok(c) => c,
        Err(e) => {
            let _ = request.respond(Response::from_string(e.to_string()).with_status_code(400));
            return;
        }
    };
    let response = match responder.respond(&chat) {
        MockReply::Content(content) => {
            let payload = json!({
                "id": "mock-completion",
                "object": "chat.completion",
                "model": chat.model,
                "choices": [{
                    "index": 0,
                    "message": {"role": "assistant", "content": content},
                    "finish_reason": "stop"
                }]
            });
            Response::from_string(payload.to_string()).with_header(json_header())
        }
        MockReply::Status(code) => {
            Response::from_string(format!("mock status {code}")).with_status_code(code)
        }
    };
    let _ = request.respond(response);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatMessage, ParseStatus};

    fn request(system: &str, user: &str) -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage::system(system), ChatMessage::user(user)],
            temperature: 0.0,
        }
    }

    #[test]
    fn glossary_loses_gender() {
        assert_eq!(
            glossary_translate("Pacjentka lat 5, przyjęta."),
            "The patient years 5, admitted."
        );
        assert_eq!(glossary_translate("Pacjent lat 5."), "The patient years 5.");
    }

    #[test]
    fn scripted_rules_and_fallback() {
        let r = ScriptedResponder::new(|_: &ChatRequest| MockReply::Status(503))
            .rule("Zyrtec", MockReply::Content("a".into()))
            .with_script(
                "{\"contains\":\"lat\",\"content\":\"b\"}\n\n{\"contains\":\"x\",\"status\":500}\n"
                    .as_bytes(),
            )
            .unwrap();
        assert_eq!(
            r.respond(&request("", "Zyrtec lat")),
            MockReply::Content("a".into())
        );
        assert_eq!(
            r.respond(&request("", "lat 5")),
            MockReply::Content("b".into())
        );
        assert_eq!(r.respond(&request("", "x")), MockReply::Status(500));
        assert_eq!(r.respond(&request("", "?")), MockReply::Status(503));
        let bad = ScriptedResponder::new(|_: &ChatRequest| MockReply::Status(503))
            .with_script("{\"contains\":\"a\"}\n".as_bytes());
        assert!(bad.is_err());
    }

    #[test]
    fn rule_echo_answers_in_keyed_format() {
        let r = RuleEchoResponder::new(RulePipeline::with_defaults());
        let MockReply::Content(c) = r.respond(&request(
            "extract",
            "Pacjentka lat 5 i 4/12 z wysypką. Podano Zyrtec.",
        )) else {
            panic!("expected content");
        };
        assert_eq!(
            c,
            "⟨age=5 4/12 | sex=F | drugs=Zyrtec | skin_changes=wysypk⟩"
        );
        let parsed = crate::llm::parse_llm_output(&c, &TaskKey::ALL);
        assert_eq!(parsed.status, ParseStatus::Ok);
    }
}
