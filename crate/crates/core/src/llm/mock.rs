//! Offline transports and sleepers for tests and dry runs.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::transport::{ChatRequest, ChatTransport, TransportFailure};
use super::Sleeper;
use crate::util::sha256_hex;

fn parse(body: &[u8]) -> Result<ChatRequest, TransportFailure> {
    serde_json::from_slice(body).map_err(|e| TransportFailure::Status { code: 400, body: e.to_string() })
}

/// Writes a question from words of the prompt, chosen by a digest of the
/// whole request body. Same request, same question; a different model id or
/// seed usually picks different words.
#[derive(Debug, Default)]
pub struct QuestionWriter;

const PHRASES: [&str; 4] = [
    "What is the role of {a} in {b}?",
    "How does {a} affect {b} and {c}?",
    "Is {a} associated with {b} in {c}?",
    "What mechanisms link {a} to {b}?",
];

impl QuestionWriter {
    pub fn write(req: &ChatRequest, body: &[u8]) -> String {
        let prompt = req.prompt();
        let focus = prompt.rfind("Title:").map(|i| &prompt[i..]).unwrap_or(prompt);
        let mut words: Vec<String> = Vec::new();
        for w in focus.split(|c: char| !c.is_alphanumeric()) {
            let w = w.to_lowercase();
            if w.chars().count() >= 5
                && w.chars().all(char::is_alphabetic)
                && w != "title"
                && w != "abstract"
                && !words.contains(&w)
            {
                words.push(w);
            }
        }
        if words.is_empty() {
            return "What is described in this article?".into();
        }
        let digest = hex::decode(sha256_hex(body)).expect("hex digest");
        let pick =
            |i: usize| words[(u16::from_be_bytes([digest[2 * i], digest[2 * i + 1]]) as usize) % words.len()].clone();
        let phrase = PHRASES[digest[31] as usize % PHRASES.len()];
        phrase.replace("{a}", &pick(0)).replace("{b}", &pick(1)).replace("{c}", &pick(2))
    }
}

impl ChatTransport for QuestionWriter {
    fn send(&self, body: &[u8]) -> Result<String, TransportFailure> {
        let req = parse(body)?;
        Ok(Self::write(&req, body))
    }
}

/// Answers every request with the same text.
#[derive(Debug)]
pub struct FixedTransport(String);

impl FixedTransport {
    pub fn new(text: impl Into<String>) -> Self {
        Self(text.into())
    }
}

impl ChatTransport for FixedTransport {
    fn send(&self, _body: &[u8]) -> Result<String, TransportFailure> {
        Ok(self.0.clone())
    }
}

/// Replays a fixed sequence of outcomes, then fails with 500.
pub struct ScriptedTransport {
    script: Mutex<VecDeque<Result<String, TransportFailure>>>,
    calls: AtomicUsize,
}

impl ScriptedTransport {
    pub fn new(script: Vec<Result<String, TransportFailure>>) -> Self {
        Self { script: Mutex::new(script.into()), calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatTransport for ScriptedTransport {
    fn send(&self, _body: &[u8]) -> Result<String, TransportFailure> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.script
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or(Err(TransportFailure::Status { code: 500, body: "script exhausted".into() }))
    }
}

/// Responds through a closure over the decoded request.
pub struct FnTransport<F>(pub F);

impl<F> ChatTransport for FnTransport<F>
where
    F: Fn(&ChatRequest) -> Result<String, TransportFailure> + Send + Sync,
{
    fn send(&self, body: &[u8]) -> Result<String, TransportFailure> {
        (self.0)(&parse(body)?)
    }
}

/// Wraps a transport, adds latency and tracks peak concurrency.
pub struct InstrumentedTransport {
    inner: Arc<dyn ChatTransport>,
    latency: Duration,
    fail_on: Option<String>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    calls: AtomicUsize,
}

impl InstrumentedTransport {
    pub fn new(inner: Arc<dyn ChatTransport>, latency: Duration) -> Self {
        Self {
            inner,
            latency,
            fail_on: None,
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        }
    }

    /// Requests whose prompt equals `prompt` fail with HTTP 400.
    pub fn fail_on(mut self, prompt: impl Into<String>) -> Self {
        self.fail_on = Some(prompt.into());
        self
    }

    pub fn max_concurrent(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatTransport for InstrumentedTransport {
    fn send(&self, body: &[u8]) -> Result<String, TransportFailure> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(self.latency);
        let result = match (&self.fail_on, parse(body)) {
            (Some(bad), Ok(req)) if req.prompt() == bad => {
                Err(TransportFailure::Status { code: 400, body: "rejected".into() })
            }
            _ => self.inner.send(body),
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }
}

/// Records requested delays without sleeping.
#[derive(Debug, Default)]
pub struct RecordingSleeper(Mutex<Vec<Duration>>);

impl RecordingSleeper {
    pub fn delays(&self) -> Vec<Duration> {
        self.0.lock().unwrap().clone()
    }
}

impl Sleeper for RecordingSleeper {
    fn sleep(&self, d: Duration) {
        self.0.lock().unwrap().push(d);
    }
}
