use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::transport::{ChatMessage, ChatRequest, ChatTransport};
use super::{GatewayError, PromptTemplate};
use crate::corpus::Document;
use crate::util::bounded_map;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub base_url: String,
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub max_retries: u32,
    #[serde(with = "millis")]
    pub retry_base_delay: Duration,
    #[serde(with = "millis")]
    pub timeout: Duration,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            api_key_env: "KAILIN_API_KEY".into(),
            max_in_flight: 4,
            max_retries: 3,
            retry_base_delay: Duration::from_secs(1),
            timeout: Duration::from_secs(60),
            temperature: 0.0,
            max_tokens: 256,
            seed: Some(0),
        }
    }
}

impl GatewayConfig {
    /// Backoff before retry `attempt` (0-based): base · 2^attempt.
    pub fn retry_delay(&self, attempt: u32) -> Duration {
        self.retry_base_delay.saturating_mul(1u32.checked_shl(attempt).unwrap_or(u32::MAX))
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// Counting semaphore bounding requests in flight.
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Permits {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// A question generated for a source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionCandidate {
    pub source_pmid: String,
    pub generator_id: String,
    pub text: String,
    pub template_id: String,
}

/// One prompt for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatJob {
    pub model: String,
    pub prompt: String,
    pub seed: Option<u64>,
}

pub struct Gateway {
    cfg: GatewayConfig,
    transport: Arc<dyn ChatTransport>,
    sleeper: Arc<dyn Sleeper>,
    permits: Permits,
}

impl Gateway {
    pub fn new(cfg: GatewayConfig, transport: Arc<dyn ChatTransport>) -> Self {
        Self::with_sleeper(cfg, transport, Arc::new(ThreadSleeper))
    }

    pub fn with_sleeper(cfg: GatewayConfig, transport: Arc<dyn ChatTransport>, sleeper: Arc<dyn Sleeper>) -> Self {
        let permits = Permits::new(cfg.max_in_flight);
        Self { cfg, transport, sleeper, permits }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    pub fn request(&self, model: &str, prompt: &str, seed: Option<u64>) -> ChatRequest {
        ChatRequest {
            model: model.to_string(),
            messages: vec![ChatMessage { role: "user".into(), content: prompt.to_string() }],
            temperature: self.cfg.temperature,
            max_tokens: self.cfg.max_tokens,
            seed,
        }
    }

    pub fn request_body(&self, model: &str, prompt: &str, seed: Option<u64>) -> Vec<u8> {
        serde_json::to_vec(&self.request(model, prompt, seed)).expect("request serializes")
    }

    /// Sends one request with retries and returns the raw completion text.
    /// Whitespace-only completions are rejected.
    pub fn complete(&self, model: &str, prompt: &str, seed: Option<u64>) -> Result<String, GatewayError> {
        let body = self.request_body(model, prompt, seed);
        let mut attempt = 0u32;
        loop {
            let result = {
                let _permit = self.permits.acquire();
                self.transport.send(&body)
            };
            match result {
                Ok(text) if text.trim().is_empty() => return Err(GatewayError::EmptyCompletion),
                Ok(text) => return Ok(text),
                Err(failure) => {
                    if !failure.is_retryable() || attempt >= self.cfg.max_retries {
                        return Err(GatewayError::Transport { attempts: attempt + 1, last: failure });
                    }
                    let delay = self.cfg.retry_delay(attempt);
                    log::warn!("{model}: {failure}; retrying in {delay:?}");
                    self.sleeper.sleep(delay);
                    attempt += 1;
                }
            }
        }
    }

    /// Renders `template` against the document and asks `model` for one
    /// question. `variant` offsets the request seed for over-generation.
    pub fn generate_question(
        &self,
        doc: &Document,
        template: &PromptTemplate,
        model: &str,
        variant: u32,
    ) -> Result<QuestionCandidate, GatewayError> {
        let prompt = render_generation_prompt(doc, template)?;
        let seed = match (self.cfg.seed, variant) {
            (s, 0) => s,
            (s, v) => Some(s.unwrap_or(0).wrapping_add(v as u64)),
        };
        let text = self.complete(model, &prompt, seed)?.trim().to_string();
        Ok(QuestionCandidate {
            source_pmid: doc.pmid.clone(),
            generator_id: model.to_string(),
            text,
            template_id: template.id.clone(),
        })
    }

    /// Raw model output for an already rendered prompt.
    pub fn answer_item(&self, prompt: &str, model: &str) -> Result<String, GatewayError> {
        self.complete(model, prompt, self.cfg.seed)
    }

    /// Runs jobs with at most `max_in_flight` concurrent requests; results
    /// come back in job order with per-item errors.
    pub fn batch(&self, jobs: &[ChatJob]) -> Vec<Result<String, GatewayError>> {
        bounded_map(jobs, self.cfg.max_in_flight, |j| self.complete(&j.model, &j.prompt, j.seed))
    }
}

/// The instruction a generator sees for one document; also the prompt
/// recorded in preference pairs.
pub fn render_generation_prompt(doc: &Document, template: &PromptTemplate) -> Result<String, GatewayError> {
    let bindings = BTreeMap::from([("title", doc.title.as_str()), ("abstract", doc.abstract_text.as_str())]);
    Ok(template.render(&bindings)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::mock::{FixedTransport, InstrumentedTransport, RecordingSleeper, ScriptedTransport};
    use crate::llm::TransportFailure;

    fn doc() -> Document {
        Document {
            pmid: "42".into(),
            title: "Papain dimerization".into(),
            abstract_text: "Papain forms dimers at high concentration.".into(),
            mesh_uis: vec![],
            pub_year: Some(2004),
        }
    }

    fn status(code: u16) -> TransportFailure {
        TransportFailure::Status { code, body: String::new() }
    }

    #[test]
    fn retry_schedule_doubles() {
        let cfg = GatewayConfig::default();
        assert_eq!(cfg.retry_delay(0), Duration::from_secs(1));
        assert_eq!(cfg.retry_delay(1), Duration::from_secs(2));
        assert_eq!(cfg.retry_delay(2), Duration::from_secs(4));
    }

    #[test]
    fn two_failures_then_success() {
        let transport = Arc::new(ScriptedTransport::new(vec![
            Err(status(503)),
            Err(TransportFailure::Timeout),
            Ok("  What limits papain dimerization?\n".into()),
        ]));
        let sleeper = Arc::new(RecordingSleeper::default());
        let gw = Gateway::with_sleeper(GatewayConfig::default(), transport.clone(), sleeper.clone());
        let q = gw.generate_question(&doc(), &PromptTemplate::default_question(), "gen-a", 0).unwrap();
        assert_eq!(q.text, "What limits papain dimerization?");
        assert_eq!(q.generator_id, "gen-a");
        assert_eq!(q.template_id, "question-v1");
        assert_eq!(q.source_pmid, "42");
        assert_eq!(sleeper.delays(), [Duration::from_secs(1), Duration::from_secs(2)]);
        assert_eq!(transport.calls(), 3);
    }

    #[test]
    fn rate_limited_once() {
        let transport = Arc::new(ScriptedTransport::new(vec![Err(status(429)), Ok("yes".into())]));
        let sleeper = Arc::new(RecordingSleeper::default());
        let gw = Gateway::with_sleeper(GatewayConfig::default(), transport, sleeper.clone());
        assert_eq!(gw.answer_item("q?", "m").unwrap(), "yes");
        assert_eq!(sleeper.delays(), [Duration::from_secs(1)]);
    }

    #[test]
    fn exhaustion_carries_last_failure() {
        let transport = Arc::new(ScriptedTransport::new(vec![
            Err(TransportFailure::Timeout),
            Err(TransportFailure::Timeout),
            Err(status(502)),
            Err(TransportFailure::Timeout),
        ]));
        let sleeper = Arc::new(RecordingSleeper::default());
        let gw = Gateway::with_sleeper(GatewayConfig::default(), transport.clone(), sleeper.clone());
        match gw.answer_item("q?", "m") {
            Err(GatewayError::Transport { attempts: 4, last: TransportFailure::Timeout }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(sleeper.delays().len(), 3);
        assert_eq!(transport.calls(), 4);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let transport = Arc::new(ScriptedTransport::new(vec![Err(status(401)), Ok("never".into())]));
        let sleeper = Arc::new(RecordingSleeper::default());
        let gw = Gateway::with_sleeper(GatewayConfig::default(), transport.clone(), sleeper.clone());
        match gw.answer_item("q?", "m") {
            Err(GatewayError::Transport { attempts: 1, last }) => assert_eq!(last.status(), Some(401)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(sleeper.delays().is_empty());
        assert_eq!(transport.calls(), 1);
    }

    #[test]
    fn whitespace_completion() {
        let gw = Gateway::new(GatewayConfig::default(), Arc::new(FixedTransport::new(" \n\t ")));
        assert!(matches!(
            gw.generate_question(&doc(), &PromptTemplate::default_question(), "m", 0),
            Err(GatewayError::EmptyCompletion)
        ));
    }

    #[test]
    fn passthrough_answer() {
        let gw = Gateway::new(GatewayConfig::default(), Arc::new(FixedTransport::new("yes")));
        assert_eq!(gw.answer_item("anything", "m").unwrap(), "yes");
    }

    #[test]
    fn unbound_template() {
        let gw = Gateway::new(GatewayConfig::default(), Arc::new(FixedTransport::new("q")));
        let t = PromptTemplate::new("bad", "{title} {context}");
        assert!(matches!(gw.generate_question(&doc(), &t, "m", 0), Err(GatewayError::TemplateRender(_))));
    }

    #[test]
    fn request_bodies_are_pure() {
        let gw = Gateway::new(GatewayConfig::default(), Arc::new(FixedTransport::new("q")));
        assert_eq!(gw.request_body("m", "p", Some(1)), gw.request_body("m", "p", Some(1)));
        assert_ne!(gw.request_body("m", "p", Some(1)), gw.request_body("m", "p", Some(2)));
    }

    #[test]
    fn batch_bounds_concurrency_and_isolates_errors() {
        let inner = Arc::new(FixedTransport::new("ok"));
        let transport = Arc::new(InstrumentedTransport::new(inner, Duration::from_millis(20)).fail_on("bad"));
        let cfg = GatewayConfig { max_in_flight: 4, max_retries: 0, ..Default::default() };
        let gw = Gateway::new(cfg, transport.clone());
        let jobs: Vec<ChatJob> = (0..10)
            .map(|i| ChatJob {
                model: "m".into(),
                prompt: if i == 2 { "bad".into() } else { format!("p{i}") },
                seed: None,
            })
            .collect();
        let out = gw.batch(&jobs);
        assert_eq!(out.len(), 10);
        assert!(transport.max_concurrent() <= 4);
        assert!(transport.max_concurrent() >= 2);
        for (i, r) in out.iter().enumerate() {
            assert_eq!(r.is_err(), i == 2, "item {i}");
        }
    }
}
