//! Chat-completions client used for question generation and benchmark
//! answering: bounded concurrency, retries with doubling backoff and
//! offline mock transports.

mod gateway;
pub mod mock;
mod template;
mod transport;

pub use gateway::{
    render_generation_prompt, ChatJob, Gateway, GatewayConfig, QuestionCandidate, Sleeper, ThreadSleeper,
};
pub use template::{PromptTemplate, TemplateError};
pub use transport::{ChatMessage, ChatRequest, ChatTransport, HttpTransport, TransportFailure};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failed after {attempts} attempt(s): {last}")]
    Transport { attempts: u32, last: TransportFailure },
    #[error("model returned an empty completion")]
    EmptyCompletion,
    #[error(transparent)]
    TemplateRender(#[from] TemplateError),
}
