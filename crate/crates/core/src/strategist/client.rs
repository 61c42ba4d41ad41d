//! OpenAI-compatible chat-completions client with retry and Best-of-N
//! sampling.
//!
//! Requests are stateless JSON posts, so retries are idempotent. Candidate
//! sampling issues independent requests under a configurable in-flight cap;
//! per-sample failures are recorded, and only a fully unreachable endpoint
//! aborts the batch.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{parse_output, StrategistOutput};
use crate::backend::{Backend, CycleCount, ProgramHandle};
use crate::config::LlmConfig;
use crate::error::{Error, Result};
use crate::passes::Vocabulary;

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: String,
}

pub struct ChatClient {
    cfg: LlmConfig,
    http: reqwest::blocking::Client,
}

impl ChatClient {
    pub fn new(cfg: LlmConfig) -> Result<Self> {
        if !cfg.is_configured() {
            return Err(Error::Environment(
                "no chat endpoint configured (set ECCO_LLM_ENDPOINT or llm.endpoint)".into(),
            ));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs.max(1)))
            .build()
            .map_err(|e| Error::Environment(format!("http client: {e}")))?;
        Ok(Self { cfg, http })
    }

    pub fn id(&self) -> &str {
        &self.cfg.id
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.cfg.endpoint.trim_end_matches('/'))
    }

    /// One completion with exponential backoff on transport errors and
    /// retryable statuses (429 / 5xx).
    pub fn complete(&self, prompt: &str) -> Result<String> {
        let body = ChatRequest {
            model: &self.cfg.model,
            messages: vec![ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: self.cfg.temperature,
        };
        let key = self.cfg.resolve_key();
        let mut last_err = String::new();
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                let delay = self.cfg.backoff_ms.saturating_mul(1 << (attempt - 1));
                std::thread::sleep(Duration::from_millis(delay));
            }
            let mut req = self.http.post(self.url()).json(&body);
            if let Some(k) = &key {
                req = req.bearer_auth(k);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let parsed: ChatResponse = resp
                            .json()
                            .map_err(|e| Error::Parse(format!("bad completion body: {e}")))?;
                        return parsed
                            .choices
                            .into_iter()
                            .next()
                            .map(|c| c.message.content)
                            .ok_or_else(|| Error::Parse("completion had no choices".into()));
                    }
                    let retryable = status.as_u16() == 429 || status.is_server_error();
                    let text = resp.text().unwrap_or_default();
                    last_err = format!("status {status}: {text}");
                    if !retryable {
                        return Err(Error::Environment(format!(
                            "chat endpoint rejected request: {last_err}"
                        )));
                    }
                }
                Err(e) => {
                    last_err = format!("transport: {e}");
                }
            }
        }
        Err(Error::EndpointUnreachable(format!(
            "{} after {} attempts: {last_err}",
            self.url(),
            self.cfg.max_retries + 1
        )))
    }
}

/// One sampled candidate: either a parsed output or the per-sample error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateSample {
    pub index: usize,
    pub output: Option<StrategistOutput>,
    pub error: Option<String>,
}

/// Draw `n` independent completions for `prompt` and parse each one.
///
/// Requests run concurrently up to the config's in-flight cap; results come
/// back ordered by sample index. The batch only errors when every request
/// failed at the transport layer.
pub fn sample_candidates(
    client: &ChatClient,
    prompt: &str,
    n: usize,
    vocab: &Vocabulary,
) -> Result<Vec<CandidateSample>> {
    let slots: Mutex<Vec<Option<CandidateSample>>> = Mutex::new(vec![None; n]);
    let next = AtomicUsize::new(0);
    let workers = client.cfg.in_flight.max(1).min(n.max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let sample = match client.complete(prompt) {
                    Ok(text) => CandidateSample {
                        index: i,
                        output: Some(parse_output(&text, vocab)),
                        error: None,
                    },
                    Err(e) => CandidateSample {
                        index: i,
                        output: None,
                        error: Some(e.to_string()),
                    },
                };
                slots.lock().unwrap()[i] = Some(sample);
            });
        }
    });

    let samples: Vec<CandidateSample> = slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|s| s.expect("every slot filled"))
        .collect();
    if n > 0 && samples.iter().all(|s| s.output.is_none()) {
        let first = samples[0].error.clone().unwrap_or_default();
        return Err(Error::EndpointUnreachable(first));
    }
    Ok(samples)
}

/// Best-of-N selection over sampled candidates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestOfN {
    pub samples: Vec<CandidateSample>,
    /// Measured cycles per sample (None: invalid or unevaluable).
    pub cycles: Vec<Option<CycleCount>>,
    /// Index of the minimum-cycle valid candidate.
    pub best_index: Option<usize>,
}

impl BestOfN {
    pub fn valid_count(&self) -> usize {
        self.samples
            .iter()
            .filter(|s| s.output.as_ref().is_some_and(|o| o.format_valid))
            .count()
    }
}

/// Sample `n` candidates, evaluate every format-valid sequence on the
/// backend, and pick the minimum-cycle one (first index wins ties).
pub fn best_of_n(
    client: &ChatClient,
    prompt: &str,
    n: usize,
    vocab: &Vocabulary,
    backend: &Backend,
    program: &ProgramHandle,
) -> Result<BestOfN> {
    let samples = sample_candidates(client, prompt, n, vocab)?;
    let mut cycles = Vec::with_capacity(samples.len());
    for sample in &samples {
        let measured = match sample.output.as_ref().and_then(|o| o.answer_sequence.as_ref()) {
            Some(seq) => backend.evaluate(program, seq)?.cycles(),
            None => None,
        };
        cycles.push(measured);
    }
    let best_index = cycles
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.map(|c| (i, c)))
        .min_by_key(|(i, c)| (*c, *i))
        .map(|(i, _)| i);
    Ok(BestOfN {
        samples,
        cycles,
        best_index,
    })
}
