//! Client for hosted services using the common JSON wire shapes.
//!
//! | role       | endpoint                  | request                                             | response                          |
//! |------------|---------------------------|-----------------------------------------------------|-----------------------------------|
//! | chat       | `POST /chat/completions`  | `model`, `seed`, `messages: [{role, content}]`      | `choices[0].message.content`      |
//! | image      | `POST /images/generations`| `model`, `prompt`, `negative_prompt` (optional), `seed`, `width`, `height`, `n`, `response_format: "b64_json"` | `data[0].b64_json` (PNG) |
//! | multi-view | `POST /multiview`         | `model`, `image` (base64 PNG), `num_views: 8`       | `images: [base64 PNG; 8]`         |
//! | embedding  | `POST /embeddings`        | `model`, `input` (text) or `input_image` (base64 PNG) | `data[0].embedding`             |
//!
//! The credential, when configured, is read from the named environment
//! variable for every request and sent as a bearer token.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde_json::{json, Value};

use super::{
    check_dimensions, check_multiview_reference, normalize_embedding, AssetRole, Backend, BackendConfig,
    BackendError, EmbedPayload, ImageAsset, ImageRequest, VIEW_COUNT,
};

/// Counting gate bounding concurrent requests.
struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(limit: usize) -> Self {
        Gate { in_flight: Mutex::new(0), freed: Condvar::new(), limit }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpBackend {
    cfg: BackendConfig,
    client: reqwest::blocking::Client,
    gate: Gate,
}

enum Failure {
    Transient { timeout: bool, message: String },
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(cfg: BackendConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout))
            .build()
            .map_err(|e| BackendError::InvalidConfig(e.to_string()))?;
        let gate = Gate::new(cfg.max_in_flight);
        Ok(HttpBackend { cfg, client, gate })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.cfg.base_url.as_deref().unwrap_or("").trim_end_matches('/'))
    }

    fn token(&self) -> Result<Option<String>, BackendError> {
        match &self.cfg.auth_env_var {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .ok()
                .filter(|v| !v.is_empty())
                .map(Some)
                .ok_or_else(|| BackendError::AuthMissing(var.clone())),
        }
    }

    fn attempt(&self, url: &str, body: &Value, token: Option<&str>) -> Result<Value, Failure> {
        let _permit = self.gate.acquire();
        let mut req = self.client.post(url).json(body);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| Failure::Transient {
            timeout: e.is_timeout(),
            message: scrub(&e.to_string(), token),
        })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| Failure::Transient {
            timeout: e.is_timeout(),
            message: scrub(&e.to_string(), token),
        })?;
        if (200..300).contains(&status) {
            return serde_json::from_str(&text)
                .map_err(|e| Failure::Fatal(BackendError::MalformedResponse(format!("invalid JSON: {e}"))));
        }
        let body: String = scrub(&text, token).chars().take(200).collect();
        if status == 408 || status == 429 || status >= 500 {
            Err(Failure::Transient { timeout: false, message: format!("HTTP {status}: {body}") })
        } else {
            Err(Failure::Fatal(BackendError::NonRetryableStatus { status, body }))
        }
    }

    /// POSTs with retries: transient failures are retried exactly
    /// `retries` times, waiting `backoff_ms · 2^k` before retry k+1.
    fn post(&self, path: &str, body: Value) -> Result<Value, BackendError> {
        let token = self.token()?;
        let url = self.url(path);
        let attempts = self.cfg.retries + 1;
        let mut all_timeouts = true;
        let mut last = String::new();
        for k in 0..attempts {
            if k > 0 {
                std::thread::sleep(Duration::from_millis(self.cfg.backoff_ms << (k - 1).min(16)));
            }
            match self.attempt(&url, &body, token.as_deref()) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient { timeout, message }) => {
                    all_timeouts &= timeout;
                    last = message;
                }
            }
        }
        if all_timeouts {
            Err(BackendError::Timeout(self.cfg.timeout))
        } else {
            Err(BackendError::RetriesExhausted { attempts, last })
        }
    }

    fn with_model(&self, mut body: Value) -> Value {
        if let Some(m) = &self.cfg.model {
            body["model"] = json!(m);
        }
        body
    }
}

fn scrub(text: &str, token: Option<&str>) -> String {
    match token {
        Some(t) if !t.is_empty() => text.replace(t, "***"),
        _ => text.to_string(),
    }
}

fn decode_png(b64: &Value, role: AssetRole, owner: &str, view: Option<u8>) -> Result<ImageAsset, BackendError> {
    let s = b64
        .as_str()
        .ok_or_else(|| BackendError::MalformedResponse("image payload is not a string".into()))?;
    let bytes = B64
        .decode(s.trim())
        .map_err(|e| BackendError::DecodeError(format!("base64: {e}")))?;
    ImageAsset::from_png(&bytes, role, owner, view)
}

impl Backend for HttpBackend {
    fn identity(&self) -> String {
        format!(
            "http({}, model={})",
            self.cfg.base_url.as_deref().unwrap_or(""),
            self.cfg.model.as_deref().unwrap_or("default")
        )
    }

    fn chat_complete(&self, system: &str, user: &str) -> Result<String, BackendError> {
        let body = self.with_model(json!({
            "seed": self.cfg.seed,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }));
        let v = self.post("chat/completions", body)?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::MalformedResponse("missing choices[0].message.content".into()))
    }

    fn text_to_image(&self, req: &ImageRequest) -> Result<ImageAsset, BackendError> {
        check_dimensions(req.width, req.height)?;
        let mut body = self.with_model(json!({
            "prompt": req.prompt,
            "seed": req.seed,
            "width": req.width,
            "height": req.height,
            "n": 1,
            "response_format": "b64_json",
        }));
        if !req.negative_prompt.is_empty() {
            body["negative_prompt"] = json!(req.negative_prompt);
        }
        let v = self.post("images/generations", body)?;
        let view = (req.role == AssetRole::CharacterView).then_some(0);
        decode_png(&v["data"][0]["b64_json"], req.role, &req.owner_id, view)
    }

    fn image_to_multiview(&self, reference: &ImageAsset) -> Result<Vec<ImageAsset>, BackendError> {
        check_multiview_reference(reference)?;
        let body = self.with_model(json!({
            "image": B64.encode(reference.to_png()),
            "num_views": VIEW_COUNT,
            "seed": self.cfg.seed,
        }));
        let v = self.post("multiview", body)?;
        let images = v["images"]
            .as_array()
            .ok_or_else(|| BackendError::MalformedResponse("missing images array".into()))?;
        if images.len() != VIEW_COUNT {
            return Err(BackendError::WrongCount { expected: VIEW_COUNT, got: images.len() });
        }
        images
            .iter()
            .enumerate()
            .map(|(i, b)| decode_png(b, AssetRole::CharacterView, &reference.owner_id, Some(i as u8)))
            .collect()
    }

    fn embed(&self, payload: EmbedPayload<'_>) -> Result<Vec<f32>, BackendError> {
        let body = match payload {
            EmbedPayload::Text(t) => {
                if t.trim().is_empty() {
                    return Err(BackendError::InvalidRequest("empty text payload".into()));
                }
                json!({"input": t})
            }
            EmbedPayload::Image(a) => json!({"input_image": B64.encode(a.to_png())}),
        };
        let v = self.post("embeddings", self.with_model(body))?;
        let raw = v["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| BackendError::MalformedResponse("missing data[0].embedding".into()))?;
        let vec: Option<Vec<f32>> = raw.iter().map(|x| x.as_f64().map(|f| f as f32)).collect();
        let vec = vec.ok_or_else(|| BackendError::MalformedResponse("non-numeric embedding".into()))?;
        normalize_embedding(vec, self.cfg.embedding_dim)
    }
}
