//! Backend adapter that speaks the service's own `/detect` and `/classify`
//! contract, so any model runner exposing those routes can be plugged in.

use std::time::Duration;

use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde::Deserialize;

use scorpid_core::infer::{sort_detections, Backend, BackendError, ClassScores, Detection, ImageInput};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

pub struct RemoteBackend {
    endpoint: String,
    client: Client,
    timeout: Duration,
}

#[derive(Deserialize)]
struct DetectBody {
    detections: Vec<Detection>,
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Unreachable(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            client,
            timeout,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn transport(&self, e: reqwest::Error) -> BackendError {
        if e.is_timeout() {
            BackendError::Timeout(self.timeout.as_millis() as u64)
        } else if e.is_connect() {
            BackendError::Unreachable(e.to_string())
        } else {
            BackendError::Protocol(e.to_string())
        }
    }

    fn post(&self, route: &str, input: &ImageInput) -> Result<String, BackendError> {
        let ImageInput::Bytes(bytes) = input else {
            return Err(BackendError::Unsupported("remote backends need image bytes".into()));
        };
        let resp = self
            .client
            .post(format!("{}{route}", self.endpoint))
            .header("content-type", "application/octet-stream")
            .body(bytes.clone())
            .send()
            .map_err(|e| self.transport(e))?;
        self.body(resp)
    }

    fn body(&self, resp: Response) -> Result<String, BackendError> {
        let status = resp.status();
        let text = resp.text().map_err(|e| self.transport(e))?;
        match status {
            s if s.is_success() => Ok(text),
            StatusCode::BAD_REQUEST => Err(BackendError::Decode(text)),
            StatusCode::NOT_FOUND => Err(BackendError::UnknownImage(text)),
            StatusCode::SERVICE_UNAVAILABLE => Err(BackendError::Unreachable(text)),
            s => Err(BackendError::Protocol(format!("HTTP {s}: {text}"))),
        }
    }
}

impl Backend for RemoteBackend {
    fn name(&self) -> String {
        format!("remote({})", self.endpoint)
    }

    fn detect(&self, input: &ImageInput) -> Result<Vec<Detection>, BackendError> {
        let text = self.post("/detect?threshold=0", input)?;
        let body: DetectBody = serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        let mut dets = body.detections;
        sort_detections(&mut dets);
        Ok(dets)
    }

    fn classify(&self, input: &ImageInput) -> Result<ClassScores, BackendError> {
        let text = self.post("/classify", input)?;
        serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))
    }

    fn health(&self) -> Result<(), BackendError> {
        let resp = self
            .client
            .get(format!("{}/health", self.endpoint))
            .send()
            .map_err(|e| self.transport(e))?;
        self.body(resp).map(drop)
    }
}
