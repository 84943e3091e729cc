//! Blocking client for the evaluation routes.

use std::time::Duration;

use serde::Deserialize;

use scorpid_core::report::EvalRequest;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request to {url} failed: {message}")]
    Transport { url: String, message: String },
    #[error("{url} answered HTTP {status}: {body}")]
    Status { url: String, status: u16, body: String },
    #[error("unexpected response from {url}: {message}")]
    Malformed { url: String, message: String },
}

#[derive(Deserialize)]
struct Created {
    run_id: String,
}

/// Runs `POST /evaluate`, then fetches the stored report bytes with
/// `GET /evaluate/{run_id}`. Returns the run id and the report.
pub fn evaluate(base: &str, req: &EvalRequest, timeout: Duration) -> Result<(String, Vec<u8>), ClientError> {
    let base = base.trim_end_matches('/');
    let client = reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| ClientError::Transport {
            url: base.to_string(),
            message: e.to_string(),
        })?;
    let post_url = format!("{base}/evaluate");
    let created: Created = serde_json::from_slice(&send(client.post(&post_url).json(req), &post_url)?).map_err(|e| {
        ClientError::Malformed {
            url: post_url.clone(),
            message: e.to_string(),
        }
    })?;
    let get_url = format!("{base}/evaluate/{}", created.run_id);
    let report = send(client.get(&get_url), &get_url)?;
    Ok((created.run_id, report))
}

fn send(req: reqwest::blocking::RequestBuilder, url: &str) -> Result<Vec<u8>, ClientError> {
    let transport = |e: reqwest::Error| ClientError::Transport {
        url: url.to_string(),
        message: e.to_string(),
    };
    let resp = req.send().map_err(transport)?;
    let status = resp.status();
    let body = resp.bytes().map_err(transport)?.to_vec();
    if !status.is_success() {
        return Err(ClientError::Status {
            url: url.to_string(),
            status: status.as_u16(),
            body: String::from_utf8_lossy(&body).into_owned(),
        });
    }
    Ok(body)
}
