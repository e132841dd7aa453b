use std::time::Duration;

use async_trait::async_trait;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("HTTP status {status}")]
    Status { status: u16, body: Option<Value> },
    #[error("malformed response body: {0}")]
    Malformed(String),
}

impl TransportError {
    /// Transport failures and 5xx are worth another attempt; 4xx never is.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Status { status, .. } => *status >= 500,
            _ => true,
        }
    }
}

/// Moves one JSON request to a remote provider and back.
#[async_trait]
pub trait Transport: Send + Sync {
    async fn send(&self, operation: &str, body: &Value) -> Result<Value, TransportError>;

    /// Checks the remote end answers at all. Any HTTP status counts.
    async fn probe(&self) -> Result<(), TransportError> {
        Ok(())
    }
}

/// JSON over HTTP: `POST {endpoint}/{operation}`.
pub struct HttpTransport {
    client: reqwest::Client,
    endpoint: String,
    auth_env_var: Option<String>,
}

impl HttpTransport {
    pub fn new(endpoint: &str, auth_env_var: Option<String>, timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Connect(e.to_string()))?;
        Ok(Self { client, endpoint: endpoint.trim_end_matches('/').to_owned(), auth_env_var })
    }
}

#[async_trait]
impl Transport for HttpTransport {
    async fn send(&self, operation: &str, body: &Value) -> Result<Value, TransportError> {
        let url = format!("{}/{operation}", self.endpoint);
        let mut request = self.client.post(&url).json(body);
        // Read per call so rotated credentials apply without a restart.
        if let Some(token) = self.auth_env_var.as_deref().and_then(|var| std::env::var(var).ok()) {
            request = request.bearer_auth(token);
        }
        let response = request.send().await.map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.without_url().to_string())
            }
        })?;
        let status = response.status();
        tracing::debug!(operation, status = status.as_u16(), "provider response");
        let bytes = response.bytes().await.map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.without_url().to_string())
            }
        })?;
        if !status.is_success() {
            return Err(TransportError::Status {
                status: status.as_u16(),
                body: serde_json::from_slice(&bytes).ok(),
            });
        }
        serde_json::from_slice(&bytes).map_err(|e| TransportError::Malformed(e.to_string()))
    }

    async fn probe(&self) -> Result<(), TransportError> {
        self.client.get(&self.endpoint).send().await.map(drop).map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.without_url().to_string())
            }
        })
    }
}

type SendFn = dyn Fn(&str, &Value) -> Result<Value, TransportError> + Send + Sync;

/// In-process transport backed by a closure. Stands in for a remote service
/// when recording fixtures from code or testing retry behaviour.
pub struct FnTransport(Box<SendFn>);

impl FnTransport {
    pub fn new(f: impl Fn(&str, &Value) -> Result<Value, TransportError> + Send + Sync + 'static) -> Self {
        Self(Box::new(f))
    }
}

#[async_trait]
impl Transport for FnTransport {
    async fn send(&self, operation: &str, body: &Value) -> Result<Value, TransportError> {
        (self.0)(operation, body)
    }
}
