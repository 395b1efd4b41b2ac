//! Completion providers: an HTTP client and an offline fixture stub.

use std::path::PathBuf;
use std::time::Duration;

use groundkit_core::forge::{
    CompletionProvider, CompletionRequest, ProviderError, ProviderErrorKind,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable holding the bearer token for [`HttpProvider`].
pub const API_KEY_ENV: &str = "PROVIDER_API_KEY";

#[derive(Serialize)]
struct RequestBody<'a> {
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
}

#[derive(Deserialize)]
struct ResponseBody {
    text: String,
}

/// POSTs `{prompt, max_tokens, temperature}` as JSON and expects `{text}`.
pub struct HttpProvider {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpProvider {
    pub fn new(url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build();
        Self {
            agent: config.into(),
            url: url.into(),
            api_key,
        }
    }

    /// Reads the key from [`API_KEY_ENV`] when set.
    pub fn from_env(url: impl Into<String>) -> Self {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(url, key, Duration::from_secs(60))
    }
}

fn classify(e: ureq::Error) -> ProviderError {
    use ureq::Error as E;
    let kind = match &e {
        E::StatusCode(401 | 403) => ProviderErrorKind::Unauthorized,
        E::StatusCode(408 | 429) => ProviderErrorKind::Transport,
        E::StatusCode(s) if *s >= 500 => ProviderErrorKind::Transport,
        E::StatusCode(_) => ProviderErrorKind::BadResponse,
        E::Timeout(_) => ProviderErrorKind::Timeout,
        E::Io(_) | E::ConnectionFailed | E::HostNotFound => ProviderErrorKind::Transport,
        _ => ProviderErrorKind::BadResponse,
    };
    ProviderError::new(kind, e.to_string())
}

impl CompletionProvider for HttpProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let body = RequestBody {
            prompt: &request.prompt,
            max_tokens: request.max_tokens,
            temperature: request.temperature,
        };
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(classify)?;
        let parsed: ResponseBody = resp
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::new(ProviderErrorKind::BadResponse, e.to_string()))?;
        Ok(parsed.text)
    }
}

/// Hex SHA-256 of the prompt text; the stub's fixture file name stem.
pub fn prompt_key(prompt: &str) -> String {
    format!("{:x}", Sha256::digest(prompt.as_bytes()))
}

/// Serves canned completions from `<dir>/<prompt_key>.txt`.
#[derive(Debug, Clone)]
pub struct StubProvider {
    dir: PathBuf,
}

impl StubProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn fixture_path(&self, prompt: &str) -> PathBuf {
        self.dir.join(format!("{}.txt", prompt_key(prompt)))
    }
}

impl CompletionProvider for StubProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let path = self.fixture_path(&request.prompt);
        std::fs::read_to_string(&path).map_err(|e| {
            ProviderError::new(
                ProviderErrorKind::MissingFixture,
                format!("{}: {e}", path.display()),
            )
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_is_sha256_hex() {
        assert_eq!(
            prompt_key("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn stub_reads_fixture_or_reports_missing() {
        let dir = tempfile::tempdir().unwrap();
        let stub = StubProvider::new(dir.path());
        std::fs::write(stub.fixture_path("hello"), "Question: q\nAnswer: a").unwrap();
        assert_eq!(
            stub.complete(&CompletionRequest::new("hello")).unwrap(),
            "Question: q\nAnswer: a"
        );
        let err = stub.complete(&CompletionRequest::new("other")).unwrap_err();
        assert_eq!(err.kind, ProviderErrorKind::MissingFixture);
        assert!(!err.is_retryable());
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_error() {
        let p = HttpProvider::new("http://127.0.0.1:9/complete", None, Duration::from_secs(2));
        let err = p.complete(&CompletionRequest::new("x")).unwrap_err();
        assert!(err.is_retryable(), "{err:?}");
    }
}
