//! Blocking client for a remote service.

use std::time::Duration;

use serde_json::Value;

use crate::api::{ApiError, Method, Request};
use crate::server::ADMIN_KEY_HEADER;

pub struct Client {
    base: String,
    admin_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl Client {
    pub fn new(base: &str, admin_key: Option<String>) -> Client {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .expect("http client builds");
        Client { base: base.trim_end_matches('/').to_string(), admin_key, http }
    }

    pub fn call(&self, req: &Request) -> Result<Value, ApiError> {
        let (method, path, body) = req.to_http();
        self.raw(method, &path, body)
    }

    /// Sends a request as given, without building it from a [`Request`].
    pub fn raw(&self, method: Method, path: &str, body: Option<String>) -> Result<Value, ApiError> {
        let url = format!("{}{path}", self.base);
        let mut builder = match method {
            Method::Get => self.http.get(&url),
            Method::Post => self.http.post(&url),
        };
        if let Some(key) = &self.admin_key {
            builder = builder.header(ADMIN_KEY_HEADER, key);
        }
        if let Some(body) = body {
            builder = builder.header("content-type", "application/json").body(body);
        }
        let response = builder
            .send()
            .map_err(|e| ApiError::new("unavailable", 503, format!("{url}: {e}")))?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| ApiError::new("unavailable", 503, format!("{url}: {e}")))?;
        if (200..300).contains(&status) {
            return serde_json::from_str(&text)
                .map_err(|e| ApiError::internal("bad_response", format!("{url}: {e}")));
        }
        let mut err: ApiError = serde_json::from_str(&text)
            .map_err(|_| ApiError::internal("bad_response", format!("{url}: status {status}: {text}")))?;
        err.status = status;
        Err(err)
    }
}
