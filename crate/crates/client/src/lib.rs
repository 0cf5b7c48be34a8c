//! Async client for the gateway's HTTP/JSON API.

use eventsource_stream::Eventsource;
use futures::{Stream, StreamExt};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use trust_ladder_core::api::{Ack, CommandMessage, RatingMessage, ScenarioView, StateView, TelemetryFrame, TrustView};

pub use trust_ladder_core::api;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Http(#[from] reqwest::Error),
    #[error("{status}: {body}")]
    Status { status: u16, body: String },
    #[error("bad response body: {0}")]
    Decode(#[from] serde_json::Error),
    #[error("stream: {0}")]
    Stream(String),
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let resp = self.http.get(self.url(path)).send().await?;
        let status = resp.status();
        let body = resp.text().await?;
        if !status.is_success() {
            return Err(ClientError::Status {
                status: status.as_u16(),
                body,
            });
        }
        Ok(serde_json::from_str(&body)?)
    }

    /// Rejections come back as an [`Ack`] whatever the HTTP status.
    async fn post<B: Serialize>(&self, path: &str, body: &B) -> Result<Ack, ClientError> {
        let resp = self.http.post(self.url(path)).json(body).send().await?;
        let status = resp.status();
        let text = resp.text().await?;
        serde_json::from_str(&text).map_err(|_| ClientError::Status {
            status: status.as_u16(),
            body: text,
        })
    }

    /// Posts `body` as JSON without checking it first.
    pub async fn post_raw(&self, path: &str, body: String) -> Result<(u16, String), ClientError> {
        let resp = self
            .http
            .post(self.url(path))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body)
            .send()
            .await?;
        let status = resp.status().as_u16();
        Ok((status, resp.text().await?))
    }

    pub async fn command(&self, msg: &CommandMessage) -> Result<Ack, ClientError> {
        self.post("/api/command", msg).await
    }

    pub async fn rate(&self, msg: &RatingMessage) -> Result<Ack, ClientError> {
        self.post("/api/rating", msg).await
    }

    pub async fn state(&self) -> Result<StateView, ClientError> {
        self.get("/api/state").await
    }

    pub async fn trust(&self) -> Result<TrustView, ClientError> {
        self.get("/api/trust").await
    }

    pub async fn scenario(&self) -> Result<ScenarioView, ClientError> {
        self.get("/api/scenario").await
    }

    /// Frames from tick `since` onwards. Ends when the server closes the
    /// stream, which it does after the final tick of a fixed-length mission.
    pub async fn stream(
        &self,
        since: u64,
    ) -> Result<impl Stream<Item = Result<TelemetryFrame, ClientError>> + Unpin + use<>, ClientError> {
        let resp = self
            .http
            .get(self.url(&format!("/api/stream?since={since}")))
            .send()
            .await?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ClientError::Status {
                status: status.as_u16(),
                body: resp.text().await.unwrap_or_default(),
            });
        }
        let events = resp.bytes_stream().eventsource();
        Ok(Box::pin(events.filter_map(|ev| async move {
            match ev {
                Ok(ev) if ev.event == "frame" => Some(serde_json::from_str(&ev.data).map_err(ClientError::from)),
                Ok(_) => None,
                Err(e) => Some(Err(ClientError::Stream(e.to_string()))),
            }
        })))
    }

    /// Continues after the last frame a subscriber saw, without repeating it.
    pub async fn resume(
        &self,
        last_seen: u64,
    ) -> Result<impl Stream<Item = Result<TelemetryFrame, ClientError>> + Unpin + use<>, ClientError> {
        self.stream(last_seen + 1).await
    }
}
