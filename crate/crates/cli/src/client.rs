//! Blocking HTTP client for the `/v1` API.

use std::time::Duration;

use nds_core::protocol::{ApiError, BuildRequest, BundleManifest, DatasetSummary, RecommendationRequest};
use nds_core::selection::Recommendation;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, Result};

pub struct Client {
    base: String,
    agent: ureq::Agent,
}

fn network(url: &str, err: ureq::Error) -> CliError {
    CliError::Network {
        url: url.to_owned(),
        message: err.to_string(),
    }
}

impl Client {
    pub fn new(server: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_connect(Some(Duration::from_secs(10)))
            .build()
            .into();
        Client {
            base: server.trim_end_matches('/').to_owned(),
            agent,
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn finish(&self, url: &str, response: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<Vec<u8>> {
        let mut response = response.map_err(|e| network(url, e))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .with_config()
            .limit(u64::MAX)
            .read_to_vec()
            .map_err(|e| network(url, e))?;
        if (200..300).contains(&status) {
            return Ok(body);
        }
        match serde_json::from_slice::<ApiError>(&body) {
            Ok(error) => Err(CliError::Server { status, error }),
            Err(_) => Err(CliError::BadResponse {
                status,
                message: String::from_utf8_lossy(&body).into_owned(),
            }),
        }
    }

    fn decode<T: DeserializeOwned>(status_ok: Vec<u8>) -> Result<T> {
        serde_json::from_slice(&status_ok).map_err(|e| CliError::BadResponse {
            status: 200,
            message: format!("undecodable body: {e}"),
        })
    }

    pub fn get_bytes(&self, path: &str) -> Result<Vec<u8>> {
        let url = self.url(path);
        self.finish(&url, self.agent.get(&url).call())
    }

    pub fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        Self::decode(self.get_bytes(path)?)
    }

    fn post_raw(&self, path: &str, content_type: &str, body: &[u8]) -> Result<Vec<u8>> {
        let url = self.url(path);
        tracing::debug!(url, bytes = body.len(), "POST");
        self.finish(
            &url,
            self.agent.post(&url).header("content-type", content_type).send(body),
        )
    }

    pub fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        let body = serde_json::to_vec(body).expect("request types serialize");
        Self::decode(self.post_raw(path, "application/json", &body)?)
    }

    pub fn datasets(&self) -> Result<Vec<DatasetSummary>> {
        #[derive(serde::Deserialize)]
        struct Listing {
            datasets: Vec<DatasetSummary>,
        }
        Ok(self.get::<Listing>("/v1/datasets")?.datasets)
    }

    pub fn register(&self, manifest_jsonl: &str) -> Result<DatasetSummary> {
        Self::decode(self.post_raw("/v1/datasets", "application/x-ndjson", manifest_jsonl.as_bytes())?)
    }

    pub fn build(&self, id: &str, request: &BuildRequest) -> Result<DatasetSummary> {
        self.post(&format!("/v1/datasets/{id}/build"), request)
    }

    pub fn status(&self, id: &str) -> Result<DatasetSummary> {
        self.get(&format!("/v1/datasets/{id}/status"))
    }

    pub fn bundle(&self, datasets: &[String]) -> Result<BundleManifest> {
        self.get(&format!("/v1/experts?datasets={}", datasets.join(",")))
    }

    pub fn recommend(&self, request: &RecommendationRequest) -> Result<Recommendation> {
        self.post("/v1/recommendations", request)
    }
}
