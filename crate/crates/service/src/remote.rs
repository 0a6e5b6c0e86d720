//! Render contract for out-of-process generators.
//!
//! A render request is `{"schema": "pertouch/1", "image": <base64 PNG>,
//! "map": <PMAP>}` posted to `<base>/v1/render`; the response body is the
//! rendered PNG.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use retouch_core::parammap::PmapFile;
use retouch_core::retouch::Generator;
use retouch_core::{Error, Image, ParameterMap, Result};
use serde::{Deserialize, Serialize};

use crate::SCHEMA;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderRequest {
    pub schema: String,
    pub image: String,
    pub map: PmapFile,
}

impl RenderRequest {
    pub fn new(input: &Image, map: &ParameterMap) -> Result<Self> {
        Ok(Self {
            schema: SCHEMA.to_string(),
            image: B64.encode(input.encode_png()?),
            map: map.to_file(),
        })
    }

    pub fn decode(&self) -> Result<(Image, ParameterMap)> {
        if self.schema != SCHEMA {
            return Err(Error::Format(format!("unsupported schema {:?}", self.schema)));
        }
        let bytes = B64
            .decode(&self.image)
            .map_err(|e| Error::Format(format!("image is not base64: {e}")))?;
        Ok((Image::decode(&bytes)?, ParameterMap::from_file(&self.map)?))
    }
}

/// Blocking HTTP client for a render endpoint. Must not be called from an
/// async executor thread.
pub struct RemoteGenerator {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl RemoteGenerator {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Backend(e.to_string()))?;
        Ok(Self {
            endpoint: format!("{}/v1/render", base_url.trim_end_matches('/')),
            client,
        })
    }
}

impl Generator for RemoteGenerator {
    fn name(&self) -> &str {
        "remote"
    }

    fn render(&self, input: &Image, map: &ParameterMap) -> Result<Image> {
        let body = serde_json::to_vec(&RenderRequest::new(input, map)?)?;
        let resp = self
            .client
            .post(&self.endpoint)
            .header("content-type", "application/json")
            .body(body)
            .send()
            .map_err(|e| Error::Backend(format!("{}: {e}", self.endpoint)))?;
        let status = resp.status();
        let bytes = resp.bytes().map_err(|e| Error::Backend(e.to_string()))?;
        if !status.is_success() {
            return Err(Error::Backend(format!(
                "{} returned {status}: {}",
                self.endpoint,
                String::from_utf8_lossy(&bytes)
            )));
        }
        let out = Image::decode(&bytes).map_err(|e| Error::Backend(format!("bad image from backend: {e}")))?;
        if !out.same_size(input) {
            return Err(Error::Backend("backend changed the image size".into()));
        }
        Ok(out)
    }
}
