//! HTTP client for the segmentation wire protocol (v1).
//!
//! `POST /v1/segment` takes a base64 8-bit PNG image, boxes as
//! `[x0,y0,x1,y1]` and labelled points, and returns one base64 16-bit
//! grayscale PNG mask per box in request order. `GET /v1/health` answers
//! `{"status":"ok"}`.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use image::GrayImage;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Capabilities, Segmenter};
use crate::codec::{decode_prob_png, encode_gray_png};
use crate::error::{Error, Result};
use crate::prompts::{BBox, Dims, PointPrompt};
use crate::raster::ProbMask;

mod b64 {
    use super::*;

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s.as_bytes()).map_err(serde::de::Error::custom)
    }
}

mod b64_vec {
    use super::*;

    pub fn serialize<S: Serializer>(items: &[Vec<u8>], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(items.iter().map(|b| STANDARD.encode(b)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<u8>>, D::Error> {
        let items = Vec::<String>::deserialize(d)?;
        items
            .iter()
            .map(|s| STANDARD.decode(s.as_bytes()).map_err(serde::de::Error::custom))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    /// 8-bit PNG bytes.
    #[serde(with = "b64")]
    pub image: Vec<u8>,
    pub boxes: Vec<BBox>,
    #[serde(default)]
    pub points: Vec<PointPrompt>,
}

impl SegmentRequest {
    pub fn new(image: &GrayImage, boxes: Vec<BBox>, points: Vec<PointPrompt>) -> Result<Self> {
        Ok(Self { image: encode_gray_png(image)?, boxes, points })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    /// 16-bit grayscale PNG bytes, one per request box.
    #[serde(with = "b64_vec")]
    pub masks: Vec<Vec<u8>>,
}

impl SegmentResponse {
    /// Decodes every mask, checking count and dimensions.
    pub fn decode(&self, expected_boxes: usize, dims: Dims) -> Result<Vec<ProbMask>> {
        if self.masks.len() != expected_boxes {
            return Err(Error::Protocol(format!(
                "expected {expected_boxes} masks, got {}",
                self.masks.len()
            )));
        }
        self.masks
            .iter()
            .enumerate()
            .map(|(i, bytes)| {
                let m = decode_prob_png(bytes).map_err(|e| Error::Protocol(format!("mask {i}: {e}")))?;
                if m.dims() != dims {
                    return Err(Error::Protocol(format!("mask {i} is {}, image is {dims}", m.dims())));
                }
                Ok(m)
            })
            .collect()
    }
}

#[derive(Deserialize)]
struct HealthResponse {
    status: String,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

#[derive(Clone, Debug)]
pub struct RemoteConfig {
    /// Base URL, e.g. `http://127.0.0.1:8765`.
    pub endpoint: String,
    pub timeout: Duration,
    /// Additional attempts after a transient transport failure.
    pub retries: u32,
    pub base_delay: Duration,
    /// Maximum concurrent requests and idle pooled connections.
    pub pool_size: usize,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(30),
            retries: 3,
            base_delay: Duration::from_millis(200),
            pool_size: 4,
        }
    }
}

struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Permits {
    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteSegmenter {
    config: RemoteConfig,
    agent: ureq::Agent,
    permits: Permits,
}

impl std::fmt::Debug for RemoteSegmenter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteSegmenter").field("config", &self.config).finish()
    }
}

fn is_transient(e: &ureq::Error) -> bool {
    matches!(
        e,
        ureq::Error::Io(_) | ureq::Error::Timeout(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound
    )
}

impl RemoteSegmenter {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        if config.pool_size == 0 {
            return Err(Error::domain("remote pool size must be at least 1"));
        }
        if !(config.endpoint.starts_with("http://") || config.endpoint.starts_with("https://")) {
            return Err(Error::domain(format!("endpoint '{}' must be an http(s) URL", config.endpoint)));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .max_idle_connections_per_host(config.pool_size)
            .build()
            .into();
        let permits = Permits { free: Mutex::new(config.pool_size), cv: Condvar::new() };
        Ok(Self { config, agent, permits })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    /// Runs `call` with exponential backoff on transient transport failures.
    fn with_retries(&self, mut call: impl FnMut() -> std::result::Result<(u16, String), ureq::Error>) -> Result<(u16, String)> {
        let _permit = self.permits.acquire();
        let mut delay = self.config.base_delay;
        let mut attempt = 0;
        loop {
            match call() {
                Ok(r) => return Ok(r),
                Err(e) if is_transient(&e) && attempt < self.config.retries => {
                    log::warn!("transient failure ({e}), retrying in {delay:?}");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err(e) => {
                    return Err(Error::Transport(format!("{e} after {} attempt(s)", attempt + 1)));
                }
            }
        }
    }

    pub fn health(&self) -> Result<()> {
        let url = self.url("/v1/health");
        let (status, body) = self.with_retries(|| {
            let mut resp = self.agent.get(&url).call()?;
            let status = resp.status().as_u16();
            Ok((status, resp.body_mut().read_to_string()?))
        })?;
        if status != 200 {
            return Err(Error::Backend(format!("health returned HTTP {status}: {body}")));
        }
        let h: HealthResponse = serde_json::from_str(&body).map_err(|e| Error::Protocol(format!("health body: {e}")))?;
        if h.status != "ok" {
            return Err(Error::Backend(format!("health status '{}'", h.status)));
        }
        Ok(())
    }

    /// One protocol round-trip. The response is checked for mask count only.
    pub fn segment(&self, request: &SegmentRequest) -> Result<SegmentResponse> {
        let url = self.url("/v1/segment");
        let payload = serde_json::to_string(request)?;
        let (status, body) = self.with_retries(|| {
            let mut resp = self
                .agent
                .post(&url)
                .header("content-type", "application/json")
                .send(payload.as_str())?;
            let status = resp.status().as_u16();
            Ok((status, resp.body_mut().with_config().limit(1 << 30).read_to_string()?))
        })?;
        if status != 200 {
            let message = serde_json::from_str::<ErrorBody>(&body).map(|b| b.error).unwrap_or(body);
            return Err(Error::Backend(format!("HTTP {status}: {message}")));
        }
        let resp: SegmentResponse = serde_json::from_str(&body).map_err(|e| Error::Protocol(format!("response body: {e}")))?;
        if resp.masks.len() != request.boxes.len() {
            return Err(Error::Protocol(format!(
                "expected {} masks, got {}",
                request.boxes.len(),
                resp.masks.len()
            )));
        }
        Ok(resp)
    }

    /// Segments several boxes in one call, decoding and validating every mask.
    pub fn segment_boxes(&self, image: &GrayImage, boxes: &[BBox], points: &[PointPrompt]) -> Result<Vec<ProbMask>> {
        let request = SegmentRequest::new(image, boxes.to_vec(), points.to_vec())?;
        let dims = Dims::new(image.width() as usize, image.height() as usize);
        self.segment(&request)?.decode(boxes.len(), dims)
    }
}

/// One-shot protocol call against `endpoint`.
pub fn remote_segment(endpoint: &str, request: &SegmentRequest, timeout: Duration, retries: u32) -> Result<SegmentResponse> {
    let config = RemoteConfig { timeout, retries, ..RemoteConfig::new(endpoint) };
    RemoteSegmenter::new(config)?.segment(request)
}

impl Segmenter for RemoteSegmenter {
    fn capabilities(&self) -> Capabilities {
        Capabilities { supports_points: true, max_boxes_per_call: usize::MAX }
    }

    fn segment_one(&self, image: &GrayImage, bbox: &BBox, points: &[PointPrompt]) -> Result<ProbMask> {
        let mut masks = self.segment_boxes(image, std::slice::from_ref(bbox), points)?;
        Ok(masks.remove(0))
    }
}
