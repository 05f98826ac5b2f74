//! Sliding-window ingestion from an explorer-style HTTP API.
//!
//! The API contract is:
//!
//! ```text
//! GET {base_url}/sales?start_time=<unix>&end_time=<unix>&page=<n>&page_size=<m>[&collection=<id>]
//! Authorization: Bearer <key>        (only when a key is configured)
//!
//! 200 {"data": [<sale>, ...], "has_more": <bool>}
//! ```
//!
//! `start_time` is inclusive and `end_time` exclusive, pages are 1-based and
//! each `<sale>` carries the corpus record fields, with `block_time` given
//! either as unix seconds or ISO-8601.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};
use url::Url;

use super::types::{QueryWindow, SaleRecord};

/// Environment variable holding the API key.
pub const API_KEY_ENV: &str = "NFT_AUDIT_API_KEY";

const SALE_FIELDS: [&str; 9] = [
    "tx_id",
    "block_time",
    "collection_id",
    "token_id",
    "buyer",
    "seller",
    "price_lamports",
    "price_usd",
    "marketplace",
];

#[derive(Debug, Clone)]
pub struct ApiConfig {
    pub base_url: Url,
    pub api_key: Option<String>,
    /// Width of each sliding sub-window.
    pub window_step: chrono::Duration,
    /// Request cap shared by all workers; `0` disables it.
    pub rate_limit_per_sec: f64,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub backoff_factor: f64,
    pub request_timeout: Duration,
    /// Number of sub-windows fetched concurrently.
    pub jobs: usize,
}

impl ApiConfig {
    pub fn new(base_url: Url) -> Self {
        ApiConfig {
            base_url,
            api_key: None,
            window_step: chrono::Duration::days(1),
            rate_limit_per_sec: 5.0,
            max_retries: 5,
            initial_backoff: Duration::from_secs(1),
            backoff_factor: 2.0,
            request_timeout: Duration::from_secs(30),
            jobs: 1,
        }
    }

    /// Picks up the API key from [`API_KEY_ENV`] when one is set.
    pub fn with_env_api_key(mut self) -> Self {
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            if !key.is_empty() {
                self.api_key = Some(key);
            }
        }
        self
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = self.initial_backoff.as_secs_f64() * self.backoff_factor.powi(attempt as i32);
        let jitter = rand::rng().random_range(0.5..=1.0);
        Duration::from_secs_f64(base * jitter)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("window {window}: gave up after {attempts} attempts: {last_error}")]
    RetriesExhausted {
        window: String,
        attempts: u32,
        last_error: String,
    },
    #[error("window {window}: server answered {status}")]
    Status { window: String, status: u16 },
    #[error("window {window}: malformed response: {reason}")]
    BadResponse { window: String, reason: String },
    #[error("invalid request URL: {0}")]
    Url(#[from] url::ParseError),
    #[error("HTTP client setup failed: {0}")]
    Client(String),
}

/// Ingestion counters. Rejections are keyed by reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub windows: usize,
    pub requests: usize,
    pub pages: usize,
    pub retries: usize,
    pub throttled: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<String, usize>,
}

impl IngestStats {
    pub fn rejected_total(&self) -> usize {
        self.rejected.values().sum()
    }

    fn reject(&mut self, reason: &str) {
        *self.rejected.entry(reason.to_string()).or_default() += 1;
    }

    fn merge(&mut self, other: &IngestStats) {
        self.windows += other.windows;
        self.requests += other.requests;
        self.pages += other.pages;
        self.retries += other.retries;
        self.throttled += other.throttled;
        self.accepted += other.accepted;
        for (k, v) in &other.rejected {
            *self.rejected.entry(k.clone()).or_default() += v;
        }
    }
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub records: Vec<SaleRecord>,
    pub stats: IngestStats,
}

#[derive(Deserialize)]
struct Page {
    data: Vec<serde_json::Value>,
    #[serde(default)]
    has_more: Option<bool>,
}

struct RateLimiter {
    interval: Option<Duration>,
    next_slot: Mutex<Instant>,
}

impl RateLimiter {
    fn new(per_sec: f64) -> Self {
        let interval = (per_sec > 0.0).then(|| Duration::from_secs_f64(1.0 / per_sec));
        RateLimiter {
            interval,
            next_slot: Mutex::new(Instant::now()),
        }
    }

    fn acquire(&self) {
        let Some(interval) = self.interval else { return };
        let slot = {
            let mut next = self.next_slot.lock().unwrap();
            let slot = (*next).max(Instant::now());
            *next = slot + interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            thread::sleep(slot - now);
        }
    }
}

pub struct ApiClient {
    http: Client,
    config: ApiConfig,
    limiter: RateLimiter,
}

impl ApiClient {
    pub fn new(config: ApiConfig) -> Result<Self, IngestError> {
        let http = Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| IngestError::Client(e.to_string()))?;
        Ok(ApiClient {
            limiter: RateLimiter::new(config.rate_limit_per_sec),
            http,
            config,
        })
    }

    pub fn config(&self) -> &ApiConfig {
        &self.config
    }

    /// Lazily walks the window one sub-window at a time.
    pub fn ingest<'a>(
        &'a self,
        window: QueryWindow,
        collections: Option<&'a [String]>,
    ) -> SaleStream<'a> {
        SaleStream {
            client: self,
            pending: window.slide(self.config.window_step).into(),
            collections,
            buffer: VecDeque::new(),
            seen: HashSet::new(),
            stats: IngestStats::default(),
            failed: false,
        }
    }

    /// Fetches all sub-windows with up to `config.jobs` workers and assembles
    /// the result in window order.
    pub fn ingest_all(
        &self,
        window: QueryWindow,
        collections: Option<&[String]>,
    ) -> Result<IngestOutcome, IngestError> {
        let parts = window.slide(self.config.window_step);
        let jobs = self.config.jobs.clamp(1, parts.len().max(1));
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<(Vec<SaleRecord>, IngestStats), IngestError>>>> =
            parts.iter().map(|_| Mutex::new(None)).collect();

        thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(part) = parts.get(i) else { break };
                    let mut stats = IngestStats::default();
                    let result = self
                        .fetch_window(part, collections, &mut stats)
                        .map(|recs| (recs, stats));
                    let failed = result.is_err();
                    *slots[i].lock().unwrap() = Some(result);
                    if failed {
                        // Let the other workers drain; remaining windows are skipped.
                        next.store(parts.len(), Ordering::Relaxed);
                        break;
                    }
                });
            }
        });

        let mut records = Vec::new();
        let mut stats = IngestStats::default();
        let mut seen = HashSet::new();
        for slot in slots {
            let Some(result) = slot.into_inner().unwrap() else {
                continue;
            };
            let (recs, part_stats) = result?;
            stats.merge(&part_stats);
            for r in recs {
                if seen.insert(r.tx_id.clone()) {
                    records.push(r);
                } else {
                    stats.accepted -= 1;
                    stats.reject("duplicate_tx_id");
                }
            }
        }
        Ok(IngestOutcome { records, stats })
    }

    /// Fetches every page of one sub-window, validating and sorting records.
    pub fn fetch_window(
        &self,
        window: &QueryWindow,
        collections: Option<&[String]>,
        stats: &mut IngestStats,
    ) -> Result<Vec<SaleRecord>, IngestError> {
        stats.windows += 1;
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        match collections {
            None => self.fetch_pages(window, None, &mut out, &mut seen, stats)?,
            Some(ids) => {
                for id in ids {
                    self.fetch_pages(window, Some(id), &mut out, &mut seen, stats)?;
                }
            }
        }
        out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        Ok(out)
    }

    fn fetch_pages(
        &self,
        window: &QueryWindow,
        collection: Option<&str>,
        out: &mut Vec<SaleRecord>,
        seen: &mut HashSet<String>,
        stats: &mut IngestStats,
    ) -> Result<(), IngestError> {
        let mut page_no = 1u32;
        loop {
            let url = self.page_url(window, collection, page_no)?;
            let page = self.get_page(&url, window, stats)?;
            stats.pages += 1;
            let n = page.data.len();
            for raw in page.data {
                match parse_sale(raw, window, collection) {
                    Ok(rec) => {
                        if seen.insert(rec.tx_id.clone()) {
                            stats.accepted += 1;
                            out.push(rec);
                        } else {
                            warn!(tx_id = %rec.tx_id, "rejected sale: duplicate tx_id");
                            stats.reject("duplicate_tx_id");
                        }
                    }
                    Err((reason, detail)) => {
                        warn!(%window, reason, detail, "rejected sale");
                        stats.reject(reason);
                    }
                }
            }
            let more = page.has_more.unwrap_or(n >= window.page_size as usize);
            if !more || n == 0 {
                return Ok(());
            }
            page_no += 1;
        }
    }

    fn page_url(
        &self,
        window: &QueryWindow,
        collection: Option<&str>,
        page: u32,
    ) -> Result<Url, IngestError> {
        let mut base = self.config.base_url.clone();
        if !base.path().ends_with('/') {
            base.set_path(&format!("{}/", base.path()));
        }
        let mut url = base.join("sales")?;
        {
            let mut q = url.query_pairs_mut();
            q.append_pair("start_time", &window.start_time.timestamp().to_string());
            q.append_pair("end_time", &window.end_time.timestamp().to_string());
            q.append_pair("page", &page.to_string());
            q.append_pair("page_size", &window.page_size.to_string());
            if let Some(c) = collection {
                q.append_pair("collection", c);
            }
        }
        Ok(url)
    }

    fn get_page(
        &self,
        url: &Url,
        window: &QueryWindow,
        stats: &mut IngestStats,
    ) -> Result<Page, IngestError> {
        let max = self.config.max_retries;
        let mut last_error = String::new();
        for attempt in 0..=max {
            if attempt > 0 {
                stats.retries += 1;
            }
            self.limiter.acquire();
            stats.requests += 1;
            let mut req = self.http.get(url.clone());
            if let Some(key) = &self.config.api_key {
                req = req.bearer_auth(key);
            }
            let wait = match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    let body = resp.text().map_err(|e| IngestError::BadResponse {
                        window: window.to_string(),
                        reason: e.to_string(),
                    })?;
                    return serde_json::from_str(&body).map_err(|e| IngestError::BadResponse {
                        window: window.to_string(),
                        reason: e.to_string(),
                    });
                }
                Ok(resp) if resp.status() == StatusCode::TOO_MANY_REQUESTS => {
                    stats.throttled += 1;
                    last_error = "429 Too Many Requests".into();
                    let retry_after = resp
                        .headers()
                        .get(reqwest::header::RETRY_AFTER)
                        .and_then(|v| v.to_str().ok())
                        .and_then(|v| v.trim().parse::<u64>().ok())
                        .map(Duration::from_secs);
                    retry_after.unwrap_or_else(|| self.config.backoff(attempt))
                }
                Ok(resp) if resp.status().is_server_error() => {
                    last_error = format!("server error {}", resp.status());
                    self.config.backoff(attempt)
                }
                Ok(resp) => {
                    return Err(IngestError::Status {
                        window: window.to_string(),
                        status: resp.status().as_u16(),
                    })
                }
                Err(e) => {
                    last_error = e.to_string();
                    self.config.backoff(attempt)
                }
            };
            if attempt < max {
                debug!(%url, attempt, ?wait, %last_error, "retrying");
                thread::sleep(wait);
            }
        }
        Err(IngestError::RetriesExhausted {
            window: window.to_string(),
            attempts: max + 1,
            last_error,
        })
    }
}

fn parse_sale(
    mut raw: serde_json::Value,
    window: &QueryWindow,
    collection: Option<&str>,
) -> Result<SaleRecord, (&'static str, String)> {
    if let Some(obj) = raw.as_object_mut() {
        obj.retain(|k, _| SALE_FIELDS.contains(&k.as_str()));
    }
    let rec: SaleRecord =
        serde_json::from_value(raw).map_err(|e| ("malformed", e.to_string()))?;
    rec.validate().map_err(|e| ("invalid", e))?;
    if !window.contains(rec.block_time) {
        return Err(("outside_window", rec.tx_id));
    }
    if collection.is_some_and(|c| c != rec.collection_id) {
        return Err(("wrong_collection", rec.tx_id));
    }
    Ok(rec)
}

/// Iterator over validated sales, fetched one sub-window at a time.
///
/// Records come out in nondecreasing `block_time` order. After an error the
/// stream yields nothing further.
pub struct SaleStream<'a> {
    client: &'a ApiClient,
    pending: VecDeque<QueryWindow>,
    collections: Option<&'a [String]>,
    buffer: VecDeque<SaleRecord>,
    seen: HashSet<String>,
    stats: IngestStats,
    failed: bool,
}

impl SaleStream<'_> {
    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }
}

impl Iterator for SaleStream<'_> {
    type Item = Result<SaleRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.failed {
                return None;
            }
            if let Some(r) = self.buffer.pop_front() {
                return Some(Ok(r));
            }
            let window = self.pending.pop_front()?;
            match self
                .client
                .fetch_window(&window, self.collections, &mut self.stats)
            {
                Ok(records) => {
                    for r in records {
                        if self.seen.insert(r.tx_id.clone()) {
                            self.buffer.push_back(r);
                        } else {
                            self.stats.accepted -= 1;
                            self.stats.reject("duplicate_tx_id");
                        }
                    }
                }
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
    }
}
