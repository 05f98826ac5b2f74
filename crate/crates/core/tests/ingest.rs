use std::time::Duration;

use chrono::{DateTime, Utc};
use nft_audit::corpus::mock::MockExplorer;
use nft_audit::corpus::{parse_time, ApiClient, ApiConfig, IngestError, QueryWindow, SaleRecord};
use serde_json::{json, Value};

fn t(s: &str) -> DateTime<Utc> {
    parse_time(s).unwrap()
}

fn raw(i: usize, time: &str, collection: &str) -> Value {
    json!({
        "tx_id": format!("tx{i:05}"),
        "block_time": time,
        "collection_id": collection,
        "token_id": format!("tok{}", i % 7),
        "buyer": format!("b{}", i % 5),
        "seller": format!("s{}", i % 3),
        "price_lamports": 1_000_000_000u64 + i as u64,
        "price_usd": 20.5,
        "marketplace": "MAGIC_EDEN",
        "extra_field": "ignored",
    })
}

/// 60 records over Jan 1..4 2023, alternating between two collections.
fn fixture() -> Vec<Value> {
    (0..60)
        .map(|i| {
            let time = t("2023-01-01") + chrono::Duration::minutes(i as i64 * 97);
            let col = if i % 2 == 0 { "alpha" } else { "beta" };
            raw(i, &nft_audit::corpus::format_time(time), col)
        })
        .collect()
}

fn client(base: &url::Url) -> ApiClient {
    let mut cfg = ApiConfig::new(base.clone());
    cfg.initial_backoff = Duration::from_millis(1);
    cfg.rate_limit_per_sec = 10_000.0;
    cfg.request_timeout = Duration::from_secs(5);
    ApiClient::new(cfg).unwrap()
}

fn window(a: &str, b: &str, page_size: u32) -> QueryWindow {
    QueryWindow::new(t(a), t(b), page_size).unwrap()
}

fn ids(records: &[SaleRecord]) -> Vec<&str> {
    records.iter().map(|r| r.tx_id.as_str()).collect()
}

#[test]
fn empty_window_yields_nothing() {
    let server = MockExplorer::new(fixture()).start();
    let out = client(&server.base_url)
        .ingest_all(window("2024-01-01", "2024-01-03", 10), None)
        .unwrap();
    assert!(out.records.is_empty());
    assert_eq!(out.stats.windows, 2);
    assert_eq!(out.stats.rejected_total(), 0);
}

#[test]
fn page_size_does_not_change_the_result() {
    let server = MockExplorer::new(fixture()).start();
    let c = client(&server.base_url);
    let small = c.ingest_all(window("2023-01-01", "2023-01-05", 5), None).unwrap();
    let large = c.ingest_all(window("2023-01-01", "2023-01-05", 10), None).unwrap();
    let huge = c.ingest_all(window("2023-01-01", "2023-01-05", 1000), None).unwrap();
    assert_eq!(small.records.len(), 60);
    assert_eq!(small.records, large.records);
    assert_eq!(small.records, huge.records);
    assert!(small.stats.pages > large.stats.pages);
}

#[test]
fn adjacent_windows_partition_the_range() {
    let server = MockExplorer::new(fixture()).start();
    let c = client(&server.base_url);
    let whole = c.ingest_all(window("2023-01-01", "2023-01-05", 7), None).unwrap();
    let mut parts = c
        .ingest_all(window("2023-01-01", "2023-01-02T12:00:00Z", 7), None)
        .unwrap()
        .records;
    parts.extend(
        c.ingest_all(window("2023-01-02T12:00:00Z", "2023-01-05", 7), None)
            .unwrap()
            .records,
    );
    assert_eq!(ids(&whole.records), ids(&parts));
}

#[test]
fn records_come_back_in_canonical_order() {
    let server = MockExplorer::new(fixture()).start();
    let out = client(&server.base_url)
        .ingest_all(window("2023-01-01", "2023-01-05", 8), None)
        .unwrap();
    let keys: Vec<_> = out.records.iter().map(SaleRecord::sort_key).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn lazy_stream_matches_bulk_fetch() {
    let server = MockExplorer::new(fixture()).start();
    let c = client(&server.base_url);
    let bulk = c.ingest_all(window("2023-01-01", "2023-01-05", 9), None).unwrap();
    let mut stream = c.ingest(window("2023-01-01", "2023-01-05", 9), None);
    let lazy: Vec<SaleRecord> = stream.by_ref().collect::<Result<_, _>>().unwrap();
    assert_eq!(lazy, bulk.records);
    assert_eq!(stream.stats().accepted, 60);
}

#[test]
fn concurrent_fetch_is_deterministic() {
    let server = MockExplorer::new(fixture()).start();
    let mut cfg = client(&server.base_url).config().clone();
    let serial = ApiClient::new(cfg.clone())
        .unwrap()
        .ingest_all(window("2023-01-01", "2023-01-05", 4), None)
        .unwrap();
    cfg.jobs = 4;
    let parallel = ApiClient::new(cfg)
        .unwrap()
        .ingest_all(window("2023-01-01", "2023-01-05", 4), None)
        .unwrap();
    assert_eq!(serial.records, parallel.records);
}

#[test]
fn collection_filter() {
    let server = MockExplorer::new(fixture()).start();
    let only = ["beta".to_string()];
    let out = client(&server.base_url)
        .ingest_all(window("2023-01-01", "2023-01-05", 10), Some(&only))
        .unwrap();
    assert_eq!(out.records.len(), 30);
    assert!(out.records.iter().all(|r| r.collection_id == "beta"));
    assert!(server.request_log().iter().all(|q| q.contains("collection=beta")));
}

#[test]
fn bad_records_are_rejected_and_counted() {
    let mut recs = fixture();
    recs[3]["price_usd"] = json!(-4.0);
    recs[5]["tx_id"] = json!("");
    recs[8] = json!({"tx_id": "broken", "block_time": recs[8]["block_time"].clone()});
    let dup = recs[10].clone();
    recs.push(dup);
    let server = MockExplorer::new(recs).start();
    let out = client(&server.base_url)
        .ingest_all(window("2023-01-01", "2023-01-05", 10), None)
        .unwrap();
    assert_eq!(out.records.len(), 57);
    assert_eq!(out.stats.accepted, 57);
    assert_eq!(out.stats.rejected_total(), 4);
    assert_eq!(out.stats.rejected.get("duplicate_tx_id"), Some(&1));
    assert!(!ids(&out.records).contains(&"tx00003"));
}

#[test]
fn transient_errors_are_retried() {
    let server = MockExplorer::new(fixture()).fail_first(2).throttle_first(2).start();
    let out = client(&server.base_url)
        .ingest_all(window("2023-01-01", "2023-01-02", 100), None)
        .unwrap();
    assert_eq!(out.records.len(), 15);
    assert_eq!(out.stats.retries, 4);
    assert_eq!(out.stats.throttled, 2);
}

#[test]
fn exhausted_retries_name_the_window() {
    let server = MockExplorer::new(fixture()).fail_always().start();
    let mut cfg = client(&server.base_url).config().clone();
    cfg.max_retries = 2;
    let err = ApiClient::new(cfg)
        .unwrap()
        .ingest_all(window("2023-01-01", "2023-01-02", 100), None)
        .unwrap_err();
    match &err {
        IngestError::RetriesExhausted { window, attempts, .. } => {
            assert_eq!(*attempts, 3);
            assert!(window.contains("2023-01-01T00:00:00Z"), "{window}");
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.request_count(), 3);
}

#[test]
fn api_key_is_sent_as_bearer_token() {
    let server = MockExplorer::new(fixture()).require_key("s3cret").start();
    let mut cfg = client(&server.base_url).config().clone();
    let denied = ApiClient::new(cfg.clone())
        .unwrap()
        .ingest_all(window("2023-01-01", "2023-01-02", 100), None)
        .unwrap_err();
    assert!(matches!(denied, IngestError::Status { status: 401, .. }), "{denied:?}");
    cfg.api_key = Some("s3cret".into());
    let ok = ApiClient::new(cfg)
        .unwrap()
        .ingest_all(window("2023-01-01", "2023-01-02", 100), None)
        .unwrap();
    assert_eq!(ok.records.len(), 15);
}
