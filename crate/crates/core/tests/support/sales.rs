// Random sale sets shared by the integration tests.
#![allow(dead_code)]

use chrono::{DateTime, Duration, Utc};
use nft_audit::corpus::{SaleRecord, Usd};
use proptest::prelude::*;

pub const MARKETS: [&str; 3] = ["MAGIC_EDEN", "TENSOR", "SOLANART"];

pub fn epoch() -> DateTime<Utc> {
    DateTime::from_timestamp(1_640_995_200, 0).unwrap()
}

pub fn sale(
    i: usize,
    secs: i64,
    collection: &str,
    token: usize,
    seller: usize,
    buyer: usize,
    cents: u64,
    market: usize,
) -> SaleRecord {
    SaleRecord {
        tx_id: format!("tx{i:06}"),
        block_time: epoch() + Duration::seconds(secs),
        collection_id: collection.to_string(),
        token_id: format!("{collection}-t{token}"),
        buyer: format!("addr{buyer}"),
        seller: format!("addr{seller}"),
        price_lamports: cents * 1_000_000,
        price_usd: Usd::from_cents(cents),
        marketplace: MARKETS[market % MARKETS.len()].to_string(),
    }
}

/// Up to `max` sales over two years, a few collections, a small address
/// pool (so self-trades and repeated pairs occur) and unique tx ids.
pub fn sales(max: usize) -> impl Strategy<Value = Vec<SaleRecord>> {
    prop::collection::vec(
        (
            0..63_072_000i64,
            0..3usize,
            0..6usize,
            0..12usize,
            0..12usize,
            0..5_000_000u64,
            0..3usize,
        ),
        0..=max,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (secs, c, tok, s, b, cents, m))| {
                sale(i, secs, ["c0", "c1", "c2"][c], tok, s, b, cents, m)
            })
            .collect()
    })
}
