//! Per-address behaviour features.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::SaleRecord;
use crate::lof::FeaturePoint;
use crate::trade_graph::NodeMetrics;

pub const FEATURE_NAMES: [&str; 7] = [
    "trade_count",
    "mean_price_ratio",
    "price_cv",
    "median_inter_trade_gap",
    "counterparty_diversity",
    "self_loop_fraction",
    "clustering_coefficient",
];

/// Raw (unstandardised) features of one address within one collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub address: String,
    /// Sales the address took part in, a self-trade counted once.
    pub trade_count: f64,
    /// Mean price of those sales over the collection's mean sale price.
    pub mean_price_ratio: f64,
    /// Population coefficient of variation of those prices; 0 below two trades.
    pub price_cv: f64,
    /// Median seconds between consecutive trades. Addresses with a single
    /// trade get the largest such gap seen in the collection.
    pub median_inter_trade_gap: f64,
    /// Distinct counterparties per trade; a self-trade's counterparty is the
    /// address itself.
    pub counterparty_diversity: f64,
    pub self_loop_fraction: f64,
    pub clustering_coefficient: f64,
}

impl FeatureVector {
    pub fn values(&self) -> [f64; 7] {
        [
            self.trade_count,
            self.mean_price_ratio,
            self.price_cv,
            self.median_inter_trade_gap,
            self.counterparty_diversity,
            self.self_loop_fraction,
            self.clustering_coefficient,
        ]
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Raw features for every address trading in `sales` (one collection),
/// sorted by address.
pub fn raw_features<'a>(
    sales: impl IntoIterator<Item = &'a SaleRecord>,
    metrics: &BTreeMap<String, NodeMetrics>,
) -> Vec<FeatureVector> {
    struct Acc<'s> {
        prices: Vec<f64>,
        times: Vec<i64>,
        counterparties: BTreeSet<&'s str>,
        self_trades: usize,
    }
    let sales: Vec<&SaleRecord> = sales.into_iter().collect();
    if sales.is_empty() {
        return Vec::new();
    }
    let collection_mean =
        sales.iter().map(|s| s.price_usd.as_f64()).sum::<f64>() / sales.len() as f64;

    let mut per: BTreeMap<&str, Acc> = BTreeMap::new();
    for s in &sales {
        let price = s.price_usd.as_f64();
        let t = s.block_time.timestamp();
        let parties: &[(&str, &str)] = if s.is_self_trade() {
            &[(&s.buyer, &s.seller)]
        } else {
            &[(&s.buyer, &s.seller), (&s.seller, &s.buyer)]
        };
        for &(me, other) in parties {
            let acc = per.entry(me).or_insert_with(|| Acc {
                prices: Vec::new(),
                times: Vec::new(),
                counterparties: BTreeSet::new(),
                self_trades: 0,
            });
            acc.prices.push(price);
            acc.times.push(t);
            acc.counterparties.insert(other);
            if s.is_self_trade() {
                acc.self_trades += 1;
            }
        }
    }

    let mut medians: BTreeMap<&str, Option<f64>> = BTreeMap::new();
    let mut max_gap: Option<f64> = None;
    for (addr, acc) in per.iter_mut() {
        acc.times.sort_unstable();
        let mut gaps: Vec<f64> = acc.times.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
        gaps.sort_by(f64::total_cmp);
        if let Some(&g) = gaps.last() {
            max_gap = Some(max_gap.map_or(g, |m: f64| m.max(g)));
        }
        medians.insert(addr, (!gaps.is_empty()).then(|| median(&gaps)));
    }
    // Nobody traded twice: fall back to the collection's time span.
    let fallback_gap = max_gap.unwrap_or_else(|| {
        let first = sales.iter().map(|s| s.block_time).min().unwrap();
        let last = sales.iter().map(|s| s.block_time).max().unwrap();
        (last - first).num_seconds() as f64
    });

    per.iter()
        .map(|(&addr, acc)| {
            let n = acc.prices.len() as f64;
            let mean = acc.prices.iter().sum::<f64>() / n;
            let price_cv = if acc.prices.len() < 2 || mean == 0.0 {
                0.0
            } else {
                let var = acc.prices.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
                var.sqrt() / mean
            };
            FeatureVector {
                address: addr.to_string(),
                trade_count: n,
                mean_price_ratio: if collection_mean == 0.0 {
                    1.0
                } else {
                    mean / collection_mean
                },
                price_cv,
                median_inter_trade_gap: medians[addr].unwrap_or(fallback_gap),
                counterparty_diversity: acc.counterparties.len() as f64 / n,
                self_loop_fraction: acc.self_trades as f64 / n,
                clustering_coefficient: metrics
                    .get(addr)
                    .map_or(0.0, |m| m.clustering_coefficient),
            }
        })
        .collect()
}

/// Z-scores each dimension across the given vectors. Constant dimensions
/// map to 0.
pub fn standardize(raw: &[FeatureVector]) -> Vec<FeaturePoint> {
    let rows: Vec<[f64; 7]> = raw.iter().map(FeatureVector::values).collect();
    let n = rows.len() as f64;
    let mut scaled: Vec<Vec<f64>> = vec![vec![0.0; 7]; rows.len()];
    for d in 0..7 {
        let col = rows.iter().map(|r| r[d]);
        let (lo, hi) = col
            .clone()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        if rows.is_empty() || lo == hi {
            continue;
        }
        let mean = col.clone().sum::<f64>() / n;
        let sd = (col.map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        for (out, r) in scaled.iter_mut().zip(&rows) {
            out[d] = (r[d] - mean) / sd;
        }
    }
    raw.iter()
        .zip(scaled)
        .map(|(f, coords)| FeaturePoint::new(f.address.clone(), coords))
        .collect()
}
