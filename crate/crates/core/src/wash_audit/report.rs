//! Wash Trading Ratio reports and their market-level aggregation.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AuditError, SuspicionRule};
use crate::corpus::{Corpus, Usd};
use crate::output::{ratio, write_csv, write_json};

/// Serde for `f64` that may be infinite: finite values as numbers, infinities
/// as the strings `"inf"` / `"-inf"`.
pub mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else if *x < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad number {other:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuspiciousAddress {
    pub address: String,
    #[serde(with = "extended_f64")]
    pub lof: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WashReport {
    pub collection_id: String,
    pub trades: usize,
    pub tokens_traded: usize,
    pub wash_tokens: usize,
    /// `wash_tokens / tokens_traded`.
    pub wtr_tokens: f64,
    /// Suspicious dollar volume over total dollar volume.
    pub wtr_volume: f64,
    pub total_volume_usd: Usd,
    pub wash_volume_usd: Usd,
    /// Neighbourhood size actually used; below the configured `k` for small
    /// collections.
    pub k_used: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Highest LOF first.
    pub suspicious_addresses: Vec<SuspiciousAddress>,
    /// Canonical corpus order.
    pub suspicious_trades: Vec<String>,
    pub per_marketplace_wash_volume: BTreeMap<String, Usd>,
}

/// Maps flagged addresses onto a collection's trades and tokens.
///
/// A trade is suspicious when its buyer or seller is flagged (both, under
/// [`SuspicionRule::Both`]). A token counts as a wash token when at least one
/// of its trades is suspicious.
pub fn wash_report(
    corpus: &Corpus,
    collection_id: &str,
    suspicious: &[SuspiciousAddress],
    rule: SuspicionRule,
) -> WashReport {
    let flagged: HashSet<&str> = suspicious.iter().map(|s| s.address.as_str()).collect();
    let mut trades = 0;
    let mut tokens = BTreeSet::new();
    let mut wash_tokens = BTreeSet::new();
    let mut suspicious_trades = Vec::new();
    let mut total = Usd::ZERO;
    let mut wash = Usd::ZERO;
    let mut per_marketplace: BTreeMap<String, Usd> = BTreeMap::new();
    for s in corpus.collection_sales(collection_id) {
        trades += 1;
        total += s.price_usd;
        tokens.insert(s.token_id.as_str());
        let (b, se) = (
            flagged.contains(s.buyer.as_str()),
            flagged.contains(s.seller.as_str()),
        );
        let hit = match rule {
            SuspicionRule::Either => b || se,
            SuspicionRule::Both => b && se,
        };
        if hit {
            wash += s.price_usd;
            wash_tokens.insert(s.token_id.as_str());
            suspicious_trades.push(s.tx_id.clone());
            *per_marketplace.entry(s.marketplace.clone()).or_default() += s.price_usd;
        }
    }
    let wtr_volume = if total == Usd::ZERO {
        // Free trades: fall back to the trade-count share.
        if trades == 0 {
            0.0
        } else {
            suspicious_trades.len() as f64 / trades as f64
        }
    } else {
        wash.cents() as f64 / total.cents() as f64
    };
    let mut suspicious_addresses = suspicious.to_vec();
    sort_by_score(&mut suspicious_addresses);
    WashReport {
        collection_id: collection_id.to_string(),
        trades,
        tokens_traded: tokens.len(),
        wash_tokens: wash_tokens.len(),
        wtr_tokens: if tokens.is_empty() {
            0.0
        } else {
            wash_tokens.len() as f64 / tokens.len() as f64
        },
        wtr_volume,
        total_volume_usd: total,
        wash_volume_usd: wash,
        k_used: 0,
        note: None,
        suspicious_addresses,
        suspicious_trades,
        per_marketplace_wash_volume: per_marketplace,
    }
}

pub(crate) fn sort_by_score(v: &mut [SuspiciousAddress]) {
    v.sort_by(|a, b| b.lof.total_cmp(&a.lof).then_with(|| a.address.cmp(&b.address)));
}

/// Token-WTR interval of the collection histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WtrBucket {
    /// `[0, 0.25)`
    Low,
    /// `[0.25, 0.5)`
    Moderate,
    /// `[0.5, 0.75)`
    High,
    /// `[0.75, 1]`
    Severe,
}

impl WtrBucket {
    pub const ALL: [WtrBucket; 4] = [
        WtrBucket::Low,
        WtrBucket::Moderate,
        WtrBucket::High,
        WtrBucket::Severe,
    ];

    /// Classified on the exact fraction, so 1/4 lands in `Moderate`.
    pub fn of(wash_tokens: usize, tokens_traded: usize) -> Self {
        let (w, t) = (wash_tokens as u128 * 4, tokens_traded as u128);
        if w < t {
            WtrBucket::Low
        } else if w < 2 * t {
            WtrBucket::Moderate
        } else if w < 3 * t {
            WtrBucket::High
        } else {
            WtrBucket::Severe
        }
    }

    pub fn bounds(self) -> (f64, f64) {
        match self {
            WtrBucket::Low => (0.0, 0.25),
            WtrBucket::Moderate => (0.25, 0.5),
            WtrBucket::High => (0.5, 0.75),
            WtrBucket::Severe => (0.75, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bucket: WtrBucket,
    pub lo: f64,
    pub hi: f64,
    pub collections: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketplaceShare {
    pub marketplace: String,
    pub wash_volume_usd: Usd,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub collections_audited: usize,
    /// Collections with at least one wash token; the histogram covers these.
    pub collections_with_wash: usize,
    pub collections_over_half: usize,
    pub histogram: Vec<HistogramBin>,
    pub total_wash_volume_usd: Usd,
    /// Largest share first; empty when there is no wash volume.
    pub marketplace_shares: Vec<MarketplaceShare>,
}

pub fn aggregate_audit(reports: &[WashReport]) -> Result<AuditSummary, AuditError> {
    if reports.is_empty() {
        return Err(AuditError::NothingToAggregate);
    }
    let washed: Vec<&WashReport> = reports.iter().filter(|r| r.wash_tokens > 0).collect();
    let mut counts = [0usize; 4];
    for r in &washed {
        counts[WtrBucket::of(r.wash_tokens, r.tokens_traded) as usize] += 1;
    }
    let histogram = WtrBucket::ALL
        .iter()
        .map(|&bucket| {
            let (lo, hi) = bucket.bounds();
            let c = counts[bucket as usize];
            HistogramBin {
                bucket,
                lo,
                hi,
                collections: c,
                share: if washed.is_empty() {
                    0.0
                } else {
                    c as f64 / washed.len() as f64
                },
            }
        })
        .collect();

    let mut by_market: BTreeMap<&str, Usd> = BTreeMap::new();
    for r in reports {
        for (m, v) in &r.per_marketplace_wash_volume {
            *by_market.entry(m).or_default() += *v;
        }
    }
    let total: Usd = by_market.values().sum();
    let mut marketplace_shares: Vec<MarketplaceShare> = if total == Usd::ZERO {
        Vec::new()
    } else {
        by_market
            .into_iter()
            .map(|(m, v)| MarketplaceShare {
                marketplace: m.to_string(),
                wash_volume_usd: v,
                share: v.cents() as f64 / total.cents() as f64,
            })
            .collect()
    };
    marketplace_shares.sort_by(|a, b| {
        b.wash_volume_usd
            .cmp(&a.wash_volume_usd)
            .then_with(|| a.marketplace.cmp(&b.marketplace))
    });

    Ok(AuditSummary {
        collections_audited: reports.len(),
        collections_with_wash: washed.len(),
        collections_over_half: washed
            .iter()
            .filter(|r| 2 * r.wash_tokens > r.tokens_traded)
            .count(),
        histogram,
        total_wash_volume_usd: total,
        marketplace_shares,
    })
}

pub const AUDIT_REPORT_CSV: &str = "audit_report.csv";
pub const MARKETPLACE_SHARES_CSV: &str = "marketplace_shares.csv";
pub const WTR_HISTOGRAM_CSV: &str = "wtr_histogram.csv";
pub const DETAILS_DIR: &str = "details";

pub fn write_audit_report_csv(path: &Path, reports: &[WashReport]) -> io::Result<()> {
    write_csv(
        path,
        &[
            "collection_id",
            "tokens_traded",
            "wash_tokens",
            "wtr_tokens",
            "wtr_volume",
            "wash_volume_usd",
        ],
        reports.iter().map(|r| {
            [
                r.collection_id.clone(),
                r.tokens_traded.to_string(),
                r.wash_tokens.to_string(),
                ratio(r.wtr_tokens),
                ratio(r.wtr_volume),
                r.wash_volume_usd.to_string(),
            ]
        }),
    )
}

pub fn write_marketplace_shares_csv(path: &Path, summary: Option<&AuditSummary>) -> io::Result<()> {
    let rows = summary.map(|s| s.marketplace_shares.as_slice()).unwrap_or_default();
    write_csv(
        path,
        &["marketplace", "wash_volume_usd", "share"],
        rows.iter()
            .map(|m| [m.marketplace.clone(), m.wash_volume_usd.to_string(), ratio(m.share)]),
    )
}

pub fn write_wtr_histogram_csv(path: &Path, summary: Option<&AuditSummary>) -> io::Result<()> {
    let rows = summary.map(|s| s.histogram.as_slice()).unwrap_or_default();
    write_csv(
        path,
        &["lo", "hi", "collections", "share"],
        rows.iter().map(|b| {
            [
                b.lo.to_string(),
                b.hi.to_string(),
                b.collections.to_string(),
                ratio(b.share),
            ]
        }),
    )
}

/// File-system-safe name for a collection id.
fn file_stem(collection_id: &str) -> String {
    let s: String = collection_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

/// Writes one `<collection>.json` per report into `dir`; name clashes after
/// sanitising get a numeric suffix. Returns the paths written.
pub fn write_detail_files(dir: &Path, reports: &[WashReport]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut used = BTreeSet::new();
    let mut paths = Vec::with_capacity(reports.len());
    let mut sorted: Vec<&WashReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.collection_id.cmp(&b.collection_id));
    for r in sorted {
        let stem = file_stem(&r.collection_id);
        let mut name = stem.clone();
        let mut n = 1;
        while !used.insert(name.clone()) {
            n += 1;
            name = format!("{stem}-{n}");
        }
        let path = dir.join(format!("{name}.json"));
        write_json(&path, r)?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn read_detail_files(dir: &Path) -> io::Result<Vec<WashReport>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let text = fs::read_to_string(&p)?;
        let report: WashReport = serde_json::from_str(&text)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", p.display())))?;
        out.push(report);
    }
    out.sort_by(|a, b| a.collection_id.cmp(&b.collection_id));
    Ok(out)
}
