//! Longitudinal market measurements: quarterly volume, the monthly
//! buyer/seller/volume timeline, purchase-concentration Lorenz curves and
//! top-holder concentration buckets.
//!
//! Calendar arithmetic is UTC. Dollar sums are exact in cents.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io;
use std::path::Path;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, HolderSnapshot, SaleRecord, Usd};
use crate::output::write_csv;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("no participants")]
    NoParticipants,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QuarterlyVolume {
    pub year: i32,
    pub quarter: u8,
    pub total_usd: Usd,
}

/// One entry per `(year, quarter)` that has at least one sale, ascending.
pub fn quarterly_volume(corpus: &Corpus) -> Vec<QuarterlyVolume> {
    quarterly_volume_of(corpus.sales())
}

pub fn quarterly_volume_of<'a>(
    sales: impl IntoIterator<Item = &'a SaleRecord>,
) -> Vec<QuarterlyVolume> {
    let mut sums: BTreeMap<(i32, u8), Usd> = BTreeMap::new();
    for s in sales {
        let q = (s.block_time.month0() / 3 + 1) as u8;
        *sums.entry((s.block_time.year(), q)).or_default() += s.price_usd;
    }
    sums.into_iter()
        .map(|((year, quarter), total_usd)| QuarterlyVolume {
            year,
            quarter,
            total_usd,
        })
        .collect()
}

pub fn yearly_totals(quarters: &[QuarterlyVolume]) -> BTreeMap<i32, Usd> {
    let mut out = BTreeMap::new();
    for q in quarters {
        *out.entry(q.year).or_default() += q.total_usd;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn of(t: chrono::DateTime<chrono::Utc>) -> Self {
        YearMonth {
            year: t.year(),
            month: t.month(),
        }
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            YearMonth {
                year: self.year + 1,
                month: 1,
            }
        } else {
            YearMonth {
                year: self.year,
                month: self.month + 1,
            }
        }
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelinePoint {
    pub month: YearMonth,
    pub tx_count: usize,
    pub unique_buyers: usize,
    pub unique_sellers: usize,
    pub volume_usd: Usd,
}

/// Dense monthly series from the first to the last active month; months
/// without sales are emitted with zeros.
pub fn timeline(corpus: &Corpus) -> Vec<TimelinePoint> {
    #[derive(Default)]
    struct Acc<'a> {
        tx: usize,
        buyers: BTreeSet<&'a str>,
        sellers: BTreeSet<&'a str>,
        volume: Usd,
    }
    let mut months: BTreeMap<YearMonth, Acc> = BTreeMap::new();
    for s in corpus.sales() {
        let acc = months.entry(YearMonth::of(s.block_time)).or_default();
        acc.tx += 1;
        acc.buyers.insert(&s.buyer);
        acc.sellers.insert(&s.seller);
        acc.volume += s.price_usd;
    }
    let (Some(&first), Some(&last)) = (months.keys().next(), months.keys().next_back()) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut m = first;
    while m <= last {
        out.push(match months.get(&m) {
            Some(a) => TimelinePoint {
                month: m,
                tx_count: a.tx,
                unique_buyers: a.buyers.len(),
                unique_sellers: a.sellers.len(),
                volume_usd: a.volume,
            },
            None => TimelinePoint {
                month: m,
                tx_count: 0,
                unique_buyers: 0,
                unique_sellers: 0,
                volume_usd: Usd::ZERO,
            },
        });
        m = m.succ();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buyer,
    Seller,
}

/// What a participant's share is measured in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LorenzWeight {
    /// Number of trades (the purchase-quantity reading).
    #[default]
    Trades,
    /// Dollar volume in cents.
    Usd,
}

/// Lorenz curve over participants sorted from least to most active.
///
/// `points[i] = (i / n, share held by the i least active participants)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorenzCurve {
    pub points: Vec<(f64, f64)>,
    pub gini: f64,
}

impl LorenzCurve {
    /// Builds the curve from per-participant integer weights (any order).
    ///
    /// The Gini index is `1 - 2A` with `A` the trapezoid area under the step
    /// points. With integer weights the area is an exact rational, so the
    /// index is computed as one correctly rounded division:
    /// `G = (nT - S) / (nT)` where `S = sum_i (C_{i-1} + C_i)` over the
    /// cumulative weights `C` and `T = C_n`.
    pub fn from_weights(weights: &[u64]) -> Result<Self, StatsError> {
        if weights.is_empty() {
            return Err(StatsError::NoParticipants);
        }
        let mut sorted = weights.to_vec();
        sorted.sort_unstable();
        let n = sorted.len() as u128;
        let total: u128 = sorted.iter().map(|&w| w as u128).sum();

        let mut points = Vec::with_capacity(sorted.len() + 1);
        points.push((0.0, 0.0));
        if total == 0 {
            // Nobody holds anything: treat as perfect equality.
            for i in 1..=sorted.len() {
                let f = i as f64 / n as f64;
                points.push((f, f));
            }
            return Ok(LorenzCurve { points, gini: 0.0 });
        }
        let mut cum: u128 = 0;
        let mut trapezoid_sum: u128 = 0;
        for (i, &w) in sorted.iter().enumerate() {
            let prev = cum;
            cum += w as u128;
            trapezoid_sum += prev + cum;
            points.push(((i + 1) as f64 / n as f64, ratio_u128(cum, total)));
        }
        let denom = n * total;
        let gini = ratio_u128(denom - trapezoid_sum, denom);
        Ok(LorenzCurve { points, gini })
    }

    /// Cumulative share held by the least active `pop_fraction` of
    /// participants, interpolating linearly between points.
    pub fn share_at(&self, pop_fraction: f64) -> f64 {
        let p = pop_fraction.clamp(0.0, 1.0);
        for w in self.points.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if p <= x1 {
                if x1 == x0 {
                    return y1;
                }
                return y0 + (y1 - y0) * (p - x0) / (x1 - x0);
            }
        }
        1.0
    }
}

/// `a / b` for exact integers, via the nearest `f64`s.
///
/// Operands up to 2^53 are exact in `f64`, making the result the correctly
/// rounded quotient. Larger sums lose a few ulps, which is far below any
/// reporting precision.
fn ratio_u128(a: u128, b: u128) -> f64 {
    a as f64 / b as f64
}

/// Trade-count Lorenz curve for one side of the market.
pub fn lorenz(corpus: &Corpus, side: Side) -> Result<LorenzCurve, StatsError> {
    lorenz_weighted(corpus, side, LorenzWeight::Trades)
}

pub fn lorenz_weighted(
    corpus: &Corpus,
    side: Side,
    weight: LorenzWeight,
) -> Result<LorenzCurve, StatsError> {
    let mut per_address: HashMap<&str, u64> = HashMap::new();
    for s in corpus.sales() {
        let who = match side {
            Side::Buyer => &s.buyer,
            Side::Seller => &s.seller,
        };
        *per_address.entry(who).or_default() += match weight {
            LorenzWeight::Trades => 1,
            LorenzWeight::Usd => s.price_usd.cents(),
        };
    }
    let weights: Vec<u64> = per_address.into_values().collect();
    LorenzCurve::from_weights(&weights)
}

/// Share of a collection's supply held by its rank-1 holder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HoldingInterval {
    /// `[0, 25)` percent
    Under25,
    /// `[25, 50)` percent
    From25To50,
    /// `[50, 75)` percent
    From50To75,
    /// `[75, 100]` percent
    From75To100,
}

impl HoldingInterval {
    pub const ALL: [HoldingInterval; 4] = [
        HoldingInterval::Under25,
        HoldingInterval::From25To50,
        HoldingInterval::From50To75,
        HoldingInterval::From75To100,
    ];

    /// Boundary values go to the higher interval.
    pub fn classify(tokens_held: u64, supply: u64) -> Self {
        let pct100 = tokens_held as u128 * 100;
        let s = supply as u128;
        if pct100 < 25 * s {
            HoldingInterval::Under25
        } else if pct100 < 50 * s {
            HoldingInterval::From25To50
        } else if pct100 < 75 * s {
            HoldingInterval::From50To75
        } else {
            HoldingInterval::From75To100
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            HoldingInterval::Under25 => "0%-25%",
            HoldingInterval::From25To50 => "25%-50%",
            HoldingInterval::From50To75 => "50%-75%",
            HoldingInterval::From75To100 => "75%-100%",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationBucket {
    pub interval: HoldingInterval,
    pub collections: usize,
    pub pct_of_collections: f64,
    pub avg_nft_ownership: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    /// Four buckets in interval order, or empty when no collection had a
    /// rank-1 snapshot.
    pub buckets: Vec<ConcentrationBucket>,
    /// Collections skipped for lack of a rank-1 snapshot.
    pub skipped: usize,
}

/// Buckets collections by how much of the supply their rank-1 holder owns.
///
/// When a collection has several rank-1 snapshots the latest one wins.
pub fn holder_concentration(snapshots: &[HolderSnapshot]) -> Concentration {
    let mut top: BTreeMap<&str, Option<&HolderSnapshot>> = BTreeMap::new();
    for s in snapshots {
        let slot = top.entry(&s.collection_id).or_default();
        if s.rank == 1 && slot.is_none_or(|cur| s.snapshot_time >= cur.snapshot_time) {
            *slot = Some(s);
        }
    }
    let skipped = top.values().filter(|s| s.is_none()).count();
    if skipped > 0 {
        tracing::warn!(skipped, "collections without a rank-1 holder snapshot");
    }
    let ranked: Vec<&HolderSnapshot> = top.into_values().flatten().collect();
    if ranked.is_empty() {
        return Concentration {
            buckets: Vec::new(),
            skipped,
        };
    }
    let mut count = [0usize; 4];
    let mut held = [0u128; 4];
    for s in &ranked {
        let b = HoldingInterval::classify(s.tokens_held, s.supply) as usize;
        count[b] += 1;
        held[b] += s.tokens_held as u128;
    }
    let total = ranked.len() as f64;
    let buckets = HoldingInterval::ALL
        .iter()
        .map(|&interval| {
            let i = interval as usize;
            ConcentrationBucket {
                interval,
                collections: count[i],
                pct_of_collections: 100.0 * count[i] as f64 / total,
                avg_nft_ownership: if count[i] == 0 {
                    0.0
                } else {
                    held[i] as f64 / count[i] as f64
                },
            }
        })
        .collect();
    Concentration { buckets, skipped }
}

pub fn write_quarterly_csv(path: &Path, rows: &[QuarterlyVolume]) -> io::Result<()> {
    write_csv(
        path,
        &["year", "quarter", "total_usd"],
        rows.iter().map(|q| {
            [
                q.year.to_string(),
                q.quarter.to_string(),
                q.total_usd.to_string(),
            ]
        }),
    )
}

pub fn write_timeline_csv(path: &Path, rows: &[TimelinePoint]) -> io::Result<()> {
    write_csv(
        path,
        &[
            "month",
            "tx_count",
            "unique_buyers",
            "unique_sellers",
            "volume_usd",
        ],
        rows.iter().map(|p| {
            [
                p.month.to_string(),
                p.tx_count.to_string(),
                p.unique_buyers.to_string(),
                p.unique_sellers.to_string(),
                p.volume_usd.to_string(),
            ]
        }),
    )
}

/// Writes `pop_fraction,cum_share`; `None` writes the header only.
pub fn write_lorenz_csv(path: &Path, curve: Option<&LorenzCurve>) -> io::Result<()> {
    let points = curve.map(|c| c.points.as_slice()).unwrap_or_default();
    write_csv(
        path,
        &["pop_fraction", "cum_share"],
        points.iter().map(|(x, y)| [x.to_string(), y.to_string()]),
    )
}

pub fn write_concentration_csv(path: &Path, c: &Concentration) -> io::Result<()> {
    write_csv(
        path,
        &["interval", "pct_of_collections", "avg_nft_ownership"],
        c.buckets.iter().map(|b| {
            [
                b.interval.label().to_string(),
                format!("{:.2}", b.pct_of_collections),
                format!("{:.2}", b.avg_nft_ownership),
            ]
        }),
    )
}
