//! Sale records, holder snapshots and the value types they are built from.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Lamports per SOL.
pub const LAMPORTS_PER_SOL: u64 = 1_000_000_000;

/// A non-negative US dollar amount held as integer cents.
///
/// All market sums are done in cents so quarterly totals are exact to the
/// cent no matter how many sales are added up.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Usd(u64);

impl Usd {
    pub const ZERO: Usd = Usd(0);

    pub const fn from_cents(cents: u64) -> Self {
        Usd(cents)
    }

    pub const fn cents(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// Converts a decimal dollar value, rejecting negatives, non-finite values
    /// and anything with more than two fractional digits.
    pub fn from_f64(value: f64) -> Result<Self, MoneyError> {
        if !value.is_finite() {
            return Err(MoneyError::NotFinite);
        }
        if value < 0.0 {
            return Err(MoneyError::Negative(value.to_string()));
        }
        let scaled = value * 100.0;
        let cents = scaled.round();
        if (scaled - cents).abs() > 1e-6_f64.max(scaled * 1e-12) {
            return Err(MoneyError::Precision(value.to_string()));
        }
        if cents > u64::MAX as f64 {
            return Err(MoneyError::Overflow(value.to_string()));
        }
        Ok(Usd(cents as u64))
    }

    pub fn checked_sub(self, other: Usd) -> Option<Usd> {
        self.0.checked_sub(other.0).map(Usd)
    }
}

impl fmt::Display for Usd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl FromStr for Usd {
    type Err = MoneyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().trim_start_matches('$').replace(',', "");
        if s.starts_with('-') {
            return Err(MoneyError::Negative(s));
        }
        let (whole, frac) = match s.split_once('.') {
            Some((w, f)) => (w, f),
            None => (s.as_str(), ""),
        };
        if frac.len() > 2 {
            return Err(MoneyError::Precision(s.clone()));
        }
        let digits_ok = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
        if whole.is_empty() || !digits_ok(whole) || !digits_ok(frac) {
            return Err(MoneyError::Syntax(s.clone()));
        }
        let whole: u64 = whole.parse().map_err(|_| MoneyError::Overflow(s.clone()))?;
        let frac: u64 = match frac.len() {
            0 => 0,
            1 => frac.parse::<u64>().unwrap() * 10,
            _ => frac.parse().unwrap(),
        };
        whole
            .checked_mul(100)
            .and_then(|c| c.checked_add(frac))
            .map(Usd)
            .ok_or(MoneyError::Overflow(s))
    }
}

impl Add for Usd {
    type Output = Usd;

    fn add(self, rhs: Usd) -> Usd {
        Usd(self.0 + rhs.0)
    }
}

impl AddAssign for Usd {
    fn add_assign(&mut self, rhs: Usd) {
        self.0 += rhs.0;
    }
}

impl Sum for Usd {
    fn sum<I: Iterator<Item = Usd>>(iter: I) -> Usd {
        iter.fold(Usd::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Usd> for Usd {
    fn sum<I: Iterator<Item = &'a Usd>>(iter: I) -> Usd {
        iter.copied().sum()
    }
}

impl Serialize for Usd {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Usd {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Signed(i64),
            Float(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(deserializer)? {
            Raw::Int(v) => v
                .checked_mul(100)
                .map(Usd)
                .ok_or_else(|| MoneyError::Overflow(v.to_string())),
            Raw::Signed(v) => Err(MoneyError::Negative(v.to_string())),
            Raw::Float(v) => Usd::from_f64(v),
            Raw::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MoneyError {
    #[error("negative amount {0}")]
    Negative(String),
    #[error("amount {0} has more than two fractional digits")]
    Precision(String),
    #[error("amount is not a finite number")]
    NotFinite,
    #[error("malformed amount {0:?}")]
    Syntax(String),
    #[error("amount {0} overflows")]
    Overflow(String),
}

/// Serde adapter writing UTC timestamps as `YYYY-MM-DDTHH:MM:SSZ`.
///
/// Accepts any RFC 3339 string or integer unix seconds on input.
pub mod iso_seconds {
    use super::*;

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_time(*t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Unix(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Unix(secs) => Utc
                .timestamp_opt(secs, 0)
                .single()
                .ok_or_else(|| serde::de::Error::custom(format!("timestamp {secs} out of range"))),
            Raw::Text(s) => parse_time(&s).map_err(serde::de::Error::custom),
        }
    }
}

pub fn format_time(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Parses an RFC 3339 timestamp or a bare `YYYY-MM-DD` date (midnight UTC).
/// Sub-second precision is truncated.
pub fn parse_time(s: &str) -> Result<DateTime<Utc>, String> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        let secs = t.timestamp();
        return Utc
            .timestamp_opt(secs, 0)
            .single()
            .ok_or_else(|| format!("timestamp {s:?} out of range"));
    }
    if let Ok(d) = chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).unwrap().and_utc());
    }
    Err(format!("invalid ISO-8601 timestamp {s:?}"))
}

/// One NFT sale.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaleRecord {
    pub tx_id: String,
    #[serde(with = "iso_seconds")]
    pub block_time: DateTime<Utc>,
    pub collection_id: String,
    pub token_id: String,
    pub buyer: String,
    pub seller: String,
    pub price_lamports: u64,
    pub price_usd: Usd,
    pub marketplace: String,
}

impl SaleRecord {
    /// Self-trades are valid records; only identifiers must be non-empty.
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("tx_id", &self.tx_id),
            ("collection_id", &self.collection_id),
            ("token_id", &self.token_id),
            ("buyer", &self.buyer),
            ("seller", &self.seller),
            ("marketplace", &self.marketplace),
        ];
        for (name, value) in fields {
            if value.trim().is_empty() {
                return Err(format!("empty {name}"));
            }
        }
        Ok(())
    }

    pub fn is_self_trade(&self) -> bool {
        self.buyer == self.seller
    }

    /// Canonical corpus order.
    pub fn sort_key(&self) -> (DateTime<Utc>, &str) {
        (self.block_time, &self.tx_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderSnapshot {
    pub collection_id: String,
    pub holder: String,
    pub rank: u32,
    pub tokens_held: u64,
    pub supply: u64,
    #[serde(with = "iso_seconds")]
    pub snapshot_time: DateTime<Utc>,
}

impl HolderSnapshot {
    pub fn validate(&self) -> Result<(), String> {
        if self.collection_id.trim().is_empty() {
            return Err("empty collection_id".into());
        }
        if self.holder.trim().is_empty() {
            return Err("empty holder".into());
        }
        if self.rank < 1 {
            return Err("rank must be >= 1".into());
        }
        if self.supply < 1 {
            return Err("supply must be >= 1".into());
        }
        if self.tokens_held > self.supply {
            return Err(format!(
                "tokens_held {} exceeds supply {}",
                self.tokens_held, self.supply
            ));
        }
        Ok(())
    }
}

/// Half-open time range `[start_time, end_time)` and the page size used to
/// walk it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryWindow {
    pub start_time: DateTime<Utc>,
    pub end_time: DateTime<Utc>,
    pub page_size: u32,
}

impl QueryWindow {
    pub fn new(
        start_time: DateTime<Utc>,
        end_time: DateTime<Utc>,
        page_size: u32,
    ) -> Result<Self, String> {
        if start_time >= end_time {
            return Err(format!(
                "window start {} is not before end {}",
                format_time(start_time),
                format_time(end_time)
            ));
        }
        if page_size == 0 {
            return Err("page_size must be >= 1".into());
        }
        Ok(QueryWindow {
            start_time,
            end_time,
            page_size,
        })
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start_time <= t && t < self.end_time
    }

    /// Splits into consecutive sub-windows of at most `step`; the last one is
    /// clipped at `end_time`.
    pub fn slide(&self, step: chrono::Duration) -> Vec<QueryWindow> {
        assert!(step > chrono::Duration::zero(), "window step must be positive");
        let mut out = Vec::new();
        let mut start = self.start_time;
        while start < self.end_time {
            let end = (start + step).min(self.end_time);
            out.push(QueryWindow {
                start_time: start,
                end_time: end,
                page_size: self.page_size,
            });
            start = end;
        }
        out
    }
}

impl fmt::Display for QueryWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {})",
            format_time(self.start_time),
            format_time(self.end_time)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usd_parses_and_prints_two_decimals() {
        assert_eq!("823148455.54".parse::<Usd>().unwrap().cents(), 82_314_845_554);
        assert_eq!("$1,000.5".parse::<Usd>().unwrap().to_string(), "1000.50");
        assert_eq!(Usd::from_cents(7).to_string(), "0.07");
        assert!("1.234".parse::<Usd>().is_err());
        assert!("-1".parse::<Usd>().is_err());
    }

    #[test]
    fn usd_json_number_round_trip() {
        let v: Usd = serde_json::from_str("823148455.54").unwrap();
        assert_eq!(v.cents(), 82_314_845_554);
        assert_eq!(serde_json::to_string(&v).unwrap(), "823148455.54");
        assert!(serde_json::from_str::<Usd>("-3.5").is_err());
        assert!(serde_json::from_str::<Usd>("0.001").is_err());
        assert_eq!(serde_json::from_str::<Usd>("12").unwrap().cents(), 1200);
    }

    #[test]
    fn timestamps_accept_unix_and_iso() {
        #[derive(Deserialize)]
        struct T {
            #[serde(with = "iso_seconds")]
            t: DateTime<Utc>,
        }
        let a: T = serde_json::from_str(r#"{"t":1640995200}"#).unwrap();
        let b: T = serde_json::from_str(r#"{"t":"2022-01-01T00:00:00Z"}"#).unwrap();
        let c: T = serde_json::from_str(r#"{"t":"2022-01-01T08:00:00+08:00"}"#).unwrap();
        assert_eq!(a.t, b.t);
        assert_eq!(b.t, c.t);
        assert_eq!(format_time(a.t), "2022-01-01T00:00:00Z");
    }

    #[test]
    fn window_rejects_empty_range() {
        let t = parse_time("2022-01-01").unwrap();
        assert!(QueryWindow::new(t, t, 10).is_err());
        assert!(QueryWindow::new(t, t + chrono::Duration::days(1), 0).is_err());
    }

    #[test]
    fn slide_partitions_window() {
        let start = parse_time("2022-01-01").unwrap();
        let end = parse_time("2022-01-03T12:00:00Z").unwrap();
        let w = QueryWindow::new(start, end, 50).unwrap();
        let parts = w.slide(chrono::Duration::days(1));
        assert_eq!(parts.len(), 3);
        assert_eq!(parts[0].start_time, start);
        assert_eq!(parts[2].end_time, end);
        for pair in parts.windows(2) {
            assert_eq!(pair[0].end_time, pair[1].start_time);
        }
    }

    #[test]
    fn holder_snapshot_rejects_overfull_holding() {
        let s = HolderSnapshot {
            collection_id: "c".into(),
            holder: "h".into(),
            rank: 1,
            tokens_held: 11,
            supply: 10,
            snapshot_time: parse_time("2023-01-01").unwrap(),
        };
        assert!(s.validate().is_err());
    }
}
