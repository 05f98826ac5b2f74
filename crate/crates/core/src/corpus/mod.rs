//! Sale-record corpus: validated in-memory storage plus canonical JSONL files.
//!
//! A corpus path is either a single `.jsonl` file holding sale records, or a
//! directory holding `sales.jsonl` and optionally `holders.jsonl`.
//!
//! Files are written sorted by `(block_time, tx_id)` so that rewriting the
//! same record set always produces identical bytes.

mod ingest;
#[cfg(feature = "mock-api")]
pub mod mock;
mod types;

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub use ingest::{
    ApiClient, ApiConfig, IngestError, IngestOutcome, IngestStats, SaleStream, API_KEY_ENV,
};
pub use types::{
    format_time, iso_seconds, parse_time, HolderSnapshot, MoneyError, QueryWindow, SaleRecord,
    Usd, LAMPORTS_PER_SOL,
};

pub const SALES_FILE: &str = "sales.jsonl";
pub const HOLDERS_FILE: &str = "holders.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}:{line}: {reason}")]
    Schema {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("duplicate tx_id {tx_id:?} at {first} and {second}")]
    DuplicateTx {
        tx_id: String,
        first: String,
        second: String,
    },
    #[error("invalid record {tx_id:?}: {reason}")]
    InvalidRecord { tx_id: String, reason: String },
    #[error("holder snapshots can only be written to a directory corpus, got {0}")]
    HoldersNeedDirectory(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Immutable, validated set of sales (and optional holder snapshots) with
/// lookup indexes by collection and by address.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    sales: Vec<SaleRecord>,
    holders: Vec<HolderSnapshot>,
    by_collection: BTreeMap<String, Vec<usize>>,
    by_address: BTreeMap<String, Vec<usize>>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.sales == other.sales && self.holders == other.holders
    }
}

impl Corpus {
    /// Builds a corpus from records in any order. Every record is validated
    /// and `tx_id`s must be unique.
    pub fn from_records(records: Vec<SaleRecord>) -> Result<Self, CorpusError> {
        Self::from_parts(records, Vec::new())
    }

    pub fn from_parts(
        mut sales: Vec<SaleRecord>,
        mut holders: Vec<HolderSnapshot>,
    ) -> Result<Self, CorpusError> {
        for r in &sales {
            r.validate().map_err(|reason| CorpusError::InvalidRecord {
                tx_id: r.tx_id.clone(),
                reason,
            })?;
        }
        for h in &holders {
            h.validate().map_err(|reason| CorpusError::InvalidRecord {
                tx_id: format!("holder {}/{}", h.collection_id, h.holder),
                reason,
            })?;
        }
        sales.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        if let Some(pair) = sales.windows(2).find(|w| w[0].tx_id == w[1].tx_id) {
            return Err(CorpusError::DuplicateTx {
                tx_id: pair[0].tx_id.clone(),
                first: format_time(pair[0].block_time),
                second: format_time(pair[1].block_time),
            });
        }
        // tx_ids with different timestamps are not adjacent after the sort.
        let mut seen: HashMap<&str, usize> = HashMap::with_capacity(sales.len());
        for (i, r) in sales.iter().enumerate() {
            if let Some(&j) = seen.get(r.tx_id.as_str()) {
                return Err(CorpusError::DuplicateTx {
                    tx_id: r.tx_id.clone(),
                    first: format!("record {j}"),
                    second: format!("record {i}"),
                });
            }
            seen.insert(&r.tx_id, i);
        }
        holders.sort_by(|a, b| {
            (&a.collection_id, a.rank, &a.holder, a.snapshot_time).cmp(&(
                &b.collection_id,
                b.rank,
                &b.holder,
                b.snapshot_time,
            ))
        });
        Ok(Self::index(sales, holders))
    }

    fn index(sales: Vec<SaleRecord>, holders: Vec<HolderSnapshot>) -> Self {
        let mut by_collection: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_address: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in sales.iter().enumerate() {
            by_collection
                .entry(r.collection_id.clone())
                .or_default()
                .push(i);
            by_address.entry(r.buyer.clone()).or_default().push(i);
            if !r.is_self_trade() {
                by_address.entry(r.seller.clone()).or_default().push(i);
            }
        }
        Corpus {
            sales,
            holders,
            by_collection,
            by_address,
        }
    }

    /// All sales in canonical `(block_time, tx_id)` order.
    pub fn sales(&self) -> &[SaleRecord] {
        &self.sales
    }

    pub fn holders(&self) -> &[HolderSnapshot] {
        &self.holders
    }

    pub fn len(&self) -> usize {
        self.sales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sales.is_empty()
    }

    pub fn collection_ids(&self) -> impl Iterator<Item = &str> {
        self.by_collection.keys().map(String::as_str)
    }

    pub fn contains_collection(&self, collection_id: &str) -> bool {
        self.by_collection.contains_key(collection_id)
    }

    /// Sales of one collection in canonical order; empty for unknown ids.
    pub fn collection_sales(&self, collection_id: &str) -> impl Iterator<Item = &SaleRecord> {
        self.by_collection
            .get(collection_id)
            .into_iter()
            .flatten()
            .map(|&i| &self.sales[i])
    }

    /// Sales where `address` is buyer or seller, each listed once.
    pub fn address_sales(&self, address: &str) -> impl Iterator<Item = &SaleRecord> {
        self.by_address
            .get(address)
            .into_iter()
            .flatten()
            .map(|&i| &self.sales[i])
    }

    pub fn address_count(&self) -> usize {
        self.by_address.len()
    }

    pub fn total_usd(&self) -> Usd {
        self.sales.iter().map(|r| r.price_usd).sum()
    }
}

/// Loads a corpus from a `.jsonl` sales file or a corpus directory.
///
/// Unlike API ingestion, any malformed line is fatal here.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let (sales_path, holders_path) = if path.is_dir() {
        (path.join(SALES_FILE), Some(path.join(HOLDERS_FILE)))
    } else {
        (path.to_path_buf(), None)
    };
    let sales: Vec<(usize, SaleRecord)> = read_jsonl(&sales_path)?;

    let mut first_line: HashMap<&str, usize> = HashMap::with_capacity(sales.len());
    for (line, rec) in &sales {
        rec.validate().map_err(|reason| CorpusError::Schema {
            path: sales_path.clone(),
            line: *line,
            reason,
        })?;
        if let Some(prev) = first_line.insert(&rec.tx_id, *line) {
            return Err(CorpusError::DuplicateTx {
                tx_id: rec.tx_id.clone(),
                first: format!("{}:{prev}", sales_path.display()),
                second: format!("{}:{line}", sales_path.display()),
            });
        }
    }

    let mut holders = Vec::new();
    if let Some(hp) = holders_path.filter(|p| p.exists()) {
        for (line, h) in read_jsonl::<HolderSnapshot>(&hp)? {
            h.validate().map_err(|reason| CorpusError::Schema {
                path: hp.clone(),
                line,
                reason,
            })?;
            holders.push(h);
        }
    }
    Corpus::from_parts(sales.into_iter().map(|(_, r)| r).collect(), holders)
}

/// Loads holder snapshots from a standalone JSONL file.
pub fn load_holders(path: impl AsRef<Path>) -> Result<Vec<HolderSnapshot>, CorpusError> {
    let path = path.as_ref();
    read_jsonl::<HolderSnapshot>(path)?
        .into_iter()
        .map(|(line, h)| {
            h.validate().map_err(|reason| CorpusError::Schema {
                path: path.to_path_buf(),
                line,
                reason,
            })?;
            Ok(h)
        })
        .collect()
}

fn read_jsonl<T: serde::de::DeserializeOwned>(
    path: &Path,
) -> Result<Vec<(usize, T)>, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| CorpusError::Schema {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        out.push((idx + 1, value));
    }
    Ok(out)
}

/// Writes the corpus in canonical order. A path ending in `.jsonl` receives
/// the sales only; any other path is treated as a corpus directory.
pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let is_file = path.extension().is_some_and(|e| e == "jsonl");
    if is_file {
        if !corpus.holders.is_empty() {
            return Err(CorpusError::HoldersNeedDirectory(path.to_path_buf()));
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        return write_jsonl(path, &corpus.sales);
    }
    fs::create_dir_all(path).map_err(io_err(path))?;
    write_jsonl(&path.join(SALES_FILE), &corpus.sales)?;
    if !corpus.holders.is_empty() {
        write_jsonl(&path.join(HOLDERS_FILE), &corpus.holders)?;
    }
    Ok(())
}

pub(crate) fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| io_err(path)(e.into()))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sale(tx: &str, t: &str, collection: &str, buyer: &str, seller: &str, usd: &str) -> SaleRecord {
        SaleRecord {
            tx_id: tx.into(),
            block_time: parse_time(t).unwrap(),
            collection_id: collection.into(),
            token_id: format!("tok-{tx}"),
            buyer: buyer.into(),
            seller: seller.into(),
            price_lamports: 1_000_000_000,
            price_usd: usd.parse().unwrap(),
            marketplace: "TENSOR".into(),
        }
    }

    fn lines(records: &[SaleRecord]) -> String {
        records
            .iter()
            .map(|r| serde_json::to_string(r).unwrap() + "\n")
            .collect()
    }

    #[test]
    fn loads_three_valid_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let recs = [
            sale("a", "2022-01-01T00:00:00Z", "frogs", "x", "y", "1.00"),
            sale("b", "2022-01-02T00:00:00Z", "frogs", "y", "z", "2.00"),
            sale("c", "2022-01-03T00:00:00Z", "frogs", "z", "z", "3.50"),
        ];
        fs::write(&path, lines(&recs)).unwrap();
        let corpus = load_corpus(&path).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.collection_ids().collect::<Vec<_>>(), ["frogs"]);
        assert_eq!(corpus.address_sales("z").count(), 2);
        assert_eq!(corpus.total_usd().to_string(), "6.50");
    }

    #[test]
    fn duplicate_tx_names_both_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let recs = [
            sale("a", "2022-01-01T00:00:00Z", "c", "x", "y", "1.00"),
            sale("b", "2022-01-01T00:00:00Z", "c", "x", "y", "1.00"),
            sale("a", "2022-01-05T00:00:00Z", "c", "x", "y", "1.00"),
        ];
        fs::write(&path, lines(&recs)).unwrap();
        let err = load_corpus(&path).unwrap_err().to_string();
        assert!(err.contains("c.jsonl:1"), "{err}");
        assert!(err.contains("c.jsonl:3"), "{err}");
    }

    #[test]
    fn schema_violation_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let good = lines(&[sale("a", "2022-01-01T00:00:00Z", "c", "x", "y", "1.00")]);
        fs::write(&path, format!("{good}{{\"tx_id\":\"b\"}}\n")).unwrap();
        match load_corpus(&path).unwrap_err() {
            CorpusError::Schema { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn negative_price_is_a_load_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut v = serde_json::to_value(sale("a", "2022-01-01", "c", "x", "y", "1.00")).unwrap();
        v["price_usd"] = serde_json::json!(-4.0);
        fs::write(&path, format!("{v}\n")).unwrap();
        assert!(matches!(
            load_corpus(&path),
            Err(CorpusError::Schema { line: 1, .. })
        ));
    }

    #[test]
    fn permutations_write_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![
            sale("b", "2022-01-01T00:00:00Z", "c", "x", "y", "1.00"),
            sale("a", "2022-01-01T00:00:00Z", "c", "x", "y", "2.00"),
            sale("c", "2021-12-31T23:59:59Z", "d", "y", "x", "3.00"),
        ];
        let mut reversed = recs.clone();
        reversed.reverse();
        let p1 = dir.path().join("one.jsonl");
        let p2 = dir.path().join("two.jsonl");
        write_corpus(&Corpus::from_records(recs).unwrap(), &p1).unwrap();
        write_corpus(&Corpus::from_records(reversed).unwrap(), &p2).unwrap();
        let bytes = fs::read(&p1).unwrap();
        assert_eq!(bytes, fs::read(&p2).unwrap());
        let text = String::from_utf8(bytes).unwrap();
        let order: Vec<_> = text
            .lines()
            .map(|l| serde_json::from_str::<SaleRecord>(l).unwrap().tx_id)
            .collect();
        assert_eq!(order, ["c", "a", "b"]);
    }

    #[test]
    fn single_record_file_has_one_schema_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.jsonl");
        let corpus =
            Corpus::from_records(vec![sale("a", "2022-03-04T05:06:07Z", "c", "x", "y", "12.30")])
                .unwrap();
        write_corpus(&corpus, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        let v: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(
            keys,
            [
                "block_time",
                "buyer",
                "collection_id",
                "marketplace",
                "price_lamports",
                "price_usd",
                "seller",
                "token_id",
                "tx_id"
            ]
        );
        assert_eq!(v["block_time"], "2022-03-04T05:06:07Z");
        assert_eq!(v["price_usd"], 12.3);
    }

    #[test]
    fn directory_corpus_round_trips_holders() {
        let dir = tempfile::tempdir().unwrap();
        let holders = vec![HolderSnapshot {
            collection_id: "c".into(),
            holder: "whale".into(),
            rank: 1,
            tokens_held: 40,
            supply: 100,
            snapshot_time: parse_time("2023-06-30").unwrap(),
        }];
        let corpus = Corpus::from_parts(
            vec![sale("a", "2022-01-01", "c", "x", "y", "1.00")],
            holders,
        )
        .unwrap();
        assert!(matches!(
            write_corpus(&corpus, dir.path().join("flat.jsonl")),
            Err(CorpusError::HoldersNeedDirectory(_))
        ));
        let out = dir.path().join("corpus");
        write_corpus(&corpus, &out).unwrap();
        assert_eq!(load_corpus(&out).unwrap(), corpus);
    }
}
