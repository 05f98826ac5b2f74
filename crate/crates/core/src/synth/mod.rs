//! Synthetic trade histories with labelled wash-trading rings.
//!
//! Organic trades go between random distinct addresses at log-normal prices,
//! spread uniformly over the scenario's time span. Each wash ring passes
//! one token around its members in a cycle, at short gaps and at a fraction
//! of the organic mean price. A ring of size 1 trades with itself.

mod eval;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    iso_seconds, write_corpus, Corpus, CorpusError, SaleRecord, Usd, LAMPORTS_PER_SOL, SALES_FILE,
};

pub use eval::{evaluate, Confusion, EvalError, EvalMetrics};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub collection_id: String,
    pub n_tokens: usize,
    pub n_organic_addresses: usize,
    pub n_wash_rings: usize,
    pub ring_size: usize,
    pub wash_trades_per_ring: usize,
    pub organic_trades: usize,
    /// Mean and sigma of ln(price in USD) for organic trades.
    pub price_log_mean: f64,
    pub price_log_sigma: f64,
    /// Wash price as a multiple of the organic mean price.
    pub wash_price_multiplier: f64,
    /// Wash trades follow each other after a uniform gap in this range.
    pub wash_gap_min_secs: u32,
    pub wash_gap_max_secs: u32,
    #[serde(with = "iso_seconds")]
    pub start: DateTime<Utc>,
    pub span_days: u32,
    pub sol_price_usd: f64,
    pub marketplace_mix: BTreeMap<String, f64>,
    /// Upper bound on organic plus wash addresses, if set.
    pub max_addresses: Option<usize>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 7,
            collection_id: "synthetic".into(),
            n_tokens: 50,
            n_organic_addresses: 60,
            n_wash_rings: 2,
            ring_size: 3,
            wash_trades_per_ring: 40,
            organic_trades: 300,
            price_log_mean: 4.0,
            price_log_sigma: 0.8,
            wash_price_multiplier: 0.2,
            wash_gap_min_secs: 60,
            wash_gap_max_secs: 900,
            start: DateTime::from_timestamp(1_672_531_200, 0).unwrap(),
            span_days: 90,
            sol_price_usd: 20.0,
            marketplace_mix: [("MAGIC_EDEN", 0.6), ("TENSOR", 0.3), ("SOLANART", 0.1)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            max_addresses: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("scenario needs {needed} addresses but the budget is {budget}")]
    AddressBudget { needed: usize, budget: usize },
    #[error("ground truth does not match corpus: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl ScenarioConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| SynthError::Json {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.collection_id.trim().is_empty() {
            return bad("collection_id is empty");
        }
        if self.n_tokens == 0 && self.organic_trades + self.n_wash_rings > 0 {
            return bad("trades need at least one token");
        }
        if self.organic_trades > 0 && self.n_organic_addresses < 2 {
            return bad("organic trades need at least two organic addresses");
        }
        if self.n_wash_rings > 0 && self.ring_size == 0 {
            return bad("ring_size must be >= 1");
        }
        if !(self.price_log_mean.is_finite() && self.price_log_sigma.is_finite())
            || self.price_log_sigma < 0.0
        {
            return bad("price model needs a finite mean and sigma >= 0");
        }
        if !(self.wash_price_multiplier.is_finite() && self.wash_price_multiplier > 0.0) {
            return bad("wash_price_multiplier must be > 0");
        }
        if self.wash_gap_min_secs > self.wash_gap_max_secs {
            return bad("wash_gap_min_secs exceeds wash_gap_max_secs");
        }
        if self.span_days == 0 {
            return bad("span_days must be >= 1");
        }
        if !(self.sol_price_usd.is_finite() && self.sol_price_usd > 0.0) {
            return bad("sol_price_usd must be > 0");
        }
        let weights: Vec<f64> = self.marketplace_mix.values().copied().collect();
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return bad("marketplace_mix needs non-negative weights");
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("marketplace_mix weights must sum to 1");
        }
        let needed = self.n_organic_addresses + self.n_wash_rings * self.ring_size;
        if let Some(budget) = self.max_addresses {
            if needed > budget {
                return Err(SynthError::AddressBudget { needed, budget });
            }
        }
        Ok(())
    }

    fn organic_mean_price(&self) -> f64 {
        (self.price_log_mean + self.price_log_sigma.powi(2) / 2.0).exp()
    }
}

/// A corpus together with the wash activity injected into it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    pub corpus: Corpus,
    pub wash_addresses: BTreeSet<String>,
    pub wash_tx_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub collection_id: String,
    pub seed: u64,
    pub wash_addresses: BTreeSet<String>,
    pub wash_tx_ids: BTreeSet<String>,
}

impl LabeledCorpus {
    /// Checks that every wash trade exists and touches a wash address.
    pub fn new(
        corpus: Corpus,
        wash_addresses: BTreeSet<String>,
        wash_tx_ids: BTreeSet<String>,
    ) -> Result<Self, SynthError> {
        let by_tx: BTreeMap<&str, &SaleRecord> =
            corpus.sales().iter().map(|s| (s.tx_id.as_str(), s)).collect();
        for tx in &wash_tx_ids {
            let Some(s) = by_tx.get(tx.as_str()) else {
                return Err(SynthError::Inconsistent(format!("wash tx {tx} not in corpus")));
            };
            if !wash_addresses.contains(&s.buyer) && !wash_addresses.contains(&s.seller) {
                return Err(SynthError::Inconsistent(format!(
                    "wash tx {tx} touches no wash address"
                )));
            }
        }
        Ok(LabeledCorpus {
            corpus,
            wash_addresses,
            wash_tx_ids,
        })
    }

    /// Reads `sales.jsonl` and the ground-truth sidecar from `dir`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, SynthError> {
        let dir = dir.as_ref();
        let corpus = crate::corpus::load_corpus(dir)?;
        let path = dir.join(GROUND_TRUTH_FILE);
        let text = fs::read_to_string(&path).map_err(|source| SynthError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let truth: GroundTruth = serde_json::from_str(&text).map_err(|source| SynthError::Json {
            path: path.display().to_string(),
            source,
        })?;
        Self::new(corpus, truth.wash_addresses, truth.wash_tx_ids)
    }

    /// Writes `sales.jsonl` and the ground-truth sidecar into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, config: &ScenarioConfig) -> Result<(), SynthError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|source| SynthError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        write_corpus(&self.corpus, dir.join(SALES_FILE))?;
        let truth = GroundTruth {
            collection_id: config.collection_id.clone(),
            seed: config.seed,
            wash_addresses: self.wash_addresses.clone(),
            wash_tx_ids: self.wash_tx_ids.clone(),
        };
        let path = dir.join(GROUND_TRUTH_FILE);
        crate::output::write_json(&path, &truth).map_err(|source| SynthError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn address(rng: &mut ChaCha8Rng, taken: &mut HashSet<String>) -> String {
    loop {
        let a = format!("{:032x}", rng.random::<u128>());
        if taken.insert(a.clone()) {
            return a;
        }
    }
}

/// Deterministic for a given config, seed included.
pub fn generate(config: &ScenarioConfig) -> Result<LabeledCorpus, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut taken = HashSet::new();
    let organic: Vec<String> = (0..config.n_organic_addresses)
        .map(|_| address(&mut rng, &mut taken))
        .collect();
    let rings: Vec<Vec<String>> = (0..config.n_wash_rings)
        .map(|_| {
            (0..config.ring_size)
                .map(|_| address(&mut rng, &mut taken))
                .collect()
        })
        .collect();

    let markets: Vec<&String> = config.marketplace_mix.keys().collect();
    let market_dist = WeightedIndex::new(config.marketplace_mix.values().copied())
        .map_err(|e| SynthError::InvalidConfig(format!("marketplace_mix: {e}")))?;
    let price_dist = LogNormal::new(config.price_log_mean, config.price_log_sigma)
        .map_err(|e| SynthError::InvalidConfig(format!("price model: {e}")))?;
    let span_secs = i64::from(config.span_days) * 86_400;
    let token = |i: usize| format!("{}-{i:04}", config.collection_id);

    let mut tx_seen = HashSet::new();
    let mut sales = Vec::with_capacity(
        config.organic_trades + config.n_wash_rings * config.wash_trades_per_ring,
    );
    let mut make_sale = |rng: &mut ChaCha8Rng,
                         time: DateTime<Utc>,
                         token_id: String,
                         seller: &str,
                         buyer: &str,
                         usd: f64|
     -> Result<SaleRecord, SynthError> {
        let tx_id = address(rng, &mut tx_seen);
        let price_usd = Usd::from_f64((usd * 100.0).round().max(1.0) / 100.0)
            .map_err(|e| SynthError::InvalidConfig(format!("price: {e}")))?;
        let price_lamports =
            (price_usd.as_f64() / config.sol_price_usd * LAMPORTS_PER_SOL as f64).round() as u64;
        Ok(SaleRecord {
            tx_id,
            block_time: time,
            collection_id: config.collection_id.clone(),
            token_id,
            buyer: buyer.to_string(),
            seller: seller.to_string(),
            price_lamports,
            price_usd,
            marketplace: markets[market_dist.sample(rng)].clone(),
        })
    };

    for _ in 0..config.organic_trades {
        let s = rng.random_range(0..organic.len());
        let mut b = rng.random_range(0..organic.len() - 1);
        if b >= s {
            b += 1;
        }
        let t = config.start + Duration::seconds(rng.random_range(0..span_secs));
        let tok = token(rng.random_range(0..config.n_tokens));
        let usd = price_dist.sample(&mut rng);
        let sale = make_sale(&mut rng, t, tok, &organic[s], &organic[b], usd)?;
        sales.push(sale);
    }

    let wash_usd = config.wash_price_multiplier * config.organic_mean_price();
    let mut wash_tx_ids = BTreeSet::new();
    for ring in &rings {
        let tok = token(rng.random_range(0..config.n_tokens));
        let mut t = config.start + Duration::seconds(rng.random_range(0..span_secs));
        for i in 0..config.wash_trades_per_ring {
            let seller = &ring[i % ring.len()];
            let buyer = &ring[(i + 1) % ring.len()];
            // Small jitter so prices are not literally constant.
            let usd = wash_usd * rng.random_range(0.95..1.05);
            let sale = make_sale(&mut rng, t, tok.clone(), seller, buyer, usd)?;
            wash_tx_ids.insert(sale.tx_id.clone());
            sales.push(sale);
            let gap = rng.random_range(config.wash_gap_min_secs..=config.wash_gap_max_secs);
            t += Duration::seconds(i64::from(gap));
        }
    }

    let corpus = Corpus::from_records(sales)?;
    let wash_addresses = rings.into_iter().flatten().collect();
    LabeledCorpus::new(corpus, wash_addresses, wash_tx_ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_corpus() {
        let c = ScenarioConfig::default();
        assert_eq!(generate(&c).unwrap(), generate(&c).unwrap());
        let other = ScenarioConfig { seed: 8, ..c.clone() };
        assert_ne!(generate(&c).unwrap().corpus, generate(&other).unwrap().corpus);
    }

    #[test]
    fn no_rings_no_truth() {
        let c = ScenarioConfig {
            n_wash_rings: 0,
            ..Default::default()
        };
        let l = generate(&c).unwrap();
        assert!(l.wash_addresses.is_empty() && l.wash_tx_ids.is_empty());
        assert_eq!(l.corpus.len(), 300);
    }

    #[test]
    fn ring_of_one_self_trades() {
        let c = ScenarioConfig {
            n_wash_rings: 1,
            ring_size: 1,
            ..Default::default()
        };
        let l = generate(&c).unwrap();
        let wash: Vec<&SaleRecord> = l
            .corpus
            .sales()
            .iter()
            .filter(|s| l.wash_tx_ids.contains(&s.tx_id))
            .collect();
        assert_eq!(wash.len(), 40);
        assert!(wash.iter().all(|s| s.is_self_trade()));
    }

    #[test]
    fn budget_is_enforced() {
        let c = ScenarioConfig {
            max_addresses: Some(65),
            ..Default::default()
        };
        assert!(matches!(
            generate(&c),
            Err(SynthError::AddressBudget { needed: 66, budget: 65 })
        ));
    }

    #[test]
    fn weights_must_sum_to_one() {
        let mut c = ScenarioConfig::default();
        c.marketplace_mix.insert("OTHER".into(), 0.5);
        assert!(matches!(generate(&c), Err(SynthError::InvalidConfig(_))));
    }

    #[test]
    fn config_json_round_trip() {
        let c = ScenarioConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ScenarioConfig>(&text).unwrap(), c);
        let partial: ScenarioConfig = serde_json::from_str(r#"{"seed": 3}"#).unwrap();
        assert_eq!(partial.seed, 3);
        assert_eq!(partial.ring_size, 3);
    }
}
