//! Wash-trading audit.
//!
//! For each collection: build the trade graph, describe every trading
//! address by seven behaviour features (z-scored within the collection),
//! score the addresses with LOF and flag those above a threshold. Flags are
//! then mapped onto trades and tokens to give the collection's Wash Trading
//! Ratio (WTR), both by token count and by dollar volume.

mod features;
mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::corpus::Corpus;
use crate::lof::{self, FeaturePoint, LofError, LofParams, LofScore, Reachability};
use crate::trade_graph::build_graph;

pub use features::{raw_features, standardize, FeatureVector, FEATURE_NAMES};
pub use report::{
    aggregate_audit, extended_f64, read_detail_files, wash_report, write_audit_report_csv,
    write_detail_files, write_marketplace_shares_csv, write_wtr_histogram_csv, AuditSummary,
    HistogramBin, MarketplaceShare, SuspiciousAddress, WashReport, WtrBucket, AUDIT_REPORT_CSV,
    DETAILS_DIR, MARKETPLACE_SHARES_CSV, WTR_HISTOGRAM_CSV,
};

pub const DEFAULT_K: usize = 20;
pub const DEFAULT_LOF_THRESHOLD: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AuditError {
    #[error("k must be >= 1")]
    InvalidK,
    #[error("LOF threshold must be > 0, got {0}")]
    InvalidThreshold(f64),
    #[error("unknown collection {0:?}")]
    UnknownCollection(String),
    #[error("no reports to aggregate")]
    NothingToAggregate,
    #[error(transparent)]
    Lof(#[from] LofError),
}

/// Which flagged endpoints make a trade suspicious.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuspicionRule {
    /// Buyer or seller flagged.
    #[default]
    Either,
    /// Buyer and seller both flagged.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub k: usize,
    pub lof_threshold: f64,
    pub rule: SuspicionRule,
    pub reachability: Reachability,
    /// Collections with fewer distinct trading addresses are skipped.
    pub min_addresses: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            k: DEFAULT_K,
            lof_threshold: DEFAULT_LOF_THRESHOLD,
            rule: SuspicionRule::Either,
            reachability: Reachability::Neighbor,
            min_addresses: 3,
        }
    }
}

impl AuditConfig {
    pub fn validate(&self) -> Result<(), AuditError> {
        if self.k == 0 {
            return Err(AuditError::InvalidK);
        }
        // +inf is allowed and flags nothing.
        if self.lof_threshold.is_nan() || self.lof_threshold <= 0.0 {
            return Err(AuditError::InvalidThreshold(self.lof_threshold));
        }
        Ok(())
    }
}

/// Standardised feature points (and their raw values) for one collection.
pub fn extract_features(
    corpus: &Corpus,
    collection_id: &str,
) -> Result<(Vec<FeatureVector>, Vec<FeaturePoint>), AuditError> {
    let graph = build_graph(corpus, collection_id)
        .map_err(|_| AuditError::UnknownCollection(collection_id.to_string()))?;
    let raw = raw_features(corpus.collection_sales(collection_id), &graph.node_metrics());
    let points = standardize(&raw);
    Ok((raw, points))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flagging {
    pub k_used: usize,
    pub scores: Vec<LofScore>,
    /// Highest LOF first.
    pub flagged: Vec<SuspiciousAddress>,
}

/// Scores `points` with LOF and returns those strictly above `threshold`.
///
/// When there are too few points for `k`, it is lowered to `n - 1`.
pub fn flag_suspicious(
    points: &[FeaturePoint],
    k: usize,
    threshold: f64,
    reachability: Reachability,
) -> Result<Flagging, AuditError> {
    if k == 0 {
        return Err(AuditError::InvalidK);
    }
    let k_used = k.min(points.len().saturating_sub(1)).max(1);
    if k_used < k {
        warn!(k, k_used, n = points.len(), "too few addresses for k; lowering it");
    }
    let scores = lof::lof_with(
        points,
        LofParams {
            k: k_used,
            reachability,
        },
    )?;
    let mut flagged: Vec<SuspiciousAddress> = scores
        .iter()
        .filter(|s| s.lof > threshold)
        .map(|s| SuspiciousAddress {
            address: s.id.clone(),
            lof: s.lof,
        })
        .collect();
    report::sort_by_score(&mut flagged);
    Ok(Flagging {
        k_used,
        scores,
        flagged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCollection {
    pub collection_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CollectionAudit {
    Audited(WashReport),
    Skipped(SkippedCollection),
}

pub fn audit_collection(
    corpus: &Corpus,
    collection_id: &str,
    config: &AuditConfig,
) -> Result<CollectionAudit, AuditError> {
    config.validate()?;
    let (_, points) = extract_features(corpus, collection_id)?;
    let needed = config.min_addresses.max(2);
    if points.len() < needed {
        return Ok(CollectionAudit::Skipped(SkippedCollection {
            collection_id: collection_id.to_string(),
            reason: format!(
                "{} trading addresses, need at least {needed}",
                points.len()
            ),
        }));
    }
    let flagging = flag_suspicious(&points, config.k, config.lof_threshold, config.reachability)?;
    let mut report = wash_report(corpus, collection_id, &flagging.flagged, config.rule);
    report.k_used = flagging.k_used;
    if flagging.k_used < config.k {
        report.note = Some(format!(
            "k lowered from {} to {} ({} addresses)",
            config.k,
            flagging.k_used,
            points.len()
        ));
    }
    Ok(CollectionAudit::Audited(report))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditRun {
    /// Sorted by collection id.
    pub reports: Vec<WashReport>,
    pub skipped: Vec<SkippedCollection>,
}

/// Audits every collection in parallel on the current rayon pool.
pub fn audit_corpus(corpus: &Corpus, config: &AuditConfig) -> Result<AuditRun, AuditError> {
    config.validate()?;
    let ids: Vec<&str> = corpus.collection_ids().collect();
    let results: Vec<CollectionAudit> = ids
        .par_iter()
        .map(|id| audit_collection(corpus, id, config))
        .collect::<Result<_, _>>()?;
    let mut run = AuditRun::default();
    for r in results {
        match r {
            CollectionAudit::Audited(rep) => run.reports.push(rep),
            CollectionAudit::Skipped(s) => run.skipped.push(s),
        }
    }
    Ok(run)
}
