//! Precision and recall of an audit against injected ground truth.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::LabeledCorpus;
use crate::wash_audit::WashReport;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("report for collection {0:?} which is not in the labelled corpus")]
    UnknownCollection(String),
    #[error("report flags trade {0:?} which is not in the labelled corpus")]
    UnknownTrade(String),
    #[error("report flags address {0:?} which never trades in the labelled corpus")]
    UnknownAddress(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// 1 when nothing was flagged.
    pub precision: f64,
    /// 1 when there was nothing to find.
    pub recall: f64,
    pub f1: f64,
}

impl Confusion {
    pub fn from_sets(truth: &BTreeSet<&str>, predicted: &BTreeSet<&str>) -> Self {
        let tp = truth.intersection(predicted).count();
        let fp = predicted.len() - tp;
        let fn_ = truth.len() - tp;
        let precision = if predicted.is_empty() {
            1.0
        } else {
            tp as f64 / predicted.len() as f64
        };
        let recall = if truth.is_empty() {
            1.0
        } else {
            tp as f64 / truth.len() as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Confusion {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub address: Confusion,
    pub trade: Confusion,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Scores the union of all reports' flags against the labels.
pub fn evaluate(labeled: &LabeledCorpus, reports: &[WashReport]) -> Result<EvalMetrics, EvalError> {
    let corpus = &labeled.corpus;
    let txs: BTreeSet<&str> = corpus.sales().iter().map(|s| s.tx_id.as_str()).collect();
    let mut flagged_addrs = BTreeSet::new();
    let mut flagged_txs = BTreeSet::new();
    for r in reports {
        if !corpus.contains_collection(&r.collection_id) {
            return Err(EvalError::UnknownCollection(r.collection_id.clone()));
        }
        for a in &r.suspicious_addresses {
            if corpus.address_sales(&a.address).next().is_none() {
                return Err(EvalError::UnknownAddress(a.address.clone()));
            }
            flagged_addrs.insert(a.address.as_str());
        }
        for tx in &r.suspicious_trades {
            if !txs.contains(tx.as_str()) {
                return Err(EvalError::UnknownTrade(tx.clone()));
            }
            flagged_txs.insert(tx.as_str());
        }
    }
    let truth_addrs = labeled.wash_addresses.iter().map(String::as_str).collect();
    let truth_txs = labeled.wash_tx_ids.iter().map(String::as_str).collect();
    let mut notes = Vec::new();
    if flagged_addrs.is_empty() {
        notes.push("no addresses flagged; precision reported as 1".to_string());
    }
    if labeled.wash_addresses.is_empty() {
        notes.push("no injected wash activity; recall reported as 1".to_string());
    }
    Ok(EvalMetrics {
        address: Confusion::from_sets(&truth_addrs, &flagged_addrs),
        trade: Confusion::from_sets(&truth_txs, &flagged_txs),
        notes,
    })
}
