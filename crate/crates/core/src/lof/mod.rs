//! Exact Local Outlier Factor.
//!
//! For a point `p` with `k`-distance `d_k(p)` (distance to its `k`-th
//! nearest other point) and neighbourhood `N_k(p)` (every other point within
//! `d_k(p)`, ties included, so `|N_k(p)| >= k`):
//!
//! ```text
//! rd_k(p, o) = max(d_k(o), d(p, o))
//! lrd_k(p)   = |N_k(p)| / sum_{o in N_k(p)} rd_k(p, o)
//! lof_k(p)   = sum_{o in N_k(p)} lrd_k(o) / (|N_k(p)| * lrd_k(p))
//! ```
//!
//! Points inside a cluster of at least `k + 1` coincident points have a zero
//! reachability sum and `lrd = +inf`. The score is then resolved in extended
//! arithmetic:
//!
//! * own `lrd` finite and some neighbour `lrd` infinite: `lof = +inf`;
//! * own `lrd` infinite: `lof` is the fraction of neighbours whose `lrd` is
//!   also infinite, which is always `1` in practice (a point can only have
//!   zero reachability sum if all its neighbours do too).
//!
//! Distances are Euclidean. Neighbour search uses a k-d tree but is exact.

mod kdtree;

use std::collections::HashSet;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::output::{ratio, write_csv};
use kdtree::KdTree;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LofError {
    #[error("insufficient points for k: have {n}, need at least {}", .k + 1)]
    InsufficientPoints { n: usize, k: usize },
    #[error("k must be >= 1")]
    ZeroK,
    #[error("point {id:?} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        got: usize,
    },
    #[error("point {0:?} has a non-finite coordinate")]
    NonFinite(String),
    #[error("duplicate point id {0:?}")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePoint {
    pub id: String,
    pub coords: Vec<f64>,
}

impl FeaturePoint {
    pub fn new(id: impl Into<String>, coords: Vec<f64>) -> Self {
        FeaturePoint {
            id: id.into(),
            coords,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// The `k`-distance neighbourhood of one point. Members are sorted by
/// distance, then index.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub index: usize,
    pub k: usize,
    pub k_distance: f64,
    pub members: Vec<Neighbor>,
}

/// Whose k-distance bounds the reachability distance from `p` to `o`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reachability {
    /// `max(d_k(o), d(p, o))`, the standard definition.
    #[default]
    Neighbor,
    /// `max(d_k(p), d(p, o))`; only for sensitivity analysis.
    Query,
}

impl Reachability {
    pub fn distance(self, direct: f64, query_k_distance: f64, neighbor_k_distance: f64) -> f64 {
        match self {
            Reachability::Neighbor => neighbor_k_distance.max(direct),
            Reachability::Query => query_k_distance.max(direct),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LofParams {
    pub k: usize,
    pub reachability: Reachability,
}

impl LofParams {
    pub fn new(k: usize) -> Self {
        LofParams {
            k,
            reachability: Reachability::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LofScore {
    pub id: String,
    pub k_distance: f64,
    pub neighbors: usize,
    pub lrd: f64,
    pub lof: f64,
}

/// Checks shape, finiteness and id uniqueness; returns the dimension.
pub(crate) fn validate(points: &[FeaturePoint], k: usize) -> Result<usize, LofError> {
    if k == 0 {
        return Err(LofError::ZeroK);
    }
    if points.len() <= k {
        return Err(LofError::InsufficientPoints { n: points.len(), k });
    }
    let dim = points[0].coords.len();
    let mut ids = HashSet::with_capacity(points.len());
    for p in points {
        if p.coords.len() != dim {
            return Err(LofError::DimensionMismatch {
                id: p.id.clone(),
                expected: dim,
                got: p.coords.len(),
            });
        }
        if p.coords.iter().any(|x| !x.is_finite()) {
            return Err(LofError::NonFinite(p.id.clone()));
        }
        if !ids.insert(p.id.as_str()) {
            return Err(LofError::DuplicateId(p.id.clone()));
        }
    }
    Ok(dim)
}

/// Exact `k`-distance neighbourhoods for every point, in input order.
pub fn knn(points: &[FeaturePoint], k: usize) -> Result<Vec<NeighborSet>, LofError> {
    let dim = validate(points, k)?;
    let flat: Vec<f64> = points.iter().flat_map(|p| p.coords.iter().copied()).collect();
    let tree = KdTree::build(&flat, dim);
    Ok((0..points.len())
        .into_par_iter()
        .map(|i| {
            let r2 = tree.kth_sq_dist(i, k);
            let members = tree
                .within(i, r2)
                .into_iter()
                .map(|(index, d2)| Neighbor {
                    index,
                    distance: d2.sqrt(),
                })
                .collect();
            NeighborSet {
                index: i,
                k,
                k_distance: r2.sqrt(),
                members,
            }
        })
        .collect())
}

/// Reachability distance from point `from` to its neighbour `to`, given the
/// direct distance between them.
pub fn reachability_distance(
    from: usize,
    to: usize,
    direct: f64,
    neighborhoods: &[NeighborSet],
    rule: Reachability,
) -> f64 {
    rule.distance(
        direct,
        neighborhoods[from].k_distance,
        neighborhoods[to].k_distance,
    )
}

/// Local reachability density; `+inf` when every reachability distance is 0.
pub fn local_reachability_density(
    set: &NeighborSet,
    neighborhoods: &[NeighborSet],
    rule: Reachability,
) -> f64 {
    let sum: f64 = set
        .members
        .iter()
        .map(|m| reachability_distance(set.index, m.index, m.distance, neighborhoods, rule))
        .sum();
    if sum == 0.0 {
        f64::INFINITY
    } else {
        set.members.len() as f64 / sum
    }
}

fn resolve_lof(own: f64, neighbor_lrds: impl Iterator<Item = f64>) -> f64 {
    let mut count = 0usize;
    let mut infinite = 0usize;
    let mut sum = 0.0;
    for l in neighbor_lrds {
        count += 1;
        if l.is_infinite() {
            infinite += 1;
        } else {
            sum += l;
        }
    }
    if own.is_infinite() {
        return infinite as f64 / count as f64;
    }
    if infinite > 0 {
        return f64::INFINITY;
    }
    if own == 0.0 {
        // Only reachable when distances overflow.
        return if sum == 0.0 { 1.0 } else { f64::INFINITY };
    }
    sum / (count as f64 * own)
}

pub fn lof(points: &[FeaturePoint], k: usize) -> Result<Vec<LofScore>, LofError> {
    lof_with(points, LofParams::new(k))
}

/// LOF scores for every point, in input order.
pub fn lof_with(points: &[FeaturePoint], params: LofParams) -> Result<Vec<LofScore>, LofError> {
    let hoods = knn(points, params.k)?;
    let lrds: Vec<f64> = hoods
        .par_iter()
        .map(|h| local_reachability_density(h, &hoods, params.reachability))
        .collect();
    Ok(hoods
        .iter()
        .map(|h| LofScore {
            id: points[h.index].id.clone(),
            k_distance: h.k_distance,
            neighbors: h.members.len(),
            lrd: lrds[h.index],
            lof: resolve_lof(lrds[h.index], h.members.iter().map(|m| lrds[m.index])),
        })
        .collect())
}

/// Debug dump as `id,lrd,lof`.
pub fn write_scores_csv(path: &Path, scores: &[LofScore]) -> io::Result<()> {
    write_csv(
        path,
        &["id", "lrd", "lof"],
        scores
            .iter()
            .map(|s| [s.id.clone(), ratio(s.lrd), ratio(s.lof)]),
    )
}
