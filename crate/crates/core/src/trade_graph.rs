//! Per-collection trade graphs.
//!
//! Addresses are nodes and every sale is a directed edge `seller -> buyer`,
//! so the graph is a multigraph that may contain self-loops (an address
//! selling to itself).
//!
//! # Clustering coefficient
//!
//! For a node `i` with neighbour set `N_i` (union of in- and out-neighbours,
//! `i` itself excluded) and `k_i = |N_i|`:
//!
//! ```text
//! C_i = |{ (j, l) : j, l in N_i, j != l, j -> l is an edge }| / (k_i (k_i - 1))
//! ```
//!
//! Parallel edges between the same ordered pair count once, so the numerator
//! never exceeds the number of ordered pairs and `C_i` stays in `[0, 1]`.
//! Nodes with fewer than two neighbours get `C_i = 0`.

use std::collections::{BTreeMap, HashMap};
use std::io;
use std::path::Path;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{format_time, Corpus, SaleRecord, Usd};
use crate::output::write_csv;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("unknown collection {0:?}")]
    UnknownCollection(String),
    #[error("address {0:?} is not in the graph")]
    UnknownAddress(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradeEdge {
    pub seller: usize,
    pub buyer: usize,
    pub tx_id: String,
    pub price_usd: Usd,
    pub block_time: DateTime<Utc>,
}

#[derive(Debug, Clone)]
pub struct TradeGraph {
    collection_id: String,
    /// Sorted, so node indexes do not depend on input order.
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    edges: Vec<TradeEdge>,
    in_degree: Vec<usize>,
    out_degree: Vec<usize>,
    self_loops: Vec<usize>,
    /// Distinct out-neighbours per node, sorted, self excluded.
    succ: Vec<Vec<usize>>,
    /// Distinct in- or out-neighbours per node, sorted, self excluded.
    nbrs: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub address: String,
    pub in_degree: usize,
    pub out_degree: usize,
    pub unique_neighbors: usize,
    pub clustering_coefficient: f64,
    pub self_loop_count: usize,
}

pub fn build_graph(corpus: &Corpus, collection_id: &str) -> Result<TradeGraph, GraphError> {
    if !corpus.contains_collection(collection_id) {
        return Err(GraphError::UnknownCollection(collection_id.to_string()));
    }
    Ok(TradeGraph::from_sales(
        collection_id,
        corpus.collection_sales(collection_id),
    ))
}

impl TradeGraph {
    pub fn from_sales<'a>(
        collection_id: &str,
        sales: impl IntoIterator<Item = &'a SaleRecord>,
    ) -> Self {
        let mut sales: Vec<&SaleRecord> = sales.into_iter().collect();
        sales.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));

        let mut nodes: Vec<String> = sales
            .iter()
            .flat_map(|s| [s.seller.clone(), s.buyer.clone()])
            .collect();
        nodes.sort();
        nodes.dedup();
        let index: HashMap<String, usize> =
            nodes.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();

        let n = nodes.len();
        let mut in_degree = vec![0; n];
        let mut out_degree = vec![0; n];
        let mut self_loops = vec![0; n];
        let mut succ = vec![Vec::new(); n];
        let mut nbrs = vec![Vec::new(); n];
        let edges: Vec<TradeEdge> = sales
            .iter()
            .map(|s| {
                let (u, v) = (index[&s.seller], index[&s.buyer]);
                out_degree[u] += 1;
                in_degree[v] += 1;
                if u == v {
                    self_loops[u] += 1;
                } else {
                    succ[u].push(v);
                    nbrs[u].push(v);
                    nbrs[v].push(u);
                }
                TradeEdge {
                    seller: u,
                    buyer: v,
                    tx_id: s.tx_id.clone(),
                    price_usd: s.price_usd,
                    block_time: s.block_time,
                }
            })
            .collect();
        for list in succ.iter_mut().chain(nbrs.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        TradeGraph {
            collection_id: collection_id.to_string(),
            nodes,
            index,
            edges,
            in_degree,
            out_degree,
            self_loops,
            succ,
            nbrs,
        }
    }

    pub fn collection_id(&self) -> &str {
        &self.collection_id
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[TradeEdge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_index(&self, address: &str) -> Option<usize> {
        self.index.get(address).copied()
    }

    /// Distinct neighbours of node `i` (either direction, self excluded).
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.nbrs[i]
    }

    /// Whether at least one `u -> v` edge exists.
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        if u == v {
            return self.self_loops[u] > 0;
        }
        self.succ[u].binary_search(&v).is_ok()
    }

    fn clustering_at(&self, i: usize) -> f64 {
        let nb = &self.nbrs[i];
        let k = nb.len();
        if k < 2 {
            return 0.0;
        }
        let links: usize = nb
            .iter()
            .map(|&j| {
                self.succ[j]
                    .iter()
                    .filter(|&&l| l != i && nb.binary_search(&l).is_ok())
                    .count()
            })
            .sum();
        links as f64 / (k * (k - 1)) as f64
    }

    pub fn clustering_coefficient(&self, address: &str) -> Result<f64, GraphError> {
        self.node_index(address)
            .map(|i| self.clustering_at(i))
            .ok_or_else(|| GraphError::UnknownAddress(address.to_string()))
    }

    pub fn node_metrics(&self) -> BTreeMap<String, NodeMetrics> {
        (0..self.node_count())
            .into_par_iter()
            .map(|i| NodeMetrics {
                address: self.nodes[i].clone(),
                in_degree: self.in_degree[i],
                out_degree: self.out_degree[i],
                unique_neighbors: self.nbrs[i].len(),
                clustering_coefficient: self.clustering_at(i),
                self_loop_count: self.self_loops[i],
            })
            .collect::<Vec<_>>()
            .into_iter()
            .map(|m| (m.address.clone(), m))
            .collect()
    }

    /// Edge list as `seller,buyer,tx_id,price_usd,block_time`.
    pub fn write_edge_list_csv(&self, path: &Path) -> io::Result<()> {
        write_csv(
            path,
            &["seller", "buyer", "tx_id", "price_usd", "block_time"],
            self.edges.iter().map(|e| {
                [
                    self.nodes[e.seller].clone(),
                    self.nodes[e.buyer].clone(),
                    e.tx_id.clone(),
                    e.price_usd.to_string(),
                    format_time(e.block_time),
                ]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_time;

    fn sale(tx: &str, seller: &str, buyer: &str) -> SaleRecord {
        SaleRecord {
            tx_id: tx.into(),
            block_time: parse_time("2022-05-05").unwrap(),
            collection_id: "c".into(),
            token_id: "t".into(),
            buyer: buyer.into(),
            seller: seller.into(),
            price_lamports: 0,
            price_usd: Usd::from_cents(100),
            marketplace: "TENSOR".into(),
        }
    }

    fn graph(edges: &[(&str, &str)]) -> TradeGraph {
        let sales: Vec<SaleRecord> = edges
            .iter()
            .enumerate()
            .map(|(i, (s, b))| sale(&format!("tx{i:03}"), s, b))
            .collect();
        TradeGraph::from_sales("c", &sales)
    }

    #[test]
    fn single_sale() {
        let g = graph(&[("A", "B")]);
        assert_eq!((g.node_count(), g.edge_count()), (2, 1));
    }

    #[test]
    fn self_trade_is_a_loop() {
        let g = graph(&[("A", "A")]);
        assert_eq!((g.node_count(), g.edge_count()), (1, 1));
        let m = &g.node_metrics()["A"];
        assert_eq!(m.self_loop_count, 1);
        assert_eq!((m.in_degree, m.out_degree, m.unique_neighbors), (1, 1, 0));
        assert_eq!(m.clustering_coefficient, 0.0);
    }

    #[test]
    fn directed_triangle_is_one_half() {
        let g = graph(&[("A", "B"), ("B", "C"), ("C", "A")]);
        for m in g.node_metrics().values() {
            assert_eq!(m.clustering_coefficient, 0.5);
            assert_eq!((m.in_degree, m.out_degree), (1, 1));
        }
    }

    #[test]
    fn parallel_edges_count_once() {
        let g = graph(&[("A", "B"), ("B", "C"), ("C", "A"), ("B", "C"), ("B", "C")]);
        assert_eq!(g.clustering_coefficient("A").unwrap(), 0.5);
        let full = graph(&[
            ("A", "B"),
            ("B", "A"),
            ("B", "C"),
            ("C", "B"),
            ("A", "C"),
            ("C", "A"),
        ]);
        assert_eq!(full.clustering_coefficient("A").unwrap(), 1.0);
    }

    #[test]
    fn star_center_is_zero() {
        let g = graph(&[("hub", "a"), ("hub", "b"), ("c", "hub"), ("d", "hub")]);
        assert_eq!(g.clustering_coefficient("hub").unwrap(), 0.0);
    }

    #[test]
    fn unknown_lookups_fail() {
        let g = graph(&[("A", "B")]);
        assert!(matches!(
            g.clustering_coefficient("Z"),
            Err(GraphError::UnknownAddress(_))
        ));
        let corpus = Corpus::from_records(vec![sale("x", "A", "B")]).unwrap();
        assert!(matches!(
            build_graph(&corpus, "nope"),
            Err(GraphError::UnknownCollection(_))
        ));
    }

    #[test]
    fn empty_graph_has_no_metrics() {
        let g = TradeGraph::from_sales("c", &[]);
        assert!(g.node_metrics().is_empty());
    }
}
