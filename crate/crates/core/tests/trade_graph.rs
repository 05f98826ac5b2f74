#[path = "support/sales.rs"]
mod support;

use std::collections::BTreeSet;

use nft_audit::corpus::Corpus;
use nft_audit::trade_graph::{build_graph, TradeGraph};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{sale, sales};

/// Quadratic recomputation straight from the edge list.
fn clustering_oracle(edges: &[(String, String)], node: &str) -> f64 {
    let arcs: BTreeSet<(&str, &str)> = edges
        .iter()
        .filter(|(a, b)| a != b)
        .map(|(a, b)| (a.as_str(), b.as_str()))
        .collect();
    let nbrs: BTreeSet<&str> = arcs
        .iter()
        .filter_map(|&(a, b)| {
            if a == node {
                Some(b)
            } else if b == node {
                Some(a)
            } else {
                None
            }
        })
        .collect();
    let k = nbrs.len();
    if k < 2 {
        return 0.0;
    }
    let mut links = 0;
    for &u in &nbrs {
        for &v in &nbrs {
            if u != v && arcs.contains(&(u, v)) {
                links += 1;
            }
        }
    }
    links as f64 / (k * (k - 1)) as f64
}

#[test]
fn clustering_matches_quadratic_oracle_on_random_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let records: Vec<_> = (0..400)
        .map(|i| {
            sale(i, i as i64 * 60, "g", i % 9, rng.random_range(0..50), rng.random_range(0..50), 500, i)
        })
        .collect();
    let edges: Vec<(String, String)> = records.iter().map(|s| (s.seller.clone(), s.buyer.clone())).collect();
    let c = Corpus::from_records(records).unwrap();
    let g = build_graph(&c, "g").unwrap();
    for (addr, m) in g.node_metrics() {
        let want = clustering_oracle(&edges, &addr);
        assert!((m.clustering_coefficient - want).abs() < 1e-12, "{addr}");
    }
}

#[test]
fn triangle_and_star() {
    let tri = [sale(0, 0, "g", 0, 0, 1, 1, 0), sale(1, 1, "g", 0, 1, 2, 1, 0), sale(2, 2, "g", 0, 2, 0, 1, 0)];
    let g = TradeGraph::from_sales("g", &tri);
    assert_eq!(g.clustering_coefficient("addr0").unwrap(), 0.5);
    let star: Vec<_> = (1..6).map(|i| sale(i, i as i64, "g", 0, 0, i, 1, 0)).collect();
    let g = TradeGraph::from_sales("g", &star);
    assert_eq!(g.clustering_coefficient("addr0").unwrap(), 0.0);
    assert!(g.clustering_coefficient("nobody").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn degrees_match_an_edge_scan(records in sales(150)) {
        let c = Corpus::from_records(records).unwrap();
        for id in c.collection_ids() {
            let g = build_graph(&c, id).unwrap();
            let sales: Vec<_> = c.collection_sales(id).collect();
            prop_assert_eq!(g.edge_count(), sales.len());
            let metrics = g.node_metrics();
            let (mut ins, mut outs) = (0, 0);
            for (addr, m) in &metrics {
                let out = sales.iter().filter(|s| &s.seller == addr).count();
                let inn = sales.iter().filter(|s| &s.buyer == addr).count();
                let loops = sales.iter().filter(|s| &s.seller == addr && &s.buyer == addr).count();
                prop_assert_eq!(m.out_degree, out);
                prop_assert_eq!(m.in_degree, inn);
                prop_assert_eq!(m.self_loop_count, loops);
                prop_assert!((0.0..=1.0).contains(&m.clustering_coefficient));
                ins += m.in_degree;
                outs += m.out_degree;
            }
            prop_assert_eq!(ins, sales.len());
            prop_assert_eq!(outs, sales.len());
        }
    }
}
