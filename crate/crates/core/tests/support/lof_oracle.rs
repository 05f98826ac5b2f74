// Brute-force LOF reference: every pairwise distance computed directly,
// neighbourhoods read off a full sort. Inputs are assumed valid.

use nft_audit::lof::{FeaturePoint, LofParams, LofScore, Reachability};

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |acc, (x, y)| acc + (x - y) * (x - y))
        .sqrt()
}

pub fn lof_bruteforce(points: &[FeaturePoint], params: LofParams) -> Vec<LofScore> {
    let n = points.len();
    let k = params.k;

    let dist: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| euclid(&points[i].coords, &points[j].coords))
                .collect()
        })
        .collect();

    let mut kdist = vec![0.0; n];
    let mut hood: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut others: Vec<(f64, usize)> =
            (0..n).filter(|&j| j != i).map(|j| (dist[i][j], j)).collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        kdist[i] = others[k - 1].0;
        hood.push(
            others
                .into_iter()
                .take_while(|&(d, _)| d <= kdist[i])
                .map(|(_, j)| j)
                .collect(),
        );
    }

    let lrd: Vec<f64> = (0..n)
        .map(|i| {
            let total: f64 = hood[i]
                .iter()
                .map(|&o| {
                    let bound = match params.reachability {
                        Reachability::Neighbor => kdist[o],
                        Reachability::Query => kdist[i],
                    };
                    if dist[i][o] > bound {
                        dist[i][o]
                    } else {
                        bound
                    }
                })
                .sum();
            if total == 0.0 {
                f64::INFINITY
            } else {
                hood[i].len() as f64 / total
            }
        })
        .collect();

    (0..n)
        .map(|i| {
            let m = hood[i].len() as f64;
            let any_inf = hood[i].iter().any(|&o| lrd[o].is_infinite());
            let score = if lrd[i].is_infinite() {
                hood[i].iter().filter(|&&o| lrd[o].is_infinite()).count() as f64 / m
            } else if any_inf {
                f64::INFINITY
            } else if lrd[i] == 0.0 {
                if hood[i].iter().all(|&o| lrd[o] == 0.0) {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                let s: f64 = hood[i].iter().map(|&o| lrd[o]).sum();
                s / (m * lrd[i])
            };
            LofScore {
                id: points[i].id.clone(),
                k_distance: kdist[i],
                neighbors: hood[i].len(),
                lrd: lrd[i],
                lof: score,
            }
        })
        .collect()
}
