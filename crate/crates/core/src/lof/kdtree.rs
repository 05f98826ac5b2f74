//! Exact k-d tree over a flat row-major coordinate buffer.
//!
//! Pruning compares squared box distances against squared point distances.
//! Both are sums of per-axis squared differences accumulated in axis order,
//! and a box never lies farther than any point inside it in floating point
//! either (rounding is monotone), so pruning with a strict `>` never drops a
//! point that ties the current bound.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 16;

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

struct Node {
    start: usize,
    end: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    children: Option<(usize, usize)>,
}

pub(crate) struct KdTree<'a> {
    coords: &'a [f64],
    dim: usize,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<'a> KdTree<'a> {
    pub(crate) fn build(coords: &'a [f64], dim: usize) -> Self {
        let n = coords.len().checked_div(dim).unwrap_or(0);
        let mut tree = KdTree {
            coords,
            dim,
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        if n > 0 {
            tree.build_node(0, n);
        }
        tree
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for &i in &self.order[start..end] {
            for (a, &x) in self.point(i).iter().enumerate() {
                lo[a] = lo[a].min(x);
                hi[a] = hi[a].max(x);
            }
        }
        let (axis, spread) = (0..self.dim)
            .map(|a| (a, hi[a] - lo[a]))
            .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });

        let id = self.nodes.len();
        self.nodes.push(Node {
            start,
            end,
            lo,
            hi,
            children: None,
        });
        if end - start <= LEAF_SIZE || spread <= 0.0 {
            return id;
        }
        let mid = start + (end - start) / 2;
        let (coords, dim) = (self.coords, self.dim);
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            coords[a * dim + axis]
                .total_cmp(&coords[b * dim + axis])
                .then(a.cmp(&b))
        });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id].children = Some((left, right));
        id
    }

    fn box_sq_dist(&self, node: &Node, q: &[f64]) -> f64 {
        let mut s = 0.0;
        for (a, &x) in q.iter().enumerate() {
            let d = if x < node.lo[a] {
                node.lo[a] - x
            } else if x > node.hi[a] {
                x - node.hi[a]
            } else {
                0.0
            };
            s += d * d;
        }
        s
    }

    /// Squared distance from point `query` to its `k`-th nearest other point.
    pub(crate) fn kth_sq_dist(&self, query: usize, k: usize) -> f64 {
        let q = self.point(query);
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.knn_visit(0, q, query, k, &mut heap);
        heap.peek().map(|c| c.d2).unwrap_or(f64::INFINITY)
    }

    fn knn_visit(
        &self,
        node_id: usize,
        q: &[f64],
        query: usize,
        k: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        let node = &self.nodes[node_id];
        if heap.len() == k && self.box_sq_dist(node, q) > heap.peek().unwrap().d2 {
            return;
        }
        match node.children {
            None => {
                for &i in &self.order[node.start..node.end] {
                    if i == query {
                        continue;
                    }
                    let c = Candidate {
                        d2: sq_dist(q, self.point(i)),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Some((l, r)) => {
                let dl = self.box_sq_dist(&self.nodes[l], q);
                let dr = self.box_sq_dist(&self.nodes[r], q);
                let (first, second) = if dl <= dr { (l, r) } else { (r, l) };
                self.knn_visit(first, q, query, k, heap);
                self.knn_visit(second, q, query, k, heap);
            }
        }
    }

    /// Every other point within squared radius `r2` (inclusive), as
    /// `(index, squared distance)` sorted by distance then index.
    pub(crate) fn within(&self, query: usize, r2: f64) -> Vec<(usize, f64)> {
        let q = self.point(query);
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if self.box_sq_dist(node, q) > r2 {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(l);
                    stack.push(r);
                }
                None => {
                    for &i in &self.order[node.start..node.end] {
                        if i != query {
                            let d2 = sq_dist(q, self.point(i));
                            if d2 <= r2 {
                                out.push((i, d2));
                            }
                        }
                    }
                }
            }
        }
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }
}
