//! Reference implementations shared by the integration tests. Nothing here
//! calls into the code under test except to convert at the boundary.
#![allow(dead_code)]

use std::collections::BTreeMap;

use biokm::phylo::{DistanceMatrix, Edge, PhyloTree};
use biokm::telemetry::RawCounters;
use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;

/// Unrooted tree; nodes `0..leaves` are the tips.
#[derive(Debug, Clone)]
pub struct RefTree {
    pub leaves: usize,
    pub nodes: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

pub fn leaf_label(i: usize) -> String {
    ((b'A' + i as u8) as char).to_string()
}

impl RefTree {
    fn star3() -> RefTree {
        // tips 0,1,2 around internal node 3
        RefTree {
            leaves: 3,
            nodes: 4,
            edges: vec![(0, 3, 1.0), (1, 3, 1.0), (2, 3, 1.0)],
        }
    }

    /// Inserts a new tip on edge `e`. Tip ids stay contiguous by shifting
    /// internal node ids up by one.
    fn insert_tip(&self, e: usize) -> RefTree {
        let shift = |v: usize| if v >= self.leaves { v + 1 } else { v };
        let tip = self.leaves;
        let mid = self.nodes + 1;
        let mut edges: Vec<(usize, usize, f64)> =
            self.edges.iter().map(|&(a, b, l)| (shift(a), shift(b), l)).collect();
        let (a, b, l) = edges.remove(e);
        edges.push((a, mid, l));
        edges.push((mid, b, l));
        edges.push((tip, mid, l));
        RefTree {
            leaves: self.leaves + 1,
            nodes: self.nodes + 2,
            edges,
        }
    }

    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.nodes];
        for (k, &(a, b, _)) in self.edges.iter().enumerate() {
            adj[a].push((b, k));
            adj[b].push((a, k));
        }
        adj
    }

    /// Edge indices on the path between two nodes.
    pub fn path(&self, from: usize, to: usize) -> Vec<usize> {
        let adj = self.adjacency();
        let mut prev = vec![None; self.nodes];
        let mut stack = vec![from];
        let mut seen = vec![false; self.nodes];
        seen[from] = true;
        while let Some(v) = stack.pop() {
            for &(w, k) in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    prev[w] = Some((v, k));
                    stack.push(w);
                }
            }
        }
        let mut out = Vec::new();
        let mut v = to;
        while let Some((p, k)) = prev[v] {
            out.push(k);
            v = p;
        }
        out
    }

    pub fn distances(&self) -> DistanceMatrix {
        let n = self.leaves;
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let s: f64 = self.path(i, j).iter().map(|&k| self.edges[k].2).sum();
                d[i][j] = s;
                d[j][i] = s;
            }
        }
        DistanceMatrix::new((0..n).map(leaf_label).collect(), d).unwrap()
    }

    /// Bipartitions keyed by the side without tip 0, to edge length.
    pub fn splits(&self) -> BTreeMap<Vec<String>, f64> {
        let mut out = BTreeMap::new();
        for (k, &(a, _, l)) in self.edges.iter().enumerate() {
            // a tip reaches `a` through edge k exactly when it sits on b's side
            let side: Vec<usize> = (0..self.leaves).filter(|&t| self.path(t, a).contains(&k)).collect();
            let side: Vec<usize> = if side.contains(&0) {
                (0..self.leaves).filter(|t| !side.contains(t)).collect()
            } else {
                side
            };
            let mut labels: Vec<String> = side.into_iter().map(leaf_label).collect();
            labels.sort();
            out.insert(labels, l);
        }
        out
    }

    pub fn to_phylo(&self) -> PhyloTree {
        let labels = (0..self.nodes)
            .map(|v| (v < self.leaves).then(|| leaf_label(v)))
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|&(a, b, length)| Edge { a, b, length })
            .collect();
        PhyloTree::from_parts(labels, edges)
    }

    pub fn with_lengths(&self, lengths: &[f64]) -> RefTree {
        let mut t = self.clone();
        for (e, &l) in t.edges.iter_mut().zip(lengths) {
            e.2 = l;
        }
        t
    }
}

/// Uniformly grown random binary tree with lengths in `[lo, hi)`.
pub fn random_tree(n: usize, lo: f64, hi: f64, rng: &mut Pcg64) -> RefTree {
    assert!(n >= 3);
    let mut t = RefTree::star3();
    while t.leaves < n {
        let e = rng.random_range(0..t.edges.len());
        t = t.insert_tip(e);
    }
    for e in &mut t.edges {
        e.2 = rng.random_range(lo..hi);
    }
    t
}

pub fn seeded(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}

/// Every unrooted binary topology on `n` tips, each exactly once.
pub fn all_topologies(n: usize) -> Vec<RefTree> {
    assert!(n >= 3);
    let mut level = vec![RefTree::star3()];
    for _ in 3..n {
        level = level
            .iter()
            .flat_map(|t| (0..t.edges.len()).map(move |e| t.insert_tip(e)))
            .collect();
    }
    level
}

/// Least-squares branch lengths of `topology` against `dist`, with the
/// residual sum of squares.
pub fn fit(topology: &RefTree, dist: &DistanceMatrix) -> (Vec<f64>, f64) {
    let n = topology.leaves;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let m = topology.edges.len();
    let mut a = DMatrix::<f64>::zeros(pairs.len(), m);
    let mut y = DVector::<f64>::zeros(pairs.len());
    for (r, &(i, j)) in pairs.iter().enumerate() {
        for k in topology.path(i, j) {
            a[(r, k)] = 1.0;
        }
        y[r] = dist.get(i, j);
    }
    let x = a.clone().svd(true, true).solve(&y, 1e-12).unwrap();
    let resid = (&a * &x - &y).norm_squared();
    (x.iter().copied().collect(), resid)
}

/// Published raw counters, one per scenario column.
pub fn published_counters() -> Vec<RawCounters> {
    let col = |label: &str, ps, bs, pr, br, arr, svc, tot| RawCounters {
        label: label.into(),
        clients: 2,
        packets_sent: ps,
        bytes_sent: bs,
        packets_received: pr,
        bytes_received: br,
        arrival_time_ms: arr,
        service_time_ms: svc,
        total_time_ms: tot,
    };
    vec![
        col("IRCD", 6874, 6426, 6452, 5868, 32484.0, 73328.0, 111687.0),
        col("FTP", 4612, 4304, 4067, 3653, 32656.0, 111922.0, 152297.0),
        col("IRCD & FTP", 7341, 6865, 6832, 6214, 35438.0, 113625.0, 155672.0),
    ]
}
