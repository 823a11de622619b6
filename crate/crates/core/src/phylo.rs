//! Distance matrices over network nodes, Neighbor-Joining, and Newick I/O.
//!
//! Leaves of a [`PhyloTree`] are the operational units (server and clients);
//! internal nodes are the inferred joins. Trees are unrooted; Newick output
//! picks a canonical place to hang the tree from so that equal trees print
//! equal strings.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::io::{Read, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhyloError {
    #[error("distance matrix invariant violated: {0}")]
    MatrixInvariantViolation(String),
    #[error("index {index} out of range for {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("negative round-trip time {rtt} for {node:?}")]
    NegativeRtt { node: String, rtt: f64 },
    #[error("newick parse error at byte {pos}: {msg}")]
    Newick { pos: usize, msg: String },
    #[error("bad matrix csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for PhyloError {
    fn from(e: csv::Error) -> Self {
        PhyloError::Csv(e.to_string())
    }
}

/// Symmetric, non-negative, zero-diagonal matrix over labeled nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    labels: Vec<String>,
    d: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn new(labels: Vec<String>, d: Vec<Vec<f64>>) -> Result<DistanceMatrix, PhyloError> {
        let bad = |m: String| Err(PhyloError::MatrixInvariantViolation(m));
        let n = labels.len();
        if n < 2 {
            return bad(format!("need at least 2 nodes, got {n}"));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if l.is_empty() || !seen.insert(l.as_str()) {
                return bad(format!("labels must be unique and non-empty ({l:?})"));
            }
        }
        if d.len() != n || d.iter().any(|r| r.len() != n) {
            return bad(format!("expected a {n}x{n} matrix"));
        }
        for i in 0..n {
            if d[i][i] != 0.0 {
                return bad(format!("d[{i}][{i}] = {} is not zero", d[i][i]));
            }
            for j in 0..n {
                let v = d[i][j];
                if !v.is_finite() || v < 0.0 {
                    return bad(format!("d[{i}][{j}] = {v} is not a finite non-negative value"));
                }
                if v != d[j][i] {
                    return bad(format!("d[{i}][{j}] = {v} but d[{j}][{i}] = {}", d[j][i]));
                }
            }
        }
        Ok(DistanceMatrix { labels, d })
    }

    /// Builds a matrix from the upper triangle, listed row by row.
    pub fn from_pairs<S: Into<String>>(
        labels: impl IntoIterator<Item = S>,
        upper: &[f64],
    ) -> Result<DistanceMatrix, PhyloError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let n = labels.len();
        if upper.len() != n * n.saturating_sub(1) / 2 {
            return Err(PhyloError::MatrixInvariantViolation(format!(
                "{} upper-triangle entries for {n} nodes",
                upper.len()
            )));
        }
        let mut d = vec![vec![0.0; n]; n];
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                d[i][j] = upper[k];
                d[j][i] = upper[k];
                k += 1;
            }
        }
        DistanceMatrix::new(labels, d)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i][j]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Sum of the distances from node `i` to every other node.
    pub fn net_divergence(&self, i: usize) -> Result<f64, PhyloError> {
        let row = self.d.get(i).ok_or(PhyloError::IndexOutOfRange {
            index: i,
            n: self.len(),
        })?;
        Ok(row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).sum())
    }

    pub fn scaled(&self, s: f64) -> Result<DistanceMatrix, PhyloError> {
        let d = self.d.iter().map(|r| r.iter().map(|v| v * s).collect()).collect();
        DistanceMatrix::new(self.labels.clone(), d)
    }

    /// Same distances with the nodes reordered: entry `k` of `order` names the
    /// old index that becomes index `k`.
    pub fn permuted(&self, order: &[usize]) -> Result<DistanceMatrix, PhyloError> {
        let labels = order.iter().map(|&i| self.labels[i].clone()).collect();
        let d = order
            .iter()
            .map(|&i| order.iter().map(|&j| self.d[i][j]).collect())
            .collect();
        DistanceMatrix::new(labels, d)
    }

    /// Reads a CSV matrix. The header lists the labels, optionally after an
    /// empty corner cell; data rows may start with their label.
    pub fn read_csv<R: Read>(r: R) -> Result<DistanceMatrix, PhyloError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(r);
        let mut records = rdr.records();
        let header = records
            .next()
            .ok_or_else(|| PhyloError::Csv("empty file".into()))??;
        let mut labels: Vec<String> = header.iter().map(str::to_string).collect();
        if labels.first().is_some_and(String::is_empty) {
            labels.remove(0);
        }
        let n = labels.len();
        let mut d = Vec::with_capacity(n);
        for rec in records {
            let rec = rec?;
            if rec.iter().all(str::is_empty) {
                continue;
            }
            let values: Vec<&str> = match rec.len() {
                l if l == n => rec.iter().collect(),
                l if l == n + 1 => {
                    let row_label = rec.get(0).unwrap_or_default();
                    let expected = &labels[d.len().min(n.saturating_sub(1))];
                    if row_label != expected {
                        return Err(PhyloError::Csv(format!(
                            "row label {row_label:?} does not match column {expected:?}"
                        )));
                    }
                    rec.iter().skip(1).collect()
                }
                l => return Err(PhyloError::Csv(format!("row with {l} fields, expected {n}"))),
            };
            let row = values
                .iter()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| PhyloError::Csv(format!("{v:?} is not a number")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            d.push(row);
        }
        DistanceMatrix::new(labels, d)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), PhyloError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![String::new()];
        header.extend(self.labels.iter().cloned());
        out.write_record(&header)?;
        for (label, row) in self.labels.iter().zip(&self.d) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| PhyloError::Csv(e.to_string()))?;
        Ok(())
    }
}

/// Label used for the hub when building distances over a star.
pub const SERVER_LABEL: &str = "server";

/// Distances over a star: server to client is the client's round trip, and
/// client to client is the sum of both spokes.
pub fn star_distances(rtt: &BTreeMap<String, f64>) -> Result<DistanceMatrix, PhyloError> {
    star_distances_with_hub(SERVER_LABEL, rtt)
}

pub fn star_distances_with_hub(hub: &str, rtt: &BTreeMap<String, f64>) -> Result<DistanceMatrix, PhyloError> {
    if rtt.is_empty() {
        return Err(PhyloError::MatrixInvariantViolation(
            "need at least one client".into(),
        ));
    }
    for (node, &v) in rtt {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(PhyloError::NegativeRtt {
                node: node.clone(),
                rtt: v,
            });
        }
    }
    let mut labels = vec![hub.to_string()];
    labels.extend(rtt.keys().cloned());
    let spokes: Vec<f64> = std::iter::once(0.0).chain(rtt.values().copied()).collect();
    let n = labels.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[i][j] = spokes[i] + spokes[j];
            }
        }
    }
    DistanceMatrix::new(labels, d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

/// Unrooted tree. Nodes with a label are leaves; unlabeled nodes are
/// internal joins.
#[derive(Debug, Clone, PartialEq)]
pub struct PhyloTree {
    labels: Vec<Option<String>>,
    edges: Vec<Edge>,
}

impl PhyloTree {
    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, node: usize) -> Option<&str> {
        self.labels[node].as_deref()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn leaf_labels(&self) -> Vec<&str> {
        self.labels.iter().flatten().map(String::as_str).collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    pub fn internal_count(&self) -> usize {
        self.labels.len() - self.leaf_count()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.a == node || e.b == node).count()
    }

    fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.labels.len()];
        for e in &self.edges {
            adj[e.a].push((e.b, e.length));
            adj[e.b].push((e.a, e.length));
        }
        adj
    }

    /// Leaf labels on the far side of each edge, keyed canonically by the
    /// side that does not hold the smallest label, mapped to edge length.
    pub fn splits(&self) -> BTreeMap<Vec<String>, f64> {
        let adj = self.adjacency();
        let all: BTreeSet<&str> = self.leaf_labels().into_iter().collect();
        let smallest = all.iter().next().copied().unwrap_or_default();
        let mut out = BTreeMap::new();
        for e in &self.edges {
            let side = self.leaves_beyond(&adj, e.b, e.a);
            let side = if side.iter().any(|l| l == smallest) {
                all.iter()
                    .filter(|l| !side.iter().any(|s| s == *l))
                    .map(|l| l.to_string())
                    .collect()
            } else {
                side
            };
            out.insert(side, e.length);
        }
        out
    }

    /// Non-trivial splits only: the tree's topology without lengths.
    pub fn topology(&self) -> BTreeSet<Vec<String>> {
        let n = self.leaf_count();
        self.splits()
            .into_keys()
            .filter(|s| s.len() >= 2 && s.len() + 2 <= n)
            .collect()
    }

    fn leaves_beyond(&self, adj: &[Vec<(usize, f64)>], start: usize, from: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut stack = vec![(start, from)];
        while let Some((v, parent)) = stack.pop() {
            if let Some(l) = &self.labels[v] {
                out.push(l.clone());
            }
            for &(w, _) in &adj[v] {
                if w != parent {
                    stack.push((w, v));
                }
            }
        }
        out.sort();
        out
    }

    /// Canonical Newick with branch lengths.
    pub fn to_newick(&self) -> String {
        self.newick(true)
    }

    /// Canonical Newick without branch lengths.
    pub fn to_newick_topology(&self) -> String {
        self.newick(false)
    }

    // The tree hangs from the neighbor of the greatest leaf label; children
    // are ordered by the smallest leaf label they contain. A two-leaf tree
    // is written with the whole edge on the smaller label.
    fn newick(&self, lengths: bool) -> String {
        let leaves: Vec<(usize, &String)> = self
            .labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.as_ref().map(|l| (i, l)))
            .collect();
        let mut out = String::new();
        let len = |x: f64| if lengths { format!(":{}", format_length(x)) } else { String::new() };
        match leaves.len() {
            0 => out.push(';'),
            1 => {
                let _ = write!(out, "{};", quote_label(leaves[0].1));
            }
            2 if self.edges.len() == 1 => {
                let (mut a, mut b) = (leaves[0].1, leaves[1].1);
                if b < a {
                    std::mem::swap(&mut a, &mut b);
                }
                let l = self.edges[0].length;
                let _ = write!(out, "({}{},{}{});", quote_label(a), len(l), quote_label(b), len(0.0));
            }
            _ => {
                let adj = self.adjacency();
                let &(last, _) = leaves.iter().max_by(|x, y| x.1.cmp(y.1)).expect("non-empty");
                let root = adj[last].first().map(|&(w, _)| w).unwrap_or(last);
                let mut parts = self.children_of(&adj, root, usize::MAX, lengths);
                parts.sort();
                out.push('(');
                out.push_str(&parts.into_iter().map(|(_, s)| s).collect::<Vec<_>>().join(","));
                out.push_str(");");
            }
        }
        out
    }

    /// Serialized children of `v` (excluding `parent`), each tagged with its
    /// smallest leaf label for ordering.
    fn children_of(
        &self,
        adj: &[Vec<(usize, f64)>],
        v: usize,
        parent: usize,
        lengths: bool,
    ) -> Vec<(String, String)> {
        adj[v]
            .iter()
            .filter(|&&(w, _)| w != parent)
            .map(|&(w, l)| {
                let (key, mut text) = self.subtree(adj, w, v, lengths);
                if lengths {
                    text.push(':');
                    text.push_str(&format_length(l));
                }
                (key, text)
            })
            .collect()
    }

    fn subtree(&self, adj: &[Vec<(usize, f64)>], v: usize, parent: usize, lengths: bool) -> (String, String) {
        let mut kids = self.children_of(adj, v, parent, lengths);
        if kids.is_empty() {
            let label = self.labels[v].clone().unwrap_or_default();
            return (label.clone(), quote_label(&label));
        }
        kids.sort();
        let key = kids[0].0.clone();
        let body = kids.into_iter().map(|(_, s)| s).collect::<Vec<_>>().join(",");
        (key, format!("({body})"))
    }

    /// Parses Newick text into an unrooted tree. Internal node names are
    /// dropped and a two-child root is dissolved into a single edge.
    pub fn from_newick(text: &str) -> Result<PhyloTree, PhyloError> {
        let mut p = NewickParser {
            s: text.as_bytes(),
            pos: 0,
            labels: Vec::new(),
            edges: Vec::new(),
        };
        p.skip_ws();
        let root = p.subtree()?;
        p.skip_ws();
        if p.peek() != Some(b';') {
            return Err(p.err("expected ';'"));
        }
        p.pos += 1;
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(p.err("trailing input after ';'"));
        }
        let mut tree = PhyloTree {
            labels: p.labels,
            edges: p.edges,
        };
        if tree.labels[root].is_none() && tree.degree(root) == 2 {
            let (i, j) = {
                let mut it = tree
                    .edges
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.a == root || e.b == root)
                    .map(|(k, _)| k);
                (it.next().unwrap(), it.next().unwrap())
            };
            let other = |e: &Edge| if e.a == root { e.b } else { e.a };
            let merged = Edge {
                a: other(&tree.edges[i]),
                b: other(&tree.edges[j]),
                length: tree.edges[i].length + tree.edges[j].length,
            };
            tree.edges.remove(j.max(i));
            tree.edges.remove(j.min(i));
            tree.edges.push(merged);
            tree = tree.without_node(root);
        }
        Ok(tree)
    }

    fn without_node(self, gone: usize) -> PhyloTree {
        let remap = |v: usize| if v > gone { v - 1 } else { v };
        let mut labels = self.labels;
        labels.remove(gone);
        let edges = self
            .edges
            .into_iter()
            .map(|e| Edge {
                a: remap(e.a),
                b: remap(e.b),
                length: e.length,
            })
            .collect();
        PhyloTree { labels, edges }
    }

    /// Builds a tree directly from parts; used by generators and tests.
    pub fn from_parts(labels: Vec<Option<String>>, edges: Vec<Edge>) -> PhyloTree {
        PhyloTree { labels, edges }
    }

    /// Sum of edge lengths along the path between two nodes.
    pub fn path_length(&self, from: usize, to: usize) -> Option<f64> {
        let adj = self.adjacency();
        let mut stack = vec![(from, usize::MAX, 0.0)];
        while let Some((v, parent, acc)) = stack.pop() {
            if v == to {
                return Some(acc);
            }
            for &(w, l) in &adj[v] {
                if w != parent {
                    stack.push((w, v, acc + l));
                }
            }
        }
        None
    }
}

fn needs_quotes(label: &str) -> bool {
    label.is_empty()
        || label
            .chars()
            .any(|c| c.is_whitespace() || "()[]':;,".contains(c))
}

fn quote_label(label: &str) -> String {
    if needs_quotes(label) {
        format!("'{}'", label.replace('\'', "''"))
    } else {
        label.to_string()
    }
}

/// Six significant digits, no trailing zeros.
pub fn format_length(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_infinite() { x.to_string() } else { "0".into() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

struct NewickParser<'a> {
    s: &'a [u8],
    pos: usize,
    labels: Vec<Option<String>>,
    edges: Vec<Edge>,
}

impl NewickParser<'_> {
    fn err(&self, msg: &str) -> PhyloError {
        PhyloError::Newick {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn subtree(&mut self) -> Result<usize, PhyloError> {
        self.skip_ws();
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let node = self.labels.len();
            self.labels.push(None);
            loop {
                let child = self.subtree()?;
                let length = self.length()?;
                self.edges.push(Edge {
                    a: node,
                    b: child,
                    length,
                });
                self.skip_ws();
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.err("expected ',' or ')'")),
                }
            }
            // Internal node names carry no meaning here.
            self.label()?;
            Ok(node)
        } else {
            let label = self.label()?.ok_or_else(|| self.err("expected a leaf label"))?;
            let node = self.labels.len();
            self.labels.push(Some(label));
            Ok(node)
        }
    }

    fn label(&mut self) -> Result<Option<String>, PhyloError> {
        self.skip_ws();
        if self.peek() == Some(b'\'') {
            self.pos += 1;
            let mut out = Vec::new();
            loop {
                match self.peek() {
                    None => return Err(self.err("unterminated quoted label")),
                    Some(b'\'') if self.s.get(self.pos + 1) == Some(&b'\'') => {
                        out.push(b'\'');
                        self.pos += 2;
                    }
                    Some(b'\'') => {
                        self.pos += 1;
                        break;
                    }
                    Some(c) => {
                        out.push(c);
                        self.pos += 1;
                    }
                }
            }
            return String::from_utf8(out)
                .map(Some)
                .map_err(|_| self.err("label is not UTF-8"));
        }
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| !c.is_ascii_whitespace() && !b"()[]':;,".contains(&c))
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Ok(None);
        }
        std::str::from_utf8(&self.s[start..self.pos])
            .map(|s| Some(s.to_string()))
            .map_err(|_| self.err("label is not UTF-8"))
    }

    fn length(&mut self) -> Result<f64, PhyloError> {
        self.skip_ws();
        if self.peek() != Some(b':') {
            return Ok(0.0);
        }
        self.pos += 1;
        self.skip_ws();
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_digit() || b"+-.eE".contains(&c))
        {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos])
            .ok()
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| self.err("bad branch length"))
    }
}

/// Neighbor-Joining over `dist`.
///
/// Each step joins the active pair minimizing
/// `d(i,j) − (U_i + U_j)/(n − 2)`; ties go to the lowest index pair, where
/// original nodes precede joined ones in creation order. Negative branch
/// lengths are set to zero and the difference is taken from the sibling.
pub fn nj_build(dist: &DistanceMatrix) -> Result<PhyloTree, PhyloError> {
    let n = dist.len();
    let mut labels: Vec<Option<String>> = dist.labels.iter().cloned().map(Some).collect();
    let mut edges = Vec::with_capacity(2 * n);
    if n == 2 {
        edges.push(Edge {
            a: 0,
            b: 1,
            length: dist.get(0, 1),
        });
        return Ok(PhyloTree { labels, edges });
    }

    let cap = 2 * n;
    let mut d = vec![vec![0.0; cap]; cap];
    for (i, row) in dist.d.iter().enumerate() {
        d[i][..n].copy_from_slice(row);
    }
    let mut active: Vec<usize> = (0..n).collect();

    while active.len() > 3 {
        let r = active.len() as f64;
        let u: Vec<f64> = active
            .iter()
            .map(|&i| active.iter().filter(|&&k| k != i).map(|&k| d[i][k]).sum())
            .collect();

        let mut best = (f64::INFINITY, 0, 1);
        for a in 0..active.len() {
            for b in a + 1..active.len() {
                let m = d[active[a]][active[b]] - (u[a] + u[b]) / (r - 2.0);
                if m < best.0 {
                    best = (m, a, b);
                }
            }
        }
        let (_, a, b) = best;
        let (i, j) = (active[a], active[b]);
        let dij = d[i][j];
        let bi = dij / 2.0 + (u[a] - u[b]) / (2.0 * (r - 2.0));
        let (bi, bj) = clamp_pair(bi, dij - bi);

        let node = labels.len();
        labels.push(None);
        edges.push(Edge { a: node, b: i, length: bi });
        edges.push(Edge { a: node, b: j, length: bj });
        for &k in &active {
            if k != i && k != j {
                let v = (d[i][k] + d[j][k] - dij) / 2.0;
                d[node][k] = v;
                d[k][node] = v;
            }
        }
        active.retain(|&k| k != i && k != j);
        active.push(node);
    }

    let [x, y, z] = [active[0], active[1], active[2]];
    let lx = (d[x][y] + d[x][z] - d[y][z]) / 2.0;
    let ly = (d[x][y] + d[y][z] - d[x][z]) / 2.0;
    let lz = (d[x][z] + d[y][z] - d[x][y]) / 2.0;
    let [lx, ly, lz] = clamp_triple([lx, ly, lz]);
    let center = labels.len();
    labels.push(None);
    for (v, l) in [(x, lx), (y, ly), (z, lz)] {
        edges.push(Edge { a: center, b: v, length: l });
    }
    Ok(PhyloTree { labels, edges })
}

fn clamp_pair(bi: f64, bj: f64) -> (f64, f64) {
    if bi < 0.0 {
        (0.0, (bj + bi).max(0.0))
    } else if bj < 0.0 {
        ((bi + bj).max(0.0), 0.0)
    } else {
        (bi, bj)
    }
}

fn clamp_triple(mut l: [f64; 3]) -> [f64; 3] {
    for k in 0..3 {
        if l[k] < 0.0 {
            let deficit = l[k];
            l[k] = 0.0;
            for (m, v) in l.iter_mut().enumerate() {
                if m != k {
                    *v += deficit;
                }
            }
        }
    }
    l.map(|v| v.max(0.0))
}
