//! Bottleneck distance between bar codes and stability audits.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::field::SampledField;
use crate::numeric::ext_f64;
use crate::persistence::{barcode, build_filtration, Bar, BarCode};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BottleneckError {
    #[error("fields live on different grids")]
    TopologyMismatch,
}

/// One matched pair; `None` on a side means the diagonal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub left: Option<usize>,
    pub right: Option<usize>,
    #[serde(with = "ext_f64")]
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// Indices refer to bar ids of the two codes.
    pub pairs: Vec<MatchPair>,
    #[serde(with = "ext_f64")]
    pub cost: f64,
}

fn linf(x: &Bar, y: &Bar) -> f64 {
    let d = if x.death.is_infinite() && y.death.is_infinite() { 0.0 } else { (x.death - y.death).abs() };
    (x.birth - y.birth).abs().max(d)
}

fn half_length(b: &Bar) -> f64 {
    (b.death - b.birth) / 2.0
}

/// Hopcroft-Karp on a bipartite graph given by adjacency lists.
struct HopcroftKarp<'a> {
    adj: &'a [Vec<usize>],
    match_l: Vec<usize>,
    match_r: Vec<usize>,
    dist: Vec<usize>,
}

const NIL: usize = usize::MAX;

impl<'a> HopcroftKarp<'a> {
    fn new(adj: &'a [Vec<usize>], n_right: usize) -> Self {
        HopcroftKarp { adj, match_l: vec![NIL; adj.len()], match_r: vec![NIL; n_right], dist: vec![0; adj.len()] }
    }

    fn bfs(&mut self) -> bool {
        let mut q = VecDeque::new();
        let mut found = false;
        for u in 0..self.adj.len() {
            if self.match_l[u] == NIL {
                self.dist[u] = 0;
                q.push_back(u);
            } else {
                self.dist[u] = NIL;
            }
        }
        while let Some(u) = q.pop_front() {
            for &v in &self.adj[u] {
                let w = self.match_r[v];
                if w == NIL {
                    found = true;
                } else if self.dist[w] == NIL {
                    self.dist[w] = self.dist[u] + 1;
                    q.push_back(w);
                }
            }
        }
        found
    }

    fn dfs(&mut self, u: usize) -> bool {
        for k in 0..self.adj[u].len() {
            let v = self.adj[u][k];
            let w = self.match_r[v];
            if w == NIL || (self.dist[w] == self.dist[u] + 1 && self.dfs(w)) {
                self.match_l[u] = v;
                self.match_r[v] = u;
                return true;
            }
        }
        self.dist[u] = NIL;
        false
    }

    fn run(mut self) -> (usize, Vec<usize>) {
        let mut size = 0;
        while self.bfs() {
            for u in 0..self.adj.len() {
                if self.match_l[u] == NIL && self.dfs(u) {
                    size += 1;
                }
            }
        }
        (size, self.match_l)
    }
}

/// Perfect matching of finite bars at threshold delta, if one exists.
///
/// Left side: bars of `a` then one diagonal slot per bar of `b`.
/// Right side: bars of `b` then one diagonal slot per bar of `a`.
fn feasible(a: &[Bar], b: &[Bar], delta: f64) -> Option<Vec<usize>> {
    let (n, m) = (a.len(), b.len());
    let mut adj = vec![Vec::new(); n + m];
    for i in 0..n {
        for j in 0..m {
            if linf(&a[i], &b[j]) <= delta {
                adj[i].push(j);
            }
        }
        if half_length(&a[i]) <= delta {
            adj[i].push(m + i);
        }
    }
    for j in 0..m {
        if half_length(&b[j]) <= delta {
            adj[n + j].push(j);
        }
        adj[n + j].extend(m..m + n);
    }
    let (size, ml) = HopcroftKarp::new(&adj, n + m).run();
    (size == n + m).then_some(ml)
}

/// Bottleneck distance between the degree-p parts of two codes.
pub fn bottleneck_distance(b1: &BarCode, b2: &BarCode, p: usize) -> (f64, Matching) {
    let (fin1, inf1): (Vec<(usize, Bar)>, Vec<(usize, Bar)>) =
        b1.degree(p).map(|(i, b)| (i, *b)).partition(|(_, b)| b.is_finite());
    let (fin2, inf2): (Vec<(usize, Bar)>, Vec<(usize, Bar)>) =
        b2.degree(p).map(|(i, b)| (i, *b)).partition(|(_, b)| b.is_finite());
    if inf1.len() != inf2.len() {
        return (f64::INFINITY, Matching { pairs: vec![], cost: f64::INFINITY });
    }
    let mut pairs = Vec::new();
    // Essential bars: optimal assignment on a line is the sorted one.
    let mut s1 = inf1.clone();
    let mut s2 = inf2.clone();
    s1.sort_by(|x, y| x.1.birth.total_cmp(&y.1.birth));
    s2.sort_by(|x, y| x.1.birth.total_cmp(&y.1.birth));
    let mut cost: f64 = 0.0;
    for (x, y) in s1.iter().zip(&s2) {
        let c = (x.1.birth - y.1.birth).abs();
        cost = cost.max(c);
        pairs.push(MatchPair { left: Some(x.0), right: Some(y.0), cost: c });
    }

    let a: Vec<Bar> = fin1.iter().map(|x| x.1).collect();
    let b: Vec<Bar> = fin2.iter().map(|x| x.1).collect();
    let mut cands: Vec<f64> = vec![0.0];
    for x in &a {
        cands.push(half_length(x));
        for y in &b {
            cands.push(linf(x, y));
        }
    }
    cands.extend(b.iter().map(half_length));
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    let (mut lo, mut hi) = (0usize, cands.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(&a, &b, cands[mid]).is_some() {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let delta = cands[lo];
    let ml = feasible(&a, &b, delta).expect("largest candidate is always feasible");
    let m = b.len();
    for (i, &v) in ml.iter().enumerate().take(a.len()) {
        if v < m {
            pairs.push(MatchPair { left: Some(fin1[i].0), right: Some(fin2[v].0), cost: linf(&a[i], &b[v]) });
        } else {
            pairs.push(MatchPair { left: Some(fin1[i].0), right: None, cost: half_length(&a[i]) });
        }
    }
    for (j, &v) in ml.iter().enumerate().skip(a.len()) {
        if v < m {
            let jb = j - a.len();
            debug_assert_eq!(jb, v);
            pairs.push(MatchPair { left: None, right: Some(fin2[v].0), cost: half_length(&b[v]) });
        }
    }
    let total = cost.max(delta);
    (total, Matching { pairs, cost: total })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub sup_diff: f64,
    /// Bottleneck distance per degree 0..=d.
    #[serde(with = "vec_ext")]
    pub distances: Vec<f64>,
    /// Matching tolerance: a few ulps of the largest endpoint.
    pub tolerance: f64,
    pub pass: bool,
}

mod vec_ext {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct W(#[serde(with = "crate::numeric::ext_f64")] f64);

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|&x| W(x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<W>::deserialize(d)?.into_iter().map(|w| w.0).collect())
    }
}

/// Checks d_bot(B(f), B(g)) ≤ ‖f − g‖_∞ in every degree.
pub fn stability_audit(f: &SampledField, g: &SampledField) -> Result<StabilityReport, BottleneckError> {
    let sup_diff = f.sup_distance(g).ok_or(BottleneckError::TopologyMismatch)?;
    let bf = barcode(&build_filtration(f));
    let bg = barcode(&build_filtration(g));
    let scale = f.values.iter().chain(&g.values).fold(1.0f64, |m, v| m.max(v.abs()));
    let tolerance = 4.0 * f64::EPSILON * scale;
    let distances: Vec<f64> = (0..=f.topology.dim()).map(|p| bottleneck_distance(&bf, &bg, p).0).collect();
    let pass = distances.iter().all(|&d| d <= sup_diff + tolerance);
    Ok(StabilityReport { sup_diff, distances, tolerance, pass })
}
