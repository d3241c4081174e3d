//! Graph recovery and clustering metrics: top-k thresholding, edge AUPR,
//! categorical assortativity, resolution-parametrized Louvain community
//! detection and adjusted mutual information.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simple undirected graph as sorted neighbor lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Adjacency {
            neighbors: vec![Vec::new(); n],
        }
    }

    /// Builds from an edge list; self-loops are rejected, duplicates merged.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut adj = Self::empty(n);
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::IndexOutOfRange(format!(
                    "edge ({i},{j}) in a graph of {n} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidParameter(format!("self-loop at node {i}")));
            }
            adj.neighbors[i].push(j);
            adj.neighbors[j].push(i);
        }
        for list in &mut adj.neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(adj)
    }

    /// Edge wherever an off-diagonal entry is nonzero in either triangle.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dims("adjacency matrix must be square"));
        }
        let n = m.nrows();
        let edges = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| m[(i, j)] != 0.0 || m[(j, i)] != 0.0);
        Self::from_edges(n, edges)
    }

    pub fn n_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.n_nodes();
        let mut m = DMatrix::zeros(n, n);
        for (i, j) in self.edges() {
            m[(i, j)] = 1.0;
            m[(j, i)] = 1.0;
        }
        m
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n_nodes();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &self.neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// `|m|` with the diagonal zeroed, symmetrized by taking the larger of the two
/// triangle entries.
pub fn edge_scores(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            m[(i, j)].abs().max(m[(j, i)].abs())
        }
    })
}

/// Keeps edge `(i, j)` if `j` is among the `k` highest-scoring partners of
/// `i`, or vice versa. Ties go to the lower vertex index; zero scores are
/// never kept.
pub fn threshold_topk(scores: &DMatrix<f64>, k: usize) -> Result<Adjacency> {
    if !scores.is_square() {
        return Err(Error::dims("score matrix must be square"));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let n = scores.nrows();
    let mut edges = Vec::new();
    for i in 0..n {
        let mut partners: Vec<usize> = (0..n).filter(|&j| j != i && scores[(i, j)] > 0.0).collect();
        partners.sort_by(|&a, &b| scores[(i, b)].total_cmp(&scores[(i, a)]).then(a.cmp(&b)));
        edges.extend(partners.into_iter().take(k).map(|j| (i, j)));
    }
    Adjacency::from_edges(n, edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Precision–recall over all unordered pairs ranked by descending score.
/// Tied scores form one threshold, and the area is
/// `Σ (R_k − R_{k−1}) · P_k`, so constant scores give the prevalence.
pub fn pr_curve_aupr(scores: &DMatrix<f64>, truth: &Adjacency) -> Result<(Vec<PrPoint>, f64)> {
    let n = truth.n_nodes();
    if scores.shape() != (n, n) {
        return Err(Error::dims("scores and truth graph differ in size"));
    }
    let mut pairs: Vec<(f64, bool)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| (scores[(i, j)], truth.has_edge(i, j)))
        .collect();
    let positives = pairs.iter().filter(|p| p.1).count();
    if positives == 0 || positives == pairs.len() {
        return Err(Error::Degenerate(
            "truth graph needs at least one edge and one non-edge".into(),
        ));
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut last_recall = 0.0;
    let mut idx = 0;
    while idx < pairs.len() {
        let threshold = pairs[idx].0;
        while idx < pairs.len() && pairs[idx].0 == threshold {
            if pairs[idx].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            idx += 1;
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - last_recall) * precision;
        last_recall = recall;
        curve.push(PrPoint {
            threshold,
            recall,
            precision,
        });
    }
    Ok((curve, area))
}

/// Newman's categorical assortativity `(tr e − Σ aᵢbᵢ) / (1 − Σ aᵢbᵢ)` from the
/// symmetric label-mixing matrix `e` over edge ends.
pub fn assortativity(adj: &Adjacency, labels: &[usize]) -> Result<f64> {
    if labels.len() != adj.n_nodes() {
        return Err(Error::dims("one label per vertex required"));
    }
    if adj.n_edges() == 0 {
        return Err(Error::Degenerate(
            "assortativity needs at least one edge".into(),
        ));
    }
    let index: BTreeMap<usize, usize> = {
        let mut uniq: Vec<usize> = labels.to_vec();
        uniq.sort_unstable();
        uniq.dedup();
        uniq.into_iter().enumerate().map(|(k, l)| (l, k)).collect()
    };
    let c = index.len();
    let mut e = DMatrix::<f64>::zeros(c, c);
    for (i, j) in adj.edges() {
        let (x, y) = (index[&labels[i]], index[&labels[j]]);
        e[(x, y)] += 1.0;
        e[(y, x)] += 1.0;
    }
    e /= e.sum();
    let ab: f64 = (0..c).map(|x| e.row(x).sum() * e.column(x).sum()).sum();
    if (1.0 - ab).abs() < 1e-15 {
        return Err(Error::Degenerate("all edge ends share one label".into()));
    }
    Ok((e.trace() - ab) / (1.0 - ab))
}

/// Resolution-parametrized modularity `(1/2m) Σ [A_ij − γ k_i k_j / 2m] δ(c_i, c_j)`.
pub fn modularity(adj: &Adjacency, partition: &[usize], resolution: f64) -> f64 {
    let two_m = 2.0 * adj.n_edges() as f64;
    if two_m == 0.0 {
        return 0.0;
    }
    let mut internal: BTreeMap<usize, f64> = BTreeMap::new();
    let mut degree_sum: BTreeMap<usize, f64> = BTreeMap::new();
    for i in 0..adj.n_nodes() {
        *degree_sum.entry(partition[i]).or_default() += adj.degree(i) as f64;
        for &j in adj.neighbors(i) {
            if partition[i] == partition[j] {
                *internal.entry(partition[i]).or_default() += 1.0;
            }
        }
    }
    degree_sum
        .iter()
        .map(|(c, &tot)| {
            internal.get(c).copied().unwrap_or(0.0) / two_m - resolution * (tot / two_m).powi(2)
        })
        .sum()
}

/// Weighted graph at one Louvain level; self-loop weight stored per node.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
    strength: Vec<f64>,
}

impl Level {
    fn from_graph(g: &Adjacency) -> Self {
        let adj: Vec<Vec<(usize, f64)>> = (0..g.n_nodes())
            .map(|i| g.neighbors(i).iter().map(|&j| (j, 1.0)).collect())
            .collect();
        let strength = adj.iter().map(|l| l.iter().map(|e| e.1).sum()).collect();
        Level {
            adj,
            self_loops: vec![0.0; g.n_nodes()],
            strength,
        }
    }

    fn n(&self) -> usize {
        self.adj.len()
    }

    fn quality(&self, comm: &[usize], resolution: f64, two_m: f64) -> f64 {
        let mut internal = vec![0.0; self.n()];
        let mut tot = vec![0.0; self.n()];
        for i in 0..self.n() {
            tot[comm[i]] += self.strength[i];
            internal[comm[i]] += self.self_loops[i];
            for &(j, w) in &self.adj[i] {
                if comm[j] == comm[i] {
                    internal[comm[i]] += w;
                }
            }
        }
        (0..self.n())
            .map(|c| internal[c] / two_m - resolution * (tot[c] / two_m).powi(2))
            .sum()
    }

    /// Local moving phase; returns whether any node changed community.
    fn local_moves(
        &self,
        comm: &mut [usize],
        resolution: f64,
        two_m: f64,
        rng: &mut ChaCha8Rng,
    ) -> bool {
        let n = self.n();
        let mut tot = vec![0.0; n];
        for i in 0..n {
            tot[comm[i]] += self.strength[i];
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut moved_any = false;
        let mut links: BTreeMap<usize, f64> = BTreeMap::new();
        loop {
            let mut moved = false;
            for &i in &order {
                let own = comm[i];
                let k_i = self.strength[i];
                links.clear();
                links.insert(own, 0.0);
                for &(j, w) in &self.adj[i] {
                    *links.entry(comm[j]).or_default() += w;
                }
                tot[own] -= k_i;
                let gain = |c: usize, w: f64| w - resolution * k_i * tot[c] / two_m;
                let stay = gain(own, links[&own]);
                let mut best = (own, stay);
                for (&c, &w) in &links {
                    let g = gain(c, w);
                    if g > best.1 + 1e-12 * (1.0 + best.1.abs()) {
                        best = (c, g);
                    }
                }
                tot[best.0] += k_i;
                if best.0 != own {
                    comm[i] = best.0;
                    moved = true;
                    moved_any = true;
                }
            }
            if !moved {
                break;
            }
        }
        moved_any
    }

    fn aggregate(&self, comm: &[usize]) -> (Level, Vec<usize>) {
        let mut relabel = BTreeMap::new();
        for &c in comm {
            let next = relabel.len();
            relabel.entry(c).or_insert(next);
        }
        let k = relabel.len();
        let map: Vec<usize> = comm.iter().map(|c| relabel[c]).collect();
        let mut weights: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        let mut self_loops = vec![0.0; k];
        let mut strength = vec![0.0; k];
        for i in 0..self.n() {
            let ci = map[i];
            self_loops[ci] += self.self_loops[i];
            strength[ci] += self.strength[i];
            for &(j, w) in &self.adj[i] {
                let cj = map[j];
                if ci == cj {
                    self_loops[ci] += w;
                } else {
                    *weights[ci].entry(cj).or_default() += w;
                }
            }
        }
        let adj = weights
            .into_iter()
            .map(|m| m.into_iter().collect())
            .collect();
        (
            Level {
                adj,
                self_loops,
                strength,
            },
            map,
        )
    }
}

/// Community detection trace: the partition plus modularity after each level.
#[derive(Debug, Clone)]
pub struct Communities {
    pub partition: Vec<usize>,
    pub quality_trace: Vec<f64>,
}

/// Louvain: greedy local moves and aggregation until no node moves.
/// Labels are renumbered in order of first appearance.
pub fn community_detect(adj: &Adjacency, resolution: f64, seed: u64) -> Vec<usize> {
    community_detect_traced(adj, resolution, seed).partition
}

pub fn community_detect_traced(adj: &Adjacency, resolution: f64, seed: u64) -> Communities {
    let n = adj.n_nodes();
    let two_m = 2.0 * adj.n_edges() as f64;
    let mut membership: Vec<usize> = (0..n).collect();
    if two_m == 0.0 {
        return Communities {
            partition: membership,
            quality_trace: vec![0.0],
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = Level::from_graph(adj);
    let mut comm: Vec<usize> = (0..level.n()).collect();
    let mut trace = vec![level.quality(&comm, resolution, two_m)];
    loop {
        let moved = level.local_moves(&mut comm, resolution, two_m, &mut rng);
        trace.push(level.quality(&comm, resolution, two_m));
        if !moved {
            break;
        }
        let (next, map) = level.aggregate(&comm);
        for m in membership.iter_mut() {
            *m = map[*m];
        }
        level = next;
        comm = (0..level.n()).collect();
    }
    for m in membership.iter_mut() {
        *m = comm[*m];
    }
    Communities {
        partition: canonical_labels(&membership),
        quality_trace: trace,
    }
}

/// Renumbers labels by first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut seen = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = seen.len();
            *seen.entry(l).or_insert(next)
        })
        .collect()
}

fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Adjusted mutual information with the hypergeometric expected MI and
/// arithmetic-mean entropy normalization.
pub fn ami(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims(format!(
            "partitions have sizes {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n == 0 {
        return Err(Error::dims("partitions are empty"));
    }
    let a = canonical_labels(a);
    let b = canonical_labels(b);
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    if (ka == 1 && kb == 1) || (ka == n && kb == n) {
        return Ok(1.0);
    }
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b.iter()) {
        table[x][y] += 1;
    }
    let rows: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<usize> = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let nf = n as f64;

    let mut mi = 0.0;
    for (i, r) in table.iter().enumerate() {
        for (j, &nij) in r.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / nf * (nf * nij / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }

    let lf = log_factorials(n);
    let mut emi = 0.0;
    for &ai in &rows {
        for &bj in &cols {
            let lo = (ai + bj).saturating_sub(n).max(1);
            let hi = ai.min(bj);
            for nij in lo..=hi {
                let term = (nij as f64 / nf) * (nf * nij as f64 / (ai as f64 * bj as f64)).ln();
                let log_p = lf[ai] + lf[bj] + lf[n - ai] + lf[n - bj]
                    - lf[n]
                    - lf[nij]
                    - lf[ai - nij]
                    - lf[bj - nij]
                    - lf[n + nij - ai - bj];
                emi += term * log_p.exp();
            }
        }
    }

    let normalizer = 0.5 * (entropy(&rows, nf) + entropy(&cols, nf));
    let mut denominator = normalizer - emi;
    if denominator < 0.0 {
        denominator = denominator.min(-f64::EPSILON);
    } else {
        denominator = denominator.max(f64::EPSILON);
    }
    Ok((mi - emi) / denominator)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub resolution: f64,
    pub n_clusters: usize,
    pub ami: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub best_ami: f64,
    pub best_k: usize,
    pub best_resolution: f64,
    /// One row per `(k, resolution)` in sweep order (k outer).
    pub table: Vec<SweepRow>,
}

/// Thresholds `scores` at each `k`, clusters at each resolution, and keeps
/// the first configuration with the highest AMI against `labels`.
pub fn best_ami_sweep(
    scores: &DMatrix<f64>,
    labels: &[usize],
    k_range: &[usize],
    resolution_range: &[f64],
    seed: u64,
) -> Result<SweepResult> {
    if k_range.is_empty() || resolution_range.is_empty() {
        return Err(Error::InvalidParameter(
            "sweep ranges must be non-empty".into(),
        ));
    }
    if labels.len() != scores.nrows() {
        return Err(Error::dims("one label per vertex required"));
    }
    let mut table = Vec::with_capacity(k_range.len() * resolution_range.len());
    let mut best: Option<SweepRow> = None;
    for &k in k_range {
        let adj = threshold_topk(scores, k)?;
        for &resolution in resolution_range {
            let partition = community_detect(&adj, resolution, seed);
            let n_clusters = partition.iter().max().map_or(0, |m| m + 1);
            let row = SweepRow {
                k,
                resolution,
                n_clusters,
                ami: ami(&partition, labels)?,
            };
            if best.is_none_or(|b| row.ami > b.ami) {
                best = Some(row);
            }
            table.push(row);
        }
    }
    let best = best.expect("non-empty sweep");
    Ok(SweepResult {
        best_ami: best.ami,
        best_k: best.k,
        best_resolution: best.resolution,
        table,
    })
}

/// `count` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Everything computed when evaluating one learned graph.
#[derive(Debug, Clone)]
pub struct GraphEval {
    pub scores: DMatrix<f64>,
    pub adjacency: Adjacency,
    pub labels: Option<Vec<usize>>,
    pub clusterings: Vec<(f64, usize, Vec<usize>)>,
    pub metrics: BTreeMap<String, f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cliques(sizes: &[usize]) -> Adjacency {
        let mut edges = Vec::new();
        let mut base = 0;
        for &s in sizes {
            for i in 0..s {
                for j in (i + 1)..s {
                    edges.push((base + i, base + j));
                }
            }
            base += s;
        }
        Adjacency::from_edges(base, edges).unwrap()
    }

    #[test]
    fn topk_dominant_entries() {
        let mut s = DMatrix::from_element(4, 4, 0.1);
        for (i, j) in [(0, 1), (1, 0), (2, 3), (3, 2)] {
            s[(i, j)] = 5.0;
        }
        let adj = threshold_topk(&s, 1).unwrap();
        assert_eq!(adj.edges().collect::<Vec<_>>(), vec![(0, 1), (2, 3)]);
        let full = threshold_topk(&s, 3).unwrap();
        assert_eq!(full.n_edges(), 6);
    }

    #[test]
    fn topk_skips_zero_scores() {
        let mut s = DMatrix::zeros(3, 3);
        s[(0, 1)] = 1.0;
        s[(1, 0)] = 1.0;
        assert_eq!(threshold_topk(&s, 5).unwrap().n_edges(), 1);
    }

    #[test]
    fn aupr_perfect_and_constant() {
        let truth = Adjacency::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        let perfect = truth.to_matrix();
        assert!((pr_curve_aupr(&perfect, &truth).unwrap().1 - 1.0).abs() < 1e-15);
        let flat = DMatrix::from_element(4, 4, 0.3);
        assert!((pr_curve_aupr(&flat, &truth).unwrap().1 - 2.0 / 6.0).abs() < 1e-15);
        assert!(pr_curve_aupr(&flat, &Adjacency::empty(4)).is_err());
    }

    #[test]
    fn assortativity_extremes() {
        let adj = cliques(&[3, 3]);
        assert!((assortativity(&adj, &[0, 0, 0, 1, 1, 1]).unwrap() - 1.0).abs() < 1e-12);
        let bip = Adjacency::from_edges(4, [(0, 2), (0, 3), (1, 2), (1, 3)]).unwrap();
        assert!((assortativity(&bip, &[0, 0, 1, 1]).unwrap() + 1.0).abs() < 1e-12);
        assert!(assortativity(&Adjacency::empty(3), &[0, 1, 0]).is_err());
    }

    #[test]
    fn louvain_cliques_and_singletons() {
        let adj = cliques(&[4, 5]);
        let p = community_detect(&adj, 1.0, 3);
        assert_eq!(p, vec![0, 0, 0, 0, 1, 1, 1, 1, 1]);
        assert_eq!(community_detect(&Adjacency::empty(1), 1.0, 0), vec![0]);
        let complete = cliques(&[6]);
        assert!(community_detect(&complete, 1.0, 9).iter().all(|&c| c == 0));
    }

    #[test]
    fn ami_basic_properties() {
        let a = [0, 0, 1, 1, 2, 2, 2];
        let b = [5, 5, 3, 3, 9, 9, 9];
        assert!((ami(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((ami(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let one = [0usize; 10];
        let singles: Vec<usize> = (0..10).collect();
        assert!(ami(&one, &singles).unwrap().abs() < 1e-12);
        assert!(ami(&a, &one[..3]).is_err());
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(0.02, 2.0, 100);
        assert_eq!(v.len(), 100);
        assert!((v[0] - 0.02).abs() < 1e-15 && (v[99] - 2.0).abs() < 1e-12);
    }
}
