//! Undirected communication graphs and their matrix views.
//!
//! Nodes are stored 0-based internally. The edge-list text format and the
//! `Display` impl use 1-based labels.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Redraw budget for disconnected Erdős–Rényi samples.
pub const ER_MAX_ATTEMPTS: usize = 1000;

/// One endpoint's view of an incident edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incidence {
    /// Index into the ordered edge list.
    pub edge: usize,
    /// The opposite endpoint.
    pub other: usize,
    /// True when this node is the lower-index endpoint, i.e. the `+1`
    /// entry of the edge's incidence row.
    pub lower: bool,
}

/// Undirected connected graph with an ordered edge list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    k: usize,
    edges: Vec<(usize, usize)>,
    incident: Vec<Vec<Incidence>>,
}

impl Graph {
    /// Builds a graph from 0-based edges. Pairs are oriented so that the
    /// first endpoint is the smaller label; order of the list is kept.
    pub fn new(k: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut seen = HashSet::new();
        let mut list = Vec::new();
        for (a, b) in edges {
            if a >= k || b >= k {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) out of range for K={k}",
                    a + 1,
                    b + 1
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {}", a + 1)));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    e.0 + 1,
                    e.1 + 1
                )));
            }
            list.push(e);
        }
        let g = Self::from_validated(k, list);
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(g)
    }

    /// Same as [`Graph::new`] with 1-based labels.
    pub fn from_one_based(k: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if edges.iter().any(|&(a, b)| a == 0 || b == 0) {
            return Err(Error::InvalidGraph("labels are 1-based".into()));
        }
        Self::new(k, edges.iter().map(|&(a, b)| (a - 1, b - 1)))
    }

    fn from_validated(k: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut incident = vec![Vec::new(); k];
        for (l, &(a, b)) in edges.iter().enumerate() {
            incident[a].push(Incidence { edge: l, other: b, lower: true });
            incident[b].push(Incidence { edge: l, other: a, lower: false });
        }
        Self { k, edges, incident }
    }

    /// Complete graph on `k` nodes, edges in lexicographic order.
    pub fn complete(k: usize) -> Result<Self> {
        let edges = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j)));
        Self::new(k, edges)
    }

    /// Path 1 - 2 - ... - k.
    pub fn path(k: usize) -> Result<Self> {
        Self::new(k, (1..k).map(|i| (i - 1, i)))
    }

    /// Star centered at node 1.
    pub fn star(k: usize) -> Result<Self> {
        Self::new(k, (1..k).map(|i| (0, i)))
    }

    pub fn node_count(&self) -> usize {
        self.k
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Ordered 0-based edge list; row `l` of the incidence matrix is edge `l`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Edges incident to `node`, in ascending edge-id order.
    pub fn incident(&self, node: usize) -> &[Incidence] {
        &self.incident[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.incident[node].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.incident.iter().map(Vec::len).collect()
    }

    /// Neighbors of `node` in ascending label order.
    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.incident[node].iter().map(|e| e.other).collect();
        out.sort_unstable();
        out
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a < self.k && self.incident[a].iter().any(|e| e.other == b)
    }

    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.k
    }

    pub fn is_connected(&self) -> bool {
        self.bfs_order(0).len() == self.k
    }

    fn bfs_order(&self, root: usize) -> Vec<(usize, Option<usize>)> {
        let mut visited = vec![false; self.k];
        let mut order = Vec::with_capacity(self.k);
        let mut queue = VecDeque::new();
        visited[root] = true;
        queue.push_back((root, None));
        while let Some((u, parent)) = queue.pop_front() {
            order.push((u, parent));
            for v in self.neighbors(u) {
                if !visited[v] {
                    visited[v] = true;
                    queue.push_back((v, Some(u)));
                }
            }
        }
        order
    }

    /// Breadth-first spanning tree rooted at node 1, neighbors visited in
    /// ascending label order. Edges are returned in lexicographic order.
    pub fn spanning_tree(&self) -> Result<Graph> {
        let order = self.bfs_order(0);
        if order.len() != self.k {
            return Err(Error::Disconnected);
        }
        let mut edges: Vec<(usize, usize)> = order
            .into_iter()
            .filter_map(|(v, p)| p.map(|p| (p.min(v), p.max(v))))
            .collect();
        edges.sort_unstable();
        Ok(Self::from_validated(self.k, edges))
    }

    /// BFS parent of every node in the spanning tree (root has none).
    pub fn bfs_parents(&self) -> Vec<Option<usize>> {
        let mut parents = vec![None; self.k];
        for (v, p) in self.bfs_order(0) {
            parents[v] = p;
        }
        parents
    }

    pub fn incidence(&self) -> IncidenceView {
        IncidenceView::new(self)
    }

    /// Parses the edge-list format: one `i j` pair per line, 1-based,
    /// `#` starts a comment. A `# nodes: K` comment fixes the node count,
    /// otherwise it is the largest label.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut declared = None;
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("nodes:") {
                    declared = Some(v.trim().parse::<usize>().map_err(|e| {
                        Error::Parse(format!("line {}: bad node count: {e}", lineno + 1))
                    })?);
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut next = || -> Result<usize> {
                it.next()
                    .ok_or_else(|| Error::Parse(format!("line {}: expected two labels", lineno + 1)))?
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            let (a, b) = (next()?, next()?);
            if it.next().is_some() {
                return Err(Error::Parse(format!("line {}: trailing tokens", lineno + 1)));
            }
            pairs.push((a, b));
        }
        let max_label = pairs.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(0);
        let k = declared.unwrap_or(max_label);
        Self::from_one_based(k, &pairs)
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = format!("# nodes: {}\n", self.k);
        for &(a, b) in &self.edges {
            s.push_str(&format!("{} {}\n", a + 1, b + 1));
        }
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_edge_list(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_edge_list())?;
        Ok(())
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Graph(K={}, edges=[", self.k)?;
        for (l, (a, b)) in self.edges.iter().enumerate() {
            if l > 0 {
                write!(f, ", ")?;
            }
            write!(f, "({}, {})", a + 1, b + 1)?;
        }
        write!(f, "])")
    }
}

/// Draws from the Erdős–Rényi model G(K, p_g), redrawing on a fresh RNG
/// stream until the sample is connected.
pub fn gen_erdos_renyi(k: usize, p_g: f64, seed: u64) -> Result<Graph> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("K must be at least 2, got {k}")));
    }
    if !(p_g > 0.0 && p_g <= 1.0) {
        return Err(Error::InvalidArgument(format!("p_g must lie in (0, 1], got {p_g}")));
    }
    for attempt in 0..ER_MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt as u64);
        let mut edges = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                if rng.random::<f64>() < p_g {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::from_validated(k, edges);
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::RetryBudgetExhausted { k, p: p_g, attempts: ER_MAX_ATTEMPTS })
}

/// Dense incidence and Laplacian matrices of a graph.
#[derive(Debug, Clone)]
pub struct IncidenceView {
    /// M×K oriented incidence, row l = (e_i - e_i')ᵀ.
    pub a: DMatrix<f64>,
    /// Rows e_iᵀ (lower endpoint).
    pub a_left: DMatrix<f64>,
    /// Rows e_i'ᵀ (upper endpoint).
    pub a_right: DMatrix<f64>,
    /// K×K Laplacian AᵀA.
    pub laplacian: DMatrix<f64>,
    pub degrees: Vec<usize>,
}

impl IncidenceView {
    fn new(g: &Graph) -> Self {
        let (m, k) = (g.edge_count(), g.node_count());
        let mut a_left = DMatrix::zeros(m, k);
        let mut a_right = DMatrix::zeros(m, k);
        for (l, &(i, j)) in g.edges().iter().enumerate() {
            a_left[(l, i)] = 1.0;
            a_right[(l, j)] = 1.0;
        }
        let a = &a_left - &a_right;
        let laplacian = a.transpose() * &a;
        Self { a, a_left, a_right, laplacian, degrees: g.degrees() }
    }

    /// Stacked (A_L; A_R), 2M×K.
    pub fn a_lr(&self) -> DMatrix<f64> {
        let (m, k) = self.a.shape();
        let mut out = DMatrix::zeros(2 * m, k);
        out.rows_mut(0, m).copy_from(&self.a_left);
        out.rows_mut(m, m).copy_from(&self.a_right);
        out
    }

    /// Laplacian from the degree/adjacency rule, independent of AᵀA.
    pub fn laplacian_from_adjacency(g: &Graph) -> DMatrix<f64> {
        let k = g.node_count();
        DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                g.degree(i) as f64
            } else if g.has_edge(i, j) {
                -1.0
            } else {
                0.0
            }
        })
    }
}

/// Numerical rank via SVD.
pub fn matrix_rank(m: &DMatrix<f64>) -> usize {
    let tol = 1e-9 * (m.nrows().max(m.ncols()) as f64).max(1.0);
    m.clone().rank(tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_node_incidence() {
        let g = Graph::from_one_based(4, &[(1, 2), (1, 3), (2, 3), (2, 4), (3, 4)]).unwrap();
        let a = g.incidence().a;
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(5, 4, &[
            1.0, -1.0, 0.0, 0.0,
            1.0, 0.0, -1.0, 0.0,
            0.0, 1.0, -1.0, 0.0,
            0.0, 1.0, 0.0, -1.0,
            0.0, 0.0, 1.0, -1.0,
        ]);
        assert_eq!(a, expected);
    }

    #[test]
    fn single_edge_views() {
        let g = Graph::from_one_based(2, &[(1, 2)]).unwrap();
        let v = g.incidence();
        assert_eq!(v.a, DMatrix::from_row_slice(1, 2, &[1.0, -1.0]));
        assert_eq!(v.laplacian, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert_eq!(v.a, &v.a_left - &v.a_right);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(matches!(Graph::from_one_based(3, &[(1, 1), (1, 2)]), Err(Error::InvalidGraph(_))));
        assert!(matches!(
            Graph::from_one_based(3, &[(1, 2), (2, 1), (2, 3)]),
            Err(Error::InvalidGraph(_))
        ));
        assert!(matches!(Graph::from_one_based(4, &[(1, 2), (3, 4)]), Err(Error::Disconnected)));
        assert!(matches!(Graph::from_one_based(2, &[(1, 3)]), Err(Error::InvalidGraph(_))));
    }

    #[test]
    fn er_complete_when_p_is_one() {
        let g = gen_erdos_renyi(10, 1.0, 3).unwrap();
        assert_eq!(g.edge_count(), 45);
        let g = gen_erdos_renyi(2, 1.0, 99).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn er_rejects_invalid_probability() {
        assert!(gen_erdos_renyi(5, 0.0, 1).is_err());
        assert!(gen_erdos_renyi(5, 1.5, 1).is_err());
        assert!(gen_erdos_renyi(1, 0.5, 1).is_err());
    }

    #[test]
    fn er_retry_budget_exhausts_far_below_threshold() {
        let err = gen_erdos_renyi(200, 0.001, 5).unwrap_err();
        assert!(matches!(err, Error::RetryBudgetExhausted { .. }));
    }

    #[test]
    fn er_is_deterministic() {
        assert_eq!(gen_erdos_renyi(20, 0.3, 11).unwrap(), gen_erdos_renyi(20, 0.3, 11).unwrap());
    }

    #[test]
    fn bfs_tree_of_complete_graph() {
        let t = Graph::complete(4).unwrap().spanning_tree().unwrap();
        assert_eq!(t.edges(), &[(0, 1), (0, 2), (0, 3)]);
    }

    #[test]
    fn tree_is_its_own_spanning_tree() {
        let t = Graph::from_one_based(5, &[(1, 3), (2, 3), (3, 4), (4, 5)]).unwrap();
        let s = t.spanning_tree().unwrap();
        let mut a = t.edges().to_vec();
        a.sort_unstable();
        assert_eq!(s.edges(), a.as_slice());
    }

    #[test]
    fn spanning_tree_rank_k50() {
        let g = gen_erdos_renyi(50, 0.2, 4).unwrap();
        let t = g.spanning_tree().unwrap();
        assert_eq!(t.edge_count(), 49);
        assert_eq!(matrix_rank(&t.incidence().a), 49);
    }

    #[test]
    fn laplacian_dual_construction() {
        for seed in 0..20 {
            let g = gen_erdos_renyi(12, 0.35, seed).unwrap();
            let v = g.incidence();
            assert_eq!(v.laplacian, IncidenceView::laplacian_from_adjacency(&g));
            for i in 0..12 {
                assert_eq!(v.laplacian.row(i).sum(), 0.0);
            }
        }
    }

    #[test]
    fn laplacian_is_psd_with_null_vector() {
        let g = gen_erdos_renyi(15, 0.3, 8).unwrap();
        let l = g.incidence().laplacian;
        let eig = l.clone().symmetric_eigen();
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[0].abs() < 1e-10);
        assert!(ev[1] > 1e-8);
        let ones = nalgebra::DVector::from_element(15, 1.0);
        assert!((l * ones).norm() < 1e-12);
    }

    #[test]
    fn edge_list_round_trip() {
        let g = gen_erdos_renyi(9, 0.4, 2).unwrap();
        let back = Graph::parse_edge_list(&g.to_edge_list()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn edge_list_parse_errors() {
        assert!(matches!(Graph::parse_edge_list("1 x\n"), Err(Error::Parse(_))));
        assert!(matches!(Graph::parse_edge_list("1 2 3\n"), Err(Error::Parse(_))));
        assert!(matches!(Graph::parse_edge_list("1\n"), Err(Error::Parse(_))));
        let g = Graph::parse_edge_list("# comment\n2 1\n\n2 3\n").unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }
}
