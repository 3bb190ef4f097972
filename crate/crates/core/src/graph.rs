//! Weighted graphs with optional per-interaction timestamps.
//!
//! A [`Graph`] keeps two views of its edges: the interaction list as it was
//! supplied (one entry per interaction, each with its own optional pair of
//! endpoint timestamps) and a merged sparse adjacency matrix in which
//! parallel interactions between the same pair sum their weights.

use std::collections::{HashMap, VecDeque};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// One interaction between `u` and `v`. For directed graphs `u` is the
/// initial and `v` the terminal vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
    /// Timestamps at `u` and `v`, in the caller's time units.
    pub times: Option<(f64, f64)>,
}

/// Maps external string identifiers to dense vertex indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SymbolTable {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Identity table `"0", "1", ..., "n-1"`.
    pub fn numbered(n: usize) -> Self {
        let mut table = Self::new();
        for i in 0..n {
            table.intern(&i.to_string());
        }
        table
    }

    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    directed: bool,
    edges: Vec<Edge>,
    adjacency: CsrMatrix,
    degree: Vec<f64>,
    symbols: SymbolTable,
    merged_duplicates: usize,
}

pub struct GraphBuilder {
    n: usize,
    directed: bool,
    allow_self_loops: bool,
    edges: Vec<Edge>,
    symbols: Option<SymbolTable>,
}

impl GraphBuilder {
    pub fn new(n: usize) -> Self {
        GraphBuilder { n, directed: false, allow_self_loops: false, edges: Vec::new(), symbols: None }
    }

    pub fn directed(mut self, directed: bool) -> Self {
        self.directed = directed;
        self
    }

    pub fn allow_self_loops(mut self, allow: bool) -> Self {
        self.allow_self_loops = allow;
        self
    }

    pub fn symbols(mut self, symbols: SymbolTable) -> Self {
        self.symbols = Some(symbols);
        self
    }

    pub fn edge(mut self, u: usize, v: usize, weight: f64) -> Self {
        self.edges.push(Edge { u, v, weight, times: None });
        self
    }

    pub fn timed_edge(mut self, u: usize, v: usize, weight: f64, t_u: f64, t_v: f64) -> Self {
        self.edges.push(Edge { u, v, weight, times: Some((t_u, t_v)) });
        self
    }

    pub fn push(&mut self, edge: Edge) {
        self.edges.push(edge);
    }

    pub fn extend(mut self, edges: impl IntoIterator<Item = Edge>) -> Self {
        self.edges.extend(edges);
        self
    }

    pub fn build(self) -> Result<Graph> {
        let n = self.n;
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        for (k, e) in self.edges.iter().enumerate() {
            for vertex in [e.u, e.v] {
                if vertex >= n {
                    return Err(Error::VertexOutOfRange { edge: k, vertex, order: n });
                }
            }
            if !(e.weight >= 0.0) || !e.weight.is_finite() {
                return Err(Error::NegativeWeight { edge: k, weight: e.weight });
            }
            if e.u == e.v && !self.allow_self_loops {
                return Err(Error::SelfLoop { edge: k, vertex: e.u });
            }
            if let Some((a, b)) = e.times {
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::InvalidParameter(format!("edge {k}: non-finite timestamp")));
                }
            }
        }

        // Static duplicates merge into the first occurrence; timed interactions stay distinct.
        let mut first_static: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::with_capacity(self.edges.len());
        let mut merged_duplicates = 0;
        for e in self.edges {
            if e.times.is_none() {
                let key = if self.directed { (e.u, e.v) } else { (e.u.min(e.v), e.u.max(e.v)) };
                if let Some(&slot) = first_static.get(&key) {
                    edges[slot].weight += e.weight;
                    merged_duplicates += 1;
                    continue;
                }
                first_static.insert(key, edges.len());
            }
            edges.push(e);
        }
        if merged_duplicates > 0 {
            log::warn!("merged {merged_duplicates} duplicate static edges by weight summation");
        }

        let mut triplets = Vec::with_capacity(2 * edges.len());
        for e in &edges {
            triplets.push((e.u, e.v, e.weight));
            if !self.directed && e.u != e.v {
                triplets.push((e.v, e.u, e.weight));
            }
        }
        let adjacency = CsrMatrix::from_triplets(n, n, &triplets);
        let degree = (0..n).map(|i| adjacency.row_sum(i)).collect();
        let symbols = match self.symbols {
            Some(s) if s.len() == n => s,
            Some(s) => {
                return Err(Error::InvalidParameter(format!(
                    "symbol table has {} names for {n} vertices",
                    s.len()
                )))
            }
            None => SymbolTable::numbered(n),
        };
        Ok(Graph { n, directed: self.directed, edges, adjacency, degree, symbols, merged_duplicates })
    }
}

impl Graph {
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Interaction list.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    /// Weighted degree vector `d = A·1`.
    pub fn degrees(&self) -> &[f64] {
        &self.degree
    }

    pub fn degree(&self, v: usize) -> f64 {
        self.degree[v]
    }

    /// Number of distinct neighbours.
    pub fn hop_degree(&self, v: usize) -> usize {
        self.adjacency.row(v).0.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        self.adjacency.row(v).0
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    pub fn label(&self, v: usize) -> &str {
        self.symbols.name(v)
    }

    pub fn merged_duplicates(&self) -> usize {
        self.merged_duplicates
    }

    pub fn has_timestamps(&self) -> bool {
        self.edges.iter().any(|e| e.times.is_some())
    }

    /// Oriented incidence matrix, `#V × #E`: `+1` at the terminal vertex and
    /// `-1` at the initial vertex of each edge. Undirected edges are
    /// oriented `u → v` as stored.
    pub fn incidence(&self) -> CsrMatrix {
        let mut trips = Vec::with_capacity(2 * self.edges.len());
        for (k, e) in self.edges.iter().enumerate() {
            if e.u != e.v {
                trips.push((e.v, k, 1.0));
                trips.push((e.u, k, -1.0));
            }
        }
        CsrMatrix::from_triplets(self.n, self.edges.len(), &trips)
    }

    /// Hop distances from a set of sources (multi-source BFS over out-edges).
    pub fn bfs_distances(&self, sources: &[usize]) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s].is_none() {
                dist[s] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(x) = queue.pop_front() {
            let dx = dist[x].unwrap();
            for &y in self.neighbors(x) {
                if dist[y].is_none() {
                    dist[y] = Some(dx + 1);
                    queue.push_back(y);
                }
            }
        }
        dist
    }

    /// Connected components of the underlying undirected graph.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let undirected_neighbors = self.undirected_neighbors();
        let mut comp = vec![usize::MAX; self.n];
        let mut out = Vec::new();
        for s in 0..self.n {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![s];
            comp[s] = id;
            let mut head = 0;
            while head < members.len() {
                let x = members[head];
                head += 1;
                for &y in &undirected_neighbors[x] {
                    if comp[y] == usize::MAX {
                        comp[y] = id;
                        members.push(y);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs: Vec<Vec<usize>> = (0..self.n).map(|v| self.neighbors(v).to_vec()).collect();
        if self.directed {
            for v in 0..self.n {
                for &u in self.adjacency.row(v).0 {
                    nbrs[u].push(v);
                }
            }
        }
        nbrs
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }

    /// Vertices of the component containing `v`, sorted.
    pub fn component_of(&self, v: usize) -> Vec<usize> {
        self.components().into_iter().find(|c| c.binary_search(&v).is_ok()).unwrap_or_default()
    }

    /// Hop diameter, or `None` when some pair is unreachable.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for s in 0..self.n {
            for d in self.bfs_distances(&[s]) {
                best = best.max(d?);
            }
        }
        Some(best)
    }

    /// Induced subgraph on `vertices` (in the given order). Interactions with
    /// both endpoints inside are kept with their timestamps.
    pub fn induced_subgraph(&self, vertices: &[usize]) -> Result<Graph> {
        let mut local = vec![usize::MAX; self.n];
        let mut symbols = SymbolTable::new();
        for (i, &v) in vertices.iter().enumerate() {
            local[v] = i;
            symbols.intern(self.label(v));
        }
        let edges = self.edges.iter().filter(|e| local[e.u] != usize::MAX && local[e.v] != usize::MAX).map(|e| Edge {
            u: local[e.u],
            v: local[e.v],
            weight: e.weight,
            times: e.times,
        });
        GraphBuilder::new(vertices.len())
            .directed(self.directed)
            .allow_self_loops(true)
            .symbols(symbols)
            .extend(edges)
            .build()
    }
}

/// One row of the edge-list CSV: `src,dst,weight,t_src,t_dst`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub src: String,
    pub dst: String,
    pub weight: f64,
    pub t_src: Option<f64>,
    pub t_dst: Option<f64>,
}

impl Graph {
    /// Builds a graph from string-labelled rows. Vertices are numbered in
    /// order of first appearance.
    pub fn from_rows(rows: &[EdgeRow], directed: bool) -> Result<Graph> {
        let mut symbols = SymbolTable::new();
        let mut builder = GraphBuilder::new(0).directed(directed);
        for (k, row) in rows.iter().enumerate() {
            let u = symbols.intern(&row.src);
            let v = symbols.intern(&row.dst);
            let times = match (row.t_src, row.t_dst) {
                (Some(a), Some(b)) => Some((a, b)),
                (None, None) => None,
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "edge {k}: exactly one of t_src/t_dst is set"
                    )))
                }
            };
            builder.push(Edge { u, v, weight: row.weight, times });
        }
        builder.n = symbols.len();
        builder.symbols(symbols).build()
    }

    pub fn read_csv<R: Read>(reader: R, directed: bool) -> Result<Graph> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<EdgeRow>, _>>()?;
        Graph::from_rows(&rows, directed)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for e in &self.edges {
            wtr.serialize(EdgeRow {
                src: self.label(e.u).to_string(),
                dst: self.label(e.v).to_string(),
                weight: e.weight,
                t_src: e.times.map(|t| t.0),
                t_dst: e.times.map(|t| t.1),
            })?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph {
        GraphBuilder::new(3).edge(0, 1, 1.0).edge(1, 2, 1.0).build().unwrap()
    }

    #[test]
    fn path_graph_degrees() {
        let g = path3();
        assert_eq!(g.degrees(), &[1.0, 2.0, 1.0]);
        let a = g.adjacency().to_dense();
        assert_eq!(a, a.transpose());
        assert_eq!(g.neighbors(1), &[0, 2]);
    }

    #[test]
    fn empty_graph_is_rejected() {
        assert!(matches!(GraphBuilder::new(0).build(), Err(Error::EmptyGraph)));
        assert!(matches!(Graph::from_rows(&[], false), Err(Error::EmptyGraph)));
    }

    #[test]
    fn invalid_edges_are_rejected() {
        assert!(matches!(
            GraphBuilder::new(2).edge(0, 1, -1.0).build(),
            Err(Error::NegativeWeight { edge: 0, .. })
        ));
        assert!(matches!(
            GraphBuilder::new(2).edge(0, 2, 1.0).build(),
            Err(Error::VertexOutOfRange { vertex: 2, .. })
        ));
        assert!(matches!(GraphBuilder::new(2).edge(1, 1, 1.0).build(), Err(Error::SelfLoop { .. })));
        assert!(GraphBuilder::new(2).allow_self_loops(true).edge(1, 1, 1.0).build().is_ok());
    }

    #[test]
    fn duplicate_undirected_edges_merge_by_weight() {
        let g = GraphBuilder::new(2).edge(0, 1, 1.0).edge(1, 0, 2.5).build().unwrap();
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.merged_duplicates(), 1);
        assert_eq!(g.adjacency().get(0, 1), 3.5);
        assert_eq!(g.degrees(), &[3.5, 3.5]);

        // Timed interactions stay separate but still sum in the adjacency.
        let g = GraphBuilder::new(2).timed_edge(0, 1, 1.0, 0.0, 0.0).timed_edge(0, 1, 1.0, 5.0, 5.0).build().unwrap();
        assert_eq!(g.edges().len(), 2);
        assert_eq!(g.merged_duplicates(), 0);
        assert_eq!(g.adjacency().get(1, 0), 2.0);
    }

    #[test]
    fn directed_incidence_sign_pattern() {
        let g = GraphBuilder::new(2).directed(true).edge(0, 1, 1.0).build().unwrap();
        let b = g.incidence().to_dense();
        assert_eq!(b[(0, 0)], -1.0);
        assert_eq!(b[(1, 0)], 1.0);

        // 1 <- 2 -> 3 (zero-based 0 <- 1 -> 2)
        let g = GraphBuilder::new(3).directed(true).edge(1, 0, 1.0).edge(1, 2, 1.0).build().unwrap();
        let b = g.incidence().to_dense();
        let expected = nalgebra::DMatrix::from_row_slice(3, 2, &[1.0, 0.0, -1.0, -1.0, 0.0, 1.0]);
        assert_eq!(b, expected);
    }

    #[test]
    fn kirchhoff_equals_incidence_product() {
        let g = GraphBuilder::new(4).edge(0, 1, 1.0).edge(1, 2, 1.0).edge(2, 3, 1.0).edge(3, 0, 1.0).edge(0, 2, 1.0).build().unwrap();
        let b = g.incidence().to_dense();
        let a = g.adjacency().to_dense();
        let d = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(g.degrees()));
        assert_eq!(&b * b.transpose(), d - a);
    }

    #[test]
    fn components_and_subgraphs() {
        let g = GraphBuilder::new(5).edge(0, 1, 1.0).edge(3, 4, 1.0).build().unwrap();
        assert_eq!(g.components(), vec![vec![0, 1], vec![2], vec![3, 4]]);
        assert!(!g.is_connected());
        assert_eq!(g.diameter(), None);
        let sub = g.induced_subgraph(&[3, 4]).unwrap();
        assert_eq!(sub.order(), 2);
        assert_eq!(sub.label(0), "3");
        assert!(sub.is_connected());
        assert_eq!(path3().diameter(), Some(2));
    }

    #[test]
    fn csv_round_trip_keeps_labels_and_times() {
        let text = "src,dst,weight,t_src,t_dst\nalice,bob,1,0.5,0.75\nbob,carol,2,,\n";
        let g = Graph::read_csv(text.as_bytes(), false).unwrap();
        assert_eq!(g.order(), 3);
        assert_eq!(g.symbols().get("carol"), Some(2));
        assert_eq!(g.edges()[0].times, Some((0.5, 0.75)));
        assert_eq!(g.edges()[1].times, None);
        let mut out = Vec::new();
        g.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text.replace(",1,", ",1.0,").replace(",2,", ",2.0,"));
    }
}
