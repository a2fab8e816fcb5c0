//! Simple undirected graphs on dense integer vertices `0..n`.
//!
//! Edges are stored once in canonical `(min, max)` order, sorted
//! lexicographically; the position of an edge in that list is its stable
//! edge id, which the spin-system layer uses to attach interaction matrices.
//! All set-valued results come back sorted ascending.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
    /// Per vertex: `(neighbor, edge id)` pairs sorted by neighbor.
    incident: Vec<Vec<(usize, usize)>>,
}

impl Graph {
    /// Build a graph on `n` vertices. Rejects out-of-range endpoints,
    /// self-loops and duplicate edges (in either orientation).
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut canon: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            for w in [u, v] {
                if w >= n {
                    return Err(Error::VertexOutOfRange { vertex: w, n });
                }
            }
            if u == v {
                return Err(Error::SelfLoop { vertex: u });
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        if let Some(w) = canon.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateEdge { u: w[0].0, v: w[0].1 });
        }
        let mut adj = vec![Vec::new(); n];
        let mut incident = vec![Vec::new(); n];
        for (id, &(u, v)) in canon.iter().enumerate() {
            adj[u].push(v);
            adj[v].push(u);
            incident[u].push((v, id));
            incident[v].push((u, id));
        }
        for v in 0..n {
            adj[v].sort_unstable();
            incident[v].sort_unstable();
        }
        Ok(Graph { adj, edges: canon, incident })
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    /// Edges in canonical order; the index of an edge here is its edge id.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    /// `(neighbor, edge id)` pairs for `v`, sorted by neighbor.
    pub fn incident(&self, v: usize) -> &[(usize, usize)] {
        &self.incident[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n()).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn edge_id(&self, u: usize, v: usize) -> Option<usize> {
        let key = (u.min(v), u.max(v));
        self.edges.binary_search(&key).ok()
    }

    /// Vertices at distance `<= radius` from `v`, sorted ascending.
    pub fn ball(&self, v: usize, radius: usize) -> Vec<usize> {
        assert!(v < self.n(), "vertex {v} out of range");
        let mut out = self.bfs_collect(v, radius, false);
        out.sort_unstable();
        out
    }

    /// Vertices at distance exactly `radius` from `v`, sorted ascending.
    pub fn sphere(&self, v: usize, radius: usize) -> Vec<usize> {
        assert!(v < self.n(), "vertex {v} out of range");
        let mut out = self.bfs_collect(v, radius, true);
        out.sort_unstable();
        out
    }

    fn bfs_collect(&self, v: usize, radius: usize, exact: bool) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n()];
        let mut queue = std::collections::VecDeque::new();
        dist[v] = 0;
        queue.push_back(v);
        let mut out = Vec::new();
        if !exact || radius == 0 {
            out.push(v);
        }
        while let Some(u) = queue.pop_front() {
            if dist[u] == radius {
                continue;
            }
            for &w in &self.adj[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    if !exact || dist[w] == radius {
                        out.push(w);
                    }
                    queue.push_back(w);
                }
            }
        }
        out
    }

    /// Vertices outside `set` adjacent to some vertex of `set`, sorted
    /// ascending. `set` must be sorted, deduplicated and in range.
    pub fn boundary(&self, set: &[usize]) -> Vec<usize> {
        debug_assert!(set.windows(2).all(|w| w[0] < w[1]), "set must be sorted");
        let mut member = vec![false; self.n()];
        for &v in set {
            assert!(v < self.n(), "vertex {v} out of range");
            member[v] = true;
        }
        let mut out = Vec::new();
        for &v in set {
            for &w in &self.adj[v] {
                if !member[w] {
                    member[w] = true;
                    out.push(w);
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn is_triangle_free(&self) -> bool {
        // Neighbor lists are sorted; intersect them per edge.
        for &(u, v) in &self.edges {
            let (mut i, mut j) = (0, 0);
            let (a, b) = (&self.adj[u], &self.adj[v]);
            while i < a.len() && j < b.len() {
                match a[i].cmp(&b[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => return false,
                }
            }
        }
        true
    }

    /// Connected components of the subgraph induced by `set` (sorted,
    /// deduplicated). Components come back ordered by smallest member, each
    /// sorted ascending.
    pub fn induced_components(&self, set: &[usize]) -> Vec<Vec<usize>> {
        debug_assert!(set.windows(2).all(|w| w[0] < w[1]), "set must be sorted");
        let mut member = vec![false; self.n()];
        for &v in set {
            member[v] = true;
        }
        let mut seen = vec![false; self.n()];
        let mut components = Vec::new();
        for &start in set {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut head = 0;
            while head < comp.len() {
                let u = comp[head];
                head += 1;
                for &w in &self.adj[u] {
                    if member[w] && !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                    }
                }
            }
            comp.sort_unstable();
            components.push(comp);
        }
        components
    }
}
