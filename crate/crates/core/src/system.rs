//! Spin systems: a graph, `q` spin values per vertex, nonnegative vertex
//! activities `b_v` and symmetric nonnegative edge interactions `A_e`.
//!
//! The weight of a full configuration is the product of all vertex and edge
//! factors. Conditioning on a partial configuration removes the pinned
//! vertices' own factors and every edge lying entirely inside the pinned
//! set; only crossing edges contribute. That convention is load-bearing:
//! a system is "permissive" when every partial configuration, feasible or
//! not, still admits an extension of positive conditional weight, and the
//! exclusion of pinned-pinned edges is exactly what makes that possible for
//! systems with hard constraints.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numeric::{EnumerationCap, Weight};

/// Spin values are `0..q`.
pub type Spin = u32;

/// Symmetric `q x q` interaction matrix with nonnegative entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix<W> {
    q: usize,
    data: Vec<W>,
}

impl<W: Weight> SymmetricMatrix<W> {
    pub fn new(q: usize, rows: Vec<Vec<W>>) -> Result<Self> {
        if rows.len() != q || rows.iter().any(|r| r.len() != q) {
            return Err(Error::InvalidInstance(format!(
                "interaction matrix must be {q}x{q}"
            )));
        }
        let data: Vec<W> = rows.into_iter().flatten().collect();
        let m = SymmetricMatrix { q, data };
        for a in 0..q {
            for b in 0..q {
                let x = m.get(a as Spin, b as Spin);
                if !x.is_valid_weight() {
                    return Err(Error::InvalidWeight(format!(
                        "matrix entry ({a},{b}) = {x} is not a finite nonnegative weight"
                    )));
                }
                if a < b && *x != *m.get(b as Spin, a as Spin) {
                    return Err(Error::InvalidInstance(format!(
                        "interaction matrix not symmetric at ({a},{b})"
                    )));
                }
            }
        }
        if m.data.iter().all(|x| x.is_zero()) {
            return Err(Error::InvalidInstance(
                "interaction matrix has no positive entry".into(),
            ));
        }
        Ok(m)
    }

    pub fn from_fn(q: usize, mut f: impl FnMut(Spin, Spin) -> W) -> Result<Self> {
        Self::new(
            q,
            (0..q)
                .map(|a| (0..q).map(|b| f(a as Spin, b as Spin)).collect())
                .collect(),
        )
    }

    pub fn q(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn get(&self, a: Spin, b: Spin) -> &W {
        &self.data[a as usize * self.q + b as usize]
    }

    pub fn is_all_positive(&self) -> bool {
        self.data.iter().all(|x| !x.is_zero())
    }
}

/// An assignment of spins to a subset of vertices, kept sorted by vertex.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartialConfiguration {
    verts: Vec<usize>,
    spins: Vec<Spin>,
}

impl PartialConfiguration {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, Spin)>) -> Result<Self> {
        let mut pairs: Vec<(usize, Spin)> = pairs.into_iter().collect();
        pairs.sort_unstable();
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidInstance(format!(
                "vertex {} pinned twice",
                w[0].0
            )));
        }
        Ok(PartialConfiguration {
            verts: pairs.iter().map(|p| p.0).collect(),
            spins: pairs.iter().map(|p| p.1).collect(),
        })
    }

    /// Restrict a full configuration to `subset` (sorted ascending).
    pub fn from_full(x: &[Spin], subset: &[usize]) -> Self {
        debug_assert!(subset.windows(2).all(|w| w[0] < w[1]));
        PartialConfiguration {
            verts: subset.to_vec(),
            spins: subset.iter().map(|&v| x[v]).collect(),
        }
    }

    /// Insert or overwrite one pin.
    pub fn insert(&mut self, v: usize, spin: Spin) {
        match self.verts.binary_search(&v) {
            Ok(i) => self.spins[i] = spin,
            Err(i) => {
                self.verts.insert(i, v);
                self.spins.insert(i, spin);
            }
        }
    }

    pub fn get(&self, v: usize) -> Option<Spin> {
        self.verts.binary_search(&v).ok().map(|i| self.spins[i])
    }

    pub fn contains(&self, v: usize) -> bool {
        self.verts.binary_search(&v).is_ok()
    }

    pub fn domain(&self) -> &[usize] {
        &self.verts
    }

    pub fn spins(&self) -> &[Spin] {
        &self.spins
    }

    pub fn len(&self) -> usize {
        self.verts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Spin)> + '_ {
        self.verts.iter().copied().zip(self.spins.iter().copied())
    }

    /// Ascending list of the vertices of `0..n` not pinned here.
    pub fn free_vertices(&self, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n - self.len());
        let mut i = 0;
        for v in 0..n {
            if i < self.verts.len() && self.verts[i] == v {
                i += 1;
            } else {
                out.push(v);
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SpinSystem<W> {
    graph: Graph,
    q: usize,
    b: Vec<Vec<W>>,
    a: Vec<SymmetricMatrix<W>>,
    cap: EnumerationCap,
}

impl<W: Weight> SpinSystem<W> {
    /// Build and validate a spin system. `b` has one row of length `q` per
    /// vertex; `a` has one symmetric `q x q` matrix per edge, in the graph's
    /// canonical edge order. Every row and matrix must contain a positive
    /// entry; otherwise no configuration could ever be feasible locally.
    pub fn new(
        graph: Graph,
        q: usize,
        b: Vec<Vec<W>>,
        a: Vec<SymmetricMatrix<W>>,
    ) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidInstance(format!("q must be >= 2, got {q}")));
        }
        if b.len() != graph.n() {
            return Err(Error::InvalidInstance(format!(
                "expected {} activity vectors, got {}",
                graph.n(),
                b.len()
            )));
        }
        for (v, row) in b.iter().enumerate() {
            if row.len() != q {
                return Err(Error::InvalidInstance(format!(
                    "activity vector at vertex {v} has length {}, expected {q}",
                    row.len()
                )));
            }
            for (s, x) in row.iter().enumerate() {
                if !x.is_valid_weight() {
                    return Err(Error::InvalidWeight(format!(
                        "activity b[{v}][{s}] = {x} is not a finite nonnegative weight"
                    )));
                }
            }
            if row.iter().all(|x| x.is_zero()) {
                return Err(Error::InvalidInstance(format!(
                    "activity vector at vertex {v} has no positive entry"
                )));
            }
        }
        if a.len() != graph.m() {
            return Err(Error::InvalidInstance(format!(
                "expected {} interaction matrices, got {}",
                graph.m(),
                a.len()
            )));
        }
        if let Some(m) = a.iter().find(|m| m.q() != q) {
            return Err(Error::InvalidInstance(format!(
                "interaction matrix is {}x{}, expected {q}x{q}",
                m.q(),
                m.q()
            )));
        }
        Ok(SpinSystem { graph, q, b, a, cap: EnumerationCap::default() })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn activity(&self, v: usize) -> &[W] {
        &self.b[v]
    }

    pub fn interaction(&self, edge_id: usize) -> &SymmetricMatrix<W> {
        &self.a[edge_id]
    }

    pub fn cap(&self) -> EnumerationCap {
        self.cap
    }

    pub fn set_cap(&mut self, cap: EnumerationCap) {
        self.cap = cap;
    }

    /// True when every activity and interaction entry is strictly positive,
    /// i.e. the system has no hard constraints.
    pub fn is_soft(&self) -> bool {
        self.b.iter().all(|row| row.iter().all(|x| !x.is_zero()))
            && self.a.iter().all(|m| m.is_all_positive())
    }

    /// Product of all vertex and edge factors of a full configuration.
    pub fn weight(&self, x: &[Spin]) -> W {
        self.assert_config(x);
        let mut w = W::one();
        for (v, row) in self.b.iter().enumerate() {
            w.mul_assign(&row[x[v] as usize]);
        }
        for (id, &(u, v)) in self.graph.edges().iter().enumerate() {
            w.mul_assign(self.a[id].get(x[u], x[v]));
        }
        w
    }

    /// Equivalent to `weight(x) > 0` but immune to floating-point underflow:
    /// checks every factor individually.
    pub fn is_feasible(&self, x: &[Spin]) -> bool {
        self.assert_config(x);
        self.b.iter().enumerate().all(|(v, row)| !row[x[v] as usize].is_zero())
            && self
                .graph
                .edges()
                .iter()
                .enumerate()
                .all(|(id, &(u, v))| !self.a[id].get(x[u], x[v]).is_zero())
    }

    /// Weight of an extension `tau` (spins for the free vertices, ascending
    /// order) given pins `sigma`: free vertex factors and every edge with at
    /// least one free endpoint. Edges inside the pinned set do not count.
    pub fn conditional_weight(&self, sigma: &PartialConfiguration, tau: &[Spin]) -> W {
        let free = sigma.free_vertices(self.n());
        assert_eq!(free.len(), tau.len(), "free assignment length mismatch");
        let mut spin = vec![0 as Spin; self.n()];
        let mut pinned = vec![false; self.n()];
        for (v, s) in sigma.iter() {
            assert!(v < self.n() && (s as usize) < self.q, "pin out of range");
            spin[v] = s;
            pinned[v] = true;
        }
        for (&v, &s) in free.iter().zip(tau) {
            assert!((s as usize) < self.q, "spin out of range");
            spin[v] = s;
        }
        let mut w = W::one();
        for &v in &free {
            w.mul_assign(&self.b[v][spin[v] as usize]);
        }
        for (id, &(u, v)) in self.graph.edges().iter().enumerate() {
            if !(pinned[u] && pinned[v]) {
                w.mul_assign(self.a[id].get(spin[u], spin[v]));
            }
        }
        w
    }

    /// Conditional partition sum: total conditional weight over all
    /// extensions of `sigma`. Zero output means `sigma` admits no positive
    /// extension, i.e. the system is not permissive.
    pub fn conditional_partition(&self, sigma: &PartialConfiguration) -> Result<W> {
        let free = sigma.free_vertices(self.n());
        self.cap.check_power(self.q, free.len())?;
        let mut total = W::zero();
        each_assignment(self.q, free.len(), |tau| {
            total.add_assign(&self.conditional_weight(sigma, tau));
            true
        });
        Ok(total)
    }

    /// Does `sigma` admit an extension of positive conditional weight?
    /// Depth-first with pruning, so typically far cheaper than summing the
    /// conditional partition.
    pub fn has_feasible_extension(&self, sigma: &PartialConfiguration) -> Result<bool> {
        let free = sigma.free_vertices(self.n());
        self.cap.check_power(self.q, free.len())?;
        let mut spin = vec![0 as Spin; self.n()];
        let mut assigned = vec![false; self.n()];
        for (v, s) in sigma.iter() {
            spin[v] = s;
            assigned[v] = true;
        }
        Ok(self.extend_feasibly(&free, 0, &mut spin, &mut assigned))
    }

    fn extend_feasibly(
        &self,
        free: &[usize],
        depth: usize,
        spin: &mut [Spin],
        assigned: &mut [bool],
    ) -> bool {
        if depth == free.len() {
            return true;
        }
        let v = free[depth];
        for s in 0..self.q as Spin {
            if self.b[v][s as usize].is_zero() {
                continue;
            }
            let ok = self
                .graph
                .incident(v)
                .iter()
                .all(|&(w, id)| !assigned[w] || !self.a[id].get(s, spin[w]).is_zero());
            if !ok {
                continue;
            }
            spin[v] = s;
            assigned[v] = true;
            if self.extend_feasibly(free, depth + 1, spin, assigned) {
                assigned[v] = false;
                return true;
            }
            assigned[v] = false;
        }
        false
    }

    /// Exhaustive permissiveness check: every subset of vertices, under
    /// every assignment, must leave a positive-weight extension. Exponential
    /// in `n`; guarded by the enumeration cap.
    pub fn is_permissive(&self) -> Result<bool> {
        let n = self.n();
        if n >= 64 {
            return Err(Error::EnumerationCapExceeded {
                base: 2,
                exponent: n,
                cap: self.cap.0,
            });
        }
        self.cap.check_power(2 * self.q, n)?;
        for mask in 0u64..(1 << n) {
            let pinned: Vec<usize> = (0..n).filter(|v| mask >> v & 1 == 1).collect();
            let mut all_ok = true;
            each_assignment(self.q, pinned.len(), |vals| {
                let sigma = PartialConfiguration {
                    verts: pinned.clone(),
                    spins: vals.to_vec(),
                };
                match self.has_feasible_extension(&sigma) {
                    Ok(true) => true,
                    _ => {
                        all_ok = false;
                        false
                    }
                }
            });
            if !all_ok {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Deterministic feasible configuration: visit vertices in ascending
    /// order and take the lowest spin consistent with the already-assigned
    /// neighbors. Succeeds on every permissive system.
    pub fn greedy_feasible(&self) -> Result<Vec<Spin>> {
        let mut x = vec![0 as Spin; self.n()];
        for v in 0..self.n() {
            let found = (0..self.q as Spin).find(|&s| {
                !self.b[v][s as usize].is_zero()
                    && self
                        .graph
                        .incident(v)
                        .iter()
                        .all(|&(w, id)| w > v || !self.a[id].get(s, x[w]).is_zero())
            });
            match found {
                Some(s) => x[v] = s,
                None => return Err(Error::InfeasibleGreedyStep { vertex: v }),
            }
        }
        Ok(x)
    }

    fn assert_config(&self, x: &[Spin]) {
        assert_eq!(x.len(), self.n(), "configuration length mismatch");
        debug_assert!(x.iter().all(|&s| (s as usize) < self.q), "spin out of range");
    }
}

/// Visit every assignment of `len` spin values in lexicographic order
/// (last coordinate varies fastest). The callback returns `false` to stop
/// early; the function returns `true` when the enumeration ran to the end.
pub(crate) fn each_assignment(q: usize, len: usize, mut f: impl FnMut(&[Spin]) -> bool) -> bool {
    let mut cfg = vec![0 as Spin; len];
    loop {
        if !f(&cfg) {
            return false;
        }
        let mut i = len;
        loop {
            if i == 0 {
                return true;
            }
            i -= 1;
            cfg[i] += 1;
            if (cfg[i] as usize) < q {
                break;
            }
            cfg[i] = 0;
        }
    }
}
