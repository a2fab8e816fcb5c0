//! Exact local inference on conditioned spin systems.
//!
//! Everything here rests on one structural fact: conditioning on a set of
//! vertices makes the components of the remaining free subgraph mutually
//! independent. Marginals therefore only ever enumerate the free component
//! of the query vertex, and that component is enumerated piecewise: fixing
//! the query vertex splits its component further, and each piece contributes
//! an independent weight vector indexed by the query spin. Block sampling
//! enumerates the block itself in lexicographic order, pruning zero-weight
//! prefixes, and inverts a single uniform draw against the cumulative
//! weights, so a seeded run is reproducible.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::Weight;
use crate::system::{each_assignment, PartialConfiguration, Spin, SpinSystem};

/// Read-only view of which vertices are pinned and to what.
pub trait Pinning {
    fn pinned_spin(&self, v: usize) -> Option<Spin>;
}

impl Pinning for PartialConfiguration {
    fn pinned_spin(&self, v: usize) -> Option<Spin> {
        self.get(v)
    }
}

/// Reusable dense pinning buffer. Generation stamps make clearing O(1), so
/// a long sampling run never pays per-step costs proportional to `n`.
#[derive(Clone, Debug)]
pub struct PinScratch {
    spin: Vec<Spin>,
    stamp: Vec<u32>,
    cur: u32,
}

impl PinScratch {
    pub fn new(n: usize) -> Self {
        PinScratch { spin: vec![0; n], stamp: vec![0; n], cur: 0 }
    }

    /// Start a fresh (empty) pinning.
    pub fn begin(&mut self) {
        self.cur += 1;
    }

    pub fn pin(&mut self, v: usize, s: Spin) {
        self.spin[v] = s;
        self.stamp[v] = self.cur;
    }

    pub fn view(&self) -> DensePins<'_> {
        DensePins { scratch: self }
    }
}

#[derive(Clone, Copy)]
pub struct DensePins<'a> {
    scratch: &'a PinScratch,
}

impl Pinning for DensePins<'_> {
    #[inline]
    fn pinned_spin(&self, v: usize) -> Option<Spin> {
        (self.scratch.stamp[v] == self.scratch.cur).then(|| self.scratch.spin[v])
    }
}

/// A probability distribution over an explicit, lexicographically sorted
/// outcome list. Outcomes are full or partial spin vectors depending on
/// which operation produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution<W> {
    outcomes: Vec<Vec<Spin>>,
    probs: Vec<W>,
}

impl<W: Weight> DiscreteDistribution<W> {
    pub fn new(outcomes: Vec<Vec<Spin>>, probs: Vec<W>) -> Result<Self> {
        if outcomes.len() != probs.len() {
            return Err(Error::InvalidInstance(
                "outcome and probability lists differ in length".into(),
            ));
        }
        if outcomes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInstance(
                "outcomes must be sorted and distinct".into(),
            ));
        }
        let mut sum = W::zero();
        for p in &probs {
            if !p.is_valid_weight() {
                return Err(Error::InvalidWeight(format!("probability {p}")));
            }
            sum.add_assign(p);
        }
        if (sum.to_f64() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInstance(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(DiscreteDistribution { outcomes, probs })
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn outcomes(&self) -> &[Vec<Spin>] {
        &self.outcomes
    }

    pub fn probs(&self) -> &[W] {
        &self.probs
    }

    pub fn index_of(&self, outcome: &[Spin]) -> Option<usize> {
        self.outcomes.binary_search_by(|o| o.as_slice().cmp(outcome)).ok()
    }

    pub fn prob_of(&self, outcome: &[Spin]) -> Option<&W> {
        self.index_of(outcome).map(|i| &self.probs[i])
    }

    pub fn to_f64(&self) -> DiscreteDistribution<f64> {
        DiscreteDistribution {
            outcomes: self.outcomes.clone(),
            probs: self.probs.iter().map(Weight::to_f64).collect(),
        }
    }
}

/// The sub-instance induced by a block together with its boundary: the
/// original activities and every edge with both endpoints in the kept set.
/// `vertices` maps local indices back to original ones.
#[derive(Clone, Debug)]
pub struct Restriction<W> {
    pub system: SpinSystem<W>,
    pub vertices: Vec<usize>,
}

impl<W> Restriction<W> {
    pub fn index_of(&self, original: usize) -> Option<usize> {
        self.vertices.binary_search(&original).ok()
    }

    pub fn original_of(&self, local: usize) -> usize {
        self.vertices[local]
    }
}

/// Restrict to `block` plus its boundary. Conditioning on the boundary makes
/// this sub-instance equivalent to the full one for any marginal inside the
/// block, which is what keeps local computations local.
pub fn restricted_system<W: Weight>(
    sys: &SpinSystem<W>,
    block: &[usize],
) -> Result<Restriction<W>> {
    debug_assert!(block.windows(2).all(|w| w[0] < w[1]), "block must be sorted");
    let g = sys.graph();
    let boundary = g.boundary(block);
    let mut vertices: Vec<usize> = block.iter().chain(boundary.iter()).copied().collect();
    vertices.sort_unstable();
    let index_of = |v: usize| vertices.binary_search(&v).ok();
    let mut edges = Vec::new();
    let mut mats = Vec::new();
    for (id, &(u, v)) in g.edges().iter().enumerate() {
        if let (Some(lu), Some(lv)) = (index_of(u), index_of(v)) {
            edges.push((lu, lv));
            mats.push(sys.interaction(id).clone());
        }
    }
    // Canonical edge order is preserved: local indices are order-isomorphic
    // to original ones, so the edge list is already sorted.
    let graph = crate::graph::Graph::new(vertices.len(), &edges)?;
    let b = vertices.iter().map(|&v| sys.activity(v).to_vec()).collect();
    let mut system = SpinSystem::new(graph, sys.q(), b, mats)?;
    system.set_cap(sys.cap());
    Ok(Restriction { system, vertices })
}

/// Enumerate the spins of `comp` (sorted ascending) in lexicographic order
/// and accumulate, for every spin `a` of `hub`, the total weight of the
/// component: vertex activities, edges inside the component, edges to
/// pinned vertices, and edges to `hub` evaluated at `a`. Zero-weight
/// prefixes are pruned.
fn component_vector<W: Weight>(
    sys: &SpinSystem<W>,
    comp: &[usize],
    hub: usize,
    pins: &impl Pinning,
    out: &mut [W],
) -> Result<()> {
    sys.cap().check_power(sys.q(), comp.len())?;
    let hub_edges: Vec<(usize, usize)> = comp
        .iter()
        .enumerate()
        .flat_map(|(pos, &w)| {
            sys.graph()
                .incident(w)
                .iter()
                .filter(move |&&(x, _)| x == hub)
                .map(move |&(_, eid)| (pos, eid))
        })
        .collect();
    let mut tau = vec![0 as Spin; comp.len()];
    component_dfs(sys, comp, hub, pins, &hub_edges, 0, &W::one(), &mut tau, out);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn component_dfs<W: Weight>(
    sys: &SpinSystem<W>,
    comp: &[usize],
    hub: usize,
    pins: &impl Pinning,
    hub_edges: &[(usize, usize)],
    depth: usize,
    running: &W,
    tau: &mut [Spin],
    out: &mut [W],
) {
    if depth == comp.len() {
        for (a, slot) in out.iter_mut().enumerate() {
            let mut t = running.clone();
            for &(pos, eid) in hub_edges {
                t.mul_assign(sys.interaction(eid).get(a as Spin, tau[pos]));
            }
            slot.add_assign(&t);
        }
        return;
    }
    let w = comp[depth];
    for s in 0..sys.q() as Spin {
        let mut f = sys.activity(w)[s as usize].clone();
        if f.is_zero() {
            continue;
        }
        for &(x, eid) in sys.graph().incident(w) {
            if x == hub {
                continue;
            }
            if let Some(sx) = pins.pinned_spin(x) {
                f.mul_assign(sys.interaction(eid).get(s, sx));
            } else if let Ok(pos) = comp.binary_search(&x) {
                if pos < depth {
                    f.mul_assign(sys.interaction(eid).get(s, tau[pos]));
                }
            } else {
                debug_assert!(false, "free neighbor {x} escapes its component");
            }
            if f.is_zero() {
                break;
            }
        }
        if f.is_zero() {
            continue;
        }
        f.mul_assign(running);
        tau[depth] = s;
        component_dfs(sys, comp, hub, pins, hub_edges, depth + 1, &f, tau, out);
    }
}

/// Unnormalized marginal weights of `v` under `pins`: the activity of `v`
/// times its pinned-edge factors, times one independent weight vector per
/// free component hanging off `v`. Exact by conditional independence.
pub(crate) fn marginal_weights<W: Weight>(
    sys: &SpinSystem<W>,
    v: usize,
    pins: &impl Pinning,
    out: &mut Vec<W>,
) -> Result<()> {
    debug_assert!(pins.pinned_spin(v).is_none(), "marginal of a pinned vertex");
    let q = sys.q();
    out.clear();
    out.extend_from_slice(sys.activity(v));
    for &(w, eid) in sys.graph().incident(v) {
        if let Some(sw) = pins.pinned_spin(w) {
            let m = sys.interaction(eid);
            for (a, slot) in out.iter_mut().enumerate() {
                slot.mul_assign(m.get(a as Spin, sw));
            }
        }
    }
    // Components of the free region around v, each discovered from one of
    // v's free neighbors, collected sorted for deterministic order.
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for &w in sys.graph().neighbors(v) {
        if pins.pinned_spin(w).is_some() || seen.contains(&w) {
            continue;
        }
        let mut comp = vec![w];
        seen.insert(w);
        let mut head = 0;
        while head < comp.len() {
            let y = comp[head];
            head += 1;
            for &z in sys.graph().neighbors(y) {
                if z != v && pins.pinned_spin(z).is_none() && seen.insert(z) {
                    comp.push(z);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps.sort_by_key(|c| c[0]);
    let mut vec_j = vec![W::zero(); q];
    for comp in &comps {
        for slot in vec_j.iter_mut() {
            *slot = W::zero();
        }
        component_vector(sys, comp, v, pins, &mut vec_j)?;
        for (slot, f) in out.iter_mut().zip(&vec_j) {
            slot.mul_assign(f);
        }
    }
    Ok(())
}

/// Marginal distribution of the spin at `v` given the pins `sigma`.
/// Outcomes are the single-spin vectors `[0] .. [q-1]`, zero entries
/// included. Fails with `ZeroConditionalPartition` when no extension of
/// `sigma` has positive weight.
pub fn marginal<W: Weight>(
    sys: &SpinSystem<W>,
    v: usize,
    sigma: &PartialConfiguration,
) -> Result<DiscreteDistribution<W>> {
    assert!(v < sys.n(), "vertex out of range");
    assert!(sigma.get(v).is_none(), "marginal vertex must be free");
    let mut weights = Vec::new();
    marginal_weights(sys, v, sigma, &mut weights)?;
    let mut total = W::zero();
    for w in &weights {
        total.add_assign(w);
    }
    if total.is_zero() {
        return Err(Error::ZeroConditionalPartition);
    }
    let probs: Vec<W> = weights.iter().map(|w| w.div(&total)).collect();
    DiscreteDistribution::new((0..sys.q() as Spin).map(|a| vec![a]).collect(), probs)
}

/// Depth-first enumeration of block assignments in lexicographic order.
/// `on_leaf` receives each positive-weight assignment and its conditional
/// weight; returning `false` stops the walk.
fn block_dfs<W: Weight>(
    sys: &SpinSystem<W>,
    block: &[usize],
    pins: &impl Pinning,
    depth: usize,
    running: &W,
    tau: &mut [Spin],
    on_leaf: &mut impl FnMut(&[Spin], &W) -> bool,
) -> bool {
    if depth == block.len() {
        return on_leaf(tau, running);
    }
    let w = block[depth];
    for s in 0..sys.q() as Spin {
        let mut f = sys.activity(w)[s as usize].clone();
        if f.is_zero() {
            continue;
        }
        for &(x, eid) in sys.graph().incident(w) {
            if let Some(sx) = pins.pinned_spin(x) {
                f.mul_assign(sys.interaction(eid).get(s, sx));
            } else if let Ok(pos) = block.binary_search(&x) {
                if pos < depth {
                    f.mul_assign(sys.interaction(eid).get(s, tau[pos]));
                }
            }
            if f.is_zero() {
                break;
            }
        }
        if f.is_zero() {
            continue;
        }
        f.mul_assign(running);
        tau[depth] = s;
        if !block_dfs(sys, block, pins, depth + 1, &f, tau, on_leaf) {
            return false;
        }
    }
    true
}

/// Draw a fresh assignment for `block` from its conditional distribution
/// given the rest of `x`, using one uniform draw inverted against the
/// cumulative weights of the lexicographic enumeration.
pub fn sample_block<W: Weight, R: Rng + ?Sized>(
    sys: &SpinSystem<W>,
    block: &[usize],
    x: &[Spin],
    rng: &mut R,
) -> Result<Vec<Spin>> {
    let boundary = sys.graph().boundary(block);
    let pins = PartialConfiguration::from_full(x, &boundary);
    let mut buf = Vec::new();
    sample_block_with(sys, block, &pins, rng, &mut buf)
}

/// Buffer-reusing form of [`sample_block`]; `pins` must cover the entire
/// boundary of `block`.
pub(crate) fn sample_block_with<W: Weight, R: Rng + ?Sized>(
    sys: &SpinSystem<W>,
    block: &[usize],
    pins: &impl Pinning,
    rng: &mut R,
    weights: &mut Vec<W>,
) -> Result<Vec<Spin>> {
    debug_assert!(block.windows(2).all(|w| w[0] < w[1]), "block must be sorted");
    sys.cap().check_power(sys.q(), block.len())?;
    weights.clear();
    let mut total = W::zero();
    let mut tau = vec![0 as Spin; block.len()];
    block_dfs(sys, block, pins, 0, &W::one(), &mut tau, &mut |_, w| {
        weights.push(w.clone());
        total.add_assign(w);
        true
    });
    if total.is_zero() {
        return Err(Error::ZeroConditionalPartition);
    }
    let chosen = W::sample_index(weights, &total, rng);
    let mut remaining = chosen;
    let mut result = vec![0 as Spin; block.len()];
    block_dfs(sys, block, pins, 0, &W::one(), &mut tau, &mut |leaf, _| {
        if remaining == 0 {
            result.copy_from_slice(leaf);
            false
        } else {
            remaining -= 1;
            true
        }
    });
    Ok(result)
}

/// Worst-case marginal of the current spin at `u` over all assignments of
/// the unpinned part of the block boundary.
///
/// `psi` pins the boundary vertices that are still unresolved elsewhere (the
/// repair set), `s_verts` lists the boundary vertices whose values may vary.
/// Per-component interior weight tables are precomputed once and shared
/// across the boundary enumeration, so the sweep multiplies table rows
/// instead of re-enumerating the block.
pub(crate) fn mu_min_from_parts<W: Weight>(
    sys: &SpinSystem<W>,
    u: usize,
    x_u: Spin,
    psi: &[(usize, Spin)],
    s_verts: &[usize],
    scratch: &mut PinScratch,
) -> Result<W> {
    let q = sys.q();
    scratch.begin();
    for &(v, s) in psi {
        scratch.pin(v, s);
    }
    for &v in s_verts {
        scratch.pin(v, 0);
    }
    // Free component of u and its split around u, under the full boundary
    // pinning (the placeholder values do not matter for the split).
    let (comps, in_comp) = {
        let pins = scratch.view();
        free_split_around(sys, u, &pins)
    };
    // Only boundary vertices adjacent to u's free component influence its
    // marginal; the minimum over the rest is attained trivially.
    let relevant = |v: usize| {
        sys.graph()
            .neighbors(v)
            .iter()
            .any(|&w| w == u || in_comp.contains(&w))
    };
    let s_eff: Vec<usize> = s_verts.iter().copied().filter(|&v| relevant(v)).collect();
    sys.cap().check_power(q, s_eff.len())?;

    // Direct factor of u: activity times edges to pinned vertices, split
    // into the part fixed by psi and a table over u's varying neighbors.
    let s0: Vec<usize> = s_eff
        .iter()
        .copied()
        .filter(|&v| sys.graph().neighbors(u).binary_search(&v).is_ok())
        .collect();
    let mut base = sys.activity(u).to_vec();
    for &(w, eid) in sys.graph().incident(u) {
        if let Some(&(_, sw)) = psi.iter().find(|&&(v, _)| v == w) {
            let m = sys.interaction(eid);
            for (a, slot) in base.iter_mut().enumerate() {
                slot.mul_assign(m.get(a as Spin, sw));
            }
        }
    }
    let direct_table = build_table(sys, &s0, scratch, |sys, scratch| {
        let mut row = base.clone();
        for &w in &s0 {
            let eid = sys.graph().edge_id(u, w).expect("s0 vertices neighbor u");
            let m = sys.interaction(eid);
            let sw = scratch.view().pinned_spin(w).expect("pinned");
            for (a, slot) in row.iter_mut().enumerate() {
                slot.mul_assign(m.get(a as Spin, sw));
            }
        }
        Ok(row)
    })?;

    // One table per component: rows indexed by the assignment of the
    // component's adjacent varying boundary vertices.
    let mut comp_tables: Vec<(Vec<usize>, Vec<Vec<W>>)> = Vec::new();
    for comp in &comps {
        let adjacent: Vec<usize> = s_eff
            .iter()
            .copied()
            .filter(|&v| {
                sys.graph()
                    .neighbors(v)
                    .iter()
                    .any(|w| comp.binary_search(w).is_ok())
            })
            .collect();
        let table = build_table(sys, &adjacent, scratch, |sys, scratch| {
            let mut row = vec![W::zero(); q];
            let pins = scratch.view();
            component_vector(sys, comp, u, &pins, &mut row)?;
            Ok(row)
        })?;
        comp_tables.push((positions(&adjacent, &s_eff), table));
    }
    let direct_positions = positions(&s0, &s_eff);

    let mut best: Option<W> = None;
    let mut combined = vec![W::zero(); q];
    let mut zero_partition = false;
    each_assignment(q, s_eff.len(), |sigma| {
        let row = &direct_table[rank_of(sigma, &direct_positions, q)];
        combined.clone_from_slice(row);
        for (pos_list, table) in &comp_tables {
            let row = &table[rank_of(sigma, pos_list, q)];
            for (slot, f) in combined.iter_mut().zip(row) {
                slot.mul_assign(f);
            }
        }
        let mut total = W::zero();
        for w in &combined {
            total.add_assign(w);
        }
        if total.is_zero() {
            zero_partition = true;
            return false;
        }
        let ratio = combined[x_u as usize].div(&total);
        match &mut best {
            Some(b) if *b <= ratio => {}
            slot => *slot = Some(ratio),
        }
        // A zero minimum cannot be beaten.
        !best.as_ref().is_some_and(Weight::is_zero)
    });
    if zero_partition {
        return Err(Error::ZeroConditionalPartition);
    }
    Ok(best.expect("at least one boundary assignment"))
}

/// Free component of `u` under `pins`, split into the components of that
/// region with `u` removed. Returns the split pieces (sorted, ordered by
/// smallest member) plus the set of all their vertices.
fn free_split_around<W: Weight>(
    sys: &SpinSystem<W>,
    u: usize,
    pins: &impl Pinning,
) -> (Vec<Vec<usize>>, std::collections::HashSet<usize>) {
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for &w in sys.graph().neighbors(u) {
        if pins.pinned_spin(w).is_some() || seen.contains(&w) {
            continue;
        }
        let mut comp = vec![w];
        seen.insert(w);
        let mut head = 0;
        while head < comp.len() {
            let y = comp[head];
            head += 1;
            for &z in sys.graph().neighbors(y) {
                if z != u && pins.pinned_spin(z).is_none() && seen.insert(z) {
                    comp.push(z);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps.sort_by_key(|c| c[0]);
    (comps, seen)
}

/// Build a table with one row per assignment of `coords` (lexicographic
/// order), pinning each assignment into `scratch` before evaluating `row`.
fn build_table<W: Weight>(
    sys: &SpinSystem<W>,
    coords: &[usize],
    scratch: &mut PinScratch,
    mut row: impl FnMut(&SpinSystem<W>, &PinScratch) -> Result<Vec<W>>,
) -> Result<Vec<Vec<W>>> {
    let size = sys.cap().check_power(sys.q(), coords.len())?;
    let mut table = Vec::with_capacity(size as usize);
    let mut failure = None;
    each_assignment(sys.q(), coords.len(), |vals| {
        for (&v, &s) in coords.iter().zip(vals) {
            scratch.pin(v, s);
        }
        match row(sys, scratch) {
            Ok(r) => {
                table.push(r);
                true
            }
            Err(e) => {
                failure = Some(e);
                false
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(table),
    }
}

/// Positions of each element of `subset` within `full` (both sorted).
fn positions(subset: &[usize], full: &[usize]) -> Vec<usize> {
    subset
        .iter()
        .map(|v| full.binary_search(v).expect("subset of enumeration coords"))
        .collect()
}

/// Lexicographic rank of the projection of `sigma` onto `pos_list`.
fn rank_of(sigma: &[Spin], pos_list: &[usize], q: usize) -> usize {
    let mut rank = 0usize;
    for &p in pos_list {
        rank = rank * q + sigma[p] as usize;
    }
    rank
}

/// Repair block around `u`: the ball of the given radius with the rest of
/// the repair set removed, `u` always kept.
pub(crate) fn repair_block(
    graph: &crate::graph::Graph,
    in_repair: impl Fn(usize) -> bool,
    u: usize,
    ell: usize,
) -> Vec<usize> {
    graph
        .ball(u, ell)
        .into_iter()
        .filter(|&v| v == u || !in_repair(v))
        .collect()
}

fn boundary_parts(
    graph: &crate::graph::Graph,
    block: &[usize],
    in_repair: impl Fn(usize) -> bool,
    x: &[Spin],
) -> (Vec<(usize, Spin)>, Vec<usize>) {
    let mut psi = Vec::new();
    let mut s_verts = Vec::new();
    for v in graph.boundary(block) {
        if in_repair(v) {
            psi.push((v, x[v]));
        } else {
            s_verts.push(v);
        }
    }
    (psi, s_verts)
}

/// Worst-case marginal of `x[u]` over all boundary assignments that agree
/// with `x` on the repair set `r` (sorted ascending, must contain `u`).
/// A zero result means some boundary assignment makes the current spin
/// impossible, which can only happen with hard constraints at radius zero.
pub fn mu_min<W: Weight>(
    sys: &SpinSystem<W>,
    r: &[usize],
    u: usize,
    x: &[Spin],
    ell: usize,
) -> Result<W> {
    debug_assert!(r.windows(2).all(|w| w[0] < w[1]), "repair set must be sorted");
    assert!(r.binary_search(&u).is_ok(), "u must be in the repair set");
    let in_r = |v: usize| r.binary_search(&v).is_ok();
    let block = repair_block(sys.graph(), in_r, u, ell);
    let (psi, s_verts) = boundary_parts(sys.graph(), &block, in_r, x);
    let mut scratch = PinScratch::new(sys.n());
    mu_min_from_parts(sys, u, x[u], &psi, &s_verts, &mut scratch)
}

/// Marginal of `x[u]` with the unpinned boundary held at one reference
/// assignment, scaled down by a slack factor depending on the sphere size
/// at the next radius. Cheaper than the worst-case minimum; a valid filter
/// numerator whenever marginals at that distance are insensitive enough,
/// which the ratio probe can certify on small instances.
pub fn mu_low<W: Weight>(
    sys: &SpinSystem<W>,
    r: &[usize],
    u: usize,
    x: &[Spin],
    ell: usize,
    reference_spin: Spin,
    slack: impl Fn(usize) -> W,
) -> Result<W> {
    debug_assert!(r.windows(2).all(|w| w[0] < w[1]), "repair set must be sorted");
    assert!(r.binary_search(&u).is_ok(), "u must be in the repair set");
    assert!((reference_spin as usize) < sys.q(), "reference spin out of range");
    let in_r = |v: usize| r.binary_search(&v).is_ok();
    let block = repair_block(sys.graph(), in_r, u, ell);
    let (psi, s_verts) = boundary_parts(sys.graph(), &block, in_r, x);
    let sphere_size = sys.graph().sphere(u, ell + 1).len();
    let mut scratch = PinScratch::new(sys.n());
    mu_low_from_parts(sys, u, x[u], &psi, &s_verts, sphere_size, reference_spin, slack, &mut scratch)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn mu_low_from_parts<W: Weight>(
    sys: &SpinSystem<W>,
    u: usize,
    x_u: Spin,
    psi: &[(usize, Spin)],
    s_verts: &[usize],
    sphere_size: usize,
    reference_spin: Spin,
    slack: impl Fn(usize) -> W,
    scratch: &mut PinScratch,
) -> Result<W> {
    scratch.begin();
    for &(v, s) in psi {
        scratch.pin(v, s);
    }
    for &v in s_verts {
        scratch.pin(v, reference_spin);
    }
    let mut weights = Vec::new();
    {
        let pins = scratch.view();
        marginal_weights(sys, u, &pins, &mut weights)?;
    }
    let mut total = W::zero();
    for w in &weights {
        total.add_assign(w);
    }
    if total.is_zero() {
        return Err(Error::ZeroConditionalPartition);
    }
    let reference_marginal = weights[x_u as usize].div(&total);
    Ok(reference_marginal.mul(&slack(sphere_size)))
}

/// Default slack for [`mu_low`]: `1 - 1/(5m)` for sphere size `m`, and `1`
/// when the sphere is empty (the boundary is then fully pinned, so the
/// reference marginal is already exact).
pub fn default_slack<W: Weight>(sphere_size: usize) -> W {
    if sphere_size == 0 {
        W::one()
    } else {
        let m = 5 * sphere_size as u64;
        W::from_ratio(m - 1, m)
    }
}

/// Exact Gibbs distribution by full enumeration, zero-weight configurations
/// dropped. The reference oracle for every statistical test.
pub fn brute_force_distribution<W: Weight>(
    sys: &SpinSystem<W>,
) -> Result<DiscreteDistribution<W>> {
    sys.cap().check_power(sys.q(), sys.n())?;
    let mut outcomes = Vec::new();
    let mut weights = Vec::new();
    let mut total = W::zero();
    each_assignment(sys.q(), sys.n(), |cfg| {
        let w = sys.weight(cfg);
        if !w.is_zero() {
            outcomes.push(cfg.to_vec());
            total.add_assign(&w);
            weights.push(w);
        }
        true
    });
    if weights.is_empty() {
        return Err(Error::ZeroPartition);
    }
    let probs = weights.iter().map(|w| w.div(&total)).collect();
    DiscreteDistribution::new(outcomes, probs)
}
