//! Dynamic sampling: carry an exact sample across an instance update.
//!
//! An update replaces vertex activity vectors and edge matrices, and may add
//! new edges; vertices are never added or removed. The repaired sample stays
//! exact because the old configuration outside the touched region is already
//! distributed as the new conditional law: only the updated vertices and
//! their boundary need repair, so the filter loop runs on a repair set of
//! size |D ∪ ∂D| instead of n.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::Weight;
use crate::sampler::{RepairState, RunStats, Sampler, SamplerConfig};
use crate::system::{Spin, SpinSystem, SymmetricMatrix};

/// Replacement values for an update. Edges may be existing (matrix
/// replacement) or new (edge insertion); deletion is not supported.
#[derive(Clone, Debug)]
pub struct UpdateBatch<W> {
    pub vertices: Vec<(usize, Vec<W>)>,
    pub edges: Vec<((usize, usize), SymmetricMatrix<W>)>,
}

impl<W: Weight> UpdateBatch<W> {
    pub fn empty() -> Self {
        UpdateBatch { vertices: Vec::new(), edges: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() && self.edges.is_empty()
    }

    /// The updated vertex set D: listed vertices plus endpoints of listed
    /// edges, sorted.
    pub fn domain(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.vertices.iter().map(|&(v, _)| v).collect();
        for &((u, v), _) in &self.edges {
            d.push(u);
            d.push(v);
        }
        d.sort_unstable();
        d.dedup();
        d
    }

    fn validate(&self, sys: &SpinSystem<W>) -> Result<()> {
        let n = sys.n();
        let mut verts: Vec<usize> = self.vertices.iter().map(|&(v, _)| v).collect();
        verts.sort_unstable();
        if verts.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInstance("vertex updated twice in one batch".into()));
        }
        for &(v, ref b) in &self.vertices {
            if v >= n {
                return Err(Error::VertexOutOfRange { vertex: v, n });
            }
            if b.len() != sys.q() {
                return Err(Error::InvalidInstance(format!(
                    "replacement vector for vertex {v} has length {}, expected {}",
                    b.len(),
                    sys.q()
                )));
            }
        }
        let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(self.edges.len());
        for &((u, v), ref m) in &self.edges {
            for w in [u, v] {
                if w >= n {
                    return Err(Error::VertexOutOfRange { vertex: w, n });
                }
            }
            if u == v {
                return Err(Error::SelfLoop { vertex: u });
            }
            if m.q() != sys.q() {
                return Err(Error::InvalidInstance(format!(
                    "replacement matrix for edge ({u},{v}) has size {}, expected {}",
                    m.q(),
                    sys.q()
                )));
            }
            pairs.push((u.min(v), u.max(v)));
        }
        pairs.sort_unstable();
        if let Some(w) = pairs.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateEdge { u: w[0].0, v: w[0].1 });
        }
        Ok(())
    }
}

/// Build the updated instance. The input is untouched; edge ids are
/// reassigned because new edges land in canonical order.
pub fn apply_update<W: Weight>(
    sys: &SpinSystem<W>,
    batch: &UpdateBatch<W>,
) -> Result<SpinSystem<W>> {
    batch.validate(sys)?;
    let mut b: Vec<Vec<W>> = (0..sys.n()).map(|v| sys.activity(v).to_vec()).collect();
    for &(v, ref bv) in &batch.vertices {
        b[v] = bv.clone();
    }
    let mut entries: Vec<((usize, usize), SymmetricMatrix<W>)> = sys
        .graph()
        .edges()
        .iter()
        .enumerate()
        .map(|(id, &pair)| (pair, sys.interaction(id).clone()))
        .collect();
    for &((u, v), ref m) in &batch.edges {
        let key = (u.min(v), u.max(v));
        match sys.graph().edge_id(u, v) {
            Some(id) => entries[id] = (key, m.clone()),
            None => entries.push((key, m.clone())),
        }
    }
    entries.sort_by_key(|&(pair, _)| pair);
    let pairs: Vec<(usize, usize)> = entries.iter().map(|&(pair, _)| pair).collect();
    let mats: Vec<SymmetricMatrix<W>> = entries.into_iter().map(|(_, m)| m).collect();
    let graph = crate::graph::Graph::new(sys.n(), &pairs)?;
    let mut updated = SpinSystem::new(graph, sys.q(), b, mats)?;
    updated.set_cap(sys.cap());
    Ok(updated)
}

/// Result of one dynamic repair.
#[derive(Clone, Debug)]
pub struct DynamicOutcome<W> {
    pub system: SpinSystem<W>,
    pub x: Vec<Spin>,
    pub stats: RunStats,
    /// |D ∪ ∂D|, the initial repair set size.
    pub repair_size: usize,
}

/// Greedy local repair of `x` on `d` in the updated system: ascending
/// vertex order, lowest spin with positive activity that is consistent with
/// every already-assigned neighbor. Reads x only on D and its boundary,
/// writes only on D. Fails when no spin fits, which certifies the updated
/// instance non-permissive.
fn greedy_repair<W: Weight>(sys: &SpinSystem<W>, d: &[usize], x: &mut [Spin]) -> Result<()> {
    #[cfg(debug_assertions)]
    let read_set: std::collections::HashSet<usize> = {
        let mut s: std::collections::HashSet<usize> = d.iter().copied().collect();
        s.extend(sys.graph().boundary(d));
        s
    };
    let in_d = |v: usize| d.binary_search(&v).is_ok();
    let mut repaired = vec![false; 0];
    repaired.resize(sys.n(), false);
    for &v in d {
        let mut chosen = None;
        'spins: for a in 0..sys.q() as Spin {
            if sys.activity(v)[a as usize].is_zero() {
                continue;
            }
            for &(w, eid) in sys.graph().incident(v) {
                // Unrepaired update vertices have no committed value yet.
                if in_d(w) && !repaired[w] {
                    continue;
                }
                #[cfg(debug_assertions)]
                debug_assert!(read_set.contains(&w), "greedy repair read outside D and its boundary");
                if sys.interaction(eid).get(a, x[w]).is_zero() {
                    continue 'spins;
                }
            }
            chosen = Some(a);
            break;
        }
        match chosen {
            Some(a) => {
                x[v] = a;
                repaired[v] = true;
            }
            None => return Err(Error::InfeasibleGreedyStep { vertex: v }),
        }
    }
    Ok(())
}

/// Apply `batch` to `sys` and repair `x` (assumed an exact sample of the
/// old instance) into an exact sample of the updated one. An empty update
/// returns `x` unchanged.
pub fn dynamic_sample<W: Weight, R: Rng + ?Sized>(
    sys: &SpinSystem<W>,
    x: &[Spin],
    batch: &UpdateBatch<W>,
    config: SamplerConfig,
    rng: &mut R,
) -> Result<DynamicOutcome<W>> {
    assert_eq!(x.len(), sys.n(), "configuration length mismatch");
    let updated = apply_update(sys, batch)?;
    let d = batch.domain();
    if d.is_empty() {
        return Ok(DynamicOutcome {
            system: updated,
            x: x.to_vec(),
            stats: RunStats::default(),
            repair_size: 0,
        });
    }
    let mut x_new = x.to_vec();
    greedy_repair(&updated, &d, &mut x_new)?;
    let mut repair: Vec<usize> = d.clone();
    repair.extend(updated.graph().boundary(&d));
    repair.sort_unstable();
    let state = RepairState::new(x_new, &repair);
    let repair_size = repair.len();
    let mut sampler = Sampler::new(&updated, config);
    let (x_final, stats) = sampler.resume(state, rng)?;
    Ok(DynamicOutcome { system: updated, x: x_final, stats, repair_size })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::sampler::run;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn coloring_matrix(q: usize) -> SymmetricMatrix<f64> {
        SymmetricMatrix::from_fn(q, |a, b| if a == b { 0.0 } else { 1.0 }).unwrap()
    }

    fn path3_coloring(q: usize) -> SpinSystem<f64> {
        let g = Graph::new(3, &[(0, 1), (1, 2)]).unwrap();
        SpinSystem::new(g, q, vec![vec![1.0; q]; 3], vec![coloring_matrix(q); 2]).unwrap()
    }

    #[test]
    fn empty_update_is_identity() {
        let sys = path3_coloring(3);
        let batch = UpdateBatch::empty();
        let updated = apply_update(&sys, &batch).unwrap();
        assert_eq!(updated.graph().edges(), sys.graph().edges());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, _) = run(&sys, SamplerConfig::default(), &mut rng).unwrap();
        let out = dynamic_sample(&sys, &x, &batch, SamplerConfig::default(), &mut rng).unwrap();
        assert_eq!(out.x, x);
        assert_eq!(out.stats.iterations, 0);
        assert_eq!(out.repair_size, 0);
    }

    #[test]
    fn add_edge_to_edgeless_pair() {
        let g = Graph::new(2, &[]).unwrap();
        let sys = SpinSystem::new(g, 3, vec![vec![1.0; 3]; 2], vec![]).unwrap();
        let batch = UpdateBatch {
            vertices: vec![],
            edges: vec![((1, 0), coloring_matrix(3))],
        };
        let updated = apply_update(&sys, &batch).unwrap();
        assert_eq!(updated.graph().edges(), &[(0, 1)]);
        assert_eq!(*updated.interaction(0).get(0, 0), 0.0);
        assert_eq!(batch.domain(), vec![0, 1]);
        // Original untouched.
        assert_eq!(sys.graph().m(), 0);
    }

    #[test]
    fn replace_vertex_vector_only_changes_that_vertex() {
        let sys = path3_coloring(3);
        let batch = UpdateBatch {
            vertices: vec![(0, vec![1.0, 3.0, 0.0])],
            edges: vec![],
        };
        let updated = apply_update(&sys, &batch).unwrap();
        assert_eq!(updated.activity(0), &[1.0, 3.0, 0.0]);
        assert_eq!(updated.activity(1), &[1.0, 1.0, 1.0]);
        assert_eq!(batch.domain(), vec![0]);
    }

    #[test]
    fn edge_id_remapping_keeps_matrices_attached() {
        // Path 0-2, 2-3 plus a new edge (0,1) that lands before both in
        // canonical order, shifting every edge id.
        let g = Graph::new(4, &[(0, 2), (2, 3)]).unwrap();
        let soft = SymmetricMatrix::new(3, vec![
            vec![5.0, 1.0, 1.0],
            vec![1.0, 5.0, 1.0],
            vec![1.0, 1.0, 5.0],
        ])
        .unwrap();
        let sys = SpinSystem::new(
            g,
            3,
            vec![vec![1.0; 3]; 4],
            vec![coloring_matrix(3), soft.clone()],
        )
        .unwrap();
        let batch = UpdateBatch {
            vertices: vec![],
            edges: vec![((0, 1), soft.clone())],
        };
        let updated = apply_update(&sys, &batch).unwrap();
        assert_eq!(updated.graph().edges(), &[(0, 1), (0, 2), (2, 3)]);
        assert_eq!(*updated.interaction(0).get(0, 0), 5.0);
        assert_eq!(*updated.interaction(1).get(0, 0), 0.0, "old coloring edge keeps its matrix");
        assert_eq!(*updated.interaction(2).get(0, 0), 5.0);
    }

    #[test]
    fn update_validation_rejects_bad_batches() {
        let sys = path3_coloring(3);
        let dup = UpdateBatch {
            vertices: vec![],
            edges: vec![((0, 2), coloring_matrix(3)), ((2, 0), coloring_matrix(3))],
        };
        assert!(matches!(apply_update(&sys, &dup), Err(Error::DuplicateEdge { .. })));
        let out_of_range = UpdateBatch::<f64> {
            vertices: vec![(9, vec![1.0; 3])],
            edges: vec![],
        };
        assert!(matches!(
            apply_update(&sys, &out_of_range),
            Err(Error::VertexOutOfRange { .. })
        ));
        let bad_len = UpdateBatch::<f64> {
            vertices: vec![(0, vec![1.0; 2])],
            edges: vec![],
        };
        assert!(apply_update(&sys, &bad_len).is_err());
        let twice = UpdateBatch::<f64> {
            vertices: vec![(0, vec![1.0; 3]), (0, vec![2.0; 3])],
            edges: vec![],
        };
        assert!(apply_update(&sys, &twice).is_err());
    }

    #[test]
    fn dynamic_output_is_feasible_in_the_new_instance() {
        // Forbidding color 0 at the middle vertex makes the updated
        // instance non-permissive: endpoint colors {1,2} leave nothing for
        // the middle, and exactly then the greedy repair must reject.
        let sys = path3_coloring(3);
        let batch = UpdateBatch {
            vertices: vec![(1, vec![0.0, 1.0, 1.0])],
            edges: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut successes = 0;
        let mut rejections = 0;
        for _ in 0..60 {
            let (x, _) = run(&sys, SamplerConfig::default(), &mut rng).unwrap();
            let stuck = (x[0].min(x[2]), x[0].max(x[2])) == (1, 2);
            match dynamic_sample(&sys, &x, &batch, SamplerConfig::default(), &mut rng) {
                Ok(out) => {
                    assert!(!stuck);
                    assert!(out.system.is_feasible(&out.x));
                    assert_ne!(out.x[1], 0, "forbidden spin must not appear");
                    assert_eq!(out.repair_size, 3, "D = {{1}}, boundary = {{0, 2}}");
                    successes += 1;
                }
                Err(Error::InfeasibleGreedyStep { vertex: 1 }) => {
                    assert!(stuck, "rejection only when both remaining colors are taken");
                    rejections += 1;
                }
                Err(other) => panic!("unexpected error {other:?}"),
            }
        }
        assert!(successes > 0 && rejections > 0, "seed must exercise both branches");
    }

    #[test]
    fn repair_work_tracks_update_size_not_instance_size() {
        // Weak coupling keeps the exact-minimum filter accepting often, so
        // runs drain the repair set at every grid size.
        let stronger = SymmetricMatrix::from_fn(2, |a, b| {
            if a == b {
                (0.1f64).exp()
            } else {
                (-0.1f64).exp()
            }
        })
        .unwrap();
        let mut means = Vec::new();
        for side in [8usize, 16] {
            let g = crate::instances::grid_graph(side, side, false).unwrap();
            let sys =
                crate::instances::ising_instance(g, 0.05, &vec![(1.0, 1.0); side * side])
                    .unwrap();
            // Replace one interior edge; D is its two endpoints, so the
            // repair set has at most eight vertices at either size.
            let u = side * (side / 2) + side / 2 - 1;
            let batch = UpdateBatch {
                vertices: vec![],
                edges: vec![((u, u + 1), stronger.clone())],
            };
            let trials = 60u64;
            let mut total = 0u64;
            for trial in 0..trials {
                let mut rng = ChaCha8Rng::seed_from_u64(0xD0 ^ trial);
                let (x, _) = run(&sys, SamplerConfig::default(), &mut rng).unwrap();
                let out =
                    dynamic_sample(&sys, &x, &batch, SamplerConfig::default(), &mut rng).unwrap();
                assert!(out.repair_size <= 8);
                total += out.stats.iterations;
            }
            means.push(total as f64 / trials as f64);
        }
        let (small, large) = (means[0], means[1]);
        assert!(
            large <= 2.0 * small && small <= 2.0 * large,
            "repair work drifted with n: {means:?}"
        );
        assert!(large < 64.0, "repair should stay local, mean T {large}");
    }

    #[test]
    fn greedy_repair_failure_signals_non_permissive_update() {
        // Two-coloring: adding the third triangle edge leaves no proper
        // 2-coloring at all, and the greedy step discovers it locally.
        let g = Graph::new(3, &[(0, 1), (0, 2)]).unwrap();
        let sys = SpinSystem::new(
            g,
            2,
            vec![vec![1.0; 2]; 3],
            vec![coloring_matrix(2); 2],
        )
        .unwrap();
        let x = sys.greedy_feasible().unwrap();
        let batch = UpdateBatch {
            vertices: vec![],
            edges: vec![((1, 2), coloring_matrix(2))],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err =
            dynamic_sample(&sys, &x, &batch, SamplerConfig::default(), &mut rng).unwrap_err();
        assert!(matches!(err, Error::InfeasibleGreedyStep { vertex: 2 }));
    }

    #[test]
    fn greedy_repair_reads_old_values_on_the_boundary() {
        // Forbid the current color of the middle path vertex. A repair
        // color exists exactly when the endpoints agree; the greedy must
        // succeed then (reading the unchanged endpoint values) and reject
        // otherwise.
        let sys = path3_coloring(3);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..30 {
            let (x, _) = run(&sys, SamplerConfig::default(), &mut rng).unwrap();
            let mut forbid = vec![1.0; 3];
            forbid[x[1] as usize] = 0.0;
            let batch = UpdateBatch { vertices: vec![(1, forbid)], edges: vec![] };
            match dynamic_sample(&sys, &x, &batch, SamplerConfig::default(), &mut rng) {
                Ok(out) => {
                    assert_eq!(x[0], x[2]);
                    assert!(out.system.is_feasible(&out.x));
                }
                Err(Error::InfeasibleGreedyStep { vertex: 1 }) => assert_ne!(x[0], x[2]),
                Err(other) => panic!("unexpected error {other:?}"),
            }
        }
    }
}
