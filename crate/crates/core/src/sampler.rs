//! The filtered block sampler: a random-scan repair process whose
//! termination certifies that the output is an exact Gibbs draw.
//!
//! State is a pair (X, R): a feasible configuration plus a repair set of
//! vertices whose spins are not yet correctly distributed. The invariant is
//! that X outside R follows the Gibbs conditional given X on R. One step
//! picks u from R by rank, forms the block around u (the radius-ell ball
//! with the rest of R carved out, u always kept), and flips a filter coin
//! with success probability numerator/denominator, where the denominator is
//! the marginal of X_u given the actual block boundary and the numerator is
//! a boundary-independent lower bound on that marginal. On success the
//! block is redrawn from its conditional law and u leaves R; on failure the
//! block boundary joins R. Both branches preserve the invariant, so R = ∅
//! certifies X ~ μ exactly. Any numerator that never exceeds the true
//! marginal keeps this exact, which is what licenses the cheaper
//! reference-boundary bound alongside the worst-case one.

use std::time::{Duration, Instant};

use rand::Rng;

use crate::error::{Error, Result};
use crate::inference::{
    default_slack, marginal_weights, mu_low_from_parts, mu_min_from_parts, sample_block_with,
    PinScratch,
};
use crate::numeric::Weight;
use crate::system::{Spin, SpinSystem};

/// How the filter numerator is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterMode {
    /// Exact minimum of the marginal over all assignments of the unpinned
    /// boundary. Enumerates boundary patterns, so only affordable when the
    /// block boundary is small or the spin count modest.
    MuMin,
    /// Marginal under one reference boundary assignment, scaled by
    /// `1 - 1/(5m)` for sphere size m at the next radius. Constant cost per
    /// step; exactness then relies on marginals at that distance moving by
    /// less than the slack, which the ratio probe can certify.
    MuLow { reference_spin: Spin },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerConfig {
    /// Block radius around the chosen vertex.
    pub ell: usize,
    pub filter_mode: FilterMode,
    /// Abort a run after this many steps; the partial state is discarded
    /// and the run reports how many vertices were still unresolved.
    pub max_iterations: Option<u64>,
    /// Record |R| after every step.
    pub record_r_trace: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            ell: 1,
            filter_mode: FilterMode::MuMin,
            max_iterations: None,
            record_r_trace: false,
        }
    }
}

/// Counters for one run. `iterations` is the number of filter steps, not
/// the number of successes.
#[derive(Clone, Debug, Default)]
pub struct RunStats {
    pub iterations: u64,
    pub filter_successes: u64,
    pub filter_failures: u64,
    /// Vertices newly added to the repair set by failed filters.
    pub boundary_added: u64,
    /// Steps whose numerator exceeded the denominator and was clamped to
    /// one. Always zero with the worst-case numerator; with the reference
    /// numerator a nonzero count means the slack was not actually valid and
    /// the output may be biased.
    pub clamped_filters: u64,
    pub wall: Duration,
    /// |R| after each step, starting with the initial size.
    pub r_trace: Option<Vec<usize>>,
}

/// Set of vertices supporting O(log n) insert, remove, and selection of the
/// k-th smallest member. A Fenwick tree over membership counts keeps the
/// rank-based pick cheap even when the repair set churns.
#[derive(Clone, Debug)]
pub(crate) struct RankSet {
    tree: Vec<u32>,
    member: Vec<bool>,
    len: usize,
    // Highest power of two not exceeding the capacity, for select descent.
    top: usize,
}

impl RankSet {
    pub fn new(n: usize) -> Self {
        let top = if n == 0 { 0 } else { usize::pow(2, n.ilog2()) };
        RankSet { tree: vec![0; n + 1], member: vec![false; n], len: 0, top }
    }

    pub fn full(n: usize) -> Self {
        let mut s = Self::new(n);
        for v in 0..n {
            s.insert(v);
        }
        s
    }

    pub fn from_sorted(n: usize, verts: &[usize]) -> Self {
        let mut s = Self::new(n);
        for &v in verts {
            s.insert(v);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, v: usize) -> bool {
        self.member[v]
    }

    pub fn insert(&mut self, v: usize) -> bool {
        if self.member[v] {
            return false;
        }
        self.member[v] = true;
        self.len += 1;
        let mut i = v + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
        true
    }

    pub fn remove(&mut self, v: usize) -> bool {
        if !self.member[v] {
            return false;
        }
        self.member[v] = false;
        self.len -= 1;
        let mut i = v + 1;
        while i < self.tree.len() {
            self.tree[i] -= 1;
            i += i & i.wrapping_neg();
        }
        true
    }

    /// k-th smallest member, zero-based.
    pub fn select(&self, k: usize) -> usize {
        debug_assert!(k < self.len);
        let mut pos = 0usize;
        let mut rem = k as u32 + 1;
        let mut step = self.top;
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] < rem {
                pos = next;
                rem -= self.tree[pos];
            }
            step >>= 1;
        }
        pos
    }

    pub fn to_vec(&self) -> Vec<usize> {
        (0..self.member.len()).filter(|&v| self.member[v]).collect()
    }
}

/// Sampler state: a feasible configuration plus the repair set.
#[derive(Clone, Debug)]
pub struct RepairState {
    x: Vec<Spin>,
    r: RankSet,
}

impl RepairState {
    /// Build a state from an explicit configuration and repair set. The
    /// caller asserts that x is feasible and correctly distributed outside
    /// the repair set; nothing here can check the latter.
    pub fn new(x: Vec<Spin>, repair: &[usize]) -> Self {
        debug_assert!(repair.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(repair.iter().all(|&v| v < x.len()));
        let r = RankSet::from_sorted(x.len(), repair);
        RepairState { x, r }
    }

    pub fn configuration(&self) -> &[Spin] {
        &self.x
    }

    pub fn repair_set(&self) -> Vec<usize> {
        self.r.to_vec()
    }

    pub fn unresolved(&self) -> usize {
        self.r.len()
    }

    pub fn is_resolved(&self) -> bool {
        self.r.is_empty()
    }
}

/// Diagnostics for a single filter step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub chosen: usize,
    pub accepted: bool,
    /// Filter numerator and denominator as floats, for inspection only; the
    /// coin itself is flipped in the working arithmetic.
    pub numerator: f64,
    pub denominator: f64,
    pub clamped: bool,
    pub block_len: usize,
    /// Vertices newly added to the repair set (zero on success).
    pub boundary_added: usize,
}

pub struct Sampler<'a, W: Weight> {
    sys: &'a SpinSystem<W>,
    config: SamplerConfig,
    pins: PinScratch,
    // Stamped scratch so a step never touches memory proportional to n.
    ball_mark: Vec<u32>,
    block_mark: Vec<u32>,
    bnd_mark: Vec<u32>,
    stamp: u32,
    block: Vec<usize>,
    boundary: Vec<usize>,
    queue: Vec<(usize, usize)>,
    psi: Vec<(usize, Spin)>,
    s_verts: Vec<usize>,
    marg_buf: Vec<W>,
    weights_buf: Vec<W>,
}

impl<'a, W: Weight> Sampler<'a, W> {
    pub fn new(sys: &'a SpinSystem<W>, config: SamplerConfig) -> Self {
        if let FilterMode::MuLow { reference_spin } = config.filter_mode {
            assert!((reference_spin as usize) < sys.q(), "reference spin out of range");
        }
        let n = sys.n();
        Sampler {
            sys,
            config,
            pins: PinScratch::new(n),
            ball_mark: vec![0; n],
            block_mark: vec![0; n],
            bnd_mark: vec![0; n],
            stamp: 0,
            block: Vec::new(),
            boundary: Vec::new(),
            queue: Vec::new(),
            psi: Vec::new(),
            s_verts: Vec::new(),
            marg_buf: Vec::new(),
            weights_buf: Vec::new(),
        }
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    /// Greedy feasible start with every vertex unresolved.
    pub fn init(&self) -> Result<RepairState> {
        let x = self.sys.greedy_feasible()?;
        Ok(RepairState { x, r: RankSet::full(self.sys.n()) })
    }

    /// Resolve the block around the chosen vertex. Fills `self.block`,
    /// `self.boundary`, `self.psi`, `self.s_verts`; returns the sphere size
    /// at radius ell+1 (only consumed by the reference-boundary filter).
    fn resolve_block(&mut self, state: &RepairState, u: usize) -> usize {
        self.stamp += 1;
        let s = self.stamp;
        let g = self.sys.graph();
        self.queue.clear();
        self.queue.push((u, 0));
        self.ball_mark[u] = s;
        self.block.clear();
        let mut sphere_next = 0usize;
        let mut head = 0;
        while head < self.queue.len() {
            let (v, d) = self.queue[head];
            head += 1;
            if d <= self.config.ell {
                if v == u || !state.r.contains(v) {
                    self.block.push(v);
                }
            } else {
                sphere_next += 1;
            }
            if d <= self.config.ell {
                for &w in g.neighbors(v) {
                    if self.ball_mark[w] != s {
                        self.ball_mark[w] = s;
                        self.queue.push((w, d + 1));
                    }
                }
            }
        }
        self.block.sort_unstable();
        for &v in &self.block {
            self.block_mark[v] = s;
        }
        self.boundary.clear();
        for &v in &self.block {
            for &w in g.neighbors(v) {
                if self.block_mark[w] != s && self.bnd_mark[w] != s {
                    self.bnd_mark[w] = s;
                    self.boundary.push(w);
                }
            }
        }
        self.boundary.sort_unstable();
        self.psi.clear();
        self.s_verts.clear();
        for &v in &self.boundary {
            if state.r.contains(v) {
                self.psi.push((v, state.x[v]));
            } else {
                self.s_verts.push(v);
            }
        }
        sphere_next
    }

    /// One filter step. The draw order is fixed: one uniform for the vertex
    /// pick, one coin for the filter, and only on success the block draw.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        state: &mut RepairState,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        assert!(!state.r.is_empty(), "step on a resolved state");
        let pick: f64 = rng.random();
        let idx = ((pick * state.r.len() as f64) as usize).min(state.r.len() - 1);
        let u = state.r.select(idx);
        let sphere_next = self.resolve_block(state, u);

        // Denominator: marginal of the current spin given the actual
        // boundary values.
        self.pins.begin();
        for &v in &self.boundary {
            self.pins.pin(v, state.x[v]);
        }
        {
            let view = self.pins.view();
            marginal_weights(self.sys, u, &view, &mut self.marg_buf)?;
        }
        let mut total = W::zero();
        for w in &self.marg_buf {
            total.add_assign(w);
        }
        if total.is_zero() {
            return Err(Error::ZeroConditionalPartition);
        }
        let den = self.marg_buf[state.x[u] as usize].div(&total);
        debug_assert!(!den.is_zero(), "current configuration must be feasible");

        let num = match self.config.filter_mode {
            FilterMode::MuMin => {
                mu_min_from_parts(self.sys, u, state.x[u], &self.psi, &self.s_verts, &mut self.pins)?
            }
            FilterMode::MuLow { reference_spin } => mu_low_from_parts(
                self.sys,
                u,
                state.x[u],
                &self.psi,
                &self.s_verts,
                sphere_next,
                reference_spin,
                default_slack::<W>,
                &mut self.pins,
            )?,
        };

        let p = num.div(&den);
        let clamped = p > W::one();
        let accepted = W::bernoulli(&p, rng);
        let outcome = if accepted {
            self.pins.begin();
            for &v in &self.boundary {
                self.pins.pin(v, state.x[v]);
            }
            let drawn = {
                let view = self.pins.view();
                sample_block_with(self.sys, &self.block, &view, rng, &mut self.weights_buf)?
            };
            for (&v, &s) in self.block.iter().zip(&drawn) {
                state.x[v] = s;
            }
            state.r.remove(u);
            StepOutcome {
                chosen: u,
                accepted: true,
                numerator: num.to_f64(),
                denominator: den.to_f64(),
                clamped,
                block_len: self.block.len(),
                boundary_added: 0,
            }
        } else {
            let mut added = 0;
            for &v in &self.boundary {
                if state.r.insert(v) {
                    added += 1;
                }
            }
            StepOutcome {
                chosen: u,
                accepted: false,
                numerator: num.to_f64(),
                denominator: den.to_f64(),
                clamped,
                block_len: self.block.len(),
                boundary_added: added,
            }
        };
        #[cfg(debug_assertions)]
        self.assert_locally_feasible(&state.x);
        Ok(outcome)
    }

    /// Drive a state to resolution. On interruption the state is discarded;
    /// restarting from scratch is the unbiased way to continue.
    pub fn resume<R: Rng + ?Sized>(
        &mut self,
        mut state: RepairState,
        rng: &mut R,
    ) -> Result<(Vec<Spin>, RunStats)> {
        let start = Instant::now();
        let mut stats = RunStats::default();
        if self.config.record_r_trace {
            stats.r_trace = Some(vec![state.r.len()]);
        }
        while !state.r.is_empty() {
            if self.config.max_iterations.is_some_and(|m| stats.iterations >= m) {
                stats.wall = start.elapsed();
                let unresolved = state.r.len();
                return Err(Error::Interrupted { stats: Box::new(stats), unresolved });
            }
            let out = self.step(&mut state, rng)?;
            stats.iterations += 1;
            if out.accepted {
                stats.filter_successes += 1;
            } else {
                stats.filter_failures += 1;
                stats.boundary_added += out.boundary_added as u64;
            }
            if out.clamped {
                stats.clamped_filters += 1;
            }
            if let Some(trace) = &mut stats.r_trace {
                trace.push(state.r.len());
            }
        }
        stats.wall = start.elapsed();
        debug_assert!(self.sys.is_feasible(&state.x));
        Ok((state.x, stats))
    }

    pub fn run<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(Vec<Spin>, RunStats)> {
        let state = self.init()?;
        self.resume(state, rng)
    }

    /// Every factor touching the block must stay positive after a step.
    #[cfg(debug_assertions)]
    fn assert_locally_feasible(&self, x: &[Spin]) {
        for &v in &self.block {
            assert!(!self.sys.activity(v)[x[v] as usize].is_zero());
            for &(w, eid) in self.sys.graph().incident(v) {
                assert!(
                    !self.sys.interaction(eid).get(x[v], x[w]).is_zero(),
                    "edge ({v},{w}) violated after a step"
                );
            }
        }
    }
}

/// One exact sample with the given configuration.
pub fn run<W: Weight, R: Rng + ?Sized>(
    sys: &SpinSystem<W>,
    config: SamplerConfig,
    rng: &mut R,
) -> Result<(Vec<Spin>, RunStats)> {
    Sampler::new(sys, config).run(rng)
}

/// Radius-zero specialization. The block is always the chosen vertex alone,
/// so the worst-case numerator ranges over its neighborhood; with hard
/// constraints that minimum is zero and the process cannot terminate, so
/// systems with any zero weight are rejected up front.
pub fn run_single_site<W: Weight, R: Rng + ?Sized>(
    sys: &SpinSystem<W>,
    max_iterations: Option<u64>,
    rng: &mut R,
) -> Result<(Vec<Spin>, RunStats)> {
    if !sys.is_soft() {
        return Err(Error::HardConstraintRejected {
            place: "single-site sampler requires strictly positive weights".into(),
        });
    }
    let config = SamplerConfig {
        ell: 0,
        filter_mode: FilterMode::MuMin,
        max_iterations,
        record_r_trace: false,
    };
    run(sys, config, rng)
}

/// Negative control: the same scan with the filter removed. Each chosen
/// vertex is resampled from its single-site conditional and immediately
/// leaves the repair set, so the process is a single random-order sweep.
/// This is NOT an exact sampler; it exists so tests can demonstrate that
/// removing the filter produces measurably wrong output.
pub fn run_without_filter<W: Weight, R: Rng + ?Sized>(
    sys: &SpinSystem<W>,
    rng: &mut R,
) -> Result<(Vec<Spin>, RunStats)> {
    let start = Instant::now();
    let mut x = sys.greedy_feasible()?;
    let mut r = RankSet::full(sys.n());
    let mut pins = PinScratch::new(sys.n());
    let mut weights = Vec::new();
    let mut stats = RunStats::default();
    while !r.is_empty() {
        let pick: f64 = rng.random();
        let idx = ((pick * r.len() as f64) as usize).min(r.len() - 1);
        let u = r.select(idx);
        pins.begin();
        for &w in sys.graph().neighbors(u) {
            pins.pin(w, x[w]);
        }
        let drawn = {
            let view = pins.view();
            sample_block_with(sys, &[u], &view, rng, &mut weights)?
        };
        x[u] = drawn[0];
        r.remove(u);
        stats.iterations += 1;
        stats.filter_successes += 1;
    }
    stats.wall = start.elapsed();
    Ok((x, stats))
}
