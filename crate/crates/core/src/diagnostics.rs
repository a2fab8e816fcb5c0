//! Statistical verification, brute-force probes for the analytic conditions
//! behind the sampler's drift bound, and the scaling benchmark.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::inference::{marginal, mu_min, DiscreteDistribution};
use crate::numeric::Weight;
use crate::sampler::{run, RunStats, SamplerConfig};
use crate::system::{each_assignment, PartialConfiguration, Spin, SpinSystem};

/// Half the L1 distance between two distributions on the same outcome list.
pub fn tv_distance<W: Weight>(
    p: &DiscreteDistribution<W>,
    r: &DiscreteDistribution<W>,
) -> Result<f64> {
    if p.outcomes() != r.outcomes() {
        return Err(Error::OutcomeMismatch);
    }
    let sum: f64 = p
        .probs()
        .iter()
        .zip(r.probs())
        .map(|(a, b)| (a.to_f64() - b.to_f64()).abs())
        .sum();
    Ok(sum / 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GofTest {
    pub statistic: f64,
    pub degrees: usize,
    pub p_value: f64,
    /// Bin count after pooling.
    pub bins: usize,
}

/// Pearson goodness-of-fit of observed tallies against an expected
/// distribution, with `counts[i]` observed for `expected.outcomes()[i]`.
/// Bins are pooled in outcome order until each pooled bin expects at least
/// 5; a trailing remainder merges into the previous bin.
pub fn chi_square_gof<W: Weight>(
    counts: &[u64],
    expected: &DiscreteDistribution<W>,
) -> Result<GofTest> {
    if counts.len() != expected.len() {
        return Err(Error::OutcomeMismatch);
    }
    let n: u64 = counts.iter().sum();
    let nf = n as f64;
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc_obs = 0.0;
    let mut acc_exp = 0.0;
    for (c, p) in counts.iter().zip(expected.probs()) {
        acc_obs += *c as f64;
        acc_exp += p.to_f64() * nf;
        if acc_exp >= 5.0 {
            pooled.push((acc_obs, acc_exp));
            acc_obs = 0.0;
            acc_exp = 0.0;
        }
    }
    if acc_obs > 0.0 || acc_exp > 0.0 {
        if let Some(last) = pooled.last_mut() {
            last.0 += acc_obs;
            last.1 += acc_exp;
        }
    }
    if pooled.len() < 2 {
        return Err(Error::TooFewSamples {
            detail: format!("{} bins expect at least 5 counts, need 2", pooled.len()),
        });
    }
    let statistic: f64 = pooled.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let degrees = pooled.len() - 1;
    let law = ChiSquared::new(degrees as f64).expect("at least one degree of freedom");
    Ok(GofTest {
        statistic,
        degrees,
        p_value: law.sf(statistic),
        bins: pooled.len(),
    })
}

/// Worst-case sensitivity value; `Infinite` records a positive marginal
/// whose counterpart vanished, which no finite bound covers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bound {
    Finite(f64),
    Infinite,
}

impl Bound {
    pub fn at_most(&self, threshold: f64) -> bool {
        match self {
            Bound::Finite(x) => *x <= threshold,
            Bound::Infinite => false,
        }
    }

    fn join(&mut self, x: f64) {
        if let Bound::Finite(cur) = self {
            if x > *cur {
                *self = Bound::Finite(x);
            }
        }
    }

    fn make_infinite(&mut self) {
        *self = Bound::Infinite;
    }
}

/// Exhaustive sensitivity report for one vertex and radius.
#[derive(Clone, Debug)]
pub struct SsmEntry {
    pub vertex: usize,
    pub ell: usize,
    pub sphere_size: usize,
    /// Max over boundary pairs differing exactly at radius `ell` of the
    /// relative marginal change |mu^sigma(a)/mu^tau(a) - 1|, with 0/0
    /// read as ratio 1.
    pub ratio_bound: Bound,
    /// Max of 1 - min_tau mu^{sigma + tau}(a) / mu^sigma(a) over pinned
    /// sets tau whose nearest vertex sits at distance exactly `ell`.
    pub weak_bound: f64,
    /// 1 / (5 |S_ell(v)|); infinite when the sphere is empty.
    pub threshold: f64,
}

impl SsmEntry {
    pub fn certifies_ratio(&self) -> bool {
        self.ratio_bound.at_most(self.threshold)
    }

    pub fn certifies_weak(&self) -> bool {
        self.weak_bound <= self.threshold
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GammaBound {
    Positive(f64),
    Zero,
}

impl GammaBound {
    pub fn value(&self) -> f64 {
        match self {
            GammaBound::Positive(x) => *x,
            GammaBound::Zero => 0.0,
        }
    }

    pub fn is_positive(&self) -> bool {
        matches!(self, GammaBound::Positive(_))
    }
}

/// Whole-instance report: one sensitivity entry per vertex at radius
/// `ell`, plus the filter floor at the sampler's radius `ell - 1` (the
/// radius a sampler certified at `ell` actually runs with).
#[derive(Clone, Debug)]
pub struct SsmReport {
    pub ell: usize,
    pub entries: Vec<SsmEntry>,
    pub gamma: GammaBound,
}

impl SsmReport {
    pub fn certifies_ratio(&self) -> bool {
        self.entries.iter().all(SsmEntry::certifies_ratio)
    }

    pub fn certifies_weak(&self) -> bool {
        self.entries.iter().all(SsmEntry::certifies_weak)
    }
}

fn distances(g: &Graph, v: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.n()];
    dist[v] = Some(0);
    let mut queue = VecDeque::from([v]);
    while let Some(w) = queue.pop_front() {
        let d = dist[w].unwrap();
        for &(nb, _) in g.incident(w) {
            if dist[nb].is_none() {
                dist[nb] = Some(d + 1);
                queue.push_back(nb);
            }
        }
    }
    dist
}

fn for_each_subset(items: &[usize], mut f: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    assert!(items.len() < 64, "subset mask overflow");
    let mut buf = Vec::with_capacity(items.len());
    for mask in 0u64..(1 << items.len()) {
        buf.clear();
        for (i, &item) in items.iter().enumerate() {
            if mask >> i & 1 == 1 {
                buf.push(item);
            }
        }
        f(&buf)?;
    }
    Ok(())
}

/// Marginal vector at `v` under the given pins, as floats; `None` when the
/// conditioning admits no feasible completion (such a boundary can never
/// occur, so it constrains nothing).
fn pinned_marginal<W: Weight>(
    sys: &SpinSystem<W>,
    v: usize,
    pins: &PartialConfiguration,
) -> Result<Option<Vec<f64>>> {
    match marginal(sys, v, pins) {
        Ok(d) => Ok(Some(d.probs().iter().map(Weight::to_f64).collect())),
        Err(Error::ZeroConditionalPartition) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Exhaustive check of how much a boundary change at distance exactly
/// `ell` can move the marginal at `v`, together with the one-sided
/// worst-pinning variant. Everything within the instance's enumeration
/// cap; intended for small instances.
pub fn ssm_ratio_probe<W: Weight>(sys: &SpinSystem<W>, v: usize, ell: usize) -> Result<SsmEntry> {
    assert!(v < sys.n(), "vertex out of range");
    assert!(ell >= 1, "radius zero has no boundary sphere");
    let q = sys.q();
    let n = sys.n();
    let dist = distances(sys.graph(), v);
    let sphere: Vec<usize> = (0..n).filter(|&u| dist[u] == Some(ell)).collect();
    let sphere_size = sphere.len();
    if sphere_size == 0 {
        return Ok(SsmEntry {
            vertex: v,
            ell,
            sphere_size,
            ratio_bound: Bound::Finite(0.0),
            weak_bound: 0.0,
            threshold: f64::INFINITY,
        });
    }
    // Role count per vertex other than v: absent, agreeing pin (q ways),
    // or a differing ordered pair (q(q-1) ways); dominates both sweeps.
    sys.cap().check_power(1 + q * q, n)?;
    let threshold = 1.0 / (5.0 * sphere_size as f64);
    let others: Vec<usize> = (0..n).filter(|&u| u != v).collect();

    let mut ratio_bound = Bound::Finite(0.0);
    for_each_subset(&sphere, |diff| {
        if diff.is_empty() {
            return Ok(());
        }
        let rest: Vec<usize> = others.iter().copied().filter(|u| !diff.contains(u)).collect();
        for_each_subset(&rest, |agree| {
            let mut err = None;
            each_assignment(q, agree.len(), |sigma_a| {
                // All marginal vectors over assignments of the differing set.
                let mut vecs: Vec<Option<Vec<f64>>> = Vec::new();
                let mut labels: Vec<Vec<Spin>> = Vec::new();
                each_assignment(q, diff.len(), |beta| {
                    let pins = agree
                        .iter()
                        .copied()
                        .zip(sigma_a.iter().copied())
                        .chain(diff.iter().copied().zip(beta.iter().copied()));
                    let pins = PartialConfiguration::from_pairs(pins)
                        .expect("disjoint in-range pin sets");
                    match pinned_marginal(sys, v, &pins) {
                        Ok(m) => {
                            vecs.push(m);
                            labels.push(beta.to_vec());
                            true
                        }
                        Err(e) => {
                            err = Some(e);
                            false
                        }
                    }
                });
                if err.is_some() {
                    return false;
                }
                for i in 0..vecs.len() {
                    for j in 0..vecs.len() {
                        if i == j || labels[i].iter().zip(&labels[j]).any(|(a, b)| a == b) {
                            continue;
                        }
                        let (Some(mi), Some(mj)) = (&vecs[i], &vecs[j]) else {
                            continue;
                        };
                        for a in 0..q {
                            match (mi[a] == 0.0, mj[a] == 0.0) {
                                (true, true) => {}
                                (false, true) => ratio_bound.make_infinite(),
                                _ => ratio_bound.join((mi[a] / mj[a] - 1.0).abs()),
                            }
                        }
                    }
                }
                true
            });
            err.map_or(Ok(()), Err)
        })
    })?;

    let mut weak_bound = 0.0f64;
    let far: Vec<usize> = (0..n)
        .filter(|&u| u != v && dist[u].map_or(true, |d| d >= ell))
        .collect();
    for_each_subset(&far, |pinned| {
        if !pinned.iter().any(|&u| dist[u] == Some(ell)) {
            return Ok(());
        }
        let rest: Vec<usize> = others.iter().copied().filter(|u| !pinned.contains(u)).collect();
        for_each_subset(&rest, |agree| {
            let mut err = None;
            each_assignment(q, agree.len(), |sigma_a| {
                let base_pins = PartialConfiguration::from_pairs(
                    agree.iter().copied().zip(sigma_a.iter().copied()),
                )
                .expect("in-range pin set");
                let base = match pinned_marginal(sys, v, &base_pins) {
                    Ok(Some(m)) => m,
                    Ok(None) => return true,
                    Err(e) => {
                        err = Some(e);
                        return false;
                    }
                };
                let mut mins: Vec<Option<f64>> = vec![None; q];
                each_assignment(q, pinned.len(), |tau| {
                    let pins = agree
                        .iter()
                        .copied()
                        .zip(sigma_a.iter().copied())
                        .chain(pinned.iter().copied().zip(tau.iter().copied()));
                    let pins = PartialConfiguration::from_pairs(pins)
                        .expect("disjoint in-range pin sets");
                    match pinned_marginal(sys, v, &pins) {
                        Ok(Some(m)) => {
                            for a in 0..q {
                                mins[a] = Some(mins[a].map_or(m[a], |cur: f64| cur.min(m[a])));
                            }
                            true
                        }
                        Ok(None) => true,
                        Err(e) => {
                            err = Some(e);
                            false
                        }
                    }
                });
                if err.is_some() {
                    return false;
                }
                for a in 0..q {
                    if base[a] > 0.0 {
                        if let Some(lo) = mins[a] {
                            weak_bound = weak_bound.max(1.0 - lo / base[a]);
                        }
                    }
                }
                true
            });
            err.map_or(Ok(()), Err)
        })
    })?;

    Ok(SsmEntry {
        vertex: v,
        ell,
        sphere_size,
        ratio_bound,
        weak_bound,
        threshold,
    })
}

/// Exhaustive minimum of the filter numerator over every repair set, every
/// choice of unresolved vertex, and every feasible assignment of the
/// repair set. Zero means some reachable state has acceptance probability
/// zero and the run can stall there.
pub fn gamma_probe<W: Weight>(sys: &SpinSystem<W>, ell: usize) -> Result<GammaBound> {
    let n = sys.n();
    let q = sys.q();
    // Each vertex is outside the repair set or carries one of q spins.
    sys.cap().check_power(q + 1, n)?;
    assert!(n < 64, "repair-set mask overflow");
    let mut best: Option<f64> = None;
    for mask in 1u64..(1 << n) {
        let r: Vec<usize> = (0..n).filter(|&v| mask >> v & 1 == 1).collect();
        let mut err = None;
        each_assignment(q, r.len(), |spins| {
            // The assignment must be the restriction of some globally
            // feasible configuration: positive on its own activities and
            // internal edges, and extendable outside. Extension checks
            // ignore pinned-pinned factors, so test those directly.
            let internally_consistent = r.iter().enumerate().all(|(i, &v)| {
                !sys.activity(v)[spins[i] as usize].is_zero()
                    && sys.graph().incident(v).iter().all(|&(w, eid)| {
                        let j = match r.binary_search(&w) {
                            Ok(j) => j,
                            Err(_) => return true,
                        };
                        !sys.interaction(eid).get(spins[i], spins[j]).is_zero()
                    })
            });
            if !internally_consistent {
                return true;
            }
            let sigma = PartialConfiguration::from_pairs(
                r.iter().copied().zip(spins.iter().copied()),
            )
            .expect("sorted in-range repair set");
            match sys.has_feasible_extension(&sigma) {
                Ok(false) => return true,
                Ok(true) => {}
                Err(e) => {
                    err = Some(e);
                    return false;
                }
            }
            let mut x = vec![0 as Spin; n];
            for (&v, &s) in r.iter().zip(spins) {
                x[v] = s;
            }
            for &u in &r {
                let val = match mu_min(sys, &r, u, &x, ell) {
                    Ok(w) => w.to_f64(),
                    // An unreachable boundary with no feasible completion
                    // still witnesses that the floor is not positive.
                    Err(Error::ZeroConditionalPartition) => 0.0,
                    Err(e) => {
                        err = Some(e);
                        return false;
                    }
                };
                best = Some(best.map_or(val, |b| b.min(val)));
                if val == 0.0 {
                    return false;
                }
            }
            true
        });
        if let Some(e) = err {
            return Err(e);
        }
        if best == Some(0.0) {
            return Ok(GammaBound::Zero);
        }
    }
    match best {
        Some(g) if g > 0.0 => Ok(GammaBound::Positive(g)),
        _ => Ok(GammaBound::Zero),
    }
}

/// Sensitivity entries for every vertex at radius `ell`, with the filter
/// floor probed at the radius the sampler would actually use.
pub fn ssm_report<W: Weight>(sys: &SpinSystem<W>, ell: usize) -> Result<SsmReport> {
    let entries = (0..sys.n())
        .map(|v| ssm_ratio_probe(sys, v, ell))
        .collect::<Result<Vec<_>>>()?;
    let gamma = gamma_probe(sys, ell.saturating_sub(1))?;
    Ok(SsmReport { ell, entries, gamma })
}

/// Draw `samples` independent runs with per-trial seeds `seed ^ index`,
/// optionally across a worker pool. Output order is by trial index either
/// way, so the parallel path is byte-compatible with the sequential one.
pub fn collect_samples<W: Weight>(
    sys: &SpinSystem<W>,
    config: &SamplerConfig,
    samples: usize,
    seed: u64,
    jobs: usize,
) -> Result<Vec<(Vec<Spin>, RunStats)>> {
    let one = |trial: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ trial as u64);
        run(sys, config.clone(), &mut rng)
    };
    if jobs <= 1 {
        (0..samples).map(one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidInstance(format!("worker pool: {e}")))?;
        pool.install(|| (0..samples).into_par_iter().map(one).collect())
    }
}

/// Tally samples against the outcome list of `expected`. A sample outside
/// that list means the sampler produced something the reference assigns
/// probability zero, which is reported rather than dropped.
pub fn tally_outcomes<'a, W: Weight>(
    samples: impl IntoIterator<Item = &'a [Spin]>,
    expected: &DiscreteDistribution<W>,
) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; expected.len()];
    for s in samples {
        match expected.index_of(s) {
            Some(i) => counts[i] += 1,
            None => return Err(Error::OutcomeMismatch),
        }
    }
    Ok(counts)
}

/// Observed frequencies over the same outcome list as `expected`.
pub fn empirical_distribution<W: Weight>(
    counts: &[u64],
    expected: &DiscreteDistribution<W>,
) -> Result<DiscreteDistribution<f64>> {
    if counts.len() != expected.len() {
        return Err(Error::OutcomeMismatch);
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::TooFewSamples { detail: "no samples".into() });
    }
    DiscreteDistribution::new(
        expected.outcomes().to_vec(),
        counts.iter().map(|&c| c as f64 / n as f64).collect(),
    )
}

#[derive(Clone, Copy, Debug)]
pub struct VerificationReport {
    pub samples: usize,
    pub gof: GofTest,
    pub tv: f64,
}

/// Chi-square and TV distance of drawn samples against a reference
/// distribution in one pass.
pub fn verify_samples<'a, W: Weight>(
    samples: impl IntoIterator<Item = &'a [Spin]>,
    expected: &DiscreteDistribution<W>,
) -> Result<VerificationReport> {
    let counts = tally_outcomes(samples, expected)?;
    let n: u64 = counts.iter().sum();
    let gof = chi_square_gof(&counts, expected)?;
    let empirical = empirical_distribution(&counts, expected)?;
    let tv = tv_distance(&empirical, &expected.to_f64())?;
    Ok(VerificationReport { samples: n as usize, gof, tv })
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub trials: usize,
    pub seed: u64,
    /// Per-size wall budget; a size that exhausts it keeps the trials done
    /// so far and is flagged, never fatal.
    pub budget: Option<Duration>,
    pub sampler: SamplerConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            trials: 50,
            seed: 0,
            budget: None,
            sampler: SamplerConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub n: usize,
    pub trials: usize,
    pub mean_t: f64,
    pub sd_t: f64,
    pub mean_ms: f64,
    pub sd_ms: f64,
    pub t_over_n: f64,
    pub timed_out: bool,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_sd(xs: &[f64], m: f64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Iteration-count and wall-time statistics per instance size. Per-trial
/// seeds are `seed ^ trial`, so rows do not depend on how trials are
/// scheduled.
pub fn bench_scaling<W: Weight>(
    mut build: impl FnMut(usize) -> Result<SpinSystem<W>>,
    sizes: &[usize],
    cfg: &BenchConfig,
) -> Result<Vec<BenchRow>> {
    assert!(cfg.trials > 0, "need at least one trial per size");
    let mut rows = Vec::new();
    for &size in sizes {
        let sys = build(size)?;
        let n = sys.n();
        let started = Instant::now();
        let mut ts = Vec::new();
        let mut ms = Vec::new();
        let mut timed_out = false;
        for trial in 0..cfg.trials {
            if trial > 0 && cfg.budget.is_some_and(|b| started.elapsed() > b) {
                timed_out = true;
                break;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ trial as u64);
            let (_, stats) = run(&sys, cfg.sampler.clone(), &mut rng)?;
            debug_assert!(stats.iterations >= n as u64, "every vertex leaves the repair set");
            ts.push(stats.iterations as f64);
            ms.push(stats.wall.as_secs_f64() * 1e3);
        }
        let mean_t = mean(&ts);
        let mean_ms = mean(&ms);
        rows.push(BenchRow {
            n,
            trials: ts.len(),
            mean_t,
            sd_t: sample_sd(&ts, mean_t),
            mean_ms,
            sd_ms: sample_sd(&ms, mean_ms),
            t_over_n: mean_t / n as f64,
            timed_out,
        });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("n,trials,mean_T,sd_T,mean_ms,sd_ms,T_over_n\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.n, r.trials, r.mean_t, r.sd_t, r.mean_ms, r.sd_ms, r.t_over_n
        )
        .expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{hardcore_instance, ising_instance};
    use crate::sampler::FilterMode;
    use crate::system::SymmetricMatrix;

    fn ones(q: usize) -> Vec<f64> {
        vec![1.0; q]
    }

    fn coloring_matrix(q: usize) -> SymmetricMatrix<f64> {
        SymmetricMatrix::from_fn(q, |a, b| if a == b { 0.0 } else { 1.0 }).unwrap()
    }

    fn dist_over(outcomes: Vec<Vec<Spin>>, probs: Vec<f64>) -> DiscreteDistribution<f64> {
        DiscreteDistribution::new(outcomes, probs).unwrap()
    }

    fn binary(p0: f64) -> DiscreteDistribution<f64> {
        dist_over(vec![vec![0], vec![1]], vec![p0, 1.0 - p0])
    }

    #[test]
    fn tv_examples() {
        let p = binary(0.5);
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        assert_eq!(tv_distance(&binary(1.0), &binary(0.0)).unwrap(), 1.0);
        assert!((tv_distance(&binary(0.5), &binary(0.75)).unwrap() - 0.25).abs() < 1e-15);
        let other = dist_over(vec![vec![0], vec![2]], vec![0.5, 0.5]);
        assert!(matches!(tv_distance(&p, &other), Err(Error::OutcomeMismatch)));
    }

    #[test]
    fn tv_is_a_metric_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        use rand::Rng;
        let outcomes: Vec<Vec<Spin>> = (0..5).map(|i| vec![i as Spin]).collect();
        let random = |rng: &mut ChaCha8Rng| {
            let raw: Vec<f64> = (0..5).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            dist_over(outcomes.clone(), raw.iter().map(|x| x / total).collect())
        };
        for _ in 0..50 {
            let (p, r, s) = (random(&mut rng), random(&mut rng), random(&mut rng));
            let prs = tv_distance(&p, &r).unwrap();
            assert_eq!(prs, tv_distance(&r, &p).unwrap());
            assert!(prs >= 0.0 && prs <= 1.0);
            assert!(
                prs <= tv_distance(&p, &s).unwrap() + tv_distance(&s, &r).unwrap() + 1e-12
            );
        }
    }

    #[test]
    fn chi_square_examples() {
        let uniform = binary(0.5);
        let exact = chi_square_gof(&[50, 50], &uniform).unwrap();
        assert_eq!(exact.statistic, 0.0);
        assert_eq!(exact.p_value, 1.0);
        assert_eq!(exact.degrees, 1);

        let skewed = chi_square_gof(&[70, 30], &uniform).unwrap();
        assert_eq!(skewed.statistic, 16.0);
        assert!(skewed.p_value < 0.001);
    }

    #[test]
    fn chi_square_pools_small_expected_bins() {
        let expected = dist_over(
            vec![vec![0], vec![1], vec![2]],
            vec![0.49, 0.49, 0.02],
        );
        // Expected counts (49, 49, 2): the trailing bin merges into the second.
        let g = chi_square_gof(&[50, 48, 2], &expected).unwrap();
        assert_eq!(g.bins, 2);
        assert_eq!(g.degrees, 1);
        let by_hand = (50.0f64 - 49.0).powi(2) / 49.0 + (50.0f64 - 51.0).powi(2) / 51.0;
        assert!((g.statistic - by_hand).abs() < 1e-12);
    }

    #[test]
    fn chi_square_rejects_underpowered_input() {
        assert!(matches!(
            chi_square_gof(&[1, 1], &binary(0.5)),
            Err(Error::TooFewSamples { .. })
        ));
        assert!(matches!(
            chi_square_gof(&[1, 2, 3], &binary(0.5)),
            Err(Error::OutcomeMismatch)
        ));
    }

    fn independent_pair() -> SpinSystem<f64> {
        SpinSystem::new(Graph::new(2, &[]).unwrap(), 3, vec![ones(3); 2], vec![]).unwrap()
    }

    #[test]
    fn ratio_probe_is_zero_without_a_sphere() {
        let sys = independent_pair();
        let e = ssm_ratio_probe(&sys, 0, 1).unwrap();
        assert_eq!(e.ratio_bound, Bound::Finite(0.0));
        assert_eq!(e.weak_bound, 0.0);
        assert_eq!(e.sphere_size, 0);
        assert!(e.certifies_ratio() && e.certifies_weak());
    }

    #[test]
    fn ratio_probe_on_a_colored_path() {
        let g = Graph::new(3, &[(0, 1), (1, 2)]).unwrap();
        let sys =
            SpinSystem::new(g, 3, vec![ones(3); 3], vec![coloring_matrix(3); 2]).unwrap();
        // Far endpoint pinned to 0 vs 1 moves the marginal of color 0 at
        // the near endpoint from 1/2 to 1/4.
        let e = ssm_ratio_probe(&sys, 0, 2).unwrap();
        assert_eq!(e.sphere_size, 1);
        assert_eq!(e.ratio_bound, Bound::Finite(1.0));
        assert!((e.weak_bound - 0.25).abs() < 1e-12);
        assert!((e.threshold - 0.2).abs() < 1e-15);
        assert!(!e.certifies_ratio());
    }

    #[test]
    fn hard_constraints_at_distance_one_report_infinite() {
        let g = Graph::new(2, &[(0, 1)]).unwrap();
        let sys = hardcore_instance(g, 1.0).unwrap();
        let e = ssm_ratio_probe(&sys, 0, 1).unwrap();
        assert_eq!(e.ratio_bound, Bound::Infinite);
        assert!(!e.certifies_ratio());
    }

    #[test]
    fn probe_respects_the_enumeration_cap() {
        use crate::numeric::EnumerationCap;
        let g = Graph::new(3, &[(0, 1), (1, 2)]).unwrap();
        let mut sys = hardcore_instance(g, 1.0).unwrap();
        sys.set_cap(EnumerationCap(10));
        assert!(matches!(
            ssm_ratio_probe(&sys, 0, 1),
            Err(Error::EnumerationCapExceeded { .. })
        ));
        assert!(matches!(
            gamma_probe(&sys, 1),
            Err(Error::EnumerationCapExceeded { .. })
        ));
    }

    #[test]
    fn gamma_on_independent_spins_is_the_uniform_floor() {
        let sys = independent_pair();
        let g = gamma_probe(&sys, 1).unwrap();
        assert!(g.is_positive());
        assert!((g.value() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_examples_on_hard_instances() {
        let path = Graph::new(3, &[(0, 1), (1, 2)]).unwrap();
        let sys = hardcore_instance(path, 1.0).unwrap();
        let g = gamma_probe(&sys, 1).unwrap();
        assert!(g.is_positive(), "hardcore at radius one keeps a positive floor");

        let k3 = Graph::new(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let sys =
            SpinSystem::new(k3, 3, vec![ones(3); 3], vec![coloring_matrix(3); 3]).unwrap();
        assert_eq!(gamma_probe(&sys, 0).unwrap(), GammaBound::Zero);
        // One radius higher the block swallows the neighbors and the floor
        // comes back.
        assert!(gamma_probe(&sys, 1).unwrap().is_positive());
    }

    #[test]
    fn report_aggregates_all_vertices() {
        let g = Graph::new(2, &[(0, 1)]).unwrap();
        let sys = ising_instance(g, 0.01, &[(1.0, 1.0); 2]).unwrap();
        let rep = ssm_report(&sys, 1).unwrap();
        assert_eq!(rep.entries.len(), 2);
        assert!(rep.certifies_ratio(), "near-zero coupling barely moves marginals");
        assert!(rep.certifies_weak());
        assert!(rep.gamma.is_positive());
    }

    #[test]
    fn collect_samples_is_order_deterministic_across_pool_sizes() {
        let g = Graph::new(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let sys =
            SpinSystem::new(g, 3, vec![ones(3); 3], vec![coloring_matrix(3); 3]).unwrap();
        let cfg = SamplerConfig::default();
        let seq = collect_samples(&sys, &cfg, 40, 11, 1).unwrap();
        let par = collect_samples(&sys, &cfg, 40, 11, 3).unwrap();
        let seq_x: Vec<_> = seq.iter().map(|(x, _)| x.clone()).collect();
        let par_x: Vec<_> = par.iter().map(|(x, _)| x.clone()).collect();
        assert_eq!(seq_x, par_x);
    }

    #[test]
    fn tally_and_verify_roundtrip() {
        let expected = binary(0.5);
        let samples = vec![vec![0], vec![1], vec![0], vec![0]];
        let counts =
            tally_outcomes(samples.iter().map(Vec::as_slice), &expected).unwrap();
        assert_eq!(counts, vec![3, 1]);
        assert!(matches!(
            tally_outcomes(std::iter::once(&[2][..]), &expected),
            Err(Error::OutcomeMismatch)
        ));
        let emp = empirical_distribution(&counts, &expected).unwrap();
        assert_eq!(emp.probs(), &[0.75, 0.25]);
        let samples: Vec<Vec<Spin>> = (0..200).map(|i| vec![(i % 2) as Spin]).collect();
        let rep = verify_samples(samples.iter().map(Vec::as_slice), &expected).unwrap();
        assert_eq!(rep.samples, 200);
        assert_eq!(rep.gof.statistic, 0.0);
        assert_eq!(rep.tv, 0.0);
    }

    fn edgeless(n: usize) -> Result<SpinSystem<f64>> {
        SpinSystem::new(Graph::new(n, &[]).unwrap(), 2, vec![ones(2); n], vec![])
    }

    #[test]
    fn bench_on_independent_spins_resolves_each_vertex_once() {
        let cfg = BenchConfig { trials: 5, seed: 3, ..BenchConfig::default() };
        let rows = bench_scaling(edgeless, &[4, 16], &cfg).unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            assert_eq!(row.t_over_n, 1.0);
            assert_eq!(row.sd_t, 0.0);
            assert_eq!(row.trials, 5);
            assert!(!row.timed_out);
        }
        let csv = bench_csv(&rows);
        assert!(csv.starts_with("n,trials,mean_T,sd_T,mean_ms,sd_ms,T_over_n\n"));
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("4,5,4,0,"));
    }

    #[test]
    fn bench_budget_cuts_trials_but_reports() {
        let cfg = BenchConfig {
            trials: 50,
            seed: 3,
            budget: Some(Duration::ZERO),
            ..BenchConfig::default()
        };
        let rows = bench_scaling(edgeless, &[8], &cfg).unwrap();
        assert!(rows[0].timed_out);
        assert_eq!(rows[0].trials, 1, "first trial always runs");
        assert_eq!(rows[0].t_over_n, 1.0);
    }

    /// A probe-certified radius translates into repair-set drift one
    /// radius lower.
    #[test]
    fn certified_instance_drains_the_repair_set() {
        let g = Graph::new(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]).unwrap();
        let sys = ising_instance(g, 0.02, &[(1.0, 1.0); 5]).unwrap();
        let rep = ssm_report(&sys, 1).unwrap();
        assert!(rep.certifies_ratio(), "coupling 0.02 is inside the certified regime");
        assert!(rep.gamma.is_positive());

        let cfg = SamplerConfig { ell: 0, filter_mode: FilterMode::MuMin, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut steps = 0u64;
        let mut resolved = 0u64;
        while steps < 10_000 {
            let (_, stats) = run(&sys, cfg.clone(), &mut rng).unwrap();
            assert!(stats.iterations >= sys.n() as u64);
            steps += stats.iterations;
            resolved += sys.n() as u64;
        }
        let drift = resolved as f64 / steps as f64;
        assert!(drift >= 0.2 - 0.05, "mean decrease {drift} fell under the drift bound");
    }
}
