//! Perfect sampling from Gibbs distributions of permissive spin systems.

pub mod diagnostics;
pub mod dynamic;
pub mod error;
pub mod graph;
pub mod inference;
pub mod instances;
pub mod io;
pub mod numeric;
pub mod sampler;
pub mod system;

pub use diagnostics::{
    bench_csv, bench_scaling, chi_square_gof, collect_samples, empirical_distribution,
    gamma_probe, ssm_ratio_probe, ssm_report, tally_outcomes, tv_distance, verify_samples,
    BenchConfig, BenchRow, Bound, GammaBound, GofTest, SsmEntry, SsmReport, VerificationReport,
};
pub use dynamic::{apply_update, dynamic_sample, DynamicOutcome, UpdateBatch};
pub use error::{Error, Result};
pub use graph::Graph;
pub use inference::{
    brute_force_distribution, default_slack, marginal, mu_low, mu_min, restricted_system,
    sample_block, DiscreteDistribution, Restriction,
};
pub use instances::{
    check_coloring_conditions, coloring_instance, decode_matching, grid_graph, hardcore_instance,
    ising_instance, is_matching, line_graph, monomer_dimer_instance, random_graph, solve_ell0,
    ColorLists, ColoringConditionReport, GrowthFunction,
};
pub use io::{InstanceSpec, UpdateSpec};
pub use numeric::{EnumerationCap, NumericMode, Weight};
pub use sampler::{
    run, run_single_site, run_without_filter, FilterMode, RepairState, RunStats, Sampler,
    SamplerConfig, StepOutcome,
};
pub use system::{PartialConfiguration, Spin, SpinSystem, SymmetricMatrix};
