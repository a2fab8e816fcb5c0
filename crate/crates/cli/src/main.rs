//! Command-line front end: sampling, statistical verification, scaling
//! benchmarks, dynamic updates, and the analytic-condition probes.
//!
//! Exit codes: 0 success, 1 statistical failure, 2 resource or cap limit,
//! 3 malformed input or usage. Primary outputs carry no wall-clock data,
//! so a fixed command line reproduces them byte for byte in f64 mode.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use perfect_gibbs::{
    bench_csv, bench_scaling, brute_force_distribution, coloring_instance, collect_samples,
    dynamic_sample, gamma_probe, grid_graph, hardcore_instance, ising_instance,
    monomer_dimer_instance, random_graph, run, run_without_filter, ssm_report, verify_samples,
    BenchConfig, Bound, ColorLists, EnumerationCap, Error, FilterMode, GammaBound, Graph,
    InstanceSpec, SamplerConfig, Spin, SpinSystem, UpdateSpec, Weight,
};

const EXIT_STAT_FAIL: i32 = 1;
const EXIT_RESOURCE: i32 = 2;
const EXIT_USAGE: i32 = 3;

const P_THRESHOLD: f64 = 0.001;

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }

    fn of(e: Error) -> Self {
        let code = match &e {
            Error::EnumerationCapExceeded { .. } | Error::Interrupted { .. } => EXIT_RESOURCE,
            _ => EXIT_USAGE,
        };
        Failure { code, message: e.to_string() }
    }
}

type CliResult<T> = Result<T, Failure>;

#[derive(Parser)]
#[command(name = "perfect-gibbs", version, about = "Perfect sampler for permissive spin systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw exact samples and write one configuration per line
    Sample(SampleArgs),
    /// Compare samples against the brute-force distribution
    Verify(VerifyArgs),
    /// Iteration and wall-time scaling over square grids
    Bench(BenchArgs),
    /// Apply an update batch to fresh samples and emit the repaired draws
    Dynamic(DynamicArgs),
    /// Exhaustive sensitivity or filter-floor probe on a small instance
    Probe(ProbeArgs),
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Model {
    Coloring,
    Hardcore,
    Ising,
    MonomerDimer,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Numeric {
    F64,
    Rational,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Mode {
    #[value(name = "mumin")]
    MuMin,
    #[value(name = "mulow")]
    MuLow,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Model on generated graphs; file: sources carry their own weights
    #[arg(long, value_enum)]
    model: Option<Model>,
    /// Color count for --model coloring
    #[arg(long)]
    q: Option<usize>,
    /// Activity for hardcore and monomer-dimer
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Agreement strength for ising (edge weight e^k agree, e^-k disagree)
    #[arg(long, default_value_t = 0.0)]
    coupling: f64,
}

#[derive(Args, Clone)]
struct InstanceArgs {
    /// grid:WxH | torus:WxH | file:PATH (instance JSON) | random:n,p,seed
    #[arg(long)]
    graph: String,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Block radius
    #[arg(long, default_value_t = 1)]
    ell: usize,
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Filter numerator: worst-case minimum or reference-boundary bound
    #[arg(long, value_enum, default_value_t = Mode::MuMin)]
    mode: Mode,
    /// Boundary spin pinned by the mulow reference
    #[arg(long, default_value_t = 0)]
    reference_spin: Spin,
    #[arg(long, value_enum, default_value_t = Numeric::F64)]
    numeric: Numeric,
    /// Concurrent trials; seeds derive per trial, output stays in trial order
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Sample file; a `<out>.stats.csv` sidecar records T per run. Stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value_t = 1)]
    ell: usize,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::MuMin)]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    reference_spin: Spin,
    #[arg(long, value_enum, default_value_t = Numeric::F64)]
    numeric: Numeric,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Replace the filtered dynamics with a plain single-site sweep; a
    /// negative control that verification is expected to catch
    #[arg(long, hide = true)]
    unfiltered: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Grid vertex counts; each must be a perfect square
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    ell: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::MuMin)]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    reference_spin: Spin,
    /// Per-size wall budget in seconds; exceeding it truncates trials
    #[arg(long)]
    budget_secs: Option<u64>,
}

#[derive(Args)]
struct DynamicArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Update batch (JSON)
    #[arg(long)]
    update: PathBuf,
    #[arg(long, default_value_t = 1)]
    ell: usize,
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::MuMin)]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    reference_spin: Spin,
    #[arg(long, value_enum, default_value_t = Numeric::F64)]
    numeric: Numeric,
    /// Sample file; sidecar also records repair-loop iterations. Stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[command(group = ArgGroup::new("probe_kind").required(true).args(["ssm", "gamma"]))]
struct ProbeArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value_t = 1)]
    ell: usize,
    /// Per-vertex marginal sensitivity at radius ell, plus the filter
    /// floor at radius ell - 1
    #[arg(long)]
    ssm: bool,
    /// Exhaustive minimum of the filter numerator at radius ell
    #[arg(long)]
    gamma: bool,
}

enum GraphSource {
    Grid { width: usize, height: usize, torus: bool },
    File(PathBuf),
    Random { n: usize, p: f64, seed: u64 },
}

fn parse_graph_source(text: &str) -> CliResult<GraphSource> {
    let (kind, spec) = text
        .split_once(':')
        .ok_or_else(|| Failure::usage(format!("graph source `{text}` is not kind:spec")))?;
    let dims = |spec: &str| -> CliResult<(usize, usize)> {
        let (w, h) = spec
            .split_once('x')
            .ok_or_else(|| Failure::usage(format!("grid spec `{spec}` is not WxH")))?;
        match (w.parse(), h.parse()) {
            (Ok(w), Ok(h)) => Ok((w, h)),
            _ => Err(Failure::usage(format!("grid spec `{spec}` is not WxH"))),
        }
    };
    match kind {
        "grid" => {
            let (width, height) = dims(spec)?;
            Ok(GraphSource::Grid { width, height, torus: false })
        }
        "torus" => {
            let (width, height) = dims(spec)?;
            Ok(GraphSource::Grid { width, height, torus: true })
        }
        "file" => Ok(GraphSource::File(PathBuf::from(spec))),
        "random" => {
            let parts: Vec<&str> = spec.split(',').collect();
            let parsed = (|| {
                let [n, p, seed] = parts.as_slice() else { return None };
                Some(GraphSource::Random {
                    n: n.parse().ok()?,
                    p: p.parse().ok()?,
                    seed: seed.parse().ok()?,
                })
            })();
            parsed.ok_or_else(|| Failure::usage(format!("random spec `{spec}` is not n,p,seed")))
        }
        other => Err(Failure::usage(format!(
            "unknown graph source `{other}`; use grid, torus, file, or random"
        ))),
    }
}

fn model_system<W: Weight>(g: Graph, m: &ModelArgs) -> perfect_gibbs::Result<SpinSystem<W>> {
    let model = m
        .model
        .ok_or_else(|| Error::InvalidInstance("generated graphs need --model".into()))?;
    match model {
        Model::Coloring => {
            let q = m
                .q
                .ok_or_else(|| Error::InvalidInstance("--model coloring needs --q".into()))?;
            let lists = ColorLists::full(g.n(), q);
            coloring_instance(g, q, &lists)
        }
        Model::Hardcore => hardcore_instance(g, W::from_json_number(m.lambda)?),
        Model::Ising => {
            let field = vec![(W::one(), W::one()); g.n()];
            ising_instance(g, m.coupling, &field)
        }
        Model::MonomerDimer => {
            monomer_dimer_instance(&g, W::from_json_number(m.lambda)?).map(|(sys, _)| sys)
        }
    }
}

fn cap_from_env() -> CliResult<Option<u64>> {
    match std::env::var("PERFECT_GIBBS_CAP") {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| Failure::usage(format!("PERFECT_GIBBS_CAP must be an integer, got `{text}`"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Failure::usage(format!("PERFECT_GIBBS_CAP: {e}"))),
    }
}

fn build_system<W: Weight>(inst: &InstanceArgs) -> CliResult<SpinSystem<W>> {
    let mut sys = match parse_graph_source(&inst.graph)? {
        GraphSource::File(path) => {
            if inst.model.model.is_some() || inst.model.q.is_some() {
                return Err(Failure::usage(
                    "file: sources define their own model; drop --model and --q",
                ));
            }
            let text = fs::read_to_string(&path)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            InstanceSpec::from_json(&text)
                .and_then(|spec| spec.instantiate::<W>())
                .map_err(Failure::of)?
        }
        GraphSource::Grid { width, height, torus } => {
            let g = grid_graph(width, height, torus).map_err(Failure::of)?;
            model_system(g, &inst.model).map_err(Failure::of)?
        }
        GraphSource::Random { n, p, seed } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Failure::usage("random edge probability must be in [0, 1]"));
            }
            model_system(random_graph(n, p, seed), &inst.model).map_err(Failure::of)?
        }
    };
    if let Some(cap) = cap_from_env()? {
        sys.set_cap(EnumerationCap(cap));
    }
    Ok(sys)
}

fn filter_mode(mode: Mode, reference_spin: Spin, q: usize) -> CliResult<FilterMode> {
    match mode {
        Mode::MuMin => Ok(FilterMode::MuMin),
        Mode::MuLow => {
            if (reference_spin as usize) >= q {
                return Err(Failure::usage(format!(
                    "--reference-spin {reference_spin} out of range for {q} spins"
                )));
            }
            Ok(FilterMode::MuLow { reference_spin })
        }
    }
}

fn join_spins(x: &[Spin]) -> String {
    let mut line = String::new();
    for (i, s) in x.iter().enumerate() {
        if i > 0 {
            line.push(' ');
        }
        let _ = write!(line, "{s}");
    }
    line
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".stats.csv");
    PathBuf::from(os)
}

fn emit(out: &Option<PathBuf>, body: &str, sidecar: &str) -> CliResult<()> {
    match out {
        Some(path) => {
            fs::write(path, body)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            let stats = sidecar_path(path);
            fs::write(&stats, sidecar)
                .map_err(|e| Failure::usage(format!("{}: {e}", stats.display())))?;
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn warn_on_clamps(total: u64) {
    if total > 0 {
        eprintln!(
            "warning: {total} filter ratios exceeded one; the reference numerator is not a \
             valid lower bound on this instance and outputs may be biased"
        );
    }
}

fn cmd_sample<W: Weight>(args: &SampleArgs) -> CliResult<i32> {
    let sys = build_system::<W>(&args.instance)?;
    let config = SamplerConfig {
        ell: args.ell,
        filter_mode: filter_mode(args.mode, args.reference_spin, sys.q())?,
        ..Default::default()
    };
    let pairs = collect_samples(&sys, &config, args.samples, args.seed, args.jobs)
        .map_err(Failure::of)?;
    let mut body = String::new();
    let mut sidecar = String::from("trial,T\n");
    for (trial, (x, stats)) in pairs.iter().enumerate() {
        body.push_str(&join_spins(x));
        body.push('\n');
        let _ = writeln!(sidecar, "{trial},{}", stats.iterations);
    }
    warn_on_clamps(pairs.iter().map(|(_, s)| s.clamped_filters).sum());
    emit(&args.out, &body, &sidecar)?;
    Ok(0)
}

fn cmd_verify<W: Weight>(args: &VerifyArgs) -> CliResult<i32> {
    let sys = build_system::<W>(&args.instance)?;
    let expected = brute_force_distribution(&sys).map_err(Failure::of)?;
    let samples: Vec<Vec<Spin>> = if args.unfiltered {
        (0..args.samples)
            .map(|trial| {
                let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ trial as u64);
                run_without_filter(&sys, &mut rng).map(|(x, _)| x)
            })
            .collect::<perfect_gibbs::Result<_>>()
            .map_err(Failure::of)?
    } else {
        let config = SamplerConfig {
            ell: args.ell,
            filter_mode: filter_mode(args.mode, args.reference_spin, sys.q())?,
            ..Default::default()
        };
        let pairs = collect_samples(&sys, &config, args.samples, args.seed, args.jobs)
            .map_err(Failure::of)?;
        warn_on_clamps(pairs.iter().map(|(_, s)| s.clamped_filters).sum());
        pairs.into_iter().map(|(x, _)| x).collect()
    };
    let report = verify_samples(samples.iter().map(Vec::as_slice), &expected).map_err(|e| {
        if matches!(e, Error::OutcomeMismatch) {
            Failure {
                code: EXIT_STAT_FAIL,
                message: "a sample fell outside the support of the exact distribution".into(),
            }
        } else {
            Failure::of(e)
        }
    })?;
    println!("samples {}", report.samples);
    println!("outcomes {}", expected.len());
    println!("chi_square {:.6}", report.gof.statistic);
    println!("degrees {}", report.gof.degrees);
    println!("p_value {:.6e}", report.gof.p_value);
    println!("tv_distance {:.6}", report.tv);
    if report.gof.p_value > P_THRESHOLD {
        println!("verdict pass");
        Ok(0)
    } else {
        println!("verdict fail");
        Ok(EXIT_STAT_FAIL)
    }
}

fn cmd_bench(args: &BenchArgs) -> CliResult<i32> {
    let cap = cap_from_env()?;
    let build = |n: usize| -> perfect_gibbs::Result<SpinSystem<f64>> {
        let side = (n as f64).sqrt().round() as usize;
        if side * side != n {
            return Err(Error::InvalidInstance(format!(
                "bench size {n} is not a perfect square"
            )));
        }
        let mut sys = model_system(grid_graph(side, side, false)?, &args.model)?;
        if let Some(c) = cap {
            sys.set_cap(EnumerationCap(c));
        }
        Ok(sys)
    };
    // The reference-spin range check needs q, which the model fixes the
    // same way at every size.
    let q = match args.mode {
        Mode::MuMin => 1,
        Mode::MuLow => {
            let first = *args.sizes.first().expect("clap enforces at least one size");
            build(first).map_err(Failure::of)?.q()
        }
    };
    let sampler = SamplerConfig {
        ell: args.ell,
        filter_mode: filter_mode(args.mode, args.reference_spin, q)?,
        ..Default::default()
    };
    let cfg = BenchConfig {
        trials: args.trials,
        seed: args.seed,
        budget: args.budget_secs.map(Duration::from_secs),
        sampler,
    };
    let rows = bench_scaling(build, &args.sizes, &cfg).map_err(Failure::of)?;
    print!("{}", bench_csv(&rows));
    if rows.iter().any(|r| r.timed_out) {
        eprintln!("warning: budget exhausted on some sizes; rows report completed trials");
    }
    Ok(0)
}

fn cmd_dynamic<W: Weight>(args: &DynamicArgs) -> CliResult<i32> {
    let sys = build_system::<W>(&args.instance)?;
    let text = fs::read_to_string(&args.update)
        .map_err(|e| Failure::usage(format!("{}: {e}", args.update.display())))?;
    let batch = UpdateSpec::from_json(&text)
        .and_then(|spec| spec.instantiate::<W>(sys.q()))
        .map_err(Failure::of)?;
    let config = SamplerConfig {
        ell: args.ell,
        filter_mode: filter_mode(args.mode, args.reference_spin, sys.q())?,
        ..Default::default()
    };
    let mut body = String::new();
    let mut sidecar = String::from("trial,T,repair_size\n");
    let mut clamped = 0;
    for trial in 0..args.samples {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ trial as u64);
        let (x, stats) = run(&sys, config.clone(), &mut rng).map_err(Failure::of)?;
        clamped += stats.clamped_filters;
        let outcome =
            dynamic_sample(&sys, &x, &batch, config.clone(), &mut rng).map_err(Failure::of)?;
        clamped += outcome.stats.clamped_filters;
        body.push_str(&join_spins(&outcome.x));
        body.push('\n');
        let _ = writeln!(sidecar, "{trial},{},{}", outcome.stats.iterations, outcome.repair_size);
    }
    warn_on_clamps(clamped);
    emit(&args.out, &body, &sidecar)?;
    Ok(0)
}

fn fmt_bound(b: Bound) -> String {
    match b {
        Bound::Finite(x) => format!("{x:.6}"),
        Bound::Infinite => "inf".into(),
    }
}

fn cmd_probe(args: &ProbeArgs) -> CliResult<i32> {
    let sys = build_system::<f64>(&args.instance)?;
    if args.ssm {
        if args.ell == 0 {
            return Err(Failure::usage("--ssm needs --ell at least 1"));
        }
        let report = ssm_report(&sys, args.ell).map_err(Failure::of)?;
        for e in &report.entries {
            let threshold = if e.threshold.is_finite() {
                format!("{:.6}", e.threshold)
            } else {
                "inf".into()
            };
            println!(
                "vertex {} sphere {} ratio {} weak {:.6} threshold {} certified {}",
                e.vertex,
                e.sphere_size,
                fmt_bound(e.ratio_bound),
                e.weak_bound,
                threshold,
                if e.certifies_ratio() { "yes" } else { "no" },
            );
        }
        println!("certified_ratio {}", report.certifies_ratio());
        println!("certified_weak {}", report.certifies_weak());
        println!("gamma_at_radius {} {:.6e}", args.ell - 1, report.gamma.value());
        if !report.gamma.is_positive() {
            eprintln!(
                "warning: the filter floor at radius {} is zero; runs there can stall",
                args.ell - 1
            );
        }
    } else {
        match gamma_probe(&sys, args.ell).map_err(Failure::of)? {
            GammaBound::Positive(g) => println!("gamma {g:.6e}"),
            GammaBound::Zero => {
                println!("gamma 0");
                eprintln!(
                    "warning: some reachable state accepts with probability zero at radius {}; \
                     runs there can stall",
                    args.ell
                );
            }
        }
    }
    Ok(0)
}

fn dispatch(cli: &Cli) -> CliResult<i32> {
    match &cli.command {
        Command::Sample(a) => match a.numeric {
            Numeric::F64 => cmd_sample::<f64>(a),
            Numeric::Rational => cmd_sample::<BigRational>(a),
        },
        Command::Verify(a) => match a.numeric {
            Numeric::F64 => cmd_verify::<f64>(a),
            Numeric::Rational => cmd_verify::<BigRational>(a),
        },
        Command::Bench(a) => cmd_bench(a),
        Command::Dynamic(a) => match a.numeric {
            Numeric::F64 => cmd_dynamic::<f64>(a),
            Numeric::Rational => cmd_dynamic::<BigRational>(a),
        },
        Command::Probe(a) => cmd_probe(a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match dispatch(&cli) {
        Ok(code) => std::process::exit(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            std::process::exit(f.code);
        }
    }
}
