//! `atlas`: build atlases, query paths, compare coverage and serve the
//! steering API from the command line.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 runtime error.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use cayley_atlas::atlas::{build_atlas, Atlas, AtlasConfig, Session};
use cayley_atlas::cayley::Variant;
use cayley_atlas::coverage::{
    atlas_samples, coverage_percentage, epsilon, mc_baseline, multigrid_weights, ComparisonGrid, McConfig,
    PoseMetric,
};
use cayley_atlas::io::{
    format_node, format_path_matrix, format_paths, format_problem, format_roadmap, load_problem, load_roadmap,
    write_metrics, MetricsRow, ProblemFile,
};
use cayley_atlas::model::{InterestSet, PairId, Problem};
use cayley_atlas::paths::{path_matrix, shortest_path, PathQueryConfig};
use clap::{Args, Parser, Subcommand};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "atlas", version, about = "Atlas the configuration space of two constrained point-sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build an atlas and write RoadMap.txt and Node<id>.txt files.
    Atlas(AtlasArgs),
    /// Shortest paths between vertex regions of a saved atlas.
    Paths(PathsArgs),
    /// Compare sampling coverage of atlas variants and a Monte Carlo chain.
    Coverage(CoverageArgs),
    /// Sample live behind the HTTP steering API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct ProblemArgs {
    /// Problem file.
    #[arg(long)]
    input: PathBuf,
    /// Step as a fraction of the smallest radius; overrides the file.
    #[arg(long)]
    step: Option<f64>,
    /// Step variant: uniform, inv or prop; overrides the file.
    #[arg(long)]
    variant: Option<Variant>,
    /// Restrict to regions containing one of these pairs, e.g. a1:b1,a2:b3.
    #[arg(long)]
    interest: Option<String>,
    /// Levels below the roots to descend.
    #[arg(long)]
    max_depth: Option<usize>,
    /// Do not create regions below this dimension.
    #[arg(long, default_value_t = 0)]
    dim_floor: usize,
    /// Sampling threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Active edges per root region (1 or 2).
    #[arg(long, default_value_t = 1)]
    root_size: usize,
}

#[derive(Debug, Args)]
struct AtlasArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Accepted for uniformity; atlas construction is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write each feasible placement of B into the node files.
    #[arg(long)]
    realizations: bool,
}

#[derive(Debug, Args)]
struct PathsArgs {
    /// Directory holding RoadMap.txt; paths.txt and path_matrix.txt go here.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, requires = "dst")]
    src: Option<usize>,
    #[arg(long, requires = "src")]
    dst: Option<usize>,
    /// Random vertex-region pairs to query when no pair is given.
    #[arg(long, default_value_t = 100)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Highest dimension allowed along a path.
    #[arg(long, default_value_t = 1)]
    max_dim: usize,
    /// Path matrix counts walks of this length instead of shortest paths.
    #[arg(long)]
    length: Option<usize>,
}

#[derive(Debug, Args)]
struct CoverageArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Chain length; defaults to the first atlas method's sample count.
    #[arg(long)]
    mc_iterations: Option<usize>,
    /// Standard deviation of the chain's translation step.
    #[arg(long, default_value_t = 0.2)]
    mc_step: f64,
    /// Grid points per translation axis.
    #[arg(long, default_value_t = 10)]
    grid: usize,
    /// Grid points per rotation-vector axis.
    #[arg(long, default_value_t = 4)]
    rot_grid: usize,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Write the atlas here on shutdown.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Atlas(a) => cmd_atlas(&a),
        Command::Paths(a) => cmd_paths(&a),
        Command::Coverage(a) => cmd_coverage(&a),
        Command::Serve(a) => cmd_serve(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

/// Problem and atlas settings from the input file and flag overrides.
fn load(args: &ProblemArgs) -> Result<(Arc<Problem>, AtlasConfig), CliError> {
    let ProblemFile { problem, mut sampler } =
        load_problem(&args.input).map_err(|e| usage(format!("{}: {e}", args.input.display())))?;
    if let Some(step) = args.step {
        if !(step > 0.0) || !step.is_finite() {
            return Err(usage(format!("invalid step {step}")));
        }
        sampler.step = step;
    }
    if let Some(v) = args.variant {
        sampler.variant = v;
    }
    if args.dim_floor > 6 {
        return Err(usage(format!("dimension floor {} out of range 0..=6", args.dim_floor)));
    }
    if args.workers == 0 {
        return Err(usage("need at least one worker"));
    }
    if !(1..=2).contains(&args.root_size) {
        return Err(usage("root size must be 1 or 2"));
    }
    let problem = match &args.interest {
        None => problem,
        Some(list) => {
            let pairs = list
                .split(',')
                .map(|item| {
                    let (a, b) = item
                        .split_once(':')
                        .ok_or_else(|| usage(format!("interest pair `{item}` is not A:B")))?;
                    problem.pair_by_labels(a.trim(), b.trim()).map_err(usage)
                })
                .collect::<Result<Vec<PairId>, _>>()?;
            Problem::new(
                problem.a.clone(),
                problem.b.clone(),
                problem.spec.clone(),
                problem.global.clone(),
                Some(InterestSet::new(pairs)),
            )
            .map_err(usage)?
        }
    };
    let cfg = AtlasConfig {
        sampler,
        root_size: args.root_size,
        max_depth: args.max_depth,
        dim_floor: args.dim_floor,
        workers: args.workers,
    };
    Ok((Arc::new(problem), cfg))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))
}

fn write_atlas(atlas: &Atlas, cfg: &AtlasConfig, dir: &Path, realizations: bool) -> Result<(), CliError> {
    create_dir(dir)?;
    let problem = atlas.problem();
    let pf = ProblemFile {
        problem: (**problem).clone(),
        sampler: cfg.sampler,
    };
    write(&dir.join("problem.txt"), &format_problem(&pf))?;
    write(&dir.join("RoadMap.txt"), &format_roadmap(&atlas.roadmap()))?;
    for n in atlas.nodes() {
        write(&dir.join(format!("Node{}.txt", n.id)), &format_node(problem, n, realizations))?;
    }
    Ok(())
}

fn cmd_atlas(args: &AtlasArgs) -> Result<(), CliError> {
    let (problem, cfg) = load(&args.problem)?;
    let start = Instant::now();
    let atlas = build_atlas(problem, &cfg);
    let elapsed = start.elapsed();
    write_atlas(&atlas, &cfg, &args.out, args.realizations)?;
    println!(
        "regions {} samples {} good {} time {:.3}s",
        atlas.len(),
        atlas.total_samples(),
        atlas.total_good_samples(),
        elapsed.as_secs_f64()
    );
    Ok(())
}

fn cmd_paths(args: &PathsArgs) -> Result<(), CliError> {
    let file = args.out.join("RoadMap.txt");
    if !file.exists() {
        return Err(usage(format!("no atlas at {}", file.display())));
    }
    let rm = load_roadmap(&file).map_err(|e| usage(format!("{}: {e}", file.display())))?;
    let cfg = PathQueryConfig { max_dim: args.max_dim };
    let zero = rm.ids_of_dim(0);
    let pairs: Vec<(usize, usize)> = match (args.src, args.dst) {
        (Some(s), Some(d)) => vec![(s, d)],
        _ if zero.is_empty() => Vec::new(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            (0..args.pairs)
                .map(|_| (*zero.choose(&mut rng).unwrap(), *zero.choose(&mut rng).unwrap()))
                .collect()
        }
    };
    let mut paths = Vec::new();
    let start = Instant::now();
    for (s, d) in &pairs {
        if let Some(p) = shortest_path(&rm, *s, *d, &cfg).map_err(usage)? {
            paths.push(p);
        }
    }
    let elapsed = start.elapsed();
    let matrix = path_matrix(&rm, &cfg, args.length).map_err(usage)?;
    write(&args.out.join("paths.txt"), &format_paths(&paths))?;
    write(&args.out.join("path_matrix.txt"), &format_path_matrix(&matrix))?;
    let mean_len = if paths.is_empty() {
        0.0
    } else {
        paths.iter().map(|p| (p.len() - 1) as f64).sum::<f64>() / paths.len() as f64
    };
    let mean_ms = if pairs.is_empty() {
        0.0
    } else {
        elapsed.as_secs_f64() * 1e3 / pairs.len() as f64
    };
    println!(
        "queries {} connected {} mean length {:.3} mean time {:.4}ms",
        pairs.len(),
        paths.len(),
        mean_len,
        mean_ms
    );
    Ok(())
}

fn cmd_coverage(args: &CoverageArgs) -> Result<(), CliError> {
    let (problem, cfg) = load(&args.problem)?;
    if args.grid == 0 || args.rot_grid == 0 {
        return Err(usage("grid resolutions must be positive"));
    }
    let variants = match args.problem.variant {
        Some(v) => vec![v],
        None => vec![Variant::Uniform, Variant::InverseProportional, Variant::Proportional],
    };
    let mut methods = Vec::new();
    for v in variants {
        let mut c = cfg.clone();
        c.sampler.variant = v;
        let atlas = build_atlas(problem.clone(), &c);
        methods.push((format!("atlas-{v}"), atlas_samples(&atlas)));
    }
    let iterations = args.mc_iterations.unwrap_or(methods[0].1.len());
    let mc = mc_baseline(
        &problem,
        &McConfig {
            iterations,
            proposal_scale: args.mc_step,
            seed: args.seed,
        },
    )
    .map_err(runtime)?;
    log::info!("chain acceptance rate {:.3}", mc.acceptance_rate());
    methods.push(("mc".to_string(), mc.samples));

    let spec = ComparisonGrid::for_problem(&problem, args.grid, args.rot_grid);
    let spacing = spec.spacing();
    let grid = spec.near_feasible_points(&problem, spacing / 2.0).map_err(usage)?;
    if grid.is_empty() {
        return Err(runtime("no grid point lies near the feasible region; raise --grid"));
    }
    let metric = PoseMetric::for_problem(&problem);
    let reference = methods[0].1.len().max(1);
    let rows: Vec<MetricsRow> = methods
        .iter()
        .map(|(name, samples)| {
            let eps = epsilon(grid.len(), samples.len().max(1)).expect("nonzero counts");
            MetricsRow {
                method: name.clone(),
                samples: samples.len(),
                grid_points: grid.len(),
                epsilon: eps,
                coverage_pct: coverage_percentage(samples, &grid, eps * spacing, &metric),
                ratio_pct: samples.len() as f64 / reference as f64 * 100.0,
                weighted_samples: multigrid_weights(samples).iter().sum(),
            }
        })
        .collect();
    create_dir(&args.out)?;
    write_metrics(&rows, &args.out.join("metrics.csv")).map_err(runtime)?;
    for r in &rows {
        println!(
            "{} samples {} epsilon {:.4} coverage {:.2}% ratio {:.2}%",
            r.method, r.samples, r.epsilon, r.coverage_pct, r.ratio_pct
        );
    }
    Ok(())
}

fn cmd_serve(args: &ServeArgs) -> Result<(), CliError> {
    let (problem, cfg) = load(&args.problem)?;
    let session = Arc::new(Session::new(problem, cfg.clone()));
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(runtime)?;
    let addr = SocketAddr::from(([127, 0, 0, 1], args.port));
    println!("serving on http://{addr}");
    rt.block_on(cayley_atlas_server::serve(session.clone(), addr, async {
        tokio::signal::ctrl_c().await.ok();
    }))
    .map_err(runtime)?;
    if let Some(dir) = &args.out {
        let shared = session.atlas();
        let atlas = shared.read().unwrap();
        write_atlas(&atlas, &cfg, dir, false)?;
    }
    Ok(())
}
