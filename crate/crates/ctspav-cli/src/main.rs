//! Command-line front end: synthetic instance generation, commuter
//! clustering, solving, and case-study analytics emitted as CSV/JSON.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ctspav::analytics::{analyze, congestion_csv, metrics_csv};
use ctspav::clustering::{cluster, clusters_to_json, parse_points_csv};
use ctspav::generator::{generate_instance, GeneratorParams};
use ctspav::instance::Instance;
use ctspav::model::{AvRoute, AvRoutePlan, Variant};
use ctspav::mrea::MiniRoute;
use ctspav::runner::{prepare, solve, SolutionFile, SolveRequest, SolveRun};
use std::path::{Path, PathBuf};
use std::time::Duration;

const EXIT_OK: i32 = 0;
const EXIT_BAD_INPUT: i32 = 2;
const EXIT_TIME_LIMIT: i32 = 3;
const EXIT_INFEASIBLE: i32 = 4;

#[derive(Parser)]
#[command(
    name = "ctspav",
    about = "Commute trip sharing with autonomous vehicles",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic problem instance.
    Generate(GenerateArgs),
    /// Partition commuters into size-capped neighborhoods.
    Cluster(ClusterArgs),
    /// Solve an instance with one solver variant.
    Solve(SolveArgs),
    /// Compare solved plans against the no-sharing baseline.
    Analyze(AnalyzeArgs),
    /// Summarize solution files into one table.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of commuters.
    #[arg(long)]
    n: usize,
    /// Desired-time shift tolerance, seconds.
    #[arg(long = "delta-secs")]
    delta_secs: Option<i64>,
    /// Ride-duration extension fraction.
    #[arg(long = "ride-factor")]
    ride_factor: Option<f64>,
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Parameter profile: large, tight, neighborhood or medium.
    #[arg(long, default_value = "large")]
    profile: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    /// CSV of commuter_id,x,y rows.
    #[arg(long)]
    input: PathBuf,
    /// Maximum commuters per neighborhood.
    #[arg(long, default_value_t = 100)]
    cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "hybrid")]
    variant: String,
    /// Wall-clock budget in seconds.
    #[arg(long = "budget-secs")]
    budget_secs: Option<f64>,
    /// Deterministic node budget (mainly for reproducible experiments).
    #[arg(long = "node-budget")]
    node_budget: Option<usize>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Directory for solver/cut/bound logs.
    #[arg(long = "log-dir")]
    log_dir: Option<PathBuf>,
    /// Cache file for the enumerated mini-route set.
    #[arg(long = "omega-cache")]
    omega_cache: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Solution JSON files produced by `solve`.
    #[arg(long, num_args = 1.., required = true)]
    solutions: Vec<PathBuf>,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    solutions: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_BAD_INPUT
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Generate(args) => generate_cmd(args),
        Command::Cluster(args) => cluster_cmd(args),
        Command::Solve(args) => solve_cmd(args),
        Command::Analyze(args) => analyze_cmd(args),
        Command::Report(args) => report_cmd(args),
    }
}

fn generate_cmd(args: GenerateArgs) -> Result<i32> {
    if args.n == 0 {
        bail!("--n must be at least 1");
    }
    let mut params = match args.profile.as_str() {
        "large" => GeneratorParams::default_profile(args.n, args.seed),
        "tight" => GeneratorParams::tight_profile(args.n, args.seed),
        "neighborhood" => GeneratorParams::neighborhood_profile(args.n, args.seed),
        "medium" => GeneratorParams::medium_profile(args.n, args.seed),
        other => bail!("unknown profile '{other}'"),
    };
    if let Some(d) = args.delta_secs {
        params.delta = d;
    }
    if let Some(r) = args.ride_factor {
        params.ride_factor = r;
    }
    if let Some(k) = args.capacity {
        params.capacity = k;
    }
    let instance = generate_instance(&params).map_err(|e| anyhow!("{e}"))?;
    instance.write_file(&args.out).map_err(|e| anyhow!("{e}"))?;
    eprintln!(
        "wrote instance n={} hash={} to {}",
        instance.n,
        instance.content_hash(),
        args.out.display()
    );
    Ok(EXIT_OK)
}

fn cluster_cmd(args: ClusterArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let (ids, points) = parse_points_csv(&text).map_err(|e| anyhow!("{e}"))?;
    if points.is_empty() {
        bail!("no points in {}", args.input.display());
    }
    let clusters = cluster(&points, args.cap, args.seed).map_err(|e| anyhow!("{e}"))?;
    std::fs::write(&args.out, clusters_to_json(&ids, &clusters))?;
    eprintln!(
        "wrote {} clusters to {}",
        clusters.len(),
        args.out.display()
    );
    Ok(EXIT_OK)
}

fn solve_cmd(args: SolveArgs) -> Result<i32> {
    let instance = Instance::read_file(&args.instance).map_err(|e| anyhow!("{e}"))?;
    let variant: Variant = args.variant.parse().map_err(|e: String| anyhow!(e))?;
    if args.budget_secs.map_or(false, |b| b <= 0.0) {
        bail!("--budget-secs must be positive");
    }
    if args.threads == 0 {
        bail!("--threads must be at least 1");
    }
    let prepared = prepare(&instance, args.omega_cache.as_deref());
    let request = SolveRequest {
        variant,
        budget: args.budget_secs.map(Duration::from_secs_f64),
        node_budget: args.node_budget,
        threads: args.threads,
        seed: args.seed,
    };
    let run: SolveRun = solve(&instance, &prepared, &request).map_err(|e| anyhow!("{e}"))?;
    std::fs::write(&args.out, serde_json::to_string_pretty(&run.file)?)?;
    if let Some(dir) = &args.log_dir {
        std::fs::create_dir_all(dir)?;
        let stem = args
            .out
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("solve");
        std::fs::write(dir.join(format!("{stem}.nodes.csv")), &run.solver_log)?;
        std::fs::write(dir.join(format!("{stem}.cuts.csv")), &run.cut_log_csv)?;
        if let Some(cg) = &run.cg_log_csv {
            std::fs::write(dir.join(format!("{stem}.cg.csv")), cg)?;
        }
    }
    eprintln!(
        "variant={} status={} chi={:?} nodes={}",
        run.file.variant, run.file.status, run.file.chi, run.file.nodes
    );
    Ok(match run.file.status.as_str() {
        "optimal" => EXIT_OK,
        "time-limit" => EXIT_TIME_LIMIT,
        _ => EXIT_INFEASIBLE,
    })
}

fn load_plan(path: &Path, instance: &Instance) -> Result<(String, AvRoutePlan)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: SolutionFile = serde_json::from_str(&text)?;
    if file.instance_hash != instance.content_hash() {
        bail!(
            "{} was solved for instance {} but the given instance hashes to {}",
            path.display(),
            file.instance_hash,
            instance.content_hash()
        );
    }
    if file.chi.is_none() {
        bail!("{} holds no incumbent plan", path.display());
    }
    let mut routes = Vec::new();
    let mut total: i64 = 0;
    let mut covered: i64 = 0;
    for r in &file.routes {
        let minis: Vec<MiniRoute> = r
            .mini_routes
            .iter()
            .map(|vo| {
                MiniRoute::from_visit_order(vo.clone(), instance)
                    .ok_or_else(|| anyhow!("{}: stored mini route is infeasible", path.display()))
            })
            .collect::<Result<_>>()?;
        let seqs: Vec<&[usize]> = minis.iter().map(|m| m.visit_order.as_slice()).collect();
        let schedule = ctspav::feasibility::check_av_route(&seqs, instance)
            .map_err(|e| anyhow!("{}: stored chain fails validation: {e}", path.display()))?;
        let full: Vec<usize> = seqs.iter().flat_map(|s| s.iter().copied()).collect();
        total += instance.dist(instance.source(), full[0]);
        total += full
            .windows(2)
            .map(|w| instance.dist(w[0], w[1]))
            .sum::<i64>();
        total += instance.dist(*full.last().unwrap(), instance.sink());
        covered += minis.iter().map(|m| m.length).sum::<i64>();
        routes.push(AvRoute {
            mini_routes: minis,
            schedule,
        });
    }
    let label = format!(
        "{}-{}",
        file.variant,
        path.file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("solution")
    );
    Ok((
        label,
        AvRoutePlan {
            vehicle_count: routes.len(),
            total_distance: total,
            empty_distance: total - covered,
            routes,
        },
    ))
}

fn analyze_cmd(args: AnalyzeArgs) -> Result<i32> {
    let instance = Instance::read_file(&args.instance).map_err(|e| anyhow!("{e}"))?;
    let mut plans = Vec::new();
    for path in &args.solutions {
        plans.push(load_plan(path, &instance)?);
    }
    let report = analyze(&instance, &plans);
    std::fs::create_dir_all(&args.out_dir)?;
    std::fs::write(args.out_dir.join("metrics.csv"), metrics_csv(&report))?;
    std::fs::write(args.out_dir.join("congestion.csv"), congestion_csv(&report))?;
    std::fs::write(
        args.out_dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    eprintln!(
        "wrote analytics for {} plans to {}",
        plans.len(),
        args.out_dir.display()
    );
    Ok(EXIT_OK)
}

fn report_cmd(args: ReportArgs) -> Result<i32> {
    let mut rows = String::from(
        "file,variant,status,chi,total_distance_m,empty_distance_m,chi_lb,vehicle_count_gap,optimality_gap,nodes,omega_count,arc_count\n",
    );
    for path in &args.solutions {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: SolutionFile = serde_json::from_str(&text)?;
        rows.push_str(&format!(
            "{},{},{},{},{},{},{:.6},{},{},{},{},{}\n",
            path.display(),
            file.variant,
            file.status,
            file.chi.map_or(String::from("-"), |v| v.to_string()),
            file.total_distance_m
                .map_or(String::from("-"), |v| v.to_string()),
            file.empty_distance_m
                .map_or(String::from("-"), |v| v.to_string()),
            file.chi_lb,
            file.gaps
                .as_ref()
                .map_or(String::from("-"), |g| g.vehicle_count_gap.to_string()),
            file.gaps
                .as_ref()
                .map_or(String::from("-"), |g| format!("{:.4}", g.optimality_gap)),
            file.nodes,
            file.omega_count,
            file.arc_count,
        ));
    }
    std::fs::write(&args.out, rows)?;
    eprintln!(
        "wrote report for {} solutions to {}",
        args.solutions.len(),
        args.out.display()
    );
    Ok(EXIT_OK)
}
