use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use beamsel::bench::{self, Grid, SuiteConfig, SummaryTable, Variant};
use beamsel::bnb::{self, SolveConfig};
use beamsel::heuristic::{self, HeuristicConfig, HeuristicStatus};
use beamsel::model::{instance_to_json, DEFAULT_EPS};
use beamsel::{generate_instance, read_instance, CandidateSolution, PresetMapping, ProblemInstance, TolPreset};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "beamsel", version, about = "Sparse constant-modulus beamformer design")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a random instance and write it as JSON.
    Gen {
        #[command(flatten)]
        draw: Draw,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one instance.
    Solve(SolveArgs),
    /// Run every variant over an instance ensemble and write a CSV.
    Suite(SuiteArgs),
    /// Summarize a suite CSV.
    Stats {
        #[arg(long)]
        csv: PathBuf,
    },
}

#[derive(Args)]
struct Draw {
    #[arg(long, short = 'n', default_value_t = 16)]
    antennas: usize,
    #[arg(long, short = 'k', default_value_t = 2)]
    users: usize,
    /// Error bound as a fraction of the symbol magnitude: 0.1q or 0.2q.
    #[arg(long, default_value = "0.1q")]
    preset: TolPreset,
    /// How a preset becomes the Euclidean bound: bound or squared.
    #[arg(long, default_value = "bound")]
    mapping: PresetMapping,
    /// Overrides the preset with an explicit bound on ‖s − Hᵀx‖₂.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Draw {
    fn instance(&self) -> Result<ProblemInstance> {
        let tol = self.tol.unwrap_or_else(|| self.preset.tol(self.mapping));
        Ok(generate_instance(self.antennas, self.users, tol, self.seed)?)
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Instance JSON; a random instance is drawn when omitted.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[command(flatten)]
    draw: Draw,
    #[arg(long, default_value = "modulus+heur")]
    variant: Variant,
    #[arg(long, default_value_t = 3600.0)]
    time_limit: f64,
    #[arg(long)]
    node_limit: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    /// Seed of the heuristic restarts.
    #[arg(long, default_value_t = 0)]
    heur_seed: u64,
    /// Writes the solution as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SuiteArgs {
    #[arg(long, default_value = "desk")]
    grid: Grid,
    /// Instances per (N, K, preset) cell.
    #[arg(long)]
    seeds: Option<usize>,
    /// Replaces the grid's antenna counts.
    #[arg(long, value_delimiter = ',')]
    antennas: Option<Vec<usize>>,
    /// Replaces the grid's user counts.
    #[arg(long, value_delimiter = ',')]
    users: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    csv: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = Variant::ALL.to_vec())]
    variants: Vec<Variant>,
    #[arg(long, default_value_t = 0)]
    master_seed: u64,
    #[arg(long, default_value_t = 300.0)]
    time_limit: f64,
    #[arg(long)]
    node_limit: Option<usize>,
    #[arg(long, default_value = "bound")]
    mapping: PresetMapping,
    /// Leaves the time columns empty so repeated runs give identical files.
    #[arg(long)]
    no_timings: bool,
}

#[derive(Serialize)]
struct SolutionFile {
    variant: String,
    status: String,
    cardinality: Option<usize>,
    error: Option<f64>,
    nodes: Option<usize>,
    dual_bound: Option<f64>,
    time_s: f64,
    x: Vec<Complex64>,
}

fn solve(args: &SolveArgs) -> Result<SolutionFile> {
    let inst = match &args.input {
        Some(p) => read_instance(p).with_context(|| format!("reading {}", p.display()))?,
        None => args.draw.instance()?,
    };
    let start = std::time::Instant::now();
    let mut warm = None;
    let mut heur_x = None;
    if args.variant.uses_heuristic() {
        let h = heuristic::solve_heuristic(&inst, &HeuristicConfig { seed: args.heur_seed, ..Default::default() })?;
        log::info!("heuristic: {:?} with {} antennas, error {:.6}", h.status, h.cardinality, h.error);
        if h.status == HeuristicStatus::Feasible {
            warm = Some(CandidateSolution::from_complex(&h.x.x));
        }
        if !args.variant.is_exact() {
            let feasible = h.status == HeuristicStatus::Feasible;
            heur_x = Some(SolutionFile {
                variant: args.variant.to_string(),
                status: if feasible { "feasible" } else { "infeasible" }.into(),
                cardinality: feasible.then_some(h.cardinality),
                error: Some(h.error),
                nodes: None,
                dual_bound: None,
                time_s: start.elapsed().as_secs_f64(),
                x: h.x.x,
            });
        }
    }
    if let Some(out) = heur_x {
        return Ok(out);
    }
    let cfg = SolveConfig {
        time_limit_s: args.time_limit,
        node_limit: args.node_limit,
        eps: args.eps,
        modulus_handler: args.variant.modulus_handler(),
        initial_solution: warm,
        ..SolveConfig::default()
    };
    let r = bnb::solve_exact(&inst, &cfg)?;
    let x = r.solution.as_ref().map(CandidateSolution::to_complex).map(|c| c.x).unwrap_or_default();
    let error = if x.is_empty() { None } else { Some(inst.residual(&x)?) };
    Ok(SolutionFile {
        variant: args.variant.to_string(),
        status: r.status.to_string(),
        cardinality: r.cardinality,
        error,
        nodes: Some(r.nodes),
        dual_bound: Some(r.dual_bound),
        time_s: start.elapsed().as_secs_f64(),
        x,
    })
}

fn suite(args: &SuiteArgs) -> Result<()> {
    let mut grid = args.grid.clone();
    if let Some(s) = args.seeds {
        grid.seeds = s;
    }
    if let Some(a) = &args.antennas {
        grid.antennas = a.clone();
    }
    if let Some(u) = &args.users {
        grid.users = u.clone();
    }
    let cfg = SuiteConfig {
        grid,
        variants: args.variants.clone(),
        master_seed: args.master_seed,
        time_limit_s: args.time_limit,
        node_limit: args.node_limit,
        mapping: args.mapping,
        workers: args.workers,
        ..SuiteConfig::default()
    };
    let records = bench::run_suite(&cfg)?;
    let file = File::create(&args.csv).with_context(|| format!("creating {}", args.csv.display()))?;
    bench::write_csv(&records, BufWriter::new(file), !args.no_timings)?;
    if !args.no_timings {
        print!("{}", SummaryTable(&bench::summarize(&records)?));
    }
    Ok(())
}

fn write_json<T: Serialize>(value: &T, out: Option<&PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => writeln!(io::stdout(), "{text}")?,
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().cmd {
        Cmd::Gen { draw, out } => {
            let text = instance_to_json(&draw.instance()?);
            match out {
                Some(p) => std::fs::write(&p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
                None => println!("{text}"),
            }
        }
        Cmd::Solve(args) => {
            if !(args.time_limit > 0.0) {
                bail!("--time-limit must be positive");
            }
            let sol = solve(&args)?;
            eprintln!(
                "{}: {} with {} active antennas ({:.3} s)",
                sol.variant,
                sol.status,
                sol.cardinality.map_or("no".to_string(), |c| c.to_string()),
                sol.time_s
            );
            write_json(&sol, args.out.as_ref())?;
        }
        Cmd::Suite(args) => suite(&args)?,
        Cmd::Stats { csv } => {
            let file = File::open(&csv).with_context(|| format!("opening {}", csv.display()))?;
            let records = bench::read_csv(file)?;
            print!("{}", SummaryTable(&bench::summarize(&records)?));
        }
    }
    Ok(())
}
