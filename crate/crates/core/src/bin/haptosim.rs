use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use haptosim::config::{load_config, serialize_config, SimulationConfig, Solver};
use haptosim::mms::{convergence_study, MmsCase, MmsConfig};
use haptosim::output::OutputSink;
use haptosim::preset::InitialPreset;
use haptosim::sim::{compare_solvers, initial_state, simulate};
use haptosim::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_MONITOR: u8 = 3;

#[derive(Parser)]
#[command(
    name = "haptosim",
    version,
    about = "Haptotaxis cancer invasion simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override the configured solver.
    #[arg(long, global = true, value_parser = ["direct", "picard"])]
    solver: Option<String>,

    /// Abort with exit code 3 on the first hard monitor violation.
    #[arg(long, global = true)]
    strict_monitors: bool,

    /// Accept parameters outside the proven global-existence regime.
    #[arg(long, global = true)]
    allow_unproven: bool,

    /// Output directory (overrides the configured one).
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Seed for randomized initial data.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write snapshots and the monitor series.
    Simulate { config: PathBuf },
    /// Manufactured-solution convergence study.
    Mms {
        /// equilibrium, diffusion or full
        case: String,
        /// Comma-separated grid sizes, e.g. 32,64,128
        levels: String,
    },
    /// Parse and check a configuration without running it.
    Validate { config: PathBuf },
    /// Run the direct and fixed-point solvers and report their discrepancy.
    CompareSolvers { config: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidParameters(_)
        | Error::InvalidGrid(_)
        | Error::InvalidRunConfig(_)
        | Error::InvalidEmtRate(_)
        | Error::Format { .. } => EXIT_CONFIG,
        Error::MonitorViolation { .. } => EXIT_MONITOR,
        Error::AtTime { source, .. }
        | Error::Window { source, .. }
        | Error::Refinement { source, .. } => exit_code(source),
        _ => EXIT_RUNTIME,
    }
}

fn load(cli: &Cli, path: &Path) -> Result<SimulationConfig, Error> {
    let mut cfg = load_config(path).map_err(|e| match e {
        Error::Io { .. } => Error::Config(vec![e.to_string()]),
        other => other,
    })?;
    if let Some(s) = &cli.solver {
        cfg.run.solver = s.parse()?;
    }
    if cli.strict_monitors {
        cfg.run.strict_monitors = true;
    }
    if cli.allow_unproven {
        cfg.run.allow_unproven = true;
    }
    if let Some(dir) = &cli.output {
        cfg.output.directory = dir.clone();
    }
    if let Some(seed) = cli.seed {
        if !matches!(cfg.initial, InitialPreset::RandomModes { .. }) {
            eprintln!("note: --seed has no effect on a deterministic initial preset");
        }
        cfg.initial = cfg.initial.with_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_simulate(cli: &Cli, path: &Path) -> Result<(), Error> {
    let cfg = load(cli, path)?;
    let dir = cfg.output.directory.clone();
    let mut sink = OutputSink::create(&dir, &cfg.output.formats)?;
    let resolved = dir.join("config.toml");
    std::fs::write(&resolved, serialize_config(&cfg)?).map_err(|e| Error::Io {
        path: resolved.clone(),
        source: e,
    })?;
    let report = simulate(&cfg, &mut sink)?;
    sink.finish()?;
    if report.initial_clipped > 0 {
        println!(
            "initial data: {} cells clipped to keep 0 ≤ v ≤ 1",
            report.initial_clipped
        );
    }
    let s = &report.final_state;
    println!("solver: {:?}", report.solver);
    println!("final time: {}", s.time);
    if let Some(sum) = &report.summary {
        println!(
            "steps: {} (dt in [{:e}, {:e}], {} step halvings)",
            sum.steps, sum.dt_min, sum.dt_max, sum.retries
        );
        println!("clamped cells: {}", sum.clamps.total());
    }
    if !report.traces.is_empty() {
        let iters: usize = report.traces.iter().map(|t| t.iterations).sum();
        let ratio = report
            .traces
            .iter()
            .filter_map(|t| t.max_ratio())
            .fold(0.0, f64::max);
        println!(
            "windows: {} ({} iterations, max contraction ratio {:.3})",
            report.traces.len(),
            iters,
            ratio
        );
    }
    println!(
        "monitor violations: {} soft, {} hard",
        report.soft_violations, report.hard_violations
    );
    for (label, f) in s.labels().iter().zip(s.fields()) {
        println!("{label}: min {:.6e} max {:.6e}", f.min(), f.max());
    }
    println!("output: {}", dir.display());
    Ok(())
}

fn cmd_mms(cli: &Cli, case: &str, levels: &str) -> Result<(), Error> {
    let case: MmsCase = case.parse()?;
    let sizes = levels
        .split(',')
        .map(|t| {
            t.trim().parse::<usize>().map_err(|_| {
                Error::Config(vec![format!("levels: cannot parse {t:?} as a grid size")])
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(&n) = sizes.iter().find(|&&n| n < 3) {
        return Err(Error::Config(vec![format!(
            "levels: grid size {n} below the minimum of 3"
        )]));
    }
    let table = convergence_study(case, &sizes, &MmsConfig::default())?;
    let csv = table.to_csv();
    print!("{csv}");
    for (f, name) in haptosim::mms::FIELDS.iter().enumerate() {
        if let Some(o) = table.fitted_order(f) {
            eprintln!("fitted order {name}: {o:.3}");
        }
    }
    if let Some(dir) = &cli.output {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        let path = dir.join(format!("mms_{}.csv", case.name()));
        std::fs::write(&path, csv).map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}

fn cmd_validate(cli: &Cli, path: &Path) -> Result<(), Error> {
    let cfg = load(cli, path)?;
    let init = initial_state(&cfg)?;
    let g = cfg.grid()?;
    println!(
        "ok: {}x{} grid on [0, {}] x [0, {}], solver {:?}, t_end {}",
        g.nx(),
        g.ny(),
        g.lx(),
        g.ly(),
        cfg.run.solver,
        cfg.run.t_end
    );
    if init.clipped > 0 {
        println!(
            "initial data: {} cells clipped to keep 0 ≤ v ≤ 1",
            init.clipped
        );
    }
    Ok(())
}

fn cmd_compare(cli: &Cli, path: &Path) -> Result<(), Error> {
    let mut cfg = load(cli, path)?;
    cfg.run.solver = Solver::Picard;
    let c = compare_solvers(&cfg)?;
    println!("h: {}", c.h);
    println!("dt: {:e}", c.dt);
    println!("discrepancy: {:e}", c.discrepancy);
    println!("tolerance: {:e}", c.tolerance);
    println!(
        "windows: {} ({} iterations)",
        c.traces.len(),
        c.iterations()
    );
    match c.max_ratio() {
        Some(r) => println!("max contraction ratio: {r:.4}"),
        None => println!("max contraction ratio: n/a"),
    }
    if c.within_tolerance() {
        println!("within tolerance: yes");
        Ok(())
    } else {
        println!("within tolerance: no");
        Err(Error::InvalidState(format!(
            "solver discrepancy {:e} exceeds {:e}",
            c.discrepancy, c.tolerance
        )))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { config } => cmd_simulate(&cli, config),
        Command::Mms { case, levels } => cmd_mms(&cli, case, levels),
        Command::Validate { config } => cmd_validate(&cli, config),
        Command::CompareSolvers { config } => cmd_compare(&cli, config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
