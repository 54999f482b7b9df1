use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use demix::error::{HarnessError, Result};
use demix::experiments::{noise_rows, phase_rows, run_trials, write_outputs, ExperimentConfig};
use demix::io::read_pgm;
use demix::problem::{load_problem, status_name, write_solution};
use demix::runner::default_workers;
use demix::scenes::{
    chessboard, multiscale, run_scene, scene_config, star_galaxy, star_galaxy_problem, ChessboardParams, MultiscaleParams, Scene,
    StarGalaxyParams, SCENE_EPSILON_FACTOR,
};
use demix_core::{demix as solve_problem, DemixConfig, RngSeed, SolveStatus};

const EXIT_ERROR: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "demix", version, about = "Demixing of structured signals from random measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Success rate over a grid of ambient dimension n and measurements m.
    PhaseMn(SweepArgs),
    /// Success rate over a grid of component count k and measurements m.
    PhaseMk(SweepArgs),
    /// Recovery error against noise level.
    NoiseSweep(SweepArgs),
    /// Point sources over a DCT-sparse background.
    StarGalaxy(SceneArgs),
    /// Sparse foreground, rank-one checkerboard and rotated-sparse noise.
    Chessboard(SceneArgs),
    /// Block-wise low-rank components at several scales.
    Multiscale(SceneArgs),
    /// Solve a problem described by a JSON file.
    Solve(SolveArgs),
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    s: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Inner tolerance as a multiple of ‖b‖².
    #[arg(long)]
    epsilon: Option<f64>,
    /// Success threshold on maxerr.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    full_grid: bool,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SceneArgs {
    /// Image side length.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Inner tolerance as a multiple of ‖b‖².
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Demix this PGM instead of a planted scene (star-galaxy only).
    #[arg(long)]
    image: Option<PathBuf>,
    /// Weight of the smooth component when demixing `--image`.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
}

#[derive(Args)]
struct SolveArgs {
    problem: PathBuf,
    #[arg(long, default_value = "solution")]
    out: PathBuf,
    /// Inner tolerance as a multiple of ‖b‖²; overrides the problem file.
    #[arg(long)]
    epsilon: Option<f64>,
}

fn sweep_config(base: ExperimentConfig, args: &SweepArgs) -> ExperimentConfig {
    let mut c = base;
    let pick = |v: &Option<Vec<usize>>, d: &mut Vec<usize>| {
        if let Some(v) = v {
            d.clone_from(v);
        }
    };
    pick(&args.n, &mut c.n);
    pick(&args.m, &mut c.m);
    pick(&args.k, &mut c.k);
    pick(&args.s, &mut c.s);
    if let Some(a) = &args.alpha {
        c.alpha.clone_from(a);
    }
    if let Some(t) = args.trials {
        c.trials = t;
    }
    if let Some(s) = args.seed {
        c.seed = s;
    }
    if let Some(t) = args.threshold {
        c.threshold = t;
    }
    if let Some(eps) = args.epsilon {
        c.demix.level_set.epsilon_factor = eps;
    }
    c.workers = args.workers.unwrap_or_else(default_workers);
    c
}

fn run_sweep(base: ExperimentConfig, args: &SweepArgs, default_out: &str) -> Result<ExitCode> {
    let config = sweep_config(base, args);
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(default_out));
    let records = run_trials(&config)?;
    write_outputs(&out, config.kind, &records)?;
    match config.kind {
        demix::experiments::ExperimentKind::NoiseSweep => {
            for r in noise_rows(&records) {
                println!("alpha={:.4} mean_maxerr={:.4e} std={:.4e}", r.alpha, r.mean_maxerr, r.std_maxerr);
            }
        }
        _ => {
            for r in phase_rows(&records)? {
                println!("n={} m={} k={} s={} success_rate={:.2} curve_m={:.1}", r.n, r.m, r.k, r.s, r.success_rate, r.curve_m);
            }
        }
    }
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn with_seed(default: RngSeed, seed: Option<u64>) -> RngSeed {
    seed.map_or(default, |s| RngSeed::new(s, default.stream_id))
}

fn status_exit(status: SolveStatus) -> ExitCode {
    match status {
        SolveStatus::Converged => ExitCode::SUCCESS,
        SolveStatus::Infeasible => ExitCode::from(EXIT_INFEASIBLE),
        SolveStatus::NotConverged => ExitCode::from(EXIT_NOT_CONVERGED),
    }
}

fn run_planted(scene: Scene, args: &SceneArgs, default_out: &str) -> Result<ExitCode> {
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(default_out));
    let config = scene_config(args.epsilon.unwrap_or(SCENE_EPSILON_FACTOR));
    let names: Vec<String> = scene.names.iter().map(|s| s.to_string()).collect();
    let outcome = run_scene(&scene.problem, Some(&scene.truth), &names, (scene.rows, scene.cols), &config, Some(&out))?;
    for (name, e) in names.iter().zip(outcome.relative_errors.iter().flatten()) {
        println!("{name}: relative_error={e:.3e}");
    }
    println!("status={} wrote {}", status_name(outcome.solution.status), out.display());
    Ok(status_exit(outcome.solution.status))
}

fn run_star_galaxy(args: &SceneArgs) -> Result<ExitCode> {
    let Some(path) = &args.image else {
        let d = StarGalaxyParams::default();
        let p = StarGalaxyParams {
            size: args.size.unwrap_or(d.size),
            alpha: args.alpha.unwrap_or(d.alpha),
            seed: with_seed(d.seed, args.seed),
            ..d
        };
        return run_planted(star_galaxy(&p)?, args, "out/star-galaxy");
    };
    let pgm = read_pgm(path)?;
    let (rows, cols) = (pgm.height, pgm.width);
    let problem = star_galaxy_problem(pgm.to_unit_column_major(), rows, cols, args.lambda, args.alpha.unwrap_or(0.0))?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("out/star-galaxy"));
    let config = scene_config(args.epsilon.unwrap_or(SCENE_EPSILON_FACTOR));
    let names = vec!["sparse".to_string(), "smooth".to_string()];
    let outcome = run_scene(&problem, None, &names, (rows, cols), &config, Some(&out))?;
    println!("status={} wrote {}", status_name(outcome.solution.status), out.display());
    Ok(status_exit(outcome.solution.status))
}

fn run_solve(args: &SolveArgs) -> Result<ExitCode> {
    let loaded = load_problem(&args.problem)?;
    let mut config = DemixConfig::default();
    config.level_set.epsilon = loaded.epsilon;
    if let Some(factor) = args.epsilon {
        config.level_set.epsilon = None;
        config.level_set.epsilon_factor = factor;
    }
    if let Some(inner) = loaded.inner {
        config.level_set.inner = inner;
    }
    let solution = solve_problem(&loaded.problem, &config, None)?;
    write_solution(&args.out, &loaded.names, &solution)?;
    println!(
        "status={} tau={:.6e} outer_iters={} wrote {}",
        status_name(solution.status),
        solution.tau,
        solution.trace.len(),
        args.out.display()
    );
    Ok(status_exit(solution.status))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::PhaseMn(a) => run_sweep(ExperimentConfig::phase_mn(a.full_grid), a, "out/phase-mn"),
        Command::PhaseMk(a) => run_sweep(ExperimentConfig::phase_mk(a.full_grid), a, "out/phase-mk"),
        Command::NoiseSweep(a) => run_sweep(ExperimentConfig::noise_sweep(a.full_grid), a, "out/noise-sweep"),
        Command::StarGalaxy(a) => run_star_galaxy(a),
        Command::Chessboard(a) => {
            let d = ChessboardParams::default();
            let p = ChessboardParams {
                size: a.size.unwrap_or(d.size),
                alpha: a.alpha.unwrap_or(d.alpha),
                seed: with_seed(d.seed, a.seed),
                ..d
            };
            run_planted(chessboard(&p)?, a, "out/chessboard")
        }
        Command::Multiscale(a) => {
            let d = MultiscaleParams::default();
            let p = MultiscaleParams {
                size: a.size.unwrap_or(d.size),
                alpha: a.alpha.unwrap_or(d.alpha),
                seed: with_seed(d.seed, a.seed),
                ..d
            };
            run_planted(multiscale(&p)?, a, "out/multiscale")
        }
        Command::Solve(a) => run_solve(a),
    }
}

fn report(err: &HarnessError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(if err.is_io() { EXIT_IO } else { EXIT_ERROR })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    run(cli).unwrap_or_else(|e| report(&e))
}
