use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use surfsense::experiment::{resolve_basis, run_and_write, ExperimentConfig};
use surfsense::sampling::{MeasureKind, SampleSet, SamplingMeasure};
use surfsense::sensing::{assemble, read_matrix, Convention};
use surfsense::solver::{basis_pursuit, basis_pursuit_denoise, SolverConfig};
use surfsense::surface::{build_spectrum, SurfaceProfile};
use surfsense::verify::{orthocheck, sphere_bounds, surface_bounds, write_spectrum_csv};

/// Exit status for a check that ran but did not pass.
const VERIFY_FAILED: u8 = 2;

#[derive(Parser)]
#[command(name = "surfsense", version, about = "Sparse recovery with eigenfunctions of surfaces of revolution")]
struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Success-rate grid of basis pursuit over (m, s).
    Phase(PhaseArgs),
    /// Weighted sup-norm sweep of the eigenfunctions.
    VerifyBounds(BoundsArgs),
    /// Discrete Gram matrix of the spherical harmonics.
    Orthocheck(OrthoArgs),
    /// Computes and stores the first N eigenpairs of a profile.
    Spectrum(SpectrumArgs),
    /// Draws sample points from a sampling measure.
    Sample(SampleArgs),
    /// Builds the sensing matrix for a stored point set.
    Assemble(AssembleArgs),
    /// Solves min ‖z‖₁ subject to Az = y (or ‖Az − y‖ ≤ ε√m).
    Solve(SolveArgs),
}

#[derive(Args, Clone)]
struct SurfaceArgs {
    /// "sphere" or a profile JSON file.
    #[arg(long)]
    surface: Option<String>,
    /// Sphere bandlimit L (N = L²).
    #[arg(long)]
    bandlimit: Option<usize>,
    /// Number of eigenfunctions on a general surface.
    #[arg(long)]
    modes: Option<usize>,
    /// Stored spectrum (`<stem>.json`) to reuse instead of recomputing.
    #[arg(long)]
    spectrum: Option<PathBuf>,
    #[arg(long)]
    grid_points: Option<usize>,
}

impl SurfaceArgs {
    fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(s) = &self.surface {
            config.surface = s.clone();
        }
        if self.bandlimit.is_some() {
            config.bandlimit = self.bandlimit;
        }
        if self.modes.is_some() {
            config.modes = self.modes;
        }
        if self.spectrum.is_some() {
            config.spectrum = self.spectrum.clone();
        }
        if let Some(g) = self.grid_points {
            config.grid_points = g;
        }
    }

    fn config(&self) -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        self.apply(&mut c);
        c
    }
}

#[derive(Args)]
struct PhaseArgs {
    /// Experiment configuration (JSON); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    surface: SurfaceArgs,
    #[arg(long)]
    measure: Option<MeasureKind>,
    /// Comma-separated sample counts.
    #[arg(long, value_delimiter = ',')]
    m_grid: Option<Vec<usize>>,
    /// Comma-separated sparsity fractions s/m in (0, 1].
    #[arg(long, value_delimiter = ',')]
    s_grid: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    surface: SurfaceArgs,
    /// Largest degree ℓ on the sphere.
    #[arg(long, default_value_t = 60)]
    max_degree: usize,
    /// θ-grid size for the sphere sweep.
    #[arg(long, default_value_t = 8192)]
    grid: usize,
    /// Allowed excess of the fitted slope over its exponent.
    #[arg(long, default_value_t = 0.02)]
    slope_margin: f64,
    /// Output CSV.
    #[arg(long, default_value = "bounds.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct OrthoArgs {
    #[arg(long, default_value_t = 20)]
    bandlimit: usize,
    /// Gauss–Legendre nodes in cos θ (default 2L).
    #[arg(long)]
    theta_nodes: Option<usize>,
    /// Trapezoid nodes in φ (default 4L).
    #[arg(long)]
    phi_nodes: Option<usize>,
    #[arg(long, default_value_t = 1e-10)]
    tolerance: f64,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Profile JSON file, or "sphere".
    #[arg(long)]
    surface: String,
    #[arg(long, default_value_t = 400)]
    modes: usize,
    #[arg(long, default_value_t = 4000)]
    grid_points: usize,
    #[arg(long, default_value = "spectrum-out")]
    out: PathBuf,
    #[arg(long, default_value = "spectrum")]
    stem: String,
}

#[derive(Args)]
struct SampleArgs {
    /// Profile JSON file, or "sphere".
    #[arg(long, default_value = "sphere")]
    surface: String,
    #[arg(long, default_value_t = MeasureKind::Preconditioned)]
    measure: MeasureKind,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "points.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct AssembleArgs {
    #[command(flatten)]
    surface: SurfaceArgs,
    /// Point CSV written by `sample`, with its JSON manifest alongside.
    #[arg(long)]
    points: PathBuf,
    #[arg(long, default_value = "orthonormal")]
    convention: String,
    #[arg(long, default_value = "matrix.bin")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// m × N matrix in the SCSMAT1 format.
    #[arg(long)]
    matrix: PathBuf,
    /// m × 1 right-hand side in the SCSMAT1 format.
    #[arg(long)]
    rhs: PathBuf,
    /// Noise level ε; 0 solves the equality-constrained problem.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Solver configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "solution.json")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot start {t} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let outcome = match cli.command {
        Command::Phase(a) => phase(a),
        Command::VerifyBounds(a) => verify_bounds(a),
        Command::Orthocheck(a) => ortho(a),
        Command::Spectrum(a) => spectrum(a),
        Command::Sample(a) => sample(a),
        Command::Assemble(a) => assemble_cmd(a),
        Command::Solve(a) => solve(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(VERIFY_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_profile(surface: &str) -> Result<SurfaceProfile> {
    if surface == "sphere" {
        return Ok(SurfaceProfile::sphere());
    }
    SurfaceProfile::from_json_file(Path::new(surface)).with_context(|| format!("loading profile {surface}"))
}

fn phase(a: PhaseArgs) -> Result<bool> {
    let mut config = match &a.config {
        Some(p) => ExperimentConfig::from_json_file(p)?,
        None => ExperimentConfig::default(),
    };
    a.surface.apply(&mut config);
    if let Some(m) = a.measure {
        config.measure = m;
    }
    if a.m_grid.is_some() {
        config.m_grid = a.m_grid;
    }
    if a.s_grid.is_some() {
        config.s_grid = a.s_grid;
    }
    if let Some(t) = a.trials {
        config.trials = t;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(i) = a.max_iterations {
        config.solver.max_iterations = i;
    }
    if let Some(o) = a.out {
        config.output = o;
    }
    let diagram = run_and_write(&config)?;
    let unconverged: usize = diagram.unconverged.iter().flatten().sum();
    println!(
        "{} measure, N = {}: {} cells × {} trials written to {} ({unconverged} solves hit the iteration cap)",
        diagram.measure,
        diagram.basis_size,
        diagram.m_values.len() * diagram.s_fractions.len(),
        diagram.trials,
        config.output.display()
    );
    for (m0, m1, ratio) in diagram.monotonicity_violations() {
        println!("note: success rate drops from m = {m0} to m = {m1} at s/m = {ratio}");
    }
    Ok(true)
}

fn verify_bounds(a: BoundsArgs) -> Result<bool> {
    let config = a.surface.config();
    let (report, level) = if config.is_sphere() {
        (sphere_bounds(a.max_degree, a.grid)?, "l")
    } else {
        let (profile, basis) = resolve_basis(&config)?;
        let table = match basis {
            surfsense::sensing::Basis::Surface(t) => t,
            surfsense::sensing::Basis::Sphere { .. } => unreachable!("non-sphere config"),
        };
        (surface_bounds(&profile, &table)?, "lambda")
    };
    report.write_csv(&a.out, level)?;
    let limit = report.exponent + a.slope_margin;
    let ok = report.slope <= limit;
    println!(
        "C* = {:.6}, slope = {:.4} (limit {:.4}): {}",
        report.constant,
        report.slope,
        limit,
        if ok { "ok" } else { "FAILED" }
    );
    Ok(ok)
}

fn ortho(a: OrthoArgs) -> Result<bool> {
    let rep = orthocheck(a.bandlimit, a.theta_nodes, a.phi_nodes)?;
    let ok = rep.max_deviation <= a.tolerance;
    println!(
        "L = {}, {}×{} nodes: max off-diagonal {:.3e}, max diagonal deviation {:.3e} (worst entry {:?}): {}",
        rep.bandlimit,
        rep.theta_nodes,
        rep.phi_nodes,
        rep.max_off_diagonal,
        rep.max_diagonal,
        rep.worst_entry,
        if ok { "ok" } else { "FAILED" }
    );
    Ok(ok)
}

fn spectrum(a: SpectrumArgs) -> Result<bool> {
    let profile = load_profile(&a.surface)?;
    let table = build_spectrum(&profile, a.modes, a.grid_points)?;
    std::fs::create_dir_all(&a.out)?;
    table.save(&a.out, &a.stem)?;
    write_spectrum_csv(&table, &a.out.join(format!("{}.csv", a.stem)))?;
    println!("{} eigenpairs of {} written to {}", table.len(), profile.name(), a.out.display());
    Ok(true)
}

fn sample(a: SampleArgs) -> Result<bool> {
    let profile = load_profile(&a.surface)?;
    let measure = SamplingMeasure::new(&profile, a.measure)?;
    measure.draw(a.m, a.seed)?.write_csv(&a.out)?;
    Ok(true)
}

fn assemble_cmd(a: AssembleArgs) -> Result<bool> {
    let convention = match a.convention.as_str() {
        "orthonormal" => Convention::Orthonormal,
        "literal" => Convention::Literal,
        other => bail!("unknown convention {other:?} (orthonormal | literal)"),
    };
    let samples = SampleSet::read_csv(&a.points)?;
    let (profile, basis) = resolve_basis(&a.surface.config())?;
    let measure = SamplingMeasure::new(&profile, samples.measure.kind)?;
    let problem = assemble(&basis, &measure, &samples, convention)?;
    problem.export(&a.out)?;
    Ok(true)
}

fn solve(a: SolveArgs) -> Result<bool> {
    let config: SolverConfig = match &a.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => SolverConfig::default(),
    };
    let matrix = read_matrix(&a.matrix)?;
    let rhs = read_matrix(&a.rhs)?;
    if rhs.ncols() != 1 || rhs.nrows() != matrix.nrows() {
        bail!("rhs is {}×{}, expected {}×1", rhs.nrows(), rhs.ncols(), matrix.nrows());
    }
    let y: Vec<Complex64> = rhs.iter().copied().collect();
    let result = if a.epsilon > 0.0 {
        basis_pursuit_denoise(&matrix, &y, a.epsilon, &config)?
    } else {
        basis_pursuit(&matrix, &y, &config)?
    };
    serde_json::to_writer_pretty(std::fs::File::create(&a.out)?, &result)?;
    println!(
        "‖z‖₁ = {:.10e}, residual = {:.3e}, {} iterations{}",
        result.objective,
        result.residual,
        result.iterations,
        if result.converged { "" } else { " (not converged)" }
    );
    Ok(true)
}
