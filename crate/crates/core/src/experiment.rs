//! Phase-transition experiments: success rates of basis pursuit over a grid
//! of sample counts m and sparsity ratios s/m.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{mix_seed, MeasureKind, SamplingMeasure};
use crate::sensing::{assemble, random_sparse, synthesize, Basis, Convention};
use crate::solver::{recovered, BasisPursuit, SolverConfig, DEFAULT_RECOVERY_TOL};
use crate::surface::{build_spectrum, SpectrumTable, SurfaceProfile};

/// Salt separating signal seeds from point seeds.
const SIGNAL_SALT: u64 = 0x5167_4e41_4c00_0001;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// "sphere" or the path of a profile JSON document.
    pub surface: String,
    /// Sphere only: harmonics of degree below L, so N = L².
    pub bandlimit: Option<usize>,
    /// General surfaces: number of eigenfunctions N.
    pub modes: Option<usize>,
    /// Precomputed spectrum (`<stem>.json` with its `<stem>.bin`).
    pub spectrum: Option<PathBuf>,
    pub grid_points: usize,
    pub measure: MeasureKind,
    /// Sample counts; defaults to N/20, 2N/20, …, N.
    pub m_grid: Option<Vec<usize>>,
    /// Sparsity as fractions of m; s = max(1, round(ρ m)). Defaults to
    /// 0.05, 0.10, …, 1.00.
    pub s_grid: Option<Vec<f64>>,
    pub trials: usize,
    pub seed: u64,
    pub recovery_tolerance: f64,
    pub solver: SolverConfig,
    pub convention: Convention,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            surface: "sphere".into(),
            bandlimit: None,
            modes: None,
            spectrum: None,
            grid_points: 4000,
            measure: MeasureKind::Preconditioned,
            m_grid: None,
            s_grid: None,
            trials: 50,
            seed: 1,
            recovery_tolerance: DEFAULT_RECOVERY_TOL,
            solver: SolverConfig::default(),
            convention: Convention::Orthonormal,
            output: PathBuf::from("phase-out"),
        }
    }
}

pub const DEFAULT_BANDLIMIT: usize = 20;
pub const DEFAULT_MODES: usize = 400;

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn is_sphere(&self) -> bool {
        self.surface == "sphere"
    }

    /// Size N of the basis.
    pub fn basis_size(&self) -> usize {
        if self.is_sphere() {
            let l = self.bandlimit.unwrap_or(DEFAULT_BANDLIMIT);
            l * l
        } else {
            self.modes.unwrap_or(DEFAULT_MODES)
        }
    }

    pub fn m_values(&self) -> Vec<usize> {
        self.m_grid.clone().unwrap_or_else(|| {
            let n = self.basis_size();
            let step = (n / 20).max(1);
            (1..=n / step).map(|i| i * step).collect()
        })
    }

    pub fn s_fractions(&self) -> Vec<f64> {
        self.s_grid.clone().unwrap_or_else(|| (1..=20).map(|i| i as f64 / 20.0).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        let n = self.basis_size();
        if n == 0 {
            return bad("the basis is empty".into());
        }
        let m = self.m_values();
        if m.is_empty() || m[0] == 0 || m.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("m grid {m:?} must be non-empty, positive and strictly ascending"));
        }
        if *m.last().unwrap() > n {
            return bad(format!("m grid reaches {} but N = {n}", m.last().unwrap()));
        }
        let s = self.s_fractions();
        if s.is_empty() || s.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) || s.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("s grid {s:?} must be non-empty, strictly ascending and within (0, 1]"));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.recovery_tolerance > 0.0) {
            return bad("recovery tolerance must be positive".into());
        }
        if self.bandlimit.is_some() && !self.is_sphere() {
            return bad("bandlimit applies to the sphere only; use modes".into());
        }
        self.solver.validate()
    }
}

/// Sparsity for ratio ρ at m samples.
pub fn sparsity(m: usize, ratio: f64) -> usize {
    ((ratio * m as f64).round() as usize).clamp(1, m)
}

/// The profile and basis named by a configuration.
pub fn resolve_basis(config: &ExperimentConfig) -> Result<(SurfaceProfile, Basis)> {
    if config.is_sphere() {
        if config.modes.is_some() || config.spectrum.is_some() {
            return Err(Error::InvalidArgument("the sphere uses bandlimit, not modes or spectrum".into()));
        }
        let l = config.bandlimit.unwrap_or(DEFAULT_BANDLIMIT);
        return Ok((SurfaceProfile::sphere(), Basis::sphere(l)?));
    }
    let profile = SurfaceProfile::from_json_file(Path::new(&config.surface))?;
    let n = config.basis_size();
    let table = match &config.spectrum {
        Some(path) => {
            let table = load_spectrum(path)?;
            if table.profile != *profile.spec() {
                return Err(Error::InvalidArgument(format!(
                    "spectrum {} was computed for a different profile",
                    path.display()
                )));
            }
            if table.len() < n {
                return Err(Error::InvalidArgument(format!(
                    "spectrum {} holds {} modes, {n} requested",
                    path.display(),
                    table.len()
                )));
            }
            table
        }
        None => build_spectrum(&profile, n, config.grid_points)?,
    };
    if table.len() != n {
        return Err(Error::InvalidArgument(format!("spectrum holds {} modes, expected {n}", table.len())));
    }
    Ok((profile, Basis::surface(table)))
}

/// Loads a spectrum saved as `<stem>.json` + `<stem>.bin` from either path.
pub fn load_spectrum(path: &Path) -> Result<SpectrumTable> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidArgument(format!("bad spectrum path {}", path.display())))?;
    SpectrumTable::load(dir, stem)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub measure: MeasureKind,
    pub basis_size: usize,
    pub seed: u64,
    pub trials: usize,
    pub m_values: Vec<usize>,
    pub s_fractions: Vec<f64>,
    /// successes[s index][m index]
    pub successes: Vec<Vec<usize>>,
    /// Trials whose solver stopped without converging.
    pub unconverged: Vec<Vec<usize>>,
    /// Largest condition estimate seen per m.
    pub max_condition: Vec<f64>,
}

impl PhaseDiagram {
    pub fn rate(&self, s_index: usize, m_index: usize) -> f64 {
        self.successes[s_index][m_index] as f64 / self.trials as f64
    }

    pub fn s_value(&self, s_index: usize, m_index: usize) -> usize {
        sparsity(self.m_values[m_index], self.s_fractions[s_index])
    }

    /// `m,s,success_rate,trials`, m-major.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "m,s,success_rate,trials")?;
        for (mi, m) in self.m_values.iter().enumerate() {
            for si in 0..self.s_fractions.len() {
                writeln!(w, "{m},{},{},{}", self.s_value(si, mi), self.rate(si, mi), self.trials)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Binary PGM: one byte per cell, m left to right, s ascending downward.
    pub fn pgm_bytes(&self) -> Vec<u8> {
        let (w, h) = (self.m_values.len(), self.s_fractions.len());
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        for si in 0..h {
            for mi in 0..w {
                out.push((255.0 * self.rate(si, mi)).round() as u8);
            }
        }
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.pgm_bytes())?;
        Ok(())
    }

    /// Adjacent pairs (m_i, m_{i+1}) at fixed s/m whose success rate drops
    /// significantly (one-sided two-proportion z test at the 1% level).
    pub fn monotonicity_violations(&self) -> Vec<(usize, usize, f64)> {
        const Z_99: f64 = 2.326_347_874;
        let t = self.trials as f64;
        let mut out = Vec::new();
        for (si, &ratio) in self.s_fractions.iter().enumerate() {
            for mi in 0..self.m_values.len().saturating_sub(1) {
                let (p1, p2) = (self.rate(si, mi), self.rate(si, mi + 1));
                let pooled = (p1 + p2) / 2.0;
                let se = (2.0 * pooled * (1.0 - pooled) / t).sqrt();
                if p1 > p2 && se > 0.0 && (p1 - p2) / se > Z_99 {
                    out.push((self.m_values[mi], self.m_values[mi + 1], ratio));
                }
            }
        }
        out
    }
}

#[derive(Serialize)]
struct PhaseManifest<'a> {
    config: &'a ExperimentConfig,
    measure: MeasureKind,
    basis_size: usize,
    seed: u64,
    m_values: &'a [usize],
    s_fractions: &'a [f64],
    unconverged: &'a [Vec<usize>],
    max_condition: &'a [f64],
    monotonicity_violations: Vec<(usize, usize, f64)>,
    created_unix_seconds: u64,
}

/// Seed for the points of one (measure, m, trial); shared by every s.
pub fn point_seed(master: u64, measure: MeasureKind, m: usize, trial: usize) -> u64 {
    mix_seed(&[master, measure.tag(), m as u64, trial as u64])
}

/// Seed for the signal of one (measure, m, s, trial).
pub fn signal_seed(master: u64, measure: MeasureKind, m: usize, s: usize, trial: usize) -> u64 {
    mix_seed(&[master, measure.tag(), m as u64, s as u64, trial as u64, SIGNAL_SALT])
}

struct TrialOutcome {
    success: Vec<bool>,
    unconverged: Vec<bool>,
    condition: f64,
}

/// Runs every (m, trial) job in the current rayon pool. Each job draws one
/// point set, factors its matrix once and solves for every sparsity level.
pub fn run_phase_diagram(config: &ExperimentConfig, basis: &Basis, measure: &SamplingMeasure) -> Result<PhaseDiagram> {
    config.validate()?;
    if basis.len() != config.basis_size() {
        return Err(Error::Dimension(format!("basis of size {} for N = {}", basis.len(), config.basis_size())));
    }
    if measure.kind() != config.measure {
        return Err(Error::InvalidArgument("measure does not match the configuration".into()));
    }
    let m_values = config.m_values();
    let fractions = config.s_fractions();
    let jobs: Vec<(usize, usize)> =
        (0..m_values.len()).flat_map(|mi| (0..config.trials).map(move |t| (mi, t))).collect();
    let outcomes: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(mi, trial)| run_trial(config, basis, measure, m_values[mi], &fractions, trial))
        .collect::<Result<_>>()?;

    let mut successes = vec![vec![0usize; m_values.len()]; fractions.len()];
    let mut unconverged = vec![vec![0usize; m_values.len()]; fractions.len()];
    let mut max_condition = vec![0.0f64; m_values.len()];
    for (&(mi, _), out) in jobs.iter().zip(&outcomes) {
        for si in 0..fractions.len() {
            successes[si][mi] += usize::from(out.success[si]);
            unconverged[si][mi] += usize::from(out.unconverged[si]);
        }
        max_condition[mi] = max_condition[mi].max(out.condition);
    }
    Ok(PhaseDiagram {
        measure: config.measure,
        basis_size: basis.len(),
        seed: config.seed,
        trials: config.trials,
        m_values,
        s_fractions: fractions,
        successes,
        unconverged,
        max_condition,
    })
}

fn run_trial(
    config: &ExperimentConfig,
    basis: &Basis,
    measure: &SamplingMeasure,
    m: usize,
    fractions: &[f64],
    trial: usize,
) -> Result<TrialOutcome> {
    let samples = measure.draw(m, point_seed(config.seed, config.measure, m, trial))?;
    let problem = assemble(basis, measure, &samples, config.convention)?;
    let solver = BasisPursuit::new(&problem.matrix)?;
    let mut success = Vec::with_capacity(fractions.len());
    let mut unconverged = Vec::with_capacity(fractions.len());
    for &ratio in fractions {
        let s = sparsity(m, ratio);
        let signal = random_sparse(basis.len(), s, signal_seed(config.seed, config.measure, m, s, trial))?;
        let y: Vec<Complex64> = synthesize(&signal, &problem)?;
        // Solver failures are recorded as non-recovery.
        let (ok, stalled) = match solver.solve(&y, &config.solver) {
            Ok(res) => (
                res.converged && recovered(&signal.coefficients, &res.coefficients, config.recovery_tolerance)?,
                !res.converged,
            ),
            Err(Error::Infeasible(_)) => (false, true),
            Err(e) => return Err(e),
        };
        success.push(ok);
        unconverged.push(stalled);
    }
    Ok(TrialOutcome { success, unconverged, condition: solver.condition() })
}

/// Runs the experiment and writes `phase.csv`, `phase.pgm` and `phase.json`
/// into the configured output directory.
pub fn run_and_write(config: &ExperimentConfig) -> Result<PhaseDiagram> {
    config.validate()?;
    let (profile, basis) = resolve_basis(config)?;
    let measure = SamplingMeasure::new(&profile, config.measure)?;
    let diagram = run_phase_diagram(config, &basis, &measure)?;
    write_outputs(config, &diagram, &config.output)?;
    Ok(diagram)
}

pub fn write_outputs(config: &ExperimentConfig, diagram: &PhaseDiagram, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    diagram.write_csv(&dir.join("phase.csv"))?;
    diagram.write_pgm(&dir.join("phase.pgm"))?;
    let manifest = PhaseManifest {
        config,
        measure: diagram.measure,
        basis_size: diagram.basis_size,
        seed: diagram.seed,
        m_values: &diagram.m_values,
        s_fractions: &diagram.s_fractions,
        unconverged: &diagram.unconverged,
        max_condition: &diagram.max_condition,
        monotonicity_violations: diagram.monotonicity_violations(),
        created_unix_seconds: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("phase.json"))?), &manifest)?;
    Ok(())
}
