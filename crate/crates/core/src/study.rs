//! Monte Carlo studies of the estimator.
//!
//! Each replication simulates `n` rows of counts, solves the moment system,
//! builds plug-in Wald intervals and projects `q_hat` onto decreasing vectors.
//! Replication `j` at grid point `g` draws from `seed.substream(g).substream(j)`
//! and results are collected in index order, so every table is identical for
//! any thread count.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{asymptotic_covariance, wald_intervals_at, CovarianceReport};
use crate::error::{Error, Result};
use crate::io::{write_json, write_table_file};
use crate::isotonic::{lp_distance, pava_decreasing};
use crate::linalg::Matrix;
use crate::model::{BeamConfig, ModelParams};
use crate::sampling::RngSeed;
use crate::simulate::{simulate_direct, simulate_mechanistic, sufficient_stats, CountMatrix};
use crate::solver::{clamp_to_feasible, solve_moment_system};
use crate::stats::{sample_covariance, skewness};

/// Margin used when clamping infeasible estimates into the parameter space.
pub const CLAMP_EPS: f64 = 1e-6;

/// Norms of the isotonic audit; `None` is the max norm.
pub const AUDIT_NORMS: [Option<u32>; 3] = [Some(1), Some(2), None];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    #[default]
    Direct,
    Mechanistic,
}

impl SimMode {
    pub fn simulate(self, params: &ModelParams<f64>, config: &BeamConfig, seed: RngSeed) -> Result<CountMatrix> {
        match self {
            SimMode::Direct => simulate_direct(params, config, seed),
            SimMode::Mechanistic => simulate_mechanistic(params, config, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub model: ModelParams<f64>,
    pub lambda_t: f64,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub seed: RngSeed,
    pub mode: SimMode,
    pub clamp_infeasible: bool,
    pub level: f64,
}

impl StudyConfig {
    pub fn new(model: ModelParams<f64>, lambda_t: f64, n: usize, replications: usize, seed: RngSeed) -> Self {
        Self {
            model,
            lambda_t,
            n_grid: vec![n],
            replications,
            seed,
            mode: SimMode::Direct,
            clamp_infeasible: false,
            level: 0.95,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::InvalidConfig("sample sizes must be positive".into()));
        }
        if !(self.lambda_t > 0.0 && self.lambda_t.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda_t must be positive, got {}", self.lambda_t)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidLevel(self.level));
        }
        Ok(())
    }

    pub fn beam(&self, n: usize) -> Result<BeamConfig> {
        BeamConfig::new(self.lambda_t, n, 2 * self.model.modes() - 1)
    }
}

/// What one replication produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Solved(Estimate),
    /// The solver raised an error of this kind.
    Failed(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    /// Raw `(q_hat, p_hat)` as returned by the solver.
    pub theta: Vec<f64>,
    pub feasible: bool,
    pub clamped: bool,
    /// Decreasing projection of `q_hat`.
    pub q_star: Vec<f64>,
    /// Per component, whether the Wald interval covers the truth.
    pub covered: Option<Vec<bool>>,
    /// `||q_star - q|| - ||q_hat - q||` for each of [`AUDIT_NORMS`].
    pub reduction_excess: [f64; 3],
}

/// Runs one replication at sample size `n`.
pub fn replicate(cfg: &StudyConfig, n: usize, seed: RngSeed) -> Result<Outcome> {
    let s = cfg.model.modes();
    let data = cfg.mode.simulate(&cfg.model, &cfg.beam(n)?, seed)?;
    let stats = sufficient_stats(&data)?;
    let sol = match solve_moment_system::<f64>(&stats, s) {
        Ok(sol) => sol,
        Err(e) => return Ok(Outcome::Failed(e.kind())),
    };
    let truth = cfg.model.stacked();
    let theta = sol.stacked();

    let (plug_in, clamped) = if sol.feasible {
        (sol.params().ok(), false)
    } else if cfg.clamp_infeasible {
        (clamp_to_feasible(&sol, CLAMP_EPS).ok(), true)
    } else {
        (None, false)
    };
    let covered = match plug_in {
        Some(params) => match asymptotic_covariance(&params, cfg.lambda_t) {
            Ok(report) => {
                let center = params.stacked();
                let iv = wald_intervals_at(&center, &report, n, cfg.level)?;
                Some(iv.iter().zip(&truth).map(|(i, &t)| i.contains(t)).collect())
            }
            Err(_) => None,
        },
        None => None,
    };

    let q_hat = &theta[..s];
    let q_star = pava_decreasing(q_hat);
    let q = cfg.model.q();
    let mut reduction_excess = [0.0; 3];
    for (slot, alpha) in reduction_excess.iter_mut().zip(AUDIT_NORMS) {
        *slot = lp_distance(&q_star, q, alpha) - lp_distance(q_hat, q, alpha);
    }
    Ok(Outcome::Solved(Estimate { theta, feasible: sol.feasible, clamped, q_star, covered, reduction_excess }))
}

/// All replications at one sample size.
#[derive(Debug, Clone)]
pub struct StudyBlock {
    pub n: usize,
    pub outcomes: Vec<Outcome>,
    pub theory: CovarianceReport<f64>,
    pub truth: Vec<f64>,
    pub elapsed_secs: f64,
}

pub fn run_block(cfg: &StudyConfig, grid_index: usize) -> Result<StudyBlock> {
    cfg.validate()?;
    let n = cfg.n_grid[grid_index];
    let theory = asymptotic_covariance(&cfg.model, cfg.lambda_t)?;
    let root = cfg.seed.substream(grid_index as u64);
    let start = Instant::now();
    let outcomes = (0..cfg.replications)
        .into_par_iter()
        .map(|j| replicate(cfg, n, root.substream(j as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(StudyBlock { n, outcomes, theory, truth: cfg.model.stacked(), elapsed_secs: start.elapsed().as_secs_f64() })
}

/// Rounding allowance for the isotonic audit: the inequality is exact in real
/// arithmetic but both sides are computed in floating point.
pub fn reduction_slack(norm: f64) -> f64 {
    8.0 * f64::EPSILON * norm.max(f64::MIN_POSITIVE)
}

pub fn component_names(s: usize) -> Vec<String> {
    (1..=s).map(|r| format!("q_{r}")).chain((1..=s).map(|r| format!("p_{r}"))).collect()
}

impl StudyBlock {
    pub fn estimates(&self) -> impl Iterator<Item = &Estimate> {
        self.outcomes.iter().filter_map(|o| match o {
            Outcome::Solved(e) => Some(e),
            Outcome::Failed(_) => None,
        })
    }

    pub fn solved(&self) -> usize {
        self.estimates().count()
    }

    pub fn feasible(&self) -> usize {
        self.estimates().filter(|e| e.feasible).count()
    }

    pub fn failures(&self) -> BTreeMap<&'static str, usize> {
        let mut out = BTreeMap::new();
        for o in &self.outcomes {
            if let Outcome::Failed(kind) = o {
                *out.entry(*kind).or_insert(0) += 1;
            }
        }
        out
    }

    /// Rows of `sqrt(n) (theta_hat - theta)` over solved replications.
    pub fn scaled_errors(&self) -> Matrix<f64> {
        let d = self.truth.len();
        let scale = (self.n as f64).sqrt();
        let data: Vec<f64> = self
            .estimates()
            .flat_map(|e| e.theta.iter().zip(&self.truth).map(move |(x, t)| scale * (x - t)))
            .collect();
        Matrix::from_row_major(data.len() / d, d, data)
    }

    /// Rows of `sqrt(n) (q_star - q)` over solved replications.
    pub fn scaled_projected_errors(&self) -> Matrix<f64> {
        let s = self.truth.len() / 2;
        let scale = (self.n as f64).sqrt();
        let data: Vec<f64> =
            self.estimates().flat_map(|e| e.q_star.iter().zip(&self.truth[..s]).map(move |(x, t)| scale * (x - t))).collect();
        Matrix::from_row_major(data.len() / s, s, data)
    }

    /// Root mean squared Euclidean error of the raw estimate.
    pub fn rmse(&self) -> f64 {
        let errs = self.scaled_errors();
        let total: f64 = errs.as_slice().iter().map(|x| x * x).sum();
        (total / errs.rows() as f64 / self.n as f64).sqrt()
    }

    /// Delta-method prediction `sqrt(tr(Sigma^2) / n)`.
    pub fn predicted_rmse(&self) -> f64 {
        (self.theory.sigma_sq.trace() / self.n as f64).sqrt()
    }

    pub fn empirical_covariance(&self) -> Matrix<f64> {
        sample_covariance(&self.scaled_errors())
    }

    pub fn summary(&self) -> BlockSummary {
        BlockSummary {
            n: self.n,
            replications: self.outcomes.len(),
            solved: self.solved(),
            feasible: self.feasible(),
            failed: self.outcomes.len() - self.solved(),
            clamped: self.estimates().filter(|e| e.clamped).count(),
            rmse: self.rmse(),
            predicted_rmse: self.predicted_rmse(),
            elapsed_secs: self.elapsed_secs,
        }
    }

    pub fn component_rows(&self) -> Vec<ComponentRow> {
        let errs = self.scaled_errors();
        let sqrt_n = (self.n as f64).sqrt();
        component_names(self.truth.len() / 2)
            .into_iter()
            .enumerate()
            .map(|(c, component)| {
                let col = errs.column(c);
                let bias = col.iter().sum::<f64>() / col.len() as f64 / sqrt_n;
                let rmse = (col.iter().map(|x| x * x).sum::<f64>() / col.len() as f64).sqrt() / sqrt_n;
                ComponentRow {
                    n: self.n,
                    component,
                    bias,
                    rmse,
                    sqrt_n_rmse: rmse * sqrt_n,
                    predicted_sd: self.theory.sigma_sq[(c, c)].sqrt(),
                    skewness: skewness(&col),
                }
            })
            .collect()
    }

    /// Entries compared against theory are those at least `floor` times the largest.
    pub fn covariance_rows(&self, floor: f64) -> Vec<CovarianceRow> {
        let emp = self.empirical_covariance();
        let theory = &self.theory.sigma_sq;
        let max = theory.max_abs();
        let names = component_names(self.truth.len() / 2);
        let mut rows = Vec::new();
        for i in 0..theory.rows() {
            for j in 0..theory.cols() {
                let t = theory[(i, j)];
                rows.push(CovarianceRow {
                    n: self.n,
                    row: names[i].clone(),
                    col: names[j].clone(),
                    empirical: emp[(i, j)],
                    theoretical: t,
                    relative_error: (emp[(i, j)] - t).abs() / t.abs(),
                    compared: t.abs() >= floor * max,
                });
            }
        }
        rows
    }

    pub fn coverage_rows(&self, level: f64) -> Vec<CoverageRow> {
        let flags: Vec<&Vec<bool>> = self.estimates().filter_map(|e| e.covered.as_ref()).collect();
        component_names(self.truth.len() / 2)
            .into_iter()
            .enumerate()
            .map(|(c, component)| {
                let covered = flags.iter().filter(|f| f[c]).count();
                CoverageRow {
                    n: self.n,
                    component,
                    level,
                    covered,
                    total: flags.len(),
                    coverage: covered as f64 / flags.len().max(1) as f64,
                }
            })
            .collect()
    }

    pub fn audit_rows(&self) -> Vec<AuditRow> {
        let s = self.truth.len() / 2;
        let q = &self.truth[..s];
        AUDIT_NORMS
            .iter()
            .enumerate()
            .map(|(slot, &alpha)| {
                let mut holds = 0;
                let mut total = 0;
                let mut max_excess = f64::NEG_INFINITY;
                for e in self.estimates() {
                    let raw = lp_distance(&e.theta[..s], q, alpha);
                    let excess = e.reduction_excess[slot];
                    total += 1;
                    if excess <= reduction_slack(raw) {
                        holds += 1;
                    }
                    max_excess = max_excess.max(excess);
                }
                AuditRow {
                    n: self.n,
                    norm: alpha.map_or("inf".to_string(), |a| a.to_string()),
                    holds,
                    total,
                    max_excess: if total == 0 { 0.0 } else { max_excess },
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub n: usize,
    pub replications: usize,
    pub solved: usize,
    pub feasible: usize,
    pub failed: usize,
    pub clamped: usize,
    pub rmse: f64,
    pub predicted_rmse: f64,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRow {
    pub n: usize,
    pub component: String,
    pub bias: f64,
    pub rmse: f64,
    pub sqrt_n_rmse: f64,
    pub predicted_sd: f64,
    pub skewness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceRow {
    pub n: usize,
    pub row: String,
    pub col: String,
    pub empirical: f64,
    pub theoretical: f64,
    pub relative_error: f64,
    pub compared: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub n: usize,
    pub component: String,
    pub level: f64,
    pub covered: usize,
    pub total: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub n: usize,
    pub norm: String,
    pub holds: usize,
    pub total: usize,
    pub max_excess: f64,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub blocks: Vec<StudyBlock>,
}

/// JSON sidecar with counts, failure kinds and timings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyReport {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub lambda_t: f64,
    pub replications: usize,
    pub seed: RngSeed,
    pub mode: SimMode,
    pub clamp_infeasible: bool,
    pub level: f64,
    pub blocks: Vec<BlockSummary>,
    pub failures: BTreeMap<usize, BTreeMap<String, usize>>,
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let blocks = (0..cfg.n_grid.len()).map(|g| run_block(cfg, g)).collect::<Result<_>>()?;
    Ok(StudyResult { config: cfg.clone(), blocks })
}

impl StudyResult {
    pub fn summaries(&self) -> Vec<BlockSummary> {
        self.blocks.iter().map(StudyBlock::summary).collect()
    }

    pub fn report(&self) -> StudyReport {
        let c = &self.config;
        StudyReport {
            q: c.model.q().to_vec(),
            p: c.model.p().to_vec(),
            lambda_t: c.lambda_t,
            replications: c.replications,
            seed: c.seed,
            mode: c.mode,
            clamp_infeasible: c.clamp_infeasible,
            level: c.level,
            blocks: self.summaries(),
            failures: self
                .blocks
                .iter()
                .map(|b| (b.n, b.failures().into_iter().map(|(k, v)| (k.to_string(), v)).collect()))
                .collect(),
        }
    }

    /// Writes `error_vs_n.csv`, `components.csv`, `covariance.csv`,
    /// `coverage.csv`, `isotonic_audit.csv` and `study.json` into `dir`.
    pub fn write_tables(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        let mut summaries = self.summaries();
        for s in &mut summaries {
            // keep the tables reproducible byte for byte
            s.elapsed_secs = 0.0;
        }
        write_table_file(&dir.join("error_vs_n.csv"), &summaries)?;
        write_table_file(&dir.join("components.csv"), &self.blocks.iter().flat_map(|b| b.component_rows()).collect::<Vec<_>>())?;
        write_table_file(&dir.join("covariance.csv"), &self.blocks.iter().flat_map(|b| b.covariance_rows(0.1)).collect::<Vec<_>>())?;
        let level = self.config.level;
        write_table_file(&dir.join("coverage.csv"), &self.blocks.iter().flat_map(|b| b.coverage_rows(level)).collect::<Vec<_>>())?;
        write_table_file(&dir.join("isotonic_audit.csv"), &self.blocks.iter().flat_map(|b| b.audit_rows()).collect::<Vec<_>>())?;
        write_json(&dir.join("study.json"), &self.report())?;
        Ok(())
    }
}
