use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use thinning_core::asymptotics::wald_intervals_at;
use thinning_core::io::{
    parse_vector, read_counts_file, read_json, write_counts, write_counts_file, write_json, write_samples, write_table_file,
    ParamFile, SolutionRecord,
};
use thinning_core::isotonic::lp_distance;
use thinning_core::study::{component_names, CLAMP_EPS};
use thinning_core::{
    asymptotic_covariance, clamp_to_feasible, flat_regions, project_decreasing, run_study, sample_limit_law,
    solve_moment_system, sufficient_stats, CovarianceRecord, Error, FlatPartition, ModelParams, Result, RngSeed,
    StudyConfig, SufficientStats,
};

use crate::{EstimateArgs, IsotonicArgs, SimulateArgs, StudyArgs};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let pf: ParamFile = read_json(&args.config)?;
    let params = pf.params()?;
    let beam = pf.beam()?;
    let mode: thinning_core::SimMode = args.mode.into();
    let data = mode.simulate(&params, &beam, RngSeed::new(args.seed))?;
    let stats = (beam.lambda_t > 0.0).then(|| sufficient_stats(&data)).transpose()?;
    match args.out {
        Some(dir) => {
            create_dir(&dir)?;
            write_counts_file(&dir.join("counts.csv"), &data)?;
            if let Some(stats) = &stats {
                write_json(&dir.join("stats.json"), stats)?;
                print_json(stats)?;
            }
        }
        None => write_counts(io::stdout().lock(), &data)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct IntervalRow {
    component: String,
    estimate: f64,
    lower: f64,
    upper: f64,
}

#[derive(Serialize)]
struct ClampedRecord {
    q: Vec<f64>,
    p: Vec<f64>,
    heuristic: bool,
}

#[derive(Serialize)]
struct IsotonicRecord {
    q_star: Vec<f64>,
    partition: FlatPartition,
    tol: f64,
    /// Flat regions read off an estimate rather than the true q.
    heuristic: bool,
}

#[derive(Serialize)]
struct EstimateReport {
    s: usize,
    n: usize,
    lambda_t: f64,
    level: f64,
    stats: SufficientStats,
    solution: SolutionRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    clamped: Option<ClampedRecord>,
    /// Plug-in covariance at the estimate (or at the clamped estimate).
    covariance: Option<CovarianceRecord>,
    intervals: Option<Vec<IntervalRow>>,
    isotonic: IsotonicRecord,
}

pub fn estimate(args: EstimateArgs) -> Result<()> {
    let pf: ParamFile = read_json(&args.config)?;
    let s = pf.s;
    if s == 0 {
        return Err(Error::Dimension("s must be at least 1".into()));
    }
    let data = match &args.data {
        Some(path) => read_counts_file(path, pf.lambda_t)?,
        None => {
            let mode: thinning_core::SimMode = args.mode.into();
            mode.simulate(&pf.params()?, &pf.beam()?, RngSeed::new(args.seed))?
        }
    };
    if data.layers() != 2 * s - 1 {
        return Err(Error::Dimension(format!("{s} modes need k = {} layers, data has k = {}", 2 * s - 1, data.layers())));
    }
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(Error::InvalidLevel(args.level));
    }
    let n = data.replications();
    let stats = sufficient_stats(&data)?;
    let sol = solve_moment_system::<f64>(&stats, s)?;

    let (plug_in, clamped): (Option<ModelParams<f64>>, _) = if sol.feasible {
        (Some(sol.params()?), None)
    } else if args.clamp_infeasible {
        let c = clamp_to_feasible(&sol, CLAMP_EPS)?;
        let rec = ClampedRecord { q: c.q().to_vec(), p: c.p().to_vec(), heuristic: true };
        (Some(c), Some(rec))
    } else {
        (None, None)
    };
    let (covariance, intervals) = match &plug_in {
        Some(params) => {
            let report = asymptotic_covariance(params, pf.lambda_t)?;
            let iv = wald_intervals_at(&params.stacked(), &report, n, args.level)?;
            let rows = component_names(s)
                .into_iter()
                .zip(iv)
                .map(|(component, i)| IntervalRow { component, estimate: i.estimate, lower: i.lower, upper: i.upper })
                .collect();
            (Some(report.to_record()), Some(rows))
        }
        None => (None, None),
    };

    let projected = project_decreasing(&sol.y);
    let partition = flat_regions(&projected.q_star, args.flat_tol)?;
    let report = EstimateReport {
        s,
        n,
        lambda_t: pf.lambda_t,
        level: args.level,
        stats,
        solution: SolutionRecord::from(&sol),
        clamped,
        covariance,
        intervals,
        isotonic: IsotonicRecord { q_star: projected.q_star, partition, tol: args.flat_tol, heuristic: true },
    };
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        write_json(&dir.join("solution.json"), &report.solution)?;
        if let Some(cov) = &report.covariance {
            write_json(&dir.join("covariance.json"), cov)?;
        }
        if let Some(rows) = &report.intervals {
            write_table_file(&dir.join("intervals.csv"), rows)?;
        }
        write_json(&dir.join("partition.json"), &report.isotonic.partition)?;
        write_json(&dir.join("estimate.json"), &report)?;
    }
    print_json(&report)
}

pub fn mc_study(args: StudyArgs) -> Result<()> {
    let pf: ParamFile = read_json(&args.config)?;
    let model = pf.params()?;
    let beam = pf.beam()?;
    if beam.k != 2 * model.modes() - 1 {
        return Err(Error::Dimension(format!(
            "{} modes need k = {} layers, config has k = {}",
            model.modes(),
            2 * model.modes() - 1,
            beam.k
        )));
    }
    let mut cfg = StudyConfig::new(model, beam.lambda_t, beam.n, args.replications, RngSeed::new(args.seed));
    if let Some(grid) = args.n_grid {
        cfg.n_grid = grid;
    }
    cfg.mode = args.mode.into();
    cfg.clamp_infeasible = args.clamp_infeasible;
    cfg.level = args.level;
    let result = run_study(&cfg)?;
    result.write_tables(&args.out)?;
    print_json(&result.report())
}

#[derive(Serialize)]
struct Norms {
    l1: f64,
    l2: f64,
    linf: f64,
}

impl Norms {
    fn of(v: &[f64]) -> Self {
        let zero = vec![0.0; v.len()];
        Self { l1: lp_distance(v, &zero, Some(1)), l2: lp_distance(v, &zero, Some(2)), linf: lp_distance(v, &zero, None) }
    }
}

#[derive(Serialize)]
struct IsotonicReport {
    source: Vec<f64>,
    projection: Vec<f64>,
    partition: FlatPartition,
    norms_before: Norms,
    norms_after: Norms,
    /// Euclidean distance moved by the projection.
    distance: f64,
    unchanged: bool,
}

pub fn isotonic(args: IsotonicArgs) -> Result<()> {
    let text = match (&args.vector, &args.input) {
        (Some(v), _) => v.clone(),
        (None, Some(path)) => fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
        (None, None) => return Err(Error::Parse("no vector given".into())),
    };
    let v = parse_vector(&text)?;
    let est = project_decreasing(&v);
    let partition = flat_regions(&est.q_star, args.tol)?;
    let report = IsotonicReport {
        norms_before: Norms::of(&v),
        norms_after: Norms::of(&est.q_star),
        distance: lp_distance(&v, &est.q_star, Some(2)),
        unchanged: est.q_star == v,
        source: est.source,
        projection: est.q_star,
        partition,
    };
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        write_json(&dir.join("isotonic.json"), &report)?;
        write_json(&dir.join("partition.json"), &report.partition)?;
        if let Some(path) = &args.covariance {
            let rec: CovarianceRecord = read_json(path)?;
            let sigma = rec.sigma_sq.to_matrix().ok_or_else(|| Error::Parse("covariance data does not match its dimensions".into()))?;
            let s = v.len();
            if sigma.rows() < s || sigma.cols() < s {
                return Err(Error::Dimension(format!("covariance is {}x{}, vector has {s} entries", sigma.rows(), sigma.cols())));
            }
            let samples = sample_limit_law(&sigma.submatrix(0, 0, s, s), &report.partition, args.reps, RngSeed::new(args.seed))?;
            let file = fs::File::create(dir.join("limit_law.csv"))?;
            write_samples(io::BufWriter::new(file), &samples, "q")?;
        }
    }
    print_json(&report)
}
