use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use liftrec::lifting::LiftingSpec;
use liftrec::linalg::gaussian_matrix;
use liftrec::manifold::{MeasurementSubspace, ProductPoint, Sensing};
use liftrec::objective::Objective;
use liftrec::solvers::{SolveContext, SolveTrace, SolverRegistry};
use liftrec::synth::{
    cluster_assign, gen_clusters, gen_entry_mask, gen_gaussian_sensing, gen_uos, numerical_rank, rand_index, rmse,
    NoiseSpec,
};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{
    DataSpec, ExperimentConfig, InitSpec, LambdaSchedule, PhaseParameter, RankKeyword, RankSpec, SensingSpec,
};
use crate::error::CliError;
use crate::output::{f, labels_from_text, matrix_from_csv, opt, write_json, Table};

const DATA_STREAM: u64 = 0;
const SENSING_STREAM: u64 = 1;
const CLUSTER_STREAM: u64 = 1 << 20;
const INIT_STREAM: u64 = 1 << 21;

pub const TRIAL_COLUMNS: [&str; 19] = [
    "index",
    "trial",
    "seed",
    "param",
    "delta",
    "rank_offset",
    "n",
    "s",
    "m",
    "rank",
    "solver",
    "status",
    "iterations",
    "final_f",
    "final_gnorm",
    "rmse",
    "rand_index",
    "success",
    "error",
];

pub const NOISE_COLUMNS: [&str; 15] = [
    "index",
    "trial",
    "seed",
    "step",
    "lambda",
    "status",
    "iterations",
    "res_noisy",
    "res_clean",
    "err_fro",
    "rmse",
    "lifted_residual",
    "noise_norm",
    "cold_iterations",
    "selected",
];

/// Ground-truth data: generated per trial, or one matrix read from disk.
#[derive(Debug, Clone)]
pub enum Source {
    Synthetic(DataSpec),
    Loaded {
        m: Arc<DMatrix<f64>>,
        labels: Option<Arc<Vec<usize>>>,
    },
}

impl Source {
    pub fn from_spec(spec: &DataSpec, base: Option<&Path>) -> Result<Self, CliError> {
        let resolve = |p: &Path| match base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        };
        match spec {
            DataSpec::Matrix { path, labels } => {
                let read = |p: &Path| {
                    std::fs::read_to_string(resolve(p))
                        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))
                };
                let m = matrix_from_csv(&read(path)?)?;
                let labels = match labels {
                    Some(p) => {
                        let l = labels_from_text(&read(p)?)?;
                        if l.len() != m.ncols() {
                            return Err(CliError::Config(format!(
                                "{} labels for {} columns",
                                l.len(),
                                m.ncols()
                            )));
                        }
                        Some(Arc::new(l))
                    }
                    None => None,
                };
                Ok(Source::Loaded { m: Arc::new(m), labels })
            }
            other => Ok(Source::Synthetic(other.clone())),
        }
    }

    pub fn truth(&self, seed: u64) -> Result<(DMatrix<f64>, Option<Vec<usize>>), CliError> {
        match self {
            Source::Loaded { m, labels } => Ok(((**m).clone(), labels.as_ref().map(|l| (**l).clone()))),
            Source::Synthetic(spec) => {
                let mut rng = stream_rng(seed, DATA_STREAM);
                if let Some(u) = spec.uos() {
                    let (m, l) = gen_uos(&u, &mut rng)?;
                    Ok((m, Some(l)))
                } else if let Some(c) = spec.clusters() {
                    let (m, l) = gen_clusters(&c, &mut rng)?;
                    Ok((m, Some(l)))
                } else {
                    Err(CliError::Config("unsupported data spec".into()))
                }
            }
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add(trial as u64)
}

/// Measurements of `truth` and the noise-free right-hand side.
pub fn measurements(
    sensing: &SensingSpec,
    truth: &DMatrix<f64>,
    seed: u64,
    column: u64,
) -> Result<(Arc<MeasurementSubspace>, DVector<f64>), CliError> {
    let mut rng = stream_rng(seed, SENSING_STREAM + column);
    let meas = match *sensing {
        SensingSpec::Mask { delta } => gen_entry_mask(truth, delta, &mut rng)?,
        SensingSpec::Dense { m, noise_sigma } => {
            let noise = (noise_sigma > 0.0).then_some(NoiseSpec { sigma: noise_sigma });
            gen_gaussian_sensing(truth, m, noise, &mut rng)?
        }
    };
    let clean = meas.apply(truth)?;
    Ok((Arc::new(meas), clean))
}

/// Starting point of a constrained solve. The random start draws from its
/// own stream so that it leaves the data and the sampling untouched.
pub fn start_point(obj: &Objective, init: InitSpec, seed: u64, column: u64) -> liftrec::Result<ProductPoint> {
    let z = obj.initial_point()?;
    if init == InitSpec::Feasible {
        return Ok(z);
    }
    let meas = obj.measurement();
    let b = meas.b();
    let scale = match meas.sensing() {
        _ if b.is_empty() => 0.0,
        Sensing::EntryMask { .. } => b.norm() / (b.len() as f64).sqrt(),
        Sensing::Dense { .. } => b.norm() / ((meas.n() * meas.s()) as f64).sqrt(),
    };
    let mut rng = stream_rng(seed, INIT_STREAM + column);
    let g = gaussian_matrix(meas.n(), meas.s(), &mut rng) * scale;
    let x = z.x + meas.project(&g)?.0;
    Ok(ProductPoint {
        u: obj.best_subspace(&x)?,
        x,
    })
}

pub fn true_rank(lifting: LiftingSpec, truth: &DMatrix<f64>, tol: f64) -> Result<usize, CliError> {
    Ok(numerical_rank(&lifting.gram(truth)?, tol))
}

/// `"auto"` means the number of clusters for cluster data (the Gaussian
/// kernel of clustered points has a spectral gap after that many values but
/// no exact rank), otherwise the numerical rank of the lifted truth.
pub fn resolve_rank(cfg: &ExperimentConfig, truth: &DMatrix<f64>) -> Result<usize, CliError> {
    match (cfg.rank, &cfg.data) {
        (RankSpec::Fixed(r), _) => Ok(r),
        (RankSpec::Keyword(RankKeyword::Auto), DataSpec::Clusters { k, .. }) => Ok(*k),
        (RankSpec::Keyword(RankKeyword::Auto), _) => true_rank(cfg.lifting(), truth, cfg.rank_tol()),
    }
}

/// Result of one solve, with numerical failures kept as data.
#[derive(Debug, Clone)]
pub struct Solved {
    pub z: Option<ProductPoint>,
    pub trace: Option<SolveTrace>,
    pub status: String,
    pub error: String,
}

impl Solved {
    pub fn iterations(&self) -> usize {
        self.trace.as_ref().map(|t| t.iterations()).unwrap_or(0)
    }
}

/// Runs one solve. Numerical failures, including one at the starting point,
/// come back as a failed [`Solved`] instead of an error.
pub fn solve(
    registry: &SolverRegistry,
    solver: &str,
    obj: &Objective,
    z0: liftrec::Result<ProductPoint>,
    truth: Option<&DMatrix<f64>>,
    seed: u64,
) -> Result<Solved, CliError> {
    let ctx = SolveContext { truth, seed };
    let solver = registry.get(solver)?;
    match z0.and_then(|z0| solver.solve(obj, z0, &ctx)) {
        Ok((z, trace)) => Ok(Solved {
            status: trace.status.as_str().to_string(),
            z: Some(z),
            trace: Some(trace),
            error: String::new(),
        }),
        Err(e) => match CliError::from(e) {
            CliError::Numerical(msg) => {
                log::warn!("solve failed: {msg}");
                Ok(Solved {
                    z: None,
                    trace: None,
                    status: "numerical_failure".into(),
                    error: msg.replace(',', ";"),
                })
            }
            other => Err(other),
        },
    }
}

/// One row of `trials.csv` for the recovery-type commands.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub index: usize,
    pub trial: usize,
    pub seed: u64,
    pub param: Option<usize>,
    pub delta: f64,
    pub rank_offset: Option<i64>,
    pub n: usize,
    pub s: usize,
    pub m: usize,
    pub rank: usize,
    pub solver: String,
    pub status: String,
    pub iterations: usize,
    pub final_f: f64,
    pub final_gnorm: f64,
    pub rmse: f64,
    pub rand_index: Option<f64>,
    pub success: bool,
    pub error: String,
}

impl TrialRow {
    fn cells(&self) -> Vec<String> {
        vec![
            self.index.to_string(),
            self.trial.to_string(),
            self.seed.to_string(),
            self.param.map(|p| p.to_string()).unwrap_or_default(),
            f(self.delta),
            self.rank_offset.map(|o| o.to_string()).unwrap_or_default(),
            self.n.to_string(),
            self.s.to_string(),
            self.m.to_string(),
            self.rank.to_string(),
            self.solver.clone(),
            self.status.clone(),
            self.iterations.to_string(),
            f(self.final_f),
            f(self.final_gnorm),
            f(self.rmse),
            opt(self.rand_index),
            u8::from(self.success).to_string(),
            self.error.clone(),
        ]
    }
}

/// Everything a command writes.
#[derive(Debug)]
pub struct Report {
    pub summary: Value,
    pub trials: Table,
    pub heatmap: Option<Table>,
    /// Traces keyed by the `index` column of `trials.csv`.
    pub traces: Vec<(usize, SolveTrace)>,
    pub numerical_failures: usize,
}

impl Report {
    pub fn write(&self, dir: &Path, traces: bool) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("summary.json"), &self.summary)?;
        self.trials.write(&dir.join("trials.csv"))?;
        if let Some(h) = &self.heatmap {
            h.write(&dir.join("heatmap.csv"))?;
        }
        if traces {
            for (index, trace) in &self.traces {
                std::fs::write(dir.join(format!("trace_{index}.csv")), trace.to_csv())?;
            }
        }
        Ok(())
    }
}

/// One recovery problem in a sweep.
#[derive(Debug, Clone)]
struct Cell {
    source: Source,
    sensing: SensingSpec,
    param: Option<usize>,
    rank_offset: Option<i64>,
    column: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Goal {
    Recovery,
    Clustering,
}

pub struct Runner<'a> {
    pub cfg: &'a ExperimentConfig,
    pub source: Source,
    pub registry: SolverRegistry,
    pub jobs: usize,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a ExperimentConfig, base: Option<&Path>, jobs: usize) -> Result<Self, CliError> {
        Ok(Self {
            cfg,
            source: Source::from_spec(&cfg.data, base)?,
            registry: SolverRegistry::with_configs(cfg.rtr, cfg.altmin),
            jobs: jobs.max(1),
        })
    }

    /// Runs `job(i)` for `i < count` on the configured number of threads,
    /// returning results in index order.
    fn map<T, F>(&self, count: usize, job: F) -> Result<Vec<T>, CliError>
    where
        T: Send,
        F: Fn(usize) -> Result<T, CliError> + Sync + Send,
    {
        if self.jobs == 1 {
            return (0..count).map(job).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {} worker threads: {e}", self.jobs)))?;
        pool.install(|| (0..count).into_par_iter().map(job).collect())
    }

    fn solve_cell(
        &self,
        cell: &Cell,
        index: usize,
        trial: usize,
        goal: Goal,
    ) -> Result<(TrialRow, Option<SolveTrace>), CliError> {
        let cfg = self.cfg;
        let seed = trial_seed(cfg.seed, trial);
        let (truth, labels) = cell.source.truth(seed)?;
        let (meas, _) = measurements(&cell.sensing, &truth, seed, cell.column)?;
        let lifting = cfg.lifting();
        let base_rank = resolve_rank(cfg, &truth)?;
        let rank = match cell.rank_offset {
            Some(off) => (base_rank as i64 + off).max(1) as usize,
            None => base_rank,
        };
        let (n, s) = truth.shape();
        let obj = Objective::new(lifting, rank, meas.clone())?;
        let z0 = start_point(&obj, cfg.init, seed, cell.column);
        let solved = solve(&self.registry, &cfg.solver, &obj, z0, Some(&truth), seed)?;
        let mut row = TrialRow {
            index,
            trial,
            seed,
            param: cell.param,
            delta: meas.m() as f64 / (n * s) as f64,
            rank_offset: cell.rank_offset,
            n,
            s,
            m: meas.m(),
            rank,
            solver: cfg.solver.clone(),
            status: solved.status.clone(),
            iterations: solved.iterations(),
            final_f: f64::NAN,
            final_gnorm: f64::NAN,
            rmse: f64::NAN,
            rand_index: None,
            success: false,
            error: solved.error.clone(),
        };
        if let (Some(z), Some(trace)) = (&solved.z, &solved.trace) {
            row.final_f = trace.last().map(|r| r.f).unwrap_or(f64::NAN);
            row.final_gnorm = trace.final_gnorm();
            row.rmse = rmse(&z.x, &truth);
            row.success = row.rmse <= cfg.success_rmse;
            if goal == Goal::Clustering {
                let labels = labels
                    .as_ref()
                    .ok_or_else(|| CliError::Config("clustering needs labelled data".into()))?;
                let k = labels.iter().collect::<std::collections::BTreeSet<_>>().len();
                let mut rng = stream_rng(seed, CLUSTER_STREAM);
                let found = cluster_assign(&z.x, k, &mut rng)?;
                let ri = rand_index(&found, labels)?;
                row.rand_index = Some(ri);
                row.success = ri == 1.0;
            }
        }
        Ok((row, solved.trace))
    }

    fn run_cells(
        &self,
        cells: &[(Cell, usize)],
        goal: Goal,
    ) -> Result<(Table, Vec<TrialRow>, Vec<(usize, SolveTrace)>), CliError> {
        let results = self.map(cells.len(), |i| self.solve_cell(&cells[i].0, i, cells[i].1, goal))?;
        let mut table = Table::new(&TRIAL_COLUMNS);
        let mut rows = Vec::with_capacity(results.len());
        let mut traces = Vec::new();
        for (row, trace) in results {
            table.push(row.cells());
            if let Some(t) = trace {
                traces.push((row.index, t));
            }
            rows.push(row);
        }
        Ok((table, rows, traces))
    }

    fn base_cell(&self) -> Cell {
        Cell {
            source: self.source.clone(),
            sensing: self.cfg.sensing.clone(),
            param: None,
            rank_offset: None,
            column: 0,
        }
    }

    pub fn recover(&self) -> Result<Report, CliError> {
        self.single("recover", Goal::Recovery)
    }

    pub fn cluster(&self) -> Result<Report, CliError> {
        self.single("cluster", Goal::Clustering)
    }

    fn single(&self, command: &str, goal: Goal) -> Result<Report, CliError> {
        let cells: Vec<(Cell, usize)> = (0..self.cfg.trials).map(|t| (self.base_cell(), t)).collect();
        let (trials, rows, traces) = self.run_cells(&cells, goal)?;
        let mut summary = self.summary_head(command);
        summary["aggregate"] = aggregate(&rows);
        Ok(Report {
            summary,
            trials,
            heatmap: None,
            traces,
            numerical_failures: failures(&rows),
        })
    }

    pub fn phase(&self) -> Result<Report, CliError> {
        let spec = self
            .cfg
            .phase
            .as_ref()
            .ok_or_else(|| CliError::Config("phase: missing `phase` section".into()))?;
        let DataSpec::Uos {
            n,
            dims,
            pts_per,
            affine,
        } = &self.cfg.data
        else {
            return Err(CliError::Config("phase: sweeps need `uos` data".into()));
        };
        let mut cells = Vec::new();
        for &v in &spec.values {
            let (mut n, mut dims, mut pts_per) = (*n, dims.clone(), *pts_per);
            match spec.parameter {
                PhaseParameter::Subspaces => dims = vec![dims[0]; v],
                PhaseParameter::SubspaceDim => dims = vec![v; dims.len()],
                PhaseParameter::PointsPerGroup => pts_per = v,
                PhaseParameter::AmbientDim => n = v,
            }
            if v == 0 || dims.iter().any(|&d| d >= n) {
                return Err(CliError::Config(format!(
                    "phase.values: {v} gives an invalid data spec"
                )));
            }
            let data = DataSpec::Uos {
                n,
                dims,
                pts_per,
                affine: *affine,
            };
            for (col, &delta) in spec.deltas.iter().enumerate() {
                for t in 0..self.cfg.trials {
                    let cell = Cell {
                        source: Source::Synthetic(data.clone()),
                        sensing: SensingSpec::Mask { delta },
                        param: Some(v),
                        rank_offset: None,
                        column: col as u64,
                    };
                    cells.push((cell, t));
                }
            }
        }
        let (trials, rows, traces) = self.run_cells(&cells, Goal::Recovery)?;
        let mut header = vec!["value".to_string()];
        header.extend(spec.deltas.iter().map(|d| format!("{d}")));
        let mut heat = Table::with_header(header);
        let mut grid = Vec::new();
        let per_cell = self.cfg.trials;
        for (vi, &v) in spec.values.iter().enumerate() {
            let mut line = vec![v.to_string()];
            let mut fracs = Vec::new();
            for di in 0..spec.deltas.len() {
                let start = (vi * spec.deltas.len() + di) * per_cell;
                let frac = success_fraction(&rows[start..start + per_cell]);
                line.push(f(frac));
                fracs.push(frac);
            }
            if !spec.deltas.is_empty() {
                heat.push(line);
            }
            grid.push(fracs);
        }
        let mut summary = self.summary_head("phase");
        summary["aggregate"] = aggregate(&rows);
        summary["grid"] = json!({
            "parameter": spec.parameter,
            "values": spec.values,
            "deltas": spec.deltas,
            "success_fraction": grid,
        });
        Ok(Report {
            summary,
            trials,
            heatmap: Some(heat),
            traces,
            numerical_failures: failures(&rows),
        })
    }

    pub fn rank_sweep(&self) -> Result<Report, CliError> {
        let offsets = self.cfg.rank_sweep.clone().unwrap_or_default().offsets;
        let mut cells = Vec::new();
        for &off in &offsets {
            for t in 0..self.cfg.trials {
                let mut cell = self.base_cell();
                cell.rank_offset = Some(off);
                cells.push((cell, t));
            }
        }
        let (trials, rows, traces) = self.run_cells(&cells, Goal::Recovery)?;
        let mut heat = Table::new(&["rank_offset", "trials", "successes", "success_fraction"]);
        let mut per_offset = BTreeMap::new();
        for (oi, &off) in offsets.iter().enumerate() {
            let chunk = &rows[oi * self.cfg.trials..(oi + 1) * self.cfg.trials];
            let wins = chunk.iter().filter(|r| r.success).count();
            let frac = success_fraction(chunk);
            heat.push(vec![
                off.to_string(),
                chunk.len().to_string(),
                wins.to_string(),
                f(frac),
            ]);
            per_offset.insert(off, frac);
        }
        let mut summary = self.summary_head("rank-sweep");
        summary["aggregate"] = aggregate(&rows);
        summary["success_fraction_by_offset"] = json!(per_offset
            .iter()
            .map(|(o, v)| json!({"rank_offset": o, "success_fraction": v}))
            .collect::<Vec<_>>());
        Ok(Report {
            summary,
            trials,
            heatmap: Some(heat),
            traces,
            numerical_failures: failures(&rows),
        })
    }

    pub fn noise(&self) -> Result<Report, CliError> {
        let schedule = self.cfg.noise.unwrap_or_default();
        let SensingSpec::Dense { noise_sigma, .. } = self.cfg.sensing else {
            return Err(CliError::Config("noise: the noise study needs `dense` sensing".into()));
        };
        let per_trial = self.map(self.cfg.trials, |t| self.noise_trial(t, &schedule))?;
        let steps = schedule.steps;
        let mut table = Table::new(&NOISE_COLUMNS);
        let mut traces = Vec::new();
        let mut selected = Vec::new();
        let mut numerical = 0;
        for (t, (rows, trial_traces, pick)) in per_trial.into_iter().enumerate() {
            for (j, row) in rows.iter().enumerate() {
                let index = t * steps + j;
                let mut cells = row.cells(index);
                cells[14] = u8::from(Some(j) == pick).to_string();
                table.push(cells);
                if row.status == "numerical_failure" {
                    numerical += 1;
                }
            }
            for (j, trace) in trial_traces {
                traces.push((t * steps + j, trace));
            }
            if let Some(j) = pick {
                selected.push(rows[j].clone());
            }
        }
        let med = |v: Vec<f64>| median(&v);
        let mut summary = self.summary_head("noise");
        summary["aggregate"] = json!({
            "trials": self.cfg.trials,
            "noise_sigma": noise_sigma,
            "lambdas": schedule.values(),
            "selected_trials": selected.len(),
            "selected_lambda": selected.iter().map(|r| r.lambda).collect::<Vec<_>>(),
            "median_err_fro": med(selected.iter().map(|r| r.err_fro).collect()),
            "median_res_noisy": med(selected.iter().map(|r| r.res_noisy).collect()),
            "median_res_clean": med(selected.iter().map(|r| r.res_clean).collect()),
            "median_ratio_clean_to_noisy": med(selected.iter().map(|r| r.res_clean / r.res_noisy).collect()),
            "median_noise_norm": med(selected.iter().map(|r| r.noise_norm).collect()),
            "numerical_failures": numerical,
        });
        Ok(Report {
            summary,
            trials: table,
            heatmap: None,
            traces,
            numerical_failures: numerical,
        })
    }

    #[allow(clippy::type_complexity)]
    fn noise_trial(
        &self,
        trial: usize,
        schedule: &LambdaSchedule,
    ) -> Result<(Vec<NoiseRow>, Vec<(usize, SolveTrace)>, Option<usize>), CliError> {
        let cfg = self.cfg;
        let seed = trial_seed(cfg.seed, trial);
        let (truth, _) = self.source.truth(seed)?;
        let (meas, clean) = measurements(&cfg.sensing, &truth, seed, 0)?;
        let rank = resolve_rank(cfg, &truth)?;
        let base = Objective::penalized(cfg.lifting(), rank, meas.clone(), schedule.lambda0)?;
        let noise_norm = (meas.b() - &clean).norm();
        let mut z = base.initial_point();
        let mut rows = Vec::new();
        let mut traces = Vec::new();
        let mut alive = true;
        for (j, lambda) in schedule.values().into_iter().enumerate() {
            let obj = base.with_penalty(lambda)?;
            let mut row = NoiseRow {
                trial,
                seed,
                step: j,
                lambda,
                status: "skipped".into(),
                iterations: 0,
                res_noisy: f64::NAN,
                res_clean: f64::NAN,
                err_fro: f64::NAN,
                rmse: f64::NAN,
                lifted_residual: f64::NAN,
                noise_norm,
                cold_iterations: None,
            };
            if alive {
                let solved = solve(&self.registry, &cfg.solver, &obj, z.clone(), Some(&truth), seed)?;
                row.status = solved.status.clone();
                row.iterations = solved.iterations();
                match (solved.z, solved.trace) {
                    (Some(z1), Some(trace)) => {
                        let ax = meas.apply(&z1.x)?;
                        row.res_noisy = (&ax - meas.b()).norm();
                        row.res_clean = (&ax - &clean).norm();
                        row.err_fro = (&z1.x - &truth).norm();
                        row.rmse = rmse(&z1.x, &truth);
                        row.lifted_residual = obj.lifted_cost(&z1)?.max(0.0).sqrt();
                        traces.push((j, trace));
                        z = Ok(z1);
                    }
                    _ => alive = false,
                }
                if schedule.cold_start_check {
                    let cold = solve(
                        &self.registry,
                        &cfg.solver,
                        &obj,
                        obj.initial_point(),
                        Some(&truth),
                        seed,
                    )?;
                    row.cold_iterations = Some(cold.iterations());
                }
            }
            rows.push(row);
        }
        let pick = select_lambda(
            &rows.iter().map(|r| r.res_noisy).collect::<Vec<_>>(),
            &rows.iter().map(|r| r.lifted_residual).collect::<Vec<_>>(),
        );
        Ok((rows, traces, pick))
    }

    fn summary_head(&self, command: &str) -> Value {
        json!({
            "command": command,
            "config": self.cfg,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRow {
    pub trial: usize,
    pub seed: u64,
    pub step: usize,
    pub lambda: f64,
    pub status: String,
    pub iterations: usize,
    pub res_noisy: f64,
    pub res_clean: f64,
    pub err_fro: f64,
    pub rmse: f64,
    pub lifted_residual: f64,
    pub noise_norm: f64,
    pub cold_iterations: Option<usize>,
}

impl NoiseRow {
    fn cells(&self, index: usize) -> Vec<String> {
        vec![
            index.to_string(),
            self.trial.to_string(),
            self.seed.to_string(),
            self.step.to_string(),
            f(self.lambda),
            self.status.clone(),
            self.iterations.to_string(),
            f(self.res_noisy),
            f(self.res_clean),
            f(self.err_fro),
            f(self.rmse),
            f(self.lifted_residual),
            f(self.noise_norm),
            self.cold_iterations.map(|c| c.to_string()).unwrap_or_default(),
            "0".into(),
        ]
    }
}

/// Relative change below which consecutive `‖A(X*) − b̃‖` values count as
/// one plateau.
pub const PLATEAU_TOL: f64 = 0.25;

/// Picks the λ step: the last run of steps over which `‖A(X*) − b̃‖` is
/// flat, i.e. the plateau just before the residual falls off towards
/// interpolating the noise, then the smallest lifted residual inside it.
/// Without any plateau, the smallest lifted residual overall.
pub fn select_lambda(res_noisy: &[f64], lifted: &[f64]) -> Option<usize> {
    let ok: Vec<bool> = res_noisy
        .iter()
        .zip(lifted)
        .map(|(a, b)| a.is_finite() && b.is_finite())
        .collect();
    let flat = |j: usize| {
        ok[j] && ok[j + 1] && {
            let (a, b) = (res_noisy[j], res_noisy[j + 1]);
            (a - b).abs() <= PLATEAU_TOL * a.max(b)
        }
    };
    let mut best: Option<(usize, usize)> = None;
    let mut j = 0;
    while j + 1 < res_noisy.len() {
        if flat(j) {
            let start = j;
            while j + 1 < res_noisy.len() && flat(j) {
                j += 1;
            }
            best = Some((start, j));
        } else {
            j += 1;
        }
    }
    let range: Vec<usize> = match best {
        Some((s, e)) => (s..=e).collect(),
        None => (0..res_noisy.len()).filter(|&j| ok[j]).collect(),
    };
    range.into_iter().min_by(|&a, &b| lifted[a].total_cmp(&lifted[b]))
}

fn success_fraction(rows: &[TrialRow]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().filter(|r| r.success).count() as f64 / rows.len() as f64
}

fn failures(rows: &[TrialRow]) -> usize {
    rows.iter().filter(|r| r.status == "numerical_failure").count()
}

pub fn median(v: &[f64]) -> f64 {
    let mut v: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    if v.len() % 2 == 1 {
        v[h]
    } else {
        0.5 * (v[h - 1] + v[h])
    }
}

fn aggregate(rows: &[TrialRow]) -> Value {
    let finite: Vec<f64> = rows.iter().map(|r| r.rmse).filter(|v| v.is_finite()).collect();
    let mean = |v: &[f64]| {
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let ri: Vec<f64> = rows.iter().filter_map(|r| r.rand_index).collect();
    let mut status = BTreeMap::new();
    for r in rows {
        *status.entry(r.status.clone()).or_insert(0usize) += 1;
    }
    let iters: Vec<f64> = rows.iter().map(|r| r.iterations as f64).collect();
    json!({
        "trials": rows.len(),
        "successes": rows.iter().filter(|r| r.success).count(),
        "success_rate": success_fraction(rows),
        "mean_rmse": nan_to_null(mean(&finite)),
        "median_rmse": nan_to_null(median(&finite)),
        "mean_rand_index": nan_to_null(mean(&ri)),
        "mean_iterations": nan_to_null(mean(&iters)),
        "status_counts": status,
        "numerical_failures": failures(rows),
    })
}

fn nan_to_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_selection_prefers_the_plateau() {
        // Plateau over steps 2..=4; the smallest lifted residual overall (step 6)
        // lies past it.
        let res = [5.0, 1.0, 0.21, 0.2, 0.2, 0.05, 0.001];
        let lifted = [1e-9, 1e-6, 3e-3, 1e-3, 2e-3, 1e-4, 1e-5];
        assert_eq!(select_lambda(&res, &lifted), Some(3));
    }

    #[test]
    fn lambda_selection_skips_the_underfit_plateau() {
        // Small λ leaves the data unfitted (first run); the noise plateau is
        // the later one.
        let res = [1.6, 1.57, 1.5, 1.45, 0.16, 0.13, 0.06, 0.01, 1e-3];
        let lifted = [1e-5, 1e-5, 1e-4, 2e-3, 1e-2, 6e-2, 0.2, 0.4, 0.4];
        assert_eq!(select_lambda(&res, &lifted), Some(4));
    }

    #[test]
    fn lambda_selection_without_plateau() {
        let res = [8.0, 4.0, 2.0, 1.0];
        let lifted = [0.4, 0.1, 0.2, 0.3];
        assert_eq!(select_lambda(&res, &lifted), Some(1));
        assert_eq!(select_lambda(&[], &[]), None);
    }

    #[test]
    fn median_ignores_nan() {
        assert_eq!(median(&[3.0, f64::NAN, 1.0, 2.0]), 2.0);
        assert!(median(&[]).is_nan());
    }
}
