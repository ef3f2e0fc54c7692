use std::path::{Path, PathBuf};

use liftrec::lifting::LiftingSpec;
use liftrec::solvers::{AltminConfig, RtrConfig};
use liftrec::synth::{ClusterSpec, UosSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Uos {
        n: usize,
        dims: Vec<usize>,
        pts_per: usize,
        #[serde(default)]
        affine: bool,
    },
    Clusters {
        n: usize,
        k: usize,
        pts_per: usize,
        #[serde(default = "default_sigma_c")]
        sigma_c: f64,
    },
    /// A matrix read from CSV, with optional cluster labels.
    Matrix {
        path: PathBuf,
        #[serde(default)]
        labels: Option<PathBuf>,
    },
}

fn default_sigma_c() -> f64 {
    0.5
}

impl DataSpec {
    pub fn uos(&self) -> Option<UosSpec> {
        match self {
            DataSpec::Uos {
                n,
                dims,
                pts_per,
                affine,
            } => Some(UosSpec {
                n: *n,
                dims: dims.clone(),
                pts_per: *pts_per,
                affine: *affine,
            }),
            _ => None,
        }
    }

    pub fn clusters(&self) -> Option<ClusterSpec> {
        match self {
            DataSpec::Clusters { n, k, pts_per, sigma_c } => Some(ClusterSpec {
                n: *n,
                k: *k,
                pts_per: *pts_per,
                sigma_c: *sigma_c,
            }),
            _ => None,
        }
    }

    /// Lifting used when the config names none: monomial kernel of degree 2
    /// for subspace data, Gaussian kernel for clusters.
    pub fn default_lifting(&self) -> LiftingSpec {
        match self {
            DataSpec::Clusters { .. } => LiftingSpec::GaussianKernel { sigma: 2.5 },
            _ => LiftingSpec::MonomialKernel { d: 2, c: 1.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SensingSpec {
    /// Entry sampling with ratio `delta = m / (n s)`.
    Mask { delta: f64 },
    /// Dense Gaussian sensing with `m` measurements and optional noise.
    Dense {
        m: usize,
        #[serde(default)]
        noise_sigma: f64,
    },
}

impl Default for SensingSpec {
    fn default() -> Self {
        SensingSpec::Mask { delta: 0.6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankKeyword {
    Auto,
}

/// Target rank: a number, or `"auto"` for the number of clusters (cluster
/// data) or the numerical rank of the lifted ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RankSpec {
    Fixed(usize),
    Keyword(RankKeyword),
}

impl Default for RankSpec {
    fn default() -> Self {
        RankSpec::Keyword(RankKeyword::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseParameter {
    /// Number of subspaces, each of the first listed dimension.
    Subspaces,
    /// Common subspace dimension.
    SubspaceDim,
    PointsPerGroup,
    AmbientDim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub deltas: Vec<f64>,
    pub parameter: PhaseParameter,
    pub values: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaSchedule {
    pub lambda0: f64,
    pub factor: f64,
    pub steps: usize,
    /// Also solve each step from a cold start and record its iteration count.
    pub cold_start_check: bool,
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        Self {
            lambda0: 1e-6,
            factor: 10.0,
            steps: 13,
            cold_start_check: false,
        }
    }
}

impl LambdaSchedule {
    pub fn values(&self) -> Vec<f64> {
        (0..self.steps)
            .map(|j| self.lambda0 * self.factor.powi(j as i32))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSweepSpec {
    /// Offsets added to the true lifted rank.
    pub offsets: Vec<i64>,
}

impl Default for RankSweepSpec {
    fn default() -> Self {
        Self {
            offsets: (-2..=4).collect(),
        }
    }
}

/// Starting point of the constrained solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    /// Minimum-norm solution of the measurement equations (zero fill for
    /// entry masks).
    #[default]
    Feasible,
    /// Minimum-norm solution plus a Gaussian null-space component whose
    /// entries have the scale of the data, estimated from `b`.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSpec,
    #[serde(default)]
    pub sensing: SensingSpec,
    #[serde(default)]
    pub lifting: Option<LiftingSpec>,
    #[serde(default)]
    pub rank: RankSpec,
    /// Relative singular-value cut for `rank: "auto"`; defaults to 1e-8 for
    /// polynomial liftings and 1e-4 for the Gaussian kernel.
    #[serde(default)]
    pub rank_tol: Option<f64>,
    #[serde(default = "default_solver")]
    pub solver: String,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub rtr: RtrConfig,
    #[serde(default)]
    pub altmin: AltminConfig,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Success threshold on the RMSE to the ground truth.
    #[serde(default = "default_success_rmse")]
    pub success_rmse: f64,
    /// Write one trace CSV per solve.
    #[serde(default = "default_true")]
    pub write_traces: bool,
    #[serde(default)]
    pub phase: Option<PhaseSpec>,
    #[serde(default)]
    pub noise: Option<LambdaSchedule>,
    #[serde(default)]
    pub rank_sweep: Option<RankSweepSpec>,
}

fn default_solver() -> String {
    "rtr2".into()
}

fn default_trials() -> usize {
    1
}

fn default_success_rmse() -> f64 {
    1e-3
}

fn default_true() -> bool {
    true
}

pub const SOLVER_CHOICES: [&str; 4] = ["rtr2", "altmin1", "altmin2", "simple"];

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn lifting(&self) -> LiftingSpec {
        self.lifting.unwrap_or_else(|| self.data.default_lifting())
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol.unwrap_or(match self.lifting() {
            LiftingSpec::GaussianKernel { .. } => 1e-4,
            _ => 1e-8,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        if self.trials < 1 {
            return bad("trials", "must be at least 1".into());
        }
        if self.jobs == Some(0) {
            return bad("jobs", "must be at least 1".into());
        }
        if !SOLVER_CHOICES.contains(&self.solver.as_str()) {
            return bad(
                "solver",
                format!("unknown solver `{}`, expected one of {SOLVER_CHOICES:?}", self.solver),
            );
        }
        match &self.data {
            DataSpec::Uos { n, dims, pts_per, .. } => {
                if dims.is_empty() || *pts_per == 0 {
                    return bad("data", "need at least one subspace and one point per subspace".into());
                }
                if let Some(d) = dims.iter().find(|&&d| d == 0 || d >= *n) {
                    return bad("data.dims", format!("dimension {d} must lie in [1, n) with n = {n}"));
                }
            }
            DataSpec::Clusters { n, k, pts_per, sigma_c } => {
                if *n == 0 || *k == 0 || *pts_per == 0 {
                    return bad("data", "n, k and pts_per must be positive".into());
                }
                if !(*sigma_c > 0.0) {
                    return bad("data.sigma_c", format!("must be > 0, got {sigma_c}"));
                }
            }
            DataSpec::Matrix { .. } => {}
        }
        match self.sensing {
            SensingSpec::Mask { delta } if !(0.0..=1.0).contains(&delta) => {
                return bad("sensing.delta", format!("must lie in [0, 1], got {delta}"));
            }
            SensingSpec::Dense { m, noise_sigma } => {
                if m == 0 {
                    return bad("sensing.m", "must be positive".into());
                }
                if !(noise_sigma >= 0.0) {
                    return bad("sensing.noise_sigma", format!("must be >= 0, got {noise_sigma}"));
                }
            }
            _ => {}
        }
        if let Some(l) = &self.lifting {
            if let Err(e) = l.validate(self.data_n().unwrap_or(1)) {
                return bad("lifting", e.to_string());
            }
        }
        if let RankSpec::Fixed(0) = self.rank {
            return bad("rank", "must be at least 1".into());
        }
        if let Some(t) = self.rank_tol {
            if !(t > 0.0 && t < 1.0) {
                return bad("rank_tol", format!("must lie in (0, 1), got {t}"));
            }
        }
        if !(self.success_rmse > 0.0) {
            return bad("success_rmse", "must be > 0".into());
        }
        if let Err(e) = self.altmin.validate() {
            return bad("altmin", e.to_string());
        }
        if let Some(p) = &self.phase {
            if let Some(d) = p.deltas.iter().find(|d| !(0.0..=1.0).contains(*d)) {
                return bad("phase.deltas", format!("{d} outside [0, 1]"));
            }
            if self.data.uos().is_none() {
                return bad("phase", "phase sweeps need `uos` data".into());
            }
        }
        if let Some(s) = &self.noise {
            if !(s.lambda0 > 0.0 && s.factor > 1.0 && s.steps >= 1) {
                return bad("noise", "need lambda0 > 0, factor > 1 and steps >= 1".into());
            }
        }
        Ok(())
    }

    fn data_n(&self) -> Option<usize> {
        match &self.data {
            DataSpec::Uos { n, .. } | DataSpec::Clusters { n, .. } => Some(*n),
            DataSpec::Matrix { .. } => None,
        }
    }
}
