//! Experiment configuration files.
//!
//! Configs are TOML documents; every table rejects unknown keys. See
//! `docs/config.md` for the full schema.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::SearchBox;
use crate::dynamics::MomentumSchedule;
use crate::ensemble::Matrix;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, SvgdScaling};
use crate::objectives::{GaussianMixtureTarget, MixtureComponent, ObjectiveSet, QuadraticTarget, Target};
use crate::weights::{DEFAULT_QP_MAX_ITERS, DEFAULT_QP_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MwgradSvgd,
    MwgradBlob,
    AmwgradSvgd,
    AmwgradBlob,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::MwgradSvgd,
        Method::MwgradBlob,
        Method::AmwgradSvgd,
        Method::AmwgradBlob,
    ];

    pub fn accelerated(self) -> bool {
        matches!(self, Method::AmwgradSvgd | Method::AmwgradBlob)
    }

    /// Kernel estimator used when the objectives carry the entropy term.
    pub fn kernel_estimator(self) -> EstimatorKind {
        match self {
            Method::MwgradSvgd | Method::AmwgradSvgd => EstimatorKind::Svgd,
            Method::MwgradBlob | Method::AmwgradBlob => EstimatorKind::Blob,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::MwgradSvgd => "mwgrad-svgd",
            Method::MwgradBlob => "mwgrad-blob",
            Method::AmwgradSvgd => "amwgrad-svgd",
            Method::AmwgradBlob => "amwgrad-blob",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::validation("method", format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Toy4,
    EuclideanRateConvex,
    EuclideanRateStronglyConvex,
    Custom,
}

impl Scenario {
    pub fn is_rate(self) -> bool {
        matches!(
            self,
            Scenario::EuclideanRateConvex | Scenario::EuclideanRateStronglyConvex
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    /// Recomputed from the particles at every iteration.
    Median,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Initialization {
    StandardNormal,
    /// Every particle starts at this point.
    Fixed(Vec<f64>),
}

// ----- raw file schema -----

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawBandwidth {
    Fixed(f64),
    Rule(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RawComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub covariance: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RawTarget {
    Mixture {
        components: Vec<RawComponent>,
    },
    Quadratic {
        center: Vec<f64>,
        curvature: Option<Vec<Vec<f64>>>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// The config document exactly as written, minus defaults.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub struct RawConfig {
    pub scenario: Scenario,
    pub methods: Option<Vec<Method>>,
    pub num_particles: Option<usize>,
    pub dim: Option<usize>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    pub num_trials: Option<usize>,
    pub step_sizes: Vec<f64>,
    pub bandwidth: Option<RawBandwidth>,
    pub svgd_scaling: Option<SvgdScaling>,
    pub schedule: Option<MomentumSchedule>,
    pub include_entropy: Option<bool>,
    pub log_stride: Option<usize>,
    pub snapshot_stride: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub qp_tol: Option<f64>,
    pub qp_max_iters: Option<usize>,
    pub record_wall_clock: Option<bool>,
    pub targets: Option<Vec<RawTarget>>,
    pub initial_point: Option<Vec<f64>>,
    pub window: Option<[f64; 2]>,
    pub merit_box: Option<RawBox>,
    pub merit_resolution: Option<f64>,
    pub merit_samples: Option<usize>,
}

/// Settings used only by the Euclidean rate scenarios.
#[derive(Clone, Debug, PartialEq)]
pub struct RateSettings {
    pub window: (f64, f64),
    pub merit_box: SearchBox,
    pub merit_resolution: f64,
    pub merit_samples: usize,
}

/// Settings of a single seeded run of one method at one step size.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub method: Method,
    pub num_particles: usize,
    pub dim: usize,
    pub step_size: f64,
    pub iterations: usize,
    pub seed: u64,
    pub bandwidth: Bandwidth,
    pub schedule: MomentumSchedule,
    pub objectives: Arc<ObjectiveSet>,
    pub svgd_scaling: SvgdScaling,
    pub log_stride: usize,
    pub snapshot_stride: Option<usize>,
    pub init: Initialization,
    pub qp_tol: f64,
    pub qp_max_iters: usize,
}

impl RunConfig {
    /// Single-method config with the toy defaults (m = 50, h = 1, convex
    /// schedule, 1000 iterations).
    pub fn toy4(method: Method, step_size: f64, seed: u64) -> Self {
        RunConfig {
            method,
            num_particles: 50,
            dim: 2,
            step_size,
            iterations: 1000,
            seed,
            bandwidth: Bandwidth::Fixed(1.0),
            schedule: MomentumSchedule::Convex,
            objectives: Arc::new(ObjectiveSet::toy4()),
            svgd_scaling: SvgdScaling::Mean,
            log_stride: 1,
            snapshot_stride: None,
            init: Initialization::StandardNormal,
            qp_tol: DEFAULT_QP_TOL,
            qp_max_iters: DEFAULT_QP_MAX_ITERS,
        }
    }

    pub fn estimator(&self) -> EstimatorKind {
        if self.objectives.include_entropy() {
            self.method.kernel_estimator()
        } else {
            EstimatorKind::PotentialOnly
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_particles == 0 {
            return Err(Error::validation("num_particles", "must be at least 1"));
        }
        if self.dim == 0 || self.dim != self.objectives.dim() {
            return Err(Error::validation("dim", "must match the objectives' dimension"));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::validation(
                "step_sizes",
                format!("{} is not positive", self.step_size),
            ));
        }
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::validation("bandwidth", "must be positive"));
            }
        }
        if self.log_stride == 0 {
            return Err(Error::validation("log_stride", "must be at least 1"));
        }
        if self.snapshot_stride == Some(0) {
            return Err(Error::validation("snapshot_stride", "must be at least 1"));
        }
        if let Initialization::Fixed(p) = &self.init {
            if p.len() != self.dim || p.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(
                    "initial_point",
                    "must be finite with the objectives' dimension",
                ));
            }
        }
        if self.qp_tol.is_nan() || self.qp_tol <= 0.0 {
            return Err(Error::validation("qp_tol", "must be positive"));
        }
        if let MomentumSchedule::StronglyConvex { beta } = self.schedule {
            if !(beta.is_finite() && beta > 0.0) {
                return Err(Error::validation("schedule.beta", "must be positive"));
            }
            if self.method.accelerated() && beta * self.step_size >= 1.0 {
                return Err(Error::validation("schedule.beta", "beta * step size must be below 1"));
            }
        }
        Ok(())
    }

    pub(crate) fn initial_positions(&self) -> Option<Matrix> {
        match &self.init {
            Initialization::StandardNormal => None,
            Initialization::Fixed(p) => {
                let data = p.iter().copied().cycle().take(self.num_particles * self.dim).collect();
                Some(Matrix::from_vec(self.num_particles, self.dim, data).expect("shape checked"))
            }
        }
    }
}

/// A validated experiment: every (method, step size, trial) combination.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub methods: Vec<Method>,
    pub num_particles: usize,
    pub dim: usize,
    pub iterations: usize,
    pub seed: u64,
    pub num_trials: usize,
    pub step_sizes: Vec<f64>,
    pub bandwidth: Bandwidth,
    pub svgd_scaling: SvgdScaling,
    pub schedule: MomentumSchedule,
    pub objectives: Arc<ObjectiveSet>,
    pub log_stride: usize,
    pub snapshot_stride: Option<usize>,
    pub output_dir: PathBuf,
    pub init: Initialization,
    pub qp_tol: f64,
    pub qp_max_iters: usize,
    pub record_wall_clock: bool,
    pub rate: Option<RateSettings>,
    /// The document the config was built from.
    pub raw: RawConfig,
}

impl ExperimentConfig {
    pub fn run_config(&self, method: Method, step_size: f64) -> RunConfig {
        RunConfig {
            method,
            num_particles: self.num_particles,
            dim: self.dim,
            step_size,
            iterations: self.iterations,
            seed: self.seed,
            bandwidth: self.bandwidth,
            schedule: self.schedule,
            objectives: Arc::clone(&self.objectives),
            svgd_scaling: self.svgd_scaling,
            log_stride: self.log_stride,
            snapshot_stride: self.snapshot_stride,
            init: self.init.clone(),
            qp_tol: self.qp_tol,
            qp_max_iters: self.qp_max_iters,
        }
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let scenario = raw.scenario;
        let rate_scenario = scenario.is_rate();

        let methods = raw.methods.clone().unwrap_or_else(|| Method::ALL.to_vec());
        if methods.is_empty() {
            return Err(Error::validation("methods", "must name at least one method"));
        }

        let include_entropy = raw.include_entropy.unwrap_or(!rate_scenario);
        let objectives = build_objectives(scenario, raw.targets.as_deref(), include_entropy)?;
        let dim = objectives.dim();
        if let Some(d) = raw.dim {
            if d != dim {
                return Err(Error::validation(
                    "dim",
                    format!("{d} does not match the targets' dimension {dim}"),
                ));
            }
        }

        if rate_scenario {
            if include_entropy {
                return Err(Error::validation(
                    "include_entropy",
                    "rate scenarios use potential-only objectives",
                ));
            }
            if objectives.quadratics().is_none() {
                return Err(Error::validation("targets", "rate scenarios need quadratic targets"));
            }
            if raw.num_particles.is_some_and(|m| m != 1) {
                return Err(Error::validation(
                    "num_particles",
                    "rate scenarios use a single particle",
                ));
            }
        } else if raw.targets.is_some() && scenario == Scenario::Toy4 {
            return Err(Error::validation(
                "targets",
                "the toy4 scenario uses the built-in targets",
            ));
        }

        let num_particles = if rate_scenario {
            1
        } else {
            raw.num_particles.unwrap_or(50)
        };
        if num_particles == 0 {
            return Err(Error::validation("num_particles", "must be at least 1"));
        }
        let num_trials = raw.num_trials.unwrap_or(if rate_scenario { 1 } else { 5 });
        if num_trials == 0 {
            return Err(Error::validation("num_trials", "must be at least 1"));
        }
        if raw.step_sizes.is_empty() {
            return Err(Error::validation("step_sizes", "must list at least one step size"));
        }
        if let Some(bad) = raw.step_sizes.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::validation("step_sizes", format!("{bad} is not positive")));
        }

        let bandwidth = match &raw.bandwidth {
            None => Bandwidth::Fixed(1.0),
            Some(RawBandwidth::Fixed(h)) if h.is_finite() && *h > 0.0 => Bandwidth::Fixed(*h),
            Some(RawBandwidth::Fixed(h)) => {
                return Err(Error::validation("bandwidth", format!("{h} is not positive")));
            }
            Some(RawBandwidth::Rule(r)) if r == "median" => Bandwidth::Median,
            Some(RawBandwidth::Rule(r)) => {
                return Err(Error::validation(
                    "bandwidth",
                    format!("unknown rule `{r}`, expected a number or \"median\""),
                ));
            }
        };

        let schedule = match (raw.schedule, scenario) {
            (Some(s), _) => s,
            (None, Scenario::EuclideanRateStronglyConvex) => {
                let beta = objectives
                    .quadratics()
                    .expect("checked above")
                    .iter()
                    .map(|q| q.strong_convexity())
                    .fold(f64::INFINITY, f64::min);
                MomentumSchedule::StronglyConvex { beta }
            }
            (None, _) => MomentumSchedule::Convex,
        };
        if scenario == Scenario::EuclideanRateStronglyConvex
            && !matches!(schedule, MomentumSchedule::StronglyConvex { .. })
        {
            return Err(Error::validation(
                "schedule",
                "the strongly convex rate scenario needs a strongly-convex schedule",
            ));
        }

        let log_stride = raw.log_stride.unwrap_or(1);
        if log_stride == 0 {
            return Err(Error::validation("log_stride", "must be at least 1"));
        }
        if raw.snapshot_stride == Some(0) {
            return Err(Error::validation("snapshot_stride", "must be at least 1"));
        }
        let qp_tol = raw.qp_tol.unwrap_or(DEFAULT_QP_TOL);
        if !(qp_tol.is_finite() && qp_tol > 0.0) {
            return Err(Error::validation("qp_tol", "must be positive"));
        }

        let init = match (&raw.initial_point, rate_scenario) {
            (Some(p), _) => {
                if p.len() != dim || p.iter().any(|v| !v.is_finite()) {
                    return Err(Error::validation(
                        "initial_point",
                        format!("must be {dim} finite coordinates"),
                    ));
                }
                Initialization::Fixed(p.clone())
            }
            (None, true) => {
                return Err(Error::validation(
                    "initial_point",
                    "rate scenarios need an initial point",
                ))
            }
            (None, false) => Initialization::StandardNormal,
        };

        let rate = if rate_scenario {
            let window = raw.window.unwrap_or([5.0, 50.0]);
            if !(window[0] > 0.0 && window[0] < window[1] && window[1].is_finite()) {
                return Err(Error::validation("window", "needs 0 < t_lo < t_hi"));
            }
            let merit_box = match &raw.merit_box {
                Some(b) => SearchBox::new(b.lo.clone(), b.hi.clone())
                    .map_err(|e| Error::validation("merit_box", e.to_string()))?,
                None => SearchBox::cube(dim, 5.0)?,
            };
            if merit_box.dim() != dim {
                return Err(Error::validation("merit_box", "dimension differs from the targets"));
            }
            let quads = objectives.quadratics().expect("checked above");
            if quads.iter().any(|q| !merit_box.contains(q.center())) {
                return Err(Error::validation("merit_box", "must contain every target center"));
            }
            let merit_resolution = raw.merit_resolution.unwrap_or(1e-3);
            if !(merit_resolution.is_finite() && merit_resolution > 0.0) {
                return Err(Error::validation("merit_resolution", "must be positive"));
            }
            let merit_samples = raw.merit_samples.unwrap_or(200);
            if merit_samples < crate::diagnostics::MIN_FIT_POINTS {
                return Err(Error::validation("merit_samples", "must be at least 10"));
            }
            Some(RateSettings {
                window: (window[0], window[1]),
                merit_box,
                merit_resolution,
                merit_samples,
            })
        } else {
            None
        };

        let cfg = ExperimentConfig {
            scenario,
            methods,
            num_particles,
            dim,
            iterations: raw.iterations.unwrap_or(1000),
            seed: raw.seed.unwrap_or(0),
            num_trials,
            step_sizes: raw.step_sizes.clone(),
            bandwidth,
            svgd_scaling: raw.svgd_scaling.unwrap_or_default(),
            schedule,
            objectives: Arc::new(objectives),
            log_stride,
            snapshot_stride: raw.snapshot_stride,
            output_dir: raw.output_dir.clone().unwrap_or_else(|| PathBuf::from("out")),
            init,
            qp_tol,
            qp_max_iters: raw.qp_max_iters.unwrap_or(DEFAULT_QP_MAX_ITERS),
            record_wall_clock: raw.record_wall_clock.unwrap_or(false),
            rate,
            raw,
        };
        // per-run checks that depend on the method/step size combination
        for &m in &cfg.methods {
            for &eta in &cfg.step_sizes {
                cfg.run_config(m, eta).validate()?;
            }
        }
        Ok(cfg)
    }
}

fn build_objectives(scenario: Scenario, targets: Option<&[RawTarget]>, include_entropy: bool) -> Result<ObjectiveSet> {
    let built = match (scenario, targets) {
        (Scenario::Toy4, _) => return Ok(ObjectiveSet::toy4().with_entropy(include_entropy)),
        (Scenario::Custom, None) => return Err(Error::validation("targets", "the custom scenario needs targets")),
        (_, None) => vec![
            QuadraticTarget::isotropic(vec![1.0])?.into(),
            QuadraticTarget::isotropic(vec![-1.0])?.into(),
        ],
        (_, Some(ts)) => ts
            .iter()
            .enumerate()
            .map(|(k, t)| build_target(t).map_err(|e| Error::validation(format!("targets[{k}]"), e.to_string())))
            .collect::<Result<Vec<Target>>>()?,
    };
    ObjectiveSet::new(built, include_entropy).map_err(|e| Error::validation("targets", e.to_string()))
}

fn build_target(t: &RawTarget) -> Result<Target> {
    Ok(match t {
        RawTarget::Mixture { components } => {
            let comps = components
                .iter()
                .map(|c| MixtureComponent {
                    weight: c.weight,
                    mean: c.mean.clone(),
                    covariance: c.covariance.clone().unwrap_or_else(|| identity(c.mean.len())),
                })
                .collect();
            GaussianMixtureTarget::new(comps)?.into()
        }
        RawTarget::Quadratic { center, curvature } => {
            let a = curvature.clone().unwrap_or_else(|| identity(center.len()));
            QuadraticTarget::new(center.clone(), a)?.into()
        }
    })
}

fn identity(d: usize) -> Vec<Vec<f64>> {
    (0..d)
        .map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect())
        .collect()
}

pub fn parse_config(text: &str, origin: &Path) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    ExperimentConfig::from_raw(raw)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}
