//! Monte Carlo studies: simulate replicates, run estimators, aggregate.
//!
//! A study is a pure function of its [`StudyConfig`]. Replicate `r` uses the
//! seed `split_seed(master_seed, r)`, replicates run on the rayon pool and
//! are collected in index order, so serial and parallel runs produce the
//! same report bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::grid::{GridShape, ObservationGrid};
use crate::nonparametric::{build_responses, default_sigma2, fit_fm, l2_error_on, select_model, ReactionFit};
use crate::rng::split_seed;
use crate::simulator::{simulate, ModelSpec, SimConfig};
use crate::spectral::psi_theta;
use crate::variation::{
    joint_estimate, rqv_double, rqv_double_balanced, rqv_space, rqv_time, CompactSet,
};

/// Environment variable overriding the master seed of a study.
pub const SEED_ENV: &str = "SPDE_MASTER_SEED";

/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[serde(rename = "V_t")]
    Time,
    #[serde(rename = "V_sp")]
    Space,
    #[serde(rename = "V")]
    Double,
    #[serde(rename = "V_r")]
    DoubleBalanced,
    Joint,
    Fit,
    Select,
}

/// Settings of the reaction-function fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    /// Space used by the `fit` estimator.
    #[serde(default)]
    pub basis: Option<BasisSpec>,
    /// Candidates of the `select` estimator.
    #[serde(default)]
    pub candidates: Vec<BasisSpec>,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// `sigma^2` in the penalty; defaults to the plug-in `V_t sqrt(pi theta)`.
    #[serde(default)]
    pub sigma2: Option<f64>,
    /// Interval of the reported `L^2` error; defaults to `A`.
    #[serde(default)]
    pub error_interval: Option<(f64, f64)>,
}

fn default_kappa() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub sim: SimConfig,
    pub grids: Vec<GridShape>,
    pub replicates: usize,
    pub estimators: Vec<Estimator>,
    #[serde(default)]
    pub fit: Option<FitSettings>,
    #[serde(default)]
    pub h: Option<CompactSet>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn config_error(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| config_error(&e.path().to_string(), e.inner().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Replaces the master seed by `$SPDE_MASTER_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(s) = std::env::var(SEED_ENV) {
            self.master_seed = s
                .trim()
                .parse()
                .map_err(|_| config_error("master_seed", format!("{SEED_ENV}=`{s}` is not a u64")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(config_error("replicates", "must be at least 1"));
        }
        if self.grids.is_empty() {
            return Err(config_error("grids", "at least one grid is required"));
        }
        if self.estimators.is_empty() {
            return Err(config_error("estimators", "at least one estimator is required"));
        }
        self.model
            .validate()
            .map_err(|e| config_error("model", e.to_string()))?;
        for (i, g) in self.grids.iter().enumerate() {
            g.validate().map_err(|e| config_error(&format!("grids[{i}]"), e.to_string()))?;
            let fits = self
                .estimators
                .iter()
                .any(|e| matches!(e, Estimator::Fit | Estimator::Select));
            if fits && g.b != 0.0 {
                return Err(config_error(&format!("grids[{i}].b"), "reaction fits need b = 0"));
            }
        }
        if let Some(h) = &self.h {
            h.validate().map_err(|e| config_error("h", e.to_string()))?;
        }
        let fit = self.fit.as_ref();
        if self.estimators.contains(&Estimator::Fit) && fit.and_then(|f| f.basis).is_none() {
            return Err(config_error("fit.basis", "required by the `fit` estimator"));
        }
        if self.estimators.contains(&Estimator::Select) && fit.is_none_or(|f| f.candidates.is_empty()) {
            return Err(config_error("fit.candidates", "required by the `select` estimator"));
        }
        Ok(())
    }
}

/// Outcome of one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub grid: usize,
    pub replicate: usize,
    pub seed: u64,
    /// Scalar outputs keyed by name.
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fits: Vec<ReactionFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Moments of one scalar across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    /// Standard error of the mean.
    pub se: f64,
    pub limit: Option<f64>,
    pub rmse: Option<f64>,
    /// `M N` times the variance.
    pub scaled_variance: f64,
    /// Skewness and excess kurtosis of `sqrt(MN) (value - limit)`.
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub shape: GridShape,
    pub failures: usize,
    pub aggregates: BTreeMap<String, Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub master_seed: u64,
    pub replicates: usize,
    pub version: String,
    pub grids: Vec<GridSummary>,
    pub records: Vec<ReplicateRecord>,
}

impl StudyReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Population limit of a named output, when known.
fn limit_for(name: &str, model: &ModelSpec, shape: &GridShape) -> Option<f64> {
    let (s2, th) = (model.sigma.powi(2), model.theta);
    match name {
        "V_t" => Some(s2 / (std::f64::consts::PI * th).sqrt()),
        "V_sp" => Some(s2 / (2.0 * th)),
        "V" | "sigma2_hat" => Some(s2),
        "V_r" => psi_theta(th, shape.balance_ratio()).ok().map(|p| s2 * p),
        "theta_hat" => Some(th),
        _ => None,
    }
}

fn run_estimators(cfg: &StudyConfig, obs: &ObservationGrid, record: &mut ReplicateRecord) -> Result<()> {
    let theta = cfg.model.theta;
    let h = cfg.h.unwrap_or_default();
    for est in &cfg.estimators {
        match est {
            Estimator::Time => {
                record.values.insert("V_t".into(), rqv_time(obs)?.value);
            }
            Estimator::Space => {
                record.values.insert("V_sp".into(), rqv_space(obs)?.value);
            }
            Estimator::Double => {
                record.values.insert("V".into(), rqv_double(obs, theta)?.value);
            }
            Estimator::DoubleBalanced => {
                let r = obs.shape.balance_ratio();
                record.values.insert("V_r".into(), rqv_double_balanced(obs, r)?.value);
            }
            Estimator::Joint => {
                let e = joint_estimate(obs, &h)?;
                record.values.insert("sigma2_hat".into(), e.sigma2_hat);
                record.values.insert("theta_hat".into(), e.theta_hat);
            }
            Estimator::Fit | Estimator::Select => {
                let settings = cfg.fit.as_ref().expect("validated");
                let data = build_responses(obs, theta)?;
                let fit = if *est == Estimator::Fit {
                    fit_fm(&data, settings.basis.as_ref().expect("validated"))?
                } else {
                    let s2 = match settings.sigma2 {
                        Some(s) => s,
                        None => default_sigma2(obs, theta)?,
                    };
                    select_model(&data, &settings.candidates, settings.kappa, s2)?
                };
                let a = fit.basis.a;
                let (lo, hi) = settings.error_interval.unwrap_or((-a, a));
                let key = if *est == Estimator::Fit { "fit" } else { "select" };
                record.values.insert(
                    format!("{key}_l2_error"),
                    l2_error_on(&fit, &cfg.model.reaction, lo, hi, 1 << 12),
                );
                if let Some(m) = fit.m_hat {
                    record.values.insert("m_hat".into(), m as f64);
                }
                record.fits.push(fit);
            }
        }
    }
    Ok(())
}

fn run_replicate(cfg: &StudyConfig, grid: usize, replicate: usize) -> ReplicateRecord {
    let seed = split_seed(cfg.master_seed, replicate as u64);
    let mut record = ReplicateRecord {
        grid,
        replicate,
        seed,
        values: BTreeMap::new(),
        fits: Vec::new(),
        error: None,
    };
    let sim_cfg = SimConfig {
        seed,
        ..cfg.sim.clone()
    };
    let outcome = simulate(&cfg.model, &cfg.grids[grid], &sim_cfg)
        .and_then(|sim| run_estimators(cfg, &sim.grid, &mut record));
    if let Err(e) = outcome {
        record.values.clear();
        record.fits.clear();
        record.error = Some(e.to_string());
    }
    record
}

/// Mean, variance and standardized moments of `xs`.
pub fn aggregate(xs: &[f64], limit: Option<f64>, mn: f64) -> Aggregate {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let variance = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let rmse = limit.map(|l| (xs.iter().map(|x| (x - l).powi(2)).sum::<f64>() / n).sqrt());
    let center = limit.unwrap_or(mean);
    let z: Vec<f64> = xs.iter().map(|x| mn.sqrt() * (x - center)).collect();
    let zm = z.iter().sum::<f64>() / n;
    let m2 = z.iter().map(|v| (v - zm).powi(2)).sum::<f64>() / n;
    let m3 = z.iter().map(|v| (v - zm).powi(3)).sum::<f64>() / n;
    let m4 = z.iter().map(|v| (v - zm).powi(4)).sum::<f64>() / n;
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    Aggregate {
        count: xs.len(),
        mean,
        variance,
        se: (variance / n).sqrt(),
        limit,
        rmse,
        scaled_variance: mn * variance,
        skewness,
        excess_kurtosis,
    }
}

/// Runs the study; `parallel = false` forces serial execution.
pub fn run_study_with(cfg: &StudyConfig, parallel: bool) -> Result<StudyReport> {
    cfg.validate()?;
    let mut records = Vec::new();
    let mut grids = Vec::new();
    for (g, shape) in cfg.grids.iter().enumerate() {
        let recs: Vec<ReplicateRecord> = if parallel {
            (0..cfg.replicates)
                .into_par_iter()
                .map(|r| run_replicate(cfg, g, r))
                .collect()
        } else {
            (0..cfg.replicates).map(|r| run_replicate(cfg, g, r)).collect()
        };
        let failures = recs.iter().filter(|r| r.error.is_some()).count();
        if failures as f64 > MAX_FAILURE_FRACTION * cfg.replicates as f64 {
            let first = recs.iter().find_map(|r| r.error.clone()).unwrap_or_default();
            return Err(Error::DegenerateData(format!(
                "{failures} of {} replicates failed on grid {g}; first error: {first}",
                cfg.replicates
            )));
        }
        let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &recs {
            for (k, v) in &r.values {
                columns.entry(k.clone()).or_default().push(*v);
            }
        }
        let mn = (shape.m * shape.n) as f64;
        let aggregates = columns
            .into_iter()
            .map(|(k, xs)| {
                let agg = aggregate(&xs, limit_for(&k, &cfg.model, shape), mn);
                (k, agg)
            })
            .collect();
        grids.push(GridSummary {
            shape: *shape,
            failures,
            aggregates,
        });
        records.extend(recs);
    }
    Ok(StudyReport {
        master_seed: cfg.master_seed,
        replicates: cfg.replicates,
        version: env!("CARGO_PKG_VERSION").into(),
        grids,
        records,
    })
}

/// Runs the study in parallel and writes the report to `cfg.output` if set.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    let report = run_study_with(cfg, true)?;
    if let Some(path) = &cfg.output {
        std::fs::write(path, report.to_json()?)?;
    }
    Ok(report)
}
