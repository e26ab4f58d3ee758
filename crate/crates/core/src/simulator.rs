//! Spectral Galerkin simulation of
//! `dX = (theta X'' + f(X)) dt + sigma dW` with Dirichlet boundary.
//!
//! Each retained sine mode is an Ornstein-Uhlenbeck process and is advanced
//! with its exact transition law. The reaction term enters through an
//! exponential Euler step whose forcing is the collocation sine coefficient
//! of `f(X)` on a fine grid.
//!
//! Modes above the cutoff relax in a small fraction of an observation
//! interval. When `tail_compensation` is on they are added to every recorded
//! row as independent Gaussians folded onto the observation grid, so the
//! sampled field has the covariance of the untruncated linear solution.
//! The cutoff is raised as needed so that `lambda_{K+1} Delta >= 36`, which
//! keeps the neglected time correlation of the tail below `e^-36`.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{GridShape, ObservationGrid, SimulationInfo};
use crate::rng::{stream_rng, TAIL_STREAM_BASE};
use crate::spectral::{alias_index, trigamma, ModeCoefficients, SineTransform};

/// Reaction polynomial `f(x) = sum_j c_j x^j`; no coefficients means `f = 0`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    pub coefficients: Vec<f64>,
}

impl Polynomial {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// `-x^3 + 0.2 x`.
    pub fn figure_one() -> Self {
        Self::new(vec![0.0, 0.2, 0.0, -1.0])
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coefficients.iter().rposition(|&c| c != 0.0)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }
}

/// Initial condition policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// `X_0 = 0`.
    Zero,
    /// Each mode drawn from its stationary law `N(0, sigma^2 / (2 lambda))`
    /// under `f = 0`.
    #[default]
    StationaryLinear,
    /// Run the dynamics from the linear stationary law for `t_burn` before
    /// recording. Defaults to `10 / (theta pi^2)`.
    BurnIn {
        #[serde(default)]
        t_burn: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub theta: f64,
    pub sigma: f64,
    #[serde(default)]
    pub reaction: Polynomial,
    #[serde(default)]
    pub init: InitialCondition,
}

impl ModelSpec {
    pub fn linear(theta: f64, sigma: f64) -> Self {
        Self {
            theta,
            sigma,
            reaction: Polynomial::zero(),
            init: InitialCondition::StationaryLinear,
        }
    }

    pub fn with_reaction(mut self, reaction: Polynomial) -> Self {
        self.reaction = reaction;
        self
    }

    pub fn with_init(mut self, init: InitialCondition) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0) || !self.theta.is_finite() {
            return Err(Error::Domain(format!("theta must be positive, got {}", self.theta)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Domain(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.reaction.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("reaction coefficients must be finite".into()));
        }
        if let InitialCondition::BurnIn { t_burn: Some(t) } = self.init {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::Domain(format!("burn-in time must be nonnegative, got {t}")));
            }
        }
        Ok(())
    }

    /// Ten relaxation times of the slowest mode.
    pub fn default_burn_in(&self) -> f64 {
        10.0 / (self.theta * PI * PI)
    }

    /// Warnings for reactions that are not dissipative at infinity.
    pub fn coercivity_warnings(&self) -> Vec<String> {
        let Some(d) = self.reaction.degree() else {
            return Vec::new();
        };
        if d < 2 {
            return Vec::new();
        }
        let lead = self.reaction.coefficients[d];
        if d % 2 == 0 {
            vec![format!("reaction has even degree {d}; paths may blow up on long horizons")]
        } else if lead > 0.0 {
            vec![format!(
                "reaction has odd degree {d} with positive leading coefficient {lead}; paths may blow up"
            )]
        } else {
            Vec::new()
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_burn_in_step() -> f64 {
    1e-2
}

/// Numerical settings. Unset fields take the documented defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Retained modes `K`; default `max(1000, 2M)`.
    #[serde(default)]
    pub cutoff: Option<usize>,
    /// Exponential Euler steps per observation interval; default 1 when
    /// `Delta <= 0.01`, else `ceil(Delta / 0.01)`.
    #[serde(default)]
    pub substeps: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Size of the collocation grid for `f(X)`; default `K + 1`.
    #[serde(default)]
    pub collocation: Option<usize>,
    #[serde(default = "default_true")]
    pub tail_compensation: bool,
    /// Largest step used during burn-in.
    #[serde(default = "default_burn_in_step")]
    pub burn_in_step: f64,
    /// Keep the mode coefficients at every observation time.
    #[serde(default)]
    pub record_modes: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            cutoff: None,
            substeps: None,
            seed: 0,
            collocation: None,
            tail_compensation: true,
            burn_in_step: default_burn_in_step(),
            record_modes: false,
        }
    }
}

impl SimConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_cutoff(mut self, k: usize) -> Self {
        self.cutoff = Some(k);
        self
    }

    pub fn with_substeps(mut self, s: usize) -> Self {
        self.substeps = Some(s);
        self
    }

    pub fn requested_cutoff(&self, m: usize) -> usize {
        self.cutoff.unwrap_or_else(|| 1000.max(2 * m))
    }

    pub fn substeps_for(&self, big_delta: f64) -> usize {
        self.substeps.unwrap_or_else(|| {
            if big_delta <= 1e-2 {
                1
            } else {
                (big_delta / 1e-2 - 1e-9).ceil() as usize
            }
        })
    }

    fn validate(&self, shape: &GridShape) -> Result<()> {
        let k = self.requested_cutoff(shape.m);
        if k < shape.m {
            return Err(Error::Domain(format!("cutoff K = {k} is below M = {}", shape.m)));
        }
        if self.substeps == Some(0) {
            return Err(Error::Domain("substeps must be at least 1".into()));
        }
        if let Some(c) = self.collocation {
            if c < 2 {
                return Err(Error::Domain("collocation grid needs at least 2 points".into()));
            }
        }
        if !(self.burn_in_step > 0.0) {
            return Err(Error::Domain("burn-in step must be positive".into()));
        }
        Ok(())
    }
}

/// Output of a simulation run.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub grid: ObservationGrid,
    /// Mode coefficients at each observation time when requested.
    pub modes: Option<Vec<ModeCoefficients>>,
    pub warnings: Vec<String>,
}

const TAIL_DECORRELATION: f64 = 36.0;
const MAX_BASE_RESOLUTION: usize = 1 << 22;
const MAX_CUTOFF: usize = 1 << 22;
const BLOW_UP: f64 = 1e12;

/// Smallest cutoff whose first neglected mode decorrelates within `Delta`.
pub fn tail_cutoff(theta: f64, big_delta: f64) -> usize {
    let l = (TAIL_DECORRELATION / (theta * PI * PI * big_delta)).sqrt();
    (l.ceil() as usize).saturating_sub(1).max(1)
}

/// Smallest `L` for which every location `b + k delta` is a multiple of
/// `1/L`, with the step `delta L` returned alongside.
pub fn base_resolution(shape: &GridShape) -> Result<(usize, usize, usize)> {
    let near_int = |x: f64| (x - x.round()).abs() <= 1e-9 * x.abs().max(1.0);
    let delta = shape.delta();
    for l in 1..=MAX_BASE_RESOLUTION {
        let lf = l as f64;
        if near_int(shape.b * lf) && near_int(delta * lf) && (delta * lf).round() >= 1.0 {
            let (l, scale) = if l < 2 { (2, 2) } else { (l, 1) };
            let start = (shape.b * lf).round() as usize * scale;
            let step = (delta * lf).round() as usize * scale;
            return Ok((l, start, step));
        }
    }
    Err(Error::Alignment(format!(
        "locations b = {} + k * {delta} have no common denominator up to {MAX_BASE_RESOLUTION}",
        shape.b
    )))
}

/// Per-mode transition coefficients for one step of length `h`.
struct StepCoeffs {
    decay: Vec<f64>,
    noise: Vec<f64>,
    gain: Vec<f64>,
}

impl StepCoeffs {
    fn new(theta: f64, sigma: f64, k: usize, h: f64) -> Self {
        let c = theta * PI * PI;
        let mut decay = Vec::with_capacity(k);
        let mut noise = Vec::with_capacity(k);
        let mut gain = Vec::with_capacity(k);
        for l in 1..=k {
            let lam = c * (l as f64).powi(2);
            decay.push((-lam * h).exp());
            noise.push(sigma * (-(-2.0 * lam * h).exp_m1() / (2.0 * lam)).sqrt());
            gain.push(-(-lam * h).exp_m1() / lam);
        }
        Self { decay, noise, gain }
    }
}

/// Maps mode coefficients to field values on the observation grid.
struct Observer {
    l: usize,
    transform: SineTransform,
    alias: Vec<(u32, f64)>,
    bins: Vec<f64>,
    field: Vec<f64>,
    columns: Vec<usize>,
    tail_sd: Option<Vec<f64>>,
    tail_rngs: Vec<ChaCha8Rng>,
}

impl Observer {
    fn new(model: &ModelSpec, shape: &GridShape, k: usize, tail: bool, seed: u64) -> Result<Self> {
        let (l, start, step) = base_resolution(shape)?;
        let alias = (1..=k)
            .map(|ell| match alias_index(ell, l) {
                Some((bin, s)) => (bin as u32, s),
                None => (0, 0.0),
            })
            .collect();
        let columns = (0..=shape.m).map(|i| start + i * step).collect();
        let (tail_sd, tail_rngs) = if tail {
            let scale = model.sigma.powi(2) / (2.0 * model.theta * PI * PI);
            let sd = (1..l)
                .map(|j| (scale * (residue_tail(j, l, k) + residue_tail(2 * l - j, l, k))).sqrt())
                .collect();
            let rngs = (1..l)
                .map(|j| stream_rng(seed, TAIL_STREAM_BASE + j as u64))
                .collect();
            (Some(sd), rngs)
        } else {
            (None, Vec::new())
        };
        Ok(Self {
            l,
            transform: SineTransform::new(l)?,
            alias,
            bins: vec![0.0; l - 1],
            field: vec![0.0; l - 1],
            columns,
            tail_sd,
            tail_rngs,
        })
    }

    fn record(&mut self, u: &[f64], with_tail: bool, row: &mut [f64]) {
        self.bins.iter_mut().for_each(|b| *b = 0.0);
        for (&(bin, s), &c) in self.alias.iter().zip(u) {
            if bin > 0 {
                self.bins[bin as usize - 1] += s * c;
            }
        }
        if with_tail {
            if let Some(sd) = &self.tail_sd {
                for ((b, &s), rng) in self.bins.iter_mut().zip(sd).zip(&mut self.tail_rngs) {
                    let z: f64 = rng.sample(StandardNormal);
                    *b += s * z;
                }
            }
        }
        self.transform.synthesize_into(&self.bins, &mut self.field);
        for (out, &j) in row.iter_mut().zip(&self.columns) {
            *out = if j == 0 || j == self.l { 0.0 } else { self.field[j - 1] };
        }
    }
}

/// `sum_{ell > K, ell = a mod 2L} ell^-2`.
fn residue_tail(a: usize, l: usize, k: usize) -> f64 {
    let period = 2 * l;
    let n0 = if a > k { 0 } else { (k - a) / period + 1 };
    let scale = (period * period) as f64;
    trigamma(n0 as f64 + a as f64 / period as f64) / scale
}

struct Setup {
    k: usize,
    substeps: usize,
    t_burn: Option<f64>,
    observer: Observer,
    rngs: Vec<ChaCha8Rng>,
    u: Vec<f64>,
    warnings: Vec<String>,
}

fn setup(model: &ModelSpec, shape: &GridShape, config: &SimConfig) -> Result<Setup> {
    model.validate()?;
    shape.validate()?;
    config.validate(shape)?;
    let big_delta = shape.big_delta();
    let mut k = config.requested_cutoff(shape.m);
    let mut warnings = model.coercivity_warnings();
    if config.tail_compensation {
        let needed = tail_cutoff(model.theta, big_delta);
        if needed > k {
            if needed > MAX_CUTOFF {
                return Err(Error::Resource(format!(
                    "tail compensation needs K = {needed} modes; disable it or coarsen the time grid"
                )));
            }
            warnings.push(format!("cutoff raised from {k} to {needed} for tail compensation"));
            k = needed;
        }
    }
    let observer = Observer::new(model, shape, k, config.tail_compensation, config.seed)?;
    let rngs = (1..=k as u64).map(|l| stream_rng(config.seed, l)).collect();
    let t_burn = match model.init {
        InitialCondition::BurnIn { t_burn } => Some(t_burn.unwrap_or_else(|| model.default_burn_in())),
        _ => None,
    };
    Ok(Setup {
        k,
        substeps: config.substeps_for(big_delta),
        t_burn,
        observer,
        rngs,
        u: vec![0.0; k],
        warnings,
    })
}

fn draw_stationary(model: &ModelSpec, u: &mut [f64], rngs: &mut [ChaCha8Rng]) {
    let c = model.theta * PI * PI;
    for (l, (x, rng)) in u.iter_mut().zip(rngs.iter_mut()).enumerate() {
        let lam = c * ((l + 1) as f64).powi(2);
        let z: f64 = rng.sample(StandardNormal);
        *x = model.sigma / (2.0 * lam).sqrt() * z;
    }
}

fn linear_step(coeffs: &StepCoeffs, u: &mut [f64], rngs: &mut [ChaCha8Rng]) {
    for (((x, rng), &a), &s) in u.iter_mut().zip(rngs.iter_mut()).zip(&coeffs.decay).zip(&coeffs.noise) {
        let z: f64 = rng.sample(StandardNormal);
        *x = a * *x + s * z;
    }
}

fn finish(
    shape: &GridShape,
    config: &SimConfig,
    values: Array2<f64>,
    s: Setup,
    modes: Option<Vec<ModeCoefficients>>,
    zero_init: bool,
) -> Result<Simulation> {
    let mut grid = ObservationGrid::new(*shape, values)?;
    grid.zero_init = zero_init;
    grid.seed = Some(config.seed);
    grid.info = Some(SimulationInfo {
        cutoff_used: s.k,
        tail_compensated: config.tail_compensation,
        burn_in: s.t_burn,
        burn_in_heuristic: s.t_burn.is_some(),
    });
    Ok(Simulation {
        grid,
        modes,
        warnings: s.warnings,
    })
}

/// Exact simulation of the linear equation (`f = 0`).
pub fn simulate_linear(model: &ModelSpec, shape: &GridShape, config: &SimConfig) -> Result<Simulation> {
    if !model.reaction.is_empty() {
        return Err(Error::Contract(
            "simulate_linear requires an empty reaction; use simulate_semilinear".into(),
        ));
    }
    let mut s = setup(model, shape, config)?;
    let zero_init = model.init == InitialCondition::Zero;
    match model.init {
        InitialCondition::Zero => {}
        InitialCondition::StationaryLinear => draw_stationary(model, &mut s.u, &mut s.rngs),
        InitialCondition::BurnIn { .. } => {
            let t = s.t_burn.unwrap_or(0.0);
            if t > 0.0 {
                let c = StepCoeffs::new(model.theta, model.sigma, s.k, t);
                linear_step(&c, &mut s.u, &mut s.rngs);
            }
        }
    }
    let coeffs = StepCoeffs::new(model.theta, model.sigma, s.k, shape.big_delta());
    let mut values = Array2::zeros((shape.n + 1, shape.m + 1));
    let mut modes = config.record_modes.then(Vec::new);
    for i in 0..=shape.n {
        if i > 0 {
            linear_step(&coeffs, &mut s.u, &mut s.rngs);
        }
        let row = values.row_mut(i).into_slice().expect("standard layout");
        s.observer.record(&s.u, !(zero_init && i == 0), row);
        if let Some(m) = modes.as_mut() {
            m.push(ModeCoefficients { values: s.u.clone() });
        }
    }
    finish(shape, config, values, s, modes, zero_init)
}

/// Exponential Euler integrator with collocation of the reaction term.
struct Reaction<'a> {
    f: &'a Polynomial,
    transform: SineTransform,
    scratch_modes: Vec<f64>,
    field: Vec<f64>,
    forcing: Vec<f64>,
    steps: usize,
}

impl<'a> Reaction<'a> {
    fn new(f: &'a Polynomial, k: usize, collocation: Option<usize>) -> Result<Self> {
        let n = collocation.unwrap_or(k + 1);
        Ok(Self {
            f,
            transform: SineTransform::new(n)?,
            scratch_modes: vec![0.0; n - 1],
            field: vec![0.0; n - 1],
            forcing: vec![0.0; n - 1],
            steps: 0,
        })
    }

    /// Sine coefficients of `f(X)` for modes `1..=K`; modes beyond the
    /// collocation resolution get no forcing.
    fn forcing(&mut self, u: &[f64]) -> &[f64] {
        let n = self.scratch_modes.len();
        let used = n.min(u.len());
        self.scratch_modes[..used].copy_from_slice(&u[..used]);
        self.scratch_modes[used..].iter_mut().for_each(|v| *v = 0.0);
        self.transform.synthesize_into(&self.scratch_modes, &mut self.field);
        for v in self.field.iter_mut() {
            *v = self.f.eval(*v);
        }
        self.transform.forward_into(&self.field, &mut self.forcing);
        &self.forcing
    }

    fn step(&mut self, coeffs: &StepCoeffs, u: &mut [f64], rngs: &mut [ChaCha8Rng]) -> Result<()> {
        self.forcing(u);
        self.steps += 1;
        let forced = self.forcing.len().min(u.len());
        for (l, (x, rng)) in u.iter_mut().zip(rngs.iter_mut()).enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            let drive = if l < forced { coeffs.gain[l] * self.forcing[l] } else { 0.0 };
            *x = coeffs.decay[l] * *x + drive + coeffs.noise[l] * z;
            if !(x.abs() <= BLOW_UP) {
                return Err(Error::Divergence {
                    step: self.steps,
                    mode: l + 1,
                    magnitude: x.abs(),
                });
            }
        }
        Ok(())
    }
}

/// Simulation of the semilinear equation by exponential Euler.
pub fn simulate_semilinear(model: &ModelSpec, shape: &GridShape, config: &SimConfig) -> Result<Simulation> {
    if model.reaction.is_empty() {
        return Err(Error::Contract(
            "simulate_semilinear requires a reaction polynomial; use simulate_linear".into(),
        ));
    }
    let mut s = setup(model, shape, config)?;
    let zero_init = model.init == InitialCondition::Zero;
    let mut reaction = Reaction::new(&model.reaction, s.k, config.collocation)?;
    if model.init != InitialCondition::Zero {
        draw_stationary(model, &mut s.u, &mut s.rngs);
    }
    if let Some(t) = s.t_burn.filter(|&t| t > 0.0) {
        let steps = ((t / config.burn_in_step) - 1e-9).ceil().max(1.0) as usize;
        let c = StepCoeffs::new(model.theta, model.sigma, s.k, t / steps as f64);
        for _ in 0..steps {
            reaction.step(&c, &mut s.u, &mut s.rngs)?;
        }
    }
    let h = shape.big_delta() / s.substeps as f64;
    let coeffs = StepCoeffs::new(model.theta, model.sigma, s.k, h);
    let mut values = Array2::zeros((shape.n + 1, shape.m + 1));
    let mut modes = config.record_modes.then(Vec::new);
    for i in 0..=shape.n {
        if i > 0 {
            for _ in 0..s.substeps {
                reaction.step(&coeffs, &mut s.u, &mut s.rngs)?;
            }
        }
        let row = values.row_mut(i).into_slice().expect("standard layout");
        s.observer.record(&s.u, !(zero_init && i == 0), row);
        if let Some(m) = modes.as_mut() {
            m.push(ModeCoefficients { values: s.u.clone() });
        }
    }
    finish(shape, config, values, s, modes, zero_init)
}

/// Dispatches on whether the model has a reaction term.
pub fn simulate(model: &ModelSpec, shape: &GridShape, config: &SimConfig) -> Result<Simulation> {
    if model.reaction.is_empty() {
        simulate_linear(model, shape, config)
    } else {
        simulate_semilinear(model, shape, config)
    }
}
