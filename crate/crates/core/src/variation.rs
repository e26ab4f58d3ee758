//! Realized quadratic variations of an observed field and the moment
//! estimators of `sigma^2` and `theta` built from them.
//!
//! Conventions shared by all statistics:
//! - sums run over the increments that fit inside the grid and are divided
//!   by the number of terms times a scale factor (`normalization`);
//! - when the grid is flagged `zero_init`, terms that start at row 0 are
//!   dropped and the number of terms shrinks accordingly. For space
//!   increments this means summing rows `1..=N`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ObservationGrid;
use crate::spectral::{invert_g, phi_theta, psi_theta, ratio_map};

/// Tolerance used when evaluating the double-increment normalization.
pub const PHI_TOL: f64 = 1e-13;

/// Relative tolerance for `delta / sqrt(Delta) == r`.
pub const BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statistic {
    /// Time increments, normalized by `sqrt(Delta)`.
    #[serde(rename = "V_t")]
    Time,
    /// Space increments, normalized by `delta`.
    #[serde(rename = "V_sp")]
    Space,
    /// Double increments, normalized by `Phi_theta(delta, Delta)`.
    #[serde(rename = "V")]
    Double,
    /// Double increments on a balanced grid, normalized by `sqrt(Delta)`.
    #[serde(rename = "V_r")]
    DoubleBalanced,
    /// Double increments with time lag `nu v` and space lag `w`.
    #[serde(rename = "V^nu")]
    Subsampled,
}

impl Statistic {
    pub fn name(self) -> &'static str {
        match self {
            Statistic::Time => "V_t",
            Statistic::Space => "V_sp",
            Statistic::Double => "V",
            Statistic::DoubleBalanced => "V_r",
            Statistic::Subsampled => "V^nu",
        }
    }
}

/// A realized quadratic variation and how it was normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QVResult {
    pub statistic: Statistic,
    pub value: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t: f64,
    pub b: f64,
    /// Scale factor the averaged squared increments were divided by.
    pub normalization: f64,
    /// Number of squared increments in the sum.
    pub terms: usize,
    pub v: Option<usize>,
    pub w: Option<usize>,
    pub nu: Option<usize>,
    pub zero_init: bool,
    pub seed: Option<u64>,
}

impl QVResult {
    fn new(obs: &ObservationGrid, statistic: Statistic, sum: f64, terms: usize, normalization: f64) -> Self {
        Self {
            statistic,
            value: sum / (terms as f64 * normalization),
            m: obs.shape.m,
            n: obs.shape.n,
            t: obs.shape.t,
            b: obs.shape.b,
            normalization,
            terms,
            v: None,
            w: None,
            nu: None,
            zero_init: obs.zero_init,
            seed: obs.seed,
        }
    }
}

fn first_row(obs: &ObservationGrid) -> usize {
    usize::from(obs.zero_init)
}

/// Sum of squared double increments with time lag `dt` and space lag `dk`
/// over `i = i0..=N-dt`, `k = 0..=M-dk`.
fn double_sum(obs: &ObservationGrid, dt: usize, dk: usize, i0: usize) -> (f64, usize) {
    let x = &obs.values;
    let (n, m) = (obs.shape.n, obs.shape.m);
    let mut sum = 0.0;
    for i in i0..=n - dt {
        let a = x.row(i);
        let c = x.row(i + dt);
        for k in 0..=m - dk {
            let d = c[k + dk] - a[k + dk] - c[k] + a[k];
            sum += d * d;
        }
    }
    let rows = (n - dt + 1).saturating_sub(i0);
    (sum, rows * (m - dk + 1))
}

/// `V_t = (M N sqrt(Delta))^-1 sum_{i<N} sum_{k<M} (X_{i+1,k} - X_{i,k})^2`.
pub fn rqv_time(obs: &ObservationGrid) -> Result<QVResult> {
    let (n, m) = (obs.shape.n, obs.shape.m);
    if n == 0 {
        return Err(Error::Domain("time variation needs N >= 1".into()));
    }
    let x = &obs.values;
    let mut sum = 0.0;
    for i in 0..n {
        let a = x.row(i);
        let c = x.row(i + 1);
        for k in 0..m {
            let d = c[k] - a[k];
            sum += d * d;
        }
    }
    Ok(QVResult::new(obs, Statistic::Time, sum, m * n, obs.shape.big_delta().sqrt()))
}

/// `V_sp = (M N delta)^-1 sum_i sum_{k<M} (X_{i,k+1} - X_{i,k})^2` over
/// rows `0..N`, or `1..=N` for zero-initialized data.
pub fn rqv_space(obs: &ObservationGrid) -> Result<QVResult> {
    let (n, m) = (obs.shape.n, obs.shape.m);
    if m < 2 {
        return Err(Error::Domain("space variation needs M >= 2".into()));
    }
    let rows = if obs.zero_init { 1..n + 1 } else { 0..n };
    let mut sum = 0.0;
    for i in rows {
        let r = obs.values.row(i);
        for k in 0..m {
            let d = r[k + 1] - r[k];
            sum += d * d;
        }
    }
    Ok(QVResult::new(obs, Statistic::Space, sum, m * n, obs.shape.delta()))
}

/// Double-increment variation normalized by `Phi_theta(delta, Delta)`;
/// consistent for `sigma^2`.
pub fn rqv_double(obs: &ObservationGrid, theta: f64) -> Result<QVResult> {
    let phi = phi_theta(theta, obs.shape.delta(), obs.shape.big_delta(), PHI_TOL)?;
    let (sum, terms) = double_sum(obs, 1, 1, first_row(obs));
    if terms == 0 {
        return Err(Error::Domain("grid has no double increments".into()));
    }
    Ok(QVResult::new(obs, Statistic::Double, sum, terms, phi))
}

/// Double-increment variation on a balanced grid with `delta / sqrt(Delta)
/// = r`, normalized by `sqrt(Delta)`; its mean is `sigma^2 psi_theta(r)`.
pub fn rqv_double_balanced(obs: &ObservationGrid, r: f64) -> Result<QVResult> {
    let actual = obs.shape.balance_ratio();
    if !(r > 0.0) || ((actual - r) / r).abs() > BALANCE_TOL {
        return Err(Error::Contract(format!(
            "grid is not balanced at r = {r}: delta / sqrt(Delta) = {actual}"
        )));
    }
    let (sum, terms) = double_sum(obs, 1, 1, first_row(obs));
    if terms == 0 {
        return Err(Error::Domain("grid has no double increments".into()));
    }
    Ok(QVResult::new(
        obs,
        Statistic::DoubleBalanced,
        sum,
        terms,
        obs.shape.big_delta().sqrt(),
    ))
}

/// Double increments with time lag `nu v` and space lag `w`, normalized by
/// `sqrt(nu v Delta)`; its mean is `sigma^2 psi_theta(w delta / sqrt(nu v Delta))`.
pub fn subsampled_v(obs: &ObservationGrid, nu: usize, v: usize, w: usize) -> Result<QVResult> {
    if !(1..=2).contains(&nu) {
        return Err(Error::Domain(format!("nu must be 1 or 2, got {nu}")));
    }
    if v == 0 || w == 0 {
        return Err(Error::Domain("subsampling factors must be positive".into()));
    }
    let lag = nu * v;
    if lag > obs.shape.n || w > obs.shape.m {
        return Err(Error::Domain(format!(
            "subsample (nu v = {lag}, w = {w}) exceeds the grid (N = {}, M = {})",
            obs.shape.n, obs.shape.m
        )));
    }
    let (sum, terms) = double_sum(obs, lag, w, first_row(obs));
    if terms == 0 {
        return Err(Error::Domain("subsample leaves no increments".into()));
    }
    let norm = (lag as f64 * obs.shape.big_delta()).sqrt();
    let mut out = QVResult::new(obs, Statistic::Subsampled, sum, terms, norm);
    out.v = Some(v);
    out.w = Some(w);
    out.nu = Some(nu);
    Ok(out)
}

fn ceil_tol(x: f64) -> usize {
    (x * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Subsampling factors `v = max(1, ceil(delta^2 / Delta))`,
/// `w = max(1, ceil(sqrt(Delta) / delta))` and the resulting
/// `r = w delta / sqrt(v Delta)`.
///
/// `r` is only constant along a family of grids when `delta^2 / Delta`
/// stays fixed; keeping it so is left to the caller.
pub fn choose_subsampling(delta: f64, big_delta: f64) -> (usize, usize, f64) {
    let v = ceil_tol(delta * delta / big_delta);
    let w = ceil_tol(big_delta.sqrt() / delta);
    let r = w as f64 * delta / (v as f64 * big_delta).sqrt();
    (v, w, r)
}

/// Compact parameter set `[sigma2_lo, sigma2_hi] x [theta_lo, theta_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompactSet {
    pub sigma2: (f64, f64),
    pub theta: (f64, f64),
}

impl Default for CompactSet {
    fn default() -> Self {
        Self {
            sigma2: (1e-6, 1e2),
            theta: (1e-6, 1e2),
        }
    }
}

impl CompactSet {
    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in [self.sigma2, self.theta] {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(Error::Domain(format!("invalid interval [{lo}, {hi}] for H")));
            }
        }
        Ok(())
    }

    fn on_boundary(&self, sigma2: f64, theta: f64) -> bool {
        let near = |x: f64, e: f64| ((x - e) / e).abs() < 1e-12;
        near(sigma2, self.sigma2.0)
            || near(sigma2, self.sigma2.1)
            || near(theta, self.theta.0)
            || near(theta, self.theta.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    /// `theta = G_r(V1 / V2)`, `sigma^2 = V1 / psi_theta(r)`.
    ClosedForm,
    /// Least squares over a log grid on `H`.
    GridSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub sigma2_hat: f64,
    pub theta_hat: f64,
    pub method: EstimateMethod,
    pub h: CompactSet,
    pub clamped: bool,
    pub v1: f64,
    pub v2: f64,
    pub r: f64,
    pub v: Option<usize>,
    pub w: Option<usize>,
}

/// Least-squares criterion `(V1 - s psi_t(r))^2 + (V2 - s psi_t(r/sqrt2))^2`.
fn ls_objective(v1: f64, v2: f64, r: f64, sigma2: f64, theta: f64) -> f64 {
    let p1 = psi_theta(theta, r).unwrap_or(f64::NAN);
    let p2 = psi_theta(theta, r / std::f64::consts::SQRT_2).unwrap_or(f64::NAN);
    (v1 - sigma2 * p1).powi(2) + (v2 - sigma2 * p2).powi(2)
}

const GRID_POINTS: usize = 64;

fn log_grid(lo: f64, hi: f64) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..GRID_POINTS)
        .map(|i| {
            if i + 1 == GRID_POINTS {
                hi
            } else {
                (a + (b - a) * i as f64 / (GRID_POINTS - 1) as f64).exp()
            }
        })
        .collect()
}

/// Best `sigma^2` in `H` for a fixed `theta`; the criterion is a quadratic
/// in `sigma^2`, so this is the clamped least-squares slope.
fn profile_sigma2(v1: f64, v2: f64, r: f64, theta: f64, h: &CompactSet) -> Option<(f64, f64)> {
    let p1 = psi_theta(theta, r).ok()?;
    let p2 = psi_theta(theta, r / std::f64::consts::SQRT_2).ok()?;
    let slope = (v1 * p1 + v2 * p2) / (p1 * p1 + p2 * p2);
    let s = if slope.is_finite() { slope.clamp(h.sigma2.0, h.sigma2.1) } else { h.sigma2.1 };
    Some((s, ls_objective(v1, v2, r, s, theta)))
}

fn grid_argmin(v1: f64, v2: f64, r: f64, t: &[f64], h: &CompactSet) -> (usize, f64) {
    let mut best = (0, h.sigma2.1, f64::INFINITY);
    for (j, &theta) in t.iter().enumerate() {
        if let Some((s, val)) = profile_sigma2(v1, v2, r, theta, h) {
            if val < best.2 {
                best = (j, s, val);
            }
        }
    }
    (best.0, best.1)
}

/// Log-spaced search over the `theta` side of `H` (64 nodes, refined once on
/// the neighbouring cells), with `sigma^2` profiled out exactly at each node.
fn grid_search(v1: f64, v2: f64, r: f64, h: &CompactSet) -> (f64, f64) {
    let t = log_grid(h.theta.0, h.theta.1);
    let (j, _) = grid_argmin(v1, v2, r, &t, h);
    let t2 = log_grid(t[j.saturating_sub(1)], t[(j + 1).min(GRID_POINTS - 1)]);
    let (j2, s) = grid_argmin(v1, v2, r, &t2, h);
    (s, t2[j2])
}

/// Joint estimate from the two subsampled variations `V1 = V^1`, `V2 = V^2`
/// at balance ratio `r`.
pub fn joint_estimate_from_variations(v1: f64, v2: f64, r: f64, h: &CompactSet) -> Result<ParamEstimate> {
    h.validate()?;
    if !(v1 > 0.0 && v2 > 0.0) || !v1.is_finite() || !v2.is_finite() {
        return Err(Error::DegenerateData(format!(
            "subsampled variations must be positive, got V1 = {v1}, V2 = {v2}"
        )));
    }
    if !(r > 0.0) {
        return Err(Error::Domain(format!("balance ratio must be positive, got {r}")));
    }
    let base = ParamEstimate {
        sigma2_hat: f64::NAN,
        theta_hat: f64::NAN,
        method: EstimateMethod::ClosedForm,
        h: *h,
        clamped: false,
        v1,
        v2,
        r,
        v: None,
        w: None,
    };
    match invert_g(r, v1 / v2) {
        Ok(theta) => {
            let sigma2 = v1 / psi_theta(theta, r)?;
            let t = theta.clamp(h.theta.0, h.theta.1);
            let s = sigma2.clamp(h.sigma2.0, h.sigma2.1);
            Ok(ParamEstimate {
                sigma2_hat: s,
                theta_hat: t,
                clamped: t != theta || s != sigma2,
                ..base
            })
        }
        Err(Error::NotInvertible { .. }) => {
            let (s, t) = grid_search(v1, v2, r, h);
            Ok(ParamEstimate {
                sigma2_hat: s,
                theta_hat: t,
                method: EstimateMethod::GridSearch,
                clamped: h.on_boundary(s, t),
                ..base
            })
        }
        Err(e) => Err(e),
    }
}

/// Joint `(sigma^2, theta)` estimate from subsampled double increments with
/// factors from [`choose_subsampling`].
pub fn joint_estimate(obs: &ObservationGrid, h: &CompactSet) -> Result<ParamEstimate> {
    let (v, w, r) = choose_subsampling(obs.shape.delta(), obs.shape.big_delta());
    let q1 = subsampled_v(obs, 1, v, w)?;
    let q2 = subsampled_v(obs, 2, v, w)?;
    let mut est = joint_estimate_from_variations(q1.value, q2.value, r, h)?;
    est.v = Some(v);
    est.w = Some(w);
    Ok(est)
}

/// `sigma^2` from `V_t` with `theta` known: `V_t sqrt(pi theta)`.
pub fn sigma2_from_time(vt: f64, theta: f64) -> f64 {
    vt * (std::f64::consts::PI * theta).sqrt()
}

/// `sigma^2 / theta` from `V_sp`: `2 V_sp`.
pub fn sigma2_over_theta_from_space(vsp: f64) -> f64 {
    2.0 * vsp
}

/// Expected value of `V1 / V2` at diffusivity `theta`.
pub fn expected_ratio(theta: f64, r: f64) -> Result<f64> {
    ratio_map(theta, r)
}
