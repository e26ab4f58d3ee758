//! Dirichlet sine eigenbasis of `theta * d^2/dx^2` on `(0, 1)`, the discrete
//! sine transform on the grid `y_k = k / M`, the heat semigroup acting on
//! coefficients, and the closed-form scalar functions that normalize the
//! quadratic-variation estimators.
//!
//! Eigenpairs are `lambda_l = theta * pi^2 * l^2` and
//! `e_l(y) = sqrt(2) * sin(pi * l * y)`. On the grid the empirical inner
//! product `<u, e_k>_M = (1/M) sum_{l=1}^{M-1} u(y_l) e_k(y_l)` is exactly
//! orthonormal for `1 <= k, l <= M - 1`, and a mode `e_j` folds onto index
//! `k` with sign `+1` when `j = k + 2Mn` and `-1` when `j = 2M - k + 2Mn`.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use libm::erfc;

use crate::error::{domain, Error, Result};

/// `lambda_l = theta * pi^2 * l^2`.
pub fn eigenvalue(theta: f64, ell: usize) -> Result<f64> {
    if !(theta > 0.0) || !theta.is_finite() {
        return domain(format!("diffusivity must be positive, got {theta}"));
    }
    if ell == 0 {
        return domain("mode index starts at 1");
    }
    Ok(theta * PI * PI * (ell as f64).powi(2))
}

/// `e_l(y) = sqrt(2) sin(pi l y)`.
#[inline]
pub fn sine_mode(ell: usize, y: f64) -> f64 {
    SQRT_2 * (PI * ell as f64 * y).sin()
}

/// The first `cutoff` eigenpairs of the Dirichlet Laplacian scaled by `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSystem {
    theta: f64,
    cutoff: usize,
}

impl EigenSystem {
    pub fn new(theta: f64, cutoff: usize) -> Result<Self> {
        eigenvalue(theta, 1)?;
        if cutoff == 0 {
            return domain("cutoff must retain at least one mode");
        }
        Ok(Self { theta, cutoff })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    #[inline]
    pub fn eigenvalue(&self, ell: usize) -> f64 {
        self.theta * PI * PI * (ell as f64).powi(2)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        (1..=self.cutoff).map(|l| self.eigenvalue(l)).collect()
    }

    #[inline]
    pub fn eigenfunction(&self, ell: usize, y: f64) -> f64 {
        sine_mode(ell, y)
    }
}

/// Coefficients on an indexed sine family, entry `i` belonging to mode `i + 1`.
pub trait SineCoefficients {
    fn coefficients(&self) -> &[f64];
    fn coefficients_mut(&mut self) -> &mut [f64];
}

/// Fourier coefficients `x_l = <u, e_l>` for `l = 1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeCoefficients {
    pub values: Vec<f64>,
}

impl ModeCoefficients {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return domain("mode coefficients must be finite");
        }
        Ok(Self { values })
    }

    pub fn zeros(cutoff: usize) -> Self {
        Self {
            values: vec![0.0; cutoff],
        }
    }

    pub fn cutoff(&self) -> usize {
        self.values.len()
    }

    /// Value of `sum_l x_l e_l(y)`.
    pub fn evaluate(&self, y: f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &c)| c * sine_mode(i + 1, y))
            .sum()
    }
}

impl SineCoefficients for ModeCoefficients {
    fn coefficients(&self) -> &[f64] {
        &self.values
    }
    fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Empirical coefficients `<u, e_k>_M`, `k = 1..=M-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSpectrum {
    m: usize,
    pub values: Vec<f64>,
}

impl DiscreteSpectrum {
    pub fn new(m: usize, values: Vec<f64>) -> Result<Self> {
        if m < 2 {
            return domain(format!("grid resolution M must be at least 2, got {m}"));
        }
        if values.len() != m - 1 {
            return domain(format!(
                "spectrum for M = {m} needs {} entries, got {}",
                m - 1,
                values.len()
            ));
        }
        Ok(Self { m, values })
    }

    pub fn resolution(&self) -> usize {
        self.m
    }

    /// Coefficient at frequency `k` (1-based).
    pub fn get(&self, k: usize) -> f64 {
        self.values[k - 1]
    }
}

impl SineCoefficients for DiscreteSpectrum {
    fn coefficients(&self) -> &[f64] {
        &self.values
    }
    fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Applies the heat semigroup `S(h)`: coefficient `l` is multiplied by
/// `exp(-lambda_l h)`.
pub fn semigroup_damp<T: SineCoefficients + Clone>(x: &T, theta: f64, h: f64) -> Result<T> {
    let mut out = x.clone();
    damp_in_place(out.coefficients_mut(), theta, h)?;
    Ok(out)
}

pub fn damp_in_place(coeffs: &mut [f64], theta: f64, h: f64) -> Result<()> {
    eigenvalue(theta, 1)?;
    if !(h >= 0.0) || !h.is_finite() {
        return domain(format!("time step must be nonnegative, got {h}"));
    }
    if h == 0.0 {
        return Ok(());
    }
    let rate = theta * PI * PI * h;
    for (i, c) in coeffs.iter_mut().enumerate() {
        let l = (i + 1) as f64;
        *c *= (-rate * l * l).exp();
    }
    Ok(())
}

/// `sin(pi j / M)` for `j` in `0..2M`, indexed modulo `2M` so that large
/// products `k * l` never lose precision in the argument.
fn sine_table(m: usize) -> Vec<f64> {
    (0..2 * m)
        .map(|j| (PI * j as f64 / m as f64).sin())
        .collect()
}

/// `S(x)_k = sum_{j=1}^{M-1} x_j sin(pi j k / M)`, the unnormalized DST-I.
fn dst1_naive(table: &[f64], m: usize, x: &[f64], out: &mut [f64]) {
    let period = 2 * m;
    for (k, o) in out.iter_mut().enumerate() {
        let k = k + 1;
        let mut acc = 0.0;
        let mut idx = k % period;
        for &xj in x {
            acc += xj * table[idx];
            idx += k;
            if idx >= period {
                idx -= period;
            }
        }
        *o = acc;
    }
}

/// Direct `O(M^2)` evaluation of `<u, e_k>_M`; the reference the fast
/// transform is checked against.
pub fn dst_forward_reference(samples: &[f64]) -> Result<DiscreteSpectrum> {
    let m = samples.len() + 1;
    if m < 2 {
        return domain("need at least one interior sample (M >= 2)");
    }
    let table = sine_table(m);
    let mut out = vec![0.0; m - 1];
    dst1_naive(&table, m, samples, &mut out);
    let scale = SQRT_2 / m as f64;
    out.iter_mut().for_each(|v| *v *= scale);
    DiscreteSpectrum::new(m, out)
}

const NAIVE_LIMIT: usize = 48;

/// Reusable sine transform for a fixed grid resolution `M`.
///
/// Sizes up to 48 use the direct sum, larger sizes an FFT of the odd
/// extension of length `2M`.
pub struct SineTransform {
    m: usize,
    table: Vec<f64>,
    fft: Option<Arc<dyn Fft<f64>>>,
    buffer: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl std::fmt::Debug for SineTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SineTransform").field("m", &self.m).finish()
    }
}

impl SineTransform {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return domain(format!("grid resolution M must be at least 2, got {m}"));
        }
        if m <= NAIVE_LIMIT {
            return Ok(Self {
                m,
                table: sine_table(m),
                fft: None,
                buffer: Vec::new(),
                scratch: Vec::new(),
            });
        }
        let fft = FftPlanner::new().plan_fft_forward(2 * m);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        Ok(Self {
            m,
            table: Vec::new(),
            fft: Some(fft),
            buffer: vec![Complex::default(); 2 * m],
            scratch,
        })
    }

    pub fn resolution(&self) -> usize {
        self.m
    }

    fn dst1(&mut self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.m - 1);
        debug_assert_eq!(out.len(), self.m - 1);
        let Some(fft) = &self.fft else {
            dst1_naive(&self.table, self.m, x, out);
            return;
        };
        let m = self.m;
        let buf = &mut self.buffer;
        buf[0] = Complex::default();
        buf[m] = Complex::default();
        for (j, &v) in x.iter().enumerate() {
            buf[j + 1] = Complex::new(v, 0.0);
            buf[2 * m - j - 1] = Complex::new(-v, 0.0);
        }
        fft.process_with_scratch(buf, &mut self.scratch);
        for (k, o) in out.iter_mut().enumerate() {
            *o = -0.5 * buf[k + 1].im;
        }
    }

    /// `out[k-1] = (1/M) sum_l samples[l-1] e_k(l/M)`.
    pub fn forward_into(&mut self, samples: &[f64], out: &mut [f64]) {
        self.dst1(samples, out);
        let scale = SQRT_2 / self.m as f64;
        out.iter_mut().for_each(|v| *v *= scale);
    }

    /// `out[k-1] = sum_l coeffs[l-1] e_l(k/M)`.
    pub fn synthesize_into(&mut self, coeffs: &[f64], out: &mut [f64]) {
        self.dst1(coeffs, out);
        out.iter_mut().for_each(|v| *v *= SQRT_2);
    }

    pub fn forward(&mut self, samples: &[f64]) -> Result<DiscreteSpectrum> {
        if samples.len() + 1 != self.m {
            return domain(format!(
                "expected {} interior samples, got {}",
                self.m - 1,
                samples.len()
            ));
        }
        let mut out = vec![0.0; self.m - 1];
        self.forward_into(samples, &mut out);
        DiscreteSpectrum::new(self.m, out)
    }

    pub fn synthesize(&mut self, spec: &DiscreteSpectrum) -> Result<Vec<f64>> {
        if spec.resolution() != self.m {
            return domain(format!(
                "spectrum resolution {} does not match transform size {}",
                spec.resolution(),
                self.m
            ));
        }
        let mut out = vec![0.0; self.m - 1];
        self.synthesize_into(&spec.values, &mut out);
        Ok(out)
    }
}

/// Empirical sine coefficients of grid samples `u(k/M)`, `k = 1..M-1`.
pub fn dst_forward(samples: &[f64]) -> Result<DiscreteSpectrum> {
    let mut tr = SineTransform::new(samples.len() + 1)?;
    tr.forward(samples)
}

/// Inverse of [`dst_forward`]: `H(y_k) = sum_{l=1}^{M-1} H_l e_l(y_k)`.
pub fn dst_synthesize(spec: &DiscreteSpectrum) -> Result<Vec<f64>> {
    let mut tr = SineTransform::new(spec.resolution())?;
    tr.synthesize(spec)
}

/// Folds mode `ell` onto the `M`-point grid: returns `(k, sign)` with
/// `e_ell(j/M) = sign * e_k(j/M)`, or `None` when `e_ell` vanishes on the grid.
#[inline]
pub fn alias_index(ell: usize, m: usize) -> Option<(usize, f64)> {
    let r = ell % (2 * m);
    if r == 0 || r == m {
        None
    } else if r < m {
        Some((r, 1.0))
    } else {
        Some((2 * m - r, -1.0))
    }
}

/// Adds `coeffs` (modes `1..=K`) into grid-frequency bins `1..M-1`.
pub fn fold_modes(coeffs: &[f64], m: usize, bins: &mut [f64]) {
    debug_assert_eq!(bins.len(), m - 1);
    bins.iter_mut().for_each(|b| *b = 0.0);
    for (i, &c) in coeffs.iter().enumerate() {
        if let Some((k, s)) = alias_index(i + 1, m) {
            bins[k - 1] += s * c;
        }
    }
}

#[derive(Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }
    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Hard cap on the number of series terms any scalar function will sum.
const MAX_TERMS: usize = 50_000_000;

/// Double-increment normalization
///
/// ```text
/// Phi_theta(delta, Delta) = 2 sum_{l>=1} (1 - exp(-pi^2 theta l^2 Delta)) / (pi^2 theta l^2)
///                                        * (1 - cos(pi l delta))
/// ```
///
/// summed to absolute accuracy `tol`. Two routes are available: the direct
/// series with tail bound `(4 / (pi^2 theta)) / L`, and the split
/// `delta (2 - delta) / (2 theta) - 2 sum exp(-lambda_l Delta)(1 - cos(pi l delta)) / lambda_l`
/// whose series decays like a Gaussian in `l`. The cheaper one is used.
pub fn phi_theta(theta: f64, delta: f64, big_delta: f64, tol: f64) -> Result<f64> {
    eigenvalue(theta, 1)?;
    if !(delta > 0.0 && delta < 1.0) {
        return domain(format!("spatial step must lie in (0, 1), got {delta}"));
    }
    if !(big_delta > 0.0) || !big_delta.is_finite() {
        return domain(format!("time step must be positive, got {big_delta}"));
    }
    if !(tol > 0.0) {
        return domain(format!("tolerance must be positive, got {tol}"));
    }
    let c = theta * PI * PI;
    let direct_terms = 4.0 / (c * tol);
    let split_terms = ((4.0 / (c * tol)).ln().max(1.0) / (c * big_delta)).sqrt() + 2.0;

    if direct_terms <= split_terms {
        let mut acc = Neumaier::default();
        let mut l = 1usize;
        loop {
            let lf = l as f64;
            let lam = c * lf * lf;
            acc.add(2.0 * (-(-lam * big_delta).exp_m1()) / lam * (1.0 - (PI * lf * delta).cos()));
            if 4.0 / (c * lf) < tol || l >= MAX_TERMS {
                break;
            }
            l += 1;
        }
        return Ok(acc.value());
    }

    let mut acc = Neumaier::default();
    let mut l = 1usize;
    loop {
        let lf = l as f64;
        let lam = c * lf * lf;
        acc.add(2.0 * (-lam * big_delta).exp() / lam * (1.0 - (PI * lf * delta).cos()));
        // remainder over l' > l is at most 4/(c l^2) * e^{-c D (l+1)^2} / (1 - e^{-2 c D (l+1)})
        let next = lf + 1.0;
        let q = (-2.0 * c * big_delta * next).exp();
        let bound = 4.0 / (c * lf * lf) * (-c * big_delta * next * next).exp() / (1.0 - q);
        if bound < tol || l >= MAX_TERMS {
            break;
        }
        l += 1;
    }
    Ok(delta * (2.0 - delta) / (2.0 * theta) - acc.value())
}

/// `int_x^inf exp(-z^2) dz = (sqrt(pi) / 2) erfc(x)`.
#[inline]
pub fn gaussian_tail(x: f64) -> f64 {
    0.5 * PI.sqrt() * erfc(x)
}

/// Limit of the balanced double-increment variation per unit `sigma^2`:
///
/// ```text
/// psi_theta(r) = 2 / sqrt(pi theta) * (1 - exp(-r^2 / (4 theta))
///                + (r / sqrt(theta)) int_{r / (2 sqrt(theta))}^inf exp(-z^2) dz)
/// ```
pub fn psi_theta(theta: f64, r: f64) -> Result<f64> {
    eigenvalue(theta, 1)?;
    if !(r >= 0.0) || !r.is_finite() {
        return domain(format!("r must be nonnegative, got {r}"));
    }
    Ok(psi_unchecked(theta, r))
}

#[inline]
fn psi_unchecked(theta: f64, r: f64) -> f64 {
    let st = theta.sqrt();
    let head = -(-r * r / (4.0 * theta)).exp_m1();
    2.0 / (PI * theta).sqrt() * (head + r / st * gaussian_tail(r / (2.0 * st)))
}

/// `theta -> psi_theta(r) / psi_theta(r / sqrt 2)`.
pub fn ratio_map(theta: f64, r: f64) -> Result<f64> {
    eigenvalue(theta, 1)?;
    if !(r > 0.0) || !r.is_finite() {
        return domain(format!("r must be positive, got {r}"));
    }
    Ok(ratio_unchecked(theta, r))
}

#[inline]
fn ratio_unchecked(theta: f64, r: f64) -> f64 {
    psi_unchecked(theta, r) / psi_unchecked(theta, r / SQRT_2)
}

pub const THETA_BRACKET: (f64, f64) = (1e-8, 1e8);
const BISECTION_CAP: usize = 200;

/// `G_r`: the inverse of [`ratio_map`] in `theta`, found by bisection in
/// `log theta` over [`THETA_BRACKET`].
pub fn invert_g(r: f64, ratio: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return domain(format!("r must be positive, got {r}"));
    }
    let (mut lo, mut hi) = THETA_BRACKET;
    let f_lo = ratio_unchecked(lo, r) - ratio;
    let f_hi = ratio_unchecked(hi, r) - ratio;
    if !ratio.is_finite() || f_lo.signum() == f_hi.signum() || f_lo == 0.0 || f_hi == 0.0 {
        let (a, b) = (ratio_unchecked(lo, r), ratio_unchecked(hi, r));
        return Err(Error::NotInvertible {
            ratio,
            lo: a.min(b),
            hi: a.max(b),
        });
    }
    let increasing = f_lo < 0.0;
    let mut mid = (lo * hi).sqrt();
    for _ in 0..BISECTION_CAP {
        mid = (lo * hi).sqrt();
        let f = ratio_unchecked(mid, r) - ratio;
        if f == 0.0 {
            break;
        }
        if (f < 0.0) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 4.0 * f64::EPSILON {
            break;
        }
    }
    Ok(mid)
}

#[inline]
fn b_term(j: usize) -> f64 {
    // 2 sqrt(J) - sqrt(J+1) - sqrt(J-1) without cancellation
    let jf = j as f64;
    let (s0, sp, sm) = (jf.sqrt(), (jf + 1.0).sqrt(), (jf - 1.0).sqrt());
    let d = 2.0 / ((s0 + sm) * (sp + s0) * (sp + sm));
    d * d
}

/// `2 + sum_{J=1}^{j_max} (2 sqrt(J) - sqrt(J+1) - sqrt(J-1))^2`.
pub fn variance_constant_b_partial(j_max: usize) -> f64 {
    let mut acc = Neumaier { sum: 2.0, comp: 0.0 };
    for j in 1..=j_max {
        acc.add(b_term(j));
    }
    acc.value()
}

/// Asymptotic-variance constant of the time-increment variation,
/// `B = 2 + sum_{J>=1} (2 sqrt(J) - sqrt(J+1) - sqrt(J-1))^2`, within `tol`.
///
/// Each term equals `xi^{-3} / 16` for some `xi` in `(J-1, J+1)`, so the tail
/// after `L` terms lies between `1/(32 (L+2)^2)` and `1/(32 (L-1)^2)`; the
/// midpoint is added and `L` grows until half the bracket is below `tol`.
pub fn variance_constant_b(tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return domain(format!("tolerance must be positive, got {tol}"));
    }
    let mut l = 4usize;
    loop {
        let lf = l as f64;
        let lower = 1.0 / (32.0 * (lf + 2.0).powi(2));
        let upper = 1.0 / (32.0 * (lf - 1.0).powi(2));
        if 0.5 * (upper - lower) < tol || l >= MAX_TERMS {
            return Ok(variance_constant_b_partial(l) + 0.5 * (upper + lower));
        }
        l = l.saturating_mul(2);
    }
}

/// Covariance of the linear component started at zero, truncated at `K` modes:
///
/// ```text
/// sigma^2 sum_{l<=K} (exp(-lambda_l |t-s|) - exp(-lambda_l (t+s))) / (2 lambda_l) e_l(x) e_l(y)
/// ```
pub fn exact_covariance(
    theta: f64,
    sigma: f64,
    s: f64,
    t: f64,
    x: f64,
    y: f64,
    cutoff: usize,
) -> f64 {
    covariance_series(theta, sigma, s, t, x, y, cutoff, false)
}

/// Same series for the stationary field (the `exp(-lambda (t+s))` term dropped).
pub fn stationary_covariance(
    theta: f64,
    sigma: f64,
    s: f64,
    t: f64,
    x: f64,
    y: f64,
    cutoff: usize,
) -> f64 {
    covariance_series(theta, sigma, s, t, x, y, cutoff, true)
}

#[allow(clippy::too_many_arguments)]
fn covariance_series(
    theta: f64,
    sigma: f64,
    s: f64,
    t: f64,
    x: f64,
    y: f64,
    cutoff: usize,
    stationary: bool,
) -> f64 {
    let c = theta * PI * PI;
    let lag = (t - s).abs();
    let mut acc = Neumaier::default();
    for l in 1..=cutoff {
        let lam = c * (l as f64).powi(2);
        let time = if stationary {
            (-lam * lag).exp()
        } else {
            (-lam * lag).exp() - (-lam * (t + s)).exp()
        };
        acc.add(time / (2.0 * lam) * sine_mode(l, x) * sine_mode(l, y));
    }
    sigma * sigma * acc.value()
}

/// Trigamma function `psi_1(x) = sum_{n>=0} 1 / (x + n)^2` for `x > 0`.
pub fn trigamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut x = x;
    let mut acc = 0.0;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // asymptotic series with Bernoulli numbers
    let series = inv
        + 0.5 * inv2
        + inv * inv2
            * (1.0 / 6.0
                - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0)))));
    acc + series
}
