//! Least-squares estimation of the reaction function `f`.
//!
//! The regression uses semigroup-corrected increments
//!
//! ```text
//! Y_ik = (X_{t_{i+1}}(y_k) - (S(Delta) X_{t_i})(y_k)) / Delta,   z_ik = X_{t_i}(y_k)
//! ```
//!
//! where `S(Delta)` damps each empirical sine coefficient of row `i` by
//! `exp(-lambda_l Delta)`. Given `z`, the response is `f(z)` plus noise, which
//! is what makes an ordinary least-squares fit over `V_m` meaningful.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, BasisSpec};
use crate::error::{Error, Result};
use crate::grid::{GridShape, ObservationGrid};
use crate::simulator::Polynomial;
use crate::spectral::{damp_in_place, SineTransform};
use crate::variation::{rqv_time, sigma2_from_time};

/// Relative eigenvalue threshold of the pseudo-inverse.
pub const PINV_THRESHOLD: f64 = 1e-10;

/// Covariates and responses of the regression, `N x (M-1)` each.
#[derive(Debug, Clone)]
pub struct RegressionData {
    pub design: Array2<f64>,
    pub responses: Array2<f64>,
    /// Diffusivity of the semigroup correction; `None` for raw increments.
    pub theta_used: Option<f64>,
    pub shape: GridShape,
}

impl RegressionData {
    /// `N M`, the normalization of the empirical criterion.
    pub fn normalizer(&self) -> f64 {
        (self.shape.n * self.shape.m) as f64
    }

    pub fn horizon(&self) -> f64 {
        self.shape.t
    }

    fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.design.iter().copied().zip(self.responses.iter().copied())
    }

    /// Same design, responses replaced by `g(z)`.
    pub fn with_responses(&self, g: impl Fn(f64) -> f64) -> RegressionData {
        RegressionData {
            responses: self.design.mapv(g),
            ..self.clone()
        }
    }
}

fn check_regression_grid(obs: &ObservationGrid) -> Result<()> {
    if obs.shape.b != 0.0 {
        return Err(Error::Contract(format!(
            "regression needs a b = 0 grid, got b = {}",
            obs.shape.b
        )));
    }
    if obs.shape.m < 2 {
        return Err(Error::Domain("regression needs M >= 2".into()));
    }
    Ok(())
}

/// Semigroup-corrected responses at diffusivity `theta`.
pub fn build_responses(obs: &ObservationGrid, theta: f64) -> Result<RegressionData> {
    check_regression_grid(obs)?;
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("theta must be positive, got {theta}")));
    }
    let (n, m) = (obs.shape.n, obs.shape.m);
    let dt = obs.shape.big_delta();
    let mut tr = SineTransform::new(m)?;
    let mut design = Array2::zeros((n, m - 1));
    let mut responses = Array2::zeros((n, m - 1));
    let mut coeffs = vec![0.0; m - 1];
    let mut smoothed = vec![0.0; m - 1];
    for i in 0..n {
        let row = obs.values.row(i);
        let interior: Vec<f64> = row.iter().skip(1).take(m - 1).copied().collect();
        tr.forward_into(&interior, &mut coeffs);
        damp_in_place(&mut coeffs, theta, dt)?;
        tr.synthesize_into(&coeffs, &mut smoothed);
        let next = obs.values.row(i + 1);
        for k in 0..m - 1 {
            design[[i, k]] = interior[k];
            responses[[i, k]] = (next[k + 1] - smoothed[k]) / dt;
        }
    }
    Ok(RegressionData {
        design,
        responses,
        theta_used: Some(theta),
        shape: obs.shape,
    })
}

/// Uncorrected responses `(X_{t_{i+1}}(y_k) - X_{t_i}(y_k)) / Delta`.
pub fn naive_responses(obs: &ObservationGrid) -> Result<RegressionData> {
    check_regression_grid(obs)?;
    let (n, m) = (obs.shape.n, obs.shape.m);
    let dt = obs.shape.big_delta();
    let design = Array2::from_shape_fn((n, m - 1), |(i, k)| obs.values[[i, k + 1]]);
    let responses =
        Array2::from_shape_fn((n, m - 1), |(i, k)| (obs.values[[i + 1, k + 1]] - obs.values[[i, k + 1]]) / dt);
    Ok(RegressionData {
        design,
        responses,
        theta_used: None,
        shape: obs.shape,
    })
}

/// A fitted reaction function `sum_k c_k phi_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionFit {
    pub basis: BasisSpec,
    pub coefficients: Vec<f64>,
    /// Attained empirical criterion.
    pub gamma: f64,
    /// Index of the selected space when produced by model selection.
    pub m_hat: Option<usize>,
    pub theta_used: Option<f64>,
    /// Clamp applied by [`ReactionFit::eval_truncated`].
    pub truncation: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ReactionFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.basis.combine(&self.coefficients, x)
    }

    /// `(-bound) v (f_hat(x) ^ bound)` when a truncation is set.
    pub fn eval_truncated(&self, x: f64) -> f64 {
        let v = self.eval(x);
        match self.truncation {
            Some(b) => v.clamp(-b, b),
            None => v,
        }
    }

    /// `(x, f_hat(x))` on `points` equispaced points covering `A`.
    pub fn curve(&self, points: usize) -> Vec<(f64, f64)> {
        let a = self.basis.a;
        (0..points)
            .map(|i| {
                let x = if points == 1 {
                    0.0
                } else {
                    -a + 2.0 * a * i as f64 / (points - 1) as f64
                };
                (x, self.eval_truncated(x))
            })
            .collect()
    }

    pub fn write_curve<W: std::io::Write>(&self, mut w: W, points: usize) -> Result<()> {
        writeln!(w, "x,f_hat")?;
        for (x, y) in self.curve(points) {
            writeln!(w, "{:.16e},{:.16e}", x, y)?;
        }
        Ok(())
    }
}

/// Normal equations `G c = h` of one space, plus `sum Y^2`.
struct NormalEquations {
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    sum_sq: f64,
    inside: usize,
}

fn normal_equations(data: &RegressionData, basis: &BasisSpec) -> NormalEquations {
    let d = basis.dimension();
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    let mut phi = vec![0.0; d];
    let mut sum_sq = 0.0;
    let mut inside = 0;
    for (z, y) in data.points() {
        sum_sq += y * y;
        let sup = basis.support(z);
        if sup.is_empty() {
            continue;
        }
        inside += 1;
        basis.eval_into(z, &mut phi);
        for k in sup.clone() {
            let pk = phi[k];
            rhs[k] += pk * y;
            for l in sup.start..=k {
                gram[(k, l)] += pk * phi[l];
            }
        }
    }
    for k in 0..d {
        for l in 0..k {
            gram[(l, k)] = gram[(k, l)];
        }
    }
    NormalEquations {
        gram,
        rhs,
        sum_sq,
        inside,
    }
}

/// Minimum-norm solution through the eigen-decomposition of `G`.
fn pseudo_solve(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let eig = SymmetricEigen::new(gram.clone());
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let mut out = DVector::<f64>::zeros(rhs.len());
    if top == 0.0 {
        return out;
    }
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > PINV_THRESHOLD * top {
            let u = eig.eigenvectors.column(i);
            out += u * (u.dot(rhs) / lam);
        }
    }
    out
}

fn fit_from_equations(data: &RegressionData, basis: &BasisSpec, eq: &NormalEquations) -> Result<ReactionFit> {
    let d = basis.dimension();
    if eq.inside == 0 {
        return Err(Error::EmptyDesign);
    }
    let mut warnings = Vec::new();
    if eq.inside < d {
        warnings.push(format!(
            "only {} design points inside A for {d} basis functions; minimum-norm fit",
            eq.inside
        ));
    }
    let c = pseudo_solve(&eq.gram, &eq.rhs);
    let quad = eq.sum_sq - 2.0 * c.dot(&eq.rhs) + c.dot(&(&eq.gram * &c));
    Ok(ReactionFit {
        basis: *basis,
        coefficients: c.iter().copied().collect(),
        gamma: quad.max(0.0) / data.normalizer(),
        m_hat: None,
        theta_used: data.theta_used,
        truncation: None,
        warnings,
    })
}

/// Least-squares fit over `V_m`: minimizes
/// `Gamma(g) = (NM)^-1 sum_{i,k} (Y_ik - g(z_ik))^2`.
pub fn fit_fm(data: &RegressionData, basis: &BasisSpec) -> Result<ReactionFit> {
    fit_from_equations(data, basis, &normal_equations(data, basis))
}

/// Fits every space in `specs`. Trigonometric chains share one Gram matrix
/// since their bases are prefixes of each other.
pub fn fit_all(data: &RegressionData, specs: &[BasisSpec]) -> Result<Vec<ReactionFit>> {
    let prefix_chain = specs.iter().all(|s| s.family == BasisFamily::Trig && s.a == specs[0].a);
    if !prefix_chain || specs.len() < 2 {
        return specs.iter().map(|s| fit_fm(data, s)).collect();
    }
    let largest = specs.iter().max_by_key(|s| s.dimension()).expect("nonempty");
    let full = normal_equations(data, largest);
    specs
        .iter()
        .map(|s| {
            let d = s.dimension();
            let eq = NormalEquations {
                gram: full.gram.view((0, 0), (d, d)).into_owned(),
                rhs: full.rhs.rows(0, d).into_owned(),
                sum_sq: full.sum_sq,
                inside: full.inside,
            };
            fit_from_equations(data, s, &eq)
        })
        .collect()
}

/// Empirical criterion of an arbitrary function, out-of-`A` points included.
pub fn gamma_value(g: impl Fn(f64) -> f64, data: &RegressionData) -> f64 {
    data.points().map(|(z, y)| (y - g(z)).powi(2)).sum::<f64>() / data.normalizer()
}

/// `pen(m) = kappa sigma^2 D_m / T`.
pub fn penalty(kappa: f64, sigma2: f64, dimension: usize, horizon: f64) -> f64 {
    kappa * sigma2 * dimension as f64 / horizon
}

/// Score of one candidate in model selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub m: usize,
    pub dimension: usize,
    pub gamma: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub fit: ReactionFit,
    pub fits: Vec<ReactionFit>,
    pub scores: Vec<CandidateScore>,
}

/// Penalized model selection `argmin_m Gamma(f_hat_m) + pen(m)`; ties go to
/// the smaller dimension.
pub fn select_model_detailed(
    data: &RegressionData,
    candidates: &[BasisSpec],
    kappa: f64,
    sigma2: f64,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::Domain("empty model range".into()));
    }
    if !(kappa > 0.0) || !(sigma2 > 0.0) {
        return Err(Error::Domain("kappa and the sigma^2 bound must be positive".into()));
    }
    let mut specs = candidates.to_vec();
    specs.sort_by_key(|s| s.dimension());
    let fits = fit_all(data, &specs)?;
    let scores: Vec<CandidateScore> = fits
        .iter()
        .map(|f| CandidateScore {
            m: f.basis.m,
            dimension: f.basis.dimension(),
            gamma: f.gamma,
            penalty: penalty(kappa, sigma2, f.basis.dimension(), data.horizon()),
        })
        .collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.gamma + s.penalty < scores[best].gamma + scores[best].penalty {
            best = i;
        }
    }
    let mut fit = fits[best].clone();
    fit.m_hat = Some(fit.basis.m);
    Ok(Selection { fit, fits, scores })
}

pub fn select_model(data: &RegressionData, candidates: &[BasisSpec], kappa: f64, sigma2: f64) -> Result<ReactionFit> {
    Ok(select_model_detailed(data, candidates, kappa, sigma2)?.fit)
}

/// Plug-in `sigma^2 = V_t sqrt(pi theta)` for the penalty.
pub fn default_sigma2(obs: &ObservationGrid, theta: f64) -> Result<f64> {
    Ok(sigma2_from_time(rqv_time(obs)?.value, theta))
}

/// Attaches the clamp `|f| <= bound` (default `N`).
pub fn truncate(fit: &ReactionFit, bound: f64) -> Result<ReactionFit> {
    if !(bound > 0.0) {
        return Err(Error::Domain(format!("truncation bound must be positive, got {bound}")));
    }
    Ok(ReactionFit {
        truncation: Some(bound),
        ..fit.clone()
    })
}

/// Fit with an estimated diffusivity in the semigroup correction.
pub fn plugin_fit(obs: &ObservationGrid, theta_hat: f64, basis: &BasisSpec) -> Result<ReactionFit> {
    if !(theta_hat > 0.0) {
        return Err(Error::Domain(format!("theta_hat must be positive, got {theta_hat}")));
    }
    fit_fm(&build_responses(obs, theta_hat)?, basis)
}

/// Plug-in variant of [`select_model`].
pub fn plugin_select(
    obs: &ObservationGrid,
    theta_hat: f64,
    candidates: &[BasisSpec],
    kappa: f64,
    sigma2: f64,
) -> Result<ReactionFit> {
    if !(theta_hat > 0.0) {
        return Err(Error::Domain(format!("theta_hat must be positive, got {theta_hat}")));
    }
    select_model(&build_responses(obs, theta_hat)?, candidates, kappa, sigma2)
}

/// `||g - f 1_A||_{L^2[lo, hi]}` by composite midpoint quadrature with
/// `resolution` cells (at least 1024).
pub fn l2_distance(g: impl Fn(f64) -> f64, f_true: &Polynomial, a: f64, lo: f64, hi: f64, resolution: usize) -> f64 {
    let n = resolution.max(1 << 10);
    let h = (hi - lo) / n as f64;
    let s: f64 = (0..n)
        .map(|i| {
            let x = lo + (i as f64 + 0.5) * h;
            let f = if x.abs() <= a { f_true.eval(x) } else { 0.0 };
            (g(x) - f).powi(2)
        })
        .sum();
    (s * h).sqrt()
}

/// `L^2(A)` error of the (truncated) fit.
pub fn l2_error(fit: &ReactionFit, f_true: &Polynomial, resolution: usize) -> f64 {
    let a = fit.basis.a;
    l2_distance(|x| fit.eval_truncated(x), f_true, a, -a, a, resolution)
}

/// `L^2[lo, hi]` error of the (truncated) fit.
pub fn l2_error_on(fit: &ReactionFit, f_true: &Polynomial, lo: f64, hi: f64, resolution: usize) -> f64 {
    l2_distance(|x| fit.eval_truncated(x), f_true, fit.basis.a, lo, hi, resolution)
}

/// Empirical-norm error `||f_hat - f 1_A||_{N,M}` over the design.
pub fn empirical_error(fit: &ReactionFit, f_true: &Polynomial, data: &RegressionData) -> f64 {
    let a = fit.basis.a;
    let s: f64 = data
        .design
        .iter()
        .map(|&z| {
            let f = if z.abs() <= a { f_true.eval(z) } else { 0.0 };
            (fit.eval_truncated(z) - f).powi(2)
        })
        .sum();
    (s / data.normalizer()).sqrt()
}

/// Ordinary least-squares line `Y = alpha + beta z` through all points.
pub fn ols_line(data: &RegressionData) -> (f64, f64) {
    let n = data.design.len() as f64;
    let (mut sz, mut sy, mut szz, mut szy) = (0.0, 0.0, 0.0, 0.0);
    for (z, y) in data.points() {
        sz += z;
        sy += y;
        szz += z * z;
        szy += z * y;
    }
    let (mz, my) = (sz / n, sy / n);
    let beta = (szy / n - mz * my) / (szz / n - mz * mz);
    (my - beta * mz, beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data_from(design: Array2<f64>, f: impl Fn(f64) -> f64) -> RegressionData {
        let (n, m1) = design.dim();
        RegressionData {
            responses: design.mapv(f),
            design,
            theta_used: Some(1.0),
            shape: GridShape::new(m1 + 1, n, n as f64 * 0.1, 0.0).unwrap(),
        }
    }

    fn spread_design() -> Array2<f64> {
        Array2::from_shape_fn((40, 15), |(i, k)| ((i * 15 + k) as f64 * 0.618).fract() * 2.4 - 1.2)
    }

    #[test]
    fn single_mode_response() {
        let theta = 0.3;
        let m = 8;
        let shape = GridShape::new(m, 3, 3.0, 0.0).unwrap();
        let values = Array2::from_shape_fn((4, m + 1), |(_, k)| {
            crate::spectral::sine_mode(1, k as f64 / m as f64)
        });
        let mut values = values;
        values.column_mut(0).fill(0.0);
        values.column_mut(m).fill(0.0);
        let obs = ObservationGrid::new(shape, values).unwrap();
        let data = build_responses(&obs, theta).unwrap();
        let lam = theta * std::f64::consts::PI.powi(2);
        for k in 1..m {
            let e = crate::spectral::sine_mode(1, k as f64 / m as f64);
            assert!((data.responses[[1, k - 1]] - (1.0 - (-lam).exp()) * e).abs() < 1e-12);
        }
        let mut off = obs.clone();
        off.shape.b = 0.1;
        assert!(matches!(build_responses(&off, theta), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_responses_give_zero_fit() {
        let data = data_from(spread_design(), |_| 0.0);
        let fit = fit_fm(&data, &BasisSpec::trig(3, 1.0).unwrap()).unwrap();
        assert!(fit.coefficients.iter().all(|&c| c == 0.0));
        assert_eq!(fit.gamma, 0.0);
    }

    #[test]
    fn recovers_member_of_space() {
        let basis = BasisSpec::trig(3, 1.0).unwrap();
        let data = data_from(spread_design(), |z| basis.eval(z)[2]);
        let fit = fit_fm(&data, &basis).unwrap();
        for (i, c) in fit.coefficients.iter().enumerate() {
            let target = if i == 2 { 1.0 } else { 0.0 };
            assert!((c - target).abs() < 1e-10, "{i}: {c}");
        }
    }

    #[test]
    fn empty_design() {
        let design = Array2::from_elem((3, 3), 5.0);
        let data = data_from(design, |z| z);
        assert!(matches!(fit_fm(&data, &BasisSpec::trig(1, 1.0).unwrap()), Err(Error::EmptyDesign)));
    }

    #[test]
    fn underdetermined_warns() {
        let design = Array2::from_shape_fn((1, 3), |(_, k)| k as f64 * 0.2);
        let data = data_from(design, |z| z);
        let fit = fit_fm(&data, &BasisSpec::trig(4, 1.0).unwrap()).unwrap();
        assert_eq!(fit.warnings.len(), 1);
        assert!(fit.gamma < 1e-12);
    }

    #[test]
    fn shared_gram_matches_individual_fits() {
        let data = data_from(spread_design(), |z| z.powi(3) - 0.4 * z);
        let specs: Vec<BasisSpec> = (1..6).map(|m| BasisSpec::trig(m, 1.0).unwrap()).collect();
        let shared = fit_all(&data, &specs).unwrap();
        for (s, f) in specs.iter().zip(&shared) {
            let own = fit_fm(&data, s).unwrap();
            for (a, b) in own.coefficients.iter().zip(&f.coefficients) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn selection_with_single_candidate_and_ties() {
        let data = data_from(spread_design(), |z| 0.3 + 0.0 * z);
        let only = [BasisSpec::trig(2, 1.0).unwrap()];
        assert_eq!(select_model(&data, &only, 2.0, 1.0).unwrap().basis.m, 2);
        assert!(select_model(&data, &[], 2.0, 1.0).is_err());
    }

    #[test]
    fn truncation_and_l2() {
        let basis = BasisSpec::trig(0, 1.0).unwrap();
        let fit = ReactionFit {
            basis,
            coefficients: vec![2.0 * 3.0 * 2f64.sqrt()],
            gamma: 0.0,
            m_hat: None,
            theta_used: None,
            truncation: None,
            warnings: vec![],
        };
        assert!((fit.eval(0.1) - 6.0).abs() < 1e-12);
        let t = truncate(&fit, 3.0).unwrap();
        assert_eq!(t.eval_truncated(0.4), 3.0);
        let zero = ReactionFit {
            coefficients: vec![0.0],
            ..fit
        };
        let e = l2_error(&zero, &Polynomial::new(vec![0.0, 1.0]), 1 << 12);
        assert!((e * e - 2.0 / 3.0).abs() < 1e-6);
        assert_eq!(zero.curve(512).len(), 512);
    }
}
