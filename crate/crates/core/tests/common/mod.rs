//! Reference implementations shared by the integration tests. They are kept
//! deliberately naive so they stay independent of the library code paths.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Adaptive Simpson quadrature on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    rec(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 48)
}

/// `psi_theta(r)` with the Gaussian tail integral done by quadrature.
pub fn psi_by_quadrature(theta: f64, r: f64) -> f64 {
    let x0 = r / (2.0 * theta.sqrt());
    let tail = adaptive_simpson(&|z: f64| (-z * z).exp(), x0, x0 + 12.0, 1e-15);
    2.0 / (PI * theta).sqrt() * (1.0 - (-r * r / (4.0 * theta)).exp() + r / theta.sqrt() * tail)
}

/// `2 sum_{l <= terms} (1 - e^{-lambda_l Delta}) / lambda_l (1 - cos(pi l delta))`
/// plus the mean of the remainder, `(2 / (pi^2 theta)) / terms`.
pub fn phi_direct(theta: f64, delta: f64, big_delta: f64, terms: usize) -> f64 {
    let c = theta * PI * PI;
    let mut s = 0.0;
    for l in (1..=terms).rev() {
        let lf = l as f64;
        let lam = c * lf * lf;
        s += 2.0 * (1.0 - (-lam * big_delta).exp()) / lam * (1.0 - (PI * lf * delta).cos());
    }
    s + 2.0 / (c * terms as f64)
}

/// `2 + sum_{J <= terms} (2 sqrt J - sqrt(J+1) - sqrt(J-1))^2` in the
/// plain (cancelling) form, summed smallest first, plus the `1 / (32 J^2)` tail.
pub fn b_direct(terms: usize) -> f64 {
    let mut s = 0.0;
    for j in (1..=terms).rev() {
        let jf = j as f64;
        let d = 2.0 * jf.sqrt() - (jf + 1.0).sqrt() - (jf - 1.0).sqrt();
        s += d * d;
    }
    2.0 + s + 1.0 / (32.0 * terms as f64 * terms as f64)
}

/// Stationary covariance of the linear field by a direct mode sum.
pub fn covariance_direct(theta: f64, sigma: f64, lag: f64, x: f64, y: f64, terms: usize) -> f64 {
    let c = theta * PI * PI;
    let mut s = 0.0;
    for l in (1..=terms).rev() {
        let lf = l as f64;
        let lam = c * lf * lf;
        s += (-lam * lag).exp() / (2.0 * lam) * 2.0 * (PI * lf * x).sin() * (PI * lf * y).sin();
    }
    sigma * sigma * s
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_err(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}
