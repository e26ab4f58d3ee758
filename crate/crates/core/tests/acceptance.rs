//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run everything with `cargo test --test acceptance`, or a subset with
//! `cargo test --test acceptance -- 3 7`. The process exits non-zero when
//! any selected criterion fails.

mod common;

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use common::{adaptive_simpson, b_direct, covariance_direct, mean, phi_direct, std_err, variance};
use spde_calib::basis::BasisSpec;
use spde_calib::nonparametric::{
    build_responses, empirical_error, fit_fm, l2_error, l2_error_on, naive_responses, ols_line, plugin_fit,
    select_model_detailed, RegressionData,
};
use spde_calib::rng::split_seed;
use spde_calib::simulator::simulate;
use spde_calib::spectral::{
    alias_index, phi_theta, psi_theta, sine_mode, variance_constant_b, variance_constant_b_partial, DiscreteSpectrum,
    SineTransform,
};
use spde_calib::variation::{
    joint_estimate, rqv_double, rqv_double_balanced, rqv_space, rqv_time, CompactSet,
};
use spde_calib::{GridShape, InitialCondition, ModelSpec, ObservationGrid, Polynomial, SimConfig};

struct Outcome {
    pass: bool,
    details: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            pass: true,
            details: Vec::new(),
        }
    }

    /// Records one sub-check.
    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.details.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, line: String) {
        self.details.push(format!("     {line}"));
    }
}

/// Runs `f` on `reps` independent simulations; replicate `r` uses the seed
/// `split_seed(master, r)`.
fn replicate<T: Send>(
    reps: usize,
    master: u64,
    model: &ModelSpec,
    shape: &GridShape,
    cfg: &SimConfig,
    f: impl Fn(&ObservationGrid) -> T + Sync,
) -> Vec<T> {
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let c = cfg.clone().with_seed(split_seed(master, r as u64));
            let sim = simulate(model, shape, &c).expect("simulation");
            f(&sim.grid)
        })
        .collect()
}

/// `|mean - target| < 3 SE`.
fn mean_check(out: &mut Outcome, label: &str, xs: &[f64], target: f64) {
    let (m, se) = (mean(xs), std_err(xs));
    let z = (m - target) / se;
    out.check(
        z.abs() < 3.0,
        format!("{label}: mean {m:.6} target {target:.6} SE {se:.2e} z {z:+.2}"),
    );
}

/// `M N Var` within `rel` of `target`.
fn variance_check(out: &mut Outcome, label: &str, xs: &[f64], mn: f64, target: f64, rel: f64) {
    let v = mn * variance(xs);
    let dev = v / target - 1.0;
    out.check(
        dev.abs() <= rel,
        format!("{label}: MN Var {v:.4} target {target:.4} rel dev {dev:+.3} (limit {rel})"),
    );
}

// ---------------------------------------------------------------------------

fn c1_transforms() -> Outcome {
    let mut out = Outcome::new();
    let start = Instant::now();
    let sizes = [
        4, 5, 6, 7, 8, 9, 10, 16, 17, 31, 32, 33, 47, 48, 49, 63, 64, 65, 100, 127, 128, 129, 200, 255, 256, 257,
        384, 500, 511, 512,
    ];
    let (mut orth, mut values, mut alias, mut parseval) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut state = 0x9e3779b97f4a7c15u64;
    for &m in &sizes {
        let mut tr = SineTransform::new(m).unwrap();
        // columns: e_k on the interior grid, produced by synthesizing unit spectra
        let mut basis = DMatrix::<f64>::zeros(m - 1, m - 1);
        for k in 1..m {
            let mut unit = vec![0.0; m - 1];
            unit[k - 1] = 1.0;
            let col = tr.synthesize(&DiscreteSpectrum::new(m, unit).unwrap()).unwrap();
            for (j, v) in col.iter().enumerate() {
                basis[(j, k - 1)] = *v;
                let exact = 2f64.sqrt() * (PI * (((j + 1) * k) % (2 * m)) as f64 / m as f64).sin();
                values = values.max((v - exact).abs());
            }
        }
        let gram = basis.transpose() * &basis / m as f64;
        orth = orth.max((gram - DMatrix::<f64>::identity(m - 1, m - 1)).amax());

        // a sampled e_l transforms to +-1 in its alias bin and 0 elsewhere
        for ell in 1..=3 * m {
            let samples: Vec<f64> = (1..m)
                .map(|j| 2f64.sqrt() * (PI * ((ell * j) % (2 * m)) as f64 / m as f64).sin())
                .collect();
            let spec = tr.forward(&samples).unwrap();
            for k in 1..m {
                let expected = match alias_index(ell, m) {
                    Some((bin, s)) if bin == k => s,
                    _ => 0.0,
                };
                alias = alias.max((spec.get(k) - expected).abs());
            }
        }

        let samples: Vec<f64> = (1..m)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        let spec = tr.forward(&samples).unwrap();
        let lhs: f64 = samples.iter().map(|v| v * v).sum::<f64>() / m as f64;
        let rhs: f64 = spec.values.iter().map(|v| v * v).sum();
        parseval = parseval.max((lhs - rhs).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    out.check(values < 1e-12, format!("synthesized e_k vs sin: max err {values:.2e}"));
    out.check(orth < 1e-12, format!("discrete orthonormality: max err {orth:.2e}"));
    out.check(alias < 1e-12, format!("aliasing bins and signs (l <= 3M): max err {alias:.2e}"));
    out.check(parseval < 1e-12, format!("discrete Parseval: max err {parseval:.2e}"));
    out.check(elapsed < 1.0, format!("runtime {elapsed:.2}s (limit 1s) over M in {}..={}", sizes[0], 512));
    out
}

fn c2_scalar_oracles() -> Outcome {
    let mut out = Outcome::new();
    let start = Instant::now();
    let mut state = 0x2545f4914f6cdd1du64;
    let mut uniform = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let triples: Vec<(f64, f64, f64)> = (0..20)
        .map(|_| {
            let theta = 10f64.powf(-1.0 + 1.3 * uniform());
            let delta = 0.01 + 0.49 * uniform();
            let dt = 10f64.powf(-4.0 + 3.0 * uniform());
            (theta, delta, dt)
        })
        .collect();
    let phi_err = triples
        .par_iter()
        .map(|&(theta, delta, dt)| {
            let fast = phi_theta(theta, delta, dt, 1e-13).unwrap();
            (fast - phi_direct(theta, delta, dt, 10_000_000)).abs()
        })
        .reduce(|| 0.0, f64::max);
    out.check(phi_err < 1e-10, format!("phi vs 1e7-term sum on 20 triples: max err {phi_err:.2e}"));

    let mut psi_err = 0.0f64;
    for _ in 0..20 {
        let theta = 10f64.powf(-2.0 + 3.0 * uniform());
        let r = 5.0 * uniform();
        let quad = common::psi_by_quadrature(theta, r);
        psi_err = psi_err.max((psi_theta(theta, r).unwrap() - quad).abs());
    }
    out.check(psi_err < 1e-10, format!("psi vs adaptive quadrature on 20 points: max err {psi_err:.2e}"));
    // the quadrature oracle itself on a known integral
    let check = adaptive_simpson(&|z: f64| (-z * z).exp(), 0.0, 12.0, 1e-15) - PI.sqrt() / 2.0;
    out.note(format!("quadrature self-check |int_0^inf e^-z^2 - sqrt(pi)/2| = {:.1e}", check.abs()));

    let b = variance_constant_b(1e-10).unwrap();
    let b_ref = b_direct(1_000_000);
    out.check((b - b_ref).abs() < 1e-9, format!("B = {b:.10} vs 1e6-term sum {b_ref:.10}"));
    let b1 = variance_constant_b_partial(1);
    out.check((b1 - 2.3431457505).abs() < 1e-9, format!("J = 1 partial sum {b1:.10} vs 2.3431457505"));
    let elapsed = start.elapsed().as_secs_f64();
    out.check(elapsed < 30.0, format!("runtime {elapsed:.1}s (limit 30s)"));
    out
}

fn c3_covariance() -> Outcome {
    let mut out = Outcome::new();
    let (theta, sigma) = (0.1, 1.0);
    let shape = GridShape::new(64, 64, 0.64, 0.0).unwrap();
    let model = ModelSpec::linear(theta, sigma);
    let cfg = SimConfig::default().with_cutoff(512);
    // (i, j, k, l): Cov(X(t_i, y_k), X(t_j, y_l))
    let tuples = [
        (0, 0, 32, 32),
        (10, 10, 16, 48),
        (5, 6, 32, 32),
        (20, 22, 10, 12),
        (30, 30, 1, 63),
        (40, 41, 20, 25),
        (0, 64, 32, 32),
        (50, 53, 30, 34),
        (12, 12, 5, 6),
        (60, 62, 40, 40),
    ];
    let products: Vec<Vec<f64>> = replicate(2000, 3, &model, &shape, &cfg, |g| {
        tuples.iter().map(|&(i, j, k, l)| g.at(i, k) * g.at(j, l)).collect()
    });
    for (t, &(i, j, k, l)) in tuples.iter().enumerate() {
        let xs: Vec<f64> = products.iter().map(|p| p[t]).collect();
        let (s, tt) = (shape.time(i), shape.time(j));
        let target = covariance_direct(theta, sigma, (tt - s).abs(), shape.y(k), shape.y(l), 200_000);
        mean_check(&mut out, &format!("Cov(t={s:.2},{tt:.2}; y={:.3},{:.3})", shape.y(k), shape.y(l)), &xs, target);
    }
    out
}

fn time_variation(out: &mut Outcome, label: &str, model: &ModelSpec, cfg: &SimConfig, reps: usize, seed: u64) {
    let shape = GridShape::new(20, 400, 1.0, 0.1).unwrap();
    let xs = replicate(reps, seed, model, &shape, cfg, |g| rqv_time(g).unwrap().value);
    let limit = model.sigma.powi(2) / (PI * model.theta).sqrt();
    let b = variance_constant_b(1e-12).unwrap();
    mean_check(out, &format!("{label} V_t"), &xs, limit);
    variance_check(out, &format!("{label} V_t"), &xs, 8000.0, b * limit * limit, 0.15);
}

/// Expectation of `V_sp` for the stationary linear field on `shape`, by a
/// direct mode sum; shows how far the finite grid sits from the limit.
fn exact_space_mean(theta: f64, sigma: f64, shape: &GridShape) -> f64 {
    let (m, d) = (shape.m, shape.delta());
    let terms = 100_000;
    let c = theta * PI * PI;
    let total: f64 = (1..=terms)
        .into_par_iter()
        .map(|l| {
            let lam = c * (l as f64).powi(2);
            let s: f64 = (0..m)
                .map(|k| (sine_mode(l, shape.y(k + 1)) - sine_mode(l, shape.y(k))).powi(2))
                .sum();
            s / (2.0 * lam)
        })
        .sum();
    // remaining modes: squared increments average 2 (e_l^2 has mean 1)
    let tail = m as f64 * 2.0 / (2.0 * c * terms as f64);
    sigma * sigma * (total + tail) / (m as f64 * d)
}

fn space_variation(out: &mut Outcome, label: &str, model: &ModelSpec, cfg: &SimConfig, reps: usize, seed: u64) {
    let shape = GridShape::new(400, 20, 1.0, 0.1).unwrap();
    let xs = replicate(reps, seed, model, &shape, cfg, |g| rqv_space(g).unwrap().value);
    let limit = model.sigma.powi(2) / (2.0 * model.theta);
    mean_check(out, &format!("{label} V_sp"), &xs, limit);
    variance_check(out, &format!("{label} V_sp"), &xs, 8000.0, 2.0 * limit * limit, 0.15);
    let exact = exact_space_mean(model.theta, model.sigma, &shape);
    out.note(format!(
        "linear stationary E[V_sp] on this grid = {exact:.6} ({:+.2e} from the limit)",
        exact - limit
    ));
}

fn double_variation(out: &mut Outcome, label: &str, model: &ModelSpec, cfg: &SimConfig, reps: usize, seed: u64) {
    let (m, b, t) = (20, 0.1, 0.64);
    let s2 = model.sigma.powi(2);
    for (idx, &r) in [0.5f64, 1.0, 2.0].iter().enumerate() {
        let delta = (1.0 - 2.0 * b) / m as f64;
        let n = (t / (delta / r).powi(2)).round() as usize;
        let shape = GridShape::new(m, n, t, b).unwrap();
        let pairs = replicate(reps, seed + idx as u64, model, &shape, cfg, |g| {
            (
                rqv_double(g, model.theta).unwrap().value,
                rqv_double_balanced(g, r).unwrap().value,
            )
        });
        let v: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let vr: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        mean_check(out, &format!("{label} V (r={r}, N={n})"), &v, s2);
        let psi = psi_theta(model.theta, r).unwrap();
        mean_check(out, &format!("{label} V_r (r={r}, N={n})"), &vr, s2 * psi);
    }
}

fn c4_time() -> Outcome {
    let mut out = Outcome::new();
    let model = ModelSpec::linear(1.0, 1.0);
    time_variation(&mut out, "linear", &model, &SimConfig::default(), 1000, 4);
    out
}

fn c5_space() -> Outcome {
    let mut out = Outcome::new();
    let model = ModelSpec::linear(1.0, 1.0);
    space_variation(&mut out, "linear", &model, &SimConfig::default(), 1000, 5);
    out
}

fn c6_double() -> Outcome {
    let mut out = Outcome::new();
    let model = ModelSpec::linear(0.1, 1.0);
    double_variation(&mut out, "linear", &model, &SimConfig::default(), 500, 60);
    out
}

fn c7_rate() -> Outcome {
    let mut out = Outcome::new();
    let (theta, sigma) = (0.25, 1.0);
    let model = ModelSpec::linear(theta, sigma);
    let cfg = SimConfig::default().with_cutoff(256);
    let h = CompactSet::default();
    let dt = 0.0016;
    let mut rmse = Vec::new();
    for (idx, &t) in [1.0f64, 2.0, 4.0].iter().enumerate() {
        let n = (t / dt).round() as usize;
        let shape = GridShape::new(20, n, t, 0.1).unwrap();
        let est = replicate(200, 70 + idx as u64, &model, &shape, &cfg, |g| {
            let e = joint_estimate(g, &h).unwrap();
            (e.sigma2_hat, e.theta_hat)
        });
        let rs = (est.iter().map(|e| (e.0 - sigma * sigma).powi(2)).sum::<f64>() / est.len() as f64).sqrt();
        let rt = (est.iter().map(|e| (e.1 - theta).powi(2)).sum::<f64>() / est.len() as f64).sqrt();
        out.note(format!("T = {t}: N = {n}, RMSE(sigma2_hat) = {rs:.5}, RMSE(theta_hat) = {rt:.5}"));
        rmse.push((rs, rt));
    }
    let target = 1.0 / 2f64.sqrt();
    for w in 0..2 {
        for (name, a, b) in [
            ("sigma2_hat", rmse[w].0, rmse[w + 1].0),
            ("theta_hat", rmse[w].1, rmse[w + 1].1),
        ] {
            let ratio = b / a;
            out.check(
                (ratio / target - 1.0).abs() <= 0.2,
                format!("{name} RMSE ratio T={}->{}: {ratio:.3} (target {target:.3} +-20%)", 1 << w, 2 << w),
            );
        }
    }
    out
}

fn figure_one_model() -> ModelSpec {
    ModelSpec::linear(0.01, 0.05)
        .with_reaction(Polynomial::figure_one())
        .with_init(InitialCondition::BurnIn { t_burn: None })
}

fn c8_semilinear() -> Outcome {
    let mut out = Outcome::new();
    let model = figure_one_model();
    let cfg = SimConfig {
        burn_in_step: 0.05,
        ..SimConfig::default().with_cutoff(512)
    };
    time_variation(&mut out, "semilinear", &model, &cfg, 1000, 84);
    space_variation(&mut out, "semilinear", &model, &cfg, 1000, 85);
    double_variation(&mut out, "semilinear", &model, &cfg, 500, 86);
    out
}

// Figure-1 scenario: M = 200, Delta = 0.05, trig basis on [-1, 1].

const FIG_M: usize = 200;
const FIG_DT: f64 = 0.05;
const FIG_REPS: usize = 20;

fn figure_grids(t: f64, master: u64) -> Vec<ObservationGrid> {
    let n = (t / FIG_DT).round() as usize;
    let shape = GridShape::new(FIG_M, n, t, 0.0).unwrap();
    replicate(FIG_REPS, master, &figure_one_model(), &shape, &SimConfig::default(), |g| g.clone())
}

/// Odd dimension closest to `15 sqrt(T / 50)`.
fn dimension_for(t: f64) -> usize {
    let d = 15.0 * (t / 50.0).sqrt();
    let m = ((d - 1.0) / 2.0).round() as usize;
    2 * m + 1
}

fn c9_recovery(grids50: &[ObservationGrid]) -> Outcome {
    let mut out = Outcome::new();
    let f = Polynomial::figure_one();
    let baseline = l2_error_on_zero(&f);
    let mut means = Vec::new();
    for &t in &[25.0, 50.0, 100.0] {
        let owned;
        let grids = if t == 50.0 {
            grids50
        } else {
            owned = figure_grids(t, 90 + t as u64);
            &owned[..]
        };
        let d = dimension_for(t);
        let spec = BasisSpec::trig_with_dimension(d, 1.0).unwrap();
        let errs: Vec<f64> = grids
            .par_iter()
            .map(|g| {
                let fit = fit_fm(&build_responses(g, 0.01).unwrap(), &spec).unwrap();
                l2_error_on(&fit, &f, -0.5, 0.5, 1 << 12)
            })
            .collect();
        let m = mean(&errs);
        out.note(format!("T = {t}: D_m = {d}, mean L2[-0.5,0.5] error {m:.5} (SE {:.5})", std_err(&errs)));
        means.push((t, d, m));
    }
    let at50 = means[1].2;
    out.check(
        2.0 * at50 <= baseline,
        format!("T = 50, D_m = 15: error {at50:.5} vs zero-function baseline {baseline:.5} (need factor >= 2)"),
    );
    let monotone = means.windows(2).all(|w| w[1].2 < w[0].2);
    out.check(
        monotone,
        format!(
            "errors decrease over T = 25, 50, 100: {:.5}, {:.5}, {:.5}",
            means[0].2, means[1].2, means[2].2
        ),
    );
    out
}

fn l2_error_on_zero(f: &Polynomial) -> f64 {
    let n = 1 << 14;
    let h = 1.0 / n as f64;
    ((0..n).map(|i| f.eval(-0.5 + (i as f64 + 0.5) * h).powi(2)).sum::<f64>() * h).sqrt()
}

/// Squared empirical distance `||g - f||^2_{N,M}` over the design points in `A`.
fn empirical_risk(fit: &spde_calib::ReactionFit, f: &Polynomial, data: &RegressionData) -> f64 {
    empirical_error(fit, f, data).powi(2)
}

fn c10_selection(grids: &[ObservationGrid]) -> Outcome {
    let mut out = Outcome::new();
    let f = Polynomial::figure_one();
    let candidates: Vec<BasisSpec> = (1..=15).map(|m| BasisSpec::trig(m, 1.0).unwrap()).collect();
    let rows: Vec<(Vec<f64>, f64, usize)> = grids
        .par_iter()
        .map(|g| {
            let data = build_responses(g, 0.01).unwrap();
            let sigma2 = spde_calib::nonparametric::default_sigma2(g, 0.01).unwrap();
            let sel = select_model_detailed(&data, &candidates, 2.0, sigma2).unwrap();
            let risks: Vec<f64> = sel.fits.iter().map(|fit| empirical_risk(fit, &f, &data)).collect();
            let chosen = empirical_risk(&sel.fit, &f, &data);
            (risks, chosen, sel.fit.basis.dimension())
        })
        .collect();
    let per_m: Vec<f64> = (0..candidates.len())
        .map(|i| mean(&rows.iter().map(|r| r.0[i]).collect::<Vec<_>>()))
        .collect();
    let (best_i, best) = per_m
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |a, (i, v)| if v < a.1 { (i, v) } else { a });
    let selected = mean(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    let dims: Vec<usize> = rows.iter().map(|r| r.2).collect();
    out.note(format!("selected dimensions: {dims:?}"));
    out.note(format!(
        "risk by dimension: {}",
        per_m
            .iter()
            .zip(&candidates)
            .map(|(r, c)| format!("{}:{r:.2e}", c.dimension()))
            .collect::<Vec<_>>()
            .join(" ")
    ));
    out.check(
        selected <= 3.0 * best + 0.01,
        format!(
            "risk(selected) {selected:.3e} <= 3 * min risk {best:.3e} (D = {}) + 0.01",
            candidates[best_i].dimension()
        ),
    );
    out
}

fn c11_plugin(grids: &[ObservationGrid]) -> Outcome {
    let mut out = Outcome::new();
    let f = Polynomial::figure_one();
    let spec = BasisSpec::trig(7, 1.0).unwrap();
    let h = CompactSet::default();
    let rows: Vec<(f64, f64, f64)> = grids
        .par_iter()
        .map(|g| {
            // the diffusivity is estimated on an interior sub-grid that is
            // closer to balanced than the full one
            let inner = g.sample_observations(0.1, 160, g.n()).unwrap();
            let theta_hat = joint_estimate(&inner, &h).unwrap().theta_hat;
            let known = fit_fm(&build_responses(g, 0.01).unwrap(), &spec).unwrap();
            let plug = plugin_fit(g, theta_hat, &spec).unwrap();
            (theta_hat, l2_error(&known, &f, 1 << 12), l2_error(&plug, &f, 1 << 12))
        })
        .collect();
    let thetas: Vec<f64> = rows.iter().map(|r| r.0).collect();
    out.note(format!("theta_hat: mean {:.5}, sd {:.5} (true 0.01)", mean(&thetas), variance(&thetas).sqrt()));
    let known = mean(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    let plug = mean(&rows.iter().map(|r| r.2).collect::<Vec<_>>());
    let rel = plug / known - 1.0;
    out.check(
        rel.abs() <= 0.25,
        format!("mean L2(A) error: plug-in {plug:.5} vs known theta {known:.5}, rel diff {rel:+.3} (limit 0.25)"),
    );
    out
}

fn c12_ghost_drift() -> Outcome {
    let mut out = Outcome::new();
    let model = ModelSpec::linear(0.01, 0.05);
    let shape = GridShape::new(FIG_M, 1000, 50.0, 0.0).unwrap();
    let slopes = replicate(FIG_REPS, 120, &model, &shape, &SimConfig::default(), |g| {
        let naive = ols_line(&naive_responses(g).unwrap()).1;
        let corrected = ols_line(&build_responses(g, model.theta).unwrap()).1;
        (naive, corrected)
    });
    let naive: Vec<f64> = slopes.iter().map(|s| s.0).collect();
    let corrected: Vec<f64> = slopes.iter().map(|s| s.1).collect();
    let (mn, sn) = (mean(&naive), std_err(&naive));
    out.check(
        mn < 0.0 && mn / sn < -3.0,
        format!("uncorrected slope {mn:.4} (SE {sn:.1e}, z {:.1}) significantly negative", mn / sn),
    );
    mean_check(&mut out, "semigroup-corrected slope", &corrected, 0.0);
    out
}

// ---------------------------------------------------------------------------

fn main() {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.trim_start_matches('C').parse().ok())
        .collect();
    let wanted = |c: usize| selected.is_empty() || selected.contains(&c);
    let names = [
        "transform exactness",
        "scalar-function oracles",
        "simulator covariance",
        "time variation",
        "space variation",
        "double variation",
        "joint estimator rate",
        "semilinear robustness",
        "nonparametric recovery",
        "model selection",
        "plug-in equivalence",
        "ghost drift",
    ];
    let mut grids50: Option<Vec<ObservationGrid>> = None;
    let mut failures = 0;
    let stderr = std::io::stderr();
    for c in 1..=12 {
        if !wanted(c) {
            continue;
        }
        let start = Instant::now();
        let outcome = match c {
            1 => c1_transforms(),
            2 => c2_scalar_oracles(),
            3 => c3_covariance(),
            4 => c4_time(),
            5 => c5_space(),
            6 => c6_double(),
            7 => c7_rate(),
            8 => c8_semilinear(),
            9..=11 => {
                let grids = grids50.get_or_insert_with(|| figure_grids(50.0, 950));
                match c {
                    9 => c9_recovery(grids),
                    10 => c10_selection(grids),
                    _ => c11_plugin(grids),
                }
            }
            _ => c12_ghost_drift(),
        };
        let mut h = stderr.lock();
        for d in &outcome.details {
            writeln!(h, "    {d}").unwrap();
        }
        writeln!(
            h,
            "{} criterion {c:>2} ({}) [{:.1}s]",
            if outcome.pass { "PASS" } else { "FAIL" },
            names[c - 1],
            start.elapsed().as_secs_f64()
        )
        .unwrap();
        failures += usize::from(!outcome.pass);
    }
    if failures > 0 {
        writeln!(stderr.lock(), "{failures} criterion/criteria failed").unwrap();
        std::process::exit(1);
    }
}
