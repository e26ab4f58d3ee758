//! Approximation spaces on `A = [-a, a]`: the trigonometric family and
//! dyadic piecewise polynomials. All basis functions are extended by zero
//! outside `A`.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, CompositeRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisFamily {
    /// `1/sqrt(2a)`, `sin(k pi x / a)/sqrt(a)`, `cos(k pi x / a)/sqrt(a)`,
    /// `k = 1..=m`, ordered (const, sin 1, cos 1, sin 2, ...).
    Trig,
    /// Orthonormal Legendre polynomials of degree `<= r` on each of the
    /// `2^(p+1)` dyadic cells `[j a 2^-p, (j+1) a 2^-p)`.
    PiecewisePoly { r_max: usize },
}

/// One space `V_m` of a family. For the trigonometric family `m` is the
/// frequency cutoff; for piecewise polynomials it is the dyadic level `p`
/// and `r` the degree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBasisSpec", into = "RawBasisSpec")]
pub struct BasisSpec {
    pub family: BasisFamily,
    pub m: usize,
    pub r: usize,
    pub a: f64,
}

impl BasisSpec {
    pub fn trig(m: usize, a: f64) -> Result<Self> {
        Self::validated(BasisFamily::Trig, m, 0, a)
    }

    pub fn piecewise(p: usize, r: usize, r_max: usize, a: f64) -> Result<Self> {
        Self::validated(BasisFamily::PiecewisePoly { r_max }, p, r, a)
    }

    /// Trigonometric space of dimension `d` (odd).
    pub fn trig_with_dimension(d: usize, a: f64) -> Result<Self> {
        if d.is_multiple_of(2) {
            return Err(Error::Domain(format!("trigonometric dimensions are odd, got {d}")));
        }
        Self::trig(d / 2, a)
    }

    fn validated(family: BasisFamily, m: usize, r: usize, a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::Domain(format!("half-width a must be positive, got {a}")));
        }
        if let BasisFamily::PiecewisePoly { r_max } = family {
            if r > r_max {
                return Err(Error::Domain(format!("degree r = {r} exceeds r_max = {r_max}")));
            }
            if m > 30 {
                return Err(Error::Domain(format!("dyadic level p = {m} is too large")));
            }
        }
        Ok(Self { family, m, r, a })
    }

    /// `D_m`: `2m + 1` or `(r + 1) 2^(p+1)`.
    pub fn dimension(&self) -> usize {
        match self.family {
            BasisFamily::Trig => 2 * self.m + 1,
            BasisFamily::PiecewisePoly { .. } => (self.r + 1) << (self.m + 1),
        }
    }

    /// The space one level up the nested chain.
    pub fn next(&self) -> Self {
        Self { m: self.m + 1, ..*self }
    }

    pub fn contains(&self, x: f64) -> bool {
        x.abs() <= self.a
    }

    fn cells(&self) -> usize {
        2usize << self.m
    }

    /// Cell index `j + 2^p` of `x` in `A`, with the right endpoint assigned
    /// to the last cell.
    fn cell(&self, x: f64) -> usize {
        let half = 1usize << self.m;
        let u = (x / self.a + 1.0) * half as f64;
        (u.floor().max(0.0) as usize).min(2 * half - 1)
    }

    /// Indices of the basis functions that can be nonzero at `x`.
    pub fn support(&self, x: f64) -> Range<usize> {
        if !self.contains(x) {
            return 0..0;
        }
        match self.family {
            BasisFamily::Trig => 0..self.dimension(),
            BasisFamily::PiecewisePoly { .. } => {
                let c = self.cell(x);
                c * (self.r + 1)..(c + 1) * (self.r + 1)
            }
        }
    }

    /// Writes `(phi_k(x))_k` into `out` (length `D_m`).
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dimension());
        out.iter_mut().for_each(|v| *v = 0.0);
        if !self.contains(x) {
            return;
        }
        match self.family {
            BasisFamily::Trig => {
                let a = self.a;
                out[0] = 1.0 / (2.0 * a).sqrt();
                let norm = 1.0 / a.sqrt();
                let (s1, c1) = (std::f64::consts::PI * x / a).sin_cos();
                let (mut s, mut c) = (s1, c1);
                for k in 1..=self.m {
                    if k > 1 && k % 16 == 1 {
                        // resync to bound the recurrence drift
                        (s, c) = (k as f64 * std::f64::consts::PI * x / a).sin_cos();
                    }
                    out[2 * k - 1] = s * norm;
                    out[2 * k] = c * norm;
                    (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
                }
            }
            BasisFamily::PiecewisePoly { .. } => {
                let cell = self.cell(x);
                let half = (1usize << self.m) as f64;
                let u = (x / self.a + 1.0) * half - cell as f64;
                let scale = (half / self.a).sqrt();
                let base = cell * (self.r + 1);
                legendre_orthonormal(self.r, u, &mut out[base..base + self.r + 1]);
                out[base..base + self.r + 1].iter_mut().for_each(|v| *v *= scale);
            }
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension()];
        self.eval_into(x, &mut out);
        out
    }

    /// `sum_k c_k phi_k(x)`.
    pub fn combine(&self, coefficients: &[f64], x: f64) -> f64 {
        let mut buf = vec![0.0; self.dimension()];
        self.eval_into(x, &mut buf);
        buf.iter().zip(coefficients).map(|(p, c)| p * c).sum()
    }

    /// Points where basis functions may jump: the ends of `A` and, for
    /// piecewise polynomials, every dyadic cell edge.
    pub fn edges(&self) -> Vec<f64> {
        match self.family {
            BasisFamily::Trig => vec![-self.a, self.a],
            BasisFamily::PiecewisePoly { .. } => {
                let cells = self.cells();
                (0..=cells)
                    .map(|j| -self.a + 2.0 * self.a * j as f64 / cells as f64)
                    .collect()
            }
        }
    }

    /// Quadrature on `A` whose panels never straddle a cell edge.
    fn quadrature(&self, points: usize) -> CompositeRule {
        let order = 8;
        let cells = match self.family {
            BasisFamily::Trig => 1,
            BasisFamily::PiecewisePoly { .. } => self.cells(),
        };
        let panels = points.div_ceil(order).div_ceil(cells).max(1) * cells;
        CompositeRule::new(-self.a, self.a, panels, order)
    }

    /// Coefficients in `self` of the function with `coefficients` in
    /// `coarse`; exact for nested spaces.
    pub fn embed(&self, coarse: &BasisSpec, coefficients: &[f64]) -> Result<Vec<f64>> {
        let same_family = match (self.family, coarse.family) {
            (BasisFamily::Trig, BasisFamily::Trig) => true,
            (BasisFamily::PiecewisePoly { .. }, BasisFamily::PiecewisePoly { .. }) => coarse.r == self.r,
            _ => false,
        };
        if !same_family || coarse.a != self.a || coarse.m > self.m {
            return Err(Error::Domain("spaces are not nested".into()));
        }
        if coefficients.len() != coarse.dimension() {
            return Err(Error::Domain("coefficient length does not match the coarse space".into()));
        }
        match self.family {
            BasisFamily::Trig => {
                let mut out = coefficients.to_vec();
                out.resize(self.dimension(), 0.0);
                Ok(out)
            }
            BasisFamily::PiecewisePoly { .. } => {
                // project cell by cell with a rule exact for degree 2r
                let (gx, gw) = gauss_legendre(self.r + 1);
                let cells = self.cells();
                let width = 2.0 * self.a / cells as f64;
                let mut out = vec![0.0; self.dimension()];
                let mut fine = vec![0.0; self.dimension()];
                for c in 0..cells {
                    let lo = -self.a + c as f64 * width;
                    for (x, w) in gx.iter().zip(&gw) {
                        let x = lo + 0.5 * width * (x + 1.0);
                        let g = coarse.combine(coefficients, x);
                        self.eval_into(x, &mut fine);
                        for k in self.support(x) {
                            out[k] += 0.5 * width * w * g * fine[k];
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

/// `sqrt(2l+1) P_l(2u - 1)` for `l = 0..=r`.
fn legendre_orthonormal(r: usize, u: f64, out: &mut [f64]) {
    let t = 2.0 * u - 1.0;
    let (mut p0, mut p1) = (1.0, t);
    out[0] = 1.0;
    if r >= 1 {
        out[1] = 3f64.sqrt() * t;
    }
    for n in 1..r {
        let nf = n as f64;
        let p2 = ((2.0 * nf + 1.0) * t * p1 - nf * p0) / (nf + 1.0);
        p0 = p1;
        p1 = p2;
        out[n + 1] = (2.0 * nf + 3.0).sqrt() * p2;
    }
}

pub fn eval_basis(spec: &BasisSpec, x: f64) -> Vec<f64> {
    spec.eval(x)
}

pub fn dimension(spec: &BasisSpec) -> usize {
    spec.dimension()
}

/// `max_{k,l} |int_A phi_k phi_l - delta_kl|` with at least `points`
/// quadrature nodes.
pub fn gram_identity_check(spec: &BasisSpec, points: usize) -> f64 {
    let rule = spec.quadrature(points);
    let d = spec.dimension();
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut phi = vec![0.0; d];
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        spec.eval_into(x, &mut phi);
        let sup = spec.support(x);
        for k in sup.clone() {
            for l in sup.clone() {
                gram[(k, l)] += w * phi[k] * phi[l];
            }
        }
    }
    let mut worst: f64 = 0.0;
    for k in 0..d {
        for l in 0..d {
            let target = if k == l { 1.0 } else { 0.0 };
            worst = worst.max((gram[(k, l)] - target).abs());
        }
    }
    worst
}

/// Largest value of `sum_k phi_k(x)^2` over `points` equispaced points of `A`.
pub fn pointwise_sum_max(spec: &BasisSpec, points: usize) -> f64 {
    let mut phi = vec![0.0; spec.dimension()];
    (0..points)
        .map(|i| {
            let x = -spec.a + 2.0 * spec.a * (i as f64 + 0.5) / points as f64;
            spec.eval_into(x, &mut phi);
            phi.iter().map(|v| v * v).sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// `rho(H) = sup_{|alpha| <= 1} sum |alpha_k alpha_l| H_kl`, the top
/// eigenvalue of `|H|`, by power iteration.
pub fn rho(h: &DMatrix<f64>) -> f64 {
    let n = h.nrows();
    if n == 0 {
        return 0.0;
    }
    let abs = h.abs();
    let mut v = nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w = &abs * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w / norm;
        let rayleigh = next.dot(&(&abs * &next));
        let done = (rayleigh - lambda).abs() <= 1e-14 * rayleigh.abs();
        lambda = rayleigh;
        v = next;
        if done {
            break;
        }
    }
    lambda
}

const SUP_GRID: usize = 1 << 14;
const MAX_LM_DIMENSION: usize = 512;

/// `L_m = max(rho(V)^2, rho(B))` with `V_kl = ||phi_k phi_l||_{L^2(A)}` and
/// `B_kl = ||phi_k phi_l||_inf`.
pub fn compute_lm(spec: &BasisSpec) -> Result<f64> {
    let d = spec.dimension();
    if d > MAX_LM_DIMENSION {
        return Err(Error::Resource(format!(
            "L_m uses dense {d}x{d} matrices; the limit is {MAX_LM_DIMENSION}"
        )));
    }
    Ok(rho(&product_l2_matrix(spec)).powi(2).max(rho(&product_sup_matrix(spec))))
}

fn product_l2_matrix(spec: &BasisSpec) -> DMatrix<f64> {
    let d = spec.dimension();
    let rule = spec.quadrature(1 << 12);
    let mut v = DMatrix::<f64>::zeros(d, d);
    let mut phi = vec![0.0; d];
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        spec.eval_into(x, &mut phi);
        let sup = spec.support(x);
        for k in sup.clone() {
            let pk = phi[k] * phi[k];
            for l in sup.clone() {
                v[(k, l)] += w * pk * phi[l] * phi[l];
            }
        }
    }
    v.map(f64::sqrt)
}

fn product_sup_matrix(spec: &BasisSpec) -> DMatrix<f64> {
    let d = spec.dimension();
    let mut best = DMatrix::<f64>::zeros(d, d);
    let mut arg = DMatrix::<f64>::from_element(d, d, f64::NAN);
    let mut phi = vec![0.0; d];
    let h = 2.0 * spec.a / SUP_GRID as f64;
    for i in 0..=SUP_GRID {
        let x = (-spec.a + i as f64 * h).min(spec.a);
        spec.eval_into(x, &mut phi);
        let sup = spec.support(x);
        for k in sup.clone() {
            for l in sup.clone() {
                let p = (phi[k] * phi[l]).abs();
                if p > best[(k, l)] {
                    best[(k, l)] = p;
                    arg[(k, l)] = x;
                }
            }
        }
    }
    // local golden-section refinement inside the cell of the grid maximum
    let mut buf = vec![0.0; d];
    for k in 0..d {
        for l in k..d {
            let x0 = arg[(k, l)];
            if x0.is_nan() {
                continue;
            }
            let (lo, hi) = refine_window(spec, x0, h);
            let f = |x: f64, buf: &mut [f64]| {
                spec.eval_into(x, buf);
                (buf[k] * buf[l]).abs()
            };
            let refined = golden_max(lo, hi, |x| f(x, &mut buf));
            let m = best[(k, l)].max(refined);
            best[(k, l)] = m;
            best[(l, k)] = m;
        }
    }
    best
}

/// Bracket `[x0 - h, x0 + h]` clipped to the cell containing `x0`.
fn refine_window(spec: &BasisSpec, x0: f64, h: f64) -> (f64, f64) {
    let (mut lo, mut hi) = ((x0 - h).max(-spec.a), (x0 + h).min(spec.a));
    if let BasisFamily::PiecewisePoly { .. } = spec.family {
        let cells = spec.cells() as f64;
        let width = 2.0 * spec.a / cells;
        let c = spec.cell(x0) as f64;
        let left = -spec.a + c * width;
        lo = lo.max(left);
        // stay strictly inside the half-open cell
        hi = hi.min(left + width * (1.0 - 1e-12));
    }
    (lo, hi)
}

fn golden_max(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    f1.max(f2).max(f(lo)).max(f(hi))
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawIndex {
    Int(usize),
    Pair(String),
}

#[derive(Serialize, Deserialize)]
struct RawBasisSpec {
    family: String,
    m: RawIndex,
    #[serde(default = "default_half_width")]
    a: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r_max: Option<usize>,
}

fn default_half_width() -> f64 {
    1.0
}

impl TryFrom<RawBasisSpec> for BasisSpec {
    type Error = Error;

    fn try_from(raw: RawBasisSpec) -> Result<Self> {
        match (raw.family.as_str(), raw.m) {
            ("trig", RawIndex::Int(m)) => BasisSpec::trig(m, raw.a),
            ("pp", RawIndex::Pair(s)) => {
                let (p, r) = parse_pair(&s)?;
                BasisSpec::piecewise(p, r, raw.r_max.unwrap_or(r), raw.a)
            }
            ("trig", _) => Err(Error::Parse("trigonometric index must be an integer".into())),
            ("pp", _) => Err(Error::Parse("piecewise index must be a string \"p,r\"".into())),
            (other, _) => Err(Error::Parse(format!("unknown basis family `{other}`"))),
        }
    }
}

impl From<BasisSpec> for RawBasisSpec {
    fn from(s: BasisSpec) -> Self {
        match s.family {
            BasisFamily::Trig => RawBasisSpec {
                family: "trig".into(),
                m: RawIndex::Int(s.m),
                a: s.a,
                r_max: None,
            },
            BasisFamily::PiecewisePoly { r_max } => RawBasisSpec {
                family: "pp".into(),
                m: RawIndex::Pair(format!("{},{}", s.m, s.r)),
                a: s.a,
                r_max: Some(r_max),
            },
        }
    }
}

/// Parses `"p,r"`.
pub fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let mut it = s.split(',').map(|t| t.trim().parse::<usize>());
    match (it.next(), it.next(), it.next()) {
        (Some(Ok(p)), Some(Ok(r)), None) => Ok((p, r)),
        _ => Err(Error::Parse(format!("expected \"p,r\", got `{s}`"))),
    }
}
