//! Smooth functionals `f: E → ℝ` with derivatives and smoothness metadata.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CovarianceModel, Point};

/// User-declared Hölder smoothness `s`, growth exponent `γ` and a bound on
/// the `C^{s,γ}` norm. Never computed, only consumed by diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothnessMeta {
    pub s: f64,
    #[serde(default)]
    pub gamma: f64,
    pub holder_norm: f64,
}

impl SmoothnessMeta {
    pub fn new(s: f64, gamma: f64, holder_norm: f64) -> Result<Self> {
        let meta = SmoothnessMeta {
            s,
            gamma,
            holder_norm,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s.is_finite() && self.s > 0.0) {
            return Err(Error::InvalidConfig(format!("smoothness s must be > 0, got {}", self.s)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidConfig(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.holder_norm.is_finite() && self.holder_norm > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "holder_norm must be > 0, got {}",
                self.holder_norm
            )));
        }
        Ok(())
    }

    /// `ρ ∈ (0, 1]` in `s = k + 1 + ρ`.
    pub fn rho(&self) -> f64 {
        self.s - self.s.ceil() + 1.0
    }

    /// Chain order `k` matched to the smoothness, `s = k + 1 + ρ`; `None` for `s ≤ 1`.
    pub fn matched_order(&self) -> Option<usize> {
        let k = self.s - 1.0 - self.rho();
        (k >= 0.0).then(|| k.round() as usize)
    }
}

impl Default for SmoothnessMeta {
    fn default() -> Self {
        SmoothnessMeta {
            s: 4.0,
            gamma: 0.0,
            holder_norm: 1.0,
        }
    }
}

/// A functional with optional derivative information.
pub trait SmoothFunctional: Send + Sync {
    fn name(&self) -> &str;

    fn meta(&self) -> &SmoothnessMeta;

    fn eval(&self, x: &Point) -> f64;

    /// Dual element `g` with `f'(x)(h) = ⟨h, g⟩`.
    fn grad(&self, _x: &Point) -> Option<Point> {
        None
    }

    /// `f^{(j)}(base)(h_1, …, h_j)` for `j = dirs.len()`, when available.
    fn kth_form(&self, _base: &Point, _dirs: &[&Point]) -> Option<f64> {
        None
    }
}

/// Closed-form scalar functions for spectral functionals `h(θ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarFn {
    Identity,
    Square,
    Exp,
    Sin,
    Tanh,
}

impl ScalarFn {
    pub fn value(self, x: f64) -> f64 {
        match self {
            ScalarFn::Identity => x,
            ScalarFn::Square => x * x,
            ScalarFn::Exp => x.exp(),
            ScalarFn::Sin => x.sin(),
            ScalarFn::Tanh => x.tanh(),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            ScalarFn::Identity => 1.0,
            ScalarFn::Square => 2.0 * x,
            ScalarFn::Exp => x.exp(),
            ScalarFn::Sin => x.cos(),
            ScalarFn::Tanh => 1.0 - x.tanh().powi(2),
        }
    }
}

/// Eigenvalue gap below which the first divided difference switches to
/// the derivative at the midpoint.
pub const DIVIDED_DIFFERENCE_GAP: f64 = 1e-8;

/// Mollifier profile `φ(t) = exp(1 − 1/(1 − t²))` on `|t| < 1`, zero outside.
/// Smooth, supported in `[-1, 1]`, with `φ(0) = 1`.
pub fn mollifier(t: f64) -> f64 {
    if t.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    } else {
        0.0
    }
}

pub fn mollifier_derivative(t: f64) -> f64 {
    if t.abs() < 1.0 {
        let q = 1.0 - t * t;
        -2.0 * t / (q * q) * mollifier(t)
    } else {
        0.0
    }
}

/// `φ(0)` of [`mollifier`].
pub const MOLLIFIER_AT_ZERO: f64 = 1.0;

/// Hölder-norm bound recorded for bump functionals. It encodes the
/// normalization `‖φ̃‖_{C^s} ≤ 1` of the lower-bound construction and is not
/// verified numerically.
pub const BUMP_HOLDER_NORM: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub enum FunctionalKind {
    /// `⟨θ, u⟩`
    Linear { u: Point },
    /// `⟨θ, θ⟩` (Euclidean or Frobenius)
    SquaredNorm,
    /// `⟨θ, u⟩^p`
    PolyPower { u: Point, p: u32 },
    /// `exp⟨θ, u⟩`
    ExpLinear { u: Point },
    /// `Σ_c w_c ε^s φ(‖θ − c‖²/ε²)`; a single bump is one term with weight 1.
    BumpSum {
        centers: Vec<Point>,
        weights: Vec<f64>,
        epsilon: f64,
        s: f64,
    },
    /// `⟨h(θ)u, v⟩` for symmetric matrices `θ`.
    SpectralBilinear { h: ScalarFn, u: Vec<f64>, v: Vec<f64> },
}

/// One of the built-in closed-form functionals.
#[derive(Clone, Debug, PartialEq)]
pub struct Functional {
    name: String,
    kind: FunctionalKind,
    meta: SmoothnessMeta,
}

impl Functional {
    pub fn new(name: impl Into<String>, kind: FunctionalKind, meta: SmoothnessMeta) -> Result<Self> {
        meta.validate()?;
        if let FunctionalKind::BumpSum {
            centers,
            weights,
            epsilon,
            ..
        } = &kind
        {
            if centers.len() != weights.len() {
                return Err(Error::InvalidConfig("bump centers and weights differ in length".into()));
            }
            if !(epsilon.is_finite() && *epsilon > 0.0) {
                return Err(Error::InvalidConfig(format!("bump radius must be > 0, got {epsilon}")));
            }
            if centers.iter().any(Point::is_matrix) {
                return Err(Error::InvalidConfig("bumps live on vector spaces only".into()));
            }
        }
        if let FunctionalKind::SpectralBilinear { u, v, .. } = &kind {
            if u.len() != v.len() || u.is_empty() {
                return Err(Error::InvalidConfig(
                    "spectral_bilinear needs u and v of equal positive length".into(),
                ));
            }
        }
        Ok(Functional {
            name: name.into(),
            kind,
            meta,
        })
    }

    pub fn linear(u: Point) -> Self {
        Self::new("linear", FunctionalKind::Linear { u }, SmoothnessMeta::default()).unwrap()
    }

    pub fn squared_norm() -> Self {
        Self::new("squared_norm", FunctionalKind::SquaredNorm, SmoothnessMeta::default()).unwrap()
    }

    pub fn poly_power(u: Point, p: u32) -> Self {
        Self::new("poly_power", FunctionalKind::PolyPower { u, p }, SmoothnessMeta::default())
            .unwrap()
    }

    pub fn exp_linear(u: Point) -> Self {
        Self::new("exp_linear", FunctionalKind::ExpLinear { u }, SmoothnessMeta::default()).unwrap()
    }

    pub fn bump(center: Point, epsilon: f64, s: f64) -> Result<Self> {
        Self::new(
            "bump",
            FunctionalKind::BumpSum {
                centers: vec![center],
                weights: vec![1.0],
                epsilon,
                s,
            },
            SmoothnessMeta::new(s, 0.0, BUMP_HOLDER_NORM)?,
        )
    }

    pub fn spectral_bilinear(h: ScalarFn, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        Self::new(
            "spectral_bilinear",
            FunctionalKind::SpectralBilinear { h, u, v },
            SmoothnessMeta::default(),
        )
    }

    pub fn with_meta(mut self, meta: SmoothnessMeta) -> Result<Self> {
        meta.validate()?;
        self.meta = meta;
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn kind(&self) -> &FunctionalKind {
        &self.kind
    }

    /// Checks that `x` is a point this functional can be evaluated at.
    pub fn check_domain(&self, x: &Point) -> Result<()> {
        let bad = |why: String| Err(Error::InvalidPoint(format!("{}: {why}", self.name)));
        match &self.kind {
            FunctionalKind::Linear { u }
            | FunctionalKind::PolyPower { u, .. }
            | FunctionalKind::ExpLinear { u } => {
                if u.len() != x.len() || u.matrix_dim() != x.matrix_dim() {
                    return bad(format!("direction has length {}, point {}", u.len(), x.len()));
                }
            }
            FunctionalKind::SquaredNorm => {}
            FunctionalKind::BumpSum { centers, .. } => {
                if x.is_matrix() || centers.iter().any(|c| c.len() != x.len()) {
                    return bad("bump centers do not match the point".into());
                }
            }
            FunctionalKind::SpectralBilinear { u, .. } => {
                if x.matrix_dim() != Some(u.len()) {
                    return bad(format!("needs a symmetric {0}x{0} matrix point", u.len()));
                }
            }
        }
        Ok(())
    }

    /// Highest derivative order with a closed form (`None`: every order).
    pub fn max_form_order(&self) -> Option<usize> {
        match self.kind {
            FunctionalKind::BumpSum { .. } | FunctionalKind::SpectralBilinear { .. } => Some(1),
            _ => None,
        }
    }

    fn bump_terms(&self, x: &Point) -> impl Iterator<Item = (f64, f64, &Point)> + '_ {
        // (weight·ε^s, r = ‖x−c‖²/ε², center)
        let (centers, weights, epsilon, s) = match &self.kind {
            FunctionalKind::BumpSum {
                centers,
                weights,
                epsilon,
                s,
            } => (centers.as_slice(), weights.as_slice(), *epsilon, *s),
            _ => (&[][..], &[][..], 1.0, 0.0),
        };
        let amp = epsilon.powf(s);
        let eps2 = epsilon * epsilon;
        let xc = x.coords().to_vec();
        centers.iter().zip(weights).map(move |(c, w)| {
            let r2: f64 = xc
                .iter()
                .zip(c.coords())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (w * amp, r2 / eps2, c)
        })
    }
}

fn spectral_parts(x: &Point) -> (Vec<f64>, DMatrix<f64>) {
    let m = x.to_symmetric().expect("matrix point");
    let eig = m.symmetric_eigen();
    (eig.eigenvalues.iter().cloned().collect(), eig.eigenvectors)
}

fn first_divided_difference(h: ScalarFn, a: f64, b: f64) -> f64 {
    if (a - b).abs() < DIVIDED_DIFFERENCE_GAP {
        h.derivative(0.5 * (a + b))
    } else {
        (h.value(a) - h.value(b)) / (a - b)
    }
}

fn falling_factorial(p: u32, j: u32) -> f64 {
    ((p - j + 1)..=p).map(f64::from).product()
}

impl SmoothFunctional for Functional {
    fn name(&self) -> &str {
        &self.name
    }

    fn meta(&self) -> &SmoothnessMeta {
        &self.meta
    }

    fn eval(&self, x: &Point) -> f64 {
        match &self.kind {
            FunctionalKind::Linear { u } => x.pairing(u),
            FunctionalKind::SquaredNorm => x.pairing(x),
            FunctionalKind::PolyPower { u, p } => x.pairing(u).powi(*p as i32),
            FunctionalKind::ExpLinear { u } => x.pairing(u).exp(),
            FunctionalKind::BumpSum { .. } => self
                .bump_terms(x)
                .map(|(amp, r, _)| if r < 1.0 { amp * mollifier(r) } else { 0.0 })
                .sum(),
            FunctionalKind::SpectralBilinear { h, u, v } => {
                let (lambdas, q) = spectral_parts(x);
                let mut acc = 0.0;
                for (i, l) in lambdas.iter().enumerate() {
                    let col = q.column(i);
                    let a: f64 = col.iter().zip(v).map(|(c, vv)| c * vv).sum();
                    let b: f64 = col.iter().zip(u).map(|(c, uu)| c * uu).sum();
                    acc += h.value(*l) * a * b;
                }
                acc
            }
        }
    }

    fn grad(&self, x: &Point) -> Option<Point> {
        Some(match &self.kind {
            FunctionalKind::Linear { u } => u.clone(),
            FunctionalKind::SquaredNorm => x.scale(2.0),
            FunctionalKind::PolyPower { u, p } => {
                if *p == 0 {
                    u.scale(0.0)
                } else {
                    u.scale(f64::from(*p) * x.pairing(u).powi(*p as i32 - 1))
                }
            }
            FunctionalKind::ExpLinear { u } => u.scale(x.pairing(u).exp()),
            FunctionalKind::BumpSum { epsilon, .. } => {
                let mut g = vec![0.0; x.len()];
                for (amp, r, c) in self.bump_terms(x) {
                    if r >= 1.0 {
                        continue;
                    }
                    let k = amp * mollifier_derivative(r) * 2.0 / (epsilon * epsilon);
                    for ((gi, xi), ci) in g.iter_mut().zip(x.coords()).zip(c.coords()) {
                        *gi += k * (xi - ci);
                    }
                }
                x.with_coords(g)
            }
            FunctionalKind::SpectralBilinear { h, u, v } => {
                let (lambdas, q) = spectral_parts(x);
                let d = lambdas.len();
                let uq = q.transpose() * nalgebra::DVector::from_column_slice(u);
                let vq = q.transpose() * nalgebra::DVector::from_column_slice(v);
                let m = DMatrix::from_fn(d, d, |i, j| {
                    first_divided_difference(*h, lambdas[i], lambdas[j]) * vq[i] * uq[j]
                });
                let sym = (&m + m.transpose()) * 0.5;
                let g = &q * sym * q.transpose();
                Point::from_symmetric(&g).ok()?
            }
        })
    }

    fn kth_form(&self, base: &Point, dirs: &[&Point]) -> Option<f64> {
        let j = dirs.len();
        if j == 0 {
            return Some(self.eval(base));
        }
        if let Some(max) = self.max_form_order() {
            if j > max {
                return None;
            }
        }
        Some(match &self.kind {
            FunctionalKind::Linear { u } => {
                if j == 1 {
                    dirs[0].pairing(u)
                } else {
                    0.0
                }
            }
            FunctionalKind::SquaredNorm => match j {
                1 => 2.0 * base.pairing(dirs[0]),
                2 => 2.0 * dirs[0].pairing(dirs[1]),
                _ => 0.0,
            },
            FunctionalKind::PolyPower { u, p } => {
                let j = j as u32;
                if j > *p {
                    0.0
                } else {
                    let prod: f64 = dirs.iter().map(|h| h.pairing(u)).product();
                    falling_factorial(*p, j) * base.pairing(u).powi((*p - j) as i32) * prod
                }
            }
            FunctionalKind::ExpLinear { u } => {
                base.pairing(u).exp() * dirs.iter().map(|h| h.pairing(u)).product::<f64>()
            }
            FunctionalKind::BumpSum { .. } | FunctionalKind::SpectralBilinear { .. } => {
                self.grad(base)?.pairing(dirs[0])
            }
        })
    }
}

/// `σ_{f,ξ}(θ) = √⟨Σ f'(θ), f'(θ)⟩`.
pub fn sigma_f_xi(f: &dyn SmoothFunctional, model: &CovarianceModel, theta: &Point) -> Result<f64> {
    model.check_point(theta)?;
    let g = f.grad(theta).ok_or_else(|| Error::missing(f.name(), "a gradient"))?;
    Ok(model.quadratic_form(&g).max(0.0).sqrt())
}

/// `K_{s,γ}(f; Σ; θ) = ‖f‖_{C^{s,γ}} (1 ∨ ‖θ‖)^γ ‖Σ‖^{1/2} / σ_{f,ξ}(θ)`.
pub fn k_functional(f: &dyn SmoothFunctional, model: &CovarianceModel, theta: &Point) -> Result<f64> {
    let sigma = sigma_f_xi(f, model, theta)?;
    if sigma <= 0.0 {
        return Err(Error::DegenerateFunctional(format!(
            "{} has zero variance functional at this point",
            f.name()
        )));
    }
    let meta = f.meta();
    let growth = theta.norm(model.norm()).max(1.0).powf(meta.gamma);
    Ok(meta.holder_norm * growth * model.weak_variance().sqrt() / sigma)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientCheck {
    /// Largest relative discrepancy over all points.
    pub max_discrepancy: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares `grad` against 5-point central differences of `eval`.
///
/// The partial derivative along coordinate `c` is `⟨e_c, grad⟩`, so in the
/// matrix view off-diagonal partials pick up the factor 2 of the trace
/// pairing. The discrepancy at a point is `‖fd − g‖_∞ / max(‖fd‖_∞, ‖g‖_∞)`
/// (0 when both vanish).
pub fn gradient_check(f: &dyn SmoothFunctional, points: &[Point], tol: f64) -> Result<GradientCheck> {
    let mut worst: f64 = 0.0;
    for x in points {
        let g = f.grad(x).ok_or_else(|| Error::missing(f.name(), "a gradient"))?;
        let mut diff: f64 = 0.0;
        let mut scale: f64 = 0.0;
        let mut work = x.clone();
        for c in 0..x.len() {
            let h = 1e-3 * x.coords()[c].abs().max(1.0);
            let base = x.coords()[c];
            let mut at = |t: f64| {
                work.coords_mut()[c] = base + t;
                f.eval(&work)
            };
            let fd = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
            work.coords_mut()[c] = base;
            let mut e = x.with_coords(vec![0.0; x.len()]);
            e.coords_mut()[c] = 1.0;
            let gc = e.pairing(&g);
            diff = diff.max((fd - gc).abs());
            scale = scale.max(fd.abs()).max(gc.abs());
        }
        if scale > 0.0 {
            worst = worst.max(diff / scale);
        }
    }
    Ok(GradientCheck {
        max_discrepancy: worst,
        tolerance: tol,
        pass: worst < tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NormContext;
    use crate::rng::SeedSpec;
    use proptest::prelude::*;
    use rand::Rng;

    fn v(c: &[f64]) -> Point {
        Point::vector(c.to_vec()).unwrap()
    }

    fn sym(d: usize, f: impl Fn(usize, usize) -> f64) -> Point {
        Point::from_symmetric(&DMatrix::from_fn(d, d, |i, j| {
            if i <= j {
                f(i, j)
            } else {
                f(j, i)
            }
        }))
        .unwrap()
    }

    #[test]
    fn sigma_for_linear_is_dual_norm() {
        let u = v(&[1.0, -2.0, 0.5]);
        let m = CovarianceModel::diagonal(vec![1.0, 2.0, 3.0], NormContext::Euclidean).unwrap();
        let s = sigma_f_xi(&Functional::linear(u.clone()), &m, &v(&[3.0, 1.0, 1.0])).unwrap();
        assert!((s - (1.0 + 8.0 + 0.75f64).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn sigma_for_squared_norm_and_exp() {
        let m = CovarianceModel::isotropic(0.09, 2, NormContext::Euclidean).unwrap();
        let theta = v(&[3.0, 4.0]);
        let s = sigma_f_xi(&Functional::squared_norm(), &m, &theta).unwrap();
        assert!((s - 2.0 * 0.3 * 5.0).abs() < 1e-12);
        let f = Functional::exp_linear(v(&[0.6, 0.8]));
        let s0 = sigma_f_xi(&f, &m, &v(&[0.0, 0.0])).unwrap();
        assert!((s0 - 0.3).abs() < 1e-14);
    }

    #[test]
    fn k_functional_equality_case_and_scale_invariance() {
        let u = v(&[0.6, 0.8]);
        let meta = SmoothnessMeta::new(3.0, 0.0, 1.0).unwrap();
        let f = Functional::linear(u.clone()).with_meta(meta).unwrap();
        let m = CovarianceModel::isotropic(0.04, 2, NormContext::Euclidean).unwrap();
        let theta = v(&[0.1, 0.2]);
        assert!((k_functional(&f, &m, &theta).unwrap() - 1.0).abs() < 1e-12);
        let f2 = f.clone().with_meta(SmoothnessMeta::new(3.0, 0.0, 2.0).unwrap()).unwrap();
        assert!((k_functional(&f2, &m, &theta).unwrap() - 2.0).abs() < 1e-12);
        let g = Functional::exp_linear(u)
            .with_meta(SmoothnessMeta::new(3.0, 1.0, 2.5).unwrap())
            .unwrap();
        let k1 = k_functional(&g, &m, &theta).unwrap();
        for c in [0.1, 10.0] {
            let kc = k_functional(&g, &m.scaled(c).unwrap(), &theta).unwrap();
            assert!((kc - k1).abs() < 1e-12 * k1);
        }
    }

    #[test]
    fn k_functional_rejects_zero_variance() {
        let m = CovarianceModel::isotropic(1.0, 2, NormContext::Euclidean).unwrap();
        let err = k_functional(&Functional::squared_norm(), &m, &v(&[0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::DegenerateFunctional(_)));
    }

    struct ValueOnly(SmoothnessMeta);

    impl SmoothFunctional for ValueOnly {
        fn name(&self) -> &str {
            "value_only"
        }
        fn meta(&self) -> &SmoothnessMeta {
            &self.0
        }
        fn eval(&self, x: &Point) -> f64 {
            x.coords()[0]
        }
    }

    #[test]
    fn missing_gradient_is_a_capability_error() {
        let m = CovarianceModel::isotropic(1.0, 2, NormContext::Euclidean).unwrap();
        let f = ValueOnly(SmoothnessMeta::default());
        assert!(matches!(
            sigma_f_xi(&f, &m, &v(&[1.0, 1.0])),
            Err(Error::MissingCapability { .. })
        ));
        assert!(gradient_check(&f, &[v(&[1.0, 1.0])], 1e-5).is_err());
    }

    #[test]
    fn gradient_check_cases() {
        let r = gradient_check(&Functional::squared_norm(), &[v(&[1.0, 2.0])], 1e-8).unwrap();
        assert!(r.pass, "{r:?}");
        let mut rng = SeedSpec::new(11).stream(0);
        let f = Functional::exp_linear(v(&[0.3, -0.7, 0.2]));
        let pts: Vec<Point> = (0..10)
            .map(|_| v(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]))
            .collect();
        assert!(gradient_check(&f, &pts, 1e-5).unwrap().pass);
        let bump = Functional::bump(v(&[0.2, -0.1]), 0.5, 3.0).unwrap();
        let g = bump.grad(&v(&[0.2, -0.1])).unwrap();
        assert_eq!(g.coords(), &[0.0, 0.0]);
        let off = [v(&[0.4, 0.0]), v(&[0.0, -0.3])];
        assert!(gradient_check(&bump, &off, 1e-5).unwrap().pass);
    }

    #[test]
    fn poly_power_forms() {
        let u = v(&[0.5, -1.0, 2.0]);
        let f = Functional::poly_power(u.clone(), 3);
        let base = v(&[0.3, 0.1, -0.2]);
        let h = [v(&[1.0, 0.0, 2.0]), v(&[0.0, 1.0, 1.0]), v(&[2.0, 2.0, 0.0])];
        let refs: Vec<&Point> = h.iter().collect();
        let prod: f64 = h.iter().map(|x| x.pairing(&u)).product();
        assert!((f.kth_form(&base, &refs).unwrap() - 6.0 * prod).abs() < 1e-12);
        // Constant top form: independent of the base point.
        assert_eq!(
            f.kth_form(&base, &refs).unwrap(),
            f.kth_form(&v(&[9.0, 9.0, 9.0]), &refs).unwrap()
        );
        let four: Vec<&Point> = vec![&h[0], &h[1], &h[2], &h[0]];
        assert_eq!(f.kth_form(&base, &four).unwrap(), 0.0);
        let g = f.grad(&base).unwrap();
        assert!((f.kth_form(&base, &[&h[0]]).unwrap() - g.pairing(&h[0])).abs() < 1e-14);
    }

    #[test]
    fn bump_support_and_peak() {
        let c = v(&[0.1, 0.2, 0.3]);
        let f = Functional::bump(c.clone(), 0.25, 2.5).unwrap();
        assert_eq!(f.eval(&c), 0.25f64.powf(2.5) * MOLLIFIER_AT_ZERO);
        assert_eq!(f.eval(&v(&[0.1, 0.45, 0.3])), 0.0);
        assert!(f.eval(&v(&[0.1, 0.44, 0.3])) > 0.0);
    }

    #[test]
    fn spectral_identity_reduces_to_bilinear() {
        let u = vec![1.0, -0.5, 0.25];
        let w = vec![0.3, 0.7, -1.1];
        let f = Functional::spectral_bilinear(ScalarFn::Identity, u.clone(), w.clone()).unwrap();
        let theta = sym(3, |i, j| (i as f64 + 1.0) * 0.3 - j as f64 * 0.7 + if i == j { 1.0 } else { 0.0 });
        let m = theta.to_symmetric().unwrap();
        let direct = (nalgebra::DVector::from_vec(w.clone()).transpose()
            * (&m * nalgebra::DVector::from_vec(u.clone())))[(0, 0)];
        assert!((f.eval(&theta) - direct).abs() < 1e-12);
        // The gradient is the symmetrized outer product v uᵀ.
        let g = f.grad(&theta).unwrap().to_symmetric().unwrap();
        let outer = DMatrix::from_fn(3, 3, |i, j| 0.5 * (w[i] * u[j] + w[j] * u[i]));
        assert!((g - outer).amax() < 1e-12);
    }

    #[test]
    fn spectral_gradient_matches_finite_differences() {
        let f = Functional::spectral_bilinear(ScalarFn::Exp, vec![1.0, 0.2, -0.4], vec![0.5, -1.0, 0.3])
            .unwrap();
        let theta = sym(3, |i, j| if i == j { 0.2 * i as f64 } else { 0.1 * (i + j) as f64 });
        assert!(gradient_check(&f, &[theta], 1e-6).unwrap().pass);
        // Repeated spectrum: identity matrix, triple eigenvalue.
        let eye = sym(3, |i, j| if i == j { 1.0 } else { 0.0 });
        assert!(gradient_check(&f, &[eye], 1e-6).unwrap().pass);
    }

    #[test]
    fn spectral_is_stable_under_repeated_eigenvalues() {
        let f = Functional::spectral_bilinear(ScalarFn::Sin, vec![1.0, 2.0, 0.5, -1.0], vec![0.3, -0.2, 1.0, 0.4])
            .unwrap();
        // Q diag(1,1,2,2) Qᵀ for two rotations; h acts on the spectrum only.
        let diag = nalgebra::DVector::from_vec(vec![1.0, 1.0, 2.0, 2.0]);
        let mut vals = Vec::new();
        for angle in [0.0, 0.3, 1.1] {
            let (c, s) = (f64::cos(angle), f64::sin(angle));
            let mut q = DMatrix::<f64>::identity(4, 4);
            q[(0, 0)] = c;
            q[(0, 1)] = -s;
            q[(1, 0)] = s;
            q[(1, 1)] = c;
            let m = &q * DMatrix::from_diagonal(&diag) * q.transpose();
            vals.push(f.eval(&Point::from_symmetric(&m).unwrap()));
        }
        // The rotation mixes only the first eigenspace, so h(θ) is unchanged.
        for w in vals.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn smoothness_decomposition() {
        let m = SmoothnessMeta::new(3.5, 0.0, 1.0).unwrap();
        assert!((m.rho() - 0.5).abs() < 1e-15);
        assert_eq!(m.matched_order(), Some(2));
        let m = SmoothnessMeta::new(3.0, 0.0, 1.0).unwrap();
        assert_eq!(m.rho(), 1.0);
        assert_eq!(m.matched_order(), Some(1));
        assert_eq!(SmoothnessMeta::new(0.5, 0.0, 1.0).unwrap().matched_order(), None);
        assert!(SmoothnessMeta::new(-1.0, 0.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn order_one_form_equals_gradient_pairing(
            a in prop::collection::vec(-1.0f64..1.0, 4),
            h in prop::collection::vec(-1.0f64..1.0, 4),
            u in prop::collection::vec(-1.0f64..1.0, 4),
        ) {
            let base = v(&a);
            let dir = v(&h);
            let fs = [
                Functional::linear(v(&u)),
                Functional::squared_norm(),
                Functional::poly_power(v(&u), 4),
                Functional::exp_linear(v(&u)),
                Functional::bump(v(&u), 0.9, 3.0).unwrap(),
            ];
            for f in &fs {
                let lhs = f.kth_form(&base, &[&dir]).unwrap();
                let rhs = f.grad(&base).unwrap().pairing(&dir);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn bump_vanishes_outside_its_ball(
            c in prop::collection::vec(-1.0f64..1.0, 3),
            dir in prop::collection::vec(-1.0f64..1.0, 3),
            extra in 0.0f64..2.0,
        ) {
            let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assume!(n > 1e-3);
            let eps = 0.3;
            let r = eps * (1.0 + extra);
            let x: Vec<f64> = c.iter().zip(&dir).map(|(ci, di)| ci + r * di / n).collect();
            let f = Functional::bump(v(&c), eps, 2.0).unwrap();
            prop_assert_eq!(f.eval(&v(&x)), 0.0);
        }
    }
}
