//! Gaussian shift models `X = θ + ξ` with known noise covariance.
//!
//! Three ambient geometries are supported: plain `ℝ^d` with the Euclidean
//! norm, `ℝ^d` with the sup-norm (also used for grid-discretized function
//! data), and symmetric `d×d` matrices with the operator norm. Points of the
//! matrix space are stored as their upper triangle in row-major order,
//! `(0,0), (0,1), …, (0,d-1), (1,1), …, (d-1,d-1)`, and paired with dual
//! elements through `⟨A, B⟩ = tr(AB)`.
//!
//! Weak variance is `‖Σ‖ = sup_{‖u‖_* ≤ 1} E⟨ξ,u⟩²`:
//!
//! * Euclidean: the top eigenvalue of `Σ`.
//! * Sup-norm: the dual ball is the ℓ1 ball, `⟨Σu,u⟩` is convex in `u`, so the
//!   maximum sits at a vertex `±e_i` and equals `max_i Σ_ii`.
//! * GOE with the operator norm: the dual norm is the nuclear norm and
//!   `Var tr(ξG) = 2σ²‖G‖_F²`. Over the nuclear unit ball `‖G‖_F ≤ 1`, with
//!   equality at rank-one `G = vvᵀ`, so `‖Σ‖ = 2σ²`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::Moments;

/// Number of upper-triangle entries of a symmetric `d×d` matrix.
pub const fn triangle_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Index of entry `(i, j)`, `i <= j`, in the row-major upper triangle.
#[inline]
pub fn triangle_index(d: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < d);
    i * d - i * (i + 1) / 2 + j
}

/// A point of the parameter space: a dense vector, or a symmetric matrix
/// stored by its upper triangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    coords: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix_dim: Option<usize>,
}

impl Point {
    pub fn vector(coords: Vec<f64>) -> Result<Self> {
        let p = Point {
            coords,
            matrix_dim: None,
        };
        p.check_finite()?;
        Ok(p)
    }

    pub fn zeros(len: usize) -> Self {
        Point {
            coords: vec![0.0; len],
            matrix_dim: None,
        }
    }

    /// Symmetric matrix view from the row-major upper triangle.
    pub fn matrix_upper(d: usize, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != triangle_len(d) {
            return Err(Error::InvalidPoint(format!(
                "matrix view with d = {d} needs {} coordinates, got {}",
                triangle_len(d),
                coords.len()
            )));
        }
        let p = Point {
            coords,
            matrix_dim: Some(d),
        };
        p.check_finite()?;
        Ok(p)
    }

    pub fn zero_matrix(d: usize) -> Self {
        Point {
            coords: vec![0.0; triangle_len(d)],
            matrix_dim: Some(d),
        }
    }

    /// Upper triangle of `m`; the lower triangle is ignored.
    pub fn from_symmetric(m: &DMatrix<f64>) -> Result<Self> {
        let d = m.nrows();
        let mut coords = Vec::with_capacity(triangle_len(d));
        for i in 0..d {
            for j in i..d {
                coords.push(m[(i, j)]);
            }
        }
        Point::matrix_upper(d, coords)
    }

    fn check_finite(&self) -> Result<()> {
        if self.coords.iter().all(|c| c.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidPoint("non-finite coordinate".into()))
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn matrix_dim(&self) -> Option<usize> {
        self.matrix_dim
    }

    pub fn is_matrix(&self) -> bool {
        self.matrix_dim.is_some()
    }

    /// Same view (vector or matrix), new coordinates.
    pub fn with_coords(&self, coords: Vec<f64>) -> Point {
        debug_assert_eq!(coords.len(), self.coords.len());
        Point {
            coords,
            matrix_dim: self.matrix_dim,
        }
    }

    pub fn to_symmetric(&self) -> Option<DMatrix<f64>> {
        let d = self.matrix_dim?;
        let mut m = DMatrix::zeros(d, d);
        let mut k = 0;
        for i in 0..d {
            for j in i..d {
                m[(i, j)] = self.coords[k];
                m[(j, i)] = self.coords[k];
                k += 1;
            }
        }
        Some(m)
    }

    /// Dual pairing: the dot product for vectors, `tr(AB)` for matrices.
    pub fn pairing(&self, other: &Point) -> f64 {
        pairing_slices(self.matrix_dim, &self.coords, &other.coords)
    }

    pub fn add(&self, other: &Point) -> Point {
        self.with_coords(
            self.coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &Point) -> Point {
        self.with_coords(
            self.coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn scale(&self, c: f64) -> Point {
        self.with_coords(self.coords.iter().map(|a| c * a).collect())
    }

    /// `‖·‖` of the ambient space.
    pub fn norm(&self, ctx: NormContext) -> f64 {
        norm_of(ctx, self.matrix_dim, &self.coords)
    }
}

/// Pairing on raw coordinate slices (see [`Point::pairing`]).
#[inline]
pub fn pairing_slices(matrix_dim: Option<usize>, a: &[f64], b: &[f64]) -> f64 {
    match matrix_dim {
        None => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        Some(d) => {
            let mut diag = 0.0;
            let mut off = 0.0;
            let mut k = 0;
            for i in 0..d {
                diag += a[k] * b[k];
                k += 1;
                for _ in (i + 1)..d {
                    off += a[k] * b[k];
                    k += 1;
                }
            }
            diag + 2.0 * off
        }
    }
}

fn norm_of(ctx: NormContext, matrix_dim: Option<usize>, coords: &[f64]) -> f64 {
    match (ctx, matrix_dim) {
        (NormContext::SupNorm, _) => coords.iter().fold(0.0f64, |m, c| m.max(c.abs())),
        (NormContext::MatrixOperatorNorm, Some(d)) => symmetric_operator_norm(d, coords),
        _ => pairing_slices(matrix_dim, coords, coords).sqrt(),
    }
}

fn symmetric_operator_norm(d: usize, upper: &[f64]) -> f64 {
    let m = DMatrix::from_fn(d, d, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        upper[triangle_index(d, a, b)]
    });
    m.symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, l| acc.max(l.abs()))
}

/// The Banach norm of the ambient space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum NormContext {
    #[default]
    #[serde(rename = "euclidean")]
    Euclidean,
    #[serde(rename = "sup")]
    SupNorm,
    #[serde(rename = "operator")]
    MatrixOperatorNorm,
}

fn operator_norm() -> NormContext {
    NormContext::MatrixOperatorNorm
}

/// Wire form of a covariance model; see [`CovarianceModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceKind {
    Isotropic {
        sigma2: f64,
        d: usize,
        #[serde(default)]
        norm: NormContext,
    },
    Diagonal {
        lambdas: Vec<f64>,
        #[serde(default)]
        norm: NormContext,
    },
    DenseSpd {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        norm: NormContext,
    },
    Goe {
        sigma: f64,
        d: usize,
        #[serde(default = "operator_norm")]
        norm: NormContext,
    },
}

impl CovarianceKind {
    pub fn norm(&self) -> NormContext {
        match self {
            CovarianceKind::Isotropic { norm, .. }
            | CovarianceKind::Diagonal { norm, .. }
            | CovarianceKind::DenseSpd { norm, .. }
            | CovarianceKind::Goe { norm, .. } => *norm,
        }
    }
}

/// A validated noise law `ξ ~ N(0, Σ)` together with its norm context.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "CovarianceKind", into = "CovarianceKind")]
pub struct CovarianceModel {
    kind: CovarianceKind,
    /// Square-root factor `L` with `LLᵀ = Σ` (dense models only).
    factor: Option<DMatrix<f64>>,
    top_eigenvalue: f64,
}

impl PartialEq for CovarianceModel {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl TryFrom<CovarianceKind> for CovarianceModel {
    type Error = Error;

    fn try_from(kind: CovarianceKind) -> Result<Self> {
        CovarianceModel::new(kind)
    }
}

impl From<CovarianceModel> for CovarianceKind {
    fn from(m: CovarianceModel) -> Self {
        m.kind
    }
}

const ASYMMETRY_TOL: f64 = 1e-12;
const NEG_EIGEN_REL_TOL: f64 = 1e-10;

impl CovarianceModel {
    pub fn new(kind: CovarianceKind) -> Result<Self> {
        let norm = kind.norm();
        let is_goe = matches!(kind, CovarianceKind::Goe { .. });
        if is_goe != (norm == NormContext::MatrixOperatorNorm) {
            return Err(Error::UnsupportedNorm(format!(
                "{norm:?} is not available for this model; the operator norm pairs with GOE only"
            )));
        }
        let check_scale = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidCovariance(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )))
            }
        };
        let check_dim = |d: usize| {
            if d == 0 {
                Err(Error::InvalidCovariance("dimension must be positive".into()))
            } else {
                Ok(())
            }
        };
        let (factor, top) = match &kind {
            CovarianceKind::Isotropic { sigma2, d, .. } => {
                check_scale("sigma2", *sigma2)?;
                check_dim(*d)?;
                (None, *sigma2)
            }
            CovarianceKind::Diagonal { lambdas, .. } => {
                check_dim(lambdas.len())?;
                for &l in lambdas {
                    check_scale("lambda", l)?;
                }
                (None, lambdas.iter().cloned().fold(0.0, f64::max))
            }
            CovarianceKind::Goe { sigma, d, .. } => {
                check_scale("sigma", *sigma)?;
                check_dim(*d)?;
                // Entry variances 2σ² (diagonal) and σ² (off-diagonal).
                (None, 2.0 * sigma * sigma)
            }
            CovarianceKind::DenseSpd { matrix, .. } => {
                let (l, top) = dense_factor(matrix)?;
                (Some(l), top)
            }
        };
        Ok(CovarianceModel {
            kind,
            factor,
            top_eigenvalue: top,
        })
    }

    pub fn isotropic(sigma2: f64, d: usize, norm: NormContext) -> Result<Self> {
        Self::new(CovarianceKind::Isotropic { sigma2, d, norm })
    }

    pub fn diagonal(lambdas: Vec<f64>, norm: NormContext) -> Result<Self> {
        Self::new(CovarianceKind::Diagonal { lambdas, norm })
    }

    pub fn dense(matrix: Vec<Vec<f64>>, norm: NormContext) -> Result<Self> {
        Self::new(CovarianceKind::DenseSpd { matrix, norm })
    }

    pub fn goe(sigma: f64, d: usize) -> Result<Self> {
        Self::new(CovarianceKind::Goe {
            sigma,
            d,
            norm: NormContext::MatrixOperatorNorm,
        })
    }

    pub fn kind(&self) -> &CovarianceKind {
        &self.kind
    }

    pub fn norm(&self) -> NormContext {
        self.kind.norm()
    }

    /// Length of a coordinate vector of the ambient space.
    pub fn dim(&self) -> usize {
        match &self.kind {
            CovarianceKind::Isotropic { d, .. } => *d,
            CovarianceKind::Diagonal { lambdas, .. } => lambdas.len(),
            CovarianceKind::DenseSpd { matrix, .. } => matrix.len(),
            CovarianceKind::Goe { d, .. } => triangle_len(*d),
        }
    }

    /// `Some(d)` when points are symmetric `d×d` matrices.
    pub fn matrix_dim(&self) -> Option<usize> {
        match &self.kind {
            CovarianceKind::Goe { d, .. } => Some(*d),
            _ => None,
        }
    }

    /// Zero point of the ambient space.
    pub fn origin(&self) -> Point {
        match self.matrix_dim() {
            Some(d) => Point::zero_matrix(d),
            None => Point::zeros(self.dim()),
        }
    }

    /// Wraps raw coordinates in the view this model expects.
    pub fn point(&self, coords: Vec<f64>) -> Result<Point> {
        let p = match self.matrix_dim() {
            Some(d) => Point::matrix_upper(d, coords)?,
            None => Point::vector(coords)?,
        };
        self.check_point(&p)?;
        Ok(p)
    }

    pub fn check_point(&self, p: &Point) -> Result<()> {
        if p.len() != self.dim() || p.matrix_dim() != self.matrix_dim() {
            return Err(Error::InvalidPoint(format!(
                "point of length {} does not live in this model's space (length {})",
                p.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `Σ ↦ cΣ`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let kind = match &self.kind {
            CovarianceKind::Isotropic { sigma2, d, norm } => CovarianceKind::Isotropic {
                sigma2: sigma2 * c,
                d: *d,
                norm: *norm,
            },
            CovarianceKind::Diagonal { lambdas, norm } => CovarianceKind::Diagonal {
                lambdas: lambdas.iter().map(|l| l * c).collect(),
                norm: *norm,
            },
            CovarianceKind::DenseSpd { matrix, norm } => CovarianceKind::DenseSpd {
                matrix: matrix
                    .iter()
                    .map(|row| row.iter().map(|a| a * c).collect())
                    .collect(),
                norm: *norm,
            },
            CovarianceKind::Goe { sigma, d, norm } => CovarianceKind::Goe {
                sigma: sigma * c.sqrt(),
                d: *d,
                norm: *norm,
            },
        };
        Self::new(kind)
    }

    /// Draws one noise vector into `out` (length [`Self::dim`]).
    ///
    /// Standard normals are consumed in coordinate order; for GOE that is the
    /// row-major upper triangle.
    pub fn sample_noise_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        match &self.kind {
            CovarianceKind::Isotropic { sigma2, .. } => {
                let s = sigma2.sqrt();
                for x in out.iter_mut() {
                    let g: f64 = rng.sample(StandardNormal);
                    *x = s * g;
                }
            }
            CovarianceKind::Diagonal { lambdas, .. } => {
                for (x, l) in out.iter_mut().zip(lambdas) {
                    let g: f64 = rng.sample(StandardNormal);
                    *x = l.sqrt() * g;
                }
            }
            CovarianceKind::DenseSpd { .. } => {
                let l = self.factor.as_ref().expect("dense model carries a factor");
                let d = out.len();
                let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                for (i, x) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, gj) in g.iter().enumerate() {
                        acc += l[(i, j)] * gj;
                    }
                    *x = acc;
                }
            }
            CovarianceKind::Goe { sigma, d, .. } => {
                let diag = sigma * std::f64::consts::SQRT_2;
                let mut k = 0;
                for i in 0..*d {
                    for j in i..*d {
                        let g: f64 = rng.sample(StandardNormal);
                        out[k] = if i == j { diag * g } else { sigma * g };
                        k += 1;
                    }
                }
            }
        }
    }

    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let mut p = self.origin();
        self.sample_noise_into(rng, p.coords_mut());
        p
    }

    /// `Var⟨ξ, g⟩` for a dual element `g` (exact).
    pub fn quadratic_form(&self, g: &Point) -> f64 {
        let c = g.coords();
        match &self.kind {
            CovarianceKind::Isotropic { sigma2, .. } => sigma2 * c.iter().map(|x| x * x).sum::<f64>(),
            CovarianceKind::Diagonal { lambdas, .. } => {
                lambdas.iter().zip(c).map(|(l, x)| l * x * x).sum()
            }
            CovarianceKind::DenseSpd { matrix, .. } => {
                let mut acc = 0.0;
                for (i, row) in matrix.iter().enumerate() {
                    for (j, a) in row.iter().enumerate() {
                        acc += c[i] * a * c[j];
                    }
                }
                acc.max(0.0)
            }
            CovarianceKind::Goe { sigma, .. } => {
                // ⟨ξ,G⟩ = Σ_i ξ_ii G_ii + 2 Σ_{i<j} ξ_ij G_ij with independent entries:
                // variance Σ_i 2σ² G_ii² + Σ_{i<j} 4σ² G_ij² = 2σ² ‖G‖_F².
                2.0 * sigma * sigma * g.pairing(g)
            }
        }
    }

    /// Covariance of the coordinate vector as a dense matrix.
    pub fn coordinate_covariance(&self) -> DMatrix<f64> {
        match &self.kind {
            CovarianceKind::Isotropic { sigma2, d, .. } => DMatrix::identity(*d, *d) * *sigma2,
            CovarianceKind::Diagonal { lambdas, .. } => {
                DMatrix::from_diagonal(&DVector::from_vec(lambdas.clone()))
            }
            CovarianceKind::DenseSpd { matrix, .. } => {
                let d = matrix.len();
                DMatrix::from_fn(d, d, |i, j| matrix[i][j])
            }
            CovarianceKind::Goe { sigma, d, .. } => {
                let s2 = sigma * sigma;
                let mut diag = Vec::with_capacity(triangle_len(*d));
                for i in 0..*d {
                    for j in i..*d {
                        diag.push(if i == j { 2.0 * s2 } else { s2 });
                    }
                }
                DMatrix::from_diagonal(&DVector::from_vec(diag))
            }
        }
    }

    /// Weak variance `‖Σ‖` in the model's norm context.
    pub fn weak_variance(&self) -> f64 {
        match (&self.kind, self.norm()) {
            (CovarianceKind::Goe { .. }, _) => self.top_eigenvalue,
            (_, NormContext::Euclidean) => self.top_eigenvalue,
            (CovarianceKind::Isotropic { sigma2, .. }, _) => *sigma2,
            (CovarianceKind::Diagonal { lambdas, .. }, _) => {
                lambdas.iter().cloned().fold(0.0, f64::max)
            }
            (CovarianceKind::DenseSpd { matrix, .. }, _) => matrix
                .iter()
                .enumerate()
                .map(|(i, row)| row[i])
                .fold(0.0, f64::max),
        }
    }

    /// `tr Σ` of the coordinate covariance.
    pub fn trace(&self) -> f64 {
        match &self.kind {
            CovarianceKind::Isotropic { sigma2, d, .. } => sigma2 * *d as f64,
            CovarianceKind::Diagonal { lambdas, .. } => lambdas.iter().sum(),
            CovarianceKind::DenseSpd { matrix, .. } => {
                matrix.iter().enumerate().map(|(i, row)| row[i]).sum()
            }
            CovarianceKind::Goe { sigma, d, .. } => {
                let d = *d as f64;
                sigma * sigma * (2.0 * d + d * (d - 1.0) / 2.0)
            }
        }
    }

    /// Strong variance `E‖ξ‖²`: exact in the Euclidean case, Monte Carlo
    /// (with standard error) otherwise.
    pub fn strong_variance<R: Rng + ?Sized>(&self, n_mc: usize, rng: &mut R) -> Estimate {
        if self.norm() == NormContext::Euclidean {
            return Estimate {
                value: self.trace(),
                se: 0.0,
            };
        }
        let mut buf = vec![0.0; self.dim()];
        let mut acc = Moments::default();
        for _ in 0..n_mc.max(1) {
            self.sample_noise_into(rng, &mut buf);
            let n = norm_of(self.norm(), self.matrix_dim(), &buf);
            acc.push(n * n);
        }
        Estimate {
            value: acc.mean(),
            se: acc.standard_error(),
        }
    }

    /// Effective rank `r(Σ) = E‖ξ‖² / ‖Σ‖`.
    pub fn effective_rank<R: Rng + ?Sized>(&self, n_mc: usize, rng: &mut R) -> Result<Estimate> {
        let weak = self.weak_variance();
        if weak <= 0.0 {
            return Err(Error::UndefinedRank);
        }
        if let CovarianceKind::Isotropic {
            d,
            norm: NormContext::Euclidean,
            ..
        } = self.kind
        {
            // σ²d/σ² need not round back to d.
            return Ok(Estimate {
                value: d as f64,
                se: 0.0,
            });
        }
        let strong = self.strong_variance(n_mc, rng);
        Ok(Estimate {
            value: strong.value / weak,
            se: strong.se / weak,
        })
    }
}

/// Default Monte Carlo size for strong variance under non-Euclidean norms.
pub const DEFAULT_STRONG_VARIANCE_MC: usize = 2000;

/// A Monte Carlo (or exact, `se == 0`) estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

fn dense_factor(matrix: &[Vec<f64>]) -> Result<(DMatrix<f64>, f64)> {
    let d = matrix.len();
    if d == 0 {
        return Err(Error::InvalidCovariance("empty matrix".into()));
    }
    if matrix.iter().any(|row| row.len() != d) {
        return Err(Error::InvalidCovariance("matrix is not square".into()));
    }
    if matrix.iter().flatten().any(|a| !a.is_finite()) {
        return Err(Error::InvalidCovariance("non-finite entry".into()));
    }
    let m = DMatrix::from_fn(d, d, |i, j| matrix[i][j]);
    let asym = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| (m[(i, j)] - m[(j, i)]).abs())
        .fold(0.0, f64::max);
    if asym >= ASYMMETRY_TOL {
        return Err(Error::InvalidCovariance(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let eig = m.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bottom = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = top.abs().max(0.0);
    if bottom < -NEG_EIGEN_REL_TOL * scale {
        return Err(Error::InvalidCovariance(format!(
            "matrix is not positive semidefinite (min eigenvalue {bottom:e})"
        )));
    }
    let factor = match m.clone().cholesky() {
        Some(ch) => ch.l(),
        None => {
            // Near-singular: Q diag(√max(λ,0)).
            let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
            &eig.eigenvectors * DMatrix::from_diagonal(&roots)
        }
    };
    Ok((factor, top.max(0.0)))
}
