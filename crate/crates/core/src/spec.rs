//! Serializable descriptions of functionals, points and experiments.
//!
//! Vectors in a spec are either explicit arrays or generators resolved
//! against the model's dimension, so one document can drive a sweep over
//! `d`:
//!
//! ```json
//! [0.6, 0.8]
//! {"gen": "basis", "index": 0, "scale": 1.0}
//! {"gen": "uniform_unit", "norm": 1.0}
//! {"gen": "constant", "value": 0.0}
//! ```

use serde::{Deserialize, Serialize};

use crate::chain::ChainConfig;
use crate::error::{Error, Result};
use crate::functional::{Functional, FunctionalKind, ScalarFn, SmoothnessMeta, BUMP_HOLDER_NORM};
use crate::model::{pairing_slices, CovarianceKind, CovarianceModel, Point, DEFAULT_STRONG_VARIANCE_MC};

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gen", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    Constant {
        value: f64,
    },
    Basis {
        index: usize,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Constant entries scaled to the requested norm (dual pairing).
    UniformUnit {
        #[serde(default = "one")]
        norm: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Explicit(Vec<f64>),
    Generated(Generator),
}

impl Default for VectorSpec {
    fn default() -> Self {
        VectorSpec::Generated(Generator::Constant { value: 0.0 })
    }
}

impl VectorSpec {
    /// Raw coordinates of length `len`; `matrix_dim` selects the pairing used
    /// by `uniform_unit`.
    pub fn resolve(&self, len: usize, matrix_dim: Option<usize>) -> Result<Vec<f64>> {
        match self {
            VectorSpec::Explicit(v) => {
                if v.len() != len {
                    return Err(Error::InvalidConfig(format!(
                        "vector has length {}, expected {len}",
                        v.len()
                    )));
                }
                Ok(v.clone())
            }
            VectorSpec::Generated(Generator::Constant { value }) => Ok(vec![*value; len]),
            VectorSpec::Generated(Generator::Basis { index, scale }) => {
                if *index >= len {
                    return Err(Error::InvalidConfig(format!(
                        "basis index {index} out of range for length {len}"
                    )));
                }
                let mut v = vec![0.0; len];
                v[*index] = *scale;
                Ok(v)
            }
            VectorSpec::Generated(Generator::UniformUnit { norm }) => {
                let ones = vec![1.0; len];
                let n = pairing_slices(matrix_dim, &ones, &ones).sqrt();
                Ok(vec![norm / n; len])
            }
        }
    }

    /// A point of `model`'s space.
    pub fn point(&self, model: &CovarianceModel) -> Result<Point> {
        model.point(self.resolve(model.dim(), model.matrix_dim())?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionalSpec {
    Linear {
        u: VectorSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        meta: Option<SmoothnessMeta>,
    },
    SquaredNorm {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        meta: Option<SmoothnessMeta>,
    },
    PolyPower {
        u: VectorSpec,
        p: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        meta: Option<SmoothnessMeta>,
    },
    ExpLinear {
        u: VectorSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        meta: Option<SmoothnessMeta>,
    },
    Bump {
        #[serde(default)]
        center: VectorSpec,
        epsilon: f64,
        s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        meta: Option<SmoothnessMeta>,
    },
    SpectralBilinear {
        h: ScalarFn,
        u: VectorSpec,
        v: VectorSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        meta: Option<SmoothnessMeta>,
    },
}

impl FunctionalSpec {
    pub fn build(&self, model: &CovarianceModel) -> Result<Functional> {
        let dual = |u: &VectorSpec| u.point(model);
        let (name, kind, meta) = match self {
            FunctionalSpec::Linear { u, meta } => ("linear", FunctionalKind::Linear { u: dual(u)? }, meta),
            FunctionalSpec::SquaredNorm { meta } => ("squared_norm", FunctionalKind::SquaredNorm, meta),
            FunctionalSpec::PolyPower { u, p, meta } => (
                "poly_power",
                FunctionalKind::PolyPower { u: dual(u)?, p: *p },
                meta,
            ),
            FunctionalSpec::ExpLinear { u, meta } => {
                ("exp_linear", FunctionalKind::ExpLinear { u: dual(u)? }, meta)
            }
            FunctionalSpec::Bump {
                center,
                epsilon,
                s,
                meta,
            } => {
                let f = Functional::bump(dual(center)?, *epsilon, *s)?;
                let meta = meta.unwrap_or(SmoothnessMeta::new(*s, 0.0, BUMP_HOLDER_NORM)?);
                return f.with_meta(meta);
            }
            FunctionalSpec::SpectralBilinear { h, u, v, meta } => {
                let d = model.matrix_dim().ok_or_else(|| {
                    Error::InvalidConfig("spectral_bilinear needs a matrix (GOE) model".into())
                })?;
                (
                    "spectral_bilinear",
                    FunctionalKind::SpectralBilinear {
                        h: *h,
                        u: u.resolve(d, None)?,
                        v: v.resolve(d, None)?,
                    },
                    meta,
                )
            }
        };
        Functional::new(name, kind, meta.unwrap_or_default())
    }
}

fn default_n_rep() -> usize {
    10_000
}

fn default_strong_mc() -> usize {
    DEFAULT_STRONG_VARIANCE_MC
}

/// Everything needed to run one outer Monte Carlo experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub model: CovarianceKind,
    pub functional: FunctionalSpec,
    #[serde(default)]
    pub theta: VectorSpec,
    pub chain: ChainConfig,
    #[serde(default = "default_n_rep")]
    pub n_rep: usize,
    /// Replicates for the sign-symmetrized bias oracle; 0 disables it.
    #[serde(default)]
    pub bias_oracle_reps: usize,
    #[serde(default = "default_strong_mc")]
    pub strong_variance_mc: usize,
}

/// Resolved objects of an [`ExperimentSpec`].
pub struct Resolved {
    pub model: CovarianceModel,
    pub functional: Functional,
    pub theta: Point,
}

impl ExperimentSpec {
    pub fn resolve(&self) -> Result<Resolved> {
        let model = CovarianceModel::new(self.model.clone())?;
        let functional = self.functional.build(&model)?;
        let theta = self.theta.point(&model)?;
        functional.check_domain(&theta)?;
        Ok(Resolved {
            model,
            functional,
            theta,
        })
    }

    /// Copy with noise scale `σ` (isotropic: `σ²I`; GOE: entry scale `σ`).
    pub fn with_noise_scale(&self, sigma: f64) -> Result<Self> {
        let mut out = self.clone();
        match &mut out.model {
            CovarianceKind::Isotropic { sigma2, .. } => *sigma2 = sigma * sigma,
            CovarianceKind::Goe { sigma: s, .. } => *s = sigma,
            _ => {
                return Err(Error::InvalidConfig(
                    "noise-scale sweeps need an isotropic or GOE model".into(),
                ))
            }
        }
        Ok(out)
    }

    pub fn with_dimension(&self, d: usize) -> Result<Self> {
        let mut out = self.clone();
        match &mut out.model {
            CovarianceKind::Isotropic { d: dd, .. } | CovarianceKind::Goe { d: dd, .. } => *dd = d,
            _ => {
                return Err(Error::InvalidConfig(
                    "dimension sweeps need an isotropic or GOE model".into(),
                ))
            }
        }
        Ok(out)
    }

    pub fn with_order(&self, k: usize) -> Self {
        let mut out = self.clone();
        out.chain.k = k;
        out
    }

    /// Noise scale `σ` of isotropic/GOE models.
    pub fn noise_scale(&self) -> Option<f64> {
        match &self.model {
            CovarianceKind::Isotropic { sigma2, .. } => Some(sigma2.sqrt()),
            CovarianceKind::Goe { sigma, .. } => Some(*sigma),
            _ => None,
        }
    }

    pub fn dimension(&self) -> Option<usize> {
        match &self.model {
            CovarianceKind::Isotropic { d, .. } | CovarianceKind::Goe { d, .. } => Some(*d),
            _ => None,
        }
    }
}
