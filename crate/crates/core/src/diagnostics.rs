//! Outer Monte Carlo experiments over `X = θ + ξ`.
//!
//! Seeds: for master seed `S`, outer noise of replicate `r` comes from
//! `S.child(0).stream(r)`, its inner chain from `S.child(1).child(r)`,
//! the strong-variance estimate from `S.child(2)` and the bias oracle from
//! `S.child(3)`. Replicates run in parallel and are aggregated in index
//! order, so reports do not depend on the thread count.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{self, passes_truncation, ChainConfig};
use crate::error::{Error, Result};
use crate::functional::{sigma_f_xi, SmoothFunctional};
use crate::model::{CovarianceModel, Point, DEFAULT_STRONG_VARIANCE_MC};
use crate::rng::SeedSpec;
use crate::spec::ExperimentSpec;
use crate::stats::{normal_cdf, ks_distance, ols_slope, Moments};

/// Smallest accepted number of outer replications.
pub const MIN_OUTER_REPS: usize = 100;

/// Smallest sample accepted by [`normality_test`].
pub const MIN_NORMALITY_SAMPLES: usize = 1000;

/// Smallest number of axis points in a sweep.
pub const MIN_SWEEP_POINTS: usize = 4;

/// A point counts as resolved when `|bias| > 2·SE`.
pub const RESOLVED_SE_MULTIPLE: f64 = 2.0;

/// One outer experiment.
#[derive(Clone, Copy)]
pub struct Experiment<'a> {
    pub functional: &'a dyn SmoothFunctional,
    pub model: &'a CovarianceModel,
    pub theta: &'a Point,
    /// `chain.seed` is ignored; inner seeds derive from `seed`.
    pub chain: ChainConfig,
    pub n_rep: usize,
    pub seed: SeedSpec,
    /// Replicates of the sign-symmetrized `ℬ^{k+1}f(θ)` estimate; 0 disables it.
    pub bias_oracle_reps: usize,
    pub strong_variance_mc: usize,
}

impl<'a> Experiment<'a> {
    pub fn new(
        functional: &'a dyn SmoothFunctional,
        model: &'a CovarianceModel,
        theta: &'a Point,
        chain: ChainConfig,
        n_rep: usize,
        seed: SeedSpec,
    ) -> Self {
        Experiment {
            functional,
            model,
            theta,
            chain,
            n_rep,
            seed,
            bias_oracle_reps: 0,
            strong_variance_mc: DEFAULT_STRONG_VARIANCE_MC,
        }
    }

    pub fn with_bias_oracle(mut self, reps: usize) -> Self {
        self.bias_oracle_reps = reps;
        self
    }

    fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        if self.n_rep < MIN_OUTER_REPS {
            return Err(Error::InvalidConfig(format!(
                "n_rep must be at least {MIN_OUTER_REPS}, got {}",
                self.n_rep
            )));
        }
        if self.strong_variance_mc == 0 {
            return Err(Error::InvalidConfig("strong_variance_mc must be at least 1".into()));
        }
        self.model.check_point(self.theta)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub functional: String,
    pub k: usize,
    pub n_mc: usize,
    pub n_rep: usize,
    /// `f(θ)`.
    pub truth: f64,
    pub bias: f64,
    pub bias_se: f64,
    /// Population variance of the estimates, so `mse = bias² + variance`.
    pub variance: f64,
    pub variance_se: f64,
    pub mse: f64,
    pub mse_se: f64,
    pub sigma_f_xi: f64,
    /// `mse / σ²_{f,ξ}(θ)`; absent when `σ_{f,ξ}(θ) = 0`.
    pub efficiency_ratio: Option<f64>,
    /// KS distance of the normalized errors to `N(0,1)`.
    pub ks_statistic: Option<f64>,
    /// Set when normalized diagnostics were skipped, with the reason.
    pub normalized_skipped: Option<String>,
    /// Mean inner Monte Carlo standard error of the per-draw estimates.
    pub mean_inner_se: f64,
    /// Whether the truncation rule zeroed the estimator.
    pub truncated: bool,
    pub weak_variance: f64,
    pub strong_variance: f64,
    pub strong_variance_se: f64,
    /// `(−1)^k ℬ^{k+1}f(θ)` from the symmetrized oracle (`−f(θ)` when truncated).
    pub chain_bias: Option<f64>,
    pub chain_bias_se: Option<f64>,
    #[serde(skip)]
    pub runtime_secs: f64,
    /// `(T_k(X_r) − f(θ)) / σ_{f,ξ}(θ)` in replicate order; empty when skipped.
    #[serde(skip)]
    pub normalized_errors: Vec<f64>,
}

/// Runs `n_rep` outer replications of `T_k` (of `f_k` when
/// `chain.truncate` is off).
pub fn run_experiment(exp: &Experiment<'_>) -> Result<ExperimentReport> {
    exp.validate()?;
    let start = Instant::now();
    let f = exp.functional;
    let k = exp.chain.k;
    let truth = f.eval(exp.theta);
    if !truth.is_finite() {
        return Err(Error::Numerical(format!("{} is not finite at θ", f.name())));
    }
    let strong = exp
        .model
        .strong_variance(exp.strong_variance_mc, &mut exp.seed.child(2).stream(0));
    let truncated = exp.chain.truncate && !passes_truncation(strong.value);

    let draws: Vec<(f64, f64)> = (0..exp.n_rep)
        .into_par_iter()
        .map(|r| {
            let mut rng = exp.seed.child(0).stream(r as u64);
            let mut x = exp.theta.clone();
            let noise = exp.model.sample_noise(&mut rng);
            for (a, b) in x.coords_mut().iter_mut().zip(noise.coords()) {
                *a += b;
            }
            let cfg = exp.chain.with_seed(exp.seed.child(1).child(r as u64));
            let est = if exp.chain.truncate {
                chain::estimate_tk(f, &x, &cfg, exp.model, strong.value)
            } else {
                chain::estimate_fk(f, &x, &cfg, exp.model)
            };
            est.map(|e| (e.value, e.inner_se))
        })
        .collect::<Result<_>>()?;

    let errors: Vec<f64> = draws.iter().map(|(v, _)| v - truth).collect();
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::Numerical("non-finite estimate in outer replications".into()));
    }
    let n = errors.len() as f64;
    let err_moments: Moments = errors.iter().copied().collect();
    let bias = err_moments.mean();
    let bias_se = err_moments.standard_error();
    let centered2: Vec<f64> = errors.iter().map(|e| (e - bias).powi(2)).collect();
    let variance = centered2.iter().sum::<f64>() / n;
    let m4 = centered2.iter().map(|c| c * c).sum::<f64>() / n;
    let variance_se = ((m4 - variance * variance).max(0.0) / n).sqrt();
    let sq: Moments = errors.iter().map(|e| e * e).collect();
    let mse = sq.mean();
    let mse_se = sq.standard_error();
    let mean_inner_se = draws.iter().map(|(_, s)| s).sum::<f64>() / n;

    let sigma = sigma_f_xi(f, exp.model, exp.theta)?;
    let efficiency_ratio = (sigma > 0.0).then(|| mse / (sigma * sigma));
    let (ks_statistic, normalized_errors, normalized_skipped) = if sigma <= 0.0 {
        (None, Vec::new(), Some("sigma_f_xi is zero".to_string()))
    } else if errors.len() < MIN_NORMALITY_SAMPLES {
        (
            None,
            Vec::new(),
            Some(format!("fewer than {MIN_NORMALITY_SAMPLES} replications")),
        )
    } else {
        let z: Vec<f64> = errors.iter().map(|e| e / sigma).collect();
        (Some(normality_test(&z)?), z, None)
    };

    let (chain_bias, chain_bias_se) = if truncated {
        (Some(-truth), Some(0.0))
    } else if exp.bias_oracle_reps > 0 {
        let b = chain::bop_apply_symmetrized(
            f,
            exp.theta,
            k + 1,
            exp.model,
            exp.bias_oracle_reps,
            exp.seed.child(3),
        )?;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        (Some(sign * b.value), Some(b.inner_se))
    } else {
        (None, None)
    };

    Ok(ExperimentReport {
        functional: f.name().to_string(),
        k,
        n_mc: exp.chain.n_mc,
        n_rep: exp.n_rep,
        truth,
        bias,
        bias_se,
        variance,
        variance_se,
        mse,
        mse_se,
        sigma_f_xi: sigma,
        efficiency_ratio,
        ks_statistic,
        normalized_skipped,
        mean_inner_se,
        truncated,
        weak_variance: exp.model.weak_variance(),
        strong_variance: strong.value,
        strong_variance_se: strong.se,
        chain_bias,
        chain_bias_se,
        runtime_secs: start.elapsed().as_secs_f64(),
        normalized_errors,
    })
}

/// Two-sided KS distance of `samples` to the standard normal CDF.
pub fn normality_test(samples: &[f64]) -> Result<f64> {
    if samples.len() < MIN_NORMALITY_SAMPLES {
        return Err(Error::Precondition(format!(
            "normality test needs at least {MIN_NORMALITY_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    Ok(ks_distance(samples, normal_cdf))
}

/// Axes of a scaling sweep. Exactly one of `sigma` / `d` is the swept
/// axis; `k` lists the orders compared on it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<usize>>,
    /// Ties the dimension to the noise scale: `d = round(σ^{−2α})`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_alpha: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sigma: f64,
    pub d: usize,
    pub k: usize,
    /// `√E‖ξ‖²`
    pub nu: f64,
    pub strong_var: f64,
    pub bias: f64,
    pub bias_se: f64,
    pub chain_bias: Option<f64>,
    pub chain_bias_se: Option<f64>,
    pub variance: f64,
    pub mse: f64,
    pub mse_se: f64,
    pub sigma_f_xi: f64,
    pub efficiency_ratio: Option<f64>,
    pub ks: Option<f64>,
}

impl SweepRow {
    /// Column names of [`SweepRow::values`], in order.
    pub const COLUMNS: [&'static str; 15] = [
        "sigma",
        "d",
        "k",
        "nu",
        "strong_var",
        "bias",
        "bias_se",
        "chain_bias",
        "chain_bias_se",
        "variance",
        "mse",
        "mse_se",
        "sigma_f_xi",
        "efficiency_ratio",
        "ks",
    ];

    /// Numeric cells in [`SweepRow::COLUMNS`] order; `None` for absent values.
    pub fn values(&self) -> [Option<f64>; 15] {
        [
            Some(self.sigma),
            Some(self.d as f64),
            Some(self.k as f64),
            Some(self.nu),
            Some(self.strong_var),
            Some(self.bias),
            Some(self.bias_se),
            self.chain_bias,
            self.chain_bias_se,
            Some(self.variance),
            Some(self.mse),
            Some(self.mse_se),
            Some(self.sigma_f_xi),
            self.efficiency_ratio,
            self.ks,
        ]
    }
}

/// A log-log slope; `reliable` is false when at least half of the points
/// are not resolved from zero or fewer than two points remain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: Option<f64>,
    pub points_used: usize,
    pub reliable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub k: usize,
    pub bias_vs_nu: SlopeFit,
    pub bias_vs_sigma: SlopeFit,
    pub chain_bias_vs_nu: Option<SlopeFit>,
    pub chain_bias_vs_sigma: Option<SlopeFit>,
    pub mse_vs_sigma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub slopes: Vec<SlopeSummary>,
}

/// Fits `log|y|` against `log x` over points with `|y| > 2·se`.
pub fn fit_bias_slope(x: &[f64], y: &[f64], se: &[f64]) -> SlopeFit {
    let keep: Vec<usize> = (0..x.len())
        .filter(|&i| y[i] != 0.0 && y[i].abs() > RESOLVED_SE_MULTIPLE * se[i] && x[i] > 0.0)
        .collect();
    let unresolved = x.len() - keep.len();
    let lx: Vec<f64> = keep.iter().map(|&i| x[i].ln()).collect();
    let ly: Vec<f64> = keep.iter().map(|&i| y[i].abs().ln()).collect();
    let slope = ols_slope(&lx, &ly).map(|(b, _)| b);
    SlopeFit {
        slope,
        points_used: keep.len(),
        reliable: slope.is_some() && 2 * unresolved < x.len(),
    }
}

/// Runs `base` at every axis point (σ or `d`, times each `k`) and fits
/// bias and MSE scaling slopes per `k`.
pub fn sweep_scaling(base: &ExperimentSpec, axes: &SweepAxes, seed: SeedSpec) -> Result<SweepReport> {
    let specs = sweep_points(base, axes)?;
    let resolved: Vec<_> = specs.iter().map(|s| s.resolve().map(|r| (s, r))).collect::<Result<_>>()?;
    for (s, r) in &resolved {
        let sv = r
            .model
            .strong_variance(s.strong_variance_mc, &mut seed.child(0).stream(0));
        if s.chain.truncate && !passes_truncation(sv.value) {
            return Err(Error::Precondition(format!(
                "sweep point σ={:?}, d={:?} is outside the truncation-passing regime (E‖ξ‖² = {})",
                s.noise_scale(),
                s.dimension(),
                sv.value
            )));
        }
    }
    let mut rows = Vec::with_capacity(resolved.len());
    for (i, (s, r)) in resolved.iter().enumerate() {
        let exp = Experiment {
            functional: &r.functional,
            model: &r.model,
            theta: &r.theta,
            chain: s.chain,
            n_rep: s.n_rep,
            seed: seed.child(1).child(i as u64),
            bias_oracle_reps: s.bias_oracle_reps,
            strong_variance_mc: s.strong_variance_mc,
        };
        let rep = run_experiment(&exp)?;
        rows.push(SweepRow {
            sigma: s.noise_scale().unwrap_or(f64::NAN),
            d: s.dimension().unwrap_or(r.model.dim()),
            k: s.chain.k,
            nu: rep.strong_variance.sqrt(),
            strong_var: rep.strong_variance,
            bias: rep.bias,
            bias_se: rep.bias_se,
            chain_bias: rep.chain_bias,
            chain_bias_se: rep.chain_bias_se,
            variance: rep.variance,
            mse: rep.mse,
            mse_se: rep.mse_se,
            sigma_f_xi: rep.sigma_f_xi,
            efficiency_ratio: rep.efficiency_ratio,
            ks: rep.ks_statistic,
        });
    }
    let slopes = summarize_slopes(&rows);
    Ok(SweepReport { rows, slopes })
}

fn summarize_slopes(rows: &[SweepRow]) -> Vec<SlopeSummary> {
    let mut ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
    ks.dedup();
    ks.sort_unstable();
    ks.dedup();
    ks.into_iter()
        .map(|k| {
            let g: Vec<&SweepRow> = rows.iter().filter(|r| r.k == k).collect();
            let col = |f: fn(&SweepRow) -> f64| g.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let nu = col(|r| r.nu);
            let sigma = col(|r| r.sigma);
            let bias = col(|r| r.bias);
            let bias_se = col(|r| r.bias_se);
            let chain = g.iter().all(|r| r.chain_bias.is_some()).then(|| {
                (
                    col(|r| r.chain_bias.unwrap_or(0.0)),
                    col(|r| r.chain_bias_se.unwrap_or(0.0)),
                )
            });
            let lmse: Vec<f64> = g.iter().map(|r| r.mse.ln()).collect();
            let lsig: Vec<f64> = sigma.iter().map(|s| s.ln()).collect();
            let mse_vs_sigma = if lmse.iter().chain(&lsig).all(|v| v.is_finite()) {
                ols_slope(&lsig, &lmse).map(|(b, _)| b)
            } else {
                None
            };
            SlopeSummary {
                k,
                bias_vs_nu: fit_bias_slope(&nu, &bias, &bias_se),
                bias_vs_sigma: fit_bias_slope(&sigma, &bias, &bias_se),
                chain_bias_vs_nu: chain.as_ref().map(|(b, s)| fit_bias_slope(&nu, b, s)),
                chain_bias_vs_sigma: chain.as_ref().map(|(b, s)| fit_bias_slope(&sigma, b, s)),
                mse_vs_sigma,
            }
        })
        .collect()
}

/// Expands the sweep axes into one spec per point, `k`-major.
pub fn sweep_points(base: &ExperimentSpec, axes: &SweepAxes) -> Result<Vec<ExperimentSpec>> {
    let ks = axes.k.clone().unwrap_or_else(|| vec![base.chain.k]);
    if ks.is_empty() {
        return Err(Error::InvalidConfig("sweep k axis is empty".into()));
    }
    let mut along: Vec<ExperimentSpec> = Vec::new();
    match (&axes.sigma, &axes.d) {
        (Some(sig), None) => {
            for &s in sig {
                if !(s.is_finite() && s >= 0.0) {
                    return Err(Error::InvalidConfig(format!("invalid noise scale {s}")));
                }
                let mut p = base.with_noise_scale(s)?;
                if let Some(alpha) = axes.d_alpha {
                    let d = s.powf(-2.0 * alpha).round();
                    if !(d.is_finite() && d >= 1.0) {
                        return Err(Error::InvalidConfig(format!(
                            "d = round(σ^(-2α)) is not a positive dimension at σ = {s}"
                        )));
                    }
                    p = p.with_dimension(d as usize)?;
                }
                along.push(p);
            }
        }
        (None, Some(ds)) => {
            if axes.d_alpha.is_some() {
                return Err(Error::InvalidConfig("d_alpha needs a sigma axis".into()));
            }
            for &d in ds {
                along.push(base.with_dimension(d)?);
            }
        }
        _ => {
            return Err(Error::InvalidConfig(
                "a sweep needs exactly one of the sigma and d axes".into(),
            ))
        }
    }
    if along.len() < MIN_SWEEP_POINTS {
        return Err(Error::Precondition(format!(
            "a sweep needs at least {MIN_SWEEP_POINTS} axis points, got {}",
            along.len()
        )));
    }
    Ok(ks
        .iter()
        .flat_map(|&k| along.iter().map(move |p| p.with_order(k)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::Functional;
    use crate::model::NormContext;

    fn spec(json: &str) -> ExperimentSpec {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn normality_reference_cases() {
        let mut rng = SeedSpec::new(1).stream(0);
        let z: Vec<f64> = (0..10_000)
            .map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng))
            .collect();
        assert!(normality_test(&z).unwrap() < 0.025);
        let shifted: Vec<f64> = z.iter().map(|x| x + 1.0).collect();
        let target = normal_cdf(0.5) - normal_cdf(-0.5);
        assert!((normality_test(&shifted).unwrap() - target).abs() < 0.02);
        assert!(normality_test(&[1.0; 1000]).unwrap() >= 0.5);
        assert!(matches!(normality_test(&[0.0; 999]), Err(Error::Precondition(_))));
    }

    #[test]
    fn linear_is_exactly_efficient() {
        let model = CovarianceModel::isotropic(0.01, 4, NormContext::Euclidean).unwrap();
        let u = Point::vector(vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let f = Functional::linear(u);
        let theta = Point::vector(vec![1.0, 0.0, -1.0, 2.0]).unwrap();
        // Plug-in: no inner Monte Carlo noise.
        let exp = Experiment::new(&f, &model, &theta, ChainConfig::new(0, 1, 0), 10_000, SeedSpec::new(3));
        let rep = run_experiment(&exp).unwrap();
        assert!((rep.efficiency_ratio.unwrap() - 1.0).abs() < 0.05, "{rep:?}");
        assert!(rep.ks_statistic.unwrap() < 0.02);
        assert!((rep.mse - (rep.bias.powi(2) + rep.variance)).abs() <= 1e-9 * rep.mse);
        assert!(!rep.truncated);
    }

    #[test]
    fn too_few_reps_rejected() {
        let model = CovarianceModel::isotropic(0.01, 2, NormContext::Euclidean).unwrap();
        let f = Functional::squared_norm();
        let theta = model.origin();
        let exp = Experiment::new(&f, &model, &theta, ChainConfig::new(1, 4, 0), 99, SeedSpec::new(0));
        assert!(matches!(run_experiment(&exp), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn degenerate_sigma_skips_normalized_diagnostics() {
        let model = CovarianceModel::isotropic(0.01, 3, NormContext::Euclidean).unwrap();
        let f = Functional::squared_norm();
        let theta = model.origin();
        let exp = Experiment::new(&f, &model, &theta, ChainConfig::new(1, 4, 0), 200, SeedSpec::new(0));
        let rep = run_experiment(&exp).unwrap();
        assert_eq!(rep.sigma_f_xi, 0.0);
        assert!(rep.ks_statistic.is_none() && rep.efficiency_ratio.is_none());
        assert!(rep.normalized_skipped.is_some());
    }

    #[test]
    fn truncation_makes_chain_bias_exact() {
        let model = CovarianceModel::isotropic(1.0, 3, NormContext::Euclidean).unwrap();
        let u = Point::vector(vec![1.0, 0.0, 0.0]).unwrap();
        let f = Functional::exp_linear(u);
        let theta = model.origin();
        let exp = Experiment::new(&f, &model, &theta, ChainConfig::new(2, 4, 0), 100, SeedSpec::new(0))
            .with_bias_oracle(100);
        let rep = run_experiment(&exp).unwrap();
        assert!(rep.truncated);
        assert_eq!(rep.bias, -1.0);
        assert_eq!(rep.chain_bias, Some(-1.0));
        assert_eq!(rep.variance, 0.0);
    }

    #[test]
    fn slope_fit_flags_unresolved_points() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        let fit = fit_bias_slope(&x, &y, &[0.0; 4]);
        assert!((fit.slope.unwrap() - 2.0).abs() < 1e-12 && fit.reliable);
        let fit = fit_bias_slope(&x, &[1e-3, -1e-3, 2e-3, 1.0], &[1.0; 4]);
        assert!(!fit.reliable);
        assert_eq!(fit.points_used, 0);
    }

    #[test]
    fn sweep_axis_rules() {
        let base = spec(
            r#"{"model":{"kind":"isotropic","sigma2":0.01,"d":5},
                "functional":{"kind":"exp_linear","u":{"gen":"basis","index":0}},
                "chain":{"k":1,"n_mc":4},"n_rep":100}"#,
        );
        let axes = SweepAxes {
            sigma: Some(vec![0.1, 0.05, 0.025, 0.0125]),
            k: Some(vec![0, 2]),
            d_alpha: Some(0.5),
            ..Default::default()
        };
        let pts = sweep_points(&base, &axes).unwrap();
        let dims: Vec<_> = pts.iter().map(|p| (p.chain.k, p.dimension().unwrap())).collect();
        assert_eq!(
            dims,
            vec![(0, 10), (0, 20), (0, 40), (0, 80), (2, 10), (2, 20), (2, 40), (2, 80)]
        );
        let short = SweepAxes {
            sigma: Some(vec![0.1, 0.2, 0.3]),
            ..Default::default()
        };
        assert!(matches!(sweep_points(&base, &short), Err(Error::Precondition(_))));
        let both = SweepAxes {
            sigma: Some(vec![0.1; 4]),
            d: Some(vec![1; 4]),
            ..Default::default()
        };
        assert!(matches!(sweep_points(&base, &both), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn sweep_rejects_truncated_points() {
        let base = spec(
            r#"{"model":{"kind":"isotropic","sigma2":0.01,"d":5},
                "functional":{"kind":"linear","u":{"gen":"basis","index":0}},
                "chain":{"k":1,"n_mc":2},"n_rep":100}"#,
        );
        let axes = SweepAxes {
            sigma: Some(vec![0.1, 0.2, 0.3, 0.5]),
            ..Default::default()
        };
        assert!(matches!(
            sweep_scaling(&base, &axes, SeedSpec::new(0)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn linear_sweep_is_unreliable() {
        let base = spec(
            r#"{"model":{"kind":"isotropic","sigma2":0.01,"d":3},
                "functional":{"kind":"linear","u":{"gen":"basis","index":0}},
                "chain":{"k":1,"n_mc":2},"n_rep":400}"#,
        );
        let axes = SweepAxes {
            sigma: Some(vec![0.05, 0.07, 0.1, 0.14, 0.2]),
            ..Default::default()
        };
        let rep = sweep_scaling(&base, &axes, SeedSpec::new(5)).unwrap();
        assert_eq!(rep.rows.len(), 5);
        assert!(!rep.slopes[0].bias_vs_sigma.reliable);
    }
}
