//! Bootstrap-chain bias reduction.
//!
//! With `𝒯g(x) = E g(x + ξ)` and `ℬ = 𝒯 − ℐ`, the order-`k` estimator is the
//! Neumann partial sum `f_k = Σ_{j≤k} (−1)^j ℬ^j f`. Each `ℬ^j f(x)` is the
//! expected `j`-th order difference of `f` along the chain
//! `x, x + ξ_1, x + ξ_1 + ξ_2, …`:
//!
//! ```text
//! ℬ^j f(x) = E Σ_{t ∈ {0,1}^j} (−1)^{j−|t|} f(x + Σ_i t_i ξ_i)
//! ```
//!
//! and is estimated here by Monte Carlo over replicates of `(ξ_1, …, ξ_j)`.
//!
//! Randomness: replicates are grouped in blocks of [`REPLICATE_BLOCK`];
//! block `b` draws from substream `b` of the configured seed, replicates in
//! a block consume that stream in order. Blocks run in parallel and their
//! moments are merged in block order, so results are bitwise identical for
//! any thread count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::SmoothFunctional;
use crate::model::{CovarianceModel, Point};
use crate::rng::SeedSpec;
use crate::stats::Moments;

/// Largest supported chain order (2^k evaluations per replicate).
pub const MAX_CHAIN_ORDER: usize = 12;

/// Replicates per random substream.
pub const REPLICATE_BLOCK: usize = 64;

/// Truncation threshold on `√E‖ξ‖²` (inclusive).
pub const TRUNCATION_LEVEL: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub k: usize,
    pub n_mc: usize,
    #[serde(default)]
    pub seed: SeedSpec,
    #[serde(default = "default_truncate")]
    pub truncate: bool,
}

fn default_truncate() -> bool {
    true
}

impl ChainConfig {
    pub fn new(k: usize, n_mc: usize, seed: u64) -> Self {
        ChainConfig {
            k,
            n_mc,
            seed: SeedSpec::new(seed),
            truncate: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_order(self.k)?;
        if self.n_mc == 0 {
            return Err(Error::InvalidConfig("n_mc must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: SeedSpec) -> Self {
        self.seed = seed;
        self
    }
}

fn check_order(k: usize) -> Result<()> {
    if k > MAX_CHAIN_ORDER {
        Err(Error::ChainOrderCap {
            order: k,
            cap: MAX_CHAIN_ORDER,
        })
    } else {
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainEstimate {
    pub value: f64,
    /// Standard error of the inner Monte Carlo average.
    pub inner_se: f64,
    /// Functional evaluations performed.
    pub n_evals: u64,
}

impl ChainEstimate {
    fn exact(value: f64, n_evals: u64) -> Self {
        ChainEstimate {
            value,
            inner_se: 0.0,
            n_evals,
        }
    }

    fn from_moments(m: &Moments, evals_per_replicate: u64) -> Self {
        ChainEstimate {
            value: m.mean(),
            inner_se: m.standard_error(),
            n_evals: m.count() * evals_per_replicate,
        }
    }
}

/// Runs `n` replicates of `body` in seeded blocks and merges their moments
/// in block order.
fn replicate<S, I, B>(n: usize, seed: SeedSpec, init: I, body: B) -> Moments
where
    I: Fn() -> S + Sync,
    B: Fn(&mut S, &mut ChaCha8Rng) -> f64 + Sync,
{
    let blocks = n.div_ceil(REPLICATE_BLOCK);
    let parts: Vec<Moments> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed.stream(b as u64);
            let mut scratch = init();
            let len = REPLICATE_BLOCK.min(n - b * REPLICATE_BLOCK);
            let mut m = Moments::default();
            for _ in 0..len {
                m.push(body(&mut scratch, &mut rng));
            }
            m
        })
        .collect();
    let mut total = Moments::default();
    for p in &parts {
        total.merge(p);
    }
    total
}

/// Per-block working memory for difference evaluations.
struct DiffScratch {
    draws: Vec<Vec<f64>>,
    work: Point,
    values: Vec<f64>,
}

impl DiffScratch {
    fn new(x: &Point, order: usize) -> Self {
        DiffScratch {
            draws: vec![vec![0.0; x.len()]; order],
            work: x.clone(),
            values: vec![0.0; 1 << order],
        }
    }

    fn draw<R: Rng + ?Sized>(&mut self, model: &CovarianceModel, rng: &mut R) {
        for d in &mut self.draws {
            model.sample_noise_into(rng, d);
        }
    }

    /// `values[mask] = f(x + Σ_{i ∈ mask} ξ_{i+1})` for every subset.
    fn eval_subsets(&mut self, f: &dyn SmoothFunctional, x: &Point) {
        for mask in 0..self.values.len() {
            let w = self.work.coords_mut();
            w.copy_from_slice(x.coords());
            for (i, d) in self.draws.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    for (wc, dc) in w.iter_mut().zip(d) {
                        *wc += dc;
                    }
                }
            }
            self.values[mask] = f.eval(&self.work);
        }
    }
}

/// `Σ_{t∈{0,1}^j} (−1)^{j−|t|} values[t]` with `t` enumerated
/// lexicographically, `t_1` most significant (`t_i` ↔ bit `i−1` of the mask).
fn alternating_sum(values: &[f64], j: usize) -> f64 {
    let mut acc = 0.0;
    for n in 0..(1usize << j) {
        let mut mask = 0usize;
        for i in 0..j {
            if n >> (j - 1 - i) & 1 == 1 {
                mask |= 1 << i;
            }
        }
        let sign = if (j - mask.count_ones() as usize) % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        acc += sign * values[mask];
    }
    acc
}

fn check_inputs(f: &dyn SmoothFunctional, x: &Point, model: &CovarianceModel) -> Result<()> {
    model.check_point(x)?;
    let fx = f.eval(x);
    if !fx.is_finite() {
        return Err(Error::Numerical(format!("{} is not finite at the base point", f.name())));
    }
    Ok(())
}

/// Monte Carlo estimate of `ℬ^j f(x)`.
pub fn bop_apply(
    f: &dyn SmoothFunctional,
    x: &Point,
    j: usize,
    model: &CovarianceModel,
    n_mc: usize,
    seed: SeedSpec,
) -> Result<ChainEstimate> {
    check_order(j)?;
    check_inputs(f, x, model)?;
    if j == 0 {
        return Ok(ChainEstimate::exact(f.eval(x), 1));
    }
    let m = replicate(
        n_mc.max(1),
        seed,
        || DiffScratch::new(x, j),
        |s, rng| {
            s.draw(model, rng);
            s.eval_subsets(f, x);
            alternating_sum(&s.values, j)
        },
    );
    Ok(ChainEstimate::from_moments(&m, 1 << j))
}

/// Monte Carlo estimate of `f_k(x) = Σ_{j≤k} (−1)^j ℬ^j f(x)`.
///
/// Shared-draws coupling: each replicate draws `ξ_1, …, ξ_k` once and the
/// `j`-th difference uses the first `j` of them. The `2^k` subset values are
/// evaluated once per replicate and reused across orders.
pub fn estimate_fk(
    f: &dyn SmoothFunctional,
    x: &Point,
    cfg: &ChainConfig,
    model: &CovarianceModel,
) -> Result<ChainEstimate> {
    cfg.validate()?;
    check_inputs(f, x, model)?;
    let k = cfg.k;
    if k == 0 {
        return Ok(ChainEstimate::exact(f.eval(x), 1));
    }
    let m = replicate(
        cfg.n_mc,
        cfg.seed,
        || DiffScratch::new(x, k),
        |s, rng| {
            s.draw(model, rng);
            s.eval_subsets(f, x);
            let mut total = 0.0;
            for j in 0..=k {
                let term = alternating_sum(&s.values, j);
                total += if j % 2 == 0 { term } else { -term };
            }
            total
        },
    );
    Ok(ChainEstimate::from_moments(&m, 1 << k))
}

/// Whether `T_k` keeps the chain estimate: `√E‖ξ‖² ≤ 1/2`.
pub fn passes_truncation(strong_var: f64) -> bool {
    strong_var.sqrt() <= TRUNCATION_LEVEL
}

/// `T_k(x)`: [`estimate_fk`] when `√strong_var ≤ 1/2`, exactly 0 otherwise.
pub fn estimate_tk(
    f: &dyn SmoothFunctional,
    x: &Point,
    cfg: &ChainConfig,
    model: &CovarianceModel,
    strong_var: f64,
) -> Result<ChainEstimate> {
    if passes_truncation(strong_var) {
        estimate_fk(f, x, cfg, model)
    } else {
        cfg.validate()?;
        Ok(ChainEstimate::exact(0.0, 0))
    }
}

/// Monte Carlo evaluation of the derivative representation
/// `ℬ^k f(θ) = E f^{(k)}(θ + Σ τ_i ξ_i)(ξ_1, …, ξ_k)` with `τ_i ~ U[0,1]`
/// independent of the noise. Independent of the difference route in
/// [`bop_apply`].
pub fn oracle_bk_derivative(
    f: &dyn SmoothFunctional,
    theta: &Point,
    k: usize,
    model: &CovarianceModel,
    n_mc: usize,
    seed: SeedSpec,
) -> Result<ChainEstimate> {
    check_order(k)?;
    check_inputs(f, theta, model)?;
    if k == 0 {
        return Ok(ChainEstimate::exact(f.eval(theta), 1));
    }
    let probe: Vec<&Point> = vec![theta; k];
    if f.kth_form(theta, &probe).is_none() {
        return Err(Error::missing(f.name(), format!("an order-{k} derivative form")));
    }
    let m = replicate(
        n_mc.max(1),
        seed,
        || (vec![theta.clone(); k], theta.clone()),
        |(draws, base), rng| {
            for d in draws.iter_mut() {
                model.sample_noise_into(rng, d.coords_mut());
            }
            base.coords_mut().copy_from_slice(theta.coords());
            for d in draws.iter() {
                let tau: f64 = rng.random();
                for (b, c) in base.coords_mut().iter_mut().zip(d.coords()) {
                    *b += tau * c;
                }
            }
            let refs: Vec<&Point> = draws.iter().collect();
            f.kth_form(base, &refs).unwrap_or(f64::NAN)
        },
    );
    Ok(ChainEstimate::from_moments(&m, 1))
}

/// Sign-symmetrized estimate of `ℬ^j f(x)`.
///
/// Averages the `j`-th chain difference over all `2^j` sign flips
/// `ξ_i → ±ξ_i`, which leaves the law of the draws unchanged. Per replicate
/// this is the product of symmetric second differences
/// `½f(·+ξ_i) + ½f(·−ξ_i) − f(·)` over the `3^j` lattice points, so every
/// term odd in some `ξ_i` cancels and the replicate standard deviation is of
/// the same order as `ℬ^j f(x)` itself. Used for high-precision bias
/// estimates through `E f_k(X) − f(θ) = (−1)^k ℬ^{k+1} f(θ)`.
pub fn bop_apply_symmetrized(
    f: &dyn SmoothFunctional,
    x: &Point,
    j: usize,
    model: &CovarianceModel,
    n_mc: usize,
    seed: SeedSpec,
) -> Result<ChainEstimate> {
    check_order(j)?;
    check_inputs(f, x, model)?;
    if j == 0 {
        return Ok(ChainEstimate::exact(f.eval(x), 1));
    }
    let points = 3usize.pow(j as u32);
    let m = replicate(
        n_mc.max(1),
        seed,
        || DiffScratch::new(x, j),
        |s, rng| {
            s.draw(model, rng);
            let mut acc = 0.0;
            for code in 0..points {
                let w = s.work.coords_mut();
                w.copy_from_slice(x.coords());
                let mut weight = 1.0;
                let mut c = code;
                for d in &s.draws {
                    match c % 3 {
                        0 => weight *= -1.0,
                        1 => {
                            weight *= 0.5;
                            for (wc, dc) in w.iter_mut().zip(d) {
                                *wc += dc;
                            }
                        }
                        _ => {
                            weight *= 0.5;
                            for (wc, dc) in w.iter_mut().zip(d) {
                                *wc -= dc;
                            }
                        }
                    }
                    c /= 3;
                }
                acc += weight * f.eval(&s.work);
            }
            acc
        },
    );
    Ok(ChainEstimate::from_moments(&m, points as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::Functional;
    use crate::model::NormContext;

    fn v(c: &[f64]) -> Point {
        Point::vector(c.to_vec()).unwrap()
    }

    #[test]
    fn alternating_sum_signs() {
        // values indexed by mask over {ξ1, ξ2}
        let vals = [1.0, 10.0, 100.0, 1000.0];
        assert_eq!(alternating_sum(&vals, 0), 1.0);
        assert_eq!(alternating_sum(&vals, 1), 9.0);
        assert_eq!(alternating_sum(&vals, 2), 1.0 - 10.0 - 100.0 + 1000.0);
    }

    #[test]
    fn order_zero_is_exact() {
        let m = CovarianceModel::isotropic(1.0, 2, NormContext::Euclidean).unwrap();
        let f = Functional::squared_norm();
        let x = v(&[1.0, 2.0]);
        let e = bop_apply(&f, &x, 0, &m, 100, SeedSpec::new(0)).unwrap();
        assert_eq!((e.value, e.inner_se), (5.0, 0.0));
        let e = estimate_fk(&f, &x, &ChainConfig::new(0, 100, 0), &m).unwrap();
        assert_eq!((e.value, e.inner_se), (5.0, 0.0));
        let e = oracle_bk_derivative(&f, &x, 0, &m, 10, SeedSpec::new(0)).unwrap();
        assert_eq!(e.value, 5.0);
    }

    #[test]
    fn order_cap() {
        let m = CovarianceModel::isotropic(1.0, 2, NormContext::Euclidean).unwrap();
        let f = Functional::squared_norm();
        let x = v(&[1.0, 2.0]);
        assert!(matches!(
            bop_apply(&f, &x, 13, &m, 1, SeedSpec::new(0)),
            Err(Error::ChainOrderCap { order: 13, cap: 12 })
        ));
        assert!(estimate_fk(&f, &x, &ChainConfig::new(20, 1, 0), &m).is_err());
    }

    #[test]
    fn linear_is_annihilated() {
        let m = CovarianceModel::isotropic(0.25, 3, NormContext::Euclidean).unwrap();
        let u = v(&[1.0, -1.0, 0.5]);
        let f = Functional::linear(u.clone());
        let x = v(&[0.3, 0.2, 0.1]);
        let e = bop_apply(&f, &x, 1, &m, 20_000, SeedSpec::new(4)).unwrap();
        assert!(e.value.abs() < 5.0 * e.inner_se);
        for k in 0..4 {
            let e = estimate_fk(&f, &x, &ChainConfig::new(k, 20_000, 9), &m).unwrap();
            let target = x.pairing(&u);
            assert!((e.value - target).abs() <= 5.0 * e.inner_se + 1e-12, "k={k}: {e:?}");
        }
    }

    #[test]
    fn squared_norm_first_difference_is_trace() {
        let m = CovarianceModel::isotropic(0.04, 6, NormContext::Euclidean).unwrap();
        let f = Functional::squared_norm();
        let x = v(&[0.1, 0.2, -0.3, 0.0, 0.5, 0.2]);
        let e = bop_apply(&f, &x, 1, &m, 50_000, SeedSpec::new(8)).unwrap();
        assert!((e.value - 0.24).abs() < 5.0 * e.inner_se, "{e:?}");
        let fk = estimate_fk(&f, &x, &ChainConfig::new(1, 50_000, 8), &m).unwrap();
        assert!((fk.value - (x.pairing(&x) - 0.24)).abs() < 5.0 * fk.inner_se);
    }

    #[test]
    fn exp_linear_differences_match_mgf() {
        let sigma2: f64 = 0.09;
        let m = CovarianceModel::isotropic(sigma2, 2, NormContext::Euclidean).unwrap();
        let u = v(&[0.6, 0.8]);
        let x = v(&[0.2, -0.1]);
        let f = Functional::exp_linear(u.clone());
        let c = (sigma2 / 2.0).exp();
        for j in 1..=3 {
            let e = bop_apply(&f, &x, j, &m, 100_000, SeedSpec::new(j as u64)).unwrap();
            let target = (c - 1.0).powi(j as i32) * x.pairing(&u).exp();
            assert!((e.value - target).abs() < 5.0 * e.inner_se, "j={j}: {e:?} vs {target}");
            let s = bop_apply_symmetrized(&f, &x, j, &m, 100_000, SeedSpec::new(j as u64)).unwrap();
            assert!((s.value - target).abs() < 5.0 * s.inner_se, "j={j}: {s:?} vs {target}");
            assert!(s.inner_se < e.inner_se);
        }
        for k in 0..=3 {
            let e = estimate_fk(&f, &x, &ChainConfig::new(k, 100_000, 77), &m).unwrap();
            let geo: f64 = (0..=k).map(|j| (-(c - 1.0)).powi(j as i32)).sum();
            let target = x.pairing(&u).exp() * geo;
            assert!((e.value - target).abs() < 5.0 * e.inner_se + 1e-12, "k={k}");
        }
    }

    #[test]
    fn evaluation_counts() {
        let m = CovarianceModel::isotropic(0.01, 2, NormContext::Euclidean).unwrap();
        let f = Functional::squared_norm();
        let x = v(&[1.0, 0.0]);
        assert_eq!(estimate_fk(&f, &x, &ChainConfig::new(3, 100, 0), &m).unwrap().n_evals, 800);
        assert_eq!(bop_apply(&f, &x, 2, &m, 10, SeedSpec::new(0)).unwrap().n_evals, 40);
        assert_eq!(
            bop_apply_symmetrized(&f, &x, 2, &m, 10, SeedSpec::new(0)).unwrap().n_evals,
            90
        );
    }

    #[test]
    fn truncation_rule() {
        let f = Functional::squared_norm();
        let cfg = ChainConfig::new(1, 100, 3);
        let big = CovarianceModel::isotropic(1.0, 10, NormContext::Euclidean).unwrap();
        let x = v(&[1.0; 10]);
        let e = estimate_tk(&f, &x, &cfg, &big, big.trace()).unwrap();
        assert_eq!((e.value, e.inner_se), (0.0, 0.0));
        let small = CovarianceModel::isotropic(1e-4, 4, NormContext::Euclidean).unwrap();
        let x = v(&[1.0; 4]);
        assert_eq!(
            estimate_tk(&f, &x, &cfg, &small, small.trace()).unwrap(),
            estimate_fk(&f, &x, &cfg, &small).unwrap()
        );
        assert!(passes_truncation(0.25));
        assert!(!passes_truncation(0.25000000001));
    }

    #[test]
    fn derivative_oracle_requires_forms() {
        let m = CovarianceModel::isotropic(0.01, 2, NormContext::Euclidean).unwrap();
        let bump = Functional::bump(v(&[0.0, 0.0]), 0.5, 3.0).unwrap();
        assert!(oracle_bk_derivative(&bump, &v(&[0.1, 0.0]), 1, &m, 10, SeedSpec::new(0)).is_ok());
        assert!(matches!(
            oracle_bk_derivative(&bump, &v(&[0.1, 0.0]), 2, &m, 10, SeedSpec::new(0)),
            Err(Error::MissingCapability { .. })
        ));
    }

    #[test]
    fn derivative_oracle_squared_norm_order_one() {
        let m = CovarianceModel::isotropic(0.04, 5, NormContext::Euclidean).unwrap();
        let x = v(&[0.3, 0.1, 0.0, -0.2, 0.4]);
        let e = oracle_bk_derivative(&Functional::squared_norm(), &x, 1, &m, 50_000, SeedSpec::new(2))
            .unwrap();
        assert!((e.value - 0.2).abs() < 5.0 * e.inner_se);
    }

    #[test]
    fn poly_top_form_mean_is_zero() {
        let m = CovarianceModel::isotropic(0.09, 3, NormContext::Euclidean).unwrap();
        let u = v(&[1.0, 0.5, -0.5]);
        let f = Functional::poly_power(u, 3);
        let e = oracle_bk_derivative(&f, &v(&[0.1, 0.2, 0.3]), 3, &m, 50_000, SeedSpec::new(5)).unwrap();
        assert!(e.value.abs() < 5.0 * e.inner_se);
    }

    #[test]
    fn replicate_blocks_cover_partial_tail() {
        let m = replicate(REPLICATE_BLOCK * 2 + 5, SeedSpec::new(0), || (), |_, _| 1.0);
        assert_eq!(m.count() as usize, REPLICATE_BLOCK * 2 + 5);
    }
}
