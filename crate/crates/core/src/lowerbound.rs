//! Lower-bound constructions: a Varshamov–Gilbert packing of the hypercube,
//! the parameter set `θ_ω = (8ε/√d)ω`, the bump family
//! `f_l(θ) = Σ_ω ω_l ε^s φ(‖θ − θ_ω‖²/ε²)` and the sign-recovery experiment.
//!
//! Codewords are stored as `u64` bit patterns: bit `d−1−i` set means
//! coordinate `i` is `+1`, so numeric order is lexicographic order on
//! `{−1,+1}^d` with `−1 < +1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{estimate_fk, ChainConfig};
use crate::error::{Error, Result};
use crate::functional::{mollifier, Functional, FunctionalKind, SmoothnessMeta, BUMP_HOLDER_NORM, MOLLIFIER_AT_ZERO};
use crate::model::{CovarianceModel, Point};
use crate::rng::{mix64, SeedSpec};

pub const MIN_PACKING_DIM: usize = 8;
pub const MAX_PACKING_DIM: usize = 64;
/// Largest dimension enumerated exhaustively in lexicographic order.
pub const EXHAUSTIVE_PACKING_DIM: usize = 24;
/// Words tried per scrambled enumeration before reseeding.
const SCRAMBLED_BUDGET: u64 = 1 << 20;
const PACKING_ATTEMPTS: u64 = 8;

/// Constant `c′` of the lower-bound regime `ε² ≤ c′·min(E‖ξ‖², 1)`.
pub const REGIME_CONSTANT: f64 = 0.5;
/// Default `ε` never exceeds this (strictly below 1/8).
pub const EPSILON_CAP: f64 = 0.9 / 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Packing {
    pub d: usize,
    pub codewords: Vec<u64>,
    /// Certified minimum pairwise Hamming distance.
    pub min_distance: u32,
    /// Required distance `⌈d/8⌉`.
    pub required_distance: u32,
}

/// `2^{⌊d/8⌋}`.
pub fn packing_target(d: usize) -> usize {
    1usize << (d / 8)
}

pub fn hamming(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}

fn mask(d: usize) -> u64 {
    if d == 64 {
        u64::MAX
    } else {
        (1u64 << d) - 1
    }
}

/// Bijection of `[0, 2^d)` used to enumerate words in seeded order.
fn scramble(n: u64, d: usize, key: u64) -> u64 {
    let m = mask(d);
    let mut x = (n ^ key) & m;
    x = x.wrapping_mul(mix64(key) | 1) & m;
    x ^= x >> d.div_ceil(2);
    x = x.wrapping_mul(0x9E37_79B9_7F4A_7C15) & m;
    x ^ (x >> d.div_ceil(3))
}

/// Greedy packing of `{−1,+1}^d` with `≥ 2^{⌊d/8⌋}` words at pairwise
/// Hamming distance `≥ ⌈d/8⌉`.
///
/// For `d ≤ 24` all words are scanned in lexicographic order; above that a
/// seeded bijective scramble of `[0, 2^d)` is scanned instead, reseeding if
/// a budget is exhausted. The result is certified pairwise.
pub fn vg_packing(d: usize, seed: SeedSpec) -> Result<Packing> {
    if !(MIN_PACKING_DIM..=MAX_PACKING_DIM).contains(&d) {
        return Err(Error::InvalidConfig(format!(
            "packing dimension must be in [{MIN_PACKING_DIM}, {MAX_PACKING_DIM}], got {d}"
        )));
    }
    let target = packing_target(d);
    let required = d.div_ceil(8) as u32;
    let greedy = |words: &mut dyn Iterator<Item = u64>| {
        let mut kept: Vec<u64> = Vec::with_capacity(target);
        for w in words {
            if kept.iter().all(|&c| hamming(c, w) >= required) {
                kept.push(w);
                if kept.len() == target {
                    break;
                }
            }
        }
        kept
    };
    let mut kept = Vec::new();
    if d <= EXHAUSTIVE_PACKING_DIM {
        kept = greedy(&mut (0..1u64 << d));
    } else {
        for attempt in 0..PACKING_ATTEMPTS {
            let key = seed.substream_seed(attempt);
            kept = greedy(&mut (0..SCRAMBLED_BUDGET).map(|n| scramble(n, d, key)));
            if kept.len() == target {
                break;
            }
        }
    }
    if kept.len() < target {
        return Err(Error::Packing(format!(
            "found {} of {target} words at distance {required} in dimension {d}",
            kept.len()
        )));
    }
    let packing = Packing {
        d,
        min_distance: certify_min_distance(&kept),
        codewords: kept,
        required_distance: required,
    };
    if packing.min_distance < required {
        return Err(Error::Packing("certification failed".into()));
    }
    Ok(packing)
}

/// Exhaustive minimum pairwise Hamming distance (`u32::MAX` for < 2 words).
pub fn certify_min_distance(words: &[u64]) -> u32 {
    let mut min = u32::MAX;
    for (i, &a) in words.iter().enumerate() {
        for &b in &words[i + 1..] {
            min = min.min(hamming(a, b));
        }
    }
    min
}

impl Packing {
    /// `ω_i ∈ {−1, +1}` of codeword `w`.
    pub fn sign(&self, w: u64, i: usize) -> f64 {
        if w >> (self.d - 1 - i) & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn signs(&self, w: u64) -> Vec<f64> {
        (0..self.d).map(|i| self.sign(w, i)).collect()
    }

    /// Bit pattern of a sign vector (`x ≥ 0` ↦ `+1`).
    pub fn word_of(&self, signs: &[f64]) -> u64 {
        signs
            .iter()
            .enumerate()
            .fold(0u64, |w, (i, &s)| if s >= 0.0 { w | 1 << (self.d - 1 - i) } else { w })
    }

    /// Index of the nearest codeword in Hamming distance (lowest index on ties).
    pub fn nearest(&self, w: u64) -> usize {
        let mut best = 0;
        for (i, &c) in self.codewords.iter().enumerate() {
            if hamming(c, w) < hamming(self.codewords[best], w) {
                best = i;
            }
        }
        best
    }

    /// One `±1` word per line, entries separated by spaces.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for &w in &self.codewords {
            let line: Vec<&str> = (0..self.d)
                .map(|i| if self.sign(w, i) > 0.0 { "+1" } else { "-1" })
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Bump family on a packing.
#[derive(Clone, Debug)]
pub struct BumpFamily {
    pub packing: Packing,
    pub epsilon: f64,
    pub s: f64,
    thetas: Vec<Point>,
}

impl BumpFamily {
    pub fn new(packing: Packing, epsilon: f64, s: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.125) {
            return Err(Error::InvalidConfig(format!("ε must lie in (0, 1/8), got {epsilon}")));
        }
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidConfig(format!("s must be positive, got {s}")));
        }
        let scale = 8.0 * epsilon / (packing.d as f64).sqrt();
        let thetas: Vec<Point> = packing
            .codewords
            .iter()
            .map(|&w| Point::vector(packing.signs(w).iter().map(|x| scale * x).collect()))
            .collect::<Result<_>>()?;
        for (i, a) in thetas.iter().enumerate() {
            for b in &thetas[i + 1..] {
                let dist = a.sub(b).pairing(&a.sub(b)).sqrt();
                if dist < 2.0 * epsilon {
                    return Err(Error::Packing(format!(
                        "bump supports overlap: centers {dist} apart, radius {epsilon}"
                    )));
                }
            }
        }
        Ok(BumpFamily {
            packing,
            epsilon,
            s,
            thetas,
        })
    }

    pub fn d(&self) -> usize {
        self.packing.d
    }

    /// `θ_ω` for codeword index `i`.
    pub fn theta(&self, i: usize) -> &Point {
        &self.thetas[i]
    }

    /// `θ_ω` for any sign vector `ω ∈ {−1,+1}^d`.
    pub fn theta_of_signs(&self, signs: &[f64]) -> Point {
        let scale = 8.0 * self.epsilon / (self.d() as f64).sqrt();
        Point::zeros(self.d()).with_coords(signs.iter().map(|x| scale * x).collect())
    }

    /// `ε^s φ(0)`, the common magnitude of every `f_l(θ_ω)`.
    pub fn peak(&self) -> f64 {
        self.epsilon.powf(self.s) * MOLLIFIER_AT_ZERO
    }

    fn bump_values(&self, x: &[f64]) -> Vec<f64> {
        let e2 = self.epsilon * self.epsilon;
        let amp = self.epsilon.powf(self.s);
        self.thetas
            .iter()
            .map(|c| {
                let r2: f64 = c.coords().iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                if r2 >= e2 {
                    0.0
                } else {
                    amp * mollifier(r2 / e2)
                }
            })
            .collect()
    }

    /// `(f_1(x), …, f_d(x))`.
    pub fn eval_all(&self, x: &[f64]) -> Vec<f64> {
        let b = self.bump_values(x);
        (0..self.d())
            .map(|l| {
                self.packing
                    .codewords
                    .iter()
                    .zip(&b)
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(&w, &v)| self.packing.sign(w, l) * v)
                    .sum()
            })
            .collect()
    }

    /// `f_l` as a standalone functional.
    pub fn functional(&self, l: usize) -> Result<Functional> {
        let weights = self
            .packing
            .codewords
            .iter()
            .map(|&w| self.packing.sign(w, l))
            .collect();
        Functional::new(
            format!("bump_family_{l}"),
            FunctionalKind::BumpSum {
                centers: self.thetas.clone(),
                weights,
                epsilon: self.epsilon,
                s: self.s,
            },
            SmoothnessMeta::new(self.s, 0.0, BUMP_HOLDER_NORM)?,
        )
    }

    /// `τ(θ_i, θ_j) = ((1/d) Σ_l (f_l(θ_i) − f_l(θ_j))²)^{1/2}`.
    pub fn tau_distance(&self, i: usize, j: usize) -> f64 {
        let a = self.eval_all(self.thetas[i].coords());
        let b = self.eval_all(self.thetas[j].coords());
        let ss: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        (ss / self.d() as f64).sqrt()
    }
}

/// Default `ε = min(√(c′·min(E‖ξ‖², 1)), 0.9/8)`; the cap when the noise vanishes.
pub fn default_epsilon(strong_var: f64) -> f64 {
    let e = (REGIME_CONSTANT * strong_var.min(1.0)).sqrt();
    if e > 0.0 {
        e.min(EPSILON_CAP)
    } else {
        EPSILON_CAP
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimationRule {
    PlugIn,
    Chain { k: usize, n_mc: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoding {
    /// `θ̃ = θ_{ω̃}` for the raw sign vector.
    #[default]
    Raw,
    /// Project `ω̃` to the nearest codeword first.
    Nearest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodewordRisk {
    pub codeword: usize,
    /// `E‖θ̃ − θ‖²`
    pub theta_risk: f64,
    /// `max_l E(T̃_l − f_l(θ))²`
    pub functional_risk: f64,
    /// `max_l E(T_l − f_l(θ))²` of the underlying estimator.
    pub estimator_risk: f64,
    /// `E h(ω̃, ω)`
    pub mean_hamming: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub d: usize,
    pub epsilon: f64,
    pub s: f64,
    pub n_codewords: usize,
    pub n_rep: usize,
    pub strong_variance: f64,
    /// `ε² ≤ c′·min(E‖ξ‖², 1)`.
    pub in_lower_bound_regime: bool,
    pub per_codeword: Vec<CodewordRisk>,
    pub max_theta_risk: f64,
    pub max_functional_risk: f64,
    /// Largest relative gap, over realizations, between `‖θ̃−θ‖²` and
    /// `(64/(φ(0)²ε^{2(s−1)}))·(1/d)Σ_l(T̃_l − f_l(θ))²`.
    pub identity_max_rel_dev: f64,
}

struct Realization {
    theta_loss: f64,
    tilde_sq: Vec<f64>,
    est_sq: Vec<f64>,
    hamming: u32,
    identity_dev: f64,
}

/// For every codeword `ω`, simulates `X = θ_ω + ξ`, estimates each `f_l`,
/// forms `ω̃_l = sign(T_l)` (`T_l ≥ 0 ↦ +1`), decodes `θ̃` and records
/// the risks. Realization `r` of codeword `i` draws from
/// `seed.child(i).stream(r)`; chain estimates use `seed.child(i).child(r)`.
pub fn recovery_experiment(
    family: &BumpFamily,
    model: &CovarianceModel,
    rule: EstimationRule,
    decoding: Decoding,
    n_rep: usize,
    seed: SeedSpec,
) -> Result<RecoveryReport> {
    let d = family.d();
    if model.dim() != d || model.matrix_dim().is_some() {
        return Err(Error::InvalidConfig(format!(
            "model must be a {d}-dimensional vector model"
        )));
    }
    if n_rep == 0 {
        return Err(Error::InvalidConfig("n_rep must be at least 1".into()));
    }
    let functionals: Vec<Functional> = match rule {
        EstimationRule::PlugIn => Vec::new(),
        EstimationRule::Chain { k, n_mc } => {
            ChainConfig::new(k, n_mc, 0).validate()?;
            (0..d).map(|l| family.functional(l)).collect::<Result<_>>()?
        }
    };
    let peak = family.peak();
    let id_factor = 64.0 / (MOLLIFIER_AT_ZERO.powi(2) * family.epsilon.powf(2.0 * (family.s - 1.0)));

    let realize = |i: usize, r: usize| -> Result<Realization> {
        let theta = family.theta(i);
        let truth = family.eval_all(theta.coords());
        let mut rng = seed.child(i as u64).stream(r as u64);
        let noise = model.sample_noise(&mut rng);
        let x = theta.add(&noise);
        let est: Vec<f64> = match rule {
            EstimationRule::PlugIn => family.eval_all(x.coords()),
            EstimationRule::Chain { k, n_mc } => functionals
                .iter()
                .enumerate()
                .map(|(l, f)| {
                    let cfg = ChainConfig::new(k, n_mc, 0)
                        .with_seed(seed.child(i as u64).child(r as u64).child(l as u64));
                    estimate_fk(f, &x, &cfg, model).map(|e| e.value)
                })
                .collect::<Result<_>>()?,
        };
        let mut signs: Vec<f64> = est.iter().map(|&t| if t >= 0.0 { 1.0 } else { -1.0 }).collect();
        if decoding == Decoding::Nearest {
            let j = family.packing.nearest(family.packing.word_of(&signs));
            signs = family.packing.signs(family.packing.codewords[j]);
        }
        let theta_tilde = family.theta_of_signs(&signs);
        let diff = theta_tilde.sub(theta);
        let theta_loss = diff.pairing(&diff);
        let tilde_sq: Vec<f64> = signs.iter().zip(&truth).map(|(s, f)| (s * peak - f).powi(2)).collect();
        let est_sq: Vec<f64> = est.iter().zip(&truth).map(|(t, f)| (t - f).powi(2)).collect();
        let rhs = id_factor * tilde_sq.iter().sum::<f64>() / d as f64;
        let scale = theta_loss.abs().max(rhs.abs());
        let identity_dev = if scale == 0.0 {
            0.0
        } else {
            (theta_loss - rhs).abs() / scale
        };
        let hamming = hamming(family.packing.word_of(&signs), family.packing.codewords[i]);
        Ok(Realization {
            theta_loss,
            tilde_sq,
            est_sq,
            hamming,
            identity_dev,
        })
    };

    let mut per_codeword = Vec::with_capacity(family.packing.codewords.len());
    let mut identity_max_rel_dev: f64 = 0.0;
    for i in 0..family.packing.codewords.len() {
        let reals: Vec<Realization> = (0..n_rep)
            .into_par_iter()
            .map(|r| realize(i, r))
            .collect::<Result<_>>()?;
        let n = n_rep as f64;
        let mut tilde = vec![0.0; d];
        let mut estr = vec![0.0; d];
        let (mut theta_risk, mut ham) = (0.0, 0.0);
        for re in &reals {
            theta_risk += re.theta_loss / n;
            ham += re.hamming as f64 / n;
            for l in 0..d {
                tilde[l] += re.tilde_sq[l] / n;
                estr[l] += re.est_sq[l] / n;
            }
            identity_max_rel_dev = identity_max_rel_dev.max(re.identity_dev);
        }
        per_codeword.push(CodewordRisk {
            codeword: i,
            theta_risk,
            functional_risk: tilde.iter().cloned().fold(0.0, f64::max),
            estimator_risk: estr.iter().cloned().fold(0.0, f64::max),
            mean_hamming: ham,
        });
    }
    let strong_variance = model.trace();
    Ok(RecoveryReport {
        d,
        epsilon: family.epsilon,
        s: family.s,
        n_codewords: family.packing.codewords.len(),
        n_rep,
        strong_variance,
        in_lower_bound_regime: family.epsilon.powi(2) <= REGIME_CONSTANT * strong_variance.min(1.0),
        max_theta_risk: per_codeword.iter().map(|c| c.theta_risk).fold(0.0, f64::max),
        max_functional_risk: per_codeword.iter().map(|c| c.functional_risk).fold(0.0, f64::max),
        per_codeword,
        identity_max_rel_dev,
    })
}
