use std::path::{Path, PathBuf};

use serde::Serialize;
use shiftfunc_core::diagnostics::{
    run_experiment, sweep_scaling, Experiment, ExperimentReport, SlopeFit, SweepReport, SweepRow,
};
use shiftfunc_core::functional::MOLLIFIER_AT_ZERO;
use shiftfunc_core::lowerbound::{
    default_epsilon, hamming, recovery_experiment, vg_packing, BumpFamily, RecoveryReport,
};
use shiftfunc_core::stats::normal_cdf;
use shiftfunc_core::{CovarianceModel, Error, NormContext, SeedSpec};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{cell, num, Format, Outputs, RunManifest};
use crate::svg::{Chart, Series};

/// A loaded configuration plus the run-level options.
pub struct Run {
    pub command: &'static str,
    pub config_path: PathBuf,
    pub config: RunConfig,
    pub seed: SeedSpec,
    pub out_dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Run {
    /// Loads the config and applies a `--seed` override.
    pub fn load(
        command: &'static str,
        config_path: &Path,
        seed: Option<u64>,
        out_dir: PathBuf,
        formats: Vec<Format>,
    ) -> Result<Self, CliError> {
        let mut config = RunConfig::load(config_path)?;
        if seed.is_some() {
            config.seed = seed;
        }
        let seed = config.seed();
        config.seed = Some(seed.master_seed);
        Ok(Run {
            command,
            config_path: config_path.to_path_buf(),
            config,
            seed,
            out_dir,
            formats,
        })
    }

    fn outputs(&self) -> Outputs {
        Outputs::new(self.out_dir.clone(), &self.formats)
    }

    fn manifest(&self) -> RunManifest {
        RunManifest {
            tool: "shiftfunc",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command.to_string(),
            config_path: self.config_path.display().to_string(),
            config_sha256: self.config.sha256(),
            master_seed: self.seed.master_seed,
            outputs: Vec::new(),
        }
    }

    pub fn execute(&self) -> Result<Vec<PathBuf>, CliError> {
        match self.command {
            "estimate" => self.estimate(),
            "sweep" => self.sweep(),
            "normtest" => self.normtest(),
            "lowerbound" => self.lowerbound(),
            other => Err(CliError::Config(format!("unknown command {other}"))),
        }
    }

    fn experiment(&self) -> Result<ExperimentReport, CliError> {
        let spec = self.config.experiment_spec()?;
        let r = spec.resolve()?;
        let exp = Experiment {
            functional: &r.functional,
            model: &r.model,
            theta: &r.theta,
            chain: spec.chain,
            n_rep: spec.n_rep,
            seed: self.seed,
            bias_oracle_reps: spec.bias_oracle_reps,
            strong_variance_mc: spec.strong_variance_mc,
        };
        Ok(run_experiment(&exp)?)
    }

    fn estimate(&self) -> Result<Vec<PathBuf>, CliError> {
        let rep = self.experiment()?;
        let mut out = self.outputs();
        out.csv("estimate.csv", &REPORT_COLUMNS, &[report_row(&rep)]);
        out.json("estimate.json", &rep)?;
        if !rep.normalized_errors.is_empty() {
            out.svg("estimate_ecdf.svg", ecdf_chart(&rep.normalized_errors));
        }
        println!(
            "{}: k={} bias={} ± {} mse={} efficiency_ratio={} ks={}",
            rep.functional,
            rep.k,
            num(rep.bias),
            num(rep.bias_se),
            num(rep.mse),
            cell(rep.efficiency_ratio),
            cell(rep.ks_statistic)
        );
        out.finish(self.manifest())
    }

    fn normtest(&self) -> Result<Vec<PathBuf>, CliError> {
        let rep = self.experiment()?;
        let ks = rep.ks_statistic.ok_or_else(|| {
            Error::Precondition(format!(
                "normality test skipped: {}",
                rep.normalized_skipped.clone().unwrap_or_default()
            ))
        })?;
        let mut sorted = rep.normalized_errors.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let rows: Vec<Vec<String>> = sorted
            .iter()
            .enumerate()
            .map(|(i, &z)| vec![num(z), num((i + 1) as f64 / n), num(normal_cdf(z))])
            .collect();
        let mut out = self.outputs();
        out.csv("normtest.csv", &["z", "ecdf", "normal_cdf"], &rows);
        out.json(
            "normtest.json",
            &NormtestSummary {
                ks_statistic: ks,
                n_samples: sorted.len(),
                sigma_f_xi: rep.sigma_f_xi,
                report: &rep,
            },
        )?;
        out.svg("normtest_ecdf.svg", ecdf_chart(&rep.normalized_errors));
        println!("ks_statistic={} n={}", num(ks), sorted.len());
        out.finish(self.manifest())
    }

    fn sweep(&self) -> Result<Vec<PathBuf>, CliError> {
        let spec = self.config.experiment_spec()?;
        let axes = self.config.sweep_axes()?;
        let rep = sweep_scaling(&spec, axes, self.seed)?;
        let mut out = self.outputs();
        let rows: Vec<Vec<String>> = rep
            .rows
            .iter()
            .map(|r| r.values().iter().map(|v| cell(*v)).collect())
            .collect();
        out.csv("sweep.csv", &SweepRow::COLUMNS, &rows);
        let slope_rows: Vec<Vec<String>> = rep
            .slopes
            .iter()
            .map(|s| {
                let mut row = vec![s.k.to_string()];
                for fit in [
                    Some(&s.bias_vs_nu),
                    Some(&s.bias_vs_sigma),
                    s.chain_bias_vs_nu.as_ref(),
                    s.chain_bias_vs_sigma.as_ref(),
                ] {
                    row.extend(fit_cells(fit));
                }
                row.push(cell(s.mse_vs_sigma));
                row
            })
            .collect();
        out.csv("sweep_slopes.csv", &SLOPE_COLUMNS, &slope_rows);
        out.json("sweep.json", &rep)?;
        if out.wants(Format::Svg) {
            let (x_label, x_of): (&str, fn(&SweepRow) -> f64) = if axes.d.is_some() {
                ("d", |r| r.d as f64)
            } else {
                ("sigma", |r| r.sigma)
            };
            out.svg("sweep_bias.svg", sweep_chart(&rep, "|bias|", x_label, x_of, true));
            out.svg("sweep_mse.svg", sweep_chart(&rep, "MSE", x_label, x_of, false));
        }
        for s in &rep.slopes {
            println!(
                "k={} bias_vs_sigma={} chain_bias_vs_sigma={} mse_vs_sigma={}",
                s.k,
                fit_text(Some(&s.bias_vs_sigma)),
                fit_text(s.chain_bias_vs_sigma.as_ref()),
                cell(s.mse_vs_sigma)
            );
        }
        out.finish(self.manifest())
    }

    fn lowerbound(&self) -> Result<Vec<PathBuf>, CliError> {
        let lb = self.config.lowerbound()?;
        if !(lb.sigma.is_finite() && lb.sigma >= 0.0) {
            return Err(CliError::Config(format!("lowerbound.sigma must be ≥ 0, got {}", lb.sigma)));
        }
        let packing = vg_packing(lb.d, self.seed.child(0))?;
        let model = CovarianceModel::isotropic(lb.sigma * lb.sigma, lb.d, NormContext::Euclidean)?;
        let epsilon = lb.epsilon.unwrap_or_else(|| default_epsilon(model.trace()));
        let family = BumpFamily::new(packing, epsilon, lb.s)?;
        let tau = tau_check(&family);
        let rec = recovery_experiment(&family, &model, lb.rule, lb.decoding, lb.n_rep, self.seed.child(1))?;
        let mut out = self.outputs();
        out.text("lowerbound_packing.txt", family.packing.to_text());
        let rows: Vec<Vec<String>> = rec
            .per_codeword
            .iter()
            .map(|c| {
                vec![
                    c.codeword.to_string(),
                    num(c.theta_risk),
                    num(c.functional_risk),
                    num(c.estimator_risk),
                    num(c.mean_hamming),
                ]
            })
            .collect();
        out.csv(
            "lowerbound.csv",
            &["codeword", "theta_risk", "functional_risk", "estimator_risk", "mean_hamming"],
            &rows,
        );
        out.json(
            "lowerbound.json",
            &LowerBoundSummary {
                d: lb.d,
                n_codewords: family.packing.codewords.len(),
                target_codewords: shiftfunc_core::lowerbound::packing_target(lb.d),
                min_distance: family.packing.min_distance,
                required_distance: family.packing.required_distance,
                epsilon,
                tau_identity_max_rel_dev: tau.0,
                tau_hamming_identity_max_rel_dev: tau.1,
                recovery: &rec,
            },
        )?;
        println!(
            "d={} codewords={} min_distance={} max_theta_risk={} identity_dev={}",
            lb.d,
            family.packing.codewords.len(),
            family.packing.min_distance,
            num(rec.max_theta_risk),
            num(rec.identity_max_rel_dev)
        );
        out.finish(self.manifest())
    }
}

#[derive(Serialize)]
struct NormtestSummary<'a> {
    ks_statistic: f64,
    n_samples: usize,
    sigma_f_xi: f64,
    report: &'a ExperimentReport,
}

#[derive(Serialize)]
struct LowerBoundSummary<'a> {
    d: usize,
    n_codewords: usize,
    target_codewords: usize,
    min_distance: u32,
    required_distance: u32,
    epsilon: f64,
    tau_identity_max_rel_dev: f64,
    tau_hamming_identity_max_rel_dev: f64,
    recovery: &'a RecoveryReport,
}

/// Largest relative deviation of `τ` from `(φ(0)ε^{s−1}/8)‖θ−θ′‖` and from
/// `2φ(0)ε^s√(h/d)` over all distinct codeword pairs.
pub fn tau_check(fam: &BumpFamily) -> (f64, f64) {
    let n = fam.packing.codewords.len();
    let d = fam.d() as f64;
    let values: Vec<Vec<f64>> = (0..n).map(|i| fam.eval_all(fam.theta(i).coords())).collect();
    let (mut dev_norm, mut dev_ham): (f64, f64) = (0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let ss: f64 = values[i].iter().zip(&values[j]).map(|(a, b)| (a - b).powi(2)).sum();
            let tau = (ss / d).sqrt();
            let diff = fam.theta(i).sub(fam.theta(j));
            let by_norm = MOLLIFIER_AT_ZERO * fam.epsilon.powf(fam.s - 1.0) / 8.0 * diff.pairing(&diff).sqrt();
            let h = hamming(fam.packing.codewords[i], fam.packing.codewords[j]) as f64;
            let by_ham = 2.0 * MOLLIFIER_AT_ZERO * fam.epsilon.powf(fam.s) * (h / d).sqrt();
            dev_norm = dev_norm.max((tau - by_norm).abs() / by_norm);
            dev_ham = dev_ham.max((tau - by_ham).abs() / by_ham);
        }
    }
    (dev_norm, dev_ham)
}

/// Column order of `estimate.csv`.
pub const REPORT_COLUMNS: [&str; 21] = [
    "functional",
    "k",
    "n_mc",
    "n_rep",
    "truth",
    "bias",
    "bias_se",
    "variance",
    "variance_se",
    "mse",
    "mse_se",
    "sigma_f_xi",
    "efficiency_ratio",
    "ks_statistic",
    "mean_inner_se",
    "truncated",
    "weak_variance",
    "strong_variance",
    "strong_variance_se",
    "chain_bias",
    "chain_bias_se",
];

fn report_row(r: &ExperimentReport) -> Vec<String> {
    vec![
        r.functional.clone(),
        r.k.to_string(),
        r.n_mc.to_string(),
        r.n_rep.to_string(),
        num(r.truth),
        num(r.bias),
        num(r.bias_se),
        num(r.variance),
        num(r.variance_se),
        num(r.mse),
        num(r.mse_se),
        num(r.sigma_f_xi),
        cell(r.efficiency_ratio),
        cell(r.ks_statistic),
        num(r.mean_inner_se),
        r.truncated.to_string(),
        num(r.weak_variance),
        num(r.strong_variance),
        num(r.strong_variance_se),
        cell(r.chain_bias),
        cell(r.chain_bias_se),
    ]
}

/// Column order of `sweep_slopes.csv`.
pub const SLOPE_COLUMNS: [&str; 14] = [
    "k",
    "bias_vs_nu",
    "bias_vs_nu_points",
    "bias_vs_nu_reliable",
    "bias_vs_sigma",
    "bias_vs_sigma_points",
    "bias_vs_sigma_reliable",
    "chain_bias_vs_nu",
    "chain_bias_vs_nu_points",
    "chain_bias_vs_nu_reliable",
    "chain_bias_vs_sigma",
    "chain_bias_vs_sigma_points",
    "chain_bias_vs_sigma_reliable",
    "mse_vs_sigma",
];

fn fit_cells(fit: Option<&SlopeFit>) -> [String; 3] {
    match fit {
        Some(f) => [cell(f.slope), f.points_used.to_string(), f.reliable.to_string()],
        None => Default::default(),
    }
}

fn fit_text(fit: Option<&SlopeFit>) -> String {
    match fit {
        Some(f) => format!("{}{}", cell(f.slope), if f.reliable { "" } else { "(unreliable)" }),
        None => "-".into(),
    }
}

fn ecdf_chart(z: &[f64]) -> String {
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Thin to at most ~500 points for a compact file.
    let step = n.div_ceil(500).max(1);
    let ecdf: Vec<(f64, f64)> = sorted
        .iter()
        .enumerate()
        .filter(|(i, _)| i % step == 0 || *i == n - 1)
        .map(|(i, &x)| (x, (i + 1) as f64 / n as f64))
        .collect();
    let phi: Vec<(f64, f64)> = ecdf.iter().map(|&(x, _)| (x, normal_cdf(x))).collect();
    Chart {
        title: "Normalized errors: empirical CDF vs standard normal".into(),
        x_label: "z".into(),
        y_label: "CDF".into(),
        log_x: false,
        log_y: false,
        series: vec![
            Series {
                name: "empirical".into(),
                points: ecdf,
                dashed: false,
            },
            Series {
                name: "normal".into(),
                points: phi,
                dashed: true,
            },
        ],
    }
    .render()
}

fn sweep_chart(rep: &SweepReport, what: &str, x_label: &str, x_of: fn(&SweepRow) -> f64, bias: bool) -> String {
    let mut series = Vec::new();
    for s in &rep.slopes {
        let rows: Vec<&SweepRow> = rep.rows.iter().filter(|r| r.k == s.k).collect();
        if bias {
            series.push(Series {
                name: format!("k={} empirical", s.k),
                points: rows.iter().map(|r| (x_of(r), r.bias.abs())).collect(),
                dashed: false,
            });
            if rows.iter().all(|r| r.chain_bias.is_some()) {
                series.push(Series {
                    name: format!("k={} chain", s.k),
                    points: rows.iter().map(|r| (x_of(r), r.chain_bias.unwrap_or(0.0).abs())).collect(),
                    dashed: true,
                });
            }
        } else {
            series.push(Series {
                name: format!("k={}", s.k),
                points: rows.iter().map(|r| (x_of(r), r.mse)).collect(),
                dashed: false,
            });
        }
    }
    Chart {
        title: format!("{what} vs {x_label} (log-log)"),
        x_label: x_label.into(),
        y_label: what.into(),
        log_x: true,
        log_y: true,
        series,
    }
    .render()
}

/// `report FILE`: a plain-text summary of a JSON output file.
pub fn report(path: &Path) -> Result<String, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: not JSON: {e}", path.display())))?;
    let manifest = doc
        .get("manifest")
        .ok_or_else(|| CliError::Config(format!("{}: no manifest block", path.display())))?;
    let mut lines = Vec::new();
    let field = |k: &str| manifest.get(k).map(|v| v.to_string()).unwrap_or_default();
    lines.push(format!("command: {}", field("command").trim_matches('"')));
    lines.push(format!("version: {}", field("version").trim_matches('"')));
    lines.push(format!("master_seed: {}", field("master_seed")));
    let config_path = field("config_path").trim_matches('"').to_string();
    let recorded = field("config_sha256").trim_matches('"').to_string();
    lines.push(format!("config: {config_path}"));
    lines.push(format!("config_sha256: {recorded} ({})", verify_hash(&config_path, manifest, &recorded)));
    if let Some(result) = doc.get("result") {
        flatten("", result, &mut lines);
    }
    let mut s = lines.join("\n");
    s.push('\n');
    Ok(s)
}

fn verify_hash(config_path: &str, manifest: &serde_json::Value, recorded: &str) -> &'static str {
    let Ok(mut cfg) = RunConfig::load(Path::new(config_path)) else {
        return "config unavailable";
    };
    cfg.seed = manifest.get("master_seed").and_then(|v| v.as_u64());
    if cfg.sha256() == recorded {
        "verified"
    } else {
        "MISMATCH"
    }
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut Vec<String>) {
    match v {
        serde_json::Value::Object(m) => {
            for (k, x) in m {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&p, x, out);
            }
        }
        serde_json::Value::Array(a) if a.len() > 20 => {
            out.push(format!("{prefix}: [{} entries]", a.len()));
        }
        serde_json::Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, out);
            }
        }
        other => out.push(format!("{prefix}: {other}")),
    }
}
