//! Table-1 estimators: classical baselines, the difference estimate with
//! optional power tuning, the stratified estimate, the chain-rule family,
//! and side-by-side paired tests. Each produces an EstimandReport whose
//! interval comes either from a closed form or from the engine.

use std::collections::BTreeMap;

use serde_json::{json, Value as Json};
use statrs::distribution::{Beta, Continuous, ContinuousCDF, Normal, StudentsT};

use crate::engine::{
    bootstrap, integrate, resample_mean, EngineConfig, EngineKind, IntervalResult, ParamSet,
};
use crate::error::{Error, Result};
use crate::partition::{self, PartitionKind, PartitionScheme};
use crate::posterior::{
    covariance, fit_kproportion, fit_mean, fit_proportion, mean_and_variance,
    KProportionPosterior, Posterior, ProportionPosterior,
};

/// Estimator identity, as reported in output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClassicalMean,
    ClassicalProportionCp,
    ClassicalProportionWald,
    ClassicalProportionJeffreys,
    DifferenceClassical,
    DifferenceBayes,
    DifferencePtune,
    Stratified,
    StratifiedPtune,
    ChainRule,
    ChainRuleAbstain,
    SxsChainRule,
    SxsClassicalPaired,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::ClassicalMean => "classical_mean",
            Method::ClassicalProportionCp => "classical_proportion_cp",
            Method::ClassicalProportionWald => "classical_proportion_wald",
            Method::ClassicalProportionJeffreys => "classical_proportion_jeffreys",
            Method::DifferenceClassical => "difference_classical",
            Method::DifferenceBayes => "difference_bayes",
            Method::DifferencePtune => "difference_ptune",
            Method::Stratified => "stratified",
            Method::StratifiedPtune => "stratified_ptune",
            Method::ChainRule => "chain_rule",
            Method::ChainRuleAbstain => "chain_rule_abstain",
            Method::SxsChainRule => "sxs_chain_rule",
            Method::SxsClassicalPaired => "sxs_classical_paired",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaSource {
    Fixed,
    Estimated,
}

/// Power-tuning coefficient for the difference family.
#[derive(Debug, Clone, Copy)]
pub struct PowerTuneParams {
    pub lambda: f64,
    pub lambda_source: LambdaSource,
}

impl PowerTuneParams {
    pub fn fixed(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be in [0, 1], got {lambda}"
            )));
        }
        Ok(PowerTuneParams { lambda, lambda_source: LambdaSource::Fixed })
    }
}

/// Full result of one estimator run.
#[derive(Debug, Clone)]
pub struct EstimandReport {
    pub interval: IntervalResult,
    pub method: Method,
    pub diagnostics: BTreeMap<String, Json>,
    pub warnings: Vec<String>,
    pub seed: u64,
}

impl EstimandReport {
    pub fn to_json(&self) -> Json {
        let mut diagnostics = self.diagnostics.clone();
        if !self.warnings.is_empty() {
            diagnostics.insert("warnings".into(), json!(self.warnings));
        }
        json!({
            "method": self.method.name(),
            "level": self.interval.level,
            "lo": self.interval.lo,
            "hi": self.interval.hi,
            "width": self.interval.width,
            "point_estimate": self.interval.point_estimate,
            "T": self.interval.n_samples,
            "seed": self.seed,
            "diagnostics": diagnostics,
        })
    }
}

fn z_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

fn t_quantile(df: f64, p: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df).unwrap().inverse_cdf(p)
}

fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    // statrs inverts the Beta CDF by bisection to roughly 1e-5; polish the
    // root with Newton steps on the (accurate) CDF.
    let dist = Beta::new(a, b).unwrap();
    let mut x = dist.inverse_cdf(p).clamp(1e-12, 1.0 - 1e-12);
    for _ in 0..8 {
        let pdf = dist.pdf(x);
        if pdf <= 0.0 || !pdf.is_finite() {
            break;
        }
        let step = (dist.cdf(x) - p) / pdf;
        let next = (x - step).clamp(1e-16, 1.0 - 1e-16);
        if (next - x).abs() < 1e-15 {
            x = next;
            break;
        }
        x = next;
    }
    x
}

fn report(
    interval: IntervalResult,
    method: Method,
    diagnostics: BTreeMap<String, Json>,
    warnings: Vec<String>,
    seed: u64,
) -> EstimandReport {
    EstimandReport { interval, method, diagnostics, warnings, seed }
}

/// Classical interval around a sample mean: Gaussian critical value for
/// n >= 30, Student-T below.
pub fn classical_mean(labeled_y: &[f64], cfg: &EngineConfig) -> Result<EstimandReport> {
    cfg.validate()?;
    let n = labeled_y.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("classical mean needs n >= 2, got {n}")));
    }
    let (mu, sigma2) = mean_and_variance(labeled_y)?;
    let se = (sigma2 / n as f64).sqrt();
    let p = 1.0 - (1.0 - cfg.level) / 2.0;
    let crit = if n >= 30 { z_quantile(p) } else { t_quantile((n - 1) as f64, p) };
    let interval = IntervalResult::closed(mu - crit * se, mu + crit * se, cfg.level, mu);
    let diagnostics = BTreeMap::from([
        ("n".into(), json!(n)),
        ("sigma2_hat".into(), json!(sigma2)),
    ]);
    Ok(report(interval, Method::ClassicalMean, diagnostics, vec![], cfg.seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProportionVariant {
    ClopperPearson,
    Wald,
    JeffreysBeta,
}

/// Classical interval for a binomial proportion.
pub fn classical_proportion(
    successes: u64,
    trials: u64,
    cfg: &EngineConfig,
    variant: ProportionVariant,
) -> Result<EstimandReport> {
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    if successes > trials {
        return Err(Error::InvalidArgument(format!(
            "successes {successes} exceeds trials {trials}"
        )));
    }
    let (k, n) = (successes as f64, trials as f64);
    let alpha = 1.0 - cfg.level;
    let p_hat = k / n;
    let (lo, hi, method) = match variant {
        ProportionVariant::ClopperPearson => {
            let lo = if successes == 0 { 0.0 } else { beta_quantile(k, n - k + 1.0, alpha / 2.0) };
            let hi = if successes == trials {
                1.0
            } else {
                beta_quantile(k + 1.0, n - k, 1.0 - alpha / 2.0)
            };
            (lo, hi, Method::ClassicalProportionCp)
        }
        ProportionVariant::Wald => {
            let se = (p_hat * (1.0 - p_hat) / n).sqrt();
            let z = z_quantile(1.0 - alpha / 2.0);
            (p_hat - z * se, p_hat + z * se, Method::ClassicalProportionWald)
        }
        ProportionVariant::JeffreysBeta => {
            let (a, b) = (k + 0.5, n - k + 0.5);
            (
                beta_quantile(a, b, alpha / 2.0),
                beta_quantile(a, b, 1.0 - alpha / 2.0),
                Method::ClassicalProportionJeffreys,
            )
        }
    };
    let interval = IntervalResult::closed(lo, hi, cfg.level, p_hat);
    let diagnostics = BTreeMap::from([
        ("successes".into(), json!(successes)),
        ("trials".into(), json!(trials)),
    ]);
    Ok(report(interval, method, diagnostics, vec![], cfg.seed))
}

/// Estimate the power-tuning coefficient from the data:
/// lambda = Cov(f, y on the labeled part) / Var(f pooled over both parts),
/// clamped to [0, 1]. Constant f yields lambda = 0 with a warning.
pub fn estimate_lambda(
    labeled_f: &[f64],
    labeled_y: &[f64],
    unlabeled_f: &[f64],
) -> Result<(PowerTuneParams, Vec<String>)> {
    if labeled_f.len() < 2 || labeled_f.len() != labeled_y.len() {
        return Err(Error::InvalidArgument(
            "lambda estimation needs n >= 2 labeled (f, y) pairs".into(),
        ));
    }
    let cov = covariance(labeled_f, labeled_y)?;
    let pooled: Vec<f64> = labeled_f.iter().chain(unlabeled_f).copied().collect();
    let (_, var) = mean_and_variance(&pooled)?;
    if var == 0.0 {
        return Ok((
            PowerTuneParams { lambda: 0.0, lambda_source: LambdaSource::Estimated },
            vec!["autorater score is constant; lambda set to 0".into()],
        ));
    }
    let lambda = (cov / var).clamp(0.0, 1.0);
    Ok((PowerTuneParams { lambda, lambda_source: LambdaSource::Estimated }, vec![]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffMode {
    Classical,
    Bayes,
}

/// Difference estimate: the mean autorater score on the unlabeled part
/// plus the rectifier, the mean of (y - f) on the labeled part. Power
/// tuning scales f by lambda in both terms.
pub fn difference_estimate(
    labeled_f: &[f64],
    labeled_y: &[f64],
    unlabeled_f: &[f64],
    cfg: &EngineConfig,
    mode: DiffMode,
    ptune: Option<PowerTuneParams>,
) -> Result<EstimandReport> {
    cfg.validate()?;
    let n = labeled_f.len();
    let big_n = unlabeled_f.len();
    if n < 2 || labeled_y.len() != n {
        return Err(Error::InvalidArgument("difference estimate needs n >= 2 labeled pairs".into()));
    }
    if big_n < 2 {
        return Err(Error::InvalidArgument("difference estimate needs N >= 2".into()));
    }
    let lambda = ptune.map_or(1.0, |p| p.lambda);
    let scaled_unlabeled: Vec<f64> = unlabeled_f.iter().map(|f| lambda * f).collect();
    let residuals: Vec<f64> =
        labeled_y.iter().zip(labeled_f).map(|(y, f)| y - lambda * f).collect();

    let (mu1, var1) = mean_and_variance(&scaled_unlabeled)?;
    let (mu2, var2) = mean_and_variance(&residuals)?;

    let method = if ptune.is_some() {
        Method::DifferencePtune
    } else if mode == DiffMode::Classical {
        Method::DifferenceClassical
    } else {
        Method::DifferenceBayes
    };

    let interval = match (mode, cfg.engine) {
        (DiffMode::Classical, _) => {
            let point = mu1 + mu2;
            let se = (var1 / big_n as f64 + var2 / n as f64).sqrt();
            let z = z_quantile(1.0 - (1.0 - cfg.level) / 2.0);
            IntervalResult::closed(point - z * se, point + z * se, cfg.level, point)
        }
        (DiffMode::Bayes, EngineKind::Bootstrap) => bootstrap(cfg, |rng| {
            resample_mean(rng, &scaled_unlabeled) + resample_mean(rng, &residuals)
        })?,
        (DiffMode::Bayes, _) => {
            let mut params = ParamSet::new();
            params.register("mu1", Posterior::Mean(fit_mean(&scaled_unlabeled)?))?;
            params.register("mu2", Posterior::Mean(fit_mean(&residuals)?))?;
            integrate(&params, |s| s.scalar("mu1") + s.scalar("mu2"), cfg)?
        }
    };

    let mut diagnostics = BTreeMap::from([
        ("n".into(), json!(n)),
        ("N".into(), json!(big_n)),
        ("mu1_hat".into(), json!(mu1)),
        ("mu2_hat".into(), json!(mu2)),
    ]);
    if let Some(p) = ptune {
        diagnostics.insert("lambda".into(), json!(p.lambda));
        diagnostics.insert(
            "lambda_source".into(),
            json!(match p.lambda_source {
                LambdaSource::Fixed => "fixed",
                LambdaSource::Estimated => "estimated",
            }),
        );
    }
    Ok(report(interval, method, diagnostics, vec![], cfg.seed))
}

struct Stratum {
    unlabeled_f: Vec<f64>,
    residuals: Vec<f64>,
    lambda: f64,
}

/// Stratified estimate: a Dirichlet-weighted sum of per-partition
/// difference estimates, with partition weights taken from the unlabeled
/// counts. With per-partition power tuning each stratum estimates its own
/// lambda.
pub fn stratified_estimate(
    labeled_f: &[f64],
    labeled_y: &[f64],
    unlabeled_f: &[f64],
    scheme: &PartitionScheme,
    cfg: &EngineConfig,
    per_partition_ptune: bool,
) -> Result<EstimandReport> {
    cfg.validate()?;
    if labeled_f.len() != labeled_y.len() {
        return Err(Error::InvalidArgument("labeled f and y lengths differ".into()));
    }
    let k = scheme.k_effective;
    let (n_counts, big_counts) = scheme.part_counts(labeled_f, unlabeled_f);
    for i in 0..k {
        if n_counts[i] < 3 || big_counts[i] < 3 {
            return Err(Error::PartitionUnderfilled(i));
        }
    }

    if k == 1 {
        // Single partition: the stratified estimand degenerates to the
        // plain difference estimate.
        let ptune = if per_partition_ptune {
            Some(estimate_lambda(labeled_f, labeled_y, unlabeled_f)?.0)
        } else {
            None
        };
        let mut rep =
            difference_estimate(labeled_f, labeled_y, unlabeled_f, cfg, DiffMode::Bayes, ptune)?;
        rep.method = if per_partition_ptune { Method::StratifiedPtune } else { Method::Stratified };
        rep.diagnostics.insert("k_effective".into(), json!(1));
        rep.warnings.extend(scheme.warnings.iter().cloned());
        return Ok(rep);
    }

    let mut strata = Vec::with_capacity(k);
    let mut warnings = scheme.warnings.clone();
    for i in 0..k {
        let lf: Vec<f64> =
            labeled_f.iter().copied().filter(|&f| scheme.assign(f) == i).collect();
        let ly: Vec<f64> = labeled_f
            .iter()
            .zip(labeled_y)
            .filter(|(f, _)| scheme.assign(**f) == i)
            .map(|(_, y)| *y)
            .collect();
        let uf: Vec<f64> =
            unlabeled_f.iter().copied().filter(|&f| scheme.assign(f) == i).collect();
        let (lambda, mut w) = if per_partition_ptune {
            let (p, w) = estimate_lambda(&lf, &ly, &uf)?;
            (p.lambda, w)
        } else {
            (1.0, vec![])
        };
        warnings.append(&mut w);
        let residuals: Vec<f64> = ly.iter().zip(&lf).map(|(y, f)| y - lambda * f).collect();
        let unlabeled_scaled: Vec<f64> = uf.iter().map(|f| lambda * f).collect();
        strata.push(Stratum { unlabeled_f: unlabeled_scaled, residuals, lambda });
    }

    let weight_counts: Vec<u64> = big_counts.iter().map(|&c| c as u64).collect();

    let interval = match cfg.engine {
        EngineKind::Bootstrap => {
            // Per-stratum means from the original members as a fallback in
            // case a resample of the unlabeled pool empties a stratum.
            let base_means: Vec<f64> = strata
                .iter()
                .map(|s| s.unlabeled_f.iter().sum::<f64>() / s.unlabeled_f.len() as f64)
                .collect();
            let lambdas: Vec<f64> = strata.iter().map(|s| s.lambda).collect();
            bootstrap(cfg, |rng| {
                use rand::Rng;
                let big_n = unlabeled_f.len();
                let mut sums = vec![0.0; k];
                let mut counts = vec![0usize; k];
                for _ in 0..big_n {
                    let f = unlabeled_f[rng.gen_range(0..big_n)];
                    let i = scheme.assign(f);
                    sums[i] += lambdas[i] * f;
                    counts[i] += 1;
                }
                let mut g = 0.0;
                for i in 0..k {
                    let mean_f = if counts[i] > 0 { sums[i] / counts[i] as f64 } else { base_means[i] };
                    let mean_r = resample_mean(rng, &strata[i].residuals);
                    g += (mean_f + mean_r) * counts[i] as f64 / big_n as f64;
                }
                g
            })?
        }
        _ => {
            let mut params = ParamSet::new();
            for (i, s) in strata.iter().enumerate() {
                params.register(&format!("mu_f_{i}"), Posterior::Mean(fit_mean(&s.unlabeled_f)?))?;
                params.register(&format!("mu_r_{i}"), Posterior::Mean(fit_mean(&s.residuals)?))?;
            }
            params.register("p", Posterior::KProportion(fit_kproportion(&weight_counts)?))?;
            let names: Vec<(String, String)> = (0..k)
                .map(|i| (format!("mu_f_{i}"), format!("mu_r_{i}")))
                .collect();
            integrate(
                &params,
                |s| {
                    let p = s.simplex("p");
                    names
                        .iter()
                        .enumerate()
                        .map(|(i, (fnm, rnm))| (s.scalar(fnm) + s.scalar(rnm)) * p[i])
                        .sum()
                },
                cfg,
            )?
        }
    };

    let mut diagnostics = BTreeMap::from([
        ("k_effective".into(), json!(k)),
        ("labeled_counts".into(), json!(n_counts)),
        ("unlabeled_counts".into(), json!(big_counts)),
        ("n".into(), json!(labeled_f.len())),
        ("N".into(), json!(unlabeled_f.len())),
    ]);
    if let Some(m) = scheme.misc_id {
        diagnostics.insert("misc_id".into(), json!(m));
    }
    if per_partition_ptune {
        diagnostics.insert(
            "lambdas".into(),
            json!(strata.iter().map(|s| s.lambda).collect::<Vec<_>>()),
        );
    }
    let method = if per_partition_ptune { Method::StratifiedPtune } else { Method::Stratified };
    Ok(report(interval, method, diagnostics, warnings, cfg.seed))
}

/// Build a partition per the requested kind and K, post-process it, and
/// run the stratified estimator. K = auto scans the grid and keeps the
/// smallest width, ties toward smaller K.
pub fn stratified_with_spec(
    labeled_f: &[f64],
    labeled_y: &[f64],
    unlabeled_f: &[f64],
    spec: &partition::PartitionSpec,
    cfg: &EngineConfig,
    per_partition_ptune: bool,
) -> Result<(PartitionScheme, EstimandReport)> {
    spec.validate()?;
    let build = |k: usize| -> Result<PartitionScheme> {
        let raw = match spec.kind {
            PartitionKind::EqualFrequency => partition::equal_frequency(unlabeled_f, k)?,
            PartitionKind::RegressionTree => {
                partition::fit_regression_tree(labeled_f, labeled_y, k)?
            }
        };
        Ok(partition::postprocess(&raw, labeled_f, unlabeled_f))
    };
    match spec.k {
        partition::KChoice::Fixed(k) => {
            let scheme = build(k)?;
            let rep = stratified_estimate(
                labeled_f,
                labeled_y,
                unlabeled_f,
                &scheme,
                cfg,
                per_partition_ptune,
            )?;
            Ok((scheme, rep))
        }
        partition::KChoice::Auto => {
            let (_, out) = partition::tune_k(&spec.k_grid, |k| {
                let scheme = build(k)?;
                let rep = stratified_estimate(
                    labeled_f,
                    labeled_y,
                    unlabeled_f,
                    &scheme,
                    cfg,
                    per_partition_ptune,
                )?;
                Ok((rep.interval.width, (scheme, rep)))
            })?;
            Ok(out)
        }
    }
}

fn beta_cell(
    successes: u64,
    trials: u64,
    label: &str,
    warnings: &mut Vec<String>,
) -> ProportionPosterior {
    if trials == 0 {
        warnings.push(format!("no labeled examples with {label}; using the prior only"));
        ProportionPosterior::prior_only()
    } else {
        fit_proportion(successes, trials).expect("successes <= trials by construction")
    }
}

fn dirichlet_cell(
    counts: &[u64],
    label: &str,
    warnings: &mut Vec<String>,
) -> KProportionPosterior {
    if counts.iter().all(|&c| c == 0) {
        warnings.push(format!("no labeled examples with {label}; using the prior only"));
        KProportionPosterior::prior_only(counts.len()).expect("K >= 2")
    } else {
        fit_kproportion(counts).expect("non-degenerate counts")
    }
}

/// Chain rule estimate for a binary autorater:
/// g = p(H|A) p(A) + p(H|not A) (1 - p(A)).
pub fn chain_rule_estimate(
    labeled_ah: &[(u8, u8)],
    unlabeled_a: &[u8],
    cfg: &EngineConfig,
) -> Result<EstimandReport> {
    cfg.validate()?;
    if labeled_ah.len() < 2 {
        return Err(Error::InvalidArgument("chain rule needs n >= 2".into()));
    }
    if unlabeled_a.is_empty() {
        return Err(Error::InvalidArgument("chain rule needs N >= 1".into()));
    }
    if labeled_ah.iter().any(|&(a, h)| a > 1 || h > 1)
        || unlabeled_a.iter().any(|&a| a > 1)
    {
        return Err(Error::DataOther("chain rule labels must be 0 or 1".into()));
    }

    let k1 = unlabeled_a.iter().filter(|&&a| a == 1).count() as u64;
    let big_n = unlabeled_a.len() as u64;
    let mut warnings = Vec::new();
    let cell = |cond: u8, warnings: &mut Vec<String>| {
        let trials = labeled_ah.iter().filter(|&&(a, _)| a == cond).count() as u64;
        let successes =
            labeled_ah.iter().filter(|&&(a, h)| a == cond && h == 1).count() as u64;
        beta_cell(successes, trials, &format!("a={cond}"), warnings)
    };
    let h_given_a1 = cell(1, &mut warnings);
    let h_given_a0 = cell(0, &mut warnings);

    let interval = if cfg.engine == EngineKind::Bootstrap {
        // Plug-in chain rule on a joint resample of both parts. A cell
        // emptied by the resample falls back to its full-sample rate.
        let n = labeled_ah.len();
        let big_n = unlabeled_a.len();
        let base = |p: &ProportionPosterior| {
            if p.trials == 0 { 0.5 } else { p.successes as f64 / p.trials as f64 }
        };
        let (fb1, fb0) = (base(&h_given_a1), base(&h_given_a0));
        use rand::Rng;
        bootstrap(cfg, |rng| {
            let mut counts = [[0u64; 2]; 2];
            for _ in 0..n {
                let (a, h) = labeled_ah[rng.gen_range(0..n)];
                counts[a as usize][h as usize] += 1;
            }
            let k1 = (0..big_n)
                .filter(|_| unlabeled_a[rng.gen_range(0..big_n)] == 1)
                .count();
            let pa = k1 as f64 / big_n as f64;
            let rate = |cond: usize, fallback: f64| {
                let t = counts[cond][0] + counts[cond][1];
                if t == 0 { fallback } else { counts[cond][1] as f64 / t as f64 }
            };
            rate(1, fb1) * pa + rate(0, fb0) * (1.0 - pa)
        })?
    } else {
        let mut params = ParamSet::new();
        params.register("p_a", Posterior::Proportion(fit_proportion(k1, big_n)?))?;
        params.register("h_a1", Posterior::Proportion(h_given_a1.clone()))?;
        params.register("h_a0", Posterior::Proportion(h_given_a0.clone()))?;
        integrate(
            &params,
            |s| {
                let pa = s.scalar("p_a");
                s.scalar("h_a1") * pa + s.scalar("h_a0") * (1.0 - pa)
            },
            cfg,
        )?
    };

    let diagnostics = BTreeMap::from([
        ("n".into(), json!(labeled_ah.len())),
        ("N".into(), json!(unlabeled_a.len())),
        ("unlabeled_a1".into(), json!(k1)),
        ("h_given_a1".into(), json!([h_given_a1.successes, h_given_a1.trials])),
        ("h_given_a0".into(), json!([h_given_a0.successes, h_given_a0.trials])),
    ]);
    Ok(report(interval, Method::ChainRule, diagnostics, warnings, cfg.seed))
}

/// Chain rule with an abstaining autorater over {n, y, u} (codes 0, 1, 2):
/// g = sum_a p(H | A = a) p(A = a), with a K = 3 Dirichlet on p(A).
pub fn chain_rule_abstain(
    labeled_ah: &[(u8, u8)],
    unlabeled_a: &[u8],
    cfg: &EngineConfig,
) -> Result<EstimandReport> {
    cfg.validate()?;
    if labeled_ah.len() < 2 {
        return Err(Error::InvalidArgument("chain rule needs n >= 2".into()));
    }
    if unlabeled_a.is_empty() {
        return Err(Error::InvalidArgument("chain rule needs N >= 1".into()));
    }
    if labeled_ah.iter().any(|&(a, h)| a > 2 || h > 1)
        || unlabeled_a.iter().any(|&a| a > 2)
    {
        return Err(Error::DataOther("abstain labels must be coded 0, 1 or 2".into()));
    }

    let mut a_counts = [0u64; 3];
    for &a in unlabeled_a {
        a_counts[a as usize] += 1;
    }
    let mut warnings = Vec::new();
    let mut cells = Vec::with_capacity(3);
    for cond in 0..3u8 {
        let trials = labeled_ah.iter().filter(|&&(a, _)| a == cond).count() as u64;
        let successes =
            labeled_ah.iter().filter(|&&(a, h)| a == cond && h == 1).count() as u64;
        let label = ["a=n", "a=y", "a=u"][cond as usize];
        cells.push(beta_cell(successes, trials, label, &mut warnings));
    }

    let mut params = ParamSet::new();
    params.register("p_a", Posterior::KProportion(fit_kproportion(&a_counts)?))?;
    for (i, c) in cells.iter().enumerate() {
        params.register(&format!("h_{i}"), Posterior::Proportion(c.clone()))?;
    }
    let interval = integrate(
        &params,
        |s| {
            let p = s.simplex("p_a");
            (0..3).map(|i| s.scalar(&format!("h_{i}")) * p[i]).sum()
        },
        cfg,
    )?;

    let diagnostics = BTreeMap::from([
        ("n".into(), json!(labeled_ah.len())),
        ("N".into(), json!(unlabeled_a.len())),
        ("unlabeled_a_counts".into(), json!(a_counts)),
        (
            "h_given_a".into(),
            json!(cells.iter().map(|c| [c.successes, c.trials]).collect::<Vec<_>>()),
        ),
    ]);
    Ok(report(interval, Method::ChainRuleAbstain, diagnostics, warnings, cfg.seed))
}

/// Side-by-side chain rule over {w, l, t} (codes 0, 1, 2):
/// g = sum_a (p(H=w | a) - p(H=l | a)) p(A = a).
pub fn sxs_estimate(
    labeled_ah: &[(u8, u8)],
    unlabeled_a: &[u8],
    cfg: &EngineConfig,
) -> Result<EstimandReport> {
    cfg.validate()?;
    if labeled_ah.len() < 2 {
        return Err(Error::InvalidArgument("sxs chain rule needs n >= 2".into()));
    }
    if unlabeled_a.is_empty() {
        return Err(Error::InvalidArgument("sxs chain rule needs N >= 1".into()));
    }
    if labeled_ah.iter().any(|&(a, h)| a > 2 || h > 2)
        || unlabeled_a.iter().any(|&a| a > 2)
    {
        return Err(Error::DataOther("sxs labels must be coded 0, 1 or 2".into()));
    }

    let mut a_counts = [0u64; 3];
    for &a in unlabeled_a {
        a_counts[a as usize] += 1;
    }
    let mut warnings = Vec::new();
    let mut cells = Vec::with_capacity(3);
    for cond in 0..3u8 {
        let mut h_counts = [0u64; 3];
        for &(_, h) in labeled_ah.iter().filter(|&&(a, _)| a == cond) {
            h_counts[h as usize] += 1;
        }
        let label = ["a=w", "a=l", "a=t"][cond as usize];
        cells.push(dirichlet_cell(&h_counts, label, &mut warnings));
    }

    let mut params = ParamSet::new();
    params.register("p_a", Posterior::KProportion(fit_kproportion(&a_counts)?))?;
    for (i, c) in cells.iter().enumerate() {
        params.register(&format!("h_{i}"), Posterior::KProportion(c.clone()))?;
    }
    let interval = integrate(
        &params,
        |s| {
            let p = s.simplex("p_a");
            (0..3)
                .map(|i| {
                    let h = s.simplex(&format!("h_{i}"));
                    (h[0] - h[1]) * p[i]
                })
                .sum()
        },
        cfg,
    )?;

    let diagnostics = BTreeMap::from([
        ("n".into(), json!(labeled_ah.len())),
        ("N".into(), json!(unlabeled_a.len())),
        ("unlabeled_a_counts".into(), json!(a_counts)),
        (
            "h_given_a_counts".into(),
            json!(cells.iter().map(|c| c.counts.clone()).collect::<Vec<_>>()),
        ),
    ]);
    Ok(report(interval, Method::SxsChainRule, diagnostics, warnings, cfg.seed))
}

/// Classical paired side-by-side test from labeled human verdicts only:
/// Dirichlet posterior over (w, l, t) counts, g = p_w - p_l.
pub fn sxs_classical_paired(labeled_h: &[u8], cfg: &EngineConfig) -> Result<EstimandReport> {
    cfg.validate()?;
    if labeled_h.len() < 2 {
        return Err(Error::InvalidArgument("paired test needs n >= 2".into()));
    }
    if labeled_h.iter().any(|&h| h > 2) {
        return Err(Error::DataOther("sxs labels must be coded 0, 1 or 2".into()));
    }
    let mut counts = [0u64; 3];
    for &h in labeled_h {
        counts[h as usize] += 1;
    }
    let mut params = ParamSet::new();
    params.register("p", Posterior::KProportion(fit_kproportion(&counts)?))?;
    let interval = integrate(
        &params,
        |s| {
            let p = s.simplex("p");
            p[0] - p[1]
        },
        cfg,
    )?;
    let diagnostics = BTreeMap::from([
        ("n".into(), json!(labeled_h.len())),
        ("h_counts".into(), json!(counts)),
    ]);
    Ok(report(interval, Method::SxsClassicalPaired, diagnostics, vec![], cfg.seed))
}
