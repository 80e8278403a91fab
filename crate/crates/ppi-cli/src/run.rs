//! Method dispatch and pool subsampling shared by the subcommands.

use ppi::dataio::{discretize, Dataset, LabelKind, LabeledRecord, UnlabeledRecord};
use ppi::engine::EngineConfig;
use ppi::error::{Error, Result};
use ppi::estimators::{
    chain_rule_abstain, chain_rule_estimate, classical_mean, classical_proportion,
    difference_estimate, estimate_lambda, stratified_with_spec, sxs_classical_paired,
    sxs_estimate, DiffMode, EstimandReport, PowerTuneParams, ProportionVariant,
};
use ppi::partition::{KChoice, PartitionKind, PartitionSpec};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// Flags that modulate a method beyond the engine settings.
#[derive(Debug, Clone)]
pub struct MethodOpts {
    pub partitions: KChoice,
    pub tree: bool,
    pub ptune: bool,
    pub lambda: Option<f64>,
    pub threshold: f64,
}

impl Default for MethodOpts {
    fn default() -> Self {
        MethodOpts {
            partitions: KChoice::Auto,
            tree: false,
            ptune: false,
            lambda: None,
            threshold: 0.5,
        }
    }
}

pub fn parse_partitions(s: &str) -> Result<KChoice> {
    if s == "auto" {
        return Ok(KChoice::Auto);
    }
    s.parse::<usize>()
        .map(KChoice::Fixed)
        .map_err(|_| Error::InvalidArgument(format!("--partitions expects an integer or auto, got {s:?}")))
}

fn proportion_counts(data: &Dataset) -> Result<(u64, u64)> {
    let ah = data.labeled_ah_binary()?;
    let k = ah.iter().filter(|&&(_, h)| h == 1).count() as u64;
    Ok((k, ah.len() as u64))
}

fn ptune_params(
    data: &Dataset,
    opts: &MethodOpts,
) -> Result<(Option<PowerTuneParams>, Vec<String>)> {
    if let Some(lambda) = opts.lambda {
        return Ok((Some(PowerTuneParams::fixed(lambda)?), vec![]));
    }
    let (fs, ys) = data.fy_real()?;
    let uf = data.unlabeled_f_real()?;
    let (params, warnings) = estimate_lambda(&fs, &ys, &uf)?;
    Ok((Some(params), warnings))
}

/// Run one named estimator against a dataset. Kind-specific preprocessing
/// (discretizing real scores for the chain rule) happens here.
pub fn run_method(
    data: &Dataset,
    method: &str,
    cfg: &EngineConfig,
    opts: &MethodOpts,
) -> Result<EstimandReport> {
    match method {
        "classical_mean" => {
            let (_, ys) = data.fy_real()?;
            classical_mean(&ys, cfg)
        }
        "classical_proportion_cp" | "classical_proportion_wald" | "classical_proportion_jeffreys" => {
            let (k, n) = proportion_counts(data)?;
            let variant = match method {
                "classical_proportion_cp" => ProportionVariant::ClopperPearson,
                "classical_proportion_wald" => ProportionVariant::Wald,
                _ => ProportionVariant::JeffreysBeta,
            };
            classical_proportion(k, n, cfg, variant)
        }
        "difference_classical" | "difference_bayes" | "difference_ptune" => {
            let (fs, ys) = data.fy_real()?;
            let uf = data.unlabeled_f_real()?;
            let want_ptune = opts.ptune || method == "difference_ptune";
            let (ptune, mut warnings) =
                if want_ptune { ptune_params(data, opts)? } else { (None, vec![]) };
            let mode = if method == "difference_classical" { DiffMode::Classical } else { DiffMode::Bayes };
            let mut report = difference_estimate(&fs, &ys, &uf, cfg, mode, ptune)?;
            report.warnings.append(&mut warnings);
            Ok(report)
        }
        "stratified" | "stratified_ptune" => {
            let (fs, ys) = data.fy_real()?;
            let uf = data.unlabeled_f_real()?;
            let kind =
                if opts.tree { PartitionKind::RegressionTree } else { PartitionKind::EqualFrequency };
            let spec = match opts.partitions {
                KChoice::Fixed(k) => PartitionSpec::fixed(kind, k),
                KChoice::Auto => PartitionSpec::auto(kind),
            };
            let ptune = opts.ptune || method == "stratified_ptune";
            let (scheme, mut report) = stratified_with_spec(&fs, &ys, &uf, &spec, cfg, ptune)?;
            report.diagnostics.insert("k_effective".into(), json!(scheme.k_effective));
            report.diagnostics.insert("cuts".into(), json!(scheme.cuts));
            Ok(report)
        }
        "chain_rule" => {
            let binary;
            let data = if data.kind == LabelKind::Real {
                binary = discretize(data, opts.threshold)?;
                &binary
            } else {
                data
            };
            chain_rule_estimate(&data.labeled_ah_binary()?, &data.unlabeled_a_binary()?, cfg)
        }
        "chain_rule_abstain" => {
            chain_rule_abstain(&data.labeled_ah_abstain()?, &data.unlabeled_a_codes()?, cfg)
        }
        "sxs_chain_rule" => sxs_estimate(&data.labeled_ah_sxs()?, &data.unlabeled_a_codes()?, cfg),
        "sxs_classical_paired" => {
            let hs: Vec<u8> = data.labeled_ah_sxs()?.iter().map(|&(_, h)| h).collect();
            sxs_classical_paired(&hs, cfg)
        }
        _ => Err(Error::InvalidArgument(format!("unknown method {method:?}"))),
    }
}

/// The classical baseline method name for a pool of the given kind.
pub fn baseline_method(kind: LabelKind) -> Result<&'static str> {
    match kind {
        LabelKind::Real => Ok("classical_mean"),
        LabelKind::Binary => Ok("classical_proportion_cp"),
        _ => Err(Error::InvalidArgument(
            "pool experiments need a real or binary pool (linearize first)".into(),
        )),
    }
}

/// Draw n labeled rows without replacement; the remaining labeled rows
/// contribute their autorater scores to the unlabeled part, alongside any
/// unlabeled rows already in the pool.
pub fn subsample_split(pool: &Dataset, n: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    if n == 0 || n > pool.n() {
        return Err(Error::InvalidArgument(format!(
            "subsample size {n} must be in 1..={}",
            pool.n()
        )));
    }
    let mut idx: Vec<usize> = (0..pool.n()).collect();
    idx.shuffle(rng);
    let mut labeled: Vec<LabeledRecord> = Vec::with_capacity(n);
    let mut unlabeled: Vec<UnlabeledRecord> = pool.unlabeled.clone();
    for (rank, &i) in idx.iter().enumerate() {
        let r = &pool.labeled[i];
        if rank < n {
            labeled.push(r.clone());
        } else {
            unlabeled.push(UnlabeledRecord {
                id: r.id.clone(),
                f: r.f.clone(),
                fallback: r.fallback,
            });
        }
    }
    let data = Dataset { labeled, unlabeled, kind: pool.kind };
    data.validate()?;
    Ok(data)
}
