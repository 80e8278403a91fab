//! `ppi`: prediction-powered inference experiments from the command line.
//!
//! Subcommands: estimate | sweep | min-n | pairs | coverage | synth.
//! Exit codes: 0 ok, 1 runtime error, 2 validation error. The default
//! seed comes from --seed, else the PPI_SEED environment variable, else 0.

mod run;
mod worlds;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ppi::dataio::{
    linearize, load_csv, load_labeled_csv, synthesize_sxs, write_csv, Dataset, LabelKind,
    LabeledRecord, Linearization,
};
use ppi::engine::{EngineConfig, EngineKind};
use ppi::error::{Error, Result};
use ppi::rng::{derive_key, substream};
use ppi::synthcov::{
    coverage_run, frequentist_recheck, BinaryWorld, RecheckMode, RegimeBiasWorld, World,
};
use rand::seq::SliceRandom;
use serde_json::json;

use run::{baseline_method, parse_partitions, run_method, subsample_split, MethodOpts};
use worlds::{estimator_for, sxs_preset, world_source};

#[derive(Parser)]
#[command(name = "ppi", version, about = "Prediction-powered inference toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one estimator on a labeled/unlabeled CSV pair and print a JSON report.
    Estimate(EstimateArgs),
    /// Subsample a labeled pool over a grid of n and report widths, ratios and coverage.
    Sweep(SweepArgs),
    /// Smallest n whose trial-averaged width matches the classical full-pool baseline.
    #[command(name = "min-n")]
    MinN(MinNArgs),
    /// Side-by-side separation fractions for a model pair over an n grid.
    Pairs(PairsArgs),
    /// Frequentist coverage of an estimator over synthetic worlds.
    Coverage(CoverageArgs),
    /// Generate a synthetic dataset and write it as CSV.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Credible / confidence level.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Monte Carlo draws per parameter (T).
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Bootstrap replicates (B).
    #[arg(long, default_value_t = 10_000)]
    replicates: usize,
    /// Interval engine: mci or bootstrap.
    #[arg(long, default_value = "mci")]
    engine: String,
    /// RNG seed (falls back to PPI_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
}

impl CommonArgs {
    fn seed(&self) -> Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var("PPI_SEED") {
            Ok(v) => v
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("PPI_SEED={v:?} is not a u64"))),
            Err(_) => Ok(0),
        }
    }

    fn engine_config(&self) -> Result<EngineConfig> {
        let engine = match self.engine.as_str() {
            "mci" => EngineKind::Mci,
            "bootstrap" => EngineKind::Bootstrap,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown engine {other:?} (expected mci or bootstrap)"
                )))
            }
        };
        let cfg = EngineConfig {
            samples: self.samples,
            replicates: self.replicates,
            engine,
            level: self.level,
            seed: self.seed()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Clone)]
struct MethodArgs {
    /// Partition count for stratified methods: an integer or auto.
    #[arg(long, default_value = "auto")]
    partitions: String,
    /// Partition on a regression tree instead of equal-frequency bins.
    #[arg(long)]
    tree: bool,
    /// Power-tune: scale the autorater score by an estimated lambda.
    #[arg(long)]
    ptune: bool,
    /// Fixed lambda for --ptune instead of estimating it.
    #[arg(long)]
    lambda: Option<f64>,
    /// Discretization threshold applied when chain_rule gets real scores.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

impl MethodArgs {
    fn opts(&self) -> Result<MethodOpts> {
        Ok(MethodOpts {
            partitions: parse_partitions(&self.partitions)?,
            tree: self.tree,
            ptune: self.ptune,
            lambda: self.lambda,
            threshold: self.threshold,
        })
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Labeled CSV (columns id?, f, y, fallback?).
    #[arg(long)]
    labeled: PathBuf,
    /// Unlabeled CSV (columns id?, f, fallback?).
    #[arg(long)]
    unlabeled: PathBuf,
    /// Label domain: real, binary, abstain3 or sxs3.
    #[arg(long, default_value = "real")]
    kind: String,
    /// Linearize abstain3 labels first: natural or signed.
    #[arg(long)]
    linearize: Option<String>,
    /// Estimator name (classical_mean, classical_proportion_cp, ...,
    /// difference_bayes, stratified, chain_rule, sxs_chain_rule, ...).
    #[arg(long)]
    method: String,
    #[command(flatten)]
    modifiers: MethodArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Labeled pool CSV; every row carries both f and y.
    #[arg(long)]
    labeled: PathBuf,
    /// Optional extra unlabeled CSV appended to every subsample's pool.
    #[arg(long)]
    unlabeled: Option<PathBuf>,
    /// Label domain: real or binary.
    #[arg(long, default_value = "real")]
    kind: String,
    /// Comma-separated method names; a classical baseline row is always added.
    #[arg(long)]
    methods: String,
    /// Comma-separated labeled subsample sizes.
    #[arg(long)]
    n_values: String,
    /// Subsample trials per (method, n) cell.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    modifiers: MethodArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct MinNArgs {
    /// Labeled pool CSV; every row carries both f and y.
    #[arg(long)]
    labeled: PathBuf,
    /// Optional extra unlabeled CSV appended to every subsample's pool.
    #[arg(long)]
    unlabeled: Option<PathBuf>,
    /// Label domain: real or binary.
    #[arg(long, default_value = "real")]
    kind: String,
    /// Subsample trials averaged per candidate n.
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Estimator to search over.
    #[arg(long)]
    method: String,
    #[command(flatten)]
    modifiers: MethodArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct PairsArgs {
    /// Model A per-item CSV (id, f, y with 0/1 values).
    #[arg(long)]
    model_a: PathBuf,
    /// Model B per-item CSV with the same ids.
    #[arg(long)]
    model_b: PathBuf,
    /// Comma-separated labeled subsample sizes.
    #[arg(long, default_value = "50,100,200,400")]
    n_values: String,
    /// Subsample trials per n.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CoverageArgs {
    /// World family: fig1, a3, regime, bimodal or sxs.
    #[arg(long, default_value = "fig1")]
    world: String,
    /// Coverage trials.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Inclusive labeled-size range "lo,hi".
    #[arg(long, default_value = "100,500")]
    n_range: String,
    /// Inclusive unlabeled-size range "lo,hi".
    #[arg(long = "N-range", default_value = "3000,4000")]
    big_n_range: String,
    /// Write per-trial records to this CSV.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Recheck K failing worlds with fresh data (0 = off).
    #[arg(long, default_value_t = 0)]
    recheck: usize,
    /// Recheck trials per selected world (or total, when resampling).
    #[arg(long, default_value_t = 1000)]
    recheck_trials: usize,
    /// Recheck mode: fixed (a fixed set of worlds) or resample (one draw per trial).
    #[arg(long, default_value = "fixed")]
    recheck_mode: String,
    /// Estimator under test.
    #[arg(long, default_value = "chain_rule")]
    method: String,
    #[command(flatten)]
    modifiers: MethodArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SynthArgs {
    /// World family: fig1, regime, bimodal or sxs.
    #[arg(long, default_value = "fig1")]
    world: String,
    /// Labeled rows to generate.
    #[arg(long, default_value_t = 300)]
    n: usize,
    /// Unlabeled rows to generate.
    #[arg(long = "N", default_value_t = 3000)]
    big_n: usize,
    /// Labeled CSV output path.
    #[arg(long)]
    labeled_out: PathBuf,
    /// Unlabeled CSV output path.
    #[arg(long)]
    unlabeled_out: PathBuf,
    /// RNG seed (falls back to PPI_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::MinN(args) => cmd_min_n(args),
        Command::Pairs(args) => cmd_pairs(args),
        Command::Coverage(args) => cmd_coverage(args),
        Command::Synth(args) => cmd_synth(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(if e.is_validation() { 2 } else { 1 });
    }
}

fn load_pool(
    labeled: &PathBuf,
    unlabeled: Option<&PathBuf>,
    kind: LabelKind,
) -> Result<Dataset> {
    match unlabeled {
        Some(u) => load_csv(labeled, u, kind),
        None => {
            let labeled = load_labeled_csv(labeled, kind)?;
            if labeled.is_empty() {
                return Err(Error::DataOther("labeled pool is empty".into()));
            }
            Ok(Dataset { labeled, unlabeled: vec![], kind })
        }
    }
}

fn parse_list(s: &str, flag: &str) -> Result<Vec<usize>> {
    let values: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidArgument(format!("{flag} expects comma-separated integers, got {s:?}")))?;
    if values.is_empty() {
        return Err(Error::InvalidArgument(format!("{flag} must be non-empty")));
    }
    Ok(values)
}

fn parse_range(s: &str, flag: &str) -> Result<(usize, usize)> {
    let v = parse_list(s, flag)?;
    if v.len() != 2 || v[0] > v[1] || v[0] == 0 {
        return Err(Error::InvalidArgument(format!("{flag} expects \"lo,hi\" with 0 < lo <= hi")));
    }
    Ok((v[0], v[1]))
}

fn emit(out: Option<&PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content).map_err(Error::from),
        None => {
            std::io::stdout().write_all(content.as_bytes()).map_err(Error::from)
        }
    }
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let kind = LabelKind::parse(&args.kind)?;
    let cfg = args.common.engine_config()?;
    let opts = args.modifiers.opts()?;
    let mut data = load_csv(&args.labeled, &args.unlabeled, kind)?;
    if let Some(scheme) = &args.linearize {
        data = linearize(&data, &Linearization::parse(scheme)?)?;
    }
    let report = run_method(&data, &args.method, &cfg, &opts)?;
    println!("{}", serde_json::to_string_pretty(&report.to_json())?);
    Ok(())
}

/// Pool-wide human mean: the proxy truth sweep coverage is scored against.
fn pool_truth(pool: &Dataset) -> Result<f64> {
    let (_, ys) = pool.fy_real()?;
    Ok(ys.iter().sum::<f64>() / ys.len() as f64)
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let kind = LabelKind::parse(&args.kind)?;
    let cfg = args.common.engine_config()?;
    let opts = args.modifiers.opts()?;
    let pool = load_pool(&args.labeled, args.unlabeled.as_ref(), kind)?;
    let n_values = parse_list(&args.n_values, "--n-values")?;
    if args.trials == 0 {
        return Err(Error::InvalidArgument("--trials must be >= 1".into()));
    }
    let baseline = baseline_method(kind)?;
    let mut methods = vec![baseline.to_string()];
    for m in args.methods.split(',').map(str::trim).filter(|m| !m.is_empty()) {
        if m != baseline {
            methods.push(m.to_string());
        }
    }
    let truth = pool_truth(&pool)?;
    let seed = cfg.seed;

    let mut lines = vec!["method,n,trials,coverage,mean_width,width_ratio".to_string()];
    for (ni, &n) in n_values.iter().enumerate() {
        if n > pool.n() {
            return Err(Error::InvalidArgument(format!(
                "n = {n} exceeds the labeled pool size {}",
                pool.n()
            )));
        }
        // Methods share the per-trial subsample so ratios compare like
        // with like.
        let subsamples: Vec<Dataset> = (0..args.trials)
            .map(|t| {
                let mut rng = substream(seed, &[20, ni as u64, t as u64]);
                subsample_split(&pool, n, &mut rng)
            })
            .collect::<Result<_>>()?;
        let mut baseline_width = 0.0;
        for (mi, method) in methods.iter().enumerate() {
            let mut widths = 0.0;
            let mut hits = 0usize;
            for (t, data) in subsamples.iter().enumerate() {
                let trial_cfg = EngineConfig {
                    seed: derive_key(seed, &[21, mi as u64, ni as u64, t as u64]),
                    ..cfg.clone()
                };
                let report = run_method(data, method, &trial_cfg, &opts)?;
                widths += report.interval.width;
                if report.interval.lo <= truth && truth <= report.interval.hi {
                    hits += 1;
                }
            }
            let mean_width = widths / args.trials as f64;
            if mi == 0 {
                baseline_width = mean_width;
            }
            let ratio = if mi == 0 { 1.0 } else { mean_width / baseline_width };
            let coverage = hits as f64 / args.trials as f64;
            lines.push(format!("{method},{n},{},{coverage},{mean_width},{ratio}", args.trials));
        }
    }
    emit(args.out.as_ref(), &(lines.join("\n") + "\n"))
}

fn cmd_min_n(args: MinNArgs) -> Result<()> {
    let kind = LabelKind::parse(&args.kind)?;
    let cfg = args.common.engine_config()?;
    let opts = args.modifiers.opts()?;
    let pool = load_pool(&args.labeled, args.unlabeled.as_ref(), kind)?;
    if args.trials == 0 {
        return Err(Error::InvalidArgument("--trials must be >= 1".into()));
    }
    let pool_size = pool.n();
    let seed = cfg.seed;

    // Classical baseline on the full labeled pool.
    let baseline =
        run_method(&pool, baseline_method(kind)?, &cfg, &opts)?.interval.width;

    let mean_width = |n: usize| -> Result<f64> {
        let mut total = 0.0;
        for t in 0..args.trials {
            let mut rng = substream(seed, &[10, n as u64, t as u64]);
            let data = subsample_split(&pool, n, &mut rng)?;
            let trial_cfg =
                EngineConfig { seed: derive_key(seed, &[11, n as u64, t as u64]), ..cfg.clone() };
            total += run_method(&data, &args.method, &trial_cfg, &opts)?.interval.width;
        }
        Ok(total / args.trials as f64)
    };

    // Coarse ascending grid, then bisection inside the first beating
    // bracket. Widths shrink with n, so the bracket invariant is
    // width(hi) <= baseline < width(lo).
    let n_floor = 20.min(pool_size);
    let grid: Vec<usize> = (0..8)
        .map(|i| n_floor + (pool_size - n_floor) * i / 7)
        .collect();
    let mut bracket = None;
    let mut prev = n_floor;
    for &n in &grid {
        // Infeasible grid points (the method's preconditions fail, e.g.
        // nothing left for the unlabeled part) count as not beating.
        match mean_width(n) {
            Ok(w) if w <= baseline => {
                bracket = Some((prev, n));
                break;
            }
            _ => prev = n,
        }
    }
    let (n_min, beaten) = match bracket {
        None => (pool_size, false),
        Some((mut lo, mut hi)) => {
            if hi == n_floor {
                lo = 2;
            }
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                match mean_width(mid) {
                    Ok(w) if w <= baseline => hi = mid,
                    Ok(_) => lo = mid,
                    // Too small for the method's preconditions: push up.
                    Err(_) => lo = mid,
                }
            }
            (hi, true)
        }
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "method": args.method,
            "baseline_width": baseline,
            "pool_size": pool_size,
            "n_min": n_min,
            "ratio": n_min as f64 / pool_size as f64,
            "beaten": beaten,
            "trials": args.trials,
            "seed": seed,
        }))?
    );
    Ok(())
}

fn ratings(records: &[LabeledRecord], path: &PathBuf) -> Result<(BTreeMap<String, u8>, BTreeMap<String, u8>)> {
    let mut autorater = BTreeMap::new();
    let mut human = BTreeMap::new();
    for r in records {
        let id = r.id.clone().ok_or_else(|| {
            Error::DataOther(format!("{}: pairs requires an id column", path.display()))
        })?;
        autorater.insert(id.clone(), r.f.as_real()? as u8);
        human.insert(id, r.y.as_real()? as u8);
    }
    Ok((autorater, human))
}

fn cmd_pairs(args: PairsArgs) -> Result<()> {
    let cfg = args.common.engine_config()?;
    let n_values = parse_list(&args.n_values, "--n-values")?;
    if args.trials == 0 {
        return Err(Error::InvalidArgument("--trials must be >= 1".into()));
    }
    let recs_a = load_labeled_csv(&args.model_a, LabelKind::Binary)?;
    let recs_b = load_labeled_csv(&args.model_b, LabelKind::Binary)?;
    let (auto_a, human_a) = ratings(&recs_a, &args.model_a)?;
    let (auto_b, human_b) = ratings(&recs_b, &args.model_b)?;
    let h_sxs = synthesize_sxs(&human_a, &human_b)?;
    let a_sxs = synthesize_sxs(&auto_a, &auto_b)?;
    let ids: Vec<&String> = h_sxs.keys().collect();
    let seed = cfg.seed;

    let mut lines = vec!["n,trials,classical_fraction,chain_rule_fraction".to_string()];
    for (ni, &n) in n_values.iter().enumerate() {
        if n == 0 || n > ids.len() {
            return Err(Error::InvalidArgument(format!(
                "n = {n} must be in 1..={}",
                ids.len()
            )));
        }
        let mut classical_sep = 0usize;
        let mut chain_sep = 0usize;
        for t in 0..args.trials {
            let mut rng = substream(seed, &[30, ni as u64, t as u64]);
            let mut order = ids.clone();
            order.shuffle(&mut rng);
            let labeled: Vec<(u8, u8)> =
                order[..n].iter().map(|id| (a_sxs[*id], h_sxs[*id])).collect();
            let unlabeled: Vec<u8> = order[n..].iter().map(|id| a_sxs[*id]).collect();
            let hs: Vec<u8> = labeled.iter().map(|&(_, h)| h).collect();
            let trial_cfg = EngineConfig {
                seed: derive_key(seed, &[31, ni as u64, t as u64]),
                ..cfg.clone()
            };
            let classical = ppi::estimators::sxs_classical_paired(&hs, &trial_cfg)?;
            if classical.interval.lo > 0.0 {
                classical_sep += 1;
            }
            if !unlabeled.is_empty() {
                let chain = ppi::estimators::sxs_estimate(&labeled, &unlabeled, &trial_cfg)?;
                if chain.interval.lo > 0.0 {
                    chain_sep += 1;
                }
            }
        }
        lines.push(format!(
            "{n},{},{},{}",
            args.trials,
            classical_sep as f64 / args.trials as f64,
            chain_sep as f64 / args.trials as f64
        ));
    }
    emit(args.out.as_ref(), &(lines.join("\n") + "\n"))
}

fn cmd_coverage(args: CoverageArgs) -> Result<()> {
    let cfg = args.common.engine_config()?;
    let opts = args.modifiers.opts()?;
    let n_range = parse_range(&args.n_range, "--n-range")?;
    let big_n_range = parse_range(&args.big_n_range, "--N-range")?;
    let seed = cfg.seed;
    let source = world_source(&args.world, seed)?;
    let estimator = estimator_for(args.method.clone(), cfg, opts);

    let report = coverage_run(
        |rng| source(rng),
        &estimator,
        args.trials,
        n_range,
        big_n_range,
        seed,
    )?;
    if let Some(path) = &args.out_csv {
        report.write_csv(path)?;
    }
    let mut out = report.to_json();
    if args.recheck > 0 {
        let mode = match args.recheck_mode.as_str() {
            "fixed" => RecheckMode::FixedSet { k_thetas: args.recheck },
            "resample" => RecheckMode::ResamplePerTrial,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown recheck mode {other:?} (expected fixed or resample)"
                )))
            }
        };
        let recheck = frequentist_recheck(
            &report.failures,
            args.recheck_trials,
            mode,
            n_range,
            big_n_range,
            &estimator,
            seed,
        )?;
        out.as_object_mut().unwrap().insert("recheck".into(), recheck.to_json());
    }
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let seed = CommonArgs {
        level: 0.95,
        samples: 10_000,
        replicates: 10_000,
        engine: "mci".into(),
        seed: args.seed,
    }
    .seed()?;
    let world = match args.world.as_str() {
        "fig1" => World::Binary(BinaryWorld::fig1_preset()),
        "regime" => World::Regime(RegimeBiasWorld::two_regime_preset()),
        "bimodal" => World::Regime(RegimeBiasWorld::bimodal_preset()),
        "sxs" => World::Sxs(sxs_preset()),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown world {other:?} (expected fig1, regime, bimodal or sxs)"
            )))
        }
    };
    if args.n == 0 || args.big_n == 0 {
        return Err(Error::InvalidArgument("--n and --N must be >= 1".into()));
    }
    let mut rng = substream(seed, &[40]);
    let data = world.generate(args.n, args.big_n, &mut rng);
    write_csv(&data, &args.labeled_out, &args.unlabeled_out)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "world": args.world,
            "n": args.n,
            "N": args.big_n,
            "target": world.target(),
            "seed": seed,
            "labeled": args.labeled_out,
            "unlabeled": args.unlabeled_out,
        }))?
    );
    Ok(())
}
