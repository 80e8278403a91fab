//! Synthetic worlds and coverage harnesses.
//!
//! Worlds are small parametric populations with a known target: binary
//! human/autorater pairs, continuous scores with per-regime bias, and
//! three-way side-by-side verdicts. The coverage harness repeatedly
//! samples a world, generates a dataset, runs an estimator, and records
//! whether the interval contains the world's true target; the frequentist
//! recheck re-tests coverage-failing worlds at fixed parameters.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde_json::json;

use crate::dataio::{Dataset, LabelKind, LabeledRecord, UnlabeledRecord, Value};
use crate::error::{Error, Result};
use crate::posterior::{fit_proportion, ProportionPosterior};
use crate::rng::{derive_key, substream};

fn unit_open(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::InvalidArgument(format!("{name} must be in (0, 1), got {v}")));
    }
    Ok(())
}

/// Joint binary law for (H, A), parametrized by the human marginal and
/// the autorater conditionals.
#[derive(Debug, Clone, Copy)]
pub struct BinaryWorld {
    pub p_h: f64,
    pub p_a_given_h1: f64,
    pub p_a_given_h0: f64,
}

impl BinaryWorld {
    pub fn new(p_h: f64, p_a_given_h1: f64, p_a_given_h0: f64) -> Result<Self> {
        unit_open("p_H", p_h)?;
        unit_open("p_A_given_H1", p_a_given_h1)?;
        unit_open("p_A_given_H0", p_a_given_h0)?;
        let w = BinaryWorld { p_h, p_a_given_h1, p_a_given_h0 };
        unit_open("implied P(A=1)", w.p_a())?;
        Ok(w)
    }

    /// Build from the A-factorization p(A), p(H|A=1), p(H|A=0) by Bayes
    /// inversion.
    pub fn from_conditionals(p_a: f64, p_h_given_a1: f64, p_h_given_a0: f64) -> Result<Self> {
        unit_open("p_A", p_a)?;
        unit_open("p_H_given_A1", p_h_given_a1)?;
        unit_open("p_H_given_A0", p_h_given_a0)?;
        let p_h = p_h_given_a1 * p_a + p_h_given_a0 * (1.0 - p_a);
        Self::new(
            p_h,
            p_h_given_a1 * p_a / p_h,
            (1.0 - p_h_given_a1) * p_a / (1.0 - p_h),
        )
    }

    /// Marginals P(H=1) = 0.733 and P(A=1) ~= 0.700.
    pub fn fig1_preset() -> Self {
        BinaryWorld { p_h: 0.733, p_a_given_h1: 0.88, p_a_given_h0: 0.206 }
    }

    pub fn p_a(&self) -> f64 {
        self.p_h * self.p_a_given_h1 + (1.0 - self.p_h) * self.p_a_given_h0
    }
}

/// Per-item generator for a binary world: h then a | h.
pub fn gen_binary(world: &BinaryWorld, n: usize, big_n: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let draw = |rng: &mut ChaCha8Rng| {
        let h = u8::from(rng.gen::<f64>() < world.p_h);
        let p_a = if h == 1 { world.p_a_given_h1 } else { world.p_a_given_h0 };
        let a = u8::from(rng.gen::<f64>() < p_a);
        (a, h)
    };
    let labeled = (0..n)
        .map(|_| {
            let (a, h) = draw(rng);
            LabeledRecord {
                id: None,
                f: Value::Real(a as f64),
                y: Value::Real(h as f64),
                fallback: None,
            }
        })
        .collect();
    let unlabeled = (0..big_n)
        .map(|_| {
            let (a, _) = draw(rng);
            UnlabeledRecord { id: None, f: Value::Real(a as f64), fallback: None }
        })
        .collect();
    Dataset { labeled, unlabeled, kind: LabelKind::Binary }
}

/// Score distribution inside one regime.
#[derive(Debug, Clone, Copy)]
pub enum FDist {
    Uniform(f64, f64),
    Point(f64),
}

impl FDist {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            FDist::Uniform(lo, hi) => rng.gen_range(lo..hi),
            FDist::Point(v) => v,
        }
    }

    fn mean(&self) -> f64 {
        match *self {
            FDist::Uniform(lo, hi) => (lo + hi) / 2.0,
            FDist::Point(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Regime {
    pub weight: f64,
    pub f_dist: FDist,
    pub bias: f64,
    pub noise: f64,
}

/// Continuous-score world: y = f + regime bias + Gaussian noise.
#[derive(Debug, Clone)]
pub struct RegimeBiasWorld {
    pub regimes: Vec<Regime>,
}

impl RegimeBiasWorld {
    pub fn new(regimes: Vec<Regime>) -> Result<Self> {
        if regimes.is_empty() {
            return Err(Error::InvalidArgument("at least one regime required".into()));
        }
        let total: f64 = regimes.iter().map(|r| r.weight).sum();
        if regimes.iter().any(|r| r.weight < 0.0 || r.noise < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(
                "regime weights must be non-negative and sum to 1".into(),
            ));
        }
        Ok(RegimeBiasWorld { regimes })
    }

    /// Two opposite-bias regimes split at the middle of the unit score
    /// range, with heavy within-regime noise.
    pub fn two_regime_preset() -> Self {
        RegimeBiasWorld {
            regimes: vec![
                Regime { weight: 0.5, f_dist: FDist::Uniform(0.0, 0.5), bias: 0.62, noise: 1.0 },
                Regime { weight: 0.5, f_dist: FDist::Uniform(0.5, 1.0), bias: -0.62, noise: 1.0 },
            ],
        }
    }

    /// Four regimes with bimodal residuals inside each half of the score
    /// range: the residual mean looks flat to a coarse fit, but a constant
    /// rectifier is badly miscalibrated.
    pub fn bimodal_preset() -> Self {
        RegimeBiasWorld {
            regimes: vec![
                Regime { weight: 0.25, f_dist: FDist::Uniform(0.0, 0.5), bias: 1.62, noise: 0.05 },
                Regime { weight: 0.25, f_dist: FDist::Uniform(0.0, 0.5), bias: -0.38, noise: 0.05 },
                Regime { weight: 0.25, f_dist: FDist::Uniform(0.5, 1.0), bias: 0.38, noise: 0.05 },
                Regime { weight: 0.25, f_dist: FDist::Uniform(0.5, 1.0), bias: -1.62, noise: 0.05 },
            ],
        }
    }

    /// True mean of y under the world.
    pub fn mean_y(&self) -> f64 {
        self.regimes.iter().map(|r| r.weight * (r.f_dist.mean() + r.bias)).sum()
    }

    fn pick_regime(&self, rng: &mut ChaCha8Rng) -> &Regime {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for r in &self.regimes {
            acc += r.weight;
            if u < acc {
                return r;
            }
        }
        self.regimes.last().unwrap()
    }
}

pub fn gen_regime(world: &RegimeBiasWorld, n: usize, big_n: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let gauss = Normal::new(0.0, 1.0).unwrap();
    let draw = |rng: &mut ChaCha8Rng| {
        let r = world.pick_regime(rng);
        let f = r.f_dist.sample(rng);
        let y = f + r.bias + r.noise * gauss.sample(rng);
        (f, y)
    };
    let labeled = (0..n)
        .map(|_| {
            let (f, y) = draw(rng);
            LabeledRecord { id: None, f: Value::Real(f), y: Value::Real(y), fallback: None }
        })
        .collect();
    let unlabeled = (0..big_n)
        .map(|_| {
            let (f, _) = draw(rng);
            UnlabeledRecord { id: None, f: Value::Real(f), fallback: None }
        })
        .collect();
    Dataset { labeled, unlabeled, kind: LabelKind::Real }
}

/// Side-by-side world in A-factorization: the autorater verdict marginal
/// and the human verdict conditionals, all over {w, l, t} = {0, 1, 2}.
#[derive(Debug, Clone, Copy)]
pub struct SxsWorld {
    pub p_a: [f64; 3],
    pub p_h_given_a: [[f64; 3]; 3],
}

fn check_simplex(name: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|&v| v < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "{name} must be a probability vector, got {p:?}"
        )));
    }
    Ok(())
}

impl SxsWorld {
    pub fn new(p_a: [f64; 3], p_h_given_a: [[f64; 3]; 3]) -> Result<Self> {
        check_simplex("p_a", &p_a)?;
        for (i, row) in p_h_given_a.iter().enumerate() {
            check_simplex(&format!("p_h_given_a[{i}]"), row)?;
        }
        Ok(SxsWorld { p_a, p_h_given_a })
    }

    /// Build from the human marginal and a confusion law p(A = a | H = h)
    /// (rows indexed by h), inverting to the A-factorization.
    pub fn from_h_marginal(p_h: [f64; 3], confusion: [[f64; 3]; 3]) -> Result<Self> {
        check_simplex("p_h", &p_h)?;
        for (i, row) in confusion.iter().enumerate() {
            check_simplex(&format!("confusion[{i}]"), row)?;
        }
        let mut p_a = [0.0; 3];
        for a in 0..3 {
            p_a[a] = (0..3).map(|h| p_h[h] * confusion[h][a]).sum();
        }
        let mut p_h_given_a = [[0.0; 3]; 3];
        for a in 0..3 {
            if p_a[a] <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "autorater verdict {a} has zero probability"
                )));
            }
            for h in 0..3 {
                p_h_given_a[a][h] = p_h[h] * confusion[h][a] / p_a[a];
            }
        }
        Self::new(p_a, p_h_given_a)
    }

    pub fn p_h(&self) -> [f64; 3] {
        let mut p = [0.0; 3];
        for h in 0..3 {
            p[h] = (0..3).map(|a| self.p_a[a] * self.p_h_given_a[a][h]).sum();
        }
        p
    }

    /// True target p(H = w) - p(H = l).
    pub fn margin(&self) -> f64 {
        let p = self.p_h();
        p[0] - p[1]
    }
}

fn sample_cat(p: &[f64; 3], rng: &mut ChaCha8Rng) -> u8 {
    let u: f64 = rng.gen();
    if u < p[0] {
        0
    } else if u < p[0] + p[1] {
        1
    } else {
        2
    }
}

pub fn gen_sxs(world: &SxsWorld, n: usize, big_n: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let draw = |rng: &mut ChaCha8Rng| {
        let a = sample_cat(&world.p_a, rng);
        let h = sample_cat(&world.p_h_given_a[a as usize], rng);
        (a, h)
    };
    let labeled = (0..n)
        .map(|_| {
            let (a, h) = draw(rng);
            LabeledRecord { id: None, f: Value::Code(a), y: Value::Code(h), fallback: None }
        })
        .collect();
    let unlabeled = (0..big_n)
        .map(|_| {
            let (a, _) = draw(rng);
            UnlabeledRecord { id: None, f: Value::Code(a), fallback: None }
        })
        .collect();
    Dataset { labeled, unlabeled, kind: LabelKind::Sxs3 }
}

/// Beta posteriors over a binary pool's p(A), p(H|A) and p(H|not A),
/// fitted on the pool's first `n_ref` labeled items.
#[derive(Debug, Clone)]
pub struct PoolPosterior {
    pub p_a: ProportionPosterior,
    pub h_given_a1: ProportionPosterior,
    pub h_given_a0: ProportionPosterior,
}

pub fn fit_world_from_pool(pool: &Dataset, n_ref: usize) -> Result<PoolPosterior> {
    if pool.kind != LabelKind::Binary {
        return Err(Error::InvalidArgument("pool fitting requires a binary dataset".into()));
    }
    if pool.n() < n_ref {
        return Err(Error::InvalidArgument(format!(
            "pool has {} labeled items, need n_ref = {n_ref}",
            pool.n()
        )));
    }
    let ah = pool.labeled_ah_binary()?;
    let head = &ah[..n_ref];
    let a1 = head.iter().filter(|&&(a, _)| a == 1).count() as u64;
    let h_a1 = head.iter().filter(|&&(a, h)| a == 1 && h == 1).count() as u64;
    let h_a0 = head.iter().filter(|&&(a, h)| a == 0 && h == 1).count() as u64;
    let n = n_ref as u64;
    Ok(PoolPosterior {
        p_a: fit_proportion(a1, n)?,
        h_given_a1: fit_proportion(h_a1, a1.max(1))?,
        h_given_a0: fit_proportion(h_a0, (n - a1).max(1))?,
    })
}

/// Samples binary worlds by picking a pool uniformly, then drawing the
/// three probabilities from that pool's Beta posteriors.
#[derive(Debug, Clone)]
pub struct WorldSampler {
    pub pools: Vec<PoolPosterior>,
}

impl WorldSampler {
    pub fn new(pools: Vec<PoolPosterior>) -> Result<Self> {
        if pools.is_empty() {
            return Err(Error::InvalidArgument("world sampler needs at least one pool".into()));
        }
        Ok(WorldSampler { pools })
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<BinaryWorld> {
        let pool = &self.pools[rng.gen_range(0..self.pools.len())];
        let clamp = |v: f64| v.clamp(1e-6, 1.0 - 1e-6);
        let draw = |p: &ProportionPosterior, rng: &mut ChaCha8Rng| -> Result<f64> {
            use crate::posterior::Posterior;
            Ok(clamp(Posterior::Proportion(p.clone()).draw(rng)?.as_scalar()))
        };
        let p_a = draw(&pool.p_a, rng)?;
        let q1 = draw(&pool.h_given_a1, rng)?;
        let q0 = draw(&pool.h_given_a0, rng)?;
        BinaryWorld::from_conditionals(p_a, q1, q0)
    }
}

/// Any world the coverage harness can draw from.
#[derive(Debug, Clone)]
pub enum World {
    Binary(BinaryWorld),
    Regime(RegimeBiasWorld),
    Sxs(SxsWorld),
}

impl World {
    /// The true estimand value.
    pub fn target(&self) -> f64 {
        match self {
            World::Binary(w) => w.p_h,
            World::Regime(w) => w.mean_y(),
            World::Sxs(w) => w.margin(),
        }
    }

    /// Flat parameter vector for reporting.
    pub fn theta(&self) -> Vec<f64> {
        match self {
            World::Binary(w) => vec![w.p_h, w.p_a_given_h1, w.p_a_given_h0],
            World::Regime(w) => {
                w.regimes.iter().flat_map(|r| [r.weight, r.bias, r.noise]).collect()
            }
            World::Sxs(w) => {
                let mut v = w.p_a.to_vec();
                for row in &w.p_h_given_a {
                    v.extend_from_slice(row);
                }
                v
            }
        }
    }

    pub fn generate(&self, n: usize, big_n: usize, rng: &mut ChaCha8Rng) -> Dataset {
        match self {
            World::Binary(w) => gen_binary(w, n, big_n, rng),
            World::Regime(w) => gen_regime(w, n, big_n, rng),
            World::Sxs(w) => gen_sxs(w, n, big_n, rng),
        }
    }
}

/// One coverage trial's outcome.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub theta: Vec<f64>,
    pub target: f64,
    pub n: usize,
    pub big_n: usize,
    pub lo: f64,
    pub hi: f64,
    pub hit: bool,
}

#[derive(Debug, Clone)]
pub struct CoverageReport {
    pub trials: usize,
    pub hits: usize,
    pub failed_to_run: usize,
    pub records: Vec<TrialRecord>,
    /// Coverage-failing worlds with the trial index that produced them.
    pub failures: Vec<(World, u64)>,
}

impl CoverageReport {
    /// Fraction of completed trials whose interval contained the target.
    pub fn coverage(&self) -> f64 {
        let completed = self.trials - self.failed_to_run;
        self.hits as f64 / completed as f64
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "trials": self.trials,
            "completed": self.trials - self.failed_to_run,
            "failed_to_run": self.failed_to_run,
            "hits": self.hits,
            "coverage": self.coverage(),
            "failures": self.failures.len(),
        })
    }

    /// One CSV row per completed trial.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["trial", "theta", "target", "n", "N", "lo", "hi", "hit"])?;
        for r in &self.records {
            let theta = r
                .theta
                .iter()
                .map(|v| format!("{v}"))
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                r.trial.to_string(),
                theta,
                format!("{}", r.target),
                r.n.to_string(),
                r.big_n.to_string(),
                format!("{}", r.lo),
                format!("{}", r.hi),
                (r.hit as u8).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

// Substream tags under the coverage master seed.
const TRIAL_WORLD: u64 = 0;
const TRIAL_DATA: u64 = 1;
const TRIAL_ENGINE: u64 = 2;

fn sample_size(rng: &mut ChaCha8Rng, range: (usize, usize)) -> usize {
    Uniform::new_inclusive(range.0, range.1).sample(rng)
}

/// Run `trials` coverage trials. Each trial draws a world, sizes n and N
/// uniformly from the inclusive ranges, generates a dataset, and calls the
/// estimator with a trial-specific engine seed. Estimator errors count as
/// failed-to-run, not as misses. Trials run in parallel; every stream is
/// derived from (seed, trial index), so results are order-independent.
pub fn coverage_run<W, E>(
    sample_world: W,
    estimator: E,
    trials: usize,
    n_range: (usize, usize),
    big_n_range: (usize, usize),
    seed: u64,
) -> Result<CoverageReport>
where
    W: Fn(&mut ChaCha8Rng) -> Result<World> + Sync,
    E: Fn(&Dataset, u64) -> Result<(f64, f64)> + Sync,
{
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let outcomes: Vec<Result<(TrialRecord, World)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let ti = t as u64;
            let mut wrng = substream(seed, &[TRIAL_WORLD, ti]);
            let world = sample_world(&mut wrng)?;
            let n = sample_size(&mut wrng, n_range);
            let big_n = sample_size(&mut wrng, big_n_range);
            let mut drng = substream(seed, &[TRIAL_DATA, ti]);
            let data = world.generate(n, big_n, &mut drng);
            let engine_seed = derive_key(seed, &[TRIAL_ENGINE, ti]);
            let (lo, hi) = estimator(&data, engine_seed)?;
            let target = world.target();
            let hit = lo <= target && target <= hi;
            Ok((
                TrialRecord { trial: t, theta: world.theta(), target, n, big_n, lo, hi, hit },
                world,
            ))
        })
        .collect();

    let mut report = CoverageReport {
        trials,
        hits: 0,
        failed_to_run: 0,
        records: Vec::new(),
        failures: Vec::new(),
    };
    for (t, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok((record, world)) => {
                if record.hit {
                    report.hits += 1;
                } else {
                    report.failures.push((world, t as u64));
                }
                report.records.push(record);
            }
            Err(_) => report.failed_to_run += 1,
        }
    }
    Ok(report)
}

/// Recheck protocol: either fix a set of failing worlds and run a block
/// of trials for each, or draw a random failing world per trial.
#[derive(Debug, Clone, Copy)]
pub enum RecheckMode {
    /// Sample `k_thetas` failures (without replacement) and run
    /// `per_theta_trials` fresh datasets for each.
    FixedSet { k_thetas: usize },
    /// Each of `per_theta_trials` total trials draws a failing world at
    /// random.
    ResamplePerTrial,
}

#[derive(Debug, Clone)]
pub struct RecheckReport {
    pub per_theta_trials: usize,
    /// Miss counts, one entry per selected world (one pooled entry under
    /// ResamplePerTrial).
    pub per_theta_failures: Vec<usize>,
    pub total_trials: usize,
    pub total_failures: usize,
    pub failed_to_run: usize,
}

impl RecheckReport {
    pub fn pooled_failure_rate(&self) -> f64 {
        self.total_failures as f64 / (self.total_trials - self.failed_to_run) as f64
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "per_theta_trials": self.per_theta_trials,
            "per_theta_failures": self.per_theta_failures,
            "total_trials": self.total_trials,
            "total_failures": self.total_failures,
            "failed_to_run": self.failed_to_run,
            "pooled_failure_rate": self.pooled_failure_rate(),
        })
    }
}

/// Re-test coverage at fixed failing worlds with fresh data.
pub fn frequentist_recheck<E>(
    failures: &[(World, u64)],
    per_theta_trials: usize,
    mode: RecheckMode,
    n_range: (usize, usize),
    big_n_range: (usize, usize),
    estimator: E,
    seed: u64,
) -> Result<RecheckReport>
where
    E: Fn(&Dataset, u64) -> Result<(f64, f64)> + Sync,
{
    if failures.is_empty() {
        return Err(Error::InvalidArgument("no coverage failures to recheck".into()));
    }
    if per_theta_trials == 0 {
        return Err(Error::InvalidArgument("per_theta_trials must be >= 1".into()));
    }

    let run_block = |worlds: &[&World], block: u64| -> (usize, usize) {
        let outcomes: Vec<Option<bool>> = (0..worlds.len())
            .into_par_iter()
            .map(|t| {
                let ti = block * worlds.len() as u64 + t as u64;
                let world = worlds[t];
                let mut wrng = substream(seed, &[TRIAL_WORLD, ti]);
                let n = sample_size(&mut wrng, n_range);
                let big_n = sample_size(&mut wrng, big_n_range);
                let mut drng = substream(seed, &[TRIAL_DATA, ti]);
                let data = world.generate(n, big_n, &mut drng);
                let engine_seed = derive_key(seed, &[TRIAL_ENGINE, ti]);
                match estimator(&data, engine_seed) {
                    Ok((lo, hi)) => {
                        let target = world.target();
                        Some(!(lo <= target && target <= hi))
                    }
                    Err(_) => None,
                }
            })
            .collect();
        let misses = outcomes.iter().filter(|o| **o == Some(true)).count();
        let failed = outcomes.iter().filter(|o| o.is_none()).count();
        (misses, failed)
    };

    let mut rng = substream(seed, &[3]);
    match mode {
        RecheckMode::FixedSet { k_thetas } => {
            let k = k_thetas.min(failures.len());
            let mut idx: Vec<usize> = (0..failures.len()).collect();
            // Partial Fisher-Yates for a without-replacement sample.
            for i in 0..k {
                let j = rng.gen_range(i..idx.len());
                idx.swap(i, j);
            }
            let mut per_theta_failures = Vec::with_capacity(k);
            let mut total_failures = 0;
            let mut failed_to_run = 0;
            for (bi, &fi) in idx[..k].iter().enumerate() {
                let worlds: Vec<&World> = vec![&failures[fi].0; per_theta_trials];
                let (misses, failed) = run_block(&worlds, bi as u64);
                per_theta_failures.push(misses);
                total_failures += misses;
                failed_to_run += failed;
            }
            Ok(RecheckReport {
                per_theta_trials,
                per_theta_failures,
                total_trials: k * per_theta_trials,
                total_failures,
                failed_to_run,
            })
        }
        RecheckMode::ResamplePerTrial => {
            let worlds: Vec<&World> = (0..per_theta_trials)
                .map(|_| &failures[rng.gen_range(0..failures.len())].0)
                .collect();
            let (misses, failed) = run_block(&worlds, 0);
            Ok(RecheckReport {
                per_theta_trials,
                per_theta_failures: vec![misses],
                total_trials: per_theta_trials,
                total_failures: misses,
                failed_to_run: failed,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EngineConfig;
    use crate::estimators::{classical_proportion, ProportionVariant};

    #[test]
    fn fig1_preset_marginals() {
        let w = BinaryWorld::fig1_preset();
        assert!((w.p_a() - 0.700).abs() < 5e-4, "p_a {}", w.p_a());
    }

    #[test]
    fn conditional_round_trip() {
        let w = BinaryWorld::new(0.65, 0.82, 0.25).unwrap();
        let p_a = w.p_a();
        let q1 = w.p_h * w.p_a_given_h1 / p_a;
        let q0 = w.p_h * (1.0 - w.p_a_given_h1) / (1.0 - p_a);
        let back = BinaryWorld::from_conditionals(p_a, q1, q0).unwrap();
        assert!((back.p_h - w.p_h).abs() < 1e-12);
        assert!((back.p_a_given_h1 - w.p_a_given_h1).abs() < 1e-12);
        assert!((back.p_a_given_h0 - w.p_a_given_h0).abs() < 1e-12);
    }

    #[test]
    fn binary_generator_marginals() {
        let w = BinaryWorld::fig1_preset();
        let mut rng = substream(1, &[]);
        let d = gen_binary(&w, 100_000, 1, &mut rng);
        let ah = d.labeled_ah_binary().unwrap();
        let p_h = ah.iter().filter(|&&(_, h)| h == 1).count() as f64 / ah.len() as f64;
        let p_a = ah.iter().filter(|&&(a, _)| a == 1).count() as f64 / ah.len() as f64;
        assert!((p_h - 0.733).abs() < 0.005, "p_h {p_h}");
        assert!((p_a - 0.700).abs() < 0.005, "p_a {p_a}");
    }

    #[test]
    fn regime_generator_variance_structure() {
        // One regime, no bias, no noise: y = f exactly.
        let w = RegimeBiasWorld::new(vec![Regime {
            weight: 1.0,
            f_dist: FDist::Uniform(0.0, 1.0),
            bias: 0.0,
            noise: 0.0,
        }])
        .unwrap();
        let mut rng = substream(2, &[]);
        let d = gen_regime(&w, 100, 10, &mut rng);
        let (f, y) = d.fy_real().unwrap();
        assert_eq!(f, y);

        // Two opposite unit biases split at f = 2.5 with small noise:
        // residual variance is ~1 globally and ~noise^2 per regime.
        let noise = 0.1;
        let w = RegimeBiasWorld::new(vec![
            Regime { weight: 0.5, f_dist: FDist::Uniform(0.0, 2.5), bias: 1.0, noise },
            Regime { weight: 0.5, f_dist: FDist::Uniform(2.5, 5.0), bias: -1.0, noise },
        ])
        .unwrap();
        let d = gen_regime(&w, 20_000, 10, &mut rng);
        let (f, y) = d.fy_real().unwrap();
        let resid: Vec<f64> = y.iter().zip(&f).map(|(y, f)| y - f).collect();
        let (_, var) = crate::posterior::mean_and_variance(&resid).unwrap();
        assert!((var - (1.0 + noise * noise)).abs() < 0.05, "global var {var}");
        for half in [true, false] {
            let sub: Vec<f64> = resid
                .iter()
                .zip(&f)
                .filter(|(_, f)| (**f <= 2.5) == half)
                .map(|(r, _)| *r)
                .collect();
            let (_, v) = crate::posterior::mean_and_variance(&sub).unwrap();
            assert!((v - noise * noise).abs() < 0.01, "regime var {v}");
        }
    }

    #[test]
    fn sxs_world_inversion_and_marginals() {
        let p_h = [0.35, 0.25, 0.40];
        let mut confusion = [[0.0; 3]; 3];
        for h in 0..3 {
            for a in 0..3 {
                confusion[h][a] = if h == a { 0.85 } else { 0.075 };
            }
        }
        let w = SxsWorld::from_h_marginal(p_h, confusion).unwrap();
        let back = w.p_h();
        for i in 0..3 {
            assert!((back[i] - p_h[i]).abs() < 1e-12, "p_h[{i}]");
        }
        assert!((w.margin() - 0.1).abs() < 1e-12);

        let mut rng = substream(3, &[]);
        let d = gen_sxs(&w, 50_000, 1, &mut rng);
        let ah = d.labeled_ah_sxs().unwrap();
        let emp_w = ah.iter().filter(|&&(_, h)| h == 0).count() as f64 / ah.len() as f64;
        let emp_l = ah.iter().filter(|&&(_, h)| h == 1).count() as f64 / ah.len() as f64;
        assert!(((emp_w - emp_l) - 0.1).abs() < 0.01);
    }

    #[test]
    fn pool_fit_delegates_to_beta_counts() {
        let w = BinaryWorld::fig1_preset();
        let mut rng = substream(4, &[]);
        let d = gen_binary(&w, 300, 1, &mut rng);
        let pp = fit_world_from_pool(&d, 300).unwrap();
        let ah = d.labeled_ah_binary().unwrap();
        let a1 = ah.iter().filter(|&&(a, _)| a == 1).count() as u64;
        let expect = fit_proportion(a1, 300).unwrap();
        assert_eq!(pp.p_a.alpha, expect.alpha);
        assert_eq!(pp.p_a.beta, expect.beta);
        assert!(fit_world_from_pool(&d, 301).is_err());
    }

    #[test]
    fn world_sampler_produces_valid_worlds() {
        let mut rng = substream(5, &[]);
        let pools: Vec<PoolPosterior> = (0..3)
            .map(|_| {
                let w = BinaryWorld::fig1_preset();
                let d = gen_binary(&w, 300, 1, &mut rng);
                fit_world_from_pool(&d, 300).unwrap()
            })
            .collect();
        let sampler = WorldSampler::new(pools).unwrap();
        for _ in 0..100 {
            let w = sampler.sample(&mut rng).unwrap();
            assert!(w.p_h > 0.0 && w.p_h < 1.0);
            assert!(w.p_a() > 0.0 && w.p_a() < 1.0);
        }
    }

    fn cp_estimator(level: f64) -> impl Fn(&Dataset, u64) -> Result<(f64, f64)> + Sync {
        move |data: &Dataset, seed: u64| {
            let ah = data.labeled_ah_binary()?;
            let k = ah.iter().filter(|&&(_, h)| h == 1).count() as u64;
            let cfg = EngineConfig { level, seed, ..Default::default() };
            let r = classical_proportion(k, ah.len() as u64, &cfg, ProportionVariant::ClopperPearson)?;
            Ok((r.interval.lo, r.interval.hi))
        }
    }

    #[test]
    fn clopper_pearson_coverage_conservative() {
        let world = World::Binary(BinaryWorld::fig1_preset());
        let rep = coverage_run(
            |_| Ok(world.clone()),
            cp_estimator(0.95),
            1000,
            (100, 500),
            (10, 20),
            6,
        )
        .unwrap();
        assert_eq!(rep.failed_to_run, 0);
        assert!(rep.coverage() >= 0.935, "coverage {}", rep.coverage());
    }

    #[test]
    fn half_level_coverage_sanity() {
        let world = World::Binary(BinaryWorld::fig1_preset());
        let rep = coverage_run(
            |_| Ok(world.clone()),
            cp_estimator(0.5),
            1000,
            (100, 500),
            (10, 20),
            7,
        )
        .unwrap();
        // CP is conservative, so a 50% interval lands a bit above 0.5.
        assert!((rep.coverage() - 0.5).abs() < 0.1, "coverage {}", rep.coverage());
    }

    #[test]
    fn coverage_run_deterministic() {
        let world = World::Binary(BinaryWorld::fig1_preset());
        let run = || {
            coverage_run(|_| Ok(world.clone()), cp_estimator(0.9), 200, (50, 100), (5, 10), 8)
                .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.hits, b.hits);
        assert_eq!(a.failures.len(), b.failures.len());
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!((x.lo, x.hi, x.hit), (y.lo, y.hi, y.hit));
        }
    }

    #[test]
    fn recheck_modes_run() {
        let world = World::Binary(BinaryWorld::fig1_preset());
        let rep = coverage_run(
            |_| Ok(world.clone()),
            cp_estimator(0.5),
            300,
            (50, 100),
            (5, 10),
            9,
        )
        .unwrap();
        assert!(!rep.failures.is_empty());

        let fixed = frequentist_recheck(
            &rep.failures,
            50,
            RecheckMode::FixedSet { k_thetas: 4 },
            (50, 100),
            (5, 10),
            cp_estimator(0.5),
            10,
        )
        .unwrap();
        assert_eq!(fixed.per_theta_failures.len(), 4);
        assert_eq!(fixed.total_trials, 200);
        assert!(fixed.pooled_failure_rate() > 0.2 && fixed.pooled_failure_rate() < 0.8);

        // Degenerate single-trial blocks are valid.
        let tiny = frequentist_recheck(
            &rep.failures,
            1,
            RecheckMode::FixedSet { k_thetas: 2 },
            (50, 100),
            (5, 10),
            cp_estimator(0.5),
            11,
        )
        .unwrap();
        assert_eq!(tiny.total_trials, 2);

        let resampled = frequentist_recheck(
            &rep.failures,
            100,
            RecheckMode::ResamplePerTrial,
            (50, 100),
            (5, 10),
            cp_estimator(0.5),
            12,
        )
        .unwrap();
        assert_eq!(resampled.total_trials, 100);
    }

    #[test]
    fn coverage_csv_export() {
        let world = World::Binary(BinaryWorld::fig1_preset());
        let rep =
            coverage_run(|_| Ok(world.clone()), cp_estimator(0.9), 20, (50, 60), (5, 6), 13)
                .unwrap();
        let path = std::env::temp_dir().join(format!("ppi-cov-{}.csv", std::process::id()));
        rep.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("trial,theta,target,n,N,lo,hi,hit"));
        assert_eq!(text.lines().count(), 21);
        std::fs::remove_file(&path).ok();
    }
}
