//! Interval engines.
//!
//! The Monte Carlo integration (MCI) engine draws T joint samples from the
//! registered parameter posteriors, evaluates the estimand g on each, and
//! extracts an equal-tailed interval from the sorted values. The bootstrap
//! engine runs B data replicates through a caller-supplied statistic and
//! extracts the interval the same way.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::posterior::{ParamValue, Posterior};
use crate::rng::substream;

/// Which engine computed an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Mci,
    Bootstrap,
    /// Closed-form classical interval, no simulation involved.
    Closed,
}

/// Engine settings. `samples` is T for the MCI engine, `replicates` is B
/// for the bootstrap engine.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub samples: usize,
    pub replicates: usize,
    pub engine: EngineKind,
    pub level: f64,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            samples: 10_000,
            replicates: 10_000,
            engine: EngineKind::Mci,
            level: 0.95,
            seed: 0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "level must be in (0, 1), got {}",
                self.level
            )));
        }
        if self.samples < 100 {
            return Err(Error::InvalidArgument(format!(
                "samples must be >= 100, got {}",
                self.samples
            )));
        }
        if self.replicates < 100 {
            return Err(Error::InvalidArgument(format!(
                "replicates must be >= 100, got {}",
                self.replicates
            )));
        }
        Ok(())
    }
}

/// An interval with its point estimate and provenance.
#[derive(Debug, Clone, Serialize)]
pub struct IntervalResult {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub point_estimate: f64,
    pub width: f64,
    /// T for MCI, B for bootstrap, 0 for closed-form intervals.
    pub n_samples: usize,
    pub engine: EngineKind,
}

impl IntervalResult {
    pub fn closed(lo: f64, hi: f64, level: f64, point_estimate: f64) -> Self {
        IntervalResult { lo, hi, level, point_estimate, width: hi - lo, n_samples: 0, engine: EngineKind::Closed }
    }
}

/// Ordered registry of named parameter posteriors. Draw order follows
/// registration order, so adding a parameter never perturbs the draws of
/// the ones registered before it.
#[derive(Default)]
pub struct ParamSet {
    names: Vec<String>,
    posts: Vec<Posterior>,
    index: BTreeMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, post: Posterior) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name {name:?}")));
        }
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.posts.push(post);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }
}

/// One joint posterior sample, addressed by parameter name.
pub struct SampleView<'a> {
    cols: &'a [Vec<ParamValue>],
    index: &'a BTreeMap<String, usize>,
    t: usize,
}

impl SampleView<'_> {
    fn value(&self, name: &str) -> &ParamValue {
        let i = *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"));
        &self.cols[i][self.t]
    }

    pub fn scalar(&self, name: &str) -> f64 {
        self.value(name).as_scalar()
    }

    pub fn simplex(&self, name: &str) -> &[f64] {
        self.value(name).as_simplex()
    }
}

// Substream tags: keep MCI parameter streams and bootstrap replicate
// streams disjoint under one master seed.
const MCI_STREAM: u64 = 0;
const BOOT_STREAM: u64 = 1;

/// Monte Carlo integration: T joint draws, g per draw, equal-tailed
/// interval over the sorted values, MC mean as the point estimate.
pub fn integrate<F>(params: &ParamSet, g: F, cfg: &EngineConfig) -> Result<IntervalResult>
where
    F: Fn(&SampleView) -> f64,
{
    cfg.validate()?;
    if params.is_empty() {
        return Err(Error::InvalidArgument("no parameters registered".into()));
    }
    let t = cfg.samples;

    // Parameter i draws its whole column from its own substream, so the
    // column is invariant to how many other parameters exist.
    let mut cols: Vec<Vec<ParamValue>> = Vec::with_capacity(params.len());
    for (i, post) in params.posts.iter().enumerate() {
        let sampler = post.sampler()?;
        let mut rng = substream(cfg.seed, &[MCI_STREAM, i as u64]);
        cols.push((0..t).map(|_| sampler.draw(&mut rng)).collect());
    }

    let mut values = Vec::with_capacity(t);
    for ti in 0..t {
        let v = g(&SampleView { cols: &cols, index: &params.index, t: ti });
        if !v.is_finite() {
            return Err(Error::NonFinite { index: ti });
        }
        values.push(v);
    }
    summarize(values, cfg.level, EngineKind::Mci)
}

/// Bootstrap: B replicates of `stat`, each with its own substream, then
/// the same equal-tailed extraction as the MCI engine.
pub fn bootstrap<F>(cfg: &EngineConfig, mut stat: F) -> Result<IntervalResult>
where
    F: FnMut(&mut ChaCha8Rng) -> f64,
{
    cfg.validate()?;
    let b = cfg.replicates;
    let mut values = Vec::with_capacity(b);
    for bi in 0..b {
        let mut rng = substream(cfg.seed, &[BOOT_STREAM, bi as u64]);
        let v = stat(&mut rng);
        if !v.is_finite() {
            return Err(Error::NonFinite { index: bi });
        }
        values.push(v);
    }
    summarize(values, cfg.level, EngineKind::Bootstrap)
}

/// Mean of a with-replacement resample of `values` at its own size.
pub fn resample_mean(rng: &mut ChaCha8Rng, values: &[f64]) -> f64 {
    let n = values.len();
    (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64
}

fn summarize(mut values: Vec<f64>, level: f64, engine: EngineKind) -> Result<IntervalResult> {
    let n = values.len();
    let point_estimate = values.iter().sum::<f64>() / n as f64;
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (lo, hi) = equal_tailed(&values, level)?;
    Ok(IntervalResult { lo, hi, level, point_estimate, width: hi - lo, n_samples: n, engine })
}

/// Equal-tailed interval from sorted values. With T values and tail mass
/// a = (1 - level) / 2, the endpoints are the order statistics at 1-based
/// ranks floor(a T) and ceil((1 - a) T), each clamped to [1, T].
pub fn equal_tailed(sorted: &[f64], level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must be in (0, 1), got {level}")));
    }
    let t = sorted.len();
    if t < 100 {
        return Err(Error::InvalidArgument(format!(
            "need at least 100 values for an equal-tailed interval, got {t}"
        )));
    }
    if sorted.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Unsorted);
    }
    let a = (1.0 - level) / 2.0;
    // floor(a T) with a guard against representation noise in a * T; the
    // upper rank ceil((1 - a) T) equals T - floor(a T) for either parity.
    let tail = (a * t as f64 + 1e-9).floor() as usize;
    let lo_rank = tail.clamp(1, t);
    let hi_rank = (t - tail).clamp(1, t);
    Ok((sorted[lo_rank - 1], sorted[hi_rank - 1]))
}
