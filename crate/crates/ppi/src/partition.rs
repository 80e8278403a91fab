//! Partition functions over autorater scores.
//!
//! A scheme maps every real score to one of K partition ids via ascending
//! cut points; both equal-frequency binning and 1-D regression-tree leaves
//! reduce to this interval form. Post-processing merges thin partitions
//! into a miscellaneous partition so each surviving partition has at least
//! 3 members in both the labeled and the unlabeled sample.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionKind {
    EqualFrequency,
    RegressionTree,
}

/// K as requested on the command line: a fixed value or grid search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KChoice {
    Fixed(usize),
    Auto,
}

pub const DEFAULT_K_GRID: [usize; 6] = [2, 3, 5, 10, 20, 40];

/// How to build a partition: the kind, the K choice, and the grid used
/// when K is auto.
#[derive(Debug, Clone)]
pub struct PartitionSpec {
    pub kind: PartitionKind,
    pub k: KChoice,
    pub k_grid: Vec<usize>,
}

impl PartitionSpec {
    pub fn fixed(kind: PartitionKind, k: usize) -> Self {
        PartitionSpec { kind, k: KChoice::Fixed(k), k_grid: DEFAULT_K_GRID.to_vec() }
    }

    pub fn auto(kind: PartitionKind) -> Self {
        PartitionSpec { kind, k: KChoice::Auto, k_grid: DEFAULT_K_GRID.to_vec() }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.k {
            KChoice::Fixed(0) => Err(Error::InvalidArgument("K must be >= 1".into())),
            KChoice::Auto if self.k_grid.is_empty() => {
                Err(Error::InvalidArgument("auto K requires a non-empty grid".into()))
            }
            _ => Ok(()),
        }
    }
}

/// A fitted partition function. Leaf j covers the interval
/// (cuts[j-1], cuts[j]] with unbounded outer leaves; `leaf_to_part`
/// composes the post-processing merges on top.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionScheme {
    pub kind: PartitionKind,
    pub cuts: Vec<f64>,
    pub leaf_to_part: Vec<usize>,
    pub k_effective: usize,
    pub misc_id: Option<usize>,
    pub warnings: Vec<String>,
}

impl PartitionScheme {
    fn from_cuts(kind: PartitionKind, cuts: Vec<f64>, warnings: Vec<String>) -> Self {
        let leaves = cuts.len() + 1;
        PartitionScheme {
            kind,
            cuts,
            leaf_to_part: (0..leaves).collect(),
            k_effective: leaves,
            misc_id: None,
            warnings,
        }
    }

    /// Leaf index for a score: the count of cuts strictly below it, so a
    /// score equal to a cut falls in the lower leaf.
    pub fn leaf(&self, f: f64) -> usize {
        self.cuts.partition_point(|&c| c < f)
    }

    /// Partition id for a score.
    pub fn assign(&self, f: f64) -> usize {
        self.leaf_to_part[self.leaf(f)]
    }

    /// Labeled and unlabeled member counts per partition id.
    pub fn part_counts(&self, labeled_f: &[f64], unlabeled_f: &[f64]) -> (Vec<usize>, Vec<usize>) {
        let mut n = vec![0usize; self.k_effective];
        let mut big_n = vec![0usize; self.k_effective];
        for &f in labeled_f {
            n[self.assign(f)] += 1;
        }
        for &f in unlabeled_f {
            big_n[self.assign(f)] += 1;
        }
        (n, big_n)
    }
}

fn check_finite(f: &[f64]) -> Result<()> {
    match f.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Equal-population bins over the unlabeled scores. Boundaries sit at the
/// j*N/K-th order statistics; tied boundary values stay in the lower bin,
/// so bins over tied data may be unequal.
pub fn equal_frequency(unlabeled_f: &[f64], k: usize) -> Result<PartitionScheme> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be >= 1".into()));
    }
    let n = unlabeled_f.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("K = {k} exceeds N = {n}")));
    }
    check_finite(unlabeled_f)?;

    let mut sorted = unlabeled_f.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut cuts = Vec::with_capacity(k.saturating_sub(1));
    for j in 1..k {
        let rank = ((j * n) / k).max(1);
        let cut = sorted[rank - 1];
        if cuts.last() != Some(&cut) {
            cuts.push(cut);
        }
    }
    // A cut equal to the global maximum would leave the top leaf empty.
    if cuts.last() == Some(&sorted[n - 1]) {
        cuts.pop();
    }
    let mut warnings = Vec::new();
    if cuts.len() + 1 < k {
        warnings.push(format!(
            "tied scores reduced equal-frequency bins from {} to {}",
            k,
            cuts.len() + 1
        ));
    }
    Ok(PartitionScheme::from_cuts(PartitionKind::EqualFrequency, cuts, warnings))
}

/// Prefix sums over y in f-sorted order; sse(a, b) is the squared-error
/// impurity of the half-open index range [a, b).
struct SseTable {
    sum: Vec<f64>,
    sumsq: Vec<f64>,
}

impl SseTable {
    fn new(ys: &[f64]) -> Self {
        let mut sum = vec![0.0; ys.len() + 1];
        let mut sumsq = vec![0.0; ys.len() + 1];
        for (i, &y) in ys.iter().enumerate() {
            sum[i + 1] = sum[i] + y;
            sumsq[i + 1] = sumsq[i] + y * y;
        }
        SseTable { sum, sumsq }
    }

    fn sse(&self, a: usize, b: usize) -> f64 {
        let m = (b - a) as f64;
        let s = self.sum[b] - self.sum[a];
        ((self.sumsq[b] - self.sumsq[a]) - s * s / m).max(0.0)
    }
}

#[derive(Debug, Clone, Copy)]
struct OpenLeaf {
    lo: usize,
    hi: usize,
    gain: f64,
    split_at: usize,
}

fn best_split(fs: &[f64], table: &SseTable, lo: usize, hi: usize) -> Option<(f64, usize)> {
    let parent = table.sse(lo, hi);
    let mut best: Option<(f64, usize)> = None;
    for p in lo + 1..hi {
        if fs[p - 1] == fs[p] {
            continue;
        }
        let gain = parent - table.sse(lo, p) - table.sse(p, hi);
        if best.map_or(true, |(g, _)| gain > g) {
            best = Some((gain, p));
        }
    }
    best
}

/// 1-D CART with squared-error impurity, grown best-first until
/// `max_leaves` leaves or no split has positive gain. Candidate cuts are
/// midpoints of consecutive distinct sorted scores.
pub fn fit_regression_tree(
    labeled_f: &[f64],
    labeled_y: &[f64],
    max_leaves: usize,
) -> Result<PartitionScheme> {
    if max_leaves == 0 {
        return Err(Error::InvalidArgument("K must be >= 1".into()));
    }
    let n = labeled_f.len();
    if n == 0 || labeled_y.len() != n {
        return Err(Error::InvalidArgument("labeled f and y must be equal non-empty".into()));
    }
    if n < 2 * max_leaves {
        return Err(Error::InvalidArgument(format!(
            "regression tree needs n >= 2K, got n = {n}, K = {max_leaves}"
        )));
    }
    check_finite(labeled_f)?;
    check_finite(labeled_y)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| labeled_f[a].partial_cmp(&labeled_f[b]).unwrap());
    let fs: Vec<f64> = order.iter().map(|&i| labeled_f[i]).collect();
    let ys: Vec<f64> = order.iter().map(|&i| labeled_y[i]).collect();

    if fs[0] == fs[n - 1] {
        return Ok(PartitionScheme::from_cuts(
            PartitionKind::RegressionTree,
            Vec::new(),
            vec!["all autorater scores identical; tree has a single leaf".into()],
        ));
    }

    let table = SseTable::new(&ys);
    let mut open = Vec::new();
    let push = |open: &mut Vec<OpenLeaf>, lo: usize, hi: usize| {
        if let Some((gain, split_at)) = best_split(&fs, &table, lo, hi) {
            open.push(OpenLeaf { lo, hi, gain, split_at });
        }
    };
    push(&mut open, 0, n);

    let mut split_positions = Vec::new();
    while split_positions.len() + 1 < max_leaves {
        // Global best open leaf; ties go to the earliest (leftmost) leaf.
        let Some(best_i) = open
            .iter()
            .enumerate()
            .filter(|(_, l)| l.gain > 1e-12)
            .max_by(|(ai, a), (bi, b)| {
                a.gain.partial_cmp(&b.gain).unwrap().then(bi.cmp(ai))
            })
            .map(|(i, _)| i)
        else {
            break;
        };
        let leaf = open.swap_remove(best_i);
        split_positions.push(leaf.split_at);
        push(&mut open, leaf.lo, leaf.split_at);
        push(&mut open, leaf.split_at, leaf.hi);
    }

    split_positions.sort_unstable();
    let cuts: Vec<f64> = split_positions.iter().map(|&p| (fs[p - 1] + fs[p]) / 2.0).collect();
    Ok(PartitionScheme::from_cuts(PartitionKind::RegressionTree, cuts, Vec::new()))
}

/// Merge partitions with fewer than 3 members in either sample into one
/// miscellaneous partition. If misc itself is thin, the smallest remaining
/// partition merges into it, repeatedly, until misc is valid or a single
/// partition remains.
pub fn postprocess(
    scheme: &PartitionScheme,
    labeled_f: &[f64],
    unlabeled_f: &[f64],
) -> PartitionScheme {
    let (n_counts, big_counts) = scheme.part_counts(labeled_f, unlabeled_f);
    let k = scheme.k_effective;

    let thin = |n: usize, big: usize| n < 3 || big < 3;

    let mut in_misc: Vec<bool> = (0..k).map(|p| thin(n_counts[p], big_counts[p])).collect();
    // The existing misc partition stays misc across reapplications.
    if let Some(m) = scheme.misc_id {
        in_misc[m] = true;
    }

    if in_misc.iter().all(|&b| !b) {
        return scheme.clone();
    }

    loop {
        let regular: Vec<usize> = (0..k).filter(|&p| !in_misc[p]).collect();
        let misc_n: usize = (0..k).filter(|&p| in_misc[p]).map(|p| n_counts[p]).sum();
        let misc_big: usize = (0..k).filter(|&p| in_misc[p]).map(|p| big_counts[p]).sum();
        if !thin(misc_n, misc_big) || regular.len() <= 1 {
            if regular.is_empty() || (regular.len() == 1 && thin(misc_n, misc_big)) {
                // Still thin with one regular partition left: collapse fully.
                if regular.len() == 1 {
                    in_misc[regular[0]] = true;
                }
            }
            break;
        }
        // Smallest remaining partition by labeled count, ties by unlabeled
        // count, then by id, merges into misc.
        let smallest = *regular
            .iter()
            .min_by_key(|&&p| (n_counts[p], big_counts[p], p))
            .unwrap();
        in_misc[smallest] = true;
    }

    // Renumber: regular partitions keep their relative order, misc is last.
    let regular: Vec<usize> = (0..k).filter(|&p| !in_misc[p]).collect();
    let has_misc = regular.len() < k;
    let mut new_id = vec![usize::MAX; k];
    for (i, &p) in regular.iter().enumerate() {
        new_id[p] = i;
    }
    let misc_id = if has_misc {
        let id = regular.len();
        for p in 0..k {
            if in_misc[p] {
                new_id[p] = id;
            }
        }
        Some(id)
    } else {
        None
    };

    let k_effective = regular.len() + usize::from(has_misc);
    let leaf_to_part: Vec<usize> =
        scheme.leaf_to_part.iter().map(|&p| new_id[p]).collect();
    let mut warnings = scheme.warnings.clone();
    if has_misc {
        warnings.push(format!(
            "{} of {} partitions merged into a miscellaneous partition",
            k - regular.len(),
            k
        ));
    }
    // A lone misc partition is just a single partition.
    let misc_id = if k_effective == 1 { None } else { misc_id };
    PartitionScheme { kind: scheme.kind, cuts: scheme.cuts.clone(), leaf_to_part, k_effective, misc_id, warnings }
}

/// Grid search over K. `eval` returns the interval width (plus whatever
/// report it built) for one K; infeasible grid points may error and are
/// skipped. Ties go to the smaller K; the grid is scanned in ascending
/// order.
pub fn tune_k<R, F>(k_grid: &[usize], mut eval: F) -> Result<(usize, R)>
where
    F: FnMut(usize) -> Result<(f64, R)>,
{
    if k_grid.is_empty() {
        return Err(Error::InvalidArgument("K grid is empty".into()));
    }
    let mut grid = k_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();

    let mut best: Option<(f64, usize, R)> = None;
    let mut last_err = None;
    for k in grid {
        match eval(k) {
            Ok((width, report)) => {
                if best.as_ref().map_or(true, |(w, _, _)| width < *w) {
                    best = Some((width, k, report));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((_, k, report)) => Ok((k, report)),
        None => Err(last_err.unwrap_or_else(|| Error::InvalidArgument("empty K grid".into()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sizes(scheme: &PartitionScheme, f: &[f64]) -> Vec<usize> {
        let mut counts = vec![0usize; scheme.k_effective];
        for &x in f {
            counts[scheme.assign(x)] += 1;
        }
        counts
    }

    #[test]
    fn equal_frequency_uniform() {
        let f: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let s = equal_frequency(&f, 5).unwrap();
        assert_eq!(s.cuts, vec![20.0, 40.0, 60.0, 80.0]);
        assert_eq!(sizes(&s, &f), vec![20; 5]);
    }

    #[test]
    fn equal_frequency_k1_and_errors() {
        let f = vec![1.0, 2.0, 3.0];
        let s = equal_frequency(&f, 1).unwrap();
        assert!(s.cuts.is_empty());
        assert_eq!(s.k_effective, 1);
        assert!(equal_frequency(&f, 4).is_err());
        assert!(equal_frequency(&f, 0).is_err());
        assert!(equal_frequency(&[], 1).is_err());
    }

    #[test]
    fn equal_frequency_tied_mass() {
        // Boundary lands inside the tie mass; the tied values stay together.
        let mut f = vec![0.2; 90];
        f.extend(vec![0.9; 10]);
        let s = equal_frequency(&f, 2).unwrap();
        assert_eq!(s.cuts, vec![0.2]);
        assert_eq!(sizes(&s, &f), vec![90, 10]);
    }

    #[test]
    fn assign_boundary_goes_low() {
        let s = PartitionScheme::from_cuts(PartitionKind::EqualFrequency, vec![1.0, 2.0], vec![]);
        assert_eq!(s.assign(0.5), 0);
        assert_eq!(s.assign(1.0), 0);
        assert_eq!(s.assign(1.5), 1);
        assert_eq!(s.assign(2.0), 1);
        assert_eq!(s.assign(2.5), 2);
    }

    #[test]
    fn tree_perfect_step() {
        let f: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = f.iter().map(|&x| if x < 0.45 { 0.0 } else { 1.0 }).collect();
        let s = fit_regression_tree(&f, &y, 2).unwrap();
        assert_eq!(s.cuts, vec![0.45]);
        // Residual variance is zero inside each leaf.
        for leaf in 0..2 {
            let vals: Vec<f64> = f
                .iter()
                .zip(&y)
                .filter(|(x, _)| s.assign(**x) == leaf)
                .map(|(_, y)| *y)
                .collect();
            assert!(vals.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn tree_identical_scores_single_leaf() {
        let f = vec![0.5; 10];
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let s = fit_regression_tree(&f, &y, 3).unwrap();
        assert_eq!(s.k_effective, 1);
        assert!(!s.warnings.is_empty());
    }

    #[test]
    fn tree_constant_target_no_split() {
        let f: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y = vec![2.0; 20];
        let s = fit_regression_tree(&f, &y, 4).unwrap();
        assert_eq!(s.k_effective, 1);
    }

    #[test]
    fn tree_requires_enough_samples() {
        let f = vec![1.0, 2.0, 3.0];
        let y = vec![1.0, 2.0, 3.0];
        assert!(fit_regression_tree(&f, &y, 2).is_err());
    }

    #[test]
    fn tree_two_regime_bias() {
        // Bias jumps at f = 2.5; the K=2 tree must cut at the 2.5 midpoint.
        let f: Vec<f64> = (0..50).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = f.iter().map(|&x| x + if x <= 2.5 { 1.0 } else { -1.0 }).collect();
        let resid: Vec<f64> = y.iter().zip(&f).map(|(y, f)| y - f).collect();
        let s = fit_regression_tree(&f, &resid, 2).unwrap();
        assert_eq!(s.cuts.len(), 1);
        assert!((s.cuts[0] - 2.55).abs() < 0.1001, "cut {}", s.cuts[0]);
    }

    #[test]
    fn postprocess_well_filled_unchanged() {
        let f: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let s = equal_frequency(&f, 5).unwrap();
        let p = postprocess(&s, &f, &f);
        assert_eq!(p.k_effective, 5);
        assert_eq!(p.misc_id, None);
        assert_eq!(p.leaf_to_part, s.leaf_to_part);
    }

    #[test]
    fn postprocess_thin_bin_becomes_misc() {
        // 5 bins over unlabeled 1..=100; labeled data misses bin 2 almost
        // entirely (2 members) and bin 4 entirely.
        let unlabeled: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let s = equal_frequency(&unlabeled, 5).unwrap();
        let mut labeled: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        labeled.extend((21..=40).map(|i| i as f64));
        labeled.push(45.0);
        labeled.push(50.0);
        labeled.extend((61..=80).map(|i| i as f64));
        let p = postprocess(&s, &labeled, &unlabeled);
        // Bins 2 and 4 merged into misc: misc has 2 labeled members, still
        // thin, so the smallest regular bin merges in too.
        assert_eq!(p.k_effective, 3);
        assert_eq!(p.misc_id, Some(2));
        let (n, big) = p.part_counts(&labeled, &unlabeled);
        for i in 0..p.k_effective {
            assert!(n[i] >= 3 && big[i] >= 3, "part {i}: {} / {}", n[i], big[i]);
        }
    }

    #[test]
    fn postprocess_collapse_to_one() {
        let unlabeled: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let s = equal_frequency(&unlabeled, 5).unwrap();
        let labeled = vec![50.0, 51.0];
        let p = postprocess(&s, &labeled, &unlabeled);
        assert_eq!(p.k_effective, 1);
        assert_eq!(p.misc_id, None);
    }

    #[test]
    fn tune_k_singleton_grid_and_ties() {
        let (k, _) = tune_k(&[5], |k| Ok::<_, Error>((k as f64, ()))).unwrap();
        assert_eq!(k, 5);
        // Equal widths: smaller K wins.
        let (k, _) = tune_k(&[2, 3, 5], |_| Ok::<_, Error>((1.0, ()))).unwrap();
        assert_eq!(k, 2);
        // Infeasible grid points are skipped.
        let (k, _) = tune_k(&[2, 3], |k| {
            if k == 2 {
                Err(Error::EmptySample)
            } else {
                Ok((1.0, ()))
            }
        })
        .unwrap();
        assert_eq!(k, 3);
        assert!(tune_k(&[2], |_| Err::<(f64, ()), _>(Error::EmptySample)).is_err());
    }

    proptest! {
        #[test]
        fn totality_and_boundary_membership(
            mut cuts in proptest::collection::vec(-1e6..1e6f64, 0..8),
            probes in proptest::collection::vec(-1e6..1e6f64, 1..64),
        ) {
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            cuts.dedup();
            let s = PartitionScheme::from_cuts(PartitionKind::EqualFrequency, cuts.clone(), vec![]);
            for &p in &probes {
                prop_assert!(s.assign(p) < s.k_effective);
            }
            for (j, &c) in cuts.iter().enumerate() {
                prop_assert_eq!(s.assign(c), j);
            }
        }

        #[test]
        fn equal_frequency_distinct_balanced(
            n in 10usize..120,
            k in 2usize..8,
            shift in -10.0..10.0f64,
        ) {
            prop_assume!(k <= n);
            let f: Vec<f64> = (0..n).map(|i| shift + i as f64 * 0.37).collect();
            let s = equal_frequency(&f, k).unwrap();
            let counts = sizes(&s, &f);
            let lo = *counts.iter().min().unwrap();
            let hi = *counts.iter().max().unwrap();
            prop_assert!(hi - lo <= 1, "bin sizes {:?}", counts);
        }

        #[test]
        fn postprocess_idempotent(
            labeled in proptest::collection::vec(0.0..1.0f64, 0..40),
            unlabeled in proptest::collection::vec(0.0..1.0f64, 5..200),
            k in 1usize..6,
        ) {
            prop_assume!(k <= unlabeled.len());
            let s = equal_frequency(&unlabeled, k).unwrap();
            let once = postprocess(&s, &labeled, &unlabeled);
            let twice = postprocess(&once, &labeled, &unlabeled);
            prop_assert_eq!(&once.leaf_to_part, &twice.leaf_to_part);
            prop_assert_eq!(once.k_effective, twice.k_effective);
            prop_assert_eq!(once.misc_id, twice.misc_id);
        }

        #[test]
        fn tree_k2_matches_exhaustive_oracle(
            pairs in proptest::collection::vec((0.0..1.0f64, -1.0..1.0f64), 4..200),
        ) {
            let f: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let s = fit_regression_tree(&f, &y, 2).unwrap();

            // Oracle: exhaustive scan over all midpoints for the best gain.
            let mut order: Vec<usize> = (0..f.len()).collect();
            order.sort_by(|&a, &b| f[a].partial_cmp(&f[b]).unwrap());
            let fs: Vec<f64> = order.iter().map(|&i| f[i]).collect();
            let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
            let sse = |a: usize, b: usize| {
                let m = (b - a) as f64;
                let mean = ys[a..b].iter().sum::<f64>() / m;
                ys[a..b].iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            };
            let total = sse(0, fs.len());
            let mut best_gain = 0.0f64;
            for p in 1..fs.len() {
                if fs[p - 1] == fs[p] {
                    continue;
                }
                best_gain = best_gain.max(total - sse(0, p) - sse(p, fs.len()));
            }
            if s.cuts.len() == 1 {
                let p = fs.partition_point(|&v| v < s.cuts[0]);
                let chosen = total - sse(0, p) - sse(p, fs.len());
                prop_assert!((chosen - best_gain).abs() <= 1e-6 * (1.0 + best_gain));
            } else {
                prop_assert!(best_gain <= 1e-9 * (1.0 + total));
            }
        }
    }
}
