//! Sensitivity-based pruning and accuracy-versus-size sweeps.
//!
//! Sensitivity of a weight is `|w * dL/dw|` with `L` the mean cross-entropy
//! over the full training split. Thresholds are nearest-rank percentiles of
//! all weight-matrix sensitivities pooled across layers; weights at or below
//! the threshold are zeroed.

use crate::data::MnistSplit;
use crate::mlp::{cross_entropy_and_grads, evaluate_accuracy, MlpParams};
use crate::tensor::Matrix;

/// Sensitivity of one weight-matrix entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensitivityRecord {
    pub layer: usize,
    pub row: usize,
    pub col: usize,
    pub sensitivity: f64,
}

/// Per-layer sensitivity matrices, shaped like the weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Sensitivities {
    pub per_layer: Vec<Matrix>,
}

impl Sensitivities {
    /// `|w * g|` elementwise for each layer's weights and gradient.
    pub fn from_weights_and_grads(params: &MlpParams, grads: &MlpParams) -> Self {
        let per_layer = params
            .layers
            .iter()
            .zip(&grads.layers)
            .map(|(p, g)| {
                let data = p
                    .weight
                    .as_slice()
                    .iter()
                    .zip(g.weight.as_slice())
                    .map(|(w, g)| (w * g).abs())
                    .collect();
                Matrix::from_vec(p.weight.rows(), p.weight.cols(), data).unwrap()
            })
            .collect();
        Self { per_layer }
    }

    pub fn len(&self) -> usize {
        self.per_layer.iter().map(Matrix::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> Vec<SensitivityRecord> {
        let mut out = Vec::with_capacity(self.len());
        for (layer, m) in self.per_layer.iter().enumerate() {
            for row in 0..m.rows() {
                for (col, &s) in m.row(row).iter().enumerate() {
                    out.push(SensitivityRecord {
                        layer,
                        row,
                        col,
                        sensitivity: s,
                    });
                }
            }
        }
        out
    }

    pub fn sorted_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .per_layer
            .iter()
            .flat_map(|m| m.as_slice().iter().copied())
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Mean cross-entropy gradient over the whole split, accumulated in chunks.
pub fn mean_cross_entropy_grad(params: &MlpParams, split: &MnistSplit, chunk: usize) -> MlpParams {
    assert!(chunk >= 1);
    let mut acc = params.zeros_like();
    let n = split.len();
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let part = split.select(&idx);
        let (_, g) = cross_entropy_and_grads(params, &part.images, &part.labels);
        // batch gradients are means; reweight to a mean over the split
        acc.axpy((end - start) as f64 / n as f64, &g);
        start = end;
    }
    acc
}

/// Sensitivities from one pass over `train` with the cross-entropy gradient
/// only (no penalty, no weight decay). Biases are not scored.
pub fn compute_sensitivities(params: &MlpParams, train: &MnistSplit) -> Sensitivities {
    let grads = mean_cross_entropy_grad(params, train, 1000);
    Sensitivities::from_weights_and_grads(params, &grads)
}

/// Flattened records from [`compute_sensitivities`].
pub fn compute_sensitivity_records(params: &MlpParams, train: &MnistSplit) -> Vec<SensitivityRecord> {
    compute_sensitivities(params, train).records()
}

/// Nearest-rank index (1-based rank minus one) for `tenths / 10` percent of
/// `n` values; `None` for the 0th percentile.
pub fn nearest_rank_index(n: usize, tenths: u32) -> Option<usize> {
    assert!(tenths <= 1000, "percentile above 100");
    if tenths == 0 || n == 0 {
        return None;
    }
    let rank = (n as u128 * tenths as u128).div_ceil(1000) as usize;
    Some(rank.max(1) - 1)
}

/// Threshold on ascending-sorted values at percentile `p` in `[0, 100]`;
/// `p = 0` yields `-inf`, which prunes nothing.
pub fn threshold_from_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!((0.0..=100.0).contains(&p), "percentile must lie in [0, 100]");
    if p == 0.0 || sorted.is_empty() {
        return f64::NEG_INFINITY;
    }
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Global nearest-rank percentile of the pooled sensitivities.
pub fn threshold_at_percentile(records: &[SensitivityRecord], p: f64) -> f64 {
    let mut v: Vec<f64> = records.iter().map(|r| r.sensitivity).collect();
    v.sort_by(f64::total_cmp);
    threshold_from_sorted(&v, p)
}

/// Zeroes every weight whose sensitivity is `<= threshold`. Biases are kept.
/// Returns the pruned copy and the number of surviving weight entries.
pub fn prune(params: &MlpParams, sens: &Sensitivities, threshold: f64) -> (MlpParams, usize) {
    let mut out = params.clone();
    let surviving = prune_in_place(&mut out, sens, threshold);
    (out, surviving)
}

/// As [`prune`], mutating `params`.
pub fn prune_in_place(params: &mut MlpParams, sens: &Sensitivities, threshold: f64) -> usize {
    assert_eq!(params.layers.len(), sens.per_layer.len());
    let mut surviving = 0;
    for (layer, s) in params.layers.iter_mut().zip(&sens.per_layer) {
        assert_eq!(layer.weight.shape(), s.shape());
        for (w, &sv) in layer.weight.as_mut_slice().iter_mut().zip(s.as_slice()) {
            if sv <= threshold {
                *w = 0.0;
            } else {
                surviving += 1;
            }
        }
    }
    surviving
}

/// One point of an accuracy-versus-size curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    /// Percentile in tenths of a percent, 0..=1000.
    pub tenths: u32,
    pub threshold: f64,
    pub surviving_params: usize,
    pub test_accuracy: f64,
}

impl SweepPoint {
    pub fn percentile(&self) -> f64 {
        f64::from(self.tenths) / 10.0
    }
}

/// Unpruned baseline plus one point per 0.1 percentile (0.1 ..= 100.0).
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCurve {
    pub unpruned: SweepPoint,
    pub points: Vec<SweepPoint>,
}

impl SweepCurve {
    /// Baseline followed by all increments.
    pub fn all_points(&self) -> impl Iterator<Item = &SweepPoint> {
        std::iter::once(&self.unpruned).chain(&self.points)
    }

    /// Fewest surviving weights at which accuracy is at least `level`.
    pub fn params_to_reach(&self, level: f64) -> Option<usize> {
        self.all_points()
            .filter(|p| p.test_accuracy >= level)
            .map(|p| p.surviving_params)
            .min()
    }

    pub fn best_accuracy(&self) -> f64 {
        self.all_points().fold(0.0, |m, p| m.max(p.test_accuracy))
    }
}

/// Number of sweep increments.
pub const SWEEP_STEPS: u32 = 1000;

/// Prunes at every 0.1 percentile and records test accuracy.
pub fn sweep(params: &MlpParams, sens: &Sensitivities, test: &MnistSplit) -> SweepCurve {
    sweep_with_progress(params, sens, test, |_| {})
}

pub fn sweep_with_progress(
    params: &MlpParams,
    sens: &Sensitivities,
    test: &MnistSplit,
    mut progress: impl FnMut(&SweepPoint),
) -> SweepCurve {
    let sorted = sens.sorted_values();
    let total = sorted.len();
    let unpruned = SweepPoint {
        tenths: 0,
        threshold: f64::NEG_INFINITY,
        surviving_params: total,
        test_accuracy: evaluate_accuracy(params, &test.images, &test.labels),
    };
    let mut points = Vec::with_capacity(SWEEP_STEPS as usize);
    let mut prev = unpruned;
    let mut working = params.clone();
    for tenths in 1..=SWEEP_STEPS {
        let threshold = nearest_rank_index(total, tenths).map_or(f64::NEG_INFINITY, |i| sorted[i]);
        // thresholds only grow, so pruning the working copy is cumulative
        let surviving = prune_in_place(&mut working, sens, threshold);
        let test_accuracy = if surviving == prev.surviving_params {
            prev.test_accuracy
        } else {
            evaluate_accuracy(&working, &test.images, &test.labels)
        };
        let point = SweepPoint {
            tenths,
            threshold,
            surviving_params: surviving,
            test_accuracy,
        };
        progress(&point);
        points.push(point);
        prev = point;
    }
    SweepCurve { unpruned, points }
}

/// Log-spaced bins per decade of surviving-parameter count.
pub const BINS_PER_DECADE: f64 = 50.0;

/// Bin index of a positive parameter count.
pub fn bucket_of(count: usize) -> i64 {
    assert!(count > 0);
    (BINS_PER_DECADE * (count as f64).log10()).floor() as i64
}

/// Geometric center of a bin.
pub fn bucket_center(bucket: i64) -> f64 {
    10f64.powf((bucket as f64 + 0.5) / BINS_PER_DECADE)
}

/// Accuracy spread across runs within one size bin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggregateBucket {
    pub bucket: i64,
    pub runs: usize,
    pub acc_min: f64,
    pub acc_median: f64,
    pub acc_max: f64,
}

impl AggregateBucket {
    pub fn param_count(&self) -> f64 {
        bucket_center(self.bucket)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateCurve {
    /// Ascending by bucket.
    pub buckets: Vec<AggregateBucket>,
}

impl AggregateCurve {
    pub fn get(&self, bucket: i64) -> Option<&AggregateBucket> {
        self.buckets
            .binary_search_by_key(&bucket, |b| b.bucket)
            .ok()
            .map(|i| &self.buckets[i])
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Bins every curve by surviving count (points with zero survivors are
/// dropped), averages each run within a bin, then takes min/median/max
/// across the runs present in that bin.
pub fn aggregate(curves: &[SweepCurve]) -> AggregateCurve {
    use std::collections::BTreeMap;
    let mut per_bucket: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for curve in curves {
        let mut mine: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
        for p in curve.all_points().filter(|p| p.surviving_params > 0) {
            let e = mine.entry(bucket_of(p.surviving_params)).or_insert((0.0, 0));
            e.0 += p.test_accuracy;
            e.1 += 1;
        }
        for (b, (sum, n)) in mine {
            per_bucket.entry(b).or_default().push(sum / n as f64);
        }
    }
    let buckets = per_bucket
        .into_iter()
        .map(|(bucket, mut accs)| {
            let acc_min = accs.iter().copied().fold(f64::INFINITY, f64::min);
            let acc_max = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            AggregateBucket {
                bucket,
                runs: accs.len(),
                acc_min,
                acc_median: median(&mut accs),
                acc_max,
            }
        })
        .collect();
    AggregateCurve { buckets }
}

/// Median over runs of each run's peak accuracy.
pub fn median_peak_accuracy(curves: &[SweepCurve]) -> f64 {
    let mut peaks: Vec<f64> = curves.iter().map(SweepCurve::best_accuracy).collect();
    median(&mut peaks)
}

/// Median over runs of the fewest weights reaching `level`; `None` when
/// fewer than half of the runs reach it.
pub fn median_params_to_reach(curves: &[SweepCurve], level: f64) -> Option<f64> {
    let mut counts: Vec<f64> = curves
        .iter()
        .map(|c| c.params_to_reach(level).map_or(f64::INFINITY, |n| n as f64))
        .collect();
    let m = median(&mut counts);
    m.is_finite().then_some(m)
}

/// Highest accuracy level that the median run of both conditions attains.
pub fn best_common_level(a: &[SweepCurve], b: &[SweepCurve]) -> f64 {
    median_peak_accuracy(a).min(median_peak_accuracy(b))
}

/// Fraction of shared bins with center `<= max_params` in which `upper`'s
/// median accuracy is at least `lower`'s. `None` if no bins are shared.
pub fn domination_fraction(upper: &AggregateCurve, lower: &AggregateCurve, max_params: f64) -> Option<f64> {
    let mut shared = 0usize;
    let mut wins = 0usize;
    for b in upper.buckets.iter().filter(|b| b.param_count() <= max_params) {
        if let Some(o) = lower.get(b.bucket) {
            shared += 1;
            if b.acc_median >= o.acc_median {
                wins += 1;
            }
        }
    }
    (shared > 0).then(|| wins as f64 / shared as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::init_params;

    fn point(tenths: u32, surviving: usize, acc: f64) -> SweepPoint {
        SweepPoint {
            tenths,
            threshold: tenths as f64,
            surviving_params: surviving,
            test_accuracy: acc,
        }
    }

    fn curve(points: &[(usize, f64)]) -> SweepCurve {
        SweepCurve {
            unpruned: point(0, points[0].0, points[0].1),
            points: points[1..]
                .iter()
                .enumerate()
                .map(|(k, &(n, a))| point(k as u32 + 1, n, a))
                .collect(),
        }
    }

    #[test]
    fn sensitivity_is_abs_product() {
        let mut p = MlpParams::zeros(&[2, 1]);
        p.layers[0].weight = Matrix::from_rows(&[[2.0, 0.0]]);
        let mut g = p.zeros_like();
        g.layers[0].weight = Matrix::from_rows(&[[-3.0, 5.0]]);
        let s = Sensitivities::from_weights_and_grads(&p, &g);
        assert_eq!(s.per_layer[0].as_slice(), &[6.0, 0.0]);
        let r = s.records();
        assert_eq!(r[0], SensitivityRecord { layer: 0, row: 0, col: 0, sensitivity: 6.0 });
    }

    #[test]
    fn nearest_rank_examples() {
        let records: Vec<SensitivityRecord> = (1..=10)
            .map(|v| SensitivityRecord { layer: 0, row: 0, col: v, sensitivity: v as f64 })
            .collect();
        assert_eq!(threshold_at_percentile(&records, 50.0), 5.0);
        assert_eq!(threshold_at_percentile(&records, 100.0), 10.0);
        assert_eq!(threshold_at_percentile(&records, 0.0), f64::NEG_INFINITY);
        assert_eq!(threshold_at_percentile(&records, 0.1), 1.0);
        assert_eq!(nearest_rank_index(10, 500), Some(4));
        assert_eq!(nearest_rank_index(10, 0), None);
        assert_eq!(nearest_rank_index(10, 1000), Some(9));
        assert_eq!(nearest_rank_index(266_200, 1), Some(266));
    }

    #[test]
    fn integer_and_float_ranks_agree_on_the_grid() {
        let sorted: Vec<f64> = (0..9_973).map(f64::from).collect();
        for tenths in 1..=1000u32 {
            let p = f64::from(tenths) / 10.0;
            assert_eq!(
                threshold_from_sorted(&sorted, p),
                sorted[nearest_rank_index(sorted.len(), tenths).unwrap()],
                "tenths {tenths}"
            );
        }
    }

    #[test]
    fn prune_rules() {
        let p = init_params(&[3, 2, 2], 1);
        let equal = Sensitivities {
            per_layer: p.layers.iter().map(|l| Matrix::filled(l.weight.rows(), l.weight.cols(), 0.5)).collect(),
        };
        let (_, none_left) = prune(&p, &equal, 0.5);
        assert_eq!(none_left, 0);
        let (same, all) = prune(&p, &equal, f64::NEG_INFINITY);
        assert_eq!(all, p.weight_count());
        assert_eq!(same, p);
        let (pruned, _) = prune(&p, &equal, 1.0);
        assert!(pruned.layers.iter().zip(&p.layers).all(|(a, b)| a.bias == b.bias));
    }

    #[test]
    fn aggregation_single_and_ordered() {
        let c = curve(&[(1000, 0.9), (500, 0.85), (100, 0.5), (0, 0.1)]);
        let agg = aggregate(std::slice::from_ref(&c));
        assert_eq!(agg.buckets.len(), 3);
        for b in &agg.buckets {
            assert_eq!(b.acc_min, b.acc_median);
            assert_eq!(b.acc_median, b.acc_max);
        }
        let lo = curve(&[(1000, 0.8), (500, 0.7)]);
        let hi = curve(&[(1000, 0.9), (500, 0.8)]);
        let agg = aggregate(&[lo, hi]);
        for b in &agg.buckets {
            assert_eq!(b.runs, 2);
            assert!(b.acc_min < b.acc_max);
        }
        assert_eq!(agg.get(bucket_of(1000)).unwrap().acc_min, 0.8);
        assert_eq!(agg.get(bucket_of(1000)).unwrap().acc_max, 0.9);
    }

    #[test]
    fn bucket_edges() {
        assert_eq!(bucket_of(1), 0);
        assert_eq!(bucket_of(10), 50);
        assert_eq!(bucket_of(100_000), 250);
        assert!(bucket_center(250) > 100_000.0 && bucket_center(250) < bucket_center(251));
    }

    #[test]
    fn reach_and_levels() {
        let a = curve(&[(1000, 0.95), (400, 0.96), (100, 0.90)]);
        assert_eq!(a.params_to_reach(0.95), Some(400));
        assert_eq!(a.params_to_reach(0.97), None);
        assert_eq!(a.best_accuracy(), 0.96);
        let b = curve(&[(1000, 0.94), (300, 0.93)]);
        assert_eq!(best_common_level(std::slice::from_ref(&a), &[b]), 0.94);
        assert_eq!(median_params_to_reach(&[a.clone(), a.clone(), curve(&[(5, 0.1)])], 0.95), Some(400.0));
        assert_eq!(median_params_to_reach(&[a, curve(&[(5, 0.1)]), curve(&[(5, 0.1)])], 0.95), None);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
