use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::leaf::{BowenDistanceEvaluator, LeafSample};

/// Slack admitting separation (`d >= eps - SLACK`) and ball membership
/// (`d <= eps + SLACK`).
pub const SLACK: f64 = 1e-12;
/// Sample points per conflict width demanded by the density rule.
pub const DENSITY_FACTOR: usize = 10;

/// Required sample size for a pushed leaf of length `length` at scale `eps`.
pub fn required_sample_size(length: f64, eps: f64, factor: usize) -> u64 {
    let cells = (length / eps).ceil().max(1.0);
    (factor as f64 * cells).min(u64::MAX as f64) as u64
}

/// Bowen metric `d^u_n` restricted to a sorted leaf sample, stored as the
/// per-level leaf coordinates of every sample point.
#[derive(Debug, Clone)]
pub struct LeafMetric {
    params: Vec<f64>,
    depth: usize,
    /// row-major `m x depth`
    coords: Vec<f64>,
    /// `d_n = rate^{n-1} |s - t|` exactly, when set.
    linear_rate: Option<f64>,
}

impl LeafMetric {
    /// Metric of depth `n` on `sample`.
    pub fn new(ev: &BowenDistanceEvaluator, sample: &LeafSample, n: usize) -> Result<Self> {
        if n == 0 || n > ev.depth() {
            return Err(Error::InvalidArgument(format!(
                "depth {n} outside 1..={}",
                ev.depth()
            )));
        }
        let rows: Vec<Vec<f64>> = sample
            .params()
            .par_iter()
            .map(|&s| ev.coordinates(n, s))
            .collect::<Result<_>>()?;
        let mut metric = Self::from_coordinates(sample.params().to_vec(), rows)?;
        metric.linear_rate = ev.linear_rate();
        Ok(metric)
    }

    /// Metric from explicit coordinates `coords[i][j] = C_j(params[i])`.
    /// Every level must be strictly increasing along the sample, which is
    /// what makes the conflict relation an interval relation.
    pub fn from_coordinates(params: Vec<f64>, coords: Vec<Vec<f64>>) -> Result<Self> {
        let m = params.len();
        if m == 0 || coords.len() != m {
            return Err(Error::InvalidArgument("coordinates must match the sample".into()));
        }
        if params.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("sample parameters must be strictly increasing".into()));
        }
        let depth = coords[0].len();
        if depth == 0 || coords.iter().any(|c| c.len() != depth) {
            return Err(Error::InvalidArgument("ragged coordinate table".into()));
        }
        for j in 0..depth {
            if coords.windows(2).any(|w| w[1][j] <= w[0][j]) {
                return Err(Error::UnsupportedStructure(format!(
                    "leaf coordinate at level {j} is not monotone along the sample"
                )));
            }
        }
        Ok(Self {
            params,
            depth,
            coords: coords.into_iter().flatten().collect(),
            linear_rate: None,
        })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.depth..(i + 1) * self.depth]
    }

    /// `d^u_n` between sample points `i` and `k`.
    pub fn distance(&self, i: usize, k: usize) -> f64 {
        if let Some(rate) = self.linear_rate {
            return rate.powi(self.depth as i32 - 1) * (self.params[k] - self.params[i]).abs();
        }
        self.row(i)
            .iter()
            .zip(self.row(k))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Restriction to the points `indices` (sorted, distinct).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.windows(2).any(|w| w[1] <= w[0]) || indices.iter().any(|&i| i >= self.len()) {
            return Err(Error::InvalidArgument("subset indices must be sorted and in range".into()));
        }
        let params = indices.iter().map(|&i| self.params[i]).collect();
        let coords = indices.iter().flat_map(|&i| self.row(i).to_vec()).collect();
        Ok(Self {
            params,
            depth: self.depth,
            coords,
            linear_rate: self.linear_rate,
        })
    }
}

/// `(n, eps)` conflict and ball structure of a sample.
///
/// `conflict[i]` is the inclusive index range of points closer than `eps`
/// to point `i` (so not separated from it); `ball[i]` the inclusive range of
/// the closed Bowen ball of radius `eps`. Both contain `i`.
#[derive(Debug, Clone, Serialize)]
pub struct ConflictStructure {
    pub n: usize,
    pub epsilon: f64,
    #[serde(skip)]
    metric: Arc<LeafMetric>,
    pub conflict: Vec<(usize, usize)>,
    pub ball: Vec<(usize, usize)>,
    /// Half-width of the conflict in parameter units (`eps / lambda^{n-1}`),
    /// for exact linear charts.
    pub half_width: Option<f64>,
}

impl ConflictStructure {
    /// Builds the structure on a shared metric without the density check.
    pub fn from_metric(metric: Arc<LeafMetric>, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon {epsilon} must be > 0")));
        }
        let m = metric.len();
        let separated = |i: usize, k: usize| metric.distance(i, k) >= epsilon - SLACK;
        let inside = |i: usize, k: usize| metric.distance(i, k) <= epsilon + SLACK;
        let conflict = ranges(m, |i, k| !separated(i, k));
        let ball = ranges(m, inside);
        let half_width = metric
            .linear_rate
            .map(|r| epsilon / r.powi(metric.depth as i32 - 1));
        Ok(Self {
            n: metric.depth(),
            epsilon,
            metric,
            conflict,
            ball,
            half_width,
        })
    }

    pub fn len(&self) -> usize {
        self.metric.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metric.is_empty()
    }

    pub fn metric(&self) -> &LeafMetric {
        &self.metric
    }

    pub fn distance(&self, i: usize, k: usize) -> f64 {
        self.metric.distance(i, k)
    }

    pub fn separated(&self, i: usize, k: usize) -> bool {
        i != k && self.metric.distance(i, k) >= self.epsilon - SLACK
    }

    pub fn in_ball(&self, center: usize, k: usize) -> bool {
        self.metric.distance(center, k) <= self.epsilon + SLACK
    }

    /// Checks that the ranges form an interval structure (each range holds
    /// its own index and both endpoints are nondecreasing).
    pub fn check_interval(&self) -> Result<()> {
        for r in [&self.conflict, &self.ball] {
            for (i, &(lo, hi)) in r.iter().enumerate() {
                if lo > i || hi < i {
                    return Err(Error::UnsupportedStructure(format!("range of point {i} misses it")));
                }
            }
            if r.windows(2).any(|w| w[1].0 < w[0].0 || w[1].1 < w[0].1) {
                return Err(Error::UnsupportedStructure("ranges are not monotone".into()));
            }
        }
        Ok(())
    }
}

/// Inclusive ranges `[lo_i, hi_i]` of `k` with `pred(i, k)`, for a predicate
/// that holds on a window around `i` shrinking monotonically with distance.
/// Two pointers: both endpoints are nondecreasing in `i`.
fn ranges<P: Fn(usize, usize) -> bool>(m: usize, pred: P) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(m);
    let (mut lo, mut hi) = (0usize, 0usize);
    for i in 0..m {
        if hi < i {
            hi = i;
        }
        while hi + 1 < m && pred(i, hi + 1) {
            hi += 1;
        }
        while lo < i && !pred(i, lo) {
            lo += 1;
        }
        out.push((lo, hi));
    }
    out
}

/// Conflict structure of `sample` at depth `n` and scale `eps`, refusing
/// samples that violate the density rule.
pub fn build_conflicts(
    ev: &BowenDistanceEvaluator,
    sample: &LeafSample,
    n: usize,
    epsilon: f64,
) -> Result<ConflictStructure> {
    if n == 0 || n > ev.depth() {
        return Err(Error::InvalidArgument(format!("depth {n} outside 1..={}", ev.depth())));
    }
    let required = required_sample_size(ev.pushed_length(n - 1), epsilon, DENSITY_FACTOR);
    if (sample.len() as u64) < required {
        return Err(Error::UnderResolved {
            required,
            available: sample.len() as u64,
        });
    }
    let metric = Arc::new(LeafMetric::new(ev, sample, n)?);
    let cs = ConflictStructure::from_metric(metric, epsilon)?;
    cs.check_interval()?;
    Ok(cs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{SystemSpec, TorusPoint};
    use crate::leaf::{build_leaf_chart, sample_leaf};

    fn lambda() -> f64 {
        (3.0 + 5f64.sqrt()) / 2.0
    }

    fn linear(n: usize, m: usize) -> (BowenDistanceEvaluator, LeafSample) {
        let sys = SystemSpec::cat_rotation(SystemSpec::golden_angle());
        let chart = build_leaf_chart(&sys, &TorusPoint::new(vec![0.2, 0.3, 0.4]), 0.1).unwrap();
        let ev = BowenDistanceEvaluator::new(&sys, &chart, n).unwrap();
        let sample = sample_leaf(&chart, m).unwrap();
        (ev, sample)
    }

    #[test]
    fn linear_half_width() {
        let (ev, sample) = linear(3, 20_001);
        let cs = build_conflicts(&ev, &sample, 3, 0.05).unwrap();
        let hw = cs.half_width.unwrap();
        assert!((hw - 0.05 / lambda().powi(2)).abs() < 1e-15);
        assert!((hw - 0.0072949).abs() < 1e-7);
        // conflict range matches |s_i - s_j| < hw
        let p = sample.params();
        let i = 10_000;
        let (lo, hi) = cs.conflict[i];
        assert!(p[hi] - p[i] < hw && p[hi + 1] - p[i] >= hw - 1e-12);
        assert!(p[i] - p[lo] < hw && p[i] - p[lo - 1] >= hw - 1e-12);
        let cs1 = build_conflicts(&ev, &sample, 1, 0.05).unwrap();
        assert_eq!(cs1.half_width, Some(0.05));
    }

    #[test]
    fn density_rule_refuses_coarse_samples() {
        let (ev, sample) = linear(5, 200);
        let err = build_conflicts(&ev, &sample, 5, 0.01).unwrap_err();
        assert!(matches!(err, Error::UnderResolved { .. }));
        assert_eq!(err.reason_code(), "under-resolved");
    }

    #[test]
    fn total_conflict_when_eps_exceeds_leaf() {
        let (ev, sample) = linear(2, 2001);
        let cs = build_conflicts(&ev, &sample, 2, 10.0).unwrap();
        assert!(cs.conflict.iter().all(|&r| r == (0, 2000)));
    }

    #[test]
    fn non_monotone_coordinates_are_unsupported() {
        let params = vec![0.0, 0.1, 0.2];
        let coords = vec![vec![0.0, 0.0], vec![0.1, 0.5], vec![0.2, 0.3]];
        assert!(matches!(
            LeafMetric::from_coordinates(params, coords),
            Err(Error::UnsupportedStructure(_))
        ));
    }

    #[test]
    fn ranges_agree_with_pairwise_distances() {
        let (ev, sample) = linear(4, 4001);
        let cs = build_conflicts(&ev, &sample, 4, 0.3).unwrap();
        for i in (0..4001).step_by(97) {
            let (lo, hi) = cs.conflict[i];
            for k in 0..4001 {
                let inside = k >= lo && k <= hi;
                assert_eq!(inside, cs.distance(i, k) < 0.3 - SLACK, "i={i} k={k}");
            }
            let (blo, bhi) = cs.ball[i];
            for k in 0..4001 {
                assert_eq!(k >= blo && k <= bhi, cs.in_ball(i, k));
            }
        }
    }
}
