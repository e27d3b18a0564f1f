use rayon::prelude::*;
use serde::Serialize;

use super::metric::{required_sample_size, DENSITY_FACTOR};
use super::table::sample_weights;
use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};
use crate::leaf::{sample_leaf, BowenDistanceEvaluator, LeafChart};
use crate::numeric::log_add_exp;
use crate::potentials::PotentialSeq;

/// Cap on the number of words `K^n` of the join.
pub const JOIN_LIMIT: usize = 100_000;

/// A finite open cover of `[-delta, delta]` by parameter intervals `(a, b)`.
///
/// Along the leaf the cover is extended with period `2 delta`, so every
/// pushed leaf `f^j(W)` is covered as well; `f^{-j} U_k` is read off the
/// level-`j` leaf coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpenCover {
    delta: f64,
    intervals: Vec<(f64, f64)>,
}

impl OpenCover {
    pub fn new(delta: f64, intervals: Vec<(f64, f64)>) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::InvalidArgument("cover radius must be > 0".into()));
        }
        if intervals.is_empty() || intervals.iter().any(|&(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidArgument("cover intervals must be nonempty with a < b".into()));
        }
        // open intervals: each step needs an interval strictly around `cur`
        let mut cur = -delta;
        while cur <= delta {
            let reach = intervals
                .iter()
                .filter(|&&(a, _)| a < cur)
                .map(|&(_, b)| b)
                .fold(f64::NEG_INFINITY, f64::max);
            if reach <= cur {
                return Err(Error::InvalidArgument(format!(
                    "intervals do not cover [-{delta}, {delta}] at {cur}"
                )));
            }
            cur = reach;
        }
        Ok(Self { delta, intervals })
    }

    /// `k` overlapping intervals of length `width`, equally spaced over one
    /// period; consecutive intervals overlap by at least `width / 2`.
    pub fn uniform(delta: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::InvalidArgument("cover width must be > 0".into()));
        }
        let k = ((4.0 * delta / width).ceil() as usize).max(1);
        let step = 2.0 * delta / k as f64;
        let start = -delta - width / 4.0;
        Self::new(
            delta,
            (0..=k).map(|i| (start + i as f64 * step, start + i as f64 * step + width)).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    fn min_width(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).fold(f64::INFINITY, f64::min)
    }

    /// Whether the periodic copy of interval `k` contains leaf coordinate `c`.
    fn contains(&self, k: usize, c: f64) -> bool {
        let (a, b) = self.intervals[k];
        let period = 2.0 * self.delta;
        if b - a > period {
            return true;
        }
        let r = (c - a).rem_euclid(period);
        r > 0.0 && r < b - a
    }
}

/// `p_n` for one `n`.
#[derive(Debug, Clone, Serialize)]
pub struct CoverStage {
    pub n: usize,
    pub log_p: f64,
    /// Blocks of the optimal refinement.
    pub blocks: usize,
    /// Distinct join cells met by the sample.
    pub join_cells: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverReport {
    pub m: usize,
    pub stages: Vec<CoverStage>,
    /// `max log p_{a+b} - log p_a - log p_b` over all computed pairs.
    pub subadditivity_defect: f64,
    pub worst_pair: Option<(usize, usize)>,
    /// `min_n (1/n) log p_n`.
    pub fekete_bound: f64,
}

/// Member sets `M_j(i)` as bitmasks over the cover, row-major `m x n`.
fn memberships(params: &[f64], ev: &BowenDistanceEvaluator, cover: &OpenCover, n: usize) -> Result<Vec<u128>> {
    if cover.len() > 128 {
        return Err(Error::JoinTooLarge { limit: JOIN_LIMIT });
    }
    params
        .par_iter()
        .map(|&s| {
            let coords = ev.coordinates(n, s)?;
            Ok(coords
                .iter()
                .map(|&c| {
                    (0..cover.len())
                        .filter(|&k| cover.contains(k, c))
                        .fold(0u128, |acc, k| acc | 1 << k)
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<Vec<u128>>>>()
        .map(|rows| rows.into_iter().flatten().collect())
}

/// Minimal refinement sum on the sample: a partition into contiguous blocks,
/// each inside one join element, costing the block maximum of `g_n`.
fn refinement_dp(member: &[u128], n: usize, log_w: &[f64]) -> Result<(f64, usize)> {
    let m = log_w.len();
    let row = |i: usize| &member[i * n..(i + 1) * n];
    if (0..m).any(|i| row(i).iter().any(|&b| b == 0)) {
        return Err(Error::Uncoverable(0));
    }
    // leftmost valid block start for each right end: per level, count how
    // many window points each cover element contains
    let k_max = 128 - member.iter().fold(0u128, |a, &b| a | b).leading_zeros() as usize;
    let mut count = vec![0usize; n * k_max];
    let bump = |i: usize, up: bool, count: &mut Vec<usize>| {
        for (j, &bits) in row(i).iter().enumerate() {
            for k in 0..k_max {
                if bits >> k & 1 == 1 {
                    if up {
                        count[j * k_max + k] += 1;
                    } else {
                        count[j * k_max + k] -= 1;
                    }
                }
            }
        }
    };
    let mut left = vec![0usize; m];
    let mut l = 0usize;
    for r in 0..m {
        bump(r, true, &mut count);
        while !(0..n).all(|j| count[j * k_max..(j + 1) * k_max].iter().any(|&c| c == r + 1 - l)) {
            bump(l, false, &mut count);
            l += 1;
        }
        left[r] = l;
    }
    let mut cost = vec![f64::NEG_INFINITY; m + 1];
    let mut blocks = vec![0usize; m + 1];
    // suffix maxima of weights: (value, first start index)
    let mut stack: Vec<(f64, usize)> = Vec::new();
    for e in 1..=m {
        let r = e - 1;
        let mut start = r;
        while stack.last().is_some_and(|&(v, _)| v <= log_w[r]) {
            start = stack.pop().unwrap().1;
        }
        stack.push((log_w[r], start));
        let mut best = (f64::INFINITY, 0usize);
        let mut end = r;
        for &(v, s) in stack.iter().rev() {
            let lo = s.max(left[r]);
            if lo <= end {
                let c = log_add_exp(cost[lo], v);
                if c < best.0 {
                    best = (c, blocks[lo] + 1);
                }
            }
            if s <= left[r] || s == 0 {
                break;
            }
            end = s - 1;
        }
        cost[e] = best.0;
        blocks[e] = best.1;
    }
    Ok((cost[m], blocks[m]))
}

fn check_join(cover: &OpenCover, n: usize) -> Result<()> {
    let words = (cover.len() as f64).powi(n as i32);
    if words > JOIN_LIMIT as f64 {
        return Err(Error::JoinTooLarge { limit: JOIN_LIMIT });
    }
    Ok(())
}

fn cover_stage(
    sys: &SystemSpec,
    ev: &BowenDistanceEvaluator,
    g: &PotentialSeq,
    cover: &OpenCover,
    n: usize,
    m: usize,
) -> Result<CoverStage> {
    check_join(cover, n)?;
    let required = required_sample_size(ev.pushed_length(n - 1), cover.min_width(), DENSITY_FACTOR);
    if (m as u64) < required {
        return Err(Error::UnderResolved {
            required,
            available: m as u64,
        });
    }
    let sample = sample_leaf(ev.chart(), m)?;
    let member = memberships(sample.params(), ev, cover, n)?;
    let log_w = sample_weights(sys, g, &sample, n)?;
    let (log_p, blocks) = refinement_dp(&member, n, &log_w)?;
    let mut cells: Vec<&[u128]> = member.chunks(n).collect();
    cells.dedup();
    Ok(CoverStage {
        n,
        log_p,
        blocks,
        join_cells: cells.len(),
    })
}

/// `log p_n(f, G, U, x, delta)` on an `m`-point discretization of the chart.
pub fn cover_pressure_small(
    sys: &SystemSpec,
    chart: &LeafChart,
    g: &PotentialSeq,
    cover: &OpenCover,
    n: usize,
    m: usize,
) -> Result<CoverStage> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    g.validate(sys.dim())?;
    check_join(cover, n)?;
    let ev = BowenDistanceEvaluator::new(sys, chart, n)?;
    cover_stage(sys, &ev, g, cover, n, m)
}

/// `log p_n` for `n = 1..=n_max` on a common sample, with the sub-additivity
/// audit over all pairs `a + b <= n_max` and the Fekete bound.
pub fn cover_pressure_table(
    sys: &SystemSpec,
    chart: &LeafChart,
    g: &PotentialSeq,
    cover: &OpenCover,
    n_max: usize,
    m: usize,
) -> Result<CoverReport> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be >= 1".into()));
    }
    g.validate(sys.dim())?;
    check_join(cover, n_max)?;
    let ev = BowenDistanceEvaluator::new(sys, chart, n_max)?;
    let stages: Vec<CoverStage> = (1..=n_max)
        .into_par_iter()
        .map(|n| cover_stage(sys, &ev, g, cover, n, m))
        .collect::<Result<_>>()?;
    let mut defect = f64::NEG_INFINITY;
    let mut worst = None;
    for a in 1..n_max {
        for b in a..=n_max - a {
            let d = stages[a + b - 1].log_p - stages[a - 1].log_p - stages[b - 1].log_p;
            if d > defect {
                defect = d;
                worst = Some((a, b));
            }
        }
    }
    let fekete_bound = stages
        .iter()
        .map(|s| s.log_p / s.n as f64)
        .fold(f64::INFINITY, f64::min);
    Ok(CoverReport {
        m,
        stages,
        subadditivity_defect: defect,
        worst_pair: worst,
        fekete_bound,
    })
}
