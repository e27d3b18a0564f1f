use std::cmp::Ordering;
use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metric::{ConflictStructure, LeafMetric};
use crate::error::{Error, Result};
use crate::numeric::{log_add_exp, log_sum_exp};

/// Largest sample the exhaustive oracle accepts.
pub const ORACLE_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Greedy,
    Dp,
    Brute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    Packing,
    Covering,
}

/// A separated subset of the sample with its `g_n`-weight.
#[derive(Debug, Clone, Serialize)]
pub struct PackingSolution {
    pub indices: Vec<usize>,
    /// `sum g_n` (may overflow to `inf`; `log_total` is authoritative).
    pub total_weight: f64,
    pub log_total: f64,
    pub method: Method,
    /// Cost of the same set used as a spanning set (greedy only): the sum
    /// over its Bowen balls of the ball supremum of `g_n`.
    pub log_cover_cost: Option<f64>,
}

/// Bowen-ball centers covering the sample with their cost.
#[derive(Debug, Clone, Serialize)]
pub struct CoveringSolution {
    pub indices: Vec<usize>,
    pub total_weight: f64,
    pub log_total: f64,
    pub method: Method,
}

fn check_weights(cs: &ConflictStructure, log_w: &[f64]) -> Result<()> {
    if log_w.len() != cs.len() {
        return Err(Error::DimensionMismatch(log_w.len(), cs.len()));
    }
    if log_w.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::InvalidArgument("weights must be finite or -inf logs".into()));
    }
    Ok(())
}

fn packing(indices: Vec<usize>, log_total: f64, method: Method) -> PackingSolution {
    PackingSolution {
        indices,
        total_weight: log_total.exp(),
        log_total,
        method,
        log_cover_cost: None,
    }
}

fn covering(indices: Vec<usize>, log_total: f64, method: Method) -> CoveringSolution {
    CoveringSolution {
        indices,
        total_weight: log_total.exp(),
        log_total,
        method,
    }
}

/// Per-center supremum of `log g_n` over its closed Bowen ball in the sample
/// (sliding-window maximum over the monotone ball ranges).
pub fn ball_sup_weights(cs: &ConflictStructure, log_w: &[f64]) -> Result<Vec<f64>> {
    check_weights(cs, log_w)?;
    cs.check_interval()?;
    let mut out = Vec::with_capacity(cs.len());
    let mut window: VecDeque<usize> = VecDeque::new();
    let mut next = 0usize;
    for &(lo, hi) in &cs.ball {
        while next <= hi {
            while window.back().is_some_and(|&b| log_w[b] <= log_w[next]) {
                window.pop_back();
            }
            window.push_back(next);
            next += 1;
        }
        while window.front().is_some_and(|&f| f < lo) {
            window.pop_front();
        }
        out.push(log_w[*window.front().unwrap()]);
    }
    Ok(out)
}

/// Greedy maximal separated set: repeatedly take the heaviest remaining
/// point (smallest index among ties) and discard everything it conflicts
/// with. The result is maximal, hence also spanning; its cost in that role
/// is recorded in `log_cover_cost`.
pub fn greedy_max_separated(cs: &ConflictStructure, log_w: &[f64]) -> Result<PackingSolution> {
    check_weights(cs, log_w)?;
    let sup = ball_sup_weights(cs, log_w)?;
    let mut order: Vec<usize> = (0..cs.len()).collect();
    order.sort_by(|&a, &b| match log_w[b].partial_cmp(&log_w[a]).unwrap() {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    let mut chosen = BTreeSet::new();
    for i in order {
        let (lo, hi) = cs.conflict[i];
        if chosen.range(lo..=hi).next().is_none() {
            chosen.insert(i);
        }
    }
    let indices: Vec<usize> = chosen.into_iter().collect();
    let log_total = log_sum_exp(&indices.iter().map(|&i| log_w[i]).collect::<Vec<_>>());
    let cover = log_sum_exp(&indices.iter().map(|&i| sup[i]).collect::<Vec<_>>());
    let mut sol = packing(indices, log_total, Method::Greedy);
    sol.log_cover_cost = Some(cover);
    Ok(sol)
}

/// Exact maximum-weight separated subset of the sample by weighted-interval
/// dynamic programming: `best[i+1] = max(best[i], best[lo_i] (+) w_i)`.
pub fn max_weight_separated_dp(cs: &ConflictStructure, log_w: &[f64]) -> Result<PackingSolution> {
    check_weights(cs, log_w)?;
    cs.check_interval()?;
    let m = cs.len();
    let mut best = vec![f64::NEG_INFINITY; m + 1];
    let mut take = vec![false; m];
    for i in 0..m {
        let with = log_add_exp(best[cs.conflict[i].0], log_w[i]);
        if with > best[i] {
            best[i + 1] = with;
            take[i] = true;
        } else {
            best[i + 1] = best[i];
        }
    }
    let mut indices = Vec::new();
    let mut i = m;
    while i > 0 {
        if take[i - 1] {
            indices.push(i - 1);
            i = cs.conflict[i - 1].0;
        } else {
            i -= 1;
        }
    }
    indices.reverse();
    Ok(packing(indices, best[m], Method::Dp))
}

/// Exact minimum-cost cover of the sample by closed Bowen balls centered at
/// sample points, `ball_sup[c]` being the cost of center `c`.
///
/// `cost[e]` (cover of the first `e` points) is the minimum over centers
/// `c` whose ball holds point `e-1` of `cost[lo_c] (+) ball_sup[c]`; those
/// centers form a window sliding right, kept in a monotone deque.
pub fn min_weight_spanning_dp(cs: &ConflictStructure, ball_sup: &[f64]) -> Result<CoveringSolution> {
    check_weights(cs, ball_sup)?;
    cs.check_interval()?;
    let m = cs.len();
    let mut cost = vec![f64::NEG_INFINITY; m + 1];
    let mut via = vec![usize::MAX; m + 1];
    let mut cand = vec![f64::INFINITY; m];
    let mut window: VecDeque<usize> = VecDeque::new();
    let mut next = 0usize;
    for e in 1..=m {
        let p = e - 1;
        while next < m && cs.ball[next].0 <= p {
            cand[next] = log_add_exp(cost[cs.ball[next].0], ball_sup[next]);
            while window.back().is_some_and(|&b| cand[b] > cand[next]) {
                window.pop_back();
            }
            window.push_back(next);
            next += 1;
        }
        while window.front().is_some_and(|&f| cs.ball[f].1 < p) {
            window.pop_front();
        }
        let &c = window.front().ok_or(Error::Uncoverable(p))?;
        cost[e] = cand[c];
        via[e] = c;
    }
    let mut indices = Vec::new();
    let mut e = m;
    while e > 0 {
        let c = via[e];
        indices.push(c);
        e = cs.ball[c].0;
    }
    indices.reverse();
    Ok(covering(indices, cost[m], Method::Dp))
}

/// Exhaustive optimum over all subsets, from pairwise distances only.
pub enum OracleSolution {
    Packing(PackingSolution),
    Covering(CoveringSolution),
}

impl OracleSolution {
    pub fn log_total(&self) -> f64 {
        match self {
            OracleSolution::Packing(p) => p.log_total,
            OracleSolution::Covering(c) => c.log_total,
        }
    }

    pub fn indices(&self) -> &[usize] {
        match self {
            OracleSolution::Packing(p) => &p.indices,
            OracleSolution::Covering(c) => &c.indices,
        }
    }
}

pub fn brute_force_oracle(cs: &ConflictStructure, log_w: &[f64], mode: OracleMode) -> Result<OracleSolution> {
    check_weights(cs, log_w)?;
    let m = cs.len();
    if m > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge { m, limit: ORACLE_LIMIT });
    }
    let full: u32 = (1u32 << m) - 1;
    let bits = |s: u32| (0..m).filter(move |&i| s & (1 << i) != 0);
    match mode {
        OracleMode::Packing => {
            let blocked: Vec<u32> = (0..m)
                .map(|i| (0..m).filter(|&k| k != i && !cs.separated(i, k)).fold(0, |a, k| a | 1 << k))
                .collect();
            let mut best = (f64::NEG_INFINITY, 0u32);
            for s in 1..=full {
                if bits(s).all(|i| blocked[i] & s == 0) {
                    let v = log_sum_exp(&bits(s).map(|i| log_w[i]).collect::<Vec<_>>());
                    if v > best.0 {
                        best = (v, s);
                    }
                }
            }
            Ok(OracleSolution::Packing(packing(bits(best.1).collect(), best.0, Method::Brute)))
        }
        OracleMode::Covering => {
            let ball: Vec<u32> = (0..m)
                .map(|c| (0..m).filter(|&k| cs.in_ball(c, k)).fold(0, |a, k| a | 1 << k))
                .collect();
            let sup: Vec<f64> = (0..m)
                .map(|c| bits(ball[c]).map(|k| log_w[k]).fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let mut best = (f64::INFINITY, 0u32);
            for s in 1..=full {
                if bits(s).fold(0, |a, c| a | ball[c]) == full {
                    let v = log_sum_exp(&bits(s).map(|c| sup[c]).collect::<Vec<_>>());
                    if v < best.0 {
                        best = (v, s);
                    }
                }
            }
            if best.1 == 0 {
                return Err(Error::Uncoverable(0));
            }
            Ok(OracleSolution::Covering(covering(bits(best.1).collect(), best.0, Method::Brute)))
        }
    }
}

/// Random interval instance: up to `m` sorted parameters in `[-0.1, 0.1]`,
/// 1 to 3 levels each a random increasing reparameterization stretched by
/// `2.6^j`, a random scale and random log-weights in `[-3, 3]`.
pub fn random_instance<R: Rng>(rng: &mut R, m: usize) -> (ConflictStructure, Vec<f64>) {
    let depth = rng.gen_range(1..4);
    let mut params: Vec<f64> = (0..m.max(1)).map(|_| rng.gen_range(-0.1..0.1)).collect();
    params.sort_by(|a, b| a.partial_cmp(b).unwrap());
    params.dedup();
    let mut coords = vec![Vec::new(); params.len()];
    for j in 0..depth {
        let rate = 2.6f64.powi(j);
        let mut acc = 0.0;
        for (i, c) in coords.iter_mut().enumerate() {
            if i > 0 {
                acc += (params[i] - params[i - 1]) * rate * rng.gen_range(0.8..1.2);
            }
            c.push(acc);
        }
    }
    let metric = LeafMetric::from_coordinates(params.clone(), coords).expect("monotone by construction");
    let eps = rng.gen_range(0.005..0.12);
    let cs = ConflictStructure::from_metric(Arc::new(metric), eps).expect("eps > 0");
    let w = (0..params.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
    (cs, w)
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSuiteReport {
    pub instances: usize,
    pub max_m: usize,
    pub seed: u64,
    pub max_packing_defect: f64,
    pub max_covering_defect: f64,
    /// Instances whose DP and brute-force totals differ by more than 1e-9.
    pub mismatches: Vec<usize>,
}

impl OracleSuiteReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// DP packing and covering against exhaustive enumeration on seeded random
/// instances with `1 <= m <= max_m`.
pub fn oracle_suite(instances: usize, max_m: usize, seed: u64) -> Result<OracleSuiteReport> {
    if max_m == 0 || max_m > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge { m: max_m, limit: ORACLE_LIMIT });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases: Vec<(ConflictStructure, Vec<f64>)> = (0..instances)
        .map(|_| {
            let m = rng.gen_range(1..=max_m);
            random_instance(&mut rng, m)
        })
        .collect();
    let defects: Vec<(f64, f64)> = cases
        .par_iter()
        .map(|(cs, w)| {
            let dp = max_weight_separated_dp(cs, w)?;
            let bp = brute_force_oracle(cs, w, OracleMode::Packing)?;
            let dc = min_weight_spanning_dp(cs, &ball_sup_weights(cs, w)?)?;
            let bc = brute_force_oracle(cs, w, OracleMode::Covering)?;
            Ok(((dp.log_total - bp.log_total()).abs(), (dc.log_total - bc.log_total()).abs()))
        })
        .collect::<Result<_>>()?;
    let mismatches = defects
        .iter()
        .enumerate()
        .filter(|(_, &(p, c))| !(p <= 1e-9 && c <= 1e-9))
        .map(|(i, _)| i)
        .collect();
    Ok(OracleSuiteReport {
        instances,
        max_m,
        seed,
        max_packing_defect: defects.iter().map(|d| d.0).fold(0.0, f64::max),
        max_covering_defect: defects.iter().map(|d| d.1).fold(0.0, f64::max),
        mismatches,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Depth-1 structure on explicit parameters (`d = |s - t|`).
    fn flat(params: &[f64], eps: f64) -> ConflictStructure {
        let coords = params.iter().map(|&s| vec![s]).collect();
        let metric = LeafMetric::from_coordinates(params.to_vec(), coords).unwrap();
        ConflictStructure::from_metric(Arc::new(metric), eps).unwrap()
    }

    fn assert_separated(cs: &ConflictStructure, idx: &[usize]) {
        for (a, &i) in idx.iter().enumerate() {
            for &k in &idx[a + 1..] {
                assert!(cs.separated(i, k), "{i} and {k} are not separated");
            }
        }
    }

    fn assert_spanning(cs: &ConflictStructure, centers: &[usize]) {
        for k in 0..cs.len() {
            assert!(centers.iter().any(|&c| cs.in_ball(c, k)), "point {k} uncovered");
        }
    }

    #[test]
    fn five_point_grid_examples() {
        let params = [-0.1, -0.05, 0.0, 0.05, 0.1];
        let cs = flat(&params, 0.05);
        let w = vec![0.0; 5];
        let g = greedy_max_separated(&cs, &w).unwrap();
        assert_eq!(g.indices, vec![0, 1, 2, 3, 4]);
        assert!((g.total_weight - 5.0).abs() < 1e-12);
        let dp = max_weight_separated_dp(&cs, &w).unwrap();
        assert!((dp.log_total - 5f64.ln()).abs() < 1e-12);
        let cover = min_weight_spanning_dp(&cs, &ball_sup_weights(&cs, &w).unwrap()).unwrap();
        assert_eq!(cover.indices.len(), 2);
        assert!((cover.total_weight - 2.0).abs() < 1e-12);
    }

    #[test]
    fn heavy_center_beats_two_light_neighbours() {
        let cs = flat(&[-0.05, 0.0, 0.05], 0.06);
        let w = vec![0.0, 100f64.ln(), 0.0];
        let dp = max_weight_separated_dp(&cs, &w).unwrap();
        assert_eq!(dp.indices, vec![1]);
        assert!((dp.total_weight - 100.0).abs() < 1e-9);
        let OracleSolution::Packing(b) = brute_force_oracle(&cs, &w, OracleMode::Packing).unwrap() else {
            panic!()
        };
        assert_eq!(b.indices, vec![1]);
    }

    #[test]
    fn trivial_structures() {
        let one = flat(&[0.0], 0.05);
        assert_eq!(greedy_max_separated(&one, &[1.0]).unwrap().indices, vec![0]);
        assert_eq!(brute_force_oracle(&one, &[1.0], OracleMode::Packing).unwrap().indices(), &[0]);
        assert_eq!(brute_force_oracle(&one, &[1.0], OracleMode::Covering).unwrap().indices(), &[0]);
        let params: Vec<f64> = (0..11).map(|i| -0.1 + 0.02 * i as f64).collect();
        // unique maximum at s = 0, eps beyond the leaf
        let w: Vec<f64> = params.iter().map(|s| -s * s).collect();
        let total = flat(&params, 1.0);
        assert_eq!(greedy_max_separated(&total, &w).unwrap().indices, vec![5]);
        assert_eq!(max_weight_separated_dp(&total, &w).unwrap().indices.len(), 1);
        assert_eq!(min_weight_spanning_dp(&total, &[0.0; 11]).unwrap().indices.len(), 1);
        // no conflicts: everything is selected
        let none = flat(&params, 0.01);
        let dp = max_weight_separated_dp(&none, &w).unwrap();
        assert_eq!(dp.indices.len(), 11);
        assert!((dp.log_total - log_sum_exp(&w)).abs() < 1e-12);
    }

    #[test]
    fn oracle_refuses_large_samples() {
        let params: Vec<f64> = (0..21).map(|i| i as f64).collect();
        let cs = flat(&params, 0.5);
        let err = brute_force_oracle(&cs, &[0.0; 21], OracleMode::Packing).err().unwrap();
        assert_eq!(err, Error::OracleTooLarge { m: 21, limit: 20 });
    }

    #[test]
    fn dp_matches_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
        for trial in 0..250 {
            let m = rng.gen_range(1..=18);
            let (cs, w) = random_instance(&mut rng, m);
            let dp = max_weight_separated_dp(&cs, &w).unwrap();
            let bp = brute_force_oracle(&cs, &w, OracleMode::Packing).unwrap();
            assert!((dp.log_total - bp.log_total()).abs() <= 1e-9, "packing trial {trial}");
            assert_separated(&cs, &dp.indices);
            let sup = ball_sup_weights(&cs, &w).unwrap();
            let dc = min_weight_spanning_dp(&cs, &sup).unwrap();
            let bc = brute_force_oracle(&cs, &w, OracleMode::Covering).unwrap();
            assert!((dc.log_total - bc.log_total()).abs() <= 1e-9, "covering trial {trial}");
            assert_spanning(&cs, &dc.indices);
            let g = greedy_max_separated(&cs, &w).unwrap();
            assert!(g.log_total <= dp.log_total + 1e-12);
            assert!(dc.log_total <= g.log_cover_cost.unwrap() + 1e-12);
        }
    }

    #[test]
    fn oracle_suite_is_clean() {
        let r = oracle_suite(200, 18, 99).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(oracle_suite(1, 21, 0).is_err());
    }

    #[test]
    fn constant_weights_greedy_is_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let m = rng.gen_range(1..=18);
            let (cs, _) = random_instance(&mut rng, m);
            let w = vec![0.3; cs.len()];
            let g = greedy_max_separated(&cs, &w).unwrap();
            let dp = max_weight_separated_dp(&cs, &w).unwrap();
            assert!((g.log_total - dp.log_total).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn greedy_is_separated_and_maximal(seed in 0u64..10_000, m in 1usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (cs, w) = random_instance(&mut rng, m);
            let g = greedy_max_separated(&cs, &w).unwrap();
            assert_separated(&cs, &g.indices);
            assert_spanning(&cs, &g.indices);
            let dp = max_weight_separated_dp(&cs, &w).unwrap();
            assert_separated(&cs, &dp.indices);
            prop_assert!(g.log_total <= dp.log_total + 1e-12);
        }
    }
}
