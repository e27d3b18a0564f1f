use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metric::{required_sample_size, ConflictStructure, LeafMetric, DENSITY_FACTOR};
use super::optimize::{ball_sup_weights, greedy_max_separated, max_weight_separated_dp, min_weight_spanning_dp};
use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};
use crate::leaf::{sample_leaf, BowenDistanceEvaluator, ChartKind, LeafChart, LeafSample};
use crate::numeric::median;
use crate::potentials::PotentialSeq;

/// Grid and budget of a pressure run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PressureParams {
    pub epsilons: Vec<f64>,
    pub n_min: usize,
    pub n_max: usize,
    /// Largest sample size per stage.
    pub sample_budget: usize,
    pub density_factor: usize,
}

impl Default for PressureParams {
    fn default() -> Self {
        Self {
            epsilons: vec![0.04, 0.02, 0.01],
            n_min: 2,
            n_max: 8,
            sample_budget: 1_000_000,
            density_factor: DENSITY_FACTOR,
        }
    }
}

impl PressureParams {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::InvalidArgument("epsilons: empty list".into()));
        }
        if self.epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::InvalidArgument("epsilons: values must be > 0".into()));
        }
        if self.n_min == 0 || self.n_max < self.n_min {
            return Err(Error::InvalidArgument(format!(
                "n range {}..={} must satisfy 1 <= n_min <= n_max",
                self.n_min, self.n_max
            )));
        }
        if self.density_factor == 0 {
            return Err(Error::InvalidArgument("density_factor must be >= 1".into()));
        }
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.n_max - self.n_min + 1
    }

    fn min_epsilon(&self) -> f64 {
        self.epsilons.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// One `(n, eps)` cell of the pressure table; totals are natural logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureRow {
    pub n: usize,
    pub epsilon: f64,
    pub m: usize,
    pub log_p: f64,
    pub log_q: f64,
    pub log_greedy: f64,
    /// The greedy set's cost as a spanning set.
    pub log_greedy_cover: f64,
    pub packing_size: usize,
    pub covering_size: usize,
    pub greedy_size: usize,
}

impl PressureRow {
    pub const CSV_HEADER: [&'static str; 6] = ["n", "epsilon", "m", "logP", "logQ", "logGreedy"];

    pub fn csv_fields(&self) -> [String; 6] {
        [
            self.n.to_string(),
            self.epsilon.to_string(),
            self.m.to_string(),
            self.log_p.to_string(),
            self.log_q.to_string(),
            self.log_greedy.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PressureTable {
    pub params: PressureParams,
    pub base_point: Vec<f64>,
    pub delta: f64,
    pub chart_kind: ChartKind,
    pub chart_residual: f64,
    /// Ordered by `n`, then by position in `params.epsilons`.
    pub rows: Vec<PressureRow>,
}

impl PressureTable {
    pub fn row(&self, n: usize, epsilon: f64) -> Option<&PressureRow> {
        self.rows.iter().find(|r| r.n == n && r.epsilon == epsilon)
    }

    /// Rows at one scale, ordered by `n`.
    pub fn column(&self, epsilon: f64) -> Vec<&PressureRow> {
        self.rows.iter().filter(|r| r.epsilon == epsilon).collect()
    }
}

/// `log g_n` at the sample points.
pub fn sample_weights(sys: &SystemSpec, g: &PotentialSeq, sample: &LeafSample, n: usize) -> Result<Vec<f64>> {
    sample
        .points()
        .par_iter()
        .map(|p| g.eval_log_gn(sys, p, n))
        .collect::<Result<Vec<_>>>()
        .and_then(|w| {
            if w.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                Err(Error::InvalidArgument("potential is not finite on the leaf".into()))
            } else {
                Ok(w)
            }
        })
}

fn solve_row(cs: &ConflictStructure, log_w: &[f64]) -> Result<PressureRow> {
    let p = max_weight_separated_dp(cs, log_w)?;
    let q = min_weight_spanning_dp(cs, &ball_sup_weights(cs, log_w)?)?;
    let g = greedy_max_separated(cs, log_w)?;
    Ok(PressureRow {
        n: cs.n,
        epsilon: cs.epsilon,
        m: cs.len(),
        log_p: p.log_total,
        log_q: q.log_total,
        log_greedy: g.log_total,
        log_greedy_cover: g.log_cover_cost.unwrap(),
        packing_size: p.indices.len(),
        covering_size: q.indices.len(),
        greedy_size: g.indices.len(),
    })
}

/// Rows for every `eps` at depth `n` on one shared sample and weight vector.
fn stage_rows(
    sys: &SystemSpec,
    ev: &BowenDistanceEvaluator,
    g: &PotentialSeq,
    n: usize,
    epsilons: &[f64],
    m: usize,
) -> Result<Vec<PressureRow>> {
    let sample = sample_leaf(ev.chart(), m)?;
    let weights = sample_weights(sys, g, &sample, n)?;
    let metric = Arc::new(LeafMetric::new(ev, &sample, n)?);
    epsilons
        .par_iter()
        .map(|&eps| {
            let cs = ConflictStructure::from_metric(metric.clone(), eps)?;
            solve_row(&cs, &weights)
        })
        .collect()
}

/// A single `(n, eps)` row on an `m`-point sample.
pub fn finite_stage_row(
    sys: &SystemSpec,
    chart: &LeafChart,
    g: &PotentialSeq,
    n: usize,
    epsilon: f64,
    m: usize,
) -> Result<PressureRow> {
    g.validate(sys.dim())?;
    let ev = BowenDistanceEvaluator::new(sys, chart, n)?;
    let sample = sample_leaf(chart, m)?;
    let cs = super::metric::build_conflicts(&ev, &sample, n, epsilon)?;
    let weights = sample_weights(sys, g, &sample, n)?;
    solve_row(&cs, &weights)
}

/// Sample size used at depth `n`: the density rule at the smallest scale.
fn stage_sample_size(ev: &BowenDistanceEvaluator, n: usize, params: &PressureParams) -> Result<usize> {
    let required = required_sample_size(ev.pushed_length(n - 1), params.min_epsilon(), params.density_factor)
        .max(2);
    if required > params.sample_budget as u64 {
        return Err(Error::UnderResolved {
            required,
            available: params.sample_budget as u64,
        });
    }
    Ok(required as usize)
}

/// Computes the `(n, eps)` grid of finite-stage pressures on `chart`.
///
/// The density rule is checked at the linear expansion rate before any leaf
/// is pushed, then again on the actual pushed lengths.
pub fn run_pressure(
    sys: &SystemSpec,
    chart: &LeafChart,
    g: &PotentialSeq,
    params: &PressureParams,
) -> Result<PressureTable> {
    params.validate()?;
    g.validate(sys.dim())?;
    let lambda = sys.expansion_rate();
    let rough = 2.0 * chart.radius() * lambda.powi(params.n_max as i32 - 1);
    let required = required_sample_size(rough, params.min_epsilon(), params.density_factor);
    if required > params.sample_budget as u64 {
        return Err(Error::UnderResolved {
            required,
            available: params.sample_budget as u64,
        });
    }
    let ev = BowenDistanceEvaluator::new(sys, chart, params.n_max)?;
    let sizes: Vec<usize> = (params.n_min..=params.n_max)
        .map(|n| stage_sample_size(&ev, n, params))
        .collect::<Result<_>>()?;
    let nested: Vec<Vec<PressureRow>> = sizes
        .par_iter()
        .enumerate()
        .map(|(i, &m)| stage_rows(sys, &ev, g, params.n_min + i, &params.epsilons, m))
        .collect::<Result<_>>()?;
    Ok(PressureTable {
        params: params.clone(),
        base_point: chart.center().coords().to_vec(),
        delta: chart.radius(),
        chart_kind: chart.kind(),
        chart_residual: chart.residual(),
        rows: nested.into_iter().flatten().collect(),
    })
}

/// Growth rates at one scale.
#[derive(Debug, Clone, Serialize)]
pub struct EpsilonEstimate {
    pub epsilon: f64,
    pub stages: usize,
    /// Successive differences `log P_{n+1} - log P_n`, all stages.
    pub differences: Vec<f64>,
    pub rate_p: f64,
    pub rate_q: f64,
    pub rate_greedy: f64,
    /// Half the spread of the differences entering `rate_p`.
    pub noise: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PressureEstimate {
    /// Rate at the smallest scale; `None` when under-resolved.
    pub estimate: Option<f64>,
    pub noise: Option<f64>,
    pub resolved: bool,
    pub per_epsilon: Vec<EpsilonEstimate>,
    /// Rates do not decrease (beyond noise) as `eps` shrinks.
    pub epsilon_monotone: bool,
    pub diagnostics: Vec<String>,
}

/// Minimum stages per scale for an estimate.
pub const MIN_STAGES: usize = 4;
/// Slack added to the noise in the scale-monotonicity diagnostic.
const MONOTONE_SLACK: f64 = 0.01;

/// Median of the upper half of a difference sequence, with its half-spread.
fn robust_rate(values: &[f64]) -> (f64, f64) {
    let take = values.len().div_ceil(2);
    let top = &values[values.len() - take..];
    let lo = top.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = top.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (median(top).unwrap(), (hi - lo) / 2.0)
}

fn diffs(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Growth-rate estimate: per scale, the median of the successive
/// log-differences over the largest stages; overall, the rate at the
/// smallest scale.
pub fn estimate_pressure(table: &PressureTable) -> PressureEstimate {
    let mut per_epsilon = Vec::new();
    let mut diagnostics = Vec::new();
    let mut resolved = true;
    for &eps in &table.params.epsilons {
        let col = table.column(eps);
        if col.len() < MIN_STAGES {
            resolved = false;
            diagnostics.push(format!("eps {eps}: {} stages, need {MIN_STAGES}", col.len()));
            continue;
        }
        let p: Vec<f64> = col.iter().map(|r| r.log_p).collect();
        let q: Vec<f64> = col.iter().map(|r| r.log_q).collect();
        let gr: Vec<f64> = col.iter().map(|r| r.log_greedy).collect();
        let differences = diffs(&p);
        if differences.iter().any(|d| !d.is_finite()) {
            resolved = false;
            diagnostics.push(format!("eps {eps}: non-finite stage totals"));
            continue;
        }
        let (rate_p, noise) = robust_rate(&differences);
        per_epsilon.push(EpsilonEstimate {
            epsilon: eps,
            stages: col.len(),
            rate_p,
            rate_q: robust_rate(&diffs(&q)).0,
            rate_greedy: robust_rate(&diffs(&gr)).0,
            noise,
            differences,
        });
    }
    let mut by_scale: Vec<&EpsilonEstimate> = per_epsilon.iter().collect();
    by_scale.sort_by(|a, b| b.epsilon.partial_cmp(&a.epsilon).unwrap());
    let mut epsilon_monotone = true;
    for w in by_scale.windows(2) {
        let drop = w[0].rate_p - w[1].rate_p;
        if drop > w[0].noise + w[1].noise + MONOTONE_SLACK {
            epsilon_monotone = false;
            diagnostics.push(format!(
                "rate decreases by {drop:.4} from eps {} to eps {}",
                w[0].epsilon, w[1].epsilon
            ));
        }
    }
    let smallest = by_scale.last().filter(|_| resolved);
    PressureEstimate {
        estimate: smallest.map(|e| e.rate_p),
        noise: smallest.map(|e| e.noise),
        resolved,
        per_epsilon,
        epsilon_monotone,
        diagnostics,
    }
}

/// Runs the pipeline and the estimator; an unresolved table is an error.
pub fn estimate(
    sys: &SystemSpec,
    chart: &LeafChart,
    g: &PotentialSeq,
    params: &PressureParams,
) -> Result<(PressureTable, PressureEstimate, f64)> {
    let table = run_pressure(sys, chart, g, params)?;
    let est = estimate_pressure(&table);
    match est.estimate {
        Some(v) => Ok((table, est, v)),
        None => Err(Error::UnderResolved {
            required: MIN_STAGES as u64,
            available: params.stages() as u64,
        }),
    }
}

/// Stage pressure `P^u(f, (1/l) log g_l)`: the pipeline applied to the
/// additive potential with Birkhoff summand `(1/l) log g_l`.
pub fn additive_stage_pressure(
    sys: &SystemSpec,
    chart: &LeafChart,
    g: &PotentialSeq,
    n_stage: usize,
    params: &PressureParams,
) -> Result<f64> {
    let phi = PotentialSeq::stage_average(n_stage, g.clone())?;
    Ok(estimate(sys, chart, &phi, params)?.2)
}

/// Tolerance of the exact row inequalities.
pub const ROW_TOLERANCE: f64 = 1e-9;

/// Worst violations of the row inequalities of a table. Defects are
/// `lhs - rhs` of an inequality `lhs <= rhs`, so `<= 0` means it holds.
#[derive(Debug, Clone, Serialize)]
pub struct RowAudit {
    /// `log Q <= log (greedy cover cost)` and `log greedy <= log P`.
    pub bracket_defect: f64,
    /// `log Q <= log greedy`; exact when weights are constant on balls.
    pub greedy_defect: f64,
    /// `log P(eps) <= log Q(eps / 2)` over the scale pairs present.
    pub halving_defect: Option<f64>,
    /// `max |rate_P - rate_Q|` over the resolved scales.
    pub rate_gap: Option<f64>,
    pub rows: usize,
}

impl RowAudit {
    /// The inequalities that hold for every potential.
    pub fn exact_passed(&self) -> bool {
        self.bracket_defect <= ROW_TOLERANCE && self.halving_defect.is_none_or(|d| d <= ROW_TOLERANCE)
    }
}

pub fn audit_rows(table: &PressureTable, est: &PressureEstimate) -> RowAudit {
    let mut bracket_defect = f64::NEG_INFINITY;
    let mut greedy_defect = f64::NEG_INFINITY;
    for r in &table.rows {
        bracket_defect = bracket_defect.max(r.log_q - r.log_greedy_cover).max(r.log_greedy - r.log_p);
        greedy_defect = greedy_defect.max(r.log_q - r.log_greedy);
    }
    let mut halving_defect: Option<f64> = None;
    for &eps in &table.params.epsilons {
        let Some(&half) = table
            .params
            .epsilons
            .iter()
            .find(|&&e| (2.0 * e - eps).abs() <= 1e-12 * eps)
        else {
            continue;
        };
        for r in table.column(eps) {
            if let Some(h) = table.row(r.n, half) {
                let d = r.log_p - h.log_q;
                halving_defect = Some(halving_defect.map_or(d, |x| x.max(d)));
            }
        }
    }
    let rate_gap = est
        .per_epsilon
        .iter()
        .map(|e| (e.rate_p - e.rate_q).abs())
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))));
    RowAudit {
        bracket_defect,
        greedy_defect,
        halving_defect,
        rate_gap,
        rows: table.rows.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TorusPoint;
    use crate::leaf::build_leaf_chart;
    use crate::potentials::TrigObservable;

    fn catrot() -> SystemSpec {
        SystemSpec::cat_rotation(SystemSpec::golden_angle())
    }

    fn chart(sys: &SystemSpec, delta: f64) -> LeafChart {
        build_leaf_chart(sys, &TorusPoint::new(vec![0.2, 0.3, 0.4]), delta).unwrap()
    }

    fn log_lambda() -> f64 {
        ((3.0 + 5f64.sqrt()) / 2.0).ln()
    }

    #[test]
    fn constant_row_is_the_packing_count() {
        let sys = catrot();
        let ch = chart(&sys, 0.1);
        let lam = sys.expansion_rate();
        // n = 1 on the exact 0.05-lattice; otherwise the grid is fine enough
        // that accumulated rounding stays inside the slack of the continuum count
        for (n, eps, m) in [(1, 0.05, 401), (2, 0.04, 4066), (3, 0.02, 17_485), (4, 0.01, 291_021)] {
            let length = 0.2 * lam.powi(n as i32 - 1);
            let row = finite_stage_row(&sys, &ch, &PotentialSeq::zero(), n, eps, m).unwrap();
            let count = (length / eps + 1.0).floor();
            assert_eq!(row.packing_size as f64, count, "n={n}");
            assert!((row.log_p - count.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_law_is_exact_per_row() {
        let sys = catrot();
        let ch = chart(&sys, 0.1);
        let g = PotentialSeq::birkhoff(TrigObservable::cos_first(3));
        let shifted = PotentialSeq::shift(0.5, g.clone());
        let params = PressureParams { n_max: 5, ..Default::default() };
        let a = run_pressure(&sys, &ch, &g, &params).unwrap();
        let b = run_pressure(&sys, &ch, &shifted, &params).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert!((rb.log_p - ra.log_p - 0.5 * ra.n as f64).abs() <= 1e-9);
            assert!((rb.log_q - ra.log_q - 0.5 * ra.n as f64).abs() <= 1e-9);
        }
    }

    #[test]
    fn rows_are_bracketed_and_scale_monotone() {
        let sys = catrot();
        let ch = chart(&sys, 0.1);
        let g = PotentialSeq::sum(
            PotentialSeq::birkhoff(TrigObservable::cos_first(3)),
            PotentialSeq::cocycle(0.5),
        );
        let params = PressureParams { n_max: 6, ..Default::default() };
        let t = run_pressure(&sys, &ch, &g, &params).unwrap();
        let audit = audit_rows(&t, &estimate_pressure(&t));
        assert!(audit.exact_passed(), "{audit:?}");
        assert!(audit.halving_defect.is_some());
        for r in &t.rows {
            assert!(r.log_q <= r.log_greedy_cover + 1e-12, "{r:?}");
            assert!(r.log_greedy <= r.log_p + 1e-12, "{r:?}");
        }
        for n in 2..=6 {
            let p: Vec<f64> = [0.04, 0.02, 0.01].iter().map(|&e| t.row(n, e).unwrap().log_p).collect();
            assert!(p[0] <= p[1] + 1e-12 && p[1] <= p[2] + 1e-12, "n={n} {p:?}");
            // Q(eps/2) >= P(eps)
            assert!(t.row(n, 0.02).unwrap().log_q >= t.row(n, 0.04).unwrap().log_p - 1e-12);
            assert!(t.row(n, 0.01).unwrap().log_q >= t.row(n, 0.02).unwrap().log_p - 1e-12);
        }
    }

    #[test]
    fn entropy_and_cocycle_line() {
        let sys = catrot();
        let ch = chart(&sys, 0.1);
        for t in [-1.0, 0.0, 1.0] {
            let (_, est, v) = estimate(&sys, &ch, &PotentialSeq::cocycle(t), &PressureParams::default()).unwrap();
            let expected = (1.0 + t) * log_lambda();
            assert!((v - expected).abs() <= 0.02 * expected.max(1.0), "t={t} {v} vs {expected}");
            assert!(est.epsilon_monotone, "{:?}", est.diagnostics);
        }
    }

    #[test]
    fn density_rule_refuses_deep_fine_grids() {
        let sys = catrot();
        let params = PressureParams { epsilons: vec![1e-4], n_min: 2, n_max: 20, ..Default::default() };
        let err = run_pressure(&sys, &chart(&sys, 0.1), &PotentialSeq::zero(), &params).unwrap_err();
        assert_eq!(err.reason_code(), "under-resolved");
    }

    #[test]
    fn too_few_stages_gives_no_estimate() {
        let sys = catrot();
        let params = PressureParams { n_min: 2, n_max: 4, ..Default::default() };
        let t = run_pressure(&sys, &chart(&sys, 0.1), &PotentialSeq::zero(), &params).unwrap();
        let e = estimate_pressure(&t);
        assert!(!e.resolved && e.estimate.is_none());
    }

    #[test]
    fn pipeline_is_deterministic() {
        let sys = catrot();
        let ch = chart(&sys, 0.1);
        let g = PotentialSeq::birkhoff(TrigObservable::cos_first(3));
        let params = PressureParams { n_max: 5, ..Default::default() };
        let a = run_pressure(&sys, &ch, &g, &params).unwrap();
        let b = run_pressure(&sys, &ch, &g, &params).unwrap();
        assert_eq!(a.rows, b.rows);
    }
}
