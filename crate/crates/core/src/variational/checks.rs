use serde::{Deserialize, Serialize};

use super::registry::MeasureEntry;
use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};
use crate::leaf::{build_leaf_chart, LeafChart};
use crate::potentials::{PotentialSeq, TrigObservable};
use crate::pressure::{additive_stage_pressure, estimate, run_pressure, PressureParams, PressureTable};

/// Tolerance of exact row identities.
pub const EXACT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Exact,
    Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Unsupported,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyCheck {
    pub item: u8,
    pub name: String,
    pub kind: CheckKind,
    /// Measured defect; a check passes when `defect <= tolerance`.
    pub defect: f64,
    pub tolerance: f64,
    pub status: CheckStatus,
    pub note: String,
}

impl PropertyCheck {
    fn new(item: u8, name: &str, kind: CheckKind, defect: f64, tolerance: f64) -> Self {
        Self {
            item,
            name: name.into(),
            kind,
            defect,
            tolerance,
            status: if defect <= tolerance { CheckStatus::Pass } else { CheckStatus::Fail },
            note: String::new(),
        }
    }

    fn unsupported(item: u8, name: &str, note: &str) -> Self {
        Self {
            item,
            name: name.into(),
            kind: CheckKind::Estimate,
            defect: 0.0,
            tolerance: 0.0,
            status: CheckStatus::Unsupported,
            note: note.into(),
        }
    }
}

/// Inputs of the property suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropertyParams {
    /// Shift constant of item 1.
    pub shift: f64,
    /// Scale factor of item 5 (either side of 1).
    pub scale: f64,
    /// Convex weight of item 3.
    pub p: f64,
    pub estimate_tolerance: f64,
    pub twist_tolerance: f64,
}

impl Default for PropertyParams {
    fn default() -> Self {
        Self {
            shift: 0.5,
            scale: 2.0,
            p: 0.5,
            estimate_tolerance: 0.02,
            twist_tolerance: 0.03,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub checks: Vec<PropertyCheck>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn exact_passed(&self) -> bool {
        self.checks
            .iter()
            .filter(|c| c.kind == CheckKind::Exact)
            .all(|c| c.status != CheckStatus::Fail)
    }
}

/// Largest `f(row_a, row_b, ...)` over matching rows of tables on the same
/// grid.
fn row_defect<F>(tables: &[&PressureTable], f: F) -> f64
where
    F: Fn(&[f64], usize) -> f64,
{
    (0..tables[0].rows.len())
        .map(|i| {
            let logs: Vec<f64> = tables.iter().map(|t| t.rows[i].log_p).collect();
            f(&logs, tables[0].rows[i].n)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// The additive `H` as its Birkhoff summand, when it has one.
pub fn additive_observable(h: &PotentialSeq) -> Option<TrigObservable> {
    match h {
        PotentialSeq::AdditiveBirkhoff { observable } => Some(observable.clone()),
        PotentialSeq::Constant { c } => Some(TrigObservable::constant(*c)),
        PotentialSeq::Shift { c, inner } => {
            let mut o = additive_observable(inner)?;
            o.constant += c;
            Some(o)
        }
        PotentialSeq::Scale { c, inner } => {
            let mut o = additive_observable(inner)?;
            o.constant *= c;
            for t in &mut o.terms {
                t.cos *= c;
                t.sin *= c;
            }
            Some(o)
        }
        PotentialSeq::Sum { left, right } => {
            let mut o = additive_observable(left)?;
            let r = additive_observable(right)?;
            o.constant += r.constant;
            o.terms.extend(r.terms);
            Some(o)
        }
        _ => None,
    }
}

/// Items (1)-(6) of the pressure properties: exact row identities and
/// inequalities where the algebra forces them, estimate-level comparisons
/// otherwise.
pub fn check_properties(
    sys: &SystemSpec,
    chart: &LeafChart,
    g: &PotentialSeq,
    h: &PotentialSeq,
    pp: &PropertyParams,
    params: &PressureParams,
) -> Result<PropertyReport> {
    if !(0.0..=1.0).contains(&pp.p) {
        return Err(Error::InvalidArgument(format!("p = {} outside [0, 1]", pp.p)));
    }
    let c = pp.shift;
    let base = run_pressure(sys, chart, g, params)?;
    let other = run_pressure(sys, chart, h, params)?;
    let shifted = run_pressure(sys, chart, &PotentialSeq::shift(c, g.clone()), params)?;
    let upper = run_pressure(sys, chart, &PotentialSeq::max(g.clone(), h.clone()), params)?;
    let convex = run_pressure(sys, chart, &PotentialSeq::convex(pp.p, g.clone(), h.clone())?, params)?;
    let sum = run_pressure(sys, chart, &PotentialSeq::sum(g.clone(), h.clone()), params)?;
    let scaled = run_pressure(sys, chart, &PotentialSeq::scale(pp.scale, g.clone())?, params)?;

    let mut checks = Vec::new();
    let exact = |item, name, d| PropertyCheck::new(item, name, CheckKind::Exact, d, EXACT_TOLERANCE);

    checks.push(exact(
        1,
        "shift law per row",
        row_defect(&[&shifted, &base], |l, n| (l[0] - l[1] - n as f64 * c).abs()),
    ));
    let est = |t: &PressureTable| crate::pressure::estimate_pressure(t).estimate;
    if let (Some(a), Some(b)) = (est(&shifted), est(&base)) {
        checks.push(PropertyCheck::new(
            1,
            "shift law of estimates",
            CheckKind::Estimate,
            (a - b - c).abs(),
            pp.estimate_tolerance,
        ));
    }
    let mut mono = exact(2, "monotone: G <= max(G, H) per row", row_defect(&[&base, &upper], |l, _| l[0] - l[1]));
    mono.note = "H replaced by max(G, H) so that G <= H holds pointwise".into();
    checks.push(mono);
    checks.push(exact(
        3,
        "convexity per row (Hoelder)",
        row_defect(&[&convex, &base, &other], |l, _| l[0] - pp.p * l[1] - (1.0 - pp.p) * l[2]),
    ));
    checks.push(exact(
        4,
        "sub-additivity in the potential per row",
        row_defect(&[&sum, &base, &other], |l, _| l[0] - l[1] - l[2]),
    ));
    let s = pp.scale;
    let mut sc = if s >= 1.0 {
        exact(5, "scale c >= 1: P(cG) <= c P(G) per row", row_defect(&[&scaled, &base], |l, _| l[0] - s * l[1]))
    } else {
        exact(5, "scale c <= 1: P(cG) >= c P(G) per row", row_defect(&[&scaled, &base], |l, _| s * l[1] - l[0]))
    };
    sc.note = format!("c = {s}");
    checks.push(sc);

    match additive_observable(h) {
        Some(phi) => {
            let twisted = run_pressure(sys, chart, &PotentialSeq::twist(g.clone(), phi), params)?;
            match (est(&twisted), est(&base)) {
                (Some(a), Some(b)) => checks.push(PropertyCheck::new(
                    6,
                    "coboundary invariance of estimates",
                    CheckKind::Estimate,
                    (a - b).abs(),
                    pp.twist_tolerance,
                )),
                _ => checks.push(PropertyCheck::unsupported(6, "coboundary invariance", "under-resolved table")),
            }
        }
        None => checks.push(PropertyCheck::unsupported(
            6,
            "coboundary invariance",
            "H is not additive; the identity is open for sub-additive H",
        )),
    }
    Ok(PropertyReport { checks })
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerRuleReport {
    pub k: u32,
    pub estimate_1: f64,
    pub estimate_k: f64,
    pub defect: f64,
    pub tolerance: f64,
    pub params_k: PressureParams,
    pub hu_1: Option<f64>,
    pub hu_k: Option<f64>,
    /// `|hu(f^k) - k hu(f)|` for Haar volume, when analytic.
    pub hu_defect: Option<f64>,
    pub passed: bool,
}

/// Per-step tolerance of the power rule.
pub const POWER_TOLERANCE: f64 = 0.03;

/// Stage range for `f^k`: the base range compressed by `k`, keeping at
/// least four stages.
pub fn iterate_params(params: &PressureParams, k: u32) -> PressureParams {
    let span = (params.n_max - 1) / k as usize + 1;
    PressureParams {
        n_max: span.max(params.n_min + 3),
        ..params.clone()
    }
}

/// `P^u(f^k, G^(k)) = k P^u(f, G)` on the pipeline, plus the registry
/// identity `h_vol(f^k) = k h_vol(f)`.
pub fn power_rule_check(
    sys: &SystemSpec,
    chart: &LeafChart,
    g: &PotentialSeq,
    k: u32,
    params: &PressureParams,
) -> Result<PowerRuleReport> {
    if !(2..=3).contains(&k) {
        return Err(Error::InvalidArgument(format!("power k = {k} must be 2 or 3")));
    }
    let sys_k = sys.iterate_system(k)?;
    let chart_k = build_leaf_chart(&sys_k, chart.center(), chart.radius())?;
    let g_k = PotentialSeq::iterate(k, sys, g.clone())?;
    let params_k = iterate_params(params, k);
    let (_, _, e1) = estimate(sys, chart, g, params)?;
    let (_, _, ek) = estimate(&sys_k, &chart_k, &g_k, &params_k)?;
    let hu_1 = MeasureEntry::haar(sys).hu;
    let hu_k = MeasureEntry::haar(&sys_k).hu;
    let hu_defect = hu_1.zip(hu_k).map(|(a, b)| (b - k as f64 * a).abs());
    let defect = (ek - k as f64 * e1).abs();
    let tolerance = k as f64 * POWER_TOLERANCE;
    Ok(PowerRuleReport {
        k,
        estimate_1: e1,
        estimate_k: ek,
        defect,
        tolerance,
        params_k,
        hu_1,
        hu_k,
        hu_defect,
        passed: defect <= tolerance && hu_defect.is_none_or(|d| d <= 1e-12),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageLimitParams {
    pub tolerance: f64,
    pub final_tolerance: f64,
    /// Also compute every stage `1..=max` and record (not assert) whether
    /// the full sequence decreases.
    pub full_sequence: bool,
}

impl Default for StageLimitParams {
    fn default() -> Self {
        Self {
            tolerance: 0.02,
            final_tolerance: 0.05,
            full_sequence: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageLimitReport {
    pub estimate: f64,
    pub stages: Vec<(usize, f64)>,
    /// `max (estimate - stage)`: (a) requires `<= tolerance`.
    pub lower_defect: f64,
    /// Largest increase along the doubling stages: (b).
    pub increase_defect: f64,
    /// `|last stage - estimate|` for potentials with an analytic rate: (c).
    pub final_defect: Option<f64>,
    pub full_sequence: Vec<(usize, f64)>,
    pub full_sequence_decreasing: Option<bool>,
    pub tolerance: f64,
    pub final_tolerance: f64,
    pub passed: bool,
}

/// Stage pressures `P^u(f, (1/l) log g_l)` along a doubling sequence of `l`
/// against the sub-additive estimate.
pub fn stage_limit_check(
    sys: &SystemSpec,
    chart: &LeafChart,
    g: &PotentialSeq,
    stages: &[usize],
    params: &PressureParams,
    sp: &StageLimitParams,
) -> Result<StageLimitReport> {
    if stages.is_empty() || stages[0] == 0 || stages.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(Error::InvalidArgument("stages must be a positive doubling sequence".into()));
    }
    let (_, _, est) = estimate(sys, chart, g, params)?;
    let values: Vec<(usize, f64)> = stages
        .iter()
        .map(|&l| Ok((l, additive_stage_pressure(sys, chart, g, l, params)?)))
        .collect::<Result<_>>()?;
    let lower_defect = values.iter().map(|&(_, v)| est - v).fold(f64::NEG_INFINITY, f64::max);
    let increase_defect = values
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    let final_defect = g
        .analytic_rate(sys)
        .map(|_| (values.last().unwrap().1 - est).abs());
    let mut full_sequence = Vec::new();
    if sp.full_sequence {
        for l in 1..=*stages.last().unwrap() {
            let v = match values.iter().find(|(s, _)| *s == l) {
                Some(&(_, v)) => v,
                None => additive_stage_pressure(sys, chart, g, l, params)?,
            };
            full_sequence.push((l, v));
        }
    }
    let full_sequence_decreasing = sp
        .full_sequence
        .then(|| full_sequence.windows(2).all(|w| w[1].1 <= w[0].1 + sp.tolerance));
    let passed = lower_defect <= sp.tolerance
        && increase_defect <= sp.tolerance
        && final_defect.is_none_or(|d| d <= sp.final_tolerance);
    Ok(StageLimitReport {
        estimate: est,
        stages: values,
        lower_defect,
        increase_defect,
        final_defect,
        full_sequence,
        full_sequence_decreasing,
        tolerance: sp.tolerance,
        final_tolerance: sp.final_tolerance,
        passed,
    })
}
