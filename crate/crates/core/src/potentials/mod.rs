//! Sub-additive potential sequences `G = {log g_n}`, their combinators, the
//! sub-additivity audit and the Lyapunov functional `G_+(mu)`.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{SystemSpec, TorusPoint};
use crate::error::{Error, Result};
use crate::variational::MeasureEntry;

/// Tolerance of the sub-additivity audit.
pub const SUBADDITIVITY_TOLERANCE: f64 = 1e-9;
/// Stage means below this are reported as `-inf`.
pub const LYAPUNOV_FLOOR: f64 = -1e6;

/// One mode `cos * cos(2 pi k.x) + sin * sin(2 pi k.x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableTerm {
    pub wave: Vec<i32>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Real trigonometric polynomial on the torus.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigObservable {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<ObservableTerm>,
}

impl TrigObservable {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    /// `cos(2 pi x_1)` on the `d`-torus.
    pub fn cos_first(d: usize) -> Self {
        let mut wave = vec![0; d];
        wave[0] = 1;
        Self {
            constant: 0.0,
            terms: vec![ObservableTerm { wave, cos: 1.0, sin: 0.0 }],
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.constant;
        for t in &self.terms {
            let phase = TAU * t.wave.iter().zip(x).map(|(&k, &c)| k as f64 * c).sum::<f64>();
            let (s, c) = phase.sin_cos();
            v += t.cos * c + t.sin * s;
        }
        v
    }

    /// Bound on `sup |phi|`.
    pub fn sup_bound(&self) -> f64 {
        self.constant.abs() + self.terms.iter().map(|t| t.cos.abs() + t.sin.abs()).sum::<f64>()
    }

    fn validate(&self, d: usize) -> Result<()> {
        for t in &self.terms {
            if t.wave.len() != d {
                return Err(Error::DimensionMismatch(t.wave.len(), d));
            }
        }
        if !self.constant.is_finite() || self.terms.iter().any(|t| !t.cos.is_finite() || !t.sin.is_finite()) {
            return Err(Error::InvalidArgument("non-finite observable coefficient".into()));
        }
        Ok(())
    }
}

/// A potential sequence `{log g_n}` of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSeq {
    /// `log g_n = sum_{i<n} phi(f^i x)`
    AdditiveBirkhoff { observable: TrigObservable },
    /// `log g_n = t log |D_x f^n restricted to E^u|`
    CocycleNorm { t: f64 },
    /// `log g_n = n c`
    Constant { c: f64 },
    Sum { left: Box<PotentialSeq>, right: Box<PotentialSeq> },
    /// `c G`, `c >= 0`
    Scale { c: f64, inner: Box<PotentialSeq> },
    /// `c + G`: `log g_n + n c`
    Shift { c: f64, inner: Box<PotentialSeq> },
    /// `G + H o f - H` for the additive `H` of `phi`:
    /// `log g_n + phi(f^n x) - phi(x)`
    CoboundaryTwist { inner: Box<PotentialSeq>, phi: TrigObservable },
    /// Pointwise max of two sequences.
    Max { left: Box<PotentialSeq>, right: Box<PotentialSeq> },
    /// `G^(k) = {log g_{kn}}` as a potential of `f^k`; `base` is `f`.
    Iterate { k: u32, base: SystemSpec, inner: Box<PotentialSeq> },
    /// Birkhoff sums of `log g_l / l`.
    StageAverage { l: usize, inner: Box<PotentialSeq> },
}

impl PotentialSeq {
    pub fn zero() -> Self {
        PotentialSeq::Constant { c: 0.0 }
    }

    pub fn birkhoff(observable: TrigObservable) -> Self {
        PotentialSeq::AdditiveBirkhoff { observable }
    }

    pub fn cocycle(t: f64) -> Self {
        PotentialSeq::CocycleNorm { t }
    }

    pub fn sum(a: PotentialSeq, b: PotentialSeq) -> Self {
        PotentialSeq::Sum { left: Box::new(a), right: Box::new(b) }
    }

    pub fn max(a: PotentialSeq, b: PotentialSeq) -> Self {
        PotentialSeq::Max { left: Box::new(a), right: Box::new(b) }
    }

    pub fn scale(c: f64, g: PotentialSeq) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::InvalidArgument(format!("scale factor {c} must be finite and >= 0")));
        }
        Ok(PotentialSeq::Scale { c, inner: Box::new(g) })
    }

    pub fn shift(c: f64, g: PotentialSeq) -> Self {
        PotentialSeq::Shift { c, inner: Box::new(g) }
    }

    pub fn twist(g: PotentialSeq, phi: TrigObservable) -> Self {
        PotentialSeq::CoboundaryTwist { inner: Box::new(g), phi }
    }

    /// `p G + (1 - p) H`.
    pub fn convex(p: f64, g: PotentialSeq, h: PotentialSeq) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("convex weight {p} outside [0, 1]")));
        }
        Ok(Self::sum(Self::scale(p, g)?, Self::scale(1.0 - p, h)?))
    }

    pub fn iterate(k: u32, base: &SystemSpec, g: PotentialSeq) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("iterate order must be >= 1".into()));
        }
        Ok(PotentialSeq::Iterate { k, base: base.clone(), inner: Box::new(g) })
    }

    pub fn stage_average(l: usize, g: PotentialSeq) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidArgument("stage must be >= 1".into()));
        }
        Ok(PotentialSeq::StageAverage { l, inner: Box::new(g) })
    }

    /// Structural checks against the system dimension.
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            PotentialSeq::AdditiveBirkhoff { observable } => observable.validate(d),
            PotentialSeq::CocycleNorm { t } | PotentialSeq::Constant { c: t } => {
                if t.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument("non-finite potential parameter".into()))
                }
            }
            PotentialSeq::Sum { left, right } | PotentialSeq::Max { left, right } => {
                left.validate(d)?;
                right.validate(d)
            }
            PotentialSeq::Scale { c, inner } => {
                if !(*c >= 0.0) || !c.is_finite() {
                    return Err(Error::InvalidArgument(format!("scale factor {c} must be >= 0")));
                }
                inner.validate(d)
            }
            PotentialSeq::Shift { c, inner } => {
                if !c.is_finite() {
                    return Err(Error::InvalidArgument("non-finite shift".into()));
                }
                inner.validate(d)
            }
            PotentialSeq::CoboundaryTwist { inner, phi } => {
                phi.validate(d)?;
                inner.validate(d)
            }
            PotentialSeq::Iterate { k, base, inner } => {
                if *k == 0 {
                    return Err(Error::InvalidArgument("iterate order must be >= 1".into()));
                }
                if base.dim() != d {
                    return Err(Error::DimensionMismatch(base.dim(), d));
                }
                inner.validate(d)
            }
            PotentialSeq::StageAverage { l, inner } => {
                if *l == 0 {
                    return Err(Error::InvalidArgument("stage must be >= 1".into()));
                }
                inner.validate(d)
            }
        }
    }

    /// Whether the sequence is additive by construction. Cocycle norms are
    /// additive because the unstable bundle is one-dimensional.
    pub fn is_additive(&self) -> bool {
        match self {
            PotentialSeq::AdditiveBirkhoff { .. }
            | PotentialSeq::CocycleNorm { .. }
            | PotentialSeq::Constant { .. }
            | PotentialSeq::StageAverage { .. } => true,
            PotentialSeq::Sum { left, right } => left.is_additive() && right.is_additive(),
            PotentialSeq::Scale { inner, .. }
            | PotentialSeq::Shift { inner, .. }
            | PotentialSeq::CoboundaryTwist { inner, .. }
            | PotentialSeq::Iterate { inner, .. } => inner.is_additive(),
            PotentialSeq::Max { .. } => false,
        }
    }

    /// `log g_n(x)`; `log g_0 = 0`.
    pub fn eval_log_gn(&self, sys: &SystemSpec, x: &TorusPoint, n: usize) -> Result<f64> {
        if n == 0 {
            return Ok(0.0);
        }
        match self {
            PotentialSeq::AdditiveBirkhoff { observable } => {
                let mut cur = x.clone();
                let mut acc = 0.0;
                for i in 0..n {
                    acc += observable.eval(cur.coords());
                    if i + 1 < n {
                        cur = sys.apply_map(&cur);
                    }
                }
                Ok(acc)
            }
            PotentialSeq::CocycleNorm { t } => {
                if *t == 0.0 {
                    Ok(0.0)
                } else {
                    Ok(t * sys.log_unstable_cocycle_norm(x.coords(), n)?)
                }
            }
            PotentialSeq::Constant { c } => Ok(n as f64 * c),
            PotentialSeq::Sum { left, right } => {
                Ok(left.eval_log_gn(sys, x, n)? + right.eval_log_gn(sys, x, n)?)
            }
            PotentialSeq::Scale { c, inner } => Ok(c * inner.eval_log_gn(sys, x, n)?),
            PotentialSeq::Shift { c, inner } => Ok(inner.eval_log_gn(sys, x, n)? + n as f64 * c),
            PotentialSeq::CoboundaryTwist { inner, phi } => {
                let end = sys.apply_iterate(x, n);
                Ok(inner.eval_log_gn(sys, x, n)? + (phi.eval(end.coords()) - phi.eval(x.coords())))
            }
            PotentialSeq::Max { left, right } => {
                Ok(left.eval_log_gn(sys, x, n)?.max(right.eval_log_gn(sys, x, n)?))
            }
            PotentialSeq::Iterate { k, base, inner } => inner.eval_log_gn(base, x, *k as usize * n),
            PotentialSeq::StageAverage { l, inner } => {
                let mut cur = x.clone();
                let mut acc = 0.0;
                for i in 0..n {
                    acc += inner.eval_log_gn(sys, &cur, *l)?;
                    if i + 1 < n {
                        cur = sys.apply_map(&cur);
                    }
                }
                Ok(acc / *l as f64)
            }
        }
    }

    /// Exact `lim (1/n) log g_n`, when it is the same constant for every
    /// point (affine systems and constant-rate potentials).
    pub fn analytic_rate(&self, sys: &SystemSpec) -> Option<f64> {
        match self {
            PotentialSeq::Constant { c } => Some(*c),
            PotentialSeq::CocycleNorm { t } => match sys {
                SystemSpec::Linear(s) => Some(t * s.unstable_log_volume_growth()),
                SystemSpec::Perturbed(_) if *t == 0.0 => Some(0.0),
                SystemSpec::Perturbed(_) => None,
            },
            PotentialSeq::AdditiveBirkhoff { observable } if observable.terms.is_empty() => {
                Some(observable.constant)
            }
            PotentialSeq::AdditiveBirkhoff { .. } => None,
            PotentialSeq::Sum { left, right } => Some(left.analytic_rate(sys)? + right.analytic_rate(sys)?),
            PotentialSeq::Scale { c, inner } => Some(c * inner.analytic_rate(sys)?),
            PotentialSeq::Shift { c, inner } => Some(inner.analytic_rate(sys)? + c),
            PotentialSeq::CoboundaryTwist { inner, .. } => inner.analytic_rate(sys),
            PotentialSeq::Max { left, right } => {
                Some(left.analytic_rate(sys)?.max(right.analytic_rate(sys)?))
            }
            PotentialSeq::Iterate { k, base, inner } => Some(*k as f64 * inner.analytic_rate(base)?),
            PotentialSeq::StageAverage { inner, .. } => inner.analytic_rate(sys),
        }
    }
}

/// Outcome of the sub-additivity audit.
#[derive(Debug, Clone, Serialize)]
pub struct SubadditivityReport {
    pub trials: usize,
    pub max_n: usize,
    pub seed: u64,
    /// `max(log g_{n+m}(x) - log g_n(x) - log g_m(f^n x))`, floored at 0.
    pub max_violation: f64,
    /// `max |log g_{n+m}(x) - log g_n(x) - log g_m(f^n x)|` for additive kinds.
    pub max_equality_defect: Option<f64>,
    pub pass: bool,
}

/// Audits sub-additivity of an arbitrary sequence given as `(x, n) -> log g_n(x)`.
pub fn check_subadditivity_with<F>(
    sys: &SystemSpec,
    log_g: F,
    additive: bool,
    trials: usize,
    max_n: usize,
    seed: u64,
) -> Result<SubadditivityReport>
where
    F: Fn(&TorusPoint, usize) -> Result<f64>,
{
    if trials == 0 || max_n < 2 {
        return Err(Error::InvalidArgument("need trials >= 1 and max_n >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violation: f64 = 0.0;
    let mut defect: f64 = 0.0;
    for _ in 0..trials {
        let x = TorusPoint::new((0..sys.dim()).map(|_| rng.gen::<f64>()).collect());
        let n = rng.gen_range(1..max_n);
        let m = rng.gen_range(1..=max_n - n);
        let gap = log_g(&x, n + m)? - log_g(&x, n)? - log_g(&sys.apply_iterate(&x, n), m)?;
        violation = violation.max(gap);
        defect = defect.max(gap.abs());
    }
    Ok(SubadditivityReport {
        trials,
        max_n,
        seed,
        max_violation: violation,
        max_equality_defect: additive.then_some(defect),
        pass: violation <= SUBADDITIVITY_TOLERANCE,
    })
}

/// Sub-additivity audit of a potential on random `(x, n, m)`, `n + m <= max_n`.
pub fn check_subadditivity(
    g: &PotentialSeq,
    sys: &SystemSpec,
    trials: usize,
    max_n: usize,
    seed: u64,
) -> Result<SubadditivityReport> {
    check_subadditivity_with(
        sys,
        |x, n| g.eval_log_gn(sys, x, n),
        g.is_additive(),
        trials,
        max_n,
        seed,
    )
}

/// `G_+(mu)`; `-inf` is a sentinel, never a float.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum LyapunovValue {
    Finite(f64),
    NegInfinity,
}

impl LyapunovValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            LyapunovValue::Finite(v) => Some(v),
            LyapunovValue::NegInfinity => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovEstimate {
    pub measure: MeasureEntry,
    pub value: LyapunovValue,
    pub stderr: f64,
    /// `(n, (1/n) mean log g_n, stderr)` per stage.
    pub stages: Vec<(usize, f64, f64)>,
    /// Exact value when known in closed form.
    pub analytic: Option<f64>,
    pub samples: usize,
    pub seed: u64,
}

/// Stage means of `(1/n) log g_n` against `mu`; the value is the last stage.
pub fn lyapunov_functional(
    g: &PotentialSeq,
    sys: &SystemSpec,
    mu: &MeasureEntry,
    stages: &[usize],
    samples: usize,
    seed: u64,
) -> Result<LyapunovEstimate> {
    if stages.is_empty() || stages.windows(2).any(|w| w[1] <= w[0]) || stages[0] == 0 {
        return Err(Error::InvalidArgument("stages must be nonempty, positive and increasing".into()));
    }
    let mut rows = Vec::with_capacity(stages.len());
    for &n in stages {
        let (mean, se) = mu.integrate(sys, samples, seed, |x| g.eval_log_gn(sys, x, n))?;
        rows.push((n, mean / n as f64, se / n as f64));
    }
    let &(_, last, stderr) = rows.last().unwrap();
    if last.is_nan() {
        return Err(Error::InvalidArgument("potential produced NaN".into()));
    }
    let value = if last < LYAPUNOV_FLOOR {
        LyapunovValue::NegInfinity
    } else {
        LyapunovValue::Finite(last)
    };
    Ok(LyapunovEstimate {
        measure: mu.clone(),
        value,
        stderr,
        stages: rows,
        analytic: g.analytic_rate(sys),
        samples,
        seed,
    })
}
