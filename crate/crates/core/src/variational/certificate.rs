use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::registry::MeasureEntry;
use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};
use crate::leaf::LeafChart;
use crate::numeric::log_sum_exp;
use crate::potentials::{lyapunov_functional, LyapunovValue, PotentialSeq};
use crate::pressure::{estimate, PressureEstimate, PressureParams};

/// Tolerance on `sum p_i` in the log-sum inequality.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogSumReport {
    /// `sum p_i (a_i - log p_i)` with `0 log 0 = 0`.
    pub lhs: f64,
    /// `log sum e^{a_i}`.
    pub rhs: f64,
    /// `e^{a_i} / sum e^{a_j}`, where equality holds.
    pub gibbs_weights: Vec<f64>,
}

/// Both sides of `sum p_i (a_i - log p_i) <= log sum e^{a_i}`.
pub fn log_sum_inequality(p: &[f64], a: &[f64]) -> Result<LogSumReport> {
    if p.len() != a.len() {
        return Err(Error::DimensionMismatch(p.len(), a.len()));
    }
    if p.is_empty() {
        return Err(Error::NotProbability("empty vector".into()));
    }
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::NotProbability("entries must be finite and >= 0".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(Error::NotProbability(format!("entries sum to {total}")));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("a must be finite".into()));
    }
    let lhs = p
        .iter()
        .zip(a)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &ai)| pi * (ai - pi.ln()))
        .sum();
    let rhs = log_sum_exp(a);
    let gibbs_weights = a.iter().map(|&ai| (ai - rhs).exp()).collect();
    Ok(LogSumReport { lhs, rhs, gibbs_weights })
}

#[derive(Debug, Clone, Serialize)]
pub struct LogSumSuite {
    pub instances: usize,
    pub seed: u64,
    /// `max (lhs - rhs)` over random `(p, a)`; must be `<= 1e-12`.
    pub max_violation: f64,
    /// `max |lhs - rhs|` at the Gibbs weights.
    pub max_gibbs_defect: f64,
}

impl LogSumSuite {
    pub fn passed(&self) -> bool {
        self.max_violation <= 1e-12 && self.max_gibbs_defect <= 1e-12
    }
}

/// Random `(p, a)` pairs of length 1 to 11 with `a` in `[-5, 5]`.
pub fn log_sum_suite(instances: usize, seed: u64) -> Result<LogSumSuite> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_violation = f64::NEG_INFINITY;
    let mut max_gibbs_defect: f64 = 0.0;
    for _ in 0..instances {
        let k = rng.gen_range(1..12);
        let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let a: Vec<f64> = (0..k).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let r = log_sum_inequality(&p, &a)?;
        max_violation = max_violation.max(r.lhs - r.rhs);
        let at = log_sum_inequality(&r.gibbs_weights, &a)?;
        max_gibbs_defect = max_gibbs_defect.max((at.lhs - at.rhs).abs());
    }
    Ok(LogSumSuite {
        instances,
        seed,
        max_violation,
        max_gibbs_defect,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    CertifiedEqual,
    InequalityOnly,
    Violation,
}

/// Settings of the Lyapunov integrals and the verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertificateParams {
    pub tolerance: f64,
    pub lyapunov_stages: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
}

impl Default for CertificateParams {
    fn default() -> Self {
        Self {
            tolerance: 0.03,
            lyapunov_stages: vec![4, 8, 16],
            samples: 4096,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Candidate {
    pub measure: MeasureEntry,
    pub hu: Option<f64>,
    pub lyapunov: LyapunovValue,
    pub lyapunov_stderr: f64,
    /// `hu + G_+`, when both are available (`-inf` for a `-inf` exponent).
    pub sum: Option<f64>,
    pub certified: bool,
    /// `sum <= estimate + tolerance` (vacuous for uncertified entries).
    pub safe: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VariationalReport {
    pub pressure_estimate: f64,
    pub pressure: PressureEstimate,
    pub candidates: Vec<Candidate>,
    pub best_sum: Option<f64>,
    pub gap: Option<f64>,
    pub verdict: Verdict,
    pub tolerance: f64,
    pub lyapunov_stages: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
}

impl VariationalReport {
    /// One-sided safety over every certified candidate.
    pub fn one_sided_safe(&self) -> bool {
        self.candidates.iter().all(|c| c.safe)
    }
}

/// Compares `P^u(f, G)` with `sup h^u_mu + G_+(mu)` over the certified
/// registry entries.
pub fn variational_certificate(
    sys: &SystemSpec,
    chart: &LeafChart,
    g: &PotentialSeq,
    registry: &[MeasureEntry],
    params: &PressureParams,
    cert: &CertificateParams,
) -> Result<VariationalReport> {
    if registry.is_empty() {
        return Err(Error::InvalidArgument("registry is empty".into()));
    }
    if !(cert.tolerance >= 0.0) {
        return Err(Error::InvalidArgument("tolerance must be >= 0".into()));
    }
    let (_, pressure, value) = estimate(sys, chart, g, params)?;
    let mut candidates = Vec::with_capacity(registry.len());
    for mu in registry {
        let ly = lyapunov_functional(g, sys, mu, &cert.lyapunov_stages, cert.samples, cert.seed)?;
        let sum = mu.hu.map(|h| match ly.value {
            LyapunovValue::Finite(v) => h + v,
            LyapunovValue::NegInfinity => f64::NEG_INFINITY,
        });
        let certified = mu.certified();
        let safe = !certified || sum.is_none_or(|s| s <= value + cert.tolerance);
        candidates.push(Candidate {
            measure: mu.clone(),
            hu: mu.hu,
            lyapunov: ly.value,
            lyapunov_stderr: ly.stderr,
            sum,
            certified,
            safe,
        });
    }
    let best_sum = candidates
        .iter()
        .filter(|c| c.certified)
        .filter_map(|c| c.sum)
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))));
    let gap = best_sum.map(|b| value - b);
    let safe = candidates.iter().all(|c| c.safe);
    let verdict = match gap {
        _ if !safe => Verdict::Violation,
        Some(g) if g < -cert.tolerance => Verdict::Violation,
        Some(g) if g.abs() <= cert.tolerance => Verdict::CertifiedEqual,
        _ => Verdict::InequalityOnly,
    };
    Ok(VariationalReport {
        pressure_estimate: value,
        pressure,
        candidates,
        best_sum,
        gap,
        verdict,
        tolerance: cert.tolerance,
        lyapunov_stages: cert.lyapunov_stages.clone(),
        samples: cert.samples,
        seed: cert.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TorusPoint;
    use crate::leaf::build_leaf_chart;
    use crate::potentials::TrigObservable;

    #[test]
    fn log_sum_examples() {
        let r = log_sum_inequality(&[0.5, 0.5], &[0.0, 0.0]).unwrap();
        assert!((r.lhs - 2f64.ln()).abs() < 1e-15 && (r.rhs - 2f64.ln()).abs() < 1e-15);
        let r = log_sum_inequality(&[1.0, 0.0], &[3.0, 0.0]).unwrap();
        assert_eq!(r.lhs, 3.0);
        assert!((r.rhs - (3f64.exp() + 1.0).ln()).abs() < 1e-14 && r.rhs > 3.0);
        assert!(matches!(log_sum_inequality(&[0.5], &[0.0, 1.0]), Err(Error::DimensionMismatch(1, 2))));
        assert!(matches!(log_sum_inequality(&[0.5, 0.6], &[0.0, 1.0]), Err(Error::NotProbability(_))));
        assert!(log_sum_inequality(&[-0.5, 1.5], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn log_sum_random_and_gibbs_equality() {
        let r = log_sum_suite(1000, 31).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    fn setup() -> (SystemSpec, LeafChart, Vec<MeasureEntry>) {
        let sys = SystemSpec::cat_rotation(SystemSpec::golden_angle());
        let chart = build_leaf_chart(&sys, &TorusPoint::new(vec![0.2, 0.3, 0.4]), 0.1).unwrap();
        let registry = vec![
            MeasureEntry::haar(&sys),
            MeasureEntry::center_circle(&sys, TorusPoint::origin(3), 2).unwrap(),
        ];
        (sys, chart, registry)
    }

    #[test]
    fn cocycle_certificate_is_certified_equal() {
        let (sys, chart, registry) = setup();
        let lam = sys.expansion_rate().ln();
        let params = PressureParams { n_max: 7, ..Default::default() };
        let r = variational_certificate(&sys, &chart, &PotentialSeq::cocycle(0.5), &registry, &params, &Default::default())
            .unwrap();
        assert_eq!(r.verdict, Verdict::CertifiedEqual, "{:?}", r.gap);
        assert!((r.candidates[0].sum.unwrap() - 1.5 * lam).abs() < 1e-9);
        assert!((r.candidates[1].sum.unwrap() - 0.5 * lam).abs() < 1e-9);
        assert!(r.one_sided_safe());
    }

    #[test]
    fn small_registry_gives_inequality_only() {
        let (sys, chart, registry) = setup();
        let params = PressureParams { n_max: 6, ..Default::default() };
        let r = variational_certificate(&sys, &chart, &PotentialSeq::zero(), &registry[1..], &params, &Default::default())
            .unwrap();
        assert_eq!(r.verdict, Verdict::InequalityOnly);
        let g = PotentialSeq::birkhoff(TrigObservable::cos_first(3));
        let r = variational_certificate(&sys, &chart, &g, &registry, &params, &Default::default()).unwrap();
        assert_ne!(r.verdict, Verdict::Violation);
        assert!(r.gap.unwrap() >= -r.tolerance);
    }
}
