use std::path::Path;

use serde::{Deserialize, Serialize};
use upressure::dynamics::{SystemDescription, SystemSpec, TorusPoint};
use upressure::leaf::{build_leaf_chart, LeafChart};
use upressure::potentials::PotentialSeq;
use upressure::pressure::PressureParams;
use upressure::variational::{CertificateParams, MeasureEntry, MeasureKind, PropertyParams, StageLimitParams};

use crate::error::Failure;

/// Version of the config, CSV and JSON layouts.
pub const SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_delta() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    /// Master seed for the randomized audits.
    #[serde(default)]
    pub seed: u64,
    /// Leaf radius.
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub base_point: Vec<f64>,
    pub system: SystemDescription,
    #[serde(default = "PotentialSeq::zero")]
    pub potential: PotentialSeq,
    #[serde(default)]
    pub pressure: PressureParams,
    /// Empty means Haar volume alone.
    #[serde(default)]
    pub registry: Vec<MeasureKind>,
    #[serde(default)]
    pub certificate: CertificateParams,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_true")]
    pub certificate: bool,
    /// Runs the DP-vs-brute-force suite of `[oracle]`.
    #[serde(default)]
    pub oracle: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub properties: Option<PropertiesConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<PowerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_limit: Option<StageConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_sum: Option<LogSumConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cover: Option<CoverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<DeltaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationConfig>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            certificate: true,
            oracle: false,
            properties: None,
            power: None,
            stage_limit: None,
            log_sum: None,
            cover: None,
            delta: None,
            perturbation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertiesConfig {
    /// Second potential of the two-potential laws.
    pub h: PotentialSeq,
    #[serde(default)]
    pub laws: PropertyParams,
}

fn default_k() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    #[serde(default = "default_k")]
    pub k: u32,
    /// Empty means the main potential.
    #[serde(default)]
    pub potentials: Vec<PotentialSeq>,
}

fn default_stages() -> Vec<usize> {
    vec![1, 2, 4, 8]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    #[serde(default = "default_stages")]
    pub stages: Vec<usize>,
    #[serde(default)]
    pub limits: StageLimitParams,
}

fn default_instances() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogSumConfig {
    #[serde(default = "default_instances")]
    pub instances: usize,
}

fn default_cover_n() -> usize {
    4
}

fn default_cover_m() -> usize {
    20001
}

fn default_tolerance() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverConfig {
    /// Length of the cover intervals in the leaf parameter.
    pub width: f64,
    #[serde(default = "default_cover_n")]
    pub n_max: usize,
    #[serde(default = "default_cover_m")]
    pub m: usize,
    #[serde(default = "default_tolerance")]
    pub fekete_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaConfig {
    /// Radii compared against the main one.
    pub values: Vec<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationConfig {
    /// Allowed shift of the estimate from the linear part.
    pub tolerance: f64,
    pub residual_tolerance: f64,
    pub comparability_max: f64,
    pub comparability_samples: usize,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            tolerance: 0.05,
            residual_tolerance: 1e-8,
            comparability_max: 1.1,
            comparability_samples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub instances: usize,
    pub max_m: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { instances: 200, max_m: 18 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Epsilon,
    Delta,
    N,
    Magnitude,
    Exponent,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::Delta => "delta",
            SweepAxis::N => "n",
            SweepAxis::Magnitude => "magnitude",
            SweepAxis::Exponent => "exponent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Output directory; `--out` takes precedence, then `out`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, format: Format) -> Result<Self, Failure> {
        match format {
            Format::Json => {
                let de = &mut serde_json::Deserializer::from_str(text);
                serde_path_to_error::deserialize(de).map_err(|e| Failure::usage(path_of(e.path()), e.inner().to_string()))
            }
            Format::Toml => {
                let de = toml::Deserializer::new(text);
                serde_path_to_error::deserialize(de)
                    .map_err(|e| Failure::usage(path_of(e.path()), e.inner().message().to_string()))
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(Some("--config".into()), format!("{}: {e}", path.display())))?;
        Self::parse(&text, Format::from_path(path))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to toml")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes to json")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.certificate.seed = seed;
        self
    }

    /// Checks every field against the library preconditions and builds the
    /// objects the commands need. Nothing expensive runs after a failure here.
    pub fn prepare(&self) -> Result<Prepared, Failure> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Failure::usage(
                Some("schema_version".into()),
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        // TOML integers are signed 64-bit
        for (path, seed) in [("seed", self.seed), ("certificate.seed", self.certificate.seed)] {
            if seed > i64::MAX as u64 {
                return Err(Failure::usage(Some(path.into()), format!("must be <= {}", i64::MAX)));
            }
        }
        let sys = SystemSpec::try_from(self.system.clone()).map_err(|e| Failure::field("system", e))?;
        let d = sys.dim();
        self.potential.validate(d).map_err(|e| Failure::field("potential", e))?;
        if self.base_point.len() != d || self.base_point.iter().any(|c| !c.is_finite()) {
            return Err(Failure::usage(
                Some("base_point".into()),
                format!("need {d} finite coordinates"),
            ));
        }
        let x = TorusPoint::new(self.base_point.clone());
        check_positive("delta", self.delta)?;
        self.pressure.validate().map_err(|e| Failure::field("pressure", e))?;
        let chart = build_leaf_chart(&sys, &x, self.delta).map_err(|e| Failure::field("delta", e))?;
        let kinds = if self.registry.is_empty() {
            vec![MeasureKind::HaarVolume]
        } else {
            self.registry.clone()
        };
        let registry = kinds
            .iter()
            .enumerate()
            .map(|(i, k)| MeasureEntry::from_kind(&sys, k).map_err(|e| Failure::field(&format!("registry[{i}]"), e)))
            .collect::<Result<Vec<_>, _>>()?;
        if !(self.certificate.tolerance >= 0.0) {
            return Err(Failure::usage(Some("certificate.tolerance".into()), "must be >= 0".into()));
        }
        if self.certificate.lyapunov_stages.is_empty() || self.certificate.lyapunov_stages.contains(&0) {
            return Err(Failure::usage(
                Some("certificate.lyapunov_stages".into()),
                "need at least one stage, all >= 1".into(),
            ));
        }
        if self.certificate.samples == 0 {
            return Err(Failure::usage(Some("certificate.samples".into()), "must be >= 1".into()));
        }
        self.validate_verify(d)?;
        if self.oracle.max_m == 0 || self.oracle.max_m > upressure::pressure::ORACLE_LIMIT {
            return Err(Failure::usage(
                Some("oracle.max_m".into()),
                format!("must be in 1..={}", upressure::pressure::ORACLE_LIMIT),
            ));
        }
        if let Some(sw) = &self.sweep {
            self.validate_sweep(sw)?;
        }
        Ok(Prepared { sys, chart, registry })
    }

    fn validate_verify(&self, d: usize) -> Result<(), Failure> {
        let v = &self.verify;
        if let Some(p) = &v.properties {
            p.h.validate(d).map_err(|e| Failure::field("verify.properties.h", e))?;
            if !(0.0..=1.0).contains(&p.laws.p) {
                return Err(Failure::usage(Some("verify.properties.laws.p".into()), "must lie in [0, 1]".into()));
            }
            if !(p.laws.scale >= 0.0) {
                return Err(Failure::usage(Some("verify.properties.laws.scale".into()), "must be >= 0".into()));
            }
        }
        if let Some(p) = &v.power {
            if p.k == 0 {
                return Err(Failure::usage(Some("verify.power.k".into()), "must be >= 1".into()));
            }
            for (i, g) in p.potentials.iter().enumerate() {
                g.validate(d)
                    .map_err(|e| Failure::field(&format!("verify.power.potentials[{i}]"), e))?;
            }
        }
        if let Some(s) = &v.stage_limit {
            if s.stages.is_empty() || s.stages[0] == 0 || s.stages.windows(2).any(|w| w[1] != 2 * w[0]) {
                return Err(Failure::usage(
                    Some("verify.stage_limit.stages".into()),
                    "need a doubling sequence starting at >= 1".into(),
                ));
            }
        }
        if let Some(c) = &v.cover {
            check_positive("verify.cover.width", c.width)?;
            if c.n_max == 0 || c.m < 2 {
                return Err(Failure::usage(Some("verify.cover".into()), "need n_max >= 1 and m >= 2".into()));
            }
        }
        if let Some(dc) = &v.delta {
            if dc.values.is_empty() {
                return Err(Failure::usage(Some("verify.delta.values".into()), "empty list".into()));
            }
            for (i, &r) in dc.values.iter().enumerate() {
                check_positive(&format!("verify.delta.values[{i}]"), r)?;
            }
        }
        if let Some(p) = &v.perturbation {
            if p.comparability_samples < 2 {
                return Err(Failure::usage(
                    Some("verify.perturbation.comparability_samples".into()),
                    "must be >= 2".into(),
                ));
            }
        }
        Ok(())
    }

    fn validate_sweep(&self, sw: &SweepConfig) -> Result<(), Failure> {
        if sw.values.is_empty() {
            return Err(Failure::usage(Some("sweep.values".into()), "empty list".into()));
        }
        for (i, &v) in sw.values.iter().enumerate() {
            let path = format!("sweep.values[{i}]");
            let cfg = self.sweep_point(sw.axis, v).map_err(|m| Failure::usage(Some(path.clone()), m))?;
            let sys = SystemSpec::try_from(cfg.system.clone()).map_err(|e| Failure::field(&path, e))?;
            cfg.potential.validate(sys.dim()).map_err(|e| Failure::field(&path, e))?;
            cfg.pressure.validate().map_err(|e| Failure::field(&path, e))?;
            check_positive(&path, cfg.delta)?;
        }
        Ok(())
    }

    /// The config with the sweep axis set to `value`.
    pub fn sweep_point(&self, axis: SweepAxis, value: f64) -> Result<RunConfig, String> {
        let mut c = self.clone();
        c.sweep = None;
        if !value.is_finite() {
            return Err("sweep values must be finite".into());
        }
        match axis {
            SweepAxis::Epsilon => c.pressure.epsilons = vec![value],
            SweepAxis::Delta => c.delta = value,
            SweepAxis::N => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(format!("n = {value} is not a positive integer"));
                }
                c.pressure.n_max = value as usize;
            }
            SweepAxis::Magnitude => {
                if c.system.perturbation.is_none() {
                    return Err("magnitude sweep needs a perturbation table".into());
                }
                c.system.magnitude = value;
            }
            SweepAxis::Exponent => match &mut c.potential {
                PotentialSeq::CocycleNorm { t } => *t = value,
                _ => return Err("exponent sweep needs a cocycle-norm potential".into()),
            },
        }
        Ok(c)
    }
}

fn check_positive(path: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Failure::usage(Some(path.into()), format!("{v} must be a finite number > 0")))
    }
}

fn path_of(p: &serde_path_to_error::Path) -> Option<String> {
    let s = p.to_string();
    (s != ".").then_some(s)
}

/// Validated objects built from a config.
#[derive(Debug)]
pub struct Prepared {
    pub sys: SystemSpec,
    pub chart: LeafChart,
    pub registry: Vec<MeasureEntry>,
}
