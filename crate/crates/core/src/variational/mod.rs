//! Measure registry, variational certificate, property suite, power rule,
//! stage-limit check and the log-sum inequality.

mod certificate;
mod checks;
mod registry;

pub use certificate::{
    log_sum_inequality, log_sum_suite, variational_certificate, LogSumSuite, Candidate, CertificateParams, LogSumReport, Verdict,
    VariationalReport, PROBABILITY_TOLERANCE,
};
pub use checks::{
    additive_observable, check_properties, iterate_params, power_rule_check, stage_limit_check, CheckKind,
    CheckStatus, PowerRuleReport, PropertyCheck, PropertyParams, PropertyReport, StageLimitParams,
    StageLimitReport, EXACT_TOLERANCE, POWER_TOLERANCE,
};
pub use registry::{MeasureEntry, MeasureKind, Provenance, CYCLE_TOLERANCE};
