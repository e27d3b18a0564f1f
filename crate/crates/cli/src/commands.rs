use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use upressure::dynamics::SystemSpec;
use upressure::leaf::{build_leaf_chart, estimate_comparability_constant};
use upressure::potentials::PotentialSeq;
use upressure::pressure::{
    audit_rows, cover_pressure_table, estimate_pressure, oracle_suite, run_pressure, OpenCover, PressureEstimate,
    PressureRow, PressureTable, RowAudit, ROW_TOLERANCE,
};
use upressure::variational::{
    check_properties, log_sum_suite, power_rule_check, stage_limit_check, variational_certificate, Verdict,
};

use crate::config::{RunConfig, SCHEMA_VERSION};
use crate::error::Failure;

/// Tolerance of the per-scale P and Q growth-rate agreement.
pub const RATE_TOLERANCE: f64 = 0.02;

/// What a successful command wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub message: String,
}

/// `h_top^u + lim (1/n) log g_n` on affine systems with a constant-rate
/// potential.
pub fn analytic_reference(sys: &SystemSpec, g: &PotentialSeq) -> Option<f64> {
    match sys {
        SystemSpec::Linear(s) => Some(s.unstable_log_volume_growth() + g.analytic_rate(sys)?),
        SystemSpec::Perturbed(_) => None,
    }
}

fn seeds(cfg: &RunConfig) -> Value {
    json!({ "seed": cfg.seed, "certificate_seed": cfg.certificate.seed })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

pub fn write_table_csv(path: &Path, table: &PressureTable) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = PressureRow::CSV_HEADER.to_vec();
    header.push("schema_version");
    w.write_record(&header)?;
    for r in &table.rows {
        let mut rec: Vec<String> = r.csv_fields().to_vec();
        rec.push(SCHEMA_VERSION.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

struct MainRun {
    table: PressureTable,
    estimate: PressureEstimate,
    audit: RowAudit,
    reference: Option<f64>,
}

fn main_run(cfg: &RunConfig, sys: &SystemSpec, chart: &upressure::leaf::LeafChart) -> Result<MainRun, Failure> {
    let table = run_pressure(sys, chart, &cfg.potential, &cfg.pressure)?;
    let estimate = estimate_pressure(&table);
    let audit = audit_rows(&table, &estimate);
    Ok(MainRun {
        reference: analytic_reference(sys, &cfg.potential),
        table,
        estimate,
        audit,
    })
}

fn under_resolved(cfg: &RunConfig) -> Failure {
    Failure::Refusal(upressure::Error::UnderResolved {
        required: upressure::pressure::MIN_STAGES as u64,
        available: cfg.pressure.stages() as u64,
    })
}

fn estimate_json(run: &MainRun) -> Value {
    json!({
        "value": run.estimate.estimate,
        "noise": run.estimate.noise,
        "resolved": run.estimate.resolved,
        "epsilon_monotone": run.estimate.epsilon_monotone,
        "per_epsilon": run.estimate.per_epsilon,
        "diagnostics": run.estimate.diagnostics,
        "reference": run.reference,
        "reference_residual": run.reference.zip(run.estimate.estimate).map(|(r, e)| e - r),
    })
}

/// Writes `table.csv` and `report.json`.
pub fn cmd_estimate(cfg: &RunConfig, out: &Path) -> Result<Outcome, Failure> {
    let prep = cfg.prepare()?;
    let run = main_run(cfg, &prep.sys, &prep.chart)?;
    fs::create_dir_all(out)?;
    let table_path = out.join("table.csv");
    let report_path = out.join("report.json");
    write_table_csv(&table_path, &run.table)?;
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "estimate",
        "seeds": seeds(cfg),
        "chart": { "kind": run.table.chart_kind, "residual": run.table.chart_residual },
        "estimate": estimate_json(&run),
        "row_audit": run.audit,
        "table": "table.csv",
        "config": cfg,
    });
    write_json(&report_path, &report)?;
    let value = run.estimate.estimate.ok_or_else(|| under_resolved(cfg))?;
    Ok(Outcome {
        files: vec![table_path, report_path],
        message: format!(
            "estimate {value:.6} (noise {:.6})",
            run.estimate.noise.unwrap_or(f64::NAN)
        ),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckLine {
    pub name: String,
    /// Hard checks decide the exit code.
    pub hard: bool,
    pub passed: bool,
    pub detail: Value,
}

struct Checks {
    lines: Vec<CheckLine>,
}

impl Checks {
    fn push(&mut self, name: impl Into<String>, hard: bool, passed: bool, detail: Value) {
        self.lines.push(CheckLine {
            name: name.into(),
            hard,
            passed,
            detail,
        });
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Runs the configured checks and writes `certificate.json`.
pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> Result<Outcome, Failure> {
    let prep = cfg.prepare()?;
    let (sys, chart) = (&prep.sys, &prep.chart);
    let v = &cfg.verify;
    let run = main_run(cfg, sys, chart)?;
    let Some(value) = run.estimate.estimate else {
        return Err(under_resolved(cfg));
    };
    let mut checks = Checks { lines: Vec::new() };
    let mut sections = serde_json::Map::new();

    checks.push(
        "row-bracket",
        true,
        run.audit.exact_passed(),
        json!({ "tolerance": ROW_TOLERANCE, "audit": run.audit }),
    );
    checks.push(
        "rate-agreement",
        false,
        run.audit.rate_gap.is_some_and(|g| g <= RATE_TOLERANCE),
        json!({ "tolerance": RATE_TOLERANCE, "rate_gap": run.audit.rate_gap }),
    );

    if v.certificate {
        let r = variational_certificate(sys, chart, &cfg.potential, &prep.registry, &cfg.pressure, &cfg.certificate)?;
        checks.push(
            "one-sided-safety",
            true,
            r.one_sided_safe() && r.verdict != Verdict::Violation,
            json!({ "verdict": r.verdict, "gap": r.gap, "tolerance": r.tolerance }),
        );
        checks.push(
            "certified-equal",
            false,
            r.verdict == Verdict::CertifiedEqual,
            json!({ "verdict": r.verdict, "best_sum": r.best_sum }),
        );
        sections.insert("certificate".into(), to_value(&r));
    }

    if let Some(p) = &v.properties {
        let r = check_properties(sys, chart, &cfg.potential, &p.h, &p.laws, &cfg.pressure)?;
        checks.push("exact-identities", true, r.exact_passed(), json!({ "tolerance": upressure::variational::EXACT_TOLERANCE }));
        checks.push("property-estimates", false, r.passed(), Value::Null);
        sections.insert("properties".into(), to_value(&r));
    }

    if let Some(p) = &v.power {
        let potentials = if p.potentials.is_empty() {
            vec![cfg.potential.clone()]
        } else {
            p.potentials.clone()
        };
        let mut reports = Vec::new();
        for (i, g) in potentials.iter().enumerate() {
            let r = power_rule_check(sys, chart, g, p.k, &cfg.pressure)?;
            checks.push(
                format!("power-rule[{i}]"),
                false,
                r.passed,
                json!({ "defect": r.defect, "tolerance": r.tolerance }),
            );
            reports.push(json!({ "potential": g, "report": r }));
        }
        sections.insert("power".into(), Value::Array(reports));
    }

    if let Some(s) = &v.stage_limit {
        let r = stage_limit_check(sys, chart, &cfg.potential, &s.stages, &cfg.pressure, &s.limits)?;
        checks.push("stage-limit", false, r.passed, Value::Null);
        sections.insert("stage_limit".into(), to_value(&r));
    }

    if let Some(l) = &v.log_sum {
        let r = log_sum_suite(l.instances, cfg.seed)?;
        checks.push("log-sum", true, r.passed(), Value::Null);
        sections.insert("log_sum".into(), to_value(&r));
    }

    if v.oracle {
        let r = oracle_suite(cfg.oracle.instances, cfg.oracle.max_m, cfg.seed)?;
        checks.push("dp-oracle", true, r.passed(), Value::Null);
        sections.insert("oracle".into(), to_value(&r));
    }

    if let Some(c) = &v.cover {
        let cover = OpenCover::uniform(cfg.delta, c.width)?;
        let r = cover_pressure_table(sys, chart, &cfg.potential, &cover, c.n_max, c.m)?;
        checks.push(
            "cover-subadditivity",
            true,
            r.subadditivity_defect <= 1e-9,
            json!({ "defect": r.subadditivity_defect, "tolerance": 1e-9 }),
        );
        checks.push(
            "cover-fekete",
            false,
            r.fekete_bound >= value - c.fekete_tolerance,
            json!({ "fekete_bound": r.fekete_bound, "estimate": value, "tolerance": c.fekete_tolerance }),
        );
        sections.insert("cover".into(), to_value(&r));
    }

    if let Some(d) = &v.delta {
        let mut rows = Vec::new();
        for &r in &d.values {
            let ch = build_leaf_chart(sys, chart.center(), r)?;
            let t = run_pressure(sys, &ch, &cfg.potential, &cfg.pressure)?;
            let e = estimate_pressure(&t).estimate;
            let diff = e.map(|e| (e - value).abs());
            checks.push(
                format!("delta[{r}]"),
                false,
                diff.is_some_and(|x| x <= d.tolerance),
                json!({ "estimate": e, "difference": diff, "tolerance": d.tolerance }),
            );
            rows.push(json!({ "delta": r, "estimate": e }));
        }
        sections.insert("delta".into(), Value::Array(rows));
    }

    if let Some(p) = &v.perturbation {
        let comp = estimate_comparability_constant(chart, p.comparability_samples, cfg.seed)?;
        let linear: SystemSpec = sys.linear_part().clone().into();
        let lin_chart = build_leaf_chart(&linear, chart.center(), cfg.delta)?;
        let lin = estimate_pressure(&run_pressure(&linear, &lin_chart, &cfg.potential, &cfg.pressure)?).estimate;
        let shift = lin.map(|l| (value - l).abs());
        checks.push(
            "chart-residual",
            false,
            chart.residual() <= p.residual_tolerance,
            json!({ "residual": chart.residual(), "tolerance": p.residual_tolerance }),
        );
        checks.push(
            "comparability",
            false,
            comp.constant <= p.comparability_max,
            json!({ "constant": comp.constant, "max": p.comparability_max }),
        );
        checks.push(
            "perturbation-shift",
            false,
            shift.is_some_and(|s| s <= p.tolerance),
            json!({ "linear_estimate": lin, "shift": shift, "tolerance": p.tolerance }),
        );
        sections.insert(
            "perturbation".into(),
            json!({ "comparability": comp, "linear_estimate": lin, "chart_kind": chart.kind() }),
        );
    }

    let failed: Vec<String> = checks
        .lines
        .iter()
        .filter(|c| c.hard && !c.passed)
        .map(|c| c.name.clone())
        .collect();
    fs::create_dir_all(out)?;
    let path = out.join("certificate.json");
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "verify",
        "seeds": seeds(cfg),
        "hard_passed": failed.is_empty(),
        "checks": checks.lines,
        "estimate": estimate_json(&run),
        "sections": sections,
        "config": cfg,
    });
    write_json(&path, &report)?;
    if !failed.is_empty() {
        return Err(Failure::HardCheck(failed));
    }
    let soft_failed = checks.lines.iter().filter(|c| !c.passed).count();
    Ok(Outcome {
        files: vec![path],
        message: format!(
            "estimate {value:.6}; {} checks, hard checks passed, {soft_failed} soft check(s) outside tolerance",
            checks.lines.len()
        ),
    })
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    value: f64,
    estimate: Option<f64>,
    noise: Option<f64>,
    resolved: bool,
    reference: Option<f64>,
    residual: Option<f64>,
    status: &'static str,
}

/// One estimate per sweep value; writes `sweep.csv` and `sweep.json`.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<Outcome, Failure> {
    cfg.prepare()?;
    let Some(sw) = &cfg.sweep else {
        return Err(Failure::usage(Some("sweep".into()), "config has no [sweep] table".into()));
    };
    let mut rows = Vec::with_capacity(sw.values.len());
    let mut first_refusal = None;
    for &x in &sw.values {
        let point = cfg.sweep_point(sw.axis, x).map_err(|m| Failure::usage(Some("sweep".into()), m))?;
        let res = point.prepare().and_then(|p| main_run(&point, &p.sys, &p.chart));
        let row = match res {
            Ok(run) => SweepRow {
                value: x,
                estimate: run.estimate.estimate,
                noise: run.estimate.noise,
                resolved: run.estimate.resolved,
                reference: run.reference,
                residual: run.reference.zip(run.estimate.estimate).map(|(r, e)| e - r),
                status: if run.estimate.resolved { "ok" } else { "under-resolved" },
            },
            Err(f) => {
                let status = f.reason();
                first_refusal.get_or_insert(f);
                SweepRow {
                    value: x,
                    estimate: None,
                    noise: None,
                    resolved: false,
                    reference: None,
                    residual: None,
                    status,
                }
            }
        };
        rows.push(row);
    }
    fs::create_dir_all(out)?;
    let csv_path = out.join("sweep.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record([
        "axis",
        "value",
        "estimate",
        "noise",
        "resolved",
        "reference",
        "residual",
        "status",
        "schema_version",
    ])?;
    for r in &rows {
        w.write_record([
            sw.axis.name().to_string(),
            fmt(r.value),
            fmt_opt(r.estimate),
            fmt_opt(r.noise),
            r.resolved.to_string(),
            fmt_opt(r.reference),
            fmt_opt(r.residual),
            r.status.to_string(),
            SCHEMA_VERSION.to_string(),
        ])?;
    }
    w.flush()?;
    let estimates: Vec<f64> = rows.iter().filter_map(|r| r.estimate).collect();
    let spread = estimates.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - estimates.iter().copied().fold(f64::INFINITY, f64::min);
    let max_residual = rows
        .iter()
        .filter_map(|r| r.residual.map(f64::abs))
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))));
    let json_path = out.join("sweep.json");
    write_json(
        &json_path,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "sweep",
            "seeds": seeds(cfg),
            "axis": sw.axis,
            "rows": rows,
            "spread": (estimates.len() > 1).then_some(spread),
            "max_abs_residual": max_residual,
            "config": cfg,
        }),
    )?;
    if let Some(f) = first_refusal {
        return Err(f);
    }
    if rows.iter().any(|r| !r.resolved) {
        return Err(under_resolved(cfg));
    }
    let mut message = format!("{} runs over {}", rows.len(), sw.axis.name());
    if estimates.len() > 1 {
        message.push_str(&format!(", spread {spread:.6}"));
    }
    if let Some(m) = max_residual {
        message.push_str(&format!(", max |residual| {m:.6}"));
    }
    Ok(Outcome {
        files: vec![csv_path, json_path],
        message,
    })
}

/// DP-vs-brute-force suite on random interval instances; writes `oracle.json`.
pub fn cmd_oracle(cfg: &RunConfig, out: &Path) -> Result<Outcome, Failure> {
    cfg.prepare()?;
    let r = oracle_suite(cfg.oracle.instances, cfg.oracle.max_m, cfg.seed)?;
    fs::create_dir_all(out)?;
    let path = out.join("oracle.json");
    write_json(
        &path,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "oracle",
            "seeds": seeds(cfg),
            "passed": r.passed(),
            "report": r,
        }),
    )?;
    if !r.passed() {
        return Err(Failure::HardCheck(vec!["dp-oracle".into()]));
    }
    Ok(Outcome {
        files: vec![path],
        message: format!(
            "{} instances, max defect {:e} (packing) {:e} (covering)",
            r.instances, r.max_packing_defect, r.max_covering_defect
        ),
    })
}
