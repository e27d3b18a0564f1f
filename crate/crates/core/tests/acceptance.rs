//! The twelve acceptance criteria at their stated tolerances. Runs without
//! the test harness so every criterion prints one line.

use std::process::ExitCode;
use std::time::Instant;

use upressure::dynamics::{PerturbedSystem, SystemSpec, TorusPoint, TrigPerturbation, TrigTerm};
use upressure::leaf::{build_leaf_chart, build_leaf_chart_with, estimate_comparability_constant, LeafChart};
use upressure::potentials::{PotentialSeq, TrigObservable};
use upressure::pressure::{
    audit_rows, cover_pressure_table, estimate, estimate_pressure, oracle_suite, run_pressure, OpenCover,
    PressureParams, PressureTable,
};
use upressure::variational::{
    log_sum_suite, power_rule_check, stage_limit_check, variational_certificate, MeasureEntry, StageLimitParams,
    Verdict,
};
use upressure::Result;

const EXPONENTS: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];

fn log_lambda() -> f64 {
    ((3.0 + 5f64.sqrt()) / 2.0).ln()
}

fn catrot() -> SystemSpec {
    SystemSpec::cat_rotation(SystemSpec::golden_angle())
}

fn base_point() -> TorusPoint {
    TorusPoint::new(vec![0.2, 0.3, 0.4])
}

fn chart(sys: &SystemSpec, delta: f64) -> LeafChart {
    build_leaf_chart(sys, &base_point(), delta).unwrap()
}

struct Verdicts {
    failed: Vec<usize>,
}

impl Verdicts {
    fn report(&mut self, id: usize, outcome: Result<(bool, String)>) {
        let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        println!("criterion {id:>2}: {} {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(id);
        }
    }
}

fn c1() -> Result<(bool, String)> {
    let sys = catrot();
    let ch = chart(&sys, 0.1);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let (_, _, v) = pool.install(|| estimate(&sys, &ch, &PotentialSeq::zero(), &PressureParams::default()))?;
    let secs = start.elapsed().as_secs_f64();
    let rel = (v - log_lambda()).abs() / log_lambda();
    Ok((
        rel <= 0.02 && secs < 30.0,
        format!("entropy {v:.6} vs {:.6}, relative error {rel:.2e} (<= 0.02), {secs:.1} s on one thread", log_lambda()),
    ))
}

fn c2(tables: &mut Vec<PressureTable>) -> Result<(bool, String)> {
    let sys = catrot();
    let ch = chart(&sys, 0.1);
    let mut worst: f64 = 0.0;
    for t in EXPONENTS {
        let table = run_pressure(&sys, &ch, &PotentialSeq::cocycle(t), &PressureParams::default())?;
        let v = estimate_pressure(&table).estimate.unwrap_or(f64::NAN);
        worst = worst.max((v - (1.0 + t) * log_lambda()).abs());
        tables.push(table);
    }
    Ok((worst <= 0.03, format!("max |P - (1 + t) log lambda| = {worst:.2e} over t in {EXPONENTS:?} (<= 0.03)")))
}

fn c3() -> Result<(bool, String)> {
    let params = PressureParams::default();
    let mut worst_gap: f64 = 0.0;
    let mut all_equal = true;
    let mut all_safe = true;
    // cat x rotation has no fixed point; its invariant center circle stands in
    let catrot = catrot();
    let cat = SystemSpec::cat_map();
    let suites = [
        (
            catrot.clone(),
            chart(&catrot, 0.1),
            vec![
                MeasureEntry::haar(&catrot),
                MeasureEntry::center_circle(&catrot, TorusPoint::origin(3), 2)?,
            ],
        ),
        (
            cat.clone(),
            build_leaf_chart(&cat, &TorusPoint::new(vec![0.2, 0.3]), 0.1)?,
            vec![MeasureEntry::haar(&cat), MeasureEntry::fixed_point(&cat, TorusPoint::origin(2))?],
        ),
    ];
    for (sys, ch, registry) in &suites {
        for t in EXPONENTS {
            let r = variational_certificate(sys, ch, &PotentialSeq::cocycle(t), registry, &params, &Default::default())?;
            all_equal &= r.verdict == Verdict::CertifiedEqual;
            all_safe &= r.one_sided_safe();
            worst_gap = worst_gap.max(r.gap.map_or(f64::INFINITY, f64::abs));
        }
    }
    Ok((
        all_equal && all_safe && worst_gap <= 0.03,
        format!(
            "10 certificates (cat x rotation with Haar and center circle, cat map with Haar and fixed point): \
             certified-equal {all_equal}, one-sided safe {all_safe}, max |gap| {worst_gap:.2e} (<= 0.03)"
        ),
    ))
}

fn c4(tables: &[PressureTable]) -> Result<(bool, String)> {
    let sys = catrot();
    let ch = chart(&sys, 0.1);
    let mut constant = tables.to_vec();
    constant.push(run_pressure(&sys, &ch, &PotentialSeq::zero(), &PressureParams::default())?);
    let mut bracket: f64 = f64::NEG_INFINITY;
    let mut greedy: f64 = f64::NEG_INFINITY;
    let mut halving: f64 = f64::NEG_INFINITY;
    let mut rate: f64 = 0.0;
    let mut rows = 0;
    for t in &constant {
        let a = audit_rows(t, &estimate_pressure(t));
        bracket = bracket.max(a.bracket_defect);
        greedy = greedy.max(a.greedy_defect);
        halving = halving.max(a.halving_defect.unwrap_or(f64::INFINITY));
        rate = rate.max(a.rate_gap.unwrap_or(f64::INFINITY));
        rows += a.rows;
    }
    // weights that vary inside balls: the greedy total is bracketed by
    // P and the greedy cover cost instead
    let g = PotentialSeq::sum(PotentialSeq::birkhoff(TrigObservable::cos_first(3)), PotentialSeq::cocycle(0.5));
    let t = run_pressure(&sys, &ch, &g, &PressureParams::default())?;
    let a = audit_rows(&t, &estimate_pressure(&t));
    let varying_ok = a.exact_passed() && a.rate_gap.is_some_and(|r| r <= 0.02);
    rows += a.rows;
    let ok = bracket <= 1e-9 && greedy <= 1e-9 && halving <= 1e-9 && rate <= 0.02 && varying_ok;
    Ok((
        ok,
        format!(
            "{rows} rows: max(log Q - log greedy) {greedy:.1e}, max(log greedy - log P) and cover bracket {bracket:.1e}, \
             max(log P(eps) - log Q(eps/2)) {halving:.1e}, max rate gap {:.2e} (<= 0.02)",
            rate.max(a.rate_gap.unwrap_or(f64::INFINITY))
        ),
    ))
}

fn c5() -> Result<(bool, String)> {
    let r = oracle_suite(200, 18, 2024)?;
    Ok((
        r.passed() && r.max_packing_defect <= 1e-9 && r.max_covering_defect <= 1e-9,
        format!(
            "{} instances, m <= {}: packing defect {:.1e}, covering defect {:.1e} (<= 1e-9), {} mismatches",
            r.instances,
            r.max_m,
            r.max_packing_defect,
            r.max_covering_defect,
            r.mismatches.len()
        ),
    ))
}

fn c6() -> Result<(bool, String)> {
    let sys = catrot();
    let ch = chart(&sys, 0.1);
    let g = PotentialSeq::sum(PotentialSeq::birkhoff(TrigObservable::cos_first(3)), PotentialSeq::cocycle(0.5));
    let params = PressureParams::default();
    let base = run_pressure(&sys, &ch, &g, &params)?;
    let e0 = estimate_pressure(&base).estimate.unwrap_or(f64::NAN);
    let mut row_defect: f64 = 0.0;
    let mut est_defect: f64 = 0.0;
    for c in [0.5, -0.3] {
        let shifted = run_pressure(&sys, &ch, &PotentialSeq::shift(c, g.clone()), &params)?;
        for (a, b) in base.rows.iter().zip(&shifted.rows) {
            row_defect = row_defect.max((b.log_p - a.log_p - a.n as f64 * c).abs());
        }
        let e = estimate_pressure(&shifted).estimate.unwrap_or(f64::NAN);
        est_defect = est_defect.max((e - e0 - c).abs());
    }
    Ok((
        row_defect <= 1e-9 && est_defect <= 0.02,
        format!("c in [0.5, -0.3]: row defect {row_defect:.1e} (<= 1e-9), estimate defect {est_defect:.1e} (<= 0.02)"),
    ))
}

fn c7() -> Result<(bool, String)> {
    let sys = catrot();
    let ch = chart(&sys, 0.1);
    let mut worst: f64 = 0.0;
    for g in [PotentialSeq::zero(), PotentialSeq::cocycle(1.0)] {
        let r = power_rule_check(&sys, &ch, &g, 2, &PressureParams::default())?;
        worst = worst.max(r.defect);
    }
    Ok((worst <= 0.06, format!("k = 2, max |P_2 - 2 P_1| = {worst:.4} (<= 0.06)")))
}

fn c8() -> Result<(bool, String)> {
    let sys = catrot();
    let ch = chart(&sys, 0.1);
    let mut ok = true;
    let (mut inc, mut low, mut fin): (f64, f64, f64) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0);
    for g in [PotentialSeq::cocycle(0.5), PotentialSeq::cocycle(1.0)] {
        let r = stage_limit_check(&sys, &ch, &g, &[1, 2, 4, 8], &PressureParams::default(), &StageLimitParams::default())?;
        ok &= r.passed;
        inc = inc.max(r.increase_defect);
        low = low.max(r.lower_defect);
        fin = fin.max(r.final_defect.unwrap_or(f64::INFINITY));
    }
    Ok((
        ok && inc <= 0.02 && low <= 0.02 && fin <= 0.05,
        format!("stages 1, 2, 4, 8: max increase {inc:.1e}, max shortfall {low:.1e} (<= 0.02), last-stage gap {fin:.1e} (<= 0.05)"),
    ))
}

fn c9() -> Result<(bool, String)> {
    let r = log_sum_suite(1000, 17)?;
    Ok((
        r.passed(),
        format!(
            "1000 instances: max(lhs - rhs) {:.1e}, Gibbs defect {:.1e} (<= 1e-12)",
            r.max_violation, r.max_gibbs_defect
        ),
    ))
}

fn c10() -> Result<(bool, String)> {
    let sys = catrot();
    let ch = chart(&sys, 0.1);
    let cover = OpenCover::uniform(0.1, 0.08)?;
    let r = cover_pressure_table(&sys, &ch, &PotentialSeq::zero(), &cover, 4, 20001)?;
    let (_, _, v) = estimate(&sys, &ch, &PotentialSeq::zero(), &PressureParams::default())?;
    Ok((
        r.subadditivity_defect <= 1e-9 && r.fekete_bound >= v - 0.02,
        format!(
            "n <= 4, m = {}: sub-additivity defect {:.1e} (<= 1e-9), Fekete bound {:.4} >= estimate {v:.4} - 0.02",
            r.m, r.subadditivity_defect, r.fekete_bound
        ),
    ))
}

fn c11() -> Result<(bool, String)> {
    let sys = catrot();
    let (wide, narrow) = (chart(&sys, 0.1), chart(&sys, 0.05));
    let mut worst: f64 = 0.0;
    let mut potentials = vec![PotentialSeq::zero()];
    potentials.extend(EXPONENTS.map(PotentialSeq::cocycle));
    for g in &potentials {
        let a = estimate(&sys, &wide, g, &PressureParams::default())?.2;
        let b = estimate(&sys, &narrow, g, &PressureParams::default())?.2;
        worst = worst.max((a - b).abs());
    }
    Ok((worst <= 0.02, format!("delta 0.1 vs 0.05 over {} potentials: max difference {worst:.2e} (<= 0.02)", potentials.len())))
}

fn c12() -> Result<(bool, String)> {
    let base = catrot();
    let pert = TrigPerturbation::new(vec![
        TrigTerm { component: 0, wave: vec![0, 0, 1], cos: 0.0, sin: 1.0 },
        TrigTerm { component: 2, wave: vec![1, 0, 0], cos: 0.0, sin: 1.0 },
    ]);
    let sys: SystemSpec = PerturbedSystem::new(base.linear_part().clone(), pert, 0.01)?.into();
    let ch = build_leaf_chart_with(&sys, &base_point(), 0.1, 30)?;
    let comp = estimate_comparability_constant(&ch, 2000, 3)?;
    let (_, _, v) = estimate(&sys, &ch, &PotentialSeq::zero(), &PressureParams::default())?;
    let (_, _, v0) = estimate(&base, &chart(&base, 0.1), &PotentialSeq::zero(), &PressureParams::default())?;
    let shift = (v - v0).abs();
    Ok((
        ch.residual() <= 1e-8 && comp.constant <= 1.1 && shift <= 0.05,
        format!(
            "magnitude 0.01: residual {:.1e} (<= 1e-8), comparability {:.6} (<= 1.1), entropy {v:.4} vs linear {v0:.4}, shift {shift:.1e} (<= 0.05)",
            ch.residual(),
            comp.constant
        ),
    ))
}

fn main() -> ExitCode {
    let mut v = Verdicts { failed: Vec::new() };
    let mut tables = Vec::new();
    v.report(1, c1());
    v.report(2, c2(&mut tables));
    v.report(3, c3());
    v.report(4, c4(&tables));
    v.report(5, c5());
    v.report(6, c6());
    v.report(7, c7());
    v.report(8, c8());
    v.report(9, c9());
    v.report(10, c10());
    v.report(11, c11());
    v.report(12, c12());
    if v.failed.is_empty() {
        println!("acceptance: 12 of 12 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {:?}", v.failed);
        ExitCode::FAILURE
    }
}
