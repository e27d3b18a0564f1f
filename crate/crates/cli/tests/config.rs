use proptest::prelude::*;
use upressure::potentials::{PotentialSeq, TrigObservable};
use upressure::variational::MeasureKind;
use upressure_cli::config::{Format, RunConfig, SweepAxis, SweepConfig};
use upressure_cli::presets::{find, PRESETS};
use upressure_cli::Failure;

fn preset(name: &str) -> RunConfig {
    RunConfig::parse(find(name).unwrap().text, Format::Toml).unwrap()
}

fn field(f: Failure) -> String {
    match f {
        Failure::Usage { field, .. } => field.unwrap_or_default(),
        other => panic!("expected a usage error, got {other:?}"),
    }
}

#[test]
fn every_preset_parses_validates_and_round_trips() {
    assert!(PRESETS.len() >= 12);
    for p in PRESETS {
        let c = RunConfig::parse(p.text, Format::Toml).unwrap_or_else(|e| panic!("{}: {e:?}", p.name));
        assert_eq!(c.name, p.name);
        c.prepare().unwrap_or_else(|e| panic!("{}: {e:?}", p.name));
        assert_eq!(RunConfig::parse(&c.to_toml(), Format::Toml).unwrap(), c, "{}", p.name);
        assert_eq!(RunConfig::parse(&c.to_json(), Format::Json).unwrap(), c, "{}", p.name);
    }
}

#[test]
fn missing_sections_take_defaults() {
    let c = RunConfig::parse("base_point = [0.1, 0.2]\n[system]\nmatrix = [[2, 1], [1, 1]]\n", Format::Toml).unwrap();
    assert_eq!(c.schema_version, 1);
    assert_eq!(c.delta, 0.1);
    assert_eq!(c.potential, PotentialSeq::zero());
    assert_eq!(c.pressure.epsilons, vec![0.04, 0.02, 0.01]);
    assert!(c.verify.certificate && !c.verify.oracle);
    let p = c.prepare().unwrap();
    assert_eq!(p.registry.len(), 1);
}

#[test]
fn parse_errors_carry_the_field_path() {
    let base = find("catrot-entropy").unwrap().text;
    let f = RunConfig::parse(&base.replace("delta = 0.1", "delta = \"wide\""), Format::Toml).unwrap_err();
    assert_eq!(field(f), "delta");
    let f = RunConfig::parse(&format!("{base}\n[pressure]\nn_max = -3\n"), Format::Toml).unwrap_err();
    assert_eq!(field(f), "pressure.n_max");
    let f = RunConfig::parse(&format!("{base}\n[pressure]\nbogus = 1\n"), Format::Toml).unwrap_err();
    assert_eq!(field(f), "pressure.bogus");
    let json = r#"{"base_point": [0.1, 0.2], "system": {"matrix": [[2, 1], [1, "x"]]}}"#;
    assert_eq!(field(RunConfig::parse(json, Format::Json).unwrap_err()), "system.matrix[1][1]");
}

#[test]
fn validation_errors_carry_the_field_path() {
    let c = preset("catrot-entropy");
    let mut bad = c.clone();
    bad.delta = -0.1;
    assert_eq!(field(bad.prepare().unwrap_err()), "delta");
    let mut bad = c.clone();
    bad.delta = 0.45;
    assert_eq!(field(bad.prepare().unwrap_err()), "delta");
    let mut bad = c.clone();
    bad.base_point = vec![0.1, 0.2];
    assert_eq!(field(bad.prepare().unwrap_err()), "base_point");
    let mut bad = c.clone();
    bad.pressure.epsilons.clear();
    assert_eq!(field(bad.prepare().unwrap_err()), "pressure");
    let mut bad = c.clone();
    bad.system.matrix = vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]];
    assert_eq!(field(bad.prepare().unwrap_err()), "system");
    let mut bad = c.clone();
    bad.registry = vec![MeasureKind::HaarVolume, MeasureKind::PeriodicOrbit { points: vec![vec![0.0; 3]] }];
    assert_eq!(field(bad.prepare().unwrap_err()), "registry[1]");
    let mut bad = c.clone();
    bad.schema_version = 2;
    assert_eq!(field(bad.prepare().unwrap_err()), "schema_version");
    let mut bad = c.clone();
    bad.oracle.max_m = 30;
    assert_eq!(field(bad.prepare().unwrap_err()), "oracle.max_m");
    let mut bad = c.clone();
    bad.seed = u64::MAX;
    assert_eq!(field(bad.prepare().unwrap_err()), "seed");
    let mut bad = c;
    bad.potential = PotentialSeq::birkhoff(TrigObservable::cos_first(2));
    assert_eq!(field(bad.prepare().unwrap_err()), "potential");
}

#[test]
fn sweep_lists_are_checked_up_front() {
    let mut c = preset("cocycle-line");
    c.sweep.as_mut().unwrap().values.clear();
    assert_eq!(field(c.prepare().unwrap_err()), "sweep.values");
    let mut c = preset("catrot-entropy");
    c.sweep = Some(SweepConfig { axis: SweepAxis::Exponent, values: vec![1.0] });
    assert_eq!(field(c.prepare().unwrap_err()), "sweep.values[0]");
    c.sweep = Some(SweepConfig { axis: SweepAxis::N, values: vec![6.0, 2.5] });
    assert_eq!(field(c.prepare().unwrap_err()), "sweep.values[1]");
    c.sweep = Some(SweepConfig { axis: SweepAxis::Delta, values: vec![0.05, -1.0] });
    assert_eq!(field(c.prepare().unwrap_err()), "sweep.values[1]");
    c.sweep = Some(SweepConfig { axis: SweepAxis::Magnitude, values: vec![0.01] });
    assert_eq!(field(c.prepare().unwrap_err()), "sweep.values[0]");
    let p = preset("perturbed-entropy");
    let at = p.sweep_point(SweepAxis::Magnitude, 0.02).unwrap();
    assert_eq!(at.system.magnitude, 0.02);
}

#[test]
fn seed_flag_overrides_both_seeds() {
    let c = preset("variational").with_seed(41);
    assert_eq!((c.seed, c.certificate.seed), (41, 41));
}

fn potential() -> impl Strategy<Value = PotentialSeq> {
    let leaf = prop_oneof![
        (-2.0..2.0f64).prop_map(|t| PotentialSeq::CocycleNorm { t }),
        (-2.0..2.0f64).prop_map(|c| PotentialSeq::Constant { c }),
        Just(PotentialSeq::birkhoff(TrigObservable::cos_first(3))),
    ];
    leaf.prop_recursive(2, 6, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| PotentialSeq::sum(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| PotentialSeq::max(a, b)),
            (-1.0..1.0f64, inner).prop_map(|(c, g)| PotentialSeq::shift(c, g)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn configs_round_trip(
        seed in 0..=i64::MAX as u64,
        delta in 0.01..0.2f64,
        eps in prop::collection::vec(1e-3..0.1f64, 1..4),
        n_min in 1usize..4,
        extra in 0usize..6,
        g in potential(),
        with_circle in any::<bool>(),
        sweep in prop::option::of(prop::collection::vec(-1.0..1.0f64, 1..5)),
    ) {
        let mut c = preset("variational");
        c.seed = seed;
        c.delta = delta;
        c.pressure.epsilons = eps;
        c.pressure.n_min = n_min;
        c.pressure.n_max = n_min + extra;
        c.potential = g;
        if !with_circle {
            c.registry.truncate(1);
        }
        c.sweep = sweep.map(|values| SweepConfig { axis: SweepAxis::Exponent, values });
        prop_assert_eq!(&RunConfig::parse(&c.to_toml(), Format::Toml).unwrap(), &c);
        prop_assert_eq!(&RunConfig::parse(&c.to_json(), Format::Json).unwrap(), &c);
    }
}
