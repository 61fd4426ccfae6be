use osgood::entropy::{shift_entropy, Density};
use osgood::fields::FieldSpec;
use osgood::pipeline::*;
use osgood::torus::Vec2;

/// Coarse sampling so a zero-field run takes seconds.
fn quick(base: FieldSpec, k: f64) -> PipelineConfig {
    PipelineConfig {
        candidates: vec![5],
        density: Density { per_segment: 200, square: 41 },
        profile_grid: ProfileGrid { resolution: 24, fine: 600, per_interval: 2 },
        perturbations: 1,
        ..PipelineConfig::new(base, 0.5, k)
    }
}

#[test]
fn zero_field_gets_a_five_strip_horseshoe() {
    let config = quick(FieldSpec::zero(), 4f64.ln());
    let report = run_pipeline(&config, &FieldSpec::zero()).unwrap();
    assert!(report.success);
    assert_eq!(report.closure.periodic.n, 1);
    assert_eq!(report.closure.residual_gap, 0.0);
    assert_eq!(report.insertion.n_h, 5);
    assert_eq!(report.certification.bound, shift_entropy(5));
    assert!(report.certification.certificate.pass);
    assert!(report.budget.total < report.budget.limit);
    let ledger = report.budget.bump + report.budget.freeze + report.budget.horseshoe;
    assert!((ledger - report.budget.total).abs() < 1e-12);
    assert_eq!(report.perturbations.len(), 1);
    for p in &report.perturbations {
        assert!(p.recertified && p.certificate.pass);
        assert!(p.ln_norm < report.stability.ln_delta);
        assert_eq!(p.deviation.violations, 0);
    }
    assert_eq!(report.field_digest, report.field.digest());

    // the stored field recertifies on its own orbit
    let (cert, bound) = recertify(&report, &report.perturbations[0].block).unwrap();
    assert!(cert.pass);
    assert_eq!(bound, shift_entropy(5));

    // identical configurations give identical reports apart from the clock
    let again = run_pipeline(&config, &FieldSpec::zero()).unwrap();
    let strip = |r: &PipelineReport| {
        let mut v = serde_json::to_value(r).unwrap();
        v.as_object_mut().unwrap().remove("timestamp");
        v
    };
    assert_eq!(strip(&report), strip(&again));

    let csv = report.to_csv();
    assert!(csv.starts_with("key,value\n"));
    assert!(csv.lines().any(|l| l == "success,true"));
    let parsed: PipelineReport = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(strip(&parsed), strip(&report));
}

#[test]
fn missing_recurrence_stops_at_the_orbit_stage() {
    let base = FieldSpec::drift(Vec2::new(2.0 * (2f64.sqrt() - 1.0), 0.0));
    let config = PipelineConfig { rho0: 1e-6, seeds: 1, m_max: 4, ..quick(base.clone(), 1.0) };
    let err = run_pipeline(&config, &base).unwrap_err();
    assert_eq!(err.stage, "periodic_orbit");
}

#[test]
fn invalid_configurations_are_rejected() {
    let base = FieldSpec::zero();
    for config in [
        PipelineConfig { eps_budget: 0.0, ..quick(base.clone(), 1.0) },
        PipelineConfig { k_target: -1.0, ..quick(base.clone(), 1.0) },
        PipelineConfig { eta: 1.5, ..quick(base.clone(), 1.0) },
    ] {
        assert_eq!(config.validate().unwrap_err().stage, "config");
        assert!(run_pipeline(&config, &base).is_err());
    }
}

#[test]
fn base_field_loads_from_a_path() {
    let dir = tempfile::tempdir().unwrap();
    let base = FieldSpec::drift(Vec2::new(1.0, 0.0));
    std::fs::write(dir.path().join("base.json"), base.to_json()).unwrap();
    let config = PipelineConfig { base_field: FieldSource::Path("base.json".into()), ..PipelineConfig::default() };
    assert_eq!(config.load_base(Some(dir.path())).unwrap(), base);
    let missing = PipelineConfig { base_field: FieldSource::Path("nope.json".into()), ..PipelineConfig::default() };
    assert!(missing.load_base(Some(dir.path())).is_err());
}
