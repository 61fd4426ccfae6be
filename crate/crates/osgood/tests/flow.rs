use osgood::fields::*;
use osgood::flow::*;
use osgood::moduli::{bihari_bound, Modulus};
use osgood::torus::{geodesic_distance, wrap_coord, TorusPoint, Vec2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tight() -> IntegratorConfig {
    IntegratorConfig::with_tol(1e-10)
}

fn random_point(rng: &mut ChaCha8Rng) -> TorusPoint {
    TorusPoint::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn bump() -> FieldSpec {
    build_rotation_bump(TorusPoint::new(0.2, -0.1), 0.4, 0.9, 0.95).unwrap()
}

#[test]
fn zero_field_is_the_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let p = random_point(&mut rng);
        assert_eq!(integrate(&FieldSpec::zero(), &p, 1.0, &tight()).unwrap().point, p);
    }
    let grid = time_one_map(&FieldSpec::zero(), 16, &tight()).unwrap();
    for i in 0..16 {
        for j in 0..16 {
            assert_eq!(grid.image(i, j), grid.source(i, j));
        }
    }
}

#[test]
fn drift_is_a_translation() {
    let v = Vec2::new(0.3, -0.7);
    let b = FieldSpec::drift(v);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let p = random_point(&mut rng);
        let t = rng.random_range(0.0..3.0);
        let got = integrate(&b, &p, t, &tight()).unwrap().point;
        let want = TorusPoint::new(p.x() + t * v.x, p.y() + t * v.y);
        assert!(geodesic_distance(&got, &want) < 1e-12);
    }
}

#[test]
fn bump_sends_inner_points_to_their_antipode() {
    let center = TorusPoint::new(0.2, -0.1);
    let rho = 0.4;
    let b = build_rotation_bump(center, rho, 0.5, 1.0).unwrap();
    for k in 0..8 {
        let a = k as f64 * std::f64::consts::PI / 4.0;
        let p = TorusPoint::new(center.x() + rho / 4.0 * a.cos(), center.y() + rho / 4.0 * a.sin());
        let q = integrate(&b, &p, 1.0, &tight()).unwrap().point;
        let antipode = TorusPoint::new(2.0 * center.x() - p.x(), 2.0 * center.y() - p.y());
        assert!(geodesic_distance(&q, &antipode) < 1e-8, "{q:?}");
    }
}

#[test]
fn time_one_grid_matches_the_exact_map() {
    let b = build_horseshoe_block(4, 1.0, None).unwrap();
    let exact = b.exact_map().unwrap();
    let grid = time_one_map(&b, 48, &tight()).unwrap();
    assert_eq!(grid.images.len(), 48 * 48);
    assert_eq!(grid.source_digest, b.digest());
    let (mut worst, mut compared) = (0.0f64, 0);
    for i in 0..48 {
        for j in 0..48 {
            let p = grid.source(i, j);
            let local = (1.0 / exact.scale) * (p.as_vec() - exact.center);
            // the exact map is only claimed on the fold square
            if local.x.abs().max(local.y.abs()) <= 0.25 + 1e-12 {
                worst = worst.max(geodesic_distance(&grid.image(i, j), &exact.apply(&p)));
                compared += 1;
            }
        }
    }
    assert_eq!(compared, 25);
    assert!(worst < 1e-7, "worst {worst}");
}

#[test]
fn iterated_time_one_matches_long_integration() {
    let b = FieldSpec::new(vec![Block::drift(Vec2::new(0.37, 0.11))].into_iter().chain(bump().blocks).collect());
    let cfg = IntegratorConfig::with_tol(1e-9);
    let step = time_one(&b, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in [2usize, 3] {
        for _ in 0..50 {
            let p = random_point(&mut rng);
            let mut q = p;
            for _ in 0..n {
                q = step(&q).unwrap();
            }
            let direct = integrate(&b, &p, n as f64, &cfg).unwrap().point;
            assert!(geodesic_distance(&q, &direct) < 10.0 * 1e-9 * n as f64, "n={n}");
        }
    }
}

#[test]
fn backward_integration_undoes_the_flow() {
    let b = build_horseshoe_block(3, 0.5, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let p = random_point(&mut rng);
        let q = integrate(&b, &p, 1.0, &tight()).unwrap().point;
        let back = integrate_between(&b, &q, 1.0, 0.0, &tight()).unwrap().point;
        assert!(geodesic_distance(&back, &p) < 1e-8);
    }
    assert!(integrate(&b, &TorusPoint::new(0.0, 0.0), -1.0, &tight()).is_err());
}

#[test]
fn points_away_from_the_support_do_not_move() {
    let b = build_horseshoe_block(3, 0.25, None).unwrap();
    let reach = b.blocks.iter().map(|k| k.support_radius()).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut tested = 0;
    while tested < 200 {
        let p = random_point(&mut rng);
        if p.x().abs() > reach || p.y().abs() > reach {
            assert_eq!(integrate(&b, &p, 1.0, &tight()).unwrap().point, p);
            tested += 1;
        }
    }
}

#[test]
fn periodic_search_examples() {
    let cfg = tight();
    let r = find_near_periodic_point(&FieldSpec::zero(), 0.05, 4, 10, &cfg).unwrap();
    assert_eq!((r.n, r.rho), (1, 0.0));
    let r = find_near_periodic_point(&FieldSpec::drift(Vec2::new(1.0, 0.0)), 0.05, 4, 10, &cfg).unwrap();
    assert_eq!(r.n, 2);
    assert!(r.rho < 1e-12);
    assert!((r.min_separation - 1.0).abs() < 1e-12);
}

/// Scans the exact orbit of `seed` under a translation.
fn scan_translation_orbit(seed: TorusPoint, a: f64, rho0: f64, m_max: usize) -> Option<(usize, usize, f64)> {
    let orbit: Vec<TorusPoint> = (0..=m_max).map(|k| TorusPoint::new(wrap_coord(seed.x() + k as f64 * a), seed.y())).collect();
    let m = (1..=m_max).find(|&m| geodesic_distance(&orbit[0], &orbit[m]) < rho0)?;
    let mut best = (0, 0, f64::INFINITY);
    for j in 1..=m {
        for i in 0..j {
            let d = geodesic_distance(&orbit[i], &orbit[j]);
            if d < best.2 {
                best = (i, j, d);
            }
        }
    }
    Some(best)
}

#[test]
fn periodic_search_agrees_with_exhaustive_scan() {
    let a = 2.0 * (2f64.sqrt() - 1.0);
    let b = FieldSpec::drift(Vec2::new(a, 0.0));
    for (rho0, m_max) in [(0.2, 10), (0.05, 40), (0.01, 200)] {
        let r = find_near_periodic_point(&b, rho0, 3, m_max, &tight()).unwrap();
        let (alpha, beta, rho) = scan_translation_orbit(r.seed, a, rho0, m_max).unwrap();
        assert_eq!((r.alpha, r.beta), (alpha, beta));
        assert_eq!(r.n, beta - alpha);
        assert!((r.rho - rho).abs() < 1e-8);
        assert!(r.rho < rho0);
    }
}

#[test]
fn periodic_search_reports_missing_recurrence() {
    let b = FieldSpec::drift(Vec2::new(2.0 * (2f64.sqrt() - 1.0), 0.0));
    let err = find_near_periodic_point(&b, 1e-3, 2, 5, &tight()).unwrap_err();
    assert!(matches!(err, FlowError::RecurrenceNotFound { .. }));
    assert!(find_near_periodic_point(&b, 0.0, 2, 5, &tight()).is_err());
}

#[test]
fn deviation_of_identical_fields_is_zero() {
    let v = bump();
    let m = Modulus::log_lipschitz();
    let norm_v = field_norm_estimate(&v, &m, &TimeGrid::new(8), &SpaceGrid::new(32, 64));
    let norm_diff = field_distance_estimate(&v, &v, &m, &TimeGrid::new(8), &SpaceGrid::new(32, 64));
    assert_eq!(norm_diff.value, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let samples: Vec<TorusPoint> = (0..20).map(|_| random_point(&mut rng)).collect();
    let rep = deviation_check(&v, &v, &m, &norm_v, &norm_diff, &samples, 2, 4, &tight()).unwrap();
    assert_eq!(rep.pairs, 20 * 8);
    assert_eq!((rep.max_ratio, rep.max_deviation, rep.violations), (0.0, 0.0, 0));
}

#[test]
fn small_perturbation_stays_inside_the_envelope() {
    let v = FieldSpec::new(vec![Block::drift(Vec2::new(0.5, 0.25))].into_iter().chain(bump().blocks).collect());
    let w = FieldSpec::new(v.blocks.iter().cloned().chain(build_rotation_bump(TorusPoint::new(-0.5, 0.5), 0.2, 0.01, 0.5).unwrap().blocks).collect());
    let m = Modulus::log_lipschitz();
    let grid = (TimeGrid::new(8), SpaceGrid::new(32, 64));
    let norm_v = field_norm_estimate(&v, &m, &grid.0, &grid.1);
    let norm_diff = field_distance_estimate(&v, &w, &m, &grid.0, &grid.1);
    assert!(norm_diff.value > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let samples: Vec<TorusPoint> = (0..40).map(|_| random_point(&mut rng)).collect();
    let rep = deviation_check(&v, &w, &m, &norm_v, &norm_diff, &samples, 2, 5, &tight()).unwrap();
    assert!(rep.max_deviation > 0.0);
    assert_eq!(rep.violations, 0, "max ratio {}", rep.max_ratio);
    assert!(rep.budget_v >= 2.0 * norm_v.value - 1e-9);
}

#[test]
fn cumulative_norm_counts_whole_periods() {
    let m = Modulus::log_lipschitz();
    let e = field_norm_estimate(&bump(), &m, &TimeGrid::new(8), &SpaceGrid::new(32, 64));
    assert!((cumulative_norm(&e, 3.0) - 3.0 * e.value).abs() < 1e-12 * e.value);
    assert!(cumulative_norm(&e, 0.0) == 0.0);
    let mut last = 0.0;
    for k in 1..=20 {
        let c = cumulative_norm(&e, k as f64 * 0.1);
        assert!(c >= last);
        last = c;
    }
}

#[test]
fn nearby_points_separate_no_faster_than_the_osgood_envelope() {
    let b = bump();
    let m = Modulus::log_lipschitz();
    let budget = field_norm_estimate(&b, &m, &TimeGrid::new(16), &SpaceGrid::new(64, 128)).value;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = IntegratorConfig::with_tol(1e-12);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let p = TorusPoint::new(0.2 + rng.random_range(-0.45..0.45), -0.1 + rng.random_range(-0.45..0.45));
        let gap = 10f64.powf(rng.random_range(-6.0..-2.0));
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        let q = TorusPoint::new(p.x() + gap * a.cos(), p.y() + gap * a.sin());
        let d0 = geodesic_distance(&p, &q);
        let d1 = geodesic_distance(&integrate(&b, &p, 1.0, &cfg).unwrap().point, &integrate(&b, &q, 1.0, &cfg).unwrap().point);
        worst = worst.max(d1 / bihari_bound(&m, d0, budget).unwrap());
    }
    assert!(worst <= 1.0, "worst ratio {worst}");
}

#[test]
fn exp_gradient_examples() {
    let grid = TimeGrid::new(4);
    let zero = exp_gradient_diagnostic(&FieldSpec::zero(), 1.0, 32, &grid).unwrap();
    assert!((zero.value - 4.0).abs() < 1e-12 && !zero.overflow);
    let drift = exp_gradient_diagnostic(&FieldSpec::drift(Vec2::new(1.0, 2.0)), 3.0, 32, &grid).unwrap();
    assert!((drift.value - 4.0).abs() < 1e-12);
    assert!(exp_gradient_diagnostic(&FieldSpec::zero(), 0.0, 32, &grid).is_err());
}

#[test]
fn exp_gradient_is_bounded_and_shrinks_with_scale() {
    let grid = TimeGrid::new(4);
    let beta = 0.05;
    let mut last = f64::INFINITY;
    for k in 0..3 {
        let b = build_horseshoe_block(3, 2f64.powi(-k), None).unwrap();
        let value = exp_gradient_diagnostic(&b, beta, 192, &grid).unwrap().value;
        // the largest sampled gradient bounds the integrand
        let h = 2.0 / 192.0;
        let mut lip = 0.0f64;
        for (t, _) in grid.nodes(&b) {
            for i in 0..192 {
                for j in 0..192 {
                    let p = Vec2::new(-1.0 + h * i as f64, -1.0 + h * j as f64);
                    let at = |d: Vec2| {
                        let q = p + d;
                        b.eval(t, &TorusPoint::new(q.x, q.y))
                    };
                    let dx = (1.0 / (2.0 * h)) * (at(Vec2::new(h, 0.0)) - at(Vec2::new(-h, 0.0)));
                    let dy = (1.0 / (2.0 * h)) * (at(Vec2::new(0.0, h)) - at(Vec2::new(0.0, -h)));
                    lip = lip.max((dx.x * dx.x + dx.y * dx.y + dy.x * dy.x + dy.y * dy.y).sqrt());
                }
            }
        }
        assert!(value >= 4.0 - 1e-9 && value <= 4.0 * (beta * lip).exp() * (1.0 + 1e-12));
        assert!(value < last, "scale 2^-{k}: {value} vs {last}");
        last = value;
    }
}

#[test]
fn csv_exports() {
    let grid = time_one_map(&FieldSpec::drift(Vec2::new(0.5, 0.0)), 4, &tight()).unwrap();
    let csv = grid.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 17);
    assert!(lines.iter().all(|l| l.split(',').count() == 6));
    let traj = trajectory(&bump(), &TorusPoint::new(0.2, 0.0), 1.0, &tight()).unwrap();
    assert!(traj.len() > 2);
    assert_eq!(traj.last().unwrap().0, 1.0);
    let csv = trajectory_csv(&traj);
    assert!(csv.starts_with("t,x,y\n"));
    assert_eq!(csv.lines().count(), traj.len() + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn flow_composes_over_split_times(x in -1.0f64..1.0, y in -1.0f64..1.0, s in 0.0f64..1.0) {
        let b = bump();
        let p = TorusPoint::new(x, y);
        let mid = integrate(&b, &p, s, &tight()).unwrap().point;
        let two = integrate_between(&b, &mid, s, 1.0, &tight()).unwrap().point;
        let one = integrate(&b, &p, 1.0, &tight()).unwrap().point;
        prop_assert!(geodesic_distance(&one, &two) < 1e-8);
    }

    #[test]
    fn flow_output_is_canonical(x in -1.0f64..1.0, y in -1.0f64..1.0, t in 0.0f64..4.0) {
        let q = integrate(&FieldSpec::drift(Vec2::new(0.9, -1.3)), &TorusPoint::new(x, y), t, &tight()).unwrap().point;
        prop_assert!((-1.0..1.0).contains(&q.x()) && (-1.0..1.0).contains(&q.y()));
    }
}
