use osgood::torus::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Distance by brute force over the nine lifts of `q`.
fn lifted_distance(p: [f64; 2], q: [f64; 2]) -> f64 {
    let mut best = f64::INFINITY;
    for sx in [-2.0, 0.0, 2.0] {
        for sy in [-2.0, 0.0, 2.0] {
            best = best.min((q[0] + sx - p[0]).hypot(q[1] + sy - p[1]));
        }
    }
    best
}

fn pt(x: f64, y: f64) -> TorusPoint {
    TorusPoint::new(x, y)
}

#[test]
fn distance_examples() {
    assert_eq!(geodesic_distance(&pt(0.0, 0.0), &pt(0.0, 0.0)), 0.0);
    assert!((geodesic_distance(&pt(-0.9, 0.0), &pt(0.9, 0.0)) - 0.2).abs() < 1e-12);
    assert!((geodesic_distance(&pt(0.0, 0.0), &pt(1.0, 1.0)) - 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn distance_matches_lifts_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let b = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let d = geodesic_distance(&pt(a[0], a[1]), &pt(b[0], b[1]));
        worst = worst.max((d - lifted_distance(a, b)).abs());
    }
    assert!(worst < 1e-12, "worst disagreement {worst}");
}

#[test]
fn midpoint_examples() {
    let m = geodesic_midpoint(&pt(0.0, 0.0), &pt(0.5, 0.0)).unwrap();
    assert!((m.x() - 0.25).abs() < 1e-15 && m.y() == 0.0);
    let m = geodesic_midpoint(&pt(-0.9, 0.0), &pt(0.9, 0.0)).unwrap();
    assert_eq!((m.x(), m.y()), (-1.0, 0.0));
    let m = geodesic_midpoint(&pt(0.0, 0.0), &pt(0.0, 0.0)).unwrap();
    assert_eq!((m.x(), m.y()), (0.0, 0.0));
}

#[test]
fn midpoint_refuses_long_geodesics() {
    assert!(matches!(geodesic_midpoint(&pt(0.0, 0.0), &pt(1.0, 0.0)), Err(TorusError::AmbiguousGeodesic(_))));
    assert!(geodesic_midpoint(&pt(0.0, 0.0), &pt(0.8, 0.8)).is_err());
}

#[test]
fn box_examples() {
    let d_plus = Box2::open(1.0 / 3.0, 0.5, -0.25, 0.25);
    assert!(box_contains(&d_plus, &pt(0.4, 0.0), 0.0));
    assert!(!box_contains(&d_plus, &pt(0.4, 0.0), 0.1));
    assert!(box_contains(&Box2::cell(), &pt(0.73, -0.99), 0.0));
    // a box straddling the seam
    let seam = Box2::closed(0.8, 1.2, -0.1, 0.1);
    assert!(box_contains(&seam, &pt(-0.9, 0.0), 0.0));
    assert!(!box_contains(&seam, &pt(0.0, 0.0), 0.0));
}

#[test]
fn degenerate_box_is_a_segment() {
    let seg = Box2::closed(0.25, 0.25, -0.25, 0.25);
    assert!(box_contains(&seg, &pt(0.25, 0.1), 0.0));
    assert!(!box_contains(&seg, &pt(0.2500001, 0.1), 0.0));
    assert!(Box2::new(0.25, 0.25, -0.25, 0.25, true).is_err());
    assert!(Box2::new(-1.0, 1.5, 0.0, 1.0, false).is_err());
}

#[test]
fn wrap_handles_float_edges() {
    assert_eq!(wrap_coord(1.0), -1.0);
    assert_eq!(wrap_coord(-1.0), -1.0);
    assert_eq!(wrap_coord(3.0), -1.0);
    let w = wrap_coord(-1e-17);
    assert!((-1.0..1.0).contains(&w));
    let w = wrap_coord(1.0 - 1e-17);
    assert!((-1.0..1.0).contains(&w));
}

proptest! {
    #[test]
    fn canonical_form_is_idempotent(x in -50.0f64..50.0, y in -50.0f64..50.0) {
        let p = pt(x, y);
        prop_assert!((-1.0..1.0).contains(&p.x()) && (-1.0..1.0).contains(&p.y()));
        prop_assert_eq!(pt(p.x(), p.y()), p);
    }

    #[test]
    fn distance_is_a_metric(a in prop::array::uniform6(-1.0f64..1.0)) {
        let (p, q, r) = (pt(a[0], a[1]), pt(a[2], a[3]), pt(a[4], a[5]));
        let pq = geodesic_distance(&p, &q);
        prop_assert!((0.0..=DIAMETER + 1e-15).contains(&pq));
        prop_assert_eq!(pq, geodesic_distance(&q, &p));
        prop_assert!(pq <= geodesic_distance(&p, &r) + geodesic_distance(&r, &q) + 1e-12);
        prop_assert_eq!(geodesic_distance(&p, &p), 0.0);
    }

    #[test]
    fn translation_preserves_distance(a in prop::array::uniform6(-1.0f64..1.0)) {
        let (p, q) = (pt(a[0], a[1]), pt(a[2], a[3]));
        let v = Vec2::new(3.0 * a[4], -5.0 * a[5]);
        let d = geodesic_distance(&p.translate(v), &q.translate(v));
        prop_assert!((d - geodesic_distance(&p, &q)).abs() < 1e-12);
    }

    #[test]
    fn midpoint_halves_the_distance(a in prop::array::uniform4(-1.0f64..1.0)) {
        let (p, q) = (pt(a[0], a[1]), pt(a[2], a[3]));
        let d = geodesic_distance(&p, &q);
        prop_assume!(d < 1.0);
        let m = geodesic_midpoint(&p, &q).unwrap();
        prop_assert!((geodesic_distance(&p, &m) - d / 2.0).abs() < 1e-12);
        prop_assert!((geodesic_distance(&m, &q) - d / 2.0).abs() < 1e-12);
    }

    #[test]
    fn clearance_sign_matches_containment(x in -0.6f64..0.6, y in -0.4f64..0.4) {
        let b = Box2::open(-0.5, 0.5, -0.25, 0.25);
        let inside = box_contains(&b, &pt(x, y), 0.0);
        prop_assert_eq!(inside, b.clearance(Vec2::new(x, y)) > 0.0);
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Holder {
    #[serde(with = "osgood::torus::nonfinite")]
    value: f64,
}

#[test]
fn nonfinite_floats_survive_json() {
    for v in [1.5, 0.0, f64::INFINITY, f64::NEG_INFINITY] {
        let text = serde_json::to_string(&Holder { value: v }).unwrap();
        assert_eq!(serde_json::from_str::<Holder>(&text).unwrap().value, v);
    }
    let text = serde_json::to_string(&Holder { value: f64::NAN }).unwrap();
    assert!(serde_json::from_str::<Holder>(&text).unwrap().value.is_nan());
    assert!(serde_json::from_str::<Holder>(r#"{"value":null}"#).unwrap().value.is_nan());
    assert!(serde_json::from_str::<Holder>(r#"{"value":"big"}"#).is_err());
}
