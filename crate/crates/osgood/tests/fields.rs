use osgood::entropy::{certify_pseudo_horseshoe, combine_invariant_pieces, Density, HorseshoeFrame};
use osgood::fields::*;
use osgood::flow::{integrate, trace_orbit, IntegratorConfig};
use osgood::moduli::Modulus;
use osgood::torus::{geodesic_distance, TorusPoint, Vec2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn tight() -> IntegratorConfig {
    IntegratorConfig::with_tol(1e-10)
}

fn flow_to(b: &FieldSpec, p: TorusPoint, t: f64) -> TorusPoint {
    integrate(b, &p, t, &tight()).unwrap().point
}

/// Central-difference divergence.
fn divergence(b: &FieldSpec, t: f64, p: Vec2, h: f64) -> f64 {
    let at = |q: Vec2| b.eval(t, &TorusPoint::new(q.x, q.y));
    let dx = (at(p + Vec2::new(h, 0.0)).x - at(p - Vec2::new(h, 0.0)).x) / (2.0 * h);
    let dy = (at(p + Vec2::new(0.0, h)).y - at(p - Vec2::new(0.0, h)).y) / (2.0 * h);
    dx + dy
}

fn random_in_ball(rng: &mut ChaCha8Rng, center: Vec2, radius: f64) -> Vec2 {
    let r = radius * rng.random_range(0.0f64..1.0).sqrt();
    let a = rng.random_range(0.0..2.0 * PI);
    center + Vec2::new(r * a.cos(), r * a.sin())
}

#[test]
fn horseshoe_blocks_certify_for_small_n() {
    for n in 2..=4 {
        let f = build_horseshoe_block(n, 1.0, None).unwrap();
        let manifest = f.manifest.as_ref().unwrap();
        assert!(manifest["margin"].as_f64().unwrap() > 0.0);
        assert_eq!(manifest["frame_scale"].as_f64().unwrap(), frame_scale(1.0));
        let map = f.exact_map().unwrap();
        let frame = HorseshoeFrame::new(n, frame_scale(1.0), [0.0, 0.0]).unwrap();
        let oracle = |z: Vec2| Ok(frame.to_local(&map.apply(&frame.to_torus(z))));
        let cert = certify_pseudo_horseshoe(&oracle, &frame, Density { per_segment: 1000, square: 101 }).unwrap();
        assert!(cert.pass, "N={n} margin {}", cert.margin);
        assert_eq!(cert.bound_nats, (n as f64).ln());
    }
}

#[test]
fn horseshoe_rejects_bad_arguments() {
    assert!(build_horseshoe_block(1, 1.0, None).is_err());
    assert!(build_horseshoe_block(3, 0.0, None).is_err());
    assert!(build_horseshoe_block(3, 1.5, None).is_err());
}

#[test]
fn horseshoe_support_and_rescaling() {
    let big = build_horseshoe_block(4, 1.0, None).unwrap();
    let eps = 2f64.powi(-5);
    let small = build_horseshoe_block(4, eps, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sup_big = 0.0f64;
    let mut sup_small = 0.0f64;
    for _ in 0..2000 {
        let t = rng.random_range(0.0..1.0);
        let x = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let vb = big.eval(t, &TorusPoint::new(x.x, x.y));
        let vs = small.eval(t, &TorusPoint::new(eps * x.x, eps * x.y));
        assert_eq!(vs, eps * vb, "rescaling law at {x:?}");
        sup_big = sup_big.max(vb.norm());
        sup_small = sup_small.max(vs.norm());
        // outside B_eps the small block vanishes
        let far = random_in_ball(&mut rng, Vec2::ZERO, 0.9);
        if far.norm() > eps {
            assert_eq!(small.eval(t, &TorusPoint::new(far.x, far.y)), Vec2::ZERO);
        }
    }
    assert_eq!(sup_small, eps * sup_big);
}

#[test]
fn stream_stages_are_divergence_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [2, 5, 9] {
        let f = build_horseshoe_block(n, 1.0, None).unwrap();
        for _ in 0..400 {
            let t = rng.random_range(0.0..1.0);
            let p = random_in_ball(&mut rng, Vec2::ZERO, 1.0);
            let d = divergence(&f, t, p, 1e-6);
            assert!(d.abs() < 1e-6, "N={n} t={t} p={p:?}: div {d}");
        }
    }
    let bump = build_rotation_bump(TorusPoint::new(0.3, 0.2), 0.4, 0.3, 1.0).unwrap();
    for _ in 0..400 {
        let t = rng.random_range(0.7..1.0);
        let p = random_in_ball(&mut rng, Vec2::new(0.3, 0.2), 0.35);
        assert!(divergence(&bump, t, p, 1e-6).abs() < 1e-6);
    }
}

/// Shoelace area of the image of an axis-aligned square cell, each edge
/// subdivided `sub` times.
fn image_cell_area(map: &dyn Fn(Vec2) -> Vec2, corner: Vec2, side: f64, sub: usize) -> f64 {
    let corners = [corner, corner + Vec2::new(side, 0.0), corner + Vec2::new(side, side), corner + Vec2::new(0.0, side)];
    let mut ring = Vec::with_capacity(4 * sub);
    for k in 0..4 {
        let (a, b) = (corners[k], corners[(k + 1) % 4]);
        for s in 0..sub {
            ring.push(map(a + (s as f64 / sub as f64) * (b - a)));
        }
    }
    let mut area = 0.0;
    for k in 0..ring.len() {
        let (p, q) = (ring[k], ring[(k + 1) % ring.len()]);
        area += p.x * q.y - q.x * p.y;
    }
    0.5 * area
}

#[test]
fn stage_maps_preserve_area() {
    let f = build_horseshoe_block(3, 1.0, None).unwrap();
    let exact = f.exact_map().unwrap();
    let cells = 12;
    let side = 0.5 / cells as f64;
    let mut worst = 0.0f64;
    for i in 0..cells {
        for j in 0..cells {
            let corner = Vec2::new(-0.25 + side * i as f64, -0.25 + side * j as f64);
            let area = image_cell_area(&|z| exact.apply_local(z), corner, side, 1024);
            worst = worst.max((area / (side * side) - 1.0).abs());
        }
    }
    assert!(worst < 0.01, "closed form: worst relative area change {worst}");
    // the integrated flow, on a few cells of the frame square
    let scale = frame_scale(1.0);
    let cfg = IntegratorConfig::with_tol(1e-9);
    let flow = |z: Vec2| {
        let p = integrate(&f, &TorusPoint::new(scale * z.x, scale * z.y), 1.0, &cfg).unwrap().point;
        (1.0 / scale) * p.as_vec()
    };
    for corner in [Vec2::new(-0.25, -0.25), Vec2::new(0.0, 0.1), Vec2::new(0.15, -0.05)] {
        let area = image_cell_area(&flow, corner, 0.1, 512);
        assert!((area / 0.01 - 1.0).abs() < 0.01, "integrated cell at {corner:?}: {area}");
    }
}

#[test]
fn rotation_bump_rotates_the_inner_ball() {
    let center = Vec2::new(0.2, -0.3);
    let rho = 0.2;
    let bump = build_rotation_bump(TorusPoint::new(center.x, center.y), rho, 0.25, 1.0).unwrap();
    let cfg = IntegratorConfig::with_tol(1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = random_in_ball(&mut rng, center, 0.5 * rho);
        let expected = center - (p - center);
        let got = integrate(&bump, &TorusPoint::new(p.x, p.y), 1.0, &cfg).unwrap().point;
        worst = worst.max(geodesic_distance(&got, &TorusPoint::new(expected.x, expected.y)));
    }
    assert!(worst <= 1e-6, "worst rotation error {worst}");
    let c = TorusPoint::new(center.x, center.y);
    assert!(geodesic_distance(&integrate(&bump, &c, 1.0, &cfg).unwrap().point, &c) < 1e-12);
    for _ in 0..100 {
        let a = rng.random_range(0.0..2.0 * PI);
        let r = rng.random_range(0.76 * rho..0.99);
        let p = TorusPoint::new(center.x + r * a.cos(), center.y + r * a.sin());
        assert_eq!(integrate(&bump, &p, 1.0, &cfg).unwrap().point, p);
    }
}

#[test]
fn rotation_bump_lives_in_its_time_window() {
    let bump = build_rotation_bump(TorusPoint::new(0.0, 0.0), 0.1, 0.25, 1.0).unwrap();
    let p = TorusPoint::new(0.01, 0.02);
    assert_eq!(bump.eval(0.5, &p), Vec2::ZERO);
    assert_eq!(bump.eval(0.74, &p), Vec2::ZERO);
    assert!(bump.eval(0.9, &p).norm() > 0.0);
    // one-periodic in time
    assert!((bump.eval(1.9, &p) - bump.eval(0.9, &p)).norm() < 1e-9);
    let moved = flow_to(&bump, TorusPoint::new(-0.05, 0.0), 1.0);
    assert!(geodesic_distance(&moved, &TorusPoint::new(0.05, 0.0)) < 1e-8);
    assert!(build_rotation_bump(TorusPoint::new(0.0, 0.0), 0.1, 0.5, 0.4).is_err());
}

#[test]
fn cutoff_gradient_is_bounded() {
    for (inner, outer) in [(0.5, 0.75), (0.9, 3.0), (0.25, 0.5)] {
        let c = Cutoff { inner, outer };
        assert_eq!(c.value(0.0), 1.0);
        assert_eq!(c.value(inner), 1.0);
        assert_eq!(c.value(outer), 0.0);
        let measured = c.measured_gradient(100_000);
        assert!(measured <= c.gradient_bound() * (1.0 + 1e-9));
        assert!(c.gradient_bound() <= 9.0 / (outer - inner));
    }
}

/// Drift `(1, 0)` plus a rotation bump that overlaps the tube but not the
/// orbit itself.
fn drift_with_obstacle() -> FieldSpec {
    let mut b = FieldSpec::drift(Vec2::new(1.0, 0.0));
    let bump = build_rotation_bump(TorusPoint::new(0.5, 0.3), 0.4, 0.5, 0.5).unwrap();
    b.blocks.extend(bump.blocks);
    b
}

#[test]
fn freezing_makes_the_tube_a_translation() {
    let b = drift_with_obstacle();
    let cfg = tight();
    let orbit = trace_orbit(&b, &TorusPoint::ORIGIN, 2, 256, &cfg).unwrap();
    assert!(orbit.gap() < 1e-12);
    let r = 0.4;
    let u = freeze_tube(&b, &orbit, r).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let y = random_in_ball(&mut rng, Vec2::ZERO, 0.5 * r);
        let t = rng.random_range(0.0..2.0);
        let moved = integrate(&u, &TorusPoint::new(y.x, y.y), t, &cfg).unwrap().point;
        let centre = integrate(&u, &TorusPoint::ORIGIN, t, &cfg).unwrap().point;
        worst = worst.max(centre.displacement_to(&moved).sub_norm(y));
    }
    assert!(worst < 1e-6, "worst deviation from translation {worst}");
    // equal to b away from the tubes and at the orbit
    let far = TorusPoint::new(0.3, 0.9);
    assert_eq!(u.eval(0.3, &far), b.eval(0.3, &far));
    let t = 0.37;
    let on = orbit.point(t);
    assert!((u.eval(t, &on) - b.eval(t, &on)).norm() < 1e-12);
}

trait SubNorm {
    fn sub_norm(self, o: Vec2) -> f64;
}

impl SubNorm for Vec2 {
    fn sub_norm(self, o: Vec2) -> f64 {
        (self - o).norm()
    }
}

#[test]
fn overlapping_tubes_are_rejected() {
    let b = FieldSpec::drift(Vec2::new(1.0, 0.0));
    let orbit = trace_orbit(&b, &TorusPoint::ORIGIN, 2, 64, &tight()).unwrap();
    assert!(matches!(freeze_tube(&b, &orbit, 0.6), Err(FieldError::TubesOverlap { .. })));
}

#[test]
fn inserted_horseshoe_acts_after_n_periods() {
    let b = drift_with_obstacle();
    let cfg = tight();
    let orbit = trace_orbit(&b, &TorusPoint::ORIGIN, 2, 256, &cfg).unwrap();
    let r = 0.4;
    let u = freeze_tube(&b, &orbit, r).unwrap();
    let h = build_horseshoe_block(3, r / 4.0, None).unwrap();
    let v = insert_horseshoe_along_orbit(&u, &h, &orbit, 2, r).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst = 0.0f64;
    let mut worst_half = 0.0f64;
    for _ in 0..100 {
        let y = random_in_ball(&mut rng, Vec2::ZERO, r / 8.0);
        let p = TorusPoint::new(y.x, y.y);
        let lhs = integrate(&v, &p, 2.0, &cfg).unwrap().point;
        let rhs = integrate(&h, &p, 1.0, &cfg).unwrap().point;
        worst = worst.max(geodesic_distance(&lhs, &rhs));
        // halfway: X_1^v(y) = X_1^u(0) + X_{1/2}^h(y)
        let mid = integrate(&v, &p, 1.0, &cfg).unwrap().point;
        let shift = integrate(&u, &TorusPoint::ORIGIN, 1.0, &cfg).unwrap().point.as_vec();
        let inner = integrate(&h, &p, 0.5, &cfg).unwrap().point.as_vec();
        worst_half = worst_half.max(geodesic_distance(&mid, &TorusPoint::new(shift.x + inner.x, shift.y + inner.y)));
    }
    assert!(worst < 1e-5, "X_N^v vs X_1^h: {worst}");
    assert!(worst_half < 1e-5, "half-way identity: {worst_half}");
    let too_big = build_horseshoe_block(3, r / 2.0, None).unwrap();
    assert!(matches!(
        insert_horseshoe_along_orbit(&u, &too_big, &orbit, 2, r),
        Err(FieldError::SupportTooLarge { .. })
    ));
}

#[test]
fn inserting_nothing_keeps_the_periodic_point() {
    let b = FieldSpec::drift(Vec2::new(1.0, 0.0));
    let cfg = tight();
    let orbit = trace_orbit(&b, &TorusPoint::ORIGIN, 2, 64, &cfg).unwrap();
    let u = freeze_tube(&b, &orbit, 0.4).unwrap();
    let v = insert_horseshoe_along_orbit(&u, &FieldSpec::zero(), &orbit, 2, 0.4).unwrap();
    let back = integrate(&v, &TorusPoint::ORIGIN, 2.0, &cfg).unwrap().point;
    assert!(geodesic_distance(&back, &TorusPoint::ORIGIN) < 1e-9);
}

#[test]
fn ladder_supports_are_disjoint_and_invariant() {
    let f = build_infinite_entropy_field(4).unwrap();
    assert_eq!(f.blocks.len(), 3);
    // dyadic centres and radii: these comparisons are exact
    for a in 2..=4usize {
        for b in a + 1..=4usize {
            let (ca, cb) = (ladder_center(a), ladder_center(b));
            let gap = (ca.y() - cb.y()).abs();
            assert!(ca.x() == cb.x() && gap > ladder_radius(a) + ladder_radius(b));
        }
    }
    let cfg = tight();
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for n in 2..=4usize {
        let c = ladder_center(n).as_vec();
        let rad = ladder_radius(n);
        for _ in 0..40 {
            let p = random_in_ball(&mut rng, c, 0.99 * rad);
            let q = integrate(&f, &TorusPoint::new(p.x, p.y), 1.0, &cfg).unwrap().point;
            assert!(geodesic_distance(&q, &TorusPoint::new(c.x, c.y)) < rad, "N={n}");
        }
        let a = rng.random_range(0.0..2.0 * PI);
        let edge = TorusPoint::new(c.x + rad * a.cos(), c.y + rad * a.sin());
        assert_eq!(integrate(&f, &edge, 1.0, &cfg).unwrap().point, edge);
    }
    let outside = TorusPoint::new(0.4, 0.4);
    assert_eq!(f.eval(0.5, &outside), Vec2::ZERO);
    assert!(build_infinite_entropy_field(13).is_err());
    assert!(build_infinite_entropy_field(1).is_err());
}

#[test]
fn ladder_pieces_combine_to_the_largest() {
    let bounds: Vec<f64> = (2..=4).map(|n: usize| (n as f64).ln()).collect();
    assert_eq!(combine_invariant_pieces(&bounds).unwrap(), 4f64.ln());
}

#[test]
fn norm_of_zero_field_is_zero() {
    let e = field_norm_estimate(&FieldSpec::zero(), &Modulus::log_lipschitz(), &TimeGrid::default(), &SpaceGrid::default());
    assert_eq!(e.value, 0.0);
}

#[test]
fn rotation_bump_norm_tracks_its_scaling() {
    // ratio of the estimate to eta^-1 (rho + rho/omega(rho)) stays bounded
    let m = Modulus::log_lipschitz();
    let eta = 0.25;
    let ratios: Vec<f64> = [0.05, 0.1, 0.2]
        .iter()
        .map(|&rho| {
            let b = build_rotation_bump(TorusPoint::new(0.1, 0.1), rho, eta, 1.0).unwrap();
            let e = field_norm_estimate(&b, &m, &TimeGrid::new(8), &SpaceGrid::new(32, 96)).value;
            e / ((rho + rho / m.eval(rho)) / eta)
        })
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    assert!(hi / lo < 2.0 && hi < 10.0, "constants {ratios:?}");
}

#[test]
fn rescaled_norms_decrease() {
    let m = Modulus::log_lipschitz();
    let norms: Vec<f64> = (3..=8)
        .map(|k| {
            let b = build_horseshoe_block(4, 2f64.powi(-k), None).unwrap();
            field_norm_estimate(&b, &m, &TimeGrid::default(), &SpaceGrid::default()).value
        })
        .collect();
    assert!(norms.windows(2).all(|p| p[1] < p[0]), "{norms:?}");
}

#[test]
fn compression_keeps_the_time_one_map() {
    let b = drift_with_obstacle();
    let c = compress_time(&b, 0.25).unwrap();
    let cfg = IntegratorConfig::with_tol(1e-12);
    for p in [TorusPoint::new(0.4, 0.2), TorusPoint::new(-0.7, 0.5), TorusPoint::new(0.55, 0.35)] {
        let before = integrate(&b, &p, 1.0, &cfg).unwrap().point;
        let after = integrate(&c, &p, 1.0, &cfg).unwrap().point;
        assert!(geodesic_distance(&before, &after) < 1e-9);
    }
    let p = TorusPoint::new(0.4, 0.2);
    assert_eq!(c.eval(0.9, &p), Vec2::ZERO);
    assert!(compress_time(&b, 1.0).is_err());
}

#[test]
fn field_spec_json_round_trips() {
    for f in [
        build_horseshoe_block(5, 0.5, None).unwrap(),
        build_rotation_bump(TorusPoint::new(0.1, 0.7), 0.3, 0.2, 0.9).unwrap(),
        build_infinite_entropy_field(3).unwrap(),
        FieldSpec::drift(Vec2::new(0.1, 1.0 / 3.0)),
    ] {
        let text = f.to_json();
        let back = FieldSpec::from_json(&text).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_json(), text);
        assert_eq!(back.digest(), f.digest());
    }
    assert!(matches!(FieldSpec::from_json("{\"blocks\": 3}"), Err(FieldError::Parse(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fields_are_time_periodic(t in 0.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let f = drift_with_obstacle();
        let p = TorusPoint::new(x, y);
        // t + 3 - 3 differs from t by rounding only
        prop_assert!((f.eval(t, &p) - f.eval(t + 3.0, &p)).norm() < 1e-9);
    }

    #[test]
    fn rescaled_blocks_vanish_outside_their_ball(k in 1i32..8, t in 0.0f64..1.0, a in 0.0f64..std::f64::consts::TAU, s in 1.0001f64..20.0) {
        let eps = 2f64.powi(-k);
        let f = build_horseshoe_block(2, eps, None).unwrap();
        let r = (eps * s).min(1.0);
        prop_assume!(r > eps);
        prop_assert_eq!(f.eval(t, &TorusPoint::new(r * a.cos(), r * a.sin())), Vec2::ZERO);
    }
}
