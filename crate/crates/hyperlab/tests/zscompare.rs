use hyperlab::foliation::{trace_full, SliceOptions};
use hyperlab::geodesic::{Direction, GeodesicRecord, TraceOptions};
use hyperlab::metric::{metric_at, Coordinates4, MetricModel};
use hyperlab::quadrature::SphereQuadrature;
use hyperlab::zscompare::{
    cone_sphere_geometry, duhat, l_s, radial_comparison_series, schw_optical, transport_residuals_zs, varpi_at,
    zone_radius, ZsError,
};
use proptest::prelude::*;

fn offset() -> Coordinates4 {
    Coordinates4::new(0.0, 0.2, 0.0, 0.0)
}

fn lapse(mass: f64, r: f64) -> f64 {
    ((r - 2.0 * mass) / (r + 2.0 * mass)).sqrt()
}

fn record(model: &MetricModel, origin: Coordinates4, zeta: f64, rhos: &[f64]) -> GeodesicRecord {
    trace_full(model, &origin, &Direction::new(zeta, [0.48, 0.6, 0.64]).unwrap(), rhos, &TraceOptions::default()).unwrap()
}

#[test]
fn optical_function_values() {
    let o = schw_optical(0.05, 10.0, 5.0).unwrap();
    assert!((o.uhat - 4.6821530).abs() < 1e-7);
    assert!((o.uhat - (5.0 - 0.2 * 4.9f64.ln())).abs() < 1e-14);
    assert_eq!(o.lhat, [1.0, 4.9 / 5.1]);
    for (t, r) in [(3.0, 2.0), (0.0, 0.5)] {
        assert_eq!(schw_optical(0.0, t, r).unwrap().uhat, t - r);
    }
    assert!(matches!(schw_optical(0.05, 1.0, 0.1), Err(ZsError::Horizon { .. })));
}

#[test]
fn varpi_in_symmetric_configurations() {
    let flat = MetricModel::minkowski();
    let rec = record(&flat, Coordinates4::default(), 0.8, &[2.0, 7.0]);
    for rho in [2.0, 7.0] {
        let v = varpi_at(&flat, &rec, rho).unwrap();
        assert!((v.varpi - 1.0).abs() < 1e-12 && v.sigma_n.amax() < 1e-12);
    }

    // centred glued model with M = 0.05: find the sample at r = 5 by secant in ρ
    let m = MetricModel::glued_default(0.05).unwrap();
    let zeta = 0.5;
    let r_of = |rho: f64| record(&m, Coordinates4::default(), zeta, &[rho]).samples[0].x.r();
    let (mut a, mut b) = (9.0, 10.0);
    let (mut fa, mut fb) = (r_of(a) - 5.0, r_of(b) - 5.0);
    for _ in 0..30 {
        if fb.abs() < 1e-12 {
            break;
        }
        let c = b - fb * (b - a) / (fb - fa);
        (a, fa) = (b, fb);
        b = c;
        fb = r_of(b) - 5.0;
    }
    let rec = record(&m, Coordinates4::default(), zeta, &[b]);
    assert!((rec.samples[0].x.r() - 5.0).abs() < 1e-10);
    let v = varpi_at(&m, &rec, b).unwrap();
    // n(5) = √(4.9/5.1) = 0.98019606
    assert!((v.varpi - 0.98019606).abs() < 1e-8, "{}", v.varpi);
    assert!((v.varpi - lapse(0.05, 5.0)).abs() < 1e-8);
    assert!(v.snr.norm() < 1e-8);

    // near the apex the frames degenerate
    let apex = record(&m, Coordinates4::default(), 0.0, &[3.0]);
    assert!(matches!(varpi_at(&m, &apex, 3.0), Err(ZsError::CentralLineDegenerate(_))));
}

#[test]
fn varpi_identity_off_centre() {
    let m = MetricModel::glued_default(0.01).unwrap();
    let rhos: Vec<f64> = (4..=16).map(|i| i as f64).collect();
    let rec = record(&m, offset(), 0.9, &rhos);
    let mut zone = 0;
    for &rho in &rhos {
        let v = varpi_at(&m, &rec, rho).unwrap();
        if rec.sample_at(rho).unwrap().x.r() < zone_radius(&m) {
            continue;
        }
        zone += 1;
        assert!(v.n - v.varpi >= -1e-8, "rho {rho}");
        assert!(v.identity_residual.abs() <= 1e-8, "rho {rho}: {}", v.identity_residual);
        assert!(v.snr.norm() > 0.0);
    }
    assert!(zone >= 8);
}

#[test]
fn optical_differential_is_null_and_generated_by_l_s() {
    let m = MetricModel::schwarzschild(0.05).unwrap();
    for x in [Coordinates4::new(1.0, 3.0, -1.0, 2.0), Coordinates4::new(0.0, 0.3, 0.2, 0.1)] {
        let jet = metric_at(&m, &x, 0).unwrap();
        let du = duhat(&m, &x).unwrap();
        let ls = l_s(&m, &x).unwrap();
        assert!((du.transpose() * jet.g_inv * du)[0].abs() < 1e-12);
        assert!((ls.transpose() * jet.g * ls)[0].abs() < 1e-12);
        // ∇û is past-directed and parallel to L^s
        let grad = jet.g_inv * du;
        let c = grad[0] / ls[0];
        assert!(c < 0.0 && (grad - ls * c).amax() < 1e-12 * grad.amax());
    }
}

#[test]
fn comparison_series_in_flat_and_centred_models() {
    let rhos: Vec<f64> = (5..=40).map(|i| i as f64).collect();
    let flat = MetricModel::minkowski();
    let s = radial_comparison_series(&flat, &record(&flat, Coordinates4::default(), 1.5, &rhos)).unwrap();
    assert_eq!(s.rows.len(), rhos.len());
    for r in &s.rows {
        assert!(r.n_minus_varpi.abs() < 1e-12 && r.u_minus_uhat.abs() < 1e-9 && r.rt_over_r_minus_ninv.abs() < 1e-12);
    }

    let m = MetricModel::glued_default(0.01).unwrap();
    let s = radial_comparison_series(&m, &record(&m, Coordinates4::default(), 1.5, &rhos)).unwrap();
    assert!(s.rows.windows(2).all(|w| w[0].rho < w[1].rho));
    for r in &s.rows {
        assert!(r.n_minus_varpi.abs() <= 1e-8 && r.snr_norm <= 1e-8);
        assert!(r.u > 0.0 && r.b_duhat > 0.0);
    }
    assert_eq!(s.tails.len(), 2);
}

#[test]
fn offset_comparison_tail_behaviour() {
    // ζ = 2 reaches t = 200 at ρ ≈ 53
    let m = MetricModel::glued_default(0.01).unwrap();
    let rhos: Vec<f64> = (4..=110).map(|i| i as f64 * 0.5).collect();
    let s = radial_comparison_series(&m, &record(&m, offset(), 2.0, &rhos)).unwrap();
    let window: Vec<_> = s.rows.iter().filter(|r| r.t >= 10.0 && r.t <= 200.0).collect();
    assert!(window.len() > 50);
    for r in &s.rows {
        assert!(r.n_minus_varpi >= -1e-8 && r.u > 0.0 && r.b_duhat > 0.0);
    }
    let first = window[0].u_minus_uhat.abs();
    let sup = window.iter().map(|r| r.u_minus_uhat.abs()).fold(0.0, f64::max);
    assert!(sup - first <= 0.05);
    // t·|r̃/r − n⁻¹| stays within twice its value near t = 20
    let at20 = window.iter().min_by(|a, b| (a.t - 20.0).abs().total_cmp(&(b.t - 20.0).abs())).unwrap();
    let ref20 = at20.t * at20.rt_over_r_minus_ninv.abs();
    for r in window.iter().filter(|r| r.t >= 20.0) {
        assert!(r.t * r.rt_over_r_minus_ninv.abs() <= 2.0 * ref20, "t {}", r.t);
    }
}

#[test]
fn zone_transport_identities() {
    let rhos: Vec<f64> = (10..=80).map(|i| i as f64 * 0.25).collect();
    let flat = MetricModel::minkowski();
    let z = transport_residuals_zs(&flat, &record(&flat, Coordinates4::default(), 1.2, &rhos), &TraceOptions::default())
        .unwrap();
    assert!(z.bvarpi.samples > 0 && z.bvarpi.max_abs <= 1e-9 && z.cmr_1.max_abs <= 1e-9, "{z:?}");

    let m = MetricModel::glued_default(0.01).unwrap();
    let z = transport_residuals_zs(&m, &record(&m, Coordinates4::default(), 1.2, &rhos), &TraceOptions::default()).unwrap();
    assert!(z.bvarpi.max_abs <= 1e-7 && z.cmr_1.max_abs <= 1e-7, "{z:?}");
    let z = transport_residuals_zs(&m, &record(&m, offset(), 1.2, &rhos), &TraceOptions::default()).unwrap();
    assert!(z.bvarpi.samples > 20);
    assert!(z.bvarpi.max_rel <= 1e-5 && z.cmr_1.max_rel <= 1e-5, "{z:?}");
}

#[test]
fn cone_sphere_curvature_near_r5() {
    let m = MetricModel::glued_default(0.05).unwrap();
    let opts = SliceOptions::default();
    // û whose sphere on H_10 sits at r = 5, by secant from the flat estimate
    // (ζ = asinh ½, t = √125)
    let r_of = |u: f64| {
        let one = SphereQuadrature::single([0.0, 0.0, 1.0]);
        cone_sphere_geometry(&m, &Coordinates4::default(), 10.0, u, &one, &opts).unwrap().nodes[0].r - 5.0
    };
    let (mut a, mut b) = (125f64.sqrt() - (5.0 + 0.2 * 4.9f64.ln()), 5.5);
    let (mut fa, mut fb) = (r_of(a), r_of(b));
    for _ in 0..20 {
        if fb.abs() < 1e-9 {
            break;
        }
        let c = b - fb * (b - a) / (fb - fa);
        (a, fa) = (b, fb);
        b = c;
        fb = r_of(b);
    }
    let uhat = b;
    let q = SphereQuadrature::product(4, 8, [0.0, 0.0, 1.0]);
    let rep = cone_sphere_geometry(&m, &Coordinates4::default(), 10.0, uhat, &q, &SliceOptions::default()).unwrap();
    let r = rep.nodes[0].r;
    assert!((r - 5.0).abs() < 1e-6, "r = {r}");
    // n²/(r+2M)² at r = 5 is 0.96078·0.0384468 = 0.036939
    assert!((rep.k_sphere / 0.036939 - 1.0).abs() <= 0.05, "K = {}", rep.k_sphere);
    assert!(rep.k_rel_dev <= 0.05);
    assert!(rep.dag_a_rel_diff <= 1e-7);
    for nd in &rep.nodes {
        assert!(nd.dag_a > 0.0 && nd.chihat_ratio <= 1e-6);
    }
    assert!(rep.osc_t >= 0.0 && rep.t_min <= rep.t_bar && rep.t_bar <= rep.t_max);
    assert!((rep.diam_bound - r).abs() < 1e-6);
}

#[test]
fn cone_sphere_offset_and_zone_exit() {
    let m = MetricModel::glued_default(0.01).unwrap();
    let q = SphereQuadrature::product(4, 8, [0.0, 0.0, 1.0]);
    let rep = cone_sphere_geometry(&m, &offset(), 10.0, 3.0, &q, &SliceOptions::default()).unwrap();
    assert!(rep.dag_a_rel_diff <= 1e-7);
    assert!(rep.osc_t > 1e-6, "an offset origin tilts the sphere");
    assert!(rep.nodes.iter().all(|n| n.dag_a > 0.0));
    // flat estimate r = 3 sinh(ln 1.5) = 1.25, inside the blend annulus
    let err = cone_sphere_geometry(&m, &Coordinates4::default(), 3.0, 2.0, &q, &SliceOptions::default()).unwrap_err();
    assert!(matches!(err, ZsError::SphereExitsZone { .. }), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn n_dominates_varpi(
        ox in -0.3..0.3f64, oy in -0.3..0.3f64,
        zeta in 0.6..2.5f64,
        th in 0.1..3.0f64, ph in 0.0..6.2f64,
    ) {
        let m = MetricModel::glued_default(0.01).unwrap();
        let dir = Direction::new(zeta, [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]).unwrap();
        let rhos: Vec<f64> = (2..=12).map(|i| i as f64 * 2.0).collect();
        let rec = trace_full(&m, &Coordinates4::new(0.0, ox, oy, 0.0), &dir, &rhos, &TraceOptions::default()).unwrap();
        for r in radial_comparison_series(&m, &rec).unwrap().rows {
            prop_assert!(r.n_minus_varpi >= -1e-8);
            prop_assert!(r.u > 0.0);
        }
    }
}
