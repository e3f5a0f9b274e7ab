use hyperlab::geodesic::{
    boost_diagnostics, exp_map, fan_build, jacobi_boosts, norm_residual, trace, Direction, TraceMode, TraceOptions,
};
use hyperlab::metric::{metric_at, Coordinates4, MetricModel};
use proptest::prelude::*;

/// Fixed-step 4-stage Gauss–Legendre collocation (order 8) for the geodesic
/// equation, with the stage equations solved by fixed-point iteration.
fn gauss8_geodesic(model: &MetricModel, x0: [f64; 4], v0: [f64; 4], rho: f64, steps: usize) -> [f64; 8] {
    let gl_x = [-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526];
    let gl_w = [0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538];
    let c: Vec<f64> = gl_x.iter().map(|x| 0.5 * (x + 1.0)).collect();
    // Lagrange basis on the nodes, integrated exactly with the same rule
    let ell = |j: usize, t: f64| {
        (0..4).filter(|&m| m != j).map(|m| (t - c[m]) / (c[j] - c[m])).product::<f64>()
    };
    let integral = |j: usize, upper: f64| -> f64 {
        (0..4).map(|k| 0.5 * upper * gl_w[k] * ell(j, 0.5 * upper * (gl_x[k] + 1.0))).sum()
    };
    let a: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| integral(j, c[i])).collect()).collect();
    let b: Vec<f64> = (0..4).map(|j| integral(j, 1.0)).collect();

    let f = |y: &[f64; 8]| -> [f64; 8] {
        let jet = metric_at(model, &Coordinates4::new(y[0], y[1], y[2], y[3]), 1).unwrap();
        let mut d = [0.0; 8];
        for mu in 0..4 {
            d[mu] = y[4 + mu];
            let mut acc = 0.0;
            for al in 0..4 {
                for be in 0..4 {
                    acc -= jet.gamma[mu][al][be] * y[4 + al] * y[4 + be];
                }
            }
            d[4 + mu] = acc;
        }
        d
    };

    let h = rho / steps as f64;
    let mut y = [x0[0], x0[1], x0[2], x0[3], v0[0], v0[1], v0[2], v0[3]];
    for _ in 0..steps {
        let mut k = [f(&y); 4];
        for _ in 0..60 {
            let mut next = k;
            let mut change: f64 = 0.0;
            for i in 0..4 {
                let mut yi = y;
                for j in 0..4 {
                    for n in 0..8 {
                        yi[n] += h * a[i][j] * k[j][n];
                    }
                }
                next[i] = f(&yi);
                for n in 0..8 {
                    change = change.max((next[i][n] - k[i][n]).abs());
                }
            }
            k = next;
            if change < 1e-15 {
                break;
            }
        }
        for n in 0..8 {
            y[n] += h * (0..4).map(|j| b[j] * k[j][n]).sum::<f64>();
        }
    }
    y
}

fn boosted(dir: &Direction, axis: usize, s: f64) -> Direction {
    let mut v = dir.frame_velocity();
    let (c, sh) = (s.cosh(), s.sinh());
    let (v0, vi) = (v[0], v[axis + 1]);
    v[0] = c * v0 + sh * vi;
    v[axis + 1] = sh * v0 + c * vi;
    let sp = [v[1], v[2], v[3]];
    let norm = (sp[0] * sp[0] + sp[1] * sp[1] + sp[2] * sp[2]).sqrt();
    Direction::new(norm.asinh(), sp).unwrap()
}

#[test]
fn minkowski_examples() {
    let m = MetricModel::minkowski();
    let o = Coordinates4::default();
    let rest = exp_map(&m, &o, &Direction::new(0.0, [0.0, 0.0, 1.0]).unwrap(), &[2.5], 1e-10).unwrap();
    let s = rest.last().unwrap();
    assert_eq!([s.x.t, s.x.x1, s.x.x2, s.x.x3], [2.5, 0.0, 0.0, 0.0]);
    assert_eq!(s.b[0], 1.0);

    let rec = trace(&m, &o, &Direction::new(0.5, [1.0, 0.0, 0.0]).unwrap(), &[3.0], TraceMode::Jacobi, &TraceOptions::default())
        .unwrap();
    let s = rec.last().unwrap();
    // published to seven places; the exact values are 3 cosh ½ and 3 sinh ½
    let (c, sh) = (0.5f64.cosh(), 0.5f64.sinh());
    assert!((s.x.t - 3.3828780).abs() < 2e-7 && (s.x.x1 - 1.5632859).abs() < 2e-7);
    assert!((s.x.t - 3.0 * c).abs() < 1e-12 && (s.x.x1 - 3.0 * sh).abs() < 1e-12);
    assert!((s.b[0] - 1.1276260).abs() < 1e-7 && (s.b[1] - 0.5210953).abs() < 1e-7);
    assert!((s.j[0][0] - 3.0 * sh).abs() < 1e-12 && (s.j[0][1] - 3.0 * c).abs() < 1e-12);
    assert!(s.j[0][2].abs() < 1e-12 && s.j[0][3].abs() < 1e-12);
}

#[test]
fn minkowski_fan_is_closed_form() {
    let m = MetricModel::minkowski();
    let mut opts = TraceOptions::default();
    // exercise the integrator, not the closed-form seeding
    opts.analytic_core = false;
    let rhos: Vec<f64> = (1..=10).map(|i| 10.0 * i as f64).collect();
    let fan = fan_build(&m, &Coordinates4::default(), &[0.5, 1.5, 3.0], &[0.7, 2.2], &[0.0, 2.0, 4.0], &rhos, TraceMode::Geodesic, &opts)
        .unwrap();
    assert_eq!(fan.records.len(), 18);
    for rec in &fan.records {
        let v = rec.direction.frame_velocity();
        for s in &rec.samples {
            let x = s.x.to_vec();
            for mu in 0..4 {
                assert!((x[mu] - s.rho * v[mu]).abs() <= 1e-10 * s.rho, "{} vs {}", x[mu], s.rho * v[mu]);
            }
        }
    }
}

#[test]
fn glued_endpoint_matches_gauss_oracle() {
    let m = MetricModel::glued_default(0.01).unwrap();
    let o = Coordinates4::default();
    let dir = Direction::new(0.5, [0.36, -0.48, 0.8]).unwrap();
    let rec = exp_map(&m, &o, &dir, &[30.0], 1e-12).unwrap();
    let s = rec.last().unwrap();
    let v = dir.frame_velocity();
    let oracle = gauss8_geodesic(&m, [0.0; 4], v, 30.0, 4800);
    let got = [s.x.t, s.x.x1, s.x.x2, s.x.x3, s.b[0], s.b[1], s.b[2], s.b[3]];
    for n in 0..8 {
        assert!((got[n] - oracle[n]).abs() < 1e-8, "component {n}: {} vs {}", got[n], oracle[n]);
    }
    // the mass bends the path measurably, so the oracle is not trivially flat
    assert!((s.x.t - 30.0 * v[0]).abs() > 1e-4);
}

#[test]
fn jacobi_fields_match_neighbor_geodesics() {
    let m = MetricModel::glued_default(0.01).unwrap();
    let o = Coordinates4::new(0.0, 0.2, 0.0, 0.0);
    let tol = 1e-12;
    for (zeta, omega) in [(1.0, [0.3, 0.8, 0.52]), (0.4, [-0.5, 0.1, -0.8])] {
        let dir = Direction::new(zeta, omega).unwrap();
        let rhos = [5.0, 15.0];
        let base = exp_map(&m, &o, &dir, &rhos, tol).unwrap();
        let rec = jacobi_boosts(&m, &base, tol).unwrap();
        let h = 1e-5;
        for axis in 0..3 {
            let p = exp_map(&m, &o, &boosted(&dir, axis, h), &rhos, tol).unwrap();
            let q = exp_map(&m, &o, &boosted(&dir, axis, -h), &rhos, tol).unwrap();
            for (k, s) in rec.samples.iter().enumerate() {
                let fd = (p.samples[k].x.to_vec() - q.samples[k].x.to_vec()) / (2.0 * h);
                let rel = (fd - s.j[axis]).amax() / s.j[axis].amax();
                assert!(rel < 1e-4, "J{axis} at rho {}: rel {rel:e}", s.rho);
            }
        }
    }
}

#[test]
fn centred_fan_is_spherically_symmetric() {
    let m = MetricModel::glued_default(0.01).unwrap();
    let rhos = [2.0, 10.0, 40.0];
    // different directions take different step sequences, so the comparison
    // needs a tolerance well below the 1e-10 being checked
    let fan = fan_build(&m, &Coordinates4::default(), &[0.8, 2.0], &[0.3, 1.5, 2.9], &[0.0, 2.5, 5.0], &rhos, TraceMode::Geodesic, &TraceOptions::with_tol(1e-13))
        .unwrap();
    for iz in 0..2 {
        let reference = fan.record(iz, 0);
        for io in 1..fan.n_omega() {
            for (a, b) in reference.samples.iter().zip(&fan.record(iz, io).samples) {
                assert!((a.x.t - b.x.t).abs() < 1e-10 * a.x.t);
                assert!((a.x.r() - b.x.r()).abs() < 1e-10 * a.x.r());
            }
        }
    }
}

#[test]
fn offset_geodesics_stay_in_their_plane() {
    // the plane through the centre containing the offset and ω is invariant
    let m = MetricModel::glued_default(0.01).unwrap();
    let o = Coordinates4::new(0.0, 0.2, 0.0, 0.0);
    let rhos: Vec<f64> = (1..=20).map(|i| 2.0 * i as f64).collect();
    let rec = exp_map(&m, &o, &Direction::new(1.5, [0.3, 0.0, 0.95]).unwrap(), &rhos, 1e-10).unwrap();
    assert!(rec.samples.iter().any(|s| s.x.r() > 5.0));
    for s in &rec.samples {
        assert!(s.x.x2.abs() < 1e-8 && s.b[2].abs() < 1e-8);
    }
}

#[test]
fn fan_is_independent_of_thread_count() {
    let m = MetricModel::glued_default(0.01).unwrap();
    let o = Coordinates4::new(0.0, 0.2, 0.0, 0.0);
    let build = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            fan_build(&m, &o, &[0.5, 1.5], &[0.4, 1.9], &[1.0, 3.0, 5.0], &[3.0, 9.0], TraceMode::Full, &TraceOptions::default())
                .unwrap()
        })
    };
    assert_eq!(build(1), build(3));
}

#[test]
fn fan_rejects_bad_grids() {
    let m = MetricModel::minkowski();
    let o = Coordinates4::default();
    let opts = TraceOptions::default();
    assert!(fan_build(&m, &o, &[1.0, 0.5], &[1.0], &[0.0], &[1.0], TraceMode::Geodesic, &opts).is_err());
    assert!(fan_build(&m, &o, &[], &[1.0], &[0.0], &[1.0], TraceMode::Geodesic, &opts).is_err());
    assert!(exp_map(&m, &o, &Direction::new(1.0, [1.0, 0.0, 0.0]).unwrap(), &[2.0, 1.0], 1e-10).is_err());
    assert!(Direction::new(-1.0, [1.0, 0.0, 0.0]).is_err());
    assert!(Direction::new(1.0, [0.0, 0.0, 0.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn direction_lies_on_hyperboloid(zeta in 0.0..6.0f64, th in 0.0..3.14f64, ph in 0.0..6.28f64) {
        let v = Direction::from_angles(zeta, th, ph).unwrap().frame_velocity();
        let q = v[0] * v[0] - v[1] * v[1] - v[2] * v[2] - v[3] * v[3];
        prop_assert!((q - 1.0).abs() <= 1e-14 * v[0] * v[0]);
    }

    #[test]
    fn glued_offset_records_keep_invariants(zeta in 0.0..2.5f64, th in 0.0..3.14f64, ph in 0.0..6.28f64) {
        let m = MetricModel::glued_default(0.01).unwrap();
        let o = Coordinates4::new(0.0, 0.2, 0.0, 0.0);
        let tol = 1e-10;
        let rhos: Vec<f64> = (1..=6).map(|i| 4.0 * i as f64).collect();
        let dir = Direction::from_angles(zeta, th, ph).unwrap();
        let rec = trace(&m, &o, &dir, &rhos, TraceMode::Jacobi, &TraceOptions::with_tol(tol)).unwrap();
        prop_assert!(norm_residual(&m, &rec).unwrap() <= 10.0 * tol);
        for d in boost_diagnostics(&m, &rec).unwrap() {
            prop_assert!(d.tangency <= 10.0 * tol * d.rho.max(1.0));
            prop_assert!(d.pi_bb <= 2e-8);
            prop_assert!(d.gram_asymmetry <= 1e-7 * d.gram_scale);
        }
    }
}
