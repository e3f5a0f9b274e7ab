use hyperlab::foliation::{frames_at, trace_full, FrameSet};
use hyperlab::geodesic::{static_frame, Direction, TraceOptions};
use hyperlab::metric::{curvature_at, metric_at, schouten_scalar_field, Coordinates4, MetricModel, KG_MASS};
use hyperlab::nullgeom::{
    bel_robinson_scalar, coordinate_sphere, duality_residual, em_decompose, hat_tetrad, null_decompose,
    schwarzschild_closed_forms, varrho_consistency, weyl_current, NullGeomError, NullTetrad, Observer, WeylNull,
};
use hyperlab::tensor::{Mat4, Vec4};
use nalgebra::Matrix2;
use proptest::prelude::*;

fn point(r: f64) -> Coordinates4 {
    // off every coordinate axis
    Coordinates4::new(0.3, r / 3.0, 2.0 * r / 3.0, 2.0 * r / 3.0)
}

/// Null tetrad of an observer boosted by rapidity `chi` along the first
/// angular direction of the static frame.
fn generic_tetrad(model: &MetricModel, x: &Coordinates4, chi: f64) -> NullTetrad {
    let hat = hat_tetrad(model, x).unwrap();
    let t = (hat.e4 + hat.e3) * 0.5;
    let n = (hat.e4 - hat.e3) * 0.5;
    let [e1, e2] = hat.ea;
    let (c, s) = (chi.cosh(), chi.sinh());
    let tb = t * c + e1 * s;
    let e1b = t * s + e1 * c;
    NullTetrad { e4: tb + n, e3: tb - n, ea: [e1b, e2] }
}

fn frame_set(t: Vec4, n: Vec4, ea: [Vec4; 2], chi: f64) -> FrameSet {
    let (c, s) = (chi.cosh(), chi.sinh());
    FrameSet { t, n, b: t * c + n * s, nbar: t * s + n * c, l: t + n, lb: t - n, ea }
}

fn max_diff(a: &WeylNull, b: &WeylNull) -> f64 {
    (a.alpha - b.alpha)
        .amax()
        .max((a.beta - b.beta).amax())
        .max((a.varrho - b.varrho).abs())
        .max((a.sigma - b.sigma).abs())
        .max((a.betab - b.betab).amax())
        .max((a.alphab - b.alphab).amax())
}

#[test]
fn flat_weyl_decomposes_to_zero() {
    let m = MetricModel::minkowski();
    let x = point(4.0);
    let jet = curvature_at(&m, &x).unwrap();
    let w = null_decompose(&jet, &generic_tetrad(&m, &x, 0.7)).unwrap();
    assert_eq!(w.max_non_varrho(), 0.0);
    assert_eq!(w.varrho, 0.0);
}

#[test]
fn hat_tetrad_is_canonical() {
    let m = MetricModel::glued_default(0.05).unwrap();
    for r in [2.5, 5.0, 30.0] {
        let x = point(r);
        let g = metric_at(&m, &x, 0).unwrap().g;
        assert!(hat_tetrad(&m, &x).unwrap().residual(&g) <= 1e-12);
        assert!(generic_tetrad(&m, &x, 0.9).residual(&g) <= 1e-12);
    }
    assert!(matches!(hat_tetrad(&m, &point(1.5)), Err(NullGeomError::OutsideZs { .. })));
}

#[test]
fn schwarzschild_closed_form_values() {
    let cf = schwarzschild_closed_forms(0.05, 5.0).unwrap();
    // published 7–8 digit values; the n⁻⁴ϱ̂ literal is a rounding of −0.2/5.1³
    assert!((cf.varrho_hat_n4 + 0.001507712).abs() < 5e-9);
    assert!((cf.varrho_hat_n4 + 0.2 / 5.1f64.powi(3)).abs() < 1e-15);
    assert!((cf.trchi_s - 0.39215686).abs() < 1e-8);
    assert!((cf.trchib_s + 0.39215686).abs() < 1e-8);
    assert!((cf.k_sphere - 0.03844675).abs() < 1e-8);
    assert!((cf.gamma_r - 5.3178470).abs() < 1e-7);

    let flat = schwarzschild_closed_forms(0.0, 3.0).unwrap();
    assert_eq!((flat.varrho_hat_n4, flat.trchi_s, flat.trchib_s), (0.0, 2.0 / 3.0, -2.0 / 3.0));
    assert!((flat.k_sphere - 1.0 / 9.0).abs() < 1e-16);
    assert_eq!(flat.gamma_r, 3.0);

    for r in [0.1, 0.05] {
        assert!(matches!(schwarzschild_closed_forms(0.05, r), Err(NullGeomError::Horizon { .. })));
    }
}

#[test]
fn hat_tetrad_sees_only_varrho() {
    for model in [MetricModel::schwarzschild(0.05).unwrap(), MetricModel::glued_default(0.05).unwrap()] {
        for r in [3.0, 5.0, 10.0] {
            let x = point(r);
            let jet = curvature_at(&model, &x).unwrap();
            let w = null_decompose(&jet, &hat_tetrad(&model, &x).unwrap()).unwrap();
            let cf = schwarzschild_closed_forms(0.05, r).unwrap();
            assert!(w.max_non_varrho() <= 1e-6 * w.varrho.abs());
            assert!((w.varrho / cf.varrho_hat_n4 - 1.0).abs() < 1e-8, "r = {r}");
        }
    }
}

#[test]
fn gauss_equation_on_coordinate_spheres() {
    let m = MetricModel::glued_default(0.05).unwrap();
    for r in [3.0, 7.0] {
        let cs = coordinate_sphere(&m, &point(r)).unwrap();
        let cf = schwarzschild_closed_forms(0.05, r).unwrap();
        assert!((cs.gauss.k_gauss - cf.k_sphere).abs() < 1e-8, "r = {r}");
        assert!((cs.trchi_s - cf.trchi_s).abs() < 1e-8);
        assert!((cs.varrho_hat_n4 - cf.varrho_hat_n4).abs() < 1e-12);
    }
}

#[test]
fn spin_rotation_of_components() {
    let m = MetricModel::schwarzschild(0.05).unwrap();
    let x = point(4.0);
    let jet = curvature_at(&m, &x).unwrap();
    let tet = generic_tetrad(&m, &x, 0.8);
    let w = null_decompose(&jet, &tet).unwrap();
    assert!(w.alpha.amax() > 1e-4, "the boosted observer must see radiation-type components");
    let th = std::f64::consts::FRAC_PI_4;
    let wr = null_decompose(&jet, &tet.rotated(th)).unwrap();
    let (s, c) = th.sin_cos();
    let rot = Matrix2::new(c, s, -s, c);
    assert!((wr.alpha - rot * w.alpha * rot.transpose()).amax() <= 1e-9);
    assert!((wr.alphab - rot * w.alphab * rot.transpose()).amax() <= 1e-9);
    assert!((wr.beta - rot * w.beta).amax() <= 1e-9);
    assert!((wr.betab - rot * w.betab).amax() <= 1e-9);
    assert!((wr.varrho - w.varrho).abs() <= 1e-12 && (wr.sigma - w.sigma).abs() <= 1e-12);
    // a half turn fixes the spin-2 parts and negates the spin-1 parts
    let half = null_decompose(&jet, &tet.rotated(std::f64::consts::PI)).unwrap();
    assert!(max_diff(&half, &WeylNull { beta: -w.beta, betab: -w.betab, ..w }) <= 1e-9);
}

#[test]
fn boost_weights_of_components() {
    let m = MetricModel::glued_default(0.05).unwrap();
    let x = point(6.0);
    let jet = curvature_at(&m, &x).unwrap();
    let tet = generic_tetrad(&m, &x, 0.5);
    let w = null_decompose(&jet, &tet).unwrap();
    let l = 1.7;
    let wb = null_decompose(&jet, &tet.boosted(l)).unwrap();
    let want = WeylNull {
        alpha: w.alpha * (l * l),
        beta: w.beta * l,
        varrho: w.varrho,
        sigma: w.sigma,
        betab: w.betab / l,
        alphab: w.alphab / (l * l),
    };
    assert!(max_diff(&wb, &want) <= 1e-12);
    // trace-free parts
    assert!(w.alpha.trace().abs() <= 1e-9 * w.alpha.amax() && w.alphab.trace().abs() <= 1e-9 * w.alphab.amax());
}

#[test]
fn left_and_right_duals_agree() {
    for (model, r) in [
        (MetricModel::schwarzschild(0.05).unwrap(), 0.4),
        (MetricModel::schwarzschild(0.05).unwrap(), 5.0),
        (MetricModel::glued_default(0.05).unwrap(), 1.5),
        (MetricModel::glued_default(0.05).unwrap(), 12.0),
    ] {
        let jet = curvature_at(&model, &point(r)).unwrap();
        assert!(duality_residual(&jet.weyl, &jet.g, &jet.g_inv) <= 1e-8, "r = {r}");
    }
}

#[test]
fn electric_part_of_static_observer() {
    let m = MetricModel::glued_default(0.05).unwrap();
    let x = point(5.0);
    let jet = curvature_at(&m, &x).unwrap();
    let hat = hat_tetrad(&m, &x).unwrap();
    let t = (hat.e4 + hat.e3) * 0.5;
    let n = (hat.e4 - hat.e3) * 0.5;
    let fs = frame_set(t, n, hat.ea, 0.6);
    let em = em_decompose(&jet, &fs, Observer::T).unwrap();
    let varrho = schwarzschild_closed_forms(0.05, 5.0).unwrap().varrho_hat_n4;
    let want = nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(varrho, -0.5 * varrho, -0.5 * varrho));
    assert!((em.e - want).amax() <= 1e-10 * varrho.abs());
    assert!(em.h.amax() <= 1e-10 * varrho.abs());
    // Q(U,U,U,U) = |E|² + |H|² for either observer
    for (which, u) in [(Observer::T, fs.t), (Observer::B, fs.b)] {
        let em = em_decompose(&jet, &fs, which).unwrap();
        assert!(em.trace_residual() <= 1e-12 && em.symmetry_residual() <= 1e-12);
        let q = bel_robinson_scalar(&jet.weyl, &jet.g, &jet.g_inv, &u, &u, &u, &u);
        assert!((q / em.energy() - 1.0).abs() <= 1e-10, "{which:?}");
    }
    // a radial boost keeps both principal null directions, so E and H are unchanged
    let eb = em_decompose(&jet, &fs, Observer::B).unwrap();
    assert!((eb.e - em.e).amax() <= 1e-10 * varrho.abs() && eb.h.amax() <= 1e-10 * varrho.abs());
    let mut bad = fs;
    bad.t *= 1.01;
    assert!(matches!(em_decompose(&jet, &bad, Observer::T), Err(NullGeomError::BadFrame(_))));
}

#[test]
fn bel_robinson_energy_of_static_observer() {
    // Q(T,T,T,T) = 6 m² / R⁶ with ADM mass m = 2M and area radius R = r + 2M
    let mass = 0.05;
    let m = MetricModel::schwarzschild(mass).unwrap();
    for r in [3.0, 8.0] {
        let x = point(r);
        let jet = curvature_at(&m, &x).unwrap();
        let t = static_frame(&m, &x).unwrap()[0];
        let q = bel_robinson_scalar(&jet.weyl, &jet.g, &jet.g_inv, &t, &t, &t, &t);
        let want = 6.0 * (2.0 * mass).powi(2) / (r + 2.0 * mass).powi(6);
        assert!((q / want - 1.0).abs() < 1e-9, "r = {r}: {q} vs {want}");
    }
}

#[test]
fn varrho_two_paths() {
    let opts = TraceOptions::default();
    let flat = MetricModel::minkowski();
    let rec = trace_full(&flat, &Coordinates4::new(0.0, 0.2, 0.0, 0.0), &Direction::new(1.0, [0.0, 0.6, 0.8]).unwrap(), &[5.0], &opts)
        .unwrap();
    let vc = varrho_consistency(&flat, &rec.samples[0].x, &frames_at(&flat, &rec, 5.0).unwrap()).unwrap();
    assert_eq!((vc.varrho_direct, vc.varrho_formula), (0.0, 0.0));

    let m = MetricModel::glued_default(0.01).unwrap();
    let rhos: Vec<f64> = (4..=12).map(|i| i as f64).collect();
    for (origin, tol) in [(Coordinates4::default(), 1e-8), (Coordinates4::new(0.0, 0.2, 0.0, 0.0), 1e-6)] {
        let rec = trace_full(&m, &origin, &Direction::new(1.0, [0.0, 0.6, 0.8]).unwrap(), &rhos, &opts).unwrap();
        let mut checked = 0;
        for s in rec.samples.iter().filter(|s| s.x.r() >= m.vacuum_radius()) {
            let vc = varrho_consistency(&m, &s.x, &frames_at(&m, &rec, s.rho).unwrap()).unwrap();
            assert!(vc.varrho_rel_diff() <= tol, "rho {}: {}", s.rho, vc.varrho_rel_diff());
            assert!(vc.betab_diff() <= tol * vc.varrho_hat_n4.abs(), "rho {}", s.rho);
            assert!(vc.varpi <= vc.n + 1e-12);
            checked += 1;
        }
        assert!(checked >= 5);
    }
}

/// `φ = cos t · exp(−|x|²/2)` with its gradient and Hessian.
fn gaussian(x: &Vec4) -> (f64, Vec4, Mat4) {
    let g = (-(x[1] * x[1] + x[2] * x[2] + x[3] * x[3]) / 2.0).exp();
    let (s, c) = x[0].sin_cos();
    let phi = c * g;
    let d = Vec4::new(-s * g, -x[1] * c * g, -x[2] * c * g, -x[3] * c * g);
    let mut h = Mat4::zeros();
    h[(0, 0)] = -c * g;
    for i in 1..4 {
        h[(0, i)] = x[i] * s * g;
        h[(i, 0)] = h[(0, i)];
        for j in 1..4 {
            h[(i, j)] = (x[i] * x[j] - if i == j { 1.0 } else { 0.0 }) * c * g;
        }
    }
    (phi, d, h)
}

#[test]
fn weyl_current_of_scalar_field() {
    let flat = MetricModel::minkowski();
    let eta = hyperlab::tensor::eta();
    for p in [Vec4::new(0.3, 0.5, -0.2, 0.1), Vec4::new(1.1, 0.0, 0.7, 0.4), Vec4::new(-0.4, 1.2, 0.3, -0.9)] {
        let at = |y: &Vec4| {
            let jet = metric_at(&flat, &Coordinates4::from_vec(y), 1).unwrap();
            let (phi, d, _) = gaussian(y);
            schouten_scalar_field(&jet, &d, phi)
        };
        let h = 1e-3;
        let ds: [Mat4; 4] = std::array::from_fn(|mu| {
            let e = Vec4::ith(mu, h);
            (at(&(p - e * 2.0)) - at(&(p - e)) * 8.0 + at(&(p + e)) * 8.0 - at(&(p + e * 2.0))) / (12.0 * h)
        });
        let jet = metric_at(&flat, &Coordinates4::from_vec(&p), 1).unwrap();
        let j = weyl_current(&at(&p), &ds, &jet.gamma);
        // symbolic ∂_c S_ab
        let (phi, d, hs) = gaussian(&p);
        let du = eta * d;
        let dsym = |c: usize, a: usize, b: usize| {
            let grad2_c = 2.0 * (0..4).map(|m| hs[(m, c)] * du[m]).sum::<f64>() - 2.0 * KG_MASS * phi * d[c];
            hs[(a, c)] * d[b] + d[a] * hs[(b, c)] - eta[(a, b)] * grad2_c / 6.0
        };
        for b in 0..4 {
            for c in 0..4 {
                for dd in 0..4 {
                    let want = 0.5 * (dsym(c, b, dd) - dsym(dd, b, c));
                    assert!((j[b][c][dd] - want).abs() <= 1e-6, "J_{b}{c}{dd}");
                }
            }
        }
    }
    // vacuum and constant fields
    let m = MetricModel::schwarzschild(0.05).unwrap();
    let jet = curvature_at(&m, &point(4.0)).unwrap();
    let zero = weyl_current(&jet.schouten, &[Mat4::zeros(); 4], &jet.gamma);
    assert!(zero.iter().flatten().flatten().all(|v| v.abs() <= 1e-12));
    let s = Mat4::from_fn(|a, b| (a + b) as f64 * 0.1);
    let flat_jet = metric_at(&flat, &point(4.0), 1).unwrap();
    let c = weyl_current(&s, &[Mat4::zeros(); 4], &flat_jet.gamma);
    assert!(c.iter().flatten().flatten().all(|v| *v == 0.0));
    // antisymmetric in the last pair even with connection terms
    let ds: [Mat4; 4] = std::array::from_fn(|mu| s * (mu as f64 + 1.0));
    let j = weyl_current(&s, &ds, &jet.gamma);
    for b in 0..4 {
        for c in 0..4 {
            for d in 0..4 {
                assert!((j[b][c][d] + j[b][d][c]).abs() <= 1e-14);
            }
        }
    }
}

/// Future-directed causal vector in the static frame at `x`.
fn future_causal(frame: &[Vec4; 4], v: [f64; 3], null: bool) -> Vec4 {
    let v2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let e0 = if null { v2.sqrt() } else { (1.0 + v2).sqrt() };
    frame[0] * e0 + frame[1] * v[0] + frame[2] * v[1] + frame[3] * v[2]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bel_robinson_is_nonnegative(
        glued in any::<bool>(),
        r in 0.5..20.0f64,
        vs in proptest::array::uniform4(proptest::array::uniform3(-3.0..3.0f64)),
        nulls in proptest::array::uniform4(any::<bool>()),
    ) {
        let model = if glued { MetricModel::glued_default(0.05).unwrap() } else { MetricModel::schwarzschild(0.05).unwrap() };
        let x = point(r);
        let frame = static_frame(&model, &x).unwrap();
        let jet = curvature_at(&model, &x).unwrap();
        let w: Vec<Vec4> = (0..4).map(|i| future_causal(&frame, vs[i], nulls[i])).collect();
        let q = bel_robinson_scalar(&jet.weyl, &jet.g, &jet.g_inv, &w[0], &w[1], &w[2], &w[3]);
        let scale = jet.weyl.iter().flatten().flatten().flatten().fold(0.0_f64, |a, b| a.max(b.abs()))
            * w.iter().map(|v| v.amax()).product::<f64>();
        prop_assert!(q >= -1e-12 * scale.max(1e-300), "Q = {q}");
    }
}
