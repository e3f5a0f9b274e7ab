use hyperlab::metric::{
    curvature_at, metric_at, riemann_symmetry_residual, weyl_trace_residual, Coordinates4, MetricError, MetricModel,
};
use proptest::prelude::*;

/// Independent metric: `−A dt² + Q dr² + P r² dΩ²` in Cartesian form, with
/// the glued model blending each of `A, P, Q` by the quintic smoothstep.
fn oracle_g(mass: f64, glue: Option<(f64, f64)>, x: [f64; 4]) -> [[f64; 4]; 4] {
    let r = (x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).sqrt();
    let (a, p, q) = {
        let a = (r - 2.0 * mass) / (r + 2.0 * mass);
        let p = ((r + 2.0 * mass) / r).powi(2);
        (a, p, 1.0 / a)
    };
    let s = match glue {
        None => 1.0,
        Some((r_in, r_out)) => {
            let u = ((r - r_in) / (r_out - r_in)).clamp(0.0, 1.0);
            u * u * u * (6.0 * u * u - 15.0 * u + 10.0)
        }
    };
    let (a, p, q) = (1.0 + s * (a - 1.0), 1.0 + s * (p - 1.0), 1.0 + s * (q - 1.0));
    let mut g = [[0.0; 4]; 4];
    g[0][0] = -a;
    for i in 1..4 {
        for j in 1..4 {
            g[i][j] = (q - p) * x[i] * x[j] / (r * r) + if i == j { p } else { 0.0 };
        }
    }
    g
}

/// Christoffel symbols from 4th-order central differences of `oracle_g`.
fn oracle_gamma(mass: f64, glue: Option<(f64, f64)>, x: [f64; 4]) -> [[[f64; 4]; 4]; 4] {
    let h = 1e-3;
    let mut dg = [[[0.0; 4]; 4]; 4];
    for mu in 1..4 {
        let at = |s: f64| {
            let mut y = x;
            y[mu] += s * h;
            oracle_g(mass, glue, y)
        };
        let (m2, m1, p1, p2) = (at(-2.0), at(-1.0), at(1.0), at(2.0));
        for a in 0..4 {
            for b in 0..4 {
                dg[mu][a][b] = (m2[a][b] - 8.0 * m1[a][b] + 8.0 * p1[a][b] - p2[a][b]) / (12.0 * h);
            }
        }
    }
    let g = nalgebra::Matrix4::from_fn(|i, j| oracle_g(mass, glue, x)[i][j]);
    let gi = g.try_inverse().unwrap();
    let mut gamma = [[[0.0; 4]; 4]; 4];
    for l in 0..4 {
        for m in 0..4 {
            for n in 0..4 {
                gamma[l][m][n] = (0..4)
                    .map(|s| 0.5 * gi[(l, s)] * (dg[m][s][n] + dg[n][s][m] - dg[s][m][n]))
                    .sum();
            }
        }
    }
    gamma
}

/// `R_{abcd} R^{abcd}`.
fn kretschmann(model: &MetricModel, x: &Coordinates4) -> f64 {
    let jet = curvature_at(model, x).unwrap();
    let gi = jet.g_inv;
    let r = &jet.riemann;
    let mut up = [[[[0.0; 4]; 4]; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let mut s = 0.0;
                    for p in 0..4 {
                        for q in 0..4 {
                            for u in 0..4 {
                                for v in 0..4 {
                                    let w = gi[(a, p)] * gi[(b, q)] * gi[(c, u)] * gi[(d, v)];
                                    if w != 0.0 {
                                        s += w * r[p][q][u][v];
                                    }
                                }
                            }
                        }
                    }
                    up[a][b][c][d] = s;
                }
            }
        }
    }
    let mut k = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    k += r[a][b][c][d] * up[a][b][c][d];
                }
            }
        }
    }
    k
}

fn point(r: f64, theta: f64, phi: f64) -> Coordinates4 {
    Coordinates4::new(0.7, r * theta.sin() * phi.cos(), r * theta.sin() * phi.sin(), r * theta.cos())
}

#[test]
fn schwarzschild_sample_values() {
    let m = MetricModel::schwarzschild(0.05).unwrap();
    let jet = metric_at(&m, &Coordinates4::new(0.0, 5.0, 0.0, 0.0), 1).unwrap();
    assert!((jet.g[(0, 0)] + 0.96078431).abs() < 1e-8);
    // on the x axis g_11 is the polar g_rr
    assert!((jet.g[(1, 1)] - 1.04081633).abs() < 1e-8);
    assert!((jet.gamma[1][0][0] - 0.003693904).abs() < 1e-9);
    // with e_θ = (0, 0, -r) and ∂²x/∂θ² = -x on the x axis,
    // Γ^r_θθ = r² Γ^x_zz - r
    let g_r_thth = 25.0 * jet.gamma[1][3][3] - 5.0;
    assert!((g_r_thth + 4.9).abs() < 1e-10, "{g_r_thth}");
}

#[test]
fn metric_matches_independent_form() {
    for (model, mass, glue) in [
        (MetricModel::schwarzschild(0.05).unwrap(), 0.05, None),
        (MetricModel::glued_default(0.01).unwrap(), 0.01, Some((1.0, 2.0))),
    ] {
        for r in [0.5, 1.3, 1.7, 3.0, 12.0] {
            let x = point(r, 1.1, 0.4);
            let jet = metric_at(&model, &x, 1).unwrap();
            let xo = [x.t, x.x1, x.x2, x.x3];
            let g = oracle_g(mass, glue, xo);
            let gam = oracle_gamma(mass, glue, xo);
            for a in 0..4 {
                for b in 0..4 {
                    assert!((jet.g[(a, b)] - g[a][b]).abs() < 1e-13);
                    for c in 0..4 {
                        assert!((jet.gamma[a][b][c] - gam[a][b][c]).abs() < 1e-8, "Γ^{a}_{b}{c} at r = {r}");
                    }
                }
            }
        }
    }
}

#[test]
fn kretschmann_scalar_of_exterior() {
    // ADM mass 2M and area radius R = r + 2M: R_abcd R^abcd = 48 (2M)² / R⁶
    let mass = 0.05;
    for model in [MetricModel::schwarzschild(mass).unwrap(), MetricModel::glued_default(mass).unwrap()] {
        for r in [3.0, 5.0, 10.0] {
            let big_r = r + 2.0 * mass;
            let want = 48.0 * (2.0 * mass).powi(2) / big_r.powi(6);
            let got = kretschmann(&model, &point(r, 0.8, 2.1));
            assert!((got / want - 1.0).abs() < 1e-8, "r = {r}: {got} vs {want}");
        }
    }
}

#[test]
fn vacuum_exterior_has_weyl_equal_riemann() {
    let m = MetricModel::glued_default(0.05).unwrap();
    for r in [2.0, 2.5, 7.0] {
        let jet = curvature_at(&m, &point(r, 2.0, 5.0)).unwrap();
        assert!(jet.ricci.amax() <= 1e-7, "ricci {} at r = {r}", jet.ricci.amax());
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        assert!((jet.weyl[a][b][c][d] - jet.riemann[a][b][c][d]).abs() < 1e-7);
                    }
                }
            }
        }
    }
}

#[test]
fn annulus_is_not_vacuum() {
    let m = MetricModel::glued_default(0.05).unwrap();
    let jet = curvature_at(&m, &point(1.5, 1.0, 1.0)).unwrap();
    assert!(jet.ricci.amax() > 1e-4);
}

#[test]
fn glued_core_is_minkowski_jet() {
    let m = MetricModel::glued_default(0.01).unwrap();
    let flat = curvature_at(&MetricModel::minkowski(), &point(0.5, 0.3, 0.2)).unwrap();
    let jet = curvature_at(&m, &point(0.5, 0.3, 0.2)).unwrap();
    assert_eq!(jet.g, flat.g);
    assert_eq!(jet.gamma, flat.gamma);
    assert_eq!(jet.riemann, flat.riemann);
}

#[test]
fn glued_jet_is_continuous_across_blend_boundaries() {
    let m = MetricModel::glued_default(0.05).unwrap();
    for r0 in [1.0, 2.0] {
        let eps = 1e-7;
        let lo = metric_at(&m, &point(r0 - eps, 0.9, 0.3), 1).unwrap();
        let hi = metric_at(&m, &point(r0 + eps, 0.9, 0.3), 1).unwrap();
        assert!((lo.g - hi.g).amax() < 1e-6);
        for mu in 0..4 {
            for a in 0..4 {
                for b in 0..4 {
                    assert!((lo.dg[mu][a][b] - hi.dg[mu][a][b]).abs() < 1e-6);
                }
            }
        }
    }
}

#[test]
fn guards() {
    let m = MetricModel::schwarzschild(0.05).unwrap();
    assert!(matches!(metric_at(&m, &point(0.1, 1.0, 1.0), 0), Err(MetricError::CoordinateSingularity { .. })));
    assert!(matches!(metric_at(&m, &point(5.0, 1.0, 1.0), 3), Err(MetricError::UnsupportedLevel(3))));
    assert!(MetricModel::glued(0.6, 1.0, 2.0).is_err());
    assert!(MetricModel::glued(0.01, 2.0, 1.0).is_err());
    assert!(MetricModel::schwarzschild(-1.0).is_err());
}

fn models() -> impl Strategy<Value = (MetricModel, bool)> {
    prop_oneof![
        Just((MetricModel::minkowski(), true)),
        (0.0..0.1f64).prop_map(|m| (MetricModel::schwarzschild(m).unwrap(), true)),
        (0.0..0.1f64).prop_map(|m| (MetricModel::glued_default(m).unwrap(), false)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn curvature_symmetries((model, analytic) in models(), r in 0.3..40.0f64, th in 0.01..3.13f64, ph in 0.0..6.28f64) {
        let x = point(r, th, ph);
        prop_assume!(r > 4.0 * model.mass() + 0.05);
        let jet = curvature_at(&model, &x).unwrap();
        for l in 0..4 {
            for m in 0..4 {
                for n in 0..4 {
                    prop_assert_eq!(jet.gamma[l][m][n], jet.gamma[l][n][m]);
                }
            }
        }
        let scale = jet.riemann.iter().flatten().flatten().flatten().fold(1.0_f64, |a, &b| a.max(b.abs()));
        let in_annulus = !analytic && r > 1.0 && r < 2.0;
        let tol = if in_annulus { 1e-5 } else { 1e-8 };
        prop_assert!(riemann_symmetry_residual(&jet.riemann) <= tol * scale);
        if !in_annulus {
            prop_assert!(weyl_trace_residual(&jet) <= 1e-7);
        }
        // signature (-,+,+,+)
        let eig = jet.g.symmetric_eigenvalues();
        prop_assert_eq!(eig.iter().filter(|&&e| e < 0.0).count(), 1);
    }
}
