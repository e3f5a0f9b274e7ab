//! Small fixed-size tensor helpers shared by the geometry modules.
//!
//! Vectors and the metric use nalgebra; rank-3 and rank-4 objects are plain
//! nested arrays indexed in coordinate order `(t, x1, x2, x3)`.

use nalgebra::{Matrix4, Vector4};

pub type Vec4 = Vector4<f64>;
pub type Mat4 = Matrix4<f64>;
/// `a[i][j][k]`, used for `∂_μ g_{αβ}` and `Γ^λ_{μν}`.
pub type Rank3 = [[[f64; 4]; 4]; 4];
/// `a[i][j][k][l]`, used for curvature tensors.
pub type Rank4 = [[[[f64; 4]; 4]; 4]; 4];

pub const ZERO3: Rank3 = [[[0.0; 4]; 4]; 4];
pub const ZERO4: Rank4 = [[[[0.0; 4]; 4]; 4]; 4];

/// Minkowski metric `diag(-1, 1, 1, 1)`.
pub fn eta() -> Mat4 {
    Mat4::from_diagonal(&Vec4::new(-1.0, 1.0, 1.0, 1.0))
}

/// `g(a, b)`.
#[inline]
pub fn inner(g: &Mat4, a: &Vec4, b: &Vec4) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            s += g[(i, j)] * a[i] * b[j];
        }
    }
    s
}

/// Lower an index: `v_μ = g_{μν} v^ν`.
#[inline]
pub fn lower(g: &Mat4, v: &Vec4) -> Vec4 {
    g * v
}

/// Full contraction `T_{αβγδ} a^α b^β c^γ d^δ`.
pub fn contract4(t: &Rank4, a: &Vec4, b: &Vec4, c: &Vec4, d: &Vec4) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        if a[i] == 0.0 {
            continue;
        }
        for j in 0..4 {
            if b[j] == 0.0 {
                continue;
            }
            let ab = a[i] * b[j];
            for k in 0..4 {
                let abc = ab * c[k];
                for l in 0..4 {
                    s += t[i][j][k][l] * abc * d[l];
                }
            }
        }
    }
    s
}

/// Maximum absolute entry of a rank-4 array.
pub fn max_abs4(t: &Rank4) -> f64 {
    let mut m: f64 = 0.0;
    for a in t {
        for b in a {
            for c in b {
                for v in c {
                    m = m.max(v.abs());
                }
            }
        }
    }
    m
}

/// Levi-Civita symbol `[αβγδ]` with `[0123] = +1`.
pub fn levi_civita(a: usize, b: usize, c: usize, d: usize) -> f64 {
    let p = [a, b, c, d];
    for i in 0..4 {
        for j in (i + 1)..4 {
            if p[i] == p[j] {
                return 0.0;
            }
        }
    }
    let mut sign = 1.0;
    for i in 0..4 {
        for j in (i + 1)..4 {
            if p[i] > p[j] {
                sign = -sign;
            }
        }
    }
    sign
}

/// Gram–Schmidt in the metric `g`, normalizing each vector to `±1` by the
/// sign of its norm. Returns `None` if a vector degenerates.
pub fn gram_schmidt(g: &Mat4, vs: &[Vec4]) -> Option<Vec<Vec4>> {
    let mut out: Vec<Vec4> = Vec::with_capacity(vs.len());
    let mut signs: Vec<f64> = Vec::with_capacity(vs.len());
    for v in vs {
        let mut w = *v;
        for (e, s) in out.iter().zip(&signs) {
            w -= e * (inner(g, &w, e) * s);
        }
        let nn = inner(g, &w, &w);
        if !nn.is_finite() || nn.abs() < 1e-300 {
            return None;
        }
        let s = nn.signum();
        w /= nn.abs().sqrt();
        out.push(w);
        signs.push(s);
    }
    Some(out)
}
