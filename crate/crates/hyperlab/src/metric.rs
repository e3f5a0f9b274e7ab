//! Closed-form static metrics and their curvature jets.
//!
//! Every model here is static and spherically symmetric about the spatial
//! origin, so in Cartesian coordinates `(t, x¹, x², x³)` it takes the form
//!
//! ```text
//! g = -A(r) dt² + P(r) δ_ij dxⁱdxʲ + E(r) (x·dx)²,   E = (Q - P)/r²
//! ```
//!
//! where `Q` is the radial coefficient `g_rr` of the polar form. For the
//! Schwarzschild metric in the shifted chart used throughout the crate
//! (area radius `r + 2M`, ADM mass `2M`):
//!
//! ```text
//! A = n² = (r - 2M)/(r + 2M),   P = (r + 2M)²/r²,   Q = n⁻²
//! ```
//!
//! The glued model interpolates `A`, `P`, `Q` between 1 and these values with
//! the quintic smoothstep on `(r_in, r_out)`, so it is exactly flat inside
//! `r_in` and exactly Schwarzschild outside `r_out`. All derivatives are
//! analytic, including in the blend annulus.

use crate::tensor::{eta, Mat4, Rank3, Rank4, Vec4, ZERO3, ZERO4};
use thiserror::Error;

/// Klein–Gordon mass. Fixed to one throughout.
pub const KG_MASS: f64 = 1.0;

/// Relative margin kept from the coordinate singularity at `r = 2M`.
pub const HORIZON_MARGIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("point at r = {r} is within the horizon guard of r = 2M = {two_m}")]
    CoordinateSingularity { r: f64, two_m: f64 },
    #[error("jet level {0} is not supported (max 2)")]
    UnsupportedLevel(u8),
    #[error("invalid metric model: {0}")]
    InvalidModel(String),
}

/// A spacetime point in the static Cartesian chart.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Coordinates4 {
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl Coordinates4 {
    pub fn new(t: f64, x1: f64, x2: f64, x3: f64) -> Self {
        Self { t, x1, x2, x3 }
    }

    pub fn from_vec(v: &Vec4) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_vec(&self) -> Vec4 {
        Vec4::new(self.t, self.x1, self.x2, self.x3)
    }

    pub fn spatial(&self) -> [f64; 3] {
        [self.x1, self.x2, self.x3]
    }

    /// Coordinate radius `sqrt(x₁² + x₂² + x₃²)`.
    pub fn r(&self) -> f64 {
        (self.x1 * self.x1 + self.x2 * self.x2 + self.x3 * self.x3).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x1.is_finite() && self.x2.is_finite() && self.x3.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricKind {
    Minkowski,
    Schwarzschild { mass: f64 },
    GluedSchwarzschild { mass: f64, r_in: f64, r_out: f64 },
}

/// An immutable closed-form spacetime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricModel {
    kind: MetricKind,
}

/// Radial coefficients and their first two derivatives.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Profile {
    pub flat: bool,
    pub a: [f64; 3],
    pub p: [f64; 3],
    pub q: [f64; 3],
}

impl Profile {
    const FLAT: Profile = Profile { flat: true, a: [1.0, 0.0, 0.0], p: [1.0, 0.0, 0.0], q: [1.0, 0.0, 0.0] };
}

fn schwarzschild_profile(m: f64, r: f64) -> Profile {
    let s = r + 2.0 * m;
    let a = (r - 2.0 * m) / s;
    let a1 = 4.0 * m / (s * s);
    let a2 = -8.0 * m / (s * s * s);
    let w = 1.0 + 2.0 * m / r;
    let p = w * w;
    let p1 = -4.0 * m * w / (r * r);
    let p2 = 8.0 * m * m / r.powi(4) + 8.0 * m * w / r.powi(3);
    let q = 1.0 / a;
    let q1 = -a1 / (a * a);
    let q2 = -a2 / (a * a) + 2.0 * a1 * a1 / (a * a * a);
    Profile { flat: false, a: [a, a1, a2], p: [p, p1, p2], q: [q, q1, q2] }
}

/// Quintic smoothstep on `[0, 1]` with its derivatives in `r`.
fn smoothstep(r: f64, r_in: f64, r_out: f64) -> [f64; 3] {
    let w = r_out - r_in;
    let x = (r - r_in) / w;
    let s = x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
    let s1 = 30.0 * x * x * (1.0 - x) * (1.0 - x) / w;
    let s2 = 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x) / (w * w);
    [s, s1, s2]
}

fn blend(s: &[f64; 3], f: &[f64; 3]) -> [f64; 3] {
    [
        1.0 + s[0] * (f[0] - 1.0),
        s[1] * (f[0] - 1.0) + s[0] * f[1],
        s[2] * (f[0] - 1.0) + 2.0 * s[1] * f[1] + s[0] * f[2],
    ]
}

impl MetricModel {
    pub fn minkowski() -> Self {
        Self { kind: MetricKind::Minkowski }
    }

    pub fn schwarzschild(mass: f64) -> Result<Self, MetricError> {
        if !(mass.is_finite() && mass >= 0.0) {
            return Err(MetricError::InvalidModel(format!("mass must be finite and ≥ 0, got {mass}")));
        }
        Ok(Self { kind: MetricKind::Schwarzschild { mass } })
    }

    pub fn glued(mass: f64, r_in: f64, r_out: f64) -> Result<Self, MetricError> {
        if !(mass.is_finite() && mass >= 0.0) {
            return Err(MetricError::InvalidModel(format!("mass must be finite and ≥ 0, got {mass}")));
        }
        if !(r_in.is_finite() && r_out.is_finite() && 2.0 * mass < r_in && r_in < r_out) {
            return Err(MetricError::InvalidModel(format!(
                "need 0 < 2M < r_in < r_out, got M = {mass}, r_in = {r_in}, r_out = {r_out}"
            )));
        }
        Ok(Self { kind: MetricKind::GluedSchwarzschild { mass, r_in, r_out } })
    }

    /// Glued model with the default gluing radii `(1, 2)`.
    pub fn glued_default(mass: f64) -> Result<Self, MetricError> {
        Self::glued(mass, 1.0, 2.0)
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    /// The parameter `M`; the ADM mass of the model is `2M`.
    pub fn mass(&self) -> f64 {
        match self.kind {
            MetricKind::Minkowski => 0.0,
            MetricKind::Schwarzschild { mass } | MetricKind::GluedSchwarzschild { mass, .. } => mass,
        }
    }

    pub fn kg_mass(&self) -> f64 {
        KG_MASS
    }

    /// Radius below which the metric is exactly Minkowski.
    pub fn flat_core_radius(&self) -> f64 {
        match self.kind {
            MetricKind::Minkowski => f64::INFINITY,
            MetricKind::Schwarzschild { mass } => {
                if mass == 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            MetricKind::GluedSchwarzschild { r_in, .. } => r_in,
        }
    }

    /// Radius beyond which the metric is exactly Schwarzschild (vacuum).
    pub fn vacuum_radius(&self) -> f64 {
        match self.kind {
            MetricKind::GluedSchwarzschild { r_out, .. } => r_out,
            _ => 0.0,
        }
    }

    pub(crate) fn profile(&self, r: f64) -> Result<Profile, MetricError> {
        match self.kind {
            MetricKind::Minkowski => Ok(Profile::FLAT),
            MetricKind::Schwarzschild { mass } => {
                if mass == 0.0 {
                    return Ok(Profile::FLAT);
                }
                self.horizon_guard(mass, r)?;
                Ok(schwarzschild_profile(mass, r))
            }
            MetricKind::GluedSchwarzschild { mass, r_in, r_out } => {
                if r <= r_in || mass == 0.0 {
                    return Ok(Profile::FLAT);
                }
                let sp = schwarzschild_profile(mass, r);
                if r >= r_out {
                    return Ok(sp);
                }
                let s = smoothstep(r, r_in, r_out);
                Ok(Profile { flat: false, a: blend(&s, &sp.a), p: blend(&s, &sp.p), q: blend(&s, &sp.q) })
            }
        }
    }

    fn horizon_guard(&self, mass: f64, r: f64) -> Result<(), MetricError> {
        if !(r > 2.0 * mass * (1.0 + HORIZON_MARGIN)) {
            return Err(MetricError::CoordinateSingularity { r, two_m: 2.0 * mass });
        }
        Ok(())
    }

    /// Static lapse `n = sqrt(-g_tt)` and its radial derivative.
    pub fn lapse(&self, r: f64) -> Result<(f64, f64), MetricError> {
        let p = self.profile(r)?;
        let n = p.a[0].sqrt();
        Ok((n, p.a[1] / (2.0 * n)))
    }

    /// Area radius of the coordinate sphere of radius `r`, `r·sqrt(P)`.
    pub fn area_radius(&self, r: f64) -> Result<f64, MetricError> {
        Ok(r * self.profile(r)?.p[0].sqrt())
    }
}

/// Metric and curvature at one point.
///
/// `dg[μ][α][β] = ∂_μ g_{αβ}`, `d2g[μ][ν][α][β] = ∂_μ∂_ν g_{αβ}`,
/// `gamma[λ][μ][ν] = Γ^λ_{μν}`, and curvature tensors are fully covariant with
/// the convention that round spheres have positive sectional curvature.
#[derive(Debug, Clone)]
pub struct MetricJet {
    pub x: Coordinates4,
    pub level: u8,
    pub g: Mat4,
    pub g_inv: Mat4,
    pub dg: Rank3,
    pub d2g: Rank4,
    pub gamma: Rank3,
    pub riemann: Rank4,
    pub ricci: Mat4,
    pub scalar: f64,
    pub weyl: Rank4,
    pub schouten: Mat4,
}

impl MetricJet {
    pub fn inner(&self, a: &Vec4, b: &Vec4) -> f64 {
        crate::tensor::inner(&self.g, a, b)
    }

    /// `sqrt|det g|`.
    pub fn volume_density(&self) -> f64 {
        self.g.determinant().abs().sqrt()
    }
}

/// Metric jet at `x` with `level` derivative layers.
pub fn metric_at(model: &MetricModel, x: &Coordinates4, level: u8) -> Result<MetricJet, MetricError> {
    if level > 2 {
        return Err(MetricError::UnsupportedLevel(level));
    }
    let xs = x.spatial();
    let r = x.r();
    let prof = model.profile(r)?;
    let mut jet = MetricJet {
        x: *x,
        level,
        g: eta(),
        g_inv: eta(),
        dg: ZERO3,
        d2g: ZERO4,
        gamma: ZERO3,
        riemann: ZERO4,
        ricci: Mat4::zeros(),
        scalar: 0.0,
        weyl: ZERO4,
        schouten: Mat4::zeros(),
    };
    if prof.flat {
        return Ok(jet);
    }

    let [a, a1, a2] = prof.a;
    let [p, p1, p2] = prof.p;
    let [q, q1, q2] = prof.q;
    let d = q - p;
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r2 = r * r;
    let e = d / r2;
    let e1 = d1 / r2 - 2.0 * d / (r2 * r);
    let e2 = d2 / r2 - 4.0 * d1 / (r2 * r) + 6.0 * d / (r2 * r2);
    let xh = [xs[0] / r, xs[1] / r, xs[2] / r];
    let kd = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };

    jet.g[(0, 0)] = -a;
    jet.g_inv[(0, 0)] = -1.0 / a;
    let c = -e / (p * q);
    for i in 0..3 {
        for j in 0..3 {
            jet.g[(i + 1, j + 1)] = p * kd(i, j) + e * xs[i] * xs[j];
            jet.g_inv[(i + 1, j + 1)] = kd(i, j) / p + c * xs[i] * xs[j];
        }
    }
    if level == 0 {
        return Ok(jet);
    }

    for k in 0..3 {
        jet.dg[k + 1][0][0] = -a1 * xh[k];
        for i in 0..3 {
            for j in 0..3 {
                jet.dg[k + 1][i + 1][j + 1] = p1 * xh[k] * kd(i, j)
                    + e1 * xh[k] * xs[i] * xs[j]
                    + e * (kd(i, k) * xs[j] + kd(j, k) * xs[i]);
            }
        }
    }
    christoffel(&mut jet);
    if level == 1 {
        return Ok(jet);
    }

    for k in 0..3 {
        for l in 0..3 {
            let radial = xh[k] * xh[l];
            let trans = (kd(k, l) - radial) / r;
            jet.d2g[k + 1][l + 1][0][0] = -(a2 * radial + a1 * trans);
            for i in 0..3 {
                for j in 0..3 {
                    let v = kd(i, j) * (p2 * radial + p1 * trans)
                        + xs[i] * xs[j] * (e2 * radial + e1 * trans)
                        + e1 * xh[k] * (kd(i, l) * xs[j] + kd(j, l) * xs[i])
                        + e1 * xh[l] * (kd(i, k) * xs[j] + kd(j, k) * xs[i])
                        + e * (kd(i, k) * kd(j, l) + kd(j, k) * kd(i, l));
                    jet.d2g[k + 1][l + 1][i + 1][j + 1] = v;
                }
            }
        }
    }
    curvature(&mut jet);
    Ok(jet)
}

/// Level-2 jet with Riemann, Ricci, Weyl and Schouten populated.
pub fn curvature_at(model: &MetricModel, x: &Coordinates4) -> Result<MetricJet, MetricError> {
    metric_at(model, x, 2)
}

fn christoffel(jet: &mut MetricJet) {
    let mut low = ZERO3; // Γ_{κμν}
    for k in 0..4 {
        for m in 0..4 {
            for n in m..4 {
                let v = 0.5 * (jet.dg[m][k][n] + jet.dg[n][k][m] - jet.dg[k][m][n]);
                low[k][m][n] = v;
                low[k][n][m] = v;
            }
        }
    }
    for l in 0..4 {
        for m in 0..4 {
            for n in m..4 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += jet.g_inv[(l, k)] * low[k][m][n];
                }
                jet.gamma[l][m][n] = s;
                jet.gamma[l][n][m] = s;
            }
        }
    }
}

fn curvature(jet: &mut MetricJet) {
    let g = &jet.g;
    let gm = &jet.gamma;
    let h = &jet.d2g;
    // Γ_{μ,βγ} lowered on the first slot for the quadratic term.
    let mut gl = ZERO3;
    for m in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                let mut s = 0.0;
                for n in 0..4 {
                    s += g[(m, n)] * gm[n][b][c];
                }
                gl[m][b][c] = s;
            }
        }
    }
    let mut riem = ZERO4;
    for al in 0..4 {
        for be in 0..4 {
            for ga in 0..4 {
                for de in 0..4 {
                    let lin = 0.5 * (h[be][ga][al][de] + h[al][de][be][ga] - h[al][ga][be][de] - h[be][de][al][ga]);
                    let mut quad = 0.0;
                    for m in 0..4 {
                        quad += gl[m][be][ga] * gm[m][al][de] - gl[m][be][de] * gm[m][al][ga];
                    }
                    riem[al][be][ga][de] = lin + quad;
                }
            }
        }
    }
    jet.riemann = riem;

    let gi = &jet.g_inv;
    let mut ric = Mat4::zeros();
    for b in 0..4 {
        for d in 0..4 {
            let mut s = 0.0;
            for a in 0..4 {
                for c in 0..4 {
                    s += gi[(a, c)] * riem[a][b][c][d];
                }
            }
            ric[(b, d)] = s;
        }
    }
    let mut sc = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            sc += gi[(a, b)] * ric[(a, b)];
        }
    }
    let sch = ric - g * (sc / 6.0);
    let mut w = ZERO4;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    w[a][b][c][d] = riem[a][b][c][d]
                        - 0.5
                            * (g[(a, c)] * sch[(b, d)] + g[(b, d)] * sch[(a, c)]
                                - g[(b, c)] * sch[(a, d)]
                                - g[(a, d)] * sch[(b, c)]);
                }
            }
        }
    }
    jet.ricci = ric;
    jet.scalar = sc;
    jet.schouten = sch;
    jet.weyl = w;
}

/// Schouten tensor of a Klein–Gordon field,
/// `S_{αβ} = ∂_αφ ∂_βφ − (1/6) g_{αβ} (∂^μφ ∂_μφ − 𝔪φ²)`.
pub fn schouten_scalar_field(jet: &MetricJet, dphi: &Vec4, phi: f64) -> Mat4 {
    let grad2 = crate::tensor::inner(&jet.g_inv, dphi, dphi);
    let mut s = dphi * dphi.transpose();
    s -= jet.g * ((grad2 - KG_MASS * phi * phi) / 6.0);
    s
}

/// Largest violation of the algebraic Riemann symmetries (antisymmetry in
/// each pair, pair symmetry, first Bianchi identity).
pub fn riemann_symmetry_residual(r: &Rank4) -> f64 {
    let mut m: f64 = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let v = r[a][b][c][d];
                    m = m.max((v + r[b][a][c][d]).abs());
                    m = m.max((v + r[a][b][d][c]).abs());
                    m = m.max((v - r[c][d][a][b]).abs());
                    m = m.max((v + r[a][c][d][b] + r[a][d][b][c]).abs());
                }
            }
        }
    }
    m
}

/// `max |g^{αγ} W_{αβγδ}|`.
pub fn weyl_trace_residual(jet: &MetricJet) -> f64 {
    let mut m: f64 = 0.0;
    for b in 0..4 {
        for d in 0..4 {
            let mut s = 0.0;
            for a in 0..4 {
                for c in 0..4 {
                    s += jet.g_inv[(a, c)] * jet.weyl[a][b][c][d];
                }
            }
            m = m.max(s.abs());
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schw() -> MetricModel {
        MetricModel::schwarzschild(0.05).unwrap()
    }

    #[test]
    fn minkowski_jet_is_flat() {
        let j = curvature_at(&MetricModel::minkowski(), &Coordinates4::new(1.0, 2.0, -3.0, 0.5)).unwrap();
        assert_eq!(j.g, eta());
        assert_eq!(crate::tensor::max_abs4(&j.riemann), 0.0);
    }

    #[test]
    fn schwarzschild_components_on_axis() {
        let x = Coordinates4::new(0.0, 5.0, 0.0, 0.0);
        let j = metric_at(&schw(), &x, 1).unwrap();
        assert!((j.g[(0, 0)] + 0.96078431).abs() < 1e-8);
        // on the x¹ axis the Cartesian g_11 is the polar g_rr
        assert!((j.g[(1, 1)] - 1.04081633).abs() < 1e-8);
        assert!((j.gamma[1][0][0] - 0.003693904).abs() < 1e-9);
        // polar Γ^r_θθ = r²Γ¹₂₂ − r on the x¹ axis (x¹ = r cos θ in the x¹x² plane)
        assert!((j.gamma[1][2][2] * 25.0 - 5.0 + 4.9).abs() < 1e-9);
    }

    #[test]
    fn glued_core_and_exterior() {
        let m = MetricModel::glued_default(0.01).unwrap();
        let j = curvature_at(&m, &Coordinates4::new(0.0, 0.3, 0.3, 0.1)).unwrap();
        assert_eq!(j.g, eta());
        let s = MetricModel::schwarzschild(0.01).unwrap();
        let x = Coordinates4::new(0.0, 1.5, 1.6, -0.3);
        assert_eq!(metric_at(&m, &x, 2).unwrap().g, metric_at(&s, &x, 2).unwrap().g);
    }

    #[test]
    fn horizon_guard() {
        let e = metric_at(&schw(), &Coordinates4::new(0.0, 0.1, 0.0, 0.0), 0).unwrap_err();
        assert!(matches!(e, MetricError::CoordinateSingularity { .. }));
        assert!(matches!(metric_at(&schw(), &Coordinates4::default(), 3), Err(MetricError::UnsupportedLevel(3))));
    }

    #[test]
    fn schouten_scalar_examples() {
        let j = metric_at(&MetricModel::minkowski(), &Coordinates4::default(), 0).unwrap();
        let s = schouten_scalar_field(&j, &Vec4::new(1.0, 0.0, 0.0, 0.0), 0.0);
        assert!((s[(0, 0)] - 5.0 / 6.0).abs() < 1e-15);
        assert!((s[(1, 1)] - 1.0 / 6.0).abs() < 1e-15);
        let s = schouten_scalar_field(&j, &Vec4::zeros(), 1.0);
        assert!((s - j.g / 6.0).norm() < 1e-15);
    }
}
