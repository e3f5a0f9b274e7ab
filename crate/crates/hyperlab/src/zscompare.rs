//! Comparison of the intrinsic foliation with the Schwarzschild optical
//! structure in the zone `r ≥ r_out`: the radial overlap `ϖ = N(r)`, the
//! functions `u` and `û`, their transport identities, and the spheres cut out
//! of `H_ρ` by the Schwarzschild cones `{û = const}`.

use crate::foliation::{
    d5, frames_from_state, level_area_density, level_nodes, rho_stencils, scalars_from_state, stencil_straddles,
    EquationResidual, FoliationError, FrameSet, LeafScalars, LevelFunction, SliceOptions,
};
use crate::geodesic::{GeodesicRecord, GeodesicSample, TraceOptions};
use crate::metric::{curvature_at, metric_at, Coordinates4, MetricError, MetricKind, MetricModel};
use crate::nullgeom::unit_radial;
use crate::quadrature::SphereQuadrature;
use crate::tensor::{contract4, gram_schmidt, inner, Mat4, Rank3, Vec4};
use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

/// Margin beyond `r_out` for every Schwarzschild-zone assertion.
pub const ZONE_MARGIN: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZsError {
    #[error("r = {r} is not outside the horizon 2M = {two_m}")]
    Horizon { r: f64, two_m: f64 },
    #[error("r̃ = {0} is below the frame floor")]
    CentralLineDegenerate(f64),
    #[error("sphere leaves the Schwarzschild zone: r_min = {r_min} < {r_zone}")]
    SphereExitsZone { r_min: f64, r_zone: f64 },
    #[error(transparent)]
    Foliation(#[from] FoliationError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// First radius where every zone identity is asserted.
pub fn zone_radius(model: &MetricModel) -> f64 {
    match model.kind() {
        MetricKind::GluedSchwarzschild { r_out, .. } => r_out + ZONE_MARGIN,
        MetricKind::Schwarzschild { mass } => 2.0 * mass + ZONE_MARGIN,
        MetricKind::Minkowski => 0.0,
    }
}

/// `γ(r) = r + 4M ln(r − 2M)`.
pub fn tortoise(mass: f64, r: f64) -> f64 {
    if mass == 0.0 {
        r
    } else {
        r + 4.0 * mass * (r - 2.0 * mass).ln()
    }
}

/// The optical function `û = t − γ(r)` and its null generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchwOptical {
    pub uhat: f64,
    /// `L̂ = ∂_t + n²∂_r` in polar components `(t, r)`.
    pub lhat: [f64; 2],
    /// `⟨dû, dû⟩` evaluated from the metric components.
    pub eikonal: f64,
}

pub fn schw_optical(mass: f64, t: f64, r: f64) -> Result<SchwOptical, ZsError> {
    if !(r > 2.0 * mass) {
        return Err(ZsError::Horizon { r, two_m: 2.0 * mass });
    }
    let n2 = (r - 2.0 * mass) / (r + 2.0 * mass);
    let dgamma = if mass == 0.0 { 1.0 } else { 1.0 + 4.0 * mass / (r - 2.0 * mass) };
    // g^tt = −n⁻², g^rr = n²
    let eikonal = -1.0 / n2 + n2 * dgamma * dgamma;
    Ok(SchwOptical { uhat: t - tortoise(mass, r), lhat: [1.0, n2], eikonal })
}

/// `dû` as a Cartesian covector.
pub fn duhat(model: &MetricModel, x: &Coordinates4) -> Result<Vec4, ZsError> {
    let m = model.mass();
    let r = x.r();
    if !(r > 2.0 * m) {
        return Err(ZsError::Horizon { r, two_m: 2.0 * m });
    }
    let dgamma = if m == 0.0 { 1.0 } else { 1.0 + 4.0 * m / (r - 2.0 * m) };
    let xh = unit_radial(x);
    Ok(Vec4::new(1.0, -dgamma * xh[0], -dgamma * xh[1], -dgamma * xh[2]))
}

/// `L^s = n⁻²∂_t + ∂_r` in Cartesian components.
pub fn l_s(model: &MetricModel, x: &Coordinates4) -> Result<Vec4, ZsError> {
    let (n, _) = model.lapse(x.r())?;
    let xh = unit_radial(x);
    Ok(Vec4::new(1.0 / (n * n), xh[0], xh[1], xh[2]))
}

/// `∇_X L^s` in Cartesian components.
fn cov_l_s(model: &MetricModel, x: &Coordinates4, gamma: &Rank3, v: &Vec4) -> Result<Vec4, ZsError> {
    let r = x.r();
    let (n, dn) = model.lapse(r)?;
    let xh = unit_radial(x);
    let radial = xh[0] * v[1] + xh[1] * v[2] + xh[2] * v[3];
    let mut d = Vec4::new(-2.0 * dn / (n * n * n) * radial, 0.0, 0.0, 0.0);
    for i in 0..3 {
        d[i + 1] = (v[i + 1] - xh[i] * radial) / r;
    }
    let ls = l_s(model, x)?;
    for l in 0..4 {
        let mut s = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                s += gamma[l][a][b] * v[a] * ls[b];
            }
        }
        d[l] += s;
    }
    Ok(d)
}

/// `ϖ = N(r)` and the radial decomposition `N = ΣN + ϖ∂_r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarpiData {
    pub varpi: f64,
    /// `ΣN` in Cartesian components, tangent to the level sets of `r`.
    pub sigma_n: Vec4,
    /// `∇̸_A r = e_A(r)`.
    pub snr: Vector2<f64>,
    /// `n² − ϖ² − |∇̸r|²`.
    pub identity_residual: f64,
    pub n: f64,
}

/// `ϖ` from a frame set at `x`.
pub fn varpi_from_frames(model: &MetricModel, x: &Coordinates4, f: &FrameSet) -> Result<VarpiData, ZsError> {
    let xh = unit_radial(x);
    let dr = |v: &Vec4| xh[0] * v[1] + xh[1] * v[2] + xh[2] * v[3];
    let varpi = dr(&f.n);
    let sigma_n = f.n - Vec4::new(0.0, xh[0], xh[1], xh[2]) * varpi;
    let snr = Vector2::new(dr(&f.ea[0]), dr(&f.ea[1]));
    let (n, _) = model.lapse(x.r())?;
    Ok(VarpiData { varpi, sigma_n, snr, identity_residual: n * n - varpi * varpi - snr.norm_squared(), n })
}

fn frames_of(model: &MetricModel, rec: &GeodesicRecord, s: &GeodesicSample) -> Result<(FrameSet, LeafScalars, Mat4), ZsError> {
    let sc = scalars_from_state(model, &rec.origin, rec.direction.zeta, s.rho, &s.x, &s.b)?;
    let g = metric_at(model, &s.x, 0)?.g;
    let f = frames_from_state(&g, sc.n, &s.b, &sc).map_err(|e| match e {
        FoliationError::CentralLineDegenerate(r) => ZsError::CentralLineDegenerate(r),
        other => ZsError::Foliation(other),
    })?;
    Ok((f, sc, g))
}

/// `ϖ` on `rec` at the sample `rho`.
pub fn varpi_at(model: &MetricModel, rec: &GeodesicRecord, rho: f64) -> Result<VarpiData, ZsError> {
    let s = rec.sample_at(rho).ok_or(FoliationError::OutOfRange(rho))?;
    let (f, _, _) = frames_of(model, rec, s)?;
    varpi_from_frames(model, &s.x, &f)
}

/// One row of the radial comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub rho: f64,
    pub t: f64,
    pub r: f64,
    pub n: f64,
    pub varpi: f64,
    pub n_minus_varpi: f64,
    /// `r̃/r − n⁻¹`.
    pub rt_over_r_minus_ninv: f64,
    pub u: f64,
    pub uhat: f64,
    pub u_minus_uhat: f64,
    /// `|ΣN|` in the metric.
    pub sigma_n_norm: f64,
    pub snr_norm: f64,
    /// `𝔅(û) = dû(𝔅)`, positive: `û` grows along every leaf geodesic.
    pub b_duhat: f64,
}

/// Extremes of a comparison series over its last quarter and last half.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailWindow {
    pub rho_from: f64,
    pub max_n_minus_varpi: f64,
    pub max_t_rt_term: f64,
    pub u_minus_uhat_spread: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSeries {
    pub rows: Vec<ComparisonRow>,
    pub tails: Vec<TailWindow>,
}

impl ComparisonSeries {
    /// `max(u − û) − min(u − û)` over rows with `t0 ≤ t ≤ t1`.
    pub fn u_minus_uhat_variation(&self, t0: f64, t1: f64) -> Option<f64> {
        let w: Vec<f64> = self.rows.iter().filter(|r| r.t >= t0 && r.t <= t1).map(|r| r.u_minus_uhat).collect();
        if w.is_empty() {
            return None;
        }
        let mx = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(mx - w.iter().copied().fold(f64::INFINITY, f64::min))
    }
}

/// The comparison quantities at every sample of `rec` lying in the zone.
pub fn radial_comparison_series(model: &MetricModel, rec: &GeodesicRecord) -> Result<ComparisonSeries, ZsError> {
    let m = model.mass();
    let rz = zone_radius(model);
    let mut rows = Vec::new();
    for s in &rec.samples {
        let r = s.x.r();
        if r < rz || s.rho <= 0.0 {
            continue;
        }
        let (f, sc, g) = match frames_of(model, rec, s) {
            Ok(v) => v,
            Err(ZsError::CentralLineDegenerate(_)) => continue,
            Err(e) => return Err(e),
        };
        let vp = varpi_from_frames(model, &s.x, &f)?;
        let uhat = s.x.t - tortoise(m, r);
        let du = duhat(model, &s.x)?;
        rows.push(ComparisonRow {
            rho: s.rho,
            t: sc.t,
            r,
            n: vp.n,
            varpi: vp.varpi,
            n_minus_varpi: vp.n - vp.varpi,
            rt_over_r_minus_ninv: sc.rtilde / r - 1.0 / vp.n,
            u: sc.u,
            uhat,
            u_minus_uhat: sc.u - uhat,
            sigma_n_norm: inner(&g, &vp.sigma_n, &vp.sigma_n).max(0.0).sqrt(),
            snr_norm: vp.snr.norm(),
            b_duhat: du.dot(&s.b),
        });
    }
    let mut tails = Vec::new();
    for frac in [0.5, 0.75] {
        let k = ((rows.len() as f64) * frac).floor() as usize;
        if let Some(first) = rows.get(k) {
            let w = &rows[k..];
            let mx = |f: &dyn Fn(&ComparisonRow) -> f64| w.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            let mn = |f: &dyn Fn(&ComparisonRow) -> f64| w.iter().map(f).fold(f64::INFINITY, f64::min);
            tails.push(TailWindow {
                rho_from: first.rho,
                max_n_minus_varpi: mx(&|r| r.n_minus_varpi),
                max_t_rt_term: mx(&|r| r.t * r.rt_over_r_minus_ninv.abs()),
                u_minus_uhat_spread: mx(&|r| r.u_minus_uhat) - mn(&|r| r.u_minus_uhat),
            });
        }
    }
    Ok(ComparisonSeries { rows, tails })
}

/// Residuals of the zone transport equations for `n − ϖ` and `r̃/r − n⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZsResiduals {
    pub bvarpi: EquationResidual,
    pub cmr_1: EquationResidual,
    pub skipped: usize,
}

/// Evaluate the two zone transport identities along `rec` with five-point
/// `ρ`-derivatives of the computed quantities and right sides assembled from
/// `ϖ`, `n`, `r̃` and the leaf scalars. Stencils must lie at `r ≥ r_out + 0.1`.
pub fn transport_residuals_zs(
    model: &MetricModel,
    rec: &GeodesicRecord,
    opts: &TraceOptions,
) -> Result<ZsResiduals, ZsError> {
    let m = model.mass();
    let rz = zone_radius(model);
    let mut out = ZsResiduals {
        bvarpi: EquationResidual { name: "bvarpi", max_abs: 0.0, max_rel: 0.0, samples: 0 },
        cmr_1: EquationResidual { name: "cmr_1", max_abs: 0.0, max_rel: 0.0, samples: 0 },
        skipped: 0,
    };
    let push = |e: &mut EquationResidual, lhs: f64, rhs: f64, scale: f64| {
        let r = (lhs - rhs).abs();
        e.max_abs = e.max_abs.max(r);
        e.max_rel = e.max_rel.max(if scale > 0.0 { r / scale } else if r > 0.0 { f64::INFINITY } else { 0.0 });
        e.samples += 1;
    };
    for (rho, h, st) in rho_stencils(model, rec, opts)? {
        if st.iter().any(|s| s.x.r() < rz) || stencil_straddles(&st, rz) {
            out.skipped += 1;
            continue;
        }
        let mut vals = [(0.0, 0.0); 5];
        let mut ok = true;
        for (i, s) in st.iter().enumerate() {
            match frames_of(model, rec, s) {
                Ok((f, sc, _)) => {
                    let vp = varpi_from_frames(model, &s.x, &f)?;
                    vals[i] = (vp.n - vp.varpi, sc.rtilde / s.x.r() - 1.0 / vp.n);
                }
                Err(ZsError::CentralLineDegenerate(_)) => ok = false,
                Err(e) => return Err(e),
            }
        }
        if !ok {
            out.skipped += 1;
            continue;
        }
        let s0 = &st[2];
        let (f, sc, _) = frames_of(model, rec, s0)?;
        let vp = varpi_from_frames(model, &s0.x, &f)?;
        let (n, dn) = model.lapse(s0.x.r())?;
        let r = s0.x.r();
        let (w, rt, bt) = (vp.varpi, sc.rtilde, sc.bt());
        let s2 = (r + 2.0 * m) * (r + 2.0 * m);

        let d_nw = d5(&vals.map(|v| v.0), h);
        // N(ϖ) carries (r − 2M)/(r + 2M)²·(1 − n⁻²ϖ²) from the sphere term:
        // with M = 0 it must reduce to |ΣN|²/r, the flat-space value.
        let damp = rt / rho * (r - 2.0 * m) / s2 * (1.0 - w * w / (n * n));
        let rhs = 2.0 * m / (n * n * s2) * (rt / rho * w + bt * bt / (rho * rt) * (n + w)) * (n - w);
        push(&mut out.bvarpi, d_nw + damp, rhs, d_nw.abs().max(damp.abs()).max(rhs.abs()));

        let x = vals[2].1;
        let d_x = d5(&vals.map(|v| v.1), h);
        let nlogn = dn / n * w; // N(log n) = n'/n · N(r)
        let lhs = d_x + x / rho;
        let t1 = -(n / rho * x + rt / rho * nlogn) * x;
        let t2 = rt * rt / (r * r * rho) * (n - w);
        let t3 = -rho / r * nlogn;
        let scale = d_x.abs().max((x / rho).abs()).max(t1.abs()).max(t2.abs()).max(t3.abs());
        push(&mut out.cmr_1, lhs, t1 + t2 + t3, scale);
    }
    Ok(out)
}

/// `F = û = t − γ(r)`.
pub struct ConeLevel {
    pub mass: f64,
}

impl LevelFunction for ConeLevel {
    fn value(&self, _: &MetricModel, _: &Coordinates4, x: &Coordinates4) -> Result<f64, FoliationError> {
        Ok(x.t - tortoise(self.mass, x.r()))
    }
    fn differential(&self, model: &MetricModel, x: &Coordinates4) -> Result<Vec4, FoliationError> {
        duhat(model, x).map_err(|e| match e {
            ZsError::Metric(m) => FoliationError::Metric(m),
            other => FoliationError::BracketFailure(other.to_string()),
        })
    }
    fn flat_guess(&self, level: f64, rho: f64) -> Option<f64> {
        // flat: û = ρ e^{−ζ}
        (level > 0.0 && level < rho).then(|| (rho / level).ln())
    }
    fn direction(&self) -> f64 {
        -1.0
    }
}

/// Per-node data of a cone sphere `S_{ρ,û}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeNode {
    pub omega: [f64; 3],
    pub weight: f64,
    pub t: f64,
    pub r: f64,
    pub n: f64,
    /// `†𝔞` from `−†𝔞⁻¹ = ⟨𝔅, L^s⟩`.
    pub dag_a: f64,
    /// `†𝔞` from `†𝔞⁻¹ = −a⁻¹n⁻²(ϖ − n) + n⁻¹u/ρ`.
    pub dag_a_formula: f64,
    /// `†N̄(t) = †𝔞 n⁻² − b⁻¹n⁻¹t/ρ`.
    pub dag_nb_t: f64,
    /// Leading-order prediction `n⁻¹ r̃/ρ` of `†N̄(t)`.
    pub dag_nb_t_leading: f64,
    /// Gaussian curvature from the Gauss equation in the `†` tetrad.
    pub k_gauss: f64,
    /// `n²/(r + 2M)²`.
    pub k_leading: f64,
    /// `|†χ̂| / |tr †χ|`.
    pub chihat_ratio: f64,
    pub area_density: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeSphereReport {
    pub rho: f64,
    pub uhat: f64,
    pub nodes: Vec<ConeNode>,
    /// Area-weighted mean of `t`.
    pub t_bar: f64,
    /// `max |t − t̄|`.
    pub osc_t: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub area: f64,
    /// Area-weighted mean Gaussian curvature.
    pub k_sphere: f64,
    /// `max |K/(n²/(r+2M)²) − 1|` over nodes.
    pub k_rel_dev: f64,
    /// `max |†𝔞(formula) − †𝔞(definition)| / †𝔞`.
    pub dag_a_rel_diff: f64,
    /// `r_max`, which bounds the diameter up to a constant.
    pub diam_bound: f64,
}

/// Geometry of `S_{ρ,û} = H_ρ ∩ {û = const}` on the nodes of `quad`.
pub fn cone_sphere_geometry(
    model: &MetricModel,
    origin: &Coordinates4,
    rho: f64,
    uhat: f64,
    quad: &SphereQuadrature,
    opts: &SliceOptions,
) -> Result<ConeSphereReport, ZsError> {
    let m = model.mass();
    let level = ConeLevel { mass: m };
    let nodes = level_nodes(model, origin, &level, uhat, rho, quad, opts)?;
    let rz = zone_radius(model);
    let r_min = nodes.iter().map(|n| n.x.r()).fold(f64::INFINITY, f64::min);
    if r_min < rz {
        return Err(ZsError::SphereExitsZone { r_min, r_zone: rz });
    }
    let mut out = Vec::with_capacity(nodes.len());
    for nd in &nodes {
        let x = nd.x;
        let jet = curvature_at(model, &x)?;
        let g = jet.g;
        let sc = nd.scalars;
        let (n, _) = model.lapse(x.r())?;
        let ls = l_s(model, &x)?;
        let dag_a = -1.0 / inner(&g, &nd.b, &ls);
        let vp = varpi_from_frames(model, &x, &nd.frames)?;
        let inv = -(sc.rtilde / rho) / (n * n) * (vp.varpi - n) + sc.u / (n * rho);
        let dag_a_formula = 1.0 / inv;
        let dag_nb_t = dag_a / (n * n) - sc.bt() / (n * rho);
        // tetrad: †L = †𝔞L^s, †L̲ = 2𝔅 − †L, †e_A ⊥ {𝔅, L^s}
        let dl = ls * dag_a;
        let dlb = nd.b * 2.0 - dl;
        let dnb = dl - nd.b;
        let e = gram_schmidt(&g, &[nd.b, dnb, nd.frames.ea[0], nd.frames.ea[1]])
            .ok_or(FoliationError::CentralLineDegenerate(sc.rtilde))?;
        let ea = [e[2], e[3]];
        let chi = Matrix2::from_fn(|a, c| {
            cov_l_s(model, &x, &jet.gamma, &ea[a]).map(|d| dag_a * inner(&g, &d, &ea[c])).unwrap_or(f64::NAN)
        });
        let kk = Matrix2::from_fn(|a, c| nd.sample.k_on(&g, &ea[a], &ea[c]).unwrap_or(f64::NAN));
        let chib = kk * 2.0 - chi;
        let chi = (chi + chi.transpose()) * 0.5;
        let chib = (chib + chib.transpose()) * 0.5;
        let hat = |c: &Matrix2<f64>| c - Matrix2::identity() * (0.5 * c.trace());
        let w = contract4(&jet.weyl, &dl, &dlb, &dl, &dlb);
        let s_tr: f64 = ea.iter().map(|v| inner(&jet.schouten, v, v)).sum();
        let k_gauss = -0.25 * chi.trace() * chib.trace() + 0.5 * hat(&chi).component_mul(&hat(&chib)).sum() - 0.25 * w
            + 0.5 * s_tr;
        let rr = x.r() + 2.0 * m;
        out.push(ConeNode {
            omega: nd.omega,
            weight: nd.weight,
            t: sc.t,
            r: x.r(),
            n,
            dag_a,
            dag_a_formula,
            dag_nb_t,
            dag_nb_t_leading: sc.rtilde / (n * rho),
            k_gauss,
            k_leading: n * n / (rr * rr),
            chihat_ratio: hat(&chi).norm() / chi.trace().abs(),
            area_density: level_area_density(&g, &duhat(model, &x)?, &nd.sample, &nd.omega, nd.zeta),
        });
    }
    let area: f64 = out.iter().map(|c| c.weight * c.area_density).sum();
    let t_bar = out.iter().map(|c| c.weight * c.area_density * c.t).sum::<f64>() / area;
    let k_sphere = out.iter().map(|c| c.weight * c.area_density * c.k_gauss).sum::<f64>() / area;
    let fold_max = |f: &dyn Fn(&ConeNode) -> f64| out.iter().map(f).fold(0.0_f64, f64::max);
    Ok(ConeSphereReport {
        rho,
        uhat,
        t_bar,
        osc_t: fold_max(&|c| (c.t - t_bar).abs()),
        t_min: out.iter().map(|c| c.t).fold(f64::INFINITY, f64::min),
        t_max: out.iter().map(|c| c.t).fold(f64::NEG_INFINITY, f64::max),
        area,
        k_sphere,
        k_rel_dev: fold_max(&|c| (c.k_gauss / c.k_leading - 1.0).abs()),
        dag_a_rel_diff: fold_max(&|c| (c.dag_a_formula - c.dag_a).abs() / c.dag_a.abs()),
        diam_bound: fold_max(&|c| c.r),
        nodes: out,
    })
}
