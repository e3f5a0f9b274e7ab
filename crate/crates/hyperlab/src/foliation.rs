//! Leaf scalars, intrinsic frames, the second fundamental form `k` of the
//! hyperboloids, and the spheres `S_{t,ρ} = H_ρ ∩ Σ_t`.
//!
//! Conventions: `t` is coordinate time measured from the origin, `T = n⁻¹∂_t`
//! is the static unit normal of `Σ_t`, and the lapse `b` of the foliation is
//! defined by `⟨𝔅, T⟩ = −b⁻¹t/ρ`. The static slices are totally geodesic,
//! so every term involving their second fundamental form `π̄` vanishes.

use crate::geodesic::{
    static_frame, trace, Direction, FanGrid, GeodesicError, GeodesicRecord, GeodesicSample, TraceMode, TraceOptions,
    DEFAULT_ZETA_MAX,
};
use crate::metric::{curvature_at, metric_at, Coordinates4, MetricError, MetricJet, MetricModel};
use crate::quadrature::{cross, SphereQuadrature};
use crate::tensor::{gram_schmidt, inner, Mat4, Rank3, Vec4};
use nalgebra::{Matrix2, Matrix3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

/// Below this `r̃` the radial frame is undefined.
pub const FRAME_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FoliationError {
    #[error("rho = {0} is not a sample of the record")]
    OutOfRange(f64),
    #[error("r̃ = {0} is below the frame floor; N and N̄ are undefined on the central line")]
    CentralLineDegenerate(f64),
    #[error("boost fields are not populated")]
    MissingJacobi,
    #[error("second fundamental form is not populated")]
    MissingK,
    #[error("fan too coarse: {0}")]
    FanTooCoarse(String),
    #[error("level {level} is not attained on H_rho for rho = {rho}, omega = {omega:?}")]
    Unreachable { level: f64, rho: f64, omega: [f64; 3] },
    #[error("bracket failure: {0}")]
    BracketFailure(String),
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Scalars attached to a point of `H_ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafScalars {
    pub rho: f64,
    pub t: f64,
    pub tau: f64,
    pub b: f64,
    /// Static lapse at the point.
    pub n: f64,
    pub rtilde: f64,
    pub u: f64,
    pub ubar: f64,
    pub a: f64,
}

impl LeafScalars {
    pub fn b_inv(&self) -> f64 {
        1.0 / self.b
    }

    /// `b⁻¹t`.
    pub fn bt(&self) -> f64 {
        self.t / self.b
    }
}

fn find_sample(rec: &GeodesicRecord, rho: f64) -> Result<&GeodesicSample, FoliationError> {
    rec.sample_at(rho).ok_or(FoliationError::OutOfRange(rho))
}

/// Leaf scalars from position and velocity alone.
pub fn scalars_from_state(
    model: &MetricModel,
    origin: &Coordinates4,
    zeta: f64,
    rho: f64,
    x: &Coordinates4,
    b: &Vec4,
) -> Result<LeafScalars, FoliationError> {
    let (n, _) = model.lapse(x.r())?;
    let t = x.t - origin.t;
    let w = n * b[0]; // = b⁻¹t/ρ = −⟨𝔅, T⟩
    let bt = rho * w;
    let rtilde = rho * ((w - 1.0) * (w + 1.0)).max(0.0).sqrt();
    let ubar = bt + rtilde;
    let u = rho * rho / ubar;
    Ok(LeafScalars {
        rho,
        t,
        tau: rho * zeta.cosh(),
        b: t / bt,
        n,
        rtilde,
        u,
        ubar,
        a: rho / rtilde,
    })
}

/// Leaf scalars of `rec` at the sample `rho`.
pub fn leaf_scalars(model: &MetricModel, rec: &GeodesicRecord, rho: f64) -> Result<LeafScalars, FoliationError> {
    let s = find_sample(rec, rho)?;
    scalars_from_state(model, &rec.origin, rec.direction.zeta, s.rho, &s.x, &s.b)
}

/// Fill `scalars` on every sample.
pub fn attach_scalars(model: &MetricModel, rec: &mut GeodesicRecord) -> Result<(), FoliationError> {
    let (origin, zeta) = (rec.origin, rec.direction.zeta);
    for s in &mut rec.samples {
        s.scalars = Some(scalars_from_state(model, &origin, zeta, s.rho, &s.x, &s.b)?);
    }
    Ok(())
}

/// The intrinsic frames at a point of `H_ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSet {
    pub t: Vec4,
    pub n: Vec4,
    pub nbar: Vec4,
    pub b: Vec4,
    pub l: Vec4,
    pub lb: Vec4,
    pub ea: [Vec4; 2],
}

/// Frames from position and velocity.
pub fn frames_from_state(g: &Mat4, n_lapse: f64, b: &Vec4, sc: &LeafScalars) -> Result<FrameSet, FoliationError> {
    if !(sc.rtilde > FRAME_FLOOR) {
        return Err(FoliationError::CentralLineDegenerate(sc.rtilde));
    }
    let t = Vec4::new(1.0 / n_lapse, 0.0, 0.0, 0.0);
    let bsp = Vec4::new(0.0, b[1], b[2], b[3]);
    let nn = inner(g, &bsp, &bsp).sqrt();
    let n = bsp / nn;
    let rho = sc.rho;
    let nbar = t * (sc.rtilde / rho) + n * (sc.bt() / rho);
    // e_A: Gram–Schmidt the two coordinate axes least aligned with N.
    let mut axes = [1usize, 2, 3];
    axes.sort_by(|&i, &j| n[i].abs().total_cmp(&n[j].abs()).then(i.cmp(&j)));
    let seeds = [
        t,
        n,
        Vec4::from_fn(|k, _| if k == axes[0] { 1.0 } else { 0.0 }),
        Vec4::from_fn(|k, _| if k == axes[1] { 1.0 } else { 0.0 }),
    ];
    let e = gram_schmidt(g, &seeds).ok_or(FoliationError::CentralLineDegenerate(sc.rtilde))?;
    let mut ea = [e[2], e[3]];
    // orient (N, e1, e2) positively in the spatial coordinates
    let c = cross(&[n[1], n[2], n[3]], &[ea[0][1], ea[0][2], ea[0][3]]);
    if c[0] * ea[1][1] + c[1] * ea[1][2] + c[2] * ea[1][3] < 0.0 {
        ea[1] = -ea[1];
    }
    Ok(FrameSet { t, n, nbar, b: *b, l: t + n, lb: t - n, ea })
}

/// Frames of `rec` at the sample `rho`.
pub fn frames_at(model: &MetricModel, rec: &GeodesicRecord, rho: f64) -> Result<FrameSet, FoliationError> {
    let s = find_sample(rec, rho)?;
    let sc = scalars_from_state(model, &rec.origin, rec.direction.zeta, s.rho, &s.x, &s.b)?;
    let g = metric_at(model, &s.x, 0)?.g;
    frames_from_state(&g, sc.n, &s.b, &sc)
}

/// Largest residual among the frame decompositions
/// `𝔅 = (b⁻¹t/ρ)T + (r̃/ρ)N`, `N̄ = (r̃/ρ)T + (b⁻¹t/ρ)N`, `2ρ𝔅 = ūL + uL̲`,
/// `2ρN̄ = ūL − uL̲`, `ρT = b⁻¹t𝔅 − r̃N̄`, `ρN = b⁻¹tN̄ − r̃𝔅`, measured in
/// the largest coordinate component and relative to `ū`.
pub fn frame_residuals(f: &FrameSet, sc: &LeafScalars) -> f64 {
    let (rho, bt, rt) = (sc.rho, sc.bt(), sc.rtilde);
    let checks = [
        (f.b - (f.t * (bt / rho) + f.n * (rt / rho))) * rho,
        (f.nbar - (f.t * (rt / rho) + f.n * (bt / rho))) * rho,
        f.b * (2.0 * rho) - (f.l * sc.ubar + f.lb * sc.u),
        f.nbar * (2.0 * rho) - (f.l * sc.ubar - f.lb * sc.u),
        f.t * rho - (f.b * bt - f.nbar * rt),
        f.n * rho - (f.nbar * bt - f.b * rt),
    ];
    checks.iter().map(|v| v.amax()).fold(0.0, f64::max) / sc.ubar.max(1.0)
}

/// Metric-orthonormality residuals of a frame (`⟨T,T⟩ = −1`, `⟨L, L̲⟩ = −2`, …).
pub fn frame_normalization_residual(g: &Mat4, f: &FrameSet) -> f64 {
    let ip = |a: &Vec4, b: &Vec4| inner(g, a, b);
    let checks = [
        ip(&f.t, &f.t) + 1.0,
        ip(&f.b, &f.b) + 1.0,
        ip(&f.n, &f.n) - 1.0,
        ip(&f.nbar, &f.nbar) - 1.0,
        ip(&f.l, &f.lb) + 2.0,
        ip(&f.l, &f.l),
        ip(&f.lb, &f.lb),
        ip(&f.t, &f.n),
        ip(&f.b, &f.nbar),
        ip(&f.ea[0], &f.ea[0]) - 1.0,
        ip(&f.ea[1], &f.ea[1]) - 1.0,
        ip(&f.ea[0], &f.ea[1]),
        ip(&f.ea[0], &f.l),
        ip(&f.ea[1], &f.lb),
    ];
    checks.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// `k` in the orthonormal leaf basis `{N̄, e₁, e₂}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondFundamental {
    pub rho: f64,
    /// `ǩ = k − ḡ/ρ` in the leaf basis.
    pub kcheck: Matrix3<f64>,
}

impl SecondFundamental {
    pub fn k(&self) -> Matrix3<f64> {
        self.kcheck + Matrix3::identity() / self.rho
    }

    pub fn trk(&self) -> f64 {
        self.kcheck.trace() + 3.0 / self.rho
    }

    /// `tr k − 3/ρ`, computed without cancellation.
    pub fn trk_minus_3_over_rho(&self) -> f64 {
        self.kcheck.trace()
    }

    /// Trace-free part `k̂`.
    pub fn khat(&self) -> Matrix3<f64> {
        self.kcheck - Matrix3::identity() * (self.kcheck.trace() / 3.0)
    }

    pub fn k_nbnb(&self) -> f64 {
        self.k()[(0, 0)]
    }

    pub fn k_nba(&self) -> [f64; 2] {
        [self.kcheck[(0, 1)], self.kcheck[(0, 2)]]
    }

    /// `k_AB` on the sphere directions.
    pub fn k_ab(&self) -> Matrix2<f64> {
        let k = self.k();
        Matrix2::new(k[(1, 1)], k[(1, 2)], k[(2, 1)], k[(2, 2)])
    }
}

/// Express the transported `ǩ` of a sample in the leaf basis of `frames`.
pub fn leaf_k(g: &Mat4, s: &GeodesicSample, frames: &FrameSet) -> Result<SecondFundamental, FoliationError> {
    let tk = s.k.as_ref().ok_or(FoliationError::MissingK)?;
    let leaf = [frames.nbar, frames.ea[0], frames.ea[1]];
    let p = Matrix3::from_fn(|x, a| inner(g, &leaf[x], &tk.basis[a]));
    let kc = p * tk.kcheck * p.transpose() + (p * p.transpose() - Matrix3::identity()) / s.rho;
    Ok(SecondFundamental { rho: s.rho, kcheck: (kc + kc.transpose()) * 0.5 })
}

/// Re-integrate `rec` with the leaf transport and attach `k` and the leaf
/// scalars to every sample.
pub fn second_fundamental_transport(
    model: &MetricModel,
    rec: &GeodesicRecord,
    opts: &TraceOptions,
) -> Result<GeodesicRecord, FoliationError> {
    let mut full = trace(model, &rec.origin, &rec.direction, &rec.rho_grid(), TraceMode::Full, opts)?;
    attach_scalars(model, &mut full)?;
    Ok(full)
}

/// Trace with everything populated.
pub fn trace_full(
    model: &MetricModel,
    origin: &Coordinates4,
    dir: &Direction,
    rho_grid: &[f64],
    opts: &TraceOptions,
) -> Result<GeodesicRecord, FoliationError> {
    let mut rec = trace(model, origin, dir, rho_grid, TraceMode::Full, opts)?;
    attach_scalars(model, &mut rec)?;
    Ok(rec)
}

/// Leaf-basis `k` of a fully populated record at `rho`.
pub fn k_at(model: &MetricModel, rec: &GeodesicRecord, rho: f64) -> Result<SecondFundamental, FoliationError> {
    let s = find_sample(rec, rho)?;
    let g = metric_at(model, &s.x, 0)?.g;
    let sc = scalars_from_state(model, &rec.origin, rec.direction.zeta, s.rho, &s.x, &s.b)?;
    let f = frames_from_state(&g, sc.n, &s.b, &sc)?;
    leaf_k(&g, s, &f)
}

/// Three-point first derivative on a possibly nonuniform stencil.
fn d3(xm: f64, x0: f64, xp: f64, fm: f64, f0: f64, fp: f64) -> f64 {
    let h1 = x0 - xm;
    let h2 = xp - x0;
    (h1 * h1 * fp - h2 * h2 * fm + (h2 * h2 - h1 * h1) * f0) / (h1 * h2 * (h1 + h2))
}

fn gamma_ab(gamma: &Rank3, a: &Vec4, b: &Vec4) -> Vec4 {
    Vec4::from_fn(|mu, _| {
        let mut s = 0.0;
        for al in 0..4 {
            for be in 0..4 {
                s += gamma[mu][al][be] * a[al] * b[be];
            }
        }
        s
    })
}

fn check_stencil(grid: &[f64], i: usize, what: &str) -> Result<(), FoliationError> {
    if grid.len() < 3 || i == 0 || i + 1 >= grid.len() {
        return Err(FoliationError::FanTooCoarse(format!("{what} index {i} has no two-sided neighbours")));
    }
    let h = (grid[i + 1] - grid[i]).max(grid[i] - grid[i - 1]);
    if h > 1e-2 {
        return Err(FoliationError::FanTooCoarse(format!("{what} spacing {h} exceeds 1e-2")));
    }
    Ok(())
}

/// Brute-force `k(X,Y) = ⟨∇_X 𝔅, Y⟩` in the leaf basis `{N̄, e₁, e₂}` of the
/// record at `(iz, it, ip)`, by differencing positions and velocities of
/// neighbouring fan geodesics. Independent of the boost fields and of the
/// transport of `k`; meant as a test oracle.
pub fn second_fundamental_fd_oracle(
    model: &MetricModel,
    fan: &FanGrid,
    index: (usize, usize, usize),
    rho: f64,
) -> Result<Matrix3<f64>, FoliationError> {
    let (iz, it, ip) = index;
    check_stencil(&fan.zetas, iz, "zeta")?;
    check_stencil(&fan.thetas, it, "theta")?;
    check_stencil(&fan.phis, ip, "phi")?;
    let get = |a: usize, b: usize, c: usize| -> Result<&GeodesicSample, FoliationError> {
        find_sample(fan.at(a, b, c), rho)
    };
    let s0 = get(iz, it, ip)?;
    let jet = metric_at(model, &s0.x, 1)?;
    let stencils = [
        (get(iz - 1, it, ip)?, get(iz + 1, it, ip)?, [fan.zetas[iz - 1], fan.zetas[iz], fan.zetas[iz + 1]]),
        (get(iz, it - 1, ip)?, get(iz, it + 1, ip)?, [fan.thetas[it - 1], fan.thetas[it], fan.thetas[it + 1]]),
        (get(iz, it, ip - 1)?, get(iz, it, ip + 1)?, [fan.phis[ip - 1], fan.phis[ip], fan.phis[ip + 1]]),
    ];
    let mut xq = [Vec4::zeros(); 3];
    let mut dbq = [Vec4::zeros(); 3];
    let x0 = s0.x.to_vec();
    for (q, (m, p, h)) in stencils.iter().enumerate() {
        let (xm, xp) = (m.x.to_vec(), p.x.to_vec());
        xq[q] = Vec4::from_fn(|mu, _| d3(h[0], h[1], h[2], xm[mu], x0[mu], xp[mu]));
        let db = Vec4::from_fn(|mu, _| d3(h[0], h[1], h[2], m.b[mu], s0.b[mu], p.b[mu]));
        dbq[q] = db + gamma_ab(&jet.gamma, &xq[q], &s0.b);
    }
    let kq = Matrix3::from_fn(|a, b| inner(&jet.g, &dbq[a], &xq[b]));
    let gq = Matrix3::from_fn(|a, b| inner(&jet.g, &xq[a], &xq[b]));
    let gi = gq.try_inverse().ok_or_else(|| FoliationError::FanTooCoarse("degenerate tangent vectors".into()))?;
    let sc = scalars_from_state(model, &fan.origin, fan.zetas[iz], rho, &s0.x, &s0.b)?;
    let f = frames_from_state(&jet.g, sc.n, &s0.b, &sc)?;
    let leaf = [f.nbar, f.ea[0], f.ea[1]];
    let mut c = Matrix3::zeros();
    for (a, y) in leaf.iter().enumerate() {
        let proj = Vector3::from_fn(|q, _| inner(&jet.g, &xq[q], y));
        let coef = gi * proj;
        for q in 0..3 {
            c[(a, q)] = coef[q];
        }
    }
    Ok(c * kq * c.transpose())
}

/// Boost deformation diagnostics over a fan at one `ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationReport {
    pub rho: f64,
    /// `max_i |π^(ℛᵢ)(𝔅,𝔅)| = max_i |2⟨DJᵢ/dρ, 𝔅⟩|` per record.
    pub pi_bb: Vec<f64>,
    /// `Kᵢⱼ − Kⱼᵢ` per record.
    pub pi_br: Vec<Matrix3<f64>>,
    pub pi_bb_max: f64,
    pub pi_br_max: f64,
    /// `max |Kᵢⱼ|`, the scale for `pi_br_max`.
    pub gram_scale: f64,
    /// Max over interior fan points of `|𝔅(tr π^(ℛᵢ)) − 2ℛᵢ(tr k − 3/ρ)|`,
    /// when the fan supports the finite differences.
    pub trpr_residual: Option<f64>,
    /// Largest term of the `tr π` transport, for scale.
    pub trpr_scale: Option<f64>,
}

/// Boost deformation tensor diagnostics on `fan` at `rho`.
pub fn deformation_boost(model: &MetricModel, fan: &FanGrid, rho: f64) -> Result<DeformationReport, FoliationError> {
    let mut rep = DeformationReport {
        rho,
        pi_bb: Vec::with_capacity(fan.records.len()),
        pi_br: Vec::with_capacity(fan.records.len()),
        pi_bb_max: 0.0,
        pi_br_max: 0.0,
        gram_scale: 0.0,
        trpr_residual: None,
        trpr_scale: None,
    };
    for rec in &fan.records {
        if !rec.has_jacobi {
            return Err(FoliationError::MissingJacobi);
        }
        let s = find_sample(rec, rho)?;
        let g = metric_at(model, &s.x, 0)?.g;
        let k = s.gram_k(&g);
        let pbb = (0..3).map(|i| (2.0 * inner(&g, &s.jp[i], &s.b)).abs()).fold(0.0, f64::max);
        let asym = k - k.transpose();
        rep.pi_bb_max = rep.pi_bb_max.max(pbb);
        rep.pi_br_max = rep.pi_br_max.max(asym.amax());
        rep.gram_scale = rep.gram_scale.max(k.amax());
        rep.pi_bb.push(pbb);
        rep.pi_br.push(asym);
    }
    if let Some((res, scale)) = trpr_check(model, fan, rho)? {
        rep.trpr_residual = Some(res);
        rep.trpr_scale = Some(scale);
    }
    Ok(rep)
}

/// `∂v/∂q` for `v = sinh ζ ω(θ, φ)`, columns `q = (ζ, θ, φ)`.
fn v_jacobian(zeta: f64, theta: f64, phi: f64) -> Matrix3<f64> {
    let (sz, cz) = (zeta.sinh(), zeta.cosh());
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Matrix3::new(
        cz * st * cp,
        sz * ct * cp,
        -sz * st * sp,
        cz * st * sp,
        sz * ct * sp,
        sz * st * cp,
        cz * ct,
        -sz * st,
        0.0,
    )
}

fn trpr_check(model: &MetricModel, fan: &FanGrid, rho: f64) -> Result<Option<(f64, f64)>, FoliationError> {
    let (nz, nt, np) = (fan.zetas.len(), fan.thetas.len(), fan.phis.len());
    let ir = match fan.rhos.iter().position(|r| (r - rho).abs() <= 1e-12 * rho.max(1.0)) {
        Some(i) if i > 0 && i + 1 < fan.rhos.len() => i,
        _ => return Ok(None),
    };
    if nz < 3 || nt < 3 || np < 3 || fan.records.iter().any(|r| r.samples.iter().any(|s| s.k.is_none())) {
        return Ok(None);
    }
    // F = sqrt(det ⟨Jᵢ,Jⱼ⟩)/V⁰² is √ḡ·V⁰ in the v-coordinates of H_ρ.
    let field = |iz: usize, it: usize, ip: usize, r: usize| -> Result<(f64, f64, f64), FoliationError> {
        let rec = fan.at(iz, it, ip);
        let s = &rec.samples[r];
        let g = metric_at(model, &s.x, 0)?.g;
        let v0 = rec.direction.zeta.cosh();
        let det = s.gram_j(&g).determinant();
        let kc = s.k.as_ref().ok_or(FoliationError::MissingK)?.kcheck.trace();
        Ok((det.max(0.0).sqrt() / (v0 * v0), (det.max(0.0).sqrt() / (v0 * v0 * v0)), kc))
    };
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for iz in 1..nz - 1 {
        for it in 1..nt - 1 {
            for ip in 1..np - 1 {
                let q = [fan.zetas[iz], fan.thetas[it], fan.phis[ip]];
                let jinv = match v_jacobian(q[0], q[1], q[2]).try_inverse() {
                    Some(m) => m,
                    None => continue,
                };
                let v0 = q[0].cosh();
                // tr π^(ℛᵢ) at ρ-levels ir-1, ir, ir+1, and ℛᵢ(tr k − 3/ρ) at ir.
                let mut trpi = [[0.0; 3]; 3];
                let mut rtrk = [0.0; 3];
                for (slot, r) in [ir - 1, ir, ir + 1].into_iter().enumerate() {
                    let (_, sg0, kc0) = field(iz, it, ip, r)?;
                    let mut dq_f = [0.0; 3];
                    let mut dq_k = [0.0; 3];
                    let nb = [
                        ((iz - 1, it, ip), (iz + 1, it, ip), [fan.zetas[iz - 1], q[0], fan.zetas[iz + 1]]),
                        ((iz, it - 1, ip), (iz, it + 1, ip), [fan.thetas[it - 1], q[1], fan.thetas[it + 1]]),
                        ((iz, it, ip - 1), (iz, it, ip + 1), [fan.phis[ip - 1], q[2], fan.phis[ip + 1]]),
                    ];
                    let (f0, _, _) = field(iz, it, ip, r)?;
                    for (a, (m, p, h)) in nb.iter().enumerate() {
                        let (fm, _, km) = field(m.0, m.1, m.2, r)?;
                        let (fp, _, kp) = field(p.0, p.1, p.2, r)?;
                        dq_f[a] = d3(h[0], h[1], h[2], fm, f0, fp);
                        dq_k[a] = d3(h[0], h[1], h[2], km, kc0, kp);
                    }
                    for i in 0..3 {
                        // ∂/∂vⁱ = Σ_a (∂q^a/∂vⁱ) ∂/∂q^a
                        let dvf: f64 = (0..3).map(|a| jinv[(a, i)] * dq_f[a]).sum();
                        trpi[slot][i] = 2.0 * dvf / sg0;
                        if slot == 1 {
                            let dvk: f64 = (0..3).map(|a| jinv[(a, i)] * dq_k[a]).sum();
                            rtrk[i] = v0 * dvk;
                        }
                    }
                }
                let rr = [fan.rhos[ir - 1], fan.rhos[ir], fan.rhos[ir + 1]];
                for i in 0..3 {
                    let lhs = d3(rr[0], rr[1], rr[2], trpi[0][i], trpi[1][i], trpi[2][i]);
                    let rhs = 2.0 * rtrk[i];
                    worst = worst.max((lhs - rhs).abs());
                    scale = scale.max(lhs.abs()).max(rhs.abs()).max(trpi[1][i].abs());
                }
            }
        }
    }
    Ok(Some((worst, scale)))
}

/// Codazzi check on `H_ρ`: `|div k − ∇̄ tr k + Ric(𝔅, ·)|` at the fan point
/// `(iz, it, ip)`, by differencing over the neighbouring records. Returns
/// `(residual, scale)` with both measured in the induced metric.
pub fn codazzi_residual(
    model: &MetricModel,
    fan: &FanGrid,
    index: (usize, usize, usize),
    rho: f64,
) -> Result<(f64, f64), FoliationError> {
    let (iz, it, ip) = index;
    check_stencil(&fan.zetas, iz, "zeta")?;
    check_stencil(&fan.thetas, it, "theta")?;
    check_stencil(&fan.phis, ip, "phi")?;
    // coordinate tangent vectors X_q = Σᵢ (∂vⁱ/∂q) Jᵢ/V⁰ and k, ḡ in q-coordinates
    let local = |a: usize, b: usize, c: usize| -> Result<(Matrix3<f64>, Matrix3<f64>, f64), FoliationError> {
        let rec = fan.at(a, b, c);
        let s = find_sample(rec, rho)?;
        let tk = s.k.as_ref().ok_or(FoliationError::MissingK)?;
        let g = metric_at(model, &s.x, 0)?.g;
        let jac = v_jacobian(fan.zetas[a], fan.thetas[b], fan.phis[c]);
        let v0 = fan.zetas[a].cosh();
        let xq: Vec<Vec4> =
            (0..3).map(|q| (0..3).fold(Vec4::zeros(), |acc, i| acc + s.j[i] * (jac[(i, q)] / v0))).collect();
        let gq = Matrix3::from_fn(|p, q| inner(&g, &xq[p], &xq[q]));
        let pa = Matrix3::from_fn(|q, e| inner(&g, &xq[q], &tk.basis[e]));
        let kq = pa * tk.kcheck * pa.transpose() + gq / rho;
        Ok((gq, kq, tk.kcheck.trace()))
    };
    let (g0, k0, tr0) = local(iz, it, ip)?;
    let nb = [
        ((iz - 1, it, ip), (iz + 1, it, ip), [fan.zetas[iz - 1], fan.zetas[iz], fan.zetas[iz + 1]]),
        ((iz, it - 1, ip), (iz, it + 1, ip), [fan.thetas[it - 1], fan.thetas[it], fan.thetas[it + 1]]),
        ((iz, it, ip - 1), (iz, it, ip + 1), [fan.phis[ip - 1], fan.phis[ip], fan.phis[ip + 1]]),
    ];
    let mut dg = [Matrix3::zeros(); 3];
    let mut dk = [Matrix3::zeros(); 3];
    let mut dtr = [0.0; 3];
    for (c, (m, p, h)) in nb.iter().enumerate() {
        let (gm, km, tm) = local(m.0, m.1, m.2)?;
        let (gp, kp, tp) = local(p.0, p.1, p.2)?;
        dg[c] = Matrix3::from_fn(|a, b| d3(h[0], h[1], h[2], gm[(a, b)], g0[(a, b)], gp[(a, b)]));
        dk[c] = Matrix3::from_fn(|a, b| d3(h[0], h[1], h[2], km[(a, b)], k0[(a, b)], kp[(a, b)]));
        dtr[c] = d3(h[0], h[1], h[2], tm, tr0, tp);
    }
    let gi = g0.try_inverse().ok_or_else(|| FoliationError::FanTooCoarse("degenerate induced metric".into()))?;
    // Γ̄^d_{ab}
    let mut gam = [[[0.0; 3]; 3]; 3];
    for d in 0..3 {
        for a in 0..3 {
            for b in 0..3 {
                let mut s = 0.0;
                for e in 0..3 {
                    s += 0.5 * gi[(d, e)] * (dg[a][(e, b)] + dg[b][(e, a)] - dg[e][(a, b)]);
                }
                gam[d][a][b] = s;
            }
        }
    }
    let rec = fan.at(iz, it, ip);
    let s = find_sample(rec, rho)?;
    let jet = curvature_at(model, &s.x)?;
    let jac = v_jacobian(fan.zetas[iz], fan.thetas[it], fan.phis[ip]);
    let v0 = fan.zetas[iz].cosh();
    let xq: Vec<Vec4> =
        (0..3).map(|q| (0..3).fold(Vec4::zeros(), |acc, i| acc + s.j[i] * (jac[(i, q)] / v0))).collect();
    let mut res = Vector3::zeros();
    let mut scale: f64 = 0.0;
    for c in 0..3 {
        let mut div = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                let mut cov = dk[a][(b, c)];
                for d in 0..3 {
                    cov -= gam[d][a][b] * k0[(d, c)] + gam[d][a][c] * k0[(b, d)];
                }
                div += gi[(a, b)] * cov;
            }
        }
        let ric = inner(&jet.ricci, &s.b, &xq[c]);
        // ∇̄ tr k = ∇̄ (tr k − 3/ρ) since ρ is constant on the leaf
        res[c] = div - dtr[c] + ric;
        scale = scale.max(div.abs()).max(dtr[c].abs()).max(ric.abs());
    }
    let norm = (res.transpose() * gi * res)[(0, 0)].max(0.0).sqrt();
    Ok((norm, scale))
}

/// Null second fundamental forms of a sphere node relative to `L = T + N`,
/// `L̲ = T − N` (`⟨L, L̲⟩ = −2`), in the basis `{e₁, e₂}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullForms {
    pub trchi: f64,
    pub trchib: f64,
    pub chihat: Matrix2<f64>,
    pub chibhat: Matrix2<f64>,
}

/// One quadrature node of a sphere `S_{t,ρ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceNode {
    pub omega: [f64; 3],
    /// Weight for `dΩ` on the unit sphere of directions.
    pub weight: f64,
    pub zeta: f64,
    pub x: Coordinates4,
    pub b: Vec4,
    pub frames: FrameSet,
    pub scalars: LeafScalars,
    pub k: SecondFundamental,
    /// `dμ_γ/dΩ`: induced area per unit solid angle of directions.
    pub area_density: f64,
    pub null: Option<NullForms>,
    pub sample: GeodesicSample,
}

/// A sphere `S_{t,ρ}` sampled at the nodes of a sphere quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafSlice {
    pub t: f64,
    pub rho: f64,
    pub nodes: Vec<SliceNode>,
    pub area: f64,
    pub area_radius: f64,
}

/// Options for locating level sets on `H_ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceOptions {
    pub trace: TraceOptions,
    pub zeta_max: f64,
    /// Relative tolerance on the level value.
    pub root_tol: f64,
}

impl Default for SliceOptions {
    fn default() -> Self {
        Self { trace: TraceOptions::default(), zeta_max: DEFAULT_ZETA_MAX, root_tol: 1e-10 }
    }
}

/// A scalar function on spacetime whose level sets cut `H_ρ` into spheres.
pub trait LevelFunction: Sync {
    fn value(&self, model: &MetricModel, origin: &Coordinates4, x: &Coordinates4) -> Result<f64, FoliationError>;
    /// Differential `dF` as a covector.
    fn differential(&self, model: &MetricModel, x: &Coordinates4) -> Result<Vec4, FoliationError>;
    /// Rough scale of the level value, for the root tolerance.
    fn scale(&self, level: f64) -> f64 {
        level.abs().max(1.0)
    }
    /// Rapidity guess for the flat-space problem.
    fn flat_guess(&self, level: f64, rho: f64) -> Option<f64>;
    /// `+1` if F increases with ζ along H_ρ, `−1` if it decreases.
    fn direction(&self) -> f64;
}

/// `F = t − t(O)`.
pub struct TimeLevel;

impl LevelFunction for TimeLevel {
    fn value(&self, _: &MetricModel, origin: &Coordinates4, x: &Coordinates4) -> Result<f64, FoliationError> {
        Ok(x.t - origin.t)
    }
    fn differential(&self, _: &MetricModel, _: &Coordinates4) -> Result<Vec4, FoliationError> {
        Ok(Vec4::new(1.0, 0.0, 0.0, 0.0))
    }
    fn flat_guess(&self, level: f64, rho: f64) -> Option<f64> {
        (level > rho).then(|| (level / rho).acosh())
    }
    fn direction(&self) -> f64 {
        1.0
    }
}

fn level_at(
    model: &MetricModel,
    origin: &Coordinates4,
    f: &dyn LevelFunction,
    omega: &[f64; 3],
    zeta: f64,
    rho: f64,
    opts: &SliceOptions,
) -> Result<f64, FoliationError> {
    let dir = Direction::new(zeta, *omega)?;
    let rec = trace(model, origin, &dir, &[rho], TraceMode::Geodesic, &opts.trace)?;
    if rec.truncated || rec.samples.is_empty() {
        return Err(FoliationError::Unreachable { level: f64::NAN, rho, omega: *omega });
    }
    f.value(model, origin, &rec.samples[0].x)
}

/// Rapidity `ζ` at which the geodesic in direction `omega` meets `F = level`
/// at proper time `rho`: bisection down to width `1e-3` inside a verified
/// monotone bracket, then safeguarded secant.
pub fn find_level_zeta(
    model: &MetricModel,
    origin: &Coordinates4,
    f: &dyn LevelFunction,
    level: f64,
    omega: &[f64; 3],
    rho: f64,
    opts: &SliceOptions,
) -> Result<f64, FoliationError> {
    find_level_root(model, origin, f, level, omega, rho, opts).map(|(z, _)| z)
}

/// Root together with the last secant slope of `sgn (F − level)` in `ζ`.
fn find_level_root(
    model: &MetricModel,
    origin: &Coordinates4,
    f: &dyn LevelFunction,
    level: f64,
    omega: &[f64; 3],
    rho: f64,
    opts: &SliceOptions,
) -> Result<(f64, f64), FoliationError> {
    let sgn = f.direction();
    let tol = opts.root_tol * f.scale(level);
    let g = |z: f64| -> Result<f64, FoliationError> {
        Ok(sgn * (level_at(model, origin, f, omega, z, rho, opts)? - level))
    };
    let unreachable = || FoliationError::Unreachable { level, rho, omega: *omega };
    let zmax = opts.zeta_max;
    // bracket around the flat guess, widening geometrically
    let guess = f.flat_guess(level, rho).unwrap_or(0.5 * zmax).clamp(0.0, zmax);
    let mut evals: Vec<(f64, f64)> = Vec::new();
    let eval = |z: f64, evals: &mut Vec<(f64, f64)>| -> Result<f64, FoliationError> {
        let v = g(z)?;
        evals.push((z, v));
        Ok(v)
    };
    let mut width = 0.02;
    let (mut lo, mut hi);
    let (mut flo, mut fhi);
    loop {
        lo = (guess - width).max(0.0);
        hi = (guess + width).min(zmax);
        flo = eval(lo, &mut evals)?;
        fhi = eval(hi, &mut evals)?;
        if flo <= 0.0 && fhi >= 0.0 {
            break;
        }
        if lo == 0.0 && hi == zmax {
            return Err(unreachable());
        }
        width *= 4.0;
    }
    let bracket_slope = (fhi - flo) / (hi - lo);
    if flo == 0.0 {
        return Ok((lo, bracket_slope));
    }
    if fhi == 0.0 {
        return Ok((hi, bracket_slope));
    }
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        let fm = eval(mid, &mut evals)?;
        if fm <= 0.0 {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    // secant, falling back to bisection if it leaves the bracket
    let (mut z0, mut f0, mut z1, mut f1) = (lo, flo, hi, fhi);
    let mut root = None;
    let mut slope = (f1 - f0) / (z1 - z0);
    for _ in 0..60 {
        let mut z = z1 - f1 * (z1 - z0) / (f1 - f0);
        if !(z > lo && z < hi) || !z.is_finite() {
            z = 0.5 * (lo + hi);
        }
        let fz = eval(z, &mut evals)?;
        if z != z1 && fz != f1 {
            slope = (fz - f1) / (z - z1);
        }
        if fz.abs() <= tol {
            root = Some(z);
            break;
        }
        if fz < 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        z0 = z1;
        f0 = f1;
        z1 = z;
        f1 = fz;
        if hi - lo <= 1e-15 * hi.max(1.0) {
            root = Some(z);
            break;
        }
    }
    let root = root.ok_or_else(|| FoliationError::BracketFailure("secant did not converge".into()))?;
    // monotonicity over every evaluated rapidity
    evals.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in evals.windows(2) {
        if w[1].0 > w[0].0 && w[1].1 < w[0].1 - 10.0 * tol {
            return Err(FoliationError::BracketFailure(format!(
                "level function not monotone in zeta near {} (omega = {omega:?})",
                w[0].0
            )));
        }
    }
    Ok((root, slope))
}

/// Area per unit solid angle of the level set `{F = const} ∩ H_ρ`,
/// parametrized by directions at `O`, computed from the boost fields.
pub fn level_area_density(g: &Mat4, df: &Vec4, s: &GeodesicSample, omega: &[f64; 3], zeta: f64) -> f64 {
    let v0 = zeta.cosh();
    let sz = zeta.sinh();
    // ∂F/∂vⁱ = dF(Jᵢ)/V⁰
    let gv: Vec<f64> = (0..3).map(|i| df.dot(&s.j[i]) / v0).collect();
    let w = Vector3::from_column_slice(omega);
    let (e1, e2) = tangent_pair(omega);
    let gw = gv[0] * w[0] + gv[1] * w[1] + gv[2] * w[2];
    let xs: Vec<Vec4> = [e1, e2]
        .iter()
        .map(|ea| {
            let ga = gv[0] * ea[0] + gv[1] * ea[1] + gv[2] * ea[2];
            let ds = -sz * ga / gw;
            let dv = ea * sz + w * ds;
            (0..3).fold(Vec4::zeros(), |acc, i| acc + s.j[i] * (dv[i] / v0))
        })
        .collect();
    let m = Matrix2::new(inner(g, &xs[0], &xs[0]), inner(g, &xs[0], &xs[1]), inner(g, &xs[1], &xs[0]), inner(g, &xs[1], &xs[1]));
    m.determinant().max(0.0).sqrt()
}

/// Orthonormal pair spanning `ω^⊥` in ℝ³.
pub fn tangent_pair(omega: &[f64; 3]) -> (Vector3<f64>, Vector3<f64>) {
    let w = Vector3::from_column_slice(omega);
    let seed = if w[2].abs() < 0.9 { Vector3::z() } else { Vector3::x() };
    let e1 = seed.cross(&w).normalize();
    let e2 = w.cross(&e1);
    (e1, e2)
}

/// Locate the level set `F = level` on `H_ρ` at every quadrature node and
/// attach frames, `k` and area densities.
pub fn level_nodes(
    model: &MetricModel,
    origin: &Coordinates4,
    f: &dyn LevelFunction,
    level: f64,
    rho: f64,
    quad: &SphereQuadrature,
    opts: &SliceOptions,
) -> Result<Vec<SliceNode>, FoliationError> {
    quad.nodes
        .par_iter()
        .zip(quad.weights.par_iter())
        .map(|(omega, &weight)| {
            let (zeta, s) = full_level_node(model, origin, f, level, omega, rho, opts)?;
            let g = metric_at(model, &s.x, 0)?.g;
            let sc = scalars_from_state(model, origin, zeta, rho, &s.x, &s.b)?;
            let frames = frames_from_state(&g, sc.n, &s.b, &sc)?;
            let k = leaf_k(&g, &s, &frames)?;
            let df = f.differential(model, &s.x)?;
            let area_density = level_area_density(&g, &df, &s, omega, zeta);
            Ok(SliceNode {
                omega: *omega,
                weight,
                zeta,
                x: s.x,
                b: s.b,
                frames,
                scalars: sc,
                k,
                area_density,
                null: None,
                sample: s,
            })
        })
        .collect()
}

/// Root in `ζ` refined against full traces, so the node data and the level
/// agree to `root_tol` on the same integration. The rapidity search runs on
/// cheap geodesic-only traces whose error differs at the tolerance level.
fn full_level_node(
    model: &MetricModel,
    origin: &Coordinates4,
    f: &dyn LevelFunction,
    level: f64,
    omega: &[f64; 3],
    rho: f64,
    opts: &SliceOptions,
) -> Result<(f64, GeodesicSample), FoliationError> {
    let (mut zeta, slope) = find_level_root(model, origin, f, level, omega, rho, opts)?;
    let tol = opts.root_tol * f.scale(level);
    let sgn = f.direction();
    for _ in 0..8 {
        let dir = Direction::new(zeta, *omega)?;
        let rec = trace(model, origin, &dir, &[rho], TraceMode::Full, &opts.trace)?;
        if rec.truncated {
            return Err(FoliationError::Unreachable { level, rho, omega: *omega });
        }
        let s = rec.samples.into_iter().next().ok_or(FoliationError::OutOfRange(rho))?;
        let fz = sgn * (f.value(model, origin, &s.x)? - level);
        if fz.abs() <= tol || !(slope > 0.0) {
            return Ok((zeta, s));
        }
        zeta = (zeta - fz / slope).clamp(0.0, opts.zeta_max);
    }
    Err(FoliationError::BracketFailure("full-trace refinement did not converge".into()))
}

/// The sphere `S_{t,ρ}` on the nodes of `quad`.
pub fn leaf_slice(
    model: &MetricModel,
    origin: &Coordinates4,
    t: f64,
    rho: f64,
    quad: &SphereQuadrature,
    opts: &SliceOptions,
) -> Result<LeafSlice, FoliationError> {
    let nodes = level_nodes(model, origin, &TimeLevel, t, rho, quad, opts)?;
    let area: f64 = nodes.iter().map(|n| n.weight * n.area_density).sum();
    Ok(LeafSlice { t, rho, nodes, area, area_radius: (area / (4.0 * std::f64::consts::PI)).sqrt() })
}

/// Null forms from `k` with `π̄ = 0`: `χ_AB = (ρ/r̃) k_AB = −χ̲_AB`.
pub fn null_forms_of(k: &SecondFundamental, sc: &LeafScalars) -> NullForms {
    let c = sc.rho / sc.rtilde;
    let kab = k.k_ab();
    // tr_A k = ⅔ tr k − k̂_{N̄N̄}, kept in regularized form
    let delta_b = k.khat()[(0, 0)];
    let trchi = c * (2.0 / 3.0 * k.trk() - delta_b);
    let hat = (kab - Matrix2::identity() * (0.5 * kab.trace())) * c;
    NullForms { trchi, trchib: -trchi, chihat: hat, chibhat: -hat }
}

/// Populate `trχ`, `trχ̲`, `χ̂`, `χ̲̂` on every node.
pub fn slice_null_forms(slice: &mut LeafSlice) {
    for n in &mut slice.nodes {
        n.null = Some(null_forms_of(&n.k, &n.scalars));
    }
}

/// Refined-grid area oracle for `S_{t,ρ}`: node positions on a uniform
/// `(θ, φ)` grid about `axis`, tangent vectors by central differences of
/// positions, area by the composite Simpson rule. Independent of the boost
/// fields. Returns the area radius. `n_theta` must be even.
pub fn area_fd_oracle(
    model: &MetricModel,
    origin: &Coordinates4,
    t: f64,
    rho: f64,
    axis: [f64; 3],
    n_theta: usize,
    n_phi: usize,
    opts: &SliceOptions,
) -> Result<f64, FoliationError> {
    assert!(n_theta % 2 == 0 && n_theta >= 2);
    let frame = crate::quadrature::polar_frame(axis);
    let h = 1e-4;
    let pos = |th: f64, ph: f64| -> Result<(Vec4, Mat4), FoliationError> {
        let om = crate::quadrature::direction_in_frame(&frame, th, ph);
        let z = find_level_zeta(model, origin, &TimeLevel, t, &om, rho, opts)?;
        let rec = trace(model, origin, &Direction::new(z, om)?, &[rho], TraceMode::Geodesic, &opts.trace)?;
        let x = rec.samples[0].x;
        Ok((x.to_vec(), metric_at(model, &x, 0)?.g))
    };
    let pi = std::f64::consts::PI;
    let dth = pi / n_theta as f64;
    let mut total = 0.0;
    let rows: Vec<Result<f64, FoliationError>> = (0..=n_theta)
        .into_par_iter()
        .map(|i| {
            let th = i as f64 * dth;
            if i == 0 || i == n_theta {
                return Ok(0.0); // area element vanishes at the poles
            }
            let mut row = 0.0;
            for j in 0..n_phi {
                let ph = 2.0 * pi * j as f64 / n_phi as f64;
                let (x0, g) = pos(th, ph)?;
                let _ = x0;
                let xt = (pos(th + h, ph)?.0 - pos(th - h, ph)?.0) / (2.0 * h);
                let xp = (pos(th, ph + h)?.0 - pos(th, ph - h)?.0) / (2.0 * h);
                let m = Matrix2::new(inner(&g, &xt, &xt), inner(&g, &xt, &xp), inner(&g, &xp, &xt), inner(&g, &xp, &xp));
                row += m.determinant().max(0.0).sqrt() * 2.0 * pi / n_phi as f64;
            }
            Ok(row)
        })
        .collect();
    for (i, r) in rows.into_iter().enumerate() {
        let w = if i == 0 || i == n_theta {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        total += w * r?;
    }
    let area = total * dth / 3.0;
    Ok((area / (4.0 * pi)).sqrt())
}

/// Residual of one structure equation over a record.
#[derive(Debug, Clone, PartialEq)]
pub struct EquationResidual {
    pub name: &'static str,
    /// `max |lhs − rhs|` over samples.
    pub max_abs: f64,
    /// `max |lhs − rhs| / scale` over samples, with scale the largest term.
    pub max_rel: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureResiduals {
    pub equations: Vec<EquationResidual>,
    /// Samples skipped because the stencil straddled a gluing radius or the
    /// frames were undefined.
    pub skipped: usize,
}

impl StructureResiduals {
    pub fn get(&self, name: &str) -> Option<&EquationResidual> {
        self.equations.iter().find(|e| e.name == name)
    }
}

/// Relative stencil half-width for the `ρ`-derivatives.
pub const STENCIL_H: f64 = 5e-3;

/// Five-point derivative `[f(−2h) − 8f(−h) + 8f(h) − f(2h)]/(12h)`.
pub fn d5(f: &[f64; 5], h: f64) -> f64 {
    (f[0] - 8.0 * f[1] + 8.0 * f[3] - f[4]) / (12.0 * h)
}

/// Directional derivative of `f(x, 𝔅)` along the leaf vector
/// `X = Σ cᵢ Jᵢ`, moving the velocity by `∂_X 𝔅 = Σ cᵢ (DJᵢ/dρ − Γ(Jᵢ, 𝔅))`.
fn leaf_derivative<F>(jet: &MetricJet, s: &GeodesicSample, c: &Vector3<f64>, f: F) -> f64
where
    F: Fn(&Coordinates4, &Vec4) -> f64,
{
    let dx = (0..3).fold(Vec4::zeros(), |acc, i| acc + s.j[i] * c[i]);
    let db = (0..3).fold(Vec4::zeros(), |acc, i| acc + (s.jp[i] - gamma_ab(&jet.gamma, &s.j[i], &s.b)) * c[i]);
    let scale = dx.amax().max(1e-300);
    let eps = 1e-4 / scale * s.x.to_vec().amax().max(1.0);
    let at = |e: f64| f(&Coordinates4::from_vec(&(s.x.to_vec() + dx * e)), &(s.b + db * e));
    let d1 = (at(eps) - at(-eps)) / (2.0 * eps);
    let d2 = (at(0.5 * eps) - at(-0.5 * eps)) / eps;
    (4.0 * d2 - d1) / 3.0
}

/// Coefficients of a leaf vector in the boost basis.
fn in_boost_basis(g: &Mat4, s: &GeodesicSample, y: &Vec4) -> Option<Vector3<f64>> {
    let gram = s.gram_j(g);
    let rhs = Vector3::from_fn(|i, _| inner(g, &s.j[i], y));
    gram.try_inverse().map(|gi| gi * rhs)
}

/// Evaluate the structure equations along `rec`, differentiating the left
/// sides numerically (five-point stencils in `ρ` along the geodesic, boost
/// fields across it) and assembling the right sides from `k`, the frames and
/// pointwise curvature. Equations, in order: transport of `n − b⁻¹`
/// (`lapse_transport`), of `log(t/τ)` (`t_over_tau`), Raychaudhuri for `tr k`
/// and for `tr ǩ` (`raychaudhuri`, `raychaudhuri_check`), transport of `k̂`
/// (`tracefree_transport`), `T(u)` (`t_of_u`), `N̄(b⁻¹)` (`nbar_binv`) and the
/// `ζ̄` identity (`zetabar`).
pub fn structure_residuals(
    model: &MetricModel,
    rec: &GeodesicRecord,
    opts: &TraceOptions,
) -> Result<StructureResiduals, FoliationError> {
    let (r_in, r_out) = match model.kind() {
        crate::metric::MetricKind::GluedSchwarzschild { r_in, r_out, .. } => (r_in, r_out),
        _ => (f64::NAN, f64::NAN),
    };
    let centers: Vec<f64> = rec.samples.iter().map(|s| s.rho).filter(|&r| r > 0.0).collect();
    let mut grid = Vec::new();
    for &c in &centers {
        let h = STENCIL_H * c;
        for m in -2..=2 {
            grid.push(c + m as f64 * h);
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1.0));
    let full = trace_full(model, &rec.origin, &rec.direction, &grid, opts)?;
    let names = [
        "lapse_transport",
        "t_over_tau",
        "raychaudhuri",
        "raychaudhuri_check",
        "tracefree_transport",
        "t_of_u",
        "nbar_binv",
        "zetabar",
    ];
    let mut acc: Vec<EquationResidual> =
        names.iter().map(|n| EquationResidual { name: n, max_abs: 0.0, max_rel: 0.0, samples: 0 }).collect();
    let mut push = |i: usize, lhs: f64, rhs: f64, scale: f64| {
        let r = (lhs - rhs).abs();
        let e = &mut acc[i];
        e.max_abs = e.max_abs.max(r);
        if scale > 0.0 {
            e.max_rel = e.max_rel.max(r / scale);
        } else if r > 0.0 {
            e.max_rel = f64::INFINITY;
        }
        e.samples += 1;
    };
    let mut skipped = 0;
    let origin = rec.origin;
    let zeta = rec.direction.zeta;
    for &c in &centers {
        let h = STENCIL_H * c;
        let st: Vec<&GeodesicSample> = match (-2..=2).map(|m| full.sample_at(c + m as f64 * h)).collect() {
            Some(v) => v,
            None => {
                skipped += 1;
                continue;
            }
        };
        let rs: Vec<f64> = st.iter().map(|s| s.x.r()).collect();
        let (rmin, rmax) = rs.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), &r| (a.min(r), b.max(r)));
        let straddles = |rb: f64| rb.is_finite() && rmin <= rb && rb <= rmax;
        if straddles(r_in) || straddles(r_out) {
            skipped += 1;
            continue;
        }
        let sc: Vec<LeafScalars> = st
            .iter()
            .map(|s| scalars_from_state(model, &origin, zeta, s.rho, &s.x, &s.b))
            .collect::<Result<_, _>>()?;
        let s0 = st[2];
        let sc0 = sc[2];
        if sc0.rtilde <= 1e-3 {
            skipped += 1;
            continue;
        }
        let jet = curvature_at(model, &s0.x)?;
        let g = jet.g;
        let frames = frames_from_state(&g, sc0.n, &s0.b, &sc0)?;
        let kk = leaf_k(&g, s0, &frames)?;
        let rho = c;
        let r = s0.x.r();
        let (n, dn) = model.lapse(r)?;
        let xhat = if r > 0.0 { [s0.x.x1 / r, s0.x.x2 / r, s0.x.x3 / r] } else { [0.0; 3] };
        let radial = |v: &Vec4| xhat[0] * v[1] + xhat[1] * v[2] + xhat[2] * v[3];
        let n_logn = dn * radial(&frames.n) / n; // N(log n) = ⟨D_T T, N⟩
        let drho_n = dn * radial(&s0.b); // ∂_ρ n = 𝔅(n)
        let ser = |f: &dyn Fn(&GeodesicSample, &LeafScalars) -> f64| -> [f64; 5] {
            [f(st[0], &sc[0]), f(st[1], &sc[1]), f(st[2], &sc[2]), f(st[3], &sc[3]), f(st[4], &sc[4])]
        };

        // n − b⁻¹
        let d_nb = d5(&ser(&|_, s| s.n - s.b_inv()), h);
        let lhs = d_nb + sc0.b_inv() / (sc0.n * rho) * (sc0.n - sc0.b_inv());
        let t1 = sc0.rtilde * sc0.b_inv() / rho * n_logn;
        push(0, lhs, t1 + drho_n, d_nb.abs().max(lhs.abs()).max(t1.abs()).max(drho_n.abs()));

        // log(t/τ)
        let lhs = d5(&ser(&|_, s| (s.t / s.tau).ln()), h);
        let rhs = (sc0.b_inv() / sc0.n - 1.0) / rho;
        push(1, lhs, rhs, lhs.abs().max(rhs.abs()).max(1.0 / rho * 1e-3));

        // Raychaudhuri in both forms
        let kcs: Vec<f64> = st.iter().map(|s| s.k.as_ref().map(|k| k.kcheck.trace()).unwrap_or(f64::NAN)).collect();
        let trk: Vec<f64> = st.iter().zip(&kcs).map(|(s, kc)| kc + 3.0 / s.rho).collect();
        let tk0 = s0.k.as_ref().ok_or(FoliationError::MissingK)?;
        let khat0 = kk.khat();
        let khat2 = khat0.component_mul(&khat0).sum();
        let r_bb = inner(&jet.ricci, &s0.b, &s0.b);
        let d_trk = d5(&[trk[0], trk[1], trk[2], trk[3], trk[4]], h);
        let q = trk[2] * trk[2] / 3.0;
        push(2, d_trk + q, -r_bb - khat2, d_trk.abs().max(q).max(r_bb.abs()).max(khat2));
        let d_kc = d5(&[kcs[0], kcs[1], kcs[2], kcs[3], kcs[4]], h);
        let lin = 2.0 / rho * kcs[2];
        let quad = kcs[2] * kcs[2] / 3.0;
        push(3, d_kc + lin, -quad - r_bb - khat2, d_kc.abs().max(lin.abs()).max(quad).max(r_bb.abs()).max(khat2));

        // trace-free transport, componentwise in the parallel basis
        let khat_of = |s: &GeodesicSample| {
            let kc = s.k.as_ref().unwrap().kcheck;
            kc - Matrix3::identity() * (kc.trace() / 3.0)
        };
        let kh: Vec<Matrix3<f64>> = st.iter().map(|s| khat_of(s)).collect();
        let e = &tk0.basis;
        let mut riem_bb = Matrix3::zeros();
        for a in 0..3 {
            for bb in 0..3 {
                riem_bb[(a, bb)] = crate::tensor::contract4(&jet.riemann, &s0.b, &e[a], &s0.b, &e[bb]);
            }
        }
        let rhat = riem_bb - Matrix3::identity() * (r_bb / 3.0);
        let kh0 = kh[2];
        let kh2 = kh0 * kh0;
        let hot = kh2 - Matrix3::identity() * (kh0.component_mul(&kh0).sum() / 3.0);
        let mut worst = 0.0_f64;
        let mut scale = 0.0_f64;
        for a in 0..3 {
            for bb in 0..3 {
                let d = d5(&[kh[0][(a, bb)], kh[1][(a, bb)], kh[2][(a, bb)], kh[3][(a, bb)], kh[4][(a, bb)]], h);
                let l2 = 2.0 / 3.0 * trk[2] * kh0[(a, bb)];
                let res = d + l2 + rhat[(a, bb)] + hot[(a, bb)];
                worst = worst.max(res.abs());
                scale = scale.max(d.abs()).max(l2.abs()).max(rhat[(a, bb)].abs()).max(hot[(a, bb)].abs());
            }
        }
        push(4, worst, 0.0, scale);

        // leaf derivatives through the boost fields
        let jet1 = metric_at(model, &s0.x, 1)?;
        let Some(cn) = in_boost_basis(&g, s0, &frames.nbar) else {
            skipped += 1;
            continue;
        };
        let bt_of = |x: &Coordinates4, b: &Vec4| -> f64 {
            let (n, _) = model.lapse(x.r()).unwrap_or((f64::NAN, 0.0));
            rho * n * b[0]
        };
        let u_of = |x: &Coordinates4, b: &Vec4| -> f64 {
            let w = bt_of(x, b) / rho;
            let rt = rho * ((w - 1.0) * (w + 1.0)).max(0.0).sqrt();
            rho * rho / (rho * w + rt)
        };
        let nb_u = leaf_derivative(&jet1, s0, &cn, u_of);
        let b_u = d5(&ser(&|_, s| s.u), h);
        let t_u = sc0.bt() / rho * b_u - sc0.rtilde / rho * nb_u;
        let kc_nn = kk.kcheck[(0, 0)];
        let rhs = 1.0 + sc0.u * (kc_nn / sc0.a + n_logn);
        push(5, t_u, rhs, t_u.abs().max(1.0).max((sc0.u * kc_nn / sc0.a).abs()));

        let nb_bt = leaf_derivative(&jet1, s0, &cn, bt_of);
        let b_bt = d5(&ser(&|_, s| s.bt()), h);
        let n_binv = (sc0.bt() / rho * nb_bt - sc0.rtilde / rho * b_bt) / sc0.t;
        let rhs = sc0.rtilde / sc0.t * (sc0.bt() / rho * kc_nn);
        push(6, n_binv, rhs, n_binv.abs().max(rhs.abs()).max(sc0.b_inv() / rho * 1e-3));

        // ζ̄_A = ⟨D_𝔅 N̄, e_A⟩ = −(b⁻¹t/r̃) e_A(log n)
        let nbars: Vec<Vec4> = st
            .iter()
            .zip(&sc)
            .map(|(s, scs)| {
                let gg = metric_at(model, &s.x, 0).map(|j| j.g).unwrap_or(g);
                frames_from_state(&gg, scs.n, &s.b, scs).map(|f| f.nbar).unwrap_or(Vec4::zeros())
            })
            .collect();
        let dnb = Vec4::from_fn(|mu, _| d5(&[nbars[0][mu], nbars[1][mu], nbars[2][mu], nbars[3][mu], nbars[4][mu]], h))
            + gamma_ab(&jet1.gamma, &s0.b, &frames.nbar);
        let mut worst = 0.0_f64;
        let mut scale = 0.0_f64;
        for ea in &frames.ea {
            let lhs = inner(&g, &dnb, ea);
            let rhs = -sc0.bt() / sc0.rtilde * dn * radial(ea) / n;
            worst = worst.max((lhs - rhs).abs());
            scale = scale.max(lhs.abs()).max(rhs.abs());
        }
        push(7, worst, 0.0, scale.max(1.0 / rho * 1e-3));
    }
    Ok(StructureResiduals { equations: acc, skipped })
}

/// Five equally spaced samples `ρ + mh`, `m = −2..2`, around every positive
/// sample of `rec`, re-integrated with everything populated. Centers whose
/// stencil is not available (truncation) are dropped.
pub fn rho_stencils(
    model: &MetricModel,
    rec: &GeodesicRecord,
    opts: &TraceOptions,
) -> Result<Vec<(f64, f64, [GeodesicSample; 5])>, FoliationError> {
    let centers: Vec<f64> = rec.samples.iter().map(|s| s.rho).filter(|&r| r > 0.0).collect();
    let mut grid = Vec::with_capacity(5 * centers.len());
    for &c in &centers {
        for m in -2..=2 {
            grid.push(c + m as f64 * STENCIL_H * c);
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1.0));
    let full = trace_full(model, &rec.origin, &rec.direction, &grid, opts)?;
    let mut out = Vec::with_capacity(centers.len());
    for &c in &centers {
        let h = STENCIL_H * c;
        let st: Option<Vec<GeodesicSample>> = (-2..=2).map(|m| full.sample_at(c + m as f64 * h).cloned()).collect();
        if let Some(v) = st {
            if let Ok(arr) = <[GeodesicSample; 5]>::try_from(v) {
                out.push((c, h, arr));
            }
        }
    }
    Ok(out)
}

/// Whether the radii of a stencil straddle `rb`.
pub fn stencil_straddles(st: &[GeodesicSample; 5], rb: f64) -> bool {
    let (lo, hi) = st.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), s| (a.min(s.x.r()), b.max(s.x.r())));
    rb.is_finite() && lo <= rb && rb <= hi
}

/// Static frame at the origin, re-exported for callers assembling fans.
pub fn origin_frame(model: &MetricModel, origin: &Coordinates4) -> Result<[Vec4; 4], FoliationError> {
    Ok(static_frame(model, origin)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minkowski_leaf_scalars() {
        let m = MetricModel::minkowski();
        let d = Direction::new(0.5, [1.0, 0.0, 0.0]).unwrap();
        let rec = trace_full(&m, &Coordinates4::default(), &d, &[3.0], &TraceOptions::default()).unwrap();
        let s = leaf_scalars(&m, &rec, 3.0).unwrap();
        assert!((s.t - 3.0 * 0.5f64.cosh()).abs() < 1e-9);
        assert!((s.b - 1.0).abs() < 1e-12);
        assert!((s.rtilde - 3.0 * 0.5f64.sinh()).abs() < 1e-9);
        assert!((s.u - 3.0 * (-0.5f64).exp()).abs() < 1e-9);
        assert!((s.ubar - 3.0 * 0.5f64.exp()).abs() < 1e-9);
        assert!((s.u * s.ubar - 9.0).abs() < 1e-12);
        let k = k_at(&m, &rec, 3.0).unwrap();
        assert!((k.trk() - 1.0).abs() < 1e-14);
        assert!(k.khat().amax() < 1e-14);
    }

    #[test]
    fn central_line_is_degenerate() {
        let m = MetricModel::minkowski();
        let d = Direction::new(0.0, [0.0, 0.0, 1.0]).unwrap();
        let rec = trace_full(&m, &Coordinates4::default(), &d, &[2.0], &TraceOptions::default()).unwrap();
        assert!(matches!(frames_at(&m, &rec, 2.0), Err(FoliationError::CentralLineDegenerate(_))));
    }

    #[test]
    fn minkowski_slice_is_coordinate_sphere() {
        let m = MetricModel::minkowski();
        let q = SphereQuadrature::product(4, 8, [0.0, 0.0, 1.0]);
        let mut sl = leaf_slice(&m, &Coordinates4::default(), 5.0, 3.0, &q, &SliceOptions::default()).unwrap();
        slice_null_forms(&mut sl);
        for n in &sl.nodes {
            assert!((n.x.r() - 4.0).abs() < 1e-9);
            let nf = n.null.unwrap();
            assert!((nf.trchi - 0.5).abs() < 1e-9);
            assert!((nf.trchib + 0.5).abs() < 1e-9);
        }
        assert!((sl.area - 4.0 * std::f64::consts::PI * 16.0).abs() < 1e-7);
    }
}
