//! The exponential map at the origin `O` and the intrinsic boost fields.
//!
//! A direction `V = (cosh ζ, sinh ζ ω)` in the orthonormal static frame at `O`
//! generates the unit-speed timelike geodesic `ρ ↦ exp_O(ρV)`; its point at
//! proper time `ρ` lies on the hyperboloid `H_ρ`. The boost fields are Jacobi
//! fields along it with `J(0) = 0` and `DJ/dρ(0) = Vⁱe₀ + V⁰eᵢ`, i.e. the
//! pushforwards of the Minkowski boosts `yⁱ∂_τ + τ∂ᵢ`.
//!
//! When `O` sits in an exactly flat region the early segment is known in
//! closed form, and the second fundamental form `k` of the leaves can be
//! seeded with its exact umbilic value `ḡ/ρ` there.

use crate::foliation::LeafScalars;
use crate::metric::{metric_at, Coordinates4, MetricError, MetricKind, MetricModel};
use crate::ode::{integrate, OdeError, OdeOptions, OdeStats, OdeSystem};
use crate::tensor::{gram_schmidt, inner, Mat4, Vec4};
use nalgebra::Matrix3;
use std::cell::Cell;
use rayon::prelude::*;
use thiserror::Error;

pub const DEFAULT_ODE_TOL: f64 = 1e-10;
/// Largest rapidity used for fans and slices (`|V⃗|/V⁰ ≈ 1 − 1.2·10⁻⁵`).
pub const DEFAULT_ZETA_MAX: f64 = 6.0;
/// Smallest acceptable seed proper time for the transport of `k`.
pub const DEFAULT_SEED_MIN: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeodesicError {
    #[error("integration failed at rho = {rho}: {reason}")]
    StepFailure { rho: f64, reason: String },
    #[error("origin at r = {r} is not inside the flat core (r_in = {r_in})")]
    OriginOutsideCore { r: f64, r_in: f64 },
    #[error("geodesic leaves the flat core at rho = {rho_seed}, before the minimum seed {seed_min}")]
    SeedRegionTooSmall { rho_seed: f64, seed_min: f64 },
    #[error("invalid direction: {0}")]
    InvalidDirection(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// A unit future-directed velocity at `O`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    pub zeta: f64,
    pub omega: [f64; 3],
}

impl Direction {
    /// `omega` is normalized; it must be nonzero.
    pub fn new(zeta: f64, omega: [f64; 3]) -> Result<Self, GeodesicError> {
        let n = (omega[0] * omega[0] + omega[1] * omega[1] + omega[2] * omega[2]).sqrt();
        if !(zeta.is_finite() && zeta >= 0.0) {
            return Err(GeodesicError::InvalidDirection(format!("rapidity must be finite and ≥ 0, got {zeta}")));
        }
        if !(n.is_finite() && n > 0.0) {
            return Err(GeodesicError::InvalidDirection("omega must be a nonzero finite vector".into()));
        }
        Ok(Self { zeta, omega: [omega[0] / n, omega[1] / n, omega[2] / n] })
    }

    pub fn from_angles(zeta: f64, theta: f64, phi: f64) -> Result<Self, GeodesicError> {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Self::new(zeta, [st * cp, st * sp, ct])
    }

    /// Frame components `(cosh ζ, sinh ζ ω)`.
    pub fn frame_velocity(&self) -> [f64; 4] {
        let (s, c) = (self.zeta.sinh(), self.zeta.cosh());
        [c, s * self.omega[0], s * self.omega[1], s * self.omega[2]]
    }
}

/// Propagated leaf basis and the regularized second fundamental form
/// `ǩ = k − ḡ/ρ` in that basis.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportedK {
    /// Parallel-transported orthonormal triad orthogonal to `𝔅`.
    pub basis: [Vec4; 3],
    pub kcheck: Matrix3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicSample {
    pub rho: f64,
    pub x: Coordinates4,
    /// Velocity `𝔅`.
    pub b: Vec4,
    /// Boost fields `ℛᵢ = Jᵢ`.
    pub j: [Vec4; 3],
    /// Covariant derivatives `DJᵢ/dρ`.
    pub jp: [Vec4; 3],
    pub k: Option<TransportedK>,
    pub scalars: Option<LeafScalars>,
}

impl GeodesicSample {
    /// `Kᵢⱼ = ⟨DJᵢ/dρ, Jⱼ⟩`.
    pub fn gram_k(&self, g: &Mat4) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| inner(g, &self.jp[i], &self.j[j]))
    }

    /// `⟨Jᵢ, Jⱼ⟩`.
    pub fn gram_j(&self, g: &Mat4) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| inner(g, &self.j[i], &self.j[j]))
    }

    /// `k(X, Y)` for vectors tangent to the leaf.
    pub fn k_on(&self, g: &Mat4, x: &Vec4, y: &Vec4) -> Option<f64> {
        let tk = self.k.as_ref()?;
        let xa: Vec<f64> = tk.basis.iter().map(|e| inner(g, x, e)).collect();
        let ya: Vec<f64> = tk.basis.iter().map(|e| inner(g, y, e)).collect();
        let gxy: f64 = xa.iter().zip(&ya).map(|(a, b)| a * b).sum();
        let mut s = gxy / self.rho;
        for a in 0..3 {
            for b in 0..3 {
                s += tk.kcheck[(a, b)] * xa[a] * ya[b];
            }
        }
        Some(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicRecord {
    pub origin: Coordinates4,
    pub direction: Direction,
    /// Orthonormal frame at `O`: `e₀` the static observer, `eᵢ` spatial.
    pub frame: [Vec4; 4],
    pub samples: Vec<GeodesicSample>,
    /// Integration stopped early near a coordinate singularity.
    pub truncated: bool,
    /// Proper time up to which the closed-form flat solution was used.
    pub rho_seed: f64,
    pub has_jacobi: bool,
    pub stats: OdeStats,
}

impl GeodesicRecord {
    pub fn rho_grid(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.rho).collect()
    }

    /// Sample whose `ρ` matches to relative `1e-12`.
    pub fn sample_at(&self, rho: f64) -> Option<&GeodesicSample> {
        let tol = 1e-12 * rho.abs().max(1.0);
        self.samples.iter().find(|s| (s.rho - rho).abs() <= tol)
    }

    pub fn last(&self) -> Option<&GeodesicSample> {
        self.samples.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceMode {
    /// Position and velocity.
    Geodesic,
    /// Plus the three boost fields.
    Jacobi,
    /// Plus the transported leaf basis and `ǩ`.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    pub ode: OdeOptions,
    /// Use the closed-form solution while the geodesic stays in the flat core.
    pub analytic_core: bool,
    pub seed_min: f64,
    /// Gram–Schmidt the transported basis after this many accepted steps.
    pub reorthonormalize_every: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self::with_tol(DEFAULT_ODE_TOL)
    }
}

impl TraceOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            ode: OdeOptions::with_tol(tol),
            analytic_core: true,
            seed_min: DEFAULT_SEED_MIN,
            reorthonormalize_every: 100,
        }
    }
}

/// Orthonormal static frame at `x`.
pub fn static_frame(model: &MetricModel, x: &Coordinates4) -> Result<[Vec4; 4], GeodesicError> {
    let jet = metric_at(model, x, 0)?;
    let basis = [
        Vec4::new(1.0, 0.0, 0.0, 0.0),
        Vec4::new(0.0, 1.0, 0.0, 0.0),
        Vec4::new(0.0, 0.0, 1.0, 0.0),
        Vec4::new(0.0, 0.0, 0.0, 1.0),
    ];
    let e = gram_schmidt(&jet.g, &basis).ok_or_else(|| GeodesicError::InvalidGrid("degenerate metric".into()))?;
    Ok([e[0], e[1], e[2], e[3]])
}

fn initial_vectors(frame: &[Vec4; 4], dir: &Direction) -> (Vec4, [Vec4; 3]) {
    let v = dir.frame_velocity();
    let vel = frame[0] * v[0] + frame[1] * v[1] + frame[2] * v[2] + frame[3] * v[3];
    let w = [
        frame[0] * v[1] + frame[1] * v[0],
        frame[0] * v[2] + frame[2] * v[0],
        frame[0] * v[3] + frame[3] * v[0],
    ];
    (vel, w)
}

/// Proper time at which the straight line `O + ρV` leaves the flat core
/// (infinite if it never does, zero if there is no core).
fn core_exit(model: &MetricModel, origin: &Coordinates4, vel: &Vec4) -> f64 {
    let rc = model.flat_core_radius();
    if rc.is_infinite() {
        return f64::INFINITY;
    }
    let o = origin.spatial();
    let v = [vel[1], vel[2], vel[3]];
    let oo = o[0] * o[0] + o[1] * o[1] + o[2] * o[2];
    if oo >= rc * rc {
        return 0.0;
    }
    let vv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    if vv == 0.0 {
        return f64::INFINITY;
    }
    let ov = o[0] * v[0] + o[1] * v[1] + o[2] * v[2];
    (-ov + (ov * ov - vv * (oo - rc * rc)).sqrt()) / vv
}

fn validate_grid(rho_grid: &[f64]) -> Result<(), GeodesicError> {
    if rho_grid.is_empty() {
        return Err(GeodesicError::InvalidGrid("empty rho grid".into()));
    }
    if !rho_grid.iter().all(|r| r.is_finite() && *r > 0.0) {
        return Err(GeodesicError::InvalidGrid("rho values must be finite and positive".into()));
    }
    if !rho_grid.windows(2).all(|w| w[1] > w[0]) {
        return Err(GeodesicError::InvalidGrid("rho grid must be strictly increasing".into()));
    }
    Ok(())
}

struct GeoSystem<'a> {
    model: &'a MetricModel,
    mode: TraceMode,
    reorthonormalize_every: usize,
    projections: Cell<usize>,
    /// Radii where the glued metric is only C²; steps are split there.
    kinks: Vec<f64>,
}

const IX: usize = 0;
const IB: usize = 4;
const IJ: usize = 8;
const IP: usize = 20;
const IE: usize = 32;
const IK: usize = 44;
const SYM: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

fn v4(y: &[f64], at: usize) -> Vec4 {
    Vec4::new(y[at], y[at + 1], y[at + 2], y[at + 3])
}

fn put4(y: &mut [f64], at: usize, v: &Vec4) {
    y[at..at + 4].copy_from_slice(v.as_slice());
}

fn kcheck_from(y: &[f64]) -> Matrix3<f64> {
    let mut k = Matrix3::zeros();
    for (n, &(a, b)) in SYM.iter().enumerate() {
        k[(a, b)] = y[IK + n];
        k[(b, a)] = y[IK + n];
    }
    k
}

/// `Γ^μ_{αβ} a^α b^β`.
fn gamma_ab(gamma: &crate::tensor::Rank3, a: &Vec4, b: &Vec4) -> Vec4 {
    let mut out = Vec4::zeros();
    for mu in 0..4 {
        let mut s = 0.0;
        for al in 0..4 {
            if a[al] == 0.0 {
                continue;
            }
            for be in 0..4 {
                s += gamma[mu][al][be] * a[al] * b[be];
            }
        }
        out[mu] = s;
    }
    out
}

impl OdeSystem for GeoSystem<'_> {
    type Error = MetricError;

    fn dim(&self) -> usize {
        match self.mode {
            TraceMode::Geodesic => 8,
            TraceMode::Jacobi => 32,
            TraceMode::Full => 50,
        }
    }

    fn rhs(&self, rho: f64, y: &[f64], dy: &mut [f64]) -> Result<(), MetricError> {
        let x = Coordinates4::new(y[0], y[1], y[2], y[3]);
        let level = if self.mode == TraceMode::Geodesic { 1 } else { 2 };
        let jet = metric_at(self.model, &x, level)?;
        let b = v4(y, IB);
        put4(dy, IX, &b);
        put4(dy, IB, &(-gamma_ab(&jet.gamma, &b, &b)));
        if self.mode == TraceMode::Geodesic {
            return Ok(());
        }
        // M_{αγ} = R_{αβγδ} B^β B^δ
        let mut m = Mat4::zeros();
        for al in 0..4 {
            for ga in al..4 {
                let mut s = 0.0;
                for be in 0..4 {
                    for de in 0..4 {
                        s += jet.riemann[al][be][ga][de] * b[be] * b[de];
                    }
                }
                m[(al, ga)] = s;
                m[(ga, al)] = s;
            }
        }
        let mup = jet.g_inv * m;
        for i in 0..3 {
            let j = v4(y, IJ + 4 * i);
            let p = v4(y, IP + 4 * i);
            put4(dy, IJ + 4 * i, &(p - gamma_ab(&jet.gamma, &b, &j)));
            put4(dy, IP + 4 * i, &(-(mup * j) - gamma_ab(&jet.gamma, &b, &p)));
        }
        if self.mode == TraceMode::Jacobi {
            return Ok(());
        }
        let mut e = [Vec4::zeros(); 3];
        for (a, ea) in e.iter_mut().enumerate() {
            *ea = v4(y, IE + 4 * a);
            put4(dy, IE + 4 * a, &(-gamma_ab(&jet.gamma, &b, ea)));
        }
        let kc = kcheck_from(y);
        let rab = Matrix3::from_fn(|a, c| inner(&m, &e[a], &e[c]));
        let dk = -rab - kc * kc - kc * (2.0 / rho);
        for (n, &(a, c)) in SYM.iter().enumerate() {
            dy[IK + n] = dk[(a, c)];
        }
        Ok(())
    }

    /// Rescales `𝔅` back onto the unit hyperboloid and removes the `𝔅`
    /// components of the boost fields after every step; both are conserved
    /// exactly by the flow. The transported leaf basis is re-orthonormalized
    /// periodically.
    fn breakpoints(&self, y: &[f64]) -> Option<(f64, &[f64])> {
        (!self.kinks.is_empty()).then(|| ((y[1] * y[1] + y[2] * y[2] + y[3] * y[3]).sqrt(), self.kinks.as_slice()))
    }

    fn project(&self, rho: f64, y: &mut [f64]) {
        let x = Coordinates4::new(y[0], y[1], y[2], y[3]);
        let Ok(jet) = metric_at(self.model, &x, 0) else { return };
        let b = v4(y, IB);
        let bb = inner(&jet.g, &b, &b);
        if bb < 0.0 {
            put4(y, IB, &(b / (-bb).sqrt()));
        }
        if self.mode != TraceMode::Geodesic {
            // the boost fields and their derivatives stay orthogonal to 𝔅
            let b = v4(y, IB);
            for i in 0..3 {
                for off in [IJ, IP] {
                    let w = v4(y, off + 4 * i);
                    put4(y, off + 4 * i, &(w + b * inner(&jet.g, &w, &b)));
                }
            }
        }
        let calls = self.projections.get() + 1;
        self.projections.set(calls);
        if self.mode != TraceMode::Full || self.reorthonormalize_every == 0 || calls % self.reorthonormalize_every != 0 {
            return;
        }
        let b = v4(y, IB);
        let bb = inner(&jet.g, &b, &b);
        let mut e: Vec<Vec4> = (0..3)
            .map(|a| {
                let ea = v4(y, IE + 4 * a);
                ea - b * (inner(&jet.g, &ea, &b) / bb)
            })
            .collect();
        let gram = Matrix3::from_fn(|a, c| inner(&jet.g, &e[a], &e[c]));
        let Some(chol) = gram.cholesky() else { return };
        let Some(c) = chol.l().try_inverse() else { return };
        let old = e.clone();
        for a in 0..3 {
            e[a] = old[0] * c[(a, 0)] + old[1] * c[(a, 1)] + old[2] * c[(a, 2)];
            put4(y, IE + 4 * a, &e[a]);
        }
        let kc = kcheck_from(y);
        let knew = c * kc * c.transpose() + (c * c.transpose() - Matrix3::identity()) / rho;
        for (n, &(a, cc)) in SYM.iter().enumerate() {
            y[IK + n] = knew[(a, cc)];
        }
    }
}

/// Integrate the geodesic (and, by `mode`, its boost fields and leaf data)
/// through `rho_grid`.
pub fn trace(
    model: &MetricModel,
    origin: &Coordinates4,
    dir: &Direction,
    rho_grid: &[f64],
    mode: TraceMode,
    opts: &TraceOptions,
) -> Result<GeodesicRecord, GeodesicError> {
    validate_grid(rho_grid)?;
    if let MetricKind::GluedSchwarzschild { r_in, .. } = model.kind() {
        let r = origin.r();
        if r >= r_in {
            return Err(GeodesicError::OriginOutsideCore { r, r_in });
        }
    }
    let frame = static_frame(model, origin)?;
    let (vel, w) = initial_vectors(&frame, dir);
    let rho_last = *rho_grid.last().unwrap();
    let exit = core_exit(model, origin, &vel);
    let seed = if opts.analytic_core || mode == TraceMode::Full { exit.min(rho_last) } else { 0.0 };
    if mode == TraceMode::Full && seed < opts.seed_min {
        return Err(GeodesicError::SeedRegionTooSmall { rho_seed: seed, seed_min: opts.seed_min });
    }
    // Orthonormal basis of V^⊥ for the leaf transport (frame is η in the core).
    let e0 = if mode == TraceMode::Full {
        let g = metric_at(model, origin, 0)?.g;
        let e = gram_schmidt(&g, &[vel, w[0], w[1], w[2]])
            .ok_or_else(|| GeodesicError::InvalidDirection("degenerate boost directions".into()))?;
        [e[1], e[2], e[3]]
    } else {
        [Vec4::zeros(); 3]
    };

    let o = origin.to_vec();
    let flat_state = |rho: f64| -> Vec<f64> {
        let mut y = vec![0.0; 50];
        put4(&mut y, IX, &(o + vel * rho));
        put4(&mut y, IB, &vel);
        for i in 0..3 {
            put4(&mut y, IJ + 4 * i, &(w[i] * rho));
            put4(&mut y, IP + 4 * i, &w[i]);
        }
        for a in 0..3 {
            put4(&mut y, IE + 4 * a, &e0[a]);
        }
        y
    };
    let with_j = mode != TraceMode::Geodesic;
    let with_k = mode == TraceMode::Full;
    let to_sample = |rho: f64, y: &[f64]| -> GeodesicSample {
        let mut j = [Vec4::zeros(); 3];
        let mut jp = [Vec4::zeros(); 3];
        if with_j {
            for i in 0..3 {
                j[i] = v4(y, IJ + 4 * i);
                jp[i] = v4(y, IP + 4 * i);
            }
        }
        let k = with_k.then(|| TransportedK {
            basis: [v4(y, IE), v4(y, IE + 4), v4(y, IE + 8)],
            kcheck: kcheck_from(y),
        });
        GeodesicSample {
            rho,
            x: Coordinates4::from_vec(&v4(y, IX)),
            b: v4(y, IB),
            j,
            jp,
            k,
            scalars: None,
        }
    };

    let mut samples = Vec::with_capacity(rho_grid.len());
    let split = rho_grid.partition_point(|&r| r <= seed);
    for &rho in &rho_grid[..split] {
        samples.push(to_sample(rho, &flat_state(rho)));
    }
    let kinks = if model.vacuum_radius() > 0.0 { vec![model.flat_core_radius(), model.vacuum_radius()] } else { Vec::new() };
    let sys = GeoSystem { model, mode, reorthonormalize_every: opts.reorthonormalize_every, projections: Cell::new(0), kinks };
    let n = sys.dim();
    let y0: Vec<f64> = flat_state(seed)[..n].to_vec();
    let mut ode = opts.ode;
    ode.project_every = 1;
    let mut truncated = false;
    let mut stats = OdeStats::default();
    if split < rho_grid.len() {
        let res = integrate(&sys, seed, &y0, &rho_grid[split..], &ode, |rho, y| {
            let mut full = y.to_vec();
            full.resize(50, 0.0);
            samples.push(to_sample(rho, &full));
        });
        match res {
            Ok(s) => stats = s,
            Err(OdeError::Rhs { error: MetricError::CoordinateSingularity { .. }, .. }) => truncated = true,
            Err(OdeError::Rhs { t, error }) => {
                return Err(GeodesicError::StepFailure { rho: t, reason: error.to_string() })
            }
            Err(OdeError::StepFailure { t, reason }) => {
                return Err(GeodesicError::StepFailure { rho: t, reason: reason.to_string() })
            }
        }
    }
    Ok(GeodesicRecord {
        origin: *origin,
        direction: *dir,
        frame,
        samples,
        truncated,
        rho_seed: seed,
        has_jacobi: with_j,
        stats,
    })
}

/// Geodesic from `origin` with initial velocity `dir`, sampled on `rho_grid`.
pub fn exp_map(
    model: &MetricModel,
    origin: &Coordinates4,
    dir: &Direction,
    rho_grid: &[f64],
    ode_tol: f64,
) -> Result<GeodesicRecord, GeodesicError> {
    trace(model, origin, dir, rho_grid, TraceMode::Geodesic, &TraceOptions::with_tol(ode_tol))
}

/// Populate the boost fields along an integrated record.
pub fn jacobi_boosts(model: &MetricModel, rec: &GeodesicRecord, ode_tol: f64) -> Result<GeodesicRecord, GeodesicError> {
    trace(model, &rec.origin, &rec.direction, &rec.rho_grid(), TraceMode::Jacobi, &TraceOptions::with_tol(ode_tol))
}

/// Largest `|⟨𝔅,𝔅⟩ + 1|` over the samples.
pub fn norm_residual(model: &MetricModel, rec: &GeodesicRecord) -> Result<f64, GeodesicError> {
    let mut m: f64 = 0.0;
    for s in &rec.samples {
        let g = metric_at(model, &s.x, 0)?.g;
        m = m.max((inner(&g, &s.b, &s.b) + 1.0).abs());
    }
    Ok(m)
}

/// Per-sample deformation diagnostics of the boost fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostDiagnostics {
    pub rho: f64,
    /// `max |⟨Jᵢ, 𝔅⟩|`.
    pub tangency: f64,
    /// `max |2⟨DJᵢ/dρ, 𝔅⟩|`, i.e. `π^(ℛ)(𝔅,𝔅)`.
    pub pi_bb: f64,
    /// `max |Kᵢⱼ − Kⱼᵢ|`.
    pub gram_asymmetry: f64,
    /// `max |Kᵢⱼ|`, the natural scale of the asymmetry.
    pub gram_scale: f64,
}

pub fn boost_diagnostics(model: &MetricModel, rec: &GeodesicRecord) -> Result<Vec<BoostDiagnostics>, GeodesicError> {
    rec.samples
        .iter()
        .map(|s| {
            let g = metric_at(model, &s.x, 0)?.g;
            let k = s.gram_k(&g);
            let mut d = BoostDiagnostics { rho: s.rho, tangency: 0.0, pi_bb: 0.0, gram_asymmetry: 0.0, gram_scale: 0.0 };
            for i in 0..3 {
                d.tangency = d.tangency.max(inner(&g, &s.j[i], &s.b).abs());
                d.pi_bb = d.pi_bb.max((2.0 * inner(&g, &s.jp[i], &s.b)).abs());
                for j in 0..3 {
                    d.gram_asymmetry = d.gram_asymmetry.max((k[(i, j)] - k[(j, i)]).abs());
                    d.gram_scale = d.gram_scale.max(k[(i, j)].abs());
                }
            }
            Ok(d)
        })
        .collect()
}

/// Rapidities and directions of a fan; directions form a `θ × φ` product.
#[derive(Debug, Clone, PartialEq)]
pub struct FanGrid {
    pub origin: Coordinates4,
    pub zetas: Vec<f64>,
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    pub rhos: Vec<f64>,
    /// Indexed by `zeta_index * n_omega + omega_index`.
    pub records: Vec<GeodesicRecord>,
}

impl FanGrid {
    pub fn n_omega(&self) -> usize {
        self.thetas.len() * self.phis.len()
    }

    pub fn record(&self, zeta_index: usize, omega_index: usize) -> &GeodesicRecord {
        &self.records[zeta_index * self.n_omega() + omega_index]
    }

    /// Record at grid position `(iζ, iθ, iφ)`.
    pub fn at(&self, iz: usize, it: usize, ip: usize) -> &GeodesicRecord {
        self.record(iz, it * self.phis.len() + ip)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{} fan records failed; first at (zeta {}, omega {}): {}", .failures.len(), .failures[0].0, .failures[0].1, .failures[0].2)]
pub struct FanError {
    pub failures: Vec<(usize, usize, GeodesicError)>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    !v.is_empty() && v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[1] > w[0])
}

/// Integrate every `(ζ, θ, φ)` geodesic of the grid in parallel. The result
/// does not depend on scheduling.
pub fn fan_build(
    model: &MetricModel,
    origin: &Coordinates4,
    zetas: &[f64],
    thetas: &[f64],
    phis: &[f64],
    rhos: &[f64],
    mode: TraceMode,
    opts: &TraceOptions,
) -> Result<FanGrid, FanError> {
    let bad = |msg: &str| FanError { failures: vec![(0, 0, GeodesicError::InvalidGrid(msg.into()))] };
    if !strictly_increasing(zetas) || !strictly_increasing(thetas) || !strictly_increasing(phis) {
        return Err(bad("fan grids must be nonempty and strictly increasing"));
    }
    let n_omega = thetas.len() * phis.len();
    let results: Vec<Result<GeodesicRecord, GeodesicError>> = (0..zetas.len() * n_omega)
        .into_par_iter()
        .map(|idx| {
            let (iz, io) = (idx / n_omega, idx % n_omega);
            let dir = Direction::from_angles(zetas[iz], thetas[io / phis.len()], phis[io % phis.len()])?;
            trace(model, origin, &dir, rhos, mode, opts)
        })
        .collect();
    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (idx, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push((idx / n_omega, idx % n_omega, e)),
        }
    }
    if !failures.is_empty() {
        return Err(FanError { failures });
    }
    Ok(FanGrid {
        origin: *origin,
        zetas: zetas.to_vec(),
        thetas: thetas.to_vec(),
        phis: phis.to_vec(),
        rhos: rhos.to_vec(),
        records,
    })
}
