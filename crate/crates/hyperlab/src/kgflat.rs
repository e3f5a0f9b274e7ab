//! Spherically symmetric Klein–Gordon field on Minkowski space.
//!
//! The equation is `□φ = 𝔪²φ` with `□ = −∂_t² + Δ` and `𝔪 = 1`. It is evolved
//! as `ψ = rφ` on a cell-centred radial grid:
//!
//! ```text
//! ψ_tt = ψ_rr − 𝔪²ψ,    ψ(−r) = −ψ(r)
//! ```
//!
//! The spatial operator is the fourth-order five-point Laplacian and time
//! stepping is classical RK4. With odd ghost cells at the origin and zero
//! ghosts beyond `r_max` the discrete operator is symmetric, so
//! `2π dr Σ(ψ_t² − ψ D²ψ + 𝔪²ψ²)` is an exact invariant of the semi-discrete
//! system and converges to `E = ½∫(φ_t² + φ_r² + 𝔪²φ²) 4πr² dr`.

use std::f64::consts::PI;
use thiserror::Error;

/// Largest accepted `Δt/Δr`.
pub const CFL_MAX: f64 = 0.5;
/// Relative energy growth treated as a blow-up.
pub const UNSTABLE_GROWTH: f64 = 1e-3;
/// Initial data below this magnitude is set to zero.
pub const DATA_FLOOR: f64 = 1e-16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KgError {
    #[error("cfl = {0} exceeds {CFL_MAX}")]
    CflViolation(f64),
    #[error("energy grew by a factor {growth} by t = {t}")]
    UnstableDetected { t: f64, growth: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("states do not cover t = {0}")]
    InsufficientStates(f64),
    #[error("resolution too coarse: {0}")]
    InsufficientResolution(String),
}

/// Gaussian data `φ(0, r) = A exp(−(r − r_c)²/w²)`, `φ_t(0, ·) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianData {
    pub amplitude: f64,
    pub width: f64,
    pub center: f64,
}

impl GaussianData {
    pub fn phi(&self, r: f64) -> f64 {
        let v = self.amplitude * (-((r - self.center) / self.width).powi(2)).exp();
        if v.abs() < DATA_FLOOR {
            0.0
        } else {
            v
        }
    }

    /// Radius beyond which the data is cut to zero.
    pub fn support_radius(&self) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        let s = (self.amplitude.abs() / DATA_FLOOR).ln();
        self.center.abs() + self.width * s.max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KgConfig {
    pub r_max: f64,
    pub dr: f64,
    pub t_max: f64,
    pub cfl: f64,
    pub data: GaussianData,
    /// Klein–Gordon mass; `0` gives the free wave equation.
    pub mass: f64,
}

impl Default for KgConfig {
    /// The standard run: `A = 1`, `w = 0.25`, `t_max = 80`.
    fn default() -> Self {
        let data = GaussianData { amplitude: 1.0, width: 0.25, center: 0.0 };
        Self { r_max: 85.0, dr: 0.02, t_max: 80.0, cfl: 0.125, data, mass: 1.0 }
    }
}

impl KgConfig {
    pub fn validate(&self) -> Result<(), KgError> {
        if !(self.cfl > 0.0 && self.cfl <= CFL_MAX) {
            return Err(KgError::CflViolation(self.cfl));
        }
        if !(self.dr > 0.0 && self.t_max >= 0.0 && self.data.width > 0.0) {
            return Err(KgError::InvalidConfig("dr, width must be positive and t_max non-negative".into()));
        }
        let need = self.t_max + 1.0 + self.data.support_radius();
        if !(self.r_max > need) {
            return Err(KgError::InvalidConfig(format!("r_max = {} must exceed t_max + 1 + support = {need}", self.r_max)));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        (self.r_max / self.dr).ceil() as usize
    }

    pub fn dt(&self) -> f64 {
        self.cfl * self.dr
    }

    pub fn radius(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dr
    }
}

/// Field at one time on the cell centres `r_i = (i + ½)dr`.
#[derive(Debug, Clone, PartialEq)]
pub struct KgState {
    pub t: f64,
    pub phi: Vec<f64>,
    pub phit: Vec<f64>,
}

impl KgState {
    fn from_psi(cfg: &KgConfig, t: f64, psi: &[f64], pi: &[f64]) -> Self {
        let r = |i| cfg.radius(i);
        Self {
            t,
            phi: psi.iter().enumerate().map(|(i, p)| p / r(i)).collect(),
            phit: pi.iter().enumerate().map(|(i, p)| p / r(i)).collect(),
        }
    }

    /// `∂_rφ` by fourth-order central differences with the even reflection.
    pub fn phir(&self, cfg: &KgConfig) -> Vec<f64> {
        let f = &self.phi;
        let n = f.len();
        let at = |j: isize| -> f64 {
            if j < 0 {
                f[(-j - 1) as usize]
            } else if (j as usize) < n {
                f[j as usize]
            } else {
                0.0
            }
        };
        (0..n as isize)
            .map(|i| (at(i - 2) - 8.0 * at(i - 1) + 8.0 * at(i + 1) - at(i + 2)) / (12.0 * cfg.dr))
            .collect()
    }

    pub fn sup_abs(&self) -> f64 {
        self.phi.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// `D²ψ` with odd ghosts at the origin and zero ghosts outside.
fn lap4(psi: &[f64], dr: f64, out: &mut [f64]) {
    let n = psi.len();
    let at = |j: isize| -> f64 {
        if j < 0 {
            -psi[(-j - 1) as usize]
        } else if (j as usize) < n {
            psi[j as usize]
        } else {
            0.0
        }
    };
    let c = 1.0 / (12.0 * dr * dr);
    for i in 0..n as isize {
        out[i as usize] = c * (-at(i - 2) + 16.0 * at(i - 1) - 30.0 * at(i) + 16.0 * at(i + 1) - at(i + 2));
    }
}

struct Solver {
    cfg: KgConfig,
    psi: Vec<f64>,
    pi: Vec<f64>,
    t: f64,
    buf: [Vec<f64>; 6],
}

impl Solver {
    fn new(cfg: &KgConfig) -> Self {
        let n = cfg.cells();
        let psi: Vec<f64> = (0..n).map(|i| cfg.radius(i) * cfg.data.phi(cfg.radius(i))).collect();
        Self { cfg: *cfg, psi, pi: vec![0.0; n], t: 0.0, buf: std::array::from_fn(|_| vec![0.0; n]) }
    }

    fn energy(&mut self) -> f64 {
        let m2 = self.cfg.mass * self.cfg.mass;
        let d2 = &mut self.buf[0];
        lap4(&self.psi, self.cfg.dr, d2);
        let s: f64 = (0..self.psi.len()).map(|i| self.pi[i].powi(2) - self.psi[i] * d2[i] + m2 * self.psi[i].powi(2)).sum();
        2.0 * PI * self.cfg.dr * s
    }

    /// One RK4 step of size `h`.
    fn step(&mut self, h: f64) {
        let n = self.psi.len();
        let m2 = self.cfg.mass * self.cfg.mass;
        let dr = self.cfg.dr;
        let [d2, kpsi, kpi, apsi, api, tmp] = &mut self.buf;
        // stage values are written into (apsi, api); k-sums accumulate in (kpsi, kpi)
        apsi.copy_from_slice(&self.psi);
        api.copy_from_slice(&self.pi);
        kpsi.iter_mut().for_each(|v| *v = 0.0);
        kpi.iter_mut().for_each(|v| *v = 0.0);
        for (stage, (wsum, wnext)) in [(1.0, 0.5), (2.0, 0.5), (2.0, 1.0), (1.0, 0.0)].into_iter().enumerate() {
            lap4(apsi, dr, d2);
            for i in 0..n {
                let dpsi = api[i];
                let dpi = d2[i] - m2 * apsi[i];
                kpsi[i] += wsum * dpsi;
                kpi[i] += wsum * dpi;
                tmp[i] = dpi;
                if stage < 3 {
                    apsi[i] = self.psi[i] + wnext * h * dpsi;
                }
            }
            if stage < 3 {
                for i in 0..n {
                    api[i] = self.pi[i] + wnext * h * tmp[i];
                }
            }
        }
        for i in 0..n {
            self.psi[i] += h / 6.0 * kpsi[i];
            self.pi[i] += h / 6.0 * kpi[i];
        }
        self.t += h;
    }

    /// Advance to `target` in steps of at most `dt`, landing on it exactly.
    fn advance_to(&mut self, target: f64) {
        self.advance_sampling(target, &mut []);
    }

    /// As `advance_to`, feeding every forward step to the hyperboloid samplers.
    fn advance_sampling(&mut self, target: f64, hyp: &mut [HypSampler]) {
        let dt = self.cfg.dt();
        let sgn = if target >= self.t { 1.0 } else { -1.0 };
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        loop {
            let rem = (target - self.t) * sgn;
            if rem <= 1e-12 * dt {
                self.t = target;
                return;
            }
            if hyp.is_empty() {
                self.step(sgn * rem.min(dt));
                continue;
            }
            let (mut p0, mut q0) = prev.take().unwrap_or_else(|| (vec![0.0; self.psi.len()], vec![0.0; self.psi.len()]));
            p0.copy_from_slice(&self.psi);
            q0.copy_from_slice(&self.pi);
            let t0 = self.t;
            self.step(sgn * rem.min(dt));
            for h in hyp.iter_mut() {
                h.absorb(&self.cfg, (t0, &p0, &q0), (self.t, &self.psi, &self.pi));
            }
            prev = Some((p0, q0));
        }
    }

    fn state(&self) -> KgState {
        KgState::from_psi(&self.cfg, self.t, &self.psi, &self.pi)
    }
}

/// States at the requested (sorted, non-negative, ≤ t_max) times and the
/// discrete energy at each of them.
#[derive(Debug, Clone, PartialEq)]
pub struct KgRun {
    pub cfg: KgConfig,
    pub states: Vec<KgState>,
    pub energies: Vec<f64>,
    pub energy0: f64,
    /// Energies through the hyperboloids requested at evolution time.
    pub hyperboloids: Vec<HyperboloidEnergy>,
}

impl KgRun {
    /// `max |E(t)/E(0) − 1|` over the outputs.
    pub fn energy_drift(&self) -> f64 {
        if self.energy0 == 0.0 {
            return 0.0;
        }
        self.energies.iter().map(|e| (e / self.energy0 - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn state_at(&self, t: f64) -> Option<&KgState> {
        self.states.iter().find(|s| (s.t - t).abs() <= 1e-9 * t.abs().max(1.0))
    }
}

pub fn evolve_kg(cfg: &KgConfig, times: &[f64]) -> Result<KgRun, KgError> {
    evolve_kg_sampling(cfg, times, &[])
}

/// As `evolve_kg`, also accumulating the energy through `H_ρ ∩ {t ≤ t_last}`
/// for every `ρ` in `rhos`, with `t_last` the last output time.
pub fn evolve_kg_sampling(cfg: &KgConfig, times: &[f64], rhos: &[f64]) -> Result<KgRun, KgError> {
    cfg.validate()?;
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < 0.0 || t > cfg.t_max) {
        return Err(KgError::InvalidConfig("output times must be sorted within [0, t_max]".into()));
    }
    let mut s = Solver::new(cfg);
    let e0 = s.energy();
    let mut states = Vec::with_capacity(times.len());
    let mut energies = Vec::with_capacity(times.len());
    let t_last = times.last().copied().unwrap_or(0.0);
    let mut hyp: Vec<HypSampler> = rhos.iter().map(|&rho| HypSampler::new(cfg, rho, t_last)).collect();
    for &t in times {
        s.advance_sampling(t, &mut hyp);
        let e = s.energy();
        if e0 > 0.0 && (e / e0 - 1.0) > UNSTABLE_GROWTH || !e.is_finite() {
            return Err(KgError::UnstableDetected { t, growth: e / e0 });
        }
        energies.push(e);
        states.push(s.state());
    }
    let hyperboloids = hyp.into_iter().map(|h| h.out).collect();
    Ok(KgRun { cfg: *cfg, states, energies, energy0: e0, hyperboloids })
}

/// `max|ψ_back − ψ_0| / max|ψ_0|` after evolving to `t_back`, flipping `ψ_t`
/// and evolving the same time again.
pub fn time_reversal_error(cfg: &KgConfig, t_back: f64) -> Result<f64, KgError> {
    cfg.validate()?;
    let mut s = Solver::new(cfg);
    let psi0 = s.psi.clone();
    s.advance_to(t_back);
    s.pi.iter_mut().for_each(|v| *v = -*v);
    s.t = 0.0;
    s.advance_to(t_back);
    let scale = psi0.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let err = s.psi.iter().zip(&psi0).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(if scale > 0.0 { err / scale } else { err })
}

/// Flat-space `Q(∂_t, 𝔅)[f]` for a radial field, with `u = t − r`,
/// `ū = t + r` and `𝔅 = (t/ρ)∂_t + (r/ρ)∂_r`.
pub fn q_tb(t: f64, r: f64, rho: f64, m2: f64, f: f64, ft: f64, fr: f64) -> f64 {
    let (u, ub) = (t - r, t + r);
    let (lf, lbf) = (ft + fr, ft - fr);
    (u * lbf * lbf + ub * lf * lf) / (4.0 * rho) + t / (2.0 * rho) * m2 * f * f
}

/// `(ρ/2ū)((𝔅f)² + (N̄f)²) + (t/2ρ)𝔪²f²`, which `Q(∂_t, 𝔅)` dominates.
pub fn q_tb_lower(t: f64, r: f64, rho: f64, m2: f64, f: f64, ft: f64, fr: f64) -> f64 {
    let bf = (t * ft + r * fr) / rho;
    let nf = (r * ft + t * fr) / rho;
    rho / (2.0 * (t + r)) * (bf * bf + nf * nf) + t / (2.0 * rho) * m2 * f * f
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperboloidEnergy {
    pub rho: f64,
    /// `∫_{H_ρ ∩ {t ≤ t_max}} Q(∂_t, 𝔅)(ρ/t) dx`.
    pub e_b: f64,
    /// `min (Q − lower bound)` over the nodes.
    pub lower_bound_check: f64,
    pub min_q: f64,
    pub nodes: usize,
}

/// `(φ, φ_t, φ_r, φ_tt)` at cell `i` from `(ψ, ψ_t)`.
fn local_jet(cfg: &KgConfig, psi: &[f64], pi: &[f64], i: usize) -> [f64; 4] {
    let n = psi.len();
    let dr = cfg.dr;
    let at = |j: isize| -> f64 {
        if j < 0 {
            -psi[(-j - 1) as usize]
        } else if (j as usize) < n {
            psi[j as usize]
        } else {
            0.0
        }
    };
    // φ(r) = ψ(r)/r is even; its reflection at r_j < 0 is ψ(|r_j|)/|r_j|
    let phi_at = |j: isize| -> f64 {
        let jj = if j < 0 { -j - 1 } else { j };
        if (jj as usize) < n {
            psi[jj as usize] / cfg.radius(jj as usize)
        } else {
            0.0
        }
    };
    let ii = i as isize;
    let r = cfg.radius(i);
    let d2 = (-at(ii - 2) + 16.0 * at(ii - 1) - 30.0 * at(ii) + 16.0 * at(ii + 1) - at(ii + 2)) / (12.0 * dr * dr);
    let fr = (phi_at(ii - 2) - 8.0 * phi_at(ii - 1) + 8.0 * phi_at(ii + 1) - phi_at(ii + 2)) / (12.0 * dr);
    let f = psi[i] / r;
    [f, pi[i] / r, fr, d2 / r - cfg.mass * cfg.mass * f]
}

/// Accumulates the energy through one hyperboloid while the solver steps.
struct HypSampler {
    /// `(cell, t)` for cell centres on `H_ρ` with `t ≤ t_last`, by increasing `t`.
    nodes: Vec<(usize, f64)>,
    next: usize,
    out: HyperboloidEnergy,
}

impl HypSampler {
    fn new(cfg: &KgConfig, rho: f64, t_last: f64) -> Self {
        let nodes: Vec<(usize, f64)> = (0..cfg.cells())
            .map(|i| (i, (rho * rho + cfg.radius(i).powi(2)).sqrt()))
            .take_while(|&(_, t)| t <= t_last)
            .collect();
        let out = HyperboloidEnergy { rho, e_b: 0.0, lower_bound_check: f64::INFINITY, min_q: f64::INFINITY, nodes: 0 };
        Self { nodes, next: 0, out }
    }

    /// Evaluate the nodes with `t ∈ (t_a, t_b]` by cubic Hermite interpolation
    /// in time between two consecutive solver states.
    fn absorb(&mut self, cfg: &KgConfig, a: (f64, &[f64], &[f64]), b: (f64, &[f64], &[f64])) {
        let rho = self.out.rho;
        let m2 = cfg.mass * cfg.mass;
        let h = b.0 - a.0;
        while self.next < self.nodes.len() && self.nodes[self.next].1 <= b.0 {
            let (i, t) = self.nodes[self.next];
            self.next += 1;
            let ja = local_jet(cfg, a.1, a.2, i);
            let jb = local_jet(cfg, b.1, b.2, i);
            let s = (t - a.0) / h;
            let (h00, h10, h01, h11) =
                (2.0 * s.powi(3) - 3.0 * s * s + 1.0, s.powi(3) - 2.0 * s * s + s, -2.0 * s.powi(3) + 3.0 * s * s, s.powi(3) - s * s);
            let f = h00 * ja[0] + h10 * h * ja[1] + h01 * jb[0] + h11 * h * jb[1];
            let ft = h00 * ja[1] + h10 * h * ja[3] + h01 * jb[1] + h11 * h * jb[3];
            let fr = (1.0 - s) * ja[2] + s * jb[2];
            let r = cfg.radius(i);
            let q = q_tb(t, r, rho, m2, f, ft, fr);
            self.out.e_b += q * rho / t * 4.0 * PI * r * r * cfg.dr;
            self.out.min_q = self.out.min_q.min(q);
            self.out.lower_bound_check = self.out.lower_bound_check.min(q - q_tb_lower(t, r, rho, m2, f, ft, fr));
            self.out.nodes += 1;
        }
    }
}

/// Energy through `H_ρ ∩ {t ≤ t_last}`, which must have been requested from
/// `evolve_kg_sampling`. Nodes are the cell centres on `H_ρ`; field values
/// come from cubic Hermite interpolation between consecutive time steps.
pub fn hyperboloid_energy(run: &KgRun, rho: f64) -> Result<HyperboloidEnergy, KgError> {
    run.hyperboloids.iter().find(|h| h.rho == rho).copied().ok_or(KgError::InsufficientStates(rho))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRow {
    pub t: f64,
    pub sup_phi: f64,
    pub t32_sup_phi: f64,
    /// `sup_r |Lφ|` and `sup_r |L̲φ|`.
    pub sup_l: f64,
    pub sup_lb: f64,
    /// `t^{5/2} sup|Lφ|` and `t^{3/2} sup|L̲φ|`.
    pub sup_l_scaled: f64,
    pub sup_lb_scaled: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub rows: Vec<DecayRow>,
    /// `sup|φ|(t_a) / sup|φ|(t_b)`.
    pub ratio: Option<f64>,
    /// Least-squares slope of `log sup|φ|` against `log t`.
    pub log_slope: Option<f64>,
    /// `t^{3/2}sup|φ|`: last-quarter max over mid-run max.
    pub plateau_ratio: Option<f64>,
}

fn slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / k, sy / k);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Decay table over the states, with `sup|φ|(t_a)/sup|φ|(t_b)` and the log
/// slope over `t ∈ [s0, s1]`.
pub fn decay_report(run: &KgRun, ratio_times: (f64, f64), slope_window: (f64, f64)) -> DecayReport {
    let cfg = &run.cfg;
    let rows: Vec<DecayRow> = run
        .states
        .iter()
        .zip(&run.energies)
        .map(|(s, &e)| {
            let fr = s.phir(cfg);
            let (mut sl, mut slb) = (0.0_f64, 0.0_f64);
            for i in 0..s.phi.len() {
                sl = sl.max((s.phit[i] + fr[i]).abs());
                slb = slb.max((s.phit[i] - fr[i]).abs());
            }
            let sup = s.sup_abs();
            DecayRow {
                t: s.t,
                sup_phi: sup,
                t32_sup_phi: s.t.powf(1.5) * sup,
                sup_l: sl,
                sup_lb: slb,
                sup_l_scaled: s.t.powf(2.5) * sl,
                sup_lb_scaled: s.t.powf(1.5) * slb,
                energy: e,
            }
        })
        .collect();
    let find = |t: f64| rows.iter().find(|r| (r.t - t).abs() < 1e-9 * t.max(1.0));
    let ratio = match (find(ratio_times.0), find(ratio_times.1)) {
        (Some(a), Some(b)) if b.sup_phi > 0.0 => Some(a.sup_phi / b.sup_phi),
        _ => None,
    };
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.t >= slope_window.0 && r.t <= slope_window.1 && r.sup_phi > 0.0)
        .map(|r| (r.t.ln(), r.sup_phi.ln()))
        .collect();
    let late: Vec<&DecayRow> = rows.iter().filter(|r| r.t >= 10.0).collect();
    let plateau_ratio = (late.len() >= 4).then(|| {
        let k = late.len();
        let mx = |w: &[&DecayRow]| w.iter().map(|r| r.t32_sup_phi).fold(0.0_f64, f64::max);
        let mid = mx(&late[k / 4..k / 2 + k / 4]);
        if mid > 0.0 {
            mx(&late[3 * k / 4..]) / mid
        } else {
            0.0
        }
    });
    DecayReport { rows, ratio, log_slope: slope(&pts), plateau_ratio }
}

/// Commuting field whose residual is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommutingField {
    /// `S = t∂_t + r∂_r`, with `(□ − 𝔪²)(Sφ) = 2𝔪²φ`.
    Scaling,
    /// Radial boost profile `g = tφ_r + rφ_t`, where `Ω_{0i}φ = x̂_i g` and
    /// `(□ − 𝔪²)(x̂_i g) = 0`.
    Boost,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommutationResidual {
    pub t: f64,
    /// `‖residual‖_{L²}`.
    pub abs: f64,
    /// Normalized by `‖φ‖` for `S` and by `‖g‖` for the boost.
    pub rel: f64,
}

/// Residual of the commutation identity at each of `times`, from second-order
/// differences in `t` and `r` of an evolution on the grid of `cfg`. The time
/// stencil spacing is the multiple of `Δt` closest to `dr/2`.
pub fn commutation_residual(cfg: &KgConfig, field: CommutingField, times: &[f64]) -> Result<Vec<CommutationResidual>, KgError> {
    cfg.validate()?;
    let delta = (0.5 / cfg.cfl).round().max(1.0) * cfg.dt();
    let mut req = Vec::with_capacity(3 * times.len());
    for &t in times {
        if t - delta < 0.0 || t + delta > cfg.t_max {
            return Err(KgError::InsufficientResolution(format!("stencil at t = {t} leaves [0, t_max]")));
        }
        req.extend([t - delta, t, t + delta]);
    }
    req.sort_by(|a, b| a.total_cmp(b));
    let run = evolve_kg(cfg, &req)?;
    let n = cfg.cells();
    let dr = cfg.dr;
    let m2 = cfg.mass * cfg.mass;
    // second-order radial derivative with the even reflection
    let dr2 = |f: &[f64], i: usize| -> f64 {
        let lo = if i == 0 { f[0] } else { f[i - 1] };
        let hi = if i + 1 < n { f[i + 1] } else { 0.0 };
        (hi - lo) / (2.0 * dr)
    };
    let field_of = |s: &KgState| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let r = cfg.radius(i);
                match field {
                    CommutingField::Scaling => s.t * s.phit[i] + r * dr2(&s.phi, i),
                    CommutingField::Boost => s.t * dr2(&s.phi, i) + r * s.phit[i],
                }
            })
            .collect()
    };
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let get = |tt: f64| run.state_at(tt).ok_or(KgError::InsufficientStates(tt));
        let (sm, s0, sp) = (get(t - delta)?, get(t)?, get(t + delta)?);
        let (gm, g0, gp) = (field_of(sm), field_of(s0), field_of(sp));
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            let r = cfg.radius(i);
            let gtt = (gp[i] - 2.0 * g0[i] + gm[i]) / (delta * delta);
            let res = match field {
                CommutingField::Scaling => {
                    // Δg = (rg)_rr / r, rg odd in r
                    let w = |j: isize| -> f64 {
                        if j < 0 {
                            -cfg.radius((-j - 1) as usize) * g0[(-j - 1) as usize]
                        } else if (j as usize) < n {
                            cfg.radius(j as usize) * g0[j as usize]
                        } else {
                            0.0
                        }
                    };
                    let ii = i as isize;
                    let lap = (w(ii + 1) - 2.0 * w(ii) + w(ii - 1)) / (dr * dr * r);
                    -gtt + lap - m2 * g0[i] - 2.0 * m2 * s0.phi[i]
                }
                CommutingField::Boost => {
                    // l = 1: g_rr + 2g_r/r − 2g/r², g odd in r
                    let at = |j: isize| -> f64 {
                        if j < 0 {
                            -g0[(-j - 1) as usize]
                        } else if (j as usize) < n {
                            g0[j as usize]
                        } else {
                            0.0
                        }
                    };
                    let ii = i as isize;
                    let grr = (at(ii + 1) - 2.0 * at(ii) + at(ii - 1)) / (dr * dr);
                    let gr = (at(ii + 1) - at(ii - 1)) / (2.0 * dr);
                    -gtt + grr + 2.0 * gr / r - 2.0 * g0[i] / (r * r) - m2 * g0[i]
                }
            };
            num += res * res * r * r;
            den += match field {
                CommutingField::Scaling => s0.phi[i].powi(2),
                CommutingField::Boost => g0[i].powi(2),
            } * r
                * r;
        }
        let abs = (4.0 * PI * dr * num).sqrt();
        let nrm = (4.0 * PI * dr * den).sqrt();
        out.push(CommutationResidual { t, abs, rel: if nrm > 0.0 { abs / nrm } else { abs } });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> KgConfig {
        KgConfig { r_max: 12.0, dr: 0.02, t_max: 8.0, ..KgConfig::default() }
    }

    #[test]
    fn zero_data_stays_zero() {
        let mut c = small();
        c.data.amplitude = 0.0;
        let run = evolve_kg(&c, &[1.0, 4.0]).unwrap();
        assert!(run.states.iter().all(|s| s.sup_abs() == 0.0));
        assert_eq!(run.energy_drift(), 0.0);
    }

    #[test]
    fn config_guards() {
        assert!(matches!(KgConfig { cfl: 0.6, ..small() }.validate(), Err(KgError::CflViolation(_))));
        assert!(KgConfig { r_max: 9.0, ..small() }.validate().is_err());
        assert!(KgConfig::default().validate().is_ok());
    }

    #[test]
    fn constant_field_energy_density() {
        assert!((q_tb(2.0, 3.0f64.sqrt(), 1.0, 1.0, 1.0, 0.0, 0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lower_bound_gap_closed_form() {
        // Q − lower = u(L̲f)²(1 − u/ū)/(4ρ)
        let (t, r, rho, f, ft, fr) = (5.0, 3.0, 4.0, 0.3, -1.2, 0.7);
        let (u, ub) = (t - r, t + r);
        let gap = q_tb(t, r, rho, 1.0, f, ft, fr) - q_tb_lower(t, r, rho, 1.0, f, ft, fr);
        assert!((gap - u * (ft - fr).powi(2) * (1.0 - u / ub) / (4.0 * rho)).abs() < 1e-14);
    }
}
