//! Null-tetrad algebra for Weyl tensors: null decomposition, electric and
//! magnetic parts, the Bel–Robinson tensor, the Gauss equation on spheres,
//! and the closed forms of the Schwarzschild zone.
//!
//! Orientation: `ε_{0123} = +√|det g|` in the coordinates `(t, x¹, x², x³)`.
//! Duals are always left duals, `*W_{αβγδ} = ½ ε_{αβμν} W^{μν}_{γδ}`.

use crate::foliation::FrameSet;
use crate::metric::{metric_at, Coordinates4, MetricError, MetricJet, MetricKind, MetricModel};
use crate::tensor::{contract4, inner, levi_civita, Mat4, Rank3, Rank4, Vec4, ZERO3, ZERO4};
use nalgebra::{Matrix2, Matrix3, Vector2};
use thiserror::Error;

/// Default tolerance on tetrad and frame normalization.
pub const TETRAD_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NullGeomError {
    #[error("null tetrad violates its normalization by {0:e}")]
    BadTetrad(f64),
    #[error("frame violates its normalization by {0:e}")]
    BadFrame(f64),
    #[error("r = {r} is not outside the horizon 2M = {two_m}")]
    Horizon { r: f64, two_m: f64 },
    #[error("r = {r} is not in the Schwarzschild zone r >= {r_out}")]
    OutsideZs { r: f64, r_out: f64 },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// `{e₄ = 𝕃, e₃ = 𝕃̲, e_A}` with `⟨𝕃, 𝕃̲⟩ = −2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullTetrad {
    pub e4: Vec4,
    pub e3: Vec4,
    pub ea: [Vec4; 2],
}

impl NullTetrad {
    /// Largest violation of the canonical normalization.
    pub fn residual(&self, g: &Mat4) -> f64 {
        let ip = |a: &Vec4, b: &Vec4| inner(g, a, b);
        let [e1, e2] = &self.ea;
        [
            ip(&self.e4, &self.e3) + 2.0,
            ip(&self.e4, &self.e4),
            ip(&self.e3, &self.e3),
            ip(e1, e1) - 1.0,
            ip(e2, e2) - 1.0,
            ip(e1, e2),
            ip(e1, &self.e3),
            ip(e1, &self.e4),
            ip(e2, &self.e3),
            ip(e2, &self.e4),
        ]
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// The intrinsic tetrad `{L, L̲, e_A}` of the foliation.
    pub fn from_frames(f: &FrameSet) -> Self {
        Self { e4: f.l, e3: f.lb, ea: f.ea }
    }

    /// Rescale `𝕃 → λ𝕃`, `𝕃̲ → λ⁻¹𝕃̲`.
    pub fn boosted(&self, lambda: f64) -> Self {
        Self { e4: self.e4 * lambda, e3: self.e3 / lambda, ..*self }
    }

    /// Rotate `{e_A}` by `angle`.
    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let [e1, e2] = self.ea;
        Self { ea: [e1 * c + e2 * s, -e1 * s + e2 * c], ..*self }
    }
}

/// The six null components of a Weyl tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeylNull {
    pub alpha: Matrix2<f64>,
    pub beta: Vector2<f64>,
    pub varrho: f64,
    pub sigma: f64,
    pub betab: Vector2<f64>,
    pub alphab: Matrix2<f64>,
}

impl WeylNull {
    /// Largest component other than `ϱ`.
    pub fn max_non_varrho(&self) -> f64 {
        self.alpha
            .amax()
            .max(self.beta.amax())
            .max(self.sigma.abs())
            .max(self.betab.amax())
            .max(self.alphab.amax())
    }
}

/// `W^{μν}{}_{γδ}`-free helper: raise the first pair.
fn raise_first_pair(w: &Rank4, g_inv: &Mat4) -> Rank4 {
    let mut up = ZERO4;
    for m in 0..4 {
        for n in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let mut s = 0.0;
                    for a in 0..4 {
                        for b in 0..4 {
                            s += g_inv[(m, a)] * g_inv[(n, b)] * w[a][b][c][d];
                        }
                    }
                    up[m][n][c][d] = s;
                }
            }
        }
    }
    up
}

/// Left dual `*W_{αβγδ} = ½ ε_{αβμν} W^{μν}{}_{γδ}`.
pub fn left_dual(w: &Rank4, g: &Mat4, g_inv: &Mat4) -> Rank4 {
    let vol = g.determinant().abs().sqrt();
    let up = raise_first_pair(w, g_inv);
    let mut out = ZERO4;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let mut s = 0.0;
                    for m in 0..4 {
                        for n in 0..4 {
                            let e = levi_civita(a, b, m, n);
                            if e != 0.0 {
                                s += e * up[m][n][c][d];
                            }
                        }
                    }
                    out[a][b][c][d] = 0.5 * vol * s;
                }
            }
        }
    }
    out
}

/// Right dual `W*_{αβγδ} = ½ W_{αβ}{}^{μν} ε_{μνγδ}`.
pub fn right_dual(w: &Rank4, g: &Mat4, g_inv: &Mat4) -> Rank4 {
    let mut swapped = ZERO4;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    swapped[a][b][c][d] = w[c][d][a][b];
                }
            }
        }
    }
    let l = left_dual(&swapped, g, g_inv);
    let mut out = ZERO4;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    out[a][b][c][d] = l[c][d][a][b];
                }
            }
        }
    }
    out
}

/// `max |*W − W*|`; zero for any Weyl tensor.
pub fn duality_residual(w: &Rank4, g: &Mat4, g_inv: &Mat4) -> f64 {
    let l = left_dual(w, g, g_inv);
    let r = right_dual(w, g, g_inv);
    let mut m: f64 = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    m = m.max((l[a][b][c][d] - r[a][b][c][d]).abs());
                }
            }
        }
    }
    m
}

/// Null decomposition of `w` in the tetrad `tet`.
pub fn null_decompose_tensor(w: &Rank4, g: &Mat4, g_inv: &Mat4, tet: &NullTetrad) -> Result<WeylNull, NullGeomError> {
    let res = tet.residual(g);
    if !(res <= TETRAD_TOL) {
        return Err(NullGeomError::BadTetrad(res));
    }
    let (e3, e4) = (&tet.e3, &tet.e4);
    let ea = &tet.ea;
    let dual = left_dual(w, g, g_inv);
    let alpha = Matrix2::from_fn(|a, b| contract4(w, &ea[a], e4, &ea[b], e4));
    let alphab = Matrix2::from_fn(|a, b| contract4(w, &ea[a], e3, &ea[b], e3));
    let beta = Vector2::from_fn(|a, _| 0.5 * contract4(w, &ea[a], e4, e3, e4));
    let betab = Vector2::from_fn(|a, _| 0.5 * contract4(w, &ea[a], e3, e3, e4));
    let varrho = 0.25 * contract4(w, e3, e4, e3, e4);
    let sigma = 0.25 * contract4(&dual, e3, e4, e3, e4);
    Ok(WeylNull { alpha, beta, varrho, sigma, betab, alphab })
}

/// Null decomposition of the Weyl tensor of a level-2 jet.
pub fn null_decompose(jet: &MetricJet, tet: &NullTetrad) -> Result<WeylNull, NullGeomError> {
    null_decompose_tensor(&jet.weyl, &jet.g, &jet.g_inv, tet)
}

/// Which unit timelike vector splits the Weyl tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observer {
    /// `T`, with spatial triad `{N, e_A}`.
    T,
    /// `𝔅`, with spatial triad `{N̄, e_A}`.
    B,
}

/// Electric and magnetic parts relative to an observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EMParts {
    pub e: Matrix3<f64>,
    pub h: Matrix3<f64>,
}

impl EMParts {
    /// `max(|tr E|, |tr H|)`.
    pub fn trace_residual(&self) -> f64 {
        self.e.trace().abs().max(self.h.trace().abs())
    }

    pub fn symmetry_residual(&self) -> f64 {
        (self.e - self.e.transpose()).amax().max((self.h - self.h.transpose()).amax())
    }

    /// `|E|² + |H|²`.
    pub fn energy(&self) -> f64 {
        self.e.norm_squared() + self.h.norm_squared()
    }
}

/// `E_ij = W(U, i, U, j)`, `H_ij = *W(U, i, U, j)`.
pub fn em_decompose(jet: &MetricJet, frame: &FrameSet, which: Observer) -> Result<EMParts, NullGeomError> {
    let (u, radial) = match which {
        Observer::T => (frame.t, frame.n),
        Observer::B => (frame.b, frame.nbar),
    };
    let triad = [radial, frame.ea[0], frame.ea[1]];
    let g = &jet.g;
    let mut bad: f64 = (inner(g, &u, &u) + 1.0).abs();
    for i in 0..3 {
        bad = bad.max(inner(g, &u, &triad[i]).abs());
        for j in 0..3 {
            let d = if i == j { 1.0 } else { 0.0 };
            bad = bad.max((inner(g, &triad[i], &triad[j]) - d).abs());
        }
    }
    if !(bad <= TETRAD_TOL) {
        return Err(NullGeomError::BadFrame(bad));
    }
    let dual = left_dual(&jet.weyl, g, &jet.g_inv);
    Ok(EMParts {
        e: Matrix3::from_fn(|i, j| contract4(&jet.weyl, &u, &triad[i], &u, &triad[j])),
        h: Matrix3::from_fn(|i, j| contract4(&dual, &u, &triad[i], &u, &triad[j])),
    })
}

fn pair_contract(w: &Rank4, x: &Vec4, z: &Vec4) -> Mat4 {
    // A_{ρσ} = W_{αργσ} X^α Z^γ
    Mat4::from_fn(|r, s| {
        let mut v = 0.0;
        for a in 0..4 {
            for c in 0..4 {
                v += w[a][r][c][s] * x[a] * z[c];
            }
        }
        v
    })
}

/// `Q(W)(X, Y, Z, U)` for the Bel–Robinson tensor
/// `Q_{αβγδ} = W_{αργσ} W_β{}^ρ{}_δ{}^σ + *W_{αργσ} *W_β{}^ρ{}_δ{}^σ`.
pub fn bel_robinson_scalar(w: &Rank4, g: &Mat4, g_inv: &Mat4, x: &Vec4, y: &Vec4, z: &Vec4, u: &Vec4) -> f64 {
    let dual = left_dual(w, g, g_inv);
    let term = |t: &Rank4| {
        let a = pair_contract(t, x, z);
        let b = pair_contract(t, y, u);
        // A_{ρσ} B_{ρ'σ'} g^{ρρ'} g^{σσ'}
        (g_inv * a * g_inv).component_mul(&b).sum()
    };
    term(w) + term(&dual)
}

/// Input of the Gauss equation on a 2-sphere with a canonical null pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussInputs {
    /// Gaussian curvature of the induced metric.
    pub k_gauss: f64,
    pub trchi: f64,
    pub trchib: f64,
    pub chihat: Matrix2<f64>,
    pub chibhat: Matrix2<f64>,
    /// `W(𝕃, 𝕃̲, 𝕃, 𝕃̲)`.
    pub w_llll: f64,
    /// `γ^{AC} S_{AC}` for the Schouten tensor.
    pub schouten_trace: f64,
}

/// `K + ¼trχ trχ̲ − ½χ̂·χ̲̂ + ¼W(𝕃,𝕃̲,𝕃,𝕃̲) − ½γ^{AC}S_{AC}`.
pub fn gauss_residual(inp: &GaussInputs) -> f64 {
    inp.k_gauss + 0.25 * inp.trchi * inp.trchib - 0.5 * inp.chihat.component_mul(&inp.chibhat).sum()
        + 0.25 * inp.w_llll
        - 0.5 * inp.schouten_trace
}

/// Gaussian curvature predicted by the Gauss equation.
pub fn gauss_curvature(inp: &GaussInputs) -> f64 {
    -gauss_residual(&GaussInputs { k_gauss: 0.0, ..*inp })
}

/// Curvature terms of the Gauss equation in the tetrad `tet`.
pub fn gauss_curvature_terms(jet: &MetricJet, tet: &NullTetrad) -> (f64, f64) {
    let w = contract4(&jet.weyl, &tet.e4, &tet.e3, &tet.e4, &tet.e3);
    let s: f64 = tet.ea.iter().map(|e| inner(&jet.schouten, e, e)).sum();
    (w, s)
}

/// Schwarzschild-zone closed forms at coordinate radius `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchwarzschildClosedForms {
    /// `n⁻⁴ϱ̂ = −4M/(r+2M)³`.
    pub varrho_hat_n4: f64,
    pub trchi_s: f64,
    pub trchib_s: f64,
    /// Gaussian curvature of the round sphere `(r+2M)⁻²`.
    pub k_sphere: f64,
    /// `γ(r) = r + 4M ln(r − 2M)`.
    pub gamma_r: f64,
}

pub fn schwarzschild_closed_forms(mass: f64, r: f64) -> Result<SchwarzschildClosedForms, NullGeomError> {
    if !(r > 2.0 * mass) {
        return Err(NullGeomError::Horizon { r, two_m: 2.0 * mass });
    }
    let s = r + 2.0 * mass;
    let gamma_r = if mass == 0.0 { r } else { r + 4.0 * mass * (r - 2.0 * mass).ln() };
    Ok(SchwarzschildClosedForms {
        varrho_hat_n4: -4.0 * mass / (s * s * s),
        trchi_s: 2.0 / s,
        trchib_s: -2.0 / s,
        k_sphere: 1.0 / (s * s),
        gamma_r,
    })
}

/// `r ≥ r_out` check; Minkowski counts as everywhere.
pub fn zone_check(model: &MetricModel, r: f64) -> Result<(), NullGeomError> {
    let r_out = model.vacuum_radius();
    if r < r_out {
        return Err(NullGeomError::OutsideZs { r, r_out });
    }
    Ok(())
}

/// Orthonormal pair tangent to the coordinate sphere through `x`.
pub fn coordinate_sphere_pair(g: &Mat4, x: &Coordinates4) -> [Vec4; 2] {
    let (e1, e2) = crate::foliation::tangent_pair(&unit_radial(x));
    let to4 = |v: nalgebra::Vector3<f64>| {
        let w = Vec4::new(0.0, v[0], v[1], v[2]);
        w / inner(g, &w, &w).sqrt()
    };
    [to4(e1), to4(e2)]
}

/// Euclidean unit radial direction of `x`.
pub fn unit_radial(x: &Coordinates4) -> [f64; 3] {
    let r = x.r();
    [x.x1 / r, x.x2 / r, x.x3 / r]
}

/// `{n⁻¹L̂, n⁻¹L̂b, ê_A}` with `L̂ = ∂_t + n²∂_r`, `L̂b = ∂_t − n²∂_r`.
pub fn hat_tetrad(model: &MetricModel, x: &Coordinates4) -> Result<NullTetrad, NullGeomError> {
    let r = x.r();
    if let MetricKind::Schwarzschild { mass } | MetricKind::GluedSchwarzschild { mass, .. } = model.kind() {
        if !(r > 2.0 * mass) {
            return Err(NullGeomError::Horizon { r, two_m: 2.0 * mass });
        }
    }
    zone_check(model, r)?;
    let (n, _) = model.lapse(r)?;
    let g = metric_at(model, x, 0)?.g;
    let xh = unit_radial(x);
    let dr = Vec4::new(0.0, xh[0], xh[1], xh[2]);
    let dt = Vec4::new(1.0, 0.0, 0.0, 0.0);
    let lh = dt + dr * (n * n);
    let lbh = dt - dr * (n * n);
    Ok(NullTetrad { e4: lh / n, e3: lbh / n, ea: coordinate_sphere_pair(&g, x) })
}

/// Step of the central differences of tetrad fields.
const FIELD_FD_STEP: f64 = 1e-5;

/// `⟨∇_{e_A} V, e_C⟩` for a vector field `V`, with `∂_{e_A}V` by central
/// differences of `field` at `x`.
fn sphere_form(
    jet: &MetricJet,
    x: &Coordinates4,
    ea: &[Vec4; 2],
    field: &dyn Fn(&Coordinates4) -> Result<Vec4, NullGeomError>,
) -> Result<Matrix2<f64>, NullGeomError> {
    let v = field(x)?;
    let mut out = Matrix2::zeros();
    for a in 0..2 {
        let h = FIELD_FD_STEP;
        let shift = |s: f64| Coordinates4::from_vec(&(x.to_vec() + ea[a] * s));
        let dv = (field(&shift(h))? - field(&shift(-h))?) / (2.0 * h);
        let mut cov = dv;
        for l in 0..4 {
            for m in 0..4 {
                for n in 0..4 {
                    cov[l] += jet.gamma[l][m][n] * ea[a][m] * v[n];
                }
            }
        }
        for c in 0..2 {
            out[(a, c)] = inner(&jet.g, &cov, &ea[c]);
        }
    }
    Ok(out)
}

/// Null geometry of the coordinate sphere through `x` measured in the hat
/// tetrad, with every term of the Gauss equation computed from the metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateSphere {
    pub gauss: GaussInputs,
    /// `tr χ` of `L^s = n⁻²∂_t + ∂_r`.
    pub trchi_s: f64,
    /// `n⁻⁴ϱ̂ = ϱ` of the hat tetrad.
    pub varrho_hat_n4: f64,
    /// `Γ^r_{tt}` along `x̂`.
    pub gamma_r_tt: f64,
}

pub fn coordinate_sphere(model: &MetricModel, x: &Coordinates4) -> Result<CoordinateSphere, NullGeomError> {
    let jet = crate::metric::curvature_at(model, x)?;
    let tet = hat_tetrad(model, x)?;
    let e4 = |y: &Coordinates4| hat_tetrad(model, y).map(|t| t.e4);
    let e3 = |y: &Coordinates4| hat_tetrad(model, y).map(|t| t.e3);
    let chi = sphere_form(&jet, x, &tet.ea, &e4)?;
    let chib = sphere_form(&jet, x, &tet.ea, &e3)?;
    let sym = |c: Matrix2<f64>| (c + c.transpose()) * 0.5;
    let (chi, chib) = (sym(chi), sym(chib));
    let hat = |c: &Matrix2<f64>| c - Matrix2::identity() * (0.5 * c.trace());
    let (w_llll, schouten_trace) = gauss_curvature_terms(&jet, &tet);
    let mut gauss = GaussInputs {
        k_gauss: 0.0,
        trchi: chi.trace(),
        trchib: chib.trace(),
        chihat: hat(&chi),
        chibhat: hat(&chib),
        w_llll,
        schouten_trace,
    };
    gauss.k_gauss = gauss_curvature(&gauss);
    let (n, _) = model.lapse(x.r())?;
    let xh = unit_radial(x);
    let gamma_r_tt = (1..4).map(|i| jet.gamma[i][0][0] * xh[i - 1]).sum();
    Ok(CoordinateSphere {
        gauss,
        trchi_s: gauss.trchi / n,
        varrho_hat_n4: null_decompose(&jet, &tet)?.varrho,
        gamma_r_tt,
    })
}

/// The two computation paths for `ϱ` and `β̲` in the intrinsic tetrad.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarrhoConsistency {
    pub varpi: f64,
    pub n: f64,
    /// `∇̸_A r`.
    pub snr: Vector2<f64>,
    pub varrho_direct: f64,
    /// `n⁻⁴ϱ̂ (1 + (3/2)(n⁻²ϖ² − 1))`.
    pub varrho_formula: f64,
    pub betab_direct: Vector2<f64>,
    /// `−(3/2) n⁻⁶ ϖ ϱ̂ ∇̸_A r`.
    pub betab_formula: Vector2<f64>,
    /// `n⁻⁴ϱ̂` from the hat tetrad.
    pub varrho_hat_n4: f64,
}

impl VarrhoConsistency {
    pub fn varrho_rel_diff(&self) -> f64 {
        let s = self.varrho_direct.abs().max(self.varrho_formula.abs());
        if s == 0.0 {
            0.0
        } else {
            (self.varrho_direct - self.varrho_formula).abs() / s
        }
    }

    pub fn betab_diff(&self) -> f64 {
        (self.betab_direct - self.betab_formula).amax()
    }
}

/// Compare `ϱ` in the intrinsic tetrad of `frames` at `x` against the
/// formula in terms of `ϖ = N(r)`.
pub fn varrho_consistency(
    model: &MetricModel,
    x: &Coordinates4,
    frames: &FrameSet,
) -> Result<VarrhoConsistency, NullGeomError> {
    let jet = crate::metric::curvature_at(model, x)?;
    let hat = hat_tetrad(model, x)?;
    let varrho_hat_n4 = null_decompose(&jet, &hat)?.varrho;
    let intr = null_decompose(&jet, &NullTetrad::from_frames(frames))?;
    let xh = unit_radial(x);
    let dr = |v: &Vec4| xh[0] * v[1] + xh[1] * v[2] + xh[2] * v[3];
    let varpi = dr(&frames.n);
    let snr = Vector2::new(dr(&frames.ea[0]), dr(&frames.ea[1]));
    let (n, _) = model.lapse(x.r())?;
    let n2 = n * n;
    Ok(VarrhoConsistency {
        varpi,
        n,
        snr,
        varrho_direct: intr.varrho,
        varrho_formula: varrho_hat_n4 * (1.0 + 1.5 * (varpi * varpi / n2 - 1.0)),
        betab_direct: intr.betab,
        betab_formula: snr * (-1.5 * varpi / n2 * varrho_hat_n4),
        varrho_hat_n4,
    })
}

/// `J_{βγδ} = ½(∇_γ S_{βδ} − ∇_δ S_{βγ})` from `S` and `dS[μ] = ∂_μ S`.
pub fn weyl_current(s: &Mat4, ds: &[Mat4; 4], gamma: &Rank3) -> Rank3 {
    let cov = |c: usize, b: usize, d: usize| {
        let mut v = ds[c][(b, d)];
        for l in 0..4 {
            v -= gamma[l][c][b] * s[(l, d)] + gamma[l][c][d] * s[(b, l)];
        }
        v
    };
    let mut j = ZERO3;
    for b in 0..4 {
        for c in 0..4 {
            for d in 0..4 {
                j[b][c][d] = 0.5 * (cov(c, b, d) - cov(d, b, c));
            }
        }
    }
    j
}

/// Klein–Gordon energy-momentum tensor
/// `Q_{μν}[f] = ∂_μf ∂_νf − ½ g_{μν}(∂^αf ∂_αf + 𝔪f²)`.
pub fn kg_energy_momentum(g: &Mat4, g_inv: &Mat4, df: &Vec4, f: f64) -> Mat4 {
    let grad2 = inner(g_inv, df, df);
    df * df.transpose() - g * (0.5 * (grad2 + crate::metric::KG_MASS * f * f))
}

/// The Riemannian metric `h_{γδ} = g_{γδ} + 2T_γT_δ` built from a unit
/// timelike vector `t`.
pub fn riemannian_h(g: &Mat4, t: &Vec4) -> Mat4 {
    let tl = g * t;
    g + tl * tl.transpose() * 2.0
}

/// `Q_{μν}[F] = h^{γδ}(∇_μF_γ ∇_νF_δ − ½g_{μν}(∇^αF_γ ∇_αF_δ + 𝔪F_γF_δ))`
/// for a 1-form with covariant derivative `dF[μ][γ] = ∇_μF_γ`.
pub fn kg_energy_momentum_form(g: &Mat4, g_inv: &Mat4, h_inv: &Mat4, df: &Mat4, f: &Vec4) -> Mat4 {
    let mut q = Mat4::zeros();
    for c in 0..4 {
        for d in 0..4 {
            let w = h_inv[(c, d)];
            if w == 0.0 {
                continue;
            }
            let dc = df.column(c).into_owned();
            let dd = df.column(d).into_owned();
            let grad = inner(g_inv, &dc, &dd);
            q += (dc * dd.transpose() - g * (0.5 * (grad + crate::metric::KG_MASS * f[c] * f[d]))) * w;
        }
    }
    q
}

/// Dual-free contraction oracle: `W(X,Y,Z,U)` by direct summation.
pub fn weyl_contract(jet: &MetricJet, x: &Vec4, y: &Vec4, z: &Vec4, u: &Vec4) -> f64 {
    contract4(&jet.weyl, x, y, z, u)
}
