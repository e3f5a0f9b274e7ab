//! The experiments behind each subcommand. Each returns its tables; rows
//! that fail carry the error in their `status` cell.

use crate::config::{ConfigError, RunConfig};
use crate::output::{PlotSpec, Table, Tolerances, OK};
use hyperlab::foliation::{k_at, structure_residuals, trace_full, SliceOptions};
use hyperlab::geodesic::{Direction, TraceOptions};
use hyperlab::kgflat::{commutation_residual, decay_report, evolve_kg_sampling, time_reversal_error, CommutingField, KgError};
use hyperlab::mass::bondi_trace;
use hyperlab::metric::{curvature_at, Coordinates4, MetricModel};
use hyperlab::nullgeom::{coordinate_sphere, hat_tetrad, null_decompose, schwarzschild_closed_forms, zone_check};
use hyperlab::quadrature::SphereQuadrature;
use hyperlab::zscompare::{cone_sphere_geometry, radial_comparison_series, transport_residuals_zs};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// A table and the plot drawn from it under `--plot`.
pub struct Output {
    pub table: Table,
    pub plot: Option<PlotSpec<'static>>,
}

impl Output {
    fn plain(table: Table) -> Self {
        Self { table, plot: None }
    }

    fn plotted(table: Table, plot: PlotSpec<'static>) -> Self {
        Self { table, plot: Some(plot) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Foliate,
    WeylCheck,
    ZsCompare,
    Mass,
    Kg,
    Residuals,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::Foliate => "foliate",
            Self::WeylCheck => "weyl-check",
            Self::ZsCompare => "zs-compare",
            Self::Mass => "mass",
            Self::Kg => "kg",
            Self::Residuals => "residuals",
        }
    }
}

/// Everything an experiment needs, derived once from the config.
pub struct Context {
    pub cfg: RunConfig,
    pub model: MetricModel,
    pub origin: Coordinates4,
    pub trace: TraceOptions,
    pub slice: SliceOptions,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Result<Self, ConfigError> {
        let model = cfg.model()?;
        let trace = cfg.trace_options();
        let slice = SliceOptions { trace, ..SliceOptions::default() };
        Ok(Self { origin: cfg.origin(), model, trace, slice, cfg })
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            ode_rel_tol: self.trace.ode.rel_tol,
            ode_abs_tol: self.trace.ode.abs_tol,
            ode_max_step: self.trace.ode.max_step,
            level_root_tol: self.slice.root_tol,
            kg_cfl: self.cfg.kg.cfl,
        }
    }

    fn quadrature(&self) -> SphereQuadrature {
        let f = &self.cfg.foliation;
        SphereQuadrature::product(f.theta_nodes, f.phi_nodes, [0.0, 0.0, 1.0])
    }

    /// Direction of the comparison geodesic: the configured one, else the
    /// unit vector pointing away from the centre, or `e₁` for a centred origin.
    fn comparison_direction(&self) -> [f64; 3] {
        if let Some(w) = self.cfg.zs.omega {
            return w;
        }
        let o = self.cfg.origin.offset;
        let n = o.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            [o[0] / n, o[1] / n, o[2] / n]
        } else {
            [1.0, 0.0, 0.0]
        }
    }
}

pub fn run(exp: Experiment, ctx: &Context) -> Result<Vec<Output>, RunError> {
    match exp {
        Experiment::Foliate => foliate(ctx),
        Experiment::WeylCheck => Ok(weyl_check(ctx)),
        Experiment::ZsCompare => zs_compare(ctx),
        Experiment::Mass => mass(ctx),
        Experiment::Kg => kg(ctx),
        Experiment::Residuals => residuals(ctx),
    }
}

const FOLIATE_COLUMNS: [&str; 12] =
    ["rho", "zeta", "t", "r", "tau", "b", "rtilde", "u", "ubar", "trk_minus_3_over_rho", "khat_nn", "khat_na_max"];
const RESIDUAL_COLUMNS: [&str; 7] = ["zeta", "theta", "phi", "equation", "max_abs", "max_rel", "samples"];

fn foliate(ctx: &Context) -> Result<Vec<Output>, RunError> {
    ctx.cfg.validate_origin()?;
    let (leaf, res) = fan_tables(ctx, true);
    Ok(vec![
        Output::plotted(leaf, PlotSpec { x: "rho", y: "trk_minus_3_over_rho", series: Some("zeta"), log_y: false }),
        Output::plain(res.expect("residuals requested")),
    ])
}

/// Leaf table over the `(ζ, ω)` fan and, if asked, the structure residuals of
/// every fan geodesic.
fn fan_tables(ctx: &Context, with_leaf: bool) -> (Table, Option<Table>) {
    let rhos = ctx.cfg.foliation.rho_grid();
    let quad = ctx.quadrature();
    let jobs: Vec<(f64, usize)> =
        ctx.cfg.foliation.zetas().into_iter().flat_map(|z| (0..quad.len()).map(move |i| (z, i))).collect();
    let per_job: Vec<(Vec<(Vec<f64>, String)>, Vec<(Vec<String>, String)>)> = jobs
        .par_iter()
        .map(|&(zeta, i)| {
            let it = i / quad.phis.len();
            let ip = i % quad.phis.len();
            let (theta, phi) = (quad.thetas[it], quad.phis[ip]);
            let angle_cells = |name: &str| vec![fmt(zeta), fmt(theta), fmt(phi), name.to_string()];
            let rec = Direction::new(zeta, quad.nodes[i])
                .map_err(|e| e.to_string())
                .and_then(|d| trace_full(&ctx.model, &ctx.origin, &d, &rhos, &ctx.trace).map_err(|e| e.to_string()));
            let rec = match rec {
                Ok(r) => r,
                Err(e) => {
                    let leaf = rhos.iter().map(|&rho| (vec![rho, zeta], e.clone())).collect();
                    return (leaf, vec![(angle_cells("all"), e)]);
                }
            };
            let mut leaf = Vec::new();
            if with_leaf {
                for &rho in &rhos {
                    let row = rec
                        .sample_at(rho)
                        .and_then(|s| s.scalars.map(|sc| (s, sc)))
                        .ok_or_else(|| format!("geodesic truncated before rho = {rho}"))
                        .and_then(|(s, sc)| {
                            let k = k_at(&ctx.model, &rec, rho).map_err(|e| e.to_string())?;
                            let na = k.k_nba();
                            Ok(vec![
                                rho,
                                zeta,
                                sc.t,
                                s.x.r(),
                                sc.tau,
                                sc.b,
                                sc.rtilde,
                                sc.u,
                                sc.ubar,
                                k.trk_minus_3_over_rho(),
                                k.khat()[(0, 0)],
                                na[0].abs().max(na[1].abs()),
                            ])
                        });
                    leaf.push(match row {
                        Ok(v) => (v, OK.to_string()),
                        Err(e) => (vec![rho, zeta], e),
                    });
                }
            }
            let res = match structure_residuals(&ctx.model, &rec, &ctx.trace) {
                Ok(sr) => sr
                    .equations
                    .iter()
                    .map(|e| {
                        let mut cells = angle_cells(e.name);
                        cells.extend([fmt(e.max_abs), fmt(e.max_rel), e.samples.to_string()]);
                        (cells, OK.to_string())
                    })
                    .collect(),
                Err(e) => vec![(angle_cells("all"), e.to_string())],
            };
            (leaf, res)
        })
        .collect();
    let mut leaf = Table::new("foliate", &FOLIATE_COLUMNS);
    let mut res = Table::new("foliate_residuals", &RESIDUAL_COLUMNS);
    for (rows, rrows) in per_job {
        for (v, st) in rows {
            if st == OK {
                leaf.push(&v, OK);
            } else {
                leaf.push_failure(&v, &st);
            }
        }
        for (mut cells, st) in rrows {
            cells.resize(RESIDUAL_COLUMNS.len(), "NaN".into());
            res.push_cells(cells, &st);
        }
    }
    (leaf, Some(res))
}

fn fmt(v: f64) -> String {
    crate::output::fmt_f64(v)
}

/// Point at coordinate radius `r` off every coordinate axis.
fn probe(r: f64) -> Coordinates4 {
    Coordinates4::new(0.0, r / 3.0, 2.0 * r / 3.0, 2.0 * r / 3.0)
}

fn weyl_check(ctx: &Context) -> Vec<Output> {
    let mut closed = Table::new(
        "closed_forms",
        &[
            "r",
            "varrho_hat_n4",
            "K",
            "trchi_s",
            "varrho_hat_n4_closed",
            "K_closed",
            "trchi_s_closed",
            "max_rel_diff",
        ],
    );
    let mut null = Table::new("weyl_null", &["r", "varrho", "varrho_closed", "max_non_varrho"]);
    let m = ctx.model.mass();
    for &r in &ctx.cfg.weyl.radii {
        let x = probe(r);
        let row = zone_check(&ctx.model, r)
            .and_then(|_| Ok((coordinate_sphere(&ctx.model, &x)?, schwarzschild_closed_forms(m, r)?)));
        match row {
            Ok((cs, cf)) => {
                let rel = |a: f64, b: f64| if b == 0.0 { a.abs() } else { (a / b - 1.0).abs() };
                let worst = rel(cs.varrho_hat_n4, cf.varrho_hat_n4)
                    .max(rel(cs.gauss.k_gauss, cf.k_sphere))
                    .max(rel(cs.trchi_s, cf.trchi_s));
                closed.push(
                    &[r, cs.varrho_hat_n4, cs.gauss.k_gauss, cs.trchi_s, cf.varrho_hat_n4, cf.k_sphere, cf.trchi_s, worst],
                    OK,
                );
            }
            Err(e) => closed.push_failure(&[r], &e.to_string()),
        }
        let row = zone_check(&ctx.model, r).and_then(|_| {
            let jet = curvature_at(&ctx.model, &x)?;
            let w = null_decompose(&jet, &hat_tetrad(&ctx.model, &x)?)?;
            Ok((w, schwarzschild_closed_forms(m, r)?.varrho_hat_n4))
        });
        match row {
            Ok((w, vc)) => null.push(&[r, w.varrho, vc, w.max_non_varrho()], OK),
            Err(e) => null.push_failure(&[r], &e.to_string()),
        }
    }
    vec![
        Output::plotted(closed, PlotSpec { x: "r", y: "K", series: None, log_y: false }),
        Output::plain(null),
    ]
}

const COMPARE_COLUMNS: [&str; 10] =
    ["rho", "t", "r", "n", "varpi", "n_minus_varpi", "u", "uhat", "u_minus_uhat", "rt_over_r_minus_ninv"];

fn zs_compare(ctx: &Context) -> Result<Vec<Output>, RunError> {
    ctx.cfg.validate_origin()?;
    let rhos = ctx.cfg.foliation.rho_grid();
    let mut compare = Table::new("compare", &COMPARE_COLUMNS);
    let rec = Direction::new(ctx.cfg.zs.zeta, ctx.comparison_direction())
        .map_err(|e| e.to_string())
        .and_then(|d| trace_full(&ctx.model, &ctx.origin, &d, &rhos, &ctx.trace).map_err(|e| e.to_string()));
    match rec.and_then(|rec| radial_comparison_series(&ctx.model, &rec).map_err(|e| e.to_string())) {
        Ok(series) => {
            for r in &series.rows {
                compare.push(
                    &[r.rho, r.t, r.r, r.n, r.varpi, r.n_minus_varpi, r.u, r.uhat, r.u_minus_uhat, r.rt_over_r_minus_ninv],
                    OK,
                );
            }
        }
        Err(e) => compare.push_failure(&[], &e),
    }
    let quad = ctx.quadrature();
    let rho = ctx.cfg.zs.cone_rho;
    let mut cone = Table::new(
        "cone_spheres",
        &["rho", "uhat", "t_bar", "osc_t", "t_min", "t_max", "area", "k_sphere", "k_rel_dev", "dag_a_rel_diff", "diam_bound"],
    );
    let reports: Vec<_> = ctx
        .cfg
        .zs
        .cone_uhat
        .par_iter()
        .map(|&uh| (uh, cone_sphere_geometry(&ctx.model, &ctx.origin, rho, uh, &quad, &ctx.slice)))
        .collect();
    for (uh, rep) in reports {
        match rep {
            Ok(c) => cone.push(
                &[c.rho, c.uhat, c.t_bar, c.osc_t, c.t_min, c.t_max, c.area, c.k_sphere, c.k_rel_dev, c.dag_a_rel_diff, c.diam_bound],
                OK,
            ),
            Err(e) => cone.push_failure(&[rho, uh], &e.to_string()),
        }
    }
    Ok(vec![
        Output::plotted(compare, PlotSpec { x: "rho", y: "n_minus_varpi", series: None, log_y: true }),
        Output::plain(cone),
    ])
}

fn zs_residual_table(ctx: &Context) -> Table {
    let rhos = ctx.cfg.foliation.rho_grid();
    let mut t = Table::new("zs_residuals", &["equation", "max_abs", "max_rel", "samples", "skipped"]);
    let res = Direction::new(ctx.cfg.zs.zeta, ctx.comparison_direction()).map_err(|e| e.to_string()).and_then(|d| {
        let rec = trace_full(&ctx.model, &ctx.origin, &d, &rhos, &ctx.trace).map_err(|e| e.to_string())?;
        transport_residuals_zs(&ctx.model, &rec, &ctx.trace).map_err(|e| e.to_string())
    });
    match res {
        Ok(z) => {
            for e in [&z.bvarpi, &z.cmr_1] {
                let cells = vec![e.name.to_string(), fmt(e.max_abs), fmt(e.max_rel), e.samples.to_string(), z.skipped.to_string()];
                t.push_cells(cells, OK);
            }
        }
        Err(e) => t.push_cells(vec!["all".into(), "NaN".into(), "NaN".into(), "0".into(), "0".into()], &e),
    }
    t
}

fn mass(ctx: &Context) -> Result<Vec<Output>, RunError> {
    ctx.cfg.validate_origin()?;
    let quad = ctx.quadrature();
    let grid = &ctx.cfg.mass.t_grid;
    let mut masses = Table::new("masses", &["t", "rho", "area_radius", "mass"]);
    let mut fits = Table::new("mass_fit", &["rho", "m_inf", "c", "rms", "points"]);
    for &rho in &ctx.cfg.mass.rhos {
        match bondi_trace(&ctx.model, &ctx.origin, rho, grid, &quad, &ctx.slice) {
            Ok(tr) => {
                for r in &tr.reports {
                    masses.push(&[r.t, r.rho, r.area_radius, r.mass], OK);
                }
                match tr.fit {
                    Some(f) => fits.push(&[rho, f.m_inf, f.c, f.rms, f.points as f64], OK),
                    None => fits.push_failure(&[rho], "fit needs at least two t values"),
                }
            }
            Err(e) => {
                for &t in grid {
                    masses.push_failure(&[t, rho], &e.to_string());
                }
                fits.push_failure(&[rho], &e.to_string());
            }
        }
    }
    Ok(vec![
        Output::plotted(masses, PlotSpec { x: "t", y: "mass", series: Some("rho"), log_y: false }),
        Output::plain(fits),
    ])
}

/// `sup|φ|(t_a)/sup|φ|(t_b)` and the log-slope window reported by `kg`.
pub const KG_RATIO_TIMES: (f64, f64) = (40.0, 80.0);
pub const KG_SLOPE_WINDOW: (f64, f64) = (20.0, 80.0);

fn kg_error(e: KgError) -> RunError {
    match e {
        KgError::CflViolation(_) | KgError::InvalidConfig(_) => {
            RunError::Config(ConfigError::Invariant { invariant: "kg_config", detail: e.to_string() })
        }
        other => RunError::Numerical(other.to_string()),
    }
}

fn kg(ctx: &Context) -> Result<Vec<Output>, RunError> {
    let k = &ctx.cfg.kg;
    let cfg = k.kg_config();
    let steps = (cfg.t_max / k.output_dt + 1e-9).floor() as usize;
    let times: Vec<f64> = (0..=steps).map(|i| (i as f64 * k.output_dt).min(cfg.t_max)).collect();
    let run = evolve_kg_sampling(&cfg, &times, &k.hyperboloid_rhos).map_err(kg_error)?;
    let rep = decay_report(&run, KG_RATIO_TIMES, KG_SLOPE_WINDOW);
    let mut decay = Table::new("kg_decay", &["t", "sup_phi", "t32_sup_phi", "energy"]);
    for r in &rep.rows {
        decay.push(&[r.t, r.sup_phi, r.t32_sup_phi, r.energy], OK);
    }
    let mut hyp = Table::new("kg_hyperboloids", &["rho", "e_b", "e_b_over_e0", "lower_bound_check", "min_q", "nodes"]);
    for h in &run.hyperboloids {
        hyp.push(&[h.rho, h.e_b, h.e_b / run.energy0, h.lower_bound_check, h.min_q, h.nodes as f64], OK);
    }
    let mut summary = Table::new("kg_summary", &["quantity", "value"]);
    let quantities = [
        ("energy0", Some(run.energy0)),
        ("energy_drift", Some(run.energy_drift())),
        ("sup_ratio_40_80", rep.ratio),
        ("log_slope_20_80", rep.log_slope),
        ("plateau_ratio", rep.plateau_ratio),
    ];
    // windows that t_max does not reach are left out
    for (name, v) in quantities {
        if let Some(v) = v {
            summary.push_cells(vec![name.into(), fmt(v)], OK);
        }
    }
    let mut outputs = vec![
        Output::plotted(decay, PlotSpec { x: "t", y: "t32_sup_phi", series: None, log_y: false }),
        Output::plain(hyp),
        Output::plain(summary),
    ];
    if !k.commutation_times.is_empty() {
        let mut comm = Table::new("kg_commutation", &["field", "t", "abs", "rel"]);
        for (name, field) in [("scaling", CommutingField::Scaling), ("boost", CommutingField::Boost)] {
            let rows = commutation_residual(&cfg, field, &k.commutation_times).map_err(kg_error)?;
            for r in rows {
                comm.push_cells(vec![name.into(), fmt(r.t), fmt(r.abs), fmt(r.rel)], OK);
            }
        }
        outputs.push(Output::plain(comm));
    }
    Ok(outputs)
}

/// Time over which the reversal residual is measured.
pub const REVERSAL_TIME: f64 = 2.0;

fn residuals(ctx: &Context) -> Result<Vec<Output>, RunError> {
    ctx.cfg.validate_origin()?;
    let (_, fol) = fan_tables(ctx, false);
    let mut weyl = weyl_check(ctx);
    let mut kg_rev = Table::new("kg_reversal", &["t_back", "rel_error"]);
    let cfg = ctx.cfg.kg.kg_config();
    let t_back = REVERSAL_TIME.min(cfg.t_max);
    let e = time_reversal_error(&cfg, t_back).map_err(kg_error)?;
    kg_rev.push(&[t_back, e], OK);
    let mut out = vec![Output::plain(fol.expect("residuals requested")), Output::plain(zs_residual_table(ctx))];
    out.append(&mut weyl);
    out.push(Output::plain(kg_rev));
    Ok(out)
}
