//! Hawking mass of the spheres `S_{t,ρ}` and its large-`t` limit along a
//! hyperboloid.

use crate::foliation::{leaf_slice, null_forms_of, FoliationError, LeafSlice, SliceOptions};
use crate::metric::{Coordinates4, MetricModel};
use crate::quadrature::SphereQuadrature;
use rayon::prelude::*;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MassError {
    #[error("slice at t = {t}, ρ = {rho} has no null forms")]
    MissingNullForms { t: f64, rho: f64 },
    #[error("slice at t = {t}, ρ = {rho} has zero area")]
    Degenerate { t: f64, rho: f64 },
    #[error("fit needs at least two points, got {0}")]
    TooFewPoints(usize),
    #[error(transparent)]
    Foliation(#[from] FoliationError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassReport {
    pub t: f64,
    pub rho: f64,
    pub area: f64,
    /// `r̲ = sqrt(|S|/4π)`.
    pub area_radius: f64,
    pub mass: f64,
    pub integrand_min: f64,
    pub integrand_max: f64,
    /// Node-wise sign structure `trχ > 0 > trχ̲`.
    pub signs_ok: bool,
}

/// `m = (r̲/2)(1 + (1/16π)∮ trχ trχ̲ dμ_γ)` by the slice quadrature.
pub fn hawking_mass(slice: &LeafSlice) -> Result<MassReport, MassError> {
    let (t, rho) = (slice.t, slice.rho);
    if !(slice.area > 0.0) {
        return Err(MassError::Degenerate { t, rho });
    }
    let mut integral = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut signs_ok = true;
    for n in &slice.nodes {
        let nf = n.null.as_ref().ok_or(MassError::MissingNullForms { t, rho })?;
        let p = nf.trchi * nf.trchib;
        lo = lo.min(p);
        hi = hi.max(p);
        signs_ok &= nf.trchi > 0.0 && nf.trchib < 0.0;
        integral += n.weight * n.area_density * p;
    }
    let rb = (slice.area / (4.0 * PI)).sqrt();
    Ok(MassReport {
        t,
        rho,
        area: slice.area,
        area_radius: rb,
        mass: 0.5 * rb * (1.0 + integral / (16.0 * PI)),
        integrand_min: lo,
        integrand_max: hi,
        signs_ok,
    })
}

/// Build `S_{t,ρ}`, attach its null forms and evaluate the Hawking mass.
pub fn mass_at(
    model: &MetricModel,
    origin: &Coordinates4,
    t: f64,
    rho: f64,
    quad: &SphereQuadrature,
    opts: &SliceOptions,
) -> Result<MassReport, MassError> {
    let mut slice = leaf_slice(model, origin, t, rho, quad, opts)?;
    for n in &mut slice.nodes {
        n.null = Some(null_forms_of(&n.k, &n.scalars));
    }
    hawking_mass(&slice)
}

/// Least-squares fit `m(t) = m_∞ + c/t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BondiFit {
    pub m_inf: f64,
    pub c: f64,
    /// Root-mean-square residual of the fit.
    pub rms: f64,
    pub points: usize,
}

pub fn fit_inverse_t(pts: &[(f64, f64)]) -> Result<BondiFit, MassError> {
    if pts.len() < 2 {
        return Err(MassError::TooFewPoints(pts.len()));
    }
    let k = pts.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(t, m) in pts {
        let x = 1.0 / t;
        sx += x;
        sy += m;
        sxx += x * x;
        sxy += x * m;
    }
    let c = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    let m_inf = (sy - c * sx) / k;
    let rms = (pts.iter().map(|&(t, m)| (m - m_inf - c / t).powi(2)).sum::<f64>() / k).sqrt();
    Ok(BondiFit { m_inf, c, rms, points: pts.len() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BondiTrace {
    pub rho: f64,
    pub reports: Vec<MassReport>,
    /// Fit over the last half of the `t` grid, widened to two points when
    /// the grid is short; `None` for a single-point grid.
    pub fit: Option<BondiFit>,
}

impl BondiTrace {
    /// Whether `|m(t) − target|` strictly decreases along the grid.
    pub fn strictly_approaches(&self, target: f64) -> bool {
        self.reports.windows(2).all(|w| (w[1].mass - target).abs() < (w[0].mass - target).abs())
    }
}

/// Hawking masses on `S_{t,ρ}` for every `t` in `t_grid` (in parallel) and the
/// `m_∞ + c/t` fit over the last half.
pub fn bondi_trace(
    model: &MetricModel,
    origin: &Coordinates4,
    rho: f64,
    t_grid: &[f64],
    quad: &SphereQuadrature,
    opts: &SliceOptions,
) -> Result<BondiTrace, MassError> {
    let reports = t_grid
        .par_iter()
        .map(|&t| mass_at(model, origin, t, rho, quad, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let from = (reports.len() / 2).min(reports.len().saturating_sub(2));
    let pts: Vec<(f64, f64)> = reports[from..].iter().map(|r| (r.t, r.mass)).collect();
    let fit = fit_inverse_t(&pts).ok();
    Ok(BondiTrace { rho, reports, fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_exact_model() {
        let pts: Vec<(f64, f64)> = [10.0, 20.0, 40.0].iter().map(|&t| (t, 0.02 + 0.3 / t)).collect();
        let f = fit_inverse_t(&pts).unwrap();
        assert!((f.m_inf - 0.02).abs() < 1e-14 && (f.c - 0.3).abs() < 1e-12 && f.rms < 1e-14);
        assert!(fit_inverse_t(&pts[..1]).is_err());
    }

    #[test]
    fn minkowski_mass_vanishes() {
        let q = SphereQuadrature::product(4, 8, [0.0, 0.0, 1.0]);
        let r = mass_at(&MetricModel::minkowski(), &Coordinates4::new(0.0, 0.0, 0.0, 0.0), 8.0, 5.0, &q, &SliceOptions::default())
            .unwrap();
        assert!(r.mass.abs() < 1e-10, "{r:?}");
        assert!(r.signs_ok);
    }
}
