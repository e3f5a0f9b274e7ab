//! Run configuration: a TOML file with one table per concern.

use hyperlab::geodesic::{TraceOptions, DEFAULT_ZETA_MAX};
use hyperlab::kgflat::{GaussianData, KgConfig};
use hyperlab::metric::{Coordinates4, MetricModel};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    /// The named invariant does not hold.
    #[error("invalid config: invariant `{invariant}` violated: {detail}")]
    Invariant { invariant: &'static str, detail: String },
}

fn invariant(invariant: &'static str, detail: impl Into<String>) -> ConfigError {
    ConfigError::Invariant { invariant, detail: detail.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKindName {
    Minkowski,
    Schwarzschild,
    Glued,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSection {
    pub kind: MetricKindName,
    pub mass: f64,
    pub r_in: f64,
    pub r_out: f64,
}

impl Default for MetricSection {
    fn default() -> Self {
        Self { kind: MetricKindName::Glued, mass: 0.01, r_in: 1.0, r_out: 2.0 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OriginSection {
    pub t: f64,
    pub offset: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoliationSection {
    pub rho_min: f64,
    pub rho_max: f64,
    pub rho_samples: usize,
    pub zeta_max: f64,
    pub zeta_samples: usize,
    pub theta_nodes: usize,
    pub phi_nodes: usize,
}

impl Default for FoliationSection {
    fn default() -> Self {
        Self { rho_min: 1.0, rho_max: 20.0, rho_samples: 20, zeta_max: 2.0, zeta_samples: 4, theta_nodes: 4, phi_nodes: 8 }
    }
}

impl FoliationSection {
    pub fn rho_grid(&self) -> Vec<f64> {
        linspace(self.rho_min, self.rho_max, self.rho_samples)
    }

    /// Rapidities `ζ_max·k/n`, `k = 1..n`; the central line `ζ = 0` is excluded.
    pub fn zetas(&self) -> Vec<f64> {
        (1..=self.zeta_samples).map(|k| self.zeta_max * k as f64 / self.zeta_samples as f64).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_tol: 1e-10, max_step: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KgSection {
    pub r_max: f64,
    pub dr: f64,
    pub t_max: f64,
    pub cfl: f64,
    pub amplitude: f64,
    pub width: f64,
    pub center: f64,
    pub mass: f64,
    /// Spacing of the decay table.
    pub output_dt: f64,
    pub hyperboloid_rhos: Vec<f64>,
    /// Times for the commutation residual; empty skips it.
    pub commutation_times: Vec<f64>,
}

impl Default for KgSection {
    fn default() -> Self {
        let k = KgConfig::default();
        Self {
            r_max: k.r_max,
            dr: k.dr,
            t_max: k.t_max,
            cfl: k.cfl,
            amplitude: k.data.amplitude,
            width: k.data.width,
            center: k.data.center,
            mass: k.mass,
            output_dt: 1.0,
            hyperboloid_rhos: vec![1.0, 2.0, 4.0],
            commutation_times: vec![],
        }
    }
}

impl KgSection {
    pub fn kg_config(&self) -> KgConfig {
        KgConfig {
            r_max: self.r_max,
            dr: self.dr,
            t_max: self.t_max,
            cfl: self.cfl,
            data: GaussianData { amplitude: self.amplitude, width: self.width, center: self.center },
            mass: self.mass,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MassSection {
    pub rhos: Vec<f64>,
    pub t_grid: Vec<f64>,
}

impl Default for MassSection {
    fn default() -> Self {
        Self { rhos: vec![10.0], t_grid: vec![20.0, 40.0, 80.0, 160.0] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZsSection {
    /// Rapidity of the comparison geodesic.
    pub zeta: f64,
    /// Its direction at the origin; defaults to the outward radial one.
    pub omega: Option<[f64; 3]>,
    pub cone_rho: f64,
    pub cone_uhat: Vec<f64>,
}

impl Default for ZsSection {
    fn default() -> Self {
        Self { zeta: 2.0, omega: None, cone_rho: 10.0, cone_uhat: vec![3.0] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeylSection {
    pub radii: Vec<f64>,
}

impl Default for WeylSection {
    fn default() -> Self {
        Self { radii: vec![3.0, 5.0, 10.0] }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub plot: bool,
    pub golden: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub metric: MetricSection,
    pub origin: OriginSection,
    pub foliation: FoliationSection,
    pub integrator: IntegratorSection,
    pub kg: KgSection,
    pub mass: MassSection,
    pub zs: ZsSection,
    pub weyl: WeylSection,
    pub output: OutputSection,
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.metric;
        let f = &self.foliation;
        let nums = [
            m.mass, m.r_in, m.r_out, self.origin.t, f.rho_min, f.rho_max, f.zeta_max,
            self.integrator.rel_tol, self.integrator.abs_tol, self.kg.dr, self.kg.t_max, self.kg.output_dt,
        ];
        let lists = [&self.mass.rhos, &self.mass.t_grid, &self.zs.cone_uhat, &self.weyl.radii, &self.kg.hyperboloid_rhos];
        if nums.iter().chain(self.origin.offset.iter()).chain(lists.iter().flat_map(|l| l.iter())).any(|v| !v.is_finite()) {
            return Err(invariant("finite_numbers", "every numeric field must be finite"));
        }
        if !(m.mass >= 0.0) {
            return Err(invariant("mass_nonnegative", format!("mass = {}", m.mass)));
        }
        let off = self.origin.offset.iter().map(|v| v * v).sum::<f64>().sqrt();
        if m.kind == MetricKindName::Glued {
            if !(off + 0.1 < m.r_in) {
                return Err(invariant("offset_inside_flat_core", format!("|offset| + 0.1 = {} must be < r_in = {}", off + 0.1, m.r_in)));
            }
            if !(2.0 * m.mass < m.r_in && m.r_in < m.r_out) {
                return Err(invariant("gluing_radii", format!("need 2M < r_in < r_out, got {}, {}, {}", 2.0 * m.mass, m.r_in, m.r_out)));
            }
        }
        if !(f.rho_min > 0.0 && f.rho_max >= f.rho_min && f.rho_samples >= 1) {
            return Err(invariant("rho_grid", "need 0 < rho_min ≤ rho_max and rho_samples ≥ 1"));
        }
        if !(f.zeta_max > 0.0 && f.zeta_max <= DEFAULT_ZETA_MAX && f.zeta_samples >= 1 && f.theta_nodes >= 1 && f.phi_nodes >= 1) {
            return Err(invariant("fan_shape", format!("need 0 < zeta_max ≤ {DEFAULT_ZETA_MAX} and positive sample counts")));
        }
        if !(self.integrator.rel_tol > 0.0 && self.integrator.abs_tol > 0.0 && self.integrator.max_step > 0.0) {
            return Err(invariant("integrator_tolerances", "tolerances and max_step must be positive"));
        }
        if !(self.kg.output_dt > 0.0) {
            return Err(invariant("kg_output_dt", "output_dt must be positive"));
        }
        self.kg.kg_config().validate().map_err(|e| invariant("kg_config", e.to_string()))?;
        if self.mass.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invariant("mass_t_grid_increasing", "t_grid must be strictly increasing"));
        }
        Ok(())
    }

    /// Experiments that trace geodesics from the origin need it outside the
    /// Schwarzschild horizon; the glued core already guarantees this.
    pub fn validate_origin(&self) -> Result<(), ConfigError> {
        let m = &self.metric;
        let off = self.origin.offset.iter().map(|v| v * v).sum::<f64>().sqrt();
        if m.kind == MetricKindName::Schwarzschild && !(off > 2.0 * m.mass + 0.1) {
            return Err(invariant("origin_outside_horizon", format!("|offset| = {off} must exceed 2M + 0.1")));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<MetricModel, ConfigError> {
        let m = &self.metric;
        match m.kind {
            MetricKindName::Minkowski => Ok(MetricModel::minkowski()),
            MetricKindName::Schwarzschild => MetricModel::schwarzschild(m.mass),
            MetricKindName::Glued => MetricModel::glued(m.mass, m.r_in, m.r_out),
        }
        .map_err(|e| invariant("metric_model", e.to_string()))
    }

    pub fn origin(&self) -> Coordinates4 {
        let o = self.origin.offset;
        Coordinates4::new(self.origin.t, o[0], o[1], o[2])
    }

    pub fn trace_options(&self) -> TraceOptions {
        let mut t = TraceOptions::default();
        t.ode.rel_tol = self.integrator.rel_tol;
        t.ode.abs_tol = self.integrator.abs_tol;
        t.ode.max_step = self.integrator.max_step;
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.metric.kind, MetricKindName::Glued);
        assert_eq!(c.foliation.zetas().len(), 4);
    }

    #[test]
    fn offset_outside_core_names_invariant() {
        let e = RunConfig::parse("[origin]\noffset = [1.5, 0.0, 0.0]\n").unwrap_err();
        assert!(e.to_string().contains("offset_inside_flat_core"), "{e}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::parse("[metric]\nmas = 1.0\n"), Err(ConfigError::Parse(_))));
    }
}
