//! Run configuration: a TOML file with one section per concern. Every field
//! has a default, so an empty file is a valid laplace run on a 16³ grid.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use potlab_core::linalg::KrylovMethod;
use potlab_core::{
    complement_mask, make_ball_mask, BallFamily, BallSpec, BoundaryMode, CheckOptions, CoefficientField, DualConstruction, FieldSpec, Scheme,
    RegionMask, SdeConfig, SolverOptions, StationaryOptions, SuiteOptions, TorusGrid,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable that overrides the output directory.
pub const OUTPUT_ENV: &str = "POTLAB_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub field: FieldConfig,
    pub scheme: SchemeConfig,
    pub solver: SolverConfig,
    pub balls: BallsConfig,
    pub domain: DomainConfig,
    pub condenser: CondenserConfig,
    pub verify: VerifyConfig,
    pub mc: McConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            grid: GridConfig::default(),
            field: FieldConfig::default(),
            scheme: SchemeConfig::default(),
            solver: SolverConfig::default(),
            balls: BallsConfig::default(),
            domain: DomainConfig::default(),
            condenser: CondenserConfig::default(),
            verify: VerifyConfig::default(),
            mc: McConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub cells: usize,
    pub side: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { dim: 3, cells: 16, side: 1.0 }
    }
}

/// Scalar or list parameter of a coefficient family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub family: String,
    #[serde(flatten)]
    pub params: BTreeMap<String, Param>,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self { family: "laplace".into(), params: BTreeMap::new() }
    }
}

impl FieldConfig {
    pub fn spec(&self) -> Result<FieldSpec, CliError> {
        let params = self
            .params
            .iter()
            .map(|(k, v)| {
                let v = match v {
                    Param::Scalar(x) => vec![*x],
                    Param::List(xs) => xs.clone(),
                };
                (k.clone(), v)
            })
            .collect();
        FieldSpec::from_parts(&self.family, &params).map_err(|e| CliError::Usage(e.to_string()))
    }

    /// Same family with every parameter spelled out.
    fn resolved(&self) -> Result<Self, CliError> {
        let spec = self.spec()?;
        let mut params = BTreeMap::new();
        match &spec {
            FieldSpec::Laplace => {}
            FieldSpec::AnisoDiag { diag } => {
                params.insert("diag".into(), Param::List(diag.clone()));
            }
            FieldSpec::SmoothVar { eps } => {
                params.insert("eps".into(), Param::Scalar(*eps));
            }
            FieldSpec::RotationDrift { strength } | FieldSpec::ShearDrift { strength } => {
                params.insert("strength".into(), Param::Scalar(*strength));
            }
            FieldSpec::GradientDrift { amplitude } => {
                params.insert("amplitude".into(), Param::Scalar(*amplitude));
            }
        }
        Ok(Self { family: spec.name().into(), params })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub discretization: Scheme,
    pub boundary: BoundaryMode,
    pub dual: DualConstruction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: KrylovMethod,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub restart: usize,
    pub stationary_tolerance: f64,
    pub stationary_max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverOptions::default();
        let st = StationaryOptions::default();
        Self {
            method: s.method,
            tolerance: s.tolerance,
            max_iterations: s.max_iterations,
            restart: s.restart,
            stationary_tolerance: st.tolerance,
            stationary_max_iterations: st.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BallsConfig {
    /// Radii as fractions of the side length.
    pub radii: Vec<f64>,
    /// Centers as fractions of the side length.
    pub centers: Vec<Vec<f64>>,
    pub k: f64,
    /// Shrink factor for exit-time and Harnack checks; `1 / k` when absent.
    pub delta: Option<f64>,
    pub exclusion_cells: f64,
    pub harnack_trials: usize,
    pub refinement_limit: f64,
}

impl Default for BallsConfig {
    fn default() -> Self {
        let family = BallFamily::standard(3);
        Self {
            radii: family.radii,
            centers: family.centers,
            k: 2.0,
            delta: None,
            exclusion_cells: 2.0,
            harnack_trials: 100,
            refinement_limit: 1.4,
        }
    }
}

/// Ball used by `exit-time`, `green`, `verify` and `mc`, in absolute units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self { center: vec![0.5; 3], radius: 0.25 }
    }
}

/// Concentric spheres for `capacity`, `verify` and `mc`, in absolute units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CondenserConfig {
    pub center: Vec<f64>,
    pub inner: f64,
    pub outer: f64,
}

impl Default for CondenserConfig {
    fn default() -> Self {
        Self { center: vec![0.5; 3], inner: 0.15, outer: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Random Dirichlet problems for the maximum principle.
    pub trials: usize,
    /// Rows checked in the Green-row / exit-time identity.
    pub rows: usize,
    /// Source cells checked for duality.
    pub sources: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { trials: 100, rows: 200, sources: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub trajectories: usize,
    /// `h^2 / 10` when absent.
    pub dt: Option<f64>,
    pub max_steps: u64,
    pub bridge_correction: bool,
    /// Acceptance band in standard errors.
    pub z_limit: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        let s = SdeConfig::default();
        Self {
            trajectories: s.trajectories,
            dt: None,
            max_steps: s.max_steps,
            bridge_correction: s.bridge_correction,
            z_limit: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Write CSV field dumps and gnuplot slices next to the JSON report.
    pub fields: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("potlab-out"), fields: true }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Fills derived defaults and checks every precondition the modules will
    /// rely on, so bad input surfaces as a usage error.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        let grid = self.grid()?;
        self.field = self.field.resolved()?;
        CoefficientField::new(self.field.spec()?, &grid).map_err(|e| CliError::Usage(e.to_string()))?;
        let d = self.grid.dim;
        if !(self.balls.k > 1.0) {
            return usage(format!("balls.k must exceed 1, got {}", self.balls.k));
        }
        let delta = self.balls.delta.unwrap_or(1.0 / self.balls.k);
        if !(delta > 0.0 && delta < 1.0) {
            return usage(format!("balls.delta must lie in (0, 1), got {delta}"));
        }
        self.balls.delta = Some(delta);
        if self.balls.radii.is_empty() || self.balls.centers.is_empty() {
            return usage("balls.radii and balls.centers must be non-empty".into());
        }
        if self.balls.radii.iter().any(|&r| !(r > 0.0 && r < 0.5)) {
            return usage("balls.radii are fractions of the side in (0, 1/2)".into());
        }
        if self.balls.centers.iter().any(|c| c.len() != d) {
            return usage(format!("balls.centers need {d} coordinates"));
        }
        if !(self.balls.refinement_limit >= 1.0) {
            return usage("balls.refinement_limit must be at least 1".into());
        }
        for (name, center) in [("domain", &self.domain.center), ("condenser", &self.condenser.center)] {
            if center.len() != d {
                return usage(format!("{name}.center needs {d} coordinates"));
            }
        }
        let c = &self.condenser;
        if !(c.inner > 0.0 && c.inner < c.outer) {
            return usage("condenser needs 0 < inner < outer".into());
        }
        for (name, center, radius) in [("domain", &self.domain.center, self.domain.radius), ("condenser", &c.center, c.outer)] {
            BallSpec::new(center, radius).validate(&grid).map_err(|e| CliError::Usage(format!("{name}: {e}")))?;
        }
        if !(self.solver.tolerance > 0.0) || self.solver.max_iterations == 0 || self.solver.restart == 0 {
            return usage("solver tolerance, iteration limit and restart must be positive".into());
        }
        if !(self.solver.stationary_tolerance > 0.0) {
            return usage("solver.stationary_tolerance must be positive".into());
        }
        let h = grid.spacing();
        let dt = self.mc.dt.unwrap_or(h * h / 10.0);
        if !(dt > 0.0) || self.mc.trajectories == 0 || self.mc.max_steps == 0 || !(self.mc.z_limit > 0.0) {
            return usage("mc needs positive dt, trajectories, max_steps and z_limit".into());
        }
        self.mc.dt = Some(dt);
        if self.verify.trials == 0 || self.verify.rows == 0 || self.verify.sources == 0 {
            return usage("verify counts must be positive".into());
        }
        Ok(self)
    }

    pub fn grid(&self) -> Result<TorusGrid, CliError> {
        TorusGrid::new(self.grid.dim, self.grid.cells, self.grid.side).map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn field(&self, grid: &TorusGrid) -> Result<CoefficientField, CliError> {
        Ok(CoefficientField::new(self.field.spec()?, grid)?)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.solver.tolerance,
            max_iterations: self.solver.max_iterations,
            restart: self.solver.restart,
            method: self.solver.method,
        }
    }

    pub fn stationary_options(&self) -> StationaryOptions {
        StationaryOptions {
            tolerance: self.solver.stationary_tolerance,
            max_iterations: self.solver.stationary_max_iterations,
            solver: self.solver_options(),
            ..StationaryOptions::default()
        }
    }

    pub fn check_options(&self) -> CheckOptions {
        CheckOptions {
            solver: self.solver_options(),
            boundary: self.scheme.boundary,
            exclusion_cells: self.balls.exclusion_cells,
            seed: self.seed,
            harnack_trials: self.balls.harnack_trials,
        }
    }

    pub fn suite_options(&self) -> SuiteOptions {
        SuiteOptions {
            check: self.check_options(),
            stationary: self.stationary_options(),
            refinement_limit: self.balls.refinement_limit,
        }
    }

    /// The `[domain]` ball and its mask; too coarse a grid is a usage error.
    pub fn domain(&self, grid: &TorusGrid) -> Result<(BallSpec, RegionMask), CliError> {
        let ball = BallSpec::new(&self.domain.center, self.domain.radius);
        let mask = make_ball_mask(grid, &ball).map_err(|e| CliError::Usage(format!("domain: {e}")))?;
        Ok((ball, mask))
    }

    /// Inner and outer `[condenser]` spheres, the inner ball's mask and the
    /// mask of the outer sphere's exterior.
    pub fn condenser(&self, grid: &TorusGrid) -> Result<(BallSpec, BallSpec, RegionMask, RegionMask), CliError> {
        let c = &self.condenser;
        let inner = BallSpec::new(&c.center, c.inner);
        let outer = BallSpec::new(&c.center, c.outer);
        let usage = |e: potlab_core::Error| CliError::Usage(format!("condenser: {e}"));
        let a = make_ball_mask(grid, &inner).map_err(usage)?;
        let b = complement_mask(&make_ball_mask(grid, &outer).map_err(usage)?);
        Ok((inner, outer, a, b))
    }

    pub fn family(&self) -> BallFamily {
        BallFamily { radii: self.balls.radii.clone(), centers: self.balls.centers.clone() }
    }

    pub fn delta(&self) -> f64 {
        self.balls.delta.unwrap_or(1.0 / self.balls.k)
    }

    pub fn sde_config(&self, grid: &TorusGrid) -> SdeConfig {
        let h = grid.spacing();
        SdeConfig {
            dt: self.mc.dt.unwrap_or(h * h / 10.0),
            max_steps: self.mc.max_steps,
            trajectories: self.mc.trajectories,
            seed: self.seed,
            bridge_correction: self.mc.bridge_correction,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let text = r#"
seed = 7
[grid]
cells = 24
[field]
family = "aniso-diag"
diag = [2.0, 1.0, 0.5]
[balls]
radii = [0.2]
centers = [[0.5, 0.5, 0.5]]
delta = 0.4
[mc]
dt = 1e-5
"#;
        let cfg = RunConfig::from_toml(text).unwrap().resolve().unwrap();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let resolved = RunConfig::default().resolve().unwrap();
        assert_eq!(RunConfig::from_toml(&resolved.to_toml()).unwrap(), resolved);
    }

    #[test]
    fn typos_are_usage_errors() {
        assert!(matches!(RunConfig::from_toml("[grid]\ncels = 3"), Err(CliError::Usage(_))));
        let cfg = RunConfig::from_toml("[field]\nfamily = \"rotation\"").unwrap();
        assert!(matches!(cfg.resolve(), Err(CliError::Usage(_))));
        let cfg = RunConfig::from_toml("[field]\nfamily = \"shear-drift\"\nstrenght = 1.0").unwrap();
        assert!(matches!(cfg.resolve(), Err(CliError::Usage(_))));
    }

    #[test]
    fn resolution_fills_defaults() {
        let cfg = RunConfig::from_toml("[field]\nfamily = \"rotation-drift\"").unwrap().resolve().unwrap();
        assert_eq!(cfg.balls.delta, Some(0.5));
        assert_eq!(cfg.field.params.get("strength"), Some(&Param::Scalar(2.0)));
        assert_eq!(cfg.mc.dt, Some(1.0 / 2560.0));
    }

    #[test]
    fn unresolved_regions_are_usage_errors() {
        let cfg = RunConfig::from_toml("[condenser]\ninner = 0.05").unwrap().resolve().unwrap();
        let grid = cfg.grid().unwrap();
        assert!(matches!(cfg.condenser(&grid), Err(CliError::Usage(_))));
        assert!(cfg.domain(&grid).is_ok());
    }

    #[test]
    fn bad_preconditions_are_rejected() {
        for text in ["[balls]\nk = 1.0", "[condenser]\ninner = 0.3\nouter = 0.2", "[grid]\ncells = 1", "[domain]\nradius = 0.6"] {
            let cfg = RunConfig::from_toml(text).unwrap();
            assert!(cfg.resolve().is_err(), "{text}");
        }
    }
}
