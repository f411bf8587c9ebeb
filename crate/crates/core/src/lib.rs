//! Lattice potential theory for non-reversible divergence-form diffusions on a
//! flat torus: generators, invariant densities, dual generators, Green
//! functions, exit times, capacities, equilibrium measures, and empirical
//! checks of the Green/exit-time/capacity conditions.

pub mod coeffs;
pub mod conditions;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod montecarlo;
pub mod operator;
pub mod potential;

pub use coeffs::{builtin_field, ellipticity_check, CoefficientField, FieldSpec};
pub use error::{Error, Result};
pub use grid::{complement_mask, make_ball_mask, torus_distance, BallSpec, Point, RegionMask, Shape, TorusGrid};
pub use linalg::{solve, SolveReport, SolverOptions, SparseMatrix};
pub use operator::{
    assemble_generator, dual_generator, fit_boundaries, invariant_density, killed_submatrix, DualConstruction,
    Generator, InvariantDensity, KilledGenerator, Role, Scheme, StationaryOptions,
};
pub use potential::{
    capacity, equilibrium_measure, exit_time, green_column, harmonic_extension, BoundaryMode, CapacityResult,
    EquilibriumMeasure, ExitTimeField, GreenColumn, HarmonicExtension, IdentityReport,
};
pub use conditions::{
    check_c, check_e, check_g, check_harnack, check_sandwich, equivalence_suite, BallFamily, CheckOptions,
    ConditionReport, EquivalenceReport, SuiteOptions,
};
pub use montecarlo::{simulate_exit_time, simulate_hitting_probability, McEstimate, SdeConfig};
