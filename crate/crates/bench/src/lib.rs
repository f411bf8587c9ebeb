//! Fixtures shared by the benchmarks.

use potlab_core::{
    assemble_generator, make_ball_mask, BallSpec, CoefficientField, FieldSpec, Generator, KilledGenerator, Scheme,
    TorusGrid,
};

pub struct Fixture {
    pub grid: TorusGrid,
    pub field: CoefficientField,
    pub generator: Generator,
}

/// Upwind generator of `spec` on the unit torus with `n` cells per side.
pub fn fixture(spec: FieldSpec, n: usize) -> Fixture {
    let grid = TorusGrid::new(3, n, 1.0).expect("valid grid");
    let field = CoefficientField::new(spec, &grid).expect("valid field");
    let generator = assemble_generator(&field, &grid, Scheme::Upwind).expect("assembles");
    Fixture { grid, field, generator }
}

/// Generator killed outside the centered ball of radius `r`.
pub fn killed_ball(f: &Fixture, r: f64) -> KilledGenerator {
    let ball = BallSpec::new(&[0.5; 3], r).snapped(&f.grid);
    let mask = make_ball_mask(&f.grid, &ball).expect("resolved ball");
    potlab_core::killed_submatrix(&f.generator, &mask).expect("non-degenerate domain")
}
