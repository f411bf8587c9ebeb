//! Finite-volume Markov-generator discretization of `div(a grad) + b . grad`.
//!
//! Rows are cells. The diffusion term is a face-flux difference with `a`
//! taken at face midpoints; the drift is evaluated at face midpoints as well
//! and differenced either upwind (a genuine CTMC generator) or centrally.
//! With face-centered drift the column sums of the upwind matrix are the
//! negative discrete divergence of `b`, so divergence-free closed forms keep
//! the uniform density exactly stationary.

use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientField;
use crate::error::{Error, Result};
use crate::grid::{RegionMask, TorusGrid};
use crate::linalg::{self, SolverOptions, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    Upwind,
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DualConstruction {
    #[default]
    DiscreteAdjoint,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Primal,
    Dual(DualConstruction),
}

/// Sparse generator on the full torus.
#[derive(Debug, Clone)]
pub struct Generator {
    grid: TorusGrid,
    matrix: SparseMatrix,
    scheme: Scheme,
    role: Role,
    field: Option<CoefficientField>,
    /// `a_kk` at the `+k` face of each cell, indexed `cell * d + k`.
    face_diffusion: Vec<f64>,
    fitted: bool,
}

impl Generator {
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn field(&self) -> Option<&CoefficientField> {
        self.field.as_ref()
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    pub fn face_diffusion(&self, cell: usize, axis: usize) -> f64 {
        self.face_diffusion[cell * self.grid.dim() + axis]
    }

    pub fn provenance(&self) -> String {
        let field = self.field.as_ref().map_or_else(|| "unknown".to_string(), |f| f.describe());
        let role = match self.role {
            Role::Primal => "primal".to_string(),
            Role::Dual(DualConstruction::DiscreteAdjoint) => "dual(discrete-adjoint)".to_string(),
            Role::Dual(DualConstruction::Analytic) => "dual(analytic)".to_string(),
        };
        let scheme = match self.scheme {
            Scheme::Upwind => "upwind",
            Scheme::Central => "central",
        };
        let fitted = if self.fitted { ", fitted" } else { "" };
        format!("{field} {role} {scheme}{fitted}")
    }

    /// `max_i |M_ii|`, the natural scale for residuals.
    pub fn diagonal_scale(&self) -> f64 {
        self.matrix.diagonal().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(u)
    }

    pub fn to_matrix_market(&self) -> String {
        self.matrix.to_matrix_market()
    }
}

/// Assemble the generator from face values of `a_kk` and `b_k`
/// (both indexed `cell * d + k`, at the `+k` face).
pub fn assemble_from_faces(
    grid: &TorusGrid,
    face_diffusion: Vec<f64>,
    face_drift: &[f64],
    scheme: Scheme,
) -> Result<SparseMatrix> {
    let d = grid.dim();
    let n = grid.cell_count();
    if face_diffusion.len() != n * d || face_drift.len() != n * d {
        return Err(Error::DimensionMismatch { expected: n * d, found: face_drift.len() });
    }
    let h = grid.spacing();
    let inv_h2 = 1.0 / (h * h);
    let inv_h = 1.0 / h;
    let mut triplets = Vec::with_capacity(n * (2 * d + 1));
    for i in 0..n {
        let mut diag = 0.0;
        for k in 0..d {
            let fwd = grid.neighbor(i, k, true);
            let bwd = grid.neighbor(i, k, false);
            let (a_plus, b_plus) = (face_diffusion[i * d + k], face_drift[i * d + k]);
            let (a_minus, b_minus) = (face_diffusion[bwd * d + k], face_drift[bwd * d + k]);
            let (to_fwd, to_bwd) = match scheme {
                Scheme::Upwind => (
                    a_plus * inv_h2 + b_plus.max(0.0) * inv_h,
                    a_minus * inv_h2 + (-b_minus).max(0.0) * inv_h,
                ),
                Scheme::Central => (
                    a_plus * inv_h2 + 0.5 * b_plus * inv_h,
                    a_minus * inv_h2 - 0.5 * b_minus * inv_h,
                ),
            };
            triplets.push((i, fwd, to_fwd));
            triplets.push((i, bwd, to_bwd));
            diag -= to_fwd + to_bwd;
        }
        triplets.push((i, i, diag));
    }
    let mut m = SparseMatrix::from_triplets(n, n, &triplets)?;
    // exact zero row sums: recompute the diagonal from the stored off-diagonals
    for i in 0..n {
        let off: f64 = m.row(i).filter(|&(c, _)| c != i).map(|(_, v)| v).sum();
        *m.get_mut(i, i).expect("diagonal stored") = -off;
    }
    Ok(m)
}

fn face_samples(field: &CoefficientField, grid: &TorusGrid) -> (Vec<f64>, Vec<f64>) {
    let d = grid.dim();
    let n = grid.cell_count();
    let mut a = vec![0.0; n * d];
    let mut b = vec![0.0; n * d];
    for i in 0..n {
        for k in 0..d {
            let x = grid.face_midpoint(i, k);
            a[i * d + k] = field.diffusion_diag(&x, k);
            b[i * d + k] = field.drift_component(&x, k);
        }
    }
    (a, b)
}

pub fn assemble_generator(field: &CoefficientField, grid: &TorusGrid, scheme: Scheme) -> Result<Generator> {
    if field.dim() != grid.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), found: field.dim() });
    }
    if !field.is_diagonal() {
        return Err(Error::UnsupportedField("off-diagonal diffusion needs a wider stencil".into()));
    }
    let (a, b) = face_samples(field, grid);
    let matrix = assemble_from_faces(grid, a.clone(), &b, scheme)?;
    Ok(Generator {
        grid: grid.clone(),
        matrix,
        scheme,
        role: Role::Primal,
        field: Some(field.clone()),
        face_diffusion: a,
        fitted: false,
    })
}

/// Discrete stationary law of an upwind generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantDensity {
    probabilities: Vec<f64>,
    cell_volume: f64,
    /// `||M^T pi||_inf / (max |M_ii| * max pi)` at termination.
    pub residual: f64,
    pub iterations: usize,
}

impl InvariantDensity {
    /// Wrap given probabilities (normalized here).
    pub fn from_probabilities(mut probabilities: Vec<f64>, grid: &TorusGrid) -> Self {
        let total: f64 = probabilities.iter().sum();
        probabilities.iter_mut().for_each(|p| *p /= total);
        Self { probabilities, cell_volume: grid.cell_volume(), residual: f64::NAN, iterations: 0 }
    }

    pub fn uniform(grid: &TorusGrid) -> Self {
        Self::from_probabilities(vec![1.0; grid.cell_count()], grid)
    }

    /// Cell probabilities `pi`, summing to one.
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn probability(&self, cell: usize) -> f64 {
        self.probabilities[cell]
    }

    /// Continuum density `mu = pi / h^d`.
    pub fn density(&self, cell: usize) -> f64 {
        self.probabilities[cell] / self.cell_volume
    }

    pub fn densities(&self) -> Vec<f64> {
        self.probabilities.iter().map(|p| p / self.cell_volume).collect()
    }

    /// `mu(region) = sum of pi` over its cells.
    pub fn mass(&self, region: &RegionMask) -> f64 {
        region
            .members()
            .iter()
            .zip(&self.probabilities)
            .filter(|(m, _)| **m)
            .map(|(_, p)| p)
            .sum()
    }

    /// `max mu / min mu`.
    pub fn spread(&self) -> f64 {
        let (lo, hi) = self
            .probabilities
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &p| (lo.min(p), hi.max(p)));
        hi / lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryOptions {
    /// Target for `||M^T pi||_inf / (max |M_ii| * max pi)`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Magnitude of the negative shift, in units of `(2 pi / side)^2`.
    pub relative_shift: f64,
    pub solver: SolverOptions,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 200,
            relative_shift: 0.1,
            solver: SolverOptions::default(),
        }
    }
}

fn stationarity_residual(mt: &SparseMatrix, pi: &[f64], scale: f64) -> f64 {
    let r = mt.mul_vec(pi);
    let rmax = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let pmax = pi.iter().fold(0.0f64, |m, v| m.max(*v));
    rmax / (scale * pmax)
}

/// Solve `M^T pi = 0`, `sum pi = 1` by shifted inverse power iteration on `M^T`.
pub fn invariant_density(generator: &Generator, opts: &StationaryOptions) -> Result<InvariantDensity> {
    if generator.scheme() != Scheme::Upwind {
        return Err(Error::InvalidArgument("invariant density requires the upwind scheme".into()));
    }
    let grid = generator.grid();
    let n = grid.cell_count();
    let mt = generator.matrix().transpose();
    let scale = generator.diagonal_scale();
    let k = 2.0 * std::f64::consts::PI / grid.side();
    let shift = opts.relative_shift * k * k;
    let mut shifted = mt.clone();
    for i in 0..n {
        *shifted.get_mut(i, i).expect("diagonal stored") += shift;
    }
    let mut pi = vec![1.0 / n as f64; n];
    let mut residual = stationarity_residual(&mt, &pi, scale);
    let mut iterations = 0;
    while residual > opts.tolerance {
        if iterations >= opts.max_iterations {
            return Err(Error::StationaritySolveFailed { iterations, residual });
        }
        let (w, _) = linalg::solve(&shifted, &pi, &opts.solver).map_err(|e| match e {
            Error::SolverStagnated(rep) => Error::StationaritySolveFailed {
                iterations,
                residual: rep.relative_residual,
            },
            other => other,
        })?;
        let total: f64 = w.iter().sum();
        pi = w.into_iter().map(|v| v / total).collect();
        iterations += 1;
        residual = stationarity_residual(&mt, &pi, scale);
    }
    if let Some((cell, &value)) = pi.iter().enumerate().find(|(_, &p)| !(p > 0.0)) {
        return Err(Error::PositivityViolated { cell, value });
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    Ok(InvariantDensity { probabilities: pi, cell_volume: grid.cell_volume(), residual, iterations })
}

/// Dual generator with respect to `pi`.
///
/// `DiscreteAdjoint` gives `diag(pi)^-1 M^T diag(pi)`, for which every duality
/// relation holds to rounding. `Analytic` re-assembles the operator with drift
/// `(2 / mu) a grad mu - b`, `mu` taken from `pi` and differenced across faces.
pub fn dual_generator(generator: &Generator, pi: &InvariantDensity, mode: DualConstruction) -> Result<Generator> {
    let grid = generator.grid();
    let n = grid.cell_count();
    if pi.probabilities().len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: pi.probabilities().len() });
    }
    let matrix = match mode {
        DualConstruction::DiscreteAdjoint => {
            let p = pi.probabilities();
            let inv: Vec<f64> = p.iter().map(|v| 1.0 / v).collect();
            generator.matrix().transpose().scale(&inv, p)
        }
        DualConstruction::Analytic => {
            let field = generator
                .field()
                .ok_or_else(|| Error::InvalidArgument("analytic dual needs the coefficient field".into()))?;
            let d = grid.dim();
            let h = grid.spacing();
            let (a, b) = face_samples(field, grid);
            let mu = pi.densities();
            let mut dual_drift = vec![0.0; n * d];
            for i in 0..n {
                for k in 0..d {
                    let j = grid.neighbor(i, k, true);
                    let mu_face = 0.5 * (mu[i] + mu[j]);
                    let grad = (mu[j] - mu[i]) / h;
                    dual_drift[i * d + k] = 2.0 / mu_face * a[i * d + k] * grad - b[i * d + k];
                }
            }
            assemble_from_faces(grid, a, &dual_drift, generator.scheme())?
        }
    };
    Ok(Generator {
        grid: grid.clone(),
        matrix,
        scheme: generator.scheme(),
        role: Role::Dual(mode),
        field: generator.field.clone(),
        face_diffusion: generator.face_diffusion.clone(),
        fitted: generator.fitted,
    })
}

/// Smallest boundary fraction used by [`fit_boundaries`].
pub const MIN_BOUNDARY_FRACTION: f64 = 0.01;

/// Place region boundaries between cell centers.
///
/// For every face joining a free cell `i` to a cell `j` of a constrained
/// region with known geometry, the sphere is met at fraction `t` of the way
/// from `i` to `j`. The diffusive rate across that face is raised from
/// `c = a / h^2` to `c / t` through a `pi`-reversible perturbation:
/// `Delta(i, j) = kappa / pi_i`, `Delta(j, i) = kappa / pi_j` with
/// `kappa = c (1/t - 1) sqrt(pi_i pi_j)`. `pi` stays stationary and the
/// discrete adjoint of the result is the adjoint of the input plus the same
/// perturbation, so all duality identities remain exact.
pub fn fit_boundaries(generator: &Generator, pi: &InvariantDensity, constrained: &[&RegionMask]) -> Generator {
    let grid = generator.grid();
    let d = grid.dim();
    let h = grid.spacing();
    let p = pi.probabilities();
    let mut fitted = generator.clone();
    let is_constrained = |c: usize| constrained.iter().any(|m| m.contains(c));
    for region in constrained {
        let Some(shape) = region.shape() else { continue };
        for &i in region.outer_boundary() {
            if is_constrained(i) {
                continue;
            }
            let xi = grid.center(i);
            for k in 0..d {
                for forward in [true, false] {
                    let j = grid.neighbor(i, k, forward);
                    if !region.contains(j) {
                        continue;
                    }
                    let mut step = crate::grid::Point::from_elem(0.0, d);
                    step[k] = if forward { h } else { -h };
                    let t = shape
                        .crossing_fraction(grid, &xi, &step)
                        .unwrap_or(1.0)
                        .max(MIN_BOUNDARY_FRACTION);
                    if t >= 1.0 {
                        continue;
                    }
                    let face_cell = if forward { i } else { j };
                    let c = generator.face_diffusion(face_cell, k) / (h * h);
                    let kappa = c * (1.0 / t - 1.0) * (p[i] * p[j]).sqrt();
                    let m = &mut fitted.matrix;
                    *m.get_mut(i, j).expect("stencil entry") += kappa / p[i];
                    *m.get_mut(i, i).expect("diagonal") -= kappa / p[i];
                    *m.get_mut(j, i).expect("stencil entry") += kappa / p[j];
                    *m.get_mut(j, j).expect("diagonal") -= kappa / p[j];
                }
            }
        }
    }
    fitted.fitted = true;
    fitted
}

/// Generator restricted to a domain, absorbed on leaving it.
#[derive(Debug, Clone)]
pub struct KilledGenerator {
    matrix: SparseMatrix,
    cells: Vec<usize>,
    local: Vec<usize>,
    domain: RegionMask,
    role: Role,
}

impl KilledGenerator {
    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    /// Global indices of the domain cells, ascending.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Local row of a global cell, if it lies in the domain.
    pub fn local_index(&self, cell: usize) -> Option<usize> {
        match self.local[cell] {
            usize::MAX => None,
            k => Some(k),
        }
    }

    pub fn domain(&self) -> &RegionMask {
        &self.domain
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Scatter a local vector to the full grid, zero outside the domain.
    pub fn extend(&self, local: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.local.len()];
        for (&c, &v) in self.cells.iter().zip(local) {
            full[c] = v;
        }
        full
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.cells.iter().map(|&c| full[c]).collect()
    }
}

pub fn killed_submatrix(generator: &Generator, domain: &RegionMask) -> Result<KilledGenerator> {
    let count = domain.count();
    let total = generator.grid().cell_count();
    if domain.members().len() != total {
        return Err(Error::DimensionMismatch { expected: total, found: domain.members().len() });
    }
    if count == 0 {
        return Err(Error::DegenerateDomain("empty domain".into()));
    }
    if count == total {
        return Err(Error::DegenerateDomain("domain covers the whole torus".into()));
    }
    let cells = domain.cells();
    let mut local = vec![usize::MAX; total];
    for (k, &c) in cells.iter().enumerate() {
        local[c] = k;
    }
    Ok(KilledGenerator {
        matrix: generator.matrix().principal_submatrix(&cells),
        cells,
        local,
        domain: domain.clone(),
        role: generator.role(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::FieldSpec;
    use crate::grid::{make_ball_mask, BallSpec};

    fn generator(spec: FieldSpec, n: usize, scheme: Scheme) -> Generator {
        let g = TorusGrid::new(3, n, 1.0).unwrap();
        let f = CoefficientField::new(spec, &g).unwrap();
        assemble_generator(&f, &g, scheme).unwrap()
    }

    #[test]
    fn laplace_is_seven_point_stencil() {
        let m = generator(FieldSpec::Laplace, 8, Scheme::Upwind);
        let a = m.matrix();
        for i in 0..512 {
            let row: Vec<_> = a.row(i).collect();
            assert_eq!(row.len(), 7);
            for (c, v) in row {
                if c == i {
                    assert_eq!(v, -6.0 * 64.0);
                } else {
                    assert_eq!(v, 64.0);
                }
            }
        }
        let central = generator(FieldSpec::Laplace, 8, Scheme::Central);
        assert_eq!(central.matrix(), a);
    }

    #[test]
    fn row_sums_vanish_and_signs_hold() {
        for name in crate::coeffs::FAMILY_NAMES {
            let m = generator(FieldSpec::default_for(name).unwrap(), 8, Scheme::Upwind);
            let scale = m.diagonal_scale();
            for (i, s) in m.matrix().row_sums().iter().enumerate() {
                assert!(s.abs() <= 1e-12 * scale, "{name}: row {i} sums to {s}");
            }
            for i in 0..m.grid().cell_count() {
                for (c, v) in m.matrix().row(i) {
                    if c == i {
                        assert!(v <= 0.0);
                    } else {
                        assert!(v >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn killed_single_cell() {
        let m = generator(FieldSpec::Laplace, 8, Scheme::Upwind);
        let d = RegionMask::from_cells(m.grid(), &[100]).unwrap();
        let k = killed_submatrix(&m, &d).unwrap();
        assert_eq!(k.matrix().to_dense(), vec![vec![-384.0]]);
    }

    #[test]
    fn killed_degenerate_domains() {
        let m = generator(FieldSpec::Laplace, 8, Scheme::Upwind);
        let empty = RegionMask::empty(m.grid());
        assert!(matches!(killed_submatrix(&m, &empty), Err(Error::DegenerateDomain(_))));
        let full = crate::grid::complement_mask(&empty);
        assert!(matches!(killed_submatrix(&m, &full), Err(Error::DegenerateDomain(_))));
    }

    #[test]
    fn killed_rows_leak_exactly_on_inner_boundary() {
        let m = generator(FieldSpec::RotationDrift { strength: 2.0 }, 16, Scheme::Upwind);
        let d = make_ball_mask(m.grid(), &BallSpec::new(&[0.4, 0.5, 0.55], 0.25)).unwrap();
        let k = killed_submatrix(&m, &d).unwrap();
        let sums = k.matrix().row_sums();
        let inner: std::collections::HashSet<_> = d.inner_boundary().iter().copied().collect();
        let scale = m.diagonal_scale();
        for (local, &cell) in k.cells().iter().enumerate() {
            if inner.contains(&cell) {
                assert!(sums[local] < -1e-9 * scale);
            } else {
                assert!(sums[local].abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn central_rejected_for_invariant_density() {
        let m = generator(FieldSpec::Laplace, 8, Scheme::Central);
        assert!(invariant_density(&m, &StationaryOptions::default()).is_err());
    }

    #[test]
    fn laplace_dual_is_self() {
        let m = generator(FieldSpec::Laplace, 8, Scheme::Upwind);
        let pi = invariant_density(&m, &StationaryOptions::default()).unwrap();
        for p in pi.probabilities() {
            assert!((p - 1.0 / 512.0).abs() < 1e-10 / 512.0);
        }
        let dual = dual_generator(&m, &pi, DualConstruction::DiscreteAdjoint).unwrap();
        let diff = dual
            .matrix()
            .to_dense()
            .iter()
            .flatten()
            .zip(m.matrix().to_dense().iter().flatten())
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        assert!(diff <= 1e-9);
    }

    #[test]
    fn fitting_preserves_generator_structure() {
        let m = generator(FieldSpec::ShearDrift { strength: 2.0 }, 16, Scheme::Upwind);
        let pi = invariant_density(&m, &StationaryOptions::default()).unwrap();
        let ball = make_ball_mask(m.grid(), &BallSpec::new(&[0.5, 0.5, 0.5], 0.2)).unwrap();
        let outside = crate::grid::complement_mask(&ball);
        let fitted = fit_boundaries(&m, &pi, &[&outside]);
        let scale = fitted.diagonal_scale();
        for s in fitted.matrix().row_sums() {
            assert!(s.abs() <= 1e-12 * scale);
        }
        let stat = fitted.matrix().transpose().mul_vec(pi.probabilities());
        let pmax = pi.probabilities().iter().cloned().fold(0.0, f64::max);
        assert!(stat.iter().all(|v| v.abs() <= 1e-11 * scale * pmax));
        // only faces between the ball and its exterior change
        let changed = (0..m.grid().cell_count())
            .filter(|&i| m.matrix().get(i, i) != fitted.matrix().get(i, i))
            .count();
        assert_eq!(changed, ball.inner_boundary().len() + outside.inner_boundary().len());
    }
}
