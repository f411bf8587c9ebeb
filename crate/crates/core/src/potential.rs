//! Exit times, Green functions, harmonic extensions, capacities and
//! equilibrium measures on the lattice, with checks of the exact identities
//! that tie them together.
//!
//! Green functions are reported as continuum densities: the chain occupation
//! time `G(x, y)` divided by `h^d`, so that summing `g(x, y) h^d` over `y`
//! gives the mean exit time from `x`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{complement_mask, RegionMask};
use crate::linalg::{self, SolveReport, SolverOptions};
use crate::operator::{fit_boundaries, killed_submatrix, Generator, InvariantDensity, KilledGenerator, Role};

/// How region boundaries enter killed and constrained problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    /// Boundaries sit on the cell faces of the staircase mask.
    Staircase,
    /// Boundary faces carry the sphere crossing position (see [`fit_boundaries`]).
    #[default]
    Fitted,
}

/// Generator adapted to the given constrained regions.
pub fn prepare_generator(
    generator: &Generator,
    pi: &InvariantDensity,
    constrained: &[&RegionMask],
    mode: BoundaryMode,
) -> Generator {
    match mode {
        BoundaryMode::Staircase => generator.clone(),
        BoundaryMode::Fitted => fit_boundaries(generator, pi, constrained),
    }
}

/// Killed generator on `domain`, fitted to its boundary when requested.
pub fn killed_on(
    generator: &Generator,
    pi: &InvariantDensity,
    domain: &RegionMask,
    mode: BoundaryMode,
) -> Result<KilledGenerator> {
    match mode {
        BoundaryMode::Staircase => killed_submatrix(generator, domain),
        BoundaryMode::Fitted => {
            let outside = complement_mask(domain);
            killed_submatrix(&fit_boundaries(generator, pi, &[&outside]), domain)
        }
    }
}

/// `E_x[T_D]` on the grid, zero outside `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitTimeField {
    values: Vec<f64>,
    pub role: Role,
    pub solve: SolveReport,
}

impl ExitTimeField {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Solve `K u = -1` on the killed domain.
pub fn exit_time(killed: &KilledGenerator, opts: &SolverOptions) -> Result<ExitTimeField> {
    let rhs = vec![-1.0; killed.len()];
    let (u, solve) = linalg::solve(killed.matrix(), &rhs, opts)?;
    Ok(ExitTimeField { values: killed.extend(&u), role: killed.role(), solve })
}

/// `g_D(., y)` for a fixed source `y`, as a density.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenColumn {
    pub source: usize,
    values: Vec<f64>,
    domain: RegionMask,
    pub role: Role,
    pub solve: SolveReport,
}

impl GreenColumn {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn domain(&self) -> &RegionMask {
        &self.domain
    }
}

fn unit_rhs(killed: &KilledGenerator, cell: usize) -> Result<Vec<f64>> {
    let local = killed.local_index(cell).ok_or(Error::SourceOutsideDomain(cell))?;
    let mut rhs = vec![0.0; killed.len()];
    rhs[local] = -1.0;
    Ok(rhs)
}

/// Column `y` of `(-K)^{-1}`, divided by `h^d`.
pub fn green_column(killed: &KilledGenerator, source: usize, opts: &SolverOptions) -> Result<GreenColumn> {
    let rhs = unit_rhs(killed, source)?;
    let (v, solve) = linalg::solve(killed.matrix(), &rhs, opts)?;
    let volume = killed.domain().grid().cell_volume();
    let values = killed.extend(&v).into_iter().map(|g| g / volume).collect();
    Ok(GreenColumn { source, values, domain: killed.domain().clone(), role: killed.role(), solve })
}

/// Row `x` of `(-K)^{-1}` divided by `h^d`, i.e. `g_D(x, .)`, from the
/// transposed system.
pub fn green_row(killed: &KilledGenerator, x: usize, opts: &SolverOptions) -> Result<Vec<f64>> {
    let rhs = unit_rhs(killed, x)?;
    let (w, _) = linalg::solve(&killed.matrix().transpose(), &rhs, opts)?;
    let volume = killed.domain().grid().cell_volume();
    Ok(killed.extend(&w).into_iter().map(|g| g / volume).collect())
}

/// `h_{A,B}`: one on `A`, zero on `B`, harmonic elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicExtension {
    values: Vec<f64>,
    pub solve: SolveReport,
}

impl HarmonicExtension {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, cell: usize) -> f64 {
        self.values[cell]
    }
}

fn check_separated(a: &RegionMask, b: &RegionMask) -> Result<()> {
    if a.count() == 0 || b.count() == 0 {
        return Err(Error::RegionsNotSeparated("both regions must be nonempty".into()));
    }
    if a.touches(b) {
        return Err(Error::RegionsNotSeparated("regions overlap or share a face".into()));
    }
    Ok(())
}

/// Solve `M h = 0` off `A u B` with `h = 1` on `A` and `h = 0` on `B`.
///
/// The constrained rows are eliminated, which is algebraically the same as
/// replacing them by identity rows.
pub fn harmonic_extension(
    generator: &Generator,
    a: &RegionMask,
    b: &RegionMask,
    opts: &SolverOptions,
) -> Result<HarmonicExtension> {
    check_separated(a, b)?;
    let grid = generator.grid();
    let free: Vec<bool> = (0..grid.cell_count()).map(|i| !a.contains(i) && !b.contains(i)).collect();
    let free = RegionMask::from_members(grid, free, None)?;
    let killed = killed_submatrix(generator, &free)?;
    let m = generator.matrix();
    let rhs: Vec<f64> = killed
        .cells()
        .iter()
        .map(|&i| -m.row(i).filter(|&(c, _)| a.contains(c)).map(|(_, v)| v).sum::<f64>())
        .collect();
    let (h, solve) = linalg::solve(killed.matrix(), &rhs, opts)?;
    let mut values = killed.extend(&h);
    for (i, v) in values.iter_mut().enumerate() {
        if a.contains(i) {
            *v = 1.0;
        }
    }
    Ok(HarmonicExtension { values, solve })
}

/// `nu = -(M h) pi` on `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumMeasure {
    weights: Vec<f64>,
    pub mass: f64,
}

impl EquilibriumMeasure {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn at(&self, cell: usize) -> f64 {
        self.weights[cell]
    }

    /// Cells carrying positive weight.
    pub fn support(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter_map(|(i, &w)| (w > 0.0).then_some(i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    /// `-sum h (M h) pi`.
    pub energy: f64,
    /// `sum over A of -(M h) pi`.
    pub flux: f64,
    /// `|energy - flux| / flux`.
    pub mismatch: f64,
    /// Smallest distance between cell centers of `A` and `B`.
    pub separation: f64,
    pub harmonic: HarmonicExtension,
    pub equilibrium: EquilibriumMeasure,
}

impl CapacityResult {
    pub fn value(&self) -> f64 {
        self.flux
    }
}

fn separation(a: &RegionMask, b: &RegionMask) -> f64 {
    let g = a.grid();
    let mut best = f64::INFINITY;
    for &i in a.inner_boundary() {
        let xi = g.center(i);
        for &j in b.inner_boundary() {
            best = best.min(g.distance(&xi, &g.center(j)));
        }
    }
    best
}

pub fn capacity(
    generator: &Generator,
    pi: &InvariantDensity,
    a: &RegionMask,
    b: &RegionMask,
    opts: &SolverOptions,
) -> Result<CapacityResult> {
    let harmonic = harmonic_extension(generator, a, b, opts)?;
    let mh = generator.apply(harmonic.values());
    let p = pi.probabilities();
    let energy: f64 = -(0..mh.len()).map(|i| harmonic.at(i) * mh[i] * p[i]).sum::<f64>();
    let mut weights = vec![0.0; mh.len()];
    // rows sum to zero, so (Mh)(i) = sum_j M_ij (h_j - h_i); every term has
    // one sign and cells deep inside A get exactly zero
    let m = generator.matrix();
    for i in a.cells() {
        let hi = harmonic.at(i);
        let out: f64 = m.row(i).filter(|&(j, _)| j != i).map(|(j, v)| v * (harmonic.at(j) - hi)).sum();
        weights[i] = -out * p[i];
    }
    let flux: f64 = weights.iter().sum();
    let floor = -1e-12 * flux.abs().max(f64::MIN_POSITIVE);
    if let Some((cell, &value)) = weights.iter().enumerate().find(|(_, &w)| w < floor) {
        return Err(Error::EquilibriumPositivityViolated { cell, value });
    }
    Ok(CapacityResult {
        energy,
        flux,
        mismatch: (energy - flux).abs() / flux.abs(),
        separation: separation(a, b),
        harmonic,
        equilibrium: EquilibriumMeasure { weights, mass: flux },
    })
}

pub fn equilibrium_measure(
    generator: &Generator,
    pi: &InvariantDensity,
    a: &RegionMask,
    b: &RegionMask,
    opts: &SolverOptions,
) -> Result<EquilibriumMeasure> {
    Ok(capacity(generator, pi, a, b, opts)?.equilibrium)
}

/// One measured quantity against its threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(label: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { label: label.into(), value, threshold, passed: value <= threshold }
    }
}

/// Outcome of an identity or inequality check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub identity: String,
    pub checks: Vec<Check>,
    /// Informational quantities, in insertion order.
    pub values: Vec<(String, f64)>,
    pub passed: bool,
}

impl IdentityReport {
    pub fn new(identity: impl Into<String>) -> Self {
        Self { identity: identity.into(), checks: Vec::new(), values: Vec::new(), passed: true }
    }

    pub fn check(mut self, check: Check) -> Self {
        self.passed &= check.passed;
        self.checks.push(check);
        self
    }

    pub fn value(mut self, label: impl Into<String>, v: f64) -> Self {
        self.values.push((label.into(), v));
        self
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.values.iter().find(|(l, _)| l == label).map(|(_, v)| *v)
    }

    /// The largest checked value.
    pub fn worst(&self) -> f64 {
        self.checks.iter().map(|c| c.value).fold(0.0, f64::max)
    }
}

/// Identity threshold for solver-level equalities.
pub const IDENTITY_TOLERANCE: f64 = 1e-8;

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `sum_y g_D(x, y) h^d = E_x[T_D]` for up to `max_rows` cells `x` of `D`
/// (all cells if `D` is small enough), each row from a transposed solve.
pub fn exit_time_identity_check(
    killed: &KilledGenerator,
    max_rows: usize,
    opts: &SolverOptions,
) -> Result<IdentityReport> {
    let exit = exit_time(killed, opts)?;
    let transposed = killed.matrix().transpose();
    let cells = killed.cells();
    let stride = cells.len().div_ceil(max_rows.max(1));
    let mut worst = 0.0f64;
    let mut rows = 0;
    for &x in cells.iter().step_by(stride) {
        let (w, _) = linalg::solve(&transposed, &unit_rhs(killed, x)?, opts)?;
        // w holds G(x, .) = g_D(x, .) h^d
        let total: f64 = w.iter().sum();
        worst = worst.max((total - exit.at(x)).abs());
        rows += 1;
    }
    let rel = worst / exit.max();
    Ok(IdentityReport::new("green-row-sum-equals-exit-time")
        .check(Check::at_most("relative residual", rel, IDENTITY_TOLERANCE))
        .value("rows checked", rows as f64)
        .value("max exit time", exit.max()))
}

/// `pi(x) g*_D(x, y) = pi(y) g_D(y, x)` for each source `y`.
pub fn duality_check(
    primal: &KilledGenerator,
    dual: &KilledGenerator,
    pi: &InvariantDensity,
    sources: &[usize],
    opts: &SolverOptions,
) -> Result<IdentityReport> {
    let p = pi.probabilities();
    let mut worst = 0.0f64;
    for &y in sources {
        let column = green_column(dual, y, opts)?;
        let row = green_row(primal, y, opts)?;
        let scale = max_abs(row.iter().map(|g| p[y] * g));
        let diff = max_abs(primal.cells().iter().map(|&x| p[x] * column.at(x) - p[y] * row[x]));
        worst = worst.max(diff / scale);
    }
    Ok(IdentityReport::new("green-duality")
        .check(Check::at_most("relative residual", worst, IDENTITY_TOLERANCE))
        .value("sources", sources.len() as f64))
}

/// Energy, flux and equilibrium mass coincide; `cap = cap*` when a dual
/// capacity is supplied.
pub fn capacity_identity_check(primal: &CapacityResult, dual: Option<&CapacityResult>) -> IdentityReport {
    let mass_gap = (primal.equilibrium.mass - primal.flux).abs() / primal.flux;
    let mut report = IdentityReport::new("capacity-energy-flux-mass")
        .check(Check::at_most("energy vs flux", primal.mismatch, IDENTITY_TOLERANCE))
        .check(Check::at_most("mass vs flux", mass_gap, IDENTITY_TOLERANCE))
        .value("energy", primal.energy)
        .value("flux", primal.flux);
    if let Some(d) = dual {
        let gap = (d.flux - primal.flux).abs() / primal.flux;
        report = report
            .check(Check::at_most("cap vs dual cap", gap, IDENTITY_TOLERANCE))
            .value("dual capacity", d.flux);
    }
    report
}

/// `r = G_{B^c}(nu / pi)` equals `h` off `A u B` and one on `A`.
pub fn representation_check(
    cap: &CapacityResult,
    generator: &Generator,
    pi: &InvariantDensity,
    a: &RegionMask,
    b: &RegionMask,
    opts: &SolverOptions,
) -> Result<IdentityReport> {
    let killed = killed_submatrix(generator, &complement_mask(b))?;
    let p = pi.probabilities();
    let rhs: Vec<f64> = killed.cells().iter().map(|&x| -cap.equilibrium.at(x) / p[x]).collect();
    let (r, _) = linalg::solve(killed.matrix(), &rhs, opts)?;
    let r = killed.extend(&r);
    let mut on_a = 0.0f64;
    let mut off = 0.0f64;
    for &x in killed.cells() {
        if a.contains(x) {
            on_a = on_a.max((r[x] - 1.0).abs());
        } else {
            off = off.max((r[x] - cap.harmonic.at(x)).abs());
        }
    }
    Ok(IdentityReport::new("equilibrium-representation")
        .check(Check::at_most("max |r - 1| on A", on_a, IDENTITY_TOLERANCE))
        .check(Check::at_most("max |r - h| off A and B", off, IDENTITY_TOLERANCE)))
}

/// Extrema of `g_V(., x0)` over `U \ {x0}` and `V \ U` sit on the layers
/// around the boundary of `U`: the minimum over `U \ {x0}` on its inner
/// layer, the maximum over `V \ U` on its outer layer.
pub fn annulus_extrema_check(g: &GreenColumn, u: &RegionMask) -> IdentityReport {
    let v = g.domain();
    let x0 = g.source;
    let vals = g.values();
    let top = max_abs(vals.iter().copied());
    let mut report = IdentityReport::new("annulus-extrema");
    if !u.contains(x0) || !(top > 0.0) {
        return report.check(Check { label: "degenerate input".into(), value: f64::NAN, threshold: 0.0, passed: false });
    }
    let min_u = u.cells().into_iter().filter(|&c| c != x0).map(|c| vals[c]).fold(f64::INFINITY, f64::min);
    let min_layer = u
        .inner_boundary()
        .iter()
        .filter(|&&c| c != x0)
        .map(|&c| vals[c])
        .fold(f64::INFINITY, f64::min);
    let max_out = v.cells().into_iter().filter(|&c| !u.contains(c)).map(|c| vals[c]).fold(0.0, f64::max);
    let max_layer = u
        .outer_boundary()
        .iter()
        .filter(|&&c| v.contains(c))
        .map(|&c| vals[c])
        .fold(0.0, f64::max);
    let distinct = vals.iter().filter(|&&x| x > 0.0).any(|&x| (x - top).abs() > 1e-12 * top);
    if !distinct {
        return report.check(Check { label: "constant column".into(), value: f64::NAN, threshold: 0.0, passed: false });
    }
    report = report
        .check(Check::at_most("min gap (inner layer vs U)", (min_layer - min_u) / top, IDENTITY_TOLERANCE))
        .check(Check::at_most("max gap (outer layer vs V minus U)", (max_out - max_layer) / top, IDENTITY_TOLERANCE))
        .value("min over U", min_u)
        .value("max over V minus U", max_out);
    report
}

/// Dirichlet data on the outer layer of `D`, coupled through `M`.
fn dirichlet_rhs(generator: &Generator, killed: &KilledGenerator, data: &[f64]) -> Vec<f64> {
    let m = generator.matrix();
    killed
        .cells()
        .iter()
        .map(|&i| {
            -m.row(i)
                .filter(|&(c, _)| killed.local_index(c).is_none())
                .map(|(c, v)| v * data[c])
                .sum::<f64>()
        })
        .collect()
}

/// Solve `M u = 0` in `D` with values `data` outside `D` (only the outer
/// layer matters). Returns `u` on the full grid, equal to `data` outside.
pub fn dirichlet_solve(
    generator: &Generator,
    killed: &KilledGenerator,
    data: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    let rhs = dirichlet_rhs(generator, killed, data);
    let (u, _) = linalg::solve(killed.matrix(), &rhs, opts)?;
    let mut full = data.to_vec();
    for (&c, &v) in killed.cells().iter().zip(&u) {
        full[c] = v;
    }
    Ok(full)
}

/// Random nonnegative data on the outer layer of `D`; the solution of
/// `M u = 0` in `D` must stay within the range of the data.
pub fn maximum_principle_check(
    generator: &Generator,
    domain: &RegionMask,
    trials: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<IdentityReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let killed = killed_submatrix(generator, domain)?;
    let layer = domain.outer_boundary();
    let mut data = vec![0.0; generator.grid().cell_count()];
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        for &c in layer {
            data[c] = rng.random::<f64>();
        }
        let u = dirichlet_solve(generator, &killed, &data, opts)?;
        let (lo, hi) = layer
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(data[c]), hi.max(data[c])));
        for &c in killed.cells() {
            worst = worst.max((u[c] - hi) / hi).max((lo - u[c]) / hi);
        }
    }
    Ok(IdentityReport::new("maximum-principle")
        .check(Check::at_most("relative overshoot", worst.max(0.0), IDENTITY_TOLERANCE))
        .value("trials", trials as f64)
        .value("seed", seed as f64))
}

/// `min <= 1 <= max` for `g*_{B^c}(y, x) cap / mu(x)` over the support of
/// the equilibrium measure, for a source `x` in `A`. The ratio `max / min`
/// is the Harnack-type constant of the comparison.
///
/// `dual` must be the dual of the generator that produced `cap`.
pub fn green_capacity_check(
    cap: &CapacityResult,
    dual: &Generator,
    pi: &InvariantDensity,
    a: &RegionMask,
    b: &RegionMask,
    x: usize,
    opts: &SolverOptions,
) -> Result<IdentityReport> {
    if !a.contains(x) {
        return Err(Error::SourceOutsideDomain(x));
    }
    let killed = killed_submatrix(dual, &complement_mask(b))?;
    let column = green_column(&killed, x, opts)?;
    let scale = cap.value() / pi.density(x);
    let support = cap.equilibrium.support();
    let (lo, hi) = support
        .iter()
        .map(|&y| column.at(y) * scale)
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)));
    Ok(IdentityReport::new("green-capacity-comparison")
        .check(Check::at_most("min ratio above one", lo - 1.0, IDENTITY_TOLERANCE))
        .check(Check::at_most("max ratio below one", 1.0 - hi, IDENTITY_TOLERANCE))
        .value("min ratio", lo)
        .value("max ratio", hi)
        .value("constant", hi / lo))
}

/// Field dumps: CSV with one row per cell and gnuplot slices.
pub mod export {
    use std::io::Write;

    use crate::grid::TorusGrid;

    /// `i0,...,coord0,...,value` per cell, in linear-index order.
    pub fn write_csv<W: Write>(grid: &TorusGrid, values: &[f64], mut w: W) -> std::io::Result<()> {
        let d = grid.dim();
        let header: Vec<String> = (0..d)
            .map(|k| format!("i{k}"))
            .chain((0..d).map(|k| format!("x{k}")))
            .chain(std::iter::once("value".to_string()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (cell, v) in values.iter().enumerate() {
            let idx = grid.multi_index(cell);
            let mut line: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
            line.extend((0..d).map(|k| format!("{:.6}", grid.center_coord(cell, k))));
            line.push(format!("{v:e}"));
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Plane through the first two axes at index `slice` along every other
    /// axis: `x y value` lines, blank line between rows (gnuplot `splot`).
    pub fn write_slice<W: Write>(grid: &TorusGrid, values: &[f64], slice: usize, mut w: W) -> std::io::Result<()> {
        let n = grid.cells_per_side();
        let d = grid.dim();
        let slice = slice.min(n - 1);
        writeln!(w, "# x y value (other axes at index {slice})")?;
        let mut idx = vec![slice; d];
        for i in 0..n {
            idx[0] = i;
            for j in 0..n {
                idx[1] = j;
                let cell = grid.linear_index(&idx);
                writeln!(
                    w,
                    "{:.6} {:.6} {:e}",
                    grid.center_coord(cell, 0),
                    grid.center_coord(cell, 1),
                    values[cell]
                )?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{CoefficientField, FieldSpec};
    use crate::grid::{make_ball_mask, BallSpec, TorusGrid};
    use crate::operator::{assemble_generator, Scheme};

    fn laplace(n: usize) -> (Generator, InvariantDensity) {
        let g = TorusGrid::new(3, n, 1.0).unwrap();
        let f = CoefficientField::new(FieldSpec::Laplace, &g).unwrap();
        let pi = InvariantDensity::uniform(&g);
        (assemble_generator(&f, &g, Scheme::Upwind).unwrap(), pi)
    }

    #[test]
    fn single_cell_exit_time() {
        let (m, _) = laplace(8);
        let d = RegionMask::from_cells(m.grid(), &[77]).unwrap();
        let k = killed_submatrix(&m, &d).unwrap();
        let u = exit_time(&k, &SolverOptions::default()).unwrap();
        assert!((u.at(77) - 1.0 / 384.0).abs() < 1e-15);
        assert_eq!(u.values().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn source_outside_domain() {
        let (m, _) = laplace(8);
        let d = RegionMask::from_cells(m.grid(), &[77]).unwrap();
        let k = killed_submatrix(&m, &d).unwrap();
        assert!(matches!(green_column(&k, 3, &SolverOptions::default()), Err(Error::SourceOutsideDomain(3))));
    }

    #[test]
    fn adjacent_regions_rejected() {
        let (m, _) = laplace(8);
        let a = RegionMask::from_cells(m.grid(), &[0]).unwrap();
        let b = RegionMask::from_cells(m.grid(), &[1]).unwrap();
        assert!(matches!(
            harmonic_extension(&m, &a, &b, &SolverOptions::default()),
            Err(Error::RegionsNotSeparated(_))
        ));
    }

    #[test]
    fn laplace_green_is_symmetric() {
        let (m, _) = laplace(16);
        let d = make_ball_mask(m.grid(), &BallSpec::new(&[0.5, 0.5, 0.5], 0.3)).unwrap();
        let k = killed_submatrix(&m, &d).unwrap();
        let cells = k.cells();
        let (y1, y2) = (cells[10], cells[cells.len() / 2]);
        let opts = SolverOptions::default();
        let g1 = green_column(&k, y1, &opts).unwrap();
        let g2 = green_column(&k, y2, &opts).unwrap();
        assert!((g1.at(y2) - g2.at(y1)).abs() <= 1e-8 * g1.at(y2));
    }

    #[test]
    fn interior_of_a_carries_no_equilibrium_mass() {
        let (m, pi) = laplace(16);
        let a = make_ball_mask(m.grid(), &BallSpec::new(&[0.5, 0.5, 0.5], 0.15)).unwrap();
        let b = complement_mask(&make_ball_mask(m.grid(), &BallSpec::new(&[0.5, 0.5, 0.5], 0.35)).unwrap());
        let nu = equilibrium_measure(&m, &pi, &a, &b, &SolverOptions::default()).unwrap();
        let layer: std::collections::HashSet<_> = a.inner_boundary().iter().copied().collect();
        for c in a.cells() {
            if !layer.contains(&c) {
                assert_eq!(nu.at(c), 0.0);
            } else {
                assert!(nu.at(c) > 0.0);
            }
        }
    }

    #[test]
    fn csv_and_slice_shapes() {
        let g = TorusGrid::new(3, 8, 1.0).unwrap();
        let v: Vec<f64> = (0..512).map(|i| i as f64).collect();
        let mut csv = Vec::new();
        export::write_csv(&g, &v, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 513);
        assert!(text.starts_with("i0,i1,i2,x0,x1,x2,value"));
        let mut slice = Vec::new();
        export::write_slice(&g, &v, 4, &mut slice).unwrap();
        let text = String::from_utf8(slice).unwrap();
        assert_eq!(text.lines().filter(|l| !l.is_empty() && !l.starts_with('#')).count(), 64);
    }
}
