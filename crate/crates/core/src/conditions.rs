//! Ball-family scans for the Green-function, exit-time, capacity and Harnack
//! conditions, the exit-time/capacity sandwich, and the equivalence suite.
//!
//! A condition "holds" on the lattice when its empirical constants are finite
//! on the tested family and stable under one grid refinement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientField;
use crate::error::{Error, Result};
use crate::grid::{complement_mask, make_ball_mask, BallSpec, Point, RegionMask, TorusGrid};
use crate::linalg::SolverOptions;
use crate::operator::{
    assemble_generator, dual_generator, invariant_density, killed_submatrix, DualConstruction, Generator,
    InvariantDensity, Scheme, StationaryOptions,
};
use crate::potential::{
    capacity, dirichlet_solve, exit_time, green_capacity_check, green_column, killed_on, prepare_generator,
    BoundaryMode, Check, IdentityReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionTag {
    G,
    E,
    C,
    Har,
}

/// Centers and radii of the tested balls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallFamily {
    /// Radii as fractions of the side length.
    pub radii: Vec<f64>,
    /// Centers as fractions of the side length.
    pub centers: Vec<Vec<f64>>,
}

impl BallFamily {
    /// Torus center plus four offsets in the first two coordinates, radii
    /// `{0.15, 0.2, 0.24}`.
    pub fn standard(dim: usize) -> Self {
        let mut centers = vec![vec![0.5; dim]];
        for (dx, dy) in [(0.1, 0.0), (-0.1, 0.0), (0.0, 0.1), (0.0, -0.1)] {
            let mut c = vec![0.5; dim];
            c[0] += dx;
            c[1] += dy;
            centers.push(c);
        }
        Self { radii: vec![0.15, 0.2, 0.24], centers }
    }

    /// Balls on `grid` with centers snapped to cell centers, sorted by radius
    /// and then by center.
    pub fn balls(&self, grid: &TorusGrid) -> Vec<BallSpec> {
        let side = grid.side();
        let mut out: Vec<BallSpec> = self
            .radii
            .iter()
            .flat_map(|&r| {
                self.centers.iter().map(move |c| {
                    let p: Vec<f64> = c.iter().map(|x| x * side).collect();
                    BallSpec::new(&p, r * side).snapped(grid)
                })
            })
            .collect();
        sort_balls(&mut out);
        out
    }

    pub fn describe(&self) -> String {
        format!("radii {:?} x {} centers", self.radii, self.centers.len())
    }
}

fn sort_balls(balls: &mut [BallSpec]) {
    balls.sort_by(|a, b| {
        a.radius
            .total_cmp(&b.radius)
            .then_with(|| a.center.iter().zip(&b.center).fold(std::cmp::Ordering::Equal, |o, (x, y)| o.then(x.total_cmp(y))))
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub solver: SolverOptions,
    pub boundary: BoundaryMode,
    /// Kernel comparisons skip cells closer than this many spacings to the source.
    pub exclusion_cells: f64,
    pub seed: u64,
    pub harnack_trials: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            boundary: BoundaryMode::Fitted,
            exclusion_cells: 2.0,
            seed: 1,
            harnack_trials: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallRow {
    pub center: Point,
    pub radius: f64,
    pub values: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: ConditionTag,
    pub family: String,
    pub cells_per_side: usize,
    /// Meaning of the two per-ball values.
    pub labels: [String; 2],
    pub rows: Vec<BallRow>,
    /// Maxima of each column over the family.
    pub worst: [f64; 2],
    /// All constants finite and positive.
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ConditionReport {
    fn new(
        condition: ConditionTag,
        family: String,
        grid: &TorusGrid,
        labels: [&str; 2],
        rows: Vec<BallRow>,
        seed: Option<u64>,
    ) -> Self {
        let mut worst = [0.0f64; 2];
        let mut passed = !rows.is_empty();
        for row in &rows {
            for k in 0..2 {
                let v = row.values[k];
                passed &= v.is_finite() && v > 0.0;
                worst[k] = if v.is_nan() { f64::NAN } else { worst[k].max(v) };
            }
        }
        Self {
            condition,
            family,
            cells_per_side: grid.cells_per_side(),
            labels: labels.map(String::from),
            rows,
            worst,
            passed,
            seed,
        }
    }
}

fn prepare_balls(grid: &TorusGrid, balls: &[BallSpec]) -> Result<Vec<BallSpec>> {
    if balls.is_empty() {
        return Err(Error::InvalidArgument("empty ball family".into()));
    }
    let mut sorted = balls.to_vec();
    for b in &sorted {
        b.validate(grid)?;
    }
    sort_balls(&mut sorted);
    Ok(sorted)
}

fn describe(balls: &[BallSpec], extra: &str) -> String {
    let mut radii: Vec<f64> = balls.iter().map(|b| b.radius).collect();
    radii.dedup();
    format!("{} balls, radii {:?}, {extra}", balls.len(), radii)
}

/// Green-function bounds against `|x - y|^{2-d}`.
///
/// Per ball: `C_upper = max g_B(y, x0) |x0 - y|^{d-2}` over `y` in `B` and
/// `C_lower = max |x0 - y|^{2-d} / g_B(y, x0)` over `y` in `B / K`, both away
/// from the source by the exclusion radius.
pub fn check_g(
    generator: &Generator,
    pi: &InvariantDensity,
    balls: &[BallSpec],
    k: f64,
    opts: &CheckOptions,
) -> Result<ConditionReport> {
    let grid = generator.grid();
    let d = grid.dim();
    if d < 3 {
        return Err(Error::KernelUndefined(d));
    }
    if !(k >= 1.0) {
        return Err(Error::InvalidArgument(format!("K = {k} must be at least 1")));
    }
    let balls = prepare_balls(grid, balls)?;
    let cutoff = opts.exclusion_cells * grid.spacing() * (1.0 - 1e-9);
    let power = (d - 2) as i32;
    let mut rows = Vec::with_capacity(balls.len());
    for ball in &balls {
        let mask = make_ball_mask(grid, ball)?;
        let killed = killed_on(generator, pi, &mask, opts.boundary)?;
        let x0 = grid.cell_of(&ball.center);
        let g = green_column(&killed, x0, &opts.solver)?;
        let mut upper = f64::NAN;
        let mut lower = f64::NAN;
        for &y in killed.cells() {
            let r = grid.distance(&grid.center(y), &ball.center);
            if r < cutoff {
                continue;
            }
            let kernel = r.powi(-power);
            upper = upper.max(g.at(y) / kernel);
            if r < ball.radius / k {
                lower = lower.max(kernel / g.at(y));
            }
        }
        rows.push(BallRow { center: ball.center.clone(), radius: ball.radius, values: [upper, lower] });
    }
    Ok(ConditionReport::new(
        ConditionTag::G,
        describe(&balls, &format!("K = {k}")),
        grid,
        ["C_upper", "C_lower"],
        rows,
        None,
    ))
}

/// Exit-time bounds against `R^2`: `C_upper = max_B E[T_B] / R^2`,
/// `C_lower = max over delta B of R^2 / E[T_B]`.
pub fn check_e(
    generator: &Generator,
    pi: &InvariantDensity,
    balls: &[BallSpec],
    delta: f64,
    opts: &CheckOptions,
) -> Result<ConditionReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta = {delta} must lie in (0, 1)")));
    }
    let grid = generator.grid();
    let balls = prepare_balls(grid, balls)?;
    let mut rows = Vec::with_capacity(balls.len());
    for ball in &balls {
        let mask = make_ball_mask(grid, ball)?;
        let killed = killed_on(generator, pi, &mask, opts.boundary)?;
        let u = exit_time(&killed, &opts.solver)?;
        let r2 = ball.radius * ball.radius;
        let upper = u.max() / r2;
        let mut lower = f64::NAN;
        for &x in killed.cells() {
            if grid.distance(&grid.center(x), &ball.center) < delta * ball.radius {
                lower = lower.max(r2 / u.at(x));
            }
        }
        rows.push(BallRow { center: ball.center.clone(), radius: ball.radius, values: [upper, lower] });
    }
    Ok(ConditionReport::new(
        ConditionTag::E,
        describe(&balls, &format!("delta = {delta}")),
        grid,
        ["C_upper", "C_lower"],
        rows,
        None,
    ))
}

/// `A = B`, `B = complement of KB` for a ball and its dilation.
fn condenser(grid: &TorusGrid, ball: &BallSpec, k: f64) -> Result<(RegionMask, RegionMask)> {
    let outer = ball.scaled(k);
    if !(outer.radius < 0.5 * grid.side()) {
        return Err(Error::WrappingBall { radius: outer.radius, side: grid.side() });
    }
    let a = make_ball_mask(grid, ball)?;
    let b = complement_mask(&make_ball_mask(grid, &outer)?);
    Ok((a, b))
}

fn check_c_impl(
    generator: &Generator,
    pi: &InvariantDensity,
    balls: &[BallSpec],
    k: f64,
    opts: &CheckOptions,
    with_sandwich: bool,
) -> Result<(ConditionReport, Vec<IdentityReport>)> {
    if !(k > 1.0) {
        return Err(Error::InvalidArgument(format!("K = {k} must exceed 1")));
    }
    let grid = generator.grid();
    let balls = prepare_balls(grid, balls)?;
    let mut rows = Vec::with_capacity(balls.len());
    let mut sandwiches = Vec::new();
    for ball in &balls {
        let (a, b) = condenser(grid, ball, k)?;
        let fitted = prepare_generator(generator, pi, &[&a, &b], opts.boundary);
        let cap = capacity(&fitted, pi, &a, &b, &opts.solver)?;
        let rho = cap.value() * ball.radius * ball.radius / pi.mass(&a);
        rows.push(BallRow { center: ball.center.clone(), radius: ball.radius, values: [rho, 1.0 / rho] });
        if with_sandwich {
            sandwiches.push(sandwich_from(&fitted, pi, &a, &b, cap.value(), &opts.solver)?);
        }
    }
    let report = ConditionReport::new(
        ConditionTag::C,
        describe(&balls, &format!("K = {k}")),
        grid,
        ["rho", "1/rho"],
        rows,
        None,
    );
    Ok((report, sandwiches))
}

/// Capacity bounds: `rho = cap(B, (KB)^c) R^2 / mu(B)`; reports `rho` and `1/rho`.
pub fn check_c(
    generator: &Generator,
    pi: &InvariantDensity,
    balls: &[BallSpec],
    k: f64,
    opts: &CheckOptions,
) -> Result<ConditionReport> {
    Ok(check_c_impl(generator, pi, balls, k, opts, false)?.0)
}

/// Elliptic Harnack ratios `sup_{delta B} u / inf_{delta B} u` for
/// nonnegative `u` harmonic in `B` with boundary data drawn uniformly from
/// `[0.1, 1]`. Column one is the primal generator, column two its dual.
pub fn check_harnack(
    generator: &Generator,
    pi: &InvariantDensity,
    balls: &[BallSpec],
    delta: f64,
    opts: &CheckOptions,
) -> Result<ConditionReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta = {delta} must lie in (0, 1)")));
    }
    if opts.harnack_trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let grid = generator.grid();
    let balls = prepare_balls(grid, balls)?;
    let mut rows = Vec::with_capacity(balls.len());
    for (index, ball) in balls.iter().enumerate() {
        let mask = make_ball_mask(grid, ball)?;
        let outside = complement_mask(&mask);
        let fitted = prepare_generator(generator, pi, &[&outside], opts.boundary);
        let dual = dual_generator(&fitted, pi, DualConstruction::DiscreteAdjoint)?;
        let inner: Vec<usize> = mask
            .cells()
            .into_iter()
            .filter(|&c| grid.distance(&grid.center(c), &ball.center) < delta * ball.radius)
            .collect();
        let mut ratios = [0.0f64; 2];
        for (slot, gen) in [&fitted, &dual].into_iter().enumerate() {
            let killed = killed_submatrix(gen, &mask)?;
            let mut data = vec![0.0; grid.cell_count()];
            for trial in 0..opts.harnack_trials {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream((index * opts.harnack_trials + trial) as u64);
                for &c in mask.outer_boundary() {
                    data[c] = rng.random_range(0.1..=1.0);
                }
                let u = dirichlet_solve(gen, &killed, &data, &opts.solver)?;
                let (lo, hi) = inner
                    .iter()
                    .fold((f64::INFINITY, 0.0f64), |(lo, hi), &c| (lo.min(u[c]), hi.max(u[c])));
                let ratio = if lo > 0.0 { hi / lo } else { f64::INFINITY };
                ratios[slot] = ratios[slot].max(ratio);
            }
        }
        rows.push(BallRow { center: ball.center.clone(), radius: ball.radius, values: ratios });
    }
    Ok(ConditionReport::new(
        ConditionTag::Har,
        describe(&balls, &format!("delta = {delta}, {} trials", opts.harnack_trials)),
        grid,
        ["primal ratio", "dual ratio"],
        rows,
        Some(opts.seed),
    ))
}

/// Relative slack allowed in the sandwich inequalities.
pub const SANDWICH_SLACK: f64 = 1e-9;

fn sandwich_from(
    generator: &Generator,
    pi: &InvariantDensity,
    a: &RegionMask,
    b: &RegionMask,
    cap: f64,
    opts: &SolverOptions,
) -> Result<IdentityReport> {
    let dual = dual_generator(generator, pi, DualConstruction::DiscreteAdjoint)?;
    let outside_b = complement_mask(b);
    let killed = killed_submatrix(&dual, &outside_b)?;
    let t = exit_time(&killed, opts)?;
    let inf_a = a.inner_boundary().iter().map(|&x| t.at(x)).fold(f64::INFINITY, f64::min);
    let sup = t.max();
    let mass_a = pi.mass(a);
    let mass_bc = pi.mass(&outside_b);
    let lower = mass_a * inf_a * inf_a / (mass_bc * mass_bc * sup);
    let middle = 1.0 / cap;
    let upper = sup / mass_a;
    Ok(IdentityReport::new("exit-time-capacity-sandwich")
        .check(Check::at_most("lower / (1/cap) - 1", lower / middle - 1.0, SANDWICH_SLACK))
        .check(Check::at_most("(1/cap) / upper - 1", middle / upper - 1.0, SANDWICH_SLACK))
        .value("lower", lower)
        .value("1/cap", middle)
        .value("upper", upper))
}

/// Both sides of the exit-time/capacity sandwich, using dual exit times on
/// the complement of `B` from the same (fitted) generator as the capacity.
pub fn check_sandwich(
    generator: &Generator,
    pi: &InvariantDensity,
    a: &RegionMask,
    b: &RegionMask,
    opts: &CheckOptions,
) -> Result<IdentityReport> {
    let fitted = prepare_generator(generator, pi, &[a, b], opts.boundary);
    let cap = capacity(&fitted, pi, a, b, &opts.solver)?;
    sandwich_from(&fitted, pi, a, b, cap.value(), &opts.solver)
}

/// Telescoping bound over `B_k = K^k B`, `k = 0..=levels`, for source `x0`
/// at the common center:
/// `max over the outer layer of B_m of g*_{B_levels}(., x0)
///   <= c mu(x0) sum_k cap(B_k, B_{k+1}^c)^{-1}`, with
/// `c = max_k max over the outer layer of B_k of g*_{B_{k+1}}(., x0) cap_k / mu(x0)`.
///
/// All killed problems use plain restrictions of one generator, so the
/// bound is exact on the lattice.
pub fn telescoping_check(
    generator: &Generator,
    pi: &InvariantDensity,
    ball: &BallSpec,
    k: f64,
    levels: usize,
    opts: &SolverOptions,
) -> Result<IdentityReport> {
    if levels == 0 || !(k > 1.0) {
        return Err(Error::InvalidArgument("need K > 1 and at least one level".into()));
    }
    let grid = generator.grid();
    let dual = dual_generator(generator, pi, DualConstruction::DiscreteAdjoint)?;
    let x0 = grid.cell_of(&ball.center);
    let masks: Vec<RegionMask> = (0..=levels)
        .map(|j| make_ball_mask(grid, &ball.scaled(k.powi(j as i32))))
        .collect::<Result<_>>()?;
    let mu0 = pi.density(x0);
    let mut c = 0.0f64;
    let mut sum = 0.0;
    let mut green_capacity = Vec::new();
    for j in 0..levels {
        let outside = complement_mask(&masks[j + 1]);
        let cap = capacity(generator, pi, &masks[j], &outside, opts)?;
        let killed = killed_submatrix(&dual, &masks[j + 1])?;
        let g = green_column(&killed, x0, opts)?;
        let layer_max = masks[j].outer_boundary().iter().map(|&y| g.at(y)).fold(0.0, f64::max);
        c = c.max(layer_max * cap.value() / mu0);
        sum += 1.0 / cap.value();
        green_capacity.push(green_capacity_check(&cap, &dual, pi, &masks[j], &outside, x0, opts)?);
    }
    let killed = killed_submatrix(&dual, &masks[levels])?;
    let g = green_column(&killed, x0, opts)?;
    let lhs = masks[0].outer_boundary().iter().map(|&y| g.at(y)).fold(0.0, f64::max);
    let rhs = c * mu0 * sum;
    let mut report = IdentityReport::new("telescoping-green-bound")
        .check(Check::at_most("lhs / rhs - 1", lhs / rhs - 1.0, SANDWICH_SLACK))
        .value("lhs", lhs)
        .value("rhs", rhs)
        .value("c", c);
    for (j, gc) in green_capacity.iter().enumerate() {
        report = report.value(format!("level {j} comparison constant"), gc.get("constant").unwrap_or(f64::NAN));
        for check in &gc.checks {
            report = report.check(Check { label: format!("level {j}: {}", check.label), ..check.clone() });
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub cells_per_side: usize,
    /// `max mu / min mu`.
    pub density_spread: f64,
    pub stationarity_residual: f64,
    pub capacity: ConditionReport,
    pub green: ConditionReport,
    pub exit_time_dual: ConditionReport,
    /// Recorded for the primal/dual Green comparison; not part of the verdict.
    pub green_dual: ConditionReport,
    pub sandwich: Vec<IdentityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub condition: ConditionTag,
    pub label: String,
    pub coarse: f64,
    pub fine: f64,
    /// `max / min` of the two.
    pub factor: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub field: String,
    pub k: f64,
    pub delta: f64,
    pub boundary: BoundaryMode,
    pub refinement_limit: f64,
    pub levels: Vec<LevelReport>,
    pub stability: Vec<StabilityRow>,
    /// Largest `dual / primal` or `primal / dual` ratio of the Green constants,
    /// against the density spread it should stay within.
    pub green_dual_gap: f64,
    pub sandwich_passed: bool,
    /// Capacity, Green and dual exit-time conditions all finite and stable.
    pub verdict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub check: CheckOptions,
    pub stationary: StationaryOptions,
    /// Largest allowed `max / min` of a constant across the refinement.
    pub refinement_limit: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { check: CheckOptions::default(), stationary: StationaryOptions::default(), refinement_limit: 1.4 }
    }
}

fn level(
    field: &CoefficientField,
    grid: &TorusGrid,
    family: &BallFamily,
    k: f64,
    opts: &SuiteOptions,
) -> Result<LevelReport> {
    let generator = assemble_generator(field, grid, Scheme::Upwind)?;
    let pi = invariant_density(&generator, &opts.stationary)?;
    let dual = dual_generator(&generator, &pi, DualConstruction::DiscreteAdjoint)?;
    let balls = family.balls(grid);
    let (capacity, sandwich) = check_c_impl(&generator, &pi, &balls, k, &opts.check, true)?;
    let green = check_g(&generator, &pi, &balls, k, &opts.check)?;
    let green_dual = check_g(&dual, &pi, &balls, k, &opts.check)?;
    let exit_time_dual = check_e(&dual, &pi, &balls, 1.0 / k, &opts.check)?;
    Ok(LevelReport {
        cells_per_side: grid.cells_per_side(),
        density_spread: pi.spread(),
        stationarity_residual: pi.residual,
        capacity,
        green,
        exit_time_dual,
        green_dual,
        sandwich,
    })
}

/// Capacity (primal), Green (primal) and exit-time (dual, `delta = 1/K`)
/// conditions on `grid` and on the grid refined once.
pub fn equivalence_suite(
    field: &CoefficientField,
    grid: &TorusGrid,
    family: &BallFamily,
    k: f64,
    opts: &SuiteOptions,
) -> Result<EquivalenceReport> {
    if grid.dim() < 3 {
        return Err(Error::KernelUndefined(grid.dim()));
    }
    let fine = TorusGrid::new(grid.dim(), 2 * grid.cells_per_side(), grid.side())?;
    let levels = vec![level(field, grid, family, k, opts)?, level(field, &fine, family, k, opts)?];
    let mut stability = Vec::new();
    let pairs = |l: &LevelReport| [l.capacity.clone(), l.green.clone(), l.exit_time_dual.clone()];
    for (coarse, fine) in pairs(&levels[0]).iter().zip(pairs(&levels[1]).iter()) {
        for j in 0..2 {
            let (a, b) = (coarse.worst[j], fine.worst[j]);
            // f64::max would drop a NaN level and report a factor of one
            let factor = if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) / a.min(b) };
            stability.push(StabilityRow {
                condition: coarse.condition,
                label: coarse.labels[j].clone(),
                coarse: a,
                fine: b,
                factor,
                passed: factor.is_finite() && factor <= opts.refinement_limit,
            });
        }
    }
    let green_dual_gap = levels
        .iter()
        .flat_map(|l| (0..2).map(move |j| l.green.worst[j].max(l.green_dual.worst[j]) / l.green.worst[j].min(l.green_dual.worst[j])))
        .fold(1.0, f64::max);
    let finite = levels.iter().all(|l| l.capacity.passed && l.green.passed && l.exit_time_dual.passed);
    let sandwich_passed = levels.iter().all(|l| l.sandwich.iter().all(|s| s.passed));
    let verdict = finite && stability.iter().all(|s| s.passed);
    Ok(EquivalenceReport {
        field: field.describe(),
        k,
        delta: 1.0 / k,
        boundary: opts.check.boundary,
        refinement_limit: opts.refinement_limit,
        levels,
        stability,
        green_dual_gap,
        sandwich_passed,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::FieldSpec;

    #[test]
    fn kernel_needs_three_dimensions() {
        let g = TorusGrid::new(2, 16, 1.0).unwrap();
        let f = CoefficientField::new(FieldSpec::Laplace, &g).unwrap();
        let m = assemble_generator(&f, &g, Scheme::Upwind).unwrap();
        let pi = InvariantDensity::uniform(&g);
        let balls = [BallSpec::new(&[0.5, 0.5], 0.25)];
        assert!(matches!(check_g(&m, &pi, &balls, 2.0, &CheckOptions::default()), Err(Error::KernelUndefined(2))));
    }

    #[test]
    fn wrapping_dilation_rejected() {
        let g = TorusGrid::new(3, 16, 1.0).unwrap();
        let f = CoefficientField::new(FieldSpec::Laplace, &g).unwrap();
        let m = assemble_generator(&f, &g, Scheme::Upwind).unwrap();
        let pi = InvariantDensity::uniform(&g);
        let balls = [BallSpec::new(&[0.5, 0.5, 0.5], 0.3)];
        assert!(matches!(check_c(&m, &pi, &balls, 2.0, &CheckOptions::default()), Err(Error::WrappingBall { .. })));
    }

    #[test]
    fn family_order_is_canonical() {
        let g = TorusGrid::new(3, 32, 1.0).unwrap();
        let mut fam = BallFamily::standard(3);
        let a = fam.balls(&g);
        fam.radii.reverse();
        fam.centers.reverse();
        assert_eq!(a, fam.balls(&g));
        assert_eq!(a.len(), 15);
    }
}
