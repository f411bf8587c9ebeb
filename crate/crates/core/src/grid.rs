//! Periodic cell-centered lattice on the flat torus `[0, side)^d`.
//!
//! Cells are addressed by a linear index with the first axis varying slowest.
//! Regions are sets of cells selected by their centers; a region built from a
//! ball remembers that ball so solvers can place the true boundary between
//! cell centers.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// A point (or displacement) on the torus.
pub type Point = SmallVec<[f64; 4]>;

/// Smallest admissible number of cells per side.
pub const MIN_CELLS_PER_SIDE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    cells_per_side: usize,
    side: f64,
}

impl TorusGrid {
    pub fn new(dim: usize, cells_per_side: usize, side: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidGrid(format!("dimension {dim} < 2")));
        }
        if cells_per_side < MIN_CELLS_PER_SIDE {
            return Err(Error::InvalidGrid(format!(
                "{cells_per_side} cells per side < {MIN_CELLS_PER_SIDE}"
            )));
        }
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::InvalidGrid(format!("side length {side} must be positive")));
        }
        let total = (cells_per_side as u128).checked_pow(dim as u32);
        match total {
            Some(t) if t <= u32::MAX as u128 => {}
            _ => {
                return Err(Error::InvalidGrid(format!(
                    "{cells_per_side}^{dim} cells exceed the addressable index space"
                )))
            }
        }
        Ok(Self { dim, cells_per_side, side })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells_per_side
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    /// Lattice spacing `side / n`.
    pub fn spacing(&self) -> f64 {
        self.side / self.cells_per_side as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn cell_count(&self) -> usize {
        self.cells_per_side.pow(self.dim as u32)
    }

    /// Stride of `axis` in the linear index.
    fn stride(&self, axis: usize) -> usize {
        self.cells_per_side.pow((self.dim - 1 - axis) as u32)
    }

    pub fn linear_index(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.dim);
        multi
            .iter()
            .fold(0, |acc, &m| acc * self.cells_per_side + m % self.cells_per_side)
    }

    pub fn multi_index(&self, mut index: usize) -> SmallVec<[usize; 4]> {
        let n = self.cells_per_side;
        let mut multi: SmallVec<[usize; 4]> = SmallVec::from_elem(0, self.dim);
        for axis in (0..self.dim).rev() {
            multi[axis] = index % n;
            index /= n;
        }
        multi
    }

    /// Coordinate of a cell center along one axis.
    pub fn center_coord(&self, index: usize, axis: usize) -> f64 {
        let m = (index / self.stride(axis)) % self.cells_per_side;
        (m as f64 + 0.5) * self.spacing()
    }

    pub fn center(&self, index: usize) -> Point {
        (0..self.dim).map(|axis| self.center_coord(index, axis)).collect()
    }

    /// Face-midpoint between `index` and its `+axis` neighbor.
    pub fn face_midpoint(&self, index: usize, axis: usize) -> Point {
        let mut p = self.center(index);
        p[axis] += 0.5 * self.spacing();
        p
    }

    /// Neighbor across the face in direction `+axis` (`forward`) or `-axis`.
    pub fn neighbor(&self, index: usize, axis: usize, forward: bool) -> usize {
        let n = self.cells_per_side;
        let stride = self.stride(axis);
        let m = (index / stride) % n;
        let next = if forward { (m + 1) % n } else { (m + n - 1) % n };
        index - m * stride + next * stride
    }

    /// Cell containing a point (coordinates wrapped into the torus).
    pub fn cell_of(&self, p: &[f64]) -> usize {
        let h = self.spacing();
        let n = self.cells_per_side;
        let multi: SmallVec<[usize; 4]> = p
            .iter()
            .map(|&x| {
                let w = x.rem_euclid(self.side);
                ((w / h).floor() as usize).min(n - 1)
            })
            .collect();
        self.linear_index(&multi)
    }

    /// Minimum-image displacement `p - q`.
    pub fn displacement(&self, p: &[f64], q: &[f64]) -> Point {
        let l = self.side;
        p.iter()
            .zip(q)
            .map(|(&a, &b)| {
                let d = (a - b).rem_euclid(l);
                if d > 0.5 * l {
                    d - l
                } else {
                    d
                }
            })
            .collect()
    }

    /// Euclidean length of the minimum-image displacement.
    pub fn distance(&self, p: &[f64], q: &[f64]) -> f64 {
        self.displacement(p, q).iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Convenience wrapper for [`TorusGrid::distance`].
pub fn torus_distance(p: &[f64], q: &[f64], grid: &TorusGrid) -> f64 {
    grid.distance(p, q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub center: Point,
    pub radius: f64,
}

impl BallSpec {
    pub fn new(center: &[f64], radius: f64) -> Self {
        Self { center: center.iter().copied().collect(), radius }
    }

    /// Same radius, center moved to the nearest cell center.
    pub fn snapped(&self, grid: &TorusGrid) -> Self {
        Self { center: grid.center(grid.cell_of(&self.center)), radius: self.radius }
    }

    /// Concentric ball with radius scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { center: self.center.clone(), radius: self.radius * factor }
    }

    pub fn validate(&self, grid: &TorusGrid) -> Result<()> {
        if self.center.len() != grid.dim() {
            return Err(Error::InvalidGrid(format!(
                "ball center has {} coordinates on a {}-dimensional grid",
                self.center.len(),
                grid.dim()
            )));
        }
        if !(self.radius < 0.5 * grid.side()) {
            return Err(Error::WrappingBall { radius: self.radius, side: grid.side() });
        }
        if self.radius < 2.0 * grid.spacing() {
            return Err(Error::UnderResolvedRegion { radius: self.radius, spacing: grid.spacing() });
        }
        Ok(())
    }
}

/// Continuous geometry a region was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// Open ball.
    Ball(BallSpec),
    /// Complement of the open ball.
    Exterior(BallSpec),
}

impl Shape {
    pub fn sphere(&self) -> &BallSpec {
        match self {
            Shape::Ball(b) | Shape::Exterior(b) => b,
        }
    }

    pub fn complement(&self) -> Shape {
        match self {
            Shape::Ball(b) => Shape::Exterior(b.clone()),
            Shape::Exterior(b) => Shape::Ball(b.clone()),
        }
    }

    pub fn contains(&self, grid: &TorusGrid, p: &[f64]) -> bool {
        let ball = self.sphere();
        let inside = grid.distance(p, &ball.center) < ball.radius;
        match self {
            Shape::Ball(_) => inside,
            Shape::Exterior(_) => !inside,
        }
    }

    /// Unsigned distance from `p` to the bounding sphere.
    pub fn boundary_distance(&self, grid: &TorusGrid, p: &[f64]) -> f64 {
        let ball = self.sphere();
        (grid.distance(p, &ball.center) - ball.radius).abs()
    }

    /// Fraction `t` in `(0, 1]` of the segment `p -> p + step` at which it
    /// first meets the bounding sphere, if it does.
    pub fn crossing_fraction(&self, grid: &TorusGrid, p: &[f64], step: &[f64]) -> Option<f64> {
        let ball = self.sphere();
        let v = grid.displacement(p, &ball.center);
        let a: f64 = step.iter().map(|s| s * s).sum();
        let b: f64 = 2.0 * v.iter().zip(step).map(|(x, s)| x * s).sum::<f64>();
        let c: f64 = v.iter().map(|x| x * x).sum::<f64>() - ball.radius * ball.radius;
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)]
            .into_iter()
            .filter(|&t| t > 0.0 && t <= 1.0 + 1e-12)
            .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |m| m.min(t))))
            .map(|t| t.min(1.0))
    }
}

/// A set of cells with its one-cell boundary layers.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    grid: TorusGrid,
    member: Vec<bool>,
    inner_boundary: Vec<usize>,
    outer_boundary: Vec<usize>,
    shape: Option<Shape>,
}

impl RegionMask {
    /// Region from explicit membership flags; boundary layers follow from the
    /// `2d`-neighbor stencil.
    pub fn from_members(grid: &TorusGrid, member: Vec<bool>, shape: Option<Shape>) -> Result<Self> {
        if member.len() != grid.cell_count() {
            return Err(Error::DimensionMismatch {
                expected: grid.cell_count(),
                found: member.len(),
            });
        }
        let mut inner = Vec::new();
        let mut outer = Vec::new();
        for (i, &inside) in member.iter().enumerate() {
            let crosses = (0..grid.dim()).any(|axis| {
                [true, false]
                    .into_iter()
                    .any(|fwd| member[grid.neighbor(i, axis, fwd)] != inside)
            });
            if crosses {
                if inside {
                    inner.push(i);
                } else {
                    outer.push(i);
                }
            }
        }
        Ok(Self { grid: grid.clone(), member, inner_boundary: inner, outer_boundary: outer, shape })
    }

    pub fn from_cells(grid: &TorusGrid, cells: &[usize]) -> Result<Self> {
        let mut member = vec![false; grid.cell_count()];
        for &c in cells {
            if c >= member.len() {
                return Err(Error::DimensionMismatch { expected: member.len(), found: c });
            }
            member[c] = true;
        }
        Self::from_members(grid, member, None)
    }

    pub fn empty(grid: &TorusGrid) -> Self {
        Self::from_members(grid, vec![false; grid.cell_count()], None).expect("sized mask")
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.member[cell]
    }

    pub fn members(&self) -> &[bool] {
        &self.member
    }

    pub fn cells(&self) -> Vec<usize> {
        self.member
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }

    /// Member cells with at least one neighbor outside.
    pub fn inner_boundary(&self) -> &[usize] {
        &self.inner_boundary
    }

    /// Non-member cells with at least one neighbor inside.
    pub fn outer_boundary(&self) -> &[usize] {
        &self.outer_boundary
    }

    pub fn shape(&self) -> Option<&Shape> {
        self.shape.as_ref()
    }

    pub fn is_disjoint(&self, other: &RegionMask) -> bool {
        self.member.iter().zip(&other.member).all(|(&a, &b)| !(a && b))
    }

    /// Whether some member of `self` shares a face with a member of `other`
    /// or the two overlap.
    pub fn touches(&self, other: &RegionMask) -> bool {
        let g = &self.grid;
        (0..g.cell_count()).filter(|&i| self.member[i]).any(|i| {
            other.member[i]
                || (0..g.dim()).any(|axis| {
                    other.member[g.neighbor(i, axis, true)] || other.member[g.neighbor(i, axis, false)]
                })
        })
    }
}

/// Cells whose centers lie strictly inside the ball (minimum image).
pub fn make_ball_mask(grid: &TorusGrid, ball: &BallSpec) -> Result<RegionMask> {
    ball.validate(grid)?;
    let member = (0..grid.cell_count())
        .map(|i| grid.distance(&grid.center(i), &ball.center) < ball.radius)
        .collect();
    RegionMask::from_members(grid, member, Some(Shape::Ball(ball.clone())))
}

pub fn complement_mask(mask: &RegionMask) -> RegionMask {
    let member = mask.member.iter().map(|&m| !m).collect();
    RegionMask::from_members(&mask.grid, member, mask.shape.as_ref().map(Shape::complement))
        .expect("complement keeps the grid size")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid3(n: usize) -> TorusGrid {
        TorusGrid::new(3, n, 1.0).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TorusGrid::new(1, 16, 1.0).is_err());
        assert!(TorusGrid::new(3, 4, 1.0).is_err());
        assert!(TorusGrid::new(3, 16, 0.0).is_err());
        assert!(TorusGrid::new(3, 1 << 12, 1.0).is_err());
    }

    #[test]
    fn index_round_trip_and_neighbors() {
        let g = grid3(8);
        for i in 0..g.cell_count() {
            assert_eq!(g.linear_index(&g.multi_index(i)), i);
            for axis in 0..3 {
                let f = g.neighbor(i, axis, true);
                assert_eq!(g.neighbor(f, axis, false), i);
            }
        }
        assert!((g.spacing() * 8.0 - 1.0).abs() == 0.0);
    }

    #[test]
    fn distance_wraps() {
        let g = grid3(16);
        assert_eq!(g.distance(&[0.3, 0.2, 0.1], &[0.3, 0.2, 0.1]), 0.0);
        let d = g.distance(&[0.05, 0.0, 0.0], &[0.95, 0.0, 0.0]);
        assert!((d - 0.1).abs() < 1e-12);
    }

    #[test]
    fn ball_mask_errors() {
        let g = grid3(32);
        let h = g.spacing();
        let small = BallSpec::new(&[0.5, 0.5, 0.5], 0.99 * h);
        assert!(matches!(make_ball_mask(&g, &small), Err(Error::UnderResolvedRegion { .. })));
        let wrap = BallSpec::new(&[0.5, 0.5, 0.5], 0.6);
        assert!(matches!(make_ball_mask(&g, &wrap), Err(Error::WrappingBall { .. })));
    }

    #[test]
    fn ball_mask_count_matches_brute_force() {
        let g = grid3(32);
        let ball = BallSpec::new(&[0.5, 0.5, 0.5], 0.25);
        let mask = make_ball_mask(&g, &ball).unwrap();
        // independent count over the multi-index cube
        let h = g.spacing();
        let mut brute = 0;
        for i in 0..32 {
            for j in 0..32 {
                for k in 0..32 {
                    let p = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (k as f64 + 0.5) * h];
                    let r2: f64 = p.iter().map(|x| (x - 0.5) * (x - 0.5)).sum();
                    if r2.sqrt() < 0.25 {
                        brute += 1;
                    }
                }
            }
        }
        assert_eq!(mask.count(), brute);
        let continuum = 4.0 / 3.0 * std::f64::consts::PI * 0.25f64.powi(3) / h.powi(3);
        assert!((mask.count() as f64 / continuum - 1.0).abs() < 0.1);
        let comp = complement_mask(&mask);
        assert_eq!(comp.count(), 32 * 32 * 32 - brute);
        assert_eq!(complement_mask(&comp), mask);
    }

    #[test]
    fn boundary_layers_are_consistent() {
        let g = grid3(16);
        let mask = make_ball_mask(&g, &BallSpec::new(&[0.1, 0.9, 0.5], 0.2)).unwrap();
        for &c in mask.inner_boundary() {
            assert!(mask.contains(c));
        }
        for &c in mask.outer_boundary() {
            assert!(!mask.contains(c));
        }
        let inner: std::collections::HashSet<_> = mask.inner_boundary().iter().copied().collect();
        for c in mask.cells() {
            let all_in = (0..3).all(|a| mask.contains(g.neighbor(c, a, true)) && mask.contains(g.neighbor(c, a, false)));
            assert_eq!(all_in, !inner.contains(&c));
        }
    }

    #[test]
    fn empty_complement_is_full() {
        let g = grid3(8);
        let full = complement_mask(&RegionMask::empty(&g));
        assert_eq!(full.count(), 512);
        assert!(full.inner_boundary().is_empty());
    }

    #[test]
    fn crossing_fraction_on_axis() {
        let g = grid3(16);
        let shape = Shape::Ball(BallSpec::new(&[0.5, 0.5, 0.5], 0.2));
        let t = shape.crossing_fraction(&g, &[0.65, 0.5, 0.5], &[0.1, 0.0, 0.0]).unwrap();
        assert!((t - 0.5).abs() < 1e-12);
        assert!(shape.crossing_fraction(&g, &[0.5, 0.5, 0.5], &[0.1, 0.0, 0.0]).is_none());
    }
}
