//! Euler–Maruyama simulation of the diffusion generated by
//! `div(a grad) + b . grad`, for exit times and hitting probabilities that do
//! not touch the lattice solver.
//!
//! The SDE has drift `b + div a` and diffusion `sqrt(2 a)`. Exits are detected
//! on the continuous region geometry. Between steps that stay inside, a
//! Brownian-bridge test estimates the chance that the path crossed the sphere
//! and came back, which removes the leading `O(sqrt(dt))` exit bias.
//!
//! Trajectory `i` draws from ChaCha8 stream `i` of the configured seed, and
//! results are reduced in trajectory order, so estimates do not depend on
//! thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientField;
use crate::error::{Error, Result};
use crate::grid::{Point, Shape, TorusGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    pub dt: f64,
    pub max_steps: u64,
    pub trajectories: usize,
    pub seed: u64,
    /// Brownian-bridge crossing test between steps.
    pub bridge_correction: bool,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self { dt: 1e-5, max_steps: 10_000_000, trajectories: 100_000, seed: 1, bridge_correction: true }
    }
}

impl SdeConfig {
    /// `dt = h^2 / 10` for the comparison grid spacing `h`.
    pub fn for_spacing(h: f64) -> Self {
        Self { dt: h * h / 10.0, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.max_steps == 0 || self.trajectories == 0 {
            return Err(Error::InvalidArgument("dt, max_steps and trajectories must be positive".into()));
        }
        Ok(())
    }
}

/// Censored fraction above which an estimate is flagged unreliable.
pub const CENSOR_LIMIT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trajectories: usize,
    pub censored_fraction: f64,
    pub reliable: bool,
    pub provenance: String,
}

impl McEstimate {
    fn from_samples(samples: &[Option<f64>]) -> Self {
        let done: Vec<f64> = samples.iter().flatten().copied().collect();
        let n = done.len();
        let mean = if n > 0 { done.iter().sum::<f64>() / n as f64 } else { f64::NAN };
        let var = if n > 1 {
            done.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let censored_fraction = (samples.len() - n) as f64 / samples.len() as f64;
        Self {
            mean,
            std_error: (var / n.max(1) as f64).sqrt(),
            trajectories: samples.len(),
            censored_fraction,
            reliable: censored_fraction <= CENSOR_LIMIT && n > 0,
            provenance: "mc".into(),
        }
    }

    /// `|mean - reference|` in units of the standard error.
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.mean - reference).abs() / self.std_error
    }
}

struct Stepper<'a> {
    field: &'a CoefficientField,
    grid: &'a TorusGrid,
    dt: f64,
    sqrt_dt: f64,
    bridge: bool,
}

impl Stepper<'_> {
    fn step(&self, x: &mut Point, rng: &mut ChaCha8Rng) {
        let noise: Point = (0..x.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        self.step_with(x, &noise);
    }

    /// One step driven by standard normal increments `noise`.
    fn step_with(&self, x: &mut Point, noise: &[f64]) {
        let b = self.field.drift(x);
        let div = self.field.diffusion_divergence(x);
        for k in 0..x.len() {
            let sigma = (2.0 * self.field.diffusion_diag(x, k)).sqrt();
            x[k] += (b[k] + div[k]) * self.dt + sigma * self.sqrt_dt * noise[k];
        }
        let side = self.grid.side();
        for c in x.iter_mut() {
            *c = c.rem_euclid(side);
        }
    }

    /// Probability that a bridge between two points on the same side of the
    /// sphere touched it during the step.
    fn crossing_probability(&self, shape: &Shape, from: &[f64], to: &[f64]) -> f64 {
        if !self.bridge {
            return 0.0;
        }
        let center = &shape.sphere().center;
        let v = self.grid.displacement(from, center);
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let a = self.field.diffusion(from);
        let d = v.len();
        let mut ana = 0.0;
        for i in 0..d {
            for j in 0..d {
                ana += v[i] * a[i * d + j] * v[j];
            }
        }
        let sigma2 = 2.0 * ana / (norm * norm);
        let d0 = shape.boundary_distance(self.grid, from);
        let d1 = shape.boundary_distance(self.grid, to);
        (-2.0 * d0 * d1 / (sigma2 * self.dt)).exp()
    }

    /// Whether the move `from -> to` ends in, or bridges into, `target`.
    fn enters(&self, target: &Shape, from: &[f64], to: &[f64], rng: &mut ChaCha8Rng) -> bool {
        if target.contains(self.grid, to) {
            return true;
        }
        let p = self.crossing_probability(target, from, to);
        p > 0.0 && rng.random::<f64>() < p
    }
}

fn rng_for(seed: u64, trajectory: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trajectory as u64);
    rng
}

fn check_point(grid: &TorusGrid, field: &CoefficientField, x: &[f64]) -> Result<()> {
    if x.len() != grid.dim() || field.dim() != grid.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), found: x.len() });
    }
    Ok(())
}

/// Mean first exit time from `domain` started at `x`.
pub fn simulate_exit_time(
    field: &CoefficientField,
    grid: &TorusGrid,
    domain: &Shape,
    x: &[f64],
    cfg: &SdeConfig,
) -> Result<McEstimate> {
    cfg.validate()?;
    check_point(grid, field, x)?;
    let start: Point = x.iter().copied().collect();
    if !domain.contains(grid, &start) {
        return Ok(McEstimate::from_samples(&vec![Some(0.0); cfg.trajectories]));
    }
    let outside = domain.complement();
    let stepper = Stepper { field, grid, dt: cfg.dt, sqrt_dt: cfg.dt.sqrt(), bridge: cfg.bridge_correction };
    let samples: Vec<Option<f64>> = (0..cfg.trajectories)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(cfg.seed, i);
            let mut pos = start.clone();
            let mut prev = start.clone();
            for steps in 1..=cfg.max_steps {
                prev.clone_from(&pos);
                stepper.step(&mut pos, &mut rng);
                if stepper.enters(&outside, &prev, &pos, &mut rng) {
                    return Some(steps as f64 * cfg.dt);
                }
            }
            None
        })
        .collect();
    Ok(McEstimate::from_samples(&samples))
}

/// Exit-time estimates at `dt` and `dt / 2` on coupled paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementEstimate {
    pub coarse: McEstimate,
    pub fine: McEstimate,
    /// Mean of the per-path differences `coarse - fine`.
    pub difference: f64,
    pub difference_std_error: f64,
}

impl RefinementEstimate {
    /// Step-size effect in units of the coarse standard error.
    pub fn shift_in_std_errors(&self) -> f64 {
        self.difference.abs() / self.coarse.std_error
    }
}

/// Runs each trajectory twice, at `cfg.dt` and at `cfg.dt / 2`, with the
/// coarse Brownian increment equal to the sum of the two fine ones. The
/// sampling noise then mostly cancels in the difference, which isolates the
/// time-step effect.
pub fn exit_time_refinement(
    field: &CoefficientField,
    grid: &TorusGrid,
    domain: &Shape,
    x: &[f64],
    cfg: &SdeConfig,
) -> Result<RefinementEstimate> {
    cfg.validate()?;
    check_point(grid, field, x)?;
    let start: Point = x.iter().copied().collect();
    if !domain.contains(grid, &start) {
        return Err(Error::InvalidArgument("start point must lie inside the domain".into()));
    }
    let outside = domain.complement();
    let d = grid.dim();
    let coarse = Stepper { field, grid, dt: cfg.dt, sqrt_dt: cfg.dt.sqrt(), bridge: cfg.bridge_correction };
    let half = cfg.dt / 2.0;
    let fine = Stepper { field, grid, dt: half, sqrt_dt: half.sqrt(), bridge: cfg.bridge_correction };
    let pairs: Vec<(Option<f64>, Option<f64>)> = (0..cfg.trajectories)
        .into_par_iter()
        .map(|i| {
            let mut noise_rng = rng_for(cfg.seed, i);
            // bridge tests get their own streams so both paths see the same increments
            let mut coarse_rng = rng_for(cfg.seed ^ 0x5a5a_5a5a, i);
            let mut fine_rng = rng_for(cfg.seed ^ 0xa5a5_a5a5, i);
            let (mut pc, mut pf) = (start.clone(), start.clone());
            let mut prev = start.clone();
            let (mut tc, mut tf) = (None, None);
            let mut n1 = vec![0.0; d];
            let mut n2 = vec![0.0; d];
            let mut sum = vec![0.0; d];
            for steps in 1..=cfg.max_steps {
                for k in 0..d {
                    n1[k] = noise_rng.sample(StandardNormal);
                    n2[k] = noise_rng.sample(StandardNormal);
                    sum[k] = (n1[k] + n2[k]) / std::f64::consts::SQRT_2;
                }
                if tc.is_none() {
                    prev.clone_from(&pc);
                    coarse.step_with(&mut pc, &sum);
                    if coarse.enters(&outside, &prev, &pc, &mut coarse_rng) {
                        tc = Some(steps as f64 * cfg.dt);
                    }
                }
                if tf.is_none() {
                    for (j, noise) in [&n1, &n2].into_iter().enumerate() {
                        prev.clone_from(&pf);
                        fine.step_with(&mut pf, noise);
                        if fine.enters(&outside, &prev, &pf, &mut fine_rng) {
                            tf = Some(((2 * steps - 1) as usize + j) as f64 * half);
                            break;
                        }
                    }
                }
                if tc.is_some() && tf.is_some() {
                    break;
                }
            }
            (tc, tf)
        })
        .collect();
    let coarse_samples: Vec<Option<f64>> = pairs.iter().map(|p| p.0).collect();
    let fine_samples: Vec<Option<f64>> = pairs.iter().map(|p| p.1).collect();
    let diffs: Vec<Option<f64>> = pairs.iter().map(|&(c, f)| Some(c? - f?)).collect();
    let diff = McEstimate::from_samples(&diffs);
    Ok(RefinementEstimate {
        coarse: McEstimate::from_samples(&coarse_samples),
        fine: McEstimate::from_samples(&fine_samples),
        difference: diff.mean,
        difference_std_error: diff.std_error,
    })
}

/// Probability of reaching `a` before `b` from `x`.
pub fn simulate_hitting_probability(
    field: &CoefficientField,
    grid: &TorusGrid,
    a: &Shape,
    b: &Shape,
    x: &[f64],
    cfg: &SdeConfig,
) -> Result<McEstimate> {
    cfg.validate()?;
    check_point(grid, field, x)?;
    let start: Point = x.iter().copied().collect();
    if a.contains(grid, &start) {
        return Ok(McEstimate::from_samples(&vec![Some(1.0); cfg.trajectories]));
    }
    if b.contains(grid, &start) {
        return Ok(McEstimate::from_samples(&vec![Some(0.0); cfg.trajectories]));
    }
    let stepper = Stepper { field, grid, dt: cfg.dt, sqrt_dt: cfg.dt.sqrt(), bridge: cfg.bridge_correction };
    let samples: Vec<Option<f64>> = (0..cfg.trajectories)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(cfg.seed, i);
            let mut pos = start.clone();
            let mut prev = start.clone();
            for _ in 0..cfg.max_steps {
                prev.clone_from(&pos);
                stepper.step(&mut pos, &mut rng);
                if stepper.enters(a, &prev, &pos, &mut rng) {
                    return Some(1.0);
                }
                if stepper.enters(b, &prev, &pos, &mut rng) {
                    return Some(0.0);
                }
            }
            None
        })
        .collect();
    Ok(McEstimate::from_samples(&samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::FieldSpec;
    use crate::grid::BallSpec;

    fn setup() -> (TorusGrid, CoefficientField) {
        let g = TorusGrid::new(3, 32, 1.0).unwrap();
        let f = CoefficientField::new(FieldSpec::Laplace, &g).unwrap();
        (g, f)
    }

    #[test]
    fn start_outside_exits_immediately() {
        let (g, f) = setup();
        let d = Shape::Ball(BallSpec::new(&[0.5, 0.5, 0.5], 0.25));
        let cfg = SdeConfig { trajectories: 10, ..SdeConfig::default() };
        let est = simulate_exit_time(&f, &g, &d, &[0.75, 0.5, 0.5], &cfg).unwrap();
        assert_eq!(est.mean, 0.0);
    }

    #[test]
    fn start_near_boundary_exits_within_a_few_steps() {
        let (g, f) = setup();
        let d = Shape::Ball(BallSpec::new(&[0.5, 0.5, 0.5], 0.25));
        let cfg = SdeConfig { trajectories: 200, ..SdeConfig::default() };
        let est = simulate_exit_time(&f, &g, &d, &[0.75 - 1e-9, 0.5, 0.5], &cfg).unwrap();
        assert!(est.mean < 5.0 * cfg.dt, "mean {}", est.mean);
    }

    #[test]
    fn start_in_target_hits_it() {
        let (g, f) = setup();
        let a = Shape::Ball(BallSpec::new(&[0.5, 0.5, 0.5], 0.1));
        let b = Shape::Exterior(BallSpec::new(&[0.5, 0.5, 0.5], 0.2));
        let cfg = SdeConfig { trajectories: 10, ..SdeConfig::default() };
        let est = simulate_hitting_probability(&f, &g, &a, &b, &[0.52, 0.5, 0.5], &cfg).unwrap();
        assert_eq!(est.mean, 1.0);
    }

    #[test]
    fn reproducible_for_a_seed() {
        let (g, f) = setup();
        let d = Shape::Ball(BallSpec::new(&[0.5, 0.5, 0.5], 0.1));
        let cfg = SdeConfig { trajectories: 300, dt: 1e-4, ..SdeConfig::default() };
        let a = simulate_exit_time(&f, &g, &d, &[0.5, 0.5, 0.5], &cfg).unwrap();
        let b = simulate_exit_time(&f, &g, &d, &[0.5, 0.5, 0.5], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn coupled_refinement_shares_noise() {
        let (g, f) = setup();
        let d = Shape::Ball(BallSpec::new(&[0.5, 0.5, 0.5], 0.1));
        let cfg = SdeConfig { trajectories: 400, dt: 1e-4, ..SdeConfig::default() };
        let r = exit_time_refinement(&f, &g, &d, &[0.5, 0.5, 0.5], &cfg).unwrap();
        assert!(r.difference_std_error < 0.5 * r.coarse.std_error);
        assert_eq!(r.coarse.censored_fraction, 0.0);
    }

    #[test]
    fn censoring_is_flagged() {
        let (g, f) = setup();
        let d = Shape::Ball(BallSpec::new(&[0.5, 0.5, 0.5], 0.25));
        let cfg = SdeConfig { trajectories: 20, max_steps: 3, ..SdeConfig::default() };
        let est = simulate_exit_time(&f, &g, &d, &[0.5, 0.5, 0.5], &cfg).unwrap();
        assert_eq!(est.censored_fraction, 1.0);
        assert!(!est.reliable);
    }
}
