//! Closed-form periodic coefficient fields `(a, b)` for `L = div(a grad) + b . grad`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Point, TorusGrid};

/// Named coefficient family with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FieldSpec {
    /// `a = I`, `b = 0`.
    Laplace,
    /// Constant diagonal `a`, `b = 0`.
    AnisoDiag { diag: Vec<f64> },
    /// `a = (1 + eps * prod_i sin(2 pi x_i / l)) I`, `b = 0`.
    SmoothVar { eps: f64 },
    /// `a = I`, cellular flow rotating about the axis through the torus center.
    RotationDrift { strength: f64 },
    /// `a = I`, `b = (s sin(2 pi x_2 / l), 0, ...)`.
    ShearDrift { strength: f64 },
    /// `a = I`, `b = grad V` with `V = amp * sum_i cos(2 pi x_i / l)`.
    GradientDrift { amplitude: f64 },
}

pub const FAMILY_NAMES: [&str; 6] =
    ["laplace", "aniso-diag", "smooth-var", "rotation-drift", "shear-drift", "gradient-drift"];

impl FieldSpec {
    pub fn name(&self) -> &'static str {
        match self {
            FieldSpec::Laplace => "laplace",
            FieldSpec::AnisoDiag { .. } => "aniso-diag",
            FieldSpec::SmoothVar { .. } => "smooth-var",
            FieldSpec::RotationDrift { .. } => "rotation-drift",
            FieldSpec::ShearDrift { .. } => "shear-drift",
            FieldSpec::GradientDrift { .. } => "gradient-drift",
        }
    }

    /// Family by tag, with defaults for any parameter not given.
    pub fn from_parts(name: &str, params: &BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let scalar = |key: &str, default: f64| -> Result<f64> {
            match params.get(key) {
                None => Ok(default),
                Some(v) if v.len() == 1 => Ok(v[0]),
                Some(_) => Err(Error::InvalidParameter {
                    family: name.to_string(),
                    message: format!("`{key}` takes one value"),
                }),
            }
        };
        let allowed: &[&str] = match name {
            "laplace" => &[],
            "aniso-diag" => &["diag"],
            "smooth-var" => &["eps"],
            "rotation-drift" | "shear-drift" => &["strength"],
            "gradient-drift" => &["amplitude"],
            other => return Err(Error::UnknownFamily(other.to_string())),
        };
        if let Some(key) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::InvalidParameter {
                family: name.to_string(),
                message: format!("unknown parameter `{key}`"),
            });
        }
        Ok(match name {
            "laplace" => FieldSpec::Laplace,
            "aniso-diag" => FieldSpec::AnisoDiag {
                diag: params.get("diag").cloned().unwrap_or_else(|| vec![2.0, 1.0, 0.5]),
            },
            "smooth-var" => FieldSpec::SmoothVar { eps: scalar("eps", 0.5)? },
            "rotation-drift" => FieldSpec::RotationDrift { strength: scalar("strength", 2.0)? },
            "shear-drift" => FieldSpec::ShearDrift { strength: scalar("strength", 2.0)? },
            _ => FieldSpec::GradientDrift { amplitude: scalar("amplitude", 0.25)? },
        })
    }

    pub fn default_for(name: &str) -> Result<Self> {
        Self::from_parts(name, &BTreeMap::new())
    }
}

/// A coefficient field bound to a torus geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    spec: FieldSpec,
    dim: usize,
    side: f64,
    lambda: f64,
}

impl CoefficientField {
    pub fn new(spec: FieldSpec, grid: &TorusGrid) -> Result<Self> {
        let dim = grid.dim();
        let bad = |message: String| Error::InvalidParameter { family: spec.name().to_string(), message };
        let lambda = match &spec {
            FieldSpec::Laplace => 1.0,
            FieldSpec::AnisoDiag { diag } => {
                if diag.len() != dim {
                    return Err(bad(format!("diag has {} entries, grid has dimension {dim}", diag.len())));
                }
                let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
                if !(min > 0.0) || diag.iter().any(|v| !v.is_finite()) {
                    return Err(Error::EllipticityViolated { observed: min, declared: 0.0 });
                }
                min
            }
            FieldSpec::SmoothVar { eps } => {
                if !eps.is_finite() || *eps < 0.0 {
                    return Err(bad(format!("eps = {eps} must be nonnegative")));
                }
                if *eps >= 1.0 {
                    return Err(Error::EllipticityViolated { observed: 1.0 - eps, declared: 0.0 });
                }
                1.0 - eps
            }
            FieldSpec::RotationDrift { strength } | FieldSpec::ShearDrift { strength } => {
                if !strength.is_finite() {
                    return Err(bad("strength must be finite".into()));
                }
                1.0
            }
            FieldSpec::GradientDrift { amplitude } => {
                if !amplitude.is_finite() {
                    return Err(bad("amplitude must be finite".into()));
                }
                1.0
            }
        };
        Ok(Self { spec, dim, side: grid.side(), lambda })
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Declared ellipticity lower bound.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn wavenumber(&self) -> f64 {
        2.0 * PI / self.side
    }

    /// All builtin families have diagonal `a`.
    pub fn is_diagonal(&self) -> bool {
        true
    }

    /// Scalar prefactor for families with `a = alpha(x) I`.
    fn smooth_factor(&self, x: &[f64]) -> f64 {
        match self.spec {
            FieldSpec::SmoothVar { eps } => {
                let k = self.wavenumber();
                1.0 + eps * x.iter().map(|xi| (k * xi).sin()).product::<f64>()
            }
            _ => 1.0,
        }
    }

    /// Diagonal entry `a_ii(x)`.
    pub fn diffusion_diag(&self, x: &[f64], axis: usize) -> f64 {
        match &self.spec {
            FieldSpec::AnisoDiag { diag } => diag[axis],
            _ => self.smooth_factor(x),
        }
    }

    /// Full `a(x)`, row-major `d x d`.
    pub fn diffusion(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            a[i * d + i] = self.diffusion_diag(x, i);
        }
        a
    }

    /// `sum_j d_j a_ij(x)`, the drift correction of the divergence-form generator.
    pub fn diffusion_divergence(&self, x: &[f64]) -> Point {
        let mut out = Point::from_elem(0.0, self.dim);
        if let FieldSpec::SmoothVar { eps } = self.spec {
            let k = self.wavenumber();
            for (i, oi) in out.iter_mut().enumerate() {
                let others: f64 = x
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, xj)| (k * xj).sin())
                    .product();
                *oi = eps * k * (k * x[i]).cos() * others;
            }
        }
        out
    }

    pub fn drift(&self, x: &[f64]) -> Point {
        let mut b = Point::from_elem(0.0, self.dim);
        self.drift_into(x, &mut b);
        b
    }

    pub fn drift_into(&self, x: &[f64], b: &mut [f64]) {
        let k = self.wavenumber();
        b.iter_mut().for_each(|v| *v = 0.0);
        match self.spec {
            FieldSpec::RotationDrift { strength } => {
                b[0] = strength * (k * x[0]).cos() * (k * x[1]).sin();
                b[1] = -strength * (k * x[0]).sin() * (k * x[1]).cos();
            }
            FieldSpec::ShearDrift { strength } => {
                b[0] = strength * (k * x[1]).sin();
            }
            FieldSpec::GradientDrift { amplitude } => {
                for (bi, xi) in b.iter_mut().zip(x) {
                    *bi = -amplitude * k * (k * xi).sin();
                }
            }
            _ => {}
        }
    }

    /// One drift component.
    pub fn drift_component(&self, x: &[f64], axis: usize) -> f64 {
        let k = self.wavenumber();
        match self.spec {
            FieldSpec::RotationDrift { strength } => match axis {
                0 => strength * (k * x[0]).cos() * (k * x[1]).sin(),
                1 => -strength * (k * x[0]).sin() * (k * x[1]).cos(),
                _ => 0.0,
            },
            FieldSpec::ShearDrift { strength } if axis == 0 => strength * (k * x[1]).sin(),
            FieldSpec::GradientDrift { amplitude } => -amplitude * k * (k * x[axis]).sin(),
            _ => 0.0,
        }
    }

    pub fn has_drift(&self) -> bool {
        match self.spec {
            FieldSpec::RotationDrift { strength } | FieldSpec::ShearDrift { strength } => strength != 0.0,
            FieldSpec::GradientDrift { amplitude } => amplitude != 0.0,
            _ => false,
        }
    }

    /// Short provenance string, e.g. `rotation-drift(strength=2)`.
    pub fn describe(&self) -> String {
        match &self.spec {
            FieldSpec::Laplace => "laplace".into(),
            FieldSpec::AnisoDiag { diag } => format!("aniso-diag(diag={diag:?})"),
            FieldSpec::SmoothVar { eps } => format!("smooth-var(eps={eps})"),
            FieldSpec::RotationDrift { strength } => format!("rotation-drift(strength={strength})"),
            FieldSpec::ShearDrift { strength } => format!("shear-drift(strength={strength})"),
            FieldSpec::GradientDrift { amplitude } => format!("gradient-drift(amplitude={amplitude})"),
        }
    }
}

/// Instantiate a builtin family by tag.
pub fn builtin_field(
    name: &str,
    params: &BTreeMap<String, Vec<f64>>,
    grid: &TorusGrid,
) -> Result<CoefficientField> {
    CoefficientField::new(FieldSpec::from_parts(name, params)?, grid)
}

/// Minimum of `v . a(x) v` over `samples` random points, each probed along
/// a random unit direction and along every coordinate axis.
pub fn ellipticity_check(field: &CoefficientField, grid: &TorusGrid, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let d = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min = f64::INFINITY;
    let quad = |a: &[f64], v: &[f64]| -> f64 {
        (0..d).map(|i| v[i] * (0..d).map(|j| a[i * d + j] * v[j]).sum::<f64>()).sum()
    };
    for _ in 0..samples {
        let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * grid.side()).collect();
        let a = field.diffusion(&x);
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|c| *c /= norm);
            min = min.min(quad(&a, &v));
        }
        for axis in 0..d {
            min = min.min(a[axis * d + axis]);
        }
    }
    if min < field.lambda() - 1e-12 {
        return Err(Error::EllipticityViolated { observed: min, declared: field.lambda() });
    }
    Ok(min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TorusGrid {
        TorusGrid::new(3, 16, 1.0).unwrap()
    }

    #[test]
    fn laplace_is_identity() {
        let f = CoefficientField::new(FieldSpec::Laplace, &grid()).unwrap();
        assert_eq!(f.diffusion(&[0.1, 0.2, 0.3]), vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(f.drift(&[0.1, 0.2, 0.3]).as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(f.lambda(), 1.0);
        assert!((ellipticity_check(&f, &grid(), 50, 1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aniso_minimum_is_smallest_entry() {
        let f = CoefficientField::new(FieldSpec::AnisoDiag { diag: vec![2.0, 1.0, 0.5] }, &grid()).unwrap();
        assert!((ellipticity_check(&f, &grid(), 10, 3).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn smooth_var_bounds() {
        let f = CoefficientField::new(FieldSpec::SmoothVar { eps: 0.5 }, &grid()).unwrap();
        assert!(ellipticity_check(&f, &grid(), 500, 7).unwrap() >= 0.5);
        let err = CoefficientField::new(FieldSpec::SmoothVar { eps: 1.5 }, &grid()).unwrap_err();
        assert!(matches!(err, Error::EllipticityViolated { .. }));
    }

    #[test]
    fn unknown_family_and_parameter() {
        assert!(matches!(FieldSpec::default_for("heat"), Err(Error::UnknownFamily(_))));
        let mut p = BTreeMap::new();
        p.insert("eps".to_string(), vec![0.1]);
        assert!(FieldSpec::from_parts("laplace", &p).is_err());
        let spec = FieldSpec::from_parts("smooth-var", &p).unwrap();
        assert_eq!(spec, FieldSpec::SmoothVar { eps: 0.1 });
    }

    fn fd_divergence(f: &CoefficientField, x: &[f64], eps: f64) -> f64 {
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += eps;
                xm[i] -= eps;
                (f.drift_component(&xp, i) - f.drift_component(&xm, i)) / (2.0 * eps)
            })
            .sum()
    }

    #[test]
    fn divergence_free_drifts() {
        let g = grid();
        for spec in [FieldSpec::RotationDrift { strength: 2.0 }, FieldSpec::ShearDrift { strength: 2.0 }] {
            let f = CoefficientField::new(spec, &g).unwrap();
            for x in [[0.5, 0.5, 0.5], [0.13, 0.71, 0.4], [0.9, 0.05, 0.33]] {
                assert!(fd_divergence(&f, &x, 1e-5).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn gradient_drift_is_gradient_of_potential() {
        let f = CoefficientField::new(FieldSpec::GradientDrift { amplitude: 0.25 }, &grid()).unwrap();
        let v = |x: &[f64]| 0.25 * x.iter().map(|xi| (2.0 * PI * xi).cos()).sum::<f64>();
        let x = [0.3, 0.7, 0.15];
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            let fd = (v(&xp) - v(&xm)) / 2e-6;
            assert!((fd - f.drift_component(&x, i)).abs() < 1e-7);
        }
    }

    #[test]
    fn divergence_correction_matches_finite_differences() {
        let f = CoefficientField::new(FieldSpec::SmoothVar { eps: 0.5 }, &grid()).unwrap();
        let x = [0.21, 0.64, 0.83];
        let analytic = f.diffusion_divergence(&x);
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            let fd = (f.diffusion_diag(&xp, i) - f.diffusion_diag(&xm, i)) / 2e-6;
            assert!((fd - analytic[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn periodic_components() {
        let g = grid();
        for name in FAMILY_NAMES {
            let f = CoefficientField::new(FieldSpec::default_for(name).unwrap(), &g).unwrap();
            let x = [0.37, 0.11, 0.92];
            for axis in 0..3 {
                let mut y = x;
                y[axis] += 1.0;
                for i in 0..3 {
                    assert!((f.diffusion_diag(&x, i) - f.diffusion_diag(&y, i)).abs() < 1e-12);
                    assert!((f.drift_component(&x, i) - f.drift_component(&y, i)).abs() < 1e-12);
                }
            }
        }
    }
}
