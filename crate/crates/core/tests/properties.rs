use potlab_core::potential::{capacity, prepare_generator, BoundaryMode};
use potlab_core::*;
use proptest::prelude::*;

fn brute_distance(p: &[f64], q: &[f64], side: f64) -> f64 {
    let d = p.len();
    let mut best = f64::INFINITY;
    for code in 0..3usize.pow(d as u32) {
        let mut c = code;
        let mut s = 0.0;
        for k in 0..d {
            let shift = (c % 3) as f64 - 1.0;
            c /= 3;
            let delta = p[k] - q[k] + shift * side;
            s += delta * delta;
        }
        best = best.min(s.sqrt());
    }
    best
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, d)
}

proptest! {
    #[test]
    fn torus_distance_is_minimum_image(p in point(3), q in point(3), r in point(3)) {
        let g = TorusGrid::new(3, 8, 1.0).unwrap();
        let d = torus_distance(&p, &q, &g);
        prop_assert!((d - brute_distance(&p, &q, 1.0)).abs() < 1e-12);
        prop_assert!((d - torus_distance(&q, &p, &g)).abs() < 1e-15);
        prop_assert!(d <= 3f64.sqrt() / 2.0 + 1e-12);
        prop_assert!(d <= torus_distance(&p, &r, &g) + torus_distance(&r, &q, &g) + 1e-12);
    }

    #[test]
    fn ball_masks_have_consistent_layers(c in point(3), radius in 0.13..0.45f64) {
        let g = TorusGrid::new(3, 16, 1.0).unwrap();
        let mask = make_ball_mask(&g, &BallSpec::new(&c, radius)).unwrap();
        let inner: std::collections::HashSet<_> = mask.inner_boundary().iter().copied().collect();
        for i in 0..g.cell_count() {
            prop_assert_eq!(mask.contains(i), g.distance(&g.center(i), &c) < radius);
            let neighbors_inside = (0..3).all(|k| mask.contains(g.neighbor(i, k, true)) && mask.contains(g.neighbor(i, k, false)));
            if mask.contains(i) {
                prop_assert_eq!(inner.contains(&i), !neighbors_inside);
            }
        }
        prop_assert!(mask.outer_boundary().iter().all(|&i| !mask.contains(i)));
        prop_assert_eq!(complement_mask(&complement_mask(&mask)), mask);
    }

    #[test]
    fn matvec_matches_dense(entries in prop::collection::vec((0usize..40, 0usize..40, -5.0..5.0f64), 0..300), x in prop::collection::vec(-1.0..1.0f64, 40)) {
        let m = SparseMatrix::from_triplets(40, 40, &entries).unwrap();
        let dense = m.to_dense();
        let y = m.mul_vec(&x);
        for i in 0..40 {
            let mut s = 0.0;
            for j in 0..40 {
                if dense[i][j] != 0.0 {
                    s += dense[i][j] * x[j];
                }
            }
            prop_assert_eq!(y[i], s);
        }
        prop_assert_eq!(linalg::transpose(&linalg::transpose(&m)), m);
    }

    #[test]
    fn generators_conserve_mass(strength in -4.0..4.0f64, eps in 0.0..0.9f64, amp in -0.5..0.5f64) {
        let g = TorusGrid::new(3, 8, 1.0).unwrap();
        for spec in [
            FieldSpec::RotationDrift { strength },
            FieldSpec::ShearDrift { strength },
            FieldSpec::SmoothVar { eps },
            FieldSpec::GradientDrift { amplitude: amp },
        ] {
            let f = CoefficientField::new(spec, &g).unwrap();
            let m = assemble_generator(&f, &g, Scheme::Upwind).unwrap();
            let scale = m.diagonal_scale();
            prop_assert!(m.matrix().row_sums().iter().all(|s| s.abs() <= 1e-12 * scale));
            prop_assert!(ellipticity_check(&f, &g, 20, 3).is_ok());
        }
    }

    #[test]
    fn extensions_are_probabilities_and_measures_nonnegative(strength in -3.0..3.0f64, shift in 0.0..0.2f64) {
        let g = TorusGrid::new(3, 12, 1.0).unwrap();
        let f = CoefficientField::new(FieldSpec::RotationDrift { strength }, &g).unwrap();
        let m = assemble_generator(&f, &g, Scheme::Upwind).unwrap();
        let pi = invariant_density(&m, &StationaryOptions::default()).unwrap();
        let c = BallSpec::new(&[0.4 + shift, 0.5, 0.5], 0.18);
        let a = make_ball_mask(&g, &c).unwrap();
        let b = complement_mask(&make_ball_mask(&g, &c.scaled(2.0)).unwrap());
        let fitted = prepare_generator(&m, &pi, &[&a, &b], BoundaryMode::Fitted);
        let cap = capacity(&fitted, &pi, &a, &b, &SolverOptions::default()).unwrap();
        prop_assert!(cap.harmonic.values().iter().all(|&h| (-1e-9..=1.0 + 1e-9).contains(&h)));
        prop_assert!(cap.equilibrium.weights().iter().all(|&w| w >= 0.0));
        prop_assert!(cap.value() > 0.0);
    }
}

#[test]
fn solver_is_bit_reproducible() {
    let g = TorusGrid::new(3, 12, 1.0).unwrap();
    let f = CoefficientField::new(FieldSpec::ShearDrift { strength: 2.0 }, &g).unwrap();
    let m = assemble_generator(&f, &g, Scheme::Upwind).unwrap();
    let mask = make_ball_mask(&g, &BallSpec::new(&[0.5, 0.5, 0.5], 0.3)).unwrap();
    let k = killed_submatrix(&m, &mask).unwrap();
    let rhs = vec![-1.0; k.len()];
    for method in [linalg::KrylovMethod::Gmres, linalg::KrylovMethod::Bicgstab] {
        let opts = SolverOptions { method, ..Default::default() };
        let (a, ra) = solve(k.matrix(), &rhs, &opts).unwrap();
        let (b, rb) = solve(k.matrix(), &rhs, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.iterations, rb.iterations);
    }
}
