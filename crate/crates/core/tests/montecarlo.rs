use potlab_core::montecarlo::*;
use potlab_core::*;

#[test]
fn halving_the_step_moves_the_exit_time_less_than_one_std_error() {
    let g = TorusGrid::new(3, 64, 1.0).unwrap();
    let f = CoefficientField::new(FieldSpec::Laplace, &g).unwrap();
    let ball = BallSpec::new(&[0.5, 0.5, 0.5], 0.25);
    let cfg = SdeConfig::for_spacing(g.spacing());
    let r = exit_time_refinement(&f, &g, &Shape::Ball(ball.clone()), &ball.center, &cfg).unwrap();
    assert!(r.coarse.reliable && r.fine.reliable);
    assert!(r.shift_in_std_errors() < 1.0, "{r:?}");
    assert!(r.coarse.z_score(0.0625 / 6.0) < 3.0, "{r:?}");
}

#[test]
fn small_ball_exit_time_matches_closed_form() {
    let g = TorusGrid::new(3, 32, 1.0).unwrap();
    let f = CoefficientField::new(FieldSpec::Laplace, &g).unwrap();
    let ball = BallSpec::new(&[0.3, 0.6, 0.5], 0.1);
    let cfg = SdeConfig { trajectories: 20_000, dt: 1e-5, seed: 4, ..SdeConfig::default() };
    let est = simulate_exit_time(&f, &g, &Shape::Ball(ball.clone()), &ball.center, &cfg).unwrap();
    assert!(est.z_score(0.01 / 6.0) < 3.0, "{est:?}");
}

#[test]
fn hitting_probability_matches_condenser_formula() {
    let g = TorusGrid::new(3, 32, 1.0).unwrap();
    let f = CoefficientField::new(FieldSpec::Laplace, &g).unwrap();
    let inner = BallSpec::new(&[0.5, 0.5, 0.5], 0.1);
    let outer = inner.scaled(2.0);
    let cfg = SdeConfig { trajectories: 20_000, dt: 2e-5, seed: 5, ..SdeConfig::default() };
    let x = [0.5, 0.65, 0.5];
    let est = simulate_hitting_probability(&f, &g, &Shape::Ball(inner), &Shape::Exterior(outer), &x, &cfg).unwrap();
    let exact = (1.0 / 0.15 - 5.0) / 5.0;
    assert!(est.z_score(exact) < 3.0, "{est:?}");
}
