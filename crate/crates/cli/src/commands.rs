use potlab_core::grid::Shape;
use potlab_core::potential::{
    annulus_extrema_check, capacity_identity_check, duality_check, exit_time_identity_check, green_capacity_check,
    killed_on, maximum_principle_check, prepare_generator, representation_check, IdentityReport,
};
use potlab_core::{
    assemble_generator, capacity, check_c, check_e, check_g, check_harnack, check_sandwich, complement_mask,
    conditions::telescoping_check, dual_generator, equivalence_suite, exit_time, green_column, harmonic_extension,
    invariant_density, make_ball_mask, simulate_exit_time, simulate_hitting_probability, CoefficientField,
    ConditionReport, DualConstruction, Generator, InvariantDensity, McEstimate, TorusGrid,
};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::report::Sink;
use crate::{CliError, Command, ConditionArg};

struct Setup {
    grid: TorusGrid,
    field: CoefficientField,
    generator: Generator,
    pi: InvariantDensity,
}

impl Setup {
    fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        let grid = cfg.grid()?;
        let field = cfg.field(&grid)?;
        let generator = assemble_generator(&field, &grid, cfg.scheme.discretization)?;
        let pi = invariant_density(&generator, &cfg.stationary_options())?;
        Ok(Self { grid, field, generator, pi })
    }

    fn pick(&self, cfg: &RunConfig, dual: bool) -> Result<Generator, CliError> {
        Ok(if dual { dual_generator(&self.generator, &self.pi, cfg.scheme.dual)? } else { self.generator.clone() })
    }
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

pub(crate) fn dispatch(command: &Command, cfg: &RunConfig) -> Result<bool, CliError> {
    match command {
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(true)
        }
        Command::Invariant => invariant(cfg),
        Command::ExitTime { dual } => exit(cfg, *dual),
        Command::Green { dual } => green(cfg, *dual),
        Command::Capacity { dual } => cap(cfg, *dual),
        Command::Harnack => condition(cfg, ConditionArg::Harnack, false),
        Command::Check { condition: c, dual } => condition(cfg, *c, *dual),
        Command::Verify => verify(cfg),
        Command::Mc => mc(cfg),
        Command::Report => report(cfg),
    }
}

fn invariant(cfg: &RunConfig) -> Result<bool, CliError> {
    let sink = Sink::new(cfg)?;
    let s = Setup::new(cfg)?;
    let mu = s.pi.densities();
    let (lo, hi) = mu.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    println!(
        "invariant density: {} iterations, stationarity residual {:.2e}, max/min {:.4}",
        s.pi.iterations,
        s.pi.residual,
        s.pi.spread()
    );
    sink.field(&s.grid, "invariant_density", &mu)?;
    let result = json!({
        "iterations": s.pi.iterations,
        "stationarity_residual": s.pi.residual,
        "total_probability": s.pi.probabilities().iter().sum::<f64>(),
        "min_density": lo,
        "max_density": hi,
        "spread": s.pi.spread(),
    });
    sink.finish("invariant", true, &result)?;
    Ok(true)
}

fn exit(cfg: &RunConfig, dual: bool) -> Result<bool, CliError> {
    let sink = Sink::new(cfg)?;
    let s = Setup::new(cfg)?;
    let gen = s.pick(cfg, dual)?;
    let (ball, mask) = cfg.domain(&s.grid)?;
    let killed = killed_on(&gen, &s.pi, &mask, cfg.scheme.boundary)?;
    let u = exit_time(&killed, &cfg.solver_options())?;
    let x0 = s.grid.cell_of(&ball.center);
    println!("exit time at the center {:.6e}, max {:.6e} ({} cells)", u.at(x0), u.max(), killed.len());
    sink.field(&s.grid, "exit_time", u.values())?;
    let result = json!({
        "dual": dual,
        "cells": killed.len(),
        "center_cell": x0,
        "at_center": u.at(x0),
        "max": u.max(),
        "solve": u.solve,
    });
    sink.finish("exit-time", true, &result)?;
    Ok(true)
}

fn green(cfg: &RunConfig, dual: bool) -> Result<bool, CliError> {
    let sink = Sink::new(cfg)?;
    let s = Setup::new(cfg)?;
    let gen = s.pick(cfg, dual)?;
    let (ball, mask) = cfg.domain(&s.grid)?;
    let killed = killed_on(&gen, &s.pi, &mask, cfg.scheme.boundary)?;
    let x0 = s.grid.cell_of(&ball.center);
    let g = green_column(&killed, x0, &cfg.solver_options())?;
    let total: f64 = g.values().iter().sum::<f64>() * s.grid.cell_volume();
    println!("green function with source {x0}: value there {:.6e}, integral {:.6e}", g.at(x0), total);
    sink.field(&s.grid, "green", g.values())?;
    let result = json!({
        "dual": dual,
        "source": x0,
        "at_source": g.at(x0),
        "integral": total,
        "solve": g.solve,
    });
    sink.finish("green", true, &result)?;
    Ok(true)
}

fn cap(cfg: &RunConfig, dual: bool) -> Result<bool, CliError> {
    let sink = Sink::new(cfg)?;
    let s = Setup::new(cfg)?;
    let (_, _, a, b) = cfg.condenser(&s.grid)?;
    let fitted = prepare_generator(&s.generator, &s.pi, &[&a, &b], cfg.scheme.boundary);
    let gen = if dual { dual_generator(&fitted, &s.pi, cfg.scheme.dual)? } else { fitted };
    let c = capacity(&gen, &s.pi, &a, &b, &cfg.solver_options())?;
    println!(
        "capacity {:.6e} (energy {:.6e}, relative mismatch {:.2e}), equilibrium measure on {} cells",
        c.value(),
        c.energy,
        c.mismatch,
        c.equilibrium.support().len()
    );
    sink.field(&s.grid, "harmonic_extension", c.harmonic.values())?;
    sink.field(&s.grid, "equilibrium_measure", c.equilibrium.weights())?;
    let result = json!({
        "dual": dual,
        "capacity": c.value(),
        "energy": c.energy,
        "flux": c.flux,
        "mismatch": c.mismatch,
        "separation": c.separation,
        "equilibrium_mass": c.equilibrium.mass,
        "support_cells": c.equilibrium.support().len(),
        "target_mass": s.pi.mass(&a),
        "solve": c.harmonic.solve,
    });
    sink.finish("capacity", true, &result)?;
    Ok(true)
}

fn print_condition(r: &ConditionReport) {
    println!("condition {:?} on {} balls, n = {}", r.condition, r.rows.len(), r.cells_per_side);
    println!("  {:>10} {:>10} {:>14} {:>14}", "radius", "center", r.labels[0], r.labels[1]);
    for row in &r.rows {
        let c: Vec<String> = row.center.iter().map(|x| format!("{x:.3}")).collect();
        println!("  {:>10.4} {:>10} {:>14.6} {:>14.6}", row.radius, c.join("/"), row.values[0], row.values[1]);
    }
    println!("  worst {:.6} {:.6}: {}", r.worst[0], r.worst[1], verdict(r.passed));
}

fn condition(cfg: &RunConfig, which: ConditionArg, dual: bool) -> Result<bool, CliError> {
    let sink = Sink::new(cfg)?;
    let s = Setup::new(cfg)?;
    let gen = s.pick(cfg, dual)?;
    let balls = cfg.family().balls(&s.grid);
    let opts = cfg.check_options();
    let (name, r) = match which {
        ConditionArg::G => ("check-g", check_g(&gen, &s.pi, &balls, cfg.balls.k, &opts)?),
        ConditionArg::E => ("check-e", check_e(&gen, &s.pi, &balls, cfg.delta(), &opts)?),
        ConditionArg::C => ("check-c", check_c(&gen, &s.pi, &balls, cfg.balls.k, &opts)?),
        ConditionArg::Harnack => ("harnack", check_harnack(&gen, &s.pi, &balls, cfg.delta(), &opts)?),
    };
    print_condition(&r);
    let passed = r.passed;
    sink.finish(name, passed, &json!({ "dual": dual, "report": r }))?;
    Ok(passed)
}

fn print_identity(r: &IdentityReport) {
    println!("  {:<40} worst {:>10.3e}  {}", r.identity, r.worst(), verdict(r.passed));
    for c in r.checks.iter().filter(|c| !c.passed) {
        println!("    {} = {:.3e} > {:.1e}", c.label, c.value, c.threshold);
    }
}

fn verify(cfg: &RunConfig) -> Result<bool, CliError> {
    let sink = Sink::new(cfg)?;
    let s = Setup::new(cfg)?;
    let opts = cfg.solver_options();
    let mode = cfg.scheme.boundary;
    let (ball, d) = cfg.domain(&s.grid)?;
    let mut reports = Vec::new();

    let killed = killed_on(&s.generator, &s.pi, &d, mode)?;
    reports.push(exit_time_identity_check(&killed, cfg.verify.rows, &opts)?);

    // the identities are exact for the lattice adjoint, whatever `scheme.dual` says
    let fitted = prepare_generator(&s.generator, &s.pi, &[&complement_mask(&d)], mode);
    let dual = dual_generator(&fitted, &s.pi, DualConstruction::DiscreteAdjoint)?;
    let kd = killed_on(&dual, &s.pi, &d, potlab_core::BoundaryMode::Staircase)?;
    let step = (killed.len() / cfg.verify.sources).max(1);
    let sources: Vec<usize> = killed.cells().iter().step_by(step).take(cfg.verify.sources).copied().collect();
    reports.push(duality_check(&killed, &kd, &s.pi, &sources, &opts)?);

    let (inner, _, a, b) = cfg.condenser(&s.grid)?;
    let cfit = prepare_generator(&s.generator, &s.pi, &[&a, &b], mode);
    let cdual = dual_generator(&cfit, &s.pi, DualConstruction::DiscreteAdjoint)?;
    let primal = capacity(&cfit, &s.pi, &a, &b, &opts)?;
    let adjoint = capacity(&cdual, &s.pi, &a, &b, &opts)?;
    reports.push(capacity_identity_check(&primal, Some(&adjoint)));
    reports.push(representation_check(&primal, &cfit, &s.pi, &a, &b, &opts)?);
    let x = s.grid.cell_of(&inner.center);
    reports.push(green_capacity_check(&primal, &cdual, &s.pi, &a, &b, x, &opts)?);

    let x0 = s.grid.cell_of(&ball.center);
    let g = green_column(&killed, x0, &opts)?;
    let half = make_ball_mask(&s.grid, &ball.scaled(0.5))?;
    reports.push(annulus_extrema_check(&g, &half));
    reports.push(maximum_principle_check(&fitted, &d, cfg.verify.trials, cfg.seed, &opts)?);
    reports.push(check_sandwich(&s.generator, &s.pi, &a, &b, &cfg.check_options())?);

    let levels = (1..=2).rev().find(|&m| inner.radius * cfg.balls.k.powi(m as i32) < s.grid.side() / 2.0);
    if let Some(levels) = levels {
        reports.push(telescoping_check(&s.generator, &s.pi, &inner, cfg.balls.k, levels, &opts)?);
    }

    println!("identities on {} (n = {}):", cfg.field.family, s.grid.cells_per_side());
    reports.iter().for_each(print_identity);
    let passed = reports.iter().all(|r| r.passed);
    println!("verify: {}", verdict(passed));
    sink.finish("verify", passed, &json!({ "identities": reports }))?;
    Ok(passed)
}

#[derive(Serialize)]
struct McComparison {
    quantity: &'static str,
    cell: usize,
    point: Vec<f64>,
    lattice: f64,
    estimate: McEstimate,
    z_score: f64,
    passed: bool,
}

fn mc(cfg: &RunConfig) -> Result<bool, CliError> {
    let sink = Sink::new(cfg)?;
    let s = Setup::new(cfg)?;
    let opts = cfg.solver_options();
    let sde = cfg.sde_config(&s.grid);
    let z_limit = cfg.mc.z_limit;
    let compare = |quantity, cell: usize, lattice: f64, estimate: McEstimate| {
        let z_score = estimate.z_score(lattice);
        let passed = estimate.reliable && z_score <= z_limit;
        McComparison { quantity, cell, point: s.grid.center(cell).to_vec(), lattice, estimate, z_score, passed }
    };

    let (ball, d) = cfg.domain(&s.grid)?;
    let killed = killed_on(&s.generator, &s.pi, &d, cfg.scheme.boundary)?;
    let u = exit_time(&killed, &opts)?;
    let x0 = s.grid.cell_of(&ball.center);
    let est = simulate_exit_time(&s.field, &s.grid, &Shape::Ball(ball), &s.grid.center(x0), &sde)?;
    let exit_row = compare("exit-time", x0, u.at(x0), est);

    let (inner, outer, a, b) = cfg.condenser(&s.grid)?;
    let fitted = prepare_generator(&s.generator, &s.pi, &[&a, &b], cfg.scheme.boundary);
    let h = harmonic_extension(&fitted, &a, &b, &opts)?;
    let mut p = inner.center.clone();
    p[0] += (inner.radius + outer.radius) / 2.0;
    let xs = s.grid.cell_of(&p);
    if a.contains(xs) || b.contains(xs) {
        return Err(CliError::Usage("condenser too thin for a start cell between the spheres".into()));
    }
    let est = simulate_hitting_probability(
        &s.field,
        &s.grid,
        &Shape::Ball(inner),
        &Shape::Exterior(outer),
        &s.grid.center(xs),
        &sde,
    )?;
    let hit_row = compare("hitting-probability", xs, h.at(xs), est);

    let rows = [exit_row, hit_row];
    println!("monte carlo, {} paths, dt = {:.3e}:", sde.trajectories, sde.dt);
    for r in &rows {
        println!(
            "  {:<20} lattice {:.6e}  mc {:.6e} +- {:.1e}  z {:.2}  censored {:.3}  {}",
            r.quantity,
            r.lattice,
            r.estimate.mean,
            r.estimate.std_error,
            r.z_score,
            r.estimate.censored_fraction,
            verdict(r.passed)
        );
    }
    let passed = rows.iter().all(|r| r.passed);
    sink.finish("mc", passed, &json!({ "dt": sde.dt, "z_limit": z_limit, "comparisons": rows }))?;
    Ok(passed)
}

fn report(cfg: &RunConfig) -> Result<bool, CliError> {
    let sink = Sink::new(cfg)?;
    let grid = cfg.grid()?;
    let field = cfg.field(&grid)?;
    let r = equivalence_suite(&field, &grid, &cfg.family(), cfg.balls.k, &cfg.suite_options())?;
    println!("equivalence suite for {} (n = {} and {}):", r.field, grid.cells_per_side(), 2 * grid.cells_per_side());
    for row in &r.stability {
        println!(
            "  {:?} {:<8} {:>12.6} {:>12.6}  x{:.3}  {}",
            row.condition,
            row.label,
            row.coarse,
            row.fine,
            row.factor,
            verdict(row.passed)
        );
    }
    println!("  sandwich: {}", verdict(r.sandwich_passed));
    println!("  primal/dual Green constant gap {:.4}", r.green_dual_gap);
    let passed = r.verdict && r.sandwich_passed;
    println!("verdict: {}", verdict(passed));
    sink.finish("report", passed, &r)?;
    Ok(passed)
}
