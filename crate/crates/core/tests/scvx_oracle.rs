mod common;

use geoscvx::conic::{self, Backend, ConicStatus};
use geoscvx::problems::{lq_scenario, LqEuclidean, Scenario};
use geoscvx::scvx::{self, RunStatus};

/// Interior-point variable error scales like the square root of the gap,
/// so oracle comparisons at 1e-6 need tight solver tolerances.
fn tight(mut sc: Scenario) -> Scenario {
    sc.settings.solver.feas_tol = 1e-12;
    sc.settings.solver.gap_tol = 1e-12;
    sc
}

#[test]
fn first_lq_step_matches_kkt_oracle() {
    for (n, p) in [(1, 4), (2, 6), (3, 5)] {
        let sc = tight(lq_scenario(n, p).unwrap());
        let sub = scvx::build_subproblem(sc.problem.as_ref(), &sc.initial, &sc.grid, &sc.settings).unwrap();
        let sol = conic::solve(&sub.program, &sc.settings.solver);
        assert_eq!(sol.status, ConicStatus::Optimal, "{}", sol.message);
        let step = scvx::extract_step(&sub, &sol, &sc.settings);
        let lq = LqEuclidean::default();
        let (eta, xi) = common::lq_first_step(&sc.grid, &sc.initial, lq.x0, lq.xf, sc.settings.mu_r);
        let mut worst: f64 = 0.0;
        for h in 0..n {
            for i in 0..=p {
                let g = h * p + i;
                let e = &step.eta[h][i];
                worst = worst.max((e[0] - eta[g][0]).abs()).max((e[1] - eta[g][1]).abs());
                if i > 0 {
                    worst = worst.max((step.xi[h][i - 1][0] - xi[h * p + i - 1]).abs());
                }
            }
        }
        assert!(worst < 1e-6, "N={n} p={p}: {worst:e}");
        assert!(step.max_virtual_control() < 1e-8);
    }
}

#[test]
fn dense_backend_agrees_with_clarabel() {
    let sc = lq_scenario(2, 5).unwrap();
    let sub = scvx::build_subproblem(sc.problem.as_ref(), &sc.initial, &sc.grid, &sc.settings).unwrap();
    let a = conic::solve(&sub.program, &sc.settings.solver);
    let mut dense = sc.settings.solver.clone();
    dense.backend = Backend::Dense;
    let b = conic::solve(&sub.program, &dense);
    assert_eq!(b.status, ConicStatus::Optimal, "{}", b.message);
    assert!((a.objective - b.objective).abs() < 1e-6 * a.objective.abs().max(1.0));
}

#[test]
fn converged_lq_matches_analytic_minimum_energy_control() {
    // x(t) = 1 - 3t²/4 + t³/4 on [0, 2] gives u = -3/2 + 3t/2
    let sc = tight(lq_scenario(2, 6).unwrap());
    let res = scvx::run(sc.problem.as_ref(), &sc.initial, &sc.grid, &sc.settings).unwrap();
    assert_eq!(res.status, RunStatus::Converged);
    for h in 0..sc.grid.segments {
        for i in 1..=sc.grid.order() {
            let t = sc.grid.time(h, i, res.reference.sigma);
            let u = res.reference.controls[h][i].coords[0];
            assert!((u - (-1.5 + 1.5 * t)).abs() < 1e-6, "t={t} u={u}");
            let x = res.reference.states[h][i].coords[0];
            assert!((x - (1.0 - 0.75 * t * t + 0.25 * t.powi(3))).abs() < 1e-6);
        }
    }
}

#[test]
fn interfaces_stay_bit_identical_every_iteration() {
    let sc = geoscvx::problems::attitude_scenario(4, 6).unwrap();
    let mut reference = sc.initial.clone();
    for _ in 0..6 {
        let sub = scvx::build_subproblem(sc.problem.as_ref(), &reference, &sc.grid, &sc.settings).unwrap();
        let sol = conic::solve(&sub.program, &sc.settings.solver);
        let step = scvx::extract_step(&sub, &sol, &sc.settings);
        reference = scvx::update_reference(sc.problem.as_ref(), &reference, &step).unwrap();
        assert!(reference.interfaces_continuous());
        for h in 1..reference.segments() {
            let a = &reference.states[h - 1].last().unwrap().coords;
            let b = &reference.states[h][0].coords;
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
