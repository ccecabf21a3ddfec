use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use super::{ConicBackend, ConicSolution, ConicStatus, SolverSettings, StandardForm};

/// Sparse interior-point backend built on the `clarabel` crate.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelBackend;

impl ConicBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, form: &StandardForm, settings: &SolverSettings) -> ConicSolution {
        self.solve_with(form, settings, false)
    }
}

impl ClarabelBackend {
    /// With `careful` set, tolerances are tightened by three orders of
    /// magnitude and the KKT solves are regularized and refined harder.
    pub fn solve_with(&self, form: &StandardForm, settings: &SolverSettings, careful: bool) -> ConicSolution {
        let n = form.n;
        let m = form.rows();
        let p = CscMatrix::zeros((n, n));
        let (mut ri, mut ci, mut vals) = (Vec::new(), Vec::new(), Vec::new());
        for &(r, c, v) in &form.a {
            ri.push(r);
            ci.push(c);
            vals.push(v);
        }
        let a = CscMatrix::new_from_triplets(m, n, ri, ci, vals);

        let mut cones = Vec::new();
        if form.cones.zero > 0 {
            cones.push(SupportedConeT::ZeroConeT(form.cones.zero));
        }
        if form.cones.nonneg > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(form.cones.nonneg));
        }
        for &d in &form.cones.soc {
            // A one-dimensional second-order cone is the half-line.
            if d == 1 {
                cones.push(SupportedConeT::NonnegativeConeT(1));
            } else {
                cones.push(SupportedConeT::SecondOrderConeT(d));
            }
        }

        let scale = if careful { 1e-3 } else { 1.0 };
        let mut builder = DefaultSettingsBuilder::default();
        builder
            .verbose(settings.verbose)
            .max_iter(if careful { 2 * settings.max_iters } else { settings.max_iters })
            .tol_feas(settings.feas_tol * scale)
            .tol_gap_abs(settings.gap_tol * scale)
            .tol_gap_rel(settings.gap_tol * scale)
            .presolve_enable(false);
        if careful {
            builder
                .static_regularization_constant(1e-7)
                .iterative_refinement_reltol(1e-14)
                .iterative_refinement_abstol(1e-14)
                .iterative_refinement_max_iter(50)
                .max_step_fraction(0.95);
        }
        let cfg = builder.build();
        let cfg = match cfg {
            Ok(c) => c,
            Err(e) => return ConicSolution::failed(ConicStatus::NumericalFailure, n, 0, format!("clarabel settings: {e}")),
        };
        let mut solver = match DefaultSolver::new(&p, &form.c, &a, &form.b, &cones, cfg) {
            Ok(s) => s,
            Err(e) => return ConicSolution::failed(ConicStatus::NumericalFailure, n, 0, format!("clarabel setup: {e}")),
        };
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => ConicStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => ConicStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => ConicStatus::Unbounded,
            _ => ConicStatus::NumericalFailure,
        };
        if status != ConicStatus::Optimal {
            return ConicSolution::failed(status, n, sol.iterations, format!("clarabel status {:?}", sol.status));
        }
        ConicSolution {
            status,
            x: sol.x.clone(),
            objective: sol.obj_val,
            iterations: sol.iterations,
            primal_residual: sol.r_prim,
            dual_residual: sol.r_dual,
            message: format!("clarabel status {:?}", sol.status),
        }
    }
}
