//! Intrinsic linearized collocation about a reference trajectory.
//!
//! On every segment the state perturbation `η` is represented by its frame
//! coordinates at the reference nodes. At collocation node `i` the linear
//! rows read
//!
//! ```text
//! Σ_k D_ik T_ik η_k = σ̄ (ρ̂_i + Ã_i η_i + B_i ξ_i) + f̂_i Δσ + ν_i
//! ```
//!
//! where `T_ik` transports frame coordinates from node `k` to node `i`,
//! `ρ̂_i` is the reference defect and `Ã_i = D_x f − C + S − ℰ`.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::collocation::{HpGrid, RadauSegment};
use crate::error::{Error, Result};
use crate::geometry::{quaternion, Leaf, ManifoldChart, Point};

/// Relative central-difference step used for Jacobians.
pub const FD_STEP: f64 = 1e-6;

/// Ambient coordinate of a Euclidean state or control component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    State(usize),
    Control(usize),
}

/// `Σ coef·var + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(Var, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn term(v: Var, coef: f64) -> Self {
        Self {
            terms: vec![(v, coef)],
            constant: 0.0,
        }
    }

    pub fn var(v: Var) -> Self {
        Self::term(v, 1.0)
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn plus(mut self, v: Var, coef: f64) -> Self {
        self.terms.push((v, coef));
        self
    }

    pub fn plus_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &Point, u: &Point) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|&(v, a)| {
                    a * match v {
                        Var::State(k) => x.coords[k],
                        Var::Control(k) => u.coords[k],
                    }
                })
                .sum::<f64>()
    }

    fn involves_control(&self) -> bool {
        self.terms.iter().any(|(v, _)| matches!(v, Var::Control(_)))
    }
}

/// A constraint that is convex in Euclidean state/control coordinates and
/// is passed to the subproblem without linearization.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexConstraint {
    /// `expr ≤ 0`.
    NonPositive(LinExpr),
    /// `‖u‖₂ ≤ t`.
    Soc { t: LinExpr, u: Vec<LinExpr> },
}

impl ConvexConstraint {
    pub fn involves_control(&self) -> bool {
        match self {
            Self::NonPositive(e) => e.involves_control(),
            Self::Soc { t, u } => t.involves_control() || u.iter().any(LinExpr::involves_control),
        }
    }

    /// Amount by which the constraint is violated (0 when satisfied).
    pub fn violation(&self, x: &Point, u: &Point) -> f64 {
        match self {
            Self::NonPositive(e) => e.eval(x, u).max(0.0),
            Self::Soc { t, u: us } => {
                let n = us.iter().map(|e| e.eval(x, u).powi(2)).sum::<f64>().sqrt();
                (n - t.eval(x, u)).max(0.0)
            }
        }
    }

    fn exprs(&self) -> Vec<&LinExpr> {
        match self {
            Self::NonPositive(e) => vec![e],
            Self::Soc { t, u } => std::iter::once(t).chain(u.iter()).collect(),
        }
    }
}

/// Fixed boundary state with an optional mask over intrinsic coordinates
/// (`false` leaves that coordinate free).
#[derive(Debug, Clone, PartialEq)]
pub struct FixedBoundary {
    pub target: Point,
    pub mask: Vec<bool>,
}

impl FixedBoundary {
    pub fn full(chart: &ManifoldChart, target: Point) -> Self {
        Self {
            target,
            mask: vec![true; chart.intrinsic_dim()],
        }
    }
}

/// An optimal control problem on `state_chart × control_chart`.
///
/// Jacobians and Hessians are in frame coordinates. Defaults describe an
/// unconstrained, cost-free problem.
pub trait ProblemDefinition: Send + Sync {
    fn name(&self) -> &str;
    fn state_chart(&self) -> &ManifoldChart;
    fn control_chart(&self) -> &ManifoldChart;

    /// `f(x, u)` as an ambient vector tangent to the state manifold at `x`.
    fn dynamics(&self, x: &Point, u: &Point) -> Result<DVector<f64>>;

    /// Analytic `(D_x f, D_u f)` in frame coordinates, if available.
    fn dynamics_jacobians(&self, _x: &Point, _u: &Point) -> Option<Result<(DMatrix<f64>, DMatrix<f64>)>> {
        None
    }

    fn running_cost(&self, _x: &Point, _u: &Point) -> f64 {
        0.0
    }

    fn terminal_cost(&self, _x: &Point) -> f64 {
        0.0
    }

    /// Positive semidefinite `(∂²L/∂η², ∂²L/∂ξ²)` for the quadratic part of
    /// the convex cost.
    fn running_cost_hessian(&self, _x: &Point, _u: &Point) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        None
    }

    fn terminal_cost_hessian(&self, _x: &Point) -> Option<DMatrix<f64>> {
        None
    }

    fn path_constraint_count(&self) -> usize {
        0
    }

    /// Nonconvex path constraints `g(x, u) ≤ 0`, linearized at every
    /// collocation node.
    fn path_constraints(&self, _x: &Point, _u: &Point) -> DVector<f64> {
        DVector::zeros(0)
    }

    /// Constraints kept exact in the subproblem.
    fn convex_constraints(&self) -> Vec<ConvexConstraint> {
        Vec::new()
    }

    fn initial_boundary(&self) -> Option<FixedBoundary> {
        None
    }

    fn terminal_boundary(&self) -> Option<FixedBoundary> {
        None
    }

    fn boundary_residual_dim(&self) -> usize {
        0
    }

    /// General boundary conditions `ψ(x₀, x_f) = 0`, linearized each
    /// iteration.
    fn boundary_residual(&self, _x0: &Point, _xf: &Point) -> DVector<f64> {
        DVector::zeros(0)
    }

    /// `(name, unit)` of every ambient state coordinate, for exports.
    fn state_labels(&self) -> Vec<(String, String)> {
        (0..self.state_chart().ambient_dim()).map(|k| (format!("x{k}"), "-".into())).collect()
    }

    fn control_labels(&self) -> Vec<(String, String)> {
        (0..self.control_chart().ambient_dim()).map(|k| (format!("u{k}"), "-".into())).collect()
    }
}

/// Reference states and controls at every node of every segment.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    /// `states[h][i]`, `i = 0..=p`; `states[h][p] == states[h + 1][0]`.
    pub states: Vec<Vec<Point>>,
    /// `controls[h][i]`; node 0 mirrors the previous collocated control.
    pub controls: Vec<Vec<Point>>,
    pub sigma: f64,
}

impl ReferenceTrajectory {
    pub fn segments(&self) -> usize {
        self.states.len()
    }

    pub fn initial_state(&self) -> &Point {
        &self.states[0][0]
    }

    pub fn final_state(&self) -> &Point {
        self.states.last().and_then(|s| s.last()).expect("non-empty trajectory")
    }

    /// Largest unit-norm violation over all state and control nodes.
    pub fn membership_violation(&self, problem: &dyn ProblemDefinition) -> (f64, f64) {
        let xs = self
            .states
            .iter()
            .flatten()
            .map(|x| problem.state_chart().membership_violation(x))
            .fold(0.0, f64::max);
        let us = self
            .controls
            .iter()
            .flatten()
            .map(|u| problem.control_chart().membership_violation(u))
            .fold(0.0, f64::max);
        (xs, us)
    }

    pub fn interfaces_continuous(&self) -> bool {
        self.states.windows(2).all(|w| w[0].last() == w[1].first())
    }

    /// Checks shapes, membership (1e-12), interface equality and `σ > 0`.
    pub fn validate(&self, problem: &dyn ProblemDefinition, grid: &HpGrid) -> Result<()> {
        let np = grid.nodes_per_segment();
        if self.states.len() != grid.segments || self.controls.len() != grid.segments {
            return Err(Error::Argument(format!(
                "reference has {} state and {} control segments, grid has {}",
                self.states.len(),
                self.controls.len(),
                grid.segments
            )));
        }
        for h in 0..grid.segments {
            if self.states[h].len() != np || self.controls[h].len() != np {
                return Err(Error::Argument(format!("segment {h} does not carry {np} nodes")));
            }
            for i in 0..np {
                if !problem.state_chart().contains(&self.states[h][i], 1e-12) {
                    return Err(Error::Invariant(format!("state ({h},{i}) is off the state manifold")));
                }
                if !problem.control_chart().contains(&self.controls[h][i], 1e-12) {
                    return Err(Error::Invariant(format!("control ({h},{i}) is off the control manifold")));
                }
            }
        }
        if !self.interfaces_continuous() {
            return Err(Error::Invariant("interface states differ between segments".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Argument(format!("time scaling {} must be positive", self.sigma)));
        }
        Ok(())
    }
}

/// Linearization data of one collocation node.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedNode {
    /// `D_x f − C + S − ℰ` in frame coordinates.
    pub a_tilde: DMatrix<f64>,
    /// `D_x f` alone.
    pub dfx: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub rho_hat: DVector<f64>,
    /// Frame coordinates of `f(x̄, ū)`.
    pub f_hat: DVector<f64>,
    /// Discrete reference velocity.
    pub velocity: DVector<f64>,
    pub gx: DMatrix<f64>,
    pub gu: DMatrix<f64>,
    pub g_ref: DVector<f64>,
    /// `T_ik` for `k = 0..=p`.
    pub t_blocks: Vec<DMatrix<f64>>,
}

fn check_finite_vec(v: &DVector<f64>, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{what} has non-finite entries")))
    }
}

fn check_finite_mat(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{what} has non-finite entries")))
    }
}

/// Central-difference step per intrinsic coordinate: `FD_STEP` scaled by
/// the magnitude of Euclidean coordinates, unscaled on unit-norm blocks.
pub fn fd_steps(chart: &ManifoldChart, x: &Point) -> Vec<f64> {
    let mut steps = vec![FD_STEP; chart.intrinsic_dim()];
    for c in chart.components() {
        if let Leaf::Euclidean(n) = c.leaf {
            for k in 0..n {
                steps[c.intrinsic_offset + k] = FD_STEP * x.coords[c.ambient_offset + k].abs().max(1.0);
            }
        }
    }
    steps
}

/// Central differences of `f` through the retraction at `x`.
pub fn fd_jacobian(
    chart: &ManifoldChart,
    x: &Point,
    rows: usize,
    mut f: impl FnMut(&Point) -> Result<DVector<f64>>,
) -> Result<DMatrix<f64>> {
    let n = chart.intrinsic_dim();
    let steps = fd_steps(chart, x);
    let mut jac = DMatrix::zeros(rows, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = steps[j];
        let plus = f(&chart.retract_coords(x, &e)?)?;
        let minus = f(&chart.retract_coords(x, &(-e))?)?;
        jac.set_column(j, &((plus - minus) / (2.0 * steps[j])));
    }
    Ok(jac)
}

/// `f(x, u)` in frame coordinates at `x`.
pub fn frame_dynamics(problem: &dyn ProblemDefinition, x: &Point, u: &Point) -> Result<DVector<f64>> {
    let f = problem.dynamics(x, u)?;
    problem.state_chart().to_frame_coords(x, &f)
}

/// `(D_x f, D_u f)` in frame coordinates by central differences. The state
/// derivative is taken of the frame coordinates at the perturbed point.
pub fn dynamics_jacobians_fd(problem: &dyn ProblemDefinition, x: &Point, u: &Point) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = problem.state_chart().intrinsic_dim();
    let ax = fd_jacobian(problem.state_chart(), x, n, |xp| frame_dynamics(problem, xp, u))?;
    let frame = problem.state_chart().frame(x)?;
    let bu = fd_jacobian(problem.control_chart(), u, n, |up| Ok(frame.transpose() * problem.dynamics(x, up)?))?;
    Ok((ax, bu))
}

fn jacobians(problem: &dyn ProblemDefinition, x: &Point, u: &Point) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    match problem.dynamics_jacobians(x, u) {
        Some(r) => r,
        None => dynamics_jacobians_fd(problem, x, u),
    }
}

/// `(1/σ̄) Σ_k D_ik R⁻¹_{x̄_i}(x̄_k)` in frame coordinates at node `(h, i)`.
pub fn reference_velocity(
    chart: &ManifoldChart,
    grid: &HpGrid,
    reference: &ReferenceTrajectory,
    h: usize,
    i: usize,
) -> Result<DVector<f64>> {
    if i == 0 || i > grid.order() {
        return Err(Error::Argument(format!("node {i} is not a collocation node")));
    }
    let xs = &reference.states[h];
    let xi = &xs[i];
    let mut v = DVector::zeros(chart.intrinsic_dim());
    for (k, xk) in xs.iter().enumerate() {
        let d = grid.segment.diff[(i - 1, k)];
        if d == 0.0 || k == i {
            continue;
        }
        let w = chart
            .inverse_retract(xi, xk)
            .map_err(|e| Error::Domain(format!("segment {h}: nodes {i} and {k}: {e}")))?;
        v += w * d;
    }
    Ok(v / reference.sigma)
}

/// `ρ̂ = f̂ − x̄̇` at node `(h, i)`.
pub fn compute_defect(
    problem: &dyn ProblemDefinition,
    grid: &HpGrid,
    reference: &ReferenceTrajectory,
    h: usize,
    i: usize,
) -> Result<DVector<f64>> {
    let v = reference_velocity(problem.state_chart(), grid, reference, h, i)?;
    let f = frame_dynamics(problem, &reference.states[h][i], &reference.controls[h][i])?;
    Ok(f - v)
}

/// Transport matrices `T_ik`, `k = 0..=p`, into the frame at node `(h, i)`.
pub fn transport_blocks(chart: &ManifoldChart, reference: &ReferenceTrajectory, h: usize, i: usize) -> Result<Vec<DMatrix<f64>>> {
    let xs = &reference.states[h];
    xs.iter()
        .enumerate()
        .map(|(k, xk)| {
            chart
                .transport_matrix(xk, &xs[i])
                .map_err(|e| Error::Domain(format!("segment {h}: transport {k}→{i}: {e}")))
        })
        .collect()
}

/// `−C + S − ℰ` assembled block-diagonally over the state chart.
///
/// Quaternion blocks use `−C − ℰ` from [`quaternion::quat_aux_terms`].
/// The defect-dependent term `S` is not added: `D_x f` is taken of the
/// frame coordinates at the perturbed point, which already accounts for
/// comparing tangent vectors across base points. Euclidean blocks vanish.
/// Sphere blocks are the base-point sensitivity of the discrete velocity,
/// `(D_ii I − Σ_{k≠i} D_ik ∂_x R⁻¹_x(x̄_k)) / σ̄`, by central differences.
///
/// `rho` is accepted for symmetry with the closed forms and is unused.
pub fn aux_operator(
    chart: &ManifoldChart,
    states: &[Point],
    i: usize,
    diff_row: &[f64],
    velocity: &DVector<f64>,
    rho: &DVector<f64>,
    sigma: f64,
) -> Result<DMatrix<f64>> {
    let n = chart.intrinsic_dim();
    let x = &states[i];
    let mut out = DMatrix::zeros(n, n);
    for c in chart.components() {
        let (a, o) = (c.ambient_offset, c.intrinsic_offset);
        match c.leaf {
            Leaf::Euclidean(_) => {}
            Leaf::UnitQuaternion => {
                let q = nalgebra::Vector4::new(x.coords[a], x.coords[a + 1], x.coords[a + 2], x.coords[a + 3]);
                let rate = Vector3::new(velocity[o], velocity[o + 1], velocity[o + 2]);
                let r = Vector3::new(rho[o], rho[o + 1], rho[o + 2]);
                let (cm, _, em) = quaternion::quat_aux_terms(&q, &rate, &r);
                let block = -cm - em;
                for (ri, ci) in (0..3).flat_map(|r| (0..3).map(move |c| (r, c))) {
                    out[(o + ri, o + ci)] = block[(ri, ci)];
                }
            }
            Leaf::Sphere2 => {
                let leaf = ManifoldChart::Sphere2;
                let part = |p: &Point| Point::from_slice(&p.coords.as_slice()[a..a + 3]);
                let s = part(x);
                let mut sens = DMatrix::<f64>::identity(2, 2) * diff_row[i];
                for (k, xk) in states.iter().enumerate() {
                    if k == i || diff_row[k] == 0.0 {
                        continue;
                    }
                    let t = part(xk);
                    let d = fd_jacobian(&leaf, &s, 2, |b| leaf.inverse_retract(b, &t))?;
                    sens -= d * diff_row[k];
                }
                out.view_mut((o, o), (2, 2)).copy_from(&(sens / sigma));
            }
        }
    }
    Ok(out)
}

/// Linearizes the dynamics and path constraints at collocation node `(h, i)`.
pub fn linearize_node(
    problem: &dyn ProblemDefinition,
    grid: &HpGrid,
    reference: &ReferenceTrajectory,
    h: usize,
    i: usize,
) -> Result<LinearizedNode> {
    let chart = problem.state_chart();
    let x = &reference.states[h][i];
    let u = &reference.controls[h][i];
    let node = |e: Error| match e {
        Error::Numerical(m) => Error::Numerical(format!("node ({h},{i}): {m}")),
        other => other,
    };
    let velocity = reference_velocity(chart, grid, reference, h, i)?;
    let f_hat = frame_dynamics(problem, x, u)?;
    check_finite_vec(&f_hat, "dynamics").map_err(node)?;
    let rho_hat = &f_hat - &velocity;
    let (dfx, b) = jacobians(problem, x, u)?;
    check_finite_mat(&dfx, "state Jacobian").map_err(node)?;
    check_finite_mat(&b, "control Jacobian").map_err(node)?;
    let diff_row: Vec<f64> = grid.segment.diff.row(i - 1).iter().copied().collect();
    let a_tilde = &dfx + aux_operator(chart, &reference.states[h], i, &diff_row, &velocity, &rho_hat, reference.sigma)?;

    let ng = problem.path_constraint_count();
    let g_ref = problem.path_constraints(x, u);
    if g_ref.len() != ng {
        return Err(Error::Argument(format!(
            "path constraints returned {} values, expected {ng}",
            g_ref.len()
        )));
    }
    let (gx, gu) = if ng > 0 {
        (
            fd_jacobian(chart, x, ng, |xp| Ok(problem.path_constraints(xp, u)))?,
            fd_jacobian(problem.control_chart(), u, ng, |up| Ok(problem.path_constraints(x, up)))?,
        )
    } else {
        (
            DMatrix::zeros(0, chart.intrinsic_dim()),
            DMatrix::zeros(0, problem.control_chart().intrinsic_dim()),
        )
    };
    check_finite_vec(&g_ref, "path constraints").map_err(node)?;
    check_finite_mat(&gx, "path constraint Jacobian").map_err(node)?;
    check_finite_mat(&gu, "path constraint Jacobian").map_err(node)?;

    Ok(LinearizedNode {
        a_tilde,
        dfx,
        b,
        rho_hat,
        f_hat,
        velocity,
        gx,
        gu,
        g_ref,
        t_blocks: transport_blocks(chart, reference, h, i)?,
    })
}

/// Linearizes all collocation nodes of segment `h` (`p` entries).
pub fn linearize_segment(
    problem: &dyn ProblemDefinition,
    grid: &HpGrid,
    reference: &ReferenceTrajectory,
    h: usize,
) -> Result<Vec<LinearizedNode>> {
    (1..=grid.order()).map(|i| linearize_node(problem, grid, reference, h, i)).collect()
}

/// One block row of collocation equations, written as
/// `Σ_k eta[k]·η_k + xi·ξ_i + dsigma·Δσ − ν_i = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationRow {
    /// `D_ik T_ik − δ_ik σ̄ Ã_i`, `k = 0..=p`.
    pub eta: Vec<DMatrix<f64>>,
    /// `−σ̄ B_i`.
    pub xi: DMatrix<f64>,
    /// `−f̂_i`; `None` when the final time is fixed.
    pub dsigma: Option<DVector<f64>>,
    /// `σ̄ ρ̂_i`.
    pub rhs: DVector<f64>,
}

/// Builds the collocation rows of one segment from its linearized nodes.
pub fn assemble_collocation_rows(
    nodes: &[LinearizedNode],
    segment: &RadauSegment,
    sigma_bar: f64,
    free_final_time: bool,
) -> Vec<CollocationRow> {
    nodes
        .iter()
        .enumerate()
        .map(|(r, node)| {
            let i = r + 1;
            let eta = node
                .t_blocks
                .iter()
                .enumerate()
                .map(|(k, t)| {
                    let mut m = t * segment.diff[(r, k)];
                    if k == i {
                        m -= &node.a_tilde * sigma_bar;
                    }
                    m
                })
                .collect();
            CollocationRow {
                eta,
                xi: &node.b * -sigma_bar,
                dsigma: free_final_time.then(|| -&node.f_hat),
                rhs: &node.rho_hat * sigma_bar,
            }
        })
        .collect()
}

/// Interface pairs `((h, p), (h + 1, 0))` tied by `η̂_p^h = η̂_0^{h+1}`.
pub fn linking_pairs(grid: &HpGrid) -> Vec<((usize, usize), (usize, usize))> {
    (0..grid.segments.saturating_sub(1))
        .map(|h| ((h, grid.order()), (h + 1, 0)))
        .collect()
}

/// Interpolates nodal points of one segment at `tau` by Lagrange
/// interpolation of inverse retractions about the nearest node.
pub fn interpolate(chart: &ManifoldChart, segment: &RadauSegment, points: &[Point], tau: f64) -> Result<Point> {
    let base = segment
        .nodes
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - tau).abs().total_cmp(&(b.1 - tau).abs()))
        .map(|(j, _)| j)
        .unwrap_or(0);
    let basis = segment.lagrange_basis(tau);
    let mut v = DVector::zeros(chart.intrinsic_dim());
    for (k, p) in points.iter().enumerate() {
        if basis[k] != 0.0 && k != base {
            v += chart.inverse_retract(&points[base], p)? * basis[k];
        }
    }
    chart.retract_coords(&points[base], &v)
}

/// Maps an ambient index of a Euclidean component to its intrinsic index.
pub fn euclidean_intrinsic_index(chart: &ManifoldChart, ambient: usize) -> Result<usize> {
    for c in chart.components() {
        if c.ambient_range().contains(&ambient) {
            return match c.leaf {
                Leaf::Euclidean(_) => Ok(c.intrinsic_offset + ambient - c.ambient_offset),
                _ => Err(Error::Argument(format!(
                    "coordinate {ambient} belongs to a {} block; convex constraints need Euclidean coordinates",
                    c.leaf.tag()
                ))),
            };
        }
    }
    Err(Error::Argument(format!("coordinate {ambient} is out of range")))
}

/// Checks that every convex constraint references Euclidean coordinates.
pub fn validate_convex_constraints(problem: &dyn ProblemDefinition) -> Result<()> {
    for c in problem.convex_constraints() {
        for e in c.exprs() {
            for &(v, _) in &e.terms {
                match v {
                    Var::State(k) => euclidean_intrinsic_index(problem.state_chart(), k)?,
                    Var::Control(k) => euclidean_intrinsic_index(problem.control_chart(), k)?,
                };
            }
        }
    }
    Ok(())
}
