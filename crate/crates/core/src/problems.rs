//! Built-in regression problems and the scenario bundle used by drivers.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector4};

use crate::collocation::HpGrid;
use crate::error::{Error, Result};
use crate::geometry::{quaternion, ManifoldChart, Point};
use crate::scvx::{self, ScvxSettings};
use crate::transcription::{FixedBoundary, ProblemDefinition, ReferenceTrajectory};

/// A problem together with its grid, settings and starting reference.
pub struct Scenario {
    pub problem: Box<dyn ProblemDefinition>,
    pub grid: HpGrid,
    pub settings: ScvxSettings,
    pub initial: ReferenceTrajectory,
}

pub const BUILTIN_NAMES: [&str; 3] = ["landing", "attitude-toy", "lq-euclidean"];

/// Builds a built-in scenario on an `N × p` grid (defaults when `None`).
pub fn builtin(name: &str, grid: Option<(usize, usize)>) -> Result<Scenario> {
    match name {
        "lq-euclidean" => {
            let (n, p) = grid.unwrap_or((2, 6));
            lq_scenario(n, p)
        }
        "attitude-toy" => {
            let (n, p) = grid.unwrap_or((4, 10));
            attitude_scenario(n, p)
        }
        "landing" => {
            let (n, p) = grid.unwrap_or((5, 10));
            crate::landing::scenario(&crate::landing::LandingParams::default(), n, p)
        }
        other => Err(Error::Argument(format!(
            "unknown problem '{other}', expected one of {}",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

/// Double integrator `ẍ = u` on the line with cost `½∫u²`, driven from
/// `(1, 0)` to rest at the origin.
#[derive(Debug, Clone)]
pub struct LqEuclidean {
    states: ManifoldChart,
    controls: ManifoldChart,
    pub x0: [f64; 2],
    pub xf: [f64; 2],
}

impl Default for LqEuclidean {
    fn default() -> Self {
        Self {
            states: ManifoldChart::Euclidean(2),
            controls: ManifoldChart::Euclidean(1),
            x0: [1.0, 0.0],
            xf: [0.0, 0.0],
        }
    }
}

impl LqEuclidean {
    pub fn a() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])
    }

    pub fn b() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0])
    }
}

impl ProblemDefinition for LqEuclidean {
    fn name(&self) -> &str {
        "lq-euclidean"
    }
    fn state_chart(&self) -> &ManifoldChart {
        &self.states
    }
    fn control_chart(&self) -> &ManifoldChart {
        &self.controls
    }
    fn dynamics(&self, x: &Point, u: &Point) -> Result<DVector<f64>> {
        Ok(DVector::from_column_slice(&[x.coords[1], u.coords[0]]))
    }
    fn dynamics_jacobians(&self, _x: &Point, _u: &Point) -> Option<Result<(DMatrix<f64>, DMatrix<f64>)>> {
        Some(Ok((Self::a(), Self::b())))
    }
    fn running_cost(&self, _x: &Point, u: &Point) -> f64 {
        0.5 * u.coords[0] * u.coords[0]
    }
    fn running_cost_hessian(&self, _x: &Point, _u: &Point) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((DMatrix::zeros(2, 2), DMatrix::identity(1, 1)))
    }
    fn initial_boundary(&self) -> Option<FixedBoundary> {
        Some(FixedBoundary::full(&self.states, Point::from_slice(&self.x0)))
    }
    fn terminal_boundary(&self) -> Option<FixedBoundary> {
        Some(FixedBoundary::full(&self.states, Point::from_slice(&self.xf)))
    }
}

pub fn lq_scenario(n: usize, p: usize) -> Result<Scenario> {
    let problem = LqEuclidean::default();
    let grid = HpGrid::new(n, p, 0.0, 2.0)?;
    let initial = scvx::initial_reference(
        &problem,
        &grid,
        &Point::from_slice(&problem.x0),
        &Point::from_slice(&problem.xf),
        &Point::from_slice(&[0.0]),
    )?;
    Ok(Scenario {
        problem: Box::new(problem),
        grid,
        settings: ScvxSettings {
            epsilon: 1e-6,
            max_iters: 30,
            ..ScvxSettings::default()
        },
        initial,
    })
}

/// Rest-to-rest attitude maneuver: `q̇ = ½ q ⊗ ω`, `ω̇ = J⁻¹(τ − ω × Jω)`,
/// cost `½∫‖τ‖²`.
#[derive(Debug, Clone)]
pub struct AttitudeToy {
    states: ManifoldChart,
    controls: ManifoldChart,
    pub inertia: Matrix3<f64>,
    pub q0: Vector4<f64>,
    pub qf: Vector4<f64>,
}

impl Default for AttitudeToy {
    fn default() -> Self {
        Self {
            states: ManifoldChart::product(vec![ManifoldChart::UnitQuaternion, ManifoldChart::Euclidean(3)]),
            controls: ManifoldChart::Euclidean(3),
            inertia: Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0)),
            q0: quaternion::identity(),
            // 90° about (1, 1, 1)/√3
            qf: quaternion::quat_exp(&(Vector3::new(1.0, 1.0, 1.0).normalize() * std::f64::consts::FRAC_PI_4)),
        }
    }
}

impl AttitudeToy {
    pub fn state(q: &Vector4<f64>, w: &Vector3<f64>) -> Point {
        Point::from_slice(&[q[0], q[1], q[2], q[3], w[0], w[1], w[2]])
    }

    fn split(x: &Point) -> (Vector4<f64>, Vector3<f64>) {
        let c = &x.coords;
        (Vector4::new(c[0], c[1], c[2], c[3]), Vector3::new(c[4], c[5], c[6]))
    }
}

impl ProblemDefinition for AttitudeToy {
    fn name(&self) -> &str {
        "attitude-toy"
    }
    fn state_chart(&self) -> &ManifoldChart {
        &self.states
    }
    fn control_chart(&self) -> &ManifoldChart {
        &self.controls
    }
    fn dynamics(&self, x: &Point, u: &Point) -> Result<DVector<f64>> {
        let (q, w) = Self::split(x);
        let tau = Vector3::new(u.coords[0], u.coords[1], u.coords[2]);
        let qd = quaternion::mul(&q, &quaternion::pure(&w)) * 0.5;
        let jinv = self.inertia.try_inverse().ok_or_else(|| Error::Domain("singular inertia".into()))?;
        let wd = jinv * (tau - w.cross(&(self.inertia * w)));
        Ok(DVector::from_iterator(7, qd.iter().chain(wd.iter()).copied()))
    }
    fn dynamics_jacobians(&self, x: &Point, _u: &Point) -> Option<Result<(DMatrix<f64>, DMatrix<f64>)>> {
        let (_, w) = Self::split(x);
        let jinv = self.inertia.try_inverse()?;
        let mut a = DMatrix::zeros(6, 6);
        a.view_mut((0, 3), (3, 3)).copy_from(&(Matrix3::identity() * 0.5));
        let dw = jinv * (quaternion::skew(&(self.inertia * w)) - quaternion::skew(&w) * self.inertia);
        a.view_mut((3, 3), (3, 3)).copy_from(&dw);
        let mut b = DMatrix::zeros(6, 3);
        b.view_mut((3, 0), (3, 3)).copy_from(&jinv);
        Some(Ok((a, b)))
    }
    fn running_cost(&self, _x: &Point, u: &Point) -> f64 {
        0.5 * u.coords.norm_squared()
    }
    fn running_cost_hessian(&self, _x: &Point, _u: &Point) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((DMatrix::zeros(6, 6), DMatrix::identity(3, 3)))
    }
    fn initial_boundary(&self) -> Option<FixedBoundary> {
        Some(FixedBoundary::full(&self.states, Self::state(&self.q0, &Vector3::zeros())))
    }
    fn terminal_boundary(&self) -> Option<FixedBoundary> {
        Some(FixedBoundary::full(&self.states, Self::state(&self.qf, &Vector3::zeros())))
    }
}

pub fn attitude_scenario(n: usize, p: usize) -> Result<Scenario> {
    let problem = AttitudeToy::default();
    let grid = HpGrid::new(n, p, 0.0, 4.0)?;
    let initial = scvx::initial_reference(
        &problem,
        &grid,
        &AttitudeToy::state(&problem.q0, &Vector3::zeros()),
        &AttitudeToy::state(&problem.qf, &Vector3::zeros()),
        &Point::from_slice(&[0.0, 0.0, 0.0]),
    )?;
    Ok(Scenario {
        problem: Box::new(problem),
        grid,
        settings: ScvxSettings {
            epsilon: 1e-6,
            max_iters: 30,
            ..ScvxSettings::default()
        },
        initial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcription::dynamics_jacobians_fd;

    #[test]
    fn attitude_jacobians_match_finite_differences() {
        let prob = AttitudeToy::default();
        let q = quaternion::quat_exp(&Vector3::new(0.3, -0.6, 0.2));
        let x = AttitudeToy::state(&q, &Vector3::new(0.5, -0.2, 0.8));
        let u = Point::from_slice(&[0.1, 0.4, -0.3]);
        let (a, b) = prob.dynamics_jacobians(&x, &u).unwrap().unwrap();
        let (afd, bfd) = dynamics_jacobians_fd(&prob, &x, &u).unwrap();
        assert!((a - afd).amax() < 1e-7);
        assert!((b - bfd).amax() < 1e-7);
    }

    #[test]
    fn unknown_builtin_lists_choices() {
        let err = builtin("rocket", None).err().unwrap().to_string();
        assert!(err.contains("landing") && err.contains("lq-euclidean"));
    }
}
