//! Six-degree-of-freedom powered landing.
//!
//! State `x = [m, r, v, q, ω]` on `ℝ⁷ × 𝒬 × ℝ³`, control `u = [T, û]` on
//! `ℝ × S²`. The first inertial axis points up; `q` maps body to inertial
//! coordinates and the engine thrusts along the body direction `û`.
//!
//! The default constants were picked so the problem is feasible and well
//! scaled; they are not tuned to any particular vehicle.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector4};

use crate::collocation::HpGrid;
use crate::error::{Error, Result};
use crate::geometry::{quaternion, ManifoldChart, Point};
use crate::problems::Scenario;
use crate::scvx::{self, ScvxSettings};
use crate::transcription::{ConvexConstraint, FixedBoundary, LinExpr, ProblemDefinition, Var};

pub const STATE_DIM: usize = 14;
pub const CONTROL_DIM: usize = 4;

/// Ambient index layout of the landing state.
pub mod idx {
    pub const M: usize = 0;
    pub const R: usize = 1;
    pub const V: usize = 4;
    pub const Q: usize = 7;
    pub const W: usize = 11;
}

/// Drag force `D(x)` in inertial coordinates.
pub type DragFn = Arc<dyn Fn(&Point) -> Vector3<f64> + Send + Sync>;

#[derive(Clone, Default)]
pub enum DragModel {
    #[default]
    Zero,
    UserSupplied(DragFn),
}

impl std::fmt::Debug for DragModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Zero => f.write_str("Zero"),
            Self::UserSupplied(_) => f.write_str("UserSupplied"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LandingParams {
    /// Mass flow per unit thrust.
    pub alpha: f64,
    pub g_vec: Vector3<f64>,
    pub inertia: Matrix3<f64>,
    /// Engine position relative to the centre of mass, body frame.
    pub l_arm: Vector3<f64>,
    /// Glideslope angle above the horizontal (rad).
    pub gamma: f64,
    pub omega_max: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub m_dry: f64,
    /// Gimbal cone half-angle (rad).
    pub delta_max: f64,
    /// Tilt bound from vertical (rad).
    pub phi_max: f64,
    pub t_f: f64,
    pub drag: DragModel,
    pub m0: f64,
    pub r0: Vector3<f64>,
    pub v0: Vector3<f64>,
    pub q0: Vector4<f64>,
    pub w0: Vector3<f64>,
    pub rf: Vector3<f64>,
    pub vf: Vector3<f64>,
    pub qf: Vector4<f64>,
    pub wf: Vector3<f64>,
}

impl Default for LandingParams {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            g_vec: Vector3::new(-1.0, 0.0, 0.0),
            inertia: Matrix3::identity() * 0.01,
            l_arm: Vector3::new(-0.03, 0.0, 0.0),
            gamma: 20f64.to_radians(),
            omega_max: 60f64.to_radians(),
            t_min: 0.3,
            t_max: 5.0,
            m_dry: 1.0,
            delta_max: 20f64.to_radians(),
            phi_max: 90f64.to_radians(),
            t_f: 4.0,
            drag: DragModel::Zero,
            m0: 2.0,
            r0: Vector3::new(4.0, 2.0, 0.0),
            v0: Vector3::new(0.0, -1.0, 0.0),
            q0: Vector4::new(0.7428, -0.04278, 0.03559, 0.6672).normalize(),
            w0: Vector3::zeros(),
            rf: Vector3::zeros(),
            vf: Vector3::new(-0.1, 0.0, 0.0),
            qf: quaternion::identity(),
            wf: Vector3::zeros(),
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("{key}: '{value}' is not a number")))
}

fn parse_vec<const N: usize>(key: &str, value: &str) -> Result<[f64; N]> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(Error::Parse(format!("{key}: expected {N} comma-separated numbers, got '{value}'")));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse_f64(key, p)?;
    }
    Ok(out)
}

impl LandingParams {
    /// Keys accepted by [`LandingParams::set`]; angles are in degrees.
    pub const KEYS: [&'static str; 22] = [
        "alpha", "g", "inertia_diag", "l_arm", "gamma_deg", "omega_max", "t_min", "t_max", "m_dry", "delta_max_deg",
        "phi_max_deg", "t_f", "m0", "r0", "v0", "q0", "w0", "rf", "vf", "qf", "wf", "drag",
    ];

    /// Sets one parameter from its text form. Quaternions are normalized.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v3 = |v: &str| parse_vec::<3>(key, v).map(|a| Vector3::from(a));
        match key {
            "alpha" => self.alpha = parse_f64(key, value)?,
            "g" => self.g_vec = v3(value)?,
            "inertia_diag" => self.inertia = Matrix3::from_diagonal(&v3(value)?),
            "l_arm" => self.l_arm = v3(value)?,
            "gamma_deg" => self.gamma = parse_f64(key, value)?.to_radians(),
            "omega_max" => self.omega_max = parse_f64(key, value)?,
            "t_min" => self.t_min = parse_f64(key, value)?,
            "t_max" => self.t_max = parse_f64(key, value)?,
            "m_dry" => self.m_dry = parse_f64(key, value)?,
            "delta_max_deg" => self.delta_max = parse_f64(key, value)?.to_radians(),
            "phi_max_deg" => self.phi_max = parse_f64(key, value)?.to_radians(),
            "t_f" => self.t_f = parse_f64(key, value)?,
            "m0" => self.m0 = parse_f64(key, value)?,
            "r0" => self.r0 = v3(value)?,
            "v0" => self.v0 = v3(value)?,
            "w0" => self.w0 = v3(value)?,
            "rf" => self.rf = v3(value)?,
            "vf" => self.vf = v3(value)?,
            "wf" => self.wf = v3(value)?,
            "q0" | "qf" => {
                let q = Vector4::from(parse_vec::<4>(key, value)?);
                if q.norm() < 1e-12 {
                    return Err(Error::Parse(format!("{key}: zero quaternion")));
                }
                if key == "q0" {
                    self.q0 = q.normalize();
                } else {
                    self.qf = q.normalize();
                }
            }
            "drag" => match value.trim() {
                "zero" => self.drag = DragModel::Zero,
                other => return Err(Error::Parse(format!("drag: only 'zero' can be set from text, got '{other}'"))),
            },
            other => return Err(Error::Parse(format!("unknown landing parameter '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_min <= self.t_max && self.t_min >= 0.0) {
            return Err(Error::Argument(format!("thrust bounds [{}, {}] are invalid", self.t_min, self.t_max)));
        }
        if !(self.m_dry > 0.0 && self.m0 > self.m_dry) {
            return Err(Error::Argument(format!("need 0 < m_dry < m0, got {} and {}", self.m_dry, self.m0)));
        }
        let half_pi = std::f64::consts::FRAC_PI_2 + 1e-12;
        for (name, a) in [("gamma", self.gamma), ("delta_max", self.delta_max), ("phi_max", self.phi_max)] {
            if !(a > 0.0 && a <= half_pi) {
                return Err(Error::Argument(format!("{name} = {a} rad is outside (0, π/2]")));
            }
        }
        if self.inertia.try_inverse().is_none() {
            return Err(Error::Argument("inertia is singular".into()));
        }
        if !(self.t_f > 0.0 && self.omega_max > 0.0 && self.alpha >= 0.0) {
            return Err(Error::Argument("t_f and omega_max must be positive and alpha non-negative".into()));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Point {
        state_point(self.m0, &self.r0, &self.v0, &self.q0, &self.w0)
    }

    /// Terminal target; the mass entry is a placeholder and left free.
    pub fn terminal_state(&self) -> Point {
        state_point(self.m0, &self.rf, &self.vf, &self.qf, &self.wf)
    }
}

pub fn state_point(m: f64, r: &Vector3<f64>, v: &Vector3<f64>, q: &Vector4<f64>, w: &Vector3<f64>) -> Point {
    let mut c = Vec::with_capacity(STATE_DIM);
    c.push(m);
    c.extend(r.iter());
    c.extend(v.iter());
    c.extend(q.iter());
    c.extend(w.iter());
    Point::from_slice(&c)
}

fn v3(x: &Point, at: usize) -> Vector3<f64> {
    Vector3::new(x.coords[at], x.coords[at + 1], x.coords[at + 2])
}

fn quat(x: &Point) -> Vector4<f64> {
    Vector4::new(x.coords[idx::Q], x.coords[idx::Q + 1], x.coords[idx::Q + 2], x.coords[idx::Q + 3])
}

#[derive(Debug, Clone)]
pub struct Landing {
    pub params: LandingParams,
    inertia_inv: Matrix3<f64>,
    states: ManifoldChart,
    controls: ManifoldChart,
}

impl Landing {
    pub fn new(params: LandingParams) -> Result<Self> {
        params.validate()?;
        let inertia_inv = params.inertia.try_inverse().expect("validated");
        Ok(Self {
            params,
            inertia_inv,
            states: ManifoldChart::product(vec![
                ManifoldChart::Euclidean(7),
                ManifoldChart::UnitQuaternion,
                ManifoldChart::Euclidean(3),
            ]),
            controls: ManifoldChart::product(vec![ManifoldChart::Euclidean(1), ManifoldChart::Sphere2]),
        })
    }

    fn drag(&self, x: &Point) -> Vector3<f64> {
        match &self.params.drag {
            DragModel::Zero => Vector3::zeros(),
            DragModel::UserSupplied(f) => f(x),
        }
    }

    /// All constraint residuals (≤ 0 feasible) in the order glideslope,
    /// angular rate, lower thrust, upper thrust, dry mass, gimbal, tilt.
    pub fn constraint_residuals(&self, x: &Point, u: &Point) -> [f64; 7] {
        let p = &self.params;
        let r = v3(x, idx::R);
        let w = v3(x, idx::W);
        let t = u.coords[0];
        let g = self.path_constraints(x, u);
        [
            (r[1] * r[1] + r[2] * r[2]).sqrt() - r[0] / p.gamma.tan(),
            w.norm() - p.omega_max,
            p.t_min - t,
            t - p.t_max,
            p.m_dry - x.coords[idx::M],
            g[0],
            g[1],
        ]
    }
}

impl ProblemDefinition for Landing {
    fn name(&self) -> &str {
        "landing"
    }

    fn state_chart(&self) -> &ManifoldChart {
        &self.states
    }

    fn control_chart(&self) -> &ManifoldChart {
        &self.controls
    }

    fn state_labels(&self) -> Vec<(String, String)> {
        let mut out = vec![("m".to_string(), "mass".to_string())];
        for (prefix, unit) in [("r", "length"), ("v", "length/time")] {
            out.extend(["x", "y", "z"].map(|a| (format!("{prefix}_{a}"), unit.to_string())));
        }
        out.extend(["q_w", "q_x", "q_y", "q_z"].map(|a| (a.to_string(), "-".to_string())));
        out.extend(["w_x", "w_y", "w_z"].map(|a| (a.to_string(), "rad/time".to_string())));
        out
    }

    fn control_labels(&self) -> Vec<(String, String)> {
        let mut out = vec![("T".to_string(), "force".to_string())];
        out.extend(["u_x", "u_y", "u_z"].map(|a| (a.to_string(), "-".to_string())));
        out
    }

    fn dynamics(&self, x: &Point, u: &Point) -> Result<DVector<f64>> {
        let p = &self.params;
        let m = x.coords[idx::M];
        if !(m > 0.0) {
            return Err(Error::Domain(format!("mass {m} must be positive")));
        }
        let v = v3(x, idx::V);
        let q = quat(x);
        let w = v3(x, idx::W);
        let t = u.coords[0];
        let dir = v3(u, 1);
        let c = quaternion::rotation_matrix(&q);
        let vd = c * dir * (t / m) + p.g_vec - self.drag(x) / m;
        let qd = quaternion::mul(&q, &quaternion::pure(&w)) * 0.5;
        let wd = self.inertia_inv * (p.l_arm.cross(&(dir * t)) - w.cross(&(p.inertia * w)));
        let mut f = DVector::zeros(STATE_DIM);
        f[idx::M] = -p.alpha * t;
        f.rows_mut(idx::R, 3).copy_from(&v);
        f.rows_mut(idx::V, 3).copy_from(&vd);
        f.rows_mut(idx::Q, 4).copy_from(&qd);
        f.rows_mut(idx::W, 3).copy_from(&wd);
        Ok(f)
    }

    fn dynamics_jacobians(&self, x: &Point, u: &Point) -> Option<Result<(DMatrix<f64>, DMatrix<f64>)>> {
        if !matches!(self.params.drag, DragModel::Zero) {
            return None;
        }
        let p = &self.params;
        let m = x.coords[idx::M];
        if !(m > 0.0) {
            return Some(Err(Error::Domain(format!("mass {m} must be positive"))));
        }
        let q = quat(x);
        let w = v3(x, idx::W);
        let t = u.coords[0];
        let dir = v3(u, 1);
        let c = quaternion::rotation_matrix(&q);
        // Intrinsic state layout: m, r, v, η_q, ω.
        let (im, ir, iv, iq, iw) = (0, 1, 4, 7, 10);
        let mut a = DMatrix::zeros(13, 13);
        a.view_mut((ir, iv), (3, 3)).copy_from(&Matrix3::identity());
        a.view_mut((iv, im), (3, 1)).copy_from(&(c * dir * (-t / (m * m))));
        // C(q ⊗ Exp(η)) ≈ C(q)(I + 2 skew(η))
        a.view_mut((iv, iq), (3, 3))
            .copy_from(&(c * quaternion::skew(&dir) * (-2.0 * t / m)));
        a.view_mut((iq, iw), (3, 3)).copy_from(&(Matrix3::identity() * 0.5));
        let gyro = self.inertia_inv * (quaternion::skew(&(p.inertia * w)) - quaternion::skew(&w) * p.inertia);
        a.view_mut((iw, iw), (3, 3)).copy_from(&gyro);

        // Ambient control derivative, then the control frame.
        let mut du = DMatrix::zeros(13, CONTROL_DIM);
        du[(im, 0)] = -p.alpha;
        du.view_mut((iv, 0), (3, 1)).copy_from(&(c * dir / m));
        du.view_mut((iv, 1), (3, 3)).copy_from(&(c * (t / m)));
        du.view_mut((iw, 0), (3, 1)).copy_from(&(self.inertia_inv * p.l_arm.cross(&dir)));
        du.view_mut((iw, 1), (3, 3))
            .copy_from(&(self.inertia_inv * quaternion::skew(&p.l_arm) * t));
        let frame = match self.controls.frame(u) {
            Ok(f) => f,
            Err(e) => return Some(Err(e)),
        };
        Some(Ok((a, du * frame)))
    }

    fn terminal_cost(&self, x: &Point) -> f64 {
        -x.coords[idx::M]
    }

    fn path_constraint_count(&self) -> usize {
        2
    }

    /// Gimbal `cos δ_max − û₁ ≤ 0` and tilt `q_y² + q_z² − sin²(φ_max/2) ≤ 0`.
    fn path_constraints(&self, x: &Point, u: &Point) -> DVector<f64> {
        let p = &self.params;
        let qy = x.coords[idx::Q + 2];
        let qz = x.coords[idx::Q + 3];
        DVector::from_column_slice(&[
            p.delta_max.cos() - u.coords[1],
            qy * qy + qz * qz - (p.phi_max / 2.0).sin().powi(2),
        ])
    }

    fn convex_constraints(&self) -> Vec<ConvexConstraint> {
        let p = &self.params;
        let s = Var::State;
        vec![
            ConvexConstraint::Soc {
                t: LinExpr::term(s(idx::R), 1.0 / p.gamma.tan()),
                u: vec![LinExpr::var(s(idx::R + 1)), LinExpr::var(s(idx::R + 2))],
            },
            ConvexConstraint::Soc {
                t: LinExpr::constant(p.omega_max),
                u: (0..3).map(|k| LinExpr::var(s(idx::W + k))).collect(),
            },
            ConvexConstraint::NonPositive(LinExpr::term(Var::Control(0), -1.0).plus_constant(p.t_min)),
            ConvexConstraint::NonPositive(LinExpr::var(Var::Control(0)).plus_constant(-p.t_max)),
            ConvexConstraint::NonPositive(LinExpr::term(s(idx::M), -1.0).plus_constant(p.m_dry)),
        ]
    }

    fn initial_boundary(&self) -> Option<FixedBoundary> {
        Some(FixedBoundary::full(&self.states, self.params.initial_state()))
    }

    fn terminal_boundary(&self) -> Option<FixedBoundary> {
        let mut mask = vec![true; 13];
        mask[0] = false;
        Some(FixedBoundary {
            target: self.params.terminal_state(),
            mask,
        })
    }
}

/// Default settings for the landing regression.
pub fn default_settings() -> ScvxSettings {
    ScvxSettings {
        mu_nu: 1e4,
        mu_s: 1e-1,
        mu_r: 1e-2,
        epsilon: 1e-6,
        max_iters: 60,
        ..ScvxSettings::default()
    }
}

/// Landing scenario on an `n × p` grid with fixed final time. The initial
/// reference interpolates the boundary states at constant mass and hovers
/// with the engine aligned to the body axis.
pub fn scenario(params: &LandingParams, n: usize, p: usize) -> Result<Scenario> {
    let problem = Landing::new(params.clone())?;
    let grid = HpGrid::new(n, p, 0.0, params.t_f)?;
    let hover = params.m0 * params.g_vec.norm();
    let initial = scvx::initial_reference(
        &problem,
        &grid,
        &params.initial_state(),
        &params.terminal_state(),
        &Point::from_slice(&[hover.clamp(params.t_min, params.t_max), 1.0, 0.0, 0.0]),
    )?;
    Ok(Scenario {
        problem: Box::new(problem),
        grid,
        settings: default_settings(),
        initial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcription::dynamics_jacobians_fd;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn landing() -> Landing {
        Landing::new(LandingParams::default()).unwrap()
    }

    fn control(t: f64, dir: Vector3<f64>) -> Point {
        let d = dir.normalize();
        Point::from_slice(&[t, d[0], d[1], d[2]])
    }

    #[test]
    fn free_fall() {
        let l = landing();
        let x = l.params.initial_state();
        let mut xs = x.clone();
        xs.coords.rows_mut(idx::W, 3).fill(0.0);
        let f = l.dynamics(&xs, &control(0.0, Vector3::x())).unwrap();
        assert_eq!(f[idx::M], 0.0);
        assert_eq!(Vector3::new(f[idx::V], f[idx::V + 1], f[idx::V + 2]), l.params.g_vec);
        assert!(f.rows(idx::Q, 4).amax() == 0.0 && f.rows(idx::W, 3).amax() == 0.0);
    }

    #[test]
    fn hover_cancels_gravity() {
        let mut params = LandingParams::default();
        let q = quaternion::quat_exp(&Vector3::new(0.1, -0.2, 0.3));
        let dir = Vector3::new(1.0, 0.2, -0.1).normalize();
        let (m, t) = (1.7, 2.3);
        params.g_vec = -(quaternion::rotation_matrix(&q) * dir) * (t / m);
        let l = Landing::new(params).unwrap();
        let x = state_point(m, &Vector3::new(1.0, 0.0, 0.0), &Vector3::zeros(), &q, &Vector3::zeros());
        let f = l.dynamics(&x, &control(t, dir)).unwrap();
        assert!(f.rows(idx::V, 3).amax() <= 1e-14);
    }

    #[test]
    fn diagonal_inertia_has_no_gyroscopic_term() {
        let l = landing();
        let w = Vector3::new(0.0, 0.0, 0.7);
        let x = state_point(2.0, &Vector3::x(), &Vector3::zeros(), &quaternion::identity(), &w);
        let u = control(1.5, Vector3::new(1.0, 0.3, 0.0));
        let f = l.dynamics(&x, &u).unwrap();
        let dir = v3(&u, 1);
        let expect = l.inertia_inv * l.params.l_arm.cross(&(dir * 1.5));
        assert!((Vector3::new(f[idx::W], f[idx::W + 1], f[idx::W + 2]) - expect).amax() < 1e-15);
    }

    #[test]
    fn quaternion_rate_is_tangent() {
        let l = landing();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let q = Vector4::from_fn(|_, _| rng.gen_range(-1.0..1.0)).normalize();
            let w = Vector3::from_fn(|_, _| rng.gen_range(-2.0..2.0));
            let x = state_point(1.5, &Vector3::x(), &Vector3::zeros(), &q, &w);
            let f = l.dynamics(&x, &control(1.0, Vector3::x())).unwrap();
            let qd = f.rows(idx::Q, 4);
            assert!(q.dot(&qd).abs() <= 1e-14);
        }
    }

    #[test]
    fn nonpositive_mass_is_a_domain_error() {
        let l = landing();
        let x = state_point(0.0, &Vector3::x(), &Vector3::zeros(), &quaternion::identity(), &Vector3::zeros());
        assert!(matches!(l.dynamics(&x, &control(1.0, Vector3::x())), Err(Error::Domain(_))));
    }

    #[test]
    fn jacobian_entries() {
        let l = landing();
        let x = l.params.initial_state();
        let u = control(1.2, Vector3::new(1.0, 0.1, 0.05));
        let (a, b) = l.dynamics_jacobians(&x, &u).unwrap().unwrap();
        assert_eq!(b[(0, 0)], -l.params.alpha);
        assert_eq!(a.view((1, 4), (3, 3)).into_owned(), DMatrix::identity(3, 3));
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let l = landing();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst = 0.0_f64;
        for _ in 0..100 {
            let r = |rng: &mut ChaCha8Rng, s: f64| Vector3::from_fn(|_, _| rng.gen_range(-s..s));
            let q = Vector4::from_fn(|_, _| rng.gen_range(-1.0..1.0)).normalize();
            let x = state_point(rng.gen_range(1.0..2.0), &r(&mut rng, 4.0), &r(&mut rng, 2.0), &q, &r(&mut rng, 1.0));
            let u = control(rng.gen_range(0.3..5.0), Vector3::x() + r(&mut rng, 0.3));
            let (a, b) = l.dynamics_jacobians(&x, &u).unwrap().unwrap();
            let (afd, bfd) = dynamics_jacobians_fd(&l, &x, &u).unwrap();
            worst = worst.max((a - afd).amax()).max((b - bfd).amax());
        }
        assert!(worst <= 1e-5, "max deviation {worst}");
    }

    #[test]
    fn constraint_examples() {
        let l = landing();
        let p = &l.params;
        let on_axis = state_point(2.0, &Vector3::new(3.0, 0.0, 0.0), &Vector3::zeros(), &quaternion::identity(), &Vector3::zeros());
        let res = l.constraint_residuals(&on_axis, &control(1.0, Vector3::x()));
        assert!((res[0] + 3.0 / p.gamma.tan()).abs() < 1e-15);
        assert!((res[6] + (p.phi_max / 2.0).sin().powi(2)).abs() < 1e-15);
        let edge = Point::from_slice(&[1.0, p.delta_max.cos(), p.delta_max.sin(), 0.0]);
        assert!(l.path_constraints(&on_axis, &edge)[0].abs() <= 1e-14);
    }

    #[test]
    fn convex_constraints_touch_only_euclidean_blocks() {
        let l = landing();
        crate::transcription::validate_convex_constraints(&l).unwrap();
        assert!(l.convex_constraints().iter().filter(|c| c.involves_control()).count() == 2);
    }

    #[test]
    fn parameter_text_round_trip() {
        let mut p = LandingParams::default();
        p.set("r0", "5, 1, -1").unwrap();
        p.set("gamma_deg", "30").unwrap();
        p.set("q0", "2, 0, 0, 0").unwrap();
        assert_eq!(p.r0, Vector3::new(5.0, 1.0, -1.0));
        assert!((p.gamma - 30f64.to_radians()).abs() < 1e-15);
        assert_eq!(p.q0, quaternion::identity());
        assert!(p.set("bogus", "1").is_err());
        assert!(p.set("r0", "1, 2").is_err());
    }

    #[test]
    fn default_attitude_is_normalized_published_value() {
        let p = LandingParams::default();
        let raw = Vector4::new(0.7428, -0.04278, 0.03559, 0.6672);
        assert!((p.q0 - raw).amax() < 1e-4);
        assert!((p.q0.norm() - 1.0).abs() < 1e-15);
    }
}
