//! Unit-quaternion operators in scalar-first layout `[w, x, y, z]`.
//!
//! The retraction is `R_q(phi) = q ⊗ Exp(phi)` with
//! `Exp(phi) = [cos|phi|, sinc(|phi|) phi]`, so tangent coordinates are
//! body-frame half rotation vectors: a coordinate step `phi` rotates the
//! attitude by `2|phi|` about `phi`. Transports between body frames are
//! right Jacobians evaluated at the full rotation vector `2 Log(a⁻¹ ⊗ b)`.

use nalgebra::{Matrix3, Vector3, Vector4};

use crate::error::{Error, Result};

/// Below this angle the Taylor branches replace the closed forms.
pub const SMALL_ANGLE: f64 = 1e-4;

/// Tolerance on `w + 1` below which the principal log is refused.
pub const CUT_LOCUS_TOL: f64 = 1e-12;

pub type Quat = Vector4<f64>;

pub fn identity() -> Quat {
    Vector4::new(1.0, 0.0, 0.0, 0.0)
}

/// `sin(x)/x` with a Taylor branch near zero.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < SMALL_ANGLE {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Hamilton product `a ⊗ b`.
pub fn mul(a: &Quat, b: &Quat) -> Quat {
    Vector4::new(
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    )
}

pub fn conj(q: &Quat) -> Quat {
    Vector4::new(q[0], -q[1], -q[2], -q[3])
}

/// Pure quaternion `[0, v]`.
pub fn pure(v: &Vector3<f64>) -> Quat {
    Vector4::new(0.0, v[0], v[1], v[2])
}

pub fn vec_part(q: &Quat) -> Vector3<f64> {
    Vector3::new(q[1], q[2], q[3])
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0)
}

/// `Exp(phi) = [cos|phi|, sinc(|phi|) phi]`.
pub fn quat_exp(phi: &Vector3<f64>) -> Quat {
    let theta = phi.norm();
    let s = sinc(theta);
    Vector4::new(theta.cos(), s * phi[0], s * phi[1], s * phi[2])
}

/// Principal inverse of [`quat_exp`] without sign canonicalization.
///
/// Returns `phi` with `|phi| < π` and `quat_exp(phi) == q`. Fails when `q`
/// is within [`CUT_LOCUS_TOL`] of `[-1, 0, 0, 0]`.
pub fn log_principal(q: &Quat) -> Result<Vector3<f64>> {
    let w = q[0];
    let v = vec_part(q);
    let vn = v.norm();
    if w + 1.0 <= CUT_LOCUS_TOL {
        return Err(Error::Domain(format!(
            "quaternion log at the cut locus (scalar part {w})"
        )));
    }
    let theta = vn.atan2(w);
    if vn < 1e-300 {
        return Ok(Vector3::zeros());
    }
    // theta / sin(theta), with sin(theta) = vn on the unit sphere
    let scale = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0
    } else {
        theta / vn
    };
    Ok(v * scale)
}

/// Attitude log: `q` is first canonicalized to a non-negative scalar part
/// (`q` and `-q` describe the same attitude), then the principal branch is
/// taken, giving `|phi| <= π/2`.
pub fn quat_log(q: &Quat) -> Result<Vector3<f64>> {
    if q[0] + 1.0 <= CUT_LOCUS_TOL {
        return Err(Error::Domain(format!(
            "quaternion log undefined near scalar -1 (scalar part {})",
            q[0]
        )));
    }
    if q[0] < 0.0 {
        log_principal(&(-q))
    } else {
        log_principal(q)
    }
}

/// SO(3) right Jacobian
/// `J_r(phi) = I - (1-cos θ)/θ² [phi]x + (θ - sin θ)/θ³ [phi]x²`.
pub fn right_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let (a, b) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
        )
    } else {
        let t2 = theta * theta;
        ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
    };
    let k = skew(phi);
    Matrix3::identity() - k * a + k * k * b
}

/// Inverse of [`right_jacobian`], closed form with a series branch.
pub fn right_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let c = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        let t2 = theta * theta;
        1.0 / t2 - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    let k = skew(phi);
    Matrix3::identity() + k * 0.5 + k * k * c
}

/// Rotation matrix `C_IB` of `q` (body to inertial).
pub fn rotation_matrix(q: &Quat) -> Matrix3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Transport matrix between body frames induced by the retraction:
/// `J_r(2 Log(from⁻¹ ⊗ to))`.
pub fn transport_matrix(from: &Quat, to: &Quat) -> Result<Matrix3<f64>> {
    let phi = log_principal(&mul(&conj(from), to))?;
    Ok(right_jacobian(&(phi * 2.0)))
}

/// Closed-form retraction-induced terms for `q̇ = ½ q ⊗ ω` about a
/// reference, in body-frame half-rotation coordinates: returns `(C, S, E)`
/// with `C = 0`, `S = -[rho]x`, `E = [rate]x`.
///
/// `rate` is the quaternion block of the reference velocity in these
/// coordinates, which is `ω̄/2` on a dynamically consistent reference.
/// The base-point term and the transport-rate term are grouped so that
/// `C` vanishes; only `-C - E` enters the linearization. `S` carries a
/// minus sign because `(D₂R)⁻¹ ≈ I + [η]x` when tangent vectors are
/// right-trivialized.
pub fn quat_aux_terms(
    _q_ref: &Quat,
    rate: &Vector3<f64>,
    rho: &Vector3<f64>,
) -> (Matrix3<f64>, Matrix3<f64>, Matrix3<f64>) {
    (Matrix3::zeros(), -skew(rho), skew(rate))
}
