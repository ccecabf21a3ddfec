//! Unit 2-sphere operators: `R_s(w) = s cos|w| + w sinc|w|`.

use nalgebra::{Matrix3, Matrix3x2, Vector2, Vector3};

use super::quaternion::{sinc, SMALL_ANGLE};
use crate::error::{Error, Result};

/// Angular distance from the antipode below which the inverse retraction fails.
pub const ANTIPODAL_TOL: f64 = 1e-9;

/// Orthonormal tangent frame at `s`, Gram–Schmidt on the two ambient axes
/// least aligned with `s` (ties broken by axis index).
pub fn frame(s: &Vector3<f64>) -> Matrix3x2<f64> {
    let mut axes = [0usize, 1, 2];
    axes.sort_by(|&a, &b| s[a].abs().total_cmp(&s[b].abs()));
    let ea = Vector3::ith(axes[0], 1.0);
    let eb = Vector3::ith(axes[1], 1.0);
    let f1 = (ea - s * s.dot(&ea)).normalize();
    let f2 = (eb - s * s.dot(&eb) - f1 * f1.dot(&eb)).normalize();
    Matrix3x2::from_columns(&[f1, f2])
}

/// Retraction with an ambient tangent vector `w ⟂ s`.
pub fn retract_ambient(s: &Vector3<f64>, w: &Vector3<f64>) -> Vector3<f64> {
    let theta = w.norm();
    s * theta.cos() + w * sinc(theta)
}

pub fn retract(s: &Vector3<f64>, c: &Vector2<f64>) -> Vector3<f64> {
    retract_ambient(s, &(frame(s) * c))
}

/// Ambient tangent `w` at `s` with `retract_ambient(s, w) == t`.
pub fn inverse_retract_ambient(s: &Vector3<f64>, t: &Vector3<f64>) -> Result<Vector3<f64>> {
    let d = s.dot(t);
    let perp = t - s * d;
    let vn = perp.norm();
    let theta = vn.atan2(d);
    if theta > std::f64::consts::PI - ANTIPODAL_TOL {
        return Err(Error::Domain(format!(
            "sphere inverse retraction at antipodal points (angle {theta})"
        )));
    }
    if vn == 0.0 {
        return Ok(Vector3::zeros());
    }
    let scale = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0
    } else {
        theta / vn
    };
    Ok(perp * scale)
}

pub fn inverse_retract(s: &Vector3<f64>, t: &Vector3<f64>) -> Result<Vector2<f64>> {
    Ok(frame(s).transpose() * inverse_retract_ambient(s, t)?)
}

/// Ambient matrix of the differential `DR_s(w)[·]`.
pub fn retraction_differential(s: &Vector3<f64>, w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let sc = sinc(theta);
    // (cos θ - sinc θ)/θ²
    let k = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0
    } else {
        (theta.cos() - sc) / (theta * theta)
    };
    Matrix3::identity() * sc + (w * w.transpose()) * k - (s * w.transpose()) * sc
}

/// Retraction-induced transport between frames at `from` and `to`.
pub fn transport_matrix(
    from: &Vector3<f64>,
    to: &Vector3<f64>,
) -> Result<nalgebra::Matrix2<f64>> {
    if from == to {
        return Ok(nalgebra::Matrix2::identity());
    }
    let w = inverse_retract_ambient(from, to)?;
    Ok(frame(to).transpose() * retraction_differential(from, &w) * frame(from))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn retract_quarter_turn() {
        let s = Vector3::new(1.0, 0.0, 0.0);
        let w = Vector3::new(0.0, FRAC_PI_2, 0.0);
        let t = retract_ambient(&s, &w);
        assert!((t - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn frame_is_orthonormal_and_tangent() {
        for s in [
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(1.0, 1.0, 1.0).normalize(),
            Vector3::new(-0.3, 0.9, 0.1).normalize(),
        ] {
            let f = frame(&s);
            assert!((f.transpose() * f - nalgebra::Matrix2::identity()).amax() < 1e-14);
            assert!((f.transpose() * s).amax() < 1e-15);
        }
    }

    #[test]
    fn antipode_is_rejected() {
        let s = Vector3::new(0.0, 0.0, 1.0);
        assert!(inverse_retract(&s, &(-s)).is_err());
    }

    #[test]
    fn differential_matches_finite_differences() {
        let s = Vector3::new(0.2, -0.5, 0.8).normalize();
        let f = frame(&s);
        let w = f * Vector2::new(0.7, -0.4);
        let d = f * Vector2::new(0.3, 0.9);
        let h = 1e-6;
        let fd = (retract_ambient(&s, &(w + d * h)) - retract_ambient(&s, &(w - d * h))) / (2.0 * h);
        assert!((retraction_differential(&s, &w) * d - fd).norm() < 1e-8);
    }
}
