use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::{ReqError, Result};

/// Position plus orientation quaternion `(eta, eps)`, `eta` the real part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: Quaternion<f64>,
}

impl Pose {
    pub fn new(position: [f64; 3], quaternion_wxyz: [f64; 4]) -> Self {
        let [w, x, y, z] = quaternion_wxyz;
        Pose {
            position: Vector3::from(position),
            orientation: Quaternion::new(w, x, y, z),
        }
    }

    pub fn from_position(position: [f64; 3]) -> Self {
        Pose::new(position, [1.0, 0.0, 0.0, 0.0])
    }

    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = &self.orientation;
        [q.w, q.i, q.j, q.k]
    }

    /// Error unless the quaternion norm is within `1e-6` of one.
    pub fn check_unit(&self) -> Result<()> {
        let norm = self.orientation.norm();
        if (norm - 1.0).abs() > 1e-6 || !norm.is_finite() {
            return Err(ReqError::NonUnitQuaternion { norm });
        }
        Ok(())
    }
}

/// `e_p = p_d - p_t`.
pub fn position_error(current: &Pose, desired: &Pose) -> Vector3<f64> {
    desired.position - current.position
}

/// `e_o = eta_t eps_d - eta_d eps_t - S(eps_d) eps_t`, the vector part of
/// `Q_d * Q_t^-1`.
pub fn orientation_error(current: &Pose, desired: &Pose) -> Result<Vector3<f64>> {
    current.check_unit()?;
    desired.check_unit()?;
    let (eta_t, eps_t) = (current.orientation.w, current.orientation.imag());
    let (eta_d, eps_d) = (desired.orientation.w, desired.orientation.imag());
    Ok(eps_d * eta_t - eps_t * eta_d - eps_d.cross(&eps_t))
}

/// Rotation angle between two orientations, in `[0, pi]`.
pub fn geodesic_distance(a: &Pose, b: &Pose) -> f64 {
    let ua = UnitQuaternion::from_quaternion(a.orientation);
    let ub = UnitQuaternion::from_quaternion(b.orientation);
    ua.angle_to(&ub)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use std::f64::consts::PI;

    use super::*;

    fn about_z(theta: f64) -> Pose {
        Pose::new(
            [0.0; 3],
            [(theta / 2.0).cos(), 0.0, 0.0, (theta / 2.0).sin()],
        )
    }

    #[test]
    fn position_error_examples() {
        let a = Pose::from_position([0.0; 3]);
        let b = Pose::from_position([1.0, 2.0, 3.0]);
        assert_eq!(position_error(&a, &a), Vector3::zeros());
        assert_eq!(position_error(&a, &b), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(position_error(&b, &a), -position_error(&a, &b));
    }

    #[test]
    fn rotation_about_z_from_identity() {
        let e = orientation_error(&Pose::from_position([0.0; 3]), &about_z(PI / 2.0)).unwrap();
        assert!(e.x.abs() < 1e-15 && e.y.abs() < 1e-15);
        assert!((e.z - 2f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn sign_flip_gives_zero_error() {
        let p = Pose::new([0.0; 3], [0.5, 0.5, -0.5, 0.5]);
        let mut flipped = p;
        flipped.orientation = -p.orientation;
        assert!(orientation_error(&p, &p).unwrap().norm() < 1e-15);
        assert!(orientation_error(&p, &flipped).unwrap().norm() < 1e-15);
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        let bad = Pose::new([0.0; 3], [1.0, 0.1, 0.0, 0.0]);
        assert!(matches!(
            orientation_error(&bad, &Pose::from_position([0.0; 3])),
            Err(ReqError::NonUnitQuaternion { .. })
        ));
    }

    #[test]
    fn geodesic_distance_of_quarter_turn() {
        let d = geodesic_distance(&Pose::from_position([0.0; 3]), &about_z(PI / 2.0));
        assert!((d - PI / 2.0).abs() < 1e-12);
    }

    fn unit(v: [f64; 4]) -> Option<[f64; 4]> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        (n > 1e-3).then(|| v.map(|x| x / n))
    }

    proptest! {
        #[test]
        fn zero_iff_same_rotation(a in prop::array::uniform4(-1.0f64..1.0), b in prop::array::uniform4(-1.0f64..1.0)) {
            if let (Some(a), Some(b)) = (unit(a), unit(b)) {
                let pa = Pose::new([0.0; 3], a);
                let pb = Pose::new([0.0; 3], b);
                let e = orientation_error(&pa, &pb).unwrap();
                let same = geodesic_distance(&pa, &pb) < 1e-6;
                if same {
                    prop_assert!(e.norm() < 1e-6);
                } else {
                    prop_assert!(e.norm() > 0.0);
                }
            }
        }
    }
}
