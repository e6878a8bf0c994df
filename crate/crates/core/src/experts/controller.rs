use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::pose::{orientation_error, position_error, Pose};
use crate::error::{ReqError, Result};

/// Position and orientation feedback gains, both symmetric positive definite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GainRepr", into = "GainRepr")]
pub struct GainSet {
    kp: Matrix3<f64>,
    ko: Matrix3<f64>,
}

#[derive(Serialize, Deserialize)]
struct GainRepr {
    kp: [[f64; 3]; 3],
    ko: [[f64; 3]; 3],
}

impl TryFrom<GainRepr> for GainSet {
    type Error = ReqError;

    fn try_from(r: GainRepr) -> Result<Self> {
        let m = |a: [[f64; 3]; 3]| Matrix3::from_fn(|i, j| a[i][j]);
        GainSet::new(m(r.kp), m(r.ko))
    }
}

impl From<GainSet> for GainRepr {
    fn from(g: GainSet) -> Self {
        let a = |m: Matrix3<f64>| std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]));
        GainRepr {
            kp: a(g.kp),
            ko: a(g.ko),
        }
    }
}

fn check_spd(m: &Matrix3<f64>) -> Result<()> {
    let asym = (m - m.transpose()).abs().max();
    if !m.iter().all(|v| v.is_finite())
        || asym > 1e-12 * m.abs().max().max(1.0)
        || m.cholesky().is_none()
    {
        return Err(ReqError::NotPositiveDefinite);
    }
    Ok(())
}

impl GainSet {
    pub fn new(kp: Matrix3<f64>, ko: Matrix3<f64>) -> Result<Self> {
        check_spd(&kp)?;
        check_spd(&ko)?;
        Ok(GainSet { kp, ko })
    }

    /// `kp * I` and `ko * I`.
    pub fn isotropic(kp: f64, ko: f64) -> Result<Self> {
        GainSet::new(Matrix3::identity() * kp, Matrix3::identity() * ko)
    }

    pub fn kp(&self) -> &Matrix3<f64> {
        &self.kp
    }

    pub fn ko(&self) -> &Matrix3<f64> {
        &self.ko
    }
}

/// Unclipped twist `[K_p e_p, K_o e_o]`. The desired quaternion is taken
/// in the hemisphere of the current one, so the rotation command follows
/// the shorter arc.
pub fn waypoint_action(current: &Pose, desired: &Pose, gains: &GainSet) -> Result<[f64; 6]> {
    let mut target = *desired;
    if current.orientation.dot(&desired.orientation) < 0.0 {
        target.orientation = -desired.orientation;
    }
    let v: Vector3<f64> = gains.kp * position_error(current, &target);
    let w: Vector3<f64> = gains.ko * orientation_error(current, &target)?;
    Ok([v.x, v.y, v.z, w.x, w.y, w.z])
}
