//! Accuracy and stability metrics against ground truth.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::types::{Pose, SolutionCandidate};

/// Geodesic distance between two rotations, in degrees.
pub fn rotation_error(r: &Matrix3<f64>, r_gt: &Matrix3<f64>) -> f64 {
    let c = (((r_gt * r.transpose()).trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    c.acos().to_degrees()
}

/// Angle between two translation directions, in degrees.
pub fn translation_error(t: &Vector3<f64>, t_gt: &Vector3<f64>) -> Result<f64> {
    let (n, n_gt) = (t.norm(), t_gt.norm());
    if !(n > 0.0 && n_gt > 0.0) {
        return Err(Error::ZeroVector);
    }
    let c = (t.dot(t_gt) / (n * n_gt)).clamp(-1.0, 1.0);
    Ok(c.acos().to_degrees())
}

/// Like [`translation_error`] but treats `t` and `−t` as the same direction.
pub fn translation_error_unsigned(t: &Vector3<f64>, t_gt: &Vector3<f64>) -> Result<f64> {
    let e = translation_error(t, t_gt)?;
    Ok(e.min(180.0 - e))
}

pub fn focal_error(f_est_px: f64, f_gt_px: f64) -> f64 {
    (f_gt_px - f_est_px).abs() / f_gt_px
}

/// `(ξ_f, ξ_R, ξ_t)`: relative focal error, Frobenius rotation difference and
/// the norm of the difference of unit translations (sign aligned).
pub fn stability_metrics(cand: &SolutionCandidate, f_gt_px: f64, gt: &Pose) -> (f64, f64, f64) {
    let xi_f = focal_error(cand.focal_px, f_gt_px);
    let xi_r = (gt.rotation - cand.pose.rotation).norm();
    let t = cand.pose.translation.normalize();
    let t_gt = gt.translation.normalize();
    let xi_t = (t_gt - t).norm().min((t_gt + t).norm());
    (xi_f, xi_r, xi_t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub rot_err_deg: f64,
    pub trans_err_deg: f64,
    pub focal_rel_err: f64,
    pub xi_f: f64,
    pub xi_r: f64,
    pub xi_t: f64,
}

impl ErrorReport {
    /// Translation error is measured sign-agnostically only if `signed` is false.
    pub fn compute(cand: &SolutionCandidate, f_gt_px: f64, gt: &Pose, signed: bool) -> Result<Self> {
        let trans_err_deg = if signed {
            translation_error(&cand.pose.translation, &gt.translation)?
        } else {
            translation_error_unsigned(&cand.pose.translation, &gt.translation)?
        };
        let (xi_f, xi_r, xi_t) = stability_metrics(cand, f_gt_px, gt);
        Ok(Self {
            rot_err_deg: rotation_error(&cand.pose.rotation, &gt.rotation),
            trans_err_deg,
            focal_rel_err: focal_error(cand.focal_px, f_gt_px),
            xi_f,
            xi_r,
            xi_t,
        })
    }
}
