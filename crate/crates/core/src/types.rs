use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::rotations;

/// Focal length and principal point of a camera with square pixels and no skew.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub focal_px: f64,
    pub principal_point: Vector2<f64>,
}

impl CameraIntrinsics {
    pub fn new(focal_px: f64, principal_point: Vector2<f64>) -> Result<Self> {
        if !(focal_px.is_finite() && focal_px > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "focal length must be positive and finite, got {focal_px}"
            )));
        }
        Ok(Self {
            focal_px,
            principal_point,
        })
    }

    /// Calibration matrix `K`.
    pub fn matrix(&self) -> Matrix3<f64> {
        let (cx, cy) = (self.principal_point.x, self.principal_point.y);
        Matrix3::new(
            self.focal_px, 0.0, cx, //
            0.0, self.focal_px, cy, //
            0.0, 0.0, 1.0,
        )
    }

    /// Back-projects a pixel to the ray `K⁻¹ x`, with unit third coordinate.
    pub fn ray(&self, pixel: &Vector2<f64>) -> Vector3<f64> {
        let p = pixel - self.principal_point;
        Vector3::new(p.x / self.focal_px, p.y / self.focal_px, 1.0)
    }

    pub fn project(&self, point: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(
            self.focal_px * point.x / point.z,
            self.focal_px * point.y / point.z,
        ) + self.principal_point
    }
}

/// A point correspondence together with the 2×2 Jacobian of the local
/// image-to-image mapping at `x_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineCorrespondence {
    pub x_i: Vector2<f64>,
    pub x_j: Vector2<f64>,
    pub a: Matrix2<f64>,
}

impl AffineCorrespondence {
    pub const MIN_ABS_DET: f64 = 1e-12;

    pub fn new(x_i: Vector2<f64>, x_j: Vector2<f64>, a: Matrix2<f64>) -> Self {
        Self { x_i, x_j, a }
    }

    pub fn is_finite(&self) -> bool {
        self.x_i.iter().chain(self.x_j.iter()).chain(self.a.iter()).all(|v| v.is_finite())
    }

    /// Finite with a nonsingular affine part.
    pub fn is_valid(&self) -> bool {
        self.is_finite() && self.a.determinant().abs() > Self::MIN_ABS_DET
    }

    /// The 3×3 block embedding `diag(A, 1)`.
    pub fn a_hat(&self) -> Matrix3<f64> {
        let a = &self.a;
        Matrix3::new(
            a[(0, 0)], a[(0, 1)], 0.0, //
            a[(1, 0)], a[(1, 1)], 0.0, //
            0.0, 0.0, 1.0,
        )
    }
}

/// Roll and pitch reported by an IMU, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImuAttitude {
    /// Rotation about the camera Z axis.
    pub roll: f64,
    /// Rotation about the camera X axis.
    pub pitch: f64,
}

impl ImuAttitude {
    pub fn new(roll: f64, pitch: f64) -> Self {
        Self { roll, pitch }
    }

    pub fn from_degrees(roll_deg: f64, pitch_deg: f64) -> Self {
        Self::new(roll_deg.to_radians(), pitch_deg.to_radians())
    }

    pub fn is_finite(&self) -> bool {
        self.roll.is_finite() && self.pitch.is_finite()
    }
}

/// Relative pose from view `i` to view `j`: `X_j = R X_i + t`, with `t` a
/// unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// `E = [t]× R`.
    pub fn essential(&self) -> Matrix3<f64> {
        rotations::cross_matrix(&self.translation) * self.rotation
    }

    /// Fundamental matrix `K⁻ᵀ E K⁻¹` for a camera shared by both views.
    pub fn fundamental(&self, intrinsics: &CameraIntrinsics) -> Matrix3<f64> {
        let k_inv = intrinsics
            .matrix()
            .try_inverse()
            .expect("calibration matrix with positive focal length is invertible");
        k_inv.transpose() * self.essential() * k_inv
    }

    pub fn with_flipped_translation(&self) -> Self {
        Self::new(self.rotation, -self.translation)
    }
}

/// One hypothesis produced by the minimal solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionCandidate {
    /// Cayley parameter `tan(θ/2)` of the rotation about the vertical axis.
    pub s: f64,
    /// Reciprocal of the focal length, in 1/pixels.
    pub f_reciprocal: f64,
    pub focal_px: f64,
    /// Pose in the original (not gravity-aligned) camera frames.
    pub pose: Pose,
    /// Unit translation between the gravity-aligned frames.
    pub t_aligned: Vector3<f64>,
    /// Largest normalized minor-polynomial value at `(s, f)`, over the minors
    /// of every row assignment that was solved.
    pub residual: f64,
    /// Relative residual of the pencil eigenpair that produced this candidate.
    pub eigen_residual: f64,
    /// Smallest over second-smallest singular value of the evaluated
    /// constraint matrix.
    pub nullspace_gap: f64,
    pub cheirality_ok: bool,
    /// Set when the constraint matrix lost more than one rank at `(s, f)`, in
    /// which case `t_aligned` is not determined by the data.
    pub degenerate_nullspace: bool,
}

impl SolutionCandidate {
    /// Assembles a candidate from aligned-frame quantities, composing the pose
    /// in the original frames.
    pub fn from_aligned(
        s: f64,
        focal_px: f64,
        t_aligned: Vector3<f64>,
        imu_i: ImuAttitude,
        imu_j: ImuAttitude,
    ) -> Self {
        let t_aligned = t_aligned.normalize();
        let pose = rotations::compose_relative_pose(s, &t_aligned, imu_i, imu_j);
        Self {
            s,
            f_reciprocal: 1.0 / focal_px,
            focal_px,
            pose,
            t_aligned,
            residual: 0.0,
            eigen_residual: 0.0,
            nullspace_gap: 0.0,
            cheirality_ok: false,
            degenerate_nullspace: false,
        }
    }

    pub fn intrinsics(&self, principal_point: Vector2<f64>) -> CameraIntrinsics {
        CameraIntrinsics {
            focal_px: self.focal_px,
            principal_point,
        }
    }

    /// Flips the sign of both translation representations.
    pub fn flip_translation(&mut self) {
        self.pose.translation = -self.pose.translation;
        self.t_aligned = -self.t_aligned;
    }
}
