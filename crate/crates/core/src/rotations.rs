//! Rotation constructions: skew matrices, IMU alignment, the Cayley
//! Y-rotation and relative-pose composition.
//!
//! Rotations about the vertical axis are parameterized by `s = tan(θ/2)`,
//! which cannot represent `θ = ±π`. The benchmark regime is within ±10°.

use nalgebra::{Matrix3, Vector3};

use crate::types::{ImuAttitude, Pose};

/// Skew-symmetric matrix `[v]×` with `[v]× w = v × w`.
pub fn cross_matrix(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    )
}

/// `R_x(θ)` in the IMU-alignment sign convention.
pub fn rotation_x(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(
        1.0, 0.0, 0.0, //
        0.0, c, s, //
        0.0, -s, c,
    )
}

/// `R_z(θ)` in the IMU-alignment sign convention.
pub fn rotation_z(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(
        c, s, 0.0, //
        -s, c, 0.0, //
        0.0, 0.0, 1.0,
    )
}

/// Rotation by `θ` about the vertical (Y) axis.
pub fn rotation_y(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(
        c, 0.0, s, //
        0.0, 1.0, 0.0, //
        -s, 0.0, c,
    )
}

/// `R_imu = R_x(pitch) · R_z(roll)`: maps camera coordinates into a frame
/// whose Y axis is the vertical direction.
pub fn imu_alignment(att: ImuAttitude) -> Matrix3<f64> {
    let r = rotation_x(att.pitch) * rotation_z(att.roll);
    debug_assert!(is_rotation(&r, 1e-9));
    r
}

/// Attitude whose alignment maps the camera-frame vertical `up` onto +Y.
///
/// Inverse of `imu_alignment(a)ᵀ · e_y` for |pitch| < π/2.
pub fn attitude_from_vertical(up: &Vector3<f64>) -> ImuAttitude {
    let g = up.normalize();
    // R_imuᵀ e_y = (−sin r cos p, cos r cos p, sin p)
    let pitch = g.z.clamp(-1.0, 1.0).asin();
    let roll = (-g.x).atan2(g.y);
    ImuAttitude { roll, pitch }
}

/// Cayley form of a Y-axis rotation: `numerator / denominator`, with the
/// numerator polynomial in `s` and denominator `1 + s²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CayleyRy {
    pub numerator: Matrix3<f64>,
    pub denominator: f64,
}

impl CayleyRy {
    pub fn rotation(&self) -> Matrix3<f64> {
        self.numerator / self.denominator
    }
}

pub fn cayley_ry(s: f64) -> CayleyRy {
    let s2 = s * s;
    CayleyRy {
        numerator: Matrix3::new(
            1.0 - s2, 0.0, 2.0 * s, //
            0.0, 1.0 + s2, 0.0, //
            -2.0 * s, 0.0, 1.0 - s2,
        ),
        denominator: 1.0 + s2,
    }
}

/// `R = R_imu_jᵀ · R_y(s) · R_imu_i`, `t = R_imu_jᵀ · t̃`.
pub fn compose_relative_pose(
    s: f64,
    t_aligned: &Vector3<f64>,
    imu_i: ImuAttitude,
    imu_j: ImuAttitude,
) -> Pose {
    let ri = imu_alignment(imu_i);
    let rj = imu_alignment(imu_j);
    let rotation = rj.transpose() * cayley_ry(s).rotation() * ri;
    Pose::new(rotation, rj.transpose() * t_aligned)
}

/// Inverse of [`compose_relative_pose`]: recovers `(s, t̃)` from a pose whose
/// rotation, once both views are aligned, is about the vertical axis only.
pub fn decompose_relative_pose(
    pose: &Pose,
    imu_i: ImuAttitude,
    imu_j: ImuAttitude,
) -> (f64, Vector3<f64>) {
    let ri = imu_alignment(imu_i);
    let rj = imu_alignment(imu_j);
    let ry = rj * pose.rotation * ri.transpose();
    // tan(θ/2) = sin θ / (1 + cos θ)
    let s = ry[(0, 2)] / (1.0 + ry[(0, 0)]);
    (s, rj * pose.translation)
}

/// `Ẽ = [t̃]× R_y(s)` with the `1 + s²` denominator cleared.
pub fn essential_from(s: f64, t_aligned: &Vector3<f64>) -> Matrix3<f64> {
    cross_matrix(t_aligned) * cayley_ry(s).numerator
}

pub fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    (r.transpose() * r - Matrix3::identity()).abs().max() <= tol
        && (r.determinant() - 1.0).abs() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn assert_mat_close(a: &Matrix3<f64>, b: &Matrix3<f64>, tol: f64) {
        let d = (a - b).abs().max();
        assert!(d <= tol, "max entry difference {d:e} > {tol:e}\n{a}\n{b}");
    }

    #[test]
    fn cross_matrix_examples() {
        assert_eq!(cross_matrix(&Vector3::zeros()), Matrix3::zeros());
        assert_eq!(
            cross_matrix(&Vector3::x()),
            Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0)
        );
        let v = cross_matrix(&Vector3::new(1.0, 2.0, 3.0)) * Vector3::new(4.0, 5.0, 6.0);
        // (2·6 − 3·5, 3·4 − 1·6, 1·5 − 2·4)
        assert_eq!(v, Vector3::new(-3.0, 6.0, -3.0));
    }

    #[test]
    fn imu_alignment_examples() {
        assert_mat_close(&imu_alignment(ImuAttitude::new(0.0, 0.0)), &Matrix3::identity(), 0.0);
        assert_mat_close(
            &imu_alignment(ImuAttitude::new(FRAC_PI_2, 0.0)),
            &Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0),
            1e-15,
        );
        let (roll, pitch) = (0.1f64, 0.2f64);
        let rx = Matrix3::new(
            1.0, 0.0, 0.0,
            0.0, pitch.cos(), pitch.sin(),
            0.0, -pitch.sin(), pitch.cos(),
        );
        let rz = Matrix3::new(
            roll.cos(), roll.sin(), 0.0,
            -roll.sin(), roll.cos(), 0.0,
            0.0, 0.0, 1.0,
        );
        let mut expected = Matrix3::zeros();
        for r in 0..3 {
            for c in 0..3 {
                expected[(r, c)] = (0..3).map(|k| rx[(r, k)] * rz[(k, c)]).sum();
            }
        }
        assert_mat_close(&imu_alignment(ImuAttitude::new(roll, pitch)), &expected, 1e-15);
    }

    #[test]
    fn cayley_examples() {
        assert_mat_close(&cayley_ry(0.0).rotation(), &Matrix3::identity(), 0.0);
        assert_mat_close(
            &cayley_ry(1.0).rotation(),
            &Matrix3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0),
            1e-15,
        );
        let theta = 10f64.to_radians();
        let s = (theta / 2.0).tan();
        assert_mat_close(&cayley_ry(s).rotation(), &rotation_y(theta), 1e-14);
    }

    #[test]
    fn compose_examples() {
        let id = ImuAttitude::default();
        let pose = compose_relative_pose(0.0, &Vector3::x(), id, id);
        assert_mat_close(&pose.rotation, &Matrix3::identity(), 0.0);
        assert_eq!(pose.translation, Vector3::x());

        let pose = compose_relative_pose(1.0, &Vector3::x(), id, id);
        assert_mat_close(&pose.rotation, &cayley_ry(1.0).rotation(), 0.0);

        let imu_i = ImuAttitude::new(0.12, -0.31);
        let imu_j = ImuAttitude::new(-0.2, 0.05);
        let t = Vector3::new(0.6, 0.0, 0.8);
        let pose = compose_relative_pose(0.05, &t, imu_i, imu_j);
        let ri = rotation_x(imu_i.pitch) * rotation_z(imu_i.roll);
        let rj = rotation_x(imu_j.pitch) * rotation_z(imu_j.roll);
        let theta = 2.0 * 0.05f64.atan();
        assert_mat_close(&pose.rotation, &(rj.transpose() * rotation_y(theta) * ri), 1e-14);
        assert!((pose.translation - rj.transpose() * t).norm() < 1e-15);
        assert!(is_rotation(&pose.rotation, 1e-9));
        assert!((pose.translation.norm() - 1.0).abs() < 1e-12);

        let (s, t_back) = decompose_relative_pose(&pose, imu_i, imu_j);
        assert!((s - 0.05).abs() < 1e-14);
        assert!((t_back - t).norm() < 1e-14);
    }

    #[test]
    fn essential_examples() {
        assert_eq!(essential_from(0.3, &Vector3::zeros()), Matrix3::zeros());
        assert_eq!(essential_from(0.0, &Vector3::x()), cross_matrix(&Vector3::x()));
    }

    #[test]
    fn vertical_attitude_round_trip() {
        let att = ImuAttitude::new(0.17, -0.09);
        let up = imu_alignment(att).transpose() * Vector3::y();
        let back = attitude_from_vertical(&up);
        assert!((back.roll - att.roll).abs() < 1e-14);
        assert!((back.pitch - att.pitch).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn cross_matrix_is_cross_product(
            v in prop::array::uniform3(-10.0f64..10.0),
            w in prop::array::uniform3(-10.0f64..10.0),
        ) {
            let (v, w) = (Vector3::from(v), Vector3::from(w));
            let s = cross_matrix(&v);
            prop_assert!((s * w - v.cross(&w)).norm() < 1e-12);
            prop_assert_eq!(s + s.transpose(), Matrix3::zeros());
        }

        #[test]
        fn cayley_is_rotation_with_trace(s in -50.0f64..50.0) {
            let r = cayley_ry(s).rotation();
            prop_assert!(is_rotation(&r, 1e-12));
            let expected = 1.0 + 2.0 * (1.0 - s * s) / (1.0 + s * s);
            prop_assert!((r.trace() - expected).abs() < 1e-12);
        }

        #[test]
        fn imu_alignment_is_orthonormal(roll in -3.2f64..3.2, pitch in -3.2f64..3.2) {
            let r = imu_alignment(ImuAttitude::new(roll, pitch));
            prop_assert!((r * r.transpose() - Matrix3::identity()).abs().max() < 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn equal_attitudes_cancel(
            roll in -1.0f64..1.0, pitch in -1.0f64..1.0, s in -0.5f64..0.5,
        ) {
            let att = ImuAttitude::new(roll, pitch);
            let pose = compose_relative_pose(s, &Vector3::z(), att, att);
            let r_imu = imu_alignment(att);
            // R = R_imuᵀ R_y R_imu, so conjugating back yields the bare R_y(s).
            let ry = r_imu * pose.rotation * r_imu.transpose();
            prop_assert!((ry - cayley_ry(s).rotation()).abs().max() < 1e-12);
        }

        #[test]
        fn essential_is_singular(s in -2.0f64..2.0, t in prop::array::uniform3(-1.0f64..1.0)) {
            let e = essential_from(s, &Vector3::from(t));
            prop_assert!(e.determinant().abs() < 1e-12);
        }
    }
}
