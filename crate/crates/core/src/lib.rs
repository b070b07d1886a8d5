//! Relative pose (three degrees of freedom) and unknown focal length from two
//! affine correspondences when both views know their vertical direction.
//!
//! The pipeline is split across modules:
//!
//! * [`rotations`] builds the IMU alignment, the Cayley Y-rotation and the
//!   relative pose.
//! * [`poly`] is a small dense bivariate polynomial type in `(s, f)`.
//! * [`constraints`] forms the 4×3 polynomial constraint matrix, its four
//!   3×3 minors and the 6×42 coefficient matrix.
//! * [`polyeig`] turns that into a degree-6 polynomial eigenvalue problem,
//!   linearizes it to a 36×36 pencil and recovers `(s, f, t)`.
//! * [`solver`] is the end-to-end minimal solver, [`ransac`] wraps it.
//! * [`synth`], [`metrics`] and [`experiments`] make up the synthetic
//!   benchmark harness.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constraints;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod poly;
pub mod polyeig;
pub mod ransac;
pub mod rotations;
pub mod solver;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use metrics::ErrorReport;
pub use ransac::{RansacConfig, RobustResult};
pub use solver::{solve_2ac, SolveOptions};
pub use synth::{Motion, NoiseConfig, SceneConfig, SyntheticScene};
pub use types::{AffineCorrespondence, CameraIntrinsics, ImuAttitude, Pose, SolutionCandidate};

pub use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
