//! Fixed problem sets for the criterion benchmarks.

use acpose_core::synth::generate_scene;
use acpose_core::{AffineCorrespondence, ImuAttitude, Result, SceneConfig, Vector2};

/// Everything `solve_2ac` needs for one call.
#[derive(Debug, Clone, Copy)]
pub struct MinimalProblem {
    pub ac_a: AffineCorrespondence,
    pub ac_b: AffineCorrespondence,
    pub imu_i: ImuAttitude,
    pub imu_j: ImuAttitude,
    pub principal_point: Vector2<f64>,
}

/// `n` noise-free problems with random motion, seeded `0..n`.
pub fn minimal_problems(n: usize) -> Result<Vec<MinimalProblem>> {
    (0..n as u64)
        .map(|seed| {
            let sc = generate_scene(&SceneConfig { n_points: 2, seed, ..SceneConfig::default() })?;
            Ok(MinimalProblem {
                ac_a: sc.correspondences[0],
                ac_b: sc.correspondences[1],
                imu_i: sc.imu_i,
                imu_j: sc.imu_j,
                principal_point: sc.principal_point,
            })
        })
        .collect()
}
