//! End-to-end minimal solver: two affine correspondences and two attitudes in,
//! ranked pose/focal hypotheses out.

use nalgebra::{Matrix2, Vector2, Vector3};

use crate::constraints::{
    build_constraint_matrix, coefficient_matrix, determinant_system, system_residual,
};
use crate::error::{Error, Result};
use crate::poly::BivariatePoly;
use crate::polyeig::{
    filter_solutions, linearize, recover_translation, solve_pencil, to_matrix_polynomial,
    TOL_CONSISTENCY,
};
use crate::types::{AffineCorrespondence, CameraIntrinsics, ImuAttitude, Pose, SolutionCandidate};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Also solve with the roles of the two correspondences swapped and merge.
    pub run_both_row_assignments: bool,
    pub tol_consistency: f64,
    pub min_focal_px: f64,
    pub max_focal_px: f64,
    /// Drop candidates that put a triangulated input point behind a camera.
    pub require_cheirality: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            run_both_row_assignments: true,
            tol_consistency: TOL_CONSISTENCY,
            min_focal_px: 50.0,
            max_focal_px: 10_000.0,
            require_cheirality: true,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_focal_px > 0.0 && self.min_focal_px < self.max_focal_px) {
            return Err(Error::InvalidConfig(format!(
                "focal window [{}, {}] is empty or non-positive",
                self.min_focal_px, self.max_focal_px
            )));
        }
        if !(self.tol_consistency > 0.0) {
            return Err(Error::InvalidConfig("tol_consistency must be positive".into()));
        }
        Ok(())
    }
}

/// Candidates plus bookkeeping about roots that could not become candidates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveReport {
    /// Sorted by residual, then cheirality, then eigen residual.
    pub candidates: Vec<SolutionCandidate>,
    /// Roots dropped because the constraint matrix lost more than one rank.
    pub degenerate_roots: usize,
    /// Roots dropped by the focal plausibility window.
    pub out_of_window: usize,
    /// Roots dropped because neither translation sign passed cheirality.
    pub cheirality_rejected: usize,
}

/// Minimal solve; see [`solve_2ac_report`] for the diagnostics.
///
/// Returns `DegenerateNullspace` when every root that passed the eigenvector
/// checks had an undetermined translation.
pub fn solve_2ac(
    ac_a: &AffineCorrespondence,
    ac_b: &AffineCorrespondence,
    imu_i: ImuAttitude,
    imu_j: ImuAttitude,
    principal_point: &Vector2<f64>,
    opts: &SolveOptions,
) -> Result<Vec<SolutionCandidate>> {
    let report = solve_2ac_report(ac_a, ac_b, imu_i, imu_j, principal_point, opts)?;
    if report.candidates.is_empty() && report.degenerate_roots > 0 {
        return Err(Error::DegenerateNullspace { ratio: 0.0 });
    }
    Ok(report.candidates)
}

pub fn solve_2ac_report(
    ac_a: &AffineCorrespondence,
    ac_b: &AffineCorrespondence,
    imu_i: ImuAttitude,
    imu_j: ImuAttitude,
    principal_point: &Vector2<f64>,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    opts.validate()?;
    check_inputs(ac_a, ac_b, imu_i, imu_j, principal_point)?;

    let mut report = SolveReport::default();
    let mut pool: Vec<SolutionCandidate> = Vec::new();
    let assignments: &[(&AffineCorrespondence, &AffineCorrespondence)] = if opts.run_both_row_assignments {
        &[(ac_a, ac_b), (ac_b, ac_a)]
    } else {
        &[(ac_a, ac_b)]
    };

    let mut systems = Vec::with_capacity(assignments.len());
    for &(first, second) in assignments {
        let m = build_constraint_matrix(first, second, imu_i, imu_j, principal_point)?;
        let g = determinant_system(&m)?;
        if g.iter().all(|p| p.max_abs() == 0.0) {
            return Err(Error::DegenerateInput("constraint minors vanish identically".into()));
        }
        systems.push((m, g));
    }
    // A root of one assignment's minors that is not a root of the other's
    // is spurious, so candidates are ranked on all minors together.
    let residual = |s: f64, focal_px: f64| {
        systems
            .iter()
            .map(|(m, g)| system_residual(g, s, m.internal_from_focal(focal_px)))
            .fold(0.0, f64::max)
    };

    for (m, g) in &systems {
        let pencil = linearize(&to_matrix_polynomial(&coefficient_matrix(g)?));
        let pairs = solve_pencil(&pencil)?;

        for mut root in filter_solutions(&pairs, opts.tol_consistency) {
            (root.s, root.f) = polish_root(g, root.s, root.f);
            let focal_px = m.focal_from_internal(root.f);
            if !(opts.min_focal_px..=opts.max_focal_px).contains(&focal_px) {
                report.out_of_window += 1;
                continue;
            }
            let (t_aligned, gap) = match recover_translation(m, root.s, root.f) {
                Ok(v) => v,
                Err(Error::DegenerateNullspace { .. }) => {
                    report.degenerate_roots += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let mut cand = SolutionCandidate::from_aligned(root.s, focal_px, t_aligned, imu_i, imu_j);
            cand.residual = residual(root.s, focal_px);
            cand.eigen_residual = root.eigen_residual;
            cand.nullspace_gap = gap;

            cand.cheirality_ok = resolve_translation_sign(&mut cand, &[*ac_a, *ac_b], principal_point);
            if !cand.cheirality_ok && opts.require_cheirality {
                report.cheirality_rejected += 1;
                continue;
            }
            merge_candidate(&mut pool, cand);
        }
    }

    pool.sort_by(|a, b| {
        a.residual
            .total_cmp(&b.residual)
            .then(b.cheirality_ok.cmp(&a.cheirality_ok))
            .then(a.eigen_residual.total_cmp(&b.eigen_residual))
    });
    report.candidates = pool;
    Ok(report)
}

/// Gauss–Newton on the normalized minors, started from an eigenvalue root.
/// A step is kept only if it lowers the largest minor magnitude, so a
/// well-separated root is never moved away from.
fn polish_root(g: &[BivariatePoly; 4], s: f64, f: f64) -> (f64, f64) {
    const STEPS: usize = 4;
    let g = g.map(|p| p.normalized());
    let (mut s, mut f) = (s, f);
    let mut best = system_residual(&g, s, f);
    for _ in 0..STEPS {
        let (mut jtj, mut jtr) = (Matrix2::zeros(), Vector2::zeros());
        for p in &g {
            let (v, ds, df) = p.eval_grad(s, f);
            let row = Vector2::new(ds, df);
            jtj += row * row.transpose();
            jtr += row * v;
        }
        let Some(step) = jtj.try_inverse().map(|inv| inv * jtr) else {
            break;
        };
        let (s_new, f_new) = (s - step.x, f - step.y);
        let r = system_residual(&g, s_new, f_new);
        if !(f_new > 0.0 && r < best) {
            break;
        }
        (s, f, best) = (s_new, f_new, r);
    }
    (s, f)
}

fn check_inputs(
    ac_a: &AffineCorrespondence,
    ac_b: &AffineCorrespondence,
    imu_i: ImuAttitude,
    imu_j: ImuAttitude,
    principal_point: &Vector2<f64>,
) -> Result<()> {
    for ac in [ac_a, ac_b] {
        if !ac.is_finite() {
            return Err(Error::DegenerateInput("correspondence is not finite".into()));
        }
        if ac.a.determinant().abs() <= AffineCorrespondence::MIN_ABS_DET {
            return Err(Error::DegenerateInput("affine matrix is singular".into()));
        }
    }
    if !(imu_i.is_finite() && imu_j.is_finite()) {
        return Err(Error::DegenerateInput("attitude is not finite".into()));
    }
    if !principal_point.iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateInput("principal point is not finite".into()));
    }
    let close = |p: &Vector2<f64>, q: &Vector2<f64>| (p - q).norm() <= 1e-9 * (1.0 + p.norm());
    if close(&ac_a.x_i, &ac_b.x_i) && close(&ac_a.x_j, &ac_b.x_j) {
        return Err(Error::DegenerateInput("the two correspondences coincide".into()));
    }
    Ok(())
}

/// Keeps one candidate per root: two are the same root when
/// `|Δs| < 1e-6` and `|Δfocal| / focal < 1e-6`; the lower residual wins.
fn merge_candidate(pool: &mut Vec<SolutionCandidate>, cand: SolutionCandidate) {
    let same = |c: &SolutionCandidate| {
        (c.s - cand.s).abs() < 1e-6 && (c.focal_px - cand.focal_px).abs() < 1e-6 * cand.focal_px
    };
    match pool.iter_mut().find(|c| same(c)) {
        Some(existing) if cand.residual < existing.residual => *existing = cand,
        Some(_) => {}
        None => pool.push(cand),
    }
}

/// Chooses the sign of `t` that puts every given correspondence in front of
/// both cameras. Returns whether such a sign exists; the candidate is left
/// unchanged when it does not.
pub fn resolve_translation_sign(
    cand: &mut SolutionCandidate,
    acs: &[AffineCorrespondence],
    principal_point: &Vector2<f64>,
) -> bool {
    let in_front = |pose: &Pose| {
        acs.iter().all(|ac| {
            matches!(
                triangulate_depth_signs(pose, cand.focal_px, ac, principal_point),
                Ok((zi, zj)) if zi > 0.0 && zj > 0.0
            )
        })
    };
    if in_front(&cand.pose) {
        return true;
    }
    if in_front(&cand.pose.with_flipped_translation()) {
        cand.flip_translation();
        return true;
    }
    false
}

/// Signed depths, in both camera frames, of the midpoint of the two viewing
/// rays of a correspondence.
pub fn triangulate_depth_signs(
    pose: &Pose,
    focal_px: f64,
    ac: &AffineCorrespondence,
    principal_point: &Vector2<f64>,
) -> Result<(f64, f64)> {
    let k = CameraIntrinsics::new(focal_px, *principal_point)?;
    let rt = pose.rotation.transpose();
    let di = k.ray(&ac.x_i);
    let dj = rt * k.ray(&ac.x_j);
    let cj = -(rt * pose.translation);

    let sin_angle = di.cross(&dj).norm() / (di.norm() * dj.norm());
    if !(sin_angle >= 1e-6) {
        return Err(Error::NearParallelRays);
    }
    // Minimize |λi di − (cj + λj dj)|².
    let a = Matrix2::new(di.dot(&di), -di.dot(&dj), di.dot(&dj), -dj.dot(&dj));
    let b = Vector2::new(di.dot(&cj), dj.dot(&cj));
    let lambda = a.try_inverse().ok_or(Error::NearParallelRays)? * b;
    let p: Vector3<f64> = (di * lambda.x + cj + dj * lambda.y) / 2.0;
    let pj = pose.rotation * p + pose.translation;
    Ok((p.z, pj.z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::stability_metrics;
    use crate::synth::{generate_scene, Motion, SceneConfig, SyntheticScene};

    fn scene(seed: u64, motion: Motion) -> SyntheticScene {
        generate_scene(&SceneConfig {
            n_points: 6,
            seed,
            motion,
            ..SceneConfig::default()
        })
        .unwrap()
    }

    fn solve(sc: &SyntheticScene, a: usize, b: usize) -> Vec<SolutionCandidate> {
        solve_2ac(
            &sc.correspondences[a],
            &sc.correspondences[b],
            sc.imu_i,
            sc.imu_j,
            &sc.principal_point,
            &SolveOptions::default(),
        )
        .unwrap()
    }

    fn closest(cands: &[SolutionCandidate], sc: &SyntheticScene) -> SolutionCandidate {
        *cands
            .iter()
            .min_by(|a, b| {
                let ka = (a.s - sc.gt_s).abs() + (a.focal_px - sc.gt_focal_px).abs() / sc.gt_focal_px;
                let kb = (b.s - sc.gt_s).abs() + (b.focal_px - sc.gt_focal_px).abs() / sc.gt_focal_px;
                ka.total_cmp(&kb)
            })
            .expect("at least one candidate")
    }

    #[test]
    fn noise_free_random_motion_recovers_ground_truth() {
        for seed in 0..10 {
            let sc = scene(seed, Motion::Random);
            let cands = solve(&sc, 0, 1);
            let best = closest(&cands, &sc);
            let (xf, xr, xt) = stability_metrics(&best, sc.gt_focal_px, &sc.gt_pose);
            assert!(xf <= 1e-8 && xr <= 1e-8 && xt <= 1e-8, "seed {seed}: {xf:e} {xr:e} {xt:e}");
            assert!(best.cheirality_ok);
            // Cheirality fixed the sign, so the raw difference is small too.
            assert!((best.pose.translation - sc.gt_pose.translation).norm() < 1e-8);
        }
    }

    #[test]
    fn candidates_are_sorted_and_valid() {
        let sc = scene(3, Motion::Random);
        let cands = solve(&sc, 0, 1);
        for w in cands.windows(2) {
            assert!(w[0].residual <= w[1].residual);
        }
        for c in &cands {
            assert!(crate::rotations::is_rotation(&c.pose.rotation, 1e-9));
            assert!((c.pose.translation.norm() - 1.0).abs() < 1e-12);
            assert!((c.focal_px * c.f_reciprocal - 1.0).abs() < 1e-12);
        }
        // Only the true root zeroes the minors of both row assignments.
        assert!(cands[0].residual <= 1e-10);
        assert!((cands[0].s - sc.gt_s).abs() <= 1e-8);
        assert!(cands.iter().skip(1).all(|c| c.residual > 1e-6));
    }

    #[test]
    fn best_candidate_is_ground_truth_for_any_pair() {
        let sc = scene(4, Motion::Random);
        for (a, b) in [(0, 1), (1, 0), (2, 5), (5, 2)] {
            let best = solve(&sc, a, b)[0];
            let (xf, xr, xt) = stability_metrics(&best, sc.gt_focal_px, &sc.gt_pose);
            assert!(xf <= 1e-8 && xr <= 1e-8 && xt <= 1e-8, "{a} {b}: {xf:e} {xr:e} {xt:e}");
        }
    }

    #[test]
    fn forward_motion_recovers_ground_truth() {
        for seed in 0..5 {
            let sc = scene(20 + seed, Motion::Forward);
            let best = closest(&solve(&sc, 0, 1), &sc);
            assert!((best.s - sc.gt_s).abs() <= 1e-6);
            assert!((best.focal_px - sc.gt_focal_px).abs() / sc.gt_focal_px <= 1e-6);
        }
    }

    #[test]
    fn swapping_inputs_agrees() {
        for seed in 0..5 {
            let sc = scene(40 + seed, Motion::Random);
            let b1 = closest(&solve(&sc, 0, 1), &sc);
            let b2 = closest(&solve(&sc, 1, 0), &sc);
            assert!((b1.s - b2.s).abs() <= 1e-6 * (1.0 + b1.s.abs()));
            assert!((b1.focal_px - b2.focal_px).abs() <= 1e-6 * b1.focal_px);
        }
    }

    #[test]
    fn single_assignment_also_recovers() {
        let sc = scene(61, Motion::Planar);
        let opts = SolveOptions {
            run_both_row_assignments: false,
            ..SolveOptions::default()
        };
        let cands = solve_2ac(
            &sc.correspondences[0],
            &sc.correspondences[1],
            sc.imu_i,
            sc.imu_j,
            &sc.principal_point,
            &opts,
        )
        .unwrap();
        let best = closest(&cands, &sc);
        assert!((best.focal_px - sc.gt_focal_px).abs() / sc.gt_focal_px <= 1e-8);
    }

    #[test]
    fn returned_poses_satisfy_epipolar_constraint() {
        let sc = scene(70, Motion::Sideways);
        for c in solve(&sc, 0, 1) {
            let k = c.intrinsics(sc.principal_point);
            for ac in &sc.correspondences[..2] {
                let ri = k.ray(&ac.x_i).normalize();
                let rj = k.ray(&ac.x_j).normalize();
                let r = rj.dot(&(c.pose.essential() * ri));
                assert!(r.abs() <= 1e-6, "{r:e}");
            }
        }
    }

    #[test]
    fn duplicated_correspondence_is_rejected() {
        let sc = scene(80, Motion::Random);
        let ac = sc.correspondences[0];
        let err = solve_2ac(&ac, &ac, sc.imu_i, sc.imu_j, &sc.principal_point, &SolveOptions::default());
        assert!(matches!(err, Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn invalid_focal_window() {
        let sc = scene(81, Motion::Random);
        let opts = SolveOptions {
            min_focal_px: 500.0,
            max_focal_px: 100.0,
            ..SolveOptions::default()
        };
        let err = solve_2ac(
            &sc.correspondences[0],
            &sc.correspondences[1],
            sc.imu_i,
            sc.imu_j,
            &sc.principal_point,
            &opts,
        );
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn triangulation_examples() {
        let sc = scene(90, Motion::Random);
        let ac = &sc.correspondences[0];
        let (zi, zj) = triangulate_depth_signs(&sc.gt_pose, sc.gt_focal_px, ac, &sc.principal_point).unwrap();
        let x = sc.points[0];
        let xj = sc.gt_pose.rotation * x + sc.gt_pose.translation;
        assert!((zi - x.z).abs() <= 0.01 * x.z, "{zi} vs {}", x.z);
        assert!((zj - xj.z).abs() <= 0.01 * xj.z);

        let flipped = sc.gt_pose.with_flipped_translation();
        let (zi, zj) = triangulate_depth_signs(&flipped, sc.gt_focal_px, ac, &sc.principal_point).unwrap();
        assert!(zi < 0.0 || zj < 0.0);

        // Identical rays: zero rotation and the same pixel in both views.
        let pose = Pose::new(nalgebra::Matrix3::identity(), Vector3::z());
        let same = AffineCorrespondence::new(sc.principal_point, sc.principal_point, Matrix2::identity());
        assert_eq!(
            triangulate_depth_signs(&pose, 500.0, &same, &sc.principal_point),
            Err(Error::NearParallelRays)
        );
    }

    #[test]
    fn focal_window_keeps_benchmark_range() {
        let opts = SolveOptions::default();
        assert!(opts.min_focal_px <= 100.0 && opts.max_focal_px >= 1000.0);
    }
}
