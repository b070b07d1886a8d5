use acpose_core::experiments::{noise_sweep, stability_bench, BenchRow, NoiseSweep};
use acpose_core::ransac::estimate;
use acpose_core::solver::solve_2ac_report;
use acpose_core::synth::{generate_scene, inject_outliers};
use acpose_core::{
    ErrorReport, Motion, NoiseConfig, RansacConfig, RobustResult, SceneConfig, SolutionCandidate, SolveOptions,
    SyntheticScene,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::dataset::{AttitudeDeg, Dataset, Record};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub motion: Motion,
    pub n_points: usize,
    pub seed: u64,
    pub noise: NoiseConfig,
    /// Fraction of correspondences replaced by random outliers.
    pub outliers: f64,
    pub focal_px: Option<f64>,
}

pub fn dataset_from_scene(sc: &SyntheticScene, inlier: Option<&[bool]>) -> Dataset {
    Dataset {
        image_size: sc.image_size,
        principal_point: sc.principal_point,
        focal_px: Some(sc.gt_focal_px),
        imu_i: AttitudeDeg::from_attitude(sc.imu_i),
        imu_j: AttitudeDeg::from_attitude(sc.imu_j),
        imu_i_true: Some(AttitudeDeg::from_attitude(sc.imu_i_true)),
        imu_j_true: Some(AttitudeDeg::from_attitude(sc.imu_j_true)),
        gt_pose: Some(sc.gt_pose),
        records: sc
            .correspondences
            .iter()
            .enumerate()
            .map(|(k, ac)| Record {
                ac: *ac,
                inlier: inlier.map(|m| m[k]),
            })
            .collect(),
    }
}

pub fn synth(p: &SynthParams) -> Result<Dataset, CliError> {
    if !(0.0..=1.0).contains(&p.outliers) {
        return Err(CliError::Usage("outlier fraction must lie in [0, 1]".into()));
    }
    let mut sc = generate_scene(&SceneConfig {
        n_points: p.n_points,
        seed: p.seed,
        motion: p.motion,
        noise: p.noise,
        focal_px: p.focal_px,
        ..SceneConfig::default()
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    rng.set_stream(2);
    let mask = inject_outliers(&mut sc.correspondences, p.outliers, sc.image_size, &mut rng);
    Ok(dataset_from_scene(&sc, Some(&mask)))
}

fn candidate_json(c: &SolutionCandidate, ds: &Dataset) -> Value {
    let r = c.pose.rotation;
    let mut v = json!({
        "s": c.s,
        "focal_px": c.focal_px,
        "f_reciprocal": c.f_reciprocal,
        "rotation": (0..3).flat_map(|i| (0..3).map(move |j| r[(i, j)])).collect::<Vec<_>>(),
        "translation": c.pose.translation.as_slice(),
        "t_aligned": c.t_aligned.as_slice(),
        "residual": c.residual,
        "eigen_residual": c.eigen_residual,
        "nullspace_gap": c.nullspace_gap,
        "cheirality": c.cheirality_ok,
    });
    if let (Some(f), Some(gt)) = (ds.focal_px, &ds.gt_pose) {
        if let Ok(e) = ErrorReport::compute(c, f, gt, true) {
            v["errors"] = json!({
                "rotation_deg": e.rot_err_deg,
                "translation_deg": e.trans_err_deg,
                "focal_rel": e.focal_rel_err,
            });
        }
    }
    v
}

pub fn solve(ds: &Dataset, pair: (usize, usize), opts: &SolveOptions) -> Result<Value, CliError> {
    let n = ds.records.len();
    for k in [pair.0, pair.1] {
        if k >= n {
            return Err(CliError::Usage(format!("index {k} out of range for {n} correspondences")));
        }
    }
    let report = solve_2ac_report(
        &ds.records[pair.0].ac,
        &ds.records[pair.1].ac,
        ds.imu_i.to_radians(),
        ds.imu_j.to_radians(),
        &ds.principal_point,
        opts,
    )?;
    if report.candidates.is_empty() && report.degenerate_roots > 0 {
        return Err(acpose_core::Error::DegenerateNullspace { ratio: 0.0 }.into());
    }
    Ok(json!({
        "pair": [pair.0, pair.1],
        "candidates": report.candidates.iter().map(|c| candidate_json(c, ds)).collect::<Vec<_>>(),
        "dropped": {
            "degenerate_nullspace": report.degenerate_roots,
            "focal_window": report.out_of_window,
            "cheirality": report.cheirality_rejected,
        },
    }))
}

pub fn robust(ds: &Dataset, cfg: &RansacConfig) -> Result<(RobustResult, Value), CliError> {
    let acs = ds.correspondences();
    let r = estimate(&acs, ds.imu_i.to_radians(), ds.imu_j.to_radians(), &ds.principal_point, cfg)?;
    let mut v = json!({
        "best": candidate_json(&r.best, ds),
        "inliers": r.inlier_count(),
        "inlier_ratio": r.inlier_count() as f64 / acs.len() as f64,
        "iterations_run": r.iterations_run,
        "score": r.score,
        "truncated_cost": r.truncated_cost,
        "inlier_mask": r.inlier_mask,
    });
    // Labelled synthetic data: report how many flagged inliers are true ones.
    let labelled: Vec<(bool, bool)> = ds
        .records
        .iter()
        .zip(&r.inlier_mask)
        .filter_map(|(rec, m)| rec.inlier.map(|truth| (*m, truth)))
        .collect();
    if labelled.len() == acs.len() && r.score > 0 {
        let tp = labelled.iter().filter(|(m, t)| *m && *t).count();
        v["inlier_precision"] = json!(tp as f64 / r.score as f64);
    }
    Ok((r, v))
}

pub fn csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BenchRow::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

pub fn bench_stability(trials: usize, seed: u64, opts: &SolveOptions) -> Result<Vec<BenchRow>, CliError> {
    let s = stability_bench(trials, seed, opts)?;
    Ok(s.rows(0.0, ""))
}

pub fn bench_noise(
    sweep: NoiseSweep,
    motions: &[Motion],
    trials: usize,
    seed: u64,
    opts: &SolveOptions,
) -> Result<Vec<BenchRow>, CliError> {
    let mut rows = Vec::new();
    for &m in motions {
        for p in noise_sweep(sweep, m, trials, seed, opts)? {
            rows.extend(p.rows());
        }
    }
    Ok(rows)
}
