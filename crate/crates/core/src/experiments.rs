//! Monte-Carlo benchmarks on synthetic scenes: numerical stability on exact
//! data and error trends under noise.
//!
//! Every trial solves one minimal problem (the first two correspondences of a
//! fresh scene) and keeps the candidate closest to ground truth. Trials run in
//! parallel; each has its own seed, and results are collected in trial order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{stability_metrics, ErrorReport};
use crate::solver::{solve_2ac_report, SolveOptions};
use crate::synth::{generate_scene, Motion, NoiseConfig, SceneConfig, SyntheticScene};
use crate::types::SolutionCandidate;

/// Seed of item `index` in a family identified by `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub scene_seed: u64,
    /// Errors of the candidate closest to ground truth.
    pub report: Option<ErrorReport>,
    /// Some candidate matches the true `(s, focal)` to `ROOT_TOL`.
    pub root_found: bool,
    /// The solver reported a rank-deficient null space or rejected the input
    /// as degenerate.
    pub degenerate: bool,
    pub error: Option<Error>,
}

pub const ROOT_TOL: f64 = 1e-8;

fn closest(cands: &[SolutionCandidate], sc: &SyntheticScene) -> Option<SolutionCandidate> {
    let dist = |c: &SolutionCandidate| {
        let (xf, xr, xt) = stability_metrics(c, sc.gt_focal_px, &sc.gt_pose);
        xf + xr + xt
    };
    cands
        .iter()
        .min_by(|a, b| dist(a).total_cmp(&dist(b)))
        .copied()
}

/// Generates the scene for `cfg` and solves its first two correspondences.
pub fn run_trial(cfg: &SceneConfig, opts: &SolveOptions) -> Result<TrialOutcome> {
    let sc = generate_scene(&SceneConfig { n_points: cfg.n_points.max(2), ..*cfg })?;
    Ok(solve_scene(&sc, cfg.seed, opts))
}

pub fn solve_scene(sc: &SyntheticScene, scene_seed: u64, opts: &SolveOptions) -> TrialOutcome {
    let (a, b) = (&sc.correspondences[0], &sc.correspondences[1]);
    let mut out = TrialOutcome {
        scene_seed,
        report: None,
        root_found: false,
        degenerate: false,
        error: None,
    };
    match solve_2ac_report(a, b, sc.imu_i, sc.imu_j, &sc.principal_point, opts) {
        Ok(rep) => {
            out.degenerate = rep.degenerate_roots > 0;
            out.root_found = rep.candidates.iter().any(|c| {
                (c.s - sc.gt_s).abs() <= ROOT_TOL
                    && (c.focal_px - sc.gt_focal_px).abs() <= ROOT_TOL * sc.gt_focal_px
            });
            out.report = closest(&rep.candidates, sc)
                .and_then(|c| ErrorReport::compute(&c, sc.gt_focal_px, &sc.gt_pose, false).ok());
        }
        Err(e) => {
            out.degenerate = matches!(e, Error::DegenerateInput(_) | Error::DegenerateNullspace { .. });
            out.error = Some(e);
        }
    }
    out
}

/// Runs `n_trials` trials of `base` with derived scene seeds.
pub fn run_trials(base: &SceneConfig, n_trials: usize, opts: &SolveOptions) -> Result<Vec<TrialOutcome>> {
    (0..n_trials)
        .into_par_iter()
        .map(|k| {
            let cfg = SceneConfig {
                seed: derive_seed(base.seed, k as u64),
                n_points: 2,
                ..*base
            };
            run_trial(&cfg, opts)
        })
        .collect()
}

/// Linear-interpolation quantile of unsorted data; `NaN` for empty input.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// One CSV line of a benchmark: `sweep_value, metric, median, q25, q75`.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub sweep_value: f64,
    pub metric: String,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str = "sweep_value,metric,median,q25,q75";

    pub fn new(sweep_value: f64, metric: impl Into<String>, values: &[f64]) -> Self {
        Self {
            sweep_value,
            metric: metric.into(),
            median: quantile(values, 0.5),
            q25: quantile(values, 0.25),
            q75: quantile(values, 0.75),
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e}",
            self.sweep_value, self.metric, self.median, self.q25, self.q75
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilitySummary {
    pub xi_f: Vec<f64>,
    pub xi_r: Vec<f64>,
    pub xi_t: Vec<f64>,
    /// Trials without any candidate.
    pub failures: usize,
}

impl StabilitySummary {
    pub fn medians(&self) -> (f64, f64, f64) {
        (median(&self.xi_f), median(&self.xi_r), median(&self.xi_t))
    }

    pub fn rows(&self, sweep_value: f64, prefix: &str) -> Vec<BenchRow> {
        vec![
            BenchRow::new(sweep_value, format!("{prefix}xi_f"), &self.xi_f),
            BenchRow::new(sweep_value, format!("{prefix}xi_r"), &self.xi_r),
            BenchRow::new(sweep_value, format!("{prefix}xi_t"), &self.xi_t),
        ]
    }
}

fn summarize_stability(outcomes: &[TrialOutcome]) -> StabilitySummary {
    let mut s = StabilitySummary { xi_f: vec![], xi_r: vec![], xi_t: vec![], failures: 0 };
    for o in outcomes {
        match &o.report {
            Some(r) => {
                s.xi_f.push(r.xi_f);
                s.xi_r.push(r.xi_r);
                s.xi_t.push(r.xi_t);
            }
            None => s.failures += 1,
        }
    }
    s
}

/// Noise-free trials with random motion.
pub fn stability_bench(n_trials: usize, seed: u64, opts: &SolveOptions) -> Result<StabilitySummary> {
    let base = SceneConfig { seed, motion: Motion::Random, ..SceneConfig::default() };
    Ok(summarize_stability(&run_trials(&base, n_trials, opts)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseSweep {
    /// Image noise σ ∈ {0, 0.2, …, 1.0} px.
    Image,
    /// Pitch noise σ ∈ {0, 0.02, …, 0.2}° with 1 px image noise.
    Pitch,
    /// Roll noise σ ∈ {0, 0.02, …, 0.2}° with 1 px image noise.
    Roll,
}

impl NoiseSweep {
    pub fn values(&self) -> Vec<f64> {
        match self {
            NoiseSweep::Image => (0..=5).map(|k| k as f64 * 0.2).collect(),
            NoiseSweep::Pitch | NoiseSweep::Roll => (0..=10).map(|k| k as f64 * 0.02).collect(),
        }
    }

    pub fn noise(&self, sigma: f64) -> NoiseConfig {
        let base = NoiseConfig::none();
        match self {
            NoiseSweep::Image => NoiseConfig { image_px: sigma, ..base },
            NoiseSweep::Pitch => NoiseConfig { image_px: 1.0, pitch_deg: sigma, ..base },
            NoiseSweep::Roll => NoiseConfig { image_px: 1.0, roll_deg: sigma, ..base },
        }
    }
}

/// Accuracy at one noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePoint {
    pub motion: Motion,
    pub sigma: f64,
    pub eps_f: Vec<f64>,
    pub eps_r: Vec<f64>,
    pub eps_t: Vec<f64>,
    pub failures: usize,
}

impl NoisePoint {
    pub fn medians(&self) -> (f64, f64, f64) {
        (median(&self.eps_f), median(&self.eps_r), median(&self.eps_t))
    }

    /// Metric names are prefixed with the motion pattern, e.g. `forward:eps_r`.
    pub fn rows(&self) -> Vec<BenchRow> {
        let m = self.motion;
        vec![
            BenchRow::new(self.sigma, format!("{m}:eps_f"), &self.eps_f),
            BenchRow::new(self.sigma, format!("{m}:eps_r"), &self.eps_r),
            BenchRow::new(self.sigma, format!("{m}:eps_t"), &self.eps_t),
        ]
    }
}

/// Runs `n_trials` per noise level. The same scene seeds are used at every
/// level, so the noise draws are shared and only their scale changes.
pub fn noise_sweep(
    sweep: NoiseSweep,
    motion: Motion,
    n_trials: usize,
    seed: u64,
    opts: &SolveOptions,
) -> Result<Vec<NoisePoint>> {
    sweep
        .values()
        .into_iter()
        .map(|sigma| {
            let base = SceneConfig { seed, motion, noise: sweep.noise(sigma), ..SceneConfig::default() };
            let outcomes = run_trials(&base, n_trials, opts)?;
            let mut p = NoisePoint { motion, sigma, eps_f: vec![], eps_r: vec![], eps_t: vec![], failures: 0 };
            for o in &outcomes {
                match &o.report {
                    Some(r) => {
                        p.eps_f.push(r.focal_rel_err);
                        p.eps_r.push(r.rot_err_deg);
                        p.eps_t.push(r.trans_err_deg);
                    }
                    None => p.failures += 1,
                }
            }
            Ok(p)
        })
        .collect()
}
