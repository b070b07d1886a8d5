//! Robust estimation over many affine correspondences.
//!
//! Each iteration samples two correspondences, runs the minimal solver and
//! scores every candidate by Sampson distance of the point pairs under the
//! candidate's own focal length. Iterations draw from independent random
//! streams and are evaluated in parallel batches, then consumed in order, so
//! the result is the same as a sequential run.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DVector, Dyn, Matrix3, OMatrix, Owned, Vector2, Vector3, Vector4, U4};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::solver::{solve_2ac, triangulate_depth_signs, SolveOptions};
use crate::types::{AffineCorrespondence, ImuAttitude, SolutionCandidate};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub max_iterations: usize,
    /// Probability of having drawn at least one all-inlier sample when the
    /// adaptive loop stops.
    pub confidence: f64,
    pub inlier_threshold_px: f64,
    pub min_inliers: usize,
    pub seed: u64,
    /// Polish the winning hypothesis by least squares on its inliers.
    pub refine: bool,
    pub solve: SolveOptions,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            confidence: 0.999,
            inlier_threshold_px: 1.0,
            min_inliers: 8,
            seed: 0,
            refine: true,
            solve: SolveOptions::default(),
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidConfig("confidence must lie in (0, 1)".into()));
        }
        if !(self.inlier_threshold_px > 0.0 && self.inlier_threshold_px.is_finite()) {
            return Err(Error::InvalidConfig("inlier threshold must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        self.solve.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustResult {
    pub best: SolutionCandidate,
    pub inlier_mask: Vec<bool>,
    pub iterations_run: usize,
    /// Number of inliers of `best`.
    pub score: usize,
    /// Sum over all correspondences of the Sampson distance truncated at the
    /// threshold; breaks ties between equal inlier counts.
    pub truncated_cost: f64,
}

impl RobustResult {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|m| **m).count()
    }
}

/// First-order distance of the pair `(x_i, x_j)` to the variety
/// `x_jᵀ F x_i = 0`, in pixels.
pub fn sampson_distance(f: &Matrix3<f64>, x_i: &Vector2<f64>, x_j: &Vector2<f64>) -> f64 {
    let pi = Vector3::new(x_i.x, x_i.y, 1.0);
    let pj = Vector3::new(x_j.x, x_j.y, 1.0);
    let fi = f * pi;
    let fj = f.transpose() * pj;
    let e = pj.dot(&fi);
    let g = fi.x * fi.x + fi.y * fi.y + fj.x * fj.x + fj.y * fj.y;
    if e == 0.0 {
        0.0
    } else if g > 0.0 {
        e.abs() / g.sqrt()
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy)]
struct Scored {
    iteration: usize,
    cand: SolutionCandidate,
    inliers: usize,
    cost: f64,
}

impl Scored {
    fn beats(&self, other: &Scored) -> bool {
        (self.inliers, -self.cost) > (other.inliers, -other.cost)
            || ((self.inliers, self.cost) == (other.inliers, other.cost) && self.iteration < other.iteration)
    }
}

fn score(
    cand: &SolutionCandidate,
    acs: &[AffineCorrespondence],
    pp: &Vector2<f64>,
    threshold: f64,
) -> (usize, f64) {
    let f = cand.pose.fundamental(&cand.intrinsics(*pp));
    let mut inliers = 0;
    let mut cost = 0.0;
    for ac in acs {
        let d = sampson_distance(&f, &ac.x_i, &ac.x_j);
        if d <= threshold {
            inliers += 1;
            cost += d;
        } else {
            cost += threshold;
        }
    }
    (inliers, cost)
}

/// Random stream for one iteration.
fn iteration_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    rng
}

fn run_iteration(
    iteration: usize,
    acs: &[AffineCorrespondence],
    imu_i: ImuAttitude,
    imu_j: ImuAttitude,
    pp: &Vector2<f64>,
    cfg: &RansacConfig,
) -> Option<Scored> {
    let mut rng = iteration_rng(cfg.seed, iteration);
    let pick = index::sample(&mut rng, acs.len(), 2);
    let (a, b) = (&acs[pick.index(0)], &acs[pick.index(1)]);
    let cands = solve_2ac(a, b, imu_i, imu_j, pp, &cfg.solve).ok()?;
    let mut best: Option<Scored> = None;
    for cand in cands {
        let (inliers, cost) = score(&cand, acs, pp, cfg.inlier_threshold_px);
        let s = Scored { iteration, cand, inliers, cost };
        if best.as_ref().is_none_or(|b| s.beats(b)) {
            best = Some(s);
        }
    }
    best
}

/// Iterations needed to draw one all-inlier pair with probability
/// `confidence` when a fraction `w` of the data are inliers.
pub fn adaptive_iterations(w: f64, confidence: f64) -> f64 {
    let p = w * w;
    if p >= 1.0 {
        return 1.0;
    }
    if p <= 0.0 {
        return f64::INFINITY;
    }
    ((1.0 - confidence).ln() / (1.0 - p).ln()).ceil()
}

const BATCH: usize = 32;

pub fn estimate(
    acs: &[AffineCorrespondence],
    imu_i: ImuAttitude,
    imu_j: ImuAttitude,
    principal_point: &Vector2<f64>,
    cfg: &RansacConfig,
) -> Result<RobustResult> {
    cfg.validate()?;
    if acs.len() < 2 {
        return Err(Error::TooFewCorrespondences { needed: 2, got: acs.len() });
    }

    // Every hypothesis that was the best so far, in iteration order.
    let mut history: Vec<Scored> = Vec::new();
    let mut needed = cfg.max_iterations;
    let mut done = 0;
    'outer: while done < needed {
        let end = (done + BATCH).min(needed);
        let batch: Vec<Option<Scored>> = (done..end)
            .into_par_iter()
            .map(|it| run_iteration(it, acs, imu_i, imu_j, principal_point, cfg))
            .collect();
        for result in batch {
            done += 1;
            if let Some(s) = result {
                if history.last().is_none_or(|b| s.beats(b)) {
                    let w = s.inliers as f64 / acs.len() as f64;
                    let n = adaptive_iterations(w, cfg.confidence);
                    if n < needed as f64 {
                        needed = n as usize;
                    }
                    history.push(s);
                }
            }
            if done >= needed {
                break 'outer;
            }
        }
    }

    // Polishing all past leaders, not only the last one, keeps the final
    // score monotone in the number of iterations: a longer run's history
    // extends a shorter run's.
    let best = if cfg.refine {
        history
            .iter()
            .map(|s| polish(s, acs, imu_i, imu_j, principal_point, cfg))
            .reduce(|a, b| if b.beats(&a) { b } else { a })
    } else {
        history.last().copied()
    };
    let best = best.ok_or(Error::NoModelFound)?;
    if best.inliers < cfg.min_inliers {
        return Err(Error::NoModelFound);
    }
    let (mut cand, inliers, cost) = (best.cand, best.inliers, best.cost);
    let f = cand.pose.fundamental(&cand.intrinsics(*principal_point));
    let inlier_mask: Vec<bool> = acs
        .iter()
        .map(|ac| sampson_distance(&f, &ac.x_i, &ac.x_j) <= cfg.inlier_threshold_px)
        .collect();

    // Majority vote on the translation sign.
    let mut votes = [0usize; 2];
    for (ac, _) in acs.iter().zip(&inlier_mask).filter(|(_, m)| **m) {
        for (k, pose) in [cand.pose, cand.pose.with_flipped_translation()].iter().enumerate() {
            if let Ok((zi, zj)) = triangulate_depth_signs(pose, cand.focal_px, ac, principal_point) {
                if zi > 0.0 && zj > 0.0 {
                    votes[k] += 1;
                }
            }
        }
    }
    if votes[1] > votes[0] {
        cand.flip_translation();
    }
    cand.cheirality_ok = 2 * votes[0].max(votes[1]) > inliers;

    Ok(RobustResult {
        best: cand,
        inlier_mask,
        iterations_run: done,
        score: inliers,
        truncated_cost: cost,
    })
}

/// Alternates robust refinement and re-selection of the fitting pool. A
/// refined model replaces the current one only if it scores better.
fn polish(
    start: &Scored,
    acs: &[AffineCorrespondence],
    imu_i: ImuAttitude,
    imu_j: ImuAttitude,
    pp: &Vector2<f64>,
    cfg: &RansacConfig,
) -> Scored {
    let mut cur = *start;
    for _ in 0..REFINE_ROUNDS {
        let f = cur.cand.pose.fundamental(&cur.cand.intrinsics(*pp));
        let wide = REFINE_POOL_FACTOR * cfg.inlier_threshold_px;
        let pool: Vec<AffineCorrespondence> = acs
            .iter()
            .filter(|ac| sampson_distance(&f, &ac.x_i, &ac.x_j) <= wide)
            .copied()
            .collect();
        let Some(refined) = refine_candidate(&cur.cand, &pool, imu_i, imu_j, pp, cfg.inlier_threshold_px) else {
            break;
        };
        let (inliers, cost) = score(&refined, acs, pp, cfg.inlier_threshold_px);
        let next = Scored { iteration: cur.iteration, cand: refined, inliers, cost };
        if !next.beats(&cur) {
            break;
        }
        cur = next;
    }
    cur
}

const REFINE_ROUNDS: usize = 10;
/// Refinement fits pairs within this multiple of the inlier threshold; with
/// pixel noise comparable to the threshold the strict inlier set is a biased,
/// truncated sample.
const REFINE_POOL_FACTOR: f64 = 3.0;

/// Signed Sampson residuals of a set of point pairs as a function of
/// `(s, ln focal, a, b)`, where the aligned translation is
/// `normalize(t0 + a·e1 + b·e2)` with `e1, e2` spanning the tangent plane at `t0`.
struct SampsonProblem<'a> {
    acs: &'a [AffineCorrespondence],
    imu_i: ImuAttitude,
    imu_j: ImuAttitude,
    pp: Vector2<f64>,
    t0: Vector3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
    x: Vector4<f64>,
    /// Cauchy loss scale, in pixels.
    scale: f64,
}

/// Residual whose square is the Cauchy loss `c² ln(1 + (r/c)²)`.
fn cauchy(r: f64, c: f64) -> f64 {
    r.signum() * c * (r / c).powi(2).ln_1p().sqrt()
}

impl SampsonProblem<'_> {
    fn candidate(&self, x: &Vector4<f64>) -> Option<SolutionCandidate> {
        let t = self.t0 + self.e1 * x[2] + self.e2 * x[3];
        let focal = x[1].exp();
        if !(focal.is_finite() && x[0].is_finite() && t.norm() > 0.0) {
            return None;
        }
        Some(SolutionCandidate::from_aligned(x[0], focal, t, self.imu_i, self.imu_j))
    }

    fn residuals_at(&self, x: &Vector4<f64>) -> Option<DVector<f64>> {
        let c = self.candidate(x)?;
        let f = c.pose.fundamental(&c.intrinsics(self.pp));
        let r = DVector::from_iterator(
            self.acs.len(),
            self.acs.iter().map(|ac| {
                let pi = Vector3::new(ac.x_i.x, ac.x_i.y, 1.0);
                let pj = Vector3::new(ac.x_j.x, ac.x_j.y, 1.0);
                let (fi, fj) = (f * pi, f.transpose() * pj);
                let g = fi.x * fi.x + fi.y * fi.y + fj.x * fj.x + fj.y * fj.y;
                cauchy(pj.dot(&fi) / g.sqrt(), self.scale)
            }),
        );
        r.iter().all(|v| v.is_finite()).then_some(r)
    }
}

impl LeastSquaresProblem<f64, Dyn, U4> for SampsonProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U4>;
    type ParameterStorage = Owned<f64, U4>;

    fn set_params(&mut self, x: &Vector4<f64>) {
        self.x = *x;
    }

    fn params(&self) -> Vector4<f64> {
        self.x
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        self.residuals_at(&self.x)
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U4>> {
        let mut jac = OMatrix::<f64, Dyn, U4>::zeros(self.acs.len());
        for k in 0..4 {
            let h = 1e-7 * self.x[k].abs().max(1.0);
            let (mut lo, mut hi) = (self.x, self.x);
            lo[k] -= h;
            hi[k] += h;
            let d = (self.residuals_at(&hi)? - self.residuals_at(&lo)?) / (2.0 * h);
            jac.set_column(k, &d);
        }
        Some(jac)
    }
}

/// Robust least-squares polish of `(s, focal, t)` on the Sampson distances
/// of `acs` (Cauchy loss with scale `loss_scale_px`).
/// Returns `None` when there are too few pairs or the minimization fails.
pub fn refine_candidate(
    cand: &SolutionCandidate,
    acs: &[AffineCorrespondence],
    imu_i: ImuAttitude,
    imu_j: ImuAttitude,
    principal_point: &Vector2<f64>,
    loss_scale_px: f64,
) -> Option<SolutionCandidate> {
    if acs.len() < 5 {
        return None;
    }
    let t0 = cand.t_aligned.normalize();
    let helper = if t0.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = t0.cross(&helper).normalize();
    let e2 = t0.cross(&e1);
    let problem = SampsonProblem {
        acs,
        imu_i,
        imu_j,
        pp: *principal_point,
        t0,
        e1,
        e2,
        x: Vector4::new(cand.s, cand.focal_px.ln(), 0.0, 0.0),
        scale: loss_scale_px,
    };
    let (problem, report) = LevenbergMarquardt::new().minimize(problem);
    if !report.termination.was_successful() {
        return None;
    }
    let mut out = problem.candidate(&problem.x)?;
    out.residual = cand.residual;
    out.eigen_residual = cand.eigen_residual;
    out.nullspace_gap = cand.nullspace_gap;
    Some(out)
}
