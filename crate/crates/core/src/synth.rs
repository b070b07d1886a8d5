//! Synthetic two-view scenes with ground truth.
//!
//! Points are drawn in a box in front of camera `i`; each carries a small
//! local plane whose induced homography gives the exact affine Jacobian.
//! Measurement noise is applied on top of the exact scene by [`add_noise`].

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Matrix3, Rotation3, SMatrix, SVector, Vector2, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rotations::{attitude_from_vertical, imu_alignment};
use crate::types::{AffineCorrespondence, CameraIntrinsics, ImuAttitude, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Motion {
    /// `t = (tx, ty, tz)`
    Random,
    /// `t = (tx, 0, tz)`
    Planar,
    /// `t = (tx, 0, 0)`
    Sideways,
    /// `t = (0, 0, tz)`
    Forward,
}

impl Motion {
    pub const ALL: [Motion; 4] = [Motion::Random, Motion::Planar, Motion::Sideways, Motion::Forward];

    pub fn as_str(&self) -> &'static str {
        match self {
            Motion::Random => "random",
            Motion::Planar => "planar",
            Motion::Sideways => "sideways",
            Motion::Forward => "forward",
        }
    }
}

impl fmt::Display for Motion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Motion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Motion::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown motion pattern '{s}'")))
    }
}

/// Noise levels. Angles in degrees, distances in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Gaussian σ on both points of every correspondence.
    pub image_px: f64,
    /// Gaussian σ on the reported pitch of both views.
    pub pitch_deg: f64,
    /// Gaussian σ on the reported roll of both views.
    pub roll_deg: f64,
    /// Magnitude of the principal-point offset handed to the solver.
    pub principal_px: f64,
    /// Re-derive the affine matrices from a homography fitted to noisy patch
    /// corners (σ = `image_px`).
    pub affine: bool,
}

impl NoiseConfig {
    pub fn none() -> Self {
        Self {
            image_px: 0.0,
            pitch_deg: 0.0,
            roll_deg: 0.0,
            principal_px: 0.0,
            affine: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.image_px, self.pitch_deg, self.roll_deg, self.principal_px];
        if vals.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidConfig("noise levels must be finite and non-negative".into()))
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub n_points: usize,
    pub cube_x: (f64, f64),
    pub cube_y: (f64, f64),
    pub cube_z: (f64, f64),
    /// Width and height in pixels.
    pub image_size: (f64, f64),
    pub principal_point: Vector2<f64>,
    /// Range the focal length is drawn from when `focal_px` is `None`.
    pub focal_range: (f64, f64),
    pub focal_px: Option<f64>,
    /// Bound on each relative Euler angle and on each view's roll and pitch.
    pub max_angle_deg: f64,
    pub motion: Motion,
    /// Metric length of the baseline used for projection.
    pub baseline: f64,
    /// Largest angle between a local plane normal and the optical axis of view `i`.
    pub max_normal_tilt_deg: f64,
    /// Half side of the square patch used to fit the local homography.
    pub patch_half_px: f64,
    pub noise: NoiseConfig,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_points: 100,
            cube_x: (-5.0, 5.0),
            cube_y: (-5.0, 5.0),
            cube_z: (5.0, 20.0),
            image_size: (640.0, 480.0),
            principal_point: Vector2::new(320.0, 240.0),
            focal_range: (100.0, 1000.0),
            focal_px: None,
            max_angle_deg: 10.0,
            motion: Motion::Random,
            baseline: 1.0,
            max_normal_tilt_deg: 45.0,
            patch_half_px: 10.0,
            noise: NoiseConfig::none(),
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a <= b;
        if !(ordered(self.cube_x) && ordered(self.cube_y) && ordered(self.cube_z)) {
            return Err(Error::InvalidConfig("cube bounds must be ordered".into()));
        }
        if self.cube_z.0 <= 0.0 {
            return Err(Error::InvalidConfig("cube must lie in front of the camera".into()));
        }
        if !(ordered(self.focal_range) && self.focal_range.0 > 0.0) {
            return Err(Error::InvalidConfig("focal range must be positive and ordered".into()));
        }
        if let Some(f) = self.focal_px {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::InvalidConfig("focal length must be positive".into()));
            }
        }
        if !(self.image_size.0 > 0.0 && self.image_size.1 > 0.0) {
            return Err(Error::InvalidConfig("image size must be positive".into()));
        }
        if !(self.baseline > 0.0 && self.patch_half_px > 0.0) {
            return Err(Error::InvalidConfig("baseline and patch size must be positive".into()));
        }
        if !(0.0..90.0).contains(&self.max_normal_tilt_deg) || !(0.0..90.0).contains(&self.max_angle_deg) {
            return Err(Error::InvalidConfig("angles must lie in [0, 90) degrees".into()));
        }
        self.noise.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub image_size: (f64, f64),
    pub gt_focal_px: f64,
    /// Relative pose with unit translation.
    pub gt_pose: Pose,
    /// Rotation angle about the vertical axis between the aligned frames.
    pub gt_theta: f64,
    pub gt_s: f64,
    pub gt_t_aligned: Vector3<f64>,
    pub imu_i_true: ImuAttitude,
    pub imu_j_true: ImuAttitude,
    /// Attitudes handed to the solver (noisy).
    pub imu_i: ImuAttitude,
    pub imu_j: ImuAttitude,
    pub principal_point_true: Vector2<f64>,
    /// Principal point handed to the solver (noisy).
    pub principal_point: Vector2<f64>,
    /// Points in the frame of camera `i`, metric.
    pub points: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    /// Local plane homographies, view `i` pixels to view `j` pixels.
    pub homographies: Vec<Matrix3<f64>>,
    pub correspondences_true: Vec<AffineCorrespondence>,
    /// Correspondences handed to the solver (noisy).
    pub correspondences: Vec<AffineCorrespondence>,
}

impl SyntheticScene {
    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            focal_px: self.gt_focal_px,
            principal_point: self.principal_point_true,
        }
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn symmetric(rng: &mut impl Rng, bound: f64) -> f64 {
    uniform(rng, (-bound, bound))
}

fn translation_direction(rng: &mut impl Rng, motion: Motion) -> Vector3<f64> {
    loop {
        let mut v = || symmetric(rng, 1.0);
        let t = match motion {
            Motion::Random => Vector3::new(v(), v(), v()),
            Motion::Planar => Vector3::new(v(), 0.0, v()),
            Motion::Sideways => Vector3::new(v(), 0.0, 0.0),
            Motion::Forward => Vector3::new(0.0, 0.0, v()),
        };
        if t.norm() > 1e-3 {
            return t.normalize();
        }
    }
}

/// Unit normal within `max_tilt` of the direction facing camera `i`.
fn plane_normal(rng: &mut impl Rng, max_tilt: f64) -> Vector3<f64> {
    let cos_a = uniform(rng, (max_tilt.cos(), 1.0));
    let sin_a = (1.0 - cos_a * cos_a).max(0.0).sqrt();
    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
    Vector3::new(sin_a * phi.cos(), sin_a * phi.sin(), -cos_a)
}

fn inside(p: &Vector2<f64>, (w, h): (f64, f64)) -> bool {
    p.x >= 0.0 && p.x <= w && p.y >= 0.0 && p.y <= h
}

fn apply_h(h: &Matrix3<f64>, p: &Vector2<f64>) -> Vector2<f64> {
    let q = h * Vector3::new(p.x, p.y, 1.0);
    Vector2::new(q.x / q.z, q.y / q.z)
}

/// Draws an exact scene, then applies `cfg.noise`.
///
/// Deterministic in `cfg.seed`. Noise comes from a separate random stream, so
/// scenes that differ only in noise levels share geometry and the same
/// standard-normal draws.
pub fn generate_scene(cfg: &SceneConfig) -> Result<SyntheticScene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let max_angle = cfg.max_angle_deg.to_radians();

    let focal = match cfg.focal_px {
        Some(f) => f,
        None => uniform(&mut rng, cfg.focal_range),
    };
    let k = CameraIntrinsics::new(focal, cfg.principal_point)?;

    let rel = Rotation3::from_euler_angles(
        symmetric(&mut rng, max_angle),
        symmetric(&mut rng, max_angle),
        symmetric(&mut rng, max_angle),
    )
    .into_inner();
    let imu_i = ImuAttitude::new(symmetric(&mut rng, max_angle), symmetric(&mut rng, max_angle));
    let ri = imu_alignment(imu_i);
    // The vertical direction seen by camera j follows from the relative
    // rotation; its attitude is whatever aligns it.
    let up_i = ri.transpose() * Vector3::y();
    let imu_j = attitude_from_vertical(&(rel * up_i));
    let rj = imu_alignment(imu_j);
    let ry = rj * rel * ri.transpose();
    let theta = ry[(0, 2)].atan2(ry[(0, 0)]);
    let gt_s = (theta / 2.0).tan();

    let t = translation_direction(&mut rng, cfg.motion);
    let gt_pose = Pose::new(rel, t);
    let metric_pose = Pose::new(rel, t * cfg.baseline);

    let mut points = Vec::with_capacity(cfg.n_points);
    let mut normals = Vec::with_capacity(cfg.n_points);
    let mut homographies = Vec::with_capacity(cfg.n_points);
    let mut correspondences = Vec::with_capacity(cfg.n_points);
    let max_attempts = 10_000 * cfg.n_points.max(1);
    let mut attempts = 0;
    while points.len() < cfg.n_points {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Sampling(format!(
                "only {} of {} points are visible in both views",
                points.len(),
                cfg.n_points
            )));
        }
        let x = Vector3::new(
            uniform(&mut rng, cfg.cube_x),
            uniform(&mut rng, cfg.cube_y),
            uniform(&mut rng, cfg.cube_z),
        );
        let n = plane_normal(&mut rng, cfg.max_normal_tilt_deg.to_radians());
        let xj = metric_pose.rotation * x + metric_pose.translation;
        if xj.z <= 1e-6 {
            continue;
        }
        let (pi, pj) = (k.project(&x), k.project(&xj));
        if !(inside(&pi, cfg.image_size) && inside(&pj, cfg.image_size)) {
            continue;
        }
        let Ok(h) = local_homography(&x, &n, &metric_pose, focal, &cfg.principal_point) else {
            continue;
        };
        let Ok(a) = affine_from_homography(&h, &pi, &pj) else {
            continue;
        };
        if a.determinant().abs() <= AffineCorrespondence::MIN_ABS_DET {
            continue;
        }
        points.push(x);
        normals.push(n);
        homographies.push(h);
        correspondences.push(AffineCorrespondence::new(pi, pj, a));
    }

    let exact = SyntheticScene {
        image_size: cfg.image_size,
        gt_focal_px: focal,
        gt_pose,
        gt_theta: theta,
        gt_s,
        gt_t_aligned: rj * t,
        imu_i_true: imu_i,
        imu_j_true: imu_j,
        imu_i,
        imu_j,
        principal_point_true: cfg.principal_point,
        principal_point: cfg.principal_point,
        points,
        normals,
        homographies,
        correspondences_true: correspondences.clone(),
        correspondences,
    };
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(1);
    add_noise(&exact, &cfg.noise, cfg.patch_half_px, &mut noise_rng)
}

/// Homography induced by the plane through `point` with normal `normal`
/// (camera-`i` frame), mapping view-`i` pixels to view-`j` pixels.
///
/// `pose.translation` must carry the metric baseline.
pub fn local_homography(
    point: &Vector3<f64>,
    normal: &Vector3<f64>,
    pose: &Pose,
    focal_px: f64,
    principal_point: &Vector2<f64>,
) -> Result<Matrix3<f64>> {
    let d = normal.dot(point);
    if d.abs() <= 1e-9 * point.norm().max(1.0) {
        return Err(Error::DegenerateHomography("plane passes through camera i".into()));
    }
    // nᵀX = d on the plane, so X_j = R X + t (nᵀX / d).
    let euclid = pose.rotation + pose.translation * normal.transpose() / d;
    if euclid.determinant().abs() <= 1e-9 {
        return Err(Error::DegenerateHomography("plane passes through camera j".into()));
    }
    let k = CameraIntrinsics::new(focal_px, *principal_point)?.matrix();
    let k_inv = k.try_inverse().expect("positive focal length");
    Ok(k * euclid * k_inv)
}

/// First-order (affine) approximation of a homography at `x_i`, given its
/// image `x_j`:
///
/// ```text
/// a11 = (h11 − h31 u_j) / b    a12 = (h12 − h32 u_j) / b
/// a21 = (h21 − h31 v_j) / b    a22 = (h22 − h32 v_j) / b
/// b   = u_i h31 + v_i h32 + h33
/// ```
pub fn affine_from_homography(
    h: &Matrix3<f64>,
    x_i: &Vector2<f64>,
    x_j: &Vector2<f64>,
) -> Result<Matrix2<f64>> {
    let b = x_i.x * h[(2, 0)] + x_i.y * h[(2, 1)] + h[(2, 2)];
    if !(b.abs() > 1e-12) {
        return Err(Error::DegenerateHomography(format!("b = {b:e}")));
    }
    let (uj, vj) = (x_j.x, x_j.y);
    Ok(Matrix2::new(
        (h[(0, 0)] - h[(2, 0)] * uj) / b,
        (h[(0, 1)] - h[(2, 1)] * uj) / b,
        (h[(1, 0)] - h[(2, 0)] * vj) / b,
        (h[(1, 1)] - h[(2, 1)] * vj) / b,
    ))
}

/// Similarity that moves the centroid to the origin and sets the mean distance
/// from it to √2.
fn normalizing_transform(pts: &[Vector2<f64>; 4]) -> Matrix3<f64> {
    let c = pts.iter().sum::<Vector2<f64>>() / 4.0;
    let mean = pts.iter().map(|p| (p - c).norm()).sum::<f64>() / 4.0;
    let k = if mean > 0.0 { std::f64::consts::SQRT_2 / mean } else { 1.0 };
    Matrix3::new(k, 0.0, -k * c.x, 0.0, k, -k * c.y, 0.0, 0.0, 1.0)
}

/// Exact homography through four point pairs (normalized DLT with `h33 = 1`).
pub fn fit_homography_4pt(src: &[Vector2<f64>; 4], dst: &[Vector2<f64>; 4]) -> Result<Matrix3<f64>> {
    let ts = normalizing_transform(src);
    let td = normalizing_transform(dst);
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut rhs = SVector::<f64, 8>::zeros();
    for k in 0..4 {
        let p = apply_h(&ts, &src[k]);
        let q = apply_h(&td, &dst[k]);
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        a.row_mut(2 * k)
            .copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(2 * k + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        rhs[2 * k] = u;
        rhs[2 * k + 1] = v;
    }
    let h = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::DegenerateHomography("four points are degenerate".into()))?;
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0);
    let td_inv = td
        .try_inverse()
        .ok_or_else(|| Error::DegenerateHomography("degenerate normalization".into()))?;
    Ok(td_inv * hn * ts)
}

/// Applies measurement noise to the exact part of `scene`.
///
/// The same number of random variates is drawn whatever the noise levels, so
/// a sweep over σ with a fixed stream scales one set of draws.
pub fn add_noise(
    scene: &SyntheticScene,
    noise: &NoiseConfig,
    patch_half_px: f64,
    rng: &mut impl Rng,
) -> Result<SyntheticScene> {
    noise.validate()?;
    let mut gauss = || -> f64 { rng.sample(StandardNormal) };
    let mut out = scene.clone();

    let jitter = |att: ImuAttitude, g1: f64, g2: f64| {
        ImuAttitude::new(
            att.roll + (noise.roll_deg * g1).to_radians(),
            att.pitch + (noise.pitch_deg * g2).to_radians(),
        )
    };
    let (g1, g2, g3, g4) = (gauss(), gauss(), gauss(), gauss());
    out.imu_i = jitter(scene.imu_i_true, g1, g2);
    out.imu_j = jitter(scene.imu_j_true, g3, g4);

    let phi = std::f64::consts::TAU * rng.gen::<f64>();
    out.principal_point =
        scene.principal_point_true + Vector2::new(phi.cos(), phi.sin()) * noise.principal_px;

    let sigma = noise.image_px;
    let half = patch_half_px;
    let offsets = [
        Vector2::new(-half, -half),
        Vector2::new(half, -half),
        Vector2::new(half, half),
        Vector2::new(-half, half),
    ];
    for (k, ac) in scene.correspondences_true.iter().enumerate() {
        let mut draws = [0.0; 20];
        for d in draws.iter_mut() {
            *d = rng.sample(StandardNormal);
        }
        let x_i = ac.x_i + Vector2::new(draws[0], draws[1]) * sigma;
        let x_j = ac.x_j + Vector2::new(draws[2], draws[3]) * sigma;
        let mut a = ac.a;
        if noise.affine && sigma > 0.0 {
            let h = &scene.homographies[k];
            let src: [Vector2<f64>; 4] = std::array::from_fn(|c| ac.x_i + offsets[c]);
            let dst: [Vector2<f64>; 4] = std::array::from_fn(|c| apply_h(h, &src[c]));
            let noisy_src: [Vector2<f64>; 4] = std::array::from_fn(|c| {
                src[c] + Vector2::new(draws[4 + 4 * c], draws[5 + 4 * c]) * sigma
            });
            let noisy_dst: [Vector2<f64>; 4] = std::array::from_fn(|c| {
                dst[c] + Vector2::new(draws[6 + 4 * c], draws[7 + 4 * c]) * sigma
            });
            let h_noisy = fit_homography_4pt(&noisy_src, &noisy_dst)?;
            a = affine_from_homography(&h_noisy, &x_i, &apply_h(&h_noisy, &x_i))?;
        }
        out.correspondences[k] = AffineCorrespondence::new(x_i, x_j, a);
    }
    Ok(out)
}

/// Replaces `round(fraction · n)` randomly chosen correspondences with random
/// points and random affine matrices. Returns the inlier mask.
pub fn inject_outliers(
    acs: &mut [AffineCorrespondence],
    fraction: f64,
    image_size: (f64, f64),
    rng: &mut impl Rng,
) -> Vec<bool> {
    let n = acs.len();
    let n_out = ((fraction.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
    let mut mask = vec![true; n];
    for idx in rand::seq::index::sample(rng, n, n_out) {
        mask[idx] = false;
    }
    for (ac, inlier) in acs.iter_mut().zip(&mask) {
        if *inlier {
            continue;
        }
        let mut pick = || Vector2::new(rng.gen_range(0.0..image_size.0), rng.gen_range(0.0..image_size.1));
        let (x_i, x_j) = (pick(), pick());
        let a = loop {
            let a: Matrix2<f64> = Matrix2::new(
                1.0 + rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                1.0 + rng.gen_range(-0.5..0.5),
            );
            if a.determinant().abs() > 0.1 {
                break a;
            }
        };
        *ac = AffineCorrespondence::new(x_i, x_j, a);
    }
    mask
}
