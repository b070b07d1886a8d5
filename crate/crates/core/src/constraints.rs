//! Polynomial constraint system in `(s, f)`.
//!
//! Coordinates are recentered on the principal point and divided by a
//! per-problem scale `κ` before any polynomial is formed. In these normalized
//! units the back-projected ray of a pixel is `(f·ũ, f·ṽ, 1)`, where the
//! unknown `f = κ / focal_px` is the reciprocal focal length measured in units
//! of `1/κ`. Choosing `κ` near the image extent keeps `f` close to one, which
//! keeps the powers `f⁰..f⁵` of the eigenvector within a few orders of
//! magnitude.
//!
//! The 4×3 matrix `M(s, f)` satisfies `M t̃ = 0`. Its rows, all with the
//! `1 + s²` Cayley denominator cleared, are:
//!
//! 1. first affine equation of `ac_a` (degree `s²f¹`),
//! 2. second affine equation of `ac_a` (degree `s²f¹`),
//! 3. epipolar equation of `ac_a` (degree `s²f²`),
//! 4. epipolar equation of `ac_b` (degree `s²f²`).
//!
//! With this order the minors `g₁ = |M₁₂₃|`, `g₂ = |M₁₂₄|` top out at `s⁶f⁴`
//! and `g₃ = |M₁₃₄|`, `g₄ = |M₂₃₄|` at `s⁶f⁵`.

use nalgebra::{Matrix3, Matrix4x3, SMatrix, Vector2, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::poly::{det3, BivariatePoly, F_CAP, N_MONOMIALS};
use crate::rotations::imu_alignment;
use crate::types::{AffineCorrespondence, ImuAttitude};

type PolyVec = [BivariatePoly; 3];

/// `M(s, f)` together with the normalization that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    pub entries: [[BivariatePoly; 3]; 4],
    /// Pixel scale `κ`; internal `f` equals `κ / focal_px`.
    pub scale: f64,
    pub principal_point: Vector2<f64>,
}

impl ConstraintMatrix {
    pub fn evaluate(&self, s: f64, f: f64) -> Matrix4x3<f64> {
        Matrix4x3::from_fn(|r, c| self.entries[r][c].eval(s, f))
    }

    /// `M(s, f)` with each row scaled to unit Euclidean norm (zero rows kept).
    pub fn evaluate_row_normalized(&self, s: f64, f: f64) -> Matrix4x3<f64> {
        let mut m = self.evaluate(s, f);
        for mut row in m.row_iter_mut() {
            let n = row.norm();
            if n > 0.0 {
                row /= n;
            }
        }
        m
    }

    pub fn focal_from_internal(&self, f: f64) -> f64 {
        self.scale / f
    }

    pub fn internal_from_focal(&self, focal_px: f64) -> f64 {
        self.scale / focal_px
    }

    /// Rows are ordered `[affine₁(a), affine₂(a), point(a), point(b)]`.
    pub fn row(&self, r: usize) -> &[BivariatePoly; 3] {
        &self.entries[r]
    }
}

/// Scale `κ` used to normalize pixel coordinates: the mean distance of the
/// four points from the principal point.
pub fn coordinate_scale(
    ac_a: &AffineCorrespondence,
    ac_b: &AffineCorrespondence,
    principal_point: &Vector2<f64>,
) -> f64 {
    let pts = [ac_a.x_i, ac_a.x_j, ac_b.x_i, ac_b.x_j];
    let mean = pts.iter().map(|p| (p - principal_point).norm()).sum::<f64>() / 4.0;
    if mean.is_finite() && mean > 1e-9 {
        mean
    } else {
        1.0
    }
}

/// `(f·x, f·y, 1)`.
fn ray(p: &Vector2<f64>) -> PolyVec {
    [
        BivariatePoly::monomial(0, 1, p.x),
        BivariatePoly::monomial(0, 1, p.y),
        BivariatePoly::constant(1.0),
    ]
}

fn constant_vec(v: &Vector3<f64>) -> PolyVec {
    [
        BivariatePoly::constant(v.x),
        BivariatePoly::constant(v.y),
        BivariatePoly::constant(v.z),
    ]
}

fn mat_times(m: &Matrix3<f64>, v: &PolyVec) -> PolyVec {
    std::array::from_fn(|r| {
        v[0].scale(m[(r, 0)]) + v[1].scale(m[(r, 1)]) + v[2].scale(m[(r, 2)])
    })
}

/// Cayley numerator `(1+s²)·R_y(s)` applied to `v`.
fn cayley_times(v: &PolyVec) -> Result<PolyVec> {
    let one = BivariatePoly::constant(1.0);
    let s = BivariatePoly::s();
    let s2 = BivariatePoly::monomial(2, 0, 1.0);
    let two_s = s.scale(2.0);
    Ok([
        (one - s2).mul(&v[0])? + two_s.mul(&v[2])?,
        (one + s2).mul(&v[1])?,
        (one - s2).mul(&v[2])? - two_s.mul(&v[0])?,
    ])
}

fn cross(a: &PolyVec, b: &PolyVec) -> Result<PolyVec> {
    Ok([
        a[1].mul(&b[2])? - a[2].mul(&b[1])?,
        a[2].mul(&b[0])? - a[0].mul(&b[2])?,
        a[0].mul(&b[1])? - a[1].mul(&b[0])?,
    ])
}

fn add_scaled(acc: &mut PolyVec, v: &PolyVec, k: f64) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a = *a + b.scale(k);
    }
}

/// Builds `M(s, f)` from two affine correspondences; `ac_a` supplies the two
/// affine rows and the first point row, `ac_b` the second point row.
///
/// `t̃ · row` expands, for the point equation,
/// `(R_j r_j)ᵀ [t̃]× N(s) R_i r_i = t̃ · ((N R_i r_i) × R_j r_j)`, and for the
/// affine equations
/// `A⁻ᵀ (Eᵀ r_j)₁,₂ + (E r_i)₁,₂ = 0` with `E = R_jᵀ [t̃]× N(s) R_i`, after
/// the common factor `f` of the `K⁻ᵀ` premultiplication is divided out.
pub fn build_constraint_matrix(
    ac_a: &AffineCorrespondence,
    ac_b: &AffineCorrespondence,
    imu_i: ImuAttitude,
    imu_j: ImuAttitude,
    principal_point: &Vector2<f64>,
) -> Result<ConstraintMatrix> {
    for (name, ac) in [("first", ac_a), ("second", ac_b)] {
        if !ac.is_finite() {
            return Err(Error::DegenerateInput(format!("{name} correspondence is not finite")));
        }
    }
    let a_inv_t = ac_a
        .a
        .try_inverse()
        .filter(|_| ac_a.a.determinant().abs() > AffineCorrespondence::MIN_ABS_DET)
        .ok_or_else(|| Error::DegenerateInput("affine matrix is singular".into()))?
        .transpose();
    if !(imu_i.is_finite() && imu_j.is_finite()) {
        return Err(Error::DegenerateInput("attitude is not finite".into()));
    }

    let scale = coordinate_scale(ac_a, ac_b, principal_point);
    let norm = |p: &Vector2<f64>| (p - principal_point) / scale;
    let ri = imu_alignment(imu_i);
    let rj = imu_alignment(imu_j);

    let point_row = |ac: &AffineCorrespondence| -> Result<PolyVec> {
        let qi = mat_times(&ri, &ray(&norm(&ac.x_i)));
        let qj = mat_times(&rj, &ray(&norm(&ac.x_j)));
        cross(&cayley_times(&qi)?, &qj)
    };

    let qi = mat_times(&ri, &ray(&norm(&ac_a.x_i)));
    let qj = mat_times(&rj, &ray(&norm(&ac_a.x_j)));
    let c = cayley_times(&qi)?;
    // d_k = N(s) R_i e_k, so (Eᵀ r_j)_k = t̃ · (d_k × q_j).
    let eti_rows: [PolyVec; 2] = [
        cross(&cayley_times(&constant_vec(&ri.column(0).into_owned()))?, &qj)?,
        cross(&cayley_times(&constant_vec(&ri.column(1).into_owned()))?, &qj)?,
    ];
    // (E r_i)_m = t̃ · (c × R_j e_m)
    let ei_rows: [PolyVec; 2] = [
        cross(&c, &constant_vec(&rj.column(0).into_owned()))?,
        cross(&c, &constant_vec(&rj.column(1).into_owned()))?,
    ];
    let affine_row = |m: usize| -> PolyVec {
        let mut row = ei_rows[m];
        add_scaled(&mut row, &eti_rows[0], a_inv_t[(m, 0)]);
        add_scaled(&mut row, &eti_rows[1], a_inv_t[(m, 1)]);
        row
    };

    Ok(ConstraintMatrix {
        entries: [affine_row(0), affine_row(1), point_row(ac_a)?, point_row(ac_b)?],
        scale,
        principal_point: *principal_point,
    })
}

/// Each row divided by its largest coefficient magnitude.
fn row_normalized(m: &ConstraintMatrix) -> [[BivariatePoly; 3]; 4] {
    m.entries.map(|row| {
        let k = row.iter().map(BivariatePoly::max_abs).fold(0.0, f64::max);
        if k > 0.0 {
            row.map(|p| p.scale(1.0 / k))
        } else {
            row
        }
    })
}

/// The four 3×3 minors of `M`: rows (1,2,3), (1,2,4), (1,3,4), (2,3,4).
/// Rows are normalized to unit max-abs coefficient before expansion.
pub fn determinant_system(m: &ConstraintMatrix) -> Result<[BivariatePoly; 4]> {
    const ROWS: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    let rows = row_normalized(m);
    let mut out = [BivariatePoly::zero(); 4];
    for (g, idx) in out.iter_mut().zip(ROWS) {
        *g = det3(&idx.map(|r| rows[r]))?;
    }
    Ok(out)
}

/// Largest `|g_k(s, f)|` with each `g_k` normalized to unit max-abs coefficient.
pub fn system_residual(g: &[BivariatePoly; 4], s: f64, f: f64) -> f64 {
    g.iter()
        .map(|p| p.normalized().eval(s, f).abs())
        .fold(0.0, f64::max)
}

/// 6×42 coefficient matrix over the monomials `s^a f^b` (f-fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    pub c: SMatrix<f64, 6, N_MONOMIALS>,
}

impl CoefficientMatrix {
    /// `C · X(s, f)` where `X` is the monomial vector.
    pub fn apply(&self, s: f64, f: f64) -> SMatrix<f64, 6, 1> {
        self.c * monomial_vector(s, f)
    }
}

/// Monomial vector `(1, f, …, f⁵, s, sf, …, s⁶f⁵)`.
pub fn monomial_vector(s: f64, f: f64) -> SMatrix<f64, N_MONOMIALS, 1> {
    SMatrix::from_fn(|k, _| s.powi((k / F_CAP) as i32) * f.powi((k % F_CAP) as i32))
}

/// Rows `{f·g₁, f·g₂, g₃, g₄, g₁, g₂}`, each normalized to unit max-abs
/// coefficient, flattened onto the shared 42-monomial basis.
pub fn coefficient_matrix(g: &[BivariatePoly; 4]) -> Result<CoefficientMatrix> {
    let rows = [
        g[0].shift_f(1)?,
        g[1].shift_f(1)?,
        g[2],
        g[3],
        g[0],
        g[1],
    ];
    let mut c = SMatrix::<f64, 6, N_MONOMIALS>::zeros();
    for (r, p) in rows.iter().enumerate() {
        let flat = p.normalized().flatten();
        for (k, v) in flat.iter().enumerate() {
            c[(r, k)] = *v;
        }
    }
    Ok(CoefficientMatrix { c })
}

/// `‖M(s,f) t̃‖` with rows of `M` normalized to unit norm.
pub fn nullspace_residual(m: &ConstraintMatrix, s: f64, f: f64, t_aligned: &Vector3<f64>) -> f64 {
    let r: Vector4<f64> = m.evaluate_row_normalized(s, f) * t_aligned.normalize();
    r.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::monomial_index;
    use crate::rotations::essential_from;
    use crate::synth::{generate_scene, Motion, SceneConfig};

    fn scene(seed: u64) -> crate::synth::SyntheticScene {
        let cfg = SceneConfig {
            n_points: 4,
            seed,
            motion: Motion::Random,
            ..SceneConfig::default()
        };
        generate_scene(&cfg).unwrap()
    }

    fn system_for(sc: &crate::synth::SyntheticScene, a: usize, b: usize) -> ConstraintMatrix {
        build_constraint_matrix(
            &sc.correspondences[a],
            &sc.correspondences[b],
            sc.imu_i,
            sc.imu_j,
            &sc.principal_point,
        )
        .unwrap()
    }

    #[test]
    fn ground_truth_annihilates_m() {
        for seed in 0..20 {
            let sc = scene(seed);
            let m = system_for(&sc, 0, 1);
            let f = m.internal_from_focal(sc.gt_focal_px);
            let r = nullspace_residual(&m, sc.gt_s, f, &sc.gt_t_aligned);
            assert!(r <= 1e-9, "seed {seed}: {r:e}");
            let svd = m.evaluate(sc.gt_s, f).svd(false, false);
            let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
            sv.sort_by(|a, b| b.total_cmp(a));
            assert!(sv[2] <= 1e-9 * sv[0] && sv[1] > 1e-6 * sv[0], "rank != 2: {sv:?}");
        }
    }

    #[test]
    fn point_row_matches_direct_epipolar_residual() {
        let sc = scene(3);
        let m = system_for(&sc, 0, 1);
        let f = m.internal_from_focal(sc.gt_focal_px);
        let ac = &sc.correspondences[0];
        // Direct evaluation of (R_j K⁻¹x_j)ᵀ Ẽ R_i K⁻¹x_i at a perturbed s, so
        // both sides are nonzero.
        let s = sc.gt_s + 0.01;
        let ri = imu_alignment(sc.imu_i);
        let rj = imu_alignment(sc.imu_j);
        let to_ray = |p: &Vector2<f64>| {
            let q = (p - sc.principal_point) / m.scale;
            Vector3::new(f * q.x, f * q.y, 1.0)
        };
        let e = essential_from(s, &sc.gt_t_aligned);
        let direct = (rj * to_ray(&ac.x_j)).dot(&(e * ri * to_ray(&ac.x_i)));
        let row = m.row(2);
        let via_m: f64 = (0..3).map(|k| row[k].eval(s, f) * sc.gt_t_aligned[k]).sum();
        assert!((direct - via_m).abs() <= 1e-12 * direct.abs().max(1.0), "{direct} {via_m}");

        // At ground truth both vanish.
        let e = essential_from(sc.gt_s, &sc.gt_t_aligned);
        let direct = (rj * to_ray(&ac.x_j)).dot(&(e * ri * to_ray(&ac.x_i)));
        assert!(direct.abs() < 1e-10);
    }

    #[test]
    fn affine_rows_match_pixel_relation() {
        // (Fᵀx_j)₁,₂ + Aᵀ (F x_i)₁,₂ = 0 on pixel coordinates, with
        // F = K⁻ᵀ E K⁻¹ for the true pose.
        for seed in 0..10 {
            let sc = scene(100 + seed);
            let k = crate::types::CameraIntrinsics::new(sc.gt_focal_px, sc.principal_point).unwrap();
            let fm = sc.gt_pose.fundamental(&k);
            for ac in &sc.correspondences {
                let xi = Vector3::new(ac.x_i.x, ac.x_i.y, 1.0);
                let xj = Vector3::new(ac.x_j.x, ac.x_j.y, 1.0);
                let l_i = fm.transpose() * xj;
                let l_j = fm * xi;
                let r = Vector2::new(l_i.x, l_i.y) + ac.a.transpose() * Vector2::new(l_j.x, l_j.y);
                assert!(r.norm() <= 1e-9 * l_j.norm(), "seed {seed}: {r}");
            }
            let m = system_for(&sc, 0, 1);
            let f = m.internal_from_focal(sc.gt_focal_px);
            let ev = m.evaluate_row_normalized(sc.gt_s, f);
            for r in 0..2 {
                assert!(ev.row(r).dot(&sc.gt_t_aligned.transpose()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn minors_vanish_at_ground_truth_with_expected_degrees() {
        for seed in 0..20 {
            let sc = scene(200 + seed);
            let m = system_for(&sc, 0, 1);
            let f = m.internal_from_focal(sc.gt_focal_px);
            let g = determinant_system(&m).unwrap();
            assert!(system_residual(&g, sc.gt_s, f) <= 1e-10);
            let expected = [(6, 4), (6, 4), (6, 5), (6, 5)];
            for (k, p) in g.iter().enumerate() {
                assert_eq!(p.degree(1e-12), Some(expected[k]), "g{} seed {seed}", k + 1);
                let top = p.coeff(expected[k].0, expected[k].1).abs();
                assert!(top > 1e-12 * p.max_abs());
            }
        }
    }

    #[test]
    fn duplicated_correspondence_collapses_minors() {
        let sc = scene(7);
        let ac = sc.correspondences[0];
        let m = build_constraint_matrix(&ac, &ac, sc.imu_i, sc.imu_j, &sc.principal_point).unwrap();
        let g = determinant_system(&m).unwrap();
        // Rows 3 and 4 coincide, so every minor containing both is identically 0.
        assert!(g[2].max_abs() < 1e-12 && g[3].max_abs() < 1e-12);
    }

    #[test]
    fn singular_affine_is_rejected() {
        let sc = scene(8);
        let mut ac = sc.correspondences[0];
        ac.a = nalgebra::Matrix2::new(1.0, 2.0, 2.0, 4.0);
        let err = build_constraint_matrix(&ac, &sc.correspondences[1], sc.imu_i, sc.imu_j, &sc.principal_point);
        assert!(matches!(err, Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn coefficient_matrix_layout_and_root() {
        let sc = scene(11);
        let m = system_for(&sc, 0, 1);
        let g = determinant_system(&m).unwrap();
        let cm = coefficient_matrix(&g).unwrap();
        assert_eq!((cm.c.nrows(), cm.c.ncols()), (6, 42));

        // Row 0 is f·g₁: entry (a, b+1) equals g₁'s (a, b) after normalization.
        let g1 = g[0].normalized();
        for a in 0..7 {
            assert_eq!(cm.c[(0, monomial_index(a, 0))], 0.0);
            for b in 0..5 {
                assert_eq!(cm.c[(0, monomial_index(a, b + 1))], g1.coeff(a, b));
            }
        }

        let f = m.internal_from_focal(sc.gt_focal_px);
        let r = cm.apply(sc.gt_s, f);
        assert!(r.amax() <= 1e-9, "{r}");
    }

    #[test]
    fn recentering_is_invariant() {
        // Shifting every pixel and the principal point by the same offset
        // leaves the system unchanged.
        let sc = scene(12);
        let off = Vector2::new(37.5, -12.25);
        let shift = |ac: &AffineCorrespondence| AffineCorrespondence::new(ac.x_i + off, ac.x_j + off, ac.a);
        let m1 = system_for(&sc, 0, 1);
        let m2 = build_constraint_matrix(
            &shift(&sc.correspondences[0]),
            &shift(&sc.correspondences[1]),
            sc.imu_i,
            sc.imu_j,
            &(sc.principal_point + off),
        )
        .unwrap();
        assert!((m1.scale - m2.scale).abs() < 1e-9);
        let g1 = determinant_system(&m1).unwrap();
        let g2 = determinant_system(&m2).unwrap();
        for (p, q) in g1.iter().zip(&g2) {
            assert!((*p - *q).max_abs() < 1e-10);
        }
    }
}
