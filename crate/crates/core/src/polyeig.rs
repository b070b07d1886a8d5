//! Polynomial eigenvalue solve of `B(s) J(f) = 0`.
//!
//! `B(s) = Σ s^k B_k` with seven 6×6 coefficients and
//! `J = (1, f, …, f⁵)`. The companion linearization is the 36×36 pencil
//! `D L = s N L` with `L = (J, sJ, …, s⁵J)`:
//!
//! ```text
//!     | 0   I   0  …  0  |        | I            |
//! D = | 0   0   I  …  0  |    N = |   I          |
//!     | …             I  |        |     …        |
//!     |-B0 -B1  …   -B5  |        |          B6  |
//! ```
//!
//! The pencil is solved with a real QZ iteration, so a singular `B6` only
//! produces infinite eigenvalues, which are dropped.

use faer::Mat;
use nalgebra::{DMatrix, DVector, SMatrix, Vector3};

use crate::constraints::{CoefficientMatrix, ConstraintMatrix};
use crate::error::{Error, Result};
use crate::poly::F_CAP;

pub const DEGREE: usize = 6;
pub const BLOCK: usize = F_CAP;
pub const PENCIL_DIM: usize = BLOCK * DEGREE;

/// Default tolerance for the eigenvector consistency checks.
pub const TOL_CONSISTENCY: f64 = 1e-4;

/// Below this, `σ₂ / σ₁` of the evaluated constraint matrix means more than one
/// rank was lost.
pub const DEGENERATE_RATIO: f64 = 1e-8;

pub type Block = SMatrix<f64, BLOCK, BLOCK>;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPolynomial {
    /// `B_0 … B_6`, the coefficients of `s⁰ … s⁶`.
    pub coeffs: [Block; DEGREE + 1],
}

impl MatrixPolynomial {
    pub fn evaluate(&self, s: f64) -> Block {
        self.coeffs.iter().rev().fold(Block::zeros(), |acc, b| acc * s + b)
    }

    /// `B(s) J(f)`.
    pub fn apply(&self, s: f64, f: f64) -> SMatrix<f64, BLOCK, 1> {
        self.evaluate(s) * j_vector(f)
    }
}

pub fn j_vector(f: f64) -> SMatrix<f64, BLOCK, 1> {
    SMatrix::from_fn(|k, _| f.powi(k as i32))
}

/// Splits the 42 columns of `C` into seven 6-column blocks, one per power of
/// `s`; within a block the columns follow `J`.
pub fn to_matrix_polynomial(c: &CoefficientMatrix) -> MatrixPolynomial {
    MatrixPolynomial {
        coeffs: std::array::from_fn(|k| {
            Block::from_fn(|r, col| c.c[(r, k * BLOCK + col)])
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pencil {
    pub d: DMatrix<f64>,
    pub n: DMatrix<f64>,
}

impl Pencil {
    /// `‖D L − s N L‖ / ‖L‖`.
    pub fn residual(&self, s: f64, l: &DVector<f64>) -> f64 {
        let r = &self.d * l - (&self.n * l) * s;
        r.norm() / l.norm()
    }
}

pub fn linearize(mp: &MatrixPolynomial) -> Pencil {
    let mut d = DMatrix::zeros(PENCIL_DIM, PENCIL_DIM);
    let mut n = DMatrix::identity(PENCIL_DIM, PENCIL_DIM);
    for k in 0..DEGREE - 1 {
        d.view_mut((k * BLOCK, (k + 1) * BLOCK), (BLOCK, BLOCK))
            .copy_from(&Block::identity());
    }
    let last = (DEGREE - 1) * BLOCK;
    for k in 0..DEGREE {
        d.view_mut((last, k * BLOCK), (BLOCK, BLOCK))
            .copy_from(&(-mp.coeffs[k]));
    }
    n.view_mut((last, last), (BLOCK, BLOCK))
        .copy_from(&mp.coeffs[DEGREE]);
    Pencil { d, n }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub s: f64,
    pub vector: DVector<f64>,
    pub residual: f64,
}

/// Real, finite eigenpairs of the pencil.
///
/// Complex eigenvalues with `|Im| ≤ 1e-8 (1 + |Re|)` count as real. Rows of
/// `D` and `N` are jointly equilibrated first; left scaling leaves both the
/// eigenvalues and the right eigenvectors unchanged.
pub fn solve_pencil(p: &Pencil) -> Result<Vec<Eigenpair>> {
    let dim = p.d.nrows();
    let mut d = Mat::<f64>::zeros(dim, dim);
    let mut n = Mat::<f64>::zeros(dim, dim);
    for r in 0..dim {
        let scale = (0..dim)
            .map(|c| p.d[(r, c)].abs().max(p.n[(r, c)].abs()))
            .fold(0.0, f64::max);
        let inv = if scale > 0.0 { 1.0 / scale } else { 1.0 };
        for c in 0..dim {
            d[(r, c)] = p.d[(r, c)] * inv;
            n[(r, c)] = p.n[(r, c)] * inv;
        }
    }

    let gevd = d
        .generalized_eigen(&n)
        .map_err(|_| Error::EigenFailure {
            condition: condition_estimate(&p.n),
        })?;
    let (u, alpha, beta) = (gevd.U(), gevd.S_a(), gevd.S_b());

    let mut out = Vec::new();
    for k in 0..dim {
        let (a, b) = (alpha[k], beta[k]);
        let b_abs = b.norm();
        if b_abs == 0.0 || b_abs <= 1e-14 * a.norm() {
            continue;
        }
        let lambda = a / b;
        if !(lambda.re.is_finite() && lambda.im.is_finite()) {
            continue;
        }
        if lambda.im.abs() > 1e-8 * (1.0 + lambda.re.abs()) {
            continue;
        }
        // Rotate the (possibly complex) eigenvector so its largest entry is
        // real, then keep the real part.
        let col = u.col(k);
        let (mut pivot, mut pivot_abs) = (col[0], 0.0);
        for i in 0..dim {
            if col[i].norm() > pivot_abs {
                pivot = col[i];
                pivot_abs = col[i].norm();
            }
        }
        if pivot_abs == 0.0 {
            continue;
        }
        let phase = pivot.conj() / pivot_abs;
        let vector = DVector::from_fn(dim, |i, _| (col[i] * phase).re);
        if vector.norm() == 0.0 {
            continue;
        }
        let s = lambda.re;
        let residual = p.residual(s, &vector);
        out.push(Eigenpair { s, vector, residual });
    }
    Ok(out)
}

fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// A root `(s, f)` read from an eigenvector that passed the consistency checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub s: f64,
    pub f: f64,
    pub eigen_residual: f64,
}

/// Keeps eigenpairs whose vector has the monomial structure
/// `L = (1, f, f², …, s·1, s·f, …)` with `f > 0`.
///
/// After scaling `L₁ = 1`: `f = L₂`, then `|L₃ − f²| ≤ tol (1 + f²)` and the
/// block shift `L[6..12] ≈ s · L[0..6]` must hold to the same tolerance.
pub fn filter_solutions(pairs: &[Eigenpair], tol_consistency: f64) -> Vec<Root> {
    pairs
        .iter()
        .filter_map(|pair| {
            let l = &pair.vector;
            if l.len() < 2 * BLOCK || l[0].abs() <= 1e-10 * l.norm() {
                return None;
            }
            let l = l / l[0];
            let f = l[1];
            if !(f > 0.0 && f.is_finite()) {
                return None;
            }
            if (l[2] - f * f).abs() > tol_consistency * (1.0 + f * f) {
                return None;
            }
            let head = l.rows(0, BLOCK);
            let shifted = l.rows(BLOCK, BLOCK);
            let shift_err = (shifted - head * pair.s).amax();
            if shift_err > tol_consistency * (1.0 + pair.s.abs()) * head.amax() {
                return None;
            }
            Some(Root {
                s: pair.s,
                f,
                eigen_residual: pair.residual,
            })
        })
        .collect()
}

/// Unit right null vector of the row-normalized `M(s, f)`.
///
/// Returns the vector and `σ₃ / σ₂` (smallest over second-smallest singular
/// value). The sign is arbitrary.
pub fn recover_translation(m: &ConstraintMatrix, s: f64, f: f64) -> Result<(Vector3<f64>, f64)> {
    if !(s.is_finite() && f.is_finite()) {
        return Err(Error::DegenerateInput("non-finite root".into()));
    }
    let ev = m.evaluate_row_normalized(s, f);
    let svd = ev.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma = order.map(|k| svd.singular_values[k]);
    if sigma[0] == 0.0 || sigma[1] < DEGENERATE_RATIO * sigma[0] {
        return Err(Error::DegenerateNullspace {
            ratio: if sigma[0] > 0.0 { sigma[1] / sigma[0] } else { 0.0 },
        });
    }
    let t = v_t.row(order[2]).transpose().normalize();
    Ok((t, sigma[2] / sigma[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{build_constraint_matrix, coefficient_matrix, determinant_system};
    use crate::poly::monomial_index;
    use crate::synth::{generate_scene, SceneConfig, SyntheticScene};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scene(seed: u64) -> SyntheticScene {
        generate_scene(&SceneConfig {
            n_points: 4,
            seed,
            ..SceneConfig::default()
        })
        .unwrap()
    }

    fn pipeline(sc: &SyntheticScene) -> (ConstraintMatrix, MatrixPolynomial, Pencil) {
        let m = build_constraint_matrix(
            &sc.correspondences[0],
            &sc.correspondences[1],
            sc.imu_i,
            sc.imu_j,
            &sc.principal_point,
        )
        .unwrap();
        let g = determinant_system(&m).unwrap();
        let mp = to_matrix_polynomial(&coefficient_matrix(&g).unwrap());
        let pencil = linearize(&mp);
        (m, mp, pencil)
    }

    fn random_c(rng: &mut impl Rng) -> CoefficientMatrix {
        CoefficientMatrix {
            c: SMatrix::from_fn(|_, _| rng.gen_range(-1.0..1.0)),
        }
    }

    #[test]
    fn matrix_polynomial_matches_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_c(&mut rng);
        let mp = to_matrix_polynomial(&c);
        for _ in 0..50 {
            let (s, f) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            let lhs = mp.apply(s, f);
            let rhs = c.apply(s, f);
            assert!((lhs - rhs).amax() <= 1e-10 * rhs.amax().max(1.0));
        }
    }

    #[test]
    fn constant_in_s_has_zero_high_blocks() {
        let mut c = CoefficientMatrix {
            c: SMatrix::zeros(),
        };
        for r in 0..6 {
            for b in 0..6 {
                c.c[(r, monomial_index(0, b))] = (r * 6 + b) as f64;
            }
        }
        let mp = to_matrix_polynomial(&c);
        assert!(mp.coeffs[1..].iter().all(|b| b.amax() == 0.0));
    }

    #[test]
    fn column_lands_in_expected_block() {
        let mut c = CoefficientMatrix {
            c: SMatrix::zeros(),
        };
        c.c[(4, monomial_index(2, 3))] = 9.0;
        let mp = to_matrix_polynomial(&c);
        assert_eq!(mp.coeffs[2][(4, 3)], 9.0);
    }

    #[test]
    fn pencil_block_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mp = to_matrix_polynomial(&random_c(&mut rng));
        let p = linearize(&mp);
        assert_eq!(p.d.shape(), (36, 36));
        for k in 0..5 {
            assert_eq!(p.d.view((k * 6, (k + 1) * 6), (6, 6)), Block::identity());
            assert_eq!(p.n.view((k * 6, k * 6), (6, 6)), Block::identity());
        }
        for k in 0..6 {
            assert_eq!(p.d.view((30, k * 6), (6, 6)), -mp.coeffs[k]);
        }
        assert_eq!(p.n.view((30, 30), (6, 6)), mp.coeffs[6]);

        // Any (s, f) with B(s)J(f) = 0 gives D L = s N L; check the identity
        // D L − s N L = (0, …, 0, −B(s) J) for arbitrary (s, f).
        let (s, f) = (0.3f64, 0.8);
        let j = j_vector(f);
        let l = DVector::from_fn(36, |i, _| s.powi((i / 6) as i32) * j[i % 6]);
        let r = &p.d * &l - (&p.n * &l) * s;
        let tail = -mp.apply(s, f);
        assert!(r.rows(0, 30).amax() < 1e-14);
        assert!((r.rows(30, 6) - tail).amax() < 1e-12);
    }

    #[test]
    fn leading_identity_gives_zero_eigenvalues() {
        let mut coeffs = [Block::zeros(); 7];
        coeffs[6] = Block::identity();
        let p = linearize(&MatrixPolynomial { coeffs });
        let pairs = solve_pencil(&p).unwrap();
        assert!(!pairs.is_empty());
        assert!(pairs.iter().all(|e| e.s.abs() < 1e-6), "{:?}", pairs.iter().map(|e| e.s).collect::<Vec<_>>());
    }

    #[test]
    fn ground_truth_is_an_eigenvalue() {
        for seed in 0..10 {
            let sc = scene(seed);
            let (m, _, pencil) = pipeline(&sc);
            let pairs = solve_pencil(&pencil).unwrap();
            assert!(pairs.len() <= 36);
            let best = pairs
                .iter()
                .min_by(|a, b| (a.s - sc.gt_s).abs().total_cmp(&(b.s - sc.gt_s).abs()))
                .unwrap();
            assert!((best.s - sc.gt_s).abs() <= 1e-9, "seed {seed}: {} vs {}", best.s, sc.gt_s);
            assert!(best.residual <= 1e-8, "residual {:e}", best.residual);

            let roots = filter_solutions(&pairs, TOL_CONSISTENCY);
            let f_gt = m.internal_from_focal(sc.gt_focal_px);
            let hit = roots
                .iter()
                .any(|r| (r.s - sc.gt_s).abs() <= 1e-8 && (r.f - f_gt).abs() / f_gt <= 1e-8);
            assert!(hit, "seed {seed}: ground truth filtered out");
        }
    }

    #[test]
    fn filter_rejects_negative_f_and_keeps_consistent() {
        let make = |s: f64, f: f64| {
            let v = DVector::from_fn(36, |i, _| s.powi((i / 6) as i32) * f.powi((i % 6) as i32));
            Eigenpair { s, vector: v, residual: 0.0 }
        };
        assert!(filter_solutions(&[make(0.1, -0.002)], TOL_CONSISTENCY).is_empty());
        let kept = filter_solutions(&[make(0.1, 0.7)], TOL_CONSISTENCY);
        assert_eq!(kept.len(), 1);
        assert!((kept[0].f - 0.7).abs() < 1e-15);

        let mut bad = make(0.1, 0.7);
        bad.vector[2] += 0.5;
        assert!(filter_solutions(&[bad], TOL_CONSISTENCY).is_empty());
        let mut bad = make(0.1, 0.7);
        bad.vector[7] += 0.5;
        assert!(filter_solutions(&[bad], TOL_CONSISTENCY).is_empty());
    }

    #[test]
    fn translation_from_null_space() {
        for seed in 0..10 {
            let sc = scene(50 + seed);
            let (m, _, _) = pipeline(&sc);
            let f = m.internal_from_focal(sc.gt_focal_px);
            let (t, gap) = recover_translation(&m, sc.gt_s, f).unwrap();
            assert!((t.norm() - 1.0).abs() < 1e-12);
            assert!(t.dot(&sc.gt_t_aligned).abs() >= 1.0 - 1e-9);
            assert!(gap < 1e-6);
        }
    }

    #[test]
    fn rank_one_matrix_is_degenerate() {
        let sc = scene(60);
        let (m, _, _) = pipeline(&sc);
        let mut collapsed = m.clone();
        collapsed.entries = [m.entries[2]; 4];
        let f = m.internal_from_focal(sc.gt_focal_px);
        assert!(matches!(
            recover_translation(&collapsed, sc.gt_s + 0.01, f),
            Err(Error::DegenerateNullspace { .. })
        ));
    }
}
