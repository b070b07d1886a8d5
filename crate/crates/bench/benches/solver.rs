use acpose_bench::minimal_problems;
use acpose_core::constraints::{build_constraint_matrix, coefficient_matrix, determinant_system};
use acpose_core::polyeig::{linearize, solve_pencil, to_matrix_polynomial};
use acpose_core::ransac::estimate;
use acpose_core::synth::{generate_scene, inject_outliers};
use acpose_core::{solve_2ac, NoiseConfig, RansacConfig, SceneConfig, SolveOptions};
use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::SeedableRng;

fn minimal(c: &mut Criterion) {
    let problems = minimal_problems(64).unwrap();
    let opts = SolveOptions::default();
    let single = SolveOptions { run_both_row_assignments: false, ..opts };

    let mut k = 0;
    c.bench_function("solve_2ac", |b| {
        b.iter(|| {
            let p = &problems[k % problems.len()];
            k += 1;
            black_box(solve_2ac(&p.ac_a, &p.ac_b, p.imu_i, p.imu_j, &p.principal_point, &opts))
        })
    });
    let mut k = 0;
    c.bench_function("solve_2ac_single_assignment", |b| {
        b.iter(|| {
            let p = &problems[k % problems.len()];
            k += 1;
            black_box(solve_2ac(&p.ac_a, &p.ac_b, p.imu_i, p.imu_j, &p.principal_point, &single))
        })
    });

    let p = &problems[0];
    c.bench_function("constraint_system", |b| {
        b.iter(|| {
            let m = build_constraint_matrix(&p.ac_a, &p.ac_b, p.imu_i, p.imu_j, &p.principal_point).unwrap();
            black_box(coefficient_matrix(&determinant_system(&m).unwrap()).unwrap())
        })
    });
    let m = build_constraint_matrix(&p.ac_a, &p.ac_b, p.imu_i, p.imu_j, &p.principal_point).unwrap();
    let pencil = linearize(&to_matrix_polynomial(
        &coefficient_matrix(&determinant_system(&m).unwrap()).unwrap(),
    ));
    c.bench_function("pencil_qz_36", |b| b.iter(|| black_box(solve_pencil(&pencil))));
}

fn robust(c: &mut Criterion) {
    let mut sc = generate_scene(&SceneConfig {
        n_points: 200,
        seed: 1,
        noise: NoiseConfig { image_px: 1.0, ..NoiseConfig::none() },
        ..SceneConfig::default()
    })
    .unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    inject_outliers(&mut sc.correspondences, 0.3, sc.image_size, &mut rng);
    let cfg = RansacConfig::default();
    let mut group = c.benchmark_group("ransac");
    group.sample_size(10);
    group.bench_function("200_acs_30pct_outliers", |b| {
        b.iter(|| black_box(estimate(&sc.correspondences, sc.imu_i, sc.imu_j, &sc.principal_point, &cfg)))
    });
    group.finish();
}

criterion_group!(benches, minimal, robust);
criterion_main!(benches);
