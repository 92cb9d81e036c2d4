use criterion::{black_box, criterion_group, criterion_main, Criterion};
use tbg_bench::{continuum_fixture, lattice_fixture};
use tbg_core::bm::{bm_matrix, energies, PlaneWaveBasis, Splitting};
use tbg_core::bounds::{optimal_bound, solve_alpha_max, PlanOptions, DEFAULT_NU};
use tbg_core::propagator::evolve;
use tbg_core::{BmParams, Complex64, HoppingModel, LatticeParams, PropagatorOptions, Vec2};

fn sparse_matvec(c: &mut Criterion) {
    let (h, psi) = lattice_fixture(30.0, 5.0);
    let mut y = vec![Complex64::new(0.0, 0.0); h.dim()];
    c.bench_function("matvec R=30", |b| b.iter(|| h.apply(black_box(psi.amplitudes()), &mut y)));
}

fn chebyshev(c: &mut Criterion) {
    let (h, psi) = lattice_fixture(25.0, 4.0);
    let opts = PropagatorOptions::default();
    c.bench_function("chebyshev R=25 t=5", |b| b.iter(|| evolve(&h, black_box(&psi), 5.0, &opts).unwrap()));
}

fn continuum(c: &mut Criterion) {
    let (stepper, f) = continuum_fixture(128, 200.0);
    c.bench_function("split step 128^2 x16 triple jump", |b| {
        b.iter(|| stepper.run_with(black_box(&f), 1.0, 16, Splitting::TripleJump).unwrap())
    });
    let p = BmParams::physical();
    let basis = PlaneWaveBasis::new(&p, 6).unwrap();
    c.bench_function("bm eigenvalues cutoff 6", |b| {
        b.iter(|| energies(black_box(Vec2::new(0.01, -0.02)), &p, &basis).unwrap())
    });
    c.bench_function("bm matrix cutoff 6", |b| b.iter(|| bm_matrix(black_box(Vec2::new(0.01, -0.02)), &p, 6).unwrap()));
}

fn certificate(c: &mut Criterion) {
    let lattice = LatticeParams::physical();
    let model = HoppingModel::physical();
    let plan = PlanOptions::default();
    c.bench_function("alpha_max root", |b| {
        b.iter(|| solve_alpha_max(black_box(0.5), DEFAULT_NU, &model, &lattice).unwrap())
    });
    c.bench_function("optimal certificate", |b| {
        b.iter(|| optimal_bound(black_box(86.6), 10.0, 5.0, 1.0, 0.0, &model, &lattice, &plan).unwrap())
    });
}

criterion_group!(benches, sparse_matvec, chebyshev, continuum, certificate);
criterion_main!(benches);
