use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ndarray::Array2;
use npos_core::channel::synthesize_sample;
use npos_core::mlp::positioning_dims;
use npos_core::tridiag::solve_tridiagonal;
use npos_core::{ExperimentConfig, Mlp, Vec2};

fn mlp_kernels(c: &mut Criterion) {
    let dims = positioning_dims(1024);
    let model = Mlp::<f32>::new(&dims, 7).expect("model");
    let x = Array2::from_shape_fn((256, 1024), |(i, j)| ((i * 31 + j * 17) % 101) as f32 / 101.0);
    let upstream = Array2::from_elem((256, 2), 1e-2f32);

    c.bench_function("mlp_forward_256x1024", |b| b.iter(|| model.forward(black_box(x.view())).unwrap()));
    c.bench_function("mlp_forward_backward_256x1024", |b| {
        b.iter(|| {
            let (_, cache) = model.forward_cached(black_box(x.view())).unwrap();
            model.backward_cached(&cache, upstream.view()).unwrap()
        })
    });
}

fn csi_kernel(c: &mut Criterion) {
    let cfg = ExperimentConfig::small_room();
    let world = cfg.world_config();
    let chan = cfg.channel_config();
    let mut n = 0usize;
    c.bench_function("csi_sample_small_room", |b| {
        b.iter(|| {
            n += 1;
            let ue = Vec2::new(0.5 + (n % 97) as f64 / 97.0, 0.7);
            synthesize_sample(&world, &chan, n, black_box(ue)).unwrap()
        })
    });
}

fn thomas_kernel(c: &mut Criterion) {
    let n = 30_000;
    let lower = vec![-1.0; n - 1];
    let upper = vec![-1.0; n - 1];
    let mut diag = vec![2.0; n];
    diag[0] = 3.0;
    diag[n - 1] = 3.0;
    let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.01).sin()).collect();
    c.bench_function("tridiagonal_30k", |b| {
        b.iter_batched(|| rhs.clone(), |r| solve_tridiagonal(&lower, &diag, &upper, &r).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(benches, mlp_kernels, csi_kernel, thomas_kernel);
criterion_main!(benches);
