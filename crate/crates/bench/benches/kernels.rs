use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use fgmae::features::{compute_canny, compute_hog, compute_targets, CannyParams, FeatureSpec, HogParams};
use fgmae::model::{FgMae, MaskPlan, ModelConfig};
use fgmae::numerics::kernels::gemm_nn;
use fgmae::{SeedRng, Tape, Tensor};

fn random(dims: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = SeedRng::new(seed);
    let n = dims.iter().product();
    Tensor::new(dims.to_vec(), (0..n).map(|_| rng.uniform() as f32).collect()).unwrap()
}

fn gemm(c: &mut Criterion) {
    let mut g = c.benchmark_group("gemm_nn");
    for n in [64, 128, 256] {
        let a = random(&[n, n], 1);
        let b = random(&[n, n], 2);
        let mut out = vec![0f32; n * n];
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |bch, &n| {
            bch.iter(|| {
                out.iter_mut().for_each(|v| *v = 0.0);
                gemm_nn(a.data(), b.data(), &mut out, n, n, n);
                black_box(&out);
            })
        });
    }
    g.finish();
}

fn descriptors(c: &mut Criterion) {
    let img = random(&[1, 2, 224, 224], 3);
    c.bench_function("hog_2x224", |b| b.iter(|| compute_hog(black_box(&img), &HogParams::default()).unwrap()));
    c.bench_function("canny_2x224", |b| b.iter(|| compute_canny(black_box(&img), &CannyParams::default()).unwrap()));
}

fn tiny_step(c: &mut Criterion) {
    let spec = FeatureSpec::hog();
    let widths = spec.head_widths(2, 8).unwrap();
    let model = FgMae::<f32>::new(ModelConfig::tiny(32, 8, 2, widths), &SeedRng::new(0)).unwrap();
    let img = random(&[8, 2, 32, 32], 4);
    let targets = compute_targets(&img, &spec, 8).unwrap();
    let plan = MaskPlan::random(8, 16, 0.75, &mut SeedRng::new(5)).unwrap();
    c.bench_function("tiny_forward_backward_b8", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, |_| true);
            let loss = model.loss(&mut tape, &bound, &img, &targets, &plan).unwrap();
            black_box(tape.backward(loss).unwrap());
        })
    });
}

criterion_group!(benches, gemm, descriptors, tiny_step);
criterion_main!(benches);
