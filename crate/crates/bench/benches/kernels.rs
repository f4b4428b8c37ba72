use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use robustlab::attacks::{fgsm, pgd};
use robustlab::models::{Classifier, ConvNet, LossFn};
use robustlab::tensor::{conv2d_backward, conv2d_forward, Padding};
use robustlab::Tensor;

// Deterministic fill in [0, 1); benches should not depend on an RNG crate.
fn filled<T: From<f32>>(shape: &[usize], salt: usize) -> Vec<T> {
    let n: usize = shape.iter().product();
    (0..n).map(|i| T::from(((i * 7919 + salt * 104_729) % 1000) as f32 / 1000.0)).collect()
}

fn conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv2d");
    // first two layers of the CIFAR network on a batch of 32
    for (name, input, kernel, stride) in [
        ("conv1", [32, 32, 32, 3], [8, 8, 3, 64], 2),
        ("conv2", [32, 16, 16, 64], [6, 6, 64, 128], 2),
    ] {
        let x = Tensor::<f32>::new(input.to_vec(), filled(&input, 1)).unwrap();
        let k = Tensor::<f32>::new(kernel.to_vec(), filled(&kernel, 2)).unwrap();
        let y = conv2d_forward(&x, &k, stride, Padding::Same).unwrap();
        let dy = Tensor::<f32>::new(y.shape().to_vec(), filled(y.shape(), 3)).unwrap();
        group.bench_function(BenchmarkId::new("forward", name), |b| {
            b.iter(|| conv2d_forward(&x, &k, stride, Padding::Same).unwrap())
        });
        group.bench_function(BenchmarkId::new("backward", name), |b| {
            b.iter(|| conv2d_backward(&x, &k, &dy, stride, Padding::Same).unwrap())
        });
    }
    group.finish();
}

fn convnet(c: &mut Criterion) {
    let net = ConvNet::<f32>::glorot(0);
    let xs = Tensor::<f32>::new(vec![32, 3072], filled(&[32, 3072], 4)).unwrap();
    let labels: Vec<usize> = (0..32).map(|i| i % 10).collect();
    let loss = LossFn::xent(0.0).unwrap();
    c.bench_function("convnet/train_step_32", |b| {
        b.iter(|| net.loss_and_grads(&xs, &labels, loss, false).unwrap())
    });
}

fn attacks(c: &mut Criterion) {
    let net = ConvNet::<f64>::glorot(0).cast::<f32>();
    let xs = Tensor::new(vec![16, 3072], filled(&[16, 3072], 5)).unwrap();
    let labels: Vec<usize> = (0..16).map(|i| i % 10).collect();
    let model: &dyn Classifier = &net;
    let mut group = c.benchmark_group("attacks");
    group.sample_size(10);
    group.bench_function("fgsm_16", |b| {
        b.iter(|| fgsm(model, &xs, &labels, 8.0 / 255.0, true).unwrap())
    });
    group.bench_function("pgd20_16", |b| {
        b.iter(|| pgd(model, &xs, &labels, 8.0 / 255.0, 20, 2.0 / 255.0, true, 0).unwrap())
    });
    group.finish();
}

criterion_group!(benches, conv, convnet, attacks);
criterion_main!(benches);
