//! Central-difference gradient checks in f64.

use csi2image::nn::{
    bce_loss, mse_loss, Activation, ActivationLayer, BatchNorm, Conv2d, Dense, Layer, Mode, Reshape,
    Sequential, Tensor, Upsample2x,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;

fn random(shape: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Inputs kept away from the origin so piecewise-linear kinks are not straddled.
fn off_kink(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(
        shape,
        (0..n)
            .map(|_| {
                let m = rng.random_range(0.1..1.0);
                if rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect(),
    )
    .unwrap()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

/// Projects the layer output onto a fixed random direction so the check
/// covers every output element at once.
fn check_layer(layer: &mut dyn Layer<f64>, x: &Tensor<f64>, mode: Mode, tol: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let y = layer.forward(x, mode).unwrap();
    let r = random(y.shape(), 1.0, &mut rng);
    let objective = |layer: &mut dyn Layer<f64>, x: &Tensor<f64>| -> f64 {
        let y = layer.forward(x, mode).unwrap();
        y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    };
    for p in layer.params_mut() {
        p.grad.fill(0.0);
    }
    layer.forward(x, mode).unwrap();
    let dx = layer.backward(&r).unwrap();

    let mut num = vec![0.0; x.len()];
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += H;
        let fp = objective(layer, &xp);
        xp.data_mut()[i] -= 2.0 * H;
        let fm = objective(layer, &xp);
        num[i] = (fp - fm) / (2.0 * H);
    }
    let e = rel_err(dx.data(), &num);
    assert!(e <= tol, "input gradient relative error {e:.2e}");

    let n_params = layer.params().len();
    for j in 0..n_params {
        let analytic = layer.params()[j].grad.data().to_vec();
        let name = layer.params()[j].name.clone();
        let mut num = vec![0.0; analytic.len()];
        for i in 0..analytic.len() {
            layer.params_mut()[j].value.data_mut()[i] += H;
            let fp = objective(layer, x);
            layer.params_mut()[j].value.data_mut()[i] -= 2.0 * H;
            let fm = objective(layer, x);
            layer.params_mut()[j].value.data_mut()[i] += H;
            num[i] = (fp - fm) / (2.0 * H);
        }
        let e = rel_err(&analytic, &num);
        assert!(e <= tol, "{name} gradient relative error {e:.2e}");
    }
}

#[test]
fn dense_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut l = Dense::<f64>::new("d", 5, 4, &mut rng);
    l.bias.value = random(&[4], 0.5, &mut rng);
    check_layer(&mut l, &random(&[3, 5], 1.0, &mut rng), Mode::Train, 1e-3);
}

#[test]
fn conv_gradients_stride_one_and_two() {
    for stride in [1, 2] {
        let mut rng = ChaCha8Rng::seed_from_u64(2 + stride as u64);
        let mut l = Conv2d::<f64>::new("c", 2, 3, stride, &mut rng);
        l.weight.value = random(l.weight.value.shape(), 0.5, &mut rng);
        check_layer(&mut l, &random(&[2, 5, 6, 2], 1.0, &mut rng), Mode::Train, 1e-3);
    }
}

#[test]
fn batchnorm_gradients_train_and_infer() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut l = BatchNorm::<f64>::new("bn", 3);
    l.gamma.value = random(&[3], 2.0, &mut rng);
    l.beta.value = random(&[3], 1.0, &mut rng);
    let x = random(&[4, 2, 2, 3], 2.0, &mut rng);
    check_layer(&mut l, &x, Mode::Train, 1e-3);
    check_layer(&mut l, &x, Mode::Frozen, 1e-3);
    check_layer(&mut l, &x, Mode::Infer, 1e-3);
}

#[test]
fn activation_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in [Activation::Relu, Activation::LeakyRelu(0.2), Activation::Tanh, Activation::Sigmoid] {
        let mut l = ActivationLayer::<f64>::new(kind);
        check_layer(&mut l, &off_kink(&[3, 7], &mut rng), Mode::Train, 1e-3);
    }
}

#[test]
fn upsample_and_reshape_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    check_layer(&mut Upsample2x::default(), &random(&[2, 3, 2, 2], 1.0, &mut rng), Mode::Train, 1e-3);
    check_layer(&mut Reshape::new(&[2, 3, 2]), &random(&[2, 12], 1.0, &mut rng), Mode::Train, 1e-3);
    check_layer(&mut Reshape::flatten(), &random(&[2, 2, 3, 2], 1.0, &mut rng), Mode::Train, 1e-3);
}

fn numeric_loss_grad(
    loss: impl Fn(&Tensor<f64>) -> f64,
    x: &Tensor<f64>,
) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.clone();
            p.data_mut()[i] += H;
            let fp = loss(&p);
            p.data_mut()[i] -= 2.0 * H;
            (fp - loss(&p)) / (2.0 * H)
        })
        .collect()
}

#[test]
fn loss_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pred = random(&[4, 3], 1.0, &mut rng);
    let target = random(&[4, 3], 1.0, &mut rng);
    let (_, g) = mse_loss(&pred, &target).unwrap();
    let n = numeric_loss_grad(|p| mse_loss(p, &target).unwrap().0, &pred);
    assert!(rel_err(g.data(), &n) <= 1e-4);

    let prob = Tensor::new(&[6, 1], (0..6).map(|_| rng.random_range(0.05..0.95)).collect()).unwrap();
    let label = Tensor::new(&[6, 1], vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
    let (_, g) = bce_loss(&prob, &label).unwrap();
    let n = numeric_loss_grad(|p| bce_loss(p, &label).unwrap().0, &prob);
    assert!(rel_err(g.data(), &n) <= 1e-4);
}

fn check_stack(net: &mut Sequential<f64>, x: &Tensor<f64>, loss: &dyn Fn(&Tensor<f64>) -> (f64, Tensor<f64>)) {
    net.zero_grad();
    let y = net.forward(x, Mode::Train).unwrap();
    net.backward(&loss(&y).1).unwrap();
    let n_params = net.params().len();
    for j in 0..n_params {
        let analytic = net.params()[j].grad.data().to_vec();
        let name = net.params()[j].name.clone();
        // Subsample large tensors; every element of the small ones.
        let stride = (analytic.len() / 40).max(1);
        let idx: Vec<usize> = (0..analytic.len()).step_by(stride).collect();
        let mut num = Vec::new();
        for &i in &idx {
            net.params_mut()[j].value.data_mut()[i] += H;
            let fp = loss(&net.forward(x, Mode::Train).unwrap()).0;
            net.params_mut()[j].value.data_mut()[i] -= 2.0 * H;
            let fm = loss(&net.forward(x, Mode::Train).unwrap()).0;
            net.params_mut()[j].value.data_mut()[i] += H;
            num.push((fp - fm) / (2.0 * H));
        }
        let a: Vec<f64> = idx.iter().map(|&i| analytic[i]).collect();
        let e = rel_err(&a, &num);
        assert!(e <= 1e-3, "{name}: relative error {e:.2e}");
    }
}

#[test]
fn reduced_generator_stack_end_to_end() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut net = Sequential::<f64>::default();
    let mut dense = Dense::new("g.dense", 6, 2 * 2 * 3, &mut rng);
    dense.weight.value = random(&[6, 12], 0.5, &mut rng);
    net.push(dense);
    net.push(ActivationLayer::new(Activation::Tanh));
    net.push(Reshape::new(&[2, 2, 3]));
    net.push(Upsample2x::default());
    let mut conv = Conv2d::new("g.conv1", 3, 4, 1, &mut rng);
    conv.weight.value = random(&[3, 3, 3, 4], 0.5, &mut rng);
    net.push(conv);
    net.push(BatchNorm::new("g.bn1", 4));
    net.push(ActivationLayer::new(Activation::Sigmoid));
    let mut out = Conv2d::new("g.out", 4, 3, 1, &mut rng);
    out.weight.value = random(&[3, 3, 4, 3], 0.5, &mut rng);
    net.push(out);
    net.push(ActivationLayer::new(Activation::Tanh));
    let x = random(&[3, 6], 1.0, &mut rng);
    let target = random(&[3, 4, 4, 3], 1.0, &mut rng);
    check_stack(&mut net, &x, &|y| mse_loss(y, &target).unwrap());
}

#[test]
fn reduced_discriminator_stack_end_to_end() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut net = Sequential::<f64>::default();
    let mut c1 = Conv2d::new("d.conv1", 3, 4, 2, &mut rng);
    c1.weight.value = random(&[3, 3, 3, 4], 0.5, &mut rng);
    net.push(c1);
    net.push(ActivationLayer::new(Activation::Tanh));
    let mut c2 = Conv2d::new("d.conv2", 4, 4, 2, &mut rng);
    c2.weight.value = random(&[3, 3, 4, 4], 0.5, &mut rng);
    net.push(c2);
    net.push(BatchNorm::new("d.bn2", 4));
    net.push(ActivationLayer::new(Activation::Tanh));
    net.push(Reshape::flatten());
    let mut d = Dense::new("d.dense", 2 * 2 * 4, 1, &mut rng);
    d.weight.value = random(&[16, 1], 0.5, &mut rng);
    net.push(d);
    net.push(ActivationLayer::new(Activation::Sigmoid));
    let x = random(&[4, 8, 8, 3], 1.0, &mut rng);
    let label = Tensor::new(&[4, 1], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
    check_stack(&mut net, &x, &|y| bce_loss(y, &label).unwrap());
}
