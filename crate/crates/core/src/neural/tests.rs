use proptest::prelude::*;
use rand::{Rng as _, SeedableRng};

use super::*;
use crate::rng::Rng;

fn rand_tensor(rng: &mut Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn rand_layer(rng: &mut Rng, cin: usize, cout: usize, k: usize, padding: Padding, act: Activation) -> ConvLayer<f64> {
    let mut l = ConvLayer::zeros(cin, cout, k, padding, act).unwrap();
    for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
        *w = rng.random_range(-0.8..0.8);
    }
    l
}

// Direct summation over the zero-padded input, indexed w[o, c, j].
fn conv_oracle(x: &Tensor<f64>, l: &ConvLayer<f64>) -> Tensor<f64> {
    let left = l.padding.left(l.kernel) as isize;
    Matrix::from_fn(x.rows(), l.out_channels, |t, o| {
        let mut acc = l.bias[o];
        for c in 0..l.in_channels {
            for j in 0..l.kernel {
                let src = t as isize + j as isize - left;
                if src >= 0 && (src as usize) < x.rows() {
                    acc += l.weight(o, c, j) * x.get(src as usize, c);
                }
            }
        }
        match l.activation {
            Activation::Tanh => acc.tanh(),
            Activation::Linear => acc,
        }
    })
}

#[test]
fn identity_kernel() {
    let mut l = ConvLayer::<f64>::zeros(3, 3, 1, Padding::Centered, Activation::Linear).unwrap();
    for c in 0..3 {
        l.set_weight(c, c, 0, 1.0);
    }
    let mut rng = Rng::seed_from_u64(1);
    let x = rand_tensor(&mut rng, 9, 3);
    assert_eq!(conv_forward(&x, &l).unwrap(), x);
    let net = Network::new(vec![l], 0).unwrap();
    assert_eq!(network_forward(&x, &net).unwrap(), x);
    let empty = Network::<f64>::new(vec![], 0).unwrap();
    assert_eq!(network_forward(&x, &empty).unwrap(), x);
}

#[test]
fn causal_impulse() {
    let mut rng = Rng::seed_from_u64(2);
    let l = rand_layer(&mut rng, 2, 3, 5, Padding::Causal, Activation::Linear);
    let mut x = Matrix::zeros(12, 2);
    x.set(6, 0, 1.0);
    x.set(6, 1, -2.0);
    let y = conv_forward(&x, &l).unwrap();
    for t in 0..6 {
        for o in 0..3 {
            assert_eq!(y.get(t, o), l.bias[o]);
        }
    }
    let mut zero_bias = l.clone();
    zero_bias.bias.iter_mut().for_each(|b| *b = 0.0);
    let y = conv_forward(&x, &zero_bias).unwrap();
    assert!(y.as_slice()[..6 * 3].iter().all(|&v| v == 0.0));
}

#[test]
fn matches_direct_summation() {
    let mut rng = Rng::seed_from_u64(3);
    for padding in [Padding::Causal, Padding::Centered] {
        let l = rand_layer(&mut rng, 2, 3, 3, padding, Activation::Tanh);
        let x = rand_tensor(&mut rng, 7, 2);
        let (got, want) = (conv_forward(&x, &l).unwrap(), conv_oracle(&x, &l));
        for (a, b) in got.as_slice().iter().zip(want.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn channel_mismatch() {
    let l = ConvLayer::<f64>::zeros(2, 3, 3, Padding::Causal, Activation::Linear).unwrap();
    assert!(matches!(conv_forward(&Matrix::zeros(4, 5), &l), Err(Error::Shape(_))));
    assert!(ConvLayer::<f64>::zeros(2, 3, 4, Padding::Causal, Activation::Linear).is_err());
    let a = ConvLayer::<f64>::zeros(2, 3, 3, Padding::Causal, Activation::Tanh).unwrap();
    let b = ConvLayer::<f64>::zeros(4, 1, 3, Padding::Causal, Activation::Linear).unwrap();
    assert!(Network::new(vec![a.clone(), b], 0).is_err());
    assert!(Network::new(vec![a], 0).is_err(), "tanh output layer must be rejected");
}

#[test]
fn composition() {
    let mut rng = Rng::seed_from_u64(4);
    let a = rand_layer(&mut rng, 3, 4, 3, Padding::Centered, Activation::Tanh);
    let b = rand_layer(&mut rng, 4, 2, 5, Padding::Centered, Activation::Linear);
    let x = rand_tensor(&mut rng, 10, 3);
    let manual = conv_forward(&conv_forward(&x, &a).unwrap(), &b).unwrap();
    let net = Network::new(vec![a, b], 0).unwrap();
    assert_eq!(network_forward(&x, &net).unwrap(), manual);
    assert_eq!(net.forward_cached(&x).unwrap().output(), &manual);
}

#[test]
fn mse_examples() {
    let t = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let (loss, grad) = mse_loss(&t, &t).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.as_slice().iter().all(|&g| g == 0.0));
    let (loss, _) = mse_loss(&t.map(|v| v + 1.0), &t).unwrap();
    assert_eq!(loss, 1.0);
    let p = Matrix::from_vec(1, 2, vec![2.0, 0.0]).unwrap();
    let (loss, grad) = mse_loss(&p, &Matrix::zeros(1, 2)).unwrap();
    assert_eq!(loss, 2.0);
    assert_eq!(grad.as_slice(), &[2.0, 0.0]);
    assert!(mse_loss(&p, &Matrix::zeros(2, 1)).is_err());
}

#[test]
fn zero_upstream_gradient() {
    let mut rng = Rng::seed_from_u64(5);
    let net = Network::new(
        vec![
            rand_layer(&mut rng, 2, 3, 3, Padding::Causal, Activation::Tanh),
            rand_layer(&mut rng, 3, 2, 3, Padding::Causal, Activation::Linear),
        ],
        0,
    )
    .unwrap();
    let x = rand_tensor(&mut rng, 6, 2);
    let cache = net.forward_cached(&x).unwrap();
    let g = backward(&net, &cache, &Matrix::zeros(6, 2)).unwrap();
    assert!(g.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
}

#[test]
fn single_tap_closed_form() {
    let mut l = ConvLayer::<f64>::zeros(1, 1, 1, Padding::Causal, Activation::Linear).unwrap();
    l.weights[0] = 0.3;
    let net = Network::new(vec![l], 0).unwrap();
    let x = Matrix::from_vec(4, 1, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
    let g = Matrix::from_vec(4, 1, vec![0.1, 0.2, -0.3, 0.4]).unwrap();
    let grads = backward(&net, &net.forward_cached(&x).unwrap(), &g).unwrap();
    let want: f64 = x.as_slice().iter().zip(g.as_slice()).map(|(a, b)| a * b).sum();
    assert!((grads.layers[0].weights[0] - want).abs() < 1e-15);
    assert!((grads.layers[0].bias[0] - 0.4).abs() < 1e-15);
}

#[test]
fn backward_rejects_foreign_cache() {
    let mut rng = Rng::seed_from_u64(6);
    let one = Network::new(vec![rand_layer(&mut rng, 2, 2, 3, Padding::Causal, Activation::Linear)], 0).unwrap();
    let two = Network::new(
        vec![
            rand_layer(&mut rng, 2, 2, 3, Padding::Causal, Activation::Tanh),
            rand_layer(&mut rng, 2, 2, 3, Padding::Causal, Activation::Linear),
        ],
        0,
    )
    .unwrap();
    let x = rand_tensor(&mut rng, 5, 2);
    let cache = one.forward_cached(&x).unwrap();
    assert!(backward(&two, &cache, &Matrix::zeros(5, 2)).is_err());
}

fn loss_of(net: &Network<f64>, x: &Tensor<f64>, target: &Tensor<f64>) -> f64 {
    mse_loss(&network_forward(x, net).unwrap(), target).unwrap().0
}

#[test]
fn finite_difference_two_layer() {
    let mut rng = Rng::seed_from_u64(7);
    for padding in [Padding::Causal, Padding::Centered] {
        let net = Network::new(
            vec![
                rand_layer(&mut rng, 3, 4, 3, padding, Activation::Tanh),
                rand_layer(&mut rng, 4, 2, 3, padding, Activation::Linear),
            ],
            0,
        )
        .unwrap();
        let x = rand_tensor(&mut rng, 8, 3);
        let target = rand_tensor(&mut rng, 8, 2);
        let cache = net.forward_cached(&x).unwrap();
        let (_, g) = mse_loss(cache.output(), &target).unwrap();
        let grads = backward(&net, &cache, &g).unwrap();
        let h = 1e-5;
        let analytic: Vec<f64> = grads.slices().concat();
        let mut idx = 0;
        for group in 0..net.params().len() {
            for i in 0..net.params()[group].len() {
                let mut plus = net.clone();
                plus.params_mut()[group][i] += h;
                let mut minus = net.clone();
                minus.params_mut()[group][i] -= h;
                let fd = (loss_of(&plus, &x, &target) - loss_of(&minus, &x, &target)) / (2.0 * h);
                let a = analytic[idx];
                assert!((a - fd).abs() <= 1e-4 * a.abs().max(fd.abs()).max(1e-3), "{a} vs {fd}");
                idx += 1;
            }
        }
    }
}

#[test]
fn adam_examples() {
    let mut p = vec![0.5f64, -1.0];
    let mut state = AdamState::new(&[&p[..]], AdamConfig::default());
    adam_step(&mut [&mut p[..]], &[&[0.0, 0.0][..]], &mut state).unwrap();
    assert_eq!(p, vec![0.5, -1.0]);

    // Hand evaluation: m = 0.1, v = 0.001, m_hat = 1, v_hat = 1 -> step = lr / (1 + eps).
    let mut p = vec![0.0f64];
    let mut state = AdamState::new(&[&p[..]], AdamConfig::default());
    adam_step(&mut [&mut p[..]], &[&[1.0][..]], &mut state).unwrap();
    let want = -1e-3 / (1.0 + 1e-8);
    assert!((p[0] - want).abs() < 1e-18, "{}", p[0]);
    assert!((p[0] + 0.000_999_999).abs() < 1e-9);

    let mut q = vec![0.0f64];
    let mut state = AdamState::new(&[&q[..]], AdamConfig::default());
    adam_step(&mut [&mut q[..]], &[&[1000.0][..]], &mut state).unwrap();
    assert!(((q[0] - p[0]) / p[0]).abs() < 1e-3);

    let before = q.clone();
    let snapshot = state.clone();
    assert!(adam_step(&mut [&mut q[..]], &[&[f64::NAN][..]], &mut state).is_err());
    assert_eq!(q, before);
    assert_eq!(state, snapshot);

    let mut bad = AdamState::new(&[&q[..]], AdamConfig { lr: 0.0, ..AdamConfig::default() });
    assert!(adam_step(&mut [&mut q[..]], &[&[1.0][..]], &mut bad).is_err());
}

#[test]
fn adam_is_deterministic() {
    let run = || {
        let mut p = vec![0.1f64, 0.2, 0.3];
        let mut state = AdamState::new(&[&p[..]], AdamConfig::default());
        for k in 0..5 {
            let g = [0.1 * k as f64, -0.3, 1.0 / (k as f64 + 1.0)];
            adam_step(&mut [&mut p[..]], &[&g[..]], &mut state).unwrap();
        }
        (p, state)
    };
    assert_eq!(run(), run());
}

fn small_net(seed: u64) -> Network<f64> {
    Network::from_specs(
        &[
            LayerSpec { in_channels: 3, out_channels: 4, kernel: 3, padding: Padding::Causal, activation: Activation::Tanh },
            LayerSpec { in_channels: 4, out_channels: 2, kernel: 5, padding: Padding::Causal, activation: Activation::Linear },
        ],
        seed,
    )
    .unwrap()
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    let net = small_net(11);
    let mut state = AdamState::new(&net.params(), AdamConfig::default());
    state.step = 17;
    state.m[0][1] = 0.25;
    state.v[3][0] = 1e-9;
    checkpoint_save(&net, Some(&state), &path).unwrap();
    let ckpt = checkpoint_load::<f64>(&path).unwrap();
    assert_eq!(ckpt.network, net);
    assert_eq!(ckpt.optimizer.as_ref(), Some(&state));

    let mut rng = Rng::seed_from_u64(12);
    let x = rand_tensor(&mut rng, 10, 3);
    let a = network_forward(&x, &net).unwrap();
    let b = network_forward(&x, &ckpt.network).unwrap();
    assert!(a.as_slice().iter().zip(b.as_slice()).all(|(p, q)| p.to_bits() == q.to_bits()));

    let mut target = small_net(99);
    ckpt.restore_into(&mut target).unwrap();
    assert_eq!(target, net);
}

#[test]
fn checkpoint_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    let net = small_net(1);
    checkpoint_save(&net, None, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    let mut bad = bytes.clone();
    bad[0] = b'X';
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(checkpoint_load::<f64>(&path), Err(Error::Checkpoint(m)) if m.contains("magic")));

    let mut bad = bytes.clone();
    bad[4] = 9;
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(checkpoint_load::<f64>(&path), Err(Error::Checkpoint(m)) if m.contains("version")));

    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(checkpoint_load::<f64>(&path), Err(Error::Checkpoint(m)) if m.contains("truncated")));

    std::fs::write(&path, &bytes).unwrap();
    let ckpt = checkpoint_load::<f64>(&path).unwrap();
    let mut deeper = Network::from_specs(
        &[
            LayerSpec { in_channels: 3, out_channels: 4, kernel: 3, padding: Padding::Causal, activation: Activation::Tanh },
            LayerSpec { in_channels: 4, out_channels: 4, kernel: 3, padding: Padding::Causal, activation: Activation::Tanh },
            LayerSpec { in_channels: 4, out_channels: 2, kernel: 5, padding: Padding::Causal, activation: Activation::Linear },
        ],
        1,
    )
    .unwrap();
    assert!(matches!(ckpt.restore_into(&mut deeper), Err(Error::Checkpoint(m)) if m.contains("structural")));
}

#[test]
fn f32_checkpoint_is_exact() {
    let net32 = Network::<f32>::from_specs(&small_net(3).specs(), 3).unwrap();
    let (back, _) = decode_checkpoint::<f32>(&encode_checkpoint(&net32, None)).unwrap();
    assert_eq!(back.network, net32);
}

proptest! {
    #[test]
    fn causal_prefix_unchanged(seed in 0u64..10_000, t0 in 0usize..16) {
        let mut rng = Rng::seed_from_u64(seed);
        let net = Network::new(
            vec![
                rand_layer(&mut rng, 2, 5, 3, Padding::Causal, Activation::Tanh),
                rand_layer(&mut rng, 5, 5, 5, Padding::Causal, Activation::Tanh),
                rand_layer(&mut rng, 5, 2, 3, Padding::Causal, Activation::Linear),
            ],
            seed,
        ).unwrap();
        let x = rand_tensor(&mut rng, 16, 2);
        let mut y = x.clone();
        for t in t0..16 {
            for c in 0..2 {
                y.set(t, c, rng.random_range(-5.0..5.0));
            }
        }
        let (a, b) = (network_forward(&x, &net).unwrap(), network_forward(&y, &net).unwrap());
        for t in 0..t0 {
            for c in 0..2 {
                prop_assert_eq!(a.get(t, c).to_bits(), b.get(t, c).to_bits());
            }
        }
    }

    #[test]
    fn length_preserved(t in 1usize..20, k in prop_oneof![Just(1usize), Just(3), Just(5), Just(7)], causal in any::<bool>()) {
        let padding = if causal { Padding::Causal } else { Padding::Centered };
        let mut rng = Rng::seed_from_u64(t as u64);
        let l = rand_layer(&mut rng, 2, 3, k, padding, Activation::Linear);
        let y = conv_forward(&rand_tensor(&mut rng, t, 2), &l).unwrap();
        prop_assert_eq!(y.shape(), (t, 3));
    }
}
