use rand::Rng;
use semand::model::{
    load_checkpoint, save_checkpoint, train_step, ConvStage, Image, ModelConfig, ModelState, Network, TrainConfig,
};
use semand::objective::{LossConfig, ZeroRows};
use semand::rng::{rng_from, SeededRng};
use semand::Error;

fn micro() -> ModelConfig {
    ModelConfig {
        input_channels: 3,
        conv_stages: vec![ConvStage::new(4, 3, 2), ConvStage::new(5, 3, 1)],
        h_dim: 8,
        z_dim: 6,
        g_hidden: [8, 7],
        k_hidden: [5, 4],
        seed: 11,
    }
}

fn image(rng: &mut SeededRng, c: usize, size: usize) -> Image<f64> {
    Image::new(c, size, size, (0..c * size * size).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
}

fn batch(seed: u64, n: usize, size: usize) -> (Vec<Image<f64>>, Vec<Image<f64>>) {
    let mut rng = rng_from(seed);
    let a = (0..n).map(|_| image(&mut rng, 3, size)).collect();
    let b = (0..n).map(|_| image(&mut rng, 3, size)).collect();
    (a, b)
}

fn loss(net: &Network<f64>, xs: &[Image<f64>], ys: &[Image<f64>], cfg: &LossConfig) -> f64 {
    net.loss_and_grad(xs, ys, cfg, ZeroRows::Ignore).unwrap().0.l_total
}

#[test]
fn end_to_end_gradient_matches_finite_differences() {
    let cfg = LossConfig::default();
    let mut worst = 0.0f64;
    let mut probes = 0;
    for trial in 0..5u64 {
        let net = Network::<f64>::new(ModelConfig { seed: 100 + trial, ..micro() }).unwrap();
        let (xs, ys) = batch(trial, 2, 8);
        let (_, grads) = net.loss_and_grad(&xs, &ys, &cfg, ZeroRows::Ignore).unwrap();
        let mut rng = rng_from(1000 + trial);
        let conv_tensors = 2 * net.config.conv_stages.len();
        for p in 0..10 {
            // half the probes in the backbone, half anywhere
            let t = if p % 2 == 0 { rng.gen_range(0..conv_tensors) } else { rng.gen_range(0..net.params.len()) };
            let i = rng.gen_range(0..net.params[t].len());
            let h = 1e-6;
            let mut plus = net.clone();
            plus.params[t][i] += h;
            let mut minus = net.clone();
            minus.params[t][i] -= h;
            let fd = (loss(&plus, &xs, &ys, &cfg) - loss(&minus, &xs, &ys, &cfg)) / (2.0 * h);
            let an = grads[t][i];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-7);
            worst = worst.max(rel);
            probes += 1;
            assert!(rel < 1e-3, "tensor {t} index {i}: analytic {an} vs numeric {fd}");
        }
    }
    assert_eq!(probes, 50);
    eprintln!("worst relative error {worst:e}");
}

#[test]
fn single_step_reduces_loss_on_same_batch() {
    let cfg = TrainConfig::default();
    let mut decreases = 0;
    for trial in 0..10u64 {
        let mut state = ModelState::new(ModelConfig { seed: trial, ..micro() }).unwrap();
        let (xs, ys) = batch(50 + trial, 4, 16);
        let xs: Vec<Image<f32>> = xs.iter().map(Image::cast).collect();
        let ys: Vec<Image<f32>> = ys.iter().map(Image::cast).collect();
        let before = train_step(&mut state, &xs, &ys, &cfg, 1e-3).unwrap().l_total;
        let after = state.net.loss_and_grad(&xs, &ys, &cfg.loss, ZeroRows::Ignore).unwrap().0.l_total;
        if after < before {
            decreases += 1;
        }
    }
    assert!(decreases >= 9, "{decreases}/10 steps decreased the loss");
}

#[test]
fn zero_learning_rate_only_advances_step() {
    let mut state = ModelState::new(micro()).unwrap();
    let params = state.net.params.clone();
    let (xs, ys) = batch(3, 2, 8);
    let xs: Vec<Image<f32>> = xs.iter().map(Image::cast).collect();
    let ys: Vec<Image<f32>> = ys.iter().map(Image::cast).collect();
    train_step(&mut state, &xs, &ys, &TrainConfig::default(), 0.0).unwrap();
    assert_eq!(state.step, 1);
    assert_eq!(state.net.params, params);
}

#[test]
fn checkpoint_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.smck");
    let mut state = ModelState::new(micro()).unwrap();
    let (xs, ys) = batch(9, 2, 8);
    let xs: Vec<Image<f32>> = xs.iter().map(Image::cast).collect();
    let ys: Vec<Image<f32>> = ys.iter().map(Image::cast).collect();
    train_step(&mut state, &xs, &ys, &TrainConfig::default(), 1e-2).unwrap();
    save_checkpoint(&state, &path).unwrap();

    let loaded = load_checkpoint(&path, Some(&micro())).unwrap();
    assert_eq!(loaded, state);
    for x in &xs {
        assert_eq!(loaded.net.forward(x).unwrap(), state.net.forward(x).unwrap());
    }

    let other = ModelConfig { z_dim: 7, ..micro() };
    assert!(matches!(load_checkpoint(&path, Some(&other)), Err(Error::Checkpoint(_))));

    let bytes = std::fs::read(&path).unwrap();
    let cut = dir.path().join("cut.smck");
    std::fs::write(&cut, &bytes[..bytes.len() - 5]).unwrap();
    assert!(matches!(load_checkpoint(&cut, None), Err(Error::Checkpoint(_))));

    let mut bad = bytes.clone();
    bad[4] = 9;
    let bad_path = dir.path().join("bad.smck");
    std::fs::write(&bad_path, &bad).unwrap();
    assert!(matches!(load_checkpoint(&bad_path, None), Err(Error::Checkpoint(_))));
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let mut state = ModelState::new(micro()).unwrap();
        let mut losses = Vec::new();
        for step in 0..3u64 {
            let (xs, ys) = batch(step, 3, 8);
            let xs: Vec<Image<f32>> = xs.iter().map(Image::cast).collect();
            let ys: Vec<Image<f32>> = ys.iter().map(Image::cast).collect();
            losses.push(train_step(&mut state, &xs, &ys, &TrainConfig::default(), 1e-2).unwrap().l_total);
        }
        (losses, state)
    };
    let (a, sa) = run();
    let (b, sb) = run();
    assert_eq!(a, b);
    assert_eq!(sa, sb);
}
