use pronlearn::dsp::{MelConfig, MelSpectrogram};
use pronlearn::mel_siamese::{
    mel_siamese_detect, normalize_input, score_pair, train_conv_siamese, ConvSiameseConfig, ConvTwinNet, MelPair,
};
use pronlearn::nn::{grad_check, random_tensor, Graph, ParameterSet, DEFAULT_EPS};
use pronlearn::rng;
use rand::Rng;

fn mel_config(n_mels: usize) -> MelConfig {
    MelConfig {
        n_mels,
        ..MelConfig::default()
    }
}

fn mel(frames: Vec<Vec<f64>>) -> MelSpectrogram<f64> {
    let n = frames[0].len();
    MelSpectrogram::from_frames(frames, mel_config(n)).unwrap()
}

fn small_config() -> ConvSiameseConfig {
    ConvSiameseConfig {
        n_mels: 8,
        frames: 16,
        filters: 4,
        kernels: [3, 3, 3],
        hidden: 16,
        epochs: 100,
        batch_size: 8,
        learning_rate: 3e-3,
        seed: 1,
    }
}

/// A noisy rendering of one of `classes` fixed band patterns.
fn pattern_mel(class: usize, r: &mut impl Rng) -> MelSpectrogram<f64> {
    let floor = MelConfig::default().log_floor.ln();
    let frames = (0..16)
        .map(|t| {
            (0..8)
                .map(|m| {
                    let on = (m + t / 4 + class * 3) % 8 < 3;
                    floor + if on { 18.0 } else { 4.0 } + r.gen_range(-1.0..1.0)
                })
                .collect()
        })
        .collect();
    mel(frames)
}

fn toy_pairs(n: usize, seed: u64) -> Vec<MelPair> {
    let mut r = rng::rng(seed);
    (0..n)
        .map(|i| {
            let c = r.gen_range(0..4);
            let same = i % 2 == 0;
            let other = if same { c } else { (c + r.gen_range(1..4)) % 4 };
            MelPair {
                a: pattern_mel(c, &mut r),
                b: pattern_mel(other, &mut r),
                same,
            }
        })
        .collect()
}

#[test]
fn overfits_a_toy_task() {
    let pairs = toy_pairs(60, 3);
    let t = train_conv_siamese(&pairs, small_config()).unwrap();
    assert!(t.train_accuracy >= 0.95, "accuracy {}", t.train_accuracy);
    assert!(t.epoch_loss.last().unwrap() < &t.epoch_loss[0]);
    let held_out = toy_pairs(40, 4);
    let correct = held_out
        .iter()
        .filter(|p| (score_pair(&t.model, &p.a, &p.b).unwrap() > 0.5) == p.same)
        .count();
    assert!(correct >= 30, "held-out {correct}/40");
}

#[test]
fn twins_share_one_parameter_set() {
    let pairs = toy_pairs(16, 5);
    let config = ConvSiameseConfig {
        epochs: 2,
        ..small_config()
    };
    let model = train_conv_siamese(&pairs, config).unwrap().model;
    let names: Vec<String> = model.params().named_tensors().into_iter().map(|(n, _)| n).collect();
    let convs: Vec<&String> = names.iter().filter(|n| n.starts_with("conv")).collect();
    // Three conv layers, weight and bias each, and nothing duplicated per twin.
    assert_eq!(convs.len(), 6);
    let mut g = Graph::new();
    let x = model.input(&pairs[0].a).unwrap();
    let xa = g.input(x.clone());
    let xb = g.input(x);
    let fa = model.twin(&mut g, model.params(), xa).unwrap();
    let fb = model.twin(&mut g, model.params(), xb).unwrap();
    assert_eq!(g.value(fa).data(), g.value(fb).data());
    assert_eq!(g.value(fa).data(), model.twin_features(&pairs[0].a).unwrap().as_slice());
}

/// Zero-initialized biases can leave a ReLU exactly on its kink when a twin
/// is dead; the check needs a differentiable point.
fn jitter(ps: &mut ParameterSet, r: &mut impl Rng) {
    let ids: Vec<_> = ps.ids().collect();
    for id in ids {
        for x in ps.value_mut(id).data_mut() {
            *x += r.gen_range(-0.1..0.1);
        }
    }
}

#[test]
fn head_and_twins_pass_gradient_check() {
    let config = ConvSiameseConfig {
        n_mels: 8,
        frames: 8,
        filters: 2,
        hidden: 4,
        ..ConvSiameseConfig::default()
    };
    for seed in 0..5 {
        let net = ConvTwinNet::new(ConvSiameseConfig { seed, ..config.clone() }).unwrap();
        let mut ps = net.params().clone();
        let mut r = rng::rng(100 + seed);
        jitter(&mut ps, &mut r);
        let a = random_tensor(&[1, 8, 8], &mut r);
        let b = random_tensor(&[1, 8, 8], &mut r);
        let err = grad_check(&mut ps, &[a, b], DEFAULT_EPS, |g, ps, v| {
            let z = net.logit(g, ps, v[0], v[1])?;
            g.bce_with_logits(z, &[1.0])
        })
        .unwrap();
        assert!(err < 1e-3, "seed {seed}: {err:e}");
    }
}

#[test]
fn inputs_are_centered_crops_or_pads() {
    let floor = MelConfig::default().log_floor.ln();
    let long = mel((0..12).map(|t| vec![floor + t as f64; 8]).collect());
    let x = normalize_input(&long, 8, 8).unwrap();
    assert_eq!(x.shape(), &[1, 8, 8]);
    // Frames 2..10 survive, each shifted to the floor and scaled by 1/10.
    for t in 0..8 {
        assert!((x.data()[t] - (t + 2) as f64 / 10.0).abs() < 1e-12);
    }
    let short = mel((0..4).map(|t| vec![floor + 10.0 * (t + 1) as f64; 8]).collect());
    let y = normalize_input(&short, 8, 8).unwrap();
    assert_eq!(&y.data()[..8], &[0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 0.0, 0.0]);
    assert_eq!(normalize_input(&short, 8, 8).unwrap(), y);
    assert!(normalize_input(&short, 9, 8).is_err());
}

#[test]
fn checkpoint_round_trip_scores_identically() {
    let pairs = toy_pairs(8, 6);
    let model = train_conv_siamese(
        &pairs,
        ConvSiameseConfig {
            epochs: 1,
            ..small_config()
        },
    )
    .unwrap()
    .model;
    let back = ConvTwinNet::from_checkpoint(&model.to_checkpoint()).unwrap();
    for p in &pairs {
        assert_eq!(score_pair(&model, &p.a, &p.b).unwrap(), score_pair(&back, &p.a, &p.b).unwrap());
    }
    let v = mel_siamese_detect(&model, &pairs[0].a, &pairs[0].b, 0.5).unwrap();
    assert_eq!(v.score, 1.0 - score_pair(&model, &pairs[0].a, &pairs[0].b).unwrap());
}

#[test]
fn training_needs_both_classes() {
    let mut pairs = toy_pairs(6, 7);
    for p in &mut pairs {
        p.same = true;
    }
    assert!(train_conv_siamese(&pairs, small_config()).is_err());
    assert!(train_conv_siamese(&[], small_config()).is_err());
}
