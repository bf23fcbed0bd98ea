use std::ops::ControlFlow;

use ovr_core::model::{FtJnf, ModelConfig, Variant, WeightSet};
use ovr_core::synth::SyntheticTalker;
use ovr_core::train::{
    example_gradient, fine_tune, load_checkpoint, mean_loss, sample_snr_db, train, Example, LossConfig, TrainConfig,
    Trainer, SNR_RANGE_DB,
};
use ovr_core::{Stft, StftConfig, Waveform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(len: usize, seed: u64, amp: f64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new((0..len).map(|_| amp * rng.gen_range(-1.0..1.0)).collect(), 16_000)
}

/// Own-voice pair from a synthetic talker with white noise added at a fixed level.
fn noisy_example(secs: f64, seed: u64, noise_amp: f64) -> Example {
    let stft = Stft::new(StftConfig::default());
    let (outer, inear, _) = SyntheticTalker::random("t", seed).recording(secs, &stft, seed + 1).unwrap();
    let n = outer.len();
    let add = |w: &Waveform, s: u64| {
        let v = noise(n, s, noise_amp);
        Waveform::new(w.samples.iter().zip(&v.samples).map(|(a, b)| a + b).collect(), 16_000)
    };
    Example {
        noisy: vec![add(&outer, seed + 2), add(&inear, seed + 3)],
        target: outer,
    }
}

fn xs(seed: u64) -> FtJnf {
    let cfg = ModelConfig::from_variant(Variant::XS, 2, 257).unwrap();
    FtJnf::new(cfg, WeightSet::init(&cfg, seed)).unwrap()
}

#[test]
fn silent_inear_channel_gives_zero_gradient_to_its_mask_rows() {
    let stft = Stft::new(StftConfig::new(16_000, 16).unwrap());
    let cfg = ModelConfig::new(3, 2, 2, 9).unwrap();
    let model = FtJnf::new(cfg, WeightSet::init(&cfg, 4)).unwrap();
    let ex = Example {
        noisy: vec![noise(64, 1, 0.5), Waveform::zeros(64, 16_000)],
        target: noise(64, 2, 0.5),
    };
    let (loss, g) = example_gradient(&model, &stft, &ex, &LossConfig::default()).unwrap();
    assert!(loss > 0.0);
    // dense rows 2 and 3 produce the in-ear mask's real and imaginary parts
    for row in 2..4 {
        assert!(g.dense.w.row(row).iter().all(|&v| v == 0.0));
        assert_eq!(g.dense.b[row], 0.0);
    }
    assert!(g.dense.w.row(0).iter().any(|&v| v != 0.0));
}

#[test]
fn zero_epochs_leave_weights_unchanged() {
    let stft = Stft::new(StftConfig::default());
    let model = xs(1);
    let before = model.weights().clone();
    let config = TrainConfig {
        max_epochs: 0,
        ..TrainConfig::fine_tuning(0)
    };
    let (tuned, history) = fine_tune(model, &stft, &[noisy_example(0.5, 1, 0.1)], &[], config, None).unwrap();
    assert!(history.is_empty());
    assert_eq!(tuned.weights(), &before);
}

#[test]
fn loss_decreases_over_twenty_epochs() {
    let stft = Stft::new(StftConfig::default());
    let set = [noisy_example(0.5, 10, 0.1), noisy_example(0.5, 20, 0.1)];
    let model = xs(2);
    let initial = mean_loss(&model, &stft, &set, &LossConfig::default()).unwrap();
    let config = TrainConfig {
        lr: 1e-3,
        batch_size: 2,
        max_epochs: 20,
        ..TrainConfig::training(3)
    };
    let (_, history) = train(model, &stft, &set, &[], config, None).unwrap();
    assert_eq!(history.len(), 20);
    let last = history.last().unwrap();
    assert!(last.val_loss < initial, "{} vs {initial}", last.val_loss);
}

#[test]
fn training_is_bit_identical_per_seed_and_resumable() {
    let stft = Stft::new(StftConfig::default());
    let set: Vec<_> = (0..3).map(|i| noisy_example(0.25, 30 + i, 0.1)).collect();
    let config = TrainConfig {
        lr: 1e-3,
        batch_size: 2,
        max_epochs: 2,
        ..TrainConfig::training(5)
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        train(xs(3), &stft, &set, &[], config, Some(d.path())).unwrap();
    }
    for name in ["epoch_002.ovrw", "epoch_002.adam.ovrw", "epoch_002.json"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }

    // one epoch, reload, one more epoch == two epochs straight
    let ckpt = load_checkpoint(&dirs[0].path().join("epoch_001.json")).unwrap();
    let mut t = Trainer::resume(xs(3), &stft, config, &ckpt).unwrap();
    t.run(&set, &[], |_, _| Ok(ControlFlow::Continue(()))).unwrap();
    let straight = load_checkpoint(&dirs[0].path().join("epoch_002.json")).unwrap();
    // checkpoints store f32 weights, so the resumed run starts from rounded values
    let diff = t
        .model()
        .weights()
        .slices()
        .iter()
        .zip(straight.weights.slices().iter())
        .flat_map(|((_, a), (_, b))| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
        .fold(0.0f64, f64::max);
    assert!(diff < 1e-5, "{diff}");
    assert_eq!(t.steps(), straight.meta.steps);
}

#[test]
fn snr_draws_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 10_000;
    let bins = 7;
    let width = (SNR_RANGE_DB.1 - SNR_RANGE_DB.0) / bins as f64;
    let mut counts = vec![0usize; bins];
    for _ in 0..n {
        let s = sample_snr_db(&mut rng);
        assert!((SNR_RANGE_DB.0..=SNR_RANGE_DB.1).contains(&s));
        counts[(((s - SNR_RANGE_DB.0) / width) as usize).min(bins - 1)] += 1;
    }
    let p = 1.0 / bins as f64;
    let mean = n as f64 * p;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - mean).abs() < 3.0 * sigma, "{c} vs {mean} ± {}", 3.0 * sigma);
    }
}

#[test]
fn single_clean_example_is_fitted_within_two_hundred_steps() {
    let stft = Stft::new(StftConfig::default());
    let ex = noisy_example(1.0, 40, 0.0);
    let model = xs(6);
    let initial = mean_loss(&model, &stft, std::slice::from_ref(&ex), &LossConfig::default()).unwrap();
    let config = TrainConfig {
        lr: 1e-3,
        batch_size: 1,
        max_epochs: 200,
        max_steps: Some(200),
        halve_after: 200,
        stop_after: 200,
        ..TrainConfig::training(7)
    };
    let mut trainer = Trainer::new(model, &stft, config).unwrap();
    let history = trainer
        .run(std::slice::from_ref(&ex), &[], |_, rec| {
            Ok(if rec.val_loss < 0.1 * initial {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            })
        })
        .unwrap();
    let last = history.last().unwrap();
    assert!(
        last.val_loss < 0.1 * initial,
        "loss {} of initial {initial} after {} steps",
        last.val_loss,
        last.steps
    );
    assert!(last.steps <= 200);
}
