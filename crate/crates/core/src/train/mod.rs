//! Training and fine-tuning of the mask estimator.

mod checkpoint;
mod loss;
mod optim;

use std::ops::ControlFlow;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OvrError, Result};
use crate::mixer::{mix_at_snr, MixSpec, NoiseCapture, NoiseMode};
use crate::model::{apply_masks, FtJnf, WeightSet};
use crate::stft::{Spectrogram, Stft, Waveform};

pub use checkpoint::{checkpoint_paths, load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use loss::{loss_combined_l1, loss_gradient, LossConfig};
pub use optim::{adam_step, schedule_update, AdamConfig, AdamState, ScheduleAction, ScheduleState};

pub const TRAIN_LR: f64 = 1e-4;
pub const FINE_TUNE_LR: f64 = 1e-5;
pub const SNR_RANGE_DB: (f64, f64) = (-10.0, 25.0);

/// Noisy microphone signals (model channel order) and the clean outer target.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub noisy: Vec<Waveform>,
    pub target: Waveform,
}

impl Example {
    pub fn validate(&self) -> Result<()> {
        let n = self.target.len();
        if self.noisy.is_empty() || self.noisy.iter().any(|w| w.len() != n) {
            return Err(OvrError::Shape("example channels and target differ in length".into()));
        }
        Ok(())
    }
}

/// Draws an SNR uniformly from the training range.
pub fn sample_snr_db<R: Rng>(rng: &mut R) -> f64 {
    rng.gen_range(SNR_RANGE_DB.0..=SNR_RANGE_DB.1)
}

/// Mixes one own-voice pair with noise into a two-channel example. The
/// target is the clean outer signal.
pub fn make_example(
    own_outer: &Waveform,
    own_inear: &Waveform,
    noise: &NoiseCapture,
    snr_db: f64,
    seed: u64,
) -> Result<Example> {
    let spec = MixSpec {
        snr_db,
        mode: NoiseMode::Point(0),
        seed,
    };
    let mix = mix_at_snr(own_outer, own_inear, noise, &spec)?;
    Ok(Example {
        noisy: vec![mix.outer, mix.inear],
        target: own_outer.clone(),
    })
}

/// Picks the channels the model consumes: both for two-mic models, the
/// in-ear one for single-mic models.
fn model_inputs<'a>(model: &FtJnf, noisy: &'a [Waveform]) -> Result<Vec<&'a Waveform>> {
    match (model.config().num_mics, noisy.len()) {
        (m, n) if m == n => Ok(noisy.iter().collect()),
        (1, 2) => Ok(vec![&noisy[1]]),
        (m, n) => Err(OvrError::Shape(format!("model takes {m} channels, example has {n}"))),
    }
}

/// Enhanced waveform for one example.
pub fn enhance(model: &FtJnf, stft: &Stft, noisy: &[Waveform]) -> Result<Waveform> {
    model.infer_utterance(&model_inputs(model, noisy)?, stft)
}

pub fn example_loss(model: &FtJnf, stft: &Stft, ex: &Example, cfg: &LossConfig) -> Result<f64> {
    ex.validate()?;
    let est = enhance(model, stft, &ex.noisy)?;
    loss_combined_l1(&est.samples, &ex.target.samples, cfg, stft)
}

/// Loss and weight gradients for one example, backpropagated through
/// re-analysis, synthesis, masking and the network.
pub fn example_gradient(model: &FtJnf, stft: &Stft, ex: &Example, cfg: &LossConfig) -> Result<(f64, WeightSet)> {
    ex.validate()?;
    let inputs = model_inputs(model, &ex.noisy)?;
    let specs = inputs
        .iter()
        .map(|w| stft.analyze(w))
        .collect::<Result<Vec<Spectrogram>>>()?;
    let refs: Vec<&Spectrogram> = specs.iter().collect();
    let (masks, cache) = model.forward_cached(&refs)?;
    let estimate = stft.synthesize(&apply_masks(&refs, &masks)?)?;
    let (loss, d_est) = loss_gradient(&estimate.samples, &ex.target.samples, cfg, stft)?;
    let d_spec = stft.synthesize_adjoint(&d_est, specs[0].num_frames());
    // S = sum_m M_m Y_m, so dL/dM_m = dL/dS * conj(Y_m) in the Re + i Im convention
    let d_masks: Vec<_> = specs
        .iter()
        .map(|y| {
            let mut d = d_spec.clone();
            d.zip_mut_with(y.bins(), |g, yv| *g *= yv.conj());
            d
        })
        .collect();
    let grads = model.backward(&cache, &d_masks);
    if !grads.is_finite() {
        return Err(OvrError::NonFinite("gradient"));
    }
    Ok((loss, grads))
}

/// Mean loss and mean gradient over a batch, accumulated in batch order.
pub fn batch_gradient(model: &FtJnf, stft: &Stft, batch: &[&Example], cfg: &LossConfig) -> Result<(f64, WeightSet)> {
    if batch.is_empty() {
        return Err(OvrError::Empty("empty batch".into()));
    }
    let mut total = WeightSet::zeros(model.config());
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for ex in batch {
        let (l, g) = example_gradient(model, stft, ex, cfg)?;
        loss += l * scale;
        total.add_scaled(scale, &g);
    }
    Ok((loss, total))
}

pub fn mean_loss(model: &FtJnf, stft: &Stft, examples: &[Example], cfg: &LossConfig) -> Result<f64> {
    if examples.is_empty() {
        return Err(OvrError::Empty("no examples to evaluate".into()));
    }
    let mut sum = 0.0;
    for ex in examples {
        sum += example_loss(model, stft, ex, cfg)?;
    }
    Ok(sum / examples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stops after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub loss: LossConfig,
    pub halve_after: u32,
    pub stop_after: u32,
}

impl TrainConfig {
    pub fn training(seed: u64) -> Self {
        TrainConfig {
            lr: TRAIN_LR,
            batch_size: 4,
            max_epochs: 100,
            max_steps: None,
            seed,
            loss: LossConfig::default(),
            halve_after: 3,
            stop_after: 6,
        }
    }

    pub fn fine_tuning(seed: u64) -> Self {
        TrainConfig {
            lr: FINE_TUNE_LR,
            ..Self::training(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.lr.is_finite() && self.lr > 0.0) || self.batch_size == 0 {
            return Err(OvrError::Config("learning rate must be positive and batch size non-zero".into()));
        }
        if self.halve_after == 0 || self.stop_after == 0 {
            return Err(OvrError::Config("schedule patience must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate after the schedule update.
    pub lr: f64,
    pub action: ScheduleAction,
}

/// Mini-batch ADAM training with validation after every epoch.
pub struct Trainer<'a> {
    model: FtJnf,
    stft: &'a Stft,
    config: TrainConfig,
    adam: AdamState,
    schedule: ScheduleState,
    rng: ChaCha8Rng,
    steps: usize,
    epochs: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(model: FtJnf, stft: &'a Stft, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(AdamConfig::with_lr(config.lr), model.weights());
        let schedule = ScheduleState {
            halve_after: config.halve_after,
            stop_after: config.stop_after,
            ..ScheduleState::default()
        };
        Ok(Trainer {
            model,
            stft,
            config,
            adam,
            schedule,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            steps: 0,
            epochs: 0,
        })
    }

    /// Continues from saved optimizer and schedule state.
    pub fn resume(model: FtJnf, stft: &'a Stft, config: TrainConfig, ckpt: &Checkpoint) -> Result<Self> {
        let mut t = Self::new(model, stft, config)?;
        ckpt.weights.validate(t.model.config())?;
        t.model = FtJnf::new(*t.model.config(), ckpt.weights.clone())?;
        t.adam = ckpt.adam.clone();
        t.schedule = ckpt.meta.schedule;
        t.steps = ckpt.meta.steps;
        t.epochs = ckpt.meta.epoch;
        t.rng = ChaCha8Rng::seed_from_u64(config.seed);
        // replay the shuffles of finished epochs so the data order continues
        for _ in 0..t.epochs {
            let mut order: Vec<usize> = (0..ckpt.meta.train_size).collect();
            order.shuffle(&mut t.rng);
        }
        Ok(t)
    }

    pub fn model(&self) -> &FtJnf {
        &self.model
    }

    pub fn into_model(self) -> FtJnf {
        self.model
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn lr(&self) -> f64 {
        self.adam.config.lr
    }

    pub fn step(&mut self, batch: &[&Example]) -> Result<f64> {
        let (loss, grads) = batch_gradient(&self.model, self.stft, batch, &self.config.loss)?;
        adam_step(self.model.weights_mut(), &grads, &mut self.adam);
        self.steps += 1;
        Ok(loss)
    }

    pub fn checkpoint(&self, record: &EpochRecord, train_size: usize) -> Checkpoint {
        Checkpoint {
            weights: self.model.weights().clone(),
            adam: self.adam.clone(),
            meta: CheckpointMeta {
                epoch: record.epoch,
                steps: self.steps,
                seed: self.config.seed,
                train_size,
                train_loss: record.train_loss,
                val_loss: record.val_loss,
                schedule: self.schedule,
                config: self.config,
            },
        }
    }

    /// Runs epochs until the schedule stops, `max_epochs` or `max_steps`.
    /// `on_epoch` sees every finished epoch, e.g. to write a checkpoint, and
    /// can end the run early with `ControlFlow::Break`.
    pub fn run<F>(&mut self, train: &[Example], val: &[Example], mut on_epoch: F) -> Result<Vec<EpochRecord>>
    where
        F: FnMut(&Trainer, &EpochRecord) -> Result<ControlFlow<()>>,
    {
        if train.is_empty() {
            return Err(OvrError::Empty("empty training set".into()));
        }
        let mut history = Vec::new();
        while self.epochs < self.config.max_epochs {
            if self.config.max_steps.is_some_and(|m| self.steps >= m) {
                break;
            }
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut self.rng);
            let mut loss_sum = 0.0;
            let mut batches = 0;
            for chunk in order.chunks(self.config.batch_size) {
                if self.config.max_steps.is_some_and(|m| self.steps >= m) {
                    break;
                }
                let batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
                loss_sum += self.step(&batch)?;
                batches += 1;
            }
            self.epochs += 1;
            let val_loss = mean_loss(&self.model, self.stft, if val.is_empty() { train } else { val }, &self.config.loss)?;
            let action = schedule_update(&mut self.schedule, val_loss, &mut self.adam.config.lr);
            let record = EpochRecord {
                epoch: self.epochs,
                steps: self.steps,
                train_loss: loss_sum / batches.max(1) as f64,
                val_loss,
                lr: self.adam.config.lr,
                action,
            };
            log::info!(
                "epoch {} steps {} train {:.5} val {:.5} lr {:.2e} {:?}",
                record.epoch,
                record.steps,
                record.train_loss,
                record.val_loss,
                record.lr,
                record.action
            );
            let flow = on_epoch(self, &record)?;
            history.push(record);
            if action == ScheduleAction::Stop || flow.is_break() {
                break;
            }
        }
        Ok(history)
    }
}

/// Trains with per-epoch checkpoints written to `checkpoint_dir` when given.
pub fn train(
    model: FtJnf,
    stft: &Stft,
    train_set: &[Example],
    val_set: &[Example],
    config: TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<(FtJnf, Vec<EpochRecord>)> {
    let mut trainer = Trainer::new(model, stft, config)?;
    let history = trainer.run(train_set, val_set, |t, rec| {
        if let Some(dir) = checkpoint_dir {
            save_checkpoint(dir, &t.checkpoint(rec, train_set.len()))?;
        }
        Ok(ControlFlow::Continue(()))
    })?;
    Ok((trainer.into_model(), history))
}

/// [`train`] starting from pretrained weights; `config.lr` is normally
/// [`FINE_TUNE_LR`].
pub fn fine_tune(
    pretrained: FtJnf,
    stft: &Stft,
    recorded: &[Example],
    val_set: &[Example],
    config: TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<(FtJnf, Vec<EpochRecord>)> {
    train(pretrained, stft, recorded, val_set, config, checkpoint_dir)
}
