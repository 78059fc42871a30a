//! Training: Adam on the squared-error loss with early stopping.
//!
//! One run trains one network (magnitude or start time) on pre-scaled
//! samples. Each epoch shuffles the training set with a seeded permutation,
//! walks it in mini-batches — batch members' forward/backward passes run
//! through [`exec::map`], so they may execute in parallel, with the gradient
//! reduction done in input order — and applies one Adam update per batch.
//! Validation loss is measured in eval mode after every epoch; the returned
//! parameters are the snapshot with the best validation loss.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::exec;
use crate::features::{FeatureWindow, Sample, ScalerSet, TargetKind};
use crate::neural::{
    backward, forward_eval, forward_train, init_params, write_checkpoint, CellKind, Checkpoint,
    ModelParams, NetworkSpec,
};
use crate::rng::{stream_rng, Stream};

/// Highest value a start-time prediction may take after clamping. One above
/// [`MAX_START_PERIOD`]: the clamp bounds predictions by the label range's
/// documented ceiling rather than the tighter realizable one, so it never
/// rejects a label-producible value.
pub const START_CLAMP_MAX: usize = 252;

/// Everything one training run needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub target: TargetKind,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub spec: NetworkSpec,
}

impl TrainConfig {
    /// Defaults for one target: the published hyperparameters (layer sizes,
    /// dropout schedule, learning rate) with this crate's training-procedure
    /// defaults (batch 32, 200 epochs, patience 20, clip 5.0, standard Adam
    /// constants).
    pub fn for_target(
        target: TargetKind,
        kind: CellKind,
        input_size: usize,
        seed: u64,
    ) -> Result<TrainConfig> {
        let (lr, hidden, dropout): (f64, &[usize], &[f64]) = match target {
            TargetKind::Magnitude => (3e-3, &[512, 1024, 256], &[0.15, 0.35, 0.40]),
            TargetKind::StartTime => (2.831e-5, &[128, 256, 32], &[0.20, 0.10, 0.10]),
        };
        Ok(TrainConfig {
            target,
            learning_rate: lr,
            max_epochs: 200,
            batch_size: 32,
            patience: 20,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: Some(5.0),
            seed,
            spec: NetworkSpec::stacked(kind, input_size, hidden, dropout)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.patience < 1 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config(format!("{name} {beta} outside [0, 1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config("clip norm must be > 0 when set".into()));
            }
        }
        self.spec.validate()
    }
}

/// Adam accumulators; shapes mirror the parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> AdamState {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// Sum of squared differences. The per-epoch histories report this divided
/// by the sample count so runs of different sizes are comparable.
pub fn loss_sse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput("loss over zero samples".into()));
    }
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum())
}

/// One Adam update: t ← t+1; m ← β₁m+(1−β₁)g; v ← β₂v+(1−β₂)g²;
/// θ ← θ − lr·m̂/(√v̂+ε) with bias-corrected m̂, v̂.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) -> Result<()> {
    if !grads.all_finite() {
        return Err(Error::Numerical(
            "non-finite gradient reached the optimizer".into(),
        ));
    }
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    let g_slices = grads.slices();
    let mut m_slices = state.m.slices_mut();
    let mut v_slices = state.v.slices_mut();
    for (si, p_slice) in params.slices_mut().into_iter().enumerate() {
        let g = g_slices[si];
        let m = &mut m_slices[si];
        let v = &mut v_slices[si];
        for k in 0..p_slice.len() {
            m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
            v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            p_slice[k] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

/// One epoch's losses. Train loss is the epoch mean of per-sample squared
/// errors measured in training mode (dropout active); validation loss is the
/// eval-mode mean.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_ms: u64,
}

/// A finished run: best-validation parameters plus full context.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub scalers: ScalerSet,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
    /// Epoch (1-based) whose snapshot `params` holds.
    pub best_epoch: usize,
}

impl TrainedModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            target: self.config.target,
            seed: self.config.seed,
            scalers: self.scalers.clone(),
            params: self.params.clone(),
        }
    }
}

/// Early-stopping bookkeeping: strict improvement resets the counter; after
/// `patience` consecutive non-improving epochs training stops with the best
/// snapshot.
struct EarlyStop {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stalled: usize,
}

enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStop {
    fn new(patience: usize) -> EarlyStop {
        EarlyStop {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stalled: 0,
        }
    }

    fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stalled = 0;
            StopDecision::Improved
        } else {
            self.stalled += 1;
            if self.stalled >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }
}

/// Train a network. Deterministic for fixed (config, partitions): every
/// random draw comes from a named substream of `config.seed`, keyed by epoch
/// and sample index, so scheduling cannot affect the result.
pub fn train(config: &TrainConfig, train: &[Sample], val: &[Sample], scalers: &ScalerSet) -> Result<TrainedModel> {
    train_with_rescue(config, train, val, scalers, None)
}

/// [`train`], with a directory for the emergency checkpoint written when a
/// run diverges (so the last good snapshot is not lost).
pub fn train_with_rescue(
    config: &TrainConfig,
    train: &[Sample],
    val: &[Sample],
    scalers: &ScalerSet,
    rescue_dir: Option<&Path>,
) -> Result<TrainedModel> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyInput(format!(
            "training needs nonempty partitions ({} train, {} val samples)",
            train.len(),
            val.len()
        )));
    }
    check_samples(config, train, "train")?;
    check_samples(config, val, "validation")?;

    let mut params = init_params(&config.spec, config.seed)?;
    let mut adam = AdamState::new(&params);
    let mut stopper = EarlyStop::new(config.patience);
    let mut best_params = params.clone();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let mut shuffle_rng = stream_rng(config.seed, Stream::Shuffle, epoch as u64, 0);
        order.shuffle(&mut shuffle_rng);

        let mut sq_error_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let batch_loss = run_batch(config, train, batch, epoch, &mut params, &mut adam)
                .map_err(|e| diverged(e, epoch, &best_params, config, scalers, rescue_dir))?;
            sq_error_sum += batch_loss;
        }
        let train_loss = sq_error_sum / train.len() as f64;
        let val_loss = mean_eval_loss(&params, val, config.target)
            .map_err(|e| diverged(e, epoch, &best_params, config, scalers, rescue_dir))?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(diverged(
                Error::Numerical(format!(
                    "non-finite epoch loss (train {train_loss}, val {val_loss})"
                )),
                epoch,
                &best_params,
                config,
                scalers,
                rescue_dir,
            ));
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            wall_ms: started.elapsed().as_millis() as u64,
        });
        log::debug!("epoch {epoch}: train {train_loss:.6e}, val {val_loss:.6e}");

        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => best_params = params.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }

    Ok(TrainedModel {
        params: best_params,
        scalers: scalers.clone(),
        config: config.clone(),
        history,
        best_epoch: stopper.best_epoch,
    })
}

fn check_samples(config: &TrainConfig, samples: &[Sample], which: &str) -> Result<()> {
    for s in samples {
        if s.window.x.ncols() != config.spec.input_size {
            return Err(Error::Shape(format!(
                "{which} sample for {} has {} feature columns, network expects {}",
                s.date,
                s.window.x.ncols(),
                config.spec.input_size
            )));
        }
    }
    Ok(())
}

/// Forward/backward over one mini-batch and a single Adam update. Returns
/// the batch's summed squared error (training mode). Gradients are averaged
/// over the batch; members run through [`exec::map`] and are reduced in
/// input order.
fn run_batch(
    config: &TrainConfig,
    train: &[Sample],
    batch: &[usize],
    epoch: usize,
    params: &mut ModelParams,
    adam: &mut AdamState,
) -> Result<f64> {
    let shared: &ModelParams = params;
    let per_member: Vec<Result<(f64, ModelParams)>> = exec::map(batch, |&idx| {
        let sample = &train[idx];
        let mut rng = stream_rng(config.seed, Stream::Dropout, epoch as u64, idx as u64);
        let (pred, tape) = forward_train(shared, &sample.window.x, &mut rng)?;
        let target = config.target.scaled_target(sample);
        let err = pred - target;
        let grad = backward(shared, &tape, 2.0 * err)?;
        Ok((err * err, grad))
    });

    let mut sq_error_sum = 0.0;
    let mut grad_mean = params.zeros_like();
    let weight = 1.0 / batch.len() as f64;
    for member in per_member {
        let (sq, grad) = member?;
        sq_error_sum += sq;
        grad_mean.add_scaled(&grad, weight);
    }

    if let Some(clip) = config.clip_norm {
        let norm = grad_mean.l2_norm();
        if norm > clip {
            grad_mean.scale(clip / norm);
        }
    }
    adam_step(
        params,
        &grad_mean,
        adam,
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
    )?;
    Ok(sq_error_sum)
}

fn mean_eval_loss(params: &ModelParams, samples: &[Sample], target: TargetKind) -> Result<f64> {
    let losses: Vec<Result<f64>> = exec::map(samples, |s| {
        let pred = forward_eval(params, &s.window.x)?;
        let err = pred - target.scaled_target(s);
        Ok(err * err)
    });
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum / samples.len() as f64)
}

/// Wrap a mid-training failure as a divergence error, saving the best
/// snapshot so far if a rescue directory was given.
fn diverged(
    cause: Error,
    epoch: usize,
    best: &ModelParams,
    config: &TrainConfig,
    scalers: &ScalerSet,
    rescue_dir: Option<&Path>,
) -> Error {
    let saved = rescue_dir.and_then(|dir| {
        let path = dir.join(format!("{}-rescue.ckpt", config.target.name()));
        let ckpt = Checkpoint {
            target: config.target,
            seed: config.seed,
            scalers: scalers.clone(),
            params: best.clone(),
        };
        match write_checkpoint(&path, &ckpt) {
            Ok(()) => Some(path),
            Err(e) => {
                log::warn!("could not save rescue checkpoint: {e}");
                None
            }
        }
    });
    let where_saved = match &saved {
        Some(p) => format!("last good checkpoint: {}", p.display()),
        None => "no rescue checkpoint saved".to_string(),
    };
    Error::Numerical(format!(
        "training diverged at epoch {epoch}: {cause}; {where_saved}"
    ))
}

/// Write the per-epoch history as a delimited file.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_loss,wall_ms\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.epoch, r.train_loss, r.val_loss, r.wall_ms
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a history file back (used by tests and the CLI's report assembly).
pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("epoch,train_loss,val_loss,wall_ms") {
        return Err(Error::Validation(format!(
            "{}: not a history file",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (no, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Validation(format!(
                "{} line {}: expected 4 fields",
                path.display(),
                no + 2
            )));
        }
        let bad = |what: &str| {
            Error::Validation(format!("{} line {}: bad {what}", path.display(), no + 2))
        };
        out.push(EpochRecord {
            epoch: parts[0].parse().map_err(|_| bad("epoch"))?,
            train_loss: parts[1].parse().map_err(|_| bad("train loss"))?,
            val_loss: parts[2].parse().map_err(|_| bad("val loss"))?,
            wall_ms: parts[3].parse().map_err(|_| bad("wall ms"))?,
        });
    }
    Ok(out)
}

fn check_target(model: &TrainedModel, expect: TargetKind) -> Result<()> {
    if model.config.target != expect {
        return Err(Error::Config(format!(
            "model was trained for {}, asked to predict {}",
            model.config.target.name(),
            expect.name()
        )));
    }
    Ok(())
}

/// Forecast the primary ramp's magnitude, in gigawatts: eval-mode forward
/// pass plus inverse target scaling.
pub fn predict_magnitude(model: &TrainedModel, window: &FeatureWindow) -> Result<f64> {
    check_target(model, TargetKind::Magnitude)?;
    let scaled = forward_eval(&model.params, &window.x)?;
    let gw = model.scalers.magnitude_gw.invert(scaled);
    if !gw.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite magnitude forecast for {}",
            window.date
        )));
    }
    Ok(gw)
}

/// Round half-up and clamp into the feasible start-period range. Returns the
/// clamped period and whether clamping changed the rounded value.
pub fn round_clamp_start(raw: f64) -> (usize, bool) {
    let rounded = (raw + 0.5).floor();
    if rounded < 0.0 {
        (0, true)
    } else if rounded > START_CLAMP_MAX as f64 {
        (START_CLAMP_MAX, true)
    } else {
        (rounded as usize, false)
    }
}

/// Forecast the primary ramp's start period: eval-mode forward pass, inverse
/// target scaling, round half-up, clamp into `[0, 252]`.
pub fn predict_start(model: &TrainedModel, window: &FeatureWindow) -> Result<usize> {
    predict_start_detailed(model, window).map(|d| d.period)
}

/// A start-time forecast with its unrounded value and clamp flag (reports
/// count clamped predictions).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StartForecast {
    pub period: usize,
    pub raw: f64,
    pub clamped: bool,
}

pub fn predict_start_detailed(model: &TrainedModel, window: &FeatureWindow) -> Result<StartForecast> {
    check_target(model, TargetKind::StartTime)?;
    let scaled = forward_eval(&model.params, &window.x)?;
    let raw = model.scalers.start_period.invert(scaled);
    if !raw.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite start-time forecast for {}",
            window.date
        )));
    }
    let (period, clamped) = round_clamp_start(raw);
    Ok(StartForecast {
        period,
        raw,
        clamped,
    })
}
