use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use crate::circmath::Angle;
use crate::error::{Error, Result};
use crate::heads::{HeadKind, KappaSetting, PredictiveModel};
use crate::neuralnet::{loss_and_gradients, Activation, AdamConfig, AdamState, LayerSpec};
use crate::rng::{derive_seed, rng_from_seed};
use crate::vonmises::select_fixed_kappa;

pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_MAX_EPOCHS: usize = 500;
pub const DEFAULT_PATIENCE: usize = 20;

// seed streams
const INIT: u64 = 0;
const SHUFFLE: u64 = 1;
const STEP_NOISE: u64 = 2;
const VAL_NOISE: u64 = 3;
const TRAIN_NOISE: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub head: HeadKind,
    pub hidden: Vec<LayerSpec>,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Two tanh layers of 64 units and the default schedule.
    ///
    /// Relu layers work too, but with zero initial biases a row whose
    /// hidden units are all inactive yields an all-zero raw biternion,
    /// which cannot be normalized.
    pub fn new(head: HeadKind) -> Self {
        TrainConfig {
            head,
            hidden: vec![LayerSpec::new(64, Activation::Tanh); 2],
            optimizer: AdamConfig::default(),
            batch_size: DEFAULT_BATCH_SIZE,
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.head.validate()?;
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidParameter("batch size and max epochs must be positive".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::InvalidParameter(format!(
                "patience {} exceeds max epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.hidden.iter().any(|l| l.units == 0) {
            return Err(Error::InvalidParameter("hidden layers need at least one unit".into()));
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("invalid optimizer settings {o:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch loss over the epoch; the full-set loss for epoch 0.
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Epoch 0 holds the losses of the initial parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch]
    }

    pub fn initial(&self) -> &EpochRecord {
        &self.epochs[0]
    }

    pub fn last(&self) -> &EpochRecord {
        self.epochs.last().expect("history is never empty")
    }

    /// Training epochs run (excluding the initial record).
    pub fn epochs_run(&self) -> usize {
        self.epochs.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: PredictiveModel,
    pub config: TrainConfig,
    pub history: TrainHistory,
}

fn check_data(config: &TrainConfig, train: &Dataset, val: &Dataset) -> Result<()> {
    config.validate()?;
    if train.dim() != val.dim() {
        return Err(Error::ConfigMismatch(format!(
            "train has {} features but validation has {}",
            train.dim(),
            val.dim()
        )));
    }
    train.angles()?;
    val.angles()?;
    Ok(())
}

/// Adam on shuffled minibatches of the head's own loss, early-stopped on
/// the validation loss; the best validation epoch's parameters are kept.
/// A `FitAfterTraining` head then gets κ from the validation residuals.
pub fn train(config: &TrainConfig, train: &Dataset, val: &Dataset) -> Result<TrainedModel> {
    check_data(config, train, val)?;
    let (x, t) = (train.features(), train.angles()?);
    let (vx, vt) = (val.features(), val.angles()?);
    let seed = config.seed;
    let mut model = PredictiveModel::new(config.head, train.dim(), &config.hidden, derive_seed(seed, INIT))?;
    let sizes: Vec<usize> = model.networks().iter().map(|n| n.params().len()).collect();
    let mut adam = AdamState::new(config.optimizer, &sizes);
    let mut shuffle_rng = rng_from_seed(derive_seed(seed, SHUFFLE));
    let noise_root = derive_seed(seed, STEP_NOISE);
    let val_seed = derive_seed(seed, VAL_NOISE);

    let mut history = TrainHistory {
        epochs: vec![EpochRecord {
            epoch: 0,
            train_loss: model.loss(x, t, derive_seed(seed, TRAIN_NOISE))?,
            val_loss: model.loss(vx, vt, val_seed)?,
        }],
        best_epoch: 0,
    };
    let mut best_params = model.networks().to_vec();
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step: u64 = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let bx = x.select_rows(chunk);
            let bt: Vec<Angle> = chunk.iter().map(|&i| t[i]).collect();
            let obj = model.objective(&bx, &bt, derive_seed(noise_root, step))?;
            let (loss, grads) = loss_and_gradients(model.networks(), &obj)?;
            adam.step(model.networks_mut().iter_mut().map(|n| n.params_mut()), &grads)?;
            weighted += loss * chunk.len() as f64;
            step += 1;
        }
        let val_loss = model.loss(vx, vt, val_seed)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: weighted / train.len() as f64,
            val_loss,
        });
        if val_loss < history.best().val_loss {
            history.best_epoch = epoch;
            best_params = model.networks().to_vec();
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= config.patience {
            break;
        }
    }

    model.networks_mut().clone_from_slice(&best_params);
    if let HeadKind::FixedKappa {
        kappa: KappaSetting::FitAfterTraining,
    } = config.head
    {
        let means = model.predicted_means(vx)?;
        model.set_fixed_kappa(select_fixed_kappa(&means, vt)?)?;
    }
    Ok(TrainedModel {
        model,
        config: config.clone(),
        history,
    })
}

/// Trains one model per angle of a triple dataset, each with its own seed.
pub fn train_multi(config: &TrainConfig, train_data: &Dataset, val: &Dataset) -> Result<[TrainedModel; 3]> {
    let run = |i: usize| -> Result<TrainedModel> {
        let cfg = TrainConfig {
            seed: derive_seed(config.seed, 10 + i as u64),
            ..config.clone()
        };
        train(&cfg, &train_data.triple_column(i)?, &val.triple_column(i)?)
    };
    Ok([run(0)?, run(1)?, run(2)?])
}
