use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::train::{train, TrainConfig, TrainedModel};
use crate::error::{Error, Result};
use crate::neuralnet::LayerSpec;
use crate::rng::{derive_seed, rng_from_seed};

/// Ranges sampled by [`random_search`]. Learning rate and layer width are
/// log-uniform, depth is uniform, batch size is a uniform choice. The
/// activation of the base config is kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub learning_rate: (f64, f64),
    pub hidden_units: (usize, usize),
    pub hidden_layers: (usize, usize),
    pub batch_sizes: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            learning_rate: (1e-4, 3e-3),
            hidden_units: (16, 128),
            hidden_layers: (1, 3),
            batch_sizes: vec![32, 64, 128],
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.learning_rate;
        let ok = lo > 0.0
            && lo <= hi
            && self.hidden_units.0 >= 1
            && self.hidden_units.0 <= self.hidden_units.1
            && self.hidden_layers.0 <= self.hidden_layers.1
            && !self.batch_sizes.is_empty()
            && self.batch_sizes.iter().all(|b| *b > 0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid search space {self:?}")))
        }
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    rng.random_range(lo.ln()..=hi.ln()).exp()
}

/// The config of trial `index` for a search seeded with `seed`. Each trial
/// draws from its own seed stream, so trial `i` is the same for every budget.
pub fn sample_config(base: &TrainConfig, space: &SearchSpace, seed: u64, index: usize) -> TrainConfig {
    let trial_seed = derive_seed(seed, index as u64);
    let mut rng = rng_from_seed(trial_seed);
    let lr = log_uniform(&mut rng, space.learning_rate.0, space.learning_rate.1);
    let (ulo, uhi) = space.hidden_units;
    let units = log_uniform(&mut rng, ulo as f64, uhi as f64 + 1.0).floor().min(uhi as f64) as usize;
    let layers = rng.random_range(space.hidden_layers.0..=space.hidden_layers.1);
    let batch_size = space.batch_sizes[rng.random_range(0..space.batch_sizes.len())];
    let activation = base.hidden.first().map_or(crate::neuralnet::Activation::Relu, |l| l.activation);
    let mut cfg = base.clone();
    cfg.optimizer.learning_rate = lr;
    cfg.hidden = vec![LayerSpec::new(units, activation); layers];
    cfg.batch_size = batch_size;
    cfg.seed = derive_seed(trial_seed, 1);
    cfg
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub index: usize,
    pub config: TrainConfig,
    pub best_val_loss: f64,
    pub epochs_run: usize,
}

/// A trial that stopped on a non-finite loss or a degenerate output.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergedTrial {
    pub index: usize,
    pub config: TrainConfig,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: TrainedModel,
    pub best_index: usize,
    /// Completed trials in trial order.
    pub leaderboard: Vec<TrialRecord>,
    pub diverged: Vec<DivergedTrial>,
}

/// Trains `budget` sampled configs and keeps the one with the lowest best
/// validation loss (earliest trial on ties).
pub fn random_search(
    base: &TrainConfig,
    space: &SearchSpace,
    budget: usize,
    train_data: &Dataset,
    val: &Dataset,
    seed: u64,
) -> Result<SearchResult> {
    if budget == 0 {
        return Err(Error::InvalidParameter("search budget must be positive".into()));
    }
    space.validate()?;
    let mut best: Option<(usize, TrainedModel)> = None;
    let mut leaderboard = Vec::new();
    let mut diverged = Vec::new();
    for index in 0..budget {
        let config = sample_config(base, space, seed, index);
        match train(&config, train_data, val) {
            Ok(m) => {
                let loss = m.history.best().val_loss;
                leaderboard.push(TrialRecord {
                    index,
                    config,
                    best_val_loss: loss,
                    epochs_run: m.history.epochs_run(),
                });
                if best.as_ref().is_none_or(|(_, b)| loss < b.history.best().val_loss) {
                    best = Some((index, m));
                }
            }
            Err(e @ (Error::NonFiniteLoss(_) | Error::DegenerateVector { .. })) => diverged.push(DivergedTrial {
                index,
                config,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    let (best_index, best) =
        best.ok_or_else(|| Error::InvalidParameter(format!("all {budget} search trials diverged")))?;
    Ok(SearchResult {
        best,
        best_index,
        leaderboard,
        diverged,
    })
}
