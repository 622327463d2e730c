use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::mlp::MlpModel;
use super::train::{train, Dataset, TrainConfig, TrainHistory};

/// Candidate values for each searched setting; every list must be non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub hidden_layers: Vec<Vec<usize>>,
    pub learning_rate: Vec<f64>,
    pub l2_regularization: Vec<f64>,
    pub epochs: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            hidden_layers: vec![vec![64, 64], vec![128, 128], vec![190, 110, 180], vec![170, 170, 210]],
            learning_rate: vec![3e-4, 1e-3, 3e-3],
            l2_regularization: vec![0.0, 1e-6, 1e-5],
            epochs: vec![2000, 5000],
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.is_empty()
            || self.learning_rate.is_empty()
            || self.l2_regularization.is_empty()
            || self.epochs.is_empty()
        {
            return Err(Error::Config("every search dimension needs at least one candidate".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub hidden: Vec<usize>,
    pub config: TrainConfig,
    /// Final mean test loss; infinite for diverged trials.
    pub test_loss: f64,
    pub train_loss: f64,
    pub epochs_run: usize,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub trials: Vec<Trial>,
    pub best: usize,
    pub model: MlpModel,
    pub history: TrainHistory,
}

/// Random search: `n_trials` draws from `space` on top of `base`, ranked
/// by test loss.
pub fn random_search(
    train_set: &Dataset,
    test_set: &Dataset,
    space: &SearchSpace,
    base: &TrainConfig,
    n_trials: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    space.validate()?;
    if n_trials == 0 {
        return Err(Error::Config("random search needs at least one trial".into()));
    }
    if test_set.is_empty() {
        return Err(Error::Input("random search needs a test set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(n_trials);
    let mut best: Option<(usize, MlpModel, TrainHistory)> = None;
    for k in 0..n_trials {
        let hidden = space.hidden_layers.choose(&mut rng).expect("non-empty").clone();
        let config = TrainConfig {
            learning_rate: *space.learning_rate.choose(&mut rng).expect("non-empty"),
            l2_regularization: *space.l2_regularization.choose(&mut rng).expect("non-empty"),
            epochs: *space.epochs.choose(&mut rng).expect("non-empty"),
            seed: base.seed.wrapping_add(k as u64),
            ..base.clone()
        };
        let trial = match train(train_set, test_set, &hidden, &config) {
            Ok((model, history)) => {
                let test_loss = test_set.mean_loss(&model);
                let trial = Trial {
                    hidden,
                    config,
                    test_loss,
                    train_loss: train_set.mean_loss(&model),
                    epochs_run: history.train_loss.len(),
                };
                if best.as_ref().is_none_or(|(b, _, _)| test_loss < trials_loss(&trials, *b)) {
                    best = Some((k, model, history));
                }
                trial
            }
            Err(Error::Diverged { epoch, loss, .. }) => {
                log::warn!("trial {k} diverged at epoch {epoch} (loss {loss:e})");
                Trial { hidden, config, test_loss: f64::INFINITY, train_loss: loss, epochs_run: epoch }
            }
            Err(e) => return Err(e),
        };
        trials.push(trial);
    }
    let (best, model, history) = best.ok_or_else(|| Error::Diverged {
        epoch: 0,
        loss: f64::INFINITY,
        history: Vec::new(),
    })?;
    Ok(SearchOutcome { trials, best, model, history })
}

fn trials_loss(trials: &[Trial], k: usize) -> f64 {
    trials[k].test_loss
}
