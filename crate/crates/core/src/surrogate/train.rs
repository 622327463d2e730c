use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::adam::{adam_step, AdamState};
use super::mlp::{relative_loss, MlpModel, Normalizer};

/// Paired inputs and reduced-coefficient targets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Input(format!("{} inputs but {} targets", inputs.len(), targets.len())));
        }
        let d = Self { inputs, targets };
        if let (Some(x), Some(y)) = (d.inputs.first(), d.targets.first()) {
            let (nx, ny) = (x.len(), y.len());
            if d.inputs.iter().any(|v| v.len() != nx) || d.targets.iter().any(|v| v.len() != ny) {
                return Err(Error::Input("ragged dataset".into()));
            }
        }
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Samples whose target is not identically zero.
    pub fn without_zero_targets(&self) -> (Self, usize) {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.targets[i].iter().any(|&v| v != 0.0))
            .collect();
        let dropped = self.len() - keep.len();
        (
            Self {
                inputs: keep.iter().map(|&i| self.inputs[i].clone()).collect(),
                targets: keep.iter().map(|&i| self.targets[i].clone()).collect(),
            },
            dropped,
        )
    }

    fn columns(rows: &[Vec<f64>], idx: &[usize]) -> DMatrix<f64> {
        let n = rows.first().map_or(0, Vec::len);
        DMatrix::from_fn(n, idx.len(), |i, j| rows[idx[j]][i])
    }

    pub(crate) fn batch(&self, idx: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        (Self::columns(&self.inputs, idx), Self::columns(&self.targets, idx))
    }

    /// Mean relative loss of the model, ignoring zero targets.
    pub fn mean_loss(&self, model: &MlpModel) -> f64 {
        let (x, _) = self.batch(&(0..self.len()).collect::<Vec<_>>());
        let out = model.forward_batch(&x).output;
        let mut sum = 0.0;
        let mut n = 0;
        for (j, t) in self.targets.iter().enumerate() {
            let p: Vec<f64> = out.column(j).iter().copied().collect();
            if let Some(l) = relative_loss(t, &p) {
                sum += l;
                n += 1;
            }
        }
        if n == 0 {
            f64::NAN
        } else {
            sum / n as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub l2_regularization: f64,
    pub epochs: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// Training stops once the mean training loss falls below this value.
    pub early_stop_tolerance: f64,
    /// Epochs between test-loss checks.
    pub check_every: usize,
    /// Checks without test improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            l2_regularization: 1e-6,
            epochs: 10_000,
            batch_size: None,
            seed: 0,
            early_stop_tolerance: 1e-10,
            check_every: 100,
            patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0 && self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0) {
            return bad("ADAM betas must lie in (0, 1)");
        }
        if !(self.adam_epsilon > 0.0) || !(self.l2_regularization >= 0.0) || !(self.early_stop_tolerance >= 0.0) {
            return bad("adam_epsilon must be positive; l2_regularization and early_stop_tolerance non-negative");
        }
        if self.batch_size == Some(0) || self.check_every == 0 {
            return bad("batch_size and check_every must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EpochLimit,
    Tolerance,
    Patience,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean training loss (data term) per epoch.
    pub train_loss: Vec<f64>,
    /// `(epoch, mean test loss)` at every check.
    pub test_loss: Vec<(usize, f64)>,
    pub duration_s: f64,
    pub stop: StopReason,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
}

const DIVERGENCE: f64 = 1e6;

/// Trains a network with the given hidden widths. Inputs are min-max
/// scaled to `[-1, 1]` and outputs z-scored over the training set. With a
/// non-empty test set the parameters of the best test check are returned.
pub fn train(train: &Dataset, test: &Dataset, hidden: &[usize], cfg: &TrainConfig) -> Result<(MlpModel, TrainHistory)> {
    cfg.validate()?;
    let (train, dropped) = train.without_zero_targets();
    if dropped > 0 {
        log::warn!("skipping {dropped} training samples with zero reference coefficients");
    }
    if train.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let (test, _) = test.without_zero_targets();
    let n_in = train.inputs[0].len();
    let n_out = train.targets[0].len();
    let mut sizes = vec![n_in];
    sizes.extend_from_slice(hidden);
    sizes.push(n_out);
    let mut model = MlpModel::new(&sizes, cfg.seed)?;
    model.input = Normalizer::min_max(&train.inputs);
    model.output = Normalizer::z_score(&train.targets);

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut theta = model.parameters();
    let mut adam = AdamState::new(theta.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let batch = cfg.batch_size.unwrap_or(train.len()).min(train.len());
    let full = train.batch(&order);

    let mut history = TrainHistory {
        train_loss: Vec::new(),
        test_loss: Vec::new(),
        duration_s: 0.0,
        stop: StopReason::EpochLimit,
        best_epoch: 0,
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        let mut epoch_loss = 0.0;
        if batch == train.len() {
            let (loss, g) = model.loss_and_gradient(&full.0, &full.1, cfg.l2_regularization);
            epoch_loss = loss;
            adam_step(&mut adam, &mut theta, &g, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
            model.set_parameters(&theta)?;
        } else {
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch) {
                let (x, y) = train.batch(chunk);
                let (loss, g) = model.loss_and_gradient(&x, &y, cfg.l2_regularization);
                epoch_loss += loss * chunk.len() as f64 / train.len() as f64;
                adam_step(&mut adam, &mut theta, &g, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
                model.set_parameters(&theta)?;
            }
        }
        let penalty = cfg.l2_regularization * theta.iter().map(|t| t * t).sum::<f64>();
        let data_loss = epoch_loss - penalty;
        history.train_loss.push(data_loss);
        if !data_loss.is_finite() || data_loss > DIVERGENCE {
            history.duration_s = start.elapsed().as_secs_f64();
            return Err(Error::Diverged { epoch, loss: data_loss, history: history.train_loss });
        }
        if data_loss < cfg.early_stop_tolerance {
            history.stop = StopReason::Tolerance;
            best = None;
            break;
        }
        if !test.is_empty() && (epoch % cfg.check_every == 0 || epoch == cfg.epochs) {
            let t = test.mean_loss(&model);
            history.test_loss.push((epoch, t));
            if best.as_ref().is_none_or(|(b, _)| t < *b) {
                best = Some((t, theta.clone()));
                history.best_epoch = epoch;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    history.stop = StopReason::Patience;
                    break;
                }
            }
        }
    }
    match best {
        Some((_, theta)) => model.set_parameters(&theta)?,
        None => history.best_epoch = history.train_loss.len(),
    }
    history.duration_s = start.elapsed().as_secs_f64();
    Ok((model, history))
}
