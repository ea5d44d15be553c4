//! Maximum-likelihood training.
//!
//! Models are optimized with minibatch SGD and Nesterov momentum over whole
//! scanpaths, with early stopping on validation loss. Losses are mean
//! negative log-likelihoods per fixation.

mod model;
mod split;

pub use model::{default_kernel, initial_spatial_var, DurationModel, Model, SaccadeModel, Sample};
pub use split::{kfold, split, split_samples};

use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{warm_start_doc, ParamDoc};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Scanpaths per step.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Train / validation / test fractions.
    pub split: [f64; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
            batch_size: 8,
            max_epochs: 30,
            patience: 5,
            seed: 0,
            split: [0.8, 0.1, 0.1],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.split.iter().sum();
        if self.split.iter().any(|f| !(*f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Usage(format!("split fractions {:?} must be non-negative and sum to 1", self.split)));
        }
        if self.batch_size == 0 {
            return Err(Error::Usage("batch size must be at least 1".into()));
        }
        if self.max_epochs == 0 || self.patience > self.max_epochs {
            return Err(Error::Usage("need 1 ≤ max_epochs and patience ≤ max_epochs".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::Usage(
                "need learning_rate > 0, 0 ≤ momentum < 1 and weight_decay ≥ 0".into(),
            ));
        }
        Ok(())
    }

    pub fn hyper(&self) -> Hyper {
        Hyper {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
        }
    }
}

/// The grid-searched hyperparameters, in their tie-breaking order.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Hyper {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub batch_sizes: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub weight_decays: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            batch_sizes: vec![8],
            learning_rates: vec![0.01],
            weight_decays: vec![0.0],
        }
    }
}

impl GridSpec {
    /// Every combination, batch size outermost.
    pub fn points(&self) -> Result<Vec<Hyper>> {
        if self.batch_sizes.is_empty() || self.learning_rates.is_empty() || self.weight_decays.is_empty() {
            return Err(Error::Usage("every grid dimension needs at least one value".into()));
        }
        let mut out = Vec::new();
        for &batch_size in &self.batch_sizes {
            for &learning_rate in &self.learning_rates {
                for &weight_decay in &self.weight_decays {
                    out.push(Hyper {
                        batch_size,
                        learning_rate,
                        weight_decay,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Outcome of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRun {
    pub hyper: Hyper,
    /// Best validation loss, or `None` if the run failed.
    pub val_loss: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ParamDoc,
    pub hyper: Hyper,
    pub train_trace: Vec<f64>,
    pub val_trace: Vec<f64>,
    /// 0-based epoch whose parameters were kept.
    pub best_epoch: usize,
    /// Whether the parameters are the closed-form MLE (no SGD).
    pub closed_form: bool,
    /// Mean NLL per fixation of the returned parameters.
    pub train_loss: f64,
    pub val_loss: f64,
    /// Mean log-likelihood per test fixation.
    pub test_loglik: Option<f64>,
    pub test_fixations: usize,
    pub seed: u64,
    pub grid: Vec<GridRun>,
    /// Seconds spent; excluded from serialization so reruns are identical.
    #[serde(skip)]
    pub wall_clock: f64,
}

impl FitResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("FitResult serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Validation(format!("bad fit result: {e}")))
    }
}

/// Training / validation / test scanpaths.
#[derive(Debug, Clone, Default)]
pub struct Splits {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Mean negative log-likelihood per fixation over `batch` and its gradient.
/// Per-scanpath terms are computed in parallel and summed in order.
pub fn objective<M: Model>(model: &M, batch: &[Sample], theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let refs: Vec<&Sample> = batch.iter().collect();
    objective_refs(model, &refs, theta)
}

fn objective_refs<M: Model>(model: &M, batch: &[&Sample], theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let parts: Vec<_> = batch
        .par_iter()
        .map(|s| model.loglik_grad(theta, s).map(|r| (s, r)))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut grad = vec![0.0; theta.len()];
    let mut n = 0usize;
    for (s, (ll, g)) in parts {
        if !ll.total.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                unit: s.events.key.clone(),
            });
        }
        total += ll.total;
        n += s.len();
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    if n == 0 {
        return Ok((0.0, grad));
    }
    let scale = -1.0 / n as f64;
    grad.iter_mut().for_each(|v| *v *= scale);
    Ok((total * scale, grad))
}

/// Mean negative log-likelihood per fixation, without gradient.
pub fn mean_nll<M: Model>(model: &M, data: &[Sample], theta: &[f64]) -> Result<f64> {
    let parts: Vec<_> = data
        .par_iter()
        .map(|s| model.loglik(theta, s).map(|ll| (s, ll)))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut n = 0usize;
    for (s, ll) in parts {
        if !ll.total.is_finite() {
            return Err(Error::NonFinite {
                unit: s.events.key.clone(),
            });
        }
        total += ll.total;
        n += s.len();
    }
    Ok(if n == 0 { 0.0 } else { -total / n as f64 })
}

/// Trains from `init` (or the model's default start), keeping the
/// parameters of the best validation epoch.
pub fn train<M: Model>(model: &M, init: Option<&[f64]>, data: &Splits, config: &TrainConfig) -> Result<FitResult> {
    config.validate()?;
    let started = Instant::now();
    let val_set = if data.val.is_empty() { &data.train } else { &data.val };
    let decayed = model.decayed();
    let has_decay = config.weight_decay > 0.0 && decayed.iter().any(|&d| d);

    let closed = if has_decay { None } else { model.closed_form(&data.train)? };
    let (theta, train_trace, val_trace, best_epoch, closed_form) = if let Some(theta) = closed {
        let t = mean_nll(model, &data.train, &theta)?;
        let v = mean_nll(model, val_set, &theta)?;
        (theta, vec![t], vec![v], 0, true)
    } else {
        let start = match init {
            Some(t) => t.to_vec(),
            None => model.initial(&data.train)?,
        };
        let (theta, tt, vt, best) = sgd(model, start, &decayed, data, val_set, config)?;
        (theta, tt, vt, best, false)
    };
    let theta = model.finalize(theta, &data.train)?;
    let train_loss = mean_nll(model, &data.train, &theta)?;
    let val_loss = mean_nll(model, val_set, &theta)?;
    let test_fixations = data.test.iter().map(Sample::len).sum();
    let test_loglik = if test_fixations > 0 {
        Some(-mean_nll(model, &data.test, &theta)?)
    } else {
        None
    };
    Ok(FitResult {
        params: model.to_doc(&theta),
        hyper: config.hyper(),
        train_trace,
        val_trace,
        best_epoch,
        closed_form,
        train_loss,
        val_loss,
        test_loglik,
        test_fixations,
        seed: config.seed,
        grid: Vec::new(),
        wall_clock: started.elapsed().as_secs_f64(),
    })
}

type SgdOutcome = (Vec<f64>, Vec<f64>, Vec<f64>, usize);

fn sgd<M: Model>(
    model: &M,
    mut theta: Vec<f64>,
    decayed: &[bool],
    data: &Splits,
    val_set: &[Sample],
    config: &TrainConfig,
) -> Result<SgdOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut velocity = vec![0.0; theta.len()];
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let (mut train_trace, mut val_trace) = (Vec::new(), Vec::new());
    let mut best = (f64::INFINITY, theta.clone(), 0usize);
    let mut since_best = 0;
    let diverged = |epoch: usize, loss: f64, tt: &[f64], vt: &[f64]| Error::Diverged {
        epoch,
        loss,
        train_trace: tt.to_vec(),
        val_trace: vt.to_vec(),
    };
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data.train[i]).collect();
            let (loss, mut grad) = match objective_refs(model, &batch, &theta) {
                Ok(r) => r,
                Err(Error::NonFinite { unit }) => {
                    debug!("non-finite loss on {unit}");
                    return Err(diverged(epoch, f64::NAN, &train_trace, &val_trace));
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(diverged(epoch, loss, &train_trace, &val_trace));
            }
            for ((g, &t), &d) in grad.iter_mut().zip(&theta).zip(decayed) {
                if d {
                    *g += config.weight_decay * t;
                }
            }
            for ((t, v), g) in theta.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = config.momentum * *v + g;
                *t -= config.learning_rate * (g + config.momentum * *v);
            }
        }
        let evaluate = |set: &[Sample]| match mean_nll(model, set, &theta) {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(v) => Err(v),
            Err(_) => Err(f64::NAN),
        };
        let t = evaluate(&data.train).map_err(|l| diverged(epoch, l, &train_trace, &val_trace))?;
        train_trace.push(t);
        let v = evaluate(val_set).map_err(|l| diverged(epoch, l, &train_trace, &val_trace))?;
        val_trace.push(v);
        debug!("epoch {epoch}: train {t} val {v}");
        if v < best.0 {
            best = (v, theta.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= config.patience {
            break;
        }
    }
    Ok((best.1, train_trace, val_trace, best.2))
}

/// Trains every grid point (in parallel) and keeps the lowest validation
/// loss; ties go to the smallest `(batch, lr, weight decay)`. Failed runs
/// are recorded and skipped; if every run fails the first error is returned.
pub fn grid_search<M: Model>(
    model: &M,
    init: Option<&[f64]>,
    data: &Splits,
    grid: &GridSpec,
    template: &TrainConfig,
) -> Result<FitResult> {
    let points = grid.points()?;
    let outcomes: Vec<Result<FitResult>> = points
        .par_iter()
        .map(|h| {
            let config = TrainConfig {
                batch_size: h.batch_size,
                learning_rate: h.learning_rate,
                weight_decay: h.weight_decay,
                ..template.clone()
            };
            train(model, init, data, &config)
        })
        .collect();
    let runs: Vec<GridRun> = points
        .iter()
        .zip(&outcomes)
        .map(|(h, r)| GridRun {
            hyper: *h,
            val_loss: r.as_ref().ok().map(|f| f.val_loss),
            error: r.as_ref().err().map(|e| e.to_string()),
        })
        .collect();
    info!("grid search: {} runs", runs.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in outcomes.iter().enumerate() {
        let Ok(f) = r else { continue };
        let better = match best {
            None => true,
            Some((j, loss)) => {
                f.val_loss < loss
                    || (f.val_loss == loss
                        && points[i].partial_cmp(&points[j]) == Some(std::cmp::Ordering::Less))
            }
        };
        if better {
            best = Some((i, f.val_loss));
        }
    }
    match best {
        Some((i, _)) => {
            let mut out = outcomes.into_iter().nth(i).expect("index in range")?;
            out.grid = runs;
            Ok(out)
        }
        None => Err(outcomes.into_iter().find_map(|r| r.err()).expect("grid is non-empty")),
    }
}

/// Initial `θ` for `model`, copying every parameter the simpler fit shares
/// with it by name; the rest keep `model`'s defaults.
pub fn warm_start<M: Model>(simple: &FitResult, model: &M, train: &[Sample]) -> Result<Vec<f64>> {
    let defaults = model.to_doc(&model.initial(train)?);
    model.from_doc(&warm_start_doc(&simple.params, &defaults)?)
}
