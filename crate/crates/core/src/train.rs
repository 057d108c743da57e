//! Mini-batch Adam on the mean per-sequence log-likelihood, with validation
//! checkpoint selection and early stopping.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{stats_of, EventSequence};
use crate::error::{Error, Result};
use crate::model::{
    log_likelihood_batch, log_likelihood_grad, EnhpModel, IntegratorConfig, ModelConfig, Reduction,
};
use crate::nn::{softplus_inverse, AdamConfig, AdamState, InputTransform};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub tie_embeddings: bool,
    pub input_transform: InputTransform,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Integrator for the training objective.
    pub integrator: IntegratorConfig,
    pub seed: u64,
    /// Start each base intensity at half the empirical rate of its type.
    pub init_baseline_from_data: bool,
    /// Stop after the epoch during which this much wall time has elapsed.
    pub max_wall_seconds: Option<f64>,
}

impl Default for FitConfig {
    /// The simulation-study settings: D = 3, batch 128, lr 1e-4, Monte Carlo
    /// compensator.
    fn default() -> Self {
        Self {
            embed_dim: 3,
            hidden_dim: 64,
            tie_embeddings: false,
            input_transform: InputTransform::Log1p,
            learning_rate: 1e-4,
            batch_size: 128,
            max_epochs: 200,
            patience: 10,
            integrator: IntegratorConfig::monte_carlo(100, 0),
            seed: 0,
            init_baseline_from_data: false,
            max_wall_seconds: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("batch_size", self.batch_size),
            ("patience", self.patience),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        self.integrator.validate()
    }

    pub fn model_config(&self, num_types: usize) -> ModelConfig {
        ModelConfig {
            num_types,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            input_transform: self.input_transform,
            tie_embeddings: self.tie_embeddings,
        }
    }
}

/// The integrator used for validation regardless of the training solver.
pub fn validation_integrator() -> IntegratorConfig {
    IntegratorConfig::trapezoid(4)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-sequence training objective over the epoch's batches (NaN for
    /// epoch 0, which only evaluates the initialization).
    pub train_ll: f64,
    pub val_ll: f64,
    pub val_ll_per_event: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub best_model: EnhpModel,
    pub best_epoch: usize,
    pub best_val_ll: f64,
    pub log: Vec<EpochLog>,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// A freshly initialized model for the given data.
pub fn initial_model(train: &[&EventSequence], num_types: usize, cfg: &FitConfig) -> Result<EnhpModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = EnhpModel::init(cfg.model_config(num_types), &mut rng)?;
    if cfg.init_baseline_from_data {
        let stats = stats_of(train.iter().copied(), num_types);
        let total_time: f64 = train.iter().map(|s| s.t_end).sum();
        if total_time > 0.0 {
            for (k, &count) in stats.per_type_counts.iter().enumerate() {
                let rate = (0.5 * count as f64 / total_time).max(1e-3);
                model.mu_raw[k] = softplus_inverse(rate);
            }
        }
    }
    Ok(model)
}

fn validation_ll(model: &EnhpModel, val: &[&EventSequence]) -> Result<(f64, f64)> {
    if val.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let lls = log_likelihood_batch(model, val, &validation_integrator())?;
    let total: f64 = lls.iter().sum();
    let events: usize = val.iter().map(|s| s.len()).sum();
    Ok((total / val.len() as f64, total / events.max(1) as f64))
}

/// Trains `model` in place of a fresh initialization when given, otherwise
/// initializes from `cfg.seed`. The returned model is the one with the best
/// validation log-likelihood (epoch 0 is the starting point), or the last one
/// when there is no validation data.
pub fn fit(
    train: &[&EventSequence],
    val: &[&EventSequence],
    num_types: usize,
    cfg: &FitConfig,
    start: Option<EnhpModel>,
) -> Result<FitResult> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("no training sequences".into()));
    }
    for s in train.iter().chain(val) {
        s.validate(Some(num_types))?;
    }
    let mut model = match start {
        Some(m) => m,
        None => initial_model(train, num_types, cfg)?,
    };
    let clock = Instant::now();
    let mut opt = AdamState::new(AdamConfig::with_lr(cfg.learning_rate), &model);
    let (val_ll, val_pe) = validation_ll(&model, val)?;
    let mut log = vec![EpochLog {
        epoch: 0,
        train_ll: f64::NAN,
        val_ll,
        val_ll_per_event: val_pe,
        wall_seconds: clock.elapsed().as_secs_f64(),
    }];
    log::info!("epoch 0: val LL {val_ll:.6} ({val_pe:.6} per event)");
    let mut best = (model.clone(), 0usize, val_ll);
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut epochs_run = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step: u64 = 0;

    for epoch in 1..=cfg.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let mut ll_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&EventSequence> = chunk.iter().map(|&i| train[i]).collect();
            let integ = IntegratorConfig {
                seed: cfg.integrator.seed.wrapping_add(step.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
                ..cfg.integrator
            };
            step += 1;
            let mut out = log_likelihood_grad(&model, &batch, &integ, Reduction::Ordered)
                .map_err(|e| Error::NonFinite(format!("epoch {epoch} batch {b}: {e}")))?;
            if !out.mean_log_likelihood.is_finite() {
                return Err(Error::NonFinite(format!(
                    "epoch {epoch} batch {b}: objective {}",
                    out.mean_log_likelihood
                )));
            }
            ll_sum += out.mean_log_likelihood * batch.len() as f64;
            out.grad.scale(-1.0);
            opt.step(&mut model, &out.grad)
                .map_err(|e| Error::NonFinite(format!("epoch {epoch} batch {b}: {e}")))?;
        }
        epochs_run = epoch;
        let (val_ll, val_pe) = validation_ll(&model, val)?;
        let entry = EpochLog {
            epoch,
            train_ll: ll_sum / train.len() as f64,
            val_ll,
            val_ll_per_event: val_pe,
            wall_seconds: clock.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train LL {:.6}, val LL {val_ll:.6} ({val_pe:.6} per event), {:.1}s",
            entry.train_ll,
            entry.wall_seconds
        );
        log.push(entry);
        if val.is_empty() || val_ll > best.2 {
            best = (model.clone(), epoch, val_ll);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
        if cfg.max_wall_seconds.is_some_and(|limit| entry.wall_seconds >= limit) {
            stopped_early = true;
            break;
        }
    }
    Ok(FitResult {
        best_model: best.0,
        best_epoch: best.1,
        best_val_ll: best.2,
        log,
        epochs_run,
        stopped_early,
    })
}

/// Writes the training log as CSV.
pub fn write_log_csv<W: Write>(log: &[EpochLog], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "train_ll", "val_ll", "val_ll_per_event", "wall_seconds"])?;
    for e in log {
        w.write_record([
            e.epoch.to_string(),
            e.train_ll.to_string(),
            e.val_ll.to_string(),
            e.val_ll_per_event.to_string(),
            e.wall_seconds.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<log>", e))?;
    Ok(())
}

pub fn save_log_csv(log: &[EpochLog], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_log_csv(log, std::io::BufWriter::new(file))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub embed_dim: usize,
    pub val_ll: f64,
    pub best_epoch: usize,
}

/// Fits one model per embedding dimension and reports the best validation
/// log-likelihood of each.
pub fn sweep_dims(
    train: &[&EventSequence],
    val: &[&EventSequence],
    num_types: usize,
    cfg: &FitConfig,
    dims: &[usize],
) -> Result<Vec<SweepPoint>> {
    dims.iter()
        .map(|&d| {
            let run = FitConfig {
                embed_dim: d,
                ..cfg.clone()
            };
            let res = fit(train, val, num_types, &run, None)?;
            Ok(SweepPoint {
                embed_dim: d,
                val_ll: res.best_val_ll,
                best_epoch: res.best_epoch,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["D", "val_ll", "best_epoch"])?;
    for p in points {
        w.write_record([p.embed_dim.to_string(), p.val_ll.to_string(), p.best_epoch.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<sweep>", e))?;
    Ok(())
}
