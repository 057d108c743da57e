//! Finite-difference verification of the likelihood gradient on random models.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Event, EventSequence};
use crate::error::{Error, Result};
use crate::model::{
    kernel_inputs, log_likelihood_batch, log_likelihood_grad, EnhpModel, IntegratorConfig, ModelConfig, Reduction,
};
use crate::nn::{InputTransform, Parameters};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    pub num_models: usize,
    pub seed: u64,
    pub type_counts: Vec<usize>,
    pub embed_dims: Vec<usize>,
    pub hidden_dims: Vec<usize>,
    /// Coordinates compared per model (all of them when the model is smaller).
    pub coords_per_model: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Errors are normalized by max(abs_floor, |grad|).
    pub abs_floor: f64,
    /// Perturbs one analytic gradient entry per model; used to confirm that
    /// the check can fail.
    #[serde(skip)]
    pub corrupt: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            num_models: 100,
            seed: 0,
            type_counts: vec![1, 3, 10],
            embed_dims: vec![1, 3],
            hidden_dims: vec![4, 64],
            coords_per_model: 200,
            step: 1e-5,
            tolerance: 1e-5,
            abs_floor: 1.0,
            corrupt: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Worst {
    pub model: usize,
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub models_checked: usize,
    pub coordinates_checked: usize,
    /// Hidden-unit coordinates whose central difference would straddle a relu kink.
    pub kink_skipped: usize,
    pub worst: Option<Worst>,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn worst_relative_error(&self) -> f64 {
        self.worst.as_ref().map_or(0.0, |w| w.relative_error)
    }
}

/// A model with every raw parameter drawn at random, so that no relu unit sits
/// exactly on its kink.
pub fn random_model<R: Rng + ?Sized>(cfg: ModelConfig, rng: &mut R) -> Result<EnhpModel> {
    let mut model = EnhpModel::init(cfg, rng)?;
    for (name, t) in model.tensors_mut() {
        let (lo, hi) = match name {
            "mu_raw" => (-2.0, 0.5),
            "w1_raw" | "w2_raw" => (-2.0, 1.0),
            "kernel.hidden_b" | "kernel.out_b" => (-1.0, 1.0),
            _ => (-1.5, 1.5),
        };
        for x in t.iter_mut() {
            *x = rng.random_range(lo..hi);
        }
    }
    Ok(model)
}

pub fn random_sequence<R: Rng + ?Sized>(id: String, num_types: usize, rng: &mut R) -> EventSequence {
    let t_end = rng.random_range(1.0..5.0);
    let n = rng.random_range(0..=8);
    let mut times: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..t_end)).collect();
    times.sort_by(f64::total_cmp);
    let events = times
        .into_iter()
        .map(|t| Event::new(t, rng.random_range(0..num_types)))
        .collect();
    EventSequence::new(id, t_end, events)
}

/// Relative error with an absolute floor for tiny gradients.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn run_gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    if cfg.type_counts.is_empty() || cfg.embed_dims.is_empty() || cfg.hidden_dims.is_empty() {
        return Err(Error::Config("gradcheck needs at least one M, D and H".into()));
    }
    if !(cfg.step > 0.0) || cfg.coords_per_model == 0 {
        return Err(Error::Config("gradcheck step and coords_per_model must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst: Option<Worst> = None;
    let mut coordinates = 0;
    let mut kink_skipped = 0;
    for index in 0..cfg.num_models {
        let m = *cfg.type_counts.choose(&mut rng).expect("nonempty");
        let d = *cfg.embed_dims.choose(&mut rng).expect("nonempty");
        let h = *cfg.hidden_dims.choose(&mut rng).expect("nonempty");
        let model_cfg = ModelConfig {
            num_types: m,
            embed_dim: d,
            hidden_dim: h,
            input_transform: if rng.random::<bool>() {
                InputTransform::Log1p
            } else {
                InputTransform::Identity
            },
            tie_embeddings: rng.random_range(0..4) == 0,
        };
        let model = random_model(model_cfg, &mut rng)?;
        let n_seqs = rng.random_range(1..=3);
        let seqs: Vec<EventSequence> = (0..n_seqs)
            .map(|s| random_sequence(format!("g{index}-{s}"), m, &mut rng))
            .collect();
        let refs: Vec<&EventSequence> = seqs.iter().collect();
        let integ = IntegratorConfig::trapezoid(rng.random_range(0..=4));

        let mut analytic = log_likelihood_grad(&model, &refs, &integ, Reduction::Ordered)?
            .grad
            .flatten();
        let names: Vec<(&'static str, usize)> =
            model.tensors().iter().map(|(n, t)| (*n, t.len())).collect();
        let mut flat_names = Vec::with_capacity(analytic.len());
        for (name, len) in &names {
            for i in 0..*len {
                flat_names.push((*name, i));
            }
        }
        let mut coords: Vec<usize> = (0..analytic.len()).collect();
        if coords.len() > cfg.coords_per_model {
            coords = rand::seq::index::sample(&mut rng, analytic.len(), cfg.coords_per_model).into_vec();
            coords.sort_unstable();
        }
        if cfg.corrupt {
            let c = coords[0];
            analytic[c] += 1e-3 * (1.0 + analytic[c].abs());
        }
        let inputs: Vec<f64> = refs
            .iter()
            .enumerate()
            .flat_map(|(s, seq)| kernel_inputs(seq, &integ, s))
            .map(|dt| model.kernel.input_transform.apply(dt))
            .collect();
        let straddles_kink = |name: &str, i: usize| -> bool {
            let (wh, bh) = (model.kernel.hidden_w[i], model.kernel.hidden_b[i]);
            let reach = |x: f64| match name {
                "kernel.hidden_w" => 2.0 * cfg.step * x.abs(),
                _ => 2.0 * cfg.step,
            };
            inputs.iter().any(|&x| (wh * x + bh).abs() <= reach(x))
        };
        let objective = |m: &EnhpModel| -> Result<f64> {
            let lls = log_likelihood_batch(m, &refs, &integ)?;
            Ok(lls.iter().sum::<f64>() / lls.len() as f64)
        };
        for &c in &coords {
            let (name, i) = flat_names[c];
            if matches!(name, "kernel.hidden_w" | "kernel.hidden_b") && straddles_kink(name, i) {
                kink_skipped += 1;
                continue;
            }
            let shifted = |delta: f64| -> Result<f64> {
                let mut probe = model.clone();
                for (n, t) in probe.tensors_mut() {
                    if n == name {
                        t[i] += delta;
                    }
                }
                objective(&probe)
            };
            let numeric = (shifted(cfg.step)? - shifted(-cfg.step)?) / (2.0 * cfg.step);
            let rel = relative_error(analytic[c], numeric, cfg.abs_floor);
            coordinates += 1;
            if worst.as_ref().is_none_or(|w| rel > w.relative_error) {
                worst = Some(Worst {
                    model: index,
                    tensor: name.to_string(),
                    index: i,
                    analytic: analytic[c],
                    numeric,
                    relative_error: rel,
                });
            }
        }
    }
    let passed = worst.as_ref().is_none_or(|w| w.relative_error < cfg.tolerance);
    Ok(GradCheckReport {
        models_checked: cfg.num_models,
        coordinates_checked: coordinates,
        kink_skipped,
        worst,
        tolerance: cfg.tolerance,
        passed,
    })
}
