use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{HawkesGroundTruth, ParametricKernel};
use crate::data::{Dataset, Event, EventSequence};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Observation window `[0, horizon]` of each sequence.
    pub horizon: f64,
    pub num_sequences: usize,
    pub seed: u64,
    /// A sequence stops at its `max_events`-th event, and its window is cut
    /// at that event's time.
    pub max_events: usize,
    /// Simulate even when the branching matrix has spectral radius >= 1.
    /// Sequences then almost always end at `max_events`.
    pub allow_supercritical: bool,
    pub id_prefix: String,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 100.0,
            num_sequences: 1000,
            seed: 42,
            max_events: 100_000,
            allow_supercritical: false,
            id_prefix: "sim".into(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be finite and > 0, got {}", self.horizon)));
        }
        if self.max_events == 0 {
            return Err(Error::Config("max_events must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub dataset: Dataset,
    /// Number of emitted events of each type, over all sequences.
    pub per_type_counts: Vec<usize>,
    /// Sequences stopped by `max_events` before the horizon.
    pub capped_sequences: usize,
    pub spectral_radius: f64,
}

/// Incremental intensity for one sequence: exponential pairs are kept as
/// decayed sums, finite-support kernels scan a window of recent events.
struct IntensityState<'a> {
    gt: &'a HawkesGroundTruth,
    exp_alpha: Vec<f64>,
    exp_delta: Vec<f64>,
    exp_target: Vec<usize>,
    exp_value: Vec<f64>,
    exp_by_source: Vec<Vec<usize>>,
    finite_by_source: Vec<Vec<(usize, ParametricKernel)>>,
    max_support: f64,
    window: VecDeque<Event>,
    t_ref: f64,
}

impl<'a> IntensityState<'a> {
    fn new(gt: &'a HawkesGroundTruth) -> Self {
        let m = gt.num_types;
        let mut s = Self {
            gt,
            exp_alpha: Vec::new(),
            exp_delta: Vec::new(),
            exp_target: Vec::new(),
            exp_value: Vec::new(),
            exp_by_source: vec![Vec::new(); m],
            finite_by_source: vec![Vec::new(); m],
            max_support: 0.0,
            window: VecDeque::new(),
            t_ref: 0.0,
        };
        for i in 0..m {
            for j in 0..m {
                let k = gt.kernels[i][j];
                if k.is_zero() {
                    continue;
                }
                match k {
                    ParametricKernel::Exponential { alpha, delta } => {
                        s.exp_by_source[i].push(s.exp_alpha.len());
                        s.exp_alpha.push(alpha);
                        s.exp_delta.push(delta);
                        s.exp_target.push(j);
                        s.exp_value.push(0.0);
                    }
                    _ => {
                        s.finite_by_source[i].push((j, k));
                        s.max_support = s.max_support.max(k.support());
                    }
                }
            }
        }
        s
    }

    fn advance(&mut self, t: f64) {
        let dt = t - self.t_ref;
        if dt > 0.0 {
            for (v, d) in self.exp_value.iter_mut().zip(&self.exp_delta) {
                *v *= (-d * dt).exp();
            }
            self.t_ref = t;
        }
        while let Some(front) = self.window.front() {
            if t - front.t >= self.max_support {
                self.window.pop_front();
            } else {
                break;
            }
        }
    }

    /// Per-type intensities at `t_ref`, or their remaining sups when `sup`.
    fn evaluate(&self, out: &mut [f64], sup: bool) {
        out.copy_from_slice(&self.gt.mu);
        for (p, &v) in self.exp_value.iter().enumerate() {
            out[self.exp_target[p]] += v;
        }
        for ev in &self.window {
            let dt = self.t_ref - ev.t;
            for &(j, k) in &self.finite_by_source[ev.k] {
                out[j] += if sup { k.sup_after(dt) } else { k.eval(dt) };
            }
        }
    }

    fn push(&mut self, ev: Event) {
        for &p in &self.exp_by_source[ev.k] {
            self.exp_value[p] += self.exp_alpha[p];
        }
        if !self.finite_by_source[ev.k].is_empty() {
            self.window.push_back(ev);
        }
    }
}

fn simulate_one(
    gt: &HawkesGroundTruth,
    cfg: &SimConfig,
    index: usize,
) -> Result<(EventSequence, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let m = gt.num_types;
    let mut state = IntensityState::new(gt);
    let mut lam = vec![0.0; m];
    let mut events = Vec::new();
    let mut t = 0.0;
    let mut t_end = cfg.horizon;
    let mut capped = false;
    loop {
        state.advance(t);
        state.evaluate(&mut lam, true);
        let bound: f64 = lam.iter().sum();
        let u: f64 = rng.random();
        let candidate = t - (1.0 - u).ln() / bound;
        if candidate > cfg.horizon {
            break;
        }
        state.advance(candidate);
        state.evaluate(&mut lam, false);
        let total: f64 = lam.iter().sum();
        if total > bound * (1.0 + 1e-9) {
            return Err(Error::BoundViolation {
                t: candidate,
                intensity: total,
                bound,
            });
        }
        t = candidate;
        let v: f64 = rng.random();
        if v * bound >= total {
            continue;
        }
        let mut r = rng.random::<f64>() * total;
        let mut k = m - 1;
        for (j, &l) in lam.iter().enumerate() {
            if r < l {
                k = j;
                break;
            }
            r -= l;
        }
        let ev = Event::new(t, k);
        events.push(ev);
        state.push(ev);
        if events.len() >= cfg.max_events {
            t_end = t;
            capped = t < cfg.horizon;
            break;
        }
    }
    let id = format!("{}{index}", cfg.id_prefix);
    Ok((EventSequence::new(id, t_end, events), capped))
}

/// Samples `cfg.num_sequences` independent sequences by Ogata thinning.
///
/// Sequence `i` draws from stream `i` of `cfg.seed`, so the output does not
/// depend on the thread count.
pub fn simulate(gt: &HawkesGroundTruth, cfg: &SimConfig) -> Result<SimOutput> {
    gt.validate()?;
    cfg.validate()?;
    let radius = gt.spectral_radius();
    if radius >= 1.0 {
        if !cfg.allow_supercritical {
            return Err(Error::Supercritical { radius });
        }
        log::warn!(
            "branching matrix has spectral radius {radius:.6}; sequences will run to the cap of {} events",
            cfg.max_events
        );
    }
    let results: Vec<(EventSequence, bool)> = (0..cfg.num_sequences)
        .into_par_iter()
        .map(|i| simulate_one(gt, cfg, i))
        .collect::<Result<_>>()?;
    let mut per_type_counts = vec![0; gt.num_types];
    let mut capped_sequences = 0;
    let mut sequences = Vec::with_capacity(results.len());
    for (seq, capped) in results {
        for e in &seq.events {
            per_type_counts[e.k] += 1;
        }
        capped_sequences += capped as usize;
        sequences.push(seq);
    }
    Ok(SimOutput {
        dataset: Dataset::new(sequences, gt.num_types)?,
        per_type_counts,
        capped_sequences,
        spectral_radius: radius,
    })
}
