//! Next-event prediction and held-out evaluation.
//!
//! The predicted time is the mean of the model's next-event density,
//! `p(Δ) = λ(t_last + Δ) · exp(−∫_0^Δ λ)`, integrated by trapezoid on `[0, U]`
//! with the mass beyond `U` placed at `U`. The predicted type is the argmax of
//! the per-type intensities at the observed time.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Event, EventSequence};
use crate::error::{Error, Result};
use crate::model::{IntegratorConfig, IntensityModel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictionConfig {
    /// Upper limit of the time integral, in units of the mean training gap.
    pub h_mult: f64,
    /// Trapezoid steps on `[0, U]`.
    pub quad_steps: usize,
    /// Predict each sequence's first event from the empty history.
    pub include_first: bool,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            h_mult: 20.0,
            quad_steps: 500,
            include_first: true,
        }
    }
}

impl PredictionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h_mult > 0.0 && self.h_mult.is_finite()) {
            return Err(Error::Config(format!("h_mult must be > 0, got {}", self.h_mult)));
        }
        if self.quad_steps < 10 {
            return Err(Error::Config(format!(
                "quad_steps must be >= 10, got {}",
                self.quad_steps
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimePrediction {
    pub predicted_time: f64,
    pub expected_gap: f64,
    /// Probability that the next event falls after `t_last + horizon`.
    pub tail_mass: f64,
    pub horizon: f64,
}

/// Expected time of the next event after `t_last`, given `history` (every
/// event at or before `t_last`). `mean_gap` sets the integration limit.
pub fn predict_next_time<M: IntensityModel + ?Sized>(
    model: &M,
    history: &[Event],
    t_last: f64,
    mean_gap: f64,
    cfg: &PredictionConfig,
) -> Result<TimePrediction> {
    cfg.validate()?;
    if !(mean_gap > 0.0 && mean_gap.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "degenerate history window: mean gap {mean_gap} must be finite and > 0"
        )));
    }
    if !t_last.is_finite() || history.last().is_some_and(|e| e.t > t_last) {
        return Err(Error::InvalidArgument(format!(
            "t_last = {t_last} must be finite and not before the last history event"
        )));
    }
    let horizon = cfg.h_mult * mean_gap;
    let q = cfg.quad_steps;
    let h = horizon / q as f64;
    let times: Vec<f64> = (0..=q).map(|s| t_last + s as f64 * h).collect();
    let lam = model.total_intensity_grid(history, &times)?;
    let mut cum = 0.0;
    let mut mean = 0.0;
    let mut prev_integrand = 0.0;
    for s in 0..=q {
        if s > 0 {
            cum += 0.5 * h * (lam[s - 1] + lam[s]);
        }
        let delta = s as f64 * h;
        let integrand = delta * lam[s] * (-cum).exp();
        if s > 0 {
            mean += 0.5 * h * (prev_integrand + integrand);
        }
        prev_integrand = integrand;
    }
    let tail_mass = (-cum).exp();
    let expected_gap = mean + horizon * tail_mass;
    if !expected_gap.is_finite() {
        return Err(Error::NonFinite(format!("expected gap after t = {t_last}")));
    }
    Ok(TimePrediction {
        predicted_time: t_last + expected_gap,
        expected_gap,
        tail_mass,
        horizon,
    })
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    if values.iter().filter(|&&v| v == values[best]).count() > 1 {
        log::debug!("tie in type prediction at intensity {}; choosing type {best}", values[best]);
    }
    best
}

/// argmax_k λ_k(observed_time) given `history`; ties go to the smallest index.
pub fn predict_next_type<M: IntensityModel + ?Sized>(
    model: &M,
    history: &[Event],
    observed_time: f64,
) -> Result<usize> {
    if let Some(last) = history.last() {
        if !(observed_time > last.t) {
            return Err(Error::InvalidArgument(format!(
                "observed time {observed_time} is not after the last history event at {}",
                last.t
            )));
        }
    }
    let lam = model.intensities_after(history, observed_time)?;
    Ok(argmax_lowest(&lam))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub seq_id: String,
    pub index: usize,
    pub true_t: f64,
    pub pred_t: f64,
    pub true_k: usize,
    pub pred_k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_sequences: usize,
    pub num_events: usize,
    pub num_predictions: usize,
    pub total_ll: f64,
    pub ll_per_sequence: f64,
    pub ll_per_event: f64,
    pub time_rmse: f64,
    pub type_error_rate: f64,
    pub mean_tail_mass: f64,
    pub max_tail_mass: f64,
    pub mean_gap: f64,
    pub prediction: PredictionConfig,
    pub integrator: IntegratorConfig,
}

struct SequenceEval {
    ll: f64,
    rows: Vec<PredictionRow>,
    tail: Vec<f64>,
}

fn evaluate_sequence<M: IntensityModel + ?Sized>(
    model: &M,
    seq: &EventSequence,
    mean_gap: f64,
    pred: &PredictionConfig,
    integ: &IntegratorConfig,
) -> Result<SequenceEval> {
    let ll = model.sequence_log_likelihood(seq, integ)?;
    let mut rows = Vec::new();
    let mut tail = Vec::new();
    for (i, ev) in seq.events.iter().enumerate() {
        if i == 0 && !pred.include_first {
            continue;
        }
        let history = &seq.events[..i];
        let t_last = history.last().map_or(0.0, |e| e.t);
        let time = predict_next_time(model, history, t_last, mean_gap, pred)?;
        let lam = model.intensities_after(history, ev.t)?;
        rows.push(PredictionRow {
            seq_id: seq.seq_id.clone(),
            index: i,
            true_t: ev.t,
            pred_t: time.predicted_time,
            true_k: ev.k,
            pred_k: argmax_lowest(&lam),
        });
        tail.push(time.tail_mass);
    }
    Ok(SequenceEval { ll, rows, tail })
}

/// Log-likelihood and next-event metrics over `seqs`. Every prediction for
/// event `i` reads only events `0..i` of its sequence.
pub fn evaluate<M: IntensityModel + ?Sized>(
    model: &M,
    seqs: &[&EventSequence],
    mean_gap: f64,
    pred: &PredictionConfig,
    integ: &IntegratorConfig,
) -> Result<(EvalReport, Vec<PredictionRow>)> {
    if seqs.is_empty() {
        return Err(Error::InvalidArgument("nothing to evaluate: empty split".into()));
    }
    pred.validate()?;
    integ.validate()?;
    for s in seqs {
        s.validate(Some(model.num_types()))?;
    }
    let per_seq: Vec<SequenceEval> = seqs
        .par_iter()
        .map(|s| evaluate_sequence(model, s, mean_gap, pred, integ))
        .collect::<Result<_>>()?;

    let num_events: usize = seqs.iter().map(|s| s.len()).sum();
    let total_ll: f64 = per_seq.iter().map(|r| r.ll).sum();
    let rows: Vec<PredictionRow> = per_seq.iter().flat_map(|r| r.rows.iter().cloned()).collect();
    let tails: Vec<f64> = per_seq.iter().flat_map(|r| r.tail.iter().copied()).collect();
    let n = rows.len();
    let (time_rmse, type_error_rate, mean_tail) = if n == 0 {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let se: f64 = rows.iter().map(|r| (r.pred_t - r.true_t).powi(2)).sum();
        let wrong = rows.iter().filter(|r| r.pred_k != r.true_k).count();
        (
            (se / n as f64).sqrt(),
            wrong as f64 / n as f64,
            tails.iter().sum::<f64>() / n as f64,
        )
    };
    let report = EvalReport {
        num_sequences: seqs.len(),
        num_events,
        num_predictions: n,
        total_ll,
        ll_per_sequence: total_ll / seqs.len() as f64,
        ll_per_event: if num_events > 0 {
            total_ll / num_events as f64
        } else {
            f64::NAN
        },
        time_rmse,
        type_error_rate,
        mean_tail_mass: mean_tail,
        max_tail_mass: tails.iter().copied().fold(0.0, f64::max),
        mean_gap,
        prediction: *pred,
        integrator: *integ,
    };
    Ok((report, rows))
}

pub fn write_predictions_csv<W: Write>(rows: &[PredictionRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<predictions>", e))?;
    Ok(())
}

pub fn save_predictions_csv(rows: &[PredictionRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_predictions_csv(rows, std::io::BufWriter::new(file))
}
