use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Effective, EnhpModel, ModelGrad};
use crate::data::EventSequence;
use crate::error::{Error, Result};
use crate::nn::{sigmoid, BackwardScratch, KernelGrad, KernelTape};

/// How ∫ λ over each inter-event interval is estimated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Trapezoid,
    MonteCarlo,
}

impl std::str::FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trapezoid" => Ok(Self::Trapezoid),
            "monte_carlo" | "mc" => Ok(Self::MonteCarlo),
            other => Err(Error::Config(format!(
                "unknown integrator {other:?} (expected trapezoid or monte_carlo)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub method: Integrator,
    /// Uniform draws per interval for [`Integrator::MonteCarlo`].
    pub mc_samples: usize,
    /// Interior points per interval for [`Integrator::Trapezoid`].
    pub knots_per_interval: usize,
    /// Seed for the Monte Carlo draws. Sequence `i` of a batch uses stream `i`.
    pub seed: u64,
    /// Events older than this are dropped from the history.
    pub max_lag: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Integrator::Trapezoid,
            mc_samples: 100,
            knots_per_interval: 4,
            seed: 0,
            max_lag: None,
        }
    }
}

impl IntegratorConfig {
    pub fn trapezoid(knots_per_interval: usize) -> Self {
        Self {
            method: Integrator::Trapezoid,
            knots_per_interval,
            ..Self::default()
        }
    }

    pub fn monte_carlo(mc_samples: usize, seed: u64) -> Self {
        Self {
            method: Integrator::MonteCarlo,
            mc_samples,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.method == Integrator::MonteCarlo && self.mc_samples == 0 {
            return Err(Error::Config("mc_samples must be positive".into()));
        }
        if let Some(lag) = self.max_lag {
            if !(lag > 0.0) {
                return Err(Error::Config(format!("max_lag must be positive, got {lag}")));
            }
        }
        Ok(())
    }

    fn rng_for(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }
}

/// Summation order for batch reductions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Reduction {
    /// Per-sequence results are combined in input order; bit-identical for any
    /// thread count.
    #[default]
    Ordered,
    /// Rayon's tree reduction; faster to combine but the rounding depends on
    /// the thread pool.
    Unordered,
}

/// The two halves of a sequence log-likelihood.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodParts {
    /// Σ_i log λ_{k_i}(t_i).
    pub event_term: f64,
    /// ∫_0^T Σ_k λ_k(t) dt.
    pub compensator: f64,
}

impl LikelihoodParts {
    pub fn log_likelihood(&self) -> f64 {
        self.event_term - self.compensator
    }
}

/// Mean log-likelihood over a batch and its gradient with respect to the raw
/// parameters.
#[derive(Clone, Debug)]
pub struct BatchGradient {
    pub mean_log_likelihood: f64,
    pub grad: ModelGrad,
    pub num_sequences: usize,
    pub num_events: usize,
}

/// Gradient with respect to the constrained quantities, before the softplus
/// chain rule.
#[derive(Clone, Debug)]
struct EffGrad {
    mu: Vec<f64>,
    w1: Vec<f64>,
    w2: Vec<f64>,
    w2_sum: Vec<f64>,
    kernel: KernelGrad,
}

impl EffGrad {
    fn zeros(model: &EnhpModel) -> Self {
        let (m, d) = (model.num_types(), model.embed_dim());
        Self {
            mu: vec![0.0; m],
            w1: vec![0.0; m * d],
            w2: vec![0.0; m * d],
            w2_sum: vec![0.0; d],
            kernel: KernelGrad::zeros_like(&model.kernel),
        }
    }

    fn add_assign(&mut self, other: &EffGrad) {
        for (a, b) in [
            (&mut self.mu, &other.mu),
            (&mut self.w1, &other.w1),
            (&mut self.w2, &other.w2),
            (&mut self.w2_sum, &other.w2_sum),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.kernel.add_assign(&other.kernel);
    }

    fn into_raw(self, model: &EnhpModel, scale: f64) -> ModelGrad {
        let (m, d) = (model.num_types(), model.embed_dim());
        let mut g = ModelGrad::zeros_like(model);
        for k in 0..m {
            g.mu_raw[k] = scale * self.mu[k] * sigmoid(model.mu_raw[k]);
        }
        let mut w1 = vec![0.0; d * m];
        let mut w2 = vec![0.0; d * m];
        for a in 0..d {
            for k in 0..m {
                w1[a * m + k] = self.w1[k * d + a];
                w2[a * m + k] = self.w2[k * d + a] + self.w2_sum[a];
            }
        }
        if model.tie_embeddings() {
            for i in 0..d * m {
                g.w1_raw[i] = scale * (w1[i] + w2[i]) * sigmoid(model.w1_raw[i]);
            }
        } else {
            for i in 0..d * m {
                g.w1_raw[i] = scale * w1[i] * sigmoid(model.w1_raw[i]);
                g.w2_raw[i] = scale * w2[i] * sigmoid(model.w2_raw[i]);
            }
        }
        g.kernel = self.kernel;
        g.kernel.scale(scale);
        g
    }
}

/// Per-thread buffers.
struct Workspace {
    tape: KernelTape,
    tapes: Vec<KernelTape>,
    sources: Vec<usize>,
    upstream: Vec<f64>,
    scratch: BackwardScratch,
}

impl Workspace {
    fn new(model: &EnhpModel) -> Self {
        let d = model.embed_dim();
        Self {
            tape: KernelTape::new(&model.kernel),
            tapes: Vec::new(),
            sources: Vec::new(),
            upstream: vec![0.0; d * d],
            scratch: BackwardScratch::default(),
        }
    }
}

/// Backpropagates `c · uᵀ K v` through one kernel evaluation, accumulating
/// into the kernel gradient and the two embedding gradients.
#[allow(clippy::too_many_arguments)]
#[inline]
fn backprop_pair(
    model: &EnhpModel,
    tape: &KernelTape,
    c: f64,
    u: &[f64],
    v: &[f64],
    du: &mut [f64],
    dv: &mut [f64],
    kgrad: &mut KernelGrad,
    upstream: &mut [f64],
    scratch: &mut BackwardScratch,
) {
    let d = u.len();
    let k = tape.output();
    for a in 0..d {
        let cu = c * u[a];
        let mut kv = 0.0;
        for b in 0..d {
            upstream[a * d + b] = cu * v[b];
            kv += k[a * d + b] * v[b];
            dv[b] += cu * k[a * d + b];
        }
        du[a] += c * kv;
    }
    model.kernel.backward_into(tape, upstream, kgrad, scratch);
}

fn lag_ok(dt: f64, max_lag: Option<f64>) -> bool {
    max_lag.is_none_or(|lag| dt <= lag)
}

/// Quadrature nodes and weights for one interval `[a, b]`.
fn compensator_points(a: f64, b: f64, cfg: &IntegratorConfig, rng: &mut ChaCha8Rng, points: &mut Vec<(f64, f64)>) {
    let len = b - a;
    points.clear();
    match cfg.method {
        Integrator::Trapezoid => {
            let m = cfg.knots_per_interval + 1;
            let h = len / m as f64;
            for s in 0..=m {
                let u = if s == m { b } else { a + s as f64 * h };
                let w = if s == 0 || s == m { 0.5 * h } else { h };
                points.push((u, w));
            }
        }
        Integrator::MonteCarlo => {
            let w = len / cfg.mc_samples as f64;
            for _ in 0..cfg.mc_samples {
                let u: f64 = rng.random();
                points.push((a + len * u, w));
            }
        }
    }
}

/// Every gap at which the log-likelihood of `seq` evaluates the kernel, in
/// the same arithmetic as the likelihood itself. Monte Carlo draws use
/// stream `index` of `cfg.seed`.
pub fn kernel_inputs(seq: &EventSequence, cfg: &IntegratorConfig, index: usize) -> Vec<f64> {
    let events = &seq.events;
    let mut out = Vec::new();
    for (i, ev) in events.iter().enumerate() {
        for e in (0..i).rev() {
            let dt = ev.t - events[e].t;
            if !lag_ok(dt, cfg.max_lag) {
                break;
            }
            out.push(dt);
        }
    }
    let mut rng = cfg.rng_for(index);
    let mut points = Vec::new();
    for j in 0..events.len() {
        let a = events[j].t;
        let b = events.get(j + 1).map_or(seq.t_end, |e| e.t);
        if !(b - a > 0.0) {
            continue;
        }
        compensator_points(a, b, cfg, &mut rng, &mut points);
        for &(u, _) in &points {
            for e in (0..=j).rev() {
                let dt = u - events[e].t;
                if !lag_ok(dt, cfg.max_lag) {
                    break;
                }
                out.push(dt);
            }
        }
    }
    out
}

fn sequence_terms(
    model: &EnhpModel,
    eff: &Effective,
    seq: &EventSequence,
    cfg: &IntegratorConfig,
    mut grad: Option<&mut EffGrad>,
    ws: &mut Workspace,
    rng: &mut ChaCha8Rng,
) -> Result<LikelihoodParts> {
    let d = eff.dim;
    let events = &seq.events;
    let net = &model.kernel;

    // Event term. History is every earlier event in file order.
    let mut event_term = 0.0;
    for (i, ev) in events.iter().enumerate() {
        let w_target = eff.w2_col(ev.k);
        let mut lam = eff.mu[ev.k];
        ws.sources.clear();
        for e in (0..i).rev() {
            let dt = ev.t - events[e].t;
            if !lag_ok(dt, cfg.max_lag) {
                break;
            }
            let tape = if grad.is_some() {
                let n = ws.sources.len();
                if ws.tapes.len() == n {
                    ws.tapes.push(KernelTape::new(net));
                }
                ws.sources.push(e);
                &mut ws.tapes[n]
            } else {
                &mut ws.tape
            };
            net.forward_into(dt, tape);
            lam += eff.bilinear(eff.w1_col(events[e].k), tape.output(), w_target);
        }
        if !(lam > 0.0) || !lam.is_finite() {
            return Err(Error::NonFinite(format!(
                "intensity {lam} at event {i} of sequence {}",
                seq.seq_id
            )));
        }
        event_term += lam.ln();
        if let Some(g) = grad.as_deref_mut() {
            let c = 1.0 / lam;
            g.mu[ev.k] += c;
            let mut dv = vec![0.0; d];
            for (n, &e) in ws.sources.iter().enumerate() {
                let src = events[e].k;
                backprop_pair(
                    model,
                    &ws.tapes[n],
                    c,
                    eff.w1_col(src),
                    w_target,
                    &mut g.w1[src * d..(src + 1) * d],
                    &mut dv,
                    &mut g.kernel,
                    &mut ws.upstream,
                    &mut ws.scratch,
                );
            }
            for (a, x) in dv.iter().enumerate() {
                g.w2[ev.k * d + a] += x;
            }
        }
    }

    // Compensator. The baseline integrates exactly; the excitation part is
    // integrated interval by interval over knots {0, t_1, .., t_L, T}, where the
    // interval starting at t_j sees events 0..=j.
    let mu_total: f64 = eff.mu.iter().sum();
    let mut compensator = seq.t_end * mu_total;
    if let Some(g) = grad.as_deref_mut() {
        g.mu.iter_mut().for_each(|x| *x -= seq.t_end);
    }
    let mut points: Vec<(f64, f64)> = Vec::new();
    for j in 0..events.len() {
        let a = events[j].t;
        let b = events.get(j + 1).map_or(seq.t_end, |e| e.t);
        let len = b - a;
        if !(len > 0.0) {
            continue;
        }
        compensator_points(a, b, cfg, rng, &mut points);
        for &(u, w) in &points {
            for e in (0..=j).rev() {
                let dt = u - events[e].t;
                if !lag_ok(dt, cfg.max_lag) {
                    break;
                }
                net.forward_into(dt, &mut ws.tape);
                let src = events[e].k;
                compensator += w * eff.bilinear(eff.w1_col(src), ws.tape.output(), &eff.w2_sum);
                if let Some(g) = grad.as_deref_mut() {
                    backprop_pair(
                        model,
                        &ws.tape,
                        -w,
                        eff.w1_col(src),
                        &eff.w2_sum,
                        &mut g.w1[src * d..(src + 1) * d],
                        &mut g.w2_sum,
                        &mut g.kernel,
                        &mut ws.upstream,
                        &mut ws.scratch,
                    );
                }
            }
        }
    }

    if !event_term.is_finite() || !compensator.is_finite() {
        return Err(Error::NonFinite(format!(
            "log-likelihood of sequence {} (event term {event_term}, compensator {compensator})",
            seq.seq_id
        )));
    }
    Ok(LikelihoodParts {
        event_term,
        compensator,
    })
}

fn check_inputs(model: &EnhpModel, seq: &EventSequence, cfg: &IntegratorConfig) -> Result<()> {
    cfg.validate()?;
    model.check_shapes()?;
    seq.validate(Some(model.num_types()))?;
    Ok(())
}

/// Event term and compensator of one sequence. Monte Carlo draws use stream 0
/// of `cfg.seed`.
pub fn log_likelihood_parts(
    model: &EnhpModel,
    seq: &EventSequence,
    cfg: &IntegratorConfig,
) -> Result<LikelihoodParts> {
    check_inputs(model, seq, cfg)?;
    let eff = model.effective();
    let mut ws = Workspace::new(model);
    sequence_terms(model, &eff, seq, cfg, None, &mut ws, &mut cfg.rng_for(0))
}

pub fn log_likelihood(model: &EnhpModel, seq: &EventSequence, cfg: &IntegratorConfig) -> Result<f64> {
    log_likelihood_parts(model, seq, cfg).map(|p| p.log_likelihood())
}

pub fn compensator(model: &EnhpModel, seq: &EventSequence, cfg: &IntegratorConfig) -> Result<f64> {
    log_likelihood_parts(model, seq, cfg).map(|p| p.compensator)
}

/// Per-sequence log-likelihoods, in input order. Sequence `i` draws from
/// stream `i`.
pub fn log_likelihood_batch(
    model: &EnhpModel,
    seqs: &[&EventSequence],
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    model.check_shapes()?;
    for s in seqs {
        s.validate(Some(model.num_types()))?;
    }
    let eff = model.effective();
    seqs.par_iter()
        .enumerate()
        .map_init(
            || Workspace::new(model),
            |ws, (i, seq)| {
                sequence_terms(model, &eff, seq, cfg, None, ws, &mut cfg.rng_for(i))
                    .map(|p| p.log_likelihood())
            },
        )
        .collect()
}

/// Mean log-likelihood of a batch and its exact gradient.
pub fn log_likelihood_grad(
    model: &EnhpModel,
    seqs: &[&EventSequence],
    cfg: &IntegratorConfig,
    reduction: Reduction,
) -> Result<BatchGradient> {
    if seqs.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    cfg.validate()?;
    model.check_shapes()?;
    for s in seqs {
        s.validate(Some(model.num_types()))?;
    }
    let eff = model.effective();
    let per_seq = |ws: &mut Workspace, (i, seq): (usize, &&EventSequence)| -> Result<(f64, EffGrad)> {
        let mut g = EffGrad::zeros(model);
        let parts = sequence_terms(model, &eff, seq, cfg, Some(&mut g), ws, &mut cfg.rng_for(i))?;
        Ok((parts.log_likelihood(), g))
    };

    let (total, sum) = match reduction {
        Reduction::Ordered => {
            let results: Vec<(f64, EffGrad)> = seqs
                .par_iter()
                .enumerate()
                .map_init(|| Workspace::new(model), per_seq)
                .collect::<Result<_>>()?;
            let mut total = 0.0;
            let mut sum = EffGrad::zeros(model);
            for (ll, g) in &results {
                total += ll;
                sum.add_assign(g);
            }
            (total, sum)
        }
        Reduction::Unordered => seqs
            .par_iter()
            .enumerate()
            .map_init(|| Workspace::new(model), per_seq)
            .try_reduce(
                || (0.0, EffGrad::zeros(model)),
                |mut a, b| {
                    a.0 += b.0;
                    a.1.add_assign(&b.1);
                    Ok(a)
                },
            )?,
    };

    let n = seqs.len() as f64;
    Ok(BatchGradient {
        mean_log_likelihood: total / n,
        grad: sum.into_raw(model, 1.0 / n),
        num_sequences: seqs.len(),
        num_events: seqs.iter().map(|s| s.len()).sum(),
    })
}
