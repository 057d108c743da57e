//! The embedded neural Hawkes process.
//!
//! The impact of a type-`i` event on the type-`j` intensity after a gap `dt` is
//! `φ_ij(dt) = w1_iᵀ K(dt) w2_j`, with `w1_i` and `w2_j` the softplus-constrained
//! columns of the input and output embeddings and `K` the kernel network.

mod checkpoint;
mod likelihood;

pub use checkpoint::{load_checkpoint, load_model, save_checkpoint, save_model, Checkpoint, FORMAT_VERSION};
pub use likelihood::{
    compensator, kernel_inputs, log_likelihood, log_likelihood_batch, log_likelihood_grad, log_likelihood_parts,
    BatchGradient, Integrator, IntegratorConfig, LikelihoodParts, Reduction,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Event, EventSequence};
use crate::error::{Error, Result};
use crate::nn::{softplus, softplus_inverse, InputTransform, KernelGrad, KernelNet, KernelTape, Parameters};

/// Shape and architecture choices for a new model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_types: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub input_transform: InputTransform,
    pub tie_embeddings: bool,
}

impl ModelConfig {
    pub fn new(num_types: usize, embed_dim: usize) -> Self {
        Self {
            num_types,
            embed_dim,
            hidden_dim: 64,
            input_transform: InputTransform::Log1p,
            tie_embeddings: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_types == 0 || self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config(format!(
                "num_types, embed_dim and hidden_dim must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// All trainable parameters are stored unconstrained; softplus is applied where
/// they are used.
#[derive(Clone, Debug, PartialEq)]
pub struct EnhpModel {
    num_types: usize,
    embed_dim: usize,
    tie_embeddings: bool,
    /// Length M.
    pub mu_raw: Vec<f64>,
    /// D×M, row-major (`[d * M + k]`).
    pub w1_raw: Vec<f64>,
    /// D×M, row-major; empty when embeddings are tied.
    pub w2_raw: Vec<f64>,
    pub kernel: KernelNet,
}

impl EnhpModel {
    /// Every raw parameter zero: μ = ln 2, all embedding entries ln 2, K ≡ ln 2.
    pub fn zeros(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let (m, d) = (cfg.num_types, cfg.embed_dim);
        Ok(Self {
            num_types: m,
            embed_dim: d,
            tie_embeddings: cfg.tie_embeddings,
            mu_raw: vec![0.0; m],
            w1_raw: vec![0.0; d * m],
            w2_raw: if cfg.tie_embeddings { Vec::new() } else { vec![0.0; d * m] },
            kernel: KernelNet::zeros(d, cfg.hidden_dim, cfg.input_transform),
        })
    }

    /// Random initialization. Base intensities start at 0.1; embedding entries
    /// are centered so that each effective entry is about 1/D, which keeps the
    /// initial impacts on the scale of a single kernel entry.
    pub fn init<R: Rng + ?Sized>(cfg: ModelConfig, rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(cfg)?;
        model.kernel = KernelNet::init(cfg.embed_dim, cfg.hidden_dim, cfg.input_transform, rng);
        model.mu_raw.fill(softplus_inverse(0.1));
        let center = softplus_inverse(1.0 / cfg.embed_dim as f64);
        let spread = 0.5;
        for w in model.w1_raw.iter_mut().chain(model.w2_raw.iter_mut()) {
            *w = center + rng.random_range(-spread..spread);
        }
        Ok(model)
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            num_types: self.num_types,
            embed_dim: self.embed_dim,
            hidden_dim: self.kernel.hidden_dim,
            input_transform: self.kernel.input_transform,
            tie_embeddings: self.tie_embeddings,
        }
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn tie_embeddings(&self) -> bool {
        self.tie_embeddings
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let (m, d) = (self.num_types, self.embed_dim);
        let w2_len = if self.tie_embeddings { 0 } else { d * m };
        for (name, found, expected) in [
            ("mu_raw", self.mu_raw.len(), m),
            ("w1_raw", self.w1_raw.len(), d * m),
            ("w2_raw", self.w2_raw.len(), w2_len),
        ] {
            if found != expected {
                return Err(Error::ShapeMismatch {
                    name: name.into(),
                    expected: vec![expected],
                    found: vec![found],
                });
            }
        }
        if self.kernel.embed_dim != d {
            return Err(Error::ShapeMismatch {
                name: "kernel".into(),
                expected: vec![d],
                found: vec![self.kernel.embed_dim],
            });
        }
        self.kernel.check_shapes()
    }

    /// Effective (softplus-constrained) base intensities.
    pub fn base_intensities(&self) -> Vec<f64> {
        self.mu_raw.iter().map(|&x| softplus(x)).collect()
    }

    /// Effective input embedding as a D×M row-major matrix.
    pub fn input_embedding(&self) -> Vec<f64> {
        self.w1_raw.iter().map(|&x| softplus(x)).collect()
    }

    /// Effective output embedding as a D×M row-major matrix.
    pub fn output_embedding(&self) -> Vec<f64> {
        let raw = if self.tie_embeddings { &self.w1_raw } else { &self.w2_raw };
        raw.iter().map(|&x| softplus(x)).collect()
    }

    pub(crate) fn effective(&self) -> Effective {
        let (m, d) = (self.num_types, self.embed_dim);
        let w1 = self.input_embedding();
        let w2 = self.output_embedding();
        let mut eff = Effective {
            dim: d,
            mu: self.base_intensities(),
            w1: vec![0.0; m * d],
            w2: vec![0.0; m * d],
            w2_sum: vec![0.0; d],
        };
        for a in 0..d {
            for k in 0..m {
                eff.w1[k * d + a] = w1[a * m + k];
                eff.w2[k * d + a] = w2[a * m + k];
                eff.w2_sum[a] += w2[a * m + k];
            }
        }
        eff
    }

    fn check_type(&self, k: usize) -> Result<()> {
        if k >= self.num_types {
            return Err(Error::InvalidArgument(format!(
                "event type {k} out of range (num_types = {})",
                self.num_types
            )));
        }
        Ok(())
    }

    /// φ_ij(dt) for a type-`i` source and a type-`j` target.
    pub fn impact(&self, i: usize, j: usize, dt: f64) -> Result<f64> {
        self.check_type(i)?;
        self.check_type(j)?;
        let tape = self.kernel.forward(dt)?;
        let eff = self.effective();
        Ok(eff.bilinear(eff.w1_col(i), tape.output(), eff.w2_col(j)))
    }

    /// λ_k(t) given the events of `seq` strictly before `t`.
    pub fn intensity(&self, seq: &EventSequence, t: f64, k: usize) -> Result<f64> {
        self.check_type(k)?;
        let history = strict_history(seq, t)?;
        Ok(self.intensities_after(history, t)?[k])
    }

    /// λ(t) = Σ_k λ_k(t) given the events of `seq` strictly before `t`.
    pub fn total_intensity(&self, seq: &EventSequence, t: f64) -> Result<f64> {
        let history = strict_history(seq, t)?;
        Ok(self.intensities_after(history, t)?.iter().sum())
    }

    /// Every λ_k(t) with all of `history` counted as past (each event must have
    /// `t_e <= t`). Events with `t_e == t` contribute φ(0), which is how
    /// simultaneous events earlier in file order are treated.
    pub fn intensities_after(&self, history: &[Event], t: f64) -> Result<Vec<f64>> {
        if !t.is_finite() {
            return Err(Error::InvalidArgument(format!("query time {t} is not finite")));
        }
        let eff = self.effective();
        let mut tape = KernelTape::new(&self.kernel);
        let mut out = eff.mu.clone();
        for ev in history {
            self.check_type(ev.k)?;
            let dt = t - ev.t;
            if !(dt >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "history event at {} is after query time {t}",
                    ev.t
                )));
            }
            self.kernel.forward_into(dt, &mut tape);
            let left = eff.left_product(eff.w1_col(ev.k), tape.output());
            for (j, lam) in out.iter_mut().enumerate() {
                *lam += dot(&left, eff.w2_col(j));
            }
        }
        Ok(out)
    }
}

/// Anything that can report per-type intensities given a history.
pub trait IntensityModel: Sync {
    fn num_types(&self) -> usize;

    /// Every λ_k(t) with all of `history` counted as past (`t_e <= t`).
    fn intensities_after(&self, history: &[Event], t: f64) -> Result<Vec<f64>>;

    /// Σ_k λ_k at each of `times`, all of which are at or after the last
    /// history event.
    fn total_intensity_grid(&self, history: &[Event], times: &[f64]) -> Result<Vec<f64>> {
        times
            .iter()
            .map(|&t| Ok(self.intensities_after(history, t)?.iter().sum()))
            .collect()
    }

    fn sequence_log_likelihood(&self, seq: &EventSequence, cfg: &IntegratorConfig) -> Result<f64>;
}

impl IntensityModel for EnhpModel {
    fn num_types(&self) -> usize {
        self.num_types
    }

    fn intensities_after(&self, history: &[Event], t: f64) -> Result<Vec<f64>> {
        EnhpModel::intensities_after(self, history, t)
    }

    fn total_intensity_grid(&self, history: &[Event], times: &[f64]) -> Result<Vec<f64>> {
        let eff = self.effective();
        let mu_total: f64 = eff.mu.iter().sum();
        let mut out = vec![mu_total; times.len()];
        let mut tape = KernelTape::new(&self.kernel);
        for ev in history {
            self.check_type(ev.k)?;
            let w1 = eff.w1_col(ev.k);
            for (lam, &t) in out.iter_mut().zip(times) {
                let dt = t - ev.t;
                if !(dt >= 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "history event at {} is after query time {t}",
                        ev.t
                    )));
                }
                self.kernel.forward_into(dt, &mut tape);
                *lam += eff.bilinear(w1, tape.output(), &eff.w2_sum);
            }
        }
        Ok(out)
    }

    fn sequence_log_likelihood(&self, seq: &EventSequence, cfg: &IntegratorConfig) -> Result<f64> {
        log_likelihood(self, seq, cfg)
    }
}

pub(crate) fn strict_history(seq: &EventSequence, t: f64) -> Result<&[Event]> {
    if !(t >= 0.0 && t <= seq.t_end) {
        return Err(Error::InvalidArgument(format!(
            "query time {t} outside the observation window [0, {}]",
            seq.t_end
        )));
    }
    let n = seq.events.partition_point(|e| e.t < t);
    Ok(&seq.events[..n])
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Constrained parameters laid out by type for fast column access.
#[derive(Clone, Debug)]
pub(crate) struct Effective {
    pub dim: usize,
    pub mu: Vec<f64>,
    /// M×D: row k is the input embedding of type k.
    pub w1: Vec<f64>,
    /// M×D: row k is the output embedding of type k.
    pub w2: Vec<f64>,
    /// Σ_k of the output embeddings; contracts K against the total intensity.
    pub w2_sum: Vec<f64>,
}

impl Effective {
    #[inline]
    pub fn w1_col(&self, k: usize) -> &[f64] {
        &self.w1[k * self.dim..(k + 1) * self.dim]
    }

    #[inline]
    pub fn w2_col(&self, k: usize) -> &[f64] {
        &self.w2[k * self.dim..(k + 1) * self.dim]
    }

    /// uᵀ K v for a row-major D×D `k`.
    #[inline]
    pub fn bilinear(&self, u: &[f64], k: &[f64], v: &[f64]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for a in 0..d {
            if u[a] == 0.0 {
                continue;
            }
            acc += u[a] * dot(&k[a * d..(a + 1) * d], v);
        }
        acc
    }

    /// uᵀ K as a length-D vector.
    pub fn left_product(&self, u: &[f64], k: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for a in 0..d {
            for b in 0..d {
                out[b] += u[a] * k[a * d + b];
            }
        }
        out
    }
}

/// Gradients with the same layout and names as [`EnhpModel`]'s parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrad {
    pub mu_raw: Vec<f64>,
    pub w1_raw: Vec<f64>,
    pub w2_raw: Vec<f64>,
    pub kernel: KernelGrad,
}

impl ModelGrad {
    pub fn zeros_like(model: &EnhpModel) -> Self {
        Self {
            mu_raw: vec![0.0; model.mu_raw.len()],
            w1_raw: vec![0.0; model.w1_raw.len()],
            w2_raw: vec![0.0; model.w2_raw.len()],
            kernel: KernelGrad::zeros_like(&model.kernel),
        }
    }

    /// Flattened in [`Parameters::tensors`] order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

fn model_tensors<'a>(
    mu: &'a [f64],
    w1: &'a [f64],
    w2: &'a [f64],
    k: [&'a [f64]; 4],
) -> Vec<(&'static str, &'a [f64])> {
    vec![
        ("mu_raw", mu),
        ("w1_raw", w1),
        ("w2_raw", w2),
        ("kernel.hidden_w", k[0]),
        ("kernel.hidden_b", k[1]),
        ("kernel.out_w", k[2]),
        ("kernel.out_b", k[3]),
    ]
}

impl Parameters for EnhpModel {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let k = &self.kernel;
        model_tensors(
            &self.mu_raw,
            &self.w1_raw,
            &self.w2_raw,
            [&k.hidden_w, &k.hidden_b, &k.out_w, &k.out_b],
        )
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let k = &mut self.kernel;
        vec![
            ("mu_raw", &mut self.mu_raw[..]),
            ("w1_raw", &mut self.w1_raw[..]),
            ("w2_raw", &mut self.w2_raw[..]),
            ("kernel.hidden_w", &mut k.hidden_w[..]),
            ("kernel.hidden_b", &mut k.hidden_b[..]),
            ("kernel.out_w", &mut k.out_w[..]),
            ("kernel.out_b", &mut k.out_b[..]),
        ]
    }
}

impl Parameters for ModelGrad {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let k = &self.kernel;
        model_tensors(
            &self.mu_raw,
            &self.w1_raw,
            &self.w2_raw,
            [&k.hidden_w, &k.hidden_b, &k.out_w, &k.out_b],
        )
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let k = &mut self.kernel;
        vec![
            ("mu_raw", &mut self.mu_raw[..]),
            ("w1_raw", &mut self.w1_raw[..]),
            ("w2_raw", &mut self.w2_raw[..]),
            ("kernel.hidden_w", &mut k.hidden_w[..]),
            ("kernel.hidden_b", &mut k.hidden_b[..]),
            ("kernel.out_w", &mut k.out_w[..]),
            ("kernel.out_b", &mut k.out_b[..]),
        ]
    }
}
