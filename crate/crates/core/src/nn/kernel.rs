use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{softplus_inverse, softplus_with_grad};
use crate::error::{Error, Result};

/// Scalar transform applied to the time gap before the hidden layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputTransform {
    Identity,
    #[default]
    Log1p,
}

impl InputTransform {
    #[inline]
    pub fn apply(self, dt: f64) -> f64 {
        match self {
            InputTransform::Identity => dt,
            InputTransform::Log1p => dt.ln_1p(),
        }
    }

    #[inline]
    pub fn derivative(self, dt: f64) -> f64 {
        match self {
            InputTransform::Identity => 1.0,
            InputTransform::Log1p => 1.0 / (1.0 + dt),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InputTransform::Identity => "identity",
            InputTransform::Log1p => "log1p",
        }
    }
}

impl std::str::FromStr for InputTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(InputTransform::Identity),
            "log1p" => Ok(InputTransform::Log1p),
            other => Err(Error::InvalidArgument(format!(
                "unknown input transform {other:?} (expected identity or log1p)"
            ))),
        }
    }
}

/// One-hidden-layer network mapping a gap `dt >= 0` to a nonnegative D×D matrix:
///
/// `K(dt) = softplus(W_o · relu(w_h · g(dt) + b_h) + b_o)`, reshaped row-major.
///
/// `out_w` is stored row-major as (D², H); output row `r = a * D + b` is entry
/// `K[a][b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelNet {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub input_transform: InputTransform,
    pub hidden_w: Vec<f64>,
    pub hidden_b: Vec<f64>,
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
}

/// Forward intermediates for one `dt`.
#[derive(Clone, Debug)]
pub struct KernelTape {
    dt: f64,
    input: f64,
    hidden: Vec<f64>,
    active: Vec<u32>,
    out: Vec<f64>,
    out_grad: Vec<f64>,
}

impl KernelTape {
    pub fn new(net: &KernelNet) -> Self {
        let outputs = net.embed_dim * net.embed_dim;
        Self {
            dt: 0.0,
            input: 0.0,
            hidden: vec![0.0; net.hidden_dim],
            active: Vec::with_capacity(net.hidden_dim),
            out: vec![0.0; outputs],
            out_grad: vec![0.0; outputs],
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// K(dt), row-major D×D.
    pub fn output(&self) -> &[f64] {
        &self.out
    }
}

/// Gradient buffers shaped like a [`KernelNet`]'s parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelGrad {
    pub hidden_w: Vec<f64>,
    pub hidden_b: Vec<f64>,
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
}

impl KernelGrad {
    pub fn zeros_like(net: &KernelNet) -> Self {
        Self {
            hidden_w: vec![0.0; net.hidden_w.len()],
            hidden_b: vec![0.0; net.hidden_b.len()],
            out_w: vec![0.0; net.out_w.len()],
            out_b: vec![0.0; net.out_b.len()],
        }
    }

    pub fn add_assign(&mut self, other: &KernelGrad) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    fn tensors(&self) -> [&Vec<f64>; 4] {
        [&self.hidden_w, &self.hidden_b, &self.out_w, &self.out_b]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.hidden_w,
            &mut self.hidden_b,
            &mut self.out_w,
            &mut self.out_b,
        ]
    }
}

/// Reusable buffer for [`KernelNet::backward_into`].
#[derive(Clone, Debug, Default)]
pub struct BackwardScratch {
    raw_grad: Vec<f64>,
    hidden_grad: Vec<f64>,
}

impl KernelNet {
    pub fn zeros(embed_dim: usize, hidden_dim: usize, input_transform: InputTransform) -> Self {
        let outputs = embed_dim * embed_dim;
        Self {
            embed_dim,
            hidden_dim,
            input_transform,
            hidden_w: vec![0.0; hidden_dim],
            hidden_b: vec![0.0; hidden_dim],
            out_w: vec![0.0; outputs * hidden_dim],
            out_b: vec![0.0; outputs],
        }
    }

    /// Glorot-uniform weights, zero hidden biases, output biases at
    /// softplus⁻¹(0.1) so every kernel entry starts small but nonzero.
    pub fn init<R: Rng + ?Sized>(
        embed_dim: usize,
        hidden_dim: usize,
        input_transform: InputTransform,
        rng: &mut R,
    ) -> Self {
        let mut net = Self::zeros(embed_dim, hidden_dim, input_transform);
        let outputs = embed_dim * embed_dim;
        let a_hidden = (6.0 / (1 + hidden_dim) as f64).sqrt();
        let a_out = (6.0 / (hidden_dim + outputs) as f64).sqrt();
        for w in &mut net.hidden_w {
            *w = rng.random_range(-a_hidden..a_hidden);
        }
        for w in &mut net.out_w {
            *w = rng.random_range(-a_out..a_out);
        }
        net.out_b.fill(softplus_inverse(0.1));
        net
    }

    pub fn num_outputs(&self) -> usize {
        self.embed_dim * self.embed_dim
    }

    pub fn num_params(&self) -> usize {
        self.hidden_w.len() + self.hidden_b.len() + self.out_w.len() + self.out_b.len()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let (d, h) = (self.embed_dim, self.hidden_dim);
        let expect = [
            ("kernel.hidden_w", self.hidden_w.len(), h),
            ("kernel.hidden_b", self.hidden_b.len(), h),
            ("kernel.out_w", self.out_w.len(), d * d * h),
            ("kernel.out_b", self.out_b.len(), d * d),
        ];
        for (name, found, expected) in expect {
            if found != expected {
                return Err(Error::ShapeMismatch {
                    name: name.into(),
                    expected: vec![expected],
                    found: vec![found],
                });
            }
        }
        Ok(())
    }

    /// Evaluates K(dt) and records what the backward pass needs.
    pub fn forward(&self, dt: f64) -> Result<KernelTape> {
        if !dt.is_finite() || dt < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "kernel input must be finite and >= 0, got {dt}"
            )));
        }
        let mut tape = KernelTape::new(self);
        self.forward_into(dt, &mut tape);
        Ok(tape)
    }

    /// Unchecked forward pass into a tape built for this net.
    #[inline]
    pub fn forward_into(&self, dt: f64, tape: &mut KernelTape) {
        let h_dim = self.hidden_dim;
        let x = self.input_transform.apply(dt);
        tape.dt = dt;
        tape.input = x;
        tape.active.clear();
        for h in 0..h_dim {
            let z = self.hidden_w[h] * x + self.hidden_b[h];
            if z > 0.0 {
                tape.hidden[h] = z;
                tape.active.push(h as u32);
            } else {
                tape.hidden[h] = 0.0;
            }
        }
        for (r, (out, og)) in tape.out.iter_mut().zip(tape.out_grad.iter_mut()).enumerate() {
            let row = &self.out_w[r * h_dim..(r + 1) * h_dim];
            let mut raw = self.out_b[r];
            for &h in &tape.active {
                let h = h as usize;
                raw += row[h] * tape.hidden[h];
            }
            let (sp, sig) = softplus_with_grad(raw);
            *out = sp;
            *og = sig;
        }
    }

    /// Exact gradients of `Σ upstream ⊙ K(dt)` with respect to every parameter
    /// and to `dt`.
    pub fn backward(&self, tape: &KernelTape, upstream: &[f64]) -> Result<(KernelGrad, f64)> {
        if upstream.len() != self.num_outputs() {
            return Err(Error::ShapeMismatch {
                name: "upstream".into(),
                expected: vec![self.embed_dim, self.embed_dim],
                found: vec![upstream.len()],
            });
        }
        let mut grad = KernelGrad::zeros_like(self);
        let mut scratch = BackwardScratch::default();
        let d_dt = self.backward_into(tape, upstream, &mut grad, &mut scratch);
        Ok((grad, d_dt))
    }

    /// Accumulates parameter gradients into `grad`; returns d/d(dt).
    #[inline]
    pub fn backward_into(
        &self,
        tape: &KernelTape,
        upstream: &[f64],
        grad: &mut KernelGrad,
        scratch: &mut BackwardScratch,
    ) -> f64 {
        let h_dim = self.hidden_dim;
        scratch.raw_grad.clear();
        scratch
            .raw_grad
            .extend(upstream.iter().zip(&tape.out_grad).map(|(u, s)| u * s));
        scratch.hidden_grad.clear();
        scratch.hidden_grad.resize(h_dim, 0.0);

        for (r, &g) in scratch.raw_grad.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.out_b[r] += g;
            let base = r * h_dim;
            let w_row = &self.out_w[base..base + h_dim];
            let gw_row = &mut grad.out_w[base..base + h_dim];
            for &h in &tape.active {
                let h = h as usize;
                gw_row[h] += g * tape.hidden[h];
                scratch.hidden_grad[h] += w_row[h] * g;
            }
        }

        let mut d_input = 0.0;
        for &h in &tape.active {
            let h = h as usize;
            let dz = scratch.hidden_grad[h];
            grad.hidden_b[h] += dz;
            grad.hidden_w[h] += dz * tape.input;
            d_input += dz * self.hidden_w[h];
        }
        d_input * self.input_transform.derivative(tape.dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{sigmoid, softplus};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_is_ln2() {
        let net = KernelNet::zeros(3, 5, InputTransform::Identity);
        for dt in [0.0, 0.5, 17.0] {
            let tape = net.forward(dt).unwrap();
            assert!(tape
                .output()
                .iter()
                .all(|&v| (v - std::f64::consts::LN_2).abs() < 1e-15));
        }
    }

    /// D = H = 1 with relu(dt) feeding a weight of -1: K(dt) = softplus(-dt).
    fn decreasing_net() -> KernelNet {
        let mut net = KernelNet::zeros(1, 1, InputTransform::Identity);
        net.hidden_w[0] = 1.0;
        net.out_w[0] = -1.0;
        net
    }

    #[test]
    fn constructed_monotone_case() {
        let net = decreasing_net();
        let mut prev = f64::INFINITY;
        for i in 1..50 {
            let dt = i as f64 * 0.2;
            let tape = net.forward(dt).unwrap();
            let k = tape.output()[0];
            assert!((k - softplus(-dt)).abs() < 1e-15);
            assert!(k < prev);
            prev = k;
            let (_, d_dt) = net.backward(&tape, &[1.0]).unwrap();
            assert!((d_dt + sigmoid(-dt)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_upstream_zero_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = KernelNet::init(2, 6, InputTransform::Log1p, &mut rng);
        let tape = net.forward(0.8).unwrap();
        let (g, d_dt) = net.backward(&tape, &[0.0; 4]).unwrap();
        assert_eq!(g, KernelGrad::zeros_like(&net));
        assert_eq!(d_dt, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let net = KernelNet::zeros(2, 2, InputTransform::Identity);
        assert!(net.forward(-1.0).is_err());
        assert!(net.forward(f64::NAN).is_err());
        let tape = net.forward(1.0).unwrap();
        assert!(matches!(
            net.backward(&tape, &[1.0; 3]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn init_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = KernelNet::init(3, 64, InputTransform::Log1p, &mut rng);
        net.check_shapes().unwrap();
        assert!(net.hidden_b.iter().all(|&b| b == 0.0));
        assert!(net.out_b.iter().all(|&b| (softplus(b) - 0.1).abs() < 1e-12));
        let a = (6.0f64 / 65.0).sqrt();
        assert!(net.hidden_w.iter().all(|w| w.abs() <= a));
    }
}
