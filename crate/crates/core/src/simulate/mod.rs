//! Ground-truth multivariate Hawkes processes with closed-form kernels, and
//! Ogata thinning to sample from them.

mod kernel;
mod stats;
mod thinning;

pub use kernel::ParametricKernel;
pub use stats::{ks_unit_exponential, rescaled_gaps, KsResult};
pub use thinning::{simulate, SimConfig, SimOutput};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Event, EventSequence};
use crate::error::{Error, Result};
use crate::model::{strict_history, IntegratorConfig, IntensityModel};

/// Ground-truth spec for the three-type simulation study: a step, a cosine and
/// two exponential kernels.
pub const THREE_TYPE_SPEC: &str = include_str!("../../data/ground_truth_3type.json");

/// A multivariate Hawkes process with parametric kernels. `kernels[i][j]` is the
/// impact of a type-`i` event on the type-`j` intensity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HawkesGroundTruth {
    #[serde(rename = "M")]
    pub num_types: usize,
    pub mu: Vec<f64>,
    pub kernels: Vec<Vec<ParametricKernel>>,
}

impl HawkesGroundTruth {
    pub fn new(mu: Vec<f64>, kernels: Vec<Vec<ParametricKernel>>) -> Result<Self> {
        let gt = Self {
            num_types: mu.len(),
            mu,
            kernels,
        };
        gt.validate()?;
        Ok(gt)
    }

    /// The bundled three-type process.
    pub fn three_type() -> Self {
        Self::from_json_str(THREE_TYPE_SPEC).expect("bundled spec is valid")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let gt: Self = serde_json::from_str(text)?;
        gt.validate()?;
        Ok(gt)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_types;
        if m == 0 {
            return Err(Error::Config("ground truth needs at least one type".into()));
        }
        if self.mu.len() != m || self.kernels.len() != m || self.kernels.iter().any(|r| r.len() != m) {
            return Err(Error::Config(format!(
                "ground truth with M = {m} needs {m} baselines and an {m}×{m} kernel matrix"
            )));
        }
        if let Some(k) = self.mu.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Config(format!("baseline mu[{k}] = {} must be > 0", self.mu[k])));
        }
        for row in &self.kernels {
            for k in row {
                k.validate()?;
            }
        }
        Ok(())
    }

    pub fn impact(&self, i: usize, j: usize, dt: f64) -> f64 {
        self.kernels[i][j].eval(dt)
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

    /// λ_k(t) from the events of `seq` strictly before `t`.
    pub fn intensity(&self, seq: &EventSequence, t: f64, k: usize) -> Result<f64> {
        self.check_type(k)?;
        let history = strict_history(seq, t)?;
        Ok(self.intensities_after(history, t)?[k])
    }

    /// Every λ_k(t) with all of `history` counted as past.
    pub fn intensities_after(&self, history: &[Event], t: f64) -> Result<Vec<f64>> {
        let mut out = self.mu.clone();
        for ev in history {
            self.check_type(ev.k)?;
            let dt = t - ev.t;
            if !(dt >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "history event at {} is after query time {t}",
                    ev.t
                )));
            }
            for (j, lam) in out.iter_mut().enumerate() {
                *lam += self.kernels[ev.k][j].eval(dt);
            }
        }
        Ok(out)
    }

    /// Λ(t) = ∫_0^t Σ_k λ_k(s) ds, counting every event of `history` with
    /// `t_e < t`.
    pub fn compensator(&self, history: &[Event], t: f64) -> f64 {
        let mut total = t * self.mu.iter().sum::<f64>();
        for ev in history.iter().take_while(|e| e.t < t) {
            total += self.kernels[ev.k].iter().map(|k| k.integral(t - ev.t)).sum::<f64>();
        }
        total
    }

    /// Exact log-likelihood of a sequence on `[0, t_end]`. Event `i` sees every
    /// earlier event in file order, matching the fitted model.
    pub fn log_likelihood(&self, seq: &EventSequence) -> Result<f64> {
        seq.validate(Some(self.num_types))?;
        let mut ll = 0.0;
        for (i, ev) in seq.events.iter().enumerate() {
            let mut lam = self.mu[ev.k];
            for e in &seq.events[..i] {
                lam += self.kernels[e.k][ev.k].eval(ev.t - e.t);
            }
            ll += lam.ln();
        }
        let comp = seq.t_end * self.mu.iter().sum::<f64>()
            + seq
                .events
                .iter()
                .map(|e| self.kernels[e.k].iter().map(|k| k.integral(seq.t_end - e.t)).sum::<f64>())
                .sum::<f64>();
        Ok(ll - comp)
    }

    /// `B[i][j] = ∫_0^∞ φ_ij`, the expected number of type-`j` children of a
    /// type-`i` event.
    pub fn branching_matrix(&self) -> Vec<Vec<f64>> {
        self.kernels
            .iter()
            .map(|row| row.iter().map(|k| k.total_integral()).collect())
            .collect()
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.branching_matrix())
    }

    /// Stationary per-type rates `r = μ + Bᵀ r`. Meaningful only when the
    /// spectral radius is below one.
    pub fn stationary_rates(&self) -> Result<Vec<f64>> {
        let b = self.branching_matrix();
        let m = self.num_types;
        let mut a = vec![vec![0.0; m]; m];
        for j in 0..m {
            for i in 0..m {
                a[j][i] = if i == j { 1.0 } else { 0.0 } - b[i][j];
            }
        }
        solve_linear(a, self.mu.clone())
    }
}

impl IntensityModel for HawkesGroundTruth {
    fn num_types(&self) -> usize {
        self.num_types
    }

    fn intensities_after(&self, history: &[Event], t: f64) -> Result<Vec<f64>> {
        HawkesGroundTruth::intensities_after(self, history, t)
    }

    /// Exact; the integrator settings are not used.
    fn sequence_log_likelihood(&self, seq: &EventSequence, _cfg: &IntegratorConfig) -> Result<f64> {
        self.log_likelihood(seq)
    }
}

/// Largest eigenvalue modulus of a nonnegative square matrix, by power
/// iteration on `B + I` (which shares the Perron vector and is aperiodic),
/// iterated until successive estimates agree to 1e-10.
pub fn spectral_radius(b: &[Vec<f64>]) -> f64 {
    let m = b.len();
    if m == 0 || b.iter().flatten().all(|&x| x == 0.0) {
        return 0.0;
    }
    let mut x = vec![1.0; m];
    let mut estimate = f64::NAN;
    for _ in 0..1_000_000 {
        let mut y = x.clone();
        for i in 0..m {
            for j in 0..m {
                y[i] += b[i][j] * x[j];
            }
        }
        let norm = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let next = norm / x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        x = y.iter().map(|v| v / norm).collect();
        if (next - estimate).abs() < 1e-10 {
            return (next - 1.0).max(0.0);
        }
        estimate = next;
    }
    (estimate - 1.0).max(0.0)
}

/// Gaussian elimination with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .expect("nonempty");
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::NonFinite("singular system I - B".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}
