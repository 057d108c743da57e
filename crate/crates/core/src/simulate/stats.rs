use serde::Serialize;

use super::HawkesGroundTruth;
use crate::data::EventSequence;

/// Compensator increments Λ(t_i) − Λ(t_{i−1}) between consecutive events
/// (with Λ(t_0) = 0). Under the true model they are i.i.d. Exp(1).
pub fn rescaled_gaps(gt: &HawkesGroundTruth, seq: &EventSequence) -> Vec<f64> {
    let mut out = Vec::with_capacity(seq.len());
    let mut prev = 0.0;
    for ev in &seq.events {
        let now = gt.compensator(&seq.events, ev.t);
        out.push(now - prev);
        prev = now;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov–Smirnov test against the unit exponential, with the
/// asymptotic Kolmogorov distribution (Stephens' small-sample correction).
pub fn ks_unit_exponential(samples: &[f64]) -> KsResult {
    let n = samples.len();
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = -(-x.max(0.0)).exp_m1();
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    let sqrt_n = nf.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    KsResult {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
        n,
    }
}

/// P(K > λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²λ²).
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Event;
    use crate::simulate::ParametricKernel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kolmogorov_quantiles() {
        // classical critical values: P(K > 1.358) ≈ 0.05, P(K > 1.628) ≈ 0.01
        assert!((kolmogorov_survival(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_survival(1.628) - 0.01).abs() < 5e-4);
    }

    #[test]
    fn accepts_exponential_and_rejects_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let exp: Vec<f64> = (0..5000).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        assert!(ks_unit_exponential(&exp).p_value > 0.01);
        let uni: Vec<f64> = (0..5000).map(|_| rng.random::<f64>() * 2.0).collect();
        assert!(ks_unit_exponential(&uni).p_value < 1e-6);
    }

    #[test]
    fn poisson_gaps_are_scaled_times() {
        let gt = HawkesGroundTruth::new(vec![2.0], vec![vec![ParametricKernel::Zero]]).unwrap();
        let seq = EventSequence::new("p", 5.0, vec![Event::new(1.0, 0), Event::new(1.5, 0)]);
        let g = rescaled_gaps(&gt, &seq);
        assert!((g[0] - 2.0).abs() < 1e-15 && (g[1] - 1.0).abs() < 1e-15);
    }
}
