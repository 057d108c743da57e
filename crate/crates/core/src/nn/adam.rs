use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named flat tensors that an optimizer can walk in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<(&'static str, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: Parameters + ?Sized>(config: AdamConfig, params: &P) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        Self {
            config,
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected descent step: `p -= lr · m̂ / (√v̂ + ε)`.
    ///
    /// Nothing is modified if any gradient entry is non-finite.
    pub fn step<P, G>(&mut self, params: &mut P, grads: &G) -> Result<()>
    where
        P: Parameters + ?Sized,
        G: Parameters + ?Sized,
    {
        let grads = grads.tensors();
        let mut params = params.tensors_mut();
        if grads.len() != params.len() || grads.len() != self.first.len() {
            return Err(Error::InvalidArgument(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (((pname, p), (gname, g)), m) in params.iter().zip(&grads).zip(&self.first) {
            if pname != gname || p.len() != g.len() || p.len() != m.len() {
                return Err(Error::ShapeMismatch {
                    name: format!("{pname}/{gname}"),
                    expected: vec![m.len()],
                    found: vec![g.len()],
                });
            }
            if let Some(i) = g.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {gname}[{i}]")));
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (((_, p), (_, g)), (m, v)) in params
            .iter_mut()
            .zip(&grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Debug, PartialEq)]
    struct Flat(Vec<f64>);

    impl Parameters for Flat {
        fn tensors(&self) -> Vec<(&'static str, &[f64])> {
            vec![("x", &self.0)]
        }
        fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
            vec![("x", &mut self.0)]
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = Flat(vec![1.0, -2.0]);
        let mut opt = AdamState::new(AdamConfig::default(), &p);
        opt.step(&mut p, &Flat(vec![0.0, 0.0])).unwrap();
        assert_eq!(p, Flat(vec![1.0, -2.0]));
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = g, v̂ = g² after bias correction, so the step is lr · g / (|g| + ε).
        let mut p = Flat(vec![0.0]);
        let mut opt = AdamState::new(AdamConfig::with_lr(0.1), &p);
        opt.step(&mut p, &Flat(vec![1.0])).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p.0[0] - expected).abs() < 1e-15, "{}", p.0[0]);
    }

    #[test]
    fn deterministic() {
        let start = Flat(vec![0.3, 0.7]);
        let g = Flat(vec![0.2, -1.5]);
        let run = || {
            let mut p = start.clone();
            let mut opt = AdamState::new(AdamConfig::default(), &p);
            opt.step(&mut p, &g).unwrap();
            opt.step(&mut p, &g).unwrap();
            (p, opt)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_names_the_tensor() {
        let mut p = Flat(vec![0.0, 0.0]);
        let mut opt = AdamState::new(AdamConfig::default(), &p);
        let err = opt.step(&mut p, &Flat(vec![0.0, f64::NAN])).unwrap_err();
        assert!(err.to_string().contains("x[1]"), "{err}");
        assert_eq!(opt.steps_taken(), 0);
    }
}
