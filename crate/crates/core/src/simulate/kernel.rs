use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed-form impact functions for ground-truth processes.
///
/// Every variant is nonincreasing in `t`, so the value at the start of a
/// lookahead window bounds it for the rest of the window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "params", rename_all = "snake_case")]
pub enum ParametricKernel {
    /// `height` on `[0, support)`, zero afterwards.
    Step { height: f64, support: f64 },
    /// `cos(scale·t)` on `[0, support)`; `support` defaults to π/(2·scale), the
    /// end of the nonnegative lobe.
    Cosine {
        scale: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        support: Option<f64>,
    },
    /// `alpha·exp(−delta·t)`.
    Exponential { alpha: f64, delta: f64 },
    Zero,
}

impl ParametricKernel {
    pub fn step(height: f64, support: f64) -> Self {
        Self::Step { height, support }
    }

    pub fn cosine(scale: f64) -> Self {
        Self::Cosine {
            scale,
            support: None,
        }
    }

    pub fn exponential(alpha: f64, delta: f64) -> Self {
        Self::Exponential { alpha, delta }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("{self:?}: {msg}")));
        match *self {
            Self::Step { height, support } => {
                if !(height >= 0.0 && height.is_finite()) {
                    return bad("height must be finite and >= 0".into());
                }
                if !(support > 0.0 && support.is_finite()) {
                    return bad("support must be finite and > 0".into());
                }
            }
            Self::Cosine { scale, support } => {
                if !(scale > 0.0 && scale.is_finite()) {
                    return bad("scale must be finite and > 0".into());
                }
                if let Some(s) = support {
                    let limit = FRAC_PI_2 / scale;
                    if !(s > 0.0) || s > limit * (1.0 + 1e-12) {
                        return bad(format!(
                            "support must lie in (0, {limit}] so that cos(scale·t) stays >= 0"
                        ));
                    }
                }
            }
            Self::Exponential { alpha, delta } => {
                if !(alpha >= 0.0 && alpha.is_finite()) {
                    return bad("alpha must be finite and >= 0".into());
                }
                if !(delta > 0.0 && delta.is_finite()) {
                    return bad("delta must be finite and > 0".into());
                }
            }
            Self::Zero => {}
        }
        Ok(())
    }

    /// End of the nonzero region (`∞` for exponentials, 0 for `Zero`).
    pub fn support(&self) -> f64 {
        match *self {
            Self::Step { support, .. } => support,
            Self::Cosine { scale, support } => support.unwrap_or(FRAC_PI_2 / scale),
            Self::Exponential { .. } => f64::INFINITY,
            Self::Zero => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Self::Zero => true,
            Self::Step { height, .. } => height == 0.0,
            Self::Exponential { alpha, .. } => alpha == 0.0,
            Self::Cosine { .. } => false,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match *self {
            Self::Step { height, support } => {
                if t < support {
                    height
                } else {
                    0.0
                }
            }
            Self::Cosine { scale, .. } => {
                if t < self.support() {
                    (scale * t).cos().max(0.0)
                } else {
                    0.0
                }
            }
            Self::Exponential { alpha, delta } => alpha * (-delta * t).exp(),
            Self::Zero => 0.0,
        }
    }

    /// sup of the kernel over `[t, ∞)`.
    pub fn sup_after(&self, t: f64) -> f64 {
        self.eval(t.max(0.0))
    }

    /// ∫_0^upto φ(s) ds.
    pub fn integral(&self, upto: f64) -> f64 {
        if upto <= 0.0 {
            return 0.0;
        }
        match *self {
            Self::Step { height, support } => height * upto.min(support),
            Self::Cosine { scale, .. } => (scale * upto.min(self.support())).sin() / scale,
            Self::Exponential { alpha, delta } => alpha / delta * -(-delta * upto).exp_m1(),
            Self::Zero => 0.0,
        }
    }

    /// ∫_0^∞ φ(s) ds.
    pub fn total_integral(&self) -> f64 {
        self.integral(f64::INFINITY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn closed_form_integrals() {
        assert!((ParametricKernel::step(0.5, 0.5).total_integral() - 0.25).abs() < 1e-15);
        assert!((ParametricKernel::cosine(0.5).total_integral() - 2.0).abs() < 1e-15);
        assert!((ParametricKernel::exponential(1.0, 1.0 / 3.0).total_integral() - 3.0).abs() < 1e-14);
        let h10 = 3.0 * (1.0 - (-10.0f64 / 3.0).exp());
        assert!((ParametricKernel::exponential(1.0, 1.0 / 3.0).integral(10.0) - h10).abs() < 1e-14);
        assert_eq!(ParametricKernel::Zero.total_integral(), 0.0);
    }

    #[test]
    fn cosine_support_defaults_to_first_lobe() {
        let k = ParametricKernel::cosine(0.5);
        assert!((k.support() - PI).abs() < 1e-15);
        assert_eq!(k.eval(3.2), 0.0);
        assert!((k.eval(1.0) - 0.5f64.cos()).abs() < 1e-15);
        let too_long = ParametricKernel::Cosine {
            scale: 0.5,
            support: Some(4.0),
        };
        assert!(too_long.validate().is_err());
    }

    #[test]
    fn step_is_half_open() {
        let k = ParametricKernel::step(0.5, 0.5);
        assert_eq!(k.eval(0.0), 0.5);
        assert_eq!(k.eval(0.4999), 0.5);
        assert_eq!(k.eval(0.5), 0.0);
        assert_eq!(k.sup_after(0.5), 0.0);
    }

    #[test]
    fn json_shape() {
        let k = ParametricKernel::step(0.5, 0.5);
        let text = serde_json::to_string(&k).unwrap();
        assert_eq!(text, r#"{"variant":"step","params":{"height":0.5,"support":0.5}}"#);
        let zero: ParametricKernel = serde_json::from_str(r#"{"variant":"zero"}"#).unwrap();
        assert_eq!(zero, ParametricKernel::Zero);
        let cos: ParametricKernel =
            serde_json::from_str(r#"{"variant":"cosine","params":{"scale":0.5}}"#).unwrap();
        assert_eq!(cos, ParametricKernel::cosine(0.5));
    }

    #[test]
    fn kernels_are_nonincreasing() {
        let ks = [
            ParametricKernel::step(0.5, 0.5),
            ParametricKernel::cosine(0.5),
            ParametricKernel::exponential(0.4, 1.0),
        ];
        for k in ks {
            let mut prev = k.eval(0.0);
            for i in 1..2000 {
                let v = k.eval(i as f64 * 0.005);
                assert!(v <= prev && v >= 0.0);
                prev = v;
            }
        }
    }
}
