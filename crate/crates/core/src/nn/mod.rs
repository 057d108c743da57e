//! The neural impact kernel, its exact gradients, and the optimizer.

mod adam;
mod kernel;

pub use adam::{AdamConfig, AdamState, Parameters};
pub use kernel::{BackwardScratch, InputTransform, KernelGrad, KernelNet, KernelTape};

/// ln(1 + e^x), evaluated without overflow for large |x|.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of [`softplus`], the logistic function.
#[inline]
pub fn softplus_backward(x: f64) -> f64 {
    sigmoid(x)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softplus and its derivative from a single exponential.
#[inline]
pub(crate) fn softplus_with_grad(x: f64) -> (f64, f64) {
    let e = (-x.abs()).exp();
    let sp = x.max(0.0) + e.ln_1p();
    let sig = if x >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    (sp, sig)
}

/// Inverse of softplus for y > 0.
pub fn softplus_inverse(y: f64) -> f64 {
    assert!(y > 0.0, "softplus_inverse needs a positive argument, got {y}");
    y + (-(-y).exp_m1()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(100.0) - 100.0).abs() < 1e-12);
        // ln(1 + e^-5) to 40 digits: 0.0067153484891180686164...
        assert!((softplus(-5.0) - 0.006_715_348_489_118_068_6).abs() < 1e-17);
        // logistic(-5) = 0.0066928509242848555...
        assert!((softplus_backward(-5.0) - 0.006_692_850_924_284_855_6).abs() < 1e-17);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
    }

    #[test]
    fn inverse_round_trips() {
        for y in [1e-6, 0.1, 1.0, 3.5, 40.0] {
            assert!((softplus(softplus_inverse(y)) - y).abs() <= 1e-12 * y.max(1.0));
        }
    }

    proptest! {
        #[test]
        fn monotone_and_positive(a in -700.0f64..700.0, b in -700.0f64..700.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(softplus(lo) <= softplus(hi));
            prop_assert!(softplus(lo) > 0.0);
        }

        #[test]
        fn fused_matches_separate(x in -50.0f64..50.0) {
            let (sp, sig) = softplus_with_grad(x);
            prop_assert!((sp - softplus(x)).abs() <= 1e-15 * sp.max(1.0));
            prop_assert!((sig - sigmoid(x)).abs() <= 1e-16);
        }

        #[test]
        fn derivative_matches_difference(x in -30.0f64..30.0) {
            let h = 1e-6;
            let fd = (softplus(x + h) - softplus(x - h)) / (2.0 * h);
            prop_assert!((fd - softplus_backward(x)).abs() < 1e-8);
        }
    }
}
