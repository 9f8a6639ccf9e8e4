//! Dense numeric building blocks: matrices, activations, Adam, seeded RNG and
//! a central-difference gradient oracle.

mod adam;
mod gradcheck;
mod mat;
mod rng;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_grad, relative_error, DEFAULT_FD_STEP};
pub use mat::{axpy, dot, Mat};
pub use rng::Rng;

/// Logistic sigmoid, stable for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_vec(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| sigmoid(v)).collect()
}

pub fn tanh_vec(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.tanh()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_symmetry_point_and_saturation() {
        assert_eq!(sigmoid_vec(&[0.0]), vec![0.5]);
        assert!((sigmoid(1e9) - 1.0).abs() < 1e-12);
        assert!(sigmoid(-1e9) >= 0.0 && sigmoid(-1e9) < 1e-12);
        assert!(!sigmoid(-1e9).is_nan());
    }

    #[test]
    fn sigmoid_derivative_at_zero() {
        let g = finite_diff_grad(|x| sigmoid(x[0]), &[0.0], DEFAULT_FD_STEP).unwrap();
        assert!((g[0] - 0.25).abs() < 1e-8, "{}", g[0]);
    }

    proptest! {
        #[test]
        fn sigmoid_complement(x in -700.0f64..700.0) {
            prop_assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn sigmoid_monotone(a in -50.0f64..50.0, d in 1e-3f64..10.0) {
            prop_assert!(sigmoid(a + d) >= sigmoid(a));
        }

        #[test]
        fn tanh_is_odd(x in -100.0f64..100.0) {
            prop_assert!((x.tanh() + (-x).tanh()).abs() < 1e-12);
        }
    }
}
