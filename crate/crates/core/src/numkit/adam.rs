use serde::{Deserialize, Serialize};

use super::Mat;
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
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

/// Moment estimates for a fixed list of parameter matrices.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Mat>,
    pub v: Vec<Mat>,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Mat>) -> Self {
        let m: Vec<Mat> = params.into_iter().map(Mat::zeros_like).collect();
        let v = m.clone();
        Self { config, step: 0, m, v }
    }

    /// One bias-corrected Adam update of `params` along `grads`.
    pub fn step(&mut self, params: &mut [&mut Mat], grads: &[&Mat]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(shape_err(
                "adam parameter count",
                self.m.len(),
                format!("{} params / {} grads", params.len(), grads.len()),
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if !p.same_shape(g) || !p.same_shape(m) {
                return Err(shape_err(
                    "adam parameter shape",
                    format!("{}x{}", m.rows, m.cols),
                    format!("{}x{} / {}x{}", p.rows, p.cols, g.rows, g.cols),
                ));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let g = &grads[i].data;
            let m = &mut self.m[i].data;
            let v = &mut self.v[i].data;
            for j in 0..g.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p.data[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Mat {
        Mat::from_vec(1, 1, vec![v]).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar(1.5);
        let g = scalar(0.0);
        let mut st = AdamState::new(AdamConfig::default(), [&p]);
        st.step(&mut [&mut p], &[&g]).unwrap();
        assert_eq!(p.data[0], 1.5);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        for gv in [1e-3, 0.7, -250.0] {
            let mut p = scalar(0.0);
            let g = scalar(gv);
            let cfg = AdamConfig {
                eps: 0.0,
                ..AdamConfig::default()
            };
            let mut st = AdamState::new(cfg, [&p]);
            st.step(&mut [&mut p], &[&g]).unwrap();
            assert!((p.data[0] + cfg.lr * gv.signum()).abs() < 1e-15, "{}", p.data[0]);
        }
    }

    #[test]
    fn converges_on_quadratic() {
        let mut w = scalar(0.0);
        let cfg = AdamConfig {
            lr: 0.05,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(cfg, [&w]);
        for _ in 0..500 {
            let g = scalar(2.0 * (w.data[0] - 3.0));
            st.step(&mut [&mut w], &[&g]).unwrap();
        }
        assert!((w.data[0] - 3.0).abs() < 0.05, "{}", w.data[0]);
        assert!(st.v[0].data[0] >= 0.0);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut p = scalar(0.0);
        let g = Mat::zeros(2, 1);
        let mut st = AdamState::new(AdamConfig::default(), [&p]);
        assert!(st.step(&mut [&mut p], &[&g]).is_err());
    }
}
