use serde::{Deserialize, Serialize};

use super::PredictorError;

/// AMSGrad optimizer state with coupled L2 weight decay.
///
/// The running maximum `v_hat` is taken over raw second moments and the
/// bias correction is applied to both moments when stepping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmsgradState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AmsgradState {
    pub fn new(len: usize) -> Self {
        Self::with_betas(len, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        AmsgradState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            v_hat: vec![0.0; len],
            t: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        lr: f64,
        weight_decay: f64,
    ) -> Result<(), PredictorError> {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(PredictorError::NonFinite(format!(
                "gradient[{i}] = {} at optimizer step {}",
                grads[i],
                self.t + 1
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2_sqrt = (1.0 - self.beta2.powi(self.t as i32)).sqrt();
        let step = lr / bc1;
        for i in 0..params.len() {
            let g = grads[i] + weight_decay * params[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            if self.v[i] > self.v_hat[i] {
                self.v_hat[i] = self.v[i];
            }
            let denom = self.v_hat[i].sqrt() / bc2_sqrt + self.eps;
            params[i] -= step * self.m[i] / denom;
        }
        Ok(())
    }
}
