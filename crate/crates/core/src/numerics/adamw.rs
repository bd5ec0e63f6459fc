use super::NumericsError;

/// Adam with decoupled weight decay.
///
/// The decay term shrinks parameters directly, `θ ← θ - lr·λ·θ`, and never
/// enters the moment estimates. Moment buffers are allocated on the first
/// step from the shapes of the tensors passed in; later steps must present
/// the same shapes in the same order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(lr: f64) -> Self {
        Self::with_hyper(lr, 0.9, 0.999, 1e-8, 0.01)
    }

    pub fn with_hyper(lr: f64, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over a group of tensors.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<(), NumericsError> {
        if params.len() != grads.len() {
            return Err(NumericsError::TensorCount {
                params: params.len(),
                grads: grads.len(),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(NumericsError::TensorLength {
                    tensor: i,
                    param: p.len(),
                    grad: g.len(),
                });
            }
        }
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second_moment = self.first_moment.clone();
        } else if self.first_moment.len() != params.len()
            || self.first_moment.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
        {
            return Err(NumericsError::OptimizerLayout);
        }

        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let decay = 1.0 - self.lr * self.weight_decay;

        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            for j in 0..param.len() {
                let g = grad[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                param[j] = param[j] * decay - self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
