use serde::{Deserialize, Serialize};

use super::{DenseNet, GradientTape};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
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

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub(crate) m: Vec<f64>,
    pub(crate) v: Vec<f64>,
    pub(crate) t: u64,
}

fn check_tape(net: &DenseNet, tape: &GradientTape) -> Result<()> {
    if tape.len() != net.param_count() {
        return Err(Error::Dimension {
            context: "optimizer step",
            expected: net.param_count(),
            actual: tape.len(),
        });
    }
    if let Some((i, g)) = tape.as_slice().iter().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient entry {i} is {g} (network dims {:?})",
            net.dims()
        )));
    }
    Ok(())
}

impl Adam {
    pub fn new(param_count: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn for_net(net: &DenseNet, config: AdamConfig) -> Self {
        Self::new(net.param_count(), config)
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut DenseNet, tape: &GradientTape) -> Result<()> {
        check_tape(net, tape)?;
        if self.m.len() != tape.len() {
            return Err(Error::Dimension {
                context: "optimizer moments",
                expected: self.m.len(),
                actual: tape.len(),
            });
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.t += 1;
        let bias1 = 1.0 - beta1.powi(self.t as i32);
        let bias2 = 1.0 - beta2.powi(self.t as i32);
        let params = net.params_mut();
        for (((p, m), v), g) in params
            .iter_mut()
            .zip(&mut self.m)
            .zip(&mut self.v)
            .zip(tape.as_slice())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Plain gradient descent: `p -= lr * g`.
pub fn sgd_step(net: &mut DenseNet, tape: &GradientTape, lr: f64) -> Result<()> {
    check_tape(net, tape)?;
    for (p, g) in net.params_mut().iter_mut().zip(tape.as_slice()) {
        *p -= lr * g;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Head};

    fn scalar_net(w: f64, b: f64) -> DenseNet {
        let mut net = DenseNet::zeros(&[1, 1], Activation::Tanh, Head::Identity).unwrap();
        net.set_params(&[w, b]).unwrap();
        net
    }

    /// Textbook scalar Adam used as the reference.
    fn scalar_adam(p0: f64, grads: &[f64], c: AdamConfig) -> f64 {
        let (mut p, mut m, mut v) = (p0, 0.0, 0.0);
        for (i, g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = c.beta1 * m + (1.0 - c.beta1) * g;
            v = c.beta2 * v + (1.0 - c.beta2) * g * g;
            let mh = m / (1.0 - c.beta1.powi(t));
            let vh = v / (1.0 - c.beta2.powi(t));
            p -= c.lr * mh / (vh.sqrt() + c.eps);
        }
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = scalar_net(0.7, -0.2);
        let mut adam = Adam::for_net(&net, AdamConfig::default());
        adam.step(&mut net, &GradientTape::zeros(2)).unwrap();
        assert_eq!(net.params(), &[0.7, -0.2]);
    }

    #[test]
    fn first_step_moves_lr_against_gradient_sign() {
        let config = AdamConfig::with_lr(0.001);
        let mut net = scalar_net(0.0, 0.0);
        let mut adam = Adam::for_net(&net, config);
        adam.step(&mut net, &GradientTape::from_vec(vec![2.5, -0.3])).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        let expected_w = -0.001 * 2.5 / (2.5 + 1e-8);
        let expected_b = 0.001 * 0.3 / (0.3 + 1e-8);
        assert!((net.params()[0] - expected_w).abs() < 1e-15);
        assert!((net.params()[1] - expected_b).abs() < 1e-15);
        assert!((net.params()[0] + 0.001).abs() < 1e-10);
    }

    #[test]
    fn two_steps_match_scalar_reference() {
        let config = AdamConfig::with_lr(0.01);
        let mut net = scalar_net(0.4, 0.0);
        let mut adam = Adam::for_net(&net, config);
        let tape = GradientTape::from_vec(vec![0.8, 0.0]);
        adam.step(&mut net, &tape).unwrap();
        adam.step(&mut net, &tape).unwrap();
        let reference = scalar_adam(0.4, &[0.8, 0.8], config);
        assert!((net.params()[0] - reference).abs() < 1e-15);
        assert_eq!(adam.steps_taken(), 2);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut net = scalar_net(0.0, 0.0);
        let mut adam = Adam::for_net(&net, AdamConfig::default());
        let err = adam
            .step(&mut net, &GradientTape::from_vec(vec![f64::NAN, 0.0]))
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(net.params(), &[0.0, 0.0]);
        assert!(sgd_step(&mut net, &GradientTape::from_vec(vec![0.0, f64::INFINITY]), 0.1).is_err());
    }

    #[test]
    fn mismatched_tape_rejected() {
        let mut net = scalar_net(0.0, 0.0);
        assert!(sgd_step(&mut net, &GradientTape::zeros(3), 0.1).is_err());
    }

    #[test]
    fn sgd_moves_against_gradient() {
        let mut net = scalar_net(1.0, 1.0);
        sgd_step(&mut net, &GradientTape::from_vec(vec![2.0, -1.0]), 0.1).unwrap();
        assert_eq!(net.params(), &[0.8, 1.1]);
    }
}
