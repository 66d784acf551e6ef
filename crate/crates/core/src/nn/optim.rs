use serde::{Deserialize, Serialize};

use super::{GradientBundle, LayerGrad, Network, NnError, Result};

/// Adaptive-moment (Adam) hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
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

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<LayerGrad>,
    second: Vec<LayerGrad>,
}

impl OptimizerState {
    pub fn new(net: &Network, config: AdamConfig) -> Self {
        let zeros = GradientBundle::zeros_like(net).params;
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam descent step on `net` along `grads`.
pub fn optimizer_step(
    net: &mut Network,
    grads: &GradientBundle,
    state: &mut OptimizerState,
) -> Result<()> {
    if !grads.matches(net) || state.first.len() != net.layers.len() {
        return Err(NnError::Shape("optimizer state or gradients do not mirror network".into()));
    }
    if !grads.is_finite() {
        return Err(NnError::Domain("gradient"));
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - beta1.powf(t);
    let c2 = 1.0 - beta2.powf(t);
    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };
    for (((layer, g), m), v) in net
        .layers
        .iter_mut()
        .zip(&grads.params)
        .zip(&mut state.first)
        .zip(&mut state.second)
    {
        for (((p, g), m), v) in layer
            .weights
            .iter_mut()
            .zip(&g.weights)
            .zip(&mut m.weights)
            .zip(&mut v.weights)
        {
            update(p, *g, m, v);
        }
        for (((p, g), m), v) in layer
            .bias
            .iter_mut()
            .zip(&g.bias)
            .zip(&mut m.bias)
            .zip(&mut v.bias)
        {
            update(p, *g, m, v);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Layer};

    fn scalar(w: f64) -> Network {
        Network::new(vec![Layer::new(1, 1, vec![w], vec![0.0], Activation::Identity).unwrap()])
            .unwrap()
    }

    fn grad(net: &Network, gw: f64) -> GradientBundle {
        let mut g = GradientBundle::zeros_like(net);
        g.params[0].weights[0] = gw;
        g
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = scalar(1.0);
        let before = net.clone();
        let mut st = OptimizerState::new(&net, AdamConfig::default());
        for _ in 0..10 {
            { let g = grad(&net, 0.0); optimizer_step(&mut net, &g, &mut st) }.unwrap();
        }
        assert_eq!(net, before);
        assert_eq!(st.step_count(), 10);
    }

    #[test]
    fn positive_gradient_decreases_weight() {
        let mut net = scalar(1.0);
        let mut st = OptimizerState::new(&net, AdamConfig::with_lr(0.1));
        { let g = grad(&net, 1.0); optimizer_step(&mut net, &g, &mut st) }.unwrap();
        assert!(net.layers()[0].weights()[0] < 1.0);
    }

    #[test]
    fn quadratic_converges_to_minimum() {
        // loss (w - 3)^2, minimum at w = 3
        let mut net = scalar(0.0);
        let mut st = OptimizerState::new(&net, AdamConfig::with_lr(0.05));
        let mut steps = 0;
        while steps < 2000 {
            let w = net.layers()[0].weights()[0];
            if (w - 3.0).abs() < 1e-3 {
                break;
            }
            { let g = grad(&net, 2.0 * (w - 3.0)); optimizer_step(&mut net, &g, &mut st) }.unwrap();
            steps += 1;
        }
        let w = net.layers()[0].weights()[0];
        assert!((w - 3.0).abs() < 1e-3, "w = {w} after {steps} steps");
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut net = scalar(0.0);
        let other = Network::new(vec![
            Layer::new(2, 1, vec![0.0; 2], vec![0.0; 2], Activation::Identity).unwrap(),
        ])
        .unwrap();
        let mut st = OptimizerState::new(&net, AdamConfig::default());
        let g = GradientBundle::zeros_like(&other);
        assert!(matches!(
            optimizer_step(&mut net, &g, &mut st),
            Err(NnError::Shape(_))
        ));
    }
}
