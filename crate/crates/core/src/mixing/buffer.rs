use super::{MixingError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Pre-squash Gaussian sample; the weights are `A_B * tanh(pre)`.
    pub pre_action: Vec<f64>,
    pub action: Vec<f64>,
    /// Gaussian log-density of `pre_action` under the acting policy.
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    /// The episode ended in a safety violation.
    pub done: bool,
    /// Last transition of its episode (terminal or truncated).
    pub episode_end: bool,
    /// Critic value of the successor, used when the episode was truncated.
    pub bootstrap_value: f64,
}

/// On-policy storage for one epoch of episodes.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub steps: Vec<Transition>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn push(&mut self, t: Transition) {
        self.steps.push(t);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn clear(&mut self) {
        self.steps.clear();
        self.advantages.clear();
        self.returns.clear();
    }
}

/// Generalized advantage estimation, backwards over the buffer. Advantages
/// are stored un-normalized; [`normalize`] is applied per update batch.
pub fn compute_advantages(buffer: &mut RolloutBuffer, gamma: f64, lambda: f64) -> Result<()> {
    if buffer.is_empty() {
        return Err(MixingError::EmptyBuffer);
    }
    let n = buffer.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = 0.0;
    for i in (0..n).rev() {
        let t = &buffer.steps[i];
        if t.episode_end {
            next_adv = 0.0;
            next_value = if t.done { 0.0 } else { t.bootstrap_value };
        }
        let nonterminal = if t.done { 0.0 } else { 1.0 };
        let delta = t.reward + gamma * next_value * nonterminal - t.value;
        next_adv = delta + gamma * lambda * nonterminal * next_adv;
        adv[i] = next_adv;
        next_value = t.value;
    }
    if adv.iter().any(|a| !a.is_finite()) {
        return Err(MixingError::NonFinite("advantage"));
    }
    buffer.returns = adv
        .iter()
        .zip(&buffer.steps)
        .map(|(a, t)| a + t.value)
        .collect();
    buffer.advantages = adv;
    Ok(())
}

/// Zero mean, unit variance; a constant batch maps to zeros.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    if values.is_empty() {
        return Vec::new();
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    values.iter().map(|v| (v - mean) / (std + 1e-8)).collect()
}
