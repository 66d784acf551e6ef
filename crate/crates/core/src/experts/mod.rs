//! Expert controllers: fixed linear gains (e.g. from LQR), polynomial
//! feedback laws, and neural actors (e.g. from DDPG).

mod ddpg;
mod lqr;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{Controller, DynamicsError, Monomial, SystemSpec};
use crate::nn::{network_from_json, network_to_json, Activation, Network, NnError};

pub use ddpg::{ddpg_train, DdpgConfig, DdpgReport};
pub use lqr::{lqr_expert, lqr_synthesize, riccati_residual, solve_dare, spectral_radius};

#[derive(Debug, Error)]
pub enum ExpertError {
    #[error("expert `{label}`: {message}")]
    Dimension { label: String, message: String },
    #[error("expert `{0}` produced a non-finite control")]
    NonFinite(String),
    #[error("LQR synthesis failed: {0}")]
    Synthesis(String),
    #[error("DDPG training diverged at episode {episode}: {message}")]
    Training { episode: usize, message: String },
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("malformed expert file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ExpertError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum ExpertKind {
    Neural(Network),
    /// `u = K s + offset`, `K` row-major with `offset.len()` rows.
    Linear { gain: Vec<f64>, offset: Vec<f64> },
    /// One polynomial in the state per control component.
    Polynomial { terms: Vec<Vec<Monomial>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expert {
    pub label: String,
    pub kind: ExpertKind,
}

impl Expert {
    pub fn linear(label: impl Into<String>, gain: Vec<f64>, offset: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            kind: ExpertKind::Linear { gain, offset },
        }
    }

    pub fn neural(label: impl Into<String>, net: Network) -> Self {
        Self {
            label: label.into(),
            kind: ExpertKind::Neural(net),
        }
    }

    pub fn output_dim(&self) -> usize {
        match &self.kind {
            ExpertKind::Neural(n) => n.output_dim(),
            ExpertKind::Linear { offset, .. } => offset.len(),
            ExpertKind::Polynomial { terms } => terms.len(),
        }
    }

    fn dim_error(&self, message: String) -> ExpertError {
        ExpertError::Dimension {
            label: self.label.clone(),
            message,
        }
    }

    /// Checks the expert maps `state_dim` states to `input_dim` controls.
    pub fn check_dims(&self, state_dim: usize, input_dim: usize) -> Result<()> {
        if self.output_dim() != input_dim {
            return Err(self.dim_error(format!(
                "outputs {} controls, plant takes {input_dim}",
                self.output_dim()
            )));
        }
        let ok = match &self.kind {
            ExpertKind::Neural(n) => n.input_dim() == state_dim,
            ExpertKind::Linear { gain, offset } => gain.len() == offset.len() * state_dim,
            ExpertKind::Polynomial { terms } => {
                terms.iter().flatten().all(|m| m.powers.len() == state_dim)
            }
        };
        if !ok {
            return Err(self.dim_error(format!("does not accept {state_dim}-dimensional states")));
        }
        Ok(())
    }

    /// Pre-clip control at `s`.
    pub fn evaluate(&self, s: &[f64]) -> Result<Vec<f64>> {
        let u = match &self.kind {
            ExpertKind::Neural(n) => n.forward(s)?,
            ExpertKind::Linear { gain, offset } => {
                if gain.len() != offset.len() * s.len() {
                    return Err(self.dim_error(format!("gain does not accept {} states", s.len())));
                }
                offset
                    .iter()
                    .zip(gain.chunks_exact(s.len().max(1)))
                    .map(|(o, row)| o + row.iter().zip(s).map(|(k, x)| k * x).sum::<f64>())
                    .collect()
            }
            ExpertKind::Polynomial { terms } => terms
                .iter()
                .map(|poly| {
                    poly.iter()
                        .map(|m| {
                            m.powers
                                .iter()
                                .zip(s)
                                .fold(m.coeff, |acc, (k, x)| acc * x.powi(*k as i32))
                        })
                        .sum()
                })
                .collect(),
        };
        if u.iter().any(|v| !v.is_finite()) {
            return Err(ExpertError::NonFinite(self.label.clone()));
        }
        Ok(u)
    }

    /// The same law with every output multiplied by `factor`; used to build
    /// deliberately weakened experts.
    pub fn scaled(&self, factor: f64, label: impl Into<String>) -> Result<Self> {
        let kind = match &self.kind {
            ExpertKind::Linear { gain, offset } => ExpertKind::Linear {
                gain: gain.iter().map(|k| k * factor).collect(),
                offset: offset.iter().map(|o| o * factor).collect(),
            },
            ExpertKind::Polynomial { terms } => ExpertKind::Polynomial {
                terms: terms
                    .iter()
                    .map(|p| {
                        p.iter()
                            .map(|m| Monomial {
                                coeff: m.coeff * factor,
                                powers: m.powers.clone(),
                            })
                            .collect()
                    })
                    .collect(),
            },
            ExpertKind::Neural(net) => {
                let mut net = net.clone();
                let last = net.layers_mut().last_mut().expect("non-empty");
                if last.activation() != Activation::Identity {
                    return Err(self.dim_error("only identity output layers can be scaled".into()));
                }
                last.weights_mut().iter_mut().for_each(|w| *w *= factor);
                last.bias_mut().iter_mut().for_each(|b| *b *= factor);
                ExpertKind::Neural(net)
            }
        };
        Ok(Self {
            label: label.into(),
            kind,
        })
    }
}

impl Controller for Expert {
    fn control(&self, observation: &[f64]) -> Vec<f64> {
        self.evaluate(observation)
            .unwrap_or_else(|_| vec![f64::NAN; self.output_dim()])
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ExpertFile {
    Linear {
        #[serde(default)]
        label: Option<String>,
        gain: Vec<Vec<f64>>,
        #[serde(default)]
        offset: Option<Vec<f64>>,
    },
    Polynomial {
        #[serde(default)]
        label: Option<String>,
        terms: Vec<Vec<Monomial>>,
    },
}

/// JSON text for an expert: the network format for neural experts, the
/// tagged linear/polynomial format otherwise.
pub fn expert_to_json(expert: &Expert) -> String {
    let file = match &expert.kind {
        ExpertKind::Neural(net) => return network_to_json(net),
        ExpertKind::Linear { gain, offset } => ExpertFile::Linear {
            label: Some(expert.label.clone()),
            gain: gain
                .chunks(gain.len() / offset.len().max(1))
                .map(<[f64]>::to_vec)
                .collect(),
            offset: Some(offset.clone()),
        },
        ExpertKind::Polynomial { terms } => ExpertFile::Polynomial {
            label: Some(expert.label.clone()),
            terms: terms.clone(),
        },
    };
    serde_json::to_string_pretty(&file).expect("expert serializes")
}

pub fn save_expert(expert: &Expert, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, expert_to_json(expert))?;
    Ok(())
}

/// Parses an expert document and checks it against `spec`. `label` is
/// used when the document carries none (always the case for networks).
pub fn expert_from_json(text: &str, label: &str, spec: &SystemSpec) -> Result<Expert> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let expert = if value.get("version").is_some() {
        Expert::neural(label, network_from_json(text)?)
    } else {
        match serde_json::from_value::<ExpertFile>(value)? {
            ExpertFile::Linear { label: l, gain, offset } => {
                let rows = gain.len();
                if gain.iter().any(|r| r.len() != spec.state_dim) {
                    return Err(ExpertError::Dimension {
                        label: label.into(),
                        message: "every gain row needs one entry per state".into(),
                    });
                }
                Expert::linear(
                    l.unwrap_or_else(|| label.into()),
                    gain.concat(),
                    offset.unwrap_or_else(|| vec![0.0; rows]),
                )
            }
            ExpertFile::Polynomial { label: l, terms } => Expert {
                label: l.unwrap_or_else(|| label.into()),
                kind: ExpertKind::Polynomial { terms },
            },
        }
    };
    expert.check_dims(spec.state_dim, spec.input_dim)?;
    Ok(expert)
}

/// Loads an expert file; the file stem is the default label.
pub fn load_expert(path: impl AsRef<Path>, spec: &SystemSpec) -> Result<Expert> {
    let path = path.as_ref();
    let label = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("expert")
        .to_string();
    expert_from_json(&fs::read_to_string(path)?, &label, spec)
}
