use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Activation, Layer, Network};

/// Matrix norm used for the per-layer factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    /// Largest singular value; bounds Euclidean output change.
    #[default]
    Operator2,
    /// Maximum absolute row sum; bounds max-norm output change.
    OperatorInf,
}

// Relative slack so rounding in the SVD never produces an underestimate.
const SVD_SLACK: f64 = 1e-12;

pub fn layer_norm(layer: &Layer, norm: NormKind) -> f64 {
    match norm {
        NormKind::Operator2 => {
            let m = DMatrix::from_row_slice(layer.rows(), layer.cols(), layer.weights());
            let sigma = m.singular_values().max();
            sigma * (1.0 + SVD_SLACK)
        }
        NormKind::OperatorInf => layer
            .weights()
            .chunks_exact(layer.cols())
            .map(|row| row.iter().map(|w| w.abs()).sum::<f64>())
            .fold(0.0, f64::max),
    }
}

fn activation_factor(act: Activation) -> f64 {
    match act {
        Activation::Sigmoid => 0.25,
        Activation::Relu | Activation::Tanh | Activation::Identity => 1.0,
    }
}

/// Product over layers of `activation slope bound * ||W||`.
pub fn lipschitz_upper_bound(net: &Network, norm: NormKind) -> f64 {
    net.layers()
        .iter()
        .map(|l| activation_factor(l.activation()) * layer_norm(l, norm))
        .product()
}
