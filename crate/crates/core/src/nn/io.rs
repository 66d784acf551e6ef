use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, Layer, Network, NnError, Result};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    version: u64,
    input_dim: usize,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    activation: String,
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

fn parse_error(e: serde_json::Error) -> NnError {
    NnError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Pretty-printed JSON document. Floats use the shortest representation
/// that round-trips, so a load reproduces every parameter bit-exactly.
pub fn network_to_json(net: &Network) -> String {
    let file = NetworkFile {
        version: FORMAT_VERSION,
        input_dim: net.input_dim(),
        layers: net
            .layers()
            .iter()
            .map(|l| LayerFile {
                activation: l.activation().name().to_string(),
                rows: l.rows(),
                cols: l.cols(),
                weights: l.weights().to_vec(),
                bias: l.bias().to_vec(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("network serializes")
}

pub fn network_from_json(text: &str) -> Result<Network> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(parse_error)?;
    let version = value.get("version").and_then(|v| v.as_u64());
    match version {
        Some(FORMAT_VERSION) => {}
        Some(found) => {
            return Err(NnError::Version {
                found,
                supported: FORMAT_VERSION,
            })
        }
        None => return Err(NnError::Validation("missing integer `version` field".into())),
    }
    let file: NetworkFile = serde_json::from_str(text).map_err(parse_error)?;
    let layers = file
        .layers
        .into_iter()
        .map(|l| {
            let act = Activation::parse(&l.activation)?;
            Layer::new(l.rows, l.cols, l.weights, l.bias, act)
        })
        .collect::<Result<Vec<_>>>()?;
    let net = Network::new(layers)?;
    if net.input_dim() != file.input_dim {
        return Err(NnError::Validation(format!(
            "input_dim {} disagrees with first layer ({} columns)",
            file.input_dim,
            net.input_dim()
        )));
    }
    Ok(net)
}

pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, network_to_json(net))?;
    Ok(())
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    network_from_json(&fs::read_to_string(path)?)
}
