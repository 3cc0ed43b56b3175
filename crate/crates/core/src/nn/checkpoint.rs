//! JSON checkpoints. Tensors are stored as a shape plus base64 of the flat
//! little-endian `f64` values, so a round trip is bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::network::{Head, LayerParams, MultiHeadNetwork};
use super::spec::NetworkSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "modelzoo-network/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EncodedTensor {
    shape: Vec<usize>,
    f64_le: String,
}

impl From<&Tensor> for EncodedTensor {
    fn from(t: &Tensor) -> Self {
        let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        Self {
            shape: t.shape().to_vec(),
            f64_le: STANDARD.encode(bytes),
        }
    }
}

impl TryFrom<EncodedTensor> for Tensor {
    type Error = Error;
    fn try_from(e: EncodedTensor) -> Result<Tensor> {
        let bytes = STANDARD
            .decode(e.f64_le)
            .map_err(|err| Error::InvalidArgument(format!("tensor payload: {err}")))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::InvalidArgument("tensor payload not a multiple of 8 bytes".into()));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(e.shape, data)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum EncodedLayer {
    None,
    Conv {
        weight: EncodedTensor,
        bias: EncodedTensor,
    },
    BatchNorm {
        gamma: EncodedTensor,
        beta: EncodedTensor,
        running_mean: EncodedTensor,
        running_var: EncodedTensor,
    },
    Dense {
        weight: EncodedTensor,
        bias: EncodedTensor,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EncodedHead {
    weight: EncodedTensor,
    bias: EncodedTensor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    spec: NetworkSpec,
    trained_tasks: Vec<usize>,
    layers: Vec<EncodedLayer>,
    heads: BTreeMap<usize, EncodedHead>,
}

pub fn to_json(net: &MultiHeadNetwork) -> Result<String> {
    let layers = net
        .layer_params()
        .iter()
        .map(|l| match l {
            LayerParams::None => EncodedLayer::None,
            LayerParams::Conv { weight, bias } => EncodedLayer::Conv {
                weight: weight.into(),
                bias: bias.into(),
            },
            LayerParams::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
            } => EncodedLayer::BatchNorm {
                gamma: gamma.into(),
                beta: beta.into(),
                running_mean: running_mean.into(),
                running_var: running_var.into(),
            },
            LayerParams::Dense { weight, bias } => EncodedLayer::Dense {
                weight: weight.into(),
                bias: bias.into(),
            },
        })
        .collect();
    let heads = net
        .heads()
        .iter()
        .map(|(&t, h)| {
            (
                t,
                EncodedHead {
                    weight: (&h.weight).into(),
                    bias: (&h.bias).into(),
                },
            )
        })
        .collect();
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        spec: net.spec().clone(),
        trained_tasks: net.tasks().collect(),
        layers,
        heads,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn from_json(text: &str) -> Result<MultiHeadNetwork> {
    let file: CheckpointFile = serde_json::from_str(text)?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::InvalidArgument(format!(
            "unsupported checkpoint format {:?}",
            file.format
        )));
    }
    let layers = file
        .layers
        .into_iter()
        .map(|l| {
            Ok(match l {
                EncodedLayer::None => LayerParams::None,
                EncodedLayer::Conv { weight, bias } => LayerParams::Conv {
                    weight: weight.try_into()?,
                    bias: bias.try_into()?,
                },
                EncodedLayer::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => LayerParams::BatchNorm {
                    gamma: gamma.try_into()?,
                    beta: beta.try_into()?,
                    running_mean: running_mean.try_into()?,
                    running_var: running_var.try_into()?,
                },
                EncodedLayer::Dense { weight, bias } => LayerParams::Dense {
                    weight: weight.try_into()?,
                    bias: bias.try_into()?,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let heads = file
        .heads
        .into_iter()
        .map(|(t, h)| {
            Ok((
                t,
                Head {
                    weight: h.weight.try_into()?,
                    bias: h.bias.try_into()?,
                },
            ))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    if heads.keys().copied().collect::<Vec<_>>() != file.trained_tasks {
        return Err(Error::InvalidArgument("trained_tasks does not match heads".into()));
    }
    MultiHeadNetwork::from_parts(file.spec, layers, heads)
}

pub fn save(net: &MultiHeadNetwork, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(net)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<MultiHeadNetwork> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
