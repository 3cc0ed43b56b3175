use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One trunk layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// "Same"-padded convolution (padding `kernel / 2`).
    Conv2d {
        kernel: usize,
        filters: usize,
        stride: usize,
    },
    /// Non-overlapping max pooling; trailing rows/columns that do not fill a window are dropped.
    MaxPool2d { window: usize },
    Relu,
    /// Per-channel for `[C, H, W]` inputs, per-feature for flat inputs.
    BatchNorm,
    Dropout { p: f64 },
    Flatten,
    Dense { units: usize },
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv2d {
                kernel,
                filters,
                stride,
            } => write!(f, "Conv2d(k={kernel}, filters={filters}, stride={stride})"),
            LayerSpec::MaxPool2d { window } => write!(f, "MaxPool2d({window})"),
            LayerSpec::Relu => write!(f, "ReLU"),
            LayerSpec::BatchNorm => write!(f, "BatchNorm"),
            LayerSpec::Dropout { p } => write!(f, "Dropout({p})"),
            LayerSpec::Flatten => write!(f, "Flatten"),
            LayerSpec::Dense { units } => write!(f, "Dense({units})"),
        }
    }
}

/// Per-sample input shape plus the shared trunk. Heads are `Dense(num_classes)`
/// layers with zero-initialized bias, one per task, attached at initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub trunk: Vec<LayerSpec>,
}

/// A task head to attach: task id and its class count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub task: usize,
    pub classes: usize,
}

impl HeadSpec {
    pub fn new(task: usize, classes: usize) -> Self {
        Self { task, classes }
    }
}

impl NetworkSpec {
    /// Three `conv(3x3) -> max-pool(2) -> ReLU -> batch-norm` stages, flatten, dropout.
    pub fn small_cnn(input_shape: [usize; 3], filters: usize, dropout_p: f64) -> Self {
        let mut trunk = Vec::new();
        for _ in 0..3 {
            trunk.extend([
                LayerSpec::Conv2d {
                    kernel: 3,
                    filters,
                    stride: 1,
                },
                LayerSpec::MaxPool2d { window: 2 },
                LayerSpec::Relu,
                LayerSpec::BatchNorm,
            ]);
        }
        trunk.push(LayerSpec::Flatten);
        if dropout_p > 0.0 {
            trunk.push(LayerSpec::Dropout { p: dropout_p });
        }
        Self {
            input_shape: input_shape.to_vec(),
            trunk,
        }
    }

    /// Fully connected trunk: `Dense -> ReLU` per hidden width, then dropout.
    pub fn mlp(input_dim: usize, hidden: &[usize], dropout_p: f64) -> Self {
        let mut trunk = Vec::new();
        for &units in hidden {
            trunk.push(LayerSpec::Dense { units });
            trunk.push(LayerSpec::Relu);
        }
        if dropout_p > 0.0 {
            trunk.push(LayerSpec::Dropout { p: dropout_p });
        }
        Self {
            input_shape: vec![input_dim],
            trunk,
        }
    }

    /// Output shape of every layer, checking compatibility along the way.
    /// Entry 0 is the input shape; entry `i + 1` is the output of layer `i`.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "invalid input shape {:?}",
                self.input_shape
            )));
        }
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.trunk.iter().enumerate() {
            let input = shapes.last().unwrap();
            let out = layer_output(layer, input).map_err(|reason| Error::IncompatibleLayers {
                index: i,
                from: if i == 0 {
                    format!("input {:?}", self.input_shape)
                } else {
                    format!("{} -> {:?}", self.trunk[i - 1], input)
                },
                next: i + 1,
                to: layer.to_string(),
                reason,
            })?;
            shapes.push(out);
        }
        let last = shapes.last().unwrap();
        if last.len() != 1 {
            return Err(Error::IncompatibleLayers {
                index: self.trunk.len(),
                from: format!("trunk output {last:?}"),
                next: self.trunk.len() + 1,
                to: "Dense head".into(),
                reason: "heads need a flat feature vector; add Flatten".into(),
            });
        }
        Ok(shapes)
    }

    pub fn feature_dim(&self) -> Result<usize> {
        Ok(self.shapes()?.last().unwrap()[0])
    }
}

fn layer_output(layer: &LayerSpec, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
    let image = |what: &str| -> std::result::Result<(usize, usize, usize), String> {
        match *input {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(format!("{what} needs a [C, H, W] input, got {input:?}")),
        }
    };
    match *layer {
        LayerSpec::Conv2d {
            kernel,
            filters,
            stride,
        } => {
            let (_, h, w) = image("Conv2d")?;
            if kernel == 0 || filters == 0 || stride == 0 {
                return Err("kernel, filters and stride must be positive".into());
            }
            let pad = kernel / 2;
            if h + 2 * pad < kernel || w + 2 * pad < kernel {
                return Err(format!("kernel {kernel} larger than padded input {h}x{w}"));
            }
            Ok(vec![
                filters,
                (h + 2 * pad - kernel) / stride + 1,
                (w + 2 * pad - kernel) / stride + 1,
            ])
        }
        LayerSpec::MaxPool2d { window } => {
            let (c, h, w) = image("MaxPool2d")?;
            if window == 0 || h < window || w < window {
                return Err(format!("pool window {window} does not fit {h}x{w}"));
            }
            Ok(vec![c, h / window, w / window])
        }
        LayerSpec::Relu | LayerSpec::BatchNorm => Ok(input.to_vec()),
        LayerSpec::Dropout { p } => {
            if !(0.0..1.0).contains(&p) {
                return Err(format!("dropout probability {p} outside [0, 1)"));
            }
            Ok(input.to_vec())
        }
        LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        LayerSpec::Dense { units } => match *input {
            [_] if units > 0 => Ok(vec![units]),
            [_] => Err("Dense needs at least one unit".into()),
            _ => Err(format!("Dense needs a flat input, got {input:?}")),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cnn_on_mnist_shapes() {
        let spec = NetworkSpec::small_cnn([1, 28, 28], 80, 0.2);
        let shapes = spec.shapes().unwrap();
        assert_eq!(shapes[1], vec![80, 28, 28]);
        assert_eq!(shapes[2], vec![80, 14, 14]);
        assert_eq!(shapes[6], vec![80, 7, 7]);
        assert_eq!(shapes[10], vec![80, 3, 3]);
        assert_eq!(spec.feature_dim().unwrap(), 720);
    }

    #[test]
    fn dense_after_image_is_rejected_with_layer_pair() {
        let spec = NetworkSpec {
            input_shape: vec![1, 8, 8],
            trunk: vec![
                LayerSpec::Conv2d {
                    kernel: 3,
                    filters: 2,
                    stride: 1,
                },
                LayerSpec::Dense { units: 4 },
            ],
        };
        match spec.shapes() {
            Err(Error::IncompatibleLayers { index, next, to, .. }) => {
                assert_eq!((index, next), (1, 2));
                assert!(to.contains("Dense"));
            }
            other => panic!("expected layer error, got {other:?}"),
        }
    }

    #[test]
    fn unflattened_trunk_is_rejected() {
        let spec = NetworkSpec {
            input_shape: vec![1, 4, 4],
            trunk: vec![LayerSpec::Relu],
        };
        assert!(matches!(
            spec.shapes(),
            Err(Error::IncompatibleLayers { .. })
        ));
    }
}
