use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Valid (unpadded) square convolution, stride 1.
    Conv2d { filters: usize, kernel: usize, activation: Activation },
    /// Non-overlapping square max-pool; remainders are dropped.
    MaxPool { size: usize },
    Flatten,
    Dense { units: usize, activation: Activation },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Map { channels: usize, height: usize, width: usize },
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Map { channels, height, width } => channels * height * width,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Layer stack; the last layer must be dense and its logits go through a
/// softmax.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnSpec {
    pub layers: Vec<LayerSpec>,
}

impl CnnSpec {
    /// conv 8@3x3, pool 2, conv 4@3x3, pool 2, dense 512, dense 256, dense z.
    pub fn reference(classes: usize) -> Self {
        use Activation::*;
        Self {
            layers: vec![
                LayerSpec::Conv2d { filters: 8, kernel: 3, activation: Relu },
                LayerSpec::MaxPool { size: 2 },
                LayerSpec::Conv2d { filters: 4, kernel: 3, activation: Relu },
                LayerSpec::MaxPool { size: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 512, activation: Relu },
                LayerSpec::Dense { units: 256, activation: Relu },
                LayerSpec::Dense { units: classes, activation: Linear },
            ],
        }
    }

    pub fn classes(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Dense { units, .. }) => *units,
            _ => 0,
        }
    }

    /// Input shape of every layer followed by the output shape.
    pub fn shapes(&self, height: usize, width: usize) -> Result<Vec<Shape>> {
        if !matches!(self.layers.last(), Some(LayerSpec::Dense { units, .. }) if *units >= 2) {
            return Err(Error::Spec("last layer must be dense with >= 2 units".into()));
        }
        let mut shape = Shape::Map { channels: 1, height, width };
        let mut shapes = vec![shape];
        for (i, layer) in self.layers.iter().enumerate() {
            shape = match (*layer, shape) {
                (LayerSpec::Conv2d { filters, kernel, .. }, Shape::Map { height, width, .. }) => {
                    if filters == 0 || kernel == 0 || kernel > height || kernel > width {
                        return Err(Error::Spec(format!(
                            "layer {i}: {filters} filters of {kernel}x{kernel} on {height}x{width}"
                        )));
                    }
                    Shape::Map { channels: filters, height: height - kernel + 1, width: width - kernel + 1 }
                }
                (LayerSpec::MaxPool { size }, Shape::Map { channels, height, width }) => {
                    if size == 0 || size > height || size > width {
                        return Err(Error::Spec(format!("layer {i}: pool {size} on {height}x{width}")));
                    }
                    Shape::Map { channels, height: height / size, width: width / size }
                }
                (LayerSpec::Flatten, s) => Shape::Flat(s.len()),
                (LayerSpec::Dense { units, .. }, Shape::Flat(_)) if units > 0 => Shape::Flat(units),
                (l, s) => return Err(Error::Spec(format!("layer {i}: {l:?} cannot follow {s:?}"))),
            };
            shapes.push(shape);
        }
        Ok(shapes)
    }

    /// Trainable weights plus biases.
    pub fn param_count(&self, height: usize, width: usize) -> Result<usize> {
        let shapes = self.shapes(height, width)?;
        Ok(self
            .layers
            .iter()
            .zip(&shapes)
            .map(|(layer, input)| match (*layer, *input) {
                (LayerSpec::Conv2d { filters, kernel, .. }, Shape::Map { channels, .. }) => {
                    filters * (channels * kernel * kernel + 1)
                }
                (LayerSpec::Dense { units, .. }, input) => units * (input.len() + 1),
                _ => 0,
            })
            .sum())
    }

    /// Multiply-accumulates of one inference (convolutions and dense layers).
    pub fn mac_count(&self, height: usize, width: usize) -> Result<u64> {
        let shapes = self.shapes(height, width)?;
        Ok(self
            .layers
            .iter()
            .zip(shapes.windows(2))
            .map(|(layer, io)| match (*layer, io[0], io[1]) {
                (
                    LayerSpec::Conv2d { kernel, .. },
                    Shape::Map { channels, .. },
                    Shape::Map { channels: filters, height, width },
                ) => (height * width * filters * channels * kernel * kernel) as u64,
                (LayerSpec::Dense { units, .. }, input, _) => (input.len() * units) as u64,
                _ => 0,
            })
            .sum())
    }
}
