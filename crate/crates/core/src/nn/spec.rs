use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const LAYER_NAMES: [&str; 5] = ["conv1", "conv2", "conv3", "dense1", "head"];
pub const CONV_LAYERS: usize = 3;
pub const FEATURE_LAYER: usize = 3;
pub const HEAD_LAYER: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    /// Zero cells added on every side of the input.
    #[serde(default)]
    pub padding: usize,
}

impl ConvSpec {
    pub const fn new(filters: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            filters,
            kernel,
            stride,
            padding,
        }
    }
}

/// Shape of the fixed 3-conv + 2-dense value network.
///
/// Activations are stored height-major, channels last. Conv weights are laid
/// out `[kernel, kernel, in_channels, filters]`, dense weights `[out, in]`.
/// `lateral_width` extra inputs are appended to the features before the head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: [usize; 3],
    pub convs: [ConvSpec; 3],
    pub feature_width: usize,
    pub head_width: usize,
    #[serde(default)]
    pub lateral_width: usize,
}

impl NetworkSpec {
    /// Desk-scale network on the 10x10x8 game observations. The stride-2
    /// layer is padded so that its windows reach the last row and column of
    /// the 8x8 map; unpadded, the bottom and right edges of the board would
    /// never influence the output.
    pub fn desk(head_width: usize) -> Self {
        Self {
            input: [10, 10, 8],
            convs: [
                ConvSpec::new(16, 3, 1, 0),
                ConvSpec::new(16, 3, 2, 1),
                ConvSpec::new(16, 3, 1, 0),
            ],
            feature_width: 64,
            head_width,
            lateral_width: 0,
        }
    }

    /// Tiny network on a 4x4 input, used for finite-difference checks.
    pub fn reduced(head_width: usize) -> Self {
        Self {
            input: [4, 4, 2],
            convs: [
                ConvSpec::new(3, 2, 1, 0),
                ConvSpec::new(3, 2, 1, 0),
                ConvSpec::new(2, 2, 1, 0),
            ],
            feature_width: 5,
            head_width,
            lateral_width: 0,
        }
    }

    /// Tiny network on a 5x5 input with a padded stride-2 middle convolution.
    pub fn reduced_strided(head_width: usize) -> Self {
        Self {
            input: [5, 5, 2],
            convs: [
                ConvSpec::new(3, 2, 1, 0),
                ConvSpec::new(3, 2, 2, 1),
                ConvSpec::new(2, 2, 1, 0),
            ],
            feature_width: 4,
            head_width,
            lateral_width: 0,
        }
    }

    pub fn with_head(&self, head_width: usize) -> Self {
        Self {
            head_width,
            ..self.clone()
        }
    }

    pub fn with_lateral(&self, lateral_width: usize) -> Self {
        Self {
            lateral_width,
            ..self.clone()
        }
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }

    /// `[height, width, channels]` of the input to each conv layer followed by
    /// the output of the last conv layer.
    pub fn conv_dims(&self) -> Result<[[usize; 3]; 4]> {
        let mut dims = [[0; 3]; 4];
        dims[0] = self.input;
        for (i, conv) in self.convs.iter().enumerate() {
            let [h, w, _] = dims[i];
            let (h, w) = (h + 2 * conv.padding, w + 2 * conv.padding);
            if conv.kernel == 0 || conv.stride == 0 || conv.filters == 0 {
                return Err(LabError::invalid(format!("conv{} has a zero size", i + 1)));
            }
            if h < conv.kernel || w < conv.kernel {
                return Err(LabError::invalid(format!(
                    "conv{} kernel {} larger than its {h}x{w} input",
                    i + 1,
                    conv.kernel
                )));
            }
            dims[i + 1] = [
                (h - conv.kernel) / conv.stride + 1,
                (w - conv.kernel) / conv.stride + 1,
                conv.filters,
            ];
        }
        Ok(dims)
    }

    pub fn flat_width(&self) -> Result<usize> {
        Ok(self.conv_dims()?[3].iter().product())
    }

    pub fn head_inputs(&self) -> usize {
        self.feature_width + self.lateral_width
    }

    /// Weight and bias shapes of the five layers, in order.
    pub fn layer_shapes(&self) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
        let dims = self.conv_dims()?;
        if self.feature_width == 0 || self.head_width == 0 {
            return Err(LabError::invalid("dense layer of width zero"));
        }
        if self.input.iter().any(|&d| d == 0) {
            return Err(LabError::invalid("input with a zero dimension"));
        }
        let mut shapes = Vec::with_capacity(5);
        for (i, conv) in self.convs.iter().enumerate() {
            shapes.push((
                vec![conv.kernel, conv.kernel, dims[i][2], conv.filters],
                vec![conv.filters],
            ));
        }
        shapes.push((
            vec![self.feature_width, self.flat_width()?],
            vec![self.feature_width],
        ));
        shapes.push((
            vec![self.head_width, self.head_inputs()],
            vec![self.head_width],
        ));
        Ok(shapes)
    }

    /// Number of inputs feeding each unit of the layer.
    pub fn fan_in(&self, layer: usize) -> Result<usize> {
        let shapes = self.layer_shapes()?;
        let w = &shapes[layer].0;
        Ok(if layer < CONV_LAYERS {
            w[0] * w[1] * w[2]
        } else {
            w[1]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_dims() {
        let spec = NetworkSpec::desk(6);
        let dims = spec.conv_dims().unwrap();
        assert_eq!(dims[1], [8, 8, 16]);
        assert_eq!(dims[2], [4, 4, 16]);
        assert_eq!(dims[3], [2, 2, 16]);
        let shapes = spec.layer_shapes().unwrap();
        assert_eq!(shapes.len(), 5);
        assert_eq!(shapes[3].0, vec![64, 64]);
        assert_eq!(shapes[4].0, vec![6, 64]);
        assert_eq!(spec.with_lateral(64).layer_shapes().unwrap()[4].0, vec![6, 128]);
    }

    #[test]
    fn reduced_dims() {
        assert_eq!(NetworkSpec::reduced(3).conv_dims().unwrap()[3], [1, 1, 2]);
        assert_eq!(NetworkSpec::reduced_strided(3).conv_dims().unwrap()[3], [2, 2, 2]);
    }

    #[test]
    fn rejects_oversized_kernel() {
        let mut spec = NetworkSpec::reduced(2);
        spec.input = [2, 2, 1];
        assert!(spec.layer_shapes().is_err());
    }
}
