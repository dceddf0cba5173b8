use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "function", rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    LeakyRelu { alpha: f64 },
    Tanh,
    Sigmoid,
    None,
}

impl ActivationKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ActivationKind::LeakyRelu { alpha } if !(alpha > 0.0 && alpha < 1.0) => Err(
                Error::Parameter(format!("leaky_relu alpha must lie in (0,1), got {alpha}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Geometry of a (transposed) convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    /// Extra rows/cols appended to a transposed convolution's output. Always 0 for `conv`.
    #[serde(default)]
    pub output_padding: (usize, usize),
    /// A per-channel bias is dead weight when a normalization layer follows.
    #[serde(default = "yes")]
    pub bias: bool,
}

fn yes() -> bool {
    true
}

impl ConvGeometry {
    pub fn new(out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            out_channels,
            kernel: (kernel, kernel),
            stride: (stride, stride),
            padding: (padding, padding),
            output_padding: (0, 0),
            bias: true,
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn with_output_padding(mut self, op: usize) -> Self {
        self.output_padding = (op, op);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_channels == 0 || self.kernel.0 == 0 || self.kernel.1 == 0 {
            return Err(Error::Parameter("conv kernel and channels must be >= 1".into()));
        }
        if self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(Error::Parameter("conv stride must be >= 1".into()));
        }
        if self.output_padding.0 >= self.stride.0 || self.output_padding.1 >= self.stride.1 {
            return Err(Error::Parameter(
                "output padding must be smaller than the stride".into(),
            ));
        }
        Ok(())
    }
}

/// One entry in a network's layer table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv(ConvGeometry),
    ConvTranspose(ConvGeometry),
    InstanceNorm { eps: f64 },
    Activation(ActivationKind),
    Dropout { rate: f64 },
    Dense { out_features: usize },
    Flatten,
    /// Reinterpret a flat `(n, c*h*w, 1, 1)` tensor as `(n, c, h, w)`.
    Reshape { channels: usize, height: usize, width: usize },
    /// Elementwise `y = scale * x + offset`.
    Rescale { scale: f64, offset: f64 },
    /// `y = x + body(x)`.
    ResidualBlock { body: Vec<LayerSpec> },
}

impl LayerSpec {
    pub fn conv(out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec::Conv(ConvGeometry::new(out_channels, kernel, stride, padding))
    }

    pub fn conv_transpose(
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Self {
        LayerSpec::ConvTranspose(
            ConvGeometry::new(out_channels, kernel, stride, padding)
                .with_output_padding(output_padding),
        )
    }

    pub fn instance_norm() -> Self {
        LayerSpec::InstanceNorm { eps: 1e-5 }
    }

    pub fn relu() -> Self {
        LayerSpec::Activation(ActivationKind::Relu)
    }

    pub fn leaky_relu(alpha: f64) -> Self {
        LayerSpec::Activation(ActivationKind::LeakyRelu { alpha })
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv(_) => "conv",
            LayerSpec::ConvTranspose(_) => "conv_transpose",
            LayerSpec::InstanceNorm { .. } => "instance_norm",
            LayerSpec::Activation(_) => "activation",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Reshape { .. } => "reshape",
            LayerSpec::Rescale { .. } => "rescale",
            LayerSpec::ResidualBlock { .. } => "residual_block",
        }
    }

    /// Output (c, h, w) for a given input (c, h, w).
    pub fn output_dims(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let [c, h, w] = input;
        match self {
            LayerSpec::Conv(g) => {
                g.validate()?;
                let oh = conv_out_len(h, g.kernel.0, g.stride.0, g.padding.0, "height")?;
                let ow = conv_out_len(w, g.kernel.1, g.stride.1, g.padding.1, "width")?;
                Ok([g.out_channels, oh, ow])
            }
            LayerSpec::ConvTranspose(g) => {
                g.validate()?;
                let oh = conv_transpose_out_len(h, g.kernel.0, g.stride.0, g.padding.0, g.output_padding.0, "height")?;
                let ow = conv_transpose_out_len(w, g.kernel.1, g.stride.1, g.padding.1, g.output_padding.1, "width")?;
                Ok([g.out_channels, oh, ow])
            }
            LayerSpec::InstanceNorm { eps } => {
                if *eps <= 0.0 {
                    return Err(Error::Parameter("instance norm eps must be > 0".into()));
                }
                Ok(input)
            }
            LayerSpec::Activation(kind) => {
                kind.validate()?;
                Ok(input)
            }
            LayerSpec::Dropout { rate } => {
                check_dropout_rate(*rate)?;
                Ok(input)
            }
            LayerSpec::Rescale { .. } => Ok(input),
            LayerSpec::Dense { out_features } => {
                if h != 1 || w != 1 {
                    return Err(Error::Dimension {
                        axis: "height",
                        expected: 1,
                        actual: h,
                    });
                }
                Ok([*out_features, 1, 1])
            }
            LayerSpec::Flatten => Ok([c * h * w, 1, 1]),
            LayerSpec::Reshape {
                channels,
                height,
                width,
            } => {
                let want = channels * height * width;
                if want != c * h * w {
                    return Err(Error::Dimension {
                        axis: "channels",
                        expected: want,
                        actual: c * h * w,
                    });
                }
                Ok([*channels, *height, *width])
            }
            LayerSpec::ResidualBlock { body } => {
                let mut dims = input;
                for layer in body {
                    dims = layer.output_dims(dims)?;
                }
                if dims != input {
                    return Err(Error::Dimension {
                        axis: "channels",
                        expected: input[0],
                        actual: dims[0],
                    });
                }
                Ok(input)
            }
        }
    }
}

pub(crate) fn check_dropout_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("dropout rate must lie in [0,1), got {rate}")))
    }
}

/// `floor((len + 2p - k) / s) + 1`.
pub fn conv_out_len(len: usize, k: usize, s: usize, p: usize, axis: &'static str) -> Result<usize> {
    let padded = len + 2 * p;
    if padded < k {
        return Err(Error::Dimension {
            axis,
            expected: k,
            actual: padded,
        });
    }
    Ok((padded - k) / s + 1)
}

/// `(len - 1) * s - 2p + k + op`.
pub fn conv_transpose_out_len(
    len: usize,
    k: usize,
    s: usize,
    p: usize,
    op: usize,
    axis: &'static str,
) -> Result<usize> {
    let full = (len - 1) * s + k + op;
    if full <= 2 * p {
        return Err(Error::Dimension {
            axis,
            expected: 2 * p + 1,
            actual: full,
        });
    }
    Ok(full - 2 * p)
}
