use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::{ActivationKind, LayerSpec};

pub const LEAKY_SLOPE: f64 = 0.2;
pub const DCGAN_DROPOUT: f64 = 0.4;
pub const DCGAN_SEED_SIZE: usize = 8;

/// A declarative network: its layer table and the per-sample shapes it maps between.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    /// (channels, height, width) of one input sample.
    pub input_shape: [usize; 3],
    pub output_shape: [usize; 3],
}

/// Name and shape of one learnable tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    pub shape: [usize; 4],
    pub role: ParamRole,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    Gamma,
    Beta,
}

impl NetworkSpec {
    pub fn new(name: impl Into<String>, input_shape: [usize; 3], layers: Vec<LayerSpec>) -> Result<Self> {
        if input_shape.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("input shape must be positive, got {input_shape:?}")));
        }
        let mut dims = input_shape;
        for layer in &layers {
            dims = layer.output_dims(dims)?;
        }
        Ok(Self {
            name: name.into(),
            layers,
            input_shape,
            output_shape: dims,
        })
    }

    /// Per-sample shape entering each top-level layer, followed by the final output shape.
    pub fn shape_chain(&self) -> Result<Vec<[usize; 3]>> {
        let mut dims = self.input_shape;
        let mut chain = vec![dims];
        for layer in &self.layers {
            dims = layer.output_dims(dims)?;
            chain.push(dims);
        }
        Ok(chain)
    }

    /// Same layers, different input resolution.
    pub fn with_input(&self, input_shape: [usize; 3]) -> Result<Self> {
        Self::new(self.name.clone(), input_shape, self.layers.clone())
    }

    /// Learnable tensors in the order the forward pass consumes them.
    pub fn param_table(&self) -> Result<Vec<ParamInfo>> {
        let mut out = Vec::new();
        collect_params(&self.layers, self.input_shape, "", &mut out)?;
        Ok(out)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self
            .param_table()?
            .iter()
            .map(|p| p.shape.iter().product::<usize>())
            .sum())
    }
}

fn collect_params(layers: &[LayerSpec], input: [usize; 3], prefix: &str, out: &mut Vec<ParamInfo>) -> Result<()> {
    let mut dims = input;
    for (i, layer) in layers.iter().enumerate() {
        let base = format!("{prefix}{i}.{}", layer.name());
        let mut push = |suffix: &str, shape: [usize; 4], role: ParamRole| {
            out.push(ParamInfo {
                name: format!("{base}.{suffix}"),
                shape,
                role,
            })
        };
        match layer {
            LayerSpec::Conv(g) => {
                push("weight", [g.out_channels, dims[0], g.kernel.0, g.kernel.1], ParamRole::Weight);
                if g.bias {
                    push("bias", [g.out_channels, 1, 1, 1], ParamRole::Bias);
                }
            }
            LayerSpec::ConvTranspose(g) => {
                push("weight", [dims[0], g.out_channels, g.kernel.0, g.kernel.1], ParamRole::Weight);
                if g.bias {
                    push("bias", [g.out_channels, 1, 1, 1], ParamRole::Bias);
                }
            }
            LayerSpec::InstanceNorm { .. } => {
                push("gamma", [dims[0], 1, 1, 1], ParamRole::Gamma);
                push("beta", [dims[0], 1, 1, 1], ParamRole::Beta);
            }
            LayerSpec::Dense { out_features } => {
                push("weight", [*out_features, dims[0], 1, 1], ParamRole::Weight);
                push("bias", [*out_features, 1, 1, 1], ParamRole::Bias);
            }
            LayerSpec::ResidualBlock { body } => {
                collect_params(body, dims, &format!("{base}."), out)?;
            }
            LayerSpec::Activation(_)
            | LayerSpec::Dropout { .. }
            | LayerSpec::Flatten
            | LayerSpec::Reshape { .. }
            | LayerSpec::Rescale { .. } => {}
        }
        dims = layer.output_dims(dims)?;
    }
    Ok(())
}

fn unbiased(layer: LayerSpec) -> LayerSpec {
    match layer {
        LayerSpec::Conv(g) => LayerSpec::Conv(g.without_bias()),
        LayerSpec::ConvTranspose(g) => LayerSpec::ConvTranspose(g.without_bias()),
        other => other,
    }
}

/// conv (no bias, the norm removes it) + instance norm + activation.
fn conv_norm_act(out: &mut Vec<LayerSpec>, conv: LayerSpec, act: LayerSpec) {
    out.push(unbiased(conv));
    out.push(LayerSpec::instance_norm());
    out.push(act);
}

/// Residual body: conv3x3 + IN + ReLU + conv3x3 + IN.
pub fn residual_block(channels: usize) -> LayerSpec {
    LayerSpec::ResidualBlock {
        body: vec![
            unbiased(LayerSpec::conv(channels, 3, 1, 1)),
            LayerSpec::instance_norm(),
            LayerSpec::relu(),
            unbiased(LayerSpec::conv(channels, 3, 1, 1)),
            LayerSpec::instance_norm(),
        ],
    }
}

/// Encoder (7x7 s1, 3x3 s2, 3x3 s2), `n_blocks` residual blocks, two stride-2
/// transposed convolutions, and a 7x7 tanh head remapped to [0, 1].
pub fn build_resnet_generator(
    in_channels: usize,
    base_filters: usize,
    n_blocks: usize,
    image_size: usize,
) -> Result<NetworkSpec> {
    if image_size == 0 || image_size % 4 != 0 {
        return Err(Error::Config(format!(
            "generator image size must be a positive multiple of 4, got {image_size}"
        )));
    }
    let f = base_filters;
    let mut layers = Vec::new();
    conv_norm_act(&mut layers, LayerSpec::conv(f, 7, 1, 3), LayerSpec::relu());
    conv_norm_act(&mut layers, LayerSpec::conv(2 * f, 3, 2, 1), LayerSpec::relu());
    conv_norm_act(&mut layers, LayerSpec::conv(4 * f, 3, 2, 1), LayerSpec::relu());
    for _ in 0..n_blocks {
        layers.push(residual_block(4 * f));
    }
    conv_norm_act(&mut layers, LayerSpec::conv_transpose(2 * f, 3, 2, 1, 1), LayerSpec::relu());
    conv_norm_act(&mut layers, LayerSpec::conv_transpose(f, 3, 2, 1, 1), LayerSpec::relu());
    layers.push(LayerSpec::conv(in_channels, 7, 1, 3));
    layers.push(LayerSpec::Activation(ActivationKind::Tanh));
    layers.push(LayerSpec::Rescale { scale: 0.5, offset: 0.5 });
    NetworkSpec::new("resnet_generator", [in_channels, image_size, image_size], layers)
}

/// 70x70 PatchGAN: 4x4 convs with 64/128/256/512/1 filters, strides 2,2,2,1,1,
/// instance norm on layers 2-4, LeakyReLU(0.2) on layers 1-4, linear scores.
pub fn build_patch_discriminator(in_channels: usize, image_size: usize) -> Result<NetworkSpec> {
    build_patch_discriminator_with(in_channels, &[64, 128, 256, 512], image_size)
}

/// PatchGAN with a custom filter ladder. Every hidden layer but the last
/// downsamples by 2; the last hidden layer and the 1-filter head use stride 1.
pub fn build_patch_discriminator_with(
    in_channels: usize,
    filters: &[usize],
    image_size: usize,
) -> Result<NetworkSpec> {
    if filters.is_empty() {
        return Err(Error::Config("discriminator needs at least one hidden layer".into()));
    }
    let mut layers = Vec::new();
    for (i, &k) in filters.iter().enumerate() {
        let stride = if i + 1 == filters.len() { 1 } else { 2 };
        if i > 0 {
            layers.push(unbiased(LayerSpec::conv(k, 4, stride, 1)));
            layers.push(LayerSpec::instance_norm());
        } else {
            layers.push(LayerSpec::conv(k, 4, stride, 1));
        }
        layers.push(LayerSpec::leaky_relu(LEAKY_SLOPE));
    }
    layers.push(LayerSpec::conv(1, 4, 1, 1));
    NetworkSpec::new("patch_discriminator", [in_channels, image_size, image_size], layers)
}

/// Dense seed to 256x8x8, three 4x4 stride-2 transposed convs (256, 128, 64),
/// 3x3 sigmoid head.
pub fn build_dcgan_generator(latent_dim: usize, image_size: usize) -> Result<NetworkSpec> {
    let s = DCGAN_SEED_SIZE;
    if image_size != s * 8 {
        return Err(Error::Config(format!(
            "DCGAN generator produces {}x{} images, got image size {image_size}",
            s * 8,
            s * 8
        )));
    }
    if latent_dim == 0 {
        return Err(Error::Config("latent dimension must be positive".into()));
    }
    let layers = vec![
        LayerSpec::Dense { out_features: 256 * s * s },
        LayerSpec::Reshape { channels: 256, height: s, width: s },
        LayerSpec::leaky_relu(LEAKY_SLOPE),
        LayerSpec::conv_transpose(256, 4, 2, 1, 0),
        LayerSpec::leaky_relu(LEAKY_SLOPE),
        LayerSpec::conv_transpose(128, 4, 2, 1, 0),
        LayerSpec::leaky_relu(LEAKY_SLOPE),
        LayerSpec::conv_transpose(64, 4, 2, 1, 0),
        LayerSpec::leaky_relu(LEAKY_SLOPE),
        LayerSpec::conv(1, 3, 1, 1),
        LayerSpec::Activation(ActivationKind::Sigmoid),
    ];
    NetworkSpec::new("dcgan_generator", [latent_dim, 1, 1], layers)
}

/// Three 4x4 stride-2 convs (64, 128, 256) each with LeakyReLU(0.2) and
/// dropout(0.4), flattened into a sigmoid dense unit.
pub fn build_dcgan_discriminator(image_size: usize) -> Result<NetworkSpec> {
    if image_size == 0 || image_size % 8 != 0 {
        return Err(Error::Config(format!(
            "DCGAN discriminator image size must be a multiple of 8, got {image_size}"
        )));
    }
    let mut layers = Vec::new();
    for k in [64, 128, 256] {
        layers.push(LayerSpec::conv(k, 4, 2, 1));
        layers.push(LayerSpec::leaky_relu(LEAKY_SLOPE));
        layers.push(LayerSpec::Dropout { rate: DCGAN_DROPOUT });
    }
    layers.push(LayerSpec::Flatten);
    layers.push(LayerSpec::Dense { out_features: 1 });
    layers.push(LayerSpec::Activation(ActivationKind::Sigmoid));
    NetworkSpec::new("dcgan_discriminator", [1, image_size, image_size], layers)
}

/// Receptive field along the row axis: `rf += (k - 1) * jump; jump *= stride`.
pub fn receptive_field(spec: &NetworkSpec) -> Result<usize> {
    let mut rf = 1;
    let mut jump = 1;
    for layer in &spec.layers {
        match layer {
            LayerSpec::Conv(g) => {
                rf += (g.kernel.0 - 1) * jump;
                jump *= g.stride.0;
            }
            LayerSpec::InstanceNorm { .. }
            | LayerSpec::Activation(_)
            | LayerSpec::Dropout { .. }
            | LayerSpec::Rescale { .. } => {}
            other => {
                return Err(Error::Unsupported(format!(
                    "receptive field is undefined for `{}` layers",
                    other.name()
                )))
            }
        }
    }
    Ok(rf)
}
