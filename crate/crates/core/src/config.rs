//! Network layout and model profiles.
//!
//! A [`NetworkConfig`] is the block/FC layout that activations are validated
//! against. A [`ModelProfile`] adds what a runtime needs to produce those
//! activations: tensor names and preprocessing constants. Profiles are TOML.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const VGG16_PROFILE: &str = include_str!("../profiles/vgg16.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl BlockShape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for BlockShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelOrder {
    Rgb,
    Bgr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Channel-major planes, `1 x C x H x W`.
    Nchw,
    /// Interleaved pixels, `1 x H x W x C`.
    Nhwc,
}

/// Network input geometry and preprocessing constants.
///
/// Each input value is `(pixel * scale - mean[c]) / std[c]`, where `c`
/// indexes channels in `channel_order` (so `mean` and `std` are listed in that
/// order too).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    #[serde(default = "default_input_tensor")]
    pub tensor: String,
    pub height: usize,
    pub width: usize,
    pub channel_order: ChannelOrder,
    #[serde(default = "default_layout")]
    pub layout: Layout,
    pub mean: [f32; 3],
    #[serde(default = "one")]
    pub scale: f32,
    #[serde(default = "ones")]
    pub std: [f32; 3],
}

fn default_input_tensor() -> String {
    "data".into()
}

fn default_layout() -> Layout {
    Layout::Nchw
}

fn one() -> f32 {
    1.0
}

fn ones() -> [f32; 3] {
    [1.0; 3]
}

/// Block and FC layout of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    blocks: Vec<BlockShape>,
    pub fc1: usize,
    pub fc2: usize,
    pub classes: Option<usize>,
    pub input: InputSpec,
}

impl NetworkConfig {
    /// Checks that every block is non-empty and that spatial sizes halve from
    /// one block to the next.
    pub fn new(
        blocks: Vec<BlockShape>,
        fc1: usize,
        fc2: usize,
        classes: Option<usize>,
        input: InputSpec,
    ) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Config("network needs at least one block".into()));
        }
        if let Some((m, b)) = blocks.iter().enumerate().find(|(_, b)| b.is_empty()) {
            return Err(Error::Config(format!("block {} has empty shape {b}", m + 1)));
        }
        for m in 1..blocks.len() {
            let (prev, cur) = (blocks[m - 1], blocks[m]);
            if prev.height != 2 * cur.height || prev.width != 2 * cur.width {
                return Err(Error::Config(format!(
                    "block {} is {}x{} but block {} is {}x{}; spatial size must halve per block",
                    m,
                    prev.height,
                    prev.width,
                    m + 1,
                    cur.height,
                    cur.width
                )));
            }
        }
        if fc1 == 0 || fc2 == 0 {
            return Err(Error::Config("FC widths must be positive".into()));
        }
        if input.height == 0 || input.width == 0 {
            return Err(Error::Config("input size must be positive".into()));
        }
        if input.std.iter().any(|&s| s == 0.0 || !s.is_finite()) {
            return Err(Error::Config("input std must be finite and non-zero".into()));
        }
        Ok(Self {
            blocks,
            fc1,
            fc2,
            classes,
            input,
        })
    }

    /// The bundled VGG16 layout.
    pub fn vgg16() -> Self {
        ModelProfile::vgg16().network_config().clone()
    }

    /// Number of convolutional blocks, `N`.
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[BlockShape] {
        &self.blocks
    }

    /// Shape of block `m` (1-based).
    pub fn block(&self, m: usize) -> BlockShape {
        self.blocks[m - 1]
    }

    pub fn last_block(&self) -> BlockShape {
        *self.blocks.last().unwrap()
    }

    /// Spatial factor `2^(N-m)` between block `m` and the last block.
    pub fn scale_factor(&self, m: usize) -> usize {
        1 << (self.num_blocks() - m)
    }

    /// Dimensionality of the FC neural code.
    pub fn fc_dim(&self) -> usize {
        self.fc1 + self.fc2
    }

    /// Dimensionality of the convolutional descriptor, the sum of `C_m`.
    pub fn conv_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.channels).sum()
    }

    pub fn combined_dim(&self) -> usize {
        self.fc_dim() + self.conv_dim()
    }
}

/// A named tensor of fixed size, as it appears in a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorTensor {
    pub tensor: String,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockTensor {
    pub tensor: String,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSource {
    /// Path of the exchange-format model, relative to the profile file.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    name: String,
    #[serde(default)]
    model: ModelSource,
    input: InputSpec,
    blocks: Vec<BlockTensor>,
    fc1: VectorTensor,
    fc2: VectorTensor,
    softmax: Option<VectorTensor>,
}

/// A network layout together with the tensor names that expose each block
/// output, both FC activations and the softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelProfile {
    pub name: String,
    /// Resolved model path, if the profile names one.
    pub model_path: Option<PathBuf>,
    pub block_tensors: Vec<String>,
    pub fc1_tensor: String,
    pub fc2_tensor: String,
    pub softmax_tensor: Option<String>,
    config: NetworkConfig,
}

impl ModelProfile {
    pub fn vgg16() -> Self {
        Self::from_toml_str(VGG16_PROFILE, None).expect("bundled VGG16 profile is valid")
    }

    /// Parses a profile. A relative model path is resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let file: ProfileFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid profile: {e}")))?;
        let blocks = file
            .blocks
            .iter()
            .map(|b| BlockShape::new(b.height, b.width, b.channels))
            .collect();
        let config = NetworkConfig::new(
            blocks,
            file.fc1.size,
            file.fc2.size,
            file.softmax.as_ref().map(|s| s.size),
            file.input,
        )?;
        let model_path = file.model.path.map(|p| match base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p,
        });
        Ok(Self {
            name: file.name,
            model_path,
            block_tensors: file.blocks.into_iter().map(|b| b.tensor).collect(),
            fc1_tensor: file.fc1.tensor,
            fc2_tensor: file.fc2.tensor,
            softmax_tensor: file.softmax.map(|s| s.tensor),
            config,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path.parent())
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Serialises the profile back to TOML. The model path is written as
    /// given, so callers writing next to the model should pass a relative one.
    pub fn to_toml_string(&self) -> String {
        let cfg = &self.config;
        let file = ProfileFile {
            name: self.name.clone(),
            model: ModelSource {
                path: self.model_path.clone(),
            },
            input: cfg.input.clone(),
            blocks: cfg
                .blocks()
                .iter()
                .zip(&self.block_tensors)
                .map(|(b, t)| BlockTensor {
                    tensor: t.clone(),
                    height: b.height,
                    width: b.width,
                    channels: b.channels,
                })
                .collect(),
            fc1: VectorTensor {
                tensor: self.fc1_tensor.clone(),
                size: cfg.fc1,
            },
            fc2: VectorTensor {
                tensor: self.fc2_tensor.clone(),
                size: cfg.fc2,
            },
            softmax: self
                .softmax_tensor
                .as_ref()
                .zip(cfg.classes)
                .map(|(t, size)| VectorTensor {
                    tensor: t.clone(),
                    size,
                }),
        };
        toml::to_string(&file).expect("profile serialises")
    }

    pub fn new(
        name: impl Into<String>,
        config: NetworkConfig,
        block_tensors: Vec<String>,
        fc1_tensor: impl Into<String>,
        fc2_tensor: impl Into<String>,
        softmax_tensor: Option<String>,
    ) -> Result<Self> {
        if block_tensors.len() != config.num_blocks() {
            return Err(Error::Config(format!(
                "{} block tensor names for {} blocks",
                block_tensors.len(),
                config.num_blocks()
            )));
        }
        Ok(Self {
            name: name.into(),
            model_path: None,
            block_tensors,
            fc1_tensor: fc1_tensor.into(),
            fc2_tensor: fc2_tensor.into(),
            softmax_tensor,
            config,
        })
    }

    pub fn network_config(&self) -> &NetworkConfig {
        &self.config
    }

    /// All tensor names the runtime must expose, in activation order.
    pub fn output_tensors(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.block_tensors.iter().map(String::as_str).collect();
        names.push(&self.fc1_tensor);
        names.push(&self.fc2_tensor);
        if let Some(s) = &self.softmax_tensor {
            names.push(s);
        }
        names
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_vgg16_layout() {
        let cfg = NetworkConfig::vgg16();
        let shapes: Vec<_> = cfg
            .blocks()
            .iter()
            .map(|b| (b.height, b.width, b.channels))
            .collect();
        assert_eq!(
            shapes,
            vec![
                (112, 112, 64),
                (56, 56, 128),
                (28, 28, 256),
                (14, 14, 512),
                (7, 7, 512)
            ]
        );
        assert_eq!((cfg.fc1, cfg.fc2), (4096, 4096));
        assert_eq!(cfg.fc_dim(), 8192);
        assert_eq!(cfg.conv_dim(), 1472);
        assert_eq!(cfg.combined_dim(), 9664);
        assert_eq!(cfg.scale_factor(1), 16);
        assert_eq!(cfg.scale_factor(5), 1);
        assert_eq!((cfg.input.height, cfg.input.width), (224, 224));
    }

    #[test]
    fn non_halving_blocks_are_rejected() {
        let input = NetworkConfig::vgg16().input;
        let err = NetworkConfig::new(
            vec![BlockShape::new(8, 8, 4), BlockShape::new(3, 3, 4)],
            4,
            4,
            None,
            input,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn profile_round_trips_through_toml() {
        let p = ModelProfile::vgg16();
        let again = ModelProfile::from_toml_str(&p.to_toml_string(), None).unwrap();
        assert_eq!(p, again);
        assert_eq!(p.output_tensors().len(), 8);
    }

    #[test]
    fn relative_model_path_resolves_against_profile_dir() {
        let text = VGG16_PROFILE.replace("[input]", "[model]\npath = \"net.onnx\"\n\n[input]");
        let p = ModelProfile::from_toml_str(&text, Some(Path::new("/models"))).unwrap();
        assert_eq!(p.model_path.as_deref(), Some(Path::new("/models/net.onnx")));
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let text = VGG16_PROFILE.replace("[input]", "bogus = 1\n[input]");
        assert!(matches!(
            ModelProfile::from_toml_str(&text, None),
            Err(Error::Config(_))
        ));
    }
}
