//! Activation containers for one image: per-block feature maps plus the two
//! fully connected vectors.
//!
//! Feature maps are row-major, `(i, j)` indexing row `i` over the height and
//! column `j` over the width. All values are post-ReLU and therefore
//! non-negative; negative or non-finite values are rejected on construction.

use std::fmt;

use crate::config::{BlockShape, NetworkConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Tensor(format!(
                "feature map must be non-empty, got {height}x{width}"
            )));
        }
        if values.len() != height * width {
            return Err(Error::Tensor(format!(
                "feature map {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        check_activations(&values, "feature map")?;
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.width + j]
    }
}

/// Output of one convolutional block (taken at its max-pooling layer).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockActivations {
    index: usize,
    channels: Vec<FeatureMap>,
}

impl BlockActivations {
    /// `index` is the 1-based block number `m`.
    pub fn new(index: usize, channels: Vec<FeatureMap>) -> Result<Self> {
        if index == 0 {
            return Err(Error::Tensor("block indices start at 1".into()));
        }
        let first = channels
            .first()
            .ok_or_else(|| Error::Tensor(format!("block {index} has no channels")))?;
        let (h, w) = (first.height, first.width);
        if let Some((k, bad)) = channels
            .iter()
            .enumerate()
            .find(|(_, c)| c.height != h || c.width != w)
        {
            return Err(Error::Tensor(format!(
                "block {index}: channel {k} is {}x{}, expected {h}x{w}",
                bad.height, bad.width
            )));
        }
        Ok(Self { index, channels })
    }

    /// Splits a channel-major `C x H x W` buffer into feature maps.
    pub fn from_channel_major(
        index: usize,
        shape: BlockShape,
        data: &[f32],
    ) -> Result<Self> {
        let plane = shape.height * shape.width;
        if data.len() != plane * shape.channels {
            return Err(Error::Tensor(format!(
                "block {index}: {} values do not fill {shape}",
                data.len()
            )));
        }
        let channels = data
            .chunks_exact(plane.max(1))
            .map(|c| FeatureMap::new(shape.height, shape.width, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(index, channels)
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn height(&self) -> usize {
        self.channels[0].height
    }

    pub fn width(&self) -> usize {
        self.channels[0].width
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn shape(&self) -> BlockShape {
        BlockShape::new(self.height(), self.width(), self.num_channels())
    }

    pub fn channel(&self, k: usize) -> &FeatureMap {
        &self.channels[k]
    }

    pub fn channels(&self) -> &[FeatureMap] {
        &self.channels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkActivations {
    blocks: Vec<BlockActivations>,
    fc1: Vec<f32>,
    fc2: Vec<f32>,
    class_probs: Option<Vec<f32>>,
}

/// Tolerance on the sum of softmax outputs.
pub const CLASS_PROB_SUM_TOLERANCE: f64 = 1e-5;

impl NetworkActivations {
    pub fn new(
        blocks: Vec<BlockActivations>,
        fc1: Vec<f32>,
        fc2: Vec<f32>,
        class_probs: Option<Vec<f32>>,
    ) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Tensor("network has no blocks".into()));
        }
        for (pos, b) in blocks.iter().enumerate() {
            if b.index != pos + 1 {
                return Err(Error::Tensor(format!(
                    "block at position {} is labelled {}",
                    pos + 1,
                    b.index
                )));
            }
        }
        check_activations(&fc1, "fc1")?;
        check_activations(&fc2, "fc2")?;
        if let Some(p) = &class_probs {
            check_activations(p, "class probabilities")?;
            let sum: f64 = p.iter().map(|&v| v as f64).sum();
            if (sum - 1.0).abs() > CLASS_PROB_SUM_TOLERANCE {
                return Err(Error::Tensor(format!(
                    "class probabilities sum to {sum}, expected 1"
                )));
            }
        }
        Ok(Self {
            blocks,
            fc1,
            fc2,
            class_probs,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Block `m`, 1-based.
    pub fn block(&self, m: usize) -> &BlockActivations {
        &self.blocks[m - 1]
    }

    pub fn blocks(&self) -> &[BlockActivations] {
        &self.blocks
    }

    pub fn last_block(&self) -> &BlockActivations {
        self.blocks.last().unwrap()
    }

    pub fn fc1(&self) -> &[f32] {
        &self.fc1
    }

    pub fn fc2(&self) -> &[f32] {
        &self.fc2
    }

    pub fn class_probs(&self) -> Option<&[f32]> {
        self.class_probs.as_deref()
    }

    /// Index of the most probable class, if class probabilities are present.
    pub fn predicted_class(&self) -> Option<usize> {
        let p = self.class_probs.as_ref()?;
        p.iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(k, _)| k)
    }
}

fn check_activations(values: &[f32], what: &str) -> Result<()> {
    if let Some((pos, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(Error::Tensor(format!(
            "{what}: value {v} at position {pos} is not a finite non-negative activation"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ShapeMismatch {
    BlockCount { expected: usize, actual: usize },
    Block {
        block: usize,
        expected: BlockShape,
        actual: BlockShape,
    },
    Fc1 { expected: usize, actual: usize },
    Fc2 { expected: usize, actual: usize },
}

impl fmt::Display for ShapeMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapeMismatch::BlockCount { expected, actual } => {
                write!(f, "expected {expected} blocks, got {actual}")
            }
            ShapeMismatch::Block {
                block,
                expected,
                actual,
            } => write!(f, "block {block}: expected {expected}, got {actual}"),
            ShapeMismatch::Fc1 { expected, actual } => {
                write!(f, "fc1: expected length {expected}, got {actual}")
            }
            ShapeMismatch::Fc2 { expected, actual } => {
                write!(f, "fc2: expected length {expected}, got {actual}")
            }
        }
    }
}

/// Outcome of [`validate_shapes`]; empty means the activations conform.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ShapeReport {
    pub mismatches: Vec<ShapeMismatch>,
}

impl ShapeReport {
    pub fn is_ok(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::Shape(self))
        }
    }
}

impl fmt::Display for ShapeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (n, m) in self.mismatches.iter().enumerate() {
            if n > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{m}")?;
        }
        Ok(())
    }
}

/// Compares every block and FC vector with `cfg`, reporting all mismatches.
pub fn validate_shapes(acts: &NetworkActivations, cfg: &NetworkConfig) -> ShapeReport {
    let mut mismatches = Vec::new();
    if acts.num_blocks() != cfg.num_blocks() {
        mismatches.push(ShapeMismatch::BlockCount {
            expected: cfg.num_blocks(),
            actual: acts.num_blocks(),
        });
    }
    for (block, expected) in acts.blocks().iter().zip(cfg.blocks()) {
        let actual = block.shape();
        if actual != *expected {
            mismatches.push(ShapeMismatch::Block {
                block: block.index(),
                expected: *expected,
                actual,
            });
        }
    }
    if acts.fc1().len() != cfg.fc1 {
        mismatches.push(ShapeMismatch::Fc1 {
            expected: cfg.fc1,
            actual: acts.fc1().len(),
        });
    }
    if acts.fc2().len() != cfg.fc2 {
        mismatches.push(ShapeMismatch::Fc2 {
            expected: cfg.fc2,
            actual: acts.fc2().len(),
        });
    }
    ShapeReport { mismatches }
}
