//! Descriptor families and their assembly from activations.
//!
//! * FC: the neural code, `fc1 ++ fc2`.
//! * CONV: one characteristic value per channel of every block, in block
//!   order. For blocks before the last, a channel's value is its activation
//!   averaged with the block's count matrix as weights; in the last block it
//!   is the plain mean over that channel's own significant neurons.
//! * COMBINED: `FC ++ CONV`.
//!
//! A channel with no significant weight gets the value 0.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::codec::{ByteReader, ByteWriter};
use crate::config::NetworkConfig;
use crate::error::{Error, FormatErrorKind, Result};
use crate::significance::SignificanceSet;
use crate::tensor::{validate_shapes, BlockActivations, NetworkActivations};

/// Descriptor family. The order (external, FC, conv, combined) is the
/// column order of evaluation reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    /// Imported from outside the pipeline, never computed.
    External,
    Fc,
    Conv,
    Combined,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::External, Family::Fc, Family::Conv, Family::Combined];
    pub const COMPUTED: [Family; 3] = [Family::Fc, Family::Conv, Family::Combined];

    pub fn code(self) -> u8 {
        match self {
            Family::Fc => 1,
            Family::Conv => 2,
            Family::Combined => 3,
            Family::External => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => Family::Fc,
            2 => Family::Conv,
            3 => Family::Combined,
            4 => Family::External,
            _ => return None,
        })
    }

    /// Name used on the command line and in file names.
    pub fn name(self) -> &'static str {
        match self {
            Family::External => "external",
            Family::Fc => "fc",
            Family::Conv => "conv",
            Family::Combined => "combined",
        }
    }

    /// Short mathematical label used in report headers.
    pub fn symbol(self) -> &'static str {
        match self {
            Family::External => "IM(x)",
            Family::Fc => "h(x)",
            Family::Conv => "eta~(x)",
            Family::Combined => "eta(x)",
        }
    }

    /// Expected dimensionality for a network, `None` for external vectors.
    pub fn dim(self, cfg: &NetworkConfig) -> Option<usize> {
        match self {
            Family::External => None,
            Family::Fc => Some(cfg.fc_dim()),
            Family::Conv => Some(cfg.conv_dim()),
            Family::Combined => Some(cfg.combined_dim()),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fc" | "h" => Ok(Family::Fc),
            "conv" | "eta-tilde" => Ok(Family::Conv),
            "combined" | "eta" => Ok(Family::Combined),
            "external" | "im" => Ok(Family::External),
            _ => Err(Error::Argument(format!(
                "unknown descriptor family {s:?} (expected fc, conv, combined or external)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    family: Family,
    values: Vec<f32>,
}

impl Descriptor {
    pub fn new(family: Family, values: Vec<f32>) -> Self {
        Self { family, values }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

/// Characteristic values `w_m` of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSummary {
    pub block: usize,
    pub weights: Vec<f32>,
}

/// Significance-weighted channel averages of `block`.
pub fn block_summary(
    block: &BlockActivations,
    sig: &SignificanceSet,
    cfg: &NetworkConfig,
) -> Result<BlockSummary> {
    let m = block.index();
    if m == 0 || m > cfg.num_blocks() || block.shape() != cfg.block(m) {
        return Err(Error::Argument(format!(
            "block {m} of shape {} does not match the network config",
            block.shape()
        )));
    }
    let weights = if m == cfg.num_blocks() {
        if sig.last_block().len() != block.num_channels() {
            return Err(Error::Argument(format!(
                "{} significance matrices for {} channels",
                sig.last_block().len(),
                block.num_channels()
            )));
        }
        block
            .channels()
            .iter()
            .zip(sig.last_block())
            .map(|(fm, z)| {
                let mut acc = 0f64;
                let mut n = 0u64;
                for (&y, &b) in fm.values().iter().zip(z.bits()) {
                    if b == 1 {
                        acc += y as f64;
                        n += 1;
                    }
                }
                ratio(acc, n)
            })
            .collect()
    } else {
        let z = sig.count(m);
        block
            .channels()
            .iter()
            .map(|fm| weighted_mean(fm.values(), z.counts()))
            .collect()
    };
    Ok(BlockSummary { block: m, weights })
}

/// `sum(weights * values) / sum(weights)` accumulated row-major in f64;
/// 0 when every weight is zero.
pub fn weighted_mean(values: &[f32], weights: &[u32]) -> f32 {
    debug_assert_eq!(values.len(), weights.len());
    let mut acc = 0f64;
    let mut denom = 0u64;
    for (&y, &c) in values.iter().zip(weights) {
        acc += c as f64 * y as f64;
        denom += c as u64;
    }
    ratio(acc, denom)
}

fn ratio(acc: f64, n: u64) -> f32 {
    if n == 0 {
        0.0
    } else {
        (acc / n as f64) as f32
    }
}

/// Optional multipliers applied to the FC and conv parts of the combined
/// descriptor. Off by default: parts are concatenated as computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartScaling {
    pub fc: f32,
    pub conv: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    pub fc: Descriptor,
    pub conv: Descriptor,
    pub combined: Descriptor,
}

impl DescriptorSet {
    pub fn get(&self, family: Family) -> Option<&Descriptor> {
        match family {
            Family::Fc => Some(&self.fc),
            Family::Conv => Some(&self.conv),
            Family::Combined => Some(&self.combined),
            Family::External => None,
        }
    }
}

pub fn build_descriptors(acts: &NetworkActivations, q: f32, cfg: &NetworkConfig) -> Result<DescriptorSet> {
    build_descriptors_scaled(acts, q, cfg, None)
}

pub fn build_descriptors_scaled(
    acts: &NetworkActivations,
    q: f32,
    cfg: &NetworkConfig,
    scaling: Option<PartScaling>,
) -> Result<DescriptorSet> {
    validate_shapes(acts, cfg).into_result()?;
    let sig = SignificanceSet::compute(acts, q, cfg)?;

    let mut conv = Vec::with_capacity(cfg.conv_dim());
    for block in acts.blocks() {
        conv.extend(block_summary(block, &sig, cfg)?.weights);
    }
    let mut fc = Vec::with_capacity(cfg.fc_dim());
    fc.extend_from_slice(acts.fc1());
    fc.extend_from_slice(acts.fc2());

    let mut combined = Vec::with_capacity(cfg.combined_dim());
    match scaling {
        None => {
            combined.extend_from_slice(&fc);
            combined.extend_from_slice(&conv);
        }
        Some(s) => {
            combined.extend(fc.iter().map(|v| v * s.fc));
            combined.extend(conv.iter().map(|v| v * s.conv));
        }
    }
    Ok(DescriptorSet {
        fc: Descriptor::new(Family::Fc, fc),
        conv: Descriptor::new(Family::Conv, conv),
        combined: Descriptor::new(Family::Combined, combined),
    })
}

pub const FILE_MAGIC: [u8; 4] = *b"DESC";
pub const FILE_VERSION: u16 = 1;

/// Single-descriptor file: magic `DESC`, version u16, family u8, image id
/// (u32 length + UTF-8), dim u32, then `dim` little-endian f32 values.
pub fn encode_descriptor_file(image_id: &str, d: &Descriptor) -> Vec<u8> {
    let mut w = ByteWriter::with_capacity(16 + image_id.len() + 4 * d.dim());
    w.bytes(&FILE_MAGIC);
    w.u16(FILE_VERSION);
    w.u8(d.family.code());
    w.str(image_id);
    w.u32(d.dim() as u32);
    w.f32s(&d.values);
    w.into_inner()
}

pub fn decode_descriptor_file(bytes: &[u8]) -> Result<(String, Descriptor)> {
    let mut r = ByteReader::new(bytes);
    r.magic(FILE_MAGIC)?;
    r.version(FILE_VERSION)?;
    let at = r.offset();
    let code = r.u8()?;
    let family = Family::from_code(code).ok_or_else(|| crate::error::FormatError {
        offset: at,
        kind: FormatErrorKind::Invalid(format!("unknown family code {code}")),
    })?;
    let id = r.str()?;
    let dim = r.u32()? as usize;
    r.expect_remaining(dim as u64 * 4)?;
    let values = r.f32s(dim)?;
    Ok((id, Descriptor::new(family, values)))
}

pub fn write_descriptor_file(path: impl AsRef<Path>, image_id: &str, d: &Descriptor) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_descriptor_file(image_id, d)).map_err(|e| Error::io(path, e))
}

pub fn read_descriptor_file(path: impl AsRef<Path>) -> Result<(String, Descriptor)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_descriptor_file(&bytes).map_err(|e| e.at_path(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::BlockShape;
    use crate::significance::{BinarySignificance, DEFAULT_Q};
    use crate::tensor::FeatureMap;

    /// Two blocks: 4x4x1 then 2x2x1.
    fn two_block_cfg() -> NetworkConfig {
        NetworkConfig::new(
            vec![BlockShape::new(4, 4, 1), BlockShape::new(2, 2, 1)],
            2,
            1,
            None,
            NetworkConfig::vgg16().input,
        )
        .unwrap()
    }

    #[test]
    fn weighted_mean_of_hand_matrix() {
        // z = [[2,0],[0,1]], y = [[1.0,9.9],[5.0,4.0]] -> (2*1.0 + 1*4.0) / 3
        assert_eq!(weighted_mean(&[1.0, 9.9, 5.0, 4.0], &[2, 0, 0, 1]), 2.0);
        assert_eq!(weighted_mean(&[1.0, 9.9], &[0, 0]), 0.0);
    }

    #[test]
    fn weighted_average_with_uneven_counts() {
        // Last block 2x2 with one channel significant at (0,0) and another
        // at (1,1), a third also at (0,0): z_1 on the 4x4 block has 2 on the
        // top-left patch, 1 on the bottom-right patch.
        let cfg = NetworkConfig::new(
            vec![BlockShape::new(4, 4, 1), BlockShape::new(2, 2, 3)],
            1,
            1,
            None,
            NetworkConfig::vgg16().input,
        )
        .unwrap();
        let last = vec![
            BinarySignificance::new(0, 2, 2, vec![1, 0, 0, 0]).unwrap(),
            BinarySignificance::new(1, 2, 2, vec![0, 0, 0, 1]).unwrap(),
            BinarySignificance::new(2, 2, 2, vec![1, 0, 0, 0]).unwrap(),
        ];
        let sig = SignificanceSet::from_last_block(last, DEFAULT_Q, &cfg).unwrap();
        // Activations: top-left patch all 1.0, bottom-right all 4.0, others 9.9.
        let mut y = vec![9.9f32; 16];
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            y[i * 4 + j] = 1.0;
        }
        for (i, j) in [(2, 2), (2, 3), (3, 2), (3, 3)] {
            y[i * 4 + j] = 4.0;
        }
        let block = BlockActivations::new(1, vec![FeatureMap::new(4, 4, y).unwrap()]).unwrap();
        let w = block_summary(&block, &sig, &cfg).unwrap();
        // (4 * 2 * 1.0 + 4 * 1 * 4.0) / (4 * 2 + 4 * 1) = 24 / 12
        assert_eq!(w.weights, vec![2.0]);
    }

    #[test]
    fn last_block_uses_per_channel_mean() {
        let cfg = two_block_cfg();
        let last = vec![BinarySignificance::new(0, 2, 2, vec![1, 0, 0, 1]).unwrap()];
        let sig = SignificanceSet::from_last_block(last, DEFAULT_Q, &cfg).unwrap();
        let block = BlockActivations::new(2, vec![FeatureMap::new(2, 2, vec![0.8, 0.1, 0.2, 0.6]).unwrap()]).unwrap();
        let w = block_summary(&block, &sig, &cfg).unwrap();
        assert_eq!(w.weights, vec![((0.8f32 as f64 + 0.6f32 as f64) / 2.0) as f32]);
        assert!((w.weights[0] - 0.7).abs() < 1e-7);
    }

    #[test]
    fn zero_denominator_gives_zero() {
        let cfg = two_block_cfg();
        let last = vec![BinarySignificance::new(0, 2, 2, vec![0; 4]).unwrap()];
        let sig = SignificanceSet::from_last_block(last, DEFAULT_Q, &cfg).unwrap();
        let b1 = BlockActivations::new(1, vec![FeatureMap::new(4, 4, vec![3.0; 16]).unwrap()]).unwrap();
        let b2 = BlockActivations::new(2, vec![FeatureMap::new(2, 2, vec![0.1; 4]).unwrap()]).unwrap();
        assert_eq!(block_summary(&b1, &sig, &cfg).unwrap().weights, vec![0.0]);
        assert_eq!(block_summary(&b2, &sig, &cfg).unwrap().weights, vec![0.0]);
    }

    fn vgg_acts(fill: f32) -> NetworkActivations {
        let cfg = NetworkConfig::vgg16();
        let blocks = cfg
            .blocks()
            .iter()
            .enumerate()
            .map(|(m, s)| BlockActivations::from_channel_major(m + 1, *s, &vec![fill; s.len()]).unwrap())
            .collect();
        NetworkActivations::new(blocks, vec![1.0; 4096], vec![2.0; 4096], None).unwrap()
    }

    #[test]
    fn vgg16_dimensions() {
        let cfg = NetworkConfig::vgg16();
        let set = build_descriptors(&vgg_acts(1.0), DEFAULT_Q, &cfg).unwrap();
        assert_eq!((set.fc.dim(), set.conv.dim(), set.combined.dim()), (8192, 1472, 9664));
        assert_eq!(&set.combined.values()[..8192], set.fc.values());
        assert_eq!(&set.combined.values()[8192..], set.conv.values());
        assert!(set.conv.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn below_threshold_gives_zero_conv_descriptor() {
        let cfg = NetworkConfig::vgg16();
        let set = build_descriptors(&vgg_acts(0.49), DEFAULT_Q, &cfg).unwrap();
        assert_eq!(set.conv.values(), vec![0.0; 1472].as_slice());
    }

    #[test]
    fn shape_mismatch_is_a_validation_error() {
        let err = build_descriptors(&vgg_acts(1.0), DEFAULT_Q, &two_block_cfg()).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn part_scaling_only_touches_combined() {
        let cfg = NetworkConfig::vgg16();
        let s = PartScaling { fc: 0.5, conv: 2.0 };
        let set = build_descriptors_scaled(&vgg_acts(1.0), DEFAULT_Q, &cfg, Some(s)).unwrap();
        assert_eq!(set.fc.values()[0], 1.0);
        assert_eq!(set.combined.values()[0], 0.5);
        assert_eq!(set.combined.values()[8192], 2.0);
    }

    #[test]
    fn descriptor_file_round_trip() {
        let d = Descriptor::new(Family::Conv, vec![0.0, 1.5, 3.25]);
        let bytes = encode_descriptor_file("img/1", &d);
        assert_eq!(decode_descriptor_file(&bytes).unwrap(), ("img/1".to_string(), d));
        assert!(decode_descriptor_file(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn family_names_parse() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
            assert_eq!(Family::from_code(f.code()), Some(f));
        }
        assert!("bogus".parse::<Family>().is_err());
    }
}
