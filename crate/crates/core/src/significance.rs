//! Significance of neurons across blocks.
//!
//! In the last block, neuron `(i, j)` of channel `k` is significant when its
//! activation is at least `q`. A significant last-block neuron marks the
//! `2^(N-m) x 2^(N-m)` patch of block `m` that lies over it: every `(i, j)` with
//! `floor(i / 2^(N-m)) == i_N` and `floor(j / 2^(N-m)) == j_N`. The count
//! matrix of block `m` holds, per position, how many last-block channels mark
//! it.
//!
//! Counts are computed by first counting significant channels per position on
//! the small last-block grid and then upsampling that grid by `2^(N-m)`.

use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::tensor::{BlockActivations, NetworkActivations};

/// Default significance threshold.
pub const DEFAULT_Q: f32 = 0.5;

/// 0/1 matrix of significant neurons for one last-block channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinarySignificance {
    channel: usize,
    height: usize,
    width: usize,
    bits: Vec<u8>,
}

impl BinarySignificance {
    /// `bits` is row-major and must contain only 0 and 1.
    pub fn new(channel: usize, height: usize, width: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::Argument(format!(
                "significance matrix {height}x{width} needs {} entries, got {}",
                height * width,
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Argument("significance entries must be 0 or 1".into()));
        }
        Ok(Self {
            channel,
            height,
            width,
            bits,
        })
    }

    /// 0-based channel index `k`.
    pub fn channel(&self) -> usize {
        self.channel
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    pub fn is_significant(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.width + j] == 1
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

/// Per-position count of last-block channels whose significance projects
/// onto block `m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountSignificance {
    block: usize,
    height: usize,
    width: usize,
    counts: Vec<u32>,
}

impl CountSignificance {
    pub fn block(&self) -> usize {
        self.block
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.width + j]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// Marks every last-block neuron whose activation is `>= q`.
///
/// `q` is compared against raw activations and should be positive.
pub fn threshold_last_block(block: &BlockActivations, q: f32) -> Vec<BinarySignificance> {
    block
        .channels()
        .iter()
        .enumerate()
        .map(|(k, fm)| BinarySignificance {
            channel: k,
            height: fm.height(),
            width: fm.width(),
            bits: fm.values().iter().map(|&v| u8::from(v >= q)).collect(),
        })
        .collect()
}

/// Positions of block `m` (1-based) that lie over last-block neuron
/// `(i_n, j_n)`, in row-major order. There are `4^(N-m)` of them.
pub fn back_project_indices(
    i_n: usize,
    j_n: usize,
    m: usize,
    cfg: &NetworkConfig,
) -> Result<Vec<(usize, usize)>> {
    let last = cfg.last_block();
    if i_n >= last.height || j_n >= last.width {
        return Err(Error::Argument(format!(
            "last-block position ({i_n}, {j_n}) outside {}x{}",
            last.height, last.width
        )));
    }
    if m == 0 || m > cfg.num_blocks() {
        return Err(Error::Argument(format!(
            "block {m} outside 1..={}",
            cfg.num_blocks()
        )));
    }
    let f = cfg.scale_factor(m);
    let mut out = Vec::with_capacity(f * f);
    for i in i_n * f..(i_n + 1) * f {
        for j in j_n * f..(j_n + 1) * f {
            out.push((i, j));
        }
    }
    Ok(out)
}

/// Number of significant channels at each last-block position, row-major.
fn channel_counts(last: &[BinarySignificance], height: usize, width: usize) -> Vec<u32> {
    let mut grid = vec![0u32; height * width];
    for z in last {
        for (g, &b) in grid.iter_mut().zip(&z.bits) {
            *g += b as u32;
        }
    }
    grid
}

fn check_last_block(last: &[BinarySignificance], cfg: &NetworkConfig) -> Result<()> {
    let shape = cfg.last_block();
    if last.len() != shape.channels {
        return Err(Error::Argument(format!(
            "{} significance matrices for a last block with {} channels",
            last.len(),
            shape.channels
        )));
    }
    if let Some(z) = last
        .iter()
        .find(|z| z.height != shape.height || z.width != shape.width)
    {
        return Err(Error::Argument(format!(
            "significance matrix for channel {} is {}x{}, expected {}x{}",
            z.channel, z.height, z.width, shape.height, shape.width
        )));
    }
    Ok(())
}

/// Count matrix `z_m` for block `m` in `1..N`.
pub fn build_count_matrix(
    last: &[BinarySignificance],
    m: usize,
    cfg: &NetworkConfig,
) -> Result<CountSignificance> {
    if m == 0 || m >= cfg.num_blocks() {
        return Err(Error::Argument(format!(
            "count matrices exist for blocks 1..{}, got {m}",
            cfg.num_blocks()
        )));
    }
    check_last_block(last, cfg)?;
    let shape = cfg.last_block();
    let grid = channel_counts(last, shape.height, shape.width);
    Ok(upsample(&grid, shape.width, m, cfg))
}

fn upsample(grid: &[u32], grid_width: usize, m: usize, cfg: &NetworkConfig) -> CountSignificance {
    let target = cfg.block(m);
    let f = cfg.scale_factor(m);
    let mut counts = Vec::with_capacity(target.height * target.width);
    for i in 0..target.height {
        let row = &grid[(i / f) * grid_width..(i / f + 1) * grid_width];
        counts.extend((0..target.width).map(|j| row[j / f]));
    }
    CountSignificance {
        block: m,
        height: target.height,
        width: target.width,
        counts,
    }
}

/// All significance matrices for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceSet {
    last_block: Vec<BinarySignificance>,
    earlier: Vec<CountSignificance>,
    q: f32,
}

impl SignificanceSet {
    pub fn compute(acts: &NetworkActivations, q: f32, cfg: &NetworkConfig) -> Result<Self> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::Argument(format!("threshold q must be positive, got {q}")));
        }
        if acts.num_blocks() != cfg.num_blocks() {
            return Err(Error::Argument(format!(
                "{} activation blocks for a {}-block network",
                acts.num_blocks(),
                cfg.num_blocks()
            )));
        }
        let last_block = threshold_last_block(acts.last_block(), q);
        Self::from_last_block(last_block, q, cfg)
    }

    pub fn from_last_block(
        last_block: Vec<BinarySignificance>,
        q: f32,
        cfg: &NetworkConfig,
    ) -> Result<Self> {
        check_last_block(&last_block, cfg)?;
        let shape = cfg.last_block();
        let grid = channel_counts(&last_block, shape.height, shape.width);
        let earlier = (1..cfg.num_blocks())
            .map(|m| upsample(&grid, shape.width, m, cfg))
            .collect();
        Ok(Self {
            last_block,
            earlier,
            q,
        })
    }

    pub fn q(&self) -> f32 {
        self.q
    }

    pub fn last_block(&self) -> &[BinarySignificance] {
        &self.last_block
    }

    /// Count matrix of block `m`, for `m` in `1..N`.
    pub fn count(&self, m: usize) -> &CountSignificance {
        &self.earlier[m - 1]
    }

    /// Count matrices for blocks `1..N`, in block order.
    pub fn counts(&self) -> &[CountSignificance] {
        &self.earlier
    }

    pub fn num_significant(&self) -> usize {
        self.last_block.iter().map(BinarySignificance::count).sum()
    }
}

/// 8-bit grey levels for a 0/1 matrix: significant neurons are white.
pub fn binary_map_levels(z: &BinarySignificance) -> Vec<u8> {
    z.bits.iter().map(|&b| b * 255).collect()
}

/// 8-bit grey levels for a count matrix, scaled linearly so the largest
/// count is white. An all-zero matrix stays black.
pub fn count_map_levels(z: &CountSignificance) -> Vec<u8> {
    let max = z.counts.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return vec![0; z.counts.len()];
    }
    z.counts
        .iter()
        .map(|&c| ((c as u64 * 255 + max as u64 / 2) / max as u64) as u8)
        .collect()
}

/// Binary PGM (`P5`) encoding of 8-bit grey levels.
pub fn encode_pgm(width: usize, height: usize, levels: &[u8]) -> Vec<u8> {
    assert_eq!(levels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(levels);
    out
}
