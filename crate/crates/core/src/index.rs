//! Flat descriptor index with exact top-k search.
//!
//! Distances are the L1 distance divided by the dimensionality, accumulated
//! in f64. Results are ordered by `(distance, index position)`, so ties keep
//! manifest order. A scan split into chunks and merged returns exactly what
//! a single pass returns.
//!
//! `DIDX` file layout (little-endian):
//!
//! ```text
//! magic    4 bytes "DIDX"
//! version  u16     1
//! family   u8      descriptor family code
//! dim      u32
//! count    u64
//! ids      count x (u32 length + UTF-8 bytes)
//! matrix   count x dim f32, row-major
//! ```

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;

use crate::codec::{ByteReader, ByteWriter};
use crate::descriptor::{Descriptor, Family};
use crate::error::{Error, FormatError, FormatErrorKind, Result};

/// `sum |a_d - b_d| / len`.
pub fn l1_norm_distance(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!(
            "cannot compare vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Argument("cannot compare empty vectors".into()));
    }
    Ok(l1_sum(a, b) / a.len() as f64)
}

#[inline]
fn l1_sum(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorIndex {
    family: Family,
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    positions: HashMap<String, usize>,
}

impl DescriptorIndex {
    pub fn new(family: Family, dim: usize) -> Self {
        Self {
            family,
            dim,
            ids: Vec::new(),
            data: Vec::new(),
            positions: HashMap::new(),
        }
    }

    /// Appends a row. Ids must be unique and rows must have the index's dim.
    pub fn push(&mut self, id: impl Into<String>, values: &[f32]) -> Result<()> {
        let id = id.into();
        if values.len() != self.dim {
            return Err(Error::Argument(format!(
                "descriptor for {id:?} has dim {}, index has {}",
                values.len(),
                self.dim
            )));
        }
        if self.positions.contains_key(&id) {
            return Err(Error::Argument(format!("duplicate id {id:?} in index")));
        }
        self.positions.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(values);
        Ok(())
    }

    /// Appends a descriptor, checking its family as well as its dim.
    pub fn push_descriptor(&mut self, id: impl Into<String>, d: &Descriptor) -> Result<()> {
        if d.family() != self.family {
            return Err(Error::Argument(format!(
                "{} descriptor cannot go into a {} index",
                d.family(),
                self.family
            )));
        }
        self.push(id, d.values())
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, position: usize) -> &str {
        &self.ids[position]
    }

    pub fn row(&self, position: usize) -> &[f32] {
        &self.data[position * self.dim..(position + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }

    /// The stored descriptor for `id`.
    pub fn descriptor(&self, id: &str) -> Option<Descriptor> {
        self.position(id)
            .map(|p| Descriptor::new(self.family, self.row(p).to_vec()))
    }

    fn check_query(&self, query: &[f32], k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::Argument("k must be at least 1".into()));
        }
        if query.len() != self.dim {
            return Err(Error::Argument(format!(
                "query has dim {}, index has {}",
                query.len(),
                self.dim
            )));
        }
        if self.dim == 0 && !self.is_empty() {
            return Err(Error::Argument("cannot search a zero-dimensional index".into()));
        }
        Ok(())
    }

    /// The `k` best candidates among positions `range`, ascending.
    fn scan(&self, query: &[f32], k: usize, range: std::ops::Range<usize>) -> Vec<Candidate> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        let norm = self.dim as f64;
        for position in range {
            let c = Candidate {
                distance: l1_sum(query, self.row(position)) / norm,
                position,
            };
            if heap.len() < k {
                heap.push(c);
            } else if c < *heap.peek().unwrap() {
                heap.pop();
                heap.push(c);
            }
        }
        heap.into_sorted_vec()
    }

    fn result(&self, candidates: Vec<Candidate>) -> QueryResult {
        QueryResult {
            neighbors: candidates
                .into_iter()
                .map(|c| Neighbor {
                    id: self.ids[c.position].clone(),
                    position: c.position,
                    distance: c.distance,
                })
                .collect(),
        }
    }

    /// Searches with one rayon task per chunk when the index is large
    /// enough to benefit.
    pub fn search(&self, query: &Descriptor, k: usize) -> Result<QueryResult> {
        let chunks = if self.len() * self.dim < 1 << 20 {
            1
        } else {
            rayon::current_num_threads().max(1) * 4
        };
        top_k_chunked(self, query, k, chunks)
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    distance: f64,
    position: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.position.cmp(&other.position))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub id: String,
    /// Position of the entry in the index (manifest order).
    pub position: usize,
    pub distance: f64,
}

/// Ranked neighbours, ascending by distance with ties in index order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryResult {
    pub neighbors: Vec<Neighbor>,
}

impl QueryResult {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.neighbors.iter().map(|n| n.id.as_str())
    }
}

/// Exact top-k by a single sequential scan.
pub fn top_k(index: &DescriptorIndex, query: &Descriptor, k: usize) -> Result<QueryResult> {
    index.check_query(query.values(), k)?;
    Ok(index.result(index.scan(query.values(), k, 0..index.len())))
}

/// Exact top-k with the index split into `chunks` contiguous ranges that are
/// scanned in parallel and then merged.
pub fn top_k_chunked(
    index: &DescriptorIndex,
    query: &Descriptor,
    k: usize,
    chunks: usize,
) -> Result<QueryResult> {
    index.check_query(query.values(), k)?;
    let n = index.len();
    let chunks = chunks.clamp(1, n.max(1));
    let size = n.div_ceil(chunks).max(1);
    let mut merged: Vec<Candidate> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = (c * size).min(n);
            let end = ((c + 1) * size).min(n);
            index.scan(query.values(), k, start..end)
        })
        .flatten()
        .collect();
    merged.sort_unstable();
    merged.truncate(k);
    Ok(index.result(merged))
}

pub const MAGIC: [u8; 4] = *b"DIDX";
pub const VERSION: u16 = 1;

pub fn encode_index(index: &DescriptorIndex) -> Vec<u8> {
    let ids_len: usize = index.ids.iter().map(|s| 4 + s.len()).sum();
    let mut w = ByteWriter::with_capacity(19 + ids_len + 4 * index.data.len());
    w.bytes(&MAGIC);
    w.u16(VERSION);
    w.u8(index.family.code());
    w.u32(index.dim as u32);
    w.u64(index.len() as u64);
    for id in &index.ids {
        w.str(id);
    }
    w.f32s(&index.data);
    w.into_inner()
}

pub fn decode_index(bytes: &[u8]) -> Result<DescriptorIndex> {
    let mut r = ByteReader::new(bytes);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let at = r.offset();
    let code = r.u8()?;
    let family = Family::from_code(code).ok_or(FormatError {
        offset: at,
        kind: FormatErrorKind::Invalid(format!("unknown family code {code}")),
    })?;
    let dim = r.u32()? as usize;
    let count = r.u64()?;
    // Each id takes at least its 4-byte length prefix.
    if count > r.remaining() / 4 {
        return Err(r
            .error(FormatErrorKind::Truncated {
                expected: r.offset().saturating_add(count.saturating_mul(4)),
                actual: r.len(),
            })
            .into());
    }
    let mut index = DescriptorIndex::new(family, dim);
    let mut ids = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let at = r.offset();
        let id = r.str()?;
        if index.positions.insert(id.clone(), ids.len()).is_some() {
            return Err(FormatError {
                offset: at,
                kind: FormatErrorKind::Invalid(format!("duplicate id {id:?}")),
            }
            .into());
        }
        ids.push(id);
    }
    let payload = count.checked_mul(dim as u64).and_then(|n| n.checked_mul(4)).unwrap_or(u64::MAX);
    r.expect_remaining(payload)?;
    index.data = r.f32s(count as usize * dim)?;
    index.ids = ids;
    Ok(index)
}

pub fn save_index(index: &DescriptorIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_index(index)).map_err(|e| Error::io(path, e))
}

pub fn load_index(path: impl AsRef<Path>) -> Result<DescriptorIndex> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_index(&bytes).map_err(|e| e.at_path(path))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexWarning {
    FamilyMismatch { expected: Family, found: Family },
}

impl fmt::Display for IndexWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexWarning::FamilyMismatch { expected, found } => {
                write!(f, "index holds {found} descriptors, expected {expected}")
            }
        }
    }
}

/// An index loaded against an expected family, with anything surprising.
#[derive(Debug, Clone)]
pub struct LoadedIndex {
    pub index: DescriptorIndex,
    pub warnings: Vec<IndexWarning>,
}

pub fn load_index_expecting(path: impl AsRef<Path>, expected: Family) -> Result<LoadedIndex> {
    let index = load_index(path)?;
    let mut warnings = Vec::new();
    if index.family != expected {
        warnings.push(IndexWarning::FamilyMismatch {
            expected,
            found: index.family,
        });
    }
    Ok(LoadedIndex { index, warnings })
}
