//! Import of externally computed descriptors as [`Family::External`].
//!
//! Two inputs are accepted:
//!
//! * CSV, one `id,v1,...,vn` record per image. A first record whose value
//!   fields do not all parse as numbers is treated as a header.
//! * A flat little-endian f32 matrix plus an id list with one id per line
//!   (anything after a tab is ignored, so corpus manifests work as id lists).
//!   Row `i` of the matrix belongs to id `i`.

use std::path::Path;

use crate::descriptor::Family;
use crate::error::{Error, Result};
use crate::index::DescriptorIndex;

fn parse_values(fields: &csv::StringRecord) -> Option<Vec<f32>> {
    fields.iter().skip(1).map(|s| s.trim().parse::<f32>().ok()).collect()
}

pub fn parse_external_csv(text: &str) -> Result<DescriptorIndex> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut index: Option<DescriptorIndex> = None;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Argument(format!("external csv record {}: {e}", line + 1)))?;
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        let values = match parse_values(&record) {
            Some(v) => v,
            None if line == 0 => continue,
            None => {
                return Err(Error::Argument(format!(
                    "external csv record {}: non-numeric value",
                    line + 1
                )))
            }
        };
        if values.is_empty() {
            return Err(Error::Argument(format!("external csv record {}: no values", line + 1)));
        }
        let idx = index.get_or_insert_with(|| DescriptorIndex::new(Family::External, values.len()));
        idx.push(record[0].trim(), &values)
            .map_err(|e| Error::Argument(format!("external csv record {}: {e}", line + 1)))?;
    }
    index.ok_or_else(|| Error::Argument("external csv holds no descriptors".into()))
}

/// Ids from an id list: first tab-separated field of every non-blank line.
pub fn parse_id_list(text: &str) -> Vec<String> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split('\t').next().unwrap_or("").trim().to_string())
        .collect()
}

pub fn parse_external_flat(bytes: &[u8], ids: &[String]) -> Result<DescriptorIndex> {
    if ids.is_empty() {
        return Err(Error::Argument("external id list is empty".into()));
    }
    let row_bytes = bytes.len() / ids.len();
    if bytes.len() % ids.len() != 0 || row_bytes % 4 != 0 || row_bytes == 0 {
        return Err(Error::Argument(format!(
            "{} bytes do not hold {} rows of f32 values",
            bytes.len(),
            ids.len()
        )));
    }
    let dim = row_bytes / 4;
    let mut index = DescriptorIndex::new(Family::External, dim);
    let mut row = Vec::with_capacity(dim);
    for (id, chunk) in ids.iter().zip(bytes.chunks_exact(row_bytes)) {
        row.clear();
        row.extend(chunk.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])));
        index.push(id.clone(), &row)?;
    }
    Ok(index)
}

pub fn import_external_csv(path: impl AsRef<Path>) -> Result<DescriptorIndex> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_external_csv(&text).map_err(|e| Error::Argument(format!("{}: {e}", path.display())))
}

pub fn import_external_flat(matrix: impl AsRef<Path>, id_list: impl AsRef<Path>) -> Result<DescriptorIndex> {
    let (matrix, id_list) = (matrix.as_ref(), id_list.as_ref());
    let bytes = std::fs::read(matrix).map_err(|e| Error::io(matrix, e))?;
    let text = std::fs::read_to_string(id_list).map_err(|e| Error::io(id_list, e))?;
    parse_external_flat(&bytes, &parse_id_list(&text)).map_err(|e| Error::Argument(format!("{}: {e}", matrix.display())))
}
