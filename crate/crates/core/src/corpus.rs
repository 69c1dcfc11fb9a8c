//! Images and corpus manifests.
//!
//! A manifest is a UTF-8 text file with one `id<TAB>path` record per line.
//! Blank lines are ignored, relative paths are resolved against the
//! manifest's directory and line order defines index order.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::RgbImage;

use crate::error::{Error, Result};

/// A decoded RGB image with its corpus id.
#[derive(Debug, Clone)]
pub struct ImageRecord {
    id: String,
    source_path: PathBuf,
    pixels: RgbImage,
}

impl ImageRecord {
    pub fn new(id: impl Into<String>, source_path: impl Into<PathBuf>, pixels: RgbImage) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::Argument("image id must be non-empty".into()));
        }
        if pixels.width() == 0 || pixels.height() == 0 {
            return Err(Error::Argument(format!("image {id:?} has no pixels")));
        }
        Ok(Self {
            id,
            source_path: source_path.into(),
            pixels,
        })
    }

    /// Decodes the file at `path`, converting any colour type to 8-bit RGB.
    pub fn load(id: impl Into<String>, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::ImageReader::open(path)
            .map_err(|e| Error::io(path, e))?
            .with_guessed_format()
            .map_err(|e| Error::io(path, e))?
            .decode()
            .map_err(|source| Error::Decode {
                path: path.to_path_buf(),
                source,
            })?;
        Self::new(id, path, img.into_rgb8())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn source_path(&self) -> &Path {
        &self.source_path
    }

    pub fn pixels(&self) -> &RgbImage {
        &self.pixels
    }
}

/// Looks up corpus images by id.
pub trait ImageResolver: Sync {
    fn resolve(&self, id: &str) -> Result<ImageRecord>;
}

impl ImageResolver for HashMap<String, ImageRecord> {
    fn resolve(&self, id: &str) -> Result<ImageRecord> {
        self.get(id).cloned().ok_or_else(|| Error::UnknownId(id.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
    positions: HashMap<String, usize>,
}

impl Manifest {
    pub fn from_entries(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut positions = HashMap::with_capacity(entries.len());
        for (pos, e) in entries.iter().enumerate() {
            if e.id.is_empty() {
                return Err(Error::Argument(format!("manifest entry {} has an empty id", pos + 1)));
            }
            if positions.insert(e.id.clone(), pos).is_some() {
                return Err(Error::Argument(format!("duplicate manifest id {:?}", e.id)));
            }
        }
        Ok(Self { entries, positions })
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let (id, path) = line.split_once('\t').ok_or_else(|| {
                Error::Argument(format!("manifest line {}: expected id<TAB>path", n + 1))
            })?;
            let path = PathBuf::from(path);
            let path = if path.is_relative() { base_dir.join(path) } else { path };
            entries.push(ManifestEntry {
                id: id.to_string(),
                path,
            });
        }
        Self::from_entries(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{}\t{}", e.id, e.path.display());
        }
        out
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.positions.get(id).map(|&p| &self.entries[p])
    }
}

impl ImageResolver for Manifest {
    fn resolve(&self, id: &str) -> Result<ImageRecord> {
        let entry = self.get(id).ok_or_else(|| Error::UnknownId(id.to_string()))?;
        ImageRecord::load(&entry.id, &entry.path)
    }
}

/// File-name stem for an image id. Bytes outside `[A-Za-z0-9._-]` are
/// percent-encoded, so distinct ids always map to distinct stems.
pub fn id_file_stem(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for b in id.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-') {
            out.push(b as char);
        } else {
            let _ = write!(out, "%{b:02X}");
        }
    }
    // "." and ".." are not usable as file names.
    if out.bytes().all(|b| b == b'.') {
        out = out.replace('.', "%2E");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_relative_and_absolute_paths() {
        let m = Manifest::parse("a\timg/a.png\n\nb\t/abs/b.jpg\n", Path::new("/data")).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries()[0].path, PathBuf::from("/data/img/a.png"));
        assert_eq!(m.get("b").unwrap().path, PathBuf::from("/abs/b.jpg"));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        assert!(Manifest::parse("a\tx\na\ty\n", Path::new(".")).is_err());
        assert!(Manifest::parse("no-tab-here\n", Path::new(".")).is_err());
        assert!(Manifest::parse("\tpath\n", Path::new(".")).is_err());
    }

    #[test]
    fn file_stems_are_safe_and_distinct() {
        assert_eq!(id_file_stem("cat_01.jpg"), "cat_01.jpg");
        assert_eq!(id_file_stem("a/b"), "a%2Fb");
        assert_ne!(id_file_stem("a/b"), id_file_stem("a%2Fb"));
        assert_eq!(id_file_stem(".."), "%2E%2E");
    }

    #[test]
    fn missing_file_is_an_io_error_with_path() {
        let err = ImageRecord::load("x", "/nonexistent/x.png").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.png"));
    }

    #[test]
    fn undecodable_file_is_a_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        std::fs::write(&p, b"not an image").unwrap();
        assert!(matches!(ImageRecord::load("x", &p), Err(Error::Decode { .. })));
    }
}
