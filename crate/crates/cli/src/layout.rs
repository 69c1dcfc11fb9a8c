//! File locations under the output directory.

use std::path::{Path, PathBuf};

use sigcode_core::corpus::id_file_stem;
use sigcode_core::Family;

#[derive(Debug, Clone)]
pub struct OutputLayout {
    root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn descriptor_dir(&self, family: Family) -> PathBuf {
        self.root.join("descriptors").join(family.name())
    }

    pub fn descriptor(&self, family: Family, id: &str) -> PathBuf {
        self.descriptor_dir(family).join(format!("{}.desc", id_file_stem(id)))
    }

    pub fn dump_dir(&self) -> PathBuf {
        self.root.join("dumps")
    }

    pub fn index(&self, family: Family) -> PathBuf {
        self.root.join("index").join(format!("{}.didx", family.name()))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }

    pub fn query_dir(&self) -> PathBuf {
        self.root.join("query")
    }

    pub fn significance_dir(&self, id: &str) -> PathBuf {
        self.root.join("significance").join(id_file_stem(id))
    }

    pub fn extract_log(&self) -> PathBuf {
        self.root.join("extract.log")
    }
}
