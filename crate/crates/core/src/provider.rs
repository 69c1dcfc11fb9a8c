//! Sources of [`NetworkActivations`].

use std::path::{Path, PathBuf};

use crate::config::NetworkConfig;
use crate::corpus::{id_file_stem, ImageRecord};
use crate::dump::read_dump;
use crate::error::{Error, Result};
use crate::tensor::{validate_shapes, NetworkActivations};

/// Produces activations for an image.
///
/// Implementations must be safe to call from several workers at once and
/// must never mix tensors between images.
pub trait ActivationProvider: Send + Sync {
    fn config(&self) -> &NetworkConfig;

    fn activations(&self, image: &ImageRecord) -> Result<NetworkActivations>;

    /// Like [`activations`](Self::activations) but only needs the image id.
    /// Providers that must see pixels return `None`.
    fn activations_by_id(&self, _id: &str) -> Option<Result<NetworkActivations>> {
        None
    }
}

/// File name of the dump for `id` inside a dump directory.
pub fn dump_file_name(id: &str) -> String {
    format!("{}.actd", id_file_stem(id))
}

/// Reads pre-computed activations from a directory of `ACTD` files named by
/// [`dump_file_name`].
#[derive(Debug, Clone)]
pub struct DumpProvider {
    dir: PathBuf,
    config: NetworkConfig,
}

impl DumpProvider {
    pub fn new(dir: impl Into<PathBuf>, config: NetworkConfig) -> Self {
        Self {
            dir: dir.into(),
            config,
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn load(&self, id: &str) -> Result<NetworkActivations> {
        let path = self.dir.join(dump_file_name(id));
        let dump = read_dump(&path)?;
        if dump.image_id != id {
            return Err(Error::Provider(format!(
                "{} holds activations for {:?}, expected {id:?}",
                path.display(),
                dump.image_id
            )));
        }
        validate_shapes(&dump.activations, &self.config).into_result()?;
        Ok(dump.activations)
    }
}

impl ActivationProvider for DumpProvider {
    fn config(&self) -> &NetworkConfig {
        &self.config
    }

    fn activations(&self, image: &ImageRecord) -> Result<NetworkActivations> {
        self.load(image.id())
    }

    fn activations_by_id(&self, id: &str) -> Option<Result<NetworkActivations>> {
        Some(self.load(id))
    }
}
