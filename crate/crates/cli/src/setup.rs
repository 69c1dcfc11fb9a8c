use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use sigcode_core::provider::DumpProvider;
use sigcode_core::{ActivationProvider, Family, Manifest, ModelProfile};
use sigcode_onnx::OnnxProvider;

use crate::{ActivationSource, GlobalOpts};

/// A problem with flags or inputs found before any work started.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

pub fn check_opts(opts: &GlobalOpts) -> Result<()> {
    if !(opts.q > 0.0 && opts.q.is_finite()) {
        return Err(config_error(format!("--q must be a positive number, got {}", opts.q)));
    }
    if opts.k == 0 {
        return Err(config_error("--k must be at least 1"));
    }
    if opts.families.is_empty() {
        return Err(config_error("--families must name at least one family"));
    }
    Ok(())
}

/// Requested families in report column order, without duplicates.
pub fn families(opts: &GlobalOpts) -> Vec<Family> {
    let mut f = opts.families.clone();
    f.sort();
    f.dedup();
    f
}

pub fn computed_families(opts: &GlobalOpts) -> Vec<Family> {
    families(opts).into_iter().filter(|f| *f != Family::External).collect()
}

pub fn profile(opts: &GlobalOpts) -> Result<ModelProfile> {
    match &opts.model {
        Some(path) if !path.is_file() => Err(config_error(format!("model profile {} not found", path.display()))),
        Some(path) => Ok(ModelProfile::load(path)?),
        None => Ok(ModelProfile::vgg16()),
    }
}

pub fn manifest(opts: &GlobalOpts) -> Result<Manifest> {
    let path = opts
        .manifest
        .as_ref()
        .ok_or_else(|| config_error("--manifest is required for this command"))?;
    load_manifest(path)
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    if !path.is_file() {
        return Err(config_error(format!("manifest {} not found", path.display())));
    }
    Ok(Manifest::load(path)?)
}

pub fn provider(profile: ModelProfile, source: &ActivationSource) -> Result<Box<dyn ActivationProvider>> {
    match &source.dumps {
        Some(dir) => {
            if !dir.is_dir() {
                return Err(config_error(format!("dump directory {} not found", dir.display())));
            }
            Ok(Box::new(DumpProvider::new(dir, profile.network_config().clone())))
        }
        None => {
            log::info!("loading model for profile {:?}", profile.name);
            let p = OnnxProvider::load(profile).context("cannot load the model")?;
            Ok(Box::new(p))
        }
    }
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("cannot start worker threads")
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("cannot create {}", path.display()))
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

/// `src` attribute for `target` as seen from a page in `page_dir`.
pub fn href(page_dir: &Path, target: &Path) -> String {
    let abs = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let (base, target) = (abs(page_dir), abs(target));
    pathdiff::diff_paths(&target, &base)
        .unwrap_or(target)
        .to_string_lossy()
        .replace('\\', "/")
}
