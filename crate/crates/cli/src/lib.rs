//! The `sigcode` command line: extraction, indexing, querying, significance
//! inspection and histogram evaluation over an image manifest.
//!
//! Every stage reads and writes files under `--out`, so each one can be
//! rerun on its own:
//!
//! ```text
//! <out>/descriptors/<family>/<id>.desc   per-image descriptors
//! <out>/dumps/<id>.actd                  activation dumps (extract --write-dumps)
//! <out>/index/<family>.didx              one index per family
//! <out>/report/                          evaluation CSV, summary and montage
//! <out>/significance/<id>/               significance maps
//! <out>/extract.log                      per-run extraction log
//! ```

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sigcode_core::Family;

mod commands;
pub mod layout;
mod setup;

pub use commands::run;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Some images failed and were skipped.
    Partial,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => EXIT_OK,
            Outcome::Partial => EXIT_PARTIAL,
        }
    }
}

/// Exit code for an error: configuration and argument problems are
/// [`EXIT_CONFIG`], everything else [`EXIT_FAILURE`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<sigcode_core::Error>() {
            return match e {
                sigcode_core::Error::Config(_) | sigcode_core::Error::Argument(_) => EXIT_CONFIG,
                _ => EXIT_FAILURE,
            };
        }
        if cause.downcast_ref::<setup::ConfigError>().is_some() {
            return EXIT_CONFIG;
        }
    }
    EXIT_FAILURE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Html,
    Text,
}

#[derive(Debug, Parser)]
#[command(name = "sigcode", version, about = "Significance-guided CNN descriptors for image retrieval")]
pub struct Cli {
    #[command(flatten)]
    pub opts: GlobalOpts,

    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by all subcommands. Each can also be set through the
/// `SIGCODE_` environment variable named after it.
#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Model profile (TOML). Defaults to the bundled VGG16 profile, which
    /// names no model file and therefore needs --dumps.
    #[arg(long, global = true, env = "SIGCODE_MODEL")]
    pub model: Option<PathBuf>,

    /// Corpus manifest: one `id<TAB>path` line per image.
    #[arg(long, global = true, env = "SIGCODE_MANIFEST")]
    pub manifest: Option<PathBuf>,

    /// Significance threshold on last-block activations.
    #[arg(long, global = true, env = "SIGCODE_Q", default_value_t = sigcode_core::DEFAULT_Q)]
    pub q: f32,

    /// Comma-separated descriptor families (fc, conv, combined, external).
    #[arg(
        long,
        global = true,
        env = "SIGCODE_FAMILIES",
        value_delimiter = ',',
        default_value = "fc,conv,combined,external"
    )]
    pub families: Vec<Family>,

    /// Output directory.
    #[arg(long, global = true, env = "SIGCODE_OUT", default_value = "out")]
    pub out: PathBuf,

    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, env = "SIGCODE_WORKERS", default_value_t = 0)]
    pub workers: usize,

    /// Results per query.
    #[arg(long, global = true, env = "SIGCODE_K", default_value_t = sigcode_core::DEFAULT_K)]
    pub k: usize,

    /// Format of what is printed to stdout.
    #[arg(long, global = true, env = "SIGCODE_FORMAT", value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute descriptors (and optionally activation dumps) for every image
    /// in the manifest.
    Extract(ExtractArgs),
    /// Collect per-image descriptors into one index per family.
    Index,
    /// Rank the indexed images against one query.
    Query(QueryArgs),
    /// Histogram-based assessment of top-k results for a set of queries.
    Evaluate(EvaluateArgs),
    /// Write significance maps of one image as PGM files.
    InspectSignificance(InspectArgs),
    /// Import externally computed descriptors as the external family.
    ImportExternal(ImportArgs),
    /// Write a seeded VGG-style ONNX model with random weights and its
    /// profile.
    SynthModel(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ActivationSource {
    /// Read activations from ACTD dumps in this directory instead of running
    /// the model.
    #[arg(long)]
    pub dumps: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub source: ActivationSource,

    /// Also write an ACTD dump per image under <out>/dumps.
    #[arg(long)]
    pub write_dumps: bool,
}

#[derive(Debug, Clone, Args)]
#[group(id = "query_source", required = true, multiple = false)]
pub struct QueryTarget {
    /// Query with an image file.
    #[arg(long, group = "query_source")]
    pub image: Option<PathBuf>,

    /// Query with an already extracted image by id.
    #[arg(long, group = "query_source")]
    pub id: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub target: QueryTarget,

    #[command(flatten)]
    pub source: ActivationSource,

    /// Family to search.
    #[arg(long, default_value = "combined")]
    pub family: Family,

    /// Index file; defaults to <out>/index/<family>.didx.
    #[arg(long)]
    pub index: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Query manifest (`id<TAB>path` lines).
    #[arg(long)]
    pub queries: PathBuf,

    #[command(flatten)]
    pub source: ActivationSource,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub target: QueryTarget,

    #[command(flatten)]
    pub source: ActivationSource,

    /// Last-block channels to draw; defaults to the four with the most
    /// significant neurons.
    #[arg(long, value_delimiter = ',')]
    pub channels: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
#[group(id = "external_source", required = true, multiple = false)]
pub struct ImportArgs {
    /// CSV with `id,v1,...,vn` records.
    #[arg(long, group = "external_source")]
    pub csv: Option<PathBuf>,

    /// Flat little-endian f32 matrix, one row per id in --ids.
    #[arg(long, group = "external_source", requires = "ids")]
    pub flat: Option<PathBuf>,

    /// Id list for --flat; one id per line (a manifest also works).
    #[arg(long)]
    pub ids: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Vgg16,
    Tiny,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Directory for `<name>.onnx` and `<name>.toml`.
    #[arg(long)]
    pub dir: PathBuf,

    #[arg(long, value_enum, default_value_t = Preset::Vgg16)]
    pub preset: Preset,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// File stem; defaults to the preset name.
    #[arg(long)]
    pub name: Option<String>,
}
