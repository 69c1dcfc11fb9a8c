use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use sigcode_core::descriptor::{read_descriptor_file, write_descriptor_file};
use sigcode_core::dump::write_dump;
use sigcode_core::eval::{evaluate, EvalQuery};
use sigcode_core::external::{import_external_csv, import_external_flat};
use sigcode_core::index::{load_index_expecting, save_index};
use sigcode_core::report::{
    evaluation_montage, hits_csv, montage_html, query_tsv, summary_csv, summary_text, MontageRow, Tile,
};
use sigcode_core::significance::{binary_map_levels, count_map_levels, encode_pgm};
use sigcode_core::{
    build_descriptors, ActivationProvider, DescriptorIndex, Family, ImageRecord, Manifest,
    NetworkActivations, QueryResult, SignificanceSet,
};
use sigcode_onnx::synth::{write_model, SynthSpec};

use crate::layout::OutputLayout;
use crate::setup::{self, config_error};
use crate::{
    Cli, Command, EvaluateArgs, ExtractArgs, GlobalOpts, ImportArgs, InspectArgs, Outcome, OutputFormat, Preset,
    QueryArgs, QueryTarget, SynthArgs,
};

pub fn run(cli: Cli) -> Result<Outcome> {
    let opts = &cli.opts;
    setup::check_opts(opts)?;
    match &cli.command {
        Command::Extract(args) => extract(opts, args),
        Command::Index => index(opts),
        Command::Query(args) => query(opts, args),
        Command::Evaluate(args) => evaluate_cmd(opts, args),
        Command::InspectSignificance(args) => inspect(opts, args),
        Command::ImportExternal(args) => import(opts, args),
        Command::SynthModel(args) => synth(args),
    }
}

/// Activations for a manifest entry, without decoding the image when the
/// provider does not need pixels.
fn activations_for(provider: &dyn ActivationProvider, id: &str, path: &Path) -> Result<NetworkActivations> {
    if let Some(acts) = provider.activations_by_id(id) {
        return Ok(acts?);
    }
    let img = ImageRecord::load(id, path)?;
    Ok(provider.activations(&img)?)
}

fn extract(opts: &GlobalOpts, args: &ExtractArgs) -> Result<Outcome> {
    let families = setup::computed_families(opts);
    if families.is_empty() && !args.write_dumps {
        return Err(config_error("nothing to extract: no computed family requested and no --write-dumps"));
    }
    let manifest = setup::manifest(opts)?;
    let provider = setup::provider(setup::profile(opts)?, &args.source)?;
    let cfg = provider.config().clone();
    let layout = OutputLayout::new(&opts.out);
    for &f in &families {
        setup::create_dir(&layout.descriptor_dir(f))?;
    }
    if args.write_dumps {
        setup::create_dir(&layout.dump_dir())?;
    }

    let one = |id: &str, path: &Path| -> Result<()> {
        let acts = activations_for(provider.as_ref(), id, path)?;
        let set = build_descriptors(&acts, opts.q, &cfg)?;
        for &f in &families {
            let d = set.get(f).expect("computed family");
            write_descriptor_file(layout.descriptor(f, id), id, d)?;
        }
        if args.write_dumps {
            write_dump(&acts, id, layout.dump_dir().join(sigcode_core::provider::dump_file_name(id)))?;
        }
        Ok(())
    };
    let pool = setup::thread_pool(opts.workers)?;
    let results: Vec<Result<()>> = pool.install(|| {
        manifest
            .entries()
            .par_iter()
            .map(|e| {
                let r = one(&e.id, &e.path);
                if let Err(err) = &r {
                    log::warn!("{}: {err:#}", e.id);
                    // Stale outputs from an earlier run must not be indexed.
                    for &f in &families {
                        let _ = std::fs::remove_file(layout.descriptor(f, &e.id));
                    }
                }
                r
            })
            .collect()
    });

    let mut log_text = String::new();
    let mut failed = 0usize;
    for (e, r) in manifest.entries().iter().zip(&results) {
        match r {
            Ok(()) => {
                let _ = writeln!(log_text, "ok\t{}", e.id);
            }
            Err(err) => {
                failed += 1;
                let msg = format!("{err:#}").replace(['\n', '\t'], " ");
                let _ = writeln!(log_text, "failed\t{}\t{msg}", e.id);
            }
        }
    }
    let total = manifest.len();
    let families_text: Vec<&str> = families.iter().map(|f| f.name()).collect();
    let summary = format!(
        "images {total} succeeded {} failed {failed} families {}",
        total - failed,
        families_text.join(",")
    );
    let _ = writeln!(log_text, "{summary}");
    setup::write_file(&layout.extract_log(), log_text)?;
    match opts.format {
        OutputFormat::Csv => println!("images,succeeded,failed\n{total},{},{failed}", total - failed),
        _ => println!("{summary}"),
    }
    if failed == 0 {
        Ok(Outcome::Success)
    } else if failed == total {
        bail!("all {total} images failed, see {}", layout.extract_log().display())
    } else {
        Ok(Outcome::Partial)
    }
}

fn index(opts: &GlobalOpts) -> Result<Outcome> {
    let profile = setup::profile(opts)?;
    let cfg = profile.network_config();
    let manifest = setup::manifest(opts)?;
    let layout = OutputLayout::new(&opts.out);
    let families = setup::computed_families(opts);
    if families.is_empty() {
        return Err(config_error("no computed family requested; external indices come from import-external"));
    }
    for f in families {
        let dim = f.dim(cfg).expect("computed family has a dimension");
        let mut index = DescriptorIndex::new(f, dim);
        let mut missing = Vec::new();
        for e in manifest.entries() {
            let path = layout.descriptor(f, &e.id);
            if !path.is_file() {
                missing.push(e.id.as_str());
                continue;
            }
            let (id, d) = read_descriptor_file(&path)?;
            if id != e.id {
                bail!("{} holds the descriptor of {id:?}, expected {:?}", path.display(), e.id);
            }
            if d.family() != f {
                bail!("{} holds a {} descriptor, expected {f}", path.display(), d.family());
            }
            if d.dim() != dim {
                bail!("{f} descriptor of {:?} has {} values, the index needs {dim}", e.id, d.dim());
            }
            index.push_descriptor(&e.id, &d)?;
        }
        if !missing.is_empty() {
            let shown: Vec<&str> = missing.iter().take(20).copied().collect();
            let more = if missing.len() > shown.len() { ", ..." } else { "" };
            bail!(
                "missing {f} descriptors for {} images: {}{more}",
                missing.len(),
                shown.join(", ")
            );
        }
        let path = layout.index(f);
        setup::create_dir(path.parent().expect("index path has a parent"))?;
        save_index(&index, &path)?;
        println!("{f}\t{}\t{}\t{}", index.len(), index.dim(), path.display());
    }
    Ok(Outcome::Success)
}

fn load_index(path: &Path, family: Family) -> Result<DescriptorIndex> {
    let loaded = load_index_expecting(path, family)?;
    for w in &loaded.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(loaded.index)
}

fn query_image(target: &QueryTarget) -> Option<(String, PathBuf)> {
    target.image.as_ref().map(|p| {
        let id = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "query".into());
        (id, p.clone())
    })
}

fn query(opts: &GlobalOpts, args: &QueryArgs) -> Result<Outcome> {
    let family = args.family;
    let layout = OutputLayout::new(&opts.out);
    let index_path = args.index.clone().unwrap_or_else(|| layout.index(family));
    let index = load_index(&index_path, family)?;

    let (query_id, query_path, descriptor) = match (&args.target.id, query_image(&args.target)) {
        (Some(id), _) => {
            let file = layout.descriptor(family, id);
            let d = if file.is_file() {
                read_descriptor_file(&file)?.1
            } else {
                index
                    .descriptor(id)
                    .ok_or_else(|| anyhow!("no {family} descriptor for {id:?}: not extracted and not indexed"))?
            };
            let path = opts
                .manifest
                .as_ref()
                .and_then(|m| Manifest::load(m).ok())
                .and_then(|m| m.get(id).map(|e| e.path.clone()));
            (id.clone(), path, d)
        }
        (None, Some((id, path))) => {
            if family == Family::External {
                return Err(config_error("external descriptors cannot be computed; query by --id"));
            }
            let provider = setup::provider(setup::profile(opts)?, &args.source)?;
            let img = ImageRecord::load(&id, &path)?;
            let acts = provider.activations(&img)?;
            let set = build_descriptors(&acts, opts.q, provider.config())?;
            (id, Some(path), set.get(family).expect("computed family").clone())
        }
        (None, None) => unreachable!("clap requires --image or --id"),
    };
    if descriptor.dim() != index.dim() {
        return Err(config_error(format!(
            "query descriptor has {} values but {} holds {}-dimensional {} descriptors",
            descriptor.dim(),
            index_path.display(),
            index.dim(),
            index.family()
        )));
    }
    let result = index.search(&descriptor, opts.k)?;
    match opts.format {
        OutputFormat::Text => print!("{}", query_tsv(&result)),
        OutputFormat::Csv => {
            println!("rank,image_id,distance");
            for (r, n) in result.neighbors.iter().enumerate() {
                println!("{},{},{:.6}", r + 1, csv_field(&n.id), n.distance);
            }
        }
        OutputFormat::Html => {
            print!("{}", query_tsv(&result));
            let page = write_query_montage(opts, &layout, family, &query_id, query_path.as_deref(), &result)?;
            eprintln!("montage written to {}", page.display());
        }
    }
    Ok(Outcome::Success)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_query_montage(
    opts: &GlobalOpts,
    layout: &OutputLayout,
    family: Family,
    query_id: &str,
    query_path: Option<&Path>,
    result: &QueryResult,
) -> Result<PathBuf> {
    let dir = layout.query_dir();
    setup::create_dir(&dir)?;
    let manifest = match &opts.manifest {
        Some(m) => Some(Manifest::load(m)?),
        None => None,
    };
    let link = |p: Option<&Path>| p.map(|p| setup::href(&dir, p)).unwrap_or_default();
    let row = MontageRow {
        family,
        query: Tile {
            label: query_id.to_string(),
            href: link(query_path),
            caption: "query".into(),
        },
        hits: result
            .neighbors
            .iter()
            .enumerate()
            .map(|(r, n)| Tile {
                label: format!("#{} {}", r + 1, n.id),
                href: link(manifest.as_ref().and_then(|m| m.get(&n.id)).map(|e| e.path.as_path())),
                caption: format!("d={:.6}", n.distance),
            })
            .collect(),
    };
    let page = dir.join(format!(
        "{}-{}.html",
        sigcode_core::corpus::id_file_stem(query_id),
        family.name()
    ));
    setup::write_file(&page, montage_html(&format!("Query {query_id}"), &[row]))?;
    Ok(page)
}

fn evaluate_cmd(opts: &GlobalOpts, args: &EvaluateArgs) -> Result<Outcome> {
    let corpus = setup::manifest(opts)?;
    let queries = setup::load_manifest(&args.queries)?;
    let layout = OutputLayout::new(&opts.out);

    let mut indices = BTreeMap::new();
    for f in setup::families(opts) {
        let path = layout.index(f);
        if !path.is_file() {
            if f == Family::External {
                log::warn!("no external index at {}; evaluating the other families", path.display());
                continue;
            }
            bail!("no {f} index at {}; run `sigcode index` first", path.display());
        }
        indices.insert(f, load_index(&path, f)?);
    }
    if let Some(ext) = indices.get(&Family::External) {
        let missing: Vec<&str> = queries
            .entries()
            .iter()
            .map(|e| e.id.as_str())
            .filter(|id| ext.position(id).is_none() && !layout.descriptor(Family::External, id).is_file())
            .collect();
        if !missing.is_empty() {
            log::warn!(
                "no external descriptor for queries {}; evaluating the other families",
                missing.join(", ")
            );
            indices.remove(&Family::External);
        }
    }
    if indices.is_empty() {
        bail!("no index to evaluate");
    }
    let reference = indices.values().next().expect("non-empty").ids().to_vec();
    for (f, idx) in &indices {
        if idx.ids() != reference.as_slice() {
            log::warn!("the {f} index does not hold the same ids as the others");
        }
    }

    let computed: Vec<Family> = indices.keys().copied().filter(|f| *f != Family::External).collect();
    let provider = if computed.is_empty() {
        None
    } else {
        Some(setup::provider(setup::profile(opts)?, &args.source)?)
    };
    let pool = setup::thread_pool(opts.workers)?;
    let eval_queries: Vec<EvalQuery> = pool.install(|| {
        queries
            .entries()
            .par_iter()
            .map(|e| -> Result<EvalQuery> {
                let image = ImageRecord::load(&e.id, &e.path)?;
                let mut descriptors = BTreeMap::new();
                if let Some(p) = &provider {
                    let acts = match p.activations_by_id(&e.id) {
                        Some(a) => a?,
                        None => p.activations(&image)?,
                    };
                    let set = build_descriptors(&acts, opts.q, p.config())?;
                    for &f in &computed {
                        descriptors.insert(f, set.get(f).expect("computed family").clone());
                    }
                }
                if let Some(ext) = indices.get(&Family::External) {
                    let file = layout.descriptor(Family::External, &e.id);
                    let d = if file.is_file() {
                        read_descriptor_file(&file)?.1
                    } else {
                        ext.descriptor(&e.id).expect("checked above")
                    };
                    descriptors.insert(Family::External, d);
                }
                Ok(EvalQuery { image, descriptors })
            })
            .collect::<Result<_>>()
            .with_context(|| format!("cannot describe the queries in {}", args.queries.display()))
    })?;
    let report = pool.install(|| evaluate(&eval_queries, &indices, &corpus, opts.k))?;

    let dir = layout.report_dir();
    setup::write_file(&dir.join("hits.csv"), hits_csv(&report))?;
    setup::write_file(&dir.join("summary.csv"), summary_csv(&report))?;
    setup::write_file(&dir.join("summary.txt"), summary_text(&report))?;
    match opts.format {
        OutputFormat::Text => print!("{}", summary_text(&report)),
        OutputFormat::Csv => print!("{}", summary_csv(&report)),
        OutputFormat::Html => {
            let rows = evaluation_montage(&report, &|p| setup::href(&dir, p));
            let page = dir.join("montage.html");
            setup::write_file(&page, montage_html("Retrieval results", &rows))?;
            print!("{}", summary_text(&report));
            eprintln!("montage written to {}", page.display());
        }
    }
    Ok(Outcome::Success)
}

fn inspect(opts: &GlobalOpts, args: &InspectArgs) -> Result<Outcome> {
    let profile = setup::profile(opts)?;
    let provider = setup::provider(profile, &args.source)?;
    let cfg = provider.config().clone();
    let (id, acts) = match (&args.target.id, query_image(&args.target)) {
        (Some(id), _) => {
            let acts = match provider.activations_by_id(id) {
                Some(a) => a?,
                None => {
                    let manifest = setup::manifest(opts)?;
                    let entry = manifest.get(id).ok_or_else(|| anyhow!("id {id:?} is not in the manifest"))?;
                    provider.activations(&ImageRecord::load(id, &entry.path)?)?
                }
            };
            (id.clone(), acts)
        }
        (None, Some((id, path))) => {
            let acts = provider.activations(&ImageRecord::load(&id, &path)?)?;
            (id, acts)
        }
        (None, None) => unreachable!("clap requires --image or --id"),
    };
    let sig = SignificanceSet::compute(&acts, opts.q, &cfg)?;
    let n = cfg.num_blocks();
    let last = sig.last_block();
    let channels = if args.channels.is_empty() {
        let mut order: Vec<usize> = (0..last.len()).collect();
        order.sort_by_key(|&k| (std::cmp::Reverse(last[k].count()), k));
        order.truncate(4);
        order.sort_unstable();
        order
    } else {
        if let Some(&bad) = args.channels.iter().find(|&&k| k >= last.len()) {
            return Err(config_error(format!(
                "channel {bad} out of range, block {n} has {} channels",
                last.len()
            )));
        }
        args.channels.clone()
    };

    let dir = OutputLayout::new(&opts.out).significance_dir(&id);
    setup::create_dir(&dir)?;
    let mut rows = Vec::new();
    for &k in &channels {
        let z = &last[k];
        let path = dir.join(format!("z{n}_c{k}.pgm"));
        setup::write_file(&path, encode_pgm(z.width(), z.height(), &binary_map_levels(z)))?;
        rows.push((path, z.height(), z.width(), format!("{}", z.count())));
    }
    for z in sig.counts() {
        let path = dir.join(format!("z{}.pgm", z.block()));
        setup::write_file(&path, encode_pgm(z.width(), z.height(), &count_map_levels(z)))?;
        let max = z.counts().iter().max().copied().unwrap_or(0);
        rows.push((path, z.height(), z.width(), format!("{max}")));
    }
    println!(
        "{id}: {} of {} last-block neurons significant at q = {}",
        sig.num_significant(),
        last.len() * cfg.last_block().height * cfg.last_block().width,
        opts.q
    );
    for (path, h, w, value) in rows {
        println!("{}\t{h}x{w}\t{value}", path.display());
    }
    Ok(Outcome::Success)
}

fn import(opts: &GlobalOpts, args: &ImportArgs) -> Result<Outcome> {
    let index = match (&args.csv, &args.flat, &args.ids) {
        (Some(csv), _, _) => import_external_csv(csv)?,
        (None, Some(flat), Some(ids)) => import_external_flat(flat, ids)?,
        _ => return Err(config_error("--flat and --ids must be given together")),
    };
    let path = OutputLayout::new(&opts.out).index(Family::External);
    setup::create_dir(path.parent().expect("index path has a parent"))?;
    save_index(&index, &path)?;
    println!("external\t{}\t{}\t{}", index.len(), index.dim(), path.display());
    Ok(Outcome::Success)
}

fn synth(args: &SynthArgs) -> Result<Outcome> {
    let spec = match args.preset {
        Preset::Vgg16 => SynthSpec::vgg16(args.seed),
        Preset::Tiny => SynthSpec::tiny(args.seed),
    };
    let stem = args.name.clone().unwrap_or_else(|| match args.preset {
        Preset::Vgg16 => "vgg16".into(),
        Preset::Tiny => "tiny".into(),
    });
    let profile = write_model(&spec, &args.dir, &stem)?;
    println!("{}", profile.display());
    Ok(Outcome::Success)
}
