//! Colour-histogram assessment of retrieval results.
//!
//! Every image is summarised by three 25-bin histograms (R, G, B) of its
//! original pixels, normalised to frequencies. Two images are compared with
//! the L1 distance of the flattened 75-value vectors divided by 75.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use rayon::prelude::*;

use crate::corpus::{ImageRecord, ImageResolver};
use crate::descriptor::{Descriptor, Family};
use crate::error::{Error, Result};
use crate::index::{top_k, DescriptorIndex};

pub const BINS: usize = 25;
pub const HIST_DIM: usize = 3 * BINS;

/// Bin of an 8-bit channel value: `floor(v * 25 / 256)`.
#[inline]
pub fn bin_of(v: u8) -> usize {
    v as usize * BINS / 256
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorHistogram {
    /// `bins[c][b]` for channel R, G, B; each row sums to 1.
    pub bins: [[f64; BINS]; 3],
}

impl ColorHistogram {
    pub fn flattened(&self) -> [f64; HIST_DIM] {
        let mut out = [0.0; HIST_DIM];
        for (c, row) in self.bins.iter().enumerate() {
            out[c * BINS..(c + 1) * BINS].copy_from_slice(row);
        }
        out
    }
}

pub fn color_histogram(img: &ImageRecord) -> ColorHistogram {
    let mut counts = [[0u64; BINS]; 3];
    for px in img.pixels().pixels() {
        for c in 0..3 {
            counts[c][bin_of(px[c])] += 1;
        }
    }
    let n = img.pixels().width() as f64 * img.pixels().height() as f64;
    let mut bins = [[0.0; BINS]; 3];
    for c in 0..3 {
        for b in 0..BINS {
            bins[c][b] = counts[c][b] as f64 / n;
        }
    }
    ColorHistogram { bins }
}

/// `sum |a - b| / 75` over the flattened histograms.
pub fn histogram_distance(a: &ColorHistogram, b: &ColorHistogram) -> f64 {
    let mut acc = 0.0;
    for c in 0..3 {
        for i in 0..BINS {
            acc += (a.bins[c][i] - b.bins[c][i]).abs();
        }
    }
    acc / HIST_DIM as f64
}

/// A query image with its descriptor for each family to evaluate.
#[derive(Debug, Clone)]
pub struct EvalQuery {
    pub image: ImageRecord,
    pub descriptors: BTreeMap<Family, Descriptor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    /// 1-based.
    pub rank: usize,
    pub id: String,
    pub source_path: PathBuf,
    pub descriptor_distance: f64,
    pub histogram_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyResult {
    pub hits: Vec<Hit>,
    /// Mean of `hits[..].histogram_distance`; 0 when there are no hits.
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryEvaluation {
    pub query_id: String,
    pub source_path: PathBuf,
    pub families: BTreeMap<Family, FamilyResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub k: usize,
    pub families: Vec<Family>,
    pub queries: Vec<QueryEvaluation>,
    /// Mean over queries of the per-query means.
    pub grand_means: BTreeMap<Family, f64>,
}

impl EvaluationReport {
    /// Largest gap between any reported mean and a recomputation from the
    /// listed distances.
    pub fn mean_consistency_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for f in &self.families {
            let mut per_query = Vec::with_capacity(self.queries.len());
            for q in &self.queries {
                let r = &q.families[f];
                let m = mean(r.hits.iter().map(|h| h.histogram_distance));
                worst = worst.max((m - r.mean).abs());
                per_query.push(r.mean);
            }
            let g = mean(per_query.into_iter());
            worst = worst.max((g - self.grand_means[f]).abs());
        }
        worst
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Runs top-k for every (query, family) pair and scores the hits by
/// histogram distance to the query.
///
/// Every query must carry a descriptor for every family in `indices`.
/// Results do not depend on the number of rayon workers.
pub fn evaluate(
    queries: &[EvalQuery],
    indices: &BTreeMap<Family, DescriptorIndex>,
    corpus: &dyn ImageResolver,
    k: usize,
) -> Result<EvaluationReport> {
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    if indices.is_empty() {
        return Err(Error::Argument("no descriptor index to evaluate".into()));
    }
    let families: Vec<Family> = indices.keys().copied().collect();
    let mut pairs = Vec::with_capacity(queries.len() * families.len());
    for (qi, q) in queries.iter().enumerate() {
        for &f in &families {
            let d = q.descriptors.get(&f).ok_or_else(|| {
                Error::Argument(format!("query {:?} has no {f} descriptor", q.image.id()))
            })?;
            pairs.push((qi, f, d));
        }
    }

    let rankings = pairs
        .par_iter()
        .map(|&(_, f, d)| top_k(&indices[&f], d, k))
        .collect::<Result<Vec<_>>>()?;

    let hit_ids: BTreeSet<&str> = rankings.iter().flat_map(|r| r.ids()).collect();
    let hit_ids: Vec<&str> = hit_ids.into_iter().collect();
    let corpus_hists: HashMap<&str, (PathBuf, ColorHistogram)> = hit_ids
        .par_iter()
        .map(|&id| {
            let img = corpus.resolve(id)?;
            Ok((id, (img.source_path().to_path_buf(), color_histogram(&img))))
        })
        .collect::<Result<_>>()?;
    let query_hists: Vec<ColorHistogram> = queries.par_iter().map(|q| color_histogram(&q.image)).collect();

    let mut out: Vec<QueryEvaluation> = queries
        .iter()
        .map(|q| QueryEvaluation {
            query_id: q.image.id().to_string(),
            source_path: q.image.source_path().to_path_buf(),
            families: BTreeMap::new(),
        })
        .collect();
    for (&(qi, f, _), ranking) in pairs.iter().zip(&rankings) {
        let hits: Vec<Hit> = ranking
            .neighbors
            .iter()
            .enumerate()
            .map(|(r, n)| {
                let (path, h) = &corpus_hists[n.id.as_str()];
                Hit {
                    rank: r + 1,
                    id: n.id.clone(),
                    source_path: path.clone(),
                    descriptor_distance: n.distance,
                    histogram_distance: histogram_distance(&query_hists[qi], h),
                }
            })
            .collect();
        let mean = mean(hits.iter().map(|h| h.histogram_distance));
        out[qi].families.insert(f, FamilyResult { hits, mean });
    }

    let grand_means = families
        .iter()
        .map(|f| (*f, mean(out.iter().map(|q| q.families[f].mean))))
        .collect();
    Ok(EvaluationReport {
        k,
        families,
        queries: out,
        grand_means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    fn uniform(id: &str, rgb: [u8; 3]) -> ImageRecord {
        ImageRecord::new(id, format!("{id}.png"), RgbImage::from_pixel(4, 3, Rgb(rgb))).unwrap()
    }

    #[test]
    fn bin_boundaries() {
        // floor(v * 25 / 256) evaluated by hand.
        let cases = [(0u8, 0usize), (10, 0), (11, 1), (102, 9), (103, 10), (245, 23), (246, 24), (255, 24)];
        for (v, b) in cases {
            assert_eq!(bin_of(v), b, "v = {v}");
        }
    }

    #[test]
    fn pure_red_is_one_hot() {
        let h = color_histogram(&uniform("r", [255, 0, 0]));
        assert_eq!(h.bins[0][24], 1.0);
        assert_eq!(h.bins[1][0], 1.0);
        assert_eq!(h.bins[2][0], 1.0);
        for row in &h.bins {
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn red_vs_blue() {
        let r = color_histogram(&uniform("r", [255, 0, 0]));
        let b = color_histogram(&uniform("b", [0, 0, 255]));
        assert!((histogram_distance(&r, &b) - 4.0 / 75.0).abs() < 1e-15);
        assert_eq!(histogram_distance(&r, &r), 0.0);
    }

    #[test]
    fn rotation_keeps_histogram() {
        let mut img = RgbImage::new(5, 3);
        for (x, y, p) in img.enumerate_pixels_mut() {
            *p = Rgb([(x * 40) as u8, (y * 70) as u8, (x * y * 13) as u8]);
        }
        let rotated = image::imageops::rotate90(&img);
        let a = color_histogram(&ImageRecord::new("a", "a", img).unwrap());
        let b = color_histogram(&ImageRecord::new("b", "b", rotated).unwrap());
        assert_eq!(a, b);
    }

    fn toy() -> (Vec<EvalQuery>, BTreeMap<Family, DescriptorIndex>, HashMap<String, ImageRecord>) {
        let colors = [("red", [250, 5, 5]), ("green", [5, 250, 5]), ("blue", [5, 5, 250]), ("grey", [128, 128, 128])];
        let mut corpus = HashMap::new();
        let mut fc = DescriptorIndex::new(Family::Fc, 2);
        let mut conv = DescriptorIndex::new(Family::Conv, 1);
        for (i, (id, c)) in colors.iter().enumerate() {
            corpus.insert(id.to_string(), uniform(id, *c));
            fc.push(*id, &[i as f32, 0.0]).unwrap();
            conv.push(*id, &[(3 - i) as f32]).unwrap();
        }
        let q = EvalQuery {
            image: uniform("q", [250, 5, 5]),
            descriptors: [
                (Family::Fc, Descriptor::new(Family::Fc, vec![0.0, 0.0])),
                (Family::Conv, Descriptor::new(Family::Conv, vec![0.0])),
            ]
            .into_iter()
            .collect(),
        };
        let indices = [(Family::Fc, fc), (Family::Conv, conv)].into_iter().collect();
        (vec![q], indices, corpus)
    }

    #[test]
    fn toy_evaluation() {
        let (queries, indices, corpus) = toy();
        let rep = evaluate(&queries, &indices, &corpus, 2).unwrap();
        let fc = &rep.queries[0].families[&Family::Fc];
        assert_eq!(fc.hits.iter().map(|h| h.id.as_str()).collect::<Vec<_>>(), ["red", "green"]);
        // Query equals "red": 0; vs "green": R and G one-hot bins both move, 4/75.
        assert_eq!(fc.hits[0].histogram_distance, 0.0);
        assert!((fc.hits[1].histogram_distance - 4.0 / 75.0).abs() < 1e-15);
        assert!((fc.mean - 2.0 / 75.0).abs() < 1e-15);
        let conv = &rep.queries[0].families[&Family::Conv];
        assert_eq!(conv.hits.iter().map(|h| h.id.as_str()).collect::<Vec<_>>(), ["grey", "blue"]);
        assert!(rep.mean_consistency_error() < 1e-12);
        assert_eq!(rep.grand_means[&Family::Fc], fc.mean);
    }

    #[test]
    fn unknown_hit_is_named() {
        let (queries, indices, mut corpus) = toy();
        corpus.remove("green");
        match evaluate(&queries, &indices, &corpus, 2) {
            Err(Error::UnknownId(id)) => assert_eq!(id, "green"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_query_descriptor_is_an_error() {
        let (mut queries, indices, corpus) = toy();
        queries[0].descriptors.remove(&Family::Conv);
        assert!(matches!(evaluate(&queries, &indices, &corpus, 2), Err(Error::Argument(_))));
    }
}
