//! Text, CSV and HTML renderings of retrieval and evaluation results.
//!
//! Every real number is printed with six decimals.

use std::fmt::Write as _;

use crate::descriptor::Family;
use crate::eval::EvaluationReport;
use crate::index::QueryResult;

/// Label of the grand-mean row in summaries.
pub const AVERAGE_ROW: &str = "Average";

fn csv_bytes(rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for row in rows {
        // Writing to memory cannot fail.
        w.write_record(&row).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
}

/// One row per retrieved image:
/// `query_id,family,rank,image_id,descriptor_distance,histogram_distance`.
pub fn hits_csv(report: &EvaluationReport) -> String {
    let header = ["query_id", "family", "rank", "image_id", "descriptor_distance", "histogram_distance"];
    let mut rows = vec![header.iter().map(|s| s.to_string()).collect()];
    for q in &report.queries {
        for f in &report.families {
            for h in &q.families[f].hits {
                rows.push(vec![
                    q.query_id.clone(),
                    f.name().to_string(),
                    h.rank.to_string(),
                    h.id.clone(),
                    format!("{:.6}", h.descriptor_distance),
                    format!("{:.6}", h.histogram_distance),
                ]);
            }
        }
    }
    csv_bytes(rows)
}

fn summary_rows(report: &EvaluationReport) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity(report.queries.len() + 2);
    let mut header = vec!["query".to_string()];
    header.extend(report.families.iter().map(|f| f.symbol().to_string()));
    rows.push(header);
    for q in &report.queries {
        let mut row = vec![q.query_id.clone()];
        row.extend(report.families.iter().map(|f| format!("{:.6}", q.families[f].mean)));
        rows.push(row);
    }
    let mut avg = vec![AVERAGE_ROW.to_string()];
    avg.extend(report.families.iter().map(|f| format!("{:.6}", report.grand_means[f])));
    rows.push(avg);
    rows
}

/// Per-query mean histogram distance for each family and a final
/// [`AVERAGE_ROW`].
pub fn summary_csv(report: &EvaluationReport) -> String {
    csv_bytes(summary_rows(report))
}

/// The summary as an aligned plain-text table.
pub fn summary_text(report: &EvaluationReport) -> String {
    let rows = summary_rows(report);
    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        if i == rows.len() - 1 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (cols - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                let _ = write!(out, "{cell:<w$}", w = widths[0]);
            } else {
                let _ = write!(out, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push('\n');
    }
    out
}

/// `rank<TAB>id<TAB>distance` lines.
pub fn query_tsv(result: &QueryResult) -> String {
    let mut out = String::new();
    for (r, n) in result.neighbors.iter().enumerate() {
        let _ = writeln!(out, "{}\t{}\t{:.6}", r + 1, n.id, n.distance);
    }
    out
}

/// A thumbnail in an HTML montage.
#[derive(Debug, Clone)]
pub struct Tile {
    pub label: String,
    /// `src` attribute of the image.
    pub href: String,
    pub caption: String,
}

/// One query and its ranked hits under one family.
#[derive(Debug, Clone)]
pub struct MontageRow {
    pub family: Family,
    pub query: Tile,
    pub hits: Vec<Tile>,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(ch),
        }
    }
    out
}

fn tile(out: &mut String, t: &Tile, class: &str) {
    let _ = write!(
        out,
        "<figure class=\"{class}\"><img src=\"{}\" alt=\"{}\"><figcaption>{}<br>{}</figcaption></figure>",
        escape(&t.href),
        escape(&t.label),
        escape(&t.label),
        escape(&t.caption)
    );
}

/// Static page with one line per (query, family): the query followed by its
/// hits in rank order.
pub fn montage_html(title: &str, rows: &[MontageRow]) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>{t}</title>\n<style>\n\
         body {{ font-family: sans-serif; }}\n\
         .row {{ display: flex; align-items: flex-start; gap: 6px; margin-bottom: 12px; }}\n\
         .family {{ width: 7em; font-weight: bold; }}\n\
         figure {{ margin: 0; width: 128px; font-size: 11px; text-align: center; }}\n\
         figure img {{ width: 128px; height: 128px; object-fit: cover; }}\n\
         figure.query img {{ outline: 3px solid #c33; }}\n\
         </style>\n</head>\n<body>\n<h1>{t}</h1>\n",
        t = escape(title)
    );
    for row in rows {
        let _ = write!(
            out,
            "<div class=\"row\"><div class=\"family\">{} {}</div>",
            escape(row.family.name()),
            escape(row.family.symbol())
        );
        tile(&mut out, &row.query, "query");
        for h in &row.hits {
            tile(&mut out, h, "hit");
        }
        out.push_str("</div>\n");
    }
    out.push_str("</body>\n</html>\n");
    out
}

/// Montage rows for a whole evaluation; `href` maps an image path to a
/// `src` attribute.
pub fn evaluation_montage(report: &EvaluationReport, href: &dyn Fn(&std::path::Path) -> String) -> Vec<MontageRow> {
    let mut rows = Vec::new();
    for q in &report.queries {
        for f in &report.families {
            let r = &q.families[f];
            rows.push(MontageRow {
                family: *f,
                query: Tile {
                    label: q.query_id.clone(),
                    href: href(&q.source_path),
                    caption: format!("mean {:.6}", r.mean),
                },
                hits: r
                    .hits
                    .iter()
                    .map(|h| Tile {
                        label: format!("#{} {}", h.rank, h.id),
                        href: href(&h.source_path),
                        caption: format!("d={:.6} hist={:.6}", h.descriptor_distance, h.histogram_distance),
                    })
                    .collect(),
            });
        }
    }
    rows
}
