use super::metrics::{CategoryMetrics, OverlapAnalysis, Score};
use crate::encoding::{Bitfield, NUM_CATEGORIES};
use crate::{Error, Result};

pub const REPORT_HEADER: &str = "category,encoding,blobs,f1,precision,recall";

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub category: String,
    pub encoding: String,
    pub blobs: String,
    pub score: Score,
}

fn row(category: &str, encoding: &str, blobs: &str, s: Score) -> String {
    format!("{category},{encoding},{blobs},{:.3},{:.3},{:.3}\n", s.f1, s.precision, s.recall)
}

/// Eight category rows plus the macro Average row, three decimals.
pub fn report_csv(metrics: &CategoryMetrics, blobs: &[usize; NUM_CATEGORIES]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for b in Bitfield::all() {
        let count = if b.is_background() { "-".to_string() } else { blobs[b.index()].to_string() };
        out.push_str(&row(&b.name(), &b.to_string(), &count, metrics.score(b)));
    }
    out.push_str(&row("Average", "", "", metrics.macro_average()));
    out
}

pub fn parse_report(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == REPORT_HEADER => {}
        _ => return Err(Error::format(0, format!("report must start with {REPORT_HEADER:?}"))),
    }
    let mut offset = text.find('\n').map_or(text.len(), |i| i + 1) as u64;
    let mut rows = Vec::new();
    for (_, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(Error::format(offset, format!("expected 6 fields in {line:?}")));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::format(offset, format!("bad number {s:?}")));
        rows.push(ReportRow {
            category: f[0].into(),
            encoding: f[1].into(),
            blobs: f[2].into(),
            score: Score { f1: num(f[3])?, precision: num(f[4])?, recall: num(f[5])? },
        });
        offset += line.len() as u64 + 1;
    }
    if rows.len() != NUM_CATEGORIES + 1 {
        return Err(Error::format(offset, format!("{} report rows, expected {}", rows.len(), NUM_CATEGORIES + 1)));
    }
    Ok(rows)
}

/// Side-by-side table of several reports, one F1/precision/recall column
/// triple per run.
pub fn comparison_csv(runs: &[(String, Vec<ReportRow>)]) -> Result<String> {
    let first = runs.first().ok_or_else(|| Error::Usage("no reports to compare".into()))?;
    let mut out = String::from("category,encoding,blobs");
    for (name, _) in runs {
        out.push_str(&format!(",{name} F1,{name} Precision,{name} Recall"));
    }
    out.push('\n');
    for (i, base) in first.1.iter().enumerate() {
        out.push_str(&format!("{},{},{}", base.category, base.encoding, base.blobs));
        for (name, rows) in runs {
            let r = rows.get(i).filter(|r| r.category == base.category).ok_or_else(|| {
                Error::Usage(format!("report {name} has no row {} for {}", i + 1, base.category))
            })?;
            out.push_str(&format!(",{:.3},{:.3},{:.3}", r.score.f1, r.score.precision, r.score.recall));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Fixed-width rendering of a comparison CSV for terminals.
pub fn render_table(csv: &str) -> String {
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in &rows {
        let cells: Vec<String> = r.iter().enumerate().map(|(c, s)| format!("{s:<w$}", w = widths[c])).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub fn overlap_csv(analysis: &OverlapAnalysis) -> String {
    let mut out = String::from("category,encoding,pixels,exact_recall,constituent_recall,subset_fraction,bit_recall\n");
    for c in &analysis.categories {
        let bits: Vec<String> = c.bit_recall.iter().map(|(p, r)| format!("{}:{r:.3}", p.name())).collect();
        out.push_str(&format!(
            "{},{},{},{:.3},{:.3},{:.3},{}\n",
            c.category.name(),
            c.category,
            c.pixels,
            c.exact_recall,
            c.constituent_recall,
            c.subset_fraction,
            bits.join(";")
        ));
    }
    out.push_str(&format!(
        "two-way,,{},{:.3},{:.3},,\n",
        analysis.two_way_pixels, analysis.two_way_exact_recall, analysis.two_way_constituent_recall
    ));
    out
}
