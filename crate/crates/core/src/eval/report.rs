//! Result files: `results.csv`, one confusion CSV per model and fold, and
//! an SVG bar chart of mean accuracy with SD error bars.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::metrics::{Confusion, ExpertSummary, MetricSummary};
use crate::corpus::DeauvilleLabel;
use crate::error::{Error, IoContext, Result};

pub const RESULTS_FILE: &str = "results.csv";
pub const CHART_FILE: &str = "accuracy.svg";

/// Row label used for an expert reference line in `results.csv`.
pub const EXPERT_ROW: &str = "human-expert";

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

pub fn confusion_file_name(model: &str, iteration: usize) -> String {
    format!("confusion_{model}_{iteration}.csv")
}

fn confusion_csv(m: &Confusion) -> String {
    let mut s = String::from("truth\\predicted,1,2,3,4,5\n");
    for (i, row) in m.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "{},{}", i + 1, cells.join(","));
    }
    s
}

/// Renders `results.csv`: one row per model with summary columns followed by
/// `acc_fold<k>` and `kappa_fold<k>` columns.
pub fn results_table(summaries: &[MetricSummary], expert: Option<&ExpertSummary>) -> String {
    let n_folds = summaries.iter().map(|s| s.folds.len()).max().unwrap_or(0);
    let mut header = vec!["model".to_string(), "weighting".into(), "acc_mean".into(), "acc_sd".into(), "kappa_mean".into()];
    header.extend((1..=n_folds).map(|k| format!("acc_fold{k}")));
    header.extend((1..=n_folds).map(|k| format!("kappa_fold{k}")));
    let mut out = header.join(",") + "\n";
    for s in summaries {
        let mut row = vec![s.model_name.clone(), s.weighting.name().into(), fmt(s.acc_mean), fmt(s.acc_sd), fmt(s.kappa_mean)];
        let cell = |v: Option<f64>| v.map(fmt).unwrap_or_default();
        row.extend((0..n_folds).map(|k| cell(s.folds.get(k).map(|f| f.accuracy))));
        row.extend((0..n_folds).map(|k| cell(s.folds.get(k).map(|f| f.kappa_w))));
        out += &(row.join(",") + "\n");
    }
    if let Some(e) = expert {
        let mut row = vec![EXPERT_ROW.to_string(), e.weighting.name().into(), fmt(e.accuracy), String::new(), fmt(e.kappa_w)];
        row.extend(std::iter::repeat(String::new()).take(2 * n_folds));
        out += &(row.join(",") + "\n");
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Bar chart of mean accuracy with +-SD error bars, one bar per model.
pub fn bar_chart_svg(summaries: &[MetricSummary]) -> String {
    let (bar_w, gap, left, top, plot_h) = (60.0, 30.0, 60.0, 30.0, 300.0);
    let width = left + gap + summaries.len() as f64 * (bar_w + gap);
    let height = top + plot_h + 70.0;
    let y = |v: f64| top + plot_h * (1.0 - v.clamp(0.0, 1.0));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle">Five-class accuracy (mean &#177; SD)</text>"#, width / 2.0);
    for k in 0..=10 {
        let v = k as f64 / 10.0;
        let _ = writeln!(
            s,
            r##"<line class="grid" x1="{left}" y1="{0:.1}" x2="{1}" y2="{0:.1}" stroke="#ddd"/><text x="{2}" y="{3:.1}" text-anchor="end">{v:.1}</text>"##,
            y(v),
            width - 10.0,
            left - 6.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + plot_h);
    for (i, m) in summaries.iter().enumerate() {
        let x = left + gap + i as f64 * (bar_w + gap);
        let cx = x + bar_w / 2.0;
        let name = escape(&m.model_name);
        let _ = writeln!(
            s,
            r##"<rect class="bar" data-model="{name}" x="{x:.1}" y="{:.1}" width="{bar_w}" height="{:.1}" fill="#4c78a8"/>"##,
            y(m.acc_mean),
            top + plot_h - y(m.acc_mean)
        );
        let (lo, hi) = (y(m.acc_mean - m.acc_sd), y(m.acc_mean + m.acc_sd));
        let _ = writeln!(
            s,
            r#"<g class="errorbar" data-model="{name}" stroke="black"><line x1="{cx:.1}" y1="{lo:.1}" x2="{cx:.1}" y2="{hi:.1}"/><line x1="{:.1}" y1="{lo:.1}" x2="{:.1}" y2="{lo:.1}"/><line x1="{:.1}" y1="{hi:.1}" x2="{:.1}" y2="{hi:.1}"/></g>"#,
            cx - 8.0,
            cx + 8.0,
            cx - 8.0,
            cx + 8.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{name}</text><text x="{cx:.1}" y="{:.1}" text-anchor="middle">{:.1}&#177;{:.1}%</text>"#,
            top + plot_h + 18.0,
            top + plot_h + 34.0,
            100.0 * m.acc_mean,
            100.0 * m.acc_sd
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes every report file into `dir` and returns their paths.
pub fn report(dir: &Path, summaries: &[MetricSummary], expert: Option<&ExpertSummary>) -> Result<Vec<PathBuf>> {
    if summaries.is_empty() {
        return Err(Error::validation("report needs at least one summary"));
    }
    fs::create_dir_all(dir).at(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body).at(&path)?;
        written.push(path);
        Ok(())
    };
    put(RESULTS_FILE.into(), results_table(summaries, expert))?;
    for s in summaries {
        for f in &s.folds {
            put(confusion_file_name(&s.model_name, f.iteration), confusion_csv(&f.confusion))?;
        }
    }
    put(CHART_FILE.into(), bar_chart_svg(summaries))?;
    Ok(written)
}

/// Reads `exam_id,<score>` rows (header required); scores must be 1..5.
/// Rows with an empty score are skipped and extra columns are ignored.
pub fn read_label_csv(path: &Path) -> Result<Vec<(String, DeauvilleLabel)>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let (Some(id), Some(score)) = (rec.get(0), rec.get(1)) else {
            return Err(Error::validation(format!("{}: row {} needs two fields", path.display(), line + 2)));
        };
        if score.trim().is_empty() {
            continue;
        }
        let value: u8 = score
            .trim()
            .parse()
            .map_err(|_| Error::validation(format!("{}: row {}: score `{score}` is not 1-5", path.display(), line + 2)))?;
        out.push((id.trim().to_string(), DeauvilleLabel::new(value)?));
    }
    Ok(out)
}

pub fn write_label_csv(path: &Path, header: &str, rows: &[(String, DeauvilleLabel)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["exam_id", header])?;
    for (id, l) in rows {
        w.write_record([id.as_str(), &l.value().to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn truth_map(rows: Vec<(String, DeauvilleLabel)>) -> Result<BTreeMap<String, DeauvilleLabel>> {
    let mut map = BTreeMap::new();
    for (id, l) in rows {
        if map.insert(id.clone(), l).is_some() {
            return Err(Error::validation(format!("exam {id} listed twice in the truth file")));
        }
    }
    Ok(map)
}
