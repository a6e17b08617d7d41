use std::fs;
use std::path::Path;

use super::run::{Condition, ReportRow, ScenarioReport};
use crate::error::{Error, Result};

/// Column order of `report.csv`.
pub const CSV_COLUMNS: [&str; 10] = [
    "condition",
    "method",
    "si_snr",
    "mse",
    "eer_white",
    "eer_black",
    "pitch_mean",
    "pitch_std",
    "pesq",
    "wer",
];

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("report csv: {e}"))
}

pub fn report_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(Error::InvalidInput(format!("unexpected report columns {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Vertical bar chart of one value per label as a standalone SVG document.
pub fn bar_chart_svg(title: &str, unit: &str, bars: &[(String, f64)]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 300.0;
    const LEFT: f64 = 60.0;
    const BOTTOM: f64 = 250.0;
    const TOP: f64 = 40.0;
    let lo = bars.iter().map(|b| b.1).fold(0.0f64, f64::min);
    let hi = bars.iter().map(|b| b.1).fold(0.0f64, f64::max).max(lo + 1e-9);
    let y = |v: f64| BOTTOM - (v - lo) / (hi - lo) * (BOTTOM - TOP);
    let slot = (W - LEFT - 20.0) / bars.len().max(1) as f64;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n\
         <line x1=\"{LEFT}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">{}</text>\n",
        W / 2.0,
        xml_escape(title),
        y(0.0),
        W - 20.0,
        y(0.0),
        (BOTTOM + TOP) / 2.0,
        (BOTTOM + TOP) / 2.0,
        xml_escape(unit)
    );
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = LEFT + slot * i as f64 + slot * 0.2;
        let (top, bottom) = if *v >= 0.0 { (y(*v), y(0.0)) } else { (y(0.0), y(*v)) };
        s.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{top:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#4477aa\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{v:.2}</text>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            slot * 0.6,
            (bottom - top).max(0.5),
            x + slot * 0.3,
            top - 4.0,
            x + slot * 0.3,
            BOTTOM + 18.0,
            xml_escape(label)
        ));
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn label(r: &ReportRow) -> String {
    match r.condition {
        Condition::Ori => "Ori".into(),
        Condition::Adv => format!("Adv ({})", r.method),
        Condition::Processed => r.method.clone(),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `report.csv`, `report.json`, `si_snr.svg` and `eer.svg`.
pub fn emit_report(report: &ScenarioReport, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write(&out_dir.join("report.csv"), &report_csv(&report.rows)?)?;
    write(&out_dir.join("report.json"), &serde_json::to_string_pretty(report)?)?;
    write_plots(report, out_dir)
}

pub fn write_plots(report: &ScenarioReport, out_dir: &Path) -> Result<()> {
    let title = &report.metadata.label;
    let si: Vec<(String, f64)> = report
        .rows
        .iter()
        .filter(|r| r.condition != Condition::Ori)
        .map(|r| (label(r), r.si_snr))
        .collect();
    write(
        &out_dir.join("si_snr.svg"),
        &bar_chart_svg(&format!("SI-SNR vs original, {title}"), "dB", &si),
    )?;
    let mut eer: Vec<(String, f64)> = Vec::new();
    for r in &report.rows {
        eer.push((format!("{} white", label(r)), r.eer_white));
        eer.push((format!("{} black", label(r)), r.eer_black));
    }
    write(&out_dir.join("eer.svg"), &bar_chart_svg(&format!("EER, {title}"), "%", &eer))
}

pub fn load_report(dir: &Path) -> Result<ScenarioReport> {
    let p = dir.join("report.json");
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Fixed-width text rendering of the rows.
pub fn format_table(rows: &[ReportRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    let mut s = format!(
        "{:<10} {:<15} {:>8} {:>10} {:>9} {:>9} {:>10} {:>9}\n",
        "condition", "method", "si_snr", "mse", "eer_white", "eer_black", "pitch_mean", "pitch_std"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<10} {:<15} {:>8.2} {:>10.2} {:>9.2} {:>9.2} {:>10} {:>9}\n",
            format!("{:?}", r.condition),
            r.method,
            r.si_snr,
            r.mse,
            r.eer_white,
            r.eer_black,
            opt(r.pitch_mean),
            opt(r.pitch_std)
        ));
    }
    s
}
