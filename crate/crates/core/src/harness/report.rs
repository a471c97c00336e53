use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::error::{io_err, HarnessError, HarnessResult};
use super::eval::EvalReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

/// One LG-GAN trained with balance weight `alpha` and scored on test clouds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub seed: u64,
    /// Percent.
    pub asr: f64,
    pub mean_l2: f64,
    pub mean_chamfer: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AlphaSweep {
    pub points: Vec<SweepPoint>,
}

/// Per-alpha means over seeds, in ascending alpha.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMean {
    pub alpha: f64,
    pub seeds: usize,
    pub asr: f64,
    pub mean_l2: f64,
    pub mean_chamfer: f64,
}

impl AlphaSweep {
    pub fn means(&self) -> Vec<SweepMean> {
        let mut alphas: Vec<f64> = self.points.iter().map(|p| p.alpha).collect();
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        alphas
            .into_iter()
            .map(|alpha| {
                let pts: Vec<&SweepPoint> = self.points.iter().filter(|p| p.alpha == alpha).collect();
                let n = pts.len() as f64;
                SweepMean {
                    alpha,
                    seeds: pts.len(),
                    asr: pts.iter().map(|p| p.asr).sum::<f64>() / n,
                    mean_l2: pts.iter().map(|p| p.mean_l2).sum::<f64>() / n,
                    mean_chamfer: pts.iter().map(|p| p.mean_chamfer).sum::<f64>() / n,
                }
            })
            .collect()
    }
}

/// Table columns, timing last.
pub const CSV_HEADER: &str = "attack,victim,defense,instances,produced,asr,accuracy,other,mean_l2,mean_chamfer,mean_kurtosis,mean_seconds";

pub fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        let kurtosis = r.mean_kurtosis.map(|k| k.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.attack, r.victim, r.defense, r.instances, r.produced, r.asr, r.accuracy, r.other, r.mean_l2, r.mean_chamfer, kurtosis, r.mean_seconds
        );
    }
    out
}

fn write(path: PathBuf, contents: &[u8]) -> HarnessResult<PathBuf> {
    fs::write(&path, contents).map_err(io_err(&path))?;
    Ok(path)
}

/// Writes `report.csv` / `report.json` into `dir`, plus the sweep table and
/// plot when a sweep is given. Returns the written paths.
pub fn emit_report(report: &EvalReport, dir: &Path, formats: &[ReportFormat], sweep: Option<&AlphaSweep>) -> HarnessResult<Vec<PathBuf>> {
    if report.rows.is_empty() && sweep.is_none_or(|s| s.points.is_empty()) {
        return Err(HarnessError::Config("nothing to report".into()));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for f in formats {
        written.push(match f {
            ReportFormat::Csv => write(dir.join("report.csv"), report_csv(report).as_bytes())?,
            ReportFormat::Json => write(dir.join("report.json"), &serde_json::to_vec_pretty(report)?)?,
        });
    }
    if let Some(s) = sweep.filter(|s| !s.points.is_empty()) {
        let mut table = String::from("alpha,seeds,asr,mean_l2,mean_chamfer\n");
        for m in s.means() {
            let _ = writeln!(table, "{},{},{},{},{}", m.alpha, m.seeds, m.asr, m.mean_l2, m.mean_chamfer);
        }
        written.push(write(dir.join("alpha_sweep.csv"), table.as_bytes())?);
        written.push(write(dir.join("alpha_sweep.json"), &serde_json::to_vec_pretty(s)?)?);
        written.push(write(dir.join("alpha_sweep.svg"), sweep_svg(s).as_bytes())?);
    }
    Ok(written)
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 70.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

/// Success rate (left axis, percent) and mean ℓ2 / Chamfer (right axis)
/// against log10 alpha. Each series carries its values in `data-values`.
pub fn sweep_svg(sweep: &AlphaSweep) -> String {
    let means = sweep.means();
    let xs: Vec<f64> = means.iter().map(|m| m.alpha.max(1e-12).log10()).collect();
    let (x0, x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let px = |x: f64| LEFT + (x - x0) / span * (W - LEFT - RIGHT);
    let dist_max = means.iter().map(|m| m.mean_l2.max(m.mean_chamfer)).fold(0.0, f64::max).max(1e-12) * 1.1;
    let py = |v: f64, top: f64| H - BOTTOM - v / top * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">Success rate and distortion against alpha</text>"#, W / 2.0);
    let (bx, by) = (H - BOTTOM, W - RIGHT);
    let _ = writeln!(s, r#"<path d="M{LEFT},{TOP} V{bx} H{by} V{TOP}" fill="none" stroke="black"/>"#);
    for (m, &x) in means.iter().zip(&xs) {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(x),
            H - BOTTOM + 18.0,
            m.alpha
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">alpha (log scale)</text>"#, W / 2.0, H - 18.0);
    for tick in [0.0, 25.0, 50.0, 75.0, 100.0] {
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end" fill="red">{tick}</text>"#, LEFT - 6.0, py(tick, 100.0) + 4.0);
    }
    for k in 0..=4 {
        let v = dist_max * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" fill="blue">{v:.4}</text>"#, W - RIGHT + 6.0, py(v, dist_max) + 4.0);
    }
    let series: [(&str, &str, Vec<f64>, f64); 3] = [
        ("asr", "red", means.iter().map(|m| m.asr).collect(), 100.0),
        ("l2", "blue", means.iter().map(|m| m.mean_l2).collect(), dist_max),
        ("chamfer", "black", means.iter().map(|m| m.mean_chamfer).collect(), dist_max),
    ];
    for (name, color, values, top) in &series {
        let pts: Vec<String> = xs.iter().zip(values).map(|(&x, &v)| format!("{:.2},{:.2}", px(x), py(v, *top))).collect();
        let data: Vec<String> = values.iter().map(f64::to_string).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="{name}" data-values="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            data.join(" "),
            pts.join(" ")
        );
        for p in &pts {
            let (x, y) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#);
        }
    }
    let legend = [("red", "success rate (%)"), ("blue", "mean l2"), ("black", "mean Chamfer")];
    for (i, (color, label)) in legend.iter().enumerate() {
        let y = TOP + 14.0 + 16.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#, LEFT + 10.0, LEFT + 30.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{label}</text>"#, LEFT + 36.0, y + 4.0);
    }
    s.push_str("</svg>\n");
    s
}
