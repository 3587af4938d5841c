use super::experiments::{CurveReport, SizeRow, TimingReport};
use crate::error::{Error, Result};
use crate::oracle::RmseReport;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    /// What was scored, e.g. `test` or `shifted`.
    pub scope: String,
    pub metric: String,
    pub value: Option<f64>,
}

/// Attributions of a set of samples, for plotting.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributionTable {
    pub feature_names: Vec<String>,
    /// Feature values as the model saw them, one row per sample.
    pub values: Vec<Vec<f64>>,
    /// Dense attributions, one row per sample.
    pub phi: Vec<Vec<f64>>,
}

/// Everything an evaluation run produced. Each present part becomes one file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub metrics: Option<Vec<MetricEntry>>,
    pub masking: Option<CurveReport>,
    pub adding: Option<CurveReport>,
    pub subset_size: Option<Vec<SizeRow>>,
    pub oracle: Option<RmseReport>,
    pub timing: Option<TimingReport>,
    pub attributions: Option<AttributionTable>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::path(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn write_curve(path: &Path, c: &CurveReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["method", "k", "ranking", "auc", "ap", "rmse", "mae"])?;
    for r in &c.rows {
        w.write_record([
            r.method.clone(),
            r.k.to_string(),
            r.ranking.clone(),
            opt(r.metrics.auc),
            opt(r.metrics.ap),
            opt(r.metrics.rmse),
            opt(r.metrics.mae),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the present parts of `report` into `out_dir` (CSV tables and SVG
/// plots under `plots/`) and returns the paths written.
pub fn emit_report(report: &ExperimentReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::path(out_dir, e))?;
    let mut written = Vec::new();

    if let Some(m) = &report.metrics {
        let path = out_dir.join("metrics.csv");
        let mut w = writer(&path)?;
        w.write_record(["scope", "metric", "value"])?;
        for e in m {
            w.write_record([e.scope.clone(), e.metric.clone(), opt(e.value)])?;
        }
        w.flush()?;
        written.push(path);
    }
    if let Some(c) = &report.masking {
        let path = out_dir.join("masking.csv");
        write_curve(&path, c)?;
        written.push(path);
    }
    if let Some(c) = &report.adding {
        let path = out_dir.join("adding.csv");
        write_curve(&path, c)?;
        written.push(path);
    }
    if let Some(rows) = &report.subset_size {
        let path = out_dir.join("subset_size.csv");
        let mut w = writer(&path)?;
        w.write_record(["k", "metric", "value"])?;
        for r in rows {
            w.write_record([r.k.to_string(), r.metric.clone(), opt(r.value)])?;
        }
        w.flush()?;
        written.push(path);
    }
    if let Some(o) = &report.oracle {
        let path = out_dir.join("oracle_rmse.csv");
        let mut w = writer(&path)?;
        w.write_record([
            "sample",
            "feature",
            "self_phi",
            "oracle_phi",
            "std_error",
            "n_permutations",
            "exhaustive",
        ])?;
        for (j, s) in o.samples.iter().enumerate() {
            for (i, (a, b)) in s.self_attribution.iter().zip(&s.oracle.phi).enumerate() {
                w.write_record([
                    j.to_string(),
                    i.to_string(),
                    a.to_string(),
                    b.to_string(),
                    s.oracle.std_error[i].to_string(),
                    s.oracle.n_permutations.to_string(),
                    s.oracle.exhaustive.to_string(),
                ])?;
            }
        }
        w.flush()?;
        written.push(path);
    }
    if let Some(t) = &report.timing {
        let path = out_dir.join("timing.csv");
        let mut w = writer(&path)?;
        w.write_record([
            "method",
            "n_samples",
            "total_seconds",
            "seconds_per_sample",
            "hardware",
        ])?;
        for r in &t.rows {
            w.write_record([
                r.method.clone(),
                r.n_samples.to_string(),
                r.total_seconds.to_string(),
                r.seconds_per_sample.to_string(),
                t.hardware.clone(),
            ])?;
        }
        w.flush()?;
        written.push(path);
    }
    if let Some(a) = &report.attributions {
        let dir = out_dir.join("plots");
        std::fs::create_dir_all(&dir).map_err(|e| Error::path(&dir, e))?;
        let path = dir.join("summary.svg");
        std::fs::write(&path, summary_svg(a)).map_err(|e| Error::path(&path, e))?;
        written.push(path);
        if !a.phi.is_empty() {
            let path = dir.join("sample_0.svg");
            std::fs::write(&path, sample_svg(a, 0)).map_err(|e| Error::path(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Blue for low values through red for high, `t` in `[0, 1]`.
fn color(t: f64) -> String {
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.5
    };
    let r = (40.0 + 200.0 * t) as u8;
    let b = (240.0 - 200.0 * t) as u8;
    format!("rgb({r},60,{b})")
}

const LEFT: f64 = 160.0;
const WIDTH: f64 = 720.0;
const ROW: f64 = 28.0;

fn x_scale(lo: f64, hi: f64) -> impl Fn(f64) -> f64 {
    let span = (hi - lo).max(1e-12);
    move |v| LEFT + (v - lo) / span * (WIDTH - LEFT - 20.0)
}

/// Per-feature scatter of attributions, features ordered by mean `|φ|`,
/// points colored by the feature's value.
pub fn summary_svg(a: &AttributionTable) -> String {
    let n = a.feature_names.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mean_abs =
        |i: usize| a.phi.iter().map(|r| r[i].abs()).sum::<f64>() / a.phi.len().max(1) as f64;
    order.sort_by(|&x, &y| mean_abs(y).total_cmp(&mean_abs(x)).then(x.cmp(&y)));
    let all = a.phi.iter().flatten().copied();
    let (lo, hi) = all.fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let sx = x_scale(lo, hi);
    let height = 40.0 + ROW * n as f64 + 30.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="10" y="20">attribution per feature (ordered by mean |phi|)</text>"#
    );
    let zero = sx(0.0);
    let _ = writeln!(
        s,
        r#"<line x1="{zero:.2}" y1="30" x2="{zero:.2}" y2="{:.2}" stroke="gray"/>"#,
        height - 30.0
    );
    for (row, &i) in order.iter().enumerate() {
        let y = 40.0 + ROW * row as f64 + ROW / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="10" y="{:.2}">{}</text>"#,
            y + 4.0,
            escape(&a.feature_names[i])
        );
        let vals: Vec<f64> = a.values.iter().map(|r| r[i]).collect();
        let (vlo, vhi) = vals
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
                (l.min(v), h.max(v))
            });
        for (j, r) in a.phi.iter().enumerate() {
            let jitter = ((j * 7919) % 17) as f64 - 8.0;
            let t = (vals[j] - vlo) / (vhi - vlo);
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}" fill-opacity="0.7"/>"#,
                sx(r[i]),
                y + jitter * 0.6,
                color(t)
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{LEFT}" y="{:.2}">{lo:.3}</text><text x="{:.2}" y="{:.2}" text-anchor="end">{hi:.3}</text>"#,
        height - 10.0,
        WIDTH - 20.0,
        height - 10.0
    );
    s.push_str("</svg>\n");
    s
}

/// Horizontal bar chart of one sample's attributions, largest `|φ|` on top.
pub fn sample_svg(a: &AttributionTable, sample: usize) -> String {
    let phi = &a.phi[sample];
    let n = phi.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| phi[y].abs().total_cmp(&phi[x].abs()).then(x.cmp(&y)));
    let (lo, hi) = phi
        .iter()
        .fold((0.0f64, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let sx = x_scale(lo, hi);
    let height = 40.0 + ROW * n as f64 + 10.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="10" y="20">attributions of sample {sample}</text>"#
    );
    let zero = sx(0.0);
    for (row, &i) in order.iter().enumerate() {
        let y = 40.0 + ROW * row as f64;
        let x = sx(phi[i]);
        let (left, w) = if x < zero {
            (x, zero - x)
        } else {
            (zero, x - zero)
        };
        let fill = if phi[i] >= 0.0 { "#d9534f" } else { "#428bca" };
        let label = format!("{} = {:.3}", a.feature_names[i], a.values[sample][i]);
        let _ = writeln!(
            s,
            r#"<text x="10" y="{:.2}">{}</text>"#,
            y + ROW / 2.0 + 4.0,
            escape(&label)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{left:.2}" y="{:.2}" width="{w:.2}" height="{:.2}" fill="{fill}"><title>{:.6}</title></rect>"#,
            y + 4.0,
            ROW - 8.0,
            phi[i]
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::experiments::CurveRow;
    use crate::eval::MetricSuite;

    fn table() -> AttributionTable {
        AttributionTable {
            feature_names: vec!["a<b".into(), "c&d".into(), "e".into()],
            values: vec![vec![0.0, 1.0, 2.0], vec![1.0, -1.0, 0.5]],
            phi: vec![vec![0.5, -0.25, 0.0], vec![-1.0, 0.1, 0.3]],
        }
    }

    #[test]
    fn empty_parts_give_header_only_csv() {
        let dir = tempfile::tempdir().unwrap();
        let report = ExperimentReport {
            metrics: Some(Vec::new()),
            masking: Some(CurveReport::default()),
            ..Default::default()
        };
        let files = emit_report(&report, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        assert_eq!(
            std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap(),
            "scope,metric,value\n"
        );
        assert_eq!(
            std::fs::read_to_string(dir.path().join("masking.csv")).unwrap(),
            "method,k,ranking,auc,ap,rmse,mae\n"
        );
        assert!(!dir.path().join("adding.csv").exists());
    }

    #[test]
    fn curve_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let curve = CurveReport {
            rows: vec![CurveRow {
                method: "self".into(),
                k: 2,
                ranking: "recomputed".into(),
                metrics: MetricSuite {
                    auc: Some(0.1 + 0.2),
                    ap: Some(1.0 / 3.0),
                    ..Default::default()
                },
            }],
        };
        let report = ExperimentReport {
            adding: Some(curve.clone()),
            ..Default::default()
        };
        emit_report(&report, dir.path()).unwrap();
        let mut r = csv::Reader::from_path(dir.path().join("adding.csv")).unwrap();
        let rec = r.records().next().unwrap().unwrap();
        let parse = |s: &str| (!s.is_empty()).then(|| s.parse::<f64>().unwrap());
        assert_eq!(&rec[0], "self");
        assert_eq!(rec[1].parse::<usize>().unwrap(), 2);
        assert_eq!(&rec[2], "recomputed");
        let m = MetricSuite {
            auc: parse(&rec[3]),
            ap: parse(&rec[4]),
            rmse: parse(&rec[5]),
            mae: parse(&rec[6]),
        };
        assert_eq!(m, curve.rows[0].metrics);
    }

    #[test]
    fn svg_is_well_formed() {
        let t = table();
        for svg in [summary_svg(&t), sample_svg(&t, 1)] {
            let doc = roxmltree::Document::parse(&svg).unwrap();
            assert_eq!(doc.root_element().tag_name().name(), "svg");
        }
        let empty = AttributionTable::default();
        roxmltree::Document::parse(&summary_svg(&empty)).unwrap();
    }

    #[test]
    fn plots_written_under_plots_dir() {
        let dir = tempfile::tempdir().unwrap();
        let report = ExperimentReport {
            attributions: Some(table()),
            ..Default::default()
        };
        let files = emit_report(&report, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        assert!(dir.path().join("plots/summary.svg").exists());
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("blocker");
        std::fs::write(&file, "x").unwrap();
        let report = ExperimentReport {
            metrics: Some(Vec::new()),
            ..Default::default()
        };
        assert!(emit_report(&report, &file.join("sub")).is_err());
    }
}
