//! Report files.
//!
//! The summary CSV has one row per configuration and the JSON document
//! carries the same numbers plus per-fold metrics and DET points. Rates are
//! fractions in both. Floats are written in shortest round-trip form, so a
//! value parsed back from either file is the same `f64`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::write_atomic;
use crate::error::{Error, Result};
use crate::eval::{EvalReport, Scenario, TSweepPoint, FPIR_TARGETS, REPORT_SCHEMA_VERSION};

pub const SUMMARY_COLUMNS: [&str; 20] = [
    "schema_version",
    "scenario",
    "characteristics",
    "scheme",
    "strategy",
    "k",
    "bins_possible",
    "t",
    "probes",
    "mean_enrolled",
    "mean_comparisons",
    "std_comparisons",
    "w_u",
    "w_l",
    "w_open",
    "mean_bins_visited",
    "std_bins_visited",
    "hit_rate",
    "fnir_at_fpir_0.01",
    "fnir_at_fpir_0.1",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub reports: Vec<EvalReport>,
}

impl ReportFile {
    /// Per-probe logs are dropped; they go to their own CSV.
    pub fn new(reports: &[EvalReport]) -> Self {
        let reports = reports
            .iter()
            .map(|r| {
                let mut r = r.clone();
                for f in &mut r.folds {
                    f.probes.clear();
                }
                r
            })
            .collect();
        ReportFile {
            schema_version: REPORT_SCHEMA_VERSION,
            reports,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ReportFile = serde_json::from_str(s)?;
        if file.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported report schema version {}",
                file.schema_version
            )));
        }
        Ok(file)
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::State(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.into_inner()
        .map_err(|e| Error::State(format!("csv encoding failed: {e}")))
}

pub fn summary_row(r: &EvalReport) -> Vec<String> {
    let a = &r.aggregate;
    let k = r.indexing.k();
    let mean_enrolled =
        r.folds.iter().map(|f| f.enrolled as f64).sum::<f64>() / r.folds.len().max(1) as f64;
    let fnir = |target: f64| match r.scenario {
        Scenario::OpenSet => opt(r.fnir(target)),
        Scenario::ClosedSet => String::new(),
    };
    vec![
        REPORT_SCHEMA_VERSION.to_string(),
        match r.scenario {
            Scenario::ClosedSet => "closed-set".into(),
            Scenario::OpenSet => "open-set".into(),
        },
        r.label(),
        r.scheme.to_string(),
        r.indexing.label(),
        opt(k),
        opt(k.map(|k| 1u64 << k)),
        opt(r.t),
        a.probes.to_string(),
        mean_enrolled.to_string(),
        a.mean_comparisons.to_string(),
        a.std_comparisons.to_string(),
        a.w_u.to_string(),
        a.w_l.to_string(),
        opt(a.w_open),
        a.mean_bins_visited.to_string(),
        a.std_bins_visited.to_string(),
        a.hit_rate.to_string(),
        fnir(FPIR_TARGETS[0]),
        fnir(FPIR_TARGETS[1]),
    ]
}

pub fn summary_csv(reports: &[EvalReport]) -> Result<Vec<u8>> {
    csv_bytes(&SUMMARY_COLUMNS, reports.iter().map(summary_row))
}

pub fn report_json(reports: &[EvalReport]) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(&ReportFile::new(reports))?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// Tidy DET points of every open-set report.
pub fn det_csv(reports: &[EvalReport]) -> Result<Vec<u8>> {
    let rows = reports.iter().flat_map(|r| {
        r.det.iter().map(move |p| {
            vec![
                r.label(),
                r.scheme.to_string(),
                r.indexing.label(),
                opt(r.indexing.k()),
                p.threshold.to_string(),
                p.fpir.to_string(),
                p.fnir.to_string(),
            ]
        })
    });
    csv_bytes(
        &[
            "characteristics",
            "scheme",
            "strategy",
            "k",
            "threshold",
            "fpir",
            "fnir",
        ],
        rows,
    )
}

pub fn probes_csv(reports: &[EvalReport]) -> Result<Vec<u8>> {
    let rows = reports.iter().flat_map(|r| {
        r.all_probes().map(move |l| {
            vec![
                match r.scenario {
                    Scenario::ClosedSet => "closed-set".into(),
                    Scenario::OpenSet => "open-set".into(),
                },
                r.label(),
                r.scheme.to_string(),
                r.indexing.label(),
                opt(r.indexing.k()),
                l.fold.to_string(),
                l.subject_id.to_string(),
                l.mated.to_string(),
                l.bins_visited.to_string(),
                l.comparisons.to_string(),
                l.baseline.to_string(),
                l.hit.to_string(),
                opt(l.mate_score),
                opt(l.top_score),
            ]
        })
    });
    csv_bytes(
        &[
            "scenario",
            "characteristics",
            "scheme",
            "strategy",
            "k",
            "fold",
            "subject_id",
            "mated",
            "bins_visited",
            "comparisons",
            "baseline",
            "hit",
            "mate_score",
            "top_score",
        ],
        rows,
    )
}

pub fn t_sweep_csv(points: &[TSweepPoint]) -> Result<Vec<u8>> {
    csv_bytes(
        &["t", "hit_rate", "w"],
        points
            .iter()
            .map(|p| vec![p.t.to_string(), p.hit_rate.to_string(), p.w.to_string()]),
    )
}

/// Plain-text table for terminals.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:<14} {:<14} {:>2} {:>9} {:>9} {:>8} {:>8} {:>8} {:>8}",
        "characteristics", "scheme", "strategy", "k", "#comp", "std", "W_u", "W_l", "bins", "H-R"
    );
    for r in reports {
        let a = &r.aggregate;
        let _ = writeln!(
            out,
            "{:<24} {:<14} {:<14} {:>2} {:>9.2} {:>9.2} {:>7.2}% {:>7.2}% {:>8.2} {:>7.2}%",
            r.label(),
            r.scheme.to_string(),
            r.indexing.label(),
            opt(r.indexing.k()),
            a.mean_comparisons,
            a.std_comparisons,
            100.0 * a.w_u,
            100.0 * a.w_l,
            a.mean_bins_visited,
            100.0 * a.hit_rate,
        );
        if r.scenario == Scenario::OpenSet {
            let _ = writeln!(
                out,
                "    t = {}  W_open = {:.2}%  FNIR@FPIR=0.01 {:.4}  FNIR@FPIR=0.1 {:.4}",
                opt(r.t),
                100.0 * a.w_open.unwrap_or(1.0),
                r.fnir(FPIR_TARGETS[0]).unwrap_or(f64::NAN),
                r.fnir(FPIR_TARGETS[1]).unwrap_or(f64::NAN),
            );
        }
    }
    out
}

pub fn write_reports(dir: &Path, stem: &str, reports: &[EvalReport]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join(format!("{stem}.csv")), &summary_csv(reports)?)?;
    write_atomic(&dir.join(format!("{stem}.json")), &report_json(reports)?)?;
    write_atomic(
        &dir.join(format!("{stem}_probes.csv")),
        &probes_csv(reports)?,
    )?;
    if reports.iter().any(|r| !r.det.is_empty()) {
        write_atomic(&dir.join(format!("{stem}_det.csv")), &det_csv(reports)?)?;
    }
    Ok(())
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Argument(
            "spearman needs two equally long samples of two or more values".into(),
        ));
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Argument(
            "spearman is undefined for a constant sample".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}
