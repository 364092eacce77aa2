//! CSV tables and self-contained SVG figures.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::prompting::Trait;

use super::experiment::{EvalOutput, ExperimentReport, MlBaselineReport, Scores};
use super::stats::TAU_ALPHA;

fn csv_bytes<R: Serialize>(rows: &[R]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))
}

fn write_csv<R: Serialize>(dir: &Path, name: &str, rows: &[R]) -> Result<()> {
    write_atomic(&dir.join(name), &csv_bytes(rows)?)
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    fold: Option<usize>,
    metric: &'a str,
    method: &'a str,
    value: f64,
}

fn score_rows<'a>(fold: Option<usize>, metric: &'a str, scores: &'a Scores, out: &mut Vec<ScoreRow<'a>>) {
    for (method, value) in scores {
        out.push(ScoreRow {
            fold,
            metric,
            method,
            value: *value,
        });
    }
}

/// `eval_folds.csv` (one row per fold, metric and method) and `eval_summary.csv`.
pub fn write_eval_tables(dir: &Path, eval: &EvalOutput) -> Result<()> {
    let mut rows = Vec::new();
    for f in &eval.folds {
        score_rows(Some(f.fold), "train_ems", &f.train_ems, &mut rows);
        score_rows(Some(f.fold), "test_ems", &f.test_ems, &mut rows);
        score_rows(Some(f.fold), "accuracy", &f.accuracy, &mut rows);
        score_rows(Some(f.fold), "variance_rmse", &f.variance_rmse, &mut rows);
    }
    write_csv(dir, "eval_folds.csv", &rows)?;
    let s = &eval.summary;
    let mut rows = Vec::new();
    score_rows(None, "train_ems", &s.train_ems, &mut rows);
    score_rows(None, "test_ems", &s.test_ems, &mut rows);
    score_rows(None, "accuracy", &s.accuracy, &mut rows);
    score_rows(None, "variance_rmse", &s.variance_rmse, &mut rows);
    write_csv(dir, "eval_summary.csv", &rows)
}

#[derive(Serialize)]
struct MlCsvRow<'a> {
    task: &'a str,
    encoding: &'a str,
    family: &'a str,
    best: &'a str,
    metric: &'a str,
    mean: f64,
}

pub fn write_ml_table(dir: &Path, ml: &MlBaselineReport) -> Result<()> {
    let rows: Vec<MlCsvRow> = ml
        .rows
        .iter()
        .map(|r| MlCsvRow {
            task: &r.task,
            encoding: r.encoding.name(),
            family: r.family.name(),
            best: &r.best,
            metric: match r.metric {
                crate::ml::Metric::Accuracy => "accuracy",
                crate::ml::Metric::Rmse => "rmse",
            },
            mean: r.mean,
        })
        .collect();
    write_csv(dir, "ml_baseline.csv", &rows)
}

/// All report tables: evaluation, weights, ML rows, histogram, flows and tau.
pub fn write_report_tables(dir: &Path, report: &ExperimentReport) -> Result<()> {
    write_eval_tables(
        dir,
        &EvalOutput {
            scheme: report.settings.scheme,
            phase: report.settings.phase,
            folds: report.folds.clone(),
            summary: report.summary.clone(),
        },
    )?;
    if let Some(ml) = &report.ml_baseline {
        write_ml_table(dir, ml)?;
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
    let mut header = vec!["fold".to_string(), "selection".into(), "crossover".into()];
    header.extend(Trait::ALL.iter().map(|t| t.code().to_string()));
    header.extend(["train_fitness".to_string(), "test_ems".into()]);
    w.write_record(&header).map_err(csv_err)?;
    for rec in &report.weights {
        let mut row = vec![rec.fold.to_string(), rec.cell.selection.clone(), rec.cell.crossover.clone()];
        row.extend(Trait::ALL.iter().map(|t| rec.weights.get(t.code()).copied().unwrap_or(0.0).to_string()));
        row.extend([rec.train_fitness.to_string(), rec.test_ems.to_string()]);
        w.write_record(&row).map_err(csv_err)?;
    }
    write_atomic(&dir.join("weights.csv"), &w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))?)?;

    #[derive(Serialize)]
    struct HistRow<'a> {
        label: &'a str,
        phase1_pct: f64,
        phase2_pct: f64,
        delta_pp: f64,
    }
    let h = &report.dataset.histogram;
    let rows: Vec<HistRow> = (0..h.labels.len())
        .map(|i| HistRow {
            label: &h.labels[i],
            phase1_pct: h.phase1_pct[i],
            phase2_pct: h.phase2_pct[i],
            delta_pp: h.delta_pp[i],
        })
        .collect();
    write_csv(dir, "label_histogram.csv", &rows)?;

    if let Some(flows) = &report.dataset.flows {
        #[derive(Serialize)]
        struct FlowRow<'a> {
            item_type: &'a str,
            from: &'a str,
            to: &'a str,
            count: u64,
        }
        let labels = &h.labels;
        let mut rows = Vec::new();
        for (t, m) in flows {
            for (i, row) in m.iter().enumerate() {
                for (j, c) in row.iter().enumerate() {
                    rows.push(FlowRow {
                        item_type: t.name(),
                        from: &labels[i],
                        to: &labels[j],
                        count: *c,
                    });
                }
            }
        }
        write_csv(dir, "label_flows.csv", &rows)?;
    }

    #[derive(Serialize)]
    struct TauRow<'a> {
        a: &'a str,
        b: &'a str,
        tau: Option<f64>,
        p_value: Option<f64>,
    }
    let tau = &report.dataset.tau;
    let mut rows = Vec::new();
    for (i, a) in tau.names.iter().enumerate() {
        for (j, b) in tau.names.iter().enumerate() {
            let e = tau.entries[i][j];
            rows.push(TauRow {
                a,
                b,
                tau: e.map(|k| k.tau),
                p_value: e.map(|k| k.p_value),
            });
        }
    }
    write_csv(dir, "feature_tau.csv", &rows)
}

const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64, title: &str) -> Self {
        let mut s = Svg {
            body: String::new(),
            width,
            height,
        };
        s.text(width / 2.0, 22.0, title, 15.0, "middle");
        s
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, t: &str, size: f64, anchor: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size}" text-anchor="{anchor}">{}</text>"#,
            esc(t)
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64) {
        let _ = writeln!(
            self.body,
            r##"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="#333" stroke-width="1"/>"##
        );
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Grouped vertical bars: one group per category, one bar per series.
fn bar_chart(title: &str, categories: &[String], series: &[(String, Vec<f64>)], y_max: f64) -> String {
    let (left, top, plot_w, plot_h) = (60.0, 40.0, 80.0 * categories.len().max(1) as f64, 260.0);
    let mut svg = Svg::new(left + plot_w + 160.0, top + plot_h + 70.0, title);
    let y_max = if y_max > 0.0 { y_max } else { 1.0 };
    svg.line(left, top, left, top + plot_h);
    svg.line(left, top + plot_h, left + plot_w, top + plot_h);
    for tick in 0..=4 {
        let v = y_max * tick as f64 / 4.0;
        let y = top + plot_h - plot_h * tick as f64 / 4.0;
        svg.line(left - 4.0, y, left, y);
        svg.text(left - 6.0, y + 4.0, &format!("{v:.2}"), 10.0, "end");
    }
    let group_w = plot_w / categories.len().max(1) as f64;
    let bar_w = (group_w * 0.8) / series.len().max(1) as f64;
    for (ci, cat) in categories.iter().enumerate() {
        let gx = left + group_w * ci as f64 + group_w * 0.1;
        for (si, (_, values)) in series.iter().enumerate() {
            let v = values[ci].max(0.0);
            let h = plot_h * (v / y_max).min(1.0);
            svg.rect(gx + bar_w * si as f64, top + plot_h - h, bar_w * 0.95, h, PALETTE[si % PALETTE.len()]);
        }
        svg.text(left + group_w * (ci as f64 + 0.5), top + plot_h + 16.0, cat, 10.0, "middle");
    }
    for (si, (name, _)) in series.iter().enumerate() {
        let y = top + 14.0 + 18.0 * si as f64;
        svg.rect(left + plot_w + 20.0, y - 10.0, 12.0, 12.0, PALETTE[si % PALETTE.len()]);
        svg.text(left + plot_w + 38.0, y, name, 11.0, "start");
    }
    svg.finish()
}

fn tau_heatmap(report: &ExperimentReport) -> String {
    let tau = &report.dataset.tau;
    let masked = tau.masked(TAU_ALPHA);
    let n = tau.names.len();
    let (left, top, cell) = (130.0, 40.0, 44.0);
    let mut svg = Svg::new(left + cell * n as f64 + 20.0, top + cell * n as f64 + 110.0, "Kendall tau (p < 0.05)");
    for (i, name) in tau.names.iter().enumerate() {
        svg.text(left - 6.0, top + cell * (i as f64 + 0.6), name, 10.0, "end");
        let x = left + cell * (i as f64 + 0.5);
        let y = top + cell * n as f64 + 10.0;
        let _ = writeln!(
            svg.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="10" text-anchor="start" transform="rotate(60 {x:.2} {y:.2})">{}</text>"#,
            esc(name)
        );
        for j in 0..n {
            let (fill, label) = match masked[i][j] {
                Some(t) => {
                    // red for positive, blue for negative
                    let a = t.abs().min(1.0);
                    let fill = if t >= 0.0 {
                        format!("rgba(225,87,89,{a:.3})")
                    } else {
                        format!("rgba(78,121,167,{a:.3})")
                    };
                    (fill, format!("{t:.2}"))
                }
                None => ("#eeeeee".to_string(), String::new()),
            };
            let (x, y) = (left + cell * j as f64, top + cell * i as f64);
            svg.rect(x, y, cell - 1.0, cell - 1.0, &fill);
            if !label.is_empty() {
                svg.text(x + cell / 2.0, y + cell / 2.0 + 4.0, &label, 10.0, "middle");
            }
        }
    }
    svg.finish()
}

/// Two columns of label nodes joined by bands proportional to flow counts,
/// summed over item types.
fn flow_diagram(report: &ExperimentReport) -> Option<String> {
    let flows = report.dataset.flows.as_ref()?;
    let labels = &report.dataset.histogram.labels;
    let k = labels.len();
    let mut m = vec![vec![0u64; k]; k];
    for fm in flows.values() {
        for i in 0..k {
            for j in 0..k {
                m[i][j] += fm[i][j];
            }
        }
    }
    let total: u64 = m.iter().flatten().sum();
    let (left, right, top, height, node_w, gap) = (80.0, 420.0, 50.0, 360.0, 18.0, 8.0);
    let mut svg = Svg::new(right + 100.0, top + height + 60.0, "Label changes, phase 1 to phase 2");
    if total == 0 {
        return Some(svg.finish());
    }
    let usable = height - gap * (k as f64 - 1.0);
    let scale = usable / total as f64;
    let out_tot: Vec<u64> = (0..k).map(|i| m[i].iter().sum()).collect();
    let in_tot: Vec<u64> = (0..k).map(|j| (0..k).map(|i| m[i][j]).sum()).collect();
    let starts = |tot: &[u64]| {
        let mut y = top;
        tot.iter()
            .map(|t| {
                let s = y;
                y += *t as f64 * scale + gap;
                s
            })
            .collect::<Vec<f64>>()
    };
    let (ys_out, ys_in) = (starts(&out_tot), starts(&in_tot));
    let mut cursor_out = ys_out.clone();
    let mut cursor_in = ys_in.clone();
    for i in 0..k {
        for j in 0..k {
            let c = m[i][j];
            if c == 0 {
                continue;
            }
            let h = c as f64 * scale;
            let (y0, y1) = (cursor_out[i], cursor_in[j]);
            cursor_out[i] += h;
            cursor_in[j] += h;
            let (x0, x1) = (left + node_w, right);
            let mx = (x0 + x1) / 2.0;
            let _ = writeln!(
                svg.body,
                r#"<path d="M{x0:.2},{y0:.2} C{mx:.2},{y0:.2} {mx:.2},{y1:.2} {x1:.2},{y1:.2} L{x1:.2},{:.2} C{mx:.2},{:.2} {mx:.2},{:.2} {x0:.2},{:.2} Z" fill="{}" fill-opacity="0.45"/>"#,
                y1 + h,
                y1 + h,
                y0 + h,
                y0 + h,
                PALETTE[i % PALETTE.len()]
            );
        }
    }
    for i in 0..k {
        let (h_out, h_in) = (out_tot[i] as f64 * scale, in_tot[i] as f64 * scale);
        svg.rect(left, ys_out[i], node_w, h_out.max(1.0), PALETTE[i % PALETTE.len()]);
        svg.rect(right, ys_in[i], node_w, h_in.max(1.0), PALETTE[i % PALETTE.len()]);
        svg.text(left - 6.0, ys_out[i] + h_out / 2.0 + 4.0, &format!("{} ({})", labels[i], out_tot[i]), 11.0, "end");
        svg.text(right + node_w + 6.0, ys_in[i] + h_in / 2.0 + 4.0, &format!("{} ({})", labels[i], in_tot[i]), 11.0, "start");
    }
    Some(svg.finish())
}

/// Writes every figure of the report into `dir`.
pub fn write_figures(dir: &Path, report: &ExperimentReport) -> Result<()> {
    let s = &report.summary;
    let methods: Vec<String> = s.test_ems.keys().cloned().collect();
    let ems_svg = bar_chart(
        "Mean test EMS by method",
        &methods,
        &[("test EMS".to_string(), methods.iter().map(|m| s.test_ems[m]).collect())],
        1.0,
    );
    write_atomic(&dir.join("ems_by_method.svg"), ems_svg.as_bytes())?;

    let acc_methods: Vec<String> = s.accuracy.keys().cloned().collect();
    let acc_svg = bar_chart(
        "Gold-label accuracy",
        &acc_methods,
        &[("accuracy".to_string(), acc_methods.iter().map(|m| s.accuracy[m]).collect())],
        1.0,
    );
    write_atomic(&dir.join("accuracy.svg"), acc_svg.as_bytes())?;

    let rmse_methods: Vec<String> = s.variance_rmse.keys().cloned().collect();
    let rmse_vals: Vec<f64> = rmse_methods.iter().map(|m| s.variance_rmse[m]).collect();
    let rmse_max = rmse_vals.iter().copied().fold(0.0, f64::max);
    let rmse_svg = bar_chart("Vote variance RMSE", &rmse_methods, &[("RMSE".to_string(), rmse_vals)], rmse_max);
    write_atomic(&dir.join("variance_rmse.svg"), rmse_svg.as_bytes())?;

    let h = &report.dataset.histogram;
    let hmax = h.phase1_pct.iter().chain(&h.phase2_pct).copied().fold(0.0, f64::max);
    let hist_svg = bar_chart(
        "Label share per phase (%)",
        &h.labels,
        &[("phase 1".to_string(), h.phase1_pct.clone()), ("phase 2".to_string(), h.phase2_pct.clone())],
        hmax,
    );
    write_atomic(&dir.join("label_histogram.svg"), hist_svg.as_bytes())?;

    let traits: Vec<String> = Trait::ALL.iter().map(|t| t.code().to_string()).collect();
    let series: Vec<(String, Vec<f64>)> = report
        .weights
        .iter()
        .map(|w| {
            (
                format!("fold {}", w.fold),
                traits.iter().map(|t| w.weights.get(t).copied().unwrap_or(0.0)).collect(),
            )
        })
        .collect();
    let wmax = series.iter().flat_map(|(_, v)| v.iter().copied()).fold(0.0, f64::max);
    write_atomic(&dir.join("weights.svg"), bar_chart("Fitted persona weights", &traits, &series, wmax).as_bytes())?;

    write_atomic(&dir.join("feature_tau.svg"), tau_heatmap(report).as_bytes())?;
    if let Some(svg) = flow_diagram(report) {
        write_atomic(&dir.join("label_flows.svg"), svg.as_bytes())?;
    }
    Ok(())
}
