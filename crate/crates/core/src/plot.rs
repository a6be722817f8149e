//! Minimal SVG line charts for experiment results.

use std::fmt::Write;

use crate::experiment::{summarize, ExperimentRow};

const W: f64 = 640.0;
const H: f64 = 420.0;
const ML: f64 = 70.0;
const MR: f64 = 150.0;
const MT: f64 = 40.0;
const MB: f64 = 50.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(t);
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 || v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Renders `series` as a line chart; the y axis starts at zero.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= 0.0 {
        y1 = 1.0;
    }
    y1 *= 1.05;
    let (pw, ph) = (W - ML - MR, H - MT - MB);
    let sx = |x: f64| ML + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MT + ph - y / y1 * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        ML + pw / 2.0,
        esc(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for t in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            MT,
            MT + ph,
            MT + ph + 16.0,
            fmt_tick(t)
        );
    }
    for t in ticks(0.0, y1) {
        let y = sy(t);
        let _ = writeln!(
            s,
            r##"<line x1="{ML}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            ML + pw,
            ML - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        ML + pw / 2.0,
        H - 12.0,
        esc(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        MT + ph / 2.0,
        MT + ph / 2.0,
        esc(y_label)
    );
    for (i, se) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = se
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for &(x, y) in &se.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                sx(x),
                sy(y)
            );
        }
        let ly = MT + 14.0 + i as f64 * 18.0;
        let lx = ML + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            esc(&se.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// One chart per (experiment, form) of mean total runtime per planner;
/// the clause sweep also plots execution time alone.
pub fn experiment_charts(rows: &[ExperimentRow]) -> Vec<(String, String)> {
    let mut groups: Vec<((String, String), Vec<ExperimentRow>)> = Vec::new();
    for r in rows {
        let key = (r.experiment.clone(), r.form.to_string());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r.clone()),
            None => groups.push((key, vec![r.clone()])),
        }
    }
    let mut out = Vec::new();
    for ((exp, form), rows) in groups {
        let summary = summarize(&rows);
        let mut planners: Vec<String> = Vec::new();
        for c in &summary {
            if !planners.contains(&c.planner) {
                planners.push(c.planner.clone());
            }
        }
        let mut series = Vec::new();
        for p in &planners {
            let cells: Vec<_> = summary.iter().filter(|c| &c.planner == p).collect();
            let total = cells.iter().map(|c| (c.value, c.total_ms)).collect();
            if exp == "num_clauses" {
                series.push(Series {
                    name: format!("{p} (total)"),
                    points: total,
                });
                series.push(Series {
                    name: format!("{p} (exec)"),
                    points: cells.iter().map(|c| (c.value, c.exec_ms)).collect(),
                });
            } else {
                series.push(Series {
                    name: p.clone(),
                    points: total,
                });
            }
        }
        let title = format!("{exp} ({})", form.to_uppercase());
        let svg = line_chart(&title, &exp, "runtime (ms)", &series);
        out.push((format!("{exp}_{form}.svg"), svg));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Form;

    fn row(exp: &str, planner: &str, value: f64, total: f64) -> ExperimentRow {
        ExperimentRow {
            experiment: exp.into(),
            form: Form::Dnf,
            param: exp.into(),
            value,
            planner: planner.into(),
            run: 0,
            plan_ms: 0.0,
            exec_ms: total,
            total_ms: total,
            rows_out: 1,
            atom_evals: 0,
            hash_probes: 0,
        }
    }

    #[test]
    fn charts_per_experiment() {
        let rows = vec![
            row("selectivity", "bdisj", 0.1, 10.0),
            row("selectivity", "tcombined", 0.1, 5.0),
            row("selectivity", "bdisj", 0.9, 50.0),
            row("num_clauses", "bdisj", 2.0, 3.0),
        ];
        let charts = experiment_charts(&rows);
        assert_eq!(charts.len(), 2);
        assert_eq!(charts[0].0, "selectivity_dnf.svg");
        let svg = &charts[0].1;
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(charts[1].1.contains("bdisj (exec)"));
    }

    #[test]
    fn degenerate_input_renders() {
        let svg = line_chart("t", "x", "y", &[]);
        assert!(svg.ends_with("</svg>\n"));
        let one = line_chart(
            "a<b",
            "x",
            "y",
            &[Series {
                name: "s".into(),
                points: vec![(1.0, 0.0)],
            }],
        );
        assert!(one.contains("a&lt;b"));
    }

    #[test]
    fn tick_steps_are_round() {
        let t = ticks(0.0, 1.0);
        assert_eq!(t.len(), 6);
        assert!((t[1] - 0.2).abs() < 1e-12 && (t[5] - 1.0).abs() < 1e-12);
        assert_eq!(ticks(0.0, 50000.0).len(), 6);
    }
}
