//! SVG figures rebuilt from a run's CSV outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;

use crate::manifest::{CellManifest, CellStatus, RunManifest};
use crate::sweep::{CORRELATIONS_FILE, TIMESERIES_FILE};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const DASHES: [&str; 5] = ["", "6,3", "2,3", "8,3,2,3", "1,5"];
const FIGURE_WARNING_PREFIXES: [&str; 2] = ["fig", "no results"];

#[derive(Debug, Clone)]
struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    color: usize,
    dash: usize,
    markers: bool,
}

#[derive(Debug, Clone)]
struct Panel {
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<Series>,
}

/// Per-timestep means across realizations of one cell.
#[derive(Debug, Default, Clone)]
struct CellSeries {
    brier: Vec<f64>,
    gini: Vec<f64>,
    mean_popularity: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct CorrRow {
    ground_truth: Option<f64>,
    inter_realization: Option<f64>,
}

/// Render fig2a, fig2b, fig3, fig4a, fig4b and fig5 next to the manifest.
/// Figures whose data is missing are skipped and a warning is added to
/// `manifest.warnings`; written file names are recorded in `manifest.figures`.
pub fn emit_figures(manifest: &mut RunManifest, dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    manifest.figures.clear();
    manifest
        .warnings
        .retain(|w| !FIGURE_WARNING_PREFIXES.iter().any(|p| w.starts_with(p)));
    let cells: Vec<&CellManifest> = manifest
        .cells
        .iter()
        .filter(|c| c.status == CellStatus::Ok)
        .collect();
    if cells.iter().all(|c| c.realizations.is_empty()) {
        manifest
            .warnings
            .push("no results: no figures written".into());
        return Ok(Vec::new());
    }
    let series = read_timeseries(&dir.join(TIMESERIES_FILE))?;
    let corr = read_correlations(&dir.join(CORRELATIONS_FILE))?;

    let figures: Vec<(&str, Result<Vec<Panel>, String>)> = vec![
        (
            "fig2a",
            beta_panel(
                &cells,
                &corr,
                |c| c.ground_truth,
                "Correlation with ground-truth popularity",
            ),
        ),
        (
            "fig2b",
            beta_panel(
                &cells,
                &corr,
                |c| c.inter_realization,
                "Popularity correlation between realizations",
            ),
        ),
        (
            "fig3",
            time_panel(&cells, &series, |s| &s.brier, "Brier score", "Brier score"),
        ),
        (
            "fig4a",
            time_panel(
                &cells,
                &series,
                |s| &s.gini,
                "Item popularity Gini coefficient",
                "Gini",
            ),
        ),
        (
            "fig4b",
            time_panel(
                &cells,
                &series,
                |s| &s.mean_popularity,
                "Mean item popularity",
                "Mean popularity",
            ),
        ),
        (
            "fig5",
            random_beta_panels(&cells, &series, &mut manifest.warnings),
        ),
    ];

    let mut written = Vec::new();
    for (name, panels) in figures {
        match panels {
            Ok(panels) => {
                let path = dir.join(format!("{name}.svg"));
                std::fs::write(&path, render(&panels))
                    .with_context(|| format!("writing {}", path.display()))?;
                manifest.figures.push(format!("{name}.svg"));
                written.push(path);
            }
            Err(why) => manifest.warnings.push(format!("{name} skipped: {why}")),
        }
    }
    Ok(written)
}

fn parse_opt(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn read_timeseries(path: &Path) -> anyhow::Result<BTreeMap<String, CellSeries>> {
    // cell -> timestep -> (sums, counts) for brier, gini, mean popularity
    let mut acc: BTreeMap<String, BTreeMap<usize, [(f64, usize); 3]>> = BTreeMap::new();
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    for rec in rdr.records() {
        let rec = rec?;
        let t: usize = rec[2].parse().context("timestep")?;
        let slot = acc
            .entry(rec[0].to_string())
            .or_default()
            .entry(t)
            .or_default();
        for (k, col) in [3, 4, 5].into_iter().enumerate() {
            if let Some(v) = parse_opt(&rec[col]) {
                slot[k].0 += v;
                slot[k].1 += 1;
            }
        }
    }
    let mean = |(s, n): (f64, usize)| if n == 0 { f64::NAN } else { s / n as f64 };
    Ok(acc
        .into_iter()
        .map(|(cell, steps)| {
            let mut cs = CellSeries::default();
            for (_, slot) in steps {
                cs.brier.push(mean(slot[0]));
                cs.gini.push(mean(slot[1]));
                cs.mean_popularity.push(mean(slot[2]));
            }
            (cell, cs)
        })
        .collect())
}

fn read_correlations(path: &Path) -> anyhow::Result<BTreeMap<String, CorrRow>> {
    let mut out = BTreeMap::new();
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    for rec in rdr.records() {
        let rec = rec?;
        out.insert(
            rec[0].to_string(),
            CorrRow {
                ground_truth: parse_opt(&rec[2]),
                inter_realization: parse_opt(&rec[4]),
            },
        );
    }
    Ok(out)
}

fn strategy_label(c: &CellManifest) -> String {
    if c.strategy == "epsilon_greedy" {
        format!("epsilon_greedy({})", c.epsilon)
    } else {
        c.strategy.clone()
    }
}

fn strategy_color(c: &CellManifest) -> usize {
    match c.strategy.as_str() {
        "greedy" => 1,
        "epsilon_greedy" => 0,
        "random" => 2,
        _ => 3,
    }
}

fn beta_panel(
    cells: &[&CellManifest],
    corr: &BTreeMap<String, CorrRow>,
    pick: fn(&CorrRow) -> Option<f64>,
    y_label: &str,
) -> Result<Vec<Panel>, String> {
    let mut by_strategy: BTreeMap<String, (usize, Vec<(f64, f64)>)> = BTreeMap::new();
    for c in cells {
        let (Ok(beta), Some(v)) = (
            c.beta_cond.parse::<f64>(),
            corr.get(&c.cell_id).and_then(pick),
        ) else {
            continue;
        };
        let entry = by_strategy
            .entry(strategy_label(c))
            .or_insert((strategy_color(c), Vec::new()));
        entry.1.push((beta, v));
    }
    if by_strategy.is_empty() {
        return Err("no constant-beta cells with a defined correlation".into());
    }
    let series = by_strategy
        .into_iter()
        .enumerate()
        .map(|(i, (label, (color, mut points)))| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series {
                label,
                points,
                color: color + 4 * (i / 4),
                dash: 0,
                markers: true,
            }
        })
        .collect();
    Ok(vec![Panel {
        title: y_label.to_string(),
        x_label: "human bias parameter, β".into(),
        y_label: "correlation".into(),
        series,
    }])
}

fn time_series(values: &[f64]) -> Vec<(f64, f64)> {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .map(|(i, &v)| ((i + 1) as f64, v))
        .collect()
}

fn time_panel(
    cells: &[&CellManifest],
    series: &BTreeMap<String, CellSeries>,
    pick: fn(&CellSeries) -> &Vec<f64>,
    title: &str,
    y_label: &str,
) -> Result<Vec<Panel>, String> {
    let betas: Vec<String> = {
        let mut b: Vec<String> = cells
            .iter()
            .filter(|c| c.beta_cond.parse::<f64>().is_ok())
            .map(|c| c.beta_cond.clone())
            .collect();
        b.dedup();
        b
    };
    let out: Vec<Series> = cells
        .iter()
        .filter(|c| c.beta_cond.parse::<f64>().is_ok())
        .filter_map(|c| {
            let points = time_series(pick(series.get(&c.cell_id)?));
            (!points.is_empty()).then(|| Series {
                label: format!("{}, β={}", strategy_label(c), c.beta_cond),
                points,
                color: strategy_color(c),
                dash: betas.iter().position(|b| *b == c.beta_cond).unwrap_or(0) % DASHES.len(),
                markers: false,
            })
        })
        .collect();
    if out.is_empty() {
        return Err("no constant-beta time series".into());
    }
    Ok(vec![Panel {
        title: title.to_string(),
        x_label: "timestep".into(),
        y_label: y_label.to_string(),
        series: out,
    }])
}

fn random_beta_panels(
    cells: &[&CellManifest],
    series: &BTreeMap<String, CellSeries>,
    warnings: &mut Vec<String>,
) -> Result<Vec<Panel>, String> {
    let random: Vec<(&CellManifest, &CellSeries)> = cells
        .iter()
        .filter(|c| c.beta_cond == "uniform_random")
        .filter_map(|c| Some((*c, series.get(&c.cell_id)?)))
        .collect();
    if random.is_empty() {
        return Err("no uniform_random beta cells".into());
    }
    let metric_panel = |title: &str, y: &str, pick: fn(&CellSeries) -> &Vec<f64>| Panel {
        title: title.to_string(),
        x_label: "timestep".into(),
        y_label: y.to_string(),
        series: random
            .iter()
            .map(|(c, s)| Series {
                label: strategy_label(c),
                points: time_series(pick(s)),
                color: strategy_color(c),
                dash: 0,
                markers: false,
            })
            .collect(),
    };
    let mut panels = vec![
        metric_panel("(a) Brier score", "Brier score", |s| &s.brier),
        metric_panel("(b) Gini coefficient", "Gini", |s| &s.gini),
        metric_panel("(c) Mean item popularity", "Mean popularity", |s| {
            &s.mean_popularity
        }),
    ];
    let greedy = random.iter().find(|(c, _)| c.strategy == "greedy");
    let eps = random.iter().find(|(c, _)| c.strategy == "epsilon_greedy");
    match (greedy, eps) {
        (Some((_, g)), Some((ec, e))) => {
            let diff: Vec<f64> = g
                .mean_popularity
                .iter()
                .zip(&e.mean_popularity)
                .map(|(a, b)| a - b)
                .collect();
            panels.push(Panel {
                title: "(c, inset) greedy − ε-greedy".into(),
                x_label: "timestep".into(),
                y_label: "popularity difference".into(),
                series: vec![Series {
                    label: format!("greedy − {}", strategy_label(ec)),
                    points: time_series(&diff),
                    color: 4,
                    dash: 0,
                    markers: false,
                }],
            });
        }
        _ => warnings.push(
            "fig5: inset needs greedy and epsilon_greedy cells with uniform_random beta".into(),
        ),
    }
    Ok(panels)
}

/// Round `span / target` to 1, 2 or 5 times a power of ten.
fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 0.0 { lo.abs() * 0.1 } else { 1.0 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{v:.decimals$}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

const PANEL_W: f64 = 460.0;
const PANEL_H: f64 = 340.0;

fn render(panels: &[Panel]) -> String {
    let width = PANEL_W * panels.len() as f64;
    let legend_rows = panels.iter().map(|p| p.series.len()).max().unwrap_or(0);
    let height = PANEL_H + 16.0 * legend_rows as f64 + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut s, p, PANEL_W * i as f64);
    }
    s.push_str("</svg>\n");
    s
}

fn render_panel(s: &mut String, p: &Panel, x0: f64) {
    let (left, right, top, bottom) = (x0 + 64.0, x0 + PANEL_W - 16.0, 36.0, PANEL_H - 48.0);
    let (xlo, xhi) = bounds(p.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (ylo, yhi) = bounds(p.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let ystep = nice_step(yhi - ylo, 5);
    let (ylo, yhi) = ((ylo / ystep).floor() * ystep, (yhi / ystep).ceil() * ystep);
    let xstep = nice_step(xhi - xlo, 5);
    let sx = |x: f64| left + (x - xlo) / (xhi - xlo) * (right - left);
    let sy = |y: f64| bottom - (y - ylo) / (yhi - ylo) * (bottom - top);

    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        (left + right) / 2.0,
        escape(&p.title)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        right - left,
        bottom - top
    );

    let mut y = ylo;
    while y <= yhi + ystep * 1e-6 {
        let py = sy(y);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{py:.2}" x2="{right}" y2="{py:.2}" stroke="#ddd"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 6.0,
            py + 4.0,
            fmt_tick(y, ystep)
        );
        y += ystep;
    }
    let mut x = (xlo / xstep).ceil() * xstep;
    while x <= xhi + xstep * 1e-6 {
        let px = sx(x);
        let _ = writeln!(
            s,
            r##"<line x1="{px:.2}" y1="{bottom}" x2="{px:.2}" y2="{}" stroke="#444"/>"##,
            bottom + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
            bottom + 18.0,
            fmt_tick(x, xstep)
        );
        x += xstep;
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        bottom + 36.0,
        escape(&p.x_label)
    );
    let (ly, lx) = ((top + bottom) / 2.0, x0 + 16.0);
    let _ = writeln!(
        s,
        r#"<text x="{lx}" y="{ly}" text-anchor="middle" transform="rotate(-90 {lx} {ly})">{}</text>"#,
        escape(&p.y_label)
    );

    for ser in &p.series {
        let color = PALETTE[ser.color % PALETTE.len()];
        let dash = DASHES[ser.dash % DASHES.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(r#" stroke-dasharray="{dash}""#)
        };
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash_attr} points="{}"/>"#,
            pts.join(" ")
        );
        if ser.markers {
            for &(x, y) in &ser.points {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                    sx(x),
                    sy(y)
                );
            }
        }
    }
    for (i, ser) in p.series.iter().enumerate() {
        let y = PANEL_H + 16.0 * i as f64;
        let color = PALETTE[ser.color % PALETTE.len()];
        let dash = DASHES[ser.dash % DASHES.len()];
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(r#" stroke-dasharray="{dash}""#)
        };
        let _ = writeln!(
            s,
            r#"<line x1="{left}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"{dash_attr}/>"#,
            left + 24.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{}</text>"#,
            left + 30.0,
            y + 4.0,
            escape(&ser.label)
        );
    }
}
