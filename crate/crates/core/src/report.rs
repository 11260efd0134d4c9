//! Figures over run directories: SVG line charts (mean curve with a 1σ band
//! per series) and the CSV tables behind them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::checkpoint::load_expert;
use crate::envs::TaskId;
use crate::error::{LabError, Result};
use crate::metrics::{aggregate_column, AggregateSeries, Column, MetricLog};
use crate::orchestrator::ExperimentConfig;
use crate::surgery::{last_layer_weight_histogram, LateralExpert, WeightHistogram};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Clone, Debug, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub data: AggregateSeries,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        let pad = if lo.abs() > 1e-12 { lo.abs() * 0.5 } else { 1.0 };
        (lo - pad, hi + pad)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}

/// Line chart with one mean polyline and one shaded ±σ polygon per series.
/// The output depends only on the inputs.
pub fn render_svg(spec: &PlotSpec, series: &[Series]) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.data.is_empty()) {
        return Err(LabError::Empty("nothing to plot".into()));
    }
    let points = || {
        series.iter().flat_map(|s| {
            s.data
                .iterations
                .iter()
                .zip(s.data.mean.iter().zip(&s.data.std))
                .filter(|(_, (m, _))| m.is_finite())
        })
    };
    let x_lo = points().map(|(&x, _)| x as f64).fold(f64::INFINITY, f64::min);
    let x_hi = points().map(|(&x, _)| x as f64).fold(f64::NEG_INFINITY, f64::max);
    let y_lo = points().map(|(_, (m, s))| m - s).fold(f64::INFINITY, f64::min);
    let y_hi = points().map(|(_, (m, s))| m + s).fold(f64::NEG_INFINITY, f64::max);
    let (x_lo, x_hi) = if x_hi > x_lo { (x_lo, x_hi) } else { (x_lo - 1.0, x_lo + 1.0) };
    let (y_lo, y_hi) = padded_range(y_lo, y_hi);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(&spec.title)
    );
    let _ = writeln!(
        svg,
        r#"<g stroke="black" stroke-width="1"><line x1="{LEFT}" y1="{:.1}" x2="{:.1}" y2="{:.1}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.1}"/></g>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h,
        TOP + plot_h
    );
    for i in 0..=TICKS {
        let fx = x_lo + (x_hi - x_lo) * i as f64 / TICKS as f64;
        let fy = y_lo + (y_hi - y_lo) * i as f64 / TICKS as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.1}</text>"#,
            sx(fx),
            TOP + plot_h + 18.0,
            fx
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.2}</text>"#,
            LEFT - 6.0,
            sy(fy) + 4.0,
            fy
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 16.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(&spec.y_label)
    );

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64, f64)> = s
            .data
            .iterations
            .iter()
            .zip(s.data.mean.iter().zip(&s.data.std))
            .filter(|(_, (m, _))| m.is_finite())
            .map(|(&x, (&m, &sd))| (x as f64, m, sd))
            .collect();
        if pts.iter().any(|p| p.2 > 0.0) {
            let upper = pts.iter().map(|&(x, m, sd)| format!("{:.2},{:.2}", sx(x), sy(m + sd)));
            let lower = pts.iter().rev().map(|&(x, m, sd)| format!("{:.2},{:.2}", sx(x), sy(m - sd)));
            let band: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                band.join(" ")
            );
        }
        let line: Vec<String> = pts.iter().map(|&(x, m, _)| format!("{:.2},{:.2}", sx(x), sy(m))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<g class="legend"><line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text></g>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Bar chart of the two provenance groups of a weight histogram.
pub fn render_histogram_svg(title: &str, hist: &WeightHistogram) -> Result<String> {
    let bins = hist.count_amn.len();
    if bins == 0 {
        return Err(LabError::Empty("histogram without bins".into()));
    }
    let total = |c: &[usize]| c.iter().sum::<usize>().max(1) as f64;
    let (ta, te) = (total(&hist.count_amn), total(&hist.count_expert));
    let peak = hist
        .count_amn
        .iter()
        .map(|&c| c as f64 / ta)
        .chain(hist.count_expert.iter().map(|&c| c as f64 / te))
        .fold(0.0, f64::max)
        .max(1e-12);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let bar_w = plot_w / bins as f64 / 2.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );
    for (group, (counts, t, color)) in [(&hist.count_amn, ta, PALETTE[1]), (&hist.count_expert, te, PALETTE[0])]
        .into_iter()
        .enumerate()
    {
        for (i, &c) in counts.iter().enumerate() {
            let h = c as f64 / t / peak * plot_h;
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{bar_w:.2}" height="{h:.2}" fill="{color}"/>"#,
                LEFT + (2 * i + group) as f64 * bar_w,
                TOP + plot_h - h
            );
        }
    }
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    );
    for i in [0, bins] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.3}</text>"#,
            LEFT + i as f64 * 2.0 * bar_w,
            TOP + plot_h + 18.0,
            hist.edges[i]
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">|w| of output-layer weights (fraction of group per bin)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 16.0
    );
    for (k, (label, color, median)) in [
        ("amn-sourced", PALETTE[1], hist.median_amn),
        ("expert-sourced", PALETTE[0], hist.median_expert),
    ]
    .into_iter()
    .enumerate()
    {
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<g class="legend"><rect x="{lx:.1}" y="{:.1}" width="14" height="10" fill="{color}"/><text x="{:.1}" y="{:.1}">{label} (median {median:.4})</text></g>"#,
            ly - 5.0,
            lx + 20.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Named figure presets over run directories.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    /// Percent-of-expert of the student per consolidated task.
    Fig1,
    /// Percent-of-expert across runs that differ in schedule.
    Fig2,
    /// Transferred versus randomly initialized phase-2 experts.
    Fig3,
    /// Phase-2 returns across runs that differ in source tasks or budget.
    Fig5,
    /// Phase-2 returns across runs that transfer different layer counts.
    Fig7,
    /// Output-layer weight magnitudes of lateral phase-2 experts.
    Hist,
}

impl Figure {
    pub const ALL: [Figure; 6] = [Figure::Fig1, Figure::Fig2, Figure::Fig3, Figure::Fig5, Figure::Fig7, Figure::Hist];

    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig5 => "fig5",
            Figure::Fig7 => "fig7",
            Figure::Hist => "hist",
        }
    }
}

impl FromStr for Figure {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| LabError::invalid(format!("unknown figure `{s}`")))
    }
}

/// One experiment directory (`<root>/<config-hash>`) and its seed runs.
#[derive(Clone, Debug)]
pub struct RunSet {
    pub dir: PathBuf,
    pub label: String,
    pub seeds: Vec<PathBuf>,
}

fn numeric_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| LabError::io(dir, e))? {
        let entry = entry.map_err(|e| LabError::io(dir, e))?;
        if entry.path().is_dir() {
            if let Some(n) = entry.file_name().to_str().and_then(|s| s.parse::<u64>().ok()) {
                found.push((n, entry.path()));
            }
        }
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

impl RunSet {
    pub fn open(dir: &Path) -> Result<Self> {
        let seeds = numeric_subdirs(dir)?;
        if seeds.is_empty() {
            return Err(LabError::Empty(format!("no seed directories under {}", dir.display())));
        }
        let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("run").to_string();
        let label = match ExperimentConfig::load(&dir.join("config.toml")) {
            Ok(c) => {
                let sources: Vec<&str> = c.passive_set().iter().map(|t| t.as_str()).collect();
                format!("{} {} {}", c.mechanism, c.schedule, sources.join("+"))
            }
            Err(_) => name,
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            label,
            seeds,
        })
    }

    /// Tasks with a metrics file in `phase` of the first seed.
    pub fn tasks(&self, phase: &str) -> Vec<TaskId> {
        TaskId::ALL
            .into_iter()
            .filter(|t| self.seeds[0].join(phase).join(t.as_str()).join("metrics.csv").exists())
            .collect()
    }

    pub fn logs(&self, phase: &str, task: TaskId) -> Result<Vec<MetricLog>> {
        self.seeds
            .iter()
            .map(|s| MetricLog::load_csv(&s.join(phase).join(task.as_str()).join("metrics.csv")))
            .collect()
    }
}

fn write_series_csv(path: &Path, series: &[Series]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["series", "iteration", "mean", "std", "seeds"])?;
    for s in series {
        for i in 0..s.data.len() {
            w.write_record([
                s.label.clone(),
                s.data.iterations[i].to_string(),
                s.data.mean[i].to_string(),
                s.data.std[i].to_string(),
                s.data.seeds.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

fn phase_series(runs: &[RunSet], phase: &str, column: Column, prefix: impl Fn(&RunSet) -> String) -> Result<Vec<Series>> {
    let mut out = Vec::new();
    for run in runs {
        for task in run.tasks(phase) {
            out.push(Series {
                label: format!("{}{task}", prefix(run)),
                data: aggregate_column(&run.logs(phase, task)?, column)?,
            });
        }
    }
    Ok(out)
}

fn histograms(runs: &[RunSet], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for run in runs {
        for seed in &run.seeds {
            let phase = seed.join("phase2");
            for task in TaskId::ALL {
                let ck_dir = phase.join(task.as_str()).join("checkpoint");
                if !ck_dir.exists() {
                    continue;
                }
                let ck = load_expert(&ck_dir, None)?.value;
                let Some(source) = ck.lateral_source.clone() else {
                    continue;
                };
                let lateral = LateralExpert {
                    expert: ck.params,
                    amn: std::sync::Arc::new(source),
                };
                let hist = last_layer_weight_histogram(&lateral.expert, &lateral.column_provenance(), 20)?;
                let stem = format!(
                    "hist-{}-{}-{task}",
                    run.dir.file_name().and_then(|n| n.to_str()).unwrap_or("run"),
                    seed.file_name().and_then(|n| n.to_str()).unwrap_or("0")
                );
                let csv_path = out_dir.join(format!("{stem}.csv"));
                let file = fs::File::create(&csv_path).map_err(|e| LabError::io(&csv_path, e))?;
                hist.write_csv(file)?;
                let svg_path = out_dir.join(format!("{stem}.svg"));
                let svg = render_histogram_svg(&format!("{task}: lateral output-layer weights"), &hist)?;
                fs::write(&svg_path, svg).map_err(|e| LabError::io(&svg_path, e))?;
                written.push(csv_path);
                written.push(svg_path);
            }
        }
    }
    if written.is_empty() {
        return Err(LabError::Empty("no lateral phase-2 checkpoints found".into()));
    }
    Ok(written)
}

/// Builds one figure preset from experiment directories and writes its SVG
/// and CSV into `out_dir`. Returns the written paths.
pub fn build_figure(figure: Figure, run_dirs: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if run_dirs.is_empty() {
        return Err(LabError::Empty("no run directories".into()));
    }
    let runs = run_dirs.iter().map(|d| RunSet::open(d)).collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out_dir).map_err(|e| LabError::io(out_dir, e))?;
    if figure == Figure::Hist {
        return histograms(&runs, out_dir);
    }
    let multi = runs.len() > 1;
    let label = |r: &RunSet| if multi { format!("{}: ", r.label) } else { String::new() };
    let (spec, series) = match figure {
        Figure::Fig1 | Figure::Fig2 => (
            PlotSpec {
                title: if figure == Figure::Fig1 {
                    "Student performance during consolidation".into()
                } else {
                    "Consolidation under different task schedules".into()
                },
                x_label: "iteration".into(),
                y_label: "percent of expert".into(),
            },
            phase_series(&runs, "passive", Column::PercentOfExpert, label)?,
        ),
        Figure::Fig3 => {
            let mut series = phase_series(&runs, "phase2", Column::MeanReturn, |r| format!("{}transfer ", label(r)))?;
            series.extend(phase_series(&runs, "baseline", Column::MeanReturn, |r| format!("{}baseline ", label(r)))?);
            (
                PlotSpec {
                    title: "Transferred versus random initialization".into(),
                    x_label: "iteration".into(),
                    y_label: "mean episode return".into(),
                },
                series,
            )
        }
        Figure::Fig5 | Figure::Fig7 => {
            let mut series = phase_series(&runs, "phase2", Column::MeanReturn, label)?;
            series.extend(phase_series(&runs[..1], "baseline", Column::MeanReturn, |_| "baseline ".to_string())?);
            (
                PlotSpec {
                    title: if figure == Figure::Fig5 {
                        "Transfer from different source sets".into()
                    } else {
                        "Transfer of layer subsets".into()
                    },
                    x_label: "iteration".into(),
                    y_label: "mean episode return".into(),
                },
                series,
            )
        }
        Figure::Hist => unreachable!("handled above"),
    };
    let svg_path = out_dir.join(format!("{}.svg", figure.name()));
    let csv_path = out_dir.join(format!("{}.csv", figure.name()));
    let svg = render_svg(&spec, &series)?;
    fs::write(&svg_path, svg).map_err(|e| LabError::io(&svg_path, e))?;
    write_series_csv(&csv_path, &series)?;
    Ok(vec![svg_path, csv_path])
}
