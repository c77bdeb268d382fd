//! Run artifacts: CSV tables and static SVG plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::design::table_to_csv;
use crate::error::{Error, Result};
use crate::harness::metrics::{dwells, half_period_envelope, metrics_csv};
use crate::harness::scenario::ScenarioRun;
use crate::interceptor::ControllerEvent;
use crate::sim::{ControllerMode, Trace};

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 360.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 130.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 45.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Write every artifact of a run into `dir`; returns the written paths.
pub fn emit_report(run: &ScenarioRun, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let trace = &run.output.trace;
    let files = [
        ("trace.csv", trace.to_csv_string()),
        ("metrics.csv", metrics_csv(&run.metrics)),
        ("schedule.csv", run.schedule_csv.clone()),
        ("table.csv", table_to_csv(&run.table)),
        ("events.csv", events_csv(&run.events)),
        ("envelope.svg", envelope_svg(trace)),
        ("mode.svg", mode_svg(trace)),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        written.push(p);
    }
    Ok(written)
}

pub fn events_csv(events: &[ControllerEvent]) -> String {
    let mut s = String::from("t_s,event,freq_hz,detail\n");
    for e in events {
        let _ = match *e {
            ControllerEvent::Engaged {
                t,
                freq,
                entry_freq,
                origin,
            } => writeln!(s, "{t:e},engaged,{freq:e},{origin}@{entry_freq:e}"),
            ControllerEvent::Refined { t, freq } => writeln!(s, "{t:e},refined,{freq:e},"),
            ControllerEvent::Restart { t } => writeln!(s, "{t:e},restart,,"),
            ControllerEvent::Unreachable { t, freq } => writeln!(s, "{t:e},unreachable,{freq:e},"),
            ControllerEvent::Trimmed { t, phase_deg, t_on } => {
                writeln!(s, "{t:e},trimmed,,phase={phase_deg:.3};t_on={t_on:e}")
            }
        };
    }
    s
}

/// Half-period current envelopes of every receiver over the whole run.
pub fn envelope_svg(trace: &Trace) -> String {
    let spans = dwells(trace);
    let series: Vec<(String, Vec<(f64, f64)>)> = trace
        .receivers
        .iter()
        .map(|r| {
            let pts = spans
                .iter()
                .flat_map(|&(t0, t1, f)| half_period_envelope(&trace.t, &r.i_r, t0, t1, f))
                .collect();
            (r.name.clone(), pts)
        })
        .collect();
    line_plot("Receiver current envelope", "time (ms)", "|i_r| (A)", &series, run_span(trace), false)
}

/// Attack controller mode over time.
pub fn mode_svg(trace: &Trace) -> String {
    let level = |m: Option<ControllerMode>| match m {
        None => 0.0,
        Some(ControllerMode::Sense) => 1.0,
        Some(ControllerMode::Estimate) => 2.0,
        Some(ControllerMode::Engage) => 3.0,
    };
    let mut pts = Vec::new();
    if let Some(c) = &trace.controller {
        let mut prev = None;
        for (k, &m) in c.mode.iter().enumerate() {
            let y = level(m);
            if prev != Some(y) {
                if let Some(p) = prev {
                    pts.push((trace.t[k], p));
                }
                pts.push((trace.t[k], y));
                prev = Some(y);
            }
        }
        if let (Some(p), Some(&t)) = (prev, trace.t.last()) {
            pts.push((t, p));
        }
    }
    line_plot(
        "Controller mode (1 SENSE, 2 ESTIMATE, 3 ENGAGE)",
        "time (ms)",
        "mode",
        &[("mode".to_string(), pts)],
        run_span(trace),
        true,
    )
}

fn run_span(trace: &Trace) -> (f64, f64) {
    (trace.t.first().copied().unwrap_or(0.0), trace.t.last().copied().unwrap_or(0.0))
}

fn line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
    x_range: (f64, f64),
    integer_y: bool,
) -> String {
    let (x0, mut x1) = x_range;
    if x1 <= x0 {
        x1 = x0 + 1e-3;
    }
    let y_max = series
        .iter()
        .flat_map(|(_, p)| p.iter().map(|q| q.1))
        .fold(0.0f64, f64::max);
    let y1 = if integer_y { 3.5 } else { nice_ceiling(y_max) };
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_T + ph - y / y1 * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{title}</text>"#, WIDTH / 2.0);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let x = x0 + (x1 - x0) * i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.3}</text>"#,
            sx(x),
            MARGIN_T + ph + 16.0,
            x * 1e3
        );
    }
    let y_ticks: Vec<f64> = if integer_y {
        vec![0.0, 1.0, 2.0, 3.0]
    } else {
        (0..=4).map(|i| y1 * i as f64 / 4.0).collect()
    };
    for y in y_ticks {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_L - 6.0,
            sy(y) + 4.0,
            trim_number(y)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN_L}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="#dddddd"/>"##,
            sy(y),
            MARGIN_L + pw
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0:.2}" text-anchor="middle" transform="rotate(-90 16 {0:.2})">{y_label}</text>"#,
        MARGIN_T + ph / 2.0
    );
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut d = String::new();
        for (x, y) in pts {
            let _ = write!(d, "{:.2},{:.2} ", sx(*x), sy(*y));
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            d.trim_end()
        );
        let ly = MARGIN_T + 14.0 + 16.0 * k as f64;
        let lx = MARGIN_L + pw + 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 18.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{name}</text>"#, lx + 24.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

fn nice_ceiling(v: f64) -> f64 {
    if !(v > 0.0) {
        return 1.0;
    }
    let p = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * p)
        .find(|&c| c >= v)
        .unwrap_or(10.0 * p)
}

fn trim_number(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}
