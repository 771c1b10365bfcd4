//! SVG figures: spectrogram comparison panels and the day timeline.
//!
//! Output depends only on the inputs: coordinates are printed with fixed
//! precision and elements are emitted in a fixed order, so identical input
//! gives identical bytes.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::classify::{format_time, DetectionTimeline};
use crate::dsp::ThirdOctaveSpectrogram;
use crate::error::Result;
use crate::mel::MelSpectrogram;
use crate::report::{BadgeEvent, OccupancyTimeline};

/// Sixteen steps from dark blue through green to yellow.
const PALETTE: [&str; 16] = [
    "#0d0887", "#2a0593", "#41049d", "#5601a4", "#6a00a8", "#7e03a8", "#8f0da4", "#a11b9b",
    "#b12a90", "#bf3984", "#cc4778", "#d8576b", "#e3685f", "#ed7953", "#f58c46", "#fca636",
];
const CURVE_COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// A `[rows x cols]` grid of values with row 0 at the lowest frequency.
struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

fn tob_grid(tob: &ThirdOctaveSpectrogram, floor: f64) -> Grid {
    let rows = tob.spec.n_bands();
    let cols = tob.len();
    let mut data = vec![0.0; rows * cols];
    for (c, f) in tob.frames.iter().enumerate() {
        for (r, &p) in f.band_power.iter().enumerate() {
            data[r * cols + c] = if p > 0.0 { p.log10().max(floor) } else { floor };
        }
    }
    Grid { rows, cols, data }
}

/// Mel grid averaged down to at most `max_cols` columns.
fn mel_grid(mel: &MelSpectrogram, max_cols: usize) -> Grid {
    let rows = mel.spec.n_mels;
    let step = mel.n_frames.div_ceil(max_cols.max(1)).max(1);
    let cols = mel.n_frames.div_ceil(step);
    let mut data = vec![0.0; rows * cols];
    for c in 0..cols {
        let frames = c * step..((c + 1) * step).min(mel.n_frames);
        let n = frames.len() as f64;
        for t in frames {
            for (r, &v) in mel.frame(t).iter().enumerate() {
                data[r * cols + c] += v / n;
            }
        }
    }
    Grid { rows, cols, data }
}

fn color_index(v: f64, lo: f64, hi: f64) -> usize {
    if hi <= lo {
        return 0;
    }
    let x = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    ((x * PALETTE.len() as f64) as usize).min(PALETTE.len() - 1)
}

/// Draws a grid as runs of equal-color cells, one `<rect>` per run.
fn draw_grid(svg: &mut String, g: &Grid, x0: f64, y0: f64, w: f64, h: f64) {
    let (lo, hi) = g
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let cw = w / g.cols.max(1) as f64;
    let ch = h / g.rows.max(1) as f64;
    for r in 0..g.rows {
        let y = y0 + h - (r + 1) as f64 * ch;
        let mut c = 0;
        while c < g.cols {
            let idx = color_index(g.at(r, c), lo, hi);
            let mut end = c + 1;
            while end < g.cols && color_index(g.at(r, end), lo, hi) == idx {
                end += 1;
            }
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                x0 + c as f64 * cw,
                y,
                (end - c) as f64 * cw,
                ch,
                PALETTE[idx]
            );
            c = end;
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Three stacked panels for one clip: third-octave input, transcoded mel,
/// and mel computed from the waveform.
pub fn spectrogram_panels(
    tob: &ThirdOctaveSpectrogram,
    transcoded: &MelSpectrogram,
    truth: &MelSpectrogram,
) -> String {
    let (width, panel_h, label_h, gap) = (800.0, 160.0, 20.0, 10.0);
    let x0 = 10.0;
    let plot_w = width - 2.0 * x0;
    let floor = transcoded.spec.log_floor;
    let panels = [
        ("third-octave", tob_grid(tob, floor)),
        ("transcoded mel", mel_grid(transcoded, 400)),
        ("mel from waveform", mel_grid(truth, 400)),
    ];
    let height = panels.len() as f64 * (panel_h + label_h + gap) + gap;
    let mut svg = svg_open(width, height);
    for (i, (title, grid)) in panels.iter().enumerate() {
        let top = gap + i as f64 * (panel_h + label_h + gap);
        let _ = writeln!(svg, r#"<g class="panel" id="panel-{i}">"#);
        let _ = writeln!(svg, r#"<text x="{x0:.2}" y="{:.2}">{}</text>"#, top + 14.0, escape(title));
        draw_grid(&mut svg, grid, x0, top + label_h, plot_w, panel_h);
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    svg
}

/// Detection curves, averaged per occupancy bin, with badge rows beneath and shading
/// over bins with at least `threshold` adults.
pub fn timeline(
    det: &DetectionTimeline,
    occ: &OccupancyTimeline,
    badges: &[BadgeEvent],
    threshold: usize,
) -> String {
    let (width, x0, x1) = (1200.0, 150.0, 1180.0);
    let (curve_top, curve_h) = (30.0, 260.0);
    let row_h = 14.0;
    let ids: Vec<&str> = badges
        .iter()
        .map(|b| b.badge_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let badge_top = curve_top + curve_h + 40.0;
    let height = badge_top + ids.len() as f64 * row_h + 30.0;
    let (t0, t1) = (occ.start_ms, occ.end_ms().max(occ.start_ms + 1));
    let tx = |t: i64| x0 + (x1 - x0) * (t - t0) as f64 / (t1 - t0) as f64;
    let vy = |v: f64| curve_top + curve_h * (1.0 - v.clamp(0.0, 1.0));

    let mut svg = svg_open(width, height);
    svg.push_str("<g class=\"shading\">\n");
    for (i, &c) in occ.counts.iter().enumerate() {
        if c >= threshold {
            let (a, b) = (tx(occ.bin_start(i)), tx(occ.bin_start(i + 1)));
            let _ = writeln!(
                svg,
                r##"<rect x="{a:.2}" y="{curve_top:.2}" width="{:.2}" height="{:.2}" fill="#cccccc"/>"##,
                b - a,
                badge_top + ids.len() as f64 * row_h - curve_top
            );
        }
    }
    svg.push_str("</g>\n");

    let _ = writeln!(
        svg,
        r#"<rect x="{x0:.2}" y="{curve_top:.2}" width="{:.2}" height="{curve_h:.2}" fill="none" stroke="black"/>"#,
        x1 - x0
    );
    for (i, label) in det.labels.iter().enumerate() {
        let color = CURVE_COLORS[i % CURVE_COLORS.len()];
        // one point per occupancy bin: the mean over windows starting in it
        let mut sums = vec![(0.0, 0usize); occ.counts.len()];
        for w in &det.windows {
            if let Some(b) = occ.bin_of(w.start_ms) {
                sums[b].0 += w.y[i];
                sums[b].1 += 1;
            }
        }
        let points: Vec<String> = sums
            .iter()
            .enumerate()
            .filter(|(_, s)| s.1 > 0)
            .map(|(b, s)| {
                let mid = occ.bin_start(b) + occ.bin_ms / 2;
                format!("{:.2},{:.2}", tx(mid), vy(s.0 / s.1 as f64))
            })
            .collect();
        let _ = writeln!(svg, r#"<g class="curve" data-label="{}">"#, escape(label));
        if !points.is_empty() {
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
                points.join(" ")
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="10" y="{:.2}" fill="{color}">{}</text>"#,
            curve_top + 14.0 * (i + 1) as f64,
            escape(label)
        );
        svg.push_str("</g>\n");
    }

    for (row, id) in ids.iter().enumerate() {
        let y = badge_top + row as f64 * row_h;
        let _ = writeln!(svg, r#"<g class="badge" data-id="{}">"#, escape(id));
        let _ = writeln!(svg, r#"<text x="10" y="{:.2}">{}</text>"#, y + row_h - 3.0, escape(id));
        for b in badges.iter().filter(|b| b.badge_id == *id) {
            let (a, e) = (tx(b.enter_ms.clamp(t0, t1)), tx(b.exit_ms.clamp(t0, t1)));
            if e > a {
                let _ = writeln!(
                    svg,
                    r##"<rect x="{a:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#555555"/>"##,
                    y + 2.0,
                    e - a,
                    row_h - 4.0
                );
            }
        }
        svg.push_str("</g>\n");
    }
    let _ = writeln!(
        svg,
        r#"<text x="{x0:.2}" y="{:.2}">{}</text>"#,
        height - 8.0,
        format_time(t0)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{x1:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
        height - 8.0,
        format_time(t1)
    );
    svg.push_str("</svg>\n");
    svg
}

pub fn write_svg(path: impl AsRef<Path>, svg: &str) -> Result<()> {
    std::fs::write(path, svg)?;
    Ok(())
}
