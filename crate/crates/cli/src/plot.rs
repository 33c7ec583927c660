//! Static SVG figures.

use std::path::Path;

use plotters::coord::Shift;
use plotters::prelude::*;

use crate::error::HarnessError;

const PALETTE: [RGBColor; 4] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// One panel of line series sharing axes.
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub log_y: bool,
}

fn plot_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Plot {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn bounds(panel: &Panel) -> ((f64, f64), (f64, f64)) {
    let pts = panel.series.iter().flat_map(|s| s.points.iter()).filter(|p| {
        p.0.is_finite() && p.1.is_finite() && (!panel.log_y || p.1 > 0.0)
    });
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        let y = if panel.log_y { y.log10() } else { y };
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return ((0.0, 1.0), (0.0, 1.0));
    }
    let pad = |a: f64, b: f64| {
        let w = (b - a).abs().max(1e-12);
        (a - 0.05 * w, b + 0.05 * w)
    };
    (pad(x0, x1), pad(y0, y1))
}

fn draw_panel(area: &DrawingArea<SVGBackend<'_>, Shift>, panel: &Panel, path: &Path) -> Result<(), HarnessError> {
    let ((x0, x1), (y0, y1)) = bounds(panel);
    let mut chart = ChartBuilder::on(area)
        .caption(&panel.title, ("sans-serif", 16))
        .margin(8)
        .x_label_area_size(32)
        .y_label_area_size(56)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| plot_err(path, e))?;
    let y_label = if panel.log_y {
        format!("log10 {}", panel.y_label)
    } else {
        panel.y_label.clone()
    };
    chart
        .configure_mesh()
        .x_desc(panel.x_label.as_str())
        .y_desc(y_label)
        .draw()
        .map_err(|e| plot_err(path, e))?;
    for (i, s) in panel.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter(|p| p.1.is_finite() && (!panel.log_y || p.1 > 0.0))
            .map(|&(x, y)| (x, if panel.log_y { y.log10() } else { y }))
            .collect();
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(|e| plot_err(path, e))?
            .label(s.name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        chart
            .draw_series(pts.into_iter().map(|p| Circle::new(p, 2, color.filled())))
            .map_err(|e| plot_err(path, e))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(path, e))?;
    Ok(())
}

/// Writes `panels` on a grid with `cols` columns.
pub fn line_panels(path: &Path, panels: &[Panel], cols: usize) -> Result<(), HarnessError> {
    let cols = cols.max(1);
    let rows = panels.len().div_ceil(cols).max(1);
    let root = SVGBackend::new(path, (420 * cols as u32, 320 * rows as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let areas = root.split_evenly((rows, cols));
    for (panel, area) in panels.iter().zip(&areas) {
        draw_panel(area, panel, path)?;
    }
    root.present().map_err(|e| plot_err(path, e))?;
    Ok(())
}

/// A field over the grid, `values[lat][lon]`.
pub struct Field {
    pub title: String,
    pub values: Vec<Vec<f64>>,
}

fn color_scale(v: f64) -> RGBColor {
    // Blue to white to red.
    let v = v.clamp(0.0, 1.0);
    let (r, g, b) = if v < 0.5 {
        let a = v / 0.5;
        (40.0 + 215.0 * a, 90.0 + 165.0 * a, 200.0 + 55.0 * a)
    } else {
        let a = (v - 0.5) / 0.5;
        (255.0 - 35.0 * a, 255.0 - 205.0 * a, 255.0 - 215.0 * a)
    };
    RGBColor(r as u8, g as u8, b as u8)
}

/// Heat maps, latitude index upward and longitude index rightward, each
/// with its own linear colour range (printed in the caption).
pub fn field_panels(path: &Path, fields: &[Field], cols: usize) -> Result<(), HarnessError> {
    let cols = cols.max(1);
    let rows = fields.len().div_ceil(cols).max(1);
    let root = SVGBackend::new(path, (460 * cols as u32, 300 * rows as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let areas = root.split_evenly((rows, cols));
    for (field, area) in fields.iter().zip(&areas) {
        let n_lat = field.values.len();
        let n_lon = field.values.first().map_or(0, |r| r.len());
        let (lo, hi) = field
            .values
            .iter()
            .flatten()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut chart = ChartBuilder::on(area)
            .caption(format!("{} [{lo:.3}, {hi:.3}]", field.title), ("sans-serif", 15))
            .margin(8)
            .x_label_area_size(28)
            .y_label_area_size(36)
            .build_cartesian_2d(0.0..n_lon as f64, 0.0..n_lat as f64)
            .map_err(|e| plot_err(path, e))?;
        chart
            .configure_mesh()
            .disable_mesh()
            .x_desc("longitude index")
            .y_desc("latitude index")
            .draw()
            .map_err(|e| plot_err(path, e))?;
        let cells = field.values.iter().enumerate().flat_map(|(m, row)| {
            row.iter().enumerate().map(move |(j, v)| {
                let c = color_scale((v - lo) / span);
                Rectangle::new([(j as f64, m as f64), (j as f64 + 1.0, m as f64 + 1.0)], c.filled())
            })
        });
        chart.draw_series(cells).map_err(|e| plot_err(path, e))?;
    }
    root.present().map_err(|e| plot_err(path, e))?;
    Ok(())
}
