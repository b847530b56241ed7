//! SVG line charts of benchmark reports against corpus size.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::index::BackendKind;

const COLORS: [RGBColor; 5] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
];

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

fn series(
    reports: &[EvalReport],
    value: fn(&EvalReport) -> f64,
) -> Vec<(BackendKind, Vec<(f64, f64)>)> {
    BackendKind::ALL
        .into_iter()
        .filter_map(|b| {
            let mut pts: Vec<(f64, f64)> = reports
                .iter()
                .filter(|r| r.backend == b)
                .map(|r| (r.n as f64, value(r)))
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            (!pts.is_empty()).then_some((b, pts))
        })
        .collect()
}

fn draw(
    path: &Path,
    title: &str,
    y_label: &str,
    reports: &[EvalReport],
    value: fn(&EvalReport) -> f64,
) -> Result<()> {
    let data = series(reports, value);
    let xs = data.iter().flat_map(|(_, p)| p.iter().map(|q| q.0));
    let (x_min, x_max) = xs.fold((f64::INFINITY, 0.0f64), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    });
    if !x_min.is_finite() {
        return Err(Error::Plot("no reports to plot".into()));
    }
    let (x_min, x_max) = (x_min.max(1.0) / 1.5, x_max.max(1.0) * 1.5);
    let y_max = data
        .iter()
        .flat_map(|(_, p)| p.iter().map(|q| q.1))
        .fold(0.0f64, f64::max);
    let y_max = if y_max > 0.0 { y_max * 1.1 } else { 1.0 };

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d((x_min..x_max).log_scale(), 0.0..y_max)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("N (records)")
        .y_desc(y_label)
        .draw()
        .map_err(plot_err)?;
    for (i, (backend, pts)) in data.into_iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(backend.name())
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2))
            });
        chart
            .draw_series(pts.into_iter().map(|p| Circle::new(p, 4, color.filled())))
            .map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Writes `accuracy.svg` and `total_time.svg` into `dir`.
pub fn write_plots(reports: &[EvalReport], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let accuracy = dir.join("accuracy.svg");
    let time = dir.join("total_time.svg");
    draw(
        &accuracy,
        "Accuracy vs N",
        "accuracy (rank 1)",
        reports,
        |r| r.accuracy,
    )?;
    draw(
        &time,
        "Total time vs N",
        "insert + query time (s)",
        reports,
        |r| r.total_time_s,
    )?;
    Ok(vec![accuracy, time])
}
