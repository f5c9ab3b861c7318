//! Static SVG charts.

use std::path::Path;

use plotters::prelude::*;
use timehut::trainer::{EpochRecord, TrainHistory};
use timehut::{Error, Result};

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::InvalidInput(format!("plot: {e}"))
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

/// Two stacked panels: mean losses per epoch, and the temperature schedule.
pub fn history_chart(history: &TrainHistory, path: &Path) -> Result<()> {
    let root = SVGBackend::new(path, (900, 640)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let (top, bottom) = root.split_vertically(400);
    let n = history.records.len().max(2) as f64;

    let (lo, hi) = range(
        history
            .records
            .iter()
            .flat_map(|r| [r.total, r.sched, r.angular]),
    );
    let mut chart = ChartBuilder::on(&top)
        .caption("training loss", ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(60)
        .build_cartesian_2d(0f64..n - 1.0, lo..hi)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("epoch")
        .draw()
        .map_err(plot_err)?;
    type Field = fn(&EpochRecord) -> f64;
    let series: [(&str, RGBColor, Field); 3] = [
        ("total", BLACK, |r| r.total),
        ("scheduled", BLUE, |r| r.sched),
        ("angular", RED, |r| r.angular),
    ];
    for (name, color, f) in series {
        chart
            .draw_series(LineSeries::new(
                history.records.iter().map(|r| (r.epoch as f64, f(r))),
                color,
            ))
            .map_err(plot_err)?
            .label(name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE)
        .draw()
        .map_err(plot_err)?;

    let (lo, hi) = range(history.records.iter().map(|r| r.tau));
    let mut chart = ChartBuilder::on(&bottom)
        .caption("temperature", ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(60)
        .build_cartesian_2d(0f64..n - 1.0, lo..hi)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("epoch")
        .y_desc("tau")
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(LineSeries::new(
            history.records.iter().map(|r| (r.epoch as f64, r.tau)),
            BLUE,
        ))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Normalised anomaly scores with the alarm threshold and labelled points.
pub fn score_chart(
    scores: &[f64],
    labels: &[u8],
    threshold: f64,
    train_end: usize,
    path: &Path,
) -> Result<()> {
    let root = SVGBackend::new(path, (1000, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let (lo, hi) = range(scores.iter().copied().chain([threshold]));
    let n = scores.len().max(2) as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption("anomaly score", ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(60)
        .build_cartesian_2d(0f64..n - 1.0, lo..hi)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("t")
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(LineSeries::new(
            scores.iter().enumerate().map(|(t, &s)| (t as f64, s)),
            BLACK,
        ))
        .map_err(plot_err)?;
    chart
        .draw_series(LineSeries::new(
            [(0.0, threshold), (n - 1.0, threshold)],
            RED,
        ))
        .map_err(plot_err)?;
    chart
        .draw_series(LineSeries::new(
            [(train_end as f64, lo), (train_end as f64, hi)],
            BLUE.mix(0.4),
        ))
        .map_err(plot_err)?;
    chart
        .draw_series(
            scores
                .iter()
                .zip(labels)
                .enumerate()
                .filter(|(_, (_, &l))| l != 0)
                .map(|(t, (&s, _))| Circle::new((t as f64, s), 3, RED.filled())),
        )
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}
