//! MSE-versus-N curves, skew on the left and offset on the right.

use plotters::prelude::*;

use crate::estimator::Method;
use crate::harness::ResultTable;

const WIDTH: u32 = 1200;
const HEIGHT: u32 = 480;

struct Series {
    label: String,
    color: RGBColor,
    dashed: bool,
    points: Vec<(f64, f64)>,
}

fn method_color(method: Method) -> RGBColor {
    match method {
        Method::MleRaw => RGBColor(214, 39, 40),
        Method::MleSvd => RGBColor(31, 119, 180),
        Method::MleLrma => RGBColor(44, 160, 44),
    }
}

fn collect_series(table: &ResultTable, pick: impl Fn(f64, f64) -> f64) -> Vec<Series> {
    let mut out = Vec::new();
    for method in Method::ALL {
        let points: Vec<(f64, f64)> = table
            .rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| (r.n as f64, pick(r.mse_alpha, r.mse_beta)))
            .collect();
        if !points.is_empty() {
            out.push(Series {
                label: method.to_string(),
                color: method_color(method),
                dashed: false,
                points,
            });
        }
    }

    let mut ns: Vec<usize> = table.rows.iter().map(|r| r.n).collect();
    ns.dedup();
    let ideal: Vec<(f64, f64)> = ns
        .iter()
        .filter_map(|&n| table.rows.iter().find(|r| r.n == n))
        .map(|r| (r.n as f64, pick(r.crlb_alpha, r.crlb_beta)))
        .collect();
    if !ideal.is_empty() {
        out.push(Series {
            label: "CRLB (true variance)".into(),
            color: BLACK,
            dashed: true,
            points: ideal,
        });
    }
    let estimated: Vec<(f64, f64)> = table
        .crlb_estimated
        .iter()
        .map(|c| (c.n as f64, pick(c.crlb_alpha, c.crlb_beta)))
        .collect();
    if !estimated.is_empty() {
        out.push(Series {
            label: "CRLB (estimated variance)".into(),
            color: RGBColor(128, 128, 128),
            dashed: true,
            points: estimated,
        });
    }
    for s in &mut out {
        s.points.retain(|&(_, y)| y.is_finite() && y > 0.0);
    }
    out.retain(|s| !s.points.is_empty());
    out
}

fn log_bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        return (0.0, 1.0, 1e-3, 1.0);
    }
    if x0 == x1 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    (x0, x1, y0 / 2.0, y1 * 2.0)
}

fn draw_panel<DB: DrawingBackend>(
    area: &DrawingArea<DB, plotters::coord::Shift>,
    title: &str,
    y_desc: &str,
    series: &[Series],
) -> Result<(), String> {
    let (x0, x1, y0, y1) = log_bounds(series);
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x0..x1, (y0..y1).log_scale())
        .map_err(|e| e.to_string())?;
    chart
        .configure_mesh()
        .x_desc("Number of synchronization rounds N")
        .y_desc(y_desc)
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()
        .map_err(|e| e.to_string())?;

    for s in series {
        let style = s.color.stroke_width(2);
        let color = s.color;
        if s.dashed {
            chart
                .draw_series(DashedLineSeries::new(s.points.iter().copied(), 6, 4, style))
                .map_err(|e| e.to_string())?
        } else {
            chart
                .draw_series(LineSeries::new(s.points.iter().copied(), style))
                .map_err(|e| e.to_string())?;
            chart
                .draw_series(s.points.iter().map(|&p| Circle::new(p, 3, color.filled())))
                .map_err(|e| e.to_string())?
        }
        .label(s.label.as_str())
        .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    if !series.is_empty() {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .position(SeriesLabelPosition::UpperRight)
            .draw()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

/// Renders the table as an SVG document.
pub(crate) fn render_curves(table: &ResultTable) -> Result<String, String> {
    let skew = collect_series(table, |a, _| a);
    let offset = collect_series(table, |_, b| b);
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (WIDTH, HEIGHT)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| e.to_string())?;
        let (left, right) = root.split_horizontally(WIDTH / 2);
        draw_panel(&left, "MSE of estimated clock skew", "MSE(skew)", &skew)?;
        draw_panel(&right, "MSE of estimated clock offset", "MSE(offset) [s^2]", &offset)?;
        root.present().map_err(|e| e.to_string())?;
    }
    Ok(svg)
}
