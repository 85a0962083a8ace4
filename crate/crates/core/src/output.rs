//! Artifact writing: atomic files, CSV with configuration headers, SVG plots.

use plotters::prelude::*;
use serde::Serialize;
use std::io;
use std::path::{Path, PathBuf};

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}

/// `header` lines prefixed with "# ".
pub fn comment_block(header: &str) -> String {
    header.lines().map(|l| format!("# {l}\n")).collect()
}

/// CSV text of `rows` preceded by `header` as comment lines.
pub fn csv_with_header<T: Serialize>(header: &str, rows: &[T]) -> io::Result<Vec<u8>> {
    let mut out = comment_block(header).into_bytes();
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).map_err(io::Error::other)?;
    }
    out.extend(writer.into_inner().map_err(|e| io::Error::other(e.to_string()))?);
    Ok(out)
}

/// CSV text with explicit column names and rows of strings.
pub fn csv_records(header: &str, columns: &[&str], rows: &[Vec<String>]) -> io::Result<Vec<u8>> {
    let mut out = comment_block(header).into_bytes();
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(columns).map_err(io::Error::other)?;
    for row in rows {
        writer.write_record(row).map_err(io::Error::other)?;
    }
    out.extend(writer.into_inner().map_err(|e| io::Error::other(e.to_string()))?);
    Ok(out)
}

/// One named polyline.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Axis scaling of a plot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log10,
}

impl Scale {
    fn apply(self, v: f64) -> f64 {
        match self {
            Scale::Linear => v,
            Scale::Log10 => v.log10(),
        }
    }

    fn label(self, name: &str) -> String {
        match self {
            Scale::Linear => name.to_string(),
            Scale::Log10 => format!("log10({name})"),
        }
    }
}

pub struct PlotSpec<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub x_scale: Scale,
    pub y_scale: Scale,
    /// Dashed horizontal reference line, in data units.
    pub reference: Option<f64>,
}

/// Renders a line plot as SVG text.
pub fn line_plot_svg(spec: &PlotSpec<'_>, series: &[Series]) -> io::Result<String> {
    let transformed: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .map(|&(x, y)| (spec.x_scale.apply(x), spec.y_scale.apply(y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect()
        })
        .collect();
    let reference = spec.reference.map(|r| spec.y_scale.apply(r)).filter(|r| r.is_finite());
    let xs = transformed.iter().flatten().map(|p| p.0);
    let ys = transformed.iter().flatten().map(|p| p.1).chain(reference);
    let range = |it: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 * lo.abs().max(1.0) {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let (x0, x1) = range(&mut xs.into_iter());
    let (y0, y1) = range(&mut ys.into_iter());

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (800, 560)).into_drawing_area();
        let draw = |e: DrawingAreaErrorKind<_>| io::Error::other(e.to_string());
        root.fill(&WHITE).map_err(draw)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(spec.title, ("sans-serif", 22))
            .margin(16)
            .x_label_area_size(44)
            .y_label_area_size(70)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(draw)?;
        chart
            .configure_mesh()
            .x_desc(spec.x_scale.label(spec.x_label))
            .y_desc(spec.y_scale.label(spec.y_label))
            .draw()
            .map_err(draw)?;
        for (i, (s, pts)) in series.iter().zip(&transformed).enumerate() {
            let color = Palette99::pick(i).to_rgba();
            chart
                .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
                .map_err(draw)?
                .label(s.label.clone())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
            chart
                .draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))
                .map_err(draw)?;
        }
        if let Some(r) = reference {
            chart
                .draw_series(DashedLineSeries::new(vec![(x0, r), (x1, r)], 6, 4, BLACK.stroke_width(1)))
                .map_err(draw)?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(draw)?;
        root.present().map_err(draw)?;
    }
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn plot_contains_labels() {
        let spec = PlotSpec {
            title: "t",
            x_label: "dt",
            y_label: "rho",
            x_scale: Scale::Log10,
            y_scale: Scale::Linear,
            reference: Some(1.0),
        };
        let svg = line_plot_svg(&spec, &[Series { label: "rho(B)".into(), points: vec![(1e-3, 0.5), (2e-3, 0.6)] }]).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("log10(dt)"));
    }
}
