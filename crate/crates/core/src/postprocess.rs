//! Convergence smoothing, solution snapshots, error metrics and frame export.
//!
//! CSV files are the numeric record; PNG frames are an 8-bit grayscale
//! rendering of the same grids.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::network::{JetRequest, Mlp};
use crate::problems::ProblemSpec;
use crate::sampling::{linspace, DomainBox, Point};
use crate::training::TrainReport;

#[derive(Debug, Error)]
pub enum PostprocessError {
    #[error("running average window must be >= 1")]
    ZeroWindow,
    #[error("snapshot needs at least 2 points per axis, got {0}")]
    TooFewPlotPoints(usize),
    #[error("non-finite value {value} at (x={x}, y={y}, t={t})")]
    NonFinite { x: f64, y: f64, t: f64, value: f64 },
    #[error("problem '{0}' has no exact solution")]
    NoExactSolution(&'static str),
    #[error("no time samples given")]
    NoTimes,
    #[error("time step must be finite and > 0, got {0}")]
    InvalidStep(f64),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("png encoding failed for {path}: {message}")]
    Png { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PostprocessError + '_ {
    move |source| PostprocessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Trailing mean over `series[max(0, k-window+1)..=k]`, summed left to right.
pub fn running_average(series: &[f64], window: usize) -> Result<Vec<f64>, PostprocessError> {
    if window == 0 {
        return Err(PostprocessError::ZeroWindow);
    }
    Ok((0..series.len())
        .map(|k| {
            let lo = (k + 1).saturating_sub(window);
            let slice = &series[lo..=k];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect())
}

/// `start, start+step, ...` strictly below `stop`, element `i` computed as
/// `start + i*step`.
pub fn arange(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, PostprocessError> {
    if !(step.is_finite() && step > 0.0) {
        return Err(PostprocessError::InvalidStep(step));
    }
    let n = ((stop - start) / step).ceil();
    let n = if n.is_finite() && n > 0.0 { n as usize } else { 0 };
    Ok((0..n).map(|i| start + i as f64 * step).collect())
}

/// Field values on the endpoint-inclusive `nx x ny` spatial mesh at time `t`.
/// `values[i*ny + j]` belongs to `(xs[i], ys[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotGrid {
    pub t: f64,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
}

impl SnapshotGrid {
    pub fn nx(&self) -> usize {
        self.xs.len()
    }

    pub fn ny(&self) -> usize {
        self.ys.len()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ny() + j]
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.xs
            .iter()
            .flat_map(move |&x| self.ys.iter().map(move |&y| (x, y)))
            .zip(&self.values)
            .map(|((x, y), &u)| (x, y, u))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), PostprocessError> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        let mut body = || -> io::Result<()> {
            writeln!(w, "x,y,u")?;
            for (x, y, u) in self.points() {
                writeln!(w, "{x},{y},{u}")?;
            }
            w.flush()
        };
        body().map_err(io_err(path))
    }
}

fn mesh(domain: &DomainBox, t: f64, n_plot: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<Point>), PostprocessError> {
    if n_plot < 2 {
        return Err(PostprocessError::TooFewPlotPoints(n_plot));
    }
    let [x0, x1] = domain.x();
    let [y0, y1] = domain.y();
    let xs = linspace(x0, x1, n_plot);
    let ys = linspace(y0, y1, n_plot);
    let points = xs
        .iter()
        .flat_map(|&x| ys.iter().map(move |&y| Point::new(x, y, t)))
        .collect();
    Ok((xs, ys, points))
}

fn finish_grid(t: f64, xs: Vec<f64>, ys: Vec<f64>, points: &[Point], values: Vec<f64>) -> Result<SnapshotGrid, PostprocessError> {
    if let Some((p, &value)) = points.iter().zip(&values).find(|(_, v)| !v.is_finite()) {
        return Err(PostprocessError::NonFinite {
            x: p.x,
            y: p.y,
            t: p.t,
            value,
        });
    }
    Ok(SnapshotGrid { t, xs, ys, values })
}

/// Samples an arbitrary field on the snapshot mesh.
pub fn snapshot_fn(
    field: impl Fn(f64, f64, f64) -> f64,
    domain: &DomainBox,
    t: f64,
    n_plot: usize,
) -> Result<SnapshotGrid, PostprocessError> {
    let (xs, ys, points) = mesh(domain, t, n_plot)?;
    let values = points.iter().map(|p| field(p.x, p.y, p.t)).collect();
    finish_grid(t, xs, ys, &points, values)
}

pub fn snapshot(net: &Mlp, domain: &DomainBox, t: f64, n_plot: usize) -> Result<SnapshotGrid, PostprocessError> {
    let (xs, ys, points) = mesh(domain, t, n_plot)?;
    let values = net.jets(&points, JetRequest::value_only()).value().to_vec();
    finish_grid(t, xs, ys, &points, values)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ErrorMetrics {
    pub mse: f64,
    pub max_abs: f64,
    pub rel_l2: f64,
}

/// Metrics between two grid families with matching layout, pooled over all grids.
pub fn compare_grids(approx: &[SnapshotGrid], exact: &[SnapshotGrid]) -> ErrorMetrics {
    assert_eq!(approx.len(), exact.len());
    let mut sq = 0.0;
    let mut norm = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut n = 0usize;
    for (a, e) in approx.iter().zip(exact) {
        assert_eq!(a.values.len(), e.values.len());
        for (&u, &v) in a.values.iter().zip(&e.values) {
            let d = u - v;
            sq += d * d;
            norm += v * v;
            max_abs = max_abs.max(d.abs());
            n += 1;
        }
    }
    let mse = if n == 0 { 0.0 } else { sq / n as f64 };
    let rel_l2 = if norm > 0.0 {
        (sq / norm).sqrt()
    } else if sq == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    ErrorMetrics { mse, max_abs, rel_l2 }
}

/// Error of `field` against the problem's exact solution over all `t_samples`.
pub fn error_vs_exact_fn(
    field: impl Fn(f64, f64, f64) -> f64,
    problem: &ProblemSpec,
    domain: &DomainBox,
    t_samples: &[f64],
    n_plot: usize,
) -> Result<ErrorMetrics, PostprocessError> {
    if !problem.has_exact() {
        return Err(PostprocessError::NoExactSolution(problem.name()));
    }
    if t_samples.is_empty() {
        return Err(PostprocessError::NoTimes);
    }
    let exact_fn = |x, y, t| problem.exact(x, y, t).expect("checked has_exact");
    let mut approx = Vec::with_capacity(t_samples.len());
    let mut exact = Vec::with_capacity(t_samples.len());
    for &t in t_samples {
        approx.push(snapshot_fn(&field, domain, t, n_plot)?);
        exact.push(snapshot_fn(exact_fn, domain, t, n_plot)?);
    }
    Ok(compare_grids(&approx, &exact))
}

pub fn error_vs_exact(
    net: &Mlp,
    problem: &ProblemSpec,
    domain: &DomainBox,
    t_samples: &[f64],
    n_plot: usize,
) -> Result<ErrorMetrics, PostprocessError> {
    if !problem.has_exact() {
        return Err(PostprocessError::NoExactSolution(problem.name()));
    }
    if t_samples.is_empty() {
        return Err(PostprocessError::NoTimes);
    }
    let mut approx = Vec::with_capacity(t_samples.len());
    let mut exact = Vec::with_capacity(t_samples.len());
    for &t in t_samples {
        approx.push(snapshot(net, domain, t, n_plot)?);
        exact.push(snapshot_fn(
            |x, y, t| problem.exact(x, y, t).expect("checked has_exact"),
            domain,
            t,
            n_plot,
        )?);
    }
    Ok(compare_grids(&approx, &exact))
}

/// Maps `[lo, hi]` linearly onto `0..=255`; a degenerate range maps to 0.
pub fn to_gray(value: f64, lo: f64, hi: f64) -> u8 {
    if hi > lo {
        (((value - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u8
    } else {
        0
    }
}

fn write_png(path: &Path, grid: &SnapshotGrid, lo: f64, hi: f64) -> Result<(), PostprocessError> {
    // Image rows run top to bottom in decreasing y; columns follow x.
    let (w, h) = (grid.nx(), grid.ny());
    let mut pixels = Vec::with_capacity(w * h);
    for row in 0..h {
        let j = h - 1 - row;
        for i in 0..w {
            pixels.push(to_gray(grid.at(i, j), lo, hi));
        }
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| PostprocessError::Png {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut writer = encoder.write_header().map_err(png_err)?;
    writer.write_image_data(&pixels).map_err(png_err)?;
    writer.finish().map_err(png_err)
}

/// Writes `img_{idx:03}.png` and `img_{idx:03}.csv` per time, with one shared
/// gray scale over the global min/max. Returns the PNG paths in time order.
pub fn export_frames(
    net: &Mlp,
    domain: &DomainBox,
    times: &[f64],
    n_plot: usize,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, PostprocessError> {
    let grids = times
        .iter()
        .map(|&t| snapshot(net, domain, t, n_plot))
        .collect::<Result<Vec<_>, _>>()?;
    write_frames(&grids, out_dir)
}

pub fn write_frames(grids: &[SnapshotGrid], out_dir: &Path) -> Result<Vec<PathBuf>, PostprocessError> {
    if grids.is_empty() {
        return Ok(Vec::new());
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let (lo, hi) = grids.iter().map(SnapshotGrid::min_max).fold(
        (f64::INFINITY, f64::NEG_INFINITY),
        |(lo, hi), (a, b)| (lo.min(a), hi.max(b)),
    );
    let mut written = Vec::with_capacity(grids.len());
    for (idx, grid) in grids.iter().enumerate() {
        let png_path = out_dir.join(format!("img_{idx:03}.png"));
        write_png(&png_path, grid, lo, hi)?;
        grid.write_csv(&out_dir.join(format!("img_{idx:03}.csv")))?;
        written.push(png_path);
    }
    Ok(written)
}

/// `epoch,total,residual,initial,boundary`, epochs numbered from 1.
pub fn write_convergence_csv(report: &TrainReport, path: &Path) -> Result<(), PostprocessError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> io::Result<()> {
        writeln!(w, "epoch,total,residual,initial,boundary")?;
        for k in 0..report.epochs() {
            writeln!(
                w,
                "{},{},{},{},{}",
                k + 1,
                report.total[k],
                report.residual[k],
                report.initial[k],
                report.boundary[k]
            )?;
        }
        w.flush()
    };
    body().map_err(io_err(path))
}
