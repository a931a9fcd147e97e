//! Collocation points over the space-time box `[x0,x1] x [y0,y1] x [t0,t1]`.
//!
//! Grid mode builds endpoint-inclusive tensor-product meshes (x outermost,
//! then y, then t). Random mode draws the same number of i.i.d. uniform
//! points from a seeded generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplingError {
    #[error("grid sampling needs at least 2 points per axis, got {0}")]
    TooFewGridPoints(usize),
    #[error("random sampling needs at least 1 point per axis")]
    NoPoints,
    #[error("invalid {axis} extent [{lo}, {hi}]: need finite lo < hi")]
    InvalidExtent { axis: &'static str, lo: f64, hi: f64 },
}

/// A space-time location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64, t: f64) -> Self {
        Self { x, y, t }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainBox {
    x: [f64; 2],
    y: [f64; 2],
    t: [f64; 2],
}

impl DomainBox {
    pub fn new(x: [f64; 2], y: [f64; 2], t: [f64; 2]) -> Result<Self, SamplingError> {
        for (axis, [lo, hi]) in [("x", x), ("y", y), ("t", t)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(SamplingError::InvalidExtent { axis, lo, hi });
            }
        }
        Ok(Self { x, y, t })
    }

    /// `[0,length]^2 x [0,total_time]`.
    pub fn square(length: f64, total_time: f64) -> Result<Self, SamplingError> {
        Self::new([0.0, length], [0.0, length], [0.0, total_time])
    }

    pub fn x(&self) -> [f64; 2] {
        self.x
    }

    pub fn y(&self) -> [f64; 2] {
        self.y
    }

    pub fn t(&self) -> [f64; 2] {
        self.t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    #[default]
    Grid,
    UniformRandom,
}

/// Endpoint-inclusive linspace. The lower half counts up from `lo`, the upper
/// half counts down from `hi`, so both endpoints are reproduced exactly.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            let half = n / 2;
            (0..n)
                .map(|i| {
                    if i < half {
                        lo + step * i as f64
                    } else {
                        hi - step * (n - 1 - i) as f64
                    }
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Stream {
    Interior = 1,
    Initial = 2,
    Down = 3,
    Up = 4,
    Left = 5,
    Right = 6,
}

fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

fn check(n: usize, mode: SamplingMode) -> Result<(), SamplingError> {
    match mode {
        SamplingMode::Grid if n < 2 => Err(SamplingError::TooFewGridPoints(n)),
        SamplingMode::UniformRandom if n == 0 => Err(SamplingError::NoPoints),
        _ => Ok(()),
    }
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// `n^3` points filling the box.
pub fn interior_points(
    domain: &DomainBox,
    n: usize,
    mode: SamplingMode,
    seed: u64,
) -> Result<Vec<Point>, SamplingError> {
    check(n, mode)?;
    let mut out = Vec::with_capacity(n * n * n);
    match mode {
        SamplingMode::Grid => {
            let xs = linspace(domain.x[0], domain.x[1], n);
            let ys = linspace(domain.y[0], domain.y[1], n);
            let ts = linspace(domain.t[0], domain.t[1], n);
            for &x in &xs {
                for &y in &ys {
                    for &t in &ts {
                        out.push(Point::new(x, y, t));
                    }
                }
            }
        }
        SamplingMode::UniformRandom => {
            let mut rng = rng_for(seed, Stream::Interior);
            for _ in 0..n * n * n {
                let x = uniform(&mut rng, domain.x);
                let y = uniform(&mut rng, domain.y);
                let t = uniform(&mut rng, domain.t);
                out.push(Point::new(x, y, t));
            }
        }
    }
    Ok(out)
}

/// `n^2` points on the `t = t0` plane.
pub fn initial_points(
    domain: &DomainBox,
    n: usize,
    mode: SamplingMode,
    seed: u64,
) -> Result<Vec<Point>, SamplingError> {
    check(n, mode)?;
    let t0 = domain.t[0];
    Ok(match mode {
        SamplingMode::Grid => plane(domain.x, domain.y, n, |x, y| Point::new(x, y, t0)),
        SamplingMode::UniformRandom => {
            let mut rng = rng_for(seed, Stream::Initial);
            (0..n * n)
                .map(|_| {
                    let x = uniform(&mut rng, domain.x);
                    let y = uniform(&mut rng, domain.y);
                    Point::new(x, y, t0)
                })
                .collect()
        }
    })
}

fn plane(a: [f64; 2], b: [f64; 2], n: usize, point: impl Fn(f64, f64) -> Point) -> Vec<Point> {
    let us = linspace(a[0], a[1], n);
    let vs = linspace(b[0], b[1], n);
    us.iter()
        .flat_map(|&u| vs.iter().map(move |&v| (u, v)))
        .map(|(u, v)| point(u, v))
        .collect()
}

fn random_plane(
    a: [f64; 2],
    b: [f64; 2],
    n: usize,
    mut rng: ChaCha8Rng,
    point: impl Fn(f64, f64) -> Point,
) -> Vec<Point> {
    (0..n * n)
        .map(|_| {
            let u = uniform(&mut rng, a);
            let v = uniform(&mut rng, b);
            point(u, v)
        })
        .collect()
}

/// The four lateral faces of the box, `n^2` points each.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFaces {
    /// `y = y0`, meshed over (x, t).
    pub down: Vec<Point>,
    /// `y = y1`, meshed over (x, t).
    pub up: Vec<Point>,
    /// `x = x0`, meshed over (y, t).
    pub left: Vec<Point>,
    /// `x = x1`, meshed over (y, t).
    pub right: Vec<Point>,
}

impl BoundaryFaces {
    pub fn len(&self) -> usize {
        self.down.len() + self.up.len() + self.left.len() + self.right.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn boundary_points(
    domain: &DomainBox,
    n: usize,
    mode: SamplingMode,
    seed: u64,
) -> Result<BoundaryFaces, SamplingError> {
    check(n, mode)?;
    let [x0, x1] = domain.x;
    let [y0, y1] = domain.y;
    Ok(match mode {
        SamplingMode::Grid => BoundaryFaces {
            down: plane(domain.x, domain.t, n, |x, t| Point::new(x, y0, t)),
            up: plane(domain.x, domain.t, n, |x, t| Point::new(x, y1, t)),
            left: plane(domain.y, domain.t, n, |y, t| Point::new(x0, y, t)),
            right: plane(domain.y, domain.t, n, |y, t| Point::new(x1, y, t)),
        },
        SamplingMode::UniformRandom => BoundaryFaces {
            down: random_plane(domain.x, domain.t, n, rng_for(seed, Stream::Down), |x, t| {
                Point::new(x, y0, t)
            }),
            up: random_plane(domain.x, domain.t, n, rng_for(seed, Stream::Up), |x, t| {
                Point::new(x, y1, t)
            }),
            left: random_plane(domain.y, domain.t, n, rng_for(seed, Stream::Left), |y, t| {
                Point::new(x0, y, t)
            }),
            right: random_plane(domain.y, domain.t, n, rng_for(seed, Stream::Right), |y, t| {
                Point::new(x1, y, t)
            }),
        },
    })
}

/// All point batches needed by one evaluation of the training objective.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    pub interior: Vec<Point>,
    pub initial: Vec<Point>,
    pub boundary: BoundaryFaces,
}

impl CollocationSet {
    pub fn generate(
        domain: &DomainBox,
        n: usize,
        mode: SamplingMode,
        seed: u64,
    ) -> Result<Self, SamplingError> {
        Ok(Self {
            interior: interior_points(domain, n, mode, seed)?,
            initial: initial_points(domain, n, mode, seed)?,
            boundary: boundary_points(domain, n, mode, seed)?,
        })
    }
}
