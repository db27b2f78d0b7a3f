use std::io::{BufRead, BufReader, Write};
use std::path::Path as FsPath;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::Real;

/// A uniformly sampled trajectory `w(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path<T: Real> {
    times: Vec<T>,
    points: Vec<DVector<T>>,
}

fn spacing_tol<T: Real>(dt: T, t_last: T) -> T {
    T::of(1e-12).max(T::epsilon() * T::of(8.0)) * dt.abs().max(t_last.abs()).max(T::one())
}

impl<T: Real> Path<T> {
    pub fn new(times: Vec<T>, points: Vec<DVector<T>>) -> Result<Self> {
        if times.len() != points.len() {
            return Err(Error::contract(format!(
                "path has {} times but {} points",
                times.len(),
                points.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::contract("a path needs at least two points"));
        }
        let dim = points[0].len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::contract("path points have mixed dimensions"));
        }
        if times.iter().any(|t| !t.is_finite()) || points.iter().any(|p| p.iter().any(|x| !x.is_finite())) {
            return Err(Error::contract("path contains non-finite values"));
        }
        let dt = times[1] - times[0];
        if dt <= T::zero() {
            return Err(Error::contract("path times must increase"));
        }
        let tol = spacing_tol(dt, *times.last().unwrap());
        for (k, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > tol {
                return Err(Error::contract(format!("path spacing is not uniform at knot {k}")));
            }
        }
        Ok(Self { times, points })
    }

    /// Points at `t0 + k·dt`.
    pub fn uniform(t0: T, dt: T, points: Vec<DVector<T>>) -> Result<Self> {
        let times = (0..points.len()).map(|k| t0 + dt * T::from_count(k)).collect();
        Self::new(times, points)
    }

    /// Straight line from `w0` to `wf` over `[0, horizon]` with `n_knots` points.
    pub fn linear(w0: &DVector<T>, wf: &DVector<T>, horizon: T, n_knots: usize) -> Result<Self> {
        if n_knots < 2 {
            return Err(Error::contract("a path needs at least two knots"));
        }
        let segments = T::from_count(n_knots - 1);
        let points = (0..n_knots)
            .map(|k| {
                let s = T::from_count(k) / segments;
                w0 * (T::one() - s) + wf * s
            })
            .collect();
        Self::uniform(T::zero(), horizon / segments, points)
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn points(&self) -> &[DVector<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn dt(&self) -> T {
        self.times[1] - self.times[0]
    }

    pub fn duration(&self) -> T {
        *self.times.last().unwrap() - self.times[0]
    }

    pub fn start(&self) -> &DVector<T> {
        &self.points[0]
    }

    pub fn end(&self) -> &DVector<T> {
        self.points.last().unwrap()
    }

    /// Same knots traversed backwards, on the same time grid.
    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        Self {
            times: self.times.clone(),
            points,
        }
    }

    /// Largest coordinate-wise distance to another path on the same grid.
    pub fn sup_distance(&self, other: &Path<T>) -> Result<T> {
        if self.len() != other.len() || self.dim() != other.dim() {
            return Err(Error::contract(
                "sup_distance needs paths with the same knots and dimension",
            ));
        }
        Ok(self
            .points
            .iter()
            .zip(&other.points)
            .fold(T::zero(), |acc, (a, b)| acc.max((a - b).amax())))
    }

    /// Writes `t,w0,…,w{d-1}`, keeping every `thin`-th knot (the last knot is
    /// always kept).
    pub fn write_csv(&self, path: impl AsRef<FsPath>, thin: usize) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv_to(&mut f, thin)?;
        f.flush()?;
        Ok(())
    }

    pub fn write_csv_to<W: Write>(&self, out: &mut W, thin: usize) -> Result<()> {
        let thin = thin.max(1);
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((0..self.dim()).map(|i| format!("w{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        let last = self.len() - 1;
        for k in (0..self.len()).filter(|&k| k % thin == 0 || k == last) {
            let mut row = format!("{:?}", self.times[k].to_f64_lossy());
            for x in self.points[k].iter() {
                row.push_str(&format!(",{:?}", x.to_f64_lossy()));
            }
            writeln!(out, "{row}")?;
        }
        Ok(())
    }

    /// Reads a CSV written by [`Path::write_csv`] with `thin = 1`.
    pub fn read_csv(path: impl AsRef<FsPath>) -> Result<Self> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| Error::contract("empty path CSV"))??;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"t") || cols.len() < 2 {
            return Err(Error::contract(
                "path CSV header must start with `t` followed by weight columns",
            ));
        }
        let dim = cols.len() - 1;
        let (mut times, mut points) = (Vec::new(), Vec::new());
        for (row, line) in lines.enumerate() {
            let line = line?;
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::contract(format!("path CSV row {row}: {e}")))?;
            if vals.len() != dim + 1 {
                return Err(Error::contract(format!(
                    "path CSV row {row} has {} columns",
                    vals.len()
                )));
            }
            times.push(T::of(vals[0]));
            points.push(DVector::from_iterator(dim, vals[1..].iter().map(|&v| T::of(v))));
        }
        Self::new(times, points)
    }
}
