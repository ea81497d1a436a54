//! Multivariate spatial observations and their CSV form.
//!
//! The CSV header is `x1,…,xd,<name1>,…,<namep>`; an empty field marks a
//! missing value.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDataset {
    d: usize,
    /// `n` points of dimension `d`, back to back.
    coords: Vec<f64>,
    /// `n × p` row-major; NaN marks a missing value.
    obs: Vec<f64>,
    names: Vec<String>,
}

impl SpatialDataset {
    pub fn new(d: usize, coords: Vec<f64>, obs: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Data("spatial dimension must be ≥ 1".into()));
        }
        if coords.len() % d != 0 {
            return Err(Error::Data(format!(
                "{} coordinates do not split into points of dimension {d}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Data("non-finite coordinate".into()));
        }
        let n = coords.len() / d;
        let p = names.len();
        if p == 0 || obs.len() != n * p {
            return Err(Error::Data(format!(
                "{} observations for {n} locations and {p} components",
                obs.len()
            )));
        }
        if obs.iter().any(|v| v.is_infinite()) {
            return Err(Error::Data("infinite observation".into()));
        }
        Ok(Self {
            d,
            coords,
            obs,
            names,
        })
    }

    /// Default component names `X1, X2, …`.
    pub fn default_names(p: usize) -> Vec<String> {
        (1..=p).map(|i| format!("X{i}")).collect()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.coords.len() / self.d
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn location(&self, q: usize) -> &[f64] {
        &self.coords[q * self.d..(q + 1) * self.d]
    }

    pub fn value(&self, q: usize, i: usize) -> f64 {
        self.obs[q * self.p() + i]
    }

    pub fn set_value(&mut self, q: usize, i: usize, v: f64) {
        let p = self.p();
        self.obs[q * p + i] = v;
    }

    /// Observation vector in location-major order, matching the block layout
    /// of the covariance matrix.
    pub fn stacked(&self) -> &[f64] {
        &self.obs
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        (0..self.n()).map(|q| self.value(q, i)).collect()
    }

    pub fn has_missing(&self) -> bool {
        self.obs.iter().any(|v| v.is_nan())
    }

    pub fn require_complete(&self) -> Result<()> {
        if self.has_missing() {
            Err(Error::Data("missing values are only allowed in prediction targets".into()))
        } else {
            Ok(())
        }
    }

    /// Rows `idx` in the given order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let p = self.p();
        let mut coords = Vec::with_capacity(idx.len() * self.d);
        let mut obs = Vec::with_capacity(idx.len() * p);
        for &q in idx {
            coords.extend_from_slice(self.location(q));
            obs.extend_from_slice(&self.obs[q * p..(q + 1) * p]);
        }
        Self {
            d: self.d,
            coords,
            obs,
            names: self.names.clone(),
        }
    }

    /// Same locations and names, new values.
    pub fn with_values(&self, obs: Vec<f64>) -> Result<Self> {
        Self::new(self.d, self.coords.clone(), obs, self.names.clone())
    }

    /// Componentwise mean and standard deviation over the non-missing values.
    pub fn moments(&self) -> Vec<(f64, f64)> {
        (0..self.p())
            .map(|i| {
                let v: Vec<f64> = self.component(i).into_iter().filter(|x| !x.is_nan()).collect();
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
                (mean, var.sqrt())
            })
            .collect()
    }

    /// `(x - mean_i) / sd_i` per component.
    pub fn standardized(&self, moments: &[(f64, f64)]) -> Result<Self> {
        let p = self.p();
        for (i, (_, sd)) in moments.iter().enumerate() {
            if !(*sd > 0.0) {
                return Err(Error::ZeroVariance(format!("component {}", self.names[i])));
            }
        }
        let obs = self
            .obs
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let (m, s) = moments[k % p];
                (v - m) / s
            })
            .collect();
        self.with_values(obs)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(file)
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr.headers()?.clone();
        let d = header
            .iter()
            .enumerate()
            .take_while(|(k, h)| h.trim() == format!("x{}", k + 1))
            .count();
        if d == 0 {
            return Err(Error::Data("header must start with x1".into()));
        }
        let names: Vec<String> = header.iter().skip(d).map(|h| h.trim().to_string()).collect();
        if names.is_empty() {
            return Err(Error::Data("no value columns after the coordinates".into()));
        }
        let mut coords = Vec::new();
        let mut obs = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != d + names.len() {
                return Err(Error::Data(format!(
                    "row {} has {} fields, expected {}",
                    line + 2,
                    rec.len(),
                    d + names.len()
                )));
            }
            for (k, field) in rec.iter().enumerate() {
                let field = field.trim();
                if k >= d && field.is_empty() {
                    obs.push(f64::NAN);
                    continue;
                }
                let v: f64 = field.parse().map_err(|_| {
                    Error::Data(format!("row {}, column {}: cannot parse {field:?}", line + 2, k + 1))
                })?;
                if k < d {
                    coords.push(v);
                } else {
                    obs.push(v);
                }
            }
        }
        Self::new(d, coords, obs, names)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.to_writer(file)
    }

    pub fn to_writer(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.d).map(|k| format!("x{k}")).collect();
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        let p = self.p();
        for q in 0..self.n() {
            let mut row: Vec<String> = self.location(q).iter().map(|v| v.to_string()).collect();
            for i in 0..p {
                let v = self.value(q, i);
                row.push(if v.is_nan() { String::new() } else { v.to_string() });
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Coordinates of an `nx × ny` grid with spacing `(dx, dy)` starting at
/// `origin`, `x` varying slowest.
pub fn grid_coords(nx: usize, ny: usize, dx: f64, dy: f64, origin: [f64; 2]) -> Vec<f64> {
    let mut c = Vec::with_capacity(2 * nx * ny);
    for ix in 0..nx {
        for iy in 0..ny {
            c.push(origin[0] + ix as f64 * dx);
            c.push(origin[1] + iy as f64 * dy);
        }
    }
    c
}
