//! Gaussian random field simulation, band-pass filtering and empirical
//! correlation of filtered signals.

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::covariance::{cov_table_at, sym_index, Synthesizer};
use crate::data::{grid_coords, SpatialDataset};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::model::Model;
use crate::par;
use crate::rng::{substream, SIMULATION};

/// `n_reps` independent draws `L z` at `coords`; replicate `r` uses its own
/// substream of `seed`.
pub fn simulate_grf(
    model: &Model,
    coords: &[f64],
    n_reps: usize,
    seed: u64,
) -> Result<Vec<SpatialDataset>> {
    model.validate()?;
    let d = model.d();
    let p = model.p();
    let sigma = Synthesizer::new(coords, d)?.sigma(model)?;
    let chol = Cholesky::new(&sigma)?;
    let names = SpatialDataset::default_names(p);
    let np = chol.dim();
    par::map_range(n_reps, |r| {
        let mut rng = substream(seed, SIMULATION, r as u64);
        let z: Vec<f64> = (0..np).map(|_| StandardNormal.sample(&mut rng)).collect();
        SpatialDataset::new(d, coords.to_vec(), chol.colour(&z), names.clone())
    })
    .into_iter()
    .collect()
}

/// Closed radial frequency band `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBand {
    lo: f64,
    hi: f64,
}

impl FrequencyBand {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo >= 0.0 && hi > lo) || lo.is_nan() || hi.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "frequency band needs 0 ≤ lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, w: f64) -> bool {
        w >= self.lo && w <= self.hi
    }
}

/// A complete rectangular grid recovered from a set of 2-D locations.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularGrid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    /// Cell `ix·ny + iy` of each location.
    pub cell: Vec<usize>,
}

fn axis_values(v: &[f64], what: &str) -> Result<(Vec<f64>, f64)> {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| a.total_cmp(b));
    let span = (u[u.len() - 1] - u[0]).abs().max(1.0);
    let tol = 1e-9 * span;
    u.dedup_by(|a, b| (*a - *b).abs() <= tol);
    if u.len() < 2 {
        return Ok((u, 1.0));
    }
    let step = (u[u.len() - 1] - u[0]) / (u.len() - 1) as f64;
    for (k, x) in u.iter().enumerate() {
        if (x - (u[0] + k as f64 * step)).abs() > 1e-6 * step {
            return Err(Error::NotAGrid(format!("{what} coordinates are not equally spaced")));
        }
    }
    Ok((u, step))
}

impl RegularGrid {
    pub fn detect(ds: &SpatialDataset) -> Result<Self> {
        if ds.d() != 2 {
            return Err(Error::NotAGrid(format!("filtering needs d = 2, got {}", ds.d())));
        }
        let n = ds.n();
        if n < 2 {
            return Err(Error::NotAGrid("fewer than two locations".into()));
        }
        let xs: Vec<f64> = (0..n).map(|q| ds.location(q)[0]).collect();
        let ys: Vec<f64> = (0..n).map(|q| ds.location(q)[1]).collect();
        let (ux, dx) = axis_values(&xs, "x")?;
        let (uy, dy) = axis_values(&ys, "y")?;
        let (nx, ny) = (ux.len(), uy.len());
        if nx * ny != n {
            return Err(Error::NotAGrid(format!(
                "{n} locations for a {nx} × {ny} grid"
            )));
        }
        let mut seen = vec![false; n];
        let mut cell = Vec::with_capacity(n);
        for q in 0..n {
            let ix = ((xs[q] - ux[0]) / dx).round() as usize;
            let iy = ((ys[q] - uy[0]) / dy).round() as usize;
            let c = ix * ny + iy;
            if ix >= nx || iy >= ny || seen[c] {
                return Err(Error::NotAGrid("duplicate or off-grid location".into()));
            }
            seen[c] = true;
            cell.push(c);
        }
        Ok(Self { nx, ny, dx, dy, cell })
    }
}

/// In-place 2-D DFT of a row-major `n1 × n2` array (unnormalized).
fn fft2(data: &mut [Complex64], n1: usize, n2: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (f1, f2) = if inverse {
        (planner.plan_fft_inverse(n1), planner.plan_fft_inverse(n2))
    } else {
        (planner.plan_fft_forward(n1), planner.plan_fft_forward(n2))
    };
    f2.process(data);
    let mut col = vec![Complex64::new(0.0, 0.0); n1 * n2];
    for i in 0..n1 {
        for j in 0..n2 {
            col[j * n1 + i] = data[i * n2 + j];
        }
    }
    f1.process(&mut col);
    for i in 0..n1 {
        for j in 0..n2 {
            data[i * n2 + j] = col[j * n1 + i];
        }
    }
}

fn signed(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Angular frequency of DFT coefficient `(k1, k2)`.
fn radial_frequency(k1: usize, k2: usize, grid: &RegularGrid) -> f64 {
    let u1 = signed(k1, grid.nx) / (grid.nx as f64 * grid.dx);
    let u2 = signed(k2, grid.ny) / (grid.ny as f64 * grid.dy);
    2.0 * std::f64::consts::PI * (u1 * u1 + u2 * u2).sqrt()
}

/// Keeps, per component, only the Fourier coefficients whose radial
/// frequency lies in `band`.
pub fn bandpass_filter(field: &SpatialDataset, band: FrequencyBand) -> Result<SpatialDataset> {
    field.require_complete()?;
    let grid = RegularGrid::detect(field)?;
    let (nx, ny) = (grid.nx, grid.ny);
    let n = nx * ny;
    let p = field.p();
    let mut out = vec![0.0; n * p];
    for i in 0..p {
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for q in 0..n {
            buf[grid.cell[q]] = Complex64::new(field.value(q, i), 0.0);
        }
        fft2(&mut buf, nx, ny, false);
        for k1 in 0..nx {
            for k2 in 0..ny {
                if !band.contains(radial_frequency(k1, k2, &grid)) {
                    buf[k1 * ny + k2] = Complex64::new(0.0, 0.0);
                }
            }
        }
        fft2(&mut buf, nx, ny, true);
        for q in 0..n {
            out[q * p + i] = buf[grid.cell[q]].re / n as f64;
        }
    }
    field.with_values(out)
}

/// Pearson correlation.
pub fn empirical_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Dimension(format!(
            "correlation of series of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance("constant series in correlation".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Draws fields on a regular 2-D grid by embedding the grid in a torus of
/// twice its size and factoring the multivariate spectrum frequency by
/// frequency; used where the dense covariance matrix is too large to factor.
#[derive(Debug, Clone)]
pub struct CirculantSimulator {
    p: usize,
    nx: usize,
    ny: usize,
    m1: usize,
    m2: usize,
    coords: Vec<f64>,
    /// Per torus frequency, the `p × p` square root, row-major.
    roots: Vec<f64>,
    clipped: f64,
}

impl CirculantSimulator {
    pub fn new(model: &Model, nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self> {
        model.validate()?;
        if model.d() != 2 {
            return Err(Error::InvalidParameter("grid simulation needs d = 2".into()));
        }
        if nx == 0 || ny == 0 || !(dx > 0.0 && dy > 0.0) {
            return Err(Error::InvalidParameter("grid needs positive size and spacing".into()));
        }
        let p = model.p();
        let (m1, m2) = (2 * nx, 2 * ny);
        let (h1, h2) = (m1 / 2 + 1, m2 / 2 + 1);
        let lags: Vec<f64> = (0..h1)
            .flat_map(|a| (0..h2).map(move |b| ((a as f64 * dx).powi(2) + (b as f64 * dy).powi(2)).sqrt()))
            .collect();
        let table = cov_table_at(model, &lags)?;
        let wrap = |k: usize, m: usize| if k <= m / 2 { k } else { m - k };
        let nsym = p * (p + 1) / 2;
        let mut spectra = Vec::with_capacity(nsym);
        for i in 0..p {
            for j in i..p {
                let mut buf: Vec<Complex64> = (0..m1 * m2)
                    .map(|idx| {
                        let (a, b) = (wrap(idx / m2, m1), wrap(idx % m2, m2));
                        Complex64::new(table.get(i, j, a * h2 + b), 0.0)
                    })
                    .collect();
                fft2(&mut buf, m1, m2, false);
                spectra.push(buf);
            }
        }
        let mtot = m1 * m2;
        let mut roots = vec![0.0; mtot * p * p];
        let mut clipped = 0.0;
        let mut total = 0.0;
        for u in 0..mtot {
            let lam = Matrix::from_fn(p, p, |i, j| spectra[sym_index(p, i, j)][u].re);
            let evd = lam
                .self_adjoint_eigen(faer::Side::Lower)
                .map_err(|e| Error::Degenerate(format!("spectral eigendecomposition failed: {e:?}")))?;
            let s = evd.S();
            let v = evd.U();
            for k in 0..p {
                let ev = s[k];
                total += ev.abs();
                if ev < 0.0 {
                    clipped += -ev;
                }
                let root = ev.max(0.0).sqrt();
                for i in 0..p {
                    roots[u * p * p + i * p + k] = v[(i, k)] * root;
                }
            }
        }
        let clipped = if total > 0.0 { clipped / total } else { 0.0 };
        if clipped > 1e-6 {
            log::warn!("circulant embedding clipped {clipped:.2e} of the spectral mass");
        }
        Ok(Self {
            p,
            nx,
            ny,
            m1,
            m2,
            coords: grid_coords(nx, ny, dx, dy, [0.0, 0.0]),
            roots,
            clipped,
        })
    }

    /// Relative spectral mass removed by clipping negative eigenvalues.
    pub fn clipped_fraction(&self) -> f64 {
        self.clipped
    }

    /// Two independent fields (real and imaginary parts) from substream `r`.
    pub fn draw_pair(&self, seed: u64, r: u64) -> Result<(SpatialDataset, SpatialDataset)> {
        let p = self.p;
        let mtot = self.m1 * self.m2;
        let mut rng = substream(seed, SIMULATION, r);
        let mut fields = vec![vec![Complex64::new(0.0, 0.0); mtot]; p];
        for u in 0..mtot {
            let xi: Vec<Complex64> = (0..p)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(re, im)
                })
                .collect();
            for i in 0..p {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..p {
                    acc += xi[k] * self.roots[u * p * p + i * p + k];
                }
                fields[i][u] = acc;
            }
        }
        let scale = 1.0 / (mtot as f64).sqrt();
        for f in fields.iter_mut() {
            fft2(f, self.m1, self.m2, true);
        }
        let n = self.nx * self.ny;
        let mut re = vec![0.0; n * p];
        let mut im = vec![0.0; n * p];
        for ix in 0..self.nx {
            for iy in 0..self.ny {
                let q = ix * self.ny + iy;
                for i in 0..p {
                    let v = fields[i][ix * self.m2 + iy] * scale;
                    re[q * p + i] = v.re;
                    im[q * p + i] = v.im;
                }
            }
        }
        let names = SpatialDataset::default_names(p);
        Ok((
            SpatialDataset::new(2, self.coords.clone(), re, names.clone())?,
            SpatialDataset::new(2, self.coords.clone(), im, names)?,
        ))
    }

    pub fn draw(&self, seed: u64, r: u64) -> Result<SpatialDataset> {
        Ok(self.draw_pair(seed, r)?.0)
    }
}

/// Models used by the filtering experiments.
pub mod fixtures {
    use crate::bspline::KnotConfig;
    use crate::model::SemiparamModel;
    use crate::spectral::{FrequencyGrid, MarginalParams, SplineCoherenceSpec};

    /// Oscillating coherence: negative at low and positive at mid frequencies.
    pub fn oscillating_bivariate() -> SemiparamModel {
        let knots = KnotConfig::new(1.0, 4, 4.5).expect("valid knots");
        SemiparamModel {
            d: 2,
            marginals: vec![MarginalParams::new(1.0, 1.0, 1.0); 2],
            coherence: SplineCoherenceSpec::from_vectors(
                knots,
                2,
                vec![vec![-0.99, -0.99, 0.99, 0.99, 0.99, 0.99, -0.99, -0.99]],
            )
            .expect("valid coefficients"),
            grid: FrequencyGrid::new(4.5, 990).expect("valid grid"),
        }
    }

    /// Trivariate model with coherence strongest for pair (2,3), weakest for
    /// (1,3), all slowly increasing in frequency.
    pub fn ordered_trivariate() -> SemiparamModel {
        let knots = KnotConfig::new(1.0, 4, 4.5).expect("valid knots");
        let ramp = |base: f64| -> Vec<f64> {
            (0..knots.n_basis()).map(|k| base * (1.0 + 0.03 * k as f64)).collect()
        };
        // pair order (1,2), (1,3), (2,3)
        let coeffs = vec![ramp(0.5), ramp(0.15), ramp(0.65)];
        SemiparamModel {
            d: 2,
            marginals: vec![
                MarginalParams::new(1.0, 1.0, 1.0),
                MarginalParams::new(1.0, 2.0, 0.5),
                MarginalParams::new(1.0, 2.5, 0.4),
            ],
            coherence: SplineCoherenceSpec::from_vectors(knots, 3, coeffs).expect("valid coefficients"),
            grid: FrequencyGrid::new(4.5, 990).expect("valid grid"),
        }
    }
}
