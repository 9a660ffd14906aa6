//! Gaussian kernel intensity estimation with edge correction.
//!
//! All four estimators share one set of per-point kernel factors evaluated on
//! the grid: `a_i(s) = k_ε(c_s − u_i) / C_W(u_i)` over spatial cells and
//! `b_i(t) = k_δ(t − t_i) / C_T(t_i)` over time slices. Then
//!
//! ```text
//! ρ_space(s)  = Σ_i a_i(s)
//! ρ_time(t)   = Σ_i b_i(t)
//! ρ(s, t)     = Σ_i a_i(s) b_i(t)
//! ρ_sep(s, t) = ρ_space(s) ρ_time(t) / n
//! ```
//!
//! Kernel evaluation is truncated at [`TRUNCATION`] bandwidths per coordinate.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Grid3, PointPattern, Window};
use crate::parallel;
use crate::util::{quantile_sorted, sample_sd, sorted_copy};

/// Kernel support used for evaluation, in bandwidths.
pub const TRUNCATION: f64 = 8.0;

/// Refinement factor of the edge-correction quadrature relative to the
/// evaluation grid.
pub const QUADRATURE_REFINEMENT: usize = 4;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Isotropic Gaussian density `k(v / b) / b^d` for `d = v.len()` in {1, 2}.
pub fn gaussian_kernel(v: &[f64], b: f64) -> Result<f64> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {b}")));
    }
    let d = v.len();
    if d != 1 && d != 2 {
        return Err(Error::InvalidParameter(format!("kernel dimension must be 1 or 2, got {d}")));
    }
    let r2: f64 = v.iter().map(|x| x * x).sum::<f64>() / (b * b);
    let norm = (2.0 * PI).powf(d as f64 / 2.0) * b.powi(d as i32);
    Ok((-0.5 * r2).exp() / norm)
}

#[inline]
fn k1(v: f64, b: f64) -> f64 {
    let z = v / b;
    if z.abs() > TRUNCATION {
        0.0
    } else {
        INV_SQRT_2PI / b * (-0.5 * z * z).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthMethod {
    Fixed,
    RuleOfThumb,
    LikelihoodCv,
}

/// Spatial bandwidth `epsilon` and temporal bandwidth `delta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub epsilon: f64,
    pub delta: f64,
    pub method: BandwidthMethod,
}

impl Bandwidths {
    pub fn fixed(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && delta > 0.0 && epsilon.is_finite() && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bandwidths must be positive, got epsilon={epsilon}, delta={delta}"
            )));
        }
        Ok(Self {
            epsilon,
            delta,
            method: BandwidthMethod::Fixed,
        })
    }

    /// Selects both bandwidths from the data.
    pub fn select(pattern: &PointPattern, method: BandwidthMethod) -> Result<Self> {
        if method == BandwidthMethod::Fixed {
            return Err(Error::InvalidParameter("fixed bandwidths need explicit values".into()));
        }
        Ok(Self {
            epsilon: select_bandwidth(pattern, Axis::Space, method)?,
            delta: select_bandwidth(pattern, Axis::Time, method)?,
            method,
        })
    }
}

/// Midpoint quadrature lattice over the spatial window.
#[derive(Clone, Debug)]
pub struct SpatialQuadrature {
    xs: Vec<f64>,
    ys: Vec<f64>,
    inside: Vec<bool>,
    full: bool,
    cell_area: f64,
}

impl SpatialQuadrature {
    pub fn new(window: &Window, nx: usize, ny: usize) -> Result<Self> {
        if nx < 10 || ny < 10 {
            return Err(Error::InsufficientQuadrature(nx, ny));
        }
        let [x0, x1, y0, y1] = window.bbox();
        let hx = (x1 - x0) / nx as f64;
        let hy = (y1 - y0) / ny as f64;
        let xs: Vec<f64> = (0..nx).map(|i| x0 + (i as f64 + 0.5) * hx).collect();
        let ys: Vec<f64> = (0..ny).map(|i| y0 + (i as f64 + 0.5) * hy).collect();
        let full = window.is_rect();
        let inside = if full {
            vec![true; nx * ny]
        } else {
            ys.iter()
                .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
                .map(|(x, y)| window.contains_xy(x, y))
                .collect()
        };
        Ok(Self {
            xs,
            ys,
            inside,
            full,
            cell_area: hx * hy,
        })
    }

    /// Refinement of an evaluation grid by [`QUADRATURE_REFINEMENT`].
    pub fn for_grid(window: &Window, grid: &Grid3) -> Result<Self> {
        let f = QUADRATURE_REFINEMENT;
        Self::new(window, (grid.nx() * f).max(10), (grid.ny() * f).max(10))
    }

    /// `C_{W,ε}(u) = ∫_W k_ε(v − u) dv`, clamped to at most 1.
    pub fn correction(&self, x: f64, y: f64, epsilon: f64) -> f64 {
        let kx: Vec<f64> = self.xs.iter().map(|&c| k1(c - x, epsilon)).collect();
        let ky: Vec<f64> = self.ys.iter().map(|&c| k1(c - y, epsilon)).collect();
        let c = if self.full {
            kx.iter().sum::<f64>() * ky.iter().sum::<f64>() * self.cell_area
        } else {
            let nx = self.xs.len();
            let mut acc = 0.0;
            for (iy, &wy) in ky.iter().enumerate() {
                if wy == 0.0 {
                    continue;
                }
                let row = &self.inside[iy * nx..(iy + 1) * nx];
                let s: f64 = kx.iter().zip(row).filter(|(_, &ins)| ins).map(|(w, _)| *w).sum();
                acc += wy * s;
            }
            acc * self.cell_area
        };
        c.min(1.0)
    }
}

/// Midpoint quadrature over the time interval.
#[derive(Clone, Debug)]
pub struct TemporalQuadrature {
    ts: Vec<f64>,
    dt: f64,
}

impl TemporalQuadrature {
    pub fn new(window: &Window, nt: usize) -> Result<Self> {
        if nt < 10 {
            return Err(Error::InsufficientQuadrature(nt, 1));
        }
        let (t0, t1) = window.time_range();
        let dt = (t1 - t0) / nt as f64;
        Ok(Self {
            ts: (0..nt).map(|i| t0 + (i as f64 + 0.5) * dt).collect(),
            dt,
        })
    }

    pub fn for_grid(window: &Window, grid: &Grid3) -> Result<Self> {
        Self::new(window, (grid.nt() * QUADRATURE_REFINEMENT).max(10))
    }

    /// `C_{T,δ}(t) = ∫_T k_δ(s − t) ds`, clamped to at most 1.
    pub fn correction(&self, t: f64, delta: f64) -> f64 {
        (self.ts.iter().map(|&c| k1(c - t, delta)).sum::<f64>() * self.dt).min(1.0)
    }
}

/// Spatial edge-correction factor at `(x, y)` using an `nx x ny` quadrature.
pub fn edge_correction_space(
    x: f64,
    y: f64,
    window: &Window,
    epsilon: f64,
    nx: usize,
    ny: usize,
) -> Result<f64> {
    gaussian_kernel(&[0.0], epsilon)?;
    Ok(SpatialQuadrature::new(window, nx, ny)?.correction(x, y, epsilon))
}

/// Temporal edge-correction factor at `t` using an `nt`-cell quadrature.
pub fn edge_correction_time(t: f64, window: &Window, delta: f64, nt: usize) -> Result<f64> {
    gaussian_kernel(&[0.0], delta)?;
    Ok(TemporalQuadrature::new(window, nt)?.correction(t, delta))
}

/// Edge-corrected kernel estimator that can be evaluated at arbitrary points.
#[derive(Clone, Debug)]
pub struct PointKernels {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ts: Vec<f64>,
    inv_c_space: Vec<f64>,
    inv_c_time: Vec<f64>,
    epsilon: f64,
    delta: f64,
}

fn nonzero_correction(c: f64, what: &str) -> Result<f64> {
    if c > 0.0 {
        Ok(1.0 / c)
    } else {
        Err(Error::InvalidParameter(format!(
            "{what} bandwidth too small for the quadrature grid"
        )))
    }
}

impl PointKernels {
    pub fn new(
        pattern: &PointPattern,
        bw: &Bandwidths,
        space_quad: &SpatialQuadrature,
        time_quad: &TemporalQuadrature,
    ) -> Result<Self> {
        if pattern.is_empty() {
            return Err(Error::EmptyPattern);
        }
        Bandwidths::fixed(bw.epsilon, bw.delta)?;
        let pts = pattern.points();
        let inv_c_space = parallel::map_range(pts.len(), |i| {
            space_quad.correction(pts[i].x, pts[i].y, bw.epsilon)
        })
        .into_iter()
        .map(|c| nonzero_correction(c, "spatial"))
        .collect::<Result<Vec<_>>>()?;
        let inv_c_time = pts
            .iter()
            .map(|p| nonzero_correction(time_quad.correction(p.t, bw.delta), "temporal"))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            xs: pattern.xs(),
            ys: pattern.ys(),
            ts: pattern.ts(),
            inv_c_space,
            inv_c_time,
            epsilon: bw.epsilon,
            delta: bw.delta,
        })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn correction_space(&self, i: usize) -> f64 {
        1.0 / self.inv_c_space[i]
    }

    pub fn correction_time(&self, i: usize) -> f64 {
        1.0 / self.inv_c_time[i]
    }

    /// `ρ̂_space(x, y)`
    pub fn space(&self, x: f64, y: f64) -> f64 {
        let e = self.epsilon;
        (0..self.len())
            .map(|i| k1(x - self.xs[i], e) * k1(y - self.ys[i], e) * self.inv_c_space[i])
            .sum()
    }

    /// `ρ̂_time(t)`
    pub fn time(&self, t: f64) -> f64 {
        (0..self.len())
            .map(|i| k1(t - self.ts[i], self.delta) * self.inv_c_time[i])
            .sum()
    }

    /// Non-separable `ρ̂(x, y, t)`.
    pub fn st(&self, x: f64, y: f64, t: f64) -> f64 {
        let e = self.epsilon;
        (0..self.len())
            .map(|i| {
                k1(t - self.ts[i], self.delta)
                    * k1(x - self.xs[i], e)
                    * k1(y - self.ys[i], e)
                    * self.inv_c_space[i]
                    * self.inv_c_time[i]
            })
            .sum()
    }

    /// `ρ̂_sep(x, y, t) = ρ̂_space(x, y) ρ̂_time(t) / n`.
    pub fn sep(&self, x: f64, y: f64, t: f64) -> f64 {
        self.space(x, y) * self.time(t) / self.len() as f64
    }
}

/// Per-point kernel factors on an evaluation grid.
///
/// The spatial factors are stored cell-major over the inside spatial cells so
/// that the non-separable estimate for any reassignment of times is a single
/// matrix product.
#[derive(Clone, Debug)]
pub struct KernelBasis {
    grid: Grid3,
    n: usize,
    inside_cells: Vec<usize>,
    /// `space[k * n + i] = a_i(inside_cells[k])`
    space: Vec<f64>,
    /// `time[i * nt + t] = b_i(t)`
    time: Vec<f64>,
    rho_space: Vec<f64>,
    rho_time: Vec<f64>,
}

impl KernelBasis {
    pub fn new(pattern: &PointPattern, bw: &Bandwidths, grid: &Grid3) -> Result<Self> {
        let window = pattern.window();
        let sq = SpatialQuadrature::for_grid(window, grid)?;
        let tq = TemporalQuadrature::for_grid(window, grid)?;
        let kernels = PointKernels::new(pattern, bw, &sq, &tq)?;
        Ok(Self::from_kernels(&kernels, grid))
    }

    pub fn from_kernels(kernels: &PointKernels, grid: &Grid3) -> Self {
        let n = kernels.len();
        let nt = grid.nt();
        let (eps, delta) = (kernels.epsilon, kernels.delta);
        let inside_cells: Vec<usize> = (0..grid.n_spatial()).filter(|&s| grid.inside(s)).collect();
        let gx = grid.xs();
        let gy = grid.ys();
        // separable per-point factors along each axis
        let kx: Vec<f64> = (0..n)
            .flat_map(|i| gx.iter().map(move |&c| (i, c)))
            .map(|(i, c)| k1(c - kernels.xs[i], eps))
            .collect();
        let ky: Vec<f64> = (0..n)
            .flat_map(|i| gy.iter().map(move |&c| (i, c)))
            .map(|(i, c)| k1(c - kernels.ys[i], eps) * kernels.inv_c_space[i])
            .collect();
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut space = vec![0.0; inside_cells.len() * n];
        parallel::for_each_chunk_mut(&mut space, n, |k, row| {
            let (ix, iy) = grid.spatial_coords(inside_cells[k]);
            for (i, v) in row.iter_mut().enumerate() {
                *v = kx[i * nx + ix] * ky[i * ny + iy];
            }
        });
        let gt = grid.ts();
        let mut time = vec![0.0; n * nt];
        for i in 0..n {
            for (it, &c) in gt.iter().enumerate() {
                time[i * nt + it] = k1(c - kernels.ts[i], delta) * kernels.inv_c_time[i];
            }
        }
        let mut rho_space = vec![0.0; grid.n_spatial()];
        for (k, &s) in inside_cells.iter().enumerate() {
            rho_space[s] = space[k * n..(k + 1) * n].iter().sum();
        }
        let mut rho_time = vec![0.0; nt];
        for i in 0..n {
            for it in 0..nt {
                rho_time[it] += time[i * nt + it];
            }
        }
        Self {
            grid: grid.clone(),
            n,
            inside_cells,
            space,
            time,
            rho_space,
            rho_time,
        }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rho_space(&self) -> &[f64] {
        &self.rho_space
    }

    pub fn rho_time(&self) -> &[f64] {
        &self.rho_time
    }

    /// `ρ̂_sep` over all space-time cells (zero outside `W`).
    pub fn rho_sep(&self) -> Vec<f64> {
        let nt = self.grid.nt();
        let n = self.n as f64;
        let mut out = vec![0.0; self.grid.n_cells()];
        for &s in &self.inside_cells {
            for it in 0..nt {
                out[s * nt + it] = self.rho_space[s] * self.rho_time[it] / n;
            }
        }
        out
    }

    /// Non-separable estimate with point `i` carrying the time of point
    /// `time_of[i]` (identity when `None`).
    pub fn rho_st(&self, time_of: Option<&[usize]>) -> Vec<f64> {
        let n = self.n;
        let nt = self.grid.nt();
        let m = self.inside_cells.len();
        let b: Vec<f64> = match time_of {
            None => self.time.clone(),
            Some(order) => {
                assert_eq!(order.len(), n, "time assignment must cover every point");
                let mut b = vec![0.0; n * nt];
                for (i, &j) in order.iter().enumerate() {
                    b[i * nt..(i + 1) * nt].copy_from_slice(&self.time[j * nt..(j + 1) * nt]);
                }
                b
            }
        };
        let mut c = vec![0.0; m * nt];
        // SAFETY: slices have the exact extents described by the strides.
        unsafe {
            matrixmultiply::dgemm(
                m,
                n,
                nt,
                1.0,
                self.space.as_ptr(),
                n as isize,
                1,
                b.as_ptr(),
                nt as isize,
                1,
                0.0,
                c.as_mut_ptr(),
                nt as isize,
                1,
            );
        }
        if m == self.grid.n_spatial() {
            return c;
        }
        let mut out = vec![0.0; self.grid.n_cells()];
        for (k, &s) in self.inside_cells.iter().enumerate() {
            out[s * nt..(s + 1) * nt].copy_from_slice(&c[k * nt..(k + 1) * nt]);
        }
        out
    }

    pub fn field(&self) -> IntensityField {
        IntensityField {
            grid: self.grid.clone(),
            n: self.n,
            rho_st: self.rho_st(None),
            rho_space: self.rho_space.clone(),
            rho_time: self.rho_time.clone(),
            rho_sep: self.rho_sep(),
        }
    }
}

/// Edge-corrected kernel factors of single points on a fixed grid.
#[derive(Clone, Debug)]
pub struct GridKernel {
    grid: Grid3,
    sq: SpatialQuadrature,
    tq: TemporalQuadrature,
    epsilon: f64,
    delta: f64,
}

impl GridKernel {
    pub fn new(window: &Window, grid: &Grid3, bw: &Bandwidths) -> Result<Self> {
        Bandwidths::fixed(bw.epsilon, bw.delta)?;
        Ok(Self {
            grid: grid.clone(),
            sq: SpatialQuadrature::for_grid(window, grid)?,
            tq: TemporalQuadrature::for_grid(window, grid)?,
            epsilon: bw.epsilon,
            delta: bw.delta,
        })
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    /// `(a(s), b(t))` for a point at `(x, y, t)`: the spatial factor over all
    /// spatial cells (zero outside `W`) and the temporal factor per slice.
    pub fn factors(&self, x: f64, y: f64, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let g = &self.grid;
        let inv_cs = nonzero_correction(self.sq.correction(x, y, self.epsilon), "spatial")?;
        let inv_ct = nonzero_correction(self.tq.correction(t, self.delta), "temporal")?;
        let kx: Vec<f64> = g.xs().iter().map(|&c| k1(c - x, self.epsilon)).collect();
        let ky: Vec<f64> = g.ys().iter().map(|&c| k1(c - y, self.epsilon) * inv_cs).collect();
        let mut a = vec![0.0; g.n_spatial()];
        for (s, v) in a.iter_mut().enumerate() {
            if g.inside(s) {
                let (ix, iy) = g.spatial_coords(s);
                *v = kx[ix] * ky[iy];
            }
        }
        let b = g.ts().iter().map(|&c| k1(c - t, self.delta) * inv_ct).collect();
        Ok((a, b))
    }
}

/// The four intensity estimates on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityField {
    pub grid: Grid3,
    /// Number of points the field was estimated from.
    pub n: usize,
    /// `ρ̂(u, t)` per space-time cell.
    pub rho_st: Vec<f64>,
    /// `ρ̂_space(u)` per spatial cell.
    pub rho_space: Vec<f64>,
    /// `ρ̂_time(t)` per time slice.
    pub rho_time: Vec<f64>,
    /// `ρ̂_sep(u, t)` per space-time cell.
    pub rho_sep: Vec<f64>,
}

impl IntensityField {
    /// Quadrature masses `(ρ̂, ρ̂_space, ρ̂_time, ρ̂_sep)` over inside cells.
    pub fn masses(&self) -> [f64; 4] {
        let g = &self.grid;
        let nt = g.nt();
        let mut st = 0.0;
        let mut sep = 0.0;
        let mut sp = 0.0;
        for s in (0..g.n_spatial()).filter(|&s| g.inside(s)) {
            sp += self.rho_space[s];
            for it in 0..nt {
                st += self.rho_st[s * nt + it];
                sep += self.rho_sep[s * nt + it];
            }
        }
        let tm: f64 = self.rho_time.iter().sum();
        [
            st * g.cell_volume(),
            sp * g.cell_area(),
            tm * g.cell_length(),
            sep * g.cell_volume(),
        ]
    }
}

pub fn estimate_field(pattern: &PointPattern, bw: &Bandwidths, grid: &Grid3) -> Result<IntensityField> {
    Ok(KernelBasis::new(pattern, bw, grid)?.field())
}

/// `ρ̂_space` at each spatial grid cell center.
pub fn estimate_rho_space(pattern: &PointPattern, epsilon: f64, grid: &Grid3) -> Result<Vec<f64>> {
    let bw = Bandwidths::fixed(epsilon, 1.0)?;
    Ok(KernelBasis::new(pattern, &bw, grid)?.rho_space)
}

/// `ρ̂_time` at each time-slice center.
pub fn estimate_rho_time(pattern: &PointPattern, delta: f64, grid: &Grid3) -> Result<Vec<f64>> {
    if pattern.is_empty() {
        return Err(Error::EmptyPattern);
    }
    Bandwidths::fixed(1.0, delta)?;
    let tq = TemporalQuadrature::for_grid(pattern.window(), grid)?;
    let ts = grid.ts();
    let inv_c: Vec<f64> = pattern
        .points()
        .iter()
        .map(|p| nonzero_correction(tq.correction(p.t, delta), "temporal"))
        .collect::<Result<_>>()?;
    Ok(ts
        .iter()
        .map(|&c| {
            pattern
                .points()
                .iter()
                .zip(&inv_c)
                .map(|(p, w)| k1(c - p.t, delta) * w)
                .sum()
        })
        .collect())
}

/// Non-separable `ρ̂(u, t)` per space-time cell.
pub fn estimate_rho_st(pattern: &PointPattern, bw: &Bandwidths, grid: &Grid3) -> Result<Vec<f64>> {
    Ok(KernelBasis::new(pattern, bw, grid)?.rho_st(None))
}

/// Separable `ρ̂_space(u) ρ̂_time(t) / n` per space-time cell.
pub fn estimate_rho_sep(pattern: &PointPattern, bw: &Bandwidths, grid: &Grid3) -> Result<Vec<f64>> {
    Ok(KernelBasis::new(pattern, bw, grid)?.rho_sep())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Conditioning {
    /// `ρ̂(u | t) = ρ̂(u, t) / ρ̂_time(t)`
    SpaceGivenTime,
    /// `ρ̂(t | u) = ρ̂(u, t) / ρ̂_space(u)`
    TimeGivenSpace,
}

/// Conditional intensity per space-time cell; `None` where the cell is
/// outside `W` or the denominator vanishes.
pub fn conditional_intensity(field: &IntensityField, mode: Conditioning) -> Vec<Option<f64>> {
    let g = &field.grid;
    let nt = g.nt();
    (0..g.n_cells())
        .map(|c| {
            let (s, it) = (c / nt, c % nt);
            if !g.inside(s) {
                return None;
            }
            let den = match mode {
                Conditioning::SpaceGivenTime => field.rho_time[it],
                Conditioning::TimeGivenSpace => field.rho_space[s],
            };
            (den > 0.0).then(|| field.rho_st[c] / den)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Space,
    Time,
}

/// `0.9 · min(sd, IQR / 1.34) · m^(-1/5)`
pub fn rule_of_thumb(values: &[f64]) -> Result<f64> {
    let sorted = sorted_copy(values);
    if sorted.first() == sorted.last() {
        return Err(Error::DegenerateCoordinates);
    }
    let sd = sample_sd(values);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * spread * (values.len() as f64).powf(-0.2))
}

/// 20 log-spaced bandwidths on `[range / 200, range / 2]`.
pub fn cv_bandwidth_grid(range: f64) -> Vec<f64> {
    let (lo, hi) = ((range / 200.0).ln(), (range / 2.0).ln());
    (0..20).map(|k| (lo + (hi - lo) * k as f64 / 19.0).exp()).collect()
}

/// Leave-one-out log-likelihood `Σ_i log Σ_{j≠i} k_δ(t_i − t_j) / C_T(t_j)`.
pub fn loo_loglik_time(ts: &[f64], window: &Window, delta: f64) -> Result<f64> {
    let tq = TemporalQuadrature::new(window, 1000)?;
    let inv_c: Vec<f64> = ts
        .iter()
        .map(|&t| nonzero_correction(tq.correction(t, delta), "temporal"))
        .collect::<Result<_>>()?;
    let terms = parallel::map_range(ts.len(), |i| {
        let s: f64 = (0..ts.len())
            .filter(|&j| j != i)
            .map(|j| k1(ts[i] - ts[j], delta) * inv_c[j])
            .sum();
        s.ln()
    });
    Ok(terms.into_iter().sum())
}

/// Spatial analogue of [`loo_loglik_time`] with the 2-D kernel.
pub fn loo_loglik_space(xs: &[f64], ys: &[f64], window: &Window, epsilon: f64) -> Result<f64> {
    let sq = SpatialQuadrature::new(window, 100, 100)?;
    let inv_c: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| nonzero_correction(sq.correction(x, y, epsilon), "spatial"))
        .collect::<Result<_>>()?;
    let terms = parallel::map_range(xs.len(), |i| {
        let s: f64 = (0..xs.len())
            .filter(|&j| j != i)
            .map(|j| k1(xs[i] - xs[j], epsilon) * k1(ys[i] - ys[j], epsilon) * inv_c[j])
            .sum();
        s.ln()
    });
    Ok(terms.into_iter().sum())
}

fn argmax_cv(grid: &[f64], mut score: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let mut best = (f64::NEG_INFINITY, grid[grid.len() - 1]);
    for &b in grid {
        let v = score(b)?;
        if v > best.0 {
            best = (v, b);
        }
    }
    Ok(best.1)
}

fn range_of(values: &[f64]) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

/// Data-driven bandwidth for one axis. Spatial rule-of-thumb averages the
/// per-coordinate values.
pub fn select_bandwidth(pattern: &PointPattern, axis: Axis, method: BandwidthMethod) -> Result<f64> {
    if pattern.len() < 10 {
        return Err(Error::InvalidParameter(format!(
            "bandwidth selection needs at least 10 points, got {}",
            pattern.len()
        )));
    }
    let window = pattern.window();
    match (axis, method) {
        (_, BandwidthMethod::Fixed) => Err(Error::InvalidParameter(
            "fixed bandwidths need explicit values".into(),
        )),
        (Axis::Time, BandwidthMethod::RuleOfThumb) => rule_of_thumb(&pattern.ts()),
        (Axis::Space, BandwidthMethod::RuleOfThumb) => {
            Ok(0.5 * (rule_of_thumb(&pattern.xs())? + rule_of_thumb(&pattern.ys())?))
        }
        (Axis::Time, BandwidthMethod::LikelihoodCv) => {
            let ts = pattern.ts();
            let range = range_of(&ts);
            if range <= 0.0 {
                return Err(Error::DegenerateCoordinates);
            }
            argmax_cv(&cv_bandwidth_grid(range), |d| loo_loglik_time(&ts, window, d))
        }
        (Axis::Space, BandwidthMethod::LikelihoodCv) => {
            let (xs, ys) = (pattern.xs(), pattern.ys());
            let range = 0.5 * (range_of(&xs) + range_of(&ys));
            if range_of(&xs) <= 0.0 || range_of(&ys) <= 0.0 {
                return Err(Error::DegenerateCoordinates);
            }
            argmax_cv(&cv_bandwidth_grid(range), |e| loo_loglik_space(&xs, &ys, window, e))
        }
    }
}
