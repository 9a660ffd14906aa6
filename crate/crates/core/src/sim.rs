//! Simulators: the burst model by independent thinning and log-Gaussian Cox
//! processes on a grid.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::geometry::{build_grid, Grid3, Point, PointPattern, Window};

const JITTER: f64 = 1e-10;
const SCAN_POINTS: usize = 20;
const SCAN_HEADROOM: f64 = 1.05;

fn normal_density(v: f64, mean: f64, sd: f64) -> f64 {
    let z = (v - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

/// Mass of `N(mean, sd²)` on `[0, 1]`.
fn unit_interval_mass(mean: f64, sd: f64) -> f64 {
    let s = sd * std::f64::consts::SQRT_2;
    0.5 * (erf((1.0 - mean) / s) - erf((0.0 - mean) / s))
}

/// Baseline densities `ξ(u)` and `ψ(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseCase {
    /// `ξ = 1`, `ψ = 1`
    I,
    /// `ξ = 1`, `ψ` normal in time
    II,
    /// `ξ` normal in space, `ψ = 1`
    III,
    /// both normal
    IV,
}

impl BaseCase {
    pub const ALL: [BaseCase; 4] = [BaseCase::I, BaseCase::II, BaseCase::III, BaseCase::IV];

    fn spatial_normal(self) -> bool {
        matches!(self, BaseCase::III | BaseCase::IV)
    }

    fn temporal_normal(self) -> bool {
        matches!(self, BaseCase::II | BaseCase::IV)
    }

    pub fn tag(self) -> &'static str {
        match self {
            BaseCase::I => "i",
            BaseCase::II => "ii",
            BaseCase::III => "iii",
            BaseCase::IV => "iv",
        }
    }
}

impl fmt::Display for BaseCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for BaseCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(BaseCase::I),
            "ii" | "2" => Ok(BaseCase::II),
            "iii" | "3" => Ok(BaseCase::III),
            "iv" | "4" => Ok(BaseCase::IV),
            other => Err(Error::InvalidParameter(format!("unknown base case {other:?}"))),
        }
    }
}

/// `ρ(u,t) = (ν − γ) ξ(u) ψ(t) + γ φ_{μ,Σ}(u,t)` on the unit cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurstModel {
    pub nu: f64,
    pub gamma: f64,
    pub case: BaseCase,
    /// Standard deviation of the normal baseline densities.
    pub base_sd: f64,
    pub burst_mean: [f64; 3],
    /// Per-axis standard deviation of the burst.
    pub burst_sd: f64,
}

pub const BASE_MEAN: f64 = 0.5;
pub const DEFAULT_BASE_SD: f64 = 0.2;
pub const DEFAULT_BURST_MEAN: [f64; 3] = [0.3, 0.3, 0.2];
pub const DEFAULT_BURST_SD: f64 = 0.05;

impl BurstModel {
    pub fn new(case: BaseCase, nu: f64, gamma: f64) -> Result<Self> {
        let m = Self {
            nu,
            gamma,
            case,
            base_sd: DEFAULT_BASE_SD,
            burst_mean: DEFAULT_BURST_MEAN,
            burst_sd: DEFAULT_BURST_SD,
        };
        m.validate()?;
        Ok(m)
    }

    /// Chooses `ν` so that the expected count on the unit cube equals `target`.
    pub fn for_target(case: BaseCase, gamma: f64, target: f64) -> Result<Self> {
        Self::for_target_with(case, gamma, target, DEFAULT_BASE_SD, DEFAULT_BURST_SD)
    }

    pub fn for_target_with(case: BaseCase, gamma: f64, target: f64, base_sd: f64, burst_sd: f64) -> Result<Self> {
        if !(target > 0.0 && target.is_finite()) {
            return Err(Error::InvalidParameter(format!("target count must be positive, got {target}")));
        }
        let mut m = Self {
            nu: 0.0,
            gamma,
            case,
            base_sd,
            burst_mean: DEFAULT_BURST_MEAN,
            burst_sd,
        };
        if !(base_sd > 0.0 && burst_sd > 0.0) {
            return Err(Error::InvalidParameter("standard deviations must be positive".into()));
        }
        // expected count is affine in ν
        let base = m.base_mass();
        m.nu = gamma + (target - gamma * m.burst_mass()) / base;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::InvalidParameter(format!("nu must be positive, got {}", self.nu)));
        }
        if !(self.gamma >= 0.0 && self.gamma <= self.nu / 2.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in [0, nu/2] = [0, {}], got {}",
                self.nu / 2.0,
                self.gamma
            )));
        }
        if !(self.base_sd > 0.0 && self.burst_sd > 0.0) {
            return Err(Error::InvalidParameter("standard deviations must be positive".into()));
        }
        Ok(())
    }

    pub fn xi(&self, x: f64, y: f64) -> f64 {
        if self.case.spatial_normal() {
            normal_density(x, BASE_MEAN, self.base_sd) * normal_density(y, BASE_MEAN, self.base_sd)
        } else {
            1.0
        }
    }

    pub fn psi(&self, t: f64) -> f64 {
        if self.case.temporal_normal() {
            normal_density(t, BASE_MEAN, self.base_sd)
        } else {
            1.0
        }
    }

    pub fn burst(&self, x: f64, y: f64, t: f64) -> f64 {
        let [mx, my, mt] = self.burst_mean;
        normal_density(x, mx, self.burst_sd) * normal_density(y, my, self.burst_sd) * normal_density(t, mt, self.burst_sd)
    }

    pub fn intensity(&self, x: f64, y: f64, t: f64) -> f64 {
        (self.nu - self.gamma) * self.xi(x, y) * self.psi(t) + self.gamma * self.burst(x, y, t)
    }

    /// `∫ ξ ψ` over the unit cube.
    pub fn base_mass(&self) -> f64 {
        let s = if self.case.spatial_normal() {
            unit_interval_mass(BASE_MEAN, self.base_sd).powi(2)
        } else {
            1.0
        };
        let t = if self.case.temporal_normal() {
            unit_interval_mass(BASE_MEAN, self.base_sd)
        } else {
            1.0
        };
        s * t
    }

    /// `∫ φ_{μ,Σ}` over the unit cube.
    pub fn burst_mass(&self) -> f64 {
        self.burst_mean
            .iter()
            .map(|&m| unit_interval_mass(m, self.burst_sd))
            .product()
    }

    pub fn expected_count(&self) -> f64 {
        (self.nu - self.gamma) * self.base_mass() + self.gamma * self.burst_mass()
    }

    /// Sum of the term maxima, an upper bound of `ρ` on the cube.
    pub fn rho_max(&self) -> f64 {
        let xi_max = if self.case.spatial_normal() {
            normal_density(BASE_MEAN, BASE_MEAN, self.base_sd).powi(2)
        } else {
            1.0
        };
        let psi_max = if self.case.temporal_normal() {
            normal_density(BASE_MEAN, BASE_MEAN, self.base_sd)
        } else {
            1.0
        };
        let burst_max = normal_density(0.0, 0.0, self.burst_sd).powi(3);
        (self.nu - self.gamma) * xi_max * psi_max + self.gamma * burst_max
    }

    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PointPattern> {
        simulate_thinned_poisson(|x, y, t| self.intensity(x, y, t), self.rho_max(), &Window::unit_cube(), rng)
    }
}

/// Grid scan of `ρ` over the window's bounding box; returns the largest
/// value found at an inside point.
pub fn scan_max<F: Fn(f64, f64, f64) -> f64>(rho: &F, window: &Window) -> f64 {
    let [x0, x1, y0, y1] = window.bbox();
    let (t0, t1) = window.time_range();
    let at = |a: f64, b: f64, k: usize| a + (b - a) * k as f64 / (SCAN_POINTS - 1) as f64;
    let mut best = 0.0f64;
    for i in 0..SCAN_POINTS {
        for j in 0..SCAN_POINTS {
            let (x, y) = (at(x0, x1, i), at(y0, y1, j));
            if !window.contains_xy(x, y) {
                continue;
            }
            for k in 0..SCAN_POINTS {
                best = best.max(rho(x, y, at(t0, t1, k)));
            }
        }
    }
    best
}

/// Dominating rate from a grid scan with 5% headroom.
pub fn dominating_rate<F: Fn(f64, f64, f64) -> f64>(rho: &F, window: &Window) -> f64 {
    SCAN_HEADROOM * scan_max(rho, window)
}

/// Homogeneous Poisson process of intensity `rate` in the window.
pub fn simulate_homogeneous<R: Rng + ?Sized>(rate: f64, window: &Window, rng: &mut R) -> Result<Vec<Point>> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::InvalidParameter(format!("rate must be finite and nonnegative, got {rate}")));
    }
    let [x0, x1, y0, y1] = window.bbox();
    let (t0, t1) = window.time_range();
    let mean = rate * (x1 - x0) * (y1 - y0) * (t1 - t0);
    let count = draw_poisson(mean, rng)?;
    let mut pts = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let p = Point::new(
            rng.random_range(x0..=x1),
            rng.random_range(y0..=y1),
            rng.random_range(t0..=t1),
        );
        if window.contains_xy(p.x, p.y) {
            pts.push(p);
        }
    }
    Ok(pts)
}

fn draw_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::InvalidParameter(format!("poisson mean {mean}: {e}")))?;
    Ok(d.sample(rng) as u64)
}

/// Independent thinning of a homogeneous Poisson(`rho_max`) pattern with
/// retention probability `ρ / rho_max`.
pub fn simulate_thinned_poisson<F, R>(rho: F, rho_max: f64, window: &Window, rng: &mut R) -> Result<PointPattern>
where
    F: Fn(f64, f64, f64) -> f64,
    R: Rng + ?Sized,
{
    let found = scan_max(&rho, window);
    if found > rho_max {
        return Err(Error::InvalidDominatingRate { found, bound: rho_max });
    }
    let mut kept = Vec::new();
    for p in simulate_homogeneous(rho_max, window, rng)? {
        let r = rho(p.x, p.y, p.t);
        if r > rho_max {
            return Err(Error::InvalidDominatingRate { found: r, bound: rho_max });
        }
        if rng.random::<f64>() * rho_max < r {
            kept.push(p);
        }
    }
    PointPattern::new(kept, window.clone())
}

/// Lower Cholesky factor; retries with `1e-10` diagonal jitter when the
/// matrix is numerically indefinite.
pub fn cholesky_lower(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = cov.clone().cholesky() {
        return Ok(c.l());
    }
    let n = cov.nrows();
    let jittered = cov + DMatrix::<f64>::identity(n, n) * JITTER;
    jittered.cholesky().map(|c| c.l()).ok_or(Error::CovarianceNotPd)
}

/// `C₁(u₁, u₂) = exp(−‖u₁ − u₂‖² / φ₁)` on the listed locations.
pub fn gaussian_covariance(locations: &[[f64; 2]], phi1: f64) -> DMatrix<f64> {
    let n = locations.len();
    DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = (locations[i], locations[j]);
        let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
        (-d2 / phi1).exp()
    })
}

/// `C₂(t₁, t₂) = exp(−|t₁ − t₂| / φ₂)` on the listed times.
pub fn exponential_covariance(times: &[f64], phi2: f64) -> DMatrix<f64> {
    let n = times.len();
    DMatrix::from_fn(n, n, |i, j| (-(times[i] - times[j]).abs() / phi2).exp())
}

/// Factors of `C₁ ⊗ C₂`; fields are indexed `s * n2 + t`.
#[derive(Clone, Debug)]
pub struct KroneckerFactor {
    l1: DMatrix<f64>,
    l2: DMatrix<f64>,
}

impl KroneckerFactor {
    pub fn new(cov1: &DMatrix<f64>, cov2: &DMatrix<f64>) -> Result<Self> {
        Ok(Self {
            l1: cholesky_lower(cov1)?,
            l2: cholesky_lower(cov2)?,
        })
    }

    pub fn l1(&self) -> &DMatrix<f64> {
        &self.l1
    }

    pub fn l2(&self) -> &DMatrix<f64> {
        &self.l2
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.l1.nrows(), self.l2.nrows())
    }

    /// `(L₁ ⊗ L₂) ε` computed as `L₁ E L₂ᵀ` with `E[s][t] = ε[s * n2 + t]`.
    pub fn apply(&self, eps: &[f64]) -> Vec<f64> {
        let (n1, n2) = self.dims();
        assert_eq!(eps.len(), n1 * n2, "noise length must match the grid");
        let e = DMatrix::from_row_slice(n1, n2, eps);
        let z = &self.l1 * e * self.l2.transpose();
        let mut out = Vec::with_capacity(n1 * n2);
        for s in 0..n1 {
            out.extend(z.row(s).iter());
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let (n1, n2) = self.dims();
        let eps: Vec<f64> = (0..n1 * n2).map(|_| rng.sample(StandardNormal)).collect();
        self.apply(&eps)
    }

    /// Spatial-only field `L₁ ε`.
    pub fn sample_first<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        sample_factor(&self.l1, rng)
    }

    /// Temporal-only field `L₂ ε`.
    pub fn sample_second<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        sample_factor(&self.l2, rng)
    }
}

fn sample_factor<R: Rng + ?Sized>(l: &DMatrix<f64>, rng: &mut R) -> Vec<f64> {
    let n = l.nrows();
    let eps = nalgebra::DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (l * eps).iter().copied().collect()
}

/// Zero-mean Gaussian field with covariance `C₁ ⊗ C₂`.
pub fn simulate_grf_kronecker<R: Rng + ?Sized>(
    cov1: &DMatrix<f64>,
    cov2: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(KroneckerFactor::new(cov1, cov2)?.sample(rng))
}

/// `log Λ = m(u,t) + σ₁ Z_s + σ₂ Z_t + γ″ Z_st` with
/// `m = β₀ + β₁ (x − t) + γ′ x t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LgcpModel {
    pub beta0: f64,
    pub beta1: f64,
    pub gamma_prime: f64,
    pub gamma_dprime: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub grid: [usize; 3],
}

impl Default for LgcpModel {
    fn default() -> Self {
        Self {
            beta0: 5.05,
            beta1: 0.25,
            gamma_prime: 0.0,
            gamma_dprime: 0.0,
            sigma1: 0.5,
            sigma2: 0.5,
            phi1: 0.06,
            phi2: 0.05,
            grid: [20, 20, 20],
        }
    }
}

impl LgcpModel {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.beta0,
            self.beta1,
            self.gamma_prime,
            self.gamma_dprime,
            self.sigma1,
            self.sigma2,
            self.phi1,
            self.phi2,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("LGCP parameter".into()));
        }
        if self.sigma1 < 0.0 || self.sigma2 < 0.0 || self.gamma_dprime < 0.0 {
            return Err(Error::InvalidParameter("sigma1, sigma2 and gamma'' must be nonnegative".into()));
        }
        if !(self.phi1 > 0.0 && self.phi2 > 0.0) {
            return Err(Error::InvalidParameter("phi1 and phi2 must be positive".into()));
        }
        if self.grid.contains(&0) {
            return Err(Error::InvalidParameter("grid dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn trend(&self, x: f64, t: f64) -> f64 {
        self.beta0 + self.beta1 * (x - t) + self.gamma_prime * x * t
    }
}

/// Precomputed factors for repeated LGCP draws on the unit cube.
#[derive(Clone, Debug)]
pub struct LgcpSimulator {
    model: LgcpModel,
    grid: Grid3,
    factor: KroneckerFactor,
}

impl LgcpSimulator {
    pub fn new(model: LgcpModel) -> Result<Self> {
        model.validate()?;
        let [nx, ny, nt] = model.grid;
        let grid = build_grid(&Window::unit_cube(), nx, ny, nt)?;
        let locations: Vec<[f64; 2]> = (0..grid.n_spatial())
            .map(|s| {
                let (x, y) = grid.spatial_center(s);
                [x, y]
            })
            .collect();
        let cov1 = gaussian_covariance(&locations, model.phi1);
        let cov2 = exponential_covariance(&grid.ts(), model.phi2);
        let factor = KroneckerFactor::new(&cov1, &cov2)?;
        Ok(Self { model, grid, factor })
    }

    pub fn model(&self) -> &LgcpModel {
        &self.model
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    /// `log Λ` at the cell centers, indexed like the grid.
    pub fn log_intensity<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = &self.model;
        let nt = self.grid.nt();
        let zs = if m.sigma1 > 0.0 {
            self.factor.sample_first(rng)
        } else {
            vec![0.0; self.grid.n_spatial()]
        };
        let zt = if m.sigma2 > 0.0 {
            self.factor.sample_second(rng)
        } else {
            vec![0.0; nt]
        };
        let zst = if m.gamma_dprime > 0.0 {
            self.factor.sample(rng)
        } else {
            vec![0.0; self.grid.n_cells()]
        };
        let ts = self.grid.ts();
        let mut out = vec![0.0; self.grid.n_cells()];
        for s in 0..self.grid.n_spatial() {
            let (x, _) = self.grid.spatial_center(s);
            for (it, &t) in ts.iter().enumerate() {
                let c = s * nt + it;
                out[c] = m.trend(x, t) + m.sigma1 * zs[s] + m.sigma2 * zt[it] + m.gamma_dprime * zst[c];
            }
        }
        out
    }

    /// Poisson counts per cell with uniform placement, given `log Λ`.
    pub fn points_from_log_intensity<R: Rng + ?Sized>(&self, log_lambda: &[f64], rng: &mut R) -> Result<PointPattern> {
        let g = &self.grid;
        let nt = g.nt();
        let vol = g.cell_volume();
        let (hx, hy, ht) = (g.dx() / 2.0, g.dy() / 2.0, g.dt() / 2.0);
        let mut pts = Vec::new();
        for s in 0..g.n_spatial() {
            let (cx, cy) = g.spatial_center(s);
            for it in 0..nt {
                let lam = log_lambda[s * nt + it].exp();
                if !lam.is_finite() {
                    return Err(Error::NonFinite("LGCP intensity".into()));
                }
                let ct = g.t(it);
                for _ in 0..draw_poisson(lam * vol, rng)? {
                    pts.push(Point::new(
                        rng.random_range(cx - hx..cx + hx),
                        rng.random_range(cy - hy..cy + hy),
                        rng.random_range(ct - ht..ct + ht),
                    ));
                }
            }
        }
        PointPattern::new(pts, Window::unit_cube())
    }

    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PointPattern> {
        let log_lambda = self.log_intensity(rng);
        self.points_from_log_intensity(&log_lambda, rng)
    }
}

/// One LGCP realization on the unit cube.
pub fn simulate_lgcp<R: Rng + ?Sized>(model: &LgcpModel, rng: &mut R) -> Result<PointPattern> {
    LgcpSimulator::new(model.clone())?.simulate(rng)
}

/// Piecewise-constant density on the inside cells of a grid.
#[derive(Clone, Debug)]
pub struct GridDensity {
    grid: Grid3,
    window: Window,
    cells: Vec<usize>,
    cumulative: Vec<f64>,
}

impl GridDensity {
    /// `weights[c]` is proportional to the density on cell `c`; cells outside
    /// `W` are ignored.
    pub fn new(grid: &Grid3, window: &Window, weights: &[f64]) -> Result<Self> {
        if weights.len() != grid.n_cells() {
            return Err(Error::MismatchedGrids);
        }
        let nt = grid.nt();
        let mut cells = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0.0;
        for (c, &w) in weights.iter().enumerate() {
            if !grid.inside(c / nt) {
                continue;
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidParameter(format!("density weight {w} at cell {c}")));
            }
            if w > 0.0 {
                total += w;
                cells.push(c);
                cumulative.push(total);
            }
        }
        if total <= 0.0 {
            return Err(Error::ZeroDensity);
        }
        Ok(Self {
            grid: grid.clone(),
            window: window.clone(),
            cells,
            cumulative,
        })
    }

    /// Uniform density over the inside cells.
    pub fn uniform(grid: &Grid3, window: &Window) -> Result<Self> {
        Self::new(grid, window, &vec![1.0; grid.n_cells()])
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    /// Draws a cell by weight, then a uniform point in it (inside `W`).
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let total = *self.cumulative.last().expect("nonempty density");
        let u = rng.random::<f64>() * total;
        let k = self.cumulative.partition_point(|&c| c <= u).min(self.cells.len() - 1);
        let c = self.cells[k];
        let g = &self.grid;
        let (cx, cy, ct) = g.cell_center(c);
        let (hx, hy, ht) = (g.dx() / 2.0, g.dy() / 2.0, g.dt() / 2.0);
        let t = ct + (2.0 * rng.random::<f64>() - 1.0) * ht;
        for _ in 0..100 {
            let x = cx + (2.0 * rng.random::<f64>() - 1.0) * hx;
            let y = cy + (2.0 * rng.random::<f64>() - 1.0) * hy;
            if self.window.contains_xy(x, y) {
                return Point::new(x, y, t);
            }
        }
        Point::new(cx, cy, t)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Point> {
        (0..n).map(|_| self.sample_point(rng)).collect()
    }
}

/// Poisson cluster process: parents from a grid density, Poisson offspring
/// with independent Gaussian displacements; offspring outside the window are
/// dropped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeymanScott {
    pub parent_mean: f64,
    pub offspring_mean: f64,
    pub sd_space: f64,
    pub sd_time: f64,
}

impl NeymanScott {
    pub fn simulate<R: Rng + ?Sized>(&self, parents: &GridDensity, rng: &mut R) -> Result<PointPattern> {
        if !(self.sd_space > 0.0 && self.sd_time > 0.0) {
            return Err(Error::InvalidParameter("displacement sds must be positive".into()));
        }
        let window = parents.window();
        let mut pts = Vec::new();
        for _ in 0..draw_poisson(self.parent_mean, rng)? {
            let p = parents.sample_point(rng);
            for _ in 0..draw_poisson(self.offspring_mean, rng)? {
                let dx: f64 = rng.sample(StandardNormal);
                let dy: f64 = rng.sample(StandardNormal);
                let dt: f64 = rng.sample(StandardNormal);
                let q = Point::new(
                    p.x + self.sd_space * dx,
                    p.y + self.sd_space * dy,
                    p.t + self.sd_time * dt,
                );
                if window.contains(&q) {
                    pts.push(q);
                }
            }
        }
        PointPattern::new(pts, window.clone())
    }
}
