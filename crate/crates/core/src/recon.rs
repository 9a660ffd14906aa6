//! Stochastic reconstruction of patterns with separable first-order structure
//! and the data's interaction structure, and the Monte Carlo test built on it.
//!
//! The energy compares the square-rooted inhomogeneous space-time `K̂`, the
//! neighbour fractions `D̂_k` and the separable intensity estimate of the data
//! `X` and a candidate `Y`. All three parts are updated in `O(n)` per proposal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_grid, Grid3, Point, PointPattern, Region, Window};
use crate::kernels::{Bandwidths, GridKernel, KernelBasis, PointKernels, SpatialQuadrature, TemporalQuadrature};
use crate::parallel;
use crate::permutation::{assemble_outcomes, replicate_rng, PermTestConfig, TestOutcome};
use crate::sim::GridDensity;
use crate::stats::{evaluate_statistics, EvaluationMask, Statistic};

const OVERLAP_LATTICE: usize = 128;

/// Intensity used to weight pairs of a candidate pattern in `K̂`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KWeighting {
    /// `ρ̂_sep(X)` at the candidate's points.
    #[default]
    Separable,
    /// The data's non-separable `ρ̂(X)` at the candidate's points.
    Data,
}

fn default_n_lag() -> usize {
    20
}

fn default_grid() -> [usize; 3] {
    [20, 20, 20]
}

fn default_seed() -> u64 {
    1
}

/// Energy weights, integration bounds and stopping rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconConfig {
    pub w_k: f64,
    pub w_dk: f64,
    pub w_delta: f64,
    pub t_k: f64,
    pub r_k: f64,
    pub t_d: f64,
    pub r_d: f64,
    pub k_max: usize,
    pub max_iter: usize,
    pub max_consecutive_rejects: usize,
    #[serde(default = "default_n_lag")]
    pub n_lag_r: usize,
    #[serde(default = "default_n_lag")]
    pub n_lag_t: usize,
    /// Grid of the intensity term and of the proposal density.
    #[serde(default = "default_grid")]
    pub grid: [usize; 3],
    #[serde(default)]
    pub k_weighting: KWeighting,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            w_k: 1.0,
            w_dk: 3e3,
            w_delta: 4e5,
            t_k: 12.0,
            r_k: 6.0,
            t_d: 6.0,
            r_d: 3.0,
            k_max: 3,
            max_iter: 100_000,
            max_consecutive_rejects: 100,
            n_lag_r: default_n_lag(),
            n_lag_t: default_n_lag(),
            grid: default_grid(),
            k_weighting: KWeighting::default(),
            seed: default_seed(),
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.w_k, self.w_dk, self.w_delta];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter("energy weights must be finite and nonnegative".into()));
        }
        if weights.iter().all(|&w| w == 0.0) {
            return Err(Error::InvalidParameter("at least one energy weight must be positive".into()));
        }
        if [self.t_k, self.r_k, self.t_d, self.r_d]
            .iter()
            .any(|b| !(b.is_finite() && *b > 0.0))
        {
            return Err(Error::InvalidParameter("integration bounds must be positive".into()));
        }
        if self.k_max == 0 {
            return Err(Error::InvalidParameter("k_max must be at least 1".into()));
        }
        if self.max_consecutive_rejects == 0 {
            return Err(Error::InvalidParameter("max_consecutive_rejects must be at least 1".into()));
        }
        if self.n_lag_r == 0 || self.n_lag_t == 0 || self.grid.contains(&0) {
            return Err(Error::InvalidParameter("lag and grid dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |sp| s[..sp.start].lines().count().max(1)),
            msg: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Midpoint lattice on `[0, r_max] × [0, t_max]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LagGrid {
    rs: Vec<f64>,
    ts: Vec<f64>,
    dr: f64,
    dt: f64,
}

impl LagGrid {
    pub fn new(r_max: f64, t_max: f64, nr: usize, nt: usize) -> Result<Self> {
        if !(r_max > 0.0 && t_max > 0.0) || nr == 0 || nt == 0 {
            return Err(Error::InvalidParameter("lag grid needs positive bounds and sizes".into()));
        }
        let (dr, dt) = (r_max / nr as f64, t_max / nt as f64);
        Ok(Self {
            rs: (0..nr).map(|a| (a as f64 + 0.5) * dr).collect(),
            ts: (0..nt).map(|b| (b as f64 + 0.5) * dt).collect(),
            dr,
            dt,
        })
    }

    /// Lag grid with explicit evaluation points (ascending).
    pub fn from_points(rs: Vec<f64>, ts: Vec<f64>) -> Result<Self> {
        if rs.is_empty() || ts.is_empty() {
            return Err(Error::InvalidParameter("empty lag grid".into()));
        }
        Ok(Self {
            dr: rs[rs.len() - 1] / rs.len() as f64,
            dt: ts[ts.len() - 1] / ts.len() as f64,
            rs,
            ts,
        })
    }

    pub fn rs(&self) -> &[f64] {
        &self.rs
    }

    pub fn ts(&self) -> &[f64] {
        &self.ts
    }

    pub fn len(&self) -> usize {
        self.rs.len() * self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_area(&self) -> f64 {
        self.dr * self.dt
    }

    pub fn r_max(&self) -> f64 {
        self.rs[self.rs.len() - 1]
    }

    /// First lattice cell `(a, b)` with `r_a ≥ d` and `t_b ≥ |τ|`.
    pub fn bin(&self, d: f64, tau: f64) -> Option<(usize, usize)> {
        let a = self.rs.partition_point(|&r| r < d);
        let b = self.ts.partition_point(|&t| t < tau.abs());
        (a < self.rs.len() && b < self.ts.len()).then_some((a, b))
    }

    fn index(&self, a: usize, b: usize) -> usize {
        a * self.ts.len() + b
    }

    /// Turns per-bin masses into the 2-D cumulative sum.
    fn cumulate(&self, bins: &[f64]) -> Vec<f64> {
        let (nr, nt) = (self.rs.len(), self.ts.len());
        let mut out = bins.to_vec();
        for a in 0..nr {
            for b in 1..nt {
                out[a * nt + b] += out[a * nt + b - 1];
            }
        }
        for a in 1..nr {
            for b in 0..nt {
                out[a * nt + b] += out[(a - 1) * nt + b];
            }
        }
        out
    }
}

/// Translation edge correction `w(h, τ) = |W ∩ W_h| |T ∩ T_τ| / (|W| |T|)`.
#[derive(Clone, Debug)]
pub struct TranslationCorrection {
    area: f64,
    duration: f64,
    space: SpaceOverlap,
}

#[derive(Clone, Debug)]
enum SpaceOverlap {
    Rect { width: f64, height: f64 },
    Table(OverlapTable),
}

/// Set covariance `|W ∩ W_h|` of a polygon on lattice shifts up to a lag
/// bound, with bilinear interpolation.
#[derive(Clone, Debug)]
struct OverlapTable {
    hx: f64,
    hy: f64,
    kx: usize,
    ky: usize,
    values: Vec<f64>,
    window: Window,
}

impl OverlapTable {
    fn new(window: &Window, r_max: f64) -> Self {
        let [x0, x1, y0, y1] = window.bbox();
        let m = OVERLAP_LATTICE;
        let (hx, hy) = ((x1 - x0) / m as f64, (y1 - y0) / m as f64);
        let mut mask = vec![false; m * m];
        for iy in 0..m {
            for ix in 0..m {
                mask[iy * m + ix] = window.contains_xy(x0 + (ix as f64 + 0.5) * hx, y0 + (iy as f64 + 0.5) * hy);
            }
        }
        let kx = ((r_max / hx).ceil() as usize + 1).min(m - 1);
        let ky = ((r_max / hy).ceil() as usize + 1).min(m - 1);
        let (wx, wy) = (2 * kx + 1, 2 * ky + 1);
        let values = parallel::map_range(wx * wy, |k| {
            let sx = (k % wx) as isize - kx as isize;
            let sy = (k / wx) as isize - ky as isize;
            let mut count = 0usize;
            for iy in 0..m as isize {
                let jy = iy - sy;
                if jy < 0 || jy >= m as isize {
                    continue;
                }
                for ix in 0..m as isize {
                    let jx = ix - sx;
                    if jx >= 0 && jx < m as isize && mask[(iy as usize) * m + ix as usize] && mask[jy as usize * m + jx as usize] {
                        count += 1;
                    }
                }
            }
            count as f64 * hx * hy
        });
        Self {
            hx,
            hy,
            kx,
            ky,
            values,
            window: window.clone(),
        }
    }

    fn get(&self, dx: f64, dy: f64) -> f64 {
        let fx = dx / self.hx + self.kx as f64;
        let fy = dy / self.hy + self.ky as f64;
        let (wx, wy) = (2 * self.kx + 1, 2 * self.ky + 1);
        if fx < 0.0 || fy < 0.0 || fx > (wx - 1) as f64 || fy > (wy - 1) as f64 {
            return self.window.overlap_area(dx, dy, OVERLAP_LATTICE);
        }
        let (ix, iy) = ((fx.floor() as usize).min(wx - 2), (fy.floor() as usize).min(wy - 2));
        let (u, v) = (fx - ix as f64, fy - iy as f64);
        let at = |i: usize, j: usize| self.values[j * wx + i];
        (1.0 - u) * (1.0 - v) * at(ix, iy)
            + u * (1.0 - v) * at(ix + 1, iy)
            + (1.0 - u) * v * at(ix, iy + 1)
            + u * v * at(ix + 1, iy + 1)
    }
}

impl TranslationCorrection {
    /// `r_max` bounds the spatial lags that will be queried.
    pub fn new(window: &Window, r_max: f64) -> Self {
        let space = match window.region() {
            Region::Rect {
                xmin,
                xmax,
                ymin,
                ymax,
            } => SpaceOverlap::Rect {
                width: xmax - xmin,
                height: ymax - ymin,
            },
            Region::Polygon(_) => SpaceOverlap::Table(OverlapTable::new(window, r_max)),
        };
        Self {
            area: window.area(),
            duration: window.duration(),
            space,
        }
    }

    pub fn volume(&self) -> f64 {
        self.area * self.duration
    }

    /// `|W ∩ W_h|`
    pub fn space_overlap(&self, dx: f64, dy: f64) -> f64 {
        match &self.space {
            SpaceOverlap::Rect { width, height } => (width - dx.abs()).max(0.0) * (height - dy.abs()).max(0.0),
            SpaceOverlap::Table(t) => t.get(dx, dy),
        }
    }

    pub fn weight(&self, dx: f64, dy: f64, dt: f64) -> f64 {
        let time = (self.duration - dt.abs()).max(0.0);
        self.space_overlap(dx, dy) * time / (self.area * self.duration)
    }
}

fn spatial_distance(p: &Point, q: &Point) -> f64 {
    ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt()
}

/// Contribution of the ordered pairs `(i, j)` and `(j, i)` to `K̂`.
fn pair_mass(p: &Point, q: &Point, wp: f64, wq: f64, corr: &TranslationCorrection) -> f64 {
    let w = corr.weight(p.x - q.x, p.y - q.y, p.t - q.t);
    if w > 0.0 {
        2.0 / (wp * wq * w * corr.volume())
    } else {
        0.0
    }
}

fn check_intensities(intensities: &[f64]) -> Result<()> {
    match intensities.iter().position(|&r| !(r > 0.0 && r.is_finite())) {
        Some(i) => Err(Error::ZeroIntensity(i)),
        None => Ok(()),
    }
}

/// `K̂(r, t) = Σ_{i≠j} 1{‖u_i − u_j‖ ≤ r, |t_i − t_j| ≤ t} / (|W×T| ρ_i ρ_j w_ij)`
/// on the lag lattice (index `a * n_t + b`).
pub fn k_st_with(points: &[Point], intensities: &[f64], corr: &TranslationCorrection, lags: &LagGrid) -> Result<Vec<f64>> {
    assert_eq!(points.len(), intensities.len(), "one intensity per point");
    check_intensities(intensities)?;
    let mut bins = vec![0.0; lags.len()];
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let (p, q) = (&points[i], &points[j]);
            if let Some((a, b)) = lags.bin(spatial_distance(p, q), p.t - q.t) {
                bins[lags.index(a, b)] += pair_mass(p, q, intensities[i], intensities[j], corr);
            }
        }
    }
    Ok(lags.cumulate(&bins))
}

/// Inhomogeneous space-time `K̂` with translation edge correction.
pub fn estimate_k_st(pattern: &PointPattern, intensities: &[f64], lags: &LagGrid) -> Result<Vec<f64>> {
    let corr = TranslationCorrection::new(pattern.window(), lags.r_max());
    k_st_with(pattern.points(), intensities, &corr, lags)
}

/// `D̂_k(r, t)` for `k = 1..=k_max`: fraction of points with at least `k`
/// others within spatial distance `r` and time lag `t`.
pub fn estimate_dk(pattern: &PointPattern, k_max: usize, lags: &LagGrid) -> Vec<Vec<f64>> {
    let pts = pattern.points();
    let n = pts.len();
    let mut out = vec![vec![0.0; lags.len()]; k_max];
    if n == 0 {
        return out;
    }
    for (i, p) in pts.iter().enumerate() {
        let mut bins = vec![0.0; lags.len()];
        for (j, q) in pts.iter().enumerate() {
            if i != j {
                if let Some((a, b)) = lags.bin(spatial_distance(p, q), p.t - q.t) {
                    bins[lags.index(a, b)] += 1.0;
                }
            }
        }
        let counts = lags.cumulate(&bins);
        for (k, row) in out.iter_mut().enumerate() {
            for (v, &c) in row.iter_mut().zip(&counts) {
                if c >= (k + 1) as f64 {
                    *v += 1.0;
                }
            }
        }
    }
    for row in &mut out {
        row.iter_mut().for_each(|v| *v /= n as f64);
    }
    out
}

/// `n` i.i.d. points with density proportional to the grid density.
pub fn sample_binomial_from_density<R: Rng + ?Sized>(n: usize, density: &GridDensity, rng: &mut R) -> Result<PointPattern> {
    PointPattern::new(density.sample(n, rng), density.window().clone())
}

/// Energy split into its three parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub k: f64,
    pub dk: f64,
    pub delta: f64,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.k + self.dk + self.delta
    }
}

/// Data summaries and everything shared by reconstructions of one pattern.
#[derive(Clone, Debug)]
pub struct ReconTarget {
    config: ReconConfig,
    window: Window,
    n: usize,
    k_lags: LagGrid,
    d_lags: LagGrid,
    corr: TranslationCorrection,
    sqrt_kx: Vec<f64>,
    dx: Vec<Vec<f64>>,
    kernels: PointKernels,
    grid_kernel: GridKernel,
    grid: Grid3,
    /// `ρ̂_space(X)` per spatial cell and `ρ̂_time(X)` per slice.
    p: Vec<f64>,
    q: Vec<f64>,
    sum_p2: f64,
    sum_q2: f64,
    density: GridDensity,
}

impl ReconTarget {
    pub fn new(x: &PointPattern, config: &ReconConfig, bw: &Bandwidths) -> Result<Self> {
        config.validate()?;
        let n = x.len();
        if n < 2 {
            return Err(Error::InvalidParameter(format!("reconstruction needs at least 2 points, got {n}")));
        }
        let window = x.window().clone();
        let [gx, gy, gt] = config.grid;
        let grid = build_grid(&window, gx, gy, gt)?;
        let basis = KernelBasis::new(x, bw, &grid)?;
        let sq = SpatialQuadrature::for_grid(&window, &grid)?;
        let tq = TemporalQuadrature::for_grid(&window, &grid)?;
        let kernels = PointKernels::new(x, bw, &sq, &tq)?;
        let k_lags = LagGrid::new(config.r_k, config.t_k, config.n_lag_r, config.n_lag_t)?;
        let d_lags = LagGrid::new(config.r_d, config.t_d, config.n_lag_r, config.n_lag_t)?;
        let corr = TranslationCorrection::new(&window, k_lags.r_max());
        let pts = x.points();
        let rho_x: Vec<f64> = pts.iter().map(|p| kernels.st(p.x, p.y, p.t)).collect();
        let kx = k_st_with(pts, &rho_x, &corr, &k_lags)?;
        let dx = estimate_dk(x, config.k_max, &d_lags);
        let p = basis.rho_space().to_vec();
        let q = basis.rho_time().to_vec();
        let density = GridDensity::new(&grid, &window, &basis.rho_sep())?;
        Ok(Self {
            config: config.clone(),
            n,
            k_lags,
            d_lags,
            corr,
            sqrt_kx: kx.iter().map(|v| v.max(0.0).sqrt()).collect(),
            dx,
            grid_kernel: GridKernel::new(&window, &grid, bw)?,
            sum_p2: p.iter().map(|v| v * v).sum(),
            sum_q2: q.iter().map(|v| v * v).sum(),
            p,
            q,
            kernels,
            grid,
            density,
            window,
        })
    }

    pub fn config(&self) -> &ReconConfig {
        &self.config
    }

    pub fn density(&self) -> &GridDensity {
        &self.density
    }

    pub fn k_lags(&self) -> &LagGrid {
        &self.k_lags
    }

    pub fn d_lags(&self) -> &LagGrid {
        &self.d_lags
    }

    /// `K̂(X)` on the lag lattice.
    pub fn k_data(&self) -> Vec<f64> {
        self.sqrt_kx.iter().map(|v| v * v).collect()
    }

    pub fn dk_data(&self) -> &[Vec<f64>] {
        &self.dx
    }

    /// Pair weight intensity at a candidate point.
    pub fn weight_at(&self, p: &Point) -> f64 {
        match self.config.k_weighting {
            KWeighting::Separable => self.kernels.sep(p.x, p.y, p.t),
            KWeighting::Data => self.kernels.st(p.x, p.y, p.t),
        }
    }

    /// `K̂(Y)` with the candidate weighting.
    pub fn k_candidate(&self, y: &PointPattern) -> Result<Vec<f64>> {
        let w: Vec<f64> = y.points().iter().map(|p| self.weight_at(p)).collect();
        k_st_with(y.points(), &w, &self.corr, &self.k_lags)
    }

    /// Full evaluation of `E(X, Y)`.
    pub fn energy(&self, y: &PointPattern) -> Result<EnergyTerms> {
        if y.len() != self.n {
            return Err(Error::InvalidParameter(format!(
                "candidate has {} points, data has {}",
                y.len(),
                self.n
            )));
        }
        Ok(State::build(self, y.points().to_vec())?.energy(self))
    }

    /// Unit-weight energy terms of `y`.
    pub fn raw_energy(&self, y: &PointPattern) -> Result<EnergyTerms> {
        self.energy(y)?;
        Ok(State::build(self, y.points().to_vec())?.raw_energy(self))
    }

    /// Weights giving each term unit size, averaged over `starts` binomial
    /// starting patterns. Terms that vanish at every start keep weight 0.
    pub fn balanced_weights<R: Rng + ?Sized>(&self, starts: usize, rng: &mut R) -> Result<ReconConfig> {
        let mut sum = [0.0; 3];
        for _ in 0..starts.max(1) {
            let y = self.initial_pattern(rng)?;
            let e = self.raw_energy(&y)?;
            sum[0] += e.k;
            sum[1] += e.dk;
            sum[2] += e.delta;
        }
        let inv = |v: f64| if v > 0.0 { starts.max(1) as f64 / v } else { 0.0 };
        let mut cfg = self.config.clone();
        cfg.w_k = inv(sum[0]);
        cfg.w_dk = inv(sum[1]);
        cfg.w_delta = inv(sum[2]);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same data summaries under a different weighting of the terms.
    pub fn with_weights(&self, w_k: f64, w_dk: f64, w_delta: f64) -> Result<Self> {
        let mut t = self.clone();
        t.config.w_k = w_k;
        t.config.w_dk = w_dk;
        t.config.w_delta = w_delta;
        t.config.validate()?;
        Ok(t)
    }

    pub fn initial_pattern<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PointPattern> {
        sample_binomial_from_density(self.n, &self.density, rng)
    }

    /// Replace-one-point descent from a binomial start.
    pub fn reconstruct<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ReconOutput> {
        let y0 = self.initial_pattern(rng)?;
        self.reconstruct_from(y0, rng)
    }

    pub fn reconstruct_from<R: Rng + ?Sized>(&self, y0: PointPattern, rng: &mut R) -> Result<ReconOutput> {
        let mut state = State::build(self, y0.points().to_vec())?;
        let mut current = state.energy(self).total();
        let initial_energy = current;
        let mut energies = vec![current];
        let mut rejects = 0;
        let mut iterations = 0;
        let cfg = &self.config;
        while iterations < cfg.max_iter && rejects < cfg.max_consecutive_rejects {
            iterations += 1;
            let idx = rng.random_range(0..self.n);
            let q = self.density.sample_point(rng);
            match state.try_replace(self, idx, q, current)? {
                Some(e) => {
                    current = e;
                    energies.push(e);
                    rejects = 0;
                }
                None => rejects += 1,
            }
        }
        let stop = if rejects >= cfg.max_consecutive_rejects {
            StopReason::ConsecutiveRejects
        } else {
            StopReason::MaxIter
        };
        let pattern = PointPattern::new(state.pts, self.window.clone())?;
        Ok(ReconOutput {
            pattern,
            initial_energy,
            final_energy: current,
            energies,
            iterations,
            stop,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIter,
    ConsecutiveRejects,
}

#[derive(Clone, Debug)]
pub struct ReconOutput {
    pub pattern: PointPattern,
    pub initial_energy: f64,
    pub final_energy: f64,
    /// Energies of the accepted states, starting with `Y₀`.
    pub energies: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
}

/// Incrementally maintained summaries of the current candidate.
struct State {
    pts: Vec<Point>,
    w: Vec<f64>,
    k_bins: Vec<f64>,
    /// `nbr[i * L + c]`: neighbours of `i` within lag cell `c` (cumulative).
    nbr: Vec<u32>,
    /// `dcount[(k - 1) * L + c] = #{i : nbr_i(c) ≥ k}`
    dcount: Vec<u32>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    a_sum: Vec<f64>,
    b_sum: Vec<f64>,
}

impl State {
    fn build(t: &ReconTarget, pts: Vec<Point>) -> Result<Self> {
        let n = pts.len();
        let w: Vec<f64> = pts.iter().map(|p| t.weight_at(p)).collect();
        check_intensities(&w)?;
        let lk = t.k_lags.len();
        let ld = t.d_lags.len();
        let mut k_bins = vec![0.0; lk];
        let mut nbr = vec![0u32; n * ld];
        for i in 0..n {
            let mut bins = vec![0.0; ld];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (p, q) = (&pts[i], &pts[j]);
                let d = spatial_distance(p, q);
                if j > i {
                    if let Some((a, b)) = t.k_lags.bin(d, p.t - q.t) {
                        k_bins[t.k_lags.index(a, b)] += pair_mass(p, q, w[i], w[j], &t.corr);
                    }
                }
                if let Some((a, b)) = t.d_lags.bin(d, p.t - q.t) {
                    bins[t.d_lags.index(a, b)] += 1.0;
                }
            }
            for (dst, c) in nbr[i * ld..(i + 1) * ld].iter_mut().zip(t.d_lags.cumulate(&bins)) {
                *dst = c as u32;
            }
        }
        let k_max = t.config.k_max;
        let mut dcount = vec![0u32; k_max * ld];
        for i in 0..n {
            for c in 0..ld {
                for k in 1..=(nbr[i * ld + c] as usize).min(k_max) {
                    dcount[(k - 1) * ld + c] += 1;
                }
            }
        }
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for p in &pts {
            let (ai, bi) = t.grid_kernel.factors(p.x, p.y, p.t)?;
            a.push(ai);
            b.push(bi);
        }
        let mut a_sum = vec![0.0; t.grid.n_spatial()];
        let mut b_sum = vec![0.0; t.grid.nt()];
        for (ai, bi) in a.iter().zip(&b) {
            a_sum.iter_mut().zip(ai).for_each(|(s, v)| *s += v);
            b_sum.iter_mut().zip(bi).for_each(|(s, v)| *s += v);
        }
        Ok(Self {
            pts,
            w,
            k_bins,
            nbr,
            dcount,
            a,
            b,
            a_sum,
            b_sum,
        })
    }

    fn energy(&self, t: &ReconTarget) -> EnergyTerms {
        let cfg = &t.config;
        let raw = self.raw_energy(t);
        EnergyTerms {
            k: cfg.w_k * raw.k,
            dk: cfg.w_dk * raw.dk,
            delta: cfg.w_delta * raw.delta,
        }
    }

    /// Energy terms with unit weights.
    fn raw_energy(&self, t: &ReconTarget) -> EnergyTerms {
        let ky = t.k_lags.cumulate(&self.k_bins);
        let k = t.k_lags.cell_area()
            * t.sqrt_kx
                .iter()
                .zip(&ky)
                .map(|(x, y)| (x - y.max(0.0).sqrt()).powi(2))
                .sum::<f64>();
        let ld = t.d_lags.len();
        let n = self.pts.len() as f64;
        let mut dk = 0.0;
        for (kk, dx) in t.dx.iter().enumerate() {
            let s: f64 = dx
                .iter()
                .zip(&self.dcount[kk * ld..(kk + 1) * ld])
                .map(|(x, &c)| (x - c as f64 / n).powi(2))
                .sum();
            dk += s;
        }
        dk *= t.d_lags.cell_area();
        let pa: f64 = t.p.iter().zip(&self.a_sum).map(|(x, y)| x * y).sum();
        let qb: f64 = t.q.iter().zip(&self.b_sum).map(|(x, y)| x * y).sum();
        let a2: f64 = self.a_sum.iter().map(|v| v * v).sum();
        let b2: f64 = self.b_sum.iter().map(|v| v * v).sum();
        // Σ_{s,t} (P_s Q_t − A_s B_t)² / n², factorized
        let sq = (t.sum_p2 * t.sum_q2 - 2.0 * pa * qb + a2 * b2).max(0.0) / (n * n);
        let delta = t.grid.cell_volume() * sq;
        EnergyTerms { k, dk, delta }
    }

    /// Adds `sign` to the neighbour counts of `j` over the quadrant at `(a0, b0)`.
    fn link(&mut self, t: &ReconTarget, j: usize, a0: usize, b0: usize, add: bool) {
        let nt = t.d_lags.ts().len();
        let nr = t.d_lags.rs().len();
        let ld = t.d_lags.len();
        let k_max = t.config.k_max as u32;
        for a in a0..nr {
            for b in b0..nt {
                let c = a * nt + b;
                let v = &mut self.nbr[j * ld + c];
                if add {
                    *v += 1;
                    if *v <= k_max {
                        self.dcount[(*v as usize - 1) * ld + c] += 1;
                    }
                } else {
                    if *v <= k_max {
                        self.dcount[(*v as usize - 1) * ld + c] -= 1;
                    }
                    *v -= 1;
                }
            }
        }
    }

    /// Adds or removes point `i`'s own indicator contributions to `dcount`.
    fn own(&mut self, t: &ReconTarget, i: usize, add: bool) {
        let ld = t.d_lags.len();
        let k_max = t.config.k_max;
        for c in 0..ld {
            for k in 1..=(self.nbr[i * ld + c] as usize).min(k_max) {
                let d = &mut self.dcount[(k - 1) * ld + c];
                if add {
                    *d += 1;
                } else {
                    *d -= 1;
                }
            }
        }
    }

    /// Detaches point `idx` from every other point's neighbour counts.
    fn detach(&mut self, t: &ReconTarget, idx: usize) {
        self.own(t, idx, false);
        let p = self.pts[idx];
        for j in 0..self.pts.len() {
            if j == idx {
                continue;
            }
            let q = self.pts[j];
            if let Some((a, b)) = t.d_lags.bin(spatial_distance(&p, &q), p.t - q.t) {
                self.link(t, j, a, b, false);
            }
        }
    }

    /// Attaches the point stored at `idx`, rebuilding its own counts.
    fn attach(&mut self, t: &ReconTarget, idx: usize) {
        let ld = t.d_lags.len();
        let p = self.pts[idx];
        let mut bins = vec![0.0; ld];
        for j in 0..self.pts.len() {
            if j == idx {
                continue;
            }
            let q = self.pts[j];
            if let Some((a, b)) = t.d_lags.bin(spatial_distance(&p, &q), p.t - q.t) {
                bins[t.d_lags.index(a, b)] += 1.0;
                self.link(t, j, a, b, true);
            }
        }
        for (dst, c) in self.nbr[idx * ld..(idx + 1) * ld].iter_mut().zip(t.d_lags.cumulate(&bins)) {
            *dst = c as u32;
        }
        self.own(t, idx, true);
    }

    fn k_pairs(&mut self, t: &ReconTarget, idx: usize, sign: f64) {
        let p = self.pts[idx];
        for j in 0..self.pts.len() {
            if j == idx {
                continue;
            }
            let q = self.pts[j];
            if let Some((a, b)) = t.k_lags.bin(spatial_distance(&p, &q), p.t - q.t) {
                self.k_bins[t.k_lags.index(a, b)] += sign * pair_mass(&p, &q, self.w[idx], self.w[j], &t.corr);
            }
        }
    }

    /// Replaces point `idx` by `q` if the energy does not increase; returns
    /// the new energy when accepted.
    fn try_replace(&mut self, t: &ReconTarget, idx: usize, q: Point, current: f64) -> Result<Option<f64>> {
        let wq = t.weight_at(&q);
        if !(wq > 0.0 && wq.is_finite()) {
            return Ok(None);
        }
        let (aq, bq) = t.grid_kernel.factors(q.x, q.y, q.t)?;
        let saved_bins = self.k_bins.clone();
        let saved_a = self.a_sum.clone();
        let saved_b = self.b_sum.clone();
        let old = (self.pts[idx], self.w[idx]);
        let ld = t.d_lags.len();
        let saved_nbr: Vec<u32> = self.nbr[idx * ld..(idx + 1) * ld].to_vec();

        self.k_pairs(t, idx, -1.0);
        self.detach(t, idx);
        self.pts[idx] = q;
        self.w[idx] = wq;
        self.k_pairs(t, idx, 1.0);
        self.attach(t, idx);
        for (s, (o, v)) in self.a_sum.iter_mut().zip(self.a[idx].iter().zip(&aq)) {
            *s += v - o;
        }
        for (s, (o, v)) in self.b_sum.iter_mut().zip(self.b[idx].iter().zip(&bq)) {
            *s += v - o;
        }
        let e = self.energy(t).total();
        if e <= current {
            self.a[idx] = aq;
            self.b[idx] = bq;
            return Ok(Some(e));
        }
        self.detach(t, idx);
        self.pts[idx] = old.0;
        self.w[idx] = old.1;
        for j in 0..self.pts.len() {
            if j == idx {
                continue;
            }
            let (p, r) = (self.pts[idx], self.pts[j]);
            if let Some((a, b)) = t.d_lags.bin(spatial_distance(&p, &r), p.t - r.t) {
                self.link(t, j, a, b, true);
            }
        }
        self.nbr[idx * ld..(idx + 1) * ld].copy_from_slice(&saved_nbr);
        self.own(t, idx, true);
        self.k_bins = saved_bins;
        self.a_sum = saved_a;
        self.b_sum = saved_b;
        Ok(None)
    }
}

/// `E(X, Y)` for one candidate.
pub fn energy(x: &PointPattern, y: &PointPattern, config: &ReconConfig, bw: &Bandwidths) -> Result<EnergyTerms> {
    ReconTarget::new(x, config, bw)?.energy(y)
}

/// One reconstruction of `x`.
pub fn reconstruct<R: Rng + ?Sized>(x: &PointPattern, config: &ReconConfig, bw: &Bandwidths, rng: &mut R) -> Result<ReconOutput> {
    ReconTarget::new(x, config, bw)?.reconstruct(rng)
}

#[derive(Clone, Debug)]
pub struct ReconTestRun {
    pub outcomes: Vec<(Statistic, TestOutcome)>,
    pub bandwidths: Bandwidths,
    /// Final energy and iteration count of each reconstruction.
    pub runs: Vec<(f64, usize)>,
}

/// Monte Carlo test with `test.n_perm` reconstructions as null replicates.
pub fn run_reconstruction_tests(
    pattern: &PointPattern,
    recon: &ReconConfig,
    test: &PermTestConfig,
    which: &[Statistic],
) -> Result<ReconTestRun> {
    test.validate()?;
    let bw = test.bandwidths.resolve(pattern)?;
    let target = ReconTarget::new(pattern, recon, &bw)?;
    let [nx, ny, nt] = test.grid;
    let grid = build_grid(pattern.window(), nx, ny, nt)?;
    let data = KernelBasis::new(pattern, &bw, &grid)?.field();
    let mask = EvaluationMask::from_field(&data)?;
    let mut sets = vec![evaluate_statistics(&data.rho_st, &data.rho_sep, &grid, &mask, which)];
    let reps = parallel::map_range(test.n_perm, |r| -> Result<_> {
        let mut rng = replicate_rng(test.seed, r as u64 + 1);
        let out = target.reconstruct(&mut rng)?;
        let field = KernelBasis::new(&out.pattern, &bw, &grid)?.field();
        let set = evaluate_statistics(&field.rho_st, &field.rho_sep, &grid, &mask, which);
        Ok((set, (out.final_energy, out.iterations)))
    });
    let mut runs = Vec::with_capacity(test.n_perm);
    for r in reps {
        let (set, info) = r?;
        sets.push(set);
        runs.push(info);
    }
    Ok(ReconTestRun {
        outcomes: assemble_outcomes(&sets, which, test.alpha)?,
        bandwidths: bw,
        runs,
    })
}

pub fn run_reconstruction_test(pattern: &PointPattern, recon: &ReconConfig, test: &PermTestConfig) -> Result<TestOutcome> {
    let mut run = run_reconstruction_tests(pattern, recon, test, &[test.statistic])?;
    Ok(run.outcomes.pop().expect("one statistic requested").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::permutation::replicate_rng;
    use crate::sim::NeymanScott;

    fn unit() -> Window {
        Window::unit_cube()
    }

    fn uniform(n: usize, seed: u64) -> PointPattern {
        let g = build_grid(&unit(), 4, 4, 4).unwrap();
        let d = GridDensity::uniform(&g, &unit()).unwrap();
        sample_binomial_from_density(n, &d, &mut replicate_rng(seed, 1)).unwrap()
    }

    fn clustered(seed: u64) -> PointPattern {
        let w = unit();
        let g = build_grid(&w, 5, 5, 5).unwrap();
        let d = GridDensity::uniform(&g, &w).unwrap();
        let m = NeymanScott {
            parent_mean: 30.0,
            offspring_mean: 4.0,
            sd_space: 0.03,
            sd_time: 0.03,
        };
        m.simulate(&d, &mut replicate_rng(seed, 1)).unwrap()
    }

    fn small_config() -> ReconConfig {
        ReconConfig {
            w_k: 1.0,
            w_dk: 10.0,
            w_delta: 1e-3,
            t_k: 0.2,
            r_k: 0.2,
            t_d: 0.1,
            r_d: 0.1,
            k_max: 3,
            max_iter: 3000,
            max_consecutive_rejects: 200,
            n_lag_r: 10,
            n_lag_t: 10,
            grid: [8, 8, 8],
            ..Default::default()
        }
    }

    fn bw() -> Bandwidths {
        Bandwidths::fixed(0.1, 0.1).unwrap()
    }

    #[test]
    fn k_single_pair_by_hand() {
        let pts = vec![Point::new(0.2, 0.3, 0.1), Point::new(0.3, 0.3, 0.3)];
        let p = PointPattern::new(pts, unit()).unwrap();
        let lags = LagGrid::from_points(vec![0.05, 0.1, 0.5], vec![0.1, 0.2, 0.5]).unwrap();
        let k = estimate_k_st(&p, &[2.0, 2.0], &lags).unwrap();
        // w = (1 − 0.1)(1 − 0)(1 − 0.2) / 1
        let w12 = 0.9 * 1.0 * 0.8;
        let expected = 2.0 / (4.0 * w12);
        for (a, &r) in lags.rs().iter().enumerate() {
            for (b, &t) in lags.ts().iter().enumerate() {
                let v = k[a * 3 + b];
                if r >= 0.1 - 1e-12 && t >= 0.2 - 1e-12 {
                    assert!((v - expected).abs() < 1e-12, "r={r} t={t} {v}");
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
        let single = PointPattern::new(vec![Point::new(0.5, 0.5, 0.5)], unit()).unwrap();
        assert!(estimate_k_st(&single, &[1.0], &lags).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(estimate_k_st(&p, &[2.0, 0.0], &lags), Err(Error::ZeroIntensity(1))));
    }

    #[test]
    fn k_poisson_benchmark() {
        let lags = LagGrid::from_points(vec![0.05, 0.1], vec![0.05, 0.1]).unwrap();
        let reps = 200;
        let mut sums = [0.0; 4];
        let mut sq = [0.0; 4];
        for r in 0..reps {
            let p = uniform(500, 100 + r);
            let rho = vec![500.0; 500];
            let k = estimate_k_st(&p, &rho, &lags).unwrap();
            for i in 0..4 {
                sums[i] += k[i];
                sq[i] += k[i] * k[i];
            }
        }
        for (a, &r) in lags.rs().iter().enumerate() {
            for (b, &t) in lags.ts().iter().enumerate() {
                let i = a * 2 + b;
                let mean = sums[i] / reps as f64;
                let var = sq[i] / reps as f64 - mean * mean;
                let se = (var / reps as f64).sqrt();
                let theory = 2.0 * std::f64::consts::PI * r * r * t;
                // the binomial pattern has a fixed count, which scales K by (n−1)/n
                let theory = theory * 499.0 / 500.0;
                assert!((mean - theory).abs() < 3.0 * se + 1e-3 * theory, "r={r} t={t} mean={mean} theory={theory} se={se}");
            }
        }
    }

    #[test]
    fn polygon_overlap_table_matches_direct() {
        let w = Window::polygon(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [0.5, 0.5], [0.5, 1.0], [0.0, 1.0]],
            0.0,
            1.0,
        )
        .unwrap();
        let corr = TranslationCorrection::new(&w, 0.2);
        assert!((corr.space_overlap(0.0, 0.0) - 0.75).abs() < 0.01);
        for (dx, dy) in [(0.1, 0.0), (0.05, -0.12), (-0.17, 0.03)] {
            let direct = w.overlap_area(dx, dy, 400);
            assert!((corr.space_overlap(dx, dy) - direct).abs() < 0.01, "{dx},{dy}");
        }
    }

    #[test]
    fn dk_examples() {
        let w = Window::rect(0.0, 3.0, 0.0, 1.0, 0.0, 1.0).unwrap();
        let pts = vec![Point::new(0.5, 0.5, 0.5), Point::new(1.5, 0.5, 0.5), Point::new(2.5, 0.5, 0.5)];
        let p = PointPattern::new(pts, w).unwrap();
        let lags = LagGrid::from_points(vec![0.5, 1.0, 5.0], vec![10.0]).unwrap();
        let d = estimate_dk(&p, 3, &lags);
        assert_eq!(d[0], vec![0.0, 1.0, 1.0]);
        assert!((d[1][1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(d[1][2], 1.0);
        // k ≥ n gives zero
        assert_eq!(d[2], vec![0.0; 3]);
    }

    #[test]
    fn dk_monotone() {
        let p = clustered(3);
        let lags = LagGrid::new(0.2, 0.2, 8, 8).unwrap();
        let d = estimate_dk(&p, 3, &lags);
        for k in 0..3 {
            for a in 0..8 {
                for b in 0..8 {
                    let v = d[k][a * 8 + b];
                    assert!((0.0..=1.0).contains(&v));
                    if a > 0 {
                        assert!(v >= d[k][(a - 1) * 8 + b]);
                    }
                    if b > 0 {
                        assert!(v >= d[k][a * 8 + b - 1]);
                    }
                    if k > 0 {
                        assert!(v <= d[k - 1][a * 8 + b]);
                    }
                }
            }
        }
    }

    #[test]
    fn energy_of_data_against_itself() {
        let x = clustered(5);
        let cfg = ReconConfig {
            k_weighting: KWeighting::Data,
            ..small_config()
        };
        let e = energy(&x, &x, &cfg, &bw()).unwrap();
        assert!(e.k.abs() < 1e-12 && e.dk == 0.0);
        assert!(e.delta.abs() < 1e-9 * cfg.w_delta * (x.len() as f64).powi(2));
        // separable weighting: only the K term can differ
        let e = energy(&x, &x, &small_config(), &bw()).unwrap();
        assert_eq!(e.dk, 0.0);
    }

    #[test]
    fn energy_linear_in_weights() {
        let x = clustered(6);
        let y = uniform(x.len(), 7);
        let only_delta = ReconConfig {
            w_k: 0.0,
            w_dk: 0.0,
            w_delta: 1.0,
            ..small_config()
        };
        let e1 = energy(&x, &y, &only_delta, &bw()).unwrap();
        assert_eq!(e1.k, 0.0);
        assert_eq!(e1.dk, 0.0);
        let e2 = energy(&x, &y, &ReconConfig { w_delta: 2.0, ..only_delta.clone() }, &bw()).unwrap();
        assert!((e2.total() - 2.0 * e1.total()).abs() < 1e-9 * e1.total());
    }

    #[test]
    fn delta_term_matches_direct_sum() {
        let x = clustered(8);
        let y = uniform(x.len(), 9);
        let cfg = ReconConfig {
            w_k: 0.0,
            w_dk: 0.0,
            w_delta: 1.0,
            ..small_config()
        };
        let e = energy(&x, &y, &cfg, &bw()).unwrap();
        let g = build_grid(&unit(), 8, 8, 8).unwrap();
        let sx = crate::kernels::estimate_rho_sep(&x, &bw(), &g).unwrap();
        let sy = crate::kernels::estimate_rho_sep(&y, &bw(), &g).unwrap();
        let direct: f64 = sx.iter().zip(&sy).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * g.cell_volume();
        assert!((e.delta - direct).abs() < 1e-8 * direct, "{} vs {direct}", e.delta);
    }

    #[test]
    fn balanced_weights_equalize_terms() {
        let x = clustered(14);
        let t = ReconTarget::new(&x, &small_config(), &bw()).unwrap();
        let cfg = t.balanced_weights(1, &mut replicate_rng(5, 1)).unwrap();
        let t = t.with_weights(cfg.w_k, cfg.w_dk, cfg.w_delta).unwrap();
        let y = t.initial_pattern(&mut replicate_rng(5, 1)).unwrap();
        let e = t.energy(&y).unwrap();
        for v in [e.k, e.dk, e.delta] {
            assert!((v - 1.0).abs() < 1e-9, "{e:?}");
        }
    }

    #[test]
    fn zero_iterations_return_start() {
        let x = clustered(10);
        let cfg = ReconConfig {
            max_iter: 0,
            ..small_config()
        };
        let t = ReconTarget::new(&x, &cfg, &bw()).unwrap();
        let y0 = t.initial_pattern(&mut replicate_rng(1, 1)).unwrap();
        let out = t.reconstruct_from(y0.clone(), &mut replicate_rng(1, 2)).unwrap();
        assert_eq!(out.pattern, y0);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn reconstruction_contract() {
        let x = clustered(11);
        let t = ReconTarget::new(&x, &small_config(), &bw()).unwrap();
        let out = t.reconstruct(&mut replicate_rng(2, 1)).unwrap();
        assert_eq!(out.pattern.len(), x.len());
        assert!(out.energies.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.final_energy <= out.initial_energy);
        assert!(out.energies.len() > 1);
        // incremental bookkeeping agrees with a fresh evaluation
        let fresh = t.energy(&out.pattern).unwrap().total();
        assert!((fresh - out.final_energy).abs() < 1e-8 * fresh.max(1e-12), "{fresh} vs {}", out.final_energy);
        assert!(out.pattern.points().iter().all(|p| x.window().contains(p)));
    }

    #[test]
    fn reconstruction_deterministic() {
        let x = clustered(12);
        let t = ReconTarget::new(&x, &small_config(), &bw()).unwrap();
        let a = t.reconstruct(&mut replicate_rng(3, 1)).unwrap();
        let b = t.reconstruct(&mut replicate_rng(3, 1)).unwrap();
        assert_eq!(a.pattern, b.pattern);
        assert_eq!(a.energies, b.energies);
    }

    #[test]
    fn binomial_rank_one_density_independent_margins() {
        let g = build_grid(&unit(), 4, 4, 4).unwrap();
        let nt = 4;
        let w: Vec<f64> = (0..g.n_cells())
            .map(|c| {
                let (ix, _) = g.spatial_coords(c / nt);
                (1.0 + ix as f64) * (1.0 + 2.0 * (c % nt) as f64)
            })
            .collect();
        let d = GridDensity::new(&g, &unit(), &w).unwrap();
        let p = sample_binomial_from_density(10_000, &d, &mut replicate_rng(4, 1)).unwrap();
        let mut table = vec![vec![0u64; 4]; 4];
        for q in p.points() {
            table[g.locate_xy(q.x, 0.5) % 4][g.locate_t(q.t)] += 1;
        }
        let r = crate::chisq::chisq_from_table(&table).unwrap();
        assert!(r.p_value > 0.01, "p = {}", r.p_value);
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = ReconConfig::default();
        let s = cfg.to_toml_string();
        assert_eq!(ReconConfig::from_toml_str(&s).unwrap(), cfg);
        let minimal = "w_k = 1.0\nw_dk = 3000.0\nw_delta = 400000.0\nt_k = 12.0\nr_k = 6.0\nt_d = 6.0\nr_d = 3.0\nk_max = 3\nmax_iter = 100000\nmax_consecutive_rejects = 100\n";
        assert_eq!(ReconConfig::from_toml_str(minimal).unwrap(), cfg);
        assert!(ReconConfig::from_toml_str("w_k = 1.0\nbogus = 2\n").is_err());
        let zero = minimal.replace("w_k = 1.0", "w_k = 0.0").replace("w_dk = 3000.0", "w_dk = 0.0").replace("w_delta = 400000.0", "w_delta = 0.0");
        assert!(ReconConfig::from_toml_str(&zero).is_err());
    }

    #[test]
    fn reconstruction_test_runs() {
        let x = clustered(13);
        let recon = ReconConfig {
            max_iter: 300,
            ..small_config()
        };
        let test = PermTestConfig {
            n_perm: 19,
            grid: [6, 6, 5],
            bandwidths: crate::permutation::BandwidthSpec::Fixed { epsilon: 0.1, delta: 0.1 },
            alpha: 0.05,
            seed: 4,
            statistic: Statistic::S,
        };
        let run = run_reconstruction_tests(&x, &recon, &test, &[Statistic::S, Statistic::Sd]).unwrap();
        assert_eq!(run.runs.len(), 19);
        for (_, o) in &run.outcomes {
            assert!(o.p_value() >= 0.05 && o.p_value() <= 1.0);
        }
    }
}
