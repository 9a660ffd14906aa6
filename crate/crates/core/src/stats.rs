//! Separability test functions `S(u,t)`, `S_space(u)`, `S_time(t)` and the
//! integral deviation `S_d`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Grid3;
use crate::kernels::IntensityField;

/// Relative floor below which an intensity counts as zero, in units of the
/// average intensity `n / |W×T|`.
pub const ZERO_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Statistic {
    #[serde(rename = "S")]
    S,
    #[serde(rename = "Sspace")]
    SSpace,
    #[serde(rename = "Stime")]
    STime,
    #[serde(rename = "Sd")]
    Sd,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [Statistic::S, Statistic::SSpace, Statistic::STime, Statistic::Sd];

    pub fn tag(self) -> &'static str {
        match self {
            Statistic::S => "S",
            Statistic::SSpace => "Sspace",
            Statistic::STime => "Stime",
            Statistic::Sd => "Sd",
        }
    }

    pub fn is_functional(self) -> bool {
        self != Statistic::Sd
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" => Ok(Statistic::S),
            "Sspace" => Ok(Statistic::SSpace),
            "Stime" => Ok(Statistic::STime),
            "Sd" => Ok(Statistic::Sd),
            other => Err(Error::InvalidParameter(format!("unknown statistic {other:?}"))),
        }
    }
}

/// Cells retained for the test functions. Frozen from the data estimate and
/// reused for every replicate.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationMask {
    retained: Vec<bool>,
    cells: Vec<usize>,
    spatial: Vec<usize>,
    temporal: Vec<usize>,
    floor: f64,
}

impl EvaluationMask {
    /// Keeps inside cells where `ρ̂`, `ρ̂_space` and `ρ̂_time` all exceed the
    /// zero floor.
    pub fn from_field(field: &IntensityField) -> Result<Self> {
        let g = &field.grid;
        let nt = g.nt();
        let volume = g.n_inside() as f64 * g.cell_area() * nt as f64 * g.cell_length();
        let floor = ZERO_FLOOR * field.n as f64 / volume;
        let mut retained = vec![false; g.n_cells()];
        for s in (0..g.n_spatial()).filter(|&s| g.inside(s)) {
            if field.rho_space[s] <= floor {
                continue;
            }
            for it in 0..nt {
                let c = s * nt + it;
                retained[c] = field.rho_time[it] > floor && field.rho_st[c] > floor;
            }
        }
        Self::from_retained(g, retained, floor)
    }

    /// Every inside cell.
    pub fn inside(grid: &Grid3) -> Result<Self> {
        let nt = grid.nt();
        let retained = (0..grid.n_cells()).map(|c| grid.inside(c / nt)).collect();
        Self::from_retained(grid, retained, 0.0)
    }

    fn from_retained(g: &Grid3, retained: Vec<bool>, floor: f64) -> Result<Self> {
        let nt = g.nt();
        let cells: Vec<usize> = (0..retained.len()).filter(|&c| retained[c]).collect();
        if cells.is_empty() {
            return Err(Error::DegenerateField);
        }
        let mut spatial: Vec<usize> = cells.iter().map(|c| c / nt).collect();
        spatial.dedup();
        let mut seen = vec![false; nt];
        cells.iter().for_each(|c| seen[c % nt] = true);
        let temporal = (0..nt).filter(|&t| seen[t]).collect();
        Ok(Self {
            retained,
            cells,
            spatial,
            temporal,
            floor,
        })
    }

    pub fn is_retained(&self, cell: usize) -> bool {
        self.retained[cell]
    }

    /// Retained space-time cell indices, ascending.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Spatial cells with at least one retained time slice.
    pub fn spatial_cells(&self) -> &[usize] {
        &self.spatial
    }

    /// Time slices with at least one retained spatial cell.
    pub fn time_slices(&self) -> &[usize] {
        &self.temporal
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }
}

/// A test function evaluated on a fixed discretization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionSample {
    pub kind: Statistic,
    /// Grid indices the values refer to: space-time cells for `S`, spatial
    /// cells for `S_space`, time slices for `S_time`.
    pub cells: Vec<usize>,
    pub values: Vec<f64>,
}

impl FunctionSample {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `S = ρ̂ / ρ̂_sep` over the retained cells. Where a replicate's own
/// separable denominator falls below the floor the null value 1 is used.
pub fn s_values(rho_st: &[f64], rho_sep: &[f64], mask: &EvaluationMask) -> Vec<f64> {
    mask.cells
        .iter()
        .map(|&c| {
            let den = rho_sep[c];
            if den > mask.floor {
                rho_st[c] / den
            } else {
                1.0
            }
        })
        .collect()
}

/// `S(u,t) = ρ̂(u,t) / (ρ̂_space(u) ρ̂_time(t) / n)`.
pub fn compute_s(field: &IntensityField, mask: &EvaluationMask) -> Result<FunctionSample> {
    if mask.cells.is_empty() {
        return Err(Error::DegenerateField);
    }
    Ok(FunctionSample {
        kind: Statistic::S,
        cells: mask.cells.clone(),
        values: s_values(&field.rho_st, &field.rho_sep, mask),
    })
}

/// `S_time(t) = Σ_u S(u,t) · cell area` over retained cells of each slice.
pub fn compute_s_time(s: &FunctionSample, grid: &Grid3, mask: &EvaluationMask) -> FunctionSample {
    let nt = grid.nt();
    let mut acc = vec![0.0; nt];
    for (&c, &v) in s.cells.iter().zip(&s.values) {
        acc[c % nt] += v;
    }
    let area = grid.cell_area();
    FunctionSample {
        kind: Statistic::STime,
        cells: mask.temporal.clone(),
        values: mask.temporal.iter().map(|&t| acc[t] * area).collect(),
    }
}

/// `S_space(u) = Σ_t S(u,t) · cell length` over retained cells at each location.
pub fn compute_s_space(s: &FunctionSample, grid: &Grid3, mask: &EvaluationMask) -> FunctionSample {
    let nt = grid.nt();
    let len = grid.cell_length();
    let mut values = Vec::with_capacity(mask.spatial.len());
    let mut k = 0;
    for &sp in &mask.spatial {
        let mut sum = 0.0;
        while k < s.cells.len() && s.cells[k] / nt == sp {
            sum += s.values[k];
            k += 1;
        }
        values.push(sum * len);
    }
    FunctionSample {
        kind: Statistic::SSpace,
        cells: mask.spatial.clone(),
        values,
    }
}

/// Midpoint sum of `|ρ̂ − ρ̂_sep|` over the retained cells.
pub fn s_d_value(rho_st: &[f64], rho_sep: &[f64], mask: &EvaluationMask, cell_volume: f64) -> f64 {
    mask.cells
        .iter()
        .map(|&c| (rho_st[c] - rho_sep[c]).abs())
        .sum::<f64>()
        * cell_volume
}

/// `S_d = ∫ |ρ̂ − ρ̂_sep|`, discretized on the grid.
pub fn compute_s_d(field: &IntensityField, mask: &EvaluationMask) -> f64 {
    s_d_value(&field.rho_st, &field.rho_sep, mask, field.grid.cell_volume())
}

/// All four statistics of one estimate, sharing the `S` evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct StatisticSet {
    pub s: Option<FunctionSample>,
    pub s_space: Option<FunctionSample>,
    pub s_time: Option<FunctionSample>,
    pub s_d: Option<f64>,
}

/// Evaluates the requested statistics from raw `ρ̂` and `ρ̂_sep` arrays.
pub fn evaluate_statistics(
    rho_st: &[f64],
    rho_sep: &[f64],
    grid: &Grid3,
    mask: &EvaluationMask,
    which: &[Statistic],
) -> StatisticSet {
    let wants = |s: Statistic| which.contains(&s);
    let need_s = wants(Statistic::S) || wants(Statistic::SSpace) || wants(Statistic::STime);
    let s = need_s.then(|| FunctionSample {
        kind: Statistic::S,
        cells: mask.cells.clone(),
        values: s_values(rho_st, rho_sep, mask),
    });
    let s_space = s
        .as_ref()
        .filter(|_| wants(Statistic::SSpace))
        .map(|s| compute_s_space(s, grid, mask));
    let s_time = s
        .as_ref()
        .filter(|_| wants(Statistic::STime))
        .map(|s| compute_s_time(s, grid, mask));
    let s_d = wants(Statistic::Sd).then(|| s_d_value(rho_st, rho_sep, mask, grid.cell_volume()));
    StatisticSet {
        s: s.filter(|_| wants(Statistic::S)),
        s_space,
        s_time,
        s_d,
    }
}
