//! Extreme rank length (ERL) global envelopes and Monte Carlo p-values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel;

/// `n + 1` stacked function samples of equal length `d`; row 0 is the data.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let n_rows = rows.len();
        let mut data = Vec::with_capacity(n_rows * cols);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Ragged {
                    row: i,
                    len: r.len(),
                    expected: cols,
                });
            }
            data.extend(r);
        }
        Ok(Self {
            rows: n_rows,
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    /// Applies `f` to every entry.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Two-sided pointwise ranks and their per-row ascending sort.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankMatrix {
    rows: usize,
    cols: usize,
    ranks: Vec<u32>,
    sorted: Vec<u32>,
}

impl RankMatrix {
    /// Builds from explicit ranks (row-major), sorting each row.
    pub fn from_ranks(rows: usize, cols: usize, ranks: Vec<u32>) -> Self {
        assert_eq!(ranks.len(), rows * cols);
        let mut sorted = ranks.clone();
        if cols > 0 {
            sorted.chunks_mut(cols).for_each(|r| r.sort_unstable());
        }
        Self {
            rows,
            cols,
            ranks,
            sorted,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rank(&self, i: usize, j: usize) -> u32 {
        self.ranks[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.ranks[i * self.cols..(i + 1) * self.cols]
    }

    /// Row `i`'s ranks in ascending order.
    pub fn sorted_row(&self, i: usize) -> &[u32] {
        &self.sorted[i * self.cols..(i + 1) * self.cols]
    }
}

/// `R_ij = min(#{i' : S_i'j ≤ S_ij}, #{i' : S_i'j ≥ S_ij})`, counts including `i`.
pub fn pointwise_ranks(samples: &SampleMatrix) -> Result<RankMatrix> {
    if samples.rows < 2 {
        return Err(Error::InvalidParameter(format!(
            "need the data and at least one replicate, got {} rows",
            samples.rows
        )));
    }
    let (rows, cols) = (samples.rows, samples.cols);
    let by_column: Vec<Vec<u32>> = parallel::map_range(cols, |j| {
        let col = samples.column(j);
        let mut sorted = col.clone();
        sorted.sort_by(f64::total_cmp);
        col.iter()
            .map(|&v| {
                let le = sorted.partition_point(|&x| x <= v);
                let ge = rows - sorted.partition_point(|&x| x < v);
                le.min(ge) as u32
            })
            .collect()
    });
    let mut ranks = vec![0u32; rows * cols];
    for (j, col) in by_column.into_iter().enumerate() {
        for (i, r) in col.into_iter().enumerate() {
            ranks[i * cols + j] = r;
        }
    }
    Ok(RankMatrix::from_ranks(rows, cols, ranks))
}

/// `M_i = #{i' : R_i' ≺ R_i} / (n + 1)` under the lexicographic order of the
/// sorted rank vectors. Small values are extreme.
pub fn erl_measures(rm: &RankMatrix) -> Vec<f64> {
    let rows = rm.rows;
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&a, &b| rm.sorted_row(a).cmp(rm.sorted_row(b)));
    let mut measures = vec![0.0; rows];
    let mut first_equal = 0;
    for k in 0..rows {
        if k > 0 && rm.sorted_row(order[k]) != rm.sorted_row(order[k - 1]) {
            first_equal = k;
        }
        measures[order[k]] = first_equal as f64 / rows as f64;
    }
    measures
}

/// `p = #{i : M_i ≤ M_data} / (n + 1)`.
pub fn mc_pvalue(measures: &[f64], data_index: usize) -> f64 {
    let m = measures[data_index];
    measures.iter().filter(|&&v| v <= m).count() as f64 / measures.len() as f64
}

/// `p = #{i : S_d,i ≥ S_d,data} / (n + 1)`; large values are significant.
pub fn deviation_pvalue(values: &[f64], data_index: usize) -> f64 {
    let v = values[data_index];
    values.iter().filter(|&&x| x >= v).count() as f64 / values.len() as f64
}

/// Global envelope test outcome. `exits[k]` is −1 below, 0 inside, +1 above.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeResult {
    pub data: Vec<f64>,
    pub low: Vec<f64>,
    pub upp: Vec<f64>,
    pub measures: Vec<f64>,
    pub m_alpha: f64,
    pub p_value: f64,
    pub alpha: f64,
}

impl EnvelopeResult {
    pub fn above(&self) -> Vec<bool> {
        self.data.iter().zip(&self.upp).map(|(d, u)| d > u).collect()
    }

    pub fn below(&self) -> Vec<bool> {
        self.data.iter().zip(&self.low).map(|(d, l)| d < l).collect()
    }

    pub fn exit_codes(&self) -> Vec<i8> {
        self.data
            .iter()
            .zip(self.low.iter().zip(&self.upp))
            .map(|(d, (l, u))| {
                if d < l {
                    -1
                } else if d > u {
                    1
                } else {
                    0
                }
            })
            .collect()
    }

    pub fn rejects(&self) -> bool {
        self.p_value <= self.alpha
    }
}

/// Smallest number of samples for which level `alpha` is attainable.
pub fn min_samples_for_level(alpha: f64) -> usize {
    (1.0 / alpha - 1e-9).ceil() as usize
}

/// `100(1 − α)%` ERL global envelope with the data in row 0.
pub fn global_envelope(samples: &SampleMatrix, measures: &[f64], alpha: f64) -> Result<EnvelopeResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let rows = samples.rows;
    let needed = min_samples_for_level(alpha);
    if rows < needed {
        return Err(Error::InsufficientReplicates {
            alpha,
            needed,
            got: rows,
        });
    }
    assert_eq!(measures.len(), rows, "one measure per sample");
    let budget = alpha * rows as f64 + 1e-9;
    // largest observed measure m with #{M_i < m} ≤ α(n+1)
    let mut sorted = measures.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut m_alpha = sorted[0];
    for &m in &sorted {
        let below = sorted.partition_point(|&x| x < m);
        if below as f64 <= budget {
            m_alpha = m;
        } else {
            break;
        }
    }
    let retained: Vec<usize> = (0..rows).filter(|&i| measures[i] >= m_alpha).collect();
    let cols = samples.cols;
    let mut low = vec![f64::INFINITY; cols];
    let mut upp = vec![f64::NEG_INFINITY; cols];
    for &i in &retained {
        for (k, &v) in samples.row(i).iter().enumerate() {
            low[k] = low[k].min(v);
            upp[k] = upp[k].max(v);
        }
    }
    Ok(EnvelopeResult {
        data: samples.row(0).to_vec(),
        low,
        upp,
        measures: measures.to_vec(),
        m_alpha,
        p_value: mc_pvalue(measures, 0),
        alpha,
    })
}

/// Ranks, ERL measures and envelope in one call.
pub fn envelope_test(samples: &SampleMatrix, alpha: f64) -> Result<EnvelopeResult> {
    let rm = pointwise_ranks(samples)?;
    let measures = erl_measures(&rm);
    global_envelope(samples, &measures, alpha)
}
