//! χ² test of independence between spatial and temporal quantile cells.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::geometry::PointPattern;
use crate::util::{quantile_sorted_weibull, sorted_copy};

const TAIL_EPS: f64 = 1e-16;
const TAIL_MAX_ITER: usize = 100_000;

/// `k + 1` boundaries at the `j/k` sample quantiles with `±∞` outermost.
pub fn quantile_partition(values: &[f64], k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidParameter("partition needs at least one cell".into()));
    }
    if values.len() < k {
        return Err(Error::InvalidParameter(format!(
            "{} values cannot fill {k} cells",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("partition input".into()));
    }
    let sorted = sorted_copy(values);
    let distinct = 1 + sorted.windows(2).filter(|w| w[0] != w[1]).count();
    if distinct < k {
        return Err(Error::DegeneratePartition { distinct, cells: k });
    }
    let mut b = Vec::with_capacity(k + 1);
    b.push(f64::NEG_INFINITY);
    b.extend((1..k).map(|j| quantile_sorted_weibull(&sorted, j as f64 / k as f64)));
    b.push(f64::INFINITY);
    Ok(b)
}

/// Cell index of `v`: cells are `(b_j, b_{j+1}]`, so boundary ties fall low.
pub fn partition_cell(boundaries: &[f64], v: f64) -> usize {
    let interior = &boundaries[1..boundaries.len() - 1];
    interior.partition_point(|&b| b < v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSqResult {
    /// `counts[i][j]`: spatial cell `i`, temporal cell `j`.
    pub counts: Vec<Vec<u64>>,
    pub expected: Vec<Vec<f64>>,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Cells with expected count below 5.
    pub low_expected: usize,
}

impl ChiSqResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

/// Pearson χ² for an `I × J` contingency table.
pub fn chisq_from_table(counts: &[Vec<u64>]) -> Result<ChiSqResult> {
    let rows = counts.len();
    let cols = counts.first().map_or(0, Vec::len);
    for (row, r) in counts.iter().enumerate() {
        if r.len() != cols {
            return Err(Error::Ragged {
                row,
                len: r.len(),
                expected: cols,
            });
        }
    }
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidParameter(format!("table must be at least 2x2, got {rows}x{cols}")));
    }
    let row_tot: Vec<f64> = counts.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_tot: Vec<f64> = (0..cols)
        .map(|j| counts.iter().map(|r| r[j]).sum::<u64>() as f64)
        .collect();
    if row_tot.iter().chain(&col_tot).any(|&t| t == 0.0) {
        return Err(Error::EmptyMargin);
    }
    let n: f64 = row_tot.iter().sum();
    let expected: Vec<Vec<f64>> = row_tot
        .iter()
        .map(|&r| col_tot.iter().map(|&c| r * c / n).collect())
        .collect();
    let mut statistic = 0.0;
    let mut low_expected = 0;
    for (r, e) in counts.iter().zip(&expected) {
        for (&o, &e) in r.iter().zip(e) {
            statistic += (o as f64 - e).powi(2) / e;
            low_expected += usize::from(e < 5.0);
        }
    }
    let df = (rows - 1) * (cols - 1);
    Ok(ChiSqResult {
        counts: counts.to_vec(),
        expected,
        p_value: chisq_tail(statistic, df)?,
        statistic,
        df,
        low_expected,
    })
}

/// Spatial cells are products of the `x` and `y` quantile cells
/// (`i = ix + kx·iy`); temporal cells come from the `t` quantiles.
pub fn chisq_test(pattern: &PointPattern, kx: usize, ky: usize, kt: usize) -> Result<ChiSqResult> {
    if pattern.is_empty() {
        return Err(Error::EmptyPattern);
    }
    let (xs, ys, ts) = (pattern.xs(), pattern.ys(), pattern.ts());
    let bx = quantile_partition(&xs, kx)?;
    let by = quantile_partition(&ys, ky)?;
    let bt = quantile_partition(&ts, kt)?;
    let mut counts = vec![vec![0u64; kt]; kx * ky];
    for ((&x, &y), &t) in xs.iter().zip(&ys).zip(&ts) {
        let i = partition_cell(&bx, x) + kx * partition_cell(&by, y);
        counts[i][partition_cell(&bt, t)] += 1;
    }
    chisq_from_table(&counts)
}

/// Upper tail `P(χ²_df > x) = Q(df/2, x/2)`.
pub fn chisq_tail(x: f64, df: usize) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("chi-square statistic {x}")));
    }
    if df == 0 {
        return Err(Error::InvalidParameter("chi-square needs df >= 1".into()));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    Ok(gamma_q(df as f64 / 2.0, x / 2.0))
}

/// Regularized upper incomplete gamma `Q(a, x)`.
fn gamma_q(a: f64, x: f64) -> f64 {
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..TAIL_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * TAIL_EPS {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

/// Modified Lentz evaluation of the continued fraction.
fn gamma_q_cf(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..TAIL_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < TAIL_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point, Window};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Simpson integral of the χ² density over `[x, upper]`.
    fn tail_by_quadrature(x: f64, df: usize, upper: f64) -> f64 {
        let k = df as f64 / 2.0;
        let lnorm = -(k * 2f64.ln() + ln_gamma(k));
        let f = |u: f64| (lnorm + (k - 1.0) * u.ln() - u / 2.0).exp();
        let n = 2_000_000;
        let h = (upper - x) / n as f64;
        let mut s = f(x) + f(upper);
        for i in 1..n {
            s += f(x + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn partition_of_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let b = quantile_partition(&v, 4).unwrap();
        assert_eq!(b.len(), 5);
        assert_eq!(b[0], f64::NEG_INFINITY);
        assert_eq!(b[4], f64::INFINITY);
        assert!((b[1] - 25.25).abs() < 1e-12);
        assert!((b[2] - 50.5).abs() < 1e-12);
        assert!((b[3] - 75.75).abs() < 1e-12);
        let mut per_cell = [0; 4];
        for &x in &v {
            // direct count against the boundaries
            let c = (1..4).filter(|&j| x > b[j]).count();
            assert_eq!(c, partition_cell(&b, x));
            per_cell[c] += 1;
        }
        assert_eq!(per_cell, [25; 4]);
    }

    #[test]
    fn partition_single_cell_and_degenerate() {
        let b = quantile_partition(&[3.0, 1.0, 2.0], 1).unwrap();
        assert_eq!(b, vec![f64::NEG_INFINITY, f64::INFINITY]);
        assert_eq!(partition_cell(&b, 2.0), 0);
        assert!(matches!(
            quantile_partition(&[1.0, 1.0, 2.0, 2.0], 3),
            Err(Error::DegeneratePartition { distinct: 2, cells: 3 })
        ));
    }

    #[test]
    fn boundary_ties_go_low() {
        let b = vec![f64::NEG_INFINITY, 2.0, 4.0, f64::INFINITY];
        assert_eq!(partition_cell(&b, 2.0), 0);
        assert_eq!(partition_cell(&b, 2.0 + 1e-12), 1);
        assert_eq!(partition_cell(&b, 4.0), 1);
        assert_eq!(partition_cell(&b, 9.0), 2);
    }

    #[test]
    fn two_by_two_table() {
        let r = chisq_from_table(&[vec![10, 20], vec![30, 40]]).unwrap();
        let e = [[12.0, 18.0], [28.0, 42.0]];
        let o = [[10.0, 20.0], [30.0, 40.0]];
        let mut brute = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                assert!((r.expected[i][j] - e[i][j]).abs() < 1e-12);
                brute += (o[i][j] - e[i][j]) * (o[i][j] - e[i][j]) / e[i][j];
            }
        }
        assert!((r.statistic - brute).abs() < 1e-12);
        assert!((r.statistic - 0.7937).abs() < 1e-4);
        assert_eq!(r.df, 1);
        assert_eq!(r.low_expected, 0);
    }

    #[test]
    fn proportional_table_gives_zero() {
        let r = chisq_from_table(&[vec![2, 4, 6], vec![4, 8, 12]]).unwrap();
        assert!(r.statistic.abs() < 1e-12);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.df, 2);
    }

    #[test]
    fn empty_margin() {
        assert!(matches!(
            chisq_from_table(&[vec![0, 0], vec![1, 2]]),
            Err(Error::EmptyMargin)
        ));
    }

    #[test]
    fn tail_closed_forms() {
        for x in [0.1, 1.0, 2.0, 10.0, 50.0] {
            assert!((chisq_tail(x, 2).unwrap() - (-x / 2.0f64).exp()).abs() < 1e-12);
        }
        assert!((chisq_tail(2.0, 2).unwrap() - 0.3678794).abs() < 1e-7);
        // df = 1: erfc(sqrt(x/2)) from the C math library
        let reference = [
            (0.01, 0.920344325445942),
            (0.5, 0.4795001221869535),
            (3.0, 0.08326451666355043),
            (20.0, 7.744216431044074e-06),
        ];
        for (x, oracle) in reference {
            assert!((chisq_tail(x, 1).unwrap() - oracle).abs() < 1e-12);
        }
        assert_eq!(chisq_tail(0.0, 7).unwrap(), 1.0);
        assert!(chisq_tail(f64::NAN, 1).is_err());
    }

    #[test]
    fn tail_against_quadrature() {
        let p = chisq_tail(3.841459, 1).unwrap();
        let q = tail_by_quadrature(3.841459, 1, 200.0);
        assert!((p - q).abs() < 1e-9, "{p} vs {q}");
        assert!((p - 0.05).abs() < 1e-6);
        for (x, df) in [(5.0, 3), (12.0, 8), (30.0, 19)] {
            let q = tail_by_quadrature(x, df, 400.0);
            assert!((chisq_tail(x, df).unwrap() - q).abs() < 1e-9);
        }
    }

    #[test]
    fn tail_strictly_decreasing() {
        for df in [1, 3, 8, 24] {
            let mut prev = 1.0;
            for k in 1..200 {
                let p = chisq_tail(k as f64 * 0.5, df).unwrap();
                assert!(p < prev);
                prev = p;
            }
        }
    }

    fn random_pattern(n: usize, seed: u64) -> PointPattern {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| Point::new(rng.random(), rng.random(), rng.random()))
            .collect();
        PointPattern::new(pts, Window::unit_cube()).unwrap()
    }

    #[test]
    fn margins_and_monotone_invariance() {
        let p = random_pattern(400, 5);
        let r = chisq_test(&p, 3, 3, 4).unwrap();
        assert_eq!(r.counts.len(), 9);
        let n: u64 = r.counts.iter().flatten().sum();
        assert_eq!(n, 400);
        for (c, e) in r.counts.iter().zip(&r.expected) {
            let co: u64 = c.iter().sum();
            let ce: f64 = e.iter().sum();
            assert!((co as f64 - ce).abs() < 1e-9);
        }
        for j in 0..4 {
            let co: u64 = r.counts.iter().map(|c| c[j]).sum();
            let ce: f64 = r.expected.iter().map(|e| e[j]).sum();
            assert!((co as f64 - ce).abs() < 1e-9);
        }
        let w = Window::rect(0.0, 1.0, 0.0, 8.0, -1.0, 3.0).unwrap();
        let pts = p
            .points()
            .iter()
            .map(|q| Point::new(q.x.powi(3), 8.0 * q.y.powf(0.5), 4.0 * q.t - 1.0))
            .collect();
        let r2 = chisq_test(&PointPattern::new(pts, w).unwrap(), 3, 3, 4).unwrap();
        assert_eq!(r.counts, r2.counts);
        assert!((r.statistic - r2.statistic).abs() < 1e-9);
    }
}
