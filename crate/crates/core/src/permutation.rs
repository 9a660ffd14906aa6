//! Permutation-based Monte Carlo tests of first-order separability.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envelope::{deviation_pvalue, envelope_test, EnvelopeResult, SampleMatrix};
use crate::error::{Error, Result};
use crate::geometry::{build_grid, Grid3, Point, PointPattern};
use crate::kernels::{BandwidthMethod, Bandwidths, KernelBasis};
use crate::parallel;
use crate::stats::{evaluate_statistics, EvaluationMask, Statistic, StatisticSet};

/// Independent RNG stream for replicate `index` (the data is index 0).
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform random permutation of `0..n`.
pub fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

/// Reassigns the observed times to the fixed locations by a uniform random
/// permutation.
pub fn permute_times<R: Rng + ?Sized>(pattern: &PointPattern, rng: &mut R) -> PointPattern {
    let pts = pattern.points();
    let perm = random_permutation(pts.len(), rng);
    let points = pts
        .iter()
        .zip(&perm)
        .map(|(p, &j)| Point::new(p.x, p.y, pts[j].t))
        .collect();
    PointPattern::from_trusted(points, pattern.window().clone())
}

/// How the bandwidths are obtained. Data-driven choices are made once from
/// the observed pattern and reused for every replicate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum BandwidthSpec {
    Fixed { epsilon: f64, delta: f64 },
    RuleOfThumb,
    LikelihoodCv,
}

impl BandwidthSpec {
    pub fn resolve(&self, pattern: &PointPattern) -> Result<Bandwidths> {
        match *self {
            BandwidthSpec::Fixed { epsilon, delta } => Bandwidths::fixed(epsilon, delta),
            BandwidthSpec::RuleOfThumb => Bandwidths::select(pattern, BandwidthMethod::RuleOfThumb),
            BandwidthSpec::LikelihoodCv => Bandwidths::select(pattern, BandwidthMethod::LikelihoodCv),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermTestConfig {
    pub n_perm: usize,
    pub statistic: Statistic,
    pub grid: [usize; 3],
    pub bandwidths: BandwidthSpec,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for PermTestConfig {
    fn default() -> Self {
        Self {
            n_perm: 1999,
            statistic: Statistic::S,
            grid: [25, 25, 20],
            bandwidths: BandwidthSpec::RuleOfThumb,
            alpha: 0.05,
            seed: 1,
        }
    }
}

/// Checks `n_rep ≥ 19` and `α (n_rep + 1) ≥ 1`.
pub fn validate_replicates(n_rep: usize, alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if n_rep < 19 {
        return Err(Error::InvalidParameter(format!("need at least 19 replicates, got {n_rep}")));
    }
    if alpha * (n_rep + 1) as f64 + 1e-9 < 1.0 {
        return Err(Error::InsufficientReplicates {
            alpha,
            needed: crate::envelope::min_samples_for_level(alpha),
            got: n_rep + 1,
        });
    }
    Ok(())
}

impl PermTestConfig {
    pub fn validate(&self) -> Result<()> {
        validate_replicates(self.n_perm, self.alpha)?;
        if self.grid.contains(&0) {
            return Err(Error::InvalidParameter(format!("grid dimensions must be positive, got {:?}", self.grid)));
        }
        Ok(())
    }
}

/// Deviation test outcome; `values[0]` is the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationResult {
    pub values: Vec<f64>,
    pub p_value: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestOutcome {
    Envelope(EnvelopeResult),
    Deviation(DeviationResult),
}

impl TestOutcome {
    pub fn p_value(&self) -> f64 {
        match self {
            TestOutcome::Envelope(e) => e.p_value,
            TestOutcome::Deviation(d) => d.p_value,
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            TestOutcome::Envelope(e) => e.alpha,
            TestOutcome::Deviation(d) => d.alpha,
        }
    }

    pub fn rejects(&self) -> bool {
        self.p_value() <= self.alpha()
    }

    pub fn envelope(&self) -> Option<&EnvelopeResult> {
        match self {
            TestOutcome::Envelope(e) => Some(e),
            TestOutcome::Deviation(_) => None,
        }
    }
}

fn functional_values(set: &StatisticSet, stat: Statistic) -> Vec<f64> {
    let sample = match stat {
        Statistic::S => &set.s,
        Statistic::SSpace => &set.s_space,
        Statistic::STime => &set.s_time,
        Statistic::Sd => unreachable!("S_d is scalar"),
    };
    sample.as_ref().expect("statistic was evaluated").values.clone()
}

/// Builds one outcome per requested statistic from the data set (first) and
/// the replicate sets.
pub fn assemble_outcomes(
    sets: &[StatisticSet],
    which: &[Statistic],
    alpha: f64,
) -> Result<Vec<(Statistic, TestOutcome)>> {
    which
        .iter()
        .map(|&stat| {
            let outcome = if stat.is_functional() {
                let rows = sets.iter().map(|s| functional_values(s, stat)).collect();
                TestOutcome::Envelope(envelope_test(&SampleMatrix::from_rows(rows)?, alpha)?)
            } else {
                let values: Vec<f64> = sets.iter().map(|s| s.s_d.expect("S_d was evaluated")).collect();
                TestOutcome::Deviation(DeviationResult {
                    p_value: deviation_pvalue(&values, 0),
                    values,
                    alpha,
                })
            };
            Ok((stat, outcome))
        })
        .collect()
}

/// Everything shared by the data and its permutations.
#[derive(Clone, Debug)]
pub struct PermutationSetup {
    pub bandwidths: Bandwidths,
    pub grid: Grid3,
    pub basis: KernelBasis,
    pub rho_sep: Vec<f64>,
    pub mask: EvaluationMask,
}

impl PermutationSetup {
    pub fn new(pattern: &PointPattern, grid: [usize; 3], bandwidths: BandwidthSpec) -> Result<Self> {
        if pattern.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "permutation test needs at least 2 points, got {}",
                pattern.len()
            )));
        }
        let bw = bandwidths.resolve(pattern)?;
        let g = build_grid(pattern.window(), grid[0], grid[1], grid[2])?;
        let basis = KernelBasis::new(pattern, &bw, &g)?;
        let field = basis.field();
        let mask = EvaluationMask::from_field(&field)?;
        Ok(Self {
            bandwidths: bw,
            grid: g,
            rho_sep: field.rho_sep,
            basis,
            mask,
        })
    }

    /// Statistics of the data (`index == 0`) or of permutation `index`.
    pub fn replicate(&self, seed: u64, index: u64, which: &[Statistic]) -> StatisticSet {
        let rho_st = if index == 0 {
            self.basis.rho_st(None)
        } else {
            let mut rng = replicate_rng(seed, index);
            let perm = random_permutation(self.basis.n(), &mut rng);
            self.basis.rho_st(Some(&perm))
        };
        evaluate_statistics(&rho_st, &self.rho_sep, &self.grid, &self.mask, which)
    }
}

/// Runs the permutation test for several statistics on the same permutations.
pub fn run_permutation_tests(
    pattern: &PointPattern,
    config: &PermTestConfig,
    which: &[Statistic],
) -> Result<Vec<(Statistic, TestOutcome)>> {
    config.validate()?;
    let setup = PermutationSetup::new(pattern, config.grid, config.bandwidths)?;
    run_permutation_tests_with(&setup, config, which)
}

/// As [`run_permutation_tests`] with a prepared setup; `config.grid` and
/// `config.bandwidths` are taken from the setup.
pub fn run_permutation_tests_with(
    setup: &PermutationSetup,
    config: &PermTestConfig,
    which: &[Statistic],
) -> Result<Vec<(Statistic, TestOutcome)>> {
    validate_replicates(config.n_perm, config.alpha)?;
    let sets = parallel::map_range(config.n_perm + 1, |r| setup.replicate(config.seed, r as u64, which));
    assemble_outcomes(&sets, which, config.alpha)
}

/// Runs the permutation test for `config.statistic`.
pub fn run_permutation_test(pattern: &PointPattern, config: &PermTestConfig) -> Result<TestOutcome> {
    let mut out = run_permutation_tests(pattern, config, &[config.statistic])?;
    Ok(out.pop().expect("one statistic requested").1)
}
