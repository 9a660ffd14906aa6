//! Simulation studies: repeat simulate-then-test over a list of
//! non-separability levels and tabulate rejection proportions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::chisq::chisq_test;
use crate::error::{Error, Result};
use crate::geometry::PointPattern;
use crate::parallel;
use crate::permutation::{replicate_rng, run_permutation_tests, BandwidthSpec, PermTestConfig};
use crate::sim::{BaseCase, BurstModel, LgcpModel, LgcpSimulator};
use crate::stats::Statistic;

/// Which LGCP coefficient the experiment's `gammas` list drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LgcpParameter {
    GammaPrime,
    GammaDprime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExperimentModel {
    /// Poisson with a localized burst; `ν` set for the target mean count.
    Burst { case: BaseCase, target_n: f64 },
    /// LGCP with `gamma` assigned to `vary`. `beta0` optionally per level.
    Lgcp {
        model: LgcpModel,
        vary: LgcpParameter,
        #[serde(default)]
        beta0: Option<Vec<f64>>,
    },
}

impl ExperimentModel {
    pub fn label(&self) -> String {
        match self {
            ExperimentModel::Burst { case, .. } => case.tag().to_string(),
            ExperimentModel::Lgcp { vary, .. } => match vary {
                LgcpParameter::GammaPrime => "lgcp-gamma-prime".into(),
                LgcpParameter::GammaDprime => "lgcp-gamma-dprime".into(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ExperimentModel,
    pub gammas: Vec<f64>,
    pub repetitions: usize,
    pub n_perm: usize,
    pub alpha: f64,
    pub grid: [usize; 3],
    pub bandwidths: BandwidthSpec,
    pub statistics: Vec<Statistic>,
    /// Quantile cells per axis; `None` skips the χ² test.
    pub chisq_cells: Option<[usize; 3]>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ExperimentModel::Burst {
                case: BaseCase::I,
                target_n: 600.0,
            },
            gammas: vec![0.0],
            repetitions: 1000,
            n_perm: 1999,
            alpha: 0.05,
            grid: [25, 25, 20],
            bandwidths: BandwidthSpec::RuleOfThumb,
            statistics: Statistic::ALL.to_vec(),
            chisq_cells: Some([4, 4, 4]),
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |sp| s[..sp.start].lines().count().max(1)),
            msg: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let ExperimentModel::Lgcp { beta0: Some(b), .. } = &self.model {
            if b.len() != self.gammas.len() {
                return Err(Error::InvalidParameter(format!(
                    "{} beta0 values for {} gamma levels",
                    b.len(),
                    self.gammas.len()
                )));
            }
        }
        if self.repetitions > 0 {
            self.perm_config(0).validate()?;
        }
        Ok(())
    }

    fn perm_config(&self, seed: u64) -> PermTestConfig {
        PermTestConfig {
            n_perm: self.n_perm,
            statistic: self.statistics.first().copied().unwrap_or(Statistic::S),
            grid: self.grid,
            bandwidths: self.bandwidths,
            alpha: self.alpha,
            seed,
        }
    }
}

/// Per-level outcome: mean count and rejection proportions per test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub model: String,
    pub gamma: f64,
    pub mean_n: f64,
    /// Burst rate `ν`, or `β₀` for LGCP.
    pub scale: f64,
    pub repetitions: usize,
    /// `(test tag, rejection proportion)` in table order.
    pub rates: Vec<(String, f64)>,
}

impl ExperimentRow {
    pub fn rate(&self, tag: &str) -> Option<f64> {
        self.rates.iter().find(|(t, _)| t == tag).map(|&(_, r)| r)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentTable {
    /// Whitespace-aligned text table.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let Some(first) = self.rows.first() else {
            return out;
        };
        let _ = write!(out, "{:<18} {:>8} {:>8} {:>8}", "model", "gamma", "n_bar", "scale");
        for (tag, _) in &first.rates {
            let _ = write!(out, " {tag:>7}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(
                out,
                "{:<18} {:>8} {:>8.1} {:>8.2}",
                row.model, row.gamma, row.mean_n, row.scale
            );
            for (_, r) in &row.rates {
                let _ = write!(out, " {r:>7.3}");
            }
            out.push('\n');
        }
        out
    }
}

enum Simulator {
    Burst(BurstModel),
    Lgcp(Box<LgcpSimulator>),
}

impl Simulator {
    fn simulate(&self, rng: &mut rand_chacha::ChaCha8Rng) -> Result<PointPattern> {
        match self {
            Simulator::Burst(m) => m.simulate(rng),
            Simulator::Lgcp(s) => s.simulate(rng),
        }
    }
}

fn level_simulator(model: &ExperimentModel, level: usize, gamma: f64) -> Result<(Simulator, f64)> {
    match model {
        ExperimentModel::Burst { case, target_n } => {
            let m = BurstModel::for_target(*case, gamma, *target_n)?;
            let nu = m.nu;
            Ok((Simulator::Burst(m), nu))
        }
        ExperimentModel::Lgcp { model, vary, beta0 } => {
            let mut m = model.clone();
            match vary {
                LgcpParameter::GammaPrime => m.gamma_prime = gamma,
                LgcpParameter::GammaDprime => m.gamma_dprime = gamma,
            }
            if let Some(b) = beta0 {
                m.beta0 = b[level];
            }
            let b0 = m.beta0;
            Ok((Simulator::Lgcp(Box::new(LgcpSimulator::new(m)?)), b0))
        }
    }
}

/// Test tags in table order.
pub fn column_tags(cfg: &ExperimentConfig) -> Vec<String> {
    let mut tags: Vec<String> = Statistic::ALL
        .iter()
        .filter(|s| cfg.statistics.contains(s))
        .map(|s| s.tag().to_string())
        .collect();
    if cfg.chisq_cells.is_some() {
        tags.push("chisq".into());
    }
    tags
}

/// Rejection decisions of one simulated pattern, in [`column_tags`] order.
fn one_repetition(cfg: &ExperimentConfig, sim: &Simulator, stream: u64) -> Result<(usize, Vec<bool>)> {
    let mut rng = replicate_rng(cfg.seed, stream);
    let pattern = sim.simulate(&mut rng)?;
    let which: Vec<Statistic> = Statistic::ALL
        .iter()
        .copied()
        .filter(|s| cfg.statistics.contains(s))
        .collect();
    let perm_seed = cfg.seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut decisions: Vec<bool> = run_permutation_tests(&pattern, &cfg.perm_config(perm_seed), &which)?
        .iter()
        .map(|(_, o)| o.rejects())
        .collect();
    if let Some([kx, ky, kt]) = cfg.chisq_cells {
        decisions.push(chisq_test(&pattern, kx, ky, kt)?.rejects(cfg.alpha));
    }
    Ok((pattern.len(), decisions))
}

/// Runs every level of the experiment. Zero repetitions give an empty table.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentTable> {
    cfg.validate()?;
    if cfg.repetitions == 0 {
        return Ok(ExperimentTable::default());
    }
    let tags = column_tags(cfg);
    let mut rows = Vec::with_capacity(cfg.gammas.len());
    for (level, &gamma) in cfg.gammas.iter().enumerate() {
        let (sim, scale) = level_simulator(&cfg.model, level, gamma)?;
        let base = (level * cfg.repetitions) as u64;
        let reps = parallel::map_range(cfg.repetitions, |r| one_repetition(cfg, &sim, base + r as u64));
        let mut counts = vec![0usize; tags.len()];
        let mut total_n = 0usize;
        for rep in reps {
            let (n, decisions) = rep?;
            total_n += n;
            for (c, d) in counts.iter_mut().zip(decisions) {
                *c += usize::from(d);
            }
        }
        let reps = cfg.repetitions as f64;
        rows.push(ExperimentRow {
            model: cfg.model.label(),
            gamma,
            mean_n: total_n as f64 / reps,
            scale,
            repetitions: cfg.repetitions,
            rates: tags.iter().cloned().zip(counts.iter().map(|&c| c as f64 / reps)).collect(),
        });
    }
    Ok(ExperimentTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            model: ExperimentModel::Burst {
                case: BaseCase::I,
                target_n: 150.0,
            },
            gammas: vec![0.0],
            repetitions: 2,
            n_perm: 19,
            grid: [12, 12, 10],
            chisq_cells: Some([2, 2, 2]),
            ..Default::default()
        }
    }

    #[test]
    fn zero_repetitions_give_empty_table() {
        let cfg = ExperimentConfig {
            repetitions: 0,
            ..tiny()
        };
        let t = run_experiment(&cfg).unwrap();
        assert!(t.rows.is_empty());
        assert_eq!(t.render(), "");
    }

    #[test]
    fn small_run_shape_and_determinism() {
        let cfg = tiny();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        let row = &a.rows[0];
        let tags: Vec<&str> = row.rates.iter().map(|(t, _)| t.as_str()).collect();
        assert_eq!(tags, ["S", "Sspace", "Stime", "Sd", "chisq"]);
        assert!(row.rates.iter().all(|(_, r)| [0.0, 0.5, 1.0].contains(r)));
        assert!((row.scale - 150.0).abs() < 1e-9);
        assert!(row.mean_n > 100.0 && row.mean_n < 200.0);
        assert!(a.render().lines().count() == 2);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ExperimentConfig {
            model: ExperimentModel::Lgcp {
                model: LgcpModel::default(),
                vary: LgcpParameter::GammaDprime,
                beta0: Some(vec![5.05, 4.9]),
            },
            gammas: vec![0.0, 1.0],
            ..tiny()
        };
        let s = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&s).unwrap();
        assert_eq!(back, cfg);
        let bad = ExperimentConfig {
            gammas: vec![0.0],
            ..cfg
        };
        assert!(bad.validate().is_err());
    }
}
