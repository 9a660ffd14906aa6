use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use stsep::chisq::chisq_test;
use stsep::experiment::{run_experiment, ExperimentConfig};
use stsep::geometry::{build_grid, PointPattern, Window};
use stsep::io::{
    format_grid_csv, read_pattern, read_window, sample_coordinates, to_json, write_json, write_pattern, TestReport,
};
use stsep::kernels::{estimate_field, Bandwidths};
use stsep::permutation::{replicate_rng, run_permutation_tests_with, BandwidthSpec, PermTestConfig, PermutationSetup};
use stsep::recon::{run_reconstruction_tests, ReconConfig, ReconTarget};
use stsep::sim::{BaseCase, BurstModel, LgcpModel, LgcpSimulator};
use stsep::stats::{EvaluationMask, Statistic};

mod manifest;

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "stsep", version, about = "First-order separability tests for spatio-temporal point patterns")]
struct Cli {
    /// Base seed for every random stream
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true, env = "STSEP_THREADS")]
    threads: Option<usize>,
    /// Output file or directory, depending on the command
    #[arg(short = 'o', long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a pattern on the unit cube
    #[command(subcommand)]
    Simulate(SimulateCmd),
    /// Kernel intensity estimates on a grid
    Estimate(EstimateArgs),
    /// Separability tests
    #[command(subcommand)]
    Test(TestCmd),
    /// Stochastic reconstructions with separable first-order structure
    Reconstruct(ReconstructArgs),
    /// Rejection-rate study from a TOML configuration
    Experiment(ExperimentArgs),
}

#[derive(Subcommand)]
enum SimulateCmd {
    /// Poisson process with a localized burst
    Burst(BurstArgs),
    /// Log-Gaussian Cox process
    Lgcp(LgcpArgs),
}

#[derive(Args)]
struct BurstArgs {
    #[arg(long, value_parser = parse_case)]
    case: BaseCase,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 600.0)]
    target_n: f64,
}

#[derive(Args)]
struct LgcpArgs {
    #[arg(long, default_value_t = 5.05)]
    beta0: f64,
    #[arg(long, default_value_t = 0.25)]
    beta1: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma_prime: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma_dprime: f64,
    #[arg(long, default_value_t = 0.5)]
    sigma1: f64,
    #[arg(long, default_value_t = 0.5)]
    sigma2: f64,
    #[arg(long, default_value_t = 0.06)]
    phi1: f64,
    #[arg(long, default_value_t = 0.05)]
    phi2: f64,
    #[arg(long, value_parser = parse_triple, default_value = "20,20,20")]
    grid: [usize; 3],
}

#[derive(Clone, Copy, ValueEnum)]
enum BwMethod {
    Auto,
    Cv,
}

#[derive(Args)]
struct BandwidthArgs {
    /// Data-driven bandwidths: rule of thumb or likelihood cross-validation
    #[arg(long, value_enum, conflicts_with_all = ["bw_space", "bw_time"])]
    bw: Option<BwMethod>,
    #[arg(long, requires = "bw_time")]
    bw_space: Option<f64>,
    #[arg(long, requires = "bw_space")]
    bw_time: Option<f64>,
}

impl BandwidthArgs {
    fn spec(&self) -> BandwidthSpec {
        match (self.bw, self.bw_space, self.bw_time) {
            (_, Some(epsilon), Some(delta)) => BandwidthSpec::Fixed { epsilon, delta },
            (Some(BwMethod::Cv), _, _) => BandwidthSpec::LikelihoodCv,
            _ => BandwidthSpec::RuleOfThumb,
        }
    }
}

#[derive(Args)]
struct Inputs {
    /// Pattern CSV with header x,y,t
    pattern: PathBuf,
    /// Window file (`rect ...` or `poly ...`)
    window: PathBuf,
}

impl Inputs {
    fn load(&self) -> Result<(Window, PointPattern)> {
        let window = read_window(&self.window).with_context(|| format!("reading {}", self.window.display()))?;
        let pattern = read_pattern(&self.pattern, &window).with_context(|| format!("reading {}", self.pattern.display()))?;
        Ok((window, pattern))
    }

    fn paths(&self) -> Vec<&Path> {
        vec![&self.pattern, &self.window]
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    bw: BandwidthArgs,
    #[arg(long, value_parser = parse_triple, default_value = "25,25,20")]
    grid: [usize; 3],
}

#[derive(Subcommand)]
enum TestCmd {
    /// Permutation envelope or deviation test
    Perm(PermArgs),
    /// Chi-square test on a quantile partition
    Chisq(ChisqArgs),
    /// Monte Carlo test against stochastic reconstructions
    Recon(ReconTestArgs),
}

#[derive(Args)]
struct PermArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, value_parser = parse_stat, default_value = "S")]
    stat: Statistic,
    #[arg(long, default_value_t = 1999)]
    nperm: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_parser = parse_triple, default_value = "25,25,20")]
    grid: [usize; 3],
    #[command(flatten)]
    bw: BandwidthArgs,
}

#[derive(Args)]
struct ChisqArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, value_parser = parse_triple, default_value = "4,4,4")]
    cells: [usize; 3],
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct ReconTestArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_parser = parse_stat, default_value = "S")]
    stat: Statistic,
    #[arg(short = 'n', long, default_value_t = 99)]
    nrep: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_parser = parse_triple, default_value = "25,25,20")]
    grid: [usize; 3],
    #[command(flatten)]
    bw: BandwidthArgs,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    config: PathBuf,
    /// Number of reconstructions
    #[arg(short = 'n', long, default_value_t = 1)]
    n: usize,
    #[command(flatten)]
    bw: BandwidthArgs,
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment configuration
    config: PathBuf,
}

fn parse_triple(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<usize>| format!("expected 3 comma-separated values, got {}", v.len()))
}

fn parse_stat(s: &str) -> Result<Statistic, String> {
    s.parse().map_err(|e: stsep::Error| e.to_string())
}

fn parse_case(s: &str) -> Result<BaseCase, String> {
    s.parse().map_err(|e: stsep::Error| e.to_string())
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

/// Writes `text` to `out`, or stdout when no path is given.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn out_dir(out: Option<&Path>) -> Result<&Path> {
    let dir = out.context("this command needs --out <DIR>")?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

struct Run<'a> {
    cli: &'a Cli,
    started: Instant,
}

impl Run<'_> {
    fn manifest(&self, config: &str, inputs: &[&Path]) -> Result<RunManifest> {
        RunManifest::new(std::env::args().collect(), config, self.cli.seed, inputs, self.started)
    }

    /// Manifest next to a file output, or inside a directory output.
    fn write_manifest(&self, config: &str, inputs: &[&Path]) -> Result<()> {
        let Some(out) = self.cli.out.as_deref() else {
            return Ok(());
        };
        let path = if out.is_dir() {
            out.join("manifest.json")
        } else {
            let mut s = out.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        };
        write_json(&path, &self.manifest(config, inputs)?)?;
        Ok(())
    }
}

fn simulate(run: &Run, cmd: &SimulateCmd) -> Result<()> {
    let mut rng = replicate_rng(run.cli.seed, 0);
    let (pattern, config) = match cmd {
        SimulateCmd::Burst(a) => {
            let m = BurstModel::for_target(a.case, a.gamma, a.target_n)?;
            (m.simulate(&mut rng)?, serde_json::to_string(&m)?)
        }
        SimulateCmd::Lgcp(a) => {
            let m = LgcpModel {
                beta0: a.beta0,
                beta1: a.beta1,
                gamma_prime: a.gamma_prime,
                gamma_dprime: a.gamma_dprime,
                sigma1: a.sigma1,
                sigma2: a.sigma2,
                phi1: a.phi1,
                phi2: a.phi2,
                grid: a.grid,
            };
            let config = serde_json::to_string(&m)?;
            (LgcpSimulator::new(m)?.simulate(&mut rng)?, config)
        }
    };
    match run.cli.out.as_deref() {
        Some(p) => write_pattern(p, &pattern)?,
        None => print!("{}", stsep::io::format_points_csv(pattern.points())),
    }
    run.write_manifest(&config, &[])
}

fn estimate(run: &Run, a: &EstimateArgs) -> Result<()> {
    let (window, pattern) = a.inputs.load()?;
    let bw = a.bw.spec().resolve(&pattern)?;
    let [nx, ny, nt] = a.grid;
    let grid = build_grid(&window, nx, ny, nt)?;
    let field = estimate_field(&pattern, &bw, &grid)?;
    let dir = out_dir(run.cli.out.as_deref())?;
    let mask = EvaluationMask::inside(&grid)?;
    let st_coords = sample_coordinates(Statistic::S, &grid, &mask);
    let pick = |v: &[f64]| mask.cells().iter().map(|&c| v[c]).collect::<Vec<_>>();
    fs::write(dir.join("rho_st.csv"), format_grid_csv(&st_coords, &pick(&field.rho_st)))?;
    fs::write(dir.join("rho_sep.csv"), format_grid_csv(&st_coords, &pick(&field.rho_sep)))?;
    let sp_coords = sample_coordinates(Statistic::SSpace, &grid, &mask);
    let sp: Vec<f64> = mask.spatial_cells().iter().map(|&s| field.rho_space[s]).collect();
    fs::write(dir.join("rho_space.csv"), format_grid_csv(&sp_coords, &sp))?;
    let t_coords = sample_coordinates(Statistic::STime, &grid, &mask);
    let tv: Vec<f64> = mask.time_slices().iter().map(|&t| field.rho_time[t]).collect();
    fs::write(dir.join("rho_time.csv"), format_grid_csv(&t_coords, &tv))?;
    write_json(&dir.join("bandwidths.json"), &bw)?;
    run.write_manifest(&serde_json::to_string(&(a.grid, a.bw.spec()))?, &a.inputs.paths())
}

/// Report JSON to `--out` (file) or stdout; with a directory also the grids.
fn emit_report(run: &Run, report: &TestReport, coords: Option<Vec<[Option<f64>; 3]>>) -> Result<()> {
    let json = to_json(report)?;
    match run.cli.out.as_deref() {
        Some(dir) if dir.is_dir() || dir.extension().is_none() => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("result.json"), &json)?;
            if let (Some(env), Some(coords)) = (&report.envelope, coords) {
                let codes: Vec<f64> = env.exit_codes.iter().map(|&c| f64::from(c)).collect();
                for (name, values) in [("data", &env.data), ("low", &env.low), ("upp", &env.upp), ("exitcode", &codes)] {
                    fs::write(dir.join(format!("{name}.csv")), format_grid_csv(&coords, values))?;
                }
            }
            Ok(())
        }
        other => emit(other, &json),
    }
}

fn test_perm(run: &Run, a: &PermArgs) -> Result<TestReport> {
    let (_, pattern) = a.inputs.load()?;
    let cfg = PermTestConfig {
        n_perm: a.nperm,
        statistic: a.stat,
        grid: a.grid,
        bandwidths: a.bw.spec(),
        alpha: a.alpha,
        seed: run.cli.seed,
    };
    cfg.validate()?;
    let setup = PermutationSetup::new(&pattern, cfg.grid, cfg.bandwidths)?;
    let (stat, outcome) = run_permutation_tests_with(&setup, &cfg, &[a.stat])?.remove(0);
    let mut report = TestReport::from_outcome("perm", stat, &outcome);
    report.grid = Some(a.grid);
    report.seed = Some(run.cli.seed);
    report.replicates = Some(a.nperm);
    report.bandwidths = Some([setup.bandwidths.epsilon, setup.bandwidths.delta]);
    emit_report(run, &report, Some(sample_coordinates(stat, &setup.grid, &setup.mask)))?;
    run.write_manifest(&serde_json::to_string(&cfg)?, &a.inputs.paths())?;
    Ok(report)
}

fn test_chisq(run: &Run, a: &ChisqArgs) -> Result<TestReport> {
    let (_, pattern) = a.inputs.load()?;
    let [kx, ky, kt] = a.cells;
    let result = chisq_test(&pattern, kx, ky, kt)?;
    let report = TestReport::from_chisq(&result, a.cells, a.alpha);
    emit_report(run, &report, None)?;
    run.write_manifest(&serde_json::to_string(&(a.cells, a.alpha))?, &a.inputs.paths())?;
    Ok(report)
}

fn read_recon_config(path: &Path) -> Result<(ReconConfig, String)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok((ReconConfig::from_toml_str(&text)?, text))
}

fn test_recon(run: &Run, a: &ReconTestArgs) -> Result<TestReport> {
    let (window, pattern) = a.inputs.load()?;
    let (recon, text) = read_recon_config(&a.config)?;
    let cfg = PermTestConfig {
        n_perm: a.nrep,
        statistic: a.stat,
        grid: a.grid,
        bandwidths: a.bw.spec(),
        alpha: a.alpha,
        seed: run.cli.seed,
    };
    let out = run_reconstruction_tests(&pattern, &recon, &cfg, &[a.stat])?;
    let (stat, outcome) = &out.outcomes[0];
    let mut report = TestReport::from_outcome("recon", *stat, outcome);
    report.grid = Some(a.grid);
    report.seed = Some(run.cli.seed);
    report.replicates = Some(a.nrep);
    report.bandwidths = Some([out.bandwidths.epsilon, out.bandwidths.delta]);
    let [nx, ny, nt] = a.grid;
    let grid = build_grid(&window, nx, ny, nt)?;
    let mask = EvaluationMask::from_field(&estimate_field(&pattern, &out.bandwidths, &grid)?)?;
    emit_report(run, &report, Some(sample_coordinates(*stat, &grid, &mask)))?;
    run.write_manifest(&format!("{text}\n{}", serde_json::to_string(&cfg)?), &a.inputs.paths())?;
    Ok(report)
}

#[derive(serde::Serialize)]
struct ReconSummary {
    index: usize,
    initial_energy: f64,
    final_energy: f64,
    iterations: usize,
    accepted: usize,
    stop: stsep::recon::StopReason,
}

fn reconstruct(run: &Run, a: &ReconstructArgs) -> Result<()> {
    let (_, pattern) = a.inputs.load()?;
    let (recon, text) = read_recon_config(&a.config)?;
    let bw: Bandwidths = a.bw.spec().resolve(&pattern)?;
    let target = ReconTarget::new(&pattern, &recon, &bw)?;
    let dir = out_dir(run.cli.out.as_deref())?;
    let width = a.n.max(1).to_string().len().max(4);
    let mut summaries = Vec::with_capacity(a.n);
    for i in 0..a.n {
        let out = target.reconstruct(&mut replicate_rng(run.cli.seed, i as u64 + 1))?;
        write_pattern(&dir.join(format!("recon_{i:0width$}.csv")), &out.pattern)?;
        summaries.push(ReconSummary {
            index: i,
            initial_energy: out.initial_energy,
            final_energy: out.final_energy,
            iterations: out.iterations,
            accepted: out.energies.len() - 1,
            stop: out.stop,
        });
    }
    write_json(&dir.join("summary.json"), &summaries)?;
    run.write_manifest(&text, &a.inputs.paths())
}

fn experiment(run: &Run, a: &ExperimentArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let cfg = ExperimentConfig::from_toml_str(&text)?;
    let table = run_experiment(&cfg)?;
    print!("{}", table.render());
    if let Some(p) = run.cli.out.as_deref() {
        write_json(p, &table)?;
    }
    run.write_manifest(&text, &[&a.config])
}

fn dispatch(cli: &Cli) -> Result<()> {
    let run = Run {
        cli,
        started: Instant::now(),
    };
    match &cli.command {
        Command::Simulate(c) => simulate(&run, c),
        Command::Estimate(a) => estimate(&run, a),
        Command::Test(TestCmd::Perm(a)) => finish_test(test_perm(&run, a)),
        Command::Test(TestCmd::Chisq(a)) => finish_test(test_chisq(&run, a)),
        Command::Test(TestCmd::Recon(a)) => finish_test(test_recon(&run, a)),
        Command::Reconstruct(a) => reconstruct(&run, a),
        Command::Experiment(a) => experiment(&run, a),
    }
}

fn finish_test(r: Result<TestReport>) -> Result<()> {
    let report = r?;
    eprintln!(
        "{} {}: p = {}, alpha = {}, {}",
        report.test,
        report.statistic,
        report.p_value,
        report.alpha,
        if report.rejects { "reject" } else { "do not reject" }
    );
    Ok(())
}

/// 2 for data problems, 3 for numerical failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<stsep::Error>() {
            return e.exit_code() as u8;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
