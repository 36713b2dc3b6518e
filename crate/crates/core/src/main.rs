use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use waveguide_sf::analysis::{fit_fwhm_scaling, fit_threshold, oracle_check, sweep_directionality, SweepSpec};
use waveguide_sf::coupling::{build_dynamic_couplings, build_static_couplings};
use waveguide_sf::io;
use waveguide_sf::observables::{accumulate_g2, burst_metrics, burst_statistics, cross_correlation, directionality, Direction, KappaSource};
use waveguide_sf::params::{ModelMode, SimulationConfig};
use waveguide_sf::twa::{run_ensemble_with, sample_initial_state, EngineOptions};
use waveguide_sf::{Error, Result};

#[derive(Parser)]
#[command(name = "wgsf", version, about = "Directional superfluorescence in a 1D waveguide (truncated Wigner simulation)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one ensemble and write mean curves, correlations and a summary.
    Simulate(SimulateArgs),
    /// Run a grid of ensembles over cooperation number and velocity spread.
    Sweep(SweepArgs),
    /// Fit thresholds, width scaling or burst metrics from existing CSV files.
    Analyze(AnalyzeArgs),
    /// Compare a small ensemble with exact results.
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct RunOptions {
    #[arg(long)]
    seed: Option<u64>,
    /// dynamic, static or frozen
    #[arg(long)]
    mode: Option<ModelMode>,
    /// Record observables every this many steps.
    #[arg(long, default_value_t = 10)]
    record_every: usize,
    /// Worker threads (results do not depend on it).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl RunOptions {
    fn apply(&self, config: &mut SimulationConfig) -> Result<()> {
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(mode) = self.mode {
            config.model_mode = mode;
        }
        config.validate()
    }

    fn engine(&self) -> EngineOptions {
        EngineOptions { record_every: self.record_every.max(1), ..Default::default() }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    run: RunOptions,
    /// mean or per-shot-median
    #[arg(long, default_value = "mean")]
    kappa_source: KappaSource,
    /// Correlations are masked where the mean intensity is below this rate.
    #[arg(long, default_value_t = 0.0)]
    g2_floor: f64,
    /// Also write the coupling matrices at the positions of trajectory 0.
    #[arg(long)]
    dump_matrices: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    run: RunOptions,
    #[arg(long, default_value = "mean")]
    kappa_source: KappaSource,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Series file (`t,i_plus,i_minus,sz`): burst metrics and κ.
    #[arg(long)]
    series: Option<PathBuf>,
    /// Points file (`n_mc,peak`): two-segment threshold fit.
    #[arg(long)]
    threshold: Option<PathBuf>,
    /// Points file (`n_mc,fwhm`): width scaling fit.
    #[arg(long)]
    fwhm: Option<PathBuf>,
    /// Rate unit of the width fit.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Write `analysis.json` here in addition to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    run: RunOptions,
    /// Relative tolerance (defaults: 0.02 for one emitter, 0.10 otherwise).
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    config: &'a SimulationConfig,
    record_every: usize,
    kappa_source: KappaSource,
    n_traj: usize,
    n_diverged: usize,
    statistics: waveguide_sf::observables::BurstStatistics,
}

fn init_pool(jobs: usize) {
    // Fails only if a pool already exists, which is harmless.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut config = io::read_config(&args.config)?;
    args.run.apply(&mut config)?;
    init_pool(args.run.jobs);
    let options = args.run.engine();
    let series = run_ensemble_with(&config, &options)?;
    let statistics = burst_statistics(&series, args.kappa_source, args.g2_floor)?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("series.csv"), io::series_csv(&series))?;
    if series.n_traj >= 2 {
        for (name, grid) in [
            ("g2_plus.csv", accumulate_g2(&series, Direction::Plus, args.g2_floor)),
            ("g2_minus.csv", accumulate_g2(&series, Direction::Minus, args.g2_floor)),
            ("g2_pm.csv", cross_correlation(&series, args.g2_floor)),
        ] {
            match grid {
                Ok(g) => fs::write(args.out.join(name), io::g2_csv(&g))?,
                Err(Error::EmptyResult) => eprintln!("warning: {name} skipped, every point is below the floor"),
                Err(e) => return Err(e),
            }
        }
    }
    if args.dump_matrices {
        dump_matrices(&config, &args.out)?;
    }
    let summary = RunSummary {
        config: &config,
        record_every: options.record_every,
        kappa_source: args.kappa_source,
        n_traj: series.n_traj,
        n_diverged: series.n_diverged,
        statistics,
    };
    io::write_json(args.out.join("summary.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn dump_matrices(config: &SimulationConfig, out: &Path) -> Result<()> {
    let z = sample_initial_state(config, 0).z;
    let set = match config.model_mode {
        ModelMode::StaticBlur => build_static_couplings(&z, config.static_beta_minus(), config.gamma_1d, config.lambda0)?,
        _ => build_dynamic_couplings(&z, config.lambda0, config.lambda_p, config.gamma_1d)?,
    };
    fs::write(out.join("coupling_g.csv"), io::matrix_csv(&set.g))?;
    fs::write(out.join("coupling_j.csv"), io::matrix_csv(&set.j_matrix))?;
    fs::write(out.join("coupling_gamma.csv"), io::matrix_csv(&set.gamma_matrix))?;
    fs::write(out.join("noise_factor.csv"), io::matrix_csv(&set.noise_factor))?;
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let mut spec: SweepSpec = io::read_json(&args.config)?;
    args.run.apply(&mut spec.base)?;
    let rows = sweep_directionality(&spec, &args.run.engine(), args.kappa_source, args.run.jobs)?;
    fs::create_dir_all(&args.out)?;
    let mut csv = String::from("n_mc,n_spins,sigma_v,seed,kappa,standard_error,r_plus,r_minus,delay,fwhm,error\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            io::fmt_f64(r.n_mc),
            r.n_spins,
            io::fmt_f64(r.sigma_v),
            r.seed,
            io::fmt_f64(r.kappa),
            io::fmt_f64(r.standard_error),
            io::fmt_f64(r.r_plus),
            io::fmt_f64(r.r_minus),
            io::fmt_f64(r.delay),
            r.fwhm.map(io::fmt_f64).unwrap_or_default(),
            r.error.as_deref().unwrap_or("").replace(',', ";"),
        ));
    }
    fs::write(args.out.join("sweep.csv"), csv)?;
    io::write_json(args.out.join("sweep.json"), &serde_json::json!({ "spec": spec, "record_every": args.run.record_every, "rows": rows }))?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    eprintln!("{} cells, {} failed", rows.len(), failed);
    Ok(())
}

fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let mut report = serde_json::Map::new();
    if let Some(path) = &args.series {
        let s = io::read_series_csv(path)?;
        let plus = burst_metrics(&s.i_plus, &s.t)?;
        let minus = burst_metrics(&s.i_minus, &s.t)?;
        let total: Vec<f64> = s.i_plus.iter().zip(&s.i_minus).map(|(a, b)| a + b).collect();
        let both = burst_metrics(&total, &s.t)?;
        report.insert("plus".into(), serde_json::to_value(plus)?);
        report.insert("minus".into(), serde_json::to_value(minus)?);
        report.insert("total".into(), serde_json::to_value(both)?);
        report.insert("kappa".into(), serde_json::to_value(directionality(plus.peak, minus.peak)?)?);
    }
    if let Some(path) = &args.threshold {
        let fit = fit_threshold(&io::read_points_csv(path, "n_mc", "peak")?)?;
        report.insert("threshold".into(), serde_json::to_value(fit)?);
    }
    if let Some(path) = &args.fwhm {
        let fit = fit_fwhm_scaling(&io::read_points_csv(path, "n_mc", "fwhm")?, args.gamma)?;
        report.insert("fwhm_scaling".into(), serde_json::to_value(fit)?);
    }
    if report.is_empty() {
        return Err(Error::Validation { message: "nothing to analyze; pass --series, --threshold or --fwhm".into(), line: None });
    }
    let value = serde_json::Value::Object(report);
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        io::write_json(out.join("analysis.json"), &value)?;
    }
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

/// Returns whether the check passed.
fn oracle(args: &OracleArgs) -> Result<bool> {
    let mut config = io::read_config(&args.config)?;
    args.run.apply(&mut config)?;
    init_pool(args.run.jobs);
    let check = oracle_check(&config, &args.run.engine(), args.tolerance)?;
    let value = serde_json::json!({ "config": config, "check": check });
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        io::write_json(out.join("oracle_check.json"), &value)?;
    }
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(check.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Sweep(a) => sweep(a).map(|_| true),
        Command::Analyze(a) => analyze(a).map(|_| true),
        Command::OracleCheck(a) => oracle(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
