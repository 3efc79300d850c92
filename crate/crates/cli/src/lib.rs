//! The `jprc` command line.
//!
//! Exit codes: 0 on success, 1 when every run finished with an infeasible
//! user (results are still written), 2 on usage, configuration or I/O errors.

pub mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use jprc_core::export::{
    sweep_file_name, write_comparison_csv, write_finals_csv, write_json, write_sweep_csv, write_trace_csv,
    write_user_summary_csv, RunSummary, SweepSummary,
};
use jprc_core::harness::{check_grid_guard, compare_schemes, run_method, run_sweep, ExperimentConfig, Method, SweepResult};
use jprc_core::{allocate_subchannels, generate_scenario, Scenario};

pub use config::load_config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] jprc_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Parser, Debug)]
#[command(name = "jprc", version, about = "Joint power and rate control for uplink NOMA/OFDMA networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw one scenario (seed = scenario_config.rng_seed) and write it as JSON
    GenScenario(CommonArgs),
    /// Run every configured method and scheme on one scenario, with traces
    Run(RunArgs),
    /// Monte-Carlo sweep over the configured sweep values
    Sweep(CommonArgs),
    /// Paired NOMA vs OFDMA comparison of JPRC aggregate power
    Compare(CommonArgs),
    /// JPRC against the exhaustive and equal-power grid searches
    Oracle(CommonArgs),
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// Experiment configuration (JSON); built-in defaults when absent
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Configuration overrides, applied after the file
    #[arg(long, num_args = 1.., value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub output: PathBuf,
    /// Worker threads (defaults to all cores)
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
    /// Seed for both single scenarios and experiment snapshots, overriding the configuration
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Schemes to run, overriding the configuration
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Print per-run and per-cell detail
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Run on a scenario written by gen-scenario instead of drawing one
    #[arg(long, value_name = "PATH")]
    pub scenario: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum SchemeArg {
    Noma,
    Ofdma,
    Both,
}

impl CommonArgs {
    /// File overrides followed by the `--seed` and `--scheme` flags.
    fn all_overrides(&self) -> Vec<String> {
        let mut all = self.overrides.clone();
        if let Some(seed) = self.seed {
            all.push(format!("base_seed={seed}"));
            all.push(format!("rng_seed={seed}"));
        }
        if let Some(scheme) = self.scheme {
            let v = match scheme {
                SchemeArg::Noma => "NOMA",
                SchemeArg::Ofdma => "OFDMA",
                SchemeArg::Both => "both",
            };
            all.push(format!("scheme_list={v}"));
        }
        all
    }

    fn load(&self) -> Result<ExperimentConfig, CliError> {
        load_config(self.config.as_deref(), &self.all_overrides())
    }
}

/// Whether anything feasible came out of a command.
struct Outcome {
    any_feasible: bool,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn prepare_output(dir: &Path, config: &ExperimentConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    write_json(create(&dir.join("effective_config.json"))?, config)?;
    Ok(())
}

fn timestamp() -> String {
    chrono::Local::now().format("%Y%m%d-%H%M%S").to_string()
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(CliError::Config("--jobs must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn gen_scenario(args: &CommonArgs) -> Result<Outcome, CliError> {
    let config = args.load()?;
    prepare_output(&args.output, &config)?;
    let scenario = generate_scenario(&config.scenario, config.scenario.rng_seed)?;
    let path = args.output.join("scenario.json");
    write_json(create(&path)?, &scenario)?;
    println!(
        "scenario seed {}: {} cells, {} users, {} sub-channels, fingerprint {:016x} -> {}",
        scenario.seed(),
        scenario.num_cells(),
        scenario.num_users(),
        scenario.num_channels(),
        scenario.fingerprint(),
        path.display()
    );
    Ok(Outcome { any_feasible: true })
}

fn read_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn run_cmd(args: &RunArgs) -> Result<Outcome, CliError> {
    let common = &args.common;
    let config = common.load()?;
    let scenario = match &args.scenario {
        Some(p) => read_scenario(p)?,
        None => generate_scenario(&config.scenario, config.scenario.rng_seed)?,
    };
    let mut jobs = Vec::new();
    for &scheme in &config.scheme_list {
        let allocation = allocate_subchannels(&scenario, scheme)?;
        for &method in &config.methods {
            check_grid_guard(method, &allocation, config.grid.as_ref())?;
            jobs.push((scheme, method, allocation.clone()));
        }
    }
    prepare_output(&common.output, &config)?;
    let mut any_feasible = false;
    for (scheme, method, allocation) in jobs {
        let result = with_pool(common.jobs, || run_method(method, &scenario, &allocation, &config.jprc_params, config.grid.as_ref()))??;
        let grid_step = method.needs_grid().then(|| config.grid.as_ref().map(|g| g.step)).flatten();
        let stem = format!("{}_{}", method.as_str(), scheme.as_str().to_ascii_lowercase());
        let dir = &common.output;
        write_json(create(&dir.join(format!("{stem}_summary.json")))?, &RunSummary::new(method.as_str(), scheme, grid_step, &scenario, &result))?;
        write_trace_csv(create(&dir.join(format!("{stem}_trace.csv")))?, &result)?;
        write_finals_csv(create(&dir.join(format!("{stem}_finals.csv")))?, method.as_str(), grid_step, &allocation, &result)?;
        write_user_summary_csv(create(&dir.join(format!("{stem}_users.csv")))?, &scenario, &result.rate_report)?;
        let feasible = result.per_user_feasible.iter().filter(|&&f| f).count();
        any_feasible |= result.all_feasible();
        println!(
            "{method} {scheme}: aggregate power {:.6e} W, {} iterations{}, feasible users {feasible}/{} ({:.0}%)",
            result.aggregate_power(),
            result.iterations_used,
            if result.converged { "" } else { " (not converged)" },
            result.per_user_feasible.len(),
            100.0 * feasible as f64 / result.per_user_feasible.len().max(1) as f64
        );
    }
    if common.verbose > 0 {
        println!("scenario fingerprint {:016x}, outputs in {}", scenario.fingerprint(), common.output.display());
    }
    Ok(Outcome { any_feasible })
}

fn write_sweep(args: &CommonArgs, config: &ExperimentConfig, result: &SweepResult) -> Result<PathBuf, CliError> {
    let ts = timestamp();
    let csv_path = args.output.join(sweep_file_name(config.figure, &ts, "csv"));
    write_sweep_csv(create(&csv_path)?, result)?;
    let summary = SweepSummary {
        figure: config.figure,
        sweep_variable: config.sweep_variable,
        num_snapshots: config.num_snapshots,
        base_seed: config.base_seed,
        exclude_infeasible: config.exclude_infeasible,
        cells: result.cells.clone(),
    };
    write_json(create(&args.output.join(sweep_file_name(config.figure, &ts, "json")))?, &summary)?;
    Ok(csv_path)
}

fn print_cells(result: &SweepResult) {
    for c in &result.cells {
        let value = c.sweep_value.map_or_else(|| "-".to_string(), |v| format!("{v}"));
        println!(
            "  {:<13} {:<5} {value:>10}: mean {:.6e} W (se {:.2e}), iterations {:.1}, feasible {:.1}%",
            c.method.as_str(),
            c.scheme.as_str(),
            c.mean_aggregate_power,
            c.std_error,
            c.mean_iterations,
            100.0 * c.feasible_fraction
        );
    }
}

fn summarize_sweep(label: &str, result: &SweepResult, path: &Path) -> Outcome {
    let rows = result.rows.len().max(1) as f64;
    let feasible = result.rows.iter().filter(|r| r.feasible).count();
    let mean_power = result.rows.iter().map(|r| r.aggregate_power_w).sum::<f64>() / rows;
    let mean_iter = result.rows.iter().map(|r| r.iterations as f64).sum::<f64>() / rows;
    println!(
        "{label}: {} cells, {} runs, mean aggregate power {mean_power:.6e} W, mean iterations {mean_iter:.1}, feasible {:.1}% -> {}",
        result.cells.len(),
        result.rows.len(),
        100.0 * feasible as f64 / rows,
        path.display()
    );
    Outcome { any_feasible: feasible > 0 }
}

fn sweep_cmd(args: &CommonArgs) -> Result<Outcome, CliError> {
    let config = args.load()?;
    prepare_output(&args.output, &config)?;
    let result = with_pool(args.jobs, || run_sweep(&config))??;
    let path = write_sweep(args, &config, &result)?;
    let outcome = summarize_sweep("sweep", &result, &path);
    if args.verbose > 0 {
        print_cells(&result);
    }
    Ok(outcome)
}

fn compare_cmd(args: &CommonArgs) -> Result<Outcome, CliError> {
    let config = args.load()?;
    prepare_output(&args.output, &config)?;
    let cmp = with_pool(args.jobs, || compare_schemes(&config))??;
    let ts = timestamp();
    write_json(create(&args.output.join(format!("compare_{ts}.json")))?, &cmp)?;
    let path = args.output.join(format!("compare_{ts}.csv"));
    write_comparison_csv(create(&path)?, &cmp)?;
    println!(
        "NOMA vs OFDMA: improvement ratio {:.4} over {} paired snapshots, mean NOMA {:.6e} W, mean OFDMA {:.6e} W -> {}",
        cmp.ratio,
        cmp.snapshots,
        cmp.mean_noma,
        cmp.mean_ofdma,
        path.display()
    );
    Ok(Outcome { any_feasible: true })
}

fn oracle_cmd(args: &CommonArgs) -> Result<Outcome, CliError> {
    let mut config = args.load()?;
    for method in [Method::Jprc, Method::Exhaustive, Method::EqualPower] {
        if !config.methods.contains(&method) {
            config.methods.push(method);
        }
    }
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    prepare_output(&args.output, &config)?;
    let result = with_pool(args.jobs, || run_sweep(&config))??;
    let path = write_sweep(args, &config, &result)?;
    let outcome = summarize_sweep("oracle", &result, &path);
    print_cells(&result);
    Ok(outcome)
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match &cli.command {
        Command::GenScenario(a) => gen_scenario(a),
        Command::Run(a) => run_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Compare(a) => compare_cmd(a),
        Command::Oracle(a) => oracle_cmd(a),
    };
    match outcome {
        Ok(o) if o.any_feasible => 0,
        Ok(_) => {
            eprintln!("every run ended with an infeasible user");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
