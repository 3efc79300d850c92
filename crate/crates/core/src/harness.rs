//! Monte-Carlo experiments: paired snapshots, parameter sweeps and the
//! NOMA/OFDMA comparison.
//!
//! Snapshot `n` of an experiment draws its scenario with seed
//! `base_seed + n`, so every method, scheme and sweep value sees the same
//! users and path gains for a given snapshot, and snapshots can run in any
//! order or in parallel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    equal_power_variable_count, equally_reduced_power, exhaustive_search, exhaustive_variable_count, water_filling_allocation,
    GridSpec,
};
use crate::error::{Error, Result};
use crate::interference::{evaluate, PowerMatrix};
use crate::jprc::{run, JprcParams, RunResult};
use crate::model::{allocate_subchannels, generate_scenario, Allocation, Scenario, ScenarioConfig, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Jprc,
    WaterFilling,
    Exhaustive,
    EqualPower,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Jprc => "jprc",
            Method::WaterFilling => "water_filling",
            Method::Exhaustive => "exhaustive",
            Method::EqualPower => "equal_power",
        }
    }

    pub fn needs_grid(self) -> bool {
        matches!(self, Method::Exhaustive | Method::EqualPower)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    #[default]
    None,
    #[serde(alias = "R_min")]
    MinRate,
    PeakPower,
}

fn default_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}
fn default_snapshots() -> usize {
    500
}
fn default_methods() -> Vec<Method> {
    vec![Method::Jprc]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "scenario_config", alias = "scenario")]
    pub scenario: ScenarioConfig,
    #[serde(default = "default_schemes")]
    pub scheme_list: Vec<Scheme>,
    #[serde(default)]
    pub sweep_variable: SweepVariable,
    #[serde(default)]
    pub sweep_values: Vec<f64>,
    #[serde(default = "default_snapshots")]
    pub num_snapshots: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub jprc_params: JprcParams,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Required by the grid-search methods.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// Leave snapshots with an infeasible user out of the means.
    #[serde(default)]
    pub exclude_infeasible: bool,
    /// Figure number used to name exported files.
    #[serde(default)]
    pub figure: Option<u32>,
}

impl ExperimentConfig {
    pub fn new(scenario: ScenarioConfig) -> Self {
        Self {
            scenario,
            scheme_list: default_schemes(),
            sweep_variable: SweepVariable::None,
            sweep_values: Vec::new(),
            num_snapshots: default_snapshots(),
            base_seed: 0,
            jprc_params: JprcParams::default(),
            methods: default_methods(),
            grid: None,
            exclude_infeasible: false,
            figure: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.jprc_params.validate()?;
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.num_snapshots == 0 {
            return bad("num_snapshots must be at least 1");
        }
        if self.scheme_list.is_empty() {
            return bad("scheme_list must not be empty");
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty");
        }
        match self.sweep_variable {
            SweepVariable::None => {}
            _ if self.sweep_values.is_empty() => return bad("sweep_values must not be empty when sweeping"),
            _ if self.sweep_values.iter().any(|v| !(v.is_finite() && *v > 0.0)) => {
                return bad("sweep_values must be finite and positive")
            }
            _ => {}
        }
        if self.scheme_list.contains(&Scheme::Ofdma) && !self.scenario.num_subchannels.is_multiple_of(self.scenario.users_per_cell) {
            return Err(Error::IndivisibleChannels {
                channels: self.scenario.num_subchannels,
                users: self.scenario.users_per_cell,
                cell: 0,
            });
        }
        if self.methods.iter().any(|m| m.needs_grid()) {
            let Some(grid) = &self.grid else {
                return bad("grid is required by the exhaustive and equal_power methods");
            };
            if !(grid.step.is_finite() && grid.step > 0.0) {
                return bad("grid.step must be finite and positive");
            }
            for &scheme in &self.scheme_list {
                for &method in self.methods.iter().filter(|m| m.needs_grid()) {
                    let variables = self.searched_variables(scheme, method);
                    if variables > grid.max_variables {
                        return Err(Error::GridGuard { variables, max: grid.max_variables });
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of variables a grid method searches per snapshot.
    pub fn searched_variables(&self, scheme: Scheme, method: Method) -> usize {
        let c = &self.scenario;
        let users = c.num_users();
        let per_user = match scheme {
            Scheme::Noma => c.num_subchannels,
            Scheme::Ofdma => c.num_subchannels / c.users_per_cell,
        };
        match method {
            Method::EqualPower => users,
            _ => users * per_user,
        }
    }

    /// The sweep values, or a single `None` when nothing is swept.
    pub fn sweep_points(&self) -> Vec<Option<f64>> {
        match self.sweep_variable {
            SweepVariable::None => vec![None],
            _ => self.sweep_values.iter().copied().map(Some).collect(),
        }
    }

    /// Copy with the sweep variable set to `value`.
    pub fn at_sweep_value(&self, value: Option<f64>) -> Self {
        let mut cfg = self.clone();
        if let Some(v) = value {
            match self.sweep_variable {
                SweepVariable::MinRate => cfg.scenario.min_rate = v,
                SweepVariable::PeakPower => cfg.scenario.peak_power = v,
                SweepVariable::None => {}
            }
        }
        cfg
    }

    pub fn snapshot_seed(&self, index: usize) -> u64 {
        self.base_seed.wrapping_add(index as u64)
    }
}

/// One method on one scheme in one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub scheme: Scheme,
    /// Fingerprint of the scenario the method ran on.
    pub scenario_fingerprint: u64,
    pub result: RunResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotResult {
    pub index: usize,
    pub seed: u64,
    pub outcomes: Vec<MethodOutcome>,
}

impl SnapshotResult {
    pub fn get(&self, method: Method, scheme: Scheme) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method == method && o.scheme == scheme)
    }
}

/// Wraps a non-iterative method's powers in a [`RunResult`].
fn static_result(scenario: &Scenario, allocation: &Allocation, powers: PowerMatrix) -> Result<RunResult> {
    let rate_report = evaluate(scenario, allocation, &powers)?;
    Ok(RunResult {
        final_powers: powers,
        iterations_used: 0,
        power_trace: Vec::new(),
        delta_trace: Vec::new(),
        per_user_feasible: rate_report.per_user_feasible.clone(),
        rate_report,
        converged: true,
        final_targets: Vec::new(),
    })
}

fn peak_everywhere(scenario: &Scenario, allocation: &Allocation) -> PowerMatrix {
    let mut p = PowerMatrix::zeros(scenario.num_users(), scenario.num_channels());
    for i in 0..scenario.num_users() {
        for &k in allocation.channels(i) {
            p.set(i, k, scenario.peak_power(i, k));
        }
    }
    p
}

/// Runs one method. Infeasibility is reported through the feasibility flags;
/// a grid search with no feasible point reports peak power everywhere.
pub fn run_method(
    method: Method,
    scenario: &Scenario,
    allocation: &Allocation,
    params: &JprcParams,
    grid: Option<&GridSpec>,
) -> Result<RunResult> {
    let min_rate: Vec<f64> = (0..scenario.num_users()).map(|i| scenario.min_rate(i)).collect();
    let grid_result = |found: Result<crate::baselines::GridOptimum>| match found {
        Ok(opt) => static_result(scenario, allocation, opt.powers),
        Err(Error::Infeasible) => {
            let mut r = static_result(scenario, allocation, peak_everywhere(scenario, allocation))?;
            r.per_user_feasible.iter_mut().for_each(|f| *f = false);
            Ok(r)
        }
        Err(e) => Err(e),
    };
    let need_grid = || grid.ok_or_else(|| Error::InvalidConfig(format!("method {method} needs a grid")));
    match method {
        Method::Jprc => run(scenario, allocation, params),
        Method::WaterFilling => static_result(scenario, allocation, water_filling_allocation(scenario, allocation)?),
        Method::Exhaustive => grid_result(exhaustive_search(scenario, allocation, &min_rate, need_grid()?)),
        Method::EqualPower => grid_result(equally_reduced_power(scenario, allocation, &min_rate, need_grid()?)),
    }
}

/// Refuses grid searches over more variables than the grid allows.
pub fn check_grid_guard(method: Method, allocation: &Allocation, grid: Option<&GridSpec>) -> Result<()> {
    if !method.needs_grid() {
        return Ok(());
    }
    let variables = match method {
        Method::EqualPower => equal_power_variable_count(allocation),
        _ => exhaustive_variable_count(allocation),
    };
    let max = grid.map_or(0, |g| g.max_variables);
    if variables > max {
        return Err(Error::GridGuard { variables, max });
    }
    Ok(())
}

/// Runs every configured method on every configured scheme over one shared
/// scenario.
pub fn run_snapshot(config: &ExperimentConfig, index: usize) -> Result<SnapshotResult> {
    let seed = config.snapshot_seed(index);
    let scenario = generate_scenario(&config.scenario, seed)?;
    let fingerprint = scenario.fingerprint();
    let mut outcomes = Vec::with_capacity(config.scheme_list.len() * config.methods.len());
    for &scheme in &config.scheme_list {
        let allocation = allocate_subchannels(&scenario, scheme)?;
        for &method in &config.methods {
            check_grid_guard(method, &allocation, config.grid.as_ref())?;
            let result = run_method(method, &scenario, &allocation, &config.jprc_params, config.grid.as_ref())?;
            outcomes.push(MethodOutcome { method, scheme, scenario_fingerprint: fingerprint, result });
        }
    }
    Ok(SnapshotResult { index, seed, outcomes })
}

/// Runs snapshots `0..num_snapshots` in parallel, returned in index order.
pub fn run_snapshots(config: &ExperimentConfig) -> Result<Vec<SnapshotResult>> {
    (0..config.num_snapshots).into_par_iter().map(|n| run_snapshot(config, n)).collect()
}

/// One raw result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub scheme: Scheme,
    pub sweep_value: Option<f64>,
    pub snapshot: usize,
    #[serde(rename = "aggregate_power_W")]
    pub aggregate_power_w: f64,
    pub iterations: usize,
    pub feasible: bool,
}

/// Statistics of one `(method, scheme, sweep value)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub method: Method,
    pub scheme: Scheme,
    pub sweep_value: Option<f64>,
    /// Mean aggregate power over the snapshots counted, watts.
    pub mean_aggregate_power: f64,
    pub std_error: f64,
    /// Snapshots in which every user met its minimum rate.
    pub feasible_fraction: f64,
    pub mean_iterations: f64,
    /// Snapshots counted in the mean.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub sweep_variable: SweepVariable,
    pub cells: Vec<SweepCell>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn cell(&self, method: Method, scheme: Scheme, sweep_value: Option<f64>) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.method == method && c.scheme == scheme && c.sweep_value == sweep_value)
    }
}

/// Mean and standard error of the mean.
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn summarize(rows: &[SweepRow], method: Method, scheme: Scheme, sweep_value: Option<f64>, exclude_infeasible: bool) -> SweepCell {
    let cell: Vec<&SweepRow> = rows
        .iter()
        .filter(|r| r.method == method && r.scheme == scheme && r.sweep_value == sweep_value)
        .collect();
    let counted: Vec<f64> = cell
        .iter()
        .filter(|r| !exclude_infeasible || r.feasible)
        .map(|r| r.aggregate_power_w)
        .collect();
    let (mean, se) = mean_and_std_error(&counted);
    let n = cell.len().max(1) as f64;
    SweepCell {
        method,
        scheme,
        sweep_value,
        mean_aggregate_power: mean,
        std_error: se,
        feasible_fraction: cell.iter().filter(|r| r.feasible).count() as f64 / n,
        mean_iterations: cell.iter().map(|r| r.iterations as f64).sum::<f64>() / n,
        count: counted.len(),
    }
}

/// Every sweep value times every snapshot, with per-cell statistics.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let mut rows = Vec::new();
    let points = config.sweep_points();
    for &value in &points {
        let cfg = config.at_sweep_value(value);
        for snap in run_snapshots(&cfg)? {
            rows.extend(snap.outcomes.iter().map(|o| SweepRow {
                method: o.method,
                scheme: o.scheme,
                sweep_value: value,
                snapshot: snap.index,
                aggregate_power_w: o.result.aggregate_power(),
                iterations: o.result.iterations_used,
                feasible: o.result.all_feasible(),
            }));
        }
    }
    let mut cells = Vec::new();
    for &value in &points {
        for &scheme in &config.scheme_list {
            for &method in &config.methods {
                cells.push(summarize(&rows, method, scheme, value, config.exclude_infeasible));
            }
        }
    }
    Ok(SweepResult { sweep_variable: config.sweep_variable, cells, rows })
}

/// Relative saving of `candidate` over `baseline`: `(baseline - candidate) / baseline`.
pub fn improvement_ratio(baseline: f64, candidate: f64) -> f64 {
    (baseline - candidate) / baseline
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeComparison {
    /// `(mean OFDMA - mean NOMA) / mean OFDMA`
    pub ratio: f64,
    pub mean_noma: f64,
    pub mean_ofdma: f64,
    /// Paired snapshots counted.
    pub snapshots: usize,
    /// `(snapshot, NOMA aggregate, OFDMA aggregate)`
    pub pairs: Vec<(usize, f64, f64)>,
}

/// JPRC aggregate power of NOMA against OFDMA over paired snapshots. The
/// sweep settings are ignored; the base configuration is used.
pub fn compare_schemes(config: &ExperimentConfig) -> Result<SchemeComparison> {
    if !(config.scheme_list.contains(&Scheme::Noma) && config.scheme_list.contains(&Scheme::Ofdma)) {
        return Err(Error::InvalidConfig("scheme comparison needs both NOMA and OFDMA in scheme_list".into()));
    }
    let cfg = ExperimentConfig {
        scheme_list: Scheme::ALL.to_vec(),
        methods: vec![Method::Jprc],
        sweep_variable: SweepVariable::None,
        sweep_values: Vec::new(),
        ..config.clone()
    };
    cfg.validate()?;
    let mut pairs = Vec::with_capacity(cfg.num_snapshots);
    for snap in run_snapshots(&cfg)? {
        let noma = snap.get(Method::Jprc, Scheme::Noma).expect("NOMA outcome");
        let ofdma = snap.get(Method::Jprc, Scheme::Ofdma).expect("OFDMA outcome");
        assert_eq!(noma.scenario_fingerprint, ofdma.scenario_fingerprint, "unpaired snapshot {}", snap.index);
        if cfg.exclude_infeasible && !(noma.result.all_feasible() && ofdma.result.all_feasible()) {
            continue;
        }
        pairs.push((snap.index, noma.result.aggregate_power(), ofdma.result.aggregate_power()));
    }
    let n = pairs.len();
    if n == 0 {
        return Err(Error::InvalidConfig("no snapshot left to compare".into()));
    }
    let mean_noma = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let mean_ofdma = pairs.iter().map(|p| p.2).sum::<f64>() / n as f64;
    Ok(SchemeComparison { ratio: improvement_ratio(mean_ofdma, mean_noma), mean_noma, mean_ofdma, snapshots: n, pairs })
}
