//! Distributed joint power and rate control.
//!
//! Every user splits its minimum rate over its sub-channels by water-filling
//! on the effective interference it currently observes, maps the per-channel
//! target rates to target SINRs and tracks them with a target-SINR power
//! update. Users only need their own effective interference, so one outer
//! iteration is a set of independent per-user computations followed by a
//! synchronous commit of the new power matrix.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interference::{InterferenceGraph, PowerMatrix, RateReport};
use crate::model::{Allocation, Scenario};

/// Water-filling bookkeeping of one user for one outer iteration.
///
/// Channel positions refer to the order of the `zeta` slice handed to
/// [`compute_targets`]. `sorted_order` lists the peak-clamped channels
/// first, then the remaining ones by ascending effective interference, so
/// that the first `num_peak` entries are at peak power, entries up to
/// `k_star` carry a positive water-filled rate and the rest are silent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub sorted_order: Vec<usize>,
    pub k_star: usize,
    /// Number of channels clamped at peak power (`S_i`).
    pub num_peak: usize,
    /// Rate left to distribute over the non-clamped channels, bps/Hz.
    pub min_rate_residual: f64,
    pub target_rate: Vec<f64>,
    pub max_rate: Vec<f64>,
    pub target_sinr: Vec<f64>,
    pub feasible: bool,
}

/// Target SINR of a target rate: `2^r - 1`.
#[inline]
pub fn target_sinr(rate: f64) -> f64 {
    (rate * LN_2).exp_m1()
}

/// Splits `min_rate` over the channels by water-filling on `zeta`, subject to
/// the per-channel peak powers.
///
/// Channels whose water-filled rate would be negative are switched off one at
/// a time, worst first. Channels whose rate exceeds what their peak power can
/// deliver are clamped at that maximum, their rate is taken out of the
/// remaining requirement, and the water level is recomputed over all
/// remaining channels. The user is infeasible when every channel ends up
/// clamped with rate still missing.
pub fn compute_targets(zeta: &[f64], min_rate: f64, peak: &[f64]) -> Result<TargetState> {
    let n = zeta.len();
    if n == 0 {
        return Err(Error::InvalidInput("user has no allocated sub-channels".into()));
    }
    if peak.len() != n {
        return Err(Error::InvalidInput("peak powers and effective interference differ in length".into()));
    }
    if let Some(k) = zeta.iter().position(|z| !(z.is_finite() && *z > 0.0)) {
        return Err(Error::InvalidInput(format!("effective interference on channel {k} is {}", zeta[k])));
    }
    if !(min_rate.is_finite() && min_rate >= 0.0) {
        return Err(Error::InvalidInput(format!("minimum rate {min_rate} is not a non-negative number")));
    }
    if peak.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::InvalidInput("peak powers must be finite and positive".into()));
    }

    // sort_by is stable: equal zeta keep index order
    let mut by_zeta: Vec<usize> = (0..n).collect();
    by_zeta.sort_by(|&a, &b| zeta[a].total_cmp(&zeta[b]));

    let log_inv: Vec<f64> = zeta.iter().map(|z| -z.log2()).collect();
    let max_rate: Vec<f64> = zeta.iter().zip(peak).map(|(z, p)| (p / z).ln_1p() / LN_2).collect();

    let mut target_rate = vec![0.0; n];
    let mut clamped = vec![false; n];
    let mut peak_order: Vec<usize> = Vec::new();
    let mut residual = min_rate;
    let mut free: Vec<usize> = Vec::with_capacity(n);

    loop {
        free.clear();
        free.extend(by_zeta.iter().copied().filter(|&k| !clamped[k]));
        target_rate.iter_mut().zip(&clamped).filter(|(_, &c)| !c).for_each(|(r, _)| *r = 0.0);
        if free.is_empty() {
            break;
        }

        // prefix[j] = sum of log2(1/zeta) over the j best free channels
        let mut prefix = Vec::with_capacity(free.len() + 1);
        prefix.push(0.0);
        for &k in &free {
            prefix.push(prefix.last().unwrap() + log_inv[k]);
        }

        let mut active = free.len();
        let level = loop {
            let level = (residual - prefix[active]) / active as f64;
            if active > 1 && log_inv[free[active - 1]] + level < 0.0 {
                active -= 1;
            } else {
                break level;
            }
        };

        let mut newly_clamped = false;
        for &k in &free[..active] {
            let r = (log_inv[k] + level).max(0.0);
            if r > max_rate[k] {
                clamped[k] = true;
                newly_clamped = true;
                peak_order.push(k);
                target_rate[k] = max_rate[k];
                residual -= max_rate[k];
            } else {
                target_rate[k] = r;
            }
        }
        if !newly_clamped {
            break;
        }
    }

    let num_peak = peak_order.len();
    let active = free.iter().filter(|&&k| target_rate[k] > 0.0).count();
    let feasible = num_peak < n || residual <= 0.0;
    let mut sorted_order = peak_order;
    sorted_order.extend_from_slice(&free);
    let target_sinr = target_rate.iter().map(|&r| target_sinr(r)).collect();

    Ok(TargetState {
        sorted_order,
        k_star: num_peak + active,
        num_peak,
        min_rate_residual: residual,
        target_rate,
        max_rate,
        target_sinr,
        feasible,
    })
}

/// Target-SINR tracking update: peak power on clamped channels,
/// `target_sinr * zeta` on active ones and zero elsewhere.
pub fn power_update(targets: &TargetState, zeta: &[f64], peak: &[f64]) -> Vec<f64> {
    let mut powers = vec![0.0; zeta.len()];
    for (pos, &k) in targets.sorted_order.iter().enumerate() {
        powers[k] = if pos < targets.num_peak {
            peak[k]
        } else if pos < targets.k_star {
            (targets.target_sinr[k] * zeta[k]).clamp(0.0, peak[k])
        } else {
            0.0
        };
    }
    powers
}

/// Stopping rule and optional damping of the outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JprcParams {
    pub max_iterations: usize,
    /// Stop once no power moves by this much or more, watts.
    pub convergence_tol: f64,
    /// Fraction of the step towards the new powers; 1 is the undamped update.
    pub damping: f64,
}

impl Default for JprcParams {
    fn default() -> Self {
        Self { max_iterations: 500, convergence_tol: 1e-12, damping: 1.0 }
    }
}

impl JprcParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if !(self.convergence_tol.is_finite() && self.convergence_tol > 0.0) {
            return Err(Error::InvalidConfig("convergence_tol must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidConfig("damping must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub final_powers: PowerMatrix,
    pub iterations_used: usize,
    /// Aggregate power after each iteration, watts.
    pub power_trace: Vec<f64>,
    /// Largest single power change in each iteration, watts.
    pub delta_trace: Vec<f64>,
    pub rate_report: RateReport,
    /// Whether each user's targets met its minimum rate within its peak powers
    /// at the last iteration. If the run did not converge, the rate achieved
    /// by the final powers must meet it too.
    pub per_user_feasible: Vec<bool>,
    pub converged: bool,
    /// Per-user targets of the last iteration.
    pub final_targets: Vec<TargetState>,
}

impl RunResult {
    pub fn aggregate_power(&self) -> f64 {
        self.rate_report.aggregate_power
    }

    pub fn all_feasible(&self) -> bool {
        self.per_user_feasible.iter().all(|&f| f)
    }
}

/// State handed to an observer after every outer iteration.
pub struct IterationView<'a> {
    pub iteration: usize,
    pub powers: &'a PowerMatrix,
    /// Effective interference each user saw at the start of the iteration,
    /// over its allocated channels.
    pub zeta: &'a [Vec<f64>],
    pub targets: &'a [TargetState],
}

/// Runs the synchronous iteration from all-zero powers.
pub fn run(scenario: &Scenario, allocation: &Allocation, params: &JprcParams) -> Result<RunResult> {
    run_observed(scenario, allocation, params, |_| {})
}

/// [`run`] with a callback after every iteration.
pub fn run_observed<F>(scenario: &Scenario, allocation: &Allocation, params: &JprcParams, mut observe: F) -> Result<RunResult>
where
    F: FnMut(&IterationView<'_>),
{
    params.validate()?;
    let graph = InterferenceGraph::new(scenario, allocation)?;
    let users = scenario.num_users();
    let peaks: Vec<Vec<f64>> = (0..users)
        .map(|i| allocation.channels(i).iter().map(|&k| scenario.peak_power(i, k)).collect())
        .collect();

    let mut powers = PowerMatrix::zeros(users, scenario.num_channels());
    let mut power_trace = Vec::new();
    let mut delta_trace = Vec::new();
    let mut targets = Vec::new();
    let mut converged = false;

    for t in 1..=params.max_iterations {
        let zeta: Vec<Vec<f64>> = (0..users).map(|i| graph.zeta_row(i, &powers)).collect();
        let mut next = powers.clone();
        targets.clear();
        for i in 0..users {
            let channels = allocation.channels(i);
            if channels.is_empty() {
                targets.push(empty_targets());
                continue;
            }
            let state = compute_targets(&zeta[i], scenario.min_rate(i), &peaks[i])?;
            let update = power_update(&state, &zeta[i], &peaks[i]);
            let row = next.row_mut(i);
            for (&k, p) in channels.iter().zip(update) {
                row[k] += params.damping * (p - row[k]);
            }
            targets.push(state);
        }
        let delta = next.max_abs_diff(&powers);
        powers = next;
        power_trace.push(powers.total());
        delta_trace.push(delta);
        observe(&IterationView { iteration: t, powers: &powers, zeta: &zeta, targets: &targets });
        if delta < params.convergence_tol {
            converged = true;
            break;
        }
    }

    let rate_report = graph.evaluate(scenario, &powers);
    Ok(RunResult {
        iterations_used: power_trace.len(),
        per_user_feasible: targets
            .iter()
            .zip(&rate_report.per_user_feasible)
            .map(|(t, &achieved)| t.feasible && (converged || achieved))
            .collect(),
        final_powers: powers,
        power_trace,
        delta_trace,
        rate_report,
        converged,
        final_targets: targets,
    })
}

fn empty_targets() -> TargetState {
    TargetState {
        sorted_order: Vec::new(),
        k_star: 0,
        num_peak: 0,
        min_rate_residual: 0.0,
        target_rate: Vec::new(),
        max_rate: Vec::new(),
        target_sinr: Vec::new(),
        feasible: false,
    }
}
