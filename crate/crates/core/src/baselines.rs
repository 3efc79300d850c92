//! Reference methods: single-cell water-filling, exhaustive search over
//! quantized powers and the equally-reduced power method.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interference::{interfering_set, rate, PowerMatrix, RATE_FEASIBILITY_TOL};
use crate::model::{Allocation, Scenario};

/// Water-filling solution of one user without interference.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterFilling {
    pub powers: Vec<f64>,
    /// Channels at peak power.
    pub num_peak: usize,
    /// Channels with a positive power below peak.
    pub num_active: usize,
    /// `mu` such that every active channel gets `mu - N/h`, watts.
    pub water_level: f64,
}

impl WaterFilling {
    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }
}

/// Minimum-power allocation of one interference-free user that reaches
/// `min_rate` under per-channel peak powers.
///
/// The active set is located by searching the breakpoints of the water level
/// (where a channel switches on, or saturates at peak). Inside the bracketing
/// segment the sets are fixed and the level follows in closed form:
/// `mu = (2^R' * prod N/h)^(1/n)` over the `n` active channels, where `R'` is
/// the rate left after the saturated ones.
pub fn water_filling_single_cell(gains: &[f64], noise: f64, min_rate: f64, peak: &[f64]) -> Result<WaterFilling> {
    let n = gains.len();
    if n == 0 || peak.len() != n {
        return Err(Error::InvalidInput("gains and peak powers must be non-empty and of equal length".into()));
    }
    if gains.iter().chain(peak).chain([&noise]).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidInput("gains, peaks and noise must be finite and positive".into()));
    }
    if !(min_rate.is_finite() && min_rate >= 0.0) {
        return Err(Error::InvalidInput(format!("minimum rate {min_rate} is not a non-negative number")));
    }
    if min_rate == 0.0 {
        return Ok(WaterFilling { powers: vec![0.0; n], num_peak: 0, num_active: 0, water_level: 0.0 });
    }

    let floor: Vec<f64> = gains.iter().map(|h| noise / h).collect();
    let max_rate: Vec<f64> = floor.iter().zip(peak).map(|(z, p)| (p / z).ln_1p() / LN_2).collect();
    if max_rate.iter().sum::<f64>() < min_rate {
        return Err(Error::Infeasible);
    }

    let rate_at = |mu: f64| -> f64 {
        floor.iter().zip(peak).map(|(&z, &p)| rate((mu - z).clamp(0.0, p), z)).sum()
    };
    let mut breaks: Vec<f64> = floor.iter().copied().chain(floor.iter().zip(peak).map(|(z, p)| z + p)).collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    // first breakpoint reaching the rate; rate(breaks[0]) = 0 < min_rate
    let hi = breaks.partition_point(|&b| rate_at(b) < min_rate);
    let hi = hi.min(breaks.len() - 1);
    let (b_lo, b_hi) = (breaks[hi - 1], breaks[hi]);

    let mut residual = min_rate;
    let mut log_sum = 0.0;
    let (mut num_peak, mut active) = (0, Vec::new());
    for k in 0..n {
        if floor[k] + peak[k] <= b_lo {
            num_peak += 1;
            residual -= max_rate[k];
        } else if floor[k] <= b_lo && floor[k] + peak[k] >= b_hi {
            active.push(k);
            log_sum += floor[k].log2();
        }
    }
    // log domain: the product of many N/h underflows
    let water_level = if active.is_empty() { b_lo } else { ((residual + log_sum) / active.len() as f64).exp2() };
    let powers = (0..n)
        .map(|k| {
            if floor[k] + peak[k] <= b_lo {
                peak[k]
            } else if active.contains(&k) {
                (water_level - floor[k]).clamp(0.0, peak[k])
            } else {
                0.0
            }
        })
        .collect();
    Ok(WaterFilling { powers, num_peak, num_active: active.len(), water_level })
}

/// Per-user water-filling on the noise-only effective interference, ignoring
/// all interference. Exact for a single OFDMA cell. Users that cannot reach
/// their rate transmit at peak on every channel.
pub fn water_filling_allocation(scenario: &Scenario, allocation: &Allocation) -> Result<PowerMatrix> {
    allocation.check_shape(scenario)?;
    let mut powers = PowerMatrix::zeros(scenario.num_users(), scenario.num_channels());
    for i in 0..scenario.num_users() {
        let channels = allocation.channels(i);
        if channels.is_empty() {
            continue;
        }
        let m = scenario.serving_bs(i);
        let gains: Vec<f64> = channels.iter().map(|&k| scenario.gain(m, i, k)).collect();
        let peak: Vec<f64> = channels.iter().map(|&k| scenario.peak_power(i, k)).collect();
        let row = match water_filling_single_cell(&gains, scenario.noise(m), scenario.min_rate(i), &peak) {
            Ok(wf) => wf.powers,
            Err(Error::Infeasible) => peak,
            Err(e) => return Err(e),
        };
        for (&k, p) in channels.iter().zip(row) {
            powers.set(i, k, p);
        }
    }
    Ok(powers)
}

/// Quantization of the power search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Grid step, watts.
    pub step: f64,
    /// Upper end of each searched variable, watts. Taken from the peak powers
    /// when absent. Each must be a whole number of steps.
    #[serde(default)]
    pub per_variable_max: Option<Vec<f64>>,
    #[serde(default = "default_max_variables")]
    pub max_variables: usize,
}

fn default_max_variables() -> usize {
    6
}

impl GridSpec {
    pub fn new(step: f64) -> Self {
        Self { step, per_variable_max: None, max_variables: default_max_variables() }
    }
}

/// Best grid point of a search.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOptimum {
    pub powers: PowerMatrix,
    pub aggregate: f64,
    /// Grid index of every searched variable.
    pub indices: Vec<usize>,
    /// Search-tree nodes visited.
    pub nodes: u64,
}

/// Searches every combination of `{0, step, 2 step, ..., peak}` over all
/// assigned `(user, channel)` pairs and returns the feasible point of least
/// aggregate power, ties going to the lexicographically smallest index.
pub fn exhaustive_search(scenario: &Scenario, allocation: &Allocation, min_rate: &[f64], grid: &GridSpec) -> Result<GridOptimum> {
    let groups: Vec<(usize, Vec<usize>)> = (0..scenario.num_users())
        .flat_map(|i| allocation.channels(i).iter().map(move |&k| (i, vec![k])))
        .collect();
    GridSearch::new(scenario, allocation, min_rate, grid, groups)?.solve()
}

/// Like [`exhaustive_search`], but every user transmits one common power on
/// all its channels; the common levels are searched jointly over users.
pub fn equally_reduced_power(scenario: &Scenario, allocation: &Allocation, min_rate: &[f64], grid: &GridSpec) -> Result<GridOptimum> {
    let groups: Vec<(usize, Vec<usize>)> = (0..scenario.num_users())
        .filter(|&i| !allocation.channels(i).is_empty())
        .map(|i| (i, allocation.channels(i).to_vec()))
        .collect();
    GridSearch::new(scenario, allocation, min_rate, grid, groups)?.solve()
}

/// Number of variables [`exhaustive_search`] would search.
pub fn exhaustive_variable_count(allocation: &Allocation) -> usize {
    allocation.num_assigned()
}

/// Number of variables [`equally_reduced_power`] would search.
pub fn equal_power_variable_count(allocation: &Allocation) -> usize {
    (0..allocation.num_users()).filter(|&i| !allocation.channels(i).is_empty()).count()
}

struct Slot {
    user: usize,
    channel: usize,
    own_gain: f64,
    noise: f64,
    /// `(slot index, gain at our base station)`
    interferers: Vec<(usize, f64)>,
}

struct Variable {
    owner: usize,
    slots: Vec<usize>,
    levels: usize,
    top: f64,
}

/// Depth-first enumeration in lexicographic index order.
///
/// Every grid point is accounted for; subtrees are skipped only when they
/// provably hold no better point: their aggregate cannot beat the incumbent,
/// or a user whose powers are all fixed already misses its rate with every
/// unfixed power at zero (more power elsewhere only adds interference). For
/// the last variable the smallest feasible level is found by bisection, as its
/// owner's rate grows with it and every other rate shrinks.
struct GridSearch {
    slots: Vec<Slot>,
    user_slots: Vec<Vec<usize>>,
    vars: Vec<Variable>,
    min_rate: Vec<f64>,
    step: f64,
    /// users whose variables are all fixed once depth `d` is reached
    done_at: Vec<Vec<usize>>,
    users: usize,
    channels: usize,
}

struct SearchState {
    index: Vec<usize>,
    power: Vec<f64>,
    best: Option<(u128, Vec<usize>)>,
    nodes: u64,
}

impl GridSearch {
    fn new(
        scenario: &Scenario,
        allocation: &Allocation,
        min_rate: &[f64],
        grid: &GridSpec,
        groups: Vec<(usize, Vec<usize>)>,
    ) -> Result<Self> {
        allocation.check_shape(scenario)?;
        if groups.len() > grid.max_variables {
            return Err(Error::GridGuard { variables: groups.len(), max: grid.max_variables });
        }
        if !(grid.step.is_finite() && grid.step > 0.0) {
            return Err(Error::InvalidInput("grid step must be finite and positive".into()));
        }
        let users = scenario.num_users();
        if min_rate.len() != users || min_rate.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidInput("need one non-negative minimum rate per user".into()));
        }
        if let Some(maxes) = &grid.per_variable_max {
            if maxes.len() != groups.len() {
                return Err(Error::InvalidInput(format!(
                    "{} per-variable maxima given for {} variables",
                    maxes.len(),
                    groups.len()
                )));
            }
        }

        let mut slot_of = vec![vec![usize::MAX; scenario.num_channels()]; users];
        let mut slots = Vec::new();
        for i in 0..users {
            for &k in allocation.channels(i) {
                slot_of[i][k] = slots.len();
                let m = scenario.serving_bs(i);
                slots.push(Slot {
                    user: i,
                    channel: k,
                    own_gain: scenario.gain(m, i, k),
                    noise: scenario.noise(m),
                    interferers: Vec::new(),
                });
            }
        }
        // Reuse the interferer sets of the rate model.
        for i in 0..users {
            for &k in allocation.channels(i) {
                let q = interfering_set(scenario, allocation, i, k)?;
                let m = scenario.serving_bs(i);
                slots[slot_of[i][k]].interferers = q.into_iter().map(|j| (slot_of[j][k], scenario.gain(m, j, k))).collect();
            }
        }
        let mut user_slots = vec![Vec::new(); users];
        for (s, slot) in slots.iter().enumerate() {
            user_slots[slot.user].push(s);
        }

        let mut vars = Vec::with_capacity(groups.len());
        for (v, (owner, channels)) in groups.into_iter().enumerate() {
            let top = match &grid.per_variable_max {
                Some(maxes) => maxes[v],
                None => channels.iter().map(|&k| scenario.peak_power(owner, k)).fold(f64::INFINITY, f64::min),
            };
            let levels = (top / grid.step).round();
            if !(top > 0.0 && levels >= 1.0 && (levels * grid.step - top).abs() <= 1e-9 * top) {
                return Err(Error::InvalidInput(format!(
                    "upper grid end {top} W of variable {v} is not a whole number of {} W steps",
                    grid.step
                )));
            }
            let slots_of_var = channels.iter().map(|&k| slot_of[owner][k]).collect();
            vars.push(Variable { owner, slots: slots_of_var, levels: levels as usize, top });
        }

        let mut last_var = vec![None; users];
        for (v, var) in vars.iter().enumerate() {
            last_var[var.owner] = Some(v);
        }
        let mut done_at = vec![Vec::new(); vars.len() + 1];
        for (u, last) in last_var.iter().enumerate() {
            match last {
                Some(v) => done_at[v + 1].push(u),
                // users without variables transmit nothing
                None => done_at[0].push(u),
            }
        }
        for d in 1..done_at.len() {
            let prev = done_at[d - 1].clone();
            done_at[d].extend(prev);
        }

        Ok(Self {
            slots,
            user_slots,
            vars,
            min_rate: min_rate.to_vec(),
            step: grid.step,
            done_at,
            users,
            channels: scenario.num_channels(),
        })
    }

    fn value(&self, v: usize, idx: usize) -> f64 {
        let var = &self.vars[v];
        if idx == var.levels {
            var.top
        } else {
            idx as f64 * self.step
        }
    }

    fn weight(&self, v: usize) -> u128 {
        self.vars[v].slots.len() as u128
    }

    fn user_rate(&self, user: usize, power: &[f64]) -> f64 {
        self.user_slots[user]
            .iter()
            .map(|&s| {
                let slot = &self.slots[s];
                let interference: f64 = slot.interferers.iter().map(|&(t, g)| power[t] * g).sum();
                rate(power[s], (interference + slot.noise) / slot.own_gain)
            })
            .sum()
    }

    fn meets(&self, user: usize, power: &[f64]) -> bool {
        self.user_rate(user, power) >= self.min_rate[user] - RATE_FEASIBILITY_TOL
    }

    fn set(&self, v: usize, idx: usize, state: &mut SearchState) {
        let p = self.value(v, idx);
        state.index[v] = idx;
        for &s in &self.vars[v].slots {
            state.power[s] = p;
        }
    }

    fn solve(&self) -> Result<GridOptimum> {
        let mut state = SearchState {
            index: vec![0; self.vars.len()],
            power: vec![0.0; self.slots.len()],
            best: None,
            nodes: 0,
        };
        if self.vars.is_empty() {
            if (0..self.users).all(|u| self.meets(u, &state.power)) {
                state.best = Some((0, Vec::new()));
            }
        } else if self.done_at[0].iter().all(|&u| self.meets(u, &state.power)) {
            self.descend(0, 0, &mut state);
        }
        let (_, indices) = state.best.ok_or(Error::Infeasible)?;

        let mut powers = PowerMatrix::zeros(self.users, self.channels);
        for (v, &idx) in indices.iter().enumerate() {
            let p = self.value(v, idx);
            for &s in &self.vars[v].slots {
                powers.set(self.slots[s].user, self.slots[s].channel, p);
            }
        }
        Ok(GridOptimum { aggregate: powers.total(), powers, indices, nodes: state.nodes })
    }

    fn descend(&self, depth: usize, partial: u128, state: &mut SearchState) {
        let last = depth + 1 == self.vars.len();
        let w = self.weight(depth);
        let bound = state.best.as_ref().map_or(u128::MAX, |b| b.0);

        if last {
            state.nodes += 1;
            let owner = self.vars[depth].owner;
            let levels = self.vars[depth].levels;
            self.set(depth, levels, state);
            if !self.meets(owner, &state.power) {
                self.set(depth, 0, state);
                return;
            }
            let (mut lo, mut hi) = (0usize, levels);
            while lo < hi {
                let mid = lo + (hi - lo) / 2;
                self.set(depth, mid, state);
                if self.meets(owner, &state.power) {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            self.set(depth, lo, state);
            let total = partial + w * lo as u128;
            if total < bound && (0..self.users).all(|u| self.meets(u, &state.power)) {
                state.best = Some((total, state.index.clone()));
            }
            self.set(depth, 0, state);
            return;
        }

        for idx in 0..=self.vars[depth].levels {
            let total = partial + w * idx as u128;
            if total >= state.best.as_ref().map_or(u128::MAX, |b| b.0) {
                break;
            }
            state.nodes += 1;
            self.set(depth, idx, state);
            if self.done_at[depth + 1].iter().all(|&u| self.meets(u, &state.power)) {
                self.descend(depth + 1, total, state);
            }
        }
        self.set(depth, 0, state);
    }
}
