//! Interferer sets, effective interference, SINR and achievable rates.
//!
//! The effective interference of user `i` on sub-channel `k` is the
//! interference-plus-noise seen at its serving base station divided by its own
//! path gain, so that `SINR = p / zeta` and `rate = log2(1 + p / zeta)`.
//!
//! Under NOMA a user is interfered by same-cell users with a strictly larger
//! path gain on the channel (weaker ones are cancelled by SIC) and by every
//! other-cell user on the channel. Under OFDMA only other-cell users
//! interfere. Exact gain ties are broken by user index: the lower index counts
//! as the stronger user.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Allocation, Scenario, Scheme};

/// Users whose rate is within this margin of their minimum are feasible.
pub const RATE_FEASIBILITY_TOL: f64 = 1e-9;

/// `U x C` matrix of transmit powers in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerMatrix {
    users: usize,
    channels: usize,
    data: Vec<f64>,
}

impl PowerMatrix {
    pub fn zeros(users: usize, channels: usize) -> Self {
        Self { users, channels, data: vec![0.0; users * channels] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let channels = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != channels) {
            return Err(Error::InvalidInput("power rows have different lengths".into()));
        }
        Ok(Self { users: rows.len(), channels, data: rows.concat() })
    }

    pub fn num_users(&self) -> usize {
        self.users
    }
    pub fn num_channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn get(&self, user: usize, channel: usize) -> f64 {
        self.data[user * self.channels + channel]
    }

    #[inline]
    pub fn set(&mut self, user: usize, channel: usize, value: f64) {
        self.data[user * self.channels + channel] = value;
    }

    pub fn row(&self, user: usize) -> &[f64] {
        &self.data[user * self.channels..(user + 1) * self.channels]
    }

    pub fn row_mut(&mut self, user: usize) -> &mut [f64] {
        &mut self.data[user * self.channels..(user + 1) * self.channels]
    }

    /// Sum of all entries.
    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &PowerMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.channels.max(1))
    }

    /// Checks the box constraint and that unassigned entries are zero.
    pub fn check(&self, scenario: &Scenario, allocation: &Allocation) -> Result<()> {
        if self.users != scenario.num_users() || self.channels != scenario.num_channels() {
            return Err(Error::InvalidInput("power matrix shape does not match the scenario".into()));
        }
        for i in 0..self.users {
            for k in 0..self.channels {
                let p = self.get(i, k);
                let ok = if allocation.is_assigned(i, k) {
                    p.is_finite() && (0.0..=scenario.peak_power(i, k)).contains(&p)
                } else {
                    p == 0.0
                };
                if !ok {
                    return Err(Error::InvalidInput(format!("power {p} of user {i} on channel {k} violates its bounds")));
                }
            }
        }
        Ok(())
    }
}

/// Per-channel and per-user rates of a power allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// `per_channel_rate[i][k]`, zero on unassigned channels. bps/Hz.
    pub per_channel_rate: Vec<Vec<f64>>,
    pub total_rate: Vec<f64>,
    /// Sum of all assigned powers, watts.
    pub aggregate_power: f64,
    pub per_user_feasible: Vec<bool>,
}

impl RateReport {
    pub fn all_feasible(&self) -> bool {
        self.per_user_feasible.iter().all(|&f| f)
    }
}

/// `log2(1 + p / zeta)`.
#[inline]
pub fn rate(power: f64, zeta: f64) -> f64 {
    (power / zeta).ln_1p() / LN_2
}

fn interferes(scenario: &Scenario, allocation: &Allocation, i: usize, j: usize, k: usize) -> bool {
    if j == i || !allocation.is_assigned(j, k) {
        return false;
    }
    let m = scenario.serving_bs(i);
    if scenario.serving_bs(j) != m {
        return true;
    }
    match allocation.scheme() {
        Scheme::Ofdma => false,
        Scheme::Noma => {
            let (hj, hi) = (scenario.gain(m, j, k), scenario.gain(m, i, k));
            hj > hi || (hj == hi && j < i)
        }
    }
}

/// Users interfering with `user` on `channel` at its serving base station.
pub fn interfering_set(scenario: &Scenario, allocation: &Allocation, user: usize, channel: usize) -> Result<Vec<usize>> {
    allocation.check_shape(scenario)?;
    if !allocation.is_assigned(user, channel) {
        return Err(Error::NotAssigned { user, channel });
    }
    Ok((0..scenario.num_users()).filter(|&j| interferes(scenario, allocation, user, j, channel)).collect())
}

/// Interference-plus-noise at the serving base station over own path gain.
pub fn effective_interference(
    scenario: &Scenario,
    allocation: &Allocation,
    powers: &PowerMatrix,
    user: usize,
    channel: usize,
) -> Result<f64> {
    let m = scenario.serving_bs(user);
    let own = scenario.gain(m, user, channel);
    if own <= 0.0 {
        return Err(Error::ZeroGain { user, channel });
    }
    let interference: f64 = interfering_set(scenario, allocation, user, channel)?
        .into_iter()
        .map(|j| powers.get(j, channel) * scenario.gain(m, j, channel))
        .sum();
    Ok((interference + scenario.noise(m)) / own)
}

#[derive(Debug, Clone)]
struct Link {
    channel: usize,
    own_gain: f64,
    noise: f64,
    /// `(interfering user, its gain at our base station)`
    interferers: Vec<(usize, f64)>,
}

/// Interferer lists of every assigned `(user, channel)` pair, built once per
/// scenario/allocation and reused across power iterations.
#[derive(Debug, Clone)]
pub struct InterferenceGraph {
    links: Vec<Vec<Link>>,
    channels: usize,
}

impl InterferenceGraph {
    pub fn new(scenario: &Scenario, allocation: &Allocation) -> Result<Self> {
        allocation.check_shape(scenario)?;
        let links = (0..scenario.num_users())
            .map(|i| {
                let m = scenario.serving_bs(i);
                allocation
                    .channels(i)
                    .iter()
                    .map(|&k| {
                        let own_gain = scenario.gain(m, i, k);
                        if own_gain <= 0.0 {
                            return Err(Error::ZeroGain { user: i, channel: k });
                        }
                        let interferers = (0..scenario.num_users())
                            .filter(|&j| interferes(scenario, allocation, i, j, k))
                            .map(|j| (j, scenario.gain(m, j, k)))
                            .collect();
                        Ok(Link { channel: k, own_gain, noise: scenario.noise(m), interferers })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { links, channels: scenario.num_channels() })
    }

    pub fn num_users(&self) -> usize {
        self.links.len()
    }

    /// Assigned channels of `user`, in allocation order.
    pub fn channels(&self, user: usize) -> impl Iterator<Item = usize> + '_ {
        self.links[user].iter().map(|l| l.channel)
    }

    /// Effective interference of `user` on each of its assigned channels, in
    /// allocation order.
    pub fn zeta_row(&self, user: usize, powers: &PowerMatrix) -> Vec<f64> {
        self.links[user]
            .iter()
            .map(|l| {
                let interference: f64 = l.interferers.iter().map(|&(j, h)| powers.get(j, l.channel) * h).sum();
                (interference + l.noise) / l.own_gain
            })
            .collect()
    }

    pub fn evaluate(&self, scenario: &Scenario, powers: &PowerMatrix) -> RateReport {
        let users = self.num_users();
        let mut per_channel_rate = vec![vec![0.0; self.channels]; users];
        let mut total_rate = vec![0.0; users];
        let mut aggregate_power = 0.0;
        for i in 0..users {
            let zeta = self.zeta_row(i, powers);
            for (link, z) in self.links[i].iter().zip(zeta) {
                let p = powers.get(i, link.channel);
                let r = rate(p, z);
                per_channel_rate[i][link.channel] = r;
                total_rate[i] += r;
                aggregate_power += p;
            }
        }
        let per_user_feasible = total_rate
            .iter()
            .enumerate()
            .map(|(i, &r)| r >= scenario.min_rate(i) - RATE_FEASIBILITY_TOL)
            .collect();
        RateReport { per_channel_rate, total_rate, aggregate_power, per_user_feasible }
    }
}

/// Rates, aggregate power and minimum-rate feasibility of `powers`.
pub fn evaluate(scenario: &Scenario, allocation: &Allocation, powers: &PowerMatrix) -> Result<RateReport> {
    if powers.num_users() != scenario.num_users() || powers.num_channels() != scenario.num_channels() {
        return Err(Error::InvalidInput("power matrix shape does not match the scenario".into()));
    }
    Ok(InterferenceGraph::new(scenario, allocation)?.evaluate(scenario, powers))
}
