//! Network model: cell layout, user placement, path gains and sub-channel
//! allocation.
//!
//! Base stations sit at the centres of a square grid of square cells. Users
//! are dropped uniformly inside their cell and served by the base station of
//! that cell. The path gain from user `i` to base station `m` on sub-channel
//! `k` is `h = x(k) * d^-alpha`, with an independent fading draw `x(k)` per
//! `(m, i, k)` triple.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Users closer than this to any base station are re-drawn.
pub const MIN_BS_DISTANCE: f64 = 1.0;

/// Multiple-access scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "NOMA", alias = "noma", alias = "Noma")]
    Noma,
    #[serde(rename = "OFDMA", alias = "ofdma", alias = "Ofdma")]
    Ofdma,
}

impl Scheme {
    pub const ALL: [Scheme; 2] = [Scheme::Noma, Scheme::Ofdma];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Noma => "NOMA",
            Scheme::Ofdma => "OFDMA",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NOMA" => Ok(Scheme::Noma),
            "OFDMA" => Ok(Scheme::Ofdma),
            _ => Err(Error::InvalidInput(format!("unknown scheme `{s}`"))),
        }
    }
}

/// Small-scale fading law for the per-channel factor `x(k)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingLaw {
    /// Power gain of a Rayleigh-faded amplitude: exponential with unit mean.
    #[default]
    Exponential,
    /// The Rayleigh amplitude itself, scaled to unit mean.
    RayleighAmplitude,
}

impl FadingLaw {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            FadingLaw::Exponential => Exp1.sample(rng),
            FadingLaw::RayleighAmplitude => {
                // sqrt of a unit-mean exponential is Rayleigh with mean sqrt(pi)/2
                let power: f64 = Exp1.sample(rng);
                power.sqrt() * 2.0 / std::f64::consts::PI.sqrt()
            }
        }
    }
}

/// Parameters of a random network instance. All quantities are SI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_cells: usize,
    /// Side of one square cell, meters.
    pub cell_side: f64,
    /// Side of the simulated area, meters.
    pub area_side: f64,
    pub users_per_cell: usize,
    pub num_subchannels: usize,
    pub path_loss_exponent: f64,
    /// Noise power at every base station, watts.
    pub noise_power: f64,
    /// Minimum rate of every user, bps/Hz.
    pub min_rate: f64,
    /// Peak power per user per sub-channel, watts.
    pub peak_power: f64,
    /// Seed of a single scenario drawn from this configuration. Experiments
    /// seed their snapshots from their own base seed instead.
    pub rng_seed: u64,
    #[serde(default)]
    pub fading: FadingLaw,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_cells: 4,
            cell_side: 500.0,
            area_side: 1000.0,
            users_per_cell: 4,
            num_subchannels: 100,
            path_loss_exponent: 3.0,
            noise_power: 1e-14,
            min_rate: 5.0,
            peak_power: 0.25e-3,
            rng_seed: 0,
            fading: FadingLaw::Exponential,
        }
    }
}

impl ScenarioConfig {
    pub fn num_users(&self) -> usize {
        self.num_cells * self.users_per_cell
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_cells", self.num_cells),
            ("users_per_cell", self.users_per_cell),
            ("num_subchannels", self.num_subchannels),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        let reals = [
            ("cell_side", self.cell_side),
            ("area_side", self.area_side),
            ("path_loss_exponent", self.path_loss_exponent),
            ("noise_power", self.noise_power),
            ("min_rate", self.min_rate),
            ("peak_power", self.peak_power),
        ];
        for (name, v) in reals {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and strictly positive (got {v})"
                )));
            }
        }
        self.layout().map(|_| ())
    }

    /// Grid shape `(columns, rows)` of the cell layout.
    pub fn layout(&self) -> Result<(usize, usize)> {
        let (cols, rows) = grid_shape(self.num_cells).ok_or(Error::UnsupportedLayout(self.num_cells))?;
        let width = cols as f64 * self.cell_side;
        if (width - self.area_side).abs() > 1e-9 * self.area_side {
            return Err(Error::InvalidConfig(format!(
                "{cols} cells of side {} m do not tile an area of side {} m",
                self.cell_side, self.area_side
            )));
        }
        Ok((cols, rows))
    }
}

fn grid_shape(num_cells: usize) -> Option<(usize, usize)> {
    if num_cells == 2 {
        return Some((2, 1));
    }
    let side = (num_cells as f64).sqrt().round() as usize;
    (side * side == num_cells && side > 0).then_some((side, side))
}

/// An immutable network instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioParts")]
pub struct Scenario {
    seed: u64,
    bs_positions: Vec<[f64; 2]>,
    user_positions: Vec<[f64; 2]>,
    serving_bs: Vec<usize>,
    cell_members: Vec<Vec<usize>>,
    /// `path_gain[m][i][k]`
    path_gain: Vec<Vec<Vec<f64>>>,
    noise: Vec<f64>,
    min_rate: Vec<f64>,
    /// `peak_power[i][k]`
    peak_power: Vec<Vec<f64>>,
}

/// Raw fields of a [`Scenario`], validated by [`Scenario::from_parts`].
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParts {
    #[serde(default)]
    pub seed: u64,
    pub bs_positions: Vec<[f64; 2]>,
    pub user_positions: Vec<[f64; 2]>,
    pub serving_bs: Vec<usize>,
    pub cell_members: Vec<Vec<usize>>,
    pub path_gain: Vec<Vec<Vec<f64>>>,
    pub noise: Vec<f64>,
    pub min_rate: Vec<f64>,
    pub peak_power: Vec<Vec<f64>>,
}

impl TryFrom<ScenarioParts> for Scenario {
    type Error = Error;

    fn try_from(parts: ScenarioParts) -> Result<Self> {
        Scenario::from_parts(parts)
    }
}

impl ScenarioParts {
    /// Parts for a hand-built instance: positions are zeroed, cell
    /// membership follows `serving_bs`.
    pub fn from_gains(
        serving_bs: Vec<usize>,
        path_gain: Vec<Vec<Vec<f64>>>,
        noise: Vec<f64>,
        min_rate: Vec<f64>,
        peak_power: Vec<Vec<f64>>,
    ) -> Self {
        let cells = path_gain.len();
        let mut cell_members = vec![Vec::new(); cells];
        for (i, &m) in serving_bs.iter().enumerate() {
            if m < cells {
                cell_members[m].push(i);
            }
        }
        Self {
            seed: 0,
            bs_positions: vec![[0.0; 2]; cells],
            user_positions: vec![[0.0; 2]; serving_bs.len()],
            serving_bs,
            cell_members,
            path_gain,
            noise,
            min_rate,
            peak_power,
        }
    }
}

impl Scenario {
    pub fn from_parts(p: ScenarioParts) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        let cells = p.bs_positions.len();
        let users = p.user_positions.len();
        if cells == 0 || users == 0 {
            return bad("scenario needs at least one base station and one user".into());
        }
        if p.serving_bs.len() != users || p.min_rate.len() != users || p.peak_power.len() != users {
            return bad("per-user vectors disagree on the number of users".into());
        }
        if p.cell_members.len() != cells || p.noise.len() != cells || p.path_gain.len() != cells {
            return bad("per-cell vectors disagree on the number of cells".into());
        }
        let channels = p.peak_power[0].len();
        if channels == 0 {
            return bad("scenario needs at least one sub-channel".into());
        }
        let mut seen = vec![false; users];
        for (m, members) in p.cell_members.iter().enumerate() {
            for &i in members {
                if i >= users || seen[i] || p.serving_bs[i] != m {
                    return bad(format!("cell membership of user {i} is inconsistent"));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return bad("every user must belong to exactly one cell".into());
        }
        for (m, per_user) in p.path_gain.iter().enumerate() {
            if per_user.len() != users || per_user.iter().any(|row| row.len() != channels) {
                return bad(format!("path gains of base station {m} have the wrong shape"));
            }
            if per_user.iter().flatten().any(|&h| !(h.is_finite() && h > 0.0)) {
                return bad(format!("path gains of base station {m} must be finite and positive"));
            }
        }
        if p.noise.iter().any(|&n| !(n.is_finite() && n > 0.0)) {
            return bad("noise powers must be finite and positive".into());
        }
        if p.min_rate.iter().any(|&r| !(r.is_finite() && r >= 0.0)) {
            return bad("minimum rates must be finite and non-negative".into());
        }
        if p.peak_power.iter().any(|row| row.len() != channels || row.iter().any(|&v| !(v.is_finite() && v > 0.0))) {
            return bad("peak powers must be finite, positive and U x C".into());
        }
        Ok(Self {
            seed: p.seed,
            bs_positions: p.bs_positions,
            user_positions: p.user_positions,
            serving_bs: p.serving_bs,
            cell_members: p.cell_members,
            path_gain: p.path_gain,
            noise: p.noise,
            min_rate: p.min_rate,
            peak_power: p.peak_power,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn num_cells(&self) -> usize {
        self.bs_positions.len()
    }
    pub fn num_users(&self) -> usize {
        self.user_positions.len()
    }
    pub fn num_channels(&self) -> usize {
        self.peak_power[0].len()
    }
    pub fn bs_positions(&self) -> &[[f64; 2]] {
        &self.bs_positions
    }
    pub fn user_positions(&self) -> &[[f64; 2]] {
        &self.user_positions
    }
    pub fn serving_bs(&self, user: usize) -> usize {
        self.serving_bs[user]
    }
    pub fn cell_members(&self, cell: usize) -> &[usize] {
        &self.cell_members[cell]
    }

    /// Path gain between base station `bs` and `user` on `channel`.
    #[inline]
    pub fn gain(&self, bs: usize, user: usize, channel: usize) -> f64 {
        self.path_gain[bs][user][channel]
    }

    pub fn noise(&self, bs: usize) -> f64 {
        self.noise[bs]
    }
    pub fn min_rate(&self, user: usize) -> f64 {
        self.min_rate[user]
    }
    pub fn peak_power(&self, user: usize, channel: usize) -> f64 {
        self.peak_power[user][channel]
    }
    pub fn peak_row(&self, user: usize) -> &[f64] {
        &self.peak_power[user]
    }

    /// Copy with every user's minimum rate set to `rate`.
    pub fn with_min_rate(&self, rate: f64) -> Self {
        let mut s = self.clone();
        s.min_rate.iter_mut().for_each(|r| *r = rate);
        s
    }

    /// Copy with every peak power set to `peak`.
    pub fn with_peak_power(&self, peak: f64) -> Self {
        let mut s = self.clone();
        s.peak_power.iter_mut().flatten().for_each(|p| *p = peak);
        s
    }

    /// Hash of the geometry and path gains, used to check that paired
    /// comparisons ran on the same instance.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.seed.hash(&mut h);
        self.serving_bs.hash(&mut h);
        for v in self
            .user_positions
            .iter()
            .flatten()
            .chain(self.path_gain.iter().flatten().flatten())
            .chain(self.noise.iter())
        {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Draws a random network instance. Identical `(config, seed)` pairs produce
/// bit-identical scenarios.
pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let (cols, _rows) = config.layout()?;
    let side = config.cell_side;
    let cells = config.num_cells;
    let users = config.num_users();
    let channels = config.num_subchannels;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let bs_positions: Vec<[f64; 2]> = (0..cells)
        .map(|m| {
            let (c, r) = ((m % cols) as f64, (m / cols) as f64);
            [(c + 0.5) * side, (r + 0.5) * side]
        })
        .collect();

    let mut user_positions = Vec::with_capacity(users);
    let mut serving_bs = Vec::with_capacity(users);
    let mut cell_members = vec![Vec::with_capacity(config.users_per_cell); cells];
    for m in 0..cells {
        let (x0, y0) = ((m % cols) as f64 * side, (m / cols) as f64 * side);
        for _ in 0..config.users_per_cell {
            let pos = loop {
                let p = [x0 + rng.random::<f64>() * side, y0 + rng.random::<f64>() * side];
                if bs_positions.iter().all(|&b| distance(p, b) >= MIN_BS_DISTANCE) {
                    break p;
                }
            };
            cell_members[m].push(user_positions.len());
            serving_bs.push(m);
            user_positions.push(pos);
        }
    }

    let mut path_gain = vec![vec![vec![0.0; channels]; users]; cells];
    for (m, per_user) in path_gain.iter_mut().enumerate() {
        for (i, row) in per_user.iter_mut().enumerate() {
            let loss = distance(bs_positions[m], user_positions[i]).powf(-config.path_loss_exponent);
            for h in row.iter_mut() {
                let x = loop {
                    let x = config.fading.sample(&mut rng);
                    if x > 0.0 {
                        break x;
                    }
                };
                *h = x * loss;
            }
        }
    }

    Scenario::from_parts(ScenarioParts {
        seed,
        bs_positions,
        user_positions,
        serving_bs,
        cell_members,
        path_gain,
        noise: vec![config.noise_power; cells],
        min_rate: vec![config.min_rate; users],
        peak_power: vec![vec![config.peak_power; channels]; users],
    })
}

/// Sub-channel assignment table together with each user's channel list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    scheme: Scheme,
    assign: Vec<Vec<bool>>,
    channels: Vec<Vec<usize>>,
}

impl Allocation {
    /// Builds an allocation from an explicit `U x C` table.
    pub fn from_table(scheme: Scheme, assign: Vec<Vec<bool>>) -> Result<Self> {
        let width = assign.first().map_or(0, Vec::len);
        if width == 0 || assign.iter().any(|row| row.len() != width) {
            return Err(Error::InvalidInput("assignment table must be a non-empty U x C matrix".into()));
        }
        let channels = assign
            .iter()
            .map(|row| row.iter().enumerate().filter(|(_, &a)| a).map(|(k, _)| k).collect())
            .collect();
        Ok(Self { scheme, assign, channels })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    #[inline]
    pub fn is_assigned(&self, user: usize, channel: usize) -> bool {
        self.assign[user][channel]
    }

    /// Channels allocated to `user`, ascending.
    pub fn channels(&self, user: usize) -> &[usize] {
        &self.channels[user]
    }

    pub fn num_users(&self) -> usize {
        self.assign.len()
    }

    pub fn num_channels(&self) -> usize {
        self.assign[0].len()
    }

    /// Number of assigned `(user, channel)` pairs.
    pub fn num_assigned(&self) -> usize {
        self.channels.iter().map(Vec::len).sum()
    }

    pub(crate) fn check_shape(&self, scenario: &Scenario) -> Result<()> {
        if self.num_users() != scenario.num_users() || self.num_channels() != scenario.num_channels() {
            return Err(Error::InvalidInput(format!(
                "allocation is {}x{} but the scenario has {} users and {} channels",
                self.num_users(),
                self.num_channels(),
                scenario.num_users(),
                scenario.num_channels()
            )));
        }
        Ok(())
    }
}

/// OFDMA: the `j`-th user of a cell gets the contiguous block
/// `[j*C/n, (j+1)*C/n)`. NOMA: every user gets every channel.
pub fn allocate_subchannels(scenario: &Scenario, scheme: Scheme) -> Result<Allocation> {
    let users = scenario.num_users();
    let channels = scenario.num_channels();
    let assign = match scheme {
        Scheme::Noma => vec![vec![true; channels]; users],
        Scheme::Ofdma => {
            let mut table = vec![vec![false; channels]; users];
            for cell in 0..scenario.num_cells() {
                let members = scenario.cell_members(cell);
                let n = members.len();
                if n == 0 {
                    continue;
                }
                if !channels.is_multiple_of(n) {
                    return Err(Error::IndivisibleChannels { channels, users: n, cell });
                }
                let block = channels / n;
                for (j, &user) in members.iter().enumerate() {
                    table[user][j * block..(j + 1) * block].iter_mut().for_each(|a| *a = true);
                }
            }
            table
        }
    };
    Allocation::from_table(scheme, assign)
}
