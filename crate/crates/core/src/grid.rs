//! The wildfire gridworld.
//!
//! Each tile is healthy, burning or burnt. Every step the player extinguishes
//! one burning tile, after which each healthy tile independently receives one
//! ignition attempt per burning neighbour, succeeding with the tile's density.
//! A burning tile that is left alone burns out after three steps. The reward
//! of a step is minus the number of tiles that caught fire and the score of a
//! game is the number of tiles still healthy when the fire is gone.

use rand::{Rng, RngCore};
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Number of steps a tile burns before turning to ash.
pub const BURN_STEPS: u8 = 3;

/// A tile coordinate `(row, col)`, zero based. Ordering is row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tile(pub usize, pub usize);

impl Tile {
    pub fn row(self) -> usize {
        self.0
    }

    pub fn col(self) -> usize {
        self.1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TileStatus {
    #[serde(rename = "H")]
    Healthy,
    /// Burning with the number of steps left before it burns out (1..=3).
    #[serde(rename = "B")]
    Burning(u8),
    #[serde(rename = "X")]
    Burnt,
}

impl TileStatus {
    pub fn is_healthy(self) -> bool {
        matches!(self, TileStatus::Healthy)
    }

    pub fn is_burning(self) -> bool {
        matches!(self, TileStatus::Burning(_))
    }
}

/// Per-tile ignition propensity, one of `0.1, 0.2, ..., 0.9`.
///
/// Stored as the integer level `1..=9` so that values are exact; the level is
/// also the number of trees drawn on the tile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Density(u8);

impl Density {
    pub fn from_level(level: u8) -> Result<Self> {
        if (1..=9).contains(&level) {
            Ok(Density(level))
        } else {
            Err(Error::InvalidInput(format!(
                "density level {level} outside 1..=9"
            )))
        }
    }

    pub fn level(self) -> u8 {
        self.0
    }

    pub fn p(self) -> f64 {
        f64::from(self.0) / 10.0
    }
}

impl TryFrom<f64> for Density {
    type Error = Error;

    fn try_from(p: f64) -> Result<Self> {
        let level = (p * 10.0).round();
        if !p.is_finite() || (p * 10.0 - level).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "density {p} is not a multiple of 0.1"
            )));
        }
        Density::from_level(level as u8)
    }
}

impl From<Density> for f64 {
    fn from(d: Density) -> f64 {
        d.p()
    }
}

/// Which tiles count as neighbours for spread, firefront and heuristics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Adjacency {
    #[default]
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "8")]
    Eight,
}

impl Adjacency {
    fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        const EIGHT: [(isize, isize); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        match self {
            Adjacency::Four => &FOUR,
            Adjacency::Eight => &EIGHT,
        }
    }

    fn is_four(&self) -> bool {
        *self == Adjacency::Four
    }
}

/// Full environment state. Densities never change during a game.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridState {
    width: usize,
    height: usize,
    densities: Vec<Density>,
    statuses: Vec<TileStatus>,
    step: u32,
    adjacency: Adjacency,
}

impl GridState {
    pub fn new(
        width: usize,
        height: usize,
        densities: Vec<Density>,
        statuses: Vec<TileStatus>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter("grid must be non-empty".into()));
        }
        let cells = width * height;
        if densities.len() != cells || statuses.len() != cells {
            return Err(Error::InvalidInput(format!(
                "expected {cells} densities and statuses, got {} and {}",
                densities.len(),
                statuses.len()
            )));
        }
        if let Some(bad) = statuses
            .iter()
            .find(|s| matches!(s, TileStatus::Burning(t) if !(1..=BURN_STEPS).contains(t)))
        {
            return Err(Error::InvalidInput(format!(
                "burning timer out of range: {bad:?}"
            )));
        }
        Ok(GridState {
            width,
            height,
            densities,
            statuses,
            step: 0,
            adjacency: Adjacency::Four,
        })
    }

    /// All tiles healthy.
    pub fn healthy(width: usize, height: usize, densities: Vec<Density>) -> Result<Self> {
        GridState::new(
            width,
            height,
            densities,
            vec![TileStatus::Healthy; width * height],
        )
    }

    pub fn with_adjacency(mut self, adjacency: Adjacency) -> Self {
        self.adjacency = adjacency;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn step_count(&self) -> u32 {
        self.step
    }

    pub fn adjacency(&self) -> Adjacency {
        self.adjacency
    }

    pub fn densities(&self) -> &[Density] {
        &self.densities
    }

    pub fn statuses(&self) -> &[TileStatus] {
        &self.statuses
    }

    pub fn contains(&self, tile: Tile) -> bool {
        tile.0 < self.height && tile.1 < self.width
    }

    fn index(&self, tile: Tile) -> usize {
        tile.0 * self.width + tile.1
    }

    fn tile_at(&self, index: usize) -> Tile {
        Tile(index / self.width, index % self.width)
    }

    pub fn status(&self, tile: Tile) -> TileStatus {
        self.statuses[self.index(tile)]
    }

    pub fn density(&self, tile: Tile) -> Density {
        self.densities[self.index(tile)]
    }

    /// Overrides one tile's status (fixtures and tests).
    pub fn set_status(&mut self, tile: Tile, status: TileStatus) {
        let i = self.index(tile);
        self.statuses[i] = status;
    }

    pub fn neighbors(&self, tile: Tile) -> impl Iterator<Item = Tile> + '_ {
        let (h, w) = (self.height as isize, self.width as isize);
        self.adjacency
            .offsets()
            .iter()
            .filter_map(move |&(dr, dc)| {
                let (r, c) = (tile.0 as isize + dr, tile.1 as isize + dc);
                (r >= 0 && r < h && c >= 0 && c < w).then(|| Tile(r as usize, c as usize))
            })
    }

    pub fn tiles(&self) -> impl Iterator<Item = Tile> + '_ {
        (0..self.cells()).map(|i| self.tile_at(i))
    }

    pub fn burning_tiles(&self) -> Vec<Tile> {
        self.tiles()
            .filter(|&t| self.status(t).is_burning())
            .collect()
    }

    pub fn count_healthy(&self) -> usize {
        self.statuses.iter().filter(|s| s.is_healthy()).count()
    }

    pub fn count_burnt(&self) -> usize {
        self.statuses
            .iter()
            .filter(|s| matches!(s, TileStatus::Burnt))
            .count()
    }

    pub fn is_terminal(&self) -> bool {
        !self.statuses.iter().any(|s| s.is_burning())
    }

    fn has_healthy_neighbor(&self, tile: Tile) -> bool {
        self.neighbors(tile).any(|n| self.status(n).is_healthy())
    }

    /// Spread phase followed by burn-down; returns newly ignited tiles.
    ///
    /// Ignition attempts come from tiles burning at the start of the call.
    /// Tiles ignited here start at [`BURN_STEPS`] and are not decremented.
    fn spread_and_decay<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<Tile> {
        let burning: Vec<bool> = self.statuses.iter().map(|s| s.is_burning()).collect();
        let mut ignited = Vec::new();
        for i in 0..self.cells() {
            if !self.statuses[i].is_healthy() {
                continue;
            }
            let tile = self.tile_at(i);
            let attempts = self
                .neighbors(tile)
                .filter(|&n| burning[self.index(n)])
                .count();
            if attempts == 0 {
                continue;
            }
            let spread = Binomial::new(attempts as u64, self.densities[i].p())
                .expect("density is a valid probability");
            if spread.sample(rng) >= 1 {
                ignited.push(tile);
            }
        }
        for (status, was_burning) in self.statuses.iter_mut().zip(&burning) {
            if let (true, TileStatus::Burning(timer)) = (*was_burning, *status) {
                *status = if timer <= 1 {
                    TileStatus::Burnt
                } else {
                    TileStatus::Burning(timer - 1)
                };
            }
        }
        for &tile in &ignited {
            let i = self.index(tile);
            self.statuses[i] = TileStatus::Burning(BURN_STEPS);
        }
        self.step += 1;
        ignited
    }
}

/// Result of one environment transition.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_state: GridState,
    pub reward: i32,
    pub newly_burning: Vec<Tile>,
    pub terminal: bool,
}

/// Tiles the player may extinguish.
///
/// The firefront (burning tiles with a healthy neighbour) in row-major
/// order; when it is empty but some tiles still burn, every burning tile.
pub fn candidate_actions(state: &GridState) -> Result<Vec<Tile>> {
    let burning = state.burning_tiles();
    if burning.is_empty() {
        return Err(Error::EmptyActionSpace);
    }
    let front: Vec<Tile> = burning
        .iter()
        .copied()
        .filter(|&t| state.has_healthy_neighbor(t))
        .collect();
    Ok(if front.is_empty() { burning } else { front })
}

/// Applies `action` (extinguish a burning tile) and advances the fire one step.
pub fn step<R: Rng + ?Sized>(state: &GridState, action: Tile, rng: &mut R) -> Result<StepOutcome> {
    if !state.contains(action) {
        return Err(Error::InvalidAction {
            tile: action,
            reason: "outside the grid",
        });
    }
    if !state.status(action).is_burning() {
        return Err(Error::InvalidAction {
            tile: action,
            reason: "tile is not burning",
        });
    }
    let mut next = state.clone();
    next.set_status(action, TileStatus::Burnt);
    let newly_burning = next.spread_and_decay(rng);
    let reward = -(newly_burning.len() as i32);
    let terminal = next.is_terminal();
    Ok(StepOutcome {
        next_state: next,
        reward,
        newly_burning,
        terminal,
    })
}

/// Score of a state: the number of healthy tiles.
pub fn score(state: &GridState) -> usize {
    state.count_healthy()
}

/// Spatially correlated densities from smoothed white noise.
///
/// I.i.d. standard normals are convolved with a Gaussian kernel of bandwidth
/// `kernel_sigma` tiles (reflect padding) and mapped by rank into nine
/// equal-mass buckets, giving levels `1..=9`.
pub fn gen_density_field(
    width: usize,
    height: usize,
    seed: u64,
    kernel_sigma: f64,
) -> Result<Vec<Density>> {
    if !(kernel_sigma > 0.0) || !kernel_sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "kernel_sigma must be positive, got {kernel_sigma}"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter("grid must be non-empty".into()));
    }
    let mut rng = rng::stream(seed);
    let noise: Vec<f64> = (0..width * height)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();

    let kernel = gaussian_kernel(kernel_sigma);
    let radius = (kernel.len() / 2) as isize;
    let mut rows = vec![0.0; noise.len()];
    for r in 0..height {
        for c in 0..width {
            rows[r * width + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| {
                    w * noise[r * width + reflect(c as isize + k as isize - radius, width)]
                })
                .sum();
        }
    }
    let mut smooth = vec![0.0; noise.len()];
    for r in 0..height {
        for c in 0..width {
            smooth[r * width + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| {
                    w * rows[reflect(r as isize + k as isize - radius, height) * width + c]
                })
                .sum();
        }
    }

    let mut order: Vec<usize> = (0..smooth.len()).collect();
    order.sort_by(|&a, &b| smooth[a].total_cmp(&smooth[b]).then(a.cmp(&b)));
    let cells = smooth.len();
    let mut levels = vec![Density(1); cells];
    for (rank, &i) in order.iter().enumerate() {
        levels[i] = Density((rank * 9 / cells) as u8 + 1);
    }
    Ok(levels)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as isize;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = i.rem_euclid(2 * n);
    (if m >= n { 2 * n - 1 - m } else { m }) as usize
}

/// A playable starting position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceRecord", into = "InstanceRecord")]
pub struct GameInstance {
    pub id: String,
    pub initial_state: GridState,
    pub difficulty_band: u8,
    pub gen_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    id: String,
    gen_seed: u64,
    width: usize,
    height: usize,
    densities: Vec<Density>,
    statuses: Vec<TileStatus>,
    difficulty_band: u8,
    #[serde(default, skip_serializing_if = "Adjacency::is_four")]
    adjacency: Adjacency,
}

impl TryFrom<InstanceRecord> for GameInstance {
    type Error = Error;

    fn try_from(rec: InstanceRecord) -> Result<Self> {
        if !(1..=5).contains(&rec.difficulty_band) {
            return Err(Error::InvalidInput(format!(
                "difficulty band {} outside 1..=5",
                rec.difficulty_band
            )));
        }
        let state = GridState::new(rec.width, rec.height, rec.densities, rec.statuses)?
            .with_adjacency(rec.adjacency);
        if state.is_terminal() {
            return Err(Error::InvalidInput(format!(
                "instance {} has no burning tile",
                rec.id
            )));
        }
        Ok(GameInstance {
            id: rec.id,
            initial_state: state,
            difficulty_band: rec.difficulty_band,
            gen_seed: rec.gen_seed,
        })
    }
}

impl From<GameInstance> for InstanceRecord {
    fn from(inst: GameInstance) -> Self {
        let s = inst.initial_state;
        InstanceRecord {
            id: inst.id,
            gen_seed: inst.gen_seed,
            width: s.width,
            height: s.height,
            densities: s.densities,
            statuses: s.statuses,
            difficulty_band: inst.difficulty_band,
            adjacency: s.adjacency,
        }
    }
}

/// Knobs for [`gen_instance_with`].
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceParams {
    pub width: usize,
    pub height: usize,
    pub kernel_sigma: f64,
    pub warmup_steps: u32,
    pub adjacency: Adjacency,
}

impl Default for InstanceParams {
    fn default() -> Self {
        InstanceParams {
            width: 10,
            height: 10,
            kernel_sigma: 1.5,
            warmup_steps: 3,
            adjacency: Adjacency::Four,
        }
    }
}

const MAX_IGNITION_ATTEMPTS: u64 = 10_000;

/// Builds the starting state for `seed`: a density field, one random
/// ignition and `warmup_steps` of unmitigated spread. The step counter is
/// reset so that play starts at step 0.
pub fn initial_state(seed: u64, params: &InstanceParams) -> Result<GridState> {
    for attempt in 0..MAX_IGNITION_ATTEMPTS {
        let mut rng = rng::child_stream(seed, attempt);
        let field_seed = rng.next_u64();
        let densities =
            gen_density_field(params.width, params.height, field_seed, params.kernel_sigma)?;
        let mut state = GridState::healthy(params.width, params.height, densities)?
            .with_adjacency(params.adjacency);
        let origin = rng.random_range(0..state.cells());
        state.statuses[origin] = TileStatus::Burning(BURN_STEPS);
        for _ in 0..params.warmup_steps {
            if state.is_terminal() {
                break;
            }
            state.spread_and_decay(&mut rng);
        }
        if !state.is_terminal() {
            state.step = 0;
            return Ok(state);
        }
    }
    Err(Error::InvalidParameter(format!(
        "fire never survived {} warmup steps in {MAX_IGNITION_ATTEMPTS} attempts",
        params.warmup_steps
    )))
}

/// Generates a 10×10 instance with the default field bandwidth and assigns
/// its difficulty band.
pub fn gen_instance(seed: u64, warmup_steps: u32) -> Result<GameInstance> {
    gen_instance_with(
        seed,
        &InstanceParams {
            warmup_steps,
            ..InstanceParams::default()
        },
    )
}

pub fn gen_instance_with(seed: u64, params: &InstanceParams) -> Result<GameInstance> {
    let state = initial_state(seed, params)?;
    let difficulty_band = crate::harness::pool::difficulty_band(&state, seed)?;
    Ok(GameInstance {
        id: format!("inst-{seed}"),
        initial_state: state,
        difficulty_band,
        gen_seed: seed,
    })
}
