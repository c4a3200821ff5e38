//! Difficulty bands and balanced instance pools.

use rayon::prelude::*;

use super::{run_autonomous, EpisodeSeeds};
use crate::agent::Heuristic;
use crate::error::{Error, Result};
use crate::grid::{self, GameInstance, GridState, InstanceParams};
use crate::rng;

pub const BANDS: u8 = 5;
const BAND_ROLLOUTS: u64 = 20;
const BAND_AGENT_RADIUS: u32 = 7;
/// Candidate instances drawn per requested instance before giving up.
const CANDIDATES_PER_INSTANCE: usize = 200;
const BATCH: usize = 64;
/// Pool candidates burn for `warmup + (gen_seed mod (SPREAD + 1))` steps. A
/// single warmup length cannot reach every band: short warmups never leave
/// fewer than 20% healthy tiles, long ones rarely leave more than 80%.
pub const WARMUP_SPREAD: u32 = 12;

/// Band of a state: the mean healthy fraction left by the radius-7 greedy
/// agent over 20 autonomous rollouts, cut into quintiles. Band 1 is the
/// easiest (most trees saved).
pub fn difficulty_band(state: &GridState, seed: u64) -> Result<u8> {
    let inst = GameInstance {
        id: String::new(),
        initial_state: state.clone(),
        difficulty_band: 1,
        gen_seed: seed,
    };
    let cells = state.cells() as f64;
    let mut saved = 0.0;
    for i in 0..BAND_ROLLOUTS {
        let seeds = EpisodeSeeds::from_master(rng::derive_seed(seed, i));
        saved += run_autonomous(&inst, Heuristic::greedy(BAND_AGENT_RADIUS), seeds)?.final_score
            as f64
            / cells;
    }
    Ok(band_of(saved / BAND_ROLLOUTS as f64))
}

fn band_of(healthy_fraction: f64) -> u8 {
    let q = (healthy_fraction / 0.2).floor() as i64 + 1;
    // more trees saved means an easier instance
    let band = BANDS as i64 + 1 - q.clamp(1, BANDS as i64);
    band as u8
}

/// Warmup length used for the pool candidate with this generation seed.
pub fn pool_warmup(gen_seed: u64, base: u32) -> u32 {
    base + (gen_seed % (u64::from(WARMUP_SPREAD) + 1)) as u32
}

/// Regenerates a pool instance from its generation seed.
pub fn regenerate(gen_seed: u64, params: &InstanceParams) -> Result<GameInstance> {
    let warmup_steps = pool_warmup(gen_seed, params.warmup_steps);
    grid::gen_instance_with(
        gen_seed,
        &InstanceParams {
            warmup_steps,
            ..params.clone()
        },
    )
}

/// `count` instances, `ceil(count / 5)` per band, interleaved band by band
/// and truncated to `count`. Deterministic in `seed`.
pub fn make_instance_pool(count: usize, seed: u64, warmup: u32) -> Result<Vec<GameInstance>> {
    make_instance_pool_with(
        count,
        seed,
        &InstanceParams {
            warmup_steps: warmup,
            ..InstanceParams::default()
        },
    )
}

pub fn make_instance_pool_with(
    count: usize,
    seed: u64,
    params: &InstanceParams,
) -> Result<Vec<GameInstance>> {
    if count < BANDS as usize {
        return Err(Error::InvalidParameter(format!(
            "pool size {count} is below one instance per band"
        )));
    }
    let quota = count.div_ceil(BANDS as usize);
    let budget = CANDIDATES_PER_INSTANCE * count;
    let mut bands: Vec<Vec<GameInstance>> = vec![Vec::new(); BANDS as usize];
    let mut drawn = 0;
    let full = |bands: &[Vec<GameInstance>]| bands.iter().all(|b| b.len() >= quota);
    while drawn < budget && !full(&bands) {
        let batch: Vec<Result<GameInstance>> = (drawn..(drawn + BATCH).min(budget))
            .into_par_iter()
            // keep seeds below 2^53 so they survive a trip through JSON numbers in any client
            .map(|i| regenerate(rng::derive_seed(seed, i as u64) >> 11, params))
            .collect();
        drawn += batch.len();
        for inst in batch {
            let inst = inst?;
            let slot = &mut bands[inst.difficulty_band as usize - 1];
            if slot.len() < quota {
                slot.push(inst);
            }
        }
    }
    if !full(&bands) {
        let sizes: Vec<usize> = bands.iter().map(Vec::len).collect();
        return Err(Error::PoolGeneration(format!(
            "could not fill {quota} instances per band from {drawn} candidates (got {sizes:?})"
        )));
    }
    let mut pool = Vec::with_capacity(count);
    for i in 0..quota {
        for b in &bands {
            pool.push(b[i].clone());
        }
    }
    pool.truncate(count);
    Ok(pool)
}
