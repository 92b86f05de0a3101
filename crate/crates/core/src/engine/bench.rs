//! State-store scalability benchmark.
//!
//! Agents depart at weekday-peak times over one virtual day. On its
//! departure tick an agent issues one set (its own new position) and 999
//! fetches (positions of random other agents) against a frozen copy of the
//! store; sets are committed after the tick, as in the simulation proper.
//! The reported figure is wall time per stepped agent.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::Parallelism;
use super::EngineError;
use crate::rng::mix;

pub const FETCHES_PER_SET: usize = 999;
pub const DEFAULT_REPS: usize = 5;
pub const DEFAULT_TIERS: [usize; 4] = [1_000, 10_000, 100_000, 1_000_000];
const TICK_MINUTES: u64 = 5;
const TICKS_PER_DAY: usize = (1440 / TICK_MINUTES) as usize;
/// City extent for synthetic positions, meters.
const EXTENT_M: f32 = 20_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub tiers: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub fetches_per_set: usize,
    pub parallelism: Parallelism,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            tiers: DEFAULT_TIERS.to_vec(),
            reps: DEFAULT_REPS,
            seed: 0,
            fetches_per_set: FETCHES_PER_SET,
            parallelism: Parallelism::Serial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub agents: usize,
    /// Mean over repetitions of seconds per stepped agent.
    pub mean_s: f64,
    /// Sample standard deviation over repetitions.
    pub sd_s: f64,
    pub reps: usize,
    pub per_rep_s: Vec<f64>,
    pub agent_steps: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Tiers that could not run, with the reason.
    pub skipped: Vec<(usize, String)>,
}

impl BenchReport {
    pub fn row(&self, agents: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.agents == agents)
    }

    /// mean(num) / mean(den), when both tiers ran.
    pub fn ratio(&self, num: usize, den: usize) -> Option<f64> {
        Some(self.row(num)?.mean_s / self.row(den)?.mean_s)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("agents,mean_s,sd_s,reps,agent_steps,status\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{},{},ok",
                r.agents, r.mean_s, r.sd_s, r.reps, r.agent_steps
            );
        }
        for (n, why) in &self.skipped {
            let _ = writeln!(out, "{n},,,0,0,skipped: {}", why.replace(',', ";"));
        }
        out
    }
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Departure tick drawn from a weekday mixture: morning peak, evening peak
/// and a daytime background.
pub fn departure_tick<R: Rng + ?Sized>(rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let hour: f64 = if u < 0.45 {
        Normal::new(7.75, 0.75).unwrap().sample(rng)
    } else if u < 0.8 {
        Normal::new(17.5, 1.0).unwrap().sample(rng)
    } else {
        rng.random_range(6.0..23.0)
    };
    let tick = (hour.clamp(0.0, 23.99) * 60.0 / TICK_MINUTES as f64) as usize;
    tick.min(TICKS_PER_DAY - 1)
}

struct Store {
    x: Vec<f32>,
    y: Vec<f32>,
    status: Vec<u32>,
}

fn alloc<T: Clone>(n: usize, v: T) -> Result<Vec<T>, String> {
    let mut out = Vec::new();
    out.try_reserve_exact(n)
        .map_err(|e| format!("allocation of {n} slots failed: {e}"))?;
    out.resize(n, v);
    Ok(out)
}

impl Store {
    fn new(n: usize, rng: &mut SmallRng) -> Result<Self, String> {
        let mut s = Self {
            x: alloc(n, 0.0)?,
            y: alloc(n, 0.0)?,
            status: alloc(n, 0)?,
        };
        for i in 0..n {
            s.x[i] = rng.random_range(0.0..EXTENT_M);
            s.y[i] = rng.random_range(0.0..EXTENT_M);
        }
        Ok(s)
    }
}

/// One agent's read phase: `fetches` random lookups, then the new state.
fn agent_step(
    store: &Store,
    agent: usize,
    tick: usize,
    fetches: usize,
    seed: u64,
) -> (usize, f32, f32, u32) {
    let mut rng = SmallRng::seed_from_u64(mix(&[seed, agent as u64, tick as u64]));
    let n = store.x.len();
    let (mut sx, mut sy, mut busy) = (0.0f32, 0.0f32, 0u32);
    for _ in 0..fetches {
        let j = rng.random_range(0..n);
        sx += store.x[j];
        sy += store.y[j];
        busy += store.status[j] & 1;
    }
    let k = (fetches.max(1)) as f32;
    // Head toward the centroid of whoever was looked at.
    let nx = 0.5 * store.x[agent] + 0.5 * sx / k;
    let ny = 0.5 * store.y[agent] + 0.5 * sy / k;
    (agent, nx, ny, (store.status[agent] + 1) | (busy & 1))
}

/// One repetition: seconds per stepped agent, and the number of steps.
fn run_rep(
    n: usize,
    fetches: usize,
    seed: u64,
    pool: Option<&rayon::ThreadPool>,
) -> Result<(f64, u64), String> {
    let mut rng = SmallRng::seed_from_u64(seed);
    let mut store = Store::new(n, &mut rng)?;
    let mut wheel: Vec<Vec<u32>> = vec![Vec::new(); TICKS_PER_DAY];
    for i in 0..n {
        wheel[departure_tick(&mut rng)].push(i as u32);
    }
    let mut total = 0.0;
    let mut stepped = 0u64;
    let mut checksum = 0u64;
    for (tick, due) in wheel.iter().enumerate() {
        if due.is_empty() {
            continue;
        }
        let started = Instant::now();
        let frozen = &store;
        let writes: Vec<(usize, f32, f32, u32)> = match pool {
            Some(pool) => pool.install(|| {
                due.par_iter()
                    .map(|&a| agent_step(frozen, a as usize, tick, fetches, seed))
                    .collect()
            }),
            None => due
                .iter()
                .map(|&a| agent_step(frozen, a as usize, tick, fetches, seed))
                .collect(),
        };
        for (a, x, y, s) in writes {
            store.x[a] = x;
            store.y[a] = y;
            store.status[a] = s;
            checksum = checksum.wrapping_add(s as u64);
        }
        total += started.elapsed().as_secs_f64();
        stepped += due.len() as u64;
    }
    black_box(checksum);
    Ok((total / stepped.max(1) as f64, stepped))
}

/// Runs one population size for `reps` repetitions.
pub fn bench_tier(
    n: usize,
    reps: usize,
    fetches: usize,
    seed: u64,
    parallelism: Parallelism,
) -> Result<BenchRow, EngineError> {
    if n < 2 || reps == 0 {
        return Err(EngineError::Config(format!(
            "benchmark needs at least 2 agents and 1 rep (got {n}, {reps})"
        )));
    }
    let pool = match parallelism {
        Parallelism::Serial => None,
        Parallelism::Parallel(k) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| EngineError::Config(format!("thread pool: {e}")))?,
        ),
    };
    let mut per_rep = Vec::with_capacity(reps);
    let mut steps = 0;
    for rep in 0..reps {
        let (t, s) = run_rep(
            n,
            fetches,
            mix(&[seed, n as u64, rep as u64]),
            pool.as_ref(),
        )
        .map_err(EngineError::Io)?;
        log::info!("bench n={n} rep={rep}: {t:.3e} s per agent step");
        per_rep.push(t);
        steps += s;
    }
    let (mean_s, sd_s) = mean_sd(&per_rep);
    Ok(BenchRow {
        agents: n,
        mean_s,
        sd_s,
        reps,
        per_rep_s: per_rep,
        agent_steps: steps,
    })
}

/// Runs every tier; a tier that cannot allocate is skipped and reported.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport, EngineError> {
    let mut report = BenchReport::default();
    for &n in &config.tiers {
        match bench_tier(
            n,
            config.reps,
            config.fetches_per_set,
            config.seed,
            config.parallelism,
        ) {
            Ok(row) => report.rows.push(row),
            Err(EngineError::Io(why)) => {
                log::warn!("skipping {n} agents: {why}");
                report.skipped.push((n, why));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}
