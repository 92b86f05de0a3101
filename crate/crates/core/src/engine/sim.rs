//! The tick loop.
//!
//! Each tick has a parallel agent phase, where every agent steps against a
//! frozen view of the world, followed by a single-threaded commit phase
//! that writes events in agent order and resolves interactions.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::agent::{AgentState, Intent, Occupancy, StepOutput, World, SOCIAL_TICK_MINUTES};
use super::config::{Parallelism, SimConfig};
use super::event::{EventKind, EventRecord, EventSink, JsonlWriter};
use super::scenario::Scenario;
use super::EngineError;
use crate::behavior::{DayInfo, Speeds};
use crate::cognition::needs::apply_need_effects;
use crate::oracle::Oracle;
use crate::persona::{generate_population, load_personas, AgentId, Persona, PopulationSpec};
use crate::social::{converse, init_network, Mode, SocialNetwork};
use crate::world::{generate_grid_city, is_weekday, load_city, CityMap, SimClock, WeatherState};

/// Everything that changes during a run; this is what snapshots persist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub clock: SimClock,
    pub weather: WeatherState,
    pub agents: Vec<AgentState>,
    pub network: SocialNetwork,
    pub interactions: u64,
    pub events: u64,
    /// SHA-256 of the agent states at each completed day boundary.
    pub day_digests: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub agents: usize,
    pub days: u64,
    pub sim_minutes: u64,
    pub events: u64,
    pub interactions: u64,
    pub oracle_calls: u64,
    pub oracle_failures: u64,
    pub mean_need_fulfillment: f64,
    pub day_digests: Vec<String>,
    pub elapsed_secs: f64,
}

pub struct Simulation {
    config: SimConfig,
    city: CityMap,
    oracle: Oracle,
    scenario: Scenario,
    state: SimState,
    index: HashMap<AgentId, usize>,
    pool: Option<rayon::ThreadPool>,
    speeds: Speeds,
    elapsed: Duration,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation")
            .field("agents", &self.state.agents.len())
            .field("sim_time", &self.state.clock.sim_time())
            .finish_non_exhaustive()
    }
}

fn build_pool(p: Parallelism) -> Result<Option<rayon::ThreadPool>, EngineError> {
    match p {
        Parallelism::Serial => Ok(None),
        Parallelism::Parallel(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(Some)
            .map_err(|e| EngineError::Config(format!("thread pool: {e}"))),
    }
}

fn digest_agents(agents: &[AgentState]) -> String {
    let mut h = Sha256::new();
    for a in agents {
        h.update(serde_json::to_vec(a).unwrap_or_default());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// City named by the config, or a generated grid.
pub fn load_config_city(config: &SimConfig) -> Result<CityMap, EngineError> {
    Ok(match &config.city {
        Some(path) => load_city(path)?,
        None => generate_grid_city(&config.grid),
    })
}

/// Personas named by the config, or a generated population.
pub fn load_config_personas(
    config: &SimConfig,
    city: &CityMap,
) -> Result<Vec<Persona>, EngineError> {
    Ok(match &config.population.path {
        Some(path) => load_personas(path)?,
        None => {
            let spec = match &config.population.spec {
                Some(p) => PopulationSpec::load(p)?,
                None => PopulationSpec::default(),
            };
            generate_population(config.population.n, city, config.seed, &spec)?
        }
    })
}

impl Simulation {
    /// Builds a run from explicit parts. Personas are validated against the
    /// city; the social network is seeded from them.
    pub fn new(
        config: SimConfig,
        city: CityMap,
        personas: Vec<Persona>,
        oracle: Oracle,
        scenario: Scenario,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        if personas.is_empty() {
            return Err(EngineError::Config("population is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for p in &personas {
            if !seen.insert(p.agent_id) {
                return Err(EngineError::Config(format!(
                    "duplicate agent id {}",
                    p.agent_id
                )));
            }
            p.validate()
                .and_then(|_| p.validate_anchors(&city))
                .map_err(|e| EngineError::Config(format!("agent {}: {e}", p.agent_id)))?;
        }
        let network = init_network(&personas, &city, config.seed);
        let agents = personas
            .into_iter()
            .map(|p| AgentState::new(p, config.seed))
            .collect();
        let state = SimState {
            clock: SimClock::new(config.tick_minutes),
            weather: WeatherState::initial(config.start_month, config.seed),
            agents,
            network,
            interactions: 0,
            events: 0,
            day_digests: Vec::new(),
        };
        Self::from_state(config, city, oracle, scenario, state)
    }

    /// Resumes from a saved state.
    pub fn from_state(
        config: SimConfig,
        city: CityMap,
        oracle: Oracle,
        scenario: Scenario,
        state: SimState,
    ) -> Result<Self, EngineError> {
        let index = state
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| (a.id(), i))
            .collect();
        Ok(Self {
            pool: build_pool(config.parallelism)?,
            config,
            city,
            oracle,
            scenario,
            state,
            index,
            speeds: Speeds::default(),
            elapsed: Duration::ZERO,
        })
    }

    /// Loads city, personas, oracle and scenario as the config describes.
    pub fn from_config(config: SimConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let city = load_config_city(&config)?;
        let personas = load_config_personas(&config, &city)?;
        let oracle = Oracle::from_config(&config.oracle, config.seed)?;
        let scenario = match &config.scenario {
            Some(p) => Scenario::load(p)?,
            None => Scenario::default(),
        };
        Self::new(config, city, personas, oracle, scenario)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn city(&self) -> &CityMap {
        &self.city
    }

    pub fn oracle(&self) -> &Oracle {
        &self.oracle
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn clock(&self) -> SimClock {
        self.state.clock
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentState> {
        self.index.get(&id).map(|&i| &self.state.agents[i])
    }

    pub fn personas(&self) -> Vec<Persona> {
        self.state
            .agents
            .iter()
            .map(|a| a.persona.clone())
            .collect()
    }

    /// Switches worker count; results do not depend on it.
    pub fn set_parallelism(&mut self, p: Parallelism) -> Result<(), EngineError> {
        self.pool = build_pool(p)?;
        self.config.parallelism = p;
        Ok(())
    }

    pub fn end_time(&self) -> u64 {
        self.config.days * SimClock::MINUTES_PER_DAY
    }

    pub fn is_finished(&self) -> bool {
        self.state.clock.sim_time() >= self.end_time()
    }

    fn emit(
        &mut self,
        sink: &mut dyn EventSink,
        events: impl IntoIterator<Item = EventRecord>,
    ) -> Result<(), EngineError> {
        for e in events {
            sink.emit(&e)?;
            self.state.events += 1;
        }
        Ok(())
    }

    fn start_day(&mut self, sink: &mut dyn EventSink) -> Result<(), EngineError> {
        let clock = self.state.clock;
        let day = clock.day_index();
        let mut events = Vec::new();
        for ev in self.scenario.on_day(day) {
            let Some(&i) = self.index.get(&ev.agent_id) else {
                log::warn!("life event for unknown agent {}", ev.agent_id);
                continue;
            };
            let agent = &mut self.state.agents[i];
            ev.apply(&mut agent.persona);
            agent.goals.pending_life_event = Some(ev.tag.clone());
            events.push(EventRecord::new(
                clock.tick(),
                clock.sim_time(),
                ev.agent_id,
                EventKind::LifeEvent,
                json!({"tag": ev.tag, "occupation": agent.persona.occupation.as_str(), "income": agent.persona.income}),
            ));
        }
        self.emit(sink, events)?;
        if day > 0 {
            self.state.weather =
                self.state
                    .weather
                    .next_day(day, self.config.start_month, self.config.seed);
        }
        let info = DayInfo {
            day,
            weekday: is_weekday(day),
            prev_weekday: day.checked_sub(1).map(is_weekday).unwrap_or(false),
        };
        let oracle = &self.oracle;
        let agents = &mut self.state.agents;
        match &self.pool {
            Some(pool) => pool.install(|| {
                agents
                    .par_iter_mut()
                    .for_each(|a| a.start_day(info, oracle))
            }),
            None => agents.iter_mut().for_each(|a| a.start_day(info, oracle)),
        }
        Ok(())
    }

    fn end_day(&mut self, sink: &mut dyn EventSink) -> Result<(), EngineError> {
        let clock = self.state.clock;
        let day = clock.day_index() - 1;
        let oracle = &self.oracle;
        let network = &self.state.network;
        let agents = &mut self.state.agents;
        let events: Vec<Vec<EventRecord>> = match &self.pool {
            Some(pool) => pool.install(|| {
                agents
                    .par_iter_mut()
                    .map(|a| a.end_day(&clock, day, network, oracle))
                    .collect()
            }),
            None => agents
                .iter_mut()
                .map(|a| a.end_day(&clock, day, network, oracle))
                .collect(),
        };
        self.emit(sink, events.into_iter().flatten())?;
        let digest = digest_agents(&self.state.agents);
        self.state.day_digests.push(digest);
        Ok(())
    }

    fn occupancy(&self) -> Occupancy {
        let mut occ = Occupancy::new();
        for a in &self.state.agents {
            if a.is_available() {
                occ.entry(a.poi).or_default().push(a.id());
            }
        }
        occ
    }

    /// Advances one tick, writing its events to `sink`.
    pub fn step_tick(&mut self, sink: &mut dyn EventSink) -> Result<(), EngineError> {
        let started = Instant::now();
        if self.state.clock.minute_of_day() == 0 {
            self.start_day(sink)?;
        }
        let occupancy = self.occupancy();
        let outputs: Vec<StepOutput> = {
            let world = World {
                city: &self.city,
                oracle: &self.oracle,
                network: &self.state.network,
                occupancy: &occupancy,
                clock: self.state.clock,
                weather: self.state.weather,
                speeds: self.speeds,
            };
            let agents = &mut self.state.agents;
            match &self.pool {
                Some(pool) => {
                    pool.install(|| agents.par_iter_mut().map(|a| a.step(&world)).collect())
                }
                None => agents.iter_mut().map(|a| a.step(&world)).collect(),
            }
        };
        let mut intents = Vec::new();
        for out in outputs {
            self.emit(sink, out.events)?;
            intents.extend(out.intent);
        }
        self.resolve_interactions(intents, sink)?;

        self.state.clock.advance();
        if self.state.clock.minute_of_day() == 0 {
            self.end_day(sink)?;
        }
        self.elapsed += started.elapsed();
        Ok(())
    }

    /// Pairs agents up in initiator order; each agent takes part in at most
    /// one exchange per tick.
    fn resolve_interactions(
        &mut self,
        intents: Vec<Intent>,
        sink: &mut dyn EventSink,
    ) -> Result<(), EngineError> {
        let clock = self.state.clock;
        let t = clock.sim_time();
        let mut busy = BTreeSet::new();
        for intent in intents {
            let (u, v) = (intent.initiator, intent.target);
            let (Some(&iu), Some(&iv)) = (self.index.get(&u), self.index.get(&v)) else {
                continue;
            };
            if u == v || busy.contains(&u) || busy.contains(&v) {
                continue;
            }
            let (a, b) = (&self.state.agents[iu], &self.state.agents[iv]);
            if intent.mode == Mode::FaceToFace {
                let rate_ok = a
                    .last_initiated
                    .is_none_or(|l| t >= l + SOCIAL_TICK_MINUTES);
                if !a.is_available() || !b.is_available() || a.poi != b.poi || !rate_ok {
                    continue;
                }
            }
            busy.insert(u);
            busy.insert(v);
            let conv = converse(
                u,
                v,
                intent.mode,
                &self.state.network,
                clock.tick(),
                &self.oracle,
            );
            self.state.network.record_interaction(u, v, conv.outcome, t);
            self.state.interactions += 1;
            let outcome = serde_json::to_value(conv.outcome).unwrap_or_default();
            let ev = EventRecord::new(
                clock.tick(),
                t,
                u,
                EventKind::Interaction,
                json!({"u": u, "v": v, "mode": intent.mode.as_str(), "outcome": outcome, "turns": conv.transcript.len()}),
            );
            self.emit(sink, [ev])?;
            for (me, other, idx) in [(u, v, iu), (v, u, iv)] {
                let agent = &mut self.state.agents[idx];
                if me == u {
                    agent.last_initiated = Some(t);
                }
                let text = format!(
                    "{} chat with agent {other}: {outcome}",
                    intent.mode.as_str()
                );
                if let Err(e) = agent
                    .episodic
                    .append_temporal(t, Some(agent.poi), text, "social")
                {
                    log::warn!("agent {me}: {e}");
                }
                agent.needs =
                    apply_need_effects(&agent.needs, me, "chat", "social", true, &self.oracle);
            }
        }
        Ok(())
    }

    /// Steps until the clock reaches `time` (sim minutes) or the run ends.
    pub fn run_until(&mut self, time: u64, sink: &mut dyn EventSink) -> Result<(), EngineError> {
        let end = time.min(self.end_time());
        while self.state.clock.sim_time() < end {
            self.step_tick(sink)?;
        }
        Ok(())
    }

    pub fn run(&mut self, sink: &mut dyn EventSink) -> Result<RunSummary, EngineError> {
        self.run_until(self.end_time(), sink)?;
        sink.finish()?;
        Ok(self.summary())
    }

    pub fn summary(&self) -> RunSummary {
        let f: Vec<f64> = self
            .state
            .agents
            .iter()
            .flat_map(|a| a.fulfillment.iter().copied())
            .collect();
        let stats = self.oracle.stats();
        RunSummary {
            agents: self.state.agents.len(),
            days: self.state.clock.day_index(),
            sim_minutes: self.state.clock.sim_time(),
            events: self.state.events,
            interactions: self.state.interactions,
            oracle_calls: stats.calls,
            oracle_failures: stats.failures,
            mean_need_fulfillment: if f.is_empty() {
                0.0
            } else {
                f.iter().sum::<f64>() / f.len() as f64
            },
            day_digests: self.state.day_digests.clone(),
            elapsed_secs: self.elapsed.as_secs_f64(),
        }
    }

    /// Runs to the end, writing `personas.jsonl`, the event log and
    /// `summary.json` under the output directory.
    pub fn run_to_files(&mut self) -> Result<RunSummary, EngineError> {
        let dir = self.config.output_dir.clone();
        std::fs::create_dir_all(&dir)
            .map_err(|e| EngineError::Io(format!("{}: {e}", dir.display())))?;
        crate::persona::save_personas(dir.join("personas.jsonl"), &self.personas())?;
        let mut sink = JsonlWriter::create(self.config.event_log_path())?;
        let summary = self.run(&mut sink)?;
        write_json(&dir.join("summary.json"), &summary)?;
        self.oracle
            .flush()
            .map_err(|e| EngineError::Io(e.to_string()))?;
        Ok(summary)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<(), EngineError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| EngineError::Io(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| EngineError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::engine::event::JsonlBuffer;
    use crate::world::GridCitySpec;

    fn small(days: u64, parallelism: Parallelism) -> Simulation {
        let config = SimConfig {
            days,
            seed: 11,
            parallelism,
            grid: GridCitySpec {
                rows: 3,
                cols: 3,
                pois_per_area: 15,
                ..Default::default()
            },
            ..Default::default()
        };
        let city = generate_grid_city(&config.grid);
        let personas = generate_population(12, &city, 11, &Default::default()).unwrap();
        Simulation::new(
            config,
            city,
            personas,
            Oracle::stub(11),
            Scenario::default(),
        )
        .unwrap()
    }

    #[test]
    fn every_day_is_fully_accounted_for() {
        let mut sim = small(2, Parallelism::Serial);
        let mut events = Vec::new();
        sim.run(&mut events).unwrap();
        let mut per_day: BTreeMap<(AgentId, u64), u64> = BTreeMap::new();
        for e in events.iter().filter(|e| e.kind == EventKind::ActivityEnd) {
            let start = e.u64("start").unwrap();
            let end = e.u64("end").unwrap();
            assert_eq!(end - start, e.u64("duration").unwrap());
            assert_eq!(
                start / 1440,
                (end - 1) / 1440,
                "segment crosses midnight: {e:?}"
            );
            *per_day.entry((e.agent_id, start / 1440)).or_default() += end - start;
        }
        assert_eq!(per_day.len(), 24);
        assert!(per_day.values().all(|&m| m == 1440), "{per_day:?}");
        let reflections = events
            .iter()
            .filter(|e| e.kind == EventKind::Reflection)
            .count();
        assert_eq!(reflections, 24);
        assert!(events.iter().any(|e| e.kind == EventKind::Move));
    }

    #[test]
    fn worker_count_does_not_change_the_log() {
        let mut logs = Vec::new();
        for p in [Parallelism::Serial, Parallelism::Parallel(3)] {
            let mut sim = small(1, p);
            let mut buf = JsonlBuffer::default();
            let summary = sim.run(&mut buf).unwrap();
            logs.push((buf.0, summary.day_digests));
        }
        assert_eq!(logs[0], logs[1]);
    }

    #[test]
    fn rejects_duplicate_ids_and_empty_population() {
        let sim = small(1, Parallelism::Serial);
        let mut personas = sim.personas();
        personas[1].agent_id = personas[0].agent_id;
        let r = Simulation::new(
            sim.config().clone(),
            sim.city().clone(),
            personas,
            Oracle::stub(0),
            Scenario::default(),
        );
        assert!(matches!(r, Err(EngineError::Config(_))));
        let r = Simulation::new(
            sim.config().clone(),
            sim.city().clone(),
            vec![],
            Oracle::stub(0),
            Scenario::default(),
        );
        assert!(r.is_err());
    }
}
