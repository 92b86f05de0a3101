//! Agent-owned state and the per-tick agent step.
//!
//! A step only touches its own agent; everything shared (network, other
//! agents' positions) is read from a frozen [`World`] view and writes are
//! returned as events and interaction intents for the commit phase.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::event::{EventKind, EventRecord};
use crate::behavior::place::choose_destination;
use crate::behavior::schedule::{fill_leisure_block, fill_medium, plan_mandatory, LeisureContext};
use crate::behavior::vehicle::{available_vehicles, select_vehicle, Speeds, TripContext};
use crate::behavior::{Activity, ActivityKind, DayInfo, DaySchedule, LocationHint, Tier, Vehicle};
use crate::cognition::dispatch::{dispatch, ModuleChoice, Observation};
use crate::cognition::goals::{goal_triggers, revise_goals, GoalSet, TriggerReport};
use crate::cognition::needs::{
    apply_need_effects, init_needs, need_fulfillment, record_dominant, Need, NeedsState,
};
use crate::memory::{nightly_reflection, EpisodicMemory, SpatialMemory};
use crate::oracle::{appraise_visit, Oracle};
use crate::persona::{AgentId, Persona};
use crate::rng::{agent_rng, AgentRng};
use crate::social::{
    best_online_contact, select_partner, should_contact_online, Mode, SocialNetwork,
};
use crate::world::{distance, Category, CityMap, PoiId, SimClock, WeatherState};

/// Awake, non-travelling agents per POI at the start of a tick.
pub type Occupancy = BTreeMap<PoiId, Vec<AgentId>>;

/// Spontaneous face-to-face attempts happen on this cadence.
pub const SOCIAL_TICK_MINUTES: u64 = crate::social::SOCIAL_TICK_MINUTES as u64;
/// Chance per social tick, per point of extraversion (1 to 3).
pub const CHAT_PROBABILITY_PER_POINT: f64 = 0.05;
/// Social isolation only counts once a full contact window has elapsed.
const ISOLATION_WARMUP_DAYS: u64 = 7;
const VISIT_LOG_DAYS: u64 = 30;

/// Read-only view shared by all agent steps of one tick.
pub struct World<'a> {
    pub city: &'a CityMap,
    pub oracle: &'a Oracle,
    pub network: &'a SocialNetwork,
    pub occupancy: &'a Occupancy,
    pub clock: SimClock,
    pub weather: WeatherState,
    pub speeds: Speeds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intent {
    pub initiator: AgentId,
    pub target: AgentId,
    pub mode: Mode,
}

#[derive(Debug, Default)]
pub struct StepOutput {
    pub events: Vec<EventRecord>,
    pub intent: Option<Intent>,
}

/// The activity an agent is currently spending time on, travel included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub activity: Activity,
    pub tier: Option<Tier>,
    /// Sim minute this segment (or its post-midnight continuation) began.
    pub start: u64,
    /// Start minute of the schedule block it realizes.
    pub block_start: u32,
    pub planned_end: u64,
    pub poi: PoiId,
}

impl Segment {
    fn is_travel(&self) -> bool {
        self.activity.kind == ActivityKind::Travel
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub from: PoiId,
    pub to: PoiId,
    pub depart: u64,
    pub arrive: u64,
    pub vehicle: Vehicle,
    pub next: Segment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub persona: Persona,
    pub needs: NeedsState,
    pub goals: GoalSet,
    pub schedule: DaySchedule,
    pub episodic: EpisodicMemory,
    pub spatial: SpatialMemory,
    pub rng: AgentRng,
    pub poi: PoiId,
    pub segment: Option<Segment>,
    pub trip: Option<Trip>,
    pub visits: Vec<(u64, PoiId)>,
    pub last_initiated: Option<u64>,
    pub stress_prev: bool,
    pub isolation_prev: bool,
    pub day_needs: Vec<NeedsState>,
    pub fulfillment: Vec<f64>,
}

fn event(
    clock: &SimClock,
    agent: AgentId,
    kind: EventKind,
    payload: serde_json::Value,
) -> EventRecord {
    EventRecord::new(clock.tick(), clock.sim_time(), agent, kind, payload)
}

impl AgentState {
    pub fn new(persona: Persona, run_seed: u64) -> Self {
        Self {
            rng: agent_rng(run_seed, persona.agent_id),
            poi: persona.home_poi,
            persona,
            needs: NeedsState::default(),
            goals: GoalSet::default(),
            schedule: DaySchedule::free_day(),
            episodic: EpisodicMemory::new(),
            spatial: SpatialMemory::new(),
            segment: None,
            trip: None,
            visits: Vec::new(),
            last_initiated: None,
            stress_prev: false,
            isolation_prev: false,
            day_needs: Vec::new(),
            fulfillment: Vec::new(),
        }
    }

    pub fn id(&self) -> AgentId {
        self.persona.agent_id
    }

    pub fn is_travelling(&self) -> bool {
        self.trip.is_some()
    }

    pub fn is_asleep(&self) -> bool {
        self.trip.is_none()
            && self
                .segment
                .as_ref()
                .is_some_and(|s| s.activity.kind == ActivityKind::Sleep)
    }

    /// Can be met face to face at `self.poi`.
    pub fn is_available(&self) -> bool {
        !self.is_travelling() && !self.is_asleep()
    }

    /// Morning routine: fresh needs, mandatory plan, medium tasks.
    pub fn start_day(&mut self, info: DayInfo, oracle: &Oracle) {
        self.needs = init_needs(&self.persona, info.day, info.weekday, oracle);
        self.schedule = plan_mandatory(&self.persona, &self.needs, info, oracle);
        fill_medium(&mut self.schedule, &self.persona, info.day, oracle);
        self.day_needs.clear();
    }

    /// One tick: decay, arrival, perception and dispatch, plan following.
    pub fn step(&mut self, w: &World<'_>) -> StepOutput {
        let mut out = StepOutput::default();
        self.needs.decay(w.clock.tick_minutes());
        let mut pending = None;
        if self
            .trip
            .as_ref()
            .is_some_and(|t| w.clock.sim_time() >= t.arrive)
        {
            pending = self.arrive(w, &mut out);
        }
        if self.trip.is_none() {
            self.perceive_and_act(w, pending.as_ref(), &mut out);
            self.follow_plan(w, pending, &mut out);
        }
        record_dominant(&mut self.persona, &self.needs);
        self.day_needs.push(self.needs);
        let [hunger, energy, safety, social] = self.needs.scores;
        out.events.push(event(
            &w.clock,
            self.id(),
            EventKind::NeedSnapshot,
            json!({"hunger": hunger, "energy": energy, "safety": safety, "social": social}),
        ));
        out
    }

    fn perceive_and_act(&mut self, w: &World<'_>, pending: Option<&Segment>, out: &mut StepOutput) {
        let t = w.clock.sim_time();
        let m = w.clock.minute_of_day();
        let id = self.id();
        let seg = pending.or(self.segment.as_ref());
        let asleep = pending.is_none() && self.is_asleep();
        let Some(block) = self.schedule.block_at(m).cloned() else {
            return;
        };
        let dominant = self.needs.dominant();
        let serves = dominant
            .is_some_and(|n| seg.and_then(|s| s.activity.kind.serves()) == Some(n))
            || dominant
                .is_some_and(|n| block.content.as_ref().and_then(|a| a.kind.serves()) == Some(n));
        let here: Vec<AgentId> = w
            .occupancy
            .get(&self.poi)
            .map(|v| v.iter().copied().filter(|&v| v != id).collect())
            .unwrap_or_default();
        let rate_ok = self
            .last_initiated
            .is_none_or(|l| t >= l + SOCIAL_TICK_MINUTES);

        if !asleep && (block.is_empty() || (dominant.is_some() && !serves)) {
            let colocated_contact = here
                .iter()
                .filter_map(|&v| w.network.edge(id, v).map(|e| (v, e.scalar())))
                .fold(None, |best: Option<(AgentId, f64)>, (v, s)| match best {
                    Some((_, b)) if b >= s => best,
                    _ => Some((v, s)),
                })
                .map(|(v, _)| v);
            let online_contact = if should_contact_online(&self.needs, Some(block.tier)) {
                best_online_contact(
                    id,
                    &here.iter().copied().collect::<BTreeSet<_>>(),
                    w.network,
                )
            } else {
                None
            };
            let obs = Observation {
                agent_id: id,
                minute: m,
                asleep,
                dominant_need: dominant,
                current_activity: seg
                    .map(|s| s.activity.description.clone())
                    .unwrap_or_default(),
                current_category: seg
                    .map(|s| s.activity.kind.as_str().to_owned())
                    .unwrap_or_default(),
                serves_need: serves,
                block_empty: block.is_empty(),
                travelling: false,
                colocated_contact: colocated_contact.filter(|_| rate_ok),
                online_contact,
            };
            let decision = dispatch(&obs, &ModuleChoice::ALL, w.oracle);
            match decision.module_choice {
                ModuleChoice::PlaceSelection | ModuleChoice::Rest => {
                    let need = decision
                        .param("need")
                        .and_then(Need::parse)
                        .or(dominant)
                        .or((decision.module_choice == ModuleChoice::Rest).then_some(Need::Energy));
                    if let Some(need) = need {
                        match self.schedule.interrupt_and_replan(need, m) {
                            Ok(()) => out.events.push(event(
                                &w.clock,
                                id,
                                EventKind::Interruption,
                                json!({"need": need.as_str(), "minute": m, "explanation": decision.explanation}),
                            )),
                            Err(e) => log::warn!("agent {id}: replan failed: {e}"),
                        }
                    }
                }
                ModuleChoice::Social => {
                    let mode = decision.param("mode").and_then(Mode::parse);
                    let target = decision
                        .param("target")
                        .and_then(|s| s.parse::<AgentId>().ok());
                    if let (Some(mode), Some(target)) = (mode, target) {
                        let allowed = match mode {
                            Mode::FaceToFace => rate_ok && here.contains(&target),
                            Mode::Online => true,
                        };
                        if allowed && target != id {
                            out.intent = Some(Intent {
                                initiator: id,
                                target,
                                mode,
                            });
                        }
                    }
                }
                ModuleChoice::Planning | ModuleChoice::Vehicle | ModuleChoice::None => {}
            }
        }

        if let Some(i) = self
            .schedule
            .index_at(m)
            .filter(|&i| self.schedule.blocks()[i].is_empty())
        {
            let b = &self.schedule.blocks()[i];
            let goals: Vec<String> = self.goals.all().cloned().collect();
            let ctx = LeisureContext {
                persona: &self.persona,
                day: w.clock.day_index(),
                minute: m,
                block_remaining: b.end() - m,
                needs: &self.needs,
                goals,
                at_home: self.poi == self.persona.home_poi,
            };
            let choice = fill_leisure_block(&ctx, w.oracle);
            if let Err(e) = self.schedule.assign_at(m, choice.activity, choice.duration) {
                log::warn!("agent {id}: could not fill free block: {e}");
            }
        }

        // Spontaneous chats with whoever shares the place.
        if out.intent.is_none()
            && !asleep
            && t.is_multiple_of(SOCIAL_TICK_MINUTES)
            && !here.is_empty()
        {
            let p = CHAT_PROBABILITY_PER_POINT * self.persona.big_five.extraversion as f64;
            if self.rng.random::<f64>() < p && rate_ok {
                if let Some(v) = select_partner(id, &here, w.network, &mut self.rng) {
                    out.intent = Some(Intent {
                        initiator: id,
                        target: v,
                        mode: Mode::FaceToFace,
                    });
                }
            }
        }
    }

    fn close_segment(&mut self, w: &World<'_>, now: u64, effects: bool, out: &mut StepOutput) {
        let Some(seg) = self.segment.take() else {
            return;
        };
        let completed = now >= seg.planned_end;
        // A segment carried over midnight and closed on the first tick of
        // the day has already been logged in full.
        if now > seg.start {
            out.events.push(event(
                &w.clock,
                self.id(),
                EventKind::ActivityEnd,
                json!({
                    "activity": seg.activity.description,
                    "kind": seg.activity.kind.as_str(),
                    "poi": seg.poi,
                    "start": seg.start,
                    "end": now,
                    "duration": now - seg.start,
                    "completed": completed,
                    "partial": false,
                }),
            ));
        }
        if effects && !seg.is_travel() {
            self.needs = apply_need_effects(
                &self.needs,
                self.id(),
                &seg.activity.description,
                seg.activity.kind.as_str(),
                completed,
                w.oracle,
            );
        }
    }

    fn open_segment(&mut self, w: &World<'_>, seg: Segment, out: &mut StepOutput) {
        out.events.push(event(
            &w.clock,
            self.id(),
            EventKind::ActivityStart,
            json!({
                "activity": seg.activity.description,
                "kind": seg.activity.kind.as_str(),
                "tier": seg.tier,
                "poi": seg.poi,
                "planned_end": seg.planned_end,
            }),
        ));
        self.segment = Some(seg);
    }

    fn follow_plan(&mut self, w: &World<'_>, pending: Option<Segment>, out: &mut StepOutput) {
        let m = w.clock.minute_of_day();
        let day_start = w.clock.day_index() * 1440;
        let Some(block) = self.schedule.block_at(m).cloned() else {
            return;
        };
        let activity = block.content.clone().unwrap_or_else(Activity::rest_here);
        let planned_end = day_start + block.end() as u64;

        if let Some(p) = pending {
            if p.block_start == block.start && p.activity == activity {
                let seg = Segment {
                    start: w.clock.sim_time(),
                    planned_end,
                    ..p
                };
                self.open_segment(w, seg, out);
                return;
            }
        }
        if let Some(seg) = self.segment.as_ref() {
            if seg.block_start == block.start && seg.activity.description == activity.description {
                return;
            }
        }
        // Same activity in the next block: settle the finished part and carry
        // on where the agent already is.
        let carry_on = self
            .segment
            .as_ref()
            .is_some_and(|seg| !seg.is_travel() && seg.activity == activity && self.poi == seg.poi);
        if carry_on {
            self.close_segment(w, w.clock.sim_time(), true, out);
            let seg = Segment {
                activity,
                tier: Some(block.tier),
                start: w.clock.sim_time(),
                block_start: block.start,
                planned_end,
                poi: self.poi,
            };
            self.open_segment(w, seg, out);
            return;
        }
        self.close_segment(w, w.clock.sim_time(), true, out);
        self.begin(w, activity, block.tier, block.start, planned_end, out);
    }

    fn begin(
        &mut self,
        w: &World<'_>,
        activity: Activity,
        tier: Tier,
        block_start: u32,
        planned_end: u64,
        out: &mut StepOutput,
    ) {
        let id = self.id();
        let t = w.clock.sim_time();
        let dest = match activity.location {
            LocationHint::Home => self.persona.home_poi,
            LocationHint::Work => self.persona.work_poi.unwrap_or(self.persona.home_poi),
            LocationHint::Current => self.poi,
            LocationHint::Out => {
                let origin = w.city.poi(self.poi).map(|p| (p.position, p.area_id));
                match origin {
                    Some((pos, area)) => match choose_destination(
                        id,
                        &activity.description,
                        area,
                        pos,
                        w.city,
                        &self.spatial,
                        w.oracle,
                        &mut self.rng,
                    ) {
                        Ok(d) => d.poi_id,
                        Err(e) => {
                            log::debug!(
                                "agent {id}: staying put for {}: {e}",
                                activity.description
                            );
                            self.poi
                        }
                    },
                    None => self.poi,
                }
            }
        };
        let next = Segment {
            activity,
            tier: Some(tier),
            start: t,
            block_start,
            planned_end,
            poi: dest,
        };
        let (Some(from), Some(to)) = (w.city.poi(self.poi), w.city.poi(dest)) else {
            self.open_segment(w, next, out);
            return;
        };
        if dest == self.poi {
            self.open_segment(w, next, out);
            return;
        }
        let d = distance(from.position, to.position);
        let trip_ctx = TripContext {
            distance_m: d,
            minute: w.clock.minute_of_day(),
            month: w.weather.month,
            weather: w.weather.condition,
            temperature: w.weather.temperature,
            agent_id: id,
            age: self.persona.age,
            occupation: self.persona.occupation.as_str().to_owned(),
            available: available_vehicles(&self.persona),
        };
        let (vehicle, why) = select_vehicle(&trip_ctx, w.oracle);
        let tm = w.clock.tick_minutes();
        let ticks = w.speeds.ticks(vehicle, d, tm).max(1) as u64;
        let arrive = t + ticks * tm as u64;
        out.events.push(event(
            &w.clock,
            id,
            EventKind::Move,
            json!({
                "from": self.poi,
                "to": dest,
                "distance_m": d,
                "vehicle": vehicle.as_str(),
                "justification": why,
                "depart": t,
                "arrive": arrive,
                "travel_minutes": arrive - t,
                "activity": next.activity.description,
            }),
        ));
        let travel = Segment {
            activity: Activity::new(
                format!("travel by {vehicle}"),
                ActivityKind::Travel,
                LocationHint::Current,
            ),
            tier: None,
            start: t,
            block_start,
            planned_end: arrive,
            poi: self.poi,
        };
        self.open_segment(w, travel, out);
        self.trip = Some(Trip {
            from: self.poi,
            to: dest,
            depart: t,
            arrive,
            vehicle,
            next,
        });
    }

    /// Ends the current trip; returns the activity it was heading to.
    fn arrive(&mut self, w: &World<'_>, out: &mut StepOutput) -> Option<Segment> {
        let trip = self.trip.take()?;
        let t = w.clock.sim_time();
        let id = self.id();
        self.close_segment(w, t, false, out);
        self.poi = trip.to;
        let Some(poi) = w.city.poi(trip.to) else {
            return Some(trip.next);
        };
        out.events.push(event(
            &w.clock,
            id,
            EventKind::Visit,
            json!({
                "poi": poi.id,
                "category": poi.category.as_str(),
                "area": poi.area_id,
                "x": poi.position.x,
                "y": poi.position.y,
                "activity": trip.next.activity.description,
            }),
        ));
        self.visits.push((t, poi.id));
        let node = self.episodic.append_temporal(
            t,
            Some(poi.id),
            format!(
                "arrived at {} ({}) to {}",
                poi.name, poi.category, trip.next.activity.description
            ),
            poi.category.as_str(),
        );
        let routine = poi.category == Category::Home || Some(poi.id) == self.persona.work_poi;
        if !routine {
            match appraise_visit(id, poi, w.oracle) {
                Some((obs, reasoning)) => {
                    if let Err(e) = self.spatial.observe(poi.id, obs, t) {
                        log::warn!("agent {id}: belief update failed: {e}");
                        self.spatial.note_visit(poi.id, t);
                    }
                    if let Ok(n) = node {
                        self.episodic
                            .add_reflection(reasoning, vec![n], w.clock.day_index());
                    }
                }
                None => self.spatial.note_visit(poi.id, t),
            }
        }
        Some(trip.next)
    }

    /// Closes the open segment at midnight so each day's durations sum to
    /// exactly one day; the activity itself carries on.
    pub fn close_day(&mut self, clock: &SimClock, now: u64) -> EventRecord {
        let seg = self.segment.as_mut();
        let payload = match seg {
            Some(seg) => {
                let p = json!({
                    "activity": seg.activity.description,
                    "kind": seg.activity.kind.as_str(),
                    "poi": seg.poi,
                    "start": seg.start,
                    "end": now,
                    "duration": now - seg.start,
                    "completed": false,
                    "partial": true,
                });
                seg.start = now;
                p
            }
            None => json!({
                "activity": "idle",
                "kind": ActivityKind::Rest.as_str(),
                "poi": self.poi,
                "start": now.saturating_sub(1440),
                "end": now,
                "duration": 1440,
                "completed": false,
                "partial": true,
            }),
        };
        EventRecord::new(
            clock.tick(),
            now,
            self.id(),
            EventKind::ActivityEnd,
            payload,
        )
    }

    /// Nightly reflection, belief decay and goal triggers for `day`.
    pub fn end_day(
        &mut self,
        clock: &SimClock,
        day: u64,
        network: &SocialNetwork,
        oracle: &Oracle,
    ) -> Vec<EventRecord> {
        let id = self.id();
        let now = (day + 1) * 1440;
        let at = |kind, payload| EventRecord::new(clock.tick(), now, id, kind, payload);
        let mut events = vec![self.close_day(clock, now)];

        self.fulfillment.push(need_fulfillment(&self.day_needs));
        let insights = nightly_reflection(&mut self.episodic, id, day, oracle);
        events.push(at(
            EventKind::Reflection,
            json!({
                "day": day,
                "count": insights.len(),
                "insights": insights.iter().map(|i| i.text.clone()).collect::<Vec<_>>(),
                "need_fulfillment": self.fulfillment.last(),
            }),
        ));
        self.spatial.decay_beliefs();

        let cutoff = now.saturating_sub(VISIT_LOG_DAYS * 1440);
        self.visits.retain(|&(t, _)| t >= cutoff);
        let report = goal_triggers(
            &self.persona,
            &self.goals,
            network.contacts(id),
            &self.visits,
            &self.spatial,
            now,
        );
        let isolation = report.social_isolation && day + 1 >= ISOLATION_WARMUP_DAYS;
        let fire = report.life_event
            || report.monthly_due
            || (report.financial_stress && !self.stress_prev)
            || (isolation && !self.isolation_prev);
        self.stress_prev = report.financial_stress;
        self.isolation_prev = isolation;
        if fire {
            let report = TriggerReport {
                social_isolation: isolation,
                ..report
            };
            match revise_goals(&self.goals, &self.persona, &report, day + 1, oracle) {
                Ok(goals) => {
                    self.goals = goals;
                    events.push(at(
                        EventKind::GoalRevision,
                        json!({
                            "day": day,
                            "triggers": report,
                            "short_goals": self.goals.short_goals,
                            "long_goals": self.goals.long_goals,
                        }),
                    ));
                }
                Err(e) => log::warn!("agent {id}: goal revision failed: {e}"),
            }
        }
        events
    }
}
