//! Day schedules: mandatory planning, medium-task filling, leisure choice and
//! need-driven interruption. Every operation keeps the blocks an exact,
//! gap-free partition of the day in 5-minute units.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cognition::needs::{Need, NeedsState};
use crate::oracle::schema::{FillMediumReply, LeisureReply, NeedScores, PlanMandatoryReply};
use crate::oracle::{Oracle, OracleKind};
use crate::persona::Persona;

pub const DAY_MINUTES: u32 = 1440;
pub const GRANULARITY: u32 = 5;
/// Leisure candidates requested per free block.
pub const LEISURE_CANDIDATES: usize = 3;
pub const GOAL_BONUS: f64 = 0.1;
/// Upper bound on medium tasks placed into one free block.
const MAX_MEDIUM_PER_BLOCK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityKind {
    Work,
    Study,
    Travel,
    Housework,
    Errand,
    Sleep,
    Hygiene,
    Meal,
    Leisure,
    Exercise,
    Social,
    Rest,
    Medical,
}

impl ActivityKind {
    pub const ALL: [ActivityKind; 13] = [
        ActivityKind::Work,
        ActivityKind::Study,
        ActivityKind::Travel,
        ActivityKind::Housework,
        ActivityKind::Errand,
        ActivityKind::Sleep,
        ActivityKind::Hygiene,
        ActivityKind::Meal,
        ActivityKind::Leisure,
        ActivityKind::Exercise,
        ActivityKind::Social,
        ActivityKind::Rest,
        ActivityKind::Medical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActivityKind::Work => "work",
            ActivityKind::Study => "study",
            ActivityKind::Travel => "travel",
            ActivityKind::Housework => "housework",
            ActivityKind::Errand => "errand",
            ActivityKind::Sleep => "sleep",
            ActivityKind::Hygiene => "hygiene",
            ActivityKind::Meal => "meal",
            ActivityKind::Leisure => "leisure",
            ActivityKind::Exercise => "exercise",
            ActivityKind::Social => "social",
            ActivityKind::Rest => "rest",
            ActivityKind::Medical => "medical",
        }
    }

    /// Unknown labels from the oracle count as leisure.
    pub fn parse_lenient(s: &str) -> Self {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .unwrap_or(ActivityKind::Leisure)
    }

    /// Need that this kind of activity replenishes.
    pub fn serves(self) -> Option<Need> {
        match self {
            ActivityKind::Meal => Some(Need::Hunger),
            ActivityKind::Sleep | ActivityKind::Rest => Some(Need::Energy),
            ActivityKind::Social => Some(Need::Social),
            _ => None,
        }
    }
}

impl fmt::Display for ActivityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationHint {
    Home,
    Work,
    Out,
    Current,
}

impl LocationHint {
    pub fn parse_lenient(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "home" => LocationHint::Home,
            "work" | "school" | "office" => LocationHint::Work,
            "out" => LocationHint::Out,
            _ => LocationHint::Current,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Mandatory,
    Medium,
    Leisure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activity {
    pub description: String,
    pub kind: ActivityKind,
    pub location: LocationHint,
}

impl Activity {
    pub fn new(description: impl Into<String>, kind: ActivityKind, location: LocationHint) -> Self {
        Self {
            description: description.into(),
            kind,
            location,
        }
    }

    pub fn rest_here() -> Self {
        Self::new(
            "rest at current location",
            ActivityKind::Rest,
            LocationHint::Current,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeBlock {
    pub start: u32,
    pub duration: u32,
    /// `None` is an EMPTY block awaiting a decision.
    pub content: Option<Activity>,
    pub tier: Tier,
    pub intention: String,
}

impl TimeBlock {
    pub fn empty(start: u32, duration: u32) -> Self {
        Self {
            start,
            duration,
            content: None,
            tier: Tier::Leisure,
            intention: "free time".into(),
        }
    }

    pub fn filled(start: u32, duration: u32, activity: Activity, tier: Tier) -> Self {
        Self {
            start,
            duration,
            intention: activity.description.clone(),
            content: Some(activity),
            tier,
        }
    }

    pub fn end(&self) -> u32 {
        self.start + self.duration
    }

    pub fn is_empty(&self) -> bool {
        self.content.is_none()
    }

    pub fn contains(&self, minute: u32) -> bool {
        (self.start..self.end()).contains(&minute)
    }

    fn with_span(&self, start: u32, end: u32) -> Self {
        Self {
            start,
            duration: end - start,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScheduleError {
    #[error("schedule has no blocks")]
    NoBlocks,
    #[error("block {index} starts at {found}, expected {expected}")]
    Gap {
        index: usize,
        expected: u32,
        found: u32,
    },
    #[error("block {index} has invalid duration {duration}")]
    Duration { index: usize, duration: u32 },
    #[error("schedule ends at {0}, not {DAY_MINUTES}")]
    End(u32),
    #[error("{tier:?} block {index} has no content")]
    MissingContent { index: usize, tier: Tier },
    #[error("minute {0} is not inside the day")]
    OutOfDay(u32),
    #[error("block at minute {0} is not free")]
    NotEmpty(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DaySchedule {
    blocks: Vec<TimeBlock>,
}

impl Default for DaySchedule {
    fn default() -> Self {
        Self::free_day()
    }
}

fn round_up(minutes: u32) -> u32 {
    minutes.div_ceil(GRANULARITY) * GRANULARITY
}

fn round_down(minutes: u32) -> u32 {
    minutes / GRANULARITY * GRANULARITY
}

impl DaySchedule {
    /// One EMPTY block covering the whole day.
    pub fn free_day() -> Self {
        Self {
            blocks: vec![TimeBlock::empty(0, DAY_MINUTES)],
        }
    }

    /// Builds from blocks, rejecting anything that is not an exact partition.
    pub fn from_blocks(blocks: Vec<TimeBlock>) -> Result<Self, ScheduleError> {
        let s = Self { blocks };
        s.validate()?;
        Ok(s)
    }

    pub fn blocks(&self) -> &[TimeBlock] {
        &self.blocks
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.blocks.is_empty() {
            return Err(ScheduleError::NoBlocks);
        }
        let mut expected = 0;
        for (index, b) in self.blocks.iter().enumerate() {
            if b.start != expected {
                return Err(ScheduleError::Gap {
                    index,
                    expected,
                    found: b.start,
                });
            }
            if b.duration < GRANULARITY || b.duration % GRANULARITY != 0 {
                return Err(ScheduleError::Duration {
                    index,
                    duration: b.duration,
                });
            }
            if b.tier != Tier::Leisure && b.content.is_none() {
                return Err(ScheduleError::MissingContent {
                    index,
                    tier: b.tier,
                });
            }
            expected = b.end();
        }
        if expected != DAY_MINUTES {
            return Err(ScheduleError::End(expected));
        }
        Ok(())
    }

    pub fn index_at(&self, minute: u32) -> Option<usize> {
        let i = self.blocks.partition_point(|b| b.end() <= minute);
        (i < self.blocks.len()).then_some(i)
    }

    pub fn block_at(&self, minute: u32) -> Option<&TimeBlock> {
        self.index_at(minute).map(|i| &self.blocks[i])
    }

    /// Puts `activity` at the start of EMPTY block `index`, leaving the rest
    /// EMPTY. Durations round up to 5 minutes and are capped at the block; a
    /// remainder under 5 minutes is absorbed by the task.
    pub fn place_task(
        &mut self,
        index: usize,
        activity: Activity,
        duration: u32,
        tier: Tier,
    ) -> Result<(), ScheduleError> {
        let block = self
            .blocks
            .get(index)
            .ok_or(ScheduleError::OutOfDay(DAY_MINUTES))?;
        if !block.is_empty() {
            return Err(ScheduleError::NotEmpty(block.start));
        }
        let mut d = round_up(duration.max(1)).min(block.duration);
        if block.duration - d < GRANULARITY {
            d = block.duration;
        }
        let start = block.start;
        let rest = block.duration - d;
        let task = TimeBlock::filled(start, d, activity, tier);
        if rest == 0 {
            self.blocks[index] = task;
        } else {
            self.blocks[index] = TimeBlock::empty(start + d, rest);
            self.blocks.insert(index, task);
        }
        Ok(())
    }

    /// Fills the EMPTY block containing `now` with `activity` from `now`
    /// onward; the elapsed part stays EMPTY.
    pub fn assign_at(
        &mut self,
        now: u32,
        activity: Activity,
        duration: u32,
    ) -> Result<(), ScheduleError> {
        let now = round_down(now);
        let index = self.index_at(now).ok_or(ScheduleError::OutOfDay(now))?;
        if !self.blocks[index].is_empty() {
            return Err(ScheduleError::NotEmpty(now));
        }
        let index = self.split_at(index, now);
        self.place_task(index, activity, duration, Tier::Leisure)
    }

    /// Splits block `index` at `minute` (a 5-minute boundary strictly
    /// inside it) and returns the index of the second half.
    fn split_at(&mut self, index: usize, minute: u32) -> usize {
        let b = self.blocks[index].clone();
        if minute <= b.start || minute >= b.end() {
            return index;
        }
        self.blocks[index] = b.with_span(b.start, minute);
        self.blocks.insert(index + 1, b.with_span(minute, b.end()));
        index + 1
    }

    /// Cuts the current block at `now` and inserts a block serving `need`.
    /// Later blocks shift right: flexible blocks are truncated at the next
    /// mandatory start, mandatory blocks keep their start where possible and
    /// otherwise keep their end, and are dropped only when nothing remains.
    pub fn interrupt_and_replan(&mut self, need: Need, now: u32) -> Result<(), ScheduleError> {
        let now = round_down(now);
        let index = self.index_at(now).ok_or(ScheduleError::OutOfDay(now))?;
        let (activity, want) = need_block(need);
        let insert_len = want.min(DAY_MINUTES - now);

        let current = self.blocks[index].clone();
        let mut head: Vec<TimeBlock> = self.blocks[..index].to_vec();
        if now > current.start {
            head.push(current.with_span(current.start, now));
        }
        // Remainder of the interrupted block, then everything after it.
        let mut tail: Vec<TimeBlock> = Vec::new();
        if current.tier == Tier::Mandatory {
            tail.push(current.with_span(now, current.end()));
        } else {
            tail.push(TimeBlock::empty(now, current.end() - now));
        }
        tail.extend_from_slice(&self.blocks[index + 1..]);

        let mut out = head;
        out.push(TimeBlock::filled(now, insert_len, activity, Tier::Medium));
        let mut cursor = now + insert_len;
        for (i, b) in tail.iter().enumerate() {
            if cursor >= DAY_MINUTES {
                break;
            }
            let (start, end) = if b.tier == Tier::Mandatory {
                (cursor.max(b.start), b.end())
            } else {
                let limit = tail[i + 1..]
                    .iter()
                    .find(|n| n.tier == Tier::Mandatory)
                    .map(|n| n.start.max(cursor))
                    .unwrap_or(DAY_MINUTES);
                (cursor, (cursor + b.duration).min(limit))
            };
            if end <= start {
                continue;
            }
            if start > cursor {
                out.push(TimeBlock::empty(cursor, start - cursor));
            }
            out.push(b.with_span(start, end));
            cursor = end;
        }
        if cursor < DAY_MINUTES {
            out.push(TimeBlock::empty(cursor, DAY_MINUTES - cursor));
        }
        self.blocks = out;
        self.merge_empty();
        Ok(())
    }

    /// Joins neighbouring EMPTY blocks.
    fn merge_empty(&mut self) {
        let mut merged: Vec<TimeBlock> = Vec::with_capacity(self.blocks.len());
        for b in self.blocks.drain(..) {
            match merged.last_mut() {
                Some(prev) if prev.is_empty() && b.is_empty() => prev.duration += b.duration,
                _ => merged.push(b),
            }
        }
        self.blocks = merged;
    }
}

/// Block inserted when a need interrupts the plan.
pub fn need_block(need: Need) -> (Activity, u32) {
    match need {
        Need::Hunger => (
            Activity::new("eat a meal", ActivityKind::Meal, LocationHint::Out),
            45,
        ),
        Need::Energy => (
            Activity::new("rest at home", ActivityKind::Rest, LocationHint::Home),
            60,
        ),
        Need::Safety => (
            Activity::new("go home and unwind", ActivityKind::Rest, LocationHint::Home),
            30,
        ),
        Need::Social => (
            Activity::new(
                "meet friends for a chat",
                ActivityKind::Social,
                LocationHint::Out,
            ),
            60,
        ),
    }
}

/// Calendar facts the planner needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DayInfo {
    pub day: u64,
    pub weekday: bool,
    pub prev_weekday: bool,
}

/// Places sleep and work/school; everything else is EMPTY. Overlaps are
/// resolved by truncating the later block. A failed call yields a free day.
pub fn plan_mandatory(
    persona: &Persona,
    needs: &NeedsState,
    info: DayInfo,
    oracle: &Oracle,
) -> DaySchedule {
    let ctx = json!({
        "agent_id": persona.agent_id,
        "day": info.day,
        "weekday": info.weekday,
        "prev_weekday": info.prev_weekday,
        "age": persona.age,
        "occupation": persona.occupation.as_str(),
        "habits": persona.habits,
        "needs": NeedScores::from_array(needs.scores),
    });
    let reply: PlanMandatoryReply = match oracle.ask(OracleKind::PlanMandatory, ctx) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("agent {}: plan_mandatory failed: {e}", persona.agent_id);
            return DaySchedule::free_day();
        }
    };
    let mut proposed: Vec<(u32, u32, Activity)> = reply
        .blocks
        .into_iter()
        .filter_map(|b| {
            let start = round_down(b.start.min(DAY_MINUTES));
            let end = round_up(b.start.saturating_add(b.duration)).min(DAY_MINUTES);
            (end > start).then(|| {
                let kind = ActivityKind::parse_lenient(&b.category);
                let location = if b.location.is_empty() {
                    default_location(kind)
                } else {
                    LocationHint::parse_lenient(&b.location)
                };
                (start, end, Activity::new(b.activity, kind, location))
            })
        })
        .collect();
    proposed.sort_by_key(|(s, _, _)| *s);

    let mut blocks = Vec::new();
    let mut cursor = 0;
    for (start, end, activity) in proposed {
        let start = if start < cursor {
            log::debug!(
                "agent {}: truncating overlapping {}",
                persona.agent_id,
                activity.description
            );
            cursor
        } else {
            start
        };
        if end <= start {
            continue;
        }
        if start > cursor {
            blocks.push(TimeBlock::empty(cursor, start - cursor));
        }
        blocks.push(TimeBlock::filled(
            start,
            end - start,
            activity,
            Tier::Mandatory,
        ));
        cursor = end;
    }
    if cursor < DAY_MINUTES {
        blocks.push(TimeBlock::empty(cursor, DAY_MINUTES - cursor));
    }
    DaySchedule { blocks }
}

fn default_location(kind: ActivityKind) -> LocationHint {
    match kind {
        ActivityKind::Work | ActivityKind::Study => LocationHint::Work,
        ActivityKind::Sleep | ActivityKind::Housework | ActivityKind::Hygiene => LocationHint::Home,
        _ => LocationHint::Current,
    }
}

/// Recursively places medium-priority tasks at the start of EMPTY blocks
/// until the oracle declines or the remainder is too short.
pub fn fill_medium(schedule: &mut DaySchedule, persona: &Persona, day: u64, oracle: &Oracle) {
    let mut i = 0;
    let mut placed_in_block = 0;
    while i < schedule.blocks.len() {
        let b = &schedule.blocks[i];
        if !b.is_empty() || b.duration < GRANULARITY || placed_in_block >= MAX_MEDIUM_PER_BLOCK {
            i += 1;
            placed_in_block = 0;
            continue;
        }
        let after_sleep = i > 0
            && schedule.blocks[i - 1]
                .content
                .as_ref()
                .is_some_and(|a| a.kind == ActivityKind::Sleep);
        let done: Vec<&str> = schedule
            .blocks
            .iter()
            .filter_map(|b| b.content.as_ref().map(|a| a.description.as_str()))
            .collect();
        let ctx = json!({
            "agent_id": persona.agent_id,
            "day": day,
            "occupation": persona.occupation.as_str(),
            "habits": persona.habits,
            "block_start": b.start,
            "block_duration": b.duration,
            "after_sleep": after_sleep,
            "done": done,
        });
        let task = match oracle.ask::<FillMediumReply>(OracleKind::FillMedium, ctx) {
            Ok(r) => r.task,
            Err(e) => {
                log::warn!("agent {}: fill_medium failed: {e}", persona.agent_id);
                None
            }
        };
        let Some(task) = task else {
            i += 1;
            placed_in_block = 0;
            continue;
        };
        if task.duration > b.duration {
            log::debug!(
                "agent {}: truncating {} to its block",
                persona.agent_id,
                task.activity
            );
        }
        let kind = ActivityKind::parse_lenient(&task.category);
        let location = LocationHint::parse_lenient(&task.location);
        let activity = Activity::new(task.activity, kind, location);
        if schedule
            .place_task(i, activity, task.duration, Tier::Medium)
            .is_err()
        {
            i += 1;
            continue;
        }
        // Continue on the EMPTY remainder, if any.
        i += 1;
        placed_in_block += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityCandidate {
    pub activity: Activity,
    pub duration: u32,
    pub expected_desire: [f64; 4],
    pub serves_goal: bool,
    pub score: f64,
}

pub fn score_candidate(expected_desire: [f64; 4], serves_goal: bool) -> f64 {
    expected_desire.iter().sum::<f64>() / 4.0 + if serves_goal { GOAL_BONUS } else { 0.0 }
}

/// Index of the best-scoring candidate; the first wins ties.
pub fn choose_candidate(candidates: &[ActivityCandidate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        if best.is_none_or(|b| c.score > candidates[b].score) {
            best = Some(i);
        }
    }
    best
}

/// Inputs to a leisure decision.
#[derive(Debug, Clone, PartialEq)]
pub struct LeisureContext<'a> {
    pub persona: &'a Persona,
    pub day: u64,
    pub minute: u32,
    pub block_remaining: u32,
    pub needs: &'a NeedsState,
    pub goals: Vec<String>,
    pub at_home: bool,
}

/// Result of a leisure decision, with the candidates for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct LeisureChoice {
    pub activity: Activity,
    pub duration: u32,
    pub candidates: Vec<ActivityCandidate>,
}

/// One structured call for three candidates, scored by imagined need
/// satisfaction plus a goal bonus. Falls back to resting in place for the
/// rest of the block.
pub fn fill_leisure_block(ctx: &LeisureContext<'_>, oracle: &Oracle) -> LeisureChoice {
    let fallback = || LeisureChoice {
        activity: Activity::rest_here(),
        duration: ctx.block_remaining,
        candidates: Vec::new(),
    };
    let request = json!({
        "agent_id": ctx.persona.agent_id,
        "day": ctx.day,
        "minute": ctx.minute,
        "block_remaining": ctx.block_remaining,
        "needs": NeedScores::from_array(ctx.needs.scores),
        "goals": ctx.goals,
        "at_home": ctx.at_home,
        "age": ctx.persona.age,
        "occupation": ctx.persona.occupation.as_str(),
        "hobbies": ctx.persona.hobbies,
        "habits": ctx.persona.habits,
        "n": LEISURE_CANDIDATES,
    });
    let reply: LeisureReply = match oracle.ask(OracleKind::LeisureCandidates, request) {
        Ok(r) => r,
        Err(e) => {
            log::warn!(
                "agent {}: leisure candidates failed: {e}",
                ctx.persona.agent_id
            );
            return fallback();
        }
    };
    let candidates: Vec<ActivityCandidate> = reply
        .candidates
        .into_iter()
        .take(LEISURE_CANDIDATES)
        .filter(|c| !c.description.trim().is_empty())
        .map(|c| {
            let desire = c.expected_desire.to_array().map(|x| x.clamp(0.0, 1.0));
            ActivityCandidate {
                activity: Activity::new(
                    c.description,
                    ActivityKind::parse_lenient(&c.category),
                    LocationHint::parse_lenient(&c.location),
                ),
                duration: round_up(c.duration.max(GRANULARITY)).min(ctx.block_remaining),
                expected_desire: desire,
                serves_goal: c.serves_goal,
                score: score_candidate(desire, c.serves_goal),
            }
        })
        .collect();
    match choose_candidate(&candidates) {
        Some(i) => LeisureChoice {
            activity: candidates[i].activity.clone(),
            duration: candidates[i]
                .duration
                .max(GRANULARITY.min(ctx.block_remaining)),
            candidates,
        },
        None => fallback(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{OracleBackend, OracleError, OracleRequest, Repair, Reply};
    use crate::persona::Occupation;
    use proptest::prelude::*;

    fn persona(occupation: Occupation) -> Persona {
        let city = crate::world::generate_grid_city(&Default::default());
        let mut p = crate::persona::generate_population(1, &city, 5, &Default::default())
            .unwrap()
            .remove(0);
        p.occupation = occupation;
        p.habits.clear();
        p
    }

    const WEEKDAY: DayInfo = DayInfo {
        day: 0,
        weekday: true,
        prev_weekday: false,
    };

    fn act(desc: &str, kind: ActivityKind) -> Activity {
        Activity::new(desc, kind, LocationHint::Current)
    }

    #[test]
    fn retired_plan_has_only_sleep() {
        let s = plan_mandatory(
            &persona(Occupation::Retired),
            &NeedsState::default(),
            WEEKDAY,
            &Oracle::stub(1),
        );
        s.validate().unwrap();
        for b in s.blocks() {
            match b.tier {
                Tier::Mandatory => {
                    assert_eq!(b.content.as_ref().unwrap().kind, ActivityKind::Sleep)
                }
                _ => assert!(b.is_empty()),
            }
        }
    }

    #[test]
    fn office_worker_works_nine_to_six() {
        let s = plan_mandatory(
            &persona(Occupation::OfficeWorker),
            &NeedsState::default(),
            WEEKDAY,
            &Oracle::stub(1),
        );
        s.validate().unwrap();
        let work = s
            .blocks()
            .iter()
            .find(|b| {
                b.content
                    .as_ref()
                    .is_some_and(|a| a.kind == ActivityKind::Work)
            })
            .unwrap();
        assert_eq!((work.start, work.end()), (540, 1080));
    }

    struct Canned(serde_json::Value);

    impl OracleBackend for Canned {
        fn complete(&self, _: &OracleRequest, _: Option<&Repair>) -> Result<Reply, OracleError> {
            Ok(Reply::Payload(self.0.clone()))
        }
    }

    struct Down;

    impl OracleBackend for Down {
        fn complete(&self, _: &OracleRequest, _: Option<&Repair>) -> Result<Reply, OracleError> {
            Err(OracleError::Unavailable("down".into()))
        }
    }

    #[test]
    fn overlapping_mandatory_blocks_truncate_the_later() {
        let oracle = Oracle::new(Box::new(Canned(serde_json::json!({"blocks": [
            {"start": 480, "duration": 120, "activity": "a", "category": "work"},
            {"start": 540, "duration": 120, "activity": "b", "category": "work"}
        ]}))));
        let s = plan_mandatory(
            &persona(Occupation::Freelance),
            &NeedsState::default(),
            WEEKDAY,
            &oracle,
        );
        s.validate().unwrap();
        let b = s.blocks().iter().find(|b| b.intention == "b").unwrap();
        assert_eq!((b.start, b.end()), (600, 660));
    }

    #[test]
    fn failed_plan_is_a_free_day() {
        let s = plan_mandatory(
            &persona(Occupation::Freelance),
            &NeedsState::default(),
            WEEKDAY,
            &Oracle::new(Box::new(Down)),
        );
        assert_eq!(s, DaySchedule::free_day());
    }

    #[test]
    fn lunch_split_rule() {
        let mut s = DaySchedule::from_blocks(vec![
            TimeBlock::filled(0, 720, act("sleep", ActivityKind::Sleep), Tier::Mandatory),
            TimeBlock::empty(720, 120),
            TimeBlock::filled(840, 600, act("work", ActivityKind::Work), Tier::Mandatory),
        ])
        .unwrap();
        s.place_task(1, act("lunch", ActivityKind::Meal), 45, Tier::Medium)
            .unwrap();
        s.validate().unwrap();
        assert_eq!((s.blocks()[1].start, s.blocks()[1].duration), (720, 45));
        assert!(s.blocks()[2].is_empty());
        assert_eq!((s.blocks()[2].start, s.blocks()[2].duration), (765, 75));
    }

    #[test]
    fn short_remainder_is_absorbed() {
        let mut s = DaySchedule::from_blocks(vec![
            TimeBlock::empty(0, 50),
            TimeBlock::filled(50, 1390, act("x", ActivityKind::Work), Tier::Mandatory),
        ])
        .unwrap();
        s.place_task(0, act("t", ActivityKind::Errand), 46, Tier::Medium)
            .unwrap();
        s.validate().unwrap();
        assert_eq!(s.blocks()[0].duration, 50);
        let mut s = DaySchedule::free_day();
        s.place_task(0, act("t", ActivityKind::Errand), 5000, Tier::Medium)
            .unwrap();
        assert_eq!(s.blocks().len(), 1);
    }

    #[test]
    fn stub_fill_medium_places_meals() {
        let p = persona(Occupation::OfficeWorker);
        let mut s = plan_mandatory(&p, &NeedsState::default(), WEEKDAY, &Oracle::stub(1));
        fill_medium(&mut s, &p, 0, &Oracle::stub(1));
        s.validate().unwrap();
        let names: Vec<&str> = s
            .blocks()
            .iter()
            .filter(|b| b.tier == Tier::Medium)
            .map(|b| b.intention.as_str())
            .collect();
        assert_eq!(names, ["hygiene", "breakfast", "dinner"]);
    }

    #[test]
    fn declining_oracle_leaves_schedule_unchanged() {
        let p = persona(Occupation::Retired);
        let mut s = plan_mandatory(&p, &NeedsState::default(), WEEKDAY, &Oracle::stub(1));
        let before = s.clone();
        fill_medium(
            &mut s,
            &p,
            0,
            &Oracle::new(Box::new(Canned(serde_json::json!({"task": null})))),
        );
        assert_eq!(s, before);
    }

    fn candidate(score: f64) -> ActivityCandidate {
        ActivityCandidate {
            activity: Activity::rest_here(),
            duration: 30,
            expected_desire: [score; 4],
            serves_goal: false,
            score,
        }
    }

    #[test]
    fn argmax_with_first_tie() {
        assert_eq!(
            choose_candidate(&[candidate(0.5), candidate(0.7), candidate(0.6)]),
            Some(1)
        );
        assert_eq!(
            choose_candidate(&[candidate(0.5), candidate(0.5), candidate(0.5)]),
            Some(0)
        );
        assert_eq!(choose_candidate(&[]), None);
    }

    #[test]
    fn leisure_fallback_and_equivalence() {
        let p = persona(Occupation::Retired);
        let needs = NeedsState::default();
        let ctx = LeisureContext {
            persona: &p,
            day: 0,
            minute: 900,
            block_remaining: 120,
            needs: &needs,
            goals: vec![],
            at_home: true,
        };
        let down = fill_leisure_block(&ctx, &Oracle::new(Box::new(Down)));
        assert_eq!(down.activity, Activity::rest_here());
        assert_eq!(down.duration, 120);

        let got = fill_leisure_block(&ctx, &Oracle::stub(3));
        assert_eq!(got.candidates.len(), 3);
        let best = got.candidates.iter().enumerate().fold(0, |b, (i, c)| {
            if c.score > got.candidates[b].score {
                i
            } else {
                b
            }
        });
        assert_eq!(got.activity, got.candidates[best].activity);
        assert!(got.duration <= 120);
    }

    #[test]
    fn interruption_during_leisure() {
        let p = persona(Occupation::Retired);
        let mut s = plan_mandatory(&p, &NeedsState::default(), WEEKDAY, &Oracle::stub(1));
        s.assign_at(840, act("watch a movie", ActivityKind::Leisure), 120)
            .unwrap();
        s.interrupt_and_replan(Need::Hunger, 900).unwrap();
        s.validate().unwrap();
        let movie = s
            .blocks()
            .iter()
            .find(|b| b.intention == "watch a movie")
            .unwrap();
        assert_eq!((movie.start, movie.end()), (840, 900));
        let eat = s.block_at(900).unwrap();
        assert_eq!((eat.start, eat.duration), (900, 45));
        assert_eq!(eat.content.as_ref().unwrap().kind, ActivityKind::Meal);
        // Evening sleep keeps its start.
        assert_eq!(s.blocks().last().unwrap().start, 1320);
    }

    #[test]
    fn interruption_at_boundary_and_mandatory_remainder() {
        let mut s = DaySchedule::from_blocks(vec![
            TimeBlock::empty(0, 540),
            TimeBlock::filled(540, 540, act("work", ActivityKind::Work), Tier::Mandatory),
            TimeBlock::empty(1080, 360),
        ])
        .unwrap();
        let mut boundary = s.clone();
        boundary.interrupt_and_replan(Need::Hunger, 540).unwrap();
        boundary.validate().unwrap();
        assert_eq!(boundary.blocks()[0].end(), 540);
        assert_eq!(boundary.blocks()[1].start, 540);
        // Work keeps its end.
        assert_eq!(boundary.blocks()[2].intention, "work");
        assert_eq!(
            (boundary.blocks()[2].start, boundary.blocks()[2].end()),
            (585, 1080)
        );

        s.interrupt_and_replan(Need::Energy, 1400).unwrap();
        s.validate().unwrap();
        assert_eq!(s.blocks().last().unwrap().end(), 1440);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Interrupt(Need, u32),
        Assign(u32, u32),
        Place(usize, u32, bool),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (prop::sample::select(Need::ALL.to_vec()), 0u32..288)
                .prop_map(|(n, t)| Op::Interrupt(n, t * 5)),
            (0u32..288, 1u32..300).prop_map(|(t, d)| Op::Assign(t * 5, d)),
            (0usize..40, 1u32..300, any::<bool>()).prop_map(|(i, d, m)| Op::Place(i, d, m)),
        ]
    }

    fn apply(s: &mut DaySchedule, op: &Op) {
        match *op {
            Op::Interrupt(n, t) => s.interrupt_and_replan(n, t).unwrap(),
            Op::Assign(t, d) => {
                let _ = s.assign_at(t, act("x", ActivityKind::Leisure), d);
            }
            Op::Place(i, d, m) => {
                let tier = if m { Tier::Mandatory } else { Tier::Medium };
                let i = i % s.blocks().len();
                let _ = s.place_task(i, act("y", ActivityKind::Errand), d, tier);
            }
        }
    }

    proptest! {
        #[test]
        fn every_operation_preserves_the_partition(ops in proptest::collection::vec(op(), 1..50)) {
            let mut s = DaySchedule::free_day();
            for o in &ops {
                apply(&mut s, o);
                prop_assert!(s.validate().is_ok(), "{:?} after {:?}", s.validate(), o);
            }
        }
    }
}
