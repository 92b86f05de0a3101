//! Deterministic rule tables standing in for the language model.
//!
//! Every answer is a pure function of `(kind, context, seed)`. The context
//! keys read here are the ones the call sites in cognition, behavior, social
//! and memory emit; a missing key falls back to a neutral default so that a
//! hand-written context still gets a valid answer.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use super::{canonical_json, OracleBackend, OracleError, OracleKind, OracleRequest, Repair, Reply};
use crate::rng::{hash_str, mix, unit};

pub const DEFAULT_CONVERSE_NOISE: f64 = 0.1;

/// Need decay per hour assumed when imagining post-activity states.
const IMAGINED_DECAY: [f64; 4] = [0.06, 0.04, 0.01, 0.02];

#[derive(Debug, Clone)]
pub struct StubBackend {
    seed: u64,
    converse_noise: f64,
}

impl StubBackend {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            converse_noise: DEFAULT_CONVERSE_NOISE,
        }
    }

    pub fn with_converse_noise(mut self, noise: f64) -> Self {
        self.converse_noise = noise;
        self
    }

    pub fn answer(&self, kind: OracleKind, context: &Value) -> Value {
        answer(kind, context, self.seed, self.converse_noise)
    }
}

impl OracleBackend for StubBackend {
    fn complete(&self, request: &OracleRequest, _: Option<&Repair>) -> Result<Reply, OracleError> {
        Ok(Reply::Payload(self.answer(request.kind, &request.context)))
    }
}

fn get_u64(ctx: &Value, key: &str) -> u64 {
    ctx.get(key).and_then(Value::as_u64).unwrap_or(0)
}

fn get_f64(ctx: &Value, key: &str, default: f64) -> f64 {
    ctx.get(key).and_then(Value::as_f64).unwrap_or(default)
}

fn get_bool(ctx: &Value, key: &str) -> bool {
    ctx.get(key).and_then(Value::as_bool).unwrap_or(false)
}

fn get_str<'a>(ctx: &'a Value, key: &str) -> &'a str {
    ctx.get(key).and_then(Value::as_str).unwrap_or("")
}

fn get_strs(ctx: &Value, key: &str) -> Vec<String> {
    ctx.get(key)
        .and_then(Value::as_array)
        .map(|a| {
            a.iter()
                .filter_map(|v| v.as_str().map(str::to_owned))
                .collect()
        })
        .unwrap_or_default()
}

fn needs_of(ctx: &Value) -> [f64; 4] {
    let n = ctx.get("needs").cloned().unwrap_or(Value::Null);
    [
        get_f64(&n, "hunger", 0.8),
        get_f64(&n, "energy", 0.8),
        get_f64(&n, "safety", 0.8),
        get_f64(&n, "social", 0.8),
    ]
}

/// Answers one request from the rule tables.
pub fn answer(kind: OracleKind, ctx: &Value, seed: u64, converse_noise: f64) -> Value {
    match kind {
        OracleKind::InitNeeds => init_needs(ctx, seed),
        OracleKind::NeedEffects => {
            need_effects(get_str(ctx, "category"), get_bool(ctx, "completed"))
        }
        OracleKind::AppraiseVisit => appraise(ctx, seed),
        OracleKind::PlanMandatory => plan_mandatory(ctx),
        OracleKind::FillMedium => fill_medium(ctx),
        OracleKind::LeisureCandidates => leisure(ctx, seed),
        OracleKind::SelectArea => select_area(ctx),
        OracleKind::ExtractIntention => extract_intention(get_str(ctx, "activity")),
        OracleKind::SelectVehicle => select_vehicle(ctx),
        OracleKind::Dispatch => dispatch(ctx),
        OracleKind::Converse => converse(ctx, seed, converse_noise),
        OracleKind::Reflect => reflect(ctx),
        OracleKind::ReviseGoals => revise_goals(ctx),
    }
}

fn init_needs(ctx: &Value, seed: u64) -> Value {
    let base = mix(&[seed, hash_str(&canonical_json(ctx))]);
    let v: Vec<f64> = (0..4).map(|d| 0.6 + 0.4 * unit(mix(&[base, d]))).collect();
    json!({"hunger": v[0], "energy": v[1], "safety": v[2], "social": v[3]})
}

/// Deltas per activity category. Completed activities also add safety.
pub fn need_effects(category: &str, completed: bool) -> Value {
    let mut d = [0.0; 4];
    match category {
        "meal" => d[0] = 0.6,
        "sleep" => d[1] = 0.9,
        "rest" => d[1] = 0.3,
        "social" => d[3] = 0.5,
        _ => {}
    }
    if completed {
        d[2] += 0.1;
    }
    json!({"hunger": d[0], "energy": d[1], "safety": d[2], "social": d[3]})
}

fn category_offsets(category: &str) -> [f64; 4] {
    // price, atmosphere, satisfaction, convenience
    match category {
        "cafe" => [0.0, 0.1, 0.05, 0.05],
        "restaurant" => [-0.05, 0.05, 0.1, 0.0],
        "park" => [0.1, 0.1, 0.05, -0.05],
        "shop" => [-0.05, 0.0, 0.0, 0.1],
        "entertainment" => [-0.1, 0.1, 0.05, -0.05],
        "hospital" => [-0.1, -0.1, 0.0, 0.0],
        "transit" => [0.0, -0.05, -0.05, 0.1],
        _ => [0.0; 4],
    }
}

fn appraise(ctx: &Value, seed: u64) -> Value {
    let agent = get_u64(ctx, "agent_id");
    let poi = get_u64(ctx, "poi_id");
    let pop = get_f64(ctx, "popularity", 0.5);
    let offsets = category_offsets(get_str(ctx, "category"));
    let dims: Vec<f64> = (0..4u64)
        .map(|d| {
            let jitter = 0.2 * unit(mix(&[seed, 0xA9, agent, poi, d])) - 0.1;
            let base = 0.5 * pop + 0.5 * (pop + jitter);
            (base + offsets[d as usize]).clamp(0.0, 1.0)
        })
        .collect();
    json!({
        "price": dims[0],
        "atmosphere": dims[1],
        "satisfaction": dims[2],
        "convenience": dims[3],
        "reasoning": format!("popularity {pop:.2} sets my expectations for this {}", get_str(ctx, "category")),
    })
}

fn block(start: i64, duration: i64, activity: &str, category: &str, location: &str) -> Value {
    json!({"start": start.rem_euclid(1440), "duration": duration, "activity": activity, "category": category, "location": location})
}

/// Sleep spanning midnight becomes two blocks: the morning tail and the
/// evening head.
fn sleep_blocks(bed: i64, wake: i64, out: &mut Vec<Value>) {
    let bed = bed.rem_euclid(1440);
    let wake = wake.rem_euclid(1440);
    if bed > wake {
        if wake > 0 {
            out.push(block(0, wake, "sleep", "sleep", "home"));
        }
        out.push(block(bed, 1440 - bed, "sleep", "sleep", "home"));
    } else {
        out.push(block(bed, wake - bed, "sleep", "sleep", "home"));
    }
}

fn plan_mandatory(ctx: &Value) -> Value {
    let habits = get_strs(ctx, "habits");
    let shift: i64 = if habits.iter().any(|h| h == "early_riser") {
        -60
    } else if habits.iter().any(|h| h == "night_owl") {
        60
    } else {
        0
    };
    let weekday = get_bool(ctx, "weekday");
    let prev_weekday = get_bool(ctx, "prev_weekday");
    let mut blocks = Vec::new();
    match get_str(ctx, "occupation") {
        "office_worker" => {
            sleep_blocks(1380 + shift, 420 + shift, &mut blocks);
            if weekday {
                blocks.push(block(540, 540, "work at the office", "work", "work"));
            }
        }
        "student" => {
            sleep_blocks(1350 + shift, 390 + shift, &mut blocks);
            if weekday {
                blocks.push(block(510, 420, "attend classes", "study", "work"));
            }
        }
        "freelance" => {
            sleep_blocks(1410 + shift, 450 + shift, &mut blocks);
            if weekday {
                blocks.push(block(600, 360, "freelance work", "work", "work"));
            }
        }
        "nurse_shift" => {
            // Night shifts start on weekday evenings and end the next morning.
            if prev_weekday {
                blocks.push(block(0, 360, "night shift", "work", "work"));
            }
            blocks.push(block(480, 420, "sleep", "sleep", "home"));
            if weekday {
                blocks.push(block(1320, 120, "night shift", "work", "work"));
            }
        }
        "homemaker" => {
            sleep_blocks(1350 + shift, 390 + shift, &mut blocks);
            blocks.push(block(540, 120, "housework", "housework", "home"));
        }
        "unemployed" => sleep_blocks(30 + shift, 510 + shift, &mut blocks),
        _ => sleep_blocks(1320 + shift, 360 + shift, &mut blocks),
    }
    json!({ "blocks": blocks })
}

fn fill_medium(ctx: &Value) -> Value {
    let start = get_u64(ctx, "block_start") as i64;
    let duration = get_u64(ctx, "block_duration") as i64;
    let done = get_strs(ctx, "done");
    let habits = get_strs(ctx, "habits");
    let occupation = get_str(ctx, "occupation");
    let eats_out = habits.iter().any(|h| h == "eats_out");
    let has = |a: &str| done.iter().any(|d| d == a);

    let mut options: Vec<(&str, &str, i64, &str, bool)> = vec![
        (
            "hygiene",
            "hygiene",
            15,
            "home",
            get_bool(ctx, "after_sleep"),
        ),
        ("breakfast", "meal", 20, "home", (300..630).contains(&start)),
        ("lunch", "meal", 45, "out", (660..840).contains(&start)),
        (
            "dinner",
            "meal",
            60,
            if eats_out { "out" } else { "home" },
            (1050..1290).contains(&start),
        ),
    ];
    if matches!(occupation, "homemaker" | "retired" | "unemployed") {
        options.push((
            "run errands",
            "errand",
            30,
            "out",
            (600..1080).contains(&start),
        ));
    }
    let task = options
        .into_iter()
        .find(|&(activity, _, dur, _, ok)| ok && !has(activity) && dur <= duration)
        .map(|(activity, category, dur, location, _)| {
            json!({"activity": activity, "category": category, "duration": dur, "location": location})
        });
    json!({ "task": task })
}

struct LeisureOption {
    description: &'static str,
    category: &'static str,
    duration: u32,
    location: &'static str,
}

const LEISURE_POOL: [LeisureOption; 11] = [
    LeisureOption {
        description: "eat a meal out",
        category: "meal",
        duration: 60,
        location: "out",
    },
    LeisureOption {
        description: "grab coffee at a cafe",
        category: "leisure",
        duration: 30,
        location: "out",
    },
    LeisureOption {
        description: "take a walk in the park",
        category: "exercise",
        duration: 45,
        location: "out",
    },
    LeisureOption {
        description: "go shopping",
        category: "leisure",
        duration: 60,
        location: "out",
    },
    LeisureOption {
        description: "watch a movie",
        category: "leisure",
        duration: 120,
        location: "out",
    },
    LeisureOption {
        description: "meet friends for a chat",
        category: "social",
        duration: 90,
        location: "out",
    },
    LeisureOption {
        description: "rest at home",
        category: "rest",
        duration: 60,
        location: "home",
    },
    LeisureOption {
        description: "read a book at home",
        category: "leisure",
        duration: 60,
        location: "home",
    },
    LeisureOption {
        description: "practice a hobby at home",
        category: "leisure",
        duration: 90,
        location: "home",
    },
    LeisureOption {
        description: "go for a run",
        category: "exercise",
        duration: 45,
        location: "out",
    },
    LeisureOption {
        description: "explore a new neighborhood",
        category: "leisure",
        duration: 120,
        location: "out",
    },
];

fn serves_goal(description: &str, goals: &[String]) -> bool {
    description
        .split_whitespace()
        .filter(|w| w.len() > 3)
        .any(|w| goals.iter().any(|g| g.to_lowercase().contains(w)))
}

fn leisure(ctx: &Value, seed: u64) -> Value {
    let minute = get_u64(ctx, "minute");
    let remaining = get_u64(ctx, "block_remaining").max(5) as u32;
    let needs = needs_of(ctx);
    let goals = get_strs(ctx, "goals");
    let night = !(360..1260).contains(&minute);

    let mut pool: Vec<usize> = (0..LEISURE_POOL.len())
        .filter(|&i| !night || LEISURE_POOL[i].location == "home")
        .collect();
    let mut picked: Vec<usize> = Vec::new();
    if !night && needs[0] < 0.45 {
        picked.push(0);
    }
    if !night && needs[3] < 0.4 {
        picked.push(5);
    }
    pool.retain(|i| !picked.contains(i));
    let h = mix(&[
        seed,
        0x1E15,
        get_u64(ctx, "agent_id"),
        get_u64(ctx, "day"),
        minute,
    ]);
    let mut k = 0u64;
    while picked.len() < 3 && !pool.is_empty() {
        let idx = (mix(&[h, k]) % pool.len() as u64) as usize;
        picked.push(pool.remove(idx));
        k += 1;
    }

    let candidates: Vec<Value> = picked
        .into_iter()
        .map(|i| {
            let opt = &LEISURE_POOL[i];
            let duration = opt.duration.min(remaining / 5 * 5).max(5);
            let effect = need_effects(opt.category, true);
            let keys = ["hunger", "energy", "safety", "social"];
            let mut desire = Map::new();
            for (d, key) in keys.iter().enumerate() {
                let decayed = needs[d] - IMAGINED_DECAY[d] * duration as f64 / 60.0;
                let v = (decayed.max(0.0) + effect[key].as_f64().unwrap_or(0.0)).clamp(0.0, 1.0);
                desire.insert((*key).to_owned(), json!(v));
            }
            json!({
                "description": opt.description,
                "category": opt.category,
                "duration": duration,
                "location": opt.location,
                "expected_desire": desire,
                "serves_goal": serves_goal(opt.description, &goals),
            })
        })
        .collect();
    json!({ "candidates": candidates })
}

fn select_area(ctx: &Value) -> Value {
    let current = get_u64(ctx, "current_area");
    let intention = get_str(ctx, "intention").to_lowercase();
    let options: Vec<u64> = ctx
        .get("options")
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_u64).collect())
        .unwrap_or_default();
    if intention.contains("explore") {
        if let Some(&area) = options.iter().find(|&&a| a != current) {
            return json!({"area_id": area, "reason": "looking for somewhere new"});
        }
    }
    json!({"area_id": current, "reason": "staying nearby"})
}

/// Keyword table; the first matching row wins.
const INTENTIONS: [(&[&str], &[&str], f64); 8] = [
    (&["coffee", "cafe"], &["cafe"], 1500.0),
    (
        &["eat", "meal", "lunch", "dinner", "breakfast", "food"],
        &["restaurant", "cafe"],
        2000.0,
    ),
    (
        &["exercise", "jog", "walk", "run", "park", "hike"],
        &["park"],
        3000.0,
    ),
    (&["shop", "grocer", "errand", "buy"], &["shop"], 2000.0),
    (
        &["movie", "entertain", "karaoke", "game", "concert"],
        &["entertainment"],
        5000.0,
    ),
    (&["friend", "chat", "meet"], &["cafe", "restaurant"], 3000.0),
    (&["doctor", "clinic", "hospital"], &["hospital"], 10000.0),
    (&["explore"], &["park", "entertainment", "shop"], 10000.0),
];

pub fn extract_intention(activity: &str) -> Value {
    let text = activity.to_lowercase();
    let words: Vec<&str> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect();
    for (keys, categories, radius) in INTENTIONS {
        if keys.iter().any(|k| words.iter().any(|w| w.starts_with(k))) {
            return json!({"categories": categories, "max_radius_m": radius});
        }
    }
    json!({"categories": ["entertainment"], "max_radius_m": 2000.0})
}

fn select_vehicle(ctx: &Value) -> Value {
    let d = get_f64(ctx, "distance_m", 0.0);
    let wet = matches!(get_str(ctx, "weather"), "rain" | "snow");
    let available = get_strs(ctx, "available");
    let can = |v: &str| available.iter().any(|a| a == v);
    let (vehicle, why) = if d < 800.0 && can("walk") {
        ("walk", "short enough to walk")
    } else if d < 3000.0 && !wet && can("bicycle") {
        ("bicycle", "a quick ride in dry weather")
    } else if can("train") {
        ("train", "the train is fastest for this distance")
    } else if can("car") {
        ("car", "driving is the practical choice")
    } else if can("bus") {
        ("bus", "the bus covers this trip")
    } else {
        ("walk", "no other option")
    };
    json!({"vehicle": vehicle, "justification": why})
}

fn dispatch(ctx: &Value) -> Value {
    let decision = |module: &str, why: &str, params: BTreeMap<&str, String>| json!({"module": module, "explanation": why, "parameters": params});
    if get_bool(ctx, "asleep") {
        return decision("none", "asleep", BTreeMap::new());
    }
    let serving = get_bool(ctx, "serves_need");
    match get_str(ctx, "dominant_need") {
        "hunger" if !serving => decision(
            "place_selection",
            "hungry, looking for food",
            BTreeMap::from([
                ("category", "restaurant".to_owned()),
                ("need", "hunger".to_owned()),
            ]),
        ),
        "energy" if !serving => decision(
            "place_selection",
            "tired, heading home to rest",
            BTreeMap::from([
                ("category", "home".to_owned()),
                ("need", "energy".to_owned()),
            ]),
        ),
        "social" if !serving => {
            let near = ctx.get("colocated_contact").and_then(Value::as_u64);
            let far = ctx.get("online_contact").and_then(Value::as_u64);
            match (near, far) {
                (Some(t), _) => decision(
                    "social",
                    "lonely, someone I know is here",
                    BTreeMap::from([
                        ("mode", "face_to_face".to_owned()),
                        ("target", t.to_string()),
                    ]),
                ),
                (None, Some(t)) => decision(
                    "social",
                    "lonely, reaching out online",
                    BTreeMap::from([("mode", "online".to_owned()), ("target", t.to_string())]),
                ),
                _ => decision("none", "nobody to talk to", BTreeMap::new()),
            }
        }
        "hunger" | "energy" | "social" => {
            decision("none", "already taking care of it", BTreeMap::new())
        }
        _ if get_bool(ctx, "block_empty") => {
            decision("planning", "free time to plan", BTreeMap::new())
        }
        _ => decision("none", "following the plan", BTreeMap::new()),
    }
}

fn converse(ctx: &Value, seed: u64, noise: f64) -> Value {
    let u = get_u64(ctx, "u");
    let v = get_u64(ctx, "v");
    let mean = 0.5 * (get_f64(ctx, "scalar_uv", 0.05) + get_f64(ctx, "scalar_vu", 0.05));
    let jitter = noise * (2.0 * unit(mix(&[seed, 0xC0, u, v, get_u64(ctx, "tick")])) - 1.0);
    let score = mean + jitter;
    let outcome = if score >= 0.6 {
        "positive"
    } else if score <= 0.2 {
        "negative"
    } else {
        "neutral"
    };
    let mode = get_str(ctx, "mode");
    json!({
        "outcome": outcome,
        "transcript": [
            format!("{u}: hello ({mode})"),
            format!("{v}: the conversation felt {outcome}"),
        ],
    })
}

fn reflect(ctx: &Value) -> Value {
    let nodes = ctx
        .get("nodes")
        .and_then(Value::as_array)
        .cloned()
        .unwrap_or_default();
    let mut by_key: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for n in &nodes {
        if let Some(id) = n.get("id").and_then(Value::as_u64) {
            by_key
                .entry(get_str(n, "key").to_owned())
                .or_default()
                .push(id);
        }
    }
    // BTreeMap order makes the lexicographically smallest key win ties.
    let best = by_key
        .iter()
        .fold(None::<(&String, &Vec<u64>)>, |best, (k, ids)| match best {
            Some((_, b)) if b.len() >= ids.len() => best,
            _ => Some((k, ids)),
        });
    let insights: Vec<Value> = best
        .map(|(key, ids)| json!({"text": format!("much of my day revolved around {key}"), "evidence": ids}))
        .into_iter()
        .collect();
    json!({ "insights": insights })
}

fn revise_goals(ctx: &Value) -> Value {
    let t = ctx.get("triggers").cloned().unwrap_or(Value::Null);
    let mut short = Vec::new();
    let mut long = Vec::new();
    if get_bool(&t, "financial_stress") {
        short.push("save money by cooking at home".to_owned());
        long.push("build an emergency fund".to_owned());
    }
    if get_bool(&t, "social_isolation") {
        short.push("meet friends at least twice a week".to_owned());
        long.push("grow a close circle of friends".to_owned());
    }
    if get_bool(&t, "life_event") {
        let event = get_str(ctx, "life_event");
        short.push(format!("settle into the new routine after {event}"));
    }
    if get_bool(&t, "monthly_due") {
        short.push("explore a new part of the city".to_owned());
        if get_f64(ctx, "interest", 1.0) < 0.5 {
            long.push("find places I truly enjoy".to_owned());
        } else {
            long.push("keep up the routines that make me happy".to_owned());
        }
    }
    json!({"short_goals": short, "long_goals": long})
}
