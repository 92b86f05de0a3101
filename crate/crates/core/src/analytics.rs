//! Aggregates over completed event logs: time use, travel timing, POI
//! popularity agreement and visit density.
//!
//! Time-use categories come from activity kinds:
//!
//! | kind | category |
//! |---|---|
//! | work, study | work |
//! | travel | commute |
//! | housework, errand | housework |
//! | sleep, hygiene | personal_care_sleep |
//! | meal, leisure, exercise, social, rest | leisure |
//! | medical, anything else | other |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{EventKind, EventRecord};
use crate::persona::{AgentId, Persona};
use crate::world::{is_weekday, CityMap, PoiId};

pub const TIMEUSE_CATEGORIES: [&str; 6] = [
    "work",
    "commute",
    "housework",
    "personal_care_sleep",
    "leisure",
    "other",
];
pub const DEFAULT_CELL_M: f64 = 250.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("need at least 3 common POIs, found {0}")]
    TooFewCommon(usize),
    #[error("rank correlation undefined: one side has no variation")]
    NoVariation,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("unknown export format {0:?}; use csv or json")]
    UnknownFormat(String),
    #[error("{0}")]
    Io(String),
    #[error("reference data line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub fn timeuse_category(kind: &str) -> &'static str {
    match kind {
        "work" | "study" => "work",
        "travel" => "commute",
        "housework" | "errand" => "housework",
        "sleep" | "hygiene" => "personal_care_sleep",
        "meal" | "leisure" | "exercise" | "social" | "rest" => "leisure",
        _ => "other",
    }
}

/// Inclusive age bands used for time-use rows.
pub const AGE_BANDS: [(&str, u32, u32); 5] = [
    ("0-17", 0, 17),
    ("18-34", 18, 34),
    ("35-49", 35, 49),
    ("50-64", 50, 64),
    ("65+", 65, u32::MAX),
];

pub fn age_band(age: u32) -> &'static str {
    AGE_BANDS
        .iter()
        .find(|(_, lo, hi)| (*lo..=*hi).contains(&age))
        .map(|b| b.0)
        .unwrap_or("65+")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeUseRow {
    pub band: String,
    pub agents: usize,
    pub minutes: f64,
    /// In [`TIMEUSE_CATEGORIES`] order.
    pub shares: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeUseTable {
    pub categories: Vec<String>,
    pub rows: Vec<TimeUseRow>,
}

impl TimeUseTable {
    pub fn share(&self, band: &str, category: &str) -> Option<f64> {
        let c = self.categories.iter().position(|c| c == category)?;
        self.rows
            .iter()
            .find(|r| r.band == band)
            .map(|r| r.shares[c])
    }
}

/// Per-agent minutes by time-use category, from `activity_end` durations.
pub fn agent_minutes(log: &[EventRecord]) -> BTreeMap<AgentId, [f64; 6]> {
    let mut out: BTreeMap<AgentId, [f64; 6]> = BTreeMap::new();
    for e in log.iter().filter(|e| e.kind == EventKind::ActivityEnd) {
        let Some(d) = e.f64("duration") else { continue };
        let cat = timeuse_category(e.str("kind").unwrap_or(""));
        let i = TIMEUSE_CATEGORIES
            .iter()
            .position(|c| *c == cat)
            .unwrap_or(5);
        out.entry(e.agent_id).or_default()[i] += d;
    }
    out
}

/// Pools minutes per age band and normalizes each band to shares of its
/// total. Agents with no logged time, or missing from `personas`, are left
/// out.
pub fn timeuse_shares(log: &[EventRecord], personas: &[Persona]) -> TimeUseTable {
    let ages: BTreeMap<AgentId, u32> = personas.iter().map(|p| (p.agent_id, p.age)).collect();
    let mut bands: BTreeMap<&str, (usize, [f64; 6])> = BTreeMap::new();
    for (id, mins) in agent_minutes(log) {
        let total: f64 = mins.iter().sum();
        if total <= 0.0 {
            log::warn!("agent {id} has no logged time; excluded");
            continue;
        }
        let Some(&age) = ages.get(&id) else {
            log::warn!("agent {id} not in persona table; excluded");
            continue;
        };
        let entry = bands.entry(age_band(age)).or_default();
        entry.0 += 1;
        for (a, m) in entry.1.iter_mut().zip(mins) {
            *a += m;
        }
    }
    let rows = AGE_BANDS
        .iter()
        .filter_map(|(label, _, _)| {
            let (agents, mins) = bands.get(label)?;
            let total: f64 = mins.iter().sum();
            Some(TimeUseRow {
                band: label.to_string(),
                agents: *agents,
                minutes: total,
                shares: mins.iter().map(|m| m / total).collect(),
            })
        })
        .collect();
    TimeUseTable {
        categories: TIMEUSE_CATEGORIES.iter().map(|s| s.to_string()).collect(),
        rows,
    }
}

/// The simulated days a log covers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Calendar {
    pub days: BTreeSet<u64>,
}

impl Calendar {
    pub fn new(days: impl IntoIterator<Item = u64>) -> Self {
        Self {
            days: days.into_iter().collect(),
        }
    }

    /// Days with at least one tick-stamped event. Day-boundary records
    /// (stamped at the following midnight) do not open a new day.
    pub fn from_log(log: &[EventRecord]) -> Self {
        Self::new(
            log.iter()
                .filter(|e| {
                    !matches!(e.kind, EventKind::Reflection | EventKind::GoalRevision)
                        && !is_midnight_close(e)
                })
                .map(|e| e.day()),
        )
    }

    pub fn weekdays(&self) -> usize {
        self.days.iter().filter(|&&d| is_weekday(d)).count()
    }

    pub fn weekend_days(&self) -> usize {
        self.days.len() - self.weekdays()
    }
}

fn is_midnight_close(e: &EventRecord) -> bool {
    e.kind == EventKind::ActivityEnd && e.bool("partial") == Some(true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelHistogram {
    /// Mean departures per agent per hour of a weekday.
    pub weekday: [f64; 24],
    pub weekend: [f64; 24],
    pub agents: usize,
    pub weekdays: usize,
    pub weekend_days: usize,
    pub trips_weekday: u64,
    pub trips_weekend: u64,
}

impl TravelHistogram {
    /// True when the weekend series carries no data at all.
    pub fn weekend_empty(&self) -> bool {
        self.weekend_days == 0
    }

    pub fn weekday_empty(&self) -> bool {
        self.weekdays == 0
    }
}

/// Trips are counted in the hour they depart, then divided by agent-days of
/// that day type.
pub fn travel_histogram(
    log: &[EventRecord],
    agents: usize,
    calendar: &Calendar,
) -> TravelHistogram {
    let mut wd = [0u64; 24];
    let mut we = [0u64; 24];
    for e in log.iter().filter(|e| e.kind == EventKind::Move) {
        let t = e.u64("depart").unwrap_or(e.time);
        let day = t / 1440;
        if !calendar.days.contains(&day) {
            continue;
        }
        let hour = ((t % 1440) / 60) as usize;
        if is_weekday(day) {
            wd[hour] += 1;
        } else {
            we[hour] += 1;
        }
    }
    let norm = |counts: &[u64; 24], days: usize| {
        let denom = (agents * days) as f64;
        counts.map(|c| if denom > 0.0 { c as f64 / denom } else { 0.0 })
    };
    TravelHistogram {
        weekday: norm(&wd, calendar.weekdays()),
        weekend: norm(&we, calendar.weekend_days()),
        agents,
        weekdays: calendar.weekdays(),
        weekend_days: calendar.weekend_days(),
        trips_weekday: wd.iter().sum(),
        trips_weekend: we.iter().sum(),
    }
}

/// Average ranks, 1-based; tied values share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64, AnalyticsError> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(AnalyticsError::NoVariation);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman's rho over paired samples, ties averaged.
pub fn spearman_vec(a: &[f64], b: &[f64]) -> Result<f64, AnalyticsError> {
    if a.len() != b.len() {
        return Err(AnalyticsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 3 {
        return Err(AnalyticsError::TooFewCommon(a.len()));
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Spearman's rho over the POIs present in both maps.
pub fn spearman(
    sim: &BTreeMap<PoiId, f64>,
    reference: &BTreeMap<PoiId, f64>,
) -> Result<f64, AnalyticsError> {
    let (a, b): (Vec<f64>, Vec<f64>) = sim
        .iter()
        .filter_map(|(k, v)| reference.get(k).map(|r| (*v, *r)))
        .unzip();
    if a.len() < 3 {
        return Err(AnalyticsError::TooFewCommon(a.len()));
    }
    spearman_vec(&a, &b)
}

pub fn visit_counts(log: &[EventRecord]) -> BTreeMap<PoiId, f64> {
    let mut out = BTreeMap::new();
    for e in log.iter().filter(|e| e.kind == EventKind::Visit) {
        if let Some(p) = e.u64("poi") {
            *out.entry(p).or_insert(0.0) += 1.0;
        }
    }
    out
}

/// Reads `poi_id,count` rows (header optional).
pub fn parse_reference_counts(text: &str) -> Result<BTreeMap<PoiId, f64>, AnalyticsError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("poi_id")) {
            continue;
        }
        let err = |reason: &str| AnalyticsError::Parse {
            line: i + 1,
            reason: reason.into(),
        };
        let (id, count) = line
            .split_once(',')
            .ok_or_else(|| err("expected poi_id,count"))?;
        let id: PoiId = id.trim().parse().map_err(|_| err("bad poi_id"))?;
        let count: f64 = count.trim().parse().map_err(|_| err("bad count"))?;
        if !count.is_finite() || count < 0.0 {
            return Err(err("count must be a non-negative number"));
        }
        out.insert(id, count);
    }
    Ok(out)
}

pub fn read_reference_counts(
    path: impl AsRef<Path>,
) -> Result<BTreeMap<PoiId, f64>, AnalyticsError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| AnalyticsError::Io(format!("{}: {e}", path.display())))?;
    parse_reference_counts(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityReport {
    pub rho: f64,
    pub common_pois: usize,
}

pub fn popularity(
    log: &[EventRecord],
    reference: &BTreeMap<PoiId, f64>,
) -> Result<PopularityReport, AnalyticsError> {
    let sim = visit_counts(log);
    let common_pois = sim.keys().filter(|k| reference.contains_key(k)).count();
    Ok(PopularityReport {
        rho: spearman(&sim, reference)?,
        common_pois,
    })
}

/// Visit counts over square cells. Cell `(col, row)` covers
/// `[(x0 + col) * cell_m, (x0 + col + 1) * cell_m)` and likewise in y, so a
/// point on a boundary falls in the higher cell, i.e. `floor(pos / cell_m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub cell_m: f64,
    pub x0: i64,
    pub y0: i64,
    /// `counts[row][col]`.
    pub counts: Vec<Vec<u64>>,
}

impl DensityGrid {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn at(&self, x: f64, y: f64) -> Option<u64> {
        let c = usize::try_from(cell_of(x, self.cell_m) - self.x0).ok()?;
        let r = usize::try_from(cell_of(y, self.cell_m) - self.y0).ok()?;
        self.counts.get(r)?.get(c).copied()
    }
}

pub fn cell_of(v: f64, cell_m: f64) -> i64 {
    (v / cell_m).floor() as i64
}

/// Bins visit events with `from <= time < to` (when a window is given).
/// With a city the grid spans every POI; otherwise just the visits.
pub fn density_grid(
    log: &[EventRecord],
    city: Option<&CityMap>,
    cell_m: f64,
    window: Option<(u64, u64)>,
) -> DensityGrid {
    let cell_m = if cell_m > 0.0 { cell_m } else { DEFAULT_CELL_M };
    let points: Vec<(i64, i64)> = log
        .iter()
        .filter(|e| e.kind == EventKind::Visit)
        .filter(|e| window.is_none_or(|(a, b)| e.time >= a && e.time < b))
        .filter_map(|e| {
            let pos = match (e.f64("x"), e.f64("y")) {
                (Some(x), Some(y)) => Some((x, y)),
                _ => city
                    .and_then(|c| c.poi(e.u64("poi")?))
                    .map(|p| (p.position.x, p.position.y)),
            };
            if pos.is_none() {
                log::warn!(
                    "visit at {} by agent {} has no position",
                    e.time,
                    e.agent_id
                );
            }
            pos
        })
        .map(|(x, y)| (cell_of(x, cell_m), cell_of(y, cell_m)))
        .collect();
    let extent = city
        .into_iter()
        .flat_map(|c| c.pois())
        .map(|p| (cell_of(p.position.x, cell_m), cell_of(p.position.y, cell_m)))
        .chain(points.iter().copied());
    let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
    for (x, y) in extent {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        return DensityGrid {
            cell_m,
            x0: 0,
            y0: 0,
            counts: Vec::new(),
        };
    }
    let mut counts = vec![vec![0u64; (x1 - x0 + 1) as usize]; (y1 - y0 + 1) as usize];
    for (x, y) in points {
        counts[(y - y0) as usize][(x - x0) as usize] += 1;
    }
    DensityGrid {
        cell_m,
        x0,
        y0,
        counts,
    }
}

/// Something that can be written as CSV or JSON.
pub trait Artifact: Serialize {
    fn to_csv(&self) -> String;
}

impl Artifact for TimeUseTable {
    /// Header `age_band,agents,<categories...>`, one row per band.
    fn to_csv(&self) -> String {
        let mut out = format!("age_band,agents,{}\n", self.categories.join(","));
        for r in &self.rows {
            let shares: Vec<String> = r.shares.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "{},{},{}", r.band, r.agents, shares.join(","));
        }
        out
    }
}

impl Artifact for TravelHistogram {
    /// Header `hour,weekday,weekend`, 24 rows.
    fn to_csv(&self) -> String {
        let mut out = String::from("hour,weekday,weekend\n");
        for h in 0..24 {
            let _ = writeln!(out, "{h},{},{}", self.weekday[h], self.weekend[h]);
        }
        out
    }
}

impl Artifact for PopularityReport {
    fn to_csv(&self) -> String {
        format!("rho,common_pois\n{},{}\n", self.rho, self.common_pois)
    }
}

impl Artifact for DensityGrid {
    /// Plain count matrix, first row is the lowest y cell. Cell origin and
    /// size are in the JSON form.
    fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.counts {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Result<Self, AnalyticsError> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(AnalyticsError::UnknownFormat(s.to_owned())),
        }
    }
}

pub fn render(artifact: &impl Artifact, format: &str) -> Result<String, AnalyticsError> {
    Ok(match Format::parse(format)? {
        Format::Csv => artifact.to_csv(),
        Format::Json => {
            serde_json::to_string_pretty(artifact).map_err(|e| AnalyticsError::Io(e.to_string()))?
        }
    })
}

pub fn export(
    artifact: &impl Artifact,
    path: impl AsRef<Path>,
    format: &str,
) -> Result<(), AnalyticsError> {
    let text = render(artifact, format)?;
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| AnalyticsError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn end(agent: AgentId, start: u64, dur: u64, kind: &str) -> EventRecord {
        EventRecord::new(
            (start + dur) / 5,
            start + dur,
            agent,
            EventKind::ActivityEnd,
            json!({"kind": kind, "start": start, "end": start + dur, "duration": dur}),
        )
    }

    fn persona(id: AgentId, age: u32) -> Persona {
        let city = crate::world::generate_grid_city(&Default::default());
        let mut p = crate::persona::generate_population(1, &city, 1, &Default::default())
            .unwrap()
            .remove(0);
        p.agent_id = id;
        p.age = age;
        p
    }

    #[test]
    fn sleep_work_leisure_day() {
        let log = vec![
            end(0, 0, 480, "sleep"),
            end(0, 480, 540, "work"),
            end(0, 1020, 420, "leisure"),
        ];
        let t = timeuse_shares(&log, &[persona(0, 30)]);
        assert_eq!(t.rows.len(), 1);
        assert!((t.share("18-34", "work").unwrap() - 9.0 / 24.0).abs() < 1e-12);
        assert!((t.share("18-34", "personal_care_sleep").unwrap() - 8.0 / 24.0).abs() < 1e-12);
        assert!((t.share("18-34", "leisure").unwrap() - 7.0 / 24.0).abs() < 1e-12);
        assert!((t.rows[0].shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(timeuse_shares(&[], &[]).rows.len(), 0);
    }

    #[test]
    fn agents_without_time_are_excluded() {
        let log = vec![
            end(0, 0, 0, "sleep"),
            end(1, 0, 60, "travel"),
            end(9, 0, 60, "work"),
        ];
        let t = timeuse_shares(&log, &[persona(0, 70), persona(1, 70)]);
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].agents, 1);
        assert_eq!(t.share("65+", "commute"), Some(1.0));
    }

    #[test]
    fn category_table() {
        for (k, c) in [
            ("work", "work"),
            ("study", "work"),
            ("travel", "commute"),
            ("errand", "housework"),
            ("hygiene", "personal_care_sleep"),
            ("meal", "leisure"),
            ("medical", "other"),
            ("???", "other"),
        ] {
            assert_eq!(timeuse_category(k), c);
        }
        assert_eq!(age_band(17), "0-17");
        assert_eq!(age_band(18), "18-34");
        assert_eq!(age_band(90), "65+");
    }

    fn mv(agent: AgentId, t: u64) -> EventRecord {
        EventRecord::new(t / 5, t, agent, EventKind::Move, json!({"depart": t}))
    }

    #[test]
    fn hundred_agents_leaving_at_ten_past_eight() {
        let log: Vec<_> = (0..100).map(|a| mv(a, 8 * 60 + 10)).collect();
        let h = travel_histogram(&log, 100, &Calendar::new([0]));
        assert_eq!(h.weekday[8], 1.0);
        assert_eq!(h.weekday.iter().sum::<f64>(), 1.0);
        assert!(h.weekend_empty());
        assert!(h.weekend.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weekend_days_are_split_out() {
        // Day 5 is a Saturday.
        let log = vec![mv(0, 5 * 1440 + 600), mv(0, 600), mv(1, 600)];
        let h = travel_histogram(&log, 2, &Calendar::new(0..7));
        assert_eq!((h.weekdays, h.weekend_days), (5, 2));
        assert_eq!(h.trips_weekend, 1);
        assert!((h.weekend[10] - 0.25).abs() < 1e-12);
        assert!((h.weekday[10] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn spearman_examples() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman_vec(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let rev: Vec<f64> = a.iter().rev().copied().collect();
        assert!((spearman_vec(&a, &rev).unwrap() + 1.0).abs() < 1e-12);
        assert!((spearman_vec(&a, &[2.0, 1.0, 3.0, 4.0, 5.0]).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(
            spearman_vec(&a[..2], &a[..2]),
            Err(AnalyticsError::TooFewCommon(2))
        );
        assert_eq!(
            average_ranks(&[10.0, 20.0, 10.0, 5.0]),
            vec![2.5, 4.0, 2.5, 1.0]
        );
    }

    #[test]
    fn spearman_needs_three_common_pois() {
        let sim: BTreeMap<PoiId, f64> = [(1, 3.0), (2, 2.0), (3, 1.0)].into();
        let reference: BTreeMap<PoiId, f64> = [(1, 30.0), (2, 20.0), (9, 1.0)].into();
        assert_eq!(
            spearman(&sim, &reference),
            Err(AnalyticsError::TooFewCommon(2))
        );
        let reference: BTreeMap<PoiId, f64> = [(1, 30.0), (2, 20.0), (3, 10.0), (9, 1.0)].into();
        assert!((spearman(&sim, &reference).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reference_csv() {
        let r = parse_reference_counts("poi_id,count\n1,10\n\n2, 3.5\n").unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[&2], 3.5);
        assert!(matches!(
            parse_reference_counts("1;2"),
            Err(AnalyticsError::Parse { line: 1, .. })
        ));
        assert!(parse_reference_counts("1,-2").is_err());
    }

    fn visit(x: f64, y: f64, t: u64) -> EventRecord {
        EventRecord::new(
            t / 5,
            t,
            0,
            EventKind::Visit,
            json!({"poi": 1, "x": x, "y": y}),
        )
    }

    #[test]
    fn density_counts_and_boundaries() {
        let mut log: Vec<_> = (0..10).map(|i| visit(100.0, 100.0, i)).collect();
        log.push(visit(250.0, 0.0, 20));
        let g = density_grid(&log, None, 250.0, None);
        assert_eq!(g.at(100.0, 100.0), Some(10));
        assert_eq!(g.at(250.0, 0.0), Some(1));
        assert_eq!(g.counts, vec![vec![10, 1]]);
        assert_eq!(g.total(), 11);
        let g = density_grid(&log, None, 250.0, Some((0, 5)));
        assert_eq!(g.total(), 5);
        assert_eq!(density_grid(&[], None, 250.0, None).total(), 0);
    }

    #[test]
    fn export_formats() {
        let g = density_grid(
            &[visit(0.0, 0.0, 0), visit(300.0, 300.0, 0)],
            None,
            250.0,
            None,
        );
        assert_eq!(render(&g, "csv").unwrap(), "1,0\n0,1\n");
        let back: DensityGrid = serde_json::from_str(&render(&g, "json").unwrap()).unwrap();
        assert_eq!(back, g);
        assert_eq!(
            render(&g, "xml"),
            Err(AnalyticsError::UnknownFormat("xml".into()))
        );
        let t = timeuse_shares(&[end(0, 0, 1440, "sleep")], &[persona(0, 40)]);
        let csv = render(&t, "csv").unwrap();
        assert_eq!(
            csv.lines().next().unwrap(),
            "age_band,agents,work,commute,housework,personal_care_sleep,leisure,other"
        );
        assert_eq!(csv.lines().nth(1).unwrap(), "35-49,1,0,0,0,1,0,0");
        let back: TimeUseTable = serde_json::from_str(&render(&t, "json").unwrap()).unwrap();
        assert_eq!(back, t);
        let dir = tempfile::tempdir().unwrap();
        assert!(export(&t, dir.path().join("missing/dir/t.csv"), "csv").is_err());
        export(&t, dir.path().join("t.csv"), "csv").unwrap();
    }

    /// Rank by counting, then the textbook Pearson formula.
    fn brute_spearman(a: &[f64], b: &[f64]) -> f64 {
        let rank = |xs: &[f64]| -> Vec<f64> {
            xs.iter()
                .map(|&x| {
                    let less = xs.iter().filter(|&&y| y < x).count() as f64;
                    let equal = xs.iter().filter(|&&y| y == x).count() as f64;
                    less + (equal + 1.0) / 2.0
                })
                .collect()
        };
        let (ra, rb) = (rank(a), rank(b));
        let n = a.len() as f64;
        let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
        let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    proptest! {
        #[test]
        fn spearman_matches_brute_force(pairs in prop::collection::vec((0u8..8, 0u8..8), 3..=20)) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            match spearman_vec(&a, &b) {
                Ok(rho) => prop_assert!((rho - brute_spearman(&a, &b)).abs() < 1e-12),
                Err(e) => prop_assert_eq!(e, AnalyticsError::NoVariation),
            }
        }

        #[test]
        fn density_conserves_visits(pts in prop::collection::vec((0.0f64..5000.0, 0.0f64..5000.0), 0..200), cell in 50.0f64..1000.0) {
            let log: Vec<_> = pts.iter().map(|&(x, y)| visit(x, y, 0)).collect();
            let g = density_grid(&log, None, cell, None);
            prop_assert_eq!(g.total(), pts.len() as u64);
            for &(x, y) in &pts {
                prop_assert!(g.at(x, y).unwrap() >= 1);
            }
        }
    }
}
