//! Static city model (areas, POIs, distances), the simulation clock and
//! ambient weather.
//!
//! A [`CityMap`] is immutable once loaded and is shared by reference across
//! every agent step. Distances are planar Euclidean in meters.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng;

/// Default number of areas considered when choosing where to go.
pub const NEARBY_AREAS: usize = 10;
/// Default cap on candidate POIs per place-selection query.
pub const CANDIDATE_CAP: usize = 200;
/// Length of every POI feature vector produced by the generator.
pub const FEATURE_LEN: usize = Category::ALL.len() + 2;

pub type PoiId = u64;
pub type AreaId = u64;

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("invalid city record {record}: {reason}")]
    Invalid { record: String, reason: String },
    #[error("invalid intention: empty category set")]
    EmptyCategorySet,
    #[error("city file: {0}")]
    Io(#[from] std::io::Error),
    #[error("city file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

fn invalid(record: impl Into<String>, reason: impl Into<String>) -> WorldError {
    WorldError::Invalid {
        record: record.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Euclidean distance in meters.
pub fn distance(a: Position, b: Position) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Cafe,
    Park,
    Office,
    School,
    Restaurant,
    Shop,
    Transit,
    Entertainment,
    Home,
    Hospital,
}

impl Category {
    pub const ALL: [Category; 10] = [
        Category::Cafe,
        Category::Park,
        Category::Office,
        Category::School,
        Category::Restaurant,
        Category::Shop,
        Category::Transit,
        Category::Entertainment,
        Category::Home,
        Category::Hospital,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Cafe => "cafe",
            Category::Park => "park",
            Category::Office => "office",
            Category::School => "school",
            Category::Restaurant => "restaurant",
            Category::Shop => "shop",
            Category::Transit => "transit",
            Category::Entertainment => "entertainment",
            Category::Home => "home",
            Category::Hospital => "hospital",
        }
    }

    pub fn parse(s: &str) -> Option<Category> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub id: PoiId,
    pub name: String,
    pub category: Category,
    pub area_id: AreaId,
    pub position: Position,
    pub popularity: f64,
    pub feature_vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub id: AreaId,
    pub name: String,
    pub centroid: Position,
    pub poi_ids: Vec<PoiId>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct CityFile {
    areas: Vec<Area>,
    pois: Vec<Poi>,
}

/// Cross-referenced, validated city.
#[derive(Debug, Clone, Default)]
pub struct CityMap {
    areas: Vec<Area>,
    pois: Vec<Poi>,
    poi_index: HashMap<PoiId, usize>,
    area_index: HashMap<AreaId, usize>,
    area_popularity: Vec<f64>,
}

impl CityMap {
    /// Builds a map from raw records, checking every invariant.
    pub fn from_parts(areas: Vec<Area>, pois: Vec<Poi>) -> Result<Self, WorldError> {
        let mut area_index = HashMap::with_capacity(areas.len());
        for (i, area) in areas.iter().enumerate() {
            if area_index.insert(area.id, i).is_some() {
                return Err(invalid(format!("area {}", area.id), "duplicate area id"));
            }
        }
        let mut poi_index = HashMap::with_capacity(pois.len());
        let feature_len = pois.first().map(|p| p.feature_vector.len());
        for (i, poi) in pois.iter().enumerate() {
            let rec = format!("poi {}", poi.id);
            if poi_index.insert(poi.id, i).is_some() {
                return Err(invalid(rec, "duplicate poi id"));
            }
            if !(0.0..=1.0).contains(&poi.popularity) {
                return Err(invalid(
                    rec,
                    format!("popularity {} outside [0,1]", poi.popularity),
                ));
            }
            if !poi.position.x.is_finite() || !poi.position.y.is_finite() {
                return Err(invalid(rec, "non-finite position"));
            }
            if Some(poi.feature_vector.len()) != feature_len || poi.feature_vector.is_empty() {
                return Err(invalid(rec, "feature vector length mismatch"));
            }
            let norm = poi.feature_vector.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(invalid(rec, format!("feature vector norm {norm} is not 1")));
            }
            let Some(&ai) = area_index.get(&poi.area_id) else {
                return Err(invalid(rec, format!("dangling area_id {}", poi.area_id)));
            };
            if !areas[ai].poi_ids.contains(&poi.id) {
                return Err(invalid(rec, format!("not listed by area {}", poi.area_id)));
            }
        }
        let mut area_popularity = Vec::with_capacity(areas.len());
        for area in &areas {
            let rec = format!("area {}", area.id);
            let mut sum = Position::default();
            let mut pop = 0.0;
            for pid in &area.poi_ids {
                let Some(&pi) = poi_index.get(pid) else {
                    return Err(invalid(rec, format!("lists unknown poi {pid}")));
                };
                let poi = &pois[pi];
                if poi.area_id != area.id {
                    return Err(invalid(
                        rec,
                        format!("lists poi {pid} of area {}", poi.area_id),
                    ));
                }
                sum.x += poi.position.x;
                sum.y += poi.position.y;
                pop += poi.popularity;
            }
            let n = area.poi_ids.len();
            if n > 0 {
                let mean = Position::new(sum.x / n as f64, sum.y / n as f64);
                if distance(mean, area.centroid) > 1.0 {
                    return Err(invalid(
                        rec,
                        "centroid differs from member mean by more than 1 m",
                    ));
                }
                area_popularity.push(pop / n as f64);
            } else {
                area_popularity.push(0.0);
            }
        }
        Ok(Self {
            areas,
            pois,
            poi_index,
            area_index,
            area_popularity,
        })
    }

    pub fn areas(&self) -> &[Area] {
        &self.areas
    }

    pub fn pois(&self) -> &[Poi] {
        &self.pois
    }

    pub fn poi(&self, id: PoiId) -> Option<&Poi> {
        self.poi_index.get(&id).map(|&i| &self.pois[i])
    }

    pub fn area(&self, id: AreaId) -> Option<&Area> {
        self.area_index.get(&id).map(|&i| &self.areas[i])
    }

    /// Mean popularity of the area's POIs (0 for an empty area).
    pub fn area_popularity(&self, id: AreaId) -> f64 {
        self.area_index
            .get(&id)
            .map(|&i| self.area_popularity[i])
            .unwrap_or(0.0)
    }

    pub fn pois_in_category(&self, category: Category) -> impl Iterator<Item = &Poi> {
        self.pois.iter().filter(move |p| p.category == category)
    }

    pub fn has_category(&self, category: Category) -> bool {
        self.pois.iter().any(|p| p.category == category)
    }

    pub fn to_json(&self) -> Result<String, WorldError> {
        let file = CityFile {
            areas: self.areas.clone(),
            pois: self.pois.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let file: CityFile = serde_json::from_str(text)?;
        Self::from_parts(file.areas, file.pois)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WorldError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

pub fn load_city(path: impl AsRef<Path>) -> Result<CityMap, WorldError> {
    let text = std::fs::read_to_string(path)?;
    CityMap::from_json(&text)
}

/// Ranks areas by `popularity_mean / (1 + km to centroid)`, best first, ties
/// by ascending id. Returns at most `k` areas.
pub fn nearby_areas(origin: Position, city: &CityMap, k: usize) -> Vec<&Area> {
    let mut scored: Vec<(f64, &Area)> = city
        .areas
        .iter()
        .zip(&city.area_popularity)
        .map(|(area, &pop)| {
            let km = distance(origin, area.centroid) / 1000.0;
            (pop / (1.0 + km), area)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.id.cmp(&b.1.id)));
    scored.into_iter().take(k).map(|(_, a)| a).collect()
}

/// POIs of `area` in any of `categories`, most popular first, then nearest to
/// `origin`, then by id; truncated to `cap`.
pub fn candidate_pois<'a>(
    city: &'a CityMap,
    area: &Area,
    categories: &BTreeSet<Category>,
    origin: Position,
    cap: usize,
) -> Result<Vec<&'a Poi>, WorldError> {
    if categories.is_empty() {
        return Err(WorldError::EmptyCategorySet);
    }
    let mut out: Vec<&Poi> = area
        .poi_ids
        .iter()
        .filter_map(|id| city.poi(*id))
        .filter(|p| categories.contains(&p.category))
        .collect();
    out.sort_by(|a, b| {
        b.popularity
            .total_cmp(&a.popularity)
            .then(distance(origin, a.position).total_cmp(&distance(origin, b.position)))
            .then(a.id.cmp(&b.id))
    });
    out.truncate(cap);
    Ok(out)
}

/// Simulation clock. Day 0 is a Monday.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimClock {
    sim_time: u64,
    tick_minutes: u32,
}

impl SimClock {
    pub const MINUTES_PER_DAY: u64 = 1440;

    pub fn new(tick_minutes: u32) -> Self {
        assert!(
            tick_minutes > 0 && 1440 % tick_minutes == 0,
            "tick must divide a day"
        );
        Self {
            sim_time: 0,
            tick_minutes,
        }
    }

    pub fn at(tick_minutes: u32, sim_time: u64) -> Self {
        let mut clock = Self::new(tick_minutes);
        assert!(
            sim_time.is_multiple_of(tick_minutes as u64),
            "sim_time must be tick aligned"
        );
        clock.sim_time = sim_time;
        clock
    }

    pub fn sim_time(&self) -> u64 {
        self.sim_time
    }

    pub fn tick_minutes(&self) -> u32 {
        self.tick_minutes
    }

    pub fn tick(&self) -> u64 {
        self.sim_time / self.tick_minutes as u64
    }

    pub fn ticks_per_day(&self) -> u64 {
        Self::MINUTES_PER_DAY / self.tick_minutes as u64
    }

    pub fn day_index(&self) -> u64 {
        self.sim_time / Self::MINUTES_PER_DAY
    }

    pub fn minute_of_day(&self) -> u32 {
        (self.sim_time % Self::MINUTES_PER_DAY) as u32
    }

    pub fn is_weekday(&self) -> bool {
        is_weekday(self.day_index())
    }

    pub fn advance(&mut self) {
        self.sim_time += self.tick_minutes as u64;
    }
}

pub fn is_weekday(day_index: u64) -> bool {
    day_index % 7 < 5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeatherCondition {
    Clear,
    Rain,
    Snow,
    Cloudy,
}

impl WeatherCondition {
    pub const ALL: [WeatherCondition; 4] = [
        WeatherCondition::Clear,
        WeatherCondition::Rain,
        WeatherCondition::Snow,
        WeatherCondition::Cloudy,
    ];

    pub fn is_wet(self) -> bool {
        matches!(self, WeatherCondition::Rain | WeatherCondition::Snow)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WeatherCondition::Clear => "clear",
            WeatherCondition::Rain => "rain",
            WeatherCondition::Snow => "snow",
            WeatherCondition::Cloudy => "cloudy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherState {
    pub condition: WeatherCondition,
    /// Degrees Celsius, within [-30, 50].
    pub temperature: f64,
    pub month: u8,
}

// Monthly mean temperature of a temperate coastal city.
const MONTHLY_MEAN_C: [f64; 12] = [
    5.0, 6.0, 9.5, 14.5, 19.0, 22.5, 26.0, 27.5, 24.0, 18.5, 13.0, 8.0,
];
const WEATHER_PERSIST: f64 = 0.7;

impl WeatherState {
    pub fn initial(month: u8, seed: u64) -> Self {
        let month = month.clamp(1, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(rng::mix(&[seed, 0x5745_4154, u64::MAX]));
        let condition = WeatherCondition::Clear;
        Self {
            condition,
            temperature: Self::temperature_for(month, condition, &mut rng),
            month,
        }
    }

    /// Advances the daily Markov chain: the condition persists with
    /// probability 0.7, otherwise moves uniformly to one of the other three.
    /// `day` is the index of the day being entered; the draw depends only on
    /// `(seed, day)` so restored runs reproduce it.
    pub fn next_day(&self, day: u64, start_month: u8, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(rng::mix(&[seed, 0x5745_4154, day]));
        let month = (((start_month.clamp(1, 12) as u64 - 1) + day / 30) % 12 + 1) as u8;
        let condition = if rng.random::<f64>() < WEATHER_PERSIST {
            self.condition
        } else {
            let others: Vec<_> = WeatherCondition::ALL
                .into_iter()
                .filter(|c| *c != self.condition)
                .collect();
            others[rng.random_range(0..others.len())]
        };
        let condition =
            if condition == WeatherCondition::Snow && MONTHLY_MEAN_C[month as usize - 1] > 10.0 {
                WeatherCondition::Rain
            } else {
                condition
            };
        Self {
            condition,
            temperature: Self::temperature_for(month, condition, &mut rng),
            month,
        }
    }

    fn temperature_for(month: u8, condition: WeatherCondition, rng: &mut impl Rng) -> f64 {
        let base = MONTHLY_MEAN_C[month as usize - 1];
        let shift = match condition {
            WeatherCondition::Clear => 1.5,
            WeatherCondition::Cloudy => 0.0,
            WeatherCondition::Rain => -1.5,
            WeatherCondition::Snow => -6.0,
        };
        (base + shift + rng.random_range(-3.0..=3.0)).clamp(-30.0, 50.0)
    }
}

/// Parameters for the synthetic grid-city generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridCitySpec {
    pub rows: u32,
    pub cols: u32,
    /// Side length of one square area, meters.
    pub area_size_m: f64,
    pub pois_per_area: u32,
    pub seed: u64,
}

impl Default for GridCitySpec {
    fn default() -> Self {
        Self {
            rows: 6,
            cols: 6,
            area_size_m: 1000.0,
            pois_per_area: 30,
            seed: 1,
        }
    }
}

// Every area starts with these, then draws from the weighted mix below.
const ANCHOR_CATEGORIES: [Category; 4] = [
    Category::Home,
    Category::Office,
    Category::Restaurant,
    Category::Cafe,
];
const CATEGORY_MIX: [(Category, f64); 10] = [
    (Category::Home, 0.30),
    (Category::Office, 0.10),
    (Category::School, 0.05),
    (Category::Cafe, 0.10),
    (Category::Restaurant, 0.13),
    (Category::Shop, 0.11),
    (Category::Park, 0.07),
    (Category::Entertainment, 0.06),
    (Category::Transit, 0.05),
    (Category::Hospital, 0.03),
];

/// Feature vector: one-hot category followed by price level and quietness,
/// normalized to unit length.
pub fn feature_vector(category: Category, price_level: f64, quietness: f64) -> Vec<f64> {
    let mut v = vec![0.0; FEATURE_LEN];
    v[category.index()] = 1.0;
    v[Category::ALL.len()] = 0.5 * price_level;
    v[Category::ALL.len() + 1] = 0.5 * quietness;
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Generates a rows x cols grid of square areas with seeded POIs.
pub fn generate_grid_city(spec: &GridCitySpec) -> CityMap {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total_weight: f64 = CATEGORY_MIX.iter().map(|(_, w)| w).sum();
    let mut areas = Vec::new();
    let mut pois = Vec::new();
    let mut next_poi: PoiId = 0;
    for row in 0..spec.rows {
        for col in 0..spec.cols {
            let area_id = (row * spec.cols + col) as AreaId;
            let x0 = col as f64 * spec.area_size_m;
            let y0 = row as f64 * spec.area_size_m;
            let mut ids = Vec::with_capacity(spec.pois_per_area as usize);
            let mut sum = Position::default();
            for i in 0..spec.pois_per_area {
                let category = if (i as usize) < ANCHOR_CATEGORIES.len() {
                    ANCHOR_CATEGORIES[i as usize]
                } else {
                    let mut pick = rng.random::<f64>() * total_weight;
                    let mut chosen = CATEGORY_MIX[0].0;
                    for (c, w) in CATEGORY_MIX {
                        if pick < w {
                            chosen = c;
                            break;
                        }
                        pick -= w;
                    }
                    chosen
                };
                let position = Position::new(
                    x0 + rng.random_range(0.05..0.95) * spec.area_size_m,
                    y0 + rng.random_range(0.05..0.95) * spec.area_size_m,
                );
                let u: f64 = rng.random();
                let popularity = (0.05 + 0.9 * u * u).clamp(0.0, 1.0);
                let price: f64 = rng.random();
                let quiet: f64 = rng.random();
                sum.x += position.x;
                sum.y += position.y;
                ids.push(next_poi);
                pois.push(Poi {
                    id: next_poi,
                    name: format!("{} {}-{}", category.as_str(), area_id, i),
                    category,
                    area_id,
                    position,
                    popularity,
                    feature_vector: feature_vector(category, price, quiet),
                });
                next_poi += 1;
            }
            let n = ids.len().max(1) as f64;
            let centroid = if ids.is_empty() {
                Position::new(x0 + spec.area_size_m / 2.0, y0 + spec.area_size_m / 2.0)
            } else {
                Position::new(sum.x / n, sum.y / n)
            };
            areas.push(Area {
                id: area_id,
                name: format!("area-{row}-{col}"),
                centroid,
                poi_ids: ids,
            });
        }
    }
    CityMap::from_parts(areas, pois).expect("generator output satisfies city invariants")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn poi(id: PoiId, area: AreaId, cat: Category, x: f64, y: f64, pop: f64) -> Poi {
        Poi {
            id,
            name: format!("p{id}"),
            category: cat,
            area_id: area,
            position: Position::new(x, y),
            popularity: pop,
            feature_vector: feature_vector(cat, 0.5, 0.5),
        }
    }

    fn area_of(id: AreaId, pois: &[Poi]) -> Area {
        let members: Vec<&Poi> = pois.iter().filter(|p| p.area_id == id).collect();
        let n = members.len().max(1) as f64;
        Area {
            id,
            name: format!("a{id}"),
            centroid: Position::new(
                members.iter().map(|p| p.position.x).sum::<f64>() / n,
                members.iter().map(|p| p.position.y).sum::<f64>() / n,
            ),
            poi_ids: members.iter().map(|p| p.id).collect(),
        }
    }

    #[test]
    fn distance_examples() {
        assert_eq!(
            distance(Position::new(0.0, 0.0), Position::new(0.0, 0.0)),
            0.0
        );
        assert_eq!(
            distance(Position::new(0.0, 0.0), Position::new(3.0, 4.0)),
            5.0
        );
        assert_eq!(
            distance(Position::new(1.0, 2.0), Position::new(4.0, 6.0)),
            5.0
        );
    }

    #[test]
    fn single_area_is_returned_for_large_k() {
        let pois = vec![poi(0, 7, Category::Cafe, 10.0, 10.0, 0.4)];
        let city = CityMap::from_parts(vec![area_of(7, &pois)], pois).unwrap();
        let ranked = nearby_areas(Position::new(0.0, 0.0), &city, NEARBY_AREAS);
        assert_eq!(ranked.len(), 1);
        assert_eq!(ranked[0].id, 7);
    }

    #[test]
    fn nearer_area_ranks_first_at_equal_popularity() {
        // score = 0.5 / (1 + km): 0.25 at 1 km, 0.1667 at 2 km.
        let pois = vec![
            poi(0, 1, Category::Cafe, 2000.0, 0.0, 0.5),
            poi(1, 2, Category::Cafe, 1000.0, 0.0, 0.5),
        ];
        let areas = vec![area_of(1, &pois), area_of(2, &pois)];
        let city = CityMap::from_parts(areas, pois).unwrap();
        let ranked: Vec<_> = nearby_areas(Position::new(0.0, 0.0), &city, 10)
            .iter()
            .map(|a| a.id)
            .collect();
        assert_eq!(ranked, vec![2, 1]);
    }

    #[test]
    fn equal_scores_tie_break_by_id() {
        let pois = vec![
            poi(0, 5, Category::Cafe, 1000.0, 0.0, 0.5),
            poi(1, 3, Category::Cafe, -1000.0, 0.0, 0.5),
        ];
        let areas = vec![area_of(5, &pois), area_of(3, &pois)];
        let city = CityMap::from_parts(areas, pois).unwrap();
        let ranked: Vec<_> = nearby_areas(Position::new(0.0, 0.0), &city, 10)
            .iter()
            .map(|a| a.id)
            .collect();
        assert_eq!(ranked, vec![3, 5]);
    }

    #[test]
    fn candidate_pois_examples() {
        let mut pois: Vec<Poi> = (0..3)
            .map(|i| poi(i, 0, Category::Cafe, i as f64, 0.0, 0.3))
            .collect();
        pois.push(poi(3, 0, Category::Park, 0.0, 0.0, 0.9));
        let city = CityMap::from_parts(vec![area_of(0, &pois)], pois).unwrap();
        let area = city.area(0).unwrap();
        let cafes = BTreeSet::from([Category::Cafe]);
        let got = candidate_pois(&city, area, &cafes, Position::default(), CANDIDATE_CAP).unwrap();
        assert_eq!(got.len(), 3);
        let shops = BTreeSet::from([Category::Shop]);
        assert!(
            candidate_pois(&city, area, &shops, Position::default(), 200)
                .unwrap()
                .is_empty()
        );
        assert!(matches!(
            candidate_pois(&city, area, &BTreeSet::new(), Position::default(), 200),
            Err(WorldError::EmptyCategorySet)
        ));
    }

    #[test]
    fn candidate_pois_caps_at_200() {
        let pois: Vec<Poi> = (0..250)
            .map(|i| {
                poi(
                    i,
                    0,
                    Category::Cafe,
                    i as f64,
                    0.0,
                    (i % 100) as f64 / 100.0,
                )
            })
            .collect();
        let city = CityMap::from_parts(vec![area_of(0, &pois)], pois).unwrap();
        let cafes = BTreeSet::from([Category::Cafe]);
        let got = candidate_pois(
            &city,
            city.area(0).unwrap(),
            &cafes,
            Position::default(),
            CANDIDATE_CAP,
        )
        .unwrap();
        assert_eq!(got.len(), 200);
        assert!(got.windows(2).all(|w| w[0].popularity >= w[1].popularity));
    }

    #[test]
    fn candidate_order_breaks_popularity_ties_by_distance() {
        let pois = vec![
            poi(0, 0, Category::Shop, 500.0, 0.0, 0.5),
            poi(1, 0, Category::Shop, 100.0, 0.0, 0.5),
        ];
        let city = CityMap::from_parts(vec![area_of(0, &pois)], pois).unwrap();
        let got = candidate_pois(
            &city,
            city.area(0).unwrap(),
            &BTreeSet::from([Category::Shop]),
            Position::default(),
            10,
        )
        .unwrap();
        assert_eq!(got[0].id, 1);
    }

    #[test]
    fn dangling_area_reference_names_the_poi() {
        let pois = vec![poi(42, 9, Category::Cafe, 0.0, 0.0, 0.5)];
        let area = Area {
            id: 1,
            name: "a".into(),
            centroid: Position::default(),
            poi_ids: vec![],
        };
        let err = CityMap::from_parts(vec![area], pois).unwrap_err();
        assert!(err.to_string().contains("poi 42"), "{err}");
    }

    #[test]
    fn empty_city_is_valid() {
        let city = CityMap::from_json(r#"{"areas":[],"pois":[]}"#).unwrap();
        assert!(city.pois().is_empty());
    }

    #[test]
    fn bad_centroid_and_popularity_are_rejected() {
        let mut pois = vec![poi(0, 0, Category::Cafe, 0.0, 0.0, 0.5)];
        let mut area = area_of(0, &pois);
        area.centroid = Position::new(5.0, 0.0);
        assert!(CityMap::from_parts(vec![area.clone()], pois.clone()).is_err());
        area.centroid = Position::default();
        pois[0].popularity = 1.5;
        assert!(CityMap::from_parts(vec![area], pois).is_err());
    }

    #[test]
    fn generator_round_trips_through_json() {
        let city = generate_grid_city(&GridCitySpec {
            rows: 2,
            cols: 3,
            pois_per_area: 12,
            ..Default::default()
        });
        assert_eq!(city.areas().len(), 6);
        assert_eq!(city.pois().len(), 72);
        let again = CityMap::from_json(&city.to_json().unwrap()).unwrap();
        assert_eq!(again.pois(), city.pois());
    }

    #[test]
    fn clock_derives_day_and_weekday() {
        let mut clock = SimClock::new(5);
        assert_eq!(clock.ticks_per_day(), 288);
        for _ in 0..288 * 5 {
            clock.advance();
        }
        assert_eq!(clock.day_index(), 5);
        assert!(!clock.is_weekday());
        assert_eq!(clock.sim_time() % 5, 0);
    }

    #[test]
    fn weather_stays_in_range_and_is_reproducible() {
        let mut w = WeatherState::initial(1, 9);
        let mut again = w;
        for day in 1..400 {
            w = w.next_day(day, 1, 9);
            again = again.next_day(day, 1, 9);
            assert_eq!(w, again);
            assert!((-30.0..=50.0).contains(&w.temperature));
        }
    }

    proptest! {
        #[test]
        fn distance_is_symmetric(ax in -1e6..1e6f64, ay in -1e6..1e6f64, bx in -1e6..1e6f64, by in -1e6..1e6f64) {
            let a = Position::new(ax, ay);
            let b = Position::new(bx, by);
            prop_assert_eq!(distance(a, b), distance(b, a));
            prop_assert_eq!(distance(a, a), 0.0);
            prop_assert!(distance(a, b) >= 0.0);
        }

        #[test]
        fn ranking_ignores_input_order(seed in 0u64..1000, ox in 0.0..3000.0f64, oy in 0.0..3000.0f64) {
            let city = generate_grid_city(&GridCitySpec { rows: 3, cols: 3, pois_per_area: 5, seed, ..Default::default() });
            let mut areas = city.areas().to_vec();
            let pois = city.pois().to_vec();
            areas.reverse();
            let shuffled = CityMap::from_parts(areas, pois).unwrap();
            let origin = Position::new(ox, oy);
            let a: Vec<_> = nearby_areas(origin, &city, 10).iter().map(|a| a.id).collect();
            let b: Vec<_> = nearby_areas(origin, &shuffled, 10).iter().map(|a| a.id).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn candidate_output_never_exceeds_cap(cap in 0usize..40, seed in 0u64..100) {
            let city = generate_grid_city(&GridCitySpec { rows: 1, cols: 1, pois_per_area: 60, seed, ..Default::default() });
            let cats: BTreeSet<_> = Category::ALL.into_iter().collect();
            let got = candidate_pois(&city, &city.areas()[0], &cats, Position::default(), cap).unwrap();
            prop_assert!(got.len() <= cap);
        }
    }
}
