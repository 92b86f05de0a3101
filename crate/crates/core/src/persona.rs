//! Agent profiles and the seeded synthetic population generator.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::world::{Category, CityMap, PoiId};

pub type AgentId = u64;

#[derive(Debug, thiserror::Error)]
pub enum PersonaError {
    #[error("city lacks required anchor categories: {}", .0.join(", "))]
    MissingAnchors(Vec<String>),
    #[error("persona record {index}: {reason}")]
    Record { index: usize, reason: String },
    #[error("invalid population spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occupation {
    OfficeWorker,
    Student,
    NurseShift,
    Freelance,
    Retired,
    Homemaker,
    Unemployed,
}

impl Occupation {
    pub const ALL: [Occupation; 7] = [
        Occupation::OfficeWorker,
        Occupation::Student,
        Occupation::NurseShift,
        Occupation::Freelance,
        Occupation::Retired,
        Occupation::Homemaker,
        Occupation::Unemployed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Occupation::OfficeWorker => "office_worker",
            Occupation::Student => "student",
            Occupation::NurseShift => "nurse_shift",
            Occupation::Freelance => "freelance",
            Occupation::Retired => "retired",
            Occupation::Homemaker => "homemaker",
            Occupation::Unemployed => "unemployed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.as_str() == s)
    }

    /// Whether the occupation needs a workplace (or school) anchor.
    pub fn needs_workplace(self) -> bool {
        matches!(
            self,
            Occupation::OfficeWorker
                | Occupation::Student
                | Occupation::NurseShift
                | Occupation::Freelance
        )
    }

    /// Workplace category, in order of preference.
    fn workplace_categories(self) -> &'static [Category] {
        match self {
            Occupation::Student => &[Category::School],
            Occupation::NurseShift => &[Category::Hospital, Category::Office],
            Occupation::OfficeWorker | Occupation::Freelance => &[Category::Office],
            _ => &[],
        }
    }

    fn income_factor(self) -> f64 {
        match self {
            Occupation::OfficeWorker => 1.0,
            Occupation::NurseShift => 1.05,
            Occupation::Freelance => 0.9,
            Occupation::Student => 0.15,
            Occupation::Retired => 0.6,
            Occupation::Homemaker => 0.3,
            Occupation::Unemployed => 0.25,
        }
    }
}

impl fmt::Display for Occupation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Education {
    Primary,
    Secondary,
    Vocational,
    Bachelor,
    Graduate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Household {
    Single,
    Couple,
    Family,
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifeStage {
    Child,
    YoungAdult,
    Adult,
    MiddleAged,
    Senior,
}

impl LifeStage {
    pub fn for_age(age: u32) -> Self {
        match age {
            0..=17 => LifeStage::Child,
            18..=29 => LifeStage::YoungAdult,
            30..=49 => LifeStage::Adult,
            50..=64 => LifeStage::MiddleAged,
            _ => LifeStage::Senior,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Habit {
    EarlyRiser,
    NightOwl,
    GymRegular,
    EatsOut,
    CooksHome,
    LongCommuter,
    SocialButterfly,
    Homebody,
    WeekendTraveler,
    CoffeeLover,
    Frugal,
    BigSpender,
}

impl Habit {
    pub const ALL: [Habit; 12] = [
        Habit::EarlyRiser,
        Habit::NightOwl,
        Habit::GymRegular,
        Habit::EatsOut,
        Habit::CooksHome,
        Habit::LongCommuter,
        Habit::SocialButterfly,
        Habit::Homebody,
        Habit::WeekendTraveler,
        Habit::CoffeeLover,
        Habit::Frugal,
        Habit::BigSpender,
    ];

    // Pairs that cannot both hold for one person.
    fn conflicts(self, other: Habit) -> bool {
        use Habit::*;
        matches!(
            (self, other),
            (EarlyRiser, NightOwl)
                | (NightOwl, EarlyRiser)
                | (EatsOut, CooksHome)
                | (CooksHome, EatsOut)
                | (SocialButterfly, Homebody)
                | (Homebody, SocialButterfly)
                | (Frugal, BigSpender)
                | (BigSpender, Frugal)
        )
    }
}

/// Big Five facets, each on a 1 (low) to 3 (high) scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BigFive {
    pub openness: u8,
    pub conscientiousness: u8,
    pub extraversion: u8,
    pub agreeableness: u8,
    pub neuroticism: u8,
}

impl BigFive {
    pub fn facets(&self) -> [(&'static str, u8); 5] {
        [
            ("openness", self.openness),
            ("conscientiousness", self.conscientiousness),
            ("extraversion", self.extraversion),
            ("agreeableness", self.agreeableness),
            ("neuroticism", self.neuroticism),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub agent_id: AgentId,
    pub name: String,
    pub age: u32,
    pub gender: Gender,
    pub occupation: Occupation,
    /// Currency per month.
    pub income: f64,
    /// Currency per month.
    pub expenses: f64,
    pub education: Education,
    pub household: Household,
    /// Agents sharing this id live together at `home_poi`.
    pub household_id: u64,
    pub life_stage: LifeStage,
    pub hobbies: Vec<String>,
    pub big_five: BigFive,
    pub habits: Vec<Habit>,
    pub home_poi: PoiId,
    pub work_poi: Option<PoiId>,
    pub owns_car: bool,
    pub owns_bicycle: bool,
    #[serde(default)]
    pub dominant_need_text: String,
}

impl Persona {
    pub fn has_habit(&self, habit: Habit) -> bool {
        self.habits.contains(&habit)
    }

    /// Checks the intrinsic invariants; anchors are checked by
    /// [`Persona::validate_anchors`].
    pub fn validate(&self) -> Result<(), String> {
        if self.age > 110 {
            return Err(format!("age {} outside [0,110]", self.age));
        }
        if !(self.income >= 0.0 && self.income.is_finite()) {
            return Err(format!("income {} must be non-negative", self.income));
        }
        if !(self.expenses >= 0.0 && self.expenses.is_finite()) {
            return Err(format!("expenses {} must be non-negative", self.expenses));
        }
        for (facet, v) in self.big_five.facets() {
            if !(1..=3).contains(&v) {
                return Err(format!("big_five.{facet} = {v} outside {{1,2,3}}"));
            }
        }
        if matches!(
            self.occupation,
            Occupation::OfficeWorker
                | Occupation::Student
                | Occupation::NurseShift
                | Occupation::Freelance
        ) && self.work_poi.is_none()
        {
            return Err(format!("{} without work_poi", self.occupation));
        }
        Ok(())
    }

    pub fn validate_anchors(&self, city: &CityMap) -> Result<(), String> {
        match city.poi(self.home_poi) {
            Some(p) if p.category == Category::Home => {}
            Some(p) => return Err(format!("home_poi {} has category {}", p.id, p.category)),
            None => return Err(format!("home_poi {} not in city", self.home_poi)),
        }
        if let Some(w) = self.work_poi {
            if city.poi(w).is_none() {
                return Err(format!("work_poi {w} not in city"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeBand {
    pub min: u32,
    pub max: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationWeight {
    pub occupation: Occupation,
    pub weight: f64,
}

/// Marginal distributions for [`generate_population`].
///
/// Ages are allocated to bands by quota (largest remainder), so band counts
/// match the weights to within one agent. Under-18s are always students and
/// agents at or over `retirement_age` retire with `retirement_rate`; everybody
/// else draws from `occupation_mix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub age_bands: Vec<AgeBand>,
    pub occupation_mix: Vec<OccupationWeight>,
    pub retirement_age: u32,
    pub retirement_rate: f64,
    /// Parameters of the log-normal monthly income for a full earner.
    pub income_log_mean: f64,
    pub income_log_sd: f64,
    pub household_mix: Vec<(Household, f64)>,
    pub car_ownership: f64,
    pub bicycle_ownership: f64,
    pub hobbies: Vec<String>,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            age_bands: vec![
                AgeBand {
                    min: 6,
                    max: 17,
                    weight: 0.2,
                },
                AgeBand {
                    min: 18,
                    max: 34,
                    weight: 0.2,
                },
                AgeBand {
                    min: 35,
                    max: 49,
                    weight: 0.2,
                },
                AgeBand {
                    min: 50,
                    max: 64,
                    weight: 0.2,
                },
                AgeBand {
                    min: 65,
                    max: 90,
                    weight: 0.2,
                },
            ],
            occupation_mix: vec![
                OccupationWeight {
                    occupation: Occupation::OfficeWorker,
                    weight: 0.50,
                },
                OccupationWeight {
                    occupation: Occupation::Student,
                    weight: 0.08,
                },
                OccupationWeight {
                    occupation: Occupation::NurseShift,
                    weight: 0.08,
                },
                OccupationWeight {
                    occupation: Occupation::Freelance,
                    weight: 0.10,
                },
                OccupationWeight {
                    occupation: Occupation::Homemaker,
                    weight: 0.12,
                },
                OccupationWeight {
                    occupation: Occupation::Unemployed,
                    weight: 0.05,
                },
                OccupationWeight {
                    occupation: Occupation::Retired,
                    weight: 0.07,
                },
            ],
            retirement_age: 65,
            retirement_rate: 0.85,
            income_log_mean: 8.0,
            income_log_sd: 0.35,
            household_mix: vec![
                (Household::Single, 0.35),
                (Household::Couple, 0.25),
                (Household::Family, 0.30),
                (Household::Shared, 0.10),
            ],
            car_ownership: 0.45,
            bicycle_ownership: 0.55,
            hobbies: [
                "reading",
                "cooking",
                "jogging",
                "gaming",
                "music",
                "photography",
                "gardening",
                "movies",
                "shopping",
                "hiking",
                "painting",
                "karaoke",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }
}

impl PopulationSpec {
    pub fn from_toml(text: &str) -> Result<Self, PersonaError> {
        let spec: Self = toml::from_str(text).map_err(|e| PersonaError::Spec(e.to_string()))?;
        spec.check()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PersonaError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<(), PersonaError> {
        if self.age_bands.is_empty() || self.age_bands.iter().all(|b| b.weight <= 0.0) {
            return Err(PersonaError::Spec(
                "age_bands needs a positive weight".into(),
            ));
        }
        if let Some(b) = self
            .age_bands
            .iter()
            .find(|b| b.min > b.max || b.max > 110 || b.weight < 0.0)
        {
            return Err(PersonaError::Spec(format!(
                "bad age band {}..={}",
                b.min, b.max
            )));
        }
        if self.occupation_mix.iter().all(|w| w.weight <= 0.0) {
            return Err(PersonaError::Spec(
                "occupation_mix needs a positive weight".into(),
            ));
        }
        if self.household_mix.iter().all(|(_, w)| *w <= 0.0) {
            return Err(PersonaError::Spec(
                "household_mix needs a positive weight".into(),
            ));
        }
        Ok(())
    }

    fn occupations_possible(&self) -> BTreeSet<Occupation> {
        let mut out: BTreeSet<Occupation> = self
            .occupation_mix
            .iter()
            .filter(|w| w.weight > 0.0)
            .map(|w| w.occupation)
            .collect();
        if self.age_bands.iter().any(|b| b.weight > 0.0 && b.min < 18) {
            out.insert(Occupation::Student);
        }
        out
    }
}

/// Splits `n` into integer counts proportional to `weights` (largest remainder).
fn quota(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    for i in order {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

fn weighted_pick<T: Copy>(rng: &mut impl Rng, items: &[(T, f64)]) -> T {
    let total: f64 = items.iter().map(|(_, w)| w.max(0.0)).sum();
    let mut x = rng.random::<f64>() * total;
    for &(item, w) in items {
        let w = w.max(0.0);
        if x < w {
            return item;
        }
        x -= w;
    }
    items
        .iter()
        .rev()
        .find(|(_, w)| *w > 0.0)
        .map(|(i, _)| *i)
        .unwrap_or(items[0].0)
}

const SYLLABLES: [&str; 16] = [
    "ka", "ri", "to", "mi", "na", "so", "yu", "ha", "ta", "ke", "ro", "shi", "ma", "no", "ai",
    "ren",
];

fn make_name(rng: &mut impl Rng) -> String {
    let mut part = |len: usize| -> String {
        let s: String = (0..len)
            .map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())])
            .collect();
        let mut c = s.chars();
        c.next()
            .map(|f| f.to_uppercase().collect::<String>() + c.as_str())
            .unwrap_or_default()
    };
    let first = part(2);
    let last = part(3);
    format!("{first} {last}")
}

/// Generates `n` personas. Identical `(n, city, seed, spec)` gives identical
/// output.
pub fn generate_population(
    n: usize,
    city: &CityMap,
    seed: u64,
    spec: &PopulationSpec,
) -> Result<Vec<Persona>, PersonaError> {
    spec.check()?;
    let homes: Vec<PoiId> = city
        .pois_in_category(Category::Home)
        .map(|p| p.id)
        .collect();
    let mut missing = Vec::new();
    if homes.is_empty() {
        missing.push(Category::Home.as_str().to_string());
    }
    for occ in spec.occupations_possible() {
        let cats = occ.workplace_categories();
        if !cats.is_empty() && !cats.iter().any(|c| city.has_category(*c)) {
            let name = cats.last().unwrap().as_str().to_string();
            if !missing.contains(&name) {
                missing.push(name);
            }
        }
    }
    if !missing.is_empty() {
        return Err(PersonaError::MissingAnchors(missing));
    }
    if n == 0 {
        return Ok(Vec::new());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = spec.age_bands.iter().map(|b| b.weight.max(0.0)).collect();
    let mut ages = Vec::with_capacity(n);
    for (band, count) in spec.age_bands.iter().zip(quota(n, &weights)) {
        for _ in 0..count {
            ages.push(rng.random_range(band.min..=band.max));
        }
    }
    ages.shuffle(&mut rng);

    let occ_mix: Vec<(Occupation, f64)> = spec
        .occupation_mix
        .iter()
        .map(|w| (w.occupation, w.weight))
        .collect();
    let adult_mix: Vec<(Occupation, f64)> = occ_mix
        .iter()
        .copied()
        .filter(|(o, _)| *o != Occupation::Student)
        .collect();
    let workplaces = |occ: Occupation| -> Vec<PoiId> {
        for cat in occ.workplace_categories() {
            let ids: Vec<PoiId> = city.pois_in_category(*cat).map(|p| p.id).collect();
            if !ids.is_empty() {
                return ids;
            }
        }
        Vec::new()
    };
    let income_dist = LogNormal::new(spec.income_log_mean, spec.income_log_sd.max(1e-9))
        .map_err(|e| PersonaError::Spec(e.to_string()))?;

    let mut personas = Vec::with_capacity(n);
    let mut household_left = 0usize;
    let mut household = (Household::Single, 0u64, homes[0]);
    let mut next_household = 0u64;
    for (i, age) in ages.into_iter().enumerate() {
        if household_left == 0 {
            let kind = weighted_pick(&mut rng, &spec.household_mix);
            household_left = match kind {
                Household::Single => 1,
                Household::Couple => 2,
                Household::Family => rng.random_range(3..=4),
                Household::Shared => rng.random_range(2..=3),
            };
            household = (
                kind,
                next_household,
                homes[rng.random_range(0..homes.len())],
            );
            next_household += 1;
        }
        household_left -= 1;

        let occupation = if age < 18 {
            Occupation::Student
        } else if age >= spec.retirement_age && rng.random::<f64>() < spec.retirement_rate {
            Occupation::Retired
        } else if age > 24 {
            weighted_pick(
                &mut rng,
                if adult_mix.is_empty() {
                    &occ_mix
                } else {
                    &adult_mix
                },
            )
        } else {
            weighted_pick(&mut rng, &occ_mix)
        };
        let work_poi = if occupation.needs_workplace() {
            let sites = workplaces(occupation);
            Some(sites[rng.random_range(0..sites.len())])
        } else {
            None
        };
        let income = (income_dist.sample(&mut rng) * occupation.income_factor()).round();
        let expenses = (income * rng.random_range(0.6..1.25) + 300.0).round();
        let education = match age {
            0..=15 => Education::Primary,
            16..=21 => Education::Secondary,
            _ => [
                Education::Secondary,
                Education::Vocational,
                Education::Bachelor,
                Education::Graduate,
            ][rng.random_range(0..4)],
        };
        let big_five = BigFive {
            openness: rng.random_range(1..=3),
            conscientiousness: rng.random_range(1..=3),
            extraversion: rng.random_range(1..=3),
            agreeableness: rng.random_range(1..=3),
            neuroticism: rng.random_range(1..=3),
        };
        let mut habits: Vec<Habit> = Vec::new();
        for _ in 0..rng.random_range(1..=3) {
            let h = Habit::ALL[rng.random_range(0..Habit::ALL.len())];
            if !habits.contains(&h) && !habits.iter().any(|x| x.conflicts(h)) {
                habits.push(h);
            }
        }
        habits.sort();
        let mut hobbies = Vec::new();
        if !spec.hobbies.is_empty() {
            for _ in 0..rng.random_range(1..=2) {
                let h = spec.hobbies[rng.random_range(0..spec.hobbies.len())].clone();
                if !hobbies.contains(&h) {
                    hobbies.push(h);
                }
            }
        }
        let gender = [Gender::Female, Gender::Male, Gender::Other][match rng.random::<f64>() {
            x if x < 0.49 => 0,
            x if x < 0.98 => 1,
            _ => 2,
        }];
        personas.push(Persona {
            agent_id: i as AgentId,
            name: make_name(&mut rng),
            age,
            gender,
            occupation,
            income,
            expenses,
            education,
            household: household.0,
            household_id: household.1,
            life_stage: LifeStage::for_age(age),
            hobbies,
            big_five,
            habits,
            home_poi: household.2,
            work_poi,
            owns_car: age >= 18 && rng.random::<f64>() < spec.car_ownership,
            owns_bicycle: rng.random::<f64>() < spec.bicycle_ownership,
            dominant_need_text: String::new(),
        });
    }
    Ok(personas)
}

/// Writes one persona per line.
pub fn save_personas(path: impl AsRef<Path>, personas: &[Persona]) -> Result<(), PersonaError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for p in personas {
        serde_json::to_writer(&mut out, p).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_personas(path: impl AsRef<Path>) -> Result<Vec<Persona>, PersonaError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    parse_personas(reader)
}

pub fn parse_personas(reader: impl BufRead) -> Result<Vec<Persona>, PersonaError> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let index = out.len();
        let persona: Persona = serde_json::from_str(&line).map_err(|e| PersonaError::Record {
            index,
            reason: e.to_string(),
        })?;
        persona
            .validate()
            .map_err(|reason| PersonaError::Record { index, reason })?;
        out.push(persona);
    }
    Ok(out)
}
