//! Destination choice: area step, intention extraction, then a gravity model
//! over belief-weighted candidate POIs.
//!
//! Distances enter the gravity model in kilometres, floored at 10 m, because
//! the exponent `1 + γ(b − 0.5)` drops below one for unattractive places and
//! the weight would otherwise blow up as the distance approaches zero.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::memory::SpatialMemory;
use crate::oracle::schema::{IntentionReply, SelectAreaReply};
use crate::oracle::{Oracle, OracleKind};
use crate::world::{
    candidate_pois, distance, nearby_areas, AreaId, Category, CityMap, Poi, PoiId, Position,
};
use crate::world::{CANDIDATE_CAP, NEARBY_AREAS};

pub const GAMMA: f64 = 2.0;
pub const EPSILON: f64 = 1e-3;
pub const MIN_DISTANCE_KM: f64 = 0.01;
pub const DEFAULT_RADIUS_M: f64 = 2000.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlaceError {
    #[error("no candidate places")]
    NoCandidates,
    #[error("candidate and belief lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("activity text is empty")]
    EmptyActivity,
    #[error("{0:?} does not involve going anywhere")]
    NonMovement(String),
}

/// Mean of the four belief dimensions.
pub fn belief_attractiveness(belief: &crate::memory::BeliefVector) -> f64 {
    belief.attractiveness()
}

/// Unnormalized gravity weight for attractiveness `b` at `distance_km`.
pub fn gravity_weight(b: f64, distance_km: f64) -> f64 {
    let d = distance_km.max(MIN_DISTANCE_KM);
    (b + EPSILON) / d.powf(1.0 + GAMMA * (b - 0.5))
}

/// Choice probabilities for candidates at `distances_km` with
/// attractiveness `beliefs`.
pub fn gravity_probabilities(
    distances_km: &[f64],
    beliefs: &[f64],
) -> Result<Vec<f64>, PlaceError> {
    if distances_km.len() != beliefs.len() {
        return Err(PlaceError::LengthMismatch(
            distances_km.len(),
            beliefs.len(),
        ));
    }
    if beliefs.is_empty() {
        return Err(PlaceError::NoCandidates);
    }
    let w: Vec<f64> = distances_km
        .iter()
        .zip(beliefs)
        .map(|(&d, &b)| gravity_weight(b, d))
        .collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probabilities.len() - 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct GravityChoice {
    pub index: usize,
    pub poi_id: PoiId,
    pub probabilities: Vec<f64>,
}

pub fn gravity_select<R: Rng + ?Sized>(
    origin: Position,
    candidates: &[&Poi],
    beliefs: &[f64],
    rng: &mut R,
) -> Result<GravityChoice, PlaceError> {
    let km: Vec<f64> = candidates
        .iter()
        .map(|p| distance(origin, p.position) / 1000.0)
        .collect();
    let probabilities = gravity_probabilities(&km, beliefs)?;
    let index = sample_index(&probabilities, rng);
    Ok(GravityChoice {
        index,
        poi_id: candidates[index].id,
        probabilities,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intention {
    pub categories: BTreeSet<Category>,
    pub max_radius_m: f64,
}

impl Intention {
    pub fn fallback() -> Self {
        Self {
            categories: BTreeSet::from([Category::Entertainment]),
            max_radius_m: DEFAULT_RADIUS_M,
        }
    }
}

const NON_MOVEMENT: [&str; 3] = ["sleep", "nap", "asleep"];

/// POI categories and search radius for an activity. Unusable oracle answers
/// map to entertainment within 2 km.
pub fn extract_intention(
    activity: &str,
    agent_id: u64,
    oracle: &Oracle,
) -> Result<Intention, PlaceError> {
    let text = activity.trim();
    if text.is_empty() {
        return Err(PlaceError::EmptyActivity);
    }
    let lower = text.to_lowercase();
    if lower
        .split(|c: char| !c.is_alphanumeric())
        .any(|w| NON_MOVEMENT.contains(&w))
    {
        return Err(PlaceError::NonMovement(text.to_owned()));
    }
    let reply: IntentionReply = match oracle.ask(
        OracleKind::ExtractIntention,
        json!({"agent_id": agent_id, "activity": text}),
    ) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("agent {agent_id}: extract_intention failed: {e}");
            return Ok(Intention::fallback());
        }
    };
    let categories: BTreeSet<Category> = reply
        .categories
        .iter()
        .filter_map(|c| Category::parse(c))
        .collect();
    if categories.is_empty() || reply.max_radius_m.is_nan() || reply.max_radius_m <= 0.0 {
        return Ok(Intention::fallback());
    }
    Ok(Intention {
        categories,
        max_radius_m: reply.max_radius_m,
    })
}

/// Current area or one of the top nearby areas; anything else stays local.
pub fn select_area(
    agent_id: u64,
    current: AreaId,
    origin: Position,
    intention: &str,
    city: &CityMap,
    oracle: &Oracle,
) -> AreaId {
    let options: Vec<AreaId> = nearby_areas(origin, city, NEARBY_AREAS)
        .iter()
        .map(|a| a.id)
        .collect();
    let ctx = json!({
        "agent_id": agent_id,
        "intention": intention,
        "current_area": current,
        "options": options,
        "popularity": options.iter().map(|&a| city.area_popularity(a)).collect::<Vec<_>>(),
    });
    match oracle.ask::<SelectAreaReply>(OracleKind::SelectArea, ctx) {
        Ok(r) if r.area_id == current || options.contains(&r.area_id) => r.area_id,
        Ok(r) => {
            log::debug!(
                "agent {agent_id}: unknown area {} chosen, staying",
                r.area_id
            );
            current
        }
        Err(e) => {
            log::warn!("agent {agent_id}: select_area failed: {e}");
            current
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Destination {
    pub poi_id: PoiId,
    pub area_id: AreaId,
    pub intention: Intention,
    pub probabilities: Vec<f64>,
}

/// The full chain: area, intention, candidates in that area within the
/// radius (widening to the whole area, then to the nearby areas, if none),
/// then a gravity draw using stored or imputed beliefs.
#[allow(clippy::too_many_arguments)]
pub fn choose_destination<R: Rng + ?Sized>(
    agent_id: u64,
    activity: &str,
    current_area: AreaId,
    origin: Position,
    city: &CityMap,
    spatial: &SpatialMemory,
    oracle: &Oracle,
    rng: &mut R,
) -> Result<Destination, PlaceError> {
    let intention = extract_intention(activity, agent_id, oracle)?;
    let area_id = select_area(agent_id, current_area, origin, activity, city, oracle);
    let in_area = |area: AreaId| -> Vec<&Poi> {
        city.area(area)
            .and_then(|a| {
                candidate_pois(city, a, &intention.categories, origin, CANDIDATE_CAP).ok()
            })
            .unwrap_or_default()
    };
    let mut pool = in_area(area_id);
    let within: Vec<&Poi> = pool
        .iter()
        .copied()
        .filter(|p| distance(origin, p.position) <= intention.max_radius_m)
        .collect();
    if !within.is_empty() {
        pool = within;
    }
    let mut chosen_area = area_id;
    if pool.is_empty() {
        for a in nearby_areas(origin, city, NEARBY_AREAS) {
            pool = in_area(a.id);
            if !pool.is_empty() {
                chosen_area = a.id;
                break;
            }
        }
    }
    if pool.is_empty() {
        return Err(PlaceError::NoCandidates);
    }
    let beliefs: Vec<f64> = pool
        .iter()
        .map(|p| spatial.belief_for(p, city).0.attractiveness())
        .collect();
    let choice = gravity_select(origin, &pool, &beliefs, rng)?;
    Ok(Destination {
        poi_id: choice.poi_id,
        area_id: chosen_area,
        intention,
        probabilities: choice.probabilities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::BeliefVector;
    use crate::world::{generate_grid_city, GridCitySpec};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn attractiveness_examples() {
        let mut b = BeliefVector::prior();
        assert_eq!(belief_attractiveness(&b), 0.5);
        b.dims = [1.0; 4];
        assert_eq!(belief_attractiveness(&b), 1.0);
        b.dims = [0.8, 0.6, 0.9, 0.7];
        assert!((belief_attractiveness(&b) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn analytic_probabilities() {
        assert_eq!(gravity_probabilities(&[3.0], &[0.2]).unwrap(), vec![1.0]);
        let p = gravity_probabilities(&[0.1, 0.2], &[0.5, 0.5]).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-9 && (p[1] - 1.0 / 3.0).abs() < 1e-9);
        let p = gravity_probabilities(&[1.0, 1.0], &[0.9, 0.1]).unwrap();
        assert!((p[0] / p[1] - 0.901 / 0.101).abs() < 1e-9);
        assert_eq!(
            gravity_probabilities(&[], &[]),
            Err(PlaceError::NoCandidates)
        );
    }

    #[test]
    fn belief_is_not_monotone_far_away() {
        // Beyond e^(1/(gamma(1+eps))) km a higher belief steepens the decay
        // faster than it raises the numerator.
        assert!(gravity_weight(1.0, 10.0) < gravity_weight(0.5, 10.0));
    }

    #[test]
    fn distance_floor_caps_weight() {
        assert_eq!(
            gravity_weight(0.2, 0.0),
            gravity_weight(0.2, MIN_DISTANCE_KM)
        );
        assert!(gravity_weight(0.2, 0.0).is_finite());
    }

    #[test]
    fn empirical_frequencies_converge() {
        let p = [0.5, 0.3, 0.2];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 3];
        let n = 100_000;
        for _ in 0..n {
            counts[sample_index(&p, &mut rng)] += 1;
        }
        for i in 0..3 {
            assert!((counts[i] as f64 / n as f64 - p[i]).abs() < 0.01);
        }
    }

    #[test]
    fn intention_cases() {
        let stub = Oracle::stub(1);
        let i = extract_intention("grab coffee", 0, &stub).unwrap();
        assert_eq!(i.categories, BTreeSet::from([Category::Cafe]));
        assert_eq!(i.max_radius_m, 1500.0);
        assert_eq!(
            extract_intention("zzz-activity", 0, &stub).unwrap(),
            Intention::fallback()
        );
        assert!(matches!(
            extract_intention("sleep", 0, &stub),
            Err(PlaceError::NonMovement(_))
        ));
        assert_eq!(
            extract_intention("  ", 0, &stub),
            Err(PlaceError::EmptyActivity)
        );
    }

    #[test]
    fn area_choice_cases() {
        let city = generate_grid_city(&GridCitySpec::default());
        let stub = Oracle::stub(1);
        let here = city.areas()[7].clone();
        assert_eq!(
            select_area(0, here.id, here.centroid, "eat lunch", &city, &stub),
            here.id
        );
        let ranked: Vec<AreaId> = nearby_areas(here.centroid, &city, NEARBY_AREAS)
            .iter()
            .map(|a| a.id)
            .collect();
        let first_other = *ranked.iter().find(|&&a| a != here.id).unwrap();
        assert_eq!(
            select_area(0, here.id, here.centroid, "explore the city", &city, &stub),
            first_other
        );
    }

    #[test]
    fn destination_is_a_matching_category() {
        let city = generate_grid_city(&GridCitySpec::default());
        let home = &city.areas()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = choose_destination(
            0,
            "grab coffee",
            home.id,
            home.centroid,
            &city,
            &SpatialMemory::new(),
            &Oracle::stub(1),
            &mut rng,
        )
        .unwrap();
        assert_eq!(city.poi(d.poi_id).unwrap().category, Category::Cafe);
        assert!((d.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one_and_are_positive(
            cands in proptest::collection::vec((0.0f64..20.0, 0.0f64..=1.0), 1..50)
        ) {
            let (d, b): (Vec<f64>, Vec<f64>) = cands.into_iter().unzip();
            let p = gravity_probabilities(&d, &b).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&x| x > 0.0));
        }

        #[test]
        fn farther_is_never_more_likely(
            cands in proptest::collection::vec((1.0f64..20.0, 0.0f64..=1.0), 2..20),
            dd in 0.0f64..5.0,
        ) {
            let (d, b): (Vec<f64>, Vec<f64>) = cands.into_iter().unzip();
            let p0 = gravity_probabilities(&d, &b).unwrap()[0];
            let mut d2 = d.clone();
            d2[0] += dd;
            prop_assert!(gravity_probabilities(&d2, &b).unwrap()[0] <= p0 + 1e-15);
        }

        // d ln w / db = 1/(b+eps) - gamma ln D, positive for every b when D <= 1 km.
        #[test]
        fn better_belief_is_never_less_likely_within_a_kilometre(
            cands in proptest::collection::vec((MIN_DISTANCE_KM..1.0, 0.0f64..=1.0), 2..20),
            db in 0.0f64..0.5,
        ) {
            let (d, b): (Vec<f64>, Vec<f64>) = cands.into_iter().unzip();
            let p0 = gravity_probabilities(&d, &b).unwrap()[0];
            let mut b2 = b.clone();
            b2[0] = (b2[0] + db).min(1.0);
            prop_assert!(gravity_probabilities(&d, &b2).unwrap()[0] >= p0 - 1e-15);
        }
    }
}
