//! Transport mode choice and door-to-door travel times.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::oracle::schema::VehicleReply;
use crate::oracle::{stub, Oracle, OracleKind};
use crate::persona::Persona;
use crate::world::WeatherCondition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vehicle {
    Walk,
    Bicycle,
    Car,
    Bus,
    Train,
}

impl Vehicle {
    pub const ALL: [Vehicle; 5] = [
        Vehicle::Walk,
        Vehicle::Bicycle,
        Vehicle::Car,
        Vehicle::Bus,
        Vehicle::Train,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Vehicle::Walk => "walk",
            Vehicle::Bicycle => "bicycle",
            Vehicle::Car => "car",
            Vehicle::Bus => "bus",
            Vehicle::Train => "train",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for Vehicle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Door-to-door speeds in km/h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Speeds {
    pub walk: f64,
    pub bicycle: f64,
    pub car: f64,
    pub bus: f64,
    pub train: f64,
}

impl Default for Speeds {
    fn default() -> Self {
        Self {
            walk: 5.0,
            bicycle: 15.0,
            car: 30.0,
            bus: 20.0,
            train: 40.0,
        }
    }
}

impl Speeds {
    pub fn kmh(&self, v: Vehicle) -> f64 {
        match v {
            Vehicle::Walk => self.walk,
            Vehicle::Bicycle => self.bicycle,
            Vehicle::Car => self.car,
            Vehicle::Bus => self.bus,
            Vehicle::Train => self.train,
        }
    }

    pub fn minutes(&self, v: Vehicle, distance_m: f64) -> f64 {
        distance_m / 1000.0 / self.kmh(v) * 60.0
    }

    /// Travel time rounded up to whole ticks.
    pub fn ticks(&self, v: Vehicle, distance_m: f64, tick_minutes: u32) -> u32 {
        (self.minutes(v, distance_m) / tick_minutes as f64).ceil() as u32
    }
}

/// Modes open to this persona: walking and transit always, bicycle and car
/// when owned.
pub fn available_vehicles(persona: &Persona) -> Vec<Vehicle> {
    Vehicle::ALL
        .into_iter()
        .filter(|v| match v {
            Vehicle::Bicycle => persona.owns_bicycle,
            Vehicle::Car => persona.owns_car,
            _ => true,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripContext {
    pub distance_m: f64,
    pub minute: u32,
    pub month: u8,
    pub weather: WeatherCondition,
    pub temperature: f64,
    pub agent_id: u64,
    pub age: u32,
    pub occupation: String,
    pub available: Vec<Vehicle>,
}

impl TripContext {
    fn to_context(&self) -> Value {
        json!({
            "agent_id": self.agent_id,
            "distance_m": self.distance_m,
            "minute": self.minute,
            "month": self.month,
            "weather": self.weather.as_str(),
            "temperature": self.temperature,
            "age": self.age,
            "occupation": self.occupation,
            "available": self.available.iter().map(|v| v.as_str()).collect::<Vec<_>>(),
        })
    }
}

/// Picks a mode. A mode outside the available set is retried once, then the
/// rule table decides.
pub fn select_vehicle(trip: &TripContext, oracle: &Oracle) -> (Vehicle, String) {
    let mut ctx = trip.to_context();
    for attempt in 0..2 {
        if attempt > 0 {
            ctx["retry"] = attempt.into();
        }
        match oracle.ask::<VehicleReply>(OracleKind::SelectVehicle, ctx.clone()) {
            Ok(r) => match Vehicle::parse(&r.vehicle) {
                Some(v) if trip.available.contains(&v) => return (v, r.justification),
                _ => log::debug!(
                    "agent {}: unavailable vehicle {:?}",
                    trip.agent_id,
                    r.vehicle
                ),
            },
            Err(e) => {
                log::warn!("agent {}: select_vehicle failed: {e}", trip.agent_id);
                break;
            }
        }
    }
    let rule = stub::answer(OracleKind::SelectVehicle, &trip.to_context(), 0, 0.0);
    let v = rule["vehicle"]
        .as_str()
        .and_then(Vehicle::parse)
        .filter(|v| trip.available.contains(v))
        .unwrap_or(Vehicle::Walk);
    (
        v,
        rule["justification"]
            .as_str()
            .unwrap_or_default()
            .to_owned(),
    )
}
