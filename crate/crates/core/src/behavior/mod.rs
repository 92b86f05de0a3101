//! Daily planning, destination choice and transport mode choice.

pub mod place;
pub mod schedule;
pub mod vehicle;

pub use place::{
    choose_destination, extract_intention, gravity_select, select_area, Destination, Intention,
    PlaceError,
};
pub use schedule::{
    fill_leisure_block, fill_medium, plan_mandatory, Activity, ActivityKind, DayInfo, DaySchedule,
    LocationHint, Tier, TimeBlock,
};
pub use vehicle::{available_vehicles, select_vehicle, Speeds, TripContext, Vehicle};
