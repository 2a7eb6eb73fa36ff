//! Conversions between SI and the US reporting units used in field data.
//!
//! Everything inside the crate is SI (m, s, veh/s, veh/m). Conversions happen
//! only when reading or writing files and when reporting errors.

pub const METERS_PER_MILE: f64 = 1609.344;
pub const SECONDS_PER_HOUR: f64 = 3600.0;

pub fn mps_to_mph(v: f64) -> f64 {
    v * SECONDS_PER_HOUR / METERS_PER_MILE
}

pub fn mph_to_mps(v: f64) -> f64 {
    v * METERS_PER_MILE / SECONDS_PER_HOUR
}

pub fn per_second_to_per_hour(q: f64) -> f64 {
    q * SECONDS_PER_HOUR
}

pub fn per_hour_to_per_second(q: f64) -> f64 {
    q / SECONDS_PER_HOUR
}

pub fn per_meter_to_per_mile(rho: f64) -> f64 {
    rho * METERS_PER_MILE
}

pub fn per_mile_to_per_meter(rho: f64) -> f64 {
    rho / METERS_PER_MILE
}
