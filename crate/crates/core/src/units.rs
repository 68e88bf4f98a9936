//! Unit conversions. Every W/kW/MW or per-year conversion goes through here.

/// Hours per year used for all yearly rate conversions (lifetimes, demand charge).
pub const HOURS_PER_YEAR: f64 = 8760.0;

const W_PER_MW: f64 = 1.0e6;
const W_PER_KW: f64 = 1.0e3;

#[inline]
pub fn watts_to_megawatts(w: f64) -> f64 {
    w / W_PER_MW
}

#[inline]
pub fn watts_to_kilowatts(w: f64) -> f64 {
    w / W_PER_KW
}

/// Converts a rate expressed per year into the equivalent amount for `hours`.
#[inline]
pub fn yearly_to_period(rate_per_year: f64, hours: f64) -> f64 {
    rate_per_year * hours / HOURS_PER_YEAR
}
