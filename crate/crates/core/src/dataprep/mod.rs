//! Trip storage, closest-previous-bus and previous-week searches, and the
//! construction of training examples.

mod build;
mod index;
mod interpolate;
pub mod io;
mod normalize;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seq2seq::QueryInputs;

pub use build::{build_examples, build_query, BuildOptions, BuildOutput, MissingPrevBus, SkipReason, SkipRecord};
pub use index::{closest_prev_trip_at_section, closest_prev_week_trip, DayIndex, PrevPass, TripStore};
pub use interpolate::{interpolate_trip, GpsSample, InterpolatedTrip, RejectedSample};
pub use normalize::fit_normalizer;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Uniformly segmented route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouteSpec {
    pub n_sections: usize,
    pub section_length_m: f64,
}

impl Default for RouteSpec {
    fn default() -> Self {
        Self {
            n_sections: 34,
            section_length_m: 800.0,
        }
    }
}

impl RouteSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_sections < 4 {
            return Err(Error::Usage(format!("route needs at least 4 sections, got {}", self.n_sections)));
        }
        if !(self.section_length_m > 0.0) {
            return Err(Error::Usage(format!(
                "section length must be positive, got {}",
                self.section_length_m
            )));
        }
        Ok(())
    }

    pub fn length_m(&self) -> f64 {
        self.n_sections as f64 * self.section_length_m
    }
}

/// One bus trip. Index `k` of each vector is section `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub trip_id: u64,
    /// Calendar day counted from the first Monday of the dataset.
    pub day: u32,
    /// 0 = Monday ... 6 = Sunday.
    pub weekday: u8,
    /// Section entry times, seconds since midnight.
    pub entry_times: Vec<f64>,
    /// Section travel times in seconds, dwell included.
    pub travel_times: Vec<f64>,
}

impl TripRecord {
    /// Builds a chain-consistent record from a start time and travel times.
    pub fn from_travel_times(trip_id: u64, day: u32, weekday: u8, start: f64, travel_times: Vec<f64>) -> Self {
        let mut t = start;
        let entry_times = travel_times
            .iter()
            .map(|z| {
                let e = t;
                t += z;
                e
            })
            .collect();
        Self {
            trip_id,
            day,
            weekday,
            entry_times,
            travel_times,
        }
    }

    pub fn n_sections(&self) -> usize {
        self.travel_times.len()
    }

    pub fn start_time(&self) -> f64 {
        self.entry_times[0]
    }

    /// Entry time into 1-based section `n`.
    pub fn entry(&self, n: usize) -> f64 {
        self.entry_times[n - 1]
    }

    /// Travel time over 1-based section `n`.
    pub fn travel(&self, n: usize) -> f64 {
        self.travel_times[n - 1]
    }

    pub fn week(&self) -> u32 {
        self.day / 7
    }

    /// Checks positivity, monotonicity and `T^e_{n+1} = T^e_n + Z_n` within `tol` seconds.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let bad = |msg: String| Err(Error::Data(format!("trip {}: {msg}", self.trip_id)));
        if self.entry_times.len() != self.travel_times.len() || self.travel_times.is_empty() {
            return bad("entry and travel time vectors differ in length or are empty".into());
        }
        if self.weekday > 6 {
            return bad(format!("weekday {} out of range", self.weekday));
        }
        for (k, &z) in self.travel_times.iter().enumerate() {
            if !(z > 0.0) || !z.is_finite() {
                return bad(format!("section {} travel time {z} is not positive", k + 1));
            }
        }
        for k in 0..self.entry_times.len() {
            let e = self.entry_times[k];
            if !e.is_finite() || e < 0.0 {
                return bad(format!("section {} entry time {e} invalid", k + 1));
            }
            if k + 1 < self.entry_times.len() {
                let next = self.entry_times[k + 1];
                if next <= e {
                    return bad(format!("entry times not increasing at section {}", k + 2));
                }
                if (e + self.travel_times[k] - next).abs() > tol {
                    return bad(format!("chain inconsistency at section {}", k + 2));
                }
            }
        }
        Ok(())
    }
}

/// Which trips supplied each decoder input of an example.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub trip_id: u64,
    pub day: u32,
    pub weekday: u8,
    /// Closest previous bus per downstream section; `None` where the
    /// previous-week value was substituted.
    pub prev_bus_trip_ids: Vec<Option<u64>>,
    pub prev_week_trip_id: u64,
}

/// One `(trip, m)` snapshot with targets `Z_{m+1} ..= Z_{N_s}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub inputs: QueryInputs,
    pub targets: Vec<f64>,
    pub provenance: Provenance,
}
