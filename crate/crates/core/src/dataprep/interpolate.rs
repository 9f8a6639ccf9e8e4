use serde::{Deserialize, Serialize};

use super::{RouteSpec, TripRecord, SECONDS_PER_DAY};
use crate::error::{Error, Result};

/// One projected AVL fix: timestamp (seconds from midnight of day 0) and
/// distance along the route in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsSample {
    pub t: f64,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedSample {
    pub index: usize,
    pub sample: GpsSample,
    pub reason: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedTrip {
    pub record: TripRecord,
    pub rejected: Vec<RejectedSample>,
}

/// Converts a GPS trace into section entry and travel times.
///
/// Samples that move backwards by more than `backtrack_tol_m` are dropped
/// and reported; smaller backward jitter is clamped to the running maximum.
/// Each boundary crossing time is interpolated linearly between the two
/// samples that bracket it. The trip belongs to the day of its first sample.
pub fn interpolate_trip(trip_id: u64, trace: &[GpsSample], route: &RouteSpec, backtrack_tol_m: f64) -> Result<InterpolatedTrip> {
    route.validate()?;
    let mut rejected = Vec::new();
    let mut kept: Vec<GpsSample> = Vec::with_capacity(trace.len());
    let mut max_d = f64::NEG_INFINITY;
    for (index, s) in trace.iter().enumerate() {
        if !s.t.is_finite() || !s.d.is_finite() {
            rejected.push(RejectedSample {
                index,
                sample: *s,
                reason: "non_finite",
            });
            continue;
        }
        if kept.last().is_some_and(|p| s.t <= p.t) {
            rejected.push(RejectedSample {
                index,
                sample: *s,
                reason: "non_increasing_time",
            });
            continue;
        }
        if s.d < max_d - backtrack_tol_m {
            rejected.push(RejectedSample {
                index,
                sample: *s,
                reason: "backtrack",
            });
            continue;
        }
        max_d = max_d.max(s.d);
        kept.push(GpsSample { t: s.t, d: max_d });
    }

    let total = route.length_m();
    let (first, last) = match (kept.first(), kept.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(Error::Data(format!("trip {trip_id}: no usable GPS samples"))),
    };
    if first.d > 0.0 || last.d < total {
        return Err(Error::Data(format!(
            "trip {trip_id}: partial trip, trace covers {:.1} m to {:.1} m of a {total:.1} m route",
            first.d, last.d
        )));
    }

    let day = (first.t / SECONDS_PER_DAY).floor();
    let midnight = day * SECONDS_PER_DAY;
    let mut crossings = Vec::with_capacity(route.n_sections + 1);
    let mut j = 0;
    for b in 0..=route.n_sections {
        let boundary = b as f64 * route.section_length_m;
        while kept[j].d < boundary {
            j += 1;
        }
        let t = if j == 0 || kept[j].d == boundary {
            kept[j].t
        } else {
            let (p, q) = (kept[j - 1], kept[j]);
            p.t + (boundary - p.d) / (q.d - p.d) * (q.t - p.t)
        };
        crossings.push(t - midnight);
    }
    let travel: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
    let record = TripRecord {
        trip_id,
        day: day as u32,
        weekday: (day as u32 % 7) as u8,
        entry_times: crossings[..route.n_sections].to_vec(),
        travel_times: travel,
    };
    record.validate(1e-6)?;
    Ok(InterpolatedTrip { record, rejected })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn route4() -> RouteSpec {
        RouteSpec {
            n_sections: 4,
            section_length_m: 800.0,
        }
    }

    #[test]
    fn constant_speed() {
        let v = 8.0;
        let trace: Vec<GpsSample> = (0..=50)
            .map(|k| GpsSample {
                t: 3600.0 + 10.0 * k as f64,
                d: v * 10.0 * k as f64,
            })
            .collect();
        let out = interpolate_trip(1, &trace, &route4(), 5.0).unwrap();
        for z in &out.record.travel_times {
            assert!((z - 100.0).abs() < 1e-9);
        }
        assert_eq!(out.record.entry_times[0], 3600.0);
        assert!(out.rejected.is_empty());
    }

    #[test]
    fn samples_on_boundaries() {
        let trace: Vec<GpsSample> = [0.0, 800.0, 1600.0, 2400.0, 3200.0]
            .iter()
            .zip([100.0, 170.0, 260.0, 300.0, 420.0])
            .map(|(&d, t)| GpsSample { t, d })
            .collect();
        let out = interpolate_trip(1, &trace, &route4(), 5.0).unwrap();
        assert_eq!(out.record.entry_times, vec![100.0, 170.0, 260.0, 300.0]);
        assert_eq!(out.record.travel_times, vec![70.0, 90.0, 40.0, 120.0]);
    }

    #[test]
    fn two_speed_trace_by_hand() {
        // 10 m/s for 100 s (1000 m), then 4 m/s; samples every 50 s.
        let pos = |t: f64| if t <= 100.0 { 10.0 * t } else { 1000.0 + 4.0 * (t - 100.0) };
        let trace: Vec<GpsSample> = (0..=16).map(|k| 50.0 * k as f64).map(|t| GpsSample { t, d: pos(t) }).collect();
        let out = interpolate_trip(1, &trace, &route4(), 5.0).unwrap();
        // 800 m at 80 s, then 1600/2400/3200 m at 250/450/650 s
        assert_eq!(out.record.entry_times, vec![0.0, 80.0, 250.0, 450.0]);
        assert_eq!(out.record.travel_times, vec![80.0, 170.0, 200.0, 200.0]);
    }

    #[test]
    fn partial_and_backtracking() {
        let trace = vec![GpsSample { t: 0.0, d: 0.0 }, GpsSample { t: 10.0, d: 1000.0 }];
        assert!(interpolate_trip(1, &trace, &route4(), 5.0).is_err());
        let trace = vec![
            GpsSample { t: 0.0, d: 0.0 },
            GpsSample { t: 100.0, d: 1600.0 },
            GpsSample { t: 110.0, d: 1000.0 },
            GpsSample { t: 120.0, d: 1598.0 },
            GpsSample { t: 300.0, d: 3200.0 },
        ];
        let out = interpolate_trip(1, &trace, &route4(), 5.0).unwrap();
        assert_eq!(out.rejected.len(), 1);
        assert_eq!(out.rejected[0].index, 2);
        assert_eq!(out.record.n_sections(), 4);
    }

    #[test]
    fn day_assignment() {
        let trace = vec![
            GpsSample {
                t: 86_400.0 * 8.0 + 100.0,
                d: 0.0,
            },
            GpsSample {
                t: 86_400.0 * 8.0 + 500.0,
                d: 3200.0,
            },
        ];
        let r = interpolate_trip(3, &trace, &route4(), 5.0).unwrap().record;
        assert_eq!((r.day, r.weekday), (8, 1));
        assert_eq!(r.entry_times[0], 100.0);
    }
}
