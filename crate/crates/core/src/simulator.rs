//! Synthetic AVL generator: headway-dispatched trips over a segmented route,
//! time-of-day peaks, weekday multipliers, lognormal noise and congestion
//! events whose front moves upstream from their origin section.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataprep::{RouteSpec, TripRecord};
use crate::error::{Error, Result};
use crate::numkit::Rng;

/// Gaussian bump of the time-of-day multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakBump {
    pub center_s: f64,
    pub width_s: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Filled from the run configuration's route.
    #[serde(skip)]
    pub route: RouteSpec,
    pub weeks: u32,
    pub trips_per_day: usize,
    pub first_dispatch_s: f64,
    pub headway_mean_s: f64,
    /// Dispatch offsets are uniform in `[-jitter, +jitter]` around the timetable.
    pub headway_jitter_s: f64,
    /// Free-flow travel time used when `base_profile_s` is empty.
    pub base_section_s: f64,
    /// Explicit per-section free-flow travel times; length must equal the section count.
    pub base_profile_s: Vec<f64>,
    pub peaks: Vec<PeakBump>,
    /// Monday to Saturday. Sundays carry no service.
    pub weekday_multipliers: [f64; 6],
    pub events_per_day: f64,
    /// Lowest section an event may originate in.
    pub event_origin_min: usize,
    pub event_duration_s: [f64; 2],
    pub event_severity: [f64; 2],
    /// Sections per minute.
    pub event_upstream_speed: [f64; 2],
    /// Per-section attenuation of the slowdown away from the origin.
    pub event_decay: f64,
    pub noise_cv: f64,
    /// Filled from the run configuration's master seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            route: RouteSpec::default(),
            weeks: 8,
            trips_per_day: 40,
            first_dispatch_s: 6.0 * 3600.0,
            headway_mean_s: 1200.0,
            headway_jitter_s: 300.0,
            base_section_s: 110.0,
            base_profile_s: Vec::new(),
            peaks: vec![
                PeakBump {
                    center_s: 8.5 * 3600.0,
                    width_s: 3600.0,
                    amplitude: 0.4,
                },
                PeakBump {
                    center_s: 18.0 * 3600.0,
                    width_s: 4300.0,
                    amplitude: 0.5,
                },
            ],
            weekday_multipliers: [1.0, 0.97, 0.98, 1.0, 1.08, 0.9],
            events_per_day: 6.0,
            event_origin_min: 8,
            event_duration_s: [1800.0, 5400.0],
            event_severity: [1.6, 3.0],
            event_upstream_speed: [0.1, 0.3],
            event_decay: 0.97,
            noise_cv: 0.08,
            seed: 2024,
        }
    }
}

fn check_range(name: &str, r: [f64; 2], strictly_positive: bool) -> Result<()> {
    let ok = r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] && if strictly_positive { r[0] > 0.0 } else { r[0] >= 0.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::Usage(format!("simulator.{name} must be a finite ordered range, got {r:?}")))
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.route.validate()?;
        let usage = |m: String| Err(Error::Usage(format!("simulator.{m}")));
        if self.weeks < 1 {
            return usage("weeks must be at least 1".into());
        }
        if self.trips_per_day == 0 {
            return usage("trips_per_day must be positive".into());
        }
        for (name, v) in [
            ("first_dispatch_s", self.first_dispatch_s),
            ("headway_mean_s", self.headway_mean_s),
            ("base_section_s", self.base_section_s),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return usage(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.headway_jitter_s >= 0.0 && self.headway_jitter_s < self.headway_mean_s.min(self.first_dispatch_s)) {
            return usage(format!(
                "headway_jitter_s must be in [0, headway_mean_s), got {}",
                self.headway_jitter_s
            ));
        }
        if !self.base_profile_s.is_empty() {
            if self.base_profile_s.len() != self.route.n_sections {
                return usage(format!(
                    "base_profile_s has {} entries, route has {} sections",
                    self.base_profile_s.len(),
                    self.route.n_sections
                ));
            }
            if self.base_profile_s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return usage("base_profile_s entries must be positive".into());
            }
        }
        for p in &self.peaks {
            if !(p.width_s > 0.0 && p.amplitude >= 0.0 && p.center_s.is_finite()) {
                return usage(format!("peaks need positive width and nonnegative amplitude, got {p:?}"));
            }
        }
        if self.weekday_multipliers.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return usage("weekday_multipliers must be positive".into());
        }
        if !(self.events_per_day >= 0.0 && self.events_per_day.is_finite()) {
            return usage("events_per_day must be nonnegative".into());
        }
        if self.event_origin_min < 1 || self.event_origin_min > self.route.n_sections {
            return usage(format!("event_origin_min must be within 1..={}", self.route.n_sections));
        }
        check_range("event_duration_s", self.event_duration_s, true)?;
        check_range("event_upstream_speed", self.event_upstream_speed, true)?;
        check_range("event_severity", self.event_severity, true)?;
        if self.event_severity[0] < 1.0 {
            return usage("event_severity must be at least 1".into());
        }
        if !(self.event_decay > 0.0 && self.event_decay <= 1.0) {
            return usage(format!("event_decay must be in (0, 1], got {}", self.event_decay));
        }
        if !(self.noise_cv >= 0.0 && self.noise_cv.is_finite()) {
            return usage("noise_cv must be nonnegative".into());
        }
        Ok(())
    }

    /// Free-flow travel time of each section, index 0 = section 1.
    pub fn base_profile(&self) -> Vec<f64> {
        if !self.base_profile_s.is_empty() {
            return self.base_profile_s.clone();
        }
        (1..=self.route.n_sections)
            .map(|n| self.base_section_s * (1.0 + 0.2 * (1.3 * n as f64).sin()))
            .collect()
    }

    pub fn peak_multiplier(&self, t: f64) -> f64 {
        1.0 + self
            .peaks
            .iter()
            .map(|p| p.amplitude * (-0.5 * ((t - p.center_s) / p.width_s).powi(2)).exp())
            .sum::<f64>()
    }

    /// Calendar days with service: Monday to Saturday of every week.
    pub fn service_days(&self) -> Vec<(u32, u8)> {
        (0..self.weeks)
            .flat_map(|w| (0..6u8).map(move |wd| (w * 7 + wd as u32, wd)))
            .collect()
    }
}

/// A slowdown that starts at `origin_section` and spreads upstream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CongestionEvent {
    pub day: u32,
    pub origin_section: usize,
    pub onset_s: f64,
    pub duration_s: f64,
    pub severity: f64,
    /// Sections per minute.
    pub upstream_speed: f64,
}

impl CongestionEvent {
    /// Travel-time multiplier for entering section `n` at time `t` (same day).
    pub fn factor(&self, n: usize, t: f64, decay: f64) -> f64 {
        if n > self.origin_section || t < self.onset_s || t > self.onset_s + self.duration_s {
            return 1.0;
        }
        let k = (self.origin_section - n) as f64;
        if k > self.upstream_speed * (t - self.onset_s) / 60.0 {
            return 1.0;
        }
        1.0 + (self.severity - 1.0) * decay.powf(k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub trips: Vec<TripRecord>,
    pub events: Vec<CongestionEvent>,
}

const STREAM_DISPATCH: u64 = 1;
const STREAM_EVENTS: u64 = 2;
const STREAM_NOISE: u64 = 3;

fn day_events(cfg: &SimConfig, root: &Rng, day: u32) -> Vec<CongestionEvent> {
    let mut rng = root.derive(&[STREAM_EVENTS, day as u64]);
    let count = rng.poisson(cfg.events_per_day);
    let window = cfg.headway_mean_s * cfg.trips_per_day as f64;
    let origins = cfg.route.n_sections - cfg.event_origin_min + 1;
    (0..count)
        .map(|_| CongestionEvent {
            day,
            origin_section: cfg.event_origin_min + rng.below(origins),
            onset_s: cfg.first_dispatch_s + rng.uniform(0.0, window),
            duration_s: rng.uniform(cfg.event_duration_s[0], cfg.event_duration_s[1]),
            severity: rng.uniform(cfg.event_severity[0], cfg.event_severity[1]),
            upstream_speed: rng.uniform(cfg.event_upstream_speed[0], cfg.event_upstream_speed[1]),
        })
        .collect()
}

fn day_trips(cfg: &SimConfig, root: &Rng, day: u32, weekday: u8, ordinal: usize, events: &[CongestionEvent]) -> Vec<TripRecord> {
    let base = cfg.base_profile();
    let wmult = cfg.weekday_multipliers[weekday as usize];
    let sigma2 = (1.0 + cfg.noise_cv * cfg.noise_cv).ln();
    let (sigma, mu) = (sigma2.sqrt(), -0.5 * sigma2);
    let mut dispatch = root.derive(&[STREAM_DISPATCH, day as u64]);
    (0..cfg.trips_per_day)
        .map(|k| {
            let jitter = dispatch.uniform(-cfg.headway_jitter_s, cfg.headway_jitter_s);
            let start = cfg.first_dispatch_s + k as f64 * cfg.headway_mean_s + jitter;
            let mut noise = root.derive(&[STREAM_NOISE, day as u64, k as u64]);
            let mut t = start;
            let mut entry = Vec::with_capacity(base.len());
            let mut travel = Vec::with_capacity(base.len());
            for (i, b) in base.iter().enumerate() {
                let n = i + 1;
                let eps = (mu + sigma * noise.normal()).exp();
                let ev: f64 = events.iter().map(|e| e.factor(n, t, cfg.event_decay)).product();
                let z = b * cfg.peak_multiplier(t) * wmult * ev * eps;
                entry.push(t);
                travel.push(z);
                t += z;
            }
            TripRecord {
                trip_id: (ordinal * cfg.trips_per_day + k) as u64,
                day,
                weekday,
                entry_times: entry,
                travel_times: travel,
            }
        })
        .collect()
}

/// Generates every trip and the ground-truth event log. Identical configs
/// give bit-identical output regardless of thread count.
pub fn simulate_dataset(cfg: &SimConfig) -> Result<SimDataset> {
    cfg.validate()?;
    let root = Rng::new(cfg.seed);
    let days = cfg.service_days();
    let per_day: Vec<(Vec<CongestionEvent>, Vec<TripRecord>)> = days
        .par_iter()
        .enumerate()
        .map(|(ordinal, &(day, wd))| {
            let events = day_events(cfg, &root, day);
            let trips = day_trips(cfg, &root, day, wd, ordinal, &events);
            (events, trips)
        })
        .collect();
    let mut out = SimDataset {
        trips: Vec::new(),
        events: Vec::new(),
    };
    for (e, t) in per_day {
        out.events.extend(e);
        out.trips.extend(t);
    }
    Ok(out)
}

/// Regenerates the trips with the same dispatch and noise streams but no events.
pub fn simulate_without_events(cfg: &SimConfig) -> Result<Vec<TripRecord>> {
    cfg.validate()?;
    let root = Rng::new(cfg.seed);
    Ok(cfg
        .service_days()
        .par_iter()
        .enumerate()
        .flat_map_iter(|(ordinal, &(day, wd))| day_trips(cfg, &root, day, wd, ordinal, &[]))
        .collect())
}

/// Splits by calendar week: everything before the last week trains, the last week tests.
pub fn split_train_test(trips: &[TripRecord], weeks: u32) -> Result<(Vec<TripRecord>, Vec<TripRecord>)> {
    if weeks < 2 {
        return Err(Error::Usage(format!("a train/test split needs at least 2 weeks, got {weeks}")));
    }
    let last = weeks - 1;
    if let Some(t) = trips.iter().find(|t| t.week() > last) {
        return Err(Error::Data(format!(
            "trip {} lies in week {}, beyond the {weeks} configured",
            t.trip_id,
            t.week()
        )));
    }
    Ok(trips.iter().cloned().partition(|t| t.week() < last))
}

pub const EVENTS_CSV_HEADER: &str = "day,origin_section,onset_s,duration_s,severity,upstream_speed";

pub fn write_events_csv<W: Write>(w: W, events: &[CongestionEvent]) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    if events.is_empty() {
        wr.write_record(EVENTS_CSV_HEADER.split(','))?;
    }
    for e in events {
        wr.serialize(e)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(weeks: u32) -> SimConfig {
        SimConfig {
            weeks,
            trips_per_day: 10,
            peaks: Vec::new(),
            weekday_multipliers: [1.0; 6],
            events_per_day: 0.0,
            noise_cv: 0.0,
            ..SimConfig::default()
        }
    }

    #[test]
    fn no_noise_no_events_gives_base_profile() {
        let cfg = quiet(2);
        let ds = simulate_dataset(&cfg).unwrap();
        assert_eq!(ds.trips.len(), 2 * 6 * 10);
        let base = cfg.base_profile();
        for t in &ds.trips {
            assert_eq!(t.travel_times, base);
            t.validate(1e-6).unwrap();
            assert_ne!(t.weekday, 6);
        }
    }

    #[test]
    fn event_doubles_origin_section() {
        let e = CongestionEvent {
            day: 0,
            origin_section: 10,
            onset_s: 1000.0,
            duration_s: 600.0,
            severity: 2.0,
            upstream_speed: 0.5,
        };
        assert_eq!(e.factor(10, 1000.0, 0.9), 2.0);
        assert_eq!(e.factor(10, 999.0, 0.9), 1.0);
        assert_eq!(e.factor(10, 1601.0, 0.9), 1.0);
        assert_eq!(e.factor(11, 1200.0, 0.9), 1.0);
        // front reaches one section upstream after two minutes
        assert_eq!(e.factor(9, 1119.0, 0.9), 1.0);
        assert!((e.factor(9, 1120.0, 0.9) - 1.9).abs() < 1e-12);

        // full-trip check against the event-free counterfactual
        let cfg = SimConfig {
            events_per_day: 4.0,
            ..quiet(1)
        };
        let ds = simulate_dataset(&cfg).unwrap();
        let calm = simulate_without_events(&cfg).unwrap();
        let mut hits = 0;
        for (a, b) in ds.trips.iter().zip(&calm) {
            for n in 1..=a.n_sections() {
                let f: f64 = ds
                    .events
                    .iter()
                    .filter(|e| e.day == a.day)
                    .map(|e| e.factor(n, a.entry(n), cfg.event_decay))
                    .product();
                if f == 1.0 && a.entry(n) == b.entry(n) {
                    assert_eq!(a.travel(n), b.travel(n));
                }
                if let Some(e) = ds
                    .events
                    .iter()
                    .find(|e| e.day == a.day && e.origin_section == n && e.factor(n, a.entry(n), 1.0) > 1.0)
                {
                    if a.entry(n) == b.entry(n) && f == e.severity {
                        assert!((a.travel(n) / b.travel(n) - e.severity).abs() < 1e-12);
                        hits += 1;
                    }
                }
            }
        }
        assert!(hits > 0);
    }

    #[test]
    fn sections_upstream_of_the_front_are_untouched() {
        let cfg = SimConfig {
            noise_cv: 0.1,
            events_per_day: 5.0,
            ..quiet(1)
        };
        let ds = simulate_dataset(&cfg).unwrap();
        let calm = simulate_without_events(&cfg).unwrap();
        for (a, b) in ds.trips.iter().zip(&calm) {
            let reached = ds
                .events
                .iter()
                .filter(|e| e.day == a.day)
                .map(|e| {
                    e.origin_section
                        .saturating_sub((e.upstream_speed * e.duration_s / 60.0).floor() as usize)
                })
                .min()
                .unwrap_or(usize::MAX);
            for n in 1..reached.min(a.n_sections() + 1) {
                assert_eq!(a.travel(n), b.travel(n), "trip {} section {n}", a.trip_id);
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = SimConfig {
            weeks: 2,
            ..SimConfig::default()
        };
        assert_eq!(simulate_dataset(&cfg).unwrap(), simulate_dataset(&cfg).unwrap());
        let other = SimConfig { seed: 7, ..cfg.clone() };
        assert_ne!(simulate_dataset(&cfg).unwrap().trips, simulate_dataset(&other).unwrap().trips);
    }

    fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    // previous bus's downstream times against the next bus's upstream time
    fn downstream_correlation(trips: &[TripRecord], base: &[f64]) -> f64 {
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for w in trips.windows(2) {
            let (prev, cur) = (&w[0], &w[1]);
            if prev.day != cur.day {
                continue;
            }
            for n in (5..28).step_by(4) {
                x.push((n + 3..=n + 6).map(|s| prev.travel(s) / base[s - 1]).sum::<f64>());
                y.push(cur.travel(n) / base[n - 1]);
            }
        }
        pearson(&x, &y)
    }

    #[test]
    fn events_create_downstream_to_upstream_correlation() {
        // flat time-of-day and weekday factors isolate the event mechanism
        let cfg = SimConfig {
            weeks: 2,
            peaks: Vec::new(),
            weekday_multipliers: [1.0; 6],
            ..SimConfig::default()
        };
        let base = cfg.base_profile();
        let with = downstream_correlation(&simulate_dataset(&cfg).unwrap().trips, &base);
        let without = downstream_correlation(&simulate_without_events(&cfg).unwrap(), &base);
        assert!(with > 0.0 && with > without, "with {with} without {without}");
    }

    #[test]
    fn weekday_means_follow_multipliers() {
        let mult = [1.0, 0.9, 1.1, 1.2, 0.8, 1.05];
        let cfg = SimConfig {
            weeks: 4,
            noise_cv: 0.15,
            weekday_multipliers: mult,
            ..quiet(4)
        };
        let ds = simulate_dataset(&cfg).unwrap();
        let base = cfg.base_profile();
        for wd in 0..6u8 {
            for n in [1usize, 17, 34] {
                let xs: Vec<f64> = ds.trips.iter().filter(|t| t.weekday == wd).map(|t| t.travel(n)).collect();
                let k = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / k;
                let sd = (xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
                let expect = base[n - 1] * mult[wd as usize];
                assert!(
                    (mean - expect).abs() <= 3.0 * sd / k.sqrt(),
                    "weekday {wd} section {n}: {mean} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn split_by_week() {
        let ds = simulate_dataset(&SimConfig {
            weeks: 8,
            trips_per_day: 2,
            ..SimConfig::default()
        })
        .unwrap();
        let (train, test) = split_train_test(&ds.trips, 8).unwrap();
        assert_eq!(train.len(), 7 * 6 * 2);
        assert_eq!(test.len(), 6 * 2);
        assert!(test.iter().all(|t| t.week() == 7));
        let mut all: Vec<u64> = train.iter().chain(&test).map(|t| t.trip_id).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), ds.trips.len());

        let two = simulate_dataset(&quiet(2)).unwrap();
        let (a, b) = split_train_test(&two.trips, 2).unwrap();
        assert_eq!((a.len(), b.len()), (60, 60));
        assert!(split_train_test(&two.trips, 1).is_err());
    }

    #[test]
    fn events_csv_header() {
        let mut buf = Vec::new();
        write_events_csv(
            &mut buf,
            &[CongestionEvent {
                day: 1,
                origin_section: 9,
                onset_s: 1.5,
                duration_s: 60.0,
                severity: 2.0,
                upstream_speed: 0.2,
            }],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, format!("{EVENTS_CSV_HEADER}\n1,9,1.5,60.0,2.0,0.2\n"));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(SimConfig {
            event_severity: [0.5, 2.0],
            ..SimConfig::default()
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            event_decay: 0.0,
            ..SimConfig::default()
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            base_profile_s: vec![1.0; 3],
            ..SimConfig::default()
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            trips_per_day: 0,
            ..SimConfig::default()
        }
        .validate()
        .is_err());
    }
}
