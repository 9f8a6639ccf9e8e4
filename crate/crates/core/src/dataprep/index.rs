use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::TripRecord;

/// The closest previous bus's pass over one section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrevPass {
    pub trip_id: u64,
    pub travel_time: f64,
    pub entry_time: f64,
}

/// Exhaustive scan: among trips entering section `n` strictly before `t_c`,
/// the latest entry; ties go to the larger trip id.
pub fn closest_prev_trip_at_section(day_trips: &[TripRecord], n: usize, t_c: f64) -> Option<PrevPass> {
    let mut best: Option<PrevPass> = None;
    for t in day_trips {
        if n == 0 || n > t.n_sections() {
            continue;
        }
        let e = t.entry(n);
        if e >= t_c {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => e > b.entry_time || (e == b.entry_time && t.trip_id > b.trip_id),
        };
        if better {
            best = Some(PrevPass {
                trip_id: t.trip_id,
                travel_time: t.travel(n),
                entry_time: e,
            });
        }
    }
    best
}

/// Exhaustive scan for the same-weekday trip exactly seven days before `day`
/// whose start time is closest to `start_time`. Ties go to the earlier start,
/// then the smaller trip id.
pub fn closest_prev_week_trip(history: &[TripRecord], weekday: u8, start_time: f64, day: u32) -> Option<&TripRecord> {
    let target = day.checked_sub(7)?;
    history
        .iter()
        .filter(|t| t.day == target && t.weekday == weekday)
        .min_by(|a, b| week_key(a, start_time).partial_cmp(&week_key(b, start_time)).unwrap())
}

fn week_key(t: &TripRecord, start: f64) -> (f64, f64, u64) {
    ((t.start_time() - start).abs(), t.start_time(), t.trip_id)
}

#[derive(Debug, Clone, Copy)]
struct Pass {
    entry: f64,
    trip_id: u64,
    travel: f64,
}

/// Per-day index: for every section, passes sorted by `(entry, trip_id)`, and
/// trip start times sorted for previous-week lookups.
#[derive(Debug)]
pub struct DayIndex {
    sections: Vec<Vec<Pass>>,
    starts: Vec<(f64, u64, usize)>,
    probes: AtomicU64,
}

impl DayIndex {
    pub fn new(day_trips: &[TripRecord]) -> Self {
        let n_sections = day_trips.iter().map(|t| t.n_sections()).max().unwrap_or(0);
        let mut sections: Vec<Vec<Pass>> = vec![Vec::with_capacity(day_trips.len()); n_sections];
        for t in day_trips {
            for n in 1..=t.n_sections() {
                sections[n - 1].push(Pass {
                    entry: t.entry(n),
                    trip_id: t.trip_id,
                    travel: t.travel(n),
                });
            }
        }
        for s in &mut sections {
            s.sort_by(|a, b| a.entry.total_cmp(&b.entry).then(a.trip_id.cmp(&b.trip_id)));
        }
        let mut starts: Vec<(f64, u64, usize)> = day_trips.iter().enumerate().map(|(i, t)| (t.start_time(), t.trip_id, i)).collect();
        starts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Self {
            sections,
            starts,
            probes: AtomicU64::new(0),
        }
    }

    /// Binary-search version of [`closest_prev_trip_at_section`].
    pub fn closest_prev(&self, n: usize, t_c: f64) -> Option<PrevPass> {
        let passes = self.sections.get(n.checked_sub(1)?)?;
        let mut probes = 0u64;
        let k = passes.partition_point(|p| {
            probes += 1;
            p.entry < t_c
        });
        self.probes.fetch_add(probes, Ordering::Relaxed);
        let p = passes.get(k.checked_sub(1)?)?;
        Some(PrevPass {
            trip_id: p.trip_id,
            travel_time: p.travel,
            entry_time: p.entry,
        })
    }

    /// Position in the day's trip list of the trip whose start is closest to
    /// `start_time` (ties: earlier start, then smaller id).
    pub fn closest_start(&self, start_time: f64) -> Option<usize> {
        let mut probes = 0u64;
        let k = self.starts.partition_point(|s| {
            probes += 1;
            s.0 < start_time
        });
        self.probes.fetch_add(probes, Ordering::Relaxed);
        // Candidates: the last start below, and the first start at or above.
        // Among equal earlier starts the smallest id wins.
        let below = k.checked_sub(1).map(|i| self.first_with_start(i));
        let above = self.starts.get(k).copied();
        let pick = match (below, above) {
            (None, None) => return None,
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (Some(b), Some(a)) => {
                if (start_time - b.0) <= (a.0 - start_time) {
                    b
                } else {
                    a
                }
            }
        };
        Some(pick.2)
    }

    fn first_with_start(&self, mut i: usize) -> (f64, u64, usize) {
        let s = self.starts[i].0;
        while i > 0 && self.starts[i - 1].0 == s {
            i -= 1;
        }
        self.starts[i]
    }

    /// Total comparisons performed by searches so far.
    pub fn probes(&self) -> u64 {
        self.probes.load(Ordering::Relaxed)
    }

    pub fn reset_probes(&self) {
        self.probes.store(0, Ordering::Relaxed);
    }
}

/// Immutable, day-grouped trip collection with per-day indexes.
#[derive(Debug)]
pub struct TripStore {
    days: BTreeMap<u32, (Vec<TripRecord>, DayIndex)>,
}

impl TripStore {
    pub fn new(trips: impl IntoIterator<Item = TripRecord>) -> Self {
        let mut grouped: BTreeMap<u32, Vec<TripRecord>> = BTreeMap::new();
        for t in trips {
            grouped.entry(t.day).or_default().push(t);
        }
        let days = grouped
            .into_iter()
            .map(|(d, mut v)| {
                v.sort_by(|a, b| a.start_time().total_cmp(&b.start_time()).then(a.trip_id.cmp(&b.trip_id)));
                let idx = DayIndex::new(&v);
                (d, (v, idx))
            })
            .collect();
        Self { days }
    }

    pub fn day(&self, day: u32) -> &[TripRecord] {
        self.days.get(&day).map_or(&[], |(v, _)| v.as_slice())
    }

    pub fn day_index(&self, day: u32) -> Option<&DayIndex> {
        self.days.get(&day).map(|(_, i)| i)
    }

    pub fn days(&self) -> impl Iterator<Item = u32> + '_ {
        self.days.keys().copied()
    }

    pub fn trips(&self) -> impl Iterator<Item = &TripRecord> {
        self.days.values().flat_map(|(v, _)| v.iter())
    }

    pub fn len(&self) -> usize {
        self.days.values().map(|(v, _)| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn find(&self, trip_id: u64) -> Option<&TripRecord> {
        self.trips().find(|t| t.trip_id == trip_id)
    }

    /// Indexed previous-week lookup.
    pub fn prev_week_trip(&self, weekday: u8, start_time: f64, day: u32) -> Option<&TripRecord> {
        let target = day.checked_sub(7)?;
        let (trips, idx) = self.days.get(&target)?;
        if trips.first().is_some_and(|t| t.weekday != weekday) {
            return None;
        }
        idx.closest_start(start_time).map(|i| &trips[i])
    }

    pub fn total_probes(&self) -> u64 {
        self.days.values().map(|(_, i)| i.probes()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    fn trip(id: u64, day: u32, start: f64, z: &[f64]) -> TripRecord {
        TripRecord::from_travel_times(id, day, (day % 7) as u8, start, z.to_vec())
    }

    #[test]
    fn picks_most_recent_entry() {
        let trips = vec![trip(1, 0, 9.0 * 3600.0, &[60.0; 4]), trip(2, 0, 9.0 * 3600.0 + 1200.0, &[60.0; 4])];
        let got = closest_prev_trip_at_section(&trips, 1, 9.5 * 3600.0).unwrap();
        assert_eq!(got.trip_id, 2);
        assert!(closest_prev_trip_at_section(&trips, 1, 8.0 * 3600.0).is_none());
        let idx = DayIndex::new(&trips);
        assert_eq!(idx.closest_prev(1, 9.5 * 3600.0).unwrap().trip_id, 2);
        assert!(idx.closest_prev(1, 8.0 * 3600.0).is_none());
        assert!(idx.closest_prev(1, 9.0 * 3600.0).is_none(), "strictly before");
    }

    #[test]
    fn ties_go_to_larger_trip_id() {
        let trips = vec![trip(7, 0, 100.0, &[10.0; 4]), trip(3, 0, 100.0, &[20.0; 4])];
        assert_eq!(closest_prev_trip_at_section(&trips, 1, 200.0).unwrap().trip_id, 7);
        assert_eq!(DayIndex::new(&trips).closest_prev(1, 200.0).unwrap().trip_id, 7);
    }

    #[test]
    fn prev_week_closest_start() {
        let hist = vec![trip(1, 0, 8.0 * 3600.0, &[60.0; 4]), trip(2, 0, 9.0 * 3600.0, &[60.0; 4])];
        let got = closest_prev_week_trip(&hist, 0, 8.0 * 3600.0 + 40.0 * 60.0, 7).unwrap();
        assert_eq!(got.trip_id, 2);
        assert!(closest_prev_week_trip(&hist, 0, 8.5 * 3600.0, 8).is_none());
        assert!(closest_prev_week_trip(&[], 0, 0.0, 7).is_none());
        // equidistant: earlier trip wins
        assert_eq!(closest_prev_week_trip(&hist, 0, 8.5 * 3600.0, 7).unwrap().trip_id, 1);
        let store = TripStore::new(hist.clone());
        assert_eq!(store.prev_week_trip(0, 8.5 * 3600.0, 7).unwrap().trip_id, 1);
        assert_eq!(store.prev_week_trip(0, 8.0 * 3600.0 + 2400.0, 7).unwrap().trip_id, 2);
        assert!(store.prev_week_trip(0, 0.0, 3).is_none());
    }

    /// Trips with heavy dispatch jitter so that buses overtake each other.
    fn bunched_day(rng: &mut Rng, day: u32, n_trips: usize, n_sections: usize) -> Vec<TripRecord> {
        (0..n_trips)
            .map(|k| {
                let start = 6.0 * 3600.0 + k as f64 * 300.0 + rng.uniform(-600.0, 600.0);
                let z: Vec<f64> = (0..n_sections).map(|_| rng.uniform(30.0, 300.0)).collect();
                trip(day as u64 * 1000 + k as u64, day, start, &z)
            })
            .collect()
    }

    #[test]
    fn indexed_matches_scan_under_bunching() {
        let mut rng = Rng::new(123);
        let trips = bunched_day(&mut rng, 0, 50, 12);
        let idx = DayIndex::new(&trips);
        for _ in 0..200 {
            let n = 1 + rng.below(12);
            let t_c = rng.uniform(5.0 * 3600.0, 12.0 * 3600.0);
            assert_eq!(idx.closest_prev(n, t_c), closest_prev_trip_at_section(&trips, n, t_c));
        }
    }

    #[test]
    fn indexed_week_matches_scan() {
        let mut rng = Rng::new(5);
        let mut all = bunched_day(&mut rng, 0, 30, 4);
        all.extend(bunched_day(&mut rng, 7, 30, 4));
        let store = TripStore::new(all.clone());
        for _ in 0..500 {
            let start = rng.uniform(5.0 * 3600.0, 10.0 * 3600.0);
            let a = store.prev_week_trip(0, start, 7).map(|t| t.trip_id);
            let b = closest_prev_week_trip(&all, 0, start, 7).map(|t| t.trip_id);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn probes_grow_logarithmically() {
        let mut rng = Rng::new(9);
        let mut per_query = Vec::new();
        for &n in &[64usize, 1024, 16384] {
            let trips = bunched_day(&mut rng, 0, n, 2);
            let idx = DayIndex::new(&trips);
            let q = 1000;
            for _ in 0..q {
                idx.closest_prev(1, rng.uniform(5.0 * 3600.0, 30.0 * 3600.0));
            }
            let avg = idx.probes() as f64 / q as f64;
            assert!(avg <= (n as f64).log2() + 2.0, "n={n} avg={avg}");
            per_query.push(avg);
        }
        // 256x more trips costs only a few extra comparisons
        assert!(per_query[2] - per_query[0] < 10.0);
    }
}
