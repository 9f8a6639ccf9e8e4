use std::fmt;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::index::{closest_prev_trip_at_section, closest_prev_week_trip, PrevPass};
use super::{Provenance, RouteSpec, TrainingExample, TripRecord, TripStore};
use crate::error::{Error, Result};
use crate::seq2seq::{DecoderStepInput, EncoderStepInput, QueryInputs};

/// What to do when no bus traversed a downstream section before `T_c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPrevBus {
    /// Use the previous-week trip's travel and entry time for that section.
    #[default]
    Substitute,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildOptions {
    pub missing_prev_bus: MissingPrevBus,
    /// Use exhaustive scans instead of the per-day indexes.
    pub brute_force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    NoPrevWeekTrip,
    NoPrevBus,
    ShortTrip,
}

impl SkipReason {
    pub fn code(&self) -> &'static str {
        match self {
            SkipReason::NoPrevWeekTrip => "no_prev_week_trip",
            SkipReason::NoPrevBus => "no_prev_bus",
            SkipReason::ShortTrip => "short_trip",
        }
    }
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub trip_id: u64,
    pub day: u32,
    pub m: usize,
    pub reason: SkipReason,
    /// Section that triggered the skip, when there is one.
    pub section: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct BuildOutput {
    pub examples: Vec<TrainingExample>,
    pub skipped: Vec<SkipRecord>,
}

struct Lookup<'a> {
    store: &'a TripStore,
    all: Vec<TripRecord>,
    brute_force: bool,
}

impl Lookup<'_> {
    fn prev_bus(&self, day: u32, n: usize, t_c: f64) -> Option<PrevPass> {
        if self.brute_force {
            closest_prev_trip_at_section(self.store.day(day), n, t_c)
        } else {
            self.store.day_index(day)?.closest_prev(n, t_c)
        }
    }

    fn prev_week(&self, trip: &TripRecord) -> Option<&TripRecord> {
        if self.brute_force {
            closest_prev_week_trip(&self.all, trip.weekday, trip.start_time(), trip.day)
        } else {
            self.store.prev_week_trip(trip.weekday, trip.start_time(), trip.day)
        }
    }
}

/// Assembles the model inputs for `trip` at current position `m`.
///
/// `T_c` is the trip's entry time into section `m + 1`. The closest previous
/// bus is searched independently for every downstream section among all trips
/// of the same day; the current bus's own traversed sections never use
/// previous-bus values.
pub fn build_query(
    store: &TripStore,
    trip: &TripRecord,
    m: usize,
    missing: MissingPrevBus,
) -> std::result::Result<(QueryInputs, Provenance), (SkipReason, Option<usize>)> {
    let lookup = Lookup {
        store,
        all: Vec::new(),
        brute_force: false,
    };
    query_for(&lookup, trip, m, missing)
}

fn query_for(
    lookup: &Lookup<'_>,
    trip: &TripRecord,
    m: usize,
    missing: MissingPrevBus,
) -> std::result::Result<(QueryInputs, Provenance), (SkipReason, Option<usize>)> {
    let n_s = trip.n_sections();
    if m == 0 || m >= n_s {
        return Err((SkipReason::ShortTrip, None));
    }
    let pw = lookup.prev_week(trip).ok_or((SkipReason::NoPrevWeekTrip, None))?;
    if pw.n_sections() != n_s {
        return Err((SkipReason::ShortTrip, None));
    }
    let t_c = trip.entry(m + 1);
    let enc_seq = (1..=m)
        .rev()
        .map(|j| EncoderStepInput {
            z_cur: trip.travel(j),
            z_pw: pw.travel(j),
        })
        .collect();
    let mut dec_seq = Vec::with_capacity(n_s - m);
    let mut prev_ids = Vec::with_capacity(n_s - m);
    for n in m + 1..=n_s {
        let (z_pv, te_pv, id) = match lookup.prev_bus(trip.day, n, t_c) {
            Some(p) => (p.travel_time, p.entry_time, Some(p.trip_id)),
            None => match missing {
                MissingPrevBus::Substitute => (pw.travel(n), pw.entry(n), None),
                MissingPrevBus::Skip => return Err((SkipReason::NoPrevBus, Some(n))),
            },
        };
        dec_seq.push(DecoderStepInput {
            z_pv,
            z_pw: pw.travel(n),
            te_pv,
            te_pw: pw.entry(n),
        });
        prev_ids.push(id);
    }
    Ok((
        QueryInputs { m, t_c, enc_seq, dec_seq },
        Provenance {
            trip_id: trip.trip_id,
            day: trip.day,
            weekday: trip.weekday,
            prev_bus_trip_ids: prev_ids,
            prev_week_trip_id: pw.trip_id,
        },
    ))
}

/// Builds one example per `(trip, m)` for `m` in `positions`.
///
/// Examples whose mandatory inputs cannot be resolved are listed in
/// `skipped`. An empty dataset is an error; a dataset without any
/// previous-week coverage simply yields no examples.
pub fn build_examples(
    trips: &[TripRecord],
    route: &RouteSpec,
    positions: RangeInclusive<usize>,
    opts: BuildOptions,
) -> Result<BuildOutput> {
    route.validate()?;
    if trips.is_empty() {
        return Err(Error::Data("dataset contains no trips".into()));
    }
    if let Some(t) = trips.iter().find(|t| t.n_sections() != route.n_sections) {
        return Err(Error::Data(format!(
            "trip {} has {} sections, route has {}",
            t.trip_id,
            t.n_sections(),
            route.n_sections
        )));
    }
    let (lo, hi) = (*positions.start(), *positions.end());
    if lo == 0 || hi >= route.n_sections || lo > hi {
        return Err(Error::Usage(format!(
            "positions {lo}..={hi} invalid for a {}-section route",
            route.n_sections
        )));
    }
    let store = TripStore::new(trips.iter().cloned());
    let lookup = Lookup {
        store: &store,
        all: if opts.brute_force { trips.to_vec() } else { Vec::new() },
        brute_force: opts.brute_force,
    };
    let ordered: Vec<&TripRecord> = store.trips().collect();
    let per_trip: Vec<(Vec<TrainingExample>, Vec<SkipRecord>)> = ordered
        .par_iter()
        .map(|trip| {
            let mut ex = Vec::new();
            let mut sk = Vec::new();
            for m in lo..=hi {
                match query_for(&lookup, trip, m, opts.missing_prev_bus) {
                    Ok((inputs, provenance)) => ex.push(TrainingExample {
                        targets: (m + 1..=route.n_sections).map(|n| trip.travel(n)).collect(),
                        inputs,
                        provenance,
                    }),
                    Err((reason, section)) => sk.push(SkipRecord {
                        trip_id: trip.trip_id,
                        day: trip.day,
                        m,
                        reason,
                        section,
                    }),
                }
            }
            (ex, sk)
        })
        .collect();
    let mut out = BuildOutput::default();
    for (ex, sk) in per_trip {
        out.examples.extend(ex);
        out.skipped.extend(sk);
    }
    Ok(out)
}
