//! Error metrics, paired significance testing, naive baselines and the
//! (i, j) sub-route evaluation grid.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataprep::{TrainingExample, TripRecord};
use crate::error::{shape_err, Error, Result};
use crate::seq2seq::ModelBank;

/// Minimum paired sample size for the Z-test.
pub const MIN_Z_SAMPLES: usize = 30;
pub const DEFAULT_ALPHA: f64 = 0.1;

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(shape_err("prediction/truth", truth.len(), pred.len()));
    }
    if pred.is_empty() {
        return Err(Error::Usage("MAE over an empty query set".into()));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn mape(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(shape_err("prediction/truth", truth.len(), pred.len()));
    }
    if pred.is_empty() {
        return Err(Error::Usage("MAPE over an empty query set".into()));
    }
    if let Some(t) = truth.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::Data(format!("MAPE needs positive true values, found {t}")));
    }
    Ok(100.0 * pred.iter().zip(truth).map(|(p, t)| (p - t).abs() / t).sum::<f64>() / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ZTest {
    /// Fewer than [`MIN_Z_SAMPLES`] pairs; no decision is made.
    Insufficient { n: usize },
    Computed {
        n: usize,
        mean_diff: f64,
        z: f64,
        p_value: f64,
        significant: bool,
        /// Method with the lower mean error, when the difference is significant.
        lower: Option<Side>,
    },
}

impl ZTest {
    pub fn is_significant(&self) -> bool {
        matches!(self, ZTest::Computed { significant: true, .. })
    }
}

/// Two-sided paired Z-test on `d = a - b`.
///
/// Zero spread with a nonzero mean difference counts as significant with
/// infinite `z`; identical samples give `z = 0`.
pub fn paired_z_test(a: &[f64], b: &[f64], alpha: f64) -> Result<ZTest> {
    if a.len() != b.len() {
        return Err(shape_err("paired samples", a.len(), b.len()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Usage(format!("significance level must be in (0, 1), got {alpha}")));
    }
    let n = a.len();
    if n < MIN_Z_SAMPLES {
        return Ok(ZTest::Insufficient { n });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    let (z, p) = if sd == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let z = mean / (sd / nf.sqrt());
        let phi = Normal::standard().cdf(z.abs());
        (z, 2.0 * (1.0 - phi))
    };
    let significant = p < alpha;
    let lower = significant.then_some(if mean < 0.0 { Side::A } else { Side::B });
    Ok(ZTest::Computed {
        n,
        mean_diff: mean,
        z,
        p_value: p,
        significant,
        lower,
    })
}

/// Anything that predicts travel times for sections `m+1 ..= N_s` of an example.
pub trait Predictor: Sync {
    fn predict(&self, ex: &TrainingExample) -> Result<Vec<f64>>;
}

impl Predictor for ModelBank {
    fn predict(&self, ex: &TrainingExample) -> Result<Vec<f64>> {
        ModelBank::predict(self, &ex.inputs).map(|p| p.travel_times)
    }
}

/// Repeats the closest previous bus's travel time for every section (the
/// previous-week value where that was substituted).
#[derive(Debug, Clone, Copy, Default)]
pub struct Persistence;

impl Predictor for Persistence {
    fn predict(&self, ex: &TrainingExample) -> Result<Vec<f64>> {
        ex.inputs.check_resolved().map_err(Error::Data)?;
        Ok(ex.inputs.dec_seq.iter().map(|d| d.z_pv).collect())
    }
}

pub const HIST_BIN_S: f64 = 1800.0;

/// Mean training travel time per (weekday, section, 30-minute bin of entry
/// time), falling back to (weekday, section) and then to the section mean.
#[derive(Debug, Clone, Default)]
pub struct HistoricalMean {
    bins: BTreeMap<(u8, usize, u32), (f64, usize)>,
    weekday: BTreeMap<(u8, usize), (f64, usize)>,
    section: BTreeMap<usize, (f64, usize)>,
}

fn bin_of(t: f64) -> u32 {
    (t.max(0.0) / HIST_BIN_S).floor() as u32
}

fn mean_of(acc: Option<&(f64, usize)>) -> Option<f64> {
    acc.map(|(s, c)| s / *c as f64)
}

impl HistoricalMean {
    pub fn fit(trips: &[TripRecord]) -> Result<Self> {
        if trips.is_empty() {
            return Err(Error::Data("historical mean needs training trips".into()));
        }
        let mut h = Self::default();
        for t in trips {
            for n in 1..=t.n_sections() {
                let z = t.travel(n);
                for acc in [
                    h.bins.entry((t.weekday, n, bin_of(t.entry(n)))).or_default(),
                    h.weekday.entry((t.weekday, n)).or_default(),
                    h.section.entry(n).or_default(),
                ] {
                    acc.0 += z;
                    acc.1 += 1;
                }
            }
        }
        Ok(h)
    }

    pub fn section_estimate(&self, weekday: u8, n: usize, t: f64) -> Result<f64> {
        mean_of(self.bins.get(&(weekday, n, bin_of(t))))
            .or_else(|| mean_of(self.weekday.get(&(weekday, n))))
            .or_else(|| mean_of(self.section.get(&n)))
            .ok_or_else(|| Error::Data(format!("no training data for section {n}")))
    }
}

impl Predictor for HistoricalMean {
    fn predict(&self, ex: &TrainingExample) -> Result<Vec<f64>> {
        let q = &ex.inputs;
        let mut t = q.t_c;
        (q.m + 1..=q.m + q.dec_seq.len())
            .map(|n| {
                let z = self.section_estimate(ex.provenance.weekday, n, t)?;
                t += z;
                Ok(z)
            })
            .collect()
    }
}

/// `(i, j)` pairs: `j` runs from `i + step` in steps of `step`, clamped to the route end.
pub fn grid_pairs(n_sections: usize, i_values: &[usize], step: usize) -> Result<Vec<(usize, usize)>> {
    if step == 0 {
        return Err(Error::Usage("grid step must be positive".into()));
    }
    let mut out = Vec::new();
    for &i in i_values {
        if i < 1 || i >= n_sections {
            return Err(Error::Usage(format!("grid position i={i} outside 1..{n_sections}")));
        }
        let mut j = i + step;
        loop {
            let jj = j.min(n_sections);
            out.push((i, jj));
            if jj == n_sections {
                break;
            }
            j += step;
        }
    }
    Ok(out)
}

/// One sub-route query for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryLogRow {
    pub trip_id: u64,
    pub day: u32,
    pub i: usize,
    pub j: usize,
    pub method: String,
    pub predicted_s: f64,
    pub true_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SigFlag {
    /// The row's own method, or the reference method was not evaluated.
    NotApplicable,
    Same,
    Insufficient,
    NotSignificant,
    Better,
    Worse,
}

impl fmt::Display for SigFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SigFlag::NotApplicable => "",
            SigFlag::Same => "-",
            SigFlag::Insufficient => "insufficient",
            SigFlag::NotSignificant => "ns",
            SigFlag::Better => "better",
            SigFlag::Worse => "worse",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub i: usize,
    pub j: usize,
    pub method: String,
    pub n: usize,
    /// `None` when the pair has no test queries.
    pub mae_s: Option<f64>,
    pub mape_pct: Option<f64>,
    pub sig_vs_edu: SigFlag,
    pub sig_vs_edb: SigFlag,
}

#[derive(Debug, Clone, Default)]
pub struct GridReport {
    pub rows: Vec<ReportRow>,
    pub log: Vec<QueryLogRow>,
}

impl GridReport {
    pub fn row(&self, i: usize, j: usize, method: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.i == i && r.j == j && r.method == method)
    }
}

pub const REPORT_CSV_HEADER: &str = "i,j,method,n,mae_s,mape_pct,sig_vs_edu,sig_vs_edb";

fn compare(a: &[f64], b: &[f64], alpha: f64) -> Result<SigFlag> {
    Ok(match paired_z_test(a, b, alpha)? {
        ZTest::Insufficient { .. } => SigFlag::Insufficient,
        ZTest::Computed { lower: Some(Side::A), .. } => SigFlag::Better,
        ZTest::Computed { lower: Some(Side::B), .. } => SigFlag::Worse,
        ZTest::Computed { .. } => SigFlag::NotSignificant,
    })
}

/// Predicted and true values of one (i, j, method) cell.
type Cell = (Vec<f64>, Vec<f64>);

/// Aggregates a query log into report rows, one per pair and method in the given orders.
pub fn summarize(log: &[QueryLogRow], pairs: &[(usize, usize)], methods: &[&str], alpha: f64) -> Result<Vec<ReportRow>> {
    let mut cells: BTreeMap<(usize, usize, &str), Cell> = BTreeMap::new();
    for r in log {
        let c = cells.entry((r.i, r.j, r.method.as_str())).or_default();
        c.0.push(r.predicted_s);
        c.1.push(r.true_s);
    }
    let empty = (Vec::new(), Vec::new());
    let mut rows = Vec::new();
    for &(i, j) in pairs {
        let abs = |m: &str| -> Option<Vec<f64>> {
            let (p, t) = cells.get(&(i, j, m))?;
            Some(p.iter().zip(t).map(|(a, b)| (a - b).abs()).collect())
        };
        let edu = abs("edu");
        let edb = abs("edb");
        for &m in methods {
            let (p, t) = cells.get(&(i, j, m)).unwrap_or(&empty);
            let n = p.len();
            let own = abs(m).unwrap_or_default();
            let flag = |reference: &Option<Vec<f64>>, name: &str| -> Result<SigFlag> {
                match reference {
                    _ if m == name => Ok(SigFlag::Same),
                    None => Ok(SigFlag::NotApplicable),
                    Some(r) => compare(&own, r, alpha),
                }
            };
            rows.push(ReportRow {
                i,
                j,
                method: m.to_string(),
                n,
                mae_s: if n > 0 { Some(mae(p, t)?) } else { None },
                mape_pct: if n > 0 { Some(mape(p, t)?) } else { None },
                sig_vs_edu: flag(&edu, "edu")?,
                sig_vs_edb: flag(&edb, "edb")?,
            });
        }
    }
    Ok(rows)
}

/// Runs every method on the test examples whose `m` is a grid `i` and scores
/// every `(i, j)` pair by cumulative travel time over sections `i+1 ..= j`.
pub fn evaluate_grid(
    methods: &[(&str, &dyn Predictor)],
    test: &[TrainingExample],
    pairs: &[(usize, usize)],
    alpha: f64,
) -> Result<GridReport> {
    let names: BTreeSet<&str> = methods.iter().map(|(n, _)| *n).collect();
    if names.len() != methods.len() {
        return Err(Error::Usage("duplicate method names".into()));
    }
    let is: BTreeSet<usize> = pairs.iter().map(|p| p.0).collect();
    let queries: Vec<&TrainingExample> = test.iter().filter(|e| is.contains(&e.inputs.m)).collect();
    let mut log = Vec::new();
    for &(name, method) in methods {
        let preds: Vec<Vec<f64>> = queries.par_iter().map(|e| method.predict(e)).collect::<Result<_>>()?;
        for (e, p) in queries.iter().zip(&preds) {
            let i = e.inputs.m;
            if p.len() != e.targets.len() {
                return Err(shape_err("prediction length", e.targets.len(), p.len()));
            }
            for &(pi, j) in pairs {
                if pi != i || j - i > p.len() {
                    continue;
                }
                log.push(QueryLogRow {
                    trip_id: e.provenance.trip_id,
                    day: e.provenance.day,
                    i,
                    j,
                    method: name.to_string(),
                    predicted_s: p[..j - i].iter().sum(),
                    true_s: e.targets[..j - i].iter().sum(),
                });
            }
        }
    }
    let order: Vec<&str> = methods.iter().map(|(n, _)| *n).collect();
    let rows = summarize(&log, pairs, &order, alpha)?;
    Ok(GridReport { rows, log })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_report_csv<W: Write>(w: W, rows: &[ReportRow]) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wr.write_record(REPORT_CSV_HEADER.split(','))?;
    for r in rows {
        wr.write_record([
            r.i.to_string(),
            r.j.to_string(),
            r.method.clone(),
            r.n.to_string(),
            opt(r.mae_s),
            opt(r.mape_pct),
            r.sig_vs_edu.to_string(),
            r.sig_vs_edb.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Plot-ready long format: `i,j,method,metric,value`.
pub fn write_long_csv<W: Write>(w: W, rows: &[ReportRow]) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wr.write_record(["i", "j", "method", "metric", "value"])?;
    for r in rows {
        for (metric, v) in [("mae_s", r.mae_s), ("mape_pct", r.mape_pct)] {
            if let Some(v) = v {
                wr.write_record([
                    r.i.to_string(),
                    r.j.to_string(),
                    r.method.clone(),
                    metric.to_string(),
                    v.to_string(),
                ])?;
            }
        }
    }
    wr.flush()?;
    Ok(())
}

pub fn write_query_log<W: Write>(w: W, log: &[QueryLogRow]) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    for r in log {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_query_log<R: Read>(r: R) -> Result<Vec<QueryLogRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::CsvRow {
                row: i + 2,
                msg: e.to_string(),
            })
        })
        .collect()
}
