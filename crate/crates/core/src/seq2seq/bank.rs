use std::fmt;

use serde::{Deserialize, Serialize};

use super::{EdModel, ModelKind, QueryInputs};
use crate::error::{Error, Result};

/// Inclusive range of current positions `m` served by one model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bank {
    pub lo: usize,
    pub hi: usize,
}

impl Bank {
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        if lo == 0 || hi < lo {
            return Err(Error::Usage(format!("invalid bank range {lo}-{hi}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, m: usize) -> bool {
        (self.lo..=self.hi).contains(&m)
    }

    /// File-name friendly label, e.g. `03-07`.
    pub fn label(&self) -> String {
        format!("{:02}-{:02}", self.lo, self.hi)
    }
}

impl fmt::Display for Bank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Contiguous, non-overlapping banks covering `first ..= n_sections - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankLayout {
    pub n_sections: usize,
    pub banks: Vec<Bank>,
}

impl BankLayout {
    /// Banks of `width` consecutive positions starting at `first`. Leftover
    /// positions at the end of the route widen the last bank; a route with
    /// fewer than `width` positions gets one short bank.
    pub fn standard(n_sections: usize, first: usize, width: usize) -> Result<Self> {
        if width == 0 || first == 0 || n_sections < first + 1 {
            return Err(Error::Usage(format!(
                "cannot lay out banks of width {width} from position {first} on a {n_sections}-section route"
            )));
        }
        let last = n_sections - 1;
        let positions = last - first + 1;
        let count = (positions / width).max(1);
        let banks = (0..count)
            .map(|b| {
                let lo = first + b * width;
                let hi = if b + 1 == count { last } else { lo + width - 1 };
                Bank { lo, hi }
            })
            .collect();
        Ok(Self { n_sections, banks })
    }

    pub fn first(&self) -> usize {
        self.banks.first().map_or(0, |b| b.lo)
    }

    pub fn last(&self) -> usize {
        self.banks.last().map_or(0, |b| b.hi)
    }

    pub fn bank_for(&self, m: usize) -> Option<Bank> {
        self.banks.iter().copied().find(|b| b.contains(m))
    }

    pub fn coverage_error(&self, m: usize) -> Error {
        Error::Coverage {
            m,
            layout: self.to_string(),
        }
    }
}

impl fmt::Display for BankLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.banks.iter().map(|b| format!("{}-{}", b.lo, b.hi)).collect();
        write!(f, "models cover m in {} on a {}-section route", parts.join(", "), self.n_sections)
    }
}

/// One trained model per bank, all of the same kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBank {
    pub kind: ModelKind,
    pub layout: BankLayout,
    pub models: Vec<EdModel>,
}

/// Per-section travel times and running arrival clock times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub m: usize,
    pub t_c: f64,
    /// Section numbers `m+1 ..= N_s`.
    pub sections: Vec<usize>,
    pub travel_times: Vec<f64>,
    /// Clock time at the end of each predicted section.
    pub arrivals: Vec<f64>,
}

impl ModelBank {
    /// Checks models are sorted, of this bank's kind, and match the layout one-to-one.
    pub fn new(kind: ModelKind, layout: BankLayout, mut models: Vec<EdModel>) -> Result<Self> {
        models.sort_by_key(|m| m.bank.lo);
        for m in &models {
            if m.kind != kind {
                return Err(Error::Usage(format!("{} model in a {kind} bank", m.kind)));
            }
            if !layout.banks.contains(&m.bank) {
                return Err(Error::Usage(format!("model bank {} is not part of the layout ({layout})", m.bank)));
            }
            m.validate()?;
        }
        for w in models.windows(2) {
            if w[0].bank == w[1].bank {
                return Err(Error::Usage(format!("two models for bank {}", w[0].bank)));
            }
        }
        Ok(Self { kind, layout, models })
    }

    pub fn model_for(&self, m: usize) -> Result<&EdModel> {
        let bank = self.layout.bank_for(m).ok_or_else(|| self.layout.coverage_error(m))?;
        self.models
            .iter()
            .find(|model| model.bank == bank)
            .ok_or_else(|| Error::Data(format!("no trained {} model for bank {}", self.kind, bank.label())))
    }

    /// Routes the query to the model owning `m`.
    pub fn predict(&self, q: &QueryInputs) -> Result<Prediction> {
        let n_s = self.layout.n_sections;
        if q.m < self.layout.first() || q.m >= n_s {
            return Err(self.layout.coverage_error(q.m));
        }
        if q.dec_seq.len() != n_s - q.m {
            return Err(crate::error::shape_err("decoder sequence length", n_s - q.m, q.dec_seq.len()));
        }
        q.check_resolved().map_err(Error::Data)?;
        let model = self.model_for(q.m)?;
        let travel_times = model.predict(q)?;
        let mut clock = q.t_c;
        let arrivals = travel_times
            .iter()
            .map(|z| {
                clock += z;
                clock
            })
            .collect();
        Ok(Prediction {
            m: q.m,
            t_c: q.t_c,
            sections: (q.m + 1..=n_s).collect(),
            travel_times,
            arrivals,
        })
    }
}
