use serde::{Deserialize, Serialize};

use super::NormStats;

/// One encoder step: the current bus's travel time over a traversed section
/// paired with the previous-week trip's time over the same section (seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderStepInput {
    pub z_cur: f64,
    pub z_pw: f64,
}

/// One decoder step for section `m + i`: closest previous bus and previous-week
/// travel times (seconds) and their entry times (seconds since midnight).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderStepInput {
    pub z_pv: f64,
    pub z_pw: f64,
    pub te_pv: f64,
    pub te_pw: f64,
}

/// Raw (seconds) inputs of one prediction query at position `m`, time `t_c`.
///
/// `enc_seq` is ordered from section `m` back to section 1; `dec_seq` covers
/// sections `m+1 ..= N_s` in route order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryInputs {
    pub m: usize,
    pub t_c: f64,
    pub enc_seq: Vec<EncoderStepInput>,
    pub dec_seq: Vec<DecoderStepInput>,
}

/// Normalized view of a query, ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PreparedQuery {
    pub m: usize,
    pub t_c: f64,
    pub enc: Vec<[f64; 2]>,
    pub dec: Vec<[f64; 4]>,
}

impl PreparedQuery {
    pub fn new(q: &QueryInputs, norm: &NormStats) -> Self {
        Self {
            m: q.m,
            t_c: norm.t_c.apply(q.t_c),
            enc: q
                .enc_seq
                .iter()
                .map(|e| [norm.enc_cur.apply(e.z_cur), norm.enc_pw.apply(e.z_pw)])
                .collect(),
            dec: q
                .dec_seq
                .iter()
                .map(|d| {
                    [
                        norm.dec_pv.apply(d.z_pv),
                        norm.dec_pw.apply(d.z_pw),
                        norm.te_pv.apply(d.te_pv),
                        norm.te_pw.apply(d.te_pw),
                    ]
                })
                .collect(),
        }
    }
}

impl QueryInputs {
    /// All exogenous values present and finite, travel times positive.
    pub fn check_resolved(&self) -> Result<(), String> {
        if !self.t_c.is_finite() {
            return Err("query time is not finite".into());
        }
        for (k, e) in self.enc_seq.iter().enumerate() {
            if !(e.z_cur.is_finite() && e.z_pw.is_finite() && e.z_cur > 0.0 && e.z_pw > 0.0) {
                return Err(format!("encoder step {k} has an unresolved travel time"));
            }
        }
        for (k, d) in self.dec_seq.iter().enumerate() {
            let ok = [d.z_pv, d.z_pw, d.te_pv, d.te_pw].iter().all(|v| v.is_finite()) && d.z_pv > 0.0 && d.z_pw > 0.0;
            if !ok {
                return Err(format!(
                    "decoder step {} (section {}) has an unresolved input",
                    k + 1,
                    self.m + k + 1
                ));
            }
        }
        Ok(())
    }
}
