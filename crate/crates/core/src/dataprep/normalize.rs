use super::TrainingExample;
use crate::error::{Error, Result};
use crate::seq2seq::{MinMax, NormStats, ZScore};

fn zscore(name: &str, xs: &[f64]) -> ZScore {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 1e-12) {
        log::warn!("feature {name} has zero variance; std clamped to 1");
        return ZScore { mean, std: 1.0 };
    }
    ZScore { mean, std }
}

fn minmax(name: &str, xs: &[f64]) -> MinMax {
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        log::warn!("feature {name} is constant; range clamped to 1");
    }
    MinMax { min, max }
}

/// Per-feature statistics over training examples: z-scores for travel
/// times, min-max ranges for times of day.
pub fn fit_normalizer(examples: &[TrainingExample]) -> Result<NormStats> {
    if examples.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 examples to fit normalization, got {}",
            examples.len()
        )));
    }
    let enc = || examples.iter().flat_map(|e| e.inputs.enc_seq.iter());
    let dec = || examples.iter().flat_map(|e| e.inputs.dec_seq.iter());
    let collect = |it: &mut dyn Iterator<Item = f64>| -> Vec<f64> { it.collect() };
    Ok(NormStats {
        enc_cur: zscore("enc_cur", &collect(&mut enc().map(|s| s.z_cur))),
        enc_pw: zscore("enc_pw", &collect(&mut enc().map(|s| s.z_pw))),
        dec_pv: zscore("dec_pv", &collect(&mut dec().map(|s| s.z_pv))),
        dec_pw: zscore("dec_pw", &collect(&mut dec().map(|s| s.z_pw))),
        te_pv: minmax("te_pv", &collect(&mut dec().map(|s| s.te_pv))),
        te_pw: minmax("te_pw", &collect(&mut dec().map(|s| s.te_pw))),
        t_c: minmax("t_c", &collect(&mut examples.iter().map(|e| e.inputs.t_c))),
        target: zscore("target", &collect(&mut examples.iter().flat_map(|e| e.targets.iter().copied()))),
    })
}
